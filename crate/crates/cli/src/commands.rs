use std::fs;
use std::path::Path;

use ge_sentinel::bench::{bench_ge, GeImpl};
use ge_sentinel::early_stop::{
    monitor_training, validate_setup, AreaOfHit, PersistenceCase, PersistenceConfig,
    PersistenceMode,
};
use ge_sentinel::ge::GeConfig;
use ge_sentinel::grid::{point_schedule, search, HyperSpace, StopReason};
use ge_sentinel::io::{read_attack_set, write_attack_set};
use ge_sentinel::sca::Keyspace;
use ge_sentinel::seed::derive_seed;
use ge_sentinel::sim::{
    epoch_source, generate_epoch, LeakageSchedule, Preset, ScheduleParams, PRESET_N_A,
};

use crate::args::{
    BenchArgs, CaseArg, GridsearchArgs, ModeArg, MonitorArgs, PresetName, ScheduleArgs,
    SimulateArgs, StopArgs,
};
use crate::{CliError, Completion};

fn input<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Input(e.to_string())
}

fn internal<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Internal(e.to_string())
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Input(format!("{}: {e}", dir.display())))
}

fn preset(name: PresetName) -> Preset {
    match name {
        PresetName::Ramp => Preset::Ramp,
        PresetName::Overfit => Preset::Overfit,
        PresetName::Flat => Preset::Flat,
    }
}

fn root_seed(args: &ScheduleArgs) -> u64 {
    args.seed.unwrap_or(0)
}

fn schedule_params(args: &ScheduleArgs) -> ScheduleParams {
    let mut params = ScheduleParams::from_preset(preset(args.preset.unwrap_or(PresetName::Ramp)));
    if let Some(theta) = args.theta {
        params.theta = theta;
    }
    if let Some(epochs) = args.epochs {
        params.n_epochs = epochs;
    }
    if let Some(noise) = args.noise {
        params.noise_sigma = noise;
    }
    params
}

fn resolve_schedule(args: &ScheduleArgs) -> Result<LeakageSchedule, CliError> {
    let Some(path) = &args.schedule else {
        let seed = derive_seed(root_seed(args), "schedule", 0);
        return schedule_params(args).build(seed).map_err(input);
    };
    if args.theta.is_some() || args.noise.is_some() {
        return Err(CliError::Input(
            "--theta and --noise apply to presets, not schedule files".into(),
        ));
    }
    let mut schedule = LeakageSchedule::load(path).map_err(input)?;
    if let Some(seed) = args.seed {
        schedule.seed = derive_seed(seed, "schedule", 0);
    }
    if let Some(epochs) = args.epochs {
        if epochs > schedule.n_epochs {
            return Err(CliError::Input(format!(
                "--epochs {epochs} exceeds the {} epochs in {}",
                schedule.n_epochs,
                path.display()
            )));
        }
        schedule.signal.truncate(epochs);
        schedule.n_epochs = epochs;
    }
    Ok(schedule)
}

fn check_target(args: &ScheduleArgs) -> Result<(), CliError> {
    let keyspace = Keyspace::new(args.keyspace).map_err(input)?;
    if args.true_key as usize >= keyspace.size() {
        return Err(CliError::Input(format!(
            "--true-key {} outside keyspace of size {}",
            args.true_key,
            keyspace.size()
        )));
    }
    if args.traces == 0 {
        return Err(CliError::Input("--traces must be positive".into()));
    }
    Ok(())
}

fn persistence(stop: &StopArgs) -> Result<PersistenceConfig, CliError> {
    let mode = match stop.mode {
        ModeArg::Full => PersistenceMode::Full,
        ModeArg::Binary => PersistenceMode::Binary(stop.fraction),
    };
    let case = match (stop.case, stop.v) {
        (CaseArg::Soft, None) => PersistenceCase::Soft,
        (CaseArg::Greedy, Some(v)) => PersistenceCase::Greedy(v),
        (CaseArg::Soft, Some(_)) => {
            return Err(CliError::Input(
                "--v is fixed only in the greedy case".into(),
            ))
        }
        (CaseArg::Greedy, None) => return Err(CliError::Input("the greedy case needs --v".into())),
    };
    let cfg = PersistenceConfig::new(mode, case);
    cfg.validate().map_err(input)?;
    Ok(cfg)
}

/// GE configuration and stop geometry shared by `monitor` and `gridsearch`.
fn stop_setup(
    stop: &StopArgs,
    traces: usize,
    attacks: usize,
    ge_seed: u64,
) -> Result<(GeConfig, AreaOfHit, PersistenceConfig), CliError> {
    let max_traces = stop.max_traces.unwrap_or(PRESET_N_A.min(traces));
    if max_traces > traces {
        return Err(CliError::Input(format!(
            "--max-traces {max_traces} exceeds the {traces} traces per epoch"
        )));
    }
    let ge_cfg = GeConfig::new(attacks, max_traces, stop.step, ge_seed);
    let n_a = stop.n_a.unwrap_or(max_traces);
    let cfg = persistence(stop)?;
    let area = cfg.area(stop.w, n_a).map_err(input)?;
    validate_setup(&ge_cfg, &area, &cfg).map_err(input)?;
    Ok((ge_cfg, area, cfg))
}

pub fn bench(args: BenchArgs) -> Result<Completion, CliError> {
    let attack = match &args.attack {
        Some(dir) => read_attack_set(dir).map_err(input)?,
        None => {
            let schedule = LeakageSchedule::new(
                vec![args.theta],
                args.noise,
                derive_seed(args.seed, "schedule", 0),
            )
            .map_err(input)?;
            generate_epoch(&schedule, 0, args.traces, args.keyspace, args.true_key)
                .map_err(input)?
                .attack
        }
    };
    let max_traces = args.max_traces.unwrap_or(attack.n_traces());
    let cfg = GeConfig::new(
        args.attacks,
        max_traces,
        args.step,
        derive_seed(args.seed, "ge", 0),
    );
    cfg.validate_for(&attack).map_err(input)?;
    if args.trials == 0 {
        return Err(CliError::Input("--trials must be at least 1".into()));
    }
    ensure_dir(&args.out)?;

    let report = bench_ge(&attack, &cfg, args.trials).map_err(internal)?;
    let path = args.out.join("bench.csv");
    report.save_csv(&path).map_err(internal)?;
    for implementation in [GeImpl::Optimized, GeImpl::Naive] {
        if let Some(total) = report.total_seconds(implementation) {
            println!(
                "{implementation}: {total:.6}s for {max_traces} traces (median of {})",
                args.trials
            );
        }
    }
    println!("wrote {}", path.display());
    Ok(Completion::Done)
}

pub fn simulate(args: SimulateArgs) -> Result<Completion, CliError> {
    check_target(&args.schedule)?;
    let schedule = resolve_schedule(&args.schedule)?;
    ensure_dir(&args.out)?;
    let schedule_path = args.out.join("schedule.json");
    let json = serde_json::to_vec_pretty(&schedule).map_err(internal)?;
    fs::write(&schedule_path, json)
        .map_err(|e| CliError::Input(format!("{}: {e}", schedule_path.display())))?;

    for epoch in 0..schedule.n_epochs {
        let batch = generate_epoch(
            &schedule,
            epoch,
            args.schedule.traces,
            args.schedule.keyspace,
            args.schedule.true_key,
        )
        .map_err(internal)?;
        write_attack_set(&args.out.join((epoch + 1).to_string()), &batch.attack).map_err(input)?;
    }
    println!(
        "wrote {} epochs to {}",
        schedule.n_epochs,
        args.out.display()
    );
    Ok(Completion::Done)
}

pub fn monitor(args: MonitorArgs) -> Result<Completion, CliError> {
    check_target(&args.schedule)?;
    let schedule = resolve_schedule(&args.schedule)?;
    let ge_seed = derive_seed(root_seed(&args.schedule), "ge", 0);
    let (ge_cfg, area, cfg) = stop_setup(&args.stop, args.schedule.traces, args.attacks, ge_seed)?;
    let patience = args.stop.patience;
    if patience == 0 {
        return Err(CliError::Input("--patience must be at least 1".into()));
    }
    ensure_dir(&args.out)?;

    let epochs = epoch_source(
        &schedule,
        args.schedule.traces,
        args.schedule.keyspace,
        args.schedule.true_key,
    );
    let report = monitor_training(epochs, &ge_cfg, &area, &cfg, patience).map_err(internal)?;
    report.write_run_dir(&args.out).map_err(internal)?;
    match report.stopped_at {
        Some(epoch) => {
            println!("stop at epoch {epoch}");
            Ok(Completion::Done)
        }
        None => {
            println!("no stop");
            Ok(Completion::NotStopped)
        }
    }
}

pub fn gridsearch(args: GridsearchArgs) -> Result<Completion, CliError> {
    let space = HyperSpace::load(&args.space).map_err(input)?;
    if args.schedule.schedule.is_some() {
        return Err(CliError::Input(
            "gridsearch derives schedules from a preset; --schedule is not supported".into(),
        ));
    }
    check_target(&args.schedule)?;
    if args.repeat == 0 {
        return Err(CliError::Input("--repeat must be at least 1".into()));
    }
    if args.attacks.len() != 1 && args.attacks.len() != args.repeat {
        return Err(CliError::Input(format!(
            "--attacks lists {} values for {} repeats",
            args.attacks.len(),
            args.repeat
        )));
    }
    if args.stop.patience == 0 {
        return Err(CliError::Input("--patience must be at least 1".into()));
    }
    let base = schedule_params(&args.schedule);
    base.build(0).map_err(input)?;
    let root = root_seed(&args.schedule);

    let mut all_won = true;
    for rep in 0..args.repeat {
        let seed = if args.repeat == 1 {
            root
        } else {
            derive_seed(root, "repeat", rep as u64)
        };
        let attacks = args.attacks[if args.attacks.len() == 1 { 0 } else { rep }];
        let (ge_cfg, area, cfg) = stop_setup(
            &args.stop,
            args.schedule.traces,
            attacks,
            derive_seed(seed, "ge", 0),
        )?;
        let dir = if args.repeat == 1 {
            args.out.clone()
        } else {
            args.out.join(format!("repeat_{}", rep + 1))
        };
        ensure_dir(&dir)?;

        let (traces, keyspace, key) = (
            args.schedule.traces,
            args.schedule.keyspace,
            args.schedule.true_key,
        );
        let outcome = search(
            &space,
            |point| {
                let schedule = point_schedule(point, &base, seed)?;
                Ok((0..schedule.n_epochs).map(move |e| {
                    generate_epoch(&schedule, e, traces, keyspace, key).map(|b| b.attack)
                }))
            },
            &ge_cfg,
            &area,
            &cfg,
            args.stop.patience,
        )
        .map_err(internal)?;
        outcome.write_dir(&dir).map_err(internal)?;

        let prefix = if args.repeat == 1 {
            String::new()
        } else {
            format!("repeat {} (attacks {attacks}): ", rep + 1)
        };
        match (outcome.stop_reason, outcome.winner_result()) {
            (StopReason::FoundWinner, Some(result)) => println!(
                "{prefix}winner point {} [{}] stopped at epoch {} after {} of {} points",
                result.point.index,
                result.point.describe(),
                result.stopped_at().unwrap_or_default(),
                outcome.evaluated.len(),
                space.size()
            ),
            _ => {
                all_won = false;
                println!(
                    "{prefix}exhausted {} points without a stop",
                    outcome.evaluated.len()
                );
            }
        }
    }
    Ok(if all_won {
        Completion::Done
    } else {
        Completion::NotStopped
    })
}
