//! Acceptance suite: one line per criterion, non-zero exit on any failure.
//!
//! Run alone with `cargo test -p ge-sentinel --test acceptance`.

use std::process::ExitCode;
use std::time::Instant;

use ge_sentinel::bench::{bench_ge, GeImpl};
use ge_sentinel::early_stop::{
    compute_v_soft, epoch_ge_config, monitor_training, persistence_hit, AreaOfHit, Decision,
    MonitorState, PersistenceCase, PersistenceConfig, PersistenceMode,
};
use ge_sentinel::ge::{ge_curve_naive, ge_curve_optimized, GeConfig, GeCurve};
use ge_sentinel::grid::{search, Axis, HyperSpace, ParamValue, StopReason};
use ge_sentinel::sca::AttackSet;
use ge_sentinel::sim::{
    epoch_source, generate_epoch, LeakageSchedule, Preset, OVERFIT_PEAK, OVERFIT_PLATEAU,
    PRESET_ATTACKS, PRESET_ATTACK_TRACES, PRESET_N_A, PRESET_STEP,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

const KEY: u8 = 0x3c;

/// Upper bound on one optimized N=5000 curve. Constrained CI machines may
/// set `GE_SENTINEL_RELAXED_TIMING=1` for the 2 s allowance.
fn optimized_budget_seconds() -> f64 {
    if std::env::var_os("GE_SENTINEL_RELAXED_TIMING").is_some() {
        2.0
    } else {
        1.0
    }
}

const MIN_SPEEDUP: f64 = 10.0;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_attack(rng: &mut ChaCha8Rng, n: usize, width: usize) -> AttackSet {
    let true_key = rng.random_range(0..width) as u8;
    let plaintexts: Vec<u8> = (0..n).map(|_| rng.random_range(0..width) as u8).collect();
    let mut preds = Vec::with_capacity(n * width);
    for _ in 0..n {
        let raw: Vec<f64> = (0..width).map(|_| rng.random::<f64>().powi(4)).collect();
        let total: f64 = raw.iter().sum();
        preds.extend(raw.iter().map(|r| (r / total) as f32));
    }
    AttackSet::new(preds, plaintexts, true_key, width).unwrap()
}

fn bits(curve: &GeCurve) -> Vec<u64> {
    curve.values.iter().map(|v| v.to_bits()).collect()
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xacce_0001);
    let start = Instant::now();
    for case in 0..100 {
        let width = [4usize, 16, 256][rng.random_range(0..3)];
        let n = rng.random_range(1..=1000);
        let max_traces = rng.random_range(1..=n);
        let step = rng.random_range((max_traces / 20).max(1)..=max_traces);
        let cfg = GeConfig::new(rng.random_range(1..=10), max_traces, step, rng.random());
        let attack = random_attack(&mut rng, n, width);
        let fast = ge_curve_optimized(&attack, &cfg).map_err(|e| e.to_string())?;
        let slow = ge_curve_naive(&attack, &cfg).map_err(|e| e.to_string())?;
        if fast.checkpoints != slow.checkpoints || bits(&fast) != bits(&slow) {
            return Err(format!("case {case} (|K|={width}, N={n}, {cfg:?}) differs"));
        }
    }
    Ok(format!(
        "100/100 configurations bit-identical in {:.1}s",
        start.elapsed().as_secs_f64()
    ))
}

fn performance_envelope() -> Outcome {
    let schedule = LeakageSchedule::new(vec![0.4], 1.0, 42).unwrap();
    let attack = generate_epoch(&schedule, 0, 5000, 256, KEY).unwrap().attack;
    let cfg = GeConfig::new(10, 5000, 100, 42);
    let report = bench_ge(&attack, &cfg, 3).map_err(|e| e.to_string())?;
    let fast = report.total_seconds(GeImpl::Optimized).unwrap();
    let slow = report.total_seconds(GeImpl::Naive).unwrap();
    let budget = optimized_budget_seconds();
    let detail = format!(
        "optimized {fast:.3}s (budget {budget}s), naive {slow:.3}s, speedup {:.0}x (need {MIN_SPEEDUP}x)",
        slow / fast
    );
    check(fast < budget && slow >= MIN_SPEEDUP * fast, detail)
}

fn monitor_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xacce_0003);
    for case in 0..200 {
        let len = rng.random_range(1..=40);
        let pattern: Vec<bool> = (0..len).map(|_| rng.random_bool(0.7)).collect();
        let patience = rng.random_range(1..=10);
        let expected =
            (patience..=len).find(|&end| pattern[end - patience..end].iter().all(|&h| h));
        let mut state = MonitorState::new(patience).unwrap();
        let mut got = None;
        for (i, &hit) in pattern.iter().enumerate() {
            if let Decision::Stop(e) = state.record(i + 1, hit, None).unwrap() {
                got = Some(e);
                break;
            }
        }
        if got != expected {
            return Err(format!("case {case}: monitor {got:?}, scan {expected:?}"));
        }
    }
    Ok("200/200 hit/miss strings agree with the scan".into())
}

fn random_curve(rng: &mut ChaCha8Rng) -> GeCurve {
    let len = rng.random_range(1..=30);
    let step = rng.random_range(1..=100);
    GeCurve {
        checkpoints: (1..=len).map(|i| i * step).collect(),
        values: (0..len)
            .map(|_| f64::from(rng.random_range(0u8..4)))
            .collect(),
        n_attacks: 1,
    }
}

fn hit(curve: &GeCurve, w: f64, mode: PersistenceMode, case: PersistenceCase) -> bool {
    let cfg = PersistenceConfig::new(mode, case);
    let area = cfg.area(w, *curve.checkpoints.last().unwrap()).unwrap();
    persistence_hit(curve, &area, &cfg).unwrap().hit
}

fn persistence_modes() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xacce_0004);
    for i in 0..1000 {
        let c = random_curve(&mut rng);
        let w = f64::from(rng.random_range(0u8..4));
        let v = c.checkpoints[rng.random_range(0..c.len())];
        if compute_v_soft(&c, w, PersistenceMode::Binary(1.0))
            != compute_v_soft(&c, w, PersistenceMode::Full)
            || hit(
                &c,
                w,
                PersistenceMode::Binary(1.0),
                PersistenceCase::Greedy(v),
            ) != hit(&c, w, PersistenceMode::Full, PersistenceCase::Greedy(v))
        {
            return Err(format!("curve {i}: Binary(1.0) differs from Full"));
        }
    }
    for i in 0..1000 {
        let c = random_curve(&mut rng);
        let w = f64::from(rng.random_range(0u8..4));
        let wider = w + rng.random_range(0.0..3.0);
        let f = rng.random_range(0.05..=1.0);
        let lower = f * rng.random_range(0.1..1.0);
        let v = c.checkpoints[rng.random_range(0..c.len())];
        for case in [PersistenceCase::Soft, PersistenceCase::Greedy(v)] {
            for mode in [PersistenceMode::Full, PersistenceMode::Binary(f)] {
                if hit(&c, w, mode, case) && !hit(&c, wider, mode, case) {
                    return Err(format!("pair {i}: w-monotonicity broken"));
                }
            }
            if hit(&c, w, PersistenceMode::Binary(f), case)
                && !hit(&c, w, PersistenceMode::Binary(lower), case)
            {
                return Err(format!("pair {i}: f-monotonicity broken"));
            }
        }
    }
    let mut values = vec![0.0; 20];
    values[11] = 3.0;
    let excursion = GeCurve {
        checkpoints: (1..=20).map(|i| i * 100).collect(),
        values,
        n_attacks: 1,
    };
    let binary = hit(
        &excursion,
        0.0,
        PersistenceMode::Binary(0.95),
        PersistenceCase::Greedy(100),
    );
    let full = hit(
        &excursion,
        0.0,
        PersistenceMode::Full,
        PersistenceCase::Greedy(100),
    );
    check(
        binary && !full,
        format!("1000 equivalence + 1000 monotonicity checks; 1-in-20 excursion: binary(0.95)={binary}, full={full}"),
    )
}

fn overfit_stop() -> Outcome {
    let area = AreaOfHit::soft(0.0, PRESET_N_A).unwrap();
    let cfg = PersistenceConfig::new(PersistenceMode::Full, PersistenceCase::Soft);
    let plateau = OVERFIT_PEAK + 1..=OVERFIT_PEAK + OVERFIT_PLATEAU;
    let mut stops = Vec::new();
    for seed in 0..10u64 {
        let schedule = Preset::Overfit.schedule(seed, None).unwrap();
        let ge_cfg = GeConfig::new(PRESET_ATTACKS, PRESET_N_A, PRESET_STEP, seed);
        let report = monitor_training(
            epoch_source(&schedule, PRESET_ATTACK_TRACES, 256, KEY),
            &ge_cfg,
            &area,
            &cfg,
            3,
        )
        .map_err(|e| e.to_string())?;

        let hits: Vec<bool> = (0..schedule.n_epochs)
            .map(|e| {
                let attack = generate_epoch(&schedule, e, PRESET_ATTACK_TRACES, 256, KEY)
                    .unwrap()
                    .attack;
                let curve = ge_curve_optimized(&attack, &epoch_ge_config(&ge_cfg, e + 1)).unwrap();
                persistence_hit(&curve, &area, &cfg).unwrap().hit
            })
            .collect();
        let offline = (3..=hits.len()).find(|&end| hits[end - 3..end].iter().all(|&h| h));
        if report.stopped_at != offline {
            return Err(format!(
                "seed {seed}: monitor {:?}, offline scan {offline:?}",
                report.stopped_at
            ));
        }
        match report.stopped_at {
            Some(stop) if plateau.contains(&stop) => stops.push(stop),
            other => {
                return Err(format!(
                    "seed {seed}: stop {other:?} outside plateau epochs {plateau:?}"
                ))
            }
        }
    }
    Ok(format!(
        "stop epochs {stops:?} within plateau epochs {plateau:?}, all match the offline scan"
    ))
}

fn table_space() -> HyperSpace {
    let text = |s: &str| ParamValue::Text(s.into());
    HyperSpace::new(vec![
        Axis {
            name: "architecture".into(),
            values: vec![text("model_v1"), text("model_v2")],
        },
        Axis {
            name: "batch_size".into(),
            values: vec![ParamValue::Int(50), ParamValue::Int(100)],
        },
        Axis {
            name: "epochs".into(),
            values: vec![ParamValue::Int(50), ParamValue::Int(100)],
        },
        Axis {
            name: "optimizer".into(),
            values: vec![text("rmsprop"), text("adam")],
        },
    ])
    .unwrap()
}

fn grid_evaluations(winner_index: usize) -> Result<(usize, Option<usize>, StopReason), String> {
    let persistence =
        PersistenceConfig::new(PersistenceMode::Binary(0.95), PersistenceCase::Greedy(100));
    let area = persistence.area(0.0, 1000).map_err(|e| e.to_string())?;
    let outcome = search(
        &table_space(),
        |point| {
            let theta = if point.index == winner_index {
                1.0
            } else {
                0.05
            };
            let schedule = LeakageSchedule::new(vec![theta; 8], 1.0, point.index as u64)?;
            Ok((0..schedule.n_epochs)
                .map(move |e| generate_epoch(&schedule, e, 2000, 256, KEY).map(|b| b.attack)))
        },
        &GeConfig::new(5, 1000, 50, 11),
        &area,
        &persistence,
        3,
    )
    .map_err(|e| e.to_string())?;
    Ok((outcome.evaluated.len(), outcome.winner, outcome.stop_reason))
}

fn grid_early_termination() -> Outcome {
    let first = grid_evaluations(0)?;
    let fourth = grid_evaluations(3)?;
    let detail = format!(
        "winner #1: {} of 16 evaluated; winner #4: {} of 16 evaluated",
        first.0, fourth.0
    );
    check(
        first == (1, Some(0), StopReason::FoundWinner)
            && fourth == (4, Some(3), StopReason::FoundWinner),
        detail,
    )
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.total_cmp(b));
    let mid = xs.len() / 2;
    if xs.len().is_multiple_of(2) {
        (xs[mid - 1] + xs[mid]) / 2.0
    } else {
        xs[mid]
    }
}

fn attacks_vs_epochs() -> Outcome {
    let area = AreaOfHit::soft(0.0, PRESET_N_A).unwrap();
    let cfg = PersistenceConfig::new(PersistenceMode::Full, PersistenceCase::Soft);
    let mut medians = Vec::new();
    for attacks in [1usize, 5, 25] {
        let mut stops = Vec::new();
        for seed in 0..10u64 {
            let schedule = Preset::Ramp.schedule(seed, None).unwrap();
            let report = monitor_training(
                epoch_source(&schedule, PRESET_ATTACK_TRACES, 256, KEY),
                &GeConfig::new(attacks, PRESET_N_A, PRESET_STEP, seed),
                &area,
                &cfg,
                3,
            )
            .map_err(|e| e.to_string())?;
            // a run that never stops counts as one epoch past the schedule
            stops.push(report.stopped_at.unwrap_or(schedule.n_epochs + 1) as f64);
        }
        medians.push((attacks, median(stops)));
    }
    let ok = medians.windows(2).all(|w| w[0].1 <= w[1].1);
    check(ok, format!("median stop epoch by attacks: {medians:?}"))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 7] = [
        ("1 oracle equivalence", oracle_equivalence),
        ("2 performance envelope", performance_envelope),
        ("3 monitor correctness", monitor_correctness),
        ("4 persistence-mode properties", persistence_modes),
        ("5 end-to-end overfit stop", overfit_stop),
        ("6 grid-search early termination", grid_early_termination),
        ("7 attacks-vs-epochs trend", attacks_vs_epochs),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  [{name}] {detail} ({secs:.1}s)"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  [{name}] {detail} ({secs:.1}s)");
            }
        }
    }
    println!("N/A   [8 ASCAD-trained results] require training real models; covered by 5-7");
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
