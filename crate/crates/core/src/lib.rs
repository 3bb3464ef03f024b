//! Guessing-entropy estimation and GE-driven early stopping for deep-learning
//! side-channel attacks.
//!
//! * [`sca`]: attack sets, the AES S-box, key-hypothesis reindexing, ranks.
//! * [`ge`]: GE curves through a per-block kernel and a nested-loop oracle.
//! * [`bench`]: timing of the two kernels.
//! * [`early_stop`]: persistence (area of hit) and patience.
//! * [`sim`]: synthetic epoch-wise predictions standing in for training.
//! * [`grid`]: grid search that terminates at the first stopping point.

pub mod bench;
pub mod early_stop;
pub mod error;
pub mod ge;
pub mod grid;
pub mod io;
pub mod sca;
pub mod seed;
pub mod sim;

pub use error::{Error, Result};
