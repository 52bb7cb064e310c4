//! Truthful mechanisms for makespan scheduling on unrelated machines whose
//! job runtimes are drawn from a machine-symmetric prior.
//!
//! The crate is organized bottom-up:
//!
//! - [`distkit`]: job-size distributions, order statistics, reserve statistic.
//! - [`instance`]: realized runtime matrices.
//! - [`assign`]: exact minimum-total-work assignment with capacities and reserves.
//! - [`mech`]: the four mechanisms, Clarke payments, last-entry diagnostics
//!   and an incentive-compatibility auditor.
//! - [`bounds`]: Monte Carlo estimators of the makespan lower bounds.
//! - [`lemmalab`]: statistical checks of the order-statistic and
//!   correlation-gap inequalities the mechanisms rely on.
//! - [`harness`]: seeded simulation campaigns and report emission.

pub mod assign;
pub mod bounds;
pub mod distkit;
mod error;
pub mod harness;
pub mod instance;
pub mod lemmalab;
pub mod mech;
pub mod stats;

pub use assign::{RangeConstraint, Schedule};
pub use distkit::{DistributionSpec, Family, OrderStatQuery};
pub use error::{Error, Result};
pub use instance::Instance;
pub use mech::{MechanismConfig, MechanismKind, Outcome};

/// Integer ceiling of a nonnegative real, ignoring float noise below 1e-9.
pub(crate) fn ceil_count(x: f64) -> usize {
    (x - 1e-9).ceil().max(0.0) as usize
}

/// Stable per-trial seed: splitmix64 finalizer applied to the master seed
/// offset by the trial index.
pub fn trial_seed(master: u64, trial: u64) -> u64 {
    let mut z = master.wrapping_add(trial.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
