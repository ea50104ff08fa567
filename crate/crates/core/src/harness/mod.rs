//! Monte Carlo drivers, streaming statistics and run artifacts.

pub mod artifacts;
pub mod config;
pub mod cumulant;
pub mod runs;
pub mod stats;

pub use config::ExperimentConfig;
pub use cumulant::{cumulant_expansion_validate, ExpansionResidual};
pub use runs::{
    run_clt, run_local_law_sweep, run_que_check, run_regularization_fidelity, run_rigidity_and_repulsion, TrialRecord,
    Verdict,
};
pub use stats::{ks_statistic, KsResult, MomentAccumulator};
