//! Dynamic supplier/manufacturer Stackelberg pricing with punitive policies
//! that make truthful reporting of the market potential the manufacturer's
//! best strategy.
//!
//! Modules:
//! - [`market`]: demand, utilities and perfect-information equilibria.
//! - [`misreport`]: report matrices, their expected deviation and sampling.
//! - [`greedy`]: limit analysis of the deviation-based policy I.
//! - [`strategic`]: attractors and revenue limits of the demand-based policy II.
//! - [`sim`]: seeded Monte-Carlo runs of both policies.

pub mod error;
pub mod greedy;
pub mod market;
pub mod misreport;
pub mod sim;
pub mod strategic;

pub use error::{Error, PolicyViolation, Result};
pub use greedy::{find_pi_bar, partial_info_utility, verify_truth_revealing, PiBarSearch, PolicyIAnalysis, TruthCheck};
pub use market::{sbe_dynamic, sbe_single, MarketModel, SbeOutcome, StageEquilibrium};
pub use misreport::{expected_deviation, PolicyClass, ReportPolicy};
pub use sim::{replicate, run, PunitiveSpec, ReplicationSummary, SimConfig, SlotRecord, Trace, TraceSummary};
pub use strategic::{asymptotic_utility, find_pi_bar_strategic, fixed_point, fixed_points, identity_check, FixedPointResult, StateFixedPoint};
