//! Moment-matrix relaxations of the quantum set of correlations: the
//! almost-quantum set and the single-party level Q1, together with Bell
//! optimization, wirings and evaluators for physical principles.

pub mod boxes;
pub mod error;
pub mod functional;
pub mod io;
pub mod membership;
pub mod moment;
pub mod principles;
pub mod quantum;
pub mod scalar;
pub mod scenario;
pub mod solver;
pub mod wirings;

pub use boxes::{pr_box_2222, CgBasis, CgVector, ProbBox, ValidationReport, EPS_SUM, EPS_ZERO};
pub use error::{Error, Result};
pub use functional::BellFunctional;
pub use membership::{box_margin, maximize_linear, minimize_linear, psd_margin, Margin, Optimum};
pub use moment::{build_moment_problem, Binding, EntryClass, MomentProblem, PairKey};
pub use scalar::Scalar;
pub use scenario::{enumerate_events, locally_orthogonal, Assignment, Event, Level, Scenario};
pub use solver::{ConicProblem, Settings, Solution, Status};
pub use wirings::{Tree, WiringSpec};

/// Box with floating point probabilities.
pub type Box64 = ProbBox<f64>;
/// Box with exact rational probabilities.
pub type ExactBox = ProbBox<num_rational::Ratio<i64>>;
/// Conic program over f64.
pub type Problem64 = ConicProblem<f64>;
