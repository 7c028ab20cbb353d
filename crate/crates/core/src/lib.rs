//! Construction and exact certification of permutationally-invariant Bell
//! inequalities from one- and two-body correlations averaged over all
//! permutations of an N-party system.
//!
//! The pipeline has three legs:
//!
//! * [`scenario`] defines the measurement scenario, the coarse-grained data
//!   `(M_a, Ct_ab, M2_a)`, and generators that produce such data from
//!   collective spin-moment models (many-body singlets, spin-squeezed
//!   states, white noise).
//! * [`optimizer`] minimizes the convex cost
//!   `L(A, h, h2) = Tr(A Ct) + h.M + h2.M2 + N E_max(A, h, h2)` over
//!   positive semi-definite `A` with a norm cutoff; a negative optimum is a
//!   violated inequality tailored to the data.
//! * [`oracle`] recomputes every classical bound by exhaustive enumeration
//!   of hidden strategies in exact quarter-integer arithmetic, so a reported
//!   violation never depends on solver accuracy.
//!
//! [`catalog`] holds the analytic inequality families with closed-form
//! bounds, optimal measurement angles and collective-moment witnesses;
//! [`pairdist`] is the same search formulated on the averaged pair
//! probability distribution; [`sampling`] simulates the round-based
//! measurement protocol and its estimators; [`scans`] contains the batch
//! drivers producing the robustness, phase-diagram and singlet-zoo tables.

pub mod catalog;
pub mod error;
pub mod linalg;
pub mod optimizer;
pub mod oracle;
pub mod pairdist;
pub mod sampling;
pub mod scans;
pub mod scenario;

pub use error::{Error, Result};
