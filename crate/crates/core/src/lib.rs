//! Quantum feedback on non-interacting bosonic gases.
//!
//! A macroscopic observable (the total momentum) is measured with a Gaussian
//! resolution amplitude and the outcome drives a collective kick. The
//! many-atom correlations this generates are carried by a correlation field
//! `D_{mu lambda}(z)` that obeys closed linear maps under both the feedback
//! loop and free evolution, so single-atom properties can be followed without
//! the full many-body state.
//!
//! * [`hilbert`]: single-atom operators in a truncated trap basis.
//! * [`oracle`]: brute-force Fock-space simulator used as ground truth.
//! * [`corrdyn`]: correlation fields and the feedback kernel.
//! * [`freeprop`]: free evolution of correlation fields.
//! * [`observables`]: per-atom moments and moment-relation checks.
//! * [`experiments`]: configured runs behind the `bosefeed` binary.
//! * [`validation`]: the numbered validation criteria.

pub mod corrdyn;
pub mod error;
pub mod experiments;
pub mod freeprop;
pub mod hilbert;
pub mod linalg;
pub mod observables;
pub mod oracle;
pub mod quadrature;
pub mod validation;

pub use error::{Error, Result};
