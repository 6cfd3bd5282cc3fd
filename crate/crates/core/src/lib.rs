//! Core algorithms for estimating origin-destination matrices (ODMs).
//!
//! The crate couples two halves of one inference loop:
//!
//! * a continuous half, where a small neural network maps observed
//!   log-destination attractions to spatial interaction parameters
//!   `(alpha, beta)`, the Harris-Wilson SDE evolves attractions, and a
//!   totally or singly constrained spatial interaction model produces an
//!   intensity matrix;
//! * a discrete half, where integer contingency tables consistent with a set
//!   of summary-statistic constraints are drawn, either in closed form
//!   (Poisson / multinomial products) or by a Gibbs Markov-basis chain whose
//!   stationary law is Fisher's non-central multivariate hypergeometric.
//!
//! Everything here is `no_std` and only needs `alloc`. File formats, the
//! command line, parallel ensembles and timing live in the `odm-engine`
//! crate.
#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod constraints;
pub mod error;
pub mod harris_wilson;
pub mod intensity;
pub mod loss;
pub mod math;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod sampler;
pub mod seed;
pub mod table;

pub use constraints::{ConstraintSet, FixedCell, Tractability};
pub use error::{Error, Result};
pub use harris_wilson::{HwParams, NoisePath, SolverConfig};
pub use intensity::{IntensityModel, SimParams};
pub use loss::{CalibrationProblem, LossConfig, Scheme};
pub use nn::{AdamConfig, AdamState, NetworkWeights, Theta};
pub use table::{ContingencyTable, CostMatrix, IntensityMatrix, ObservedData};
