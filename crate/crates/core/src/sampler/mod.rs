//! Discrete table sampling.
//!
//! Tractable constraint sets are sampled in closed form. Sets fixing both
//! margins (or declaring symmetry) are sampled by a Gibbs chain over a
//! Markov basis whose stationary law is Fisher's non-central multivariate
//! hypergeometric distribution.

mod basis;
mod closed_form;
mod fiber;
mod fisher;
mod gibbs;
mod init;

pub use basis::{build_markov_basis, MarkovBasis, MarkovBasisMove, EXPLICIT_BASIS_LIMIT};
pub use closed_form::{multinomial, sample_closed_form, sample_unconstrained};
pub use fiber::{enumerate_fiber, DEFAULT_FIBER_LIMIT};
pub use fisher::{fisher_log_pmf, FisherTarget, LineTarget, UniformTarget};
pub use gibbs::GibbsChain;
pub use init::init_table;
