//! Interacting mixed-membership stochastic block model.
//!
//! Input entities `i, j` belong to latent clusters through a membership matrix
//! `theta`; each pair of clusters `(k, l)` carries a distribution `p_kl` over
//! output entities. The probability that the pair `(i, j)` yields output `x` is
//! `sum_kl theta_ik theta_jl p_kl(x)`. Parameters are fitted by
//! expectation-maximization on aggregated `(i, j, x)` triplet counts.

pub mod analysis;
pub mod baselines;
pub mod corpus;
pub mod dataset;
pub mod em;
pub mod error;
pub mod eval;
pub mod io;
pub mod model;
pub mod modelfile;
mod par;
pub mod random;
pub mod synthetic;
pub mod vocab;

pub use dataset::{Triplet, TripletDataset};
pub use em::{train, TrainConfig, TrainTrace};
pub use error::{Error, ErrorCategory, Result};
pub use model::{ImmsbmModel, PairPredictor};
pub use modelfile::AnyModel;
pub use vocab::Vocabulary;
