//! Numerical laboratory for statistical-to-computational gaps.
//!
//! Every random model is a pure function of `(params, seed, stream_id)`; every
//! asymptotic claim is checked at desk scale against an exact small-instance
//! oracle or a closed form.

pub mod cli;
pub mod detect;
pub mod error;
pub mod freeenergy;
pub mod linalg;
pub mod lowdeg;
pub mod mcmc;
pub mod models;
pub mod ogp;
pub mod quad;
pub mod rng;
pub mod skcert;
pub mod stats;

pub use error::{Error, Result};
pub use rng::RngStream;
