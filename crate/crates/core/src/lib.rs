//! Nonlinear generalized functions as ε-nets of smooth functions.
//!
//! * [`expr`] and [`epsnet`]: expression trees and the net algebra.
//! * [`mollify`]: kernels and the embedding of model distributions.
//! * [`asymptotics`]: ε-ladder order estimation, moderateness, valuations.
//! * [`pairing`]: integration against test functions and association.
//! * [`hilbert_scale`]: a weighted Fourier scale with nuclear inclusions.
//! * [`cli`]: the batch experiment runner behind the `colombeau` binary.

pub mod asymptotics;
pub mod cli;
pub mod epsnet;
pub mod error;
pub mod expr;
pub mod hilbert_scale;
pub mod mollify;
pub mod pairing;
pub mod quad;

pub use epsnet::{EpsNet, Interval};
pub use error::{Error, Result};
pub use expr::SmoothExpr;
pub use mollify::{delta_net, embed, make_mollifier, DistributionModel, Mollifier, MollifierKind};
