//! # fsl
//!
//! Numerical toolkit for f-divergences between the outputs of a vector
//! Gaussian channel `Y = sqrt(a) H X + sqrt(1 - a) N`, `N ~ N(0, Sigma)`, and
//! their covariance gradients.
//!
//! The central identities checked here are
//!
//! | Quantity | Relation |
//! |----------|----------|
//! | density | `d/dC p(y) = 1/2 Hess_y p(y)` (matrix heat equation) |
//! | f-divergence | `d/dC D_f(p || q) = -1/2 I_f(p || q)` |
//! | KL | `d/dC KL(p || q) = -1/2 I(p || q)` (relative Fisher matrix) |
//! | entropy | `d/dC h(Y) = 1/2 J(Y)` |
//!
//! where `C = (1 - a) Sigma` is the effective noise covariance. All sources
//! are Gaussian mixtures, so scores and Hessians are exact and every identity
//! can be checked against finite differences with either a deterministic
//! Gauss-Hermite route (dimension <= 3) or a seeded Monte-Carlo route.
//!
//! ## Layout
//!
//! - [`matrixcore`]: symmetric (semi)definite matrices, Cholesky, projection.
//! - [`mixtures`]: Gaussian mixtures with closed-form score and Hessian.
//! - [`channel`]: the channel model and its push-forward on mixtures.
//! - [`divergence`]: f-generators and `D_f` estimators.
//! - [`fisher`]: relative / generalized Fisher information estimators.
//! - [`identity`]: finite-difference verification harness.
//! - [`optimize`]: covariance descent and f-score-matching fits.
//! - [`cli`]: config-driven batch runner.

pub mod channel;
pub mod cli;
pub mod divergence;
pub mod error;
pub mod estimator;
pub mod fisher;
pub mod identity;
pub mod matrixcore;
pub mod mixtures;
pub mod montecarlo;
pub mod optimize;
pub mod quadrature;

pub use channel::{ChannelModel, EffectiveNoise};
pub use divergence::{FGenerator, GeneratorKind, ScalarEstimate};
pub use error::{Error, Result};
pub use estimator::{EstimatorConfig, Method};
pub use fisher::MatrixEstimate;
pub use matrixcore::{CholeskyFactor, SymmetricDirection, SymmetricPSDMatrix};
pub use mixtures::{GaussianComponent, GaussianMixture};
