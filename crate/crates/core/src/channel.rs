//! Vector Gaussian channels.
//!
//! Two parameterizations share one type:
//!
//! - diffusion form `Y = sqrt(a) H X + sqrt(1 - a) N` for a given `a`;
//! - additive form `Y = H X + N` (no `a`), the default.
//!
//! In both, `N ~ N(0, Sigma)` and downstream code differentiates with
//! respect to the effective noise covariance `C`, the total covariance of
//! the additive term: `(1 - a) Sigma` in diffusion form, `Sigma` otherwise.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::matrixcore::{cholesky, SymmetricDirection, SymmetricPSDMatrix};
use crate::mixtures::{GaussianComponent, GaussianMixture, COMPONENT_EIGEN_FLOOR};
use crate::montecarlo::{batch_rng, BATCH_SIZE};

/// Output covariances below this smallest eigenvalue are rejected.
pub const DEGENERATE_OUTPUT_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelModel {
    h: DMatrix<f64>,
    alpha_bar: Option<f64>,
    sigma: SymmetricPSDMatrix,
}

/// Total covariance of the additive noise term.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveNoise {
    pub covariance: SymmetricPSDMatrix,
}

impl ChannelModel {
    /// Diffusion form with `a = alpha_bar` in `[0, 1]`.
    pub fn new(h: DMatrix<f64>, alpha_bar: f64, sigma: SymmetricPSDMatrix) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha_bar) {
            return Err(Error::InvalidArgument(format!(
                "alpha_bar must lie in [0, 1], got {alpha_bar}"
            )));
        }
        Self::build(h, Some(alpha_bar), sigma)
    }

    /// Additive form `Y = H X + N`.
    pub fn additive(h: DMatrix<f64>, sigma: SymmetricPSDMatrix) -> Result<Self> {
        Self::build(h, None, sigma)
    }

    /// `Y = X + N`, so `C = Sigma`.
    pub fn additive_identity(sigma: SymmetricPSDMatrix) -> Result<Self> {
        let m = sigma.dim();
        Self::additive(DMatrix::identity(m, m), sigma)
    }

    fn build(h: DMatrix<f64>, alpha_bar: Option<f64>, sigma: SymmetricPSDMatrix) -> Result<Self> {
        if h.nrows() != sigma.dim() {
            return Err(Error::DimensionMismatch {
                expected: sigma.dim(),
                found: h.nrows(),
            });
        }
        if h.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("channel matrix is not finite".into()));
        }
        let ch = Self {
            h,
            alpha_bar,
            sigma,
        };
        if ch.beta_tilde() > 0.0 {
            ch.check_sigma(&ch.sigma)?;
        }
        Ok(ch)
    }

    fn check_sigma(&self, s: &SymmetricPSDMatrix) -> Result<()> {
        let min = s.min_eigenvalue();
        if min < COMPONENT_EIGEN_FLOOR {
            return Err(Error::NotPositiveDefinite(format!(
                "noise covariance has smallest eigenvalue {min:e}"
            )));
        }
        Ok(())
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    /// `None` for the additive form.
    pub fn alpha_bar(&self) -> Option<f64> {
        self.alpha_bar
    }

    /// Noise scale: `1 - a`, or 1 in additive form.
    pub fn beta_tilde(&self) -> f64 {
        self.alpha_bar.map_or(1.0, |a| 1.0 - a)
    }

    /// Signal gain: `sqrt(a)`, or 1 in additive form.
    pub fn signal_gain(&self) -> f64 {
        self.alpha_bar.map_or(1.0, f64::sqrt)
    }

    pub fn sigma(&self) -> &SymmetricPSDMatrix {
        &self.sigma
    }

    pub fn input_dim(&self) -> usize {
        self.h.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.h.nrows()
    }

    pub fn effective_covariance(&self) -> EffectiveNoise {
        EffectiveNoise {
            covariance: self
                .sigma
                .scaled(self.beta_tilde())
                .expect("beta_tilde is nonnegative"),
        }
    }

    /// Same channel with `Sigma <- Sigma + eps V`.
    pub fn perturb_sigma(&self, v: &SymmetricDirection, eps: f64) -> Result<Self> {
        if v.dim() != self.output_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.output_dim(),
                found: v.dim(),
            });
        }
        if eps == 0.0 {
            return Ok(self.clone());
        }
        let sigma = SymmetricPSDMatrix::new(self.sigma.as_matrix() + v.as_matrix() * eps)?;
        self.check_sigma(&sigma)?;
        Ok(Self {
            h: self.h.clone(),
            alpha_bar: self.alpha_bar,
            sigma,
        })
    }

    /// Same channel with a new noise covariance.
    pub fn with_sigma(&self, sigma: SymmetricPSDMatrix) -> Result<Self> {
        Self::build(self.h.clone(), self.alpha_bar, sigma)
    }

    /// Same channel with the effective covariance moved to `C + eps V`.
    pub fn perturb_effective(&self, v: &SymmetricDirection, eps: f64) -> Result<Self> {
        let b = self.beta_tilde();
        if b <= 0.0 {
            return Err(Error::InvalidArgument(
                "a noiseless channel (alpha_bar = 1) has no effective covariance to perturb".into(),
            ));
        }
        self.perturb_sigma(v, eps / b)
    }

    /// Closed-form output law of a mixture input: component `k` becomes
    /// `N(g H mu_k, g^2 H C_k H^T + C)` with the same weight, where `g` is
    /// the signal gain and `C` the effective covariance.
    pub fn pushforward(&self, source: &GaussianMixture) -> Result<GaussianMixture> {
        if source.dim() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                found: source.dim(),
            });
        }
        let g = self.signal_gain();
        let noise = self.sigma.as_matrix() * self.beta_tilde();
        source.map_components(|c| {
            let mean = &self.h * c.mean() * g;
            let cov = &self.h * c.covariance().as_matrix() * self.h.transpose() * (g * g) + &noise;
            let cov = SymmetricPSDMatrix::new(cov)?;
            let min = cov.min_eigenvalue();
            if min < DEGENERATE_OUTPUT_FLOOR {
                return Err(Error::DegenerateOutput(min));
            }
            GaussianComponent::new(mean, cov)
        })
    }

    /// Simulates the channel: `x ~ source`, then `y = g H x + sqrt(b) L z`.
    pub fn simulate(&self, source: &GaussianMixture, n: usize, seed: u64) -> Result<Vec<DVector<f64>>> {
        let x = source.sample(n, seed);
        let l = cholesky(&self.sigma)?;
        let m = self.output_dim();
        let scale = self.beta_tilde().sqrt();
        let mut out = Vec::with_capacity(n);
        // Noise uses a separate seed offset so it is independent of the input draws.
        for b in 0..n.div_ceil(BATCH_SIZE) {
            let mut rng = batch_rng(seed ^ 0x9e37_79b9_7f4a_7c15, b as u64);
            for xi in &x[b * BATCH_SIZE..(b * BATCH_SIZE + BATCH_SIZE).min(n)] {
                let z = DVector::from_iterator(m, (0..m).map(|_| rng.sample::<f64, _>(StandardNormal)));
                out.push(&self.h * xi * self.signal_gain() + l.lower() * z * scale);
            }
        }
        Ok(out)
    }
}
