//! Gaussian mixtures with exact log-density, score and density Hessian.
//!
//! Mixtures are the only source family in the crate: their scores and
//! Hessians are available in closed form, so finite-difference checks of
//! the channel identities measure truncation error only.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::matrixcore::{cholesky, inverse_and_logdet, symmetrize, SymmetricPSDMatrix};
use crate::montecarlo::{batch_rng, BATCH_SIZE};

/// Smallest admissible covariance eigenvalue of a component.
pub const COMPONENT_EIGEN_FLOOR: f64 = 1e-10;

/// Bounds applied to density ratios `p/q` before they enter a generator.
pub const RATIO_MIN: f64 = 1e-300;
pub const RATIO_MAX: f64 = 1e300;

/// `ln(p/q)` clamped to `[ln 1e-300, ln 1e300]`.
pub fn clamp_log_ratio(lr: f64) -> f64 {
    lr.clamp(RATIO_MIN.ln(), RATIO_MAX.ln())
}

/// One Gaussian `N(mean, covariance)` with cached factorizations.
#[derive(Debug, Clone)]
pub struct GaussianComponent {
    mean: DVector<f64>,
    covariance: SymmetricPSDMatrix,
    lower: DMatrix<f64>,
    precision: DMatrix<f64>,
    log_det: f64,
    log_norm: f64,
}

impl GaussianComponent {
    pub fn new(mean: DVector<f64>, covariance: SymmetricPSDMatrix) -> Result<Self> {
        if mean.len() != covariance.dim() {
            return Err(Error::DimensionMismatch {
                expected: covariance.dim(),
                found: mean.len(),
            });
        }
        if mean.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("component mean is not finite".into()));
        }
        let min = covariance.min_eigenvalue();
        if min < COMPONENT_EIGEN_FLOOR {
            return Err(Error::NotPositiveDefinite(format!(
                "component covariance has smallest eigenvalue {min:e}"
            )));
        }
        let lower = cholesky(&covariance)?.lower().clone();
        let (precision, log_det) = inverse_and_logdet(&covariance)?;
        let log_norm = -0.5 * (mean.len() as f64 * (2.0 * PI).ln() + log_det);
        Ok(Self {
            mean,
            covariance,
            lower,
            precision: precision.into_matrix(),
            log_det,
            log_norm,
        })
    }

    /// Convenience constructor from plain slices.
    pub fn from_parts(mean: &[f64], covariance: &[Vec<f64>]) -> Result<Self> {
        Self::new(
            DVector::from_column_slice(mean),
            SymmetricPSDMatrix::from_rows(covariance)?,
        )
    }

    pub fn standard(dim: usize) -> Self {
        Self::new(DVector::zeros(dim), SymmetricPSDMatrix::identity(dim))
            .expect("identity covariance is valid")
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &SymmetricPSDMatrix {
        &self.covariance
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// Differential entropy `1/2 ln((2 pi e)^d |C|)`.
    pub fn entropy(&self) -> f64 {
        0.5 * (self.dim() as f64 * (2.0 * PI * std::f64::consts::E).ln() + self.log_det)
    }

    fn log_norm(&self) -> f64 {
        self.log_norm
    }

    /// `ln N(y; mu, C)` without allocating.
    fn log_density(&self, y: &DVector<f64>) -> f64 {
        let d = self.dim();
        let mut quad = 0.0;
        for j in 0..d {
            let dj = y[j] - self.mean[j];
            let mut s = 0.0;
            for i in 0..d {
                s += self.precision[(i, j)] * (y[i] - self.mean[i]);
            }
            quad += dj * s;
        }
        self.log_norm - 0.5 * quad
    }
}

/// Uniform component selector plus standard-normal vector.
///
/// Mapping one draw through several mixtures with the same component count
/// and dimension gives common random numbers for paired estimators.
#[derive(Debug, Clone)]
pub struct StandardDraw {
    pub u: f64,
    pub z: DVector<f64>,
}

impl StandardDraw {
    pub fn draw<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Self {
        let u = rng.random::<f64>();
        let z = DVector::from_iterator(dim, (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)));
        Self { u, z }
    }
}

/// Finite mixture `sum_k w_k N(mu_k, C_k)`.
#[derive(Debug, Clone)]
pub struct GaussianMixture {
    weights: Vec<f64>,
    log_weights: Vec<f64>,
    components: Vec<GaussianComponent>,
}

impl GaussianMixture {
    /// Weights must be positive and sum to one within `1e-6`; they are
    /// renormalized exactly.
    pub fn new(weights: Vec<f64>, components: Vec<GaussianComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidArgument("mixture needs at least one component".into()));
        }
        if weights.len() != components.len() {
            return Err(Error::DimensionMismatch {
                expected: components.len(),
                found: weights.len(),
            });
        }
        if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidArgument("mixture weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidArgument(format!(
                "mixture weights sum to {total}, expected 1"
            )));
        }
        let d = components[0].dim();
        if let Some(c) = components.iter().find(|c| c.dim() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: c.dim(),
            });
        }
        let weights: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let log_weights = weights.iter().map(|w| w.ln()).collect();
        Ok(Self {
            weights,
            log_weights,
            components,
        })
    }

    pub fn single(component: GaussianComponent) -> Self {
        Self::new(vec![1.0], vec![component]).expect("single component mixture is valid")
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    /// Overall mean `sum_k w_k mu_k`.
    pub fn mean(&self) -> DVector<f64> {
        self.components
            .iter()
            .zip(&self.weights)
            .fold(DVector::zeros(self.dim()), |acc, (c, w)| acc + c.mean() * *w)
    }

    /// Overall covariance, including the spread of the component means.
    pub fn covariance(&self) -> DMatrix<f64> {
        let m = self.mean();
        let d = self.dim();
        let mut cov = DMatrix::zeros(d, d);
        for (c, w) in self.components.iter().zip(&self.weights) {
            let dm = c.mean() - &m;
            cov += (c.covariance().as_matrix() + &dm * dm.transpose()) * *w;
        }
        symmetrize(&cov)
    }

    fn check_dim(&self, y: &DVector<f64>) -> Result<()> {
        if y.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: y.len(),
            });
        }
        Ok(())
    }

    /// Per-component `ln(w_k N_k(y))` and `P_k (y - mu_k)`.
    fn component_terms(&self, y: &DVector<f64>) -> (Vec<f64>, Vec<DVector<f64>>) {
        let mut logs = Vec::with_capacity(self.len());
        let mut whitened = Vec::with_capacity(self.len());
        for (c, lw) in self.components.iter().zip(&self.log_weights) {
            let diff = y - c.mean();
            let pd = c.precision() * &diff;
            logs.push(lw + c.log_norm() - 0.5 * diff.dot(&pd));
            whitened.push(pd);
        }
        (logs, whitened)
    }

    /// Log-density and score in one pass.
    pub(crate) fn log_and_score(&self, y: &DVector<f64>) -> (f64, DVector<f64>) {
        let (logs, whitened) = self.component_terms(y);
        let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        let mut score = DVector::zeros(self.dim());
        for (l, pd) in logs.iter().zip(&whitened) {
            let r = (l - max).exp();
            total += r;
            score.axpy(-r, pd, 1.0);
        }
        (max + total.ln(), score / total)
    }

    pub fn logpdf(&self, y: &DVector<f64>) -> Result<f64> {
        self.check_dim(y)?;
        // Streaming log-sum-exp.
        let mut max = f64::NEG_INFINITY;
        let mut sum = 0.0;
        for (c, lw) in self.components.iter().zip(&self.log_weights) {
            let l = lw + c.log_density(y);
            if l > max {
                sum = sum * (max - l).exp() + 1.0;
                max = l;
            } else {
                sum += (l - max).exp();
            }
        }
        Ok(max + sum.ln())
    }

    /// `grad_y ln p(y) = -sum_k r_k(y) C_k^{-1} (y - mu_k)`.
    pub fn score(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(y)?;
        Ok(self.log_and_score(y).1)
    }

    /// Hessian of the density itself (not of the log-density).
    pub fn density_hessian(&self, y: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_dim(y)?;
        let (logs, whitened) = self.component_terms(y);
        let d = self.dim();
        let mut h = DMatrix::zeros(d, d);
        for ((l, pd), c) in logs.iter().zip(&whitened).zip(&self.components) {
            let dens = l.exp();
            h += (pd * pd.transpose() - c.precision()) * dens;
        }
        Ok(symmetrize(&h))
    }

    /// Maps a standard draw to a sample of this mixture.
    pub fn map_draw(&self, draw: &StandardDraw) -> DVector<f64> {
        let mut acc = 0.0;
        let mut k = self.len() - 1;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w;
            if draw.u < acc {
                k = i;
                break;
            }
        }
        let c = &self.components[k];
        c.mean() + &c.lower * &draw.z
    }

    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        self.map_draw(&StandardDraw::draw(rng, self.dim()))
    }

    /// `n` i.i.d. draws, deterministic in `(seed, n)` and laid out in the
    /// same batch streams as the Monte-Carlo estimators.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<DVector<f64>> {
        let mut out = Vec::with_capacity(n);
        for b in 0..n.div_ceil(BATCH_SIZE) {
            let mut rng = batch_rng(seed, b as u64);
            let len = BATCH_SIZE.min(n - b * BATCH_SIZE);
            out.extend((0..len).map(|_| self.sample_one(&mut rng)));
        }
        out
    }

    /// New mixture with the same weights and transformed components.
    pub fn map_components<F>(&self, f: F) -> Result<Self>
    where
        F: Fn(&GaussianComponent) -> Result<GaussianComponent>,
    {
        let components = self.components.iter().map(f).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            weights: self.weights.clone(),
            log_weights: self.log_weights.clone(),
            components,
        })
    }
}

fn check_pair(p: &GaussianComponent, q: &GaussianComponent) -> Result<()> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            found: q.dim(),
        });
    }
    Ok(())
}

/// Closed-form `KL(N(mu_p, A) || N(mu_q, B))`.
pub fn gaussian_kl(p: &GaussianComponent, q: &GaussianComponent) -> Result<f64> {
    check_pair(p, q)?;
    let binv = q.precision();
    let dm = q.mean() - p.mean();
    let tr = (binv * p.covariance().as_matrix()).trace();
    let quad = dm.dot(&(binv * &dm));
    Ok((0.5 * (tr + quad - p.dim() as f64 + q.log_det() - p.log_det())).max(0.0))
}

/// Closed-form relative Fisher matrix `E_p[(s_p - s_q)(s_p - s_q)^T]` for
/// two Gaussians. The score gap is affine, `u(y) = M y + v`.
pub fn gaussian_relative_fisher(
    p: &GaussianComponent,
    q: &GaussianComponent,
) -> Result<DMatrix<f64>> {
    check_pair(p, q)?;
    let m = q.precision() - p.precision();
    let v = p.precision() * p.mean() - q.precision() * q.mean();
    let shift = &m * p.mean() + v;
    let out = &m * p.covariance().as_matrix() * m.transpose() + &shift * shift.transpose();
    Ok(symmetrize(&out))
}
