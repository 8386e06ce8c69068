//! Matrix-valued Fisher-type expectations.
//!
//! With the score gap `u(y) = grad ln p(y) - grad ln q(y)` and `r = p/q`:
//!
//! - relative Fisher matrix `I(p || q) = E_p[u u^T]`;
//! - generalized form, q-expectation: `I_f = E_q[f''(r) (grad r)(grad r)^T]`,
//!   where `grad r = r u`;
//! - generalized form, p-expectation: `I_f = E_p[r f''(r) u u^T]`;
//! - Fisher information `J(p) = E_p[s s^T]`, `s = grad ln p`.
//!
//! Only the upper triangle of each outer product is accumulated, so every
//! estimate is exactly symmetric.

use nalgebra::{DMatrix, DVector};

use crate::divergence::{check_same_dim, check_samples, FGenerator, ScalarEstimate, ScalarMethod};
use crate::error::{Error, Result};
use crate::estimator::{EstimatorConfig, Method};
use crate::matrixcore::SymmetricDirection;
use crate::mixtures::{clamp_log_ratio, gaussian_relative_fisher, GaussianMixture};
use crate::montecarlo::{self, Moments};
use crate::quadrature::{Envelope, TensorGrid};

/// Mean matrix with entrywise standard errors of the mean.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixEstimate {
    pub mean: DMatrix<f64>,
    pub std_error: DMatrix<f64>,
    pub n_samples: usize,
    pub method: Method,
}

impl MatrixEstimate {
    pub fn dim(&self) -> usize {
        self.mean.nrows()
    }

    /// `tr(mean * V)`.
    pub fn contract(&self, v: &SymmetricDirection) -> f64 {
        v.contract(&self.mean)
    }

    pub fn max_std_error(&self) -> f64 {
        self.std_error.amax()
    }

    fn exact(mean: DMatrix<f64>, n_samples: usize, method: Method) -> Self {
        let d = mean.nrows();
        Self {
            mean,
            std_error: DMatrix::zeros(d, d),
            n_samples,
            method,
        }
    }
}

fn triangle_len(d: usize) -> usize {
    d * (d + 1) / 2
}

fn push_outer(u: &DVector<f64>, w: f64, out: &mut [f64]) {
    let d = u.len();
    let mut k = 0;
    for i in 0..d {
        for j in i..d {
            out[k] = w * (u[i] * u[j]);
            k += 1;
        }
    }
}

fn unpack(values: &[f64], d: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(d, d);
    let mut k = 0;
    for i in 0..d {
        for j in i..d {
            m[(i, j)] = values[k];
            m[(j, i)] = values[k];
            k += 1;
        }
    }
    m
}

/// Which law the samples come from and how each outer product is weighted.
#[derive(Clone, Copy)]
enum Form<'a> {
    /// `y ~ p`, weight `r f''(r)`.
    PExpectation(&'a FGenerator),
    /// `y ~ q`, weight `r^2 f''(r)`.
    QExpectation(&'a FGenerator),
}

/// Monte-Carlo core: entrywise moments of `w(y) u u^T`, plus an optional
/// trailing column holding the contraction `w(y) u^T V u`.
fn fisher_mc_moments(
    p: &GaussianMixture,
    q: &GaussianMixture,
    form: Form<'_>,
    direction: Option<&SymmetricDirection>,
    n: usize,
    seed: u64,
) -> Result<Moments> {
    check_same_dim(p, q)?;
    check_samples(n)?;
    let d = p.dim();
    if let Some(v) = direction {
        if v.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: v.dim(),
            });
        }
    }
    let tri = triangle_len(d);
    let width = tri + usize::from(direction.is_some());
    let sampler = match form {
        Form::PExpectation(_) => p,
        Form::QExpectation(_) => q,
    };
    montecarlo::estimate(n, seed, width, |rng, out| {
        let y = sampler.sample_one(rng);
        let (lp, sp) = p.log_and_score(&y);
        let (lq, sq) = q.log_and_score(&y);
        let u = sp - sq;
        let lr = clamp_log_ratio(lp - lq);
        let w = match form {
            Form::PExpectation(f) => (lr + f.log_f_second_from_log_ratio(lr)).exp(),
            Form::QExpectation(f) => (2.0 * lr + f.log_f_second_from_log_ratio(lr)).exp(),
        };
        push_outer(&u, w, &mut out[..tri]);
        if let Some(v) = direction {
            out[tri] = w * u.dot(&(v.as_matrix() * &u));
        }
        Ok(())
    })
}

fn to_estimate(m: &Moments, d: usize, method: Method) -> MatrixEstimate {
    let tri = triangle_len(d);
    MatrixEstimate {
        mean: unpack(&m.mean()[..tri], d),
        std_error: unpack(&m.std_error()[..tri], d),
        n_samples: m.count() as usize,
        method,
    }
}

/// `E_p[u u^T]` by sampling `y ~ p`.
pub fn relative_fisher_mc(
    p: &GaussianMixture,
    q: &GaussianMixture,
    n: usize,
    seed: u64,
) -> Result<MatrixEstimate> {
    generalized_fisher_p(p, q, &FGenerator::kl(), n, seed)
}

/// `E_p[r f''(r) u u^T]` by sampling `y ~ p`. For the KL generator the
/// weight is exactly one.
pub fn generalized_fisher_p(
    p: &GaussianMixture,
    q: &GaussianMixture,
    f: &FGenerator,
    n: usize,
    seed: u64,
) -> Result<MatrixEstimate> {
    let m = fisher_mc_moments(p, q, Form::PExpectation(f), None, n, seed)?;
    Ok(to_estimate(&m, p.dim(), Method::MonteCarloP))
}

/// `E_q[f''(r) (grad r)(grad r)^T]` by sampling `y ~ q`.
pub fn generalized_fisher_q(
    p: &GaussianMixture,
    q: &GaussianMixture,
    f: &FGenerator,
    n: usize,
    seed: u64,
) -> Result<MatrixEstimate> {
    let m = fisher_mc_moments(p, q, Form::QExpectation(f), None, n, seed)?;
    Ok(to_estimate(&m, p.dim(), Method::MonteCarloQ))
}

/// Deterministic `I_f` by tensor Gauss-Hermite quadrature (`d <= 3`).
pub fn generalized_fisher_quadrature(
    p: &GaussianMixture,
    q: &GaussianMixture,
    f: &FGenerator,
    nodes_per_axis: usize,
) -> Result<MatrixEstimate> {
    check_same_dim(p, q)?;
    let grid = TensorGrid::new(&Envelope::covering(p, q), nodes_per_axis)?;
    generalized_fisher_on_grid(p, q, f, &grid)
}

/// Same as [`generalized_fisher_quadrature`] on a caller-supplied grid.
pub fn generalized_fisher_on_grid(
    p: &GaussianMixture,
    q: &GaussianMixture,
    f: &FGenerator,
    grid: &TensorGrid,
) -> Result<MatrixEstimate> {
    check_same_dim(p, q)?;
    let d = p.dim();
    if grid.nodes.first().map(DVector::len) != Some(d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: grid.nodes.first().map_or(0, DVector::len),
        });
    }
    let v = grid.integrate(triangle_len(d), |y, out| {
        let (lp, sp) = p.log_and_score(y);
        let (lq, sq) = q.log_and_score(y);
        let lr = lp - lq;
        // q f''(r) r^2 u u^T = p r f''(r) u u^T
        let w = (lp + lr + f.log_f_second_from_log_ratio(lr)).exp();
        push_outer(&(sp - sq), w, out);
        Ok(())
    })?;
    Ok(MatrixEstimate::exact(unpack(&v, d), grid.len(), Method::Quadrature))
}

/// `J(p) = E_p[s s^T]` by sampling `y ~ p`.
pub fn fisher_information_mc(p: &GaussianMixture, n: usize, seed: u64) -> Result<MatrixEstimate> {
    check_samples(n)?;
    let d = p.dim();
    let m = montecarlo::estimate(n, seed, triangle_len(d), |rng, out| {
        let y = p.sample_one(rng);
        let (_, s) = p.log_and_score(&y);
        push_outer(&s, 1.0, out);
        Ok(())
    })?;
    Ok(to_estimate(&m, d, Method::MonteCarloP))
}

/// `J(p)` by quadrature (`d <= 3`).
pub fn fisher_information_quadrature(
    p: &GaussianMixture,
    nodes_per_axis: usize,
) -> Result<MatrixEstimate> {
    let grid = TensorGrid::new(&Envelope::single(p), nodes_per_axis)?;
    let d = p.dim();
    let v = grid.integrate(triangle_len(d), |y, out| {
        let (lp, s) = p.log_and_score(y);
        push_outer(&s, lp.exp(), out);
        Ok(())
    })?;
    Ok(MatrixEstimate::exact(unpack(&v, d), grid.len(), Method::Quadrature))
}

/// `J(p)` through the configured route.
pub fn fisher_information(p: &GaussianMixture, cfg: &EstimatorConfig) -> Result<MatrixEstimate> {
    match cfg.method {
        Method::MonteCarloP | Method::MonteCarloQ => fisher_information_mc(p, cfg.n, cfg.seed),
        Method::Quadrature => fisher_information_quadrature(p, cfg.nodes_per_axis),
        Method::ClosedForm => match p.components() {
            [c] => Ok(MatrixEstimate::exact(c.precision().clone(), 0, Method::ClosedForm)),
            _ => Err(Error::InvalidArgument(
                "closed-form Fisher information needs a single Gaussian".into(),
            )),
        },
    }
}

/// `I_f(p || q)` through the configured route.
pub fn generalized_fisher(
    p: &GaussianMixture,
    q: &GaussianMixture,
    f: &FGenerator,
    cfg: &EstimatorConfig,
) -> Result<MatrixEstimate> {
    match cfg.method {
        Method::MonteCarloP => generalized_fisher_p(p, q, f, cfg.n, cfg.seed),
        Method::MonteCarloQ => generalized_fisher_q(p, q, f, cfg.n, cfg.seed),
        Method::Quadrature => generalized_fisher_quadrature(p, q, f, cfg.nodes_per_axis),
        Method::ClosedForm => closed_form_relative_fisher(p, q, f),
    }
}

fn closed_form_relative_fisher(
    p: &GaussianMixture,
    q: &GaussianMixture,
    f: &FGenerator,
) -> Result<MatrixEstimate> {
    if f.kind() != crate::divergence::GeneratorKind::Kl {
        return Err(Error::InvalidArgument(format!(
            "closed form is only available for the KL generator, not {}",
            f.name()
        )));
    }
    match (p.components(), q.components()) {
        ([a], [b]) => Ok(MatrixEstimate::exact(
            gaussian_relative_fisher(a, b)?,
            0,
            Method::ClosedForm,
        )),
        _ => Err(Error::InvalidArgument(
            "closed-form relative Fisher needs single Gaussians".into(),
        )),
    }
}

/// `I_f(p || q)` together with the scalar contraction `tr(I_f V)`; the
/// Monte-Carlo routes report the per-sample standard error of the
/// contraction rather than propagating entrywise errors.
pub fn generalized_fisher_contracted(
    p: &GaussianMixture,
    q: &GaussianMixture,
    f: &FGenerator,
    v: &SymmetricDirection,
    cfg: &EstimatorConfig,
) -> Result<(MatrixEstimate, ScalarEstimate)> {
    let form = match cfg.method {
        Method::MonteCarloP => Form::PExpectation(f),
        Method::MonteCarloQ => Form::QExpectation(f),
        Method::Quadrature | Method::ClosedForm => {
            let est = generalized_fisher(p, q, f, cfg)?;
            let method = if cfg.method == Method::Quadrature {
                ScalarMethod::Quadrature
            } else {
                ScalarMethod::ClosedForm
            };
            let c = ScalarEstimate::exact(est.contract(v), method);
            return Ok((est, c));
        }
    };
    let m = fisher_mc_moments(p, q, form, Some(v), cfg.n, cfg.seed)?;
    let tri = triangle_len(p.dim());
    Ok((
        to_estimate(&m, p.dim(), cfg.method),
        ScalarEstimate::from_moments(&m, tri),
    ))
}

/// `tr(J(p) V)` with a per-sample standard error on the Monte-Carlo route.
pub fn fisher_information_contracted(
    p: &GaussianMixture,
    v: &SymmetricDirection,
    cfg: &EstimatorConfig,
) -> Result<(MatrixEstimate, ScalarEstimate)> {
    if !cfg.method.is_monte_carlo() {
        let est = fisher_information(p, cfg)?;
        let method = if cfg.method == Method::Quadrature {
            ScalarMethod::Quadrature
        } else {
            ScalarMethod::ClosedForm
        };
        let c = ScalarEstimate::exact(est.contract(v), method);
        return Ok((est, c));
    }
    check_samples(cfg.n)?;
    let d = p.dim();
    let tri = triangle_len(d);
    let m = montecarlo::estimate(cfg.n, cfg.seed, tri + 1, |rng, out| {
        let y = p.sample_one(rng);
        let (_, s) = p.log_and_score(&y);
        push_outer(&s, 1.0, &mut out[..tri]);
        out[tri] = s.dot(&(v.as_matrix() * &s));
        Ok(())
    })?;
    Ok((to_estimate(&m, d, Method::MonteCarloP), ScalarEstimate::from_moments(&m, tri)))
}
