//! Gradient descent on the noise covariance and f-score-matching fits.
//!
//! `fit_covariance` moves `Sigma` against the KL gradient of the channel
//! outputs. The gradient is never differenced numerically: it is
//! `-1/2 I(p_Y || q_Y)`, so each step is `Sigma <- Sigma + (xi / 2) I`.
//!
//! `fit_model_fsm` fits a single Gaussian `q(.; mu, C)` to a target mixture
//! by minimizing `tr I_f(p || q)` with central-difference gradients in the
//! parameters.

use nalgebra::{DMatrix, DVector};

use crate::channel::ChannelModel;
use crate::divergence::{divergence, FGenerator, ScalarEstimate};
use crate::error::{Error, Result};
use crate::estimator::{EstimatorConfig, Method};
use crate::fisher::{generalized_fisher, generalized_fisher_on_grid};
use crate::identity::{verify_kl_corollary, VerificationCase, VerificationRecord, DEFAULT_FD_STEP};
use crate::matrixcore::{project_psd, SymmetricDirection, SymmetricPSDMatrix, DEFAULT_PSD_FLOOR};
use crate::mixtures::{GaussianComponent, GaussianMixture};
use crate::quadrature::{Envelope, TensorGrid};

/// Parameter step for the finite-difference gradient of `fit_model_fsm`.
pub const THETA_FD_STEP: f64 = 1e-4;
/// An objective increase counts as real once it exceeds this many combined
/// standard errors.
pub const DIVERGENCE_SIGMAS: f64 = 5.0;
/// Consecutive increases tolerated before giving up.
pub const DIVERGENCE_STREAK: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct DescentOptions {
    pub step_size: f64,
    pub max_iters: usize,
    pub psd_floor: f64,
    /// Seed of iteration `k` is `grad_estimator.seed + k`.
    pub grad_estimator: EstimatorConfig,
    /// Stop once the Frobenius norm of the gradient drops below this.
    pub stop_tol: f64,
    /// Run the KL gradient check on coordinate directions every this many
    /// iterations (covariance descent only).
    pub consistency_every: Option<usize>,
}

impl DescentOptions {
    pub fn new(step_size: f64, max_iters: usize, grad_estimator: EstimatorConfig) -> Self {
        Self {
            step_size,
            max_iters,
            psd_floor: DEFAULT_PSD_FLOOR,
            grad_estimator,
            stop_tol: 1e-8,
            consistency_every: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0) || !self.step_size.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "step size must be positive, got {}",
                self.step_size
            )));
        }
        if !(self.stop_tol > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "stop tolerance must be positive, got {}",
                self.stop_tol
            )));
        }
        if !(self.psd_floor > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "psd floor must be positive, got {}",
                self.psd_floor
            )));
        }
        if self.consistency_every == Some(0) {
            return Err(Error::InvalidArgument("consistency_every must be at least 1".into()));
        }
        Ok(())
    }

    fn estimator_at(&self, k: usize) -> EstimatorConfig {
        self.grad_estimator
            .with_seed(self.grad_estimator.seed.wrapping_add(k as u64))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Iterate {
    pub sigma: SymmetricPSDMatrix,
    /// `D_KL(p_Y || q_Y)` at `sigma`.
    pub objective: ScalarEstimate,
    /// `-1/2 I(p_Y || q_Y)`.
    pub gradient: DMatrix<f64>,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub iterates: Vec<Iterate>,
    /// True when the gradient norm fell below `stop_tol`.
    pub converged: bool,
    /// `(iteration, record)` pairs from the periodic KL gradient check.
    pub consistency: Vec<(usize, VerificationRecord)>,
}

/// Tracks consecutive significant objective increases.
struct DivergenceGuard {
    streak: usize,
    previous: Option<ScalarEstimate>,
}

impl DivergenceGuard {
    fn new() -> Self {
        Self {
            streak: 0,
            previous: None,
        }
    }

    fn observe(&mut self, current: ScalarEstimate, iteration: usize) -> Result<()> {
        if let Some(prev) = self.previous {
            let se = prev.std_error.hypot(current.std_error);
            if current.value - prev.value > DIVERGENCE_SIGMAS * se + 1e-12 {
                self.streak += 1;
            } else {
                self.streak = 0;
            }
        }
        self.previous = Some(current);
        if self.streak >= DIVERGENCE_STREAK {
            return Err(Error::DivergingObjective { iteration });
        }
        Ok(())
    }
}

/// Gradient descent on the noise covariance of an additive channel
/// (`C = Sigma`).
pub fn fit_covariance(
    source_p: &GaussianMixture,
    source_q: &GaussianMixture,
    ch0: &ChannelModel,
    opts: &DescentOptions,
) -> Result<Trajectory> {
    opts.validate()?;
    if ch0.beta_tilde() != 1.0 {
        return Err(Error::InvalidArgument(
            "covariance descent needs an effective covariance equal to Sigma (additive form or alpha_bar = 0)"
                .into(),
        ));
    }
    let kl = FGenerator::kl();
    let mut ch = ch0.clone();
    let mut guard = DivergenceGuard::new();
    let mut traj = Trajectory {
        iterates: Vec::new(),
        converged: false,
        consistency: Vec::new(),
    };
    for k in 0..=opts.max_iters {
        let cfg = opts.estimator_at(k);
        let p_y = ch.pushforward(source_p)?;
        let q_y = ch.pushforward(source_q)?;
        let objective = divergence(&p_y, &q_y, &kl, &cfg)?;
        let fisher = generalized_fisher(&p_y, &q_y, &kl, &cfg)?;
        let gradient = fisher.mean.scale(-0.5);
        let grad_norm = gradient.norm();

        if let Some(every) = opts.consistency_every {
            if k % every == 0 {
                for v in coordinate_directions(ch.output_dim()) {
                    let case = VerificationCase {
                        source_p: source_p.clone(),
                        source_q: source_q.clone(),
                        channel: ch.clone(),
                        generator: kl,
                        direction: v,
                        fd_step: DEFAULT_FD_STEP,
                        richardson: false,
                        estimator: cfg,
                    };
                    traj.consistency.push((k, verify_kl_corollary(&case)?));
                }
            }
        }

        traj.iterates.push(Iterate {
            sigma: ch.sigma().clone(),
            objective,
            gradient: gradient.clone(),
            grad_norm,
        });
        guard.observe(objective, k)?;
        if grad_norm < opts.stop_tol {
            traj.converged = true;
            break;
        }
        if k == opts.max_iters {
            break;
        }
        let next = project_psd(&(ch.sigma().as_matrix() - gradient * opts.step_size), opts.psd_floor);
        ch = ch.with_sigma(next)?;
    }
    Ok(traj)
}

fn coordinate_directions(d: usize) -> Vec<SymmetricDirection> {
    let mut out = Vec::with_capacity(d * (d + 1) / 2);
    for i in 0..d {
        for j in i..d {
            out.push(SymmetricDirection::coordinate(d, i, j));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitIterate {
    pub mean: DVector<f64>,
    pub covariance: SymmetricPSDMatrix,
    /// `tr I_f(p || q_theta)`.
    pub objective: ScalarEstimate,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitTrajectory {
    pub iterates: Vec<FitIterate>,
    pub converged: bool,
}

impl FitTrajectory {
    pub fn last(&self) -> &FitIterate {
        self.iterates.last().expect("a trajectory holds at least one iterate")
    }
}

/// Parameter vector `(mu, upper triangle of C)`.
fn pack(mean: &DVector<f64>, cov: &DMatrix<f64>) -> Vec<f64> {
    let d = mean.len();
    let mut theta: Vec<f64> = mean.iter().copied().collect();
    for i in 0..d {
        for j in i..d {
            theta.push(cov[(i, j)]);
        }
    }
    theta
}

fn unpack(theta: &[f64], d: usize) -> (DVector<f64>, DMatrix<f64>) {
    let mean = DVector::from_column_slice(&theta[..d]);
    let mut cov = DMatrix::zeros(d, d);
    let mut idx = d;
    for i in 0..d {
        for j in i..d {
            cov[(i, j)] = theta[idx];
            cov[(j, i)] = theta[idx];
            idx += 1;
        }
    }
    (mean, cov)
}

fn model(theta: &[f64], d: usize) -> Result<GaussianMixture> {
    let (mean, cov) = unpack(theta, d);
    Ok(GaussianMixture::single(GaussianComponent::new(
        mean,
        SymmetricPSDMatrix::new(cov)?,
    )?))
}

/// Scalar objective with everything but the parameters frozen: the grid
/// for quadrature, the seed for Monte Carlo.
fn trace_objective(
    target: &GaussianMixture,
    q: &GaussianMixture,
    f: &FGenerator,
    cfg: &EstimatorConfig,
    grid: Option<&TensorGrid>,
) -> Result<ScalarEstimate> {
    let est = match grid {
        Some(g) => generalized_fisher_on_grid(target, q, f, g)?,
        None => generalized_fisher(target, q, f, cfg)?,
    };
    let d = est.dim();
    let se = if est.method.is_monte_carlo() {
        // Entry errors are correlated; their sum bounds the trace error.
        (0..d).map(|i| est.std_error[(i, i)]).sum()
    } else {
        0.0
    };
    Ok(ScalarEstimate {
        value: est.mean.trace(),
        std_error: se,
        n_samples: est.n_samples,
        method: match est.method {
            Method::Quadrature => crate::divergence::ScalarMethod::Quadrature,
            Method::ClosedForm => crate::divergence::ScalarMethod::ClosedForm,
            _ => crate::divergence::ScalarMethod::MonteCarlo,
        },
    })
}

/// Fits `q(.; mu, C)` to `target_p` by descent on `tr I_f(p || q)`.
///
/// Monte-Carlo gradients should use `mc_p`: the samples then come from the
/// target alone and are shared by all perturbed parameters.
pub fn fit_model_fsm(
    target_p: &GaussianMixture,
    family_init: &GaussianComponent,
    f: &FGenerator,
    opts: &DescentOptions,
) -> Result<FitTrajectory> {
    opts.validate()?;
    let d = target_p.dim();
    if family_init.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: family_init.dim(),
        });
    }
    let mut theta = pack(family_init.mean(), family_init.covariance().as_matrix());
    let mut guard = DivergenceGuard::new();
    let mut traj = FitTrajectory {
        iterates: Vec::new(),
        converged: false,
    };
    for k in 0..=opts.max_iters {
        let cfg = opts.estimator_at(k);
        let q = model(&theta, d)?;
        let grid = match cfg.method {
            Method::Quadrature => Some(TensorGrid::new(
                &Envelope::covering(target_p, &q),
                cfg.nodes_per_axis,
            )?),
            _ => None,
        };
        let objective = trace_objective(target_p, &q, f, &cfg, grid.as_ref())?;

        let mut grad = vec![0.0; theta.len()];
        for (i, g) in grad.iter_mut().enumerate() {
            let mut plus = theta.clone();
            plus[i] += THETA_FD_STEP;
            let mut minus = theta.clone();
            minus[i] -= THETA_FD_STEP;
            let fp = trace_objective(target_p, &model(&plus, d)?, f, &cfg, grid.as_ref())?.value;
            let fm = trace_objective(target_p, &model(&minus, d)?, f, &cfg, grid.as_ref())?.value;
            *g = (fp - fm) / (2.0 * THETA_FD_STEP);
        }
        let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();

        let (mean, cov) = unpack(&theta, d);
        traj.iterates.push(FitIterate {
            mean,
            covariance: SymmetricPSDMatrix::new(cov)?,
            objective,
            grad_norm,
        });
        guard.observe(objective, k)?;
        if grad_norm < opts.stop_tol {
            traj.converged = true;
            break;
        }
        if k == opts.max_iters {
            break;
        }
        for (t, g) in theta.iter_mut().zip(&grad) {
            *t -= opts.step_size * g;
        }
        let (mean, cov) = unpack(&theta, d);
        let cov = project_psd(&cov, opts.psd_floor);
        theta = pack(&mean, cov.as_matrix());
    }
    Ok(traj)
}
