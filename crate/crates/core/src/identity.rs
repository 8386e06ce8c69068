//! Finite-difference verification of the channel identities.
//!
//! Every check is a directional derivative along a unit symmetric direction
//! `V` of the effective noise covariance `C`:
//!
//! | check | left side | right side |
//! |-------|-----------|------------|
//! | heat equation | `d/de p_{C+eV}(y)` | `1/2 tr(Hess_y p(y) V)` |
//! | f-divergence gradient | `d/de D_f(p_{C+eV} \|\| q_{C+eV})` | `-1/2 tr(I_f V)` |
//! | KL gradient | same with `f = t ln t` | `-1/2 tr(I V)` |
//! | entropy gradient | `d/de h(Y_{C+eV})` | `1/2 tr(J V)` |
//!
//! Derivatives are central differences at `e = +-h`. The differences at
//! `+-2h` are evaluated alongside, giving a truncation estimate
//! `|D(2h) - D(h)| / 3` and, on request, the Richardson value
//! `(4 D(h) - D(2h)) / 3`.
//!
//! Monte-Carlo left sides reuse one standard draw for all four perturbed
//! laws, so their standard error is that of the paired difference. Right
//! sides use an independent stream (`seed + 1`).

use nalgebra::DVector;
use rayon::prelude::*;

use crate::channel::ChannelModel;
use crate::divergence::{
    divergence_mc_paired, divergence_on_grid, FGenerator, GeneratorKind, ScalarEstimate,
    ScalarMethod,
};
use crate::error::{Error, Result};
use crate::estimator::{EstimatorConfig, Method};
use crate::fisher::{fisher_information_contracted, generalized_fisher_contracted};
use crate::matrixcore::SymmetricDirection;
use crate::mixtures::{gaussian_kl, gaussian_relative_fisher, GaussianMixture, StandardDraw};
use crate::montecarlo;
use crate::quadrature::{Envelope, TensorGrid};

/// Absolute tolerance for quadrature routes.
pub const QUADRATURE_TOLERANCE: f64 = 1e-5;
/// Absolute tolerance when both sides are Gaussian closed forms.
pub const CLOSED_FORM_TOLERANCE: f64 = 1e-6;
/// Heat-equation tolerance is `HEAT_TOLERANCE_COEFF * h^2` (1e-6 at h = 1e-4)
/// plus a round-off allowance.
pub const HEAT_TOLERANCE_COEFF: f64 = 100.0;
/// Number of standard errors allowed on Monte-Carlo routes.
pub const SIGMA_MULTIPLIER: f64 = 3.0;
/// Default central-difference step in the effective covariance.
pub const DEFAULT_FD_STEP: f64 = 1e-4;

/// One Theorem-style check: sources, channel, generator and direction.
#[derive(Debug, Clone)]
pub struct VerificationCase {
    pub source_p: GaussianMixture,
    pub source_q: GaussianMixture,
    pub channel: ChannelModel,
    pub generator: FGenerator,
    pub direction: SymmetricDirection,
    pub fd_step: f64,
    pub richardson: bool,
    pub estimator: EstimatorConfig,
}

impl VerificationCase {
    pub fn validate(&self) -> Result<()> {
        if self.source_p.dim() != self.channel.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.channel.input_dim(),
                found: self.source_p.dim(),
            });
        }
        if self.source_q.dim() != self.channel.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.channel.input_dim(),
                found: self.source_q.dim(),
            });
        }
        if self.direction.dim() != self.channel.output_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.channel.output_dim(),
                found: self.direction.dim(),
            });
        }
        check_step(self.fd_step)?;
        for e in [-2.0, 2.0] {
            self.channel
                .perturb_effective(&self.direction, e * self.fd_step)?;
        }
        Ok(())
    }
}

/// Side information stored with each record.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub fd_step: f64,
    pub method: Method,
    pub n: usize,
    pub seed: u64,
    pub lhs_std_error: f64,
    pub rhs_std_error: f64,
    /// `|D(2h) - D(h)| / 3`.
    pub truncation_estimate: f64,
    /// Right side under an alternative constant (entropy check: `tr(J V)`).
    pub alternative_rhs: Option<f64>,
    pub alternative_residual: Option<f64>,
    /// Measured ratio `lhs / tr(J V)` (entropy check) or raw-`Sigma`
    /// derivative over `1/2 tr(Hess p V)` (heat check).
    pub measured_constant: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationRecord {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub diagnostics: Diagnostics,
}

impl VerificationRecord {
    fn new(lhs: f64, rhs: f64, tolerance: f64, diagnostics: Diagnostics) -> Self {
        let residual = (lhs - rhs).abs();
        Self {
            lhs,
            rhs,
            residual,
            tolerance,
            passed: residual <= tolerance,
            diagnostics,
        }
    }
}

fn check_step(h: f64) -> Result<()> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidArgument(format!("finite-difference step must be positive, got {h}")));
    }
    Ok(())
}

/// Offsets at which perturbed laws are evaluated: `+h, -h, +2h, -2h`.
fn offsets(h: f64) -> [f64; 4] {
    [h, -h, 2.0 * h, -2.0 * h]
}

/// Central differences from values at [`offsets`]: `(D(h), D(2h))`.
fn differences(v: &[f64; 4], h: f64) -> (f64, f64) {
    ((v[0] - v[1]) / (2.0 * h), (v[2] - v[3]) / (4.0 * h))
}

/// Coefficient rows producing `D(h)`, `D(2h)` and the Richardson value.
fn difference_rows(h: f64) -> Vec<Vec<f64>> {
    let a = 1.0 / (2.0 * h);
    let b = 1.0 / (4.0 * h);
    vec![
        vec![a, -a, 0.0, 0.0],
        vec![0.0, 0.0, b, -b],
        vec![4.0 / 3.0 * a, -4.0 / 3.0 * a, -b / 3.0, b / 3.0],
    ]
}

/// `(derivative, truncation estimate)`.
fn combine(d1: f64, d2: f64, richardson: bool) -> (f64, f64) {
    let trunc = (d2 - d1).abs() / 3.0;
    if richardson {
        ((4.0 * d1 - d2) / 3.0, trunc)
    } else {
        (d1, trunc)
    }
}

fn output_laws(
    source: &GaussianMixture,
    ch: &ChannelModel,
    v: &SymmetricDirection,
    h: f64,
) -> Result<Vec<GaussianMixture>> {
    offsets(h)
        .iter()
        .map(|&e| ch.perturb_effective(v, e)?.pushforward(source))
        .collect()
}

/// Central difference of the output density at `y` along `V` in the
/// effective covariance.
pub fn dir_derivative_density(
    source: &GaussianMixture,
    ch: &ChannelModel,
    y: &DVector<f64>,
    v: &SymmetricDirection,
    h: f64,
) -> Result<f64> {
    check_step(h)?;
    let plus = ch.perturb_effective(v, h)?.pushforward(source)?.logpdf(y)?.exp();
    let minus = ch.perturb_effective(v, -h)?.pushforward(source)?.logpdf(y)?.exp();
    Ok((plus - minus) / (2.0 * h))
}

/// Ratio of the raw-`Sigma` directional derivative of `p(y)` to
/// `1/2 tr(Hess_y p(y) V)`. By the chain rule through `C = (1 - a) Sigma`
/// this is `1 - a` in diffusion form and 1 in additive form.
pub fn measure_beta_scaling(
    source: &GaussianMixture,
    ch: &ChannelModel,
    y: &DVector<f64>,
    v: &SymmetricDirection,
    h: f64,
) -> Result<f64> {
    check_step(h)?;
    let plus = ch.perturb_sigma(v, h)?.pushforward(source)?.logpdf(y)?.exp();
    let minus = ch.perturb_sigma(v, -h)?.pushforward(source)?.logpdf(y)?.exp();
    let raw = (plus - minus) / (2.0 * h);
    let hess = ch.pushforward(source)?.density_hessian(y)?;
    Ok(raw / (0.5 * v.contract(&hess)))
}

/// Matrix heat equation at a point: `d/dC p(y) = 1/2 Hess_y p(y)`.
pub fn verify_heat_equation(
    source: &GaussianMixture,
    ch: &ChannelModel,
    y: &DVector<f64>,
    v: &SymmetricDirection,
    h: f64,
) -> Result<VerificationRecord> {
    check_step(h)?;
    let laws = output_laws(source, ch, v, h)?;
    let vals: Vec<f64> = laws
        .iter()
        .map(|g| g.logpdf(y).map(f64::exp))
        .collect::<Result<_>>()?;
    let (d1, d2) = differences(&[vals[0], vals[1], vals[2], vals[3]], h);
    let (lhs, trunc) = combine(d1, d2, false);
    let center = ch.pushforward(source)?;
    let density = center.logpdf(y)?.exp();
    let rhs = 0.5 * v.contract(&center.density_hessian(y)?);
    let roundoff = 64.0 * f64::EPSILON * density / h;
    let tolerance = HEAT_TOLERANCE_COEFF * h * h + roundoff;
    let scaling = if rhs.abs() > 1e-12 {
        measure_beta_scaling(source, ch, y, v, h).ok()
    } else {
        None
    };
    Ok(VerificationRecord::new(
        lhs,
        rhs,
        tolerance,
        Diagnostics {
            fd_step: h,
            method: Method::ClosedForm,
            n: 0,
            seed: 0,
            lhs_std_error: 0.0,
            rhs_std_error: 0.0,
            truncation_estimate: trunc,
            alternative_rhs: None,
            alternative_residual: None,
            measured_constant: scaling,
        },
    ))
}

/// Left side of the divergence-gradient check: `(value, std error, truncation)`.
fn divergence_derivative(
    case: &VerificationCase,
    ps: &[GaussianMixture],
    qs: &[GaussianMixture],
    center: (&GaussianMixture, &GaussianMixture),
) -> Result<(f64, f64, f64)> {
    let h = case.fd_step;
    let cfg = &case.estimator;
    match cfg.method {
        Method::Quadrature => {
            let grid = TensorGrid::new(&Envelope::covering(center.0, center.1), cfg.nodes_per_axis)?;
            let mut v = [0.0; 4];
            for (slot, (p, q)) in v.iter_mut().zip(ps.iter().zip(qs)) {
                *slot = divergence_on_grid(p, q, &case.generator, &grid)?.value;
            }
            let (d1, d2) = differences(&v, h);
            let (lhs, trunc) = combine(d1, d2, case.richardson);
            Ok((lhs, 0.0, trunc))
        }
        Method::MonteCarloP | Method::MonteCarloQ => {
            let pairs: Vec<_> = ps.iter().cloned().zip(qs.iter().cloned()).collect();
            let m = divergence_mc_paired(&pairs, &case.generator, cfg.n, cfg.seed, &difference_rows(h))?;
            let (d1, d2) = (m.mean()[0], m.mean()[1]);
            let (lhs, trunc) = combine(d1, d2, case.richardson);
            let se = m.std_error()[if case.richardson { 2 } else { 0 }];
            Ok((lhs, se, trunc))
        }
        Method::ClosedForm => {
            if case.generator.kind() != GeneratorKind::Kl {
                return Err(Error::InvalidArgument(
                    "closed-form route is only available for the KL generator".into(),
                ));
            }
            let mut v = [0.0; 4];
            for (slot, (p, q)) in v.iter_mut().zip(ps.iter().zip(qs)) {
                *slot = match (p.components(), q.components()) {
                    ([a], [b]) => gaussian_kl(a, b)?,
                    _ => {
                        return Err(Error::InvalidArgument(
                            "closed-form route needs single Gaussian sources".into(),
                        ))
                    }
                };
            }
            let (d1, d2) = differences(&v, h);
            let (lhs, trunc) = combine(d1, d2, case.richardson);
            Ok((lhs, 0.0, trunc))
        }
    }
}

/// `d/dC D_f(p_Y || q_Y) = -1/2 I_f(p_Y || q_Y)`, contracted on `V`.
pub fn verify_theorem1(case: &VerificationCase) -> Result<VerificationRecord> {
    case.validate()?;
    let h = case.fd_step;
    let ps = output_laws(&case.source_p, &case.channel, &case.direction, h)?;
    let qs = output_laws(&case.source_q, &case.channel, &case.direction, h)?;
    let p_y = case.channel.pushforward(&case.source_p)?;
    let q_y = case.channel.pushforward(&case.source_q)?;

    let (lhs, lhs_se, trunc) = divergence_derivative(case, &ps, &qs, (&p_y, &q_y))?;

    let rhs_cfg = if case.estimator.method.is_monte_carlo() {
        case.estimator.with_seed(case.estimator.seed.wrapping_add(1))
    } else {
        case.estimator
    };
    let contraction = match case.estimator.method {
        Method::ClosedForm => match (p_y.components(), q_y.components()) {
            ([a], [b]) => ScalarEstimate::exact(
                case.direction.contract(&gaussian_relative_fisher(a, b)?),
                ScalarMethod::ClosedForm,
            ),
            _ => unreachable!("checked by the left side"),
        },
        _ => generalized_fisher_contracted(&p_y, &q_y, &case.generator, &case.direction, &rhs_cfg)?.1,
    };
    let rhs = -0.5 * contraction.value;
    let rhs_se = 0.5 * contraction.std_error;

    let tolerance = match case.estimator.method {
        Method::Quadrature => QUADRATURE_TOLERANCE,
        Method::ClosedForm => CLOSED_FORM_TOLERANCE,
        _ => trunc + SIGMA_MULTIPLIER * (lhs_se * lhs_se + rhs_se * rhs_se).sqrt(),
    };
    Ok(VerificationRecord::new(
        lhs,
        rhs,
        tolerance,
        Diagnostics {
            fd_step: h,
            method: case.estimator.method,
            n: case.estimator.n,
            seed: case.estimator.seed,
            lhs_std_error: lhs_se,
            rhs_std_error: rhs_se,
            truncation_estimate: trunc,
            alternative_rhs: None,
            alternative_residual: None,
            measured_constant: None,
        },
    ))
}

/// The KL instance of [`verify_theorem1`], where `I_f` is the relative
/// Fisher matrix.
pub fn verify_kl_corollary(case: &VerificationCase) -> Result<VerificationRecord> {
    let mut kl_case = case.clone();
    kl_case.generator = FGenerator::kl();
    verify_theorem1(&kl_case)
}

/// Differential entropy `h(p) = -E_p[ln p]`.
pub fn differential_entropy(p: &GaussianMixture, cfg: &EstimatorConfig) -> Result<ScalarEstimate> {
    match cfg.method {
        Method::MonteCarloP | Method::MonteCarloQ => {
            crate::divergence::check_samples(cfg.n)?;
            let m = montecarlo::estimate(cfg.n, cfg.seed, 1, |rng, out| {
                out[0] = -p.logpdf(&p.sample_one(rng))?;
                Ok(())
            })?;
            Ok(ScalarEstimate {
                value: m.mean()[0],
                std_error: m.std_error()[0],
                n_samples: cfg.n,
                method: ScalarMethod::MonteCarlo,
            })
        }
        Method::Quadrature => {
            let grid = TensorGrid::new(&Envelope::single(p), cfg.nodes_per_axis)?;
            entropy_on_grid(p, &grid)
        }
        Method::ClosedForm => match p.components() {
            [c] => Ok(ScalarEstimate::exact(c.entropy(), ScalarMethod::ClosedForm)),
            _ => Err(Error::InvalidArgument(
                "closed-form entropy needs a single Gaussian".into(),
            )),
        },
    }
}

fn entropy_on_grid(p: &GaussianMixture, grid: &TensorGrid) -> Result<ScalarEstimate> {
    let v = grid.integrate(1, |y, out| {
        let lp = p.logpdf(y)?;
        out[0] = -lp.exp() * lp;
        Ok(())
    })?;
    Ok(ScalarEstimate {
        value: v[0],
        std_error: 0.0,
        n_samples: grid.len(),
        method: ScalarMethod::Quadrature,
    })
}

/// Entropy gradient check. The record passes against `1/2 tr(J V)`; the
/// constant-one alternative `tr(J V)` and the measured constant
/// `lhs / tr(J V)` are kept in the diagnostics.
pub fn verify_debruijn(
    source: &GaussianMixture,
    ch: &ChannelModel,
    v: &SymmetricDirection,
    h: f64,
    cfg: &EstimatorConfig,
) -> Result<VerificationRecord> {
    check_step(h)?;
    let laws = output_laws(source, ch, v, h)?;
    let center = ch.pushforward(source)?;
    let (d1, d2, lhs_se) = match cfg.method {
        Method::Quadrature => {
            let grid = TensorGrid::new(&Envelope::single(&center), cfg.nodes_per_axis)?;
            let mut vals = [0.0; 4];
            for (slot, law) in vals.iter_mut().zip(&laws) {
                *slot = entropy_on_grid(law, &grid)?.value;
            }
            let (d1, d2) = differences(&vals, h);
            (d1, d2, 0.0)
        }
        Method::MonteCarloP | Method::MonteCarloQ => {
            crate::divergence::check_samples(cfg.n)?;
            let rows = difference_rows(h);
            let d = center.dim();
            let m = montecarlo::estimate(cfg.n, cfg.seed, 2, |rng, out| {
                let draw = StandardDraw::draw(rng, d);
                let mut vals = [0.0; 4];
                for (slot, law) in vals.iter_mut().zip(&laws) {
                    *slot = -law.logpdf(&law.map_draw(&draw))?;
                }
                for (o, row) in out.iter_mut().zip(&rows) {
                    *o = row.iter().zip(&vals).map(|(a, b)| a * b).sum();
                }
                Ok(())
            })?;
            (m.mean()[0], m.mean()[1], m.std_error()[0])
        }
        Method::ClosedForm => {
            let mut vals = [0.0; 4];
            for (slot, law) in vals.iter_mut().zip(&laws) {
                *slot = differential_entropy(law, cfg)?.value;
            }
            let (d1, d2) = differences(&vals, h);
            (d1, d2, 0.0)
        }
    };
    let (lhs, trunc) = combine(d1, d2, false);
    let rhs_cfg = if cfg.method.is_monte_carlo() {
        cfg.with_seed(cfg.seed.wrapping_add(1))
    } else {
        *cfg
    };
    let (_, tr_jv) = fisher_information_contracted(&center, v, &rhs_cfg)?;
    let rhs = 0.5 * tr_jv.value;
    let rhs_se = 0.5 * tr_jv.std_error;
    let tolerance = match cfg.method {
        Method::Quadrature => QUADRATURE_TOLERANCE,
        Method::ClosedForm => CLOSED_FORM_TOLERANCE,
        _ => trunc + SIGMA_MULTIPLIER * (lhs_se * lhs_se + rhs_se * rhs_se).sqrt(),
    };
    let mut record = VerificationRecord::new(
        lhs,
        rhs,
        tolerance,
        Diagnostics {
            fd_step: h,
            method: cfg.method,
            n: cfg.n,
            seed: cfg.seed,
            lhs_std_error: lhs_se,
            rhs_std_error: rhs_se,
            truncation_estimate: trunc,
            alternative_rhs: Some(tr_jv.value),
            alternative_residual: Some((lhs - tr_jv.value).abs()),
            measured_constant: None,
        },
    );
    if tr_jv.value.abs() > 0.0 {
        record.diagnostics.measured_constant = Some(lhs / tr_jv.value);
    }
    Ok(record)
}

/// Which identity a batch of cases checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckKind {
    Theorem1,
    KlCorollary,
    DeBruijn,
}

/// Runs independent cases in parallel; results keep the input order.
pub fn run_cases(cases: &[VerificationCase], kind: CheckKind) -> Vec<Result<VerificationRecord>> {
    cases
        .par_iter()
        .map(|c| match kind {
            CheckKind::Theorem1 => verify_theorem1(c),
            CheckKind::KlCorollary => verify_kl_corollary(c),
            CheckKind::DeBruijn => verify_debruijn(
                &c.source_p,
                &c.channel,
                &c.direction,
                c.fd_step,
                &c.estimator,
            ),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrixcore::{make_direction, SymmetricPSDMatrix};
    use crate::mixtures::GaussianComponent;
    use nalgebra::{dvector, DMatrix};
    use std::f64::consts::PI;

    fn n1(mean: f64, var: f64) -> GaussianMixture {
        GaussianMixture::single(GaussianComponent::from_parts(&[mean], &[vec![var]]).unwrap())
    }

    fn unit1() -> SymmetricDirection {
        make_direction(&DMatrix::identity(1, 1)).unwrap()
    }

    fn additive(var: f64) -> ChannelModel {
        ChannelModel::additive_identity(SymmetricPSDMatrix::from_diagonal(&[var]).unwrap()).unwrap()
    }

    #[test]
    fn density_derivative_in_variance() {
        let src = n1(0.0, 1e-8);
        let d = dir_derivative_density(&src, &additive(1.0), &dvector![0.0], &unit1(), 1e-4).unwrap();
        let expect = -0.5 / (2.0 * PI).sqrt() * (1.0 + 1e-8_f64).powf(-1.5);
        assert!((d - expect).abs() < 1e-8, "{d} vs {expect}");
        assert!((d + 0.199_471).abs() < 1e-5);
    }

    #[test]
    fn off_diagonal_derivative_vanishes_by_symmetry() {
        let src = GaussianMixture::single(GaussianComponent::standard(2));
        let ch = ChannelModel::additive_identity(SymmetricPSDMatrix::identity(2)).unwrap();
        let v = SymmetricDirection::coordinate(2, 0, 1);
        let d = dir_derivative_density(&src, &ch, &dvector![0.0, 0.0], &v, 1e-4).unwrap();
        assert!(d.abs() < 1e-14);
    }

    #[test]
    fn heat_equation_gaussian_case() {
        let rec = verify_heat_equation(&n1(0.0, 1.0), &additive(1.0), &dvector![0.0], &unit1(), 1e-4).unwrap();
        // Output N(0, 2): d/dv N(0; 0, v) at v = 2 is -1/2 (2 pi)^{-1/2} 2^{-3/2}.
        let exact = -0.5 / (2.0 * PI).sqrt() * 2.0_f64.powf(-1.5);
        assert!((rec.rhs - exact).abs() < 1e-15);
        assert!(rec.residual < 1e-6 && rec.passed);
        assert!((rec.diagnostics.measured_constant.unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn heat_equation_truncation_is_second_order() {
        let src = GaussianMixture::new(vec![0.3, 0.7], vec![
            GaussianComponent::from_parts(&[-1.0], &[vec![0.4]]).unwrap(),
            GaussianComponent::from_parts(&[0.8], &[vec![0.9]]).unwrap(),
        ])
        .unwrap();
        let ch = additive(0.7);
        let y = dvector![0.3];
        let a = verify_heat_equation(&src, &ch, &y, &unit1(), 1e-2).unwrap();
        let b = verify_heat_equation(&src, &ch, &y, &unit1(), 1e-3).unwrap();
        let ratio = a.residual / b.residual;
        assert!((80.0..120.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn beta_scaling_in_diffusion_form() {
        let src = n1(0.5, 1.0);
        let ch = ChannelModel::new(DMatrix::identity(1, 1), 0.6, SymmetricPSDMatrix::identity(1)).unwrap();
        let rec = verify_heat_equation(&src, &ch, &dvector![0.2], &unit1(), 1e-4).unwrap();
        assert!(rec.passed, "{rec:?}");
        let scale = rec.diagnostics.measured_constant.unwrap();
        assert!((scale - 0.4).abs() < 1e-6, "{scale}");
    }

    fn case(p: GaussianMixture, q: GaussianMixture, f: FGenerator, cfg: EstimatorConfig) -> VerificationCase {
        VerificationCase {
            channel: additive(1.0),
            source_p: p,
            source_q: q,
            generator: f,
            direction: unit1(),
            fd_step: 1e-4,
            richardson: false,
            estimator: cfg,
        }
    }

    #[test]
    fn identical_sources_give_zero() {
        let c = case(n1(0.0, 1.0), n1(0.0, 1.0), FGenerator::kl(), EstimatorConfig::quadrature(32));
        let r = verify_theorem1(&c).unwrap();
        assert!(r.lhs.abs() < 1e-9 && r.rhs.abs() < 1e-12 && r.passed);
        let c = case(n1(0.0, 1.0), n1(0.0, 1.0), FGenerator::kl(), EstimatorConfig::monte_carlo_p(1000, 1));
        let r = verify_theorem1(&c).unwrap();
        assert_eq!(r.lhs, 0.0);
        assert_eq!(r.rhs, 0.0);
    }

    #[test]
    fn mean_shift_kl_corollary() {
        // Point-like sources N(0, eps), N(0.5, eps) through Y = X + N(0, s):
        // KL = 1/8 / (s + eps), gradient -1/8 / (s + eps)^2.
        let eps = 1e-9;
        let c = case(n1(0.0, eps), n1(0.5, eps), FGenerator::kl(), EstimatorConfig::closed_form());
        let r = verify_kl_corollary(&c).unwrap();
        let s = 1.0 + eps;
        let exact = -0.125 / (s * s);
        assert!((r.rhs - exact).abs() < 1e-12);
        assert!(r.residual < 1e-8, "{r:?}");
    }

    #[test]
    fn kl_record_equals_theorem_record() {
        let c = case(n1(0.0, 1.0), n1(0.3, 1.5), FGenerator::new(GeneratorKind::ChiSquared).unwrap(), EstimatorConfig::monte_carlo_p(20_000, 5));
        let mut kl = c.clone();
        kl.generator = FGenerator::kl();
        assert_eq!(verify_kl_corollary(&c).unwrap(), verify_theorem1(&kl).unwrap());
    }

    #[test]
    fn entropy_values() {
        let cfg = EstimatorConfig::quadrature(64);
        let h = differential_entropy(&n1(0.0, 1.0), &cfg).unwrap();
        assert!((h.value - 1.418_938_533_204_672_7).abs() < 1e-10);
        let p2 = GaussianMixture::single(
            GaussianComponent::from_parts(&[0.0, 0.0], &[vec![1.0, 0.0], vec![0.0, 4.0]]).unwrap(),
        );
        let expect = 0.5 * ((2.0 * PI * std::f64::consts::E).powi(2) * 4.0).ln();
        assert!((differential_entropy(&p2, &cfg).unwrap().value - expect).abs() < 1e-10);
        let mc = differential_entropy(&p2, &EstimatorConfig::monte_carlo_p(200_000, 2)).unwrap();
        assert!((mc.value - expect).abs() < 3.0 * mc.std_error);
    }

    #[test]
    fn debruijn_gaussian_constant_is_half() {
        let rec = verify_debruijn(&n1(0.0, 0.5), &additive(1.0), &unit1(), 1e-4, &EstimatorConfig::quadrature(64)).unwrap();
        // h = 1/2 ln(2 pi e (s + v)), dh/dv = 1/(2 (s + v)); J = 1/(s + v).
        assert!((rec.lhs - 1.0 / 3.0).abs() < 1e-8);
        assert!(rec.passed);
        assert!((rec.diagnostics.measured_constant.unwrap() - 0.5).abs() < 1e-6);
        assert!(rec.diagnostics.alternative_residual.unwrap() > 0.3);
    }

    #[test]
    fn rejects_invalid_steps() {
        let c = case(n1(0.0, 1.0), n1(0.0, 1.0), FGenerator::kl(), EstimatorConfig::quadrature(32));
        let mut bad = c.clone();
        bad.fd_step = 0.0;
        assert!(verify_theorem1(&bad).is_err());
        let mut bad = c;
        bad.fd_step = 0.6;
        assert!(matches!(verify_theorem1(&bad), Err(Error::NotPositiveDefinite(_))));
    }
}
