//! f-generators and estimators of `D_f(P || Q) = int f(dP/dQ) dQ`.
//!
//! Generators are evaluated from log-ratios `ln(p/q)` so that the Monte-Carlo
//! and quadrature routes survive ratios far from one. Ratios entering the
//! Monte-Carlo route are clamped to `[1e-300, 1e300]`; generators with
//! `f(0+) = +inf` report [`Error::NonFiniteEstimate`] instead of truncating.

use std::f64::consts::LN_2;
use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::estimator::{EstimatorConfig, Method};
use crate::mixtures::{clamp_log_ratio, gaussian_kl, GaussianMixture, StandardDraw, RATIO_MIN};
use crate::montecarlo::{self, Moments};
use crate::quadrature::{Envelope, TensorGrid};

/// Smallest Monte-Carlo sample size accepted by the estimators.
pub const MIN_SAMPLES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GeneratorKind {
    /// `t ln t`
    Kl,
    /// `-ln t`
    ReverseKl,
    /// `t ln(2t/(1+t)) + ln(2/(1+t))`
    JensenShannon,
    /// `(sqrt t - 1)^2`
    SquaredHellinger,
    /// `(t - 1)^2`
    ChiSquared,
    /// `(t^a - a t + a - 1) / (a (a - 1))`
    Alpha(f64),
}

impl GeneratorKind {
    /// One representative of every family, with `alpha` for the alpha kind.
    pub fn all(alpha: f64) -> [GeneratorKind; 6] {
        [
            GeneratorKind::Kl,
            GeneratorKind::ReverseKl,
            GeneratorKind::JensenShannon,
            GeneratorKind::SquaredHellinger,
            GeneratorKind::ChiSquared,
            GeneratorKind::Alpha(alpha),
        ]
    }
}

impl fmt::Display for GeneratorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeneratorKind::Kl => f.write_str("kl"),
            GeneratorKind::ReverseKl => f.write_str("reverse_kl"),
            GeneratorKind::JensenShannon => f.write_str("js"),
            GeneratorKind::SquaredHellinger => f.write_str("hellinger2"),
            GeneratorKind::ChiSquared => f.write_str("chi2"),
            GeneratorKind::Alpha(a) => write!(f, "alpha:{a}"),
        }
    }
}

impl FromStr for GeneratorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kl" => Ok(GeneratorKind::Kl),
            "reverse_kl" => Ok(GeneratorKind::ReverseKl),
            "js" => Ok(GeneratorKind::JensenShannon),
            "hellinger2" => Ok(GeneratorKind::SquaredHellinger),
            "chi2" => Ok(GeneratorKind::ChiSquared),
            other => match other.strip_prefix("alpha:") {
                Some(v) => v
                    .trim()
                    .parse::<f64>()
                    .map(GeneratorKind::Alpha)
                    .map_err(|_| Error::InvalidArgument(format!("cannot parse alpha in `{other}`"))),
                None => Err(Error::InvalidArgument(format!("unknown generator `{other}`"))),
            },
        }
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// A strictly convex generator with `f(1) = 0` and analytic `f'`, `f''`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FGenerator {
    kind: GeneratorKind,
}

impl FGenerator {
    pub fn new(kind: GeneratorKind) -> Result<Self> {
        if let GeneratorKind::Alpha(a) = kind {
            if !a.is_finite() || a == 0.0 || a == 1.0 {
                return Err(Error::InvalidAlpha(a));
            }
        }
        Ok(Self { kind })
    }

    pub fn kl() -> Self {
        Self {
            kind: GeneratorKind::Kl,
        }
    }

    pub fn kind(&self) -> GeneratorKind {
        self.kind
    }

    pub fn name(&self) -> String {
        self.kind.to_string()
    }

    /// Whether `f(0+) = +inf`.
    pub fn infinite_at_zero(&self) -> bool {
        match self.kind {
            GeneratorKind::ReverseKl => true,
            GeneratorKind::Alpha(a) => a < 0.0,
            _ => false,
        }
    }

    pub fn f(&self, t: f64) -> f64 {
        match self.kind {
            GeneratorKind::Kl => t * t.ln(),
            GeneratorKind::ReverseKl => -t.ln(),
            GeneratorKind::JensenShannon => {
                t * (2.0 * t / (1.0 + t)).ln() + (2.0 / (1.0 + t)).ln()
            }
            GeneratorKind::SquaredHellinger => (t.sqrt() - 1.0).powi(2),
            GeneratorKind::ChiSquared => (t - 1.0).powi(2),
            GeneratorKind::Alpha(a) => ((t.powf(a) - 1.0) - a * (t - 1.0)) / (a * (a - 1.0)),
        }
    }

    pub fn f_prime(&self, t: f64) -> f64 {
        match self.kind {
            GeneratorKind::Kl => t.ln() + 1.0,
            GeneratorKind::ReverseKl => -1.0 / t,
            GeneratorKind::JensenShannon => (2.0 * t / (1.0 + t)).ln(),
            GeneratorKind::SquaredHellinger => 1.0 - 1.0 / t.sqrt(),
            GeneratorKind::ChiSquared => 2.0 * (t - 1.0),
            GeneratorKind::Alpha(a) => (t.powf(a - 1.0) - 1.0) / (a - 1.0),
        }
    }

    pub fn f_second(&self, t: f64) -> f64 {
        self.log_f_second_from_log_ratio(t.ln()).exp()
    }

    /// `ln f''(e^lr)`, exact for every kind.
    pub fn log_f_second_from_log_ratio(&self, lr: f64) -> f64 {
        match self.kind {
            GeneratorKind::Kl => -lr,
            GeneratorKind::ReverseKl => -2.0 * lr,
            GeneratorKind::JensenShannon => -lr - softplus(lr),
            GeneratorKind::SquaredHellinger => -LN_2 - 1.5 * lr,
            GeneratorKind::ChiSquared => LN_2,
            GeneratorKind::Alpha(a) => (a - 2.0) * lr,
        }
    }

    /// `f(e^lr)` evaluated without forming `e^lr` where possible.
    pub fn f_from_log_ratio(&self, lr: f64) -> f64 {
        match self.kind {
            GeneratorKind::Kl => lr.exp() * lr,
            GeneratorKind::ReverseKl => -lr,
            GeneratorKind::JensenShannon => {
                if lr.abs() < 30.0 {
                    self.f(lr.exp())
                } else {
                    let sp = softplus(lr);
                    lr.exp() * (LN_2 + lr - sp) + (LN_2 - sp)
                }
            }
            GeneratorKind::SquaredHellinger => (0.5 * lr).exp_m1().powi(2),
            GeneratorKind::ChiSquared => lr.exp_m1().powi(2),
            GeneratorKind::Alpha(a) => ((a * lr).exp_m1() - a * lr.exp_m1()) / (a * (a - 1.0)),
        }
    }

    /// `q f(p/q)` from `ln p` and `ln q`, stable when both densities are
    /// tiny. Used by the quadrature route.
    pub fn q_times_f(&self, lp: f64, lq: f64) -> f64 {
        let lr = lp - lq;
        match self.kind {
            GeneratorKind::Kl => lp.exp() * lr,
            GeneratorKind::ReverseKl => -lq.exp() * lr,
            GeneratorKind::JensenShannon => {
                if lr.abs() < 30.0 {
                    lq.exp() * self.f(lr.exp())
                } else {
                    let sp = softplus(lr);
                    lp.exp() * (LN_2 + lr - sp) + lq.exp() * (LN_2 - sp)
                }
            }
            GeneratorKind::SquaredHellinger => ((0.5 * lp).exp() - (0.5 * lq).exp()).powi(2),
            GeneratorKind::ChiSquared => {
                if lr <= 300.0 {
                    lq.exp() * lr.exp_m1().powi(2)
                } else {
                    (lq + 2.0 * lr.exp_m1().ln()).exp()
                }
            }
            GeneratorKind::Alpha(a) => {
                ((lq + a * lr).exp() - lq.exp() - a * (lp.exp() - lq.exp())) / (a * (a - 1.0))
            }
        }
    }

    /// Monte-Carlo summand `f(p/q)` at a sample drawn from `q`.
    pub(crate) fn mc_summand(&self, lr: f64) -> Result<f64> {
        if self.infinite_at_zero() && lr < RATIO_MIN.ln() {
            return Err(Error::NonFiniteEstimate(format!(
                "{} generator diverges at ratio exp({lr:.1}) below the clamp",
                self.kind
            )));
        }
        Ok(self.f_from_log_ratio(clamp_log_ratio(lr)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarMethod {
    MonteCarlo,
    Quadrature,
    ClosedForm,
}

impl ScalarMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScalarMethod::MonteCarlo => "monte_carlo",
            ScalarMethod::Quadrature => "quadrature",
            ScalarMethod::ClosedForm => "closed_form",
        }
    }
}

/// A scalar estimate with its standard error (zero for deterministic routes).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_samples: usize,
    pub method: ScalarMethod,
}

impl ScalarEstimate {
    pub fn exact(value: f64, method: ScalarMethod) -> Self {
        Self {
            value,
            std_error: 0.0,
            n_samples: 0,
            method,
        }
    }

    pub(crate) fn from_moments(m: &Moments, index: usize) -> Self {
        Self {
            value: m.mean()[index],
            std_error: m.std_error()[index],
            n_samples: m.count() as usize,
            method: ScalarMethod::MonteCarlo,
        }
    }
}

pub(crate) fn check_same_dim(p: &GaussianMixture, q: &GaussianMixture) -> Result<()> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            found: q.dim(),
        });
    }
    Ok(())
}

pub(crate) fn check_samples(n: usize) -> Result<()> {
    if n < MIN_SAMPLES {
        return Err(Error::InvalidArgument(format!(
            "Monte-Carlo estimators need n >= {MIN_SAMPLES}, got {n}"
        )));
    }
    Ok(())
}

/// `D_f(p || q)` by averaging `f(p(y)/q(y))` over `y ~ q`.
pub fn divergence_mc(
    p: &GaussianMixture,
    q: &GaussianMixture,
    f: &FGenerator,
    n: usize,
    seed: u64,
) -> Result<ScalarEstimate> {
    let m = divergence_mc_paired(&[(p.clone(), q.clone())], f, n, seed, &[vec![1.0]])?;
    Ok(ScalarEstimate::from_moments(&m, 0))
}

/// Paired Monte-Carlo divergences over a family of `(p_j, q_j)`.
///
/// One standard draw per sample is pushed through every `q_j` (common random
/// numbers), and each output column `i` averages `sum_j coeffs[i][j] f_j`.
/// All `q_j` must share component count and dimension.
pub fn divergence_mc_paired(
    pairs: &[(GaussianMixture, GaussianMixture)],
    f: &FGenerator,
    n: usize,
    seed: u64,
    coeffs: &[Vec<f64>],
) -> Result<Moments> {
    check_samples(n)?;
    let (p0, q0) = pairs
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty divergence family".into()))?;
    for (p, q) in pairs {
        check_same_dim(p, q)?;
        if q.dim() != q0.dim() || q.len() != q0.len() || p.dim() != p0.dim() {
            return Err(Error::InvalidArgument(
                "paired divergences need matching dimensions and component counts".into(),
            ));
        }
    }
    if coeffs.iter().any(|c| c.len() != pairs.len()) {
        return Err(Error::InvalidArgument("coefficient rows must match the family size".into()));
    }
    let d = q0.dim();
    montecarlo::estimate(n, seed, coeffs.len(), |rng, out| {
        let draw = StandardDraw::draw(rng, d);
        let mut vals = Vec::with_capacity(pairs.len());
        for (p, q) in pairs {
            let y = q.map_draw(&draw);
            let lr = p.logpdf(&y)? - q.logpdf(&y)?;
            vals.push(f.mc_summand(lr)?);
        }
        for (o, c) in out.iter_mut().zip(coeffs) {
            *o = c.iter().zip(&vals).map(|(a, b)| a * b).sum();
        }
        Ok(())
    })
}

/// `D_f(p || q)` through the configured route. Both Monte-Carlo routes
/// sample from `q`; the closed form covers KL between single Gaussians.
pub fn divergence(
    p: &GaussianMixture,
    q: &GaussianMixture,
    f: &FGenerator,
    cfg: &EstimatorConfig,
) -> Result<ScalarEstimate> {
    match cfg.method {
        Method::MonteCarloP | Method::MonteCarloQ => divergence_mc(p, q, f, cfg.n, cfg.seed),
        Method::Quadrature => divergence_quadrature(p, q, f, cfg.nodes_per_axis),
        Method::ClosedForm => match (f.kind(), p.components(), q.components()) {
            (GeneratorKind::Kl, [a], [b]) => {
                Ok(ScalarEstimate::exact(gaussian_kl(a, b)?, ScalarMethod::ClosedForm))
            }
            _ => Err(Error::InvalidArgument(
                "closed-form divergence needs the KL generator and single Gaussians".into(),
            )),
        },
    }
}

/// `D_f(p || q)` by tensor Gauss-Hermite quadrature over an envelope that
/// covers both mixtures.
pub fn divergence_quadrature(
    p: &GaussianMixture,
    q: &GaussianMixture,
    f: &FGenerator,
    nodes_per_axis: usize,
) -> Result<ScalarEstimate> {
    check_same_dim(p, q)?;
    let grid = TensorGrid::new(&Envelope::covering(p, q), nodes_per_axis)?;
    divergence_on_grid(p, q, f, &grid)
}

/// Same as [`divergence_quadrature`] on a caller-supplied grid.
pub fn divergence_on_grid(
    p: &GaussianMixture,
    q: &GaussianMixture,
    f: &FGenerator,
    grid: &TensorGrid,
) -> Result<ScalarEstimate> {
    check_same_dim(p, q)?;
    if grid.nodes.first().map(DVector::len) != Some(p.dim()) {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            found: grid.nodes.first().map_or(0, DVector::len),
        });
    }
    let v = grid.integrate(1, |y, out| {
        out[0] = f.q_times_f(p.logpdf(y)?, q.logpdf(y)?);
        Ok(())
    })?;
    Ok(ScalarEstimate {
        value: v[0],
        std_error: 0.0,
        n_samples: grid.len(),
        method: ScalarMethod::Quadrature,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixtures::{gaussian_kl, GaussianComponent};

    fn n1(mean: f64, var: f64) -> GaussianMixture {
        GaussianMixture::single(GaussianComponent::from_parts(&[mean], &[vec![var]]).unwrap())
    }

    fn all() -> Vec<FGenerator> {
        GeneratorKind::all(1.5)
            .into_iter()
            .chain([GeneratorKind::Alpha(-0.5), GeneratorKind::Alpha(0.3)])
            .map(|k| FGenerator::new(k).unwrap())
            .collect()
    }

    #[test]
    fn generator_values() {
        let kl = FGenerator::kl();
        assert_eq!(kl.f(1.0), 0.0);
        assert_eq!(kl.f_prime(1.0), 1.0);
        assert_eq!(kl.f_second(1.0), 1.0);
        let chi = FGenerator::new(GeneratorKind::ChiSquared).unwrap();
        assert_eq!(chi.f(2.0), 1.0);
        assert_eq!(chi.f_second(2.0), 2.0);
        for g in all() {
            assert_eq!(g.f(1.0), 0.0, "{}", g.name());
            assert_eq!(g.f_from_log_ratio(0.0), 0.0, "{}", g.name());
            assert_eq!(g.q_times_f(-1.3, -1.3), 0.0, "{}", g.name());
        }
    }

    #[test]
    fn generators_are_strictly_convex() {
        for g in all() {
            let mut t = 1e-6;
            while t <= 1e6 {
                assert!(g.f_second(t) > 0.0, "{} at {t}", g.name());
                t *= 1.7;
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for g in all() {
            for t in [0.2, 0.9, 1.7, 4.0] {
                let h = 1e-5 * t;
                let d1 = (g.f(t + h) - g.f(t - h)) / (2.0 * h);
                let d2 = (g.f_prime(t + h) - g.f_prime(t - h)) / (2.0 * h);
                assert!((d1 - g.f_prime(t)).abs() < 1e-7 * (1.0 + d1.abs()), "{} f' at {t}", g.name());
                assert!((d2 - g.f_second(t)).abs() < 1e-6 * (1.0 + d2.abs()), "{} f'' at {t}", g.name());
                assert!((g.f_from_log_ratio(t.ln()) - g.f(t)).abs() < 1e-12 * (1.0 + g.f(t).abs()));
                let lq = -0.7;
                let q_f = g.q_times_f(t.ln() + lq, lq);
                assert!((q_f - lq.exp() * g.f(t)).abs() < 1e-12, "{} q f at {t}", g.name());
            }
        }
    }

    #[test]
    fn parse_and_display_round_trip() {
        for s in ["kl", "reverse_kl", "js", "hellinger2", "chi2", "alpha:1.5", "alpha:-0.5"] {
            let k: GeneratorKind = s.parse().unwrap();
            assert_eq!(k.to_string(), s);
        }
        assert!("alpha:x".parse::<GeneratorKind>().is_err());
        assert!("tv".parse::<GeneratorKind>().is_err());
        assert!(matches!(FGenerator::new(GeneratorKind::Alpha(1.0)), Err(Error::InvalidAlpha(_))));
        assert!(matches!(FGenerator::new(GeneratorKind::Alpha(0.0)), Err(Error::InvalidAlpha(_))));
    }

    #[test]
    fn identical_laws_give_exact_zero() {
        let p = n1(0.4, 1.3);
        for g in all() {
            let mc = divergence_mc(&p, &p, &g, 1000, 3).unwrap();
            assert_eq!(mc.value, 0.0, "{}", g.name());
            let qd = divergence_quadrature(&p, &p, &g, 32).unwrap();
            assert!(qd.value.abs() < 1e-10);
        }
    }

    #[test]
    fn kl_monte_carlo_matches_closed_form() {
        let (p, q) = (n1(0.0, 1.0), n1(0.0, 2.0));
        let est = divergence_mc(&p, &q, &FGenerator::kl(), 1_000_000, 11).unwrap();
        let exact = gaussian_kl(&p.components()[0], &q.components()[0]).unwrap();
        assert!((est.value - exact).abs() < 3.0 * est.std_error, "{est:?} vs {exact}");
        assert_eq!(est.n_samples, 1_000_000);
    }

    #[test]
    fn hellinger_monte_carlo_matches_affinity() {
        let (p, q) = (n1(0.0, 1.0), n1(1.0, 1.0));
        let g = FGenerator::new(GeneratorKind::SquaredHellinger).unwrap();
        let est = divergence_mc(&p, &q, &g, 1_000_000, 12).unwrap();
        let exact = 2.0 - 2.0 * (-1.0_f64 / 8.0).exp();
        assert!((exact - 0.235_006_2).abs() < 1e-7);
        assert!((est.value - exact).abs() < 3.0 * est.std_error);
    }

    #[test]
    fn kl_quadrature_matches_closed_form() {
        let (p, q) = (n1(0.0, 1.0), n1(0.0, 2.0));
        let est = divergence_quadrature(&p, &q, &FGenerator::kl(), 128).unwrap();
        assert!((est.value - 0.096_573_590_279_972_65).abs() < 1e-8);
        assert_eq!(est.std_error, 0.0);
        assert_eq!(est.method, ScalarMethod::Quadrature);
    }

    #[test]
    fn chi_squared_quadrature_matches_monte_carlo() {
        let (p, q) = (n1(0.0, 1.0), n1(0.0, 1.5));
        let g = FGenerator::new(GeneratorKind::ChiSquared).unwrap();
        let qd = divergence_quadrature(&p, &q, &g, 128).unwrap();
        // int p^2/q - 1 for zero-mean Gaussians: s_q / sqrt(s_p (2 s_q - s_p)) - 1.
        let exact = 1.5 / (2.0 * 1.5_f64 - 1.0).sqrt() - 1.0;
        assert!((qd.value - exact).abs() < 1e-10);
        let mc = divergence_mc(&p, &q, &g, 1_000_000, 13).unwrap();
        assert!((mc.value - qd.value).abs() < 3.0 * mc.std_error);
    }

    #[test]
    fn reverse_kl_underflow_is_reported() {
        // p is far narrower than q: ratios underflow the clamp on q's tails.
        let p = n1(0.0, 1e-4);
        let q = n1(0.0, 1.0);
        let g = FGenerator::new(GeneratorKind::ReverseKl).unwrap();
        assert!(matches!(divergence_mc(&p, &q, &g, 10_000, 1), Err(Error::NonFiniteEstimate(_))));
    }

    #[test]
    fn quadrature_rejects_high_dimension() {
        let p = GaussianMixture::single(GaussianComponent::standard(4));
        assert!(matches!(
            divergence_quadrature(&p, &p, &FGenerator::kl(), 16),
            Err(Error::DimensionTooHigh(4))
        ));
    }
}
