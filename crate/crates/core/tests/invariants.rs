mod common;

use common::*;
use fsl::divergence::GeneratorKind;
use fsl::identity::{differential_entropy, verify_heat_equation, verify_kl_corollary, verify_theorem1, VerificationCase};
use fsl::matrixcore::make_direction;
use fsl::optimize::{fit_covariance, DescentOptions};
use fsl::{EstimatorConfig, FGenerator, GaussianComponent, GaussianMixture};
use nalgebra::{dvector, DMatrix};

fn case(generator: FGenerator, v: fsl::SymmetricDirection, estimator: EstimatorConfig) -> VerificationCase {
    let (_, p, q) = source_pairs().swap_remove(2);
    VerificationCase {
        source_p: p,
        source_q: q,
        channel: channel(2),
        generator,
        direction: v,
        fd_step: 1e-4,
        richardson: false,
        estimator,
    }
}

#[test]
fn derivative_is_linear_in_direction() {
    let f = FGenerator::new(GeneratorKind::JensenShannon).unwrap();
    let cfg = EstimatorConfig::quadrature(48);
    let dirs = directions(2, 2, 900);
    let (a, b) = (0.7, -1.3);
    let combo = dirs[0].as_matrix() * a + dirs[1].as_matrix() * b;
    let norm = combo.norm();
    let v = make_direction(&combo).unwrap();
    let l1 = verify_theorem1(&case(f, dirs[0].clone(), cfg)).unwrap().lhs;
    let l2 = verify_theorem1(&case(f, dirs[1].clone(), cfg)).unwrap().lhs;
    let l = verify_theorem1(&case(f, v, cfg)).unwrap().lhs;
    assert!((l - (a * l1 + b * l2) / norm).abs() < 1e-7);
}

#[test]
fn kl_record_is_bit_identical_to_theorem_record() {
    let v = directions(2, 1, 901).remove(0);
    for cfg in [EstimatorConfig::quadrature(32), EstimatorConfig::monte_carlo_p(50_000, 4)] {
        let c = case(FGenerator::new(GeneratorKind::Alpha(1.5)).unwrap(), v.clone(), cfg);
        let mut kl = c.clone();
        kl.generator = FGenerator::kl();
        assert_eq!(verify_kl_corollary(&c).unwrap(), verify_theorem1(&kl).unwrap());
    }
}

#[test]
fn richardson_reduces_truncation() {
    let ch = fsl::ChannelModel::additive_identity(fsl::SymmetricPSDMatrix::from_rows(&[vec![0.5]]).unwrap()).unwrap();
    let mut c = VerificationCase {
        source_p: n1(0.3, 0.4),
        source_q: n1(-0.2, 1.5),
        channel: ch,
        generator: FGenerator::kl(),
        direction: make_direction(&DMatrix::identity(1, 1)).unwrap(),
        fd_step: 0.1,
        richardson: false,
        estimator: EstimatorConfig::closed_form(),
    };
    let plain = verify_theorem1(&c).unwrap();
    c.richardson = true;
    let extrapolated = verify_theorem1(&c).unwrap();
    assert!(plain.residual > 1e-4);
    assert!(extrapolated.residual < plain.residual / 10.0, "{} vs {}", extrapolated.residual, plain.residual);
}

#[test]
fn heat_residual_is_second_order() {
    let (_, p, _) = source_pairs().swap_remove(2);
    let ch = channel(2);
    let y = dvector![0.4, -0.2];
    for v in directions(2, 3, 903) {
        let a = verify_heat_equation(&p, &ch, &y, &v, 1e-2).unwrap();
        let b = verify_heat_equation(&p, &ch, &y, &v, 1e-3).unwrap();
        let ratio = a.residual / b.residual;
        assert!((70.0..130.0).contains(&ratio), "{ratio}");
    }
}

#[test]
fn identical_laws_are_a_fixed_point() {
    let (_, p, _) = source_pairs().swap_remove(1);
    let opts = DescentOptions::new(0.5, 50, EstimatorConfig::quadrature(32));
    let t = fit_covariance(&p, &p, &channel(1), &opts).unwrap();
    assert_eq!(t.iterates.len(), 1);
    assert!(t.converged);
}

#[test]
fn quadrature_descent_is_monotone() {
    let (_, p, q) = source_pairs().swap_remove(2);
    let opts = DescentOptions::new(0.5, 25, EstimatorConfig::quadrature(48));
    let t = fit_covariance(&p, &q, &channel(2), &opts).unwrap();
    for w in t.iterates.windows(2) {
        assert!(w[1].objective.value < w[0].objective.value - 1e-10);
    }
    for it in &t.iterates {
        assert!(it.sigma.min_eigenvalue() >= opts.psd_floor);
    }
}

#[test]
fn entropy_scaling_law() {
    let cfg = EstimatorConfig::monte_carlo_p(400_000, 8);
    let base = GaussianMixture::single(GaussianComponent::standard(2));
    let c = 3.0;
    let scaled = GaussianMixture::single(
        GaussianComponent::new(dvector![0.0, 0.0], fsl::SymmetricPSDMatrix::new(DMatrix::identity(2, 2) * c).unwrap())
            .unwrap(),
    );
    let a = differential_entropy(&base, &cfg).unwrap();
    let b = differential_entropy(&scaled, &cfg.with_seed(9)).unwrap();
    let diff = b.value - a.value;
    assert!((diff - c.ln()).abs() < 3.0 * a.std_error.hypot(b.std_error));
}
