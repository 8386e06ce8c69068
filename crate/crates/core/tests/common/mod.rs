#![allow(dead_code)]

use fsl::matrixcore::SymmetricDirection;
use fsl::{ChannelModel, GaussianComponent, GaussianMixture, SymmetricPSDMatrix};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn comp(mean: &[f64], cov: &[Vec<f64>]) -> GaussianComponent {
    GaussianComponent::from_parts(mean, cov).unwrap()
}

pub fn n1(mean: f64, var: f64) -> GaussianMixture {
    GaussianMixture::single(comp(&[mean], &[vec![var]]))
}

pub fn mix(weights: &[f64], comps: Vec<GaussianComponent>) -> GaussianMixture {
    GaussianMixture::new(weights.to_vec(), comps).unwrap()
}

/// Sources `(name, p, q)`: a 2-D Gaussian pair, a 1-D mixture pair and a
/// 2-D mixture pair. Every `q` component is wider than every `p`
/// component, so the likelihood ratio stays bounded.
pub fn source_pairs() -> Vec<(&'static str, GaussianMixture, GaussianMixture)> {
    vec![
        (
            "gauss2",
            GaussianMixture::single(comp(&[0.3, -0.2], &[vec![1.0, 0.3], vec![0.3, 0.8]])),
            GaussianMixture::single(comp(&[0.0, 0.1], &[vec![1.5, 0.0], vec![0.0, 1.2]])),
        ),
        (
            "mix1",
            mix(&[0.4, 0.6], vec![comp(&[-1.0], &[vec![0.5]]), comp(&[1.0], &[vec![0.7]])]),
            mix(&[0.5, 0.5], vec![comp(&[-0.5], &[vec![1.2]]), comp(&[0.8], &[vec![1.0]])]),
        ),
        (
            "mix2",
            mix(
                &[0.5, 0.5],
                vec![
                    comp(&[-1.0, 0.0], &[vec![0.6, 0.1], vec![0.1, 0.5]]),
                    comp(&[1.0, 0.5], &[vec![0.5, -0.1], vec![-0.1, 0.7]]),
                ],
            ),
            mix(
                &[0.3, 0.7],
                vec![
                    comp(&[-0.5, 0.2], &[vec![1.2, 0.0], vec![0.0, 1.2]]),
                    comp(&[0.6, 0.0], &[vec![1.1, 0.2], vec![0.2, 1.0]]),
                ],
            ),
        ),
    ]
}

/// Additive channel `Y = X + N` with a non-isotropic noise covariance.
pub fn channel(dim: usize) -> ChannelModel {
    let sigma = match dim {
        1 => SymmetricPSDMatrix::from_rows(&[vec![0.8]]).unwrap(),
        _ => SymmetricPSDMatrix::from_rows(&[vec![1.0, 0.2], vec![0.2, 0.8]]).unwrap(),
    };
    ChannelModel::additive_identity(sigma).unwrap()
}

pub fn directions(dim: usize, k: usize, seed: u64) -> Vec<SymmetricDirection> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..k).map(|_| SymmetricDirection::random(&mut rng, dim)).collect()
}

/// Unit direction built from a random positive definite matrix, so that
/// contractions with positive definite matrices stay away from zero.
pub fn positive_direction(dim: usize, seed: u64) -> SymmetricDirection {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
    let m = &a * a.transpose() + DMatrix::identity(dim, dim) * 0.5;
    fsl::matrixcore::make_direction(&m).unwrap()
}

fn random_component(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> GaussianComponent {
    let mean = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
    let angle: f64 = rng.random_range(0.0..std::f64::consts::PI);
    let (c, s) = (angle.cos(), angle.sin());
    let r = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
    let l = nalgebra::dvector![rng.random_range(lo..hi), rng.random_range(lo..hi)];
    let cov = &r * DMatrix::from_diagonal(&l) * r.transpose();
    comp(&mean, &[vec![cov[(0, 0)], cov[(0, 1)]], vec![cov[(1, 0)], cov[(1, 1)]]])
}

/// Random 2-D two-component mixture pair. Both laws carry a component with
/// one shared wide covariance and a narrower private one, so `p/q` grows at
/// most exponentially-linearly in the tails and every Fisher weight has
/// finite variance under both `p` and `q`.
pub fn random_pair(rng: &mut ChaCha8Rng) -> (GaussianMixture, GaussianMixture) {
    let wide = random_component(rng, 1.2, 2.0);
    let shifted = |rng: &mut ChaCha8Rng| {
        let m = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        GaussianComponent::new(nalgebra::DVector::from_column_slice(&m), wide.covariance().clone()).unwrap()
    };
    let w: f64 = rng.random_range(0.3..0.7);
    let p = mix(&[w, 1.0 - w], vec![random_component(rng, 0.3, 0.9), shifted(rng)]);
    let w: f64 = rng.random_range(0.3..0.7);
    let q = mix(&[w, 1.0 - w], vec![random_component(rng, 0.3, 0.9), shifted(rng)]);
    (p, q)
}
