//! Tensor-product Gauss-Hermite integration over `R^d`, `d <= 3`.
//!
//! Integrals `int g(y) dy` are computed by the affine substitution
//! `y = m + sqrt(2) L x` against a Gaussian envelope `N(m, L L^T)`, which
//! turns them into Hermite-weighted integrals in `x`. The envelope only has
//! to cover the integrand's mass; it does not need to match it.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrixcore::{cholesky_dense, SymmetricPSDMatrix};
use crate::mixtures::GaussianMixture;

pub const MAX_QUADRATURE_DIM: usize = 3;
pub const MIN_NODES_PER_AXIS: usize = 16;

const CHUNK: usize = 1024;

/// Physicists' Gauss-Hermite rule: `int e^{-x^2} g(x) dx ~ sum w_i g(x_i)`.
///
/// Returns nodes in descending order together with `ln w_i`. Nodes are
/// seeded from the eigenvalues of the Jacobi matrix and polished by Newton
/// iteration on the orthonormal three-term recurrence, which also yields the
/// log weights without underflow.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "at least one node");
    let jacobi = DMatrix::from_fn(n, n, |i, j| {
        if i.abs_diff(j) == 1 {
            (i.max(j) as f64 / 2.0).sqrt()
        } else {
            0.0
        }
    });
    let mut seeds: Vec<f64> = jacobi.symmetric_eigenvalues().iter().copied().collect();
    seeds.sort_by(|a, b| b.total_cmp(a));

    let pim4 = std::f64::consts::PI.powf(-0.25);
    let nf = n as f64;
    let half = n.div_ceil(2);
    let mut x = vec![0.0; n];
    let mut lw = vec![0.0; n];
    for i in 0..half {
        let mut z = seeds[i];
        if n % 2 == 1 && i == half - 1 {
            z = 0.0;
        }
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 1..=n {
                let jf = j as f64;
                let p3 = p2;
                p2 = p1;
                p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        let l = std::f64::consts::LN_2 - 2.0 * pp.abs().ln();
        lw[i] = l;
        lw[n - 1 - i] = l;
    }
    (x, lw)
}

/// Gaussian envelope `N(mean, cov)` used to place quadrature nodes.
#[derive(Debug, Clone)]
pub struct Envelope {
    pub mean: DVector<f64>,
    pub covariance: SymmetricPSDMatrix,
}

impl Envelope {
    /// Mean of the two mixture means, covariance twice the larger-trace
    /// mixture covariance.
    pub fn covering(p: &GaussianMixture, q: &GaussianMixture) -> Self {
        let mean = (p.mean() + q.mean()) * 0.5;
        let (cp, cq) = (p.covariance(), q.covariance());
        let big = if cp.trace() >= cq.trace() { cp } else { cq };
        Self {
            mean,
            covariance: SymmetricPSDMatrix::from_symmetric_unchecked(big * 2.0),
        }
    }

    /// Envelope for integrals against a single mixture.
    pub fn single(p: &GaussianMixture) -> Self {
        Self::covering(p, p)
    }
}

/// Nodes `y_i` and weights `v_i` with `int g(y) dy ~ sum v_i g(y_i)`.
#[derive(Debug, Clone)]
pub struct TensorGrid {
    pub nodes: Vec<DVector<f64>>,
    pub weights: Vec<f64>,
}

impl TensorGrid {
    pub fn new(envelope: &Envelope, nodes_per_axis: usize) -> Result<Self> {
        let d = envelope.mean.len();
        if d > MAX_QUADRATURE_DIM {
            return Err(Error::DimensionTooHigh(d));
        }
        if nodes_per_axis < MIN_NODES_PER_AXIS {
            return Err(Error::InvalidArgument(format!(
                "quadrature needs at least {MIN_NODES_PER_AXIS} nodes per axis, got {nodes_per_axis}"
            )));
        }
        let l: DMatrix<f64> = cholesky_dense(envelope.covariance.as_matrix())?;
        let (x, lw) = gauss_hermite(nodes_per_axis);
        // e^{x^2} folded in so the rule integrates g directly.
        let scaled: Vec<f64> = x.iter().zip(&lw).map(|(xi, w)| (w + xi * xi).exp()).collect();
        let jac = 2.0_f64.powf(d as f64 / 2.0) * l.diagonal().product();
        let total = nodes_per_axis.pow(d as u32);
        let mut nodes = Vec::with_capacity(total);
        let mut weights = Vec::with_capacity(total);
        let mut idx = vec![0usize; d];
        let sqrt2 = 2.0_f64.sqrt();
        for _ in 0..total {
            let xv = DVector::from_iterator(d, idx.iter().map(|&k| x[k] * sqrt2));
            nodes.push(&envelope.mean + &l * xv);
            weights.push(jac * idx.iter().map(|&k| scaled[k]).product::<f64>());
            for slot in idx.iter_mut() {
                *slot += 1;
                if *slot < nodes_per_axis {
                    break;
                }
                *slot = 0;
            }
        }
        Ok(Self { nodes, weights })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Integrates a `width`-valued integrand. Chunked and summed in node
    /// order so the result does not depend on the worker-pool size.
    pub fn integrate<F>(&self, width: usize, integrand: F) -> Result<Vec<f64>>
    where
        F: Fn(&DVector<f64>, &mut [f64]) -> Result<()> + Sync,
    {
        let partials: Vec<Result<Vec<f64>>> = self
            .nodes
            .par_chunks(CHUNK)
            .zip(self.weights.par_chunks(CHUNK))
            .map(|(ys, ws)| {
                let mut acc = vec![0.0; width];
                let mut buf = vec![0.0; width];
                for (y, w) in ys.iter().zip(ws) {
                    integrand(y, &mut buf)?;
                    for (a, b) in acc.iter_mut().zip(&buf) {
                        *a += w * b;
                    }
                }
                Ok(acc)
            })
            .collect();
        let mut total = vec![0.0; width];
        for p in partials {
            for (t, v) in total.iter_mut().zip(p?) {
                *t += v;
            }
        }
        if let Some(bad) = total.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFiniteEstimate(format!(
                "quadrature sum evaluated to {bad}"
            )));
        }
        Ok(total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_weights_sum_to_sqrt_pi() {
        for n in [16, 32, 64, 128, 200] {
            let (x, lw) = gauss_hermite(n);
            let s: f64 = lw.iter().map(|l| l.exp()).sum();
            assert!((s - std::f64::consts::PI.sqrt()).abs() < 1e-13, "n={n} sum={s}");
            let m2: f64 = x.iter().zip(&lw).map(|(x, l)| x * x * l.exp()).sum();
            assert!((m2 - std::f64::consts::PI.sqrt() / 2.0).abs() < 1e-13);
            assert!(x.windows(2).all(|w| w[0] > w[1]));
        }
    }

    #[test]
    fn small_rule_matches_known_nodes() {
        let (x, lw) = gauss_hermite(2);
        assert!((x[0] - 0.5_f64.sqrt()).abs() < 1e-15);
        assert!((lw[0].exp() - std::f64::consts::PI.sqrt() / 2.0).abs() < 1e-15);
    }

    #[test]
    fn grid_integrates_gaussian_density() {
        let env = Envelope {
            mean: DVector::from_vec(vec![0.3, -0.2]),
            covariance: SymmetricPSDMatrix::from_rows(&[vec![2.0, 0.4], vec![0.4, 1.5]]).unwrap(),
        };
        let grid = TensorGrid::new(&env, 32).unwrap();
        let s = grid
            .integrate(1, |y, out| {
                out[0] = (-0.5 * y.norm_squared()).exp() / (2.0 * std::f64::consts::PI);
                Ok(())
            })
            .unwrap();
        assert!((s[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_high_dimension_and_few_nodes() {
        let env4 = Envelope {
            mean: DVector::zeros(4),
            covariance: SymmetricPSDMatrix::identity(4),
        };
        assert!(matches!(TensorGrid::new(&env4, 16), Err(Error::DimensionTooHigh(4))));
        let env1 = Envelope {
            mean: DVector::zeros(1),
            covariance: SymmetricPSDMatrix::identity(1),
        };
        assert!(TensorGrid::new(&env1, 8).is_err());
    }
}
