//! Estimator selection shared by the divergence, Fisher and identity modules.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Which route evaluates an expectation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    /// Monte Carlo with samples drawn from `p`.
    #[serde(rename = "mc_p")]
    MonteCarloP,
    /// Monte Carlo with samples drawn from `q`.
    #[serde(rename = "mc_q")]
    MonteCarloQ,
    /// Tensor Gauss-Hermite quadrature (dimension <= 3).
    #[serde(rename = "quadrature")]
    Quadrature,
    /// Gaussian closed forms (single-component sources only).
    #[serde(rename = "closed_form")]
    ClosedForm,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::MonteCarloP => "mc_p",
            Method::MonteCarloQ => "mc_q",
            Method::Quadrature => "quadrature",
            Method::ClosedForm => "closed_form",
        }
    }

    pub fn is_monte_carlo(&self) -> bool {
        matches!(self, Method::MonteCarloP | Method::MonteCarloQ)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mc_p" => Ok(Method::MonteCarloP),
            "mc_q" => Ok(Method::MonteCarloQ),
            "quadrature" => Ok(Method::Quadrature),
            "closed_form" => Ok(Method::ClosedForm),
            other => Err(Error::InvalidArgument(format!("unknown estimator method `{other}`"))),
        }
    }
}

/// Route plus its tuning: sample count and seed for Monte Carlo, nodes per
/// axis for quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorConfig {
    pub method: Method,
    pub n: usize,
    pub seed: u64,
    pub nodes_per_axis: usize,
}

impl EstimatorConfig {
    pub const DEFAULT_MATRIX_SAMPLES: usize = 200_000;
    pub const DEFAULT_NODES: usize = 64;

    pub fn quadrature(nodes_per_axis: usize) -> Self {
        Self {
            method: Method::Quadrature,
            n: 0,
            seed: 0,
            nodes_per_axis,
        }
    }

    pub fn monte_carlo_p(n: usize, seed: u64) -> Self {
        Self {
            method: Method::MonteCarloP,
            n,
            seed,
            nodes_per_axis: 0,
        }
    }

    pub fn monte_carlo_q(n: usize, seed: u64) -> Self {
        Self {
            method: Method::MonteCarloQ,
            n,
            seed,
            nodes_per_axis: 0,
        }
    }

    pub fn closed_form() -> Self {
        Self {
            method: Method::ClosedForm,
            n: 0,
            seed: 0,
            nodes_per_axis: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self::quadrature(Self::DEFAULT_NODES)
    }
}
