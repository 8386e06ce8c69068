//! Experiment configuration files.
//!
//! One JSON document per run. Matrices are row-major nested arrays and
//! unknown keys are rejected everywhere.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::ChannelModel;
use crate::divergence::{FGenerator, GeneratorKind};
use crate::error::{Error, Result};
use crate::estimator::{EstimatorConfig, Method};
use crate::identity::DEFAULT_FD_STEP;
use crate::matrixcore::{make_direction, SymmetricDirection, SymmetricPSDMatrix, DEFAULT_PSD_FLOOR};
use crate::mixtures::{GaussianComponent, GaussianMixture};
use crate::optimize::DescentOptions;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    VerifyHeat,
    VerifyTheorem1,
    VerifyKl,
    VerifyDebruijn,
    FitCovariance,
    FitModel,
    Estimate,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::VerifyHeat => "verify_heat",
            ExperimentKind::VerifyTheorem1 => "verify_theorem1",
            ExperimentKind::VerifyKl => "verify_kl",
            ExperimentKind::VerifyDebruijn => "verify_debruijn",
            ExperimentKind::FitCovariance => "fit_covariance",
            ExperimentKind::FitModel => "fit_model",
            ExperimentKind::Estimate => "estimate",
        }
    }

    pub fn is_verification(&self) -> bool {
        matches!(
            self,
            ExperimentKind::VerifyHeat
                | ExperimentKind::VerifyTheorem1
                | ExperimentKind::VerifyKl
                | ExperimentKind::VerifyDebruijn
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentSpec {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianSpec {
    pub mean: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    /// Channel matrix; identity when absent.
    #[serde(rename = "H", default, skip_serializing_if = "Option::is_none")]
    pub h: Option<Vec<Vec<f64>>>,
    /// Diffusion form when present, additive `Y = H X + N` otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_bar: Option<f64>,
    pub sigma: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSpec {
    pub name: String,
    pub p: Vec<ComponentSpec>,
    /// Defaults to `p` for single-law experiments.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<ComponentSpec>>,
    /// Overrides the top-level channel for this pair.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel: Option<ChannelSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSpec {
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_nodes")]
    pub nodes_per_axis: usize,
}

fn default_method() -> Method {
    Method::Quadrature
}

fn default_n() -> usize {
    EstimatorConfig::DEFAULT_MATRIX_SAMPLES
}

fn default_nodes() -> usize {
    EstimatorConfig::DEFAULT_NODES
}

impl Default for EstimatorSpec {
    fn default() -> Self {
        Self {
            method: default_method(),
            n: default_n(),
            seed: 0,
            nodes_per_axis: default_nodes(),
        }
    }
}

impl EstimatorSpec {
    pub fn to_config(&self) -> EstimatorConfig {
        EstimatorConfig {
            method: self.method,
            n: self.n,
            seed: self.seed,
            nodes_per_axis: self.nodes_per_axis,
        }
    }
}

/// `"random:k"` or an explicit list of square matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DirectionSpec {
    Named(String),
    Explicit(Vec<Vec<Vec<f64>>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FdSpec {
    #[serde(default = "default_directions")]
    pub directions: DirectionSpec,
    #[serde(default = "default_step")]
    pub step: f64,
    /// Step sweep; replaces `step` when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<Vec<f64>>,
    #[serde(default)]
    pub richardson: bool,
}

fn default_directions() -> DirectionSpec {
    DirectionSpec::Named("random:3".into())
}

fn default_step() -> f64 {
    DEFAULT_FD_STEP
}

impl Default for FdSpec {
    fn default() -> Self {
        Self {
            directions: default_directions(),
            step: default_step(),
            steps: None,
            richardson: false,
        }
    }
}

impl FdSpec {
    pub fn steps(&self) -> Vec<f64> {
        self.steps.clone().unwrap_or_else(|| vec![self.step])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSpec {
    pub step_size: f64,
    pub max_iters: usize,
    #[serde(default = "default_floor")]
    pub psd_floor: f64,
    #[serde(default = "default_stop")]
    pub stop_tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub consistency_every: Option<usize>,
}

fn default_floor() -> f64 {
    DEFAULT_PSD_FLOOR
}

fn default_stop() -> f64 {
    1e-8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_dir")]
    pub dir: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stem: Option<String>,
}

fn default_dir() -> String {
    "results".into()
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            stem: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub pairs: Vec<PairSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel: Option<ChannelSpec>,
    #[serde(default = "default_generators")]
    pub generators: Vec<String>,
    #[serde(default)]
    pub estimator: EstimatorSpec,
    #[serde(default)]
    pub fd: FdSpec,
    /// Evaluation points for the heat equation; the output mean when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<OptimizerSpec>,
    /// Starting Gaussian for `fit_model`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<GaussianSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default)]
    pub output: OutputSpec,
}

fn default_generators() -> Vec<String> {
    vec!["kl".into()]
}

/// A pair after validation.
#[derive(Debug, Clone)]
pub struct ResolvedPair {
    pub name: String,
    pub p: GaussianMixture,
    pub q: GaussianMixture,
    pub channel: ChannelModel,
    pub directions: Vec<SymmetricDirection>,
}

fn wrap(location: impl Into<String>) -> impl FnOnce(Error) -> Error {
    let location = location.into();
    move |e| match e {
        Error::Config { .. } => e,
        other => Error::config(location, format!("{} ({})", other, other.kind())),
    }
}

fn matrix(rows: &[Vec<f64>], location: &str) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
        return Err(Error::config(location, "matrix must be a non-empty rectangular array"));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    if flat.iter().any(|x| !x.is_finite()) {
        return Err(Error::config(location, "matrix entries must be finite"));
    }
    Ok(DMatrix::from_row_slice(r, c, &flat))
}

fn mixture(spec: &[ComponentSpec], location: &str) -> Result<GaussianMixture> {
    if spec.is_empty() {
        return Err(Error::config(location, "a mixture needs at least one component"));
    }
    let mut weights = Vec::with_capacity(spec.len());
    let mut comps = Vec::with_capacity(spec.len());
    for (k, c) in spec.iter().enumerate() {
        let loc = format!("{location}[{k}]");
        weights.push(c.weight);
        let cov = matrix(&c.covariance, &format!("{loc}.covariance"))?;
        let comp = SymmetricPSDMatrix::new(cov)
            .and_then(|s| GaussianComponent::new(DVector::from_column_slice(&c.mean), s))
            .map_err(wrap(loc))?;
        comps.push(comp);
    }
    GaussianMixture::new(weights, comps).map_err(wrap(location))
}

fn channel(spec: Option<&ChannelSpec>, dim: usize, location: &str) -> Result<ChannelModel> {
    let Some(spec) = spec else {
        return Ok(ChannelModel::additive_identity(SymmetricPSDMatrix::identity(dim))
            .expect("identity noise is valid"));
    };
    let sigma = SymmetricPSDMatrix::new(matrix(&spec.sigma, &format!("{location}.sigma"))?)
        .map_err(wrap(format!("{location}.sigma")))?;
    let h = match &spec.h {
        Some(rows) => matrix(rows, &format!("{location}.H"))?,
        None => DMatrix::identity(sigma.dim(), dim),
    };
    if h.ncols() != dim {
        return Err(Error::config(
            format!("{location}.H"),
            format!("channel expects {}-dimensional inputs, sources have dimension {dim}", h.ncols()),
        ));
    }
    match spec.alpha_bar {
        Some(a) => ChannelModel::new(h, a, sigma),
        None => ChannelModel::additive(h, sigma),
    }
    .map_err(wrap(location))
}

/// Stream id reserved for direction draws, so they never overlap estimator
/// batches (which use stream ids equal to batch indices).
const DIRECTION_STREAM: u64 = u64::MAX;

fn directions(spec: &DirectionSpec, dim: usize, seed: u64, pair: usize) -> Result<Vec<SymmetricDirection>> {
    match spec {
        DirectionSpec::Named(s) => {
            let k: usize = s
                .strip_prefix("random:")
                .and_then(|k| k.parse().ok())
                .filter(|&k| k > 0)
                .ok_or_else(|| {
                    Error::config("fd.directions", format!("expected `random:<k>` with k >= 1, got `{s}`"))
                })?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(pair as u64));
            rng.set_stream(DIRECTION_STREAM);
            Ok((0..k).map(|_| SymmetricDirection::random(&mut rng, dim)).collect())
        }
        DirectionSpec::Explicit(ms) => ms
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let loc = format!("fd.directions[{i}]");
                let m = matrix(m, &loc)?;
                if m.nrows() != dim || m.ncols() != dim {
                    return Err(Error::config(loc, format!("direction must be {dim}x{dim}")));
                }
                make_direction(&m).map_err(wrap(loc))
            })
            .collect(),
    }
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| {
            Error::config(format!("line {} column {}", e.line(), e.column()), e.to_string())
        })
    }

    /// SHA-256 of the normalized (re-serialized) configuration.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn stem(&self) -> String {
        self.output
            .stem
            .clone()
            .unwrap_or_else(|| self.experiment.as_str().to_string())
    }

    pub fn generators(&self) -> Result<Vec<FGenerator>> {
        if self.generators.is_empty() {
            return Err(Error::config("generators", "at least one generator is required"));
        }
        self.generators
            .iter()
            .enumerate()
            .map(|(i, g)| {
                g.parse::<GeneratorKind>()
                    .and_then(FGenerator::new)
                    .map_err(wrap(format!("generators[{i}]")))
            })
            .collect()
    }

    pub fn estimator(&self) -> Result<EstimatorConfig> {
        let e = &self.estimator;
        if e.method.is_monte_carlo() && e.n < crate::divergence::MIN_SAMPLES {
            return Err(Error::config(
                "estimator.n",
                format!("Monte-Carlo routes need n >= {}", crate::divergence::MIN_SAMPLES),
            ));
        }
        if e.method == Method::Quadrature && e.nodes_per_axis < crate::quadrature::MIN_NODES_PER_AXIS {
            return Err(Error::config(
                "estimator.nodes_per_axis",
                format!("quadrature needs at least {} nodes per axis", crate::quadrature::MIN_NODES_PER_AXIS),
            ));
        }
        Ok(e.to_config())
    }

    pub fn steps(&self) -> Result<Vec<f64>> {
        let steps = self.fd.steps();
        if steps.is_empty() || steps.iter().any(|h| !(*h > 0.0) || !h.is_finite()) {
            return Err(Error::config("fd.steps", "finite-difference steps must be positive"));
        }
        Ok(steps)
    }

    pub fn pairs(&self) -> Result<Vec<ResolvedPair>> {
        if self.pairs.is_empty() {
            return Err(Error::config("pairs", "at least one pair is required"));
        }
        self.pairs
            .iter()
            .enumerate()
            .map(|(i, spec)| {
                let loc = format!("pairs[{i}]");
                let p = mixture(&spec.p, &format!("{loc}.p"))?;
                let q = match &spec.q {
                    Some(q) => mixture(q, &format!("{loc}.q"))?,
                    None => p.clone(),
                };
                if q.dim() != p.dim() {
                    return Err(Error::config(
                        format!("{loc}.q"),
                        format!("dimension {} differs from p's {}", q.dim(), p.dim()),
                    ));
                }
                let (ch_spec, ch_loc) = match &spec.channel {
                    Some(c) => (Some(c), format!("{loc}.channel")),
                    None => (self.channel.as_ref(), "channel".to_string()),
                };
                let channel = channel(ch_spec, p.dim(), &ch_loc)?;
                let directions = directions(&self.fd.directions, channel.output_dim(), self.estimator.seed, i)?;
                Ok(ResolvedPair {
                    name: spec.name.clone(),
                    p,
                    q,
                    channel,
                    directions,
                })
            })
            .collect()
    }

    pub fn points(&self, dim: usize) -> Result<Option<Vec<DVector<f64>>>> {
        let Some(points) = &self.points else {
            return Ok(None);
        };
        points
            .iter()
            .enumerate()
            .map(|(i, y)| {
                if y.len() != dim {
                    return Err(Error::config(format!("points[{i}]"), format!("expected {dim} coordinates")));
                }
                Ok(DVector::from_column_slice(y))
            })
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }

    pub fn descent_options(&self) -> Result<DescentOptions> {
        let o = self
            .optimizer
            .as_ref()
            .ok_or_else(|| Error::config("optimizer", "required for fit experiments"))?;
        let opts = DescentOptions {
            step_size: o.step_size,
            max_iters: o.max_iters,
            psd_floor: o.psd_floor,
            grad_estimator: self.estimator()?,
            stop_tol: o.stop_tol,
            consistency_every: o.consistency_every,
        };
        opts.validate().map_err(wrap("optimizer"))?;
        Ok(opts)
    }

    pub fn init(&self, dim: usize) -> Result<GaussianComponent> {
        let g = self
            .init
            .as_ref()
            .ok_or_else(|| Error::config("init", "required for fit_model"))?;
        if g.mean.len() != dim {
            return Err(Error::config("init.mean", format!("expected {dim} coordinates")));
        }
        let cov = matrix(&g.covariance, "init.covariance")?;
        SymmetricPSDMatrix::new(cov)
            .and_then(|s| GaussianComponent::new(DVector::from_column_slice(&g.mean), s))
            .map_err(wrap("init"))
    }

    /// Worker count: `FSL_THREADS`, then the config, then all cores.
    pub fn threads(&self) -> Result<Option<usize>> {
        if let Ok(v) = std::env::var("FSL_THREADS") {
            return match v.trim().parse::<usize>() {
                Ok(n) if n >= 1 => Ok(Some(n)),
                _ => Err(Error::config("FSL_THREADS", format!("expected an integer >= 1, got `{v}`"))),
            };
        }
        match self.threads {
            Some(0) => Err(Error::config("threads", "must be at least 1")),
            t => Ok(t),
        }
    }

    /// Full validation without running anything.
    pub fn validate(&self) -> Result<()> {
        self.generators()?;
        self.estimator()?;
        self.steps()?;
        let pairs = self.pairs()?;
        self.threads()?;
        match self.experiment {
            ExperimentKind::FitCovariance => {
                self.descent_options()?;
            }
            ExperimentKind::FitModel => {
                self.descent_options()?;
                self.init(pairs[0].p.dim())?;
            }
            ExperimentKind::VerifyHeat => {
                for p in &pairs {
                    self.points(p.channel.output_dim())?;
                }
            }
            _ => {}
        }
        Ok(())
    }
}
