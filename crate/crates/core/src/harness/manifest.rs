//! TOML experiment manifests.
//!
//! ```toml
//! map = "../maps/map11x11.txt"   # relative to the manifest, or "bundled:map11x11"
//! output_dir = "fig1"            # relative to $FEDQ_OUTPUT_ROOT when set
//! n_seeds = 3
//!
//! [noise]
//! std = 0.5
//! clip = 0.5
//!
//! [config]
//! n_agents = 50
//! learning_rate = 0.01
//! compressor = "top:50"
//!
//! [sweep]
//! local_epochs = [1, 10]
//! compressor = ["identity", "top:50", "sparsified:50"]
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::compression::{CompressorKind, CompressorSpec};
use crate::engine::{ExperimentConfig, FeedbackMode, InitialQ};
use crate::error::{Error, Result};
use crate::mdp::NoiseSpec;

pub const OUTPUT_ROOT_ENV: &str = "FEDQ_OUTPUT_ROOT";

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawManifest {
    map: String,
    output_dir: PathBuf,
    #[serde(default = "one")]
    n_seeds: usize,
    #[serde(default = "default_max_runs")]
    max_runs: usize,
    #[serde(default = "default_tol")]
    qstar_tol: f64,
    #[serde(default = "default_delta")]
    bound_delta: f64,
    #[serde(default)]
    noise: RawNoise,
    #[serde(default)]
    config: RawConfig,
    #[serde(default)]
    sweep: RawSweep,
}

fn one() -> usize {
    1
}

fn default_max_runs() -> usize {
    10_000
}

fn default_tol() -> f64 {
    1e-10
}

fn default_delta() -> f64 {
    0.05
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNoise {
    std: f64,
    clip: f64,
}

impl Default for RawNoise {
    fn default() -> Self {
        let n = NoiseSpec::default();
        Self {
            std: n.std,
            clip: n.clip,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    n_agents: Option<usize>,
    local_epochs: Option<usize>,
    rounds: Option<usize>,
    learning_rate: Option<f64>,
    federated_param: Option<f64>,
    gamma: Option<f64>,
    compressor: Option<String>,
    /// `paper` (default), `direct` or `error-feedback`.
    mode: Option<String>,
    allow_unpaired: Option<bool>,
    master_seed: Option<u64>,
    q0: Option<f64>,
    fpp: Option<u32>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    #[serde(default)]
    learning_rate: Vec<f64>,
    #[serde(default)]
    federated_param: Vec<f64>,
    #[serde(default)]
    n_agents: Vec<usize>,
    #[serde(default)]
    local_epochs: Vec<usize>,
    #[serde(default)]
    rounds: Vec<usize>,
    #[serde(default)]
    compressor: Vec<String>,
}

/// Upload mode as written in a manifest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeChoice {
    /// Pick the mode that goes with the compressor.
    Paired,
    Fixed(FeedbackMode),
}

impl ModeChoice {
    fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "paper" | "paired" | "auto" => Ok(ModeChoice::Paired),
            "direct" => Ok(ModeChoice::Fixed(FeedbackMode::Direct)),
            "error-feedback" | "ef" => Ok(ModeChoice::Fixed(FeedbackMode::ErrorFeedback)),
            other => Err(Error::InvalidConfig(format!("unknown mode {other:?}"))),
        }
    }

    pub fn resolve(self, kind: CompressorKind) -> FeedbackMode {
        match self {
            ModeChoice::Paired => FeedbackMode::paired_with(kind),
            ModeChoice::Fixed(m) => m,
        }
    }
}

/// Where the map comes from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MapSource {
    File(PathBuf),
    Bundled(String),
}

impl MapSource {
    /// Short name used in output file names.
    pub fn stem(&self) -> String {
        match self {
            MapSource::File(p) => p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "map".into()),
            MapSource::Bundled(name) => name.clone(),
        }
    }

    pub fn load(&self) -> Result<String> {
        match self {
            MapSource::File(p) => std::fs::read_to_string(p).map_err(|e| Error::io(p, e)),
            MapSource::Bundled(name) => super::maps::bundled(name)
                .map(str::to_owned)
                .ok_or_else(|| Error::InvalidConfig(format!("no bundled map named {name:?}"))),
        }
    }
}

/// Parsed and resolved manifest.
#[derive(Debug, Clone)]
pub struct RunManifest {
    pub map: MapSource,
    pub output_dir: PathBuf,
    pub noise: NoiseSpec,
    pub config: ExperimentConfig,
    pub mode: ModeChoice,
    pub n_seeds: usize,
    pub max_runs: usize,
    pub qstar_tol: f64,
    pub bound_delta: f64,
    pub sweep: SweepAxes,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepAxes {
    pub learning_rate: Vec<f64>,
    pub federated_param: Vec<f64>,
    pub n_agents: Vec<usize>,
    pub local_epochs: Vec<usize>,
    pub rounds: Vec<usize>,
    pub compressor: Vec<CompressorSpec>,
}

impl SweepAxes {
    pub fn is_empty(&self) -> bool {
        self.learning_rate.is_empty()
            && self.federated_param.is_empty()
            && self.n_agents.is_empty()
            && self.local_epochs.is_empty()
            && self.rounds.is_empty()
            && self.compressor.is_empty()
    }

    /// Number of grid points in the full product (empty axes count as one).
    pub fn size(&self) -> usize {
        [
            self.learning_rate.len(),
            self.federated_param.len(),
            self.n_agents.len(),
            self.local_epochs.len(),
            self.rounds.len(),
            self.compressor.len(),
        ]
        .iter()
        .map(|&n| n.max(1))
        .product()
    }
}

fn axis<T: Copy>(values: &[T], base: T) -> Vec<T> {
    if values.is_empty() {
        vec![base]
    } else {
        values.to_vec()
    }
}

impl RunManifest {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base_dir = path.parent().unwrap_or(Path::new("."));
        let root = std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from);
        Self::parse(&text, base_dir, root.as_deref())
    }

    /// Parses manifest text. Map paths resolve against `base_dir`; the output
    /// directory resolves against `output_root` when given.
    pub fn parse(text: &str, base_dir: &Path, output_root: Option<&Path>) -> Result<Self> {
        let raw: RawManifest =
            toml::from_str(text).map_err(|e| Error::InvalidConfig(format!("manifest: {e}")))?;

        let map = match raw.map.strip_prefix("bundled:") {
            Some(name) => MapSource::Bundled(name.to_owned()),
            None => MapSource::File(base_dir.join(&raw.map)),
        };
        let output_dir = match output_root {
            Some(root) => root.join(&raw.output_dir),
            None => raw.output_dir.clone(),
        };
        let noise = NoiseSpec::new(raw.noise.std, raw.noise.clip)?;

        let defaults = ExperimentConfig::default();
        let c = raw.config;
        let compressor = match &c.compressor {
            Some(s) => s.parse()?,
            None => defaults.compressor,
        };
        let mode = match &c.mode {
            Some(s) => ModeChoice::parse(s)?,
            None => ModeChoice::Paired,
        };
        let config = ExperimentConfig {
            n_agents: c.n_agents.unwrap_or(defaults.n_agents),
            local_epochs: c.local_epochs.unwrap_or(defaults.local_epochs),
            rounds: c.rounds.unwrap_or(defaults.rounds),
            learning_rate: c.learning_rate.unwrap_or(defaults.learning_rate),
            federated_param: c.federated_param.unwrap_or(defaults.federated_param),
            gamma: c.gamma.unwrap_or(defaults.gamma),
            compressor,
            mode: mode.resolve(compressor.kind),
            allow_unpaired: c.allow_unpaired.unwrap_or(false),
            master_seed: c.master_seed.unwrap_or(defaults.master_seed),
            q0: match c.q0 {
                None | Some(0.0) => InitialQ::Zeros,
                Some(v) => InitialQ::Constant(v),
            },
            fpp: c.fpp.unwrap_or(defaults.fpp),
        };

        let sweep = SweepAxes {
            learning_rate: raw.sweep.learning_rate,
            federated_param: raw.sweep.federated_param,
            n_agents: raw.sweep.n_agents,
            local_epochs: raw.sweep.local_epochs,
            rounds: raw.sweep.rounds,
            compressor: raw
                .sweep
                .compressor
                .iter()
                .map(|s| s.parse())
                .collect::<Result<_>>()?,
        };

        if raw.n_seeds == 0 {
            return Err(Error::InvalidConfig("n_seeds must be at least 1".into()));
        }
        if !(raw.qstar_tol > 0.0) {
            return Err(Error::InvalidTolerance(raw.qstar_tol));
        }
        if !(raw.bound_delta > 0.0 && raw.bound_delta < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "bound_delta must lie in (0, 1), got {}",
                raw.bound_delta
            )));
        }

        Ok(Self {
            map,
            output_dir,
            noise,
            config,
            mode,
            n_seeds: raw.n_seeds,
            max_runs: raw.max_runs,
            qstar_tol: raw.qstar_tol,
            bound_delta: raw.bound_delta,
            sweep,
        })
    }

    /// Grid points of the sweep product, or just the base config when `sweep`
    /// is false. Seeds are not expanded here.
    pub fn grid_points(&self, sweep: bool) -> Vec<ExperimentConfig> {
        if !sweep {
            return vec![self.config.clone()];
        }
        let base = &self.config;
        let s = &self.sweep;
        let mut points = Vec::with_capacity(s.size());
        for &compressor in &axis(&s.compressor, base.compressor) {
            for &n_agents in &axis(&s.n_agents, base.n_agents) {
                for &local_epochs in &axis(&s.local_epochs, base.local_epochs) {
                    for &rounds in &axis(&s.rounds, base.rounds) {
                        for &learning_rate in &axis(&s.learning_rate, base.learning_rate) {
                            for &federated_param in &axis(&s.federated_param, base.federated_param)
                            {
                                points.push(ExperimentConfig {
                                    n_agents,
                                    local_epochs,
                                    rounds,
                                    learning_rate,
                                    federated_param,
                                    compressor,
                                    mode: self.mode.resolve(compressor.kind),
                                    ..base.clone()
                                });
                            }
                        }
                    }
                }
            }
        }
        points
    }
}
