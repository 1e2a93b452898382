//! Run configuration: one TOML file per run.
//!
//! ```toml
//! mode = "track"              # background | track | sweep | eval
//! seed = 7                    # master seed
//! m = 400                     # measurements per frame
//! out = "../runs/track-400"   # output directory
//!
//! [scene]
//! script = "../assets/scene/scene.txt"
//!
//! [noise]                     # omit the table for noiseless runs
//! photons = 500.0             # mean signal photons per measurement
//! dark_fraction = 0.02        # dark counts as a fraction of `photons`
//!
//! [solver]                    # every key optional
//! mu = 16.0
//! beta = 32.0
//! beta_max = 128.0
//! tv_norm = "isotropic"       # or "anisotropic"
//! tol = 1e-4
//! max_outer = 300
//! max_inner = 10
//! nonnegative = false
//!
//! [track]
//! threshold_fraction = 0.2
//! subtraction = "consecutive" # or "background"
//! mu_per_photon = 0.004
//!
//! [sweep]
//! measurements = [100, 400]
//! photons = [50.0, 100.0, 200.0, 500.0, 1000.0]
//! seeds = 10
//! frame_pair = [1, 2]
//! mu_per_photon = 0.004
//!
//! [acceptance]                # thresholds deciding the exit code
//! max_mse = 0.04
//! max_centroid_error = 4.0
//! photon_bands = [[100, 250.0, 1000.0], [400, 100.0, 400.0]]
//! ```
//!
//! Relative paths resolve against the directory of the config file.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use ghost_core::noise::DEFAULT_DARK_FRACTION;
use ghost_core::solver::{SolverConfig, TvNorm};
use ghost_core::tracking::Subtraction;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Background,
    Track,
    Sweep,
    Eval,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Background => "background",
            Mode::Track => "track",
            Mode::Sweep => "sweep",
            Mode::Eval => "eval",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSection {
    pub script: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub photons: f64,
    #[serde(default = "default_dark_fraction")]
    pub dark_fraction: f64,
}

fn default_dark_fraction() -> f64 {
    DEFAULT_DARK_FRACTION
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub mu: Option<f64>,
    pub beta: Option<f64>,
    pub beta_max: Option<f64>,
    pub tv_norm: Option<String>,
    pub tol: Option<f64>,
    pub max_outer: Option<usize>,
    pub max_inner: Option<usize>,
    pub nonnegative: Option<bool>,
}

impl SolverSection {
    pub fn to_config(&self) -> Result<SolverConfig, CliError> {
        let d = SolverConfig::default();
        let tv_norm = match self.tv_norm.as_deref() {
            None | Some("isotropic") => TvNorm::Isotropic,
            Some("anisotropic") => TvNorm::Anisotropic,
            Some(other) => {
                return Err(CliError::Config(format!(
                    "solver.tv_norm must be \"isotropic\" or \"anisotropic\", got {other:?}"
                )))
            }
        };
        let config = SolverConfig {
            mu: self.mu.unwrap_or(d.mu),
            beta: self.beta.unwrap_or(d.beta),
            beta_max: self.beta_max.unwrap_or(d.beta_max),
            tv_norm,
            tol: self.tol.unwrap_or(d.tol),
            max_outer: self.max_outer.unwrap_or(d.max_outer),
            max_inner: self.max_inner.unwrap_or(d.max_inner),
            nonnegative: self.nonnegative.unwrap_or(d.nonnegative),
        };
        config.validate().map_err(|e| CliError::Config(format!("[solver]: {e}")))?;
        Ok(config)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackSection {
    pub threshold_fraction: Option<f64>,
    pub subtraction: Option<String>,
    pub mu_per_photon: Option<f64>,
}

impl TrackSection {
    pub fn subtraction(&self) -> Result<Subtraction, CliError> {
        match self.subtraction.as_deref() {
            None | Some("consecutive") => Ok(Subtraction::Consecutive),
            Some("background") => Ok(Subtraction::Background),
            Some(other) => Err(CliError::Config(format!(
                "track.subtraction must be \"consecutive\" or \"background\", got {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub measurements: Vec<usize>,
    pub photons: Vec<f64>,
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    #[serde(default = "default_pair")]
    pub frame_pair: (usize, usize),
    pub mu_per_photon: Option<f64>,
}

fn default_seeds() -> usize {
    10
}

fn default_pair() -> (usize, usize) {
    (1, 2)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcceptanceSection {
    /// Upper bound on every step's (or the background's) MSE.
    pub max_mse: Option<f64>,
    /// Upper bound on every step's centroid error in pixels.
    pub max_centroid_error: Option<f64>,
    /// `(m, low, high)`: the smallest passing photon budget must lie in `[low, high]`.
    pub photon_bands: Option<Vec<(usize, f64, f64)>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Option<Mode>,
    pub seed: u64,
    pub m: Option<usize>,
    pub out: PathBuf,
    pub scene: SceneSection,
    pub noise: Option<NoiseSection>,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub track: TrackSection,
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub acceptance: AcceptanceSection,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub m: Option<usize>,
    pub photons: Option<f64>,
}

/// A parsed config with overrides applied and paths resolved.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub run: RunConfig,
    pub scene_script: PathBuf,
    pub out_dir: PathBuf,
    /// sha256 of the effective config, as recorded in artifact headers.
    pub hash: String,
}

impl LoadedConfig {
    pub fn measurements(&self) -> Result<usize, CliError> {
        match self.run.m {
            Some(0) => Err(CliError::Config("m must be at least 1".into())),
            Some(m) => Ok(m),
            None => Err(CliError::Config("this mode needs `m`".into())),
        }
    }

    /// The effective config as written to `run.toml`; `hash` is its sha256.
    pub fn canonical(&self) -> Result<String, CliError> {
        canonical(&self.run)
    }

    /// Pins the mode and refreshes the hash.
    pub fn set_mode(&mut self, mode: Mode) -> Result<(), CliError> {
        self.run.mode = Some(mode);
        self.hash = hex::encode(Sha256::digest(self.canonical()?.as_bytes()));
        Ok(())
    }
}

/// `out` is recorded as "." (the directory holding `run.toml`), so the hash
/// depends on what was computed and not on where it was written.
fn canonical(run: &RunConfig) -> Result<String, CliError> {
    let run = RunConfig { out: PathBuf::from("."), ..run.clone() };
    toml::to_string(&run).map_err(|e| CliError::Config(e.to_string()))
}

pub fn parse(text: &str) -> Result<RunConfig, CliError> {
    toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
}

/// Reads `path`, applies `overrides`, checks referenced files exist.
pub fn load(path: &Path, overrides: &Overrides) -> Result<LoadedConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    let mut run = parse(&text).map_err(|e| match e {
        CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
        other => other,
    })?;
    if let Some(out) = &overrides.out {
        run.out = out.clone();
    }
    if let Some(seed) = overrides.seed {
        run.seed = seed;
    }
    if let Some(m) = overrides.m {
        run.m = Some(m);
        if let Some(sweep) = &mut run.sweep {
            sweep.measurements = vec![m];
        }
    }
    if let Some(p) = overrides.photons {
        match &mut run.noise {
            Some(noise) => noise.photons = p,
            None => {
                run.noise = Some(NoiseSection { photons: p, dark_fraction: DEFAULT_DARK_FRACTION })
            }
        }
        if let Some(sweep) = &mut run.sweep {
            sweep.photons = vec![p];
        }
    }
    if let Some(noise) = &run.noise {
        if !(noise.photons.is_finite() && noise.photons > 0.0) {
            return Err(CliError::Config(format!("noise.photons must be positive, got {}", noise.photons)));
        }
        if !(noise.dark_fraction.is_finite() && noise.dark_fraction >= 0.0) {
            return Err(CliError::Config(format!(
                "noise.dark_fraction must be nonnegative, got {}",
                noise.dark_fraction
            )));
        }
    }

    let base = path.parent().unwrap_or(Path::new("."));
    let scene_script = base.join(&run.scene.script);
    if !scene_script.is_file() {
        return Err(CliError::Config(format!(
            "scene script {} (from scene.script = {:?}) does not exist",
            scene_script.display(),
            run.scene.script
        )));
    }
    let out_dir = match &overrides.out {
        Some(out) => out.clone(),
        None => base.join(&run.out),
    };
    let hash = hex::encode(Sha256::digest(canonical(&run)?.as_bytes()));
    Ok(LoadedConfig { run, scene_script, out_dir, hash })
}
