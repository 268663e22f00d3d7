//! JSON run configuration, preset overlay and config hashing.

use anyhow::{bail, Context, Result};
use kerrsync::integrator::IntegratorConfig;
use kerrsync::measures::DEFAULT_WINDOW;
use kerrsync::model::{InitialCovariance, ModelParams};
use kerrsync::presets::{self, preset_with_resolution, DEFAULT_RESOLUTION};
use kerrsync::sweep::{SweepAxis, SweepGrid};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};
use std::path::Path;

pub const SEED_ENV: &str = "KERRSYNC_SEED";

/// Config file as written by the user. Every field is optional and overlays
/// the preset (or the built-in defaults).
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub params: Map<String, Value>,
    #[serde(default)]
    pub integrator: Map<String, Value>,
    pub seed: Option<u64>,
    pub initial_covariance: Option<InitialCovariance>,
    pub initial_mean: Option<[f64; 8]>,
    pub window_fraction: Option<f64>,
    pub sweep: Option<SweepSection>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub axes: Option<Vec<SweepAxis>>,
    pub seeds: Option<usize>,
    /// Points per continuous axis when the axes come from a preset.
    pub resolution: Option<usize>,
}

/// Fully resolved configuration. Its canonical JSON is what gets hashed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub preset: Option<String>,
    pub params: ModelParams,
    pub integrator: IntegratorConfig,
    pub seed: u64,
    pub initial_covariance: InitialCovariance,
    pub initial_mean: [f64; 8],
    pub window_fraction: f64,
    pub axes: Vec<SweepAxis>,
    pub seeds: usize,
}

impl RunConfig {
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }

    pub fn grid(&self) -> SweepGrid {
        SweepGrid {
            base: self.params,
            integrator: self.integrator,
            axes: self.axes.clone(),
            seed: self.seed,
            seeds: self.seeds,
            initial_covariance: self.initial_covariance,
            initial_mean: self.initial_mean,
            window_fraction: self.window_fraction,
        }
    }
}

fn overlay<T>(base: &T, patch: &Map<String, Value>, what: &str) -> Result<T>
where
    T: Serialize + for<'de> Deserialize<'de>,
{
    let mut value = serde_json::to_value(base)?;
    let obj = value.as_object_mut().expect("struct serializes to an object");
    for (k, v) in patch {
        obj.insert(k.clone(), v.clone());
    }
    serde_json::from_value(value).with_context(|| format!("invalid {what}"))
}

pub fn read_config(path: &Path) -> Result<ConfigFile> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
}

/// Combines preset, config file and `KERRSYNC_SEED` into one validated
/// configuration.
pub fn resolve(preset: Option<&str>, file: ConfigFile, env_seed: Option<&str>) -> Result<RunConfig> {
    let resolution = file
        .sweep
        .as_ref()
        .and_then(|s| s.resolution)
        .unwrap_or(DEFAULT_RESOLUTION);
    let (base, preset_axes) = match preset {
        Some(name) => {
            let p = preset_with_resolution(name, resolution).with_context(|| {
                let known: Vec<&str> = presets::names().collect();
                format!("unknown preset {name:?}; known: {}", known.join(", "))
            })?;
            (p.params, p.axes)
        }
        None => (ModelParams::default(), Vec::new()),
    };
    let params: ModelParams = overlay(&base, &file.params, "params")?;
    let params = params.validate().context("invalid params")?;
    let integrator: IntegratorConfig =
        overlay(&IntegratorConfig::default(), &file.integrator, "integrator settings")?;
    integrator.validate().context("invalid integrator settings")?;

    let mut seed = file.seed.unwrap_or(0);
    if let Some(s) = env_seed {
        seed = s
            .trim()
            .parse()
            .with_context(|| format!("{SEED_ENV}={s:?} is not an unsigned 64-bit integer"))?;
    }
    let window_fraction = file.window_fraction.unwrap_or(DEFAULT_WINDOW);
    if !(window_fraction > 0.0 && window_fraction <= 1.0) {
        bail!("window_fraction must lie in (0, 1], got {window_fraction}");
    }
    let (axes, seeds) = match file.sweep {
        Some(s) => (s.axes.unwrap_or(preset_axes), s.seeds.unwrap_or(1)),
        None => (preset_axes, 1),
    };
    Ok(RunConfig {
        preset: preset.map(str::to_owned),
        params,
        integrator,
        seed,
        initial_covariance: file.initial_covariance.unwrap_or_default(),
        initial_mean: file.initial_mean.unwrap_or([0.0; 8]),
        window_fraction,
        axes,
        seeds,
    })
}
