//! Flat `key = value` run configuration.
//!
//! Lines are `section.key = value`; `#` starts a comment. Every key has a
//! default (see [`KEYS`]), files only need the keys they change, and
//! `--set key=value` overrides are applied on top in order.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::spde::{Scheme, DEFAULT_BLOWUP_THRESHOLD, DEFAULT_CFL_SAFETY};
use crate::weight::WeightPreset;

/// Documented keys with their defaults, in canonical order.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("grid.dim", "1", "spatial dimension n (1..=3)"),
    ("grid.n", "64", "grid points per axis"),
    ("weight.preset", "constant", "constant | cosine_well | quadratic_seam"),
    ("weight.c", "0", "weight amplitude"),
    ("weight.x0", "", "quadratic_seam centre, comma separated (empty: cell centre)"),
    ("params.epsilon", "0", "viscosity ε"),
    ("params.xi", "0", "linear growth rate ξ"),
    ("params.lambda", "1", "noise intensity λ (λ² < 2)"),
    ("params.dt", "auto", "time step, or auto for the stability bound rounded to divide T"),
    ("params.t", "0.25", "horizon T"),
    ("params.scheme", "explicit_em", "explicit_em | heun_stratonovich"),
    ("params.blowup_threshold", "1000000", "sup-norm cap for blow-up detection"),
    ("params.cfl_safety", "0.5", "safety factor of the automatic time step"),
    ("pinching.delta", "1", "pinching constant δ in (0, 4/3)"),
    ("initial.preset", "sine", "flat | sine | random_fourier"),
    ("initial.amplitude", "0.2", "amplitude A (flat: the constant value)"),
    ("initial.lipschitz_l", "none", "target sup of |∇u₀| (required by random_fourier)"),
    ("initial.modes", "4", "highest wavenumber per axis of random_fourier"),
    ("ensemble.paths", "200", "number of paths M"),
    ("ensemble.base_seed", "2024", "base seed; path i uses base_seed XOR i"),
    ("ensemble.workers", "0", "worker threads (0: one per core)"),
    ("output.directory", "out", "output directory"),
    ("output.stride", "64", "CSV row every `stride` steps (final step always written)"),
    ("validate.trials", "10000", "randomized trials per validator before any experiment"),
    ("k", "2", "standard errors allowed by the statistical verdicts"),
    ("max_slack", "0.05", "relative overshoot allowed by the maximum-principle verdict"),
    ("energy.h", "area", "profile of the h-energy column: dirichlet | area | h_m"),
    ("energy.h_m", "2", "knot M of the h_m profile"),
    ("sweep.eps", "0.1,0.05,0.025,0", "viscosities of sweep-eps, descending"),
    ("sweep.lambda", "0.4,0.2,0.1,0.05,0", "noise intensities of sweep-lambda"),
];

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DtSpec {
    Auto,
    Fixed(f64),
}

impl fmt::Display for DtSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DtSpec::Auto => f.write_str("auto"),
            DtSpec::Fixed(dt) => write!(f, "{dt}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitialPreset {
    Flat,
    Sine,
    RandomFourier,
}

impl InitialPreset {
    pub fn name(&self) -> &'static str {
        match self {
            InitialPreset::Flat => "flat",
            InitialPreset::Sine => "sine",
            InitialPreset::RandomFourier => "random_fourier",
        }
    }
}

impl FromStr for InitialPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flat" => Ok(InitialPreset::Flat),
            "sine" => Ok(InitialPreset::Sine),
            "random_fourier" => Ok(InitialPreset::RandomFourier),
            other => Err(Error::Config(format!("unknown initial preset `{other}` (flat, sine, random_fourier)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub grid_dim: usize,
    pub grid_n: usize,
    pub weight_preset: WeightPreset,
    pub weight_c: f64,
    pub weight_x0: Vec<f64>,
    pub epsilon: f64,
    pub xi: f64,
    pub lambda: f64,
    pub dt: DtSpec,
    pub t: f64,
    pub scheme: Scheme,
    pub blowup_threshold: f64,
    pub cfl_safety: f64,
    pub pinching_delta: f64,
    pub initial_preset: InitialPreset,
    pub initial_amplitude: f64,
    pub initial_lipschitz: Option<f64>,
    pub initial_modes: usize,
    pub paths: usize,
    pub base_seed: u64,
    pub workers: usize,
    pub output_dir: PathBuf,
    pub output_stride: usize,
    pub validate_trials: usize,
    pub k: f64,
    pub max_slack: f64,
    pub energy_h: String,
    pub energy_h_m: f64,
    pub sweep_eps: Vec<f64>,
    pub sweep_lambda: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            grid_dim: 1,
            grid_n: 64,
            weight_preset: WeightPreset::Constant,
            weight_c: 0.0,
            weight_x0: vec![],
            epsilon: 0.0,
            xi: 0.0,
            lambda: 1.0,
            dt: DtSpec::Auto,
            t: 0.25,
            scheme: Scheme::ExplicitEm,
            blowup_threshold: DEFAULT_BLOWUP_THRESHOLD,
            cfl_safety: DEFAULT_CFL_SAFETY,
            pinching_delta: 1.0,
            initial_preset: InitialPreset::Sine,
            initial_amplitude: 0.2,
            initial_lipschitz: None,
            initial_modes: 4,
            paths: 200,
            base_seed: 2024,
            workers: 0,
            output_dir: PathBuf::from("out"),
            output_stride: 64,
            validate_trials: 10_000,
            k: 2.0,
            max_slack: 0.05,
            energy_h: "area".into(),
            energy_h_m: 2.0,
            sweep_eps: vec![0.1, 0.05, 0.025, 0.0],
            sweep_lambda: vec![0.4, 0.2, 0.1, 0.05, 0.0],
        }
    }
}

fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
}

fn list(key: &str, value: &str) -> Result<Vec<f64>> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| num(key, s)).collect()
}

fn join(xs: &[f64]) -> String {
    xs.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, got `{line}`", lineno + 1)))?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{assignment}` is not `key=value`")))?;
        self.set(key.trim(), value.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "grid.dim" => self.grid_dim = num(key, value)?,
            "grid.n" => self.grid_n = num(key, value)?,
            "weight.preset" => self.weight_preset = value.parse()?,
            "weight.c" => self.weight_c = num(key, value)?,
            "weight.x0" => self.weight_x0 = list(key, value)?,
            "params.epsilon" => self.epsilon = num(key, value)?,
            "params.xi" => self.xi = num(key, value)?,
            "params.lambda" => self.lambda = num(key, value)?,
            "params.dt" => {
                self.dt = if value == "auto" { DtSpec::Auto } else { DtSpec::Fixed(num(key, value)?) };
            }
            "params.t" => self.t = num(key, value)?,
            "params.scheme" => self.scheme = value.parse()?,
            "params.blowup_threshold" => self.blowup_threshold = num(key, value)?,
            "params.cfl_safety" => self.cfl_safety = num(key, value)?,
            "pinching.delta" => self.pinching_delta = num(key, value)?,
            "initial.preset" => self.initial_preset = value.parse()?,
            "initial.amplitude" => self.initial_amplitude = num(key, value)?,
            "initial.lipschitz_l" => {
                self.initial_lipschitz = if value == "none" { None } else { Some(num(key, value)?) };
            }
            "initial.modes" => self.initial_modes = num(key, value)?,
            "ensemble.paths" => self.paths = num(key, value)?,
            "ensemble.base_seed" => self.base_seed = num(key, value)?,
            "ensemble.workers" => self.workers = num(key, value)?,
            "output.directory" => self.output_dir = PathBuf::from(value),
            "output.stride" => self.output_stride = num(key, value)?,
            "validate.trials" => self.validate_trials = num(key, value)?,
            "k" => self.k = num(key, value)?,
            "max_slack" => self.max_slack = num(key, value)?,
            "energy.h" => self.energy_h = value.to_string(),
            "energy.h_m" => self.energy_h_m = num(key, value)?,
            "sweep.eps" => self.sweep_eps = list(key, value)?,
            "sweep.lambda" => self.sweep_lambda = list(key, value)?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Canonical `key → value` map of every key; re-parses to an equal config.
    pub fn to_map(&self) -> BTreeMap<String, String> {
        let values: Vec<String> = vec![
            self.grid_dim.to_string(),
            self.grid_n.to_string(),
            self.weight_preset.name().into(),
            self.weight_c.to_string(),
            join(&self.weight_x0),
            self.epsilon.to_string(),
            self.xi.to_string(),
            self.lambda.to_string(),
            self.dt.to_string(),
            self.t.to_string(),
            self.scheme.name().into(),
            self.blowup_threshold.to_string(),
            self.cfl_safety.to_string(),
            self.pinching_delta.to_string(),
            self.initial_preset.name().into(),
            self.initial_amplitude.to_string(),
            self.initial_lipschitz.map_or_else(|| "none".into(), |l| l.to_string()),
            self.initial_modes.to_string(),
            self.paths.to_string(),
            self.base_seed.to_string(),
            self.workers.to_string(),
            self.output_dir.display().to_string(),
            self.output_stride.to_string(),
            self.validate_trials.to_string(),
            self.k.to_string(),
            self.max_slack.to_string(),
            self.energy_h.clone(),
            self.energy_h_m.to_string(),
            join(&self.sweep_eps),
            join(&self.sweep_lambda),
        ];
        KEYS.iter().map(|(k, _, _)| k.to_string()).zip(values).collect()
    }

    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        let mut cfg = Self::default();
        for (k, v) in map {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    /// Config file text listing every key in canonical order.
    pub fn to_text(&self) -> String {
        let map = self.to_map();
        KEYS.iter().map(|(k, _, doc)| format!("# {doc}\n{k} = {}\n", map[*k])).collect()
    }
}
