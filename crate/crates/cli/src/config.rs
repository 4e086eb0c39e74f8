//! Experiment configuration files.
//!
//! A config is a TOML document with a `schema_version`, a `[system]` table,
//! an optional `[geometry]` and `[exposure]`, a `[run]` table, an optional
//! `[sweep]` and an optional `[validate]`. Unknown keys are rejected. See
//! the README for the full schema.

use std::path::{Path, PathBuf};

use risfair::emf::ExposureSpec;
use risfair::model::{dbm_to_watts, Deployment, SystemConfig};
use risfair::phaseopt::AscentOptions;
use risfair::schemes::{SchemeId, SchemeOptions};
use serde::Deserialize;
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{path}:{line}: {key}: {message}")]
    Invalid {
        path: String,
        line: usize,
        key: String,
        message: String,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    schema_version: u32,
    name: Option<String>,
    system: RawSystem,
    #[serde(default)]
    geometry: RawGeometry,
    exposure: Option<RawExposure>,
    run: RawRun,
    sweep: Option<RawSweep>,
    #[serde(default)]
    validate: RawValidate,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    users: usize,
    antennas: Option<usize>,
    antennas_per_user: Option<usize>,
    ris_elements: Option<usize>,
    ris_per_user: Option<usize>,
    carrier_hz: Option<f64>,
    rician_kappa: Option<f64>,
    corr_eta: Option<f64>,
    corr_eta_ris: Option<f64>,
    corr_eta_users: Option<f64>,
    bandwidth_hz: Option<f64>,
    gain_bs_dbi: Option<f64>,
    gain_user_dbi: Option<f64>,
    gain_ris_dbi: Option<f64>,
    p_max_w: Option<f64>,
    p_max_dbm: Option<f64>,
    sar_ref: Option<f64>,
    sar_max: Option<f64>,
    spacing_bs_wavelengths: Option<f64>,
    spacing_ris_wavelengths: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGeometry {
    bs: Option<[f64; 3]>,
    ris: Option<[f64; 3]>,
    user_x: Option<[f64; 2]>,
    user_y: Option<[f64; 2]>,
    user_height: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExposure {
    sar_ref: Vec<f64>,
    sar_max: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    schemes: Vec<String>,
    trials: usize,
    seed: u64,
    output: Option<PathBuf>,
    #[serde(default)]
    redraw_statistics: bool,
    threads: Option<usize>,
    multistart: Option<usize>,
    max_rounds: Option<usize>,
    amortize_over: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    axis: String,
    values: Vec<f64>,
    unit: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawValidate {
    tau: Option<f64>,
    trials: Option<usize>,
    dims: Option<Vec<[usize; 3]>>,
    dbar_max_error: Option<f64>,
    taubar_max_error: Option<f64>,
    gradient_instances: Option<usize>,
    gradient_dims: Option<[usize; 3]>,
    gradient_eta: Option<f64>,
    gradient_step: Option<f64>,
    gradient_tol: Option<f64>,
    resolvent_dims: Option<[usize; 3]>,
    resolvent_trials: Option<usize>,
    resolvent_z: Option<f64>,
    resolvent_tol: Option<f64>,
}

/// How M or N follows K.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Count {
    Fixed(usize),
    PerUser(usize),
}

impl Count {
    pub fn at(self, users: usize) -> usize {
        match self {
            Count::Fixed(n) => n,
            Count::PerUser(r) => r * users,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Users,
    RisElements,
    PMax,
    SarMax,
}

impl SweepAxis {
    pub fn label(self) -> &'static str {
        match self {
            SweepAxis::Users => "K",
            SweepAxis::RisElements => "N",
            SweepAxis::PMax => "p_max_w",
            SweepAxis::SarMax => "sar_max",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub axis: SweepAxis,
    /// Values in internal units (Watts for `p_max`).
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationConfig {
    pub tau: f64,
    pub trials: usize,
    pub dims: Vec<[usize; 3]>,
    pub dbar_max_error: Option<f64>,
    pub taubar_max_error: Option<f64>,
    pub gradient_instances: usize,
    pub gradient_dims: [usize; 3],
    pub gradient_eta: f64,
    pub gradient_step: f64,
    pub gradient_tol: f64,
    pub resolvent_dims: [usize; 3],
    pub resolvent_trials: usize,
    pub resolvent_z: f64,
    pub resolvent_tol: f64,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self {
            tau: 1.0,
            trials: 100,
            dims: vec![[8, 16, 32], [16, 32, 64]],
            dbar_max_error: None,
            taubar_max_error: None,
            gradient_instances: 20,
            gradient_dims: [4, 8, 16],
            gradient_eta: 0.95,
            gradient_step: 1e-5,
            gradient_tol: 1e-5,
            resolvent_dims: [32, 64, 64],
            resolvent_trials: 20,
            resolvent_z: -0.5,
            resolvent_tol: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    /// System at the base user count; sweeps derive from it.
    pub system: SystemConfig,
    pub antennas: Count,
    pub ris_elements: Count,
    pub exposure: Option<ExposureSpec>,
    pub schemes: Vec<SchemeId>,
    pub sweep: Option<Sweep>,
    pub trials: usize,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub redraw_statistics: bool,
    pub threads: usize,
    /// Realizations per set of statistics in the runtime comparison.
    pub amortize_over: usize,
    pub scheme_options: SchemeOptions,
    pub validation: ValidationConfig,
}

/// Command-line and environment overrides, applied after parsing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub output: Option<PathBuf>,
    pub threads: Option<usize>,
}

/// 1-based line of `key` inside `[section]`, for error messages.
fn locate(source: &str, section: &str, key: &str) -> usize {
    let mut current = String::new();
    let mut section_line = 0;
    for (i, line) in source.lines().enumerate() {
        let t = line.trim();
        if let Some(name) = t.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            current = name.trim().to_string();
            if current == section {
                section_line = i + 1;
            }
            continue;
        }
        if current == section {
            if let Some((k, _)) = t.split_once('=') {
                if k.trim() == key {
                    return i + 1;
                }
            }
        }
    }
    section_line.max(1)
}

struct Checker<'a> {
    path: &'a str,
    source: &'a str,
}

impl Checker<'_> {
    fn fail(&self, section: &str, key: &str, message: impl Into<String>) -> ConfigError {
        let qualified = if section.is_empty() {
            key.to_string()
        } else {
            format!("{section}.{key}")
        };
        ConfigError::Invalid {
            path: self.path.to_string(),
            line: locate(self.source, section, key),
            key: qualified,
            message: message.into(),
        }
    }
}

fn count(
    ck: &Checker<'_>,
    fixed: Option<usize>,
    per_user: Option<usize>,
    fixed_key: &str,
    per_user_key: &str,
) -> Result<Count, ConfigError> {
    match (fixed, per_user) {
        (Some(_), Some(_)) => Err(ck.fail("system", per_user_key, format!("conflicts with {fixed_key}"))),
        (Some(0), None) => Err(ck.fail("system", fixed_key, "must be at least 1")),
        (None, Some(0)) => Err(ck.fail("system", per_user_key, "must be at least 1")),
        (Some(n), None) => Ok(Count::Fixed(n)),
        (None, Some(r)) => Ok(Count::PerUser(r)),
        (None, None) => Err(ck.fail("system", fixed_key, format!("set {fixed_key} or {per_user_key}"))),
    }
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let source = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_str_named(&source, &path.display().to_string())
    }

    /// Parse and validate a config held in memory; `path` only labels errors.
    pub fn from_str_named(source: &str, path: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(source).map_err(|e| ConfigError::Parse {
            path: path.to_string(),
            message: e.to_string().trim_end().to_string(),
        })?;
        let ck = Checker { path, source };
        if raw.schema_version != SCHEMA_VERSION {
            return Err(ck.fail(
                "",
                "schema_version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", raw.schema_version),
            ));
        }

        let s = &raw.system;
        if s.users == 0 {
            return Err(ck.fail("system", "users", "must be at least 1"));
        }
        let antennas = count(&ck, s.antennas, s.antennas_per_user, "antennas", "antennas_per_user")?;
        let ris_elements = count(&ck, s.ris_elements, s.ris_per_user, "ris_elements", "ris_per_user")?;

        let mut system = SystemConfig::reference(s.users, antennas.at(s.users), ris_elements.at(s.users));
        if let Some(f) = s.carrier_hz {
            if !(f > 0.0) {
                return Err(ck.fail("system", "carrier_hz", "must be positive"));
            }
            system.wavelength = SPEED_OF_LIGHT / f;
        }
        system.spacing_bs = s.spacing_bs_wavelengths.unwrap_or(0.5) * system.wavelength;
        system.spacing_ris = s.spacing_ris_wavelengths.unwrap_or(0.5) * system.wavelength;
        if let Some(k) = s.rician_kappa {
            system.rician_kappa = k;
        }
        if s.corr_eta.is_some() && (s.corr_eta_ris.is_some() || s.corr_eta_users.is_some()) {
            return Err(ck.fail("system", "corr_eta", "conflicts with corr_eta_ris / corr_eta_users"));
        }
        if let Some(eta) = s.corr_eta {
            system.corr_eta_ris = eta;
            system.corr_eta_users = eta;
        }
        if let Some(eta) = s.corr_eta_ris {
            system.corr_eta_ris = eta;
        }
        if let Some(eta) = s.corr_eta_users {
            system.corr_eta_users = eta;
        }
        if let Some(b) = s.bandwidth_hz {
            system.noise_bandwidth = b;
        }
        if let Some(g) = s.gain_bs_dbi {
            system.gain_bs_dbi = g;
        }
        if let Some(g) = s.gain_user_dbi {
            system.gain_user_dbi = g;
        }
        if let Some(g) = s.gain_ris_dbi {
            system.gain_ris_dbi = g;
        }
        match (s.p_max_w, s.p_max_dbm) {
            (Some(_), Some(_)) => return Err(ck.fail("system", "p_max_dbm", "conflicts with p_max_w")),
            (Some(w), None) => system.p_max = w,
            (None, Some(dbm)) => system.p_max = dbm_to_watts(dbm),
            (None, None) => {}
        }
        if let Some(x) = s.sar_ref {
            system.sar_ref = x;
        }
        if let Some(x) = s.sar_max {
            system.sar_max = x;
        }

        let g = &raw.geometry;
        let mut deployment = Deployment::default();
        if let Some(p) = g.bs {
            deployment.bs_position = p;
        }
        if let Some(p) = g.ris {
            deployment.ris_position = p;
        }
        if let Some([a, b]) = g.user_x {
            deployment.user_x = (a, b);
        }
        if let Some([a, b]) = g.user_y {
            deployment.user_y = (a, b);
        }
        if let Some(h) = g.user_height {
            deployment.user_height = h;
        }
        system.deployment = deployment;
        system
            .validate()
            .map_err(|e| ck.fail("system", "users", e.to_string()))?;

        let exposure = match &raw.exposure {
            None => None,
            Some(e) => {
                let spec = ExposureSpec {
                    sar_ref: e.sar_ref.clone(),
                    sar_max: e.sar_max.clone(),
                    p_max_common: system.p_max,
                };
                if spec.sar_ref.len() != s.users || spec.sar_max.len() != s.users {
                    return Err(ck.fail("exposure", "sar_ref", format!("need one entry per user ({})", s.users)));
                }
                spec.validate()
                    .map_err(|e| ck.fail("exposure", "sar_max", e.to_string()))?;
                Some(spec)
            }
        };

        let r = &raw.run;
        if r.schemes.is_empty() {
            return Err(ck.fail("run", "schemes", "at least one scheme is required"));
        }
        let mut schemes = Vec::with_capacity(r.schemes.len());
        for name in &r.schemes {
            let id: SchemeId = name
                .parse()
                .map_err(|e: risfair::Error| ck.fail("run", "schemes", e.to_string()))?;
            if schemes.contains(&id) {
                return Err(ck.fail("run", "schemes", format!("{id} listed twice")));
            }
            schemes.push(id);
        }
        if r.trials == 0 {
            return Err(ck.fail("run", "trials", "must be at least 1"));
        }
        let mut scheme_options = SchemeOptions::default();
        if let Some(m) = r.max_rounds {
            if m == 0 {
                return Err(ck.fail("run", "max_rounds", "must be at least 1"));
            }
            scheme_options.max_rounds = m;
        }
        if let Some(ms) = r.multistart {
            scheme_options.ascent = AscentOptions::default().with_multistart(ms, r.seed);
        }

        let sweep = match &raw.sweep {
            None => None,
            Some(sw) => Some(parse_sweep(&ck, sw, exposure.is_some())?),
        };

        let v = &raw.validate;
        let dv = ValidationConfig::default();
        let validation = ValidationConfig {
            tau: v.tau.unwrap_or(dv.tau),
            trials: v.trials.unwrap_or(dv.trials),
            dims: v.dims.clone().unwrap_or(dv.dims),
            dbar_max_error: v.dbar_max_error,
            taubar_max_error: v.taubar_max_error,
            gradient_instances: v.gradient_instances.unwrap_or(dv.gradient_instances),
            gradient_dims: v.gradient_dims.unwrap_or(dv.gradient_dims),
            gradient_eta: v.gradient_eta.unwrap_or(dv.gradient_eta),
            gradient_step: v.gradient_step.unwrap_or(dv.gradient_step),
            gradient_tol: v.gradient_tol.unwrap_or(dv.gradient_tol),
            resolvent_dims: v.resolvent_dims.unwrap_or(dv.resolvent_dims),
            resolvent_trials: v.resolvent_trials.unwrap_or(dv.resolvent_trials),
            resolvent_z: v.resolvent_z.unwrap_or(dv.resolvent_z),
            resolvent_tol: v.resolvent_tol.unwrap_or(dv.resolvent_tol),
        };
        if validation.dims.len() < 2 {
            return Err(ck.fail("validate", "dims", "need at least two sizes to see a trend"));
        }
        if validation.dims.iter().any(|d| d.contains(&0) || d[0] >= d[1]) {
            return Err(ck.fail("validate", "dims", "each size is [K, M, N] with 0 < K < M and N > 0"));
        }
        if !(validation.resolvent_z < 0.0) {
            return Err(ck.fail("validate", "resolvent_z", "must be negative"));
        }

        Ok(Self {
            name: raw.name.clone().unwrap_or_else(|| "experiment".to_string()),
            system,
            antennas,
            ris_elements,
            exposure,
            schemes,
            sweep,
            trials: r.trials,
            seed: r.seed,
            output: r.output.clone(),
            redraw_statistics: r.redraw_statistics,
            threads: r.threads.unwrap_or(0),
            amortize_over: r.amortize_over.unwrap_or(10).max(1),
            scheme_options,
            validation,
        })
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(t) = o.trials {
            self.trials = t.max(1);
        }
        if let Some(out) = &o.output {
            self.output = Some(out.clone());
        }
        if let Some(t) = o.threads {
            self.threads = t;
        }
    }

    /// Sweep points in order; a single `None` point without a sweep.
    pub fn points(&self) -> Vec<Option<f64>> {
        match &self.sweep {
            None => vec![None],
            Some(s) => s.values.iter().map(|&v| Some(v)).collect(),
        }
    }

    /// The system at one sweep point.
    pub fn system_at(&self, value: Option<f64>) -> SystemConfig {
        let mut cfg = self.system.clone();
        let (Some(sweep), Some(v)) = (&self.sweep, value) else {
            return cfg;
        };
        match sweep.axis {
            SweepAxis::Users => {
                let k = v as usize;
                cfg.users = k;
                cfg.antennas = self.antennas.at(k);
                cfg.ris_elements = self.ris_elements.at(k);
            }
            SweepAxis::RisElements => cfg.ris_elements = v as usize,
            SweepAxis::PMax => cfg.p_max = v,
            SweepAxis::SarMax => cfg.sar_max = v,
        }
        cfg
    }

    /// Per-user exposure limits at one sweep point, when overridden.
    pub fn exposure_at(&self, value: Option<f64>) -> Option<ExposureSpec> {
        let mut spec = self.exposure.clone()?;
        spec.p_max_common = self.system_at(value).p_max;
        Some(spec)
    }
}

fn parse_sweep(ck: &Checker<'_>, sw: &RawSweep, per_user_exposure: bool) -> Result<Sweep, ConfigError> {
    let axis = match sw.axis.trim().to_ascii_lowercase().as_str() {
        "k" | "users" => SweepAxis::Users,
        "n" | "ris_elements" => SweepAxis::RisElements,
        "p_max" => SweepAxis::PMax,
        "sar_max" => SweepAxis::SarMax,
        other => {
            return Err(ck.fail(
                "sweep",
                "axis",
                format!("unknown axis {other:?}; expected K, N, p_max or sar_max"),
            ))
        }
    };
    if sw.values.is_empty() {
        return Err(ck.fail("sweep", "values", "empty sweep"));
    }
    if sw.values.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(ck.fail("sweep", "values", "values must be strictly increasing"));
    }
    let values = match (axis, sw.unit.as_deref().map(str::to_ascii_lowercase).as_deref()) {
        (SweepAxis::PMax, None | Some("w")) => sw.values.clone(),
        (SweepAxis::PMax, Some("dbm")) => sw.values.iter().map(|&v| dbm_to_watts(v)).collect(),
        (_, None) => sw.values.clone(),
        (_, Some(u)) => return Err(ck.fail("sweep", "unit", format!("unit {u:?} does not apply to this axis"))),
    };
    match axis {
        SweepAxis::Users | SweepAxis::RisElements => {
            if values.iter().any(|&v| v < 1.0 || v.fract() != 0.0) {
                return Err(ck.fail("sweep", "values", "counts must be positive integers"));
            }
        }
        SweepAxis::PMax | SweepAxis::SarMax => {
            if values.iter().any(|&v| !(v > 0.0)) {
                return Err(ck.fail("sweep", "values", "values must be positive"));
            }
        }
    }
    if per_user_exposure && matches!(axis, SweepAxis::Users | SweepAxis::SarMax) {
        return Err(ck.fail(
            "sweep",
            "axis",
            "per-user [exposure] limits cannot be combined with a K or sar_max sweep",
        ));
    }
    Ok(Sweep { axis, values })
}
