//! Flat `key = value` run configuration.
//!
//! Unknown keys are fatal. Every solver tolerance has a default; the only
//! required keys are `grid.n`, `time.T`, `time.dt` and `potential.kind`.
//! [`Config::to_text`] writes every key explicitly, so parsing its output
//! reproduces the same `Config`.

use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;
use std::sync::Arc;

use sha2::{Digest, Sha256};

use crate::grid::{Grid, GridError};
use crate::model::{
    ControlSpec, Controls, InitPreset, InitPresets, InitialData, ModelParams, ProliferationSpec,
    TruncationSpec,
};
use crate::potentials::{PotentialError, PotentialKind, SplitPotential};
use crate::stepper::SchemeConfig;

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    Syntax { line: usize, message: String },
    UnknownKey { line: usize, key: String },
    DuplicateKey { line: usize, key: String },
    TypeError { line: usize, key: String, expected: &'static str, found: String },
    UnknownValue { line: usize, key: String, value: String, allowed: Vec<&'static str> },
    InvalidValue { line: usize, key: String, message: String },
    MissingRequired { key: String },
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Syntax { line, message } => write!(f, "line {line}: {message}"),
            ConfigError::UnknownKey { line, key } => write!(f, "line {line}: unknown key `{key}`"),
            ConfigError::DuplicateKey { line, key } => {
                write!(f, "line {line}: key `{key}` given twice")
            }
            ConfigError::TypeError { line, key, expected, found } => {
                write!(f, "line {line}: `{key}` expects {expected}, found `{found}`")
            }
            ConfigError::UnknownValue { line, key, value, allowed } => write!(
                f,
                "line {line}: `{key}` has unknown value `{value}` (expected one of: {})",
                allowed.join(", ")
            ),
            ConfigError::InvalidValue { line, key, message } => {
                write!(f, "line {line}: `{key}`: {message}")
            }
            ConfigError::MissingRequired { key } => write!(f, "missing required key `{key}`"),
        }
    }
}

/// Every value a run or study can be configured with.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub grid_dim: usize,
    /// Cells per axis.
    pub grid_n: usize,
    /// Edge length per axis.
    pub grid_length: f64,
    pub t_final: f64,
    pub dt: f64,
    pub record_every: usize,
    pub params: ModelParams,
    pub potential_kind: &'static str,
    pub k1: f64,
    pub k2: f64,
    pub epsilon: f64,
    pub init: InitPresets,
    pub controls: Controls,
    /// Direction of the control perturbation in the stability study.
    pub perturbation: Controls,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub cg_tol: f64,
    pub alphas: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub deltas: Vec<f64>,
    pub output_dir: String,
    pub dump_fields: bool,
}

pub const POTENTIAL_KINDS: [&str; 3] = ["regular", "logarithmic", "obstacle"];
const P_KINDS: [&str; 2] = ["constant", "ramp"];
const H_KINDS: [&str; 3] = ["ramp", "one", "zero"];
const INIT_KINDS: [&str; 3] = ["constant", "cosine_bump", "tanh_interface"];
const CONTROL_KINDS: [&str; 4] = ["zero", "constant", "gaussian_pulse", "sinusoid"];

impl Config {
    /// Defaults for everything except the four required keys.
    pub fn with_required(grid_n: usize, t_final: f64, dt: f64, potential_kind: &'static str) -> Self {
        let length = 1.0;
        Self {
            grid_dim: 1,
            grid_n,
            grid_length: length,
            t_final,
            dt,
            record_every: 1,
            params: ModelParams::default(),
            potential_kind,
            k1: 2.0,
            k2: 1.0,
            epsilon: dt.min(1e-3),
            init: InitPresets::default(),
            controls: Controls::default(),
            perturbation: Controls {
                u1: default_pulse(length),
                u2: default_pulse(length),
            },
            newton_tol: 1e-12,
            newton_max_iter: 100,
            cg_tol: SchemeConfig::DEFAULT_CG_TOL,
            alphas: (2..=9).map(|k| 2f64.powi(-k)).collect(),
            epsilons: vec![1e-1, 1e-2, 1e-3, 1e-4],
            deltas: vec![1.0, 0.5, 0.25, 0.125],
            output_dir: "out".into(),
            dump_fields: false,
        }
    }

    pub fn grid(&self) -> Result<Arc<Grid>, GridError> {
        let n = vec![self.grid_n; self.grid_dim];
        let l = vec![self.grid_length; self.grid_dim];
        Grid::new(&n, &l).map(Arc::new)
    }

    pub fn potential(&self) -> Result<SplitPotential, PotentialError> {
        SplitPotential::new(match self.potential_kind {
            "logarithmic" => PotentialKind::Logarithmic { k1: self.k1 },
            "obstacle" => PotentialKind::Obstacle { k2: self.k2 },
            _ => PotentialKind::Regular,
        })
    }

    pub fn scheme(&self) -> SchemeConfig {
        SchemeConfig {
            dt: self.dt,
            eps: self.epsilon,
            newton_tol: self.newton_tol,
            newton_max_iter: self.newton_max_iter,
            cg_tol: self.cg_tol,
            record_every: self.record_every,
        }
    }

    pub fn initial_data(&self) -> Result<InitialData, GridError> {
        Ok(InitialData::from_presets(&self.init, &self.grid()?))
    }

    /// Canonical text form listing every key.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("grid.dim", self.grid_dim.to_string());
        kv("grid.n", self.grid_n.to_string());
        kv("grid.length", num(self.grid_length));
        kv("time.T", num(self.t_final));
        kv("time.dt", num(self.dt));
        kv("time.record_every", self.record_every.to_string());
        kv("model.alpha", num(self.params.alpha));
        kv("model.tau", num(self.params.tau));
        kv("model.chi", num(self.params.chi));
        let (pk, p0) = match self.params.proliferation {
            ProliferationSpec::Constant(p) => ("constant", p),
            ProliferationSpec::Ramp(p) => ("ramp", p),
        };
        kv("model.P.kind", pk.into());
        kv("model.P.p0", num(p0));
        kv(
            "model.h.kind",
            match self.params.truncation {
                TruncationSpec::Ramp => "ramp",
                TruncationSpec::One => "one",
                TruncationSpec::Zero => "zero",
            }
            .into(),
        );
        kv("potential.kind", self.potential_kind.into());
        kv("potential.k1", num(self.k1));
        kv("potential.k2", num(self.k2));
        kv("potential.epsilon", num(self.epsilon));
        let init = [
            ("init.mu0", self.init.mu0),
            ("init.mu0_prime", self.init.mu0_prime),
            ("init.phi0", self.init.phi0),
            ("init.sigma0", self.init.sigma0),
        ];
        for (prefix, preset) in init {
            for (k, v) in init_entries(&preset) {
                kv(&format!("{prefix}.{k}"), v);
            }
        }
        let controls = [
            ("controls.u1", self.controls.u1),
            ("controls.u2", self.controls.u2),
            ("study.perturb.u1", self.perturbation.u1),
            ("study.perturb.u2", self.perturbation.u2),
        ];
        for (prefix, spec) in controls {
            for (k, v) in control_entries(&spec) {
                kv(&format!("{prefix}.{k}"), v);
            }
        }
        kv("solver.newton_tol", num(self.newton_tol));
        kv("solver.newton_max_iter", self.newton_max_iter.to_string());
        kv("solver.cg_tol", num(self.cg_tol));
        kv("study.alphas", list(&self.alphas));
        kv("study.epsilons", list(&self.epsilons));
        kv("study.deltas", list(&self.deltas));
        kv("output.dir", self.output_dir.clone());
        kv("output.dump_fields", self.dump_fields.to_string());
        s
    }

    /// Short stable hash of the canonical text, used in report file names.
    pub fn digest(&self) -> String {
        let hash = Sha256::digest(self.to_text().as_bytes());
        hex::encode(&hash[..8])
    }
}

fn default_pulse(length: f64) -> ControlSpec {
    ControlSpec::GaussianPulse {
        amplitude: 1.0,
        center: [0.5 * length, 0.5 * length],
        width: 0.1 * length,
        t_on: 0.0,
        t_off: f64::INFINITY,
    }
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

fn list(v: &[f64]) -> String {
    v.iter().map(|x| num(*x)).collect::<Vec<_>>().join(", ")
}

fn init_entries(p: &InitPreset) -> Vec<(&'static str, String)> {
    match *p {
        InitPreset::Constant(c) => vec![("kind", "constant".into()), ("value", num(c))],
        InitPreset::CosineBump { amplitude, mode } => vec![
            ("kind", "cosine_bump".into()),
            ("amplitude", num(amplitude)),
            ("mode", mode.to_string()),
        ],
        InitPreset::TanhInterface { center, width, low, high } => vec![
            ("kind", "tanh_interface".into()),
            ("center", num(center)),
            ("width", num(width)),
            ("low", num(low)),
            ("high", num(high)),
        ],
    }
}

fn control_entries(c: &ControlSpec) -> Vec<(&'static str, String)> {
    match *c {
        ControlSpec::Zero => vec![("kind", "zero".into())],
        ControlSpec::Constant(v) => vec![("kind", "constant".into()), ("value", num(v))],
        ControlSpec::GaussianPulse { amplitude, center, width, t_on, t_off } => vec![
            ("kind", "gaussian_pulse".into()),
            ("amplitude", num(amplitude)),
            ("center_x", num(center[0])),
            ("center_y", num(center[1])),
            ("width", num(width)),
            ("t_on", num(t_on)),
            ("t_off", num(t_off)),
        ],
        ControlSpec::Sinusoid { amplitude, mode, omega } => vec![
            ("kind", "sinusoid".into()),
            ("amplitude", num(amplitude)),
            ("mode", mode.to_string()),
            ("omega", num(omega)),
        ],
    }
}

/// Typed access to the raw entries; remembers which keys were consumed.
struct Entries {
    map: BTreeMap<String, (String, usize)>,
    errors: Vec<ConfigError>,
}

impl Entries {
    fn take(&mut self, key: &str) -> Option<(String, usize)> {
        self.map.remove(key)
    }

    fn parse<T: std::str::FromStr>(&mut self, key: &str, expected: &'static str) -> Option<T> {
        let (raw, line) = self.take(key)?;
        match raw.parse::<T>() {
            Ok(v) => Some(v),
            Err(_) => {
                self.errors.push(ConfigError::TypeError {
                    line,
                    key: key.into(),
                    expected,
                    found: raw,
                });
                None
            }
        }
    }

    fn f64_or(&mut self, key: &str, default: f64) -> f64 {
        self.parse(key, "a number").unwrap_or(default)
    }

    fn usize_or(&mut self, key: &str, default: usize) -> usize {
        self.parse(key, "a nonnegative integer").unwrap_or(default)
    }

    fn u32_or(&mut self, key: &str, default: u32) -> u32 {
        self.parse(key, "a nonnegative integer").unwrap_or(default)
    }

    fn bool_or(&mut self, key: &str, default: bool) -> bool {
        self.parse(key, "true or false").unwrap_or(default)
    }

    fn required<T: std::str::FromStr>(&mut self, key: &str, expected: &'static str) -> Option<T> {
        if !self.map.contains_key(key) {
            self.errors.push(ConfigError::MissingRequired { key: key.into() });
            return None;
        }
        self.parse(key, expected)
    }

    fn choice(
        &mut self,
        key: &str,
        allowed: &[&'static str],
        default: Option<&'static str>,
    ) -> Option<&'static str> {
        match self.take(key) {
            Some((raw, line)) => match allowed.iter().find(|&&a| a == raw) {
                Some(&a) => Some(a),
                None => {
                    self.errors.push(ConfigError::UnknownValue {
                        line,
                        key: key.into(),
                        value: raw,
                        allowed: allowed.to_vec(),
                    });
                    None
                }
            },
            None => {
                if default.is_none() {
                    self.errors.push(ConfigError::MissingRequired { key: key.into() });
                }
                default
            }
        }
    }

    fn list_or(&mut self, key: &str, default: Vec<f64>) -> Vec<f64> {
        let Some((raw, line)) = self.take(key) else {
            return default;
        };
        let parsed: Result<Vec<f64>, _> = raw
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::parse::<f64>)
            .collect();
        match parsed {
            Ok(v) => v,
            Err(_) => {
                self.errors.push(ConfigError::TypeError {
                    line,
                    key: key.into(),
                    expected: "a comma-separated list of numbers",
                    found: raw,
                });
                default
            }
        }
    }

    fn line_of(&self, key: &str) -> usize {
        self.map.get(key).map(|e| e.1).unwrap_or(0)
    }

    fn init_preset(&mut self, prefix: &str, default: InitPreset, length: f64) -> InitPreset {
        let kind_key = format!("{prefix}.kind");
        let Some(kind) = self.choice(&kind_key, &INIT_KINDS, Some("")) else {
            return default;
        };
        let k = |s: &str| format!("{prefix}.{s}");
        match kind {
            "" => default,
            "constant" => InitPreset::Constant(self.f64_or(&k("value"), 0.0)),
            "cosine_bump" => InitPreset::CosineBump {
                amplitude: self.f64_or(&k("amplitude"), 0.5),
                mode: self.u32_or(&k("mode"), 1),
            },
            _ => InitPreset::TanhInterface {
                center: self.f64_or(&k("center"), 0.5 * length),
                width: self.f64_or(&k("width"), 0.05 * length),
                low: self.f64_or(&k("low"), -0.9),
                high: self.f64_or(&k("high"), 0.9),
            },
        }
    }

    fn control(&mut self, prefix: &str, default: ControlSpec, length: f64) -> ControlSpec {
        let kind_key = format!("{prefix}.kind");
        let Some(kind) = self.choice(&kind_key, &CONTROL_KINDS, Some("")) else {
            return default;
        };
        let k = |s: &str| format!("{prefix}.{s}");
        match kind {
            "" => default,
            "zero" => ControlSpec::Zero,
            "constant" => ControlSpec::Constant(self.f64_or(&k("value"), 0.0)),
            "gaussian_pulse" => ControlSpec::GaussianPulse {
                amplitude: self.f64_or(&k("amplitude"), 1.0),
                center: [
                    self.f64_or(&k("center_x"), 0.5 * length),
                    self.f64_or(&k("center_y"), 0.5 * length),
                ],
                width: self.f64_or(&k("width"), 0.1 * length),
                t_on: self.f64_or(&k("t_on"), 0.0),
                t_off: self.f64_or(&k("t_off"), f64::INFINITY),
            },
            _ => ControlSpec::Sinusoid {
                amplitude: self.f64_or(&k("amplitude"), 1.0),
                mode: self.u32_or(&k("mode"), 1),
                omega: self.f64_or(&k("omega"), 0.0),
            },
        }
    }
}

/// Parses the `key = value` grammar (`#` starts a comment) into a validated
/// [`Config`] with defaults applied. All problems are reported together.
pub fn parse_config(text: &str) -> Result<Config, Vec<ConfigError>> {
    let mut entries = Entries {
        map: BTreeMap::new(),
        errors: Vec::new(),
    };
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((k, v)) = content.split_once('=') else {
            entries.errors.push(ConfigError::Syntax {
                line,
                message: format!("expected `key = value`, got `{content}`"),
            });
            continue;
        };
        let (k, v) = (k.trim().to_string(), v.trim().to_string());
        if entries.map.contains_key(&k) {
            entries.errors.push(ConfigError::DuplicateKey { line, key: k });
            continue;
        }
        entries.map.insert(k, (v, line));
    }

    let e = &mut entries;
    let grid_n: Option<usize> = e.required("grid.n", "a positive integer");
    let t_final: Option<f64> = e.required("time.T", "a number");
    let dt: Option<f64> = e.required("time.dt", "a number");
    let potential_kind = e.choice("potential.kind", &POTENTIAL_KINDS, None);

    let mut cfg = Config::with_required(
        grid_n.unwrap_or(2),
        t_final.unwrap_or(1.0),
        dt.unwrap_or(1.0),
        potential_kind.unwrap_or("regular"),
    );

    let dim_line = e.line_of("grid.dim");
    cfg.grid_dim = e.usize_or("grid.dim", 1);
    if !(1..=2).contains(&cfg.grid_dim) {
        e.errors.push(ConfigError::InvalidValue {
            line: dim_line,
            key: "grid.dim".into(),
            message: format!("must be 1 or 2, got {}", cfg.grid_dim),
        });
    }
    cfg.grid_length = e.f64_or("grid.length", 1.0);
    cfg.record_every = e.usize_or("time.record_every", 1);

    cfg.params.alpha = e.f64_or("model.alpha", cfg.params.alpha);
    cfg.params.tau = e.f64_or("model.tau", cfg.params.tau);
    cfg.params.chi = e.f64_or("model.chi", cfg.params.chi);
    let p_kind = e.choice("model.P.kind", &P_KINDS, Some("constant"));
    let p0 = e.f64_or("model.P.p0", cfg.params.proliferation.bound());
    cfg.params.proliferation = match p_kind {
        Some("ramp") => ProliferationSpec::Ramp(p0),
        _ => ProliferationSpec::Constant(p0),
    };
    cfg.params.truncation = match e.choice("model.h.kind", &H_KINDS, Some("ramp")) {
        Some("one") => TruncationSpec::One,
        Some("zero") => TruncationSpec::Zero,
        _ => TruncationSpec::Ramp,
    };

    cfg.k1 = e.f64_or("potential.k1", cfg.k1);
    cfg.k2 = e.f64_or("potential.k2", cfg.k2);
    cfg.epsilon = e.f64_or("potential.epsilon", cfg.dt.min(1e-3));

    let length = cfg.grid_length;
    let defaults = InitPresets::default();
    cfg.init = InitPresets {
        mu0: e.init_preset("init.mu0", defaults.mu0, length),
        mu0_prime: e.init_preset("init.mu0_prime", defaults.mu0_prime, length),
        phi0: e.init_preset("init.phi0", defaults.phi0, length),
        sigma0: e.init_preset("init.sigma0", defaults.sigma0, length),
    };
    cfg.controls = Controls {
        u1: e.control("controls.u1", ControlSpec::Zero, length),
        u2: e.control("controls.u2", ControlSpec::Zero, length),
    };
    cfg.perturbation = Controls {
        u1: e.control("study.perturb.u1", default_pulse(length), length),
        u2: e.control("study.perturb.u2", default_pulse(length), length),
    };

    cfg.newton_tol = e.f64_or("solver.newton_tol", cfg.newton_tol);
    cfg.newton_max_iter = e.usize_or("solver.newton_max_iter", cfg.newton_max_iter);
    cfg.cg_tol = e.f64_or("solver.cg_tol", cfg.cg_tol);
    cfg.alphas = e.list_or("study.alphas", cfg.alphas.clone());
    cfg.epsilons = e.list_or("study.epsilons", cfg.epsilons.clone());
    cfg.deltas = e.list_or("study.deltas", cfg.deltas.clone());
    if let Some((dir, _)) = e.take("output.dir") {
        cfg.output_dir = dir;
    }
    cfg.dump_fields = e.bool_or("output.dump_fields", false);

    let leftovers: Vec<(String, usize)> = e.map.iter().map(|(k, v)| (k.clone(), v.1)).collect();
    for (key, line) in leftovers {
        e.errors.push(ConfigError::UnknownKey { line, key });
    }

    let positives = [
        ("time.T", cfg.t_final),
        ("time.dt", cfg.dt),
        ("grid.length", cfg.grid_length),
        ("potential.epsilon", cfg.epsilon),
        ("solver.newton_tol", cfg.newton_tol),
        ("solver.cg_tol", cfg.cg_tol),
    ];
    for (key, v) in positives {
        if !(v > 0.0 && v.is_finite()) {
            e.errors.push(ConfigError::InvalidValue {
                line: 0,
                key: key.into(),
                message: format!("must be positive, got {v}"),
            });
        }
    }
    if cfg.grid_n < 2 {
        e.errors.push(ConfigError::InvalidValue {
            line: 0,
            key: "grid.n".into(),
            message: "need at least 2 cells per axis".into(),
        });
    }
    if cfg.record_every == 0 || cfg.newton_max_iter == 0 {
        e.errors.push(ConfigError::InvalidValue {
            line: 0,
            key: "time.record_every / solver.newton_max_iter".into(),
            message: "must be at least 1".into(),
        });
    }

    e.errors.sort_by_key(error_line);
    if entries.errors.is_empty() {
        Ok(cfg)
    } else {
        Err(entries.errors)
    }
}

fn error_line(e: &ConfigError) -> usize {
    match e {
        ConfigError::Syntax { line, .. }
        | ConfigError::UnknownKey { line, .. }
        | ConfigError::DuplicateKey { line, .. }
        | ConfigError::TypeError { line, .. }
        | ConfigError::UnknownValue { line, .. }
        | ConfigError::InvalidValue { line, .. } => *line,
        ConfigError::MissingRequired { .. } => usize::MAX,
    }
}
