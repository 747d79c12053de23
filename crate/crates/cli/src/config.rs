//! Run configuration: `key = value` lines grouped under `[section]` headers
//! (TOML syntax), validated into a [`RunConfig`].

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;

use mixtype::coeffs::Preset;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}:{line}: {message}")]
    Syntax { path: String, line: usize, message: String },
    #[error("{key} = {value} is out of range: expected {range}{}", location(.line))]
    Range { key: &'static str, value: String, range: &'static str, line: Option<usize> },
    #[error("{key}: {message}{}", location(.line))]
    Invalid { key: &'static str, message: String, line: Option<usize> },
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

fn location(line: &Option<usize>) -> String {
    line.map_or(String::new(), |l| format!(" (line {l})"))
}

/// Right-hand side used by `solve`.
#[derive(Debug, Clone, PartialEq)]
pub enum RhsSpec {
    /// `f = L u*` for `u* = (1-y)(1+y)² sin(πx)`.
    Manufactured,
    /// Seeded smooth random field.
    Smooth,
    Csv(PathBuf),
}

impl FromStr for RhsSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "manufactured" => Ok(RhsSpec::Manufactured),
            "smooth" => Ok(RhsSpec::Smooth),
            other => other
                .strip_prefix("csv:")
                .map(|p| RhsSpec::Csv(PathBuf::from(p)))
                .ok_or_else(|| format!("unknown rhs {other:?} (manufactured | smooth | csv:<path>)")),
        }
    }
}

impl fmt::Display for RhsSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RhsSpec::Manufactured => f.write_str("manufactured"),
            RhsSpec::Smooth => f.write_str("smooth"),
            RhsSpec::Csv(p) => write!(f, "csv:{}", p.display()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub preset: Preset,
    pub eps: f64,
    pub alpha: f64,
    pub lambda: f64,
    pub m: usize,
    pub psi: f64,
    pub rhs: RhsSpec,
    pub enforce: bool,
    pub upwind: bool,
    pub n: usize,
    pub grids: Vec<usize>,
    pub seed: u64,
    pub samples: usize,
    pub slack: f64,
    pub output: PathBuf,
    pub rho: f64,
    pub alpha0: f64,
    pub theta: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub amplitude: f64,
    pub eps_prime: f64,
    /// K for `ma` and `darboux`; the manufactured case when absent.
    pub curvature: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            preset: Preset::Tricomi,
            eps: 1e-4,
            alpha: 0.02,
            lambda: 10.0,
            m: 0,
            psi: 0.0,
            rhs: RhsSpec::Manufactured,
            enforce: true,
            upwind: false,
            n: 64,
            grids: vec![32, 64, 128],
            seed: 42,
            samples: 100,
            slack: 0.5,
            output: PathBuf::from("mixtype-out"),
            rho: 0.25,
            alpha0: 1.5,
            theta: 1.0,
            tol: 1e-6,
            max_iter: 50,
            amplitude: 0.01,
            eps_prime: 0.01,
            curvature: None,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    #[serde(default)]
    problem: ProblemSection,
    #[serde(default)]
    grid: GridSection,
    #[serde(default)]
    run: RunSection,
    #[serde(default)]
    nonlinear: NonlinearSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemSection {
    preset: Option<String>,
    eps: Option<f64>,
    alpha: Option<f64>,
    lambda: Option<f64>,
    m: Option<i64>,
    psi: Option<f64>,
    rhs: Option<String>,
    enforce: Option<bool>,
    upwind: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSection {
    n: Option<i64>,
    grids: Option<Vec<i64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunSection {
    seed: Option<i64>,
    samples: Option<i64>,
    slack: Option<f64>,
    output: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct NonlinearSection {
    rho: Option<f64>,
    alpha0: Option<f64>,
    theta: Option<f64>,
    tol: Option<f64>,
    max_iter: Option<i64>,
    amplitude: Option<f64>,
    eps_prime: Option<f64>,
    curvature: Option<String>,
}

/// Values supplied on the command line; each one overrides the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub preset: Option<String>,
    pub eps: Option<f64>,
    pub alpha: Option<f64>,
    pub lambda: Option<f64>,
    pub m: Option<i64>,
    pub psi: Option<f64>,
    pub rhs: Option<String>,
    pub no_enforce: bool,
    pub upwind: bool,
    pub n: Option<i64>,
    pub grids: Option<Vec<i64>>,
    pub seed: Option<i64>,
    pub samples: Option<i64>,
    pub output: Option<PathBuf>,
    pub rho: Option<f64>,
    pub alpha0: Option<f64>,
    pub theta: Option<f64>,
    pub tol: Option<f64>,
    pub max_iter: Option<i64>,
    pub curvature: Option<PathBuf>,
}

/// 1-based line of the first byte of `span` in `text`.
fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

/// Line holding `key` inside `[section]`, for error messages.
fn find_key(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim().to_string();
        } else if current == section {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return Some(n + 1);
                }
            }
        }
    }
    None
}

/// Parses and validates a config file.
pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
    parse_config(&text, &path.display().to_string(), &Overrides::default())
}

/// [`load_config`] on in-memory text with command-line overrides applied.
pub fn parse_config(text: &str, origin: &str, flags: &Overrides) -> Result<RunConfig, ConfigError> {
    let file: FileConfig = toml::from_str(text).map_err(|e| ConfigError::Syntax {
        path: origin.to_string(),
        line: e.span().map_or(1, |s| line_of(text, s.start)),
        message: e.message().to_string(),
    })?;
    Builder { text, cfg: RunConfig::default() }.build(file, flags)
}

struct Builder<'a> {
    text: &'a str,
    cfg: RunConfig,
}

/// Picks the flag value when given, else the file value, remembering which
/// section/key supplied it so errors can point at a line.
fn pick<T>(flag: Option<T>, file: Option<T>) -> (Option<T>, bool) {
    match (flag, file) {
        (Some(v), _) => (Some(v), false),
        (None, v) => {
            let from_file = v.is_some();
            (v, from_file)
        }
    }
}

impl Builder<'_> {
    fn line(&self, from_file: bool, section: &str, key: &str) -> Option<usize> {
        if from_file {
            find_key(self.text, section, key)
        } else {
            None
        }
    }

    fn real(
        &self,
        (value, from_file): (Option<f64>, bool),
        section: &str,
        key: &'static str,
        range: &'static str,
        ok: impl Fn(f64) -> bool,
    ) -> Result<Option<f64>, ConfigError> {
        match value {
            Some(v) if !(v.is_finite() && ok(v)) => Err(ConfigError::Range {
                key,
                value: v.to_string(),
                range,
                line: self.line(from_file, section, key),
            }),
            v => Ok(v),
        }
    }

    fn int(
        &self,
        (value, from_file): (Option<i64>, bool),
        section: &str,
        key: &'static str,
        range: &'static str,
        lo: i64,
        hi: i64,
    ) -> Result<Option<i64>, ConfigError> {
        match value {
            Some(v) if v < lo || v > hi => Err(ConfigError::Range {
                key,
                value: v.to_string(),
                range,
                line: self.line(from_file, section, key),
            }),
            v => Ok(v),
        }
    }

    fn build(mut self, file: FileConfig, flags: &Overrides) -> Result<RunConfig, ConfigError> {
        let p = file.problem;
        let (preset, from_file) = pick(flags.preset.clone(), p.preset);
        if let Some(name) = preset {
            self.cfg.preset = name.parse().map_err(|e: mixtype::Error| ConfigError::Invalid {
                key: "problem.preset",
                message: e.to_string(),
                line: self.line(from_file, "problem", "preset"),
            })?;
        }
        if let Some(v) = self.real(pick(flags.eps, p.eps), "problem", "eps", "(0, 1)", |v| v > 0.0 && v < 1.0)? {
            self.cfg.eps = v;
        }
        if let Some(v) = self.real(pick(flags.alpha, p.alpha), "problem", "alpha", "[0, 10]", |v| (0.0..=10.0).contains(&v))? {
            self.cfg.alpha = v;
        }
        if let Some(v) = self.real(pick(flags.lambda, p.lambda), "problem", "lambda", "(0, 1e6]", |v| v > 0.0 && v <= 1e6)? {
            self.cfg.lambda = v;
        }
        if let Some(v) = self.int(pick(flags.m, p.m), "problem", "m", "integer in [0, 1]", 0, 1)? {
            self.cfg.m = v as usize;
        }
        if let Some(v) = self.real(pick(flags.psi, p.psi), "problem", "psi", "[-100, 100]", |v| v.abs() <= 100.0)? {
            self.cfg.psi = v;
        }
        let (rhs, from_file) = pick(flags.rhs.clone(), p.rhs);
        if let Some(r) = rhs {
            self.cfg.rhs = r.parse().map_err(|message| ConfigError::Invalid {
                key: "problem.rhs",
                message,
                line: self.line(from_file, "problem", "rhs"),
            })?;
        }
        if let Some(e) = p.enforce {
            self.cfg.enforce = e;
        }
        if flags.no_enforce {
            self.cfg.enforce = false;
        }
        self.cfg.upwind = flags.upwind || p.upwind.unwrap_or(false);

        let g = file.grid;
        if let Some(v) = self.int(pick(flags.n, g.n), "grid", "n", "integer in [8, 1024]", 8, 1024)? {
            self.cfg.n = v as usize;
        }
        let (grids, from_file) = pick(flags.grids.clone(), g.grids);
        if let Some(list) = grids {
            let line = self.line(from_file, "grid", "grids");
            if list.len() < 2 {
                return Err(ConfigError::Invalid {
                    key: "grid.grids",
                    message: "needs at least two grid sizes".into(),
                    line,
                });
            }
            if let Some(&bad) = list.iter().find(|&&v| !(8..=1024).contains(&v)) {
                return Err(ConfigError::Range {
                    key: "grid.grids",
                    value: bad.to_string(),
                    range: "entries in [8, 1024]",
                    line,
                });
            }
            if list.windows(2).any(|w| w[1] <= w[0]) {
                return Err(ConfigError::Invalid {
                    key: "grid.grids",
                    message: "sizes must increase".into(),
                    line,
                });
            }
            self.cfg.grids = list.into_iter().map(|v| v as usize).collect();
        }

        let r = file.run;
        if let Some(v) = self.int(pick(flags.seed, r.seed), "run", "seed", "integer >= 0", 0, i64::MAX)? {
            self.cfg.seed = v as u64;
        }
        if let Some(v) = self.int(pick(flags.samples, r.samples), "run", "samples", "integer in [1, 10000]", 1, 10_000)? {
            self.cfg.samples = v as usize;
        }
        if let Some(v) = self.real((r.slack, true), "run", "slack", "[0, 1)", |v| (0.0..1.0).contains(&v))? {
            self.cfg.slack = v;
        }
        match (&flags.output, r.output) {
            (Some(o), _) => self.cfg.output = o.clone(),
            (None, Some(o)) => self.cfg.output = PathBuf::from(o),
            _ => {}
        }

        let nl = file.nonlinear;
        if let Some(v) = self.real(pick(flags.rho, nl.rho), "nonlinear", "rho", "(0, 1]", |v| v > 0.0 && v <= 1.0)? {
            self.cfg.rho = v;
        }
        if let Some(v) = self.real(pick(flags.alpha0, nl.alpha0), "nonlinear", "alpha0", "(0, 100]", |v| v > 0.0 && v <= 100.0)? {
            self.cfg.alpha0 = v;
        }
        if let Some(v) = self.real(pick(flags.theta, nl.theta), "nonlinear", "theta", "(0, 1]", |v| v > 0.0 && v <= 1.0)? {
            self.cfg.theta = v;
        }
        if let Some(v) = self.real(pick(flags.tol, nl.tol), "nonlinear", "tol", "(0, 1)", |v| v > 0.0 && v < 1.0)? {
            self.cfg.tol = v;
        }
        if let Some(v) = self.int(pick(flags.max_iter, nl.max_iter), "nonlinear", "max_iter", "integer in [1, 10000]", 1, 10_000)? {
            self.cfg.max_iter = v as usize;
        }
        if let Some(v) = self.real((nl.amplitude, true), "nonlinear", "amplitude", "[0, 1]", |v| (0.0..=1.0).contains(&v))? {
            self.cfg.amplitude = v;
        }
        if let Some(v) = self.real((nl.eps_prime, true), "nonlinear", "eps_prime", "(0, 1)", |v| v > 0.0 && v < 1.0)? {
            self.cfg.eps_prime = v;
        }
        self.cfg.curvature = flags.curvature.clone().or(nl.curvature.map(PathBuf::from));
        Ok(self.cfg)
    }
}
