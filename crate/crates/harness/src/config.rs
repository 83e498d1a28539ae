//! Flat `key = value` configuration with documented defaults.
//!
//! Files hold one assignment per line; `#` starts a comment. Command-line
//! flags override file values, and every effective value (defaults
//! included) is recorded in the run manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use bubbletower::flow::{FlowConfig, Integrator};
use bubbletower::mesh::{Grading, ProblemParams};
use bubbletower::stationary::StationaryConfig;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}:{line}: expected 'key = value', got '{text}'")]
    Syntax {
        path: String,
        line: usize,
        text: String,
    },
    #[error("unknown configuration key '{0}'")]
    UnknownKey(String),
    #[error("key '{key}' given twice ({path}:{line})")]
    Duplicate {
        key: String,
        path: String,
        line: usize,
    },
    #[error("invalid value '{value}' for '{key}': {reason}")]
    Invalid {
        key: String,
        value: String,
        reason: String,
    },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// `(key, default, meaning)` for every accepted key.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("N", "4", "space dimension, at least 3"),
    ("k", "2", "number of bubbles in the tower"),
    ("eps", "1e-3", "hole radius, in (0, 1)"),
    ("M", "4096", "grid intervals"),
    ("grading", "log", "uniform | log | hybrid:<weight>"),
    ("rtol", "1e-10", "shooting integrator relative tolerance"),
    ("scan_lo", "1e-2", "smallest scanned shooting slope"),
    ("scan_hi", "1e12", "largest scanned shooting slope"),
    ("scan_per_decade", "40", "slope scan density"),
    (
        "residual_tol",
        "1e-8",
        "relative stationary residual target",
    ),
    ("newton_max_iter", "50", "Newton iteration cap"),
    (
        "truncation_estimate",
        "true",
        "also solve at M/2 to estimate truncation error",
    ),
    ("lambda", "1.05", "initial data multiple for 'flow'"),
    ("t_end", "2", "flow horizon for lambda != 1"),
    (
        "stationary_horizon",
        "10",
        "flow horizon for lambda = 1, in units of 1/|lambda_eps|",
    ),
    ("dt_max", "1e-4", "largest flow step"),
    ("dt_min", "1e-12", "collapsed flow step"),
    (
        "blow_threshold",
        "100",
        "blow-up sup-norm multiple, at least 100",
    ),
    ("safety", "0.1", "reaction step factor"),
    ("integrator", "imex-be", "imex-be | imex-cn | reaction-only"),
    ("sample_stride", "10", "flow series sampling stride"),
    (
        "stationary_tol",
        "1e-4",
        "relative drift for the stationary classification",
    ),
    (
        "decay_tol",
        "1e-8",
        "relative sup-norm for the decay classification",
    ),
    ("eps_list", "1e-2,1e-3,1e-4", "hole radii for 'sweep'"),
    (
        "lambda_list",
        "0.1,0.9,0.95,1,1.05,1.1",
        "initial data multiples for 'sweep'",
    ),
    ("k_list", "", "tower sizes for 'sweep'; empty means k alone"),
    ("radii", "20,40,80", "truncation radii for 'limit'"),
    ("spacing", "0.003125", "fine grid spacing for 'limit'"),
    ("out_dir", "runs", "root directory for run outputs"),
];

/// Validated configuration for one invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params: ProblemParams,
    pub stationary: StationaryConfig,
    pub flow: FlowConfig,
    pub lambda: f64,
    pub stationary_horizon: f64,
    pub eps_list: Vec<f64>,
    pub lambda_list: Vec<f64>,
    pub k_list: Vec<usize>,
    pub radii: Vec<f64>,
    pub spacing: f64,
    pub out_dir: PathBuf,
    /// Every key with its effective textual value.
    pub effective: BTreeMap<String, String>,
}

/// Parses `key = value` lines. Keys are checked against [`KEYS`].
pub fn parse_assignments(text: &str, path: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError::Syntax {
                path: path.into(),
                line: i + 1,
                text: raw.into(),
            });
        };
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() {
            return Err(ConfigError::Syntax {
                path: path.into(),
                line: i + 1,
                text: raw.into(),
            });
        }
        if !KEYS.iter().any(|(k, _, _)| *k == key) {
            return Err(ConfigError::UnknownKey(key.into()));
        }
        if out.insert(key.to_string(), value.to_string()).is_some() {
            return Err(ConfigError::Duplicate {
                key: key.into(),
                path: path.into(),
                line: i + 1,
            });
        }
    }
    Ok(out)
}

/// Reads an optional file, applies `overrides` on top and validates.
pub fn load_config(
    path: Option<&Path>,
    overrides: &BTreeMap<String, String>,
) -> Result<RunConfig, ConfigError> {
    let mut values: BTreeMap<String, String> = KEYS
        .iter()
        .map(|(k, d, _)| (k.to_string(), d.to_string()))
        .collect();
    if let Some(path) = path {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        values.extend(parse_assignments(&text, &path.display().to_string())?);
    }
    for (k, v) in overrides {
        if !KEYS.iter().any(|(key, _, _)| key == k) {
            return Err(ConfigError::UnknownKey(k.clone()));
        }
        values.insert(k.clone(), v.clone());
    }
    build(values)
}

fn invalid(key: &str, value: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.into(),
        value: value.into(),
        reason: reason.into(),
    }
}

struct Reader<'a>(&'a BTreeMap<String, String>);

impl Reader<'_> {
    fn raw(&self, key: &str) -> &str {
        self.0
            .get(key)
            .map(String::as_str)
            .expect("every key has a default")
    }

    fn f64(&self, key: &str) -> Result<f64, ConfigError> {
        let v = self.raw(key);
        match v.parse::<f64>() {
            Ok(x) if x.is_finite() => Ok(x),
            _ => Err(invalid(key, v, "expected a finite number")),
        }
    }

    fn positive(&self, key: &str) -> Result<f64, ConfigError> {
        let x = self.f64(key)?;
        if x > 0.0 {
            Ok(x)
        } else {
            Err(invalid(key, self.raw(key), "must be positive"))
        }
    }

    fn usize(&self, key: &str) -> Result<usize, ConfigError> {
        let v = self.raw(key);
        v.parse()
            .map_err(|_| invalid(key, v, "expected a non-negative integer"))
    }

    fn bool(&self, key: &str) -> Result<bool, ConfigError> {
        let v = self.raw(key);
        v.parse()
            .map_err(|_| invalid(key, v, "expected true or false"))
    }

    fn list(&self, key: &str) -> Result<Vec<f64>, ConfigError> {
        let v = self.raw(key);
        let items: Vec<f64> = v
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| invalid(key, v, "expected a comma-separated list of numbers"))?;
        if items.is_empty() || items.iter().any(|x| !x.is_finite()) {
            return Err(invalid(
                key,
                v,
                "expected a non-empty list of finite numbers",
            ));
        }
        Ok(items)
    }
}

fn build(values: BTreeMap<String, String>) -> Result<RunConfig, ConfigError> {
    let r = Reader(&values);
    let dim = r.usize("N")?;
    if dim < 3 {
        return Err(invalid(
            "N",
            r.raw("N"),
            "the critical problem needs N >= 3",
        ));
    }
    let towers = r.usize("k")?;
    let eps = r.f64("eps")?;
    // scale separation for large eps is judged downstream, not here
    let params = ProblemParams::new(dim, towers, eps)
        .map_err(|e| invalid("N/k/eps", r.raw("eps"), e.to_string()))?;
    let grading = Grading::parse(r.raw("grading"))
        .map_err(|e| invalid("grading", r.raw("grading"), e.to_string()))?;
    let intervals = r.usize("M")?;
    if intervals < 16 {
        return Err(invalid("M", r.raw("M"), "need at least 16 intervals"));
    }
    let stationary = StationaryConfig {
        intervals,
        grading,
        rtol: r.positive("rtol")?,
        scan_lo: r.positive("scan_lo")?,
        scan_hi: r.positive("scan_hi")?,
        scan_per_decade: r.usize("scan_per_decade")?,
        residual_tol: r.positive("residual_tol")?,
        newton_max_iter: r.usize("newton_max_iter")?,
        truncation_estimate: r.bool("truncation_estimate")?,
    };
    if stationary.rtol > 1e-10 {
        return Err(invalid("rtol", r.raw("rtol"), "must be at most 1e-10"));
    }
    if stationary.scan_lo >= stationary.scan_hi || stationary.scan_per_decade == 0 {
        return Err(invalid(
            "scan_lo",
            r.raw("scan_lo"),
            "need scan_lo < scan_hi and a positive density",
        ));
    }
    let integrator = Integrator::parse(r.raw("integrator"))
        .map_err(|e| invalid("integrator", r.raw("integrator"), e.to_string()))?;
    let flow = FlowConfig {
        dt_max: r.positive("dt_max")?,
        dt_min: r.positive("dt_min")?,
        t_end: r.positive("t_end")?,
        blow_threshold: r.f64("blow_threshold")?,
        safety: r.positive("safety")?,
        integrator,
        sample_stride: r.usize("sample_stride")?,
        stationary_tol: r.positive("stationary_tol")?,
        decay_tol: r.positive("decay_tol")?,
        ..FlowConfig::default()
    };
    flow.validate().map_err(|e| {
        invalid(
            "dt_min/dt_max/blow_threshold",
            r.raw("blow_threshold"),
            e.to_string(),
        )
    })?;

    let lambda = r.f64("lambda")?;
    let lambda_list = r.list("lambda_list")?;
    if lambda <= 0.0 || lambda_list.iter().any(|&l| l <= 0.0) {
        return Err(invalid(
            "lambda",
            r.raw("lambda"),
            "initial data multiples must be positive",
        ));
    }
    let eps_list = r.list("eps_list")?;
    if eps_list.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
        return Err(invalid(
            "eps_list",
            r.raw("eps_list"),
            "hole radii must lie in (0, 1)",
        ));
    }
    let k_list = if r.raw("k_list").trim().is_empty() {
        vec![towers]
    } else {
        r.raw("k_list")
            .split(',')
            .map(|s| s.trim().parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .ok()
            .filter(|ks| ks.iter().all(|&k| k >= 1))
            .ok_or_else(|| {
                invalid(
                    "k_list",
                    r.raw("k_list"),
                    "expected a comma-separated list of positive integers",
                )
            })?
    };
    let radii = r.list("radii")?;
    if radii.len() < 2 || radii.iter().any(|&x| x < 20.0) {
        return Err(invalid(
            "radii",
            r.raw("radii"),
            "need at least two radii, each at least 20",
        ));
    }
    let out_dir = PathBuf::from(r.raw("out_dir"));
    Ok(RunConfig {
        params,
        stationary,
        flow,
        lambda,
        stationary_horizon: r.positive("stationary_horizon")?,
        eps_list,
        lambda_list,
        k_list,
        radii,
        spacing: r.positive("spacing")?,
        out_dir,
        effective: values,
    })
}
