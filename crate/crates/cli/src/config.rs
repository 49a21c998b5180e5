//! Run configuration: `key=value` text, command-line overrides, typed
//! validation and the canonical echo written into every result document.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

/// Every accepted key, in echo order.
pub const KEYS: &[&str] = &[
    "manifold",
    "bundle-rank",
    "connection",
    "beta",
    "potential",
    "f",
    "t",
    "h",
    "n",
    "seed",
    "workers",
    "x",
    "x-grid",
    "t-grid",
    "q",
    "lambda",
    "k",
    "s",
    "r",
    "tmax",
    "trials",
    "out",
    "format",
];

pub const SEED_ENV: &str = "FIBERFLOW_SEED";

pub const DEFAULT_N: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigError {
    pub key: String,
    pub msg: String,
}

impl ConfigError {
    pub fn new(key: impl Into<String>, msg: impl Into<String>) -> Self {
        ConfigError { key: key.into(), msg: msg.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid `{}`: {}", self.key, self.msg)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Format {
    #[default]
    Json,
    Csv,
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Json => "json",
            Format::Csv => "csv",
        })
    }
}

impl FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            _ => Err(format!("expected json or csv, got `{s}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ConnectionKind {
    #[default]
    Trivial,
    Magnetic,
    LeviCivita,
}

impl fmt::Display for ConnectionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConnectionKind::Trivial => "trivial",
            ConnectionKind::Magnetic => "magnetic",
            ConnectionKind::LeviCivita => "levi-civita",
        })
    }
}

impl FromStr for ConnectionKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "trivial" => Ok(ConnectionKind::Trivial),
            "magnetic" => Ok(ConnectionKind::Magnetic),
            "levi-civita" => Ok(ConnectionKind::LeviCivita),
            _ => Err(format!("expected trivial, magnetic or levi-civita, got `{s}`")),
        }
    }
}

/// Validated run parameters. Expression strings (manifold, potential, grids, ...)
/// are kept verbatim and interpreted by the command that needs them.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub manifold: String,
    pub bundle_rank: Option<usize>,
    pub connection: ConnectionKind,
    pub beta: Option<String>,
    pub potential: String,
    pub f: Option<String>,
    pub t: Option<f64>,
    pub h: Option<f64>,
    pub n: usize,
    pub seed: u64,
    pub workers: usize,
    pub x: Option<String>,
    pub x_grid: Option<String>,
    pub t_grid: Option<String>,
    pub q: Option<String>,
    pub lambda: Option<f64>,
    pub k: Option<u32>,
    pub s: Option<f64>,
    pub r: Option<f64>,
    pub tmax: Option<f64>,
    pub trials: Option<usize>,
    pub out: Option<String>,
    pub format: Format,
}

/// Parse `key=value` lines; `#` starts a comment line.
pub fn parse_text(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(ConfigError::new("config", format!("line {}: expected key=value", i + 1)));
        };
        let k = k.trim().to_string();
        if !KEYS.contains(&k.as_str()) {
            return Err(ConfigError::new(k, "unknown key"));
        }
        if map.insert(k.clone(), v.trim().to_string()).is_some() {
            return Err(ConfigError::new(k, "given twice"));
        }
    }
    Ok(map)
}

fn typed<T: FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<Option<T>, ConfigError>
where
    T::Err: fmt::Display,
{
    map.get(key)
        .map(|v| v.parse::<T>().map_err(|e| ConfigError::new(key, format!("`{v}`: {e}"))))
        .transpose()
}

fn positive(key: &str, v: Option<f64>) -> Result<Option<f64>, ConfigError> {
    match v {
        Some(x) if !(x > 0.0 && x.is_finite()) => Err(ConfigError::new(key, format!("must be positive and finite, got {x}"))),
        _ => Ok(v),
    }
}

fn nonneg(key: &str, v: Option<f64>) -> Result<Option<f64>, ConfigError> {
    match v {
        Some(x) if !(x >= 0.0 && x.is_finite()) => Err(ConfigError::new(key, format!("must be nonnegative and finite, got {x}"))),
        _ => Ok(v),
    }
}

impl RunConfig {
    /// Validate a key map. `env_seed` is the value of `FIBERFLOW_SEED`, used
    /// when no `seed` key is present.
    pub fn from_map(map: &BTreeMap<String, String>, env_seed: Option<&str>) -> Result<Self, ConfigError> {
        if let Some(k) = map.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return Err(ConfigError::new(k.clone(), "unknown key"));
        }
        let s = |k: &str| map.get(k).cloned();
        let seed = match (map.get("seed"), env_seed) {
            (Some(v), _) => v.parse().map_err(|e| ConfigError::new("seed", format!("`{v}`: {e}")))?,
            (None, Some(v)) => v.parse().map_err(|e| ConfigError::new("seed", format!("{SEED_ENV}=`{v}`: {e}")))?,
            (None, None) => 0,
        };
        let beta = s("beta");
        let connection = match typed::<ConnectionKind>(map, "connection")? {
            Some(c) => c,
            None if beta.is_some() => ConnectionKind::Magnetic,
            None => ConnectionKind::Trivial,
        };
        if beta.is_some() && connection != ConnectionKind::Magnetic {
            return Err(ConfigError::new("beta", "a one-form needs connection=magnetic"));
        }
        let cfg = RunConfig {
            manifold: s("manifold").unwrap_or_else(|| "euclidean(m=3)".into()),
            bundle_rank: typed(map, "bundle-rank")?,
            connection,
            beta,
            potential: s("potential").unwrap_or_else(|| "0".into()),
            f: s("f"),
            t: nonneg("t", typed(map, "t")?)?,
            h: positive("h", typed(map, "h")?)?,
            n: typed(map, "n")?.unwrap_or(DEFAULT_N),
            seed,
            workers: typed(map, "workers")?.unwrap_or(1),
            x: s("x"),
            x_grid: s("x-grid"),
            t_grid: s("t-grid"),
            q: s("q"),
            lambda: positive("lambda", typed(map, "lambda")?)?,
            k: typed(map, "k")?,
            s: nonneg("s", typed(map, "s")?)?,
            r: positive("r", typed(map, "r")?)?,
            tmax: positive("tmax", typed(map, "tmax")?)?,
            trials: typed(map, "trials")?,
            out: s("out"),
            format: typed(map, "format")?.unwrap_or_default(),
        };
        if cfg.bundle_rank == Some(0) {
            return Err(ConfigError::new("bundle-rank", "must be at least 1"));
        }
        if cfg.workers == 0 {
            return Err(ConfigError::new("workers", "must be at least 1"));
        }
        if cfg.k == Some(0) {
            return Err(ConfigError::new("k", "must be at least 1"));
        }
        Ok(cfg)
    }

    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        RunConfig::from_map(&parse_text(text)?, None)
    }

    /// Canonical key/value pairs. Numbers use the shortest representation
    /// that parses back to the same value.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let mut e: Vec<(&'static str, String)> = Vec::new();
        let num = |v: f64| format!("{v:?}");
        e.push(("manifold", self.manifold.clone()));
        if let Some(r) = self.bundle_rank {
            e.push(("bundle-rank", r.to_string()));
        }
        e.push(("connection", self.connection.to_string()));
        let opt = |e: &mut Vec<(&'static str, String)>, k: &'static str, v: &Option<String>| {
            if let Some(v) = v {
                e.push((k, v.clone()));
            }
        };
        let optf = |e: &mut Vec<(&'static str, String)>, k: &'static str, v: Option<f64>| {
            if let Some(v) = v {
                e.push((k, num(v)));
            }
        };
        opt(&mut e, "beta", &self.beta);
        e.push(("potential", self.potential.clone()));
        opt(&mut e, "f", &self.f);
        optf(&mut e, "t", self.t);
        optf(&mut e, "h", self.h);
        e.push(("n", self.n.to_string()));
        e.push(("seed", self.seed.to_string()));
        e.push(("workers", self.workers.to_string()));
        opt(&mut e, "x", &self.x);
        opt(&mut e, "x-grid", &self.x_grid);
        opt(&mut e, "t-grid", &self.t_grid);
        opt(&mut e, "q", &self.q);
        optf(&mut e, "lambda", self.lambda);
        if let Some(k) = self.k {
            e.push(("k", k.to_string()));
        }
        optf(&mut e, "s", self.s);
        optf(&mut e, "r", self.r);
        optf(&mut e, "tmax", self.tmax);
        if let Some(n) = self.trials {
            e.push(("trials", n.to_string()));
        }
        opt(&mut e, "out", &self.out);
        e.push(("format", self.format.to_string()));
        e
    }

    /// The configuration as `key=value` lines; `from_text` inverts it.
    pub fn to_text(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn require_t(&self) -> Result<f64, ConfigError> {
        self.t.ok_or_else(|| ConfigError::new("t", "missing required key"))
    }
}
