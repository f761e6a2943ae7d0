//! Flat `section.key = value` configuration.
//!
//! Global sections (`run`, `drift`, `grid`, `mc`, `field`, `excursion`)
//! supply defaults; a section named after a registry test overrides them for
//! that test only. `emit` configures `emit-paths`. Every value is parsed and
//! range-checked at load time, so a config that loads never fails later on
//! a malformed value.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use massfield::{make_drift, DriftKind, DriftSpec};

use crate::registry::{self, REGISTRY};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: expected `section.key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("{key}: unknown section `{section}`")]
    UnknownSection { key: String, section: String },
    #[error("{key}: unknown key")]
    UnknownKey { key: String },
    #[error("{key}: set twice (lines {first} and {second})")]
    Duplicate {
        key: String,
        first: usize,
        second: usize,
    },
    #[error("{key}: {reason}")]
    Invalid { key: String, reason: String },
}

impl ConfigError {
    fn invalid(key: &str, reason: impl Into<String>) -> Self {
        ConfigError::Invalid {
            key: key.to_string(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    /// Finite and > 0.
    Pos,
    /// Finite and >= 0.
    NonNeg,
    /// Strictly between 0 and 1.
    Prob,
    /// Integer >= 1.
    Count,
    Seed,
    PosList,
    NonNegList,
    RealList,
    CountList,
    /// `kind(p, ...); kind(p, ...)`.
    Drifts,
    DriftKind,
    Tests,
    Path,
}

/// Type of a leaf key, wherever it appears.
pub fn kind_of(leaf: &str) -> Option<Kind> {
    use Kind::*;
    Some(match leaf {
        "dt" | "horizon" | "x" | "x_max" | "delta" | "s" | "atol" | "m" | "cap" | "z"
        | "small_t" | "t" => Pos,
        "y" | "bump" | "g_value" => NonNeg,
        "level" => Prob,
        "n" | "n_outer" | "n_inner" | "cells" | "repetitions" | "reference_cells" | "probes"
        | "a_index" | "replicates" | "every" | "jobs" => Count,
        "seed" => Seed,
        "times" | "deltas" | "dts" => PosList,
        "ys" => NonNegList,
        "thetas" | "params" => RealList,
        "levels" => CountList,
        "drifts" => Drifts,
        "kind" => DriftKind,
        "tests" => Tests,
        "out_dir" => Path,
        _ => return None,
    })
}

const GLOBAL: &[(&str, &[&str])] = &[
    ("run", &["seed", "out_dir", "tests", "jobs"]),
    ("drift", &["kind", "params"]),
    ("grid", &["dt", "horizon"]),
    ("mc", &["n", "n_outer", "n_inner", "level"]),
    ("field", &["x_max", "cells"]),
    ("excursion", &["delta"]),
    (
        "emit",
        &[
            "x",
            "x_max",
            "cells",
            "delta",
            "replicates",
            "dt",
            "horizon",
            "every",
        ],
    ),
];

/// Global key a test-level leaf falls back to.
fn fallback(leaf: &str) -> Option<&'static str> {
    Some(match leaf {
        "dt" => "grid.dt",
        "horizon" => "grid.horizon",
        "n" => "mc.n",
        "n_outer" => "mc.n_outer",
        "n_inner" => "mc.n_inner",
        "level" => "mc.level",
        "x_max" => "field.x_max",
        "cells" => "field.cells",
        "delta" => "excursion.delta",
        _ => return None,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Real(f64),
    Int(u64),
    Reals(Vec<f64>),
    Ints(Vec<usize>),
    Drifts(Vec<(DriftKind, Vec<f64>)>),
    Kind(DriftKind),
    Names(Vec<String>),
    Path(PathBuf),
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Selected tests in registry order.
    pub tests: Vec<&'static str>,
    pub jobs: Option<usize>,
    values: BTreeMap<String, Value>,
}

pub const DEFAULT_SEED: u64 = 20240611;

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut values = BTreeMap::new();
        let mut lines_seen: BTreeMap<String, usize> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let syntax = || ConfigError::Syntax {
                line: i + 1,
                text: raw.trim().to_string(),
            };
            let (key, value) = line.split_once('=').ok_or_else(syntax)?;
            let key = key.trim();
            let (section, leaf) = key.split_once('.').ok_or_else(syntax)?;
            if section.is_empty() || leaf.is_empty() || leaf.contains('.') {
                return Err(syntax());
            }
            check_key(key, section, leaf)?;
            let kind = kind_of(leaf).ok_or_else(|| ConfigError::UnknownKey { key: key.into() })?;
            if let Some(first) = lines_seen.insert(key.to_string(), i + 1) {
                return Err(ConfigError::Duplicate {
                    key: key.into(),
                    first,
                    second: i + 1,
                });
            }
            values.insert(key.to_string(), parse_value(key, kind, value.trim())?);
        }

        let mut cfg = ExperimentConfig {
            seed: DEFAULT_SEED,
            out_dir: PathBuf::from("out"),
            tests: REGISTRY.iter().map(|e| e.name).collect(),
            jobs: None,
            values,
        };
        if let Some(Value::Int(s)) = cfg.values.get("run.seed") {
            cfg.seed = *s;
        }
        if let Some(Value::Path(p)) = cfg.values.get("run.out_dir") {
            cfg.out_dir = p.clone();
        }
        if let Some(Value::Int(j)) = cfg.values.get("run.jobs") {
            cfg.jobs = Some(*j as usize);
        }
        if let Some(Value::Names(names)) = cfg.values.get("run.tests") {
            if !(names.len() == 1 && names[0] == "all") {
                cfg.tests = REGISTRY
                    .iter()
                    .map(|e| e.name)
                    .filter(|n| names.iter().any(|m| m == n))
                    .collect();
            }
        }
        match (cfg.values.get("drift.kind"), cfg.values.get("drift.params")) {
            (Some(Value::Kind(k)), p) => {
                let params = match p {
                    Some(Value::Reals(v)) => v.clone(),
                    _ => Vec::new(),
                };
                build_drift("drift.params", *k, &params)?;
            }
            (None, Some(_)) => {
                return Err(ConfigError::invalid(
                    "drift.params",
                    "set without drift.kind",
                ))
            }
            _ => {}
        }
        Ok(cfg)
    }

    /// Parameter view of one test (or of the `emit` section).
    pub fn params<'a>(&'a self, section: &'a str) -> Params<'a> {
        Params { cfg: self, section }
    }

    fn default_drift(&self) -> Option<DriftSpec> {
        let Some(Value::Kind(k)) = self.values.get("drift.kind") else {
            return None;
        };
        let params = match self.values.get("drift.params") {
            Some(Value::Reals(v)) => v.as_slice(),
            _ => &[],
        };
        // Validated at load.
        build_drift("drift.params", *k, params).ok()
    }
}

fn check_key(key: &str, section: &str, leaf: &str) -> Result<(), ConfigError> {
    let allowed: &[&str] = if let Some((_, keys)) = GLOBAL.iter().find(|(s, _)| *s == section) {
        keys
    } else if let Some(entry) = registry::lookup(section) {
        entry.keys
    } else {
        return Err(ConfigError::UnknownSection {
            key: key.into(),
            section: section.into(),
        });
    };
    if allowed.contains(&leaf) {
        Ok(())
    } else {
        Err(ConfigError::UnknownKey { key: key.into() })
    }
}

fn parse_real(key: &str, s: &str) -> Result<f64, ConfigError> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| ConfigError::invalid(key, format!("`{}` is not a number", s.trim())))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ConfigError::invalid(key, "must be finite"))
    }
}

fn parse_count(key: &str, s: &str) -> Result<usize, ConfigError> {
    let s = s.trim();
    // Accept `1e5` style counts as long as they are whole.
    let v = match s.parse::<usize>() {
        Ok(v) => v,
        Err(_) => {
            let f = parse_real(key, s)?;
            if f.fract() != 0.0 || f < 0.0 || f > usize::MAX as f64 {
                return Err(ConfigError::invalid(
                    key,
                    format!("`{s}` is not a whole number"),
                ));
            }
            f as usize
        }
    };
    if v == 0 {
        return Err(ConfigError::invalid(key, "must be positive"));
    }
    Ok(v)
}

fn check_sign(key: &str, v: f64, kind: Kind) -> Result<f64, ConfigError> {
    match kind {
        Kind::Pos | Kind::PosList if v <= 0.0 => Err(ConfigError::invalid(key, "must be positive")),
        Kind::NonNeg | Kind::NonNegList if v < 0.0 => {
            Err(ConfigError::invalid(key, "must be nonnegative"))
        }
        Kind::Prob if !(v > 0.0 && v < 1.0) => Err(ConfigError::invalid(
            key,
            "must lie strictly between 0 and 1",
        )),
        _ => Ok(v),
    }
}

fn split_list(s: &str) -> impl Iterator<Item = &str> {
    s.split(',').map(str::trim).filter(|x| !x.is_empty())
}

fn nonempty<T>(key: &str, v: Vec<T>) -> Result<Vec<T>, ConfigError> {
    if v.is_empty() {
        Err(ConfigError::invalid(key, "empty list"))
    } else {
        Ok(v)
    }
}

fn build_drift(key: &str, kind: DriftKind, params: &[f64]) -> Result<DriftSpec, ConfigError> {
    if kind == DriftKind::Custom {
        return Err(ConfigError::invalid(
            key,
            "custom drifts cannot be configured from a file",
        ));
    }
    make_drift(kind, params).map_err(|e| ConfigError::invalid(key, e.to_string()))
}

fn parse_drift(key: &str, s: &str) -> Result<(DriftKind, Vec<f64>), ConfigError> {
    let s = s.trim();
    let (name, rest) = s
        .split_once('(')
        .ok_or_else(|| ConfigError::invalid(key, format!("`{s}`: expected kind(params)")))?;
    let inner = rest
        .strip_suffix(')')
        .ok_or_else(|| ConfigError::invalid(key, format!("`{s}`: missing `)`")))?;
    let kind: DriftKind = name
        .trim()
        .parse()
        .map_err(|e: massfield::Error| ConfigError::invalid(key, e.to_string()))?;
    let params = split_list(inner)
        .map(|p| parse_real(key, p))
        .collect::<Result<Vec<_>, _>>()?;
    build_drift(key, kind, &params)?;
    Ok((kind, params))
}

fn parse_value(key: &str, kind: Kind, s: &str) -> Result<Value, ConfigError> {
    if s.is_empty() {
        return Err(ConfigError::invalid(key, "missing value"));
    }
    Ok(match kind {
        Kind::Pos | Kind::NonNeg | Kind::Prob => {
            Value::Real(check_sign(key, parse_real(key, s)?, kind)?)
        }
        Kind::Count => Value::Int(parse_count(key, s)? as u64),
        Kind::Seed => Value::Int(
            s.parse()
                .map_err(|_| ConfigError::invalid(key, format!("`{s}` is not a u64 seed")))?,
        ),
        Kind::PosList | Kind::NonNegList | Kind::RealList => Value::Reals(nonempty(
            key,
            split_list(s)
                .map(|p| parse_real(key, p).and_then(|v| check_sign(key, v, kind)))
                .collect::<Result<_, _>>()?,
        )?),
        Kind::CountList => Value::Ints(nonempty(
            key,
            split_list(s)
                .map(|p| parse_count(key, p))
                .collect::<Result<_, _>>()?,
        )?),
        Kind::Drifts => Value::Drifts(nonempty(
            key,
            s.split(';')
                .map(str::trim)
                .filter(|x| !x.is_empty())
                .map(|d| parse_drift(key, d))
                .collect::<Result<_, _>>()?,
        )?),
        Kind::DriftKind => Value::Kind(
            s.parse()
                .map_err(|e: massfield::Error| ConfigError::invalid(key, e.to_string()))?,
        ),
        Kind::Tests => {
            let names: Vec<String> = split_list(s).map(String::from).collect();
            for n in &names {
                if n != "all" && registry::lookup(n).is_none() {
                    return Err(ConfigError::invalid(key, format!("unknown test `{n}`")));
                }
            }
            Value::Names(nonempty(key, names)?)
        }
        Kind::Path => Value::Path(PathBuf::from(s)),
    })
}

/// Lookup of a leaf for one section: the section's own key, then the global
/// fallback, then the caller's default.
#[derive(Clone, Copy)]
pub struct Params<'a> {
    cfg: &'a ExperimentConfig,
    section: &'a str,
}

impl<'a> Params<'a> {
    fn get(&self, leaf: &str) -> Option<&'a Value> {
        self.cfg
            .values
            .get(&format!("{}.{leaf}", self.section))
            .or_else(|| fallback(leaf).and_then(|k| self.cfg.values.get(k)))
    }

    pub fn real(&self, leaf: &str, default: f64) -> f64 {
        match self.get(leaf) {
            Some(Value::Real(v)) => *v,
            _ => default,
        }
    }

    pub fn count(&self, leaf: &str, default: usize) -> usize {
        match self.get(leaf) {
            Some(Value::Int(v)) => *v as usize,
            _ => default,
        }
    }

    pub fn reals(&self, leaf: &str, default: &[f64]) -> Vec<f64> {
        match self.get(leaf) {
            Some(Value::Reals(v)) => v.clone(),
            _ => default.to_vec(),
        }
    }

    pub fn counts(&self, leaf: &str, default: &[usize]) -> Vec<usize> {
        match self.get(leaf) {
            Some(Value::Ints(v)) => v.clone(),
            _ => default.to_vec(),
        }
    }

    /// The section's `drifts`, else the global `drift.kind`/`drift.params`,
    /// else `default`.
    pub fn drifts(&self, default: &[(DriftKind, &[f64])]) -> Vec<DriftSpec> {
        if let Some(Value::Drifts(list)) = self.get("drifts") {
            return list
                .iter()
                .filter_map(|(k, p)| make_drift(*k, p).ok())
                .collect();
        }
        if let Some(d) = self.cfg.default_drift() {
            return vec![d];
        }
        default
            .iter()
            .map(|(k, p)| make_drift(*k, p).expect("built-in default drift"))
            .collect()
    }
}
