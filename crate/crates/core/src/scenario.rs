//! Scenario documents: flat TOML with dotted keys, environment overrides and
//! sweep expansion.
//!
//! ```toml
//! id = "weak"
//! command = "ground"
//! N = 4
//! lambda1 = 0.3
//! lambda2 = 0.6
//! nu = 0.01
//! grid.points = 4001
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use toml::Value;

use crate::closed_forms::Dimension;
use crate::ef_grid::{GridSettings, WeightKind, WeightSpec};
use crate::error::{LabError, Result};
use crate::functional::{ProblemSpec, Tolerances};
use crate::solvers::MpOptions;

/// Prefix of environment variables that override scenario keys:
/// `grid.points` is overridden by `NEHARI_GRID_POINTS`.
pub const ENV_PREFIX: &str = "NEHARI_";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Constants,
    Terracini,
    Nubar,
    Ground,
    Mp,
    Classify,
    Regime,
    Verify,
    Sweep,
}

impl Command {
    pub const ALL: [Command; 9] = [
        Command::Constants,
        Command::Terracini,
        Command::Nubar,
        Command::Ground,
        Command::Mp,
        Command::Classify,
        Command::Regime,
        Command::Verify,
        Command::Sweep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Constants => "constants",
            Command::Terracini => "terracini",
            Command::Nubar => "nubar",
            Command::Ground => "ground",
            Command::Mp => "mp",
            Command::Classify => "classify",
            Command::Regime => "regime",
            Command::Verify => "verify",
            Command::Sweep => "sweep",
        }
    }

    fn needs_dimension(self) -> bool {
        self != Command::Verify
    }

    fn needs_lambdas(self) -> bool {
        !matches!(self, Command::Constants | Command::Verify)
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = LabError;
    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| LabError::parse("command", format!("unknown command `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Str,
    Int,
    Float,
    Bool,
    FloatArray,
}

const KEYS: &[(&str, Kind)] = &[
    ("id", Kind::Str),
    ("command", Kind::Str),
    ("N", Kind::Int),
    ("lambda1", Kind::Float),
    ("lambda2", Kind::Float),
    ("nu", Kind::Float),
    ("nu_over_nubar", Kind::Float),
    ("mu", Kind::Float),
    ("seed", Kind::Int),
    ("h.kind", Kind::Str),
    ("h.params", Kind::FloatArray),
    ("grid.s_min", Kind::Float),
    ("grid.s_max", Kind::Float),
    ("grid.points", Kind::Int),
    ("grid.auto_widen", Kind::Bool),
    ("tol.psi", Kind::Float),
    ("tol.identity", Kind::Float),
    ("tol.gradient", Kind::Float),
    ("tol.max_iter", Kind::Int),
    ("mp.nodes", Kind::Int),
    ("mp.sweeps", Kind::Int),
    ("mp.step", Kind::Float),
    ("sweep.param", Kind::Str),
    ("sweep.values", Kind::FloatArray),
    ("sweep.command", Kind::Str),
];

/// Keys a sweep may vary.
pub const SWEEP_PARAMS: &[&str] = &["nu", "nu_over_nubar", "lambda1", "lambda2", "mu", "N", "grid.points"];

/// Environment variable that overrides a dotted key.
pub fn env_name(key: &str) -> String {
    format!("{ENV_PREFIX}{}", key.to_uppercase().replace('.', "_"))
}

/// A scenario document flattened to dotted keys.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Document {
    entries: BTreeMap<String, Value>,
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            other => {
                out.insert(key, other.clone());
            }
        }
    }
}

fn kind_of(key: &str) -> Option<Kind> {
    KEYS.iter().find(|(k, _)| *k == key).map(|(_, kind)| *kind)
}

impl Document {
    pub fn parse(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| LabError::parse("<document>", e.message().to_string()))?;
        let mut entries = BTreeMap::new();
        flatten("", &table, &mut entries);
        for key in entries.keys() {
            if kind_of(key).is_none() {
                return Err(LabError::parse(key.clone(), "unknown key"));
            }
        }
        Ok(Self { entries })
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.entries.get(key)
    }

    /// Set a key from its textual form (environment or command line).
    pub fn set_text(&mut self, key: &str, raw: &str) -> Result<()> {
        let kind = kind_of(key).ok_or_else(|| LabError::parse(key, "unknown key"))?;
        let value = if kind == Kind::Str {
            Value::String(raw.to_string())
        } else {
            let t: toml::Table =
                format!("v = {raw}").parse().map_err(|_| LabError::parse(key, format!("cannot parse `{raw}`")))?;
            t.get("v").cloned().ok_or_else(|| LabError::parse(key, "empty value"))?
        };
        self.entries.insert(key.to_string(), value);
        Ok(())
    }

    /// Apply `NEHARI_*` overrides; `lookup` abstracts the environment.
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<()> {
        for (key, _) in KEYS {
            if let Some(raw) = lookup(&env_name(key)) {
                self.set_text(key, &raw)?;
            }
        }
        Ok(())
    }

    fn str(&self, key: &str) -> Result<Option<String>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(v) => Err(LabError::parse(key, format!("expected a string, got {v}"))),
        }
    }

    fn float(&self, key: &str) -> Result<Option<f64>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Float(x)) => Ok(Some(*x)),
            Some(Value::Integer(i)) => Ok(Some(*i as f64)),
            Some(v) => Err(LabError::parse(key, format!("expected a number, got {v}"))),
        }
    }

    fn int(&self, key: &str) -> Result<Option<i64>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Integer(i)) => Ok(Some(*i)),
            Some(Value::Float(x)) if x.fract() == 0.0 && x.abs() < 9e15 => Ok(Some(*x as i64)),
            Some(v) => Err(LabError::parse(key, format!("expected an integer, got {v}"))),
        }
    }

    fn bool(&self, key: &str) -> Result<Option<bool>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Boolean(b)) => Ok(Some(*b)),
            Some(v) => Err(LabError::parse(key, format!("expected true or false, got {v}"))),
        }
    }

    fn floats(&self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| match v {
                    Value::Float(x) => Ok(*x),
                    Value::Integer(i) => Ok(*i as f64),
                    other => Err(LabError::parse(key, format!("expected numbers, got {other}"))),
                })
                .collect::<Result<Vec<_>>>()
                .map(Some),
            Some(v) => Err(LabError::parse(key, format!("expected an array, got {v}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub param: String,
    pub values: Vec<f64>,
    pub command: Command,
}

/// A validated scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    pub command: Command,
    /// Absent only for `verify`.
    pub spec: Option<ProblemSpec>,
    /// When set, `ν` is this multiple of `ν̄` (resolved at run time).
    pub nu_over_nubar: Option<f64>,
    pub seed: u64,
    pub mp: MpOptions,
    pub grid: GridSettings,
    pub sweep: Option<Sweep>,
}

fn weight_from(doc: &Document, dim: Dimension) -> Result<WeightSpec> {
    let kind = match doc.str("h.kind")?.as_deref() {
        None => return Ok(WeightSpec::default_for(dim)),
        Some("constant") => WeightKind::Constant,
        Some("ef_sech") => WeightKind::EfSech,
        Some("table") => WeightKind::Table,
        Some(other) => return Err(LabError::parse("h.kind", format!("unknown weight kind `{other}`"))),
    };
    let params = match (kind, doc.floats("h.params")?) {
        (_, Some(p)) => p,
        (WeightKind::Constant, None) => vec![1.0],
        (_, None) => return Err(LabError::parse("h.params", "required for this weight kind")),
    };
    let w = WeightSpec { kind, params };
    w.validate().map_err(|e| LabError::parse("h.params", e.to_string()))?;
    Ok(w)
}

fn as_parse_error(e: LabError) -> LabError {
    match e {
        LabError::InvalidParameter { name, reason } => LabError::parse(name, reason),
        LabError::InvalidDimension(n) => LabError::parse("N", format!("dimension {n} outside 3..=6")),
        other => other,
    }
}

impl Scenario {
    /// Parse a document with no overrides.
    pub fn parse(text: &str) -> Result<Self> {
        Self::from_document(&Document::parse(text)?)
    }

    pub fn from_document(doc: &Document) -> Result<Self> {
        let command: Command = match doc.str("command")? {
            Some(c) => c.parse()?,
            None => return Err(LabError::parse("command", "missing")),
        };
        let id = doc.str("id")?.unwrap_or_else(|| command.name().to_string());
        if id.is_empty() {
            return Err(LabError::parse("id", "must not be empty"));
        }
        let seed = match doc.int("seed")? {
            Some(s) if s >= 0 => s as u64,
            Some(s) => return Err(LabError::parse("seed", format!("must be nonnegative, got {s}"))),
            None => 0,
        };

        let defaults = GridSettings::default();
        let grid = GridSettings {
            s_min: doc.float("grid.s_min")?.unwrap_or(defaults.s_min),
            s_max: doc.float("grid.s_max")?.unwrap_or(defaults.s_max),
            points: match doc.int("grid.points")? {
                Some(p) if p >= 3 => p as usize,
                Some(p) => return Err(LabError::parse("grid.points", format!("need at least 3 points, got {p}"))),
                None => defaults.points,
            },
            auto_widen: doc.bool("grid.auto_widen")?.unwrap_or(defaults.auto_widen),
        };
        if !(grid.s_min < grid.s_max) || !grid.s_min.is_finite() || !grid.s_max.is_finite() {
            return Err(LabError::parse("grid.s_min", "need finite s_min < s_max"));
        }

        let mut tol = Tolerances::default();
        if let Some(x) = doc.float("tol.psi")? {
            tol.psi_rel = x;
        }
        if let Some(x) = doc.float("tol.identity")? {
            tol.identity_rel = x;
        }
        if let Some(x) = doc.float("tol.gradient")? {
            tol.gradient = x;
        }
        if let Some(x) = doc.int("tol.max_iter")? {
            tol.max_iter = usize::try_from(x).map_err(|_| LabError::parse("tol.max_iter", "must be nonnegative"))?;
        }
        for (key, x) in [("tol.psi", tol.psi_rel), ("tol.identity", tol.identity_rel), ("tol.gradient", tol.gradient)] {
            if !(x > 0.0) {
                return Err(LabError::parse(key, "must be positive"));
            }
        }

        let mut mp = MpOptions::default();
        if let Some(n) = doc.int("mp.nodes")? {
            if n < 3 {
                return Err(LabError::parse("mp.nodes", "need at least 3 nodes"));
            }
            mp.nodes = n as usize;
        }
        if let Some(n) = doc.int("mp.sweeps")? {
            mp.max_sweeps = usize::try_from(n).map_err(|_| LabError::parse("mp.sweeps", "must be nonnegative"))?;
        }
        if let Some(x) = doc.float("mp.step")? {
            if !(x > 0.0) {
                return Err(LabError::parse("mp.step", "must be positive"));
            }
            mp.step = x;
        }

        let nu = doc.float("nu")?;
        let nu_over_nubar = doc.float("nu_over_nubar")?;
        if nu.is_some() && nu_over_nubar.is_some() {
            return Err(LabError::parse("nu_over_nubar", "give either nu or nu_over_nubar, not both"));
        }
        if let Some(r) = nu_over_nubar {
            if !(r >= 0.0) || !r.is_finite() {
                return Err(LabError::parse("nu_over_nubar", "must be finite and >= 0"));
            }
        }

        let sweep = match (doc.str("sweep.param")?, doc.floats("sweep.values")?) {
            (None, None) => None,
            (Some(param), values) => {
                if !SWEEP_PARAMS.contains(&param.as_str()) {
                    return Err(LabError::parse("sweep.param", format!("cannot sweep `{param}`")));
                }
                let inner = match doc.str("sweep.command")? {
                    Some(c) => c.parse()?,
                    None if command == Command::Sweep => Command::Ground,
                    None => command,
                };
                if matches!(inner, Command::Sweep | Command::Verify) {
                    return Err(LabError::parse("sweep.command", format!("cannot sweep `{inner}`")));
                }
                Some(Sweep { param, values: values.unwrap_or_default(), command: inner })
            }
            (None, Some(_)) => return Err(LabError::parse("sweep.param", "sweep.values given without sweep.param")),
        };
        if command == Command::Sweep && sweep.is_none() {
            return Err(LabError::parse("sweep.param", "required for command sweep"));
        }

        let effective = sweep.as_ref().map(|s| s.command).unwrap_or(command);
        let spec = if effective.needs_dimension() || doc.get("N").is_some() {
            let n = doc.int("N")?.ok_or_else(|| LabError::parse("N", "missing"))?;
            let dim = Dimension::new(n).map_err(as_parse_error)?;
            let cap = dim.hardy_constant();
            let lam = |key: &str, fallback: f64| -> Result<f64> {
                match doc.float(key)? {
                    Some(x) => Ok(x),
                    None if effective.needs_lambdas() => Err(LabError::parse(key, format!("required for command {effective}"))),
                    None => Ok(fallback * cap),
                }
            };
            let weight = weight_from(doc, dim)?;
            let mut spec = ProblemSpec::new(dim, lam("lambda1", 0.25)?, lam("lambda2", 0.5)?, nu.unwrap_or(0.0))
                .with_weight(weight)
                .with_grid(grid);
            spec.mu = doc.float("mu")?.unwrap_or(1.0);
            spec.tol = tol;
            spec.validate().map_err(as_parse_error)?;
            if spec.weight_flagged() {
                return Err(LabError::parse(
                    "h.kind",
                    "in dimension six the weight must satisfy (H): bounded with h(0) = h(∞) = 0",
                ));
            }
            Some(spec)
        } else {
            None
        };

        Ok(Scenario { id, command, spec, nu_over_nubar, seed, mp, grid, sweep })
    }

    /// Child scenarios of a sweep, ordered by id; a scenario without a sweep
    /// expands to itself.
    pub fn expand(&self) -> Result<Vec<Scenario>> {
        let Some(sweep) = &self.sweep else {
            return Ok(vec![self.clone()]);
        };
        let width = sweep.values.len().saturating_sub(1).to_string().len().max(3);
        let mut out = Vec::with_capacity(sweep.values.len());
        for (k, &value) in sweep.values.iter().enumerate() {
            let mut child = self.clone();
            child.sweep = None;
            child.command = sweep.command;
            child.id = format!("{}.{:0width$}", self.id, k);
            let spec = child.spec.as_mut().ok_or_else(|| LabError::parse("N", "missing"))?;
            match sweep.param.as_str() {
                "nu" => {
                    spec.nu = value;
                    child.nu_over_nubar = None;
                }
                "nu_over_nubar" => child.nu_over_nubar = Some(value),
                "lambda1" => spec.lam1 = value,
                "lambda2" => spec.lam2 = value,
                "mu" => spec.mu = value,
                "N" => {
                    if value.fract() != 0.0 {
                        return Err(LabError::parse("sweep.values", format!("N must be an integer, got {value}")));
                    }
                    spec.dim = Dimension::new(value as i64).map_err(as_parse_error)?;
                    spec.weight = WeightSpec::default_for(spec.dim);
                }
                "grid.points" => {
                    if value.fract() != 0.0 || value < 3.0 {
                        return Err(LabError::parse("sweep.values", format!("grid.points must be an integer >= 3, got {value}")));
                    }
                    spec.grid.points = value as usize;
                    child.grid.points = value as usize;
                }
                other => return Err(LabError::parse("sweep.param", format!("cannot sweep `{other}`"))),
            }
            let key: &'static str = SWEEP_PARAMS.iter().find(|p| **p == sweep.param).copied().unwrap_or("sweep.values");
            spec.validate().map_err(|e| match as_parse_error(e) {
                LabError::Parse { reason, .. } => LabError::parse(key, reason),
                other => other,
            })?;
            out.push(child);
        }
        out.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_document_gets_defaults() {
        let s = Scenario::parse("N = 4\nlambda1 = 0.3\nlambda2 = 0.6\nnu = 0.1\ncommand = \"ground\"\n").unwrap();
        assert_eq!(s.command, Command::Ground);
        assert_eq!(s.id, "ground");
        let spec = s.spec.unwrap();
        assert_eq!(spec.grid, GridSettings::default());
        assert_eq!(spec.nu, 0.1);
        assert_eq!(spec.mu, 1.0);
        assert_eq!(spec.weight, WeightSpec::default_for(spec.dim));
    }

    #[test]
    fn dotted_and_table_forms_agree() {
        let a = Scenario::parse("command='ground'\nN=4\nlambda1=0.3\nlambda2=0.6\ngrid.points=801\n").unwrap();
        let b = Scenario::parse("command='ground'\nN=4\nlambda1=0.3\nlambda2=0.6\n[grid]\npoints=801\n").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.grid.points, 801);
    }

    #[test]
    fn rejections_name_the_key() {
        let cases = [
            ("command='ground'\nN=7\nlambda1=0.3\nlambda2=0.6", "N"),
            ("command='ground'\nN=4\nlambda1=1.3\nlambda2=0.6", "lambda1"),
            ("command='ground'\nN=4\nlambda1=0.3\nlambda2=0.6\ncolor=3", "color"),
            ("command='ground'\nN=6\nlambda1=1\nlambda2=2\nh.kind='constant'", "h.kind"),
            ("command='fly'\nN=4", "command"),
            ("command='ground'\nN=4\nlambda1=0.3", "lambda2"),
            ("command='ground'\nN=4\nlambda1=0.3\nlambda2=0.6\ngrid.points=2", "grid.points"),
        ];
        for (doc, key) in cases {
            match Scenario::parse(doc) {
                Err(LabError::Parse { key: k, .. }) => assert_eq!(k, key, "{doc}"),
                other => panic!("{doc}: {other:?}"),
            }
        }
    }

    #[test]
    fn sweep_expands_in_id_order() {
        let s = Scenario::parse(
            "id='s'\ncommand='sweep'\nN=4\nlambda1=0.3\nlambda2=0.6\nsweep.param='nu'\nsweep.values=[0.0, 0.1, 0.2]\n",
        )
        .unwrap();
        let kids = s.expand().unwrap();
        assert_eq!(kids.len(), 3);
        assert_eq!(kids.iter().map(|k| k.id.as_str()).collect::<Vec<_>>(), ["s.000", "s.001", "s.002"]);
        assert!(kids.iter().all(|k| k.command == Command::Ground));
        assert_eq!(kids[2].spec.as_ref().unwrap().nu, 0.2);
    }

    #[test]
    fn empty_sweep_has_no_children() {
        let s = Scenario::parse("command='sweep'\nN=4\nlambda1=0.3\nlambda2=0.6\nsweep.param='nu'\nsweep.values=[]\n").unwrap();
        assert!(s.expand().unwrap().is_empty());
    }

    #[test]
    fn environment_overrides_mirror_dotted_keys() {
        assert_eq!(env_name("grid.points"), "NEHARI_GRID_POINTS");
        let mut doc = Document::parse("command='ground'\nN=4\nlambda1=0.3\nlambda2=0.6\n").unwrap();
        doc.apply_env(|k| match k {
            "NEHARI_GRID_POINTS" => Some("801".into()),
            "NEHARI_NU" => Some("0.25".into()),
            "NEHARI_H_KIND" => Some("constant".into()),
            _ => None,
        })
        .unwrap();
        let s = Scenario::from_document(&doc).unwrap();
        let spec = s.spec.unwrap();
        assert_eq!(spec.grid.points, 801);
        assert_eq!(spec.nu, 0.25);
        assert!(spec.weight.is_constant());
        assert!(doc.clone().apply_env(|k| (k == "NEHARI_NU").then(|| "abc".into())).is_err());
    }

    #[test]
    fn verify_needs_no_problem() {
        let s = Scenario::parse("command='verify'\n").unwrap();
        assert!(s.spec.is_none());
    }
}
