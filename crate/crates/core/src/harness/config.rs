//! Line-oriented experiment configuration.
//!
//! ```text
//! # comments run to end of line
//! experiment = klift_sweep
//! base = petersen
//! k = 2, 3, 5
//! trials = 500
//! master_seed = 7
//!
//! [constants]
//! C = 1, 10
//! eps = 0.5
//! ```
//!
//! Keys outside a section belong to `[experiment]`. Lists are comma
//! separated; commas inside parentheses do not split.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::distribution::{DiscreteLaw, LiftDistribution};
use crate::model::{content_lines, BaseMatrix, Generator, GraphSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: unknown key `{key}` in [{section}]")]
    UnknownKey { line: usize, section: String, key: String },
    #[error("line {line}: duplicate key `{key}`")]
    DuplicateKey { line: usize, key: String },
    #[error("{}field `{field}`: {msg}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    BadValue { line: Option<usize>, field: String, msg: String },
    #[error("missing required field `{0}`")]
    Missing(String),
    #[error("{path}: {msg}")]
    Io { path: String, msg: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentKind {
    McNorm,
    PropCompare,
    CliqueScaling,
    KliftSweep,
    OracleSuite,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::McNorm => "mc_norm",
            ExperimentKind::PropCompare => "prop_compare",
            ExperimentKind::CliqueScaling => "clique_scaling",
            ExperimentKind::KliftSweep => "klift_sweep",
            ExperimentKind::OracleSuite => "oracle_suite",
        }
    }

    fn default_trials(self) -> usize {
        match self {
            ExperimentKind::McNorm | ExperimentKind::PropCompare => 10_000,
            ExperimentKind::CliqueScaling | ExperimentKind::KliftSweep => 500,
            ExperimentKind::OracleSuite => 100_000,
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "mc_norm" => ExperimentKind::McNorm,
            "prop_compare" => ExperimentKind::PropCompare,
            "clique_scaling" => ExperimentKind::CliqueScaling,
            "klift_sweep" => ExperimentKind::KliftSweep,
            "oracle_suite" => ExperimentKind::OracleSuite,
            _ => return Err(format!("unknown experiment `{s}`")),
        })
    }
}

/// A base instance: a named generator or a file.
#[derive(Clone, Debug, PartialEq)]
pub enum BaseSource {
    Generator(Generator),
    File(PathBuf),
}

impl BaseSource {
    /// A generator name, or a file path relative to `dir`.
    pub fn resolve(value: &str, dir: &Path) -> Result<Self, String> {
        if let Ok(g) = value.parse::<Generator>() {
            g.graph().map_err(|e| e.to_string())?;
            return Ok(BaseSource::Generator(g));
        }
        let path = dir.join(value);
        if path.is_file() {
            Ok(BaseSource::File(path))
        } else {
            Err(format!("`{value}` is neither a generator nor an existing file"))
        }
    }

    fn read(path: &Path) -> Result<String, String> {
        std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
    }

    /// The graph, for sources that describe one (generators and edge-list files).
    pub fn graph(&self) -> Result<GraphSpec, String> {
        match self {
            BaseSource::Generator(g) => g.graph().map_err(|e| e.to_string()),
            BaseSource::File(p) => {
                GraphSpec::parse_edge_list(&Self::read(p)?).map_err(|e| format!("{}: {e}", p.display()))
            }
        }
    }

    /// The weighted base matrix; edge-list files give their adjacency matrix.
    pub fn matrix(&self) -> Result<BaseMatrix, String> {
        match self {
            BaseSource::Generator(_) => Ok(self.graph()?.adjacency()),
            BaseSource::File(p) => {
                let text = Self::read(p)?;
                let first = text
                    .lines()
                    .map(|l| l.split('#').next().unwrap_or("").trim())
                    .find(|l| !l.is_empty())
                    .unwrap_or("");
                if first.starts_with("graph") {
                    Ok(self.graph()?.adjacency())
                } else {
                    BaseMatrix::parse_coordinate(&text).map_err(|e| format!("{}: {e}", p.display()))
                }
            }
        }
    }
}

impl fmt::Display for BaseSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BaseSource::Generator(g) => write!(f, "{g}"),
            BaseSource::File(p) => write!(f, "{}", p.file_name().map(|s| s.to_string_lossy()).unwrap_or_default()),
        }
    }
}

/// A built-in law name, or a discrete-law file path relative to `dir`.
pub fn resolve_dist(value: &str, dir: &Path) -> Result<LiftDistribution, String> {
    if let Ok(d) = value.parse::<LiftDistribution>() {
        return Ok(d);
    }
    let path = dir.join(value);
    let text = std::fs::read_to_string(&path).map_err(|_| format!("`{value}` is neither a law nor a readable file"))?;
    let law = DiscreteLaw::parse(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    LiftDistribution::discrete(law).map_err(|e| format!("{}: {e}", path.display()))
}

/// One moment-comparison instance: a base matrix and a lift law.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub id: String,
    pub base: BaseSource,
    pub dist: LiftDistribution,
}

impl Instance {
    fn parse(value: &str, dir: &Path) -> Result<Self, String> {
        let (b, d) = value.rsplit_once(':').ok_or_else(|| format!("instance `{value}` is not `base:law`"))?;
        let base = BaseSource::resolve(b.trim(), dir)?;
        let dist = resolve_dist(d.trim(), dir)?;
        Ok(Self { id: format!("{base}/{dist}"), base, dist })
    }
}

pub fn default_battery() -> Vec<Instance> {
    let make = |g: Generator, d: LiftDistribution| Instance {
        id: format!("{g}/{d}"),
        base: BaseSource::Generator(g),
        dist: d,
    };
    vec![
        make(Generator::SingleEdge, LiftDistribution::Rademacher),
        make(Generator::Complete(3), LiftDistribution::CenteredPermutation { k: 2 }),
        make(Generator::Path(3), LiftDistribution::Rademacher),
    ]
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub base: Option<BaseSource>,
    pub dist: LiftDistribution,
    pub k: Vec<usize>,
    pub p: Vec<usize>,
    pub trials: usize,
    pub master_seed: u64,
    pub tol: f64,
    /// Worker threads; 1 is sequential, 0 lets the pool decide.
    pub threads: usize,
    pub n_grid: Vec<usize>,
    pub instances: Vec<Instance>,
    /// Constants C at which bounds are tabulated.
    pub c_values: Vec<f64>,
    /// ε values at which empirical constants are fitted.
    pub eps: Vec<f64>,
    /// Constant used for the upper-bound gate.
    pub gate_c: f64,
    /// Adds wall-clock columns; output is then no longer reproducible byte for byte.
    pub timing: bool,
}

impl ExperimentConfig {
    /// Defaults for `experiment` with no base instance.
    pub fn new(experiment: ExperimentKind) -> Self {
        Self {
            experiment,
            base: None,
            dist: LiftDistribution::Rademacher,
            k: vec![2],
            p: vec![1, 2],
            trials: experiment.default_trials(),
            master_seed: 0,
            tol: crate::spectral::DEFAULT_TOL,
            threads: 0,
            n_grid: vec![64, 256, 1024, 4096],
            instances: default_battery(),
            c_values: vec![1.0, 10.0],
            eps: vec![0.5],
            gate_c: 10.0,
            timing: false,
        }
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        ConfigBuilder::parse(text)?.build()
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        ConfigBuilder::from_file(path)?.build()
    }
}

const EXPERIMENT_KEYS: &[&str] = &[
    "experiment",
    "base",
    "dist",
    "k",
    "p",
    "trials",
    "master_seed",
    "tol",
    "threads",
    "n_grid",
    "instances",
    "gate_C",
    "timing",
];
const CONSTANT_KEYS: &[&str] = &["C", "eps"];

/// Raw key/value entries with their source lines; CLI overrides are applied
/// here before typing.
#[derive(Clone, Debug, Default)]
pub struct ConfigBuilder {
    entries: BTreeMap<String, (Option<usize>, String)>,
    dir: PathBuf,
}

impl ConfigBuilder {
    pub fn new() -> Self {
        Self { entries: BTreeMap::new(), dir: PathBuf::from(".") }
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut out = Self::new();
        let mut section = "experiment".to_string();
        for (line, content) in content_lines(text) {
            if let Some(rest) = content.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| ConfigError::Syntax { line, msg: "unterminated section header".into() })?
                    .trim();
                if name != "experiment" && name != "constants" {
                    return Err(ConfigError::Syntax { line, msg: format!("unknown section [{name}]") });
                }
                section = name.to_string();
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| ConfigError::Syntax { line, msg: format!("expected `key = value`, got `{content}`") })?;
            let key = key.trim();
            let allowed = if section == "constants" { CONSTANT_KEYS } else { EXPERIMENT_KEYS };
            if !allowed.contains(&key) {
                return Err(ConfigError::UnknownKey { line, section, key: key.to_string() });
            }
            if out.entries.insert(key.to_string(), (Some(line), value.trim().to_string())).is_some() {
                return Err(ConfigError::DuplicateKey { line, key: key.to_string() });
            }
        }
        Ok(out)
    }

    /// Reads a config file; relative paths inside it resolve against its directory.
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.display().to_string(), msg: e.to_string() })?;
        let mut out = Self::parse(&text)?;
        out.dir = path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
        Ok(out)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(_, v)| v.as_str())
    }

    /// Sets or replaces a key.
    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<&mut Self, ConfigError> {
        if !EXPERIMENT_KEYS.contains(&key) && !CONSTANT_KEYS.contains(&key) {
            return Err(ConfigError::BadValue { line: None, field: key.into(), msg: "unknown key".into() });
        }
        self.entries.insert(key.to_string(), (None, value.into()));
        Ok(self)
    }

    pub fn build(&self) -> Result<ExperimentConfig, ConfigError> {
        let exp: ExperimentKind = match self.entries.get("experiment") {
            Some(_) => self.typed("experiment", |v| v.parse())?.expect("present"),
            None => return Err(ConfigError::Missing("experiment".into())),
        };
        let mut cfg = ExperimentConfig::new(exp);
        let dir = self.dir.clone();
        if let Some(b) = self.typed("base", |v| BaseSource::resolve(v, &dir))? {
            cfg.base = Some(b);
        }
        if let Some(d) = self.typed("dist", |v| resolve_dist(v, &dir))? {
            cfg.dist = d;
        }
        match self.list("k", parse_positive)? {
            Some(k) => cfg.k = k,
            None if exp == ExperimentKind::McNorm => cfg.k = vec![cfg.dist.k()],
            None => {}
        }
        if let Some(p) = self.list("p", parse_positive)? {
            cfg.p = p;
        }
        if let Some(t) = self.typed("trials", parse_positive)? {
            cfg.trials = t;
        }
        if let Some(s) = self.typed("master_seed", |v| v.parse::<u64>().map_err(|e| e.to_string()))? {
            cfg.master_seed = s;
        }
        if let Some(t) = self.typed("tol", parse_positive_real)? {
            cfg.tol = t;
        }
        if let Some(t) = self.typed("threads", |v| v.parse::<usize>().map_err(|e| e.to_string()))? {
            cfg.threads = t;
        }
        if let Some(g) = self.list("n_grid", |v| parse_at_least(v, 2))? {
            cfg.n_grid = g;
        }
        if let Some(i) = self.list("instances", |v| Instance::parse(v, &dir))? {
            cfg.instances = i;
        }
        if let Some(c) = self.list("C", parse_positive_real)? {
            cfg.c_values = c;
        }
        if let Some(e) = self.list("eps", |v| {
            let e = parse_positive_real(v)?;
            if e > crate::bounds::EPS_MAX {
                Err(format!("ε = {e} exceeds 1/2"))
            } else {
                Ok(e)
            }
        })? {
            cfg.eps = e;
        }
        if let Some(c) = self.typed("gate_C", parse_positive_real)? {
            cfg.gate_c = c;
        }
        if let Some(t) = self.typed("timing", |v| v.parse::<bool>().map_err(|e| e.to_string()))? {
            cfg.timing = t;
        }
        let needs_base = matches!(exp, ExperimentKind::McNorm | ExperimentKind::KliftSweep);
        if needs_base && cfg.base.is_none() {
            return Err(ConfigError::Missing("base".into()));
        }
        if exp == ExperimentKind::KliftSweep {
            let base = cfg.base.as_ref().expect("checked");
            if let Err(msg) = base.graph() {
                return Err(self.bad("base", format!("klift_sweep needs a graph: {msg}")));
            }
        }
        Ok(cfg)
    }

    fn bad(&self, field: &str, msg: String) -> ConfigError {
        ConfigError::BadValue { line: self.entries.get(field).and_then(|e| e.0), field: field.into(), msg }
    }

    fn typed<T>(&self, field: &str, f: impl Fn(&str) -> Result<T, String>) -> Result<Option<T>, ConfigError> {
        match self.entries.get(field) {
            None => Ok(None),
            Some((_, v)) => f(v).map(Some).map_err(|msg| self.bad(field, msg)),
        }
    }

    fn list<T>(&self, field: &str, f: impl Fn(&str) -> Result<T, String>) -> Result<Option<Vec<T>>, ConfigError> {
        match self.entries.get(field) {
            None => Ok(None),
            Some((_, v)) => split_top_level(v)
                .into_iter()
                .map(|item| f(item).map_err(|msg| self.bad(field, msg)))
                .collect::<Result<Vec<_>, _>>()
                .map(Some),
        }
    }
}

fn parse_positive(v: &str) -> Result<usize, String> {
    parse_at_least(v, 1)
}

fn parse_at_least(v: &str, min: usize) -> Result<usize, String> {
    let x: usize = v.parse().map_err(|_| format!("`{v}` is not a nonnegative integer"))?;
    if x < min {
        return Err(format!("{x} is below the minimum of {min}"));
    }
    Ok(x)
}

fn parse_positive_real(v: &str) -> Result<f64, String> {
    let x: f64 = v.parse().map_err(|_| format!("`{v}` is not a number"))?;
    if !(x > 0.0 && x.is_finite()) {
        return Err(format!("{x} is not a positive finite number"));
    }
    Ok(x)
}

/// Splits on commas outside parentheses, dropping empty items.
pub fn split_top_level(s: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, ch) in s.char_indices() {
        match ch {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                out.push(s[start..i].trim());
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(s[start..].trim());
    out.retain(|x| !x.is_empty());
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_lists() {
        let cfg = ExperimentConfig::parse(
            "experiment = klift_sweep\nbase = petersen # comment\nk = 2, 3, 5\ntrials = 40\nmaster_seed = 9\n\n[constants]\nC = 1, 10\neps = 0.25, 0.5\n",
        )
        .unwrap();
        assert_eq!(cfg.experiment, ExperimentKind::KliftSweep);
        assert_eq!(cfg.base, Some(BaseSource::Generator(Generator::Petersen)));
        assert_eq!(cfg.k, vec![2, 3, 5]);
        assert_eq!((cfg.trials, cfg.master_seed), (40, 9));
        assert_eq!(cfg.c_values, vec![1.0, 10.0]);
        assert_eq!(cfg.eps, vec![0.25, 0.5]);
    }

    #[test]
    fn defaults_follow_experiment() {
        let cfg = ExperimentConfig::parse("experiment = clique_scaling").unwrap();
        assert_eq!(cfg.trials, 500);
        assert_eq!(cfg.n_grid, vec![64, 256, 1024, 4096]);
        assert_eq!(cfg.k, vec![2]);
        let cfg = ExperimentConfig::parse("experiment = prop_compare").unwrap();
        assert_eq!(cfg.instances.len(), 3);
    }

    #[test]
    fn instances_split_outside_parentheses() {
        let cfg = ExperimentConfig::parse(
            "experiment = prop_compare\ninstances = clique_union(6,3):centered_permutation(3), single_edge:rademacher",
        )
        .unwrap();
        assert_eq!(cfg.instances.len(), 2);
        assert_eq!(cfg.instances[0].id, "clique_union(6,3)/centered_permutation(3)");
        let empty = ExperimentConfig::parse("experiment = prop_compare\ninstances =").unwrap();
        assert!(empty.instances.is_empty());
    }

    #[test]
    fn diagnostics_carry_line_and_field() {
        let err = ExperimentConfig::parse("experiment = clique_scaling\n\ntrials = 0\n").unwrap_err();
        assert_eq!(
            err,
            ConfigError::BadValue { line: Some(3), field: "trials".into(), msg: "0 is below the minimum of 1".into() }
        );
        assert!(err.to_string().starts_with("line 3: field `trials`"));
        assert!(matches!(
            ExperimentConfig::parse("experiment = mc_norm\nbase = petersen\nfoo = 1"),
            Err(ConfigError::UnknownKey { line: 3, .. })
        ));
        assert!(matches!(
            ExperimentConfig::parse("experiment = mc_norm\nbase petersen"),
            Err(ConfigError::Syntax { line: 2, .. })
        ));
        assert_eq!(ExperimentConfig::parse("experiment = mc_norm"), Err(ConfigError::Missing("base".into())));
        assert!(matches!(
            ExperimentConfig::parse("experiment = mc_norm\nbase = nowhere.txt"),
            Err(ConfigError::BadValue { line: Some(2), .. })
        ));
        assert!(matches!(
            ExperimentConfig::parse("experiment = mc_norm\nbase = petersen\n[constants]\neps = 0.7"),
            Err(ConfigError::BadValue { line: Some(4), .. })
        ));
        assert!(matches!(
            ExperimentConfig::parse("experiment = mc_norm\nk = 2\nk = 3"),
            Err(ConfigError::DuplicateKey { line: 3, .. })
        ));
    }

    #[test]
    fn overrides_replace_entries() {
        let mut b = ConfigBuilder::parse("experiment = mc_norm\nbase = petersen\ntrials = 5").unwrap();
        b.set("trials", "7").unwrap().set("dist", "haar_orthogonal(3)").unwrap();
        let cfg = b.build().unwrap();
        assert_eq!(cfg.trials, 7);
        assert_eq!(cfg.dist, LiftDistribution::HaarOrthogonal { k: 3 });
        assert!(b.set("bogus", "1").is_err());
    }

    #[test]
    fn files_resolve_relative_to_config() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("w.txt"), "symmetric 2\n0 1 2.0\n").unwrap();
        std::fs::write(dir.path().join("g.txt"), "graph 3\n0 1\n1 2\n").unwrap();
        std::fs::write(
            dir.path().join("run.cfg"),
            "experiment = prop_compare\ninstances = w.txt:rademacher, g.txt:rademacher\n",
        )
        .unwrap();
        let cfg = ExperimentConfig::from_file(&dir.path().join("run.cfg")).unwrap();
        assert_eq!(cfg.instances[0].base.matrix().unwrap().get(0, 1), 2.0);
        assert_eq!(cfg.instances[1].base.matrix().unwrap(), GraphSpec::path(3).adjacency());
    }
}
