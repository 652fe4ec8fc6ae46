//! Experiment specification files.
//!
//! A spec is a flat INI file:
//!
//! ```ini
//! [data]
//! ; or csv
//! source = synth
//! g = 5
//! d = 10
//! n = 5000
//! separation = 4
//! seed = 7
//! ; csv only, relative to the spec file
//! ; path = digits.csv
//! ; header = true
//!
//! [model]
//! components = 5
//! covariance_floor = 1e-8
//!
//! [run]
//! strategies = full-geom, half-geom, quad-geom, full-ctt, half-ctt, quad-ctt, online-em
//! replications = 5
//! k_out = 30
//! ; ceil(sqrt(n))
//! batch = auto
//! replacement = true
//! ; or auto:<alpha> for alpha / L
//! gamma = 0.01
//! gamma_reset = 0
//! warmstart_epochs = 2
//! warmstart_gamma = 0.01
//! seed = 1
//! workers = 4
//! ; or randomized
//! termination = none
//!
//! [output]
//! dir = out
//!
//! ; per-strategy overrides of gamma / gamma_reset
//! [strategy.online-em]
//! gamma = 0.01
//! ```
//!
//! Comments go on their own lines.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ini::Ini;

use crate::error::{Error, Result};
use crate::solvers::{spider_strategy, StepSize, Termination, SPIDER_STRATEGIES};

/// A strategy of the benchmark grid.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Strategy {
    /// One of the six g-SPIDER-EM variants.
    Spider(String),
    OnlineEm,
    BatchEm,
}

impl Strategy {
    pub fn name(&self) -> &str {
        match self {
            Strategy::Spider(s) => s,
            Strategy::OnlineEm => "online-em",
            Strategy::BatchEm => "batch-em",
        }
    }

    /// The six g-SPIDER-EM strategies followed by Online-EM.
    pub fn default_grid() -> Vec<Strategy> {
        SPIDER_STRATEGIES
            .iter()
            .map(|s| Strategy::Spider(s.to_string()))
            .chain(std::iter::once(Strategy::OnlineEm))
            .collect()
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "online-em" => Ok(Strategy::OnlineEm),
            "batch-em" => Ok(Strategy::BatchEm),
            other => {
                spider_strategy(other, 100, 10)?;
                Ok(Strategy::Spider(other.to_string()))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Csv { path: PathBuf, has_header: bool },
    Synth { g: usize, d: usize, n: usize, separation: f64, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StrategyOverride {
    pub gamma: Option<StepSize>,
    pub gamma_reset: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub data: DataSource,
    pub components: usize,
    pub covariance_floor: f64,
    pub strategies: Vec<Strategy>,
    pub replications: usize,
    pub k_out: usize,
    /// `None` means `ceil(sqrt(n))`.
    pub batch: Option<usize>,
    pub replacement: bool,
    pub gamma: StepSize,
    pub gamma_reset: f64,
    pub warmstart_epochs: usize,
    pub warmstart_gamma: f64,
    pub seed: u64,
    pub workers: usize,
    pub termination: Termination,
    pub output_dir: PathBuf,
    pub overrides: BTreeMap<String, StrategyOverride>,
}

/// The default desk-scale experiment shipped with the repository.
pub const DESK_SPEC: &str = include_str!("../../../../configs/desk.ini");

impl ExperimentSpec {
    pub fn desk() -> Self {
        Self::parse(DESK_SPEC, None).expect("shipped desk spec is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.parent())
    }

    /// Parses and validates a spec; every problem found is reported.
    /// Relative CSV paths are resolved against `base_dir`.
    pub fn parse(text: &str, base_dir: Option<&Path>) -> Result<Self> {
        let ini = Ini::load_from_str_noescape(text).map_err(|e| Error::Parse {
            path: "spec".into(),
            row: e.line,
            column: e.col,
            message: e.msg.to_string(),
        })?;
        let mut p = Fields::default();
        for (section, props) in ini.iter() {
            let section = section.unwrap_or("");
            for (key, value) in props.iter() {
                p.raw.insert((section.to_string(), key.to_string()), value.trim().to_string());
            }
            if !matches!(section, "" | "data" | "model" | "run" | "output") && !section.starts_with("strategy.") {
                p.errors.push(format!("unknown section [{section}]"));
            }
        }
        let spec = build(&mut p, base_dir);
        p.report_unused();
        match spec {
            Some(s) if p.errors.is_empty() => {
                s.validate()?;
                Ok(s)
            }
            _ => Err(Error::InvalidConfig(p.errors)),
        }
    }

    /// Cross-field checks: value ranges and file existence.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        match &self.data {
            DataSource::Csv { path, .. } if !path.is_file() => {
                errs.push(format!("data.path: file {} does not exist", path.display()))
            }
            DataSource::Synth { g, d, n, separation, .. } => {
                if *g == 0 || *d == 0 || *n == 0 {
                    errs.push("data: synthetic g, d, n must be at least 1".into());
                }
                if !(*separation > 0.0) {
                    errs.push(format!("data.separation must be positive, got {separation}"));
                }
            }
            _ => {}
        }
        if self.components == 0 {
            errs.push("model.components must be at least 1".into());
        }
        if !(self.covariance_floor > 0.0) {
            errs.push("model.covariance_floor must be positive".into());
        }
        if self.strategies.is_empty() {
            errs.push("run.strategies must list at least one strategy".into());
        }
        if self.replications == 0 {
            errs.push("run.replications must be at least 1".into());
        }
        if self.k_out == 0 {
            errs.push("run.k_out must be at least 1".into());
        }
        if self.batch == Some(0) {
            errs.push("run.batch must be at least 1".into());
        }
        if let (Some(b), DataSource::Synth { n, .. }) = (self.batch, &self.data) {
            if !self.replacement && b > *n {
                errs.push(format!("run.batch = {b} exceeds n = {n} without replacement"));
            }
        }
        let mut check_gamma = |label: &str, g: StepSize| match g {
            StepSize::Fixed(v) if !(v > 0.0 && v.is_finite()) => errs.push(format!("{label} must be positive")),
            StepSize::Auto { alpha } if !(alpha > 0.0 && alpha.is_finite()) => {
                errs.push(format!("{label}: alpha must be positive"))
            }
            _ => {}
        };
        check_gamma("run.gamma", self.gamma);
        for (name, o) in &self.overrides {
            if let Some(g) = o.gamma {
                check_gamma(&format!("strategy.{name}.gamma"), g);
            }
        }
        let resets = std::iter::once(self.gamma_reset).chain(self.overrides.values().filter_map(|o| o.gamma_reset));
        for r in resets {
            if !(r >= 0.0 && r.is_finite()) {
                errs.push(format!("gamma_reset must be nonnegative, got {r}"));
            }
        }
        if self.warmstart_epochs > 0 && !(self.warmstart_gamma > 0.0 && self.warmstart_gamma <= 1.0) {
            errs.push("run.warmstart_gamma must be in (0, 1]".into());
        }
        if self.workers == 0 {
            errs.push("run.workers must be at least 1".into());
        }
        for name in self.overrides.keys() {
            if !self.strategies.iter().any(|s| s.name() == name) {
                errs.push(format!("[strategy.{name}] overrides a strategy not in run.strategies"));
            }
        }
        for s in &self.strategies {
            if *s == Strategy::OnlineEm {
                match self.step_for(s).0 {
                    StepSize::Fixed(v) if v > 1.0 => errs.push(format!("online-em: gamma must be at most 1, got {v}")),
                    StepSize::Auto { .. } => errs.push("online-em: gamma must be a number, not auto".into()),
                    _ => {}
                }
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for s in &self.strategies {
            if !seen.insert(s.name()) {
                errs.push(format!("run.strategies lists {} twice", s.name()));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(errs))
        }
    }

    pub fn step_for(&self, strategy: &Strategy) -> (StepSize, f64) {
        let o = self.overrides.get(strategy.name()).copied().unwrap_or_default();
        (o.gamma.unwrap_or(self.gamma), o.gamma_reset.unwrap_or(self.gamma_reset))
    }

    /// Applies `SPIDER_EM_OUT_DIR` and `SPIDER_EM_WORKERS` when set.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(dir) = std::env::var("SPIDER_EM_OUT_DIR") {
            self.output_dir = PathBuf::from(dir);
        }
        if let Ok(w) = std::env::var("SPIDER_EM_WORKERS") {
            self.workers = w
                .parse()
                .ok()
                .filter(|w| *w > 0)
                .ok_or_else(|| Error::config(format!("SPIDER_EM_WORKERS: expected a positive integer, got {w:?}")))?;
        }
        Ok(())
    }
}

#[derive(Default)]
struct Fields {
    raw: BTreeMap<(String, String), String>,
    used: std::collections::BTreeSet<(String, String)>,
    errors: Vec<String>,
}

impl Fields {
    fn get(&mut self, section: &str, key: &str) -> Option<String> {
        let k = (section.to_string(), key.to_string());
        let v = self.raw.get(&k).cloned();
        if v.is_some() {
            self.used.insert(k);
        }
        v
    }

    fn parse<T: FromStr>(&mut self, section: &str, key: &str, default: Option<T>) -> Option<T> {
        match self.get(section, key) {
            Some(v) => match v.parse() {
                Ok(x) => Some(x),
                Err(_) => {
                    self.errors.push(format!("{section}.{key}: cannot parse {v:?}"));
                    None
                }
            },
            None if default.is_some() => default,
            None => {
                self.errors.push(format!("{section}.{key} is required"));
                None
            }
        }
    }

    fn report_unused(&mut self) {
        for k in self.raw.keys() {
            if !self.used.contains(k) {
                let where_ = if k.0.is_empty() { String::new() } else { format!("{}.", k.0) };
                self.errors.push(format!("unknown key {where_}{}", k.1));
            }
        }
    }
}

fn parse_step(text: &str) -> Option<StepSize> {
    match text.strip_prefix("auto:") {
        Some(alpha) => alpha.trim().parse().ok().map(|alpha| StepSize::Auto { alpha }),
        None => text.parse().ok().map(StepSize::Fixed),
    }
}

fn build(p: &mut Fields, base_dir: Option<&Path>) -> Option<ExperimentSpec> {
    let source = p.get("data", "source").unwrap_or_else(|| "synth".into());
    let data = match source.as_str() {
        "csv" => {
            let path = p.get("data", "path");
            let has_header = p.parse("data", "header", Some(false));
            match path {
                Some(path) => {
                    let path = PathBuf::from(path);
                    let path = match base_dir {
                        Some(b) if path.is_relative() => b.join(path),
                        _ => path,
                    };
                    has_header.map(|has_header| DataSource::Csv { path, has_header })
                }
                None => {
                    p.errors.push("data.path is required when data.source = csv".into());
                    None
                }
            }
        }
        "synth" => {
            let g = p.parse("data", "g", Some(5));
            let d = p.parse("data", "d", Some(10));
            let n = p.parse("data", "n", Some(5000));
            let separation = p.parse("data", "separation", Some(4.0));
            let seed = p.parse("data", "seed", Some(7));
            match (g, d, n, separation, seed) {
                (Some(g), Some(d), Some(n), Some(separation), Some(seed)) => {
                    Some(DataSource::Synth { g, d, n, separation, seed })
                }
                _ => None,
            }
        }
        other => {
            p.errors.push(format!("data.source must be csv or synth, got {other:?}"));
            None
        }
    };
    let components = p.parse("model", "components", Some(5));
    let covariance_floor = p.parse("model", "covariance_floor", Some(1e-8));

    let strategies = match p.get("run", "strategies") {
        Some(list) => {
            let mut out = Vec::new();
            for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                match item.parse::<Strategy>() {
                    Ok(s) => out.push(s),
                    Err(_) => p.errors.push(format!("run.strategies: unknown strategy {item:?}")),
                }
            }
            Some(out)
        }
        None => Some(Strategy::default_grid()),
    };
    let replications = p.parse("run", "replications", Some(5));
    let k_out = p.parse("run", "k_out", Some(30));
    let batch = match p.get("run", "batch").as_deref() {
        None | Some("auto") => Some(None),
        Some(v) => match v.parse::<usize>() {
            Ok(b) => Some(Some(b)),
            Err(_) => {
                p.errors.push(format!("run.batch: expected an integer or auto, got {v:?}"));
                None
            }
        },
    };
    let replacement = p.parse("run", "replacement", Some(true));
    let gamma = match p.get("run", "gamma") {
        None => Some(StepSize::Fixed(0.01)),
        Some(v) => {
            let g = parse_step(&v);
            if g.is_none() {
                p.errors.push(format!("run.gamma: expected a number or auto:<alpha>, got {v:?}"));
            }
            g
        }
    };
    let gamma_reset = p.parse("run", "gamma_reset", Some(0.0));
    let warmstart_epochs = p.parse("run", "warmstart_epochs", Some(2));
    let warmstart_gamma = p.parse("run", "warmstart_gamma", Some(0.01));
    let seed = p.parse("run", "seed", Some(1));
    let workers = p.parse("run", "workers", Some(4));
    let termination = match p.get("run", "termination").as_deref() {
        None | Some("none") => Some(Termination::None),
        Some("randomized") => Some(Termination::RandomizedUniform),
        Some(other) => {
            p.errors.push(format!("run.termination must be none or randomized, got {other:?}"));
            None
        }
    };
    let output_dir = PathBuf::from(p.get("output", "dir").unwrap_or_else(|| "out".into()));

    let mut overrides = BTreeMap::new();
    let sections: Vec<String> = p
        .raw
        .keys()
        .filter(|(s, _)| s.starts_with("strategy."))
        .map(|(s, _)| s.clone())
        .collect();
    for section in sections {
        let name = section["strategy.".len()..].to_string();
        if name.parse::<Strategy>().is_err() {
            p.errors.push(format!("[{section}]: unknown strategy {name:?}"));
            continue;
        }
        let mut o = StrategyOverride::default();
        if let Some(v) = p.get(&section, "gamma") {
            match parse_step(&v) {
                Some(g) => o.gamma = Some(g),
                None => p.errors.push(format!("{section}.gamma: cannot parse {v:?}")),
            }
        }
        if p.raw.contains_key(&(section.clone(), "gamma_reset".into())) {
            o.gamma_reset = p.parse(&section, "gamma_reset", None);
        }
        overrides.insert(name, o);
    }

    Some(ExperimentSpec {
        data: data?,
        components: components?,
        covariance_floor: covariance_floor?,
        strategies: strategies?,
        replications: replications?,
        k_out: k_out?,
        batch: batch?,
        replacement: replacement?,
        gamma: gamma?,
        gamma_reset: gamma_reset?,
        warmstart_epochs: warmstart_epochs?,
        warmstart_gamma: warmstart_gamma?,
        seed: seed?,
        workers: workers?,
        termination: termination?,
        output_dir,
        overrides,
    })
}
