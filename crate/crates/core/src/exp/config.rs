//! Flat `key = value` experiment configuration with dotted keys.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// 2 GiB expressed in bits.
pub const DEFAULT_MAX_BITS: u64 = 2 * 1024 * 1024 * 1024 * 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ExperimentKind {
    CmiTradeoffCvx,
    CmiTradeoffScvx,
    RecallGameCvx,
    RecallGameScvx,
    FingerprintCheck,
    UpperBoundCheck,
    LemmaVerify,
    ExactCmiDemo,
}

pub const EXPERIMENT_NAMES: [&str; 8] = [
    "cmi-tradeoff-cvx",
    "cmi-tradeoff-scvx",
    "recall-game-cvx",
    "recall-game-scvx",
    "fingerprint-check",
    "upper-bound-check",
    "lemma-verify",
    "exact-cmi-demo",
];

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::CmiTradeoffCvx => "cmi-tradeoff-cvx",
            ExperimentKind::CmiTradeoffScvx => "cmi-tradeoff-scvx",
            ExperimentKind::RecallGameCvx => "recall-game-cvx",
            ExperimentKind::RecallGameScvx => "recall-game-scvx",
            ExperimentKind::FingerprintCheck => "fingerprint-check",
            ExperimentKind::UpperBoundCheck => "upper-bound-check",
            ExperimentKind::LemmaVerify => "lemma-verify",
            ExperimentKind::ExactCmiDemo => "exact-cmi-demo",
        }
    }

    /// Whether the experiment runs on the convex instance for `problem`.
    pub fn is_cvx(&self, problem: Problem) -> bool {
        match self {
            ExperimentKind::CmiTradeoffCvx | ExperimentKind::RecallGameCvx => true,
            ExperimentKind::CmiTradeoffScvx | ExperimentKind::RecallGameScvx => false,
            _ => problem == Problem::Cvx,
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "cmi-tradeoff-cvx" => ExperimentKind::CmiTradeoffCvx,
            "cmi-tradeoff-scvx" => ExperimentKind::CmiTradeoffScvx,
            "recall-game-cvx" => ExperimentKind::RecallGameCvx,
            "recall-game-scvx" => ExperimentKind::RecallGameScvx,
            "fingerprint-check" => ExperimentKind::FingerprintCheck,
            "upper-bound-check" => ExperimentKind::UpperBoundCheck,
            "lemma-verify" => ExperimentKind::LemmaVerify,
            "exact-cmi-demo" => ExperimentKind::ExactCmiDemo,
            _ => return Err(Error::UnknownName { kind: "experiment", name: s.into() }),
        })
    }
}

/// Instance used by experiments that are not tied to one by name.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Problem {
    Cvx,
    Scvx,
}

impl FromStr for Problem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cvx" => Ok(Problem::Cvx),
            "scvx" => Ok(Problem::Scvx),
            _ => Err(Error::UnknownName { kind: "problem", name: s.into() }),
        }
    }
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Problem::Cvx => "cvx",
            Problem::Scvx => "scvx",
        })
    }
}

/// Sample size rule.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SizeN {
    /// The learner's nominal sample size.
    Auto,
    Fixed(usize),
    /// `ceil(c/ε)`.
    InvEps(f64),
    /// `ceil(c/ε²)`.
    InvEpsSq(f64),
}

impl SizeN {
    pub fn resolve(&self, eps: f64, nominal: impl FnOnce() -> Result<usize>) -> Result<usize> {
        let n = match *self {
            SizeN::Auto => nominal()?,
            SizeN::Fixed(n) => n,
            SizeN::InvEps(c) => (c / eps).ceil() as usize,
            SizeN::InvEpsSq(c) => (c / (eps * eps)).ceil() as usize,
        };
        if n == 0 {
            return Err(Error::Config("resolved n is 0".into()));
        }
        Ok(n)
    }
}

impl fmt::Display for SizeN {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SizeN::Auto => f.write_str("auto"),
            SizeN::Fixed(n) => write!(f, "{n}"),
            SizeN::InvEps(c) => write!(f, "{c}/eps"),
            SizeN::InvEpsSq(c) => write!(f, "{c}/eps^2"),
        }
    }
}

impl FromStr for SizeN {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(SizeN::Auto);
        }
        let coef = |c: &str| -> Result<f64> {
            let v: f64 = c.parse().map_err(|_| Error::Config(format!("bad size coefficient `{c}`")))?;
            if v > 0.0 && v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Config(format!("size coefficient must be positive, got {v}")))
            }
        };
        if let Some(c) = s.strip_suffix("/eps^2") {
            return Ok(SizeN::InvEpsSq(coef(c)?));
        }
        if let Some(c) = s.strip_suffix("/eps") {
            return Ok(SizeN::InvEps(coef(c)?));
        }
        s.parse().map(SizeN::Fixed).map_err(|_| Error::Config(format!("bad sizes.n `{s}`")))
    }
}

/// Dimension rule; `Auto` is `ceil(c_d·n²·ln(n/ξ))`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SizeD {
    Auto,
    Fixed(usize),
}

impl fmt::Display for SizeD {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SizeD::Auto => f.write_str("auto"),
            SizeD::Fixed(d) => write!(f, "{d}"),
        }
    }
}

impl FromStr for SizeD {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(SizeD::Auto);
        }
        match s.parse() {
            Ok(0) | Err(_) => Err(Error::Config(format!("bad sizes.d `{s}`"))),
            Ok(d) => Ok(SizeD::Fixed(d)),
        }
    }
}

/// Learner budget override.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BudgetM {
    /// The learner's own rule.
    Auto,
    /// Use the whole resolved sample.
    N,
    Fixed(usize),
}

impl fmt::Display for BudgetM {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BudgetM::Auto => f.write_str("auto"),
            BudgetM::N => f.write_str("n"),
            BudgetM::Fixed(m) => write!(f, "{m}"),
        }
    }
}

impl FromStr for BudgetM {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(BudgetM::Auto),
            "n" => Ok(BudgetM::N),
            _ => match s.parse() {
                Ok(0) | Err(_) => Err(Error::Config(format!("bad learner.m `{s}`"))),
                Ok(m) => Ok(BudgetM::Fixed(m)),
            },
        }
    }
}

/// Acceptance thresholds checked after a run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Acceptance {
    pub min: BTreeMap<String, f64>,
    pub max: BTreeMap<String, f64>,
    pub slope_metric: Option<String>,
    pub slope_min: Option<f64>,
    pub slope_max: Option<f64>,
}

impl Acceptance {
    pub fn is_empty(&self) -> bool {
        self.min.is_empty() && self.max.is_empty() && self.slope_min.is_none() && self.slope_max.is_none()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub problem: Problem,
    pub learner: String,
    pub learner_m: BudgetM,
    pub adversary: String,
    pub beta: f64,
    pub eps_grid: Vec<f64>,
    pub delta: f64,
    pub xi: f64,
    pub n: SizeN,
    pub d: SizeD,
    pub d_factor: f64,
    pub max_bits: u64,
    pub trials: usize,
    pub seed: u64,
    pub output: Option<String>,
    pub accept: Acceptance,
}

impl ExperimentConfig {
    /// Defaults for an experiment kind.
    pub fn new(experiment: ExperimentKind) -> Self {
        let (learner, adversary, problem) = match experiment {
            ExperimentKind::CmiTradeoffCvx | ExperimentKind::RecallGameCvx => {
                ("subsample-normalized-mean", "q-cvx", Problem::Cvx)
            }
            _ => ("mean-erm", "q-scvx", Problem::Scvx),
        };
        Self {
            experiment,
            problem,
            learner: learner.into(),
            learner_m: BudgetM::Auto,
            adversary: adversary.into(),
            beta: 1.0 / 12.0,
            eps_grid: vec![0.05],
            delta: 0.01,
            xi: 0.1,
            n: SizeN::Auto,
            d: SizeD::Auto,
            d_factor: 1.0,
            max_bits: DEFAULT_MAX_BITS,
            trials: 100,
            seed: 0,
            output: None,
            accept: Acceptance::default(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
            let (k, v) = (k.trim().to_string(), v.trim().to_string());
            if pairs.insert(k.clone(), v).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key `{k}`", lineno + 1)));
            }
        }
        let name = pairs
            .remove("experiment.name")
            .ok_or_else(|| Error::Config("missing experiment.name".into()))?;
        let mut cfg = Self::new(name.parse()?);
        for (k, v) in pairs {
            cfg.set(&k, &v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets one key; used by the parser and by command-line overrides.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::Config(format!("bad value for {key}: `{value}` ({what})"));
        let real = |v: &str| -> Result<f64> { v.parse::<f64>().map_err(|_| bad("expected a number")) };
        match key {
            "experiment.name" => self.experiment = value.parse()?,
            "experiment.problem" => self.problem = value.parse()?,
            "learner.name" => self.learner = value.into(),
            "learner.m" => self.learner_m = value.parse()?,
            "adversary.name" => self.adversary = value.into(),
            "adversary.beta" => self.beta = real(value)?,
            "grid.eps" => {
                self.eps_grid = value.split(',').map(|s| real(s.trim())).collect::<Result<_>>()?;
            }
            "params.delta" => self.delta = real(value)?,
            "params.xi" => self.xi = real(value)?,
            "sizes.n" => self.n = value.parse()?,
            "sizes.d" => self.d = value.parse()?,
            "sizes.d_factor" => self.d_factor = real(value)?,
            "sizes.max_bits" => self.max_bits = value.parse().map_err(|_| bad("expected an integer"))?,
            "run.trials" => self.trials = value.parse().map_err(|_| bad("expected an integer"))?,
            "run.seed" => self.seed = value.parse().map_err(|_| bad("expected a u64"))?,
            "output.path" => self.output = Some(value.into()),
            "accept.slope.metric" => self.accept.slope_metric = Some(value.into()),
            "accept.slope.min" => self.accept.slope_min = Some(real(value)?),
            "accept.slope.max" => self.accept.slope_max = Some(real(value)?),
            _ => {
                if let Some(m) = key.strip_prefix("accept.min.") {
                    self.accept.min.insert(m.into(), real(value)?);
                } else if let Some(m) = key.strip_prefix("accept.max.") {
                    self.accept.max.insert(m.into(), real(value)?);
                } else {
                    return Err(Error::Config(format!("unknown key `{key}`")));
                }
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.eps_grid.is_empty() {
            return Err(Error::Config("grid.eps is empty".into()));
        }
        for &e in &self.eps_grid {
            if !(e > 0.0 && e.is_finite()) {
                return Err(Error::Config(format!("epsilon {e} must be positive")));
            }
            if self.experiment.is_cvx(self.problem) && e >= 1.0 / 12.0 {
                return Err(Error::EpsilonOutOfRange(e));
            }
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Config(format!("params.delta {} outside (0,1)", self.delta)));
        }
        if !(self.xi > 0.0 && self.xi <= 1.0) {
            return Err(Error::Config(format!("params.xi {} outside (0,1]", self.xi)));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!("adversary.beta {} must be positive", self.beta)));
        }
        if !(self.d_factor > 0.0 && self.d_factor.is_finite()) {
            return Err(Error::Config(format!("sizes.d_factor {} must be positive", self.d_factor)));
        }
        if self.trials == 0 {
            return Err(Error::Config("run.trials must be at least 1".into()));
        }
        crate::learners::LearnerKind::from_name(&self.learner)?;
        crate::attacks::AdversaryKind::from_name(&self.adversary)?;
        if self.accept.slope_metric.is_none() && (self.accept.slope_min.is_some() || self.accept.slope_max.is_some()) {
            return Err(Error::Config("accept.slope.min/max need accept.slope.metric".into()));
        }
        Ok(())
    }

    /// `ceil(c_d·n²·ln(n/ξ))`, at least 1, or the fixed dimension.
    pub fn resolve_d(&self, n: usize) -> Result<usize> {
        let d = match self.d {
            SizeD::Fixed(d) => d,
            SizeD::Auto => {
                let nf = n as f64;
                ((self.d_factor * nf * nf * (nf / self.xi).ln()).ceil() as usize).max(1)
            }
        };
        let bits = (d as u128) * 2 * n as u128;
        if bits > self.max_bits as u128 {
            return Err(Error::ResourceLimit(format!(
                "d·2n = {bits} bits exceeds sizes.max_bits = {}",
                self.max_bits
            )));
        }
        Ok(d)
    }
}

impl fmt::Display for ExperimentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "experiment.name = {}", self.experiment.name())?;
        writeln!(f, "experiment.problem = {}", self.problem)?;
        writeln!(f, "learner.name = {}", self.learner)?;
        writeln!(f, "learner.m = {}", self.learner_m)?;
        writeln!(f, "adversary.name = {}", self.adversary)?;
        writeln!(f, "adversary.beta = {:?}", self.beta)?;
        let grid: Vec<String> = self.eps_grid.iter().map(|e| format!("{e:?}")).collect();
        writeln!(f, "grid.eps = {}", grid.join(","))?;
        writeln!(f, "params.delta = {:?}", self.delta)?;
        writeln!(f, "params.xi = {:?}", self.xi)?;
        writeln!(f, "sizes.n = {}", self.n)?;
        writeln!(f, "sizes.d = {}", self.d)?;
        writeln!(f, "sizes.d_factor = {:?}", self.d_factor)?;
        writeln!(f, "sizes.max_bits = {}", self.max_bits)?;
        writeln!(f, "run.trials = {}", self.trials)?;
        writeln!(f, "run.seed = {}", self.seed)?;
        if let Some(p) = &self.output {
            writeln!(f, "output.path = {p}")?;
        }
        for (k, v) in &self.accept.min {
            writeln!(f, "accept.min.{k} = {v:?}")?;
        }
        for (k, v) in &self.accept.max {
            writeln!(f, "accept.max.{k} = {v:?}")?;
        }
        if let Some(m) = &self.accept.slope_metric {
            writeln!(f, "accept.slope.metric = {m}")?;
        }
        if let Some(v) = self.accept.slope_min {
            writeln!(f, "accept.slope.min = {v:?}")?;
        }
        if let Some(v) = self.accept.slope_max {
            writeln!(f, "accept.slope.max = {v:?}")?;
        }
        Ok(())
    }
}
