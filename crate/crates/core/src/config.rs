//! Pipeline configuration.
//!
//! The file format is flat `section.key = value` lines with `#` comments.
//! Every key has a default, so an empty file is a valid configuration.
//! Lists are comma separated. `task.preset` is applied before any other
//! `task.*` key regardless of line order.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::scoring::Metric;
use crate::selection::SelectionMethod;
use crate::synth::{Preset, TaskSpec, ToyTrainerConfig};

/// Parses `key = value` lines; `#` starts a comment, blank lines are skipped.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value, got {raw:?}", ln + 1)))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", ln + 1)));
        }
        if out.insert(k.to_string(), v.trim().to_string()).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key {k}", ln + 1)));
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Labeler {
    SelfTrain,
    Cluster,
}

impl Labeler {
    pub fn name(self) -> &'static str {
        match self {
            Labeler::SelfTrain => "self_train",
            Labeler::Cluster => "cluster",
        }
    }
}

impl FromStr for Labeler {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "self_train" | "ssl" => Ok(Labeler::SelfTrain),
            "cluster" | "kmeans" => Ok(Labeler::Cluster),
            other => Err(Error::Config(format!("unknown labeler {other:?}"))),
        }
    }
}

/// A selection strategy as named in comparison runs: a score paired with a
/// selector. `dual_beta`, `aum_cutoff` and `random` are shorthands; the
/// general form is `<metric>+<selector>`, e.g. `forgetting+top_k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Strategy {
    pub metric: Metric,
    pub selector: SelectionMethod,
}

impl Strategy {
    pub const DUAL_BETA: Strategy = Strategy { metric: Metric::Dual, selector: SelectionMethod::Beta };
    pub const AUM_CUTOFF: Strategy = Strategy { metric: Metric::Aum, selector: SelectionMethod::DoubleEnd };
    pub const RANDOM: Strategy = Strategy { metric: Metric::Dual, selector: SelectionMethod::Random };

    pub fn name(&self) -> String {
        match *self {
            Strategy::DUAL_BETA => "dual_beta".into(),
            Strategy::AUM_CUTOFF => "aum_cutoff".into(),
            s if s.selector == SelectionMethod::Random => "random".into(),
            s => format!("{}+{}", s.metric, s.selector),
        }
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dual_beta" => return Ok(Strategy::DUAL_BETA),
            "aum_cutoff" => return Ok(Strategy::AUM_CUTOFF),
            "random" => return Ok(Strategy::RANDOM),
            _ => {}
        }
        let (m, sel) = s
            .split_once('+')
            .ok_or_else(|| Error::Config(format!("unknown strategy {s:?}; expected <metric>+<selector>")))?;
        let metric = m.parse().map_err(|e: Error| Error::Config(e.to_string()))?;
        let selector = sel.parse().map_err(|e: Error| Error::Config(e.to_string()))?;
        Ok(Strategy { metric, selector })
    }
}

/// Cutoff used at ratio `r` when none is tuned or set explicitly: the entry
/// of the largest tabulated ratio not above `r`, or 0 below the table.
pub fn lookup_cutoff(table: &[(f64, f64)], r: f64) -> f64 {
    table
        .iter()
        .filter(|(ratio, _)| *ratio <= r + 1e-12)
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|&(_, c)| c.min(r))
        .unwrap_or(0.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    pub preset: Preset,
    pub task: TaskSpec,
    pub trainer: ToyTrainerConfig,
    pub budget_fraction: f64,
    pub labeler: Labeler,
    pub threshold: f64,
    pub rounds: usize,
    pub metric: Metric,
    /// Epochs of the logged run that the score uses.
    pub score_epochs: usize,
    pub window: usize,
    pub gamma: f64,
    pub n_early: usize,
    pub selector: SelectionMethod,
    pub ratio: f64,
    /// Explicit cutoff; falls back to `cutoff_table` when unset.
    pub cutoff: Option<f64>,
    pub cutoff_table: Vec<(f64, f64)>,
    pub concentration: f64,
    pub c_d: f64,
    pub mu_fraction: f64,
    pub tuning_enabled: bool,
    pub split_fraction: f64,
    pub r0: f64,
    pub t_grid: Vec<usize>,
    pub cd_grid: Vec<f64>,
    pub gamma_grid: Vec<f64>,
    pub tuning_seeds: Vec<u64>,
    pub strategies: Vec<Strategy>,
    pub ratios: Vec<f64>,
    pub seeds: Vec<u64>,
    pub labelers: Vec<Labeler>,
    pub plots: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let preset = Preset::Clean;
        PipelineConfig {
            seed: 0,
            preset,
            task: TaskSpec::preset(preset),
            trainer: ToyTrainerConfig::default(),
            budget_fraction: 0.1,
            labeler: Labeler::SelfTrain,
            threshold: 0.95,
            rounds: 10,
            metric: Metric::Dual,
            score_epochs: 30,
            window: 10,
            gamma: 1.0,
            n_early: 10,
            selector: SelectionMethod::Beta,
            ratio: 0.9,
            cutoff: None,
            cutoff_table: vec![(0.3, 0.1), (0.5, 0.2), (0.7, 0.4), (0.8, 0.6), (0.9, 0.7)],
            concentration: 16.0,
            c_d: 4.0,
            mu_fraction: 0.01,
            tuning_enabled: true,
            split_fraction: 0.1,
            r0: 0.3,
            t_grid: vec![3, 5, 10, 20, 30],
            cd_grid: vec![4.0, 1.0, 2.0, 8.0, 11.0],
            gamma_grid: vec![1.0],
            tuning_seeds: vec![0],
            strategies: vec![Strategy::DUAL_BETA, Strategy::AUM_CUTOFF, Strategy::RANDOM],
            ratios: vec![0.3, 0.5, 0.7, 0.9],
            seeds: vec![0, 1, 2, 3, 4],
            labelers: vec![Labeler::SelfTrain, Labeler::Cluster],
            plots: true,
        }
    }
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected a boolean, got {v:?}"))),
    }
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    let out: Vec<T> = v
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect::<Result<_>>()?;
    if out.is_empty() {
        return Err(Error::Config(format!("{key}: empty list")));
    }
    Ok(out)
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl PipelineConfig {
    pub fn from_text(text: &str) -> Result<Self> {
        let kv = parse_kv(text)?;
        let mut cfg = PipelineConfig::default();
        cfg.apply(&kv)?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_text(&text)
    }

    /// Applies `key = value` pairs on top of the current values.
    pub fn apply(&mut self, kv: &BTreeMap<String, String>) -> Result<()> {
        if let Some(p) = kv.get("task.preset") {
            self.preset = p.parse().map_err(|e: Error| Error::Config(e.to_string()))?;
            self.task = TaskSpec::preset(self.preset);
        }
        for (k, v) in kv {
            self.set(k, v)?;
        }
        self.validate()
    }

    /// Sets one key. `task.preset` resets every task field.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let k = key;
        match key {
            "seed" => self.seed = parse(k, v)?,
            "task.preset" => {
                let p: Preset = v.parse().map_err(|e: Error| Error::Config(e.to_string()))?;
                if p != self.preset {
                    self.preset = p;
                    self.task = TaskSpec::preset(p);
                }
            }
            "task.n_classes" => self.task.n_classes = parse(k, v)?,
            "task.dim" => self.task.dim = parse(k, v)?,
            "task.n_train" => self.task.n_train = parse(k, v)?,
            "task.n_validation_per_class" => self.task.n_validation_per_class = parse(k, v)?,
            "task.n_test_per_class" => self.task.n_test_per_class = parse(k, v)?,
            "task.radius" => self.task.radius = parse(k, v)?,
            "task.min_separation" => self.task.min_separation = parse(k, v)?,
            "task.noise_std" => self.task.noise_std = parse(k, v)?,
            "task.imbalance_factor" => self.task.imbalance_factor = parse(k, v)?,
            "task.corruption_fraction" => self.task.corruption_fraction = parse(k, v)?,
            "task.corruption_noise" => self.task.corruption_noise = parse(k, v)?,
            "trainer.epochs" => self.trainer.epochs = parse(k, v)?,
            "trainer.learning_rate" => self.trainer.learning_rate = parse(k, v)?,
            "trainer.batch_size" => self.trainer.batch_size = parse(k, v)?,
            "trainer.l2" => self.trainer.l2 = parse(k, v)?,
            "budget.fraction" => self.budget_fraction = parse(k, v)?,
            "label.method" => self.labeler = v.parse()?,
            "label.threshold" => self.threshold = parse(k, v)?,
            "label.rounds" => self.rounds = parse(k, v)?,
            "score.metric" => self.metric = v.parse().map_err(|e: Error| Error::Config(e.to_string()))?,
            "score.T" => self.score_epochs = parse(k, v)?,
            "score.J" => self.window = parse(k, v)?,
            "score.gamma" => self.gamma = parse(k, v)?,
            "score.n_early" => self.n_early = parse(k, v)?,
            "selection.method" => self.selector = v.parse().map_err(|e: Error| Error::Config(e.to_string()))?,
            "selection.ratio" => self.ratio = parse(k, v)?,
            "selection.cutoff" => {
                self.cutoff = if v == "table" { None } else { Some(parse(k, v)?) };
            }
            "selection.cutoff_table" => {
                self.cutoff_table = v
                    .split(',')
                    .map(|pair| {
                        let (r, c) = pair
                            .split_once(':')
                            .ok_or_else(|| Error::Config(format!("{k}: expected ratio:cutoff, got {pair:?}")))?;
                        Ok((parse(k, r.trim())?, parse(k, c.trim())?))
                    })
                    .collect::<Result<_>>()?;
            }
            "selection.C" => self.concentration = parse(k, v)?,
            "selection.c_D" => self.c_d = parse(k, v)?,
            "selection.q" => self.mu_fraction = parse(k, v)?,
            "tuning.enabled" => self.tuning_enabled = parse_bool(k, v)?,
            "tuning.split_fraction" => self.split_fraction = parse(k, v)?,
            "tuning.r0" => self.r0 = parse(k, v)?,
            "tuning.T_grid" => self.t_grid = parse_list(k, v)?,
            "tuning.cD_grid" => self.cd_grid = parse_list(k, v)?,
            "tuning.gamma_grid" => self.gamma_grid = parse_list(k, v)?,
            "tuning.seeds" => self.tuning_seeds = parse_list(k, v)?,
            "compare.methods" => {
                self.strategies = v.split(',').map(|s| s.trim().parse()).collect::<Result<_>>()?;
            }
            "compare.ratios" => self.ratios = parse_list(k, v)?,
            "compare.seeds" => self.seeds = parse_list(k, v)?,
            "compare.labelers" => {
                self.labelers = v.split(',').map(|s| s.trim().parse()).collect::<Result<_>>()?;
            }
            "output.plots" => self.plots = parse_bool(k, v)?,
            _ => return Err(Error::Config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        self.task.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.trainer.validate().map_err(|e| Error::Config(e.to_string()))?;
        if !(self.budget_fraction > 0.0 && self.budget_fraction <= 1.0) {
            return bad(format!("budget.fraction {} outside (0, 1]", self.budget_fraction));
        }
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return bad(format!("label.threshold {} outside (0, 1]", self.threshold));
        }
        if self.score_epochs < 2 || self.score_epochs > self.trainer.epochs {
            return bad(format!("score.T {} outside [2, trainer.epochs]", self.score_epochs));
        }
        if self.window < 2 {
            return bad("score.J must be at least 2".into());
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(format!("score.gamma {} outside (0, 1]", self.gamma));
        }
        if self.n_early < 1 {
            return bad("score.n_early must be at least 1".into());
        }
        for &r in std::iter::once(&self.ratio).chain(&self.ratios).chain([&self.r0]) {
            if !(0.0..1.0).contains(&r) {
                return bad(format!("pruning ratio {r} outside [0, 1)"));
            }
        }
        if let Some(c) = self.cutoff {
            if !(0.0..1.0).contains(&c) {
                return bad(format!("selection.cutoff {c} outside [0, 1)"));
            }
        }
        if self.concentration <= 0.0 {
            return bad("selection.C must be positive".into());
        }
        if self.c_d < 1.0 || self.cd_grid.iter().any(|&c| c < 1.0) {
            return bad("c_D values must be at least 1".into());
        }
        if !(self.mu_fraction > 0.0 && self.mu_fraction <= 1.0) {
            return bad(format!("selection.q {} outside (0, 1]", self.mu_fraction));
        }
        if !(self.split_fraction > 0.0 && self.split_fraction <= 0.5) {
            return bad(format!("tuning.split_fraction {} outside (0, 0.5]", self.split_fraction));
        }
        if let Some(&t) = self.t_grid.iter().find(|&&t| t < 2 || t > self.trainer.epochs) {
            return bad(format!("tuning.T_grid entry {t} outside [2, trainer.epochs]"));
        }
        if self.gamma_grid.iter().any(|&g| !(g > 0.0 && g <= 1.0)) {
            return bad("tuning.gamma_grid entries must lie in (0, 1]".into());
        }
        if self.strategies.is_empty() || self.ratios.is_empty() || self.seeds.is_empty() || self.labelers.is_empty() {
            return bad("compare lists must be non-empty".into());
        }
        if self.tuning_seeds.is_empty() {
            return bad("tuning.seeds must be non-empty".into());
        }
        Ok(())
    }

    /// Cutoff at ratio `r` before any tuning.
    pub fn cutoff_for(&self, r: f64) -> f64 {
        self.cutoff.map(|c| c.min(r)).unwrap_or_else(|| lookup_cutoff(&self.cutoff_table, r))
    }

    /// Every key with its effective value; parses back to the same config.
    pub fn to_text(&self) -> String {
        let t = &self.task;
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("seed", self.seed.to_string());
        put("task.preset", self.preset.to_string());
        put("task.n_classes", t.n_classes.to_string());
        put("task.dim", t.dim.to_string());
        put("task.n_train", t.n_train.to_string());
        put("task.n_validation_per_class", t.n_validation_per_class.to_string());
        put("task.n_test_per_class", t.n_test_per_class.to_string());
        put("task.radius", t.radius.to_string());
        put("task.min_separation", t.min_separation.to_string());
        put("task.noise_std", t.noise_std.to_string());
        put("task.imbalance_factor", t.imbalance_factor.to_string());
        put("task.corruption_fraction", t.corruption_fraction.to_string());
        put("task.corruption_noise", t.corruption_noise.to_string());
        put("trainer.epochs", self.trainer.epochs.to_string());
        put("trainer.learning_rate", self.trainer.learning_rate.to_string());
        put("trainer.batch_size", self.trainer.batch_size.to_string());
        put("trainer.l2", self.trainer.l2.to_string());
        put("budget.fraction", self.budget_fraction.to_string());
        put("label.method", self.labeler.name().into());
        put("label.threshold", self.threshold.to_string());
        put("label.rounds", self.rounds.to_string());
        put("score.metric", self.metric.to_string());
        put("score.T", self.score_epochs.to_string());
        put("score.J", self.window.to_string());
        put("score.gamma", self.gamma.to_string());
        put("score.n_early", self.n_early.to_string());
        put("selection.method", self.selector.to_string());
        put("selection.ratio", self.ratio.to_string());
        put("selection.cutoff", self.cutoff.map(|c| c.to_string()).unwrap_or_else(|| "table".into()));
        put(
            "selection.cutoff_table",
            self.cutoff_table.iter().map(|(r, c)| format!("{r}:{c}")).collect::<Vec<_>>().join(","),
        );
        put("selection.C", self.concentration.to_string());
        put("selection.c_D", self.c_d.to_string());
        put("selection.q", self.mu_fraction.to_string());
        put("tuning.enabled", self.tuning_enabled.to_string());
        put("tuning.split_fraction", self.split_fraction.to_string());
        put("tuning.r0", self.r0.to_string());
        put("tuning.T_grid", join(&self.t_grid));
        put("tuning.cD_grid", join(&self.cd_grid));
        put("tuning.gamma_grid", join(&self.gamma_grid));
        put("tuning.seeds", join(&self.tuning_seeds));
        put("compare.methods", self.strategies.iter().map(Strategy::name).collect::<Vec<_>>().join(","));
        put("compare.ratios", join(&self.ratios));
        put("compare.seeds", join(&self.seeds));
        put("compare.labelers", self.labelers.iter().map(|l| l.name()).collect::<Vec<_>>().join(","));
        put("output.plots", self.plots.to_string());
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = PipelineConfig::from_text("# nothing\n\n").unwrap();
        assert_eq!(cfg, PipelineConfig::default());
        assert_eq!(cfg.concentration, 16.0);
        assert_eq!(cfg.window, 10);
        assert_eq!(cfg.split_fraction, 0.1);
        assert_eq!(cfg.budget_fraction, 0.1);
        assert_eq!((cfg.score_epochs, cfg.c_d), (30, 4.0));
    }

    #[test]
    fn text_round_trip() {
        let mut cfg = PipelineConfig::default();
        cfg.set("task.preset", "corrupted").unwrap();
        cfg.set("selection.cutoff", "0.25").unwrap();
        cfg.set("compare.methods", "dual_beta,forgetting+top_k").unwrap();
        let back = PipelineConfig::from_text(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn preset_applies_before_task_keys() {
        let cfg = PipelineConfig::from_text("task.dim = 8\ntask.preset = long_tailed\n").unwrap();
        assert_eq!(cfg.task.dim, 8);
        assert_eq!(cfg.task.imbalance_factor, 0.1);
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        for text in [
            "nope = 1",
            "selection.ratio = 1.0",
            "score.T = 40",
            "budget.fraction = 0",
            "selection.c_D = 0.5",
            "seed = -1",
            "tuning.T_grid = ",
            "score.gamma = 0",
        ] {
            let err = PipelineConfig::from_text(text).unwrap_err();
            assert!(matches!(err, Error::Config(_)), "{text}: {err}");
        }
    }

    #[test]
    fn strategy_names() {
        for s in ["dual_beta", "aum_cutoff", "random", "forgetting+top_k", "el2n+bottom_k", "aum+beta"] {
            let st: Strategy = s.parse().unwrap();
            assert_eq!(st.name(), s);
        }
        assert!("dual".parse::<Strategy>().is_err());
    }

    #[test]
    fn cutoff_table_lookup() {
        let cfg = PipelineConfig::default();
        assert_eq!(cfg.cutoff_for(0.1), 0.0);
        assert_eq!(cfg.cutoff_for(0.3), 0.1);
        assert_eq!(cfg.cutoff_for(0.85), 0.6);
        assert_eq!(cfg.cutoff_for(0.9), 0.7);
    }

    #[test]
    fn kv_rejects_duplicates() {
        assert!(parse_kv("a = 1\na = 2").is_err());
        assert!(parse_kv("novalue").is_err());
        assert_eq!(parse_kv("a=1 # c").unwrap()["a"], "1");
    }
}
