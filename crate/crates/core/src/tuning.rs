//! Hyperparameter search against a held-out slice of the pseudo-labeled pool.
//!
//! The pool is split into a training part and a validation part. Candidate
//! coresets are drawn from the training part, a fresh model is fit on each
//! and scored by its agreement with the pool labels of the validation part.
//! Ground truth is never consulted.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::index;
use rayon::prelude::*;

use crate::dynamics::{LabelPool, TrajectoryLog};
use crate::error::{dimension, domain, Error, Result};
use crate::rng::rng;
use crate::scoring::{self, ScoreTable, DEFAULT_WINDOW};
use crate::selection::{self, SelectionMethod, DEFAULT_CONCENTRATION, DEFAULT_MU_FRACTION};
use crate::synth::{self, SyntheticTask, ToyTrainerConfig};

pub const DEFAULT_SPLIT_FRACTION: f64 = 0.1;
/// Pruning ratio at which the DUAL epoch count is fixed.
pub const DEFAULT_R0: f64 = 0.3;

#[derive(Clone, Debug, PartialEq)]
pub struct SearchSpec {
    pub method: SelectionMethod,
    pub cutoff_grid: Vec<f64>,
    pub t_grid: Vec<usize>,
    pub cd_grid: Vec<f64>,
    pub gamma_grid: Vec<f64>,
    pub split_fraction: f64,
    /// Trainer seeds; validation accuracy is averaged over them.
    pub seeds: Vec<u64>,
}

impl Default for SearchSpec {
    fn default() -> Self {
        SearchSpec {
            method: SelectionMethod::Beta,
            cutoff_grid: Vec::new(),
            t_grid: vec![30],
            cd_grid: vec![4.0],
            gamma_grid: vec![1.0],
            split_fraction: DEFAULT_SPLIT_FRACTION,
            seeds: vec![0],
        }
    }
}

impl SearchSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.split_fraction > 0.0 && self.split_fraction <= 0.5) {
            return Err(domain(format!("split fraction {} outside (0, 0.5]", self.split_fraction)));
        }
        if self.seeds.is_empty() {
            return Err(domain("no tuning seeds"));
        }
        match self.method {
            SelectionMethod::Beta => {
                if self.t_grid.is_empty() || self.cd_grid.is_empty() || self.gamma_grid.is_empty() {
                    return Err(domain("empty DUAL search grid"));
                }
            }
            SelectionMethod::DoubleEnd if self.cutoff_grid.is_empty() => {
                return Err(domain("empty cutoff grid"));
            }
            _ => {}
        }
        Ok(())
    }
}

/// `0, 0.1, ..., r` (inclusive up to rounding).
pub fn cutoff_grid(r: f64) -> Vec<f64> {
    let steps = (r * 10.0 + 1e-9).floor() as usize;
    (0..=steps).map(|k| k as f64 / 10.0).collect()
}

/// Positions in the training split, divided into a training part and a
/// validation part. Both are ascending.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PoolSplit {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

/// Random disjoint split; the validation part gets `round(n * fraction)`
/// examples.
pub fn split_pool(n: usize, fraction: f64, seed: u64) -> Result<PoolSplit> {
    if !(fraction > 0.0 && fraction <= 0.5) {
        return Err(domain(format!("split fraction {fraction} outside (0, 0.5]")));
    }
    let n_val = (n as f64 * fraction).round() as usize;
    if n_val == 0 || n_val == n {
        return Err(domain(format!("split of {n} examples at fraction {fraction} leaves a part empty")));
    }
    let mut is_val = vec![false; n];
    for i in index::sample(&mut rng(seed), n, n_val) {
        is_val[i] = true;
    }
    let (validation, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| is_val[i]);
    Ok(PoolSplit { train, validation })
}

/// Scores a candidate coreset. Indices are local to the training part.
pub trait ValidationHarness: Sync {
    fn evaluate(&self, coreset: &[usize]) -> Result<f64>;
}

/// Harness backed by the toy trainer: fit on the coreset with each seed,
/// return mean accuracy (percent) against the validation part's pool labels.
pub struct PoolHarness<'a> {
    task: &'a SyntheticTask,
    pool: &'a LabelPool,
    split: &'a PoolSplit,
    trainer: ToyTrainerConfig,
    seeds: Vec<u64>,
    val_labels: Vec<usize>,
}

impl<'a> PoolHarness<'a> {
    pub fn new(
        task: &'a SyntheticTask,
        pool: &'a LabelPool,
        split: &'a PoolSplit,
        trainer: ToyTrainerConfig,
        seeds: Vec<u64>,
    ) -> Result<Self> {
        if pool.len() != task.n_train() {
            return Err(dimension(format!("pool has {} labels, task has {} training examples", pool.len(), task.n_train())));
        }
        if seeds.is_empty() {
            return Err(domain("no harness seeds"));
        }
        if split.train.iter().chain(&split.validation).any(|&i| i >= pool.len()) {
            return Err(domain("pool split index out of range"));
        }
        let val_labels = split.validation.iter().map(|&i| pool.labels()[i]).collect();
        Ok(PoolHarness { task, pool, split, trainer, seeds, val_labels })
    }
}

impl ValidationHarness for PoolHarness<'_> {
    fn evaluate(&self, coreset: &[usize]) -> Result<f64> {
        if coreset.is_empty() {
            return Err(domain("empty candidate coreset"));
        }
        let mut global = Vec::with_capacity(coreset.len());
        for &j in coreset {
            global.push(*self.split.train.get(j).ok_or_else(|| domain(format!("coreset index {j} outside the training part")))?);
        }
        let mut total = 0.0;
        for &seed in &self.seeds {
            let model = synth::train_model(self.task, self.pool, &self.trainer.with_seed(seed), Some(&global))?;
            let pred: Vec<usize> = self
                .split
                .validation
                .iter()
                .map(|&i| model.predict(self.task.row(self.task.train[i])))
                .collect();
            let hits = pred.iter().zip(&self.val_labels).filter(|(p, y)| p == y).count();
            total += 100.0 * hits as f64 / pred.len() as f64;
        }
        Ok(total / self.seeds.len() as f64)
    }
}

/// One evaluated candidate.
#[derive(Clone, Debug, PartialEq)]
pub struct Trial {
    pub stage: &'static str,
    pub epochs: Option<usize>,
    pub c_d: Option<f64>,
    pub gamma: Option<f64>,
    pub cutoff: Option<f64>,
    pub val_acc: f64,
    pub selected: bool,
}

impl Trial {
    fn new(stage: &'static str, val_acc: f64) -> Self {
        Trial { stage, epochs: None, c_d: None, gamma: None, cutoff: None, val_acc, selected: false }
    }
}

/// Index of the best accuracy; among equal accuracies the smallest key wins.
fn pick_best(keys: &[f64], accs: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..keys.len() {
        let better = accs[i] > accs[best] || (accs[i] == accs[best] && keys[i] < keys[best]);
        if better {
            best = i;
        }
    }
    best
}

fn mark(trials: &mut [Trial], start: usize, best: usize) {
    trials[start + best].selected = true;
}

#[derive(Clone, Debug, PartialEq)]
pub struct CutoffOutcome {
    pub cutoff: f64,
    pub trials: Vec<Trial>,
}

/// Grid search over the double-end cutoff ratio. `table` covers the
/// training part only.
pub fn tune_cutoff(table: &ScoreTable, r: f64, grid: &[f64], harness: &dyn ValidationHarness) -> Result<CutoffOutcome> {
    if grid.is_empty() {
        return Err(domain("empty cutoff grid"));
    }
    if let Some(bad) = grid.iter().find(|&&c| !(0.0..=r + 1e-12).contains(&c)) {
        return Err(domain(format!("cutoff {bad} outside [0, {r}]")));
    }
    let accs = grid
        .par_iter()
        .map(|&c| {
            let plan = selection::double_end_select(table, r, c.min(r))?;
            harness.evaluate(&plan.selected)
        })
        .collect::<Result<Vec<f64>>>()?;
    let best = pick_best(grid, &accs);
    let mut trials: Vec<Trial> = grid
        .iter()
        .zip(&accs)
        .map(|(&c, &a)| Trial { cutoff: Some(c), ..Trial::new("cutoff", a) })
        .collect();
    mark(&mut trials, 0, best);
    Ok(CutoffOutcome { cutoff: grid[best], trials })
}

/// Fixed knobs of a DUAL + Beta search.
#[derive(Clone, Debug, PartialEq)]
pub struct DualSearch {
    pub r0: f64,
    /// Ratio for the `c_D` and `gamma` stages; `r0` when unset.
    pub r_target: Option<f64>,
    pub t_grid: Vec<usize>,
    pub cd_grid: Vec<f64>,
    pub gamma_grid: Vec<f64>,
    /// Sliding-window length; clamped to the candidate epoch count.
    pub window: usize,
    pub concentration: f64,
    pub mu_fraction: f64,
    pub seed: u64,
}

impl Default for DualSearch {
    fn default() -> Self {
        DualSearch {
            r0: DEFAULT_R0,
            r_target: None,
            t_grid: vec![30],
            cd_grid: vec![4.0],
            gamma_grid: vec![1.0],
            window: DEFAULT_WINDOW,
            concentration: DEFAULT_CONCENTRATION,
            mu_fraction: DEFAULT_MU_FRACTION,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DualOutcome {
    pub epochs: usize,
    pub c_d: f64,
    pub gamma: f64,
    pub trials: Vec<Trial>,
}

/// DUAL table over the first `epochs` logged epochs.
pub fn dual_table(log: &TrajectoryLog, pool: &LabelPool, epochs: usize, window: usize, gamma: f64) -> Result<ScoreTable> {
    let sliced = log.slice_epochs(1, epochs)?;
    scoring::dual(&sliced, pool, window.min(epochs), gamma)
}

/// Staged search: epoch count first at `r0`, then `c_D`, then (only when
/// the grid has several entries) `gamma`, the last two at `r_target`. `log` and `pool` cover the
/// training part only; each stage holds the others at their first grid
/// entry or the value already fixed.
pub fn tune_dual(
    log: &TrajectoryLog,
    pool: &LabelPool,
    search: &DualSearch,
    harness: &dyn ValidationHarness,
) -> Result<DualOutcome> {
    if search.t_grid.is_empty() || search.cd_grid.is_empty() || search.gamma_grid.is_empty() {
        return Err(domain("empty DUAL search grid"));
    }
    if let Some(&t) = search.t_grid.iter().find(|&&t| t < 2 || t > log.n_epochs()) {
        return Err(domain(format!("epoch candidate {t} outside [2, {}]", log.n_epochs())));
    }
    let eval = |r: f64, t: usize, c_d: f64, gamma: f64| -> Result<f64> {
        let table = dual_table(log, pool, t, search.window, gamma)?;
        let plan = selection::beta_select(&table, r, search.concentration, c_d, search.mu_fraction, search.seed)?;
        harness.evaluate(&plan.selected)
    };
    let r1 = search.r_target.unwrap_or(search.r0);
    let mut trials = Vec::new();
    let gamma0 = search.gamma_grid[0];
    let cd0 = search.cd_grid[0];

    let accs = search.t_grid.par_iter().map(|&t| eval(search.r0, t, cd0, gamma0)).collect::<Result<Vec<f64>>>()?;
    let keys: Vec<f64> = search.t_grid.iter().map(|&t| t as f64).collect();
    let best = pick_best(&keys, &accs);
    let epochs = search.t_grid[best];
    let start = trials.len();
    trials.extend(search.t_grid.iter().zip(&accs).map(|(&t, &a)| Trial {
        epochs: Some(t),
        c_d: Some(cd0),
        gamma: Some(gamma0),
        ..Trial::new("epochs", a)
    }));
    mark(&mut trials, start, best);

    let accs = search.cd_grid.par_iter().map(|&c| eval(r1, epochs, c, gamma0)).collect::<Result<Vec<f64>>>()?;
    let best = pick_best(&search.cd_grid, &accs);
    let c_d = search.cd_grid[best];
    let start = trials.len();
    trials.extend(search.cd_grid.iter().zip(&accs).map(|(&c, &a)| Trial {
        epochs: Some(epochs),
        c_d: Some(c),
        gamma: Some(gamma0),
        ..Trial::new("c_d", a)
    }));
    mark(&mut trials, start, best);

    let mut gamma = gamma0;
    if search.gamma_grid.len() > 1 {
        let accs = search.gamma_grid.par_iter().map(|&g| eval(r1, epochs, c_d, g)).collect::<Result<Vec<f64>>>()?;
        let best = pick_best(&search.gamma_grid, &accs);
        gamma = search.gamma_grid[best];
        let start = trials.len();
        trials.extend(search.gamma_grid.iter().zip(&accs).map(|(&g, &a)| Trial {
            epochs: Some(epochs),
            c_d: Some(c_d),
            gamma: Some(g),
            ..Trial::new("gamma", a)
        }));
        mark(&mut trials, start, best);
    }
    Ok(DualOutcome { epochs, c_d, gamma, trials })
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn trials_to_csv(trials: &[Trial]) -> String {
    let mut s = String::from("stage,epochs,c_d,gamma,cutoff,val_acc,selected\n");
    for t in trials {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            t.stage,
            opt(t.epochs),
            opt(t.c_d),
            opt(t.gamma),
            opt(t.cutoff),
            t.val_acc,
            u8::from(t.selected)
        );
    }
    s
}

pub fn write_trials(trials: &[Trial], path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, trials_to_csv(trials))?;
    Ok(())
}

/// Parses what [`trials_to_csv`] writes.
pub fn trials_from_csv(text: &str) -> Result<Vec<Trial>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != 7 {
            return Err(Error::Format(format!("search row has {} fields", rec.len())));
        }
        let stage = match &rec[0] {
            "epochs" => "epochs",
            "c_d" => "c_d",
            "gamma" => "gamma",
            "cutoff" => "cutoff",
            other => return Err(Error::Format(format!("unknown search stage {other:?}"))),
        };
        fn field<T: std::str::FromStr>(s: &str) -> Result<Option<T>> {
            if s.is_empty() {
                return Ok(None);
            }
            s.parse().map(Some).map_err(|_| Error::Format(format!("bad search field {s:?}")))
        }
        out.push(Trial {
            stage,
            epochs: field(&rec[1])?,
            c_d: field(&rec[2])?,
            gamma: field(&rec[3])?,
            cutoff: field(&rec[4])?,
            val_acc: field(&rec[5])?.ok_or_else(|| Error::Format("missing val_acc".into()))?,
            selected: field::<u8>(&rec[6])? == Some(1),
        });
    }
    Ok(out)
}
