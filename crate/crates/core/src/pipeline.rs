//! End-to-end runs: resumable stage commands over an output directory and
//! the multi-seed comparison report.
//!
//! Stage files inside the output directory:
//!
//! | stage      | reads                                   | writes                                  |
//! |------------|-----------------------------------------|-----------------------------------------|
//! | `gen`      | config                                  | `task/`, `config.txt`                   |
//! | `label`    | `task/`                                 | `pool.csv`, `label_quality.txt`, ...    |
//! | `trainlog` | `task/`, `pool.csv`                     | `dynamics.trj`                          |
//! | `tune`     | `task/`, `pool.csv`, `dynamics.trj`     | `search.csv`, `tuned.txt`               |
//! | `score`    | `dynamics.trj`, `pool.csv`, `tuned.txt`?| `scores.csv`                            |
//! | `select`   | `scores.csv`, `tuned.txt`?              | `plan.txt`                              |
//! | `eval`     | `task/`, `pool.csv`, `plan.txt`         | `eval.txt`                              |
//!
//! Every stage derives its RNG seed from the master seed and the stage name,
//! so stages can be rerun independently with identical results.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::config::{parse_kv, Labeler, PipelineConfig, Strategy};
use crate::dynamics::{read_log, write_log, LabelPool, TrajectoryLog};
use crate::error::{Error, Result};
use crate::labeling::{self, AccMode, LabelBudget, QualityReport};
use crate::rng::derive_seed;
use crate::scoring::{self, Metric, ScoreSpec, ScoreTable};
use crate::selection::{self, SelectionMethod, SelectionPlan, SelectorConfig};
use crate::synth::{self, Split, SyntheticTask};
use crate::tuning::{self, DualSearch, PoolHarness, Trial};

/// Environment variable naming the default output directory.
pub const ENV_OUT: &str = "SEMIPRUNE_OUT";
pub const DEFAULT_OUT: &str = "semiprune-out";

/// Seed of `stage` in run `run`: SHA-256 of the master seed and
/// `"{stage}/{run}"`, see [`derive_seed`].
pub fn stage_seed(master: u64, stage: &str, run: u64) -> u64 {
    derive_seed(master, &format!("{stage}/{run}"))
}

/// Output directory: explicit flag, then `SEMIPRUNE_OUT`, then a default.
pub fn resolve_out(flag: Option<&Path>) -> PathBuf {
    match flag {
        Some(p) => p.to_path_buf(),
        None => std::env::var_os(ENV_OUT).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT)),
    }
}

/// Task, budget, pseudo-labeled pool and the logged full-pool run of one seed.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub run: u64,
    pub task: SyntheticTask,
    pub budget: LabelBudget,
    pub pool: LabelPool,
    pub log: TrajectoryLog,
}

pub fn generate_task(cfg: &PipelineConfig, run: u64) -> Result<SyntheticTask> {
    synth::generate(&cfg.task, stage_seed(cfg.seed, "gen", run))
}

pub fn draw_budget(cfg: &PipelineConfig, task: &SyntheticTask, run: u64) -> Result<LabelBudget> {
    labeling::draw_budget(task.n_train(), cfg.budget_fraction, stage_seed(cfg.seed, "budget", run))
}

pub fn build_pool(
    cfg: &PipelineConfig,
    task: &SyntheticTask,
    budget: &LabelBudget,
    labeler: Labeler,
    run: u64,
) -> Result<LabelPool> {
    let seed = stage_seed(cfg.seed, "label", run);
    match labeler {
        Labeler::SelfTrain => labeling::self_train(task, budget, cfg.threshold, cfg.rounds, &cfg.trainer.with_seed(seed)),
        Labeler::Cluster => labeling::cluster_label_task(task, budget, seed),
    }
}

pub fn train_log(cfg: &PipelineConfig, task: &SyntheticTask, pool: &LabelPool, run: u64) -> Result<TrajectoryLog> {
    let log = synth::train_toy(task, pool, &cfg.trainer.with_seed(stage_seed(cfg.seed, "trainlog", run)), None)?;
    log.with_pool(pool)
}

pub fn prepare(cfg: &PipelineConfig, run: u64) -> Result<Prepared> {
    let task = generate_task(cfg, run)?;
    let budget = draw_budget(cfg, &task, run)?;
    let pool = build_pool(cfg, &task, &budget, cfg.labeler, run)?;
    let log = train_log(cfg, &task, &pool, run)?;
    Ok(Prepared { run, task, budget, pool, log })
}

/// Selection hyperparameters in effect for one coreset.
#[derive(Clone, Debug, PartialEq)]
pub struct Tuned {
    pub metric: Metric,
    pub selector: SelectionMethod,
    pub ratio: f64,
    pub epochs: usize,
    pub c_d: f64,
    pub gamma: f64,
    pub cutoff: f64,
    pub trials: Vec<Trial>,
}

impl Tuned {
    /// Configured values without any search.
    pub fn defaults(cfg: &PipelineConfig, strategy: Strategy, r: f64) -> Self {
        Tuned {
            metric: strategy.metric,
            selector: strategy.selector,
            ratio: r,
            epochs: cfg.score_epochs,
            c_d: cfg.c_d,
            gamma: cfg.gamma,
            cutoff: cfg.cutoff_for(r),
            trials: Vec::new(),
        }
    }

    pub fn to_text(&self) -> String {
        format!(
            "metric = {}\nselector = {}\nratio = {}\nepochs = {}\nc_D = {}\ngamma = {}\ncutoff = {}\n",
            self.metric, self.selector, self.ratio, self.epochs, self.c_d, self.gamma, self.cutoff
        )
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let kv = parse_kv(text)?;
        let get = |k: &str| kv.get(k).ok_or_else(|| Error::Format(format!("tuned file lacks {k}")));
        let num = |k: &str| -> Result<f64> { get(k)?.parse().map_err(|_| Error::Format(format!("tuned {k} is not a number"))) };
        Ok(Tuned {
            metric: get("metric")?.parse()?,
            selector: get("selector")?.parse()?,
            ratio: num("ratio")?,
            epochs: get("epochs")?.parse().map_err(|_| Error::Format("tuned epochs is not a count".into()))?,
            c_d: num("c_D")?,
            gamma: num("gamma")?,
            cutoff: num("cutoff")?,
            trials: Vec::new(),
        })
    }
}

/// Runs the validation search that applies to `strategy`: staged DUAL
/// search for DUAL + Beta, cutoff search for double-end. Other strategies
/// return the configured values.
pub fn tune(
    cfg: &PipelineConfig,
    task: &SyntheticTask,
    pool: &LabelPool,
    log: &TrajectoryLog,
    strategy: Strategy,
    r: f64,
    run: u64,
) -> Result<Tuned> {
    let mut out = Tuned::defaults(cfg, strategy, r);
    let searchable = matches!(
        (strategy.metric, strategy.selector),
        (Metric::Dual, SelectionMethod::Beta) | (_, SelectionMethod::DoubleEnd)
    );
    if !cfg.tuning_enabled || !searchable {
        return Ok(out);
    }
    let split = tuning::split_pool(pool.len(), cfg.split_fraction, stage_seed(cfg.seed, "tune-split", run))?;
    let seeds: Vec<u64> = cfg
        .tuning_seeds
        .iter()
        .map(|s| stage_seed(cfg.seed, &format!("tune-fit-{s}"), run))
        .collect();
    let harness = PoolHarness::new(task, pool, &split, cfg.trainer, seeds)?;
    let part_log = log.select_examples(&split.train)?;
    let part_pool = pool.subset(&split.train)?;
    if strategy.selector == SelectionMethod::Beta {
        let search = DualSearch {
            r0: cfg.r0,
            r_target: Some(r),
            t_grid: cfg.t_grid.clone(),
            cd_grid: cfg.cd_grid.clone(),
            gamma_grid: cfg.gamma_grid.clone(),
            window: cfg.window,
            concentration: cfg.concentration,
            mu_fraction: cfg.mu_fraction,
            seed: stage_seed(cfg.seed, "tune-select", run),
        };
        let found = tuning::tune_dual(&part_log, &part_pool, &search, &harness)?;
        out.epochs = found.epochs;
        out.c_d = found.c_d;
        out.gamma = found.gamma;
        out.trials = found.trials;
    } else {
        let table = score_table(cfg, &part_log, &part_pool, strategy.metric, out.epochs, out.gamma)?;
        let found = tuning::tune_cutoff(&table, r, &tuning::cutoff_grid(r), &harness)?;
        out.cutoff = found.cutoff;
        out.trials = found.trials;
    }
    Ok(out)
}

/// Scores over the first `epochs` logged epochs; the DUAL window is
/// clamped to the epoch count.
pub fn score_table(
    cfg: &PipelineConfig,
    log: &TrajectoryLog,
    pool: &LabelPool,
    metric: Metric,
    epochs: usize,
    gamma: f64,
) -> Result<ScoreTable> {
    let sliced = log.slice_epochs(1, epochs)?;
    let spec = ScoreSpec { metric, window: cfg.window.min(epochs), gamma, n_early: cfg.n_early };
    scoring::compute(&sliced, pool, &spec)
}

pub fn select_with(cfg: &PipelineConfig, table: &ScoreTable, tuned: &Tuned, seed: u64) -> Result<SelectionPlan> {
    let sc = SelectorConfig {
        method: tuned.selector,
        cutoff_ratio: tuned.cutoff,
        concentration: cfg.concentration,
        c_d: tuned.c_d,
        mu_fraction: cfg.mu_fraction,
    };
    selection::select(table, tuned.ratio, &sc, seed)
}

/// Tunes (when enabled), scores and selects a coreset of the full pool.
pub fn choose_coreset(cfg: &PipelineConfig, prep: &Prepared, strategy: Strategy, r: f64) -> Result<(SelectionPlan, Tuned)> {
    let seed = stage_seed(cfg.seed, "select", prep.run);
    if strategy.selector == SelectionMethod::Random {
        let plan = selection::random_select(prep.pool.len(), r, seed)?;
        return Ok((plan, Tuned::defaults(cfg, strategy, r)));
    }
    let tuned = tune(cfg, &prep.task, &prep.pool, &prep.log, strategy, r, prep.run)?;
    let table = score_table(cfg, &prep.log, &prep.pool, tuned.metric, tuned.epochs, tuned.gamma)?;
    let plan = select_with(cfg, &table, &tuned, seed)?;
    Ok((plan, tuned))
}

/// Retrains from scratch on the coreset and scores the balanced test split.
pub fn evaluate_coreset(cfg: &PipelineConfig, prep: &Prepared, selected: &[usize]) -> Result<(f64, f64)> {
    let model = synth::train_model(
        &prep.task,
        &prep.pool,
        &cfg.trainer.with_seed(stage_seed(cfg.seed, "eval", prep.run)),
        Some(selected),
    )?;
    synth::evaluate(&prep.task, &model, Split::Test)
}

// ---------------------------------------------------------------------------
// Stage commands

fn task_dir(out: &Path) -> PathBuf {
    out.join("task")
}

fn need(path: PathBuf) -> Result<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("missing stage input {}", path.display()),
        )))
    }
}

fn load_pool(out: &Path, n_classes: usize) -> Result<LabelPool> {
    labeling::read_pool_csv(need(out.join("pool.csv"))?, n_classes)
}

/// The tuned file when it was produced for the configured metric, selector
/// and ratio; configured values otherwise.
fn load_tuned(cfg: &PipelineConfig, out: &Path) -> Result<Tuned> {
    let defaults = Tuned::defaults(cfg, Strategy { metric: cfg.metric, selector: cfg.selector }, cfg.ratio);
    let path = out.join("tuned.txt");
    if !path.exists() {
        return Ok(defaults);
    }
    let t = Tuned::from_text(&fs::read_to_string(path)?)?;
    if t.metric == cfg.metric && t.selector == cfg.selector && t.ratio == cfg.ratio {
        Ok(t)
    } else {
        Ok(defaults)
    }
}

pub fn cmd_gen(cfg: &PipelineConfig, out: &Path) -> Result<String> {
    fs::create_dir_all(out)?;
    let task = generate_task(cfg, 0)?;
    synth::save_task(&task, task_dir(out))?;
    fs::write(out.join("config.txt"), cfg.to_text())?;
    Ok(format!(
        "gen: {} classes, dim {}, {} train / {} validation / {} test, {} corrupted",
        task.n_classes(),
        task.dim(),
        task.train.len(),
        task.validation.len(),
        task.test.len(),
        task.corrupted.iter().filter(|&&c| c).count()
    ))
}

pub fn cmd_label(cfg: &PipelineConfig, out: &Path) -> Result<String> {
    let task = synth::load_task(need(task_dir(out))?)?;
    let budget = draw_budget(cfg, &task, 0)?;
    let pool = build_pool(cfg, &task, &budget, cfg.labeler, 0)?;
    labeling::write_pool_csv(&pool, out.join("pool.csv"))?;
    let report = labeling::quality(&pool, &task.train_truth(), AccMode::Direct)?;
    labeling::write_report(&report, out, "label_quality")?;
    if cfg.plots {
        let bars: Vec<(String, f64)> =
            report.class_histogram.iter().enumerate().map(|(c, &n)| (c.to_string(), n as f64)).collect();
        fs::write(out.join("label_histogram.svg"), svg_bars("pseudo-label class distribution", &bars))?;
    }
    Ok(format!(
        "label: {} with {} labeled, acc {:.2} balanced {:.2} nmi {:.4} ari {:.4}",
        cfg.labeler.name(),
        budget.labeled_indices.len(),
        report.acc,
        report.balanced_acc,
        report.nmi,
        report.ari
    ))
}

pub fn cmd_trainlog(cfg: &PipelineConfig, out: &Path) -> Result<String> {
    let task = synth::load_task(need(task_dir(out))?)?;
    let pool = load_pool(out, task.n_classes())?;
    let log = train_log(cfg, &task, &pool, 0)?;
    write_log(&log, out.join("dynamics.trj"))?;
    let (acc, _) = synth::evaluate_log(&task, &log)?;
    Ok(format!("trainlog: {} examples x {} epochs, final test acc {acc:.2}", log.n_examples(), log.n_epochs()))
}

pub fn cmd_tune(cfg: &PipelineConfig, out: &Path) -> Result<String> {
    let task = synth::load_task(need(task_dir(out))?)?;
    let pool = load_pool(out, task.n_classes())?;
    let log = read_log(need(out.join("dynamics.trj"))?)?;
    let strategy = Strategy { metric: cfg.metric, selector: cfg.selector };
    let tuned = tune(cfg, &task, &pool, &log, strategy, cfg.ratio, 0)?;
    tuning::write_trials(&tuned.trials, out.join("search.csv"))?;
    fs::write(out.join("tuned.txt"), tuned.to_text())?;
    Ok(format!(
        "tune: {} at r={} -> T={} c_D={} gamma={} cutoff={} ({} candidates)",
        strategy.name(),
        cfg.ratio,
        tuned.epochs,
        tuned.c_d,
        tuned.gamma,
        tuned.cutoff,
        tuned.trials.len()
    ))
}

pub fn cmd_score(cfg: &PipelineConfig, out: &Path) -> Result<String> {
    let log = read_log(need(out.join("dynamics.trj"))?)?;
    let pool = load_pool(out, log.n_classes())?;
    let tuned = load_tuned(cfg, out)?;
    let epochs = tuned.epochs.min(log.n_epochs());
    let table = score_table(cfg, &log, &pool, cfg.metric, epochs, tuned.gamma)?;
    scoring::write_csv(&table, out.join("scores.csv"))?;
    if cfg.plots {
        fs::write(out.join("scores.svg"), svg_histogram(&format!("{} scores", cfg.metric), &table.scores, 30))?;
    }
    let (lo, hi) = table.scores.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &s| (a.min(s), b.max(s)));
    Ok(format!("score: {} over {epochs} epochs, {} examples, range [{lo:.4}, {hi:.4}]", cfg.metric, table.len()))
}

pub fn cmd_select(cfg: &PipelineConfig, out: &Path) -> Result<String> {
    let table = scoring::read_csv(need(out.join("scores.csv"))?)?;
    let tuned = load_tuned(cfg, out)?;
    let plan = select_with(cfg, &table, &tuned, stage_seed(cfg.seed, "select", 0))?;
    selection::write_plan(&plan, out.join("plan.txt"))?;
    Ok(format!(
        "select: {} at r={} keeps {} of {}",
        plan.method,
        plan.pruning_ratio,
        plan.selected.len(),
        plan.n_examples
    ))
}

pub fn cmd_eval(cfg: &PipelineConfig, out: &Path) -> Result<String> {
    let task = synth::load_task(need(task_dir(out))?)?;
    let pool = load_pool(out, task.n_classes())?;
    let plan = selection::read_plan(need(out.join("plan.txt"))?)?;
    if plan.n_examples != task.n_train() {
        return Err(Error::Dimension(format!("plan covers {} examples, task has {}", plan.n_examples, task.n_train())));
    }
    let model = synth::train_model(&task, &pool, &cfg.trainer.with_seed(stage_seed(cfg.seed, "eval", 0)), Some(&plan.selected))?;
    let (acc, bal) = synth::evaluate(&task, &model, Split::Test)?;
    fs::write(
        out.join("eval.txt"),
        format!("method = {}\nratio = {}\nacc = {acc}\nbalanced_acc = {bal}\n", plan.method, plan.pruning_ratio),
    )?;
    Ok(format!("eval: {} at r={} test acc {acc:.2} balanced {bal:.2}", plan.method, plan.pruning_ratio))
}

/// All stages in order.
pub fn cmd_run(cfg: &PipelineConfig, out: &Path) -> Result<Vec<String>> {
    let stages: [fn(&PipelineConfig, &Path) -> Result<String>; 7] =
        [cmd_gen, cmd_label, cmd_trainlog, cmd_tune, cmd_score, cmd_select, cmd_eval];
    stages.iter().map(|f| f(cfg, out)).collect()
}

// ---------------------------------------------------------------------------
// Comparison

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub method: String,
    pub ratio: f64,
    pub seed: u64,
    pub acc: f64,
    pub balanced_acc: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QualityRow {
    pub labeler: Labeler,
    pub seed: u64,
    pub report: QualityReport,
    pub truth_histogram: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompareReport {
    pub rows: Vec<ReportRow>,
    pub quality: Vec<QualityRow>,
    pub tuned: Vec<(String, f64, u64, Tuned)>,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl CompareReport {
    /// `method,ratio,seed,acc,balanced_acc`; after each (method, ratio)
    /// group come `mean` and `std` rows (sample standard deviation).
    pub fn to_csv(&self) -> String {
        let mut s = String::from("method,ratio,seed,acc,balanced_acc\n");
        let mut i = 0;
        while i < self.rows.len() {
            let (m, r) = (&self.rows[i].method, self.rows[i].ratio);
            let mut j = i;
            while j < self.rows.len() && &self.rows[j].method == m && self.rows[j].ratio == r {
                let row = &self.rows[j];
                let _ = writeln!(s, "{},{},{},{:.4},{:.4}", row.method, row.ratio, row.seed, row.acc, row.balanced_acc);
                j += 1;
            }
            let group = &self.rows[i..j];
            let (am, asd) = mean_std(&group.iter().map(|r| r.acc).collect::<Vec<_>>());
            let (bm, bsd) = mean_std(&group.iter().map(|r| r.balanced_acc).collect::<Vec<_>>());
            let _ = writeln!(s, "{m},{r},mean,{am:.4},{bm:.4}");
            let _ = writeln!(s, "{m},{r},std,{asd:.4},{bsd:.4}");
            i = j;
        }
        s
    }

    /// Pseudo-label quality per labeler and seed with mean/std rows.
    pub fn quality_csv(&self) -> String {
        let mut s = String::from("labeler,seed,acc,balanced_acc,nmi,ari\n");
        let mut labelers: Vec<Labeler> = Vec::new();
        for q in &self.quality {
            if !labelers.contains(&q.labeler) {
                labelers.push(q.labeler);
            }
        }
        for l in labelers {
            let rows: Vec<&QualityRow> = self.quality.iter().filter(|q| q.labeler == l).collect();
            for q in &rows {
                let r = &q.report;
                let _ = writeln!(s, "{},{},{:.4},{:.4},{:.6},{:.6}", l.name(), q.seed, r.acc, r.balanced_acc, r.nmi, r.ari);
            }
            let col = |f: fn(&QualityReport) -> f64| mean_std(&rows.iter().map(|q| f(&q.report)).collect::<Vec<_>>());
            let (a, b, c, d) = (col(|r| r.acc), col(|r| r.balanced_acc), col(|r| r.nmi), col(|r| r.ari));
            let _ = writeln!(s, "{},mean,{:.4},{:.4},{:.6},{:.6}", l.name(), a.0, b.0, c.0, d.0);
            let _ = writeln!(s, "{},std,{:.4},{:.4},{:.6},{:.6}", l.name(), a.1, b.1, c.1, d.1);
        }
        s
    }

    /// Per-class counts of pseudo-labels next to the true counts.
    pub fn histogram_csv(&self) -> String {
        let mut s = String::from("labeler,seed,class,pseudo_count,true_count\n");
        for q in &self.quality {
            for (c, (&p, &t)) in q.report.class_histogram.iter().zip(&q.truth_histogram).enumerate() {
                let _ = writeln!(s, "{},{},{c},{p},{t}", q.labeler.name(), q.seed);
            }
        }
        s
    }

    pub fn tuned_csv(&self) -> String {
        let mut s = String::from("method,ratio,seed,T,c_D,gamma,cutoff\n");
        for (m, r, seed, t) in &self.tuned {
            let _ = writeln!(s, "{m},{r},{seed},{},{},{},{}", t.epochs, t.c_d, t.gamma, t.cutoff);
        }
        s
    }
}

/// Parses the report back into rows; aggregate rows are skipped.
pub fn report_rows_from_csv(text: &str) -> Result<Vec<ReportRow>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != 5 {
            return Err(Error::Format(format!("report row has {} fields", rec.len())));
        }
        if &rec[2] == "mean" || &rec[2] == "std" {
            continue;
        }
        let num = |i: usize| -> Result<f64> { rec[i].parse().map_err(|_| Error::Format(format!("bad report field {:?}", &rec[i]))) };
        out.push(ReportRow {
            method: rec[0].to_string(),
            ratio: num(1)?,
            seed: rec[2].parse().map_err(|_| Error::Format(format!("bad report seed {:?}", &rec[2])))?,
            acc: num(3)?,
            balanced_acc: num(4)?,
        });
    }
    Ok(out)
}

struct SeedResult {
    rows: Vec<ReportRow>,
    quality: Vec<QualityRow>,
    tuned: Vec<(String, f64, u64, Tuned)>,
}

fn run_seed(cfg: &PipelineConfig, run: u64) -> Result<SeedResult> {
    let prep = prepare(cfg, run)?;
    let truth = prep.task.train_truth();
    let mut truth_hist = vec![0usize; prep.task.n_classes()];
    for &t in &truth {
        truth_hist[t] += 1;
    }
    let mut quality = Vec::new();
    for &l in &cfg.labelers {
        let pool = if l == cfg.labeler { prep.pool.clone() } else { build_pool(cfg, &prep.task, &prep.budget, l, run)? };
        quality.push(QualityRow {
            labeler: l,
            seed: run,
            report: labeling::quality(&pool, &truth, AccMode::Direct)?,
            truth_histogram: truth_hist.clone(),
        });
    }
    let cells: Vec<(Strategy, f64)> =
        cfg.strategies.iter().flat_map(|&s| cfg.ratios.iter().map(move |&r| (s, r))).collect();
    let results = cells
        .par_iter()
        .map(|&(s, r)| {
            let (plan, tuned) = choose_coreset(cfg, &prep, s, r)?;
            let (acc, balanced_acc) = evaluate_coreset(cfg, &prep, &plan.selected)?;
            Ok((ReportRow { method: s.name(), ratio: r, seed: run, acc, balanced_acc }, tuned))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    let mut tuned = Vec::new();
    for (row, t) in results {
        tuned.push((row.method.clone(), row.ratio, run, t));
        rows.push(row);
    }
    Ok(SeedResult { rows, quality, tuned })
}

/// Runs every (method, ratio, seed) cell and assembles the report in
/// config order. Seeds run in parallel; the result does not depend on
/// scheduling.
pub fn compare(cfg: &PipelineConfig) -> Result<CompareReport> {
    cfg.validate()?;
    let per_seed = cfg.seeds.par_iter().map(|&s| run_seed(cfg, s)).collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for s in &cfg.strategies {
        for &r in &cfg.ratios {
            for res in &per_seed {
                rows.extend(res.rows.iter().filter(|row| row.method == s.name() && row.ratio == r).cloned());
            }
        }
    }
    let quality = per_seed.iter().flat_map(|r| r.quality.iter().cloned()).collect();
    let tuned = per_seed.into_iter().flat_map(|r| r.tuned).collect();
    Ok(CompareReport { rows, quality, tuned })
}

/// Writes `report.csv`, `quality.csv`, `class_histogram.csv`, `tuned.csv`
/// and, when enabled, SVG plots.
pub fn cmd_compare(cfg: &PipelineConfig, out: &Path) -> Result<CompareReport> {
    let report = compare(cfg)?;
    fs::create_dir_all(out)?;
    fs::write(out.join("config.txt"), cfg.to_text())?;
    let csv = report.to_csv();
    fs::write(out.join("report.csv"), &csv)?;
    fs::write(out.join("quality.csv"), report.quality_csv())?;
    fs::write(out.join("class_histogram.csv"), report.histogram_csv())?;
    fs::write(out.join("tuned.csv"), report.tuned_csv())?;
    if report_rows_from_csv(&csv)? != round_rows(&report.rows) {
        return Err(Error::Invariant("report.csv does not parse back to its rows".into()));
    }
    if cfg.plots {
        for q in report.quality.iter().filter(|q| q.seed == cfg.seeds[0]) {
            let bars: Vec<(String, f64)> =
                q.report.class_histogram.iter().enumerate().map(|(c, &n)| (c.to_string(), n as f64)).collect();
            let title = format!("{} pseudo-labels, seed {}", q.labeler.name(), q.seed);
            fs::write(out.join(format!("class_histogram_{}.svg", q.labeler.name())), svg_bars(&title, &bars))?;
        }
    }
    Ok(report)
}

fn round_rows(rows: &[ReportRow]) -> Vec<ReportRow> {
    let r4 = |x: f64| format!("{x:.4}").parse::<f64>().unwrap_or(x);
    rows.iter()
        .map(|r| ReportRow { acc: r4(r.acc), balanced_acc: r4(r.balanced_acc), ..r.clone() })
        .collect()
}

// ---------------------------------------------------------------------------
// Plots

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Minimal standalone SVG bar chart.
pub fn svg_bars(title: &str, bars: &[(String, f64)]) -> String {
    let (w, h, pad) = (640.0, 360.0, 40.0);
    let max = bars.iter().map(|b| b.1).fold(0.0f64, f64::max).max(f64::MIN_POSITIVE);
    let bw = (w - 2.0 * pad) / bars.len().max(1) as f64;
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\">{}</text>\n",
        w / 2.0,
        escape(title)
    );
    for (i, (label, v)) in bars.iter().enumerate() {
        let bh = (h - 2.0 * pad) * v / max;
        let x = pad + i as f64 * bw;
        let _ = writeln!(
            s,
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"#4c72b0\"/>",
            x + 1.0,
            h - pad - bh,
            (bw - 2.0).max(0.5),
            bh
        );
        if bars.len() <= 40 {
            let _ = writeln!(
                s,
                "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"middle\">{}</text>",
                x + bw / 2.0,
                h - pad + 14.0,
                escape(label)
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Histogram of `values` in `bins` equal-width bins.
pub fn svg_histogram(title: &str, values: &[f64], bins: usize) -> String {
    let bins = bins.max(1);
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut counts = vec![0usize; bins];
    for &v in values {
        let k = (((v - lo) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    let bars: Vec<(String, f64)> = counts
        .iter()
        .enumerate()
        .map(|(k, &c)| (format!("{:.2}", lo + k as f64 * width), c as f64))
        .collect();
    svg_bars(title, &bars)
}
