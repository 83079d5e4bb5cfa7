//! Synthetic classification tasks and the toy trainer.
//!
//! A task is an isotropic Gaussian mixture with class means on a sphere.
//! Three regimes are covered: clean and balanced, long-tailed (exponential
//! class-size profile) and feature-corrupted (extra isotropic noise on a
//! fixed fraction of training examples). The trainer is multinomial
//! logistic regression fitted by mini-batch SGD that records the softmax
//! output of every training example after every epoch.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use rand_distr::{Distribution, StandardNormal};

use crate::dynamics::{LabelPool, TrajectoryLog};
use crate::error::{dimension, domain, Error, Result};
use crate::rng::{rng, Rng};

const MEAN_ATTEMPTS: usize = 10_000;

#[derive(Clone, Debug, PartialEq)]
pub struct TaskSpec {
    pub n_classes: usize,
    pub dim: usize,
    pub n_train: usize,
    pub n_validation_per_class: usize,
    pub n_test_per_class: usize,
    /// Radius of the sphere the class means are drawn on.
    pub radius: f64,
    /// Minimum pairwise distance between class means.
    pub min_separation: f64,
    /// Per-coordinate standard deviation of every class.
    pub noise_std: f64,
    /// Rarest-to-largest class size ratio, in (0, 1].
    pub imbalance_factor: f64,
    /// Fraction of training examples that receive extra noise, in [0, 1).
    pub corruption_fraction: f64,
    pub corruption_noise: f64,
}

impl Default for TaskSpec {
    fn default() -> Self {
        TaskSpec {
            n_classes: 10,
            dim: 16,
            n_train: 5000,
            n_validation_per_class: 50,
            n_test_per_class: 200,
            radius: 3.0,
            min_separation: 2.5,
            noise_std: 1.0,
            imbalance_factor: 1.0,
            corruption_fraction: 0.0,
            corruption_noise: 3.0,
        }
    }
}

/// Named task regimes shipped as presets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    /// Balanced, uncorrupted, high-dimensional: a 10% coreset is data-scarce.
    Clean,
    /// IF = 0.1 in 16 dimensions.
    LongTailed,
    /// 30% of training examples carry extra feature noise.
    Corrupted,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Clean => "clean",
            Preset::LongTailed => "long_tailed",
            Preset::Corrupted => "corrupted",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clean" => Ok(Preset::Clean),
            "long_tailed" | "long-tailed" | "lt" => Ok(Preset::LongTailed),
            "corrupted" => Ok(Preset::Corrupted),
            other => Err(domain(format!("unknown task preset {other:?}"))),
        }
    }
}

impl TaskSpec {
    pub fn preset(p: Preset) -> Self {
        let base = TaskSpec::default();
        match p {
            Preset::Clean => TaskSpec { dim: 128, ..base },
            Preset::LongTailed => TaskSpec {
                radius: 5.0,
                min_separation: 3.5,
                imbalance_factor: 0.1,
                ..base
            },
            Preset::Corrupted => TaskSpec { corruption_fraction: 0.3, ..base },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 {
            return Err(domain("a task needs at least two classes"));
        }
        if self.dim < 2 {
            return Err(domain("a task needs at least two feature dimensions"));
        }
        if self.n_train < self.n_classes {
            return Err(domain("n_train must be at least n_classes"));
        }
        if !(self.imbalance_factor > 0.0 && self.imbalance_factor <= 1.0) {
            return Err(domain(format!("imbalance factor {} outside (0, 1]", self.imbalance_factor)));
        }
        if !(0.0..1.0).contains(&self.corruption_fraction) {
            return Err(domain(format!(
                "corruption fraction {} outside [0, 1)",
                self.corruption_fraction
            )));
        }
        for (name, v) in [
            ("radius", self.radius),
            ("noise_std", self.noise_std),
            ("corruption_noise", self.corruption_noise),
            ("min_separation", self.min_separation),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(domain(format!("{name} must be finite and non-negative")));
            }
        }
        Ok(())
    }

    /// Training-set class sizes `n_c = n_max * IF^(c / (C - 1))`, rounded,
    /// with class 0 absorbing the rounding remainder so they sum to
    /// `n_train`.
    pub fn class_sizes(&self) -> Vec<usize> {
        let c = self.n_classes;
        let profile: Vec<f64> = (0..c)
            .map(|k| self.imbalance_factor.powf(k as f64 / (c - 1) as f64))
            .collect();
        let n_max = self.n_train as f64 / profile.iter().sum::<f64>();
        let mut sizes: Vec<usize> = profile.iter().map(|p| ((n_max * p).round() as usize).max(1)).collect();
        let rest: usize = sizes[1..].iter().sum();
        sizes[0] = self.n_train.saturating_sub(rest).max(1);
        sizes
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "validation" | "val" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(domain(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticTask {
    pub spec: TaskSpec,
    pub seed: u64,
    pub means: Vec<Vec<f64>>,
    /// Row-major, one row of `dim` values per example.
    pub features: Vec<f64>,
    pub truth: Vec<usize>,
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
    pub corrupted: Vec<bool>,
}

impl SyntheticTask {
    pub fn n_classes(&self) -> usize {
        self.spec.n_classes
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    pub fn n_train(&self) -> usize {
        self.train.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.spec.dim;
        &self.features[i * d..(i + 1) * d]
    }

    pub fn split(&self, split: Split) -> &[usize] {
        match split {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
            Split::Test => &self.test,
        }
    }

    /// Ground truth of the training split, in training order.
    pub fn train_truth(&self) -> Vec<usize> {
        self.train.iter().map(|&i| self.truth[i]).collect()
    }

    /// Corruption flags of the training split, in training order.
    pub fn train_corrupted(&self) -> Vec<bool> {
        self.train.iter().map(|&i| self.corrupted[i]).collect()
    }
}

fn gaussian(rng: &mut Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

pub fn generate(spec: &TaskSpec, seed: u64) -> Result<SyntheticTask> {
    spec.validate()?;
    let mut g = rng(seed);
    let d = spec.dim;

    let mut means: Vec<Vec<f64>> = Vec::with_capacity(spec.n_classes);
    for c in 0..spec.n_classes {
        let mut placed = false;
        for _ in 0..MEAN_ATTEMPTS {
            let v = gaussian(&mut g, d);
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                continue;
            }
            let m: Vec<f64> = v.iter().map(|x| x / norm * spec.radius).collect();
            if means.iter().all(|o| distance(o, &m) >= spec.min_separation) {
                means.push(m);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::Degenerate(format!(
                "could not place class mean {c} at separation {} on radius {}",
                spec.min_separation, spec.radius
            )));
        }
    }

    let sample = |g: &mut Rng, c: usize| -> Vec<f64> {
        gaussian(g, d)
            .into_iter()
            .zip(&means[c])
            .map(|(z, m)| m + spec.noise_std * z)
            .collect()
    };

    let mut train_rows: Vec<(Vec<f64>, usize)> = Vec::with_capacity(spec.n_train);
    for (c, &size) in spec.class_sizes().iter().enumerate() {
        for _ in 0..size {
            train_rows.push((sample(&mut g, c), c));
        }
    }
    train_rows.shuffle(&mut g);
    let n_train = train_rows.len();

    let n_corrupt = (spec.corruption_fraction * n_train as f64).round() as usize;
    let mut corrupted = vec![false; n_train];
    for i in index::sample(&mut g, n_train, n_corrupt) {
        corrupted[i] = true;
        for x in train_rows[i].0.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut g);
            *x += spec.corruption_noise * z;
        }
    }

    let mut held_out = Vec::new();
    for per_class in [spec.n_validation_per_class, spec.n_test_per_class] {
        let mut rows = Vec::with_capacity(per_class * spec.n_classes);
        for c in 0..spec.n_classes {
            for _ in 0..per_class {
                rows.push((sample(&mut g, c), c));
            }
        }
        held_out.push(rows);
    }

    let mut features = Vec::new();
    let mut truth = Vec::new();
    for (x, c) in train_rows.iter().chain(&held_out[0]).chain(&held_out[1]) {
        features.extend_from_slice(x);
        truth.push(*c);
    }
    let n_val = held_out[0].len();
    let n_test = held_out[1].len();
    corrupted.resize(n_train + n_val + n_test, false);

    Ok(SyntheticTask {
        spec: spec.clone(),
        seed,
        means,
        features,
        truth,
        train: (0..n_train).collect(),
        validation: (n_train..n_train + n_val).collect(),
        test: (n_train + n_val..n_train + n_val + n_test).collect(),
        corrupted,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ToyTrainerConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub l2: f64,
    pub seed: u64,
}

impl Default for ToyTrainerConfig {
    fn default() -> Self {
        ToyTrainerConfig {
            epochs: 30,
            learning_rate: 0.05,
            batch_size: 32,
            l2: 1e-4,
            seed: 0,
        }
    }
}

impl ToyTrainerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(domain("trainer needs at least one epoch"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(domain(format!("learning rate {} must be >= 0", self.learning_rate)));
        }
        if self.batch_size < 1 {
            return Err(domain("batch size must be at least 1"));
        }
        if self.l2.is_nan() || self.l2 < 0.0 {
            return Err(domain("l2 must be >= 0"));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        ToyTrainerConfig { seed, ..*self }
    }
}

/// Linear softmax classifier. Weights are stored class-major with the bias
/// as the last entry of each class row.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftmaxModel {
    pub n_classes: usize,
    pub dim: usize,
    pub weights: Vec<f64>,
}

impl SoftmaxModel {
    pub fn zeros(n_classes: usize, dim: usize) -> Self {
        SoftmaxModel {
            n_classes,
            dim,
            weights: vec![0.0; n_classes * (dim + 1)],
        }
    }

    pub fn probabilities_into(&self, x: &[f64], out: &mut [f64]) {
        let w = self.dim + 1;
        let mut max = f64::NEG_INFINITY;
        for (c, o) in out.iter_mut().enumerate() {
            let row = &self.weights[c * w..(c + 1) * w];
            let z = row[..self.dim].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + row[self.dim];
            *o = z;
            max = max.max(z);
        }
        let mut sum = 0.0;
        for o in out.iter_mut() {
            *o = (*o - max).exp();
            sum += *o;
        }
        for o in out.iter_mut() {
            *o /= sum;
        }
    }

    pub fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_classes];
        self.probabilities_into(x, &mut out);
        out
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        let p = self.probabilities(x);
        let mut best = 0;
        for c in 1..p.len() {
            if p[c] > p[best] {
                best = c;
            }
        }
        best
    }

    /// Mean cross-entropy plus `l2 / 2 * |W|^2` (biases excluded), and its
    /// gradient with respect to `weights`.
    pub fn loss_and_grad(&self, rows: &[&[f64]], labels: &[usize], l2: f64) -> (f64, Vec<f64>) {
        let w = self.dim + 1;
        let mut grad = vec![0.0; self.weights.len()];
        let mut p = vec![0.0; self.n_classes];
        let mut loss = 0.0;
        let n = rows.len() as f64;
        for (x, &y) in rows.iter().zip(labels) {
            self.probabilities_into(x, &mut p);
            loss -= p[y].max(f64::MIN_POSITIVE).ln();
            for c in 0..self.n_classes {
                let err = (p[c] - if c == y { 1.0 } else { 0.0 }) / n;
                let g = &mut grad[c * w..(c + 1) * w];
                for (gk, xk) in g[..self.dim].iter_mut().zip(x.iter()) {
                    *gk += err * xk;
                }
                g[self.dim] += err;
            }
        }
        loss /= n;
        for c in 0..self.n_classes {
            for k in 0..self.dim {
                let wi = self.weights[c * w + k];
                loss += 0.5 * l2 * wi * wi;
                grad[c * w + k] += l2 * wi;
            }
        }
        (loss, grad)
    }
}

/// Fits a softmax model on `fit_rows` of `features` with `labels` (indexed
/// like `fit_rows`), calling `on_epoch` after every epoch.
pub fn fit<F>(
    features: &[f64],
    dim: usize,
    n_classes: usize,
    fit_rows: &[usize],
    labels: &[usize],
    cfg: &ToyTrainerConfig,
    mut on_epoch: F,
) -> Result<SoftmaxModel>
where
    F: FnMut(usize, &SoftmaxModel),
{
    cfg.validate()?;
    if fit_rows.is_empty() {
        return Err(domain("cannot train on an empty subset"));
    }
    if fit_rows.len() != labels.len() {
        return Err(dimension("fit rows and labels differ in length"));
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= n_classes) {
        return Err(domain(format!("label {l} out of range")));
    }
    let mut model = SoftmaxModel::zeros(n_classes, dim);
    let mut g = rng(cfg.seed);
    let mut order: Vec<usize> = (0..fit_rows.len()).collect();
    let mut rows: Vec<&[f64]> = Vec::with_capacity(cfg.batch_size);
    let mut ys = Vec::with_capacity(cfg.batch_size);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut g);
        for batch in order.chunks(cfg.batch_size) {
            rows.clear();
            ys.clear();
            for &j in batch {
                let r = fit_rows[j];
                rows.push(&features[r * dim..(r + 1) * dim]);
                ys.push(labels[j]);
            }
            let (_, grad) = model.loss_and_grad(&rows, &ys, cfg.l2);
            for (w, gw) in model.weights.iter_mut().zip(&grad) {
                *w -= cfg.learning_rate * gw;
            }
        }
        on_epoch(epoch, &model);
    }
    Ok(model)
}

/// Trains on the pool labels (restricted to `subset`, positions in the
/// training split) and logs softmax outputs of every training example
/// after every epoch.
pub fn train_toy(
    task: &SyntheticTask,
    pool: &LabelPool,
    cfg: &ToyTrainerConfig,
    subset: Option<&[usize]>,
) -> Result<TrajectoryLog> {
    Ok(train_with_log(task, pool, cfg, subset)?.0)
}

/// Like [`train_toy`] but returns the final model as well.
pub fn train_with_log(
    task: &SyntheticTask,
    pool: &LabelPool,
    cfg: &ToyTrainerConfig,
    subset: Option<&[usize]>,
) -> Result<(TrajectoryLog, SoftmaxModel)> {
    let n = task.n_train();
    if pool.len() != n {
        return Err(dimension(format!("pool has {} labels, task has {n} training examples", pool.len())));
    }
    let c = task.n_classes();
    let mut probs = Vec::with_capacity(n * cfg.epochs * c);
    let mut per_epoch: Vec<Vec<f32>> = Vec::with_capacity(cfg.epochs);
    let mut buf = vec![0.0; c];
    let model = fit_on_pool(task, pool, cfg, subset, |_, m| {
        let mut snap = Vec::with_capacity(n * c);
        for &row in &task.train {
            m.probabilities_into(task.row(row), &mut buf);
            snap.extend(buf.iter().map(|&p| p as f32));
        }
        per_epoch.push(snap);
    })?;
    for i in 0..n {
        for snap in &per_epoch {
            probs.extend_from_slice(&snap[i * c..(i + 1) * c]);
        }
    }
    let log = TrajectoryLog::new(
        n,
        cfg.epochs,
        c,
        probs,
        (1..=cfg.epochs as u32).collect(),
        format!("toy-softmax seed={} lr={} epochs={}", cfg.seed, cfg.learning_rate, cfg.epochs),
    )?;
    Ok((log, model))
}

/// Trains on the pool labels without logging.
pub fn train_model(
    task: &SyntheticTask,
    pool: &LabelPool,
    cfg: &ToyTrainerConfig,
    subset: Option<&[usize]>,
) -> Result<SoftmaxModel> {
    fit_on_pool(task, pool, cfg, subset, |_, _| {})
}

fn fit_on_pool<F: FnMut(usize, &SoftmaxModel)>(
    task: &SyntheticTask,
    pool: &LabelPool,
    cfg: &ToyTrainerConfig,
    subset: Option<&[usize]>,
    on_epoch: F,
) -> Result<SoftmaxModel> {
    let n = task.n_train();
    let positions: Vec<usize> = match subset {
        Some(s) => {
            if let Some(&bad) = s.iter().find(|&&i| i >= n) {
                return Err(domain(format!("subset index {bad} outside the training split")));
            }
            s.to_vec()
        }
        None => (0..n).collect(),
    };
    let rows: Vec<usize> = positions.iter().map(|&i| task.train[i]).collect();
    let labels: Vec<usize> = positions.iter().map(|&i| pool.labels()[i]).collect();
    fit(&task.features, task.dim(), task.n_classes(), &rows, &labels, cfg, on_epoch)
}

/// Accuracy and balanced accuracy (mean per-class recall over classes
/// present in `truth`), both in percent.
pub fn accuracy(pred: &[usize], truth: &[usize], n_classes: usize) -> Result<(f64, f64)> {
    if pred.len() != truth.len() {
        return Err(dimension("predictions and truth differ in length"));
    }
    if truth.is_empty() {
        return Err(domain("cannot score an empty split"));
    }
    let mut hit = vec![0usize; n_classes];
    let mut tot = vec![0usize; n_classes];
    for (&p, &t) in pred.iter().zip(truth) {
        if t >= n_classes {
            return Err(domain(format!("class {t} out of range")));
        }
        tot[t] += 1;
        if p == t {
            hit[t] += 1;
        }
    }
    let acc = 100.0 * hit.iter().sum::<usize>() as f64 / truth.len() as f64;
    let recalls: Vec<f64> = (0..n_classes)
        .filter(|&c| tot[c] > 0)
        .map(|c| hit[c] as f64 / tot[c] as f64)
        .collect();
    let bal = 100.0 * recalls.iter().sum::<f64>() / recalls.len() as f64;
    Ok((acc, bal))
}

pub fn evaluate(task: &SyntheticTask, model: &SoftmaxModel, split: Split) -> Result<(f64, f64)> {
    let rows = task.split(split);
    let pred: Vec<usize> = rows.iter().map(|&i| model.predict(task.row(i))).collect();
    let truth: Vec<usize> = rows.iter().map(|&i| task.truth[i]).collect();
    accuracy(&pred, &truth, task.n_classes())
}

/// Accuracy of a log's final-epoch argmax against training-split truth.
pub fn evaluate_log(task: &SyntheticTask, log: &TrajectoryLog) -> Result<(f64, f64)> {
    if log.n_examples() != task.n_train() {
        return Err(dimension("log does not cover the training split"));
    }
    let last = log.n_epochs() - 1;
    let pred: Vec<usize> = (0..log.n_examples())
        .map(|i| {
            let row = log.row(i, last);
            let mut best = 0;
            for c in 1..row.len() {
                if row[c] > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect();
    accuracy(&pred, &task.train_truth(), task.n_classes())
}

fn spec_to_kv(task: &SyntheticTask) -> String {
    let s = &task.spec;
    let mut out = String::new();
    let mut put = |k: &str, v: String| out.push_str(&format!("{k} = {v}\n"));
    put("seed", task.seed.to_string());
    put("n_classes", s.n_classes.to_string());
    put("dim", s.dim.to_string());
    put("n_train", s.n_train.to_string());
    put("n_validation_per_class", s.n_validation_per_class.to_string());
    put("n_test_per_class", s.n_test_per_class.to_string());
    put("radius", s.radius.to_string());
    put("min_separation", s.min_separation.to_string());
    put("noise_std", s.noise_std.to_string());
    put("imbalance_factor", s.imbalance_factor.to_string());
    put("corruption_fraction", s.corruption_fraction.to_string());
    put("corruption_noise", s.corruption_noise.to_string());
    for (c, m) in task.means.iter().enumerate() {
        let v: Vec<String> = m.iter().map(f64::to_string).collect();
        put(&format!("mean.{c}"), v.join(" "));
    }
    out
}

pub fn save_task(task: &SyntheticTask, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    fs::write(dir.join("spec.txt"), spec_to_kv(task))?;

    let n = task.truth.len();
    let mut w = csv::Writer::from_path(dir.join("features.csv"))?;
    let mut head = vec!["example_id".to_string()];
    head.extend((0..task.dim()).map(|k| format!("f{k}")));
    w.write_record(&head)?;
    for i in 0..n {
        let mut rec = vec![i.to_string()];
        rec.extend(task.row(i).iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;

    let mut split_of = vec![""; n];
    for (name, idx) in [("train", &task.train), ("validation", &task.validation), ("test", &task.test)] {
        for &i in idx {
            split_of[i] = name;
        }
    }
    for (file, col, vals) in [
        ("truth.csv", "class", task.truth.iter().map(usize::to_string).collect::<Vec<_>>()),
        ("splits.csv", "split", split_of.iter().map(|s| s.to_string()).collect()),
        ("mask.csv", "corrupted", task.corrupted.iter().map(|&b| (b as u8).to_string()).collect()),
    ] {
        let mut w = csv::Writer::from_path(dir.join(file))?;
        w.write_record(["example_id", col])?;
        for (i, v) in vals.iter().enumerate() {
            w.write_record([i.to_string(), v.clone()])?;
        }
        w.flush()?;
    }
    Ok(())
}

fn read_column(path: &Path) -> Result<Vec<String>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != 2 || rec[0].parse::<usize>().ok() != Some(row) {
            return Err(Error::Format(format!("{}: bad row {row}", path.display())));
        }
        out.push(rec[1].to_string());
    }
    Ok(out)
}

pub fn load_task(dir: impl AsRef<Path>) -> Result<SyntheticTask> {
    let dir = dir.as_ref();
    let kv: BTreeMap<String, String> = crate::config::parse_kv(&fs::read_to_string(dir.join("spec.txt"))?)?;
    let get = |k: &str| {
        kv.get(k)
            .ok_or_else(|| Error::Format(format!("task spec lacks {k}")))
    };
    fn num<T: FromStr>(k: &str, v: &str) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        v.parse().map_err(|e| Error::Format(format!("{k}: {e}")))
    }
    let spec = TaskSpec {
        n_classes: num("n_classes", get("n_classes")?)?,
        dim: num("dim", get("dim")?)?,
        n_train: num("n_train", get("n_train")?)?,
        n_validation_per_class: num("n_validation_per_class", get("n_validation_per_class")?)?,
        n_test_per_class: num("n_test_per_class", get("n_test_per_class")?)?,
        radius: num("radius", get("radius")?)?,
        min_separation: num("min_separation", get("min_separation")?)?,
        noise_std: num("noise_std", get("noise_std")?)?,
        imbalance_factor: num("imbalance_factor", get("imbalance_factor")?)?,
        corruption_fraction: num("corruption_fraction", get("corruption_fraction")?)?,
        corruption_noise: num("corruption_noise", get("corruption_noise")?)?,
    };
    spec.validate()?;
    let seed = num("seed", get("seed")?)?;
    let means = (0..spec.n_classes)
        .map(|c| {
            get(&format!("mean.{c}"))?
                .split_whitespace()
                .map(|v| num::<f64>("mean", v))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rdr = csv::Reader::from_path(dir.join("features.csv"))?;
    let mut features = Vec::new();
    let mut n = 0;
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != spec.dim + 1 {
            return Err(Error::Format(format!("features row {n} has {} fields", rec.len())));
        }
        for v in rec.iter().skip(1) {
            features.push(num::<f64>("feature", v)?);
        }
        n += 1;
    }
    let truth = read_column(&dir.join("truth.csv"))?
        .iter()
        .map(|v| num::<usize>("class", v))
        .collect::<Result<Vec<_>>>()?;
    let corrupted = read_column(&dir.join("mask.csv"))?
        .iter()
        .map(|v| match v.as_str() {
            "0" => Ok(false),
            "1" => Ok(true),
            o => Err(Error::Format(format!("mask value {o:?}"))),
        })
        .collect::<Result<Vec<_>>>()?;
    let splits = read_column(&dir.join("splits.csv"))?;
    if truth.len() != n || corrupted.len() != n || splits.len() != n {
        return Err(Error::Format("task files disagree on example count".into()));
    }
    let (mut train, mut validation, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for (i, s) in splits.iter().enumerate() {
        match s.parse::<Split>()? {
            Split::Train => train.push(i),
            Split::Validation => validation.push(i),
            Split::Test => test.push(i),
        }
    }
    if let Some(&bad) = truth.iter().find(|&&t| t >= spec.n_classes) {
        return Err(Error::Format(format!("class {bad} out of range")));
    }
    Ok(SyntheticTask {
        spec,
        seed,
        means,
        features,
        truth,
        train,
        validation,
        test,
        corrupted,
    })
}
