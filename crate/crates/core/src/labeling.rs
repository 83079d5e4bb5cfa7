//! Pseudo-labeled pool construction and pseudo-label quality.
//!
//! Two labelers turn a small labeled budget into a label for every
//! training example:
//! - [`self_train`]: confidence-threshold self-training of a softmax model,
//!   anchored on the labeled budget;
//! - [`cluster_label`]: k-means on the features, with clusters named by a
//!   majority vote of the budget examples they contain.
//!
//! In both cases budget examples keep their ground-truth label.

use std::fs;
use std::path::Path;

use rand::seq::index;
use rand::Rng as _;

use crate::dynamics::LabelPool;
use crate::error::{dimension, domain, Error, Result};
use crate::hungarian::min_cost_assignment;
use crate::rng::rng;
use crate::synth::{self, SoftmaxModel, SyntheticTask, ToyTrainerConfig};

pub const DEFAULT_THRESHOLD: f64 = 0.95;
pub const DEFAULT_ROUNDS: usize = 10;
pub const KMEANS_MAX_ITER: usize = 100;
pub const KMEANS_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct LabelBudget {
    pub fraction: f64,
    pub seed: u64,
    /// Ascending positions in the training split.
    pub labeled_indices: Vec<usize>,
}

pub fn draw_budget(n: usize, fraction: f64, seed: u64) -> Result<LabelBudget> {
    if n == 0 {
        return Err(domain("budget over zero examples"));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(domain(format!("budget fraction {fraction} outside (0, 1]")));
    }
    let k = ((fraction * n as f64).round() as usize).min(n);
    let mut labeled_indices = index::sample(&mut rng(seed), n, k).into_vec();
    labeled_indices.sort_unstable();
    Ok(LabelBudget {
        fraction,
        seed,
        labeled_indices,
    })
}

fn budget_mask(budget: &LabelBudget, n: usize) -> Result<Vec<bool>> {
    let mut mask = vec![false; n];
    for &i in &budget.labeled_indices {
        if i >= n {
            return Err(domain(format!("budget index {i} outside 0..{n}")));
        }
        mask[i] = true;
    }
    Ok(mask)
}

fn distinct_classes(labels: impl Iterator<Item = usize>, n_classes: usize) -> usize {
    let mut seen = vec![false; n_classes];
    labels.for_each(|l| seen[l] = true);
    seen.iter().filter(|&&s| s).count()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SelfTrainConfig {
    pub threshold: f64,
    pub rounds: usize,
    pub trainer: ToyTrainerConfig,
}

impl Default for SelfTrainConfig {
    fn default() -> Self {
        SelfTrainConfig {
            threshold: DEFAULT_THRESHOLD,
            rounds: DEFAULT_ROUNDS,
            trainer: ToyTrainerConfig::default(),
        }
    }
}

/// Confidence-threshold self-training.
///
/// Each round fits a fresh model on the budget plus the currently adopted
/// examples, then adopts every unlabeled example whose top probability
/// reaches `threshold` (a threshold of 1 disables adoption). The last
/// round's model labels every unlabeled example by argmax.
pub fn self_train(
    task: &SyntheticTask,
    budget: &LabelBudget,
    threshold: f64,
    rounds: usize,
    trainer: &ToyTrainerConfig,
) -> Result<LabelPool> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(domain(format!("threshold {threshold} outside (0, 1]")));
    }
    if rounds < 1 {
        return Err(domain("self-training needs at least one round"));
    }
    let n = task.n_train();
    let c = task.n_classes();
    let truth = task.train_truth();
    let labeled = budget_mask(budget, n)?;
    if distinct_classes(budget.labeled_indices.iter().map(|&i| truth[i]), c) < 2 {
        return Err(Error::Degenerate(
            "labeled budget covers fewer than two classes".into(),
        ));
    }
    let unlabeled: Vec<usize> = (0..n).filter(|&i| !labeled[i]).collect();

    let mut adopted: Vec<(usize, usize)> = Vec::new();
    let mut model = SoftmaxModel::zeros(c, task.dim());
    for round in 1..=rounds {
        let mut rows: Vec<usize> = budget.labeled_indices.iter().map(|&i| task.train[i]).collect();
        let mut ys: Vec<usize> = budget.labeled_indices.iter().map(|&i| truth[i]).collect();
        for &(i, y) in &adopted {
            rows.push(task.train[i]);
            ys.push(y);
        }
        model = synth::fit(&task.features, task.dim(), c, &rows, &ys, trainer, |_, _| {})?;
        if round == rounds || threshold >= 1.0 {
            break;
        }
        let next: Vec<(usize, usize)> = unlabeled
            .iter()
            .filter_map(|&i| {
                let p = model.probabilities(task.row(task.train[i]));
                let (arg, &best) = p
                    .iter()
                    .enumerate()
                    .fold((0, &p[0]), |acc, (k, v)| if *v > *acc.1 { (k, v) } else { acc });
                (best >= threshold).then_some((i, arg))
            })
            .collect();
        // the next fit would reproduce this model exactly
        if next == adopted {
            break;
        }
        adopted = next;
    }

    let mut labels = truth.clone();
    for &i in &unlabeled {
        labels[i] = model.predict(task.row(task.train[i]));
    }
    LabelPool::new(labels, labeled, Some(truth), c)
}

#[derive(Clone, Debug, PartialEq)]
pub struct KMeans {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(x: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (k, c) in centroids.iter().enumerate() {
        let d = sq_dist(x, c);
        if d < best_d {
            best_d = d;
            best = k;
        }
    }
    best
}

/// Lloyd's k-means with k-means++ seeding. Stops when no centroid moves
/// more than `tol` or after `max_iter` iterations. Empty clusters keep
/// their previous centroid.
pub fn kmeans(features: &[f64], dim: usize, k: usize, seed: u64, max_iter: usize, tol: f64) -> Result<KMeans> {
    if k < 2 {
        return Err(domain("k-means needs k >= 2"));
    }
    if dim == 0 || features.is_empty() || !features.len().is_multiple_of(dim) {
        return Err(domain("empty or ragged feature matrix"));
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(domain("features must be finite"));
    }
    let n = features.len() / dim;
    let row = |i: usize| &features[i * dim..(i + 1) * dim];
    let mut g = rng(seed);

    let mut centroids: Vec<Vec<f64>> = vec![row(g.random_range(0..n)).to_vec()];
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(row(i), &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let u = g.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if u < acc {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            g.random_range(0..n)
        };
        let c = row(pick).to_vec();
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(row(i), &c));
        }
        centroids.push(c);
    }

    let mut assignments = vec![0usize; n];
    let mut iterations = 0;
    for _ in 0..max_iter {
        iterations += 1;
        for (i, a) in assignments.iter_mut().enumerate() {
            *a = nearest(row(i), &centroids);
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (i, &a) in assignments.iter().enumerate() {
            counts[a] += 1;
            for (s, x) in sums[a].iter_mut().zip(row(i)) {
                *s += x;
            }
        }
        let mut shift: f64 = 0.0;
        for j in 0..k {
            if counts[j] == 0 {
                continue;
            }
            let next: Vec<f64> = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            shift = shift.max(sq_dist(&next, &centroids[j]).sqrt());
            centroids[j] = next;
        }
        if shift <= tol {
            break;
        }
    }
    for (i, a) in assignments.iter_mut().enumerate() {
        *a = nearest(row(i), &centroids);
    }
    Ok(KMeans {
        assignments,
        centroids,
        iterations,
    })
}

/// Maps clusters to classes. Clusters holding budget examples take their
/// majority class (ties to the lowest class). The remaining clusters are
/// matched one-to-one to the classes no cluster claimed, minimizing the
/// distance between cluster centroid and the class's budget feature mean;
/// any cluster still left over takes the nearest budget class mean.
pub fn map_clusters(
    km: &KMeans,
    features: &[f64],
    dim: usize,
    n_classes: usize,
    budget: &[usize],
    budget_truth: &[usize],
) -> Vec<usize> {
    let k = km.centroids.len();
    let mut votes = vec![vec![0usize; n_classes]; k];
    let mut class_sum = vec![vec![0.0; dim]; n_classes];
    let mut class_n = vec![0usize; n_classes];
    for (&i, &y) in budget.iter().zip(budget_truth) {
        votes[km.assignments[i]][y] += 1;
        class_n[y] += 1;
        for (s, x) in class_sum[y].iter_mut().zip(&features[i * dim..(i + 1) * dim]) {
            *s += x;
        }
    }
    let class_mean: Vec<Option<Vec<f64>>> = (0..n_classes)
        .map(|y| (class_n[y] > 0).then(|| class_sum[y].iter().map(|s| s / class_n[y] as f64).collect()))
        .collect();

    let mut map: Vec<Option<usize>> = votes
        .iter()
        .map(|v| {
            let best = (0..n_classes).fold(0, |b, c| if v[c] > v[b] { c } else { b });
            (v[best] > 0).then_some(best)
        })
        .collect();

    let open_clusters: Vec<usize> = (0..k).filter(|&j| map[j].is_none()).collect();
    let mut claimed = vec![false; n_classes];
    map.iter().flatten().for_each(|&c| claimed[c] = true);
    let open_classes: Vec<usize> = (0..n_classes).filter(|&c| !claimed[c]).collect();

    let cost = |j: usize, c: usize| {
        class_mean[c]
            .as_ref()
            .map_or(0.0, |m| sq_dist(&km.centroids[j], m))
    };
    if !open_clusters.is_empty() && !open_classes.is_empty() {
        if open_clusters.len() <= open_classes.len() {
            let m: Vec<Vec<f64>> = open_clusters
                .iter()
                .map(|&j| open_classes.iter().map(|&c| cost(j, c)).collect())
                .collect();
            for (r, col) in min_cost_assignment(&m).into_iter().enumerate() {
                map[open_clusters[r]] = Some(open_classes[col]);
            }
        } else {
            let m: Vec<Vec<f64>> = open_classes
                .iter()
                .map(|&c| open_clusters.iter().map(|&j| cost(j, c)).collect())
                .collect();
            for (r, col) in min_cost_assignment(&m).into_iter().enumerate() {
                map[open_clusters[col]] = Some(open_classes[r]);
            }
        }
    }
    for (j, slot) in map.iter_mut().enumerate() {
        if slot.is_none() {
            let best = (0..n_classes)
                .filter(|&c| class_mean[c].is_some())
                .min_by(|&a, &b| cost(j, a).total_cmp(&cost(j, b)))
                .unwrap_or(0);
            *slot = Some(best);
        }
    }
    map.into_iter().map(|m| m.expect("every cluster mapped")).collect()
}

/// k-means pseudo-labeling of a feature matrix (`n x dim`, row-major).
/// `budget_truth[j]` is the class of `budget.labeled_indices[j]`.
pub fn cluster_label(
    features: &[f64],
    dim: usize,
    k: usize,
    budget: &LabelBudget,
    budget_truth: &[usize],
    seed: u64,
) -> Result<LabelPool> {
    if budget_truth.len() != budget.labeled_indices.len() {
        return Err(dimension("budget truth does not match budget size"));
    }
    if let Some(&bad) = budget_truth.iter().find(|&&y| y >= k) {
        return Err(domain(format!("budget class {bad} outside 0..{k}")));
    }
    let km = kmeans(features, dim, k, seed, KMEANS_MAX_ITER, KMEANS_TOL)?;
    let n = km.assignments.len();
    let is_gt = budget_mask(budget, n)?;
    let map = map_clusters(&km, features, dim, k, &budget.labeled_indices, budget_truth);
    let mut labels: Vec<usize> = km.assignments.iter().map(|&a| map[a]).collect();
    for (&i, &y) in budget.labeled_indices.iter().zip(budget_truth) {
        labels[i] = y;
    }
    LabelPool::new(labels, is_gt, None, k)
}

/// [`cluster_label`] over a task's training split, keeping the training
/// truth in the pool for evaluation.
pub fn cluster_label_task(task: &SyntheticTask, budget: &LabelBudget, seed: u64) -> Result<LabelPool> {
    let truth = task.train_truth();
    let mut feats = Vec::with_capacity(task.n_train() * task.dim());
    for &r in &task.train {
        feats.extend_from_slice(task.row(r));
    }
    let bt: Vec<usize> = budget.labeled_indices.iter().map(|&i| truth[i]).collect();
    let pool = cluster_label(&feats, task.dim(), task.n_classes(), budget, &bt, seed)?;
    LabelPool::new(
        pool.labels().to_vec(),
        pool.is_ground_truth().to_vec(),
        Some(truth),
        task.n_classes(),
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AccMode {
    Direct,
    /// Best one-to-one relabeling of predictions before scoring.
    Hungarian,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QualityReport {
    pub acc: f64,
    pub balanced_acc: f64,
    pub nmi: f64,
    pub ari: f64,
    pub class_histogram: Vec<usize>,
}

pub fn class_histogram(pool: &LabelPool) -> Vec<usize> {
    let mut h = vec![0usize; pool.n_classes()];
    for &l in pool.labels() {
        h[l] += 1;
    }
    h
}

pub fn quality(pool: &LabelPool, truth: &[usize], mode: AccMode) -> Result<QualityReport> {
    let pred = pool.labels();
    if pred.len() != truth.len() {
        return Err(dimension(format!(
            "pool has {} labels, truth has {}",
            pred.len(),
            truth.len()
        )));
    }
    let c = pool.n_classes();
    if let Some(&bad) = truth.iter().find(|&&t| t >= c) {
        return Err(domain(format!("truth class {bad} outside 0..{c}")));
    }
    let mapped: Vec<usize> = match mode {
        AccMode::Direct => pred.to_vec(),
        AccMode::Hungarian => {
            let perm = best_permutation(pred, truth, c);
            pred.iter().map(|&p| perm[p]).collect()
        }
    };
    let (acc, balanced_acc) = synth::accuracy(&mapped, truth, c)?;
    Ok(QualityReport {
        acc,
        balanced_acc,
        nmi: nmi(pred, truth),
        ari: ari(pred, truth),
        class_histogram: class_histogram(pool),
    })
}

/// Permutation of predicted labels maximizing agreement with `truth`.
pub fn best_permutation(pred: &[usize], truth: &[usize], n_classes: usize) -> Vec<usize> {
    let mut counts = vec![vec![0.0; n_classes]; n_classes];
    for (&p, &t) in pred.iter().zip(truth) {
        counts[p][t] += 1.0;
    }
    let cost: Vec<Vec<f64>> = counts.iter().map(|r| r.iter().map(|v| -v).collect()).collect();
    min_cost_assignment(&cost)
}

fn contingency(a: &[usize], b: &[usize]) -> (Vec<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut t = vec![vec![0.0; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        t[x][y] += 1.0;
    }
    let rows = t.iter().map(|r| r.iter().sum()).collect();
    let cols = (0..kb).map(|j| t.iter().map(|r| r[j]).sum()).collect();
    (t, rows, cols)
}

fn entropy(marginal: &[f64], n: f64) -> f64 {
    marginal
        .iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| {
            let p = v / n;
            -p * p.ln()
        })
        .sum()
}

/// Normalized mutual information with arithmetic-mean normalization.
pub fn nmi(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len() as f64;
    if n == 0.0 {
        return 1.0;
    }
    let (t, rows, cols) = contingency(a, b);
    let (ha, hb) = (entropy(&rows, n), entropy(&cols, n));
    if ha == 0.0 && hb == 0.0 {
        return 1.0;
    }
    let mut mi = 0.0;
    for (i, r) in t.iter().enumerate() {
        for (j, &v) in r.iter().enumerate() {
            if v > 0.0 {
                mi += v / n * (n * v / (rows[i] * cols[j])).ln();
            }
        }
    }
    (mi / ((ha + hb) / 2.0)).clamp(0.0, 1.0)
}

fn comb2(v: f64) -> f64 {
    v * (v - 1.0) / 2.0
}

/// Adjusted Rand index.
pub fn ari(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len() as f64;
    let (t, rows, cols) = contingency(a, b);
    let index: f64 = t.iter().flatten().map(|&v| comb2(v)).sum();
    let sa: f64 = rows.iter().map(|&v| comb2(v)).sum();
    let sb: f64 = cols.iter().map(|&v| comb2(v)).sum();
    let total = comb2(n);
    if total == 0.0 {
        return 1.0;
    }
    let expected = sa * sb / total;
    let max = (sa + sb) / 2.0;
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

pub fn write_pool_csv(pool: &LabelPool, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["example_id", "label", "is_ground_truth", "ground_truth"])?;
    for i in 0..pool.len() {
        w.write_record([
            i.to_string(),
            pool.labels()[i].to_string(),
            (pool.is_ground_truth()[i] as u8).to_string(),
            pool.ground_truth().map_or(String::new(), |g| g[i].to_string()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_pool_csv(path: impl AsRef<Path>, n_classes: usize) -> Result<LabelPool> {
    let mut rdr = csv::Reader::from_path(path)?;
    let (mut labels, mut flags, mut gts) = (Vec::new(), Vec::new(), Vec::new());
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| Error::Format(format!("pool row {row}: bad {what}"));
        if rec.len() != 4 || rec[0].parse::<usize>().ok() != Some(row) {
            return Err(bad("example_id"));
        }
        labels.push(rec[1].parse::<usize>().map_err(|_| bad("label"))?);
        flags.push(match &rec[2] {
            "0" => false,
            "1" => true,
            _ => return Err(bad("is_ground_truth")),
        });
        gts.push(match &rec[3] {
            "" => None,
            v => Some(v.parse::<usize>().map_err(|_| bad("ground_truth"))?),
        });
    }
    let ground_truth = if gts.iter().all(Option::is_none) {
        None
    } else {
        Some(
            gts.into_iter()
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| Error::Format("ground truth present for only some rows".into()))?,
        )
    };
    LabelPool::new(labels, flags, ground_truth, n_classes)
}

/// Number of classes implied by a pool CSV (largest label + 1, at least 2).
pub fn infer_classes(path: impl AsRef<Path>) -> Result<usize> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut max = 0usize;
    for rec in rdr.records() {
        let rec = rec?;
        for f in [1, 3] {
            if let Some(v) = rec.get(f).and_then(|s| s.parse::<usize>().ok()) {
                max = max.max(v);
            }
        }
    }
    Ok((max + 1).max(2))
}

pub fn report_to_kv(r: &QualityReport) -> String {
    format!(
        "acc = {}\nbalanced_acc = {}\nnmi = {}\nari = {}\nn_examples = {}\n",
        r.acc,
        r.balanced_acc,
        r.nmi,
        r.ari,
        r.class_histogram.iter().sum::<usize>()
    )
}

pub fn histogram_to_csv(h: &[usize]) -> String {
    let mut s = String::from("class,count\n");
    for (c, n) in h.iter().enumerate() {
        s.push_str(&format!("{c},{n}\n"));
    }
    s
}

pub fn write_report(r: &QualityReport, dir: impl AsRef<Path>, stem: &str) -> Result<()> {
    let dir = dir.as_ref();
    fs::write(dir.join(format!("{stem}.txt")), report_to_kv(r))?;
    fs::write(dir.join(format!("{stem}_histogram.csv")), histogram_to_csv(&r.class_histogram))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, TaskSpec};

    #[test]
    fn budget_sizes() {
        assert_eq!(draw_budget(10, 1.0, 3).unwrap().labeled_indices, (0..10).collect::<Vec<_>>());
        let b = draw_budget(1000, 0.1, 3).unwrap();
        assert_eq!(b.labeled_indices.len(), 100);
        assert_eq!(b, draw_budget(1000, 0.1, 3).unwrap());
        assert!(draw_budget(10, 0.0, 3).is_err());
        assert!(draw_budget(0, 0.5, 3).is_err());
    }

    fn two_class_task() -> SyntheticTask {
        let spec = TaskSpec {
            n_classes: 2,
            dim: 4,
            n_train: 400,
            radius: 4.0,
            min_separation: 6.0,
            ..Default::default()
        };
        generate(&spec, 5).unwrap()
    }

    #[test]
    fn self_train_full_budget_is_truth() {
        let t = two_class_task();
        let b = draw_budget(t.n_train(), 1.0, 0).unwrap();
        let pool = self_train(&t, &b, 0.95, 3, &ToyTrainerConfig::default()).unwrap();
        assert_eq!(pool.labels(), t.train_truth().as_slice());
    }

    #[test]
    fn self_train_degenerate_budget() {
        let t = two_class_task();
        let truth = t.train_truth();
        let one: Vec<usize> = (0..t.n_train()).filter(|&i| truth[i] == 0).take(5).collect();
        let b = LabelBudget { fraction: 0.01, seed: 0, labeled_indices: one };
        let err = self_train(&t, &b, 0.95, 3, &ToyTrainerConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Degenerate(_)));
    }

    #[test]
    fn self_train_threshold_one_is_single_round() {
        let t = two_class_task();
        let b = draw_budget(t.n_train(), 0.05, 1).unwrap();
        let cfg = ToyTrainerConfig { epochs: 5, ..Default::default() };
        let a = self_train(&t, &b, 1.0, 4, &cfg).unwrap();
        let single = self_train(&t, &b, 0.95, 1, &cfg).unwrap();
        assert_eq!(a, single);
    }

    #[test]
    fn kmeans_identical_points() {
        let feats = vec![1.0; 40];
        let km = kmeans(&feats, 2, 3, 0, 100, 1e-6).unwrap();
        assert!(km.assignments.iter().all(|&a| a == km.assignments[0]));
        assert!(kmeans(&feats, 2, 1, 0, 100, 1e-6).is_err());
        assert!(kmeans(&[], 2, 2, 0, 100, 1e-6).is_err());
    }

    #[test]
    fn metric_identities() {
        let truth = vec![0, 0, 1, 1, 2, 2, 2];
        let pool = LabelPool::new(truth.clone(), vec![false; 7], None, 3).unwrap();
        let r = quality(&pool, &truth, AccMode::Direct).unwrap();
        assert_eq!((r.acc, r.balanced_acc), (100.0, 100.0));
        assert!((r.nmi - 1.0).abs() < 1e-12 && (r.ari - 1.0).abs() < 1e-12);
        let perm: Vec<usize> = truth.iter().map(|&t| (t + 1) % 3).collect();
        let pp = LabelPool::new(perm.clone(), vec![false; 7], None, 3).unwrap();
        assert_eq!(quality(&pp, &truth, AccMode::Hungarian).unwrap().acc, 100.0);
        assert_eq!(quality(&pp, &truth, AccMode::Direct).unwrap().acc, 0.0);
        assert!((nmi(&perm, &truth) - nmi(&truth, &perm)).abs() < 1e-12);
        assert!(quality(&pool, &truth[..3], AccMode::Direct).is_err());
    }

    #[test]
    fn ari_known_value() {
        // sklearn: adjusted_rand_score([0,0,1,1],[0,0,1,2]) = 0.5714285714285714
        assert!((ari(&[0, 0, 1, 1], &[0, 0, 1, 2]) - 0.5714285714285715).abs() < 1e-12);
        // sklearn: normalized_mutual_info_score([0,0,1,1],[0,0,1,2]) = 0.7999999999999999
        assert!((nmi(&[0, 0, 1, 1], &[0, 0, 1, 2]) - 0.8).abs() < 1e-12);
    }

    #[test]
    fn histogram_counts() {
        let pool = LabelPool::new(vec![0; 5], vec![false; 5], None, 3).unwrap();
        assert_eq!(class_histogram(&pool), vec![5, 0, 0]);
    }

    #[test]
    fn pool_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("pool.csv");
        let pool = LabelPool::new(vec![0, 2, 1], vec![true, false, false], Some(vec![0, 1, 1]), 3).unwrap();
        write_pool_csv(&pool, &p).unwrap();
        assert_eq!(read_pool_csv(&p, 3).unwrap(), pool);
        assert_eq!(infer_classes(&p).unwrap(), 3);
        let no_gt = LabelPool::new(vec![0, 1], vec![false, false], None, 2).unwrap();
        write_pool_csv(&no_gt, &p).unwrap();
        assert_eq!(read_pool_csv(&p, 2).unwrap(), no_gt);
    }
}
