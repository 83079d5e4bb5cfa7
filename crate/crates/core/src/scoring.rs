//! Per-example difficulty scores computed from a trajectory log.
//!
//! Every score is computed against the pool's label `ŷ` for the example,
//! whether it is ground truth or a pseudo-label. Alongside the score each
//! table keeps `pred_mean`, the mean probability of `ŷ` over the epochs
//! the score used, which Beta sampling needs.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use crate::dynamics::{LabelPool, TrajectoryLog};
use crate::error::{dimension, domain, Error, Result};

pub const DEFAULT_WINDOW: usize = 10;
pub const DEFAULT_N_EARLY: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Metric {
    Aum,
    Dual,
    Forgetting,
    El2n,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Aum => "aum",
            Metric::Dual => "dual",
            Metric::Forgetting => "forgetting",
            Metric::El2n => "el2n",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "aum" => Ok(Metric::Aum),
            "dual" => Ok(Metric::Dual),
            "forgetting" => Ok(Metric::Forgetting),
            "el2n" => Ok(Metric::El2n),
            other => Err(domain(format!("unknown metric {other:?}"))),
        }
    }
}

/// Parameters a score was computed with. `epochs` is the number of stored
/// epochs the log had; `first_epoch`/`last_epoch` are the epoch ids spanned.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreParams {
    pub epochs: usize,
    pub first_epoch: u32,
    pub last_epoch: u32,
    pub window: Option<usize>,
    pub gamma: Option<f64>,
    pub n_early: Option<usize>,
}

impl ScoreParams {
    fn for_log(log: &TrajectoryLog) -> Self {
        let ids = log.epoch_ids();
        ScoreParams {
            epochs: log.n_epochs(),
            first_epoch: ids[0],
            last_epoch: ids[ids.len() - 1],
            window: None,
            gamma: None,
            n_early: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreTable {
    pub metric: Metric,
    pub scores: Vec<f64>,
    pub pred_mean: Vec<f64>,
    pub params: ScoreParams,
}

impl ScoreTable {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// The table restricted to `indices`, in order.
    pub fn subset(&self, indices: &[usize]) -> Result<ScoreTable> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(domain(format!("score index {bad} out of range")));
        }
        Ok(ScoreTable {
            metric: self.metric,
            scores: indices.iter().map(|&i| self.scores[i]).collect(),
            pred_mean: indices.iter().map(|&i| self.pred_mean[i]).collect(),
            params: self.params.clone(),
        })
    }
}

/// `p[label]` minus the largest other entry.
pub fn margin(prob_row: &[f64], label: usize) -> Result<f64> {
    if prob_row.len() < 2 {
        return Err(domain("margin needs at least two classes"));
    }
    if label >= prob_row.len() {
        return Err(domain(format!("label {label} out of range for {} classes", prob_row.len())));
    }
    let other = prob_row
        .iter()
        .enumerate()
        .filter(|&(c, _)| c != label)
        .map(|(_, &p)| p)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(prob_row[label] - other)
}

fn row_margin(row: &[f64], label: usize) -> f64 {
    let mut other = f64::NEG_INFINITY;
    for (c, &p) in row.iter().enumerate() {
        if c != label && p > other {
            other = p;
        }
    }
    row[label] - other
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (c, &p) in row.iter().enumerate().skip(1) {
        if p > row[best] {
            best = c;
        }
    }
    best
}

// Per-example kernels. `traj` holds one example's epochs back to back,
// `n_classes` values per epoch. They return `(score, pred_mean)`.

/// AUM of one trajectory.
pub fn aum_example(traj: &[f64], n_classes: usize, label: usize) -> (f64, f64) {
    let t = (traj.len() / n_classes) as f64;
    let mut m = 0.0;
    let mut p = 0.0;
    for row in traj.chunks_exact(n_classes) {
        m += row_margin(row, label);
        p += row[label];
    }
    (m / t, p / t)
}

/// DUAL of one trajectory; `window >= 2` and `window <= T` are the caller's
/// responsibility.
pub fn dual_example(traj: &[f64], n_classes: usize, label: usize, window: usize, gamma: f64) -> (f64, f64) {
    let p: Vec<f64> = traj.chunks_exact(n_classes).map(|row| row[label]).collect();
    let t = p.len();
    let n_windows = t - window + 1;
    let total: f64 = (0..n_windows)
        .map(|k| {
            let (mean, std) = window_stats(&p[k..k + window]);
            let u = if gamma == 1.0 { std } else { std.powf(gamma) };
            (1.0 - mean) * u
        })
        .sum();
    (total / n_windows as f64, p.iter().sum::<f64>() / t as f64)
}

// Mean and sample standard deviation, computed on values shifted by the
// first element so a constant window gives exactly zero spread.
fn window_stats(w: &[f64]) -> (f64, f64) {
    let shift = w[0];
    let n = w.len() as f64;
    let d_mean = w.iter().map(|&x| x - shift).sum::<f64>() / n;
    let ss: f64 = w.iter().map(|&x| (x - shift - d_mean).powi(2)).sum();
    (shift + d_mean, (ss / (n - 1.0)).sqrt())
}

/// Forgetting events of one trajectory.
pub fn forgetting_example(traj: &[f64], n_classes: usize, label: usize) -> (f64, f64) {
    let t = (traj.len() / n_classes) as f64;
    let mut events = 0u32;
    let mut prev_correct = false;
    let mut p = 0.0;
    for row in traj.chunks_exact(n_classes) {
        let correct = argmax(row) == label;
        if prev_correct && !correct {
            events += 1;
        }
        prev_correct = correct;
        p += row[label];
    }
    (events as f64, p / t)
}

/// EL2N of one trajectory over its first `n_early` epochs.
pub fn el2n_example(traj: &[f64], n_classes: usize, label: usize, n_early: usize) -> (f64, f64) {
    let mut norm = 0.0;
    let mut p = 0.0;
    for row in traj.chunks_exact(n_classes).take(n_early) {
        let sq: f64 = row
            .iter()
            .enumerate()
            .map(|(k, &v)| {
                let target = if k == label { 1.0 } else { 0.0 };
                (v - target).powi(2)
            })
            .sum();
        norm += sq.sqrt();
        p += row[label];
    }
    (norm / n_early as f64, p / n_early as f64)
}

fn check_pair(log: &TrajectoryLog, pool: &LabelPool) -> Result<()> {
    if log.n_examples() != pool.len() {
        return Err(dimension(format!(
            "log has {} examples, pool has {}",
            log.n_examples(),
            pool.len()
        )));
    }
    if log.n_classes() != pool.n_classes() {
        return Err(dimension(format!(
            "log has {} classes, pool has {}",
            log.n_classes(),
            pool.n_classes()
        )));
    }
    Ok(())
}

/// Runs a kernel over every example in parallel; output order follows
/// example order regardless of worker count.
fn per_example<F>(log: &TrajectoryLog, pool: &LabelPool, f: F) -> (Vec<f64>, Vec<f64>)
where
    F: Fn(&[f64], usize) -> (f64, f64) + Sync,
{
    let labels = pool.labels();
    (0..log.n_examples())
        .into_par_iter()
        .map(|i| {
            let traj: Vec<f64> = log.example(i).iter().map(|&v| v as f64).collect();
            f(&traj, labels[i])
        })
        .unzip()
}

/// Area under the margin: the margin of `ŷ` averaged over all stored epochs.
pub fn aum(log: &TrajectoryLog, pool: &LabelPool) -> Result<ScoreTable> {
    check_pair(log, pool)?;
    let c = log.n_classes();
    let (scores, pred_mean) = per_example(log, pool, |ex, y| aum_example(ex, c, y));
    Ok(ScoreTable {
        metric: Metric::Aum,
        scores,
        pred_mean,
        params: ScoreParams::for_log(log),
    })
}

/// Windowed difficulty-times-uncertainty score.
///
/// For every window of `window` consecutive epochs the window score is
/// `(1 - mean) * std^gamma` of `p(ŷ)` with the `window - 1` divisor; the
/// result is the mean over all `T - window + 1` windows.
pub fn dual(log: &TrajectoryLog, pool: &LabelPool, window: usize, gamma: f64) -> Result<ScoreTable> {
    check_pair(log, pool)?;
    let t = log.n_epochs();
    if window < 2 || window > t {
        return Err(domain(format!("window {window} outside 2..={t}")));
    }
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(domain(format!("gamma {gamma} outside (0, 1]")));
    }
    let c = log.n_classes();
    let (scores, pred_mean) = per_example(log, pool, |ex, y| dual_example(ex, c, y, window, gamma));
    let mut params = ScoreParams::for_log(log);
    params.window = Some(window);
    params.gamma = Some(gamma);
    Ok(ScoreTable {
        metric: Metric::Dual,
        scores,
        pred_mean,
        params,
    })
}

/// Number of forgetting events: epochs where the argmax moves away from
/// `ŷ` after having been `ŷ` the epoch before. Argmax ties go to the
/// lowest class index.
pub fn forgetting(log: &TrajectoryLog, pool: &LabelPool) -> Result<ScoreTable> {
    check_pair(log, pool)?;
    if log.n_epochs() < 2 {
        return Err(domain("forgetting needs at least two epochs"));
    }
    let c = log.n_classes();
    let (scores, pred_mean) = per_example(log, pool, |ex, y| forgetting_example(ex, c, y));
    Ok(ScoreTable {
        metric: Metric::Forgetting,
        scores,
        pred_mean,
        params: ScoreParams::for_log(log),
    })
}

/// Mean L2 norm of `p - onehot(ŷ)` over the first `n_early` epochs.
pub fn el2n(log: &TrajectoryLog, pool: &LabelPool, n_early: usize) -> Result<ScoreTable> {
    check_pair(log, pool)?;
    if n_early < 1 || n_early > log.n_epochs() {
        return Err(domain(format!("n_early {n_early} outside 1..={}", log.n_epochs())));
    }
    let c = log.n_classes();
    let (scores, pred_mean) = per_example(log, pool, |ex, y| el2n_example(ex, c, y, n_early));
    let mut params = ScoreParams::for_log(log);
    params.n_early = Some(n_early);
    Ok(ScoreTable {
        metric: Metric::El2n,
        scores,
        pred_mean,
        params,
    })
}

/// Metric selection with its parameters, as used by the pipeline.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoreSpec {
    pub metric: Metric,
    pub window: usize,
    pub gamma: f64,
    pub n_early: usize,
}

impl Default for ScoreSpec {
    fn default() -> Self {
        ScoreSpec {
            metric: Metric::Dual,
            window: DEFAULT_WINDOW,
            gamma: 1.0,
            n_early: DEFAULT_N_EARLY,
        }
    }
}

pub fn compute(log: &TrajectoryLog, pool: &LabelPool, spec: &ScoreSpec) -> Result<ScoreTable> {
    match spec.metric {
        Metric::Aum => aum(log, pool),
        Metric::Dual => dual(log, pool, spec.window, spec.gamma),
        Metric::Forgetting => forgetting(log, pool),
        Metric::El2n => el2n(log, pool, spec.n_early.min(log.n_epochs())),
    }
}

pub fn write_csv(table: &ScoreTable, path: impl AsRef<Path>) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(to_csv(table)?.as_bytes())?;
    Ok(())
}

pub fn to_csv(table: &ScoreTable) -> Result<String> {
    let p = &table.params;
    let mut head = format!(
        "# metric={} epochs={} first_epoch={} last_epoch={}",
        table.metric, p.epochs, p.first_epoch, p.last_epoch
    );
    if let Some(w) = p.window {
        head.push_str(&format!(" window={w}"));
    }
    if let Some(g) = p.gamma {
        head.push_str(&format!(" gamma={g}"));
    }
    if let Some(e) = p.n_early {
        head.push_str(&format!(" n_early={e}"));
    }
    head.push('\n');
    let mut w = csv::Writer::from_writer(head.into_bytes());
    w.write_record(["example_id", "score", "pred_mean"])?;
    for i in 0..table.len() {
        w.write_record([
            i.to_string(),
            table.scores[i].to_string(),
            table.pred_mean[i].to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<ScoreTable> {
    from_csv(&fs::read_to_string(path)?)
}

pub fn from_csv(text: &str) -> Result<ScoreTable> {
    let (head, body) = text
        .split_once('\n')
        .ok_or_else(|| Error::Format("score table is empty".into()))?;
    let kv = parse_comment_kv(head)?;
    let get = |k: &str| {
        kv.iter()
            .find(|(key, _)| key == k)
            .map(|(_, v)| v.as_str())
    };
    let need = |k: &str| get(k).ok_or_else(|| Error::Format(format!("score header lacks {k}")));
    let num = |k: &str| -> Result<usize> {
        need(k)?
            .parse()
            .map_err(|e| Error::Format(format!("{k}: {e}")))
    };
    let metric: Metric = need("metric")?.parse()?;
    let params = ScoreParams {
        epochs: num("epochs")?,
        first_epoch: num("first_epoch")? as u32,
        last_epoch: num("last_epoch")? as u32,
        window: get("window").map(|_| num("window")).transpose()?,
        gamma: get("gamma")
            .map(|g| g.parse::<f64>().map_err(|e| Error::Format(format!("gamma: {e}"))))
            .transpose()?,
        n_early: get("n_early").map(|_| num("n_early")).transpose()?,
    };
    let mut rdr = csv::Reader::from_reader(body.as_bytes());
    let mut scores = Vec::new();
    let mut pred_mean = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != 3 {
            return Err(Error::Format(format!("score row {row} has {} fields", rec.len())));
        }
        let id: usize = rec[0]
            .parse()
            .map_err(|e| Error::Format(format!("row {row} example_id: {e}")))?;
        if id != row {
            return Err(Error::Format(format!("row {row} has example_id {id}")));
        }
        scores.push(parse_f64(&rec[1], row)?);
        pred_mean.push(parse_f64(&rec[2], row)?);
    }
    Ok(ScoreTable {
        metric,
        scores,
        pred_mean,
        params,
    })
}

fn parse_f64(s: &str, row: usize) -> Result<f64> {
    s.parse()
        .map_err(|e| Error::Format(format!("row {row}: {s:?}: {e}")))
}

/// Parses a `# key=value key=value` header line.
pub(crate) fn parse_comment_kv(line: &str) -> Result<Vec<(String, String)>> {
    let rest = line
        .trim()
        .strip_prefix('#')
        .ok_or_else(|| Error::Format(format!("expected '#' header, got {line:?}")))?;
    rest.split_whitespace()
        .map(|tok| {
            tok.split_once('=')
                .map(|(k, v)| (k.to_owned(), v.to_owned()))
                .ok_or_else(|| Error::Format(format!("bad header token {tok:?}")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    fn log_from(rows: &[&[f32]], c: usize) -> TrajectoryLog {
        let probs: Vec<f32> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        let t = rows.len();
        TrajectoryLog::new(1, t, c, probs, (1..=t as u32).collect(), "t").unwrap()
    }

    fn label_traj(p: &[f32]) -> TrajectoryLog {
        let rows: Vec<[f32; 2]> = p.iter().map(|&v| [v, 1.0 - v]).collect();
        let refs: Vec<&[f32]> = rows.iter().map(|r| &r[..]).collect();
        log_from(&refs, 2)
    }

    fn pool1(label: usize, c: usize) -> LabelPool {
        LabelPool::new(vec![label], vec![false], None, c).unwrap()
    }

    #[test]
    fn margin_cases() {
        assert_close(margin(&[0.5, 0.3, 0.2], 0).unwrap(), 0.2, 1e-12);
        assert_eq!(margin(&[0.25; 4], 3).unwrap(), 0.0);
        assert_eq!(margin(&[0.0, 1.0], 0).unwrap(), -1.0);
        assert!(margin(&[0.5, 0.5], 2).is_err());
    }

    #[test]
    fn aum_hand_case() {
        let log = log_from(&[&[0.5, 0.3, 0.2], &[0.7, 0.2, 0.1], &[0.9, 0.05, 0.05]], 3);
        let t = aum(&log, &pool1(0, 3)).unwrap();
        // margins computed from f32-stored probabilities
        assert_close(t.scores[0], 31.0 / 60.0, 1e-7);
        let exact = aum_example(&[0.5, 0.3, 0.2, 0.7, 0.2, 0.1, 0.9, 0.05, 0.05], 3, 0);
        assert_close(exact.0, 31.0 / 60.0, 1e-12);
        assert_close(t.pred_mean[0], 0.7, 1e-7);
    }

    #[test]
    fn aum_extremes() {
        let uniform = log_from(&[&[0.5, 0.5], &[0.5, 0.5]], 2);
        assert_eq!(aum(&uniform, &pool1(1, 2)).unwrap().scores[0], 0.0);
        let onehot = log_from(&[&[0.0, 1.0], &[0.0, 1.0]], 2);
        assert_eq!(aum(&onehot, &pool1(1, 2)).unwrap().scores[0], 1.0);
    }

    #[test]
    fn dual_constant_and_certain() {
        let t = dual(&label_traj(&[0.3; 8]), &pool1(0, 2), 3, 0.5).unwrap();
        assert_eq!(t.scores[0], 0.0);
        let t = dual(&label_traj(&[1.0; 8]), &pool1(0, 2), 3, 1.0).unwrap();
        assert_eq!(t.scores[0], 0.0);
    }

    #[test]
    fn dual_rejects_bad_params() {
        let log = label_traj(&[0.2, 0.4, 0.6]);
        assert!(dual(&log, &pool1(0, 2), 1, 1.0).is_err());
        assert!(dual(&log, &pool1(0, 2), 4, 1.0).is_err());
        assert!(dual(&log, &pool1(0, 2), 2, 0.0).is_err());
        assert!(dual(&log, &pool1(0, 2), 2, 1.5).is_err());
    }

    #[test]
    fn forgetting_counts_transitions() {
        let right = [0.9f32, 0.1];
        let wrong = [0.1f32, 0.9];
        let log = log_from(&[&right, &wrong, &right, &wrong], 2);
        assert_eq!(forgetting(&log, &pool1(0, 2)).unwrap().scores[0], 2.0);
        let log = log_from(&[&right, &right, &right], 2);
        assert_eq!(forgetting(&log, &pool1(0, 2)).unwrap().scores[0], 0.0);
        let log = log_from(&[&wrong, &wrong], 2);
        assert_eq!(forgetting(&log, &pool1(0, 2)).unwrap().scores[0], 0.0);
        // a tie resolves to class 0, so label 1 is never "learned"
        let tie = [0.5f32, 0.5];
        let log = log_from(&[&tie, &wrong, &tie], 2);
        assert_eq!(forgetting(&log, &pool1(1, 2)).unwrap().scores[0], 1.0);
        assert!(forgetting(&log_from(&[&tie], 2), &pool1(0, 2)).is_err());
    }

    #[test]
    fn el2n_cases() {
        let log = log_from(&[&[0.5, 0.5]], 2);
        assert_close(el2n(&log, &pool1(0, 2), 1).unwrap().scores[0], 0.5f64.sqrt(), 1e-12);
        let log = log_from(&[&[1.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]], 2);
        assert_eq!(el2n(&log, &pool1(0, 2), 2).unwrap().scores[0], 0.0);
        assert!(el2n(&log, &pool1(0, 2), 0).is_err());
        assert!(el2n(&log, &pool1(0, 2), 4).is_err());
    }

    #[test]
    fn dimension_mismatch() {
        let log = label_traj(&[0.2, 0.4]);
        let pool = LabelPool::new(vec![0, 1], vec![false; 2], None, 2).unwrap();
        assert!(matches!(aum(&log, &pool), Err(Error::Dimension(_))));
        let pool3 = pool1(0, 3);
        assert!(matches!(aum(&log, &pool3), Err(Error::Dimension(_))));
    }

    #[test]
    fn csv_round_trip() {
        let log = label_traj(&[0.2, 0.4, 0.6, 0.61, 0.9]);
        let table = dual(&log, &pool1(0, 2), 3, 0.5).unwrap();
        let back = from_csv(&to_csv(&table).unwrap()).unwrap();
        assert_eq!(back, table);
        let table = el2n(&log, &pool1(1, 2), 2).unwrap();
        assert_eq!(from_csv(&to_csv(&table).unwrap()).unwrap(), table);
    }
}
