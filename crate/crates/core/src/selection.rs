//! Coreset selection from a score table.
//!
//! All selectors keep exactly `round(n * (1 - r))` examples (half away from
//! zero) and break score ties by ascending example index.

use std::cmp::Ordering;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::index;
use statrs::distribution::{Beta, Continuous};

use crate::error::{domain, Error, Result};
use crate::rng::{keep_count, rng};
use crate::scoring::ScoreTable;

/// Concentration of the Beta sampler; kept fixed, not tuned.
pub const DEFAULT_CONCENTRATION: f64 = 16.0;
/// Fraction of top-scored examples whose prediction mean anchors `mu_D`.
pub const DEFAULT_MU_FRACTION: f64 = 0.01;
/// Lower bound on `beta_r`, which is exactly zero at r = 1.
pub const BETA_FLOOR: f64 = 1e-12;
const MU_CLAMP: f64 = 1e-6;
const PRED_CLAMP: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SelectionMethod {
    DoubleEnd,
    Beta,
    TopK,
    BottomK,
    Random,
}

impl SelectionMethod {
    pub fn name(self) -> &'static str {
        match self {
            SelectionMethod::DoubleEnd => "double_end",
            SelectionMethod::Beta => "beta",
            SelectionMethod::TopK => "top_k",
            SelectionMethod::BottomK => "bottom_k",
            SelectionMethod::Random => "random",
        }
    }
}

impl fmt::Display for SelectionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SelectionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "double_end" | "cutoff" | "aum_cutoff" => Ok(SelectionMethod::DoubleEnd),
            "beta" | "dual_beta" => Ok(SelectionMethod::Beta),
            "top_k" => Ok(SelectionMethod::TopK),
            "bottom_k" => Ok(SelectionMethod::BottomK),
            "random" => Ok(SelectionMethod::Random),
            other => Err(domain(format!("unknown selection method {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SelectionParams {
    pub cutoff_ratio: Option<f64>,
    pub concentration: Option<f64>,
    pub c_d: Option<f64>,
    pub mu_fraction: Option<f64>,
    pub mu_d: Option<f64>,
    pub alpha_r: Option<f64>,
    pub beta_r: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SelectionPlan {
    pub method: SelectionMethod,
    pub pruning_ratio: f64,
    pub n_examples: usize,
    pub params: SelectionParams,
    /// Ascending, unique.
    pub selected: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BetaParams {
    pub alpha_r: f64,
    pub beta_r: f64,
    pub mu_d: f64,
}

impl BetaParams {
    pub fn mean(&self) -> f64 {
        self.alpha_r / (self.alpha_r + self.beta_r)
    }
}

fn check_ratio(r: f64) -> Result<()> {
    if !(0.0..1.0).contains(&r) {
        return Err(domain(format!("pruning ratio {r} outside [0, 1)")));
    }
    Ok(())
}

fn check_finite(table: &ScoreTable) -> Result<()> {
    if table.is_empty() {
        return Err(domain("empty score table"));
    }
    if let Some(i) = table.scores.iter().position(|s| !s.is_finite()) {
        return Err(domain(format!("score of example {i} is not finite")));
    }
    Ok(())
}

/// Example indices sorted by ascending score, ties by index.
pub fn ascending_order(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    order
}

fn descending_order(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| match scores[b].total_cmp(&scores[a]) {
        Ordering::Equal => a.cmp(&b),
        o => o,
    });
    order
}

fn sorted(mut v: Vec<usize>) -> Vec<usize> {
    v.sort_unstable();
    v
}

/// Keeps a contiguous middle interval of the ascending score ranking: the
/// `round(cutoff_ratio * n)` lowest-ranked examples are discarded, then the
/// next `round(n * (1 - r))` are kept.
pub fn double_end_select(table: &ScoreTable, r: f64, cutoff_ratio: f64) -> Result<SelectionPlan> {
    check_ratio(r)?;
    check_finite(table)?;
    if !(0.0..=r).contains(&cutoff_ratio) {
        return Err(domain(format!("cutoff ratio {cutoff_ratio} outside [0, {r}]")));
    }
    let n = table.len();
    let keep = keep_count(n, r);
    let start = ((cutoff_ratio * n as f64).round() as usize).min(n - keep);
    let order = ascending_order(&table.scores);
    Ok(SelectionPlan {
        method: SelectionMethod::DoubleEnd,
        pruning_ratio: r,
        n_examples: n,
        params: SelectionParams {
            cutoff_ratio: Some(cutoff_ratio),
            ..Default::default()
        },
        selected: sorted(order[start..start + keep].to_vec()),
    })
}

/// Beta parameters for pruning ratio `r`:
/// `beta_r = C (1 - mu_D)(1 - r^c_D)`, `alpha_r = C - beta_r`.
pub fn beta_params(r: f64, mu_d: f64, concentration: f64, c_d: f64) -> Result<BetaParams> {
    if !(0.0..=1.0).contains(&r) {
        return Err(domain(format!("pruning ratio {r} outside [0, 1]")));
    }
    if !(mu_d > 0.0 && mu_d < 1.0) {
        return Err(domain(format!("mu_D {mu_d} outside (0, 1)")));
    }
    if !(concentration > 0.0 && concentration.is_finite()) {
        return Err(domain(format!("concentration {concentration} must be positive")));
    }
    if !(c_d >= 1.0 && c_d.is_finite()) {
        return Err(domain(format!("c_D {c_d} must be >= 1")));
    }
    let beta_r = (concentration * (1.0 - mu_d) * (1.0 - r.powf(c_d))).max(BETA_FLOOR);
    Ok(BetaParams {
        alpha_r: concentration - beta_r,
        beta_r,
        mu_d,
    })
}

/// Mean prediction of the top `ceil(q * n)` examples by score.
pub fn estimate_mu_d(table: &ScoreTable, q: f64) -> Result<f64> {
    if table.is_empty() {
        return Err(domain("empty score table"));
    }
    if !(q > 0.0 && q <= 1.0) {
        return Err(domain(format!("mu_D fraction {q} outside (0, 1]")));
    }
    let n = table.len();
    let k = ((q * n as f64 - 1e-9).ceil() as usize).clamp(1, n);
    let order = descending_order(&table.scores);
    let mean = order[..k].iter().map(|&i| table.pred_mean[i]).sum::<f64>() / k as f64;
    Ok(mean.clamp(MU_CLAMP, 1.0 - MU_CLAMP))
}

/// Sampling weight of each example: Beta density at its prediction mean
/// times its score.
pub fn beta_weights(table: &ScoreTable, params: &BetaParams) -> Result<Vec<f64>> {
    let dist = Beta::new(params.alpha_r, params.beta_r)
        .map_err(|e| domain(format!("Beta({}, {}): {e}", params.alpha_r, params.beta_r)))?;
    Ok(table
        .scores
        .iter()
        .zip(&table.pred_mean)
        .map(|(&s, &p)| dist.pdf(p.clamp(PRED_CLAMP, 1.0 - PRED_CLAMP)) * s)
        .collect())
}

/// Draws `k` distinct indices with probability proportional to `weights`,
/// one at a time with removal. Once no positive weight remains, the rest is
/// filled uniformly from the unselected indices.
pub fn weighted_sample_without_replacement(weights: &[f64], k: usize, rng: &mut impl rand::Rng) -> Vec<usize> {
    let n = weights.len();
    let mut w = weights.to_vec();
    let mut taken = vec![false; n];
    let mut out = Vec::with_capacity(k);
    while out.len() < k {
        let total: f64 = w.iter().sum();
        if total <= 0.0 {
            break;
        }
        let u = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = None;
        for (i, &wi) in w.iter().enumerate() {
            if wi > 0.0 {
                acc += wi;
                pick = Some(i);
                if u < acc {
                    break;
                }
            }
        }
        let i = pick.expect("positive total implies a positive weight");
        taken[i] = true;
        w[i] = 0.0;
        out.push(i);
    }
    if out.len() < k {
        let rest: Vec<usize> = (0..n).filter(|&i| !taken[i]).collect();
        for j in index::sample(rng, rest.len(), k - out.len()) {
            out.push(rest[j]);
        }
    }
    out
}

pub fn beta_select(
    table: &ScoreTable,
    r: f64,
    concentration: f64,
    c_d: f64,
    q: f64,
    seed: u64,
) -> Result<SelectionPlan> {
    check_ratio(r)?;
    check_finite(table)?;
    if let Some(i) = table.scores.iter().position(|&s| s < 0.0) {
        return Err(domain(format!("Beta sampling needs non-negative scores (example {i})")));
    }
    let n = table.len();
    let mu_d = estimate_mu_d(table, q)?;
    let bp = beta_params(r, mu_d, concentration, c_d)?;
    let keep = keep_count(n, r);
    let selected = if keep == n {
        (0..n).collect()
    } else {
        let weights = beta_weights(table, &bp)?;
        let mut g = rng(seed);
        sorted(weighted_sample_without_replacement(&weights, keep, &mut g))
    };
    Ok(SelectionPlan {
        method: SelectionMethod::Beta,
        pruning_ratio: r,
        n_examples: n,
        params: SelectionParams {
            concentration: Some(concentration),
            c_d: Some(c_d),
            mu_fraction: Some(q),
            mu_d: Some(mu_d),
            alpha_r: Some(bp.alpha_r),
            beta_r: Some(bp.beta_r),
            seed: Some(seed),
            ..Default::default()
        },
        selected,
    })
}

/// Keeps the highest-scored examples.
pub fn top_k_select(table: &ScoreTable, r: f64) -> Result<SelectionPlan> {
    check_ratio(r)?;
    check_finite(table)?;
    let keep = keep_count(table.len(), r);
    let order = descending_order(&table.scores);
    Ok(rank_plan(SelectionMethod::TopK, table.len(), r, order[..keep].to_vec()))
}

/// Keeps the lowest-scored examples.
pub fn bottom_k_select(table: &ScoreTable, r: f64) -> Result<SelectionPlan> {
    check_ratio(r)?;
    check_finite(table)?;
    let keep = keep_count(table.len(), r);
    let order = ascending_order(&table.scores);
    Ok(rank_plan(SelectionMethod::BottomK, table.len(), r, order[..keep].to_vec()))
}

fn rank_plan(method: SelectionMethod, n: usize, r: f64, picked: Vec<usize>) -> SelectionPlan {
    SelectionPlan {
        method,
        pruning_ratio: r,
        n_examples: n,
        params: SelectionParams::default(),
        selected: sorted(picked),
    }
}

/// Uniform sample of `round(n * (1 - r))` examples.
pub fn random_select(n: usize, r: f64, seed: u64) -> Result<SelectionPlan> {
    check_ratio(r)?;
    if n == 0 {
        return Err(domain("cannot select from zero examples"));
    }
    let keep = keep_count(n, r);
    let selected = if keep == n {
        (0..n).collect()
    } else {
        sorted(index::sample(&mut rng(seed), n, keep).into_vec())
    };
    Ok(SelectionPlan {
        method: SelectionMethod::Random,
        pruning_ratio: r,
        n_examples: n,
        params: SelectionParams {
            seed: Some(seed),
            ..Default::default()
        },
        selected,
    })
}

/// Full parameter set for any selector, used by the pipeline and CLI.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SelectorConfig {
    pub method: SelectionMethod,
    pub cutoff_ratio: f64,
    pub concentration: f64,
    pub c_d: f64,
    pub mu_fraction: f64,
}

impl Default for SelectorConfig {
    fn default() -> Self {
        SelectorConfig {
            method: SelectionMethod::Beta,
            cutoff_ratio: 0.0,
            concentration: DEFAULT_CONCENTRATION,
            c_d: 4.0,
            mu_fraction: DEFAULT_MU_FRACTION,
        }
    }
}

pub fn select(table: &ScoreTable, r: f64, cfg: &SelectorConfig, seed: u64) -> Result<SelectionPlan> {
    match cfg.method {
        SelectionMethod::DoubleEnd => double_end_select(table, r, cfg.cutoff_ratio.min(r)),
        SelectionMethod::Beta => beta_select(table, r, cfg.concentration, cfg.c_d, cfg.mu_fraction, seed),
        SelectionMethod::TopK => top_k_select(table, r),
        SelectionMethod::BottomK => bottom_k_select(table, r),
        SelectionMethod::Random => random_select(table.len(), r, seed),
    }
}

pub fn to_text(plan: &SelectionPlan) -> String {
    let mut s = format!(
        "# method={}\n# ratio={}\n# n_examples={}\n",
        plan.method, plan.pruning_ratio, plan.n_examples
    );
    let p = &plan.params;
    let fields = [
        ("cutoff_ratio", p.cutoff_ratio),
        ("C", p.concentration),
        ("c_D", p.c_d),
        ("q", p.mu_fraction),
        ("mu_D", p.mu_d),
        ("alpha_r", p.alpha_r),
        ("beta_r", p.beta_r),
    ];
    for (k, v) in fields {
        if let Some(v) = v {
            s.push_str(&format!("# {k}={v}\n"));
        }
    }
    if let Some(seed) = p.seed {
        s.push_str(&format!("# seed={seed}\n"));
    }
    for i in &plan.selected {
        s.push_str(&format!("{i}\n"));
    }
    s
}

pub fn from_text(text: &str) -> Result<SelectionPlan> {
    let mut method = None;
    let mut ratio = None;
    let mut n_examples = None;
    let mut params = SelectionParams::default();
    let mut selected = Vec::new();
    let bad = |what: &str, e: &dyn fmt::Display| Error::Format(format!("selection {what}: {e}"));
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let (k, v) = rest
                .trim()
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("line {}: bad header {line:?}", ln + 1)))?;
            let f = || v.parse::<f64>().map_err(|e| bad(k, &e));
            match k {
                "method" => method = Some(v.parse::<SelectionMethod>()?),
                "ratio" => ratio = Some(f()?),
                "n_examples" => n_examples = Some(v.parse::<usize>().map_err(|e| bad(k, &e))?),
                "cutoff_ratio" => params.cutoff_ratio = Some(f()?),
                "C" => params.concentration = Some(f()?),
                "c_D" => params.c_d = Some(f()?),
                "q" => params.mu_fraction = Some(f()?),
                "mu_D" => params.mu_d = Some(f()?),
                "alpha_r" => params.alpha_r = Some(f()?),
                "beta_r" => params.beta_r = Some(f()?),
                "seed" => params.seed = Some(v.parse::<u64>().map_err(|e| bad(k, &e))?),
                _ => return Err(Error::Format(format!("unknown selection header key {k:?}"))),
            }
        } else {
            selected.push(
                line.parse::<usize>()
                    .map_err(|e| Error::Format(format!("line {}: {e}", ln + 1)))?,
            );
        }
    }
    let n_examples = n_examples.ok_or_else(|| Error::Format("selection lacks n_examples".into()))?;
    if selected.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Format("selected indices not strictly ascending".into()));
    }
    if selected.last().is_some_and(|&i| i >= n_examples) {
        return Err(Error::Format("selected index out of range".into()));
    }
    Ok(SelectionPlan {
        method: method.ok_or_else(|| Error::Format("selection lacks method".into()))?,
        pruning_ratio: ratio.ok_or_else(|| Error::Format("selection lacks ratio".into()))?,
        n_examples,
        params,
        selected,
    })
}

pub fn write_plan(plan: &SelectionPlan, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_text(plan))?;
    Ok(())
}

pub fn read_plan(path: impl AsRef<Path>) -> Result<SelectionPlan> {
    from_text(&fs::read_to_string(path)?)
}
