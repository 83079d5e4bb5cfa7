use proptest::prelude::*;

use semiprune::config::PipelineConfig;
use semiprune::dynamics::{decode, encode, LabelPool, LabelRecord, TrajectoryLog};
use semiprune::rng::keep_count;
use semiprune::scoring::{self, Metric, ScoreParams, ScoreTable};
use semiprune::selection;
use semiprune::tuning::split_pool;

/// Normalized rows from raw positive weights.
fn log_from(n: usize, t: usize, c: usize, raw: &[f64]) -> TrajectoryLog {
    let mut probs = Vec::with_capacity(n * t * c);
    for row in raw.chunks_exact(c) {
        let s: f64 = row.iter().sum();
        probs.extend(row.iter().map(|v| (v / s) as f32));
    }
    TrajectoryLog::new(n, t, c, probs, (1..=t as u32).collect(), "prop").unwrap()
}

fn arb_log() -> impl Strategy<Value = (TrajectoryLog, Vec<usize>)> {
    (1usize..8, 2usize..12, 2usize..6).prop_flat_map(|(n, t, c)| {
        (
            prop::collection::vec(0.01f64..1.0, n * t * c),
            prop::collection::vec(0..c, n),
        )
            .prop_map(move |(raw, labels)| (log_from(n, t, c, &raw), labels))
    })
}

fn pool_of(labels: &[usize], c: usize) -> LabelPool {
    LabelPool::new(labels.to_vec(), vec![false; labels.len()], None, c).unwrap()
}

fn table(scores: Vec<f64>, pred_mean: Vec<f64>) -> ScoreTable {
    ScoreTable {
        metric: Metric::Aum,
        scores,
        pred_mean,
        params: ScoreParams { epochs: 1, first_epoch: 1, last_epoch: 1, window: None, gamma: None, n_early: None },
    }
}

proptest! {
    #[test]
    fn trj_round_trip((log, labels) in arb_log(), with_labels in any::<bool>()) {
        let log = if with_labels {
            let recs = labels
                .iter()
                .map(|&l| LabelRecord { label: Some(l as u32), is_ground_truth: l % 2 == 0, ground_truth: None })
                .collect();
            log.with_labels(recs).unwrap()
        } else {
            log
        };
        let bytes = encode(&log).unwrap();
        prop_assert_eq!(decode(&bytes).unwrap(), log);
    }

    #[test]
    fn slices_compose((log, _) in arb_log(), a in 0usize..100, b in 0usize..100, c in 0usize..100) {
        let t = log.n_epochs();
        let (first, last) = (1 + a % t, 1 + a % t + b % (t - a % t));
        let outer = log.slice_epochs(first, last).unwrap();
        let tt = outer.n_epochs();
        let (f2, l2) = (1 + c % tt, tt);
        let nested = outer.slice_epochs(f2, l2).unwrap();
        let direct = log.slice_epochs(first + f2 - 1, first + l2 - 1).unwrap();
        prop_assert_eq!(nested, direct);
    }

    #[test]
    fn aum_rises_with_label_probability((log, labels) in arb_log(), i in 0usize..8, e in 0usize..12, bump in 0.05f64..0.9) {
        let (n, t, c) = (log.n_examples(), log.n_epochs(), log.n_classes());
        let (i, e) = (i % n, e % t);
        let y = labels[i];
        let base = scoring::aum(&log, &pool_of(&labels, c)).unwrap().scores[i];
        // Move mass toward the labeled class in one epoch.
        let mut probs: Vec<f64> = log.probs().iter().map(|&v| v as f64).collect();
        let off = (i * t + e) * c;
        for k in 0..c {
            let p = &mut probs[off + k];
            *p = if k == y { *p + bump * (1.0 - *p) } else { *p * (1.0 - bump) };
        }
        let raised = log_from(n, t, c, &probs);
        let after = scoring::aum(&raised, &pool_of(&labels, c)).unwrap().scores[i];
        prop_assert!(after >= base - 1e-6, "{} < {}", after, base);
    }

    #[test]
    fn dual_is_permutation_invariant((log, labels) in arb_log(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let (n, t, c) = (log.n_examples(), log.n_epochs(), log.n_classes());
        let j = 2.max(t / 2);
        let base = scoring::dual(&log, &pool_of(&labels, c), j, 1.0).unwrap().scores;
        let mut g = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut g);
        let mut classes: Vec<usize> = (0..c).collect();
        classes.shuffle(&mut g);
        // Example i of the permuted log is example order[i]; class k moves to classes[k].
        let mut probs = vec![0f32; n * t * c];
        for (new_i, &old_i) in order.iter().enumerate() {
            for e in 0..t {
                let row = log.row(old_i, e);
                for k in 0..c {
                    probs[(new_i * t + e) * c + classes[k]] = row[k];
                }
            }
        }
        let permuted = TrajectoryLog::new(n, t, c, probs, (1..=t as u32).collect(), "p").unwrap();
        let new_labels: Vec<usize> = order.iter().map(|&o| classes[labels[o]]).collect();
        let got = scoring::dual(&permuted, &pool_of(&new_labels, c), j, 1.0).unwrap().scores;
        for (new_i, &old_i) in order.iter().enumerate() {
            prop_assert!((got[new_i] - base[old_i]).abs() < 1e-12);
        }
    }

    #[test]
    fn selectors_keep_exact_count(
        scores in prop::collection::vec(0.0f64..1.0, 1..200),
        r in 0.0f64..0.95,
        seed in any::<u64>(),
    ) {
        let n = scores.len();
        let pm: Vec<f64> = scores.iter().map(|s| 1.0 - s).collect();
        let t = table(scores, pm);
        let k = keep_count(n, r);
        let plans = [
            selection::double_end_select(&t, r, r / 3.0).unwrap(),
            selection::top_k_select(&t, r).unwrap(),
            selection::bottom_k_select(&t, r).unwrap(),
            selection::random_select(n, r, seed).unwrap(),
            selection::beta_select(&t, r, 16.0, 4.0, 0.1, seed).unwrap(),
        ];
        for p in plans {
            let mut s = p.selected.clone();
            s.sort_unstable();
            s.dedup();
            prop_assert_eq!(s.len(), k);
            prop_assert_eq!(p.selected.len(), k);
            prop_assert!(s.iter().all(|&i| i < n));
        }
    }

    #[test]
    fn deterministic_selectors_depend_only_on_rank(
        scores in prop::collection::vec(-3.0f64..3.0, 1..150),
        r in 0.0f64..0.95,
    ) {
        let pm = vec![0.5; scores.len()];
        let base = table(scores.clone(), pm.clone());
        let mapped = table(scores.iter().map(|x| x.exp() * 2.0 + 1.0).collect(), pm);
        prop_assert_eq!(
            selection::double_end_select(&base, r, r / 2.0).unwrap().selected,
            selection::double_end_select(&mapped, r, r / 2.0).unwrap().selected
        );
        prop_assert_eq!(selection::top_k_select(&base, r).unwrap().selected, selection::top_k_select(&mapped, r).unwrap().selected);
        prop_assert_eq!(selection::bottom_k_select(&base, r).unwrap().selected, selection::bottom_k_select(&mapped, r).unwrap().selected);
    }

    #[test]
    fn beta_mean_follows_law(r in 0.0f64..=1.0, mu in 0.01f64..0.99, conc in 2.0f64..64.0, c_d in 1.0f64..12.0) {
        let bp = selection::beta_params(r, mu, conc, c_d).unwrap();
        let law = 1.0 - (1.0 - mu) * (1.0 - r.powf(c_d));
        prop_assert!((bp.mean() - law).abs() < 1e-12);
        prop_assert!(bp.alpha_r > 0.0 && bp.beta_r > 0.0);
        prop_assert!((bp.alpha_r + bp.beta_r - conc).abs() < 1e-9);
    }

    #[test]
    fn keep_count_bounds(n in 0usize..100_000, r in 0.0f64..=1.0) {
        let k = keep_count(n, r);
        prop_assert!(k <= n);
        prop_assert!((k as f64 - n as f64 * (1.0 - r)).abs() <= 0.5 + 1e-9);
    }

    #[test]
    fn split_pool_partitions(n in 2usize..5000, fraction in 0.05f64..0.5, seed in any::<u64>()) {
        if let Ok(s) = split_pool(n, fraction, seed) {
            prop_assert_eq!(s.train.len() + s.validation.len(), n);
            prop_assert_eq!(s.validation.len(), (n as f64 * fraction).round() as usize);
            let mut all: Vec<usize> = s.train.iter().chain(&s.validation).copied().collect();
            all.sort_unstable();
            prop_assert!(all.iter().enumerate().all(|(i, &v)| i == v));
            prop_assert_eq!(split_pool(n, fraction, seed).unwrap(), s);
        }
    }

    #[test]
    fn config_text_round_trips(
        seed in any::<u64>(),
        ratio in 0.0f64..0.95,
        budget in 0.01f64..1.0,
        preset in prop::sample::select(vec!["clean", "long_tailed", "corrupted"]),
        metric in prop::sample::select(vec!["dual", "aum", "forgetting", "el2n"]),
    ) {
        let mut cfg = PipelineConfig::default();
        cfg.set("task.preset", preset).unwrap();
        cfg.set("seed", &seed.to_string()).unwrap();
        cfg.set("selection.ratio", &ratio.to_string()).unwrap();
        cfg.set("budget.fraction", &budget.to_string()).unwrap();
        cfg.set("score.metric", metric).unwrap();
        let back = PipelineConfig::from_text(&cfg.to_text()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}
