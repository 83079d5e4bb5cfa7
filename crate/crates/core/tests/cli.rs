use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "\
seed = 3
task.preset = clean
task.dim = 8
task.n_train = 400
task.n_validation_per_class = 5
task.n_test_per_class = 20
trainer.epochs = 6
score.T = 6
score.J = 3
tuning.enabled = false
tuning.T_grid = 3,6
";

fn semiprune(out: &Path, config: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_semiprune"))
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .unwrap()
}

fn ok(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn small_config(dir: &Path, extra: &str) -> std::path::PathBuf {
    let p = dir.join("small.cfg");
    fs::write(&p, format!("{SMALL}{extra}")).unwrap();
    p
}

#[test]
fn run_twice_is_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let la = ok(&semiprune(&a, &cfg, &["run"]));
    let lb = ok(&semiprune(&b, &cfg, &["run"]));
    assert_eq!(la.replace(a.to_str().unwrap(), ""), lb.replace(b.to_str().unwrap(), ""));
    for f in ["pool.csv", "dynamics.trj", "scores.csv", "plan.txt", "eval.txt"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn stages_chain_and_zero_ratio_keeps_everything() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "");
    let out = tmp.path().join("out");
    for stage in ["gen", "label", "trainlog", "score"] {
        ok(&semiprune(&out, &cfg, &[stage]));
    }
    ok(&semiprune(&out, &cfg, &["--ratio", "0", "select"]));
    let plan = semiprune::selection::read_plan(out.join("plan.txt")).unwrap();
    assert_eq!(plan.selected, (0..400).collect::<Vec<_>>());
    ok(&semiprune(&out, &cfg, &["--ratio", "0.5", "--method", "top_k", "select"]));
    let plan = semiprune::selection::read_plan(out.join("plan.txt")).unwrap();
    assert_eq!(plan.selected.len(), 200);
    ok(&semiprune(&out, &cfg, &["eval"]));
}

#[test]
fn mismatched_pool_exits_with_dimension_code() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "");
    let out = tmp.path().join("out");
    for stage in ["gen", "label", "trainlog"] {
        ok(&semiprune(&out, &cfg, &[stage]));
    }
    let other = tmp.path().join("other");
    for stage in ["gen", "label"] {
        ok(&semiprune(&other, &cfg, &["--set", "task.n_train=300", stage]));
    }
    fs::copy(other.join("pool.csv"), out.join("pool.csv")).unwrap();
    let o = semiprune(&out, &cfg, &["score"]);
    assert_eq!(o.status.code(), Some(6), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn bad_config_and_missing_input_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = small_config(tmp.path(), "selection.ratio = 1.5\n");
    let o = semiprune(tmp.path(), &bad, &["config"]);
    assert_eq!(o.status.code(), Some(9));

    let unknown = small_config(tmp.path(), "no.such_key = 1\n");
    assert_eq!(semiprune(tmp.path(), &unknown, &["config"]).status.code(), Some(9));

    let cfg = small_config(tmp.path(), "");
    let o = semiprune(&tmp.path().join("empty"), &cfg, &["score"]);
    assert_eq!(o.status.code(), Some(3));

    let o = Command::new(env!("CARGO_BIN_EXE_semiprune")).arg("frobnicate").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_prints_round_trippable_text() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "");
    let text = ok(&semiprune(tmp.path(), &cfg, &["--seed", "99", "config"]));
    let parsed = semiprune::config::PipelineConfig::from_text(&text).unwrap();
    assert_eq!(parsed.seed, 99);
    assert_eq!(parsed.task.n_train, 400);
}
