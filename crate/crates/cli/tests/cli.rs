use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use dmgr_core::manager::read_traces;

const TINY: &str = r#"{
  "corpus_size": 200,
  "manager": {"dim": 16, "embed": 8, "filters": 4},
  "train": {"epochs": 1, "episodes_per_epoch": 32, "batch_size": 8},
  "eval_episodes": 20
}"#;

fn dmgr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dmgr")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = dmgr(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_corpus_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a.json"), dir.path().join("b.json"), dir.path().join("c.json"));
    ok(&["gen-corpus", "--n", "60", "--seed", "4", "--out", s(&a)]);
    ok(&["gen-corpus", "--n", "60", "--seed", "4", "--out", s(&b)]);
    ok(&["gen-corpus", "--n", "60", "--seed", "5", "--out", s(&c)]);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
}

#[test]
fn configuration_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let missing = dir.path().join("missing.json");
    let r = dmgr(&["train", "--phase", "sl", "--config", s(&missing), "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(2));
    assert!(!r.stderr.is_empty());

    let r = dmgr(&["train", "--phase", "sl", "--bogus", "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(2));
    let r = dmgr(&["train", "--phase", "dagger", "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(2));

    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"corpus_size": 200, "learning_rate": 3}"#).unwrap();
    let r = dmgr(&["train", "--phase", "sl", "--config", s(&bad), "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(2), "unknown keys are rejected");

    let r = dmgr(&["eval", "--checkpoint", s(&missing), "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(2));
    fs::write(&bad, "{\"version\": 1, \"items\": [").unwrap();
    let r = dmgr(&["simulate", "--corpus", s(&bad), "--episodes", "1"]);
    assert_eq!(r.status.code(), Some(2));
    assert!(!ok(&["--help"]).stdout.is_empty());
}

#[test]
fn train_eval_compare_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);
    fs::write(p("tiny.json"), TINY).unwrap();
    let config = p("tiny.json");
    let (corpus, run, ev, ev2) = (p("corpus.json"), p("run"), p("ev"), p("ev2"));
    ok(&["gen-corpus", "--config", s(&config), "--out", s(&corpus)]);
    let common = ["--config", s(&config), "--corpus", s(&corpus)];

    let mut args = vec!["train", "--phase", "sl", "--out", s(&run)];
    args.extend(common);
    ok(&args);
    for f in ["metrics-sl.csv", "sl-epoch001.ckpt", "sl.ckpt", "manifest-sl.json"] {
        assert!(p("run").join(f).exists(), "{f}");
    }
    let metrics = fs::read_to_string(p("run/metrics-sl.csv")).unwrap();
    assert_eq!(metrics.lines().next(), Some("phase,epoch,batch,loss,mean_percentile"));
    assert_eq!(metrics.lines().count(), 1 + 32 / 8);

    let sl = p("run/sl.ckpt");
    let mut args = vec!["train", "--phase", "mbpi", "--epochs", "1", "--init", s(&sl), "--out", s(&run)];
    args.extend(common);
    ok(&args);

    let mbpi = p("run/mbpi.ckpt");
    for (ckpt, id) in [(s(&sl), "sl"), (s(&mbpi), "mbpi")] {
        let mut args = vec!["eval", "--checkpoint", ckpt, "--id", id, "--out", s(&ev)];
        args.extend(common);
        let out = ok(&args);
        assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 5);
        let curve = fs::read_to_string(p(&format!("ev/curve-{id}.csv"))).unwrap();
        assert_eq!(curve.lines().next(), Some("turn,mean,std,monotonic"));
        assert_eq!(curve.lines().count(), 6);
    }

    let csv_path = p("cmp.csv");
    ok(&["compare", s(&p("ev/eval-sl.json")), s(&p("ev/eval-mbpi.json")), "--out", s(&csv_path)]);
    let csv = fs::read_to_string(&csv_path).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("config,turn,mean,std,episodes,diff_from_first"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 10);
    for id in ["sl", "mbpi"] {
        let mine: Vec<_> = rows.iter().filter(|r| r[0] == id).collect();
        assert_eq!(mine.len(), 5);
        assert!(mine.iter().all(|r| r[4] == "20"));
    }
    assert!(rows.iter().filter(|r| r[0] == "sl").all(|r| r[5].parse::<f64>().unwrap() == 0.0));

    // eval is a pure function of its inputs
    let mut args = vec!["eval", "--checkpoint", s(&sl), "--id", "sl", "--out", s(&ev2)];
    args.extend(common);
    ok(&args);
    assert_eq!(fs::read(p("ev/curve-sl.csv")).unwrap(), fs::read(p("ev2/curve-sl.csv")).unwrap());
}

#[test]
fn simulate_writes_replayable_traces() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("tiny.json");
    fs::write(&config, TINY).unwrap();
    let out = dir.path().join("traces.jsonl");
    ok(&["simulate", "--config", s(&config), "--episodes", "6", "--out", s(&out)]);
    let traces = read_traces(std::io::BufReader::new(fs::File::open(&out).unwrap())).unwrap();
    assert_eq!(traces.len(), 6);
    assert!(traces.iter().all(|t| t.rewards().len() == 5));

    let stdout = ok(&["simulate", "--config", s(&config), "--episodes", "6"]).stdout;
    assert_eq!(stdout, fs::read(&out).unwrap());
}
