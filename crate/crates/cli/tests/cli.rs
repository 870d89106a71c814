use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const QUICK: &str = r#"
synth = { clusters = 2, tasks = 8, len = 45, seed = 3 }

[train]
pretrain_epochs = 5
finetune_epochs = 5
hidden = [16, 16, 8]
"#;

fn nmt(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nmt"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn quick_config(dir: &Path) -> PathBuf {
    let p = dir.join("quick.toml");
    fs::write(&p, QUICK).unwrap();
    p
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn files(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

#[test]
fn repeated_runs_write_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path());
    let cfg = cfg.to_str().unwrap();
    for (out, extra) in [("a", None), ("b", None), ("c", Some("--sequential"))] {
        let mut args = vec!["run", "--config", cfg, "--seeds", "2", "--out", out];
        args.extend(extra);
        let o = nmt(&args, dir.path());
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let a = files(&dir.path().join("a"));
    assert!(a.contains(&PathBuf::from("seed-1/events.jsonl")));
    assert!(a.contains(&PathBuf::from("aggregate.csv")));
    for other in ["b", "c"] {
        assert_eq!(files(&dir.path().join(other)), a);
        for f in &a {
            if f.ends_with("config.toml") {
                continue;
            }
            let x = fs::read(dir.path().join("a").join(f)).unwrap();
            let y = fs::read(dir.path().join(other).join(f)).unwrap();
            assert!(x == y, "{other}/{} differs", f.display());
        }
    }
}

#[test]
fn unknown_metric_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = nmt(&["run", "--sim", "bogus"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let msg = stderr(&o);
    for name in ["rand", "medae", "mgd", "rmse"] {
        assert!(msg.contains(name), "{msg}");
    }
}

#[test]
fn unknown_config_key_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.toml");
    fs::write(&p, "[train]\nlearning_rate = 0.1\n").unwrap();
    let o = nmt(&["run", "--config", p.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("learning_rate"), "{}", stderr(&o));
}

#[test]
fn missing_report_path_is_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = nmt(&["report", "nowhere/report.json"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn report_merges_runs_and_recomputes_sigma() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path());
    let cfg = cfg.to_str().unwrap();
    for (seed, out) in [("0", "r0"), ("1", "r1")] {
        let o = nmt(&["run", "--config", cfg, "--seed", seed, "--out", out], dir.path());
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let o = nmt(&["report", "r0", "r1", "--out", "merged"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));

    let mean_of = |d: &str| -> f64 {
        let text = fs::read_to_string(dir.path().join(d).join("aggregate.csv")).unwrap();
        text.lines().nth(1).unwrap().split(',').nth(1).unwrap().parse().unwrap()
    };
    let (m0, m1) = (mean_of("r0"), mean_of("r1"));
    let text = fs::read_to_string(dir.path().join("merged/aggregate.csv")).unwrap();
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    let mean: f64 = row[1].parse().unwrap();
    let sigma: f64 = row[2].parse().unwrap();
    assert!((mean - (m0 + m1) / 2.0).abs() < 1e-12);
    assert!((sigma - (m0 - m1).abs() / 2.0).abs() < 1e-12);

    let o = nmt(&["report", "r0", "r0/seed-0/report.json"], dir.path());
    assert_eq!(o.status.code(), Some(2), "duplicate seed must be rejected");
}

#[test]
fn ablation_table_lists_metrics_in_order() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path());
    let o = nmt(&["ablate", "--config", cfg.to_str().unwrap(), "--seeds", "2", "--out", "ab"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let table = fs::read_to_string(dir.path().join("ab/table.txt")).unwrap();
    let labels: Vec<&str> = table
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split_whitespace().next().unwrap())
        .collect();
    assert_eq!(labels, ["RAND", "MedAE", "MGD", "RMSE"]);
    for m in ["rand", "medae", "mgd", "rmse"] {
        assert!(dir.path().join("ab").join(m).join("seed-1/report.json").exists());
    }

    let o = nmt(&["ablate", "--sim", "rmse"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn pretrained_checkpoints_reproduce_a_fresh_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path());
    let cfg = cfg.to_str().unwrap();
    let o = nmt(&["pretrain", "--config", cfg, "--seed", "4", "--out", "pre"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("pre/seed-4/pretrain-loss.csv").exists());
    let o = nmt(&["run", "--config", cfg, "--seed", "4", "--pretrained", "pre", "--out", "reuse"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let o = nmt(&["run", "--config", cfg, "--seed", "4", "--out", "fresh"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["seed-4/events.jsonl", "seed-4/report.json", "aggregate.csv"] {
        let a = fs::read(dir.path().join("reuse").join(f)).unwrap();
        let b = fs::read(dir.path().join("fresh").join(f)).unwrap();
        assert!(a == b, "{f} differs");
    }
}

#[test]
fn synth_bank_feeds_a_run_and_lag_must_match() {
    let dir = tempfile::tempdir().unwrap();
    let o = nmt(&["synth", "--synth", "clusters=2", "tasks=6", "len=40", "--out", "bank"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let labels = fs::read_to_string(dir.path().join("bank/labels.csv")).unwrap();
    assert_eq!(labels.lines().count(), 7);
    let o = nmt(&["run", "--data", "bank/bank.jsonl", "--lag", "10"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn ingest_reports_dropped_tasks() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("date,store,item,sales\n");
    for d in 1..=28 {
        csv.push_str(&format!("2020-02-{d:02},1,1,{d}\n"));
    }
    for d in 1..=5 {
        csv.push_str(&format!("2020-02-{d:02},1,2,3\n"));
    }
    fs::write(dir.path().join("d.csv"), csv).unwrap();
    let o = nmt(&["ingest", "d.csv", "--out", "cache"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("1 task dropped"), "{}", stderr(&o));
    assert!(dir.path().join("cache/bank.jsonl").exists());
}
