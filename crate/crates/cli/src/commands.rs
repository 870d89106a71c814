use std::fs;
use std::path::{Path, PathBuf};

use nmt_core::data::{ingest_csv, load_bank, save_bank, synth_bank, IngestOptions, TaskBank};
use nmt_core::experiment::{
    ablate, finish, pretrained, run_seeds, seed_dir, write_ablation, write_aggregate, write_run, SeedRun,
};
use nmt_core::model::{load_checkpoint, save_checkpoint, PlasticModel};
use nmt_core::report::{table_text, RunReport};
use nmt_core::similarity::SimilarityMetric;
use nmt_core::{Error, Exec, Result};

use crate::spec::{RunSpec, Source};

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Loads or generates the bank described by `spec`.
pub fn load_source(spec: &RunSpec, exec: Exec) -> Result<TaskBank> {
    let bank = match &spec.source {
        Source::Csv {
            path,
            schema,
            min_length,
        } => {
            let opts = IngestOptions {
                lag: spec.lag,
                min_length: *min_length,
            };
            let (bank, report) = ingest_csv(path, schema, &opts, exec)?;
            eprint!("{report}");
            bank
        }
        Source::Bank(path) => {
            let bank = load_bank(path)?;
            if bank.lag != spec.lag {
                return Err(Error::Data(format!(
                    "{}: bank was built with lag {}, but lag {} is configured",
                    path.display(),
                    bank.lag,
                    spec.lag
                )));
            }
            bank
        }
        Source::Synth(cfg) => synth_bank(cfg)?.bank,
    };
    Ok(if spec.zscore { bank.normalized() } else { bank })
}

fn begin(spec: &RunSpec) -> Result<()> {
    create_dir(&spec.out)?;
    write(&spec.out.join("config.toml"), &spec.to_toml())
}

pub fn ingest(spec: &RunSpec, exec: Exec) -> Result<()> {
    let bank = load_source(spec, exec)?;
    create_dir(&spec.out)?;
    let path = spec.out.join("bank.jsonl");
    save_bank(&bank, &path)?;
    println!("{} tasks, {} windows -> {}", bank.len(), bank.total_windows(), path.display());
    Ok(())
}

pub fn synth(spec: &RunSpec) -> Result<()> {
    let Source::Synth(cfg) = &spec.source else {
        return Err(Error::config("data", "synth takes no data path"));
    };
    let sb = synth_bank(cfg)?;
    let bank = if spec.zscore { sb.bank.normalized() } else { sb.bank.clone() };
    create_dir(&spec.out)?;
    let path = spec.out.join("bank.jsonl");
    save_bank(&bank, &path)?;
    let mut labels = String::from("task,cluster\n");
    for (t, c) in bank.tasks.iter().zip(&sb.labels) {
        labels.push_str(&format!("{},{c}\n", t.key));
    }
    write(&spec.out.join("labels.csv"), &labels)?;
    println!(
        "{} tasks in {} clusters, {} windows -> {}",
        bank.len(),
        cfg.n_clusters,
        bank.total_windows(),
        path.display()
    );
    Ok(())
}

fn config_for(spec: &RunSpec, seed: u64) -> nmt_core::model::TrainConfig {
    nmt_core::model::TrainConfig {
        seed,
        ..spec.train.clone()
    }
}

pub fn pretrain(spec: &RunSpec, exec: Exec) -> Result<()> {
    let bank = load_source(spec, exec)?;
    begin(spec)?;
    let models = exec.try_map(&spec.seeds, |&s| pretrained(&bank, config_for(spec, s)))?;
    for m in &models {
        let dir = seed_dir(&spec.out, m.config.seed);
        create_dir(&dir)?;
        save_checkpoint(m, &dir.join("pretrained.json"))?;
        let mut csv = String::from("epoch,loss\n");
        for (i, l) in m.pretrain_curve.iter().enumerate() {
            csv.push_str(&format!("{},{l}\n", i + 1));
        }
        write(&dir.join("pretrain-loss.csv"), &csv)?;
        println!(
            "seed {}: final pre-training loss {:.4} -> {}",
            m.config.seed,
            m.pretrain_curve.last().copied().unwrap_or(f64::NAN),
            dir.display()
        );
    }
    Ok(())
}

/// Pre-trained model for `seed` from a `pretrain` output directory. The
/// checkpoint must match the requested settings apart from the metric.
fn load_pretrained(dir: &Path, spec: &RunSpec, seed: u64, bank: &TaskBank) -> Result<PlasticModel> {
    let path = seed_dir(dir, seed).join("pretrained.json");
    let mut model = load_checkpoint(&path)?;
    if !model.is_pretrained() || !model.registry.is_empty() {
        return Err(Error::Data(format!("{}: not a freshly pre-trained model", path.display())));
    }
    if model.vocab != bank.vocab || model.lag != bank.lag {
        return Err(Error::Data(format!("{}: trained on a different bank", path.display())));
    }
    let wanted = config_for(spec, seed);
    let mut got = model.config.clone();
    got.similarity = wanted.similarity;
    if got != wanted {
        return Err(Error::config(
            "pretrained",
            format!("{} was trained with different settings", path.display()),
        ));
    }
    model.config = wanted;
    Ok(model)
}

fn seed_runs(spec: &RunSpec, bank: &TaskBank, from: Option<&Path>, exec: Exec) -> Result<Vec<SeedRun>> {
    match from {
        Some(dir) => exec.try_map(&spec.seeds, |&s| finish(load_pretrained(dir, spec, s, bank)?, bank, exec)),
        None => run_seeds(bank, &spec.train, &spec.seeds, exec),
    }
}

pub fn run(spec: &RunSpec, from: Option<&Path>, exec: Exec) -> Result<()> {
    let bank = load_source(spec, exec)?;
    begin(spec)?;
    let runs = seed_runs(spec, &bank, from, exec)?;
    let agg = write_run(&spec.out, &runs)?;
    print!("{}", table_text(&agg));
    Ok(())
}

pub fn ablation(spec: &RunSpec, from: Option<&Path>, exec: Exec) -> Result<()> {
    let bank = load_source(spec, exec)?;
    begin(spec)?;
    let results = match from {
        None => ablate(&bank, &spec.train, &spec.seeds, &SimilarityMetric::ALL, exec)?,
        Some(dir) => {
            let mut out = Vec::new();
            for m in SimilarityMetric::ALL {
                let mut s = spec.clone();
                s.train.similarity.metric = m;
                out.push((m, seed_runs(&s, &bank, Some(dir), exec)?));
            }
            out
        }
    };
    let agg = write_ablation(&spec.out, &results)?;
    print!("{}", table_text(&agg));
    Ok(())
}

fn collect_reports(path: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let meta = fs::metadata(path).map_err(|e| Error::io(path, e))?;
    if meta.is_file() {
        out.push(path.to_path_buf());
        return Ok(());
    }
    let mut entries: Vec<PathBuf> = fs::read_dir(path)
        .map_err(|e| Error::io(path, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(path, err)))
        .collect::<Result<_>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_reports(&p, out)?;
        } else if p.file_name().is_some_and(|n| n == "report.json") {
            out.push(p);
        }
    }
    Ok(())
}

/// Merges `report.json` files (or directories searched for them) into one
/// aggregate without recomputing anything.
pub fn report(paths: &[PathBuf], out: Option<&Path>) -> Result<()> {
    let mut files = Vec::new();
    for p in paths {
        collect_reports(p, &mut files)?;
    }
    if files.is_empty() {
        return Err(Error::Data("no report.json found under the given paths".into()));
    }
    let mut reports: Vec<RunReport> = Vec::with_capacity(files.len());
    for f in &files {
        let text = fs::read_to_string(f).map_err(|e| Error::io(f, e))?;
        let r: RunReport = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: f.clone(),
            line: e.line() as u64,
            message: e.to_string(),
        })?;
        if reports.iter().any(|o| o.label == r.label && o.seed == r.seed) {
            return Err(Error::Data(format!(
                "{}: second report for {} seed {}",
                f.display(),
                r.label,
                r.seed
            )));
        }
        reports.push(r);
    }
    let agg = match out {
        Some(dir) => write_aggregate(dir, &reports)?,
        None => nmt_core::report::aggregate(&reports)?,
    };
    print!("{}", table_text(&agg));
    Ok(())
}
