//! Seeded end-to-end runs and similarity-metric ablations, plus the on-disk
//! layout of their artifacts.
//!
//! A run directory holds one `seed-<n>/` folder per seed (`events.jsonl`,
//! `checkpoint.json`, `report.json`, `scores.csv`, `curves.csv`,
//! `plot-data.txt`) and the cross-seed `aggregate.csv`, `aggregate.json` and
//! `table.txt`. An ablation directory holds one run directory per metric
//! (`rand/`, `medae/`, `mgd/`, `rmse/`) and the combined aggregate files, with
//! `plot-data.txt` carrying the seed-averaged head-count and tasks-per-head
//! curves of every metric.

use std::fs;
use std::path::{Path, PathBuf};

use crate::data::TaskBank;
use crate::exec::Exec;
use crate::model::{save_checkpoint, save_events, PlasticModel, TaskEvent, TrainConfig};
use crate::report::{
    aggregate, aggregate_csv, curves_csv, evaluate_learned, mean_curves, plot_data, scores_csv,
    table_text, AggregateReport, RunReport,
};
use crate::similarity::SimilarityMetric;
use crate::{Error, Result};

pub struct SeedRun {
    pub model: PlasticModel,
    pub events: Vec<TaskEvent>,
    pub report: RunReport,
}

pub fn pretrained(bank: &TaskBank, config: TrainConfig) -> Result<PlasticModel> {
    let mut model = PlasticModel::for_bank(config, bank)?;
    model.pretrain(bank)?;
    Ok(model)
}

/// Runs the learning loop on a pre-trained model and scores every learned
/// task.
pub fn finish(mut model: PlasticModel, bank: &TaskBank, exec: Exec) -> Result<SeedRun> {
    let events = model.run_main_loop(bank, exec)?;
    let scores = evaluate_learned(&model, bank, exec)?;
    let report = RunReport::new(
        model.config.similarity.metric.label(),
        model.config.seed,
        scores,
        &events,
        model.pretrain_curve.clone(),
    )?;
    Ok(SeedRun {
        model,
        events,
        report,
    })
}

pub fn run_seed(bank: &TaskBank, config: TrainConfig, exec: Exec) -> Result<SeedRun> {
    finish(pretrained(bank, config)?, bank, exec)
}

fn with_seed(base: &TrainConfig, seed: u64) -> TrainConfig {
    TrainConfig {
        seed,
        ..base.clone()
    }
}

/// Independent seeds, run side by side under `exec`.
pub fn run_seeds(bank: &TaskBank, base: &TrainConfig, seeds: &[u64], exec: Exec) -> Result<Vec<SeedRun>> {
    base.validate()?;
    exec.try_map(seeds, |&s| run_seed(bank, with_seed(base, s), exec))
}

/// Every metric on every seed. Each seed is pre-trained once and the model is
/// cloned per metric, so runs of the same seed share the trunk, the task order
/// and all other random streams. Results are grouped by metric in the order
/// given.
pub fn ablate(
    bank: &TaskBank,
    base: &TrainConfig,
    seeds: &[u64],
    metrics: &[SimilarityMetric],
    exec: Exec,
) -> Result<Vec<(SimilarityMetric, Vec<SeedRun>)>> {
    base.validate()?;
    if metrics.is_empty() {
        return Err(Error::config("sim", "no similarity metric selected"));
    }
    let per_seed = exec.try_map(seeds, |&s| -> Result<Vec<SeedRun>> {
        let model = pretrained(bank, with_seed(base, s))?;
        metrics
            .iter()
            .map(|&m| {
                let mut m_model = model.clone();
                m_model.config.similarity.metric = m;
                finish(m_model, bank, exec)
            })
            .collect()
    })?;
    let mut grouped: Vec<(SimilarityMetric, Vec<SeedRun>)> =
        metrics.iter().map(|&m| (m, Vec::with_capacity(seeds.len()))).collect();
    for runs in per_seed {
        for (slot, run) in grouped.iter_mut().zip(runs) {
            slot.1.push(run);
        }
    }
    Ok(grouped)
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

pub fn seed_dir(root: &Path, seed: u64) -> PathBuf {
    root.join(format!("seed-{seed}"))
}

pub fn write_seed_outputs(root: &Path, run: &SeedRun) -> Result<PathBuf> {
    let dir = seed_dir(root, run.report.seed);
    create_dir(&dir)?;
    save_events(&run.events, &dir.join("events.jsonl"))?;
    save_checkpoint(&run.model, &dir.join("checkpoint.json"))?;
    write_report_files(&dir, &run.report)?;
    Ok(dir)
}

/// `report.json`, `scores.csv`, `curves.csv` and `plot-data.txt` for one run.
pub fn write_report_files(dir: &Path, report: &RunReport) -> Result<()> {
    let json = serde_json::to_string_pretty(report)? + "\n";
    write(&dir.join("report.json"), &json)?;
    write(&dir.join("scores.csv"), &scores_csv(&report.scores))?;
    write(&dir.join("curves.csv"), &curves_csv(&report.curves))?;
    write(&dir.join("plot-data.txt"), &plot_data(&report.plot_series()))
}

/// `aggregate.csv`, `aggregate.json` and `table.txt` over `reports`.
pub fn write_aggregate(dir: &Path, reports: &[RunReport]) -> Result<AggregateReport> {
    create_dir(dir)?;
    let agg = aggregate(reports)?;
    write(&dir.join("aggregate.csv"), &aggregate_csv(&agg))?;
    write(&dir.join("aggregate.json"), &(serde_json::to_string_pretty(&agg)? + "\n"))?;
    write(&dir.join("table.txt"), &table_text(&agg))?;
    Ok(agg)
}

pub fn write_run(root: &Path, runs: &[SeedRun]) -> Result<AggregateReport> {
    create_dir(root)?;
    for r in runs {
        write_seed_outputs(root, r)?;
    }
    let reports: Vec<RunReport> = runs.iter().map(|r| r.report.clone()).collect();
    write_aggregate(root, &reports)
}

pub fn write_ablation(root: &Path, results: &[(SimilarityMetric, Vec<SeedRun>)]) -> Result<AggregateReport> {
    let mut all = Vec::new();
    let mut series = Vec::new();
    for (metric, runs) in results {
        write_run(&root.join(metric.cli_name()), runs)?;
        let reports: Vec<&RunReport> = runs.iter().map(|r| &r.report).collect();
        let curves = mean_curves(&reports);
        series.push((
            format!("{} mean_head_count", metric.label()),
            curves.iter().map(|&(x, h, _)| (x as f64, h)).collect(),
        ));
        series.push((
            format!("{} mean_tasks_per_head", metric.label()),
            curves.iter().map(|&(x, _, t)| (x as f64, t)).collect(),
        ));
        all.extend(reports.into_iter().cloned());
    }
    let agg = write_aggregate(root, &all)?;
    write(&root.join("plot-data.txt"), &plot_data(&series))?;
    Ok(agg)
}
