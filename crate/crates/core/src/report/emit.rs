//! Text emitters. Numbers are written with Rust's shortest round-trip
//! formatting, so CSV files parse back to identical `f64` values and repeated
//! emission of the same report is byte-identical.
//!
//! CSV schemas:
//!
//! - `scores.csv`: `task,rmse,n_windows`
//! - `curves.csv`: `ordinal,head_count,max_tph,mean_tph,mean_rmse,min_rmse,max_rmse`
//!   (RMSE columns empty before the first task is learned)
//! - `aggregate.csv`: `metric,mean,sigma`, one row per method with the
//!   cross-seed mean and population σ of the per-seed mean RMSE

use std::fmt::Write as _;

use super::{AggregateReport, CurvePoint, RunReport, Stat, TaskScore};
use crate::model::RmseSummary;
use crate::{Error, Result};

const SCORES_HEADER: [&str; 3] = ["task", "rmse", "n_windows"];
const CURVES_HEADER: [&str; 7] = [
    "ordinal",
    "head_count",
    "max_tph",
    "mean_tph",
    "mean_rmse",
    "min_rmse",
    "max_rmse",
];
const AGGREGATE_HEADER: [&str; 3] = ["metric", "mean", "sigma"];

fn write_csv(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
}

fn read_csv(text: &str, header: &[&str], what: &str) -> Result<Vec<csv::StringRecord>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let got = r.headers().map_err(|e| parse_err(what, 1, e))?;
    if got.iter().ne(header.iter().copied()) {
        return Err(parse_err(what, 1, format!("expected header {}", header.join(","))));
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        out.push(rec.map_err(|e| parse_err(what, i as u64 + 2, e))?);
    }
    Ok(out)
}

fn parse_err(what: &str, line: u64, e: impl ToString) -> Error {
    Error::Parse {
        path: what.into(),
        line,
        message: e.to_string(),
    }
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, what: &str, line: u64) -> Result<T>
where
    T::Err: ToString,
{
    rec.get(i)
        .ok_or_else(|| parse_err(what, line, format!("missing column {}", i + 1)))?
        .parse()
        .map_err(|e: T::Err| parse_err(what, line, e))
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

pub fn scores_csv(scores: &[TaskScore]) -> String {
    write_csv(
        &SCORES_HEADER,
        scores
            .iter()
            .map(|s| vec![s.task.to_string(), s.rmse.to_string(), s.n_eval_windows.to_string()]),
    )
}

/// A parsed `scores.csv` row; the task stays in its `vendor/product` form.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreRow {
    pub task: String,
    pub rmse: f64,
    pub n_windows: usize,
}

pub fn parse_scores_csv(text: &str) -> Result<Vec<ScoreRow>> {
    let what = "scores.csv";
    read_csv(text, &SCORES_HEADER, what)?
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let line = i as u64 + 2;
            Ok(ScoreRow {
                task: field(r, 0, what, line)?,
                rmse: field(r, 1, what, line)?,
                n_windows: field(r, 2, what, line)?,
            })
        })
        .collect()
}

pub fn curves_csv(curves: &[CurvePoint]) -> String {
    write_csv(
        &CURVES_HEADER,
        curves.iter().map(|c| {
            vec![
                c.ordinal.to_string(),
                c.head_count.to_string(),
                c.max_tasks_per_head.to_string(),
                c.mean_tasks_per_head.to_string(),
                opt(c.running.map(|r| r.mean)),
                opt(c.running.map(|r| r.min)),
                opt(c.running.map(|r| r.max)),
            ]
        }),
    )
}

pub fn parse_curves_csv(text: &str) -> Result<Vec<CurvePoint>> {
    let what = "curves.csv";
    read_csv(text, &CURVES_HEADER, what)?
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let line = i as u64 + 2;
            let running = if r.get(4).is_some_and(|s| !s.is_empty()) {
                Some(RmseSummary {
                    mean: field(r, 4, what, line)?,
                    min: field(r, 5, what, line)?,
                    max: field(r, 6, what, line)?,
                })
            } else {
                None
            };
            Ok(CurvePoint {
                ordinal: field(r, 0, what, line)?,
                head_count: field(r, 1, what, line)?,
                max_tasks_per_head: field(r, 2, what, line)?,
                mean_tasks_per_head: field(r, 3, what, line)?,
                running,
            })
        })
        .collect()
}

pub fn aggregate_csv(report: &AggregateReport) -> String {
    write_csv(
        &AGGREGATE_HEADER,
        report.rows.iter().map(|r| {
            vec![
                r.label.clone(),
                r.mean_rmse.mean.to_string(),
                r.mean_rmse.sigma.to_string(),
            ]
        }),
    )
}

#[derive(Clone, Debug, PartialEq)]
pub struct AggregateCsvRow {
    pub metric: String,
    pub mean: f64,
    pub sigma: f64,
}

pub fn parse_aggregate_csv(text: &str) -> Result<Vec<AggregateCsvRow>> {
    let what = "aggregate.csv";
    read_csv(text, &AGGREGATE_HEADER, what)?
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let line = i as u64 + 2;
            Ok(AggregateCsvRow {
                metric: field(r, 0, what, line)?,
                mean: field(r, 1, what, line)?,
                sigma: field(r, 2, what, line)?,
            })
        })
        .collect()
}

fn cell(s: Stat) -> String {
    format!("{:.4} ({:.4})", s.mean, s.sigma)
}

/// Method rows with `mean (sigma)` cells for the per-seed mean, min and max
/// RMSE, the final head count and the final mean tasks-per-head.
pub fn table_text(report: &AggregateReport) -> String {
    let header = [
        "method",
        "seeds",
        "mean_rmse",
        "min_rmse",
        "max_rmse",
        "heads",
        "tasks_per_head",
    ];
    let rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            vec![
                r.label.clone(),
                r.seeds.len().to_string(),
                cell(r.mean_rmse),
                cell(r.min_rmse),
                cell(r.max_rmse),
                cell(r.head_count),
                cell(r.mean_tasks_per_head),
            ]
        })
        .collect();
    let widths: Vec<usize> = (0..header.len())
        .map(|i| rows.iter().map(|r| r[i].len()).chain([header[i].len()]).max().unwrap_or(0))
        .collect();
    let line = |cells: &[&str]| {
        let mut s = String::new();
        for (i, c) in cells.iter().enumerate() {
            if i > 0 {
                s.push_str("  ");
            }
            if i == 0 {
                let _ = write!(s, "{c:<w$}", w = widths[i]);
            } else {
                let _ = write!(s, "{c:>w$}", w = widths[i]);
            }
        }
        s.trim_end().to_string() + "\n"
    };
    let mut out = format!("# cells: mean (sigma) across seeds, sigma = {} standard deviation\n", report.sigma);
    out.push_str(&line(&header));
    for r in &rows {
        out.push_str(&line(&r.iter().map(String::as_str).collect::<Vec<_>>()));
    }
    out
}

/// Whitespace-separated `x y` blocks, one per series, separated by two blank
/// lines (gnuplot `index` layout). Each block starts with `# <name>`.
pub fn plot_data(series: &[(String, Vec<(f64, f64)>)]) -> String {
    let mut out = String::new();
    for (i, (name, points)) in series.iter().enumerate() {
        if i > 0 {
            out.push_str("\n\n");
        }
        let _ = writeln!(out, "# {name}");
        for (x, y) in points {
            let _ = writeln!(out, "{x} {y}");
        }
    }
    out
}

impl RunReport {
    /// Series for [`plot_data`]: head count, max and mean tasks-per-head and
    /// running RMSE by arrival ordinal, then the pre-training loss by epoch.
    pub fn plot_series(&self) -> Vec<(String, Vec<(f64, f64)>)> {
        let by_ordinal = |f: &dyn Fn(&CurvePoint) -> Option<f64>| -> Vec<(f64, f64)> {
            self.curves
                .iter()
                .filter_map(|c| f(c).map(|y| (c.ordinal as f64, y)))
                .collect()
        };
        vec![
            ("head_count".into(), by_ordinal(&|c| Some(c.head_count as f64))),
            ("max_tasks_per_head".into(), by_ordinal(&|c| Some(c.max_tasks_per_head as f64))),
            ("mean_tasks_per_head".into(), by_ordinal(&|c| Some(c.mean_tasks_per_head))),
            ("running_mean_rmse".into(), by_ordinal(&|c| c.running.map(|r| r.mean))),
            ("running_min_rmse".into(), by_ordinal(&|c| c.running.map(|r| r.min))),
            ("running_max_rmse".into(), by_ordinal(&|c| c.running.map(|r| r.max))),
            (
                "pretrain_loss".into(),
                self.pretrain_loss
                    .iter()
                    .enumerate()
                    .map(|(i, &l)| ((i + 1) as f64, l))
                    .collect(),
            ),
        ]
    }
}
