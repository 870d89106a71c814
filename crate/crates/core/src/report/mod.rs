//! Final evaluation, cross-seed aggregation and head statistics.
//!
//! Spread across seeds is the population standard deviation; see
//! [`SIGMA_KIND`]. Per-task RMSE values are averaged unweighted, so every task
//! counts once regardless of its length.

mod emit;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{TaskBank, TaskData, TaskKey};
use crate::exec::Exec;
use crate::model::{HeadId, Outcome, PlasticModel, RmseSummary, TaskEvent};
use crate::similarity::SimilarityMetric;
use crate::{Error, Result};

pub use emit::{
    aggregate_csv, curves_csv, parse_aggregate_csv, parse_curves_csv, parse_scores_csv,
    plot_data, scores_csv, table_text, AggregateCsvRow, ScoreRow,
};

/// Recorded in every aggregate so readers know which estimator was used.
pub const SIGMA_KIND: &str = "population";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskScore {
    pub task: TaskKey,
    pub rmse: f64,
    pub n_eval_windows: usize,
}

/// Scores every task of `bank`; all of them must have been learned.
pub fn evaluate_all(model: &PlasticModel, bank: &TaskBank, exec: Exec) -> Result<Vec<TaskScore>> {
    let tasks: Vec<&TaskData> = bank.tasks.iter().collect();
    evaluate_tasks(model, &tasks, exec)
}

/// Scores the tasks of `bank` that own a head, in bank order. Tasks skipped
/// by the learning loop are left out.
pub fn evaluate_learned(model: &PlasticModel, bank: &TaskBank, exec: Exec) -> Result<Vec<TaskScore>> {
    let tasks: Vec<&TaskData> = bank
        .tasks
        .iter()
        .filter(|t| model.registry.owner_of(&t.key).is_some())
        .collect();
    evaluate_tasks(model, &tasks, exec)
}

pub fn evaluate_tasks(model: &PlasticModel, tasks: &[&TaskData], exec: Exec) -> Result<Vec<TaskScore>> {
    exec.try_map(tasks, |t| -> Result<TaskScore> {
        Ok(TaskScore {
            task: t.key.clone(),
            rmse: model.task_rmse(t, Exec::Sequential)?,
            n_eval_windows: t.windows_eval.len(),
        })
    })
}

/// One point per task arrival.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub ordinal: usize,
    pub head_count: usize,
    pub max_tasks_per_head: usize,
    pub mean_tasks_per_head: f64,
    pub running: Option<RmseSummary>,
}

/// Rebuilds the head-count and tasks-per-head curves by replaying outcomes,
/// and rejects logs whose recorded counters disagree with the replay.
pub fn head_stats(events: &[TaskEvent]) -> Result<Vec<CurvePoint>> {
    if events.is_empty() {
        return Err(Error::Argument("empty event log".into()));
    }
    let mut sizes: BTreeMap<HeadId, usize> = BTreeMap::new();
    let mut out = Vec::with_capacity(events.len());
    for (i, e) in events.iter().enumerate() {
        let bad = |what: &str| Error::State(format!("event log inconsistent at ordinal {}: {what}", e.ordinal));
        if e.ordinal != i + 1 {
            return Err(bad("ordinal out of sequence"));
        }
        match e.outcome {
            Outcome::First | Outcome::NewHead => {
                let id = e.head.ok_or_else(|| bad("new head without id"))?;
                if (e.outcome == Outcome::First) != sizes.is_empty() || sizes.insert(id, 1).is_some() {
                    return Err(bad("head created twice"));
                }
            }
            Outcome::Merged => {
                let id = e.head.ok_or_else(|| bad("merge without head"))?;
                *sizes.get_mut(&id).ok_or_else(|| bad("merge into unknown head"))? += 1;
            }
            Outcome::Skipped => {}
        }
        let tph: Vec<usize> = sizes.values().copied().collect();
        let processed: usize = tph.iter().sum();
        let heads = tph.len();
        if e.tasks_per_head != tph || e.head_count != heads || e.known_tasks != processed {
            return Err(bad("recorded counters differ from replay"));
        }
        out.push(CurvePoint {
            ordinal: e.ordinal,
            head_count: heads,
            max_tasks_per_head: tph.iter().copied().max().unwrap_or(0),
            mean_tasks_per_head: if heads == 0 { 0.0 } else { processed as f64 / heads as f64 },
            running: e.running,
        });
    }
    Ok(out)
}

/// Everything measured for one seed of one method.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub label: String,
    pub seed: u64,
    pub scores: Vec<TaskScore>,
    pub mean_rmse: f64,
    pub min_rmse: f64,
    pub max_rmse: f64,
    pub curves: Vec<CurvePoint>,
    pub pretrain_loss: Vec<f64>,
}

impl RunReport {
    pub fn new(
        label: impl Into<String>,
        seed: u64,
        scores: Vec<TaskScore>,
        events: &[TaskEvent],
        pretrain_loss: Vec<f64>,
    ) -> Result<Self> {
        if let Some(s) = scores.iter().find(|s| !s.rmse.is_finite() || s.n_eval_windows == 0) {
            return Err(Error::Numeric(format!("score of {}", s.task)));
        }
        let values: Vec<f64> = scores.iter().map(|s| s.rmse).collect();
        let summary = RmseSummary::of(&values)
            .ok_or_else(|| Error::InsufficientData("no task was learned".into()))?;
        Ok(RunReport {
            label: label.into(),
            seed,
            scores,
            mean_rmse: summary.mean,
            min_rmse: summary.min,
            max_rmse: summary.max,
            curves: head_stats(events)?,
            pretrain_loss,
        })
    }

    pub fn final_head_count(&self) -> usize {
        self.curves.last().map_or(0, |c| c.head_count)
    }

    pub fn final_mean_tasks_per_head(&self) -> f64 {
        self.curves.last().map_or(0.0, |c| c.mean_tasks_per_head)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub sigma: f64,
}

impl Stat {
    /// Mean and population standard deviation. Values are shifted by their
    /// minimum first, so identical inputs give `sigma == 0` exactly.
    pub fn of(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len() as f64;
        let base = sorted[0];
        let mean = base + sorted.iter().map(|v| v - base).sum::<f64>() / n;
        let var = sorted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(Stat {
            mean,
            sigma: var.sqrt(),
        })
    }
}

/// Cross-seed statistics of one method.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub label: String,
    pub seeds: Vec<u64>,
    pub mean_rmse: Stat,
    pub min_rmse: Stat,
    pub max_rmse: Stat,
    pub head_count: Stat,
    pub mean_tasks_per_head: Stat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub sigma: String,
    pub rows: Vec<AggregateRow>,
}

/// Groups reports by label. Rows come out in metric order (RAND, MedAE, MGD,
/// RMSE) followed by any other labels sorted by name; the result does not
/// depend on the order of `reports`.
pub fn aggregate(reports: &[RunReport]) -> Result<AggregateReport> {
    if reports.is_empty() {
        return Err(Error::Argument("nothing to aggregate".into()));
    }
    let mut groups: BTreeMap<(usize, &str), Vec<&RunReport>> = BTreeMap::new();
    for r in reports {
        let rank = SimilarityMetric::ALL
            .iter()
            .position(|m| m.label() == r.label)
            .unwrap_or(SimilarityMetric::ALL.len());
        groups.entry((rank, r.label.as_str())).or_default().push(r);
    }
    let rows = groups
        .into_values()
        .map(|mut g| {
            g.sort_by(|a, b| a.seed.cmp(&b.seed).then(a.mean_rmse.total_cmp(&b.mean_rmse)));
            let stat = |f: &dyn Fn(&RunReport) -> f64| {
                Stat::of(&g.iter().map(|r| f(r)).collect::<Vec<_>>()).expect("non-empty group")
            };
            AggregateRow {
                label: g[0].label.clone(),
                seeds: g.iter().map(|r| r.seed).collect(),
                mean_rmse: stat(&|r| r.mean_rmse),
                min_rmse: stat(&|r| r.min_rmse),
                max_rmse: stat(&|r| r.max_rmse),
                head_count: stat(&|r| r.final_head_count() as f64),
                mean_tasks_per_head: stat(&|r| r.final_mean_tasks_per_head()),
            }
        })
        .collect();
    Ok(AggregateReport {
        sigma: SIGMA_KIND.into(),
        rows,
    })
}

/// Per-ordinal mean of head count and mean tasks-per-head across reports of
/// one method; stops at the shortest curve.
pub fn mean_curves(reports: &[&RunReport]) -> Vec<(usize, f64, f64)> {
    let len = reports.iter().map(|r| r.curves.len()).min().unwrap_or(0);
    (0..len)
        .map(|i| {
            let hc: Vec<f64> = reports.iter().map(|r| r.curves[i].head_count as f64).collect();
            let tph: Vec<f64> = reports.iter().map(|r| r.curves[i].mean_tasks_per_head).collect();
            (
                i + 1,
                Stat::of(&hc).map_or(0.0, |s| s.mean),
                Stat::of(&tph).map_or(0.0, |s| s.mean),
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn event(ordinal: usize, outcome: Outcome, head: u32, tph: Vec<usize>) -> TaskEvent {
        let heads = tph.len();
        let known: usize = tph.iter().sum();
        TaskEvent {
            ordinal,
            task: TaskKey::new("v", format!("p{ordinal}")),
            outcome,
            head: (outcome != Outcome::Skipped).then_some(HeadId(head)),
            sim_task: None,
            sim_head: None,
            loss_theta0: None,
            loss_sim: None,
            head_count: heads,
            known_tasks: known,
            max_tasks_per_head: tph.iter().copied().max().unwrap_or(0),
            mean_tasks_per_head: known as f64 / heads.max(1) as f64,
            tasks_per_head: tph,
            running: None,
            head_digests: vec![],
            skip_reason: None,
        }
    }

    fn report(label: &str, seed: u64, mean: f64) -> RunReport {
        RunReport {
            label: label.into(),
            seed,
            scores: vec![],
            mean_rmse: mean,
            min_rmse: mean - 1.0,
            max_rmse: mean + 1.0,
            curves: vec![],
            pretrain_loss: vec![],
        }
    }

    #[test]
    fn all_new_heads_give_identity_curve() {
        let events: Vec<TaskEvent> = (1..=4)
            .map(|i| {
                let o = if i == 1 { Outcome::First } else { Outcome::NewHead };
                event(i, o, i as u32 - 1, vec![1; i])
            })
            .collect();
        let c = head_stats(&events).unwrap();
        assert_eq!(c.iter().map(|p| p.head_count).collect::<Vec<_>>(), vec![1, 2, 3, 4]);
        assert!(c.iter().all(|p| p.mean_tasks_per_head == 1.0 && p.max_tasks_per_head == 1));
    }

    #[test]
    fn all_merged_gives_single_head() {
        let mut events = vec![event(1, Outcome::First, 0, vec![1])];
        for i in 2..=5 {
            events.push(event(i, Outcome::Merged, 0, vec![i]));
        }
        let c = head_stats(&events).unwrap();
        assert!(c.iter().all(|p| p.head_count == 1));
        assert_eq!(c[4].mean_tasks_per_head, 5.0);
    }

    #[test]
    fn skip_keeps_counters() {
        let events = vec![
            event(1, Outcome::Skipped, 0, vec![]),
            event(2, Outcome::First, 0, vec![1]),
            event(3, Outcome::Skipped, 0, vec![1]),
        ];
        let c = head_stats(&events).unwrap();
        assert_eq!(c[0].head_count, 0);
        assert_eq!(c[0].mean_tasks_per_head, 0.0);
        assert_eq!(c[2].head_count, 1);
    }

    #[test]
    fn inconsistent_log_is_rejected() {
        let mut events = vec![event(1, Outcome::First, 0, vec![1]), event(2, Outcome::Merged, 0, vec![2])];
        events[1].head_count = 2;
        assert!(matches!(head_stats(&events), Err(Error::State(_))));
        assert!(head_stats(&[event(1, Outcome::Merged, 0, vec![1])]).is_err());
        assert!(matches!(head_stats(&[]), Err(Error::Argument(_))));
    }

    #[test]
    fn aggregate_two_means() {
        let a = aggregate(&[report("RMSE", 0, 2.0), report("RMSE", 1, 4.0)]).unwrap();
        assert_eq!(a.rows.len(), 1);
        assert_eq!(a.rows[0].mean_rmse, Stat { mean: 3.0, sigma: 1.0 });
        assert_eq!(a.sigma, "population");
    }

    #[test]
    fn single_report_has_zero_sigma() {
        let a = aggregate(&[report("RAND", 3, 0.1)]).unwrap();
        let r = &a.rows[0];
        for s in [r.mean_rmse, r.min_rmse, r.max_rmse, r.head_count] {
            assert_eq!(s.sigma, 0.0);
        }
        assert_eq!(r.mean_rmse.mean, 0.1);
    }

    #[test]
    fn rows_follow_metric_order() {
        let labels = ["RMSE", "custom", "MGD", "RAND", "MedAE"];
        let reports: Vec<RunReport> = labels.iter().map(|l| report(l, 0, 1.0)).collect();
        let a = aggregate(&reports).unwrap();
        let order: Vec<&str> = a.rows.iter().map(|r| r.label.as_str()).collect();
        assert_eq!(order, vec!["RAND", "MedAE", "MGD", "RMSE", "custom"]);
    }

    #[test]
    fn run_report_rejects_empty_and_non_finite() {
        let ev = vec![event(1, Outcome::First, 0, vec![1])];
        assert!(matches!(
            RunReport::new("RMSE", 0, vec![], &ev, vec![]),
            Err(Error::InsufficientData(_))
        ));
        let bad = TaskScore {
            task: TaskKey::new("a", "b"),
            rmse: f64::NAN,
            n_eval_windows: 1,
        };
        assert!(matches!(RunReport::new("RMSE", 0, vec![bad], &ev, vec![]), Err(Error::Numeric(_))));
    }

    proptest! {
        #[test]
        fn identical_values_have_zero_sigma(v in -1e6f64..1e6, n in 1usize..12) {
            let s = Stat::of(&vec![v; n]).unwrap();
            prop_assert_eq!(s.sigma, 0.0);
            prop_assert_eq!(s.mean, v);
        }

        #[test]
        fn aggregate_ignores_report_order(means in proptest::collection::vec(0.0f64..50.0, 1..8), rot in 0usize..8) {
            let reports: Vec<RunReport> = means.iter().enumerate().map(|(i, &m)| report("MGD", i as u64, m)).collect();
            let mut shuffled = reports.clone();
            let k = rot % shuffled.len();
            shuffled.rotate_left(k);
            shuffled.reverse();
            prop_assert_eq!(aggregate(&reports).unwrap(), aggregate(&shuffled).unwrap());
        }

        #[test]
        fn stat_matches_two_pass_formula(values in proptest::collection::vec(-1e3f64..1e3, 1..20)) {
            let s = Stat::of(&values).unwrap();
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            prop_assert!((s.mean - mean).abs() <= 1e-9 * (1.0 + mean.abs()));
            prop_assert!((s.sigma - sd).abs() <= 1e-9 * (1.0 + sd));
            prop_assert!(s.sigma >= 0.0);
        }
    }
}
