use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::vocab::{Vocab, VocabMap};
use crate::exec::Exec;
use crate::nn::TrunkInput;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TaskKey {
    pub vendor: String,
    pub product: String,
}

impl TaskKey {
    pub fn new(vendor: impl Into<String>, product: impl Into<String>) -> Self {
        TaskKey {
            vendor: vendor.into(),
            product: product.into(),
        }
    }
}

impl fmt::Display for TaskKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.vendor, self.product)
    }
}

/// Lag values (oldest first) and the value that follows them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LagWindow {
    pub lags: Vec<f64>,
    pub target: f64,
}

/// Model input row: `[vendor, product, lag_1 .. lag_n]` plus the next value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub vendor_idx: usize,
    pub product_idx: usize,
    pub lags: Vec<f64>,
    pub target: f64,
}

impl Window {
    pub fn new(vendor_idx: usize, product_idx: usize, core: LagWindow) -> Self {
        Window {
            vendor_idx,
            product_idx,
            lags: core.lags,
            target: core.target,
        }
    }

    /// The full input vector with the categorical indices as raw numbers.
    pub fn input_vector(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.lags.len() + 2);
        v.push(self.vendor_idx as f64);
        v.push(self.product_idx as f64);
        v.extend_from_slice(&self.lags);
        v
    }
}

impl TrunkInput for Window {
    fn vendor_idx(&self) -> usize {
        self.vendor_idx
    }

    fn product_idx(&self) -> usize {
        self.product_idx
    }

    fn lags(&self) -> &[f64] {
        &self.lags
    }
}

/// Sliding windows over `series`: window `i` holds `series[i..i+lag]` and
/// targets `series[i+lag]`.
pub fn make_windows(series: &[f64], lag: usize) -> Result<Vec<LagWindow>> {
    if lag == 0 || series.len() <= lag {
        return Err(Error::InsufficientData(format!(
            "series of length {} cannot produce windows with lag {lag}",
            series.len()
        )));
    }
    if let Some(i) = series.iter().position(|v| !v.is_finite()) {
        return Err(Error::Data(format!("non-finite value at position {i}")));
    }
    Ok(series
        .windows(lag + 1)
        .map(|w| LagWindow {
            lags: w[..lag].to_vec(),
            target: w[lag],
        })
        .collect())
}

/// Order-preserving 40/40/20 split at `floor(0.4 n)` and `floor(0.8 n)`.
pub fn split_phases<T>(items: Vec<T>) -> (Vec<T>, Vec<T>, Vec<T>) {
    let n = items.len();
    let a = n * 2 / 5;
    let b = n * 4 / 5;
    let mut items = items;
    let eval = items.split_off(b);
    let post = items.split_off(a);
    (items, post, eval)
}

/// Per-task affine scaling applied to every value of the task.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scale {
    pub mean: f64,
    pub sd: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskData {
    pub key: TaskKey,
    pub windows_pre: Vec<Window>,
    pub windows_post: Vec<Window>,
    pub windows_eval: Vec<Window>,
    /// Set when the task's values are z-scored; errors are reported after
    /// multiplying back by `sd`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<Scale>,
}

impl TaskData {
    pub fn window_count(&self) -> usize {
        self.windows_pre.len() + self.windows_post.len() + self.windows_eval.len()
    }

    pub fn all_windows(&self) -> impl Iterator<Item = &Window> {
        self.windows_pre
            .iter()
            .chain(&self.windows_post)
            .chain(&self.windows_eval)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskBank {
    pub tasks: Vec<TaskData>,
    pub vocab: VocabMap,
    pub lag: usize,
}

impl TaskBank {
    /// Builds a bank from raw series, keeping the given task order. The
    /// vocabulary covers exactly the keys present.
    pub fn from_series(series: Vec<(TaskKey, Vec<f64>)>, lag: usize, exec: Exec) -> Result<Self> {
        let mut seen = HashSet::new();
        for (k, _) in &series {
            if !seen.insert(k) {
                return Err(Error::Data(format!("duplicate task key {k}")));
            }
        }
        let vocab = VocabMap {
            vendor: Vocab::new(series.iter().map(|(k, _)| k.vendor.clone())),
            product: Vocab::new(series.iter().map(|(k, _)| k.product.clone())),
        };
        let tasks = exec.try_map(&series, |(key, values)| -> Result<TaskData> {
            let v = vocab.vendor.index_of(&key.vendor);
            let p = vocab.product.index_of(&key.product);
            let windows: Vec<Window> = make_windows(values, lag)
                .map_err(|e| match e {
                    Error::InsufficientData(m) => Error::InsufficientData(format!("{key}: {m}")),
                    other => other,
                })?
                .into_iter()
                .map(|w| Window::new(v, p, w))
                .collect();
            let (pre, post, eval) = split_phases(windows);
            Ok(TaskData {
                key: key.clone(),
                windows_pre: pre,
                windows_post: post,
                windows_eval: eval,
                scale: None,
            })
        })?;
        let bank = TaskBank { tasks, vocab, lag };
        bank.validate()?;
        Ok(bank)
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn task(&self, key: &TaskKey) -> Option<&TaskData> {
        self.tasks.iter().find(|t| &t.key == key)
    }

    pub fn total_windows(&self) -> usize {
        self.tasks.iter().map(TaskData::window_count).sum()
    }

    /// Unique keys, valid vocabulary indices, consistent lag width.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        let (nv, np) = (self.vocab.vendor.size(), self.vocab.product.size());
        for t in &self.tasks {
            if !seen.insert(&t.key) {
                return Err(Error::Data(format!("duplicate task key {}", t.key)));
            }
            for w in t.all_windows() {
                if w.vendor_idx >= nv || w.product_idx >= np {
                    return Err(Error::Data(format!("{}: window index outside vocabulary", t.key)));
                }
                if w.lags.len() != self.lag {
                    return Err(Error::Data(format!("{}: window width {}", t.key, w.lags.len())));
                }
            }
        }
        Ok(())
    }

    /// Z-scores every task with the mean and standard deviation of the
    /// values its pre and post windows expose (the evaluation tail is not
    /// looked at). Constant tasks get `sd = 1`.
    pub fn normalized(&self) -> TaskBank {
        let mut out = self.clone();
        for t in &mut out.tasks {
            if t.scale.is_some() {
                continue;
            }
            let mut values: Vec<f64> = Vec::new();
            for w in t.windows_pre.iter().chain(&t.windows_post) {
                values.push(w.target);
            }
            if let Some(first) = t.windows_pre.first().or(t.windows_post.first()) {
                values.extend_from_slice(&first.lags);
            }
            let n = values.len().max(1) as f64;
            let mean = values.iter().sum::<f64>() / n;
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
            for w in t
                .windows_pre
                .iter_mut()
                .chain(t.windows_post.iter_mut())
                .chain(t.windows_eval.iter_mut())
            {
                w.lags.iter_mut().for_each(|v| *v = (*v - mean) / sd);
                w.target = (w.target - mean) / sd;
            }
            t.scale = Some(Scale { mean, sd });
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn minimal_series_gives_one_window() {
        let series: Vec<f64> = (1..=16).map(f64::from).collect();
        let w = make_windows(&series, 15).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].lags, (1..=15).map(f64::from).collect::<Vec<_>>());
        assert_eq!(w[0].target, 16.0);
    }

    #[test]
    fn window_count_is_length_minus_lag() {
        assert_eq!(make_windows(&[0.0; 20], 15).unwrap().len(), 5);
        let c = make_windows(&[7.0; 18], 15).unwrap();
        assert_eq!(c.len(), 3);
        assert!(c.iter().all(|w| w.target == 7.0 && w.lags.iter().all(|&v| v == 7.0)));
    }

    #[test]
    fn too_short_series_is_insufficient() {
        assert!(matches!(
            make_windows(&[1.0; 15], 15),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn split_examples() {
        let sizes = |n: usize| {
            let (a, b, c) = split_phases((0..n).collect::<Vec<_>>());
            (a.len(), b.len(), c.len())
        };
        assert_eq!(sizes(100), (40, 40, 20));
        assert_eq!(sizes(5), (2, 2, 1));
        assert_eq!(sizes(1), (0, 0, 1));
        assert_eq!(sizes(105), (42, 42, 21));
    }

    #[test]
    fn input_vector_has_categoricals_first() {
        let w = Window::new(3, 7, LagWindow { lags: vec![1.0, 2.0], target: 3.0 });
        assert_eq!(w.input_vector(), vec![3.0, 7.0, 1.0, 2.0]);
    }

    #[test]
    fn normalized_bank_round_trips_scale() {
        let series = vec![(TaskKey::new("v", "p"), (0..40).map(|i| 10.0 + i as f64).collect())];
        let bank = TaskBank::from_series(series, 15, Exec::Sequential).unwrap();
        let z = bank.normalized();
        let s = z.tasks[0].scale.unwrap();
        let w0 = &bank.tasks[0].windows_eval[0];
        let z0 = &z.tasks[0].windows_eval[0];
        assert!((z0.target * s.sd + s.mean - w0.target).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn split_concatenation_is_identity(n in 0usize..500) {
            let items: Vec<usize> = (0..n).collect();
            let (a, b, c) = split_phases(items.clone());
            prop_assert_eq!(a.len(), n * 2 / 5);
            let joined: Vec<usize> = a.into_iter().chain(b).chain(c).collect();
            prop_assert_eq!(joined, items);
        }

        #[test]
        fn windows_reconstruct_series(series in proptest::collection::vec(-1e3f64..1e3, 16..80), lag in 1usize..15) {
            let w = make_windows(&series, lag).unwrap();
            prop_assert_eq!(w.len(), series.len() - lag);
            for (i, win) in w.iter().enumerate() {
                prop_assert_eq!(&win.lags[..], &series[i..i + lag]);
                prop_assert_eq!(win.target, series[i + lag]);
            }
        }
    }
}
