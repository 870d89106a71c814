//! Task representations and the distances used to pick the most similar
//! known task.
//!
//! A task is summarised by the running mean of its window input vectors
//! (categorical indices included as raw numbers). The candidate whose summary
//! is closest under the selected metric wins; `Rand` ignores the summaries
//! and draws uniformly.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{TaskKey, Window};
use crate::exec::Exec;
use crate::{Error, Result};

/// Running arithmetic mean of window input vectors.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AvgFeatureVector {
    pub mean: Vec<f64>,
    pub count: u64,
}

impl AvgFeatureVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_windows<'a, I: IntoIterator<Item = &'a Window>>(windows: I) -> Self {
        let mut avg = Self::new();
        for w in windows {
            avg.absorb(w);
        }
        avg
    }

    pub fn absorb(&mut self, window: &Window) {
        self.absorb_vector(&window.input_vector());
    }

    /// `mean += (x - mean) / (count + 1)`
    pub fn absorb_vector(&mut self, x: &[f64]) {
        if self.count == 0 {
            self.mean = x.to_vec();
            self.count = 1;
            return;
        }
        debug_assert_eq!(x.len(), self.mean.len());
        let k = (self.count + 1) as f64;
        for (m, v) in self.mean.iter_mut().zip(x) {
            *m += (v - *m) / k;
        }
        self.count += 1;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimilarityMetric {
    Rand,
    MedAE,
    Mgd,
    Rmse,
}

impl SimilarityMetric {
    /// Ablation table order.
    pub const ALL: [SimilarityMetric; 4] = [
        SimilarityMetric::Rand,
        SimilarityMetric::MedAE,
        SimilarityMetric::Mgd,
        SimilarityMetric::Rmse,
    ];

    pub fn cli_name(self) -> &'static str {
        match self {
            SimilarityMetric::Rand => "rand",
            SimilarityMetric::MedAE => "medae",
            SimilarityMetric::Mgd => "mgd",
            SimilarityMetric::Rmse => "rmse",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            SimilarityMetric::Rand => "RAND",
            SimilarityMetric::MedAE => "MedAE",
            SimilarityMetric::Mgd => "MGD",
            SimilarityMetric::Rmse => "RMSE",
        }
    }

    pub fn is_random(self) -> bool {
        self == SimilarityMetric::Rand
    }

    /// Distance under a deterministic metric; `None` for `Rand`.
    pub fn distance(self, a: &[f64], b: &[f64]) -> Option<Result<f64>> {
        match self {
            SimilarityMetric::Rand => None,
            SimilarityMetric::MedAE => Some(medae_distance(a, b)),
            SimilarityMetric::Mgd => Some(mgd_distance(a, b)),
            SimilarityMetric::Rmse => Some(rmse_distance(a, b)),
        }
    }
}

impl fmt::Display for SimilarityMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for SimilarityMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SimilarityMetric::ALL
            .into_iter()
            .find(|m| m.cli_name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::config(
                    "sim",
                    format!("unknown metric `{s}`; expected one of rand, medae, mgd, rmse"),
                )
            })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityOptions {
    pub metric: SimilarityMetric,
    /// When false the two categorical slots are left out of the distance.
    pub include_categorical: bool,
}

impl Default for SimilarityOptions {
    fn default() -> Self {
        SimilarityOptions {
            metric: SimilarityMetric::Rmse,
            include_categorical: true,
        }
    }
}

fn check_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Shape(format!(
            "distance between vectors of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

pub fn rmse_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    check_len(a, b)?;
    let s: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((s / a.len() as f64).sqrt())
}

/// Median absolute difference; the mean of the two central values for even
/// lengths.
pub fn medae_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    check_len(a, b)?;
    let mut d: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - y).abs()).collect();
    d.sort_by(f64::total_cmp);
    let n = d.len();
    Ok(if n % 2 == 1 {
        d[n / 2]
    } else {
        0.5 * (d[n / 2 - 1] + d[n / 2])
    })
}

/// Mean gamma deviance of `pred` against `reference`:
/// `2 * mean(ln(pred/ref) + ref/pred - 1)`. Both must be strictly positive.
pub fn gamma_deviance(pred: &[f64], reference: &[f64]) -> Result<f64> {
    check_len(pred, reference)?;
    let s: f64 = pred
        .iter()
        .zip(reference)
        .map(|(p, r)| (p / r).ln() + r / p - 1.0)
        .sum();
    Ok((2.0 * s / pred.len() as f64).max(0.0))
}

/// Gamma-deviance distance.
///
/// If any entry of either vector is `<= 0`, both are shifted by
/// `max(0, -min) + 1` first. The deviance is evaluated with the vector whose
/// mean is larger (ties: lexicographically larger) in the prediction slot, so
/// the result does not depend on argument order.
pub fn mgd_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    check_len(a, b)?;
    let min = a.iter().chain(b).copied().fold(f64::INFINITY, f64::min);
    let shift = if min <= 0.0 { (-min).max(0.0) + 1.0 } else { 0.0 };
    let sa: Vec<f64> = a.iter().map(|v| v + shift).collect();
    let sb: Vec<f64> = b.iter().map(|v| v + shift).collect();
    let (pred, reference) = if orient(&sa, &sb) { (&sa, &sb) } else { (&sb, &sa) };
    gamma_deviance(pred, reference)
}

/// True when `a` goes in the prediction slot.
fn orient(a: &[f64], b: &[f64]) -> bool {
    let (ma, mb) = (a.iter().sum::<f64>(), b.iter().sum::<f64>());
    if ma != mb {
        return ma > mb;
    }
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Equal => continue,
            o => return o == std::cmp::Ordering::Greater,
        }
    }
    true
}

/// Index of the smallest distance; the earliest index wins ties.
pub fn select_argmin(distances: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &d) in distances.iter().enumerate() {
        match best {
            Some((_, b)) if d >= b => {}
            _ => best = Some((i, d)),
        }
    }
    best.map(|(i, _)| i)
}

fn project(v: &[f64], include_categorical: bool) -> &[f64] {
    if include_categorical || v.len() < 2 {
        v
    } else {
        &v[2..]
    }
}

/// Picks the known task closest to `new_avg`. `known` must be in learning
/// order; ties go to the earlier entry. `Rand` draws uniformly from `rng`.
pub fn most_similar<'k, R: Rng + ?Sized>(
    new_avg: &AvgFeatureVector,
    known: &'k [(TaskKey, AvgFeatureVector)],
    opts: SimilarityOptions,
    rng: &mut R,
    exec: Exec,
) -> Result<&'k TaskKey> {
    if known.is_empty() {
        return Err(Error::State("no known tasks to compare against".into()));
    }
    if opts.metric.is_random() {
        return Ok(&known[rng.random_range(0..known.len())].0);
    }
    let target = project(&new_avg.mean, opts.include_categorical);
    let distances = exec.try_map(known, |(_, avg)| {
        let other = project(&avg.mean, opts.include_categorical);
        opts.metric.distance(target, other).expect("deterministic metric")
    })?;
    let i = select_argmin(&distances).expect("non-empty");
    Ok(&known[i].0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn avg(v: &[f64]) -> AvgFeatureVector {
        let mut a = AvgFeatureVector::new();
        a.absorb_vector(v);
        a
    }

    #[test]
    fn first_absorb_copies() {
        let a = avg(&[1.0, 2.0]);
        assert_eq!(a.mean, vec![1.0, 2.0]);
        assert_eq!(a.count, 1);
    }

    #[test]
    fn two_point_mean() {
        let mut a = avg(&[0.0; 17]);
        a.absorb_vector(&[2.0; 17]);
        assert_eq!(a.mean, vec![1.0; 17]);
        assert_eq!(a.count, 2);
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse_distance(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        let d = rmse_distance(&[0.0, 0.0], &[3.0, 4.0]).unwrap();
        assert!((d - 12.5f64.sqrt()).abs() < 1e-12);
        assert!((d - 3.53553).abs() < 1e-5);
        assert_eq!(d, rmse_distance(&[3.0, 4.0], &[0.0, 0.0]).unwrap());
        assert!(matches!(rmse_distance(&[1.0], &[1.0, 2.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn medae_examples() {
        assert_eq!(medae_distance(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert_eq!(medae_distance(&[1.0, 0.0, 2.0], &[0.0, 0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(medae_distance(&[1.0, 3.0], &[0.0, 0.0]).unwrap(), 2.0);
        assert!(medae_distance(&[1.0], &[]).is_err());
    }

    #[test]
    fn mgd_examples() {
        assert_eq!(mgd_distance(&[3.0, 5.0], &[3.0, 5.0]).unwrap(), 0.0);
        let expected = 2.0 * (2f64.ln() + 0.5 - 1.0);
        assert!((mgd_distance(&[2.0], &[1.0]).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.38629).abs() < 1e-5);
        assert!((gamma_deviance(&[2.0], &[1.0]).unwrap() - expected).abs() < 1e-12);
        // -1 present: both shifted by 2
        let d = mgd_distance(&[-1.0, 4.0], &[1.0, 2.0]).unwrap();
        let manual = mgd_distance(&[1.0, 6.0], &[3.0, 4.0]).unwrap();
        assert!(d.is_finite());
        assert_eq!(d, manual);
    }

    #[test]
    fn argmin_picks_smallest_and_earliest() {
        assert_eq!(select_argmin(&[2.0, 1.0, 5.0]), Some(1));
        assert_eq!(select_argmin(&[3.0, 1.0, 1.0]), Some(1));
        assert_eq!(select_argmin(&[]), None);
    }

    #[test]
    fn most_similar_finds_duplicate() {
        let known = vec![
            (TaskKey::new("a", "1"), avg(&[1.0, 1.0, 5.0])),
            (TaskKey::new("b", "2"), avg(&[1.0, 1.0, 9.0])),
            (TaskKey::new("c", "3"), avg(&[1.0, 1.0, 7.0])),
        ];
        let q = avg(&[1.0, 1.0, 9.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let k = most_similar(&q, &known, SimilarityOptions::default(), &mut rng, Exec::Sequential)
            .unwrap();
        assert_eq!(k, &known[1].0);
    }

    #[test]
    fn categorical_slots_can_be_excluded() {
        let known = vec![
            (TaskKey::new("a", "1"), avg(&[1.0, 1.0, 50.0])),
            (TaskKey::new("b", "2"), avg(&[90.0, 90.0, 10.0])),
        ];
        let q = avg(&[90.0, 90.0, 48.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let with = most_similar(&q, &known, SimilarityOptions::default(), &mut rng, Exec::Sequential);
        let without = most_similar(
            &q,
            &known,
            SimilarityOptions {
                include_categorical: false,
                ..Default::default()
            },
            &mut rng,
            Exec::Sequential,
        );
        assert_eq!(with.unwrap().vendor, "b");
        assert_eq!(without.unwrap().vendor, "a");
    }

    #[test]
    fn empty_known_is_state_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = most_similar(&avg(&[1.0]), &[], SimilarityOptions::default(), &mut rng, Exec::Sequential);
        assert!(matches!(r, Err(Error::State(_))));
    }

    #[test]
    fn metric_names_parse() {
        for m in SimilarityMetric::ALL {
            assert_eq!(m.cli_name().parse::<SimilarityMetric>().unwrap(), m);
        }
        let err = "bogus".parse::<SimilarityMetric>().unwrap_err().to_string();
        for name in ["rand", "medae", "mgd", "rmse"] {
            assert!(err.contains(name));
        }
    }

    proptest! {
        #[test]
        fn incremental_mean_is_permutation_invariant(
            rows in proptest::collection::vec(proptest::collection::vec(-500.0f64..500.0, 4), 1..60),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            let mut shuffled = rows.clone();
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let mut a = AvgFeatureVector::new();
            rows.iter().for_each(|r| a.absorb_vector(r));
            let mut b = AvgFeatureVector::new();
            shuffled.iter().for_each(|r| b.absorb_vector(r));
            for (x, y) in a.mean.iter().zip(&b.mean) {
                prop_assert!((x - y).abs() < 1e-9);
            }
            prop_assert_eq!(a.count, rows.len() as u64);
        }

        #[test]
        fn argmin_invariant_under_shift_and_scale(
            d in proptest::collection::vec(0.0f64..100.0, 1..30),
            shift in -50.0f64..50.0,
            scale in 0.01f64..100.0,
        ) {
            let base = select_argmin(&d);
            let shifted: Vec<f64> = d.iter().map(|x| x + shift).collect();
            let scaled: Vec<f64> = d.iter().map(|x| x * scale).collect();
            prop_assert_eq!(select_argmin(&shifted).map(|i| d[i]), base.map(|i| d[i]));
            prop_assert_eq!(select_argmin(&scaled).map(|i| d[i]), base.map(|i| d[i]));
        }

        #[test]
        fn deterministic_distances_are_premetrics(
            pair in proptest::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 1..20)
        ) {
            let a: Vec<f64> = pair.iter().map(|p| p.0).collect();
            let b: Vec<f64> = pair.iter().map(|p| p.1).collect();
            for m in [SimilarityMetric::Rmse, SimilarityMetric::MedAE, SimilarityMetric::Mgd] {
                let ab = m.distance(&a, &b).unwrap().unwrap();
                let ba = m.distance(&b, &a).unwrap().unwrap();
                prop_assert!(ab >= 0.0);
                prop_assert_eq!(ab, ba);
                prop_assert_eq!(m.distance(&a, &a).unwrap().unwrap(), 0.0);
            }
        }
    }
}
