//! Central finite-difference gradient checking.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Network, ParamSlot, TrunkInput};
use crate::nn::loss::rmse_loss;
use crate::{Error, Result};

/// Anything with a scalar loss over a set of parameter tensors.
pub trait Objective {
    /// Loss at the current parameters. Must be a pure function of them.
    fn loss(&mut self) -> Result<f64>;
    /// Zeroes the gradients, then fills them for the current parameters.
    fn compute_gradients(&mut self) -> Result<f64>;
    fn params(&mut self) -> Vec<ParamSlot<'_>>;
    fn is_deterministic(&self) -> bool {
        true
    }
}

/// RMSE of a [`Network`] on a fixed batch.
pub struct NetworkObjective<'a, W> {
    pub net: &'a mut Network,
    pub batch: &'a [&'a W],
    pub targets: &'a [f64],
}

impl<W: TrunkInput> Objective for NetworkObjective<'_, W> {
    fn loss(&mut self) -> Result<f64> {
        let pred = self.net.forward(self.batch)?;
        Ok(rmse_loss(&pred, self.targets)?.0)
    }

    fn compute_gradients(&mut self) -> Result<f64> {
        self.net.zero_grad();
        let pred = self.net.forward(self.batch)?;
        let (loss, grad) = rmse_loss(&pred, self.targets)?;
        self.net.backward(&grad)?;
        Ok(loss)
    }

    fn params(&mut self) -> Vec<ParamSlot<'_>> {
        self.net.params()
    }

    fn is_deterministic(&self) -> bool {
        self.net.trunk.is_deterministic()
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    pub eps: f64,
    /// Check at most this many randomly chosen coordinates per tensor.
    pub max_coords_per_tensor: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            eps: 1e-6,
            max_coords_per_tensor: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `tensor[index]` where the maximum occurred.
    pub worst: String,
    pub checked: usize,
}

/// `|a - n| / max(|a|, |n|, 1e-8)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Analytic gradients, one flat vector per tensor.
pub fn analytic_gradients<O: Objective>(obj: &mut O) -> Result<Vec<Vec<f64>>> {
    if !obj.is_deterministic() {
        return Err(Error::State(
            "gradient check needs a deterministic network (dropout in eval mode)".into(),
        ));
    }
    obj.compute_gradients()?;
    Ok(obj.params().iter().map(|s| s.grad.to_vec()).collect())
}

/// Compares `analytic` against central differences of `obj.loss()`.
pub fn compare_with_finite_differences<O: Objective>(
    obj: &mut O,
    analytic: &[Vec<f64>],
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    if !obj.is_deterministic() {
        return Err(Error::State(
            "gradient check needs a deterministic network (dropout in eval mode)".into(),
        ));
    }
    let layout: Vec<(String, usize)> = obj
        .params()
        .iter()
        .map(|s| (s.name.clone(), s.value.len()))
        .collect();
    if layout.len() != analytic.len()
        || layout.iter().zip(analytic).any(|((_, n), a)| *n != a.len())
    {
        return Err(Error::Shape("analytic gradients do not match parameters".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: String::new(),
        checked: 0,
    };
    for (t, (name, len)) in layout.iter().enumerate() {
        let coords: Vec<usize> = match opts.max_coords_per_tensor {
            Some(k) if k < *len => {
                let mut c = sample(&mut rng, *len, k).into_vec();
                c.sort_unstable();
                c
            }
            _ => (0..*len).collect(),
        };
        for c in coords {
            let numeric = central_difference(obj, t, c, opts.eps)?;
            let err = relative_error(analytic[t][c], numeric);
            report.checked += 1;
            if err > report.max_rel_error || report.checked == 1 {
                report.max_rel_error = err;
                report.worst = format!("{name}[{c}]");
            }
        }
    }
    Ok(report)
}

/// Overwrites one coordinate, returning its previous value.
fn perturb<O: Objective>(obj: &mut O, tensor: usize, coord: usize, value: f64) -> f64 {
    std::mem::replace(&mut obj.params()[tensor].value[coord], value)
}

fn central_difference<O: Objective>(obj: &mut O, t: usize, c: usize, eps: f64) -> Result<f64> {
    let original = obj.params()[t].value[c];
    perturb(obj, t, c, original + eps);
    let up = obj.loss();
    perturb(obj, t, c, original - eps);
    let down = obj.loss();
    perturb(obj, t, c, original);
    Ok((up? - down?) / (2.0 * eps))
}

/// Analytic vs. numeric gradient, maximum relative error over the checked
/// coordinates.
pub fn gradient_check<O: Objective>(obj: &mut O, opts: &GradCheckOptions) -> Result<GradCheckReport> {
    let analytic = analytic_gradients(obj)?;
    compare_with_finite_differences(obj, &analytic, opts)
}
