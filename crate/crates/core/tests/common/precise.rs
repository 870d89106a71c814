//! Double-double reference forward pass used as a finite-difference oracle.
//!
//! The loss is reported relative to its value at construction, so the f64
//! returned by `loss()` keeps the digits that central differences need.

use nmt_core::data::Window;
use nmt_core::nn::trunk::Block;
use nmt_core::nn::{Mode, Network, Objective, ParamSlot};
use nmt_core::Result;
use twofloat::TwoFloat as D;

fn d(x: f64) -> D {
    D::from(x)
}

/// `a / b` refined by two Newton corrections.
fn div(a: D, b: D) -> D {
    let mut q = d(a.hi() / b.hi());
    for _ in 0..2 {
        let r = a - q * b;
        q += d(r.hi() / b.hi());
    }
    q
}

fn input_rows(net: &Network, batch: &[Window]) -> Vec<Vec<D>> {
    let t = &net.trunk;
    batch
        .iter()
        .map(|w| {
            t.vendor
                .table
                .row(w.vendor_idx)
                .iter()
                .chain(t.product.table.row(w.product_idx))
                .chain(&w.lags)
                .map(|&v| d(v))
                .collect()
        })
        .collect()
}

fn block_forward(b: &Block, h: &[Vec<D>]) -> Vec<Vec<D>> {
    let n = h.len();
    let (out, inp) = (b.linear.weight.rows(), b.linear.weight.cols());
    let z: Vec<Vec<D>> = h
        .iter()
        .map(|x| {
            (0..out)
                .map(|j| {
                    let w = b.linear.weight.row(j);
                    let mut s = d(b.linear.bias[j]);
                    for k in 0..inp {
                        s += x[k] * w[k];
                    }
                    if s.hi() > 0.0 {
                        s
                    } else {
                        d(0.0)
                    }
                })
                .collect()
        })
        .collect();
    let batch_stats = b.norm.mode == Mode::Train && n > 1;
    let mut next = vec![vec![d(0.0); out]; n];
    for j in 0..out {
        let (mean, var) = if batch_stats {
            let mean = div(z.iter().map(|r| r[j]).fold(d(0.0), |a, v| a + v), d(n as f64));
            let ss = z
                .iter()
                .map(|r| (r[j] - mean) * (r[j] - mean))
                .fold(d(0.0), |a, v| a + v);
            (mean, div(ss, d(n as f64)))
        } else {
            (d(b.norm.running_mean[j]), d(b.norm.running_var[j]))
        };
        let sd = (var + b.norm.eps).sqrt();
        for r in 0..n {
            next[r][j] = div(z[r][j] - mean, sd) * b.norm.gamma[j] + b.norm.beta[j];
        }
    }
    next
}

fn head_loss(net: &Network, h: &[Vec<D>], targets: &[f64]) -> D {
    let head = &net.head.layer;
    let mut ss = d(0.0);
    for (x, &target) in h.iter().zip(targets) {
        let mut p = d(head.bias[0]);
        for (k, v) in x.iter().enumerate() {
            p += *v * head.weight.get(0, k);
        }
        let e = p - target;
        ss += e * e;
    }
    (div(ss, d(h.len() as f64)) + 1e-12).sqrt()
}

pub fn precise_loss(net: &Network, batch: &[Window], targets: &[f64]) -> D {
    let mut h = input_rows(net, batch);
    for b in &net.trunk.blocks {
        h = block_forward(b, &h);
    }
    head_loss(net, &h, targets)
}

/// Flat parameters of each stage: embeddings, then one entry per block.
fn stage_params(net: &Network) -> Vec<Vec<f64>> {
    let t = &net.trunk;
    let mut out = vec![[t.vendor.table.values(), t.product.table.values()].concat()];
    for b in &t.blocks {
        out.push(
            [
                b.linear.weight.values(),
                &b.linear.bias,
                &b.norm.gamma,
                &b.norm.beta,
            ]
            .concat(),
        );
    }
    out
}

/// Analytic gradients from the library, loss from [`precise_loss`].
pub struct PreciseObjective<'a> {
    pub net: &'a mut Network,
    pub batch: &'a [Window],
    pub targets: &'a [f64],
    baseline: D,
    /// Parameters and input activations of every stage at construction.
    snapshot: Vec<Vec<f64>>,
    activations: Vec<Vec<Vec<D>>>,
}

impl<'a> PreciseObjective<'a> {
    pub fn new(net: &'a mut Network, batch: &'a [Window], targets: &'a [f64]) -> Self {
        let mut activations = vec![input_rows(net, batch)];
        for b in &net.trunk.blocks {
            let next = block_forward(b, activations.last().unwrap());
            activations.push(next);
        }
        let baseline = head_loss(net, activations.last().unwrap(), targets);
        PreciseObjective {
            snapshot: stage_params(net),
            net,
            batch,
            targets,
            baseline,
            activations,
        }
    }
}

impl Objective for PreciseObjective<'_> {
    fn loss(&mut self) -> Result<f64> {
        // Only stages from the first changed one onward are recomputed.
        let current = stage_params(self.net);
        let first = current
            .iter()
            .zip(&self.snapshot)
            .position(|(a, b)| a != b)
            .unwrap_or(current.len());
        let mut h = if first == 0 {
            input_rows(self.net, self.batch)
        } else {
            self.activations[first - 1].clone()
        };
        for b in &self.net.trunk.blocks[first.saturating_sub(1)..] {
            h = block_forward(b, &h);
        }
        Ok((head_loss(self.net, &h, self.targets) - self.baseline).hi())
    }

    fn compute_gradients(&mut self) -> Result<f64> {
        let refs: Vec<&Window> = self.batch.iter().collect();
        self.net.zero_grad();
        let pred = self.net.forward(&refs)?;
        let (loss, grad) = nmt_core::nn::rmse_loss(&pred, self.targets)?;
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
