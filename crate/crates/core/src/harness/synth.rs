//! Synthetic check: can the graph network learn a smooth function of node
//! features *and* its derivatives?
//!
//! The graph is the complete unit-weight graph on three nodes, each carrying
//! two features drawn from `Unif(1, 4)`. Targets are
//! `f₁ = Σ x²_{kl}` or `f₂ = Σ_k x_{k1} x_{k2}`.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;

use super::HarnessError;
use crate::nn::{
    global_add_pool, grad_wrt_inputs, graph_conv, graph_size_norm, linear, Adam, InputRole, NnError, ParamSet, Tape,
    Tensor, Var,
};
use crate::rng::{stream, Purpose};

pub const SYNTH_NODES: usize = 3;
pub const SYNTH_FEATURES: usize = 2;
const WIDTH: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthFunction {
    F1,
    F2,
}

impl SynthFunction {
    pub fn name(self) -> &'static str {
        match self {
            SynthFunction::F1 => "f1",
            SynthFunction::F2 => "f2",
        }
    }

    /// `x` is `3 × 2`, row `k` holding `(x_{k1}, x_{k2})`.
    pub fn value(self, x: &Tensor) -> f64 {
        (0..x.rows())
            .map(|k| {
                let (a, b) = (x.get(k, 0), x.get(k, 1));
                match self {
                    SynthFunction::F1 => a * a + b * b,
                    SynthFunction::F2 => a * b,
                }
            })
            .sum()
    }

    /// Analytic gradient, same shape as `x`.
    pub fn gradient(self, x: &Tensor) -> Tensor {
        Tensor::from_fn(x.rows(), x.cols(), |k, l| match self {
            SynthFunction::F1 => 2.0 * x.get(k, l),
            SynthFunction::F2 => x.get(k, 1 - l),
        })
    }
}

impl fmt::Display for SynthFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SynthFunction {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "f1" => Ok(SynthFunction::F1),
            "f2" => Ok(SynthFunction::F2),
            _ => Err(format!("unknown synthetic function {s:?}")),
        }
    }
}

/// Three GraphConv(·→32) + GELU + size-norm blocks, sum pooling, and a
/// 32-wide two-layer head.
#[derive(Debug, Clone)]
pub struct SynthModel {
    pub params: ParamSet,
}

impl SynthModel {
    pub fn new<R: Rng>(rng: &mut R) -> Self {
        let mut ps = ParamSet::new();
        let mut din = SYNTH_FEATURES;
        for l in 1..=3 {
            ps.push_uniform(format!("conv{l}.w_self"), din, WIDTH, din, rng);
            ps.push_uniform(format!("conv{l}.w_nbr"), din, WIDTH, din, rng);
            ps.push_uniform(format!("conv{l}.b"), 1, WIDTH, din, rng);
            din = WIDTH;
        }
        ps.push_uniform("fc1.w", WIDTH, WIDTH, WIDTH, rng);
        ps.push_uniform("fc1.b", 1, WIDTH, WIDTH, rng);
        ps.push_uniform("fc2.w", WIDTH, 1, WIDTH, rng);
        ps.push_uniform("fc2.b", 1, 1, WIDTH, rng);
        SynthModel { params: ps }
    }

    pub fn forward(&self, tape: &mut Tape, p: &[Var], x: Var, a: Var) -> Result<Var, NnError> {
        let mut h = x;
        for l in 0..3 {
            let z = graph_conv(tape, h, a, p[3 * l], p[3 * l + 1])?;
            let z = tape.add_row(z, p[3 * l + 2])?;
            let z = tape.gelu(z);
            h = graph_size_norm(tape, z);
        }
        let pooled = global_add_pool(tape, h);
        let z = linear(tape, pooled, p[9], p[10])?;
        let z = tape.gelu(z);
        linear(tape, z, p[11], p[12])
    }

    /// Prediction and its gradient with respect to the node features.
    pub fn predict_with_grad(&self, x: &Tensor) -> Result<(f64, Tensor), NnError> {
        let mut tape = Tape::new();
        let p: Vec<Var> = self.params.tensors().iter().map(|t| tape.constant(t.clone())).collect();
        let xv = tape.input(x.clone(), InputRole::Features);
        let av = tape.input(complete_graph(), InputRole::Adjacency);
        let out = self.forward(&mut tape, &p, xv, av)?;
        let g = grad_wrt_inputs(&tape, out)?;
        Ok((tape.value(out).get(0, 0), g.features))
    }
}

pub fn complete_graph() -> Tensor {
    Tensor::from_fn(SYNTH_NODES, SYNTH_NODES, |i, j| if i == j { 0.0 } else { 1.0 })
}

fn draw_inputs<R: Rng>(rng: &mut R, count: usize) -> Vec<Tensor> {
    (0..count)
        .map(|_| Tensor::from_fn(SYNTH_NODES, SYNTH_FEATURES, |_, _| rng.random_range(1.0..4.0)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOptions {
    pub samples: usize,
    pub test_samples: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions { samples: 5000, test_samples: 500, epochs: 200, lr: 2e-3, batch_size: 100, seed: 0 }
    }
}

/// Relative errors on held-out inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthReport {
    pub function: SynthFunction,
    pub value_rel_errors: Vec<f64>,
    /// Six per test input: one per feature entry.
    pub derivative_rel_errors: Vec<f64>,
    pub epoch_losses: Vec<f64>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

fn max(v: &[f64]) -> f64 {
    v.iter().copied().fold(0.0, f64::max)
}

impl SynthReport {
    pub fn mean_value_error(&self) -> f64 {
        mean(&self.value_rel_errors)
    }

    pub fn max_value_error(&self) -> f64 {
        max(&self.value_rel_errors)
    }

    pub fn max_derivative_error(&self) -> f64 {
        max(&self.derivative_rel_errors)
    }

    pub fn derivative_fraction_within(&self, tol: f64) -> f64 {
        let n = self.derivative_rel_errors.len().max(1) as f64;
        self.derivative_rel_errors.iter().filter(|&&e| e <= tol).count() as f64 / n
    }
}

/// Trains a fresh [`SynthModel`] on `f` and measures value and derivative
/// errors on an independent test draw.
pub fn synth_check(
    f: SynthFunction,
    opts: &SynthOptions,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<SynthReport, HarnessError> {
    let tag = match f {
        SynthFunction::F1 => 0,
        SynthFunction::F2 => 1,
    };
    let mut model = SynthModel::new(&mut stream(opts.seed, Purpose::ModelInit, 200 + tag));
    let train = draw_inputs(&mut stream(opts.seed, Purpose::Synth, 2 * tag), opts.samples);
    let test = draw_inputs(&mut stream(opts.seed, Purpose::Synth, 2 * tag + 1), opts.test_samples);
    let labels: Vec<f64> = train.iter().map(|x| f.value(x)).collect();
    let adj = complete_graph();

    let mut adam = Adam::new(&model.params, opts.lr);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut losses = Vec::with_capacity(opts.epochs);
    for epoch in 0..opts.epochs {
        order.shuffle(&mut stream(opts.seed, Purpose::TrainShuffle, 1000 + 2 * epoch as u64 + tag));
        let mut total = 0.0;
        for chunk in order.chunks(opts.batch_size.max(1)) {
            let mut tape = Tape::new();
            let p = model.params.bind(&mut tape);
            let a = tape.constant(adj.clone());
            let mut sum: Option<Var> = None;
            for &i in chunk {
                let x = tape.constant(train[i].clone());
                let pred = model.forward(&mut tape, &p, x, a)?;
                let y = tape.constant(Tensor::scalar(labels[i]));
                let d = tape.sub(pred, y)?;
                let sq = tape.square(d);
                sum = Some(match sum {
                    Some(s) => tape.add(s, sq)?,
                    None => sq,
                });
            }
            let Some(sum) = sum else { continue };
            let loss = tape.scale(sum, 1.0 / chunk.len() as f64);
            let value = tape.value(loss).get(0, 0);
            if !value.is_finite() {
                return Err(HarnessError::Numerical(format!("synthetic loss non-finite at epoch {epoch}")));
            }
            total += value * chunk.len() as f64;
            let grads = tape.backward(loss)?;
            let g = model.params.collect_grads(&tape, &grads, &p);
            adam.step(&mut model.params, &g)?;
        }
        let m = total / train.len().max(1) as f64;
        losses.push(m);
        on_epoch(epoch, m);
    }

    let mut value_rel_errors = Vec::with_capacity(test.len());
    let mut derivative_rel_errors = Vec::with_capacity(6 * test.len());
    for x in &test {
        let (pred, grad) = model.predict_with_grad(x)?;
        let truth = f.value(x);
        value_rel_errors.push((pred - truth).abs() / truth.abs());
        let want = f.gradient(x);
        for (g, w) in grad.data().iter().zip(want.data()) {
            derivative_rel_errors.push((g - w).abs() / w.abs());
        }
    }
    Ok(SynthReport { function: f, value_rel_errors, derivative_rel_errors, epoch_losses: losses })
}
