//! Reverse-mode versus central-difference comparison on tape graphs.

use rand::Rng;
use relayflow::channel::ChannelParams;
use relayflow::models::{GraphInput, Model};
use relayflow::nn::{NnError, Tape, Tensor, Var};
use super::random_deployment;
use relayflow_oracle::{finite_diff, max_relative_error, FiniteDiffSpec};

pub const INSTANCES: usize = 50;
pub const SPEC: FiniteDiffSpec = FiniteDiffSpec::NETWORK;

pub type Build<'a> = &'a dyn Fn(&mut Tape, &[Var]) -> Result<Var, NnError>;

/// Fixed, non-trivial weights so vector outputs reduce to one scalar.
pub fn weights(rows: usize, cols: usize) -> Tensor {
    Tensor::from_fn(rows, cols, |i, j| ((7 * i + 3 * j) as f64 * 0.37).sin() + 0.5)
}

pub fn scalarize(tape: &mut Tape, out: Var) -> Var {
    let [r, c] = tape.value(out).shape();
    if r == 1 && c == 1 {
        return out;
    }
    let w = tape.constant(weights(r, c));
    let m = tape.mul(out, w).unwrap();
    tape.sum_all(m)
}

pub fn eval(build: Build, leaves: &[Tensor]) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = leaves.iter().map(|t| tape.param(t.clone())).collect();
    let out = build(&mut tape, &vars).unwrap();
    let s = scalarize(&mut tape, out);
    tape.value(s).get(0, 0)
}

/// Compares reverse-mode gradients with central differences on the listed
/// `(leaf, flat index)` coordinates and returns the relative error.
pub fn check(build: Build, leaves: &[Tensor], coords: &[(usize, usize)]) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = leaves.iter().map(|t| tape.param(t.clone())).collect();
    let out = build(&mut tape, &vars).unwrap();
    let s = scalarize(&mut tape, out);
    let grads = tape.backward(s).unwrap();
    let mut analytic = Vec::with_capacity(coords.len());
    let mut numeric = Vec::with_capacity(coords.len());
    for &(k, idx) in coords {
        analytic.push(grads.wrt(&tape, vars[k]).data()[idx]);
        let f = |x: &[f64]| {
            let mut probe = leaves.to_vec();
            probe[k].data_mut()[idx] = x[0];
            eval(build, &probe)
        };
        numeric.push(finite_diff(f, &[leaves[k].data()[idx]], SPEC.step).unwrap()[0]);
    }
    max_relative_error(&analytic, &numeric, 1e-6)
}

pub fn all_coords(leaves: &[Tensor]) -> Vec<(usize, usize)> {
    leaves.iter().enumerate().flat_map(|(k, t)| (0..t.len()).map(move |i| (k, i))).collect()
}

/// Entries in `[-2, 2]`, kept at least 0.05 from zero and from ±1 so kinks
/// (relu at 0, Huber at ±1) are never straddled by the probe.
pub fn rand_tensor<R: Rng>(r: &mut R, rows: usize, cols: usize) -> Tensor {
    Tensor::from_fn(rows, cols, |_, _| loop {
        let v: f64 = r.random_range(-2.0..2.0);
        if v.abs() > 0.05 && (v.abs() - 1.0).abs() > 0.05 {
            return v;
        }
    })
}

/// Every input coordinate plus a random subset of parameter coordinates.
pub fn model_coords<R: Rng>(r: &mut R, leaves: &[Tensor], n_params: usize, sampled: usize) -> Vec<(usize, usize)> {
    let mut coords: Vec<(usize, usize)> =
        (n_params..leaves.len()).flat_map(|k| (0..leaves[k].len()).map(move |i| (k, i))).collect();
    for _ in 0..sampled {
        let k = r.random_range(0..n_params);
        coords.push((k, r.random_range(0..leaves[k].len())));
    }
    coords
}

/// Worst relative error over `INSTANCES` random draws of the given leaf shapes.
pub fn primitive_error<R: Rng>(r: &mut R, shapes: &[[usize; 2]], build: Build) -> f64 {
    let mut worst: f64 = 0.0;
    for _ in 0..INSTANCES {
        let leaves: Vec<Tensor> = shapes.iter().map(|s| rand_tensor(r, s[0], s[1])).collect();
        worst = worst.max(check(build, &leaves, &all_coords(&leaves)));
    }
    worst
}

/// Worst relative error of a model architecture over `INSTANCES` random
/// models and deployments; inputs are checked in full, parameters sampled.
pub fn model_error<M: Model, R: Rng>(
    r: &mut R,
    make: impl Fn(&mut R) -> M,
    forward: impl Fn(&M, &mut Tape, &[Var], Var, Var) -> Result<Var, NnError>,
) -> f64 {
    let params = ChannelParams::default();
    let mut worst: f64 = 0.0;
    for _ in 0..INSTANCES {
        let model = make(r);
        let input = GraphInput::from_deployment(&params, &random_deployment(r)).unwrap();
        let n_params = model.params().len();
        let mut leaves: Vec<Tensor> = model.params().tensors().to_vec();
        leaves.push(input.x.clone());
        leaves.push(input.a.clone());
        let build = |t: &mut Tape, v: &[Var]| forward(&model, t, &v[..n_params], v[n_params], v[n_params + 1]);
        let coords = model_coords(r, &leaves, n_params, 40);
        worst = worst.max(check(&build, &leaves, &coords));
    }
    worst
}
