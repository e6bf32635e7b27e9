//! Layer ablation: GraphConv against a first-order convolution.

use super::eval::{evaluate, EvalReport};
use super::pipeline::{mfl_hyper, run_trajectories};
use super::train::train_mfl;
use super::{ExperimentConfig, HarnessError, Scenario};
use crate::datagen::Sample;
use crate::models::{ConvKind, MflModel};
use crate::nn::{NnError, Tape, Var};
use crate::optimize::{Method, Models};
use crate::rng::{stream, Purpose};

/// `(X + A·X)·W + b`: one shared weight for a node and its neighbourhood sum,
/// with no separate root transform.
pub fn first_order_conv(tape: &mut Tape, x: Var, a: Var, w: Var, b: Var) -> Result<Var, NnError> {
    let (sx, sa) = (tape.value(x).shape(), tape.value(a).shape());
    if sa[0] != sa[1] || sa[1] != sx[0] {
        return Err(NnError::Shape { op: "first_order_conv", lhs: sx, rhs: sa });
    }
    let agg = tape.matmul(a, x)?;
    let mixed = tape.add(x, agg)?;
    let y = tape.matmul(mixed, w)?;
    tape.add_row(y, b)
}

/// Trains an MFL network with each layer type on `samples`, optimizes every
/// scenario with both, and reports the first-order variant against the
/// GraphConv one.
pub fn ablation_layer(
    cfg: &ExperimentConfig,
    samples: &[Sample],
    scenarios: &[Scenario],
) -> Result<EvalReport, HarnessError> {
    let params = cfg.channel();
    let hyper = mfl_hyper(cfg);
    let mut runs = Vec::new();
    for (label, kind) in [("mfl", ConvKind::GraphConv), ("mfl-first-order", ConvKind::FirstOrder)] {
        let mut model = MflModel::new(kind, &mut stream(cfg.seed, Purpose::ModelInit, 0));
        train_mfl(&mut model, &params, samples, &hyper, |_, _| {})?;
        let models = Models { mfl: Some(&model), ..Models::default() };
        runs.push((label.to_string(), run_trajectories(cfg, Method::Mfl, models, scenarios)?));
    }
    evaluate(&runs, "mfl")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;

    #[test]
    fn shares_one_weight() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::from_rows(&[vec![1.0], vec![2.0]]).unwrap());
        let a = tape.constant(Tensor::from_rows(&[vec![0.0, 0.5], vec![0.5, 0.0]]).unwrap());
        let w = tape.constant(Tensor::scalar(3.0));
        let b = tape.constant(Tensor::scalar(1.0));
        let y = first_order_conv(&mut tape, x, a, w, b).unwrap();
        // row 0: (1 + 0.5·2)·3 + 1 = 7; row 1: (2 + 0.5·1)·3 + 1 = 8.5
        assert_eq!(tape.value(y).data(), &[7.0, 8.5]);
    }
}
