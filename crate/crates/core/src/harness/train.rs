//! Supervised training of the MFL and GL networks on snapshot datasets.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;

use super::HarnessError;
use crate::channel::ChannelParams;
use crate::datagen::Sample;
use crate::models::{GlModel, GraphInput, MflModel, Model};
use crate::nn::{frobenius_mse, Adam, Tape, Tensor, Var};
use crate::rng::{stream, Purpose};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainHyper {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

/// Mean training loss per epoch.
#[derive(Debug, Clone, Default)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
}

/// Splits samples by deployment id: roughly `fraction` of the deployments
/// (at least one when `fraction > 0` and there are two or more) go to the
/// held-out side.
pub fn split_by_deployment(samples: &[Sample], fraction: f64, seed: u64) -> (Vec<Sample>, Vec<Sample>) {
    let ids: BTreeSet<usize> = samples.iter().map(|s| s.deployment_id).collect();
    let mut ids: Vec<usize> = ids.into_iter().collect();
    ids.shuffle(&mut stream(seed, Purpose::Split, 0));
    let mut k = (fraction * ids.len() as f64).round() as usize;
    if fraction > 0.0 && k == 0 && ids.len() > 1 {
        k = 1;
    }
    let held: BTreeSet<usize> = ids.into_iter().take(k).collect();
    samples.iter().cloned().partition(|s| !held.contains(&s.deployment_id))
}

pub fn inputs_for(params: &ChannelParams, samples: &[Sample]) -> Result<Vec<GraphInput>, HarnessError> {
    samples
        .iter()
        .map(|s| Ok(GraphInput::from_deployment(params, &s.deployment)?))
        .collect()
}

fn check_loss(loss: f64, epoch: usize) -> Result<(), HarnessError> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(HarnessError::Numerical(format!("non-finite training loss at epoch {epoch}")))
    }
}

/// Minimizes the mean squared error between MFL predictions and max-flow labels.
pub fn train_mfl(
    model: &mut MflModel,
    params: &ChannelParams,
    samples: &[Sample],
    hyper: &TrainHyper,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<TrainReport, HarnessError> {
    let inputs = inputs_for(params, samples)?;
    let labels: Vec<f64> = samples.iter().map(|s| s.max_flow).collect();
    let mut adam = Adam::new(model.params(), hyper.lr);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut report = TrainReport::default();
    for epoch in 0..hyper.epochs {
        order.shuffle(&mut stream(hyper.seed, Purpose::TrainShuffle, epoch as u64));
        let mut total = 0.0;
        for chunk in order.chunks(hyper.batch_size.max(1)) {
            let mut tape = Tape::new();
            let p = model.params().bind(&mut tape);
            let mut sum: Option<Var> = None;
            for &i in chunk {
                let (x, a) = inputs[i].bind(&mut tape);
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
            check_loss(value, epoch)?;
            total += value * chunk.len() as f64;
            let grads = tape.backward(loss)?;
            let g = model.params().collect_grads(&tape, &grads, &p);
            adam.step(model.params_mut(), &g)?;
        }
        let mean = total / samples.len().max(1) as f64;
        report.epoch_losses.push(mean);
        on_epoch(epoch, mean);
    }
    Ok(report)
}

/// Minimizes `‖Y − Ỹ‖_F²` between normalized GL outputs and the recorded
/// unit directions, averaged over samples. Samples flagged invalid are skipped.
pub fn train_gl(
    model: &mut GlModel,
    params: &ChannelParams,
    samples: &[Sample],
    hyper: &TrainHyper,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<TrainReport, HarnessError> {
    let usable: Vec<&Sample> = samples.iter().filter(|s| s.valid).collect();
    let inputs: Vec<GraphInput> = usable
        .iter()
        .map(|s| GraphInput::from_deployment(params, &s.deployment))
        .collect::<Result<_, _>>()?;
    let targets: Vec<Tensor> = usable
        .iter()
        .map(|s| Tensor::from_fn(s.directions.len(), 2, |r, c| s.directions[r][c]))
        .collect();
    let mut adam = Adam::new(model.params(), hyper.lr);
    let mut order: Vec<usize> = (0..usable.len()).collect();
    let mut report = TrainReport::default();
    for epoch in 0..hyper.epochs {
        order.shuffle(&mut stream(hyper.seed, Purpose::TrainShuffle, epoch as u64));
        let mut total = 0.0;
        for chunk in order.chunks(hyper.batch_size.max(1)) {
            let mut tape = Tape::new();
            let p = model.params().bind(&mut tape);
            let mut sum: Option<Var> = None;
            for &i in chunk {
                let (x, a) = inputs[i].bind(&mut tape);
                let out = model.forward(&mut tape, &p, x, a)?;
                let y = tape.constant(targets[i].clone());
                let l = frobenius_mse(&mut tape, out.unit, y)?;
                sum = Some(match sum {
                    Some(s) => tape.add(s, l)?,
                    None => l,
                });
            }
            let Some(sum) = sum else { continue };
            let loss = tape.scale(sum, 1.0 / chunk.len() as f64);
            let value = tape.value(loss).get(0, 0);
            check_loss(value, epoch)?;
            total += value * chunk.len() as f64;
            let grads = tape.backward(loss)?;
            let g = model.params().collect_grads(&tape, &grads, &p);
            adam.step(model.params_mut(), &g)?;
        }
        let mean = total / usable.len().max(1) as f64;
        report.epoch_losses.push(mean);
        on_epoch(epoch, mean);
    }
    Ok(report)
}

/// `|prediction − label| / |label|` for every sample with a nonzero label.
pub fn mfl_relative_errors(model: &MflModel, params: &ChannelParams, samples: &[Sample]) -> Result<Vec<f64>, HarnessError> {
    let mut out = Vec::with_capacity(samples.len());
    for s in samples {
        if s.max_flow == 0.0 {
            continue;
        }
        let pred = model.predict(&GraphInput::from_deployment(params, &s.deployment)?)?;
        out.push((pred - s.max_flow).abs() / s.max_flow.abs());
    }
    Ok(out)
}
