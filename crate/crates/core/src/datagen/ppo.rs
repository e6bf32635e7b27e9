//! Proximal policy optimization over relay moves.
//!
//! The state is a deployment, the action one raw Gaussian sample per relay
//! coordinate, and the applied move is each relay's sampled 2-vector scaled
//! to length ζ. The reward is the resulting change in exact max-flow.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{DatagenError, PpoConfig};
use crate::channel::{ChannelParams, Deployment, Point};
use crate::models::{ActorModel, CriticModel, GraphInput, Model};
use crate::nn::{Adam, Tape, Tensor, Var};
use crate::optimize::{apply_directions, deployment_max_flow, StepOptions};
use crate::rng::{stream, Purpose};
use crate::spectral::unit_or_zero;

/// Log-ratios are clamped to this before exponentiation.
pub const LOG_RATIO_CLAMP: f64 = 20.0;

/// `min{a, c}·d` if `d > 0`, else `max{a, b}·d`.
pub fn clip(a: f64, b: f64, c: f64, d: f64) -> f64 {
    if d > 0.0 {
        a.min(c) * d
    } else {
        a.max(b) * d
    }
}

/// Per-sample clipped objective `min{ρA, clip(ρ, 1−τ, 1+τ, A)}` and its
/// derivative with respect to `ρ`.
pub fn surrogate(rho: f64, adv: f64, tau: f64) -> (f64, f64) {
    let plain = rho * adv;
    let clipped = clip(rho, 1.0 - tau, 1.0 + tau, adv);
    if plain <= clipped {
        (plain, adv)
    } else {
        (clipped, 0.0)
    }
}

/// Log-density of independent Gaussians, summed over all entries.
pub fn gaussian_log_density(action: &Tensor, mean: &Tensor, std: &Tensor) -> f64 {
    let half_log_2pi = 0.5 * (2.0 * PI).ln();
    action
        .data()
        .iter()
        .zip(mean.data())
        .zip(std.data())
        .map(|((a, m), s)| {
            let z = (a - m) / s;
            -0.5 * z * z - s.ln() - half_log_2pi
        })
        .sum()
}

/// Actor, critic and their optimizers.
#[derive(Debug, Clone)]
pub struct PpoAgent {
    pub actor: ActorModel,
    pub critic: CriticModel,
    actor_opt: Adam,
    critic_opt: Adam,
}

impl PpoAgent {
    pub fn new(relays: usize, cfg: &PpoConfig) -> Self {
        let mut rng = stream(cfg.seed, Purpose::ModelInit, 100);
        let actor = ActorModel::new(relays, &mut rng);
        let critic = CriticModel::new(&mut rng);
        PpoAgent::from_models(actor, critic, cfg)
    }

    pub fn from_models(actor: ActorModel, critic: CriticModel, cfg: &PpoConfig) -> Self {
        let actor_opt = Adam::new(actor.params(), cfg.lr_actor);
        let critic_opt = Adam::new(critic.params(), cfg.lr_critic);
        PpoAgent { actor, critic, actor_opt, critic_opt }
    }

    /// Samples a raw action and returns it with its log-density and the
    /// per-relay unit directions it implies.
    pub fn sample_action<R: Rng>(&self, input: &GraphInput, rng: &mut R) -> Result<(Tensor, f64, Vec<Point>), DatagenError> {
        let (mean, std) = self.actor.distribution(input)?;
        let action = Tensor::from_fn(mean.rows(), mean.cols(), |i, j| {
            let eps: f64 = rng.sample(StandardNormal);
            mean.get(i, j) + std.get(i, j) * eps
        });
        let log_prob = gaussian_log_density(&action, &mean, &std);
        let dirs = (0..action.rows()).map(|r| unit_or_zero([action.get(r, 0), action.get(r, 1)])).collect();
        Ok((action, log_prob, dirs))
    }
}

/// One transition.
#[derive(Debug, Clone)]
pub struct BufferEntry {
    pub segment: usize,
    pub t: usize,
    pub state: Deployment,
    pub next: Deployment,
    pub input: GraphInput,
    pub next_input: GraphInput,
    pub action: Tensor,
    pub log_prob: f64,
    pub flow: f64,
    pub next_flow: f64,
    pub reward: f64,
    pub value: f64,
    pub next_value: f64,
    pub advantage: f64,
    pub target: f64,
}

fn step_options(cfg: &PpoConfig, n: usize) -> StepOptions {
    StepOptions { arena_half: cfg.arena_half, ..StepOptions::new(cfg.zeta, n) }
}

/// Collects `phi` segments of `horizon` steps. Segment `k` of epoch `e`
/// starts from `pool[(e·phi + k) mod |pool|]`, so the state returns to a
/// start deployment every `horizon` steps.
pub fn ppo_rollout_epoch(
    agent: &PpoAgent,
    params: &ChannelParams,
    pool: &[Deployment],
    epoch: usize,
    cfg: &PpoConfig,
) -> Result<Vec<BufferEntry>, DatagenError> {
    if pool.is_empty() {
        return Err(DatagenError::EmptyPool);
    }
    let mut rng = stream(cfg.seed, Purpose::PpoRollout, epoch as u64);
    let mut buffer = Vec::with_capacity(cfg.buffer_len());
    for segment in 0..cfg.phi {
        let start = &pool[(epoch * cfg.phi + segment) % pool.len()];
        let opts = step_options(cfg, start.n());
        let mut state = start.clone();
        let mut input = GraphInput::from_deployment(params, &state)?;
        let mut flow = deployment_max_flow(params, &state)?;
        for t in 0..cfg.horizon {
            let (action, log_prob, dirs) = agent.sample_action(&input, &mut rng)?;
            if !log_prob.is_finite() {
                return Err(DatagenError::NonFinite {
                    what: "actor output",
                    epoch,
                    detail: format!("segment {segment}, step {t}"),
                });
            }
            let next = apply_directions(&state, &dirs, &opts)?;
            let next_input = GraphInput::from_deployment(params, &next)?;
            let next_flow = deployment_max_flow(params, &next)?;
            buffer.push(BufferEntry {
                segment,
                t,
                state: state.clone(),
                next: next.clone(),
                input: input.clone(),
                next_input: next_input.clone(),
                action,
                log_prob,
                flow,
                next_flow,
                reward: next_flow - flow,
                value: 0.0,
                next_value: 0.0,
                advantage: 0.0,
                target: 0.0,
            });
            state = next;
            input = next_input;
            flow = next_flow;
        }
    }
    compute_advantages(&agent.critic, &mut buffer, cfg.gamma)?;
    Ok(buffer)
}

/// `R_t = r_t + γ V(s'_t)` and `A_t = R_t − V(s_t)` with the current critic.
pub fn compute_advantages(critic: &CriticModel, buffer: &mut [BufferEntry], gamma: f64) -> Result<(), DatagenError> {
    for e in buffer.iter_mut() {
        e.value = critic.value(&e.input)?;
        e.next_value = critic.value(&e.next_input)?;
        e.target = e.reward + gamma * e.next_value;
        e.advantage = e.target - e.value;
    }
    Ok(())
}

/// `ρ_t` of every entry under the agent's current actor.
pub fn policy_ratios(agent: &PpoAgent, buffer: &[BufferEntry]) -> Result<Vec<f64>, DatagenError> {
    buffer
        .iter()
        .map(|e| {
            let (mean, std) = agent.actor.distribution(&e.input)?;
            let lr = gaussian_log_density(&e.action, &mean, &std) - e.log_prob;
            Ok(lr.clamp(-LOG_RATIO_CLAMP, LOG_RATIO_CLAMP).exp())
        })
        .collect()
}

/// Diagnostics from one [`ppo_update`].
#[derive(Debug, Clone, Default)]
pub struct UpdateStats {
    /// Ratios seen in the first minibatch, before any parameter changed.
    pub first_batch_ratios: Vec<f64>,
    pub mean_actor_objective: f64,
    pub mean_critic_loss: f64,
}

/// `M` epochs of minibatch ascent on the clipped objective and descent on
/// the Huber critic loss. Advantages and targets stay frozen throughout.
pub fn ppo_update(
    agent: &mut PpoAgent,
    buffer: &[BufferEntry],
    cfg: &PpoConfig,
    epoch: usize,
) -> Result<UpdateStats, DatagenError> {
    let mut rng = stream(cfg.seed, Purpose::PpoShuffle, epoch as u64);
    let mut order: Vec<usize> = (0..buffer.len()).collect();
    let mut stats = UpdateStats::default();
    let (mut obj_sum, mut loss_sum, mut batches) = (0.0, 0.0, 0usize);
    for inner in 0..cfg.inner_epochs {
        order.shuffle(&mut rng);
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let (obj, ratios) = actor_batch(agent, buffer, chunk, cfg, epoch)?;
            if inner == 0 && b == 0 {
                stats.first_batch_ratios = ratios;
            }
            let loss = critic_batch(agent, buffer, chunk, epoch)?;
            obj_sum += obj;
            loss_sum += loss;
            batches += 1;
        }
    }
    if batches > 0 {
        stats.mean_actor_objective = obj_sum / batches as f64;
        stats.mean_critic_loss = loss_sum / batches as f64;
    }
    Ok(stats)
}

fn actor_batch(
    agent: &mut PpoAgent,
    buffer: &[BufferEntry],
    idx: &[usize],
    cfg: &PpoConfig,
    epoch: usize,
) -> Result<(f64, Vec<f64>), DatagenError> {
    let scale = 1.0 / idx.len() as f64;
    let mut tape = Tape::new();
    let p = agent.actor.params().bind(&mut tape);
    let mut seeds: Vec<(Var, Tensor)> = Vec::with_capacity(2 * idx.len());
    let mut objective = 0.0;
    let mut ratios = Vec::with_capacity(idx.len());
    for &i in idx {
        let e = &buffer[i];
        let (x, a) = e.input.bind(&mut tape);
        let out = agent.actor.forward(&mut tape, &p, x, a)?;
        let (mean, std) = (tape.value(out.mean), tape.value(out.std));
        let log_ratio = gaussian_log_density(&e.action, mean, std) - e.log_prob;
        let clamped = log_ratio.abs() > LOG_RATIO_CLAMP;
        let rho = log_ratio.clamp(-LOG_RATIO_CLAMP, LOG_RATIO_CLAMP).exp();
        let (obj, d_rho) = surrogate(rho, e.advantage, cfg.tau);
        if !obj.is_finite() {
            return Err(DatagenError::NonFinite { what: "actor objective", epoch, detail: format!("entry {i}") });
        }
        objective += obj * scale;
        ratios.push(rho);
        // d obj / d log π = ρ · d obj / dρ; the loss is the negated mean objective
        let coef = if clamped { 0.0 } else { -scale * rho * d_rho };
        if coef == 0.0 {
            continue;
        }
        let d_mean = Tensor::from_fn(mean.rows(), mean.cols(), |r, c| {
            let (m, s) = (mean.get(r, c), std.get(r, c));
            coef * (e.action.get(r, c) - m) / (s * s)
        });
        let d_std = Tensor::from_fn(std.rows(), std.cols(), |r, c| {
            let (m, s) = (mean.get(r, c), std.get(r, c));
            let z = e.action.get(r, c) - m;
            coef * (z * z / (s * s * s) - 1.0 / s)
        });
        seeds.push((out.mean, d_mean));
        seeds.push((out.std, d_std));
    }
    if !seeds.is_empty() {
        let grads = tape.backward_seeded(&seeds)?;
        let g = agent.actor.params().collect_grads(&tape, &grads, &p);
        agent.actor_opt.step(agent.actor.params_mut(), &g)?;
    }
    Ok((objective, ratios))
}

fn critic_batch(agent: &mut PpoAgent, buffer: &[BufferEntry], idx: &[usize], epoch: usize) -> Result<f64, DatagenError> {
    let scale = 1.0 / idx.len() as f64;
    let mut tape = Tape::new();
    let p = agent.critic.params().bind(&mut tape);
    let mut total: Option<Var> = None;
    for &i in idx {
        let e = &buffer[i];
        let (x, a) = e.input.bind(&mut tape);
        let v = agent.critic.forward(&mut tape, &p, x, a)?;
        let target = tape.constant(Tensor::scalar(e.target));
        let diff = tape.sub(v, target)?;
        let h = tape.huber(diff);
        total = Some(match total {
            Some(t) => tape.add(t, h)?,
            None => h,
        });
    }
    let Some(total) = total else { return Ok(0.0) };
    let loss = tape.scale(total, scale);
    let value = tape.value(loss).get(0, 0);
    if !value.is_finite() {
        return Err(DatagenError::NonFinite { what: "critic loss", epoch, detail: format!("{value}") });
    }
    let grads = tape.backward(loss)?;
    let g = agent.critic.params().collect_grads(&tape, &grads, &p);
    agent.critic_opt.step(agent.critic.params_mut(), &g)?;
    Ok(value)
}

/// Outcome of [`train_ppo`].
#[derive(Debug, Clone, Default)]
pub struct PpoReport {
    /// Mean per-step reward of each epoch's buffer.
    pub epoch_rewards: Vec<f64>,
    pub converged: bool,
}

fn converged(history: &[f64], window: usize, tol: f64) -> bool {
    if window == 0 || history.len() < 2 * window {
        return false;
    }
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let n = history.len();
    let now = mean(&history[n - window..]);
    let before = mean(&history[n - 2 * window..n - window]);
    (now - before).abs() < tol * before.abs()
}

/// Runs rollout/update epochs until the reward moving average settles or
/// `max_epochs` is reached.
pub fn train_ppo(
    agent: &mut PpoAgent,
    params: &ChannelParams,
    pool: &[Deployment],
    cfg: &PpoConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<PpoReport, DatagenError> {
    cfg.validate()?;
    let mut report = PpoReport::default();
    for epoch in 0..cfg.max_epochs {
        let buffer = ppo_rollout_epoch(agent, params, pool, epoch, cfg)?;
        let mean_reward = buffer.iter().map(|e| e.reward).sum::<f64>() / buffer.len() as f64;
        report.epoch_rewards.push(mean_reward);
        on_epoch(epoch, mean_reward);
        ppo_update(agent, &buffer, cfg, epoch)?;
        if converged(&report.epoch_rewards, cfg.converge_window, cfg.converge_tol) {
            report.converged = true;
            break;
        }
    }
    Ok(report)
}
