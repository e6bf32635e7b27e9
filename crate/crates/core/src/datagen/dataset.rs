//! Labelled snapshot datasets.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use serde::Deserialize;

use super::{DatagenError, PpoAgent, Strategy};
use crate::channel::{ChannelParams, Deployment, Point};
use crate::harness::Scenario;
use crate::models::GraphInput;
use crate::optimize::{apply_directions, deployment_max_flow, StepOptions};
use crate::records::{self, num, points, RecordError, SCHEMA};
use crate::rng::{stream, Purpose};
use crate::spectral::wcc_directions;

/// One snapshot: the deployment, its exact max-flow, and the unit direction
/// each relay takes when leaving it. The final snapshot of a trajectory has
/// zero directions and `valid == false`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub deployment_id: usize,
    pub step: usize,
    pub deployment: Deployment,
    pub max_flow: f64,
    pub directions: Vec<Point>,
    pub valid: bool,
}

#[derive(Debug, Deserialize)]
struct SampleRecord {
    schema: u32,
    deployment: usize,
    step: usize,
    jammer: Point,
    positions: Vec<Point>,
    max_flow: f64,
    directions: Vec<Point>,
    valid: bool,
}

/// Trajectory length and subsampling.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetOptions {
    pub steps: usize,
    pub interval: usize,
    pub step: StepOptions,
    pub seed: u64,
}

impl DatasetOptions {
    pub fn snapshots_per_deployment(&self) -> usize {
        self.steps / self.interval + 1
    }
}

/// Walks `steps` moves from `dep0`, choosing directions with `next_dirs`
/// and recording every `interval`-th state plus the final one.
fn walk<F>(
    params: &ChannelParams,
    id: usize,
    dep0: &Deployment,
    opts: &DatasetOptions,
    mut next_dirs: F,
) -> Result<Vec<Sample>, DatagenError>
where
    F: FnMut(&Deployment) -> Result<Vec<Point>, DatagenError>,
{
    let mut dep = dep0.clone();
    let mut out = Vec::with_capacity(opts.snapshots_per_deployment());
    for t in 0..opts.steps {
        let dirs = next_dirs(&dep)?;
        if t % opts.interval == 0 {
            out.push(Sample {
                deployment_id: id,
                step: t,
                deployment: dep.clone(),
                max_flow: deployment_max_flow(params, &dep)?,
                directions: dirs.clone(),
                valid: true,
            });
        }
        dep = apply_directions(&dep, &dirs, &opts.step)?;
    }
    if opts.steps % opts.interval == 0 {
        out.push(Sample {
            deployment_id: id,
            step: opts.steps,
            max_flow: deployment_max_flow(params, &dep)?,
            directions: vec![[0.0, 0.0]; dep.num_relays()],
            deployment: dep,
            valid: false,
        });
    }
    Ok(out)
}

fn random_unit<R: Rng>(rng: &mut R) -> Point {
    let theta = rng.random_range(0.0..std::f64::consts::TAU);
    [theta.cos(), theta.sin()]
}

/// Samples for one scenario under `strategy`. `agent` is required for RLGP.
pub fn generate_for(
    strategy: Strategy,
    params: &ChannelParams,
    scenario: &Scenario,
    opts: &DatasetOptions,
    agent: Option<&PpoAgent>,
) -> Result<Vec<Sample>, DatagenError> {
    let id = scenario.id;
    let dep0 = &scenario.deployment;
    match strategy {
        Strategy::Rw => {
            let mut rng = stream(opts.seed, Purpose::RandomWalk, id as u64);
            walk(params, id, dep0, opts, |d| Ok((0..d.num_relays()).map(|_| random_unit(&mut rng)).collect()))
        }
        Strategy::Wcc => walk(params, id, dep0, opts, |d| Ok(wcc_directions(params, d, &opts.step.weights)?)),
        Strategy::Rlgp => {
            let agent = agent.ok_or_else(|| DatagenError::Config("RLGP generation needs a trained agent".into()))?;
            let mut rng = stream(opts.seed, Purpose::PolicyRollout, id as u64);
            walk(params, id, dep0, opts, |d| {
                let input = GraphInput::from_deployment(params, d)?;
                let (_, _, dirs) = agent.sample_action(&input, &mut rng)?;
                Ok(dirs)
            })
        }
    }
}

pub fn generate_dataset(
    strategy: Strategy,
    params: &ChannelParams,
    scenarios: &[Scenario],
    opts: &DatasetOptions,
    agent: Option<&PpoAgent>,
) -> Result<Vec<Sample>, DatagenError> {
    let mut out = Vec::new();
    for s in scenarios {
        out.extend(generate_for(strategy, params, s, opts, agent)?);
    }
    Ok(out)
}

/// Generates into `path` one deployment at a time. With `resume`, scenarios
/// whose snapshots are already complete in the file are skipped and a
/// partially written trailing deployment is regenerated.
pub fn generate_dataset_file(
    path: &Path,
    strategy: Strategy,
    params: &ChannelParams,
    scenarios: &[Scenario],
    opts: &DatasetOptions,
    agent: Option<&PpoAgent>,
    resume: bool,
) -> Result<usize, DatagenError> {
    let per = opts.snapshots_per_deployment();
    let mut done: BTreeMap<usize, usize> = BTreeMap::new();
    if resume && path.exists() {
        let existing = read_dataset(path)?;
        for s in &existing {
            *done.entry(s.deployment_id).or_default() += 1;
        }
        let complete: Vec<Sample> = existing.into_iter().filter(|s| done[&s.deployment_id] == per).collect();
        write_dataset(path, &complete)?;
    } else {
        records::write_lines(path, std::iter::empty())?;
    }
    let mut written = 0;
    for s in scenarios {
        if done.get(&s.id) == Some(&per) {
            continue;
        }
        let samples = generate_for(strategy, params, s, opts, agent)?;
        written += samples.len();
        records::append_lines(path, samples.iter().map(sample_line))?;
    }
    Ok(written)
}

pub fn sample_line(s: &Sample) -> String {
    let j = s.deployment.jammer();
    format!(
        "{{\"schema\":{SCHEMA},\"deployment\":{},\"step\":{},\"jammer\":[{},{}],\"positions\":{},\"max_flow\":{},\"directions\":{},\"valid\":{}}}",
        s.deployment_id,
        s.step,
        num(j[0]),
        num(j[1]),
        points(s.deployment.positions()),
        num(s.max_flow),
        points(&s.directions),
        s.valid
    )
}

pub fn write_dataset(path: &Path, samples: &[Sample]) -> Result<(), RecordError> {
    records::write_lines(path, samples.iter().map(sample_line))
}

pub fn read_dataset(path: &Path) -> Result<Vec<Sample>, RecordError> {
    let recs: Vec<SampleRecord> = records::read_lines(path)?;
    recs.into_iter()
        .enumerate()
        .map(|(i, r)| {
            let bad = |detail: String| RecordError::Parse { path: path.to_path_buf(), line: i + 1, detail };
            if r.schema != SCHEMA {
                return Err(bad(format!("unsupported schema {}", r.schema)));
            }
            let deployment = Deployment::new(r.positions, r.jammer).map_err(|e| bad(e.to_string()))?;
            if r.directions.len() != deployment.num_relays() {
                return Err(bad(format!(
                    "{} directions for {} relays",
                    r.directions.len(),
                    deployment.num_relays()
                )));
            }
            Ok(Sample {
                deployment_id: r.deployment,
                step: r.step,
                deployment,
                max_flow: r.max_flow,
                directions: r.directions,
                valid: r.valid,
            })
        })
        .collect()
}
