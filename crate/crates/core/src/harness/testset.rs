//! Scenario sampling: jammer placement under the endpoint guard zones.

use std::path::Path;

use rand::Rng;
use serde::Deserialize;

use crate::channel::{ChannelError, Deployment, Point};
use crate::harness::ExperimentConfig;
use crate::records::{self, num, points, RecordError, SCHEMA};
use crate::rng::{stream, Purpose};

/// One scenario: a deployment id and its initial layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub id: usize,
    pub deployment: Deployment,
}

#[derive(Debug, Deserialize)]
struct ScenarioRecord {
    schema: u32,
    deployment: usize,
    jammer: Point,
    positions: Vec<Point>,
}

fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Whether a jammer position is admissible: inside the arena and strictly
/// outside both guard disks.
pub fn jammer_admissible(cfg: &ExperimentConfig, j: Point) -> bool {
    j[0].abs() < cfg.arena_half
        && j[1].abs() < cfg.arena_half
        && dist(j, cfg.source) > cfg.guard_radius
        && dist(j, cfg.destination) > cfg.guard_radius
}

/// Rejection-samples a jammer uniformly over the admissible region.
/// Returns the position and the number of draws it took.
pub fn sample_jammer<R: Rng>(cfg: &ExperimentConfig, rng: &mut R) -> (Point, usize) {
    let h = cfg.arena_half;
    let mut draws = 0;
    loop {
        draws += 1;
        let j = [rng.random_range(-h..h), rng.random_range(-h..h)];
        if jammer_admissible(cfg, j) {
            return (j, draws);
        }
    }
}

/// `count` scenarios drawn from the stream selected by `purpose`; scenario
/// `i` only depends on `(seed, purpose, i)`.
pub fn sample_scenarios(
    cfg: &ExperimentConfig,
    purpose: Purpose,
    count: usize,
) -> Result<Vec<Scenario>, ChannelError> {
    (0..count)
        .map(|id| {
            let mut rng = stream(cfg.seed, purpose, id as u64);
            let (jammer, _) = sample_jammer(cfg, &mut rng);
            Ok(Scenario { id, deployment: cfg.initial_deployment(jammer)? })
        })
        .collect()
}

pub fn gen_testset(cfg: &ExperimentConfig, count: usize) -> Result<Vec<Scenario>, ChannelError> {
    sample_scenarios(cfg, Purpose::TestSet, count)
}

pub fn scenario_line(s: &Scenario) -> String {
    format!(
        "{{\"schema\":{SCHEMA},\"deployment\":{},\"jammer\":[{},{}],\"positions\":{}}}",
        s.id,
        num(s.deployment.jammer()[0]),
        num(s.deployment.jammer()[1]),
        points(s.deployment.positions())
    )
}

pub fn write_scenarios(path: &Path, scenarios: &[Scenario]) -> Result<(), RecordError> {
    records::write_lines(path, scenarios.iter().map(scenario_line))
}

pub fn read_scenarios(path: &Path) -> Result<Vec<Scenario>, RecordError> {
    let recs: Vec<ScenarioRecord> = records::read_lines(path)?;
    recs.into_iter()
        .enumerate()
        .map(|(i, r)| {
            let bad = |detail: String| RecordError::Parse { path: path.to_path_buf(), line: i + 1, detail };
            if r.schema != SCHEMA {
                return Err(bad(format!("unsupported schema {}", r.schema)));
            }
            let deployment = Deployment::new(r.positions, r.jammer).map_err(|e| bad(e.to_string()))?;
            Ok(Scenario { id: r.deployment, deployment })
        })
        .collect()
}
