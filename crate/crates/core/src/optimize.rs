//! Test-phase relay placement: one step per method and whole trajectories.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::Deserialize;
use thiserror::Error;

use crate::channel::{adjacency, adjacency_jacobian, ChannelError, ChannelParams, Deployment, Point};
use crate::flow::{max_flow, FlowError};
use crate::harness::MflUpdate;
use crate::models::{ActorModel, GlModel, GraphInput, MflModel};
use crate::nn::NnError;
use crate::records::{self, num, points, string, RecordError, SCHEMA};
use crate::spectral::{unit_or_zero, wcc_directions, SpectralError};

#[derive(Debug, Error)]
pub enum OptimizeError {
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("step {step}: non-finite position {detail}")]
    NonFinite { step: usize, detail: String },
    #[error("method {0} needs a trained {1} model")]
    MissingModel(Method, &'static str),
    #[error("both hybrid branches failed: MFL: {mfl}; WCC: {wcc}")]
    BothBranchesFailed { mfl: String, wcc: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Mfl,
    Gl,
    Wcc,
    Hybrid,
    Rl,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Mfl, Method::Gl, Method::Wcc, Method::Hybrid, Method::Rl];

    pub fn name(self) -> &'static str {
        match self {
            Method::Mfl => "mfl",
            Method::Gl => "gl",
            Method::Wcc => "wcc",
            Method::Hybrid => "hybrid",
            Method::Rl => "rl",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown method {s:?}"))
    }
}

/// Step size, domain and update conventions shared by every method.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOptions {
    pub zeta: f64,
    /// Relays are clamped into `[−h, h]²` after each step when set.
    pub arena_half: Option<f64>,
    pub mfl_update: MflUpdate,
    /// Laplacian weights for the WCC branch.
    pub weights: Vec<f64>,
}

impl StepOptions {
    pub fn new(zeta: f64, n: usize) -> Self {
        StepOptions {
            zeta,
            arena_half: Some(6.0),
            mfl_update: MflUpdate::Vector,
            weights: crate::spectral::endpoint_weights(n),
        }
    }
}

/// Max-flow of a deployment's capacity graph between its endpoints.
pub fn deployment_max_flow(params: &ChannelParams, dep: &Deployment) -> Result<f64, OptimizeError> {
    let a = adjacency(params, dep)?;
    Ok(max_flow(&a, dep.source(), dep.destination())?.value)
}

/// Clamps every relay coordinate into `[−half, half]`.
pub fn clamp_relays(dep: &Deployment, half: f64) -> Result<Deployment, ChannelError> {
    let relays: Vec<Point> = dep
        .relays()
        .map(|i| {
            let p = dep.position(i);
            [p[0].clamp(-half, half), p[1].clamp(-half, half)]
        })
        .collect();
    dep.with_relays(&relays)
}

/// Moves relay `r` by `zeta · dirs[r]`, then applies the domain clamp.
pub fn apply_directions(dep: &Deployment, dirs: &[Point], opts: &StepOptions) -> Result<Deployment, ChannelError> {
    let offsets: Vec<Point> = dirs.iter().map(|d| [opts.zeta * d[0], opts.zeta * d[1]]).collect();
    let moved = dep.with_relay_offsets(&offsets)?;
    match opts.arena_half {
        Some(h) => clamp_relays(&moved, h),
        None => Ok(moved),
    }
}

/// MFL prediction and its total derivative with respect to every relay
/// coordinate, through both the feature and the adjacency paths.
pub fn mfl_relay_gradient(
    model: &MflModel,
    params: &ChannelParams,
    dep: &Deployment,
) -> Result<(f64, Vec<Point>), OptimizeError> {
    let a = adjacency(params, dep)?;
    let input = GraphInput::from_parts(dep, &a);
    let (value, g) = model.predict_with_input_grads(&input)?;
    let jac = adjacency_jacobian(params, dep)?;
    let upstream = DMatrix::from_row_slice(dep.n(), dep.n(), g.adjacency.data());
    let through_a = jac.contract(&upstream);
    let grads = dep
        .relays()
        .map(|i| {
            [
                g.features.get(i, 1) + through_a[i][0],
                g.features.get(i, 2) + through_a[i][1],
            ]
        })
        .collect();
    Ok((value, grads))
}

fn sign_or_zero(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn mfl_directions(model: &MflModel, params: &ChannelParams, dep: &Deployment, update: MflUpdate) -> Result<Vec<Point>, OptimizeError> {
    let (_, grads) = mfl_relay_gradient(model, params, dep)?;
    Ok(grads
        .into_iter()
        .map(|g| match update {
            MflUpdate::Vector => unit_or_zero(g),
            MflUpdate::Sign => [sign_or_zero(g[0]), sign_or_zero(g[1])],
        })
        .collect())
}

pub fn mfl_step(model: &MflModel, params: &ChannelParams, dep: &Deployment, opts: &StepOptions) -> Result<Deployment, OptimizeError> {
    let dirs = mfl_directions(model, params, dep, opts.mfl_update)?;
    Ok(apply_directions(dep, &dirs, opts)?)
}

pub fn gl_step(model: &GlModel, params: &ChannelParams, dep: &Deployment, opts: &StepOptions) -> Result<Deployment, OptimizeError> {
    let input = GraphInput::from_deployment(params, dep)?;
    let unit = model.directions(&input)?;
    let dirs: Vec<Point> = (0..unit.rows()).map(|r| [unit.get(r, 0), unit.get(r, 1)]).collect();
    Ok(apply_directions(dep, &dirs, opts)?)
}

pub fn wcc_step(params: &ChannelParams, dep: &Deployment, opts: &StepOptions) -> Result<Deployment, OptimizeError> {
    let dirs = wcc_directions(params, dep, &opts.weights)?;
    Ok(apply_directions(dep, &dirs, opts)?)
}

/// Deterministic policy step: each relay moves along its mean action.
pub fn rl_step(actor: &ActorModel, params: &ChannelParams, dep: &Deployment, opts: &StepOptions) -> Result<Deployment, OptimizeError> {
    let input = GraphInput::from_deployment(params, dep)?;
    let (mean, _) = actor.distribution(&input)?;
    let dirs: Vec<Point> = (0..mean.rows()).map(|r| unit_or_zero([mean.get(r, 0), mean.get(r, 1)])).collect();
    Ok(apply_directions(dep, &dirs, opts)?)
}

/// Which move a step applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Start,
    Mfl,
    Gl,
    Wcc,
    Rl,
}

impl Branch {
    pub fn name(self) -> &'static str {
        match self {
            Branch::Start => "start",
            Branch::Mfl => "mfl",
            Branch::Gl => "gl",
            Branch::Wcc => "wcc",
            Branch::Rl => "rl",
        }
    }

    pub fn parse(s: &str) -> Option<Branch> {
        [Branch::Start, Branch::Mfl, Branch::Gl, Branch::Wcc, Branch::Rl]
            .into_iter()
            .find(|b| b.name() == s)
    }
}

/// Both hybrid candidates with their exact max-flows; `None` if a branch failed.
#[derive(Debug, Clone)]
pub struct HybridOutcome {
    pub chosen: Deployment,
    pub branch: Branch,
    pub value: f64,
    pub mfl: Option<(Deployment, f64)>,
    pub wcc: Option<(Deployment, f64)>,
}

/// Takes whichever of the MFL and WCC candidates has the larger exact
/// max-flow; ties go to MFL. A failing branch is skipped.
pub fn hybrid_step(
    model: &MflModel,
    params: &ChannelParams,
    dep: &Deployment,
    opts: &StepOptions,
) -> Result<HybridOutcome, OptimizeError> {
    let eval = |cand: Result<Deployment, OptimizeError>| -> Result<(Deployment, f64), OptimizeError> {
        let d = cand?;
        let v = deployment_max_flow(params, &d)?;
        Ok((d, v))
    };
    let mfl = eval(mfl_step(model, params, dep, opts));
    let wcc = eval(wcc_step(params, dep, opts));
    let (chosen, branch, value) = match (&mfl, &wcc) {
        (Ok((dm, vm)), Ok((dw, vw))) => {
            if vm >= vw {
                (dm.clone(), Branch::Mfl, *vm)
            } else {
                (dw.clone(), Branch::Wcc, *vw)
            }
        }
        (Ok((dm, vm)), Err(_)) => (dm.clone(), Branch::Mfl, *vm),
        (Err(_), Ok((dw, vw))) => (dw.clone(), Branch::Wcc, *vw),
        (Err(em), Err(ew)) => {
            return Err(OptimizeError::BothBranchesFailed { mfl: em.to_string(), wcc: ew.to_string() })
        }
    };
    Ok(HybridOutcome {
        chosen,
        branch,
        value,
        mfl: mfl.ok(),
        wcc: wcc.ok(),
    })
}

/// Trained models available to [`run_trajectory`].
#[derive(Debug, Clone, Copy, Default)]
pub struct Models<'a> {
    pub mfl: Option<&'a MflModel>,
    pub gl: Option<&'a GlModel>,
    pub actor: Option<&'a ActorModel>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryStep {
    pub step: usize,
    pub deployment: Deployment,
    pub max_flow: f64,
    pub branch: Branch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub method: Method,
    pub deployment_id: usize,
    pub steps: Vec<TrajectoryStep>,
}

impl Trajectory {
    pub fn initial_flow(&self) -> f64 {
        self.steps[0].max_flow
    }

    pub fn final_flow(&self) -> f64 {
        self.steps[self.steps.len() - 1].max_flow
    }
}

fn check_finite(dep: &Deployment, step: usize) -> Result<(), OptimizeError> {
    for (i, p) in dep.positions().iter().enumerate() {
        if !(p[0].is_finite() && p[1].is_finite()) {
            return Err(OptimizeError::NonFinite { step, detail: format!("node {i} at {p:?}") });
        }
    }
    Ok(())
}

/// Applies `steps` updates of `method`, recording the exact max-flow after each.
pub fn run_trajectory(
    method: Method,
    models: Models<'_>,
    params: &ChannelParams,
    deployment_id: usize,
    dep0: &Deployment,
    opts: &StepOptions,
    steps: usize,
) -> Result<Trajectory, OptimizeError> {
    let need_mfl = || models.mfl.ok_or(OptimizeError::MissingModel(method, "MFL"));
    let mut dep = dep0.clone();
    let mut record = vec![TrajectoryStep {
        step: 0,
        deployment: dep.clone(),
        max_flow: deployment_max_flow(params, &dep)?,
        branch: Branch::Start,
    }];
    for step in 1..=steps {
        let (next, branch, value) = match method {
            Method::Mfl => {
                let d = mfl_step(need_mfl()?, params, &dep, opts)?;
                (d, Branch::Mfl, None)
            }
            Method::Gl => {
                let gl = models.gl.ok_or(OptimizeError::MissingModel(method, "GL"))?;
                (gl_step(gl, params, &dep, opts)?, Branch::Gl, None)
            }
            Method::Wcc => (wcc_step(params, &dep, opts)?, Branch::Wcc, None),
            Method::Rl => {
                let actor = models.actor.ok_or(OptimizeError::MissingModel(method, "actor"))?;
                (rl_step(actor, params, &dep, opts)?, Branch::Rl, None)
            }
            Method::Hybrid => {
                let out = hybrid_step(need_mfl()?, params, &dep, opts)?;
                (out.chosen, out.branch, Some(out.value))
            }
        };
        check_finite(&next, step)?;
        let max_flow = match value {
            Some(v) => v,
            None => deployment_max_flow(params, &next)?,
        };
        dep = next;
        record.push(TrajectoryStep { step, deployment: dep.clone(), max_flow, branch });
    }
    Ok(Trajectory { method, deployment_id, steps: record })
}

pub fn trajectory_lines(t: &Trajectory) -> impl Iterator<Item = String> + '_ {
    t.steps.iter().map(move |s| {
        let j = s.deployment.jammer();
        format!(
            "{{\"schema\":{SCHEMA},\"method\":{},\"deployment\":{},\"step\":{},\"positions\":{},\"jammer\":[{},{}],\"max_flow\":{},\"branch\":{}}}",
            string(t.method.name()),
            t.deployment_id,
            s.step,
            points(s.deployment.positions()),
            num(j[0]),
            num(j[1]),
            num(s.max_flow),
            string(s.branch.name())
        )
    })
}

pub fn write_trajectories(path: &Path, trajs: &[Trajectory]) -> Result<(), RecordError> {
    records::write_lines(path, trajs.iter().flat_map(trajectory_lines))
}

#[derive(Debug, Deserialize)]
struct StepRecord {
    schema: u32,
    method: String,
    deployment: usize,
    step: usize,
    positions: Vec<Point>,
    jammer: Point,
    max_flow: f64,
    branch: String,
}

/// Reads a trajectory file, grouping consecutive records by deployment id.
pub fn read_trajectories(path: &Path) -> Result<Vec<Trajectory>, RecordError> {
    let recs: Vec<StepRecord> = records::read_lines(path)?;
    let mut out: Vec<Trajectory> = Vec::new();
    for (i, r) in recs.into_iter().enumerate() {
        let bad = |detail: String| RecordError::Parse { path: path.to_path_buf(), line: i + 1, detail };
        if r.schema != SCHEMA {
            return Err(bad(format!("unsupported schema {}", r.schema)));
        }
        let method: Method = r.method.parse().map_err(bad)?;
        let branch = Branch::parse(&r.branch).ok_or_else(|| bad(format!("unknown branch {:?}", r.branch)))?;
        let deployment = Deployment::new(r.positions, r.jammer).map_err(|e| bad(e.to_string()))?;
        let step = TrajectoryStep { step: r.step, deployment, max_flow: r.max_flow, branch };
        match out.last_mut() {
            Some(t) if t.deployment_id == r.deployment && t.method == method && r.step > 0 => {
                if r.step != t.steps.len() {
                    return Err(bad(format!("expected step {}, got {}", t.steps.len(), r.step)));
                }
                t.steps.push(step);
            }
            _ => {
                if r.step != 0 {
                    return Err(bad(format!("trajectory for deployment {} starts at step {}", r.deployment, r.step)));
                }
                out.push(Trajectory { method, deployment_id: r.deployment, steps: vec![step] });
            }
        }
    }
    Ok(out)
}
