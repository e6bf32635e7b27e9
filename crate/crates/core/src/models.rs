//! The four graph networks: max-flow learner (MFL), gradient learner (GL),
//! and the PPO actor and critic.
//!
//! Each model owns a [`ParamSet`] with a fixed layout. Forward passes run on a
//! caller-supplied [`Tape`] so training loops can bind parameters once and
//! backpropagate through several graphs.

use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;

use crate::channel::{adjacency, ChannelError, ChannelParams, Deployment};
use crate::harness::ablation::first_order_conv;
use crate::nn::{
    global_add_pool, global_sort_pool, grad_wrt_inputs, graph_conv, linear, load_checkpoint,
    save_checkpoint, InputGrads, InputRole, NnError, ParamSet, Tape, Tensor, Var,
};

pub const HIDDEN: usize = 32;
pub const FEATURES: usize = 3;

/// Node features: column 0 flags the two endpoints, columns 1–2 hold coordinates.
pub fn features(dep: &Deployment) -> Tensor {
    let last = dep.n() - 1;
    Tensor::from_fn(dep.n(), FEATURES, |i, j| match j {
        0 => f64::from(u8::from(i == 0 || i == last)),
        _ => dep.position(i)[j - 1],
    })
}

/// Feature matrix and capacity adjacency of one deployment.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphInput {
    pub x: Tensor,
    pub a: Tensor,
}

impl GraphInput {
    pub fn new(x: Tensor, a: Tensor) -> Result<Self, NnError> {
        let n = x.rows();
        if x.cols() != FEATURES || a.shape() != [n, n] {
            return Err(NnError::Shape { op: "graph input", lhs: x.shape(), rhs: a.shape() });
        }
        Ok(GraphInput { x, a })
    }

    pub fn from_deployment(params: &ChannelParams, dep: &Deployment) -> Result<Self, ChannelError> {
        let a = adjacency(params, dep)?;
        Ok(GraphInput { x: features(dep), a: Tensor::from_dmatrix(&a) })
    }

    pub fn from_parts(dep: &Deployment, a: &DMatrix<f64>) -> Self {
        GraphInput { x: features(dep), a: Tensor::from_dmatrix(a) }
    }

    pub fn n(&self) -> usize {
        self.x.rows()
    }

    /// Registers `X` and `A` as the designated input leaves of `tape`.
    pub fn bind(&self, tape: &mut Tape) -> (Var, Var) {
        let x = tape.input(self.x.clone(), InputRole::Features);
        let a = tape.input(self.a.clone(), InputRole::Adjacency);
        (x, a)
    }
}

/// Message-passing layer used inside a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvKind {
    /// Separate self and neighbour weights plus a bias.
    GraphConv,
    /// Shared weight on `X + A·X` plus a bias.
    FirstOrder,
}

impl ConvKind {
    fn arch_suffix(self) -> &'static str {
        match self {
            ConvKind::GraphConv => "",
            ConvKind::FirstOrder => "-first-order",
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct ConvSlots {
    kind: ConvKind,
    w1: usize,
    w2: usize,
    b: usize,
}

#[derive(Debug, Clone, Copy)]
struct DenseSlots {
    w: usize,
    b: usize,
}

fn add_conv<R: Rng>(ps: &mut ParamSet, name: &str, din: usize, dout: usize, kind: ConvKind, rng: &mut R) -> ConvSlots {
    match kind {
        ConvKind::GraphConv => {
            let w1 = ps.push_uniform(format!("{name}.w_self"), din, dout, din, rng);
            let w2 = ps.push_uniform(format!("{name}.w_nbr"), din, dout, din, rng);
            let b = ps.push_uniform(format!("{name}.b"), 1, dout, din, rng);
            ConvSlots { kind, w1, w2, b }
        }
        ConvKind::FirstOrder => {
            let w = ps.push_uniform(format!("{name}.w"), din, dout, din, rng);
            let b = ps.push_uniform(format!("{name}.b"), 1, dout, din, rng);
            ConvSlots { kind, w1: w, w2: w, b }
        }
    }
}

fn add_dense<R: Rng>(ps: &mut ParamSet, name: &str, din: usize, dout: usize, rng: &mut R) -> DenseSlots {
    let w = ps.push_uniform(format!("{name}.w"), din, dout, din, rng);
    let b = ps.push_uniform(format!("{name}.b"), 1, dout, din, rng);
    DenseSlots { w, b }
}

fn apply_conv(tape: &mut Tape, p: &[Var], c: ConvSlots, x: Var, a: Var) -> Result<Var, NnError> {
    match c.kind {
        ConvKind::GraphConv => {
            let y = graph_conv(tape, x, a, p[c.w1], p[c.w2])?;
            tape.add_row(y, p[c.b])
        }
        ConvKind::FirstOrder => first_order_conv(tape, x, a, p[c.w1], p[c.b]),
    }
}

fn apply_dense(tape: &mut Tape, p: &[Var], d: DenseSlots, x: Var) -> Result<Var, NnError> {
    linear(tape, x, p[d.w], p[d.b])
}

fn conv_stack(tape: &mut Tape, p: &[Var], convs: &[ConvSlots], x: Var, a: Var) -> Result<Var, NnError> {
    let mut h = x;
    for &c in convs {
        let z = apply_conv(tape, p, c, h, a)?;
        h = tape.gelu(z);
    }
    Ok(h)
}

fn check_input(tape: &Tape, x: Var, a: Var) -> Result<usize, NnError> {
    let (sx, sa) = (tape.value(x).shape(), tape.value(a).shape());
    if sx[1] != FEATURES || sa != [sx[0], sx[0]] {
        return Err(NnError::Shape { op: "model input", lhs: sx, rhs: sa });
    }
    Ok(sx[0])
}

fn dummy_rng() -> rand_chacha::ChaCha8Rng {
    rand::SeedableRng::seed_from_u64(0)
}

/// Shared checkpoint plumbing.
pub trait Model: Sized {
    fn arch(&self) -> String;
    fn params(&self) -> &ParamSet;
    fn params_mut(&mut self) -> &mut ParamSet;

    /// A freshly initialized model for the architecture tag, used to validate
    /// checkpoint layouts.
    fn template(arch: &str) -> Option<Self>;

    fn save(&self, path: &Path) -> Result<(), NnError> {
        save_checkpoint(path, &self.arch(), self.params())
    }

    fn load(path: &Path, expected_arch: Option<&str>) -> Result<Self, NnError> {
        let ck = load_checkpoint(path)?;
        if let Some(want) = expected_arch {
            if ck.arch != want {
                return Err(NnError::ArchMismatch { expected: want.into(), found: ck.arch });
            }
        }
        let mut model = Self::template(&ck.arch).ok_or_else(|| NnError::ArchMismatch {
            expected: "a known architecture".into(),
            found: ck.arch.clone(),
        })?;
        model.params().check_layout(&ck.params)?;
        *model.params_mut() = ck.params;
        Ok(model)
    }
}

/// Max-flow learner: three convolutions, sum pooling and a two-layer head
/// producing one scalar per graph.
#[derive(Debug, Clone)]
pub struct MflModel {
    params: ParamSet,
    convs: [ConvSlots; 3],
    fc1: DenseSlots,
    fc2: DenseSlots,
    kind: ConvKind,
}

impl MflModel {
    pub const ARCH: &'static str = "mfl";

    pub fn new<R: Rng>(kind: ConvKind, rng: &mut R) -> Self {
        let mut ps = ParamSet::new();
        let convs = [
            add_conv(&mut ps, "conv1", FEATURES, HIDDEN, kind, rng),
            add_conv(&mut ps, "conv2", HIDDEN, HIDDEN, kind, rng),
            add_conv(&mut ps, "conv3", HIDDEN, HIDDEN, kind, rng),
        ];
        let fc1 = add_dense(&mut ps, "fc1", HIDDEN, HIDDEN, rng);
        let fc2 = add_dense(&mut ps, "fc2", HIDDEN, 1, rng);
        MflModel { params: ps, convs, fc1, fc2, kind }
    }

    pub fn kind(&self) -> ConvKind {
        self.kind
    }

    /// Scalar prediction node, with `p` the vars from [`ParamSet::bind`].
    pub fn forward(&self, tape: &mut Tape, p: &[Var], x: Var, a: Var) -> Result<Var, NnError> {
        check_input(tape, x, a)?;
        let h = conv_stack(tape, p, &self.convs, x, a)?;
        let pooled = global_add_pool(tape, h);
        let z = apply_dense(tape, p, self.fc1, pooled)?;
        let z = tape.gelu(z);
        apply_dense(tape, p, self.fc2, z)
    }

    pub fn predict(&self, input: &GraphInput) -> Result<f64, NnError> {
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape);
        let (x, a) = input.bind(&mut tape);
        let out = self.forward(&mut tape, &p, x, a)?;
        Ok(tape.value(out).get(0, 0))
    }

    /// Prediction together with its gradients with respect to `X` and `A`.
    pub fn predict_with_input_grads(&self, input: &GraphInput) -> Result<(f64, InputGrads), NnError> {
        let mut tape = Tape::new();
        let p: Vec<Var> = self.params.tensors().iter().map(|t| tape.constant(t.clone())).collect();
        let (x, a) = input.bind(&mut tape);
        let out = self.forward(&mut tape, &p, x, a)?;
        let grads = grad_wrt_inputs(&tape, out)?;
        Ok((tape.value(out).get(0, 0), grads))
    }
}

impl Model for MflModel {
    fn arch(&self) -> String {
        format!("{}{}", Self::ARCH, self.kind.arch_suffix())
    }
    fn params(&self) -> &ParamSet {
        &self.params
    }
    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }
    fn template(arch: &str) -> Option<Self> {
        match arch {
            "mfl" => Some(MflModel::new(ConvKind::GraphConv, &mut dummy_rng())),
            "mfl-first-order" => Some(MflModel::new(ConvKind::FirstOrder, &mut dummy_rng())),
            _ => None,
        }
    }
}

/// Gradient learner: per-node 2-vectors read off the relay rows.
#[derive(Debug, Clone)]
pub struct GlModel {
    params: ParamSet,
    convs: [ConvSlots; 3],
    fc1: DenseSlots,
    fc2: DenseSlots,
    kind: ConvKind,
}

/// Relay rows of the GL output before and after unit normalization.
#[derive(Debug, Clone, Copy)]
pub struct GlOutput {
    pub raw: Var,
    pub unit: Var,
}

impl GlModel {
    pub const ARCH: &'static str = "gl";

    pub fn new<R: Rng>(kind: ConvKind, rng: &mut R) -> Self {
        let mut ps = ParamSet::new();
        let convs = [
            add_conv(&mut ps, "conv1", FEATURES, HIDDEN, kind, rng),
            add_conv(&mut ps, "conv2", HIDDEN, HIDDEN, kind, rng),
            add_conv(&mut ps, "conv3", HIDDEN, HIDDEN, kind, rng),
        ];
        let fc1 = add_dense(&mut ps, "fc1", HIDDEN, HIDDEN, rng);
        let fc2 = add_dense(&mut ps, "fc2", HIDDEN, 2, rng);
        GlModel { params: ps, convs, fc1, fc2, kind }
    }

    pub fn kind(&self) -> ConvKind {
        self.kind
    }

    pub fn forward(&self, tape: &mut Tape, p: &[Var], x: Var, a: Var) -> Result<GlOutput, NnError> {
        let n = check_input(tape, x, a)?;
        let h = conv_stack(tape, p, &self.convs, x, a)?;
        let z = apply_dense(tape, p, self.fc1, h)?;
        let z = tape.gelu(z);
        let per_node = apply_dense(tape, p, self.fc2, z)?;
        let relay_rows: Vec<usize> = (1..n - 1).collect();
        let raw = tape.gather_rows(per_node, &relay_rows)?;
        let unit = tape.row_normalize(raw);
        Ok(GlOutput { raw, unit })
    }

    /// Unit step direction per relay.
    pub fn directions(&self, input: &GraphInput) -> Result<Tensor, NnError> {
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape);
        let (x, a) = input.bind(&mut tape);
        let out = self.forward(&mut tape, &p, x, a)?;
        Ok(tape.value(out.unit).clone())
    }
}

impl Model for GlModel {
    fn arch(&self) -> String {
        format!("{}{}", Self::ARCH, self.kind.arch_suffix())
    }
    fn params(&self) -> &ParamSet {
        &self.params
    }
    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }
    fn template(arch: &str) -> Option<Self> {
        match arch {
            "gl" => Some(GlModel::new(ConvKind::GraphConv, &mut dummy_rng())),
            "gl-first-order" => Some(GlModel::new(ConvKind::FirstOrder, &mut dummy_rng())),
            _ => None,
        }
    }
}

/// Policy network: per-relay, per-coordinate Gaussian means and standard
/// deviations.
///
/// Sort pooling runs over the relay rows only, with `k` equal to the relay
/// count. Head slot `j` belongs to the relay that landed in sorted position
/// `j`, and the head outputs are mapped back to relay order before being
/// returned, so relabelling relays permutes the outputs accordingly.
#[derive(Debug, Clone)]
pub struct ActorModel {
    params: ParamSet,
    convs: [ConvSlots; 2],
    mean_head: DenseSlots,
    std_head: DenseSlots,
    relays: usize,
}

/// `relays × 2` mean and standard-deviation nodes, rows in relay order.
#[derive(Debug, Clone, Copy)]
pub struct ActorOutput {
    pub mean: Var,
    pub std: Var,
}

impl ActorModel {
    pub const ARCH: &'static str = "actor";
    pub const DEFAULT_RELAYS: usize = 4;

    pub fn new<R: Rng>(relays: usize, rng: &mut R) -> Self {
        let mut ps = ParamSet::new();
        let convs = [
            add_conv(&mut ps, "conv1", FEATURES, HIDDEN, ConvKind::GraphConv, rng),
            add_conv(&mut ps, "conv2", HIDDEN, HIDDEN, ConvKind::GraphConv, rng),
        ];
        let width = HIDDEN * relays;
        let mean_head = add_dense(&mut ps, "mean", width, 2 * relays, rng);
        let std_head = add_dense(&mut ps, "std", width, 2 * relays, rng);
        ActorModel { params: ps, convs, mean_head, std_head, relays }
    }

    pub fn relays(&self) -> usize {
        self.relays
    }

    pub fn forward(&self, tape: &mut Tape, p: &[Var], x: Var, a: Var) -> Result<ActorOutput, NnError> {
        let n = check_input(tape, x, a)?;
        if n != self.relays + 2 {
            return Err(NnError::Shape { op: "actor input", lhs: [n, FEATURES], rhs: [self.relays + 2, FEATURES] });
        }
        let h = conv_stack(tape, p, &self.convs, x, a)?;
        let relay_rows: Vec<usize> = (1..n - 1).collect();
        let relay_h = tape.gather_rows(h, &relay_rows)?;
        let (pooled, order) = global_sort_pool(tape, relay_h, self.relays)?;
        let mut slot_of = vec![0; self.relays];
        for (slot, &relay) in order.iter().enumerate() {
            slot_of[relay] = slot;
        }
        let mean_flat = apply_dense(tape, p, self.mean_head, pooled)?;
        let mean_flat = tape.tanh(mean_flat);
        let std_flat = apply_dense(tape, p, self.std_head, pooled)?;
        let std_flat = tape.softplus(std_flat);
        let unsort = |t: &mut Tape, v: Var| -> Result<Var, NnError> {
            let by_slot = t.reshape(v, self.relays, 2)?;
            t.gather_rows(by_slot, &slot_of)
        };
        let mean = unsort(tape, mean_flat)?;
        let std = unsort(tape, std_flat)?;
        Ok(ActorOutput { mean, std })
    }

    /// Means and standard deviations as `relays × 2` tensors.
    pub fn distribution(&self, input: &GraphInput) -> Result<(Tensor, Tensor), NnError> {
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape);
        let (x, a) = input.bind(&mut tape);
        let out = self.forward(&mut tape, &p, x, a)?;
        Ok((tape.value(out.mean).clone(), tape.value(out.std).clone()))
    }
}

impl Model for ActorModel {
    fn arch(&self) -> String {
        if self.relays == Self::DEFAULT_RELAYS {
            Self::ARCH.into()
        } else {
            format!("{}-{}", Self::ARCH, self.relays)
        }
    }
    fn params(&self) -> &ParamSet {
        &self.params
    }
    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }
    fn template(arch: &str) -> Option<Self> {
        let relays = match arch.strip_prefix(Self::ARCH)? {
            "" => Self::DEFAULT_RELAYS,
            rest => rest.strip_prefix('-')?.parse().ok().filter(|&r| r > 0)?,
        };
        Some(ActorModel::new(relays, &mut dummy_rng()))
    }
}

/// Value network: two convolutions, sum pooling, one linear layer.
#[derive(Debug, Clone)]
pub struct CriticModel {
    params: ParamSet,
    convs: [ConvSlots; 2],
    fc: DenseSlots,
}

impl CriticModel {
    pub const ARCH: &'static str = "critic";

    pub fn new<R: Rng>(rng: &mut R) -> Self {
        let mut ps = ParamSet::new();
        let convs = [
            add_conv(&mut ps, "conv1", FEATURES, HIDDEN, ConvKind::GraphConv, rng),
            add_conv(&mut ps, "conv2", HIDDEN, HIDDEN, ConvKind::GraphConv, rng),
        ];
        let fc = add_dense(&mut ps, "fc", HIDDEN, 1, rng);
        CriticModel { params: ps, convs, fc }
    }

    pub fn forward(&self, tape: &mut Tape, p: &[Var], x: Var, a: Var) -> Result<Var, NnError> {
        check_input(tape, x, a)?;
        let h = conv_stack(tape, p, &self.convs, x, a)?;
        let pooled = global_add_pool(tape, h);
        apply_dense(tape, p, self.fc, pooled)
    }

    pub fn value(&self, input: &GraphInput) -> Result<f64, NnError> {
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape);
        let (x, a) = input.bind(&mut tape);
        let out = self.forward(&mut tape, &p, x, a)?;
        Ok(tape.value(out).get(0, 0))
    }
}

impl Model for CriticModel {
    fn arch(&self) -> String {
        Self::ARCH.into()
    }
    fn params(&self) -> &ParamSet {
        &self.params
    }
    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }
    fn template(arch: &str) -> Option<Self> {
        (arch == Self::ARCH).then(|| CriticModel::new(&mut dummy_rng()))
    }
}
