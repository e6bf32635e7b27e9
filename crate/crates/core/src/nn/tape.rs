//! Reverse-mode tape over dense matrices.
//!
//! Every primitive evaluates eagerly, pushes its result onto the tape and
//! remembers which nodes it read. [`Tape::backward`] then walks the tape
//! once in reverse, accumulating vector–Jacobian products; fan-out is
//! handled by summing contributions into the same slot.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use super::{NnError, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Designated graph inputs whose gradients [`grad_wrt_inputs`] reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputRole {
    Features,
    Adjacency,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeafKind {
    Constant,
    Param,
    Input(InputRole),
}

#[derive(Debug)]
enum Op {
    Leaf(LeafKind),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MatMul(Var, Var),
    Scale(Var, f64),
    AddRow(Var, Var),
    SumRows(Var),
    SumAll(Var),
    Mean(Var),
    Gelu(Var),
    Tanh(Var),
    Softplus(Var),
    Relu(Var),
    Square(Var),
    Huber(Var),
    GatherRows(Var, Vec<usize>),
    Reshape(Var),
    RowNormalize(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by one backward pass, indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient at `v`, or zeros of `v`'s shape when nothing reached it.
    pub fn wrt(&self, tape: &Tape, v: Var) -> Tensor {
        match self.get(v) {
            Some(g) => g.clone(),
            None => {
                let [r, c] = tape.value(v).shape();
                Tensor::zeros(r, c)
            }
        }
    }
}

/// `∂out/∂X` and `∂out/∂A` at the designated input leaves.
#[derive(Debug, Clone)]
pub struct InputGrads {
    pub features: Tensor,
    pub adjacency: Tensor,
}

pub(crate) fn std_normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x * FRAC_1_SQRT_2))
}

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Exact GELU, `x·Φ(x)`.
pub fn gelu(x: f64) -> f64 {
    x * std_normal_cdf(x)
}

pub fn gelu_prime(x: f64) -> f64 {
    std_normal_cdf(x) + x * std_normal_pdf(x)
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `0.5 x²` inside the unit interval, `|x| − 0.5` outside.
pub fn huber(x: f64) -> f64 {
    if x.abs() < 1.0 {
        0.5 * x * x
    } else {
        x.abs() - 0.5
    }
}

pub fn huber_prime(x: f64) -> f64 {
    if x.abs() < 1.0 {
        x
    } else {
        x.signum()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn leaf_kind(&self, v: Var) -> Option<LeafKind> {
        match self.nodes[v.0].op {
            Op::Leaf(kind) => Some(kind),
            _ => None,
        }
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf(LeafKind::Constant))
    }

    pub fn param(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf(LeafKind::Param))
    }

    pub fn input(&mut self, t: Tensor, role: InputRole) -> Var {
        self.push(t, Op::Leaf(LeafKind::Input(role)))
    }

    /// Most recently registered input leaf with the given role.
    pub fn input_var(&self, role: InputRole) -> Option<Var> {
        self.nodes
            .iter()
            .rposition(|n| matches!(n.op, Op::Leaf(LeafKind::Input(r)) if r == role))
            .map(Var)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), NnError> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(NnError::Shape { op, lhs: sa, rhs: sb });
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.same_shape("add", a, b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.same_shape("sub", a, b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y);
        Ok(self.push(v, Op::Sub(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.same_shape("mul", a, b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        Ok(self.push(v, Op::Mul(a, b)))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa[1] != sb[0] {
            return Err(NnError::Shape { op: "matmul", lhs: sa, rhs: sb });
        }
        let v = self.value(a).matmul_raw(self.value(b));
        Ok(self.push(v, Op::MatMul(a, b)))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).map(|x| c * x);
        self.push(v, Op::Scale(a, c))
    }

    /// Adds the `1 × d` row `b` to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sb[0] != 1 || sa[1] != sb[1] {
            return Err(NnError::Shape { op: "add_row", lhs: sa, rhs: sb });
        }
        let bias = self.value(b).data().to_vec();
        let mut v = self.value(a).clone();
        let c = sa[1];
        for (k, x) in v.data_mut().iter_mut().enumerate() {
            *x += bias[k % c];
        }
        Ok(self.push(v, Op::AddRow(a, b)))
    }

    /// Column sums, `n × d → 1 × d`.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let (r, c) = (t.rows(), t.cols());
        let mut out = vec![0.0; c];
        for i in 0..r {
            for (o, x) in out.iter_mut().zip(t.row_slice(i)) {
                *o += x;
            }
        }
        self.push(Tensor::raw(1, c, out), Op::SumRows(a))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        self.push(Tensor::scalar(s), Op::SumAll(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let m = t.sum() / t.len() as f64;
        self.push(Tensor::scalar(m), Op::Mean(a))
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(gelu);
        self.push(v, Op::Gelu(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let v = self.value(a).map(softplus);
        self.push(v, Op::Softplus(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x * x);
        self.push(v, Op::Square(a))
    }

    /// Elementwise Huber function.
    pub fn huber(&mut self, a: Var) -> Var {
        let v = self.value(a).map(huber);
        self.push(v, Op::Huber(a))
    }

    /// Rows `idx[0], idx[1], …` of `a`, stacked.
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var, NnError> {
        let t = self.value(a);
        if let Some(&bad) = idx.iter().find(|&&i| i >= t.rows()) {
            return Err(NnError::Index { index: bad, len: t.rows() });
        }
        let c = t.cols();
        let mut out = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            out.extend_from_slice(t.row_slice(i));
        }
        let v = Tensor::raw(idx.len(), c, out);
        Ok(self.push(v, Op::GatherRows(a, idx.to_vec())))
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var, NnError> {
        let t = self.value(a);
        if t.len() != rows * cols {
            return Err(NnError::Shape { op: "reshape", lhs: t.shape(), rhs: [rows, cols] });
        }
        let v = Tensor::raw(rows, cols, t.data().to_vec());
        Ok(self.push(v, Op::Reshape(a)))
    }

    /// Scales every row to unit Euclidean norm; all-zero rows stay zero.
    pub fn row_normalize(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let mut v = t.clone();
        for i in 0..t.rows() {
            let norm = t.row_slice(i).iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                for j in 0..t.cols() {
                    v.set(i, j, t.get(i, j) / norm);
                }
            }
        }
        self.push(v, Op::RowNormalize(a))
    }

    /// Backpropagates from a `1 × 1` output.
    pub fn backward(&self, out: Var) -> Result<Gradients, NnError> {
        if self.value(out).shape() != [1, 1] {
            return Err(NnError::NotScalar(self.value(out).shape()));
        }
        self.backward_seeded(&[(out, Tensor::scalar(1.0))])
    }

    /// Backpropagates the given output cotangents simultaneously.
    pub fn backward_seeded(&self, seeds: &[(Var, Tensor)]) -> Result<Gradients, NnError> {
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        let mut last = 0;
        for (v, seed) in seeds {
            let shape = self.value(*v).shape();
            if seed.shape() != shape {
                return Err(NnError::Shape { op: "seed", lhs: shape, rhs: seed.shape() });
            }
            accumulate(&mut grads, *v, seed.clone());
            last = last.max(v.0);
        }

        for idx in (0..=last).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let val = |v: Var| &self.nodes[v.0].value;
            match &node.op {
                Op::Leaf(_) => {}
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g.clone());
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g.map(|x| -x));
                }
                Op::Mul(a, b) => {
                    accumulate(&mut grads, *a, g.zip_map(val(*b), |x, y| x * y));
                    accumulate(&mut grads, *b, g.zip_map(val(*a), |x, y| x * y));
                }
                Op::MatMul(a, b) => {
                    accumulate(&mut grads, *a, g.matmul_t_raw(val(*b)));
                    accumulate(&mut grads, *b, val(*a).t_matmul_raw(&g));
                }
                Op::Scale(a, c) => {
                    let c = *c;
                    accumulate(&mut grads, *a, g.map(|x| c * x));
                }
                Op::AddRow(a, b) => {
                    let c = g.cols();
                    let mut gb = vec![0.0; c];
                    for (k, x) in g.data().iter().enumerate() {
                        gb[k % c] += x;
                    }
                    accumulate(&mut grads, *b, Tensor::raw(1, c, gb));
                    accumulate(&mut grads, *a, g.clone());
                }
                Op::SumRows(a) => {
                    let r = val(*a).rows();
                    let ga = Tensor::from_fn(r, g.cols(), |_, j| g.get(0, j));
                    accumulate(&mut grads, *a, ga);
                }
                Op::SumAll(a) => {
                    let [r, c] = val(*a).shape();
                    accumulate(&mut grads, *a, Tensor::filled(r, c, g.get(0, 0)));
                }
                Op::Mean(a) => {
                    let [r, c] = val(*a).shape();
                    let s = g.get(0, 0) / (r * c) as f64;
                    accumulate(&mut grads, *a, Tensor::filled(r, c, s));
                }
                Op::Gelu(a) => {
                    accumulate(&mut grads, *a, g.zip_map(val(*a), |x, y| x * gelu_prime(y)));
                }
                Op::Tanh(a) => {
                    accumulate(&mut grads, *a, g.zip_map(&node.value, |x, y| x * (1.0 - y * y)));
                }
                Op::Softplus(a) => {
                    accumulate(&mut grads, *a, g.zip_map(val(*a), |x, y| x * sigmoid(y)));
                }
                Op::Relu(a) => {
                    let ga = g.zip_map(val(*a), |x, y| if y > 0.0 { x } else { 0.0 });
                    accumulate(&mut grads, *a, ga);
                }
                Op::Square(a) => {
                    accumulate(&mut grads, *a, g.zip_map(val(*a), |x, y| 2.0 * x * y));
                }
                Op::Huber(a) => {
                    accumulate(&mut grads, *a, g.zip_map(val(*a), |x, y| x * huber_prime(y)));
                }
                Op::GatherRows(a, idx) => {
                    let [r, c] = val(*a).shape();
                    let mut ga = Tensor::zeros(r, c);
                    for (k, &i) in idx.iter().enumerate() {
                        for j in 0..c {
                            let cur = ga.get(i, j);
                            ga.set(i, j, cur + g.get(k, j));
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::Reshape(a) => {
                    let [r, c] = val(*a).shape();
                    accumulate(&mut grads, *a, Tensor::raw(r, c, g.data().to_vec()));
                }
                Op::RowNormalize(a) => {
                    let x = val(*a);
                    let y = &node.value;
                    let mut ga = Tensor::zeros(x.rows(), x.cols());
                    for i in 0..x.rows() {
                        let norm = x.row_slice(i).iter().map(|v| v * v).sum::<f64>().sqrt();
                        if norm == 0.0 {
                            continue;
                        }
                        let dot: f64 = y.row_slice(i).iter().zip(g.row_slice(i)).map(|(p, q)| p * q).sum();
                        for j in 0..x.cols() {
                            ga.set(i, j, (g.get(i, j) - y.get(i, j) * dot) / norm);
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
            }
            // leaves keep their gradient; interior slots are released above
            if matches!(node.op, Op::Leaf(_)) {
                grads[idx] = Some(g);
            }
        }
        Ok(Gradients { grads })
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

/// Reverse-mode gradients of a scalar output with respect to the designated
/// feature (`X`) and adjacency (`A`) inputs of the tape.
pub fn grad_wrt_inputs(tape: &Tape, output: Var) -> Result<InputGrads, NnError> {
    let x = tape.input_var(InputRole::Features).ok_or(NnError::MissingInput("features"))?;
    let a = tape.input_var(InputRole::Adjacency).ok_or(NnError::MissingInput("adjacency"))?;
    let grads = tape.backward(output)?;
    Ok(InputGrads {
        features: grads.wrt(tape, x),
        adjacency: grads.wrt(tape, a),
    })
}
