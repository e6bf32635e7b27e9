//! SIR-based link capacities between legitimate nodes under a single jammer.
//!
//! Every ordered pair `(i, j)` gets a signal-to-interference ratio
//!
//! ```text
//! SIR_ij = d_ij^-α / (η d_jJ^-α + Σ_{k ≠ i,j} ν(d_jk / r_int))
//! ```
//!
//! and the undirected link capacity is the harmonic combination of the two
//! directions, `B / (1/ln(1+SIR_ij) + 1/ln(1+SIR_ji))`. Partial derivatives
//! with respect to node coordinates are computed in closed form here so the
//! module does not depend on the autodiff engine.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A point in arena coordinates (1 unit = 50 m).
pub type Point = [f64; 2];

/// Distances below this raise [`ChannelError::DegenerateGeometry`].
pub const MIN_DISTANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Site {
    Node(usize),
    Jammer,
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Site::Node(i) => write!(f, "node {i}"),
            Site::Jammer => write!(f, "jammer"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("degenerate geometry: {a} and {b} are {distance:e} apart (minimum {MIN_DISTANCE:e})")]
    DegenerateGeometry { a: Site, b: Site, distance: f64 },
    #[error("channel parameter `{name}` must be positive and finite (z0 < 1), got {value}")]
    InvalidParam { name: &'static str, value: f64 },
    #[error("invalid deployment: {0}")]
    InvalidDeployment(String),
    #[error("node index {index} out of range for {n} nodes")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("coordinate index {0} must be 0 or 1")]
    BadCoordinate(usize),
    #[error("SIR is defined between distinct nodes (got i = j = {0})")]
    SameNode(usize),
}

/// Path-loss and interference constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Path-loss exponent.
    pub alpha: f64,
    /// Jammer-to-legitimate transmit power ratio.
    pub eta: f64,
    /// Bandwidth per link (rate units).
    pub bandwidth: f64,
    /// Interference radius in arena units.
    pub r_int: f64,
    /// Height of the smoothed interference step.
    pub rho: f64,
    /// Steepness of the smoothed interference step.
    pub kappa: f64,
    /// Offset of the smoothed interference step, `0 < z0 < 1`.
    pub z0: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams {
            alpha: 2.0,
            eta: 2.0,
            bandwidth: 1.0,
            r_int: 1.0,
            rho: 1.0,
            kappa: 10.0,
            z0: 1e-3,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<(), ChannelError> {
        let fields = [
            ("alpha", self.alpha),
            ("eta", self.eta),
            ("bandwidth", self.bandwidth),
            ("r_int", self.r_int),
            ("rho", self.rho),
            ("kappa", self.kappa),
            ("z0", self.z0),
        ];
        for (name, value) in fields {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ChannelError::InvalidParam { name, value });
            }
        }
        if self.z0 >= 1.0 {
            return Err(ChannelError::InvalidParam { name: "z0", value: self.z0 });
        }
        Ok(())
    }
}

/// Node positions plus the jammer. Node 0 is the source and node `n - 1`
/// the destination; everything in between is a relay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deployment {
    positions: Vec<Point>,
    jammer: Point,
}

impl Deployment {
    pub fn new(positions: Vec<Point>, jammer: Point) -> Result<Self, ChannelError> {
        if positions.len() < 3 {
            return Err(ChannelError::InvalidDeployment(format!(
                "need at least 3 nodes, got {}",
                positions.len()
            )));
        }
        let finite = |p: &Point| p[0].is_finite() && p[1].is_finite();
        if !positions.iter().all(finite) || !finite(&jammer) {
            return Err(ChannelError::InvalidDeployment("non-finite coordinate".into()));
        }
        Ok(Deployment { positions, jammer })
    }

    pub fn n(&self) -> usize {
        self.positions.len()
    }

    pub fn source(&self) -> usize {
        0
    }

    pub fn destination(&self) -> usize {
        self.positions.len() - 1
    }

    pub fn num_relays(&self) -> usize {
        self.positions.len() - 2
    }

    /// Node indices of the relays, in order.
    pub fn relays(&self) -> std::ops::Range<usize> {
        1..self.positions.len() - 1
    }

    pub fn positions(&self) -> &[Point] {
        &self.positions
    }

    pub fn position(&self, i: usize) -> Point {
        self.positions[i]
    }

    pub fn jammer(&self) -> Point {
        self.jammer
    }

    /// Returns a copy with relay `r` (0-based among relays) displaced by `delta`.
    pub fn with_relay_offsets(&self, offsets: &[Point]) -> Result<Deployment, ChannelError> {
        if offsets.len() != self.num_relays() {
            return Err(ChannelError::InvalidDeployment(format!(
                "expected {} relay offsets, got {}",
                self.num_relays(),
                offsets.len()
            )));
        }
        let mut positions = self.positions.clone();
        for (p, d) in positions[1..self.n() - 1].iter_mut().zip(offsets) {
            p[0] += d[0];
            p[1] += d[1];
        }
        Deployment::new(positions, self.jammer)
    }

    /// Replaces the relay coordinates, keeping endpoints and jammer.
    pub fn with_relays(&self, relays: &[Point]) -> Result<Deployment, ChannelError> {
        if relays.len() != self.num_relays() {
            return Err(ChannelError::InvalidDeployment(format!(
                "expected {} relays, got {}",
                self.num_relays(),
                relays.len()
            )));
        }
        let mut positions = self.positions.clone();
        positions[1..self.n() - 1].copy_from_slice(relays);
        Deployment::new(positions, self.jammer)
    }

    /// Same deployment with the relays listed in `order` (relay slots, 0-based).
    pub fn permute_relays(&self, order: &[usize]) -> Result<Deployment, ChannelError> {
        let relays: Vec<Point> = order.iter().map(|&r| self.positions[r + 1]).collect();
        self.with_relays(&relays)
    }

    fn site(&self, s: Site) -> Point {
        match s {
            Site::Node(i) => self.positions[i],
            Site::Jammer => self.jammer,
        }
    }

    fn check_index(&self, i: usize) -> Result<(), ChannelError> {
        if i >= self.n() {
            return Err(ChannelError::IndexOutOfRange { index: i, n: self.n() });
        }
        Ok(())
    }
}

fn distance(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn checked_distance(dep: &Deployment, a: Site, b: Site) -> Result<f64, ChannelError> {
    let d = distance(dep.site(a), dep.site(b));
    if d < MIN_DISTANCE {
        return Err(ChannelError::DegenerateGeometry { a, b, distance: d });
    }
    Ok(d)
}

/// Fails if any two nodes, or any node and the jammer, are closer than
/// [`MIN_DISTANCE`].
pub fn check_geometry(dep: &Deployment) -> Result<(), ChannelError> {
    for i in 0..dep.n() {
        checked_distance(dep, Site::Node(i), Site::Jammer)?;
        for j in (i + 1)..dep.n() {
            checked_distance(dep, Site::Node(i), Site::Node(j))?;
        }
    }
    Ok(())
}

fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// Smoothed interference step `ϱ·e^{-κz - ln z0} / (1 + e^{-κz - ln z0})`.
pub fn nu(params: &ChannelParams, z: f64) -> f64 {
    params.rho * sigmoid(-params.kappa * z - params.z0.ln())
}

/// Derivative of [`nu`] with respect to `z`.
pub fn nu_prime(params: &ChannelParams, z: f64) -> f64 {
    let s = sigmoid(-params.kappa * z - params.z0.ln());
    -params.kappa * params.rho * s * (1.0 - s)
}

/// Signal-to-interference ratio of the transmission from node `i` to node `j`.
pub fn sir(params: &ChannelParams, dep: &Deployment, i: usize, j: usize) -> Result<f64, ChannelError> {
    dep.check_index(i)?;
    dep.check_index(j)?;
    if i == j {
        return Err(ChannelError::SameNode(i));
    }
    let d_ij = checked_distance(dep, Site::Node(i), Site::Node(j))?;
    let d_jj = checked_distance(dep, Site::Node(j), Site::Jammer)?;
    let mut interference = params.eta * d_jj.powf(-params.alpha);
    for k in (0..dep.n()).filter(|&k| k != i && k != j) {
        let d_jk = distance(dep.position(j), dep.position(k));
        interference += nu(params, d_jk / params.r_int);
    }
    Ok(d_ij.powf(-params.alpha) / interference)
}

/// Two-way link rate from a pair of SIR values; zero when either is zero.
pub fn rate_from_sir(bandwidth: f64, sir_ij: f64, sir_ji: f64) -> f64 {
    let l1 = sir_ij.ln_1p();
    let l2 = sir_ji.ln_1p();
    if l1 <= 0.0 || l2 <= 0.0 {
        return 0.0;
    }
    bandwidth * l1 * l2 / (l1 + l2)
}

/// Link capacity `A_ij`; zero on the diagonal.
pub fn capacity(params: &ChannelParams, dep: &Deployment, i: usize, j: usize) -> Result<f64, ChannelError> {
    dep.check_index(i)?;
    dep.check_index(j)?;
    if i == j {
        return Ok(0.0);
    }
    let s_ij = sir(params, dep, i, j)?;
    let s_ji = sir(params, dep, j, i)?;
    Ok(rate_from_sir(params.bandwidth, s_ij, s_ji))
}

/// SIR of every ordered pair together with its gradient with respect to all
/// node coordinates.
struct SirField {
    n: usize,
    value: Vec<f64>,
    /// `grad[(i * n + j) * n + k]` is `∂SIR_ij / ∂ξ_k`.
    grad: Vec<Point>,
}

impl SirField {
    fn compute(params: &ChannelParams, dep: &Deployment) -> Result<Self, ChannelError> {
        check_geometry(dep)?;
        let n = dep.n();
        let a = params.alpha;
        let mut value = vec![0.0; n * n];
        let mut grad = vec![[0.0; 2]; n * n * n];
        let unit = |from: Point, to: Point, d: f64| [(from[0] - to[0]) / d, (from[1] - to[1]) / d];

        for j in 0..n {
            let pj = dep.position(j);
            let pjam = dep.jammer();
            let d_jj = distance(pj, pjam);
            let u_jj = unit(pj, pjam, d_jj);
            // ∂(η d_jJ^-α)/∂ξ_j
            let jam_coef = -a * params.eta * d_jj.powf(-a - 1.0);
            let jam_term = params.eta * d_jj.powf(-a);

            // ν(d_jk / r) and its derivative for every k ≠ j
            let mut nu_val = vec![0.0; n];
            let mut nu_grad_k = vec![[0.0; 2]; n];
            for k in (0..n).filter(|&k| k != j) {
                let pk = dep.position(k);
                let d = distance(pj, pk);
                let z = d / params.r_int;
                nu_val[k] = nu(params, z);
                let dn = nu_prime(params, z) / params.r_int;
                let u = unit(pk, pj, d);
                nu_grad_k[k] = [dn * u[0], dn * u[1]];
            }
            let nu_total: f64 = nu_val.iter().sum();

            for i in (0..n).filter(|&i| i != j) {
                let pi = dep.position(i);
                let d_ij = distance(pi, pj);
                let u_ij = unit(pi, pj, d_ij);
                let signal = d_ij.powf(-a);
                let ds = -a * d_ij.powf(-a - 1.0);
                let interference = jam_term + nu_total - nu_val[i];
                let s = signal / interference;
                value[i * n + j] = s;

                let base = (i * n + j) * n;
                // signal: d_ij depends on ξ_i (+u_ij) and ξ_j (−u_ij)
                let inv_i = 1.0 / interference;
                for m in 0..2 {
                    grad[base + i][m] += ds * u_ij[m] * inv_i;
                    grad[base + j][m] -= ds * u_ij[m] * inv_i;
                }
                // interference: −S/I² · ∂I
                let c = -s * inv_i;
                for m in 0..2 {
                    grad[base + j][m] += c * jam_coef * u_jj[m];
                }
                for k in (0..n).filter(|&k| k != i && k != j) {
                    for m in 0..2 {
                        let g = nu_grad_k[k][m];
                        grad[base + k][m] += c * g;
                        grad[base + j][m] -= c * g;
                    }
                }
            }
        }
        Ok(SirField { n, value, grad })
    }

    fn sir(&self, i: usize, j: usize) -> f64 {
        self.value[i * self.n + j]
    }

    fn sir_grad(&self, i: usize, j: usize, k: usize) -> Point {
        self.grad[(i * self.n + j) * self.n + k]
    }
}

/// Capacity matrix `A` of a deployment: symmetric, zero diagonal.
pub fn adjacency(params: &ChannelParams, dep: &Deployment) -> Result<DMatrix<f64>, ChannelError> {
    check_geometry(dep)?;
    let n = dep.n();
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let c = capacity(params, dep, i, j)?;
            a[(i, j)] = c;
            a[(j, i)] = c;
        }
    }
    Ok(a)
}

/// `∂A / ∂ξ_i^(m)` for every node `i` and coordinate `m`.
#[derive(Debug, Clone)]
pub struct AdjacencyJacobian {
    n: usize,
    /// indexed by `2 * node + coordinate`
    blocks: Vec<DMatrix<f64>>,
}

impl AdjacencyJacobian {
    pub fn wrt(&self, node: usize, coord: usize) -> &DMatrix<f64> {
        &self.blocks[2 * node + coord]
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Contracts an upstream gradient `G = ∂g/∂A` into `∂g/∂ξ_i^(m)` for every node.
    pub fn contract(&self, upstream: &DMatrix<f64>) -> Vec<Point> {
        (0..self.n)
            .map(|i| {
                let mut out = [0.0; 2];
                for (m, o) in out.iter_mut().enumerate() {
                    *o = self.wrt(i, m).component_mul(upstream).sum();
                }
                out
            })
            .collect()
    }
}

/// Closed-form Jacobian of the capacity matrix with respect to every node coordinate.
pub fn adjacency_jacobian(params: &ChannelParams, dep: &Deployment) -> Result<AdjacencyJacobian, ChannelError> {
    let field = SirField::compute(params, dep)?;
    let n = dep.n();
    let b = params.bandwidth;
    let mut blocks = vec![DMatrix::zeros(n, n); 2 * n];
    for p in 0..n {
        for q in (p + 1)..n {
            let s1 = field.sir(p, q);
            let s2 = field.sir(q, p);
            let l1 = s1.ln_1p();
            let l2 = s2.ln_1p();
            if l1 <= 0.0 || l2 <= 0.0 {
                continue;
            }
            let denom = (l1 + l2) * (l1 + l2);
            let c1 = b * l2 * l2 / denom / (1.0 + s1);
            let c2 = b * l1 * l1 / denom / (1.0 + s2);
            for k in 0..n {
                let g1 = field.sir_grad(p, q, k);
                let g2 = field.sir_grad(q, p, k);
                for m in 0..2 {
                    let d = c1 * g1[m] + c2 * g2[m];
                    blocks[2 * k + m][(p, q)] = d;
                    blocks[2 * k + m][(q, p)] = d;
                }
            }
        }
    }
    Ok(AdjacencyJacobian { n, blocks })
}

/// `[∂A_pq / ∂ξ_i^(m)]` for one node `i` and coordinate `m ∈ {0, 1}`.
pub fn adjacency_grad(
    params: &ChannelParams,
    dep: &Deployment,
    i: usize,
    m: usize,
) -> Result<DMatrix<f64>, ChannelError> {
    dep.check_index(i)?;
    if m > 1 {
        return Err(ChannelError::BadCoordinate(m));
    }
    let jac = adjacency_jacobian(params, dep)?;
    Ok(jac.blocks[2 * i + m].clone())
}
