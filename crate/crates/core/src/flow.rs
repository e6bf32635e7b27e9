//! Exact max-flow / min-cut on small dense capacity matrices.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use thiserror::Error;

/// Arcs with residual capacity at or below this are treated as saturated.
pub const RESIDUAL_EPS: f64 = 1e-12;

/// Largest graph the exhaustive cut enumeration accepts.
pub const BRUTE_FORCE_MAX_N: usize = 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("capacity matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("capacity ({i},{j}) = {value} is negative or non-finite")]
    BadCapacity { i: usize, j: usize, value: f64 },
    #[error("terminal index out of range or source == sink (s={s}, t={t}, n={n})")]
    BadTerminals { s: usize, t: usize, n: usize },
    #[error("exhaustive min-cut supports at most {max} nodes, got {n}")]
    TooLarge { n: usize, max: usize },
}

/// Max-flow value together with a minimizing source side.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowResult {
    pub value: f64,
    /// Sorted node ids on the source side of a minimum cut.
    pub cut_partition: Vec<usize>,
}

fn validate(cap: &DMatrix<f64>, s: usize, t: usize) -> Result<usize, FlowError> {
    let (rows, cols) = cap.shape();
    if rows != cols {
        return Err(FlowError::NotSquare { rows, cols });
    }
    let n = rows;
    if s >= n || t >= n || s == t {
        return Err(FlowError::BadTerminals { s, t, n });
    }
    for i in 0..n {
        for j in 0..n {
            let v = cap[(i, j)];
            if !(v >= 0.0 && v.is_finite()) {
                return Err(FlowError::BadCapacity { i, j, value: v });
            }
        }
    }
    Ok(n)
}

/// Sum of `cap[i][j]` over `i` on the source side and `j` off it.
pub fn cut_value(cap: &DMatrix<f64>, source_side: &[bool]) -> f64 {
    let n = cap.nrows();
    let mut total = 0.0;
    for i in (0..n).filter(|&i| source_side[i]) {
        for j in (0..n).filter(|&j| !source_side[j]) {
            total += cap[(i, j)];
        }
    }
    total
}

/// Maximum `s`–`t` flow by shortest augmenting paths.
///
/// `cap[(i, j)]` is the capacity of arc `i → j`; a symmetric matrix models
/// undirected links. The returned cut is the set reachable from `s` in the
/// final residual graph.
pub fn max_flow(cap: &DMatrix<f64>, s: usize, t: usize) -> Result<FlowResult, FlowError> {
    let n = validate(cap, s, t)?;
    let mut residual = cap.clone();
    let mut value = 0.0;
    let mut parent = vec![usize::MAX; n];
    let mut queue = VecDeque::with_capacity(n);

    loop {
        parent.fill(usize::MAX);
        parent[s] = s;
        queue.clear();
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            if u == t {
                break;
            }
            for v in 0..n {
                if parent[v] == usize::MAX && residual[(u, v)] > RESIDUAL_EPS {
                    parent[v] = u;
                    queue.push_back(v);
                }
            }
        }
        if parent[t] == usize::MAX {
            break;
        }

        let mut bottleneck = f64::INFINITY;
        let mut v = t;
        while v != s {
            let u = parent[v];
            bottleneck = bottleneck.min(residual[(u, v)]);
            v = u;
        }
        let mut v = t;
        while v != s {
            let u = parent[v];
            residual[(u, v)] -= bottleneck;
            residual[(v, u)] += bottleneck;
            v = u;
        }
        value += bottleneck;
    }

    // the last BFS stopped without reaching t, so `parent` marks the reachable set
    let cut_partition = (0..n).filter(|&v| parent[v] != usize::MAX).collect();
    Ok(FlowResult { value, cut_partition })
}

/// Minimum cut by enumerating all `2^(n-2)` partitions with `s` on one side
/// and `t` on the other.
pub fn brute_force_min_cut(cap: &DMatrix<f64>, s: usize, t: usize) -> Result<FlowResult, FlowError> {
    let n = validate(cap, s, t)?;
    if n > BRUTE_FORCE_MAX_N {
        return Err(FlowError::TooLarge { n, max: BRUTE_FORCE_MAX_N });
    }
    let free: Vec<usize> = (0..n).filter(|&v| v != s && v != t).collect();
    let mut side = vec![false; n];
    let mut best = f64::INFINITY;
    let mut best_mask = 0u32;
    for mask in 0u32..(1u32 << free.len()) {
        side.fill(false);
        side[s] = true;
        for (bit, &v) in free.iter().enumerate() {
            side[v] = mask & (1 << bit) != 0;
        }
        let c = cut_value(cap, &side);
        if c < best {
            best = c;
            best_mask = mask;
        }
    }
    let mut cut_partition = vec![s];
    cut_partition.extend(
        free.iter()
            .enumerate()
            .filter(|(bit, _)| best_mask & (1 << bit) != 0)
            .map(|(_, &v)| v),
    );
    cut_partition.sort_unstable();
    Ok(FlowResult { value: best, cut_partition })
}

/// Checks that perturbing the undirected link `(i, j)` by `delta` moves the
/// max-flow by at most `2|δ|` (one `|δ|` per arc).
pub fn lipschitz_check(
    cap: &DMatrix<f64>,
    s: usize,
    t: usize,
    i: usize,
    j: usize,
    delta: f64,
) -> Result<bool, FlowError> {
    let base = max_flow(cap, s, t)?.value;
    let mut perturbed = cap.clone();
    perturbed[(i, j)] += delta;
    if i != j {
        perturbed[(j, i)] += delta;
    }
    let moved = max_flow(&perturbed, s, t)?.value;
    Ok((moved - base).abs() <= 2.0 * delta.abs() + 1e-12)
}

/// Single-arc variant: perturbing only `cap[(i, j)]` moves the max-flow by at most `|δ|`.
pub fn lipschitz_check_arc(
    cap: &DMatrix<f64>,
    s: usize,
    t: usize,
    i: usize,
    j: usize,
    delta: f64,
) -> Result<bool, FlowError> {
    let base = max_flow(cap, s, t)?.value;
    let mut perturbed = cap.clone();
    perturbed[(i, j)] += delta;
    let moved = max_flow(&perturbed, s, t)?.value;
    Ok((moved - base).abs() <= delta.abs() + 1e-12)
}
