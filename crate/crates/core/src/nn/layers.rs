use std::cmp::Ordering;

use super::{NnError, Tape, Tensor, Var};

/// `X·W1 + (A·X)·W2`: each node keeps a linear map of its own features and
/// adds a second linear map of the `A`-weighted sum of its neighbours'.
pub fn graph_conv(tape: &mut Tape, x: Var, a: Var, w1: Var, w2: Var) -> Result<Var, NnError> {
    let (sx, sa) = (tape.value(x).shape(), tape.value(a).shape());
    if sa[0] != sa[1] || sa[1] != sx[0] {
        return Err(NnError::Shape { op: "graph_conv", lhs: sx, rhs: sa });
    }
    let own = tape.matmul(x, w1)?;
    let agg = tape.matmul(a, x)?;
    let msg = tape.matmul(agg, w2)?;
    tape.add(own, msg)
}

/// `x·W + b` with `b` a `1 × d_out` row broadcast over rows.
pub fn linear(tape: &mut Tape, x: Var, w: Var, b: Var) -> Result<Var, NnError> {
    let y = tape.matmul(x, w)?;
    tape.add_row(y, b)
}

/// Column sums, `n × d → 1 × d`.
pub fn global_add_pool(tape: &mut Tape, x: Var) -> Var {
    tape.sum_rows(x)
}

/// Row order used by [`global_sort_pool`]: descending by the last column,
/// ties broken by descending lexicographic order over the remaining columns,
/// then by row index.
pub fn sort_order(x: &Tensor) -> Vec<usize> {
    let c = x.cols();
    let mut order: Vec<usize> = (0..x.rows()).collect();
    order.sort_by(|&i, &j| {
        let (ri, rj) = (x.row_slice(i), x.row_slice(j));
        let keys = std::iter::once(c - 1).chain(0..c.saturating_sub(1));
        for k in keys {
            match rj[k].partial_cmp(&ri[k]).unwrap_or(Ordering::Equal) {
                Ordering::Equal => continue,
                o => return o,
            }
        }
        i.cmp(&j)
    });
    order
}

/// Top `k` rows in [`sort_order`], flattened to `1 × (k·d)`. Also returns
/// which input row landed in each slot.
pub fn global_sort_pool(tape: &mut Tape, x: Var, k: usize) -> Result<(Var, Vec<usize>), NnError> {
    let n = tape.value(x).rows();
    if k > n {
        return Err(NnError::SortPoolK { k, n });
    }
    let mut order = sort_order(tape.value(x));
    order.truncate(k);
    let d = tape.value(x).cols();
    let picked = tape.gather_rows(x, &order)?;
    let flat = tape.reshape(picked, 1, k * d)?;
    Ok((flat, order))
}

/// Divides every row by `√n`.
pub fn graph_size_norm(tape: &mut Tape, x: Var) -> Var {
    let n = tape.value(x).rows().max(1);
    tape.scale(x, 1.0 / (n as f64).sqrt())
}

/// Mean of squared differences.
pub fn mse(tape: &mut Tape, pred: Var, target: Var) -> Result<Var, NnError> {
    let d = tape.sub(pred, target)?;
    let sq = tape.square(d);
    Ok(tape.mean(sq))
}

/// Squared Frobenius norm `‖Y − Ỹ‖_F²`.
pub fn frobenius_mse(tape: &mut Tape, y: Var, y_tilde: Var) -> Result<Var, NnError> {
    let d = tape.sub(y, y_tilde)?;
    let sq = tape.square(d);
    Ok(tape.sum_all(sq))
}

/// Elementwise Huber function, averaged.
pub fn huber_loss(tape: &mut Tape, x: Var) -> Var {
    let h = tape.huber(x);
    tape.mean(h)
}
