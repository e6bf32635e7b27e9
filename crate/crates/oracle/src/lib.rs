//! Reference computations for checking `relayflow` against.
//!
//! Nothing here shares numeric kernels with the library under test: the
//! finite-difference scheme works on plain closures, and the eigenvalue
//! oracle counts inertia with a symmetric elimination instead of rotating.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("step size must be positive and finite, got {0}")]
    BadStep(f64),
    #[error("function evaluation at coordinate {coord} returned a non-finite value")]
    NonFinite { coord: usize },
    #[error("matrix must be square and symmetric with 1 <= n <= {max}, got {detail}")]
    BadMatrix { max: usize, detail: String },
    #[error("bisection could not bracket eigenvalue {index}")]
    Bracket { index: usize },
}

/// Central-difference settings for a given context.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiniteDiffSpec {
    pub step: f64,
    pub rel_tol: f64,
}

impl FiniteDiffSpec {
    /// Network parameters and activations.
    pub const NETWORK: FiniteDiffSpec = FiniteDiffSpec { step: 1e-5, rel_tol: 1e-4 };
    /// Channel geometry (positions in arena units).
    pub const GEOMETRY: FiniteDiffSpec = FiniteDiffSpec { step: 1e-6, rel_tol: 1e-5 };
}

/// Central finite-difference gradient of `f` at `point`.
pub fn finite_diff<F>(f: F, point: &[f64], step: f64) -> Result<Vec<f64>, OracleError>
where
    F: Fn(&[f64]) -> f64,
{
    if !(step > 0.0 && step.is_finite()) {
        return Err(OracleError::BadStep(step));
    }
    let mut probe = point.to_vec();
    let mut grad = Vec::with_capacity(point.len());
    for coord in 0..point.len() {
        let orig = probe[coord];
        probe[coord] = orig + step;
        let fp = f(&probe);
        probe[coord] = orig - step;
        let fm = f(&probe);
        probe[coord] = orig;
        if !fp.is_finite() || !fm.is_finite() {
            return Err(OracleError::NonFinite { coord });
        }
        grad.push((fp - fm) / (2.0 * step));
    }
    Ok(grad)
}

/// Relative error `|a - b| / max(|a|, |b|, floor)`.
///
/// The floor keeps entries that are both essentially zero from reporting
/// huge relative errors.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    let scale = a.abs().max(b.abs()).max(floor);
    (a - b).abs() / scale
}

/// Largest entrywise relative error between two gradients, with the scale
/// taken from the larger of the two vectors' max-norms.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let scale = analytic
        .iter()
        .chain(numeric)
        .fold(floor, |m, v| m.max(v.abs()));
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| (a - b).abs() / scale)
        .fold(0.0, f64::max)
}

/// Largest dimension accepted by [`charpoly_eigs`].
pub const CHARPOLY_MAX_N: usize = 6;

/// Eigenvalues of a small symmetric matrix, sorted ascending.
///
/// Each eigenvalue is located by bisection inside the Gershgorin interval
/// using the Sturm count: the number of eigenvalues below `x` equals the
/// number of negative pivots of the symmetric elimination of `M - xI`
/// (Sylvester's law of inertia). Repeated eigenvalues are handled
/// naturally because the count jumps by the multiplicity.
pub fn charpoly_eigs(m: &[Vec<f64>]) -> Result<Vec<f64>, OracleError> {
    let n = m.len();
    if n == 0 || n > CHARPOLY_MAX_N || m.iter().any(|r| r.len() != n) {
        return Err(OracleError::BadMatrix {
            max: CHARPOLY_MAX_N,
            detail: format!("{n} rows"),
        });
    }
    for i in 0..n {
        for j in 0..i {
            if (m[i][j] - m[j][i]).abs() > 1e-12 * (1.0 + m[i][j].abs()) {
                return Err(OracleError::BadMatrix {
                    max: CHARPOLY_MAX_N,
                    detail: format!("asymmetric at ({i},{j})"),
                });
            }
        }
    }

    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let radius: f64 = (0..n).filter(|&j| j != i).map(|j| m[i][j].abs()).sum();
        lo = lo.min(m[i][i] - radius);
        hi = hi.max(m[i][i] + radius);
    }
    lo -= 1e-9 + 1e-12 * lo.abs();
    hi += 1e-9 + 1e-12 * hi.abs();

    let mut eigs = Vec::with_capacity(n);
    for k in 0..n {
        // smallest x with count_below(x) >= k + 1
        let (mut a, mut b) = (lo, hi);
        if count_below(m, a) > k || count_below(m, b) <= k {
            return Err(OracleError::Bracket { index: k });
        }
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                break;
            }
            if count_below(m, mid) > k {
                b = mid;
            } else {
                a = mid;
            }
        }
        eigs.push(0.5 * (a + b));
    }
    Ok(eigs)
}

/// Number of eigenvalues of `m` strictly below `x`.
fn count_below(m: &[Vec<f64>], x: f64) -> usize {
    let n = m.len();
    let mut work: Vec<Vec<f64>> = m.to_vec();
    for (i, row) in work.iter_mut().enumerate() {
        row[i] -= x;
    }
    let tiny = 1e-300;
    let mut negatives = 0;
    for k in 0..n {
        let mut pivot = work[k][k];
        if pivot == 0.0 {
            pivot = tiny;
        }
        if pivot < 0.0 {
            negatives += 1;
        }
        for i in (k + 1)..n {
            let factor = work[i][k] / pivot;
            if factor == 0.0 {
                continue;
            }
            for j in (k + 1)..n {
                work[i][j] -= factor * work[k][j];
            }
        }
    }
    negatives
}
