//! Dense primal simplex for zero-sum matrix games.
//!
//! [`defender_optimum`] solves the column player's side of a matrix game:
//! given payoffs `v[a][d]` that the column player (defender, minimizer)
//! pays to the row player (attacker, maximizer), it returns the mixed
//! column strategy minimizing the worst-case expected payoff together with
//! the game value.
//!
//! The classic transform is used. Shift the matrix elementwise positive,
//! `v' = v + (1 - min v)` (so `min v' = 1`), substitute `z = q / u` where
//! `u > 0` is the (shifted) game value, and solve
//!
//! ```text
//!     maximize    sum(z)
//!     subject to  v' z <= 1      (one constraint per attacker row)
//!                 z >= 0
//! ```
//!
//! whose optimum is `1/u`. The slack basis is feasible from the start, so
//! no phase-1 is needed, and Bland's pivoting rule guarantees termination.
//! The row player's side of the same game is obtained by calling this
//! routine on the negated transpose: the maximizer of `v` is the minimizer
//! of `-v^T`.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

/// Reduced costs at or below this are treated as zero (optimality test).
const COST_TOL: f64 = 1e-9;
/// Pivot candidates at or below this are treated as nonpositive.
const PIVOT_TOL: f64 = 1e-10;
/// Hard cap on pivot steps. Bland's rule terminates on its own; the cap
/// only turns a numerics bug into an error instead of a hang.
const MAX_PIVOTS: usize = 100_000;

/// Optimal mixed strategy of the minimizing column player and the value of
/// the matrix game `v` (rows maximize, columns minimize).
pub(crate) fn defender_optimum(v: ArrayView2<'_, f64>) -> Result<(Vec<f64>, f64)> {
    let (n_rows, n_cols) = v.dim();
    if n_rows == 0 || n_cols == 0 {
        return Err(Error::param("cannot solve an empty matrix game"));
    }
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    if !min.is_finite() || v.iter().any(|x| !x.is_finite()) {
        return Err(Error::param("matrix game entries must be finite"));
    }
    let shift = 1.0 - min;
    let shifted = v.mapv(|x| x + shift);

    let z = maximize_sum(&shifted)?;
    let total: f64 = z.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Numerical(format!(
            "simplex returned a nonpositive objective {total}"
        )));
    }
    // q = z * u with u = 1/total; clamp roundoff negatives, renormalize.
    let mut q: Vec<f64> = z.iter().map(|&zi| (zi / total).max(0.0)).collect();
    let mass: f64 = q.iter().sum();
    for qi in &mut q {
        *qi /= mass;
    }
    Ok((q, 1.0 / total - shift))
}

/// Solve `maximize sum(x) subject to a x <= 1, x >= 0` for an elementwise
/// positive matrix `a`, returning the optimal `x`.
fn maximize_sum(a: &Array2<f64>) -> Result<Vec<f64>> {
    let (m, n) = a.dim();
    let cols = n + m; // structural variables then one slack per row
    // Tableau rows: [structural | slack | rhs]; slack basis start.
    let mut t = Array2::<f64>::zeros((m, cols + 1));
    for i in 0..m {
        for j in 0..n {
            t[[i, j]] = a[[i, j]];
        }
        t[[i, n + i]] = 1.0;
        t[[i, cols]] = 1.0;
    }
    // Reduced-cost row for the objective sum(x): 1 on structural columns.
    let mut cost = vec![0.0; cols];
    for c in cost.iter_mut().take(n) {
        *c = 1.0;
    }
    let mut basis: Vec<usize> = (n..cols).collect();

    for _ in 0..MAX_PIVOTS {
        // Bland: entering variable = smallest improvable index.
        let Some(enter) = (0..cols).find(|&j| cost[j] > COST_TOL) else {
            // Optimal: read the structural solution off the basis.
            let mut x = vec![0.0; n];
            for (i, &b) in basis.iter().enumerate() {
                if b < n {
                    x[b] = t[[i, cols]].max(0.0);
                }
            }
            return Ok(x);
        };
        // Ratio test; Bland tie-break on the smallest basis index.
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..m {
            let coeff = t[[i, enter]];
            if coeff > PIVOT_TOL {
                let ratio = t[[i, cols]] / coeff;
                let better = match leave {
                    None => true,
                    Some((li, lr)) => {
                        ratio < lr - PIVOT_TOL
                            || (ratio <= lr + PIVOT_TOL && basis[i] < basis[li])
                    }
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
        }
        let Some((pivot_row, _)) = leave else {
            // Cannot happen for positive a: sum(x) <= 1 on the feasible set.
            return Err(Error::Numerical(
                "matrix-game LP reported unbounded; entries may be degenerate".into(),
            ));
        };

        // Pivot: normalize the row, eliminate the column everywhere else.
        let pivot = t[[pivot_row, enter]];
        for j in 0..=cols {
            t[[pivot_row, j]] /= pivot;
        }
        for i in 0..m {
            if i != pivot_row {
                let factor = t[[i, enter]];
                if factor != 0.0 {
                    for j in 0..=cols {
                        t[[i, j]] -= factor * t[[pivot_row, j]];
                    }
                    t[[i, cols]] = t[[i, cols]].max(0.0);
                }
            }
        }
        let factor = cost[enter];
        for j in 0..cols {
            cost[j] -= factor * t[[pivot_row, j]];
        }
        basis[pivot_row] = enter;
    }
    Err(Error::Numerical(format!(
        "simplex did not terminate within {MAX_PIVOTS} pivots"
    )))
}
