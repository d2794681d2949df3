//! Phase-one simplex for small dense feasibility systems { x : a.x <= b }.
//!
//! Free variables are split x = x+ - x-, slack variables turn inequalities
//! into equations, and artificial variables are added for rows whose slack
//! cannot start basic. Bland's rule guarantees termination; an iteration cap
//! returns Indeterminate, which callers treat as feasible.

use super::Feasibility;

#[derive(Clone, Debug)]
pub struct LinRow {
    pub a: Vec<f64>,
    pub b: f64,
}

pub fn phase_one(rows: &[LinRow], n: usize, tol: f64) -> Feasibility {
    // drop all-zero rows up front; an inconsistent zero row is already a verdict
    let mut sys: Vec<(Vec<f64>, f64)> = Vec::with_capacity(rows.len());
    for r in rows {
        let amax = r.a.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if amax == 0.0 {
            if r.b < -tol {
                return Feasibility::Infeasible;
            }
            continue;
        }
        // row scaling keeps the feasibility tolerance meaningful
        let s = 1.0 / amax;
        sys.push((r.a.iter().map(|x| x * s).collect(), r.b * s));
    }
    let m = sys.len();
    if m == 0 {
        return Feasibility::Feasible(vec![0.0; n]);
    }

    // columns: 0..n x+, n..2n x-, 2n..2n+m slacks, then artificials
    let flipped: Vec<bool> = sys.iter().map(|(_, b)| *b < 0.0).collect();
    let n_art = flipped.iter().filter(|f| **f).count();
    let ncols = 2 * n + m + n_art;
    let mut t = vec![vec![0.0f64; ncols + 1]; m];
    let mut basis = vec![0usize; m];
    let mut art = 2 * n + m;
    for (i, (a, b)) in sys.iter().enumerate() {
        let sgn = if flipped[i] { -1.0 } else { 1.0 };
        for j in 0..n {
            t[i][j] = sgn * a[j];
            t[i][n + j] = -sgn * a[j];
        }
        t[i][2 * n + i] = sgn;
        t[i][ncols] = sgn * b;
        if flipped[i] {
            t[i][art] = 1.0;
            basis[i] = art;
            art += 1;
        } else {
            basis[i] = 2 * n + i;
        }
    }

    // cost row holds z_j - c_j for minimizing the artificial sum
    let mut cost = vec![0.0f64; ncols + 1];
    for i in 0..m {
        if flipped[i] {
            for j in 0..=ncols {
                cost[j] += t[i][j];
            }
        }
    }
    for i in 0..m {
        if flipped[i] {
            cost[basis[i]] -= 1.0;
        }
    }

    let max_iter = 100 * (m + n) + 100;
    for _ in 0..max_iter {
        // Bland: smallest improving column index
        let mut enter = None;
        for j in 0..ncols {
            if cost[j] > tol {
                enter = Some(j);
                break;
            }
        }
        let Some(e) = enter else {
            return finish(&t, &basis, n, ncols, cost[ncols], tol);
        };
        // ratio test, ties by smallest basis variable (Bland)
        let mut leave: Option<usize> = None;
        let mut best = f64::INFINITY;
        for i in 0..m {
            if t[i][e] > tol {
                let ratio = t[i][ncols] / t[i][e];
                let better = match leave {
                    None => true,
                    Some(l) => {
                        ratio < best - 1e-15 || (ratio <= best + 1e-15 && basis[i] < basis[l])
                    }
                };
                if better {
                    best = ratio;
                    leave = Some(i);
                }
            }
        }
        let Some(l) = leave else {
            // unbounded phase-one objective cannot happen; bail conservatively
            return Feasibility::Indeterminate;
        };
        pivot(&mut t, &mut cost, l, e, ncols);
        basis[l] = e;
    }
    Feasibility::Indeterminate
}

fn pivot(t: &mut [Vec<f64>], cost: &mut [f64], l: usize, e: usize, ncols: usize) {
    let piv = t[l][e];
    for j in 0..=ncols {
        t[l][j] /= piv;
    }
    for i in 0..t.len() {
        if i != l && t[i][e] != 0.0 {
            let f = t[i][e];
            for j in 0..=ncols {
                t[i][j] -= f * t[l][j];
            }
        }
    }
    let f = cost[e];
    if f != 0.0 {
        for j in 0..=ncols {
            cost[j] -= f * t[l][j];
        }
    }
}

fn finish(
    t: &[Vec<f64>],
    basis: &[usize],
    n: usize,
    ncols: usize,
    obj: f64,
    tol: f64,
) -> Feasibility {
    // optimal phase-one value is the residual infeasibility
    if obj.abs() > tol * 10.0 {
        return Feasibility::Infeasible;
    }
    let mut x = vec![0.0f64; n];
    for (i, &b) in basis.iter().enumerate() {
        if b < n {
            x[b] += t[i][ncols];
        } else if b < 2 * n {
            x[b - n] -= t[i][ncols];
        }
    }
    Feasibility::Feasible(x)
}
