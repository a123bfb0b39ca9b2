//! Dense strictly convex QP solver (dual active-set method of Goldfarb and Idnani).
//!
//! Solves
//!
//! ```text
//!     minimize    1/2 xᵀ G x + aᵀ x
//!     subject to  n_iᵀ x >= b_i,   i = 0..k
//! ```
//!
//! with `G` positive definite. The method starts from the unconstrained minimizer and
//! adds violated constraints one at a time while keeping dual feasibility, so it needs
//! no feasible starting point and reports infeasibility when a violated constraint can
//! not be satisfied. Problems here are tiny (tens of variables), so the reduced
//! inverse Hessian is rebuilt from the active set at every step instead of being
//! updated with Givens rotations.

use nalgebra::Cholesky;
use thiserror::Error;

use crate::linalg::{Matrix, Vector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("hessian is not positive definite")]
    NotPositiveDefinite,
    #[error("constraints are infeasible (violated constraint {0} cannot be satisfied)")]
    Infeasible(usize),
    #[error("active-set iteration limit reached after {0} steps")]
    IterationLimit(usize),
    #[error("dimension mismatch: {0}")]
    Dimension(&'static str),
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: Vector,
    /// One multiplier per constraint (zero for inactive ones).
    pub multipliers: Vector,
    /// Active constraint indices in ascending order.
    pub active: Vec<usize>,
    pub objective: f64,
    pub iterations: usize,
}

/// Feasibility tolerance on unit-normalized constraint rows.
const FEAS_TOL: f64 = 1e-11;

pub fn solve(
    hessian: &Matrix,
    linear: &Vector,
    constraints: &Matrix,
    rhs: &Vector,
) -> Result<QpSolution, QpError> {
    let n = hessian.nrows();
    if hessian.ncols() != n || linear.len() != n {
        return Err(QpError::Dimension("hessian/linear"));
    }
    if constraints.ncols() != n || constraints.nrows() != rhs.len() {
        return Err(QpError::Dimension("constraints/rhs"));
    }
    let k = constraints.nrows();

    let chol = Cholesky::new(hessian.clone()).ok_or(QpError::NotPositiveDefinite)?;
    let ginv = chol.inverse();

    // Unit-normalize the rows; zero rows are dropped (they are either trivially
    // satisfied or trivially infeasible).
    let mut normals: Vec<Vector> = Vec::with_capacity(k);
    let mut bounds = Vec::with_capacity(k);
    let mut scales = Vec::with_capacity(k);
    for i in 0..k {
        let row = constraints.row(i).transpose();
        let norm = row.norm();
        if norm == 0.0 {
            if rhs[i] > FEAS_TOL * (1.0 + rhs[i].abs()) {
                return Err(QpError::Infeasible(i));
            }
            normals.push(row);
            bounds.push(f64::NEG_INFINITY);
            scales.push(0.0);
        } else {
            normals.push(row / norm);
            bounds.push(rhs[i] / norm);
            scales.push(norm);
        }
    }

    let mut x = -&ginv * linear;
    let mut active: Vec<usize> = Vec::new();
    let mut duals: Vec<f64> = Vec::new();
    let max_iter = 20 * (k + n) + 100;
    let mut iter = 0usize;

    let slack = |x: &Vector, i: usize| normals[i].dot(x) - bounds[i];

    loop {
        // Most violated constraint; ties go to the lowest index.
        let mut pick: Option<(usize, f64)> = None;
        for i in 0..k {
            if active.contains(&i) || bounds[i] == f64::NEG_INFINITY {
                continue;
            }
            let s = slack(&x, i);
            if s < -FEAS_TOL * (1.0 + bounds[i].abs()) && pick.is_none_or(|(_, best)| s < best) {
                pick = Some((i, s));
            }
        }
        let Some((p, _)) = pick else { break };
        let np = &normals[p];
        let mut u_new = 0.0;

        loop {
            iter += 1;
            if iter > max_iter {
                return Err(QpError::IterationLimit(iter));
            }
            let ginv_np = &ginv * np;
            let (z, r) = if active.is_empty() {
                (ginv_np.clone(), Vector::zeros(0))
            } else {
                let q = active.len();
                let mut nmat = Matrix::zeros(n, q);
                for (c, &j) in active.iter().enumerate() {
                    nmat.set_column(c, &normals[j]);
                }
                let w = &ginv * &nmat;
                let m = nmat.transpose() * &w;
                let mchol = match Cholesky::new(m) {
                    Some(c) => c,
                    None => return Err(QpError::IterationLimit(iter)),
                };
                let r = mchol.solve(&(w.transpose() * np));
                let z = &ginv_np - &w * &r;
                (z, r)
            };

            // Partial (dual) step: largest step keeping active multipliers nonnegative.
            let mut t1 = f64::INFINITY;
            let mut drop: Option<usize> = None;
            for (c, &rc) in r.iter().enumerate() {
                if rc > 1e-14 {
                    let ratio = duals[c] / rc;
                    let better = ratio < t1
                        || (ratio == t1 && drop.is_some_and(|d| active[c] < active[d]));
                    if better {
                        t1 = ratio;
                        drop = Some(c);
                    }
                }
            }
            // Full (primal) step: makes constraint p active.
            let zn = z.dot(np);
            let scale = np.dot(&ginv_np).max(f64::MIN_POSITIVE);
            let t2 = if zn > 1e-12 * scale {
                -slack(&x, p) / zn
            } else {
                f64::INFINITY
            };

            if t1.is_infinite() && t2.is_infinite() {
                return Err(QpError::Infeasible(p));
            }
            if t2.is_infinite() {
                for (c, rc) in r.iter().enumerate() {
                    duals[c] -= t1 * rc;
                }
                u_new += t1;
                let d = drop.expect("finite partial step has a blocking constraint");
                active.remove(d);
                duals.remove(d);
                continue;
            }
            let t = t1.min(t2);
            x += &z * t;
            for (c, rc) in r.iter().enumerate() {
                duals[c] -= t * rc;
            }
            u_new += t;
            if t2 <= t1 {
                active.push(p);
                duals.push(u_new);
                break;
            }
            let d = drop.expect("partial step has a blocking constraint");
            active.remove(d);
            duals.remove(d);
        }
    }

    let mut multipliers = Vector::zeros(k);
    for (c, &j) in active.iter().enumerate() {
        multipliers[j] = duals[c].max(0.0) / scales[j];
    }
    let mut order: Vec<usize> = active.clone();
    order.sort_unstable();
    let objective = 0.5 * x.dot(&(hessian * &x)) + linear.dot(&x);
    Ok(QpSolution {
        x,
        multipliers,
        active: order,
        objective,
        iterations: iter,
    })
}

/// KKT residual of a candidate primal/dual pair: the max of stationarity, primal
/// infeasibility, dual infeasibility and complementarity violations.
pub fn kkt_residual(
    hessian: &Matrix,
    linear: &Vector,
    constraints: &Matrix,
    rhs: &Vector,
    x: &Vector,
    multipliers: &Vector,
) -> f64 {
    let grad = hessian * x + linear - constraints.transpose() * multipliers;
    let mut res = grad.amax();
    for i in 0..constraints.nrows() {
        let s = constraints.row(i).transpose().dot(x) - rhs[i];
        res = res.max((-s).max(0.0));
        res = res.max((-multipliers[i]).max(0.0));
        res = res.max((multipliers[i] * s).abs());
    }
    res
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn unconstrained_minimum_when_nothing_binds() {
        let g = Matrix::identity(2, 2);
        let a = Vector::from_vec(vec![-1.0, -2.0]);
        let c = Matrix::from_row_slice(1, 2, &[-1.0, -1.0]);
        let b = Vector::from_vec(vec![-10.0]);
        let sol = solve(&g, &a, &c, &b).unwrap();
        assert_relative_eq!(sol.x, Vector::from_vec(vec![1.0, 2.0]), epsilon = 1e-12);
        assert!(sol.active.is_empty());
    }

    #[test]
    fn textbook_example() {
        // minimize 1/2 x² + 1/2 y² + x  s.t. x + 2y >= 1  → (-0.6, 0.8)
        let g = Matrix::identity(2, 2);
        let a = Vector::from_vec(vec![1.0, 0.0]);
        let c = Matrix::from_row_slice(1, 2, &[1.0, 2.0]);
        let b = Vector::from_vec(vec![1.0]);
        let sol = solve(&g, &a, &c, &b).unwrap();
        assert_relative_eq!(sol.x, Vector::from_vec(vec![-0.6, 0.8]), epsilon = 1e-12);
        assert_eq!(sol.active, vec![0]);
        assert!(kkt_residual(&g, &a, &c, &b, &sol.x, &sol.multipliers) < 1e-12);
    }

    #[test]
    fn detects_infeasibility() {
        let g = Matrix::identity(1, 1);
        let a = Vector::zeros(1);
        let c = Matrix::from_row_slice(2, 1, &[1.0, -1.0]);
        let b = Vector::from_vec(vec![2.0, -1.0]); // x >= 2 and x <= 1
        assert!(matches!(solve(&g, &a, &c, &b), Err(QpError::Infeasible(_))));
    }

    #[test]
    fn redundant_constraints_are_handled() {
        // Same constraint three times plus box; solution must still be exact.
        let g = Matrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let a = Vector::from_vec(vec![-4.0, -4.0]);
        let c = Matrix::from_row_slice(
            5,
            2,
            &[-1.0, -1.0, -2.0, -2.0, -1.0, -1.0, 1.0, 0.0, 0.0, 1.0],
        );
        let b = Vector::from_vec(vec![-1.0, -2.0, -1.0, 0.0, 0.0]);
        let sol = solve(&g, &a, &c, &b).unwrap();
        assert!(kkt_residual(&g, &a, &c, &b, &sol.x, &sol.multipliers) < 1e-10);
        assert_relative_eq!(sol.x.sum(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn rejects_indefinite_hessian() {
        let g = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let r = solve(&g, &Vector::zeros(2), &Matrix::zeros(0, 2), &Vector::zeros(0));
        assert_eq!(r.unwrap_err(), QpError::NotPositiveDefinite);
    }
}
