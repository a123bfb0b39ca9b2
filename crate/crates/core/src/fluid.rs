//! Per-period fluid program, boundary attraction, and the horizon fluid benchmark.
//!
//! The fluid program at period `t` is
//!
//! ```text
//!     max_p   pᵀ(α + B p)
//!     s.t.    A(α + B p) <= c_t / (T − t + 1)
//!             α + B p >= 0
//!             L <= p <= U
//! ```
//!
//! which is a strictly concave QP when `B + Bᵀ` is negative definite.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, Matrix, Vector};
use crate::model::{LinearDemandModel, PriceBox, PricingInstance};
use crate::qp::{self, QpError};

pub const DEFAULT_TOL: f64 = 1e-8;

/// Capacity right-hand sides at or below this value count as depleted.
pub const DEPLETED_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FluidError {
    #[error("no price in the box satisfies the resource constraints")]
    Infeasible,
    #[error("demand slope is not negative definite (λ_max of symmetric part = {0})")]
    NotConcave(f64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("solver failed: {0}")]
    Solver(String),
}

/// One re-solve: a demand law (possibly estimated, so the intercept is unconstrained),
/// consumption, right-hand side and box.
#[derive(Debug, Clone)]
pub struct FluidProblem {
    pub alpha: Vector,
    pub b: Matrix,
    pub a: Matrix,
    pub rhs: Vector,
    pub price_box: PriceBox,
}

impl FluidProblem {
    pub fn new(alpha: Vector, b: Matrix, a: Matrix, rhs: Vector, price_box: PriceBox) -> Self {
        // Negative right-hand sides only arise from floating-point drift of capacity.
        let rhs = rhs.map(|x| x.max(0.0));
        Self { alpha, b, a, rhs, price_box }
    }

    pub fn from_model(model: &LinearDemandModel, a: &Matrix, rhs: Vector, price_box: PriceBox) -> Self {
        Self::new(model.alpha().clone(), model.b().clone(), a.clone(), rhs, price_box)
    }

    /// Re-solve at period `t` (1-based) with remaining capacity `capacity`.
    pub fn at_period(
        alpha: &Vector,
        b: &Matrix,
        a: &Matrix,
        capacity: &Vector,
        t: usize,
        horizon: usize,
        price_box: PriceBox,
    ) -> Self {
        let remaining = (horizon + 1).saturating_sub(t).max(1) as f64;
        Self::new(alpha.clone(), b.clone(), a.clone(), capacity / remaining, price_box)
    }

    pub fn n(&self) -> usize {
        self.alpha.len()
    }

    /// Resources whose right-hand side is exhausted.
    pub fn depleted(&self) -> Vec<usize> {
        (0..self.rhs.len()).filter(|&i| self.rhs[i] <= DEPLETED_EPS).collect()
    }

    /// Products that consume at least one depleted resource.
    pub fn blocked_products(&self) -> Vec<usize> {
        let depleted = self.depleted();
        (0..self.n())
            .filter(|&j| depleted.iter().any(|&i| self.a[(i, j)] > 0.0))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FluidStatus {
    Optimal,
    /// Some products were removed because a resource they need is depleted.
    Reduced,
    /// Optimal, with at least one planned demand sitting on the zero boundary.
    DegenerateBoundary,
}

#[derive(Debug, Clone)]
pub struct FluidSolution {
    pub p: Vector,
    /// Planned demand; products removed by depletion carry 0.
    pub d: Vector,
    pub value: f64,
    pub status: FluidStatus,
    /// Binding resource constraints.
    pub active: Vec<usize>,
    pub kkt_residual: f64,
    /// Products forced to zero demand by depletion.
    pub removed: Vec<usize>,
}

struct QpForm {
    g: Matrix,
    lin: Vector,
    cons: Matrix,
    rhs: Vector,
    m: usize,
}

/// Builds the QP in price space for products `keep`; removed products sit at `U`.
fn build_qp(problem: &FluidProblem, keep: &[usize]) -> QpForm {
    let n = problem.n();
    let k = keep.len();
    let u = problem.price_box.upper();
    let l = problem.price_box.lower();
    let dropped: Vec<usize> = (0..n).filter(|j| !keep.contains(j)).collect();
    let alpha = Vector::from_fn(k, |a, _| {
        let j = keep[a];
        problem.alpha[j] + dropped.iter().map(|&c| problem.b[(j, c)] * u).sum::<f64>()
    });
    let b = Matrix::from_fn(k, k, |r, c| problem.b[(keep[r], keep[c])]);
    let m = problem.a.nrows();
    let a = Matrix::from_fn(m, k, |i, c| problem.a[(i, keep[c])]);

    // minimize -pᵀ(α + Bp) = 1/2 pᵀ G p + linᵀ p
    let g = -(&b + b.transpose());
    let lin = -alpha.clone();

    let rows = m + 3 * k;
    let mut cons = Matrix::zeros(rows, k);
    let mut rhs = Vector::zeros(rows);
    let ab = &a * &b;
    let aalpha = &a * &alpha;
    // resources: -(AB) p >= Aα - rhs
    for i in 0..m {
        for c in 0..k {
            cons[(i, c)] = -ab[(i, c)];
        }
        rhs[i] = aalpha[i] - problem.rhs[i];
    }
    // p >= L, -p >= -U
    for c in 0..k {
        cons[(m + c, c)] = 1.0;
        rhs[m + c] = l;
        cons[(m + k + c, c)] = -1.0;
        rhs[m + k + c] = -u;
    }
    // demand: B p >= -α
    for r in 0..k {
        for c in 0..k {
            cons[(m + 2 * k + r, c)] = b[(r, c)];
        }
        rhs[m + 2 * k + r] = -alpha[r];
    }
    QpForm { g, lin, cons, rhs, m }
}

/// Solve the fluid program; the maximizer is unique when `B` is negative definite.
pub fn solve_fluid(problem: &FluidProblem, tol: f64) -> Result<FluidSolution, FluidError> {
    let n = problem.n();
    if problem.b.nrows() != n || problem.b.ncols() != n || problem.a.ncols() != n {
        return Err(FluidError::Dimension("alpha/B/A disagree on n".into()));
    }
    if problem.a.nrows() != problem.rhs.len() || problem.price_box.dim() != n {
        return Err(FluidError::Dimension("A/rhs/box disagree".into()));
    }
    let lmax = linalg::lambda_max_sym(&problem.b);
    if lmax >= 0.0 {
        return Err(FluidError::NotConcave(lmax));
    }

    let removed = problem.blocked_products();
    let keep: Vec<usize> = (0..n).filter(|j| !removed.contains(j)).collect();
    let u = problem.price_box.upper();

    let mut p = Vector::from_element(n, u);
    let mut d = Vector::zeros(n);
    let mut active = Vec::new();
    let mut kkt = 0.0;
    if !keep.is_empty() {
        let form = build_qp(problem, &keep);
        let (x, mult, act) = match qp::solve(&form.g, &form.lin, &form.cons, &form.rhs) {
            Ok(sol) => (sol.x, sol.multipliers, sol.active),
            Err(QpError::Infeasible(_)) => return Err(FluidError::Infeasible),
            Err(QpError::IterationLimit(_)) => {
                let x = penalty_fallback(&form, problem.price_box, tol)?;
                let mult = Vector::zeros(form.cons.nrows());
                (x, mult, Vec::new())
            }
            Err(e) => return Err(FluidError::Solver(e.to_string())),
        };
        kkt = qp::kkt_residual(&form.g, &form.lin, &form.cons, &form.rhs, &x, &mult);
        // Scale-aware residual: relative to the gradient magnitude at the solution.
        let scale = 1.0 + form.lin.amax() + (&form.g * &x).amax();
        kkt /= scale;
        active = act.into_iter().filter(|&i| i < form.m).collect();
        // Active bounds come back with rounding error of either sign.
        for (c, &j) in keep.iter().enumerate() {
            p[j] = x[c].clamp(problem.price_box.lower(), u);
        }
        let full = &problem.alpha + &problem.b * &p;
        for &j in &keep {
            d[j] = full[j].max(0.0);
        }
    }
    let value = p.dot(&d);
    let status = if !removed.is_empty() {
        FluidStatus::Reduced
    } else if keep.iter().any(|&j| d[j] <= tol) {
        FluidStatus::DegenerateBoundary
    } else {
        FluidStatus::Optimal
    };
    Ok(FluidSolution { p, d, value, status, active, kkt_residual: kkt, removed })
}

/// Projected gradient on the box with a growing quadratic penalty for the other
/// constraints. Only used when the active-set loop hits its iteration guard.
fn penalty_fallback(form: &QpForm, bx: PriceBox, tol: f64) -> Result<Vector, FluidError> {
    let k = form.g.nrows();
    let (l, u) = (bx.lower(), bx.upper());
    let general: Vec<usize> = (0..form.cons.nrows())
        .filter(|&i| i < form.m || i >= form.m + 2 * k)
        .collect();
    let mut x = Vector::from_element(k, 0.5 * (l + u));
    let mut mu = 1.0;
    let lip0 = linalg::lambda_max_sym(&form.g).max(1e-12);
    let cnorm2 = form.cons.iter().map(|v| v * v).sum::<f64>().max(1.0);
    for _ in 0..40 {
        let step = 1.0 / (lip0 + mu * cnorm2);
        for it in 1..=5000 {
            let mut grad = &form.g * &x + &form.lin;
            for &i in &general {
                let row = form.cons.row(i).transpose();
                let s = row.dot(&x) - form.rhs[i];
                if s < 0.0 {
                    grad += &row * (mu * s);
                }
            }
            let next = (&x - &grad * (step / (1.0 + 1e-3 * it as f64).sqrt())).map(|v| v.clamp(l, u));
            let moved = (&next - &x).amax();
            x = next;
            if moved < tol * 1e-2 {
                break;
            }
        }
        let viol = general
            .iter()
            .map(|&i| (form.rhs[i] - form.cons.row(i).transpose().dot(&x)).max(0.0))
            .fold(0.0, f64::max);
        if viol <= tol {
            return Ok(x);
        }
        mu *= 10.0;
    }
    Err(FluidError::Infeasible)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdKind {
    FullInfo,
    Learning,
    Informed,
}

/// Boundary-attraction threshold at period `t` of horizon `T` (1-based `t`).
pub fn attraction_threshold(kind: ThresholdKind, t: usize, horizon: usize, zeta: f64) -> f64 {
    let remaining = (horizon + 1).saturating_sub(t).max(1) as f64;
    let elapsed = t.max(1) as f64;
    match kind {
        ThresholdKind::FullInfo => zeta * remaining.powf(-0.5),
        ThresholdKind::Learning => zeta * (remaining.powf(-0.25) + elapsed.powf(-0.25)),
        ThresholdKind::Informed => zeta * (remaining.powf(-0.5) + elapsed.powf(-0.5)),
    }
}

/// Round demand components strictly below `threshold` to zero.
pub fn boundary_attract(d: &Vector, threshold: f64) -> Vector {
    d.map(|x| if x >= threshold { x } else { 0.0 })
}

/// Horizon fluid benchmark `T · V(c0/T)`.
pub fn fluid_value(instance: &PricingInstance) -> Result<f64, FluidError> {
    let horizon = instance.horizon as f64;
    let problem = FluidProblem::from_model(
        &instance.model,
        &instance.a,
        &instance.c0 / horizon,
        instance.price_box,
    );
    Ok(horizon * solve_fluid(&problem, DEFAULT_TOL)?.value)
}

/// Fluid solution at the initial per-period capacity `c0/T`.
pub fn initial_fluid_solution(instance: &PricingInstance) -> Result<FluidSolution, FluidError> {
    let problem = FluidProblem::from_model(
        &instance.model,
        &instance.a,
        &instance.c0 / instance.horizon as f64,
        instance.price_box,
    );
    solve_fluid(&problem, DEFAULT_TOL)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn v(x: &[f64]) -> Vector {
        Vector::from_vec(x.to_vec())
    }

    fn scalar_problem(rhs: f64) -> FluidProblem {
        FluidProblem::new(
            v(&[2.0]),
            Matrix::from_element(1, 1, -1.0),
            Matrix::from_element(1, 1, 1.0),
            v(&[rhs]),
            PriceBox::new(0.0, 2.0, 1).unwrap(),
        )
    }

    #[test]
    fn scalar_binding_example_matches_grid() {
        let sol = solve_fluid(&scalar_problem(0.5), DEFAULT_TOL).unwrap();
        // grid oracle over p in {0, 0.001, ..., 2}
        let best = (0..=2000)
            .map(|i| i as f64 * 1e-3)
            .filter(|p| 2.0 - p <= 0.5 + 1e-12)
            .map(|p| p * (2.0 - p))
            .fold(f64::NEG_INFINITY, f64::max);
        assert_relative_eq!(sol.value, best, epsilon = 1e-9);
        assert_relative_eq!(sol.p[0], 1.5, epsilon = 1e-10);
        assert_relative_eq!(sol.d[0], 0.5, epsilon = 1e-10);
        assert_relative_eq!(sol.value, 0.75, epsilon = 1e-10);
        assert_eq!(sol.active, vec![0]);
        assert!(sol.kkt_residual <= DEFAULT_TOL);
    }

    #[test]
    fn scalar_slack_example_is_interior_optimum() {
        let sol = solve_fluid(&scalar_problem(10.0), DEFAULT_TOL).unwrap();
        assert_relative_eq!(sol.p[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(sol.value, 1.0, epsilon = 1e-12);
        assert!(sol.active.is_empty());
        assert_eq!(sol.status, FluidStatus::Optimal);
    }

    #[test]
    fn symmetric_two_product_example() {
        let problem = FluidProblem::new(
            v(&[5.0, 5.0]),
            -Matrix::identity(2, 2),
            Matrix::from_row_slice(1, 2, &[1.0, 1.0]),
            v(&[4.0]),
            PriceBox::new(0.0, 5.0, 2).unwrap(),
        );
        let sol = solve_fluid(&problem, DEFAULT_TOL).unwrap();
        assert_relative_eq!(sol.p, v(&[3.0, 3.0]), epsilon = 1e-10);
        assert_relative_eq!(sol.d, v(&[2.0, 2.0]), epsilon = 1e-10);
        assert_relative_eq!(sol.value, 12.0, epsilon = 1e-10);
        // 2-D grid oracle at step 1e-3 restricted to the symmetric diagonal and a neighbourhood
        let mut best = f64::NEG_INFINITY;
        for i in 2800..=3200 {
            for j in 2800..=3200 {
                let (p1, p2) = (i as f64 * 1e-3, j as f64 * 1e-3);
                let (d1, d2) = (5.0 - p1, 5.0 - p2);
                if d1 + d2 <= 4.0 + 1e-12 {
                    best = best.max(p1 * d1 + p2 * d2);
                }
            }
        }
        assert_relative_eq!(sol.value, best, epsilon = 1e-9);
    }

    #[test]
    fn infeasible_box_is_a_typed_error() {
        // Even at the top price demand exceeds capacity.
        let problem = FluidProblem::new(
            v(&[10.0]),
            Matrix::from_element(1, 1, -1.0),
            Matrix::from_element(1, 1, 1.0),
            v(&[1.0]),
            PriceBox::new(0.0, 2.0, 1).unwrap(),
        );
        assert_eq!(solve_fluid(&problem, DEFAULT_TOL).unwrap_err(), FluidError::Infeasible);
    }

    #[test]
    fn depleted_resource_removes_its_products() {
        let problem = FluidProblem::new(
            v(&[5.0, 5.0]),
            -Matrix::identity(2, 2),
            Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]),
            v(&[0.0, 10.0]),
            PriceBox::new(0.0, 10.0, 2).unwrap(),
        );
        let sol = solve_fluid(&problem, DEFAULT_TOL).unwrap();
        assert_eq!(sol.status, FluidStatus::Reduced);
        assert_eq!(sol.removed, vec![0]);
        assert_eq!(sol.p[0], 10.0);
        assert_eq!(sol.d[0], 0.0);
        assert_relative_eq!(sol.p[1], 2.5, epsilon = 1e-10);
    }

    #[test]
    fn negative_rhs_is_clamped() {
        let p = scalar_problem(-1e-15);
        assert_eq!(p.rhs[0], 0.0);
        let sol = solve_fluid(&p, DEFAULT_TOL).unwrap();
        assert_eq!(sol.d[0], 0.0);
    }

    #[test]
    fn threshold_examples() {
        assert_relative_eq!(attraction_threshold(ThresholdKind::FullInfo, 1, 100, 1.0), 0.1);
        assert_relative_eq!(attraction_threshold(ThresholdKind::Learning, 16, 31, 1.0), 1.0);
        assert_relative_eq!(attraction_threshold(ThresholdKind::Informed, 4, 7, 2.0), 2.0);
    }

    #[test]
    fn attraction_examples() {
        assert_eq!(boundary_attract(&v(&[0.05, 0.5]), 0.1), v(&[0.0, 0.5]));
        assert_eq!(boundary_attract(&v(&[0.05, 0.5]), 0.0), v(&[0.05, 0.5]));
        assert_eq!(boundary_attract(&v(&[0.05, 0.07]), 0.1), v(&[0.0, 0.0]));
    }

    #[test]
    fn fluid_value_scales_with_horizon() {
        let model = LinearDemandModel::new(v(&[2.0]), Matrix::from_element(1, 1, -1.0)).unwrap();
        for horizon in [1usize, 10, 1000] {
            let inst = PricingInstance::new(
                model.clone(),
                Matrix::from_element(1, 1, 1.0),
                v(&[0.5 * horizon as f64]),
                horizon,
                0.0,
                PriceBox::new(0.0, 2.0, 1).unwrap(),
            )
            .unwrap();
            assert_relative_eq!(fluid_value(&inst).unwrap(), 0.75 * horizon as f64, epsilon = 1e-9);
        }
    }
}
