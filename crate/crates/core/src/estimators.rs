//! Online estimators for the linear demand law.
//!
//! `DesignState` keeps the regression moments in incremental form: with
//! `x = [1; p]`, `gram = Σ x xᵀ` is the `(n+1)×(n+1)` design matrix and row `j` of
//! `cross = Σ d xᵀ` is the moment vector of product `j`.

use nalgebra::Cholesky;
use thiserror::Error;

use crate::linalg::{self, Matrix, Vector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("anchored penalty loop did not reach the ball after {0} doublings")]
    NonConverged(usize),
    #[error("no observations")]
    Empty,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamEstimate {
    pub alpha_hat: Vector,
    pub b_hat: Matrix,
}

impl ParamEstimate {
    pub fn predict(&self, p: &Vector) -> Vector {
        &self.alpha_hat + &self.b_hat * p
    }

    pub fn is_finite(&self) -> bool {
        self.alpha_hat.iter().chain(self.b_hat.iter()).all(|v| v.is_finite())
    }
}

fn augmented(p: &Vector) -> Vector {
    let mut x = Vector::zeros(p.len() + 1);
    x[0] = 1.0;
    x.rows_mut(1, p.len()).copy_from(p);
    x
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignState {
    n: usize,
    count: usize,
    gram: Matrix,
    cross: Matrix,
    history: Option<Vec<(Vector, Vector)>>,
}

impl DesignState {
    pub fn new(n: usize, keep_history: bool) -> Self {
        Self {
            n,
            count: 0,
            gram: Matrix::zeros(n + 1, n + 1),
            cross: Matrix::zeros(n, n + 1),
            history: keep_history.then(Vec::new),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// The design matrix `P`.
    pub fn gram(&self) -> &Matrix {
        &self.gram
    }

    /// Row `j` is the moment vector `D_j = Σ d_j [1; p]`.
    pub fn cross(&self) -> &Matrix {
        &self.cross
    }

    pub fn sum_p(&self) -> Vector {
        self.gram.view((1, 0), (self.n, 1)).column(0).into_owned()
    }

    pub fn sum_ppt(&self) -> Matrix {
        self.gram.view((1, 1), (self.n, self.n)).into_owned()
    }

    pub fn history(&self) -> Option<&[(Vector, Vector)]> {
        self.history.as_deref()
    }

    pub fn update(&mut self, p: &Vector, d: &Vector) {
        debug_assert_eq!(p.len(), self.n);
        debug_assert_eq!(d.len(), self.n);
        let x = augmented(p);
        self.gram.ger(1.0, &x, &x, 1.0);
        self.cross.ger(1.0, d, &x, 1.0);
        self.count += 1;
        if let Some(h) = self.history.as_mut() {
            h.push((p.clone(), d.clone()));
        }
    }
}

/// Returns `state` with one more observation.
pub fn ols_update(mut state: DesignState, p: &Vector, d: &Vector) -> DesignState {
    state.update(p, d);
    state
}

fn split_theta(theta: &Matrix) -> ParamEstimate {
    let n = theta.nrows();
    ParamEstimate {
        alpha_hat: theta.column(0).into_owned(),
        b_hat: theta.view((0, 1), (n, n)).into_owned(),
    }
}

/// Per-product least squares `[α̂_j; β̂_j] = P† D_j`.
pub fn ols_estimate(state: &DesignState) -> ParamEstimate {
    let theta = &state.cross * linalg::pinv_sym(&state.gram);
    split_theta(&theta)
}

/// Regression moments centred at an anchor `(p⁰, d⁰)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchoredState {
    pub anchor_p: Vector,
    pub anchor_d: Vector,
    pub eps0: f64,
    v: Matrix,
    c: Matrix,
    count: usize,
}

impl AnchoredState {
    pub fn new(anchor_p: Vector, anchor_d: Vector, eps0: f64) -> Self {
        let n = anchor_p.len();
        Self {
            anchor_p,
            anchor_d,
            eps0,
            v: Matrix::zeros(n, n),
            c: Matrix::zeros(n, n),
            count: 0,
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// `V = Σ (p − p⁰)(p − p⁰)ᵀ`.
    pub fn v(&self) -> &Matrix {
        &self.v
    }

    /// `C = Σ (d − d⁰)(p − p⁰)ᵀ`.
    pub fn c(&self) -> &Matrix {
        &self.c
    }

    pub fn update(&mut self, p: &Vector, d: &Vector) {
        let x = p - &self.anchor_p;
        let y = d - &self.anchor_d;
        self.v.ger(1.0, &x, &x, 1.0);
        self.c.ger(1.0, &y, &x, 1.0);
        self.count += 1;
    }

    /// Whether the displacements span every direction.
    pub fn full_rank(&self) -> bool {
        let eig = linalg::sym_eigenvalues(&self.v);
        let lmax = eig.max();
        lmax > 0.0 && eig.min() > linalg::PINV_CUTOFF * lmax
    }
}

/// `B̂ = C V†`, `α̂ = d⁰ − B̂ p⁰`, so predictions are `d⁰ + B̂ (p − p⁰)`.
pub fn anchored_estimate(state: &AnchoredState) -> ParamEstimate {
    let b_hat = &state.c * linalg::pinv_sym(&state.v);
    let alpha_hat = &state.anchor_d - &b_hat * &state.anchor_p;
    ParamEstimate { alpha_hat, b_hat }
}

pub const PENALTY_DOUBLINGS: usize = 30;
pub const BALL_SLACK: f64 = 1e-6;

/// Least squares subject to `‖d⁰ − (α + B p⁰)‖ <= ε⁰`, by an exterior penalty
/// `ν‖d⁰ − Θ x⁰‖²` with `ν` doubled until the ball is reached. When the constraint
/// binds, the penalty path is then bisected back to the point where `‖r⁰‖ = ε⁰`,
/// which is the exact constrained minimizer.
pub fn constrained_anchored_estimate(
    state: &DesignState,
    anchor_p: &Vector,
    anchor_d: &Vector,
    eps0: f64,
    penalty_weight: f64,
) -> Result<ParamEstimate, EstimatorError> {
    let x0 = augmented(anchor_p);
    let residual = |theta: &Matrix| (anchor_d - theta * &x0).norm();
    let ols = &state.cross * linalg::pinv_sym(&state.gram);
    if residual(&ols) <= eps0 {
        return Ok(split_theta(&ols));
    }

    let solve = |nu: f64| -> Matrix {
        let mut g = state.gram.clone();
        g.ger(nu, &x0, &x0, 1.0);
        let mut rhs = state.cross.clone();
        rhs.ger(nu, anchor_d, &x0, 1.0);
        match Cholesky::new(g.clone()) {
            Some(ch) => ch.solve(&rhs.transpose()).transpose(),
            None => rhs * linalg::pinv_sym(&g),
        }
    };

    let mut nu = penalty_weight.max(f64::MIN_POSITIVE);
    let mut found = None;
    for _ in 0..=PENALTY_DOUBLINGS {
        let theta = solve(nu);
        if residual(&theta) - eps0 <= BALL_SLACK {
            found = Some(theta);
            break;
        }
        nu *= 2.0;
    }
    let Some(mut theta) = found else {
        return Err(EstimatorError::NonConverged(PENALTY_DOUBLINGS));
    };
    if eps0 > 0.0 {
        let (mut lo, mut hi) = (0.0, nu);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            let cand = solve(mid);
            if residual(&cand) <= eps0 {
                hi = mid;
                theta = cand;
            } else {
                lo = mid;
            }
            if hi - lo <= 1e-12 * hi {
                break;
            }
        }
    }
    Ok(split_theta(&theta))
}

/// Certified lower bound on `λ_min(P)` for a price history with epoch anchors
/// `anchors[k]` (zero-based epoch `k` covers periods `kn+1..kn+n`).
pub fn fisher_min_eig_bound(prices: &[Vector], anchors: &[Vector], n: usize, upper: f64) -> f64 {
    if prices.is_empty() || n == 0 {
        return 0.0;
    }
    let last = n * (prices.len() / n);
    let mut running = Vector::zeros(n);
    let mut total = 0.0;
    for s in 1..=last {
        let p = &prices[s - 1];
        if s > 1 {
            let mean = &running / (s - 1) as f64;
            let epoch = (s - 1) / n;
            let dev = p - mean - &anchors[epoch];
            total += (1.0 - 1.0 / s as f64) * dev.norm_squared();
        }
        running += p;
    }
    total / (n as f64 * (1.0 + 2.0 * upper * upper))
}

/// Lower bound `σ₀² √(kn) / (8n)` on the accumulated price variance after `k` epochs.
pub fn accumulated_variance_lower(k: usize, n: usize, sigma0: f64) -> f64 {
    sigma0 * sigma0 * ((k * n) as f64).sqrt() / (8.0 * n as f64)
}
