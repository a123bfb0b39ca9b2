//! Surrogate demand signals and control-variate pseudo-observations.
//!
//! The surrogate shares the demand noise draw: `S = bias + slope·p + a·ε + c·ν` with
//! `a = ρ·sd/σ` and `c = sd·√(1−ρ²)`, so each component has standard deviation `sd`
//! and correlation `ρ` with the matching demand noise component.

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::estimators::ParamEstimate;
use crate::linalg::{self, Matrix, Vector};
use crate::model::PriceBox;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SurrogateError {
    #[error("correlation must lie in [-1, 1], got {0}")]
    InvalidCorrelation(f64),
    #[error("noise scales must be finite and nonnegative")]
    InvalidScale,
    #[error("offline dataset needs at least n+1 = {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("offline price design is degenerate after {0} attempts")]
    DegenerateDesign(usize),
    #[error("surrogate covariance is singular")]
    Singular,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateModel {
    pub bias: Vector,
    pub slope: Matrix,
    pub rho: f64,
    pub noise_sd: f64,
    /// Loading on the shared demand noise.
    pub a: f64,
    /// Loading on the independent surrogate noise.
    pub c: f64,
}

impl SurrogateModel {
    pub fn new(bias: Vector, slope: Matrix, rho: f64, noise_sd: f64, sigma: f64) -> Result<Self, SurrogateError> {
        if !(-1.0..=1.0).contains(&rho) {
            return Err(SurrogateError::InvalidCorrelation(rho));
        }
        if !(noise_sd.is_finite() && noise_sd >= 0.0 && sigma.is_finite() && sigma >= 0.0) {
            return Err(SurrogateError::InvalidScale);
        }
        let a = if sigma > 0.0 { rho * noise_sd / sigma } else { 0.0 };
        let c = noise_sd * (1.0 - rho * rho).max(0.0).sqrt();
        Ok(Self { bias, slope, rho, noise_sd, a, c })
    }

    /// Surrogate built from a demand law distorted by a relative misspecification
    /// `delta`: intercepts scaled by `1+delta` and slopes by `1−delta`.
    pub fn misspecified(
        alpha: &Vector,
        b: &Matrix,
        delta: f64,
        rho: f64,
        noise_sd: f64,
        sigma: f64,
    ) -> Result<Self, SurrogateError> {
        Self::new(alpha * (1.0 + delta), b * (1.0 - delta), rho, noise_sd, sigma)
    }

    pub fn n(&self) -> usize {
        self.bias.len()
    }

    pub fn mean(&self, p: &Vector) -> Vector {
        &self.bias + &self.slope * p
    }

    /// Implied per-component correlation with the demand noise at level `sigma`.
    pub fn implied_correlation(&self, sigma: f64) -> f64 {
        let sd = (self.a * self.a * sigma * sigma + self.c * self.c).sqrt();
        if sd == 0.0 || sigma == 0.0 {
            0.0
        } else {
            self.a * sigma / sd
        }
    }

    /// Population covariance `(a²σ² + c²) I`.
    pub fn covariance(&self, sigma: f64) -> Matrix {
        Matrix::identity(self.n(), self.n()) * (self.a * self.a * sigma * sigma + self.c * self.c)
    }

    /// Draw a signal for price `p`, given the demand noise `eps` of the same period.
    pub fn sample<R: Rng + ?Sized>(&self, p: &Vector, eps: &Vector, rng: &mut R) -> Vector {
        let mut s = self.mean(p) + eps * self.a;
        for v in s.iter_mut() {
            let nu: f64 = rng.sample(StandardNormal);
            *v += self.c * nu;
        }
        s
    }
}

/// Linear center `m̄(p) = ĉ₀ + Ĉ₁ p`.
#[derive(Debug, Clone, PartialEq)]
pub struct Center {
    pub intercept: Vector,
    pub slope: Matrix,
}

impl Center {
    pub fn eval(&self, p: &Vector) -> Vector {
        &self.intercept + &self.slope * p
    }

    pub fn zero(n: usize) -> Self {
        Self { intercept: Vector::zeros(n), slope: Matrix::zeros(n, n) }
    }
}

#[derive(Debug, Clone)]
pub struct OfflineDataset {
    pub prices: Vec<Vector>,
    pub signals: Vec<Vector>,
    pub center: Center,
    pub sigma_s_off: Matrix,
}

pub const OFFLINE_RETRIES: usize = 5;

impl OfflineDataset {
    /// Uniform prices on the box, surrogate drawn with fresh offline demand noise of
    /// level `sigma`, and a least-squares center.
    pub fn build<R: Rng + ?Sized>(
        sm: &SurrogateModel,
        samples: usize,
        bx: &PriceBox,
        sigma: f64,
        rng: &mut R,
    ) -> Result<Self, SurrogateError> {
        let n = sm.n();
        if samples < n + 1 {
            return Err(SurrogateError::TooFewSamples { need: n + 1, got: samples });
        }
        for _ in 0..=OFFLINE_RETRIES {
            let mut prices = Vec::with_capacity(samples);
            let mut signals = Vec::with_capacity(samples);
            for _ in 0..samples {
                let p = bx.sample_uniform(rng);
                let eps = Vector::from_fn(n, |_, _| sigma * rng.sample::<f64, _>(StandardNormal));
                signals.push(sm.sample(&p, &eps, rng));
                prices.push(p);
            }
            if let Some(ds) = Self::fit(prices, signals) {
                return Ok(ds);
            }
        }
        Err(SurrogateError::DegenerateDesign(OFFLINE_RETRIES + 1))
    }

    /// Least-squares center and residual covariance with `1/(N−n−1)` normalization;
    /// `None` when the price design is singular.
    pub fn fit(prices: Vec<Vector>, signals: Vec<Vector>) -> Option<Self> {
        let n = prices.first()?.len();
        let big_n = prices.len();
        let mut gram = Matrix::zeros(n + 1, n + 1);
        let mut cross = Matrix::zeros(n, n + 1);
        for (p, s) in prices.iter().zip(&signals) {
            let mut x = Vector::zeros(n + 1);
            x[0] = 1.0;
            x.rows_mut(1, n).copy_from(p);
            gram.ger(1.0, &x, &x, 1.0);
            cross.ger(1.0, s, &x, 1.0);
        }
        let eig = linalg::sym_eigenvalues(&gram);
        if !(eig.min() > 1e-9 * eig.max().max(1.0)) {
            return None;
        }
        let theta = gram.clone().cholesky()?.solve(&cross.transpose()).transpose();
        let center = Center {
            intercept: theta.column(0).into_owned(),
            slope: theta.view((0, 1), (n, n)).into_owned(),
        };
        let mut sigma_s_off = Matrix::zeros(n, n);
        if big_n > n + 1 {
            for (p, s) in prices.iter().zip(&signals) {
                let r = s - center.eval(p);
                sigma_s_off.ger(1.0, &r, &r, 1.0);
            }
            sigma_s_off /= (big_n - n - 1) as f64;
        }
        Some(Self { prices, signals, center, sigma_s_off })
    }

    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }

    /// Default ridge `10⁻³·tr(Σ̂_S^off)/n`, floored at `10⁻¹²`.
    pub fn default_lambda(&self) -> f64 {
        let n = self.sigma_s_off.nrows().max(1) as f64;
        (1e-3 * self.sigma_s_off.trace() / n).max(1e-12)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlVariate {
    pub gamma_hat: Matrix,
    pub lambda_reg: f64,
}

impl ControlVariate {
    pub fn zero(n: usize) -> Self {
        Self { gamma_hat: Matrix::zeros(n, n), lambda_reg: 0.0 }
    }
}

/// `Γ̂ = Σ̂_dS (Σ̂_S^off + λI)⁻¹`; a pseudo-inverse is used if the sum is singular.
pub fn gamma_from_cross(sigma_ds: &Matrix, sigma_s_off: &Matrix, lambda: f64) -> ControlVariate {
    let n = sigma_s_off.nrows();
    let reg = sigma_s_off + Matrix::identity(n, n) * lambda;
    let inv = match reg.clone().cholesky() {
        Some(ch) => ch.inverse(),
        None => linalg::pinv_sym(&reg),
    };
    ControlVariate { gamma_hat: sigma_ds * inv, lambda_reg: lambda }
}

/// Batch estimate from online triples `(d, S, p)`, with demand residuals taken
/// against the caller's current mean estimate.
pub fn estimate_gamma(
    pairs: &[(Vector, Vector, Vector)],
    center: &Center,
    mean: &ParamEstimate,
    sigma_s_off: &Matrix,
    lambda: f64,
) -> ControlVariate {
    let n = sigma_s_off.nrows();
    if pairs.len() < 2 {
        return ControlVariate { gamma_hat: Matrix::zeros(n, n), lambda_reg: lambda };
    }
    let mut cross = Matrix::zeros(n, n);
    for (d, s, p) in pairs {
        let r = d - mean.predict(p);
        let sc = s - center.eval(p);
        cross.ger(1.0, &r, &sc, 1.0);
    }
    cross /= (pairs.len() - 1) as f64;
    gamma_from_cross(&cross, sigma_s_off, lambda)
}

/// `d − Γ̂ (S − m̄(p))`.
pub fn pseudo_observe(d: &Vector, s: &Vector, p: &Vector, cv: &ControlVariate, center: &Center) -> Vector {
    d - &cv.gamma_hat * (s - center.eval(p))
}

/// Schur complement `Σ_d − Σ_dS Σ_S⁻¹ Σ_Sd` and `σ_eff = √λ_max` of it.
pub fn schur_variance(sigma_d: &Matrix, sigma_ds: &Matrix, sigma_s: &Matrix) -> Result<(Matrix, f64), SurrogateError> {
    let ch = sigma_s.clone().cholesky().ok_or(SurrogateError::Singular)?;
    let solved = ch.solve(&sigma_ds.transpose());
    let out = sigma_d - sigma_ds * solved;
    let sigma_eff = linalg::lambda_max_sym(&out).max(0.0).sqrt();
    Ok((out, sigma_eff))
}

/// Running moments that let a new `Γ̂` be applied to the whole history at once.
///
/// With `Š = S − m̄(p)` and `x = [1; p]`, pseudo-observation regression moments are
/// `Σ d xᵀ − Γ̂ Σ Š xᵀ`, and residual cross-covariances are
/// `Σ d Šᵀ − Θ̂ Σ x Šᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateMoments {
    count: usize,
    sum_s_x: Matrix,
    sum_d_s: Matrix,
}

impl SurrogateMoments {
    pub fn new(n: usize) -> Self {
        Self { count: 0, sum_s_x: Matrix::zeros(n, n + 1), sum_d_s: Matrix::zeros(n, n) }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn update(&mut self, p: &Vector, d: &Vector, centered: &Vector) {
        let n = p.len();
        let mut x = Vector::zeros(n + 1);
        x[0] = 1.0;
        x.rows_mut(1, n).copy_from(p);
        self.sum_s_x.ger(1.0, centered, &x, 1.0);
        self.sum_d_s.ger(1.0, d, centered, 1.0);
        self.count += 1;
    }

    /// `Σ Š [1; p]ᵀ`.
    pub fn sum_s_x(&self) -> &Matrix {
        &self.sum_s_x
    }

    /// `Σ Š (p − p⁰)ᵀ`.
    pub fn sum_s_dp(&self, p0: &Vector) -> Matrix {
        let n = p0.len();
        let s_sum = self.sum_s_x.column(0);
        self.sum_s_x.view((0, 1), (n, n)) - s_sum * p0.transpose()
    }

    /// `Σ Š`.
    pub fn sum_s(&self) -> Vector {
        self.sum_s_x.column(0).into_owned()
    }

    /// Residual cross-covariance `Σ̂_dS` against `mean`, divided by `count − 1`.
    pub fn sigma_ds(&self, mean: &ParamEstimate) -> Option<Matrix> {
        if self.count < 2 {
            return None;
        }
        let n = self.sum_d_s.nrows();
        let mut theta = Matrix::zeros(n, n + 1);
        theta.set_column(0, &mean.alpha_hat);
        theta.view_mut((0, 1), (n, n)).copy_from(&mean.b_hat);
        Some((&self.sum_d_s - theta * self.sum_s_x.transpose()) / (self.count - 1) as f64)
    }
}
