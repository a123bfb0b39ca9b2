//! Market primitives: the price box, the linear demand law, pricing instances and the
//! revenue-as-a-function-of-demand algebra used by every policy.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::linalg::{self, Matrix, Vector};
use crate::qp;

/// Eigenvalue tolerance for the negative-definiteness check.
pub const DEFINITENESS_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceBox {
    lower: f64,
    upper: f64,
    dim: usize,
}

impl PriceBox {
    pub fn new(lower: f64, upper: f64, dim: usize) -> Result<Self, ModelError> {
        if !(lower.is_finite() && upper.is_finite()) || lower < 0.0 || lower >= upper || dim == 0 {
            return Err(ModelError::InvalidBox { lower, upper, dim });
        }
        Ok(Self { lower, upper, dim })
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn contains(&self, p: &Vector) -> bool {
        p.len() == self.dim && p.iter().all(|&x| x >= self.lower && x <= self.upper)
    }

    /// Componentwise projection onto `[lower, upper]`.
    pub fn clip(&self, p: &Vector) -> Vector {
        p.map(|x| x.clamp(self.lower, self.upper))
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        Vector::from_fn(self.dim, |_, _| rng.random_range(self.lower..=self.upper))
    }

    pub fn with_dim(&self, dim: usize) -> Self {
        Self { dim, ..*self }
    }
}

/// Componentwise projection of `p` onto the box.
pub fn clip_to_box(p: &Vector, bx: &PriceBox) -> Vector {
    bx.clip(p)
}

/// Mean demand `f(p) = α + B p` with `B` negative definite.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearDemandModel {
    alpha: Vector,
    b: Matrix,
    b_inv: Matrix,
}

impl LinearDemandModel {
    pub fn new(alpha: Vector, b: Matrix) -> Result<Self, ModelError> {
        let n = alpha.len();
        if n == 0 || b.nrows() != n || b.ncols() != n {
            return Err(ModelError::Dimension(format!(
                "alpha has length {n}, B is {}x{}",
                b.nrows(),
                b.ncols()
            )));
        }
        if alpha.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(ModelError::InvalidEntry("alpha"));
        }
        if b.iter().any(|x| !x.is_finite()) {
            return Err(ModelError::InvalidEntry("B"));
        }
        let lmax = linalg::lambda_max_sym(&b);
        if lmax >= -DEFINITENESS_TOL {
            return Err(ModelError::NotNegativeDefinite(lmax));
        }
        let b_inv = b
            .clone()
            .try_inverse()
            .ok_or(ModelError::NotNegativeDefinite(lmax))?;
        Ok(Self { alpha, b, b_inv })
    }

    pub fn n(&self) -> usize {
        self.alpha.len()
    }

    pub fn alpha(&self) -> &Vector {
        &self.alpha
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn b_inv(&self) -> &Matrix {
        &self.b_inv
    }

    pub fn demand_mean(&self, p: &Vector) -> Result<Vector, ModelError> {
        self.check_len(p.len())?;
        Ok(&self.alpha + &self.b * p)
    }

    /// `B⁻¹(d − α)`; not clipped.
    pub fn inverse_demand(&self, d: &Vector) -> Result<Vector, ModelError> {
        self.check_len(d.len())?;
        Ok(&self.b_inv * (d - &self.alpha))
    }

    /// Noiseless revenue `dᵀ B⁻¹ (d − α)` of serving demand `d` at the price that induces it.
    pub fn revenue_of_demand(&self, d: &Vector) -> f64 {
        d.dot(&(&self.b_inv * (d - &self.alpha)))
    }

    /// Gradient of [`revenue_of_demand`](Self::revenue_of_demand): `(B⁻¹ + B⁻ᵀ) d − B⁻¹ α`.
    pub fn revenue_gradient(&self, d: &Vector) -> Vector {
        let s = &self.b_inv + self.b_inv.transpose();
        s * d - &self.b_inv * &self.alpha
    }

    /// Curvature `κ = −λ_max(B⁻¹ + B⁻ᵀ)/2` of the revenue in demand space.
    pub fn curvature(&self) -> f64 {
        -linalg::lambda_max_sym(&(&self.b_inv + self.b_inv.transpose())) / 2.0
    }

    /// Maximizer of `dᵀB⁻¹(d − α)` over `d ≥ 0` (no price box, no resources).
    pub fn unconstrained_opt_demand(&self) -> Vector {
        let n = self.n();
        // minimize -r(d) = 1/2 dᵀ H d + qᵀ d with H = -(B⁻¹ + B⁻ᵀ), q = B⁻¹α
        let h = -(&self.b_inv + self.b_inv.transpose());
        let q = &self.b_inv * &self.alpha;
        let c = Matrix::identity(n, n);
        let sol = qp::solve(&h, &q, &c, &Vector::zeros(n))
            .expect("strictly concave revenue over the nonnegative orthant always has a maximizer");
        sol.x.map(|x| x.max(0.0))
    }

    /// Smallest mean demand over the box (per product worst case, then min over products).
    pub fn min_mean_demand_on_box(&self, bx: &PriceBox) -> f64 {
        (0..self.n())
            .map(|j| {
                self.alpha[j]
                    + (0..self.n())
                        .map(|k| (self.b[(j, k)] * bx.lower()).min(self.b[(j, k)] * bx.upper()))
                        .sum::<f64>()
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Principal submodel on `keep`, with the other prices frozen at `fixed_price`.
    pub fn restrict(&self, keep: &[usize], fixed_price: f64) -> Result<Self, ModelError> {
        let n = self.n();
        let dropped: Vec<usize> = (0..n).filter(|j| !keep.contains(j)).collect();
        let alpha = Vector::from_fn(keep.len(), |a, _| {
            let j = keep[a];
            self.alpha[j] + dropped.iter().map(|&k| self.b[(j, k)] * fixed_price).sum::<f64>()
        });
        let b = Matrix::from_fn(keep.len(), keep.len(), |a, c| self.b[(keep[a], keep[c])]);
        // Effective intercepts may be negative here and are not re-validated.
        let lmax = linalg::lambda_max_sym(&b);
        if lmax >= -DEFINITENESS_TOL {
            return Err(ModelError::NotNegativeDefinite(lmax));
        }
        let b_inv = b.clone().try_inverse().ok_or(ModelError::NotNegativeDefinite(lmax))?;
        Ok(Self { alpha, b, b_inv })
    }

    fn check_len(&self, len: usize) -> Result<(), ModelError> {
        if len != self.n() {
            return Err(ModelError::Dimension(format!("expected length {}, got {len}", self.n())));
        }
        Ok(())
    }
}

/// A full pricing problem: market law, resource consumption, capacities, horizon, noise.
#[derive(Debug, Clone, PartialEq)]
pub struct PricingInstance {
    pub model: LinearDemandModel,
    /// m×n resource consumption per unit of demand.
    pub a: Matrix,
    pub c0: Vector,
    pub horizon: usize,
    pub sigma: f64,
    pub price_box: PriceBox,
}

impl PricingInstance {
    pub fn new(
        model: LinearDemandModel,
        a: Matrix,
        c0: Vector,
        horizon: usize,
        sigma: f64,
        price_box: PriceBox,
    ) -> Result<Self, ModelError> {
        let n = model.n();
        if a.ncols() != n || a.nrows() != c0.len() {
            return Err(ModelError::Dimension(format!(
                "A is {}x{}, c0 has length {}, n = {n}",
                a.nrows(),
                a.ncols(),
                c0.len()
            )));
        }
        if price_box.dim() != n {
            return Err(ModelError::Dimension(format!("box dim {} != n {n}", price_box.dim())));
        }
        if a.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(ModelError::InvalidEntry("A"));
        }
        if c0.iter().any(|x| x.is_nan() || *x < 0.0) {
            return Err(ModelError::InvalidEntry("c0"));
        }
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(ModelError::InvalidEntry("sigma"));
        }
        if horizon == 0 {
            return Err(ModelError::EmptyHorizon);
        }
        Ok(Self { model, a, c0, horizon, sigma, price_box })
    }

    pub fn n(&self) -> usize {
        self.model.n()
    }

    pub fn m(&self) -> usize {
        self.a.nrows()
    }
}

/// Row-major interchange form of a [`PricingInstance`] (the `gen-instance` file format).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub m: usize,
    pub n: usize,
    #[serde(rename = "A")]
    pub a: Vec<f64>,
    pub alpha: Vec<f64>,
    #[serde(rename = "B")]
    pub b: Vec<f64>,
    pub c0: Vec<f64>,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub sigma: f64,
    #[serde(rename = "box")]
    pub price_box: [f64; 2],
}

impl From<&PricingInstance> for InstanceFile {
    fn from(inst: &PricingInstance) -> Self {
        Self {
            m: inst.m(),
            n: inst.n(),
            a: linalg::to_row_major(&inst.a),
            alpha: inst.model.alpha().iter().copied().collect(),
            b: linalg::to_row_major(inst.model.b()),
            c0: inst.c0.iter().copied().collect(),
            horizon: inst.horizon,
            sigma: inst.sigma,
            price_box: [inst.price_box.lower(), inst.price_box.upper()],
        }
    }
}

impl TryFrom<InstanceFile> for PricingInstance {
    type Error = ModelError;

    fn try_from(f: InstanceFile) -> Result<Self, ModelError> {
        if f.n == 0 || f.alpha.len() != f.n || f.c0.len() != f.m {
            return Err(ModelError::Dimension("alpha/c0 lengths disagree with m, n".into()));
        }
        let a = linalg::from_row_major(f.m, f.n, &f.a)
            .ok_or_else(|| ModelError::Dimension("A must have m*n entries".into()))?;
        let b = linalg::from_row_major(f.n, f.n, &f.b)
            .ok_or_else(|| ModelError::Dimension("B must have n*n entries".into()))?;
        let model = LinearDemandModel::new(Vector::from_vec(f.alpha), b)?;
        let bx = PriceBox::new(f.price_box[0], f.price_box[1], f.n)?;
        PricingInstance::new(model, a, Vector::from_vec(f.c0), f.horizon, f.sigma, bx)
    }
}

/// Parse an instance file from JSON text, validating every model invariant.
pub fn parse_instance_json(text: &[u8]) -> Result<PricingInstance, String> {
    let file: InstanceFile = serde_json::from_slice(text).map_err(|e| e.to_string())?;
    PricingInstance::try_from(file).map_err(|e| e.to_string())
}
