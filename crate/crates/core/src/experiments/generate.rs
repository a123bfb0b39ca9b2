//! Random instance generation.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fluid::{self, FluidProblem};
use crate::linalg::{self, Matrix, Vector};
use crate::model::{LinearDemandModel, PriceBox, PricingInstance};
use crate::rng::{Purpose, StreamKey};

pub const GENERATION_RETRIES: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenerationError {
    #[error("instance generation failed after {0} attempts")]
    Failed(usize),
    #[error("invalid scale: {0}")]
    InvalidScale(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleLabel {
    Scale1,
    Scale2,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleSpec {
    pub label: ScaleLabel,
    pub m: usize,
    pub n: usize,
    #[serde(default = "default_alpha_range")]
    pub alpha_range: [f64; 2],
    #[serde(default = "default_b_range")]
    pub b_range: [f64; 2],
    #[serde(default = "default_box", rename = "box")]
    pub price_box: [f64; 2],
    pub sigma: f64,
    /// Extra diagonal shift beyond `λ_max((B+Bᵀ)/2)`.
    #[serde(default = "default_margin")]
    pub curvature_margin: f64,
    #[serde(default)]
    pub box_rule: BoxRule,
}

/// How the upper price bound of a generated instance is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoxRule {
    /// Use `box` as given.
    Fixed,
    /// Shrink the upper bound until every mean demand is nonnegative on the box.
    #[default]
    NonnegativeDemand,
}

fn default_alpha_range() -> [f64; 2] {
    [5.0, 10.0]
}
fn default_b_range() -> [f64; 2] {
    [-1.0, 0.0]
}
fn default_box() -> [f64; 2] {
    [0.0, 10.0]
}
fn default_margin() -> f64 {
    DEFAULT_CURVATURE_MARGIN
}

pub const DEFAULT_CURVATURE_MARGIN: f64 = 1.0;

impl ScaleSpec {
    pub fn scale1() -> Self {
        Self {
            label: ScaleLabel::Scale1,
            m: 10,
            n: 20,
            alpha_range: default_alpha_range(),
            b_range: default_b_range(),
            price_box: default_box(),
            sigma: 1.0,
            curvature_margin: DEFAULT_CURVATURE_MARGIN,
            box_rule: BoxRule::NonnegativeDemand,
        }
    }

    pub fn scale2() -> Self {
        Self { label: ScaleLabel::Scale2, m: 1, n: 4, sigma: 2.2, ..Self::scale1() }
    }

    pub fn by_number(k: u8) -> Option<Self> {
        match k {
            1 => Some(Self::scale1()),
            2 => Some(Self::scale2()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), GenerationError> {
        let bad = |s: &str| Err(GenerationError::InvalidScale(s.to_string()));
        if self.m == 0 || self.n == 0 {
            return bad("m and n must be at least 1");
        }
        if !(self.alpha_range[0] <= self.alpha_range[1] && self.alpha_range[0] >= 0.0) {
            return bad("alpha_range must be ordered and nonnegative");
        }
        if !(self.b_range[0] <= self.b_range[1]) {
            return bad("b_range must be ordered");
        }
        if !(self.price_box[0] >= 0.0 && self.price_box[0] < self.price_box[1]) {
            return bad("box must satisfy 0 <= lower < upper");
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad("sigma must be finite and nonnegative");
        }
        if !(self.curvature_margin > 0.0 && self.curvature_margin.is_finite()) {
            return bad("curvature_margin must be positive");
        }
        Ok(())
    }

    pub fn price_box(&self) -> PriceBox {
        PriceBox::new(self.price_box[0], self.price_box[1], self.n).expect("validated box")
    }
}

fn uniform(rng: &mut ChaCha8Rng, range: [f64; 2]) -> f64 {
    if range[0] == range[1] {
        range[0]
    } else {
        rng.random_range(range[0]..range[1])
    }
}

/// Largest `u ≤ upper` such that `α + Bp ≥ 0` for every `p ∈ [lower, u]ⁿ`, or `None`
/// if demand is already negative somewhere at `p = lower·1`.
pub fn nonnegative_demand_upper(model: &LinearDemandModel, lower: f64, upper: f64) -> Option<f64> {
    let (alpha, b) = (model.alpha(), model.b());
    let mut u = upper;
    for i in 0..model.n() {
        let at_lower: f64 = alpha[i] + b.row(i).iter().map(|&x| x * lower).sum::<f64>();
        if at_lower <= 0.0 {
            return None;
        }
        let slope: f64 = b.row(i).iter().map(|&x| x.min(0.0)).sum();
        if slope < 0.0 {
            u = u.min(lower + at_lower / -slope);
        }
    }
    Some(u)
}

/// Resource-free optimal demand restricted to the price box.
pub fn box_optimal_demand(model: &LinearDemandModel, bx: PriceBox) -> Option<Vector> {
    let problem = FluidProblem::new(
        model.alpha().clone(),
        model.b().clone(),
        Matrix::zeros(0, model.n()),
        Vector::zeros(0),
        bx,
    );
    fluid::solve_fluid(&problem, fluid::DEFAULT_TOL).ok().map(|s| s.d)
}

fn draw_model(scale: &ScaleSpec, rng: &mut ChaCha8Rng) -> (Matrix, Vector, Matrix) {
    let (m, n) = (scale.m, scale.n);
    let a = Matrix::from_fn(m, n, |_, _| rng.random_range(0.0..1.0));
    let alpha = Vector::from_fn(n, |_, _| uniform(rng, scale.alpha_range));
    let mut b = Matrix::from_fn(n, n, |_, _| uniform(rng, scale.b_range));
    let shift = linalg::lambda_max_sym(&b) + scale.curvature_margin;
    for j in 0..n {
        b[(j, j)] -= shift;
    }
    (a, alpha, b)
}

/// Draw one instance of horizon `horizon`. The model depends only on the per-rep
/// part of `key`, so every horizon of a replication shares `(A, α, B)`; capacity is
/// `c⁰ = T·A·d*` with `d*` the resource-free optimum on the price box.
pub fn generate_instance(scale: &ScaleSpec, horizon: usize, key: StreamKey) -> Result<PricingInstance, GenerationError> {
    scale.validate()?;
    let mut rng = key.per_rep().stream(Purpose::Instance);
    let fixed = scale.price_box();
    for _ in 0..GENERATION_RETRIES {
        let (a, alpha, b) = draw_model(scale, &mut rng);
        let Ok(model) = LinearDemandModel::new(alpha, b) else { continue };
        let bx = match scale.box_rule {
            BoxRule::Fixed => fixed,
            BoxRule::NonnegativeDemand => {
                let Some(u) = nonnegative_demand_upper(&model, fixed.lower(), fixed.upper()) else { continue };
                let Ok(bx) = PriceBox::new(fixed.lower(), u, scale.n) else { continue };
                bx
            }
        };
        if linalg::lambda_max_sym(model.b()) * 2.0 > -1e-8 {
            continue;
        }
        let Some(d_star) = box_optimal_demand(&model, bx) else { continue };
        let c0 = (&a * &d_star) * horizon as f64;
        if let Ok(inst) = PricingInstance::new(model, a, c0, horizon, scale.sigma, bx) {
            return Ok(inst);
        }
    }
    Err(GenerationError::Failed(GENERATION_RETRIES))
}

/// Variant where the intercept of product 0 is lowered until its fluid-optimal demand
/// is close to `target`, creating a near-degenerate boundary solution.
pub fn generate_degenerate_instance(
    scale: &ScaleSpec,
    horizon: usize,
    key: StreamKey,
    target: f64,
) -> Result<PricingInstance, GenerationError> {
    let base = generate_instance(scale, horizon, key)?;
    let bx = base.price_box;
    let demand0 = |alpha0: f64| -> Option<(f64, Vector, LinearDemandModel)> {
        let mut alpha = base.model.alpha().clone();
        alpha[0] = alpha0;
        let model = LinearDemandModel::new(alpha, base.model.b().clone()).ok()?;
        let d = box_optimal_demand(&model, bx)?;
        Some((d[0], d, model))
    };
    let (mut lo, mut hi) = (0.0, base.model.alpha()[0]);
    match demand0(hi) {
        Some((d0, _, _)) if d0 > target => {}
        _ => return Err(GenerationError::Failed(1)),
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        match demand0(mid) {
            Some((d0, _, _)) if d0 > target => hi = mid,
            Some(_) => lo = mid,
            None => return Err(GenerationError::Failed(1)),
        }
    }
    let (_, d_star, model) = demand0(hi).ok_or(GenerationError::Failed(1))?;
    let c0 = (&base.a * &d_star) * horizon as f64;
    PricingInstance::new(model, base.a.clone(), c0, horizon, base.sigma, bx).map_err(|_| GenerationError::Failed(1))
}
