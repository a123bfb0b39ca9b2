//! Pricing policies: full-information re-solving, periodic-review learning, and
//! certified-anchor informed pricing, each optionally fed with surrogate
//! pseudo-observations.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimators::{self, AnchoredState, DesignState, ParamEstimate};
use crate::fluid::{self, FluidProblem, ThresholdKind};
use crate::linalg::{self, Matrix, Vector};
use crate::model::{PriceBox, PricingInstance};
use crate::surrogate::{self, ControlVariate, OfflineDataset, SurrogateModel, SurrogateMoments};

/// Estimated slopes are repaired so that the symmetric part has eigenvalues at most this.
pub const REPAIR_CEILING: f64 = -1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    FullInfo,
    Learning,
    Informed,
    Surrogate,
    SurrogateInformed,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 5] = [
        PolicyKind::FullInfo,
        PolicyKind::Learning,
        PolicyKind::Informed,
        PolicyKind::Surrogate,
        PolicyKind::SurrogateInformed,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::FullInfo => "full_info",
            PolicyKind::Learning => "learning",
            PolicyKind::Informed => "informed",
            PolicyKind::Surrogate => "surrogate",
            PolicyKind::SurrogateInformed => "surrogate_informed",
        }
    }

    pub fn needs_anchor(&self) -> bool {
        matches!(self, PolicyKind::Informed | PolicyKind::SurrogateInformed)
    }

    pub fn needs_surrogate(&self) -> bool {
        matches!(self, PolicyKind::Surrogate | PolicyKind::SurrogateInformed)
    }
}

impl std::fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Perturbation {
    /// Canonical basis vectors cycling through the products within an epoch.
    #[default]
    Basis,
    /// Fresh standard Gaussian direction each period.
    Gaussian,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Anchor {
    pub p0: Vector,
    pub d0: Vector,
    pub eps0: f64,
}

#[derive(Debug, Clone)]
pub struct SurrogateWiring {
    pub model: Arc<SurrogateModel>,
    pub offline: Arc<OfflineDataset>,
    /// Ridge for the control-variate coefficient; `None` uses the offline default.
    pub lambda: Option<f64>,
    /// Pin `Γ̂` at zero (pseudo-observations equal raw demand).
    pub zero_gamma: bool,
}

#[derive(Debug, Clone)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    pub zeta: f64,
    pub sigma0: f64,
    pub tau: f64,
    pub perturbation: Perturbation,
    /// Decay exponent of the informed perturbation `t^(−γ)`.
    pub informed_decay: f64,
    pub anchor: Option<Anchor>,
    pub surrogate: Option<SurrogateWiring>,
}

impl PolicyConfig {
    pub fn new(kind: PolicyKind) -> Self {
        Self {
            kind,
            zeta: 1.0,
            sigma0: 1.0,
            tau: 1.0,
            perturbation: Perturbation::Basis,
            informed_decay: 0.5,
            anchor: None,
            surrogate: None,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("{0} requires an anchor")]
    MissingAnchor(PolicyKind),
    #[error("{0} requires surrogate wiring")]
    MissingSurrogate(PolicyKind),
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
    #[error("dimension mismatch: {0}")]
    Dimension(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// Fluid solve succeeded and the price follows it.
    Resolve,
    /// Uniform exploration before the first estimate.
    Explore,
    /// Informed pricing before the anchored design has full rank.
    Warmup,
    /// The (estimated) fluid problem was infeasible; a fallback price is used.
    FluidFallback,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyDecision {
    pub price: Vector,
    pub predicted_demand: Option<Vector>,
    /// Zero-based product indices whose demand is turned away this period.
    pub rejection_set: Vec<usize>,
    pub threshold: Option<f64>,
    pub branch: Branch,
}

#[derive(Debug, Clone, Copy)]
pub struct Observation<'a> {
    pub t: usize,
    pub price: &'a Vector,
    /// Realized demand before rejection and curtailment.
    pub demand: &'a Vector,
    pub surrogate: Option<&'a Vector>,
}

pub trait Policy: Send {
    fn kind(&self) -> PolicyKind;
    fn decide(&mut self, t: usize, capacity: &Vector) -> PolicyDecision;
    fn observe(&mut self, obs: &Observation<'_>);
    /// Surrogate model whose signal this policy consumes, if any.
    fn surrogate_model(&self) -> Option<&SurrogateModel> {
        None
    }
}

/// Estimate-then-select: the anchor is kept unless `(ε⁰)² T > τ √T`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Selection {
    Anchor,
    Fallback,
}

pub fn informed_select(eps0: f64, horizon: usize, tau: f64) -> Selection {
    let t = horizon as f64;
    if eps0 * eps0 * t > tau * t.sqrt() {
        Selection::Fallback
    } else {
        Selection::Anchor
    }
}

fn rejection(predicted: &Vector, threshold: f64) -> Vec<usize> {
    (0..predicted.len()).filter(|&i| predicted[i] <= threshold).collect()
}

/// Flip a coordinate step that would leave the box on one side so it points inward;
/// otherwise the clip would erase the exploration it is meant to provide.
fn inward(value: f64, step: f64, bx: &PriceBox) -> f64 {
    let (l, u) = (bx.lower(), bx.upper());
    if (value + step > u && value - step >= l) || (value + step < l && value - step <= u) {
        -step
    } else {
        step
    }
}

fn sign_plus(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Products that consume a depleted resource.
fn blocked(a: &Matrix, capacity: &Vector) -> Vec<usize> {
    let depleted: Vec<usize> = (0..capacity.len()).filter(|&i| capacity[i] <= fluid::DEPLETED_EPS).collect();
    (0..a.ncols()).filter(|&j| depleted.iter().any(|&i| a[(i, j)] > 0.0)).collect()
}

fn repair(est: ParamEstimate) -> ParamEstimate {
    if linalg::lambda_max_sym(&est.b_hat) > REPAIR_CEILING {
        ParamEstimate {
            b_hat: linalg::clamp_sym_eigenvalues(&est.b_hat, REPAIR_CEILING),
            alpha_hat: est.alpha_hat,
        }
    } else {
        est
    }
}

#[derive(Debug, Clone)]
struct Market {
    a: Matrix,
    horizon: usize,
    price_box: PriceBox,
    n: usize,
}

impl Market {
    fn from_instance(instance: &PricingInstance) -> Self {
        Self {
            a: instance.a.clone(),
            horizon: instance.horizon,
            price_box: instance.price_box,
            n: instance.n(),
        }
    }

    fn problem(&self, alpha: &Vector, b: &Matrix, capacity: &Vector, t: usize) -> FluidProblem {
        FluidProblem::at_period(alpha, b, &self.a, capacity, t, self.horizon, self.price_box)
    }
}

// ---------------------------------------------------------------------------

pub struct FullInfoPolicy {
    instance: PricingInstance,
    zeta: f64,
}

impl FullInfoPolicy {
    pub fn new(instance: &PricingInstance, zeta: f64) -> Self {
        Self { instance: instance.clone(), zeta }
    }
}

impl Policy for FullInfoPolicy {
    fn kind(&self) -> PolicyKind {
        PolicyKind::FullInfo
    }

    fn decide(&mut self, t: usize, capacity: &Vector) -> PolicyDecision {
        let inst = &self.instance;
        let model = &inst.model;
        let threshold = fluid::attraction_threshold(ThresholdKind::FullInfo, t, inst.horizon, self.zeta);
        let problem = FluidProblem::at_period(
            model.alpha(),
            model.b(),
            &inst.a,
            capacity,
            t,
            inst.horizon,
            inst.price_box,
        );
        match fluid::solve_fluid(&problem, fluid::DEFAULT_TOL) {
            Ok(sol) => {
                let d_tilde = fluid::boundary_attract(&sol.d, threshold);
                let candidate = model.b_inv() * (&d_tilde - model.alpha());
                PolicyDecision {
                    price: inst.price_box.clip(&candidate),
                    rejection_set: rejection(&d_tilde, threshold),
                    predicted_demand: Some(d_tilde),
                    threshold: Some(threshold),
                    branch: Branch::Resolve,
                }
            }
            Err(_) => PolicyDecision {
                price: Vector::from_element(inst.n(), inst.price_box.upper()),
                predicted_demand: Some(Vector::zeros(inst.n())),
                rejection_set: (0..inst.n()).collect(),
                threshold: Some(threshold),
                branch: Branch::FluidFallback,
            },
        }
    }

    fn observe(&mut self, _obs: &Observation<'_>) {}
}

// ---------------------------------------------------------------------------

/// Control-variate bookkeeping shared by the surrogate-assisted policies.
struct SurrogateState {
    wiring: SurrogateWiring,
    moments: SurrogateMoments,
    cv: ControlVariate,
}

impl SurrogateState {
    fn new(wiring: SurrogateWiring, n: usize) -> Self {
        Self { wiring, moments: SurrogateMoments::new(n), cv: ControlVariate::zero(n) }
    }

    fn observe(&mut self, p: &Vector, d: &Vector, s: &Vector) {
        let centered = s - self.wiring.offline.center.eval(p);
        self.moments.update(p, d, &centered);
    }

    /// Refit `Γ̂` against the raw-data mean estimate.
    fn refresh(&mut self, mean: &ParamEstimate) {
        if self.wiring.zero_gamma {
            return;
        }
        if let Some(sigma_ds) = self.moments.sigma_ds(mean) {
            let off = &self.wiring.offline.sigma_s_off;
            let lambda = self.wiring.lambda.unwrap_or_else(|| self.wiring.offline.default_lambda());
            self.cv = surrogate::gamma_from_cross(&sigma_ds, off, lambda);
        }
    }

    fn active(&self) -> bool {
        !self.wiring.zero_gamma && self.cv.gamma_hat.iter().any(|&g| g != 0.0)
    }
}

struct EpochPlan {
    p_tilde: Vector,
    pbar_start: Vector,
    start: usize,
    estimate: ParamEstimate,
}

pub struct LearningPolicy {
    kind: PolicyKind,
    market: Market,
    zeta: f64,
    sigma0: f64,
    perturbation: Perturbation,
    design: DesignState,
    surrogate: Option<SurrogateState>,
    price_sum: Vector,
    periods: usize,
    plan: Option<EpochPlan>,
    rng: ChaCha8Rng,
}

impl LearningPolicy {
    pub fn new(instance: &PricingInstance, config: &PolicyConfig, rng: ChaCha8Rng) -> Self {
        let n = instance.n();
        let surrogate = config
            .surrogate
            .clone()
            .filter(|_| config.kind.needs_surrogate())
            .map(|w| SurrogateState::new(w, n));
        Self {
            kind: config.kind,
            market: Market::from_instance(instance),
            zeta: config.zeta,
            sigma0: config.sigma0,
            perturbation: config.perturbation,
            design: DesignState::new(n, false),
            surrogate,
            price_sum: Vector::zeros(n),
            periods: 0,
            plan: None,
            rng,
        }
    }

    /// Running mean of implemented prices.
    pub fn mean_price(&self) -> Vector {
        if self.periods == 0 {
            Vector::zeros(self.market.n)
        } else {
            &self.price_sum / self.periods as f64
        }
    }

    pub fn design(&self) -> &DesignState {
        &self.design
    }

    pub fn control_variate(&self) -> Option<&ControlVariate> {
        self.surrogate.as_ref().map(|s| &s.cv)
    }

    fn estimate(&mut self) -> ParamEstimate {
        let raw = estimators::ols_estimate(&self.design);
        match self.surrogate.as_mut() {
            Some(state) => {
                state.refresh(&raw);
                if !state.active() {
                    return raw;
                }
                let cross = self.design.cross() - &state.cv.gamma_hat * state.moments.sum_s_x();
                let theta = cross * linalg::pinv_sym(self.design.gram());
                let n = self.market.n;
                ParamEstimate {
                    alpha_hat: theta.column(0).into_owned(),
                    b_hat: theta.view((0, 1), (n, n)).into_owned(),
                }
            }
            None => raw,
        }
    }

    fn start_epoch(&mut self, t: usize, capacity: &Vector) {
        let estimate = repair(self.estimate());
        let problem = self.market.problem(&estimate.alpha_hat, &estimate.b_hat, capacity, t);
        let p_tilde = match fluid::solve_fluid(&problem, fluid::DEFAULT_TOL) {
            Ok(sol) => sol.p,
            Err(_) => match &self.plan {
                Some(prev) => prev.p_tilde.clone(),
                None => self.mean_price(),
            },
        };
        self.plan = Some(EpochPlan { p_tilde, pbar_start: self.mean_price(), start: t, estimate });
    }
}

impl Policy for LearningPolicy {
    fn kind(&self) -> PolicyKind {
        self.kind
    }

    fn decide(&mut self, t: usize, capacity: &Vector) -> PolicyDecision {
        let n = self.market.n;
        if t <= n {
            return PolicyDecision {
                price: self.market.price_box.sample_uniform(&mut self.rng),
                predicted_demand: None,
                rejection_set: Vec::new(),
                threshold: None,
                branch: Branch::Explore,
            };
        }
        if (t - 1) % n == 0 || self.plan.is_none() {
            self.start_epoch(t, capacity);
        }
        let plan = self.plan.as_ref().expect("epoch plan exists after start");
        let offset = t - plan.start;
        let scale = self.sigma0 * (t as f64).powf(-0.25);
        let mut raw = self.mean_price() + (&plan.p_tilde - &plan.pbar_start);
        match self.perturbation {
            Perturbation::Basis => {
                let j = offset % n;
                raw[j] += inward(raw[j], scale, &self.market.price_box);
            }
            Perturbation::Gaussian => {
                raw += Vector::from_fn(n, |_, _| self.rng.sample::<f64, _>(StandardNormal)) * scale;
            }
        }
        let price = self.market.price_box.clip(&raw);
        let mut predicted = plan.estimate.predict(&price);
        for j in blocked(&self.market.a, capacity) {
            predicted[j] = 0.0;
        }
        let threshold = fluid::attraction_threshold(ThresholdKind::Learning, t, self.market.horizon, self.zeta);
        PolicyDecision {
            price,
            rejection_set: rejection(&predicted, threshold),
            predicted_demand: Some(predicted),
            threshold: Some(threshold),
            branch: Branch::Resolve,
        }
    }

    fn observe(&mut self, obs: &Observation<'_>) {
        self.design.update(obs.price, obs.demand);
        if let (Some(state), Some(s)) = (self.surrogate.as_mut(), obs.surrogate) {
            state.observe(obs.price, obs.demand, s);
        }
        self.price_sum += obs.price;
        self.periods += 1;
    }

    fn surrogate_model(&self) -> Option<&SurrogateModel> {
        self.surrogate.as_ref().map(|s| s.wiring.model.as_ref())
    }
}

// ---------------------------------------------------------------------------

pub struct InformedPolicy {
    kind: PolicyKind,
    market: Market,
    zeta: f64,
    sigma0: f64,
    decay: f64,
    anchored: AnchoredState,
    surrogate: Option<SurrogateState>,
}

impl InformedPolicy {
    pub fn new(instance: &PricingInstance, config: &PolicyConfig, anchor: &Anchor) -> Self {
        let n = instance.n();
        let surrogate = config
            .surrogate
            .clone()
            .filter(|_| config.kind.needs_surrogate())
            .map(|w| SurrogateState::new(w, n));
        Self {
            kind: config.kind,
            market: Market::from_instance(instance),
            zeta: config.zeta,
            sigma0: config.sigma0,
            decay: config.informed_decay,
            anchored: AnchoredState::new(anchor.p0.clone(), anchor.d0.clone(), anchor.eps0),
            surrogate,
        }
    }

    pub fn anchored_state(&self) -> &AnchoredState {
        &self.anchored
    }

    fn estimate(&mut self, t: usize) -> ParamEstimate {
        let raw = estimators::anchored_estimate(&self.anchored);
        let n = self.market.n;
        match self.surrogate.as_mut() {
            Some(state) => {
                if t > 1 && (t - 1) % n == 0 {
                    state.refresh(&raw);
                }
                if !state.active() {
                    return raw;
                }
                let a = &self.anchored;
                let c = a.c() - &state.cv.gamma_hat * state.moments.sum_s_dp(&a.anchor_p);
                let b_hat = c * linalg::pinv_sym(a.v());
                let alpha_hat = &a.anchor_d - &b_hat * &a.anchor_p;
                ParamEstimate { alpha_hat, b_hat }
            }
            None => raw,
        }
    }
}

impl Policy for InformedPolicy {
    fn kind(&self) -> PolicyKind {
        self.kind
    }

    fn decide(&mut self, t: usize, capacity: &Vector) -> PolicyDecision {
        let n = self.market.n;
        let estimate = self.estimate(t);
        let p0 = self.anchored.anchor_p.clone();
        let (base, branch, estimate) = if !self.anchored.full_rank() {
            (p0.clone(), Branch::Warmup, estimate)
        } else {
            let est = repair(estimate);
            let problem = self.market.problem(&est.alpha_hat, &est.b_hat, capacity, t);
            match fluid::solve_fluid(&problem, fluid::DEFAULT_TOL) {
                Ok(sol) => (sol.p, Branch::Resolve, est),
                // The anchor price is the only price known to be safe under a bad estimate.
                Err(_) => (p0.clone(), Branch::FluidFallback, est),
            }
        };
        let j = (t - 1) % n;
        let mut raw = base;
        let step = self.sigma0 * sign_plus(raw[j] - p0[j]) * (t as f64).powf(-self.decay);
        raw[j] += inward(raw[j], step, &self.market.price_box);
        let price = self.market.price_box.clip(&raw);
        let mut predicted = &self.anchored.anchor_d + &estimate.b_hat * (&price - &p0);
        for k in blocked(&self.market.a, capacity) {
            predicted[k] = 0.0;
        }
        let threshold = fluid::attraction_threshold(ThresholdKind::Informed, t, self.market.horizon, self.zeta);
        PolicyDecision {
            price,
            rejection_set: rejection(&predicted, threshold),
            predicted_demand: Some(predicted),
            threshold: Some(threshold),
            branch,
        }
    }

    fn observe(&mut self, obs: &Observation<'_>) {
        self.anchored.update(obs.price, obs.demand);
        if let (Some(state), Some(s)) = (self.surrogate.as_mut(), obs.surrogate) {
            state.observe(obs.price, obs.demand, s);
        }
    }

    fn surrogate_model(&self) -> Option<&SurrogateModel> {
        self.surrogate.as_ref().map(|s| s.wiring.model.as_ref())
    }
}

// ---------------------------------------------------------------------------

/// Build the policy for one episode. `rng` is the episode's policy stream.
pub fn build_policy(
    instance: &PricingInstance,
    config: &PolicyConfig,
    rng: ChaCha8Rng,
) -> Result<Box<dyn Policy>, PolicyError> {
    if !(config.zeta >= 0.0 && config.sigma0 >= 0.0 && config.tau > 0.0) {
        return Err(PolicyError::InvalidParameter("zeta, sigma0 >= 0 and tau > 0 required"));
    }
    let kind = config.kind;
    if kind.needs_surrogate() {
        let w = config.surrogate.as_ref().ok_or(PolicyError::MissingSurrogate(kind))?;
        if w.model.n() != instance.n() || w.offline.sigma_s_off.nrows() != instance.n() {
            return Err(PolicyError::Dimension("surrogate"));
        }
    }
    match kind {
        PolicyKind::FullInfo => Ok(Box::new(FullInfoPolicy::new(instance, config.zeta))),
        PolicyKind::Learning | PolicyKind::Surrogate => Ok(Box::new(LearningPolicy::new(instance, config, rng))),
        PolicyKind::Informed | PolicyKind::SurrogateInformed => {
            let anchor = config.anchor.as_ref().ok_or(PolicyError::MissingAnchor(kind))?;
            if anchor.p0.len() != instance.n() || anchor.d0.len() != instance.n() {
                return Err(PolicyError::Dimension("anchor"));
            }
            match informed_select(anchor.eps0, instance.horizon, config.tau) {
                Selection::Anchor => Ok(Box::new(InformedPolicy::new(instance, config, anchor))),
                Selection::Fallback => Ok(Box::new(LearningPolicy::new(instance, config, rng))),
            }
        }
    }
}
