//! Experiment configuration files.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::experiments::generate::ScaleSpec;
use crate::policy::{Perturbation, PolicyKind};
use crate::sim::{Curtailment, NoiseClamp};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot parse config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid(msg.into()))
}

/// Anchor error bound: a fixed number, or `T^power`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Eps0Spec {
    Fixed(f64),
    Horizon { horizon_power: f64 },
}

impl Eps0Spec {
    pub fn value(&self, horizon: usize) -> f64 {
        match *self {
            Eps0Spec::Fixed(v) => v,
            Eps0Spec::Horizon { horizon_power } => (horizon as f64).powf(horizon_power),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicySettings {
    pub zeta: f64,
    pub sigma0: f64,
    pub tau: f64,
    pub eps0: Eps0Spec,
    pub rho: f64,
    pub offline_samples: usize,
    /// Relative distortion of the surrogate's intercepts and slopes.
    pub misspecification: f64,
    /// Surrogate noise scale; defaults to the demand noise level.
    pub surrogate_noise_sd: Option<f64>,
    /// Control-variate ridge; defaults to `10⁻³·tr(Σ̂_S^off)/n`.
    pub lambda: Option<f64>,
    pub zero_gamma: bool,
    pub perturbation: Perturbation,
    pub informed_decay: f64,
}

impl Default for PolicySettings {
    fn default() -> Self {
        Self {
            zeta: 1.0,
            sigma0: 1.0,
            tau: 1.0,
            eps0: Eps0Spec::Fixed(0.1),
            rho: 0.65,
            offline_samples: 500,
            misspecification: 0.2,
            surrogate_noise_sd: None,
            lambda: None,
            zero_gamma: false,
            perturbation: Perturbation::Basis,
            informed_decay: 0.5,
        }
    }
}

impl PolicySettings {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let finite_nonneg = |x: f64| x.is_finite() && x >= 0.0;
        if !finite_nonneg(self.zeta) || !finite_nonneg(self.sigma0) {
            return invalid("zeta and sigma0 must be finite and nonnegative");
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return invalid("tau must be positive");
        }
        match self.eps0 {
            Eps0Spec::Fixed(v) if !finite_nonneg(v) => return invalid("eps0 must be nonnegative"),
            Eps0Spec::Horizon { horizon_power } if !horizon_power.is_finite() => {
                return invalid("eps0 horizon_power must be finite")
            }
            _ => {}
        }
        if !(-1.0..=1.0).contains(&self.rho) {
            return invalid("rho must lie in [-1, 1]");
        }
        if !self.misspecification.is_finite() {
            return invalid("misspecification must be finite");
        }
        if self.surrogate_noise_sd.is_some_and(|v| !finite_nonneg(v)) {
            return invalid("surrogate_noise_sd must be nonnegative");
        }
        if self.lambda.is_some_and(|v| !finite_nonneg(v)) {
            return invalid("lambda must be nonnegative");
        }
        if !self.informed_decay.is_finite() {
            return invalid("informed_decay must be finite");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Sigma,
    Zeta,
    Rho,
    Epsilon0,
    Sigma0,
}

impl SweepParam {
    pub fn name(&self) -> &'static str {
        match self {
            SweepParam::Sigma => "sigma",
            SweepParam::Zeta => "zeta",
            SweepParam::Rho => "rho",
            SweepParam::Epsilon0 => "epsilon0",
            SweepParam::Sigma0 => "sigma0",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Self::Sigma, Self::Zeta, Self::Rho, Self::Epsilon0, Self::Sigma0]
            .into_iter()
            .find(|p| p.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedScale {
    Scale1,
    Scale2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScaleRef {
    Named(NamedScale),
    Custom(ScaleSpec),
}

impl ScaleRef {
    pub fn spec(&self) -> ScaleSpec {
        match self {
            ScaleRef::Named(NamedScale::Scale1) => ScaleSpec::scale1(),
            ScaleRef::Named(NamedScale::Scale2) => ScaleSpec::scale2(),
            ScaleRef::Custom(s) => s.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InstanceKind {
    #[default]
    Random,
    /// Product 0's intercept lowered until its optimal demand is about `target`.
    Degenerate { target: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scale: ScaleRef,
    pub horizons: Vec<usize>,
    pub reps: usize,
    pub master_seed: u64,
    pub policies: Vec<PolicyKind>,
    #[serde(default)]
    pub settings: PolicySettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Sweep>,
    #[serde(default)]
    pub instance: InstanceKind,
    #[serde(default)]
    pub curtailment: Curtailment,
    #[serde(default)]
    pub noise: NoiseClamp,
}

impl ExperimentConfig {
    pub fn new(scale: ScaleRef, horizons: Vec<usize>, reps: usize, master_seed: u64, policies: Vec<PolicyKind>) -> Self {
        Self {
            scale,
            horizons,
            reps,
            master_seed,
            policies,
            settings: PolicySettings::default(),
            sweep: None,
            instance: InstanceKind::Random,
            curtailment: Curtailment::IndexOrder,
            noise: NoiseClamp::default(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.reps == 0 {
            return invalid("reps must be at least 1");
        }
        if self.horizons.is_empty() || self.horizons.contains(&0) {
            return invalid("horizons must be a nonempty list of positive integers");
        }
        if self.policies.is_empty() {
            return invalid("at least one policy is required");
        }
        for (i, p) in self.policies.iter().enumerate() {
            if self.policies[..i].contains(p) {
                return invalid(format!("policy {p} listed twice"));
            }
        }
        for (i, t) in self.horizons.iter().enumerate() {
            if self.horizons[..i].contains(t) {
                return invalid(format!("horizon {t} listed twice"));
            }
        }
        self.scale.spec().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.settings.validate()?;
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() || sweep.values.iter().any(|v| !v.is_finite()) {
                return invalid("sweep values must be a nonempty list of finite numbers");
            }
            for v in &sweep.values {
                let mut s = self.settings.clone();
                match sweep.param {
                    SweepParam::Sigma if *v < 0.0 => return invalid("sigma sweep values must be nonnegative"),
                    SweepParam::Zeta => s.zeta = *v,
                    SweepParam::Rho => s.rho = *v,
                    SweepParam::Epsilon0 => s.eps0 = Eps0Spec::Fixed(*v),
                    SweepParam::Sigma0 => s.sigma0 = *v,
                    SweepParam::Sigma => {}
                }
                s.validate()?;
            }
        }
        if let InstanceKind::Degenerate { target } = self.instance {
            if !(target.is_finite() && target > 0.0) {
                return invalid("degenerate target must be positive");
            }
        }
        Ok(())
    }

    /// Sweep values, or a single `None` when there is no sweep.
    pub fn sweep_points(&self) -> Vec<Option<f64>> {
        match &self.sweep {
            Some(s) => s.values.iter().map(|v| Some(*v)).collect(),
            None => vec![None],
        }
    }

    pub fn sweep_param(&self) -> Option<SweepParam> {
        self.sweep.as_ref().map(|s| s.param)
    }
}

pub fn parse_config(bytes: &[u8]) -> Result<ExperimentConfig, ConfigError> {
    let cfg: ExperimentConfig = serde_json::from_slice(bytes)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Canned sweeps reproducing the standard figures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    Horizon,
    Epsilon0,
    Rho,
    Zeta,
    Sigma,
}

impl SweepKind {
    pub const ALL: [SweepKind; 5] = [Self::Horizon, Self::Epsilon0, Self::Rho, Self::Zeta, Self::Sigma];

    pub fn name(&self) -> &'static str {
        match self {
            SweepKind::Horizon => "horizon",
            SweepKind::Epsilon0 => "epsilon0",
            SweepKind::Rho => "rho",
            SweepKind::Zeta => "zeta",
            SweepKind::Sigma => "sigma",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

pub const CANNED_HORIZONS: [usize; 6] = [50, 100, 200, 400, 800, 1600];
pub const CANNED_SEED: u64 = 20_240_601;

/// `count` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count <= 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count).map(|k| (a + (b - a) * k as f64 / (count - 1) as f64).exp()).collect()
}

/// Build the config for a canned sweep. `grid` replaces the default grid; for the
/// horizon sweep its values are the horizons.
pub fn canned_sweep(kind: SweepKind, scale: NamedScale, grid: Option<Vec<f64>>) -> Result<ExperimentConfig, ConfigError> {
    use PolicyKind::*;
    let scale_ref = ScaleRef::Named(scale);
    let sweep = |param: SweepParam, default: Vec<f64>| Some(Sweep { param, values: grid.clone().unwrap_or(default) });
    let cfg = match kind {
        SweepKind::Horizon => {
            let horizons = match &grid {
                Some(g) => g
                    .iter()
                    .map(|&v| if v >= 1.0 && v.fract() == 0.0 { Ok(v as usize) } else { invalid(format!("bad horizon {v}")) })
                    .collect::<Result<Vec<_>, _>>()?,
                None => CANNED_HORIZONS.to_vec(),
            };
            let mut c = ExperimentConfig::new(scale_ref, horizons, 100, CANNED_SEED, vec![FullInfo, Learning, Informed]);
            c.settings.eps0 = Eps0Spec::Horizon { horizon_power: -0.5 };
            c
        }
        SweepKind::Epsilon0 => {
            let mut c = ExperimentConfig::new(scale_ref, vec![400, 1600], 300, CANNED_SEED, vec![Informed]);
            c.sweep = sweep(SweepParam::Epsilon0, log_grid(1.0 / 40.0, 1.0, 8));
            c
        }
        SweepKind::Rho => {
            let mut c = ExperimentConfig::new(scale_ref, vec![1000], 100, CANNED_SEED, vec![Learning, Surrogate]);
            c.sweep = sweep(SweepParam::Rho, vec![0.0, 0.3, 0.5, 0.7, 0.9]);
            c
        }
        SweepKind::Zeta => {
            let mut c = ExperimentConfig::new(scale_ref, vec![1000], 100, CANNED_SEED, vec![FullInfo]);
            c.instance = InstanceKind::Degenerate { target: 0.01 };
            c.sweep = sweep(SweepParam::Zeta, vec![0.0, 1.0, 2.0, 5.0, 10.0]);
            c
        }
        SweepKind::Sigma => {
            let mut c = ExperimentConfig::new(scale_ref, vec![500], 100, CANNED_SEED, vec![FullInfo, Learning, Informed]);
            c.sweep = sweep(SweepParam::Sigma, vec![0.1, 0.2, 0.5, 1.0, 2.0, 5.0]);
            c
        }
    };
    cfg.validate()?;
    Ok(cfg)
}
