//! Replicated, paired runs over a grid of policies, horizons and sweep values.

use std::sync::Arc;

use rayon::prelude::*;

use crate::experiments::config::{Eps0Spec, ExperimentConfig, InstanceKind, PolicySettings, SweepParam};
use crate::experiments::generate::{generate_degenerate_instance, generate_instance, ScaleSpec};
use crate::experiments::stats;
use crate::fluid;
use crate::linalg::Vector;
use crate::model::PricingInstance;
use crate::policy::{build_policy, Anchor, PolicyConfig, PolicyKind, SurrogateWiring};
use crate::rng::{Purpose, StreamKey};
use crate::sim::{self, EpisodeOptions};
use crate::surrogate::{OfflineDataset, SurrogateModel};

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateCell {
    pub policy: PolicyKind,
    pub horizon: usize,
    pub sweep_param: Option<SweepParam>,
    pub sweep_value: Option<f64>,
    /// Regret of each replication in rep order; `None` marks a failed episode.
    pub per_rep: Vec<Option<f64>>,
    pub failures: Vec<String>,
    /// Stream key of each replication (shared by every policy and sweep value).
    pub stream_keys: Vec<StreamKey>,
    pub reps: usize,
    pub mean_regret: f64,
    pub std: f64,
    pub stderr: f64,
}

impl AggregateCell {
    pub fn from_regrets(
        policy: PolicyKind,
        horizon: usize,
        sweep_param: Option<SweepParam>,
        sweep_value: Option<f64>,
        per_rep: Vec<Option<f64>>,
        failures: Vec<String>,
        stream_keys: Vec<StreamKey>,
    ) -> Self {
        let values: Vec<f64> = per_rep.iter().flatten().copied().collect();
        let reps = values.len();
        let mean_regret = stats::mean(&values);
        let std = stats::sample_std(&values);
        let stderr = if reps > 0 { std / (reps as f64).sqrt() } else { f64::NAN };
        Self {
            policy,
            horizon,
            sweep_param,
            sweep_value,
            per_rep,
            failures,
            stream_keys,
            reps,
            mean_regret,
            std,
            stderr,
        }
    }

    pub fn regrets(&self) -> Vec<f64> {
        self.per_rep.iter().flatten().copied().collect()
    }
}

/// Settings with the sweep override for one grid point applied.
pub fn settings_at(base: &PolicySettings, param: Option<SweepParam>, value: Option<f64>) -> PolicySettings {
    let mut s = base.clone();
    if let (Some(p), Some(v)) = (param, value) {
        match p {
            SweepParam::Zeta => s.zeta = v,
            SweepParam::Rho => s.rho = v,
            SweepParam::Epsilon0 => s.eps0 = Eps0Spec::Fixed(v),
            SweepParam::Sigma0 => s.sigma0 = v,
            SweepParam::Sigma => {}
        }
    }
    s
}

/// Unit vector drawn uniformly on the sphere from the anchor stream.
pub fn anchor_direction(n: usize, key: StreamKey) -> Vector {
    let mut rng = key.stream(Purpose::Anchor);
    loop {
        let u = sim::standard_normals(n, &mut rng);
        let norm = u.norm();
        if norm > 1e-12 {
            return u / norm;
        }
    }
}

/// Anchor at the fluid-optimal price with demand displaced by `eps0` along `direction`.
pub fn make_anchor(instance: &PricingInstance, eps0: f64, direction: &Vector) -> Result<Anchor, String> {
    let sol = fluid::initial_fluid_solution(instance).map_err(|e| e.to_string())?;
    let d0 = instance.model.alpha() + instance.model.b() * &sol.p + direction * eps0;
    Ok(Anchor { p0: sol.p, d0, eps0 })
}

pub fn make_surrogate(
    instance: &PricingInstance,
    settings: &PolicySettings,
    key: StreamKey,
) -> Result<SurrogateWiring, String> {
    let sigma = instance.sigma;
    let sd = settings.surrogate_noise_sd.unwrap_or(sigma);
    let model = SurrogateModel::misspecified(
        instance.model.alpha(),
        instance.model.b(),
        settings.misspecification,
        settings.rho,
        sd,
        sigma,
    )
    .map_err(|e| e.to_string())?;
    let mut rng = key.stream(Purpose::Offline);
    let offline = OfflineDataset::build(&model, settings.offline_samples, &instance.price_box, sigma, &mut rng)
        .map_err(|e| e.to_string())?;
    Ok(SurrogateWiring {
        model: Arc::new(model),
        offline: Arc::new(offline),
        lambda: settings.lambda,
        zero_gamma: settings.zero_gamma,
    })
}

pub fn instance_for(scale: &ScaleSpec, kind: InstanceKind, horizon: usize, key: StreamKey) -> Result<PricingInstance, String> {
    match kind {
        InstanceKind::Random => generate_instance(scale, horizon, key),
        InstanceKind::Degenerate { target } => generate_degenerate_instance(scale, horizon, key, target),
    }
    .map_err(|e| e.to_string())
}

/// Full policy configuration for one episode.
pub fn policy_config(
    kind: PolicyKind,
    instance: &PricingInstance,
    settings: &PolicySettings,
    key: StreamKey,
) -> Result<PolicyConfig, String> {
    let mut cfg = PolicyConfig::new(kind);
    cfg.zeta = settings.zeta;
    cfg.sigma0 = settings.sigma0;
    cfg.tau = settings.tau;
    cfg.perturbation = settings.perturbation;
    cfg.informed_decay = settings.informed_decay;
    if kind.needs_anchor() {
        let eps0 = settings.eps0.value(instance.horizon);
        let direction = anchor_direction(instance.n(), key);
        cfg.anchor = Some(make_anchor(instance, eps0, &direction)?);
    }
    if kind.needs_surrogate() {
        cfg.surrogate = Some(make_surrogate(instance, settings, key)?);
    }
    Ok(cfg)
}

/// Run one episode and return its regret.
pub fn run_single(
    kind: PolicyKind,
    instance: &PricingInstance,
    settings: &PolicySettings,
    key: StreamKey,
    fluid_value: f64,
    options: EpisodeOptions,
) -> Result<sim::EpisodeResult, String> {
    let cfg = policy_config(kind, instance, settings, key)?;
    let mut policy = build_policy(instance, &cfg, key.stream(Purpose::Policy)).map_err(|e| e.to_string())?;
    let result = sim::run_episode(instance, policy.as_mut(), key, fluid_value, options);
    if result.regret.is_finite() {
        Ok(result)
    } else {
        Err("non-finite regret".into())
    }
}

type TaskOutput = Vec<Vec<Result<f64, String>>>;

fn run_task(config: &ExperimentConfig, scale: &ScaleSpec, horizon: usize, rep: usize) -> TaskOutput {
    let key = StreamKey::new(config.master_seed, rep as u64, horizon as u64);
    let points = config.sweep_points();
    let param = config.sweep_param();
    let fail_all = |msg: String| vec![vec![Err(msg); config.policies.len()]; points.len()];
    let base = match instance_for(scale, config.instance, horizon, key) {
        Ok(i) => i,
        Err(e) => return fail_all(e),
    };
    let fluid_value = match fluid::fluid_value(&base) {
        Ok(v) => v,
        Err(e) => return fail_all(e.to_string()),
    };
    let options = EpisodeOptions { record: false, curtailment: config.curtailment, noise: config.noise };
    points
        .iter()
        .map(|&value| {
            let settings = settings_at(&config.settings, param, value);
            let mut instance = base.clone();
            if let (Some(SweepParam::Sigma), Some(v)) = (param, value) {
                instance.sigma = v;
            }
            config
                .policies
                .iter()
                .map(|&kind| run_single(kind, &instance, &settings, key, fluid_value, options).map(|r| r.regret))
                .collect()
        })
        .collect()
}

/// Execute every `(policy, T, sweep value, rep)` episode and aggregate per cell.
///
/// All policies and sweep values of a replication share the instance and every random
/// stream, so cells can be compared rep by rep. Output order is policies × horizons ×
/// sweep values as listed in the config, independent of the number of workers.
pub fn run_grid(config: &ExperimentConfig, workers: Option<usize>) -> Result<Vec<AggregateCell>, String> {
    config.validate().map_err(|e| e.to_string())?;
    let scale = config.scale.spec();
    let tasks: Vec<(usize, usize)> = config
        .horizons
        .iter()
        .flat_map(|&t| (0..config.reps).map(move |r| (t, r)))
        .collect();
    let work = || -> Vec<TaskOutput> {
        tasks.par_iter().map(|&(t, r)| run_task(config, &scale, t, r)).collect()
    };
    let outputs = match workers {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k.max(1))
            .build()
            .map_err(|e| e.to_string())?
            .install(work),
        None => work(),
    };

    let points = config.sweep_points();
    let param = config.sweep_param();
    let mut cells = Vec::new();
    for (pi, &kind) in config.policies.iter().enumerate() {
        for (ti, &horizon) in config.horizons.iter().enumerate() {
            for (si, &value) in points.iter().enumerate() {
                let mut per_rep = Vec::with_capacity(config.reps);
                let mut failures = Vec::new();
                let mut keys = Vec::with_capacity(config.reps);
                for rep in 0..config.reps {
                    let out = &outputs[ti * config.reps + rep][si][pi];
                    keys.push(StreamKey::new(config.master_seed, rep as u64, horizon as u64));
                    match out {
                        Ok(v) => per_rep.push(Some(*v)),
                        Err(e) => {
                            per_rep.push(None);
                            failures.push(format!("rep {rep}: {e}"));
                        }
                    }
                }
                cells.push(AggregateCell::from_regrets(kind, horizon, param, value, per_rep, failures, keys));
            }
        }
    }
    Ok(cells)
}
