//! Market environment and episode runner.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::fluid;
use crate::linalg::{Matrix, Vector};
use crate::model::PricingInstance;
use crate::policy::{Branch, Observation, Policy};
use crate::rng::{Purpose, StreamKey};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Curtailment {
    /// Serve products in ascending index order until a resource runs out.
    #[default]
    IndexOrder,
    /// Scale all demand by the largest common factor that fits.
    Proportional,
}

/// `n` standard normal draws.
pub fn standard_normals<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vector {
    Vector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// How Gaussian noise is bounded so realized demand stays nonnegative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseClamp {
    /// Clamp below at `−f` only. Shifts the mean up by `σφ(f/σ) − fΦ(−f/σ)`.
    #[default]
    Lower,
    /// Clamp to `[−f, f]`. The law stays symmetric, so the noise keeps mean zero.
    Symmetric,
}

/// Bound `raw` noise componentwise against the mean demand `f(p)`.
pub fn truncate_noise(raw: &Vector, mean_demand: &Vector, clamp: NoiseClamp) -> Vector {
    match clamp {
        NoiseClamp::Symmetric => raw.zip_map(mean_demand, |e, f| {
            let f = f.max(0.0);
            e.clamp(-f, f)
        }),
        NoiseClamp::Lower => raw.zip_map(mean_demand, |e, f| e.max(-f)),
    }
}

/// Gaussian `N(0, σ²)` noise per component, bounded by `clamp`.
pub fn sample_noise<R: Rng + ?Sized>(sigma: f64, mean_demand: &Vector, clamp: NoiseClamp, rng: &mut R) -> Vector {
    let raw = standard_normals(mean_demand.len(), rng) * sigma;
    truncate_noise(&raw, mean_demand, clamp)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub served: Vector,
    pub c_after: Vector,
}

/// Serve `demand` against `capacity` with the given curtailment rule.
pub fn serve(capacity: &Vector, demand: &Vector, a: &Matrix, mode: Curtailment) -> StepOutcome {
    let (m, n) = (a.nrows(), a.ncols());
    let mut c = capacity.map(|x| x.max(0.0));
    let mut served = Vector::zeros(n);
    match mode {
        Curtailment::IndexOrder => {
            for j in 0..n {
                let mut limit = demand[j].max(0.0);
                let mut binding = None;
                for i in 0..m {
                    if a[(i, j)] > 0.0 {
                        let cap = c[i] / a[(i, j)];
                        if cap < limit {
                            limit = cap;
                            binding = Some(i);
                        }
                    }
                }
                served[j] = limit;
                for i in 0..m {
                    c[i] = (c[i] - a[(i, j)] * limit).max(0.0);
                }
                if let Some(i) = binding {
                    c[i] = 0.0;
                }
            }
        }
        Curtailment::Proportional => {
            let d = demand.map(|x| x.max(0.0));
            let use_ = a * &d;
            let mut theta: f64 = 1.0;
            for i in 0..m {
                if use_[i] > c[i] {
                    theta = theta.min(c[i] / use_[i]);
                }
            }
            served = d * theta;
            for i in 0..m {
                c[i] = (c[i] - (a.row(i) * &served)[0]).max(0.0);
            }
        }
    }
    StepOutcome { served, c_after: c }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodRecord {
    pub t: usize,
    pub price: Vector,
    pub realized: Vector,
    pub served: Vector,
    pub rejected: Vec<usize>,
    pub revenue: f64,
    pub capacity: Vector,
    pub branch: Branch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub total_revenue: f64,
    pub fluid_value: f64,
    pub regret: f64,
    pub trajectory: Option<Vec<PeriodRecord>>,
    /// First period after which each resource was exhausted.
    pub depletion_times: Vec<Option<usize>>,
    pub final_capacity: Vector,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EpisodeOptions {
    pub record: bool,
    pub curtailment: Curtailment,
    pub noise: NoiseClamp,
}

/// Run one episode of `policy` on `instance` with the streams of `key`.
///
/// Demand noise is always drawn as `n` standard normals per period scaled by `σ`, so
/// episodes that differ only in policy or noise level share their noise.
pub fn run_episode(
    instance: &PricingInstance,
    policy: &mut dyn Policy,
    key: StreamKey,
    fluid_value: f64,
    options: EpisodeOptions,
) -> EpisodeResult {
    let n = instance.n();
    let m = instance.m();
    let model = &instance.model;
    let mut noise_rng = key.stream(Purpose::Noise);
    let mut surrogate_rng = key.stream(Purpose::Surrogate);
    let mut c = instance.c0.clone();
    let mut revenue = 0.0;
    let mut depletion = vec![None; m];
    let mut trajectory = options.record.then(|| Vec::with_capacity(instance.horizon));

    for t in 1..=instance.horizon {
        let decision = policy.decide(t, &c);
        let p = decision.price;
        let mean = model.alpha() + model.b() * &p;
        let raw = standard_normals(n, &mut noise_rng) * instance.sigma;
        let realized = (&mean + truncate_noise(&raw, &mean, options.noise)).map(|x| x.max(0.0));
        let signal = policy.surrogate_model().map(|sm| sm.sample(&p, &raw, &mut surrogate_rng));

        let mut offered = realized.clone();
        for &j in &decision.rejection_set {
            offered[j] = 0.0;
        }
        let out = serve(&c, &offered, &instance.a, options.curtailment);
        let step_revenue = p.dot(&out.served);
        revenue += step_revenue;
        c = out.c_after;
        for i in 0..m {
            if depletion[i].is_none() && c[i] <= fluid::DEPLETED_EPS {
                depletion[i] = Some(t);
            }
        }
        policy.observe(&Observation { t, price: &p, demand: &realized, surrogate: signal.as_ref() });
        if let Some(tr) = trajectory.as_mut() {
            tr.push(PeriodRecord {
                t,
                price: p,
                realized,
                served: out.served,
                rejected: decision.rejection_set,
                revenue: step_revenue,
                capacity: c.clone(),
                branch: decision.branch,
            });
        }
    }
    EpisodeResult {
        total_revenue: revenue,
        fluid_value,
        regret: fluid_value - revenue,
        trajectory,
        depletion_times: depletion,
        final_capacity: c,
    }
}

/// One row per period: `t, price_*, realized_*, served_*, revenue, capacity_*`.
pub fn write_trajectory_csv<W: Write>(records: &[PeriodRecord], n: usize, m: usize, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    for prefix in ["price", "realized", "served"] {
        header.extend((0..n).map(|j| format!("{prefix}_{j}")));
    }
    header.push("revenue".into());
    header.extend((0..m).map(|i| format!("capacity_{i}")));
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![r.t.to_string()];
        for v in [&r.price, &r.realized, &r.served] {
            row.extend(v.iter().map(|x| x.to_string()));
        }
        row.push(r.revenue.to_string());
        row.extend(r.capacity.iter().map(|x| x.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
