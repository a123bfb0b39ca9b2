use dynprice::experiments::config::{
    canned_sweep, parse_config, Eps0Spec, ExperimentConfig, InstanceKind, NamedScale, ScaleRef, Sweep, SweepKind, SweepParam,
};
use dynprice::experiments::generate::{generate_degenerate_instance, generate_instance, ScaleSpec};
use dynprice::experiments::output::{cells_to_csv, load_config_or_manifest, read_csv, CsvRow, Manifest};
use dynprice::experiments::runner::AggregateCell;
use dynprice::experiments::run_grid;
use dynprice::fluid;
use dynprice::linalg;
use dynprice::policy::PolicyKind;
use dynprice::rng::StreamKey;
use proptest::prelude::*;

fn small_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(
        ScaleRef::Named(NamedScale::Scale2),
        vec![30, 60],
        4,
        99,
        vec![PolicyKind::FullInfo, PolicyKind::Learning, PolicyKind::Surrogate],
    );
    cfg.sweep = Some(Sweep { param: SweepParam::Rho, values: vec![0.0, 0.9] });
    cfg
}

#[test]
fn grid_is_complete_and_ordered() {
    let cfg = small_config();
    let cells = run_grid(&cfg, Some(1)).unwrap();
    let mut expected = Vec::new();
    for &p in &cfg.policies {
        for &t in &cfg.horizons {
            for v in [0.0, 0.9] {
                expected.push((p, t, Some(v)));
            }
        }
    }
    let got: Vec<_> = cells.iter().map(|c| (c.policy, c.horizon, c.sweep_value)).collect();
    assert_eq!(got, expected);
    for c in &cells {
        assert_eq!(c.sweep_param, Some(SweepParam::Rho));
        assert_eq!(c.per_rep.len(), cfg.reps);
    }
}

#[test]
fn aggregates_recompute_from_per_rep_values() {
    for c in run_grid(&small_config(), None).unwrap() {
        let v = c.regrets();
        assert_eq!(c.reps, v.len());
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let std = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt();
        assert!((c.mean_regret - mean).abs() <= 1e-12 * (1.0 + mean.abs()));
        assert!((c.std - std).abs() <= 1e-12 * (1.0 + std));
        assert!((c.stderr - std / (v.len() as f64).sqrt()).abs() <= 1e-12 * (1.0 + std));
    }
}

#[test]
fn policies_in_a_cell_share_stream_keys() {
    let cfg = small_config();
    let cells = run_grid(&cfg, None).unwrap();
    for t in &cfg.horizons {
        let keys: Vec<&Vec<StreamKey>> = cells.iter().filter(|c| c.horizon == *t).map(|c| &c.stream_keys).collect();
        assert!(keys.windows(2).all(|w| w[0] == w[1]));
        let expected: Vec<StreamKey> = (0..cfg.reps).map(|r| StreamKey::new(cfg.master_seed, r as u64, *t as u64)).collect();
        assert_eq!(keys[0], &expected);
    }
}

#[test]
fn output_is_independent_of_worker_count() {
    let cfg = small_config();
    let a = cells_to_csv(&run_grid(&cfg, Some(1)).unwrap()).unwrap();
    let b = cells_to_csv(&run_grid(&cfg, Some(3)).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn manifest_replay_reproduces_csv_bytes() {
    let mut cfg = small_config();
    cfg.settings.eps0 = Eps0Spec::Horizon { horizon_power: -0.5 };
    cfg.policies.push(PolicyKind::Informed);
    let first = cells_to_csv(&run_grid(&cfg, None).unwrap()).unwrap();
    let manifest = Manifest::new(&cfg, None).to_bytes().unwrap();
    let replay_cfg = load_config_or_manifest(&manifest).unwrap();
    let second = cells_to_csv(&run_grid(&replay_cfg, Some(2)).unwrap()).unwrap();
    assert_eq!(first, second);
    assert_eq!(read_csv(&first).unwrap().len(), 2 * 2 * 4);
}

#[test]
fn canned_sweeps_are_runnable_at_tiny_scale() {
    for kind in SweepKind::ALL {
        let mut cfg = canned_sweep(kind, NamedScale::Scale2, None).unwrap();
        cfg.reps = 1;
        cfg.horizons = cfg.horizons.iter().map(|&t| t.min(40)).collect();
        cfg.horizons.dedup();
        if let Some(s) = cfg.sweep.as_mut() {
            s.values.truncate(2);
        }
        let cells = run_grid(&cfg, None).unwrap();
        assert!(cells.iter().all(|c| c.failures.is_empty()), "{kind:?}");
    }
}

#[test]
fn generated_instances_satisfy_model_assumptions() {
    for scale in [ScaleSpec::scale1(), ScaleSpec::scale2()] {
        for rep in 0..20 {
            let key = StreamKey::new(2, rep, 500);
            let inst = generate_instance(&scale, 500, key).unwrap();
            assert_eq!((inst.m(), inst.n()), (scale.m, scale.n));
            assert!(linalg::lambda_max_sym(inst.model.b()) < 0.0);
            assert!(inst.model.min_mean_demand_on_box(&inst.price_box) >= -1e-9);
            assert!(inst.a.iter().all(|&x| (0.0..1.0).contains(&x)));
            // Every horizon of a replication shares the market.
            let other = generate_instance(&scale, 100, StreamKey::new(2, rep, 100)).unwrap();
            assert_eq!(other.model, inst.model);
            assert!((&other.c0 * 5.0 - &inst.c0).amax() < 1e-9);
        }
    }
}

#[test]
fn degenerate_instances_have_a_near_zero_demand() {
    for rep in 0..10 {
        let inst = generate_degenerate_instance(&ScaleSpec::scale2(), 200, StreamKey::new(4, rep, 200), 0.01).unwrap();
        let sol = fluid::initial_fluid_solution(&inst).unwrap();
        assert!(sol.d[0] <= 0.02, "rep {rep}: d0 = {}", sol.d[0]);
    }
}

#[test]
fn config_errors_are_reported() {
    assert!(parse_config(b"{").is_err());
    assert!(parse_config(br#"{"scale": "scale2", "horizons": [], "reps": 1, "master_seed": 0, "policies": ["learning"]}"#).is_err());
    assert!(parse_config(br#"{"scale": "scale2", "horizons": [10], "reps": 0, "master_seed": 0, "policies": ["learning"]}"#).is_err());
    assert!(parse_config(br#"{"scale": "scale9", "horizons": [10], "reps": 1, "master_seed": 0, "policies": ["learning"]}"#).is_err());
    let ok = parse_config(br#"{"scale": "scale2", "horizons": [10], "reps": 1, "master_seed": 0, "policies": ["learning"]}"#).unwrap();
    assert_eq!(ok.instance, InstanceKind::Random);
}

fn cell_strategy() -> impl Strategy<Value = AggregateCell> {
    (
        prop::sample::select(PolicyKind::ALL.to_vec()),
        1usize..5000,
        prop::option::of((prop::sample::select(vec![SweepParam::Rho, SweepParam::Zeta, SweepParam::Sigma]), -1e3f64..1e3)),
        prop::collection::vec(prop::option::weighted(0.9, -1e6f64..1e6), 1..20),
    )
        .prop_map(|(policy, horizon, sweep, per_rep)| {
            let (param, value) = sweep.map_or((None, None), |(p, v)| (Some(p), Some(v)));
            AggregateCell::from_regrets(policy, horizon, param, value, per_rep, vec![], vec![])
        })
}

proptest! {
    #[test]
    fn csv_round_trips_cells(cells in prop::collection::vec(cell_strategy(), 0..10)) {
        let bytes = cells_to_csv(&cells).unwrap();
        let rows = read_csv(&bytes).unwrap();
        let expected: Vec<CsvRow> = cells.iter().map(CsvRow::from).collect();
        prop_assert_eq!(rows.len(), expected.len());
        for (r, e) in rows.iter().zip(&expected) {
            prop_assert_eq!(&r.policy, &e.policy);
            prop_assert_eq!(r.horizon, e.horizon);
            prop_assert_eq!(r.sweep_value.map(f64::to_bits), e.sweep_value.map(f64::to_bits));
            prop_assert!(r.mean_regret.to_bits() == e.mean_regret.to_bits() || (r.mean_regret.is_nan() && e.mean_regret.is_nan()));
        }
    }

    #[test]
    fn configs_round_trip_through_json(reps in 1usize..50, seed in any::<u64>(), t in 1usize..3000) {
        let cfg = ExperimentConfig::new(ScaleRef::Named(NamedScale::Scale1), vec![t], reps, seed, vec![PolicyKind::FullInfo]);
        let bytes = serde_json::to_vec(&cfg).unwrap();
        prop_assert_eq!(parse_config(&bytes).unwrap(), cfg);
    }
}
