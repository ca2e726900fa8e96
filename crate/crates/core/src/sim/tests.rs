use super::*;
use crate::error::Error;
use proptest::prelude::*;

fn default_cfg() -> TankConfig {
    TankConfig::default()
}

fn profile(t_low: f64, t_high: f64, seed: u64) -> HouseholdProfile {
    HouseholdProfile {
        household_id: "test".into(),
        draw_rate_by_hour: vec![1.0; 24],
        draw_volume_mean_l: 8.0,
        draw_volume_sd_l: 2.0,
        t_low_c: t_low,
        t_high_c: t_high,
        seed,
    }
}

#[test]
fn uniform_ambient_state_is_a_fixed_point() {
    let cfg = default_cfg();
    let state = TankState::uniform(cfg.n_layers, cfg.t_ambient_c);
    let (next, energy) = step(&state, 0.0, false, &cfg).unwrap();
    for (a, b) in state.layer_temps.iter().zip(&next.layer_temps) {
        assert!((a - b).abs() < 1e-12, "ambient fixed point drifted");
    }
    assert!(energy.relative_imbalance() < 1e-9);
}

#[test]
fn newton_cooling_matches_closed_form() {
    // Uniform state: conduction exchanges nothing, so the per-layer loss is
    // exactly the lumped single-layer model T(t) = t_amb + (T0-t_amb)e^(-ua t/C).
    let cfg = default_cfg();
    let capacity = cfg.tank_capacity();
    let mut state = TankState::uniform(cfg.n_layers, 60.0);
    for k in 1..=96 {
        state = step(&state, 0.0, false, &cfg).unwrap().0;
        let t = k as f64 * cfg.dt_seconds;
        let expected =
            cfg.t_ambient_c + (60.0 - cfg.t_ambient_c) * (-cfg.ua_loss_w_per_k * t / capacity).exp();
        for &layer in &state.layer_temps {
            assert!(
                (layer - expected).abs() < 1e-3,
                "step {k}: layer {layer} vs closed form {expected}"
            );
        }
    }
}

#[test]
fn full_volume_draw_replaces_tank_with_inlet_water() {
    let cfg = default_cfg();
    let state = TankState::uniform(cfg.n_layers, 55.0);
    let (next, energy) = step(&state, cfg.volume_liters, false, &cfg).unwrap();
    // All layers become t_inlet, then relax toward ambient for one step.
    let loss_decay =
        (-(cfg.ua_loss_w_per_k / cfg.n_layers as f64) * cfg.dt_seconds / cfg.layer_capacity())
            .exp();
    let expected = cfg.t_ambient_c + (cfg.t_inlet_c - cfg.t_ambient_c) * loss_decay;
    for &layer in &next.layer_temps {
        assert!((layer - expected).abs() < 1e-9, "layer {layer} vs {expected}");
    }
    assert!(energy.relative_imbalance() < 1e-6);
}

#[test]
fn oversized_draw_is_rejected() {
    let cfg = default_cfg();
    let state = TankState::uniform(cfg.n_layers, 50.0);
    match step(&state, cfg.volume_liters + 1.0, false, &cfg) {
        Err(Error::InvalidDraw { .. }) => {}
        other => panic!("expected InvalidDraw, got {other:?}"),
    }
    assert!(matches!(
        step(&state, -1.0, false, &cfg),
        Err(Error::InvalidDraw { .. })
    ));
}

#[test]
fn non_finite_state_is_rejected() {
    let cfg = default_cfg();
    let mut state = TankState::uniform(cfg.n_layers, 50.0);
    state.layer_temps[3] = f64::NAN;
    assert!(matches!(
        step(&state, 0.0, false, &cfg),
        Err(Error::NumericFault(_))
    ));
}

#[test]
fn heating_adds_exactly_heater_power_dt() {
    let cfg = default_cfg();
    let state = TankState::uniform(cfg.n_layers, 40.0);
    let (next, energy) = step(&state, 0.0, true, &cfg).unwrap();
    assert!((energy.injected_j - cfg.heater_power_w * cfg.dt_seconds).abs() < 1e-6);
    assert!(energy.relative_imbalance() < 1e-6);
    assert!(next.mid_temp() > state.mid_temp());
}

#[test]
fn hysteresis_turns_on_below_band_and_off_above() {
    let p = profile(42.0, 58.0, 1);
    let cfg = default_cfg();
    let below = TankState::uniform(cfg.n_layers, 41.0);
    let above = TankState::uniform(cfg.n_layers, 59.0);
    let inside = TankState::uniform(cfg.n_layers, 50.0);
    assert!(hysteresis_control(&below, &p, false));
    assert!(!hysteresis_control(&above, &p, true));
    assert!(hysteresis_control(&inside, &p, true), "band keeps previous on");
    assert!(!hysteresis_control(&inside, &p, false), "band keeps previous off");
    // Boundary: exactly t_high switches off.
    let at_high = TankState::uniform(cfg.n_layers, 58.0);
    assert!(!hysteresis_control(&at_high, &p, true));
}

#[test]
fn yearly_draw_volume_obeys_law_of_large_numbers() {
    // Flat 4 events/h at 8 L mean: expect 4*24*365*8 = 280,320 L over a year.
    let mut p = profile(42.0, 58.0, 11);
    p.draw_rate_by_hour = vec![4.0; 24];
    let mut total = 0.0;
    for day in 0..365 {
        total += sample_draws(&p, day).iter().sum::<f64>();
    }
    let expected = 4.0 * 24.0 * 365.0 * 8.0;
    assert!(
        (total - expected).abs() < 0.05 * expected,
        "yearly total {total} L vs expected {expected} L"
    );
}

#[test]
fn simulated_year_has_35040_records() {
    let cfg = default_cfg();
    let records = simulate_household(&cfg, &profile(42.0, 58.0, 3), 365).unwrap();
    assert_eq!(records.len(), 35_040);
    for (i, r) in records.iter().enumerate() {
        assert_eq!(r.step_index, i, "step indices gapless");
    }
}

#[test]
fn year_long_run_keeps_physical_invariants() {
    // Heavy-demand profile: worst case for bounds and energy accounting.
    let cfg = default_cfg();
    let mut p = profile(42.0, 58.0, 17);
    p.draw_rate_by_hour = Heterogeneity::default()
        .base_draw_rate_by_hour
        .iter()
        .map(|r| r * 1.6)
        .collect();
    p.draw_volume_mean_l = 12.0;
    let mut sim = HouseholdSim::new(cfg.clone(), p.clone()).unwrap();
    let upper = p.t_high_c + 10.0;
    let lower = cfg.t_inlet_c.min(cfg.t_ambient_c) - 0.5;
    let mut worst_imbalance = 0.0f64;
    for day in 0..365 {
        let draws = sample_draws(&p, day);
        for &d in &draws {
            sim.hp_active = hysteresis_control(&sim.state, &sim.profile, sim.hp_active);
            let (next, energy) =
                step(&sim.state, d.min(cfg.volume_liters), sim.hp_active, &cfg).unwrap();
            sim.state = next;
            worst_imbalance = worst_imbalance.max(energy.relative_imbalance());
            assert!(
                sim.state.is_stratified(1e-9),
                "inversion survived buoyancy at day {day}"
            );
            for &t in &sim.state.layer_temps {
                assert!(
                    (lower..=upper).contains(&t),
                    "layer temp {t} outside [{lower}, {upper}] at day {day}"
                );
            }
        }
    }
    assert!(
        worst_imbalance < 1e-6,
        "worst per-step energy imbalance {worst_imbalance} exceeds 1e-6"
    );
}

#[test]
fn reheat_runs_end_at_the_upper_setpoint() {
    let cfg = default_cfg();
    let p = profile(42.0, 58.0, 23);
    let records = simulate_household(&cfg, &p, 365).unwrap();
    let mut runs = 0;
    for i in 1..records.len() {
        if records[i - 1].hp_active && !records[i].hp_active {
            runs += 1;
            assert!(
                records[i - 1].t_mid >= p.t_high_c - 0.5,
                "reheat ending at step {} stopped at t_mid {}",
                i - 1,
                records[i - 1].t_mid
            );
        }
    }
    assert!(runs > 300, "expected frequent reheat cycles, saw {runs}");
}

#[test]
fn without_demand_and_warm_ambient_the_heater_never_runs() {
    let mut cfg = default_cfg();
    cfg.t_ambient_c = 45.0;
    let mut p = profile(30.0, 58.0, 5);
    p.draw_rate_by_hour = vec![0.0; 24];
    let records = simulate_household(&cfg, &p, 30).unwrap();
    assert!(records.iter().all(|r| !r.hp_active));
    assert!(records.iter().all(|r| r.draw_liters == 0.0));
}

#[test]
fn corpus_has_8_source_and_16_target_households() {
    let cfg = CorpusConfig {
        n_days: 5,
        ..CorpusConfig::default()
    };
    let corpus = generate_corpus(&cfg, 99).unwrap();
    assert_eq!(corpus.source.len(), 8);
    assert_eq!(corpus.target.len(), 16);
    let ids: std::collections::HashSet<&str> = corpus.all().map(|s| s.id()).collect();
    assert_eq!(ids.len(), 24, "household ids must be unique");
    assert!(corpus.source.iter().all(|s| s.id().starts_with('s')));
    assert!(corpus.target.iter().all(|s| s.id().starts_with('t')));
    for s in corpus.all() {
        assert_eq!(s.records.len(), 5 * STEPS_PER_DAY);
    }
}

#[test]
fn same_master_seed_reproduces_the_corpus_bit_for_bit() {
    let cfg = CorpusConfig {
        n_days: 3,
        ..CorpusConfig::default()
    };
    let a = generate_corpus(&cfg, 42).unwrap();
    let b = generate_corpus(&cfg, 42).unwrap();
    for (sa, sb) in a.all().zip(b.all()) {
        assert_eq!(sa.profile, sb.profile);
        assert_eq!(sa.records, sb.records);
    }
    // And matches a sequential (non-rayon) rebuild of each household.
    for s in a.all() {
        let seq = simulate_household(&cfg.tank, &s.profile, cfg.n_days).unwrap();
        assert_eq!(s.records, seq, "parallel vs sequential mismatch for {}", s.id());
    }
}

#[test]
fn corpus_demand_is_heterogeneous() {
    let cfg = CorpusConfig::default();
    let profiles = build_profiles(&cfg, 2024).unwrap();
    let totals: Vec<f64> = profiles
        .iter()
        .map(|(_, p)| {
            (0..365)
                .map(|day| sample_draws(p, day).iter().sum::<f64>())
                .sum()
        })
        .collect();
    let mean = totals.iter().sum::<f64>() / totals.len() as f64;
    let var =
        totals.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / totals.len() as f64;
    let cv = var.sqrt() / mean;
    assert!(
        cv >= 0.2,
        "yearly draw volume coefficient of variation {cv} below 0.2"
    );
}

#[test]
fn profile_seeds_are_distinct_and_setpoints_jittered() {
    let cfg = CorpusConfig::default();
    let profiles = build_profiles(&cfg, 7).unwrap();
    let lows: std::collections::HashSet<u64> = profiles
        .iter()
        .map(|(_, p)| p.t_low_c.to_bits())
        .collect();
    assert!(lows.len() > 20, "setpoint jitter should differ per household");
    let het = &cfg.heterogeneity;
    for (_, p) in &profiles {
        assert!((p.t_low_c - het.base_t_low_c).abs() <= het.setpoint_jitter_c);
        assert!((p.t_high_c - het.base_t_high_c).abs() <= het.setpoint_jitter_c);
    }
}

#[test]
fn invalid_configs_are_rejected() {
    let mut cfg = default_cfg();
    cfg.n_layers = 7;
    assert!(cfg.validate().is_err(), "odd layer count");
    let mut cfg = default_cfg();
    cfg.volume_liters = 0.0;
    assert!(cfg.validate().is_err(), "zero volume");
    let mut cfg = default_cfg();
    cfg.t_inlet_c = cfg.t_ambient_c + 31.0;
    assert!(cfg.validate().is_err(), "inlet sanity bound");
    let mut p = profile(42.0, 58.0, 1);
    p.t_low_c = 58.0;
    assert!(p.validate().is_err(), "t_low must stay below t_high");
    let mut p = profile(42.0, 58.0, 1);
    p.draw_rate_by_hour.pop();
    assert!(p.validate().is_err(), "24 hourly rates required");
}

prop_compose! {
    // Stratified (non-increasing top-to-bottom) layer temperatures.
    fn stratified_state()(
        base in 12.0..60.0f64,
        increments in proptest::collection::vec(0.0..6.0f64, 10)
    ) -> TankState {
        let mut temps = vec![0.0; 10];
        let mut t = base;
        for i in (0..10).rev() {
            t += increments[i];
            temps[i] = t;
        }
        TankState { layer_temps: temps }
    }
}

proptest! {
    #[test]
    fn step_preserves_invariants_from_any_valid_state(
        state in stratified_state(),
        draw in 0.0..200.0f64,
        hp in any::<bool>(),
    ) {
        let cfg = default_cfg();
        let before_max = state.layer_temps[0];
        let (next, energy) = step(&state, draw, hp, &cfg).unwrap();
        prop_assert!(next.is_stratified(1e-9));
        prop_assert!(energy.relative_imbalance() < 1e-6);
        // One step cannot heat any layer past the old maximum plus the
        // injected energy concentrated in one layer, nor cool below inlet.
        let heat_cap = cfg.heater_power_w * cfg.dt_seconds / cfg.layer_capacity();
        let upper = before_max.max(cfg.t_ambient_c) + heat_cap + 1e-9;
        let lower = cfg.t_inlet_c.min(cfg.t_ambient_c) - 1e-9;
        for &t in &next.layer_temps {
            prop_assert!(t <= upper, "layer {} above {}", t, upper);
            prop_assert!(t >= lower, "layer {} below {}", t, lower);
        }
    }

    #[test]
    fn draw_conserves_water_enthalpy(state in stratified_state(), draw in 0.0..200.0f64) {
        let cfg = default_cfg();
        let (_, energy) = step(&state, draw, false, &cfg).unwrap();
        let c = WATER_HEAT_CAPACITY * KG_PER_LITER;
        prop_assert!((energy.inlet_in_j - draw * c * cfg.t_inlet_c).abs() < 1.0);
        prop_assert!(energy.draw_out_j >= draw * c * 11.9);
    }
}
