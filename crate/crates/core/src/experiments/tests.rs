use super::results::*;
use super::*;
use crate::sim::{generate_corpus, CorpusConfig};

fn small_data() -> ExperimentData {
    let cfg = CorpusConfig {
        n_source: 8,
        n_target: 2,
        ..CorpusConfig::default()
    };
    let corpus = generate_corpus(&cfg, 07_2024).expect("corpus");
    ExperimentData::from_corpus(&corpus).expect("examples")
}

fn tiny_plan() -> ExperimentPlan {
    let mut plan = ExperimentPlan {
        checkpoints: vec![4],
        n_seeds: 2,
        ..ExperimentPlan::default()
    };
    plan.train.epochs = 4;
    plan
}

#[test]
fn variant_round_trips_and_orders() {
    for v in Variant::ALL {
        assert_eq!(Variant::from_str(v.as_str()), Some(v));
    }
    assert_eq!(Variant::from_str("nonsense"), None);
    assert!(Variant::Local < Variant::PtmLargeFt);
}

#[test]
fn plan_validation_rejects_bad_shapes() {
    let ok = ExperimentPlan::default();
    ok.validate().unwrap();

    let mut p = ok.clone();
    p.checkpoints.clear();
    assert!(p.validate().is_err());

    let mut p = ok.clone();
    p.checkpoints = vec![8, 8];
    assert!(p.validate().is_err());

    let mut p = ok.clone();
    p.checkpoints = vec![4, 41];
    assert!(p.validate().is_err(), "checkpoint past holdout start");

    let mut p = ok.clone();
    p.n_seeds = 0;
    assert!(p.validate().is_err());

    let mut p = ok.clone();
    p.source_weeks = 0;
    assert!(p.validate().is_err());

    let mut p = ok;
    p.source_weeks = 53;
    assert!(p.validate().is_err());
}

#[test]
fn local_track_has_full_cardinality() {
    let data = small_data();
    let plan = tiny_plan();
    let outcome = run_local_track(&data, &plan, 11, None).unwrap();
    // 2 systems x 1 checkpoint x 2 seeds.
    assert_eq!(outcome.rows.len(), 4);
    assert!(outcome.missing.is_empty());
    for row in &outcome.rows {
        assert_eq!(row.variant, Variant::Local);
        assert!(row.mae.is_finite() && row.mae >= 0.0);
        assert_eq!(row.checkpoint_weeks, Some(4));
        assert!(data.target_ids().contains(&row.system));
    }
}

#[test]
fn ptm_large_pools_about_eight_times_the_small_set() {
    let data = small_data();
    let plan = ExperimentPlan::default();
    let small = data.source_window(plan.small_source_index, plan.source_weeks).unwrap();
    let pooled: usize = (0..data.n_source())
        .map(|i| data.source_window(i, plan.source_weeks).unwrap().len())
        .sum();
    let ratio = pooled as f64 / small.len() as f64;
    assert!(
        (5.6..=10.4).contains(&ratio),
        "pooled/small example ratio {ratio:.2} outside 8 +/- 30%"
    );
}

#[test]
fn ptm_training_touches_only_source_windows() {
    let data = small_data();
    let plan = tiny_plan();
    data.audit.clear();
    let (small, large) = train_ptms(&data, &plan, 42, 0).unwrap();
    for access in data.audit.events() {
        assert!(
            matches!(access, DataAccess::SourceWindow { .. }),
            "pre-training performed a non-source read: {access:?}"
        );
    }
    // Provenance names only source systems.
    assert_eq!(small.metadata.source_ids, vec!["s00".to_string()]);
    assert_eq!(large.metadata.source_ids.len(), 8);
    for id in &large.metadata.source_ids {
        assert!(id.starts_with('s'));
        assert!(!data.target_ids().contains(id));
    }
}

#[test]
fn ptm_rows_are_checkpoint_independent() {
    let data = small_data();
    let plan = tiny_plan();
    let ptms: Vec<_> = (0..plan.n_seeds)
        .map(|s| train_ptms(&data, &plan, 7, s).unwrap())
        .collect();
    let outcome = run_ptm_track(&data, &plan, &ptms, 7, None).unwrap();
    let at4 = outcome.rows_for(Variant::PtmLarge, Some(4));
    let any = outcome.rows_for(Variant::PtmLarge, None);
    assert_eq!(at4, any, "plain PTM rows must not depend on checkpoint");
    assert_eq!(any.len(), 4); // 2 systems x 2 seeds, one row each
    assert!(any.iter().all(|r| r.checkpoint_weeks.is_none()));
    // Fine-tuned rows do carry checkpoints.
    let ft = outcome.rows_for(Variant::PtmLargeFt, Some(4));
    assert_eq!(ft.len(), 4);
    assert!(ft.iter().all(|r| r.checkpoint_weeks == Some(4)));
}

#[test]
fn full_grid_is_deterministic_and_audited() {
    let data = small_data();
    let plan = tiny_plan();
    let (outcome_a, matrix_a) = run_full_grid(&data, &plan, 99, None).unwrap();
    data.audit.clear();
    let (outcome_b, matrix_b) = run_full_grid(&data, &plan, 99, None).unwrap();
    assert_eq!(outcome_a.rows, outcome_b.rows);
    assert_eq!(outcome_a.missing, outcome_b.missing);
    assert_eq!(matrix_a, matrix_b);

    // Row cardinality: local 4 + ptm_small 4 + ptm_large 4 + ft 4 + ft 4.
    assert_eq!(outcome_a.rows.len(), 20);
    assert_eq!(matrix_a.n(), 2);

    // Access audit for the second run: fitting reads stay inside training
    // windows; holdout reads match the evaluation count exactly (20 grid
    // evaluations + 4 cross-matrix cells), so no fit ever saw holdout data.
    let events = data.audit.events();
    let mut train_reads = 0;
    let mut source_reads = 0;
    let mut holdout_reads = 0;
    for e in events {
        match e {
            DataAccess::TrainWindow { weeks, .. } => {
                assert!(weeks <= 40, "training window {weeks} reaches past week 40");
                train_reads += 1;
            }
            DataAccess::SourceWindow { weeks, .. } => {
                assert_eq!(weeks, plan.source_weeks);
                source_reads += 1;
            }
            DataAccess::Holdout { .. } => holdout_reads += 1,
        }
    }
    // local 4 + ft 2*4 + xmat 2 training-window reads.
    assert_eq!(train_reads, 14);
    // 2 seeds x (1 small + 8 pooled) source reads.
    assert_eq!(source_reads, 18);
    assert_eq!(holdout_reads, 24);
}

#[test]
fn grid_rows_come_out_sorted() {
    let data = small_data();
    let mut plan = tiny_plan();
    plan.checkpoints = vec![4, 8];
    let (outcome, _) = run_full_grid(&data, &plan, 5, None).unwrap();
    let key = |r: &ResultRow| {
        (
            r.variant,
            r.system.clone(),
            r.checkpoint_weeks,
            r.seed,
        )
    };
    let mut sorted = outcome.rows.clone();
    sorted.sort_by_key(key);
    assert_eq!(outcome.rows, sorted);
}

#[test]
fn grid_writes_loadable_model_files() {
    let data = small_data();
    let plan = tiny_plan();
    let dir = tempfile::tempdir().unwrap();
    run_full_grid(&data, &plan, 3, Some(dir.path())).unwrap();
    for name in [
        "local_t00_w04_s0.json",
        "local_t01_w04_s1.json",
        "ptm_small_s0.json",
        "ptm_large_s1.json",
        "ptm_small_ft_t00_w04_s0.json",
        "ptm_large_ft_t01_w04_s1.json",
        "xmat_t00.json",
        "xmat_t01.json",
    ] {
        let path = dir.path().join(name);
        let model = crate::model::load(&path)
            .unwrap_or_else(|e| panic!("{name} should be loadable: {e}"));
        model.validate().unwrap();
    }
}

#[test]
fn cross_matrix_diagonal_uses_own_system() {
    let data = small_data();
    let plan = tiny_plan();
    let matrix = build_cross_matrix(&data, &plan, 21, None).unwrap();
    assert_eq!(matrix.ids, data.target_ids());
    matrix.validate().unwrap();
    assert_eq!(matrix.column(0).len(), 2);
}

#[test]
fn summary_matches_hand_averaged_rows() {
    let row = |variant, system: &str, cp, seed, mae| ResultRow {
        variant,
        system: system.into(),
        checkpoint_weeks: cp,
        seed,
        mae,
    };
    let outcome = GridOutcome {
        rows: vec![
            row(Variant::Local, "a", Some(4), 0, 1.0),
            row(Variant::Local, "a", Some(4), 1, 2.0),
            row(Variant::Local, "b", Some(4), 0, 3.0),
            row(Variant::Local, "b", Some(4), 1, 4.0),
            row(Variant::PtmSmall, "a", None, 0, 0.5),
            row(Variant::PtmSmall, "b", None, 0, 1.5),
        ],
        missing: vec![],
    };
    let summary = compute_summary(&outcome, &[4, 8], 2);
    assert_eq!(summary.variants.len(), 5);

    let local = &summary.variants[0];
    assert_eq!(local.variant, "local");
    let cell = &local.by_checkpoint[0];
    assert_eq!(cell.n_rows, 4);
    assert_eq!(cell.mean_mae, Some(2.5));
    // Per-system means 1.5 and 3.5 -> population sd 1.0.
    assert_eq!(cell.sd_across_systems, Some(1.0));
    // Per-seed means 2.0 and 3.0 -> population sd 0.5.
    assert_eq!(cell.sd_across_seeds, Some(0.5));
    // No local rows at the 8-week checkpoint in this synthetic outcome.
    assert_eq!(local.by_checkpoint[1].n_rows, 0);
    assert_eq!(local.by_checkpoint[1].mean_mae, None);

    // Checkpoint-free PTM rows are replicated into both checkpoint cells.
    let ptm = &summary.variants[1];
    assert_eq!(ptm.variant, "ptm_small");
    for cell in &ptm.by_checkpoint {
        assert_eq!(cell.n_rows, 2);
        assert_eq!(cell.mean_mae, Some(1.0));
        assert_eq!(cell.sd_across_systems, Some(0.5));
        assert_eq!(cell.sd_across_seeds, Some(0.0));
    }
}

#[test]
fn result_files_round_trip() {
    let rows = vec![
        ResultRow {
            variant: Variant::Local,
            system: "t00".into(),
            checkpoint_weeks: Some(4),
            seed: 0,
            mae: 0.5,
        },
        ResultRow {
            variant: Variant::PtmLarge,
            system: "t01".into(),
            checkpoint_weeks: None,
            seed: 3,
            mae: 1.25,
        },
    ];
    let text = format_learning_curves(&rows);
    assert_eq!(parse_learning_curves(&text).unwrap(), rows);
    // Canonical form: emitting the parsed rows reproduces the bytes.
    assert_eq!(format_learning_curves(&parse_learning_curves(&text).unwrap()), text);

    let matrix = CrossMatrix {
        ids: vec!["t00".into(), "t01".into()],
        mae: vec![0.25, 1.5, 0.75, 0.125],
    };
    let text = format_cross_matrix(&matrix);
    assert_eq!(parse_cross_matrix(&text).unwrap(), matrix);

    let outcome = GridOutcome {
        rows,
        missing: vec![MissingCell {
            variant: "local".into(),
            system: "t02".into(),
            checkpoint_weeks: Some(4),
            seed: 1,
            reason: "no examples".into(),
        }],
    };
    let summary = compute_summary(&outcome, &[4, 8, 16, 32], 5);
    let text = format_summary(&summary);
    assert_eq!(parse_summary(&text).unwrap(), summary);
}

#[test]
fn parsers_reject_malformed_input() {
    assert!(parse_learning_curves("wrong,header\n").is_err());
    assert!(parse_learning_curves("variant,system,checkpoint,seed,mae\nlocal,t00,4,0\n").is_err());
    assert!(
        parse_learning_curves("variant,system,checkpoint,seed,mae\nwho,t00,4,0,0.5\n").is_err()
    );
    assert!(
        parse_learning_curves("variant,system,checkpoint,seed,mae\nlocal,t00,4,0,-1.0\n").is_err()
    );
    assert!(
        parse_learning_curves("variant,system,checkpoint,seed,mae\nlocal,,4,0,0.5\n").is_err()
    );

    assert!(parse_cross_matrix("").is_err());
    assert!(parse_cross_matrix("wrong,t00\nt00,0.5\n").is_err());
    // Row label disagrees with header order.
    assert!(parse_cross_matrix("system,t00,t01\nt01,0.1,0.2\nt00,0.3,0.4\n").is_err());
    // Missing a row.
    assert!(parse_cross_matrix("system,t00,t01\nt00,0.1,0.2\n").is_err());
    // Extra row.
    assert!(
        parse_cross_matrix("system,t00\nt00,0.1\nt00,0.2\n").is_err()
    );
    // Non-numeric cell.
    assert!(parse_cross_matrix("system,t00\nt00,abc\n").is_err());

    assert!(parse_summary("{}").is_err());
    assert!(parse_summary("not json").is_err());
}

#[test]
fn emit_results_writes_all_three_files() {
    let data = small_data();
    let plan = tiny_plan();
    let (outcome, matrix) = run_full_grid(&data, &plan, 13, None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let summary =
        emit_results(&outcome, &matrix, &plan.checkpoints, plan.n_seeds, dir.path()).unwrap();

    let curves = std::fs::read_to_string(dir.path().join(LEARNING_CURVES_FILE)).unwrap();
    assert_eq!(parse_learning_curves(&curves).unwrap().len(), outcome.rows.len());
    let matrix_text = std::fs::read_to_string(dir.path().join(CROSS_MATRIX_FILE)).unwrap();
    assert_eq!(parse_cross_matrix(&matrix_text).unwrap().ids, matrix.ids);
    let summary_text = std::fs::read_to_string(dir.path().join(SUMMARY_FILE)).unwrap();
    assert_eq!(parse_summary(&summary_text).unwrap(), summary);

    // Summary means must equal hand-averages of the CSV rows.
    let parsed = parse_learning_curves(&curves).unwrap();
    let local4: Vec<f64> = parsed
        .iter()
        .filter(|r| r.variant == Variant::Local && r.checkpoint_weeks == Some(4))
        .map(|r| r.mae)
        .collect();
    let hand = local4.iter().sum::<f64>() / local4.len() as f64;
    let cell = &summary.variants[0].by_checkpoint[0];
    assert!(
        (cell.mean_mae.unwrap() - hand).abs() < 1e-6,
        "summary mean {} vs hand mean {hand} (CSV is 6 dp)",
        cell.mean_mae.unwrap()
    );
}
