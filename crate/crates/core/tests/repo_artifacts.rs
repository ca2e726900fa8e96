//! Guards for artifacts checked into the repository outside `src/`: the
//! default config shipped under `configs/` and the fuzz corpus seeds. Both
//! are parsed with the same entry points the binaries (and fuzz targets)
//! use, so format drift shows up here instead of at fuzz time.

use std::fs;
use std::path::{Path, PathBuf};

use tanklab::config::{parse_config, RunConfig};
use tanklab::control::study::parse_control_outcomes;
use tanklab::dataset::parse_examples;
use tanklab::experiments::results::{parse_cross_matrix, parse_learning_curves, parse_summary};
use tanklab::model::parse_model;
use tanklab::sim::csv::parse_series;

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .canonicalize()
        .expect("repo root resolves")
}

#[test]
fn shipped_default_config_matches_builtin_defaults() {
    let path = repo_root().join("configs/default.json");
    let text = fs::read_to_string(&path).expect("configs/default.json is readable");
    let shipped = parse_config(&text).expect("shipped default config parses");
    assert_eq!(
        shipped,
        RunConfig::default(),
        "configs/default.json has drifted from RunConfig::default(); \
         regenerate it from RunConfig::default().to_json()"
    );
}

#[test]
fn every_fuzz_target_has_a_parsing_seed() {
    let corpus = repo_root().join("fuzz/corpus");
    let targets: &[(&str, fn(&str) -> bool)] = &[
        ("parse_series", |t| parse_series(t).is_ok()),
        ("parse_examples", |t| parse_examples(t).is_ok()),
        ("parse_config", |t| parse_config(t).is_ok()),
        ("parse_model", |t| parse_model(t).is_ok()),
        ("parse_learning_curves", |t| parse_learning_curves(t).is_ok()),
        ("parse_cross_matrix", |t| parse_cross_matrix(t).is_ok()),
        ("parse_summary", |t| parse_summary(t).is_ok()),
        ("parse_control_outcomes", |t| parse_control_outcomes(t).is_ok()),
    ];
    for (name, parses) in targets {
        let dir = corpus.join(name);
        let entries: Vec<_> = fs::read_dir(&dir)
            .unwrap_or_else(|e| panic!("seed directory {} missing: {e}", dir.display()))
            .map(|entry| entry.expect("corpus dir entry").path())
            .collect();
        assert!(
            !entries.is_empty(),
            "fuzz target {name} has no corpus seeds in {}",
            dir.display()
        );
        for seed in entries {
            let text = fs::read_to_string(&seed)
                .unwrap_or_else(|e| panic!("seed {} unreadable: {e}", seed.display()));
            assert!(
                parses(&text),
                "seed {} does not parse with {name}",
                seed.display()
            );
        }
    }
}
