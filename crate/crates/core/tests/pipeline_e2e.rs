use esg_stack::data::Aspect;
use esg_stack::pipeline::{run_pipeline, PipelineConfig, FAILURE_MARKER, REPORT_FILE};
use esg_stack::synthetic::{write_fixture, FixtureSpec};

fn run_fixture(spec: &FixtureSpec) -> (tempfile::TempDir, String) {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_fixture(dir.path(), spec).unwrap();
    let cfg = PipelineConfig::load(&cfg_path).unwrap();
    let outcome = run_pipeline(&cfg).unwrap();
    let json = std::fs::read_to_string(&outcome.report_path).unwrap();
    (dir, json)
}

#[test]
fn identical_configs_give_identical_reports() {
    let spec = FixtureSpec::default();
    let (d1, a) = run_fixture(&spec);
    let (_d2, b) = run_fixture(&spec);
    assert_eq!(a, b);
    let out = d1.path().join("out");
    assert!(out.join(REPORT_FILE).is_file());
    assert!(!out.join(FAILURE_MARKER).exists());
    for seed in [0, 100, 200] {
        assert!(out.join(format!("seed_{seed}/splits.json")).is_file());
    }
}

#[test]
fn towers_beat_the_majority_baseline_on_informative_families() {
    let (dir, _) = run_fixture(&FixtureSpec::default());
    let report: esg_stack::metrics::EvalReport =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out").join(REPORT_FILE)).unwrap()).unwrap();
    for tower in ["tower_a", "tower_b"] {
        for aspect in Aspect::ALL {
            let t = report.models[tower].aspect(aspect).f1_macro.mean;
            let m = report.models["majority"].aspect(aspect).f1_macro.mean;
            assert!(t > m + 0.2, "{tower} {aspect}: {t} vs majority {m}");
        }
    }
}

#[test]
fn embedding_family_runs_with_svd_selection() {
    let spec = FixtureSpec {
        external: vec![],
        embedding_dim: Some(24),
        seeds: vec![0],
        ..FixtureSpec::default()
    };
    let (dir, json) = run_fixture(&spec);
    assert!(json.contains("\"base:emb\""));
    let report: esg_stack::metrics::EvalReport = serde_json::from_str(&json).unwrap();
    let audit = report.audit.unwrap();
    let svd = &audit["per_seed"][0]["families"][0]["svd"];
    assert!(svd["chosen"].as_u64().is_some(), "{svd}");
    drop(dir);
}

#[test]
fn missing_input_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_fixture(dir.path(), &FixtureSpec::default()).unwrap();
    std::fs::remove_file(dir.path().join("ext0.jsonl")).unwrap();
    let cfg = PipelineConfig::load(&cfg_path).unwrap();
    let err = run_pipeline(&cfg).unwrap_err();
    assert!(err.is_validation(), "{err}");
}

#[test]
fn oracle_family_survives_both_towers_with_a_larger_meta_pool() {
    // 800 training documents leave 160 for meta-training.
    let spec = FixtureSpec {
        n_train: 800,
        n_test: 100,
        seed: 11,
        external: vec![(1.0, 1.0)],
        embedding_dim: None,
        seeds: vec![0, 100, 200],
    };
    let (dir, json) = run_fixture(&spec);
    let report: esg_stack::metrics::EvalReport = serde_json::from_str(&json).unwrap();
    for tower in ["tower_a", "tower_b"] {
        for aspect in Aspect::ALL {
            for acc in &report.models[tower].aspect(aspect).accuracy.per_seed {
                assert!(*acc >= 0.95, "{tower} {aspect}: {acc}");
            }
        }
    }
    drop(dir);
}

#[test]
fn audit_records_disjoint_stage_counts() {
    let spec = FixtureSpec {
        seeds: vec![0, 100],
        embedding_dim: Some(12),
        ..FixtureSpec::default()
    };
    let (dir, json) = run_fixture(&spec);
    let report: esg_stack::metrics::EvalReport = serde_json::from_str(&json).unwrap();
    assert_eq!(report.config_hash.as_ref().map(String::len), Some(64));
    let audit = report.audit.unwrap();
    for seed_audit in audit["per_seed"].as_array().unwrap() {
        assert_eq!(seed_audit["leakage_check"], "passed");
        let c = &seed_audit["counts"];
        let get = |k: &str| c[k].as_u64().unwrap();
        assert_eq!(get("d80") + get("d20"), get("train"));
        assert_eq!(get("meta_train") + get("meta_val"), get("d20"));
        for fam in seed_audit["families"].as_array().unwrap() {
            let expected = if fam["source"] == "external" { 0 } else { get("d80") };
            assert_eq!(fam["fit_docs"].as_u64().unwrap(), expected);
        }
        let seed = seed_audit["seed"].as_u64().unwrap();
        let splits: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(dir.path().join(format!("out/seed_{seed}/splits.json"))).unwrap(),
        )
        .unwrap();
        let d80: std::collections::HashSet<&str> = splits["d80"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_str().unwrap())
            .collect();
        assert!(splits["d20"]
            .as_array()
            .unwrap()
            .iter()
            .all(|v| !d80.contains(v.as_str().unwrap())));
    }
}
