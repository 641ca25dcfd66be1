use std::path::Path;
use std::process::{Command, Output};

use esg_stack::data::{self, LabelTriplet};
use esg_stack::metrics::EvalReport;
use esg_stack::pipeline::{self, SplitsFile};
use esg_stack::synthetic::{self, FixtureSpec, TABLE2_TEST, TABLE2_TRAIN, TABLE7};
use esg_stack::timeline::{self, TimelineFilter};

fn esg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_esg-stack"))
        .args(args)
        .env("ESG_STACK_LOG", "error")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    assert!(
        o.status.success(),
        "exit {:?}: {}",
        o.status.code(),
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn table2_files(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
    let train = dir.join("train.csv");
    let test = dir.join("test.csv");
    data::write_labels(
        &train,
        &synthetic::labels_from_marginals("tr", &TABLE2_TRAIN, 0).unwrap(),
    )
    .unwrap();
    data::write_labels(&test, &synthetic::labels_from_marginals("te", &TABLE2_TEST, 0).unwrap()).unwrap();
    (train, test)
}

#[test]
fn split_writes_a_rereadable_partition() {
    let dir = tempfile::tempdir().unwrap();
    let labels = dir.path().join("labels.csv");
    data::write_labels(&labels, &synthetic::random_labels("d", 440, 4)).unwrap();
    let out = dir.path().join("out");
    stdout(&esg(&[
        "split",
        "--labels",
        p(&labels),
        "--seed",
        "17",
        "--out",
        p(&out),
    ]));

    let written = pipeline::read_splits(&out.join("splits.json")).unwrap();
    assert_eq!((written.parts[0].len(), written.parts[1].len()), (352, 88));
    let direct = pipeline::split_labels(&data::read_labels(&labels).unwrap(), vec![0.8, 0.2], 17).unwrap();
    assert_eq!(written, direct);

    let printed: SplitsFile =
        serde_json::from_str(&stdout(&esg(&["split", "--labels", p(&labels), "--seed", "17"]))).unwrap();
    assert_eq!(printed, written);
}

#[test]
fn split_rejects_bad_fractions_and_seed_lists() {
    let dir = tempfile::tempdir().unwrap();
    let labels = dir.path().join("labels.csv");
    data::write_labels(&labels, &synthetic::random_labels("d", 40, 1)).unwrap();
    let o = esg(&["split", "--labels", p(&labels), "--fractions", "0.7,0.2"]);
    assert_eq!(o.status.code(), Some(2));
    let o = esg(&["split", "--labels", p(&labels), "--seeds", "1,2"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn baseline_fit_side_and_printed_values() {
    let dir = tempfile::tempdir().unwrap();
    let (train, test) = table2_files(dir.path());
    let v: serde_json::Value = serde_json::from_str(&stdout(&esg(&[
        "baseline",
        "--train",
        p(&train),
        "--test",
        p(&test),
        "--fit-on",
        "test",
    ])))
    .unwrap();
    assert_eq!(
        v["classes"],
        serde_json::json!({"E": "irrelevant", "S": "irrelevant", "G": "irrelevant"})
    );
    let report: EvalReport = serde_json::from_value(v["report"].clone()).unwrap();
    let m = &report.models["majority"];
    let f1 = [m.e.f1_macro.mean, m.s.f1_macro.mean, m.g.f1_macro.mean];
    for (got, want) in f1.iter().zip([0.2059, 0.1259, 0.1626]) {
        assert!((got - want).abs() < 5e-5, "{got} vs {want}");
    }

    let v: serde_json::Value =
        serde_json::from_str(&stdout(&esg(&["baseline", "--train", p(&train), "--test", p(&test)]))).unwrap();
    assert_eq!(v["fit_on"], "train");
    assert_eq!(v["classes"]["S"], "positive");
}

#[test]
fn evaluate_reproduces_the_baseline_from_its_own_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let (train, test) = table2_files(dir.path());
    let out = dir.path().join("base");
    stdout(&esg(&[
        "baseline",
        "--train",
        p(&train),
        "--test",
        p(&test),
        "--fit-on",
        "test",
        "--out",
        p(&out),
    ]));
    let base: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("baseline.json")).unwrap()).unwrap();
    let base: EvalReport = serde_json::from_value(base["report"].clone()).unwrap();

    let preds = out.join("majority_predictions.csv");
    let eval: EvalReport =
        serde_json::from_str(&stdout(&esg(&["evaluate", "--pred", p(&preds), "--gold", p(&test)]))).unwrap();
    assert_eq!(eval.models["majority_predictions"], base.models["majority"]);

    let md = stdout(&esg(&[
        "evaluate",
        "--pred",
        p(&preds),
        "--gold",
        p(&test),
        "--format",
        "md",
    ]));
    assert!(md.contains("### Aspect E") && md.contains("| majority_predictions |"));
}

#[test]
fn evaluate_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (_, test) = table2_files(dir.path());
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "doc_id,E,S\nx,positive,positive\n").unwrap();
    assert_eq!(
        esg(&["evaluate", "--pred", p(&bad), "--gold", p(&test)]).status.code(),
        Some(2)
    );
    let missing = dir.path().join("missing.csv");
    assert_eq!(
        esg(&["evaluate", "--pred", p(&missing), "--gold", p(&test)])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(esg(&["evaluate"]).status.code(), Some(2));
}

#[test]
fn agreement_reports_kappa_and_counts() {
    let dir = tempfile::tempdir().unwrap();
    let anns = dir.path().join("anns.csv");
    let mut text = String::from("item_id,annotator_id,aspect,label\n");
    for item in ["i1", "i2"] {
        let label = if item == "i1" { "positive" } else { "negative" };
        for who in ["a", "b", "c"] {
            for aspect in ["E", "S", "G"] {
                text.push_str(&format!("{item},{who},{aspect},{label}\n"));
            }
        }
    }
    std::fs::write(&anns, text).unwrap();
    let counts = dir.path().join("counts.csv");
    let v: serde_json::Value = serde_json::from_str(&stdout(&esg(&[
        "agreement",
        "--annotations",
        p(&anns),
        "--counts",
        p(&counts),
    ])))
    .unwrap();
    let aspects = v["aspects"].as_array().unwrap();
    assert_eq!(aspects.len(), 3);
    assert!(aspects.iter().all(|a| a["kappa"] == 1.0 && a["raters"] == 3));
    let counts = std::fs::read_to_string(counts).unwrap();
    assert!(counts.starts_with("aspect,item_id,irrelevant,negative,neutral,positive\n"));
    assert!(counts.contains("E,i1,0,0,0,3"));
}

fn talum_articles(dir: &Path) -> std::path::PathBuf {
    let (name, row) = TABLE7[0];
    let arts = synthetic::corpus_from_counts(name, &synthetic::table7_counts(&row), 2013, 2024, 3).unwrap();
    let mut buf = Vec::new();
    data::write_articles_to(&mut buf, &arts).unwrap();
    let path = dir.join("articles.csv");
    std::fs::write(&path, buf).unwrap();
    path
}

#[test]
fn timeline_summary_matches_the_source_counts() {
    let dir = tempfile::tempdir().unwrap();
    let arts = talum_articles(dir.path());
    let rows = timeline::summary_from_csv(&stdout(&esg(&["timeline", "--articles", p(&arts), "--summary"]))).unwrap();
    assert_eq!(rows.len(), 3);
    assert_eq!((rows[0].total, rows[0].relevant, rows[0].positive), (4072, 1234, 460));
    assert!(rows.iter().all(|r| r.identities_hold()));

    let out = dir.path().join("tl");
    stdout(&esg(&[
        "timeline",
        "--articles",
        p(&arts),
        "--from",
        "2015",
        "--to",
        "2016",
        "--out",
        p(&out),
    ]));
    let yearly = std::fs::read_to_string(out.join("timeline.csv")).unwrap();
    assert_eq!(yearly.lines().count(), 1 + 3 * 2);
    assert!(yearly.starts_with(&timeline::TIMELINE_HEADER.join(",")));
    let parsed = data::read_articles(&arts).unwrap();
    let filter = TimelineFilter {
        companies: vec![],
        from_year: Some(2015),
        to_year: Some(2016),
    };
    let expected = timeline::timelines_to_csv(&timeline::build_timelines(&parsed, &filter).unwrap()).unwrap();
    assert_eq!(yearly, expected);
    assert!(out.join("summary.csv").exists());

    let o = esg(&["timeline", "--articles", p(&arts), "--from", "2020", "--to", "2019"]);
    assert_eq!(o.status.code(), Some(2));
    let none = stdout(&esg(&["timeline", "--articles", p(&arts), "--company", "Nobody"]));
    assert_eq!(none.lines().count(), 1);
}

#[test]
fn run_honours_global_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let spec = FixtureSpec {
        n_train: 160,
        n_test: 40,
        seeds: vec![0, 100, 200],
        ..FixtureSpec::default()
    };
    let config = synthetic::write_fixture(dir.path(), &spec).unwrap();
    let out = dir.path().join("elsewhere");
    let printed = stdout(&esg(&[
        "run",
        "--config",
        p(&config),
        "--seeds",
        "5",
        "--jobs",
        "1",
        "--out",
        p(&out),
    ]));
    assert_eq!(printed.trim(), p(&out.join(pipeline::REPORT_FILE)));
    let report: EvalReport =
        serde_json::from_str(&std::fs::read_to_string(out.join(pipeline::REPORT_FILE)).unwrap()).unwrap();
    assert_eq!(report.seeds, vec![5]);
    assert!(out.join("seed_5").join("splits.json").exists());
    assert!(!dir.path().join("out").exists());
}

#[test]
fn run_validation_failures_exit_with_two() {
    assert_eq!(esg(&["run"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let config = synthetic::write_fixture(dir.path(), &FixtureSpec::default()).unwrap();
    let original = std::fs::read_to_string(&config).unwrap();
    std::fs::write(&config, original.replacen('{', "{\"surprise\": 1,", 1)).unwrap();
    assert_eq!(esg(&["run", "--config", p(&config)]).status.code(), Some(2));

    std::fs::write(&config, &original).unwrap();
    std::fs::remove_file(dir.path().join("labels_test.csv")).unwrap();
    let o = esg(&["run", "--config", p(&config)]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!dir.path().join("out").join(pipeline::REPORT_FILE).exists());

    assert_eq!(esg(&["no-such-command"]).status.code(), Some(2));
}

#[test]
fn hard_label_csv_and_one_hot_jsonl_agree() {
    let dir = tempfile::tempdir().unwrap();
    let gold = synthetic::random_labels("g", 60, 2);
    let pred: Vec<LabelTriplet> = synthetic::random_labels("g", 60, 3);
    let gold_path = dir.path().join("gold.csv");
    let csv_path = dir.path().join("model.csv");
    let jsonl_path = dir.path().join("model.jsonl");
    data::write_labels(&gold_path, &gold).unwrap();
    data::write_labels(&csv_path, &pred).unwrap();
    data::write_predictions(&jsonl_path, &[pipeline::one_hot_predictions("model", &pred).unwrap()]).unwrap();
    let a: EvalReport = serde_json::from_str(&stdout(&esg(&[
        "evaluate",
        "--pred",
        p(&csv_path),
        "--gold",
        p(&gold_path),
    ])))
    .unwrap();
    let b: EvalReport = serde_json::from_str(&stdout(&esg(&[
        "evaluate",
        "--pred",
        p(&jsonl_path),
        "--gold",
        p(&gold_path),
    ])))
    .unwrap();
    assert_eq!(a, b);
}

#[test]
fn report_does_not_depend_on_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let spec = FixtureSpec {
        n_train: 160,
        n_test: 40,
        ..FixtureSpec::default()
    };
    let config = synthetic::write_fixture(dir.path(), &spec).unwrap();
    let mut reports = Vec::new();
    for jobs in ["1", "3"] {
        let out = dir.path().join(format!("jobs{jobs}"));
        stdout(&esg(&[
            "run",
            "--config",
            p(&config),
            "--seeds",
            "0,100,200",
            "--jobs",
            jobs,
            "--out",
            p(&out),
        ]));
        reports.push(std::fs::read(out.join(pipeline::REPORT_FILE)).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
}
