//! WebAssembly bindings behind `www/index.html`.
//!
//! Every export takes CSV text and returns a JSON string. Failures come back
//! as `{"error": "..."}` so the page never has to catch exceptions.

use std::path::Path;

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use esg_stack::data::{self, Aspect, LabelTriplet, SentimentClass};
use esg_stack::pipeline::{self, FitOn};
use esg_stack::synthetic;
use esg_stack::timeline::{self, TimelineFilter};

fn respond(result: esg_stack::Result<Value>) -> String {
    let value = result.unwrap_or_else(|e| json!({ "error": e.to_string() }));
    serde_json::to_string(&value).expect("JSON values serialize")
}

fn labels(text: &str, name: &str) -> esg_stack::Result<Vec<LabelTriplet>> {
    data::read_labels_from_reader(text.as_bytes(), Path::new(name))
}

/// A labels CSV (`doc_id,E,S,G`) of `n` documents with realistic class skew.
#[wasm_bindgen]
pub fn sample_labels(prefix: &str, n: usize, seed: u64) -> String {
    let mut buf = Vec::new();
    data::write_labels_to(&mut buf, &synthetic::random_labels(prefix, n, seed)).expect("writing to memory");
    String::from_utf8(buf).expect("CSV is UTF-8")
}

/// An articles CSV for one company spread over `first_year..=last_year`.
/// Only the header when the range is empty.
#[wasm_bindgen]
pub fn sample_articles(company: &str, n: usize, first_year: i32, last_year: i32, seed: u64) -> String {
    let labels = synthetic::random_labels("a", n, seed);
    let mut counts = [timeline::SentimentCounts::default(); 3];
    for l in &labels {
        for a in Aspect::ALL {
            counts[a.index()].add(l.get(a));
        }
    }
    let articles = synthetic::corpus_from_counts(company, &counts, first_year, last_year, seed).unwrap_or_default();
    let mut buf = Vec::new();
    data::write_articles_to(&mut buf, &articles).expect("writing to memory");
    String::from_utf8(buf).expect("CSV is UTF-8")
}

/// Majority baseline fit on `train` or `test` (per `fit_on`) and scored on
/// `test`: the chosen class and accuracy, F1-macro, balanced accuracy and
/// AUPRC per aspect.
#[wasm_bindgen]
pub fn majority_explorer(train_csv: &str, test_csv: &str, fit_on: &str) -> String {
    respond((|| {
        let fit_on = match fit_on {
            "train" => FitOn::Train,
            "test" => FitOn::Test,
            other => {
                return Err(esg_stack::Error::InvalidInput(format!(
                    "fit_on must be train or test, got {other:?}"
                )))
            }
        };
        let train = labels(train_csv, "train")?;
        let test = labels(test_csv, "test")?;
        let (fit, report) = pipeline::majority_report(&train, &test, fit_on)?;
        let m = &report.models[pipeline::MAJORITY_ID];
        let rows: Vec<Value> = Aspect::ALL
            .iter()
            .map(|&a| {
                let s = m.aspect(a);
                json!({
                    "aspect": a,
                    "class": SentimentClass::from_index(fit.classes[a.index()]),
                    "accuracy": s.accuracy.mean,
                    "f1_macro": s.f1_macro.mean,
                    "bacc": s.bacc.mean,
                    "auprc": s.auprc.mean,
                })
            })
            .collect();
        Ok(json!({ "train_docs": train.len(), "test_docs": test.len(), "aspects": rows }))
    })())
}

/// Stratified split of a labels CSV. Reports part sizes and, for each of the
/// twelve aspect/class indicators, the count per part next to its target
/// `fraction * total`.
#[wasm_bindgen]
pub fn split_preview(labels_csv: &str, fractions_csv: &str, seed: u64) -> String {
    respond((|| {
        let docs = labels(labels_csv, "labels")?;
        let fractions = fractions_csv
            .split(',')
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|_| esg_stack::Error::InvalidInput(format!("fraction {f:?} is not a number")))
            })
            .collect::<esg_stack::Result<Vec<f64>>>()?;
        let splits = pipeline::split_labels(&docs, fractions, seed)?;
        let part_of: std::collections::HashMap<&str, usize> = splits
            .parts
            .iter()
            .enumerate()
            .flat_map(|(p, ids)| ids.iter().map(move |id| (id.as_str(), p)))
            .collect();
        let mut indicators = Vec::new();
        let mut worst: f64 = 0.0;
        for a in Aspect::ALL {
            for c in SentimentClass::ALL {
                let mut counts = vec![0usize; splits.parts.len()];
                for d in docs.iter().filter(|d| d.get(a) == c) {
                    counts[part_of[d.doc_id.as_str()]] += 1;
                }
                let total: usize = counts.iter().sum();
                let targets: Vec<f64> = splits.fractions.iter().map(|f| f * total as f64).collect();
                for (n, t) in counts.iter().zip(&targets) {
                    worst = worst.max((*n as f64 - t).abs());
                }
                indicators.push(json!({ "aspect": a, "class": c, "counts": counts, "targets": targets }));
            }
        }
        let sizes: Vec<usize> = splits.parts.iter().map(Vec::len).collect();
        Ok(json!({
            "sizes": sizes,
            "fractions": splits.fractions,
            "worst_deviation": worst,
            "bound": splits.parts.len(),
            "indicators": indicators,
        }))
    })())
}

/// Per-year counts, net score (`positive - negative`) and normalized net
/// (`net / max(1, relevant)`) per company and aspect. Empty `company` keeps
/// every company; a year of 0 leaves that end of the range open.
#[wasm_bindgen]
pub fn timeline_builder(articles_csv: &str, company: &str, from_year: i32, to_year: i32) -> String {
    respond((|| {
        let articles = data::read_articles_from_reader(articles_csv.as_bytes(), Path::new("articles"))?;
        let filter = TimelineFilter {
            companies: if company.trim().is_empty() {
                vec![]
            } else {
                vec![company.trim().to_string()]
            },
            from_year: (from_year != 0).then_some(from_year),
            to_year: (to_year != 0).then_some(to_year),
        };
        let series = timeline::build_timelines(&articles, &filter)?;
        let summary = timeline::summary_table(&series);
        Ok(json!({ "series": series, "summary": summary }))
    })())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Value {
        serde_json::from_str(s).unwrap()
    }

    #[test]
    fn majority_explorer_reports_each_aspect() {
        let train = sample_labels("tr", 200, 1);
        let test = sample_labels("te", 50, 2);
        let v = parse(&majority_explorer(&train, &test, "train"));
        assert_eq!(v["aspects"].as_array().unwrap().len(), 3);
        assert_eq!(v["test_docs"], 50);
        for a in v["aspects"].as_array().unwrap() {
            assert_eq!(a["bacc"], 0.25);
        }
        assert!(parse(&majority_explorer(&train, &test, "both"))["error"].is_string());
        assert!(parse(&majority_explorer("nope", &test, "test"))["error"].is_string());
    }

    #[test]
    fn split_preview_respects_the_bound() {
        let docs = sample_labels("d", 300, 5);
        let v = parse(&split_preview(&docs, "0.6, 0.2, 0.2", 9));
        assert_eq!(v["sizes"], json!([180, 60, 60]));
        assert!(v["worst_deviation"].as_f64().unwrap() <= 3.0);
        assert_eq!(v["indicators"].as_array().unwrap().len(), 12);
        assert_eq!(
            split_preview(&docs, "0.6,0.2,0.2", 9),
            split_preview(&docs, "0.6,0.2,0.2", 9)
        );
        assert!(parse(&split_preview(&docs, "0.5,x", 9))["error"].is_string());
        assert!(parse(&split_preview(&docs, "0.5,0.2", 9))["error"].is_string());
    }

    #[test]
    fn timeline_builder_totals_match_the_corpus() {
        let arts = sample_articles("Acme", 120, 2018, 2021, 4);
        let v = parse(&timeline_builder(&arts, "", 0, 0));
        let summary = v["summary"].as_array().unwrap();
        assert_eq!(summary.len(), 3);
        assert!(summary.iter().all(|r| r["total"] == 120));
        let years = v["series"][0]["years"].as_array().unwrap();
        assert_eq!(years.first().unwrap()["year"], 2018);
        let v = parse(&timeline_builder(&arts, "Acme", 2019, 2019));
        assert_eq!(v["series"][0]["years"].as_array().unwrap().len(), 1);
        assert_eq!(parse(&timeline_builder(&arts, "Other", 0, 0))["series"], json!([]));
        assert!(parse(&timeline_builder(&arts, "", 2022, 2020))["error"].is_string());
    }
}
