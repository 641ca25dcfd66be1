use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use super::config::{FamilyConfig, PipelineConfig, SourceKind};
use crate::data::{
    self, aspect_column, doc_ids, write_predictions, Aspect, EmbeddingSet, LabelTriplet, PredictionSet, NUM_ASPECTS,
};
use crate::ensemble::{
    check_disjoint, fit_base_family, meta_split_ids, predict_tower, train_tower, FamilyFit, FamilySource, MetaRun,
    SvdSelection, TowerModel,
};
use crate::error::{Error, Result};
use crate::metafeatures::{FamilySet, MetaFeatureMatrix};
use crate::metrics::{argmax, evaluate_aspect, AspectMetrics, EvalReport, MajorityBaseline};
use crate::stratify::split_indices_80_20;

pub const FAILURE_MARKER: &str = "FAILED";
pub const REPORT_FILE: &str = "report.json";
pub const MARKDOWN_FILE: &str = "report.md";
pub const MAJORITY_ID: &str = "majority";

/// Labels and embeddings shared by every seed.
#[derive(Clone, Debug)]
pub struct PipelineInputs {
    pub train: Vec<LabelTriplet>,
    pub test: Vec<LabelTriplet>,
    pub embeddings: HashMap<String, EmbeddingSet>,
}

impl PipelineInputs {
    pub fn load(cfg: &PipelineConfig) -> Result<Self> {
        let train = data::read_labels(cfg.resolve(&cfg.train_labels))?;
        let test = data::read_labels(cfg.resolve(&cfg.test_labels))?;
        if train.is_empty() || test.is_empty() {
            return Err(Error::InvalidInput(
                "train and test label files must be non-empty".into(),
            ));
        }
        let test_ids = doc_ids(&test);
        check_disjoint(&doc_ids(&train), &[&test_ids])
            .map_err(|_| Error::Leakage("train and test label files share documents".into()))?;
        let mut embeddings = HashMap::new();
        for fam in cfg.families.iter().filter(|f| f.source == SourceKind::Embedding) {
            let path = cfg.resolve(fam.embeddings.as_deref().expect("validated"));
            embeddings.insert(fam.id.clone(), data::read_embeddings(path, &fam.id)?);
        }
        Ok(PipelineInputs {
            train,
            test,
            embeddings,
        })
    }

    fn all_doc_ids(&self) -> Vec<String> {
        doc_ids(&self.train).into_iter().chain(doc_ids(&self.test)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StageCounts {
    pub train: usize,
    pub test: usize,
    pub d80: usize,
    pub d20: usize,
    pub meta_train: usize,
    pub meta_val: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FamilyAudit {
    pub id: String,
    pub source: SourceKind,
    pub fit_docs: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub svd: Option<SvdSelection>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum TowerAudit {
    A(MetaRun),
    B { level1: Vec<MetaRun>, level2: MetaRun },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeedAudit {
    pub seed: u64,
    pub counts: StageCounts,
    /// Fit documents of every base family are disjoint from D_20 and test.
    pub leakage_check: &'static str,
    pub families: Vec<FamilyAudit>,
    pub towers: BTreeMap<String, TowerAudit>,
}

#[derive(Clone, Debug)]
pub struct SeedOutcome {
    pub seed: u64,
    pub metrics: BTreeMap<String, [AspectMetrics; NUM_ASPECTS]>,
    pub audit: SeedAudit,
}

#[derive(Serialize)]
struct SplitsArtifact<'a> {
    seed: u64,
    d80: &'a [String],
    d20: &'a [String],
    meta_train: &'a [String],
    meta_val: &'a [String],
}

fn gold_columns(labels: &[LabelTriplet]) -> [Vec<usize>; NUM_ASPECTS] {
    Aspect::ALL.map(|a| aspect_column(labels, a))
}

/// Per-aspect metrics of a probability set against aligned gold labels.
pub fn evaluate_prediction_set(preds: &PredictionSet, gold: &[LabelTriplet]) -> Result<[AspectMetrics; NUM_ASPECTS]> {
    if preds.doc_ids != doc_ids(gold) {
        return Err(Error::Shape(format!(
            "predictions of {} are not aligned with gold labels",
            preds.model_id
        )));
    }
    let cols = gold_columns(gold);
    let mut out = Vec::with_capacity(NUM_ASPECTS);
    for aspect in Aspect::ALL {
        let scores = preds.aspect(aspect);
        let pred: Vec<usize> = (0..scores.rows()).map(|r| argmax(scores.row(r))).collect();
        out.push(evaluate_aspect(&pred, &cols[aspect.index()], scores)?);
    }
    Ok(out.try_into().expect("three aspects"))
}

fn select_external(sets: Vec<PredictionSet>, fam: &FamilyConfig, path: &Path) -> Result<PredictionSet> {
    let wanted = fam.model_id.as_deref();
    if wanted.is_none() && sets.len() == 1 {
        return Ok(sets.into_iter().next().expect("one set"));
    }
    let target = wanted.unwrap_or(&fam.id);
    let available: Vec<String> = sets.iter().map(|s| s.model_id.clone()).collect();
    sets.into_iter().find(|s| s.model_id == target).ok_or_else(|| {
        Error::Data(format!(
            "{}: no model {target:?} (found {})",
            path.display(),
            available.join(", ")
        ))
    })
}

fn seed_dir(cfg: &PipelineConfig, seed: u64) -> PathBuf {
    cfg.output_path().join(format!("seed_{seed}"))
}

/// Stages 1 to 3 and test metrics for one seed.
pub fn run_seed(cfg: &PipelineConfig, inputs: &PipelineInputs, seed: u64) -> Result<SeedOutcome> {
    log::info!("seed {seed}: starting");
    // Stage 1
    let (mut i80, mut i20) = split_indices_80_20(&inputs.train, seed).map_err(|e| e.in_stage(seed, "stage 1 split"))?;
    i80.sort_unstable();
    i20.sort_unstable();
    let labels_80: Vec<LabelTriplet> = i80.iter().map(|&i| inputs.train[i].clone()).collect();
    let labels_20: Vec<LabelTriplet> = i20.iter().map(|&i| inputs.train[i].clone()).collect();
    let d80 = doc_ids(&labels_80);
    let d20 = doc_ids(&labels_20);
    let test_ids = doc_ids(&inputs.test);
    let (meta_train, meta_val) =
        meta_split_ids(&labels_20, seed).map_err(|e| e.in_stage(seed, "stage 3 meta split"))?;

    // Stage 2
    let stage2 = |e: Error| e.in_stage(seed, "stage 2 base families");
    let all_ids = inputs.all_doc_ids();
    let mut fits: Vec<FamilyFit> = Vec::with_capacity(cfg.families.len());
    for fam in &cfg.families {
        let fit = match fam.source {
            SourceKind::External => {
                let path = cfg.predictions_path(fam, seed).expect("validated");
                let sets = data::read_predictions(&path, &all_ids).map_err(stage2)?;
                let preds = select_external(sets, fam, &path).map_err(stage2)?;
                fit_base_family(
                    &fam.id,
                    FamilySource::External(&preds),
                    &labels_80,
                    &d20,
                    &test_ids,
                    seed,
                )
            }
            SourceKind::Embedding => fit_base_family(
                &fam.id,
                FamilySource::Embedding {
                    embeddings: &inputs.embeddings[&fam.id],
                    kind: fam.base,
                    use_svd: fam.use_svd,
                    candidates: &fam.svd_candidates,
                },
                &labels_80,
                &d20,
                &test_ids,
                seed,
            ),
        }
        .map_err(stage2)?;
        check_disjoint(&fit.fit_doc_ids, &[&d20, &test_ids]).map_err(stage2)?;
        fits.push(fit);
    }

    // Stage 3
    let stage3 = |e: Error| e.in_stage(seed, "stage 3 meta-models");
    let to_family_set = |pick: fn(&FamilyFit) -> &PredictionSet| -> Result<FamilySet> {
        FamilySet::new(
            fits.iter()
                .map(|f| MetaFeatureMatrix::from_predictions(pick(f)))
                .collect::<Result<Vec<_>>>()?,
        )
    };
    let fams_20 = to_family_set(|f| &f.meta_train).map_err(stage3)?;
    let fams_test = to_family_set(|f| &f.test).map_err(stage3)?;
    let train_cfg = cfg.train.with_seed(seed);

    let mut metrics = BTreeMap::new();
    let mut towers = BTreeMap::new();
    let mut dumps: Vec<PredictionSet> = Vec::new();
    for &kind in &cfg.towers {
        let model = train_tower(kind, &fams_20, &labels_20, &train_cfg).map_err(stage3)?;
        let pred = predict_tower(&model, &fams_test).map_err(stage3)?;
        let set = pred.to_prediction_set(kind.model_id()).map_err(stage3)?;
        metrics.insert(
            kind.model_id().to_string(),
            evaluate_prediction_set(&set, &inputs.test)?,
        );
        towers.insert(
            kind.model_id().to_string(),
            match model {
                TowerModel::A(m) => TowerAudit::A(m.run),
                TowerModel::B(m) => TowerAudit::B {
                    level1: m.level1_runs,
                    level2: m.level2_run,
                },
            },
        );
        dumps.push(set);
    }
    for fit in &fits {
        metrics.insert(
            format!("base:{}", fit.model_id),
            evaluate_prediction_set(&fit.test, &inputs.test)?,
        );
        dumps.push(fit.test.clone());
    }
    if cfg.include_baseline {
        let baseline = MajorityBaseline::fit(&gold_columns(&inputs.train))?;
        metrics.insert(MAJORITY_ID.to_string(), baseline.evaluate(&gold_columns(&inputs.test))?);
    }

    let dir = seed_dir(cfg, seed);
    let splits = SplitsArtifact {
        seed,
        d80: &d80,
        d20: &d20,
        meta_train: &meta_train,
        meta_val: &meta_val,
    };
    data::write_text(
        &dir.join("splits.json"),
        &(serde_json::to_string_pretty(&splits)? + "\n"),
    )?;
    if cfg.dump_predictions {
        write_predictions(dir.join("test_predictions.jsonl"), &dumps)?;
    }

    let audit = SeedAudit {
        seed,
        counts: StageCounts {
            train: inputs.train.len(),
            test: inputs.test.len(),
            d80: d80.len(),
            d20: d20.len(),
            meta_train: meta_train.len(),
            meta_val: meta_val.len(),
        },
        leakage_check: "passed",
        families: fits
            .iter()
            .zip(&cfg.families)
            .map(|(f, c)| FamilyAudit {
                id: f.model_id.clone(),
                source: c.source,
                fit_docs: f.fit_doc_ids.len(),
                svd: f.svd.clone(),
            })
            .collect(),
        towers,
    };
    log::info!("seed {seed}: done");
    Ok(SeedOutcome { seed, metrics, audit })
}

/// Merges per-seed outcomes, given in `seeds` order, into one report.
pub fn assemble_report(cfg: &PipelineConfig, outcomes: &[SeedOutcome]) -> Result<EvalReport> {
    let mut report = EvalReport::new(outcomes.iter().map(|o| o.seed).collect());
    let models: Vec<&String> = outcomes[0].metrics.keys().collect();
    for model in models {
        let per_seed = outcomes
            .iter()
            .map(|o| {
                o.metrics
                    .get(model)
                    .copied()
                    .ok_or_else(|| Error::Data(format!("seed {} has no result for {model}", o.seed)))
            })
            .collect::<Result<Vec<_>>>()?;
        report.add_model(model, &per_seed)?;
    }
    report.config_hash = Some(cfg.hash());
    let audits: Vec<&SeedAudit> = outcomes.iter().map(|o| &o.audit).collect();
    report.audit = Some(serde_json::json!({ "per_seed": audits }));
    Ok(report)
}

#[derive(Clone, Debug)]
pub struct PipelineOutcome {
    pub report: EvalReport,
    pub report_path: PathBuf,
}

/// Runs every seed (in parallel up to `cfg.jobs`) and writes `report.json`,
/// `report.md` and per-seed artifacts under the output directory. On failure
/// a `FAILED` marker with the error is left next to any partial artifacts.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutcome> {
    cfg.validate()?;
    let out = cfg.output_path();
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let marker = out.join(FAILURE_MARKER);
    if marker.exists() {
        std::fs::remove_file(&marker).map_err(|e| Error::io(&marker, e))?;
    }
    let result = run_all(cfg, &out);
    if let Err(e) = &result {
        data::write_text(&marker, &format!("{e}\n"))?;
    }
    result
}

fn run_all(cfg: &PipelineConfig, out: &Path) -> Result<PipelineOutcome> {
    let inputs = PipelineInputs::load(cfg)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    let results: Vec<Result<SeedOutcome>> =
        pool.install(|| cfg.seeds.par_iter().map(|&s| run_seed(cfg, &inputs, s)).collect());
    let outcomes = results.into_iter().collect::<Result<Vec<_>>>()?;

    let report = assemble_report(cfg, &outcomes)?;
    let report_path = out.join(REPORT_FILE);
    crate::metrics::write_report(&report, &report_path)?;
    data::write_text(&out.join(MARKDOWN_FILE), &report.to_markdown())?;
    Ok(PipelineOutcome { report, report_path })
}
