//! Deterministic synthetic data: label sets with given marginals, base-model
//! prediction families of controllable quality, embeddings, news corpora with
//! given summary counts, and a ready-to-run pipeline fixture.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;

use crate::data::{
    self, ArticleRecord, EmbeddingSet, LabelTriplet, PredictionSet, SentimentClass, NUM_ASPECTS, NUM_CLASSES,
};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Rng};
use crate::timeline::SentimentCounts;

/// Class counts (irrelevant, negative, neutral, positive) per aspect E, S, G
/// of the annotated training split.
pub const TABLE2_TRAIN: [[usize; NUM_CLASSES]; NUM_ASPECTS] =
    [[288, 41, 39, 72], [144, 48, 69, 179], [193, 78, 86, 83]];
/// Same layout for the test split.
pub const TABLE2_TEST: [[usize; NUM_CLASSES]; NUM_ASPECTS] = [[77, 6, 12, 15], [37, 15, 22, 36], [53, 23, 19, 15]];

/// Company summary rows of the media-monitoring corpus, per aspect E, S, G
/// as (positive, negative, neutral, irrelevant).
pub const TABLE7: [(&str, [[u64; 4]; NUM_ASPECTS]); 4] = [
    (
        "Talum",
        [[460, 448, 326, 2838], [952, 900, 594, 1626], [512, 1080, 812, 1668]],
    ),
    (
        "Sdh",
        [
            [668, 838, 998, 27834],
            [1892, 7908, 5958, 14580],
            [2082, 14610, 10948, 2698],
        ],
    ),
    (
        "Cinkarna",
        [[364, 794, 358, 9546], [666, 1178, 910, 8308], [418, 1696, 1388, 7560]],
    ),
    (
        "Salonit",
        [[356, 862, 190, 6618], [464, 970, 376, 6216], [234, 1182, 554, 6056]],
    ),
];

/// Printed totals and relevant counts of the same rows.
pub const TABLE7_TOTALS: [(&str, u64, [u64; NUM_ASPECTS]); 4] = [
    ("Talum", 4072, [1234, 2446, 2404]),
    ("Sdh", 30338, [2504, 15758, 27640]),
    ("Cinkarna", 11062, [1516, 2754, 3502]),
    ("Salonit", 8026, [1408, 1810, 1970]),
];

pub fn table7_counts(row: &[[u64; 4]; NUM_ASPECTS]) -> [SentimentCounts; NUM_ASPECTS] {
    row.map(|[positive, negative, neutral, irrelevant]| SentimentCounts {
        positive,
        negative,
        neutral,
        irrelevant,
    })
}

fn class(i: usize) -> SentimentClass {
    SentimentClass::from_index(i).expect("class index below 4")
}

/// Documents whose per-aspect class counts equal `marginals` exactly; the
/// pairing across aspects is a seeded shuffle.
pub fn labels_from_marginals(
    prefix: &str,
    marginals: &[[usize; NUM_CLASSES]; NUM_ASPECTS],
    seed: u64,
) -> Result<Vec<LabelTriplet>> {
    let n: usize = marginals[0].iter().sum();
    if marginals.iter().any(|m| m.iter().sum::<usize>() != n) {
        return Err(Error::InvalidInput("aspect marginals have different totals".into()));
    }
    let columns: Vec<Vec<usize>> = marginals
        .iter()
        .enumerate()
        .map(|(a, counts)| {
            let mut col: Vec<usize> = counts
                .iter()
                .enumerate()
                .flat_map(|(c, &k)| std::iter::repeat_n(c, k))
                .collect();
            Rng::stream(seed, a as u64).shuffle_in_place(&mut col);
            col
        })
        .collect();
    Ok((0..n)
        .map(|i| {
            LabelTriplet::new(
                format!("{prefix}{i:04}"),
                class(columns[0][i]),
                class(columns[1][i]),
                class(columns[2][i]),
            )
        })
        .collect())
}

/// `n` documents with classes drawn from the training-split proportions.
pub fn random_labels(prefix: &str, n: usize, seed: u64) -> Vec<LabelTriplet> {
    let mut rng = Rng::new(seed);
    let draw = |a: usize, rng: &mut Rng| {
        let total: usize = TABLE2_TRAIN[a].iter().sum();
        let mut u = rng.below(total);
        for (c, &k) in TABLE2_TRAIN[a].iter().enumerate() {
            if u < k {
                return class(c);
            }
            u -= k;
        }
        unreachable!("u < total")
    };
    (0..n)
        .map(|i| {
            let (e, s, g) = (draw(0, &mut rng), draw(1, &mut rng), draw(2, &mut rng));
            LabelTriplet::new(format!("{prefix}{i:04}"), e, s, g)
        })
        .collect()
}

/// Probability 1 on the true class of every aspect.
pub fn oracle_family(model_id: &str, labels: &[LabelTriplet]) -> PredictionSet {
    noisy_family(model_id, labels, 1.0, 1.0, 0)
}

/// Each (doc, aspect) row puts `confidence` on a predicted class that equals
/// the true class with probability `accuracy` and is otherwise drawn
/// uniformly; the rest of the mass is spread evenly.
pub fn noisy_family(
    model_id: &str,
    labels: &[LabelTriplet],
    accuracy: f64,
    confidence: f64,
    seed: u64,
) -> PredictionSet {
    let mut rng = Rng::new(seed);
    let rest = (1.0 - confidence) / (NUM_CLASSES - 1) as f64;
    let probs = std::array::from_fn(|a| {
        let mut m = Matrix::zeros(labels.len(), NUM_CLASSES);
        for (r, l) in labels.iter().enumerate() {
            let truth = l.labels[a].index();
            let predicted = if rng.next_f64() < accuracy {
                truth
            } else {
                rng.below(NUM_CLASSES)
            };
            for c in 0..NUM_CLASSES {
                m[(r, c)] = if c == predicted { confidence } else { rest };
            }
        }
        m
    });
    PredictionSet::new(model_id, data::doc_ids(labels), probs).expect("rows are on the simplex")
}

/// Sum of per-(aspect, class) Gaussian centroids plus isotropic noise.
pub fn embeddings(model_id: &str, labels: &[LabelTriplet], dim: usize, noise: f64, seed: u64) -> EmbeddingSet {
    let mut rng = Rng::stream(seed, 11);
    let centroids: Vec<Vec<f64>> = (0..NUM_ASPECTS * NUM_CLASSES)
        .map(|_| (0..dim).map(|_| rng.normal()).collect())
        .collect();
    let mut data = Vec::with_capacity(labels.len() * dim);
    for l in labels {
        for j in 0..dim {
            let signal: f64 = (0..NUM_ASPECTS)
                .map(|a| centroids[a * NUM_CLASSES + l.labels[a].index()][j])
                .sum();
            data.push(signal + noise * rng.normal());
        }
    }
    EmbeddingSet {
        model_id: model_id.to_string(),
        doc_ids: data::doc_ids(labels),
        features: Matrix::from_vec(labels.len(), dim, data).expect("finite synthetic embeddings"),
    }
}

/// Articles whose per-aspect totals equal `counts`, dated across
/// `first_year..=last_year`.
pub fn corpus_from_counts(
    company: &str,
    counts: &[SentimentCounts; NUM_ASPECTS],
    first_year: i32,
    last_year: i32,
    seed: u64,
) -> Result<Vec<ArticleRecord>> {
    let n = counts[0].total();
    if counts.iter().any(|c| c.total() != n) {
        return Err(Error::InvalidInput(format!("{company}: aspect totals differ")));
    }
    if first_year > last_year {
        return Err(Error::InvalidInput(format!(
            "year range {first_year}..={last_year} is empty"
        )));
    }
    let columns: Vec<Vec<SentimentClass>> = counts
        .iter()
        .enumerate()
        .map(|(a, c)| {
            let mut col = Vec::with_capacity(n as usize);
            for (cls, k) in [
                (SentimentClass::Positive, c.positive),
                (SentimentClass::Negative, c.negative),
                (SentimentClass::Neutral, c.neutral),
                (SentimentClass::Irrelevant, c.irrelevant),
            ] {
                col.extend(std::iter::repeat_n(cls, k as usize));
            }
            Rng::stream(seed, a as u64).shuffle_in_place(&mut col);
            col
        })
        .collect();
    let mut rng = Rng::stream(seed, 99);
    let span = (last_year - first_year + 1) as usize;
    Ok((0..n as usize)
        .map(|i| {
            let year = first_year + rng.below(span) as i32;
            let month = 1 + rng.below(12) as u32;
            let day = 1 + rng.below(28) as u32;
            ArticleRecord {
                doc_id: format!("{company}-{i:06}"),
                company: company.to_string(),
                date: NaiveDate::from_ymd_opt(year, month, day).expect("day 1..=28 is valid"),
                labels: [columns[0][i], columns[1][i], columns[2][i]],
            }
        })
        .collect())
}

/// Shape of a generated pipeline fixture.
#[derive(Clone, Debug, PartialEq)]
pub struct FixtureSpec {
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
    /// One external family per entry, as (accuracy, confidence).
    pub external: Vec<(f64, f64)>,
    /// Embedding dimension for an additional embedding family, if any.
    pub embedding_dim: Option<usize>,
    pub seeds: Vec<u64>,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        FixtureSpec {
            n_train: 240,
            n_test: 60,
            seed: 7,
            external: vec![(0.9, 0.8), (0.8, 0.7)],
            embedding_dim: None,
            seeds: vec![0, 100, 200],
        }
    }
}

/// Writes labels, predictions, optional embeddings and `config.json` into
/// `dir`; returns the config path.
pub fn write_fixture(dir: &Path, spec: &FixtureSpec) -> Result<PathBuf> {
    let train = random_labels("tr", spec.n_train, spec.seed);
    let test = random_labels("te", spec.n_test, spec.seed.wrapping_add(1));
    data::write_labels(dir.join("labels_train.csv"), &train)?;
    data::write_labels(dir.join("labels_test.csv"), &test)?;
    let all: Vec<LabelTriplet> = train.iter().chain(&test).cloned().collect();

    let mut families = Vec::new();
    for (i, &(acc, conf)) in spec.external.iter().enumerate() {
        let id = format!("ext{i}");
        let set = noisy_family(&id, &all, acc, conf, spec.seed.wrapping_add(10 + i as u64));
        let file = format!("{id}.jsonl");
        data::write_predictions(dir.join(&file), &[set])?;
        families.push(serde_json::json!({"id": id, "source": "external", "predictions": file}));
    }
    if let Some(dim) = spec.embedding_dim {
        let emb = embeddings("emb", &all, dim, 2.0, spec.seed.wrapping_add(5));
        data::write_embeddings(dir.join("embeddings.csv"), &emb)?;
        families.push(serde_json::json!({
            "id": "emb", "source": "embedding", "embeddings": "embeddings.csv",
            "use_svd": true, "base": "softmax_regression", "svd_candidates": [4, 8, 16, 32]
        }));
    }
    let config = serde_json::json!({
        "schema_version": 1,
        "train_labels": "labels_train.csv",
        "test_labels": "labels_test.csv",
        "families": families,
        "towers": ["A", "B"],
        "seeds": spec.seeds,
        "output_dir": "out",
    });
    let path = dir.join("config.json");
    data::write_text(&path, &(serde_json::to_string_pretty(&config)? + "\n"))?;
    Ok(path)
}
