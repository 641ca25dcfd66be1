//! Domain types and the on-disk formats: labels CSV, predictions JSONL,
//! embeddings CSV and the article CSV used for timelines.
//!
//! Every parser has a `*_from_reader` twin so the same code runs on in-memory
//! text (the browser demo has no filesystem).

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const NUM_CLASSES: usize = 4;
pub const NUM_ASPECTS: usize = 3;

/// Tolerance on `|Σ p − 1|` for a probability row.
pub const SIMPLEX_TOLERANCE: f64 = 1e-6;

/// Sentiment toward the company mentioned in a document. The discriminant is
/// the column index used everywhere (score matrices, one-hot layouts).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SentimentClass {
    Irrelevant = 0,
    Negative = 1,
    Neutral = 2,
    Positive = 3,
}

impl SentimentClass {
    pub const ALL: [SentimentClass; NUM_CLASSES] = [
        SentimentClass::Irrelevant,
        SentimentClass::Negative,
        SentimentClass::Neutral,
        SentimentClass::Positive,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SentimentClass::Irrelevant => "irrelevant",
            SentimentClass::Negative => "negative",
            SentimentClass::Neutral => "neutral",
            SentimentClass::Positive => "positive",
        }
    }
}

impl fmt::Display for SentimentClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SentimentClass {
    type Err = Error;

    /// Case-insensitive; accepts full names and `irr`/`neg`/`neut`/`pos`.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "irrelevant" | "irr" => Ok(SentimentClass::Irrelevant),
            "negative" | "neg" => Ok(SentimentClass::Negative),
            "neutral" | "neut" => Ok(SentimentClass::Neutral),
            "positive" | "pos" => Ok(SentimentClass::Positive),
            other => Err(Error::Data(format!("unknown sentiment label {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Aspect {
    E = 0,
    S = 1,
    G = 2,
}

impl Aspect {
    pub const ALL: [Aspect; NUM_ASPECTS] = [Aspect::E, Aspect::S, Aspect::G];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Aspect::E => "E",
            Aspect::S => "S",
            Aspect::G => "G",
        }
    }
}

impl fmt::Display for Aspect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Aspect {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "E" | "e" => Ok(Aspect::E),
            "S" | "s" => Ok(Aspect::S),
            "G" | "g" => Ok(Aspect::G),
            other => Err(Error::Data(format!("unknown aspect {other:?}"))),
        }
    }
}

/// Gold (E, S, G) labels of one document.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LabelTriplet {
    pub doc_id: String,
    pub labels: [SentimentClass; NUM_ASPECTS],
}

impl LabelTriplet {
    pub fn new(doc_id: impl Into<String>, e: SentimentClass, s: SentimentClass, g: SentimentClass) -> Self {
        LabelTriplet {
            doc_id: doc_id.into(),
            labels: [e, s, g],
        }
    }

    pub fn get(&self, aspect: Aspect) -> SentimentClass {
        self.labels[aspect.index()]
    }
}

/// Class indices of one aspect, in label order.
pub fn aspect_column(labels: &[LabelTriplet], aspect: Aspect) -> Vec<usize> {
    labels.iter().map(|l| l.get(aspect).index()).collect()
}

pub fn doc_ids(labels: &[LabelTriplet]) -> Vec<String> {
    labels.iter().map(|l| l.doc_id.clone()).collect()
}

/// One line of a predictions file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AspectProbs {
    pub doc_id: String,
    pub model_id: String,
    pub aspect: Aspect,
    pub probs: [f64; NUM_CLASSES],
}

/// A base model's class distributions for all three aspects, row-aligned to
/// `doc_ids`.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionSet {
    pub model_id: String,
    pub doc_ids: Vec<String>,
    /// Indexed by `Aspect::index()`; each n × 4 with rows on the simplex.
    pub probs: [Matrix; NUM_ASPECTS],
}

impl PredictionSet {
    pub fn new(model_id: impl Into<String>, doc_ids: Vec<String>, probs: [Matrix; NUM_ASPECTS]) -> Result<Self> {
        let set = PredictionSet {
            model_id: model_id.into(),
            doc_ids,
            probs,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn aspect(&self, aspect: Aspect) -> &Matrix {
        &self.probs[aspect.index()]
    }

    pub fn validate(&self) -> Result<()> {
        for aspect in Aspect::ALL {
            let m = self.aspect(aspect);
            if m.shape() != (self.doc_ids.len(), NUM_CLASSES) {
                return Err(Error::Shape(format!(
                    "model {}: aspect {aspect} has shape {:?}, expected ({}, 4)",
                    self.model_id,
                    m.shape(),
                    self.doc_ids.len()
                )));
            }
            for (r, doc) in self.doc_ids.iter().enumerate() {
                check_simplex(m.row(r))
                    .map_err(|msg| Error::Data(format!("model {} doc {doc} aspect {aspect}: {msg}", self.model_id)))?;
            }
        }
        Ok(())
    }

    /// Rows for `ids`, in that order.
    pub fn subset(&self, ids: &[String]) -> Result<PredictionSet> {
        let index: HashMap<&str, usize> = self.doc_ids.iter().enumerate().map(|(i, d)| (d.as_str(), i)).collect();
        let mut rows = Vec::with_capacity(ids.len());
        let mut missing = Vec::new();
        for id in ids {
            match index.get(id.as_str()) {
                Some(&i) => rows.push(i),
                None => missing.push(id.clone()),
            }
        }
        if !missing.is_empty() {
            return Err(Error::Data(format!(
                "model {} has no predictions for {}",
                self.model_id,
                summarize_ids(&missing)
            )));
        }
        Ok(PredictionSet {
            model_id: self.model_id.clone(),
            doc_ids: ids.to_vec(),
            probs: self.probs.clone().map(|m| m.select_rows(&rows)),
        })
    }

    /// Flattens into file lines, document-major then E, S, G.
    pub fn to_lines(&self) -> Vec<AspectProbs> {
        let mut out = Vec::with_capacity(self.len() * NUM_ASPECTS);
        for (r, doc) in self.doc_ids.iter().enumerate() {
            for aspect in Aspect::ALL {
                let row = self.aspect(aspect).row(r);
                out.push(AspectProbs {
                    doc_id: doc.clone(),
                    model_id: self.model_id.clone(),
                    aspect,
                    probs: [row[0], row[1], row[2], row[3]],
                });
            }
        }
        out
    }
}

fn check_simplex(row: &[f64]) -> std::result::Result<(), String> {
    if let Some(p) = row.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(format!("probability {p} outside [0, 1]"));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
        return Err(format!("probabilities sum to {sum}, not 1"));
    }
    Ok(())
}

pub(crate) fn summarize_ids(ids: &[String]) -> String {
    const SHOW: usize = 10;
    let shown: Vec<&str> = ids.iter().take(SHOW).map(String::as_str).collect();
    if ids.len() > SHOW {
        format!("{} (and {} more)", shown.join(", "), ids.len() - SHOW)
    } else {
        shown.join(", ")
    }
}

/// Dense document embeddings from one encoder.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingSet {
    pub model_id: String,
    pub doc_ids: Vec<String>,
    pub features: Matrix,
}

impl EmbeddingSet {
    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    /// Rows for `ids`, in that order; errors on documents without an embedding.
    pub fn subset(&self, ids: &[String]) -> Result<EmbeddingSet> {
        let index: HashMap<&str, usize> = self.doc_ids.iter().enumerate().map(|(i, d)| (d.as_str(), i)).collect();
        let mut rows = Vec::with_capacity(ids.len());
        let mut missing = Vec::new();
        for id in ids {
            match index.get(id.as_str()) {
                Some(&i) => rows.push(i),
                None => missing.push(id.clone()),
            }
        }
        if !missing.is_empty() {
            return Err(Error::Data(format!(
                "embeddings {} lack {}",
                self.model_id,
                summarize_ids(&missing)
            )));
        }
        Ok(EmbeddingSet {
            model_id: self.model_id.clone(),
            doc_ids: ids.to_vec(),
            features: self.features.select_rows(&rows),
        })
    }
}

/// A dated news article with predicted per-aspect sentiment.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArticleRecord {
    pub doc_id: String,
    pub company: String,
    pub date: NaiveDate,
    pub labels: [SentimentClass; NUM_ASPECTS],
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn csv_reader<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader)
}

fn record_line(record: &csv::StringRecord) -> usize {
    record.position().map_or(0, |p| p.line() as usize)
}

fn expect_header(path: &Path, found: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    let found: Vec<&str> = found.iter().collect();
    if found != expected {
        return Err(Error::parse(
            path,
            1,
            format!("header must be `{}`, found `{}`", expected.join(","), found.join(",")),
        ));
    }
    Ok(())
}

pub const LABELS_HEADER: [&str; 4] = ["doc_id", "E", "S", "G"];

pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<LabelTriplet>> {
    let path = path.as_ref();
    read_labels_from_reader(open(path)?, path)
}

pub fn read_labels_from_reader<R: Read>(reader: R, source: &Path) -> Result<Vec<LabelTriplet>> {
    let mut rdr = csv_reader(reader);
    expect_header(source, rdr.headers()?, &LABELS_HEADER)?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record_line(&record);
        if record.len() != 4 {
            return Err(Error::parse(
                source,
                line,
                format!("expected 4 fields, found {}", record.len()),
            ));
        }
        let doc_id = record[0].to_string();
        if doc_id.is_empty() {
            return Err(Error::parse(source, line, "empty doc_id"));
        }
        let mut labels = [SentimentClass::Irrelevant; NUM_ASPECTS];
        for (slot, field) in labels.iter_mut().zip(record.iter().skip(1)) {
            *slot = field
                .parse()
                .map_err(|e: Error| Error::parse(source, line, e.to_string()))?;
        }
        if !seen.insert(doc_id.clone()) {
            return Err(Error::parse(source, line, format!("duplicate doc_id {doc_id:?}")));
        }
        out.push(LabelTriplet { doc_id, labels });
    }
    Ok(out)
}

pub fn write_labels(path: impl AsRef<Path>, labels: &[LabelTriplet]) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    write_labels_to(&mut w, labels).map_err(|e| Error::io(path, e))
}

pub fn write_labels_to<W: Write>(w: &mut W, labels: &[LabelTriplet]) -> std::io::Result<()> {
    writeln!(w, "{}", LABELS_HEADER.join(","))?;
    for l in labels {
        writeln!(w, "{},{},{},{}", l.doc_id, l.labels[0], l.labels[1], l.labels[2])?;
    }
    w.flush()
}

/// Reads a predictions JSONL file and aligns every model to `doc_order`.
///
/// Models are returned in order of first appearance. Each model must cover
/// every (document, aspect) pair of `doc_order` exactly once.
pub fn read_predictions(path: impl AsRef<Path>, doc_order: &[String]) -> Result<Vec<PredictionSet>> {
    let path = path.as_ref();
    read_predictions_from_reader(open(path)?, path, doc_order)
}

pub fn read_predictions_from_reader<R: BufRead>(
    reader: R,
    source: &Path,
    doc_order: &[String],
) -> Result<Vec<PredictionSet>> {
    let position: HashMap<&str, usize> = doc_order.iter().enumerate().map(|(i, d)| (d.as_str(), i)).collect();
    let n = doc_order.len();

    struct Pending {
        model_id: String,
        rows: [Vec<Option<[f64; NUM_CLASSES]>>; NUM_ASPECTS],
    }
    let mut models: Vec<Pending> = Vec::new();
    let mut model_index: HashMap<String, usize> = HashMap::new();

    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(source, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: AspectProbs = serde_json::from_str(&line).map_err(|e| Error::parse(source, line_no, e.to_string()))?;
        check_simplex(&rec.probs).map_err(|m| Error::parse(source, line_no, m))?;
        let &row = position
            .get(rec.doc_id.as_str())
            .ok_or_else(|| Error::parse(source, line_no, format!("unknown doc_id {:?}", rec.doc_id)))?;
        let slot = *model_index.entry(rec.model_id.clone()).or_insert_with(|| {
            models.push(Pending {
                model_id: rec.model_id.clone(),
                rows: std::array::from_fn(|_| vec![None; n]),
            });
            models.len() - 1
        });
        let cell = &mut models[slot].rows[rec.aspect.index()][row];
        if cell.is_some() {
            return Err(Error::parse(
                source,
                line_no,
                format!(
                    "duplicate prediction for doc {:?}, model {:?}, aspect {}",
                    rec.doc_id, rec.model_id, rec.aspect
                ),
            ));
        }
        *cell = Some(rec.probs);
    }

    let mut out = Vec::with_capacity(models.len());
    for pending in models {
        let mut probs = Vec::with_capacity(NUM_ASPECTS);
        for aspect in Aspect::ALL {
            let rows = &pending.rows[aspect.index()];
            if n > 0 && rows.iter().all(Option::is_none) {
                return Err(Error::Data(format!(
                    "{}: aspect {aspect} missing for model {}",
                    source.display(),
                    pending.model_id
                )));
            }
            let missing: Vec<String> = rows
                .iter()
                .zip(doc_order)
                .filter(|(r, _)| r.is_none())
                .map(|(_, d)| d.clone())
                .collect();
            if !missing.is_empty() {
                return Err(Error::Data(format!(
                    "{}: model {} aspect {aspect} lacks {}",
                    source.display(),
                    pending.model_id,
                    summarize_ids(&missing)
                )));
            }
            let data: Vec<f64> = rows.iter().flat_map(|r| r.unwrap()).collect();
            probs.push(Matrix::from_vec(n, NUM_CLASSES, data)?);
        }
        let probs: [Matrix; NUM_ASPECTS] = probs.try_into().expect("three aspects");
        out.push(PredictionSet {
            model_id: pending.model_id,
            doc_ids: doc_order.to_vec(),
            probs,
        });
    }
    Ok(out)
}

pub fn write_predictions(path: impl AsRef<Path>, sets: &[PredictionSet]) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    write_predictions_to(&mut w, sets).map_err(|e| Error::io(path, e))
}

pub fn write_predictions_to<W: Write>(w: &mut W, sets: &[PredictionSet]) -> std::io::Result<()> {
    for set in sets {
        for line in set.to_lines() {
            serde_json::to_writer(&mut *w, &line)?;
            w.write_all(b"\n")?;
        }
    }
    w.flush()
}

/// Reads an embeddings CSV with header `doc_id,f0,f1,…`. Values only need
/// to parse as finite numbers; magnitude problems surface in the numerics.
pub fn read_embeddings(path: impl AsRef<Path>, model_id: &str) -> Result<EmbeddingSet> {
    let path = path.as_ref();
    read_embeddings_from_reader(open(path)?, path, model_id)
}

pub fn read_embeddings_from_reader<R: Read>(reader: R, source: &Path, model_id: &str) -> Result<EmbeddingSet> {
    let mut rdr = csv_reader(reader);
    let header = rdr.headers()?.clone();
    let dim = header.len().saturating_sub(1);
    let well_formed = header.get(0) == Some("doc_id")
        && dim >= 1
        && header.iter().skip(1).enumerate().all(|(i, h)| h == format!("f{i}"));
    if !well_formed {
        return Err(Error::parse(
            source,
            1,
            "header must be `doc_id,f0,f1,…` with at least one feature",
        ));
    }
    let mut ids = Vec::new();
    let mut seen = HashSet::new();
    let mut data = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record_line(&record);
        if record.len() != dim + 1 {
            return Err(Error::parse(
                source,
                line,
                format!("expected {dim} features, found {}", record.len().saturating_sub(1)),
            ));
        }
        let id = record[0].to_string();
        if id.is_empty() || !seen.insert(id.clone()) {
            return Err(Error::parse(source, line, format!("empty or duplicate doc_id {id:?}")));
        }
        for (j, cell) in record.iter().skip(1).enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| Error::parse(source, line, format!("f{j}: {cell:?} is not a number")))?;
            if !v.is_finite() {
                return Err(Error::parse(source, line, format!("f{j}: {cell:?} is not finite")));
            }
            data.push(v);
        }
        ids.push(id);
    }
    let features = Matrix::from_vec(ids.len(), dim, data)?;
    Ok(EmbeddingSet {
        model_id: model_id.to_string(),
        doc_ids: ids,
        features,
    })
}

pub fn write_embeddings(path: impl AsRef<Path>, emb: &EmbeddingSet) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let write = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        let header: Vec<String> = std::iter::once("doc_id".to_string())
            .chain((0..emb.dim()).map(|j| format!("f{j}")))
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for (r, id) in emb.doc_ids.iter().enumerate() {
            write!(w, "{id}")?;
            for v in emb.features.row(r) {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        w.flush()
    };
    write(&mut w).map_err(|e| Error::io(path, e))
}

pub const ARTICLES_HEADER: [&str; 6] = ["doc_id", "company", "date", "E", "S", "G"];

/// Reads `doc_id,company,date,E,S,G` with ISO-8601 (`YYYY-MM-DD`) dates.
pub fn read_articles(path: impl AsRef<Path>) -> Result<Vec<ArticleRecord>> {
    let path = path.as_ref();
    read_articles_from_reader(open(path)?, path)
}

pub fn read_articles_from_reader<R: Read>(reader: R, source: &Path) -> Result<Vec<ArticleRecord>> {
    let mut rdr = csv_reader(reader);
    expect_header(source, rdr.headers()?, &ARTICLES_HEADER)?;
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record_line(&record);
        if record.len() != ARTICLES_HEADER.len() {
            return Err(Error::parse(
                source,
                line,
                format!("expected 6 fields, found {}", record.len()),
            ));
        }
        let date = NaiveDate::parse_from_str(&record[2], "%Y-%m-%d")
            .map_err(|e| Error::parse(source, line, format!("date {:?}: {e}", &record[2])))?;
        let mut labels = [SentimentClass::Irrelevant; NUM_ASPECTS];
        for (slot, field) in labels.iter_mut().zip(record.iter().skip(3)) {
            *slot = field
                .parse()
                .map_err(|e: Error| Error::parse(source, line, e.to_string()))?;
        }
        out.push(ArticleRecord {
            doc_id: record[0].to_string(),
            company: record[1].to_string(),
            date,
            labels,
        });
    }
    Ok(out)
}

pub fn write_articles_to<W: Write>(w: &mut W, articles: &[ArticleRecord]) -> std::io::Result<()> {
    writeln!(w, "{}", ARTICLES_HEADER.join(","))?;
    for a in articles {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            a.doc_id,
            a.company,
            a.date.format("%Y-%m-%d"),
            a.labels[0],
            a.labels[1],
            a.labels[2]
        )?;
    }
    w.flush()
}

/// One annotator's label for one aspect of one item.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Annotation {
    pub item_id: String,
    pub annotator_id: String,
    pub aspect: Aspect,
    pub label: SentimentClass,
}

pub const ANNOTATIONS_HEADER: [&str; 4] = ["item_id", "annotator_id", "aspect", "label"];

pub fn read_annotations(path: impl AsRef<Path>) -> Result<Vec<Annotation>> {
    let path = path.as_ref();
    read_annotations_from_reader(open(path)?, path)
}

/// Reads `item_id,annotator_id,aspect,label`; a repeated
/// (item, annotator, aspect) triple is an error.
pub fn read_annotations_from_reader<R: Read>(reader: R, source: &Path) -> Result<Vec<Annotation>> {
    let mut rdr = csv_reader(reader);
    expect_header(source, rdr.headers()?, &ANNOTATIONS_HEADER)?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record_line(&record);
        if record.len() != 4 {
            return Err(Error::parse(
                source,
                line,
                format!("expected 4 fields, found {}", record.len()),
            ));
        }
        let bad = |e: Error| Error::parse(source, line, e.to_string());
        let ann = Annotation {
            item_id: record[0].to_string(),
            annotator_id: record[1].to_string(),
            aspect: record[2].parse().map_err(bad)?,
            label: record[3].parse().map_err(bad)?,
        };
        if ann.item_id.is_empty() || ann.annotator_id.is_empty() {
            return Err(Error::parse(source, line, "empty item_id or annotator_id"));
        }
        if !seen.insert((ann.item_id.clone(), ann.annotator_id.clone(), ann.aspect)) {
            return Err(Error::parse(
                source,
                line,
                format!(
                    "annotator {:?} rated item {:?} aspect {} twice",
                    ann.annotator_id, ann.item_id, ann.aspect
                ),
            ));
        }
        out.push(ann);
    }
    Ok(out)
}

/// Writes `text` to `path`, creating parent directories.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}
