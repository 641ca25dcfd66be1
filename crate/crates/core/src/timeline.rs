//! Yearly sentiment counts per company and aspect.
//!
//! `net = positive − negative`; `normalized = net / max(1, relevant)` with
//! `relevant = positive + negative + neutral`.

use std::collections::BTreeMap;

use chrono::Datelike;
use serde::{Deserialize, Serialize};

use crate::data::{ArticleRecord, Aspect, SentimentClass};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct SentimentCounts {
    pub positive: u64,
    pub negative: u64,
    pub neutral: u64,
    pub irrelevant: u64,
}

impl SentimentCounts {
    pub fn add(&mut self, class: SentimentClass) {
        match class {
            SentimentClass::Positive => self.positive += 1,
            SentimentClass::Negative => self.negative += 1,
            SentimentClass::Neutral => self.neutral += 1,
            SentimentClass::Irrelevant => self.irrelevant += 1,
        }
    }

    pub fn relevant(&self) -> u64 {
        self.positive + self.negative + self.neutral
    }

    pub fn total(&self) -> u64 {
        self.relevant() + self.irrelevant
    }

    pub fn net(&self) -> i64 {
        self.positive as i64 - self.negative as i64
    }

    pub fn normalized(&self) -> f64 {
        self.net() as f64 / self.relevant().max(1) as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct YearPoint {
    pub year: i32,
    pub counts: SentimentCounts,
    pub net: i64,
    pub normalized: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TimelineSeries {
    pub company: String,
    pub aspect: Aspect,
    pub years: Vec<YearPoint>,
}

/// Restricts articles by company and by an inclusive year range.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TimelineFilter {
    pub companies: Vec<String>,
    pub from_year: Option<i32>,
    pub to_year: Option<i32>,
}

impl TimelineFilter {
    pub fn validate(&self) -> Result<()> {
        if let (Some(a), Some(b)) = (self.from_year, self.to_year) {
            if a > b {
                return Err(Error::InvalidInput(format!("year range {a}..{b} is empty")));
            }
        }
        Ok(())
    }

    fn keeps(&self, article: &ArticleRecord) -> bool {
        let year = article.date.year();
        (self.companies.is_empty() || self.companies.contains(&article.company))
            && self.from_year.is_none_or(|y| year >= y)
            && self.to_year.is_none_or(|y| year <= y)
    }
}

/// One series per company and aspect, sorted by company then E, S, G. Years
/// run without gaps over the filter range, or over the company's observed
/// years when the range is open.
pub fn build_timelines(articles: &[ArticleRecord], filter: &TimelineFilter) -> Result<Vec<TimelineSeries>> {
    filter.validate()?;
    let mut grouped: BTreeMap<&str, BTreeMap<i32, [SentimentCounts; 3]>> = BTreeMap::new();
    for a in articles.iter().filter(|a| filter.keeps(a)) {
        let slot = grouped.entry(&a.company).or_default().entry(a.date.year()).or_default();
        for aspect in Aspect::ALL {
            slot[aspect.index()].add(a.labels[aspect.index()]);
        }
    }
    let mut out = Vec::new();
    for (company, years) in grouped {
        let first = filter
            .from_year
            .unwrap_or(*years.keys().next().expect("non-empty group"));
        let last = filter
            .to_year
            .unwrap_or(*years.keys().next_back().expect("non-empty group"));
        for aspect in Aspect::ALL {
            let points = (first..=last)
                .map(|year| {
                    let counts = years.get(&year).map(|c| c[aspect.index()]).unwrap_or_default();
                    YearPoint {
                        year,
                        counts,
                        net: counts.net(),
                        normalized: counts.normalized(),
                    }
                })
                .collect();
            out.push(TimelineSeries {
                company: company.to_string(),
                aspect,
                years: points,
            });
        }
    }
    Ok(out)
}

pub const TIMELINE_HEADER: [&str; 9] = [
    "company",
    "aspect",
    "year",
    "positive",
    "negative",
    "neutral",
    "irrelevant",
    "net",
    "normalized_net_over_relevant",
];

pub fn timelines_to_csv(series: &[TimelineSeries]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TIMELINE_HEADER)?;
    for s in series {
        for p in &s.years {
            let c = p.counts;
            w.write_record([
                s.company.clone(),
                s.aspect.to_string(),
                p.year.to_string(),
                c.positive.to_string(),
                c.negative.to_string(),
                c.neutral.to_string(),
                c.irrelevant.to_string(),
                p.net.to_string(),
                p.normalized.to_string(),
            ])?;
        }
    }
    finish_csv(w)
}

/// Whole-period totals per company and aspect.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub company: String,
    pub aspect: Aspect,
    pub total: u64,
    pub relevant: u64,
    pub positive: u64,
    pub negative: u64,
    pub neutral: u64,
    pub irrelevant: u64,
}

impl SummaryRow {
    pub fn from_counts(company: &str, aspect: Aspect, c: SentimentCounts) -> SummaryRow {
        SummaryRow {
            company: company.to_string(),
            aspect,
            total: c.total(),
            relevant: c.relevant(),
            positive: c.positive,
            negative: c.negative,
            neutral: c.neutral,
            irrelevant: c.irrelevant,
        }
    }

    /// `relevant == positive + negative + neutral` and
    /// `relevant + irrelevant == total`.
    pub fn identities_hold(&self) -> bool {
        self.relevant == self.positive + self.negative + self.neutral && self.relevant + self.irrelevant == self.total
    }
}

pub fn summary_table(series: &[TimelineSeries]) -> Vec<SummaryRow> {
    series
        .iter()
        .map(|s| {
            let mut c = SentimentCounts::default();
            for p in &s.years {
                c.positive += p.counts.positive;
                c.negative += p.counts.negative;
                c.neutral += p.counts.neutral;
                c.irrelevant += p.counts.irrelevant;
            }
            SummaryRow::from_counts(&s.company, s.aspect, c)
        })
        .collect()
}

pub const SUMMARY_HEADER: [&str; 8] = [
    "company",
    "aspect",
    "total",
    "relevant",
    "positive",
    "negative",
    "neutral",
    "irrelevant",
];

/// Parses a summary table with [`SUMMARY_HEADER`] columns.
pub fn summary_from_csv(text: &str) -> Result<Vec<SummaryRow>> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != SUMMARY_HEADER {
        return Err(Error::Data(format!(
            "summary header {header:?}, expected {SUMMARY_HEADER:?}"
        )));
    }
    r.deserialize()
        .map(|row| row.map_err(|e| Error::Data(format!("summary table: {e}"))))
        .collect()
}

pub fn summary_to_csv(rows: &[SummaryRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SUMMARY_HEADER)?;
    for r in rows {
        w.write_record([
            r.company.clone(),
            r.aspect.to_string(),
            r.total.to_string(),
            r.relevant.to_string(),
            r.positive.to_string(),
            r.negative.to_string(),
            r.neutral.to_string(),
            r.irrelevant.to_string(),
        ])?;
    }
    finish_csv(w)
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Data(format!("CSV buffer: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Data(format!("CSV output is not UTF-8: {e}")))
}
