//! Iterative multilabel stratification over one-hot (E, S, G) labels.
//!
//! Each aspect contributes four indicator columns (`4·aspect + class`), so a
//! document always carries exactly three of the twelve labels. The greedy loop
//! repeatedly takes the label with the fewest unassigned documents and hands
//! each of those documents to the part that still wants that label most.
//! Ties go to the part with the larger remaining capacity, then to a seeded
//! random pick.
//!
//! A refinement pass first moves single documents until every part holds the
//! largest-remainder rounding of `fraction·n` documents, each move chosen to
//! raise the summed squared deviation of indicator counts from their targets
//! the least. It then swaps documents between parts while that strictly lowers
//! the same sum. Swaps keep every part's size.

use serde::{Deserialize, Serialize};

use crate::data::{LabelTriplet, NUM_ASPECTS, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::linalg::Rng;

pub const NUM_INDICATORS: usize = NUM_ASPECTS * NUM_CLASSES;

const RNG_STREAM: u64 = 0x5354_5241_5449_4659;
const TIE_EPS: f64 = 1e-9;

/// Row `i` holds a 1 at `4·aspect + class` for each aspect of document `i`.
pub fn one_hot_expand(labels: &[LabelTriplet]) -> Vec<[u8; NUM_INDICATORS]> {
    labels
        .iter()
        .map(|l| {
            let mut row = [0u8; NUM_INDICATORS];
            for col in indicator_columns(l) {
                row[col] = 1;
            }
            row
        })
        .collect()
}

fn indicator_columns(l: &LabelTriplet) -> [usize; NUM_ASPECTS] {
    std::array::from_fn(|a| a * NUM_CLASSES + l.labels[a].index())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub fractions: Vec<f64>,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(fractions: Vec<f64>, seed: u64) -> Result<Self> {
        let spec = SplitSpec { fractions, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.fractions.is_empty() {
            return Err(Error::InvalidInput("at least one split fraction is required".into()));
        }
        if let Some(f) = self.fractions.iter().find(|f| !f.is_finite() || **f <= 0.0) {
            return Err(Error::InvalidInput(format!("split fraction {f} must be positive")));
        }
        let sum: f64 = self.fractions.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!("split fractions sum to {sum}, not 1")));
        }
        Ok(())
    }
}

/// Document ids per part, each in input order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitResult {
    pub parts: Vec<Vec<String>>,
}

/// Index-level split; `parts[j]` lists row indices in ascending order.
pub fn stratified_indices(labels: &[LabelTriplet], spec: &SplitSpec) -> Result<Vec<Vec<usize>>> {
    spec.validate()?;
    let n = labels.len();
    let k = spec.fractions.len();
    if n == 0 {
        return Err(Error::InvalidInput("cannot split an empty label set".into()));
    }
    if n < k {
        return Err(Error::InvalidInput(format!("{n} documents cannot fill {k} parts")));
    }

    let columns: Vec<[usize; NUM_ASPECTS]> = labels.iter().map(indicator_columns).collect();
    let mut label_count = [0usize; NUM_INDICATORS];
    for cols in &columns {
        for &c in cols {
            label_count[c] += 1;
        }
    }

    let mut rng = Rng::stream(spec.seed, RNG_STREAM);
    let order = rng.shuffle(n);

    let mut capacity: Vec<f64> = spec.fractions.iter().map(|f| f * n as f64).collect();
    let mut desire: Vec<Vec<f64>> = label_count
        .iter()
        .map(|&c| spec.fractions.iter().map(|f| f * c as f64).collect())
        .collect();
    let mut remaining = label_count;
    let mut assignment: Vec<Option<usize>> = vec![None; n];
    let mut unassigned = n;

    while unassigned > 0 {
        let label = (0..NUM_INDICATORS)
            .filter(|&l| remaining[l] > 0)
            .min_by_key(|&l| remaining[l])
            .expect("unassigned documents always carry a label");

        for &doc in &order {
            if assignment[doc].is_some() || !columns[doc].contains(&label) {
                continue;
            }
            let part = choose_part(&desire[label], &capacity, &mut rng);
            assignment[doc] = Some(part);
            unassigned -= 1;
            capacity[part] -= 1.0;
            for &c in &columns[doc] {
                desire[c][part] -= 1.0;
                remaining[c] -= 1;
            }
        }
    }

    let mut assignment: Vec<usize> = assignment
        .into_iter()
        .map(|p| p.expect("every document assigned"))
        .collect();
    refine(&columns, &mut assignment, &spec.fractions, &order);

    let mut parts = vec![Vec::new(); k];
    for (doc, part) in assignment.into_iter().enumerate() {
        parts[part].push(doc);
    }
    Ok(parts)
}

const NUM_PATTERNS: usize = NUM_CLASSES * NUM_CLASSES * NUM_CLASSES;

fn pattern_columns(t: usize) -> [usize; NUM_ASPECTS] {
    [t / 16, 4 + (t / 4) % 4, 8 + t % 4]
}

/// Largest-remainder rounding of `fractions·n`; ties go to the lower index.
fn target_sizes(fractions: &[f64], n: usize) -> Vec<usize> {
    let exact: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut sizes: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut by_remainder: Vec<usize> = (0..fractions.len()).collect();
    by_remainder.sort_by(|&a, &b| {
        (exact[b] - exact[b].floor())
            .total_cmp(&(exact[a] - exact[a].floor()))
            .then(a.cmp(&b))
    });
    let short = n.saturating_sub(sizes.iter().sum());
    for &j in by_remainder.iter().cycle().take(short) {
        sizes[j] += 1;
    }
    sizes
}

/// Size-fixing moves, then best-improvement swaps between documents of different label patterns in
/// different parts. Documents are picked in `order`, so the result is a pure
/// function of the greedy assignment.
fn refine(columns: &[[usize; NUM_ASPECTS]], assignment: &mut [usize], fractions: &[f64], order: &[usize]) {
    let k = fractions.len();
    let pattern = |cols: &[usize; NUM_ASPECTS]| cols[0] * 16 + (cols[1] - 4) * 4 + (cols[2] - 8);
    let mut cells: Vec<Vec<Vec<usize>>> = vec![vec![Vec::new(); k]; NUM_PATTERNS];
    for &doc in order {
        cells[pattern(&columns[doc])][assignment[doc]].push(doc);
    }
    let mut totals = [0.0; NUM_INDICATORS];
    let mut dev = vec![[0.0; NUM_INDICATORS]; k];
    for (doc, cols) in columns.iter().enumerate() {
        for &c in cols {
            totals[c] += 1.0;
            dev[assignment[doc]][c] += 1.0;
        }
    }
    for (j, row) in dev.iter_mut().enumerate() {
        for (l, d) in row.iter_mut().enumerate() {
            *d -= fractions[j] * totals[l];
        }
    }

    // Change in one part's squared deviation when a document of pattern
    // `out` leaves it and one of pattern `inn` joins.
    let part_delta = |row: &[f64; NUM_INDICATORS], out: usize, inn: usize| {
        let mut delta = [0.0; NUM_INDICATORS];
        for c in pattern_columns(out) {
            delta[c] -= 1.0;
        }
        for c in pattern_columns(inn) {
            delta[c] += 1.0;
        }
        (0..NUM_INDICATORS)
            .map(|l| delta[l] * (2.0 * row[l] + delta[l]))
            .sum::<f64>()
    };

    let target = target_sizes(fractions, columns.len());
    let mut sizes = vec![0usize; k];
    for &p in assignment.iter() {
        sizes[p] += 1;
    }
    while let Some(p) = (0..k).find(|&p| sizes[p] > target[p]) {
        let mut best: Option<(f64, usize, usize)> = None;
        for t in 0..NUM_PATTERNS {
            if cells[t][p].is_empty() {
                continue;
            }
            for q in (0..k).filter(|&q| sizes[q] < target[q]) {
                let cost: f64 = pattern_columns(t)
                    .iter()
                    .map(|&c| 2.0 * (dev[q][c] - dev[p][c]) + 2.0)
                    .sum();
                if best.is_none_or(|b| cost < b.0 - TIE_EPS) {
                    best = Some((cost, t, q));
                }
            }
        }
        let (_, t, q) = best.expect("an oversized part implies an undersized one");
        let doc = cells[t][p].remove(0);
        cells[t][q].push(doc);
        assignment[doc] = q;
        sizes[p] -= 1;
        sizes[q] += 1;
        for c in pattern_columns(t) {
            dev[p][c] -= 1.0;
            dev[q][c] += 1.0;
        }
    }

    for _ in 0..columns.len().max(1) * 4 {
        let mut best: Option<(f64, usize, usize, usize, usize)> = None;
        for t in 0..NUM_PATTERNS {
            for u in t + 1..NUM_PATTERNS {
                for p in 0..k {
                    if cells[t][p].is_empty() {
                        continue;
                    }
                    for q in 0..k {
                        if q == p || cells[u][q].is_empty() {
                            continue;
                        }
                        let gain = part_delta(&dev[p], t, u) + part_delta(&dev[q], u, t);
                        if gain < best.map_or(-TIE_EPS, |b| b.0) {
                            best = Some((gain, t, u, p, q));
                        }
                    }
                }
            }
        }
        let Some((_, t, u, p, q)) = best else { break };
        let a = cells[t][p].remove(0);
        let b = cells[u][q].remove(0);
        cells[t][q].push(a);
        cells[u][p].push(b);
        assignment[a] = q;
        assignment[b] = p;
        for c in pattern_columns(t) {
            dev[p][c] -= 1.0;
            dev[q][c] += 1.0;
        }
        for c in pattern_columns(u) {
            dev[q][c] -= 1.0;
            dev[p][c] += 1.0;
        }
    }
}

fn choose_part(desire: &[f64], capacity: &[f64], rng: &mut Rng) -> usize {
    let best_desire = desire.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tied: Vec<usize> = (0..desire.len())
        .filter(|&j| desire[j] >= best_desire - TIE_EPS)
        .collect();
    if tied.len() == 1 {
        return tied[0];
    }
    let best_capacity = tied.iter().map(|&j| capacity[j]).fold(f64::NEG_INFINITY, f64::max);
    let tied: Vec<usize> = tied
        .into_iter()
        .filter(|&j| capacity[j] >= best_capacity - TIE_EPS)
        .collect();
    if tied.len() == 1 {
        tied[0]
    } else {
        tied[rng.below(tied.len())]
    }
}

pub fn iterative_stratified_split(labels: &[LabelTriplet], spec: &SplitSpec) -> Result<SplitResult> {
    let parts = stratified_indices(labels, spec)?;
    Ok(SplitResult {
        parts: parts
            .into_iter()
            .map(|idx| idx.into_iter().map(|i| labels[i].doc_id.clone()).collect())
            .collect(),
    })
}

/// Stratified 80/20 holdout: `(train_ids, validation_ids)`.
pub fn split_80_20(labels: &[LabelTriplet], seed: u64) -> Result<(Vec<String>, Vec<String>)> {
    let spec = SplitSpec::new(vec![0.8, 0.2], seed)?;
    let mut parts = iterative_stratified_split(labels, &spec)?.parts.into_iter();
    let train = parts.next().expect("two parts");
    let val = parts.next().expect("two parts");
    Ok((train, val))
}

/// Index form of [`split_80_20`].
pub fn split_indices_80_20(labels: &[LabelTriplet], seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let spec = SplitSpec::new(vec![0.8, 0.2], seed)?;
    let mut parts = stratified_indices(labels, &spec)?.into_iter();
    Ok((parts.next().expect("two parts"), parts.next().expect("two parts")))
}
