//! Distance matrices, reference-cell selection, normalized distance fields,
//! majority-variant maps and field comparison.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::freqmodel::{FrequencyModel, Threshold};
use crate::grid::{CellId, GridSpec};
use crate::metrics::{MetricError, MetricKind};

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("unknown concept `{0}`")]
    UnknownConcept(String),
    #[error("need at least 2 cells with data, found {0}")]
    TooFewCells(usize),
    #[error("distance matrix has no defined off-diagonal entry")]
    NoOffDiagonal,
    #[error("d_max is 0: every pair of cells is identical, nothing to normalize")]
    DegenerateMatrix,
    #[error("cell {0} is not part of the distance matrix")]
    UnknownCell(CellId),
    #[error("cell {0} has no defined distance to any other cell")]
    IsolatedReference(CellId),
    #[error("fields share {0} cells; at least 3 are needed")]
    TooFewCommonCells(usize),
    #[error("a field is constant over the common cells; rank correlation is undefined")]
    ConstantField,
    #[error("matrix values must be a symmetric {0}x{0} table with zero diagonal")]
    BadMatrix(usize),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// Which concepts a distance is computed over.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConceptScope {
    Concept(String),
    /// Concept-averaged distance.
    All,
}

impl fmt::Display for ConceptScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConceptScope::Concept(c) => f.write_str(c),
            ConceptScope::All => f.write_str("all"),
        }
    }
}

impl FromStr for ConceptScope {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(if s == "all" {
            ConceptScope::All
        } else {
            ConceptScope::Concept(s.to_string())
        })
    }
}

/// Symmetric matrix of pairwise cell distances. Undefined pairs (no shared
/// data) are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    cells: Vec<CellId>,
    values: Vec<Option<f64>>,
    kind: MetricKind,
    scope: ConceptScope,
    threshold: Option<Threshold>,
    spec: GridSpec,
    lexicon_digest: String,
}

impl DistanceMatrix {
    /// Builds a matrix from explicit values (row-major, `cells.len()²` entries).
    pub fn from_values(
        cells: Vec<CellId>,
        values: Vec<Option<f64>>,
        kind: MetricKind,
        scope: ConceptScope,
        spec: GridSpec,
    ) -> Result<Self, AnalysisError> {
        let n = cells.len();
        if values.len() != n * n {
            return Err(AnalysisError::BadMatrix(n));
        }
        for i in 0..n {
            if values[i * n + i].is_some_and(|d| d != 0.0) {
                return Err(AnalysisError::BadMatrix(n));
            }
            for j in i + 1..n {
                if values[i * n + j] != values[j * n + i] {
                    return Err(AnalysisError::BadMatrix(n));
                }
            }
        }
        Ok(DistanceMatrix {
            cells,
            values,
            kind,
            scope,
            threshold: None,
            spec,
            lexicon_digest: String::new(),
        })
    }

    pub fn cells(&self) -> &[CellId] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn kind(&self) -> MetricKind {
        self.kind
    }

    pub fn scope(&self) -> &ConceptScope {
        &self.scope
    }

    pub fn threshold(&self) -> Option<Threshold> {
        self.threshold
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn lexicon_digest(&self) -> &str {
        &self.lexicon_digest
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.values[i * self.cells.len() + j]
    }

    pub fn index_of(&self, cell: CellId) -> Option<usize> {
        self.cells
            .binary_search(&cell)
            .ok()
            .or_else(|| self.cells.iter().position(|c| *c == cell))
    }

    /// Copy with every entry multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> DistanceMatrix {
        DistanceMatrix {
            values: self.values.iter().map(|v| v.map(|d| d * factor)).collect(),
            ..self.clone()
        }
    }
}

/// Per-cell relative-frequency vectors, indexed by concept.
type CellProfile = Vec<Option<Vec<f64>>>;

fn profile(model: &FrequencyModel, cell: CellId, n_concepts: usize) -> CellProfile {
    let mut p = vec![None; n_concepts];
    for (ci, tally) in model.concepts_in(cell) {
        p[ci] = tally.relative();
    }
    p
}

fn pair_distance(
    a: &CellProfile,
    b: &CellProfile,
    concept: Option<usize>,
    kind: MetricKind,
) -> Result<Option<f64>, MetricError> {
    match concept {
        Some(ci) => match (&a[ci], &b[ci]) {
            (Some(u), Some(v)) => kind.distance(u, v).map(Some),
            _ => Ok(None),
        },
        None => {
            // same summation order as metrics::average_distance
            let mut sum = 0.0;
            let mut n = 0usize;
            for (u, v) in a.iter().zip(b) {
                if let (Some(u), Some(v)) = (u, v) {
                    sum += kind.distance(u, v)?;
                    n += 1;
                }
            }
            Ok((n > 0).then(|| sum / n as f64))
        }
    }
}

/// Pairwise distances between every cell with data in scope. Rows are
/// computed in parallel; the result does not depend on the thread count.
pub fn build_distance_matrix(
    model: &FrequencyModel,
    scope: &ConceptScope,
    kind: MetricKind,
) -> Result<DistanceMatrix, AnalysisError> {
    let lexicon = model.lexicon();
    let concept = match scope {
        ConceptScope::Concept(id) => Some(
            lexicon
                .concept_index(id)
                .ok_or_else(|| AnalysisError::UnknownConcept(id.clone()))?,
        ),
        ConceptScope::All => None,
    };
    let cells = match concept {
        Some(ci) => model.cells_with_concept(ci),
        None => model.data_cells(),
    };
    let n = cells.len();
    if n < 2 {
        return Err(AnalysisError::TooFewCells(n));
    }

    let n_concepts = lexicon.concepts().len();
    let profiles: Vec<CellProfile> = cells
        .par_iter()
        .map(|c| profile(model, *c, n_concepts))
        .collect();

    let upper: Vec<Vec<Option<f64>>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (i + 1..n)
                .map(|j| pair_distance(&profiles[i], &profiles[j], concept, kind))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<_, _>>()?;

    let mut values = vec![None; n * n];
    for (i, row) in upper.into_iter().enumerate() {
        values[i * n + i] = Some(0.0);
        for (k, d) in row.into_iter().enumerate() {
            let j = i + 1 + k;
            values[i * n + j] = d;
            values[j * n + i] = d;
        }
    }

    Ok(DistanceMatrix {
        cells,
        values,
        kind,
        scope: scope.clone(),
        threshold: model.threshold(),
        spec: *model.spec(),
        lexicon_digest: model.lexicon_digest().to_string(),
    })
}

/// The maximal-distance cell pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceSelection {
    pub i_max: CellId,
    pub j_max: CellId,
    pub d_max: f64,
}

/// Finds `d_max` over the defined off-diagonal entries. Ties go to the
/// smallest row index, then the smallest column index, in matrix cell order.
pub fn select_reference(matrix: &DistanceMatrix) -> Result<ReferenceSelection, AnalysisError> {
    let n = matrix.len();
    let mut best: Option<(usize, usize, f64)> = None;
    for i in 0..n {
        for j in i + 1..n {
            if let Some(d) = matrix.get(i, j) {
                if best.is_none_or(|(_, _, b)| d > b) {
                    best = Some((i, j, d));
                }
            }
        }
    }
    let (i, j, d) = best.ok_or(AnalysisError::NoOffDiagonal)?;
    Ok(ReferenceSelection {
        i_max: matrix.cells[i],
        j_max: matrix.cells[j],
        d_max: d,
    })
}

/// Distances from one reference cell, normalized by the matrix maximum.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceField {
    pub reference: CellId,
    pub entries: BTreeMap<CellId, f64>,
    pub kind: MetricKind,
    pub scope: ConceptScope,
    pub threshold: Option<Threshold>,
    pub d_max: f64,
}

/// `m(reference, c) / d_max` for every cell `c` with a defined distance to the reference.
pub fn distance_field(
    matrix: &DistanceMatrix,
    reference: CellId,
) -> Result<DistanceField, AnalysisError> {
    let r = matrix
        .index_of(reference)
        .ok_or(AnalysisError::UnknownCell(reference))?;
    let d_max = select_reference(matrix)?.d_max;
    if d_max <= 0.0 {
        return Err(AnalysisError::DegenerateMatrix);
    }
    let mut entries = BTreeMap::new();
    for (j, cell) in matrix.cells.iter().enumerate() {
        if j == r {
            continue;
        }
        if let Some(d) = matrix.get(r, j) {
            entries.insert(*cell, (d / d_max).clamp(0.0, 1.0));
        }
    }
    if entries.is_empty() {
        return Err(AnalysisError::IsolatedReference(reference));
    }
    entries.insert(reference, 0.0);
    Ok(DistanceField {
        reference,
        entries,
        kind: matrix.kind,
        scope: matrix.scope.clone(),
        threshold: matrix.threshold,
        d_max,
    })
}

/// Per-cell winning variant of one concept.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MajorityMap {
    pub concept_id: String,
    pub entries: BTreeMap<CellId, String>,
    /// Cells where several variants shared the maximal count; the first in
    /// lexicon order was chosen.
    pub ties: BTreeSet<CellId>,
}

/// Variant with maximal absolute count per data cell. Cells without data are absent.
pub fn majority_map(
    model: &FrequencyModel,
    concept_id: &str,
) -> Result<MajorityMap, AnalysisError> {
    let lexicon = model.lexicon();
    let ci = lexicon
        .concept_index(concept_id)
        .ok_or_else(|| AnalysisError::UnknownConcept(concept_id.to_string()))?;
    let concept = lexicon.concept(ci);
    let mut entries = BTreeMap::new();
    let mut ties = BTreeSet::new();
    for cell in model.cells_with_concept(ci) {
        let tally = model.tally(cell, ci).expect("cell listed with data");
        let mut best = 0;
        for (i, &c) in tally.counts.iter().enumerate() {
            if c > tally.counts[best] {
                best = i;
            }
        }
        let top = tally.counts[best];
        if tally.counts.iter().filter(|&&c| c == top).count() > 1 {
            ties.insert(cell);
        }
        entries.insert(cell, concept.variants()[best].id().to_string());
    }
    Ok(MajorityMap {
        concept_id: concept_id.to_string(),
        entries,
        ties,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldComparison {
    pub spearman: f64,
    pub common_cells: usize,
}

fn common_values(
    f1: &DistanceField,
    f2: &DistanceField,
) -> Result<(Vec<f64>, Vec<f64>), AnalysisError> {
    let (a, b): (Vec<f64>, Vec<f64>) = f1
        .entries
        .iter()
        .filter_map(|(c, v)| f2.entries.get(c).map(|w| (*v, *w)))
        .unzip();
    if a.len() < 3 {
        return Err(AnalysisError::TooFewCommonCells(a.len()));
    }
    Ok((a, b))
}

/// Ranks starting at 1; tied values share their average rank.
fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation over the cells both fields define.
pub fn compare_fields(
    f1: &DistanceField,
    f2: &DistanceField,
) -> Result<FieldComparison, AnalysisError> {
    let (a, b) = common_values(f1, f2)?;
    let (ra, rb) = (ranks(&a), ranks(&b));
    let n = ra.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return Err(AnalysisError::ConstantField);
    }
    Ok(FieldComparison {
        spearman: (cov / (va.sqrt() * vb.sqrt())).clamp(-1.0, 1.0),
        common_cells: a.len(),
    })
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Fraction of common cells that land on the same side of each field's own
/// median (strictly above vs. at-or-below).
pub fn median_split_agreement(
    f1: &DistanceField,
    f2: &DistanceField,
) -> Result<f64, AnalysisError> {
    let (a, b) = common_values(f1, f2)?;
    let (ma, mb) = (median(&a), median(&b));
    let same = a
        .iter()
        .zip(&b)
        .filter(|(x, y)| (**x > ma) == (**y > mb))
        .count();
    Ok(same as f64 / a.len() as f64)
}
