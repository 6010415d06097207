//! Cosine distance, Kullback–Leibler divergence, Jensen–Shannon distance and
//! the concept-averaged cell distance.
//!
//! KL and JS use base-2 logarithms, so the JS distance lies in `[0, 1]` and
//! two distributions with disjoint support are exactly 1 apart. The base only
//! rescales the values; normalized distance fields do not depend on it.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::freqmodel::{FrequencyModel, FrequencyVector};
use crate::grid::CellId;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("vectors have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("vectors belong to different concepts (`{0}` vs `{1}`)")]
    ConceptMismatch(String, String),
    #[error("vector is empty or all zero")]
    ZeroVector,
    #[error("component {0} is negative or not finite")]
    InvalidComponent(usize),
    #[error("P({0}) > 0 while Q({0}) = 0: divergence is infinite")]
    InfiniteDivergence(usize),
    #[error("unknown concept `{0}`")]
    UnknownConcept(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MetricKind {
    Cosine,
    JensenShannon,
}

impl MetricKind {
    pub const ALL: [MetricKind; 2] = [MetricKind::Cosine, MetricKind::JensenShannon];

    /// Distance between two relative-frequency vectors over the same variants.
    pub fn distance(&self, a: &[f64], b: &[f64]) -> Result<f64, MetricError> {
        match self {
            MetricKind::Cosine => cosine_distance(a, b),
            MetricKind::JensenShannon => jensen_shannon_distance(a, b),
        }
    }

    /// [`MetricKind::distance`] on [`FrequencyVector`]s, checking they share a concept.
    pub fn between(&self, u: &FrequencyVector, v: &FrequencyVector) -> Result<f64, MetricError> {
        if u.concept_id != v.concept_id {
            return Err(MetricError::ConceptMismatch(
                u.concept_id.clone(),
                v.concept_id.clone(),
            ));
        }
        self.distance(&u.values(), &v.values())
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MetricKind::Cosine => "cosine",
            MetricKind::JensenShannon => "jsd",
        })
    }
}

impl FromStr for MetricKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cosine" => Ok(MetricKind::Cosine),
            "jsd" | "jensen-shannon" => Ok(MetricKind::JensenShannon),
            other => Err(format!("unknown metric `{other}` (expected cosine or jsd)")),
        }
    }
}

/// Per-concept distance `d_i` between two cells.
#[derive(Debug, Clone, PartialEq)]
pub struct ConceptDistance {
    pub concept_id: String,
    pub value: f64,
}

/// Mean of the per-concept distances over the concepts both cells have data for.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AverageDistance {
    pub value: f64,
    pub n_concepts: usize,
}

fn check_pair(a: &[f64], b: &[f64]) -> Result<(), MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::LengthMismatch(a.len(), b.len()));
    }
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        if !(x.is_finite() && *x >= 0.0 && y.is_finite() && *y >= 0.0) {
            return Err(MetricError::InvalidComponent(i));
        }
    }
    Ok(())
}

/// `1 − u·v / (|u||v|)`, clamped to `[0, 1]`.
pub fn cosine_distance(u: &[f64], v: &[f64]) -> Result<f64, MetricError> {
    check_pair(u, v)?;
    let mut dot = 0.0;
    let mut uu = 0.0;
    let mut vv = 0.0;
    for (x, y) in u.iter().zip(v) {
        dot += x * y;
        uu += x * x;
        vv += y * y;
    }
    if uu == 0.0 || vv == 0.0 {
        return Err(MetricError::ZeroVector);
    }
    // sqrt(x*x) == x exactly, so identical vectors give a similarity of exactly 1
    let sim = dot / (uu * vv).sqrt();
    Ok((1.0 - sim).clamp(0.0, 1.0))
}

/// `Σ P(i) log₂(P(i)/Q(i))` with `0·log(0/q) = 0`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64, MetricError> {
    check_pair(p, q)?;
    let mut sum = 0.0;
    for (i, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if pi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            return Err(MetricError::InfiniteDivergence(i));
        }
        sum += pi * (pi / qi).log2();
    }
    Ok(sum)
}

/// `sqrt((KL(P‖M) + KL(Q‖M)) / 2)` with `M = (P + Q)/2`, in `[0, 1]`.
pub fn jensen_shannon_distance(p: &[f64], q: &[f64]) -> Result<f64, MetricError> {
    check_pair(p, q)?;
    if p.iter().all(|&x| x == 0.0) || q.iter().all(|&x| x == 0.0) {
        return Err(MetricError::ZeroVector);
    }
    // One pass accumulating both divergences against the midpoint; the two
    // sums swap roles when P and Q swap, which keeps the result symmetric.
    let mut kl_p = 0.0;
    let mut kl_q = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        let mi = (pi + qi) * 0.5;
        if pi > 0.0 {
            kl_p += pi * (pi / mi).log2();
        }
        if qi > 0.0 {
            kl_q += qi * (qi / mi).log2();
        }
    }
    let js = (kl_p + kl_q) * 0.5;
    Ok(js.max(0.0).sqrt().min(1.0))
}

/// Distance between cells `a` and `b` for one concept; `None` when either
/// cell has no data for it.
pub fn concept_distance(
    model: &FrequencyModel,
    a: CellId,
    b: CellId,
    concept_id: &str,
    kind: MetricKind,
) -> Result<Option<ConceptDistance>, MetricError> {
    let ci = model
        .lexicon()
        .concept_index(concept_id)
        .ok_or_else(|| MetricError::UnknownConcept(concept_id.to_string()))?;
    let (Some(u), Some(v)) = (
        model.tally(a, ci).and_then(|t| t.relative()),
        model.tally(b, ci).and_then(|t| t.relative()),
    ) else {
        return Ok(None);
    };
    Ok(Some(ConceptDistance {
        concept_id: concept_id.to_string(),
        value: kind.distance(&u, &v)?,
    }))
}

/// Concept-averaged distance `D(A,B) = Σ d_i / N` over the `N` concepts for
/// which both cells have data, summed in lexicon order. `None` when `N = 0`.
pub fn average_distance(
    model: &FrequencyModel,
    a: CellId,
    b: CellId,
    kind: MetricKind,
) -> Result<Option<AverageDistance>, MetricError> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (ci, ta) in model.concepts_in(a) {
        let Some(tb) = model.tally(b, ci) else {
            continue;
        };
        let (Some(u), Some(v)) = (ta.relative(), tb.relative()) else {
            continue;
        };
        sum += kind.distance(&u, &v)?;
        n += 1;
    }
    Ok((n > 0).then(|| AverageDistance {
        value: sum / n as f64,
        n_concepts: n,
    }))
}
