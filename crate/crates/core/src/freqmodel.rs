//! Per-cell, per-concept variant counts.
//!
//! The model is the persisted intermediate between ingestion and analysis.
//! It keeps two tallies per `(cell, concept)`: the count of each variant and
//! the number of distinct tweets that matched the concept at all. A tweet
//! that uses two variants of one concept adds one to each variant but only
//! one to the tweet total.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;
use std::sync::Arc;

use thiserror::Error;

use crate::grid::{CellId, GridSpec};
use crate::ingest::MatchEvent;
use crate::lexicon::{Lexicon, VariantRef};

pub const MODEL_FORMAT: &str = "lexvar frequency-model v1";
const CSV_HEADER: &str = "col,row,concept,variant,count,tweet_total";

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("unknown concept `{0}`")]
    UnknownConcept(String),
    #[error("unknown variant `{variant}` for concept `{concept}`")]
    UnknownVariant { concept: String, variant: String },
    #[error("event from tweet `{tweet_id}` at ({lon}, {lat}) lies outside the grid")]
    OutOfGrid {
        tweet_id: String,
        lon: f64,
        lat: f64,
    },
    #[error("cannot merge models built with different grids or lexicons")]
    Incompatible,
    #[error("model was built with lexicon {found}, but the configured lexicon is {expected}")]
    LexiconMismatch { expected: String, found: String },
    #[error("model file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// How tweet-count thresholds are applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ThresholdMode {
    /// Drop a `(cell, concept)` entry when fewer than `min` tweets matched that concept in the cell.
    #[default]
    PerConcept,
    /// Drop a whole cell when its concept tweet totals sum to fewer than `min`.
    PerCell,
}

impl fmt::Display for ThresholdMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ThresholdMode::PerConcept => "per-concept",
            ThresholdMode::PerCell => "per-cell",
        })
    }
}

impl FromStr for ThresholdMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "per-concept" => Ok(ThresholdMode::PerConcept),
            "per-cell" => Ok(ThresholdMode::PerCell),
            other => Err(format!(
                "unknown threshold mode `{other}` (expected per-concept or per-cell)"
            )),
        }
    }
}

/// Tweet-count threshold recorded on a filtered model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Threshold {
    pub min_tweets: u64,
    pub mode: ThresholdMode,
}

impl fmt::Display for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.min_tweets, self.mode)
    }
}

/// Variant counts and distinct-tweet total for one `(cell, concept)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConceptTally {
    pub counts: Vec<u64>,
    pub tweets: u64,
}

impl ConceptTally {
    fn new(n_variants: usize) -> Self {
        ConceptTally {
            counts: vec![0; n_variants],
            tweets: 0,
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Relative frequencies in lexicon order, or `None` if all counts are zero.
    pub fn relative(&self) -> Option<Vec<f64>> {
        let total = self.total();
        if total == 0 {
            return None;
        }
        let denom = total as f64;
        Some(self.counts.iter().map(|&c| c as f64 / denom).collect())
    }
}

/// Relative variant frequencies of one concept in one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyVector {
    pub concept_id: String,
    /// `(variant_id, relative_frequency)` in lexicon order, covering every variant.
    pub components: Vec<(String, f64)>,
}

impl FrequencyVector {
    pub fn values(&self) -> Vec<f64> {
        self.components.iter().map(|(_, v)| *v).collect()
    }
}

#[derive(Debug, Clone)]
pub struct FrequencyModel {
    spec: GridSpec,
    lexicon: Arc<Lexicon>,
    cells: BTreeMap<CellId, BTreeMap<usize, ConceptTally>>,
    threshold: Option<Threshold>,
    metadata: BTreeMap<String, String>,
}

impl PartialEq for FrequencyModel {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec
            && self.lexicon.digest() == other.lexicon.digest()
            && self.cells == other.cells
            && self.threshold == other.threshold
            && self.metadata == other.metadata
    }
}

impl FrequencyModel {
    pub fn new(spec: GridSpec, lexicon: Arc<Lexicon>) -> Self {
        FrequencyModel {
            spec,
            lexicon,
            cells: BTreeMap::new(),
            threshold: None,
            metadata: BTreeMap::new(),
        }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn lexicon(&self) -> &Arc<Lexicon> {
        &self.lexicon
    }

    pub fn lexicon_digest(&self) -> &str {
        self.lexicon.digest()
    }

    /// Threshold applied by [`FrequencyModel::apply_threshold`], if any.
    pub fn threshold(&self) -> Option<Threshold> {
        self.threshold
    }

    /// Free-form provenance (filter settings, config digest) written into the model header.
    pub fn metadata(&self) -> &BTreeMap<String, String> {
        &self.metadata
    }

    pub fn set_metadata(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.metadata.insert(key.into(), value.into());
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Adds match events. Counts go up by one per event; the tweet total of a
    /// `(cell, concept)` goes up by one per distinct tweet id within this call.
    ///
    /// All events are validated before any count changes.
    pub fn accumulate<'a, I>(&mut self, events: I) -> Result<(), ModelError>
    where
        I: IntoIterator<Item = &'a MatchEvent>,
    {
        let mut resolved = Vec::new();
        for ev in events {
            let vref = self
                .lexicon
                .resolve(&ev.concept_id, &ev.variant_id)
                .ok_or_else(|| {
                    if self.lexicon.concept_index(&ev.concept_id).is_none() {
                        ModelError::UnknownConcept(ev.concept_id.clone())
                    } else {
                        ModelError::UnknownVariant {
                            concept: ev.concept_id.clone(),
                            variant: ev.variant_id.clone(),
                        }
                    }
                })?;
            let cell = self
                .spec
                .cell_of(ev.lon, ev.lat)
                .ok_or_else(|| ModelError::OutOfGrid {
                    tweet_id: ev.tweet_id.clone(),
                    lon: ev.lon,
                    lat: ev.lat,
                })?;
            resolved.push((ev.tweet_id.as_str(), cell, vref));
        }

        let mut seen: HashSet<(&str, CellId, usize)> = HashSet::new();
        for (tweet, cell, vref) in resolved {
            let tally = self.tally_mut(cell, vref.concept);
            tally.counts[vref.variant] += 1;
            if seen.insert((tweet, cell, vref.concept)) {
                tally.tweets += 1;
            }
        }
        Ok(())
    }

    /// Records one tweet's deduplicated matches in `cell`.
    ///
    /// # Panics
    /// If `cell` is outside the grid or a reference is not from this model's lexicon.
    pub fn record_tweet(&mut self, cell: CellId, matches: &BTreeSet<VariantRef>) {
        assert!(self.spec.contains_cell(cell), "cell {cell} outside grid");
        let mut last_concept = None;
        for vref in matches {
            let tally = self.tally_mut(cell, vref.concept);
            tally.counts[vref.variant] += 1;
            // BTreeSet order groups variants of a concept together
            if last_concept != Some(vref.concept) {
                tally.tweets += 1;
                last_concept = Some(vref.concept);
            }
        }
    }

    fn tally_mut(&mut self, cell: CellId, concept: usize) -> &mut ConceptTally {
        let n = self.lexicon.concept(concept).variants().len();
        self.cells
            .entry(cell)
            .or_default()
            .entry(concept)
            .or_insert_with(|| ConceptTally::new(n))
    }

    /// Adds every count of `other` into `self`.
    pub fn merge(&mut self, other: FrequencyModel) -> Result<(), ModelError> {
        if self.spec != other.spec || self.lexicon.digest() != other.lexicon.digest() {
            return Err(ModelError::Incompatible);
        }
        for (cell, concepts) in other.cells {
            let mine = self.cells.entry(cell).or_default();
            for (concept, tally) in concepts {
                match mine.get_mut(&concept) {
                    Some(t) => {
                        for (a, b) in t.counts.iter_mut().zip(&tally.counts) {
                            *a += b;
                        }
                        t.tweets += tally.tweets;
                    }
                    None => {
                        mine.insert(concept, tally);
                    }
                }
            }
        }
        Ok(())
    }

    pub fn tally(&self, cell: CellId, concept: usize) -> Option<&ConceptTally> {
        self.cells.get(&cell)?.get(&concept)
    }

    pub fn count(&self, cell: CellId, concept_id: &str, variant_id: &str) -> u64 {
        self.lexicon
            .resolve(concept_id, variant_id)
            .and_then(|v| self.tally(cell, v.concept).map(|t| t.counts[v.variant]))
            .unwrap_or(0)
    }

    pub fn tweet_total(&self, cell: CellId, concept_id: &str) -> u64 {
        self.lexicon
            .concept_index(concept_id)
            .and_then(|c| self.tally(cell, c))
            .map_or(0, |t| t.tweets)
    }

    /// Cells holding at least one concept with data, in [`CellId`] order.
    pub fn data_cells(&self) -> Vec<CellId> {
        self.cells
            .iter()
            .filter(|(_, m)| m.values().any(|t| t.total() > 0))
            .map(|(c, _)| *c)
            .collect()
    }

    /// Cells with data for `concept`, in [`CellId`] order.
    pub fn cells_with_concept(&self, concept: usize) -> Vec<CellId> {
        self.cells
            .iter()
            .filter(|(_, m)| m.get(&concept).is_some_and(|t| t.total() > 0))
            .map(|(c, _)| *c)
            .collect()
    }

    /// Concepts with data in `cell`, in lexicon order.
    pub fn concepts_in(&self, cell: CellId) -> impl Iterator<Item = (usize, &ConceptTally)> {
        self.cells
            .get(&cell)
            .into_iter()
            .flat_map(|m| m.iter().map(|(k, v)| (*k, v)))
            .filter(|(_, t)| t.total() > 0)
    }

    /// Relative frequencies for `concept_id` in `cell`; `None` when the cell has no data for it.
    pub fn frequency_vector(
        &self,
        cell: CellId,
        concept_id: &str,
    ) -> Result<Option<FrequencyVector>, ModelError> {
        let ci = self
            .lexicon
            .concept_index(concept_id)
            .ok_or_else(|| ModelError::UnknownConcept(concept_id.to_string()))?;
        let Some(values) = self.tally(cell, ci).and_then(ConceptTally::relative) else {
            return Ok(None);
        };
        let concept = self.lexicon.concept(ci);
        let components = concept
            .variants()
            .iter()
            .zip(values)
            .map(|(v, f)| (v.id().to_string(), f))
            .collect();
        Ok(Some(FrequencyVector {
            concept_id: concept_id.to_string(),
            components,
        }))
    }

    /// Copy of the model without the entries that fall below `min_tweets`.
    /// `min_tweets == 0` keeps everything.
    pub fn apply_threshold(&self, min_tweets: u64, mode: ThresholdMode) -> FrequencyModel {
        let cells = self
            .cells
            .iter()
            .filter_map(|(cell, concepts)| {
                let kept: BTreeMap<usize, ConceptTally> = match mode {
                    ThresholdMode::PerConcept => concepts
                        .iter()
                        .filter(|(_, t)| t.tweets >= min_tweets)
                        .map(|(k, t)| (*k, t.clone()))
                        .collect(),
                    ThresholdMode::PerCell => {
                        let total: u64 = concepts.values().map(|t| t.tweets).sum();
                        if total >= min_tweets {
                            concepts.clone()
                        } else {
                            BTreeMap::new()
                        }
                    }
                };
                (!kept.is_empty()).then_some((*cell, kept))
            })
            .collect();
        FrequencyModel {
            spec: self.spec,
            lexicon: Arc::clone(&self.lexicon),
            cells,
            threshold: Some(Threshold { min_tweets, mode }),
            metadata: self.metadata.clone(),
        }
    }

    /// Writes the model as CSV preceded by a `#` metadata block.
    ///
    /// Rows are sorted by cell (column, then row), concept id and variant id,
    /// so identical models produce identical bytes.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), ModelError> {
        writeln!(w, "# {MODEL_FORMAT}")?;
        writeln!(w, "# grid={}", self.spec)?;
        writeln!(w, "# lexicon_digest={}", self.lexicon.digest())?;
        writeln!(w, "# accent_folding={}", self.lexicon.accent_folding())?;
        match self.threshold {
            Some(t) => writeln!(w, "# threshold={t}")?,
            None => writeln!(w, "# threshold=none")?,
        }
        for (k, v) in &self.metadata {
            writeln!(w, "# {k}={v}")?;
        }
        writeln!(w, "{CSV_HEADER}")?;

        let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        for (cell, concepts) in &self.cells {
            let mut rows: Vec<(&str, &str, u64, u64)> = Vec::new();
            for (&ci, tally) in concepts {
                let concept = self.lexicon.concept(ci);
                for (variant, &count) in concept.variants().iter().zip(&tally.counts) {
                    if count > 0 {
                        rows.push((concept.id(), variant.id(), count, tally.tweets));
                    }
                }
            }
            rows.sort_unstable();
            for (concept, variant, count, tweets) in rows {
                let (col, row, count, tweets) = (
                    cell.col.to_string(),
                    cell.row.to_string(),
                    count.to_string(),
                    tweets.to_string(),
                );
                out.write_record([&col, &row, concept, variant, &count, &tweets])
                    .map_err(csv_to_io)?;
            }
        }
        out.flush()?;
        Ok(())
    }

    /// Reads a model written by [`FrequencyModel::write_csv`]. The lexicon
    /// must be the one the model was built with.
    pub fn read_csv<R: BufRead>(reader: R, lexicon: Arc<Lexicon>) -> Result<Self, ModelError> {
        let mut meta = BTreeMap::new();
        let mut body = String::new();
        let mut header_seen = false;
        let mut first_body_line = 0;
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if !header_seen {
                if let Some(rest) = line.strip_prefix('#') {
                    if let Some((k, v)) = rest.trim().split_once('=') {
                        meta.insert(k.trim().to_string(), v.trim().to_string());
                    }
                    continue;
                }
                if line.trim() != CSV_HEADER {
                    return Err(ModelError::Parse {
                        line: i + 1,
                        message: format!("expected header `{CSV_HEADER}`"),
                    });
                }
                header_seen = true;
                first_body_line = i + 2;
                continue;
            }
            body.push_str(&line);
            body.push('\n');
        }
        if !header_seen {
            return Err(ModelError::Parse {
                line: 0,
                message: "missing column header".into(),
            });
        }

        let take = |meta: &mut BTreeMap<String, String>, key: &str| {
            meta.remove(key).ok_or_else(|| ModelError::Parse {
                line: 0,
                message: format!("missing `{key}` in metadata block"),
            })
        };
        let grid = take(&mut meta, "grid")?;
        let spec: GridSpec = grid.parse().map_err(|e| ModelError::Parse {
            line: 0,
            message: format!("{e}"),
        })?;
        let digest = take(&mut meta, "lexicon_digest")?;
        if digest != lexicon.digest() {
            return Err(ModelError::LexiconMismatch {
                expected: lexicon.digest().to_string(),
                found: digest,
            });
        }
        meta.remove("accent_folding");
        let threshold = match take(&mut meta, "threshold")?.as_str() {
            "none" => None,
            t => {
                let bad = || ModelError::Parse {
                    line: 0,
                    message: format!("bad threshold `{t}`"),
                };
                let (n, mode) = t.split_once(' ').ok_or_else(bad)?;
                Some(Threshold {
                    min_tweets: n.parse().map_err(|_| bad())?,
                    mode: mode.parse().map_err(|_| bad())?,
                })
            }
        };

        let mut model = FrequencyModel::new(spec, lexicon);
        model.threshold = threshold;
        model.metadata = meta;

        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .from_reader(body.as_bytes());
        for (i, rec) in rdr.records().enumerate() {
            let line = first_body_line + i;
            let perr = |message: String| ModelError::Parse { line, message };
            let rec = rec.map_err(|e| perr(e.to_string()))?;
            if rec.len() != 6 {
                return Err(perr(format!("expected 6 fields, got {}", rec.len())));
            }
            let num = |idx: usize| -> Result<u64, ModelError> {
                rec[idx]
                    .parse::<u64>()
                    .map_err(|_| perr(format!("bad number `{}`", &rec[idx])))
            };
            let cell = CellId::new(num(0)? as u32, num(1)? as u32);
            if !model.spec.contains_cell(cell) {
                return Err(perr(format!("cell {cell} outside grid")));
            }
            let vref = model
                .lexicon
                .resolve(&rec[2], &rec[3])
                .ok_or_else(|| perr(format!("unknown variant `{}` / `{}`", &rec[2], &rec[3])))?;
            let (count, tweets) = (num(4)?, num(5)?);
            let tally = model.tally_mut(cell, vref.concept);
            if tally.counts.iter().any(|&c| c > 0) && tally.tweets != tweets {
                return Err(perr(
                    "inconsistent tweet_total within one cell/concept".into(),
                ));
            }
            tally.counts[vref.variant] = count;
            tally.tweets = tweets;
        }
        Ok(model)
    }
}

fn csv_to_io(e: csv::Error) -> io::Error {
    io::Error::other(e)
}
