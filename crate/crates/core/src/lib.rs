//! Lexical-variation distance fields over a geographic grid.
//!
//! The pipeline runs in two phases. Ingestion turns geotagged, language-scored
//! posts into a [`FrequencyModel`]: per grid cell, per concept, the number of
//! tweets using each lexical variant. Analysis turns a model into pairwise
//! cell distances (cosine or Jensen–Shannon, per concept or averaged over
//! concepts), picks the maximal-distance pair as reference, and reports every
//! cell's distance to the reference normalized by that maximum.
//!
//! ```
//! use std::sync::Arc;
//! use lexvar_core::{Lexicon, GridSpec, FrequencyModel, MatchEvent};
//! use lexvar_core::analysis::{build_distance_matrix, select_reference, ConceptScope};
//! use lexvar_core::metrics::MetricKind;
//!
//! let lexicon = Arc::new(Lexicon::shipped(false));
//! let mut model = FrequencyModel::new(GridSpec::iberia(), lexicon);
//! let event = |id: &str, lon: f64, variant: &str| MatchEvent {
//!     tweet_id: id.into(), lon, lat: 40.4,
//!     concept_id: "cold".into(), variant_id: variant.into(),
//! };
//! model.accumulate(&[event("1", -3.7, "gripe"), event("2", 2.1, "resfriado")]).unwrap();
//! let m = build_distance_matrix(&model, &ConceptScope::All, MetricKind::JensenShannon).unwrap();
//! assert_eq!(select_reference(&m).unwrap().d_max, 1.0);
//! ```

pub mod analysis;
pub mod export;
pub mod freqmodel;
pub mod grid;
pub mod ingest;
pub mod lexicon;
pub mod metrics;
pub mod pipeline;
pub mod text;

pub use analysis::{
    AnalysisError, ConceptScope, DistanceField, DistanceMatrix, FieldComparison, MajorityMap,
    ReferenceSelection,
};
pub use freqmodel::{FrequencyModel, FrequencyVector, ModelError, Threshold, ThresholdMode};
pub use grid::{CellBounds, CellId, GridError, GridSpec};
pub use ingest::{LanguageFilter, MatchEvent, RecordError, TweetRecord};
pub use lexicon::{Concept, Lexicon, LexiconError, Variant, VariantRef};
pub use metrics::{MetricError, MetricKind};
pub use pipeline::{IngestOptions, Ingestor, PipelineError, SkipReport};
