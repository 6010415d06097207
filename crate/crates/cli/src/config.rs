//! Run configuration: defaults, then `--config` file, then command-line flags.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, ensure, Context, Result};
use clap::Args;
use lexvar_core::{ConceptScope, GridSpec, LanguageFilter, Lexicon, MetricKind, ThresholdMode};
use serde::Deserialize;
use sha2::{Digest, Sha256};

/// Flags shared by every subcommand. Unset flags fall back to the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Key=value config file; flags given on the command line win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Lexicon TSV; the bundled 89-concept lexicon when omitted.
    #[arg(long, global = true)]
    pub lexicon: Option<PathBuf>,
    /// Fold accents in the lexicon and in tweet text.
    #[arg(long, global = true)]
    pub accent_fold: bool,
    /// Grid as `origin_lon,origin_lat,cell_size,n_cols,n_rows`.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub grid: Option<String>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct IngestArgs {
    /// Corpus files (JSON lines, optionally `.gz`).
    #[arg(long, num_args = 1..)]
    pub input: Vec<PathBuf>,
    #[arg(long)]
    pub lang: Option<String>,
    /// Language probability must be strictly above this.
    #[arg(long)]
    pub min_prob: Option<f64>,
    /// Worker threads; 0 uses every core. Does not affect the output.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ModelArgs {
    /// Frequency model written by `ingest`; defaults to `<out>/model.csv`.
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct DistanceArgs {
    /// Concept id, or `all` for the concept-averaged distance.
    #[arg(long)]
    pub concept: Option<String>,
    /// `cosine` or `jsd`.
    #[arg(long)]
    pub metric: Option<String>,
    /// Minimum tweet count.
    #[arg(long)]
    pub threshold: Option<u64>,
    /// `per-concept` or `per-cell`.
    #[arg(long)]
    pub threshold_mode: Option<String>,
    /// Also write the field seen from the other end of the maximal pair.
    #[arg(long)]
    pub both_references: bool,
}

/// Contents of a `--config` file. Every key is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub input: Option<Vec<PathBuf>>,
    pub lexicon: Option<PathBuf>,
    pub lang: Option<String>,
    pub min_prob: Option<f64>,
    pub grid: Option<String>,
    pub threshold: Option<u64>,
    pub threshold_mode: Option<String>,
    pub metric: Option<String>,
    pub concept: Option<String>,
    pub out: Option<PathBuf>,
    pub accent_fold: Option<bool>,
    pub both_references: Option<bool>,
    pub workers: Option<usize>,
    pub model: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Fully resolved settings for one run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub inputs: Vec<PathBuf>,
    pub lexicon_path: Option<PathBuf>,
    pub lang: String,
    pub min_prob: f64,
    /// `None` when neither flag nor file names a grid.
    pub grid: Option<GridSpec>,
    pub threshold: u64,
    pub threshold_mode: ThresholdMode,
    pub metric: MetricKind,
    pub scope: ConceptScope,
    pub out: PathBuf,
    pub accent_fold: bool,
    pub both_references: bool,
    pub workers: usize,
    pub model: Option<PathBuf>,
}

impl RunConfig {
    pub fn resolve(
        common: &CommonArgs,
        ingest: &IngestArgs,
        model: &ModelArgs,
        distance: &DistanceArgs,
    ) -> Result<Self> {
        let file = match &common.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let defaults = LanguageFilter::default();

        let inputs = if ingest.input.is_empty() {
            file.input.unwrap_or_default()
        } else {
            ingest.input.clone()
        };
        let grid = match common.grid.clone().or(file.grid) {
            Some(g) => Some(
                g.parse::<GridSpec>()
                    .with_context(|| format!("bad --grid `{g}`"))?,
            ),
            None => None,
        };
        let threshold_mode = match distance.threshold_mode.clone().or(file.threshold_mode) {
            Some(m) => m
                .parse()
                .map_err(|e| anyhow::anyhow!("bad --threshold-mode `{m}`: {e}"))?,
            None => ThresholdMode::default(),
        };
        let metric = match distance.metric.clone().or(file.metric) {
            Some(m) => m
                .parse()
                .map_err(|e| anyhow::anyhow!("bad --metric `{m}`: {e}"))?,
            None => MetricKind::Cosine,
        };
        let scope: ConceptScope = distance
            .concept
            .clone()
            .or(file.concept)
            .unwrap_or_else(|| "all".to_string())
            .parse()
            .expect("infallible");

        let cfg = RunConfig {
            inputs,
            lexicon_path: common.lexicon.clone().or(file.lexicon),
            lang: ingest.lang.clone().or(file.lang).unwrap_or(defaults.lang),
            min_prob: ingest
                .min_prob
                .or(file.min_prob)
                .unwrap_or(defaults.min_prob),
            grid,
            threshold: distance.threshold.or(file.threshold).unwrap_or(0),
            threshold_mode,
            metric,
            scope,
            out: common
                .out
                .clone()
                .or(file.out)
                .unwrap_or_else(|| PathBuf::from("out")),
            accent_fold: common.accent_fold || file.accent_fold.unwrap_or(false),
            both_references: distance.both_references || file.both_references.unwrap_or(false),
            workers: ingest.workers.or(file.workers).unwrap_or(0),
            model: model.model.clone().or(file.model),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        ensure!(
            (0.0..=1.0).contains(&self.min_prob),
            "--min-prob must lie in [0, 1], got {}",
            self.min_prob
        );
        if let Some(p) = &self.lexicon_path {
            ensure!(p.is_file(), "lexicon {} does not exist", p.display());
        }
        for p in &self.inputs {
            ensure!(p.is_file(), "input {} does not exist", p.display());
        }
        Ok(())
    }

    pub fn load_lexicon(&self) -> Result<Arc<Lexicon>> {
        let lexicon = match &self.lexicon_path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading lexicon {}", p.display()))?;
                Lexicon::load(&text, self.accent_fold)
                    .with_context(|| format!("loading lexicon {}", p.display()))?
            }
            None => Lexicon::shipped(self.accent_fold),
        };
        Ok(Arc::new(lexicon))
    }

    pub fn grid_or_default(&self) -> GridSpec {
        self.grid.unwrap_or_else(GridSpec::iberia)
    }

    pub fn model_path(&self) -> PathBuf {
        self.model
            .clone()
            .unwrap_or_else(|| self.out.join("model.csv"))
    }

    pub fn require_inputs(&self) -> Result<()> {
        if self.inputs.is_empty() {
            bail!("no corpus given; pass --input PATH...");
        }
        Ok(())
    }

    /// Digest of the settings that shape ingest output. Paths, the output
    /// directory and the worker count are left out.
    pub fn ingest_digest(&self, lexicon: &Lexicon, grid: &GridSpec) -> String {
        let mut s = String::new();
        writeln!(s, "lexicon={}", lexicon.digest()).unwrap();
        writeln!(s, "lang={}", self.lang).unwrap();
        writeln!(s, "min_prob={}", self.min_prob).unwrap();
        writeln!(s, "grid={grid}").unwrap();
        hex(&s)
    }

    /// Digest of the settings that shape a majority map.
    pub fn majority_digest(&self, lexicon: &Lexicon, grid: &GridSpec, concept: &str) -> String {
        let mut s = String::new();
        writeln!(s, "lexicon={}", lexicon.digest()).unwrap();
        writeln!(s, "grid={grid}").unwrap();
        writeln!(s, "concept={concept}").unwrap();
        hex(&s)
    }

    /// Digest of the settings that shape distance output.
    pub fn analysis_digest(&self, lexicon: &Lexicon, grid: &GridSpec) -> String {
        let mut s = String::new();
        writeln!(s, "lexicon={}", lexicon.digest()).unwrap();
        writeln!(s, "grid={grid}").unwrap();
        writeln!(s, "threshold={} {}", self.threshold, self.threshold_mode).unwrap();
        writeln!(s, "metric={}", self.metric).unwrap();
        writeln!(s, "scope={}", self.scope).unwrap();
        writeln!(s, "both_references={}", self.both_references).unwrap();
        hex(&s)
    }
}

fn hex(s: &str) -> String {
    Sha256::digest(s.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "metric = \"jsd\"\nthreshold = 7\nlang = \"ca\"\n").unwrap();
        let common = CommonArgs {
            config: Some(path),
            ..Default::default()
        };
        let distance = DistanceArgs {
            threshold: Some(3),
            ..Default::default()
        };
        let cfg = RunConfig::resolve(
            &common,
            &IngestArgs::default(),
            &ModelArgs::default(),
            &distance,
        )
        .unwrap();
        assert_eq!(cfg.metric, MetricKind::JensenShannon);
        assert_eq!(cfg.threshold, 3);
        assert_eq!(cfg.lang, "ca");
        assert_eq!(cfg.scope, ConceptScope::All);
    }

    #[test]
    fn unknown_config_key_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "metrc = \"jsd\"\n").unwrap();
        let common = CommonArgs {
            config: Some(path),
            ..Default::default()
        };
        let r = RunConfig::resolve(
            &common,
            &IngestArgs::default(),
            &ModelArgs::default(),
            &DistanceArgs::default(),
        );
        assert!(r.is_err());
    }

    #[test]
    fn min_prob_out_of_range() {
        let ingest = IngestArgs {
            min_prob: Some(1.5),
            ..Default::default()
        };
        let r = RunConfig::resolve(
            &CommonArgs::default(),
            &ingest,
            &ModelArgs::default(),
            &DistanceArgs::default(),
        );
        assert!(r.is_err());
    }

    #[test]
    fn digest_ignores_workers_and_paths() {
        let lex = Lexicon::shipped(false);
        let grid = GridSpec::iberia();
        let a = RunConfig::resolve(
            &CommonArgs::default(),
            &IngestArgs {
                workers: Some(1),
                ..Default::default()
            },
            &ModelArgs::default(),
            &DistanceArgs::default(),
        )
        .unwrap();
        let b = RunConfig::resolve(
            &CommonArgs {
                out: Some("elsewhere".into()),
                ..Default::default()
            },
            &IngestArgs {
                workers: Some(8),
                ..Default::default()
            },
            &ModelArgs::default(),
            &DistanceArgs::default(),
        )
        .unwrap();
        assert_eq!(a.ingest_digest(&lex, &grid), b.ingest_digest(&lex, &grid));
        let c = RunConfig::resolve(
            &CommonArgs::default(),
            &IngestArgs {
                min_prob: Some(0.9),
                ..Default::default()
            },
            &ModelArgs::default(),
            &DistanceArgs::default(),
        )
        .unwrap();
        assert_ne!(a.ingest_digest(&lex, &grid), c.ingest_digest(&lex, &grid));
    }
}
