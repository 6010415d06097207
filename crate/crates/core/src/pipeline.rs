//! Sharded ingestion: JSONL (optionally gzip) → [`FrequencyModel`].
//!
//! Lines are read in fixed-size batches; each batch is split across a worker
//! pool, every worker builds a partial model and partial report, and partials
//! are merged by count addition. Addition is commutative, so the resulting
//! model is the same for any worker count or batch size.

use std::fs::File;
use std::io::{self, BufRead, BufReader, Read};
use std::path::Path;
use std::sync::Arc;

use flate2::read::MultiGzDecoder;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::freqmodel::FrequencyModel;
use crate::grid::GridSpec;
use crate::ingest::{parse_record, scan_matches, tokenize_with, LanguageFilter, RecordError};
use crate::lexicon::Lexicon;

const BATCH_LINES: usize = 16_384;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("could not start worker pool: {0}")]
    Pool(String),
}

/// Per-class tallies of what happened to every input line.
///
/// `total_read = malformed_json + missing_field + invalid_field + out_of_range
///  + language_filtered + kept`, and `matched + out_of_region ≤ kept`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipReport {
    pub total_read: u64,
    pub malformed_json: u64,
    pub missing_field: u64,
    pub invalid_field: u64,
    pub out_of_range: u64,
    /// Parsed, but wrong language or probability not above the threshold.
    pub language_filtered: u64,
    /// Passed parsing and the language filter.
    pub kept: u64,
    /// Kept, but outside the grid.
    pub out_of_region: u64,
    /// Kept, inside the grid, with at least one keyword match.
    pub matched: u64,
    /// Distinct `(tweet, concept, variant)` matches.
    pub match_events: u64,
}

impl SkipReport {
    pub fn skipped(&self) -> u64 {
        self.malformed_json + self.missing_field + self.invalid_field + self.out_of_range
    }

    fn record_error(&mut self, e: &RecordError) {
        match e {
            RecordError::MalformedJson(_) => self.malformed_json += 1,
            RecordError::MissingField(_) => self.missing_field += 1,
            RecordError::InvalidField(_) => self.invalid_field += 1,
            RecordError::OutOfRange(_) => self.out_of_range += 1,
        }
    }

    fn merge(&mut self, o: &SkipReport) {
        self.total_read += o.total_read;
        self.malformed_json += o.malformed_json;
        self.missing_field += o.missing_field;
        self.invalid_field += o.invalid_field;
        self.out_of_range += o.out_of_range;
        self.language_filtered += o.language_filtered;
        self.kept += o.kept;
        self.out_of_region += o.out_of_region;
        self.matched += o.matched;
        self.match_events += o.match_events;
    }
}

#[derive(Debug, Clone)]
pub struct IngestOptions {
    pub filter: LanguageFilter,
    /// Worker threads; 0 means one per available core.
    pub workers: usize,
    pub batch_lines: usize,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            filter: LanguageFilter::default(),
            workers: 0,
            batch_lines: BATCH_LINES,
        }
    }
}

/// Runs records through parse → language filter → grid → tokenize → scan.
pub struct Ingestor {
    lexicon: Arc<Lexicon>,
    spec: GridSpec,
    options: IngestOptions,
    pool: rayon::ThreadPool,
}

impl Ingestor {
    pub fn new(
        lexicon: Arc<Lexicon>,
        spec: GridSpec,
        options: IngestOptions,
    ) -> Result<Self, PipelineError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(options.workers)
            .build()
            .map_err(|e| PipelineError::Pool(e.to_string()))?;
        Ok(Ingestor {
            lexicon,
            spec,
            options,
            pool,
        })
    }

    pub fn empty_model(&self) -> FrequencyModel {
        FrequencyModel::new(self.spec, Arc::clone(&self.lexicon))
    }

    /// Processes one line into `model`/`report`. Whitespace-only lines are ignored.
    pub fn process_line(&self, line: &str, model: &mut FrequencyModel, report: &mut SkipReport) {
        if line.trim().is_empty() {
            return;
        }
        report.total_read += 1;
        let record = match parse_record(line) {
            Ok(r) => r,
            Err(e) => {
                report.record_error(&e);
                return;
            }
        };
        if !self.options.filter.accepts(&record) {
            report.language_filtered += 1;
            return;
        }
        report.kept += 1;
        let Some(cell) = self.spec.cell_of(record.lon, record.lat) else {
            report.out_of_region += 1;
            return;
        };
        let tokens = tokenize_with(&record.text, self.lexicon.accent_folding());
        let matches = scan_matches(&tokens, &self.lexicon);
        if !matches.is_empty() {
            report.matched += 1;
            report.match_events += matches.len() as u64;
            model.record_tweet(cell, &matches);
        }
    }

    fn process_batch(&self, lines: &[String]) -> (FrequencyModel, SkipReport) {
        self.pool.install(|| {
            lines
                .par_iter()
                .fold(
                    || (self.empty_model(), SkipReport::default()),
                    |(mut m, mut r), line| {
                        self.process_line(line, &mut m, &mut r);
                        (m, r)
                    },
                )
                .reduce(
                    || (self.empty_model(), SkipReport::default()),
                    |(mut m1, mut r1), (m2, r2)| {
                        m1.merge(m2).expect("partials share grid and lexicon");
                        r1.merge(&r2);
                        (m1, r1)
                    },
                )
        })
    }

    /// Ingests every line of `reader` into `model`. Invalid UTF-8 lines count as malformed.
    pub fn ingest_reader<R: BufRead>(
        &self,
        mut reader: R,
        model: &mut FrequencyModel,
        report: &mut SkipReport,
    ) -> io::Result<()> {
        let batch_size = self.options.batch_lines.max(1);
        let mut batch: Vec<String> = Vec::with_capacity(batch_size);
        let mut buf = Vec::new();
        loop {
            buf.clear();
            let n = reader.read_until(b'\n', &mut buf)?;
            if n > 0 {
                match String::from_utf8(std::mem::take(&mut buf)) {
                    Ok(s) => batch.push(s),
                    Err(_) => {
                        report.total_read += 1;
                        report.malformed_json += 1;
                    }
                }
            }
            if batch.len() >= batch_size || (n == 0 && !batch.is_empty()) {
                let (m, r) = self.process_batch(&batch);
                model.merge(m).expect("partials share grid and lexicon");
                report.merge(&r);
                batch.clear();
            }
            if n == 0 {
                return Ok(());
            }
        }
    }

    /// Ingests files in order; names ending in `.gz` are decompressed.
    pub fn ingest_paths<P: AsRef<Path>>(
        &self,
        paths: &[P],
    ) -> Result<(FrequencyModel, SkipReport), PipelineError> {
        let mut model = self.empty_model();
        let mut report = SkipReport::default();
        for path in paths {
            let path = path.as_ref();
            let io_err = |source| PipelineError::Io {
                path: path.display().to_string(),
                source,
            };
            let reader = open_input(path).map_err(io_err)?;
            self.ingest_reader(reader, &mut model, &mut report)
                .map_err(io_err)?;
        }
        Ok((model, report))
    }
}

/// Opens a corpus file, transparently decompressing `.gz`.
pub fn open_input(path: &Path) -> io::Result<Box<dyn BufRead>> {
    let file = File::open(path)?;
    let gz = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("gz"));
    let inner: Box<dyn Read> = if gz {
        Box::new(MultiGzDecoder::new(file))
    } else {
        Box::new(file)
    };
    Ok(Box::new(BufReader::new(inner)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    use flate2::write::GzEncoder;
    use flate2::Compression;

    use crate::grid::CellId;

    fn line(id: &str, lon: f64, lat: f64, text: &str, lang: &str, p: f64) -> String {
        serde_json::json!({"id": id, "lon": lon, "lat": lat, "text": text, "lang": lang, "lang_prob": p})
            .to_string()
    }

    fn fixture() -> String {
        [
            line("1", -3.69, 40.42, "Qué gripe tengo", "es", 0.99),
            line("2", -3.69, 40.42, "me voy a la piscina", "es", 0.61),
            line("3", -3.69, 40.42, "gripe", "es", 0.60),
            line("4", -3.69, 40.42, "gripe", "pt", 0.95),
            r#"{"id":"5","lon":-3.69,"lat":95.0,"text":"gripe","lang":"es","lang_prob":0.9}"#
                .to_string(),
            "{broken".to_string(),
        ]
        .join("\n")
    }

    fn ingestor(workers: usize, batch: usize) -> Ingestor {
        let opts = IngestOptions {
            workers,
            batch_lines: batch,
            ..IngestOptions::default()
        };
        Ingestor::new(Arc::new(Lexicon::shipped(false)), GridSpec::iberia(), opts).unwrap()
    }

    #[test]
    fn six_line_fixture() {
        let ing = ingestor(1, 4);
        let mut model = ing.empty_model();
        let mut report = SkipReport::default();
        ing.ingest_reader(fixture().as_bytes(), &mut model, &mut report)
            .unwrap();
        let madrid = GridSpec::iberia().cell_of(-3.69, 40.42).unwrap();
        assert_eq!(model.tweet_total(madrid, "cold"), 1);
        assert_eq!(model.tweet_total(madrid, "swimming pool"), 1);
        assert_eq!(report.total_read, 6);
        assert_eq!(report.matched, 2);
        assert_eq!(report.skipped() + report.language_filtered, 4);
        assert_eq!(report.malformed_json, 1);
        assert_eq!(report.out_of_range, 1);
        assert_eq!(report.language_filtered, 2);
    }

    #[test]
    fn worker_count_does_not_change_result() {
        let mut text = String::new();
        for i in 0..500 {
            let lon = -9.0 + (i % 37) as f64 * 0.33;
            let lat = 36.0 + (i % 23) as f64 * 0.3;
            let words = [
                "gripe",
                "resfriado y piscina",
                "papel de aluminio",
                "coche",
                "nada",
                "#gripe",
            ];
            text.push_str(&line(
                &i.to_string(),
                lon,
                lat,
                words[i % words.len()],
                "es",
                0.9,
            ));
            text.push('\n');
        }
        let run = |w, b| {
            let ing = ingestor(w, b);
            let mut m = ing.empty_model();
            let mut r = SkipReport::default();
            ing.ingest_reader(text.as_bytes(), &mut m, &mut r).unwrap();
            let mut buf = Vec::new();
            m.write_csv(&mut buf).unwrap();
            (buf, r)
        };
        let base = run(1, 10_000);
        assert_eq!(run(4, 7), base);
        assert_eq!(run(3, 64), base);
    }

    #[test]
    fn out_of_region_and_empty_lines() {
        let text = format!(
            "\n{}\n\n{}\n",
            line("a", 30.0, 60.0, "gripe", "es", 0.9),
            line("b", -3.7, 40.4, "gripe", "es", 0.9)
        );
        let ing = ingestor(2, 100);
        let mut m = ing.empty_model();
        let mut r = SkipReport::default();
        ing.ingest_reader(text.as_bytes(), &mut m, &mut r).unwrap();
        assert_eq!(
            (r.total_read, r.kept, r.out_of_region, r.matched),
            (2, 2, 1, 1)
        );
        assert_eq!(
            m.data_cells(),
            vec![GridSpec::iberia().cell_of(-3.7, 40.4).unwrap()]
        );
    }

    #[test]
    fn invalid_utf8_is_malformed() {
        let mut bytes = b"\xff\xfe\n".to_vec();
        bytes.extend(line("b", -3.7, 40.4, "gripe", "es", 0.9).as_bytes());
        let ing = ingestor(1, 100);
        let mut m = ing.empty_model();
        let mut r = SkipReport::default();
        ing.ingest_reader(&bytes[..], &mut m, &mut r).unwrap();
        assert_eq!((r.total_read, r.malformed_json, r.matched), (2, 1, 1));
    }

    #[test]
    fn reads_gzip_and_plain_files() {
        let dir = tempfile::tempdir().unwrap();
        let plain = dir.path().join("a.jsonl");
        std::fs::write(&plain, fixture()).unwrap();
        let gz = dir.path().join("b.jsonl.gz");
        let mut enc = GzEncoder::new(File::create(&gz).unwrap(), Compression::default());
        enc.write_all(fixture().as_bytes()).unwrap();
        enc.finish().unwrap();

        let ing = ingestor(2, 3);
        let (m, r) = ing.ingest_paths(&[&plain, &gz]).unwrap();
        assert_eq!(r.total_read, 12);
        let madrid = CellId::new(18, 15);
        assert_eq!(m.tweet_total(madrid, "cold"), 2);

        let missing = dir.path().join("nope.jsonl");
        assert!(matches!(
            ing.ingest_paths(&[missing]),
            Err(PipelineError::Io { .. })
        ));
    }
}
