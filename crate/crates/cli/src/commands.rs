//! Subcommand bodies. Every command computes all of its artifacts in memory
//! first and only then writes them, so a failure leaves no partial output.

use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use lexvar_core::analysis::{
    build_distance_matrix, compare_fields, distance_field, majority_map, median_split_agreement,
    select_reference,
};
use lexvar_core::export::{self, Meta};
use lexvar_core::{ConceptScope, FrequencyModel, IngestOptions, Ingestor, LanguageFilter, Lexicon};
use serde_json::{json, Value};

use crate::config::RunConfig;

/// Pending output files.
#[derive(Default)]
struct Outputs(Vec<(PathBuf, Vec<u8>)>);

impl Outputs {
    fn add(&mut self, path: PathBuf, bytes: Vec<u8>) {
        self.0.push((path, bytes));
    }

    fn add_json(&mut self, path: PathBuf, value: &Value) -> Result<()> {
        let mut buf = Vec::new();
        export::write_json(value, &mut buf)?;
        self.add(path, buf);
        Ok(())
    }

    /// Writes each file through a temporary sibling and a rename.
    fn commit(self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for (path, bytes) in self.0 {
            let tmp = path.with_extension("partial");
            fs::write(&tmp, &bytes).with_context(|| format!("writing {}", tmp.display()))?;
            fs::rename(&tmp, &path).with_context(|| format!("writing {}", path.display()))?;
            println!("wrote {}", path.display());
        }
        Ok(())
    }
}

/// File-name-safe form of a concept id: `miss (error)` → `miss-error`.
fn slug(s: &str) -> String {
    let mut out = String::new();
    for ch in s.chars() {
        if ch.is_alphanumeric() {
            out.extend(ch.to_lowercase());
        } else if !out.ends_with('-') && !out.is_empty() {
            out.push('-');
        }
    }
    while out.ends_with('-') {
        out.pop();
    }
    out
}

fn unknown_concept(lexicon: &Lexicon, id: &str) -> anyhow::Error {
    let ids: Vec<&str> = lexicon.concepts().iter().map(|c| c.id()).collect();
    anyhow::anyhow!(
        "unknown concept `{id}`; valid concepts ({}): {}",
        ids.len(),
        ids.join(", ")
    )
}

fn load_model(cfg: &RunConfig, lexicon: &std::sync::Arc<Lexicon>) -> Result<FrequencyModel> {
    let path = cfg.model_path();
    let file = fs::File::open(&path).with_context(|| {
        format!(
            "opening model {}; run `lexvar ingest` first",
            path.display()
        )
    })?;
    let model = FrequencyModel::read_csv(BufReader::new(file), lexicon.clone())
        .with_context(|| format!("reading model {}", path.display()))?;
    if let Some(grid) = cfg.grid {
        if grid != *model.spec() {
            bail!(
                "model {} was built on grid {}, but grid {} was requested",
                path.display(),
                model.spec(),
                grid
            );
        }
    }
    Ok(model)
}

pub fn ingest(cfg: &RunConfig) -> Result<()> {
    cfg.require_inputs()?;
    let lexicon = cfg.load_lexicon()?;
    let grid = cfg.grid_or_default();
    let options = IngestOptions {
        filter: LanguageFilter::new(cfg.lang.clone(), cfg.min_prob),
        workers: cfg.workers,
        ..IngestOptions::default()
    };
    let ingestor = Ingestor::new(lexicon.clone(), grid, options)?;
    let (mut model, report) = ingestor.ingest_paths(&cfg.inputs)?;

    let digest = cfg.ingest_digest(&lexicon, &grid);
    model.set_metadata("config_digest", &digest);
    model.set_metadata("lang", &cfg.lang);
    model.set_metadata("min_prob", cfg.min_prob.to_string());

    let mut model_bytes = Vec::new();
    model.write_csv(&mut model_bytes)?;

    let generated = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let mut report_json = json!({
        "config_digest": digest,
        "lexicon_digest": lexicon.digest(),
        "generated_at_unix": generated,
        "non_canonical": ["generated_at_unix"],
        "skipped": report.skipped(),
    });
    if let (Value::Object(dst), Value::Object(src)) =
        (&mut report_json, serde_json::to_value(&report)?)
    {
        dst.extend(src);
    }

    let mut out = Outputs::default();
    out.add(cfg.out.join("model.csv"), model_bytes);
    out.add_json(cfg.out.join("skip_report.json"), &report_json)?;
    out.commit(&cfg.out)?;
    eprintln!(
        "read {} lines: {} kept, {} matched, {} skipped, {} filtered by language, {} outside the grid",
        report.total_read,
        report.kept,
        report.matched,
        report.skipped(),
        report.language_filtered,
        report.out_of_region
    );
    Ok(())
}

pub fn majority(cfg: &RunConfig, concept: &str) -> Result<()> {
    let lexicon = cfg.load_lexicon()?;
    if lexicon.concept_index(concept).is_none() {
        return Err(unknown_concept(&lexicon, concept));
    }
    let model = load_model(cfg, &lexicon)?;
    let spec = *model.spec();
    let map = majority_map(&model, concept)?;

    let mut meta = Meta::new();
    meta.insert(
        "config_digest".into(),
        cfg.majority_digest(&lexicon, &spec, concept),
    );
    meta.insert("lexicon_digest".into(), lexicon.digest().to_string());
    if let Some(d) = model.metadata().get("config_digest") {
        meta.insert("model_config_digest".into(), d.clone());
    }

    let stem = format!("majority_{}", slug(concept));
    let mut out = Outputs::default();
    out.add_json(
        cfg.out.join(format!("{stem}.geojson")),
        &export::majority_geojson(&map, &spec, &meta),
    )?;
    out.add(
        cfg.out.join(format!("{stem}.svg")),
        export::majority_svg(&map, &spec, &lexicon, &meta).into_bytes(),
    );
    out.commit(&cfg.out)?;
    eprintln!("{} cells, {} ties", map.entries.len(), map.ties.len());
    Ok(())
}

pub fn distance(cfg: &RunConfig) -> Result<()> {
    let lexicon = cfg.load_lexicon()?;
    if let ConceptScope::Concept(id) = &cfg.scope {
        if lexicon.concept_index(id).is_none() {
            return Err(unknown_concept(&lexicon, id));
        }
    }
    let model = load_model(cfg, &lexicon)?;
    let spec = *model.spec();
    let model = model.apply_threshold(cfg.threshold, cfg.threshold_mode);

    let matrix = build_distance_matrix(&model, &cfg.scope, cfg.metric)?;
    let sel = select_reference(&matrix)?;
    let field1 = distance_field(&matrix, sel.i_max)?;

    let mut meta = Meta::new();
    meta.insert("config_digest".into(), cfg.analysis_digest(&lexicon, &spec));
    if let Some(d) = model.metadata().get("config_digest") {
        meta.insert("model_config_digest".into(), d.clone());
    }
    meta.insert(
        "reference_tie_break".into(),
        "earliest (row, column) in matrix cell order".into(),
    );
    meta.insert("i_max".into(), sel.i_max.to_string());
    meta.insert("j_max".into(), sel.j_max.to_string());
    meta.insert("d_max".into(), sel.d_max.to_string());

    let stem = format!(
        "{}_{}_t{}",
        slug(&cfg.scope.to_string()),
        cfg.metric,
        cfg.threshold
    );
    let mut out = Outputs::default();
    let mut csv = Vec::new();
    export::write_matrix_csv(&matrix, &meta, &mut csv)?;
    out.add(cfg.out.join(format!("matrix_{stem}.csv")), csv);

    let mut fields = vec![("ref1", field1)];
    if cfg.both_references {
        fields.push(("ref2", distance_field(&matrix, sel.j_max)?));
    }
    for (tag, field) in &fields {
        let mut m = meta.clone();
        m.insert("reference_role".into(), (*tag).into());
        out.add_json(
            cfg.out.join(format!("field_{stem}_{tag}.geojson")),
            &export::field_geojson(field, &spec, &m),
        )?;
        out.add(
            cfg.out.join(format!("field_{stem}_{tag}.svg")),
            export::field_svg(field, &spec, &m).into_bytes(),
        );
    }
    if let [(_, f1), (_, f2)] = fields.as_slice() {
        let cmp = compare_fields(f1, f2)?;
        let agreement = median_split_agreement(f1, f2)?;
        let record = json!({
            "config_digest": meta["config_digest"],
            "reference_1": f1.reference.to_string(),
            "reference_2": f2.reference.to_string(),
            "d_max": sel.d_max,
            "spearman": cmp.spearman,
            "common_cells": cmp.common_cells,
            "median_split_agreement": agreement,
        });
        out.add_json(cfg.out.join(format!("comparison_{stem}.json")), &record)?;
        eprintln!(
            "references {} / {}: spearman {:.4} over {} cells",
            f1.reference, f2.reference, cmp.spearman, cmp.common_cells
        );
    }
    out.commit(&cfg.out)?;
    eprintln!(
        "{} cells, d_max {} between {} and {}",
        matrix.len(),
        sel.d_max,
        sel.i_max,
        sel.j_max
    );
    Ok(())
}

pub fn concepts(cfg: &RunConfig) -> Result<()> {
    let lexicon = cfg.load_lexicon()?;
    let mut stdout = std::io::stdout().lock();
    for c in lexicon.concepts() {
        let variants: Vec<&str> = c.variants().iter().map(|v| v.id()).collect();
        match writeln!(stdout, "{}\t{}", c.id(), variants.join(", ")) {
            Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => return Ok(()),
            r => r?,
        }
    }
    Ok(())
}
