//! Output artifacts: distance-matrix CSV, GeoJSON feature collections and
//! minimal SVG choropleths.
//!
//! Every writer takes a `meta` map of extra provenance entries (config digest
//! and the like) that is embedded verbatim. Nothing time-dependent is
//! written, so identical inputs produce identical bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{self, Write};

use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::analysis::{ConceptScope, DistanceField, DistanceMatrix, MajorityMap};
use crate::grid::{CellBounds, CellId, GridSpec};
use crate::lexicon::Lexicon;

pub type Meta = BTreeMap<String, String>;

#[derive(Debug, Error)]
pub enum ExportError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("not a distance-field GeoJSON: {0}")]
    BadField(String),
}

fn threshold_text(t: Option<crate::freqmodel::Threshold>) -> String {
    t.map_or_else(|| "none".to_string(), |t| t.to_string())
}

/// Writes the matrix as CSV: `#` metadata, a header row of cell ids
/// (`col:row`), then one row per cell. Undefined entries are empty.
pub fn write_matrix_csv<W: Write>(
    matrix: &DistanceMatrix,
    meta: &Meta,
    mut w: W,
) -> io::Result<()> {
    writeln!(w, "# lexvar distance-matrix v1")?;
    writeln!(w, "# metric={}", matrix.kind())?;
    writeln!(w, "# scope={}", matrix.scope())?;
    writeln!(w, "# threshold={}", threshold_text(matrix.threshold()))?;
    writeln!(w, "# grid={}", matrix.spec())?;
    writeln!(w, "# lexicon_digest={}", matrix.lexicon_digest())?;
    for (k, v) in meta {
        writeln!(w, "# {k}={v}")?;
    }
    let mut line = String::from("cell");
    for c in matrix.cells() {
        write!(line, ",{c}").unwrap();
    }
    writeln!(w, "{line}")?;
    for (i, c) in matrix.cells().iter().enumerate() {
        line.clear();
        write!(line, "{c}").unwrap();
        for j in 0..matrix.len() {
            match matrix.get(i, j) {
                Some(d) => write!(line, ",{d}").unwrap(),
                None => line.push(','),
            }
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

fn polygon(b: CellBounds) -> Value {
    json!({
        "type": "Polygon",
        "coordinates": [[
            [b.min_lon, b.min_lat],
            [b.max_lon, b.min_lat],
            [b.max_lon, b.max_lat],
            [b.min_lon, b.max_lat],
            [b.min_lon, b.min_lat],
        ]]
    })
}

fn feature(spec: &GridSpec, cell: CellId, key: &str, value: Value) -> Value {
    let bounds = spec.cell_bounds(cell).expect("cell inside grid");
    json!({
        "type": "Feature",
        "geometry": polygon(bounds),
        "properties": { "col": cell.col, "row": cell.row, key: value },
    })
}

fn collection(metadata: Map<String, Value>, features: Vec<Value>) -> Value {
    json!({ "type": "FeatureCollection", "metadata": metadata, "features": features })
}

fn meta_object(meta: &Meta) -> Map<String, Value> {
    meta.iter()
        .map(|(k, v)| (k.clone(), Value::String(v.clone())))
        .collect()
}

/// One Polygon feature per cell with properties `{col, row, value}`.
pub fn field_geojson(field: &DistanceField, spec: &GridSpec, meta: &Meta) -> Value {
    let mut m = meta_object(meta);
    m.insert("kind".into(), json!("distance-field"));
    m.insert("metric".into(), json!(field.kind.to_string()));
    m.insert("scope".into(), json!(field.scope.to_string()));
    m.insert("threshold".into(), json!(threshold_text(field.threshold)));
    m.insert("reference".into(), json!(field.reference.to_string()));
    m.insert("d_max".into(), json!(field.d_max));
    m.insert("grid".into(), json!(spec.to_string()));
    let features = field
        .entries
        .iter()
        .map(|(c, v)| feature(spec, *c, "value", json!(v)))
        .collect();
    collection(m, features)
}

/// One Polygon feature per cell with properties `{col, row, variant}`.
pub fn majority_geojson(map: &MajorityMap, spec: &GridSpec, meta: &Meta) -> Value {
    let mut m = meta_object(meta);
    m.insert("kind".into(), json!("majority-map"));
    m.insert("concept".into(), json!(map.concept_id));
    m.insert("tie_break".into(), json!("first variant in lexicon order"));
    m.insert(
        "tie_cells".into(),
        json!(map.ties.iter().map(ToString::to_string).collect::<Vec<_>>()),
    );
    m.insert("grid".into(), json!(spec.to_string()));
    let features = map
        .entries
        .iter()
        .map(|(c, v)| feature(spec, *c, "variant", json!(v)))
        .collect();
    collection(m, features)
}

/// Serializes a GeoJSON value with a trailing newline.
pub fn write_json<W: Write>(value: &Value, mut w: W) -> Result<(), ExportError> {
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    Ok(())
}

/// Reads back a field written by [`field_geojson`].
pub fn read_field_geojson(text: &str) -> Result<DistanceField, ExportError> {
    let v: Value = serde_json::from_str(text)?;
    let bad = |m: &str| ExportError::BadField(m.to_string());
    let meta = v
        .get("metadata")
        .and_then(Value::as_object)
        .ok_or_else(|| bad("no metadata"))?;
    let get = |k: &str| meta.get(k).and_then(Value::as_str).ok_or_else(|| bad(k));
    if get("kind")? != "distance-field" {
        return Err(bad("kind"));
    }
    let kind = get("metric")?.parse().map_err(|e: String| bad(&e))?;
    let scope: ConceptScope = get("scope")?.parse().unwrap();
    let reference = get("reference")?.parse().map_err(|e: String| bad(&e))?;
    let d_max = meta
        .get("d_max")
        .and_then(Value::as_f64)
        .ok_or_else(|| bad("d_max"))?;
    let threshold = match get("threshold")? {
        "none" => None,
        t => {
            let (n, mode) = t.split_once(' ').ok_or_else(|| bad("threshold"))?;
            Some(crate::freqmodel::Threshold {
                min_tweets: n.parse().map_err(|_| bad("threshold"))?,
                mode: mode.parse().map_err(|e: String| bad(&e))?,
            })
        }
    };
    let mut entries = BTreeMap::new();
    for f in v
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| bad("features"))?
    {
        let p = f.get("properties").ok_or_else(|| bad("properties"))?;
        let num = |k: &str| p.get(k).and_then(Value::as_u64).ok_or_else(|| bad(k));
        let cell = CellId::new(num("col")? as u32, num("row")? as u32);
        let value = p
            .get("value")
            .and_then(Value::as_f64)
            .ok_or_else(|| bad("value"))?;
        entries.insert(cell, value);
    }
    Ok(DistanceField {
        reference,
        entries,
        kind,
        scope,
        threshold,
        d_max,
    })
}

const VIRIDIS: [(u8, u8, u8); 5] = [
    (0x44, 0x01, 0x54),
    (0x3b, 0x52, 0x8b),
    (0x21, 0x91, 0x8c),
    (0x5e, 0xc9, 0x62),
    (0xfd, 0xe7, 0x25),
];

const PALETTE: [&str; 12] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf", "#393b79", "#ad494a",
];

/// Maps `t ∈ [0, 1]` onto a viridis-like ramp.
pub fn ramp_color(t: f64) -> String {
    let t = if t.is_finite() {
        t.clamp(0.0, 1.0)
    } else {
        0.0
    };
    let x = t * (VIRIDIS.len() - 1) as f64;
    let i = (x.floor() as usize).min(VIRIDIS.len() - 2);
    let f = x - i as f64;
    let lerp = |a: u8, b: u8| (a as f64 + (b as f64 - a as f64) * f).round() as u8;
    let (a, b) = (VIRIDIS[i], VIRIDIS[i + 1]);
    format!(
        "#{:02x}{:02x}{:02x}",
        lerp(a.0, b.0),
        lerp(a.1, b.1),
        lerp(a.2, b.2)
    )
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

const PX_PER_DEG: f64 = 40.0;
const MARGIN_LEFT: f64 = 56.0;
const MARGIN_TOP: f64 = 36.0;
const MARGIN_BOTTOM: f64 = 40.0;
const LEGEND_WIDTH: f64 = 190.0;

struct Canvas {
    extent: CellBounds,
    svg: String,
    height: f64,
}

impl Canvas {
    fn new(spec: &GridSpec, title: &str, meta: &Meta) -> Self {
        let extent = spec.extent();
        let map_w = (extent.max_lon - extent.min_lon) * PX_PER_DEG;
        let map_h = (extent.max_lat - extent.min_lat) * PX_PER_DEG;
        let width = MARGIN_LEFT + map_w + LEGEND_WIDTH;
        let height = MARGIN_TOP + map_h + MARGIN_BOTTOM;
        let mut svg = String::new();
        writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="11">"#
        )
        .unwrap();
        for (k, v) in meta {
            writeln!(svg, "<!-- {}={} -->", escape(k), escape(v)).unwrap();
        }
        writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
        writeln!(
            svg,
            r##"<rect x="{MARGIN_LEFT:.2}" y="{MARGIN_TOP:.2}" width="{map_w:.2}" height="{map_h:.2}" fill="#f2f2f2" stroke="#999"/>"##
        )
        .unwrap();
        writeln!(
            svg,
            r#"<text x="{MARGIN_LEFT:.2}" y="22" font-size="14">{}</text>"#,
            escape(title)
        )
        .unwrap();
        let mut c = Canvas {
            extent,
            svg,
            height,
        };
        c.axes();
        c
    }

    fn x(&self, lon: f64) -> f64 {
        MARGIN_LEFT + (lon - self.extent.min_lon) * PX_PER_DEG
    }

    fn y(&self, lat: f64) -> f64 {
        MARGIN_TOP + (self.extent.max_lat - lat) * PX_PER_DEG
    }

    fn axes(&mut self) {
        let e = self.extent;
        let (bottom, left) = (self.y(e.min_lat), self.x(e.min_lon));
        let mut lon = e.min_lon.ceil();
        while lon <= e.max_lon {
            let x = self.x(lon);
            writeln!(
                self.svg,
                r##"<line x1="{x:.2}" y1="{bottom:.2}" x2="{x:.2}" y2="{:.2}" stroke="#333"/>"##,
                bottom + 4.0
            )
            .unwrap();
            writeln!(
                self.svg,
                r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{lon}</text>"#,
                bottom + 16.0
            )
            .unwrap();
            lon += 1.0;
        }
        let mut lat = e.min_lat.ceil();
        while lat <= e.max_lat {
            let y = self.y(lat);
            writeln!(
                self.svg,
                r##"<line x1="{:.2}" y1="{y:.2}" x2="{left:.2}" y2="{y:.2}" stroke="#333"/>"##,
                left - 4.0
            )
            .unwrap();
            writeln!(
                self.svg,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{lat}</text>"#,
                left - 6.0,
                y + 4.0
            )
            .unwrap();
            lat += 1.0;
        }
        let mid_x = (self.x(e.min_lon) + self.x(e.max_lon)) / 2.0;
        writeln!(
            self.svg,
            r#"<text x="{mid_x:.2}" y="{:.2}" text-anchor="middle">longitude</text>"#,
            self.height - 4.0
        )
        .unwrap();
        let mid_y = (self.y(e.min_lat) + self.y(e.max_lat)) / 2.0;
        writeln!(
            self.svg,
            r#"<text x="12" y="{mid_y:.2}" text-anchor="middle" transform="rotate(-90 12 {mid_y:.2})">latitude</text>"#
        )
        .unwrap();
    }

    fn cell(&mut self, b: CellBounds, fill: &str, stroke: Option<&str>) {
        let (x, y) = (self.x(b.min_lon), self.y(b.max_lat));
        let w = (b.max_lon - b.min_lon) * PX_PER_DEG;
        let h = (b.max_lat - b.min_lat) * PX_PER_DEG;
        let stroke = stroke.map_or(String::new(), |s| {
            format!(r#" stroke="{s}" stroke-width="2""#)
        });
        writeln!(
            self.svg,
            r#"<rect x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{h:.2}" fill="{fill}"{stroke}/>"#
        )
        .unwrap();
    }

    fn legend_x(&self) -> f64 {
        self.x(self.extent.max_lon) + 20.0
    }

    fn finish(mut self) -> String {
        self.svg.push_str("</svg>\n");
        self.svg
    }
}

/// Choropleth of a distance field on a viridis ramp; the reference cell is outlined.
pub fn field_svg(field: &DistanceField, spec: &GridSpec, meta: &Meta) -> String {
    let title = format!(
        "{} distance to {} ({}, threshold {})",
        field.kind,
        field.reference,
        field.scope,
        threshold_text(field.threshold)
    );
    let mut c = Canvas::new(spec, &title, meta);
    for (cell, v) in &field.entries {
        let b = spec.cell_bounds(*cell).expect("cell inside grid");
        let stroke = (*cell == field.reference).then_some("red");
        c.cell(b, &ramp_color(*v), stroke);
    }
    let lx = c.legend_x();
    let top = MARGIN_TOP;
    let steps = 20;
    let bar_h = 200.0;
    for i in 0..steps {
        let t = 1.0 - i as f64 / (steps - 1) as f64;
        let y = top + i as f64 * bar_h / steps as f64;
        writeln!(
            c.svg,
            r#"<rect x="{lx:.2}" y="{y:.2}" width="18" height="{:.2}" fill="{}"/>"#,
            bar_h / steps as f64 + 0.5,
            ramp_color(t)
        )
        .unwrap();
    }
    for (t, label) in [(1.0, "1.0"), (0.5, "0.5"), (0.0, "0.0")] {
        let y = top + (1.0 - t) * bar_h;
        writeln!(
            c.svg,
            r#"<text x="{:.2}" y="{:.2}">{label}</text>"#,
            lx + 24.0,
            y + 4.0
        )
        .unwrap();
    }
    writeln!(
        c.svg,
        r#"<text x="{lx:.2}" y="{:.2}">d / d_max</text>"#,
        top + bar_h + 20.0
    )
    .unwrap();
    c.finish()
}

/// Choropleth with one color per variant and a legend in lexicon order.
pub fn majority_svg(map: &MajorityMap, spec: &GridSpec, lexicon: &Lexicon, meta: &Meta) -> String {
    let title = format!("majority variant: {}", map.concept_id);
    let mut c = Canvas::new(spec, &title, meta);
    let variants: Vec<&str> = lexicon
        .concept_index(&map.concept_id)
        .map(|ci| {
            lexicon
                .concept(ci)
                .variants()
                .iter()
                .map(|v| v.id())
                .collect()
        })
        .unwrap_or_default();
    let color_of = |v: &str| {
        let i = variants.iter().position(|x| *x == v).unwrap_or(0);
        PALETTE[i % PALETTE.len()]
    };
    for (cell, v) in &map.entries {
        let b = spec.cell_bounds(*cell).expect("cell inside grid");
        c.cell(b, color_of(v), None);
    }
    let lx = c.legend_x();
    let present: Vec<&str> = variants
        .iter()
        .copied()
        .filter(|v| map.entries.values().any(|x| x == v))
        .collect();
    for (i, v) in present.iter().enumerate() {
        let y = MARGIN_TOP + i as f64 * 18.0;
        writeln!(
            c.svg,
            r#"<rect x="{lx:.2}" y="{y:.2}" width="12" height="12" fill="{}"/>"#,
            color_of(v)
        )
        .unwrap();
        writeln!(
            c.svg,
            r#"<text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 18.0,
            y + 10.0,
            escape(v)
        )
        .unwrap();
    }
    c.finish()
}
