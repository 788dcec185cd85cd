//! File formats: centroid tables, feature matrices with their category
//! metadata, phenotypes, association results and plot data.
//!
//! Inputs are comma-separated, results are tab-separated, plot data is JSON.
//! All text is UTF-8 with LF line endings. Missing cells are the literal
//! `NA`; empty cells are errors.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::assoc::{AssociationResult, FeatureColumn, FeatureMatrix, PhenotypeVector, EXTERNAL_CATEGORY};
use crate::error::{Error, Result};
use crate::features::{Category, FeatureDictionary};
use crate::geometry::{Point2D, PointPattern};
use crate::simulate::{Coverage, ValidationRun};

/// Version of the plot-data JSON layout.
pub const PLOT_SCHEMA_VERSION: u32 = 1;
/// Missing-value token.
pub const NA: &str = "NA";
/// Features shown below the Manhattan threshold.
pub const DEFAULT_TOP_BELOW: usize = 25;

pub const CENTROID_COLUMNS: [&str; 4] = ["slide_id", "object_type", "x_um", "y_um"];
pub const RESULT_COLUMNS: [&str; 11] = [
    "feature",
    "category",
    "beta",
    "se",
    "ci_low",
    "ci_high",
    "p",
    "neg_log10_p",
    "sig_bonferroni",
    "sig_fdr",
    "n_used",
];

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn csv_reader<R: Read>(reader: R, delimiter: u8) -> csv::Reader<R> {
    csv::ReaderBuilder::new().delimiter(delimiter).from_reader(reader)
}

fn csv_writer<W: Write>(writer: W, delimiter: u8) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .delimiter(delimiter)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer)
}

fn parse_error(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn record_line(r: &csv::StringRecord) -> u64 {
    r.position().map_or(0, |p| p.line())
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    parse_error(path, line, e.to_string())
}

/// Reals are written in scientific notation with 17 significant digits,
/// which round-trips every `f64` exactly.
pub fn format_real(v: f64) -> String {
    format!("{v:.16e}")
}

fn format_cell(v: Option<f64>) -> String {
    v.map_or_else(|| NA.to_string(), format_real)
}

fn parse_real(path: &Path, line: u64, column: &str, cell: &str) -> Result<f64> {
    let v: f64 = cell
        .trim()
        .parse()
        .map_err(|_| parse_error(path, line, format!("column `{column}`: `{cell}` is not a number")))?;
    if !v.is_finite() {
        return Err(parse_error(path, line, format!("column `{column}`: `{cell}` is not finite")));
    }
    Ok(v)
}

fn parse_cell(path: &Path, line: u64, column: &str, cell: &str) -> Result<Option<f64>> {
    match cell.trim() {
        "" => Err(parse_error(path, line, format!("column `{column}`: empty cell (write `NA` for missing)"))),
        NA => Ok(None),
        c => parse_real(path, line, column, c).map(Some),
    }
}

fn header_index(path: &Path, headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| parse_error(path, 1, format!("missing column `{name}`")))
}

fn check_unique_headers(path: &Path, headers: &csv::StringRecord) -> Result<()> {
    let mut seen = HashSet::new();
    for h in headers {
        if !seen.insert(h) {
            return Err(parse_error(path, 1, format!("duplicate column `{h}`")));
        }
    }
    Ok(())
}

/// Reads a centroid table and groups rows by `(slide_id, object_type)`,
/// groups in order of first appearance and points in row order.
pub fn read_centroids(path: impl AsRef<Path>) -> Result<Vec<PointPattern>> {
    let path = path.as_ref();
    read_centroids_from(open(path)?, path)
}

/// Like [`read_centroids`], from any reader; `path` only labels errors.
pub fn read_centroids_from<R: Read>(reader: R, path: &Path) -> Result<Vec<PointPattern>> {
    let mut rdr = csv_reader(reader, b',');
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    check_unique_headers(path, &headers)?;
    let idx: Vec<usize> = CENTROID_COLUMNS
        .iter()
        .map(|c| header_index(path, &headers, c))
        .collect::<Result<_>>()?;
    for h in headers.iter().filter(|h| !CENTROID_COLUMNS.contains(h)) {
        warn!("{}: ignoring unknown column `{h}`", path.display());
    }

    let mut order: Vec<(String, String)> = Vec::new();
    let mut groups: HashMap<(String, String), Vec<Point2D>> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = record_line(&rec);
        let slide = rec[idx[0]].trim();
        if slide.is_empty() {
            return Err(parse_error(path, line, "empty slide_id"));
        }
        let object_type = rec[idx[1]].trim();
        let x = parse_real(path, line, "x_um", &rec[idx[2]])?;
        let y = parse_real(path, line, "y_um", &rec[idx[3]])?;
        let key = (slide.to_string(), object_type.to_string());
        groups
            .entry(key.clone())
            .or_insert_with(|| {
                order.push(key);
                Vec::new()
            })
            .push(Point2D::new(x, y));
    }
    order
        .into_iter()
        .map(|key| {
            let points = groups.remove(&key).expect("every ordered key has a group");
            PointPattern::new(points, key.0, key.1)
        })
        .collect()
}

pub fn write_centroids(path: impl AsRef<Path>, patterns: &[PointPattern]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(create(path)?, b',');
    w.write_record(CENTROID_COLUMNS)?;
    for p in patterns {
        for q in p.points() {
            w.write_record([
                p.slide_id.as_str(),
                p.object_type.as_str(),
                &format_real(q.x),
                &format_real(q.y),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Companion metadata path: `dir/name.csv` → `dir/name.meta.csv`.
pub fn metadata_path(matrix_path: &Path) -> PathBuf {
    let stem = matrix_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    matrix_path.with_file_name(format!("{stem}.meta.csv"))
}

/// One metadata row: feature name, category tag and source method.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureMeta {
    pub feature: String,
    pub category: String,
    pub source: String,
}

/// Metadata rows for a spatial feature dictionary.
pub fn dictionary_metadata(dictionary: &FeatureDictionary) -> Vec<FeatureMeta> {
    dictionary
        .descriptors()
        .iter()
        .map(|d| FeatureMeta {
            feature: d.name.clone(),
            category: d.category.to_string(),
            source: d.source.method().to_string(),
        })
        .collect()
}

pub fn write_metadata(path: impl AsRef<Path>, meta: &[FeatureMeta]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(create(path)?, b',');
    w.write_record(["feature", "category", "source"])?;
    for m in meta {
        w.write_record([&m.feature, &m.category, &m.source])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_metadata(path: impl AsRef<Path>) -> Result<Vec<FeatureMeta>> {
    let path = path.as_ref();
    let mut rdr = csv_reader(open(path)?, b',');
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    let fi = header_index(path, &headers, "feature")?;
    let ci = header_index(path, &headers, "category")?;
    let si = headers.iter().position(|h| h == "source");
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let feature = rec[fi].trim().to_string();
        if !seen.insert(feature.clone()) {
            return Err(parse_error(path, record_line(&rec), format!("duplicate feature `{feature}`")));
        }
        out.push(FeatureMeta {
            feature,
            category: rec[ci].trim().to_string(),
            source: si.map(|i| rec[i].trim().to_string()).unwrap_or_default(),
        });
    }
    Ok(out)
}

/// Writes the matrix and its `.meta.csv` companion. Metadata sources are
/// taken from `sources` when a column is listed there.
pub fn write_feature_matrix(path: impl AsRef<Path>, matrix: &FeatureMatrix, sources: &[FeatureMeta]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(create(path)?, b',');
    let mut header = vec!["observation_id".to_string(), "subject_id".to_string()];
    header.extend(matrix.columns().iter().map(|c| c.name.clone()));
    w.write_record(&header)?;
    for ((obs, subj), row) in matrix
        .observation_ids()
        .iter()
        .zip(matrix.subject_ids())
        .zip(matrix.rows())
    {
        let mut rec = vec![obs.clone(), subj.clone()];
        rec.extend(row.iter().map(|v| format_cell(*v)));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;

    let meta: Vec<FeatureMeta> = matrix
        .columns()
        .iter()
        .map(|c| FeatureMeta {
            feature: c.name.clone(),
            category: c.category.clone(),
            source: sources
                .iter()
                .find(|m| m.feature == c.name)
                .map(|m| m.source.clone())
                .unwrap_or_default(),
        })
        .collect();
    write_metadata(metadata_path(path), &meta)
}

/// Reads a feature matrix. Categories come from the `.meta.csv` companion
/// when present; columns it does not list are tagged [`EXTERNAL_CATEGORY`].
pub fn read_feature_matrix(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let meta_path = metadata_path(path);
    let meta = if meta_path.exists() {
        read_metadata(&meta_path)?
    } else {
        Vec::new()
    };
    let mut rdr = csv_reader(open(path)?, b',');
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    check_unique_headers(path, &headers)?;
    if headers.len() < 2 || &headers[0] != "observation_id" || &headers[1] != "subject_id" {
        return Err(parse_error(path, 1, "header must start with `observation_id,subject_id`"));
    }
    let columns: Vec<FeatureColumn> = headers
        .iter()
        .skip(2)
        .map(|name| {
            let category = meta
                .iter()
                .find(|m| m.feature == name)
                .map_or(EXTERNAL_CATEGORY, |m| m.category.as_str());
            FeatureColumn::new(name, category)
        })
        .collect();
    for m in &meta {
        if !columns.iter().any(|c| c.name == m.feature) {
            warn!("{}: metadata lists `{}`, which is not a column", meta_path.display(), m.feature);
        }
    }

    let mut obs = Vec::new();
    let mut subjects = Vec::new();
    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = record_line(&rec);
        let id = rec[0].trim().to_string();
        if id.is_empty() || rec[1].trim().is_empty() {
            return Err(parse_error(path, line, "empty observation_id or subject_id"));
        }
        if !seen.insert(id.clone()) {
            return Err(parse_error(path, line, format!("duplicate observation_id `{id}`")));
        }
        let row = columns
            .iter()
            .enumerate()
            .map(|(j, c)| parse_cell(path, line, &c.name, &rec[j + 2]))
            .collect::<Result<Vec<_>>>()?;
        obs.push(id);
        subjects.push(rec[1].trim().to_string());
        rows.push(row);
    }
    FeatureMatrix::new(obs, subjects, columns, rows)
}

/// Reads `observation_id,subject_id` pairs.
pub fn read_subject_map(path: impl AsRef<Path>) -> Result<HashMap<String, String>> {
    let path = path.as_ref();
    let mut rdr = csv_reader(open(path)?, b',');
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    let oi = header_index(path, &headers, "observation_id")?;
    let si = header_index(path, &headers, "subject_id")?;
    let mut map = HashMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let obs = rec[oi].trim().to_string();
        if map.insert(obs.clone(), rec[si].trim().to_string()).is_some() {
            return Err(parse_error(path, record_line(&rec), format!("duplicate observation_id `{obs}`")));
        }
    }
    Ok(map)
}

/// Reads `subject_id,<value>`; the value column may have any name.
pub fn read_phenotype(path: impl AsRef<Path>) -> Result<PhenotypeVector> {
    let path = path.as_ref();
    let mut rdr = csv_reader(open(path)?, b',');
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    if headers.len() != 2 || &headers[0] != "subject_id" {
        return Err(parse_error(path, 1, "header must be `subject_id,<phenotype>`"));
    }
    let name = headers[1].to_string();
    let mut ids = Vec::new();
    let mut values = Vec::new();
    let mut seen = HashSet::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = record_line(&rec);
        let id = rec[0].trim().to_string();
        if !seen.insert(id.clone()) {
            return Err(parse_error(path, line, format!("duplicate subject `{id}`")));
        }
        values.push(parse_real(path, line, &name, &rec[1])?);
        ids.push(id);
    }
    PhenotypeVector::new(ids, values)
}

pub fn write_phenotype(path: impl AsRef<Path>, phenotype: &PhenotypeVector, name: &str) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(create(path)?, b',');
    w.write_record(["subject_id", name])?;
    for (id, v) in phenotype.subject_ids().iter().zip(phenotype.values()) {
        w.write_record([id.as_str(), &format_real(*v)])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_results(path: impl AsRef<Path>, results: &[AssociationResult]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(create(path)?, b'\t');
    w.write_record(RESULT_COLUMNS)?;
    for r in results {
        w.write_record([
            r.feature.clone(),
            r.category.clone(),
            format_real(r.beta),
            format_real(r.se),
            format_real(r.ci_low),
            format_real(r.ci_high),
            format_real(r.p),
            format_real(r.neg_log10_p),
            r.sig_bonferroni.to_string(),
            r.sig_fdr.to_string(),
            r.n_used.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_results(path: impl AsRef<Path>) -> Result<Vec<AssociationResult>> {
    let path = path.as_ref();
    let mut rdr = csv_reader(open(path)?, b'\t');
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    if !headers.iter().eq(RESULT_COLUMNS) {
        return Err(parse_error(path, 1, format!("header must be `{}`", RESULT_COLUMNS.join("\\t"))));
    }
    let boolean = |line: u64, col: &str, s: &str| match s {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(parse_error(path, line, format!("column `{col}`: `{other}` is not true/false"))),
    };
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = record_line(&rec);
        let real = |i: usize| parse_real(path, line, RESULT_COLUMNS[i], &rec[i]);
        out.push(AssociationResult {
            feature: rec[0].to_string(),
            category: rec[1].to_string(),
            beta: real(2)?,
            se: real(3)?,
            ci_low: real(4)?,
            ci_high: real(5)?,
            p: real(6)?,
            neg_log10_p: real(7)?,
            sig_bonferroni: boolean(line, RESULT_COLUMNS[8], &rec[8])?,
            sig_fdr: boolean(line, RESULT_COLUMNS[9], &rec[9])?,
            n_used: rec[10]
                .parse()
                .map_err(|_| parse_error(path, line, format!("column `n_used`: `{}` is not a count", &rec[10])))?,
        });
    }
    Ok(out)
}

/// Two display classes: spatial features and everything else.
pub fn category_class(category: &str) -> &'static str {
    if Category::is_spatial_tag(category) {
        "spatial"
    } else {
        "object-level"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub label: String,
    pub p: f64,
    pub neg_log10_p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManhattanPoint {
    /// 1-based significance rank.
    pub rank: usize,
    pub feature: String,
    pub category: String,
    pub class: String,
    pub p: f64,
    pub neg_log10_p: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManhattanData {
    pub schema_version: u32,
    pub n_tests: usize,
    pub threshold: Threshold,
    pub points: Vec<ManhattanPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectPoint {
    pub feature: String,
    pub category: String,
    pub class: String,
    pub beta: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectSizeData {
    pub schema_version: u32,
    pub features: Vec<EffectPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopePanel {
    pub function: String,
    pub radii: Vec<f64>,
    /// `null` where no sample defined the bound.
    pub lower: Vec<Option<f64>>,
    pub upper: Vec<Option<f64>>,
    pub theoretical: Vec<f64>,
    pub samples: Vec<Vec<Option<f64>>>,
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeData {
    pub schema_version: u32,
    pub lambda: f64,
    pub level: f64,
    pub n_samples: usize,
    pub skipped: usize,
    pub panels: Vec<EnvelopePanel>,
}

/// Self-describing plot payload; `kind` selects the variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlotData {
    Manhattan(ManhattanData),
    EffectSize(EffectSizeData),
    Envelope(EnvelopeData),
}

impl PlotData {
    pub fn kind(&self) -> &'static str {
        match self {
            PlotData::Manhattan(_) => "manhattan",
            PlotData::EffectSize(_) => "effect_size",
            PlotData::Envelope(_) => "envelope",
        }
    }
}

fn by_significance(results: &[AssociationResult]) -> Vec<&AssociationResult> {
    let mut sorted: Vec<&AssociationResult> = results.iter().collect();
    sorted.sort_by(|a, b| a.p.total_cmp(&b.p).then_with(|| a.feature.cmp(&b.feature)));
    sorted
}

/// Every feature with p below the Bonferroni threshold `alpha / n_tests`,
/// followed by the `top_below` most significant features above it.
pub fn emit_manhattan_data(results: &[AssociationResult], alpha: f64, n_tests: usize, top_below: usize) -> PlotData {
    let threshold = crate::assoc::bonferroni_threshold(alpha, n_tests);
    let sorted = by_significance(results);
    let n_sig = sorted.iter().take_while(|r| r.p < threshold).count();
    let points = sorted
        .into_iter()
        .take(n_sig + top_below)
        .enumerate()
        .map(|(i, r)| ManhattanPoint {
            rank: i + 1,
            feature: r.feature.clone(),
            category: r.category.clone(),
            class: category_class(&r.category).to_string(),
            p: r.p,
            neg_log10_p: r.neg_log10_p,
            significant: r.p < threshold,
        })
        .collect();
    PlotData::Manhattan(ManhattanData {
        schema_version: PLOT_SCHEMA_VERSION,
        n_tests,
        threshold: Threshold {
            label: "bonferroni".into(),
            p: threshold,
            neg_log10_p: -threshold.log10(),
        },
        points,
    })
}

/// Bonferroni-significant features, most significant first.
pub fn emit_effect_size_data(results: &[AssociationResult]) -> PlotData {
    let features = by_significance(results)
        .into_iter()
        .filter(|r| r.sig_bonferroni)
        .map(|r| EffectPoint {
            feature: r.feature.clone(),
            category: r.category.clone(),
            class: category_class(&r.category).to_string(),
            beta: r.beta,
            ci_low: r.ci_low,
            ci_high: r.ci_high,
            p: r.p,
        })
        .collect();
    PlotData::EffectSize(EffectSizeData {
        schema_version: PLOT_SCHEMA_VERSION,
        features,
    })
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// Envelopes, theoretical curves and per-sample curves of a validation run.
pub fn emit_envelope_data(run: &ValidationRun, coverage: &[Coverage]) -> PlotData {
    let panels = run
        .envelopes
        .iter()
        .map(|e| EnvelopePanel {
            function: e.function.label().to_string(),
            radii: e.radii.radii().to_vec(),
            lower: e.lower.iter().map(|v| finite(*v)).collect(),
            upper: e.upper.iter().map(|v| finite(*v)).collect(),
            theoretical: e.theoretical.clone(),
            samples: run
                .samples
                .iter()
                .filter_map(|s| s.curve(e.function))
                .map(|c| c.values.iter().map(|v| finite(*v)).collect())
                .collect(),
            coverage: coverage
                .iter()
                .find(|c| c.function == e.function)
                .map_or(f64::NAN, |c| c.fraction),
        })
        .collect();
    PlotData::Envelope(EnvelopeData {
        schema_version: PLOT_SCHEMA_VERSION,
        lambda: run.config.lambda,
        level: run.config.level,
        n_samples: run.samples.len(),
        skipped: run.skipped,
        panels,
    })
}

pub fn plot_to_json(data: &PlotData) -> Result<String> {
    let mut s = serde_json::to_string_pretty(data)?;
    s.push('\n');
    Ok(s)
}

pub fn write_plot_data(path: impl AsRef<Path>, data: &PlotData) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, plot_to_json(data)?).map_err(|e| Error::io(path, e))
}

pub fn read_plot_data(path: impl AsRef<Path>) -> Result<PlotData> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let data: PlotData = serde_json::from_str(&text)?;
    let version = match &data {
        PlotData::Manhattan(d) => d.schema_version,
        PlotData::EffectSize(d) => d.schema_version,
        PlotData::Envelope(d) => d.schema_version,
    };
    if version != PLOT_SCHEMA_VERSION {
        return Err(Error::invalid(format!(
            "{}: plot schema version {version}, expected {PLOT_SCHEMA_VERSION}",
            path.display()
        )));
    }
    Ok(data)
}
