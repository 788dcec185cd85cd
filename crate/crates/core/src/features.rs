//! Curve summaries and the named spatial feature dictionary.

use std::collections::HashSet;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{estimate_window, ObservationWindow, PointPattern};
use crate::ppstats::{
    self, default_bandwidth, default_quadrats, CurveEstimate, DistanceGrid, EdgeCorrection, FunctionId,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Category {
    Density,
    Spacing,
    Correlation,
}

impl Category {
    pub fn as_str(&self) -> &'static str {
        match self {
            Category::Density => "Density",
            Category::Spacing => "Spacing",
            Category::Correlation => "Correlation",
        }
    }

    /// Whether a free-form category tag names one of the spatial categories.
    pub fn is_spatial_tag(tag: &str) -> bool {
        tag.parse::<Category>().is_ok()
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Density" => Ok(Category::Density),
            "Spacing" => Ok(Category::Spacing),
            "Correlation" => Ok(Category::Correlation),
            other => Err(Error::invalid(format!("unknown spatial category `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SummaryKind {
    Auc,
    Max,
    Min,
    DistAtMax,
    DistAtMin,
    Mean,
    Std,
}

impl SummaryKind {
    pub const ALL: [SummaryKind; 7] = [
        SummaryKind::Auc,
        SummaryKind::Max,
        SummaryKind::Min,
        SummaryKind::DistAtMax,
        SummaryKind::DistAtMin,
        SummaryKind::Mean,
        SummaryKind::Std,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            SummaryKind::Auc => "auc",
            SummaryKind::Max => "max",
            SummaryKind::Min => "min",
            SummaryKind::DistAtMax => "dist_at_max",
            SummaryKind::DistAtMin => "dist_at_min",
            SummaryKind::Mean => "mean",
            SummaryKind::Std => "std",
        }
    }
}

/// Where a feature value comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureSource {
    Curve(FunctionId, SummaryKind),
    Ann,
    GlobalDensity,
}

impl FeatureSource {
    /// Short tag of the underlying method, as written to roster files.
    pub fn method(&self) -> &'static str {
        match self {
            FeatureSource::Curve(FunctionId::K | FunctionId::L, _) => "K/L",
            FeatureSource::Curve(f, _) => f.label(),
            FeatureSource::Ann => "ANN",
            FeatureSource::GlobalDensity => "density",
        }
    }

    pub fn default_name(&self) -> String {
        match self {
            FeatureSource::Curve(f, k) => format!("{}.{}", f.label(), k.as_str()),
            FeatureSource::Ann => "ANN".to_string(),
            FeatureSource::GlobalDensity => "GlobalDensity".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDescriptor {
    pub name: String,
    pub category: Category,
    pub source: FeatureSource,
}

impl FeatureDescriptor {
    pub fn new(source: FeatureSource, category: Category) -> Self {
        Self {
            name: source.default_name(),
            category,
            source,
        }
    }
}

/// Ordered roster of features with unique names.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDictionary {
    descriptors: Vec<FeatureDescriptor>,
}

impl FeatureDictionary {
    pub fn new(descriptors: Vec<FeatureDescriptor>) -> Result<Self> {
        let mut seen = HashSet::new();
        for d in &descriptors {
            if !seen.insert(d.name.as_str()) {
                return Err(Error::invalid(format!("duplicate feature name `{}`", d.name)));
            }
        }
        Ok(Self { descriptors })
    }

    /// The default 30-feature roster.
    ///
    /// Density (2): `GlobalDensity`, `ANN`.
    /// Correlation (10): auc, max, min, dist_at_max, dist_at_min of L and g.
    /// Spacing (18): the same five plus mean, for G, F and J.
    pub fn default_spatial() -> Self {
        use SummaryKind::*;
        let mut d = vec![
            FeatureDescriptor::new(FeatureSource::GlobalDensity, Category::Density),
            FeatureDescriptor::new(FeatureSource::Ann, Category::Density),
        ];
        for f in [FunctionId::L, FunctionId::PairCorrelation] {
            for k in [Auc, Max, Min, DistAtMax, DistAtMin] {
                d.push(FeatureDescriptor::new(FeatureSource::Curve(f, k), Category::Correlation));
            }
        }
        for f in [FunctionId::G, FunctionId::F, FunctionId::J] {
            for k in [Auc, Max, Min, DistAtMax, DistAtMin, Mean] {
                d.push(FeatureDescriptor::new(FeatureSource::Curve(f, k), Category::Spacing));
            }
        }
        Self { descriptors: d }
    }

    pub fn descriptors(&self) -> &[FeatureDescriptor] {
        &self.descriptors
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.descriptors.iter().map(|d| d.name.as_str())
    }

    pub fn len(&self) -> usize {
        self.descriptors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.descriptors.is_empty()
    }

    fn uses(&self, f: FunctionId) -> bool {
        self.descriptors.iter().any(|d| match d.source {
            FeatureSource::Curve(g, _) => g == f || (f == FunctionId::G && g == FunctionId::J) || (f == FunctionId::F && g == FunctionId::J),
            _ => false,
        })
    }
}

impl Default for FeatureDictionary {
    fn default() -> Self {
        Self::default_spatial()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveSummary {
    pub auc: f64,
    pub max: f64,
    pub min: f64,
    pub dist_at_max: f64,
    pub dist_at_min: f64,
    pub mean: f64,
    pub std: f64,
}

impl CurveSummary {
    pub fn get(&self, kind: SummaryKind) -> f64 {
        match kind {
            SummaryKind::Auc => self.auc,
            SummaryKind::Max => self.max,
            SummaryKind::Min => self.min,
            SummaryKind::DistAtMax => self.dist_at_max,
            SummaryKind::DistAtMin => self.dist_at_min,
            SummaryKind::Mean => self.mean,
            SummaryKind::Std => self.std,
        }
    }
}

/// CSR value of a function at radius `r` for intensity `lambda`.
pub(crate) fn csr_value(f: FunctionId, lambda: f64, r: f64) -> f64 {
    match f {
        FunctionId::K => PI * r * r,
        FunctionId::L => 0.0,
        FunctionId::PairCorrelation | FunctionId::J => 1.0,
        FunctionId::G | FunctionId::F => 1.0 - (-lambda * PI * r * r).exp(),
    }
}

/// Subtracts the CSR baseline so that zero means "no departure from
/// randomness". L is already centered; G and F use the curve's own λ.
pub fn center_curve(curve: &CurveEstimate) -> CurveEstimate {
    let values = curve
        .radii
        .radii()
        .iter()
        .zip(&curve.values)
        .map(|(&r, &v)| v - csr_value(curve.function, curve.intensity, r))
        .collect();
    CurveEstimate {
        values,
        ..curve.clone()
    }
}

/// AUC (signed trapezoid), extrema and where they occur, mean and sample
/// standard deviation over the defined samples of a centered curve.
/// Extremum ties go to the smallest radius.
pub fn summarize_curve(centered: &CurveEstimate) -> Result<CurveSummary> {
    let pts: Vec<(f64, f64)> = centered.defined().collect();
    if pts.len() < 2 {
        return Err(Error::InsufficientPoints {
            needed: 2,
            found: pts.len(),
        });
    }
    let auc = pts
        .windows(2)
        .map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0))
        .sum();
    let (mut max, mut dist_at_max) = (pts[0].1, pts[0].0);
    let (mut min, mut dist_at_min) = (pts[0].1, pts[0].0);
    for &(r, v) in &pts[1..] {
        if v > max {
            max = v;
            dist_at_max = r;
        }
        if v < min {
            min = v;
            dist_at_min = r;
        }
    }
    let n = pts.len() as f64;
    let mean = pts.iter().map(|p| p.1).sum::<f64>() / n;
    // Shifted by the first value so a constant curve has exactly zero spread.
    let shift = pts[0].1;
    let (s1, s2) = pts.iter().fold((0.0, 0.0), |(a, b), p| {
        let d = p.1 - shift;
        (a + d, b + d * d)
    });
    let var = ((s2 - s1 * s1 / n) / (n - 1.0)).max(0.0);
    Ok(CurveSummary {
        auc,
        max,
        min,
        dist_at_max,
        dist_at_min,
        // Rounding can push the mean of a constant curve past its extrema.
        mean: mean.clamp(min, max),
        std: var.sqrt(),
    })
}

/// Knobs for [`extract_spatial_features`]. `None` fields fall back to
/// data-driven defaults.
#[derive(Debug, Clone)]
pub struct FeatureConfig {
    pub grid: Option<DistanceGrid>,
    /// Correction for K, L and g.
    pub pair_correction: EdgeCorrection,
    /// Correction for G, F and J.
    pub nn_correction: EdgeCorrection,
    pub g_bandwidth: Option<f64>,
    pub n_quadrats: Option<usize>,
    pub seed: u64,
    pub dictionary: FeatureDictionary,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            grid: None,
            pair_correction: EdgeCorrection::RipleyIsotropic,
            nn_correction: EdgeCorrection::KaplanMeier,
            g_bandwidth: None,
            n_quadrats: None,
            seed: 0,
            dictionary: FeatureDictionary::default_spatial(),
        }
    }
}

/// One observation's feature values in dictionary order; `None` is missing.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub observation_id: String,
    pub values: Vec<(String, Option<f64>)>,
}

impl FeatureVector {
    /// All-missing row for an observation whose extraction failed.
    pub fn missing(observation_id: impl Into<String>, dictionary: &FeatureDictionary) -> Self {
        Self {
            observation_id: observation_id.into(),
            values: dictionary.names().map(|n| (n.to_string(), None)).collect(),
        }
    }

    pub fn get(&self, name: &str) -> Option<Option<f64>> {
        self.values.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }
}

/// Computes the configured dictionary for one pattern in a given window.
///
/// Points outside the window are dropped first. Individual estimator or
/// summary failures leave the affected features missing; the returned list
/// holds one diagnostic per failure.
pub fn extract_spatial_features(
    pattern: &PointPattern,
    window: &ObservationWindow,
    config: &FeatureConfig,
) -> Result<(FeatureVector, Vec<String>)> {
    let inside = pattern.restrict_to(window);
    if inside.len() < 2 {
        return Err(Error::InsufficientPoints {
            needed: 2,
            found: inside.len(),
        });
    }
    let dict = &config.dictionary;
    let lambda = ppstats::global_density(&inside, window)?.lambda;
    let grid = match &config.grid {
        Some(g) => g.clone(),
        None => DistanceGrid::auto(window)?,
    };
    let mut diagnostics = Vec::new();
    let mut note = |what: &str, e: &Error| diagnostics.push(format!("{what}: {e}"));

    let mut curves: Vec<(FunctionId, CurveEstimate)> = Vec::new();
    if dict.uses(FunctionId::L) || dict.uses(FunctionId::K) {
        match ppstats::k_function(&inside, window, &grid, config.pair_correction) {
            Ok(k) => {
                if let Ok(l) = ppstats::l_function(&k) {
                    curves.push((FunctionId::L, l));
                }
                curves.push((FunctionId::K, k));
            }
            Err(e) => note("K", &e),
        }
    }
    if dict.uses(FunctionId::PairCorrelation) {
        let b = config.g_bandwidth.unwrap_or_else(|| default_bandwidth(lambda));
        match ppstats::g_function(&inside, window, &grid, config.pair_correction, b) {
            Ok(g) => curves.push((FunctionId::PairCorrelation, g)),
            Err(e) => note("g", &e),
        }
    }
    let mut g_nn = None;
    let mut f_es = None;
    if dict.uses(FunctionId::G) {
        match ppstats::g_empirical_cdf(&inside, window, &grid, config.nn_correction) {
            Ok(c) => g_nn = Some(c),
            Err(e) => note("G", &e),
        }
    }
    if dict.uses(FunctionId::F) {
        let nq = config.n_quadrats.unwrap_or_else(|| default_quadrats(inside.len()));
        match ppstats::f_function(&inside, window, &grid, config.nn_correction, nq, config.seed) {
            Ok(c) => f_es = Some(c),
            Err(e) => note("F", &e),
        }
    }
    if let (Some(g), Some(f)) = (&g_nn, &f_es) {
        match ppstats::j_function(g, f) {
            Ok(j) => curves.push((FunctionId::J, j)),
            Err(e) => note("J", &e),
        }
    }
    curves.extend(g_nn.map(|c| (FunctionId::G, c)));
    curves.extend(f_es.map(|c| (FunctionId::F, c)));

    let mut summaries: Vec<(FunctionId, CurveSummary)> = Vec::new();
    for (f, c) in &curves {
        match summarize_curve(&center_curve(c)) {
            Ok(s) => summaries.push((*f, s)),
            Err(e) => note(&format!("{f} summary"), &e),
        }
    }
    let ann = match ppstats::ann(&inside) {
        Ok(v) => Some(v),
        Err(e) => {
            note("ANN", &e);
            None
        }
    };

    let values = dict
        .descriptors()
        .iter()
        .map(|d| {
            let v = match d.source {
                FeatureSource::GlobalDensity => Some(lambda),
                FeatureSource::Ann => ann,
                FeatureSource::Curve(f, kind) => summaries.iter().find(|(g, _)| *g == f).map(|(_, s)| s.get(kind)),
            };
            (d.name.clone(), v.filter(|x| x.is_finite()))
        })
        .collect();

    Ok((
        FeatureVector {
            observation_id: pattern.slide_id.clone(),
            values,
        },
        diagnostics,
    ))
}

/// Window parameters for whole-slide extraction.
#[derive(Debug, Clone, Copy)]
pub struct WindowParams {
    pub eps: f64,
    pub min_samples: usize,
}

impl Default for WindowParams {
    fn default() -> Self {
        Self {
            eps: crate::geometry::DEFAULT_EPS,
            min_samples: crate::geometry::DEFAULT_MIN_SAMPLES,
        }
    }
}

/// Result of extracting one slide; failed slides get an all-missing row.
#[derive(Debug, Clone)]
pub struct Extraction {
    pub vector: FeatureVector,
    pub diagnostics: Vec<String>,
    pub window_area: Option<f64>,
}

/// Estimates each pattern's window and extracts its features. Patterns are
/// independent and processed in parallel; output order follows input order.
pub fn extract_batch(patterns: &[PointPattern], params: WindowParams, config: &FeatureConfig) -> Vec<Extraction> {
    patterns
        .par_iter()
        .map(|p| {
            let window = match estimate_window(p, params.eps, params.min_samples) {
                Ok(w) => w,
                Err(e) => {
                    return Extraction {
                        vector: FeatureVector::missing(p.slide_id.clone(), &config.dictionary),
                        diagnostics: vec![format!("window: {e}")],
                        window_area: None,
                    }
                }
            };
            let mut diagnostics = Vec::new();
            if window.has_overlaps() {
                diagnostics.push("window: overlapping hulls, area is the plain sum".to_string());
            }
            let dups = p.duplicate_count();
            if dups > 0 {
                diagnostics.push(format!("{dups} duplicated centroid(s) kept"));
            }
            match extract_spatial_features(p, &window, config) {
                Ok((vector, diag)) => {
                    diagnostics.extend(diag);
                    Extraction {
                        vector,
                        diagnostics,
                        window_area: Some(window.total_area()),
                    }
                }
                Err(e) => {
                    diagnostics.push(format!("features: {e}"));
                    Extraction {
                        vector: FeatureVector::missing(p.slide_id.clone(), &config.dictionary),
                        diagnostics,
                        window_area: Some(window.total_area()),
                    }
                }
            }
        })
        .collect()
}
