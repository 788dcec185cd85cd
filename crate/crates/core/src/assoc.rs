//! Mass-univariate association: subject aggregation, z-scoring, one OLS fit
//! per feature against a scalar phenotype, Bonferroni and Benjamini-Hochberg.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};

/// Smallest reported p-value; keeps −log₁₀(p) finite.
pub const P_FLOOR: f64 = 1e-300;

/// Category tag given to columns that carry no explicit category.
pub const EXTERNAL_CATEGORY: &str = "Object-level";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureColumn {
    pub name: String,
    pub category: String,
}

impl FeatureColumn {
    pub fn new(name: impl Into<String>, category: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            category: category.into(),
        }
    }
}

/// Observations × features with explicit missing cells (`None`).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    observation_ids: Vec<String>,
    subject_ids: Vec<String>,
    columns: Vec<FeatureColumn>,
    rows: Vec<Vec<Option<f64>>>,
}

impl FeatureMatrix {
    pub fn new(
        observation_ids: Vec<String>,
        subject_ids: Vec<String>,
        columns: Vec<FeatureColumn>,
        rows: Vec<Vec<Option<f64>>>,
    ) -> Result<Self> {
        if observation_ids.len() != subject_ids.len() || observation_ids.len() != rows.len() {
            return Err(Error::invalid("observation, subject and row counts differ"));
        }
        let mut seen = HashSet::new();
        for id in &observation_ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::invalid(format!("duplicate observation id `{id}`")));
            }
        }
        let mut names = HashSet::new();
        for c in &columns {
            if !names.insert(c.name.as_str()) {
                return Err(Error::invalid(format!("duplicate feature name `{}`", c.name)));
            }
        }
        for (id, row) in observation_ids.iter().zip(&rows) {
            if row.len() != columns.len() {
                return Err(Error::invalid(format!(
                    "row `{id}` has {} cells, expected {}",
                    row.len(),
                    columns.len()
                )));
            }
            if row.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("row `{id}` has a non-finite value")));
            }
        }
        Ok(Self {
            observation_ids,
            subject_ids,
            columns,
            rows,
        })
    }

    pub fn observation_ids(&self) -> &[String] {
        &self.observation_ids
    }

    pub fn subject_ids(&self) -> &[String] {
        &self.subject_ids
    }

    pub fn columns(&self) -> &[FeatureColumn] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<Option<f64>>] {
        &self.rows
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, j: usize) -> Vec<Option<f64>> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    /// Distinct subject ids in order of first appearance.
    pub fn distinct_subjects(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.subject_ids
            .iter()
            .map(String::as_str)
            .filter(|s| seen.insert(*s))
            .collect()
    }

    /// Same values with every observation assigned to `subject_of(observation_id)`.
    pub fn with_subjects(mut self, subject_of: impl Fn(&str) -> Option<String>) -> Result<Self> {
        for (obs, subj) in self.observation_ids.iter().zip(self.subject_ids.iter_mut()) {
            *subj = subject_of(obs).ok_or_else(|| Error::invalid(format!("no subject for observation `{obs}`")))?;
        }
        Ok(self)
    }

    /// Appends the columns of `other`, joined on observation id. Observations
    /// present on one side only get missing cells for the other side's
    /// columns; they are appended in `other`'s order.
    pub fn merge(mut self, other: &FeatureMatrix) -> Result<Self> {
        for c in &other.columns {
            if self.column_index(&c.name).is_some() {
                return Err(Error::invalid(format!("feature `{}` appears in more than one matrix", c.name)));
            }
        }
        let index: HashMap<&str, usize> = other
            .observation_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();
        let width = self.columns.len();
        let mut matched = vec![false; other.n_rows()];
        for (k, id) in self.observation_ids.iter().enumerate() {
            match index.get(id.as_str()) {
                Some(&i) => {
                    if other.subject_ids[i] != self.subject_ids[k] {
                        return Err(Error::invalid(format!(
                            "observation `{id}` maps to subject `{}` and `{}`",
                            self.subject_ids[k], other.subject_ids[i]
                        )));
                    }
                    matched[i] = true;
                    self.rows[k].extend_from_slice(&other.rows[i]);
                }
                None => {
                    log::warn!("observation `{id}` has no row in the merged matrix; its cells are missing");
                    self.rows[k].extend(std::iter::repeat_n(None, other.n_features()));
                }
            }
        }
        for (i, m) in matched.iter().enumerate() {
            if !m {
                log::warn!(
                    "observation `{}` appears only in the merged matrix; its other cells are missing",
                    other.observation_ids[i]
                );
                let mut row = vec![None; width];
                row.extend_from_slice(&other.rows[i]);
                self.observation_ids.push(other.observation_ids[i].clone());
                self.subject_ids.push(other.subject_ids[i].clone());
                self.rows.push(row);
            }
        }
        self.columns.extend(other.columns.iter().cloned());
        Ok(self)
    }
}

/// One finite phenotype value per subject.
#[derive(Debug, Clone, PartialEq)]
pub struct PhenotypeVector {
    subject_ids: Vec<String>,
    values: Vec<f64>,
}

impl PhenotypeVector {
    pub fn new(subject_ids: Vec<String>, values: Vec<f64>) -> Result<Self> {
        if subject_ids.len() != values.len() {
            return Err(Error::invalid("subject and value counts differ"));
        }
        let mut seen = HashSet::new();
        for (id, v) in subject_ids.iter().zip(&values) {
            if !seen.insert(id.as_str()) {
                return Err(Error::invalid(format!("duplicate phenotype subject `{id}`")));
            }
            if !v.is_finite() {
                return Err(Error::invalid(format!("phenotype of `{id}` is not finite")));
            }
        }
        Ok(Self { subject_ids, values })
    }

    pub fn subject_ids(&self) -> &[String] {
        &self.subject_ids
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, subject: &str) -> Option<f64> {
        self.subject_ids.iter().position(|s| s == subject).map(|i| self.values[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    #[default]
    Mean,
    Median,
}

impl fmt::Display for Aggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Aggregation::Mean => "mean",
            Aggregation::Median => "median",
        })
    }
}

impl FromStr for Aggregation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Self::Mean),
            "median" => Ok(Self::Median),
            other => Err(Error::Config(format!("unknown aggregation `{other}`"))),
        }
    }
}

impl Aggregation {
    fn apply(&self, values: &mut [f64]) -> Option<f64> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        Some(match self {
            Aggregation::Mean => values.iter().sum::<f64>() / n as f64,
            Aggregation::Median => {
                values.sort_by(f64::total_cmp);
                if n % 2 == 1 {
                    values[n / 2]
                } else {
                    0.5 * (values[n / 2 - 1] + values[n / 2])
                }
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudyConfig {
    pub alpha: f64,
    pub fdr_q: f64,
    pub aggregation: Aggregation,
    pub min_subjects: usize,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            fdr_q: 0.05,
            aggregation: Aggregation::Mean,
            min_subjects: 3,
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if !(self.fdr_q > 0.0 && self.fdr_q < 1.0) {
            return Err(Error::Config(format!("fdr_q must lie in (0, 1), got {}", self.fdr_q)));
        }
        if self.min_subjects < 3 {
            return Err(Error::Config("min_subjects must be at least 3".into()));
        }
        Ok(())
    }
}

/// One row per subject (sorted by subject id); each cell aggregates that
/// subject's non-missing observations.
pub fn aggregate_to_subjects(matrix: &FeatureMatrix, method: Aggregation) -> FeatureMatrix {
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in matrix.subject_ids.iter().enumerate() {
        groups.entry(s.as_str()).or_default().push(i);
    }
    let mut buf = Vec::new();
    let rows = groups
        .values()
        .map(|members| {
            (0..matrix.n_features())
                .map(|j| {
                    buf.clear();
                    buf.extend(members.iter().filter_map(|&i| matrix.rows[i][j]));
                    method.apply(&mut buf)
                })
                .collect()
        })
        .collect();
    let ids: Vec<String> = groups.keys().map(|s| s.to_string()).collect();
    FeatureMatrix {
        observation_ids: ids.clone(),
        subject_ids: ids,
        columns: matrix.columns.clone(),
        rows,
    }
}

/// `(x − mean) / sd` over the non-missing entries, with the n−1 sample sd.
pub fn zscore(column: &[Option<f64>]) -> Result<Vec<Option<f64>>> {
    let present: Vec<f64> = column.iter().flatten().copied().collect();
    let n = present.len();
    if n < 2 {
        return Err(Error::InsufficientPoints { needed: 2, found: n });
    }
    let mean = present.iter().sum::<f64>() / n as f64;
    let ss: f64 = present.iter().map(|v| (v - mean) * (v - mean)).sum();
    let sd = (ss / (n - 1) as f64).sqrt();
    if present.iter().all(|&v| v == present[0]) || !(sd > 0.0) {
        return Err(Error::Degenerate("constant column".into()));
    }
    Ok(column.iter().map(|v| v.map(|v| (v - mean) / sd)).collect())
}

/// Ordinary least squares fit of `y = β₀ + β₁·x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub beta0: f64,
    pub beta1: f64,
    pub se: f64,
    pub t: f64,
    /// Two-sided p-value, floored at [`P_FLOOR`].
    pub p: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
}

/// Two-sided tail probability `P(|T| ≥ |t|)` of Student's t with `df`
/// degrees of freedom.
pub fn t_two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    beta_reg(df / 2.0, 0.5, df / (df + t * t))
}

/// Upper quantile `t` with `P(T ≤ t) = prob` for `prob ∈ (0.5, 1)`.
pub fn t_quantile(prob: f64, df: f64) -> f64 {
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    let mut t = dist.inverse_cdf(prob);
    // Polish the closed-form start with Newton steps on the tail identity.
    let tail = 2.0 * (1.0 - prob);
    for _ in 0..8 {
        let f = t_two_sided_p(t, df) - tail;
        let density = t_density(t, df);
        let step = f / (2.0 * density);
        t += step;
        if step.abs() <= 1e-15 * t.abs() {
            break;
        }
    }
    t
}

fn t_density(t: f64, df: f64) -> f64 {
    use statrs::function::gamma::ln_gamma;
    let c = ln_gamma((df + 1.0) / 2.0) - ln_gamma(df / 2.0) - 0.5 * (df * std::f64::consts::PI).ln();
    (c - (df + 1.0) / 2.0 * (1.0 + t * t / df).ln()).exp()
}

/// Least-squares fit with SE from the residual variance on n−2 degrees of
/// freedom, a two-sided t-test of β₁ and a 95% CI.
///
/// A constant `y` gives β₁ = 0 and p = 1. An exact fit gives SE = 0 and
/// p = [`P_FLOOR`].
pub fn fit_univariate(x: &[f64], y: &[f64]) -> Result<OlsFit> {
    if x.len() != y.len() {
        return Err(Error::invalid("x and y lengths differ"));
    }
    let n = x.len();
    if n < 3 {
        return Err(Error::InsufficientPoints { needed: 3, found: n });
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if x.iter().all(|&v| v == x[0]) || !(sxx > 0.0) {
        return Err(Error::Degenerate("feature has no spread".into()));
    }
    let df = nf - 2.0;
    if y.iter().all(|&v| v == y[0]) {
        return Ok(OlsFit {
            beta0: y[0],
            beta1: 0.0,
            se: 0.0,
            t: 0.0,
            p: 1.0,
            ci_low: 0.0,
            ci_high: 0.0,
            n,
        });
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let beta1 = sxy / sxx;
    let beta0 = my - beta1 * mx;
    let rss: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let e = b - beta0 - beta1 * a;
            e * e
        })
        .sum();
    let se = (rss / df / sxx).sqrt();
    let t = if se > 0.0 { beta1 / se } else { f64::INFINITY.copysign(beta1) };
    let p = t_two_sided_p(t, df).clamp(P_FLOOR, 1.0);
    let half = t_quantile(0.975, df) * se;
    Ok(OlsFit {
        beta0,
        beta1,
        se,
        t,
        p,
        ci_low: beta1 - half,
        ci_high: beta1 + half,
        n,
    })
}

pub fn bonferroni_threshold(alpha: f64, n_tests: usize) -> f64 {
    alpha / n_tests.max(1) as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct BhOutcome {
    pub rejected: Vec<bool>,
    /// Largest p-value rejected, if any.
    pub critical_p: Option<f64>,
}

/// Benjamini-Hochberg step-up procedure at level `q`.
pub fn benjamini_hochberg(p_values: &[f64], q: f64) -> BhOutcome {
    let m = p_values.len();
    let mut sorted: Vec<f64> = p_values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let critical_p = (1..=m)
        .rev()
        .find(|&i| sorted[i - 1] <= i as f64 * q / m as f64)
        .map(|i| sorted[i - 1]);
    let rejected = p_values
        .iter()
        .map(|&p| critical_p.is_some_and(|c| p <= c))
        .collect();
    BhOutcome { rejected, critical_p }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociationResult {
    pub feature: String,
    pub category: String,
    /// Phenotype change per standard deviation of the feature.
    pub beta: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub p: f64,
    pub neg_log10_p: f64,
    pub sig_bonferroni: bool,
    pub sig_fdr: bool,
    pub n_used: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedFeature {
    pub feature: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyOutcome {
    /// Tested features by ascending p, ties by name.
    pub results: Vec<AssociationResult>,
    pub skipped: Vec<SkippedFeature>,
    pub n_subjects: usize,
    pub bonferroni_threshold: f64,
    pub bh_critical_p: Option<f64>,
}

impl StudyOutcome {
    pub fn n_tests(&self) -> usize {
        self.results.len()
    }
}

/// Aggregates to subjects, z-scores each feature, fits one model per
/// feature and applies both multiple-testing corrections.
pub fn run_study(matrix: &FeatureMatrix, phenotype: &PhenotypeVector, config: &StudyConfig) -> Result<StudyOutcome> {
    config.validate()?;
    let subjects = aggregate_to_subjects(matrix, config.aggregation);
    let in_matrix: HashSet<&str> = subjects.subject_ids.iter().map(String::as_str).collect();
    let in_pheno: HashSet<&str> = phenotype.subject_ids.iter().map(String::as_str).collect();
    let mut no_phenotype: Vec<String> = in_matrix.difference(&in_pheno).map(|s| s.to_string()).collect();
    let mut no_features: Vec<String> = in_pheno.difference(&in_matrix).map(|s| s.to_string()).collect();
    if !no_phenotype.is_empty() || !no_features.is_empty() {
        no_phenotype.sort();
        no_features.sort();
        return Err(Error::SubjectMismatch {
            no_phenotype,
            no_features,
        });
    }
    if subjects.n_rows() < config.min_subjects {
        return Err(Error::TooFewSubjects {
            needed: config.min_subjects,
            found: subjects.n_rows(),
        });
    }
    let y: Vec<f64> = subjects
        .subject_ids
        .iter()
        .map(|s| phenotype.get(s).expect("subjects checked above"))
        .collect();

    let fits: Vec<std::result::Result<(usize, OlsFit), SkippedFeature>> = (0..subjects.n_features())
        .into_par_iter()
        .map(|j| {
            let name = &subjects.columns[j].name;
            let skip = |e: Error| SkippedFeature {
                feature: name.clone(),
                reason: e.to_string(),
            };
            let z = zscore(&subjects.column(j)).map_err(skip)?;
            let (xs, ys): (Vec<f64>, Vec<f64>) = z
                .iter()
                .zip(&y)
                .filter_map(|(x, &y)| x.map(|x| (x, y)))
                .unzip();
            fit_univariate(&xs, &ys).map(|f| (j, f)).map_err(skip)
        })
        .collect();

    let mut tested = Vec::new();
    let mut skipped = Vec::new();
    for f in fits {
        match f {
            Ok(ok) => tested.push(ok),
            Err(s) => {
                log::warn!("feature `{}` skipped: {}", s.feature, s.reason);
                skipped.push(s);
            }
        }
    }
    let threshold = bonferroni_threshold(config.alpha, tested.len());
    let p: Vec<f64> = tested.iter().map(|(_, f)| f.p).collect();
    let bh = benjamini_hochberg(&p, config.fdr_q);
    let mut results: Vec<AssociationResult> = tested
        .iter()
        .zip(&bh.rejected)
        .map(|((j, f), &fdr)| AssociationResult {
            feature: subjects.columns[*j].name.clone(),
            category: subjects.columns[*j].category.clone(),
            beta: f.beta1,
            se: f.se,
            ci_low: f.ci_low,
            ci_high: f.ci_high,
            p: f.p,
            neg_log10_p: -f.p.log10(),
            sig_bonferroni: f.p < threshold,
            sig_fdr: fdr,
            n_used: f.n,
        })
        .collect();
    results.sort_by(|a, b| a.p.total_cmp(&b.p).then_with(|| a.feature.cmp(&b.feature)));
    Ok(StudyOutcome {
        results,
        skipped,
        n_subjects: subjects.n_rows(),
        bonferroni_threshold: threshold,
        bh_critical_p: bh.critical_p,
    })
}
