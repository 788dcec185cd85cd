//! Complete-spatial-randomness simulation: Poisson patterns, theoretical
//! curves, sub-window sampling and pointwise Monte-Carlo envelopes.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::csr_value;
use crate::geometry::{ObservationWindow, Point2D, PointPattern};
use crate::ppstats::{self, CurveEstimate, DistanceGrid, EdgeCorrection, FunctionId};

/// Functions checked by the validation protocol, in reporting order.
pub const VALIDATED_FUNCTIONS: [FunctionId; 4] =
    [FunctionId::L, FunctionId::PairCorrelation, FunctionId::G, FunctionId::F];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub width: f64,
    pub height: f64,
}

impl Rect {
    pub fn new(width: f64, height: f64) -> Self {
        Self { width, height }
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsrConfig {
    /// Intensity in points/µm².
    pub lambda: f64,
    pub base_window: Rect,
    pub sub_window: Rect,
    pub n_samples: usize,
    pub seed: u64,
    /// Envelope coverage level.
    pub level: f64,
}

impl Default for CsrConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-3,
            base_window: Rect::new(5000.0, 5000.0),
            sub_window: Rect::new(1000.0, 1000.0),
            n_samples: 299,
            seed: 0,
            level: 0.95,
        }
    }
}

impl CsrConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config("lambda must be positive".into()));
        }
        for (name, r) in [("base", self.base_window), ("sub", self.sub_window)] {
            if !(r.width > 0.0 && r.height > 0.0 && r.area().is_finite()) {
                return Err(Error::Config(format!("{name} window must have positive size")));
            }
        }
        if self.sub_window.width > self.base_window.width || self.sub_window.height > self.base_window.height {
            return Err(Error::Config("sub window does not fit inside the base window".into()));
        }
        if self.n_samples == 0 {
            return Err(Error::Config("n_samples must be at least 1".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::Config("envelope level must lie in (0, 1)".into()));
        }
        Ok(())
    }

    /// The automatic grid for the sub-window: 64 radii up to ¼·√area.
    pub fn default_grid(&self) -> Result<DistanceGrid> {
        DistanceGrid::uniform(0.25 * self.sub_window.area().sqrt(), ppstats::DEFAULT_GRID_SIZE)
    }
}

/// Homogeneous Poisson pattern on `[x0, x0+w] × [y0, y0+h]`.
pub fn generate_csr(lambda: f64, origin: Point2D, size: Rect, seed: u64) -> Result<PointPattern> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    generate_csr_with(lambda, origin, size, &mut rng)
}

fn generate_csr_with(lambda: f64, origin: Point2D, size: Rect, rng: &mut ChaCha8Rng) -> Result<PointPattern> {
    if !(lambda > 0.0) || !(size.area() > 0.0) {
        return Err(Error::invalid("CSR needs positive intensity and area"));
    }
    let mean = lambda * size.area();
    let count = Poisson::new(mean)
        .map_err(|e| Error::invalid(format!("poisson mean {mean}: {e}")))?
        .sample(rng) as usize;
    let points = (0..count)
        .map(|_| {
            Point2D::new(
                origin.x + rng.random::<f64>() * size.width,
                origin.y + rng.random::<f64>() * size.height,
            )
        })
        .collect();
    PointPattern::new(points, "csr", "simulated")
}

/// CSR reference curve: K = πr², L = 0, g = J = 1, G = F = 1 − exp(−λπr²).
pub fn theoretical_curve(function: FunctionId, lambda: f64, grid: &DistanceGrid) -> Result<CurveEstimate> {
    if !(lambda > 0.0) {
        return Err(Error::invalid("lambda must be positive"));
    }
    Ok(CurveEstimate {
        function,
        radii: grid.clone(),
        values: grid.radii().iter().map(|&r| csr_value(function, lambda, r)).collect(),
        correction: EdgeCorrection::None,
        n_points: 0,
        intensity: lambda,
    })
}

/// Like [`theoretical_curve`] but takes a function label such as `"G"`.
pub fn theoretical_curve_named(function: &str, lambda: f64, grid: &DistanceGrid) -> Result<CurveEstimate> {
    theoretical_curve(function.parse()?, lambda, grid)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Corrections {
    pub pair: EdgeCorrection,
    pub nearest_neighbor: EdgeCorrection,
}

impl Default for Corrections {
    fn default() -> Self {
        Self {
            pair: EdgeCorrection::RipleyIsotropic,
            nearest_neighbor: EdgeCorrection::KaplanMeier,
        }
    }
}

/// Curves of one sub-window, in [`VALIDATED_FUNCTIONS`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleCurves {
    pub offset: (f64, f64),
    pub n_points: usize,
    pub curves: Vec<CurveEstimate>,
}

impl SampleCurves {
    pub fn curve(&self, f: FunctionId) -> Option<&CurveEstimate> {
        self.curves.iter().find(|c| c.function == f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub function: FunctionId,
    pub radii: DistanceGrid,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub level: f64,
    pub theoretical: Vec<f64>,
}

impl Envelope {
    pub fn contains(&self, i: usize, v: f64) -> bool {
        self.lower[i] <= v && v <= self.upper[i]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub function: FunctionId,
    /// Fraction of (sample, radius) values inside the envelope.
    pub fraction: f64,
    pub n_values: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationRun {
    pub config: CsrConfig,
    pub samples: Vec<SampleCurves>,
    /// Sub-windows with fewer than two points.
    pub skipped: usize,
    pub envelopes: Vec<Envelope>,
    pub coverage: Vec<Coverage>,
}

impl ValidationRun {
    pub fn envelope(&self, f: FunctionId) -> Option<&Envelope> {
        self.envelopes.iter().find(|e| e.function == f)
    }
}

/// Linear-interpolation quantile of sorted data.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Pointwise percentile envelope of `curves` (all on `grid`).
pub fn pointwise_envelope(
    function: FunctionId,
    curves: &[&CurveEstimate],
    grid: &DistanceGrid,
    level: f64,
    lambda: f64,
) -> Result<Envelope> {
    if curves.is_empty() {
        return Err(Error::invalid("envelope needs at least one curve"));
    }
    let tail = (1.0 - level) / 2.0;
    let mut lower = Vec::with_capacity(grid.len());
    let mut upper = Vec::with_capacity(grid.len());
    let mut column = Vec::with_capacity(curves.len());
    for i in 0..grid.len() {
        column.clear();
        column.extend(curves.iter().map(|c| c.values[i]).filter(|v| !v.is_nan()));
        if column.is_empty() {
            lower.push(f64::NAN);
            upper.push(f64::NAN);
            continue;
        }
        column.sort_by(f64::total_cmp);
        lower.push(quantile_sorted(&column, tail));
        upper.push(quantile_sorted(&column, 1.0 - tail));
    }
    Ok(Envelope {
        function,
        radii: grid.clone(),
        lower,
        upper,
        level,
        theoretical: theoretical_curve(function, lambda, grid)?.values,
    })
}

/// Fraction of (sample, radius) values of `function` inside `envelope`.
pub fn coverage(envelope: &Envelope, samples: &[SampleCurves]) -> Coverage {
    let mut inside = 0usize;
    let mut total = 0usize;
    for s in samples {
        if let Some(c) = s.curve(envelope.function) {
            for (i, &v) in c.values.iter().enumerate() {
                if v.is_nan() || envelope.lower[i].is_nan() {
                    continue;
                }
                total += 1;
                inside += usize::from(envelope.contains(i, v));
            }
        }
    }
    Coverage {
        function: envelope.function,
        fraction: if total == 0 { f64::NAN } else { inside as f64 / total as f64 },
        n_values: total,
    }
}

fn sample_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Curves of every validated function on one CSR sub-pattern.
pub fn sample_curves(
    pattern: &PointPattern,
    window: &ObservationWindow,
    grid: &DistanceGrid,
    corrections: Corrections,
    f_seed: u64,
) -> Result<Vec<CurveEstimate>> {
    let lambda = ppstats::global_density(pattern, window)?.lambda;
    let k = ppstats::k_function(pattern, window, grid, corrections.pair)?;
    let l = ppstats::l_function(&k)?;
    let g = ppstats::g_function(pattern, window, grid, corrections.pair, ppstats::default_bandwidth(lambda))?;
    let gg = ppstats::g_empirical_cdf(pattern, window, grid, corrections.nearest_neighbor)?;
    let f = ppstats::f_function(
        pattern,
        window,
        grid,
        corrections.nearest_neighbor,
        ppstats::default_quadrats(pattern.len()),
        f_seed,
    )?;
    Ok(vec![l, g, gg, f])
}

/// Generates the base pattern of `config` and evaluates `n` sub-windows at
/// uniform offsets. Returns the computed samples and the skipped count.
pub fn simulate_samples(
    config: &CsrConfig,
    n: usize,
    grid: &DistanceGrid,
    corrections: Corrections,
) -> Result<(Vec<SampleCurves>, usize)> {
    config.validate()?;
    let base = generate_csr_with(
        config.lambda,
        Point2D::new(0.0, 0.0),
        config.base_window,
        &mut sample_rng(config.seed, 0),
    )?;
    let sub = config.sub_window;
    let slack = (
        config.base_window.width - sub.width,
        config.base_window.height - sub.height,
    );

    let results: Vec<Option<SampleCurves>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(config.seed, i as u64 + 1);
            let ox = rng.random::<f64>() * slack.0;
            let oy = rng.random::<f64>() * slack.1;
            let f_seed: u64 = rng.random();
            let window = ObservationWindow::rectangle(ox, oy, sub.width, sub.height)?;
            let pattern = base.restrict_to(&window);
            if pattern.len() < 2 {
                return Ok(None);
            }
            let curves = sample_curves(&pattern, &window, grid, corrections, f_seed)?;
            Ok(Some(SampleCurves {
                offset: (ox, oy),
                n_points: pattern.len(),
                curves,
            }))
        })
        .collect::<Result<_>>()?;

    let skipped = results.iter().filter(|r| r.is_none()).count();
    Ok((results.into_iter().flatten().collect(), skipped))
}

/// Runs the CSR validation protocol: one base pattern, `n_samples`
/// sub-windows, L/g/G/F per sub-window, pointwise envelopes and
/// self-coverage.
pub fn run_validation(config: &CsrConfig, grid: &DistanceGrid, corrections: Corrections) -> Result<ValidationRun> {
    let (samples, skipped) = simulate_samples(config, config.n_samples, grid, corrections)?;
    if samples.is_empty() {
        return Err(Error::InsufficientPoints { needed: 2, found: 0 });
    }
    let mut envelopes = Vec::new();
    for f in VALIDATED_FUNCTIONS {
        let curves: Vec<&CurveEstimate> = samples.iter().filter_map(|s| s.curve(f)).collect();
        envelopes.push(pointwise_envelope(f, &curves, grid, config.level, config.lambda)?);
    }
    let coverage = envelopes.iter().map(|e| coverage(e, &samples)).collect();
    Ok(ValidationRun {
        config: config.clone(),
        samples,
        skipped,
        envelopes,
        coverage,
    })
}

/// Coverage of freshly simulated sub-windows (new base pattern drawn from
/// `seed`) against fixed envelopes.
pub fn held_out_coverage(
    run: &ValidationRun,
    n_samples: usize,
    seed: u64,
    corrections: Corrections,
) -> Result<Vec<Coverage>> {
    let config = CsrConfig {
        seed,
        ..run.config.clone()
    };
    let grid = &run.envelopes[0].radii;
    let (samples, _) = simulate_samples(&config, n_samples, grid, corrections)?;
    Ok(run.envelopes.iter().map(|e| coverage(e, &samples)).collect())
}

/// Expected number of points in a sub-window.
pub fn expected_count(config: &CsrConfig) -> f64 {
    config.lambda * config.sub_window.area()
}

/// CSR probability that a point's nearest neighbour lies within `r`.
pub fn csr_nn_cdf(lambda: f64, r: f64) -> f64 {
    1.0 - (-lambda * PI * r * r).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csr_is_deterministic() {
        let a = generate_csr(1e-3, Point2D::new(0.0, 0.0), Rect::new(500.0, 500.0), 7).unwrap();
        let b = generate_csr(1e-3, Point2D::new(0.0, 0.0), Rect::new(500.0, 500.0), 7).unwrap();
        assert_eq!(a, b);
        let c = generate_csr(1e-3, Point2D::new(0.0, 0.0), Rect::new(500.0, 500.0), 8).unwrap();
        assert_ne!(a, c);
        assert!(a.points().iter().all(|p| (0.0..=500.0).contains(&p.x) && (0.0..=500.0).contains(&p.y)));
    }

    #[test]
    fn csr_mean_count_matches_expectation() {
        // λ·area = 1000; the mean of 200 runs has σ = √(1000/200) ≈ 2.24.
        let runs = 200;
        let total: usize = (0..runs)
            .map(|s| generate_csr(1e-3, Point2D::new(0.0, 0.0), Rect::new(1000.0, 1000.0), s).unwrap().len())
            .sum();
        let mean = total as f64 / runs as f64;
        assert!((mean - 1000.0).abs() < 3.0 * (1000.0f64 / runs as f64).sqrt(), "mean {mean}");

        // Tiny expectation: mostly empty, mean tracks λ·area.
        let tiny: usize = (0..20000)
            .map(|s| generate_csr(1e-4, Point2D::new(0.0, 0.0), Rect::new(1.0, 1.0), s).unwrap().len())
            .sum();
        let m = tiny as f64 / 20000.0;
        assert!((m - 1e-4).abs() < 3.0 * (1e-4f64 / 20000.0).sqrt() + 1e-12, "mean {m}");
    }

    #[test]
    fn theoretical_examples() {
        let lambda = 1e-3;
        let r = (2f64.ln() / (lambda * PI)).sqrt();
        let grid = DistanceGrid::new(vec![r]).unwrap();
        let g = theoretical_curve(FunctionId::G, lambda, &grid).unwrap();
        assert!((g.values[0] - 0.5).abs() < 1e-15);
        assert_eq!(theoretical_curve(FunctionId::L, lambda, &grid).unwrap().values, vec![0.0]);
        assert_eq!(theoretical_curve(FunctionId::PairCorrelation, lambda, &grid).unwrap().values, vec![1.0]);
        assert!(matches!(theoretical_curve_named("Q", lambda, &grid), Err(Error::UnknownFunction(_))));
    }

    #[test]
    fn config_validation() {
        let mut c = CsrConfig::default();
        assert!(c.validate().is_ok());
        c.sub_window = Rect::new(6000.0, 100.0);
        assert!(c.validate().is_err());
        c = CsrConfig { n_samples: 0, ..CsrConfig::default() };
        assert!(c.validate().is_err());
        c = CsrConfig { lambda: 0.0, ..CsrConfig::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile_sorted(&v, 0.0), 1.0);
        assert_eq!(quantile_sorted(&v, 0.5), 3.0);
        assert_eq!(quantile_sorted(&v, 0.125), 1.5);
        assert_eq!(quantile_sorted(&v, 1.0), 5.0);
    }

    #[test]
    fn small_validation_is_reproducible_and_reports_skips() {
        let cfg = CsrConfig {
            lambda: 2e-3,
            base_window: Rect::new(600.0, 600.0),
            sub_window: Rect::new(200.0, 200.0),
            n_samples: 20,
            seed: 11,
            level: 0.95,
        };
        let grid = cfg.default_grid().unwrap();
        let a = run_validation(&cfg, &grid, Corrections::default()).unwrap();
        let b = run_validation(&cfg, &grid, Corrections::default()).unwrap();
        assert_eq!(a.envelopes, b.envelopes);
        assert_eq!(a.samples.len() + a.skipped, 20);
        assert_eq!(a.envelopes.len(), 4);
        for e in &a.envelopes {
            assert!(e.lower.iter().zip(&e.upper).all(|(l, u)| l <= u));
        }

        let sparse = CsrConfig {
            lambda: 1e-6,
            ..cfg
        };
        let (samples, skipped) = simulate_samples(&sparse, 10, &grid, Corrections::default()).unwrap();
        assert_eq!(samples.len() + skipped, 10);
        assert!(skipped > 0);
    }
}
