//! Distance-based point-process estimators: Ripley's K, Besag's L, the pair
//! correlation g, the nearest-neighbour G, the empty-space F, the J-function
//! and the average nearest-neighbour distance.
//!
//! Every estimator is a pure function of its inputs. Work is split into
//! fixed-size chunks of points that may run in parallel; partial results are
//! combined in chunk order so output is bit-stable for any thread count.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ConvexPolygon, GridIndex, ObservationWindow, Point2D, PointPattern};

/// Number of arcs used to discretize a circle for the isotropic weight.
pub const ISOTROPIC_ARCS: usize = 256;
/// Upper bound on isotropic edge-correction weights.
pub const MAX_ISOTROPIC_WEIGHT: f64 = 16.0;
/// Number of radii in the automatic distance grid.
pub const DEFAULT_GRID_SIZE: usize = 64;
/// Minimum number of F-function sample locations.
pub const MIN_QUADRATS: usize = 1000;
/// J is undefined where F exceeds `1 - J_UNDEFINED_EPS`.
pub const J_UNDEFINED_EPS: f64 = 1e-9;

const CHUNK: usize = 64;

/// Strictly increasing positive radii (µm).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct DistanceGrid(Vec<f64>);

impl DistanceGrid {
    pub fn new(radii: Vec<f64>) -> Result<Self> {
        if radii.is_empty() {
            return Err(Error::invalid("distance grid is empty"));
        }
        if radii.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(Error::invalid("distance grid radii must be finite and positive"));
        }
        if radii.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("distance grid must be strictly increasing"));
        }
        Ok(Self(radii))
    }

    /// `n` equally spaced radii from `r_max / n` to `r_max`.
    pub fn uniform(r_max: f64, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("distance grid needs at least one radius"));
        }
        Self::new((1..=n).map(|k| r_max * k as f64 / n as f64).collect())
    }

    /// 64 radii up to a quarter of the square root of the window area.
    pub fn auto(window: &ObservationWindow) -> Result<Self> {
        Self::uniform(0.25 * window.total_area().sqrt(), DEFAULT_GRID_SIZE)
    }

    pub fn radii(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn r_max(&self) -> f64 {
        *self.0.last().expect("grid is never empty")
    }

    pub fn scaled(&self, s: f64) -> Result<Self> {
        Self::new(self.0.iter().map(|r| r * s).collect())
    }
}

impl TryFrom<Vec<f64>> for DistanceGrid {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<DistanceGrid> for Vec<f64> {
    fn from(g: DistanceGrid) -> Self {
        g.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeCorrection {
    None,
    /// Ripley's isotropic weights; K, L and g only.
    RipleyIsotropic,
    /// Kaplan-Meier censoring at the boundary; G, F and J only.
    KaplanMeier,
}

impl fmt::Display for EdgeCorrection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EdgeCorrection::None => "none",
            EdgeCorrection::RipleyIsotropic => "isotropic",
            EdgeCorrection::KaplanMeier => "km",
        })
    }
}

impl FromStr for EdgeCorrection {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "isotropic" | "ripley_isotropic" => Ok(Self::RipleyIsotropic),
            "km" | "kaplan_meier" => Ok(Self::KaplanMeier),
            other => Err(Error::invalid(format!("unknown edge correction `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FunctionId {
    K,
    L,
    #[serde(rename = "g")]
    PairCorrelation,
    G,
    F,
    J,
}

impl FunctionId {
    pub fn label(&self) -> &'static str {
        match self {
            FunctionId::K => "K",
            FunctionId::L => "L",
            FunctionId::PairCorrelation => "g",
            FunctionId::G => "G",
            FunctionId::F => "F",
            FunctionId::J => "J",
        }
    }
}

impl fmt::Display for FunctionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for FunctionId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "K" => Ok(Self::K),
            "L" => Ok(Self::L),
            "g" => Ok(Self::PairCorrelation),
            "G" => Ok(Self::G),
            "F" => Ok(Self::F),
            "J" => Ok(Self::J),
            other => Err(Error::UnknownFunction(other.to_string())),
        }
    }
}

/// A function sampled on a distance grid. Undefined samples (J where F
/// reaches 1) are stored as NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveEstimate {
    pub function: FunctionId,
    pub radii: DistanceGrid,
    pub values: Vec<f64>,
    pub correction: EdgeCorrection,
    pub n_points: usize,
    /// Intensity λ (points/µm²) of the pattern the curve came from.
    pub intensity: f64,
}

impl CurveEstimate {
    pub fn is_defined(&self, i: usize) -> bool {
        !self.values[i].is_nan()
    }

    /// `(r, value)` pairs at defined radii.
    pub fn defined(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.radii
            .radii()
            .iter()
            .copied()
            .zip(self.values.iter().copied())
            .filter(|(_, v)| !v.is_nan())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intensity {
    pub lambda: f64,
}

pub fn global_density(pattern: &PointPattern, window: &ObservationWindow) -> Result<Intensity> {
    if pattern.is_empty() {
        return Err(Error::UndefinedDensity("pattern has no points"));
    }
    let area = window.total_area();
    if !(area > 0.0) {
        return Err(Error::UndefinedDensity("window has zero area"));
    }
    Ok(Intensity {
        lambda: pattern.len() as f64 / area,
    })
}

fn require_points(pattern: &PointPattern, needed: usize) -> Result<()> {
    if pattern.len() < needed {
        return Err(Error::InsufficientPoints {
            needed,
            found: pattern.len(),
        });
    }
    Ok(())
}

fn require_inside(pattern: &PointPattern, window: &ObservationWindow) -> Result<()> {
    if let Some(i) = pattern.points().iter().position(|p| !window.contains(p)) {
        return Err(Error::invalid(format!(
            "edge correction needs every point inside the window (point {i} is outside)"
        )));
    }
    Ok(())
}

/// 256-bit set of arc indices.
#[derive(Clone, Copy, PartialEq, Eq)]
struct ArcMask([u64; 4]);

impl ArcMask {
    const FULL: ArcMask = ArcMask([u64::MAX; 4]);
    const EMPTY: ArcMask = ArcMask([0; 4]);

    /// Arcs `lo..=hi` within `0..256`.
    fn span(lo: usize, hi: usize) -> ArcMask {
        let mut m = [0u64; 4];
        for (w, word) in m.iter_mut().enumerate() {
            let base = w * 64;
            let a = lo.max(base);
            let b = hi.min(base + 63);
            if a <= b {
                let len = b - a + 1;
                let bits = if len == 64 { u64::MAX } else { ((1u64 << len) - 1) << (a - base) };
                *word |= bits;
            }
        }
        ArcMask(m)
    }

    /// Cyclic range of arc indices `lo..=hi` (may be negative or ≥ 256).
    fn cyclic(lo: i64, hi: i64) -> ArcMask {
        let n = ISOTROPIC_ARCS as i64;
        if hi < lo {
            return Self::EMPTY;
        }
        if hi - lo + 1 >= n {
            return Self::FULL;
        }
        let a = lo.rem_euclid(n);
        let b = hi.rem_euclid(n);
        if a <= b {
            Self::span(a as usize, b as usize)
        } else {
            Self::span(a as usize, ISOTROPIC_ARCS - 1).or(Self::span(0, b as usize))
        }
    }

    fn and(self, o: ArcMask) -> ArcMask {
        ArcMask([self.0[0] & o.0[0], self.0[1] & o.0[1], self.0[2] & o.0[2], self.0[3] & o.0[3]])
    }

    fn or(self, o: ArcMask) -> ArcMask {
        ArcMask([self.0[0] | o.0[0], self.0[1] | o.0[1], self.0[2] | o.0[2], self.0[3] | o.0[3]])
    }

    fn count(self) -> u32 {
        self.0.iter().map(|w| w.count_ones()).sum()
    }
}

/// Arc midpoints `center + r·(cos θ_k, sin θ_k)`, `θ_k = (k + ½)·2π/256`,
/// lying inside a convex polygon. The polygon is an intersection of
/// half-planes; each half-plane keeps one contiguous run of arc indices.
fn arcs_inside_polygon(poly: &ConvexPolygon, center: &Point2D, r: f64) -> ArcMask {
    let step = 2.0 * PI / ISOTROPIC_ARCS as f64;
    let mut mask = ArcMask::FULL;
    for (a, b) in poly.edges() {
        let (ex, ey) = (b.x - a.x, b.y - a.y);
        let len = (ex * ex + ey * ey).sqrt();
        // Inward unit normal of a CCW edge.
        let (nx, ny) = (-ey / len, ex / len);
        // Midpoint at angle θ is inside iff cos(θ - φ) ≥ t.
        let t = ((a.x - center.x) * nx + (a.y - center.y) * ny) / r;
        if t <= -1.0 {
            continue;
        }
        if t > 1.0 {
            return ArcMask::EMPTY;
        }
        let phi = ny.atan2(nx);
        let half = t.acos();
        let lo = ((phi - half) / step - 0.5).ceil() as i64;
        let hi = ((phi + half) / step - 0.5).floor() as i64;
        mask = mask.and(ArcMask::cyclic(lo, hi));
        if mask == ArcMask::EMPTY {
            break;
        }
    }
    mask
}

/// Number of the 256 arc midpoints of the circle that fall in the window.
fn arcs_inside(window: &ObservationWindow, center: &Point2D, r: f64) -> u32 {
    let mut mask = ArcMask::EMPTY;
    for hull in window.hulls() {
        let (x0, y0, x1, y1) = hull.bounds();
        if center.x + r < x0 || center.x - r > x1 || center.y + r < y0 || center.y - r > y1 {
            continue;
        }
        mask = mask.or(arcs_inside_polygon(hull, center, r));
        if mask == ArcMask::FULL {
            break;
        }
    }
    mask.count()
}

fn weight_from_count(inside: u32) -> f64 {
    if inside == 0 {
        MAX_ISOTROPIC_WEIGHT
    } else {
        (ISOTROPIC_ARCS as f64 / inside as f64).min(MAX_ISOTROPIC_WEIGHT)
    }
}

/// Ripley's isotropic weight: the inverse of the fraction of the circle of
/// radius `r` around `center` that lies inside the window, measured on 256
/// arc midpoints and capped at 16.
pub fn isotropic_weight(window: &ObservationWindow, center: &Point2D, r: f64) -> Result<f64> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::invalid("isotropic weight radius must be positive"));
    }
    let c = window.distance_to_boundary(center)?;
    Ok(isotropic_weight_unchecked(window, center, r, c))
}

fn isotropic_weight_unchecked(window: &ObservationWindow, center: &Point2D, r: f64, boundary: f64) -> f64 {
    if r <= boundary {
        return 1.0;
    }
    weight_from_count(arcs_inside(window, center, r))
}

/// Per-point boundary distances, or `None` when no correction needs them.
fn boundary_distances(pattern: &PointPattern, window: &ObservationWindow) -> Result<Vec<f64>> {
    require_inside(pattern, window)?;
    pattern
        .points()
        .par_iter()
        .with_min_len(CHUNK)
        .map(|p| window.distance_to_boundary(p))
        .collect()
}

/// Visits every ordered pair `(i, j)`, `i != j`, with `d_ij <= reach` and
/// folds the pair into a per-chunk accumulator. Accumulators are returned in
/// chunk order.
fn fold_pairs<A, F>(pattern: &PointPattern, reach: f64, init: impl Fn() -> A + Sync, visit: F) -> Vec<A>
where
    A: Send,
    F: Fn(&mut A, usize, f64) + Sync,
{
    let pts = pattern.points();
    let index = GridIndex::new(pts, reach.max(f64::MIN_POSITIVE));
    let starts: Vec<usize> = (0..pts.len()).step_by(CHUNK).collect();
    starts
        .par_iter()
        .map(|&start| {
            let mut acc = init();
            let mut nbrs = Vec::new();
            for i in start..(start + CHUNK).min(pts.len()) {
                index.within(&pts[i], reach, &mut nbrs);
                for &j in &nbrs {
                    if j != i {
                        visit(&mut acc, i, pts[i].distance(&pts[j]));
                    }
                }
            }
            acc
        })
        .collect()
}

fn check_k_correction(correction: EdgeCorrection) -> Result<()> {
    match correction {
        EdgeCorrection::None | EdgeCorrection::RipleyIsotropic => Ok(()),
        EdgeCorrection::KaplanMeier => Err(Error::invalid("Kaplan-Meier correction applies to G, F and J only")),
    }
}

fn check_nn_correction(correction: EdgeCorrection) -> Result<()> {
    match correction {
        EdgeCorrection::None | EdgeCorrection::KaplanMeier => Ok(()),
        EdgeCorrection::RipleyIsotropic => Err(Error::invalid("isotropic correction applies to K, L and g only")),
    }
}

/// Ripley's K: `A/n² · Σ_i Σ_{j≠i} w_ij · 1(d_ij ≤ r)`.
pub fn k_function(
    pattern: &PointPattern,
    window: &ObservationWindow,
    grid: &DistanceGrid,
    correction: EdgeCorrection,
) -> Result<CurveEstimate> {
    check_k_correction(correction)?;
    require_points(pattern, 2)?;
    let lambda = global_density(pattern, window)?.lambda;
    let boundary = match correction {
        EdgeCorrection::RipleyIsotropic => Some(boundary_distances(pattern, window)?),
        _ => None,
    };
    let radii = grid.radii();
    let r_max = grid.r_max();
    let pts = pattern.points();

    let partial = fold_pairs(
        pattern,
        r_max,
        || vec![0.0f64; radii.len()],
        |bins, i, d| {
            let w = match &boundary {
                Some(c) => isotropic_weight_unchecked(window, &pts[i], d, c[i]),
                None => 1.0,
            };
            // First radius with d <= r.
            let bin = radii.partition_point(|&r| r < d);
            bins[bin] += w;
        },
    );
    let mut bins = vec![0.0f64; radii.len()];
    for p in &partial {
        for (b, v) in bins.iter_mut().zip(p) {
            *b += v;
        }
    }
    let n = pattern.len() as f64;
    let scale = window.total_area() / (n * n);
    let mut cum = 0.0;
    let values = bins
        .iter()
        .map(|b| {
            cum += b;
            scale * cum
        })
        .collect();

    Ok(CurveEstimate {
        function: FunctionId::K,
        radii: grid.clone(),
        values,
        correction,
        n_points: pattern.len(),
        intensity: lambda,
    })
}

/// Besag's L: `sqrt(K/π) - r`.
pub fn l_function(k: &CurveEstimate) -> Result<CurveEstimate> {
    if k.function != FunctionId::K {
        return Err(Error::invalid(format!("L needs a K curve, got {}", k.function)));
    }
    let values = k
        .radii
        .radii()
        .iter()
        .zip(&k.values)
        .map(|(r, kv)| (kv / PI).sqrt() - r)
        .collect();
    Ok(CurveEstimate {
        function: FunctionId::L,
        values,
        ..k.clone()
    })
}

/// Stoyan's bandwidth rule `0.15 / sqrt(λ)`.
pub fn default_bandwidth(lambda: f64) -> f64 {
    0.15 / lambda.sqrt()
}

/// Epanechnikov kernel with half-width `b`.
#[inline]
fn epanechnikov(u: f64, b: f64) -> f64 {
    let z = u / b;
    if z.abs() >= 1.0 {
        0.0
    } else {
        0.75 / b * (1.0 - z * z)
    }
}

/// Pair correlation from kernel-smoothed pair distances:
/// `g(r) = Σ_i Σ_{j≠i} w_ij κ_b(r - d_ij) / (2πr · λ² · A)`.
pub fn g_function(
    pattern: &PointPattern,
    window: &ObservationWindow,
    grid: &DistanceGrid,
    correction: EdgeCorrection,
    bandwidth: f64,
) -> Result<CurveEstimate> {
    check_k_correction(correction)?;
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::invalid("g bandwidth must be positive"));
    }
    require_points(pattern, 2)?;
    let lambda = global_density(pattern, window)?.lambda;
    let boundary = match correction {
        EdgeCorrection::RipleyIsotropic => Some(boundary_distances(pattern, window)?),
        _ => None,
    };
    let radii = grid.radii();
    let pts = pattern.points();

    let partial = fold_pairs(
        pattern,
        grid.r_max() + bandwidth,
        || vec![0.0f64; radii.len()],
        |acc, i, d| {
            let lo = radii.partition_point(|&r| r <= d - bandwidth);
            let hi = radii.partition_point(|&r| r < d + bandwidth);
            if lo >= hi {
                return;
            }
            let w = match &boundary {
                Some(c) => isotropic_weight_unchecked(window, &pts[i], d, c[i]),
                None => 1.0,
            };
            for (k, slot) in acc[lo..hi].iter_mut().enumerate() {
                *slot += w * epanechnikov(radii[lo + k] - d, bandwidth);
            }
        },
    );
    let mut sums = vec![0.0f64; radii.len()];
    for p in &partial {
        for (s, v) in sums.iter_mut().zip(p) {
            *s += v;
        }
    }
    let area = window.total_area();
    let values = radii
        .iter()
        .zip(&sums)
        .map(|(r, s)| s / (2.0 * PI * r * lambda * lambda * area))
        .collect();

    Ok(CurveEstimate {
        function: FunctionId::PairCorrelation,
        radii: grid.clone(),
        values,
        correction,
        n_points: pattern.len(),
        intensity: lambda,
    })
}

/// Nearest-neighbour distance of every point, in point order.
pub fn nearest_neighbor_distances(pattern: &PointPattern) -> Result<Vec<f64>> {
    require_points(pattern, 2)?;
    let pts = pattern.points();
    let (x0, y0, x1, y1) = bounding_box(pts);
    let area = ((x1 - x0) * (y1 - y0)).max(f64::MIN_POSITIVE);
    let index = GridIndex::with_density(pts, area);
    Ok((0..pts.len())
        .into_par_iter()
        .with_min_len(CHUNK)
        .map(|i| index.nearest_distance(&pts[i], Some(i)).expect("at least two points"))
        .collect())
}

fn bounding_box(pts: &[Point2D]) -> (f64, f64, f64, f64) {
    pts.iter().fold(
        (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
        |(x0, y0, x1, y1), p| (x0.min(p.x), y0.min(p.y), x1.max(p.x), y1.max(p.y)),
    )
}

/// Empirical CDF of `distances` on the grid: `#{d ≤ r} / n`.
fn empirical_cdf(distances: &[f64], grid: &DistanceGrid) -> Vec<f64> {
    let mut sorted = distances.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    grid.radii()
        .iter()
        .map(|&r| sorted.partition_point(|&d| d <= r) as f64 / n)
        .collect()
}

/// Kaplan-Meier CDF of distances censored at the boundary.
///
/// Each observation has time `t = min(d, c)` and is an event when `d ≤ c`.
/// Events sharing a time are processed in one step with factor
/// `1 - events / at_risk`. Until the first censoring the CDF is carried as
/// `events / n`, which makes the uncensored case equal the empirical CDF
/// exactly.
pub fn kaplan_meier_cdf(distances: &[f64], censoring: &[f64], grid: &DistanceGrid) -> Vec<f64> {
    debug_assert_eq!(distances.len(), censoring.len());
    let n = distances.len();
    let mut obs: Vec<(f64, bool)> = distances
        .iter()
        .zip(censoring)
        .map(|(&d, &c)| if d <= c { (d, true) } else { (c, false) })
        .collect();
    obs.sort_by(|a, b| a.0.total_cmp(&b.0));

    let radii = grid.radii();
    let mut out = Vec::with_capacity(radii.len());
    let mut cdf = 0.0f64;
    let mut survival: Option<f64> = None;
    let mut events_so_far = 0usize;
    let mut idx = 0usize;
    for &r in radii {
        while idx < n && obs[idx].0 <= r {
            let t = obs[idx].0;
            let at_risk = n - idx;
            let mut events = 0usize;
            let mut censored = 0usize;
            while idx < n && obs[idx].0 == t {
                if obs[idx].1 {
                    events += 1;
                } else {
                    censored += 1;
                }
                idx += 1;
            }
            events_so_far += events;
            match survival.as_mut() {
                None => {
                    cdf = events_so_far as f64 / n as f64;
                    if censored > 0 {
                        survival = Some((at_risk - events) as f64 / n as f64);
                    }
                }
                Some(s) => {
                    *s *= 1.0 - events as f64 / at_risk as f64;
                    cdf = cdf.max(1.0 - *s);
                }
            }
        }
        out.push(cdf);
    }
    out
}

/// Nearest-neighbour distance CDF, `G(r) = P(D ≤ r)`.
pub fn g_empirical_cdf(
    pattern: &PointPattern,
    window: &ObservationWindow,
    grid: &DistanceGrid,
    correction: EdgeCorrection,
) -> Result<CurveEstimate> {
    check_nn_correction(correction)?;
    require_points(pattern, 2)?;
    let lambda = global_density(pattern, window)?.lambda;
    let nn = nearest_neighbor_distances(pattern)?;
    let values = match correction {
        EdgeCorrection::KaplanMeier => {
            let c = boundary_distances(pattern, window)?;
            kaplan_meier_cdf(&nn, &c, grid)
        }
        _ => empirical_cdf(&nn, grid),
    };
    Ok(CurveEstimate {
        function: FunctionId::G,
        radii: grid.clone(),
        values,
        correction,
        n_points: pattern.len(),
        intensity: lambda,
    })
}

/// Default number of F-function sample locations: `max(n, 1000)`.
pub fn default_quadrats(n_points: usize) -> usize {
    n_points.max(MIN_QUADRATS)
}

/// Uniform locations inside the window. Hulls receive counts proportional
/// to area (largest remainder); within a hull, points are rejection-sampled
/// from its bounding box.
pub fn sample_quadrats(window: &ObservationWindow, n_quadrats: usize, seed: u64) -> Result<Vec<Point2D>> {
    let total = window.total_area();
    if !(total > 0.0) {
        return Err(Error::UndefinedDensity("window has zero area"));
    }
    let hulls = window.hulls();
    let exact: Vec<f64> = hulls.iter().map(|h| h.area() / total * n_quadrats as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..hulls.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &h in order.iter().take(n_quadrats.saturating_sub(assigned)) {
        counts[h] += 1;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_quadrats);
    for (hull, &count) in hulls.iter().zip(&counts) {
        let (x0, y0, x1, y1) = hull.bounds();
        let mut got = 0;
        while got < count {
            let p = Point2D::new(rng.random_range(x0..=x1), rng.random_range(y0..=y1));
            if hull.contains(&p) {
                out.push(p);
                got += 1;
            }
        }
    }
    Ok(out)
}

/// Empty-space function `F(r) = P(Y ≤ r)` from `n_quadrats` random
/// in-window locations drawn with `seed`.
pub fn f_function(
    pattern: &PointPattern,
    window: &ObservationWindow,
    grid: &DistanceGrid,
    correction: EdgeCorrection,
    n_quadrats: usize,
    seed: u64,
) -> Result<CurveEstimate> {
    if n_quadrats == 0 {
        return Err(Error::invalid("F needs at least one quadrat"));
    }
    let quadrats = sample_quadrats(window, n_quadrats, seed)?;
    f_function_at(pattern, window, grid, correction, &quadrats)
}

/// F-function over caller-supplied sample locations.
pub fn f_function_at(
    pattern: &PointPattern,
    window: &ObservationWindow,
    grid: &DistanceGrid,
    correction: EdgeCorrection,
    quadrats: &[Point2D],
) -> Result<CurveEstimate> {
    check_nn_correction(correction)?;
    require_points(pattern, 1)?;
    if quadrats.is_empty() {
        return Err(Error::invalid("F needs at least one quadrat"));
    }
    let lambda = global_density(pattern, window)?.lambda;
    let pts = pattern.points();
    let index = GridIndex::with_density(pts, window.total_area());
    let nearest: Vec<f64> = quadrats
        .par_iter()
        .with_min_len(CHUNK)
        .map(|q| index.nearest_distance(q, None).expect("pattern is not empty"))
        .collect();
    let values = match correction {
        EdgeCorrection::KaplanMeier => {
            let c: Vec<f64> = quadrats
                .par_iter()
                .with_min_len(CHUNK)
                .map(|q| window.distance_to_boundary(q))
                .collect::<Result<_>>()?;
            kaplan_meier_cdf(&nearest, &c, grid)
        }
        _ => empirical_cdf(&nearest, grid),
    };
    Ok(CurveEstimate {
        function: FunctionId::F,
        radii: grid.clone(),
        values,
        correction,
        n_points: pattern.len(),
        intensity: lambda,
    })
}

/// `J(r) = (1 - G(r)) / (1 - F(r))`, NaN where `F(r) > 1 - 1e-9`.
pub fn j_function(g_curve: &CurveEstimate, f_curve: &CurveEstimate) -> Result<CurveEstimate> {
    if g_curve.function != FunctionId::G || f_curve.function != FunctionId::F {
        return Err(Error::invalid("J needs a G curve and an F curve"));
    }
    if g_curve.radii != f_curve.radii {
        return Err(Error::GridMismatch);
    }
    let values = g_curve
        .values
        .iter()
        .zip(&f_curve.values)
        .map(|(g, f)| {
            if *f > 1.0 - J_UNDEFINED_EPS {
                f64::NAN
            } else {
                (1.0 - g) / (1.0 - f)
            }
        })
        .collect();
    Ok(CurveEstimate {
        function: FunctionId::J,
        radii: g_curve.radii.clone(),
        values,
        correction: g_curve.correction,
        n_points: g_curve.n_points,
        intensity: g_curve.intensity,
    })
}

/// Average nearest-neighbour distance, without edge correction.
pub fn ann(pattern: &PointPattern) -> Result<f64> {
    let nn = nearest_neighbor_distances(pattern)?;
    let mut sum = 0.0;
    for d in &nn {
        sum += d;
    }
    Ok(sum / nn.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pat(pts: &[(f64, f64)]) -> PointPattern {
        PointPattern::from_points(pts.iter().map(|&(x, y)| Point2D::new(x, y)).collect()).unwrap()
    }

    fn grid(r: &[f64]) -> DistanceGrid {
        DistanceGrid::new(r.to_vec()).unwrap()
    }

    fn unit_square() -> ObservationWindow {
        ObservationWindow::rectangle(0.0, 0.0, 1.0, 1.0).unwrap()
    }

    /// Direct per-midpoint containment count.
    fn arcs_inside_direct(window: &ObservationWindow, c: &Point2D, r: f64) -> u32 {
        (0..ISOTROPIC_ARCS)
            .filter(|&k| {
                let th = (k as f64 + 0.5) * 2.0 * PI / ISOTROPIC_ARCS as f64;
                window.contains(&Point2D::new(c.x + r * th.cos(), c.y + r * th.sin()))
            })
            .count() as u32
    }

    #[test]
    fn grid_validation() {
        assert!(DistanceGrid::new(vec![]).is_err());
        assert!(DistanceGrid::new(vec![0.0, 1.0]).is_err());
        assert!(DistanceGrid::new(vec![1.0, 1.0]).is_err());
        assert!(DistanceGrid::new(vec![1.0, f64::INFINITY]).is_err());
        let g = DistanceGrid::uniform(64.0, 64).unwrap();
        assert_eq!(g.radii()[0], 1.0);
        assert_eq!(g.r_max(), 64.0);
        let w = ObservationWindow::rectangle(0.0, 0.0, 400.0, 100.0).unwrap();
        assert_eq!(DistanceGrid::auto(&w).unwrap().r_max(), 50.0);
    }

    #[test]
    fn density_examples() {
        let w = ObservationWindow::rectangle(0.0, 0.0, 10.0, 100.0).unwrap();
        let p = PointPattern::from_points(vec![Point2D::new(1.0, 1.0); 100]).unwrap();
        assert_eq!(global_density(&p, &w).unwrap().lambda, 0.1);
        let w2 = ObservationWindow::rectangle(0.0, 0.0, 1.0, 2.0).unwrap();
        assert_eq!(global_density(&pat(&[(0.5, 0.5)]), &w2).unwrap().lambda, 0.5);
        assert!(global_density(&pat(&[]), &w2).is_err());
    }

    #[test]
    fn k_two_points() {
        let w = ObservationWindow::rectangle(0.0, 0.0, 10.0, 10.0).unwrap();
        let p = pat(&[(4.0, 5.0), (5.0, 5.0)]);
        let k = k_function(&p, &w, &grid(&[0.5, 2.0]), EdgeCorrection::None).unwrap();
        assert_eq!(k.values, vec![0.0, 50.0]);
        assert!(k_function(&pat(&[(1.0, 1.0)]), &w, &grid(&[1.0]), EdgeCorrection::None).is_err());
        assert!(k_function(&p, &w, &grid(&[1.0]), EdgeCorrection::KaplanMeier).is_err());
    }

    #[test]
    fn l_examples() {
        let mk = |r: f64, k: f64| CurveEstimate {
            function: FunctionId::K,
            radii: grid(&[r]),
            values: vec![k],
            correction: EdgeCorrection::None,
            n_points: 2,
            intensity: 1.0,
        };
        assert_eq!(l_function(&mk(10.0, PI * 100.0)).unwrap().values[0], 0.0);
        assert!((l_function(&mk(1.0, 4.0 * PI)).unwrap().values[0] - 1.0).abs() < 1e-15);
        assert_eq!(l_function(&mk(3.0, 0.0)).unwrap().values[0], -3.0);
        let mut not_k = mk(1.0, 1.0);
        not_k.function = FunctionId::G;
        assert!(l_function(&not_k).is_err());
    }

    #[test]
    fn isotropic_weight_examples() {
        let w = ObservationWindow::rectangle(0.0, 0.0, 100.0, 100.0).unwrap();
        assert_eq!(isotropic_weight(&w, &Point2D::new(50.0, 50.0), 10.0).unwrap(), 1.0);
        assert_eq!(isotropic_weight(&w, &Point2D::new(50.0, 0.0), 1.0).unwrap(), 2.0);
        assert_eq!(isotropic_weight(&w, &Point2D::new(0.0, 0.0), 1.0).unwrap(), 4.0);
        assert_eq!(isotropic_weight(&w, &Point2D::new(100.0, 100.0), 1.0).unwrap(), 4.0);
        assert!(isotropic_weight(&w, &Point2D::new(-1.0, 0.0), 1.0).is_err());
        // Thin sliver window: nearly the whole circle is outside, weight capped.
        let sliver = ObservationWindow::rectangle(0.0, 0.0, 1000.0, 0.01).unwrap();
        assert_eq!(isotropic_weight(&sliver, &Point2D::new(500.0, 0.005), 100.0).unwrap(), MAX_ISOTROPIC_WEIGHT);
    }

    #[test]
    fn arc_mask_matches_direct_midpoint_test() {
        let tri = ConvexPolygon::new(vec![
            Point2D::new(0.0, 0.0),
            Point2D::new(30.0, 2.0),
            Point2D::new(12.0, 25.0),
        ])
        .unwrap();
        let sq = ConvexPolygon::rectangle(20.0, -5.0, 15.0, 15.0).unwrap();
        let w = ObservationWindow::new(vec![tri, sq]).unwrap();
        let mut checked = 0;
        for i in 0..40 {
            for j in 0..40 {
                let c = Point2D::new(-2.0 + i as f64 * 0.93, -6.0 + j as f64 * 0.81);
                if !w.contains(&c) {
                    continue;
                }
                for r in [0.7, 3.3, 9.1, 17.0, 40.0] {
                    assert_eq!(arcs_inside(&w, &c, r), arcs_inside_direct(&w, &c, r), "c={c:?} r={r}");
                    checked += 1;
                }
            }
        }
        assert!(checked > 1000);
    }

    #[test]
    fn g_of_pairs_peaks_at_separation() {
        // Isolated tight pairs at separation 2 spread over a 200x200 window.
        let mut pts = Vec::new();
        for i in 0..10 {
            for j in 0..10 {
                let (x, y) = (10.0 + 20.0 * i as f64, 10.0 + 20.0 * j as f64);
                pts.push((x, y));
                pts.push((x + 2.0, y));
            }
        }
        let p = pat(&pts);
        let w = ObservationWindow::rectangle(0.0, 0.0, 200.0, 200.0).unwrap();
        let gr = DistanceGrid::uniform(10.0, 20).unwrap();
        let g = g_function(&p, &w, &gr, EdgeCorrection::None, 0.5).unwrap();
        // Kernel pair-count oracle: 200 ordered pairs at d = 2, nothing else below 10.
        let lambda = 200.0 / 40000.0;
        for (r, v) in gr.radii().iter().zip(&g.values) {
            let expect = 200.0 * epanechnikov(r - 2.0, 0.5) / (2.0 * PI * r * lambda * lambda * 40000.0);
            assert!((v - expect).abs() < 1e-12 * expect.max(1.0));
        }
        let peak = g.values.iter().cloned().fold(f64::MIN, f64::max);
        let at = g.values.iter().position(|&v| v == peak).unwrap();
        assert_eq!(gr.radii()[at], 2.0);
        assert!(peak > 10.0);
        // Radii well below the pair separation see nothing.
        assert_eq!(g.values[0], 0.0);
        assert!(g_function(&p, &w, &gr, EdgeCorrection::None, 0.0).is_err());
    }

    #[test]
    fn g_cdf_collinear_example() {
        let p = pat(&[(0.0, 0.0), (1.0, 0.0), (3.0, 0.0)]);
        let w = ObservationWindow::rectangle(-10.0, -10.0, 20.0, 20.0).unwrap();
        let g = g_empirical_cdf(&p, &w, &grid(&[0.5, 1.0, 2.0]), EdgeCorrection::None).unwrap();
        assert_eq!(g.values, vec![0.0, 2.0 / 3.0, 1.0]);
        let km = g_empirical_cdf(&p, &w, &grid(&[0.5, 1.0, 2.0]), EdgeCorrection::KaplanMeier).unwrap();
        assert_eq!(km.values, g.values);
        assert!(g_empirical_cdf(&p, &w, &grid(&[1.0]), EdgeCorrection::RipleyIsotropic).is_err());
    }

    #[test]
    fn kaplan_meier_by_hand() {
        // Times: 1 (event), 2 (censored), 3 (event), 3 (event), 5 (event).
        let d = [1.0, 9.0, 3.0, 3.0, 5.0];
        let c = [10.0, 2.0, 10.0, 10.0, 10.0];
        let g = grid(&[0.5, 1.0, 2.5, 3.0, 5.0]);
        let km = kaplan_meier_cdf(&d, &c, &g);
        // S(1) = 4/5; censor at 2; S(3) = 4/5 * (1 - 2/3); S(5) = 0.
        let expect = [0.0, 0.2, 0.2, 1.0 - 0.8 * (1.0 / 3.0), 1.0];
        for (a, b) in km.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15, "{km:?}");
        }
    }

    #[test]
    fn f_single_quadrat_example() {
        let w = unit_square();
        let p = pat(&[(0.5, 0.5)]);
        let y = 0.5f64.sqrt();
        let gr = grid(&[0.5, y - 1e-12, y, 1.0, 2.0]);
        let f = f_function_at(&p, &w, &gr, EdgeCorrection::None, &[Point2D::new(0.0, 0.0)]).unwrap();
        assert_eq!(f.values, vec![0.0, 0.0, 1.0, 1.0, 1.0]);
        assert!(f_function(&p, &w, &gr, EdgeCorrection::None, 0, 1).is_err());
    }

    #[test]
    fn f_is_deterministic_and_reaches_one() {
        let w = ObservationWindow::rectangle(0.0, 0.0, 10.0, 10.0).unwrap();
        let p = pat(&[(2.0, 2.0), (7.0, 8.0), (5.0, 5.0)]);
        let gr = DistanceGrid::uniform(w.max_diameter(), 16).unwrap();
        let a = f_function(&p, &w, &gr, EdgeCorrection::None, 500, 9).unwrap();
        let b = f_function(&p, &w, &gr, EdgeCorrection::None, 500, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(*a.values.last().unwrap(), 1.0);
        let q = sample_quadrats(&w, 500, 9).unwrap();
        assert_eq!(q.len(), 500);
        assert!(q.iter().all(|x| w.contains(x)));
    }

    #[test]
    fn quadrats_split_by_area() {
        let big = ConvexPolygon::rectangle(0.0, 0.0, 3.0, 1.0).unwrap();
        let small = ConvexPolygon::rectangle(10.0, 0.0, 1.0, 1.0).unwrap();
        let w = ObservationWindow::new(vec![big.clone(), small]).unwrap();
        let q = sample_quadrats(&w, 1001, 3).unwrap();
        assert_eq!(q.len(), 1001);
        assert_eq!(q.iter().filter(|p| big.contains(p)).count(), 751);
    }

    #[test]
    fn j_examples() {
        let mk = |f: FunctionId, v: Vec<f64>| CurveEstimate {
            function: f,
            radii: grid(&[1.0, 2.0, 3.0]),
            values: v,
            correction: EdgeCorrection::None,
            n_points: 5,
            intensity: 1.0,
        };
        let g = mk(FunctionId::G, vec![0.1, 0.5, 0.9]);
        let j = j_function(&g, &mk(FunctionId::F, vec![0.1, 0.75, 1.0])).unwrap();
        assert_eq!(j.values[0], 1.0);
        assert_eq!(j.values[1], 2.0);
        assert!(j.values[2].is_nan());
        let mut other = mk(FunctionId::F, vec![0.0; 3]);
        other.radii = grid(&[1.0, 2.0, 4.0]);
        assert!(matches!(j_function(&g, &other), Err(Error::GridMismatch)));
        assert!(j_function(&other, &g).is_err());
    }

    #[test]
    fn ann_examples() {
        assert_eq!(ann(&pat(&[(0.0, 0.0), (3.0, 0.0)])).unwrap(), 3.0);
        let grid3: Vec<(f64, f64)> = (0..9).map(|i| ((i % 3) as f64, (i / 3) as f64)).collect();
        assert_eq!(ann(&pat(&grid3)).unwrap(), 1.0);
        assert_eq!(ann(&pat(&[(0.0, 0.0), (1.0, 0.0), (3.0, 0.0)])).unwrap(), 4.0 / 3.0);
        assert!(ann(&pat(&[(0.0, 0.0)])).is_err());
    }

    fn arb_pattern() -> impl Strategy<Value = Vec<Point2D>> {
        prop::collection::vec((0.0..100.0f64, 0.0..100.0f64), 2..60)
            .prop_map(|v| v.into_iter().map(|(x, y)| Point2D::new(x, y)).collect())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn curve_invariants(pts in arb_pattern(), seed in any::<u64>()) {
            let p = PointPattern::from_points(pts).unwrap();
            let w = ObservationWindow::rectangle(0.0, 0.0, 100.0, 100.0).unwrap();
            let gr = DistanceGrid::uniform(30.0, 24).unwrap();
            for corr in [EdgeCorrection::None, EdgeCorrection::RipleyIsotropic] {
                let k = k_function(&p, &w, &gr, corr).unwrap();
                prop_assert!(k.values.windows(2).all(|x| x[0] <= x[1]));
                prop_assert!(k.values.iter().all(|&v| v >= 0.0));
                let g = g_function(&p, &w, &gr, corr, 2.0).unwrap();
                prop_assert!(g.values.iter().all(|&v| v >= 0.0));
            }
            for corr in [EdgeCorrection::None, EdgeCorrection::KaplanMeier] {
                let g = g_empirical_cdf(&p, &w, &gr, corr).unwrap();
                let f = f_function(&p, &w, &gr, corr, 200, seed).unwrap();
                for c in [&g, &f] {
                    prop_assert!(c.values.windows(2).all(|x| x[0] <= x[1]));
                    prop_assert!(c.values.iter().all(|&v| (0.0..=1.0).contains(&v)));
                }
            }
        }

        #[test]
        fn weights_at_least_one(x in 0.0..100.0f64, y in 0.0..100.0f64, r in 0.1..150.0f64) {
            let w = ObservationWindow::rectangle(0.0, 0.0, 100.0, 100.0).unwrap();
            let wt = isotropic_weight(&w, &Point2D::new(x, y), r).unwrap();
            prop_assert!((1.0..=MAX_ISOTROPIC_WEIGHT).contains(&wt));
        }
    }
}
