//! Point clouds, DBSCAN tissue clustering and convex-hull observation windows.

use std::collections::{HashMap, VecDeque};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default DBSCAN neighborhood radius in µm. A tuning knob, not a calibrated value.
pub const DEFAULT_EPS: f64 = 500.0;
/// Default DBSCAN core-point threshold (the point itself included).
pub const DEFAULT_MIN_SAMPLES: usize = 10;

/// Label assigned to DBSCAN noise points.
pub const NOISE: i64 = -1;

/// Tolerance (µm) for boundary membership in [`ObservationWindow::contains`].
const BOUNDARY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2D {
    pub x: f64,
    pub y: f64,
}

impl Point2D {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Euclidean distance. Every estimator goes through this one formula so
    /// that fast paths and brute-force checks agree bit for bit.
    #[inline]
    pub fn distance(&self, other: &Point2D) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        (dx * dx + dy * dy).sqrt()
    }

    fn sub(&self, other: &Point2D) -> (f64, f64) {
        (self.x - other.x, self.y - other.y)
    }
}

/// Centroids of one object type on one slide.
#[derive(Debug, Clone, PartialEq)]
pub struct PointPattern {
    points: Vec<Point2D>,
    pub slide_id: String,
    pub object_type: String,
}

impl PointPattern {
    /// Builds a pattern, rejecting non-finite coordinates. Duplicate
    /// coordinates are kept and reported through `log`.
    pub fn new(
        points: Vec<Point2D>,
        slide_id: impl Into<String>,
        object_type: impl Into<String>,
    ) -> Result<Self> {
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::invalid(format!("point {i} has a non-finite coordinate")));
        }
        let pattern = Self {
            points,
            slide_id: slide_id.into(),
            object_type: object_type.into(),
        };
        let dups = pattern.duplicate_count();
        if dups > 0 {
            warn!(
                "slide {} ({}): {dups} duplicated centroid(s) kept",
                pattern.slide_id, pattern.object_type
            );
        }
        Ok(pattern)
    }

    /// Anonymous pattern, mostly for tests and simulation.
    pub fn from_points(points: Vec<Point2D>) -> Result<Self> {
        Self::new(points, "", "")
    }

    pub fn points(&self) -> &[Point2D] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Number of points whose exact coordinates already occurred earlier.
    pub fn duplicate_count(&self) -> usize {
        let mut keys: Vec<(u64, u64)> = self
            .points
            .iter()
            .map(|p| ((p.x + 0.0).to_bits(), (p.y + 0.0).to_bits()))
            .collect();
        keys.sort_unstable();
        keys.windows(2).filter(|w| w[0] == w[1]).count()
    }

    /// Sub-pattern of points inside `window`, keeping order and identifiers.
    pub fn restrict_to(&self, window: &ObservationWindow) -> PointPattern {
        PointPattern {
            points: self
                .points
                .iter()
                .copied()
                .filter(|p| window.contains(p))
                .collect(),
            slide_id: self.slide_id.clone(),
            object_type: self.object_type.clone(),
        }
    }

    /// Applies `f` to every coordinate pair.
    pub fn map_points(&self, f: impl Fn(Point2D) -> Point2D) -> Result<PointPattern> {
        PointPattern::new(
            self.points.iter().copied().map(f).collect(),
            self.slide_id.clone(),
            self.object_type.clone(),
        )
    }
}

/// Uniform-grid spatial index over a borrowed point slice.
pub(crate) struct GridIndex<'a> {
    points: &'a [Point2D],
    cell: f64,
    cells: HashMap<(i64, i64), Vec<usize>>,
    lo: (i64, i64),
    hi: (i64, i64),
}

impl<'a> GridIndex<'a> {
    pub fn new(points: &'a [Point2D], cell: f64) -> Self {
        assert!(cell > 0.0 && cell.is_finite(), "grid cell size must be positive");
        let mut cells: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        let mut lo = (i64::MAX, i64::MAX);
        let mut hi = (i64::MIN, i64::MIN);
        for (i, p) in points.iter().enumerate() {
            let key = Self::key_for(cell, p);
            lo = (lo.0.min(key.0), lo.1.min(key.1));
            hi = (hi.0.max(key.0), hi.1.max(key.1));
            cells.entry(key).or_default().push(i);
        }
        Self {
            points,
            cell,
            cells,
            lo,
            hi,
        }
    }

    /// Picks a cell size giving a handful of points per cell.
    pub fn with_density(points: &'a [Point2D], area: f64) -> Self {
        let n = points.len().max(1) as f64;
        let (x0, y0, x1, y1) = points.iter().fold(
            (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
            |(a, b, c, d), p| (a.min(p.x), b.min(p.y), c.max(p.x), d.max(p.y)),
        );
        let extent = (x1 - x0).max(y1 - y0);
        let cell = (2.0 * area / n).sqrt().max(extent / n);
        let cell = if cell.is_finite() && cell > 0.0 { cell } else { 1.0 };
        Self::new(points, cell)
    }

    fn key_for(cell: f64, p: &Point2D) -> (i64, i64) {
        ((p.x / cell).floor() as i64, (p.y / cell).floor() as i64)
    }

    /// Indices of all points within distance `r` of `p` (inclusive), ascending.
    pub fn within(&self, p: &Point2D, r: f64, out: &mut Vec<usize>) {
        out.clear();
        if self.points.is_empty() {
            return;
        }
        let x0 = (((p.x - r) / self.cell).floor() as i64).max(self.lo.0);
        let x1 = (((p.x + r) / self.cell).floor() as i64).min(self.hi.0);
        let y0 = (((p.y - r) / self.cell).floor() as i64).max(self.lo.1);
        let y1 = (((p.y + r) / self.cell).floor() as i64).min(self.hi.1);
        for cx in x0..=x1 {
            for cy in y0..=y1 {
                if let Some(bucket) = self.cells.get(&(cx, cy)) {
                    out.extend(bucket.iter().copied().filter(|&j| self.points[j].distance(p) <= r));
                }
            }
        }
        out.sort_unstable();
    }

    /// Distance from `p` to its nearest indexed point, skipping index `exclude`.
    pub fn nearest_distance(&self, p: &Point2D, exclude: Option<usize>) -> Option<f64> {
        if self.points.len() <= usize::from(exclude.is_some()) {
            return None;
        }
        let (cx, cy) = Self::key_for(self.cell, p);
        let span = [cx - self.lo.0, self.hi.0 - cx, cy - self.lo.1, self.hi.1 - cy]
            .into_iter()
            .map(i64::abs)
            .max()
            .unwrap_or(0);
        let mut best = f64::INFINITY;
        let mut ring: i64 = 0;
        loop {
            for (kx, ky) in ring_cells(cx, cy, ring) {
                if let Some(bucket) = self.cells.get(&(kx, ky)) {
                    for &j in bucket {
                        if Some(j) == exclude {
                            continue;
                        }
                        let d = self.points[j].distance(p);
                        if d < best {
                            best = d;
                        }
                    }
                }
            }
            // Unvisited points lie at least `ring * cell` away.
            if best <= ring as f64 * self.cell || ring > span {
                break;
            }
            ring += 1;
        }
        best.is_finite().then_some(best)
    }
}

fn ring_cells(cx: i64, cy: i64, ring: i64) -> impl Iterator<Item = (i64, i64)> {
    let cells: Vec<(i64, i64)> = if ring == 0 {
        vec![(cx, cy)]
    } else {
        let mut v = Vec::with_capacity((8 * ring) as usize);
        for dx in -ring..=ring {
            v.push((cx + dx, cy - ring));
            v.push((cx + dx, cy + ring));
        }
        for dy in (-ring + 1)..ring {
            v.push((cx - ring, cy + dy));
            v.push((cx + ring, cy + dy));
        }
        v
    };
    cells.into_iter()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterLabeling {
    /// Per-point cluster id, [`NOISE`] for noise.
    pub labels: Vec<i64>,
    pub eps: f64,
    pub min_samples: usize,
}

impl ClusterLabeling {
    pub fn n_clusters(&self) -> usize {
        self.labels.iter().copied().max().map_or(0, |m| (m + 1).max(0) as usize)
    }

    pub fn noise_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l == NOISE).count()
    }

    /// Point indices per cluster, in label order.
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_clusters()];
        for (i, &l) in self.labels.iter().enumerate() {
            if l >= 0 {
                out[l as usize].push(i);
            }
        }
        out
    }
}

/// DBSCAN over a uniform grid index with cell size `eps`.
///
/// Neighborhoods include the query point itself, so `min_samples = 1` makes
/// every point a core point. Points are scanned in input order; a border
/// point joins the cluster of the first core point that reaches it.
pub fn dbscan(pattern: &PointPattern, eps: f64, min_samples: usize) -> Result<ClusterLabeling> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::invalid("dbscan eps must be positive"));
    }
    if min_samples == 0 {
        return Err(Error::invalid("dbscan min_samples must be at least 1"));
    }
    let pts = pattern.points();
    let n = pts.len();
    let mut labels = vec![NOISE; n];
    if n == 0 {
        return Ok(ClusterLabeling {
            labels,
            eps,
            min_samples,
        });
    }

    let index = GridIndex::new(pts, eps);
    let mut visited = vec![false; n];
    let mut next_label = 0i64;
    let mut neighbors = Vec::new();
    let mut queue = VecDeque::new();

    for i in 0..n {
        if visited[i] {
            continue;
        }
        visited[i] = true;
        index.within(&pts[i], eps, &mut neighbors);
        if neighbors.len() < min_samples {
            continue;
        }
        let label = next_label;
        next_label += 1;
        labels[i] = label;
        queue.clear();
        queue.extend(neighbors.iter().copied());
        while let Some(j) = queue.pop_front() {
            if labels[j] == NOISE {
                labels[j] = label;
            }
            if visited[j] {
                continue;
            }
            visited[j] = true;
            index.within(&pts[j], eps, &mut neighbors);
            if neighbors.len() >= min_samples {
                queue.extend(neighbors.iter().copied().filter(|&k| labels[k] == NOISE || !visited[k]));
            }
        }
    }

    Ok(ClusterLabeling {
        labels,
        eps,
        min_samples,
    })
}

/// Convex polygon stored as a counter-clockwise vertex ring without
/// repeated or collinear vertices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexPolygon {
    vertices: Vec<Point2D>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Hull {
    Polygon(ConvexPolygon),
    /// All input points were collinear (or coincident).
    Degenerate,
}

impl Hull {
    pub fn polygon(self) -> Option<ConvexPolygon> {
        match self {
            Hull::Polygon(p) => Some(p),
            Hull::Degenerate => None,
        }
    }
}

fn cross(o: &Point2D, a: &Point2D, b: &Point2D) -> f64 {
    let (ax, ay) = a.sub(o);
    let (bx, by) = b.sub(o);
    ax * by - ay * bx
}

/// Andrew's monotone chain. Requires at least three points.
pub fn convex_hull(points: &[Point2D]) -> Result<Hull> {
    if points.len() < 3 {
        return Err(Error::invalid(format!(
            "convex hull needs at least 3 points, got {}",
            points.len()
        )));
    }
    let mut pts: Vec<Point2D> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();

    let mut lower: Vec<Point2D> = Vec::with_capacity(pts.len());
    for p in &pts {
        while lower.len() >= 2 && cross(&lower[lower.len() - 2], &lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(*p);
    }
    let mut upper: Vec<Point2D> = Vec::with_capacity(pts.len());
    for p in pts.iter().rev() {
        while upper.len() >= 2 && cross(&upper[upper.len() - 2], &upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(*p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);

    if lower.len() < 3 {
        return Ok(Hull::Degenerate);
    }
    let poly = ConvexPolygon { vertices: lower };
    if poly.area() <= 0.0 {
        return Ok(Hull::Degenerate);
    }
    Ok(Hull::Polygon(poly))
}

impl ConvexPolygon {
    /// Validates a CCW convex ring with positive area.
    pub fn new(vertices: Vec<Point2D>) -> Result<Self> {
        if vertices.len() < 3 || vertices.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("polygon needs at least 3 finite vertices"));
        }
        let n = vertices.len();
        for i in 0..n {
            if cross(&vertices[i], &vertices[(i + 1) % n], &vertices[(i + 2) % n]) <= 0.0 {
                return Err(Error::invalid("polygon is not strictly convex and counter-clockwise"));
            }
        }
        let poly = Self { vertices };
        if poly.area() <= 0.0 {
            return Err(Error::invalid("polygon has zero area"));
        }
        Ok(poly)
    }

    /// Axis-aligned rectangle with lower-left corner `(x0, y0)`.
    pub fn rectangle(x0: f64, y0: f64, width: f64, height: f64) -> Result<Self> {
        Self::new(vec![
            Point2D::new(x0, y0),
            Point2D::new(x0 + width, y0),
            Point2D::new(x0 + width, y0 + height),
            Point2D::new(x0, y0 + height),
        ])
    }

    pub fn vertices(&self) -> &[Point2D] {
        &self.vertices
    }

    pub fn edges(&self) -> impl Iterator<Item = (&Point2D, &Point2D)> {
        let n = self.vertices.len();
        (0..n).map(move |i| (&self.vertices[i], &self.vertices[(i + 1) % n]))
    }

    /// Shoelace area.
    pub fn area(&self) -> f64 {
        let twice: f64 = self.edges().map(|(a, b)| a.x * b.y - b.x * a.y).sum();
        0.5 * twice
    }

    pub fn contains(&self, p: &Point2D) -> bool {
        self.edges().all(|(a, b)| {
            let len = a.distance(b);
            cross(a, b, p) >= -BOUNDARY_TOL * len
        })
    }

    /// Distance from `p` to the polygon's boundary.
    pub fn distance_to_boundary(&self, p: &Point2D) -> f64 {
        self.edges()
            .map(|(a, b)| segment_distance(p, a, b))
            .fold(f64::INFINITY, f64::min)
    }

    /// Returns `(min_x, min_y, max_x, max_y)`.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        self.vertices.iter().fold(
            (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
            |(x0, y0, x1, y1), p| (x0.min(p.x), y0.min(p.y), x1.max(p.x), y1.max(p.y)),
        )
    }

    pub fn diameter(&self) -> f64 {
        let v = &self.vertices;
        let mut d: f64 = 0.0;
        for i in 0..v.len() {
            for j in (i + 1)..v.len() {
                d = d.max(v[i].distance(&v[j]));
            }
        }
        d
    }

    /// True when the interiors intersect (touching edges do not count).
    pub fn overlaps(&self, other: &ConvexPolygon) -> bool {
        fn separated(axes_from: &ConvexPolygon, a: &ConvexPolygon, b: &ConvexPolygon) -> bool {
            axes_from.edges().any(|(p, q)| {
                let (nx, ny) = (-(q.y - p.y), q.x - p.x);
                let project = |poly: &ConvexPolygon| {
                    poly.vertices.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                        let s = v.x * nx + v.y * ny;
                        (lo.min(s), hi.max(s))
                    })
                };
                let (alo, ahi) = project(a);
                let (blo, bhi) = project(b);
                ahi <= blo || bhi <= alo
            })
        }
        !(separated(self, self, other) || separated(other, self, other))
    }

    pub fn scaled(&self, s: f64) -> ConvexPolygon {
        ConvexPolygon {
            vertices: self.vertices.iter().map(|p| Point2D::new(p.x * s, p.y * s)).collect(),
        }
    }
}

fn segment_distance(p: &Point2D, a: &Point2D, b: &Point2D) -> f64 {
    let (abx, aby) = b.sub(a);
    let (apx, apy) = p.sub(a);
    let len2 = abx * abx + aby * aby;
    let t = if len2 > 0.0 {
        ((apx * abx + apy * aby) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let q = Point2D::new(a.x + t * abx, a.y + t * aby);
    p.distance(&q)
}

/// Union of convex hulls in which a pattern is observed.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationWindow {
    hulls: Vec<ConvexPolygon>,
    total_area: f64,
}

impl ObservationWindow {
    /// Sums hull areas. Overlapping hulls are allowed but reported.
    pub fn new(hulls: Vec<ConvexPolygon>) -> Result<Self> {
        if hulls.is_empty() {
            return Err(Error::NoObservableWindow);
        }
        let total_area = hulls.iter().map(ConvexPolygon::area).sum();
        let window = Self { hulls, total_area };
        if window.has_overlaps() {
            warn!("observation window has overlapping hulls; total area is the plain sum");
        }
        Ok(window)
    }

    pub fn rectangle(x0: f64, y0: f64, width: f64, height: f64) -> Result<Self> {
        Self::new(vec![ConvexPolygon::rectangle(x0, y0, width, height)?])
    }

    pub fn hulls(&self) -> &[ConvexPolygon] {
        &self.hulls
    }

    pub fn total_area(&self) -> f64 {
        self.total_area
    }

    pub fn has_overlaps(&self) -> bool {
        let h = &self.hulls;
        (0..h.len()).any(|i| ((i + 1)..h.len()).any(|j| h[i].overlaps(&h[j])))
    }

    /// Boundary points count as inside.
    pub fn contains(&self, p: &Point2D) -> bool {
        self.hulls.iter().any(|h| h.contains(p))
    }

    /// Distance from an interior point to the window boundary, taken as the
    /// largest distance to the boundary of any hull containing it.
    pub fn distance_to_boundary(&self, p: &Point2D) -> Result<f64> {
        self.hulls
            .iter()
            .filter(|h| h.contains(p))
            .map(|h| h.distance_to_boundary(p))
            .reduce(f64::max)
            .ok_or_else(|| Error::invalid("distance_to_boundary: point lies outside the window"))
    }

    /// Largest hull diameter; no two points of one hull are farther apart.
    pub fn max_diameter(&self) -> f64 {
        self.hulls.iter().map(ConvexPolygon::diameter).fold(0.0, f64::max)
    }

    pub fn scaled(&self, s: f64) -> Result<ObservationWindow> {
        Self::new(self.hulls.iter().map(|h| h.scaled(s)).collect())
    }
}

/// Builds the window from an existing labeling: one hull per cluster with at
/// least three points and a non-degenerate hull.
pub fn window_from_labeling(pattern: &PointPattern, labeling: &ClusterLabeling) -> Result<ObservationWindow> {
    let pts = pattern.points();
    let mut hulls = Vec::new();
    for members in labeling.clusters() {
        if members.len() < 3 {
            continue;
        }
        let cluster: Vec<Point2D> = members.iter().map(|&i| pts[i]).collect();
        if let Hull::Polygon(poly) = convex_hull(&cluster)? {
            hulls.push(poly);
        }
    }
    ObservationWindow::new(hulls)
}

/// DBSCAN followed by per-cluster convex hulls; the window area is the sum
/// of hull areas.
pub fn estimate_window(pattern: &PointPattern, eps: f64, min_samples: usize) -> Result<ObservationWindow> {
    let labeling = dbscan(pattern, eps, min_samples)?;
    window_from_labeling(pattern, &labeling)
}
