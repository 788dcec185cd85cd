//! Independent reference implementations shared by the integration tests
//! and the acceptance harness.

#![allow(dead_code)]

use std::f64::consts::PI;
use std::path::PathBuf;

use histowas::Point2D;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn dist(a: &Point2D, b: &Point2D) -> f64 {
    ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt()
}

/// Uncorrected Ripley K by direct double sum over ordered pairs.
pub fn naive_k(points: &[Point2D], area: f64, radii: &[f64]) -> Vec<f64> {
    let n = points.len() as f64;
    radii
        .iter()
        .map(|&r| {
            let mut count = 0usize;
            for (i, a) in points.iter().enumerate() {
                for (j, b) in points.iter().enumerate() {
                    if i != j && dist(a, b) <= r {
                        count += 1;
                    }
                }
            }
            area * count as f64 / (n * n)
        })
        .collect()
}

pub fn naive_nn(points: &[Point2D]) -> Vec<f64> {
    points
        .iter()
        .enumerate()
        .map(|(i, a)| {
            points
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, b)| dist(a, b))
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

pub fn naive_ann(points: &[Point2D]) -> f64 {
    let d = naive_nn(points);
    d.iter().sum::<f64>() / d.len() as f64
}

/// Empirical CDF of nearest-neighbour distances.
pub fn naive_g(points: &[Point2D], radii: &[f64]) -> Vec<f64> {
    let d = naive_nn(points);
    radii
        .iter()
        .map(|&r| d.iter().filter(|&&v| v <= r).count() as f64 / d.len() as f64)
        .collect()
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE) || a == b
}

/// Close in relative terms for large values, absolute for values below 1.
pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

/// Benjamini-Hochberg rejections by evaluating the definition directly.
pub fn bh_brute(p: &[f64], q: f64) -> Vec<bool> {
    let m = p.len();
    let mut sorted = p.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut cut = None;
    for i in 1..=m {
        if sorted[i - 1] <= i as f64 * q / m as f64 {
            cut = Some(sorted[i - 1]);
        }
    }
    p.iter().map(|&v| cut.is_some_and(|c| v <= c)).collect()
}

/// `P(|T| < t)` for Student's t with integer `df`, by the closed-form
/// trigonometric series.
pub fn t_central_prob(t: f64, df: u32) -> f64 {
    let theta = (t.abs() / (df as f64).sqrt()).atan();
    let (s, c) = (theta.sin(), theta.cos());
    if df % 2 == 1 {
        let mut sum = 0.0;
        if df > 1 {
            let mut term = c;
            sum = term;
            let mut k = 1;
            while 2 * k + 1 < df {
                term *= c * c * (2 * k) as f64 / (2 * k + 1) as f64;
                sum += term;
                k += 1;
            }
        }
        2.0 / PI * (theta + s * sum)
    } else {
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 1;
        while 2 * k < df {
            term *= c * c * (2 * k - 1) as f64 / (2 * k) as f64;
            sum += term;
            k += 1;
        }
        s * sum
    }
}

pub fn t_two_sided(t: f64, df: u32) -> f64 {
    1.0 - t_central_prob(t, df)
}

/// Upper 97.5% point by bisection on the closed-form CDF.
pub fn t_975(df: u32) -> f64 {
    let (mut lo, mut hi) = (0.0, 1e3);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if t_two_sided(mid, df) > 0.05 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub struct OlsOracle {
    pub beta0: f64,
    pub beta1: f64,
    pub se: f64,
    pub t: f64,
    pub p: f64,
    pub ci: (f64, f64),
}

/// OLS from the 2×2 normal equations `[n Σx; Σx Σx²] β = [Σy; Σxy]`.
pub fn ols_normal_equations(x: &[f64], y: &[f64]) -> OlsOracle {
    let n = x.len() as f64;
    let sx: f64 = x.iter().sum();
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let sy: f64 = y.iter().sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let det = n * sxx - sx * sx;
    let beta1 = (n * sxy - sx * sy) / det;
    let beta0 = (sxx * sy - sx * sxy) / det;
    let rss: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - beta0 - beta1 * a).powi(2))
        .sum();
    let df = x.len() as u32 - 2;
    let sigma2 = rss / df as f64;
    // Var(β₁) is the (2,2) entry of σ²(XᵀX)⁻¹.
    let se = (sigma2 * n / det).sqrt();
    let t = beta1 / se;
    let half = t_975(df) * se;
    OlsOracle {
        beta0,
        beta1,
        se,
        t,
        p: t_two_sided(t, df),
        ci: (beta1 - half, beta1 + half),
    }
}
