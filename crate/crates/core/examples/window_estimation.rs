//! Tissue windows from DBSCAN clusters and their convex hulls.
//!
//! Run with `cargo run --example window_estimation [centroids.csv]`.

use std::path::PathBuf;

use histowas::geometry::{dbscan, window_from_labeling, DEFAULT_EPS, DEFAULT_MIN_SAMPLES};
use histowas::io::read_centroids;

fn main() -> histowas::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/centroids.csv"));

    for pattern in read_centroids(&path)?.iter().filter(|p| p.object_type == "tubule") {
        let labels = dbscan(pattern, DEFAULT_EPS, DEFAULT_MIN_SAMPLES)?;
        match window_from_labeling(pattern, &labels) {
            Ok(window) => println!(
                "{}: {} points, {} clusters, {} noise, {} hulls, area {:.0} µm²{}",
                pattern.slide_id,
                pattern.len(),
                labels.n_clusters(),
                labels.noise_count(),
                window.hulls().len(),
                window.total_area(),
                if window.has_overlaps() { " (overlapping hulls)" } else { "" }
            ),
            Err(e) => println!("{}: {} points, {e}", pattern.slide_id, pattern.len()),
        }
    }
    Ok(())
}
