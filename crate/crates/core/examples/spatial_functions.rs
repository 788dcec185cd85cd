//! K, L, g, G, F and J on one slide, with and without edge correction.

use std::path::PathBuf;

use histowas::geometry::{estimate_window, DEFAULT_EPS, DEFAULT_MIN_SAMPLES};
use histowas::io::read_centroids;
use histowas::ppstats::{self, DistanceGrid, EdgeCorrection};

fn main() -> histowas::Result<()> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/centroids.csv");
    let patterns = read_centroids(&path)?;
    let slide = patterns
        .iter()
        .find(|p| p.slide_id == "WSI-02" && p.object_type == "tubule")
        .expect("fixture slide");
    let window = estimate_window(slide, DEFAULT_EPS, DEFAULT_MIN_SAMPLES)?;
    let pattern = slide.restrict_to(&window);
    let lambda = ppstats::global_density(&pattern, &window)?.lambda;
    let grid = DistanceGrid::new(vec![25.0, 50.0, 75.0, 100.0, 150.0])?;

    let k_raw = ppstats::k_function(&pattern, &window, &grid, EdgeCorrection::None)?;
    let k_iso = ppstats::k_function(&pattern, &window, &grid, EdgeCorrection::RipleyIsotropic)?;
    let l = ppstats::l_function(&k_iso)?;
    let g = ppstats::g_function(
        &pattern,
        &window,
        &grid,
        EdgeCorrection::RipleyIsotropic,
        ppstats::default_bandwidth(lambda),
    )?;
    let nn_g = ppstats::g_empirical_cdf(&pattern, &window, &grid, EdgeCorrection::KaplanMeier)?;
    let f = ppstats::f_function(&pattern, &window, &grid, EdgeCorrection::KaplanMeier, 1000, 7)?;
    let j = ppstats::j_function(&nn_g, &f)?;

    println!("{}: n = {}, λ = {lambda:.3e} /µm², ANN = {:.2} µm", slide.slide_id, pattern.len(), ppstats::ann(&pattern)?);
    println!("{:>6} {:>10} {:>10} {:>8} {:>6} {:>6} {:>6} {:>6}", "r", "K raw", "K iso", "L", "g", "G", "F", "J");
    for (i, r) in grid.radii().iter().enumerate() {
        println!(
            "{r:>6.0} {:>10.0} {:>10.0} {:>8.2} {:>6.2} {:>6.3} {:>6.3} {:>6.2}",
            k_raw.values[i], k_iso.values[i], l.values[i], g.values[i], nn_g.values[i], f.values[i], j.values[i]
        );
    }
    Ok(())
}
