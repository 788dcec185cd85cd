//! The 30-feature spatial dictionary for every slide of the fixture,
//! written as a feature matrix with its metadata companion.

use std::path::PathBuf;

use histowas::assoc::{FeatureColumn, FeatureMatrix};
use histowas::features::{extract_batch, FeatureConfig, WindowParams};
use histowas::io;

fn main() -> histowas::Result<()> {
    let fixtures = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let patterns: Vec<_> = io::read_centroids(fixtures.join("centroids.csv"))?
        .into_iter()
        .filter(|p| p.object_type == "tubule")
        .collect();
    let config = FeatureConfig::default();
    let extractions = extract_batch(&patterns, WindowParams::default(), &config);

    for d in config.dictionary.descriptors() {
        println!("{:<16} {:<12} {}", d.name, d.category, d.source.method());
    }
    for (p, e) in patterns.iter().zip(&extractions) {
        let missing = e.vector.values.iter().filter(|(_, v)| v.is_none()).count();
        println!("{}: {missing} missing; {}", p.slide_id, e.diagnostics.join("; "));
    }

    let ids: Vec<String> = patterns.iter().map(|p| p.slide_id.clone()).collect();
    let columns = config
        .dictionary
        .descriptors()
        .iter()
        .map(|d| FeatureColumn::new(d.name.clone(), d.category.to_string()))
        .collect();
    let rows = extractions
        .iter()
        .map(|e| e.vector.values.iter().map(|(_, v)| *v).collect())
        .collect();
    let matrix = FeatureMatrix::new(ids.clone(), ids, columns, rows)?;
    let out = std::env::temp_dir().join("histowas_spatial.csv");
    io::write_feature_matrix(&out, &matrix, &io::dictionary_metadata(&config.dictionary))?;
    println!("wrote {}", out.display());
    Ok(())
}
