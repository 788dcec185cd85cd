//! Manhattan and effect-size figures from a study run.

use std::path::PathBuf;

use histowas::assoc::{run_study, StudyConfig};
use histowas::io::{self, DEFAULT_TOP_BELOW};
use histowas::svg;

fn main() -> histowas::Result<()> {
    let fixtures = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let matrix = io::read_feature_matrix(fixtures.join("study_features.csv"))?;
    let phenotype = io::read_phenotype(fixtures.join("study_phenotype.csv"))?;
    let config = StudyConfig::default();
    let study = run_study(&matrix, &phenotype, &config)?;

    let manhattan = io::emit_manhattan_data(&study.results, config.alpha, study.n_tests(), DEFAULT_TOP_BELOW);
    let effect = io::emit_effect_size_data(&study.results);
    let dir = std::env::temp_dir();
    for (name, data) in [("manhattan", &manhattan), ("effect_size", &effect)] {
        let path = dir.join(format!("histowas_{name}.svg"));
        std::fs::write(&path, svg::render(data)).map_err(|e| histowas::Error::InvalidArgument(e.to_string()))?;
        io::write_plot_data(dir.join(format!("histowas_{name}.json")), data)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
