//! Mass-univariate study on the planted fixture: 30 spatial and 72
//! object-level features against a continuous phenotype.

use std::path::PathBuf;

use histowas::assoc::{run_study, StudyConfig};
use histowas::io;

fn main() -> histowas::Result<()> {
    let fixtures = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let matrix = io::read_feature_matrix(fixtures.join("study_features.csv"))?;
    let phenotype = io::read_phenotype(fixtures.join("study_phenotype.csv"))?;
    let study = run_study(&matrix, &phenotype, &StudyConfig::default())?;

    println!(
        "{} subjects, {} tests, Bonferroni threshold {:.4e}, BH critical p {:?}",
        study.n_subjects,
        study.n_tests(),
        study.bonferroni_threshold,
        study.bh_critical_p
    );
    for r in study.results.iter().take(10) {
        println!(
            "{:<24} {:<12} beta {:>6.2} [{:>6.2}, {:>6.2}]  p {:.2e}  {}{}",
            r.feature,
            r.category,
            r.beta,
            r.ci_low,
            r.ci_high,
            r.p,
            if r.sig_bonferroni { "B" } else { "-" },
            if r.sig_fdr { "F" } else { "-" }
        );
    }
    Ok(())
}
