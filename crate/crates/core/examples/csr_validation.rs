//! CSR validation at reduced scale: envelopes, self and held-out coverage.
//! Pass `full` for the 5000 µm base window and 299 samples.

use histowas::io;
use histowas::simulate::{self, Corrections, CsrConfig, Rect};
use histowas::svg;

fn main() -> histowas::Result<()> {
    let config = if std::env::args().nth(1).as_deref() == Some("full") {
        CsrConfig::default()
    } else {
        CsrConfig {
            base_window: Rect::new(2500.0, 2500.0),
            sub_window: Rect::new(600.0, 600.0),
            n_samples: 99,
            ..CsrConfig::default()
        }
    };
    let grid = config.default_grid()?;
    let run = simulate::run_validation(&config, &grid, Corrections::default())?;
    let held_out = simulate::held_out_coverage(&run, 50, config.seed + 1, Corrections::default())?;
    println!("{} samples, {} skipped", run.samples.len(), run.skipped);
    for (own, fresh) in run.coverage.iter().zip(&held_out) {
        println!("{:<2} self {:.3}  held-out {:.3}", own.function, own.fraction, fresh.fraction);
    }

    let data = io::emit_envelope_data(&run, &run.coverage);
    let out = std::env::temp_dir().join("histowas_envelope.svg");
    std::fs::write(&out, svg::render(&data)).map_err(|e| histowas::Error::InvalidArgument(e.to_string()))?;
    println!("wrote {}", out.display());
    Ok(())
}
