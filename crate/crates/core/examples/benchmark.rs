//! The full mono / mono-transfer / multi comparison on the synthetic
//! benchmark, written as a table and as TSV.
//!
//! cargo run --release --example benchmark [seed] [out_dir]

use cltc::harness::{emit_report, run_experiment, ExperimentConfig, ReportFormat};

fn main() -> cltc::Result<()> {
    let mut args = std::env::args().skip(1);
    let mut config = ExperimentConfig::default();
    config.seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    config.experiment.output_dir = args.next().map(Into::into);
    let report = run_experiment(&config)?;
    print!("{}", emit_report(&report, ReportFormat::Text));
    for lang in report.languages() {
        let arch = report.architectures()[0];
        if let (Some(g), Some(t)) = (report.gain(&lang, arch), report.transfer_gain(&lang, arch)) {
            println!("{lang}: multi − mono {:+.2} F1, multi − transfer {:+.2} F1", 100.0 * g.f1, 100.0 * t.f1);
        }
    }
    Ok(())
}
