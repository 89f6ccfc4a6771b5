//! Central finite-difference checks of every layer, loss and model.
//!
//! cargo run --release --example gradient_checks [configs]

use cltc::gradsuite::{run_gradient_suite, TOLERANCE};

fn main() -> cltc::Result<()> {
    let configs = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    for e in run_gradient_suite(configs, 0)? {
        println!(
            "{:<30} {:>6} entries  max rel {:.2e}  {}",
            e.component.name(),
            e.report.checked,
            e.report.max_rel_error,
            if e.report.passed(TOLERANCE) { "ok" } else { "FAIL" }
        );
    }
    Ok(())
}
