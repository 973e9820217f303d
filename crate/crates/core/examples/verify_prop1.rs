//! On batches where every frame is the goal, the language VIP loss equals
//! InfoNCE plus one. Checks that numerically, then the corrupted control.

use liv::verify::{run_suite, Suite, VerifyOptions};

fn main() -> liv::Result<()> {
    for corrupt in [false, true] {
        let opts = VerifyOptions { corrupt_loss: corrupt, ..VerifyOptions::default() };
        let report = run_suite(Suite::Prop1, &opts)?;
        println!("corrupt_loss={corrupt}: passed={}", report.passed);
        for c in &report.checks {
            println!("  {:<12} max gap {:.3e} over {} draws (tol {:.0e})", c.name, c.value, c.cases, c.tolerance);
        }
    }
    Ok(())
}
