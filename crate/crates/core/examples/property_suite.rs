//! Runs the property suite over a small mixed batch and writes the CSV.

use krein::harness::{mixed_specs, run_property_suite, write_csv, SuiteOptions};
use krein::SolverConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let specs = mixed_specs(12, 6, &[0.0, 0.1, 1.0], 42);
    let report = run_property_suite(&specs, &SolverConfig::default(), &SuiteOptions::default());
    println!("{} passed, {} failed", report.passed, report.failed);
    for c in &report.worst {
        println!("  {:<18} {:<5} {:e}", c.name, c.pass, c.value);
    }
    write_csv(&report.rows, std::io::stdout())?;
    Ok(())
}
