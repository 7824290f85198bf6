//! Writes a problem file, reads it back and drives the CLI entry point on it.

use krein::cli::{self, ProblemFile};
use krein::harness::{random_dissipative, InstanceSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = InstanceSpec { p: 2, m: 2, margin: 0.5, seed: 7, ..InstanceSpec::default() };
    let mut file = ProblemFile::from_operator(&random_dissipative(&spec)?);
    file.meta = Some(spec);
    let dir = std::env::temp_dir().join("krein-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("problem.json");
    std::fs::write(&path, serde_json::to_string_pretty(&file)?)?;

    let parsed = ProblemFile::parse(&std::fs::read_to_string(&path)?)?;
    println!("read back p={}, m={}", parsed.structure.p, parsed.structure.m);

    let out = dir.join("report.json");
    let code = cli::run(["krein", "solve", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let report: krein::SolveReport = serde_json::from_str(&std::fs::read_to_string(&out)?)?;
    println!("solve exit code {code}, re-checked from the report: {}", cli::report_exit_code(&report));
    Ok(())
}
