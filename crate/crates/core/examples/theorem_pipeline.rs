//! The full epsilon -> 0 pipeline on a neutral operator with margin 0.

use krein::harness::{random_dissipative, InstanceSpec};
use krein::numerics::{c64, from_rows};
use krein::{solve_theorem, BlockOperator, SolverConfig};

fn main() -> krein::Result<()> {
    let cfg = SolverConfig::default();
    let a = random_dissipative(&InstanceSpec { p: 5, m: 5, margin: 0.0, seed: 3, ..InstanceSpec::default() })?;
    let r = solve_theorem(&a, &cfg)?;
    println!("method {:?}, ||K|| = {:.6}, invariance residual {:e}", r.method, r.k_norm, r.invariance_residual);
    if let Some(tail) = &r.cauchy {
        println!("eps tail steps:");
        for s in &tail.steps {
            println!("  {s:.3e}");
        }
    }

    // Nilpotent Jordan block: J-selfadjoint, spectrum {0}, K = -1.
    let one = c64(1.0, 0.0);
    let jordan = BlockOperator::assemble(from_rows(&[vec![one]]), from_rows(&[vec![one]]), from_rows(&[vec![-one]]), from_rows(&[vec![-one]]))?;
    let r = solve_theorem(&jordan, &cfg)?;
    println!("Jordan block: K = {}, restriction spectrum {:?}, method {:?}", r.k[(0, 0)], r.restriction_spectrum, r.method);
    Ok(())
}
