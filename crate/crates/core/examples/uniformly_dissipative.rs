//! Direct solve of a uniformly dissipative operator.

use krein::harness::{random_dissipative, InstanceSpec};
use krein::{solve_uniformly_dissipative, SolverConfig};

fn main() -> krein::Result<()> {
    let a = random_dissipative(&InstanceSpec { p: 4, m: 3, margin: 0.5, seed: 1, ..InstanceSpec::default() })?;
    let r = solve_uniformly_dissipative(&a, &SolverConfig::default())?;
    println!("||K|| = {:.6}", r.k_norm);
    println!("riccati residual {:e}, invariance residual {:e}", r.riccati_residual, r.invariance_residual);
    println!("restriction spectrum:");
    for z in &r.restriction_spectrum {
        println!("  {z:.6}");
    }
    println!(
        "min Rayleigh {:.4} >= 2 eps / (pi ||A+||) = {:.4}: {}",
        r.estimate10.min_rayleigh, r.estimate10.lower_bound, r.estimate10.holds
    );
    if let Some(bound) = r.estimate11.bound {
        println!("||A+|| = {:.4} <= {:.4} (gamma = {:.3})", r.estimate11.a_plus_norm, bound, r.estimate11.gamma);
    }
    Ok(())
}
