//! Block decomposition, transfer function data and the structural checks.

use krein::block::{check_theorem_conditions, default_mu, factorization_residual, g_decay_profile, perturbation_identity_defects, schur_data, ConditionProfile, GDecayOptions};
use krein::harness::{random_dissipative, InstanceSpec};
use krein::numerics::c64;

fn main() -> krein::Result<()> {
    let a = random_dissipative(&InstanceSpec { p: 3, m: 4, margin: 0.25, seed: 5, ..InstanceSpec::default() })?;
    let mu = default_mu(&a);
    let data = schur_data(&a, mu)?;
    println!("mu = {mu}");
    println!("||S(mu)|| = {:.4}  ||F(mu)|| = {:.4}  ||G(mu)|| = {:.4}", data.s.norm(), data.f.norm(), data.g.norm());

    println!("factorization residual at 1+2i: {:e}", factorization_residual(&a, c64(1.0, 2.0))?);
    let (g, s) = perturbation_identity_defects(&a, mu, 0.3)?;
    println!("perturbation identities: G {g:e}, S {s:e}");

    let conditions = check_theorem_conditions(&a, mu, &ConditionProfile::default())?;
    println!("conditions hold: {}", conditions.all_pass());

    let profile = g_decay_profile(&a, &[1.0, 10.0, 100.0, 1000.0], &GDecayOptions::default())?;
    for (h, g) in &profile.entries {
        println!("  ||G(i {h})|| = {g:.3e}");
    }
    Ok(())
}
