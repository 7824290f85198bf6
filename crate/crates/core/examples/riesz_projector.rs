//! Riesz projector of the upper half-plane by contour quadrature, checked
//! against the Schur-based projector.

use krein::numerics::{c64, from_rows};
use krein::projector::{invariant_subspace_from_projector, riesz_projector_exact, riesz_projector_quadrature, Contour, QuadratureOptions, QuadratureRule, Region};
use krein::KreinStructure;

fn main() -> krein::Result<()> {
    let a = from_rows(&[vec![c64(0.0, 1.0), c64(1.0, 0.0)], vec![c64(0.0, 0.0), c64(0.0, -1.0)]]);
    let contour = Contour::auto(&a, 64, QuadratureRule::GaussSegments)?;
    let quad = riesz_projector_quadrature(&a, &contour, &QuadratureOptions::default())?;
    let exact = riesz_projector_exact(&a, Region::UpperOpen { tol: 1e-10 })?;
    println!("Q+ ={:.6}", quad.q_plus);
    println!("nodes used {}, trace {}, |Q - Q_exact| = {:e}", quad.nodes_used, quad.trace, (&quad.q_plus - &exact.q_plus).norm());

    let l = invariant_subspace_from_projector(&a, &quad, KreinStructure::new(1, 1)?)?;
    println!("range(Q+) basis:{:.6}", l.basis());

    // The periodic trapezoid rule needs many more nodes on this contour.
    let trap = Contour::new(contour.radius, 1024, QuadratureRule::Trapezoid)?;
    let opts = QuadratureOptions { check_doubling: false, ..QuadratureOptions::default() };
    let q = riesz_projector_quadrature(&a, &trap, &opts)?;
    println!("trapezoid with 1024 nodes: |Q - Q_exact| = {:e}", (&q.q_plus - &exact.q_plus).norm());
    Ok(())
}
