//! Indefinite inner product, subspace classification and angle operators.

use krein::krein::{angle_operator_from_subspace, classify_subspace, default_classification_tol, indefinite_inner_product, maximality_witness, subspace_from_angle_operator};
use krein::numerics::{c64, from_rows};
use krein::{AngleOperator, KreinStructure, Subspace};

fn main() -> krein::Result<()> {
    let s = KreinStructure::new(2, 1)?;
    let x = from_rows(&[vec![c64(1.0, 0.0)], vec![c64(0.0, 1.0)], vec![c64(1.0, 0.0)]]).column(0).into_owned();
    // [x, x] = |x1|^2 + |x2|^2 - |x3|^2
    println!("[x, x] = {}", indefinite_inner_product(&s, &x, &x)?);

    let k = AngleOperator::new(s, from_rows(&[vec![c64(0.6, 0.0), c64(0.0, 0.8)]]))?;
    let graph = subspace_from_angle_operator(&k)?;
    let class = classify_subspace(&graph, default_classification_tol(&graph));
    println!("||K|| = {:.6}, graph is {:?}", k.norm(), class);
    println!("maximality witness: {:?}", maximality_witness(&graph));

    let back = angle_operator_from_subspace(&graph)?;
    println!("round trip error: {:e}", (back.matrix() - k.matrix()).norm());

    // A strict contraction gives a uniformly positive graph.
    let half = AngleOperator::new(s, k.matrix() * c64(0.5, 0.0))?;
    let graph = subspace_from_angle_operator(&half)?;
    println!("||K/2|| graph is {:?}", classify_subspace(&graph, default_classification_tol(&graph)));

    // span{e3} is negative and misses H+ entirely.
    let neg = Subspace::new(s, from_rows(&[vec![c64(0.0, 0.0)], vec![c64(0.0, 0.0)], vec![c64(1.0, 0.0)]]))?;
    println!("span(e3) is {:?}", classify_subspace(&neg, 1e-12));
    Ok(())
}
