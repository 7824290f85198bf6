use krein::block::{self, BlockOperator};
use krein::cli::ProblemFile;
use krein::harness::{random_dissipative, InstanceSpec};
use krein::krein::{angle_operator_from_subspace, indefinite_inner_product, subspace_from_angle_operator};
use krein::numerics::{self, c64, identity, ComplexMatrix, ComplexVector};
use krein::projector::{self, Contour, QuadratureOptions, QuadratureRule, Region};
use krein::solver;
use krein::{AngleOperator, KreinStructure, SolverConfig};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_matrix(seed: u64, r: usize, c: usize) -> ComplexMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ComplexMatrix::from_fn(r, c, |_, _| c64(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
}

fn random_unitary(seed: u64, n: usize) -> ComplexMatrix {
    random_matrix(seed, n, n).qr().q()
}

fn contraction(seed: u64, m: usize, p: usize, norm: f64) -> ComplexMatrix {
    let k = random_matrix(seed, m, p);
    let s = numerics::singular_values(&k)[0];
    k * c64(norm / s, 0.0)
}

fn spec(p: usize, m: usize, margin: f64, seed: u64) -> InstanceSpec {
    InstanceSpec { p, m, margin, seed, ..InstanceSpec::default() }
}

fn norm(m: &ComplexMatrix) -> f64 {
    numerics::singular_values(m).first().copied().unwrap_or(0.0)
}

/// Determinant by LU.
fn det(m: &ComplexMatrix) -> Complex64 {
    m.clone().lu().determinant()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn generated_margin_is_exact(p in 1usize..6, m in 1usize..6, margin in 0.0f64..2.0, seed in any::<u64>()) {
        let a = random_dissipative(&spec(p, m, margin, seed)).unwrap();
        prop_assert!((block::dissipativity_margin(&a) - margin).abs() <= 1e-10 * (1.0 + a.norm()));
    }

    #[test]
    fn regularization_shifts_the_margin(p in 1usize..5, m in 1usize..5, eps in 0.0f64..2.0, seed in any::<u64>()) {
        let a = random_dissipative(&spec(p, m, 0.2, seed)).unwrap();
        let r = solver::regularize(&a, eps).unwrap();
        prop_assert!((block::dissipativity_margin(&r) - 0.2 - eps).abs() <= 1e-10 * (1.0 + a.norm()));
    }

    #[test]
    fn inner_product_is_hermitian(p in 1usize..5, m in 1usize..5, seed in any::<u64>()) {
        let s = KreinStructure::new(p, m).unwrap();
        let x: ComplexVector = random_matrix(seed, p + m, 1).column(0).into_owned();
        let y: ComplexVector = random_matrix(seed ^ 1, p + m, 1).column(0).into_owned();
        let xy = indefinite_inner_product(&s, &x, &y).unwrap();
        let yx = indefinite_inner_product(&s, &y, &x).unwrap();
        prop_assert!((xy - yx.conj()).norm() <= 1e-14);
        prop_assert!(indefinite_inner_product(&s, &x, &x).unwrap().im.abs() <= 1e-14);
    }

    #[test]
    fn angle_operator_round_trip(p in 1usize..6, m in 1usize..6, r in 0.0f64..1.0, seed in any::<u64>()) {
        let s = KreinStructure::new(p, m).unwrap();
        let k = AngleOperator::new(s, contraction(seed, m, p, r)).unwrap();
        let l = subspace_from_angle_operator(&k).unwrap();
        prop_assert!(l.min_rayleigh() >= -1e-12);
        let back = angle_operator_from_subspace(&l).unwrap();
        prop_assert!(norm(&(back.matrix() - k.matrix())) <= 1e-12);
    }

    #[test]
    fn block_assembly_round_trip(p in 1usize..6, m in 1usize..6, seed in any::<u64>()) {
        let s = KreinStructure::new(p, m).unwrap();
        let full = random_matrix(seed, p + m, p + m);
        let a = BlockOperator::decompose(&full, s).unwrap();
        prop_assert_eq!(a.to_matrix(), full);
        let file = ProblemFile::from_operator(&a);
        let text = serde_json::to_string(&file).unwrap();
        let back = ProblemFile::parse(&text).unwrap().operator().unwrap();
        prop_assert_eq!(back.to_matrix(), a.to_matrix());
    }

    /// `det(A - lambda) = det(A22 - lambda) det(S(lambda) - lambda)`, so
    /// `S(lambda) - lambda` is invertible exactly on the resolvent set.
    #[test]
    fn schur_determinant_identity(p in 1usize..5, m in 1usize..5, seed in any::<u64>(), re in -3.0f64..3.0, im in -3.0f64..3.0) {
        let s = KreinStructure::new(p, m).unwrap();
        let a = BlockOperator::decompose(&random_matrix(seed, p + m, p + m), s).unwrap();
        let lambda = c64(re, im);
        prop_assume!(numerics::singular_values(&(a.a22() - identity(m) * lambda)).last().copied().unwrap() > 1e-3);
        let data = block::transfer_at(&a, lambda).unwrap();
        let lhs = det(&(a.to_matrix() - identity(p + m) * lambda));
        let rhs = det(&(a.a22() - identity(m) * lambda)) * det(&(data.s - identity(p) * lambda));
        prop_assert!((lhs - rhs).norm() <= 1e-10 * (1.0 + lhs.norm()));
    }

    #[test]
    fn schur_complement_singular_at_eigenvalues(p in 1usize..4, m in 1usize..4, seed in any::<u64>()) {
        let s = KreinStructure::new(p, m).unwrap();
        let a = BlockOperator::decompose(&random_matrix(seed, p + m, p + m), s).unwrap();
        for lambda in numerics::eigenvalues(&a.to_matrix()).unwrap() {
            let shifted22 = a.a22() - identity(m) * lambda;
            if numerics::singular_values(&shifted22).last().copied().unwrap() < 1e-2 {
                continue;
            }
            let data = block::transfer_at(&a, lambda).unwrap();
            let sv = numerics::singular_values(&(data.s - identity(p) * lambda));
            prop_assert!(sv.last().unwrap() <= &(1e-8 * (1.0 + sv[0])));
        }
    }

    #[test]
    fn riccati_iff_invariance(p in 1usize..5, m in 1usize..5, seed in any::<u64>(), perturb in prop::bool::ANY, delta in 1e-4f64..0.3) {
        let s = KreinStructure::new(p, m).unwrap();
        let k = contraction(seed, m, p, 0.6);
        let mut upper = random_matrix(seed ^ 7, p + m, p + m);
        for i in p..p + m {
            for j in 0..p {
                upper[(i, j)] = c64(0.0, 0.0);
            }
        }
        let mut t = identity(p + m);
        let mut t_inv = identity(p + m);
        t.view_mut((p, 0), (m, p)).copy_from(&k);
        t_inv.view_mut((p, 0), (m, p)).copy_from(&(-&k));
        let a = BlockOperator::decompose(&(&t * upper * &t_inv), s).unwrap();
        let candidate = if perturb { &k + contraction(seed ^ 9, m, p, delta) } else { k };
        let angle = AngleOperator::new(s, candidate).unwrap();
        let (ric, _) = solver::riccati_residual(&a, &angle, c64(0.0, 2.0 + a.norm())).unwrap();
        let inv = numerics::invariance_defect(&a.to_matrix(), subspace_from_angle_operator(&angle).unwrap().basis());
        prop_assert_eq!(ric <= 1e-9, inv <= 1e-8);
        prop_assert_eq!(ric <= 1e-9, !perturb);
    }

    #[test]
    fn projector_is_spectral(n in 2usize..9, seed in any::<u64>()) {
        let a = random_matrix(seed, n, n) * c64(3.0, 0.0);
        let eig = numerics::eigenvalues(&a).unwrap();
        prop_assume!(eig.iter().all(|z| z.im.abs() > 1e-3));
        let contour = Contour::auto(&a, 64, QuadratureRule::GaussSegments).unwrap();
        let opts = QuadratureOptions { check_doubling: false, ..QuadratureOptions::default() };
        let q = projector::riesz_projector_quadrature(&a, &contour, &opts).unwrap();
        let upper = eig.iter().filter(|z| z.im > 0.0).count() as f64;
        let qn = 1.0 + norm(&q.q_plus);
        prop_assert!(norm(&(&q.q_plus * &q.q_plus - &q.q_plus)) <= 1e-8 * qn * qn);
        prop_assert!(norm(&(&a * &q.q_plus - &q.q_plus * &a)) <= 1e-8 * qn * (1.0 + norm(&a)));
        prop_assert!((q.trace.re - upper).abs() <= 1e-6 && q.trace.im.abs() <= 1e-6);
        let exact = projector::riesz_projector_exact(&a, Region::UpperOpen { tol: 1e-9 }).unwrap();
        prop_assert!(norm(&(&exact.q_plus - &q.q_plus)) <= 1e-6 * qn);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn positive_scaling_keeps_the_subspace(p in 1usize..5, m in 1usize..5, seed in any::<u64>(), c in 0.2f64..5.0) {
        let cfg = SolverConfig::default();
        let a = random_dissipative(&spec(p, m, 0.3, seed)).unwrap();
        let k1 = solver::solve_uniformly_dissipative(&a, &cfg).unwrap().k;
        let k2 = solver::solve_uniformly_dissipative(&a.scaled(c64(c, 0.0)), &cfg).unwrap().k;
        prop_assert!(norm(&(k1 - k2)) <= 1e-8);
    }

    #[test]
    fn unitary_covariance(p in 1usize..5, m in 1usize..5, seed in any::<u64>()) {
        let cfg = SolverConfig::default();
        let a = random_dissipative(&spec(p, m, 0.3, seed)).unwrap();
        let (up, um) = (random_unitary(seed ^ 3, p), random_unitary(seed ^ 5, m));
        let k = solver::solve_uniformly_dissipative(&a, &cfg).unwrap().k;
        let kw = solver::solve_uniformly_dissipative(&a.conjugated(&up, &um), &cfg).unwrap().k;
        prop_assert!(norm(&(kw - &um * k * up.adjoint())) <= 1e-8);
    }

    #[test]
    fn solution_matches_upper_spectrum(p in 1usize..5, m in 1usize..5, margin in 0.05f64..1.0, seed in any::<u64>()) {
        let a = random_dissipative(&spec(p, m, margin, seed)).unwrap();
        let r = solver::solve_uniformly_dissipative(&a, &SolverConfig::default()).unwrap();
        prop_assert!(r.k_norm < 1.0);
        prop_assert!(r.acceptance_triple());
        let mut upper: Vec<Complex64> = numerics::eigenvalues(&a.to_matrix()).unwrap().into_iter().filter(|z| z.im > 0.0).collect();
        let mut got = r.restriction_spectrum.clone();
        projector::sort_spectrum(&mut upper);
        projector::sort_spectrum(&mut got);
        prop_assert_eq!(upper.len(), p);
        for (x, y) in upper.iter().zip(&got) {
            prop_assert!((x - y).norm() <= 1e-7 * (1.0 + a.norm()));
        }
    }

    #[test]
    fn theorem_pipeline_on_boundary(p in 1usize..4, m in 1usize..4, seed in any::<u64>()) {
        let a = random_dissipative(&spec(p, m, 0.0, seed)).unwrap();
        let r = solver::solve_theorem(&a, &SolverConfig::default()).unwrap();
        prop_assert!(r.acceptance_triple());
        let tail = r.cauchy.as_ref().unwrap();
        prop_assert!(tail.converged);
    }
}
