//! End-to-end checks on the indefinite weight `r = sgn x` against the definite `r = 1`.

use indefsl_core::bc_algebra::{classify_theorem, real_row, reduce_and_split, validate_triple, Theorem};
use indefsl_core::riesz_diag::{gram_analysis, orthogonality_report, section_order};
use indefsl_core::spectral::{find_eigenvalues, root_subspace, Region};
use indefsl_core::{BoundaryTriple, CoefficientModel, Grid, Rule, SpectralDatum};

fn triple() -> BoundaryTriple {
    validate_triple(real_row([1.0, 0.0, 0.0, 0.0]), real_row([0.0, 0.0, 0.0, 1.0]), real_row([0.0, 1.0, 0.0, 0.0]), 1e-10).unwrap()
}

fn solve(m: &CoefficientModel, t: &BoundaryTriple) -> Vec<SpectralDatum> {
    let ev = find_eigenvalues(m, t, Region::default_for(m, 32), 200).unwrap();
    let grid = Grid::new(m, 512, Rule::Boole);
    ev.iter().map(|&(z, k)| root_subspace(m, t, z, k, &grid).unwrap()).collect()
}

#[test]
fn sign_weight_spectrum_is_krein_orthogonal() {
    let m = CoefficientModel::sign_weight();
    let t = triple();
    assert_eq!(classify_theorem(&reduce_and_split(&t), &t).theorem, Theorem::Thm6_1);
    let data = solve(&m, &t);
    assert!(data.len() >= 30);
    for d in &data {
        if d.lambda.im != 0.0 {
            assert!(data.iter().any(|e| (e.lambda - d.lambda.conj()).norm() < 1e-8 * (1.0 + d.lambda.norm()) && e.alg_mult == d.alg_mult));
        }
        assert!(d.boundary_residual(&t) < 1e-8, "{} {}", d.lambda, d.boundary_residual(&t));
    }
    let orth = orthogonality_report(&data, &t);
    assert!(orth.max_pairing <= 1e-6, "{}", orth.max_pairing);
    let (pos, neg, _) = orth.sign_counts();
    assert!(pos > 0 && neg > 0);
    let ga = gram_analysis(&section_order(&data), &t, &[5, 10, 15, 20, 25, 30]).unwrap();
    assert!(ga.kappa.iter().all(|&k| (1.0..100.0).contains(&k)));
    assert!(ga.kappa.windows(2).all(|w| w[1] >= w[0] - 1e-12));
}

#[test]
fn unit_weight_root_vectors_are_orthonormal() {
    let m = CoefficientModel::unit_weight();
    let t = triple();
    let data = solve(&m, &t);
    let orth = orthogonality_report(&data, &t);
    assert!(orth.krein_signs.iter().all(|&s| s == 1));
    assert_eq!(orth.non_real_count, 0);
    let ga = gram_analysis(&section_order(&data), &t, &[1, 10, 20, 30]).unwrap();
    assert!(ga.kappa.iter().all(|&k| k < 1.0 + 1e-6), "{:?}", ga.kappa);
}
