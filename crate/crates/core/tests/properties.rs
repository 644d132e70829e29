use indefsl_core::bc_algebra::{real_row, validate_triple};
use indefsl_core::grid::{Grid, Rule};
use indefsl_core::spectral::{char_det, integrate_fundamental_on};
use indefsl_core::{CoefficientModel, C64};
use proptest::prelude::*;

fn triple() -> indefsl_core::BoundaryTriple {
    validate_triple(real_row([1.0, 0.0, 0.0, 0.0]), real_row([0.0, 0.0, 0.0, 1.0]), real_row([0.0, 1.0, 0.0, 0.0]), 1e-10).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn determinant_commutes_with_conjugation(re in -200.0f64..200.0, im in -20.0f64..20.0) {
        let m = CoefficientModel::sign_weight();
        let t = triple();
        let z = C64::new(re, im);
        let a = char_det(&m, &t, z).unwrap();
        let b = char_det(&m, &t, z.conj()).unwrap();
        prop_assert!((a.conj() - b).norm() <= 1e-12 * a.norm().max(1.0));
        let r = char_det(&m, &t, C64::new(re, 0.0)).unwrap();
        prop_assert!(r.im.abs() <= 1e-12 * r.norm().max(1.0));
    }

    #[test]
    fn determinant_invariant_under_row_shift(c in -5.0f64..5.0, re in -100.0f64..100.0, im in -10.0f64..10.0) {
        let m = CoefficientModel::power_weight(1.0);
        let t1 = triple();
        let t2 = validate_triple(real_row([1.0, 0.0, 0.0, 0.0]), real_row([c, 0.0, 0.0, 1.0]), real_row([0.0, 1.0, 0.0, 0.0]), 1e-10).unwrap();
        let z = C64::new(re, im);
        let (a, b) = (char_det(&m, &t1, z).unwrap(), char_det(&m, &t2, z).unwrap());
        prop_assert!((a - b).norm() <= 1e-10 * a.norm().max(1.0));
    }

    #[test]
    fn wronskian_is_identically_one(re in -300.0f64..300.0, im in -30.0f64..30.0) {
        let m = CoefficientModel::sign_weight();
        let g = Grid::new(&m, 32, Rule::Boole);
        let fd = integrate_fundamental_on(&m, C64::new(re, im), &g).unwrap();
        for (w, scale) in fd.wronskian().unwrap() {
            prop_assert!((w - C64::new(1.0, 0.0)).norm() <= 1e-8 * scale.max(1.0));
        }
    }
}
