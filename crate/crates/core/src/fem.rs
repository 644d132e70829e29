//! Finite element discretization of the eigenvalue pencil, used as an
//! independent check on the shooting solver.
//!
//! Unknowns are the nodal values of a continuous piecewise quadratic `f` and
//! the two boundary fluxes `(pf′)(±1)`. The weak form
//! `∫ p f′ v′ + q f v − (pf′)(1) v(1) + (pf′)(−1) v(−1) = λ ∫ r f v`
//! is completed by the rows `L b(f) = 0` and `M b(f) = λ N b(f)`. The
//! resulting pencil `A x = λ B x` has a singular `B`; it is solved by a
//! shift-and-invert transformation and infinite eigenvalues are dropped.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::bc_algebra::BoundaryTriple;
use crate::coefficients::{CoefficientModel, Side};
use crate::linalg::{c, eigenvalues};
use crate::C64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FemError {
    #[error("at least 8 elements are required, got {0}")]
    TooFewElements(usize),
    #[error("the pencil is singular for every trial shift")]
    SingularPencil,
}

const GAUSS5: [(f64, f64); 5] = [
    (0.0, 0.568_888_888_888_888_9),
    (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
    (0.906_179_845_938_664, 0.236_926_885_056_189_1),
];

fn shape(s: f64) -> ([f64; 3], [f64; 3]) {
    (
        [2.0 * (s - 0.5) * (s - 1.0), 4.0 * s * (1.0 - s), 2.0 * s * (s - 0.5)],
        [4.0 * s - 3.0, 4.0 - 8.0 * s, 4.0 * s - 1.0],
    )
}

/// Assembles `(A, B)`; `n_elements` is rounded up to an even number so that
/// `x = 0` is a mesh vertex.
pub fn assemble_pencil(m: &CoefficientModel, t: &BoundaryTriple, n_elements: usize) -> (DMatrix<C64>, DMatrix<C64>) {
    let ne = n_elements + n_elements % 2;
    let nn = 2 * ne + 1;
    let size = nn + 2;
    let mut a = DMatrix::<C64>::zeros(size, size);
    let mut b = DMatrix::<C64>::zeros(size, size);
    let h = 2.0 / ne as f64;
    for e in 0..ne {
        let x0 = -1.0 + e as f64 * h;
        let side = if e < ne / 2 { Side::Left } else { Side::Right };
        let idx = [2 * e, 2 * e + 1, 2 * e + 2];
        for &(g, w) in &GAUSS5 {
            let s = 0.5 * (g + 1.0);
            let x = x0 + s * h;
            let wx = 0.5 * w * h;
            let (phi, dphi) = shape(s);
            let (p, q, r) = (m.p.eval(x, side), m.q.eval(x, side), m.r.eval(x, side));
            for i in 0..3 {
                for j in 0..3 {
                    let k = p * dphi[j] * dphi[i] / (h * h) + q * phi[j] * phi[i];
                    a[(idx[i], idx[j])] += c(wx * k);
                    b[(idx[i], idx[j])] += c(wx * r * phi[j] * phi[i]);
                }
            }
        }
    }
    let (flux_m, flux_p) = (nn, nn + 1);
    a[(0, flux_m)] += c(1.0);
    a[(nn - 1, flux_p)] -= c(1.0);
    let cols = [0, nn - 1, flux_m, flux_p];
    for (k, &col) in cols.iter().enumerate() {
        a[(nn, col)] = t.l[k];
        a[(nn + 1, col)] = t.m[k];
        b[(nn + 1, col)] = t.n[k];
    }
    (a, b)
}

/// Finite eigenvalues of the discrete pencil, sorted by modulus.
pub fn fem_cross_check(m: &CoefficientModel, t: &BoundaryTriple, n_elements: usize) -> Result<Vec<C64>, FemError> {
    if n_elements < 8 {
        return Err(FemError::TooFewElements(n_elements));
    }
    let (a, b) = assemble_pencil(m, t, n_elements);
    for sigma in [C64::new(0.0137, 0.0291), C64::new(-0.731, 0.419), C64::new(2.17, -1.33)] {
        let lu = (&a - &b * sigma).lu();
        let Some(tm) = lu.solve(&b) else { continue };
        if !tm.iter().all(|v| v.is_finite()) {
            continue;
        }
        let Some(mus) = eigenvalues(tm) else { continue };
        let top = mus.iter().map(|v| v.norm()).fold(0.0, f64::max);
        if top == 0.0 {
            return Err(FemError::SingularPencil);
        }
        let mut out: Vec<C64> = mus.iter().filter(|mu| mu.norm() > 1e-11 * top).map(|mu| sigma + mu.inv()).collect();
        out.sort_by(|x, y| x.norm().total_cmp(&y.norm()).then(x.arg().total_cmp(&y.arg())));
        return Ok(out);
    }
    Err(FemError::SingularPencil)
}
