//! Finite-section diagnostics for root vectors in `L_{2,|r|} ⊕ C_{|Δ|}`.
//!
//! Bounded Gram condition numbers over growing sections are a necessary
//! condition for a Riesz basis, never a proof of one.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::bc_algebra::BoundaryTriple;
use crate::grid::KreinVector;
use crate::linalg::hermitian_extremes;
use crate::spectral::SpectralDatum;
use crate::C64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagError {
    #[error("vectors live on different grids")]
    GridMismatch,
    #[error("Gram matrix of the first {n} vectors is singular (min eigenvalue {min_eig:e})")]
    SingularGram { n: usize, min_eig: f64 },
    #[error("section size {n} exceeds the {available} available vectors")]
    SectionTooLarge { n: usize, available: usize },
    #[error("zero vector at position {0}")]
    ZeroVector(usize),
}

/// `[x, y] = ∫ f ḡ r + w̄ Δ z`.
pub fn krein_inner(x: &KreinVector, y: &KreinVector, t: &BoundaryTriple) -> Result<C64, DiagError> {
    if !x.f.same_grid(&y.f) {
        return Err(DiagError::GridMismatch);
    }
    Ok(x.krein_inner(y, t.delta))
}

/// `(x, y) = ∫ f ḡ |r| + w̄ |Δ| z`.
pub fn hilbert_inner(x: &KreinVector, y: &KreinVector, t: &BoundaryTriple) -> Result<C64, DiagError> {
    if !x.f.same_grid(&y.f) {
        return Err(DiagError::GridMismatch);
    }
    Ok(x.hilbert_inner(y, t.delta))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KappaTrend {
    /// `κ` at the largest section below 100 and `κ_{2n}/κ_n < 1.5` throughout.
    ConsistentWithRieszBasis,
    InconclusiveOrDegrading,
}

impl std::fmt::Display for KappaTrend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            KappaTrend::ConsistentWithRieszBasis => "consistent with Riesz basis (necessary condition only)",
            KappaTrend::InconclusiveOrDegrading => "inconclusive/degrading",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GramAnalysis {
    pub n_list: Vec<usize>,
    pub kappa: Vec<f64>,
    pub min_eig: Vec<f64>,
    pub max_eig: Vec<f64>,
    pub trend: KappaTrend,
}

impl GramAnalysis {
    /// Largest `κ_{2n}/κ_n` over the pairs present in `n_list`.
    pub fn max_growth_ratio(&self) -> Option<f64> {
        let mut worst: Option<f64> = None;
        for (i, &n) in self.n_list.iter().enumerate() {
            if let Some(j) = self.n_list.iter().position(|&m| m == 2 * n) {
                let ratio = self.kappa[j] / self.kappa[i];
                worst = Some(worst.map_or(ratio, |w| w.max(ratio)));
            }
        }
        worst
    }
}

/// Hilbert Gram matrix `G_ij = (x_j, x_i)` of the normalized vectors.
pub fn gram_matrix(vectors: &[KreinVector], t: &BoundaryTriple) -> Result<DMatrix<C64>, DiagError> {
    let mut normed = Vec::with_capacity(vectors.len());
    for (k, v) in vectors.iter().enumerate() {
        if !v.f.same_grid(&vectors[0].f) {
            return Err(DiagError::GridMismatch);
        }
        let n = v.hilbert_norm(t.delta);
        if !(n > 0.0) {
            return Err(DiagError::ZeroVector(k));
        }
        normed.push(v.scale(C64::new(1.0 / n, 0.0)));
    }
    let len = normed.len();
    let mut g = DMatrix::zeros(len, len);
    for i in 0..len {
        for j in i..len {
            let v = normed[j].hilbert_inner(&normed[i], t.delta);
            g[(i, j)] = v;
            g[(j, i)] = v.conj();
        }
    }
    Ok(g)
}

/// Condition numbers of the leading `n × n` Gram sections for each `n` in `n_list`.
pub fn gram_analysis(vectors: &[KreinVector], t: &BoundaryTriple, n_list: &[usize]) -> Result<GramAnalysis, DiagError> {
    let mut n_list = n_list.to_vec();
    n_list.sort_unstable();
    n_list.dedup();
    if let Some(&n) = n_list.last() {
        if n > vectors.len() {
            return Err(DiagError::SectionTooLarge { n, available: vectors.len() });
        }
    }
    let g = gram_matrix(vectors, t)?;
    let (mut kappa, mut min_eig, mut max_eig) = (Vec::new(), Vec::new(), Vec::new());
    for &n in &n_list {
        let (lo, hi) = hermitian_extremes(&g.view((0, 0), (n, n)).into_owned());
        if lo <= 1e-10 * hi {
            return Err(DiagError::SingularGram { n, min_eig: lo });
        }
        kappa.push(hi / lo);
        min_eig.push(lo);
        max_eig.push(hi);
    }
    let mut analysis = GramAnalysis { n_list, kappa, min_eig, max_eig, trend: KappaTrend::InconclusiveOrDegrading };
    let bounded = analysis.kappa.last().is_some_and(|&k| k < 100.0) && analysis.max_growth_ratio().is_none_or(|r| r < 1.5);
    if bounded {
        analysis.trend = KappaTrend::ConsistentWithRieszBasis;
    }
    Ok(analysis)
}

/// Root vectors in section order: data by `|λ|` then argument, each chain
/// head followed by its associated vectors.
pub fn section_order(data: &[SpectralDatum]) -> Vec<KreinVector> {
    let mut sorted: Vec<&SpectralDatum> = data.iter().collect();
    sorted.sort_by(|a, b| a.lambda.norm().total_cmp(&b.lambda.norm()).then(a.lambda.arg().total_cmp(&b.lambda.arg())));
    sorted.into_iter().flat_map(|d| d.vectors().cloned()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrthogonalityReport {
    /// `max |[x_j, x_k]| / (‖x_j‖ ‖x_k‖)` over heads at distinct real eigenvalues.
    pub max_pairing: f64,
    pub pairs_checked: usize,
    pub non_real_count: usize,
    /// Signs of `[x, x]` for the real eigenvalues, in the order given.
    pub krein_signs: Vec<i8>,
}

impl OrthogonalityReport {
    pub fn sign_counts(&self) -> (usize, usize, usize) {
        let count = |s: i8| self.krein_signs.iter().filter(|&&v| v == s).count();
        (count(1), count(-1), count(0))
    }
}

pub fn orthogonality_report(data: &[SpectralDatum], t: &BoundaryTriple) -> OrthogonalityReport {
    let is_real = |d: &SpectralDatum| d.lambda.im == 0.0;
    let real: Vec<&SpectralDatum> = data.iter().filter(|d| is_real(d)).collect();
    let mut max_pairing: f64 = 0.0;
    let mut pairs_checked = 0;
    for (i, a) in real.iter().enumerate() {
        for b in &real[i + 1..] {
            if a.lambda == b.lambda {
                continue;
            }
            for x in a.chains.iter().map(|c| &c[0]) {
                for y in b.chains.iter().map(|c| &c[0]) {
                    let denom = x.hilbert_norm(t.delta) * y.hilbert_norm(t.delta);
                    max_pairing = max_pairing.max(x.krein_inner(y, t.delta).norm() / denom);
                    pairs_checked += 1;
                }
            }
        }
    }
    OrthogonalityReport {
        max_pairing,
        pairs_checked,
        non_real_count: data.iter().filter(|d| !is_real(d)).map(|d| d.alg_mult).sum(),
        krein_signs: real.iter().map(|d| d.krein_sign).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bc_algebra::{real_row, validate_triple};
    use crate::coefficients::CoefficientModel;
    use crate::grid::{Grid, GridFunction, Rule};

    fn triple() -> BoundaryTriple {
        validate_triple(real_row([1.0, 0.0, 0.0, 0.0]), real_row([0.0, 0.0, 0.0, 1.0]), real_row([0.0, 1.0, 0.0, 0.0]), 1e-10).unwrap()
    }

    #[test]
    fn definite_restrictions_and_j() {
        let t = triple();
        let g = Grid::new(&CoefficientModel::sign_weight(), 32, Rule::Boole);
        let bump = |lo: f64, hi: f64| GridFunction::from_real_fn(&g, move |x| if x > lo && x < hi { (x - lo) * (hi - x) } else { 0.0 });
        let right = KreinVector::new(bump(0.0, 1.0), C64::new(0.0, 0.0));
        let left = KreinVector::new(bump(-1.0, 0.0), C64::new(0.0, 0.0));
        assert!(krein_inner(&right, &right, &t).unwrap().re > 0.0);
        assert!(krein_inner(&left, &left, &t).unwrap().re < 0.0);
        let x = KreinVector::new(bump(-1.0, 1.0), C64::new(0.3, -1.2));
        let jx = x.apply_j(t.delta);
        let lhs = krein_inner(&jx, &x, &t).unwrap();
        assert!((lhs - hilbert_inner(&x, &x, &t).unwrap()).norm() < 1e-14);
        let other = Grid::new(&CoefficientModel::sign_weight(), 16, Rule::Boole);
        let y = KreinVector::new(GridFunction::zeros(&other), C64::new(1.0, 0.0));
        assert_eq!(krein_inner(&x, &y, &t), Err(DiagError::GridMismatch));
    }

    #[test]
    fn orthonormal_and_repeated_inputs() {
        let t = triple();
        let g = Grid::new(&CoefficientModel::unit_weight(), 64, Rule::Boole);
        let vecs: Vec<KreinVector> = (1..=4)
            .map(|k| KreinVector::new(GridFunction::from_real_fn(&g, move |x| (k as f64 * std::f64::consts::PI * x).sin()), C64::new(0.0, 0.0)))
            .collect();
        let ga = gram_analysis(&vecs, &t, &[1, 2, 4]).unwrap();
        for k in &ga.kappa {
            assert!((k - 1.0).abs() < 1e-10);
        }
        assert_eq!(ga.trend, KappaTrend::ConsistentWithRieszBasis);
        let mut rep = vecs.clone();
        rep.push(vecs[1].clone());
        assert!(matches!(gram_analysis(&rep, &t, &[5]), Err(DiagError::SingularGram { .. })));
    }
}
