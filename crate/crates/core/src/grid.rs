//! Composite grids on `[-1, 1]` split at the turning point.
//!
//! Node layout: `0..=n` covers `[-1, 0]` (index `n` is the left limit `0-`),
//! `n+1..=2n+1` covers `[0, 1]` (index `n+1` is the right limit `0+`).

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::coefficients::{CoefficientModel, Side};
use crate::C64;

/// Quadrature rule applied on each half-interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    /// Trapezoid rule whose two end nodes on each half carry weight zero,
    /// with positive end corrections on the neighboring nodes that make the
    /// rule exact for polynomials of degree 4 (fewer on coarse grids).
    /// Point values at `-1, 0-, 0+, 1` then carry no mass, so operators may be
    /// given their one-sided boundary limits there.
    Open,
    Trapezoid,
    /// Composite Boole rule; requires `n` divisible by 4.
    Boole,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    /// Intervals per half.
    pub n: usize,
    pub nodes: Vec<f64>,
    /// Plain quadrature weights for `∫ · dx`.
    pub dx_weights: Vec<f64>,
    /// `|r|` at the nodes, one-sided at `0±`.
    pub abs_r: Vec<f64>,
    /// `sgn r` at the nodes; at a zero of `r` the sign of the half is used.
    pub sign_r: Vec<f64>,
    /// `p` at interval midpoints, per half (`2n` entries).
    pub p_mid: Vec<f64>,
    pub rule: Rule,
}

impl Grid {
    /// `n` intervals per half. When `r` has negative order `ν` at `0` the
    /// nodes are `x = ±s^g`, `g = 2/(1+ν)`, for uniform `s`, and the rule is
    /// applied in `s`.
    pub fn new(model: &CoefficientModel, n: usize, rule: Rule) -> Arc<Grid> {
        assert!(n >= 4, "at least four intervals per half");
        if rule == Rule::Boole {
            assert!(n % 4 == 0, "Boole rule needs n divisible by 4");
        }
        let g = match model.r_singular_order_near(0.0) {
            None => 1.0,
            Some(nu) => 2.0 / (1.0 + nu),
        };
        let ws = uniform_weights(n, rule);
        let mut nodes = Vec::with_capacity(2 * n + 2);
        let mut dx_weights = Vec::with_capacity(2 * n + 2);
        for k in 0..=n {
            let s = (n - k) as f64 / n as f64;
            nodes.push(-s.powf(g));
            dx_weights.push(ws[n - k] * jacobian(s, g));
        }
        for k in 0..=n {
            let s = k as f64 / n as f64;
            nodes.push(s.powf(g));
            dx_weights.push(ws[k] * jacobian(s, g));
        }
        nodes[n] = 0.0;
        nodes[n + 1] = 0.0;

        let mut abs_r = Vec::with_capacity(2 * n + 2);
        let mut sign_r = Vec::with_capacity(2 * n + 2);
        for (i, &x) in nodes.iter().enumerate() {
            let side = if i <= n { Side::Left } else { Side::Right };
            let half_sign = if i <= n { -1.0 } else { 1.0 };
            let v = model.r.eval(x, side);
            let a = if v.is_finite() { v.abs() } else { 0.0 };
            abs_r.push(a);
            sign_r.push(if v != 0.0 { v.signum() } else { half_sign });
            if !v.is_finite() {
                dx_weights[i] = 0.0;
            }
        }
        let mut p_mid = Vec::with_capacity(2 * n);
        for half in 0..2 {
            let off = half * (n + 1);
            let side = if half == 0 { Side::Left } else { Side::Right };
            for k in 0..n {
                let xm = 0.5 * (nodes[off + k] + nodes[off + k + 1]);
                p_mid.push(model.p.eval(xm, side));
            }
        }
        Arc::new(Grid { n, nodes, dx_weights, abs_r, sign_r, p_mid, rule })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn idx_minus1(&self) -> usize {
        0
    }

    pub fn idx_zero_minus(&self) -> usize {
        self.n
    }

    pub fn idx_zero_plus(&self) -> usize {
        self.n + 1
    }

    pub fn idx_plus1(&self) -> usize {
        2 * self.n + 1
    }

    pub fn left(&self) -> std::ops::RangeInclusive<usize> {
        0..=self.n
    }

    pub fn right(&self) -> std::ops::RangeInclusive<usize> {
        self.n + 1..=2 * self.n + 1
    }

    pub fn side_of(&self, i: usize) -> Side {
        if i <= self.n {
            Side::Left
        } else {
            Side::Right
        }
    }

    /// Weight of node `i` in the Hilbert inner product of `L_{2,|r|}`.
    pub fn hilbert_weight(&self, i: usize) -> f64 {
        self.dx_weights[i] * self.abs_r[i]
    }

    /// Weight of node `i` in the indefinite inner product of `L_{2,r}`.
    pub fn krein_weight(&self, i: usize) -> f64 {
        self.hilbert_weight(i) * self.sign_r[i]
    }

    /// Range of node indices of the half containing `side`.
    pub fn half(&self, side: Side) -> std::ops::RangeInclusive<usize> {
        match side {
            Side::Left => self.left(),
            Side::Right => self.right(),
        }
    }

    /// Linear interpolation stencil `(i, j, θ)` for `x` on the given half:
    /// value ≈ `(1-θ) v[i] + θ v[j]`.
    pub fn stencil(&self, x: f64, side: Side) -> (usize, usize, f64) {
        let range = self.half(side);
        let (lo, hi) = (*range.start(), *range.end());
        let xs = &self.nodes[lo..=hi];
        let x = x.clamp(xs[0], xs[xs.len() - 1]);
        let k = match xs.binary_search_by(|v| v.total_cmp(&x)) {
            Ok(k) => return (lo + k, lo + k, 0.0),
            Err(k) => k,
        };
        let (a, b) = (k - 1, k);
        let theta = (x - xs[a]) / (xs[b] - xs[a]);
        (lo + a, lo + b, theta)
    }

    pub fn x_of(&self, i: usize) -> f64 {
        self.nodes[i]
    }
}

fn jacobian(s: f64, g: f64) -> f64 {
    if g == 1.0 {
        1.0
    } else {
        g * s.powf(g - 1.0)
    }
}

/// Weights on `n + 1` equispaced nodes of `[0, 1]`.
fn uniform_weights(n: usize, rule: Rule) -> Vec<f64> {
    let h = 1.0 / n as f64;
    let mut w = vec![h; n + 1];
    match rule {
        Rule::Trapezoid => {
            w[0] = 0.5 * h;
            w[n] = 0.5 * h;
        }
        Rule::Open => {
            let ends = open_end_weights(n);
            let m = ends.len();
            w[0] = 0.0;
            w[n] = 0.0;
            for (j, a) in ends.iter().enumerate() {
                w[1 + j] = a * h;
                w[n - 1 - j] = a * h;
            }
            debug_assert!(2 * m < n);
        }
        Rule::Boole => {
            w.iter_mut().for_each(|v| *v = 0.0);
            let c = [7.0, 32.0, 12.0, 32.0, 7.0];
            for p in (0..n).step_by(4) {
                for (j, cj) in c.iter().enumerate() {
                    w[p + j] += 2.0 * h / 45.0 * cj;
                }
            }
        }
    }
    w
}

/// End weights `a_1..a_m` (unit spacing) for nodes `1..m` next to an end node
/// of weight zero, followed by unit weights. They are the minimum-norm
/// deviation from 1 that makes the end exact for monomials of degree `< k`,
/// using the Euler-Maclaurin end term of the trapezoid rule.
fn open_end_weights(n: usize) -> Vec<f64> {
    let (k, m) = match (n - 1) / 2 {
        h if h >= 12 => (5, 12),
        h if h >= 8 => (4, 8),
        h if h >= 4 => (3, 4),
        h if h >= 2 => (2, 2),
        _ => (1, 1),
    };
    // End term L(t^d) = δ_{d0}/2 − B_{d+1}/(d+1) for odd d.
    let bern_term = |d: usize| match d {
        1 => 1.0 / 12.0,
        3 => -1.0 / 120.0,
        _ => 0.0,
    };
    let a = DMatrix::from_fn(k, m, |d, j| ((j + 1) as f64 / m as f64).powi(d as i32));
    let rhs = DVector::from_fn(k, |d, _| {
        let end = if d == 0 { 0.5 } else { 0.0 } - bern_term(d);
        let delta = if d == 0 { 1.0 } else { 0.0 };
        (delta - end) / (m as f64).powi(d as i32)
    });
    // a = 1 + Aᵀ (A Aᵀ)⁻¹ (rhs)  where rhs already excludes A·1.
    let aat = &a * a.transpose();
    let y = aat.lu().solve(&rhs).expect("end-correction system is nonsingular");
    let corr = a.transpose() * y;
    let w: Vec<f64> = corr.iter().map(|v| 1.0 + v).collect();
    debug_assert!(w.iter().all(|&v| v > 0.0), "end weights must stay positive: {w:?}");
    w
}

/// Complex values on the nodes of a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub grid: Arc<Grid>,
    pub values: Vec<C64>,
}

impl GridFunction {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        GridFunction { grid: grid.clone(), values: vec![C64::new(0.0, 0.0); grid.len()] }
    }

    /// Samples `f(x, side)`; `side` distinguishes `0-` from `0+`.
    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn(f64, Side) -> C64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.nodes[i], grid.side_of(i))).collect();
        GridFunction { grid: grid.clone(), values }
    }

    pub fn from_real_fn(grid: &Arc<Grid>, f: impl Fn(f64) -> f64) -> Self {
        Self::from_fn(grid, |x, _| C64::new(f(x), 0.0))
    }

    pub fn same_grid(&self, other: &GridFunction) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    /// `∫ f ḡ |r|`.
    pub fn hilbert_inner(&self, other: &GridFunction) -> C64 {
        (0..self.values.len())
            .map(|i| self.values[i] * other.values[i].conj() * self.grid.hilbert_weight(i))
            .sum()
    }

    /// `∫ f ḡ r`.
    pub fn krein_inner(&self, other: &GridFunction) -> C64 {
        (0..self.values.len())
            .map(|i| self.values[i] * other.values[i].conj() * self.grid.krein_weight(i))
            .sum()
    }

    pub fn hilbert_norm(&self) -> f64 {
        self.hilbert_inner(self).re.max(0.0).sqrt()
    }

    /// Discrete `∫ p |f′|²` on each half separately.
    pub fn energy(&self) -> f64 {
        let g = &self.grid;
        let mut e = 0.0;
        for half in 0..2 {
            let off = half * (g.n + 1);
            for k in 0..g.n {
                let h = g.nodes[off + k + 1] - g.nodes[off + k];
                let d = self.values[off + k + 1] - self.values[off + k];
                e += g.p_mid[half * g.n + k] * d.norm_sqr() / h;
            }
        }
        e
    }

    pub fn at_minus1(&self) -> C64 {
        self.values[self.grid.idx_minus1()]
    }

    pub fn at_plus1(&self) -> C64 {
        self.values[self.grid.idx_plus1()]
    }

    pub fn at_zero_minus(&self) -> C64 {
        self.values[self.grid.idx_zero_minus()]
    }

    pub fn at_zero_plus(&self) -> C64 {
        self.values[self.grid.idx_zero_plus()]
    }

    pub fn scale(&self, c: C64) -> Self {
        GridFunction { grid: self.grid.clone(), values: self.values.iter().map(|v| v * c).collect() }
    }

    pub fn axpy(&self, c: C64, other: &GridFunction) -> Self {
        GridFunction {
            grid: self.grid.clone(),
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + c * b).collect(),
        }
    }
}

/// Element `(f, z)` of `L_{2,r} ⊕ C_Δ`.
#[derive(Debug, Clone, PartialEq)]
pub struct KreinVector {
    pub f: GridFunction,
    pub z: C64,
}

impl KreinVector {
    pub fn new(f: GridFunction, z: C64) -> Self {
        KreinVector { f, z }
    }

    /// `∫ f ḡ r + w̄ Δ z`.
    pub fn krein_inner(&self, other: &KreinVector, delta: f64) -> C64 {
        self.f.krein_inner(&other.f) + other.z.conj() * self.z * delta
    }

    /// `∫ f ḡ |r| + w̄ |Δ| z`.
    pub fn hilbert_inner(&self, other: &KreinVector, delta: f64) -> C64 {
        self.f.hilbert_inner(&other.f) + other.z.conj() * self.z * delta.abs()
    }

    pub fn hilbert_norm(&self, delta: f64) -> f64 {
        self.hilbert_inner(self, delta).re.max(0.0).sqrt()
    }

    /// Fundamental symmetry `J = diag(J₀, sgn Δ)`.
    pub fn apply_j(&self, delta: f64) -> KreinVector {
        let g = &self.f.grid;
        let values = self.f.values.iter().enumerate().map(|(i, v)| v * g.sign_r[i]).collect();
        KreinVector { f: GridFunction { grid: g.clone(), values }, z: self.z * delta.signum() }
    }

    pub fn scale(&self, c: C64) -> KreinVector {
        KreinVector { f: self.f.scale(c), z: self.z * c }
    }
}
