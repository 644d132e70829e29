//! Discrete cutoffs, multiplication and transfer operators, the block
//! operators `X` and the positive operators `W = J(X*X + I)`.
//!
//! Operators are dense matrices on the nodes of a [`Grid`] built with
//! [`Rule::Open`]. Adjoints are taken with respect to the quadrature
//! weights of `L_{2,|r|}`. The anchor nodes `-1, 0-, 0+, 1` carry no
//! quadrature mass; their rows are filled from the pointwise formulas so that
//! one-sided boundary limits are represented exactly.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::bc_algebra::{BoundaryTriple, ClassificationReport, EchelonSplit, RequiredCondition, Theorem};
use crate::coefficients::{check_condition_at, CoefficientModel, HalfNeighborhood, Point, Side, SmoothConnection};
use crate::grid::{Grid, GridFunction, KreinVector, Rule};
use crate::linalg::{c, hermitian_extremes, singular_values};
use crate::C64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("cutoff width must satisfy 0 < eps <= 1/8, got {0}")]
    BadEps(f64),
    #[error("domain mismatch: {0}")]
    DomainMismatch(String),
    #[error("degenerate connection parameters: |α′| = {alpha} equals |β′|ρ(0) = {beta_rho}")]
    DegenerateParameters { alpha: f64, beta_rho: f64 },
    #[error("side {side} needs an endpoint operator with μ = {expected}, got {got}")]
    SideMismatch { side: Side, expected: C64, got: String },
    #[error("missing operator for condition {0}")]
    MissingCondition(RequiredCondition),
    #[error("no theorem applies to this boundary triple")]
    NoTheorem,
}

/// Cutoff functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CutoffKind {
    /// `φ` on `[0, 1]`: `1` on `[0, ε/2]`, `0` on `[ε, 1]`; sampled at `t = |x|`.
    Phi,
    /// `φ₀`: even, `1` on `|x| ≤ 1/4`, `0` on `|x| ≥ 1/2`.
    Phi0,
    /// `φ₁`: even, `0` on `|x| ≤ 1/2`, `1` on `|x| ≥ 3/4`.
    Phi1,
}

fn smoothstep(u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    u * u * (3.0 - 2.0 * u)
}

pub fn phi(t: f64, eps: f64) -> f64 {
    1.0 - smoothstep((t - 0.5 * eps) / (0.5 * eps))
}

pub fn phi0(x: f64) -> f64 {
    1.0 - smoothstep((x.abs() - 0.25) / 0.25)
}

pub fn phi1(x: f64) -> f64 {
    smoothstep((x.abs() - 0.5) / 0.25)
}

pub fn make_cutoff(grid: &Arc<Grid>, kind: CutoffKind, eps: f64) -> Result<GridFunction, KernelError> {
    match kind {
        CutoffKind::Phi => {
            if !(eps > 0.0 && eps <= 0.125) {
                return Err(KernelError::BadEps(eps));
            }
            Ok(GridFunction::from_real_fn(grid, |x| phi(x.abs(), eps)))
        }
        CutoffKind::Phi0 => Ok(GridFunction::from_real_fn(grid, phi0)),
        CutoffKind::Phi1 => Ok(GridFunction::from_real_fn(grid, phi1)),
    }
}

/// The multiplication operators `P_{0,±}` and `P_{1,±}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PWhich {
    P0Minus,
    P0Plus,
    P1Minus,
    P1Plus,
}

impl PWhich {
    pub fn side(self) -> Side {
        match self {
            PWhich::P0Minus | PWhich::P1Minus => Side::Left,
            PWhich::P0Plus | PWhich::P1Plus => Side::Right,
        }
    }

    fn cutoff(self, x: f64) -> f64 {
        match self {
            PWhich::P0Minus | PWhich::P0Plus => phi0(x),
            PWhich::P1Minus | PWhich::P1Plus => phi1(x),
        }
    }
}

fn check_support(f: &GridFunction, side: Side, what: &str) -> Result<(), KernelError> {
    let half = f.grid.half(side);
    if f.values.iter().enumerate().any(|(i, v)| !half.contains(&i) && *v != c(0.0)) {
        return Err(KernelError::DomainMismatch(format!("{what} expects a function on the {side} half")));
    }
    Ok(())
}

#[allow(non_snake_case)]
pub fn apply_P(which: PWhich, f: &GridFunction) -> Result<GridFunction, KernelError> {
    check_support(f, which.side(), "P")?;
    Ok(p_matrix(&f.grid, which).apply(f))
}

/// Four-point Lagrange stencil on the half of `side`, exact at nodes. Off
/// the nodes only interior nodes are used, so values at the massless end
/// nodes never leak into the interior.
fn stencil4(grid: &Grid, x: f64, side: Side) -> Vec<(usize, f64)> {
    let (i, j, theta) = grid.stencil(x, side);
    if i == j || theta == 0.0 {
        return vec![(i, 1.0)];
    }
    if theta == 1.0 {
        return vec![(j, 1.0)];
    }
    let range = grid.half(side);
    let (lo, hi) = (*range.start(), *range.end());
    let start = i.saturating_sub(1).max(lo + 1).min(hi - 4);
    let idx: Vec<usize> = (start..start + 4).collect();
    idx.iter()
        .map(|&k| {
            let mut w = 1.0;
            for &m in &idx {
                if m != k {
                    w *= (x - grid.nodes[m]) / (grid.nodes[k] - grid.nodes[m]);
                }
            }
            (k, w)
        })
        .collect()
}

/// What an [`OperatorRep`] was built from.
#[derive(Debug, Clone, PartialEq)]
pub enum Recipe {
    Identity,
    P(PWhich),
    Transfer { adjoint: bool },
    X0 { case: X0Case, adjoint: bool },
    XEnd { point: Point, mu: C64, adjoint: bool },
    W0 { case: X0Case },
    WEnd { point: Point, mu: C64 },
    W01 { side: Side },
    Full { theorem: Theorem },
}

impl fmt::Display for Recipe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let star = |a: &bool| if *a { "*" } else { "" };
        match self {
            Recipe::Identity => write!(f, "I"),
            Recipe::P(w) => write!(f, "{w:?}"),
            Recipe::Transfer { adjoint } => write!(f, "S{}", star(adjoint)),
            Recipe::X0 { case, adjoint } => write!(f, "X0{}[{case:?}]", star(adjoint)),
            Recipe::XEnd { point, mu, adjoint } => write!(f, "X{}{}[mu={mu}]", point.value(), star(adjoint)),
            Recipe::W0 { case } => write!(f, "W0[{case:?}]"),
            Recipe::WEnd { point, mu } => write!(f, "W{}[mu={mu}]", point.value()),
            Recipe::W01 { side } => write!(f, "W01[{side}]"),
            Recipe::Full { theorem } => write!(f, "W[{theorem}]"),
        }
    }
}

/// Dense matrix on the grid nodes, optionally with a trailing scalar block
/// acting on the `C_Δ` component.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorRep {
    pub grid: Arc<Grid>,
    pub matrix: DMatrix<C64>,
    pub scalar: Option<C64>,
    pub recipe: Recipe,
}

impl OperatorRep {
    pub fn identity(grid: &Arc<Grid>) -> Self {
        let n = grid.len();
        OperatorRep { grid: grid.clone(), matrix: DMatrix::identity(n, n), scalar: None, recipe: Recipe::Identity }
    }

    pub fn apply(&self, f: &GridFunction) -> GridFunction {
        let v = DVector::from_column_slice(&f.values);
        let out = &self.matrix * v;
        GridFunction { grid: self.grid.clone(), values: out.iter().cloned().collect() }
    }

    /// Applies the operator to `(f, z)`; without a scalar block `z` is kept.
    pub fn apply_krein(&self, x: &KreinVector) -> KreinVector {
        KreinVector { f: self.apply(&x.f), z: x.z * self.scalar.unwrap_or(c(1.0)) }
    }

    /// Matrix of the operator in an `L_{2,|r|}`-orthonormal coordinate system
    /// on the nodes of positive weight, with the scalar block appended (scaled
    /// by `|Δ|^{1/2}`, which cancels in the similarity).
    pub fn hilbert_matrix(&self) -> DMatrix<C64> {
        let idx = positive_nodes(&self.grid);
        let k = idx.len() + usize::from(self.scalar.is_some());
        let mut m = DMatrix::zeros(k, k);
        for (a, &i) in idx.iter().enumerate() {
            let si = self.grid.hilbert_weight(i).sqrt();
            for (b, &j) in idx.iter().enumerate() {
                let sj = self.grid.hilbert_weight(j).sqrt();
                m[(a, b)] = self.matrix[(i, j)] * (si / sj);
            }
        }
        if let Some(s) = self.scalar {
            m[(k - 1, k - 1)] = s;
        }
        m
    }

    /// 2-norm condition number in `L_{2,|r|} ⊕ C_{|Δ|}`.
    pub fn condition_number(&self) -> f64 {
        let s = singular_values(&self.hilbert_matrix());
        s[0] / s[s.len() - 1]
    }
}

fn positive_nodes(grid: &Grid) -> Vec<usize> {
    (0..grid.len()).filter(|&i| grid.hilbert_weight(i) > 0.0).collect()
}

fn p_matrix(grid: &Arc<Grid>, which: PWhich) -> OperatorRep {
    let n = grid.len();
    let mut m = DMatrix::zeros(n, n);
    for i in grid.half(which.side()) {
        m[(i, i)] = c(which.cutoff(grid.nodes[i]));
    }
    OperatorRep { grid: grid.clone(), matrix: m, scalar: None, recipe: Recipe::P(which) }
}

fn j_diag(grid: &Grid) -> Vec<f64> {
    grid.sign_r.clone()
}

/// Half of `[-1, 1]` containing a half-neighborhood.
fn grid_half(h: &HalfNeighborhood) -> Side {
    match h.point {
        p if p < 0.0 => Side::Left,
        p if p > 0.0 => Side::Right,
        _ => h.side,
    }
}

/// `(Sf)(β(t)) = |α′| f(α(t)) φ(t)` as a matrix, rows on the target half.
fn transfer_forward(grid: &Arc<Grid>, conn: &SmoothConnection) -> DMatrix<C64> {
    let n = grid.len();
    let mut m = DMatrix::zeros(n, n);
    let scale = conn.alpha_slope.abs();
    for j in grid.half(grid_half(&conn.to)) {
        let t = conn.beta_inv(grid.nodes[j]).max(0.0);
        let ph = phi(t, conn.eps);
        if ph == 0.0 {
            continue;
        }
        for (k, w) in stencil4(grid, conn.alpha(t), grid_half(&conn.from)) {
            m[(j, k)] += c(scale * ph * w);
        }
    }
    m
}

/// `(S*g)(α(t)) = |β′| g(β(t)) ρ(t) φ(t)` as a matrix, rows on the source half.
fn transfer_adjoint_formula(grid: &Arc<Grid>, conn: &SmoothConnection) -> DMatrix<C64> {
    let n = grid.len();
    let mut m = DMatrix::zeros(n, n);
    let scale = conn.beta_slope.abs();
    for i in grid.half(grid_half(&conn.from)) {
        let t = conn.alpha_inv(grid.nodes[i]).max(0.0);
        let ph = phi(t, conn.eps);
        if ph == 0.0 {
            continue;
        }
        let rho = conn.rho(t);
        for (k, w) in stencil4(grid, conn.beta(t), grid_half(&conn.to)) {
            m[(i, k)] += c(scale * rho * ph * w);
        }
    }
    m
}

/// Quadrature-weighted adjoint of `a`; rows of zero weight are taken from `anchor_rows`.
fn weighted_adjoint(grid: &Grid, a: &DMatrix<C64>, anchor_rows: &DMatrix<C64>) -> DMatrix<C64> {
    let n = grid.len();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        let wi = grid.hilbert_weight(i);
        if wi > 0.0 {
            for j in 0..n {
                let aji = a[(j, i)];
                if aji != c(0.0) {
                    m[(i, j)] = aji.conj() * (grid.hilbert_weight(j) / wi);
                }
            }
        } else {
            for j in 0..n {
                m[(i, j)] = anchor_rows[(i, j)];
            }
        }
    }
    m
}

fn check_grid(grid: &Grid) -> Result<(), KernelError> {
    if grid.rule != Rule::Open {
        return Err(KernelError::DomainMismatch("operators need a grid with the open trapezoid rule".into()));
    }
    Ok(())
}

/// Transfer operator `S` and its discrete adjoint for a smooth connection.
pub fn transfer_operator(grid: &Arc<Grid>, conn: &SmoothConnection) -> Result<(OperatorRep, OperatorRep), KernelError> {
    check_grid(grid)?;
    let s = transfer_forward(grid, conn);
    let s_adj = weighted_adjoint(grid, &s, &transfer_adjoint_formula(grid, conn));
    let rep = |matrix, adjoint| OperatorRep { grid: grid.clone(), matrix, scalar: None, recipe: Recipe::Transfer { adjoint } };
    Ok((rep(s, false), rep(s_adj, true)))
}

/// Applies `S` (or, with `adjoint`, the pointwise formula for `S*`) to `f`.
pub fn apply_transfer(conn: &SmoothConnection, f: &GridFunction, adjoint: bool) -> Result<GridFunction, KernelError> {
    let g = &f.grid;
    let (src, m) = if adjoint {
        (grid_half(&conn.to), transfer_adjoint_formula(g, conn))
    } else {
        (grid_half(&conn.from), transfer_forward(g, conn))
    };
    check_support(f, src, if adjoint { "S*" } else { "S" })?;
    let rep = OperatorRep { grid: g.clone(), matrix: m, scalar: None, recipe: Recipe::Transfer { adjoint } };
    Ok(rep.apply(f))
}

/// Orientation of the smoothly connected pair at `0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum X0Case {
    /// `(0-, 0-)`.
    MM,
    /// `(0-, 0+)`.
    MP,
    /// `(0+, 0-)`.
    PM,
    /// `(0+, 0+)`.
    PP,
}

impl X0Case {
    pub fn of(conn: &SmoothConnection) -> Self {
        match (conn.from.side, conn.to.side) {
            (Side::Left, Side::Left) => X0Case::MM,
            (Side::Left, Side::Right) => X0Case::MP,
            (Side::Right, Side::Left) => X0Case::PM,
            (Side::Right, Side::Right) => X0Case::PP,
        }
    }
}

/// Solves `γ₁ a + γ₂ = 1`, `conj(γ₁) b + conj(γ₂) = rhs`.
pub fn solve_gamma(a: f64, b: f64, rhs: C64) -> Result<(C64, C64), KernelError> {
    if (a - b).abs() <= 1e-12 * a.max(b).max(1.0) {
        return Err(KernelError::DegenerateParameters { alpha: a, beta_rho: b });
    }
    let g1 = (rhs.conj() - c(1.0)) / (b - a);
    let g2 = c(1.0) - g1 * a;
    Ok((g1, g2))
}

/// `X` and `X*` together with the coefficients `γ₁, γ₂`.
#[derive(Debug, Clone)]
pub struct XPair {
    pub x: OperatorRep,
    pub x_adj: OperatorRep,
    pub gamma: (C64, C64),
}

/// `X₀` for the connection at `0`; `γ₂` scales the cutoff on the target half of `S₀`.
#[allow(non_snake_case)]
pub fn build_X0(grid: &Arc<Grid>, conn: &SmoothConnection) -> Result<XPair, KernelError> {
    if conn.a() != 0.0 || conn.b() != 0.0 {
        return Err(KernelError::DomainMismatch("X0 needs a connection anchored at 0".into()));
    }
    let case = X0Case::of(conn);
    let (g1, g2) = solve_gamma(conn.alpha_slope.abs(), conn.adjoint_factor(), c(-3.0))?;
    let (s, s_adj) = transfer_operator(grid, conn)?;
    let pm = p_matrix(grid, PWhich::P0Minus).matrix;
    let pp = p_matrix(grid, PWhich::P0Plus).matrix;
    let (pm_coef, pp_coef) = match case {
        X0Case::MM | X0Case::PM => (g2, c(1.0)),
        X0Case::MP | X0Case::PP => (c(1.0), g2),
    };
    let x = &s.matrix * g1 + &pm * pm_coef + &pp * pp_coef;
    let x_adj = &s_adj.matrix * g1.conj() + &pm * pm_coef.conj() + &pp * pp_coef.conj();
    let rep = |matrix, adjoint| OperatorRep { grid: grid.clone(), matrix, scalar: None, recipe: Recipe::X0 { case, adjoint } };
    Ok(XPair { x: rep(x, false), x_adj: rep(x_adj, true), gamma: (g1, g2) })
}

/// `J (X*X + I)`, exploiting the sparsity of `X*`.
fn j_xx_plus_i(grid: &Grid, x: &DMatrix<C64>, x_adj: &DMatrix<C64>) -> DMatrix<C64> {
    let n = grid.len();
    let mut m = DMatrix::identity(n, n);
    for k in 0..n {
        for i in 0..n {
            let a = x_adj[(i, k)];
            if a == c(0.0) {
                continue;
            }
            for j in 0..n {
                let b = x[(k, j)];
                if b != c(0.0) {
                    m[(i, j)] += a * b;
                }
            }
        }
    }
    let sign = j_diag(grid);
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] *= sign[i];
        }
    }
    m
}

#[allow(non_snake_case)]
pub fn build_W0(grid: &Arc<Grid>, conn: &SmoothConnection) -> Result<OperatorRep, KernelError> {
    let xp = build_X0(grid, conn)?;
    let matrix = j_xx_plus_i(grid, &xp.x.matrix, &xp.x_adj.matrix);
    Ok(OperatorRep { grid: grid.clone(), matrix, scalar: None, recipe: Recipe::W0 { case: X0Case::of(conn) } })
}

/// `X∓1 = γ₁ S∓1 + γ₂ P_{1,∓}` for the connection at `∓1`.
///
/// At `-1`, where `J = -1`, the second equation of the `γ`-system reads
/// `conj(γ₁)|β′|ρ(0) + conj(γ₂) = -μ - 1`; at `1`, where `J = 1`, the right-hand
/// side is `μ - 1`.
#[allow(non_snake_case)]
pub fn build_X_endpoint(grid: &Arc<Grid>, conn: &SmoothConnection, mu: C64) -> Result<XPair, KernelError> {
    let (point, which, side) = match conn.a() {
        a if a == -1.0 => (Point::MinusOne, PWhich::P1Minus, Side::Right),
        a if a == 1.0 => (Point::PlusOne, PWhich::P1Plus, Side::Left),
        _ => return Err(KernelError::DomainMismatch("endpoint operator needs a connection at -1 or 1".into())),
    };
    if conn.b() != conn.a() || conn.from.side != side || conn.to.side != side {
        return Err(KernelError::DomainMismatch(format!("endpoint connection must join {side} half-neighborhoods")));
    }
    // (X*g)(∓1) must equal (J(∓1) μ − 1) g(∓1) so that J(X*X + I) multiplies by μ there.
    let j_end = grid.sign_r[if point == Point::MinusOne { grid.idx_minus1() } else { grid.idx_plus1() }];
    let (g1, g2) = solve_gamma(conn.alpha_slope.abs(), conn.adjoint_factor(), mu * j_end - c(1.0))?;
    let (s, s_adj) = transfer_operator(grid, conn)?;
    let p = p_matrix(grid, which).matrix;
    let x = &s.matrix * g1 + &p * g2;
    let x_adj = &s_adj.matrix * g1.conj() + &p * g2.conj();
    let rep = |matrix, adjoint| OperatorRep { grid: grid.clone(), matrix, scalar: None, recipe: Recipe::XEnd { point, mu, adjoint } };
    Ok(XPair { x: rep(x, false), x_adj: rep(x_adj, true), gamma: (g1, g2) })
}

/// `W∓1 = J(X∓1* X∓1 + I)` with `(W∓1 f)(∓1) = μ f(∓1)`.
#[allow(non_snake_case)]
pub fn build_W_endpoint(grid: &Arc<Grid>, conn: &SmoothConnection, mu: C64) -> Result<OperatorRep, KernelError> {
    let xp = build_X_endpoint(grid, conn, mu)?;
    let point = match xp.x.recipe {
        Recipe::XEnd { point, .. } => point,
        _ => unreachable!(),
    };
    let matrix = j_xx_plus_i(grid, &xp.x.matrix, &xp.x_adj.matrix);
    Ok(OperatorRep { grid: grid.clone(), matrix, scalar: None, recipe: Recipe::WEnd { point, mu } })
}

/// `W₀` on `K₀ = L_{2,r}(-1/2, 1/2)` joined with `W∓1` on its complement.
#[allow(non_snake_case)]
pub fn build_W01(w0: &OperatorRep, w_end: &OperatorRep, side: Side) -> Result<OperatorRep, KernelError> {
    let (expected_point, expected_mu) = match side {
        Side::Left => (Point::MinusOne, c(1.0)),
        Side::Right => (Point::PlusOne, c(-1.0)),
    };
    match w_end.recipe {
        Recipe::WEnd { point, mu } if point == expected_point && (mu - expected_mu).norm() == 0.0 => {}
        ref other => {
            return Err(KernelError::SideMismatch { side, expected: expected_mu, got: other.to_string() });
        }
    }
    if !matches!(w0.recipe, Recipe::W0 { .. }) {
        return Err(KernelError::DomainMismatch(format!("expected W0, got {}", w0.recipe)));
    }
    if w0.grid != w_end.grid {
        return Err(KernelError::DomainMismatch("operators live on different grids".into()));
    }
    let g = &w0.grid;
    let mut m = w_end.matrix.clone();
    for i in 0..g.len() {
        if g.nodes[i].abs() < 0.5 {
            m.set_row(i, &w0.matrix.row(i));
        }
    }
    Ok(OperatorRep { grid: g.clone(), matrix: m, scalar: None, recipe: Recipe::W01 { side } })
}

/// Pieces available for assembling the full operator.
#[derive(Debug, Clone, Default)]
pub struct WParts {
    pub w0: Option<OperatorRep>,
    /// `W₋₁` built with `μ = 1`.
    pub w_minus: Option<OperatorRep>,
    /// `W₊₁` built with `μ = -1`.
    pub w_plus: Option<OperatorRep>,
}

/// Block-diagonal `W` on `L_{2,r} ⊕ C_Δ` for the classified theorem.
#[allow(non_snake_case)]
pub fn build_full_W(report: &ClassificationReport, parts: &WParts, delta: f64) -> Result<OperatorRep, KernelError> {
    let w0 = || parts.w0.as_ref().ok_or(KernelError::MissingCondition(RequiredCondition::At0));
    let sgn = c(delta.signum());
    let (body, scalar) = match report.theorem {
        Theorem::None => return Err(KernelError::NoTheorem),
        Theorem::Thm6_1 => (w0()?.clone(), sgn),
        Theorem::Thm6_2 => {
            let w01 = match (&parts.w_minus, &parts.w_plus) {
                (Some(wm), _) => build_W01(w0()?, wm, Side::Left)?,
                (None, Some(wp)) => build_W01(w0()?, wp, Side::Right)?,
                (None, None) => return Err(KernelError::MissingCondition(RequiredCondition::AtMinus1OrAtPlus1)),
            };
            (w01, c(delta))
        }
        Theorem::Thm6_3 => {
            let w01 = if delta > 0.0 {
                let wm = parts.w_minus.as_ref().ok_or(KernelError::MissingCondition(RequiredCondition::AtMinus1))?;
                build_W01(w0()?, wm, Side::Left)?
            } else {
                let wp = parts.w_plus.as_ref().ok_or(KernelError::MissingCondition(RequiredCondition::AtPlus1))?;
                build_W01(w0()?, wp, Side::Right)?
            };
            (w01, sgn)
        }
    };
    Ok(OperatorRep {
        grid: body.grid.clone(),
        matrix: body.matrix,
        scalar: Some(scalar),
        recipe: Recipe::Full { theorem: report.theorem },
    })
}

/// Checks the required coefficient conditions and assembles `W` for `report`.
#[allow(non_snake_case)]
pub fn assemble_W(
    model: &CoefficientModel,
    grid: &Arc<Grid>,
    report: &ClassificationReport,
    delta: f64,
) -> Result<OperatorRep, KernelError> {
    let conn_at = |point: Point, cond: RequiredCondition| {
        check_condition_at(model, point).connection.ok_or(KernelError::MissingCondition(cond))
    };
    let mut parts = WParts::default();
    if report.theorem == Theorem::None {
        return Err(KernelError::NoTheorem);
    }
    parts.w0 = Some(build_W0(grid, &conn_at(Point::Zero, RequiredCondition::At0)?)?);
    let want_minus = match report.theorem {
        Theorem::Thm6_2 => Some(true),
        Theorem::Thm6_3 => Some(delta > 0.0),
        _ => None,
    };
    if let Some(prefer_minus) = want_minus {
        let minus = conn_at(Point::MinusOne, RequiredCondition::AtMinus1);
        let plus = conn_at(Point::PlusOne, RequiredCondition::AtPlus1);
        match (report.theorem, prefer_minus) {
            (Theorem::Thm6_2, _) => match (minus, plus) {
                (Ok(cm), _) => parts.w_minus = Some(build_W_endpoint(grid, &cm, c(1.0))?),
                (_, Ok(cp)) => parts.w_plus = Some(build_W_endpoint(grid, &cp, c(-1.0))?),
                _ => return Err(KernelError::MissingCondition(RequiredCondition::AtMinus1OrAtPlus1)),
            },
            (_, true) => parts.w_minus = Some(build_W_endpoint(grid, &minus?, c(1.0))?),
            (_, false) => parts.w_plus = Some(build_W_endpoint(grid, &plus?, c(-1.0))?),
        }
    }
    build_full_W(report, &parts, delta)
}

/// Outcome of [`verify_W`].
#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub samples: usize,
    /// `min [Wx, x] / ‖x‖²` over the samples.
    pub min_krein_ratio: f64,
    pub positive: bool,
    pub condition_number: f64,
    /// Largest relative residual of the essential constraints after applying `W`;
    /// `None` when the form domain imposes none.
    pub form_domain_residual: Option<f64>,
    pub form_domain_ok: bool,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.positive && self.form_domain_ok && self.condition_number.is_finite()
    }
}

/// Smooth random grid function: a random complex polynomial of degree 5.
pub fn random_smooth(grid: &Arc<Grid>, rng: &mut impl Rng) -> GridFunction {
    let coeffs: Vec<C64> = (0..6).map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
    GridFunction::from_fn(grid, |x, _| coeffs.iter().rev().fold(c(0.0), |acc, &a| acc * x + a))
}

/// Random element of the form domain: `L_e b_e(f) = 0` when `L_n = 0`, and
/// `z = N_e b_e(f)` when `N_n = 0`.
pub fn random_form_domain_vector(grid: &Arc<Grid>, split: &EchelonSplit, rng: &mut impl Rng) -> KreinVector {
    let mut f = random_smooth(grid, rng);
    if split.form_domain_case.constrains_l() {
        let [u, v] = split.l_e;
        let (fm, fp) = (f.at_minus1(), f.at_plus1());
        let res = u * fm + v * fp;
        if v.norm() >= u.norm() {
            // add s(1+x)/2, which only moves f(1)
            let s = -res / v;
            f = f.axpy(s, &GridFunction::from_real_fn(grid, |x| 0.5 * (1.0 + x)));
        } else {
            let s = -res / u;
            f = f.axpy(s, &GridFunction::from_real_fn(grid, |x| 0.5 * (1.0 - x)));
        }
    }
    let z = if split.form_domain_case.ties_z() {
        split.n_e[0] * f.at_minus1() + split.n_e[1] * f.at_plus1()
    } else {
        C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    };
    KreinVector::new(f, z)
}

#[allow(non_snake_case)]
pub fn verify_W(w: &OperatorRep, split: &EchelonSplit, t: &BoundaryTriple, samples: usize, seed: u64) -> VerificationReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = &w.grid;
    let mut min_ratio = f64::INFINITY;
    let mut residual: Option<f64> = None;
    let case = split.form_domain_case;
    for _ in 0..samples {
        let x = random_form_domain_vector(grid, split, &mut rng);
        let norm2 = x.hilbert_norm(t.delta).powi(2);
        if norm2 == 0.0 {
            continue;
        }
        let wx = w.apply_krein(&x);
        let k = wx.krein_inner(&x, t.delta);
        min_ratio = min_ratio.min(k.re / norm2);
        let scale = wx.f.at_minus1().norm() + wx.f.at_plus1().norm() + wx.z.norm() + 1.0;
        if case.constrains_l() {
            let r = (split.l_e[0] * wx.f.at_minus1() + split.l_e[1] * wx.f.at_plus1()).norm() / scale;
            residual = Some(residual.unwrap_or(0.0).max(r));
        }
        if case.ties_z() {
            let r = (wx.z - (split.n_e[0] * wx.f.at_minus1() + split.n_e[1] * wx.f.at_plus1())).norm() / scale;
            residual = Some(residual.unwrap_or(0.0).max(r));
        }
    }
    VerificationReport {
        samples,
        min_krein_ratio: min_ratio,
        positive: min_ratio > 0.0,
        condition_number: w.condition_number(),
        form_domain_residual: residual,
        form_domain_ok: residual.is_none_or(|r| r <= 1e-10),
    }
}

/// Smallest eigenvalue of the symmetric part of `J₀W − I` in `L_{2,|r|}`.
pub fn jw_minus_i_min_eig(w: &OperatorRep) -> f64 {
    let g = &w.grid;
    let mut jw = w.clone();
    jw.scalar = None;
    for i in 0..g.len() {
        let s = g.sign_r[i];
        for j in 0..g.len() {
            jw.matrix[(i, j)] *= s;
        }
        jw.matrix[(i, i)] -= c(1.0);
    }
    hermitian_extremes(&jw.hilbert_matrix()).0
}

/// Largest `|⟨Xf,g⟩ − ⟨f,X*g⟩| / (‖f‖‖g‖)` over random smooth `f`, `g`.
pub fn adjoint_residual(x: &OperatorRep, x_adj: &OperatorRep, samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let f = random_smooth(&x.grid, &mut rng);
        let g = random_smooth(&x.grid, &mut rng);
        let lhs = x.apply(&f).hilbert_inner(&g);
        let rhs = f.hilbert_inner(&x_adj.apply(&g));
        worst = worst.max((lhs - rhs).norm() / (f.hilbert_norm() * g.hilbert_norm()));
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::build_smooth_connection;

    fn setup(n: usize) -> (CoefficientModel, Arc<Grid>) {
        let m = CoefficientModel::power_weight(1.0);
        let g = Grid::new(&m, n, Rule::Open);
        (m, g)
    }

    fn conn(m: &CoefficientModel, a: (f64, Side), b: (f64, Side), scale: f64) -> SmoothConnection {
        build_smooth_connection(m, (HalfNeighborhood::new(a.0, a.1), HalfNeighborhood::new(b.0, b.1)), scale).unwrap()
    }

    #[test]
    fn cutoffs() {
        let (_, g) = setup(64);
        assert_eq!(make_cutoff(&g, CutoffKind::Phi, 0.2), Err(KernelError::BadEps(0.2)));
        assert_eq!(phi(0.0, 0.125), 1.0);
        assert_eq!(phi(0.125, 0.125), 0.0);
        assert_eq!(phi(0.0625, 0.125), 1.0);
        let p1 = make_cutoff(&g, CutoffKind::Phi1, 0.1).unwrap();
        assert_eq!(p1.at_minus1(), c(1.0));
        assert_eq!(p1.at_plus1(), c(1.0));
        for i in 0..g.len() {
            if g.nodes[i].abs() <= 0.5 {
                assert_eq!(p1.values[i], c(0.0));
            }
            assert_eq!(phi1(g.nodes[i]), phi1(-g.nodes[i]));
        }
        assert_eq!(phi0(0.0), 1.0);
        assert_eq!(phi0(0.5), 0.0);
    }

    #[test]
    fn p_support_and_domain() {
        let (_, g) = setup(64);
        let f = GridFunction::from_fn(&g, |x, s| if s == Side::Left { c(2.0 + x) } else { c(0.0) });
        let pf = apply_P(PWhich::P1Minus, &f).unwrap();
        assert_eq!(pf.at_minus1(), f.at_minus1());
        for i in g.left() {
            if g.nodes[i] >= -0.5 {
                assert_eq!(pf.values[i], c(0.0));
            }
        }
        assert!(matches!(apply_P(PWhich::P0Plus, &f), Err(KernelError::DomainMismatch(_))));
        let z = GridFunction::zeros(&g);
        assert!(apply_P(PWhich::P0Plus, &z).unwrap().values.iter().all(|v| *v == c(0.0)));
    }

    #[test]
    fn transfer_limits_support_and_pairing() {
        let (m, g) = setup(256);
        let cn = conn(&m, (0.0, Side::Left), (0.0, Side::Right), 2.0);
        let one = GridFunction::from_fn(&g, |_, s| if s == Side::Left { c(1.0) } else { c(0.0) });
        let sf = apply_transfer(&cn, &one, false).unwrap();
        assert!((sf.at_zero_plus() - c(1.0)).norm() < 1e-15);
        for i in g.right() {
            if (g.nodes[i] - 1.0).abs() <= 0.5 {
                assert_eq!(sf.values[i], c(0.0));
            }
        }
        let f = GridFunction::from_fn(&g, |x, s| if s == Side::Left { C64::new(x.cos(), x) } else { c(0.0) });
        let h = GridFunction::from_fn(&g, |x, s| if s == Side::Right { C64::new(1.0 + x * x, -x) } else { c(0.0) });
        let lhs = apply_transfer(&cn, &f, false).unwrap().hilbert_inner(&h);
        let rhs = f.hilbert_inner(&apply_transfer(&cn, &h, true).unwrap());
        assert!((lhs - rhs).norm() < 1e-6 * f.hilbert_norm() * h.hilbert_norm(), "{lhs} {rhs}");
        let s_star_h = apply_transfer(&cn, &h, true).unwrap();
        assert!((s_star_h.at_zero_minus() - h.at_zero_plus() * cn.adjoint_factor()).norm() < 1e-14);
        assert!(apply_transfer(&cn, &h, false).is_err());
    }

    #[test]
    fn gamma_system() {
        let (g1, g2) = solve_gamma(1.0, 4.0, c(-3.0)).unwrap();
        assert!((g1 - c(-4.0 / 3.0)).norm() < 1e-15 && (g2 - c(7.0 / 3.0)).norm() < 1e-15);
        assert!(matches!(solve_gamma(1.0, 1.0, c(-3.0)), Err(KernelError::DegenerateParameters { .. })));
        let mu = C64::new(2.0, 1.0);
        let (g1, g2) = solve_gamma(1.0, 2.0, -mu - c(1.0)).unwrap();
        assert!((g1 + g2 - c(1.0)).norm() < 1e-15);
        assert!((g1.conj() * 2.0 + g2.conj() + mu + c(1.0)).norm() < 1e-15);
    }

    #[test]
    fn x0_identities_all_cases() {
        let (m, g) = setup(64);
        let f = GridFunction::from_real_fn(&g, |x| 1.5 + x.sin());
        for (a, b) in [(Side::Left, Side::Left), (Side::Left, Side::Right), (Side::Right, Side::Left), (Side::Right, Side::Right)] {
            let cn = conn(&m, (0.0, a), (0.0, b), 2.0);
            let xp = build_X0(&g, &cn).unwrap();
            let xf = xp.x.apply(&f);
            assert!((xf.at_zero_minus() - f.at_zero_minus()).norm() < 1e-13, "{a}{b}");
            assert!((xf.at_zero_plus() - f.at_zero_plus()).norm() < 1e-13, "{a}{b}");
            let xs = xp.x_adj.apply(&f);
            assert!((xs.at_zero_minus() + xs.at_zero_plus() + f.at_zero_plus() * 2.0).norm() < 1e-12, "{a}{b}");
            assert!(adjoint_residual(&xp.x, &xp.x_adj, 5, 1) < 1e-12);
        }
    }

    #[test]
    fn w0_properties() {
        let (m, g) = setup(64);
        let cn = conn(&m, (0.0, Side::Left), (0.0, Side::Left), 2.0);
        let w0 = build_W0(&g, &cn).unwrap();
        let f = GridFunction::from_real_fn(&g, |x| 0.3 + x.exp());
        let wf = w0.apply(&f);
        for i in 0..g.len() {
            if g.nodes[i].abs() >= 0.5 {
                assert_eq!(wf.values[i], f.values[i] * g.sign_r[i]);
            }
        }
        assert!((wf.at_minus1() + f.at_minus1()).norm() < 1e-12);
        assert!((wf.at_plus1() - f.at_plus1()).norm() < 1e-12);
        assert!(jw_minus_i_min_eig(&w0) > -1e-8);
    }

    #[test]
    fn endpoint_and_w01() {
        let (m, g) = setup(64);
        let f = GridFunction::from_real_fn(&g, |x| 2.0 + x * x * x);
        let cm = conn(&m, (-1.0, Side::Right), (-1.0, Side::Right), 2.0);
        let cp = conn(&m, (1.0, Side::Left), (1.0, Side::Left), 2.0);
        for mu in [c(1.0), c(-1.0), C64::new(2.0, 1.0)] {
            let wm = build_W_endpoint(&g, &cm, mu).unwrap();
            let v = wm.apply(&f).at_minus1();
            assert!((v - f.at_minus1() * mu).norm() < 1e-10, "{v} {} {mu}", f.at_minus1());
            let wp = build_W_endpoint(&g, &cp, mu).unwrap();
            assert!((wp.apply(&f).at_plus1() - f.at_plus1() * mu).norm() < 1e-10);
            assert!(jw_minus_i_min_eig(&wm) > -1e-8);
        }
        let c0 = conn(&m, (0.0, Side::Left), (0.0, Side::Right), 2.0);
        let w0 = build_W0(&g, &c0).unwrap();
        let wm = build_W_endpoint(&g, &cm, c(1.0)).unwrap();
        let wp = build_W_endpoint(&g, &cp, c(-1.0)).unwrap();
        let w01 = build_W01(&w0, &wm, Side::Left).unwrap();
        let v = w01.apply(&f);
        assert!((v.at_minus1() - f.at_minus1()).norm() < 1e-10 && (v.at_plus1() - f.at_plus1()).norm() < 1e-10);
        let w01 = build_W01(&w0, &wp, Side::Right).unwrap();
        let v = w01.apply(&f);
        assert!((v.at_minus1() + f.at_minus1()).norm() < 1e-10 && (v.at_plus1() + f.at_plus1()).norm() < 1e-10);
        assert!(matches!(build_W01(&w0, &wp, Side::Left), Err(KernelError::SideMismatch { .. })));
    }
}
