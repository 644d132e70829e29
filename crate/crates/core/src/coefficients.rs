//! Coefficient models for `p`, `q`, `r` and the smooth-connection conditions
//! at the turning point `0` and at the endpoints `±1`.
//!
//! Every coefficient is piecewise of the form `g(x) = |x - a|^ν g₁(x)` with a
//! polynomial factor `g₁` that does not vanish on the piece. On a left
//! half-neighborhood of the anchor the sign of `(x - a)^ν` is folded into `g₁`,
//! so fractional orders are well defined on both sides.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoefficientError {
    #[error("invalid coefficient model: {0}")]
    InvalidModel(String),
    #[error("{coeff} has no order model on the {side} half-neighborhood of {point}")]
    NoOrderModel { coeff: CoeffKind, point: f64, side: Side },
    #[error("half-neighborhoods are not connectable: {0}")]
    NotConnectable(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    /// Direction of the half-neighborhood as seen from its anchor.
    pub fn sign(self) -> f64 {
        match self {
            Side::Left => -1.0,
            Side::Right => 1.0,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Left => "left",
            Side::Right => "right",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CoeffKind {
    P,
    Q,
    R,
}

impl fmt::Display for CoeffKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CoeffKind::P => "p",
            CoeffKind::Q => "q",
            CoeffKind::R => "r",
        })
    }
}

/// The three points where conditions on the weight are imposed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Point {
    MinusOne,
    Zero,
    PlusOne,
}

impl Point {
    pub fn value(self) -> f64 {
        match self {
            Point::MinusOne => -1.0,
            Point::Zero => 0.0,
            Point::PlusOne => 1.0,
        }
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Point::MinusOne => "-1",
            Point::Zero => "0",
            Point::PlusOne => "1",
        })
    }
}

/// Polynomial in `x` with ascending coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly(pub Vec<f64>);

impl Poly {
    pub fn constant(c: f64) -> Self {
        Poly(vec![c])
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }
}

/// `|x - anchor|^order · factor(x)` on `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Piece {
    pub lo: f64,
    pub hi: f64,
    pub anchor: f64,
    pub order: f64,
    pub factor: Poly,
}

impl Piece {
    pub fn new(lo: f64, hi: f64, anchor: f64, order: f64, factor: Poly) -> Self {
        Piece { lo, hi, anchor, order, factor }
    }

    pub fn constant(lo: f64, hi: f64, c: f64) -> Self {
        Piece::new(lo, hi, lo, 0.0, Poly::constant(c))
    }

    pub fn eval(&self, x: f64) -> f64 {
        let g = self.factor.eval(x);
        if self.order == 0.0 {
            return g;
        }
        let d = (x - self.anchor).abs();
        if d == 0.0 {
            // Product convention: a vanishing factor wins.
            return if self.order > 0.0 || g == 0.0 { 0.0 } else { f64::INFINITY * g.signum() };
        }
        d.powf(self.order) * g
    }

    fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

/// A piecewise coefficient on `[-1, 1]`. Pieces are sorted and abut.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficient {
    pub pieces: Vec<Piece>,
}

impl Coefficient {
    pub fn new(mut pieces: Vec<Piece>) -> Result<Self, CoefficientError> {
        pieces.sort_by(|a, b| a.lo.total_cmp(&b.lo));
        if pieces.is_empty() {
            return Err(CoefficientError::InvalidModel("no pieces".into()));
        }
        if pieces[0].lo != -1.0 || pieces.last().unwrap().hi != 1.0 {
            return Err(CoefficientError::InvalidModel("pieces must cover [-1, 1]".into()));
        }
        for w in pieces.windows(2) {
            if w[0].hi != w[1].lo {
                return Err(CoefficientError::InvalidModel(format!(
                    "pieces [{}, {}] and [{}, {}] do not abut",
                    w[0].lo, w[0].hi, w[1].lo, w[1].hi
                )));
            }
        }
        if pieces.iter().any(|p| p.lo >= p.hi) {
            return Err(CoefficientError::InvalidModel("empty piece".into()));
        }
        Ok(Coefficient { pieces })
    }

    pub fn constant(c: f64) -> Self {
        Coefficient { pieces: vec![Piece::constant(-1.0, 1.0, c)] }
    }

    /// Piece used for `x`; at a shared endpoint `side` picks the piece to the
    /// left or right of `x`.
    pub fn piece_at(&self, x: f64, side: Side) -> &Piece {
        let mut found = &self.pieces[0];
        for p in &self.pieces {
            if p.contains(x) {
                found = p;
                if side == Side::Left {
                    return p;
                }
            }
        }
        found
    }

    pub fn eval(&self, x: f64, side: Side) -> f64 {
        self.piece_at(x, side).eval(x)
    }

    /// One-sided value, taking the side from the sign of `x` at the turning point.
    pub fn eval_at(&self, x: f64) -> f64 {
        self.eval(x, if x < 0.0 { Side::Left } else { Side::Right })
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b: Vec<f64> = self.pieces.iter().map(|p| p.lo).collect();
        b.push(1.0);
        b
    }
}

/// Coefficients `p`, `q`, `r` of `-(p f')' + q f = λ r f`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientModel {
    pub p: Coefficient,
    pub q: Coefficient,
    pub r: Coefficient,
    /// Permit `p` of nonzero order at anchors (matching orders required when connecting).
    pub allow_p_order: bool,
}

impl CoefficientModel {
    pub fn new(p: Coefficient, q: Coefficient, r: Coefficient) -> Result<Self, CoefficientError> {
        let m = CoefficientModel { p, q, r, allow_p_order: false };
        m.validate()?;
        Ok(m)
    }

    /// `p = 1`, `q = 0`, `r = sgn(x)|x|^ν`.
    pub fn power_weight(nu: f64) -> Self {
        let r = Coefficient {
            pieces: vec![
                Piece::new(-1.0, 0.0, 0.0, nu, Poly::constant(-1.0)),
                Piece::new(0.0, 1.0, 0.0, nu, Poly::constant(1.0)),
            ],
        };
        CoefficientModel::new(Coefficient::constant(1.0), Coefficient::constant(0.0), r)
            .expect("power weight with ν > -1 is valid")
    }

    /// `p = 1`, `q = 0`, `r = sgn(x)`.
    pub fn sign_weight() -> Self {
        Self::power_weight(0.0)
    }

    /// `p = 1`, `q = 0`, `r = 1`: the definite case, used as an oracle problem.
    /// It violates `x r(x) > 0` and is therefore built without validation.
    pub fn unit_weight() -> Self {
        CoefficientModel {
            p: Coefficient::constant(1.0),
            q: Coefficient::constant(0.0),
            r: Coefficient::constant(1.0),
            allow_p_order: false,
        }
    }

    pub fn coefficient(&self, kind: CoeffKind) -> &Coefficient {
        match kind {
            CoeffKind::P => &self.p,
            CoeffKind::Q => &self.q,
            CoeffKind::R => &self.r,
        }
    }

    /// All breakpoints of `p`, `q`, `r` plus the turning point, sorted.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b: Vec<f64> = [&self.p, &self.q, &self.r]
            .iter()
            .flat_map(|c| c.breakpoints())
            .chain(std::iter::once(0.0))
            .collect();
        b.sort_by(f64::total_cmp);
        b.dedup();
        b
    }

    /// Orders of `r` at its anchors that lie inside the piece, used to grade grids
    /// and integration steps.
    pub fn r_singular_order_near(&self, x: f64) -> Option<f64> {
        self.r
            .pieces
            .iter()
            .filter(|p| p.contains(p.anchor) && p.order < 0.0 && (p.anchor - x).abs() < 1e-12)
            .map(|p| p.order)
            .reduce(f64::min)
    }

    /// Sign condition `x r(x) > 0`, positivity of `p`, nonvanishing factors and
    /// integrability of `1/p`, `q`, `r` at the anchors.
    pub fn validate(&self) -> Result<(), CoefficientError> {
        let bad = |msg: String| Err(CoefficientError::InvalidModel(msg));
        for (kind, c) in [(CoeffKind::P, &self.p), (CoeffKind::Q, &self.q), (CoeffKind::R, &self.r)] {
            for piece in &c.pieces {
                let anchored = piece.contains(piece.anchor) && piece.order != 0.0;
                if anchored {
                    match kind {
                        CoeffKind::R | CoeffKind::Q if piece.order <= -1.0 => {
                            return bad(format!("{kind} of order {} is not integrable", piece.order));
                        }
                        CoeffKind::P if !self.allow_p_order => {
                            return bad("p must be bounded away from 0 and ∞ near anchors".into());
                        }
                        CoeffKind::P if piece.order >= 1.0 => {
                            return bad(format!("1/p of order {} is not integrable", -piece.order));
                        }
                        _ => {}
                    }
                }
                let samples = 64;
                for k in 1..samples {
                    let x = piece.lo + (piece.hi - piece.lo) * k as f64 / samples as f64;
                    let g = piece.factor.eval(x);
                    if kind != CoeffKind::Q && g == 0.0 {
                        return bad(format!("factor of {kind} vanishes at {x}"));
                    }
                    let v = piece.eval(x);
                    match kind {
                        CoeffKind::P if v.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) => {
                            return bad(format!("p({x}) = {v} is not positive"));
                        }
                        CoeffKind::R if x != 0.0 && !(x * v > 0.0) => {
                            return bad(format!("x r(x) = {} is not positive at x = {x}", x * v));
                        }
                        _ => {}
                    }
                }
            }
        }
        Ok(())
    }
}

/// Order `ν` and the one-sided value of the smooth factor of `p` or `r` on a
/// half-neighborhood of `point`.
pub fn order_at(
    m: &CoefficientModel,
    coeff: CoeffKind,
    point: f64,
    side: Side,
) -> Result<(f64, f64), CoefficientError> {
    let no_model = CoefficientError::NoOrderModel { coeff, point, side };
    if (side == Side::Left && point <= -1.0) || (side == Side::Right && point >= 1.0) {
        return Err(no_model);
    }
    let piece = m.coefficient(coeff).piece_at(point, side);
    let inward = match side {
        Side::Left => piece.lo < point,
        Side::Right => piece.hi > point,
    };
    if !inward {
        return Err(no_model);
    }
    if piece.anchor == point {
        let g = piece.factor.eval(point);
        if g == 0.0 {
            return Err(no_model);
        }
        Ok((piece.order, g))
    } else {
        // Away from its anchor the piece is smooth: order 0 with g₁ = g.
        let v = piece.eval(point);
        if v == 0.0 || !v.is_finite() {
            return Err(no_model);
        }
        Ok((0.0, v))
    }
}

/// A half-neighborhood `[point, point + δ]` (right) or `[point - δ, point]` (left).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfNeighborhood {
    pub point: f64,
    pub side: Side,
}

impl HalfNeighborhood {
    pub fn new(point: f64, side: Side) -> Self {
        HalfNeighborhood { point, side }
    }
}

/// Default length of the parameter interval `[0, ε]`.
pub const DEFAULT_EPS: f64 = 1.0 / 8.0;

/// Smooth connection of two half-neighborhoods through affine maps
/// `α(t) = a + α′t`, `β(t) = b + β′t` on `[0, ε]`, with
/// `ρ(t) = |r(β(t))| / |r(α(t))|` and `ϖ(t) = p(β(t)) / p(α(t))`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothConnection {
    pub from: HalfNeighborhood,
    pub to: HalfNeighborhood,
    pub alpha_slope: f64,
    pub beta_slope: f64,
    pub eps: f64,
    /// `1/τ < ϖ < τ` on `[0, ε]`.
    pub tau: f64,
    pub rho0: f64,
    /// Orders of `r` on the two half-neighborhoods.
    pub nu_a: f64,
    pub nu_b: f64,
    /// Numerical estimate of `∫₀^ε |ρ′|² p(α(t)) dt`.
    pub rho_energy: f64,
    r: Coefficient,
}

impl SmoothConnection {
    pub fn a(&self) -> f64 {
        self.from.point
    }

    pub fn b(&self) -> f64 {
        self.to.point
    }

    pub fn alpha(&self, t: f64) -> f64 {
        self.from.point + self.alpha_slope * t
    }

    pub fn beta(&self, t: f64) -> f64 {
        self.to.point + self.beta_slope * t
    }

    pub fn alpha_inv(&self, x: f64) -> f64 {
        (x - self.from.point) / self.alpha_slope
    }

    pub fn beta_inv(&self, x: f64) -> f64 {
        (x - self.to.point) / self.beta_slope
    }

    /// `ρ(t)`, with the limit `ρ(0)` at `t = 0`.
    pub fn rho(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return self.rho0;
        }
        let ra = self.r.eval(self.alpha(t), self.from.side).abs();
        let rb = self.r.eval(self.beta(t), self.to.side).abs();
        rb / ra
    }

    /// `(α′, β′, ρ(0))`.
    pub fn parameters(&self) -> (f64, f64, f64) {
        (self.alpha_slope, self.beta_slope, self.rho0)
    }

    /// `| |α′| - |β′| ρ(0) |`.
    pub fn margin(&self) -> f64 {
        (self.alpha_slope.abs() - self.beta_slope.abs() * self.rho0).abs()
    }

    /// `|β′| ρ(0)`, the boundary factor of the adjoint transfer operator.
    pub fn adjoint_factor(&self) -> f64 {
        self.beta_slope.abs() * self.rho0
    }
}

/// Builds the connection of `pair.0` to `pair.1` with `|α′| = 1`, `|β′| = c`.
pub fn build_smooth_connection(
    m: &CoefficientModel,
    pair: (HalfNeighborhood, HalfNeighborhood),
    c: f64,
) -> Result<SmoothConnection, CoefficientError> {
    let (ha, hb) = pair;
    if !(c > 0.0) {
        return Err(CoefficientError::NotConnectable(format!("scale {c} must be positive")));
    }
    let (nu_a, ga) = order_at(m, CoeffKind::R, ha.point, ha.side)?;
    let (nu_b, gb) = order_at(m, CoeffKind::R, hb.point, hb.side)?;
    let (mu_a, _) = order_at(m, CoeffKind::P, ha.point, ha.side)?;
    let (mu_b, _) = order_at(m, CoeffKind::P, hb.point, hb.side)?;
    if mu_a != mu_b {
        return Err(CoefficientError::NotConnectable(format!(
            "p has orders {mu_a} and {mu_b} on the two half-neighborhoods"
        )));
    }

    let d = nu_b - nu_a;
    let rho0 = if d == 0.0 {
        c.powf(nu_a) * (gb / ga).abs()
    } else if d < 0.0 {
        return Err(CoefficientError::NotConnectable(format!(
            "ρ is unbounded: order {nu_b} at b is below order {nu_a} at a"
        )));
    } else if d <= 0.5 {
        return Err(CoefficientError::NotConnectable(format!(
            "ρ′ is not square integrable: order difference {d} ≤ 1/2"
        )));
    } else {
        0.0
    };

    let alpha_slope = ha.side.sign();
    let beta_slope = hb.side.sign() * c;
    // Both images stay inside their half-interval and have length < 1/2.
    let eps = DEFAULT_EPS.min(0.49 / c).min(0.49);
    let conn0 = SmoothConnection {
        from: ha,
        to: hb,
        alpha_slope,
        beta_slope,
        eps,
        tau: 1.0,
        rho0,
        nu_a,
        nu_b,
        rho_energy: 0.0,
        r: m.r.clone(),
    };
    for (x, h) in [(conn0.alpha(eps), ha), (conn0.beta(eps), hb)] {
        let half = if h.point == 0.0 { h.side.sign() } else { h.point };
        if !(-1.0..=1.0).contains(&x) || x * half < 0.0 {
            return Err(CoefficientError::NotConnectable(format!(
                "image endpoint {x} leaves the half-interval"
            )));
        }
    }

    // ϖ bound: sampled on (0, ε].
    let samples = 256;
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for k in 1..=samples {
        let t = eps * k as f64 / samples as f64;
        let w = m.p.eval(conn0.beta(t), hb.side) / m.p.eval(conn0.alpha(t), ha.side);
        lo = lo.min(w);
        hi = hi.max(w);
    }
    if !(lo > 0.0 && hi.is_finite()) {
        return Err(CoefficientError::NotConnectable("ϖ is not bounded".into()));
    }
    let tau = 2.0 * hi.max(1.0 / lo);

    let rho_energy = rho_energy(&conn0, m);
    if !rho_energy.is_finite() {
        return Err(CoefficientError::NotConnectable("∫|ρ′|² p(α) diverges".into()));
    }
    let conn = SmoothConnection { tau, rho_energy, ..conn0 };

    // ρ(t)|r(α(t))| = |r(β(t))| and the limit at 0.
    let rho_small = conn.rho(eps * 1e-9);
    if (rho_small - rho0).abs() > 1e-3 * (1.0 + rho0) {
        return Err(CoefficientError::NotConnectable(format!(
            "ρ(t) → {rho_small} does not match the order-model limit {rho0}"
        )));
    }
    Ok(conn)
}

/// Geometric-grid midpoint estimate of `∫₀^ε |ρ′(t)|² p(α(t)) dt`.
fn rho_energy(conn: &SmoothConnection, m: &CoefficientModel) -> f64 {
    let n = 400;
    let t_min = conn.eps * 1e-12;
    let ratio = (conn.eps / t_min).powf(1.0 / n as f64);
    let mut total = 0.0;
    let mut t0 = t_min;
    // Contribution of [0, t_min] for ρ′ ~ t^(d-1): ∫ t^(2d-2) ~ t_min^(2d-1).
    let d = conn.nu_b - conn.nu_a;
    for _ in 0..n {
        let t1 = t0 * ratio;
        let tm = 0.5 * (t0 + t1);
        let drho = (conn.rho(t1) - conn.rho(t0)) / (t1 - t0);
        total += drho * drho * m.p.eval(conn.alpha(tm), conn.from.side) * (t1 - t0);
        t0 = t1;
    }
    if d > 0.0 && d <= 0.5 {
        return f64::INFINITY;
    }
    total
}

/// Outcome of checking a Condition at `0`, `-1` or `1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport {
    pub point: Point,
    pub holds: bool,
    pub connection: Option<SmoothConnection>,
    pub inequality_margin: f64,
    /// One line per attempted pair and scale.
    pub attempts: Vec<String>,
}

/// Default scales tried by [`check_condition_at`].
pub const SEARCH_SCALES: [f64; 2] = [2.0, 0.5];

/// Tries the admissible pairs of half-neighborhoods at `point` with the
/// default scales and returns the first connection with `|α′| ≠ |β′| ρ(0)`.
pub fn check_condition_at(m: &CoefficientModel, point: Point) -> ConditionReport {
    check_condition_with_scales(m, point, &SEARCH_SCALES)
}

pub fn check_condition_with_scales(m: &CoefficientModel, point: Point, scales: &[f64]) -> ConditionReport {
    use Side::{Left, Right};
    let x = point.value();
    let pairs: Vec<(Side, Side)> = match point {
        Point::Zero => vec![(Left, Left), (Left, Right), (Right, Left), (Right, Right)],
        Point::MinusOne => vec![(Right, Right)],
        Point::PlusOne => vec![(Left, Left)],
    };
    let mut attempts = Vec::new();
    let mut best_margin = 0.0f64;
    for (sa, sb) in pairs {
        for &c in scales {
            let pair = (HalfNeighborhood::new(x, sa), HalfNeighborhood::new(x, sb));
            match build_smooth_connection(m, pair, c) {
                Ok(conn) => {
                    let margin = conn.margin();
                    let scale = conn.alpha_slope.abs().max(conn.adjoint_factor());
                    attempts.push(format!("({x}{sa},{x}{sb}) c={c}: margin {margin}"));
                    if margin > 1e-12 * scale {
                        return ConditionReport {
                            point,
                            holds: true,
                            connection: Some(conn),
                            inequality_margin: margin,
                            attempts,
                        };
                    }
                    best_margin = best_margin.max(margin);
                }
                Err(e) => attempts.push(format!("({x}{sa},{x}{sb}) c={c}: {e}")),
            }
        }
    }
    ConditionReport { point, holds: false, connection: None, inequality_margin: best_margin, attempts }
}
