//! Shooting, the characteristic determinant, eigenvalue location by the
//! argument principle, and root vectors.
//!
//! The state is `(u, pu′)`, so only `1/p` needs to be integrable. Steps use
//! the fourth-order Magnus method with step doubling for error control; the
//! coefficient matrix is traceless, so each step has unit determinant and the
//! Wronskian is preserved exactly.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, Matrix2};
use thiserror::Error;

use crate::bc_algebra::{row_dot, BoundaryTriple, Row};
use crate::coefficients::{CoefficientModel, Side};
use crate::grid::{Grid, GridFunction, KreinVector};
use crate::linalg::{c, null_space};
use crate::C64;

pub const DEFAULT_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("integrator step underflow at x = {x} for λ = {lambda}")]
    IntegratorFailure { x: f64, lambda: C64 },
    #[error("winding numbers of a box and its children disagree ({parent} vs {children})")]
    CountMismatch { parent: usize, children: usize },
    #[error("{found} eigenvalues in the region exceed the budget of {max}")]
    Budget { found: usize, max: usize },
    #[error("a zero of the characteristic determinant lies on the contour near {0}")]
    ZeroOnContour(C64),
    #[error("root vectors at λ = {lambda}: {reason}")]
    ChainInconsistency { lambda: C64, reason: String },
}

type M2 = Matrix2<C64>;

/// Fundamental system `u₁` (`u(-1) = 1, pu′(-1) = 0`) and `u₂` (`u(-1) = 0, pu′(-1) = 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct FundamentalData {
    pub lambda: C64,
    /// `b(u₁)`, `b(u₂)` as columns; rows `f(-1), f(1), (pf′)(-1), (pf′)(1)`.
    pub b: [[C64; 2]; 4],
    pub trajectories: Option<Trajectories>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectories {
    pub u1: GridFunction,
    pub u2: GridFunction,
    pub pu1: GridFunction,
    pub pu2: GridFunction,
}

impl FundamentalData {
    /// `b(c₁u₁ + c₂u₂)`.
    pub fn boundary_values(&self, coef: [C64; 2]) -> Row {
        let mut out = [c(0.0); 4];
        for (k, row) in self.b.iter().enumerate() {
            out[k] = row[0] * coef[0] + row[1] * coef[1];
        }
        out
    }

    /// Wronskian `u₁ (pu₂′) − u₂ (pu₁′)` at every node, with the scale
    /// `|u₁ pu₂′| + |u₂ pu₁′|` against which its rounding error is measured.
    pub fn wronskian(&self) -> Option<Vec<(C64, f64)>> {
        self.trajectories.as_ref().map(|t| {
            (0..t.u1.values.len())
                .map(|i| {
                    let (a, b) = (t.u1.values[i] * t.pu2.values[i], t.u2.values[i] * t.pu1.values[i]);
                    (a - b, a.norm() + b.norm())
                })
                .collect()
        })
    }
}

fn coeff_matrix(m: &CoefficientModel, lambda: C64, x: f64, side: Side) -> M2 {
    let p = m.p.eval(x, side);
    let q = m.q.eval(x, side);
    let r = m.r.eval(x, side);
    M2::new(c(0.0), c(1.0 / p), c(q) - lambda * r, c(0.0))
}

/// `exp(Ω)` for traceless `Ω`: `Ω² = −det Ω · I`.
fn expm_traceless(o: &M2) -> M2 {
    let s2 = -o.determinant();
    let (ch, shs) = if s2.norm() < 1e-3 {
        (
            c(1.0) + s2 / 2.0 + s2 * s2 / 24.0 + s2 * s2 * s2 / 720.0,
            c(1.0) + s2 / 6.0 + s2 * s2 / 120.0 + s2 * s2 * s2 / 5040.0,
        )
    } else {
        let s = s2.sqrt();
        (s.cosh(), s.sinh() / s)
    };
    M2::identity() * ch + o * shs
}

fn magnus_step(m: &CoefficientModel, lambda: C64, x: f64, h: f64, side: Side) -> M2 {
    let d = 3f64.sqrt() / 6.0;
    let a1 = coeff_matrix(m, lambda, x + h * (0.5 - d), side);
    let a2 = coeff_matrix(m, lambda, x + h * (0.5 + d), side);
    let comm = a2 * a1 - a1 * a2;
    let omega = (a1 + a2) * c(0.5 * h) + comm * c(3f64.sqrt() / 12.0 * h * h);
    expm_traceless(&omega)
}

fn fro(m: &M2) -> f64 {
    m.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

/// Adaptive integrator for `Y′ = A(x) Y`, `A = [[0, 1/p], [q − λr, 0]]`.
struct Shooter<'a> {
    m: &'a CoefficientModel,
    lambda: C64,
    tol: f64,
    breaks: Vec<f64>,
    h_hint: f64,
}

impl<'a> Shooter<'a> {
    fn new(m: &'a CoefficientModel, lambda: C64, tol: f64) -> Self {
        Shooter { m, lambda, tol, breaks: m.breakpoints(), h_hint: 0.125 }
    }

    fn advance(&mut self, mut y: M2, x0: f64, x1: f64, side: Side) -> Result<M2, SpectralError> {
        let mut stops: Vec<f64> = self.breaks.iter().cloned().filter(|&b| b > x0 && b < x1).collect();
        stops.push(x1);
        let mut x = x0;
        for stop in stops {
            y = self.advance_smooth(y, x, stop, side)?;
            x = stop;
        }
        Ok(y)
    }

    fn advance_smooth(&mut self, mut y: M2, x0: f64, x1: f64, side: Side) -> Result<M2, SpectralError> {
        let mut x = x0;
        while x < x1 {
            let room = x1 - x;
            let clipped = self.h_hint >= room;
            let h = if clipped { room } else { self.h_hint };
            let full = magnus_step(self.m, self.lambda, x, h, side) * y;
            let e1 = magnus_step(self.m, self.lambda, x, 0.5 * h, side);
            let e2 = magnus_step(self.m, self.lambda, x + 0.5 * h, 0.5 * h, side);
            let half = e2 * (e1 * y);
            let err = fro(&(half - full)) / (15.0 * fro(&half).max(1e-300));
            let factor = if err == 0.0 { 4.0 } else { (0.9 * (self.tol / err).powf(0.2)).clamp(0.2, 4.0) };
            if err <= self.tol {
                y = half;
                x = if clipped { x1 } else { x + h };
                let proposal = h * factor;
                self.h_hint = if clipped { self.h_hint.max(proposal) } else { proposal };
            } else {
                self.h_hint = h * factor;
                if self.h_hint < 1e-14 * (1.0 + x.abs()) || !err.is_finite() {
                    return Err(SpectralError::IntegratorFailure { x, lambda: self.lambda });
                }
            }
        }
        Ok(y)
    }
}

fn data_from_end(lambda: C64, y1: &M2, trajectories: Option<Trajectories>) -> FundamentalData {
    let b = [
        [c(1.0), c(0.0)],
        [y1[(0, 0)], y1[(0, 1)]],
        [c(0.0), c(1.0)],
        [y1[(1, 0)], y1[(1, 1)]],
    ];
    FundamentalData { lambda, b, trajectories }
}

/// Integrates from `-1` to `1` and returns the boundary values.
pub fn integrate_fundamental(m: &CoefficientModel, lambda: C64) -> Result<FundamentalData, SpectralError> {
    integrate_fundamental_tol(m, lambda, DEFAULT_TOL)
}

pub fn integrate_fundamental_tol(m: &CoefficientModel, lambda: C64, tol: f64) -> Result<FundamentalData, SpectralError> {
    let mut sh = Shooter::new(m, lambda, tol);
    let y = sh.advance(M2::identity(), -1.0, 0.0, Side::Left)?;
    let y = sh.advance(y, 0.0, 1.0, Side::Right)?;
    Ok(data_from_end(lambda, &y, None))
}

/// Integrates node by node and records `u₁, u₂, pu₁′, pu₂′` on `grid`.
pub fn integrate_fundamental_on(
    m: &CoefficientModel,
    lambda: C64,
    grid: &Arc<Grid>,
) -> Result<FundamentalData, SpectralError> {
    let mut sh = Shooter::new(m, lambda, DEFAULT_TOL);
    let n = grid.len();
    let mut ys = Vec::with_capacity(n);
    let mut y = M2::identity();
    ys.push(y);
    for i in 1..n {
        let (x0, x1) = (grid.nodes[i - 1], grid.nodes[i]);
        if x1 > x0 {
            y = sh.advance(y, x0, x1, grid.side_of(i))?;
        }
        ys.push(y);
    }
    let col = |r: usize, k: usize| GridFunction { grid: grid.clone(), values: ys.iter().map(|y| y[(r, k)]).collect() };
    let traj = Trajectories { u1: col(0, 0), u2: col(0, 1), pu1: col(1, 0), pu2: col(1, 1) };
    Ok(data_from_end(lambda, &ys[n - 1], Some(traj)))
}

/// The 2×2 matrix `[L B; (M − λN) B]`.
pub fn boundary_matrix(t: &BoundaryTriple, fd: &FundamentalData) -> M2 {
    let lam = fd.lambda;
    let mut out = M2::zeros();
    for k in 0..2 {
        let col: Row = [fd.b[0][k], fd.b[1][k], fd.b[2][k], fd.b[3][k]];
        out[(0, k)] = row_dot(&t.l, &col);
        out[(1, k)] = row_dot(&t.m, &col) - lam * row_dot(&t.n, &col);
    }
    out
}

/// `D(λ) = det [L B(λ); (M − λN) B(λ)]`.
pub fn char_det(m: &CoefficientModel, t: &BoundaryTriple, lambda: C64) -> Result<C64, SpectralError> {
    let fd = integrate_fundamental(m, lambda)?;
    Ok(boundary_matrix(t, &fd).determinant())
}

/// `∫ (|r|/p)^{1/2}` by the midpoint rule, which tolerates integrable
/// singularities at the anchors.
pub fn weyl_integral(m: &CoefficientModel) -> f64 {
    let k = 4000;
    let mut integral = 0.0;
    for i in 0..k {
        let x = -1.0 + (i as f64 + 0.5) * 2.0 / k as f64;
        let side = if x < 0.0 { Side::Left } else { Side::Right };
        integral += (m.r.eval(x, side).abs() / m.p.eval(x, side)).sqrt() * 2.0 / k as f64;
    }
    integral
}

/// Axis-parallel rectangle in the complex plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
}

impl Region {
    pub fn new(re_min: f64, re_max: f64, im_min: f64, im_max: f64) -> Self {
        Region { re_min, re_max, im_min, im_max }
    }

    /// `[−Λ, Λ] × [−Λ^{1/2}, Λ^{1/2}]` with `Λ = (π (count + 2) / ∫ (|r|/p)^{1/2})²`,
    /// the Weyl asymptotics of the definite problem. A heuristic only.
    pub fn default_for(m: &CoefficientModel, count: usize) -> Self {
        let lam = (PI * (count as f64 + 2.0) / weyl_integral(m)).powi(2);
        Region::new(-lam, lam, -lam.sqrt(), lam.sqrt())
    }

    fn diameter(&self) -> f64 {
        (self.re_max - self.re_min).hypot(self.im_max - self.im_min)
    }

    fn center(&self) -> C64 {
        C64::new(0.5 * (self.re_min + self.re_max), 0.5 * (self.im_min + self.im_max))
    }

    fn contains(&self, z: C64, slack: f64) -> bool {
        z.re >= self.re_min - slack && z.re <= self.re_max + slack && z.im >= self.im_min - slack && z.im <= self.im_max + slack
    }

    fn corners(&self) -> [C64; 4] {
        [
            C64::new(self.re_min, self.im_min),
            C64::new(self.re_max, self.im_min),
            C64::new(self.re_max, self.im_max),
            C64::new(self.re_min, self.im_max),
        ]
    }

    fn split(&self, fx: f64, fy: f64) -> [Region; 4] {
        let xm = self.re_min + fx * (self.re_max - self.re_min);
        let ym = self.im_min + fy * (self.im_max - self.im_min);
        [
            Region::new(self.re_min, xm, self.im_min, ym),
            Region::new(xm, self.re_max, self.im_min, ym),
            Region::new(self.re_min, xm, ym, self.im_max),
            Region::new(xm, self.re_max, ym, self.im_max),
        ]
    }

    fn expanded(&self, f: f64) -> Region {
        let dx = f * (self.re_max - self.re_min);
        let dy = f * (self.im_max - self.im_min);
        Region::new(self.re_min - dx, self.re_max + dx, self.im_min - dy, self.im_max + dy)
    }
}

/// Memoized `D(λ)`; shared edges of neighboring boxes reuse values.
struct DetEval<'a> {
    m: &'a CoefficientModel,
    t: &'a BoundaryTriple,
    cache: HashMap<(u64, u64), C64>,
    /// `∫ (|r|/p)^{1/2}`; the phase of `D` turns at a rate of about
    /// `weyl / (2 |λ|^{1/2})` per unit of `λ`, which bounds the contour step.
    weyl: f64,
}

impl DetEval<'_> {
    fn eval(&mut self, z: C64) -> Result<C64, SpectralError> {
        let key = (z.re.to_bits(), z.im.to_bits());
        if let Some(v) = self.cache.get(&key) {
            return Ok(*v);
        }
        let v = char_det(self.m, self.t, z)?;
        self.cache.insert(key, v);
        Ok(v)
    }

    fn seg_phase(&mut self, a: C64, da: C64, b: C64, db: C64, depth: u32) -> Result<f64, SpectralError> {
        if da == c(0.0) {
            return Err(SpectralError::ZeroOnContour(a));
        }
        if db == c(0.0) {
            return Err(SpectralError::ZeroOnContour(b));
        }
        let ratio = db / da;
        let dphi = ratio.arg();
        let smooth = |r: C64| r.arg().abs() <= PI / 6.0 && r.norm().ln().abs() <= 1.0;
        if (b - a).norm() < 1e-11 * (1.0 + a.norm()) || depth > 48 {
            return Err(SpectralError::ZeroOnContour(0.5 * (a + b)));
        }
        let mid = (a + b) * 0.5;
        let dm = self.eval(mid)?;
        if dm == c(0.0) {
            return Err(SpectralError::ZeroOnContour(mid));
        }
        // A segment is accepted only when its bisection confirms the increment,
        // which guards against whole turns hiding between two samples.
        let (r1, r2) = (dm / da, db / dm);
        let dense = (b - a).norm() <= PI / 8.0 * 2.0 * (1.0 + mid.norm()).sqrt() / self.weyl;
        if depth >= 4 && dense && smooth(ratio) && smooth(r1) && smooth(r2) && (r1.arg() + r2.arg() - dphi).abs() < 1e-6 {
            return Ok(dphi);
        }
        Ok(self.seg_phase(a, da, mid, dm, depth + 1)? + self.seg_phase(mid, dm, b, db, depth + 1)?)
    }

    fn winding(&mut self, r: &Region) -> Result<usize, SpectralError> {
        let cs = r.corners();
        let ds: Vec<C64> = cs.iter().map(|&z| self.eval(z)).collect::<Result<_, _>>()?;
        let mut total = 0.0;
        for k in 0..4 {
            let j = (k + 1) % 4;
            total += self.seg_phase(cs[k], ds[k], cs[j], ds[j], 0)?;
        }
        let w = total / (2.0 * PI);
        let n = w.round();
        if (w - n).abs() > 1e-3 || n < 0.0 {
            return Err(SpectralError::CountMismatch { parent: 0, children: n.max(0.0) as usize });
        }
        Ok(n as usize)
    }

    fn derivative(&mut self, z: C64) -> Result<C64, SpectralError> {
        let h = 1e-6 * (1.0 + z.norm());
        let (m, t) = (self.m, self.t);
        if z.im == 0.0 && self.real_data() {
            let dp = char_det(m, t, z + h)?;
            let dm = char_det(m, t, z - h)?;
            return Ok((dp - dm) / (2.0 * h));
        }
        let dp = char_det(m, t, z + h)?;
        let dm = char_det(m, t, z - h)?;
        let dip = char_det(m, t, z + C64::new(0.0, h))?;
        let dim = char_det(m, t, z - C64::new(0.0, h))?;
        Ok(((dp - dm) - (dip - dim) * C64::new(0.0, 1.0)) / (4.0 * h))
    }

    fn real_data(&self) -> bool {
        self.t.is_real()
    }

    /// Newton for a zero of multiplicity `mult`.
    fn newton(&mut self, z0: C64, mult: usize) -> Result<Option<C64>, SpectralError> {
        let mut z = z0;
        for _ in 0..80 {
            let d = char_det(self.m, self.t, z)?;
            if d == c(0.0) {
                return Ok(Some(z));
            }
            let dp = self.derivative(z)?;
            if dp == c(0.0) || !dp.is_finite() {
                return Ok(None);
            }
            let step = d / dp * mult as f64;
            z -= step;
            if !z.is_finite() {
                return Ok(None);
            }
            if step.norm() <= 1e-14 * (1.0 + z.norm()) {
                return Ok(Some(z));
            }
        }
        Ok(None)
    }

    fn search(
        &mut self,
        r: Region,
        count: usize,
        depth: u32,
        scale: f64,
        out: &mut Vec<(C64, usize)>,
    ) -> Result<(), SpectralError> {
        if count == 0 {
            return Ok(());
        }
        let slack = 1e-9 * scale;
        if count == 1 {
            if let Some(z) = self.newton(r.center(), 1)? {
                if r.contains(z, slack) {
                    out.push((z, 1));
                    return Ok(());
                }
            }
        }
        if r.diameter() < 1e-6 * (1.0 + r.center().norm()) || depth > 60 {
            let z = self.newton(r.center(), count)?.unwrap_or(r.center());
            out.push((z, count));
            return Ok(());
        }
        let mut last = None;
        for attempt in 0..4 {
            let jitter = 0.0173 * (attempt as f64 + 1.0) * if depth % 2 == 0 { 1.0 } else { -1.0 };
            let kids = r.split(0.5 + jitter, 0.5 + 1.37 * jitter);
            let counts: Result<Vec<usize>, _> = kids.iter().map(|k| self.winding(k)).collect();
            match counts {
                Ok(cs) if cs.iter().sum::<usize>() == count => {
                    for (k, n) in kids.iter().zip(cs) {
                        self.search(*k, n, depth + 1, scale, out)?;
                    }
                    return Ok(());
                }
                Ok(cs) => last = Some(SpectralError::CountMismatch { parent: count, children: cs.iter().sum() }),
                Err(e) => last = Some(e),
            }
        }
        Err(last.expect("at least one attempt"))
    }
}

/// Locates all eigenvalues in `region` with their algebraic multiplicities,
/// sorted by modulus, then argument.
pub fn find_eigenvalues(
    m: &CoefficientModel,
    t: &BoundaryTriple,
    region: Region,
    max_count: usize,
) -> Result<Vec<(C64, usize)>, SpectralError> {
    let mut ev = DetEval { m, t, cache: HashMap::new(), weyl: weyl_integral(m) };
    let mut last = None;
    for k in 0..4 {
        let r = if k == 0 { region } else { region.expanded(1e-3 * k as f64 * 0.731) };
        let count = match ev.winding(&r) {
            Ok(n) => n,
            Err(e @ SpectralError::ZeroOnContour(_)) => {
                last = Some(e);
                continue;
            }
            Err(e) => return Err(e),
        };
        if count > max_count {
            return Err(SpectralError::Budget { found: count, max: max_count });
        }
        let mut out = Vec::new();
        ev.search(r, count, 0, r.diameter(), &mut out)?;
        let mut out = merge_clusters(polish_real(&mut ev, out)?);
        if t.is_real() {
            close_under_conjugation(&mut out);
        }
        out.sort_by(|a, b| a.0.norm().total_cmp(&b.0.norm()).then(a.0.arg().total_cmp(&b.0.arg())));
        return Ok(out);
    }
    Err(last.expect("perturbation attempts exhausted"))
}

fn polish_real(ev: &mut DetEval, roots: Vec<(C64, usize)>) -> Result<Vec<(C64, usize)>, SpectralError> {
    if !ev.real_data() {
        return Ok(roots);
    }
    let mut out = Vec::with_capacity(roots.len());
    for (z, k) in roots {
        if z.im.abs() <= 1e-6 * (1.0 + z.norm()) {
            if let Some(zr) = ev.newton(C64::new(z.re, 0.0), k)? {
                if (zr - z).norm() <= 1e-4 * (1.0 + z.norm()) {
                    out.push((C64::new(zr.re, 0.0), k));
                    continue;
                }
            }
        }
        out.push((z, k));
    }
    Ok(out)
}

/// Zeros closer than the search resolution are one cluster; its location is
/// the mean and its multiplicity the sum.
fn merge_clusters(roots: Vec<(C64, usize)>) -> Vec<(C64, usize)> {
    let mut out: Vec<(C64, usize)> = Vec::new();
    for (z, k) in roots {
        match out.iter_mut().find(|(w, _)| (*w - z).norm() <= 1e-6 * (1.0 + z.norm())) {
            Some((w, n)) => {
                *w = (*w * *n as f64 + z * k as f64) / (*n + k) as f64;
                *n += k;
            }
            None => out.push((z, k)),
        }
    }
    out
}

fn close_under_conjugation(roots: &mut Vec<(C64, usize)>) {
    let mut extra = Vec::new();
    for &(z, k) in roots.iter() {
        if z.im != 0.0 && !roots.iter().any(|&(w, _)| (w - z.conj()).norm() <= 1e-6 * (1.0 + z.norm())) {
            extra.push((z.conj(), k));
        }
    }
    roots.extend(extra);
}

/// Eigenvalue with its root vectors in `L_{2,r} ⊕ C_Δ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDatum {
    pub lambda: C64,
    pub alg_mult: usize,
    pub geo_mult: usize,
    /// Jordan chains `[x₀, x₁, …]` with `(A − λ) x_{k+1} = x_k`.
    pub chains: Vec<Vec<KreinVector>>,
    /// Boundary values `b` of every chain member, in the same layout.
    pub boundary: Vec<Vec<Row>>,
    /// Sign of `[x₀, x₀]` for the first chain head (`0` when neutral).
    pub krein_sign: i8,
}

impl SpectralDatum {
    /// Largest residual of `L b(f) = 0`, `M b(f) = λ N b(f)` (heads) and of the
    /// chain relations `M b(g) = λ N b(g) + N b(f)`, relative to `|b|`.
    pub fn boundary_residual(&self, t: &BoundaryTriple) -> f64 {
        let norm = |b: &Row| b.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt().max(1e-300);
        let mut worst: f64 = 0.0;
        for chain in &self.boundary {
            for (k, b) in chain.iter().enumerate() {
                let l = row_dot(&t.l, b).norm();
                let mut mn = row_dot(&t.m, b) - self.lambda * row_dot(&t.n, b);
                if k > 0 {
                    mn -= row_dot(&t.n, &chain[k - 1]);
                }
                worst = worst.max(l.max(mn.norm()) / norm(b));
            }
        }
        worst
    }

    /// Largest `|z − N b(f)|` over all chain members.
    pub fn z_residual(&self, t: &BoundaryTriple) -> f64 {
        let mut worst: f64 = 0.0;
        for (chain, bs) in self.chains.iter().zip(&self.boundary) {
            for (x, b) in chain.iter().zip(bs) {
                worst = worst.max((x.z - row_dot(&t.n, b)).norm());
            }
        }
        worst
    }

    pub fn vectors(&self) -> impl Iterator<Item = &KreinVector> {
        self.chains.iter().flatten()
    }
}

/// Eigenfunctions at `lambda` by multiple shooting.
///
/// A single shot from `-1` loses the components that decay across a half
/// where the equation is exponential, so the grid is cut into segments on
/// which the propagator stays below a fixed norm. The unknowns are the states
/// `(u, pu′/σ)` at the knots, `σ = (1 + |λ|)^{1/2}`; the rows are continuity
/// across each segment and the two boundary conditions. Its numerical null
/// space gives the eigenfunctions, and its dimension the geometric multiplicity.
fn eigenfunctions(
    m: &CoefficientModel,
    t: &BoundaryTriple,
    lambda: C64,
    grid: &Arc<Grid>,
) -> Result<Vec<(GridFunction, Row)>, SpectralError> {
    let sigma = (1.0 + lambda.norm()).sqrt();
    let dg = M2::new(c(1.0), c(0.0), c(0.0), c(sigma));
    let dg_inv = M2::new(c(1.0), c(0.0), c(0.0), c(1.0 / sigma));
    let mut sh = Shooter::new(m, lambda, DEFAULT_TOL);
    let n = grid.len();
    let mut knots = vec![0usize];
    let mut local = vec![M2::identity(); n];
    let mut y = M2::identity();
    for i in 1..n {
        let (x0, x1) = (grid.nodes[i - 1], grid.nodes[i]);
        if x1 > x0 {
            y = sh.advance(y, x0, x1, grid.side_of(i))?;
        }
        local[i] = y;
        if (fro(&(dg_inv * y * dg)) > 10.0 || i == n - 1) && i != *knots.last().unwrap() {
            knots.push(i);
            y = M2::identity();
        }
    }
    let segs = knots.len() - 1;
    let size = 2 * (segs + 1);
    let mut a = DMatrix::<C64>::zeros(size, size);
    let last = 2 * segs;
    let rows = [t.l, std::array::from_fn(|k| t.m[k] - lambda * t.n[k])];
    for (r, row) in rows.iter().enumerate() {
        let coef = [row[0], row[2] * sigma, row[1], row[3] * sigma];
        let cols = [0, 1, last, last + 1];
        let norm = coef.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        for (cv, &col) in coef.iter().zip(&cols) {
            a[(r, col)] += cv / norm;
        }
    }
    for j in 0..segs {
        let phi = dg_inv * local[knots[j + 1]] * dg;
        let scale = fro(&phi).max(1.0);
        for r in 0..2 {
            for k in 0..2 {
                a[(2 + 2 * j + r, 2 * j + k)] = phi[(r, k)] / scale;
            }
            a[(2 + 2 * j + r, 2 * j + 2 + r)] = c(-1.0 / scale);
        }
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.expect("requested V");
    let sv = &svd.singular_values;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&i, &j| sv[i].total_cmp(&sv[j]));
    if sv[order[0]] > 1e-6 * smax {
        return Err(SpectralError::ChainInconsistency {
            lambda,
            reason: format!("not an eigenvalue: smallest singular value {:e} of {smax:e}", sv[order[0]]),
        });
    }
    let dim = if sv[order[1]] <= 1e-6 * smax { 2 } else { 1 };
    let mut out = Vec::with_capacity(dim);
    for &k in &order[..dim] {
        let v: Vec<C64> = v_t.row(k).iter().map(|z| z.conj()).collect();
        let state = |j: usize| dg * nalgebra::Vector2::new(v[2 * j], v[2 * j + 1]);
        let mut values = vec![c(0.0); n];
        let mut seg = 0;
        for (i, val) in values.iter_mut().enumerate() {
            if i > 0 && seg + 1 < segs && i > knots[seg + 1] {
                seg += 1;
            }
            let s0 = state(seg);
            *val = if i == knots[seg] { s0[0] } else { (local[i] * s0)[0] };
        }
        let (s0, s1) = (state(0), state(segs));
        out.push((GridFunction { grid: grid.clone(), values }, [s0[0], s1[0], s0[1], s1[1]]));
    }
    Ok(out)
}

/// Eigenvectors and Jordan chains at an eigenvalue of algebraic multiplicity
/// `alg_mult`, sampled on `grid`. Chains are scaled so that each head has unit
/// Hilbert norm and its first nonzero boundary value is positive real.
pub fn root_subspace(
    m: &CoefficientModel,
    t: &BoundaryTriple,
    lambda: C64,
    alg_mult: usize,
    grid: &Arc<Grid>,
) -> Result<SpectralDatum, SpectralError> {
    let inconsistent = |reason: String| SpectralError::ChainInconsistency { lambda, reason };
    let heads = eigenfunctions(m, t, lambda, grid)?;
    let geo = heads.len();
    if geo > alg_mult {
        return Err(inconsistent(format!("geometric multiplicity {geo} exceeds algebraic {alg_mult}")));
    }
    let (chains_coef, chains_b): (Vec<Vec<GridFunction>>, Vec<Vec<Row>>) = if geo == alg_mult {
        heads.into_iter().map(|(f, b)| (vec![f], vec![b])).unzip()
    } else if geo == 1 {
        let (fs, bs) = jordan_chain(m, t, lambda, alg_mult, grid)?;
        (vec![fs], vec![bs])
    } else {
        return Err(inconsistent(format!("geometric multiplicity 2 with algebraic multiplicity {alg_mult} is not supported")));
    };
    let mut chains = Vec::new();
    let mut boundary = Vec::new();
    for (fs, bs) in chains_coef.into_iter().zip(chains_b) {
        let zs: Vec<C64> = bs.iter().map(|b| row_dot(&t.n, b)).collect();
        let head = KreinVector::new(fs[0].clone(), zs[0]);
        let norm = head.hilbert_norm(t.delta);
        if !(norm > 0.0) {
            return Err(inconsistent("zero eigenvector".into()));
        }
        let lead = bs[0].iter().find(|v| v.norm() > 1e-8 * bs[0].iter().map(|w| w.norm()).fold(0.0, f64::max)).cloned();
        let phase = lead.map(|v| v.conj() / v.norm()).unwrap_or(c(1.0));
        let k = phase / norm;
        chains.push(fs.iter().zip(&zs).map(|(f, z)| KreinVector::new(f.scale(k), z * k)).collect::<Vec<_>>());
        boundary.push(bs.iter().map(|b| b.map(|v| v * k)).collect::<Vec<_>>());
    }
    let total: usize = chains.iter().map(|ch: &Vec<KreinVector>| ch.len()).sum();
    if total != alg_mult {
        return Err(inconsistent(format!("chain lengths sum to {total}, winding gave {alg_mult}")));
    }
    let h0 = &chains[0][0];
    let kk = h0.krein_inner(h0, t.delta).re;
    let krein_sign = if kk.abs() <= 1e-8 { 0 } else if kk > 0.0 { 1 } else { -1 };
    Ok(SpectralDatum { lambda, alg_mult, geo_mult: geo, chains, boundary, krein_sign })
}

/// Chain of length `len` from the Taylor coefficients of the shooting data,
/// computed by Cauchy integrals on a circle around `lambda`.
fn jordan_chain(
    m: &CoefficientModel,
    t: &BoundaryTriple,
    lambda: C64,
    len: usize,
    grid: &Arc<Grid>,
) -> Result<(Vec<GridFunction>, Vec<Row>), SpectralError> {
    let npts = 32;
    let radius = 0.05 * (1.0 + lambda.norm()).sqrt();
    let mut samples = Vec::with_capacity(npts);
    for k in 0..npts {
        let w = C64::from_polar(1.0, 2.0 * PI * k as f64 / npts as f64);
        samples.push((w, integrate_fundamental_on(m, lambda + w * radius, grid)?));
    }
    // Taylor coefficients: X_j = (1/N) Σ X(λ + ρw_k) w_k^{-j} / ρ^j.
    let taylor = |j: usize, f: &dyn Fn(&FundamentalData) -> C64| -> C64 {
        let s: C64 = samples.iter().map(|(w, fd)| f(fd) * w.powi(-(j as i32))).sum();
        s / npts as f64 / radius.powi(j as i32)
    };
    let cj: Vec<M2> = (0..len)
        .map(|j| {
            let mut out = M2::zeros();
            for r in 0..2 {
                for k in 0..2 {
                    out[(r, k)] = taylor(j, &|fd| boundary_matrix(t, fd)[(r, k)]);
                }
            }
            out
        })
        .collect();
    let size = 2 * len;
    let toeplitz = DMatrix::from_fn(size, size, |i, j| {
        let (bi, bj) = (i / 2, j / 2);
        if bj > bi {
            c(0.0)
        } else {
            cj[bi - bj][(i % 2, j % 2)]
        }
    });
    let ns = null_space(&toeplitz, 1e-6);
    let v = ns
        .iter()
        .max_by(|a, b| (a[0].norm() + a[1].norm()).total_cmp(&(b[0].norm() + b[1].norm())))
        .ok_or_else(|| SpectralError::ChainInconsistency {
            lambda,
            reason: format!("no root function of length {len}"),
        })?;
    if v[0].norm() + v[1].norm() < 1e-8 {
        return Err(SpectralError::ChainInconsistency { lambda, reason: "root function has zero head".into() });
    }
    let coef: Vec<[C64; 2]> = (0..len).map(|j| [v[2 * j], v[2 * j + 1]]).collect();
    let n = grid.len();
    let traj_taylor = |j: usize, pick: &dyn Fn(&Trajectories, usize) -> C64| -> Vec<C64> {
        (0..n)
            .map(|i| {
                let s: C64 = samples
                    .iter()
                    .map(|(w, fd)| pick(fd.trajectories.as_ref().unwrap(), i) * w.powi(-(j as i32)))
                    .sum();
                s / npts as f64 / radius.powi(j as i32)
            })
            .collect()
    };
    let u1j: Vec<Vec<C64>> = (0..len).map(|j| traj_taylor(j, &|tr, i| tr.u1.values[i])).collect();
    let u2j: Vec<Vec<C64>> = (0..len).map(|j| traj_taylor(j, &|tr, i| tr.u2.values[i])).collect();
    let bj: Vec<[[C64; 2]; 4]> = (0..len)
        .map(|j| {
            let mut b = [[c(0.0); 2]; 4];
            for (r, row) in b.iter_mut().enumerate() {
                for (k, v) in row.iter_mut().enumerate() {
                    *v = taylor(j, &|fd| fd.b[r][k]);
                }
            }
            b
        })
        .collect();
    let mut fs = Vec::with_capacity(len);
    let mut bs = Vec::with_capacity(len);
    for k in 0..len {
        let mut vals = vec![c(0.0); n];
        let mut b = [c(0.0); 4];
        for j in 0..=k {
            let cc = coef[k - j];
            for i in 0..n {
                vals[i] += u1j[j][i] * cc[0] + u2j[j][i] * cc[1];
            }
            for (r, bv) in b.iter_mut().enumerate() {
                *bv += bj[j][r][0] * cc[0] + bj[j][r][1] * cc[1];
            }
        }
        fs.push(GridFunction { grid: grid.clone(), values: vals });
        bs.push(b);
    }
    Ok((fs, bs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bc_algebra::{real_row, validate_triple};
    use crate::grid::Rule;

    fn oracle_triple() -> BoundaryTriple {
        validate_triple(real_row([1.0, 0.0, 0.0, 0.0]), real_row([0.0, 0.0, 0.0, 1.0]), real_row([0.0, 1.0, 0.0, 0.0]), 1e-10).unwrap()
    }

    #[test]
    fn linear_solution_at_zero() {
        let fd = integrate_fundamental(&CoefficientModel::unit_weight(), c(0.0)).unwrap();
        let b = fd.boundary_values([c(0.0), c(1.0)]);
        let expect = [0.0, 2.0, 1.0, 1.0];
        for k in 0..4 {
            assert!((b[k] - c(expect[k])).norm() < 1e-12);
        }
    }

    #[test]
    fn cosine_solution() {
        let w = PI / 2.0;
        let fd = integrate_fundamental(&CoefficientModel::unit_weight(), c(w * w)).unwrap();
        let b = fd.boundary_values([c(1.0), c(0.0)]);
        let expect = [1.0, -1.0, 0.0, 0.0];
        for k in 0..4 {
            assert!((b[k] - c(expect[k])).norm() < 1e-12, "{k}: {}", b[k]);
        }
    }

    #[test]
    fn wronskian_is_one() {
        let m = CoefficientModel::sign_weight();
        let g = Grid::new(&m, 64, Rule::Boole);
        let fd = integrate_fundamental_on(&m, C64::new(3.0, 2.0), &g).unwrap();
        for (w, scale) in fd.wronskian().unwrap() {
            assert!((w - c(1.0)).norm() < 1e-8 * scale);
        }
        let m = CoefficientModel::power_weight(1.0);
        let fd = integrate_fundamental_on(&m, C64::new(30.0, -2.0), &g).unwrap();
        for (w, scale) in fd.wronskian().unwrap() {
            assert!((w - c(1.0)).norm() < 1e-8 * scale);
        }
    }

    #[test]
    fn closed_form_determinant() {
        let m = CoefficientModel::unit_weight();
        let t = oracle_triple();
        for w in [0.3, 1.1, 2.5, 7.0] {
            let d = char_det(&m, &t, c(w * w)).unwrap();
            let exact = (2.0 * w).cos() - w * (2.0 * w).sin();
            assert!((d - c(exact)).norm() < 1e-10 * (1.0 + w), "{w}: {d} vs {exact}");
            assert_eq!(d.im, 0.0);
        }
        assert!((char_det(&m, &t, c(0.0)).unwrap() - c(1.0)).norm() < 1e-14);
    }

    #[test]
    fn empty_and_simple_regions() {
        let m = CoefficientModel::unit_weight();
        let t = oracle_triple();
        assert!(find_eigenvalues(&m, &t, Region::new(-5.0, -1.0, -1.0, 1.0), 10).unwrap().is_empty());
        let ev = find_eigenvalues(&m, &t, Region::new(-1.0, 1.0, -0.5, 0.5), 10).unwrap();
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].0.im, 0.0);
        let w = ev[0].0.re.sqrt();
        assert!((1.0 / (2.0 * w).tan() - w).abs() < 1e-10);
        assert!(matches!(
            find_eigenvalues(&m, &t, Region::new(-1.0, 100.0, -1.0, 1.0), 2),
            Err(SpectralError::Budget { .. })
        ));
    }

    #[test]
    fn eigenvector_satisfies_boundary_conditions() {
        let m = CoefficientModel::sign_weight();
        let t = oracle_triple();
        let g = Grid::new(&m, 64, Rule::Boole);
        let ev = find_eigenvalues(&m, &t, Region::new(-30.0, 30.0, -3.0, 3.0), 50).unwrap();
        assert!(!ev.is_empty());
        for (lam, k) in ev {
            let d = root_subspace(&m, &t, lam, k, &g).unwrap();
            assert!(d.boundary_residual(&t) < 1e-8, "{lam}: {}", d.boundary_residual(&t));
            assert!(d.z_residual(&t) < 1e-12);
            assert!((d.chains[0][0].hilbert_norm(t.delta) - 1.0).abs() < 1e-12);
        }
    }
}

