//! Linear algebra of the boundary data.
//!
//! The boundary rows `L`, `M`, `N` act on `b(f) = (f(-1), f(1), (pf')(-1), (pf')(1))`.
//! Green's identity for the maximal operator reads
//! `∫ (ℓf) ḡ r - ∫ f (ℓḡ) r = i b(g)* Q b(f)` with the concomitant matrix `Q`.

use std::collections::BTreeSet;
use std::fmt;

use nalgebra::{DMatrix, Matrix4};
use thiserror::Error;

use crate::C64;

/// A boundary row acting on `b(f)`.
pub type Row = [C64; 4];

/// Default relative tolerance for the Q-form identities.
pub const DEFAULT_TOL: f64 = 1e-10;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QForm {
    LQL,
    MQM,
    NQN,
    LQM,
    LQN,
}

impl fmt::Display for QForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            QForm::LQL => "L Q L*",
            QForm::MQM => "M Q M*",
            QForm::NQN => "N Q N*",
            QForm::LQM => "L Q M*",
            QForm::LQN => "L Q N*",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BcError {
    #[error("a boundary row is zero")]
    ZeroRow,
    #[error("stacked rows [L; M; N] have rank {rank} < 3")]
    RankDeficient { rank: usize },
    #[error("{identity} = {residual:e} (relative) violates the self-adjointness identities")]
    QFormViolation { identity: QForm, residual: f64 },
    #[error("i M Q^-1 N* = {value} is not a nonzero real number")]
    DeltaNotRealNonzero { value: C64 },
}

/// The concomitant matrix `Q = i [[0,0,-1,0],[0,0,0,1],[1,0,0,0],[0,-1,0,0]]`.
pub fn concomitant_matrix() -> Matrix4<C64> {
    #[rustfmt::skip]
    let q = Matrix4::new(
        ZERO, ZERO, -I,   ZERO,
        ZERO, ZERO, ZERO, I,
        I,    ZERO, ZERO, ZERO,
        ZERO, -I,   ZERO, ZERO,
    );
    q
}

/// `Q v` without building the matrix.
fn q_apply(v: &Row) -> Row {
    [-I * v[2], I * v[3], I * v[0], -I * v[1]]
}

/// The sesquilinear form `a Q b*`.
pub fn q_form(a: &Row, b: &Row) -> C64 {
    let bc = [b[0].conj(), b[1].conj(), b[2].conj(), b[3].conj()];
    let qb = q_apply(&bc);
    a.iter().zip(qb.iter()).map(|(x, y)| x * y).sum()
}

pub fn row_norm(a: &Row) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `a · v` for a row and a column vector.
pub fn row_dot(a: &Row, v: &Row) -> C64 {
    a.iter().zip(v.iter()).map(|(x, y)| x * y).sum()
}

pub fn row_scale(a: &Row, c: C64) -> Row {
    [a[0] * c, a[1] * c, a[2] * c, a[3] * c]
}

pub fn row_axpy(a: &Row, c: C64, b: &Row) -> Row {
    [a[0] + c * b[0], a[1] + c * b[1], a[2] + c * b[2], a[3] + c * b[3]]
}

pub fn real_row(v: [f64; 4]) -> Row {
    v.map(|x| C64::new(x, 0.0))
}

/// Residuals of the five Q-form identities, relative to the row norms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QFormResiduals {
    pub lql: f64,
    pub mqm: f64,
    pub nqn: f64,
    pub lqm: f64,
    pub lqn: f64,
}

impl QFormResiduals {
    pub fn max(&self) -> f64 {
        self.lql.max(self.mqm).max(self.nqn).max(self.lqm).max(self.lqn)
    }

    fn entries(&self) -> [(QForm, f64); 5] {
        [
            (QForm::LQL, self.lql),
            (QForm::MQM, self.mqm),
            (QForm::NQN, self.nqn),
            (QForm::LQM, self.lqm),
            (QForm::LQN, self.lqn),
        ]
    }
}

pub fn q_form_residuals(l: &Row, m: &Row, n: &Row) -> QFormResiduals {
    let rel = |a: &Row, b: &Row| q_form(a, b).norm() / (row_norm(a) * row_norm(b)).max(f64::MIN_POSITIVE);
    QFormResiduals {
        lql: rel(l, l),
        mqm: rel(m, m),
        nqn: rel(n, n),
        lqm: rel(l, m),
        lqn: rel(l, n),
    }
}

/// Boundary rows that passed validation, together with `Δ = -i / (M Q⁻¹ N*)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryTriple {
    pub l: Row,
    pub m: Row,
    pub n: Row,
    pub delta: f64,
    /// `M Q⁻¹ N*` as computed.
    pub mqn: C64,
    pub residuals: QFormResiduals,
    pub rank: usize,
}

impl BoundaryTriple {
    pub fn sign_delta(&self) -> f64 {
        self.delta.signum()
    }

    /// True when all three rows are real (up to roundoff), so that the
    /// spectrum of a problem with real coefficients is conjugate-symmetric.
    pub fn is_real(&self) -> bool {
        [&self.l, &self.m, &self.n]
            .iter()
            .all(|r| r.iter().all(|z| z.im.abs() <= 1e-14 * (1.0 + z.re.abs())))
    }
}

fn numerical_rank(rows: &[&Row], tol: f64) -> usize {
    let m = DMatrix::from_fn(rows.len(), 4, |i, j| rows[i][j]);
    let sv = m.singular_values();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > tol.max(1e-14) * smax).count()
}

/// Checks rank, the Q-form identities and the reality of `i M Q⁻¹ N*`.
/// Tolerances are relative to the row norms.
pub fn validate_triple(l: Row, m: Row, n: Row, tol: f64) -> Result<BoundaryTriple, BcError> {
    if [&l, &m, &n].iter().any(|r| row_norm(r) == 0.0) {
        return Err(BcError::ZeroRow);
    }
    let rank = numerical_rank(&[&l, &m, &n], tol);
    if rank < 3 {
        return Err(BcError::RankDeficient { rank });
    }
    let residuals = q_form_residuals(&l, &m, &n);
    for (identity, residual) in residuals.entries() {
        if residual > tol {
            return Err(BcError::QFormViolation { identity, residual });
        }
    }
    // Q⁻¹ = Q.
    let mqn = q_form(&m, &n);
    let value = I * mqn;
    let scale = row_norm(&m) * row_norm(&n);
    if value.norm() <= tol * scale || value.im.abs() > tol * scale {
        return Err(BcError::DeltaNotRealNonzero { value });
    }
    let delta = (-I / mqn).re;
    Ok(BoundaryTriple { l, m, n, delta, mqn, residuals, rank })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FormDomainCase {
    /// `L_n ≠ 0`, `N_n ≠ 0`.
    FD1,
    /// `L_n = 0`, `N_n ≠ 0`.
    FD2,
    /// `L_n ≠ 0`, `N_n = 0`.
    FD3,
    /// `L_n = 0`, `N_n = 0`.
    FD4,
}

impl FormDomainCase {
    pub fn from_patterns(l_n_zero: bool, n_n_zero: bool) -> Self {
        match (l_n_zero, n_n_zero) {
            (false, false) => FormDomainCase::FD1,
            (true, false) => FormDomainCase::FD2,
            (false, true) => FormDomainCase::FD3,
            (true, true) => FormDomainCase::FD4,
        }
    }

    /// The form domain constrains `L_e b_e(f) = 0`.
    pub fn constrains_l(self) -> bool {
        matches!(self, FormDomainCase::FD2 | FormDomainCase::FD4)
    }

    /// The form domain ties `z = N_e b_e(f)`.
    pub fn ties_z(self) -> bool {
        matches!(self, FormDomainCase::FD3 | FormDomainCase::FD4)
    }
}

impl fmt::Display for FormDomainCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self)
    }
}

/// Essential/non-essential split of the reduced rows.
#[derive(Debug, Clone, PartialEq)]
pub struct EchelonSplit {
    /// Reduced rows; `L` and `N` differ from the input only by a scalar factor.
    pub l: Row,
    pub m: Row,
    pub n: Row,
    pub l_e: [C64; 2],
    pub l_n: [C64; 2],
    pub n_e: [C64; 2],
    pub n_n: [C64; 2],
    pub form_domain_case: FormDomainCase,
}

fn last_nonzero(r: &Row, tol: f64) -> Option<usize> {
    let scale = row_norm(r);
    (0..4).rev().find(|&k| r[k].norm() > tol * scale)
}

fn is_zero_pair(pair: &[C64; 2], scale: f64, tol: f64) -> bool {
    pair.iter().all(|z| z.norm() <= tol * scale)
}

/// Row reduction of `[[L, 0], [M, N]]` from the bottom-right corner.
///
/// `(M, N)` is scaled so the last nonzero entry of `N` is 1, `L` so its last
/// nonzero entry is 1, and `M` is reduced modulo `L` so it vanishes in `L`'s
/// pivot column. None of this changes the boundary value problem.
pub fn reduce_and_split(t: &BoundaryTriple) -> EchelonSplit {
    reduce_and_split_tol(t, DEFAULT_TOL)
}

pub fn reduce_and_split_tol(t: &BoundaryTriple, tol: f64) -> EchelonSplit {
    let kn = last_nonzero(&t.n, tol).expect("validated N is nonzero");
    let cn = ONE / t.n[kn];
    let n = row_scale(&t.n, cn);
    let mut m = row_scale(&t.m, cn);
    let kl = last_nonzero(&t.l, tol).expect("validated L is nonzero");
    let l = row_scale(&t.l, ONE / t.l[kl]);
    m = row_axpy(&m, -m[kl], &l);
    m[kl] = ZERO;

    let l_e = [l[0], l[1]];
    let l_n = [l[2], l[3]];
    let n_e = [n[0], n[1]];
    let n_n = [n[2], n[3]];
    let case = FormDomainCase::from_patterns(
        is_zero_pair(&l_n, row_norm(&l), tol),
        is_zero_pair(&n_n, row_norm(&n), tol),
    );
    EchelonSplit { l, m, n, l_e, l_n, n_e, n_n, form_domain_case: case }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Theorem {
    /// Condition at 0 alone suffices.
    Thm6_1,
    /// `N_n ≠ 0`, `L = [u v 0 0]`: Condition at 0 plus either endpoint condition.
    Thm6_2,
    /// `N_n = 0`: Condition at 0 plus the endpoint condition selected by `sgn Δ`.
    Thm6_3,
    None,
}

impl fmt::Display for Theorem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Theorem::Thm6_1 => "Thm6_1",
            Theorem::Thm6_2 => "Thm6_2",
            Theorem::Thm6_3 => "Thm6_3",
            Theorem::None => "None",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RequiredCondition {
    At0,
    AtMinus1,
    AtPlus1,
    AtMinus1OrAtPlus1,
}

impl fmt::Display for RequiredCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RequiredCondition::At0 => "At0",
            RequiredCondition::AtMinus1 => "AtMinus1",
            RequiredCondition::AtPlus1 => "AtPlus1",
            RequiredCondition::AtMinus1OrAtPlus1 => "AtMinus1_or_AtPlus1",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationReport {
    pub theorem: Theorem,
    pub matched_case: String,
    pub required_conditions: BTreeSet<RequiredCondition>,
    pub sign_delta: i8,
}

/// True when `row` is a nonzero multiple of the unit row `e_k`.
fn proportional_to_unit(row: &Row, k: usize, tol: f64) -> bool {
    let scale = row_norm(row);
    row[k].norm() > tol * scale && (0..4).filter(|&j| j != k).all(|j| row[j].norm() <= tol * scale)
}

/// First applicable theorem in the order `Thm6_1 > Thm6_2 > Thm6_3`.
/// Row patterns are matched up to nonzero scalar multiples.
pub fn classify_theorem(split: &EchelonSplit, t: &BoundaryTriple) -> ClassificationReport {
    let tol = DEFAULT_TOL;
    let sign_delta: i8 = if t.delta > 0.0 { 1 } else { -1 };
    let l_n_zero = !matches!(split.form_domain_case, FormDomainCase::FD1 | FormDomainCase::FD3);
    let n_n_zero = split.form_domain_case.ties_z();

    let b_case = if !l_n_zero {
        Some("b-i")
    } else if proportional_to_unit(&split.l, 0, tol) {
        Some("b-ii")
    } else if proportional_to_unit(&split.l, 1, tol) {
        Some("b-iii")
    } else {
        None
    };
    let c_case = if !n_n_zero {
        Some("c-i")
    } else if proportional_to_unit(&split.n, 0, tol) && t.delta < 0.0 {
        Some("c-ii")
    } else if proportional_to_unit(&split.n, 1, tol) && t.delta > 0.0 {
        Some("c-iii")
    } else {
        None
    };

    let (theorem, matched_case, required) = match (b_case, c_case) {
        (Some(b), Some(c)) => (
            Theorem::Thm6_1,
            format!("({b})+({c})"),
            vec![RequiredCondition::At0],
        ),
        _ => {
            let scale = row_norm(&split.l);
            let uv_form = l_n_zero
                && split.l[0].norm() > tol * scale
                && split.l[1].norm() > tol * scale;
            if !n_n_zero && uv_form {
                (
                    Theorem::Thm6_2,
                    "(b)N_n!=0+(c)L=[u v 0 0],uv!=0".to_string(),
                    vec![RequiredCondition::At0, RequiredCondition::AtMinus1OrAtPlus1],
                )
            } else if n_n_zero {
                if t.delta > 0.0 {
                    (
                        Theorem::Thm6_3,
                        "(a-i)N_n=0,Delta>0".to_string(),
                        vec![RequiredCondition::At0, RequiredCondition::AtMinus1],
                    )
                } else {
                    (
                        Theorem::Thm6_3,
                        "(a-ii)N_n=0,Delta<0".to_string(),
                        vec![RequiredCondition::At0, RequiredCondition::AtPlus1],
                    )
                }
            } else {
                (Theorem::None, "none".to_string(), vec![])
            }
        }
    };
    ClassificationReport {
        theorem,
        matched_case,
        required_conditions: required.into_iter().collect(),
        sign_delta,
    }
}
