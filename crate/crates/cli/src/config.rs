//! Sectioned key-value problem files.
//!
//! ```text
//! [coefficients]
//! p.piece = interval=(-1,1) anchor=0 order=0 factor=poly:1
//! r.piece = interval=(-1,0) anchor=0 order=1 factor=poly:-1
//! r.piece = interval=(0,1) anchor=0 order=1 factor=poly:1
//! [bc]
//! L = 1 0 0 0
//! M = 0 0 0 1+2i
//! ```
//!
//! Omitted `p` and `q` default to `1` and `0`. `#` starts a comment.

use std::fmt::Write as _;
use std::path::PathBuf;

use indefsl_core::coefficients::Poly;
use indefsl_core::{Coefficient, CoefficientModel, Piece, Row, C64};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("missing key {0}")]
    Missing(String),
    #[error("invalid coefficient model: {0}")]
    Model(String),
    #[error("cannot read {path}: {msg}")]
    Io { path: String, msg: String },
}

#[derive(Debug, Clone, PartialEq)]
pub enum RegionSpec {
    /// Weyl heuristic for `count` eigenvalues.
    Auto,
    Rect { re_min: f64, re_max: f64, im_min: f64, im_max: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum GridRule {
    Auto,
    Open,
    Trapezoid,
    Boole,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemConfig {
    pub p: Vec<Piece>,
    pub q: Vec<Piece>,
    pub r: Vec<Piece>,
    /// Skip the sign condition `x r(x) > 0` (definite test problems).
    pub unchecked: bool,
    pub allow_p_order: bool,
    pub l: Row,
    pub m: Row,
    pub n: Row,
    pub bc_tol: f64,
    pub count: usize,
    pub region: RegionSpec,
    pub max_eigs: usize,
    pub sections: Vec<usize>,
    pub fem_elements: usize,
    pub grid_n: usize,
    pub rule: GridRule,
    pub w_grid_n: usize,
    pub w_samples: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        ProblemConfig {
            p: vec![Piece::constant(-1.0, 1.0, 1.0)],
            q: vec![Piece::constant(-1.0, 1.0, 0.0)],
            r: Vec::new(),
            unchecked: false,
            allow_p_order: false,
            l: [C64::new(0.0, 0.0); 4],
            m: [C64::new(0.0, 0.0); 4],
            n: [C64::new(0.0, 0.0); 4],
            bc_tol: 1e-10,
            count: 30,
            region: RegionSpec::Auto,
            max_eigs: 200,
            sections: vec![5, 10, 15, 20, 25, 30],
            fem_elements: 0,
            grid_n: 512,
            rule: GridRule::Auto,
            w_grid_n: 128,
            w_samples: 32,
            seed: 0,
            out_dir: PathBuf::from("out"),
        }
    }
}

impl ProblemConfig {
    pub fn model(&self) -> Result<CoefficientModel, ConfigError> {
        let coef = |name: &str, pieces: &[Piece]| {
            Coefficient::new(pieces.to_vec()).map_err(|e| ConfigError::Model(format!("{name}: {e}")))
        };
        let model = CoefficientModel {
            p: coef("p", &self.p)?,
            q: coef("q", &self.q)?,
            r: coef("r", &self.r)?,
            allow_p_order: self.allow_p_order,
        };
        if !self.unchecked {
            model.validate().map_err(|e| ConfigError::Model(e.to_string()))?;
        }
        Ok(model)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.display().to_string(), msg: e.to_string() })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = ProblemConfig::default();
        let (mut p, mut q, mut r) = (Vec::new(), Vec::new(), Vec::new());
        let mut section = String::new();
        let mut seen = std::collections::BTreeSet::new();
        for (k, raw) in text.lines().enumerate() {
            let line_no = k + 1;
            let err = |msg: String| ConfigError::Syntax { line: line_no, msg };
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                section = name.trim().to_string();
                if !["coefficients", "bc", "solve", "grid", "output"].contains(&section.as_str()) {
                    return Err(err(format!("unknown section [{section}]")));
                }
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| err("expected key = value".into()))?;
            let (key, value) = (key.trim(), value.trim());
            seen.insert(format!("{section}.{key}"));
            match (section.as_str(), key) {
                ("coefficients", "p.piece") => p.push(parse_piece(value).map_err(err)?),
                ("coefficients", "q.piece") => q.push(parse_piece(value).map_err(err)?),
                ("coefficients", "r.piece") => r.push(parse_piece(value).map_err(err)?),
                ("coefficients", "unchecked") => cfg.unchecked = parse_bool(value).map_err(err)?,
                ("coefficients", "allow_p_order") => cfg.allow_p_order = parse_bool(value).map_err(err)?,
                ("bc", "L") => cfg.l = parse_row(value).map_err(err)?,
                ("bc", "M") => cfg.m = parse_row(value).map_err(err)?,
                ("bc", "N") => cfg.n = parse_row(value).map_err(err)?,
                ("bc", "tol") => cfg.bc_tol = parse_num(value).map_err(err)?,
                ("solve", "count") => cfg.count = parse_num(value).map_err(err)?,
                ("solve", "max_eigs") => cfg.max_eigs = parse_num(value).map_err(err)?,
                ("solve", "fem_elements") => cfg.fem_elements = parse_num(value).map_err(err)?,
                ("solve", "sections") => {
                    cfg.sections = value.split_whitespace().map(parse_num).collect::<Result<_, _>>().map_err(err)?
                }
                ("solve", "region") => cfg.region = parse_region(value).map_err(err)?,
                ("grid", "n") => cfg.grid_n = parse_num(value).map_err(err)?,
                ("grid", "rule") => cfg.rule = parse_rule(value).map_err(err)?,
                ("grid", "w_n") => cfg.w_grid_n = parse_num(value).map_err(err)?,
                ("grid", "w_samples") => cfg.w_samples = parse_num(value).map_err(err)?,
                ("grid", "seed") => cfg.seed = parse_num(value).map_err(err)?,
                ("output", "dir") => cfg.out_dir = PathBuf::from(value),
                _ => return Err(err(format!("unknown key {key} in [{section}]"))),
            }
        }
        if r.is_empty() {
            return Err(ConfigError::Missing("coefficients.r.piece".into()));
        }
        for key in ["bc.L", "bc.M", "bc.N"] {
            if !seen.contains(key) {
                return Err(ConfigError::Missing(key.into()));
            }
        }
        if !p.is_empty() {
            cfg.p = p;
        }
        if !q.is_empty() {
            cfg.q = q;
        }
        cfg.r = r;
        Ok(cfg)
    }

    /// Canonical text form; `parse(emit(c)) == c`.
    pub fn emit(&self) -> String {
        let mut s = String::from("[coefficients]\n");
        for (name, pieces) in [("p", &self.p), ("q", &self.q), ("r", &self.r)] {
            for piece in pieces {
                let _ = writeln!(s, "{name}.piece = {}", emit_piece(piece));
            }
        }
        let _ = writeln!(s, "unchecked = {}", self.unchecked);
        let _ = writeln!(s, "allow_p_order = {}", self.allow_p_order);
        s.push_str("\n[bc]\n");
        for (name, row) in [("L", &self.l), ("M", &self.m), ("N", &self.n)] {
            let _ = writeln!(s, "{name} = {}", row.iter().map(|&z| emit_complex(z)).collect::<Vec<_>>().join(" "));
        }
        let _ = writeln!(s, "tol = {}", self.bc_tol);
        s.push_str("\n[solve]\n");
        let _ = writeln!(s, "count = {}", self.count);
        let _ = writeln!(s, "max_eigs = {}", self.max_eigs);
        let _ = writeln!(s, "fem_elements = {}", self.fem_elements);
        let _ = writeln!(s, "sections = {}", self.sections.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(" "));
        let region = match &self.region {
            RegionSpec::Auto => "auto".to_string(),
            RegionSpec::Rect { re_min, re_max, im_min, im_max } => format!("{re_min} {re_max} {im_min} {im_max}"),
        };
        let _ = writeln!(s, "region = {region}");
        s.push_str("\n[grid]\n");
        let _ = writeln!(s, "n = {}", self.grid_n);
        let rule = match self.rule {
            GridRule::Auto => "auto",
            GridRule::Open => "open",
            GridRule::Trapezoid => "trapezoid",
            GridRule::Boole => "boole",
        };
        let _ = writeln!(s, "rule = {rule}");
        let _ = writeln!(s, "w_n = {}", self.w_grid_n);
        let _ = writeln!(s, "w_samples = {}", self.w_samples);
        let _ = writeln!(s, "seed = {}", self.seed);
        s.push_str("\n[output]\n");
        let _ = writeln!(s, "dir = {}", self.out_dir.display());
        s
    }
}

fn parse_num<T: std::str::FromStr>(v: &str) -> Result<T, String> {
    v.trim().parse().map_err(|_| format!("cannot parse number {v:?}"))
}

fn parse_bool(v: &str) -> Result<bool, String> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("expected a boolean, got {v:?}")),
    }
}

fn parse_rule(v: &str) -> Result<GridRule, String> {
    match v {
        "auto" => Ok(GridRule::Auto),
        "open" => Ok(GridRule::Open),
        "trapezoid" => Ok(GridRule::Trapezoid),
        "boole" => Ok(GridRule::Boole),
        _ => Err(format!("unknown rule {v:?}")),
    }
}

fn parse_region(v: &str) -> Result<RegionSpec, String> {
    if v == "auto" {
        return Ok(RegionSpec::Auto);
    }
    let xs: Vec<f64> = v.split_whitespace().map(parse_num).collect::<Result<_, _>>()?;
    match xs[..] {
        [re_min, re_max, im_min, im_max] if re_min < re_max && im_min < im_max => {
            Ok(RegionSpec::Rect { re_min, re_max, im_min, im_max })
        }
        _ => Err("region needs `auto` or re_min re_max im_min im_max".into()),
    }
}

/// `a`, `bi`, `a+bi`, `a-bi`, with `i` alone meaning `1i`.
pub fn parse_complex(v: &str) -> Result<C64, String> {
    let bad = || format!("cannot parse complex number {v:?}");
    let Some(body) = v.strip_suffix('i') else {
        return parse_num::<f64>(v).map(|re| C64::new(re, 0.0));
    };
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&k| (bytes[k] == b'+' || bytes[k] == b'-') && !matches!(bytes[k - 1], b'e' | b'E'));
    let im_of = |s: &str| match s {
        "" | "+" => Ok(1.0),
        "-" => Ok(-1.0),
        _ => s.parse::<f64>().map_err(|_| bad()),
    };
    match split {
        Some(k) => Ok(C64::new(body[..k].parse().map_err(|_| bad())?, im_of(&body[k..])?)),
        None => Ok(C64::new(0.0, im_of(body)?)),
    }
}

pub fn emit_complex(z: C64) -> String {
    if z.im == 0.0 {
        format!("{}", z.re)
    } else if z.im.is_sign_negative() {
        format!("{}-{}i", z.re, -z.im)
    } else {
        format!("{}+{}i", z.re, z.im)
    }
}

fn parse_row(v: &str) -> Result<Row, String> {
    let xs: Vec<C64> = v.split_whitespace().map(parse_complex).collect::<Result<_, _>>()?;
    xs.try_into().map_err(|_| format!("a boundary row needs 4 entries: {v:?}"))
}

fn parse_piece(v: &str) -> Result<Piece, String> {
    let (mut interval, mut anchor, mut order, mut factor) = (None, None, 0.0, None);
    for tok in v.split_whitespace() {
        let (k, val) = tok.split_once('=').ok_or_else(|| format!("expected name=value, got {tok:?}"))?;
        match k {
            "interval" => {
                let inner = val.strip_prefix('(').and_then(|s| s.strip_suffix(')')).ok_or("interval must be (lo,hi)")?;
                let (lo, hi) = inner.split_once(',').ok_or("interval must be (lo,hi)")?;
                interval = Some((parse_num::<f64>(lo)?, parse_num::<f64>(hi)?));
            }
            "anchor" => anchor = Some(parse_num::<f64>(val)?),
            "order" => order = parse_num(val)?,
            "factor" => {
                let coeffs = val.strip_prefix("poly:").ok_or("factor must be poly:c0,c1,...")?;
                factor = Some(Poly(coeffs.split(',').map(parse_num).collect::<Result<_, _>>()?));
            }
            _ => return Err(format!("unknown piece attribute {k:?}")),
        }
    }
    let (lo, hi) = interval.ok_or("piece needs interval=")?;
    Ok(Piece::new(lo, hi, anchor.unwrap_or(lo), order, factor.ok_or("piece needs factor=")?))
}

fn emit_piece(p: &Piece) -> String {
    let coeffs: Vec<String> = p.factor.0.iter().map(|c| c.to_string()).collect();
    format!("interval=({},{}) anchor={} order={} factor=poly:{}", p.lo, p.hi, p.anchor, p.order, coeffs.join(","))
}
