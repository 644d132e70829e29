//! Pipeline behind the `indefsl` binary: validate the boundary rows, classify,
//! check the coefficient conditions, build and verify `W`, solve, diagnose.

pub mod config;

use std::fmt::Write as _;
use std::path::Path;

use indefsl_core::bc_algebra::{classify_theorem, q_form_residuals, reduce_and_split, validate_triple, Theorem};
use indefsl_core::coefficients::check_condition_at;
use indefsl_core::fem::fem_cross_check;
use indefsl_core::kernel_ops::{assemble_W, verify_W};
use indefsl_core::riesz_diag::{gram_analysis, orthogonality_report, section_order};
use indefsl_core::spectral::{find_eigenvalues, root_subspace, Region};
use indefsl_core::{BoundaryTriple, CoefficientModel, Grid, Point, RequiredCondition, Rule, SpectralDatum, C64};
use serde::Serialize;

pub use config::{ConfigError, GridRule, ProblemConfig, RegionSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Mode {
    CheckBc,
    Classify,
    VerifyW,
    Solve,
    Diagnose,
    All,
}

impl Mode {
    fn name(self) -> &'static str {
        match self {
            Mode::CheckBc => "check-bc",
            Mode::Classify => "classify",
            Mode::VerifyW => "verify-w",
            Mode::Solve => "solve",
            Mode::Diagnose => "diagnose",
            Mode::All => "all",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    ValidationFailed,
    NoTheorem,
    ConditionsNotMet,
    NumericalFailure,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Ok => 0,
            Status::ValidationFailed => 2,
            Status::NoTheorem | Status::ConditionsNotMet => 3,
            Status::NumericalFailure => 4,
        }
    }
}

/// Every block is present; the ones not run say why.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum Block<T> {
    Done(T),
    Skipped { reason: String },
    Failed { error: String },
}

impl<T> Block<T> {
    fn skipped(reason: &str) -> Self {
        Block::Skipped { reason: reason.to_string() }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Cx {
    pub re: f64,
    pub im: f64,
}

impl From<C64> for Cx {
    fn from(z: C64) -> Self {
        Cx { re: z.re, im: z.im }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationBlock {
    pub passed: bool,
    pub error: Option<String>,
    pub q_form_residuals: QResiduals,
    pub mqn: Option<Cx>,
    pub delta: Option<f64>,
    pub rank: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct QResiduals {
    pub lql: f64,
    pub mqm: f64,
    pub nqn: f64,
    pub lqm: f64,
    pub lqn: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SplitBlock {
    pub form_domain_case: String,
    pub l: Vec<Cx>,
    pub m: Vec<Cx>,
    pub n: Vec<Cx>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassificationBlock {
    pub theorem: String,
    pub matched_case: String,
    pub required_conditions: Vec<String>,
    pub sign_delta: i8,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionsBlock {
    pub points: Vec<ConditionEntry>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionEntry {
    pub point: String,
    pub required: bool,
    pub holds: bool,
    pub margin: f64,
    pub alpha_slope: Option<f64>,
    pub beta_slope: Option<f64>,
    pub rho0: Option<f64>,
    pub eps: Option<f64>,
    pub attempts: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct WBlock {
    pub grid_n: usize,
    pub samples: usize,
    pub seed: u64,
    pub operator: String,
    pub min_krein_ratio: f64,
    pub positive: bool,
    pub condition_number: f64,
    pub form_domain_residual: Option<f64>,
    pub form_domain_ok: bool,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct EigenBlock {
    pub region: [f64; 4],
    pub count: usize,
    pub eigenvalues: Vec<EigenRow>,
    pub fem: Option<FemBlock>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EigenRow {
    pub re_lambda: f64,
    pub im_lambda: f64,
    pub alg_mult: usize,
    pub geo_mult: usize,
    pub krein_sign: i8,
    pub boundary_residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FemBlock {
    pub elements: usize,
    pub compared: usize,
    pub max_relative_difference: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagBlock {
    pub sections: Vec<SectionRow>,
    pub trend: String,
    pub max_growth_ratio: Option<f64>,
    pub max_krein_pairing: f64,
    pub pairs_checked: usize,
    pub non_real_count: usize,
    pub krein_signs: SignCounts,
    pub note: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct SectionRow {
    pub n: usize,
    pub kappa: f64,
    pub min_eig: f64,
    pub max_eig: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SignCounts {
    pub positive: usize,
    pub negative: usize,
    pub neutral: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub tool: &'static str,
    pub version: &'static str,
    pub mode: &'static str,
    pub status: Status,
    pub exit_code: i32,
    pub validation: Block<ValidationBlock>,
    pub split: Block<SplitBlock>,
    pub classification: Block<ClassificationBlock>,
    pub conditions: Block<ConditionsBlock>,
    pub w_verification: Block<WBlock>,
    pub eigenvalues: Block<EigenBlock>,
    pub diagnostics: Block<DiagBlock>,
}

impl Report {
    fn new(mode: Mode) -> Self {
        let not_requested = || "not requested by mode";
        Report {
            tool: "indefsl",
            version: env!("CARGO_PKG_VERSION"),
            mode: mode.name(),
            status: Status::Ok,
            exit_code: 0,
            validation: Block::skipped(not_requested()),
            split: Block::skipped(not_requested()),
            classification: Block::skipped(not_requested()),
            conditions: Block::skipped(not_requested()),
            w_verification: Block::skipped(not_requested()),
            eigenvalues: Block::skipped(not_requested()),
            diagnostics: Block::skipped(not_requested()),
        }
    }

    fn set_status(&mut self, s: Status) {
        // The first failure decides the exit status.
        if self.status == Status::Ok {
            self.status = s;
            self.exit_code = s.exit_code();
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report is serializable");
        s.push('\n');
        s
    }

    /// `re_lambda,im_lambda,alg_mult,geo_mult,krein_sign`.
    pub fn eigenvalues_csv(&self) -> String {
        let mut s = String::from("re_lambda,im_lambda,alg_mult,geo_mult,krein_sign\n");
        if let Block::Done(e) = &self.eigenvalues {
            for row in &e.eigenvalues {
                let _ = writeln!(s, "{},{},{},{},{}", row.re_lambda, row.im_lambda, row.alg_mult, row.geo_mult, row.krein_sign);
            }
        }
        s
    }

    pub fn kappa_tsv(&self) -> String {
        let mut s = String::from("n\tkappa\n");
        if let Block::Done(d) = &self.diagnostics {
            for row in &d.sections {
                let _ = writeln!(s, "{}\t{}", row.n, row.kappa);
            }
        }
        s
    }

    pub fn write_outputs(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), self.to_json())?;
        std::fs::write(dir.join("eigenvalues.csv"), self.eigenvalues_csv())?;
        std::fs::write(dir.join("kappa.tsv"), self.kappa_tsv())?;
        Ok(())
    }
}

fn check_numbers(cfg: &ProblemConfig) -> Result<(), ConfigError> {
    let bad = |msg: String| Err(ConfigError::Model(msg));
    if cfg.grid_n < 8 || cfg.w_grid_n < 8 {
        return bad("grid sizes must be at least 8".into());
    }
    if cfg.rule == GridRule::Boole && cfg.grid_n % 4 != 0 {
        return bad(format!("Boole rule needs n divisible by 4, got {}", cfg.grid_n));
    }
    if cfg.fem_elements != 0 && cfg.fem_elements < 8 {
        return bad("fem_elements must be 0 (off) or at least 8".into());
    }
    Ok(())
}

fn eigen_grid_rule(cfg: &ProblemConfig, m: &CoefficientModel) -> Rule {
    match cfg.rule {
        GridRule::Open => Rule::Open,
        GridRule::Trapezoid => Rule::Trapezoid,
        GridRule::Boole => Rule::Boole,
        GridRule::Auto => {
            let singular = m.r.pieces.iter().any(|p| p.order < 0.0);
            if singular || cfg.grid_n % 4 != 0 {
                Rule::Open
            } else {
                Rule::Boole
            }
        }
    }
}

/// Runs the pipeline prefix selected by `mode`. Numerical and mathematical
/// failures are recorded in the report; only configuration problems are errors.
pub fn run_pipeline(cfg: &ProblemConfig, mode: Mode) -> Result<Report, ConfigError> {
    check_numbers(cfg)?;
    let model = cfg.model()?;
    let mut report = Report::new(mode);

    let res = q_form_residuals(&cfg.l, &cfg.m, &cfg.n);
    let q_form_residuals = QResiduals { lql: res.lql, mqm: res.mqm, nqn: res.nqn, lqm: res.lqm, lqn: res.lqn };
    let triple = match validate_triple(cfg.l, cfg.m, cfg.n, cfg.bc_tol) {
        Ok(t) => {
            report.validation = Block::Done(ValidationBlock {
                passed: true,
                error: None,
                q_form_residuals,
                mqn: Some(t.mqn.into()),
                delta: Some(t.delta),
                rank: Some(t.rank),
            });
            t
        }
        Err(e) => {
            report.validation = Block::Done(ValidationBlock {
                passed: false,
                error: Some(format!("{e:?}: {e}")),
                q_form_residuals,
                mqn: None,
                delta: None,
                rank: None,
            });
            report.set_status(Status::ValidationFailed);
            mark_rest(&mut report, "boundary rows failed validation");
            return Ok(report);
        }
    };
    if mode == Mode::CheckBc {
        return Ok(report);
    }

    let split = reduce_and_split(&triple);
    let rows = |r: &[C64; 4]| r.iter().map(|&z| z.into()).collect::<Vec<Cx>>();
    report.split = Block::Done(SplitBlock {
        form_domain_case: split.form_domain_case.to_string(),
        l: rows(&split.l),
        m: rows(&split.m),
        n: rows(&split.n),
    });
    let class = classify_theorem(&split, &triple);
    report.classification = Block::Done(ClassificationBlock {
        theorem: class.theorem.to_string(),
        matched_case: class.matched_case.clone(),
        required_conditions: class.required_conditions.iter().map(|c| c.to_string()).collect(),
        sign_delta: class.sign_delta,
    });
    if class.theorem == Theorem::None {
        report.set_status(Status::NoTheorem);
    }
    if mode == Mode::Classify {
        return Ok(report);
    }

    let required = |p: Point| {
        class.required_conditions.iter().any(|c| match (c, p) {
            (RequiredCondition::At0, Point::Zero) => true,
            (RequiredCondition::AtMinus1 | RequiredCondition::AtMinus1OrAtPlus1, Point::MinusOne) => true,
            (RequiredCondition::AtPlus1 | RequiredCondition::AtMinus1OrAtPlus1, Point::PlusOne) => true,
            _ => false,
        })
    };
    let mut points = Vec::new();
    for p in [Point::MinusOne, Point::Zero, Point::PlusOne] {
        let c = check_condition_at(&model, p);
        points.push(ConditionEntry {
            point: p.to_string(),
            required: required(p),
            holds: c.holds,
            margin: c.inequality_margin,
            alpha_slope: c.connection.as_ref().map(|k| k.alpha_slope),
            beta_slope: c.connection.as_ref().map(|k| k.beta_slope),
            rho0: c.connection.as_ref().map(|k| k.rho0),
            eps: c.connection.as_ref().map(|k| k.eps),
            attempts: c.attempts.len(),
        });
    }
    let met = |p: &str| points.iter().any(|e| e.point == p && e.holds);
    let conditions_met = class.required_conditions.iter().all(|c| match c {
        RequiredCondition::At0 => met("0"),
        RequiredCondition::AtMinus1 => met("-1"),
        RequiredCondition::AtPlus1 => met("1"),
        RequiredCondition::AtMinus1OrAtPlus1 => met("-1") || met("1"),
    });
    report.conditions = Block::Done(ConditionsBlock { points });

    report.w_verification = if class.theorem == Theorem::None {
        Block::skipped("no theorem applies")
    } else if !conditions_met {
        report.set_status(Status::ConditionsNotMet);
        Block::skipped("a required coefficient condition does not hold")
    } else {
        let grid = Grid::new(&model, cfg.w_grid_n, Rule::Open);
        match assemble_W(&model, &grid, &class, triple.delta) {
            Ok(w) => {
                let v = verify_W(&w, &split, &triple, cfg.w_samples, cfg.seed);
                if !v.passed() {
                    report.set_status(Status::NumericalFailure);
                }
                Block::Done(WBlock {
                    grid_n: cfg.w_grid_n,
                    samples: v.samples,
                    seed: cfg.seed,
                    operator: w.recipe.to_string(),
                    min_krein_ratio: v.min_krein_ratio,
                    positive: v.positive,
                    condition_number: v.condition_number,
                    form_domain_residual: v.form_domain_residual,
                    form_domain_ok: v.form_domain_ok,
                    passed: v.passed(),
                })
            }
            Err(e) => {
                report.set_status(Status::NumericalFailure);
                Block::Failed { error: e.to_string() }
            }
        }
    };
    if mode == Mode::VerifyW {
        return Ok(report);
    }

    let data = match solve(cfg, &model, &triple) {
        Ok((block, data)) => {
            report.eigenvalues = Block::Done(block);
            data
        }
        Err(e) => {
            report.set_status(Status::NumericalFailure);
            report.eigenvalues = Block::Failed { error: e };
            report.diagnostics = Block::skipped("eigenvalue computation failed");
            return Ok(report);
        }
    };
    if mode == Mode::Solve {
        return Ok(report);
    }

    report.diagnostics = match diagnose(cfg, &data, &triple) {
        Ok(d) => Block::Done(d),
        Err(e) => {
            report.set_status(Status::NumericalFailure);
            Block::Failed { error: e }
        }
    };
    Ok(report)
}

fn mark_rest(report: &mut Report, reason: &str) {
    let r = || reason.to_string();
    report.split = Block::Skipped { reason: r() };
    report.classification = Block::Skipped { reason: r() };
    report.conditions = Block::Skipped { reason: r() };
    report.w_verification = Block::Skipped { reason: r() };
    report.eigenvalues = Block::Skipped { reason: r() };
    report.diagnostics = Block::Skipped { reason: r() };
}

fn solve(cfg: &ProblemConfig, model: &CoefficientModel, t: &BoundaryTriple) -> Result<(EigenBlock, Vec<SpectralDatum>), String> {
    let region = match cfg.region {
        RegionSpec::Auto => Region::default_for(model, cfg.count),
        RegionSpec::Rect { re_min, re_max, im_min, im_max } => Region::new(re_min, re_max, im_min, im_max),
    };
    let found = find_eigenvalues(model, t, region, cfg.max_eigs).map_err(|e| e.to_string())?;
    let grid = Grid::new(model, cfg.grid_n, eigen_grid_rule(cfg, model));
    let mut data = Vec::with_capacity(found.len());
    for &(z, k) in &found {
        data.push(root_subspace(model, t, z, k, &grid).map_err(|e| e.to_string())?);
    }
    let eigenvalues = data
        .iter()
        .map(|d| EigenRow {
            re_lambda: d.lambda.re,
            im_lambda: d.lambda.im,
            alg_mult: d.alg_mult,
            geo_mult: d.geo_mult,
            krein_sign: d.krein_sign,
            boundary_residual: d.boundary_residual(t),
        })
        .collect();
    let fem = if cfg.fem_elements == 0 {
        None
    } else {
        let fem = fem_cross_check(model, t, cfg.fem_elements).map_err(|e| e.to_string())?;
        let compared = found.len().min(10);
        let mut worst: f64 = 0.0;
        for &(z, _) in found.iter().take(compared) {
            let nearest = fem.iter().map(|w| (w - z).norm()).fold(f64::INFINITY, f64::min);
            worst = worst.max(nearest / z.norm().max(1.0));
        }
        Some(FemBlock { elements: cfg.fem_elements, compared, max_relative_difference: worst })
    };
    let block = EigenBlock {
        region: [region.re_min, region.re_max, region.im_min, region.im_max],
        count: found.iter().map(|f| f.1).sum(),
        eigenvalues,
        fem,
    };
    Ok((block, data))
}

fn diagnose(cfg: &ProblemConfig, data: &[SpectralDatum], t: &BoundaryTriple) -> Result<DiagBlock, String> {
    let vecs = section_order(data);
    let sections: Vec<usize> = cfg.sections.iter().cloned().filter(|&n| n >= 1 && n <= vecs.len()).collect();
    let ga = gram_analysis(&vecs, t, &sections).map_err(|e| e.to_string())?;
    let orth = orthogonality_report(data, t);
    let (positive, negative, neutral) = orth.sign_counts();
    Ok(DiagBlock {
        sections: (0..ga.n_list.len())
            .map(|i| SectionRow { n: ga.n_list[i], kappa: ga.kappa[i], min_eig: ga.min_eig[i], max_eig: ga.max_eig[i] })
            .collect(),
        trend: ga.trend.to_string(),
        max_growth_ratio: ga.max_growth_ratio(),
        max_krein_pairing: orth.max_pairing,
        pairs_checked: orth.pairs_checked,
        non_real_count: orth.non_real_count,
        krein_signs: SignCounts { positive, negative, neutral },
        note: "finite-section diagnostics are necessary conditions for a Riesz basis, not a proof",
    })
}
