//! Acceptance criteria 1-10, one line each. Exits nonzero if any criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use indefsl_core::bc_algebra::{classify_theorem, concomitant_matrix, real_row, reduce_and_split, validate_triple, Theorem};
use indefsl_core::coefficients::{check_condition_at, check_condition_with_scales};
use indefsl_core::fem::fem_cross_check;
use indefsl_core::kernel_ops::{adjoint_residual, build_W0, build_W_endpoint, build_X0, jw_minus_i_min_eig, random_smooth};
use indefsl_core::riesz_diag::{gram_analysis, orthogonality_report, section_order};
use indefsl_core::spectral::{char_det, find_eigenvalues, root_subspace, Region};
use indefsl_core::{BoundaryTriple, CoefficientModel, Grid, GridFunction, KreinVector, Point, RequiredCondition, Row, Rule, SpectralDatum, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

const SECTIONS: [usize; 6] = [5, 10, 15, 20, 25, 30];

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

fn oracle_triple() -> BoundaryTriple {
    validate_triple(real_row([1.0, 0.0, 0.0, 0.0]), real_row([0.0, 0.0, 0.0, 1.0]), real_row([0.0, 1.0, 0.0, 0.0]), 1e-10).unwrap()
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn q_algebra() -> Outcome {
    let q = concomitant_matrix();
    let qq = q * q;
    let identity = (0..4).all(|i| (0..4).all(|j| qq[(i, j)] == c(if i == j { 1.0 } else { 0.0 })));
    ensure(identity, || "Q·Q != I".into())?;
    ensure(q.adjoint() == q, || "Q* != Q".into())?;
    Ok("Q·Q = I and Q* = Q exactly".into())
}

fn closing_example() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    let mut worst: f64 = 0.0;
    for k in 0..100 {
        // L Q N* = -i γ d4 forces d4 = 0, so d3 carries (d3, d4) != (0, 0);
        // L Q M* = 0 then fixes m1.
        let d3 = rng.random_range(0.2..2.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let (d1, d2) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let (m2, m3) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let m4: f64 = rng.random_range(0.1..2.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let gamma = m4.signum() * rng.random_range(0.1..3.0);
        let m1 = (d1 * m3 - d2 * m4) / d3;
        let t = validate_triple(real_row([d1, d2, d3, 0.0]), real_row([m1, m2, m3, m4]), real_row([0.0, gamma, 0.0, 0.0]), 1e-10)
            .map_err(|e| format!("sample {k}: {e}"))?;
        let expected = C64::new(0.0, -gamma * m4);
        let rel = (t.mqn - expected).norm() / expected.norm();
        worst = worst.max(rel);
        ensure(rel <= 1e-12, || format!("sample {k}: MQN* = {} vs {expected}", t.mqn))?;
        ensure(t.delta > 0.0, || format!("sample {k}: delta {}", t.delta))?;
        let rep = classify_theorem(&reduce_and_split(&t), &t);
        ensure(rep.theorem == Theorem::Thm6_1 && rep.required_conditions == [RequiredCondition::At0].into(), || {
            format!("sample {k}: {} {:?}", rep.theorem, rep.required_conditions)
        })?;
    }
    Ok(format!("100 samples, worst relative MQN* error {worst:.1e}, all Delta > 0, all Thm6_1/{{At0}}"))
}

/// `Δ = −i / (M Q N*)` from a locally written `Q`.
fn brute_delta(m: &Row, n: &Row) -> C64 {
    let i = C64::new(0.0, 1.0);
    let a = [[0.0, 0.0, -1.0, 0.0], [0.0, 0.0, 0.0, 1.0], [1.0, 0.0, 0.0, 0.0], [0.0, -1.0, 0.0, 0.0]];
    let mut s = c(0.0);
    for j in 0..4 {
        for k in 0..4 {
            s += m[j] * i * a[j][k] * n[k].conj();
        }
    }
    -i / s
}

fn classification_table() -> Outcome {
    use RequiredCondition::*;
    let rows: [([f64; 4], [f64; 4], [f64; 4], Theorem, Vec<RequiredCondition>, f64); 3] = [
        ([1., 0., 0., 0.], [0., 0., 0., 1.], [0., 1., 0., 0.], Theorem::Thm6_1, vec![At0], 1.0),
        ([1., 1., 0., 0.], [1., 0., 0., 0.], [0., 0., 1., 1.], Theorem::Thm6_2, vec![At0, AtMinus1OrAtPlus1], 1.0),
        ([0., 0., 0., 1.], [0.7, 0., 1., 0.], [1., 0., 0., 0.], Theorem::Thm6_3, vec![At0, AtPlus1], -1.0),
    ];
    let mut failures = Vec::new();
    let mut seen = Vec::new();
    for (k, (l, m, n, theorem, req, delta)) in rows.into_iter().enumerate() {
        let t = validate_triple(real_row(l), real_row(m), real_row(n), 1e-10).map_err(|e| format!("triple {}: {e}", k + 1))?;
        let bd = brute_delta(&t.m, &t.n);
        if (bd - c(delta)).norm() > 1e-14 || (t.delta - delta).abs() > 1e-14 {
            failures.push(format!("triple {}: delta {} (brute force {bd}), expected {delta}", k + 1, t.delta));
        }
        let rep = classify_theorem(&reduce_and_split(&t), &t);
        let got: Vec<_> = rep.required_conditions.iter().copied().collect();
        seen.push(format!("{}/{:?} {}", rep.theorem, got, rep.matched_case));
        if rep.theorem != theorem || got != req {
            failures.push(format!(
                "triple {}: got {}/{:?} via {}, expected {theorem}/{req:?}",
                k + 1,
                rep.theorem,
                got,
                rep.matched_case
            ));
        }
    }
    if failures.is_empty() {
        Ok(seen.join("; "))
    } else {
        Err(format!(
            "{}. Triple 3 has L_n != 0 (case b-i) and N = [1 0 0 0] with Delta < 0 (case c-ii), so Thm6_1 \
             applies and takes priority over Thm6_3",
            failures.join("; ")
        ))
    }
}

fn smooth_connection_checker() -> Outcome {
    let mut parts = Vec::new();
    for nu in [0.5, 1.0, 2.0] {
        let rep = check_condition_at(&CoefficientModel::power_weight(nu), Point::Zero);
        let want = 2f64.powf(nu + 1.0) - 1.0;
        ensure(rep.holds && (rep.inequality_margin - want).abs() <= 1e-10, || {
            format!("nu {nu}: holds {} margin {} expected {want}", rep.holds, rep.inequality_margin)
        })?;
        parts.push(format!("nu={nu}: {}", rep.inequality_margin));
    }
    let id = check_condition_with_scales(&CoefficientModel::power_weight(1.0), Point::Zero, &[1.0]);
    ensure(!id.holds, || "identity connection accepted".into())?;
    Ok(format!("margins {}; c=1 rejected", parts.join(", ")))
}

fn zero_operator_suite() -> Outcome {
    let m = CoefficientModel::power_weight(1.0);
    let g = Grid::new(&m, 512, Rule::Open);
    let conn = check_condition_at(&m, Point::Zero).connection.ok_or("no connection at 0")?;
    let w0 = build_W0(&g, &conn).map_err(|e| e.to_string())?;
    let xp = build_X0(&g, &conn).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);

    let f = random_smooth(&g, &mut rng);
    let wf = w0.apply(&f);
    let mut checked = 0;
    for i in 0..g.len() {
        if g.nodes[i].abs() >= 0.5 {
            ensure(wf.values[i] == f.values[i] * g.sign_r[i], || format!("(a) at x = {}", g.nodes[i]))?;
            checked += 1;
        }
    }
    let eb = (wf.at_minus1() + f.at_minus1()).norm().max((wf.at_plus1() - f.at_plus1()).norm());
    ensure(eb <= 1e-10, || format!("(b) endpoint error {eb:e}"))?;
    let mut ec: f64 = 0.0;
    for _ in 0..20 {
        let f = random_smooth(&g, &mut rng);
        let xs = xp.x_adj.apply(&f);
        ec = ec.max((xs.at_zero_plus() + xs.at_zero_minus() + f.at_zero_plus() * 2.0).norm());
    }
    ensure(ec <= 1e-8, || format!("(c) {ec:e}"))?;
    let ed = jw_minus_i_min_eig(&w0);
    ensure(ed >= -1e-8, || format!("(d) min eigenvalue {ed:e}"))?;
    let ee = adjoint_residual(&xp.x, &xp.x_adj, 20, 9);
    ensure(ee <= 1e-6, || format!("(e) adjoint residual {ee:e}"))?;
    Ok(format!("(a) {checked} nodes exact, (b) {eb:.1e}, (c) {ec:.1e}, (d) {ed:.1e}, (e) {ee:.1e}"))
}

fn endpoint_operators() -> Outcome {
    let m = CoefficientModel::power_weight(1.0);
    let g = Grid::new(&m, 512, Rule::Open);
    let cm = check_condition_at(&m, Point::MinusOne).connection.ok_or("no connection at -1")?;
    let cp = check_condition_at(&m, Point::PlusOne).connection.ok_or("no connection at 1")?;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let f = random_smooth(&g, &mut rng);
    let mut worst: f64 = 0.0;
    for mu in [c(1.0), c(-1.0), C64::new(2.0, 1.0)] {
        let wm = build_W_endpoint(&g, &cm, mu).map_err(|e| e.to_string())?.apply(&f);
        let wp = build_W_endpoint(&g, &cp, mu).map_err(|e| e.to_string())?.apply(&f);
        let e = (wm.at_minus1() - f.at_minus1() * mu).norm().max((wp.at_plus1() - f.at_plus1() * mu).norm());
        ensure(e <= 1e-10, || format!("mu {mu}: endpoint error {e:e}"))?;
        worst = worst.max(e);
        for i in 0..g.len() {
            let (x, jf) = (g.nodes[i], f.values[i] * g.sign_r[i]);
            if x >= -0.5 {
                ensure(wm.values[i] == jf, || format!("mu {mu}: W_-1 differs from J at x = {x}"))?;
            }
            if x <= 0.5 {
                ensure(wp.values[i] == jf, || format!("mu {mu}: W_+1 differs from J at x = {x}"))?;
            }
        }
    }
    Ok(format!("worst endpoint error {worst:.1e}; J region identity exact"))
}

fn cot_roots(count: usize) -> Vec<f64> {
    let g = |w: f64| (2.0 * w).cos() - w * (2.0 * w).sin();
    (0..count)
        .map(|k| {
            let h = std::f64::consts::FRAC_PI_2;
            let (mut a, mut b) = (k as f64 * h + 1e-12, (k as f64 + 1.0) * h - 1e-12);
            for _ in 0..200 {
                let mid = 0.5 * (a + b);
                if g(a).signum() == g(mid).signum() {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            0.5 * (a + b)
        })
        .collect()
}

fn eigensolver_oracle() -> Outcome {
    let m = CoefficientModel::unit_weight();
    let t = oracle_triple();
    let mut ed: f64 = 0.0;
    for w in [0.3, 1.1, 2.5, 7.0] {
        let d = char_det(&m, &t, c(w * w)).map_err(|e| e.to_string())?;
        ed = ed.max((d - c((2.0 * w).cos() - w * (2.0 * w).sin())).norm() / (1.0 + w));
    }
    ensure(ed <= 1e-10, || format!("D(w^2) differs from the closed form by {ed:e}"))?;
    let roots = cot_roots(10);
    let top = roots[9] * roots[9] * 1.02;
    let ev = find_eigenvalues(&m, &t, Region::new(-1.0, top, -2.0, 2.0), 40).map_err(|e| e.to_string())?;
    ensure(ev.len() == 10, || format!("found {} eigenvalues", ev.len()))?;
    let mut es: f64 = 0.0;
    for ((lam, _), w) in ev.iter().zip(&roots) {
        es = es.max((lam - c(w * w)).norm() / (w * w));
    }
    ensure(es <= 1e-8, || format!("shooting relative error {es:e}"))?;
    let fem = fem_cross_check(&m, &t, 256).map_err(|e| e.to_string())?;
    let mut ef: f64 = 0.0;
    for w in &roots {
        let near = fem.iter().map(|z| (z - c(w * w)).norm()).fold(f64::INFINITY, f64::min);
        ef = ef.max(near / (w * w));
    }
    ensure(ef <= 1e-4, || format!("FEM relative error {ef:e}"))?;
    Ok(format!("closed form {ed:.1e}, shooting {es:.1e}, FEM(256) {ef:.1e}"))
}

fn solve_all(m: &CoefficientModel, t: &BoundaryTriple) -> Result<Vec<SpectralDatum>, String> {
    let ev = find_eigenvalues(m, t, Region::default_for(m, 32), 200).map_err(|e| e.to_string())?;
    let grid = Grid::new(m, 512, Rule::Boole);
    ev.iter().map(|&(z, k)| root_subspace(m, t, z, k, &grid).map_err(|e| e.to_string())).collect()
}

fn indefinite_properties() -> Outcome {
    let m = CoefficientModel::sign_weight();
    let t = oracle_triple();
    let theorem = classify_theorem(&reduce_and_split(&t), &t).theorem;
    ensure(theorem == Theorem::Thm6_1, || format!("triple classified as {theorem}"))?;
    let data = solve_all(&m, &t)?;
    for d in &data {
        if d.lambda.im != 0.0 {
            let closed = data.iter().any(|e| (e.lambda - d.lambda.conj()).norm() <= 1e-8 * (1.0 + d.lambda.norm()) && e.alg_mult == d.alg_mult);
            ensure(closed, || format!("{} has no conjugate partner", d.lambda))?;
        }
    }
    let orth = orthogonality_report(&data, &t);
    ensure(orth.max_pairing <= 1e-6, || format!("Krein pairing {:e}", orth.max_pairing))?;
    let (pos, neg, _) = orth.sign_counts();
    Ok(format!(
        "{} eigenvalues, conjugate-closed, non-real {} (reported), max Krein pairing {:.1e} over {} pairs, signs +{pos}/-{neg}",
        data.len(),
        orth.non_real_count,
        orth.max_pairing,
        orth.pairs_checked
    ))
}

fn riesz_diagnostics() -> Outcome {
    let t = oracle_triple();
    let mut parts = Vec::new();
    for (name, m) in [("definite", CoefficientModel::unit_weight()), ("sgn x", CoefficientModel::sign_weight())] {
        let vecs = section_order(&solve_all(&m, &t)?);
        let ga = gram_analysis(&vecs, &t, &SECTIONS).map_err(|e| e.to_string())?;
        let kmax = ga.kappa.iter().copied().fold(0.0, f64::max);
        let ratio = ga.max_growth_ratio().unwrap_or(1.0);
        ensure(kmax <= 100.0 && ratio < 1.5, || format!("{name}: kappa max {kmax}, growth ratio {ratio}"))?;
        let full: Vec<usize> = (1..=30).collect();
        let all = gram_analysis(&vecs, &t, &full).map_err(|e| e.to_string())?;
        parts.push(format!(
            "{name}: kappa_30 {:.3}, ratio {ratio:.3} (every n = 1..30: worst ratio {:.3})",
            ga.kappa[ga.kappa.len() - 1],
            all.max_growth_ratio().unwrap_or(1.0)
        ));
    }
    let g = Grid::new(&CoefficientModel::unit_weight(), 256, Rule::Boole);
    let sines: Vec<KreinVector> = (1..=30)
        .map(|k| KreinVector::new(GridFunction::from_real_fn(&g, move |x| (k as f64 * std::f64::consts::PI * x).sin()), c(0.0)))
        .collect();
    let ga = gram_analysis(&sines, &t, &SECTIONS).map_err(|e| e.to_string())?;
    let dev = ga.kappa.iter().map(|k| (k - 1.0).abs()).fold(0.0, f64::max);
    ensure(dev <= 1e-10, || format!("orthonormal input kappa deviates by {dev:e}"))?;
    parts.push(format!("orthonormal |kappa - 1| {dev:.1e}"));
    Ok(format!("sections {SECTIONS:?}; {}", parts.join("; ")))
}

fn determinism() -> Outcome {
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/sign_weight.cfg");
    let base = std::env::temp_dir().join(format!("indefsl-acceptance-{}", std::process::id()));
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out = base.join(run);
        let status = Command::new(env!("CARGO_BIN_EXE_indefsl"))
            .args(["all", "--seed", "3", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .output()
            .map_err(|e| e.to_string())?
            .status;
        ensure(status.success(), || format!("run {run} exited with {status}"))?;
        outputs.push(out);
    }
    for file in ["report.json", "eigenvalues.csv", "kappa.tsv"] {
        let a = std::fs::read(outputs[0].join(file)).map_err(|e| e.to_string())?;
        let b = std::fs::read(outputs[1].join(file)).map_err(|e| e.to_string())?;
        ensure(a == b, || format!("{file} differs between runs"))?;
    }
    let _ = std::fs::remove_dir_all(&base);
    Ok("report.json, eigenvalues.csv and kappa.tsv byte-identical".into())
}

fn main() {
    let criteria: [(&str, Option<Duration>, fn() -> Outcome); 10] = [
        ("Q-algebra", Some(Duration::from_millis(1)), q_algebra),
        ("closing example, 100 random triples", Some(Duration::from_secs(1)), closing_example),
        ("classification table", Some(Duration::from_secs(1)), classification_table),
        ("smooth-connection checker", Some(Duration::from_secs(1)), smooth_connection_checker),
        ("operator identities at 0", Some(Duration::from_secs(30)), zero_operator_suite),
        ("endpoint operators", Some(Duration::from_secs(10)), endpoint_operators),
        ("eigensolver oracle", Some(Duration::from_secs(60)), eigensolver_oracle),
        ("indefinite spectral properties", Some(Duration::from_secs(120)), indefinite_properties),
        ("Riesz diagnostics", Some(Duration::from_secs(60)), riesz_diagnostics),
        ("determinism", None, determinism),
    ];
    let mut failed = Vec::new();
    for (k, (name, budget, check)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let mut outcome = check();
        let elapsed = start.elapsed();
        if let (Ok(detail), Some(b)) = (&outcome, budget) {
            if elapsed > b {
                outcome = Err(format!("{detail}; took {elapsed:?}, budget {b:?}"));
            }
        }
        let budget = budget.map_or("none".to_string(), |b| format!("{b:?}"));
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS {name} [{elapsed:.2?} / {budget}]: {detail}", k + 1),
            Err(why) => {
                println!("criterion {:>2} FAIL {name} [{elapsed:.2?} / {budget}]: {why}", k + 1);
                failed.push(k + 1);
            }
        }
    }
    if failed.is_empty() {
        println!("acceptance: all 10 criteria pass");
    } else {
        println!("acceptance: failing criteria {failed:?}");
        std::process::exit(1);
    }
}
