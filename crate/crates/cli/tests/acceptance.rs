//! Acceptance suite: one line per criterion, non-zero exit if any fails.
//!
//! `cargo test --test acceptance` runs everything; `-- 4 10` runs a subset.

use adia_core::adiabatic_lab::{
    extract_broken, morse_energy, rescale, run_sweep, CompareMode, SweepConfig, SweepOutput,
};
use adia_core::artifacts::{strip_csv, table_csv};
use adia_core::estimates::{check_decay_bound, default_delta, gamma_profile, poincare_terms, C_PC};
use adia_core::geometry::{
    christoffel, j0_apply, metric_tt, omega, torus_dist, CotangentVec, MetricChart, MorseData, Pt,
};
use adia_core::morse_flow::{find_criticals, PathKind, CP_TOL};
use adia_core::strip_solver::{
    cr_residual, interchange_defect, omega_energy, solve_problem, stokes_energy, AdiabaticData, EndCondition,
    Formulation, NewtonOptions, StripField, StripProblem,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::path::PathBuf;
use std::process::Command;
use std::time::Instant;

struct Outcome {
    pass: bool,
    detail: String,
}

/// Strips whose energies feed criterion 6.
#[derive(Default)]
struct Shared {
    strips: Vec<(String, StripField, AdiabaticData, f64)>,
    sweep: Option<(SweepConfig, SweepOutput)>,
}

fn charts() -> Vec<(&'static str, MetricChart)> {
    vec![
        ("flat-1d", MetricChart::flat(1).unwrap()),
        ("flat-2d", MetricChart::flat(2).unwrap()),
        ("conformal-1d", MetricChart::conformal_1d(0.2).unwrap()),
        ("diag-perturbed-2d", MetricChart::diag_perturbed_2d(0.3).unwrap()),
        (
            "spectral-2d",
            MetricChart::spectral(2, |q: &Pt| {
                let a = 0.2 * (2.0 * PI * q[0]).sin();
                let b = 0.1 * (2.0 * PI * (q[0] + q[1])).cos();
                nalgebra::Matrix2::new(1.0 + a, b, b, 1.0 - 0.5 * a)
            })
            .unwrap(),
        ),
    ]
}

fn random_pt(rng: &mut ChaCha8Rng, dim: usize, lo: f64, hi: f64) -> Pt {
    let mut p = Pt::zeros();
    for c in 0..dim {
        p[c] = rng.gen_range(lo..hi);
    }
    p
}

fn c1_identities(_: &mut Shared) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cs = charts();
    let per = 10_000 / cs.len();
    let (mut j2, mut kahler, mut sym): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for (_, chart) in &cs {
        let d = chart.dim();
        for _ in 0..per {
            let q = random_pt(&mut rng, d, 0.0, 1.0);
            let x = CotangentVec::new(random_pt(&mut rng, d, -1.0, 1.0), random_pt(&mut rng, d, -1.0, 1.0));
            let y = CotangentVec::new(random_pt(&mut rng, d, -1.0, 1.0), random_pt(&mut rng, d, -1.0, 1.0));
            let jjx = j0_apply(chart, &q, &j0_apply(chart, &q, &x));
            j2 = j2.max((jjx.h + x.h).norm()).max((jjx.v + x.v).norm());
            let lhs = omega(&x, &j0_apply(chart, &q, &y));
            kahler = kahler.max((lhs - metric_tt(chart, &q, &x, &y)).abs());
            let gam = christoffel(chart, &q).unwrap();
            for k in 0..2 {
                for i in 0..2 {
                    for j in 0..2 {
                        sym = sym.max((gam[k][i][j] - gam[k][j][i]).abs());
                    }
                }
            }
        }
    }
    Outcome {
        pass: j2 <= 1e-12 && kahler <= 1e-12 && sym == 0.0,
        detail: format!("{} samples: |J0^2+I| {j2:.1e}, |w(X,JY)-g(X,Y)| {kahler:.1e}, Gamma asym {sym:.1e}", per * cs.len()),
    }
}

fn c2_interchange(_: &mut Shared) -> Outcome {
    type MapFn = fn(f64, f64) -> Pt;
    let maps: Vec<(&str, MetricChart, MapFn)> = vec![
        ("conformal-1d", MetricChart::conformal_1d(0.2).unwrap(), |s, t| {
            Pt::new(0.3 * s + 0.2 * (PI * t).sin() + 0.1 * s * t, 0.0)
        }),
        ("diag-perturbed-2d", MetricChart::diag_perturbed_2d(0.3).unwrap(), |s, t| {
            Pt::new(s + 0.2 * (2.0 * PI * t).sin(), t + 0.3 * (PI * s).cos())
        }),
        ("spectral-2d", charts().remove(4).1, |s, t| Pt::new(0.5 * s * t + 0.1, s.sin() + t * t)),
    ];
    let mut worst_order = f64::INFINITY;
    let mut parts = Vec::new();
    for (name, chart, map) in &maps {
        let errs: Vec<f64> = [32usize, 64, 128]
            .iter()
            .map(|&n| {
                let mut u = StripField::on_rect(chart.dim(), 0.0, 1.0, 1.0, n, n).unwrap();
                for i in 0..=n {
                    for j in 0..=n {
                        let k = u.idx(i, j);
                        u.q[k] = map(u.s(i), u.t(j));
                    }
                }
                interchange_defect(chart, &u).unwrap()
            })
            .collect();
        let o1 = (errs[0] / errs[1]).log2();
        let o2 = (errs[1] / errs[2]).log2();
        worst_order = worst_order.min(o1).min(o2);
        parts.push(format!("{name} {o1:.2}/{o2:.2}"));
    }
    Outcome { pass: worst_order >= 1.8, detail: format!("observed orders {}", parts.join(", ")) }
}

fn c3_poincare(_: &mut Shared) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cs = charts();
    let n = 201;
    let h = 1.0 / (n - 1) as f64;
    let mut violations = 0;
    let mut worst_ratio: f64 = 0.0;
    let total = 10_000;
    for trial in 0..total {
        let chart = &cs[trial % cs.len()].1;
        let d = chart.dim();
        let q0 = random_pt(&mut rng, d, 0.0, 1.0);
        let qa = random_pt(&mut rng, d, -1.0, 1.0);
        let qb = random_pt(&mut rng, d, -0.5, 0.5);
        let modes = rng.gen_range(1..=5);
        let coeffs: Vec<(usize, Pt)> = (0..modes).map(|_| (rng.gen_range(1..=6), random_pt(&mut rng, d, -1.0, 1.0))).collect();
        let mut q = Vec::with_capacity(n);
        let mut p = Vec::with_capacity(n);
        for k in 0..n {
            let t = k as f64 * h;
            q.push(q0 + qa * t + qb * (2.0 * PI * t).sin());
            let mut pk = Pt::zeros();
            for (m, c) in &coeffs {
                pk += c * (*m as f64 * PI * t).sin();
            }
            p.push(pk);
        }
        let (a, b) = poincare_terms(chart, &q, &p, h).unwrap();
        worst_ratio = worst_ratio.max(a / b);
        if a > C_PC * b * (1.0 + 10.0 * h * h) {
            violations += 1;
        }
    }
    Outcome {
        pass: violations == 0,
        detail: format!("{total} sections, {violations} violations, max |P|^2/|dP|^2 = {worst_ratio:.4} (c_pc = {C_PC})"),
    }
}

fn flat_d1(eps: f64) -> (MetricChart, AdiabaticData) {
    let chart = MetricChart::flat(1).unwrap();
    let f = MorseData::cosine_wells(1, &[0.1], &[1.0], &[0.0]).unwrap();
    (chart, AdiabaticData::new(Pt::zeros(), f, eps).unwrap())
}

fn c4_floer(shared: &mut Shared) -> Outcome {
    let (chart, bc) = flat_d1(0.1);
    let end = EndCondition::FloerSeeded { x_minus: Pt::new(0.2, 0.0), perturb: 0.01 };
    let problem = StripProblem { chart, bc: bc.clone(), r: 20.0, ns: 800, nt: 40, end, formulation: Formulation::Modified };
    let opts = NewtonOptions::default();
    match solve_problem(&problem, &opts, 8, 4) {
        Ok((u, rep)) => {
            let oracle = problem.oracle().unwrap();
            let h = u.hs().max(u.ht());
            let dist = u.sup_distance(&oracle);
            shared.strips.push(("floer r=20".into(), u, bc, opts.res_tol));
            Outcome {
                pass: rep.converged && dist <= 10.0 * h * h,
                detail: format!(
                    "{} Newton steps, residual {:.1e}, sup dist {dist:.2e} <= 10h^2 = {:.2e}",
                    rep.newton_iters,
                    rep.residual_norm,
                    10.0 * h * h
                ),
            }
        }
        Err(e) => Outcome { pass: false, detail: format!("solve failed: {e}") },
    }
}

fn c5_annulus(_: &mut Shared) -> Outcome {
    let (chart, bc) = flat_d1(0.0);
    let mut ok = true;
    let mut parts = Vec::new();
    for n in [8usize, 16, 32, 64] {
        let mut u = StripField::on_rect(1, 0.0, 1.0, 1.0, n, n).unwrap();
        for i in 0..=n {
            for j in 0..=n {
                let k = u.idx(i, j);
                u.q[k] = Pt::new(u.s(i), 0.0);
                u.p[k] = Pt::new(u.t(j), 0.0);
            }
        }
        let h = 1.0 / n as f64;
        // the strip's graph conditions are not the annulus's, so interior equations only
        let res = cr_residual(&chart, &u, &bc, Formulation::Direct).unwrap().max_abs(&u, true);
        let e = omega_energy(&u);
        ok &= res <= h * h && (e - 1.0).abs() <= 2.0 * h * h;
        parts.push(format!("n={n}: res {res:.1e}, E-1 {:.1e}", e - 1.0));
    }
    Outcome { pass: ok, detail: parts.join("; ") }
}

fn c6_stokes(shared: &mut Shared) -> Outcome {
    if shared.strips.is_empty() {
        return Outcome { pass: false, detail: "no converged strips from criteria 4 and 8".into() };
    }
    let mut ok = true;
    let mut worst: f64 = 0.0;
    for (_, u, bc, tol) in &shared.strips {
        let h = u.hs().max(u.ht());
        let gap = (omega_energy(u) - stokes_energy(u, bc).total).abs();
        worst = worst.max(gap / (h * h + tol));
        ok &= gap <= 5.0 * (h * h + tol);
    }
    Outcome {
        pass: ok,
        detail: format!("{} strips, max |E - stokes| / (h^2 + tol) = {worst:.3} (bound 5)", shared.strips.len()),
    }
}

fn sweep_config() -> SweepConfig {
    let (chart, bc) = flat_d1(0.2);
    let problem = StripProblem {
        chart,
        bc,
        r: 10.0,
        ns: 400,
        nt: 20,
        end: EndCondition::Dirichlet { x_minus: Pt::new(0.2, 0.0) },
        formulation: Formulation::Direct,
    };
    SweepConfig {
        eps_ladder: vec![0.2, 0.1, 0.05, 0.025],
        ell: 2.0,
        h_s: 0.05,
        nt: 20,
        problem,
        mode: CompareMode::FiniteFlow,
        opts: NewtonOptions::default(),
        continuation_steps: 8,
        seed: 0,
    }
}

fn ensure_sweep(shared: &mut Shared) -> Result<(), String> {
    if shared.sweep.is_some() {
        return Ok(());
    }
    let cfg = sweep_config();
    let out = run_sweep(&cfg).map_err(|e| e.to_string())?;
    for (k, s) in out.strips.iter().enumerate() {
        if let Some(u) = s {
            let bc = cfg.problem.bc.with_eps(cfg.eps_ladder[k]);
            shared.strips.push((format!("sweep eps={}", cfg.eps_ladder[k]), u.clone(), bc, cfg.opts.res_tol));
        }
    }
    shared.sweep = Some((cfg, out));
    Ok(())
}

fn c7_decay(shared: &mut Shared) -> Outcome {
    if let Err(e) = ensure_sweep(shared) {
        return Outcome { pass: false, detail: e };
    }
    let (cfg, out) = shared.sweep.as_ref().unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    for target in [0.1, 0.05] {
        let k = cfg.eps_ladder.iter().position(|e| *e == target).unwrap();
        let Some(u) = &out.strips[k] else {
            ok = false;
            parts.push(format!("eps={target}: not solved"));
            continue;
        };
        let bc = cfg.problem.bc.with_eps(target);
        let prof = gamma_profile(&cfg.problem.chart, u, &bc, default_delta()).unwrap();
        let rep = check_decay_bound(&prof, u.half_length() - 1.0);
        ok &= rep.violations == 0;
        parts.push(format!("eps={target}: {} violations, K={:.3e}", rep.violations, rep.measured_k));
    }
    Outcome { pass: ok, detail: parts.join("; ") }
}

fn c8_trend(shared: &mut Shared) -> Outcome {
    if let Err(e) = ensure_sweep(shared) {
        return Outcome { pass: false, detail: e };
    }
    let (_, out) = shared.sweep.as_ref().unwrap();
    let t = &out.table;
    let dists: Vec<String> = t.rows.iter().map(|r| format!("{:.3e}", r.sup_dist)).collect();
    let last = t.rows.last().map(|r| r.sup_dist).unwrap_or(f64::NAN);
    let total: f64 = out.runtimes.iter().sum();
    Outcome {
        pass: t.all_converged() && t.decreasing_within(|r| r.sup_dist, 0.1, true) && last < 0.05,
        detail: format!("sup_dist [{}], solve time {total:.1}s", dists.join(", ")),
    }
}

fn c9_constants(shared: &mut Shared) -> Outcome {
    if let Err(e) = ensure_sweep(shared) {
        return Outcome { pass: false, detail: e };
    }
    let (_, out) = shared.sweep.as_ref().unwrap();
    let t = &out.table;
    let ks: Vec<String> = t.rows.iter().map(|r| format!("{:.3e}", r.measured_k)).collect();
    let kappas: Vec<String> = t.rows.iter().map(|r| format!("{:.3e}", r.measured_kappa)).collect();
    Outcome {
        pass: t.decreasing_within(|r| r.measured_k, 0.1, false) && t.decreasing_within(|r| r.measured_kappa, 0.1, false),
        detail: format!("K [{}], kappa [{}]", ks.join(", "), kappas.join(", ")),
    }
}

/// RK4 for `q' = df(q)` under the flat metric, `n` steps of size `h`.
fn rk4_flat(f: &MorseData, q0: Pt, h: f64, n: usize) -> Vec<Pt> {
    let mut out = vec![q0];
    let mut q = q0;
    for _ in 0..n {
        let k1 = f.df(&q);
        let k2 = f.df(&(q + 0.5 * h * k1));
        let k3 = f.df(&(q + 0.5 * h * k2));
        let k4 = f.df(&(q + h * k3));
        q += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        out.push(q);
    }
    out
}

fn c10_broken(_: &mut Shared) -> Outcome {
    let chart = MetricChart::flat(2).unwrap();
    let f = MorseData::cosine_wells(2, &[1.0], &[1.0], &[0.0]).unwrap();
    let eps = 0.1;
    let hs = 0.025;
    let h_sigma = eps * hs;
    // minimum side of the saddle (½, 0), then up its unstable direction to the max (½, ½)
    let seg = |q0: Pt, len: f64| rk4_flat(&f, q0, h_sigma, (len / h_sigma).round() as usize);
    let plateau = |y: Pt, len: f64| vec![y; (len / h_sigma).round() as usize];
    let saddle = Pt::new(0.5, 0.0);
    let top = Pt::new(0.5, 0.5);
    let mut sigma_path: Vec<Pt> = Vec::new();
    sigma_path.extend(seg(Pt::new(0.1, 0.0), 1.0));
    sigma_path.extend(plateau(saddle, 3.0));
    sigma_path.extend(seg(Pt::new(0.5, 1e-8), 1.5));
    sigma_path.extend(plateau(top, 3.0));
    let ns = sigma_path.len() - 1;
    let nt = 10;
    let s_len = ns as f64 * hs;
    let mut u = StripField::on_rect(2, -0.5 * s_len, 0.5 * s_len, 1.0, ns, nt).unwrap();
    for (i, q) in sigma_path.iter().enumerate() {
        let df = f.df(q);
        for j in 0..=nt {
            let k = u.idx(i, j);
            u.q[k] = *q;
            u.p[k] = eps * u.t(j) * df;
        }
    }
    let v = rescale(&u, eps);
    let ex = match extract_broken(&chart, &v, &f, CP_TOL) {
        Ok(ex) => ex,
        Err(e) => return Outcome { pass: false, detail: format!("extraction failed: {e}") },
    };
    let cps = find_criticals(&chart, &f).unwrap();
    let want: Vec<_> = [saddle, top]
        .iter()
        .filter_map(|y| cps.iter().find(|c| torus_dist(&c.location, y, 2) < 1e-9).copied())
        .collect();
    let values = ex.path.critical_values(&f);
    let increasing = values.windows(2).all(|w| w[1] > w[0]);
    // Morse energy over each piece and over the whole strip
    let h = hs.max(1.0 / nt as f64);
    let c = 10.0;
    let mut worst: f64 = 0.0;
    let mut ranges = ex.pieces.clone();
    ranges.push((0, ns));
    for &(a, b) in &ranges {
        let me = morse_energy(&v, eps, a, b);
        let df = f.f(&v.q[v.idx(b, nt)]) - f.f(&v.q[v.idx(a, nt)]);
        worst = worst.max((me - df).abs());
    }
    let pass = ex.path.crossed == want
        && ex.path.kind == PathKind::Broken
        && increasing
        && worst <= c * (h * h + eps);
    Outcome {
        pass,
        detail: format!(
            "crossed {:?}, f values {values:?}, max |ME - df| {worst:.2e} <= {:.2e}",
            ex.path.crossed.iter().map(|c| (c.location[0], c.location[1], c.index)).collect::<Vec<_>>(),
            c * (h * h + eps)
        ),
    }
}

const SWEEP_TOML: &str = r#"
[chart]
kind = "flat"
dim = 1

[morse]
amp = [0.1]

[boundary]
eps = 0.2

[strip]
r = 10.0
ns = 400
nt = 20
x_minus = [0.2]

[solver]
res_tol = 1e-9
continuation_steps = 8
seed = 0

[sweep]
eps = [0.2, 0.1, 0.05, 0.025]
ell = 2.0
h_s = 0.05
nt = 20
mode = "finite_flow"
"#;

fn c11_determinism(shared: &mut Shared) -> Outcome {
    if let Err(e) = ensure_sweep(shared) {
        return Outcome { pass: false, detail: e };
    }
    let (_, out) = shared.sweep.as_ref().unwrap();
    let root = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance-c11");
    let _ = std::fs::remove_dir_all(&root);
    std::fs::create_dir_all(&root).unwrap();
    let cfg_path = root.join("sweep.toml");
    std::fs::write(&cfg_path, SWEEP_TOML).unwrap();
    let out_dir = root.join("out");
    let status = Command::new(env!("CARGO_BIN_EXE_adia-strips"))
        .args(["sweep", "--config"])
        .arg(&cfg_path)
        .arg("--out")
        .arg(&out_dir)
        .args(["--seed", "0"])
        .env_remove("ADIA_STRIPS_OUT")
        .status();
    match status {
        Ok(s) if s.code() == Some(0) => {}
        Ok(s) => return Outcome { pass: false, detail: format!("CLI sweep exited with {s}") },
        Err(e) => return Outcome { pass: false, detail: format!("cannot run CLI: {e}") },
    }
    let mut mismatches = Vec::new();
    let table = std::fs::read(out_dir.join("table.csv")).unwrap_or_default();
    if table != table_csv(&out.table) {
        mismatches.push("table.csv".to_string());
    }
    let mut compared = 1;
    for (k, s) in out.strips.iter().enumerate() {
        if let Some(u) = s {
            let name = format!("row{k}_strip.csv");
            compared += 1;
            if std::fs::read(out_dir.join(&name)).unwrap_or_default() != strip_csv(u) {
                mismatches.push(name);
            }
        }
    }
    Outcome {
        pass: mismatches.is_empty(),
        detail: format!("{compared} CSVs compared, mismatches {mismatches:?}"),
    }
}

type Criterion = fn(&mut Shared) -> Outcome;

fn main() {
    let criteria: [(usize, &str, Criterion, f64); 11] = [
        (1, "algebraic identities", c1_identities, 5.0),
        (2, "interchange lemma order", c2_interchange, 10.0),
        (3, "Poincare inequality", c3_poincare, 30.0),
        (4, "Floer strip reconvergence", c4_floer, 60.0),
        (5, "flat annulus reproduction", c5_annulus, 5.0),
        (7, "decay envelope", c7_decay, 120.0),
        (8, "adiabatic convergence trend", c8_trend, 600.0),
        (9, "constant trends", c9_constants, f64::INFINITY),
        (10, "broken flow recovery", c10_broken, 60.0),
        (11, "determinism", c11_determinism, f64::INFINITY),
        (6, "Stokes consistency", c6_stokes, f64::INFINITY),
    ];
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut shared = Shared::default();
    let mut failed = 0;
    for (n, name, run, budget) in criteria {
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let out = run(&mut shared);
        let secs = start.elapsed().as_secs_f64();
        let pass = out.pass && secs <= budget;
        if !pass {
            failed += 1;
        }
        let budget = if budget.is_finite() { format!(" / {budget:.0}s") } else { String::new() };
        println!(
            "criterion {n:>2} {:<4} {name}: {} [{secs:.1}s{budget}]",
            if pass { "PASS" } else { "FAIL" },
            out.detail
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
