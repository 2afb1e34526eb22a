//! `adia-strips`: solve, verify and sweep adiabatic holomorphic strips.
//!
//! Exit codes: 0 success, 2 numerical failure (divergence, envelope
//! violation, trend failure), 3 bad config or missing artifacts, 4 a sweep
//! row diverged, 1 anything else (I/O).

use adia_core::adiabatic_lab::{rescale, run_sweep_jobs, SweepOutput};
use adia_core::artifacts::{flow_csv, profile_csv, read_strip_csv, strip_csv, svg_plot, table_csv, Series};
use adia_core::config::{ConfigError, ProblemConfig};
use adia_core::estimates::{c1_envelope, check_decay_bound, default_delta, gamma_profile};
use adia_core::geometry::{catalog_charts, catalog_morse, wrap, Pt};
use adia_core::morse_flow::{assemble_broken, find_criticals};
use adia_core::strip_solver::{solve_problem, SolveError, StripField};
use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "adia-strips", version, about = "Holomorphic strips with adiabatic boundary conditions")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    /// Output directory (overridden by ADIA_STRIPS_OUT).
    #[arg(long, default_value = "adia-out")]
    out: PathBuf,
    /// Seed for perturbed initial guesses.
    #[arg(long)]
    seed: Option<u64>,
    /// Newton residual tolerance.
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve one strip.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Check the decay envelope on the artifacts of `solve`.
    Verify {
        /// Directory written by `solve`.
        artifacts: PathBuf,
        /// Problem file; defaults to the copy stored with the artifacts.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Run an ε ladder.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Worker threads for per-row post-processing.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Critical points and flow lines of the configured Morse function.
    Flow {
        #[arg(long)]
        config: PathBuf,
        /// Assemble a broken flow line from x_minus to this point instead of
        /// integrating forward.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        to: Option<Vec<f64>>,
        /// Flow time for forward integration.
        #[arg(long, default_value_t = 4.0)]
        length: f64,
        #[command(flatten)]
        common: Common,
    },
    /// List built-in charts and Morse functions.
    Catalog,
}

/// Failure with a specific exit code.
#[derive(Debug)]
struct Exit(u8, String);

impl std::fmt::Display for Exit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.1)
    }
}

impl std::error::Error for Exit {}

fn exit(code: u8, msg: impl Into<String>) -> anyhow::Error {
    Exit(code, msg.into()).into()
}

fn config_error(e: ConfigError) -> anyhow::Error {
    exit(3, e.to_string())
}

#[derive(Serialize)]
struct ArtifactHash {
    file: String,
    sha256: String,
}

#[derive(Serialize)]
struct RunManifest {
    command: String,
    config: Option<String>,
    output_dir: String,
    seed: Option<u64>,
    tool_version: String,
    wall_time_s: f64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    row_runtimes_s: Vec<f64>,
    artifacts: Vec<ArtifactHash>,
}

/// Collects artifact bytes, writes them, and finally the manifest.
struct Outputs {
    dir: PathBuf,
    files: Vec<ArtifactHash>,
}

impl Outputs {
    fn new(requested: &Path) -> Result<Self> {
        let dir = std::env::var_os("ADIA_STRIPS_OUT").map(PathBuf::from).unwrap_or_else(|| requested.to_path_buf());
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Outputs { dir, files: Vec::new() })
    }

    fn write(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> Result<()> {
        let bytes = bytes.as_ref();
        std::fs::write(self.dir.join(name), bytes).with_context(|| format!("writing {name}"))?;
        self.files.push(ArtifactHash { file: name.to_string(), sha256: format!("{:x}", Sha256::digest(bytes)) });
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text)
    }

    fn finish(mut self, command: &str, config: Option<&Path>, seed: Option<u64>, start: Instant, rows: Vec<f64>) -> Result<()> {
        self.files.sort_by(|a, b| a.file.cmp(&b.file));
        let manifest = RunManifest {
            command: command.into(),
            config: config.map(|p| p.display().to_string()),
            output_dir: self.dir.display().to_string(),
            seed,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            wall_time_s: start.elapsed().as_secs_f64(),
            row_runtimes_s: rows,
            artifacts: std::mem::take(&mut self.files),
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        std::fs::write(self.dir.join("manifest.json"), text).context("writing manifest.json")?;
        Ok(())
    }
}

fn load(path: &Path) -> Result<ProblemConfig> {
    ProblemConfig::load(path).map_err(config_error)
}

/// Horizontal part along `t = ½` and the vertical part along `t = 1`.
fn strip_plot(u: &StripField, title: &str) -> String {
    let mid = u.nt / 2;
    let mut series = Vec::new();
    let names = [["Q1(s, 1/2)", "P1(s, 1)"], ["Q2(s, 1/2)", "P2(s, 1)"]];
    for c in 0..u.dim {
        series.push(Series { label: names[c][0], points: (0..=u.ns).map(|i| (u.s(i), u.q[u.idx(i, mid)][c])).collect() });
        series.push(Series { label: names[c][1], points: (0..=u.ns).map(|i| (u.s(i), u.p[u.idx(i, u.nt)][c])).collect() });
    }
    svg_plot(title, "s", "value", &series)
}

fn cmd_solve(config: &Path, common: &Common) -> Result<()> {
    let start = Instant::now();
    let cfg = load(config)?;
    let problem = cfg.problem().map_err(config_error)?;
    let seed = common.seed.unwrap_or(cfg.solver.seed);
    let opts = cfg.newton(common.tol);
    let mut out = Outputs::new(&common.out)?;
    out.write("problem.toml", cfg.to_toml())?;
    let result = solve_problem(&problem, &opts, cfg.solver.continuation_steps, seed);
    let outcome = match result {
        Ok((u, report)) => {
            out.write("strip.csv", strip_csv(&u))?;
            out.write("strip.svg", strip_plot(&u, "solved strip"))?;
            out.json("report.json", &report)?;
            println!(
                "converged: residual {:.3e}, {} Newton steps, energy {:.6e}",
                report.residual_norm, report.newton_iters, report.energy
            );
            Ok(())
        }
        Err(SolveError::SingularJacobian { report }) => {
            out.json("report.json", &report)?;
            Err(exit(2, "singular Jacobian"))
        }
        Err(SolveError::Strip(e)) => Err(exit(3, e.to_string())),
        Err(e) => Err(exit(2, e.to_string())),
    };
    out.finish("solve", Some(config), Some(seed), start, Vec::new())?;
    outcome
}

fn cmd_verify(artifacts: &Path, config: Option<&Path>, common: &Common) -> Result<()> {
    let start = Instant::now();
    let cfg_path = config.map(Path::to_path_buf).unwrap_or_else(|| artifacts.join("problem.toml"));
    if !cfg_path.exists() {
        return Err(exit(3, format!("missing {}", cfg_path.display())));
    }
    let cfg = load(&cfg_path)?;
    let problem = cfg.problem().map_err(config_error)?;
    let strip_path = artifacts.join("strip.csv");
    let bytes = std::fs::read(&strip_path).map_err(|e| exit(3, format!("{}: {e}", strip_path.display())))?;
    let u = read_strip_csv(&bytes).map_err(|e| exit(3, format!("{}: {e}", strip_path.display())))?;
    if u.dim != problem.bc.dim() {
        return Err(exit(3, "strip dimension does not match the problem"));
    }
    let prof = gamma_profile(&problem.chart, &u, &problem.bc, default_delta()).map_err(|e| exit(3, e.to_string()))?;
    let big_r = u.half_length() - 1.0;
    let mut report = check_decay_bound(&prof, big_r);
    let c1 = c1_envelope(&problem.chart, &u, &problem.bc, big_r, 0.5 * default_delta())?;
    report.c1_kappa = Some(c1.kappa);
    let mut out = Outputs::new(&common.out)?;
    out.write("gamma_profile.csv", profile_csv(&prof, &report))?;
    out.json("estimate_report.json", &report)?;
    let lhs: Vec<(f64, f64)> = report.s.iter().copied().zip(report.lhs.iter().copied()).collect();
    let env: Vec<(f64, f64)> = report.s.iter().copied().zip(report.envelope.iter().copied()).collect();
    out.write(
        "gamma.svg",
        svg_plot(
            "decay envelope",
            "s",
            "gamma + window integral",
            &[Series { label: "measured", points: lhs }, Series { label: "envelope", points: env }],
        ),
    )?;
    out.finish("verify", Some(&cfg_path), None, start, Vec::new())?;
    println!("K = {:.3e}, kappa = {:.3e}, violations = {}", report.measured_k, c1.kappa, report.violations);
    if report.violations > 0 {
        return Err(exit(2, format!("{} envelope violations", report.violations)));
    }
    Ok(())
}

fn overlay(sweep: &SweepOutput, k: usize, u: &StripField, eps: f64) -> String {
    let v = rescale(u, eps);
    let mid = v.nt / 2;
    let mut series = Vec::new();
    let labels = [["strip Q1", "flow q1"], ["strip Q2", "flow q2"]];
    for c in 0..v.dim {
        series.push(Series { label: labels[c][0], points: (0..=v.ns).map(|i| (v.s(i), v.q[v.idx(i, mid)][c])).collect() });
        let mut pts = Vec::new();
        let shift = match sweep.table.mode {
            adia_core::CompareMode::FiniteFlow => v.s_min,
            adia_core::CompareMode::BrokenFlow => 0.0,
        };
        for seg in &sweep.path.segments {
            for (m, q) in seg.samples.iter().enumerate() {
                pts.push((shift + seg.sigma0 + m as f64 * seg.step, q[c]));
            }
        }
        series.push(Series { label: labels[c][1], points: pts });
    }
    svg_plot(&format!("row {k}: eps = {eps}"), "rescaled s", "q", &series)
}

fn cmd_sweep(config: &Path, jobs: usize, common: &Common) -> Result<()> {
    let start = Instant::now();
    let cfg = load(config)?;
    let seed = common.seed.unwrap_or(cfg.solver.seed);
    let sweep = cfg.sweep(common.tol, Some(seed)).map_err(config_error)?;
    let result = run_sweep_jobs(&sweep, jobs).map_err(|e| exit(3, e.to_string()))?;
    let mut out = Outputs::new(&common.out)?;
    out.write("problem.toml", cfg.to_toml())?;
    out.write("table.csv", table_csv(&result.table))?;
    out.json("table.json", &result.table)?;
    out.write("reference_flow.csv", flow_csv(&result.path))?;
    for (k, s) in result.strips.iter().enumerate() {
        if let Some(u) = s {
            out.write(&format!("row{k}_strip.csv"), strip_csv(u))?;
            out.write(&format!("row{k}_overlay.svg"), overlay(&result, k, u, sweep.eps_ladder[k]))?;
        }
    }
    out.finish("sweep", Some(config), Some(seed), start, result.runtimes.clone())?;
    for r in &result.table.rows {
        println!(
            "eps {:<8} converged {:<5} sup_dist {:.4e} energy {:.4e} K {:.3e} kappa {:.3e}",
            r.eps, r.converged, r.sup_dist, r.energy, r.measured_k, r.measured_kappa
        );
    }
    if !result.table.all_converged() {
        return Err(exit(4, "a sweep row diverged"));
    }
    if !result.table.decreasing_within(|r| r.sup_dist, 0.1, true) {
        return Err(exit(2, "sup_dist trend failed"));
    }
    Ok(())
}

#[derive(Serialize)]
struct CriticalSummary {
    location: Vec<f64>,
    index: usize,
    value: f64,
}

impl CriticalSummary {
    fn new(c: &adia_core::CriticalPoint, f: &adia_core::MorseData, d: usize) -> Self {
        let q = wrap(&c.location, d);
        CriticalSummary { location: q.as_slice()[..d].to_vec(), index: c.index, value: f.f(&c.location) }
    }
}

#[derive(Serialize)]
struct FlowSummary {
    kind: String,
    criticals: Vec<CriticalSummary>,
    crossed: Vec<CriticalSummary>,
    segments: usize,
}

fn cmd_flow(config: &Path, to: Option<&[f64]>, length: f64, common: &Common) -> Result<()> {
    let start = Instant::now();
    let cfg = load(config)?;
    let problem = cfg.problem().map_err(config_error)?;
    let f = &problem.bc.f;
    let chart = &problem.chart;
    let d = f.dim();
    let cps = find_criticals(chart, f)?;
    let mut out = Outputs::new(&common.out)?;
    let mut text = String::from(if d == 1 { "q1,index,f\n" } else { "q1,q2,index,f\n" });
    for c in &cps {
        let q = wrap(&c.location, d);
        let coords: Vec<String> = (0..d).map(|k| format!("{:?}", q[k])).collect();
        text.push_str(&format!("{},{},{:?}\n", coords.join(","), c.index, f.f(&c.location)));
    }
    out.write("criticals.csv", text)?;
    let x_minus = problem.end.x_minus();
    let path = match to {
        Some(v) => {
            if v.len() != d {
                return Err(exit(3, format!("--to needs {d} coordinates")));
            }
            let mut x_plus = Pt::zeros();
            x_plus.as_mut_slice()[..d].copy_from_slice(v);
            assemble_broken(chart, f, &x_minus, &x_plus, 4).map_err(|e| exit(2, e.to_string()))?
        }
        None => adia_core::adiabatic_lab::reference_flow(chart, f, &x_minus, length)?,
    };
    out.write("flow.csv", flow_csv(&path))?;
    let summary = FlowSummary {
        kind: format!("{:?}", path.kind),
        criticals: cps.iter().map(|c| CriticalSummary::new(c, f, d)).collect(),
        crossed: path.crossed.iter().map(|c| CriticalSummary::new(c, f, d)).collect(),
        segments: path.segments.len(),
    };
    out.json("flow.json", &summary)?;
    out.finish("flow", Some(config), None, start, Vec::new())?;
    println!("{} critical points, path kind {:?} with {} segments", cps.len(), path.kind, path.segments.len());
    Ok(())
}

fn cmd_catalog() {
    println!("charts:");
    for e in catalog_charts() {
        println!("  {:<20} d={:<4} {:<45} {}", e.id, e.dims, e.formula, e.params);
    }
    println!("morse functions:");
    for e in catalog_morse() {
        println!("  {:<20} d={:<4} {:<45} {}", e.id, e.dims, e.formula, e.params);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Cmd::Solve { config, common } => cmd_solve(&config, &common),
        Cmd::Verify { artifacts, config, common } => cmd_verify(&artifacts, config.as_deref(), &common),
        Cmd::Sweep { config, jobs, common } => cmd_sweep(&config, jobs, &common),
        Cmd::Flow { config, to, length, common } => cmd_flow(&config, to.as_deref(), length, &common),
        Cmd::Catalog => {
            cmd_catalog();
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 3 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<Exit>() {
                Some(Exit(code, _)) => ExitCode::from(*code),
                None => ExitCode::from(1),
            }
        }
    }
}
