//! ε → 0 sweeps: solve families of strips, rescale them, and compare their
//! horizontal parts with (broken) gradient flow lines.

use crate::estimates::{c1_envelope, check_decay_bound, default_delta, gamma_profile, EstimateError};
use crate::geometry::{torus_dist, CriticalPoint, GeometryError, MetricChart, MorseData, Pt};
use crate::morse_flow::{find_criticals, integrate_flow, FlowError, FlowPath, PathKind, Segment, CP_TOL};
use crate::strip_solver::{
    solve_problem, solve_strip, stokes_energy, NewtonOptions, SolveError, StripError, StripField, StripProblem,
};
use serde::{Deserialize, Serialize};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error("invalid sweep configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Strip(#[from] StripError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error("plateau on [{0}, {1}] does not sit at a critical point")]
    InconsistentLimit(f64, f64),
    #[error("critical values along the recovered chain are not strictly increasing")]
    NonMonotone,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompareMode {
    FiniteFlow,
    BrokenFlow,
}

#[derive(Clone, Debug)]
pub struct SweepConfig {
    pub eps_ladder: Vec<f64>,
    pub ell: f64,
    /// Grid policy: `Ns = round(2r / h_s)`, `Nt` fixed.
    pub h_s: f64,
    pub nt: usize,
    /// Problem template; `r`, `ns`, `nt` and ε are overwritten per row.
    pub problem: StripProblem,
    pub mode: CompareMode,
    pub opts: NewtonOptions,
    pub continuation_steps: usize,
    pub seed: u64,
}

/// Upper bound on unknowns per solve.
pub const MAX_UNKNOWNS: usize = 4_000_000;

impl SweepConfig {
    pub fn validate(&self) -> Result<(), LabError> {
        if self.eps_ladder.is_empty() {
            return Err(LabError::Config("empty eps ladder".into()));
        }
        if self.eps_ladder.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return Err(LabError::Config("eps values must be positive".into()));
        }
        if self.eps_ladder.windows(2).any(|w| w[1] >= w[0]) {
            return Err(LabError::Config("eps ladder must be strictly decreasing".into()));
        }
        if !(self.ell > 0.0 && self.h_s > 0.0) || self.nt < 2 {
            return Err(LabError::Config("ell, h_s must be positive and nt >= 2".into()));
        }
        for &e in &self.eps_ladder {
            let (ns, nt) = self.grid(e);
            let unknowns = (ns + 1) * (nt + 1) * 2 * self.problem.bc.dim();
            if unknowns > MAX_UNKNOWNS {
                return Err(LabError::Config(format!("eps = {e} needs {unknowns} unknowns")));
            }
        }
        Ok(())
    }

    pub fn grid(&self, eps: f64) -> (usize, usize) {
        let r = self.ell / eps;
        (((2.0 * r / self.h_s).round() as usize).max(2), self.nt)
    }

    pub fn row_problem(&self, eps: f64) -> StripProblem {
        let (ns, nt) = self.grid(eps);
        StripProblem { r: self.ell / eps, ns, nt, ..self.problem.with_eps(eps) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub eps: f64,
    pub r: f64,
    pub ns: usize,
    pub nt: usize,
    pub converged: bool,
    pub residual_norm: f64,
    pub newton_iters: usize,
    pub sup_dist: f64,
    pub energy: f64,
    pub stokes_energy: f64,
    pub morse_energy: f64,
    pub f_difference: f64,
    pub measured_k: f64,
    pub measured_kappa: f64,
    pub violations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceTable {
    pub mode: CompareMode,
    pub ell: f64,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    /// Every step down the ladder satisfies `next < prev · (1 + slack)`.
    pub fn decreasing_within(&self, column: impl Fn(&ConvergenceRow) -> f64, slack: f64, strict: bool) -> bool {
        self.rows.windows(2).all(|w| {
            let (a, b) = (column(&w[0]), column(&w[1]));
            if strict {
                b < a * (1.0 + slack)
            } else {
                b <= a * (1.0 + slack)
            }
        })
    }

    pub fn all_converged(&self) -> bool {
        self.rows.iter().all(|r| r.converged)
    }
}

pub struct SweepOutput {
    pub table: ConvergenceTable,
    /// Reference path the rows were compared with.
    pub path: FlowPath,
    pub strips: Vec<Option<StripField>>,
    /// Wall time per row in seconds (kept out of the table for reproducibility).
    pub runtimes: Vec<f64>,
}

/// `v(s, t) = u(s/ε, t/ε)`: the same samples on `[εs_min, εs_max] × [0, ε t_max]`.
pub fn rescale(u: &StripField, eps: f64) -> StripField {
    StripField { s_min: eps * u.s_min, s_max: eps * u.s_max, t_max: eps * u.t_max, ..u.clone() }
}

pub fn unrescale(v: &StripField, eps: f64) -> StripField {
    rescale(v, 1.0 / eps)
}

/// The flow line through `x₋` at σ = `s_start`, sampled finely enough for
/// Hermite interpolation.
pub fn reference_flow(chart: &MetricChart, f: &MorseData, x_minus: &Pt, length: f64) -> Result<FlowPath, FlowError> {
    let step = (1e-2 / f.df_max().max(1e-300)).min(1e-2);
    let seg = integrate_flow(chart, f, x_minus, length, step)?;
    Ok(FlowPath {
        dim: f.dim(),
        segments: vec![seg],
        crossed: vec![],
        x_minus: *x_minus,
        x_plus: Pt::zeros(),
        kind: PathKind::Finite,
    })
}

/// Largest torus distance from `pr(v)` to the path: finite mode anchors the
/// path start at `σ = s_min` (shift 0); broken mode uses the discrete Fréchet
/// distance to the concatenated segments (optimal monotone matching).
pub fn sup_dist_to_flow(
    chart: &MetricChart,
    f: &MorseData,
    v: &StripField,
    path: &FlowPath,
    mode: CompareMode,
) -> Result<f64, FlowError> {
    let d = v.dim;
    match mode {
        CompareMode::FiniteFlow => {
            let mut worst: f64 = 0.0;
            for i in 0..=v.ns {
                let p = path.eval_first(chart, f, v.s(i) - v.s_min)?;
                for j in 0..=v.nt {
                    worst = worst.max(torus_dist(&v.q[v.idx(i, j)], &p, d));
                }
            }
            Ok(worst)
        }
        CompareMode::BrokenFlow => {
            let pts: Vec<Pt> = path.segments.iter().flat_map(|s| s.samples.iter().copied()).collect();
            let m = pts.len();
            let cost = |i: usize, k: usize| -> f64 {
                (0..=v.nt).map(|j| torus_dist(&v.q[v.idx(i, j)], &pts[k], d)).fold(0.0, f64::max)
            };
            let mut prev = vec![f64::INFINITY; m];
            for i in 0..=v.ns {
                let mut cur = vec![f64::INFINITY; m];
                for k in 0..m {
                    let best = if i == 0 && k == 0 {
                        0.0
                    } else {
                        let mut b = f64::INFINITY;
                        if i > 0 {
                            b = b.min(prev[k]);
                            if k > 0 {
                                b = b.min(prev[k - 1]);
                            }
                        }
                        if k > 0 {
                            b = b.min(cur[k - 1]);
                        }
                        b
                    };
                    cur[k] = best.max(cost(i, k));
                }
                prev = cur;
            }
            Ok(prev[m - 1])
        }
    }
}

/// ω-energy of the columns `i0..=i1` of `u` (trapezoid).
pub fn omega_energy_columns(u: &StripField, i0: usize, i1: usize) -> f64 {
    let dens = column_density(u);
    let hs = u.hs();
    (i0..i1).map(|i| 0.5 * hs * (dens[i] + dens[i + 1])).sum()
}

/// `e(s) = ∫ (⟨∂ₛQ, ∂ₜP⟩ − ⟨∂ₜQ, ∂ₛP⟩) dt` per column.
pub fn column_density(u: &StripField) -> Vec<f64> {
    let ht = u.ht();
    (0..=u.ns)
        .map(|i| {
            (0..=u.nt)
                .map(|j| {
                    let w = if j == 0 || j == u.nt { 0.5 } else { 1.0 } * ht;
                    let (qs, qt) = (u.d_s(&u.q, i, j), u.d_t(&u.q, i, j));
                    let (ps, pt) = (u.d_s(&u.p, i, j), u.d_t(&u.p, i, j));
                    w * (qs.dot(&pt) - qt.dot(&ps))
                })
                .sum()
        })
        .collect()
}

/// Morse energy `ε⁻¹ E(v; [a, b])` of the columns `i0..=i1` of a rescaled strip.
pub fn morse_energy(v: &StripField, eps: f64, i0: usize, i1: usize) -> f64 {
    omega_energy_columns(v, i0, i1) / eps
}

/// ħ proxy: half the smallest positive gap between critical values.
pub fn hbar_default(f: &MorseData) -> Option<f64> {
    let mut vals: Vec<f64> = f.critical_points().iter().map(|c| f.f(&c.location)).collect();
    vals.sort_by(f64::total_cmp);
    vals.windows(2).map(|w| w[1] - w[0]).filter(|g| *g > 1e-12).reduce(f64::min).map(|g| 0.5 * g)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyClass {
    Low,
    High,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EnergyInterval {
    pub s0: f64,
    pub s1: f64,
    pub class: EnergyClass,
}

/// Sliding-window energy `E([s − w, s + w] × [0, 1])` thresholded at ħ; the
/// maximal same-class runs, split at midpoints, tile `[s_min, s_max]`.
pub fn energy_decompose(u: &StripField, window: f64, hbar: f64) -> Result<Vec<EnergyInterval>, LabError> {
    if !(window >= 1.0 && hbar > 0.0) {
        return Err(LabError::Config(format!("window {window} must be >= 1 and hbar {hbar} > 0")));
    }
    let dens = column_density(u);
    let hs = u.hs();
    let mut cum = vec![0.0; u.ns + 1];
    for i in 1..=u.ns {
        cum[i] = cum[i - 1] + 0.5 * hs * (dens[i - 1] + dens[i]);
    }
    let w = (window / hs).round() as usize;
    let class: Vec<EnergyClass> = (0..=u.ns)
        .map(|i| {
            let (a, b) = (i.saturating_sub(w), (i + w).min(u.ns));
            if cum[b] - cum[a] >= hbar {
                EnergyClass::High
            } else {
                EnergyClass::Low
            }
        })
        .collect();
    let mut out = Vec::new();
    let mut start = u.s_min;
    for i in 1..=u.ns {
        if class[i] != class[i - 1] {
            let mid = 0.5 * (u.s(i - 1) + u.s(i));
            out.push(EnergyInterval { s0: start, s1: mid, class: class[i - 1] });
            start = mid;
        }
    }
    out.push(EnergyInterval { s0: start, s1: u.s_max, class: class[u.ns] });
    Ok(out)
}

/// A broken flow line read off a rescaled strip.
#[derive(Clone, Debug, PartialEq)]
pub struct Extraction {
    pub path: FlowPath,
    /// Column ranges of the plateaus, one per crossed critical point.
    pub plateaus: Vec<(usize, usize)>,
    /// Column ranges of the transition pieces between plateaus.
    pub pieces: Vec<(usize, usize)>,
    /// Sup distance of each transition piece to the flow integrated from its start.
    pub match_error: Vec<f64>,
}

/// Plateaus where `pr(v)` stays within `tol` of a critical point for a
/// rescaled length of at least 2 (that is `2/ε` in unrescaled units).
pub fn extract_broken(chart: &MetricChart, v: &StripField, f: &MorseData, tol: f64) -> Result<Extraction, LabError> {
    let d = v.dim;
    let cps: Vec<CriticalPoint> =
        if f.critical_points().is_empty() { find_criticals(chart, f)? } else { f.critical_points().to_vec() };
    let hs = v.hs();
    let plateau_min = 2.0;
    let near = |i: usize| -> Option<usize> {
        cps.iter().position(|c| (0..=v.nt).all(|j| torus_dist(&v.q[v.idx(i, j)], &c.location, d) < tol))
    };
    let labels: Vec<Option<usize>> = (0..=v.ns).map(near).collect();
    let mut plateaus = Vec::new();
    let mut crossed = Vec::new();
    let mut i = 0;
    while i <= v.ns {
        if let Some(c) = labels[i] {
            let mut k = i;
            while k < v.ns && labels[k + 1] == Some(c) {
                k += 1;
            }
            if (k - i) as f64 * hs >= plateau_min {
                plateaus.push((i, k));
                crossed.push(cps[c]);
            }
            i = k + 1;
        } else {
            i += 1;
        }
    }
    // stalls away from critical points
    let mid = v.nt / 2;
    let mut run = 0usize;
    for i in 0..v.ns {
        let speed = torus_dist(&v.q[v.idx(i + 1, mid)], &v.q[v.idx(i, mid)], d) / hs;
        if speed < tol && labels[i].is_none() {
            run += 1;
            if run as f64 * hs >= plateau_min {
                return Err(LabError::InconsistentLimit(v.s(i + 1 - run), v.s(i + 1)));
            }
        } else {
            run = 0;
        }
    }
    let values: Vec<f64> = crossed.iter().map(|c| f.f(&c.location)).collect();
    if values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(LabError::NonMonotone);
    }
    let mut pieces = Vec::new();
    let mut cursor = 0usize;
    for &(a, b) in &plateaus {
        if a > cursor {
            pieces.push((cursor, a));
        }
        cursor = b;
    }
    if cursor < v.ns {
        pieces.push((cursor, v.ns));
    }
    let step_cap = (1e-2 / f.df_max().max(1e-300)).min(hs);
    let sub = (hs / step_cap).ceil() as usize;
    let mut segments = Vec::new();
    let mut match_error = Vec::new();
    for &(a, b) in &pieces {
        let q0 = v.q[v.idx(a, mid)];
        let length = (b - a) as f64 * hs;
        let fine = integrate_flow(chart, f, &q0, length, hs / sub as f64)?;
        let samples: Vec<Pt> = fine.samples.iter().step_by(sub).copied().collect();
        let mut err: f64 = 0.0;
        for (k, p) in samples.iter().enumerate() {
            let col = a + k;
            if col > b {
                break;
            }
            err = err.max(torus_dist(&v.q[v.idx(col, mid)], p, d));
        }
        match_error.push(err);
        segments.push(Segment { sigma0: v.s(a), step: hs, samples, captured: fine.captured });
    }
    let kind = if crossed.is_empty() { PathKind::Finite } else { PathKind::Broken };
    let path = FlowPath {
        dim: d,
        segments,
        crossed,
        x_minus: v.q[v.idx(0, mid)],
        x_plus: v.q[v.idx(v.ns, mid)],
        kind,
    };
    Ok(Extraction { path, plateaus, pieces, match_error })
}

/// Linear interpolation of a previous rung onto the grid of `problem`, in
/// rescaled coordinates, with P scaled by the ratio of the ε values.
fn seed_from_previous(prev: &StripField, prev_eps: f64, problem: &StripProblem) -> Result<StripField, StripError> {
    let eps = problem.bc.eps;
    let mut u = problem.blank_field()?;
    let ratio = eps / prev_eps;
    for i in 0..=u.ns {
        let s_prev = u.s(i) * ratio;
        let x = ((s_prev - prev.s_min) / prev.hs()).clamp(0.0, prev.ns as f64);
        let i0 = (x.floor() as usize).min(prev.ns - 1);
        let w = x - i0 as f64;
        for j in 0..=u.nt {
            let tj = u.t(j) / u.t_max * prev.nt as f64;
            let j0 = (tj.floor() as usize).min(prev.nt - 1);
            let wt = tj - j0 as f64;
            let lerp = |a: &[Pt]| {
                let v00 = a[prev.idx(i0, j0)];
                let v10 = a[prev.idx(i0 + 1, j0)];
                let v01 = a[prev.idx(i0, j0 + 1)];
                let v11 = a[prev.idx(i0 + 1, j0 + 1)];
                (1.0 - w) * ((1.0 - wt) * v00 + wt * v01) + w * ((1.0 - wt) * v10 + wt * v11)
            };
            let k = u.idx(i, j);
            u.q[k] = lerp(&prev.q);
            u.p[k] = ratio * lerp(&prev.p);
        }
    }
    Ok(u)
}

fn solve_row(
    config: &SweepConfig,
    problem: &StripProblem,
    prev: Option<(&StripField, f64)>,
) -> Result<(StripField, crate::strip_solver::SolveReport), SolveError> {
    if let Some((u, e)) = prev {
        let init = seed_from_previous(u, e, problem)?;
        if let Ok(out) = solve_strip(problem, &init, &config.opts) {
            return Ok(out);
        }
    }
    solve_problem(problem, &config.opts, config.continuation_steps, config.seed)
}

fn nan_row(eps: f64, problem: &StripProblem) -> ConvergenceRow {
    ConvergenceRow {
        eps,
        r: problem.r,
        ns: problem.ns,
        nt: problem.nt,
        converged: false,
        residual_norm: f64::NAN,
        newton_iters: 0,
        sup_dist: f64::NAN,
        energy: f64::NAN,
        stokes_energy: f64::NAN,
        morse_energy: f64::NAN,
        f_difference: f64::NAN,
        measured_k: f64::NAN,
        measured_kappa: f64::NAN,
        violations: 0,
    }
}

/// Post-processing of one solved rung.
pub fn analyse_row(
    problem: &StripProblem,
    u: &StripField,
    report: &crate::strip_solver::SolveReport,
    path: &FlowPath,
    mode: CompareMode,
) -> Result<ConvergenceRow, LabError> {
    let chart = &problem.chart;
    let bc = &problem.bc;
    let eps = bc.eps;
    let v = rescale(u, eps);
    let sup_dist = sup_dist_to_flow(chart, &bc.f, &v, path, mode)?;
    let stokes = stokes_energy(u, bc).total;
    let f_difference = bc.f.f(&u.q[u.idx(u.ns, u.nt)]) - bc.f.f(&u.q[u.idx(0, u.nt)]);
    let delta = default_delta();
    let prof = gamma_profile(chart, u, bc, delta)?;
    let big_r = problem.r - 1.0;
    let est = check_decay_bound(&prof, big_r);
    let c1 = c1_envelope(chart, u, bc, big_r, 0.5 * delta)?;
    Ok(ConvergenceRow {
        eps,
        r: problem.r,
        ns: problem.ns,
        nt: problem.nt,
        converged: report.converged,
        residual_norm: report.residual_norm,
        newton_iters: report.newton_iters,
        sup_dist,
        energy: report.energy,
        stokes_energy: stokes,
        morse_energy: report.energy / eps,
        f_difference,
        measured_k: prof.measured_k,
        measured_kappa: c1.kappa,
        violations: est.violations,
    })
}

/// Solve each rung (seeded from the previous one), rescale, and compare with
/// the flow line from `x₋` (finite mode) or with the chain extracted from the
/// finest rung (broken mode).
pub fn run_sweep(config: &SweepConfig) -> Result<SweepOutput, LabError> {
    run_sweep_jobs(config, 1)
}

/// As [`run_sweep`], with the per-row post-processing spread over `jobs`
/// threads. Solves stay sequential because each rung seeds the next.
pub fn run_sweep_jobs(config: &SweepConfig, jobs: usize) -> Result<SweepOutput, LabError> {
    config.validate()?;
    let chart = &config.problem.chart;
    let f = &config.problem.bc.f;
    let x_minus = config.problem.end.x_minus();
    let mut solved: Vec<Option<(StripField, crate::strip_solver::SolveReport)>> = Vec::new();
    let mut runtimes = Vec::new();
    let mut prev: Option<(StripField, f64)> = None;
    for &eps in &config.eps_ladder {
        let problem = config.row_problem(eps);
        let start = Instant::now();
        let out = solve_row(config, &problem, prev.as_ref().map(|(u, e)| (u, *e)));
        runtimes.push(start.elapsed().as_secs_f64());
        match out {
            Ok((u, rep)) => {
                prev = Some((u.clone(), eps));
                solved.push(Some((u, rep)));
            }
            Err(_) => solved.push(None),
        }
    }
    let path = match config.mode {
        CompareMode::FiniteFlow => reference_flow(chart, f, &x_minus, 2.0 * config.ell)?,
        CompareMode::BrokenFlow => match solved.iter().rposition(|s| s.is_some()) {
            Some(k) => {
                let (u, _) = solved[k].as_ref().expect("position of a solved row");
                let v = rescale(u, config.eps_ladder[k]);
                extract_broken(chart, &v, f, 1e3 * CP_TOL)?.path
            }
            None => reference_flow(chart, f, &x_minus, 2.0 * config.ell)?,
        },
    };
    let jobs = jobs.max(1);
    let analysed: Vec<Result<ConvergenceRow, LabError>> = std::thread::scope(|scope| {
        let chunks: Vec<Vec<usize>> = (0..jobs).map(|w| (w..solved.len()).step_by(jobs).collect()).collect();
        let handles: Vec<_> = chunks
            .into_iter()
            .map(|ks| {
                let (solved, path) = (&solved, &path);
                scope.spawn(move || {
                    ks.into_iter()
                        .map(|k| {
                            let eps = config.eps_ladder[k];
                            let problem = config.row_problem(eps);
                            let row = match &solved[k] {
                                Some((u, rep)) => analyse_row(&problem, u, rep, path, config.mode),
                                None => Ok(nan_row(eps, &problem)),
                            };
                            (k, row)
                        })
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        let mut out: Vec<Option<Result<ConvergenceRow, LabError>>> = (0..solved.len()).map(|_| None).collect();
        for h in handles {
            for (k, row) in h.join().expect("row analysis panicked") {
                out[k] = Some(row);
            }
        }
        out.into_iter().map(|r| r.expect("every row analysed")).collect()
    });
    let rows = analysed.into_iter().collect::<Result<Vec<_>, _>>()?;
    let strips = solved.into_iter().map(|s| s.map(|(u, _)| u)).collect();
    Ok(SweepOutput {
        table: ConvergenceTable { mode: config.mode, ell: config.ell, rows },
        path,
        strips,
        runtimes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::strip_solver::{floer_oracle, AdiabaticData};
    use approx::assert_abs_diff_eq;

    fn flat() -> (MetricChart, AdiabaticData) {
        let chart = MetricChart::flat(1).unwrap();
        let f = MorseData::cosine_wells(1, &[0.1], &[1.0], &[0.0]).unwrap();
        (chart, AdiabaticData::new(Pt::zeros(), f, 0.1).unwrap())
    }

    #[test]
    fn rescale_identity_and_round_trip() {
        let u = StripField::constant(1, 2.0, 8, 4, Pt::new(0.1, 0.0), Pt::zeros()).unwrap();
        assert_eq!(rescale(&u, 1.0), u);
        let v = rescale(&u, 0.25);
        assert_eq!(v.q, u.q);
        assert_abs_diff_eq!(unrescale(&v, 0.25).s_max, u.s_max, epsilon = 1e-15);
    }

    #[test]
    fn rescaled_oracle_matches_time_rescaled_flow() {
        let (chart, bc) = flat();
        let r = 10.0;
        let u = floer_oracle(&chart, &bc, &Pt::new(0.2, 0.0), (-r, r), 400, 4).unwrap();
        let v = rescale(&u, bc.eps);
        let path = reference_flow(&chart, &bc.f, &Pt::new(0.2, 0.0), 2.0 * r * bc.eps).unwrap();
        let d = sup_dist_to_flow(&chart, &bc.f, &v, &path, CompareMode::FiniteFlow).unwrap();
        assert!(d < 1e-8, "{d}");
    }

    #[test]
    fn constant_strip_at_critical_point() {
        let (chart, bc) = flat();
        let u = StripField::constant(1, 5.0, 50, 4, Pt::new(0.5, 0.0), Pt::zeros()).unwrap();
        let path = reference_flow(&chart, &bc.f, &Pt::new(0.5, 0.0), 1.0).unwrap();
        let v = rescale(&u, 0.1);
        assert_eq!(sup_dist_to_flow(&chart, &bc.f, &v, &path, CompareMode::FiniteFlow).unwrap(), 0.0);
    }

    #[test]
    fn zero_strip_decomposes_to_one_low_interval() {
        let u = StripField::constant(1, 5.0, 50, 4, Pt::new(0.5, 0.0), Pt::zeros()).unwrap();
        let parts = energy_decompose(&u, 1.0, 0.1).unwrap();
        assert_eq!(parts, vec![EnergyInterval { s0: -5.0, s1: 5.0, class: EnergyClass::Low }]);
    }

    #[test]
    fn strongly_forced_oracle_has_one_high_region_at_peak_speed() {
        let chart = MetricChart::flat(1).unwrap();
        let f = MorseData::cosine_wells(1, &[2.0], &[1.0], &[0.0]).unwrap();
        let bc = AdiabaticData::new(Pt::zeros(), f, 1.0).unwrap();
        // start near the minimum so the transition sits inside the strip
        let u = floer_oracle(&chart, &bc, &Pt::new(1e-4, 0.0), (-1.0, 1.0), 2000, 4).unwrap();
        let f_gap = 4.0;
        let parts = energy_decompose(&u, 1.0, 0.25 * f_gap).unwrap();
        let high: Vec<_> = parts.iter().filter(|p| p.class == EnergyClass::High).collect();
        assert_eq!(high.len(), 1);
        let dens = column_density(&u);
        let peak = (0..dens.len()).max_by(|a, b| dens[*a].total_cmp(&dens[*b])).unwrap();
        assert!(high[0].s0 <= u.s(peak) && u.s(peak) <= high[0].s1);
        for w in parts.windows(2) {
            assert_ne!(w[0].class, w[1].class);
            assert_eq!(w[0].s1, w[1].s0);
        }
    }

    #[test]
    fn extraction_without_plateau_is_finite() {
        let (chart, bc) = flat();
        let u = floer_oracle(&chart, &bc, &Pt::new(0.2, 0.0), (-10.0, 10.0), 400, 4).unwrap();
        let ex = extract_broken(&chart, &rescale(&u, bc.eps), &bc.f, CP_TOL).unwrap();
        assert_eq!(ex.path.kind, PathKind::Finite);
        assert!(ex.path.crossed.is_empty());
        assert!(ex.match_error[0] < 1e-6);
    }

    #[test]
    fn stall_off_critical_is_inconsistent() {
        let (chart, bc) = flat();
        let u = StripField::constant(1, 40.0, 800, 4, Pt::new(0.3, 0.0), Pt::zeros()).unwrap();
        let v = rescale(&u, 0.1);
        assert!(matches!(extract_broken(&chart, &v, &bc.f, CP_TOL), Err(LabError::InconsistentLimit(..))));
    }

    #[test]
    fn increasing_ladder_is_rejected() {
        let (chart, bc) = flat();
        let problem = StripProblem {
            chart,
            bc,
            r: 1.0,
            ns: 2,
            nt: 2,
            end: crate::strip_solver::EndCondition::Dirichlet { x_minus: Pt::new(0.2, 0.0) },
            formulation: crate::strip_solver::Formulation::Direct,
        };
        let cfg = SweepConfig {
            eps_ladder: vec![0.1, 0.2],
            ell: 2.0,
            h_s: 0.05,
            nt: 10,
            problem,
            mode: CompareMode::FiniteFlow,
            opts: NewtonOptions::default(),
            continuation_steps: 8,
            seed: 0,
        };
        assert!(matches!(cfg.validate(), Err(LabError::Config(_))));
    }
}
