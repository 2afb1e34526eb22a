use super::system::{System, Triplet};
use super::{
    floer_oracle, omega_energy, AdiabaticData, EndCondition, Formulation, StripError, StripField,
};
use crate::geometry::{MetricChart, Pt};
use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet as FaerTriplet};
use faer::{Col, Par};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewtonOptions {
    /// Tolerance on the discrete L² residual `sqrt(Σ R² hₛ hₜ)`.
    pub res_tol: f64,
    pub max_iter: usize,
    /// Smallest Armijo step before the step is taken regardless.
    pub min_step: f64,
    pub armijo: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions { res_tol: 1e-9, max_iter: 50, min_step: 1.0 / 1024.0, armijo: 1e-4 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolveReport {
    pub residual_norm: f64,
    pub newton_iters: usize,
    pub energy: f64,
    pub sup_dq: f64,
    pub sup_dp: f64,
    pub converged: bool,
    pub singular: bool,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error(transparent)]
    Strip(#[from] StripError),
    #[error("Newton diverged after {iters} iterations, residual {residual:e}")]
    Diverged { residual: f64, iters: usize },
    #[error("singular Jacobian at iteration {}", report.newton_iters)]
    SingularJacobian { report: SolveReport },
}

#[derive(Clone, Debug)]
pub struct StripProblem {
    pub chart: MetricChart,
    pub bc: AdiabaticData,
    pub r: f64,
    pub ns: usize,
    pub nt: usize,
    pub end: EndCondition,
    pub formulation: Formulation,
}

impl StripProblem {
    pub fn with_eps(&self, eps: f64) -> StripProblem {
        StripProblem { bc: self.bc.with_eps(eps), ..self.clone() }
    }

    pub fn blank_field(&self) -> Result<StripField, StripError> {
        StripField::new(self.bc.dim(), self.r, self.ns, self.nt)
    }

    /// The zero-section solution at ε = 0: `Q ≡ x₋`, `P ≡ 0`.
    pub fn zero_section(&self) -> Result<StripField, StripError> {
        StripField::constant(self.bc.dim(), self.r, self.ns, self.nt, self.end.x_minus(), Pt::zeros())
    }

    pub fn oracle(&self) -> Result<StripField, StripError> {
        floer_oracle(&self.chart, &self.bc, &self.end.x_minus(), (-self.r, self.r), self.ns, self.nt)
    }
}

fn l2(r: &[f64], hs: f64, ht: f64) -> f64 {
    (r.iter().map(|v| v * v).sum::<f64>() * hs * ht).sqrt()
}

fn sup_derivatives(u: &StripField) -> (f64, f64) {
    let (mut dq, mut dp) = (0.0f64, 0.0f64);
    for i in 0..=u.ns {
        for j in 0..=u.nt {
            dq = dq.max(u.d_s(&u.q, i, j).norm()).max(u.d_t(&u.q, i, j).norm());
            dp = dp.max(u.d_s(&u.p, i, j).norm()).max(u.d_t(&u.p, i, j).norm());
        }
    }
    (dq, dp)
}

/// Damped Newton on the discrete problem, starting from `init` (always given
/// and returned in the original, unmodified coordinates).
pub fn solve_strip(
    problem: &StripProblem,
    init: &StripField,
    opts: &NewtonOptions,
) -> Result<(StripField, SolveReport), SolveError> {
    init.validate()?;
    if init.ns != problem.ns || init.nt != problem.nt || (init.half_length() - problem.r).abs() > 1e-12 * problem.r.max(1.0) {
        return Err(StripError::Grid(format!(
            "initial field {}x{} on half-length {} does not match problem {}x{} on {}",
            init.ns,
            init.nt,
            init.half_length(),
            problem.ns,
            problem.nt,
            problem.r
        ))
        .into());
    }
    let bc = &problem.bc;
    let modified = problem.formulation == Formulation::Modified;
    let mut u = if modified { init.to_modified(bc) } else { init.clone() };
    let sys = System::new(&problem.chart, bc, problem.formulation, problem.end.x_minus(), &u)?;
    let (hs, ht) = (u.hs(), u.ht());
    let n = sys.n_unknowns();
    let mut x = sys.pack(&u);
    let mut trip: Vec<Triplet> = Vec::new();
    let mut r = sys.eval(&x, Some(&mut trip))?;
    let mut norm = l2(&r, hs, ht);
    let mut iters = 0;
    let finish = |x: &[f64], u: &mut StripField, norm: f64, iters: usize, converged: bool, singular: bool| {
        sys.unpack(x, u);
        let orig = if modified { u.from_modified(bc) } else { u.clone() };
        let (sup_dq, sup_dp) = sup_derivatives(&orig);
        let report = SolveReport {
            residual_norm: norm,
            newton_iters: iters,
            energy: omega_energy(&orig),
            sup_dq,
            sup_dp,
            converged,
            singular,
        };
        (orig, report)
    };
    faer::set_global_parallelism(Par::Seq);
    while norm >= opts.res_tol {
        if iters >= opts.max_iter || !norm.is_finite() {
            return Err(SolveError::Diverged { residual: norm, iters });
        }
        let ft: Vec<FaerTriplet<usize, usize, f64>> =
            trip.iter().map(|t| FaerTriplet::new(t.row, t.col, t.val)).collect();
        let lu = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &ft)
            .ok()
            .and_then(|j| j.sp_lu().ok());
        let Some(lu) = lu else {
            let (_, report) = finish(&x, &mut u, norm, iters, false, true);
            return Err(SolveError::SingularJacobian { report });
        };
        let rhs = Col::<f64>::from_fn(n, |k| -r[k]);
        let dx = lu.solve(&rhs);
        if (0..n).any(|k| !dx[k].is_finite()) {
            let (_, report) = finish(&x, &mut u, norm, iters, false, true);
            return Err(SolveError::SingularJacobian { report });
        }
        let mut step = 1.0;
        loop {
            let xt: Vec<f64> = (0..n).map(|k| x[k] + step * dx[k]).collect();
            let rt = sys.eval(&xt, None)?;
            let nt = l2(&rt, hs, ht);
            if nt <= (1.0 - opts.armijo * step) * norm || step <= opts.min_step {
                x = xt;
                break;
            }
            step *= 0.5;
        }
        iters += 1;
        r = sys.eval(&x, Some(&mut trip))?;
        norm = l2(&r, hs, ht);
    }
    Ok(finish(&x, &mut u, norm, iters, true, false))
}

/// ε-continuation from the zero section: solves at `ε/2^(steps−1), …, ε/2, ε`.
pub fn solve_continuation(
    problem: &StripProblem,
    opts: &NewtonOptions,
    steps: usize,
) -> Result<(StripField, SolveReport), SolveError> {
    let mut u = problem.zero_section()?;
    let eps = problem.bc.eps;
    if eps == 0.0 || steps == 0 {
        return solve_strip(problem, &u, opts);
    }
    let mut last = None;
    let mut total_iters = 0;
    for k in (0..steps).rev() {
        let sub = problem.with_eps(eps / f64::powi(2.0, k as i32));
        let (v, rep) = solve_strip(&sub, &u, opts)?;
        total_iters += rep.newton_iters;
        u = v;
        last = Some(rep);
    }
    let mut rep = last.expect("at least one continuation step");
    rep.newton_iters = total_iters;
    Ok((u, rep))
}

/// Adds `rel · scale · ξ` with `ξ ~ U(−1, 1)` to every interior unknown, where
/// `scale` is the larger of the Q-range and the P-range of `u`.
pub fn perturb_interior(u: &StripField, rel: f64, seed: u64) -> StripField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let range = |v: &[Pt], c: usize| {
        let lo = v.iter().map(|x| x[c]).fold(f64::INFINITY, f64::min);
        let hi = v.iter().map(|x| x[c]).fold(f64::NEG_INFINITY, f64::max);
        hi - lo
    };
    let mut scale: f64 = 0.0;
    for c in 0..u.dim {
        scale = scale.max(range(&u.q, c)).max(range(&u.p, c));
    }
    let mut out = u.clone();
    for i in 1..u.ns {
        for j in 1..u.nt {
            let k = u.idx(i, j);
            for c in 0..u.dim {
                out.q[k][c] += rel * scale * rng.gen_range(-1.0..1.0);
                out.p[k][c] += rel * scale * rng.gen_range(-1.0..1.0);
            }
        }
    }
    out
}

/// Solve with the initial guess implied by the end condition.
pub fn solve_problem(
    problem: &StripProblem,
    opts: &NewtonOptions,
    continuation_steps: usize,
    seed: u64,
) -> Result<(StripField, SolveReport), SolveError> {
    match &problem.end {
        EndCondition::Dirichlet { .. } => solve_continuation(problem, opts, continuation_steps),
        EndCondition::FloerSeeded { perturb, .. } => {
            let init = perturb_interior(&problem.oracle()?, *perturb, seed);
            solve_strip(problem, &init, opts)
        }
    }
}
