//! The perturbed section `P̃`, its L² profile γ(s), and the exponential
//! decay bounds measured on solved strips.

use crate::geometry::{gamma_contract, GeometryError, MetricChart, Pt};
use crate::strip_solver::{AdiabaticData, StripField};
use serde::Serialize;
use thiserror::Error;

/// Poincaré constant for sections vanishing at `t = 0, 1`.
pub const C_PC: f64 = 0.25;

/// `δ = sqrt(1 / (3 c_pc))`, so δ² = 4/3.
pub fn default_delta() -> f64 {
    (1.0 / (3.0 * C_PC)).sqrt()
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimateError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("strip of length {0} is shorter than 2.5, the inequality window is undefined")]
    TooShort(f64),
}

/// `P̃ = P − ε t 𝔟(Q) − ε (1 − t) 𝔞(Q)`.
pub fn perturbed_section(u: &StripField, bc: &AdiabaticData) -> Vec<Pt> {
    let mut out = vec![Pt::zeros(); u.p.len()];
    for i in 0..=u.ns {
        for j in 0..=u.nt {
            let k = u.idx(i, j);
            let t = u.t(j) / u.t_max;
            let q = &u.q[k];
            out[k] = u.p[k] - bc.eps * t * bc.b(q) - bc.eps * (1.0 - t) * bc.a(q);
        }
    }
    out
}

/// `∇ₛX` and `∇ₜX` of a covector field over `u.q` at node `(i, j)`.
fn covariant_pair(chart: &MetricChart, u: &StripField, x: &[Pt], i: usize, j: usize) -> Result<(Pt, Pt), GeometryError> {
    let k = u.idx(i, j);
    let loc = chart.local(&u.q[k])?;
    let qs = u.d_s(&u.q, i, j);
    let qt = u.d_t(&u.q, i, j);
    let ns = u.d_s(x, i, j) - gamma_contract(&loc.gam, &qs, &x[k]);
    let nt = u.d_t(x, i, j) - gamma_contract(&loc.gam, &qt, &x[k]);
    Ok((ns, nt))
}

fn cov_norm2(chart: &MetricChart, q: &Pt, v: &Pt) -> Result<f64, GeometryError> {
    Ok(v.dot(&(chart.g_inv(q)? * v)))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GammaProfile {
    pub s_grid: Vec<f64>,
    pub gamma: Vec<f64>,
    pub dgamma: Vec<f64>,
    pub ddgamma: Vec<f64>,
    pub dirichlet: Vec<f64>,
    pub delta: f64,
    pub eps: f64,
    pub measured_k: f64,
    /// `minₛ [γ̈ − δ²γ − ⅓ dirichlet + K ε²]` over the window.
    pub slack: f64,
    /// Grid indices of `[−R − 0.75, R + 0.75]` with `R = r − 1`.
    pub window: (usize, usize),
    pub r: f64,
}

impl GammaProfile {
    pub fn hs(&self) -> f64 {
        self.s_grid[1] - self.s_grid[0]
    }

    fn nearest(&self, s: f64) -> usize {
        let i = ((s - self.s_grid[0]) / self.hs()).round();
        (i.max(0.0) as usize).min(self.s_grid.len() - 1)
    }
}

/// γ(s) = ½∫|P̃|² dt and the terms of Lemma 4.1(a). γ̈ uses a central second
/// difference at spacing `max(hₛ, r/200)`.
pub fn gamma_profile(
    chart: &MetricChart,
    u: &StripField,
    bc: &AdiabaticData,
    delta: f64,
) -> Result<GammaProfile, EstimateError> {
    let length = u.s_max - u.s_min;
    if length < 2.5 {
        return Err(EstimateError::TooShort(length));
    }
    let pt = perturbed_section(u, bc);
    let ht = u.ht();
    let n = u.ns + 1;
    let mut gamma = vec![0.0; n];
    let mut dirichlet = vec![0.0; n];
    for i in 0..n {
        let (mut g, mut dir) = (0.0, 0.0);
        for j in 0..=u.nt {
            let w = if j == 0 || j == u.nt { 0.5 } else { 1.0 } * ht;
            let k = u.idx(i, j);
            g += w * cov_norm2(chart, &u.q[k], &pt[k])?;
            let (ns, nt) = covariant_pair(chart, u, &pt, i, j)?;
            dir += w * (cov_norm2(chart, &u.q[k], &ns)? + cov_norm2(chart, &u.q[k], &nt)?);
        }
        gamma[i] = 0.5 * g;
        dirichlet[i] = dir;
    }
    let hs = u.hs();
    let r = u.half_length();
    let m = ((hs.max(r / 200.0) / hs).round() as usize).max(1);
    let mut dgamma = vec![0.0; n];
    let mut ddgamma = vec![0.0; n];
    for i in 0..n {
        let mi = m.min(i).min(n - 1 - i);
        if mi == 0 {
            // ends: one-sided at unit spacing
            let (a, b, c) = if i == 0 { (0, 1, 2) } else { (n - 3, n - 2, n - 1) };
            ddgamma[i] = (gamma[a] - 2.0 * gamma[b] + gamma[c]) / (hs * hs);
            dgamma[i] = if i == 0 {
                (-3.0 * gamma[0] + 4.0 * gamma[1] - gamma[2]) / (2.0 * hs)
            } else {
                (3.0 * gamma[n - 1] - 4.0 * gamma[n - 2] + gamma[n - 3]) / (2.0 * hs)
            };
            continue;
        }
        let h = mi as f64 * hs;
        dgamma[i] = (gamma[i + mi] - gamma[i - mi]) / (2.0 * h);
        ddgamma[i] = (gamma[i + mi] - 2.0 * gamma[i] + gamma[i - mi]) / (h * h);
    }
    let s_grid: Vec<f64> = (0..n).map(|i| u.s(i)).collect();
    let big_r = r - 1.0;
    let centre = 0.5 * (u.s_min + u.s_max);
    let lo = (((centre - big_r - 0.75) - u.s_min) / hs).round() as usize;
    let hi = ((((centre + big_r + 0.75) - u.s_min) / hs).round() as usize).min(n - 1);
    let d2 = delta * delta;
    let worst = (lo..=hi)
        .map(|i| d2 * gamma[i] + dirichlet[i] / 3.0 - ddgamma[i])
        .fold(f64::NEG_INFINITY, f64::max);
    let eps2 = bc.eps * bc.eps;
    let measured_k = if worst <= 0.0 {
        0.0
    } else if eps2 > 0.0 {
        worst / eps2
    } else {
        f64::INFINITY
    };
    let slack = (lo..=hi)
        .map(|i| ddgamma[i] - d2 * gamma[i] - dirichlet[i] / 3.0 + if worst <= 0.0 { 0.0 } else { worst })
        .fold(f64::INFINITY, f64::min);
    Ok(GammaProfile {
        s_grid,
        gamma,
        dgamma,
        ddgamma,
        dirichlet,
        delta,
        eps: bc.eps,
        measured_k,
        slack,
        window: (lo, hi),
        r,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimateReport {
    pub inequality_holds: bool,
    pub measured_k: f64,
    pub big_r: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    /// `max(C₁, C₂, C₃ K)`.
    pub theta: f64,
    pub s: Vec<f64>,
    /// `γ(s) + ∫_{s−½}^{s+½} α`, with `α = ⅓ dirichlet`.
    pub lhs: Vec<f64>,
    pub envelope: Vec<f64>,
    pub violations: usize,
    pub c1_kappa: Option<f64>,
}

/// Envelope `C₁e^{−δ(R+s)} + C₂e^{−δ(R−s)} + C₃Kε²` checked on `[−R, R]`.
pub fn check_decay_bound(profile: &GammaProfile, big_r: f64) -> EstimateReport {
    let delta = profile.delta;
    let centre = 0.5 * (profile.s_grid[0] + profile.s_grid[profile.s_grid.len() - 1]);
    let il = profile.nearest(centre - big_r - 0.75);
    let ir = profile.nearest(centre + big_r + 0.75);
    let c1 = 9.0 * profile.gamma[il];
    let c2 = 9.0 * (profile.dgamma[ir] + delta * profile.gamma[ir]).abs() / (2.0 * delta);
    let c3 = 9.0 / (delta * delta) + 1.25;
    let k = profile.measured_k;
    let keps = if k == 0.0 { 0.0 } else { c3 * k * profile.eps * profile.eps };
    let hs = profile.hs();
    let half = (0.5 / hs).round() as usize;
    let (a, b) = (profile.nearest(centre - big_r), profile.nearest(centre + big_r));
    let mut s = Vec::new();
    let mut lhs = Vec::new();
    let mut envelope = Vec::new();
    let mut violations = 0;
    let last = profile.s_grid.len() - 1;
    for i in a..=b {
        let (lo, hi) = (i.saturating_sub(half), (i + half).min(last));
        let mut integral = 0.0;
        for k in lo..hi {
            integral += 0.5 * hs * (profile.dirichlet[k] + profile.dirichlet[k + 1]) / 3.0;
        }
        let x = profile.s_grid[i] - centre;
        let env = c1 * (-delta * (big_r + x)).exp() + c2 * (-delta * (big_r - x)).exp() + keps;
        let l = profile.gamma[i] + integral;
        if l > env {
            violations += 1;
        }
        s.push(profile.s_grid[i]);
        lhs.push(l);
        envelope.push(env);
    }
    EstimateReport {
        inequality_holds: k.is_finite(),
        measured_k: k,
        big_r,
        c1,
        c2,
        c3,
        theta: c1.max(c2).max(c3 * k),
        s,
        lhs,
        envelope,
        violations,
        c1_kappa: None,
    }
}

/// `Δ^lc X = ∇ₛ∇ₛX + ∇ₜ∇ₜX` by nested covariant differences over the map
/// `u.q`; zero on boundary nodes.
pub fn lc_laplacian(chart: &MetricChart, u: &StripField, x: &[Pt]) -> Result<Vec<Pt>, GeometryError> {
    let n = u.q.len();
    let mut ds = vec![Pt::zeros(); n];
    let mut dt = vec![Pt::zeros(); n];
    for i in 0..=u.ns {
        for j in 0..=u.nt {
            let (a, b) = covariant_pair(chart, u, x, i, j)?;
            ds[u.idx(i, j)] = a;
            dt[u.idx(i, j)] = b;
        }
    }
    let mut out = vec![Pt::zeros(); n];
    for i in 1..u.ns {
        for j in 1..u.nt {
            let (ss, _) = covariant_pair(chart, u, &ds, i, j)?;
            let (_, tt) = covariant_pair(chart, u, &dt, i, j)?;
            out[u.idx(i, j)] = ss + tt;
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct C1Envelope {
    pub s: Vec<f64>,
    /// `m(s) = maxₜ (|P̃| + |∇ₛP̃| + |∇ₜP̃|)`.
    pub m: Vec<f64>,
    pub kappa: f64,
    pub d_rate: f64,
}

/// Smallest κ with `m(s) ≤ κ (e^{−d(R+s)} + e^{−d(R−s)} + ε)` on `[−R, R]`.
pub fn c1_envelope(
    chart: &MetricChart,
    u: &StripField,
    bc: &AdiabaticData,
    big_r: f64,
    d_rate: f64,
) -> Result<C1Envelope, GeometryError> {
    let pt = perturbed_section(u, bc);
    let centre = 0.5 * (u.s_min + u.s_max);
    let hs = u.hs();
    let a = (((centre - big_r) - u.s_min) / hs).round().max(0.0) as usize;
    let b = ((((centre + big_r) - u.s_min) / hs).round() as usize).min(u.ns);
    let mut s = Vec::new();
    let mut m = Vec::new();
    let mut kappa: f64 = 0.0;
    for i in a..=b {
        let mut mi: f64 = 0.0;
        for j in 0..=u.nt {
            let k = u.idx(i, j);
            let (ns, nt) = covariant_pair(chart, u, &pt, i, j)?;
            let q = &u.q[k];
            let v = cov_norm2(chart, q, &pt[k])?.sqrt() + cov_norm2(chart, q, &ns)?.sqrt() + cov_norm2(chart, q, &nt)?.sqrt();
            mi = mi.max(v);
        }
        let x = u.s(i) - centre;
        let env = (-d_rate * (big_r + x)).exp() + (-d_rate * (big_r - x)).exp() + bc.eps;
        kappa = kappa.max(mi / env);
        s.push(u.s(i));
        m.push(mi);
    }
    Ok(C1Envelope { s, m, kappa, d_rate })
}

/// `(∫|P|² dt, ∫|∇ₜP|² dt)` along a path, trapezoid in `t`.
pub fn poincare_terms(chart: &MetricChart, q: &[Pt], p: &[Pt], step: f64) -> Result<(f64, f64), GeometryError> {
    let nabla = crate::geometry::covariant_t(chart, q, p, step)?;
    let n = q.len();
    let (mut a, mut b) = (0.0, 0.0);
    for k in 0..n {
        let w = if k == 0 || k == n - 1 { 0.5 } else { 1.0 } * step;
        a += w * cov_norm2(chart, &q[k], &p[k])?;
        b += w * cov_norm2(chart, &q[k], &nabla[k])?;
    }
    Ok((a, b))
}
