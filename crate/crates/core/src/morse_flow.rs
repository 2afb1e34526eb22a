//! Gradient flow `Q' = +grad f = g⁻¹df(Q)`, critical points and broken flow
//! lines on `(L, g, f)`.

use crate::geometry::{inv2, torus_dist, wrap, CriticalPoint, GeometryError, Mat, MetricChart, MorseData, Pt};
use serde::Serialize;
use thiserror::Error;

/// Critical-point tolerance on `|df|`, chart units.
pub const CP_TOL: f64 = 1e-7;
/// Minimum separation between distinct critical points.
pub const MIN_SEP: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("critical point at ({0}, {1}) is degenerate (|det hess| = {2:e})")]
    NonMorse(f64, f64, f64),
    #[error("step {step} exceeds 1e-2/|df|max = {limit}")]
    StepTooLarge { step: f64, limit: f64 },
    #[error("dimension mismatch between chart ({0}) and Morse function ({1})")]
    Dimension(usize, usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PathKind {
    Finite,
    HalfInfinitePos,
    HalfInfiniteNeg,
    BiInfinite,
    Broken,
}

/// Samples of a flow line on the uniform grid `σ₀ + k·step`.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub sigma0: f64,
    pub step: f64,
    pub samples: Vec<Pt>,
    /// The integration stopped at a critical point.
    pub captured: bool,
}

impl Segment {
    pub fn start(&self) -> Pt {
        self.samples[0]
    }

    pub fn end(&self) -> Pt {
        *self.samples.last().expect("segments are never empty")
    }

    pub fn sigma_end(&self) -> f64 {
        self.sigma0 + self.step * (self.samples.len() - 1) as f64
    }

    fn reversed(mut self) -> Segment {
        self.samples.reverse();
        self.step = self.step.abs();
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowPath {
    pub dim: usize,
    pub segments: Vec<Segment>,
    pub crossed: Vec<CriticalPoint>,
    pub x_minus: Pt,
    pub x_plus: Pt,
    pub kind: PathKind,
}

fn gradient(chart: &MetricChart, f: &MorseData, q: &Pt) -> Result<Pt, GeometryError> {
    Ok(chart.g_inv(q)? * f.df(q))
}

fn rk4_step(chart: &MetricChart, f: &MorseData, q: &Pt, h: f64) -> Result<Pt, GeometryError> {
    let k1 = gradient(chart, f, q)?;
    let k2 = gradient(chart, f, &(q + 0.5 * h * k1))?;
    let k3 = gradient(chart, f, &(q + 0.5 * h * k2))?;
    let k4 = gradient(chart, f, &(q + h * k3))?;
    Ok(q + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
}

/// RK4 for `Q' = g⁻¹df(Q)` over `|length|` (backwards if `length < 0`).
/// Stops early once `|df(Q)| < CP_TOL / 10`.
pub fn integrate_flow(
    chart: &MetricChart,
    f: &MorseData,
    q0: &Pt,
    length: f64,
    step: f64,
) -> Result<Segment, FlowError> {
    if chart.dim() != f.dim() {
        return Err(FlowError::Dimension(chart.dim(), f.dim()));
    }
    let limit = 1e-2 / f.df_max().max(1e-300);
    if !(step > 0.0) || step > limit * (1.0 + 1e-12) {
        return Err(FlowError::StepTooLarge { step, limit });
    }
    let n = (length.abs() / step).ceil() as usize;
    let h = if n == 0 { 0.0 } else { length / n as f64 };
    let mut samples = Vec::with_capacity(n + 1);
    let mut q = *q0;
    samples.push(q);
    let mut captured = f.df(&q).norm() < CP_TOL / 10.0;
    if !captured {
        for _ in 0..n {
            q = rk4_step(chart, f, &q, h)?;
            samples.push(q);
            if f.df(&q).norm() < CP_TOL / 10.0 {
                captured = true;
                break;
            }
        }
    }
    Ok(Segment { sigma0: 0.0, step: h, samples, captured })
}

/// Newton on `df = 0` from a `32^d` seed grid; roots wrapped to `[0, 1)^d`,
/// deduplicated at [`MIN_SEP`] and sorted lexicographically.
pub fn find_criticals(chart: &MetricChart, f: &MorseData) -> Result<Vec<CriticalPoint>, FlowError> {
    let d = f.dim();
    if chart.dim() != d {
        return Err(FlowError::Dimension(chart.dim(), d));
    }
    let seeds = 32usize;
    let n2 = if d == 2 { seeds } else { 1 };
    let mut found: Vec<CriticalPoint> = Vec::new();
    for a in 0..seeds {
        for b in 0..n2 {
            let mut q = Pt::new((a as f64 + 0.5) / seeds as f64, (b as f64 + 0.5) / seeds as f64);
            if d == 1 {
                q[1] = 0.0;
            }
            let mut ok = false;
            for _ in 0..60 {
                let df = f.df(&q);
                if df.norm() < CP_TOL * 1e-3 {
                    ok = true;
                    break;
                }
                let mut h = f.hess(&q);
                if d == 1 {
                    h[(1, 1)] = 1.0;
                }
                let det = h[(0, 0)] * h[(1, 1)] - h[(0, 1)] * h[(1, 0)];
                if det.abs() < 1e-14 {
                    break;
                }
                let mut dq = inv2(&h) * df;
                // damp long jumps so seeds stay near their basin
                let len = dq.norm();
                if len > 0.1 {
                    dq *= 0.1 / len;
                }
                q -= dq;
            }
            if !ok {
                ok = f.df(&q).norm() < CP_TOL;
            }
            if !ok {
                continue;
            }
            let q = wrap(&q, d);
            if found.iter().any(|c| torus_dist(&c.location, &q, d) < MIN_SEP) {
                continue;
            }
            let mut h = f.hess(&q);
            if d == 1 {
                h[(1, 1)] = 1.0;
            }
            let det = h[(0, 0)] * h[(1, 1)] - h[(0, 1)] * h[(1, 0)];
            if det.abs() < 1e-8 {
                return Err(FlowError::NonMorse(q[0], q[1], det.abs()));
            }
            found.push(CriticalPoint { location: q, index: morse_index(&h, d), tol: CP_TOL });
        }
    }
    if found.is_empty() {
        // every seed failed: either constant f or a degenerate landscape
        let q = Pt::zeros();
        let det = f.hess(&q).determinant();
        return Err(FlowError::NonMorse(q[0], q[1], det.abs()));
    }
    found.sort_by(|a, b| {
        a.location[0].total_cmp(&b.location[0]).then(a.location[1].total_cmp(&b.location[1]))
    });
    Ok(found)
}

fn morse_index(h: &Mat, d: usize) -> usize {
    if d == 1 {
        return usize::from(h[(0, 0)] < 0.0);
    }
    let e = h.symmetric_eigenvalues();
    e.iter().filter(|v| **v < 0.0).count()
}

/// Why no chain was returned.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum NoChain {
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error("flow from {0} did not settle at a stored critical point")]
    NoLimit(String),
    #[error("no chain of at most {0} breaks between the limiting critical points")]
    Exhausted(usize),
}

struct Flows<'a> {
    chart: &'a MetricChart,
    f: &'a MorseData,
    cps: Vec<CriticalPoint>,
    step: f64,
    horizon: f64,
}

impl<'a> Flows<'a> {
    fn nearest(&self, q: &Pt, tol: f64) -> Option<usize> {
        let d = self.f.dim();
        self.cps
            .iter()
            .enumerate()
            .map(|(k, c)| (k, torus_dist(&c.location, q, d)))
            .filter(|(_, dist)| *dist < tol)
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(k, _)| k)
    }

    /// Flow from `q` (forward if `dir > 0`) until capture; index of the limit.
    fn limit(&self, q: &Pt, dir: f64) -> Result<(Segment, Option<usize>), FlowError> {
        let seg = integrate_flow(self.chart, self.f, q, dir * self.horizon, self.step)?;
        let k = self.nearest(&seg.end(), 1e-4);
        Ok((seg, k))
    }

    /// Connecting orbit from critical `a` to critical `b` with
    /// `index(b) = index(a) + 1`, found along a one-dimensional invariant
    /// manifold of whichever endpoint has one.
    fn connect(&self, a: usize, b: usize) -> Result<Option<Segment>, FlowError> {
        let d = self.f.dim();
        let (ca, cb) = (self.cps[a], self.cps[b]);
        if cb.index != ca.index + 1 || self.f.f(&cb.location) <= self.f.f(&ca.location) {
            return Ok(None);
        }
        let delta = 1e-6;
        let lift = |target: &Pt, near: &Pt| -> Pt {
            let mut out = *target;
            for c in 0..d {
                out[c] += (near[c] - target[c]).round();
            }
            out
        };
        // eigenvectors of the linearization g⁻¹ H at a critical point
        let eig = |c: &CriticalPoint| -> Vec<(f64, Pt)> {
            let m = self.chart.g_inv(&c.location).map(|gi| gi * self.f.hess(&c.location));
            let Ok(m) = m else { return vec![] };
            if d == 1 {
                return vec![(m[(0, 0)], Pt::new(1.0, 0.0))];
            }
            let ev = m.complex_eigenvalues();
            let mut out = Vec::new();
            for e in ev.iter() {
                let lam = e.re;
                let a = m - Mat::identity() * lam;
                // null vector of the 2x2 matrix a
                let v = if a[(0, 1)].abs() + a[(0, 0)].abs() > a[(1, 0)].abs() + a[(1, 1)].abs() {
                    Pt::new(-a[(0, 1)], a[(0, 0)])
                } else {
                    Pt::new(-a[(1, 1)], a[(1, 0)])
                };
                let v = if v.norm() < 1e-14 { Pt::new(1.0, 0.0) } else { v.normalize() };
                out.push((lam, v));
            }
            out
        };
        let unstable_a: Vec<Pt> = eig(&ca).into_iter().filter(|(l, _)| *l > 0.0).map(|(_, v)| v).collect();
        let stable_b: Vec<Pt> = eig(&cb).into_iter().filter(|(l, _)| *l < 0.0).map(|(_, v)| v).collect();
        if unstable_a.len() == 1 {
            for sgn in [1.0, -1.0] {
                let q0 = ca.location + sgn * delta * unstable_a[0];
                let (seg, k) = self.limit(&q0, 1.0)?;
                if k == Some(b) {
                    let mut seg = seg;
                    seg.samples.insert(0, ca.location);
                    let last = seg.end();
                    seg.samples.push(lift(&cb.location, &last));
                    return Ok(Some(seg));
                }
            }
        }
        if stable_b.len() == 1 {
            for sgn in [1.0, -1.0] {
                let q0 = cb.location + sgn * delta * stable_b[0];
                let (seg, k) = self.limit(&q0, -1.0)?;
                if k == Some(a) {
                    let mut seg = seg.reversed();
                    let first = seg.start();
                    seg.samples.insert(0, lift(&ca.location, &first));
                    seg.samples.push(cb.location);
                    // re-anchor the lift so the segment starts at the stored point
                    let shift = seg.samples[0] - ca.location;
                    for s in seg.samples.iter_mut() {
                        *s -= shift;
                    }
                    return Ok(Some(seg));
                }
            }
        }
        Ok(None)
    }
}

/// Flow time from the segment start to `x`, if the orbit passes within 1e-6
/// of it: coarse nearest sample, then a fine re-integration around it.
fn hitting_time(chart: &MetricChart, f: &MorseData, seg: &Segment, x: &Pt, d: usize) -> Result<Option<f64>, FlowError> {
    let speed = f.df_max() * chart_inv_bound(chart, seg);
    let coarse = seg
        .samples
        .iter()
        .enumerate()
        .map(|(k, q)| (k, torus_dist(q, x, d)))
        .min_by(|a, b| a.1.total_cmp(&b.1));
    let Some((k, dist)) = coarse else { return Ok(None) };
    if dist > speed * seg.step + 1e-6 {
        return Ok(None);
    }
    let k0 = k.saturating_sub(1);
    let fine_step = seg.step / 2000.0;
    let fine = integrate_flow(chart, f, &seg.samples[k0], 2.0 * seg.step, fine_step)?;
    let best = fine
        .samples
        .iter()
        .enumerate()
        .map(|(m, q)| (m, torus_dist(q, x, d)))
        .min_by(|a, b| a.1.total_cmp(&b.1));
    Ok(best.filter(|(_, dist)| *dist < 1e-6).map(|(m, _)| k0 as f64 * seg.step + m as f64 * fine_step))
}

fn chart_inv_bound(chart: &MetricChart, seg: &Segment) -> f64 {
    seg.samples
        .iter()
        .map(|q| chart.g_inv(q).map(|gi| gi.norm()).unwrap_or(1.0))
        .fold(1.0, f64::max)
}

/// First broken chain `x₋ → y⁰ → … → yᵏ → x₊` with at most `max_breaks`
/// crossed critical points.
pub fn assemble_broken(
    chart: &MetricChart,
    f: &MorseData,
    x_minus: &Pt,
    x_plus: &Pt,
    max_breaks: usize,
) -> Result<FlowPath, NoChain> {
    let d = f.dim();
    let cps = if f.critical_points().is_empty() { find_criticals(chart, f)? } else { f.critical_points().to_vec() };
    let step = (1e-2 / f.df_max().max(1e-300)).min(1e-2);
    let lam_min = cps
        .iter()
        .map(|c| f.hess(&c.location).diagonal().iter().take(d).map(|v| v.abs()).fold(f64::INFINITY, f64::min))
        .fold(f64::INFINITY, f64::min);
    let horizon = 60.0 / lam_min.max(1e-12) + 10.0;
    let flows = Flows { chart, f, cps, step, horizon };

    // x₊ downstream of x₋ on the same orbit
    let fwd = integrate_flow(chart, f, x_minus, horizon, step)?;
    if let Some(sigma) = hitting_time(chart, f, &fwd, x_plus, d)? {
        let n = ((sigma / step).ceil() as usize).max(1);
        let mut seg = integrate_flow(chart, f, x_minus, sigma, sigma / n as f64)?;
        seg.captured = false;
        return Ok(FlowPath {
            dim: d,
            segments: vec![seg],
            crossed: vec![],
            x_minus: *x_minus,
            x_plus: *x_plus,
            kind: PathKind::Finite,
        });
    }
    let y0 = flows.nearest(&fwd.end(), 1e-4).ok_or_else(|| NoChain::NoLimit(format!("{x_minus:?}")))?;
    let (bwd, yk) = flows.limit(x_plus, -1.0)?;
    let yk = yk.ok_or_else(|| NoChain::NoLimit(format!("{x_plus:?}")))?;

    // depth-first search over connections with f increasing
    let mut chain = vec![y0];
    let mut orbits: Vec<Segment> = Vec::new();
    if !search(&flows, &mut chain, &mut orbits, yk, max_breaks)? {
        return Err(NoChain::Exhausted(max_breaks));
    }
    let mut segments = vec![fwd];
    segments.extend(orbits);
    segments.push(bwd.reversed());
    let crossed: Vec<CriticalPoint> = chain.iter().map(|&k| flows.cps[k]).collect();
    let x_minus_critical = f.df(x_minus).norm() < CP_TOL;
    let x_plus_critical = f.df(x_plus).norm() < CP_TOL;
    let kind = match (crossed.len(), x_minus_critical, x_plus_critical) {
        (1, false, true) => PathKind::HalfInfinitePos,
        (1, true, false) => PathKind::HalfInfiniteNeg,
        (2, true, true) => PathKind::BiInfinite,
        _ => PathKind::Broken,
    };
    Ok(FlowPath { dim: d, segments, crossed, x_minus: *x_minus, x_plus: *x_plus, kind })
}

fn search(
    flows: &Flows,
    chain: &mut Vec<usize>,
    orbits: &mut Vec<Segment>,
    target: usize,
    max_breaks: usize,
) -> Result<bool, FlowError> {
    let last = *chain.last().expect("chain starts non-empty");
    if last == target {
        return Ok(true);
    }
    if chain.len() >= max_breaks {
        return Ok(false);
    }
    for next in 0..flows.cps.len() {
        if chain.contains(&next) {
            continue;
        }
        if let Some(seg) = flows.connect(last, next)? {
            chain.push(next);
            orbits.push(seg);
            if search(flows, chain, orbits, target, max_breaks)? {
                return Ok(true);
            }
            chain.pop();
            orbits.pop();
        }
    }
    Ok(false)
}

impl FlowPath {
    /// Largest pointwise `|Q' − g⁻¹df(Q)|` over all segments, with `Q'` by
    /// second-order differences of the samples.
    pub fn ode_residual(&self, chart: &MetricChart, f: &MorseData) -> Result<f64, FlowError> {
        let mut worst: f64 = 0.0;
        for seg in &self.segments {
            let n = seg.samples.len();
            if n < 3 || seg.step == 0.0 {
                continue;
            }
            let dq = crate::geometry::diff_path(&seg.samples, seg.step);
            for k in 0..n {
                worst = worst.max((dq[k] - gradient(chart, f, &seg.samples[k])?).norm());
            }
        }
        Ok(worst)
    }

    /// Values of f at the crossed critical points, in order.
    pub fn critical_values(&self, f: &MorseData) -> Vec<f64> {
        self.crossed.iter().map(|c| f.f(&c.location)).collect()
    }

    /// Position on the first segment at `σ` measured from its start, by cubic
    /// Hermite interpolation with slopes `g⁻¹df`; constant past its end.
    pub fn eval_first(&self, chart: &MetricChart, f: &MorseData, sigma: f64) -> Result<Pt, FlowError> {
        let seg = &self.segments[0];
        let n = seg.samples.len();
        if n == 1 || seg.step == 0.0 || sigma <= 0.0 {
            return Ok(seg.samples[0]);
        }
        let x = sigma / seg.step;
        if x >= (n - 1) as f64 {
            return Ok(seg.end());
        }
        let k = x.floor() as usize;
        let tau = x - k as f64;
        let (a, b) = (seg.samples[k], seg.samples[k + 1]);
        let (da, db) = (gradient(chart, f, &a)? * seg.step, gradient(chart, f, &b)? * seg.step);
        let t2 = tau * tau;
        let t3 = t2 * tau;
        Ok((2.0 * t3 - 3.0 * t2 + 1.0) * a + (t3 - 2.0 * t2 + tau) * da + (-2.0 * t3 + 3.0 * t2) * b + (t3 - t2) * db)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    #[test]
    fn critical_start_gives_constant_segment() {
        let chart = MetricChart::flat(1).unwrap();
        let f = MorseData::cosine_wells(1, &[1.0], &[1.0], &[0.0]).unwrap();
        let seg = integrate_flow(&chart, &f, &Pt::new(0.5, 0.0), 5.0, 1e-3).unwrap();
        assert_eq!(seg.samples.len(), 1);
        assert!(seg.captured);
    }

    #[test]
    fn step_limit_is_enforced() {
        let chart = MetricChart::flat(1).unwrap();
        let f = MorseData::cosine_wells(1, &[1.0], &[1.0], &[0.0]).unwrap();
        assert!(matches!(
            integrate_flow(&chart, &f, &Pt::new(0.2, 0.0), 1.0, 0.1),
            Err(FlowError::StepTooLarge { .. })
        ));
    }

    #[test]
    fn criticals_of_cosine_1d() {
        let chart = MetricChart::flat(1).unwrap();
        let f = MorseData::cosine_wells(1, &[1.0], &[1.0], &[0.0]).unwrap();
        let cps = find_criticals(&chart, &f).unwrap();
        assert_eq!(cps.len(), 2);
        assert_abs_diff_eq!(cps[0].location[0], 0.0, epsilon = 1e-10);
        assert_eq!(cps[0].index, 0);
        assert_abs_diff_eq!(cps[1].location[0], 0.5, epsilon = 1e-10);
        assert_eq!(cps[1].index, 1);
    }

    #[test]
    fn criticals_of_product_2d() {
        let f = MorseData::cosine_wells(2, &[1.0], &[1.0], &[0.0]).unwrap();
        let flat = find_criticals(&MetricChart::flat(2).unwrap(), &f).unwrap();
        let curved = find_criticals(&MetricChart::diag_perturbed_2d(0.3).unwrap(), &f).unwrap();
        let mut idx: Vec<usize> = flat.iter().map(|c| c.index).collect();
        idx.sort();
        assert_eq!(idx, vec![0, 1, 1, 2]);
        assert_eq!(flat, curved);
    }

    #[test]
    fn constant_function_is_not_morse() {
        let f = MorseData::cosine_wells(1, &[0.0], &[1.0], &[0.0]).unwrap();
        assert!(matches!(find_criticals(&MetricChart::flat(1).unwrap(), &f), Err(FlowError::NonMorse(..))));
    }

    #[test]
    fn same_segment_gives_finite_path() {
        let chart = MetricChart::flat(1).unwrap();
        let f = MorseData::cosine_wells(1, &[0.1], &[1.0], &[0.0]).unwrap();
        // flow is monotone increasing on (0, ½)
        let seg = integrate_flow(&chart, &f, &Pt::new(0.1, 0.0), 1.0, 1e-3).unwrap();
        let xp = seg.samples[500];
        let path = assemble_broken(&chart, &f, &Pt::new(0.1, 0.0), &xp, 3).unwrap();
        assert_eq!(path.kind, PathKind::Finite);
        assert_eq!(path.segments.len(), 1);
        assert!(path.crossed.is_empty());
    }

    #[test]
    fn one_dimensional_max_is_a_dead_end() {
        // f = −A cos(4πq)/(4π): maxima at ¼, ¾ absorb the flow, minima at 0, ½ emit it
        let chart = MetricChart::flat(1).unwrap();
        let f = MorseData::cosine_wells(1, &[0.1 / (4.0 * PI)], &[2.0], &[0.0]).unwrap();
        let out = assemble_broken(&chart, &f, &Pt::new(0.1, 0.0), &Pt::new(0.6, 0.0), 4);
        assert!(matches!(out, Err(NoChain::Exhausted(4))));
    }

    #[test]
    fn min_to_max_chain_in_1d() {
        let chart = MetricChart::flat(1).unwrap();
        let f = MorseData::cosine_wells(1, &[0.5], &[1.0], &[0.0]).unwrap();
        // x₋ at the minimum 0, x₊ at the maximum ½
        let path = assemble_broken(&chart, &f, &Pt::new(0.0, 0.0), &Pt::new(0.5, 0.0), 3).unwrap();
        assert_eq!(path.kind, PathKind::BiInfinite);
        let vals = path.critical_values(&f);
        assert!(vals.windows(2).all(|w| w[1] > w[0]));
    }
}
