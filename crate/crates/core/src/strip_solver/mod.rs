//! Holomorphic strips `u = (Q, P) : [−r, r] × [0, 1] → T*L` with adiabatic
//! graph boundary conditions, Floer's exact oracle and the two energy
//! functionals.

mod newton;
mod system;

pub use newton::{
    perturb_interior, solve_continuation, solve_problem, solve_strip, NewtonOptions, SolveError,
    SolveReport, StripProblem,
};

use crate::geometry::{
    christoffel, gamma_contract, inv2, torus_dist, Christoffel, GeometryError, Mat, MetricChart, MorseData, Pt,
};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StripError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("invalid boundary data: {0}")]
    Boundary(String),
}

/// Boundary data: bottom graph `ε𝔞`, top graph `ε(𝔞 + df)`. The catalog only
/// has constant forms 𝔞, which are closed.
#[derive(Clone, Debug, PartialEq)]
pub struct AdiabaticData {
    pub a_form: Pt,
    pub f: MorseData,
    pub eps: f64,
}

impl AdiabaticData {
    pub fn new(a_form: Pt, f: MorseData, eps: f64) -> Result<Self, StripError> {
        if !(eps >= 0.0 && eps.is_finite()) {
            return Err(StripError::Boundary(format!("eps must be finite and >= 0, got {eps}")));
        }
        if !(a_form[0].is_finite() && a_form[1].is_finite()) {
            return Err(StripError::Boundary("non-finite a_form".into()));
        }
        let mut a_form = a_form;
        if f.dim() == 1 {
            a_form[1] = 0.0;
        }
        Ok(AdiabaticData { a_form, f, eps })
    }

    pub fn with_eps(&self, eps: f64) -> Self {
        AdiabaticData { eps, ..self.clone() }
    }

    pub fn dim(&self) -> usize {
        self.f.dim()
    }

    pub fn a(&self, _q: &Pt) -> Pt {
        self.a_form
    }

    /// 𝔟 = 𝔞 + df.
    pub fn b(&self, q: &Pt) -> Pt {
        self.a_form + self.f.df(q)
    }

    /// `∂₁𝔞₂ − ∂₂𝔞₁` by central differences at `q`.
    pub fn curl_defect(&self, q: &Pt) -> f64 {
        if self.dim() == 1 {
            return 0.0;
        }
        let h = 1e-6;
        let e0 = Pt::new(h, 0.0);
        let e1 = Pt::new(0.0, h);
        let d1a2 = (self.a(&(q + e0))[1] - self.a(&(q - e0))[1]) / (2.0 * h);
        let d2a1 = (self.a(&(q + e1))[0] - self.a(&(q - e1))[0]) / (2.0 * h);
        d1a2 - d2a1
    }

    /// Covariant Hessian of the constant form, `∇𝔞_{ij} = −Γᵏᵢⱼ 𝔞_k`.
    pub fn covariant_hess_a(&self, gam: &Christoffel) -> Mat {
        let mut h = Mat::zeros();
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    h[(i, j)] -= gam[k][i][j] * self.a_form[k];
                }
            }
        }
        h
    }
}

/// How the t-dependent Floer structure is treated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Formulation {
    /// `u` itself is J₀-holomorphic with graph boundaries ε𝔞, ε(𝔞+df).
    Direct,
    /// `ũ = φ₋ₜ(u)` solves `∂ₛũ + J₀(∂ₜũ + ε X_f)` = 0 with both boundaries on ε𝔞.
    Modified,
}

/// End data on the arcs `s = ±r`: the Q-part of the oracle arc through
/// `x_minus` on the left, the P-part (`P̃ = 0`) on the right.
#[derive(Clone, Debug, PartialEq)]
pub enum EndCondition {
    /// Initial guess by ε-continuation from the zero section.
    Dirichlet { x_minus: Pt },
    /// Initial guess from the Floer oracle through `x_minus`, perturbed at
    /// interior nodes by the relative amount `perturb`.
    FloerSeeded { x_minus: Pt, perturb: f64 },
}

impl EndCondition {
    pub fn x_minus(&self) -> Pt {
        match self {
            EndCondition::Dirichlet { x_minus } | EndCondition::FloerSeeded { x_minus, .. } => *x_minus,
        }
    }
}

/// Discretized map on a node-centred uniform grid over
/// `[s_min, s_max] × [0, t_max]`, stored `s`-major.
#[derive(Clone, Debug, PartialEq)]
pub struct StripField {
    pub dim: usize,
    pub s_min: f64,
    pub s_max: f64,
    pub t_max: f64,
    pub ns: usize,
    pub nt: usize,
    pub q: Vec<Pt>,
    pub p: Vec<Pt>,
}

impl StripField {
    pub fn new(dim: usize, r: f64, ns: usize, nt: usize) -> Result<Self, StripError> {
        Self::on_rect(dim, -r, r, 1.0, ns, nt)
    }

    pub fn on_rect(
        dim: usize,
        s_min: f64,
        s_max: f64,
        t_max: f64,
        ns: usize,
        nt: usize,
    ) -> Result<Self, StripError> {
        if ns < 2 || nt < 2 {
            return Err(StripError::Grid(format!("need ns, nt >= 2, got {ns} x {nt}")));
        }
        if !(s_max > s_min && t_max > 0.0) {
            return Err(StripError::Grid(format!("empty rectangle [{s_min},{s_max}]x[0,{t_max}]")));
        }
        if dim != 1 && dim != 2 {
            return Err(GeometryError::Dimension(dim).into());
        }
        let n = (ns + 1) * (nt + 1);
        Ok(StripField { dim, s_min, s_max, t_max, ns, nt, q: vec![Pt::zeros(); n], p: vec![Pt::zeros(); n] })
    }

    pub fn from_fn<F>(dim: usize, r: f64, ns: usize, nt: usize, mut f: F) -> Result<Self, StripError>
    where
        F: FnMut(f64, f64) -> (Pt, Pt),
    {
        let mut u = Self::new(dim, r, ns, nt)?;
        for i in 0..=ns {
            for j in 0..=nt {
                let (q, p) = f(u.s(i), u.t(j));
                let k = u.idx(i, j);
                u.q[k] = q;
                u.p[k] = p;
            }
        }
        Ok(u)
    }

    pub fn constant(dim: usize, r: f64, ns: usize, nt: usize, q: Pt, p: Pt) -> Result<Self, StripError> {
        Self::from_fn(dim, r, ns, nt, |_, _| (q, p))
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * (self.nt + 1) + j
    }

    pub fn hs(&self) -> f64 {
        (self.s_max - self.s_min) / self.ns as f64
    }

    pub fn ht(&self) -> f64 {
        self.t_max / self.nt as f64
    }

    pub fn s(&self, i: usize) -> f64 {
        if i == self.ns {
            self.s_max
        } else {
            self.s_min + i as f64 * self.hs()
        }
    }

    pub fn t(&self, j: usize) -> f64 {
        if j == self.nt {
            self.t_max
        } else {
            j as f64 * self.ht()
        }
    }

    pub fn half_length(&self) -> f64 {
        0.5 * (self.s_max - self.s_min)
    }

    /// Grid-consistency check.
    pub fn validate(&self) -> Result<(), StripError> {
        let n = (self.ns + 1) * (self.nt + 1);
        if self.ns < 2 || self.nt < 2 || self.q.len() != n || self.p.len() != n {
            return Err(StripError::Grid(format!(
                "grid {}x{} with {} Q and {} P samples",
                self.ns,
                self.nt,
                self.q.len(),
                self.p.len()
            )));
        }
        if self.q.iter().chain(self.p.iter()).any(|v| !(v[0].is_finite() && v[1].is_finite())) {
            return Err(StripError::Grid("non-finite samples".into()));
        }
        Ok(())
    }

    /// `∂ₛ` of a nodal array, second order (one-sided at `s = ±r`).
    pub fn d_s(&self, x: &[Pt], i: usize, j: usize) -> Pt {
        let h = self.hs();
        let n = self.ns;
        if i == 0 {
            (-3.0 * x[self.idx(0, j)] + 4.0 * x[self.idx(1, j)] - x[self.idx(2, j)]) / (2.0 * h)
        } else if i == n {
            (3.0 * x[self.idx(n, j)] - 4.0 * x[self.idx(n - 1, j)] + x[self.idx(n - 2, j)]) / (2.0 * h)
        } else {
            (x[self.idx(i + 1, j)] - x[self.idx(i - 1, j)]) / (2.0 * h)
        }
    }

    /// `∂ₜ` of a nodal array, second order (one-sided at `t = 0, t_max`).
    pub fn d_t(&self, x: &[Pt], i: usize, j: usize) -> Pt {
        let h = self.ht();
        let n = self.nt;
        if j == 0 {
            (-3.0 * x[self.idx(i, 0)] + 4.0 * x[self.idx(i, 1)] - x[self.idx(i, 2)]) / (2.0 * h)
        } else if j == n {
            (3.0 * x[self.idx(i, n)] - 4.0 * x[self.idx(i, n - 1)] + x[self.idx(i, n - 2)]) / (2.0 * h)
        } else {
            (x[self.idx(i, j + 1)] - x[self.idx(i, j - 1)]) / (2.0 * h)
        }
    }

    /// `ũ = φ₋ₜ(u)`: `P ↦ P − ε t df(Q)`.
    pub fn to_modified(&self, bc: &AdiabaticData) -> StripField {
        self.shift_by_hamiltonian(bc, -1.0)
    }

    /// Inverse of [`StripField::to_modified`].
    pub fn from_modified(&self, bc: &AdiabaticData) -> StripField {
        self.shift_by_hamiltonian(bc, 1.0)
    }

    fn shift_by_hamiltonian(&self, bc: &AdiabaticData, sign: f64) -> StripField {
        let mut out = self.clone();
        for i in 0..=self.ns {
            for j in 0..=self.nt {
                let k = self.idx(i, j);
                let t = self.t(j) / self.t_max;
                out.p[k] += sign * bc.eps * t * bc.f.df(&self.q[k]);
            }
        }
        out
    }

    /// Largest nodal distance to another field on the same grid: torus
    /// distance of the Q-parts and Euclidean distance of the P-parts.
    pub fn sup_distance(&self, other: &StripField) -> f64 {
        self.q
            .iter()
            .zip(&other.q)
            .zip(self.p.iter().zip(&other.p))
            .map(|((qa, qb), (pa, pb))| torus_dist(qa, qb, self.dim).max((pa - pb).norm()))
            .fold(0.0, f64::max)
    }
}

/// Per-node residual of the CR system: interior nodes carry
/// `(g ∂ₛQ − ∇ₜP, g ∂ₜQ + ∇ₛP)`, boundary rows carry the graph defect in `e1`.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualField {
    pub e1: Vec<Pt>,
    pub e2: Vec<Pt>,
}

impl ResidualField {
    pub fn max_abs(&self, u: &StripField, interior_only: bool) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..=u.ns {
            for j in 0..=u.nt {
                if interior_only && (j == 0 || j == u.nt || i == 0 || i == u.ns) {
                    continue;
                }
                let k = u.idx(i, j);
                m = m.max(self.e1[k].amax()).max(self.e2[k].amax());
            }
        }
        m
    }
}

pub fn cr_residual(
    chart: &MetricChart,
    u: &StripField,
    bc: &AdiabaticData,
    formulation: Formulation,
) -> Result<ResidualField, StripError> {
    u.validate()?;
    let n = u.q.len();
    let mut e1 = vec![Pt::zeros(); n];
    let mut e2 = vec![Pt::zeros(); n];
    let modified = formulation == Formulation::Modified;
    for i in 0..=u.ns {
        for j in 0..=u.nt {
            let k = u.idx(i, j);
            let q = u.q[k];
            let p = u.p[k];
            if j == 0 {
                e1[k] = p - bc.eps * bc.a(&q);
                continue;
            }
            if j == u.nt {
                let top = if modified { bc.a(&q) } else { bc.b(&q) };
                e1[k] = p - bc.eps * top;
                continue;
            }
            let loc = chart.local(&q)?;
            let qs = u.d_s(&u.q, i, j);
            let qt = u.d_t(&u.q, i, j);
            let ps = u.d_s(&u.p, i, j);
            let pt = u.d_t(&u.p, i, j);
            let nabla_t = pt - gamma_contract(&loc.gam, &qt, &p);
            let nabla_s = ps - gamma_contract(&loc.gam, &qs, &p);
            e1[k] = loc.g * qs - nabla_t;
            if modified {
                e1[k] -= bc.eps * bc.f.df(&q);
            }
            e2[k] = loc.g * qt + nabla_s;
        }
    }
    Ok(ResidualField { e1, e2 })
}

/// Floer's exact solution: `Q' = ε g⁻¹ df(Q)` from `Q(s₀) = q0` by RK4,
/// `P = ε(𝔞 + t df(Q(s)))`, on `[s₀, s₁] × [0, 1]`.
pub fn floer_oracle(
    chart: &MetricChart,
    bc: &AdiabaticData,
    q0: &Pt,
    s_range: (f64, f64),
    ns: usize,
    nt: usize,
) -> Result<StripField, StripError> {
    let mut u = StripField::on_rect(bc.dim(), s_range.0, s_range.1, 1.0, ns, nt)?;
    let path = rk4_gradient_path(chart, &bc.f, *q0, bc.eps, u.hs(), ns, 8)?;
    for (i, qi) in path.iter().enumerate() {
        let df = bc.f.df(qi);
        for j in 0..=nt {
            let k = u.idx(i, j);
            u.q[k] = *qi;
            u.p[k] = bc.eps * (bc.a(qi) + u.t(j) * df);
        }
    }
    Ok(u)
}

/// Samples of `Q' = scale · g⁻¹df(Q)` at `n + 1` points spaced `step`, each
/// step split into `sub` RK4 substeps.
pub(crate) fn rk4_gradient_path(
    chart: &MetricChart,
    f: &MorseData,
    q0: Pt,
    scale: f64,
    step: f64,
    n: usize,
    sub: usize,
) -> Result<Vec<Pt>, GeometryError> {
    let rhs = |q: &Pt| -> Result<Pt, GeometryError> { Ok(scale * (chart.g_inv(q)? * f.df(q))) };
    let h = step / sub as f64;
    let mut out = Vec::with_capacity(n + 1);
    let mut q = q0;
    out.push(q);
    for _ in 0..n {
        for _ in 0..sub {
            let k1 = rhs(&q)?;
            let k2 = rhs(&(q + 0.5 * h * k1))?;
            let k3 = rhs(&(q + 0.5 * h * k2))?;
            let k4 = rhs(&(q + h * k3))?;
            q += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        out.push(q);
    }
    Ok(out)
}

/// 2-D trapezoid weights on the grid of `u`.
fn trap_weight(u: &StripField, i: usize, j: usize) -> f64 {
    let ws = if i == 0 || i == u.ns { 0.5 } else { 1.0 };
    let wt = if j == 0 || j == u.nt { 0.5 } else { 1.0 };
    ws * wt * u.hs() * u.ht()
}

/// `∫ u*ω = ∫ (⟨∂ₛQ, ∂ₜP⟩ − ⟨∂ₜQ, ∂ₛP⟩) ds dt` by trapezoid quadrature.
pub fn omega_energy(u: &StripField) -> f64 {
    let mut acc = 0.0;
    for i in 0..=u.ns {
        for j in 0..=u.nt {
            let qs = u.d_s(&u.q, i, j);
            let qt = u.d_t(&u.q, i, j);
            let ps = u.d_s(&u.p, i, j);
            let pt = u.d_t(&u.p, i, j);
            acc += trap_weight(u, i, j) * (qs.dot(&pt) - qt.dot(&ps));
        }
    }
    acc
}

/// `∫ |∂ₛu|² = ∫ g(∂ₛQ, ∂ₛQ) + g⁻¹(∇ₛP, ∇ₛP)`.
pub fn dirichlet_energy(chart: &MetricChart, u: &StripField) -> Result<f64, StripError> {
    let mut acc = 0.0;
    for i in 0..=u.ns {
        for j in 0..=u.nt {
            let k = u.idx(i, j);
            let loc = chart.local(&u.q[k])?;
            let qs = u.d_s(&u.q, i, j);
            let ns = u.d_s(&u.p, i, j) - gamma_contract(&loc.gam, &qs, &u.p[k]);
            acc += trap_weight(u, i, j) * (qs.dot(&(loc.g * qs)) + ns.dot(&(loc.ginv * ns)));
        }
    }
    Ok(acc)
}

/// Boundary-integral form of the ω-energy with primitive `−λ_can + ε pr*𝔞`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct StokesEnergy {
    pub total: f64,
    /// Top edge: `ε (f(Q(r,1)) − f(Q(−r,1)))`.
    pub top: f64,
    /// Right arc `s = r`, traversed upwards.
    pub right: f64,
    /// Left arc `s = −r`, traversed downwards.
    pub left: f64,
}

pub fn stokes_energy(u: &StripField, bc: &AdiabaticData) -> StokesEnergy {
    let side = |i: usize| -> f64 {
        let mut acc = 0.0;
        for j in 0..=u.nt {
            let k = u.idx(i, j);
            let qt = u.d_t(&u.q, i, j);
            let w = if j == 0 || j == u.nt { 0.5 } else { 1.0 };
            acc += w * u.ht() * (bc.eps * bc.a(&u.q[k]) - u.p[k]).dot(&qt);
        }
        acc
    };
    let right = side(u.ns);
    let left = -side(0);
    let top = bc.eps * (bc.f.f(&u.q[u.idx(u.ns, u.nt)]) - bc.f.f(&u.q[u.idx(0, u.nt)]));
    StokesEnergy { total: top + right + left, top, right, left }
}

/// Sup over interior nodes of `|∇ₛ(g ∂ₜQ) − ∇ₜ(g ∂ₛQ)|`, which vanishes for
/// smooth `Q` (torsion-free, metric connection); the discrete value is O(h²).
pub fn interchange_defect(chart: &MetricChart, u: &StripField) -> Result<f64, GeometryError> {
    let n = u.q.len();
    let mut xt = vec![Pt::zeros(); n];
    let mut xs = vec![Pt::zeros(); n];
    for i in 0..=u.ns {
        for j in 0..=u.nt {
            let k = u.idx(i, j);
            let g = chart.g(&u.q[k]);
            xt[k] = g * u.d_t(&u.q, i, j);
            xs[k] = g * u.d_s(&u.q, i, j);
        }
    }
    let mut worst: f64 = 0.0;
    for i in 1..u.ns {
        for j in 1..u.nt {
            let k = u.idx(i, j);
            let gam = christoffel(chart, &u.q[k])?;
            let a = u.d_s(&xt, i, j) - gamma_contract(&gam, &u.d_s(&u.q, i, j), &xt[k]);
            let b = u.d_t(&xs, i, j) - gamma_contract(&gam, &u.d_t(&u.q, i, j), &xs[k]);
            worst = worst.max((a - b).norm());
        }
    }
    Ok(worst)
}

/// Inverse of a metric value, exposed for tests and post-processing.
pub fn metric_inverse(g: &Mat) -> Mat {
    inv2(g)
}
