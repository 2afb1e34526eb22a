//! The discrete boundary value problem: unknowns, stacked residual and its
//! sparse Jacobian.
//!
//! Every node owns `2d` equations. Interior nodes carry both CR components at
//! the node. Boundary nodes carry one pointwise condition plus one CR
//! component evaluated half a cell inside the domain:
//!
//! | nodes            | pointwise           | CR                  |
//! |------------------|---------------------|---------------------|
//! | bottom / top row | graph               | E2 at `(i, j ± ½)`  |
//! | right arc        | `P̃ = 0`            | E1 at `(n − ½, j)`  |
//! | right corners    | graph               | E1 at `(n − ½, j ± ½)` |
//! | left arc         | Q-type anchor       | E2 at `(½, j)`      |
//! | left corners     | graph + Q-type anchor | none              |

use super::{AdiabaticData, Formulation, StripError, StripField};
use crate::geometry::{gamma_contract, Christoffel, Mat, MetricChart, Pt};

pub(crate) struct Triplet {
    pub row: usize,
    pub col: usize,
    pub val: f64,
}

#[derive(Clone, Copy)]
enum Cr {
    E1,
    E2,
}

#[derive(Clone, Copy)]
enum Point {
    Bottom,
    Top,
    Right(usize),
    Left(usize),
}

#[derive(Clone, Copy)]
enum Eq {
    Point(Point),
    /// CR component at doubled coordinates `(a, b)`.
    Cr(Cr, usize, usize),
}

/// Stencil weights of one evaluation location: node, value weight, `∂ₛ`
/// weight, `∂ₜ` weight.
struct Stencil {
    len: usize,
    nodes: [(usize, f64, f64, f64); 8],
}

impl Stencil {
    fn add(&mut self, node: usize, wv: f64, ws: f64, wt: f64) {
        for e in self.nodes[..self.len].iter_mut() {
            if e.0 == node {
                e.1 += wv;
                e.2 += ws;
                e.3 += wt;
                return;
            }
        }
        self.nodes[self.len] = (node, wv, ws, wt);
        self.len += 1;
    }
}

/// One-dimensional weights along an axis at doubled coordinate `a`:
/// (index, value weight, derivative weight).
fn axis(a: usize, h: f64) -> ([(usize, f64, f64); 3], usize) {
    let mut out = [(0, 0.0, 0.0); 3];
    if a % 2 == 1 {
        let i0 = (a - 1) / 2;
        out[0] = (i0, 0.5, -1.0 / h);
        out[1] = (i0 + 1, 0.5, 1.0 / h);
        (out, 2)
    } else {
        let i = a / 2;
        out[0] = (i - 1, 0.0, -0.5 / h);
        out[1] = (i, 1.0, 0.0);
        out[2] = (i + 1, 0.0, 0.5 / h);
        (out, 3)
    }
}

/// Coefficients of the left anchor `A (Q − x) + B (P − p₀)` at one `t`.
struct LeftAnchor {
    a: Mat,
    b: Mat,
    p0: Pt,
}

pub(crate) struct System<'a> {
    chart: &'a MetricChart,
    bc: &'a AdiabaticData,
    modified: bool,
    x: Pt,
    dim: usize,
    ns: usize,
    nt: usize,
    hs: f64,
    ht: f64,
    left: Vec<LeftAnchor>,
}

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

impl<'a> System<'a> {
    pub fn new(
        chart: &'a MetricChart,
        bc: &'a AdiabaticData,
        formulation: Formulation,
        x_minus: Pt,
        template: &StripField,
    ) -> Result<Self, StripError> {
        let modified = formulation == Formulation::Modified;
        let dim = template.dim;
        let nt = template.nt;
        let mut left = Vec::with_capacity(nt + 1);
        let loc = chart.local(&x_minus)?;
        let eps = bc.eps;
        let ha = bc.covariant_hess_a(&loc.gam);
        let hf = bc.f.covariant_hess(&loc.gam, &x_minus);
        let dfx = bc.f.df(&x_minus);
        for j in 0..=nt {
            let t = j as f64 / nt as f64;
            if modified {
                left.push(LeftAnchor { a: Mat::identity(), b: Mat::zeros(), p0: eps * bc.a(&x_minus) });
                continue;
            }
            // Tilted so the left arc meets both boundary graphs orthogonally
            // to first order; this keeps the corners second-order accurate.
            let p0 = eps * (bc.a(&x_minus) + smoothstep(t) * dfx);
            let h = eps * (ha + t * hf);
            let b = h * loc.ginv;
            let mut m = Mat::zeros();
            for l in 0..2 {
                for i in 0..2 {
                    for k in 0..2 {
                        m[(l, i)] += loc.gam[k][i][l] * p0[k];
                    }
                }
            }
            let mut a = loc.g - b * m;
            if dim == 1 {
                a[(1, 1)] = 1.0;
            }
            left.push(LeftAnchor { a, b, p0 });
        }
        Ok(System {
            chart,
            bc,
            modified,
            x: x_minus,
            dim,
            ns: template.ns,
            nt,
            hs: template.hs(),
            ht: template.ht(),
            left,
        })
    }

    pub fn n_unknowns(&self) -> usize {
        (self.ns + 1) * (self.nt + 1) * 2 * self.dim
    }

    fn node(&self, i: usize, j: usize) -> usize {
        i * (self.nt + 1) + j
    }

    fn equations(&self, i: usize, j: usize) -> [Eq; 2] {
        let (ns, nt) = (self.ns, self.nt);
        let (bot, top) = (Point::Bottom, Point::Top);
        match (i, j) {
            (0, 0) => [Eq::Point(bot), Eq::Point(Point::Left(0))],
            (0, j) if j == nt => [Eq::Point(top), Eq::Point(Point::Left(nt))],
            (0, j) => [Eq::Point(Point::Left(j)), Eq::Cr(Cr::E2, 1, 2 * j)],
            (i, 0) if i == ns => [Eq::Point(bot), Eq::Cr(Cr::E1, 2 * ns - 1, 1)],
            (i, j) if i == ns && j == nt => [Eq::Point(top), Eq::Cr(Cr::E1, 2 * ns - 1, 2 * nt - 1)],
            (i, j) if i == ns => [Eq::Point(Point::Right(j)), Eq::Cr(Cr::E1, 2 * ns - 1, 2 * j)],
            (i, 0) => [Eq::Point(bot), Eq::Cr(Cr::E2, 2 * i, 1)],
            (i, j) if j == nt => [Eq::Point(top), Eq::Cr(Cr::E2, 2 * i, 2 * nt - 1)],
            (i, j) => [Eq::Cr(Cr::E1, 2 * i, 2 * j), Eq::Cr(Cr::E2, 2 * i, 2 * j)],
        }
    }

    fn stencil(&self, a: usize, b: usize) -> Stencil {
        let (sa, ns_) = axis(a, self.hs);
        let (tb, nt_) = axis(b, self.ht);
        let mut st = Stencil { len: 0, nodes: [(0, 0.0, 0.0, 0.0); 8] };
        for &(i, sv, sd) in &sa[..ns_] {
            for &(j, tv, td) in &tb[..nt_] {
                let (wv, ws, wt) = (sv * tv, sd * tv, sv * td);
                if wv != 0.0 || ws != 0.0 || wt != 0.0 {
                    st.add(self.node(i, j), wv, ws, wt);
                }
            }
        }
        st
    }

    pub fn pack(&self, u: &StripField) -> Vec<f64> {
        let d = self.dim;
        let mut x = vec![0.0; self.n_unknowns()];
        for n in 0..u.q.len() {
            for c in 0..d {
                x[n * 2 * d + c] = u.q[n][c];
                x[n * 2 * d + d + c] = u.p[n][c];
            }
        }
        x
    }

    pub fn unpack(&self, x: &[f64], u: &mut StripField) {
        let d = self.dim;
        for n in 0..u.q.len() {
            for c in 0..d {
                u.q[n][c] = x[n * 2 * d + c];
                u.p[n][c] = x[n * 2 * d + d + c];
            }
        }
    }

    fn qp(&self, x: &[f64], n: usize) -> (Pt, Pt) {
        let d = self.dim;
        let mut q = Pt::zeros();
        let mut p = Pt::zeros();
        for c in 0..d {
            q[c] = x[n * 2 * d + c];
            p[c] = x[n * 2 * d + d + c];
        }
        (q, p)
    }

    /// Stacked residual; with `jac`, also the Jacobian triplets.
    pub fn eval(&self, x: &[f64], mut jac: Option<&mut Vec<Triplet>>) -> Result<Vec<f64>, StripError> {
        let d = self.dim;
        let mut r = vec![0.0; self.n_unknowns()];
        if let Some(j) = jac.as_deref_mut() {
            j.clear();
        }
        for i in 0..=self.ns {
            for j in 0..=self.nt {
                let n = self.node(i, j);
                for (blk, eq) in self.equations(i, j).iter().enumerate() {
                    let row0 = n * 2 * d + blk * d;
                    match *eq {
                        Eq::Point(pt) => self.point_eq(pt, x, n, j, row0, &mut r, jac.as_deref_mut())?,
                        Eq::Cr(cr, a, b) => self.cr_eq(cr, a, b, x, row0, &mut r, jac.as_deref_mut())?,
                    }
                }
            }
        }
        Ok(r)
    }

    #[allow(clippy::too_many_arguments)]
    fn point_eq(
        &self,
        pt: Point,
        x: &[f64],
        n: usize,
        j: usize,
        row0: usize,
        r: &mut [f64],
        jac: Option<&mut Vec<Triplet>>,
    ) -> Result<(), StripError> {
        let d = self.dim;
        let eps = self.bc.eps;
        let (q, p) = self.qp(x, n);
        // value, dV/dQ, dV/dP
        let (val, jq, jp) = match pt {
            Point::Bottom => (p - eps * self.bc.a(&q), Mat::zeros(), Mat::identity()),
            Point::Top | Point::Right(_) => {
                let t = match pt {
                    Point::Right(j) => j as f64 / self.nt as f64,
                    _ => 1.0,
                };
                if self.modified {
                    // φ₋ₜ maps both graphs onto ε𝔞
                    (p - eps * self.bc.a(&q), Mat::zeros(), Mat::identity())
                } else {
                    let df = self.bc.f.df(&q);
                    (p - eps * (self.bc.a(&q) + t * df), -eps * t * self.bc.f.hess(&q), Mat::identity())
                }
            }
            Point::Left(jj) => {
                debug_assert_eq!(jj, j);
                let la = &self.left[jj];
                (la.a * (q - self.x) + la.b * (p - la.p0), la.a, la.b)
            }
        };
        for l in 0..d {
            r[row0 + l] = val[l];
        }
        if let Some(jac) = jac {
            for l in 0..d {
                for m in 0..d {
                    if jq[(l, m)] != 0.0 {
                        jac.push(Triplet { row: row0 + l, col: n * 2 * d + m, val: jq[(l, m)] });
                    }
                    if jp[(l, m)] != 0.0 {
                        jac.push(Triplet { row: row0 + l, col: n * 2 * d + d + m, val: jp[(l, m)] });
                    }
                }
            }
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn cr_eq(
        &self,
        cr: Cr,
        a: usize,
        b: usize,
        x: &[f64],
        row0: usize,
        r: &mut [f64],
        jac: Option<&mut Vec<Triplet>>,
    ) -> Result<(), StripError> {
        let d = self.dim;
        let st = self.stencil(a, b);
        let (mut qb, mut pb, mut qs, mut qt, mut ps, mut pt) =
            (Pt::zeros(), Pt::zeros(), Pt::zeros(), Pt::zeros(), Pt::zeros(), Pt::zeros());
        for &(n, wv, ws, wt) in &st.nodes[..st.len] {
            let (q, p) = self.qp(x, n);
            qb += wv * q;
            pb += wv * p;
            qs += ws * q;
            qt += wt * q;
            ps += ws * p;
            pt += wt * p;
        }
        let loc = self.chart.local(&qb)?;
        let eps = self.bc.eps;
        let mu = if self.modified { 1.0 } else { 0.0 };
        // E1 = g Qs − Pt + Γ[Qt, P̄] − μ ε df(Q̄);  E2 = g Qt + Ps − Γ[Qs, P̄]
        let (qa, pd, sign) = match cr {
            Cr::E1 => (qs, pt, -1.0),
            Cr::E2 => (qt, ps, 1.0),
        };
        let qo = match cr {
            Cr::E1 => qt,
            Cr::E2 => qs,
        };
        let mut val = loc.g * qa + sign * pd - sign * gamma_contract(&loc.gam, &qo, &pb);
        if let Cr::E1 = cr {
            if mu != 0.0 {
                val -= eps * self.bc.f.df(&qb);
            }
        }
        for l in 0..d {
            r[row0 + l] = val[l];
        }
        let Some(jac) = jac else { return Ok(()) };
        // Derivative with respect to Q̄ (value-weighted part).
        let mut dval_dq = Mat::zeros();
        let hess = if mu != 0.0 { Some(self.bc.f.hess(&qb)) } else { None };
        for m in 0..d {
            let col = loc.dg[m] * qa - sign * contract_dgam(&loc.dgam[m], &qo, &pb);
            for l in 0..d {
                dval_dq[(l, m)] = col[l];
            }
        }
        if let (Cr::E1, Some(h)) = (cr, hess) {
            dval_dq -= eps * h;
        }
        // Γ[e_m, P̄]_l and Γ[w, e_m]_l as matrices in (l, m).
        let g_ep = gamma_matrix_w(&loc.gam, &pb);
        let g_we = gamma_matrix_p(&loc.gam, &qo);
        for &(n, wv, ws, wt) in &st.nodes[..st.len] {
            // weight of the derivative on the "active" Q term and the "other" one
            let (wa, wo, wpd) = match cr {
                Cr::E1 => (ws, wt, wt),
                Cr::E2 => (wt, ws, ws),
            };
            for l in 0..d {
                for m in 0..d {
                    let dq = wv * dval_dq[(l, m)] + wa * loc.g[(l, m)] - sign * wo * g_ep[(l, m)];
                    let mut dp = -sign * wv * g_we[(l, m)];
                    if l == m {
                        dp += sign * wpd;
                    }
                    if dq != 0.0 {
                        jac.push(Triplet { row: row0 + l, col: n * 2 * d + m, val: dq });
                    }
                    if dp != 0.0 {
                        jac.push(Triplet { row: row0 + l, col: n * 2 * d + d + m, val: dp });
                    }
                }
            }
        }
        Ok(())
    }
}

/// `Σ ∂ₘΓᵏᵢₗ wⁱ p_k` as a vector in `l`.
fn contract_dgam(dgam: &Christoffel, w: &Pt, p: &Pt) -> Pt {
    gamma_contract(dgam, w, p)
}

/// Matrix `M_{lm} = Σ_k Γᵏₘₗ p_k` (derivative of `Γ[w, p]` in `w`).
fn gamma_matrix_w(gam: &Christoffel, p: &Pt) -> Mat {
    let mut m = Mat::zeros();
    for l in 0..2 {
        for i in 0..2 {
            for k in 0..2 {
                m[(l, i)] += gam[k][i][l] * p[k];
            }
        }
    }
    m
}

/// Matrix `M_{lm} = Σ_i Γᵐᵢₗ wⁱ` (derivative of `Γ[w, p]` in `p`).
fn gamma_matrix_p(gam: &Christoffel, w: &Pt) -> Mat {
    let mut m = Mat::zeros();
    for l in 0..2 {
        for k in 0..2 {
            for i in 0..2 {
                m[(l, k)] += gam[k][i][l] * w[i];
            }
        }
    }
    m
}
