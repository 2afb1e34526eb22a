//! Levi-Civita geometry of `T*L` over a flat torus chart `L = R^d / Z^d`.
//!
//! Points, tangent vectors and covectors are stored as [`Pt`] (a padded
//! `Vector2`); for `d = 1` only the first component is used and the second is
//! kept at zero. Metrics are padded with `1` on the unused diagonal slot.

mod catalog;
mod spectral;

pub use catalog::{catalog_charts, catalog_morse, CatalogEntry};
pub use spectral::SpectralMetric;

use nalgebra::{Matrix2, Vector2};
use std::f64::consts::PI;
use std::sync::Arc;
use thiserror::Error;

pub type Pt = Vector2<f64>;
pub type Mat = Matrix2<f64>;
/// `gam[k][i][j]` = Γᵏᵢⱼ.
pub type Christoffel = [[[f64; 2]; 2]; 2];

const TAU: f64 = 2.0 * PI;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("degenerate metric at q = ({q0}, {q1}): min eigenvalue {min_eig:e}")]
    DegenerateMetric { q0: f64, q1: f64, min_eig: f64 },
    #[error("path has {0} samples, at least 3 are needed")]
    ShortPath(usize),
    #[error("dimension must be 1 or 2, got {0}")]
    Dimension(usize),
    #[error("invalid parameter: {0}")]
    Parameter(String),
}

#[derive(Clone)]
pub enum MetricField {
    Flat,
    /// `g = exp(2 φ)`, `φ(q) = amp · sin(2πq)`.
    Conformal1d { amp: f64 },
    /// `g = I + amp · diag(sin 2πq₁, cos 2πq₂)`.
    DiagPerturbed2d { amp: f64 },
    Spectral(Arc<SpectralMetric>),
}

impl std::fmt::Debug for MetricField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MetricField::Flat => write!(f, "Flat"),
            MetricField::Conformal1d { amp } => write!(f, "Conformal1d({amp})"),
            MetricField::DiagPerturbed2d { amp } => write!(f, "DiagPerturbed2d({amp})"),
            MetricField::Spectral(s) => write!(f, "Spectral({}^{})", s.n(), s.dim()),
        }
    }
}

/// Local geometric data at one point, everything a residual or Jacobian needs.
#[derive(Clone, Debug)]
pub struct LocalGeometry {
    pub g: Mat,
    pub ginv: Mat,
    pub dg: [Mat; 2],
    pub gam: Christoffel,
    /// `dgam[m]` = ∂ₘΓ.
    pub dgam: [Christoffel; 2],
}

#[derive(Clone, Debug)]
pub struct MetricChart {
    dim: usize,
    field: MetricField,
}

fn check_dim(dim: usize) -> Result<(), GeometryError> {
    if dim == 1 || dim == 2 {
        Ok(())
    } else {
        Err(GeometryError::Dimension(dim))
    }
}

impl MetricChart {
    pub fn flat(dim: usize) -> Result<Self, GeometryError> {
        check_dim(dim)?;
        Ok(MetricChart { dim, field: MetricField::Flat })
    }

    pub fn conformal_1d(amp: f64) -> Result<Self, GeometryError> {
        if !amp.is_finite() {
            return Err(GeometryError::Parameter(format!("conformal amplitude {amp}")));
        }
        Ok(MetricChart { dim: 1, field: MetricField::Conformal1d { amp } })
    }

    pub fn diag_perturbed_2d(amp: f64) -> Result<Self, GeometryError> {
        if !(amp.abs() < 1.0) {
            return Err(GeometryError::Parameter(format!(
                "diag-perturbed amplitude must satisfy |amp| < 1, got {amp}"
            )));
        }
        Ok(MetricChart { dim: 2, field: MetricField::DiagPerturbed2d { amp } })
    }

    /// Metric given only by values; derivatives come from spectral
    /// differentiation on a `64^d` periodic sample grid.
    pub fn spectral<F>(dim: usize, g: F) -> Result<Self, GeometryError>
    where
        F: Fn(&Pt) -> Mat,
    {
        Self::spectral_with(dim, 64, g)
    }

    pub fn spectral_with<F>(dim: usize, n: usize, g: F) -> Result<Self, GeometryError>
    where
        F: Fn(&Pt) -> Mat,
    {
        check_dim(dim)?;
        let s = SpectralMetric::sample(dim, n, g)?;
        Ok(MetricChart { dim, field: MetricField::Spectral(Arc::new(s)) })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn field(&self) -> &MetricField {
        &self.field
    }

    pub fn is_flat(&self) -> bool {
        matches!(self.field, MetricField::Flat)
    }

    pub fn g(&self, q: &Pt) -> Mat {
        match &self.field {
            MetricField::Flat => Mat::identity(),
            MetricField::Conformal1d { amp } => {
                let e = (2.0 * amp * (TAU * q[0]).sin()).exp();
                Mat::new(e, 0.0, 0.0, 1.0)
            }
            MetricField::DiagPerturbed2d { amp } => Mat::new(
                1.0 + amp * (TAU * q[0]).sin(),
                0.0,
                0.0,
                1.0 + amp * (TAU * q[1]).cos(),
            ),
            MetricField::Spectral(s) => s.eval(q, None),
        }
    }

    /// First partials, `dg[m] = ∂ₘ g`.
    pub fn dg(&self, q: &Pt) -> [Mat; 2] {
        let z = Mat::zeros();
        match &self.field {
            MetricField::Flat => [z, z],
            MetricField::Conformal1d { amp } => {
                let e = (2.0 * amp * (TAU * q[0]).sin()).exp();
                let dphi = TAU * amp * (TAU * q[0]).cos();
                [Mat::new(2.0 * dphi * e, 0.0, 0.0, 0.0), z]
            }
            MetricField::DiagPerturbed2d { amp } => [
                Mat::new(TAU * amp * (TAU * q[0]).cos(), 0.0, 0.0, 0.0),
                Mat::new(0.0, 0.0, 0.0, -TAU * amp * (TAU * q[1]).sin()),
            ],
            MetricField::Spectral(s) => {
                let mut out = [z, z];
                for (m, o) in out.iter_mut().enumerate().take(self.dim) {
                    *o = s.eval(q, Some(&[m]));
                }
                out
            }
        }
    }

    /// Second partials, `d2g[m][n] = ∂ₘ∂ₙ g`.
    pub fn d2g(&self, q: &Pt) -> [[Mat; 2]; 2] {
        let z = Mat::zeros();
        match &self.field {
            MetricField::Flat => [[z, z], [z, z]],
            MetricField::Conformal1d { amp } => {
                let x = TAU * q[0];
                let e = (2.0 * amp * x.sin()).exp();
                let dphi = TAU * amp * x.cos();
                let ddphi = -TAU * TAU * amp * x.sin();
                let v = (2.0 * ddphi + 4.0 * dphi * dphi) * e;
                [[Mat::new(v, 0.0, 0.0, 0.0), z], [z, z]]
            }
            MetricField::DiagPerturbed2d { amp } => [
                [Mat::new(-TAU * TAU * amp * (TAU * q[0]).sin(), 0.0, 0.0, 0.0), z],
                [z, Mat::new(0.0, 0.0, 0.0, -TAU * TAU * amp * (TAU * q[1]).cos())],
            ],
            MetricField::Spectral(s) => {
                let mut out = [[z, z], [z, z]];
                for m in 0..self.dim {
                    for n in 0..self.dim {
                        out[m][n] = s.eval(q, Some(&[m, n]));
                    }
                }
                out
            }
        }
    }

    pub fn g_inv(&self, q: &Pt) -> Result<Mat, GeometryError> {
        let g = self.g(q);
        let min_eig = min_eigenvalue(&g);
        if !(min_eig > 0.0) {
            return Err(GeometryError::DegenerateMetric { q0: q[0], q1: q[1], min_eig });
        }
        Ok(inv2(&g))
    }

    /// `g`, `g⁻¹`, `∂g`, Γ and ∂Γ at `q`.
    pub fn local(&self, q: &Pt) -> Result<LocalGeometry, GeometryError> {
        let ginv = self.g_inv(q)?;
        let g = self.g(q);
        if self.is_flat() {
            let z = Mat::zeros();
            return Ok(LocalGeometry { g, ginv, dg: [z, z], gam: zero_gam(), dgam: [zero_gam(); 2] });
        }
        let dg = self.dg(q);
        let d2g = self.d2g(q);
        let d = self.dim;
        let gam = gamma_from(d, &ginv, &dg);
        let mut dgam = [zero_gam(); 2];
        for m in 0..d {
            // ∂ₘg⁻¹ = −g⁻¹ (∂ₘg) g⁻¹
            let dginv = -ginv * dg[m] * ginv;
            for k in 0..d {
                for i in 0..d {
                    for j in 0..d {
                        let mut acc = 0.0;
                        for l in 0..d {
                            let a = dg[i][(j, l)] + dg[j][(i, l)] - dg[l][(i, j)];
                            let da = d2g[m][i][(j, l)] + d2g[m][j][(i, l)] - d2g[m][l][(i, j)];
                            acc += dginv[(k, l)] * a + ginv[(k, l)] * da;
                        }
                        dgam[m][k][i][j] = 0.5 * acc;
                    }
                }
            }
        }
        Ok(LocalGeometry { g, ginv, dg, gam, dgam })
    }
}

pub fn zero_gam() -> Christoffel {
    [[[0.0; 2]; 2]; 2]
}

fn gamma_from(d: usize, ginv: &Mat, dg: &[Mat; 2]) -> Christoffel {
    let mut gam = zero_gam();
    for k in 0..d {
        for i in 0..d {
            for j in 0..d {
                let mut acc = 0.0;
                for l in 0..d {
                    acc += ginv[(k, l)] * (dg[i][(j, l)] + dg[j][(i, l)] - dg[l][(i, j)]);
                }
                gam[k][i][j] = 0.5 * acc;
            }
        }
    }
    gam
}

pub(crate) fn min_eigenvalue(m: &Mat) -> f64 {
    let a = m[(0, 0)];
    let b = 0.5 * (m[(0, 1)] + m[(1, 0)]);
    let c = m[(1, 1)];
    let mean = 0.5 * (a + c);
    let rad = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    mean - rad
}

pub(crate) fn inv2(m: &Mat) -> Mat {
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    Mat::new(m[(1, 1)], -m[(0, 1)], -m[(1, 0)], m[(0, 0)]) / det
}

/// Γᵏᵢⱼ = ½ gᵏˡ(∂ᵢ g_{jl} + ∂ⱼ g_{il} − ∂ₗ g_{ij}).
pub fn christoffel(chart: &MetricChart, q: &Pt) -> Result<Christoffel, GeometryError> {
    if !(q[0].is_finite() && q[1].is_finite()) {
        return Err(GeometryError::Parameter("non-finite point".into()));
    }
    let ginv = chart.g_inv(q)?;
    Ok(gamma_from(chart.dim, &ginv, &chart.dg(q)))
}

/// `Γ[w, p]_j = Σ Γᵏᵢⱼ wⁱ p_k`, the connection term of a covariant derivative
/// of the covector `p` along `w`.
pub fn gamma_contract(gam: &Christoffel, w: &Pt, p: &Pt) -> Pt {
    let mut out = Pt::zeros();
    for j in 0..2 {
        let mut acc = 0.0;
        for i in 0..2 {
            for k in 0..2 {
                acc += gam[k][i][j] * w[i] * p[k];
            }
        }
        out[j] = acc;
    }
    out
}

/// A tangent vector to `T*L` in splitting coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CotangentVec {
    /// Horizontal part (a tangent vector of `L`).
    pub h: Pt,
    /// Vertical part (a covector).
    pub v: Pt,
}

impl CotangentVec {
    pub fn new(h: Pt, v: Pt) -> Self {
        CotangentVec { h, v }
    }
}

/// `J₀(h, v) = (−g⁻¹v, g h)`.
pub fn j0_apply(chart: &MetricChart, q: &Pt, x: &CotangentVec) -> CotangentVec {
    let g = chart.g(q);
    CotangentVec { h: -(inv2(&g) * x.v), v: g * x.h }
}

/// `ω((h₁,v₁),(h₂,v₂)) = ⟨h₁,v₂⟩ − ⟨h₂,v₁⟩`.
pub fn omega(x: &CotangentVec, y: &CotangentVec) -> f64 {
    x.h.dot(&y.v) - y.h.dot(&x.v)
}

/// The metric `g ⊕ g⁻¹` on `T(T*L)` induced by the splitting.
pub fn metric_tt(chart: &MetricChart, q: &Pt, x: &CotangentVec, y: &CotangentVec) -> f64 {
    let g = chart.g(q);
    x.h.dot(&(g * y.h)) + x.v.dot(&(inv2(&g) * y.v))
}

/// `X_f = (0, df(q))`; its flow is the fiberwise translation `p ↦ p + t·df(q)`.
pub fn hamiltonian_field(f: &MorseData, q: &Pt) -> CotangentVec {
    CotangentVec { h: Pt::zeros(), v: f.df(q) }
}

/// Covariant derivative of the covector path `p` along `q`:
/// `(∇P)_j = P'_j − Γᵏᵢⱼ(Q) Q'ⁱ P_k`, second-order differences throughout.
pub fn covariant_t(
    chart: &MetricChart,
    q: &[Pt],
    p: &[Pt],
    step: f64,
) -> Result<Vec<Pt>, GeometryError> {
    let n = q.len();
    if n < 3 || p.len() != n {
        return Err(GeometryError::ShortPath(n.min(p.len())));
    }
    let dq = diff_path(q, step);
    let dp = diff_path(p, step);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let gam = christoffel(chart, &q[i])?;
        out.push(dp[i] - gamma_contract(&gam, &dq[i], &p[i]));
    }
    Ok(out)
}

/// Second-order first derivative of a sampled path: central inside,
/// one-sided three-point at the ends.
pub fn diff_path(x: &[Pt], step: f64) -> Vec<Pt> {
    let n = x.len();
    let mut out = vec![Pt::zeros(); n];
    for i in 0..n {
        out[i] = if i == 0 {
            (-3.0 * x[0] + 4.0 * x[1] - x[2]) / (2.0 * step)
        } else if i == n - 1 {
            (3.0 * x[n - 1] - 4.0 * x[n - 2] + x[n - 3]) / (2.0 * step)
        } else {
            (x[i + 1] - x[i - 1]) / (2.0 * step)
        };
    }
    out
}

/// Distance on the flat torus `R^d/Z^d` (unit period per coordinate).
pub fn torus_dist(a: &Pt, b: &Pt, dim: usize) -> f64 {
    let mut acc = 0.0;
    for c in 0..dim {
        let d = a[c] - b[c];
        let w = d - d.round();
        acc += w * w;
    }
    acc.sqrt()
}

/// Wrap each used coordinate into `[0, 1)`.
pub fn wrap(q: &Pt, dim: usize) -> Pt {
    let mut out = *q;
    for c in 0..dim {
        let w = q[c] - q[c].floor();
        // tiny negatives round up to exactly 1
        out[c] = if w >= 1.0 { 0.0 } else { w };
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub enum MorseFn {
    /// `f(q) = −Σᵢ Aᵢ cos(2π kᵢ qᵢ + φᵢ)`.
    CosineWells { amp: [f64; 2], k: [f64; 2], phase: [f64; 2] },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CriticalPoint {
    pub location: Pt,
    pub index: usize,
    pub tol: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MorseData {
    dim: usize,
    func: MorseFn,
    critical_points: Vec<CriticalPoint>,
}

impl MorseData {
    pub fn cosine_wells(
        dim: usize,
        amp: &[f64],
        k: &[f64],
        phase: &[f64],
    ) -> Result<Self, GeometryError> {
        check_dim(dim)?;
        let pick = |v: &[f64], name: &str, default: f64| -> Result<[f64; 2], GeometryError> {
            let mut out = [default, default];
            match v.len() {
                0 => {}
                1 => out = [v[0], v[0]],
                n if n == dim => out[..dim].copy_from_slice(v),
                n => {
                    return Err(GeometryError::Parameter(format!(
                        "{name} has {n} entries for dimension {dim}"
                    )))
                }
            }
            if dim == 1 {
                out[1] = 0.0;
            }
            Ok(out)
        };
        let amp = pick(amp, "amplitude", 0.0)?;
        let k = pick(k, "wavenumber", 1.0)?;
        let phase = pick(phase, "phase", 0.0)?;
        for c in 0..dim {
            if k[c] < 1.0 || k[c].fract() != 0.0 {
                return Err(GeometryError::Parameter(format!(
                    "wavenumber must be a positive integer, got {}",
                    k[c]
                )));
            }
            if !amp[c].is_finite() || !phase[c].is_finite() {
                return Err(GeometryError::Parameter("non-finite cosine-well parameter".into()));
            }
        }
        Ok(MorseData { dim, func: MorseFn::CosineWells { amp, k, phase }, critical_points: Vec::new() })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn func(&self) -> &MorseFn {
        &self.func
    }

    pub fn critical_points(&self) -> &[CriticalPoint] {
        &self.critical_points
    }

    pub fn with_critical_points(mut self, cps: Vec<CriticalPoint>) -> Self {
        self.critical_points = cps;
        self
    }

    pub fn f(&self, q: &Pt) -> f64 {
        let MorseFn::CosineWells { amp, k, phase } = &self.func;
        (0..self.dim).map(|c| -amp[c] * (TAU * k[c] * q[c] + phase[c]).cos()).sum()
    }

    pub fn df(&self, q: &Pt) -> Pt {
        let MorseFn::CosineWells { amp, k, phase } = &self.func;
        let mut out = Pt::zeros();
        for c in 0..self.dim {
            out[c] = TAU * k[c] * amp[c] * (TAU * k[c] * q[c] + phase[c]).sin();
        }
        out
    }

    pub fn hess(&self, q: &Pt) -> Mat {
        let MorseFn::CosineWells { amp, k, phase } = &self.func;
        let mut out = Mat::zeros();
        for c in 0..self.dim {
            let w = TAU * k[c];
            out[(c, c)] = w * w * amp[c] * (w * q[c] + phase[c]).cos();
        }
        out
    }

    /// Upper bound of `|df|` over the torus.
    pub fn df_max(&self) -> f64 {
        let MorseFn::CosineWells { amp, k, .. } = &self.func;
        (0..self.dim).map(|c| (TAU * k[c] * amp[c]).powi(2)).sum::<f64>().sqrt()
    }

    /// Covariant Hessian `∇df_{ij} = ∂ᵢ∂ⱼf − Γᵏᵢⱼ ∂ₖf`.
    pub fn covariant_hess(&self, gam: &Christoffel, q: &Pt) -> Mat {
        let mut h = self.hess(q);
        let df = self.df(q);
        for i in 0..self.dim {
            for j in 0..self.dim {
                for k in 0..self.dim {
                    h[(i, j)] -= gam[k][i][j] * df[k];
                }
            }
        }
        h
    }
}
