use super::{min_eigenvalue, GeometryError, Mat, Pt};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use std::f64::consts::PI;

/// A periodic metric known through samples on an `n^d` grid, evaluated with
/// its derivatives as a trigonometric interpolant.
#[derive(Clone, Debug)]
pub struct SpectralMetric {
    dim: usize,
    n: usize,
    /// Non-negligible Fourier modes `(k1, k2, ĝ₀₀, ĝ₀₁, ĝ₁₁)`, Nyquist dropped.
    modes: Vec<(i64, i64, [Complex64; 3])>,
}

fn wavenumber(m: usize, n: usize) -> i64 {
    if m < n / 2 {
        m as i64
    } else if m == n / 2 && n % 2 == 0 {
        0
    } else {
        m as i64 - n as i64
    }
}

impl SpectralMetric {
    pub fn sample<F>(dim: usize, n: usize, g: F) -> Result<Self, GeometryError>
    where
        F: Fn(&Pt) -> Mat,
    {
        if n < 4 {
            return Err(GeometryError::Parameter(format!("spectral grid too small: {n}")));
        }
        let n2 = if dim == 2 { n } else { 1 };
        let mut data: [Vec<Complex64>; 3] = std::array::from_fn(|_| vec![Complex64::new(0.0, 0.0); n * n2]);
        for a in 0..n {
            for b in 0..n2 {
                let q = Pt::new(a as f64 / n as f64, b as f64 / n as f64);
                let mut m = g(&q);
                if dim == 1 {
                    m[(0, 1)] = 0.0;
                    m[(1, 0)] = 0.0;
                    m[(1, 1)] = 1.0;
                }
                let min_eig = min_eigenvalue(&m);
                if !(min_eig > 0.0) {
                    return Err(GeometryError::DegenerateMetric { q0: q[0], q1: q[1], min_eig });
                }
                let idx = a * n2 + b;
                data[0][idx] = Complex64::new(m[(0, 0)], 0.0);
                data[1][idx] = Complex64::new(0.5 * (m[(0, 1)] + m[(1, 0)]), 0.0);
                data[2][idx] = Complex64::new(m[(1, 1)], 0.0);
            }
        }
        let mut planner = FftPlanner::<f64>::new();
        let fft = planner.plan_fft_forward(n);
        let scale = 1.0 / (n * n2) as f64;
        for comp in data.iter_mut() {
            // along the second axis (rows are contiguous)
            if dim == 2 {
                for row in comp.chunks_mut(n2) {
                    fft.process(row);
                }
            }
            // along the first axis
            let mut col = vec![Complex64::new(0.0, 0.0); n];
            for b in 0..n2 {
                for a in 0..n {
                    col[a] = comp[a * n2 + b];
                }
                fft.process(&mut col);
                for a in 0..n {
                    comp[a * n2 + b] = col[a] * scale;
                }
            }
        }
        let biggest = data.iter().flatten().map(|c| c.norm()).fold(0.0, f64::max);
        let mut modes = Vec::new();
        for a in 0..n {
            if n % 2 == 0 && a == n / 2 {
                continue;
            }
            for b in 0..n2 {
                if dim == 2 && n % 2 == 0 && b == n / 2 {
                    continue;
                }
                let idx = a * n2 + b;
                let c = [data[0][idx], data[1][idx], data[2][idx]];
                if c.iter().any(|z| z.norm() > 1e-15 * biggest) {
                    let k2 = if dim == 2 { wavenumber(b, n) } else { 0 };
                    modes.push((wavenumber(a, n), k2, c));
                }
            }
        }
        Ok(SpectralMetric { dim, n, modes })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Value (`deriv = None`) or the mixed partial over the listed axes.
    pub fn eval(&self, q: &Pt, deriv: Option<&[usize]>) -> Mat {
        let axes = deriv.unwrap_or(&[]);
        let mut vals = [0.0; 3];
        for &(k1, k2, c) in &self.modes {
            let th = 2.0 * PI * (k1 as f64 * q[0] + k2 as f64 * q[1]);
            let mut z = Complex64::new(th.cos(), th.sin());
            for &ax in axes {
                let k = if ax == 0 { k1 } else { k2 };
                z *= Complex64::new(0.0, 2.0 * PI * k as f64);
            }
            for (v, ck) in vals.iter_mut().zip(c) {
                *v += (ck * z).re;
            }
        }
        if self.dim == 1 {
            let pad = if axes.is_empty() { 1.0 } else { 0.0 };
            return Mat::new(vals[0], 0.0, 0.0, pad);
        }
        Mat::new(vals[0], vals[1], vals[1], vals[2])
    }
}

#[cfg(test)]
mod tests {
    use super::super::MetricChart;
    use super::*;

    #[test]
    fn spectral_matches_analytic_conformal() {
        let analytic = MetricChart::conformal_1d(0.2).unwrap();
        let a2 = analytic.clone();
        let spec = MetricChart::spectral(1, move |q| a2.g(q)).unwrap();
        for &x in &[0.05, 0.37, 0.9] {
            let q = Pt::new(x, 0.0);
            assert!((spec.g(&q) - analytic.g(&q)).abs().max() < 1e-12);
            assert!((spec.dg(&q)[0] - analytic.dg(&q)[0]).abs().max() < 1e-10);
            assert!((spec.d2g(&q)[0][0] - analytic.d2g(&q)[0][0]).abs().max() < 1e-8);
        }
    }

    #[test]
    fn spectral_matches_analytic_diag_2d() {
        let analytic = MetricChart::diag_perturbed_2d(0.1).unwrap();
        let a2 = analytic.clone();
        let spec = MetricChart::spectral_with(2, 16, move |q| a2.g(q)).unwrap();
        let q = Pt::new(0.23, 0.71);
        for m in 0..2 {
            assert!((spec.dg(&q)[m] - analytic.dg(&q)[m]).abs().max() < 1e-12);
        }
    }
}
