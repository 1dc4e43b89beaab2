//! Small dense/banded kernels used by the solvers.
//!
//! Everything here works on plain slices. The periodic FFT helper wraps
//! `rustfft` for the torus preconditioner.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Solves a tridiagonal system with partial pivoting.
///
/// `lower[i]` couples row `i+1` to column `i`, `upper[i]` couples row `i` to
/// column `i+1`. Works for indefinite systems as long as they are nonsingular.
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    assert_eq!(rhs.len(), n);
    assert!(n >= 1 && lower.len() + 1 == n && upper.len() + 1 == n);
    // LU with row interchanges; fill-in lives in `up2`.
    let mut d = diag.to_vec();
    let mut du = upper.to_vec();
    du.push(0.0);
    let mut dl = lower.to_vec();
    let mut up2 = vec![0.0; n];
    let mut b = rhs.to_vec();
    for i in 0..n - 1 {
        if dl[i].abs() > d[i].abs() {
            // swap rows i and i+1
            let fact = d[i] / dl[i];
            d[i] = dl[i];
            let tmp = d[i + 1];
            d[i + 1] = du[i] - fact * tmp;
            dl[i] = fact;
            up2[i] = du[i + 1];
            du[i + 1] = -fact * du[i + 1];
            du[i] = tmp;
            b.swap(i, i + 1);
            b[i + 1] -= fact * b[i];
        } else {
            if d[i] == 0.0 {
                return Err(Error::SingularSystem);
            }
            let fact = dl[i] / d[i];
            dl[i] = fact;
            d[i + 1] -= fact * du[i];
            up2[i] = 0.0;
            b[i + 1] -= fact * b[i];
        }
    }
    if d[n - 1] == 0.0 {
        return Err(Error::SingularSystem);
    }
    let mut x = vec![0.0; n];
    x[n - 1] = b[n - 1] / d[n - 1];
    if n >= 2 {
        x[n - 2] = (b[n - 2] - du[n - 2] * x[n - 1]) / d[n - 2];
    }
    for i in (0..n.saturating_sub(2)).rev() {
        x[i] = (b[i] - du[i] * x[i + 1] - up2[i] * x[i + 2]) / d[i];
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem);
    }
    Ok(x)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Preconditioned conjugate gradients for a symmetric positive (semi)definite
/// operator. For singular operators the caller must supply a consistent
/// right-hand side and a preconditioner that annihilates the null space.
pub fn pcg<A, P>(apply: A, precond: P, b: &[f64], x0: Option<&[f64]>, rtol: f64, max_iter: usize) -> Result<Vec<f64>>
where
    A: Fn(&[f64], &mut [f64]),
    P: Fn(&[f64], &mut [f64]),
{
    let n = b.len();
    let mut x = x0.map(|v| v.to_vec()).unwrap_or_else(|| vec![0.0; n]);
    let mut r = vec![0.0; n];
    apply(&x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let bnorm = dot(b, b).sqrt().max(1e-300);
    if dot(&r, &r).sqrt() <= rtol * bnorm {
        return Ok(x);
    }
    let mut z = vec![0.0; n];
    precond(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for _ in 0..max_iter {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            return Err(Error::NonConvergence { what: "pcg (operator not positive)", iterations: 0 });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if dot(&r, &r).sqrt() <= rtol * bnorm {
            return Ok(x);
        }
        precond(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::NonConvergence { what: "pcg", iterations: max_iter })
}

/// 2D periodic FFT on an `n × n` row-major grid.
pub struct PeriodicFft {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl PeriodicFft {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        PeriodicFft { n, fwd: planner.plan_fft_forward(n), inv: planner.plan_fft_inverse(n) }
    }

    fn transform(&self, data: &mut [Complex64], inverse: bool) {
        let n = self.n;
        let plan = if inverse { &self.inv } else { &self.fwd };
        for row in data.chunks_mut(n) {
            plan.process(row);
        }
        let mut col = vec![Complex64::new(0.0, 0.0); n];
        for i in 0..n {
            for j in 0..n {
                col[j] = data[j * n + i];
            }
            plan.process(&mut col);
            for j in 0..n {
                data[j * n + i] = col[j];
            }
        }
    }

    /// Applies the Fourier multiplier `symbol(kx, ky)` to a real field.
    pub fn apply_symbol<F: Fn(usize, usize) -> f64>(&self, input: &[f64], out: &mut [f64], symbol: F) {
        let n = self.n;
        let mut buf: Vec<Complex64> = input.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut buf, false);
        for j in 0..n {
            for i in 0..n {
                buf[j * n + i] *= symbol(i, j);
            }
        }
        self.transform(&mut buf, true);
        let scale = 1.0 / (n * n) as f64;
        for (o, c) in out.iter_mut().zip(&buf) {
            *o = c.re * scale;
        }
    }
}

/// Eigenvalue of the periodic 5-point operator `-(Σ_nb v - 4 v)` on mode `(kx, ky)`.
pub fn five_point_symbol(n: usize, kx: usize, ky: usize) -> f64 {
    let sx = (std::f64::consts::PI * kx as f64 / n as f64).sin();
    let sy = (std::f64::consts::PI * ky as f64 / n as f64).sin();
    4.0 * (sx * sx + sy * sy)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tridiagonal_matches_dense_on_indefinite_system() {
        let lower = [1.0, -2.0, 0.5, 3.0];
        let diag = [0.1, 1.0, -4.0, 0.0, 2.0];
        let upper = [2.0, 1.0, 1.5, -1.0];
        let x_true = [1.0, -2.0, 0.5, 3.0, -1.0];
        let mut rhs = [0.0; 5];
        for i in 0..5 {
            rhs[i] = diag[i] * x_true[i];
            if i > 0 {
                rhs[i] += lower[i - 1] * x_true[i - 1];
            }
            if i < 4 {
                rhs[i] += upper[i] * x_true[i + 1];
            }
        }
        let x = solve_tridiagonal(&lower, &diag, &upper, &rhs).unwrap();
        for i in 0..5 {
            assert!((x[i] - x_true[i]).abs() < 1e-12, "{:?}", x);
        }
    }

    #[test]
    fn fft_symbol_inverts_five_point() {
        let n = 16;
        let fft = PeriodicFft::new(n);
        let mut v: Vec<f64> = (0..n * n).map(|k| ((k * 7919) % 101) as f64 / 101.0).collect();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        v.iter_mut().for_each(|x| *x -= mean);
        let mut lv = vec![0.0; n * n];
        for j in 0..n {
            for i in 0..n {
                let c = v[j * n + i];
                let nb = v[j * n + (i + 1) % n] + v[j * n + (i + n - 1) % n] + v[((j + 1) % n) * n + i] + v[((j + n - 1) % n) * n + i];
                lv[j * n + i] = 4.0 * c - nb;
            }
        }
        let mut back = vec![0.0; n * n];
        fft.apply_symbol(&lv, &mut back, |i, j| {
            let s = five_point_symbol(n, i, j);
            if s == 0.0 { 0.0 } else { 1.0 / s }
        });
        for k in 0..n * n {
            assert!((back[k] - v[k]).abs() < 1e-12);
        }
    }
}
