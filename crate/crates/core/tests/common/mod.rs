//! Independent oracles shared by integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use std::f64::consts::PI;

/// Adaptive Simpson on `[a, b]`.
pub fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// Iterated adaptive Simpson over a rectangle.
pub fn simpson2<F: Fn(f64, f64) -> f64>(f: &F, (ax, bx): (f64, f64), (ay, by): (f64, f64), tol: f64) -> f64 {
    let inner = |x: f64| simpson(&|y| f(x, y), ay, by, tol * 1e-2);
    simpson(&inner, ax, bx, tol)
}

pub fn normal_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    (-(x - mean).powi(2) / (2.0 * sd * sd)).exp() / (sd * (2.0 * PI).sqrt())
}

/// `E[exp(-(X - c)^2 / (2 s^2))]` for `X ~ N(m, v)`.
pub fn gauss_mean(c: f64, width: f64, m: f64, v: f64) -> f64 {
    let w2 = width * width;
    (w2 / (w2 + v)).sqrt() * (-(m - c).powi(2) / (2.0 * (w2 + v))).exp()
}

/// Mean vector and covariance of `psi(X)` for a 1-d Gaussian basis and
/// `X ~ N(m, v)`, from closed-form Gaussian integrals.
pub fn psi_moments(centers: &[f64], width: f64, m: f64, v: f64) -> (DVector<f64>, DMatrix<f64>) {
    let b = centers.len();
    let mean = DVector::from_iterator(b, centers.iter().map(|&c| gauss_mean(c, width, m, v)));
    let w2 = width * width;
    let mut cov = DMatrix::zeros(b, b);
    for i in 0..b {
        for j in 0..b {
            let (ci, cj) = (centers[i], centers[j]);
            // product of two kernels is a kernel of width s/sqrt(2) at the midpoint
            let pre = (-(ci - cj).powi(2) / (4.0 * w2)).exp();
            let second = pre * gauss_mean(0.5 * (ci + cj), width / 2f64.sqrt(), m, v);
            cov[(i, j)] = second - mean[i] * mean[j];
        }
    }
    (mean, cov)
}

/// `int psi_i psi_j dx` by quadrature, 1-d.
pub fn gram_by_quadrature(centers: &[f64], width: f64) -> DMatrix<f64> {
    let b = centers.len();
    let k = |x: f64, c: f64| (-(x - c).powi(2) / (2.0 * width * width)).exp();
    DMatrix::from_fn(b, b, |i, j| {
        let (ci, cj) = (centers[i], centers[j]);
        let lo = ci.min(cj) - 12.0 * width;
        let hi = ci.max(cj) + 12.0 * width;
        simpson(&|x| k(x, ci) * k(x, cj), lo, hi, 1e-12)
    })
}

/// Least-squares slope of `y` on `x`.
pub fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}
