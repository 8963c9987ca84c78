//! Banded solvers shared by splines and Crank–Nicolson.

use std::ops::{Add, Div, Mul, Sub};

pub trait Scalar:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self>
{
}
impl<T> Scalar for T where
    T: Copy + Add<Output = T> + Sub<Output = T> + Mul<Output = T> + Div<Output = T>
{
}

/// Thomas algorithm for `lower[i]·x[i-1] + diag[i]·x[i] + upper[i]·x[i+1] = rhs[i]`.
///
/// `lower[0]` and `upper[n-1]` are ignored. No pivoting: callers pass
/// diagonally dominant systems.
pub fn solve_tridiagonal<T: Scalar>(lower: &[T], diag: &[T], upper: &[T], rhs: &[T]) -> Vec<T> {
    let n = diag.len();
    let mut c = Vec::with_capacity(n);
    let mut d = Vec::with_capacity(n);
    c.push(upper[0] / diag[0]);
    d.push(rhs[0] / diag[0]);
    for i in 1..n {
        let m = diag[i] - lower[i] * c[i - 1];
        c.push(upper[i] / m);
        d.push((rhs[i] - lower[i] * d[i - 1]) / m);
    }
    let mut x = d;
    for i in (0..n - 1).rev() {
        x[i] = x[i] - c[i] * x[i + 1];
    }
    x
}

/// Constant-coefficient cyclic tridiagonal solve via Sherman–Morrison.
pub fn solve_cyclic_constant(sub: f64, diag: f64, sup: f64, rhs: &[f64]) -> Vec<f64> {
    let n = rhs.len();
    let gamma = -diag;
    let mut d = vec![diag; n];
    d[0] = diag - gamma;
    d[n - 1] = diag - sup * sub / gamma;
    let lower = vec![sub; n];
    let upper = vec![sup; n];
    let x = solve_tridiagonal(&lower, &d, &upper, rhs);
    let mut u = vec![0.0; n];
    u[0] = gamma;
    // corners: row n-1 couples to x[0] through `sup`, row 0 to x[n-1] through `sub`
    u[n - 1] = sup;
    let z = solve_tridiagonal(&lower, &d, &upper, &u);
    let fact = (x[0] + sub * x[n - 1] / gamma) / (1.0 + z[0] + sub * z[n - 1] / gamma);
    x.iter().zip(&z).map(|(xi, zi)| xi - fact * zi).collect()
}
