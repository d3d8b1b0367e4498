#![allow(dead_code)]

use std::f64::consts::PI;

use tricomi_core::Complex64;

/// Fixed Talbot inversion of a Laplace transform `fs` at `t > 0`.
pub fn talbot<F: Fn(Complex64) -> Complex64>(fs: F, t: f64, m: usize) -> f64 {
    let r = 2.0 * m as f64 / (5.0 * t);
    let mut acc = 0.5 * (fs(Complex64::new(r, 0.0)) * (r * t).exp()).re;
    for k in 1..m {
        let th = k as f64 * PI / m as f64;
        let cot = th.cos() / th.sin();
        let s = Complex64::new(r * th * cot, r * th);
        let sigma = th + (th * cot - 1.0) * cot;
        acc += ((s * t).exp() * fs(s) * Complex64::new(1.0, sigma)).re;
    }
    r / m as f64 * acc
}

/// Cole–Cole `1/(1 + s^a)`.
pub fn cole_cole(a: f64) -> impl Fn(Complex64) -> Complex64 {
    move |s: Complex64| ((s.ln() * a).exp() + 1.0).inv()
}

/// Trapezoid on `v = ln t` of `int_{t0}^{t1} e^{-s t} h(t) dt`.
pub fn laplace_log<H: Fn(f64) -> f64>(h: H, s: f64, t0: f64, t1: f64, n: usize) -> f64 {
    let (v0, v1) = (t0.ln(), t1.ln());
    let dv = (v1 - v0) / n as f64;
    let mut acc = 0.0;
    for i in 0..=n {
        let t = (v0 + dv * i as f64).exp();
        let w = if i == 0 || i == n { 0.5 } else { 1.0 };
        acc += w * t * (-s * t).exp() * h(t);
    }
    acc * dv
}
