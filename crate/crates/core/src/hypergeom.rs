//! Kummer `M(a, b, z)` and Tricomi `U(a, b, z)` on the principal branch.
//!
//! `U` is evaluated by region:
//!
//! * terminating parameters (`a - b + 1` a non-positive integer): the
//!   large-argument series is a finite sum and is exact everywhere;
//! * `|z| >= 50`: large-argument asymptotic series, truncated at its
//!   smallest term;
//! * `|z| <= 2`: connection formula built from two `M` series;
//! * in between: Taylor-series continuation of Kummer's equation along the
//!   ray through `z`, started from whichever end is stable for that half
//!   plane.
//!
//! The branch cut is `(-inf, 0]`. Points on the cut are rejected by
//! [`tricomi_u`]; limits from above the cut are provided by [`cut_boundary`].

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{integrate_breaks, QuadOptions};
use crate::special::{gamma, rgamma};

const SERIES_REL_TOL: f64 = 1e-16;
const SERIES_BUDGET: usize = 10_000;
const SERIES_STALL: usize = 3;

/// Radius at and above which the asymptotic series is used.
pub const ASYMPTOTIC_RADIUS: f64 = 50.0;
/// Radius at and below which the connection formula is used.
pub const CONNECTION_RADIUS: f64 = 2.0;
/// Minimum distance of `b` from an integer for the connection formula.
pub const INTEGER_B_GUARD: f64 = 1e-6;

/// The `(a, b, tau)` triple of one Tricomi block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeParams {
    pub a: f64,
    pub b: f64,
    /// Characteristic time in seconds.
    #[serde(default = "one")]
    pub tau: f64,
}

fn one() -> f64 {
    1.0
}

impl ShapeParams {
    /// Kernel-level parameters: `a > 0`, `b > 1`, `tau > 0`.
    pub fn new(a: f64, b: f64, tau: f64) -> Result<Self> {
        let p = Self { a, b, tau };
        p.validate()?;
        Ok(p)
    }

    /// Parameters with `tau = 1`, for work in the dimensionless argument.
    pub fn unit(a: f64, b: f64) -> Result<Self> {
        Self::new(a, b, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a.is_finite() && self.a > 0.0) {
            return Err(Error::domain(format!("a must be positive, got {}", self.a)));
        }
        if !(self.b.is_finite() && self.b > 1.0) {
            return Err(Error::domain(format!("b must exceed 1, got {}", self.b)));
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::domain(format!(
                "tau must be positive, got {}",
                self.tau
            )));
        }
        Ok(())
    }

    pub fn is_passive(&self) -> bool {
        self.a > 0.0 && self.a < 1.0 && self.b > 1.0 && self.b < 2.0
    }

    /// Passive regime: `a` in (0, 1), `b` in (1, 2).
    pub fn check_passive(&self) -> Result<()> {
        self.validate()?;
        if !self.is_passive() {
            return Err(Error::domain(format!(
                "passive regime requires a in (0,1) and b in (1,2), got a = {}, b = {}",
                self.a, self.b
            )));
        }
        Ok(())
    }

    /// True when `U` reduces to a finite sum (`a - b + 1` a non-positive integer).
    pub fn is_terminating(&self) -> bool {
        terminating_order(self.a, self.b).is_some()
    }
}

/// Branch-cut boundary values `U(a, b, -x + j0+) = A + jB`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutBoundary {
    pub x: f64,
    #[serde(rename = "A")]
    pub re: f64,
    #[serde(rename = "B")]
    pub im: f64,
    /// Branch phase `pi (1 - b)`.
    pub theta: f64,
    /// `Gamma(1-b) / Gamma(a-b+1)`
    pub c1: f64,
    /// `Gamma(b-1) / Gamma(a)`
    pub c2: f64,
}

impl CutBoundary {
    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }
}

fn principal_pow(z: Complex64, p: f64) -> Complex64 {
    (z.ln() * p).exp()
}

fn near_integer(x: f64, tol: f64) -> bool {
    (x - x.round()).abs() < tol
}

fn terminating_order(a: f64, b: f64) -> Option<u32> {
    let c = a - b + 1.0;
    let scale = 1.0 + a.abs() + b.abs();
    if c <= 1e-13 * scale && near_integer(c, 1e-13 * scale) {
        Some((-c.round()) as u32)
    } else {
        None
    }
}

/// Power series of `M(a, b, z)` without any transformation.
fn kummer_series(a: f64, b: f64, z: Complex64) -> Result<Complex64> {
    let mut sum = Complex64::new(1.0, 0.0);
    let mut term = Complex64::new(1.0, 0.0);
    let mut small = 0;
    for k in 0..SERIES_BUDGET {
        let kf = k as f64;
        term *= z * ((a + kf) / ((b + kf) * (kf + 1.0)));
        sum += term;
        if term.norm() <= SERIES_REL_TOL * sum.norm() {
            small += 1;
            if small >= SERIES_STALL {
                return Ok(sum);
            }
        } else {
            small = 0;
        }
    }
    Err(Error::numerical(
        "kummer_m",
        format!(
            "series did not converge in {SERIES_BUDGET} terms (a = {a}, b = {b}, z = {z}); partial sum {sum}, last term {:e}",
            term.norm()
        ),
    ))
}

/// Kummer's function `M(a, b, z)`.
///
/// For `Re z < 0` the series of `e^z M(b - a, b, -z)` is summed instead,
/// which avoids cancellation in the alternating series.
pub fn kummer_m(a: f64, b: f64, z: Complex64) -> Result<Complex64> {
    if !(a.is_finite() && b.is_finite() && z.re.is_finite() && z.im.is_finite()) {
        return Err(Error::domain("kummer_m: non-finite argument"));
    }
    if b <= 0.0 && b == b.floor() {
        return Err(Error::domain(format!(
            "kummer_m: b = {b} is zero or a negative integer"
        )));
    }
    if z.re < 0.0 {
        Ok(z.exp() * kummer_series(b - a, b, -z)?)
    } else {
        kummer_series(a, b, z)
    }
}

/// Sum of the large-argument series `sum_k (a)_k (c)_k / k! (-1/z)^k` with
/// `c = a - b + 1`, stopped at the smallest term. Returns the sum and the
/// magnitude of the first omitted term. A non-positive integer `c` gives
/// a finite sum, which is summed in full.
fn asymptotic_sum(a: f64, c: f64, z: Complex64) -> (Complex64, f64) {
    let finite = c <= 0.0 && c == c.round();
    let w = -z.inv();
    let mut sum = Complex64::new(1.0, 0.0);
    let mut term = Complex64::new(1.0, 0.0);
    let mut last = 1.0;
    for k in 0..SERIES_BUDGET {
        let kf = k as f64;
        let next = term * w * ((a + kf) * (c + kf) / (kf + 1.0));
        let mag = next.norm();
        if mag == 0.0 {
            return (sum, 0.0);
        }
        if mag > last && !finite {
            // divergence sets in
            return (sum, mag);
        }
        sum += next;
        term = next;
        last = mag;
        if mag <= SERIES_REL_TOL * sum.norm() && !finite {
            return (sum, mag);
        }
    }
    (sum, last)
}

fn u_asymptotic_series(a: f64, b: f64, z: Complex64) -> Result<Complex64> {
    let c = match terminating_order(a, b) {
        Some(n) => -(n as f64),
        None => a - b + 1.0,
    };
    let (sum, err) = asymptotic_sum(a, c, z);
    if err > 1e-13 * sum.norm() {
        return Err(Error::numerical(
            "tricomi_u",
            format!(
                "asymptotic series too coarse at |z| = {} (smallest term {err:e})",
                z.norm()
            ),
        ));
    }
    Ok(principal_pow(z, -a) * sum)
}

fn check_integer_b(b: f64) -> Result<()> {
    if near_integer(b, INTEGER_B_GUARD) {
        return Err(Error::Conditioning(format!(
            "b = {b} is within {INTEGER_B_GUARD:e} of an integer; the connection formula is singular"
        )));
    }
    Ok(())
}

fn u_connection(a: f64, b: f64, z: Complex64) -> Result<Complex64> {
    check_integer_b(b)?;
    let c1 = gamma(1.0 - b) * rgamma(a - b + 1.0);
    let c2 = gamma(b - 1.0) * rgamma(a);
    let mut u = principal_pow(z, 1.0 - b) * kummer_m(a - b + 1.0, 2.0 - b, z)? * c2;
    if c1 != 0.0 {
        u += kummer_m(a, b, z)? * c1;
    }
    Ok(u)
}

/// One Taylor step of Kummer's equation `z w'' + (b - z) w' - a w = 0` from
/// `z0` by `h`, with `|h|` below the distance to the singular point 0.
fn taylor_step(
    a: f64,
    b: f64,
    z0: Complex64,
    w: Complex64,
    dw: Complex64,
    h: Complex64,
) -> Result<(Complex64, Complex64)> {
    // d_n = c_n h^n
    let mut d0 = w;
    let mut d1 = dw * h;
    let mut val = d0 + d1;
    let mut der = d1;
    let h2 = h * h;
    for n in 0..400 {
        let nf = n as f64;
        let d2 = (d0 * h2 * (nf + a) - d1 * h * ((nf + 1.0) * (nf + b) - (nf + 1.0) * z0))
            / (z0 * ((nf + 1.0) * (nf + 2.0)));
        val += d2;
        der += d2 * (nf + 2.0);
        if n >= 2 && d2.norm() + d1.norm() <= 1e-17 * val.norm() {
            return Ok((val, der / h));
        }
        d0 = d1;
        d1 = d2;
    }
    Err(Error::numerical(
        "tricomi_u",
        "ODE Taylor series did not converge",
    ))
}

/// Continue `(U, U')` from `from` to `to` along the straight segment between
/// them, which must not pass through the origin.
fn continue_along(
    a: f64,
    b: f64,
    from: Complex64,
    mut w: Complex64,
    mut dw: Complex64,
    to: Complex64,
) -> Result<Complex64> {
    let mut z = from;
    for _ in 0..10_000 {
        let rem = to - z;
        let dist = rem.norm();
        if dist == 0.0 {
            return Ok(w);
        }
        let hmax = 0.4 * z.norm();
        let h = if dist <= hmax {
            rem
        } else {
            rem * (hmax / dist)
        };
        let (w1, dw1) = taylor_step(a, b, z, w, dw, h)?;
        w = w1;
        dw = dw1;
        z = if dist <= hmax { to } else { z + h };
    }
    Err(Error::numerical(
        "tricomi_u",
        "ODE continuation step budget exhausted",
    ))
}

fn tricomi_raw(a: f64, b: f64, z: Complex64) -> Result<Complex64> {
    if terminating_order(a, b).is_some() {
        return u_asymptotic_series(a, b, z);
    }
    let r = z.norm();
    if r >= ASYMPTOTIC_RADIUS {
        return u_asymptotic_series(a, b, z);
    }
    let int_b = near_integer(b, INTEGER_B_GUARD);
    if r <= CONNECTION_RADIUS && !int_b {
        return u_connection(a, b, z);
    }
    if z.re >= 0.0 {
        // inward from the asymptotic circle: the recessive M-type solution
        // decays along this path
        let start = z * (ASYMPTOTIC_RADIUS / r);
        let w = u_asymptotic_series(a, b, start)?;
        let dw = -u_asymptotic_series(a + 1.0, b + 1.0, start)? * a;
        continue_along(a, b, start, w, dw, z)
    } else {
        check_integer_b(b)?;
        let start = z * (CONNECTION_RADIUS / r);
        let w = u_connection(a, b, start)?;
        let dw = -u_connection(a + 1.0, b + 1.0, start)? * a;
        continue_along(a, b, start, w, dw, z)
    }
}

fn check_off_cut(z: Complex64) -> Result<()> {
    if !(z.re.is_finite() && z.im.is_finite()) {
        return Err(Error::domain("non-finite argument"));
    }
    if z.im == 0.0 && z.re <= 0.0 {
        return Err(Error::domain(format!(
            "z = {z} lies on the branch cut (-inf, 0]; use cut_boundary for limits from above"
        )));
    }
    Ok(())
}

/// Tricomi's function `U(a, b, z)` for `z` off the cut `(-inf, 0]`.
pub fn tricomi_u(params: &ShapeParams, z: Complex64) -> Result<Complex64> {
    params.validate()?;
    check_off_cut(z)?;
    tricomi_raw(params.a, params.b, z)
}

/// Derivative `dU/dz = -a U(a+1, b+1, z)`.
pub fn tricomi_u_prime(params: &ShapeParams, z: Complex64) -> Result<Complex64> {
    params.validate()?;
    check_off_cut(z)?;
    Ok(-tricomi_raw(params.a + 1.0, params.b + 1.0, z)? * params.a)
}

/// `U(a, b, z)` for real `z > 0` by adaptive quadrature of
/// `(1/Gamma(a)) int_0^inf e^{-zt} t^{a-1} (1+t)^{b-a-1} dt`.
///
/// The `t^{a-1}` singularity on `[0, 1]` is removed with `t = v^{1/a}`; the
/// tail on `[1, inf)` is integrated in `y = ln t`. This path shares no code
/// with [`tricomi_u`] beyond the gamma function.
pub fn tricomi_u_integral(params: &ShapeParams, z: f64) -> Result<f64> {
    params.validate()?;
    if !(z.is_finite() && z > 0.0) {
        return Err(Error::domain(format!(
            "tricomi_u_integral needs z > 0, got {z}"
        )));
    }
    let (a, b) = (params.a, params.b);
    let e = b - a - 1.0;
    let opts = QuadOptions {
        abs_tol: 0.0,
        rel_tol: 1e-14,
        max_intervals: 4000,
    };

    let head = |v: f64| {
        let t = v.powf(1.0 / a);
        (-z * t).exp() * (1.0 + t).powf(e)
    };
    let mut breaks = vec![0.0];
    for s in [0.01, 0.1, 1.0, 10.0] {
        let v = (s / z).powf(a);
        if v < 1.0 && v > *breaks.last().unwrap() {
            breaks.push(v);
        }
    }
    breaks.push(1.0);
    let head_val = integrate_breaks(head, &breaks, opts)?.value / a;

    let t_max = (60.0 + 5.0 * (1.0 + 1.0 / z).ln()) / z;
    let tail_val = if t_max > 1.0 {
        let tail = |y: f64| {
            let t = y.exp();
            (-z * t + a * y).exp() * (1.0 + t).powf(e)
        };
        let y_max = t_max.ln();
        let mut br = vec![0.0];
        let y_knee = (1.0 / z).ln();
        if y_knee > 0.0 && y_knee < y_max {
            br.push(y_knee);
        }
        br.push(y_max);
        integrate_breaks(tail, &br, opts)?.value
    } else {
        0.0
    };
    Ok((head_val + tail_val) * rgamma(a))
}

/// Leading small-argument behaviour `Gamma(b-1)/Gamma(a) z^{1-b}`.
pub fn u_asymptotic_small(params: &ShapeParams, z: Complex64) -> Complex64 {
    principal_pow(z, 1.0 - params.b) * (gamma(params.b - 1.0) * rgamma(params.a))
}

/// Leading large-argument behaviour `z^{-a}`.
pub fn u_asymptotic_large(params: &ShapeParams, z: Complex64) -> Complex64 {
    principal_pow(z, -params.a)
}

/// Boundary value of `U(a, b, -x + j0+)` for `x > 0` in the passive regime.
pub fn cut_boundary(params: &ShapeParams, x: f64) -> Result<CutBoundary> {
    params.check_passive()?;
    if !(x.is_finite() && x > 0.0) {
        return Err(Error::domain(format!(
            "cut abscissa must be positive, got {x}"
        )));
    }
    let (a, b) = (params.a, params.b);
    let theta = PI * (1.0 - b);
    let c1 = gamma(1.0 - b) * rgamma(a - b + 1.0);
    let c2 = gamma(b - 1.0) * rgamma(a);
    let (re, im) = if x < ASYMPTOTIC_RADIUS {
        check_integer_b(b)?;
        let neg = Complex64::new(-x, 0.0);
        // both evaluated through the Kummer transformation inside kummer_m
        let m1 = if c1 != 0.0 {
            kummer_m(a, b, neg)?.re
        } else {
            0.0
        };
        let m2 = kummer_m(a - b + 1.0, 2.0 - b, neg)?.re;
        let p = x.powf(1.0 - b) * c2 * m2;
        (c1 * m1 + p * theta.cos(), p * theta.sin())
    } else {
        // z = x e^{j pi}: -1/z = 1/x, z^{-a} = x^{-a} e^{-j pi a}
        let c = match terminating_order(a, b) {
            Some(n) => -(n as f64),
            None => a - b + 1.0,
        };
        let (sum, _) = asymptotic_sum(a, c, Complex64::new(-x, 0.0));
        let s = x.powf(-a) * sum.re;
        (s * (PI * a).cos(), -s * (PI * a).sin())
    };
    Ok(CutBoundary {
        x,
        re,
        im,
        theta,
        c1,
        c2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn rel(a: Complex64, b: Complex64) -> f64 {
        (a - b).norm() / b.norm()
    }

    #[test]
    fn kummer_at_origin_and_exponential() {
        assert_eq!(kummer_m(0.3, 1.5, c(0.0, 0.0)).unwrap(), c(1.0, 0.0));
        let v = kummer_m(1.0, 1.0, c(2.0, 0.0)).unwrap();
        assert!((v.re - 2f64.exp()).abs() < 1e-14 * 2f64.exp());
        let v = kummer_m(1.0, 1.0, c(-20.0, 0.0)).unwrap();
        assert!((v.re / (-20f64).exp() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn kummer_rejects_bad_b() {
        assert!(matches!(
            kummer_m(0.5, -2.0, c(1.0, 0.0)),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            kummer_m(0.5, 0.0, c(1.0, 0.0)),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn closed_forms() {
        let p = ShapeParams::unit(1.0, 2.0).unwrap();
        let z = c(0.5, 0.5);
        assert!(rel(tricomi_u(&p, z).unwrap(), c(1.0, -1.0)) < 1e-14);
        let p = ShapeParams::unit(0.5, 1.5).unwrap();
        assert!((tricomi_u(&p, c(4.0, 0.0)).unwrap().re - 0.5).abs() < 1e-15);
    }

    #[test]
    fn cut_is_rejected() {
        let p = ShapeParams::unit(0.4, 1.3).unwrap();
        assert!(matches!(tricomi_u(&p, c(-1.0, 0.0)), Err(Error::Domain(_))));
        assert!(matches!(tricomi_u(&p, c(0.0, 0.0)), Err(Error::Domain(_))));
    }

    #[test]
    fn integer_b_needs_connection_only_on_left() {
        let p = ShapeParams::unit(0.3, 1.0 + 1e-8).unwrap();
        // right half plane: fine through the ODE route
        assert!(tricomi_u(&p, c(0.7, 0.2)).is_ok());
        // left half plane below the asymptotic radius: rejected
        assert!(matches!(
            tricomi_u(&p, c(-0.7, 0.2)),
            Err(Error::Conditioning(_))
        ));
        // asymptotic region: fine
        assert!(tricomi_u(&p, c(-70.0, 1.0)).is_ok());
    }

    #[test]
    fn connection_matches_ode_route_at_switchover() {
        for &(a, b) in &[(0.3, 1.4), (0.8, 1.9), (0.55, 1.12)] {
            for &phi in &[0.0, 0.7, 1.5, -1.2] {
                let z = Complex64::from_polar(CONNECTION_RADIUS * 1.0001, phi);
                let zc = Complex64::from_polar(CONNECTION_RADIUS, phi);
                let via_ode = tricomi_raw(a, b, z).unwrap();
                let via_conn = u_connection(a, b, zc).unwrap();
                assert!(rel(via_ode, via_conn) < 1e-3, "a={a} b={b} phi={phi}");
            }
        }
    }

    #[test]
    fn integral_simple_cases() {
        let p = ShapeParams::unit(1.0, 2.0).unwrap();
        assert!((tricomi_u_integral(&p, 2.0).unwrap() - 0.5).abs() < 1e-13);
        let p = ShapeParams::unit(0.5, 1.5).unwrap();
        assert!((tricomi_u_integral(&p, 1.0).unwrap() - 1.0).abs() < 1e-12);
        assert!(tricomi_u_integral(&p, 0.0).is_err());
    }

    #[test]
    fn asymptotic_leading_terms() {
        let p = ShapeParams::unit(0.5, 1.5).unwrap();
        let s = u_asymptotic_small(&p, c(1e-6, 0.0));
        assert!((s.re - 1e3).abs() < 1e-9);
        let p = ShapeParams::unit(0.7, 1.7).unwrap();
        let l = u_asymptotic_large(&p, c(1e6, 0.0));
        assert!((l.re / 10f64.powf(-4.2) - 1.0).abs() < 1e-13);
    }

    #[test]
    fn cut_boundary_cole_cole() {
        let p = ShapeParams::unit(0.5, 1.5).unwrap();
        let cb = cut_boundary(&p, 1.0).unwrap();
        assert!(cb.re.abs() < 1e-15);
        assert!((cb.im + 1.0).abs() < 1e-15);
        assert!(cb.c2 > 0.0);
        assert!(cut_boundary(&ShapeParams::unit(1.2, 1.5).unwrap(), 1.0).is_err());
        assert!(cut_boundary(&p, -1.0).is_err());
    }

    #[test]
    fn cut_boundary_both_sides_of_asymptotic_radius() {
        // mpmath hyperu(0.35, 1.7, -x + 1e-25j) at 30 digits
        let p = ShapeParams::unit(0.35, 1.7).unwrap();
        let refs = [
            (49.99999, c(0.115168140082649819, -0.226030201625697317)),
            (50.0, c(0.115168132078485554, -0.226030185916640443)),
            (5.0, c(0.251128448649493827, -0.493325338853919592)),
        ];
        for (x, want) in refs {
            let got = cut_boundary(&p, x).unwrap().value();
            assert!(rel(got, want) < 1e-13, "x = {x}: {got} vs {want}");
        }
    }
}
