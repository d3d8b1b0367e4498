//! Time-domain kernels.
//!
//! `tricomi_kernel` is the closed-form inverse Laplace transform of `U`. The
//! bounded block's impulse and step responses are exponential mixtures over
//! the cut density:
//!
//! ```text
//! f(t) = (1/tau) int p(u) e^u exp(-e^u t/tau) du
//! g(t) =         int p(u) (1 - exp(-e^u t/tau)) du
//! ```
//!
//! Both are evaluated by the trapezoid rule on the density grid. Beyond the
//! window `p` is continued with its tail power laws, scaled so each
//! continuation carries the density's tail mass; that contribution is
//! reported with every value.

use serde::{Deserialize, Serialize};

pub use crate::bounded_model::AnchoredParams;
use crate::error::{Error, Result};
use crate::hypergeom::ShapeParams;
use crate::special::rgamma;
use crate::spectral::SpectralDensity;

/// Strictly increasing positive times in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t: Vec<f64>,
}

impl TimeGrid {
    pub fn new(t: Vec<f64>) -> Result<Self> {
        if t.is_empty() {
            return Err(Error::domain("empty time grid"));
        }
        if t.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::domain("times must be positive and finite"));
        }
        if t.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::domain("times must be strictly increasing"));
        }
        Ok(Self { t })
    }

    pub fn log_spaced(t_min: f64, t_max: f64, per_decade: usize) -> Result<Self> {
        if !(t_min > 0.0 && t_max > t_min && t_max.is_finite() && per_decade > 0) {
            return Err(Error::domain(format!(
                "invalid time range [{t_min}, {t_max}]"
            )));
        }
        let (l0, l1) = (t_min.log10(), t_max.log10());
        let n = ((l1 - l0) * per_decade as f64).ceil().max(1.0) as usize;
        Self::new(
            (0..=n)
                .map(|i| 10f64.powf(l0 + (l1 - l0) * i as f64 / n as f64))
                .collect(),
        )
    }

    pub fn t(&self) -> &[f64] {
        &self.t
    }
}

/// A kernel value with the part contributed by the tail continuations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelValue {
    pub value: f64,
    pub tail_estimate: f64,
    /// Set when the tail part exceeds [`TAIL_WARN_FRACTION`] of the value.
    pub warning: bool,
}

/// Impulse response of an anchored block: `direct * delta(t) + smooth(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnchoredImpulse {
    pub direct: f64,
    pub smooth: f64,
    pub tail_estimate: f64,
    pub warning: bool,
}

pub const TAIL_WARN_FRACTION: f64 = 1e-2;

/// `(1/(tau Gamma(a))) (t/tau)^{a-1} (1 + t/tau)^{b-a-1}`.
pub fn tricomi_kernel(params: &ShapeParams, t: f64) -> Result<f64> {
    params.validate()?;
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::domain(format!("t must be positive, got {t}")));
    }
    let s = t / params.tau;
    let (a, b) = (params.a, params.b);
    Ok(rgamma(a) / params.tau * s.powf(a - 1.0) * (1.0 + s).powf(b - a - 1.0))
}

/// Integrate `w(x) p(u)` over the grid and both tail continuations, where
/// `w` depends on `x = e^u`. `hf_rest` is the mass weight applied to the
/// high tail beyond the last continuation sample; `hf_stop` ends the sampled
/// high tail once `w` is negligible.
fn mixture<W: Fn(f64) -> f64>(d: &SpectralDensity, w: W, hf_stop: f64, hf_rest: f64) -> (f64, f64) {
    let du = d.du();
    let n = d.rho.len() - 1;
    let mut body = 0.0;
    for (i, (u, p)) in d.u_grid.iter().zip(&d.rho).enumerate() {
        let h = if i == 0 || i == n { 0.5 } else { 1.0 };
        body += h * p * w(u.exp());
    }
    body *= du;

    let (a, b) = (d.params.a, d.params.b);
    let [u0, u1] = d.window;

    // low tail: density tail_lo (b-1) e^{(b-1)(u-u0)}
    let s_lo = b - 1.0;
    let mut lo = 0.0;
    let mut prev = f64::INFINITY;
    for k in 1..200_000 {
        let u = u0 - du * k as f64;
        let v = d.tail_lo * s_lo * (s_lo * (u - u0)).exp() * w(u.exp());
        lo += v;
        if v <= 1e-18 * (body + lo).abs() && v <= prev {
            break;
        }
        prev = v;
    }
    let edge_lo = 0.5 * d.tail_lo * s_lo * w(u0.exp());
    lo = (lo + edge_lo) * du;

    // high tail: density tail_hi a e^{-a(u-u1)}, sampled up to hf_stop
    let n_hi = if hf_stop > u1 {
        (((hf_stop - u1) / du).ceil() as usize).min(200_000)
    } else {
        0
    };
    let mut hi = 0.0;
    if n_hi > 0 {
        for k in 0..=n_hi {
            let u = u1 + du * k as f64;
            let h = if k == 0 || k == n_hi { 0.5 } else { 1.0 };
            hi += h * d.tail_hi * a * (-a * (u - u1)).exp() * w(u.exp());
        }
        hi *= du;
    }
    // remaining tail mass with w at its limiting value
    let u_end = u1 + du * n_hi as f64;
    hi += d.tail_hi * (-a * (u_end - u1)).exp() * hf_rest;
    (body, lo + hi)
}

fn check_inputs(tau: f64, t: f64, allow_zero: bool) -> Result<()> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::domain(format!("tau must be positive, got {tau}")));
    }
    let ok = if allow_zero { t >= 0.0 } else { t > 0.0 };
    if !(t.is_finite() && ok) {
        return Err(Error::domain(format!("invalid time t = {t}")));
    }
    Ok(())
}

fn value(body: f64, tail: f64) -> KernelValue {
    let v = body + tail;
    KernelValue {
        value: v,
        tail_estimate: tail,
        warning: tail.abs() > TAIL_WARN_FRACTION * v.abs(),
    }
}

/// `f(t)` of the bounded block with time constant `tau`.
pub fn impulse_response_f(density: &SpectralDensity, tau: f64, t: f64) -> Result<KernelValue> {
    check_inputs(tau, t, false)?;
    let s = t / tau;
    let wf = |x: f64| x * (-x * s).exp() / tau;
    // beyond x s = 50 the factor is below e^{-50}
    let (body, tail) = mixture(density, wf, (50.0 / s).ln(), 0.0);
    Ok(value(body, tail))
}

/// `g(t)` of the bounded block; `g(0) = 0`.
pub fn step_response_g(density: &SpectralDensity, tau: f64, t: f64) -> Result<KernelValue> {
    check_inputs(tau, t, true)?;
    if t == 0.0 {
        return Ok(KernelValue {
            value: 0.0,
            tail_estimate: 0.0,
            warning: false,
        });
    }
    let s = t / tau;
    let wg = |x: f64| -(-x * s).exp_m1();
    let (body, tail) = mixture(density, wg, (50.0 / s).ln(), 1.0);
    Ok(value(body, tail))
}

/// `hinf delta(t) + (h0 - hinf) f(t)`, with the delta coefficient kept apart.
pub fn anchored_impulse(
    anchor: &AnchoredParams,
    density: &SpectralDensity,
    t: f64,
) -> Result<AnchoredImpulse> {
    let f = impulse_response_f(density, anchor.shape.tau, t)?;
    Ok(AnchoredImpulse {
        direct: anchor.hinf,
        smooth: anchor.span() * f.value,
        tail_estimate: anchor.span() * f.tail_estimate,
        warning: f.warning,
    })
}

/// `hinf + (h0 - hinf) g(t)` for `t > 0`.
pub fn anchored_step(
    anchor: &AnchoredParams,
    density: &SpectralDensity,
    t: f64,
) -> Result<KernelValue> {
    if !(t > 0.0) {
        return Err(Error::domain(format!("anchored step needs t > 0, got {t}")));
    }
    let g = step_response_g(density, anchor.shape.tau, t)?;
    Ok(KernelValue {
        value: anchor.hinf + anchor.span() * g.value,
        tail_estimate: anchor.span() * g.tail_estimate,
        warning: g.warning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_values() {
        let p = ShapeParams::unit(1.0, 2.0).unwrap();
        assert!((tricomi_kernel(&p, 3.0).unwrap() - 1.0).abs() < 1e-15);
        let p = ShapeParams::unit(0.5, 1.5).unwrap();
        let want = 1.0 / std::f64::consts::PI.sqrt();
        assert!((tricomi_kernel(&p, 1.0).unwrap() - want).abs() < 1e-14);
        assert!(tricomi_kernel(&p, 0.0).is_err());
    }

    #[test]
    fn grids() {
        assert!(TimeGrid::new(vec![0.0, 1.0]).is_err());
        assert!(TimeGrid::new(vec![2.0, 1.0]).is_err());
        assert_eq!(TimeGrid::log_spaced(1e-2, 1e2, 5).unwrap().t().len(), 21);
    }
}
