//! Cut density of the bounded block and its log-rate form.
//!
//! `rho(x) = -(1/pi) Im F(-x + j0+)` is nonnegative in the passive regime and
//! gives `F(z) = int rho(x)/(x+z) dx`. In `u = ln x` the normalised measure
//! `dP = rho(x)/x dx` becomes `p(u) du` with `p(u) = rho(e^u)`.
//!
//! Densities are sampled on a uniform `u` grid that extends the mapped band
//! by three decades on each side. The mass outside the window is computed
//! separately and carried with the density.

use std::f64::consts::{LN_10, PI};
use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypergeom::{cut_boundary, ShapeParams};
use crate::par;
use crate::quad::{integrate, QuadOptions};

/// Decades added on each side of the mapped band.
pub const WINDOW_EXTENSION_DECADES: f64 = 3.0;
/// Minimum sampling density in points per decade.
pub const MIN_POINTS_PER_DECADE: usize = 40;
/// Densities with a larger normalisation defect are not accepted.
pub const ACCEPT_NORM_DEFECT: f64 = 1e-4;
/// Densities with a larger normalisation defect are rejected outright.
pub const MAX_NORM_DEFECT: f64 = 1e-3;

/// `rho(x) = -(1/pi) B / ((1+A)^2 + B^2)` with `U(-x + j0+) = A + jB`.
pub fn rho_f(params: &ShapeParams, x: f64) -> Result<f64> {
    let cb = cut_boundary(params, x)?;
    let (a, b) = (cb.re, cb.im);
    Ok(-b / (PI * ((1.0 + a) * (1.0 + a) + b * b)))
}

/// Rates beyond which the closed-form tail integrals are used.
const LF_MODEL_RATE: f64 = 1e-6;
const HF_MODEL_RATE: f64 = 1e6;

fn rho_quad(params: &ShapeParams, u0: f64, u1: f64) -> Result<f64> {
    if u1 <= u0 {
        return Ok(0.0);
    }
    let opts = QuadOptions {
        abs_tol: 1e-14,
        rel_tol: 1e-10,
        max_intervals: 2000,
    };
    let val = integrate(|u| rho_f(params, u.exp()).unwrap_or(f64::NAN), u0, u1, opts)?;
    Ok(val.value)
}

/// `P(x < x_edge)`. Below [`LF_MODEL_RATE`] the cut value is replaced by
/// `c1 + c2 x^{1-b} e^{j theta}`, whose `dP` integrates in closed form.
fn lf_tail_mass(params: &ShapeParams, x_edge: f64) -> Result<f64> {
    let x_deep = x_edge.min(LF_MODEL_RATE);
    let cb = cut_boundary(params, x_deep)?;
    let k = 1.0 + cb.c1;
    let (s, c) = cb.theta.sin_cos();
    let y = cb.c2 * x_deep.powf(1.0 - params.b);
    let r = (k * s).abs();
    let model = -s * r.atan2(y + k * c) / (r * PI * (params.b - 1.0));
    Ok(model + rho_quad(params, x_deep.ln(), x_edge.ln())?)
}

/// `P(x > x_edge)`. Above [`HF_MODEL_RATE`] the cut value is replaced by
/// `x^{-a} e^{-j pi a}`.
fn hf_tail_mass(params: &ShapeParams, x_edge: f64) -> Result<f64> {
    let x_deep = x_edge.max(HF_MODEL_RATE);
    let a = params.a;
    let y = x_deep.powf(-a);
    let (s, c) = (PI * a).sin_cos();
    let model = (s.atan2(y + c) - s.atan2(c)).abs() / (PI * a);
    Ok(model + rho_quad(params, x_edge.ln(), x_deep.ln())?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralDensity {
    pub params: ShapeParams,
    /// Mapped band in hertz.
    pub band_hz: [f64; 2],
    pub points_per_decade: usize,
    pub u_grid: Vec<f64>,
    /// `p(u) = rho(e^u)` at each grid point.
    pub rho: Vec<f64>,
    /// `[u_min, u_max]`.
    pub window: [f64; 2],
    /// Trapezoidal mass inside the window.
    pub window_mass: f64,
    /// Mass below `u_min`.
    pub tail_lo: f64,
    /// Mass above `u_max`.
    pub tail_hi: f64,
    /// `|window_mass + tail_lo + tail_hi - 1|`.
    pub norm_defect: f64,
}

/// Atoms `(u_i, mass_i)` of a discretised measure, ascending in `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    pub u: Vec<f64>,
    pub mass: Vec<f64>,
}

/// Metadata written next to a density CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityHeader {
    pub params: ShapeParams,
    pub band_hz: [f64; 2],
    pub points_per_decade: usize,
    pub window: [f64; 2],
    pub samples: usize,
    pub window_mass: f64,
    pub tail_lo: f64,
    pub tail_hi: f64,
    pub norm_defect: f64,
    pub accepted: bool,
}

/// Sample `p(u)` over the band `f_band` (Hz), mapped through `params.tau`,
/// extended by [`WINDOW_EXTENSION_DECADES`] on each side.
pub fn build_density(
    params: &ShapeParams,
    f_band: (f64, f64),
    points_per_decade: usize,
) -> Result<SpectralDensity> {
    params.check_passive()?;
    let (f_lo, f_hi) = f_band;
    if !(f_lo > 0.0 && f_hi.is_finite() && f_hi >= 10.0 * f_lo * (1.0 - 1e-12)) {
        return Err(Error::domain(format!(
            "band [{f_lo}, {f_hi}] Hz must be positive and at least one decade wide"
        )));
    }
    if points_per_decade < MIN_POINTS_PER_DECADE {
        return Err(Error::domain(format!(
            "at least {MIN_POINTS_PER_DECADE} points per decade required, got {points_per_decade}"
        )));
    }
    let ext = WINDOW_EXTENSION_DECADES * LN_10;
    let u_min = (2.0 * PI * f_lo * params.tau).ln() - ext;
    let u_max = (2.0 * PI * f_hi * params.tau).ln() + ext;
    let n = ((u_max - u_min) / LN_10 * points_per_decade as f64).ceil() as usize;
    let du = (u_max - u_min) / n as f64;
    let u_grid: Vec<f64> = (0..=n).map(|i| u_min + du * i as f64).collect();
    let rho = par::map(&u_grid, |&u| rho_f(params, u.exp()))
        .into_iter()
        .collect::<Result<Vec<f64>>>()?;
    if let Some(i) = rho.iter().position(|r| !(r.is_finite() && *r > 0.0)) {
        return Err(Error::numerical(
            "build_density",
            format!(
                "density sample {} at u = {} is not positive",
                rho[i], u_grid[i]
            ),
        ));
    }

    let window_mass = du * (rho.iter().sum::<f64>() - 0.5 * (rho[0] + rho[n]));
    let tail_lo = lf_tail_mass(params, u_min.exp())?;
    let tail_hi = hf_tail_mass(params, u_max.exp())?;
    let norm_defect = (window_mass + tail_lo + tail_hi - 1.0).abs();
    if norm_defect > MAX_NORM_DEFECT {
        return Err(Error::WindowTooNarrow {
            defect: norm_defect,
            suggested_decades: 2.0 * WINDOW_EXTENSION_DECADES,
        });
    }
    Ok(SpectralDensity {
        params: *params,
        band_hz: [f_lo, f_hi],
        points_per_decade,
        u_grid,
        rho,
        window: [u_min, u_max],
        window_mass,
        tail_lo,
        tail_hi,
        norm_defect,
    })
}

impl SpectralDensity {
    pub fn du(&self) -> f64 {
        self.u_grid[1] - self.u_grid[0]
    }

    pub fn len(&self) -> usize {
        self.u_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u_grid.is_empty()
    }

    pub fn accepted(&self) -> bool {
        self.norm_defect <= ACCEPT_NORM_DEFECT
    }

    /// `int dP`, window plus tails.
    pub fn total_mass(&self) -> f64 {
        self.window_mass + self.tail_lo + self.tail_hi
    }

    /// Discrete form of `dP`: edge-halved trapezoid masses on the grid plus
    /// one atom per tail, scaled to unit total.
    ///
    /// Each tail atom sits where the tail's first-order effect on `F` in the
    /// band is preserved under its power law: the mean rate `E[x]` for the
    /// low tail (`p ~ e^{(b-1)u}`) and the harmonic mean `1/E[1/x]` for the
    /// high tail (`p ~ e^{-au}`).
    pub fn discrete_measure(&self) -> DiscreteMeasure {
        let du = self.du();
        let n = self.rho.len() - 1;
        let (a, b) = (self.params.a, self.params.b);
        let mut u = Vec::with_capacity(n + 3);
        let mut m = Vec::with_capacity(n + 3);
        u.push(self.window[0] + ((b - 1.0) / b).ln());
        m.push(self.tail_lo);
        for (i, (ui, r)) in self.u_grid.iter().zip(&self.rho).enumerate() {
            u.push(*ui);
            m.push(if i == 0 || i == n {
                0.5 * r * du
            } else {
                r * du
            });
        }
        u.push(self.window[1] + ((1.0 + a) / a).ln());
        m.push(self.tail_hi);
        let total: f64 = m.iter().sum();
        m.iter_mut().for_each(|v| *v /= total);
        DiscreteMeasure { u, mass: m }
    }

    /// `u` below which a fraction `q` of `dP` lies; interpolated linearly
    /// within grid cells, tail atoms returned as is.
    pub fn quantile_u(&self, q: f64) -> f64 {
        let dm = self.discrete_measure();
        let last = dm.u.len() - 1;
        let du = self.du();
        let mut acc = 0.0;
        for (i, (u, w)) in dm.u.iter().zip(&dm.mass).enumerate() {
            if acc + w >= q {
                if i == 0 || i == last {
                    return *u;
                }
                let frac = if *w > 0.0 { (q - acc) / w } else { 0.5 };
                return u + du * (frac - 0.5);
            }
            acc += w;
        }
        dm.u[last]
    }

    /// Width in decades between the `q` and `1 - q` quantiles of `dP`.
    pub fn interquantile_decades(&self, q: f64) -> f64 {
        (self.quantile_u(1.0 - q) - self.quantile_u(q)) / LN_10
    }

    pub fn header(&self) -> DensityHeader {
        DensityHeader {
            params: self.params,
            band_hz: self.band_hz,
            points_per_decade: self.points_per_decade,
            window: self.window,
            samples: self.len(),
            window_mass: self.window_mass,
            tail_lo: self.tail_lo,
            tail_hi: self.tail_hi,
            norm_defect: self.norm_defect,
            accepted: self.accepted(),
        }
    }

    /// Two-column `u,p` CSV.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "u,p")?;
        for (u, p) in self.u_grid.iter().zip(&self.rho) {
            writeln!(w, "{u:e},{p:e}")?;
        }
        Ok(())
    }
}

fn check_off_cut(z: Complex64) -> Result<()> {
    if !(z.re.is_finite() && z.im.is_finite()) || (z.im == 0.0 && z.re <= 0.0) {
        return Err(Error::domain(format!("z = {z} lies on the cut (-inf, 0]")));
    }
    Ok(())
}

/// `S(z) = int dP(x)/(x + z)` on the discrete measure.
pub fn stieltjes_s(density: &SpectralDensity, z: Complex64) -> Result<Complex64> {
    check_off_cut(z)?;
    let dm = density.discrete_measure();
    Ok(dm
        .u
        .iter()
        .zip(&dm.mass)
        .map(|(u, w)| (z + u.exp()).inv() * *w)
        .sum())
}

/// `F(z) = int rho(x)/(x + z) dx = 1 - z S(z)` on the discrete measure.
pub fn stieltjes_f(density: &SpectralDensity, z: Complex64) -> Result<Complex64> {
    check_off_cut(z)?;
    let dm = density.discrete_measure();
    Ok(dm
        .u
        .iter()
        .zip(&dm.mass)
        .map(|(u, w)| {
            let x = u.exp();
            (z + x).inv() * (w * x)
        })
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cole_cole_at_unit_rate() {
        let p = ShapeParams::unit(0.5, 1.5).unwrap();
        assert!((rho_f(&p, 1.0).unwrap() - 1.0 / (2.0 * PI)).abs() < 1e-15);
    }

    #[test]
    fn build_rejects_bad_input() {
        let p = ShapeParams::unit(0.5, 1.5).unwrap();
        assert!(build_density(&p, (1.0, 5.0), 40).is_err());
        assert!(build_density(&p, (1e-2, 1e2), 20).is_err());
        let q = ShapeParams::unit(1.0, 2.0).unwrap();
        assert!(build_density(&q, (1e-2, 1e2), 40).is_err());
    }

    #[test]
    fn masses_sum_to_one() {
        let p = ShapeParams::unit(0.5, 1.5).unwrap();
        let d = build_density(&p, (1e-2, 1e2), 40).unwrap();
        let s: f64 = d.discrete_measure().mass.iter().sum();
        assert!((s - 1.0).abs() < 1e-14);
        assert!(d.accepted(), "defect {}", d.norm_defect);
        assert!(stieltjes_s(&d, Complex64::new(0.0, 0.0)).is_err());
        assert!(stieltjes_s(&d, Complex64::new(-1.0, 0.0)).is_err());
    }

    #[test]
    fn csv_shape() {
        let p = ShapeParams::unit(0.5, 1.5).unwrap();
        let d = build_density(&p, (1e-2, 1e2), 40).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), d.len() + 1);
        assert!(text.starts_with("u,p\n"));
    }
}
