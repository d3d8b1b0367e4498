//! Frequency-domain bounded block.
//!
//! `F(z) = 1 - 1/(1 + U(a, b, z))` maps the Tricomi function onto a response
//! that tends to 1 at low frequency and to 0 at high frequency. Anchoring
//! gives the two-plateau law `H = hinf + (h0 - hinf) F(j omega tau)`.

use std::f64::consts::{LN_10, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypergeom::{tricomi_u, ShapeParams};
use crate::par;

/// Strictly increasing positive frequencies in hertz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    f: Vec<f64>,
}

impl FrequencyGrid {
    pub fn new(f: Vec<f64>) -> Result<Self> {
        if f.is_empty() {
            return Err(Error::domain("empty frequency grid"));
        }
        if f.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::domain("frequencies must be positive and finite"));
        }
        if f.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::domain("frequencies must be strictly increasing"));
        }
        Ok(Self { f })
    }

    /// Log-spaced grid with both endpoints and at least `per_decade` points
    /// per decade.
    pub fn log_spaced(f_min: f64, f_max: f64, per_decade: usize) -> Result<Self> {
        if !(f_min > 0.0 && f_max > f_min && f_max.is_finite()) {
            return Err(Error::domain(format!("invalid band [{f_min}, {f_max}]")));
        }
        if per_decade == 0 {
            return Err(Error::domain("points per decade must be positive"));
        }
        let (l0, l1) = (f_min.log10(), f_max.log10());
        let n = ((l1 - l0) * per_decade as f64).ceil().max(1.0) as usize;
        let f = (0..=n)
            .map(|i| 10f64.powf(l0 + (l1 - l0) * i as f64 / n as f64))
            .collect();
        Self::new(f)
    }

    pub fn f(&self) -> &[f64] {
        &self.f
    }

    pub fn omega(&self) -> Vec<f64> {
        self.f.iter().map(|f| 2.0 * PI * f).collect()
    }

    pub fn len(&self) -> usize {
        self.f.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f.is_empty()
    }
}

/// Plateau-anchored block: `h0` at low frequency, `hinf` at high frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnchoredParams {
    pub h0: f64,
    pub hinf: f64,
    pub shape: ShapeParams,
}

impl AnchoredParams {
    pub fn new(h0: f64, hinf: f64, shape: ShapeParams) -> Result<Self> {
        let p = Self { h0, hinf, shape };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        self.shape.validate()?;
        if !(self.h0.is_finite() && self.hinf.is_finite()) {
            return Err(Error::domain("plateaux must be finite"));
        }
        Ok(())
    }

    /// Impedance anchoring requires `h0 > hinf >= 0`.
    pub fn check_impedance(&self) -> Result<()> {
        self.validate()?;
        if !(self.h0 > self.hinf && self.hinf >= 0.0) {
            return Err(Error::domain(format!(
                "impedance anchoring requires h0 > hinf >= 0, got h0 = {}, hinf = {}",
                self.h0, self.hinf
            )));
        }
        Ok(())
    }

    pub fn span(&self) -> f64 {
        self.h0 - self.hinf
    }
}

/// Fitted slopes and phases of the plateau deviations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticDescriptor {
    pub lf_exponent: f64,
    pub hf_exponent: f64,
    pub lf_phase_deg: f64,
    pub hf_phase_deg: f64,
}

/// `F(z) = 1 - (1 + U)^{-1}` in the dimensionless argument `z`.
pub fn f_bounded(params: &ShapeParams, z: Complex64) -> Result<Complex64> {
    let u = tricomi_u(params, z)?;
    Ok(Complex64::new(1.0, 0.0) - (u + 1.0).inv())
}

/// Complementary factor `G = 1 - F = (1 + U)^{-1}`.
pub fn g_complementary(params: &ShapeParams, z: Complex64) -> Result<Complex64> {
    Ok((tricomi_u(params, z)? + 1.0).inv())
}

fn check_omega(omega: f64) -> Result<()> {
    if !(omega.is_finite() && omega >= 0.0) {
        return Err(Error::domain(format!(
            "omega must be finite and >= 0, got {omega}"
        )));
    }
    Ok(())
}

/// `H(j omega) = hinf + (h0 - hinf) F(j omega tau)`; `omega = 0` returns `h0`.
pub fn anchored_h(anchor: &AnchoredParams, omega: f64) -> Result<Complex64> {
    check_omega(omega)?;
    if omega == 0.0 {
        return Ok(Complex64::new(anchor.h0, 0.0));
    }
    let z = Complex64::new(0.0, omega * anchor.shape.tau);
    Ok(f_bounded(&anchor.shape, z)? * anchor.span() + anchor.hinf)
}

/// [`anchored_h`] over a frequency grid.
pub fn anchored_h_grid(anchor: &AnchoredParams, grid: &FrequencyGrid) -> Result<Vec<Complex64>> {
    par::map(grid.f(), |&f| anchored_h(anchor, 2.0 * PI * f))
        .into_iter()
        .collect()
}

/// `Z_U(s) = rinf + (r0 - rinf) F(s tau)`.
pub fn impedance_zu(r0: f64, rinf: f64, params: &ShapeParams, s: Complex64) -> Result<Complex64> {
    check_plateaux(r0, rinf)?;
    Ok(f_bounded(params, s * params.tau)? * (r0 - rinf) + rinf)
}

fn check_plateaux(r0: f64, rinf: f64) -> Result<()> {
    if !(r0.is_finite() && rinf > 0.0 && r0 > rinf) {
        return Err(Error::domain(format!(
            "plateaux must satisfy r0 > rinf > 0, got r0 = {r0}, rinf = {rinf}"
        )));
    }
    Ok(())
}

pub fn debye_reference(r0: f64, rinf: f64, tau: f64, s: Complex64) -> Complex64 {
    (s * tau + 1.0).inv() * (r0 - rinf) + rinf
}

pub fn cole_cole_reference(r0: f64, rinf: f64, tau: f64, alpha: f64, s: Complex64) -> Complex64 {
    let st = s * tau;
    let p = if st == Complex64::new(0.0, 0.0) {
        st
    } else {
        (st.ln() * alpha).exp()
    };
    (p + 1.0).inv() * (r0 - rinf) + rinf
}

const SLOPE_SAMPLES_PER_DECADE: usize = 32;

fn log_slope(f: &[f64], dev: &[Complex64]) -> f64 {
    let xs: Vec<f64> = f.iter().map(|v| v.log10()).collect();
    let ys: Vec<f64> = dev.iter().map(|d| d.norm().log10()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

fn band_grid(band: (f64, f64), label: &str) -> Result<FrequencyGrid> {
    let (lo, hi) = band;
    if !(lo > 0.0 && hi.is_finite() && hi > lo) {
        return Err(Error::domain(format!(
            "{label} band [{lo}, {hi}] is invalid"
        )));
    }
    if hi / lo < 10.0 * (1.0 - 1e-12) {
        return Err(Error::domain(format!(
            "{label} band [{lo}, {hi}] is narrower than one decade"
        )));
    }
    FrequencyGrid::log_spaced(lo, hi, SLOPE_SAMPLES_PER_DECADE)
}

/// Least-squares log-log slopes of `|h0 - H|` over `lf_band` and `|H - hinf|`
/// over `hf_band` (Hz), with the phases of the deviations at the outermost
/// frequency of each band.
///
/// The deviations are computed as `(h0 - hinf) G` and `(h0 - hinf) F`, so
/// neither suffers cancellation against the plateau.
pub fn estimate_asymptotics(
    anchor: &AnchoredParams,
    lf_band: (f64, f64),
    hf_band: (f64, f64),
) -> Result<AsymptoticDescriptor> {
    anchor.validate()?;
    if anchor.span() == 0.0 {
        return Err(Error::domain("h0 == hinf: the response has no dispersion"));
    }
    let p = anchor.shape;
    let lf = band_grid(lf_band, "low-frequency")?;
    let hf = band_grid(hf_band, "high-frequency")?;
    let jz = |f: f64| Complex64::new(0.0, 2.0 * PI * f * p.tau);
    let lf_dev: Vec<Complex64> = par::map(lf.f(), |&f| g_complementary(&p, jz(f)))
        .into_iter()
        .map(|g| g.map(|g| g * anchor.span()))
        .collect::<Result<_>>()?;
    let hf_dev: Vec<Complex64> = par::map(hf.f(), |&f| f_bounded(&p, jz(f)))
        .into_iter()
        .map(|g| g.map(|g| g * anchor.span()))
        .collect::<Result<_>>()?;
    Ok(AsymptoticDescriptor {
        lf_exponent: log_slope(lf.f(), &lf_dev),
        hf_exponent: -log_slope(hf.f(), &hf_dev),
        lf_phase_deg: lf_dev[0].arg().to_degrees(),
        hf_phase_deg: hf_dev[hf_dev.len() - 1].arg().to_degrees(),
    })
}

/// Two-decade bands deep enough in each asymptote that the leading power
/// law dominates: `|z|^{b-1} <= 1e-3` at low frequency and
/// `|z|^{-a} <= 1e-3`, `|z| >= 1e3` at high frequency.
pub fn asymptotic_bands(params: &ShapeParams) -> ((f64, f64), (f64, f64)) {
    let to_f = |z: f64| z / (2.0 * PI * params.tau);
    let lf_top = (-3.0 * LN_10 / (params.b - 1.0)).exp();
    let hf_bot = (3.0 * LN_10 / params.a).exp().max(1e3);
    (
        (to_f(lf_top * 1e-2), to_f(lf_top)),
        (to_f(hf_bot), to_f(hf_bot * 1e2)),
    )
}
