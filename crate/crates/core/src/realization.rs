//! Gauss–Stieltjes Foster models and their diagonal state-space form.
//!
//! The Gauss rule is built for the log-rate measure `p(u) du`: the
//! orthogonal polynomials are polynomials in `u`, the nodes are
//! `x_m = e^{u_m}`. The resulting model
//! `F_N(z) = sum_m w_m x_m / (x_m + z)` has positive poles and residues and
//! matches the DC plateau exactly because `sum_m w_m = 1`.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bounded_model::{anchored_h_grid, AnchoredParams, FrequencyGrid};
use crate::error::{Error, Result};
use crate::kernel::TimeGrid;
use crate::par;
use crate::spectral::{build_density, SpectralDensity};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FosterModel {
    /// Dimensionless rates `x_m`, ascending.
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// `w_m x_m`.
    pub residues: Vec<f64>,
}

impl FosterModel {
    pub fn new(nodes: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if nodes.len() != weights.len() || nodes.is_empty() {
            return Err(Error::domain(
                "nodes and weights must be nonempty and of equal length",
            ));
        }
        if nodes
            .iter()
            .chain(&weights)
            .any(|v| !(v.is_finite() && *v > 0.0))
        {
            return Err(Error::domain("Foster nodes and weights must be positive"));
        }
        let residues = nodes.iter().zip(&weights).map(|(x, w)| x * w).collect();
        Ok(Self {
            nodes,
            weights,
            residues,
        })
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSpaceModel {
    /// Decay rates `x_m / tau`, 1/s.
    pub lambda: Vec<f64>,
    /// Input-side residues `w_m x_m / tau`, 1/s.
    pub r: Vec<f64>,
    /// Output weights: 1 for the bare block, `h0 - hinf` when anchored.
    pub c: Vec<f64>,
    /// Feedthrough: 0 for the bare block, `hinf` when anchored.
    pub d: f64,
}

impl StateSpaceModel {
    /// `C (sI - A)^{-1} B + D` with `A = -diag(lambda)`.
    pub fn transfer(&self, s: Complex64) -> Complex64 {
        let mut acc = Complex64::new(self.d, 0.0);
        for ((l, r), c) in self.lambda.iter().zip(&self.r).zip(&self.c) {
            acc += (s + l).inv() * (r * c);
        }
        acc
    }
}

/// One row of a convergence report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub order: usize,
    pub rms_rel_mag: f64,
    pub max_rel_mag: f64,
    /// Radians, wrapped to (-pi, pi].
    pub rms_phase_err: f64,
    pub max_phase_err: f64,
    pub poles_in_band: usize,
    /// `x_m / (2 pi tau)`, Hz.
    pub pole_freqs_hz: Vec<f64>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub anchor: AnchoredParams,
    pub band_hz: [f64; 2],
    pub eval_points: usize,
    pub norm_defect: f64,
    pub rows: Vec<ConvergenceRow>,
}

/// Recurrence coefficients of the orthonormal polynomials of a discrete
/// measure by Lanczos with full reorthogonalisation. Returns `(alpha, beta)`
/// with `beta[k]` coupling degrees `k` and `k+1`.
fn lanczos(u: &[f64], mass: &[f64], order: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = u.len();
    let mut qs: Vec<Vec<f64>> = Vec::with_capacity(order);
    let mut q: Vec<f64> = mass.iter().map(|m| m.sqrt()).collect();
    let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    q.iter_mut().for_each(|v| *v /= norm);
    let mut alpha = Vec::with_capacity(order);
    let mut beta = Vec::with_capacity(order.saturating_sub(1));
    let mut prev_beta = 0.0;
    for k in 0..order {
        let mut w: Vec<f64> = (0..n).map(|i| u[i] * q[i]).collect();
        if k > 0 {
            let qp = &qs[k - 1];
            w.iter_mut()
                .zip(qp)
                .for_each(|(wi, p)| *wi -= prev_beta * p);
        }
        let a: f64 = w.iter().zip(&q).map(|(wi, qi)| wi * qi).sum();
        w.iter_mut().zip(&q).for_each(|(wi, qi)| *wi -= a * qi);
        alpha.push(a);
        qs.push(q);
        if k + 1 == order {
            break;
        }
        for _ in 0..2 {
            for qj in &qs {
                let h: f64 = w.iter().zip(qj).map(|(wi, qi)| wi * qi).sum();
                w.iter_mut().zip(qj).for_each(|(wi, qi)| *wi -= h * qi);
            }
        }
        let b = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        let scale = alpha.iter().map(|v: &f64| v.abs()).fold(1.0, f64::max);
        if !(b > 1e-12 * scale) {
            return Err(Error::IllConditioned {
                index: k + 1,
                value: b,
            });
        }
        beta.push(b);
        prev_beta = b;
        q = w.iter().map(|v| v / b).collect();
    }
    Ok((alpha, beta))
}

/// Eigenvalues and squared first eigenvector components of the symmetric
/// tridiagonal matrix with diagonal `d` and off-diagonal `e`, by implicit QL
/// with Wilkinson shifts.
fn tridiagonal_gauss(mut d: Vec<f64>, e_in: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = d.len();
    let mut e = vec![0.0; n];
    e[..n - 1].copy_from_slice(e_in);
    let mut z = vec![0.0; n];
    z[0] = 1.0;
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::numerical(
                    "gauss_stieltjes",
                    "QL iteration did not converge",
                ));
            }
            // Wilkinson shift from the leading 2x2 block
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut deflated = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                let zf = z[i + 1];
                z[i + 1] = s * z[i] + c * zf;
                z[i] = c * z[i] - s * zf;
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok((d, z.iter().map(|v| v * v).collect()))
}

/// `order`-point Gauss rule for the log-rate measure of `density`.
pub fn gauss_stieltjes(density: &SpectralDensity, order: usize) -> Result<FosterModel> {
    if order == 0 || order > density.len() / 4 {
        return Err(Error::domain(format!(
            "order must be in 1..={} for a grid of {} samples, got {order}",
            density.len() / 4,
            density.len()
        )));
    }
    let dm = density.discrete_measure();
    let shift: f64 = dm.u.iter().zip(&dm.mass).map(|(u, m)| u * m).sum();
    let centred: Vec<f64> = dm.u.iter().map(|u| u - shift).collect();
    let (alpha, beta) = lanczos(&centred, &dm.mass, order)?;
    let (ev, w) = tridiagonal_gauss(alpha, &beta)?;
    let mut pairs: Vec<(f64, f64)> = ev.into_iter().map(|v| v + shift).zip(w).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    for (k, win) in pairs.windows(2).enumerate() {
        let gap = win[1].0 - win[0].0;
        if gap < 1e-13 * win[1].0.abs().max(1.0) {
            return Err(Error::IllConditioned {
                index: k + 1,
                value: gap,
            });
        }
    }
    if let Some(k) = pairs.iter().position(|p| !(p.1 > 0.0)) {
        return Err(Error::IllConditioned {
            index: k,
            value: pairs[k].1,
        });
    }
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    let nodes = pairs.iter().map(|p| p.0.exp()).collect();
    let weights = pairs.iter().map(|p| p.1 / total).collect();
    FosterModel::new(nodes, weights)
}

/// `F_N(z) = sum_m w_m x_m / (x_m + z)`.
pub fn eval_foster(model: &FosterModel, z: Complex64) -> Result<Complex64> {
    let mut acc = Complex64::new(0.0, 0.0);
    for (x, r) in model.nodes.iter().zip(&model.residues) {
        let den = z + x;
        if den.norm() <= 1e-14 * x {
            return Err(Error::domain(format!("z = {z} hits the pole at -{x}")));
        }
        acc += den.inv() * *r;
    }
    Ok(acc)
}

/// Diagonal realisation with time constant `tau`, optionally anchored.
pub fn to_state_space(
    model: &FosterModel,
    tau: f64,
    anchor: Option<&AnchoredParams>,
) -> Result<StateSpaceModel> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::domain(format!("tau must be positive, got {tau}")));
    }
    let lambda: Vec<f64> = model.nodes.iter().map(|x| x / tau).collect();
    let r: Vec<f64> = model.residues.iter().map(|r| r / tau).collect();
    let (gain, d) = match anchor {
        Some(an) => (an.span(), an.hinf),
        None => (1.0, 0.0),
    };
    Ok(StateSpaceModel {
        c: vec![gain; lambda.len()],
        lambda,
        r,
        d,
    })
}

/// Exact modal step response `d + sum c_m (r_m / lambda_m)(1 - e^{-lambda_m t})`.
pub fn simulate_step(ss: &StateSpaceModel, grid: &TimeGrid) -> Vec<f64> {
    grid.t()
        .iter()
        .map(|&t| {
            ss.d + ss
                .lambda
                .iter()
                .zip(&ss.r)
                .zip(&ss.c)
                .map(|((l, r), c)| c * r / l * -(-l * t).exp_m1())
                .sum::<f64>()
        })
        .collect()
}

fn wrap_phase(x: f64) -> f64 {
    let y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y - 2.0 * PI
    } else {
        y
    }
}

const EVAL_POINTS_PER_DECADE: usize = 50;
const DENSITY_POINTS_PER_DECADE: usize = 40;

/// Anchored `M`-term models against the exact anchored response over
/// `f_band` (Hz) for each order.
pub fn convergence_study(
    anchor: &AnchoredParams,
    f_band: (f64, f64),
    orders: &[usize],
) -> Result<ConvergenceReport> {
    if orders.is_empty() || orders.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::domain(
            "orders must be nonempty and strictly ascending",
        ));
    }
    let shape = anchor.shape;
    let density = build_density(&shape, f_band, DENSITY_POINTS_PER_DECADE)?;
    let grid = FrequencyGrid::log_spaced(f_band.0, f_band.1, EVAL_POINTS_PER_DECADE)?;
    let exact = anchored_h_grid(anchor, &grid)?;
    let rows = par::map(orders, |&m| -> Result<ConvergenceRow> {
        let model = gauss_stieltjes(&density, m)?;
        let mut sq_mag = 0.0;
        let mut sq_ph = 0.0;
        let mut max_mag = 0.0f64;
        let mut max_ph = 0.0f64;
        for (f, h) in grid.f().iter().zip(&exact) {
            let z = Complex64::new(0.0, 2.0 * PI * f * shape.tau);
            let hn = eval_foster(&model, z)? * anchor.span() + anchor.hinf;
            let em = (hn.norm() - h.norm()).abs() / h.norm();
            let ep = wrap_phase(hn.arg() - h.arg()).abs();
            sq_mag += em * em;
            sq_ph += ep * ep;
            max_mag = max_mag.max(em);
            max_ph = max_ph.max(ep);
        }
        let k = grid.len() as f64;
        let pole_freqs_hz: Vec<f64> = model
            .nodes
            .iter()
            .map(|x| x / (2.0 * PI * shape.tau))
            .collect();
        let poles_in_band = pole_freqs_hz
            .iter()
            .filter(|f| **f >= f_band.0 && **f <= f_band.1)
            .count();
        Ok(ConvergenceRow {
            order: m,
            rms_rel_mag: (sq_mag / k).sqrt(),
            max_rel_mag: max_mag,
            rms_phase_err: (sq_ph / k).sqrt(),
            max_phase_err: max_ph,
            poles_in_band,
            pole_freqs_hz,
            weights: model.weights,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(ConvergenceReport {
        anchor: *anchor,
        band_hz: [f_band.0, f_band.1],
        eval_points: grid.len(),
        norm_defect: density.norm_defect,
        rows,
    })
}

impl ConvergenceReport {
    /// Error table, one row per order.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "order,rms_rel_mag,max_rel_mag,rms_phase_err_rad,max_phase_err_rad,poles_in_band"
        )?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{:e},{:e},{:e},{:e},{}",
                r.order,
                r.rms_rel_mag,
                r.max_rel_mag,
                r.rms_phase_err,
                r.max_phase_err,
                r.poles_in_band
            )?;
        }
        Ok(())
    }

    /// Pole spectrum, one row per order and mode.
    pub fn write_poles_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "order,mode,pole_hz,weight")?;
        for r in &self.rows {
            for (i, (f, wt)) in r.pole_freqs_hz.iter().zip(&r.weights).enumerate() {
                writeln!(w, "{},{},{:e},{:e}", r.order, i + 1, f, wt)?;
            }
        }
        Ok(())
    }
}
