//! Normalised mode-density profiles and wild-bootstrap envelopes.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    fit, model_of, observables, theta_of, BatteryData, FitConfig, FitModel, FitResult, Problem,
    SpectrumData, TissueData,
};
use crate::bounded_model::{f_bounded, FrequencyGrid};
use crate::error::{Error, Result};
use crate::par;

pub const DEFAULT_BOOTSTRAP_REPLICATES: usize = 500;
pub const MIN_PROFILE_POINTS_PER_DECADE: usize = 20;
/// Grid density used for bootstrap envelopes.
pub const PROFILE_POINTS_PER_DECADE: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeProfile {
    /// Zero-based block index in ascending-`tau` order.
    pub block: usize,
    pub f: Vec<f64>,
    /// Unit area over `log10 f`.
    pub psi: Vec<f64>,
    pub peak_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSet {
    pub profiles: Vec<ModeProfile>,
    /// Blocks whose in-band profile vanishes identically.
    pub degenerate: Vec<usize>,
}

/// `psi_n` proportional to `max(-Im F_n(j 2 pi f tau_n), 0)` over `f_band`,
/// normalised by the trapezoid area in `log10 f`.
pub fn mode_profiles(
    model: &FitModel,
    f_band: (f64, f64),
    points_per_decade: usize,
) -> Result<ModeSet> {
    if points_per_decade < MIN_PROFILE_POINTS_PER_DECADE {
        return Err(Error::domain(format!(
            "mode profiles need at least {MIN_PROFILE_POINTS_PER_DECADE} points per decade"
        )));
    }
    let grid = FrequencyGrid::log_spaced(f_band.0, f_band.1, points_per_decade)?;
    let f = grid.f();
    let dl: Vec<f64> = f.windows(2).map(|w| w[1].log10() - w[0].log10()).collect();
    let mut profiles = Vec::new();
    let mut degenerate = Vec::new();
    for (n, (amp, p)) in model.blocks().into_iter().enumerate() {
        let phi = f
            .iter()
            .map(|fk| {
                let z = Complex64::new(0.0, 2.0 * PI * fk * p.tau);
                Ok(amp * (-f_bounded(&p, z)?.im).max(0.0))
            })
            .collect::<Result<Vec<f64>>>()?;
        let area: f64 = dl
            .iter()
            .enumerate()
            .map(|(i, d)| 0.5 * d * (phi[i] + phi[i + 1]))
            .sum();
        if !(area > 0.0 && area.is_finite()) {
            degenerate.push(n);
            continue;
        }
        let psi: Vec<f64> = phi.iter().map(|v| v / area).collect();
        let mut k = 0;
        for (i, v) in psi.iter().enumerate() {
            if *v > psi[k] {
                k = i;
            }
        }
        profiles.push(ModeProfile {
            block: n,
            f: f.to_vec(),
            psi,
            peak_hz: f[k],
        });
    }
    Ok(ModeSet {
        profiles,
        degenerate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeEnvelope {
    pub block: usize,
    pub median: Vec<f64>,
    /// 2.5th percentile.
    pub lo: Vec<f64>,
    /// 97.5th percentile.
    pub hi: Vec<f64>,
    /// Replicates contributing to this envelope.
    pub samples: usize,
    pub peak_hz: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub replicates: usize,
    pub master_seed: u64,
    pub perturbation: f64,
    pub f: Vec<f64>,
    pub original: ModeSet,
    pub envelopes: Vec<ModeEnvelope>,
    pub converged: Vec<bool>,
    /// Replicates left out of the envelopes because their refit failed.
    pub excluded: usize,
    pub models: Vec<Option<FitModel>>,
}

/// Linear-interpolation percentile of sorted data, `q` in [0, 1].
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let h = q * (sorted.len() - 1) as f64;
    let i = h.floor() as usize;
    let j = (i + 1).min(sorted.len() - 1);
    sorted[i] + (h - i as f64) * (sorted[j] - sorted[i])
}

fn pseudo_data(fit: &FitResult, data: &SpectrumData, v: &[f64]) -> Result<SpectrumData> {
    let pred = fit.model.predict(data.f())?;
    Ok(match data {
        SpectrumData::Tissue(d) => {
            let floor = |x: f64| x.max(f64::MIN_POSITIVE);
            let mut eps = Vec::with_capacity(d.len());
            let mut sig = Vec::with_capacity(d.len());
            for k in 0..d.len() {
                let (ef, sf) = observables(pred[k], 2.0 * PI * d.f[k]);
                let (ef, sf) = (floor(ef), floor(sf));
                let le = ef.log10() + v[k] * (floor(d.eps_prime[k]).log10() - ef.log10());
                let ls = sf.log10() + v[k] * (floor(d.sigma[k]).log10() - sf.log10());
                eps.push(10f64.powf(le));
                sig.push(10f64.powf(ls));
            }
            SpectrumData::Tissue(TissueData {
                f: d.f.clone(),
                eps_prime: eps,
                sigma: sig,
            })
        }
        SpectrumData::Battery(d) => {
            // log magnitude and phase of Z are flipped together
            let z = (0..d.len())
                .map(|k| pred[k] * ((d.z[k] / pred[k]).ln() * v[k]).exp())
                .collect();
            SpectrumData::Battery(BatteryData { f: d.f.clone(), z })
        }
    })
}

/// Wild bootstrap with Rademacher multipliers around `fit`. Each replicate
/// is refined locally from the fitted parameters plus a uniform perturbation
/// of `config.perturbation` times each box width. Replicate `k` draws from
/// substream `k + 1` of the master seed, so results do not depend on
/// scheduling.
pub fn bootstrap(
    fit_result: &FitResult,
    data: &SpectrumData,
    config: &FitConfig,
    replicates: usize,
) -> Result<BootstrapResult> {
    if replicates == 0 {
        return Err(Error::domain("bootstrap needs at least one replicate"));
    }
    if fit_result.model.kind() != data.kind() {
        return Err(Error::domain("fit and data are of different kinds"));
    }
    let mut cfg = config.clone();
    if cfg.tissue_bounds.is_none() {
        cfg.tissue_bounds = fit_result.config.tissue_bounds;
    }
    if cfg.battery_bounds.is_none() {
        cfg.battery_bounds = fit_result.config.battery_bounds;
    }
    cfg.global_search = false;
    cfg.validate()?;
    let f = data.f();
    let band = (f[0], f[f.len() - 1]);
    let original = mode_profiles(&fit_result.model, band, PROFILE_POINTS_PER_DECADE)?;
    let (prob, _) = Problem::new(data, &cfg, fit_result.model.order())?;
    let bounds = prob.bounds.clone();
    let theta0 = theta_of(&fit_result.model);
    let kind = fit_result.model.kind();
    let seed = config.seed;

    let runs = par::map_range(replicates, |k| -> Result<(ModeSet, FitModel, bool)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64 + 1);
        let v: Vec<f64> = (0..f.len())
            .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
            .collect();
        let mut start = theta0.clone();
        for (i, s) in start.iter_mut().enumerate() {
            let w = bounds.hi[i] - bounds.lo[i];
            *s += cfg.perturbation * w * (2.0 * rng.random::<f64>() - 1.0);
        }
        bounds.clip(&mut start);
        let pseudo = pseudo_data(fit_result, data, &v)?;
        let res = fit(&pseudo, &cfg, &model_of(kind, &start))?;
        let modes = mode_profiles(&res.model, band, PROFILE_POINTS_PER_DECADE)?;
        Ok((
            modes,
            res.model,
            res.trace.ls_converged && !res.trace.ls_fallback,
        ))
    });

    let mut converged = Vec::with_capacity(replicates);
    let mut models = Vec::with_capacity(replicates);
    let mut kept: Vec<ModeSet> = Vec::new();
    for r in runs {
        match r {
            Ok((modes, model, ok)) => {
                converged.push(ok);
                models.push(Some(model));
                if ok {
                    kept.push(modes);
                }
            }
            Err(_) => {
                converged.push(false);
                models.push(None);
            }
        }
    }
    let excluded = replicates - kept.len();
    let grid = FrequencyGrid::log_spaced(band.0, band.1, PROFILE_POINTS_PER_DECADE)?;
    let npts = grid.len();
    let mut envelopes = Vec::new();
    for n in 0..fit_result.model.order() {
        let curves: Vec<&super::ModeProfile> = kept
            .iter()
            .filter_map(|m| m.profiles.iter().find(|p| p.block == n))
            .collect();
        if curves.is_empty() {
            continue;
        }
        let mut median = vec![0.0; npts];
        let mut lo = vec![0.0; npts];
        let mut hi = vec![0.0; npts];
        let mut col = vec![0.0; curves.len()];
        for i in 0..npts {
            for (c, p) in col.iter_mut().zip(&curves) {
                *c = p.psi[i];
            }
            col.sort_by(f64::total_cmp);
            lo[i] = percentile(&col, 0.025);
            median[i] = percentile(&col, 0.5);
            hi[i] = percentile(&col, 0.975);
        }
        envelopes.push(ModeEnvelope {
            block: n,
            median,
            lo,
            hi,
            samples: curves.len(),
            peak_hz: curves.iter().map(|p| p.peak_hz).collect(),
        });
    }
    Ok(BootstrapResult {
        replicates,
        master_seed: seed,
        perturbation: cfg.perturbation,
        f: grid.f().to_vec(),
        original,
        envelopes,
        converged,
        excluded,
        models,
    })
}
