//! Multi-block tissue permittivity and battery impedance fitting.
//!
//! Tissue spectra use `eps = eps_inf + sigma_i/(j w eps0) + sum d_n F_n(j w tau_n)`
//! fitted on log-ratio errors of `eps'` and `sigma`. Battery spectra use
//! `Z = R_s + j w L_s + 1/(1/R_0 + sum G_n(j w tau_n)/R_n)` fitted on the log
//! magnitude and phase of `Z_mod/Z_exp`.
//!
//! Fitting runs differential evolution on a log-subsampled band, then a
//! bounded soft-l1 least-squares refinement on the full band. Amplitudes,
//! resistances, the inductance and time constants live in log10
//! coordinates; blocks are kept sorted by ascending `tau`.

mod modes;
pub mod optim;

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bounded_model::{f_bounded, g_complementary};
use crate::error::{Error, Result};
use crate::hypergeom::ShapeParams;
pub use modes::{
    bootstrap, mode_profiles, BootstrapResult, ModeEnvelope, ModeProfile, ModeSet,
    DEFAULT_BOOTSTRAP_REPLICATES, MIN_PROFILE_POINTS_PER_DECADE, PROFILE_POINTS_PER_DECADE,
};
use optim::{differential_evolution, least_squares, soft_l1_cost};
pub use optim::{Bounds, DeConfig, DeStrategy, LsConfig};

/// Vacuum permittivity, F/m.
pub const EPS0: f64 = 8.8541878128e-12;
/// Default slab thickness for impedance views, m.
pub const SLAB_THICKNESS_M: f64 = 1e-3;
/// Default slab electrode area for impedance views, m^2.
pub const SLAB_AREA_M2: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TissueBlock {
    pub delta_eps: f64,
    pub a: f64,
    pub b: f64,
    /// Seconds.
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TissueModel {
    pub eps_inf: f64,
    /// S/m.
    pub sigma_i: f64,
    pub blocks: Vec<TissueBlock>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryBranch {
    /// Ohms.
    pub r: f64,
    pub a: f64,
    pub b: f64,
    /// Seconds.
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryModel {
    pub r_s: f64,
    /// Henries.
    pub l_s: f64,
    pub r_0: f64,
    pub branches: Vec<BatteryBranch>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FitModel {
    Tissue(TissueModel),
    Battery(BatteryModel),
}

fn check_shape(a: f64, b: f64, tau: f64) -> Result<()> {
    ShapeParams::new(a, b, tau)?.check_passive()
}

impl TissueModel {
    /// Builds the model with blocks sorted by ascending `tau`.
    pub fn new(eps_inf: f64, sigma_i: f64, mut blocks: Vec<TissueBlock>) -> Result<Self> {
        blocks.sort_by(|x, y| x.tau.total_cmp(&y.tau));
        let m = Self {
            eps_inf,
            sigma_i,
            blocks,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps_inf.is_finite() && self.eps_inf > 0.0) {
            return Err(Error::domain(format!(
                "eps_inf must be positive, got {}",
                self.eps_inf
            )));
        }
        if !(self.sigma_i.is_finite() && self.sigma_i >= 0.0) {
            return Err(Error::domain(format!(
                "sigma_i must be nonnegative, got {}",
                self.sigma_i
            )));
        }
        for (i, bl) in self.blocks.iter().enumerate() {
            if !(bl.delta_eps.is_finite() && bl.delta_eps > 0.0) {
                return Err(Error::domain(format!(
                    "block {i}: delta_eps must be positive"
                )));
            }
            check_shape(bl.a, bl.b, bl.tau)?;
        }
        if self.blocks.windows(2).any(|w| w[1].tau < w[0].tau) {
            return Err(Error::domain("blocks must be sorted by ascending tau"));
        }
        Ok(())
    }
}

impl BatteryModel {
    /// Builds the model with branches sorted by ascending `tau`.
    pub fn new(r_s: f64, l_s: f64, r_0: f64, mut branches: Vec<BatteryBranch>) -> Result<Self> {
        branches.sort_by(|x, y| x.tau.total_cmp(&y.tau));
        let m = Self {
            r_s,
            l_s,
            r_0,
            branches,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("r_s", self.r_s), ("l_s", self.l_s), ("r_0", self.r_0)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::domain(format!("{name} must be positive, got {v}")));
            }
        }
        for (i, br) in self.branches.iter().enumerate() {
            if !(br.r.is_finite() && br.r > 0.0) {
                return Err(Error::domain(format!("branch {i}: r must be positive")));
            }
            check_shape(br.a, br.b, br.tau)?;
        }
        if self.branches.windows(2).any(|w| w[1].tau < w[0].tau) {
            return Err(Error::domain("branches must be sorted by ascending tau"));
        }
        Ok(())
    }

    /// `R_s + R_0`, the `w -> 0` limit.
    pub fn dc_resistance(&self) -> f64 {
        self.r_s + self.r_0
    }

    /// `R_s + (1/R_0 + sum 1/R_n)^{-1}`, the resistive `w -> inf` limit.
    pub fn hf_resistance(&self) -> f64 {
        let y: f64 = 1.0 / self.r_0 + self.branches.iter().map(|b| 1.0 / b.r).sum::<f64>();
        self.r_s + 1.0 / y
    }
}

impl FitModel {
    pub fn order(&self) -> usize {
        match self {
            FitModel::Tissue(m) => m.blocks.len(),
            FitModel::Battery(m) => m.branches.len(),
        }
    }

    /// Number of free parameters.
    pub fn n_params(&self) -> usize {
        head_len(self.kind()) + 4 * self.order()
    }

    pub fn kind(&self) -> DataKind {
        match self {
            FitModel::Tissue(_) => DataKind::Tissue,
            FitModel::Battery(_) => DataKind::Battery,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            FitModel::Tissue(m) => m.validate(),
            FitModel::Battery(m) => m.validate(),
        }
    }

    /// `(amplitude, shape)` of each block; the amplitude is `delta_eps` for
    /// tissue and 1 for battery branches.
    pub fn blocks(&self) -> Vec<(f64, ShapeParams)> {
        let mk = |a, b, tau| ShapeParams { a, b, tau };
        match self {
            FitModel::Tissue(m) => m
                .blocks
                .iter()
                .map(|x| (x.delta_eps, mk(x.a, x.b, x.tau)))
                .collect(),
            FitModel::Battery(m) => m
                .branches
                .iter()
                .map(|x| (1.0, mk(x.a, x.b, x.tau)))
                .collect(),
        }
    }

    /// Placeholder tissue model of the given order, usable as a template.
    pub fn tissue_template(order: usize) -> Self {
        let blocks = (0..order)
            .map(|n| TissueBlock {
                delta_eps: 10.0,
                a: 0.5,
                b: 1.5,
                tau: 10f64.powi(-3 - 2 * n as i32),
            })
            .collect();
        FitModel::Tissue(TissueModel::new(2.0, 0.1, blocks).expect("valid template"))
    }

    /// Placeholder battery model of the given order, usable as a template.
    pub fn battery_template(order: usize) -> Self {
        let branches = (0..order)
            .map(|n| BatteryBranch {
                r: 0.1,
                a: 0.5,
                b: 1.5,
                tau: 10f64.powi(-2 * n as i32),
            })
            .collect();
        FitModel::Battery(BatteryModel::new(0.01, 1e-7, 0.1, branches).expect("valid template"))
    }

    /// Complex model output (`eps_hat` or `Z`) on the data frequencies.
    pub fn predict(&self, f: &[f64]) -> Result<Vec<Complex64>> {
        f.iter()
            .map(|fk| {
                let w = 2.0 * PI * fk;
                match self {
                    FitModel::Tissue(m) => tissue_eval(m, w),
                    FitModel::Battery(m) => battery_eval(m, w),
                }
            })
            .collect()
    }
}

fn check_omega(omega: f64) -> Result<()> {
    if !(omega.is_finite() && omega > 0.0) {
        return Err(Error::domain(format!(
            "omega must be positive, got {omega}"
        )));
    }
    Ok(())
}

/// Complex relative permittivity of a tissue model.
pub fn tissue_eval(model: &TissueModel, omega: f64) -> Result<Complex64> {
    check_omega(omega)?;
    let mut eps = Complex64::new(model.eps_inf, -model.sigma_i / (omega * EPS0));
    for bl in &model.blocks {
        let p = ShapeParams::new(bl.a, bl.b, bl.tau)?;
        eps += f_bounded(&p, Complex64::new(0.0, omega * bl.tau))? * bl.delta_eps;
    }
    Ok(eps)
}

/// `(eps', sigma)` from `eps_hat`.
pub fn observables(eps: Complex64, omega: f64) -> (f64, f64) {
    (eps.re, -omega * EPS0 * eps.im)
}

/// `eps' + sigma/(j w eps0)`.
pub fn epshat_from_observables(eps_prime: f64, sigma: f64, omega: f64) -> Complex64 {
    Complex64::new(eps_prime, -sigma / (omega * EPS0))
}

/// Impedance of a homogeneous slab of thickness `l` and area `area`.
pub fn slab_impedance(
    eps_prime: f64,
    sigma: f64,
    l: f64,
    area: f64,
    omega: f64,
) -> Result<Complex64> {
    check_omega(omega)?;
    if !(l > 0.0 && area > 0.0 && l.is_finite() && area.is_finite()) {
        return Err(Error::domain("slab thickness and area must be positive"));
    }
    let y = Complex64::new(sigma, omega * EPS0 * eps_prime) * (area / l);
    if y.norm() == 0.0 {
        return Err(Error::domain("slab admittance vanishes"));
    }
    Ok(y.inv())
}

/// Battery impedance, ohms.
pub fn battery_eval(model: &BatteryModel, omega: f64) -> Result<Complex64> {
    check_omega(omega)?;
    let mut y = Complex64::new(1.0 / model.r_0, 0.0);
    for br in &model.branches {
        let p = ShapeParams::new(br.a, br.b, br.tau)?;
        y += g_complementary(&p, Complex64::new(0.0, omega * br.tau))? / br.r;
    }
    Ok(Complex64::new(model.r_s, omega * model.l_s) + y.inv())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataKind {
    Tissue,
    Battery,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TissueData {
    pub f: Vec<f64>,
    pub eps_prime: Vec<f64>,
    /// S/m.
    pub sigma: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryData {
    pub f: Vec<f64>,
    pub z: Vec<Complex64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SpectrumData {
    Tissue(TissueData),
    Battery(BatteryData),
}

fn preprocess<T: Copy>(
    f: Vec<f64>,
    v: Vec<T>,
    ok: impl Fn(&T) -> bool,
) -> Result<(Vec<f64>, Vec<T>)> {
    if f.len() != v.len() {
        return Err(Error::Data("columns have different lengths".into()));
    }
    let mut rows: Vec<(f64, T)> = f
        .into_iter()
        .zip(v)
        .filter(|(fk, vk)| fk.is_finite() && *fk > 0.0 && ok(vk))
        .collect();
    if rows.is_empty() {
        return Err(Error::Data("no usable rows after filtering".into()));
    }
    rows.sort_by(|x, y| x.0.total_cmp(&y.0));
    Ok(rows.into_iter().unzip())
}

impl TissueData {
    /// Drops non-finite rows and non-positive frequencies, sorts by `f`.
    pub fn new(f: Vec<f64>, eps_prime: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        if eps_prime.len() != sigma.len() {
            return Err(Error::Data("columns have different lengths".into()));
        }
        let pairs: Vec<(f64, f64)> = eps_prime.into_iter().zip(sigma).collect();
        let (f, pairs) = preprocess(f, pairs, |(e, s)| e.is_finite() && s.is_finite())?;
        let (eps_prime, sigma) = pairs.into_iter().unzip();
        Ok(Self {
            f,
            eps_prime,
            sigma,
        })
    }

    pub fn len(&self) -> usize {
        self.f.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f.is_empty()
    }

    pub fn epshat(&self) -> Vec<Complex64> {
        (0..self.len())
            .map(|k| {
                epshat_from_observables(self.eps_prime[k], self.sigma[k], 2.0 * PI * self.f[k])
            })
            .collect()
    }
}

impl BatteryData {
    /// Drops non-finite rows and non-positive frequencies, sorts by `f`;
    /// a zero impedance sample is an error.
    pub fn new(f: Vec<f64>, z: Vec<Complex64>) -> Result<Self> {
        let (f, z) = preprocess(f, z, |z| z.re.is_finite() && z.im.is_finite())?;
        if let Some(k) = z.iter().position(|v| v.norm() == 0.0) {
            return Err(Error::Data(format!("zero impedance at f = {} Hz", f[k])));
        }
        Ok(Self { f, z })
    }

    pub fn len(&self) -> usize {
        self.f.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f.is_empty()
    }
}

impl SpectrumData {
    pub fn f(&self) -> &[f64] {
        match self {
            SpectrumData::Tissue(d) => &d.f,
            SpectrumData::Battery(d) => &d.f,
        }
    }

    pub fn len(&self) -> usize {
        self.f().len()
    }

    pub fn is_empty(&self) -> bool {
        self.f().is_empty()
    }

    pub fn kind(&self) -> DataKind {
        match self {
            SpectrumData::Tissue(_) => DataKind::Tissue,
            SpectrumData::Battery(_) => DataKind::Battery,
        }
    }

    /// Measured `eps_hat` or `Z`.
    pub fn observed(&self) -> Vec<Complex64> {
        match self {
            SpectrumData::Tissue(d) => d.epshat(),
            SpectrumData::Battery(d) => d.z.clone(),
        }
    }
}

/// Parameter boxes for tissue fits, in linear units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TissueBounds {
    pub eps_inf: [f64; 2],
    pub sigma_i: [f64; 2],
    pub delta_eps: [f64; 2],
    pub a: [f64; 2],
    pub b: [f64; 2],
    pub tau: [f64; 2],
}

/// Parameter boxes for battery fits, in linear units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryBounds {
    pub r_s: [f64; 2],
    pub l_s: [f64; 2],
    pub r_0: [f64; 2],
    pub r_n: [f64; 2],
    pub a: [f64; 2],
    pub b: [f64; 2],
    pub tau: [f64; 2],
}

pub const SHAPE_A_BOX: [f64; 2] = [0.05, 0.95];
pub const SHAPE_B_BOX: [f64; 2] = [1.0002, 1.95];

fn tau_box(f: &[f64]) -> [f64; 2] {
    let (f0, f1) = (f[0], f[f.len() - 1]);
    [0.01 / (2.0 * PI * f1), 100.0 / (2.0 * PI * f0)]
}

fn min_positive(v: impl Iterator<Item = f64>) -> Option<f64> {
    v.filter(|x| *x > 0.0).min_by(f64::total_cmp)
}

impl TissueBounds {
    /// Boxes derived from the measured ranges and the bandwidth.
    pub fn from_data(d: &TissueData) -> Self {
        let emax = d.eps_prime.iter().copied().fold(1.0, f64::max);
        let emin = min_positive(d.eps_prime.iter().copied()).unwrap_or(1.0);
        let smin = min_positive(d.sigma.iter().copied()).unwrap_or(1e-6);
        Self {
            eps_inf: [1.0, (1.2 * emin).max(2.0)],
            sigma_i: [1e-4 * smin, 1.2 * smin],
            delta_eps: [1e-3 * (emax - emin).max(1.0), 10.0 * emax],
            a: SHAPE_A_BOX,
            b: SHAPE_B_BOX,
            tau: tau_box(&d.f),
        }
    }
}

impl BatteryBounds {
    /// Boxes derived from the measured ranges and the bandwidth.
    pub fn from_data(d: &BatteryData) -> Self {
        let zmax = d.z.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let zmin = d.z.iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min);
        let rmin = min_positive(d.z.iter().map(|z| z.re)).unwrap_or(zmin);
        let fmax = d.f[d.f.len() - 1];
        Self {
            r_s: [1e-4 * zmin, 1.2 * rmin],
            l_s: [
                1e-4 * zmin / (2.0 * PI * fmax),
                10.0 * zmax / (2.0 * PI * fmax),
            ],
            r_0: [1e-3 * zmin, 100.0 * zmax],
            r_n: [1e-3 * zmin, 100.0 * zmax],
            a: SHAPE_A_BOX,
            b: SHAPE_B_BOX,
            tau: tau_box(&d.f),
        }
    }
}

fn check_box(name: &str, b: [f64; 2], positive: bool) -> Result<()> {
    if !(b[0].is_finite() && b[1].is_finite() && b[0] < b[1]) || (positive && b[0] <= 0.0) {
        return Err(Error::domain(format!(
            "bounds for {name} are invalid: {b:?}"
        )));
    }
    Ok(())
}

fn check_shape_boxes(a: [f64; 2], b: [f64; 2]) -> Result<()> {
    check_box("a", a, true)?;
    check_box("b", b, true)?;
    if a[1] >= 1.0 || b[0] <= 1.0 || b[1] >= 2.0 {
        return Err(Error::domain(
            "shape bounds must lie inside the passive box 0 < a < 1, 1 < b < 2",
        ));
    }
    Ok(())
}

impl TissueBounds {
    pub fn validate(&self) -> Result<()> {
        check_box("eps_inf", self.eps_inf, true)?;
        check_box("sigma_i", self.sigma_i, true)?;
        check_box("delta_eps", self.delta_eps, true)?;
        check_box("tau", self.tau, true)?;
        check_shape_boxes(self.a, self.b)
    }

    fn to_bounds(self, order: usize) -> Result<Bounds> {
        self.validate()?;
        let lg = |b: [f64; 2]| [b[0].log10(), b[1].log10()];
        let mut rows = vec![lg(self.eps_inf), lg(self.sigma_i)];
        for _ in 0..order {
            rows.extend([lg(self.delta_eps), self.a, self.b, lg(self.tau)]);
        }
        Bounds::new(
            rows.iter().map(|r| r[0]).collect(),
            rows.iter().map(|r| r[1]).collect(),
        )
    }
}

impl BatteryBounds {
    pub fn validate(&self) -> Result<()> {
        check_box("r_s", self.r_s, true)?;
        check_box("l_s", self.l_s, true)?;
        check_box("r_0", self.r_0, true)?;
        check_box("r_n", self.r_n, true)?;
        check_box("tau", self.tau, true)?;
        check_shape_boxes(self.a, self.b)
    }

    fn to_bounds(self, order: usize) -> Result<Bounds> {
        self.validate()?;
        let lg = |b: [f64; 2]| [b[0].log10(), b[1].log10()];
        let mut rows = vec![lg(self.r_s), lg(self.l_s), lg(self.r_0)];
        for _ in 0..order {
            rows.extend([lg(self.r_n), self.a, self.b, lg(self.tau)]);
        }
        Bounds::new(
            rows.iter().map(|r| r[0]).collect(),
            rows.iter().map(|r| r[1]).collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub w_eps: f64,
    pub w_sigma: f64,
    pub alpha_de: f64,
    pub alpha_ls: f64,
    /// Log floors as a fraction of each channel's median.
    pub floor_rel: f64,
    /// Frequencies used by the global stage.
    pub de_subsample: usize,
    pub de: DeConfig,
    pub ls: LsConfig,
    pub seed: u64,
    /// When false the template is refined locally without the global stage.
    pub global_search: bool,
    /// Independent global-plus-local passes; the lowest final cost is kept.
    pub restarts: usize,
    /// Local refinements per pass, started from the best distinct members of
    /// the final population; the lowest full-band cost is kept.
    pub polish_starts: usize,
    /// Bootstrap warm-start perturbation as a fraction of each box width.
    pub perturbation: f64,
    pub tissue_bounds: Option<TissueBounds>,
    pub battery_bounds: Option<BatteryBounds>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            w_eps: 1.5,
            w_sigma: 1.0,
            alpha_de: 0.5,
            alpha_ls: 1.0,
            floor_rel: 1e-12,
            de_subsample: 40,
            de: DeConfig::default(),
            ls: LsConfig::default(),
            seed: 20_240_601,
            global_search: true,
            restarts: 1,
            polish_starts: 1,
            perturbation: 0.01,
            tissue_bounds: None,
            battery_bounds: None,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = [
            ("w_eps", self.w_eps),
            ("w_sigma", self.w_sigma),
            ("alpha_de", self.alpha_de),
            ("alpha_ls", self.alpha_ls),
            ("floor_rel", self.floor_rel),
            ("ls.loss_scale", self.ls.loss_scale),
            ("de.mutation", self.de.mutation),
        ];
        for (name, v) in pos {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::domain(format!("{name} must be positive, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.de.crossover) {
            return Err(Error::domain("de.crossover must lie in [0, 1]"));
        }
        if self.restarts == 0 || self.polish_starts == 0 {
            return Err(Error::domain(
                "restarts and polish_starts must be at least 1",
            ));
        }
        if self.de.pop_per_dim == 0 || self.de_subsample < 2 {
            return Err(Error::domain(
                "de.pop_per_dim must be positive and de_subsample at least 2",
            ));
        }
        if !(0.0..=0.5).contains(&self.perturbation) {
            return Err(Error::domain("perturbation must lie in [0, 0.5]"));
        }
        if let Some(b) = &self.tissue_bounds {
            b.validate()?;
        }
        if let Some(b) = &self.battery_bounds {
            b.validate()?;
        }
        Ok(())
    }
}

/// `w_k` proportional to the local spacing in `log10 f`, normalised to mean 1.
pub fn log_frequency_weights(f: &[f64]) -> Vec<f64> {
    let n = f.len();
    if n < 2 {
        return vec![1.0; n];
    }
    let l: Vec<f64> = f.iter().map(|v| v.log10()).collect();
    let mut w: Vec<f64> = (0..n)
        .map(|k| match k {
            0 => l[1] - l[0],
            k if k == n - 1 => l[n - 1] - l[n - 2],
            k => 0.5 * (l[k + 1] - l[k - 1]),
        })
        .collect();
    let mean = w.iter().sum::<f64>() / n as f64;
    if mean > 0.0 {
        w.iter_mut().for_each(|v| *v /= mean);
    } else {
        w.iter_mut().for_each(|v| *v = 1.0);
    }
    w
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn tissue_floors(d: &TissueData, floor_rel: f64) -> Result<[f64; 2]> {
    let mut out = [0.0; 2];
    for (i, (name, ch)) in [("eps_prime", &d.eps_prime), ("sigma", &d.sigma)]
        .into_iter()
        .enumerate()
    {
        let m = median(ch);
        let floor = floor_rel * m;
        if !(m > 0.0) || ch.iter().all(|v| *v <= floor) {
            return Err(Error::Data(format!(
                "channel {name} is degenerate: every sample hits the log floor"
            )));
        }
        out[i] = floor;
    }
    Ok(out)
}

fn tissue_residuals_idx(
    m: &TissueModel,
    d: &TissueData,
    idx: &[usize],
    w: &[f64],
    floors: [f64; 2],
    cfg: &FitConfig,
) -> Result<Vec<f64>> {
    let n = idx.len();
    let mut r = vec![0.0; 2 * n];
    for (j, &k) in idx.iter().enumerate() {
        let om = 2.0 * PI * d.f[k];
        let (e, s) = observables(tissue_eval(m, om)?, om);
        let sw = w[j].sqrt();
        let ee = (e.max(floors[0]) / d.eps_prime[k].max(floors[0])).log10();
        let es = (s.max(floors[1]) / d.sigma[k].max(floors[1])).log10();
        r[j] = cfg.w_eps * sw * ee;
        r[n + j] = cfg.w_sigma * sw * es;
    }
    Ok(r)
}

fn battery_residuals_idx(
    m: &BatteryModel,
    d: &BatteryData,
    idx: &[usize],
    alpha: f64,
) -> Result<Vec<f64>> {
    let n = idx.len();
    let mut r = vec![0.0; 2 * n];
    for (j, &k) in idx.iter().enumerate() {
        let rho = battery_eval(m, 2.0 * PI * d.f[k])? / d.z[k];
        r[j] = rho.norm().log10();
        r[n + j] = alpha.sqrt() * rho.arg();
    }
    Ok(r)
}

/// Stacked `[W_eps sqrt(w_k) e_eps; W_sigma sqrt(w_k) e_sigma]`.
pub fn tissue_residuals(
    model: &TissueModel,
    data: &TissueData,
    config: &FitConfig,
) -> Result<Vec<f64>> {
    let floors = tissue_floors(data, config.floor_rel)?;
    let idx: Vec<usize> = (0..data.len()).collect();
    tissue_residuals_idx(
        model,
        data,
        &idx,
        &log_frequency_weights(&data.f),
        floors,
        config,
    )
}

/// Stacked `[log10|rho_k|; sqrt(alpha_ls) arg rho_k]` with `rho = Z_mod/Z_exp`.
pub fn battery_residuals(
    model: &BatteryModel,
    data: &BatteryData,
    config: &FitConfig,
) -> Result<Vec<f64>> {
    if let Some(k) = data.z.iter().position(|v| v.norm() == 0.0) {
        return Err(Error::Data(format!(
            "zero impedance at f = {} Hz",
            data.f[k]
        )));
    }
    let idx: Vec<usize> = (0..data.len()).collect();
    battery_residuals_idx(model, data, &idx, config.alpha_ls)
}

/// RMS of `|model_k - observed_k| / |observed_k|`.
pub fn complex_rmse(model: &[Complex64], observed: &[Complex64]) -> f64 {
    let n = model.len().min(observed.len());
    if n == 0 {
        return 0.0;
    }
    let s: f64 = model
        .iter()
        .zip(observed)
        .map(|(m, o)| ((m - o).norm() / o.norm()).powi(2))
        .sum();
    (s / n as f64).sqrt()
}

/// Serialises non-finite floats as strings so JSON stays valid.
mod nonfinite {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str(&v.to_string())
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum V {
            N(f64),
            S(String),
        }
        match V::deserialize(d)? {
            V::N(x) => Ok(x),
            V::S(s) => s.parse().map_err(de::Error::custom),
        }
    }
}

/// Comparative information criteria; only differences across orders fitted
/// to the same data and weights are meaningful.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InfoCriteria {
    #[serde(with = "nonfinite")]
    pub aic: f64,
    #[serde(with = "nonfinite")]
    pub bic: f64,
    pub rss: f64,
    /// Stacked residual length.
    pub n: usize,
    /// Free parameters.
    pub p: usize,
    /// Set when `rss = 0` and both criteria are `-inf`.
    pub degenerate: bool,
}

/// `n ln(RSS/n) + 2p` and `n ln(RSS/n) + p ln n`.
pub fn information_criteria(residuals: &[f64], p: usize) -> InfoCriteria {
    let n = residuals.len();
    let rss: f64 = residuals.iter().map(|r| r * r).sum();
    let nf = n as f64;
    if rss == 0.0 || n == 0 {
        return InfoCriteria {
            aic: f64::NEG_INFINITY,
            bic: f64::NEG_INFINITY,
            rss,
            n,
            p,
            degenerate: true,
        };
    }
    let base = nf * (rss / nf).ln();
    InfoCriteria {
        aic: base + 2.0 * p as f64,
        bic: base + p as f64 * nf.ln(),
        rss,
        n,
        p,
        degenerate: false,
    }
}

pub fn info_criteria(fit: &FitResult) -> InfoCriteria {
    information_criteria(&fit.residuals, fit.model.n_params())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitTrace {
    pub de_ran: bool,
    pub de_generations: usize,
    pub de_evaluations: usize,
    pub de_converged: bool,
    /// Global-stage objective at its solution, on the subsample.
    pub de_loss: f64,
    /// Soft-l1 cost of the stage-1 point on the full band.
    pub stage1_cost: f64,
    pub ls_iterations: usize,
    pub ls_converged: bool,
    /// The local stage failed or did not improve; the stage-1 point is kept.
    pub ls_fallback: bool,
    pub restarts: usize,
    /// Restart whose result was kept; the stage fields above describe it.
    pub best_restart: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: FitModel,
    /// Frequency range of the fitted data, Hz.
    pub band_hz: [f64; 2],
    /// Euclidean norm of the weighted residual vector.
    pub residual_norm: f64,
    /// Final soft-l1 cost.
    pub loss: f64,
    /// RMS pointwise loss on the full grid (battery: `e_mag^2 + alpha_de e_phi^2`).
    pub scalar_loss: f64,
    pub residuals: Vec<f64>,
    pub complex_rmse: f64,
    pub info: InfoCriteria,
    pub trace: FitTrace,
    pub converged: bool,
    pub seed: u64,
    /// Effective configuration, with the bounds actually used.
    pub config: FitConfig,
}

fn head_len(kind: DataKind) -> usize {
    match kind {
        DataKind::Tissue => 2,
        DataKind::Battery => 3,
    }
}

/// Sorts the 4-parameter blocks after `head` by their last entry (`log10 tau`).
fn canonicalise(x: &mut [f64], head: usize) {
    let mut blocks: Vec<[f64; 4]> = x[head..]
        .chunks_exact(4)
        .map(|c| [c[0], c[1], c[2], c[3]])
        .collect();
    blocks.sort_by(|p, q| p[3].total_cmp(&q[3]));
    for (c, b) in x[head..].chunks_exact_mut(4).zip(blocks) {
        c.copy_from_slice(&b);
    }
}

fn theta_of(model: &FitModel) -> Vec<f64> {
    match model {
        FitModel::Tissue(m) => {
            let mut t = vec![m.eps_inf.log10(), m.sigma_i.max(1e-300).log10()];
            for b in &m.blocks {
                t.extend([b.delta_eps.log10(), b.a, b.b, b.tau.log10()]);
            }
            t
        }
        FitModel::Battery(m) => {
            let mut t = vec![m.r_s.log10(), m.l_s.log10(), m.r_0.log10()];
            for b in &m.branches {
                t.extend([b.r.log10(), b.a, b.b, b.tau.log10()]);
            }
            t
        }
    }
}

fn model_of(kind: DataKind, t: &[f64]) -> FitModel {
    let p10 = |v: f64| 10f64.powf(v);
    match kind {
        DataKind::Tissue => FitModel::Tissue(TissueModel {
            eps_inf: p10(t[0]),
            sigma_i: p10(t[1]),
            blocks: t[2..]
                .chunks_exact(4)
                .map(|c| TissueBlock {
                    delta_eps: p10(c[0]),
                    a: c[1],
                    b: c[2],
                    tau: p10(c[3]),
                })
                .collect(),
        }),
        DataKind::Battery => FitModel::Battery(BatteryModel {
            r_s: p10(t[0]),
            l_s: p10(t[1]),
            r_0: p10(t[2]),
            branches: t[3..]
                .chunks_exact(4)
                .map(|c| BatteryBranch {
                    r: p10(c[0]),
                    a: c[1],
                    b: c[2],
                    tau: p10(c[3]),
                })
                .collect(),
        }),
    }
}

/// Indices quasi-uniform in `log10 f`, at most `target` of them.
fn log_subsample(f: &[f64], target: usize) -> Vec<usize> {
    let n = f.len();
    if n <= target {
        return (0..n).collect();
    }
    let (l0, l1) = (f[0].log10(), f[n - 1].log10());
    let mut idx: Vec<usize> = (0..target)
        .map(|i| {
            let l = l0 + (l1 - l0) * i as f64 / (target - 1) as f64;
            let k = f.partition_point(|v| v.log10() < l).min(n - 1);
            if k > 0 && (f[k - 1].log10() - l).abs() < (f[k].log10() - l).abs() {
                k - 1
            } else {
                k
            }
        })
        .collect();
    idx.dedup();
    idx
}

struct Problem<'a> {
    data: &'a SpectrumData,
    cfg: &'a FitConfig,
    kind: DataKind,
    bounds: Bounds,
    floors: [f64; 2],
    all: Vec<usize>,
    weights: Vec<f64>,
    sub: Vec<usize>,
    sub_weights: Vec<f64>,
}

impl<'a> Problem<'a> {
    fn new(data: &'a SpectrumData, cfg: &'a FitConfig, order: usize) -> Result<(Self, FitConfig)> {
        if data.len() < 2 {
            return Err(Error::Data("need at least two frequencies".into()));
        }
        let mut effective = cfg.clone();
        let (bounds, floors) = match data {
            SpectrumData::Tissue(d) => {
                let tb = cfg
                    .tissue_bounds
                    .unwrap_or_else(|| TissueBounds::from_data(d));
                effective.tissue_bounds = Some(tb);
                (tb.to_bounds(order)?, tissue_floors(d, cfg.floor_rel)?)
            }
            SpectrumData::Battery(d) => {
                let bb = cfg
                    .battery_bounds
                    .unwrap_or_else(|| BatteryBounds::from_data(d));
                effective.battery_bounds = Some(bb);
                if let Some(k) = d.z.iter().position(|v| v.norm() == 0.0) {
                    return Err(Error::Data(format!("zero impedance at f = {} Hz", d.f[k])));
                }
                (bb.to_bounds(order)?, [0.0; 2])
            }
        };
        let f = data.f();
        let sub = log_subsample(f, cfg.de_subsample);
        let sub_f: Vec<f64> = sub.iter().map(|&k| f[k]).collect();
        Ok((
            Self {
                data,
                cfg,
                kind: data.kind(),
                bounds,
                floors,
                all: (0..f.len()).collect(),
                weights: log_frequency_weights(f),
                sub,
                sub_weights: log_frequency_weights(&sub_f),
            },
            effective,
        ))
    }

    fn residuals_on(&self, t: &[f64], idx: &[usize], w: &[f64], alpha: f64) -> Result<Vec<f64>> {
        match (model_of(self.kind, t), self.data) {
            (FitModel::Tissue(m), SpectrumData::Tissue(d)) => {
                tissue_residuals_idx(&m, d, idx, w, self.floors, self.cfg)
            }
            (FitModel::Battery(m), SpectrumData::Battery(d)) => {
                battery_residuals_idx(&m, d, idx, alpha)
            }
            _ => unreachable!("kind checked at construction"),
        }
    }

    fn residuals(&self, t: &[f64]) -> Result<Vec<f64>> {
        self.residuals_on(t, &self.all, &self.weights, self.cfg.alpha_ls)
    }

    /// Tissue: RMS of the weighted residuals. Battery: RMS pointwise loss
    /// with `alpha_de` on the phase.
    fn scalar_loss(&self, t: &[f64], idx: &[usize], w: &[f64]) -> f64 {
        match self.residuals_on(t, idx, w, self.cfg.alpha_de) {
            Ok(r) => match self.kind {
                DataKind::Tissue => (r.iter().map(|v| v * v).sum::<f64>() / r.len() as f64).sqrt(),
                DataKind::Battery => {
                    (r.iter().map(|v| v * v).sum::<f64>() / idx.len() as f64).sqrt()
                }
            },
            Err(_) => f64::INFINITY,
        }
    }
}

/// Two-stage fit. The template fixes the kind and order; with
/// `global_search = false` it is also the starting point.
/// One global-plus-local pass; restart `k` draws from its own substream.
fn run_stages(
    prob: &Problem,
    config: &FitConfig,
    template: &FitModel,
    k: usize,
    canon: &impl Fn(&mut [f64]),
) -> Result<(Vec<f64>, FitTrace)> {
    let mut trace = FitTrace {
        de_ran: false,
        de_generations: 0,
        de_evaluations: 0,
        de_converged: true,
        de_loss: f64::NAN,
        stage1_cost: f64::NAN,
        ls_iterations: 0,
        ls_converged: false,
        ls_fallback: false,
        restarts: 0,
        best_restart: 0,
    };
    let mut chosen = trace.clone();
    let starts = if config.global_search {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(k as u64);
        let out = differential_evolution(
            |x| prob.scalar_loss(x, &prob.sub, &prob.sub_weights),
            &prob.bounds,
            &config.de,
            &mut rng,
            canon,
        );
        trace.de_ran = true;
        trace.de_generations = out.generations;
        trace.de_evaluations = out.evaluations;
        trace.de_converged = out.converged;
        trace.de_loss = out.f;
        let mut starts = vec![out.x.clone()];
        starts.extend(
            out.ranked
                .into_iter()
                .map(|(x, _)| x)
                .filter(|x| *x != out.x)
                .take(config.polish_starts - 1),
        );
        starts
    } else {
        let mut x = theta_of(template);
        canon(&mut x);
        model_of(prob.kind, &x).validate()?;
        prob.bounds.clip(&mut x);
        vec![x]
    };
    let mut best: Option<(Vec<f64>, f64)> = None;
    for x1 in starts {
        let r1 = prob.residuals(&x1)?;
        let c1 = soft_l1_cost(&r1, config.ls.loss_scale);
        let mut t = trace.clone();
        t.stage1_cost = c1;
        let (x2, c2) =
            match least_squares(|x| prob.residuals(x), &x1, &prob.bounds, &config.ls, canon) {
                Ok(out) if out.cost <= c1 => {
                    t.ls_iterations = out.iterations;
                    t.ls_converged = out.converged;
                    (out.x, out.cost)
                }
                Ok(out) => {
                    t.ls_iterations = out.iterations;
                    t.ls_fallback = true;
                    (x1, c1)
                }
                Err(_) => {
                    t.ls_fallback = true;
                    (x1, c1)
                }
            };
        if best.as_ref().is_none_or(|b| c2 < b.1) {
            best = Some((x2, c2));
            chosen = t;
        }
    }
    let (x2, _) = best.expect("at least one start");
    let mut trace = chosen;
    trace.restarts = if config.global_search {
        config.restarts
    } else {
        1
    };
    Ok((x2, trace))
}

pub fn fit(data: &SpectrumData, config: &FitConfig, template: &FitModel) -> Result<FitResult> {
    config.validate()?;
    if template.kind() != data.kind() {
        return Err(Error::domain(
            "model template and data are of different kinds",
        ));
    }
    if template.order() == 0 {
        return Err(Error::domain("model order must be at least 1"));
    }
    let (prob, effective) = Problem::new(data, config, template.order())?;
    let head = head_len(prob.kind);
    let canon = |x: &mut [f64]| canonicalise(x, head);

    let runs = if config.global_search {
        config.restarts
    } else {
        1
    };
    let mut best: Option<(Vec<f64>, f64, FitTrace)> = None;
    for k in 0..runs {
        let (x, trace) = run_stages(&prob, config, template, k, &canon)?;
        let cost = soft_l1_cost(&prob.residuals(&x)?, config.ls.loss_scale);
        if best.as_ref().is_none_or(|b| cost < b.1) {
            best = Some((
                x,
                cost,
                FitTrace {
                    best_restart: k,
                    ..trace
                },
            ));
        }
    }
    let (x2, _, trace) = best.expect("at least one run");
    let residuals = prob.residuals(&x2)?;
    let model = model_of(prob.kind, &x2);
    let predicted = model.predict(data.f())?;
    let info = information_criteria(&residuals, x2.len());
    Ok(FitResult {
        residual_norm: residuals.iter().map(|v| v * v).sum::<f64>().sqrt(),
        loss: soft_l1_cost(&residuals, config.ls.loss_scale),
        scalar_loss: prob.scalar_loss(&x2, &prob.all, &prob.weights),
        complex_rmse: complex_rmse(&predicted, &data.observed()),
        converged: trace.de_converged && trace.ls_converged && !trace.ls_fallback,
        residuals,
        info,
        trace,
        seed: config.seed,
        band_hz: [data.f()[0], data.f()[data.len() - 1]],
        config: effective,
        model,
    })
}
