//! Differential evolution and a bounded soft-l1 Levenberg–Marquardt solver.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

/// Box constraints in optimiser coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Bounds {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::domain("bounds must be nonempty and of equal length"));
        }
        if let Some(i) =
            (0..lo.len()).find(|&i| !(lo[i].is_finite() && hi[i].is_finite() && lo[i] < hi[i]))
        {
            return Err(Error::domain(format!(
                "bound {i} is not well ordered: [{}, {}]",
                lo[i], hi[i]
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn clip(&self, x: &mut [f64]) {
        for (i, v) in x.iter_mut().enumerate() {
            *v = v.clamp(self.lo[i], self.hi[i]);
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .enumerate()
                .all(|(i, v)| *v >= self.lo[i] && *v <= self.hi[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeConfig {
    /// Population size per dimension.
    pub pop_per_dim: usize,
    pub generations: usize,
    pub strategy: DeStrategy,
    pub mutation: f64,
    /// When set, F is drawn uniformly from this range once per generation.
    pub dither: Option<[f64; 2]>,
    pub crossover: f64,
    /// Stop once std(energies) <= tol * |mean(energies)|.
    pub tol: f64,
}

impl Default for DeConfig {
    fn default() -> Self {
        Self {
            pop_per_dim: 15,
            generations: 300,
            strategy: DeStrategy::Best1Bin,
            mutation: 0.7,
            dither: None,
            crossover: 0.9,
            tol: 0.01,
        }
    }
}

/// Mutation rule; all use binomial crossover.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeStrategy {
    /// `best + F (r1 - r2)`.
    Best1Bin,
    /// `r0 + F (r1 - r2)`.
    Rand1Bin,
    /// `x + F (pbest - x) + F (r1 - r2)`, pbest drawn from the best 10%.
    CurrentToPBest1Bin,
    /// JADE: current-to-pbest/1 with an archive of replaced parents for
    /// `r2` and per-individual F and CR adapted from successful trials.
    /// `mutation` and `crossover` seed the adaptive means; `dither` is unused.
    Jade,
}

/// Learning rate of the JADE parameter means.
const JADE_RATE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub generations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// Final population, distinct members ordered by increasing loss.
    pub ranked: Vec<(Vec<f64>, f64)>,
}

fn finite_or_inf(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        f64::INFINITY
    }
}

fn spread_converged(e: &[f64], tol: f64) -> bool {
    if e.iter().any(|v| !v.is_finite()) {
        return false;
    }
    let n = e.len() as f64;
    let mean = e.iter().sum::<f64>() / n;
    let var = e.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    var.sqrt() <= tol * mean.abs()
}

/// Differential evolution with deferred updating: every trial of a
/// generation is drawn before any is evaluated, so results do not depend on
/// evaluation order. Latin hypercube initialisation; out-of-box trial
/// components are redrawn uniformly, or for JADE moved halfway from the
/// parent to the violated bound.
pub fn differential_evolution<F, C>(
    obj: F,
    bounds: &Bounds,
    cfg: &DeConfig,
    rng: &mut ChaCha8Rng,
    canon: C,
) -> DeOutcome
where
    F: Fn(&[f64]) -> f64 + Sync,
    C: Fn(&mut [f64]),
{
    let d = bounds.dim();
    let np = (cfg.pop_per_dim * d).max(5);
    let mut pop: Vec<Vec<f64>> = vec![vec![0.0; d]; np];
    for (j, (lo, hi)) in bounds.lo.iter().zip(&bounds.hi).enumerate() {
        let mut strata: Vec<usize> = (0..np).collect();
        for i in (1..np).rev() {
            strata.swap(i, rng.random_range(0..=i));
        }
        for (i, s) in strata.into_iter().enumerate() {
            let u = (s as f64 + rng.random::<f64>()) / np as f64;
            pop[i][j] = lo + u * (hi - lo);
        }
    }
    pop.iter_mut().for_each(|x| canon(x));
    let mut energy: Vec<f64> = par::map(&pop, |x| finite_or_inf(obj(x)));
    let mut evaluations = np;
    let mut best = argmin(&energy);
    let mut converged = false;
    let mut generations = 0;
    let jade = cfg.strategy == DeStrategy::Jade;
    let (mut mu_f, mut mu_cr) = (cfg.mutation.min(1.0), cfg.crossover);
    let mut archive: Vec<Vec<f64>> = Vec::new();
    for _ in 0..cfg.generations {
        if spread_converged(&energy, cfg.tol) {
            converged = true;
            break;
        }
        generations += 1;
        let fm = match cfg.dither {
            Some([lo, hi]) => lo + rng.random::<f64>() * (hi - lo),
            None => cfg.mutation,
        };
        let ranked = if matches!(
            cfg.strategy,
            DeStrategy::CurrentToPBest1Bin | DeStrategy::Jade
        ) {
            let mut r: Vec<usize> = (0..np).collect();
            r.sort_by(|a, b| energy[*a].total_cmp(&energy[*b]));
            r.truncate((np / 10).max(1));
            r
        } else {
            Vec::new()
        };
        let mut params = Vec::with_capacity(np);
        let trials: Vec<Vec<f64>> = (0..np)
            .map(|i| {
                let (fi, cri) = if jade {
                    (cauchy_f(rng, mu_f), normal_cr(rng, mu_cr))
                } else {
                    (fm, cfg.crossover)
                };
                params.push((fi, cri));
                let r0 = pick(rng, np, &[i]);
                let r1 = pick(rng, np, &[i, r0]);
                let x2 = if jade {
                    let k = pick(rng, np + archive.len(), &[i, r1]);
                    if k < np {
                        &pop[k]
                    } else {
                        &archive[k - np]
                    }
                } else {
                    &pop[pick(rng, np, &[i, r0, r1])]
                };
                let pb = if ranked.is_empty() {
                    best
                } else {
                    ranked[rng.random_range(0..ranked.len())]
                };
                let jr = rng.random_range(0..d);
                let mut u = pop[i].clone();
                for j in 0..d {
                    if j == jr || rng.random::<f64>() < cri {
                        let diff = fi * (pop[r1][j] - x2[j]);
                        let v = match cfg.strategy {
                            DeStrategy::Best1Bin => pop[best][j] + diff,
                            DeStrategy::Rand1Bin => pop[r0][j] + diff,
                            DeStrategy::CurrentToPBest1Bin | DeStrategy::Jade => {
                                pop[i][j] + fi * (pop[pb][j] - pop[i][j]) + diff
                            }
                        };
                        u[j] = if v >= bounds.lo[j] && v <= bounds.hi[j] {
                            v
                        } else if jade {
                            // halfway between the parent and the violated bound
                            0.5 * (pop[i][j]
                                + if v < bounds.lo[j] {
                                    bounds.lo[j]
                                } else {
                                    bounds.hi[j]
                                })
                        } else {
                            bounds.lo[j] + rng.random::<f64>() * (bounds.hi[j] - bounds.lo[j])
                        };
                    }
                }
                canon(&mut u);
                u
            })
            .collect();
        let e = par::map(&trials, |x| finite_or_inf(obj(x)));
        evaluations += np;
        let (mut sf, mut sf2, mut scr, mut ns) = (0.0, 0.0, 0.0, 0usize);
        for (i, (t, ei)) in trials.into_iter().zip(e).enumerate() {
            if ei <= energy[i] {
                if jade && ei < energy[i] {
                    let (fi, cri) = params[i];
                    sf += fi;
                    sf2 += fi * fi;
                    scr += cri;
                    ns += 1;
                    archive.push(std::mem::replace(&mut pop[i], t));
                } else {
                    pop[i] = t;
                }
                energy[i] = ei;
            }
        }
        if jade {
            while archive.len() > np {
                let k = rng.random_range(0..archive.len());
                archive.swap_remove(k);
            }
            if ns > 0 {
                mu_cr = (1.0 - JADE_RATE) * mu_cr + JADE_RATE * scr / ns as f64;
                mu_f = (1.0 - JADE_RATE) * mu_f + JADE_RATE * sf2 / sf;
            }
        }
        best = argmin(&energy);
    }
    if !converged {
        converged = spread_converged(&energy, cfg.tol);
    }
    let x = pop[best].clone();
    let f = energy[best];
    let mut ranked: Vec<(Vec<f64>, f64)> = pop.into_iter().zip(energy).collect();
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1));
    ranked.dedup_by(|a, b| a.0 == b.0);
    DeOutcome {
        x,
        f,
        generations,
        evaluations,
        converged,
        ranked,
    }
}

/// `F ~ Cauchy(mu, 0.1)`, redrawn while nonpositive and truncated at 1.
fn cauchy_f(rng: &mut ChaCha8Rng, mu: f64) -> f64 {
    loop {
        let f = mu + 0.1 * (std::f64::consts::PI * (rng.random::<f64>() - 0.5)).tan();
        if f > 0.0 {
            return f.min(1.0);
        }
    }
}

/// `CR ~ N(mu, 0.1)` clipped to [0, 1].
fn normal_cr(rng: &mut ChaCha8Rng, mu: f64) -> f64 {
    let (u1, u2): (f64, f64) = (rng.random::<f64>(), rng.random::<f64>());
    let n = (-2.0 * (1.0 - u1).ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
    (mu + 0.1 * n).clamp(0.0, 1.0)
}

fn argmin(e: &[f64]) -> usize {
    let mut k = 0;
    for (i, v) in e.iter().enumerate() {
        if *v < e[k] {
            k = i;
        }
    }
    k
}

fn pick(rng: &mut ChaCha8Rng, n: usize, avoid: &[usize]) -> usize {
    loop {
        let r = rng.random_range(0..n);
        if !avoid.contains(&r) {
            return r;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LsConfig {
    /// Soft-l1 scale in residual units.
    pub loss_scale: f64,
    pub max_iter: usize,
    pub ftol: f64,
    pub xtol: f64,
    pub gtol: f64,
}

impl Default for LsConfig {
    fn default() -> Self {
        Self {
            loss_scale: 0.1,
            max_iter: 200,
            ftol: 1e-10,
            xtol: 1e-10,
            gtol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LsOutcome {
    pub x: Vec<f64>,
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// `sum c^2 (sqrt(1 + (r/c)^2) - 1)`.
pub fn soft_l1_cost(r: &[f64], c: f64) -> f64 {
    // c^2 (sqrt(1 + x) - 1) without cancellation at small x
    r.iter()
        .map(|v| {
            let x = (v / c).powi(2);
            c * c * x / ((1.0 + x).sqrt() + 1.0)
        })
        .sum()
}

fn jacobian<F>(resid: &F, x: &[f64], r0: &[f64], bounds: &Bounds) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    let cols = par::map_range(x.len(), |j| -> Result<Vec<f64>> {
        let mut h = 1e-7 * x[j].abs().max(1.0);
        if x[j] + h > bounds.hi[j] {
            h = -h;
        }
        let mut xp = x.to_vec();
        xp[j] += h;
        let rp = resid(&xp)?;
        Ok(rp.iter().zip(r0).map(|(a, b)| (a - b) / h).collect())
    });
    let mut jac = DMatrix::zeros(r0.len(), x.len());
    for (j, c) in cols.into_iter().enumerate() {
        jac.set_column(j, &DVector::from_vec(c?));
    }
    Ok(jac)
}

/// Bounded robust least squares. Soft-l1 is handled by reweighting the
/// residuals and Jacobian with `sqrt(rho')`; bounds by projection with an
/// active set of parameters pinned at a bound by the gradient. `canon` maps
/// each accepted point to its canonical form (it must not change the
/// residuals).
pub fn least_squares<F, C>(
    resid: F,
    x0: &[f64],
    bounds: &Bounds,
    cfg: &LsConfig,
    canon: C,
) -> Result<LsOutcome>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
    C: Fn(&mut [f64]),
{
    let c = cfg.loss_scale;
    let d = x0.len();
    let mut x = x0.to_vec();
    bounds.clip(&mut x);
    canon(&mut x);
    let mut r = resid(&x)?;
    let mut cost = soft_l1_cost(&r, c);
    let mut mu = -1.0;
    let mut nu = 2.0;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        iterations += 1;
        let jac = jacobian(&resid, &x, &r, bounds)?;
        let w: Vec<f64> = r
            .iter()
            .map(|v| (1.0 + (v / c).powi(2)).powf(-0.25))
            .collect();
        let mut jw = jac;
        for (i, wi) in w.iter().enumerate() {
            jw.row_mut(i).scale_mut(*wi);
        }
        let rw = DVector::from_iterator(r.len(), r.iter().zip(&w).map(|(a, b)| a * b));
        let g_full = jw.tr_mul(&rw);
        let free: Vec<usize> = (0..d)
            .filter(|&i| {
                let span = bounds.hi[i] - bounds.lo[i];
                let at_lo = x[i] <= bounds.lo[i] + 1e-12 * span && g_full[i] > 0.0;
                let at_hi = x[i] >= bounds.hi[i] - 1e-12 * span && g_full[i] < 0.0;
                !(at_lo || at_hi)
            })
            .collect();
        let gmax = free.iter().map(|&i| g_full[i].abs()).fold(0.0, f64::max);
        if free.is_empty() || gmax <= cfg.gtol * (1.0 + cost) {
            converged = true;
            break;
        }
        let a_full = jw.tr_mul(&jw);
        let k = free.len();
        let a = DMatrix::from_fn(k, k, |i, j| a_full[(free[i], free[j])]);
        let g = DVector::from_fn(k, |i, _| g_full[free[i]]);
        let dmax = (0..k).map(|i| a[(i, i)]).fold(0.0, f64::max).max(1e-300);
        if mu < 0.0 {
            mu = 1e-3;
        }
        let mut accepted = false;
        for _ in 0..40 {
            let mut m = a.clone();
            for i in 0..k {
                m[(i, i)] += mu * a[(i, i)].max(1e-12 * dmax);
            }
            let step = match m.cholesky() {
                Some(ch) => ch.solve(&(-&g)),
                None => {
                    mu *= nu;
                    nu *= 2.0;
                    continue;
                }
            };
            let mut xn = x.clone();
            for (i, &fi) in free.iter().enumerate() {
                xn[fi] += step[i];
            }
            bounds.clip(&mut xn);
            let delta = DVector::from_fn(k, |i, _| xn[free[i]] - x[free[i]]);
            let pred = -(g.dot(&delta) + 0.5 * delta.dot(&(&a * &delta)));
            let (rn, cn) = match resid(&xn) {
                Ok(rn) => {
                    let cn = soft_l1_cost(&rn, c);
                    (rn, if cn.is_finite() { cn } else { f64::INFINITY })
                }
                Err(_) => (Vec::new(), f64::INFINITY),
            };
            if cn < cost {
                let rho = if pred > 0.0 { (cost - cn) / pred } else { 1.0 };
                mu *= (1.0 - (2.0 * rho - 1.0).powi(3)).max(1.0 / 3.0);
                nu = 2.0;
                let small_f = cost - cn <= cfg.ftol * cost;
                let xnorm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                let small_x = delta.norm() <= cfg.xtol * (xnorm + cfg.xtol);
                canon(&mut xn);
                x = xn;
                r = rn;
                cost = cn;
                accepted = true;
                if small_f || small_x || cost == 0.0 {
                    converged = true;
                }
                break;
            }
            let xnorm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if delta.norm() <= cfg.xtol * (xnorm + cfg.xtol) {
                break;
            }
            mu *= nu;
            nu *= 2.0;
        }
        if !accepted {
            // no descent left at this point
            converged = true;
            break;
        }
        if converged {
            break;
        }
    }
    Ok(LsOutcome {
        x,
        cost,
        iterations,
        converged,
    })
}
