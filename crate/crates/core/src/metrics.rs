//! Evaluation metrics: histogram KL divergence against a reference
//! density, the Nikaido-Isoda error of an ensemble pair, and the inverse
//! temperature threshold that guarantees an ε-approximate equilibrium.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dynamics::Ensemble;
use crate::error::{Error, Result};
use crate::gridref::GridDensity;
use crate::kernel::Kernel;
use crate::manifold::{self, Manifold, Point};

/// Equi-width bin counts of a 1-d torus ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    counts: Vec<u64>,
}

impl Histogram {
    pub fn from_ensemble(e: &Ensemble, bins: usize) -> Result<Self> {
        if e.manifold() != Manifold::Torus(1) {
            return Err(Error::ManifoldMismatch {
                expected: Manifold::Torus(1),
                found: e.manifold(),
            });
        }
        if bins == 0 {
            return Err(Error::param("bins", "need at least one bin"));
        }
        let mut counts = vec![0u64; bins];
        for p in e.iter_points() {
            let b = ((p[0] * bins as f64) as usize).min(bins - 1);
            counts[b] += 1;
        }
        Ok(Histogram { counts })
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Bin edge b/B of bin b.
    pub fn edge(&self, b: usize) -> f64 {
        b as f64 / self.bins() as f64
    }
}

/// The reference distribution a histogram is compared against.
#[derive(Debug, Clone, Copy)]
pub enum Reference<'a> {
    Uniform,
    Grid(&'a GridDensity),
}

impl Reference<'_> {
    /// Probability mass of bin [b/B, (b+1)/B). Grid references integrate
    /// the piecewise-constant density exactly, including cells that
    /// straddle bin edges.
    fn bin_mass(&self, b: usize, bins: usize) -> f64 {
        match self {
            Reference::Uniform => 1.0 / bins as f64,
            Reference::Grid(g) => {
                let lo = b as f64 / bins as f64;
                let hi = (b + 1) as f64 / bins as f64;
                let delta = g.cell_width();
                let first = (lo / delta).floor() as usize;
                let last = ((hi / delta).ceil() as usize).min(g.n());
                let mut mass = 0.0;
                for i in first..last {
                    let cell_lo = i as f64 * delta;
                    let cell_hi = cell_lo + delta;
                    let overlap = (hi.min(cell_hi) - lo.max(cell_lo)).max(0.0);
                    mass += g.values()[i] * overlap;
                }
                mass
            }
        }
    }
}

/// KL divergence of the binned empirical distribution of `e` from the
/// reference binned the same way: Σ p̂_b log(p̂_b / r_b) with 0·log 0 = 0.
/// An empty reference bin with a nonempty empirical bin yields +∞.
pub fn kl_to_reference(e: &Ensemble, bins: usize, reference: Reference<'_>) -> Result<f64> {
    let hist = Histogram::from_ensemble(e, bins)?;
    let n = hist.total() as f64;
    let mut kl = 0.0;
    for (b, &c) in hist.counts().iter().enumerate() {
        if c == 0 {
            continue;
        }
        let ph = c as f64 / n;
        let r = reference.bin_mass(b, bins);
        if r <= 0.0 {
            return Ok(f64::INFINITY);
        }
        kl += ph * (ph / r).ln();
    }
    Ok(kl)
}

/// Median KL of `trials` histograms of n i.i.d. uniform draws against
/// the uniform reference — the sampling floor any n-particle ensemble is
/// judged against. A chi-square approximation puts the mean near
/// (bins − 1)/(2n).
pub fn kl_sampling_floor(n: usize, bins: usize, trials: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut kls: Vec<f64> = (0..trials)
        .map(|_| {
            let mut counts = vec![0u64; bins];
            for _ in 0..n {
                let u: f64 = rand::Rng::random(&mut rng);
                counts[((u * bins as f64) as usize).min(bins - 1)] += 1;
            }
            counts
                .iter()
                .filter(|&&c| c > 0)
                .map(|&c| {
                    let ph = c as f64 / n as f64;
                    ph * (ph * bins as f64).ln()
                })
                .sum()
        })
        .collect();
    kls.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = kls.len() / 2;
    if kls.len() % 2 == 1 {
        kls[mid]
    } else {
        0.5 * (kls[mid - 1] + kls[mid])
    }
}

/// Tuning of the Nikaido-Isoda estimator.
#[derive(Debug, Clone)]
pub struct EstimatorConfig {
    /// Multi-start count of the sphere optimizer.
    pub starts: usize,
    /// Gradient iterations per start.
    pub steps: usize,
    /// Initial step size (halved on non-improvement).
    pub step_size: f64,
    /// Seed of the start sampler.
    pub seed: u64,
    /// Dense evaluation points on the 1-d torus.
    pub torus_grid: usize,
    /// Fractional shift of the torus evaluation grid origin.
    pub torus_grid_offset: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            starts: 32,
            steps: 500,
            step_size: 0.05,
            seed: 0,
            torus_grid: 4096,
            torus_grid_offset: 0.0,
        }
    }
}

/// How an NI value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NiEstimateKind {
    /// Exact up to the dense torus grid resolution.
    DenseGrid,
    /// Multi-start local search: a lower bound of the true error.
    MultiStartLowerBound,
}

#[derive(Debug, Clone)]
pub struct NiDiagnostics {
    pub kind: NiEstimateKind,
    /// Candidate starts (or grid points) examined per side.
    pub starts: usize,
    /// Total gradient iterations executed across starts.
    pub iterations: usize,
    /// Starts whose final value lies within 1e-4 of the best, minimized
    /// over the two sides; low support flags optimizer failure.
    pub best_support: usize,
}

/// NI(p̂, q̂) = max_y V(y, p̂) − min_x U(x, q̂), together with the
/// achieving points and estimator diagnostics.
#[derive(Debug, Clone)]
pub struct NiReport {
    pub ni_value: f64,
    pub argmax_y: Point,
    pub argmin_x: Point,
    pub diagnostics: NiDiagnostics,
}

/// Nikaido-Isoda error of an ensemble pair. The supremum over mixed
/// strategies collapses to a pointwise extremum because the payoff is
/// linear in each distribution, so sup_{q'} E(p̂, q') = max_y V(y, p̂)
/// and inf_{p'} E(p', q̂) = min_x U(x, q̂).
pub fn ni_error(
    x: &Ensemble,
    y: &Ensemble,
    kernel: &Kernel,
    opt: &EstimatorConfig,
) -> Result<NiReport> {
    for e in [x, y] {
        if e.manifold() != kernel.manifold() {
            return Err(Error::ManifoldMismatch {
                expected: kernel.manifold(),
                found: e.manifold(),
            });
        }
    }
    let xstats = kernel.x_stats(x.iter_points());
    let ystats = kernel.y_stats(y.iter_points());
    match kernel.manifold() {
        Manifold::Torus(1) => {
            let g = opt.torus_grid.max(1);
            let mut best_v = f64::NEG_INFINITY;
            let mut best_u = f64::INFINITY;
            let mut arg_v = 0.0;
            let mut arg_u = 0.0;
            for i in 0..g {
                let t = manifold::wrap_unit((i as f64 + opt.torus_grid_offset) / g as f64);
                let v = kernel.mean_payoff_y(&xstats, &[t]);
                if v > best_v {
                    best_v = v;
                    arg_v = t;
                }
                let u = kernel.mean_payoff_x(&[t], &ystats);
                if u < best_u {
                    best_u = u;
                    arg_u = t;
                }
            }
            let support_v = {
                let mut c = 0;
                for i in 0..g {
                    let t = manifold::wrap_unit((i as f64 + opt.torus_grid_offset) / g as f64);
                    if kernel.mean_payoff_y(&xstats, &[t]) >= best_v - 1e-4 {
                        c += 1;
                    }
                }
                c
            };
            Ok(NiReport {
                ni_value: best_v - best_u,
                argmax_y: manifold::project(&[arg_v], Manifold::Torus(1))?,
                argmin_x: manifold::project(&[arg_u], Manifold::Torus(1))?,
                diagnostics: NiDiagnostics {
                    kind: NiEstimateKind::DenseGrid,
                    starts: g,
                    iterations: 0,
                    best_support: support_v,
                },
            })
        }
        m @ Manifold::Sphere(_) => {
            let mut rng = ChaCha8Rng::seed_from_u64(opt.seed);
            let maximize = multi_start_extremum(
                m,
                opt,
                &mut rng,
                |y| kernel.mean_payoff_y(&xstats, y),
                |y, out| kernel.mean_grad_y(&xstats, y, out),
                1.0,
            )?;
            let minimize = multi_start_extremum(
                m,
                opt,
                &mut rng,
                |x| kernel.mean_payoff_x(x, &ystats),
                |x, out| kernel.mean_grad_x(x, &ystats, out),
                -1.0,
            )?;
            Ok(NiReport {
                ni_value: maximize.value - minimize.value,
                argmax_y: maximize.arg,
                argmin_x: minimize.arg,
                diagnostics: NiDiagnostics {
                    kind: NiEstimateKind::MultiStartLowerBound,
                    starts: opt.starts,
                    iterations: maximize.iterations + minimize.iterations,
                    best_support: maximize.support.min(minimize.support),
                },
            })
        }
        m => Err(Error::param(
            "kernel",
            format!("NI estimator unsupported on {m}"),
        )),
    }
}

struct Extremum {
    value: f64,
    arg: Point,
    iterations: usize,
    support: usize,
}

/// Projected gradient search on the sphere from `starts` uniform starts.
/// `sign` = +1 maximizes, −1 minimizes. The gradient is projected onto
/// the tangent space, the step retracted by normalization, and the step
/// size halved whenever the move fails to improve.
fn multi_start_extremum(
    m: Manifold,
    opt: &EstimatorConfig,
    rng: &mut ChaCha8Rng,
    f: impl Fn(&[f64]) -> f64,
    grad: impl Fn(&[f64], &mut [f64]),
    sign: f64,
) -> Result<Extremum> {
    let d = m.ambient_dim();
    let mut finals: Vec<(f64, Vec<f64>)> = Vec::with_capacity(opt.starts);
    let mut iterations = 0usize;
    for _ in 0..opt.starts.max(1) {
        let mut cur = manifold::sample_uniform(m, rng).coords().to_vec();
        let mut val = f(&cur);
        let mut step = opt.step_size;
        let mut g = vec![0.0; d];
        let mut cand = vec![0.0; d];
        for _ in 0..opt.steps {
            iterations += 1;
            grad(&cur, &mut g);
            // tangent projection g - (g.y) y
            let radial: f64 = g.iter().zip(&cur).map(|(a, b)| a * b).sum();
            for (gi, ci) in g.iter_mut().zip(&cur) {
                *gi -= radial * ci;
            }
            for i in 0..d {
                cand[i] = cur[i] + sign * step * g[i];
            }
            if manifold::project_in_place(m, &mut cand).is_err() {
                step *= 0.5;
                continue;
            }
            let cval = f(&cand);
            if sign * (cval - val) > 0.0 {
                cur.copy_from_slice(&cand);
                val = cval;
            } else {
                step *= 0.5;
                if step < 1e-12 {
                    break;
                }
            }
        }
        finals.push((val, cur));
    }
    let best = finals
        .iter()
        .map(|(v, _)| sign * v)
        .fold(f64::NEG_INFINITY, f64::max);
    let support = finals
        .iter()
        .filter(|(v, _)| sign * v >= best - 1e-4)
        .count();
    let (value, arg) = finals
        .into_iter()
        .max_by(|a, b| (sign * a.0).partial_cmp(&(sign * b.0)).unwrap())
        .expect("at least one start");
    Ok(Extremum {
        value,
        arg: manifold::project(&arg, m)?,
        iterations,
        support,
    })
}

/// The inverse-temperature threshold above which the regularized
/// equilibrium is an ε-approximate equilibrium of the unregularized
/// game:
///
/// β > (4/ε) · log( (2(1 − V_δ)/V_δ) · (4 C_K/ε − 1) ),  δ = ε/(2 Lip(K))
pub fn beta_threshold(kernel: &Kernel, m: Manifold, eps: f64) -> Result<f64> {
    let c = kernel.constants();
    beta_threshold_from_constants(c.c_k, c.lip_k, m, eps)
}

/// [`beta_threshold`] with explicit constants, usable for scaled kernels.
pub fn beta_threshold_from_constants(c_k: f64, lip_k: f64, m: Manifold, eps: f64) -> Result<f64> {
    if c_k <= 0.0 || c_k.is_nan() || lip_k <= 0.0 || lip_k.is_nan() {
        return Err(Error::BoundUndefined(
            "kernel bound and Lipschitz constant must be positive".into(),
        ));
    }
    if !(eps > 0.0 && eps < 4.0 * c_k) {
        return Err(Error::BoundUndefined(format!(
            "eps must lie in (0, 4 C_K) = (0, {})",
            4.0 * c_k
        )));
    }
    let delta = eps / (2.0 * lip_k);
    let v_delta = manifold::ball_volume_fraction(m, delta)?;
    if !(v_delta > 0.0 && v_delta < 1.0) {
        return Err(Error::BoundUndefined(format!(
            "ball volume fraction {v_delta} must lie strictly between 0 and 1"
        )));
    }
    Ok(4.0 / eps * (2.0 * (1.0 - v_delta) / v_delta * (4.0 * c_k / eps - 1.0)).ln())
}
