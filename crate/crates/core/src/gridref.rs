//! Independent grid oracle on the 1-d unit torus: discrete densities,
//! the reduced free energy, the Gibbs best response, the Boltzmann fixed
//! point, and explicit finite-volume steppers for both the quasistatic
//! density flow and the coupled descent-ascent flow.
//!
//! Everything here uses a uniform grid of N cells with midpoint
//! quadrature; cell i has center (i + 1/2)/N and width Δ = 1/N.

use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::manifold::Manifold;

/// Default cell count of the oracle grid.
pub const DEFAULT_CELLS: usize = 256;

/// Mass tolerance of the density invariant Σ vᵢΔ = 1.
pub const MASS_TOL: f64 = 1e-12;

/// A probability density sampled at the cell centers of a uniform grid
/// on the unit torus. Invariants: values are nonnegative and integrate
/// to 1 within [`MASS_TOL`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    values: Vec<f64>,
}

impl GridDensity {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidDensity("empty grid".into()));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidDensity(
                "values must be finite and nonnegative".into(),
            ));
        }
        let mass = values.iter().sum::<f64>() / values.len() as f64;
        if (mass - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidDensity(format!(
                "mass {mass} differs from 1 by more than {MASS_TOL}"
            )));
        }
        Ok(GridDensity { values })
    }

    /// Normalizes nonnegative values into a density.
    pub fn from_unnormalized(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidDensity("empty grid".into()));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidDensity(
                "values must be finite and nonnegative".into(),
            ));
        }
        let mass = values.iter().sum::<f64>() / values.len() as f64;
        if mass <= 0.0 {
            return Err(Error::InvalidDensity("zero total mass".into()));
        }
        for v in values.iter_mut() {
            *v /= mass;
        }
        Ok(GridDensity { values })
    }

    pub fn uniform(n: usize) -> Self {
        GridDensity {
            values: vec![1.0; n],
        }
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn cell_width(&self) -> f64 {
        1.0 / self.values.len() as f64
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn cell_center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.cell_width()
    }

    /// Negative entropy S(p) = Σ pᵢ log pᵢ Δ, with 0·log 0 = 0.
    pub fn neg_entropy(&self) -> f64 {
        let delta = self.cell_width();
        self.values
            .iter()
            .filter(|&&v| v > 0.0)
            .map(|&v| v * v.ln() * delta)
            .sum()
    }

    /// Total-variation distance (1/2)Σ|pᵢ − qᵢ|Δ.
    pub fn total_variation(&self, other: &GridDensity) -> Result<f64> {
        check_len(self.n(), other.n())?;
        let delta = self.cell_width();
        Ok(0.5
            * self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| (a - b).abs() * delta)
                .sum::<f64>())
    }

    /// sup-norm distance between density values.
    pub fn sup_distance(&self, other: &GridDensity) -> Result<f64> {
        check_len(self.n(), other.n())?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}

fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// The payoff kernel sampled at cell-center pairs: Kᵢⱼ = K(xᵢ, yⱼ).
#[derive(Debug, Clone)]
pub struct GridKernel {
    n: usize,
    k: Vec<f64>, // row-major, k[i*n + j] = K(x_i, y_j)
}

impl GridKernel {
    /// Tabulates a 1-d torus kernel on an n-cell grid.
    pub fn from_kernel(kernel: &Kernel, n: usize) -> Result<Self> {
        if kernel.manifold() != Manifold::Torus(1) {
            return Err(Error::ManifoldMismatch {
                expected: Manifold::Torus(1),
                found: kernel.manifold(),
            });
        }
        Ok(Self::from_fn(n, |x, y| kernel.eval_raw(&[x], &[y])))
    }

    /// Tabulates an arbitrary payoff function of cell centers.
    pub fn from_fn(n: usize, f: impl Fn(f64, f64) -> f64) -> Self {
        let delta = 1.0 / n as f64;
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            let x = (i as f64 + 0.5) * delta;
            for j in 0..n {
                let y = (j as f64 + 0.5) * delta;
                k[i * n + j] = f(x, y);
            }
        }
        GridKernel { n, k }
    }

    pub fn constant(n: usize, c: f64) -> Self {
        GridKernel {
            n,
            k: vec![c; n * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.k[i * self.n + j]
    }
}

/// V(yⱼ, p) = Σᵢ Kᵢⱼ pᵢ Δ — the potential seen by the maximizing player.
pub fn potential_v(p: &GridDensity, k: &GridKernel) -> Result<Vec<f64>> {
    check_len(k.n(), p.n())?;
    let n = k.n();
    let delta = p.cell_width();
    let mut v = vec![0.0; n];
    for (i, &pi) in p.values().iter().enumerate() {
        let w = pi * delta;
        let row = &k.k[i * n..(i + 1) * n];
        for (vj, kij) in v.iter_mut().zip(row) {
            *vj += kij * w;
        }
    }
    Ok(v)
}

/// U(xᵢ, q) = Σⱼ Kᵢⱼ qⱼ Δ — the potential seen by the minimizing player.
pub fn potential_u(q: &GridDensity, k: &GridKernel) -> Result<Vec<f64>> {
    check_len(k.n(), q.n())?;
    let n = k.n();
    let delta = q.cell_width();
    let mut u = vec![0.0; n];
    for (i, ui) in u.iter_mut().enumerate() {
        let row = &k.k[i * n..(i + 1) * n];
        *ui = row
            .iter()
            .zip(q.values())
            .map(|(kij, qj)| kij * qj)
            .sum::<f64>()
            * delta;
    }
    Ok(u)
}

/// Bilinear payoff E(p, q) = Σᵢⱼ pᵢ Kᵢⱼ qⱼ Δ².
pub fn energy(p: &GridDensity, q: &GridDensity, k: &GridKernel) -> Result<f64> {
    let u = potential_u(q, k)?;
    check_len(u.len(), p.n())?;
    let delta = p.cell_width();
    Ok(p.values()
        .iter()
        .zip(&u)
        .map(|(pi, ui)| pi * ui * delta)
        .sum())
}

/// Normalized Gibbs weights exp(w − max w) / (Σ exp(w − max w) Δ).
fn gibbs_from_log_weights(w: &[f64]) -> GridDensity {
    let delta = 1.0 / w.len() as f64;
    let max = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut values: Vec<f64> = w.iter().map(|&wi| (wi - max).exp()).collect();
    let mass: f64 = values.iter().sum::<f64>() * delta;
    for v in values.iter_mut() {
        *v /= mass;
    }
    GridDensity { values }
}

/// The Gibbs best response q[p] ∝ exp(β V(·, p)), log-sum-exp stabilized.
pub fn gibbs_response(p: &GridDensity, k: &GridKernel, beta: f64) -> Result<GridDensity> {
    check_beta(beta)?;
    let v = potential_v(p, k)?;
    let w: Vec<f64> = v.iter().map(|&vj| beta * vj).collect();
    Ok(gibbs_from_log_weights(&w))
}

fn check_beta(beta: f64) -> Result<()> {
    if beta <= 0.0 || !beta.is_finite() {
        return Err(Error::param("beta", "must be positive and finite"));
    }
    Ok(())
}

fn log_partition_of_potential(v: &[f64], beta: f64) -> f64 {
    let delta = 1.0 / v.len() as f64;
    let max = v
        .iter()
        .map(|&vj| beta * vj)
        .fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = v.iter().map(|&vj| (beta * vj - max).exp()).sum::<f64>() * delta;
    (max + sum.ln()) / beta
}

/// β⁻¹ log Z_q(p) with Z_q(p) = Σⱼ exp(β V(yⱼ, p)) Δ — the reduced
/// energy term of the free energy.
pub fn log_partition(p: &GridDensity, k: &GridKernel, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    let v = potential_v(p, k)?;
    Ok(log_partition_of_potential(&v, beta))
}

/// Reduced free energy F(p) = β⁻¹ log Z_q(p) + β⁻¹ S(p).
pub fn free_energy(p: &GridDensity, k: &GridKernel, beta: f64) -> Result<f64> {
    Ok(log_partition(p, k, beta)? + p.neg_entropy() / beta)
}

/// First variation Ψ(·, p) of the reduced energy term: Ψ = U(·, q[p]).
pub fn first_variation(p: &GridDensity, k: &GridKernel, beta: f64) -> Result<Vec<f64>> {
    let q = gibbs_response(p, k, beta)?;
    potential_u(&q, k)
}

/// Options of the damped Boltzmann fixed-point iteration.
#[derive(Debug, Clone, Copy)]
pub struct FixedPointOptions {
    /// Mixing weight of the Boltzmann map per iteration, in (0, 1].
    pub damping: f64,
    /// Stop when sup|T(p) − p| < tol.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        // undamped iteration can oscillate at large beta
        FixedPointOptions {
            damping: 0.5,
            tol: 1e-10,
            max_iter: 100_000,
        }
    }
}

/// Solution of the fixed-point problem together with iteration stats.
#[derive(Debug, Clone)]
pub struct FixedPoint {
    pub p: GridDensity,
    pub q: GridDensity,
    pub iterations: usize,
    pub residual: f64,
}

/// Solves the Boltzmann fixed point p* ∝ exp(−β Ψ(·, p*)) by damped
/// iteration p ← (1 − damping)p + damping·T(p) and returns the pair
/// (p*, q[p*]), which satisfies both halves of the equilibrium
/// fixed-point system within `tol`.
pub fn fixed_point_solve(
    k: &GridKernel,
    beta: f64,
    opts: &FixedPointOptions,
) -> Result<FixedPoint> {
    check_beta(beta)?;
    if opts.damping <= 0.0 || opts.damping > 1.0 || opts.damping.is_nan() {
        return Err(Error::param("damping", "must lie in (0, 1]"));
    }
    if opts.tol <= 0.0 || opts.tol.is_nan() {
        return Err(Error::param("tol", "must be positive"));
    }
    let n = k.n();
    let mut p = GridDensity::uniform(n);
    let mut residual = f64::INFINITY;
    for it in 1..=opts.max_iter {
        let v = potential_v(&p, k)?;
        let q = gibbs_from_log_weights(&v.iter().map(|&vj| beta * vj).collect::<Vec<_>>());
        let psi = potential_u(&q, k)?;
        let t = gibbs_from_log_weights(&psi.iter().map(|&ui| -beta * ui).collect::<Vec<_>>());
        residual = p.sup_distance(&t)?;
        if residual < opts.tol {
            return Ok(FixedPoint {
                p,
                q,
                iterations: it,
                residual,
            });
        }
        for (pi, ti) in p.values.iter_mut().zip(t.values()) {
            *pi = (1.0 - opts.damping) * *pi + opts.damping * ti;
        }
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iter,
        residual,
    })
}

/// One finite-volume step of the advection-diffusion law
/// ∂ₜρ = ∂ₓ(ρ ∂ₓφ + β⁻¹ ∂ₓρ) with periodic boundary, centered face
/// differences, and arithmetic-mean face densities. Returns the new cell
/// values and the clipped negative mass.
fn advect_diffuse(rho: &[f64], phi: &[f64], inv_beta: f64, dt: f64) -> (Vec<f64>, f64) {
    let n = rho.len();
    let delta = 1.0 / n as f64;
    // flux[i] lives at the face between cells i and i+1 (mod n)
    let mut flux = vec![0.0; n];
    for i in 0..n {
        let ip = (i + 1) % n;
        let dphi = (phi[ip] - phi[i]) / delta;
        let face_rho = 0.5 * (rho[i] + rho[ip]);
        let drho = (rho[ip] - rho[i]) / delta;
        flux[i] = -face_rho * dphi - inv_beta * drho;
    }
    let mass_before: f64 = rho.iter().sum();
    let mut out = vec![0.0; n];
    for i in 0..n {
        let im = (i + n - 1) % n;
        out[i] = rho[i] - dt / delta * (flux[i] - flux[im]);
    }
    let mut clipped = 0.0;
    for v in out.iter_mut() {
        if *v < 0.0 {
            clipped += -*v * delta;
            *v = 0.0;
        }
    }
    if clipped > 0.0 {
        // restore the pre-step mass exactly
        let mass_after: f64 = out.iter().sum();
        if mass_after > 0.0 {
            let scale = mass_before / mass_after;
            for v in out.iter_mut() {
                *v *= scale;
            }
        }
    }
    (out, clipped)
}

/// Largest stable explicit step for a potential profile `phi`:
/// dt ≤ 0.25 Δ² / (β⁻¹ + Δ · maxᵢ|∂ₓφ|).
fn max_stable_dt(phi: &[f64], inv_beta: f64) -> f64 {
    let n = phi.len();
    let delta = 1.0 / n as f64;
    let mut max_slope = 0.0f64;
    for i in 0..n {
        let ip = (i + 1) % n;
        max_slope = max_slope.max(((phi[ip] - phi[i]) / delta).abs());
    }
    0.25 * delta * delta / (inv_beta + delta * max_slope)
}

/// Result of one explicit finite-volume step.
#[derive(Debug, Clone)]
pub struct PdeStep {
    pub density: GridDensity,
    /// Negative mass removed by clipping (then renormalized away).
    pub clipped_mass: f64,
    /// The step size actually taken.
    pub dt: f64,
    /// Free energy of the *input* density, shared from the step's own
    /// potential evaluation so Lyapunov monitoring costs no extra matvec.
    pub free_energy: f64,
}

/// One explicit step of the quasistatic density flow
/// ∂ₜp = ∇·(p∇(Ψ(·, p) + β⁻¹ log p)). Mass is conserved exactly
/// (telescoping periodic fluxes); negatives are clipped and reported.
pub fn pde_step(p: &GridDensity, k: &GridKernel, beta: f64, dt: f64) -> Result<PdeStep> {
    pde_step_inner(p, k, beta, Some(dt))
}

/// Like [`pde_step`] with dt chosen automatically at the stability bound.
pub fn pde_step_auto(p: &GridDensity, k: &GridKernel, beta: f64) -> Result<PdeStep> {
    pde_step_inner(p, k, beta, None)
}

fn pde_step_inner(p: &GridDensity, k: &GridKernel, beta: f64, dt: Option<f64>) -> Result<PdeStep> {
    check_beta(beta)?;
    let v = potential_v(p, k)?;
    let q = gibbs_from_log_weights(&v.iter().map(|&vj| beta * vj).collect::<Vec<_>>());
    let psi = potential_u(&q, k)?;
    let inv_beta = 1.0 / beta;
    let max_dt = max_stable_dt(&psi, inv_beta);
    let dt = match dt {
        Some(dt) => {
            if dt <= 0.0 || dt.is_nan() {
                return Err(Error::param("dt", "must be positive"));
            }
            if dt > max_dt {
                return Err(Error::CflViolation { dt, max_dt });
            }
            dt
        }
        None => max_dt,
    };
    let free_energy = log_partition_of_potential(&v, beta) + p.neg_entropy() * inv_beta;
    let (values, clipped_mass) = advect_diffuse(p.values(), &psi, inv_beta, dt);
    Ok(PdeStep {
        density: GridDensity { values },
        clipped_mass,
        dt,
        free_energy,
    })
}

/// Stability bound of [`pde_step`] at the current density.
pub fn stable_dt(p: &GridDensity, k: &GridKernel, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    let psi = first_variation(p, k, beta)?;
    Ok(max_stable_dt(&psi, 1.0 / beta))
}

/// Result of one step of the coupled descent-ascent flow.
#[derive(Debug, Clone)]
pub struct CoupledPdeStep {
    pub p: GridDensity,
    pub q: GridDensity,
    pub clipped_mass_p: f64,
    pub clipped_mass_q: f64,
    pub dt: f64,
}

/// One explicit step of the coupled flow: p descends in the potential
/// U(·, q) while q ascends in V(·, p) (its flux potential is −V). Both
/// updates use the pre-step pair.
pub fn coupled_pde_step(
    p: &GridDensity,
    q: &GridDensity,
    k: &GridKernel,
    beta: f64,
    dt: f64,
) -> Result<CoupledPdeStep> {
    coupled_pde_step_inner(p, q, k, beta, Some(dt))
}

/// Like [`coupled_pde_step`] with dt at the joint stability bound.
pub fn coupled_pde_step_auto(
    p: &GridDensity,
    q: &GridDensity,
    k: &GridKernel,
    beta: f64,
) -> Result<CoupledPdeStep> {
    coupled_pde_step_inner(p, q, k, beta, None)
}

fn coupled_pde_step_inner(
    p: &GridDensity,
    q: &GridDensity,
    k: &GridKernel,
    beta: f64,
    dt: Option<f64>,
) -> Result<CoupledPdeStep> {
    check_beta(beta)?;
    let u = potential_u(q, k)?;
    let neg_v: Vec<f64> = potential_v(p, k)?.iter().map(|v| -v).collect();
    let inv_beta = 1.0 / beta;
    let max_dt = max_stable_dt(&u, inv_beta).min(max_stable_dt(&neg_v, inv_beta));
    let dt = match dt {
        Some(dt) => {
            if dt <= 0.0 || dt.is_nan() {
                return Err(Error::param("dt", "must be positive"));
            }
            if dt > max_dt {
                return Err(Error::CflViolation { dt, max_dt });
            }
            dt
        }
        None => max_dt,
    };
    let (pv, clipped_mass_p) = advect_diffuse(p.values(), &u, inv_beta, dt);
    let (qv, clipped_mass_q) = advect_diffuse(q.values(), &neg_v, inv_beta, dt);
    Ok(CoupledPdeStep {
        p: GridDensity { values: pv },
        q: GridDensity { values: qv },
        clipped_mass_p,
        clipped_mass_q,
        dt,
    })
}
