//! The two interacting-particle algorithms: the simultaneous Langevin
//! gradient descent-ascent scheme (LGDA) and the quasistatic Langevin
//! gradient descent scheme (QSLGD) with its warm-up / inner / snapshot
//! loop structure.
//!
//! Randomness is organized as one counter-based stream per
//! (seed, role, particle index), so trajectories are bitwise reproducible
//! and independent of any execution order over particles.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::manifold::{self, Initializer, Manifold, Point};

/// A population of particles on one manifold, stored as a flat
/// row-major coordinate buffer (n × d).
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    manifold: Manifold,
    dim: usize,
    coords: Vec<f64>,
}

impl Ensemble {
    pub fn from_points(points: &[Point]) -> Result<Self> {
        let first = points
            .first()
            .ok_or_else(|| Error::param("ensemble", "needs at least one particle"))?;
        let manifold = first.manifold();
        let dim = manifold.ambient_dim();
        let mut coords = Vec::with_capacity(points.len() * dim);
        for p in points {
            if p.manifold() != manifold {
                return Err(Error::ManifoldMismatch {
                    expected: manifold,
                    found: p.manifold(),
                });
            }
            coords.extend_from_slice(p.coords());
        }
        Ok(Ensemble {
            manifold,
            dim,
            coords,
        })
    }

    /// Draws n particles from an initializer, one RNG stream per particle.
    pub fn init(
        manifold: Manifold,
        n: usize,
        init: &Initializer,
        streams: &mut StreamBank,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::param("ensemble", "needs at least one particle"));
        }
        if streams.len() < n {
            return Err(Error::param(
                "ensemble",
                "stream bank smaller than ensemble",
            ));
        }
        let dim = manifold.ambient_dim();
        let mut coords = Vec::with_capacity(n * dim);
        for i in 0..n {
            let p = init.sample(manifold, streams.get_mut(i))?;
            coords.extend_from_slice(p.coords());
        }
        Ok(Ensemble {
            manifold,
            dim,
            coords,
        })
    }

    pub fn n(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn manifold(&self) -> Manifold {
        self.manifold
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn to_points(&self) -> Vec<Point> {
        self.iter_points()
            .map(|c| manifold::project(c, self.manifold).expect("ensemble invariant"))
            .collect()
    }

    /// Checks the membership invariant of every particle.
    pub fn is_valid(&self) -> bool {
        self.iter_points().all(|c| self.manifold.contains(c))
    }
}

/// All hyperparameters of one algorithm run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub n_x: usize,
    pub n_y: usize,
    /// Warm-up inner iterations before the first outer step.
    pub k0: usize,
    /// Equilibration inner iterations per outer step.
    pub k1: usize,
    /// Snapshot inner iterations per outer step.
    pub k2: usize,
    /// Outer iterations T.
    pub outer_iters: usize,
    pub h_x: f64,
    pub h_y: f64,
    /// Inverse temperature β > 0.
    pub beta: f64,
    pub seed: u64,
    pub init_x: Initializer,
    pub init_y: Initializer,
}

impl RunConfig {
    pub fn validate_for(&self, algorithm: Algorithm) -> Result<()> {
        if self.n_x == 0 || self.n_y == 0 {
            return Err(Error::param("n_x/n_y", "particle counts must be >= 1"));
        }
        if self.outer_iters == 0 {
            return Err(Error::param("t", "outer iteration count must be >= 1"));
        }
        if !(self.h_x > 0.0 && self.h_x.is_finite()) || !(self.h_y > 0.0 && self.h_y.is_finite()) {
            return Err(Error::param(
                "h_x/h_y",
                "step sizes must be positive and finite",
            ));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::param("beta", "must be positive and finite"));
        }
        if algorithm == Algorithm::Qslgd && self.k2 == 0 {
            return Err(Error::param(
                "k2",
                "qslgd needs at least one snapshot iteration",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Lgda,
    Qslgd,
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lgda" => Ok(Algorithm::Lgda),
            "qslgd" => Ok(Algorithm::Qslgd),
            _ => Err(Error::param(
                "algorithm",
                format!("expected `lgda` or `qslgd`, got `{s}`"),
            )),
        }
    }
}

/// Which particle population a stream bank drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamRole {
    XParticles = 0,
    YParticles = 1,
}

/// One independent ChaCha stream per particle, derived from
/// (seed, role, index). Parallel particle updates stay bitwise
/// deterministic because each particle only consumes its own stream.
#[derive(Debug, Clone)]
pub struct StreamBank {
    streams: Vec<ChaCha8Rng>,
}

impl StreamBank {
    pub fn new(seed: u64, role: StreamRole, n: usize) -> Self {
        let streams = (0..n as u64)
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(((role as u64) << 48) | i);
                rng
            })
            .collect();
        StreamBank { streams }
    }

    pub fn len(&self) -> usize {
        self.streams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.streams.is_empty()
    }

    pub fn get_mut(&mut self, i: usize) -> &mut ChaCha8Rng {
        &mut self.streams[i]
    }
}

/// The pooled Y snapshots feeding one outer X update: k2 consecutive
/// copies of the Y ensemble, ordered snapshot-major
/// (buffer[s·n_y + i] = Y after snapshot sweep s+1, particle i).
#[derive(Debug, Clone)]
pub struct SnapshotBuffer {
    manifold: Manifold,
    dim: usize,
    coords: Vec<f64>,
    per_snapshot: usize,
}

impl SnapshotBuffer {
    fn with_capacity(manifold: Manifold, dim: usize, k2: usize, n_y: usize) -> Self {
        SnapshotBuffer {
            manifold,
            dim,
            coords: Vec::with_capacity(k2 * n_y * dim),
            per_snapshot: n_y,
        }
    }

    fn push_snapshot(&mut self, y: &Ensemble) {
        debug_assert_eq!(y.n(), self.per_snapshot);
        self.coords.extend_from_slice(&y.coords);
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn manifold(&self) -> Manifold {
        self.manifold
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }
}

/// Final state of a run plus step-count instrumentation.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub x: Ensemble,
    pub y: Ensemble,
    /// Number of inner (Y-side) sweeps executed.
    pub inner_updates: u64,
    /// Number of outer (X-side) sweeps executed.
    pub outer_updates: u64,
}

/// Receives the state after initialization (iteration 0) and after every
/// outer iteration.
pub trait Observer {
    fn record(&mut self, outer_iter: usize, x: &Ensemble, y: &Ensemble);
}

/// No-op observer.
impl Observer for () {
    fn record(&mut self, _outer_iter: usize, _x: &Ensemble, _y: &Ensemble) {}
}

impl<F: FnMut(usize, &Ensemble, &Ensemble)> Observer for F {
    fn record(&mut self, outer_iter: usize, x: &Ensemble, y: &Ensemble) {
        self(outer_iter, x, y)
    }
}

/// One ascent sweep over Y: every particle moves along the ensemble-
/// averaged +∇ᵧK drift with noise sqrt(2 h_y β⁻¹). X enters only through
/// its precomputed statistics, so Y particles never interact.
fn ascent_sweep(
    kernel: &Kernel,
    xstats: &crate::kernel::XStats,
    y: &mut Ensemble,
    h_y: f64,
    beta: f64,
    streams: &mut StreamBank,
) -> Result<()> {
    let d = y.dim;
    let noise_coeff = (1.0 / beta).sqrt();
    let mut drift = vec![0.0; d];
    for i in 0..y.n() {
        let range = i * d..(i + 1) * d;
        kernel.mean_grad_y(xstats, &y.coords[range.clone()], &mut drift);
        manifold::langevin_step_in_place(
            y.manifold,
            &mut y.coords[range],
            &drift,
            h_y,
            noise_coeff,
            streams.get_mut(i),
        )?;
    }
    Ok(())
}

/// One descent sweep over X against fixed Y statistics (drift −∇ₓK).
fn descent_sweep(
    kernel: &Kernel,
    ystats: &crate::kernel::YStats,
    x: &mut Ensemble,
    h_x: f64,
    beta: f64,
    streams: &mut StreamBank,
) -> Result<()> {
    let d = x.dim;
    let noise_coeff = (1.0 / beta).sqrt();
    let mut drift = vec![0.0; d];
    for i in 0..x.n() {
        let range = i * d..(i + 1) * d;
        kernel.mean_grad_x(&x.coords[range.clone()], ystats, &mut drift);
        for g in drift.iter_mut() {
            *g = -*g;
        }
        manifold::langevin_step_in_place(
            x.manifold,
            &mut x.coords[range],
            &drift,
            h_x,
            noise_coeff,
            streams.get_mut(i),
        )?;
    }
    Ok(())
}

fn check_ensembles(kernel: &Kernel, x: &Ensemble, y: &Ensemble) -> Result<()> {
    for e in [x, y] {
        if e.manifold() != kernel.manifold() {
            return Err(Error::ManifoldMismatch {
                expected: kernel.manifold(),
                found: e.manifold(),
            });
        }
    }
    Ok(())
}

/// One simultaneous descent-ascent step: both drifts are evaluated
/// against the pre-update ensembles, then X descends and Y ascends.
#[allow(clippy::too_many_arguments)]
pub fn lgda_step(
    x: &Ensemble,
    y: &Ensemble,
    kernel: &Kernel,
    h_x: f64,
    h_y: f64,
    beta: f64,
    x_streams: &mut StreamBank,
    y_streams: &mut StreamBank,
) -> Result<(Ensemble, Ensemble)> {
    check_ensembles(kernel, x, y)?;
    let mut new_x = x.clone();
    let mut new_y = y.clone();
    lgda_step_in_place(
        &mut new_x, &mut new_y, kernel, h_x, h_y, beta, x_streams, y_streams,
    )?;
    Ok((new_x, new_y))
}

#[allow(clippy::too_many_arguments)]
fn lgda_step_in_place(
    x: &mut Ensemble,
    y: &mut Ensemble,
    kernel: &Kernel,
    h_x: f64,
    h_y: f64,
    beta: f64,
    x_streams: &mut StreamBank,
    y_streams: &mut StreamBank,
) -> Result<()> {
    let xstats = kernel.x_stats(x.iter_points());
    let ystats = kernel.y_stats(y.iter_points());
    descent_sweep(kernel, &ystats, x, h_x, beta, x_streams)?;
    ascent_sweep(kernel, &xstats, y, h_y, beta, y_streams)?;
    Ok(())
}

/// Runs `steps` inner ascent iterations on Y against a frozen X.
pub fn inner_equilibrate(
    x: &Ensemble,
    mut y: Ensemble,
    steps: usize,
    kernel: &Kernel,
    h_y: f64,
    beta: f64,
    y_streams: &mut StreamBank,
) -> Result<Ensemble> {
    check_ensembles(kernel, x, &y)?;
    let xstats = kernel.x_stats(x.iter_points());
    for _ in 0..steps {
        ascent_sweep(kernel, &xstats, &mut y, h_y, beta, y_streams)?;
    }
    Ok(y)
}

/// Runs k2 further inner ascent iterations, appending the whole Y
/// ensemble to the snapshot buffer after each one.
pub fn collect_snapshots(
    x: &Ensemble,
    mut y: Ensemble,
    k2: usize,
    kernel: &Kernel,
    h_y: f64,
    beta: f64,
    y_streams: &mut StreamBank,
) -> Result<(Ensemble, SnapshotBuffer)> {
    check_ensembles(kernel, x, &y)?;
    if k2 == 0 {
        return Err(Error::param("k2", "needs at least one snapshot iteration"));
    }
    let xstats = kernel.x_stats(x.iter_points());
    let mut buffer = SnapshotBuffer::with_capacity(y.manifold, y.dim, k2, y.n());
    for _ in 0..k2 {
        ascent_sweep(kernel, &xstats, &mut y, h_y, beta, y_streams)?;
        buffer.push_snapshot(&y);
    }
    Ok((y, buffer))
}

/// One outer descent step of every X particle against the snapshot
/// empirical measure.
pub fn outer_step(
    mut x: Ensemble,
    buffer: &SnapshotBuffer,
    kernel: &Kernel,
    h_x: f64,
    beta: f64,
    x_streams: &mut StreamBank,
) -> Result<Ensemble> {
    if buffer.is_empty() {
        return Err(Error::param("buffer", "snapshot buffer is empty"));
    }
    if buffer.manifold() != kernel.manifold() {
        return Err(Error::ManifoldMismatch {
            expected: kernel.manifold(),
            found: buffer.manifold(),
        });
    }
    let ystats = kernel.y_stats(buffer.iter_points());
    descent_sweep(kernel, &ystats, &mut x, h_x, beta, x_streams)?;
    Ok(x)
}

/// Samples both initial ensembles and builds their stream banks; exposed
/// so tests can recompose the run drivers step by step.
pub fn init_ensembles(
    cfg: &RunConfig,
    kernel: &Kernel,
) -> Result<(Ensemble, Ensemble, StreamBank, StreamBank)> {
    let m = kernel.manifold();
    let mut x_streams = StreamBank::new(cfg.seed, StreamRole::XParticles, cfg.n_x);
    let mut y_streams = StreamBank::new(cfg.seed, StreamRole::YParticles, cfg.n_y);
    let x = Ensemble::init(m, cfg.n_x, &cfg.init_x, &mut x_streams)?;
    let y = Ensemble::init(m, cfg.n_y, &cfg.init_y, &mut y_streams)?;
    Ok((x, y, x_streams, y_streams))
}

fn blow_up_at(outer_iter: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::NumericalBlowUp => Error::BlowUpAt { outer_iter },
        other => other,
    }
}

/// The quasistatic run driver: k0 warm-up inner iterations, then T outer
/// iterations of (k1 inner sweeps, k2 snapshot sweeps, one outer X
/// sweep), with the Y ensemble carried across outer iterations. The
/// observer fires at iteration 0 (after warm-up) and after every outer
/// step.
pub fn run_qslgd(
    cfg: &RunConfig,
    kernel: &Kernel,
    observer: &mut impl Observer,
) -> Result<RunOutput> {
    cfg.validate_for(Algorithm::Qslgd)?;
    let (mut x, mut y, mut x_streams, mut y_streams) = init_ensembles(cfg, kernel)?;
    let mut inner_updates = 0u64;
    let mut outer_updates = 0u64;

    y = inner_equilibrate(&x, y, cfg.k0, kernel, cfg.h_y, cfg.beta, &mut y_streams)
        .map_err(blow_up_at(0))?;
    inner_updates += cfg.k0 as u64;
    observer.record(0, &x, &y);

    for t in 1..=cfg.outer_iters {
        let wrap = blow_up_at(t);
        y = inner_equilibrate(&x, y, cfg.k1, kernel, cfg.h_y, cfg.beta, &mut y_streams)
            .map_err(&wrap)?;
        let (carried, buffer) =
            collect_snapshots(&x, y, cfg.k2, kernel, cfg.h_y, cfg.beta, &mut y_streams)
                .map_err(&wrap)?;
        y = carried;
        x = outer_step(x, &buffer, kernel, cfg.h_x, cfg.beta, &mut x_streams).map_err(&wrap)?;
        inner_updates += (cfg.k1 + cfg.k2) as u64;
        outer_updates += 1;
        observer.record(t, &x, &y);
    }
    Ok(RunOutput {
        x,
        y,
        inner_updates,
        outer_updates,
    })
}

/// The descent-ascent run driver: T simultaneous steps with the same
/// initialization, observer, and determinism contracts as [`run_qslgd`]
/// (k0, k1, k2 are ignored).
pub fn run_lgda(
    cfg: &RunConfig,
    kernel: &Kernel,
    observer: &mut impl Observer,
) -> Result<RunOutput> {
    cfg.validate_for(Algorithm::Lgda)?;
    let (mut x, mut y, mut x_streams, mut y_streams) = init_ensembles(cfg, kernel)?;
    observer.record(0, &x, &y);
    for t in 1..=cfg.outer_iters {
        lgda_step_in_place(
            &mut x,
            &mut y,
            kernel,
            cfg.h_x,
            cfg.h_y,
            cfg.beta,
            &mut x_streams,
            &mut y_streams,
        )
        .map_err(blow_up_at(t))?;
        observer.record(t, &x, &y);
    }
    Ok(RunOutput {
        x,
        y,
        inner_updates: cfg.outer_iters as u64,
        outer_updates: cfg.outer_iters as u64,
    })
}

/// Runs the selected algorithm.
pub fn run(
    algorithm: Algorithm,
    cfg: &RunConfig,
    kernel: &Kernel,
    observer: &mut impl Observer,
) -> Result<RunOutput> {
    match algorithm {
        Algorithm::Lgda => run_lgda(cfg, kernel, observer),
        Algorithm::Qslgd => run_qslgd(cfg, kernel, observer),
    }
}
