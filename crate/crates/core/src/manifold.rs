//! Strategy-space geometry: the flat torus (R/Z)^d and the unit sphere
//! S^{d-1}, with uniform sampling, constraint projection, and the noisy
//! Euler-Maruyama update used by the particle dynamics.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Tolerance of the sphere membership invariant (|‖x‖ − 1| ≤ tol).
pub const SPHERE_NORM_TOL: f64 = 1e-12;

/// A compact strategy space. `Sphere(d)` is the unit sphere S^{d-1}
/// embedded in R^d, so its points carry `d` ambient coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Manifold {
    Torus(usize),
    Sphere(usize),
}

impl Manifold {
    /// Length of the coordinate vector of a point on this manifold.
    pub fn ambient_dim(&self) -> usize {
        match *self {
            Manifold::Torus(d) | Manifold::Sphere(d) => d,
        }
    }

    /// Total Riemannian measure: 1 for the unit torus, the surface area
    /// of S^{d-1} for the sphere.
    pub fn total_measure(&self) -> f64 {
        match *self {
            Manifold::Torus(_) => 1.0,
            Manifold::Sphere(d) => 2.0 * PI.powf(d as f64 / 2.0) / gamma_half(d),
        }
    }

    /// Whether `coords` satisfies the membership invariant.
    pub fn contains(&self, coords: &[f64]) -> bool {
        if coords.len() != self.ambient_dim() {
            return false;
        }
        match self {
            Manifold::Torus(_) => coords.iter().all(|&c| (0.0..1.0).contains(&c)),
            Manifold::Sphere(_) => {
                let norm = coords.iter().map(|c| c * c).sum::<f64>().sqrt();
                (norm - 1.0).abs() <= SPHERE_NORM_TOL
            }
        }
    }

    fn check_dims(&self, len: usize) -> Result<()> {
        if len != self.ambient_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.ambient_dim(),
                found: len,
            });
        }
        Ok(())
    }
}

impl fmt::Display for Manifold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Manifold::Torus(d) => write!(f, "torus:{d}"),
            Manifold::Sphere(d) => write!(f, "sphere:{d}"),
        }
    }
}

impl FromStr for Manifold {
    type Err = Error;

    /// Parses the config syntax `torus:d` / `sphere:d` (`d` is the ambient
    /// dimension, so `sphere:3` is S²).
    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            Error::param(
                "manifold",
                format!("expected `torus:d` or `sphere:d`, got `{s}`"),
            )
        };
        let (kind, dim) = s.split_once(':').ok_or_else(bad)?;
        let d: usize = dim.parse().map_err(|_| bad())?;
        match kind {
            "torus" if d >= 1 => Ok(Manifold::Torus(d)),
            "sphere" if d >= 2 => Ok(Manifold::Sphere(d)),
            "torus" => Err(Error::param("manifold", "torus dimension must be >= 1")),
            "sphere" => Err(Error::param(
                "manifold",
                "sphere ambient dimension must be >= 2",
            )),
            _ => Err(bad()),
        }
    }
}

/// Γ(d/2) for integer d ≥ 1, by the recursion Γ(x+1) = xΓ(x).
fn gamma_half(d: usize) -> f64 {
    let mut value = if d.is_multiple_of(2) { 1.0 } else { PI.sqrt() };
    let mut x = if d.is_multiple_of(2) { 1.0 } else { 0.5 };
    while x + 0.5 < d as f64 / 2.0 {
        value *= x;
        x += 1.0;
    }
    value
}

/// A location on a strategy space. Constructed only through [`project`]
/// and the samplers, so the membership invariant always holds.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    coords: Vec<f64>,
    manifold: Manifold,
}

impl Point {
    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn manifold(&self) -> Manifold {
        self.manifold
    }

    pub(crate) fn from_parts_unchecked(coords: Vec<f64>, manifold: Manifold) -> Self {
        debug_assert!(manifold.contains(&coords));
        Point { coords, manifold }
    }
}

/// Wraps one coordinate into [0, 1). `rem_euclid` can round up to exactly
/// 1.0 for tiny negative inputs, which would break the torus invariant.
#[inline]
pub(crate) fn wrap_unit(x: f64) -> f64 {
    let r = x.rem_euclid(1.0);
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// In-place constraint projection on a raw coordinate vector.
pub(crate) fn project_in_place(m: Manifold, coords: &mut [f64]) -> Result<()> {
    if coords.iter().any(|c| !c.is_finite()) {
        return Err(Error::NumericalBlowUp);
    }
    match m {
        Manifold::Torus(_) => {
            for c in coords.iter_mut() {
                *c = wrap_unit(*c);
            }
        }
        Manifold::Sphere(_) => {
            let norm = coords.iter().map(|c| c * c).sum::<f64>().sqrt();
            if norm == 0.0 || !norm.is_finite() {
                return Err(Error::DegenerateProjection);
            }
            for c in coords.iter_mut() {
                *c /= norm;
            }
        }
    }
    Ok(())
}

/// Maps a raw ambient vector onto the manifold: coordinatewise mod-1
/// reduction on the torus, normalization on the sphere.
pub fn project(raw: &[f64], m: Manifold) -> Result<Point> {
    m.check_dims(raw.len())?;
    let mut coords = raw.to_vec();
    project_in_place(m, &mut coords)?;
    Ok(Point::from_parts_unchecked(coords, m))
}

/// Draws one point from the uniform distribution on the manifold:
/// i.i.d. uniform coordinates on the torus, a normalized standard
/// Gaussian vector on the sphere.
pub fn sample_uniform<R: Rng + ?Sized>(m: Manifold, rng: &mut R) -> Point {
    let d = m.ambient_dim();
    match m {
        Manifold::Torus(_) => {
            let coords = (0..d).map(|_| rng.random::<f64>()).collect();
            Point::from_parts_unchecked(coords, m)
        }
        Manifold::Sphere(_) => loop {
            let mut coords: Vec<f64> = (0..d)
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect();
            if project_in_place(m, &mut coords).is_ok() {
                return Point::from_parts_unchecked(coords, m);
            }
        },
    }
}

/// Uniform sampling restricted to the sub-box ∏[lo_i, hi_i) of the torus.
pub fn sample_box<R: Rng + ?Sized>(
    m: Manifold,
    lo: &[f64],
    hi: &[f64],
    rng: &mut R,
) -> Result<Point> {
    let d = match m {
        Manifold::Torus(d) => d,
        Manifold::Sphere(_) => {
            return Err(Error::param("init", "box initializers are torus-only"));
        }
    };
    m.check_dims(lo.len())?;
    m.check_dims(hi.len())?;
    for i in 0..d {
        if !(0.0 <= lo[i] && lo[i] < hi[i] && hi[i] <= 1.0) {
            return Err(Error::param(
                "init",
                format!("box requires 0 <= lo < hi <= 1, got [{}, {})", lo[i], hi[i]),
            ));
        }
    }
    let coords = (0..d)
        .map(|i| wrap_unit(lo[i] + (hi[i] - lo[i]) * rng.random::<f64>()))
        .collect();
    Ok(Point::from_parts_unchecked(coords, m))
}

/// One Euler-Maruyama update with manifold retraction, in place:
/// x ← project(x + step·drift + sqrt(2·step)·noise_coeff·ξ), ξ ~ N(0, I).
///
/// `noise_coeff` realizes sqrt(β⁻¹); the Gaussian is always drawn so the
/// stream position does not depend on the coefficient.
#[inline]
pub(crate) fn langevin_step_in_place<R: Rng + ?Sized>(
    m: Manifold,
    coords: &mut [f64],
    drift: &[f64],
    step: f64,
    noise_coeff: f64,
    rng: &mut R,
) -> Result<()> {
    debug_assert_eq!(coords.len(), drift.len());
    if drift.iter().any(|g| !g.is_finite()) {
        return Err(Error::NumericalBlowUp);
    }
    let noise_scale = (2.0 * step).sqrt() * noise_coeff;
    for (c, g) in coords.iter_mut().zip(drift) {
        let xi: f64 = rng.sample(StandardNormal);
        *c += step * g + noise_scale * xi;
    }
    project_in_place(m, coords)
}

/// One Euler-Maruyama update with manifold retraction.
pub fn langevin_step<R: Rng + ?Sized>(
    p: &Point,
    drift: &[f64],
    step: f64,
    noise_coeff: f64,
    rng: &mut R,
) -> Result<Point> {
    let m = p.manifold();
    m.check_dims(drift.len())?;
    if step <= 0.0 || step.is_nan() || noise_coeff < 0.0 || noise_coeff.is_nan() {
        return Err(Error::param(
            "langevin_step",
            "requires step > 0 and noise_coeff >= 0",
        ));
    }
    let mut coords = p.coords.clone();
    langevin_step_in_place(m, &mut coords, drift, step, noise_coeff, rng)?;
    Ok(Point::from_parts_unchecked(coords, m))
}

/// How an initial particle population is drawn.
#[derive(Debug, Clone, PartialEq)]
pub enum Initializer {
    /// Uniform distribution on the manifold.
    Uniform,
    /// Uniform distribution on the torus sub-box ∏[lo_i, hi_i).
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

impl Initializer {
    pub fn sample<R: Rng + ?Sized>(&self, m: Manifold, rng: &mut R) -> Result<Point> {
        match self {
            Initializer::Uniform => Ok(sample_uniform(m, rng)),
            Initializer::Box { lo, hi } => sample_box(m, lo, hi, rng),
        }
    }
}

/// Distance between two angles on the unit circle R/Z.
#[inline]
pub fn circle_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).abs();
    d.min(1.0 - d)
}

/// Geodesic distance between two points of the same manifold. On the
/// torus this is the Euclidean norm of the coordinatewise circle
/// distances; on the sphere the great-circle angle.
pub fn distance(a: &Point, b: &Point) -> Result<f64> {
    if a.manifold() != b.manifold() {
        return Err(Error::ManifoldMismatch {
            expected: a.manifold(),
            found: b.manifold(),
        });
    }
    match a.manifold() {
        Manifold::Torus(_) => Ok(a
            .coords()
            .iter()
            .zip(b.coords())
            .map(|(&x, &y)| circle_distance(x, y).powi(2))
            .sum::<f64>()
            .sqrt()),
        Manifold::Sphere(_) => {
            let dot: f64 = a.coords().iter().zip(b.coords()).map(|(x, y)| x * y).sum();
            Ok(dot.clamp(-1.0, 1.0).acos())
        }
    }
}

/// Normalized measure of a geodesic ball of radius `delta`: the interval
/// formula min(2δ, 1) on the 1-d torus, a spherical-cap quadrature on
/// S^{d-1}. Higher-dimensional tori are not supported.
pub fn ball_volume_fraction(m: Manifold, delta: f64) -> Result<f64> {
    if delta <= 0.0 || delta.is_nan() {
        return Err(Error::param("delta", "ball radius must be > 0"));
    }
    match m {
        Manifold::Torus(1) => Ok((2.0 * delta).min(1.0)),
        Manifold::Torus(_) => Err(Error::param(
            "manifold",
            "ball volume fraction is implemented for torus:1 and sphere:d",
        )),
        Manifold::Sphere(d) => {
            if delta >= PI {
                return Ok(1.0);
            }
            // Cap fraction = ∫_0^δ sin^{d-2}θ dθ / ∫_0^π sin^{d-2}θ dθ.
            let exponent = (d - 2) as f64;
            let f = |theta: f64| theta.sin().powf(exponent);
            let num = simpson(f, 0.0, delta, 8192);
            let den = simpson(f, 0.0, PI, 8192);
            Ok((num / den).clamp(0.0, 1.0))
        }
    }
}

/// Composite Simpson rule with `intervals` (even) subintervals.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    debug_assert!(intervals.is_multiple_of(2));
    let h = (b - a) / intervals as f64;
    let mut acc = f(a) + f(b);
    for i in 1..intervals {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}
