//! Payoff kernels K(x, y) with closed-form gradients, validity constants
//! (bound and Lipschitz constant), and per-ensemble sufficient statistics
//! that turn ensemble-averaged payoffs and drifts into O(1)-per-particle
//! evaluations.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::manifold::{Manifold, Point};

/// Dense square matrix, row-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Matrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for row in rows {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Matrix { n, data })
    }

    /// Seeded i.i.d. N(0, 1) entries scaled by `scale`.
    pub fn gaussian(n: usize, scale: f64, rng: &mut ChaCha8Rng) -> Self {
        let data = (0..n * n)
            .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Matrix { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    /// out = A v
    pub fn matvec(&self, v: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.data[i * self.n..(i + 1) * self.n];
            *o = row.iter().zip(v).map(|(a, b)| a * b).sum();
        }
    }

    /// out = Aᵀ v
    pub fn matvec_t(&self, v: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (i, &vi) in v.iter().enumerate() {
            let row = &self.data[i * self.n..(i + 1) * self.n];
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * vi;
            }
        }
    }

    /// A + Aᵀ
    pub fn plus_transpose(&self) -> Matrix {
        let n = self.n;
        let mut m = Matrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.data[i * n + j] = self.get(i, j) + self.get(j, i);
            }
        }
        m
    }

    /// Frobenius norm, an upper bound of the spectral norm.
    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|a| a * a).sum::<f64>().sqrt()
    }

    fn is_finite(&self) -> bool {
        self.data.iter().all(|a| a.is_finite())
    }
}

/// Quadratic form vᵀ A v.
fn quad_form(a: &Matrix, v: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (i, &vi) in v.iter().enumerate() {
        let row = &a.data[i * a.n..(i + 1) * a.n];
        acc += vi * row.iter().zip(v).map(|(x, y)| x * y).sum::<f64>();
    }
    acc
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Upper bound `|K| <= c_k` and joint Lipschitz constant of a kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelConstants {
    pub c_k: f64,
    pub lip_k: f64,
}

/// Polynomial payoff on the sphere:
/// K(x, y) = xᵀA₀x + xᵀA₁y + yᵀA₂y + yᵀA₃(x²), with (x²) elementwise.
#[derive(Debug, Clone)]
pub struct PolySphere {
    dim: usize,
    a0: Matrix,
    a1: Matrix,
    a2: Matrix,
    a3: Matrix,
    sym0: Matrix, // A0 + A0ᵀ
    sym2: Matrix, // A2 + A2ᵀ
}

impl PolySphere {
    pub fn matrices(&self) -> (&Matrix, &Matrix, &Matrix, &Matrix) {
        (&self.a0, &self.a1, &self.a2, &self.a3)
    }
}

/// A payoff function over one of the supported strategy spaces.
#[derive(Debug, Clone)]
pub enum Kernel {
    /// K(x, y) = sin(2πx) sin(2πy) on the 1-d torus.
    SineTorus,
    PolySphere(PolySphere),
}

impl Kernel {
    pub fn sine_torus() -> Self {
        Kernel::SineTorus
    }

    pub fn poly_sphere(a0: Matrix, a1: Matrix, a2: Matrix, a3: Matrix) -> Result<Self> {
        let dim = a0.dim();
        for (name, m) in [("a0", &a0), ("a1", &a1), ("a2", &a2), ("a3", &a3)] {
            if m.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: m.dim(),
                });
            }
            if !m.is_finite() {
                return Err(Error::param(
                    "kernel",
                    format!("matrix {name} has non-finite entries"),
                ));
            }
        }
        if dim < 2 {
            return Err(Error::param(
                "kernel",
                "poly_sphere requires ambient dimension >= 2",
            ));
        }
        let sym0 = a0.plus_transpose();
        let sym2 = a2.plus_transpose();
        Ok(Kernel::PolySphere(PolySphere {
            dim,
            a0,
            a1,
            a2,
            a3,
            sym0,
            sym2,
        }))
    }

    /// Polynomial sphere game with seeded i.i.d. N(0, 1)/d matrix entries.
    /// The seed makes every generated game reproducible.
    pub fn poly_sphere_gaussian(dim: usize, matrix_seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(matrix_seed);
        let scale = 1.0 / dim as f64;
        let a0 = Matrix::gaussian(dim, scale, &mut rng);
        let a1 = Matrix::gaussian(dim, scale, &mut rng);
        let a2 = Matrix::gaussian(dim, scale, &mut rng);
        let a3 = Matrix::gaussian(dim, scale, &mut rng);
        Kernel::poly_sphere(a0, a1, a2, a3)
    }

    pub fn manifold(&self) -> Manifold {
        match self {
            Kernel::SineTorus => Manifold::Torus(1),
            Kernel::PolySphere(p) => Manifold::Sphere(p.dim),
        }
    }

    fn check_point(&self, p: &Point) -> Result<()> {
        if p.manifold() != self.manifold() {
            return Err(Error::ManifoldMismatch {
                expected: self.manifold(),
                found: p.manifold(),
            });
        }
        Ok(())
    }

    /// K(x, y) on raw ambient coordinates (no membership check); the
    /// formulas extend smoothly off the manifold, which the
    /// finite-difference tests rely on.
    pub fn eval_raw(&self, x: &[f64], y: &[f64]) -> f64 {
        match self {
            Kernel::SineTorus => (TAU * x[0]).sin() * (TAU * y[0]).sin(),
            Kernel::PolySphere(p) => {
                let mut a1y = vec![0.0; p.dim];
                p.a1.matvec(y, &mut a1y);
                let xsq: Vec<f64> = x.iter().map(|c| c * c).collect();
                let mut a3xsq = vec![0.0; p.dim];
                p.a3.matvec(&xsq, &mut a3xsq);
                quad_form(&p.a0, x) + dot(x, &a1y) + quad_form(&p.a2, y) + dot(y, &a3xsq)
            }
        }
    }

    /// ∂K/∂x on raw coordinates.
    pub fn grad_x_raw(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        match self {
            Kernel::SineTorus => {
                out[0] = TAU * (TAU * x[0]).cos() * (TAU * y[0]).sin();
            }
            Kernel::PolySphere(p) => {
                // (A0 + A0ᵀ)x + A1 y + 2 diag(x) A3ᵀ y
                p.sym0.matvec(x, out);
                let mut tmp = vec![0.0; p.dim];
                p.a1.matvec(y, &mut tmp);
                for (o, t) in out.iter_mut().zip(&tmp) {
                    *o += t;
                }
                p.a3.matvec_t(y, &mut tmp);
                for ((o, t), xi) in out.iter_mut().zip(&tmp).zip(x) {
                    *o += 2.0 * xi * t;
                }
            }
        }
    }

    /// ∂K/∂y on raw coordinates.
    pub fn grad_y_raw(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        match self {
            Kernel::SineTorus => {
                out[0] = TAU * (TAU * x[0]).sin() * (TAU * y[0]).cos();
            }
            Kernel::PolySphere(p) => {
                // A1ᵀ x + (A2 + A2ᵀ)y + A3 (x²)
                p.sym2.matvec(y, out);
                let mut tmp = vec![0.0; p.dim];
                p.a1.matvec_t(x, &mut tmp);
                for (o, t) in out.iter_mut().zip(&tmp) {
                    *o += t;
                }
                let xsq: Vec<f64> = x.iter().map(|c| c * c).collect();
                p.a3.matvec(&xsq, &mut tmp);
                for (o, t) in out.iter_mut().zip(&tmp) {
                    *o += t;
                }
            }
        }
    }

    /// Payoff at a pair of on-manifold points.
    pub fn eval(&self, x: &Point, y: &Point) -> Result<f64> {
        self.check_point(x)?;
        self.check_point(y)?;
        Ok(self.eval_raw(x.coords(), y.coords()))
    }

    /// Exact analytic ∂K/∂x.
    pub fn grad_x(&self, x: &Point, y: &Point) -> Result<Vec<f64>> {
        self.check_point(x)?;
        self.check_point(y)?;
        let mut out = vec![0.0; self.manifold().ambient_dim()];
        self.grad_x_raw(x.coords(), y.coords(), &mut out);
        Ok(out)
    }

    /// Exact analytic ∂K/∂y.
    pub fn grad_y(&self, x: &Point, y: &Point) -> Result<Vec<f64>> {
        self.check_point(x)?;
        self.check_point(y)?;
        let mut out = vec![0.0; self.manifold().ambient_dim()];
        self.grad_y_raw(x.coords(), y.coords(), &mut out);
        Ok(out)
    }

    /// Valid (not necessarily tight) bound and joint Lipschitz constant.
    ///
    /// SineTorus: |K| attains 1 and sqrt(sup|∂ₓK|² + sup|∂ᵧK|²) = 2π√2.
    /// PolySphere: Frobenius norms bound the spectral norms; on the unit
    /// ball ‖x²‖ ≤ 1 and |xᵢ| ≤ 1, so each term is bounded by its matrix
    /// norm.
    pub fn constants(&self) -> KernelConstants {
        match self {
            Kernel::SineTorus => KernelConstants {
                c_k: 1.0,
                lip_k: TAU * 2.0_f64.sqrt(),
            },
            Kernel::PolySphere(p) => {
                let (n0, n1, n2, n3) = (
                    p.a0.frobenius(),
                    p.a1.frobenius(),
                    p.a2.frobenius(),
                    p.a3.frobenius(),
                );
                let lip_x = p.sym0.frobenius() + n1 + 2.0 * n3;
                let lip_y = n1 + p.sym2.frobenius() + n3;
                KernelConstants {
                    c_k: n0 + n1 + n2 + n3,
                    lip_k: (lip_x * lip_x + lip_y * lip_y).sqrt(),
                }
            }
        }
    }

    /// Sufficient statistics of an X ensemble. Every kernel variant is
    /// linear in a fixed feature map of x, so averages over the ensemble
    /// reduce to these moments.
    pub fn x_stats<'a>(&self, points: impl Iterator<Item = &'a [f64]>) -> XStats {
        match self {
            Kernel::SineTorus => {
                let mut sum = 0.0;
                let mut n = 0usize;
                for p in points {
                    sum += (TAU * p[0]).sin();
                    n += 1;
                }
                XStats::Sine {
                    mean_sin: sum / n.max(1) as f64,
                }
            }
            Kernel::PolySphere(p) => {
                let d = p.dim;
                let mut mean = vec![0.0; d];
                let mut mean_sq = vec![0.0; d];
                let mut quad0 = 0.0;
                let mut n = 0usize;
                for x in points {
                    for i in 0..d {
                        mean[i] += x[i];
                        mean_sq[i] += x[i] * x[i];
                    }
                    quad0 += quad_form(&p.a0, x);
                    n += 1;
                }
                let inv = 1.0 / n.max(1) as f64;
                for v in mean.iter_mut().chain(mean_sq.iter_mut()) {
                    *v *= inv;
                }
                let mut a1t_mean = vec![0.0; d];
                p.a1.matvec_t(&mean, &mut a1t_mean);
                let mut a3_mean_sq = vec![0.0; d];
                p.a3.matvec(&mean_sq, &mut a3_mean_sq);
                XStats::Poly {
                    quad0_mean: quad0 * inv,
                    a1t_mean,
                    a3_mean_sq,
                }
            }
        }
    }

    /// Sufficient statistics of a Y ensemble.
    pub fn y_stats<'a>(&self, points: impl Iterator<Item = &'a [f64]>) -> YStats {
        match self {
            Kernel::SineTorus => {
                let mut sum = 0.0;
                let mut n = 0usize;
                for p in points {
                    sum += (TAU * p[0]).sin();
                    n += 1;
                }
                YStats::Sine {
                    mean_sin: sum / n.max(1) as f64,
                }
            }
            Kernel::PolySphere(p) => {
                let d = p.dim;
                let mut mean = vec![0.0; d];
                let mut quad2 = 0.0;
                let mut n = 0usize;
                for y in points {
                    for i in 0..d {
                        mean[i] += y[i];
                    }
                    quad2 += quad_form(&p.a2, y);
                    n += 1;
                }
                let inv = 1.0 / n.max(1) as f64;
                for v in mean.iter_mut() {
                    *v *= inv;
                }
                let mut a1_mean = vec![0.0; d];
                p.a1.matvec(&mean, &mut a1_mean);
                let mut a3t_mean = vec![0.0; d];
                p.a3.matvec_t(&mean, &mut a3t_mean);
                YStats::Poly {
                    quad2_mean: quad2 * inv,
                    a1_mean,
                    a3t_mean,
                }
            }
        }
    }

    /// U(x, q̂) — the payoff averaged over a Y ensemble.
    pub fn mean_payoff_x(&self, x: &[f64], ys: &YStats) -> f64 {
        match (self, ys) {
            (Kernel::SineTorus, YStats::Sine { mean_sin }) => (TAU * x[0]).sin() * mean_sin,
            (
                Kernel::PolySphere(p),
                YStats::Poly {
                    quad2_mean,
                    a1_mean,
                    a3t_mean,
                },
            ) => {
                let xsq_dot: f64 = x.iter().zip(a3t_mean).map(|(c, t)| c * c * t).sum();
                quad_form(&p.a0, x) + dot(x, a1_mean) + quad2_mean + xsq_dot
            }
            _ => unreachable!("stats built from a different kernel variant"),
        }
    }

    /// V(y, p̂) — the payoff averaged over an X ensemble.
    pub fn mean_payoff_y(&self, xs: &XStats, y: &[f64]) -> f64 {
        match (self, xs) {
            (Kernel::SineTorus, XStats::Sine { mean_sin }) => mean_sin * (TAU * y[0]).sin(),
            (
                Kernel::PolySphere(p),
                XStats::Poly {
                    quad0_mean,
                    a1t_mean,
                    a3_mean_sq,
                },
            ) => quad0_mean + dot(a1t_mean, y) + quad_form(&p.a2, y) + dot(a3_mean_sq, y),
            _ => unreachable!("stats built from a different kernel variant"),
        }
    }

    /// ∇ₓU(x, q̂) — the x-gradient averaged over a Y ensemble.
    #[inline]
    pub fn mean_grad_x(&self, x: &[f64], ys: &YStats, out: &mut [f64]) {
        match (self, ys) {
            (Kernel::SineTorus, YStats::Sine { mean_sin }) => {
                out[0] = TAU * (TAU * x[0]).cos() * mean_sin;
            }
            (
                Kernel::PolySphere(p),
                YStats::Poly {
                    a1_mean, a3t_mean, ..
                },
            ) => {
                p.sym0.matvec(x, out);
                for ((o, a), (xi, t)) in out.iter_mut().zip(a1_mean).zip(x.iter().zip(a3t_mean)) {
                    *o += a + 2.0 * xi * t;
                }
            }
            _ => unreachable!("stats built from a different kernel variant"),
        }
    }

    /// ∇ᵧV(y, p̂) — the y-gradient averaged over an X ensemble.
    #[inline]
    pub fn mean_grad_y(&self, xs: &XStats, y: &[f64], out: &mut [f64]) {
        match (self, xs) {
            (Kernel::SineTorus, XStats::Sine { mean_sin }) => {
                out[0] = TAU * mean_sin * (TAU * y[0]).cos();
            }
            (
                Kernel::PolySphere(p),
                XStats::Poly {
                    a1t_mean,
                    a3_mean_sq,
                    ..
                },
            ) => {
                p.sym2.matvec(y, out);
                for ((o, a), b) in out.iter_mut().zip(a1t_mean).zip(a3_mean_sq) {
                    *o += a + b;
                }
            }
            _ => unreachable!("stats built from a different kernel variant"),
        }
    }
}

/// Ensemble moments sufficient to average K and ∇ᵧK over X particles.
#[derive(Debug, Clone)]
pub enum XStats {
    Sine {
        mean_sin: f64,
    },
    Poly {
        /// mean of xᵀA₀x
        quad0_mean: f64,
        /// A₁ᵀ · mean(x)
        a1t_mean: Vec<f64>,
        /// A₃ · mean(x²)
        a3_mean_sq: Vec<f64>,
    },
}

/// Ensemble moments sufficient to average K and ∇ₓK over Y particles.
#[derive(Debug, Clone)]
pub enum YStats {
    Sine {
        mean_sin: f64,
    },
    Poly {
        /// mean of yᵀA₂y
        quad2_mean: f64,
        /// A₁ · mean(y)
        a1_mean: Vec<f64>,
        /// A₃ᵀ · mean(y)
        a3t_mean: Vec<f64>,
    },
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{distance, project, sample_uniform};
    use rand::SeedableRng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn torus_point(x: f64) -> Point {
        project(&[x], Manifold::Torus(1)).unwrap()
    }

    fn poly_kernel(seed: u64, d: usize) -> Kernel {
        Kernel::poly_sphere_gaussian(d, seed).unwrap()
    }

    #[test]
    fn sine_eval_closed_forms() {
        let k = Kernel::sine_torus();
        let v = k.eval(&torus_point(0.25), &torus_point(0.25)).unwrap();
        assert!((v - 1.0).abs() < 1e-15);
        let v = k.eval(&torus_point(0.5), &torus_point(0.123)).unwrap();
        assert!(v.abs() < 1e-15);
    }

    #[test]
    fn poly_eval_with_identity_a0() {
        let d = 3;
        let k = Kernel::poly_sphere(
            Matrix::identity(d),
            Matrix::zeros(d),
            Matrix::zeros(d),
            Matrix::zeros(d),
        )
        .unwrap();
        let e1 = project(&[1.0, 0.0, 0.0], Manifold::Sphere(3)).unwrap();
        let mut r = rng(0);
        let y = sample_uniform(Manifold::Sphere(3), &mut r);
        assert!((k.eval(&e1, &y).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn eval_rejects_manifold_mismatch() {
        let k = Kernel::sine_torus();
        let mut r = rng(0);
        let y = sample_uniform(Manifold::Sphere(3), &mut r);
        assert!(matches!(
            k.eval(&torus_point(0.1), &y),
            Err(Error::ManifoldMismatch { .. })
        ));
    }

    #[test]
    fn sine_gradient_closed_forms() {
        let k = Kernel::sine_torus();
        let g = k.grad_x(&torus_point(0.25), &torus_point(0.25)).unwrap();
        assert!(g[0].abs() < 1e-12);
        let g = k.grad_x(&torus_point(0.0), &torus_point(0.25)).unwrap();
        assert!((g[0] - TAU).abs() < 1e-12);
        let g = k.grad_y(&torus_point(0.25), &torus_point(0.25)).unwrap();
        assert!(g[0].abs() < 1e-12);
        let g = k.grad_y(&torus_point(0.25), &torus_point(0.0)).unwrap();
        assert!((g[0] - TAU).abs() < 1e-12);
    }

    /// Central-difference oracle: both analytic gradients against
    /// (K(u+εe) - K(u-εe)) / 2ε at ε = 1e-5 on 100 random pairs.
    fn check_gradients(k: &Kernel, seed: u64) {
        let m = k.manifold();
        let d = m.ambient_dim();
        let mut r = rng(seed);
        let eps = 1e-5;
        for _ in 0..100 {
            let x = sample_uniform(m, &mut r);
            let y = sample_uniform(m, &mut r);
            let gx = k.grad_x(&x, &y).unwrap();
            let gy = k.grad_y(&x, &y).unwrap();
            for i in 0..d {
                let mut hi = x.coords().to_vec();
                let mut lo = x.coords().to_vec();
                hi[i] += eps;
                lo[i] -= eps;
                let fd = (k.eval_raw(&hi, y.coords()) - k.eval_raw(&lo, y.coords())) / (2.0 * eps);
                assert!(
                    (fd - gx[i]).abs() < 1e-6,
                    "grad_x[{i}]: fd {fd} vs {}",
                    gx[i]
                );

                let mut hi = y.coords().to_vec();
                let mut lo = y.coords().to_vec();
                hi[i] += eps;
                lo[i] -= eps;
                let fd = (k.eval_raw(x.coords(), &hi) - k.eval_raw(x.coords(), &lo)) / (2.0 * eps);
                assert!(
                    (fd - gy[i]).abs() < 1e-6,
                    "grad_y[{i}]: fd {fd} vs {}",
                    gy[i]
                );
            }
        }
    }

    #[test]
    fn sine_gradients_match_central_differences() {
        check_gradients(&Kernel::sine_torus(), 11);
    }

    #[test]
    fn poly_gradients_match_central_differences() {
        check_gradients(&poly_kernel(7, 3), 12);
        check_gradients(&poly_kernel(8, 5), 13);
    }

    #[test]
    fn constants_of_trivial_kernels() {
        let c = Kernel::sine_torus().constants();
        assert_eq!(c.c_k, 1.0);
        assert!((c.lip_k - TAU * 2.0_f64.sqrt()).abs() < 1e-15);

        let zero = Kernel::poly_sphere(
            Matrix::zeros(3),
            Matrix::zeros(3),
            Matrix::zeros(3),
            Matrix::zeros(3),
        )
        .unwrap();
        let c = zero.constants();
        assert_eq!((c.c_k, c.lip_k), (0.0, 0.0));
    }

    /// Monte-Carlo audit of the Lipschitz constant over random pairs,
    /// with the product-space distance sqrt(dist(x)² + dist(y)²).
    fn audit_lipschitz(k: &Kernel, seed: u64, pairs: usize) {
        let m = k.manifold();
        let lip = k.constants().lip_k;
        let mut r = rng(seed);
        for _ in 0..pairs {
            let (x1, y1) = (sample_uniform(m, &mut r), sample_uniform(m, &mut r));
            let (x2, y2) = (sample_uniform(m, &mut r), sample_uniform(m, &mut r));
            let dk = (k.eval(&x1, &y1).unwrap() - k.eval(&x2, &y2).unwrap()).abs();
            let dist =
                (distance(&x1, &x2).unwrap().powi(2) + distance(&y1, &y2).unwrap().powi(2)).sqrt();
            assert!(dk <= lip * dist + 1e-12, "|ΔK| = {dk} > {lip} * {dist}");
        }
    }

    #[test]
    fn sine_lipschitz_bound_holds() {
        audit_lipschitz(&Kernel::sine_torus(), 21, 100_000);
    }

    #[test]
    fn poly_lipschitz_bound_holds() {
        audit_lipschitz(&poly_kernel(9, 3), 22, 20_000);
    }

    #[test]
    fn eval_is_bounded_by_c_k() {
        for (k, pairs) in [
            (Kernel::sine_torus(), 1_000_000),
            (poly_kernel(10, 4), 100_000),
        ] {
            let m = k.manifold();
            let c_k = k.constants().c_k;
            let mut r = rng(31);
            for _ in 0..pairs {
                let x = sample_uniform(m, &mut r);
                let y = sample_uniform(m, &mut r);
                assert!(k.eval(&x, &y).unwrap().abs() <= c_k);
            }
        }
    }

    #[test]
    fn sine_kernel_is_separable() {
        let k = Kernel::sine_torus();
        let mut r = rng(41);
        for _ in 0..1000 {
            let (x, y) = (
                sample_uniform(k.manifold(), &mut r),
                sample_uniform(k.manifold(), &mut r),
            );
            let (xp, yp) = (
                sample_uniform(k.manifold(), &mut r),
                sample_uniform(k.manifold(), &mut r),
            );
            let lhs = k.eval(&x, &y).unwrap() * k.eval(&xp, &yp).unwrap();
            let rhs = k.eval(&x, &yp).unwrap() * k.eval(&xp, &y).unwrap();
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    /// The stats-based ensemble averages must agree with naive averaging
    /// of the pairwise gradients and payoffs.
    fn check_stats_consistency(k: &Kernel, seed: u64) {
        let m = k.manifold();
        let d = m.ambient_dim();
        let mut r = rng(seed);
        let xs: Vec<Point> = (0..50).map(|_| sample_uniform(m, &mut r)).collect();
        let ys: Vec<Point> = (0..70).map(|_| sample_uniform(m, &mut r)).collect();
        let xstats = k.x_stats(xs.iter().map(|p| p.coords()));
        let ystats = k.y_stats(ys.iter().map(|p| p.coords()));

        let probe_x = sample_uniform(m, &mut r);
        let probe_y = sample_uniform(m, &mut r);

        let mut naive = vec![0.0; d];
        for y in &ys {
            let g = k.grad_x(&probe_x, y).unwrap();
            for (a, b) in naive.iter_mut().zip(&g) {
                *a += b / ys.len() as f64;
            }
        }
        let mut fast = vec![0.0; d];
        k.mean_grad_x(probe_x.coords(), &ystats, &mut fast);
        for (a, b) in naive.iter().zip(&fast) {
            assert!((a - b).abs() < 1e-12, "mean_grad_x {a} vs {b}");
        }

        let mut naive = vec![0.0; d];
        for x in &xs {
            let g = k.grad_y(x, &probe_y).unwrap();
            for (a, b) in naive.iter_mut().zip(&g) {
                *a += b / xs.len() as f64;
            }
        }
        let mut fast = vec![0.0; d];
        k.mean_grad_y(&xstats, probe_y.coords(), &mut fast);
        for (a, b) in naive.iter().zip(&fast) {
            assert!((a - b).abs() < 1e-12, "mean_grad_y {a} vs {b}");
        }

        let naive_u: f64 =
            ys.iter().map(|y| k.eval(&probe_x, y).unwrap()).sum::<f64>() / ys.len() as f64;
        let fast_u = k.mean_payoff_x(probe_x.coords(), &ystats);
        assert!(
            (naive_u - fast_u).abs() < 1e-12,
            "mean_payoff_x {naive_u} vs {fast_u}"
        );

        let naive_v: f64 =
            xs.iter().map(|x| k.eval(x, &probe_y).unwrap()).sum::<f64>() / xs.len() as f64;
        let fast_v = k.mean_payoff_y(&xstats, probe_y.coords());
        assert!(
            (naive_v - fast_v).abs() < 1e-12,
            "mean_payoff_y {naive_v} vs {fast_v}"
        );
    }

    #[test]
    fn stats_paths_match_naive_averages() {
        check_stats_consistency(&Kernel::sine_torus(), 51);
        check_stats_consistency(&poly_kernel(11, 3), 52);
        check_stats_consistency(&poly_kernel(12, 6), 53);
    }

    #[test]
    fn matrix_seed_reproduces_game() {
        let a = poly_kernel(99, 4);
        let b = poly_kernel(99, 4);
        if let (Kernel::PolySphere(pa), Kernel::PolySphere(pb)) = (&a, &b) {
            assert_eq!(pa.a0, pb.a0);
            assert_eq!(pa.a3, pb.a3);
        } else {
            unreachable!();
        }
    }
}
