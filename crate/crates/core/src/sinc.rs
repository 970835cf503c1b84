//! Sinc quadrature and interpolation on the `sinh`-transformed real line.

use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{ensure, Error, Result};
use crate::quad::gauss_legendre;

/// Default strip half-width.
pub const DEFAULT_D: f64 = PI / 4.0;
/// Default abscissa of the Laplace samples.
pub const DEFAULT_ALPHA: f64 = 1.0;

/// Laplace-domain sample points `s_k = α + i sinh(kϑ)` with weights
/// `ω_k = ϑ cosh(kϑ)`, `k = -M..=M`, `ϑ = √(2πd / M)`. For `M = 0` the
/// single node `s_0 = α` carries the step of `M = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SincGrid {
    pub alpha: f64,
    pub d: f64,
    pub m: usize,
    pub theta: f64,
    /// `z_k` for `k = -M..=M`.
    pub z: Vec<f64>,
    pub weights: Vec<f64>,
}

impl SincGrid {
    pub fn new(alpha: f64, d: f64, m: usize) -> Result<Self> {
        ensure(d > 0.0 && d < PI / 2.0, "strip half-width must lie in (0, π/2)")?;
        ensure(alpha.is_finite() && alpha > 0.0, "alpha must be positive")?;
        let theta = libm::sqrt(2.0 * PI * d / m.max(1) as f64);
        let mi = m as i64;
        let mut z = Vec::with_capacity(2 * m + 1);
        let mut weights = Vec::with_capacity(2 * m + 1);
        for k in -mi..=mi {
            let x = k as f64 * theta;
            z.push(libm::sinh(x));
            weights.push(theta * libm::cosh(x));
        }
        Ok(Self {
            alpha,
            d,
            m,
            theta,
            z,
            weights,
        })
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    /// Index of `z_k` in the stored arrays.
    pub fn index(&self, k: i64) -> usize {
        (k + self.m as i64) as usize
    }

    /// `s_k = α + i z_k`.
    pub fn point(&self, k: i64) -> Complex64 {
        Complex64::new(self.alpha, self.z[self.index(k)])
    }

    pub fn points(&self) -> Vec<Complex64> {
        self.z.iter().map(|z| Complex64::new(self.alpha, *z)).collect()
    }
}

/// `sin(π(x - kϑ)/ϑ) / (π(x - kϑ)/ϑ)`.
pub fn sinc_kernel(k: i64, theta: f64, x: f64) -> f64 {
    let u = (x - k as f64 * theta) / theta;
    if libm::fabs(u) < 1e-8 {
        let pu = PI * u;
        return 1.0 - pu * pu / 6.0;
    }
    // sin(πu) with the argument reduced to keep exact zeros at integers
    let r = u - libm::round(u);
    let sign = if (libm::round(u) as i64) % 2 == 0 { 1.0 } else { -1.0 };
    sign * libm::sin(PI * r) / (PI * u)
}

/// `φ(z) = sinh⁻¹(z)` on the principal branch.
pub fn conformal_phi(z: Complex64) -> Result<Complex64> {
    ensure(z.re.is_finite() && z.im.is_finite(), "argument must be finite")?;
    ensure(
        !(z.re == 0.0 && libm::fabs(z.im) >= 1.0),
        "argument lies on a branch cut of asinh",
    )?;
    if z.re < 0.0 || (z.re == 0.0 && z.im < 0.0) {
        return Ok(-conformal_phi(-z)?);
    }
    let one = Complex64::new(1.0, 0.0);
    Ok((z + (one + z * z).sqrt()).ln())
}

/// `ψ(z) = sinh(z)`.
pub fn conformal_psi(z: Complex64) -> Complex64 {
    z.sinh()
}

/// `ϑ Σ_{k=-M}^{M} cosh(kϑ) F(sinh(kϑ))` with `ϑ = √(2πd / M)`.
pub fn sinc_quadrature(f: &dyn Fn(f64) -> f64, d: f64, m: usize) -> Result<f64> {
    let grid = SincGrid::new(DEFAULT_ALPHA, d, m)?;
    // symmetric pairing so odd integrands cancel exactly
    let c = grid.m;
    let v0 = f(grid.z[c]);
    if !v0.is_finite() {
        return Err(Error::NumericalFailure("integrand is not finite at a node"));
    }
    let mut sum = grid.weights[c] * v0;
    for j in 1..=c {
        let (a, b) = (f(grid.z[c + j]), f(grid.z[c - j]));
        if !a.is_finite() || !b.is_finite() {
            return Err(Error::NumericalFailure("integrand is not finite at a node"));
        }
        sum += grid.weights[c + j] * (a + b);
    }
    Ok(sum)
}

/// Weighted cardinal interpolant
/// `g_K(τ) = φ'(τ)^{1/2} Σ_k F(z_k) φ'(z_k)^{-1/2} Sinc(k, ϑ)(φ(τ))`.
#[derive(Debug, Clone)]
pub struct SincInterpolant {
    pub grid: SincGrid,
    /// `F(z_k)` for `k = -K..=K`, each of a common length.
    pub samples: Vec<Vec<f64>>,
}

pub fn sinc_interpolate(samples: Vec<Vec<f64>>, d: f64, k: usize) -> Result<SincInterpolant> {
    let grid = SincGrid::new(DEFAULT_ALPHA, d, k)?;
    ensure(samples.len() == grid.len(), "need one sample per node")?;
    let dim = samples.first().map_or(0, Vec::len);
    ensure(samples.iter().all(|s| s.len() == dim), "samples differ in length")?;
    Ok(SincInterpolant { grid, samples })
}

impl SincInterpolant {
    /// `g_K(ψ(x)) ψ'(x)^{1/2} = Σ_k F(z_k) cosh(kϑ)^{1/2} Sinc(k, ϑ)(x)`.
    pub fn eval_transformed(&self, x: f64) -> Vec<f64> {
        let dim = self.samples.first().map_or(0, Vec::len);
        let mut out = alloc::vec![0.0; dim];
        let m = self.grid.m as i64;
        for k in -m..=m {
            let i = self.grid.index(k);
            let w = libm::sqrt(libm::cosh(k as f64 * self.grid.theta))
                * sinc_kernel(k, self.grid.theta, x);
            for (o, s) in out.iter_mut().zip(&self.samples[i]) {
                *o += w * s;
            }
        }
        out
    }

    /// `g_K(τ)`.
    pub fn eval(&self, tau: f64) -> Vec<f64> {
        let x = libm::asinh(tau);
        let scale = 1.0 / libm::sqrt(libm::cosh(x));
        let mut v = self.eval_transformed(x);
        for e in &mut v {
            *e *= scale;
        }
        v
    }
}

/// `∫_{∂D_d} |dz| / |α + iz + λ|²` over both branches `z = sinh(x ± id)`.
pub fn theta_integral(alpha: f64, lambda: f64, d: f64) -> Result<f64> {
    ensure(alpha >= 1.0 && alpha.is_finite(), "alpha must be at least 1")?;
    ensure(lambda > 0.0 && lambda.is_finite(), "lambda must be positive")?;
    ensure(d > 0.0 && d < PI / 2.0, "d must lie in (0, π/2)")?;
    let integrand = |x: f64, sign: f64| {
        let w = Complex64::new(x, sign * d);
        let z = w.sinh();
        let dz = w.cosh().norm();
        let den = Complex64::new(alpha + lambda, 0.0) + Complex64::new(0.0, 1.0) * z;
        dz / den.norm_sqr()
    };
    // The upper branch peaks near cosh(x) sin(d) = α + λ.
    let x0 = libm::acosh(((alpha + lambda) / libm::sin(d)).max(1.0));
    let peak = integrand(x0, 1.0).max(integrand(0.0, 1.0));
    // Tails decay like e^{-|x|}; extend until below 1e-16 of the peak.
    let mut xmax = x0 + 1.0;
    while integrand(xmax, 1.0).max(integrand(xmax, -1.0)) > 1e-16 * peak {
        xmax += 1.0;
    }
    let width = 0.05 * libm::cos(d).min(1.0);
    let panels = libm::ceil(2.0 * xmax / width) as usize;
    let h = 2.0 * xmax / panels as f64;
    let (gx, gw) = gauss_legendre(8);
    let mut total = 0.0;
    for p in 0..panels {
        let a = -xmax + p as f64 * h;
        for (x, w) in gx.iter().zip(&gw) {
            let t = a + x * h;
            total += h * w * (integrand(t, 1.0) + integrand(t, -1.0));
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn kernel_values() {
        let th = 0.37;
        assert_eq!(sinc_kernel(3, th, 3.0 * th), 1.0);
        assert!(sinc_kernel(3, th, 4.0 * th).abs() < 1e-14);
        assert!((sinc_kernel(3, th, 3.5 * th) - 2.0 / PI).abs() < 1e-15);
        assert!((sinc_kernel(-2, th, -2.5 * th) - 2.0 / PI).abs() < 1e-15);
    }

    #[test]
    fn grid_symmetry() {
        let g = SincGrid::new(1.0, DEFAULT_D, 20).unwrap();
        assert!((g.theta - libm::sqrt(2.0 * PI * DEFAULT_D / 20.0)).abs() < 1e-15);
        for k in 0..=20i64 {
            assert_eq!(g.z[g.index(k)], -g.z[g.index(-k)]);
            assert_eq!(g.weights[g.index(k)], g.weights[g.index(-k)]);
            assert!(g.weights[g.index(k)] > 0.0);
        }
        assert!(SincGrid::new(1.0, 2.0, 10).is_err());
        assert_eq!(SincGrid::new(1.0, 0.5, 0).unwrap().len(), 1);
    }

    #[test]
    fn conformal_pair() {
        assert_eq!(conformal_phi(Complex64::new(0.0, 0.0)).unwrap(), Complex64::new(0.0, 0.0));
        for i in -20..=20 {
            let x = 50.0 * i as f64;
            let w = conformal_phi(Complex64::new(x, 0.0)).unwrap();
            assert!((conformal_psi(w).re - x).abs() <= 1e-13 * x.abs().max(1.0));
        }
        for &d in &[0.3, 0.7, 1.2] {
            for i in -10..=10 {
                let z = conformal_psi(Complex64::new(0.5 * i as f64, d));
                let w = conformal_phi(z).unwrap();
                assert!((w.im - d).abs() < 1e-12);
            }
        }
        assert!(conformal_phi(Complex64::new(0.0, 2.0)).is_err());
    }

    #[test]
    fn quadrature_examples() {
        let odd = |x: f64| x / (1.0 + x * x * x * x);
        assert_eq!(sinc_quadrature(&odd, DEFAULT_D, 30).unwrap(), 0.0);
        let g = sinc_quadrature(&|x: f64| libm::exp(-x * x), DEFAULT_D, 100).unwrap();
        assert!((g - libm::sqrt(PI)).abs() < 1e-8);
        let e = sinc_quadrature(&|x: f64| 1.0 / (1.0 + x * x), 1.0, 50).unwrap();
        assert!((e - PI).abs() <= 5.0 * libm::exp(-libm::sqrt(2.0 * PI * 50.0)));
        assert!(sinc_quadrature(&|_| f64::NAN, 1.0, 5).is_err());
    }

    #[test]
    fn interpolant_is_cardinal() {
        let k = 6;
        let grid = SincGrid::new(1.0, DEFAULT_D, k).unwrap();
        let f = |x: f64| vec![1.0 / (1.0 + x * x), libm::cos(x)];
        let samples: Vec<Vec<f64>> = grid.z.iter().map(|z| f(*z)).collect();
        let g = sinc_interpolate(samples.clone(), DEFAULT_D, k).unwrap();
        for (j, z) in grid.z.iter().enumerate() {
            let v = g.eval(*z);
            for c in 0..2 {
                assert!((v[c] - samples[j][c]).abs() < 1e-13);
            }
        }
        // constant samples: direct summation of the definition
        let ones = vec![vec![1.0]; grid.len()];
        let g = sinc_interpolate(ones, DEFAULT_D, k).unwrap();
        let tau = 0.77;
        let x = libm::asinh(tau);
        let mut direct = 0.0;
        for kk in -(k as i64)..=(k as i64) {
            let zk = libm::sinh(kk as f64 * grid.theta);
            direct += libm::pow(1.0 + zk * zk, 0.25) * sinc_kernel(kk, grid.theta, x);
        }
        direct /= libm::pow(1.0 + tau * tau, 0.25);
        assert!((g.eval(tau)[0] - direct).abs() < 1e-14);
    }

    #[test]
    fn theta_branch_bound() {
        for &lambda in &[1.0, 10.0, 100.0] {
            for &d in &[0.3, 0.7, 1.2, 1.5] {
                let bound = 1.0 / (lambda * libm::cos(d) * libm::cos(d));
                for i in -200..=200 {
                    for sign in [1.0, -1.0] {
                        let z = Complex64::new(0.05 * i as f64, sign * d).sinh();
                        let den = Complex64::new(1.0 + lambda, 0.0) + Complex64::new(0.0, 1.0) * z;
                        assert!(lambda / den.norm_sqr() <= bound * (1.0 + 1e-12));
                    }
                }
            }
        }
        let t = theta_integral(1.0, 10.0, 0.7).unwrap();
        assert!(t > 0.0 && t.is_finite());
    }
}
