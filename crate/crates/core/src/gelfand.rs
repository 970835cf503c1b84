//! The discrete Gelfand triple `V ⊆ H ⊆ V*` given by a mass/stiffness pair.

use alloc::vec::Vec;
use core::sync::atomic::{AtomicU64, Ordering};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{ensure, Error, Result};
use crate::linalg::{dot, BandLdl, CsrMatrix};

/// Counts of the linear-algebra work performed against one system.
#[derive(Debug, Default)]
pub struct SolveCounters {
    factorizations: AtomicU64,
    shifted_solves: AtomicU64,
    stage_solves: AtomicU64,
    dual_solves: AtomicU64,
}

/// Plain snapshot of [`SolveCounters`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CounterSnapshot {
    pub factorizations: u64,
    pub shifted_solves: u64,
    pub stage_solves: u64,
    pub dual_solves: u64,
}

impl CounterSnapshot {
    /// Solves of the full-order system of any kind.
    pub fn total_solves(&self) -> u64 {
        self.shifted_solves + self.stage_solves + self.dual_solves
    }
}

impl SolveCounters {
    pub(crate) fn add_factorization(&self) {
        self.factorizations.fetch_add(1, Ordering::Relaxed);
    }
    pub(crate) fn add_shifted(&self, n: u64) {
        self.shifted_solves.fetch_add(n, Ordering::Relaxed);
    }
    pub(crate) fn add_stage(&self, n: u64) {
        self.stage_solves.fetch_add(n, Ordering::Relaxed);
    }
    pub(crate) fn add_dual(&self, n: u64) {
        self.dual_solves.fetch_add(n, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> CounterSnapshot {
        CounterSnapshot {
            factorizations: self.factorizations.load(Ordering::Relaxed),
            shifted_solves: self.shifted_solves.load(Ordering::Relaxed),
            stage_solves: self.stage_solves.load(Ordering::Relaxed),
            dual_solves: self.dual_solves.load(Ordering::Relaxed),
        }
    }

    pub fn reset(&self) {
        self.factorizations.store(0, Ordering::Relaxed);
        self.shifted_solves.store(0, Ordering::Relaxed);
        self.stage_solves.store(0, Ordering::Relaxed);
        self.dual_solves.store(0, Ordering::Relaxed);
    }
}

/// Mass matrix `M` (inner product of `H`) and stiffness matrix `K`
/// (inner product of `V`, operator `A`), with a cached factorization of `K`.
#[derive(Debug)]
pub struct DiscreteSystem {
    m: CsrMatrix,
    k: CsrMatrix,
    k_factor: BandLdl<f64>,
    counters: SolveCounters,
}

impl Clone for DiscreteSystem {
    fn clone(&self) -> Self {
        Self {
            m: self.m.clone(),
            k: self.k.clone(),
            k_factor: self.k_factor.clone(),
            counters: SolveCounters::default(),
        }
    }
}

impl DiscreteSystem {
    /// Validates symmetry and positive definiteness of both matrices and factors `K`.
    pub fn new(m: CsrMatrix, k: CsrMatrix) -> Result<Self> {
        let n = m.nrows();
        ensure(n >= 1, "system must be nonempty")?;
        ensure(
            m.ncols() == n && k.nrows() == n && k.ncols() == n,
            "mass and stiffness must be square of equal size",
        )?;
        ensure(m.is_symmetric(1e-12), "mass matrix must be symmetric")?;
        ensure(k.is_symmetric(1e-12), "stiffness matrix must be symmetric")?;
        let m_factor = BandLdl::factor_real(&m).map_err(|_| Error::InvalidArgument("mass matrix is not positive definite"))?;
        ensure(m_factor.is_positive_definite(), "mass matrix is not positive definite")?;
        let k_factor = BandLdl::factor_real(&k)
            .map_err(|_| Error::InvalidArgument("stiffness matrix is not positive definite"))?;
        ensure(k_factor.is_positive_definite(), "stiffness matrix is not positive definite")?;
        let sys = Self {
            m,
            k,
            k_factor,
            counters: SolveCounters::default(),
        };
        sys.counters.add_factorization();
        Ok(sys)
    }

    /// Diagonal system `M = diag(m)`, `K = diag(k)`.
    pub fn diagonal(m: &[f64], k: &[f64]) -> Result<Self> {
        ensure(m.len() == k.len(), "diagonals differ in length")?;
        let tm: Vec<_> = m.iter().enumerate().map(|(i, &v)| (i, i, v)).collect();
        let tk: Vec<_> = k.iter().enumerate().map(|(i, &v)| (i, i, v)).collect();
        Self::new(
            CsrMatrix::from_triplets(m.len(), m.len(), &tm)?,
            CsrMatrix::from_triplets(k.len(), k.len(), &tk)?,
        )
    }

    /// The scalar problem `u' + λu = f`.
    pub fn scalar(lambda: f64) -> Result<Self> {
        Self::diagonal(&[1.0], &[lambda])
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn mass(&self) -> &CsrMatrix {
        &self.m
    }

    pub fn stiffness(&self) -> &CsrMatrix {
        &self.k
    }

    pub fn counters(&self) -> &SolveCounters {
        &self.counters
    }

    /// The `LDLᵀ` factorization of the stiffness matrix.
    pub fn stiffness_factor(&self) -> &BandLdl<f64> {
        &self.k_factor
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        ensure(len == self.dim(), "vector dimension does not match the system")
    }

    pub fn norm_h(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x.len())?;
        Ok(libm::sqrt(self.m.quad_form(x).max(0.0)))
    }

    pub fn norm_v(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x.len())?;
        Ok(libm::sqrt(self.k.quad_form(x).max(0.0)))
    }

    /// `gᵀK⁻¹g` for a functional (load) vector `g`.
    pub fn dual_sq(&self, g: &[f64]) -> Result<f64> {
        self.check_dim(g.len())?;
        let y = self.k_solve(g)?;
        Ok(dot(g, &y).max(0.0))
    }

    pub fn norm_vstar(&self, g: &[f64]) -> Result<f64> {
        Ok(libm::sqrt(self.dual_sq(g)?))
    }

    /// `K⁻¹ g`, counted as a dual solve.
    pub fn k_solve(&self, g: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(g.len())?;
        self.counters.add_dual(1);
        self.k_factor.solve(g)
    }

    /// Factors `sM + K` for later solves.
    pub fn factor_shift(&self, s: Complex64) -> Result<ShiftedFactor> {
        ensure(s.re.is_finite() && s.im.is_finite(), "shift must be finite")?;
        ensure(s.re >= 0.0, "shift must have nonnegative real part")?;
        let one = Complex64::new(1.0, 0.0);
        let ldl = BandLdl::factor_combination(&self.m, s, &self.k, one)?;
        self.counters.add_factorization();
        Ok(ShiftedFactor { shift: s, ldl })
    }

    /// Solves `(sM + K)x = b`.
    pub fn shifted_solve(&self, s: Complex64, b: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check_dim(b.len())?;
        self.factor_shift(s)?.solve(self, b)
    }

    /// Dense generalized eigendecomposition `K e = λ M e` with `EᵀME = I`.
    pub fn eigendecompose(&self) -> Result<SpectralFactorization> {
        let n = self.dim();
        ensure(n <= 5000, "dimension too large for the dense eigensolver")?;
        let m = self.m.to_dense();
        let k = self.k.to_dense();
        let chol = m
            .cholesky()
            .ok_or(Error::InvalidArgument("mass matrix is not positive definite"))?;
        let l = chol.l();
        // C = L⁻¹ K L⁻ᵀ
        let mut c = k;
        l.solve_lower_triangular_mut(&mut c);
        let mut ct = c.transpose();
        l.solve_lower_triangular_mut(&mut ct);
        let c = (&ct + ct.transpose()) * 0.5;
        let eig = c.symmetric_eigen();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        ensure(
            eigenvalues.iter().all(|&v| v > 0.0 && v.is_finite()),
            "stiffness matrix is not positive definite",
        )?;
        let q = DMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
        // E = L⁻ᵀ Q
        let lt = l.transpose();
        let vectors = lt
            .solve_upper_triangular(&q)
            .ok_or(Error::NumericalFailure("triangular solve failed"))?;
        let mt = self.m.to_dense();
        let modal_mass = vectors.transpose() * mt;
        Ok(SpectralFactorization {
            eigenvalues,
            vectors,
            modal_mass,
        })
    }
}

/// A factorization of `sM + K` for one complex shift `s`.
#[derive(Debug, Clone)]
pub struct ShiftedFactor {
    shift: Complex64,
    ldl: BandLdl<Complex64>,
}

impl ShiftedFactor {
    pub fn shift(&self) -> Complex64 {
        self.shift
    }

    /// Solves `(sM + K)x = b`, counted as one shifted solve on `system`.
    pub fn solve(&self, system: &DiscreteSystem, b: &[Complex64]) -> Result<Vec<Complex64>> {
        system.check_dim(b.len())?;
        system.counters.add_shifted(1);
        self.ldl.solve(b)
    }
}

/// Generalized eigenpairs of `(K, M)`, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct SpectralFactorization {
    pub eigenvalues: Vec<f64>,
    /// Columns are the `M`-orthonormal eigenvectors.
    pub vectors: DMatrix<f64>,
    /// `EᵀM`, mapping coefficient vectors to modal coordinates.
    pub modal_mass: DMatrix<f64>,
}

impl SpectralFactorization {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Modal coordinates `EᵀM x` of a coefficient vector.
    pub fn modal_coords(&self, x: &[f64]) -> Vec<f64> {
        (&self.modal_mass * DVector::from_column_slice(x)).as_slice().to_vec()
    }

    /// Modal coordinates `Eᵀ g` of a functional vector.
    pub fn modal_functional(&self, g: &[f64]) -> Vec<f64> {
        (self.vectors.transpose() * DVector::from_column_slice(g))
            .as_slice()
            .to_vec()
    }

    /// `Σ c_i e_i`.
    pub fn reconstruct(&self, c: &[f64]) -> Vec<f64> {
        (&self.vectors * DVector::from_column_slice(c)).as_slice().to_vec()
    }

    pub fn norm_v(&self, x: &[f64]) -> f64 {
        let c = self.modal_coords(x);
        libm::sqrt(c.iter().zip(&self.eigenvalues).map(|(c, l)| l * c * c).sum())
    }

    pub fn norm_vstar(&self, g: &[f64]) -> f64 {
        let c = self.modal_functional(g);
        libm::sqrt(c.iter().zip(&self.eigenvalues).map(|(c, l)| c * c / l).sum())
    }

    /// Exact solution of `u' + Au = 0`, `u(0) = u0`, at time `t`.
    pub fn modal_solution(&self, u0: &[f64], t: f64) -> Vec<f64> {
        let c: Vec<f64> = self
            .modal_coords(u0)
            .iter()
            .zip(&self.eigenvalues)
            .map(|(c, l)| c * libm::exp(-l * t))
            .collect();
        self.reconstruct(&c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn laplace(n: usize) -> DiscreteSystem {
        let mut tk = Vec::new();
        let mut tm = Vec::new();
        for i in 0..n {
            tk.push((i, i, 2.0));
            tm.push((i, i, 4.0 / 6.0));
            if i + 1 < n {
                tk.push((i, i + 1, -1.0));
                tk.push((i + 1, i, -1.0));
                tm.push((i, i + 1, 1.0 / 6.0));
                tm.push((i + 1, i, 1.0 / 6.0));
            }
        }
        DiscreteSystem::new(
            CsrMatrix::from_triplets(n, n, &tm).unwrap(),
            CsrMatrix::from_triplets(n, n, &tk).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn scalar_norms() {
        let s = DiscreteSystem::scalar(9.0).unwrap();
        assert!((s.norm_v(&[1.0]).unwrap() - 3.0).abs() < 1e-15);
        assert!((s.norm_vstar(&[1.0]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.norm_h(&[0.0]).unwrap(), 0.0);
        assert_eq!(s.norm_vstar(&[0.0]).unwrap(), 0.0);
        assert!(matches!(s.norm_h(&[1.0, 2.0]), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn shifted_solves() {
        let one = DiscreteSystem::scalar(1.0).unwrap();
        let x = one
            .shifted_solve(Complex64::new(1.0, 1.0), &[Complex64::new(1.0, 0.0)])
            .unwrap();
        assert!((x[0] - Complex64::new(0.4, -0.2)).norm() < 1e-15);
        let s = DiscreteSystem::scalar(3.0).unwrap();
        let x = s
            .shifted_solve(Complex64::new(0.0, 0.0), &[Complex64::new(6.0, 0.0)])
            .unwrap();
        assert!((x[0].re - 2.0).abs() < 1e-15);
        assert!(s.factor_shift(Complex64::new(-1.0, 0.0)).is_err());
    }

    #[test]
    fn rejects_indefinite() {
        assert!(DiscreteSystem::diagonal(&[1.0, 1.0], &[1.0, -1.0]).is_err());
        assert!(DiscreteSystem::diagonal(&[1.0, 0.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn eigen_examples() {
        let s = DiscreteSystem::diagonal(&[1.0, 1.0], &[1.0, 4.0]).unwrap();
        let e = s.eigendecompose().unwrap();
        assert!((e.eigenvalues[0] - 1.0).abs() < 1e-14 && (e.eigenvalues[1] - 4.0).abs() < 1e-14);
        let s = DiscreteSystem::diagonal(&[2.0, 2.0], &[8.0, 2.0]).unwrap();
        let e = s.eigendecompose().unwrap();
        assert!((e.eigenvalues[0] - 1.0).abs() < 1e-14 && (e.eigenvalues[1] - 4.0).abs() < 1e-14);
        let r = core::f64::consts::FRAC_1_SQRT_2;
        assert!((e.vectors[(1, 0)].abs() - r).abs() < 1e-14);
        assert!((e.vectors[(0, 1)].abs() - r).abs() < 1e-14);
        assert!(e.vectors[(0, 0)].abs() < 1e-14);
    }

    #[test]
    fn eigen_identities_and_backend_agreement() {
        let s = laplace(12);
        let e = s.eigendecompose().unwrap();
        let m = s.mass().to_dense();
        let k = s.stiffness().to_dense();
        let emt = e.vectors.transpose() * &m * &e.vectors;
        let ekt = e.vectors.transpose() * &k * &e.vectors;
        for i in 0..12 {
            for j in 0..12 {
                let id = if i == j { 1.0 } else { 0.0 };
                assert!((emt[(i, j)] - id).abs() < 1e-12);
                let d = if i == j { e.eigenvalues[i] } else { 0.0 };
                assert!((ekt[(i, j)] - d).abs() < 1e-10);
            }
            let col: Vec<f64> = e.vectors.column(i).iter().copied().collect();
            let mcol = s.mass().mul_vec(&col);
            let p = s.norm_v(&col).unwrap() * s.norm_vstar(&mcol).unwrap();
            assert!((p - 1.0).abs() < 1e-12);
        }
        let x: Vec<f64> = (0..12).map(|i| libm::sin(i as f64 * 0.7) + 0.3).collect();
        let g = s.mass().mul_vec(&x);
        let a = s.norm_vstar(&g).unwrap();
        let b = e.norm_vstar(&g);
        assert!((a - b).abs() <= 1e-8 * a);
        assert!((s.norm_v(&x).unwrap() - e.norm_v(&x)).abs() <= 1e-8 * e.norm_v(&x));
    }

    #[test]
    fn modal_solution_satisfies_ode() {
        let s = laplace(6);
        let e = s.eigendecompose().unwrap();
        let u0 = vec![1.0; 6];
        let t = 0.3;
        let dt = 1e-5;
        let up = e.modal_solution(&u0, t + dt);
        let um = e.modal_solution(&u0, t - dt);
        let u = e.modal_solution(&u0, t);
        let du: Vec<f64> = up.iter().zip(&um).map(|(a, b)| (a - b) / (2.0 * dt)).collect();
        let r: Vec<f64> = s
            .mass()
            .mul_vec(&du)
            .iter()
            .zip(s.stiffness().mul_vec(&u))
            .map(|(a, b)| a + b)
            .collect();
        assert!(crate::linalg::max_abs(&r) < 1e-6);
        let back = e.modal_solution(&u0, 0.0);
        for (a, b) in back.iter().zip(&u0) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn counters_track_work() {
        let s = laplace(4);
        s.counters().reset();
        let f = s.factor_shift(Complex64::new(1.0, 2.0)).unwrap();
        let b = vec![Complex64::new(1.0, 0.0); 4];
        f.solve(&s, &b).unwrap();
        f.solve(&s, &b).unwrap();
        s.norm_vstar(&[1.0; 4]).unwrap();
        let c = s.counters().snapshot();
        assert_eq!(c.factorizations, 1);
        assert_eq!(c.shifted_solves, 2);
        assert_eq!(c.dual_solves, 1);
    }
}
