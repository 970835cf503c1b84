//! Laplace-domain snapshots, weighted POD in the `V` inner product and
//! reduced systems for the adaptive time stepper.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{ensure, Error, Result};
use crate::gelfand::{DiscreteSystem, SpectralFactorization};
use crate::linalg::{dot, CsrMatrix};
use crate::radau::{adaptive_loop_with, xnorm_error_modal, AdaptiveParams, RhsFunction, SplineSolution};
use crate::sinc::SincGrid;
use crate::time_mesh::TimeMesh;

/// Laplace transform of the load vector, `s ↦ f̂(s)`.
pub type LaplaceLoad<'a> = &'a dyn Fn(Complex64) -> Vec<Complex64>;

/// Relative singular-value cutoff below which modes count as numerically absent.
pub const RANK_TOL: f64 = 1e-13;

/// Solutions of `(sM + K)û = f̂(s) + M u0` at `s_k`, `k = 0..=M`.
///
/// Negative indices follow by conjugation and are not stored.
#[derive(Debug, Clone)]
pub struct SnapshotSet {
    pub grid: SincGrid,
    pub u0: Vec<f64>,
    pub u_hat: Vec<Vec<Complex64>>,
    /// `s_k û(s_k) - u0`.
    pub du_hat: Vec<Vec<Complex64>>,
}

impl SnapshotSet {
    pub fn dim(&self) -> usize {
        self.u0.len()
    }

    /// `û(s_k)` for any `k` in `-M..=M`.
    pub fn snapshot(&self, k: i64) -> Vec<Complex64> {
        let v = &self.u_hat[k.unsigned_abs() as usize];
        if k < 0 {
            v.iter().map(|z| z.conj()).collect()
        } else {
            v.clone()
        }
    }
}

pub fn laplace_snapshot(
    system: &DiscreteSystem,
    fhat: Option<LaplaceLoad<'_>>,
    u0: &[f64],
    s: Complex64,
) -> Result<Vec<Complex64>> {
    ensure(u0.len() == system.dim(), "initial value has wrong dimension")?;
    let mut rhs: Vec<Complex64> = system
        .mass()
        .mul_vec(u0)
        .into_iter()
        .map(|v| Complex64::new(v, 0.0))
        .collect();
    if let Some(f) = fhat {
        let load = f(s);
        ensure(load.len() == rhs.len(), "load transform has wrong dimension")?;
        for (r, l) in rhs.iter_mut().zip(load) {
            *r += l;
        }
    }
    system.shifted_solve(s, &rhs)
}

pub fn build_snapshots(
    system: &DiscreteSystem,
    fhat: Option<LaplaceLoad<'_>>,
    u0: &[f64],
    grid: &SincGrid,
) -> Result<SnapshotSet> {
    let mut u_hat = Vec::with_capacity(grid.m + 1);
    let mut du_hat = Vec::with_capacity(grid.m + 1);
    for k in 0..=grid.m as i64 {
        let s = grid.point(k);
        let u = laplace_snapshot(system, fhat, u0, s)?;
        let du = u.iter().zip(u0).map(|(z, a)| s * z - *a).collect();
        u_hat.push(u);
        du_hat.push(du);
    }
    Ok(SnapshotSet {
        grid: grid.clone(),
        u0: u0.to_vec(),
        u_hat,
        du_hat,
    })
}

/// Weight of the stored index `k`, folding in its conjugate partner.
fn pair_weight(grid: &SincGrid, k: usize) -> f64 {
    let w = grid.weights[grid.index(k as i64)];
    if k == 0 {
        w
    } else {
        2.0 * w
    }
}

/// Real snapshot matrix: `u0`, then per `k` the scaled real and imaginary
/// parts of `û` and of `dû`, skipping the vanishing imaginary parts at `k = 0`
/// when the data are real.
pub fn snapshot_matrix(snaps: &SnapshotSet) -> DMatrix<f64> {
    let n = snaps.dim();
    let mut cols: Vec<Vec<f64>> = vec![snaps.u0.clone()];
    for k in 0..snaps.u_hat.len() {
        let rho = libm::sqrt(pair_weight(&snaps.grid, k));
        let s = snaps.grid.point(k as i64);
        let sigma = 1.0 / (1.0 + s.norm());
        for (v, scale) in [(&snaps.u_hat[k], rho), (&snaps.du_hat[k], rho * sigma)] {
            cols.push(v.iter().map(|z| scale * z.re).collect());
            if k > 0 || v.iter().any(|z| z.im != 0.0) {
                cols.push(v.iter().map(|z| scale * z.im).collect());
            }
        }
    }
    DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i])
}

/// `V`-orthonormal reduced basis.
#[derive(Debug, Clone)]
pub struct ReducedBasis {
    /// `N × R`, `WᵀKW = I`.
    pub w: DMatrix<f64>,
    /// `KW`, so that `Wᵀ K x = (KW)ᵀ x`.
    pub kw: DMatrix<f64>,
    pub m_r: DMatrix<f64>,
    pub k_r: DMatrix<f64>,
    /// All singular values of the weighted snapshot matrix in the `V` inner product.
    pub singular_values: Vec<f64>,
    /// Set when fewer than the requested modes were available.
    pub rank_deficient: bool,
}

impl ReducedBasis {
    pub fn rank(&self) -> usize {
        self.w.ncols()
    }

    pub fn full_dim(&self) -> usize {
        self.w.nrows()
    }

    /// `W c`.
    pub fn lift(&self, c: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.full_dim()];
        for (j, cj) in c.iter().enumerate() {
            for (o, w) in out.iter_mut().zip(self.w.column(j).iter()) {
                *o += cj * w;
            }
        }
        out
    }

    /// Reduced coordinates `Wᵀ K x` of the `V`-orthogonal projection.
    pub fn coords(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rank()).map(|j| dot(self.kw.column(j).as_slice(), x)).collect()
    }

    /// `Wᵀ g` for a functional vector.
    pub fn restrict_functional(&self, g: &[f64]) -> Vec<f64> {
        (0..self.rank()).map(|j| dot(self.w.column(j).as_slice(), g)).collect()
    }

    /// `P x = W Wᵀ K x`.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        self.lift(&self.coords(x))
    }

    /// Lifts a reduced trajectory to the full space.
    pub fn lift_solution(&self, sol: &SplineSolution) -> SplineSolution {
        let lift_all = |v: &Vec<Vec<f64>>| v.iter().map(|c| self.lift(c)).collect();
        SplineSolution {
            mesh: sol.mesh.clone(),
            scheme: sol.scheme,
            u0: self.lift(&sol.u0),
            left: lift_all(&sol.left),
            k1: lift_all(&sol.k1),
            k2: lift_all(&sol.k2),
            u_end: self.lift(&sol.u_end),
        }
    }
}

fn k_inner(system: &DiscreteSystem, a: &[f64], b: &[f64]) -> f64 {
    dot(&system.stiffness().mul_vec(a), b)
}

pub fn build_reduced_basis(system: &DiscreteSystem, snaps: &SnapshotSet, r: usize) -> Result<ReducedBasis> {
    ensure(snaps.dim() == system.dim(), "snapshots do not match the system")?;
    pod_basis(system, snapshot_matrix(snaps), r)
}

/// Leading `r` left singular vectors of `s` in the `V` inner product.
pub fn pod_basis(system: &DiscreteSystem, s: DMatrix<f64>, r: usize) -> Result<ReducedBasis> {
    ensure(s.nrows() == system.dim(), "snapshot matrix does not match the system")?;
    ensure(r <= s.ncols(), "requested more modes than snapshot columns")?;
    // K = L D Lᵀ, so xᵀKx = |C x|² with C = D^{1/2} Lᵀ
    let fac = system.stiffness_factor();
    let sqrt_d: Vec<f64> = fac.diagonal().iter().map(|d| libm::sqrt(*d)).collect();
    let mut y = s;
    for mut col in y.column_iter_mut() {
        let c = col.as_mut_slice();
        fac.mul_lower_transpose(c);
        for (v, d) in c.iter_mut().zip(&sqrt_d) {
            *v *= d;
        }
    }
    let svd = y.svd(true, false);
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]).then(a.cmp(&b)));
    let singular_values: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let u = svd.u.ok_or(Error::NumericalFailure("singular value decomposition failed"))?;
    let s1 = singular_values.first().copied().unwrap_or(0.0);
    let available = singular_values.iter().filter(|&&v| v > RANK_TOL * s1 && v > 0.0).count();
    let rank = r.min(available);
    // back-transform W = C⁻¹ U_r
    let cols: Vec<Vec<f64>> = order
        .iter()
        .take(rank)
        .map(|&j| {
            let mut c: Vec<f64> = u.column(j).iter().zip(&sqrt_d).map(|(v, d)| v / d).collect();
            fac.backward(&mut c);
            c
        })
        .collect();
    let mut basis = ReducedBasis::from_columns(system, cols)?;
    basis.singular_values = singular_values;
    basis.rank_deficient = rank < r;
    Ok(basis)
}

impl ReducedBasis {
    /// Orthonormalizes `cols` in the `V` inner product (Gram–Schmidt, twice).
    pub fn from_columns(system: &DiscreteSystem, cols: Vec<Vec<f64>>) -> Result<Self> {
        let n = system.dim();
        ensure(cols.iter().all(|c| c.len() == n), "basis vectors have wrong length")?;
        let mut done: Vec<Vec<f64>> = Vec::with_capacity(cols.len());
        for mut c in cols {
            for _ in 0..2 {
                for q in &done {
                    let p = k_inner(system, &c, q);
                    for (ci, qi) in c.iter_mut().zip(q) {
                        *ci -= p * qi;
                    }
                }
            }
            let nrm = libm::sqrt(k_inner(system, &c, &c).max(0.0));
            ensure(nrm > 0.0 && nrm.is_finite(), "basis vector vanished")?;
            c.iter_mut().for_each(|v| *v /= nrm);
            done.push(c);
        }
        let rank = done.len();
        let w = DMatrix::from_fn(n, rank, |i, j| done[j][i]);
        let mut kw = DMatrix::zeros(n, rank);
        let mut mw = DMatrix::zeros(n, rank);
        for (j, c) in done.iter().enumerate() {
            kw.set_column(j, &nalgebra::DVector::from_vec(system.stiffness().mul_vec(c)));
            mw.set_column(j, &nalgebra::DVector::from_vec(system.mass().mul_vec(c)));
        }
        let sym = |a: DMatrix<f64>| (&a + a.transpose()) * 0.5;
        let m_r = sym(w.transpose() * &mw);
        let k_r = sym(w.transpose() * &kw);
        Ok(Self {
            w,
            kw,
            m_r,
            k_r,
            singular_values: Vec::new(),
            rank_deficient: false,
        })
    }
}

/// `Σ_{j=-M}^{M} ω_j (‖û_j - Pû_j‖²_V + ‖M(dû_j - P dû_j)‖²_{V*})`.
pub fn epsilon_m(system: &DiscreteSystem, snaps: &SnapshotSet, basis: &ReducedBasis) -> Result<f64> {
    ensure(
        snaps.dim() == system.dim() && basis.full_dim() == system.dim(),
        "basis, snapshots and system differ in dimension",
    )?;
    let residual = |x: Vec<f64>| -> Vec<f64> {
        let p = basis.project(&x);
        x.iter().zip(p).map(|(a, b)| a - b).collect()
    };
    let mut total = 0.0;
    for k in 0..snaps.u_hat.len() {
        let mut e = 0.0;
        for part in [|z: &Complex64| z.re, |z: &Complex64| z.im] {
            let u: Vec<f64> = snaps.u_hat[k].iter().map(part).collect();
            let du: Vec<f64> = snaps.du_hat[k].iter().map(part).collect();
            let ru = residual(u);
            e += system.stiffness().quad_form(&ru).max(0.0);
            let rd = residual(du);
            e += system.dual_sq(&system.mass().mul_vec(&rd))?;
        }
        total += pair_weight(&snaps.grid, k) * e;
    }
    Ok(total)
}

/// Galerkin restriction `(WᵀMW, WᵀKW)` of the full system.
pub fn reduce_system(basis: &ReducedBasis) -> Result<DiscreteSystem> {
    ensure(basis.rank() >= 1, "reduced basis is empty")?;
    DiscreteSystem::new(CsrMatrix::from_dense(&basis.m_r)?, CsrMatrix::from_dense(&basis.k_r)?)
}

/// `WᵀF(t)`.
pub struct ReducedRhs<'a> {
    pub basis: &'a ReducedBasis,
    pub full: &'a dyn RhsFunction,
}

impl RhsFunction for ReducedRhs<'_> {
    fn dim(&self) -> usize {
        self.basis.rank()
    }

    fn eval(&self, t: f64, out: &mut [f64]) {
        let g = self.full.at(t);
        out.copy_from_slice(&self.basis.restrict_functional(&g));
    }

    fn is_elementwise_quadratic(&self) -> bool {
        self.full.is_elementwise_quadratic()
    }
}

/// `∫_0^T ‖e‖²_V + ‖M e'‖²_{V*}` for `e = (I - P)u`, `u` the exact solution
/// of `u' + Au = 0`, `u(0) = u0`, evaluated in closed form mode by mode.
pub fn time_domain_projection_error(
    spec: &SpectralFactorization,
    basis: &ReducedBasis,
    u0: &[f64],
    t_end: f64,
) -> Result<f64> {
    let n = spec.dim();
    ensure(basis.full_dim() == n && u0.len() == n, "dimension mismatch")?;
    ensure(t_end > 0.0, "final time must be positive")?;
    let lam = &spec.eigenvalues;
    let c = spec.modal_coords(u0);
    let r = basis.rank();
    // modal form of the projector: I - A B with A = EᵀMW and B = AᵀΛ
    let a = &spec.modal_mass * &basis.w;
    let b = DMatrix::from_fn(r, n, |p, i| a[(i, p)] * lam[i]);
    let mut q = -(&a * &b);
    for i in 0..n {
        q[(i, i)] += 1.0;
    }
    let gram = DMatrix::from_fn(n, n, |i, j| {
        let s = lam[i] + lam[j];
        -libm::expm1(-s * t_end) / s
    });
    // row k of X holds mode k of the residual split by source mode
    let x = DMatrix::from_fn(n, n, |k, i| q[(k, i)] * c[i]);
    let y = DMatrix::from_fn(n, n, |k, i| q[(k, i)] * c[i] * lam[i]);
    let xg = &x * &gram;
    let yg = &y * &gram;
    let mut total = 0.0;
    for k in 0..n {
        let v: f64 = (0..n).map(|j| xg[(k, j)] * x[(k, j)]).sum();
        let d: f64 = (0..n).map(|j| yg[(k, j)] * y[(k, j)]).sum();
        total += lam[k] * v + d / lam[k];
    }
    Ok(total.max(0.0))
}

/// Outcome of one adaptive iteration on the reduced system.
#[derive(Debug, Clone, PartialEq)]
pub struct MorIterate {
    pub index: usize,
    pub n_elems: usize,
    pub eta: f64,
    /// `‖u - W u_R‖_X` against the exact modal solution, when available.
    pub err_x: Option<f64>,
    /// Cumulative reduced stage solves.
    pub solves_reduced: u64,
}

/// Snapshot construction, POD, and adaptive stepping on the reduced system.
#[derive(Debug, Clone)]
pub struct MorRun {
    pub basis: ReducedBasis,
    pub epsilon_m: f64,
    pub snapshot_solves: u64,
    pub iterates: Vec<MorIterate>,
}

/// Parameters of [`mor_pipeline`].
#[derive(Debug, Clone, Copy)]
pub struct MorParams {
    pub m: usize,
    pub r: usize,
    pub alpha: f64,
    pub d: f64,
    pub adaptive: AdaptiveParams,
}

pub fn mor_pipeline(
    system: &DiscreteSystem,
    fhat: Option<LaplaceLoad<'_>>,
    f: &dyn RhsFunction,
    u0: &[f64],
    initial: &TimeMesh,
    params: &MorParams,
    reference: Option<&SpectralFactorization>,
) -> Result<MorRun> {
    ensure(params.alpha >= 1.0, "alpha must be at least 1")?;
    ensure(f.dim() == system.dim(), "load has wrong dimension")?;
    let grid = SincGrid::new(params.alpha, params.d, params.m)?;
    let before = system.counters().snapshot().shifted_solves;
    let snaps = build_snapshots(system, fhat, u0, &grid)?;
    let snapshot_solves = system.counters().snapshot().shifted_solves - before;
    let basis = build_reduced_basis(system, &snaps, params.r)?;
    let eps = epsilon_m(system, &snaps, &basis)?;
    let reduced = reduce_system(&basis)?;
    let rf = ReducedRhs { basis: &basis, full: f };
    let u0_r = basis.coords(u0);
    let mut iterates = Vec::new();
    adaptive_loop_with(&reduced, &rf, &u0_r, initial, &params.adaptive, |it| {
        let err_x = match reference {
            Some(spec) => Some(xnorm_error_modal(spec, &basis.lift_solution(&it.solution), u0)?),
            None => None,
        };
        iterates.push(MorIterate {
            index: it.index,
            n_elems: it.solution.mesh.len(),
            eta: it.estimate.total(),
            err_x,
            solves_reduced: reduced.counters().snapshot().stage_solves,
        });
        Ok(())
    })?;
    Ok(MorRun {
        basis,
        epsilon_m: eps,
        snapshot_solves,
        iterates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radau::{solve_time, PolynomialRhs, ZeroRhs};

    fn small_system() -> DiscreteSystem {
        DiscreteSystem::diagonal(&[1.0, 2.0, 0.5, 1.5], &[1.0, 6.0, 4.0, 30.0]).unwrap()
    }

    #[test]
    fn scalar_snapshot_is_resolvent() {
        let sys = DiscreteSystem::scalar(3.0).unwrap();
        let s = Complex64::new(1.0, 2.5);
        let u = laplace_snapshot(&sys, None, &[2.0], s).unwrap();
        let want = Complex64::new(2.0, 0.0) / (s + 3.0);
        assert!((u[0] - want).norm() < 1e-15);
    }

    #[test]
    fn eigenvector_snapshot_decouples() {
        let sys = small_system();
        let u0 = [0.0, 1.0, 0.0, 0.0];
        let s = Complex64::new(1.0, -0.7);
        let u = laplace_snapshot(&sys, None, &u0, s).unwrap();
        // K e = λ M e with λ = 3 for the second unit vector
        let want = Complex64::new(1.0, 0.0) / (s + 3.0);
        assert!((u[1] - want).norm() < 1e-15);
        assert!(u[0].norm() + u[2].norm() + u[3].norm() == 0.0);
    }

    #[test]
    fn conjugate_symmetry_and_counters() {
        let sys = small_system();
        let u0 = [1.0, -1.0, 0.5, 2.0];
        let grid = SincGrid::new(1.0, core::f64::consts::FRAC_PI_4, 6).unwrap();
        let snaps = build_snapshots(&sys, None, &u0, &grid).unwrap();
        assert_eq!(sys.counters().snapshot().shifted_solves, 7);
        for k in 1..=6i64 {
            let direct = laplace_snapshot(&sys, None, &u0, grid.point(-k)).unwrap();
            for (a, b) in direct.iter().zip(snaps.snapshot(-k)) {
                assert!((a - b).norm() < 1e-14);
            }
        }
        let single = build_snapshots(&sys, None, &u0, &SincGrid::new(1.0, 0.5, 0).unwrap()).unwrap();
        assert_eq!(single.u_hat.len(), 1);
        assert_eq!(single.grid.point(0), Complex64::new(1.0, 0.0));
    }

    #[test]
    fn resolvent_of_load_transform() {
        let sys = small_system();
        let c = [1.0, 0.0, -2.0, 0.5];
        let fhat = |s: Complex64| c.iter().map(|v| Complex64::new(*v, 0.0) / (s + 1.0)).collect();
        let grid = SincGrid::new(1.0, 0.7, 3).unwrap();
        let snaps = build_snapshots(&sys, Some(&fhat), &[0.0; 4], &grid).unwrap();
        let (m, k) = ([1.0, 2.0, 0.5, 1.5], [1.0, 6.0, 4.0, 30.0]);
        for kk in 0..=3 {
            let s = grid.point(kk as i64);
            for i in 0..4 {
                let want = c[i] / ((s + 1.0) * (s * m[i] + k[i]));
                assert!((snaps.u_hat[kk][i] - want).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn single_snapshot_basis_is_normalized_snapshot() {
        let sys = DiscreteSystem::diagonal(&[1.0, 1.0], &[2.0, 5.0]).unwrap();
        let snaps = SnapshotSet {
            grid: SincGrid::new(1.0, 0.5, 0).unwrap(),
            u0: vec![0.0, 0.0],
            u_hat: vec![vec![Complex64::new(1.0, 0.0), Complex64::new(2.0, 0.0)]],
            du_hat: vec![vec![Complex64::new(0.0, 0.0); 2]],
        };
        let b = build_reduced_basis(&sys, &snaps, 1).unwrap();
        let nrm = libm::sqrt(2.0 + 5.0 * 4.0);
        assert!((b.w[(0, 0)].abs() - 1.0 / nrm).abs() < 1e-14);
        assert!((b.w[(1, 0)].abs() - 2.0 / nrm).abs() < 1e-14);
        assert!(b.w[(0, 0)] * b.w[(1, 0)] > 0.0);
        let b2 = build_reduced_basis(&sys, &snaps, 2).unwrap();
        assert_eq!(b2.rank(), 1);
        assert!(b2.rank_deficient);
    }

    #[test]
    fn full_span_gives_zero_goal_and_zero_basis_gives_raw_sum() {
        let sys = DiscreteSystem::diagonal(&[1.0, 2.0, 1.0, 1.0, 3.0], &[2.0, 3.0, 7.0, 1.0, 9.0]).unwrap();
        // data living in the first three coordinates
        let u0 = [1.0, 0.5, -1.0, 0.0, 0.0];
        let grid = SincGrid::new(1.0, 0.6, 4).unwrap();
        let snaps = build_snapshots(&sys, None, &u0, &grid).unwrap();
        let b3 = build_reduced_basis(&sys, &snaps, 3).unwrap();
        let raw = {
            let b0 = build_reduced_basis(&sys, &snaps, 0).unwrap();
            epsilon_m(&sys, &snaps, &b0).unwrap()
        };
        let mut want = 0.0;
        for k in -4i64..=4 {
            let u = snaps.snapshot(k);
            let s = grid.point(k);
            let mut e = 0.0;
            for i in 0..5 {
                let du = s * u[i] - u0[i];
                e += sys.stiffness().get(i, i) * u[i].norm_sqr();
                let mi = sys.mass().get(i, i);
                e += mi * mi * du.norm_sqr() / sys.stiffness().get(i, i);
            }
            want += grid.weights[grid.index(k)] * e;
        }
        assert!((raw - want).abs() < 1e-12 * want);
        assert!(epsilon_m(&sys, &snaps, &b3).unwrap() <= 1e-18 * raw);
        let mut prev = raw;
        for r in 1..=3 {
            let e = epsilon_m(&sys, &snaps, &build_reduced_basis(&sys, &snaps, r).unwrap()).unwrap();
            assert!(e <= prev * (1.0 + 1e-12));
            prev = e;
        }
    }

    #[test]
    fn projector_is_k_orthogonal() {
        let sys = small_system();
        let grid = SincGrid::new(1.0, 0.7, 5).unwrap();
        let snaps = build_snapshots(&sys, None, &[1.0, 2.0, -1.0, 0.3], &grid).unwrap();
        let b = build_reduced_basis(&sys, &snaps, 2).unwrap();
        let gram = b.w.transpose() * &b.kw;
        assert!((gram - DMatrix::identity(2, 2)).amax() < 1e-12);
        let x = [0.3, -1.0, 2.0, 0.7];
        let y = [1.0, 0.2, 0.0, -0.4];
        let px = b.project(&x);
        let ppx = b.project(&px);
        assert!(px.iter().zip(&ppx).all(|(a, c)| (a - c).abs() < 1e-12));
        let lhs = k_inner(&sys, &px, &y);
        let rhs = k_inner(&sys, &x, &b.project(&y));
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn eigenvector_basis_gives_scalar_system() {
        let sys = small_system();
        let lam = 30.0 / 1.5;
        let mut col = DMatrix::zeros(4, 1);
        // e_4 normalized in M is 1/√1.5, then scaled to unit V-norm
        col[(3, 0)] = 1.0 / libm::sqrt(30.0);
        let basis = ReducedBasis {
            kw: sys.stiffness().to_dense() * &col,
            m_r: col.transpose() * sys.mass().to_dense() * &col,
            k_r: col.transpose() * sys.stiffness().to_dense() * &col,
            w: col,
            singular_values: vec![],
            rank_deficient: false,
        };
        let red = reduce_system(&basis).unwrap();
        assert!((red.mass().get(0, 0) - 1.0 / lam).abs() < 1e-15);
        assert!((red.stiffness().get(0, 0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn galerkin_reproduction() {
        let sys = small_system();
        let grid = SincGrid::new(1.0, 0.7, 4).unwrap();
        let u0 = [1.0, 0.0, -0.5, 0.0];
        let snaps = build_snapshots(&sys, None, &u0, &grid).unwrap();
        let basis = build_reduced_basis(&sys, &snaps, 2).unwrap();
        // a load in K·span(W)
        let kw0: Vec<f64> = basis.kw.column(0).iter().copied().collect();
        let kw1: Vec<f64> = basis.kw.column(1).iter().copied().collect();
        let f = PolynomialRhs {
            coeffs: vec![kw0.clone(), kw1.iter().map(|v| 2.0 * v).collect(), kw0.iter().map(|v| -v).collect()],
        };
        let mesh = TimeMesh::uniform(1.0, 7).unwrap();
        let full = solve_time(&sys, &mesh, &f, &u0).unwrap();
        let red = reduce_system(&basis).unwrap();
        let rf = ReducedRhs { basis: &basis, full: &f };
        let sol_r = solve_time(&red, &mesh, &rf, &basis.coords(&u0)).unwrap();
        let lifted = basis.lift_solution(&sol_r);
        for j in 0..=mesh.len() {
            for (a, b) in lifted.nodal(j).iter().zip(full.nodal(j)) {
                assert!((a - b).abs() < 1e-9);
            }
        }
        let _ = ZeroRhs(4);
    }

    #[test]
    fn modal_projection_error_matches_direct_quadrature() {
        let sys = small_system();
        let spec = sys.eigendecompose().unwrap();
        let grid = SincGrid::new(1.0, 0.7, 4).unwrap();
        let u0 = [1.0, 0.4, -0.5, 0.2];
        let snaps = build_snapshots(&sys, None, &u0, &grid).unwrap();
        let basis = build_reduced_basis(&sys, &snaps, 2).unwrap();
        let exact = time_domain_projection_error(&spec, &basis, &u0, 1.0).unwrap();
        let (x, w) = crate::quad::gauss_legendre(20);
        let mut direct = 0.0;
        let panels = 200;
        for p in 0..panels {
            for (xi, wi) in x.iter().zip(&w) {
                let t = (p as f64 + xi) / panels as f64;
                let u = spec.modal_solution(&u0, t);
                let du: Vec<f64> = (0..4).map(|i| -sys.stiffness().get(i, i) / sys.mass().get(i, i) * u[i]).collect();
                let pu = basis.project(&u);
                let pdu = basis.project(&du);
                let e: Vec<f64> = u.iter().zip(&pu).map(|(a, b)| a - b).collect();
                let de: Vec<f64> = du.iter().zip(&pdu).map(|(a, b)| a - b).collect();
                let val = sys.stiffness().quad_form(&e) + sys.dual_sq(&sys.mass().mul_vec(&de)).unwrap();
                direct += wi / panels as f64 * val;
            }
        }
        assert!((exact - direct).abs() < 1e-10 * direct.max(1e-300), "{exact} {direct}");
    }
}
