//! Two-stage Radau IIA time stepping with its quadratic spline
//! reconstruction, the residual estimator, a Crank–Nicolson comparator and
//! the adaptive refinement loop.
//!
//! On an element `T = [t_T, t_T + h]` with local coordinate `s ∈ [0, 1]` the
//! solution is the quadratic
//! `u(s) = u_T + h (k1 (3s - 1.5s²) / 2 + k2 (1.5s² - s) / 2)`,
//! whose time derivative interpolates `k1` at `s = 1/3` and `k2` at `s = 1`.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::error::{ensure, Error, Result};
use crate::gelfand::{DiscreteSystem, SpectralFactorization};
use crate::linalg::BandLdl;
use crate::quad::gauss_legendre;
use crate::time_mesh::{doerfler_mark, MarkSet, TimeMesh};

const SQRT2: f64 = core::f64::consts::SQRT_2;

/// Load vector `F(t)` of the right-hand side.
pub trait RhsFunction {
    fn dim(&self) -> usize;

    /// Writes `F(t)` into `out`.
    fn eval(&self, t: f64, out: &mut [f64]);

    /// True when `F` is a quadratic polynomial on every element.
    fn is_elementwise_quadratic(&self) -> bool {
        false
    }

    fn at(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.eval(t, &mut out);
        out
    }
}

/// `F = 0`.
#[derive(Debug, Clone, Copy)]
pub struct ZeroRhs(pub usize);

impl RhsFunction for ZeroRhs {
    fn dim(&self) -> usize {
        self.0
    }
    fn eval(&self, _t: f64, out: &mut [f64]) {
        out.fill(0.0);
    }
    fn is_elementwise_quadratic(&self) -> bool {
        true
    }
}

/// `F(t) = Σ_j c_j t^j` with vector coefficients.
#[derive(Debug, Clone)]
pub struct PolynomialRhs {
    pub coeffs: Vec<Vec<f64>>,
}

impl RhsFunction for PolynomialRhs {
    fn dim(&self) -> usize {
        self.coeffs.first().map_or(0, Vec::len)
    }
    fn eval(&self, t: f64, out: &mut [f64]) {
        out.fill(0.0);
        for c in self.coeffs.iter().rev() {
            for (o, ci) in out.iter_mut().zip(c) {
                *o = *o * t + ci;
            }
        }
    }
    fn is_elementwise_quadratic(&self) -> bool {
        self.coeffs.len() <= 3
    }
}

/// `F(t) = φ(t) g` for a fixed load vector `g`.
pub struct SeparableRhs<P: Fn(f64) -> f64> {
    pub load: Vec<f64>,
    pub profile: P,
}

impl<P: Fn(f64) -> f64> RhsFunction for SeparableRhs<P> {
    fn dim(&self) -> usize {
        self.load.len()
    }
    fn eval(&self, t: f64, out: &mut [f64]) {
        let p = (self.profile)(t);
        for (o, g) in out.iter_mut().zip(&self.load) {
            *o = p * g;
        }
    }
}

/// Which time discretization produced a spline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Two-stage Radau IIA (hybrid Euler / Crank–Nicolson).
    Hybrid,
    /// Crank–Nicolson, piecewise linear in time.
    CrankNicolson,
}

/// Piecewise quadratic (or linear) trajectory over a time mesh.
#[derive(Debug, Clone)]
pub struct SplineSolution {
    pub mesh: TimeMesh,
    pub scheme: Scheme,
    pub u0: Vec<f64>,
    /// Value at the left endpoint of each element.
    pub left: Vec<Vec<f64>>,
    pub k1: Vec<Vec<f64>>,
    pub k2: Vec<Vec<f64>>,
    /// Value at `t_end`.
    pub u_end: Vec<f64>,
}

impl SplineSolution {
    pub fn dim(&self) -> usize {
        self.u0.len()
    }

    /// Value at local coordinate `s` of element `i`.
    pub fn value_local(&self, i: usize, s: f64) -> Vec<f64> {
        let h = self.mesh.size(i);
        let a = h * (3.0 * s - 1.5 * s * s) / 2.0;
        let b = h * (1.5 * s * s - s) / 2.0;
        self.left[i]
            .iter()
            .zip(&self.k1[i])
            .zip(&self.k2[i])
            .map(|((u, k1), k2)| u + a * k1 + b * k2)
            .collect()
    }

    /// Time derivative at local coordinate `s` of element `i`.
    pub fn derivative_local(&self, i: usize, s: f64) -> Vec<f64> {
        let a = (3.0 - 3.0 * s) / 2.0;
        let b = (3.0 * s - 1.0) / 2.0;
        self.k1[i]
            .iter()
            .zip(&self.k2[i])
            .map(|(k1, k2)| a * k1 + b * k2)
            .collect()
    }

    /// Constant second time derivative on element `i`.
    pub fn second_derivative(&self, i: usize) -> Vec<f64> {
        let c = 1.5 / self.mesh.size(i);
        self.k1[i]
            .iter()
            .zip(&self.k2[i])
            .map(|(k1, k2)| c * (k2 - k1))
            .collect()
    }

    /// Value at breakpoint `j` (`0..=len`).
    pub fn nodal(&self, j: usize) -> &[f64] {
        if j < self.left.len() {
            &self.left[j]
        } else {
            &self.u_end
        }
    }
}

/// `(u(t), ∂_t u(t))`; interior breakpoints use the left element.
pub fn eval_spline(sol: &SplineSolution, t: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let i = sol.mesh.locate(t)?;
    let s = ((t - sol.mesh.left(i)) / sol.mesh.size(i)).clamp(0.0, 1.0);
    Ok((sol.value_local(i, s), sol.derivative_local(i, s)))
}

/// Values of `F` at the local nodes `s = 0, 1/3, 1` of an element.
fn rhs_nodes(f: &dyn RhsFunction, t_left: f64, h: f64) -> [Vec<f64>; 3] {
    [f.at(t_left), f.at(t_left + h / 3.0), f.at(t_left + h)]
}

/// Derivative with respect to `s` of the quadratic through the three node values.
fn rhs_ds(nodes: &[Vec<f64>; 3], s: f64) -> Vec<f64> {
    let l0 = 6.0 * s - 4.0;
    let l1 = -4.5 * (2.0 * s - 1.0);
    let l2 = 3.0 * s - 0.5;
    (0..nodes[0].len())
        .map(|j| l0 * nodes[0][j] + l1 * nodes[1][j] + l2 * nodes[2][j])
        .collect()
}

/// Output of one Radau step.
#[derive(Debug, Clone)]
pub struct StepResult {
    pub k1: Vec<f64>,
    pub k2: Vec<f64>,
    pub u_next: Vec<f64>,
}

/// Time stepper with factorizations cached per element size.
pub struct RadauSolver<'a> {
    system: &'a DiscreteSystem,
    stage: BTreeMap<u64, BandLdl<Complex64>>,
    trapezoid: BTreeMap<u64, BandLdl<f64>>,
}

impl<'a> RadauSolver<'a> {
    pub fn new(system: &'a DiscreteSystem) -> Self {
        Self {
            system,
            stage: BTreeMap::new(),
            trapezoid: BTreeMap::new(),
        }
    }

    pub fn system(&self) -> &'a DiscreteSystem {
        self.system
    }

    fn stage_factor(&mut self, h: f64) -> Result<&BandLdl<Complex64>> {
        let key = h.to_bits();
        if !self.stage.contains_key(&key) {
            // eigenvalue 1/3 + i√2/6 of the Butcher matrix
            let mu = Complex64::new(1.0 / 3.0, SQRT2 / 6.0);
            let f = BandLdl::factor_combination(
                self.system.mass(),
                Complex64::new(1.0, 0.0),
                self.system.stiffness(),
                mu * h,
            )?;
            self.system.counters().add_factorization();
            self.stage.insert(key, f);
        }
        Ok(&self.stage[&key])
    }

    fn trapezoid_factor(&mut self, h: f64) -> Result<&BandLdl<f64>> {
        let key = h.to_bits();
        if !self.trapezoid.contains_key(&key) {
            let a = self
                .system
                .mass()
                .linear_combination(1.0, self.system.stiffness(), 0.5 * h)?;
            let f = BandLdl::factor_real(&a)?;
            self.system.counters().add_factorization();
            self.trapezoid.insert(key, f);
        }
        Ok(&self.trapezoid[&key])
    }

    /// One step of the stage system
    /// `M k_i + h Σ_j a_ij K k_j = F(t + c_i h) - K u_prev`.
    pub fn step(
        &mut self,
        u_prev: &[f64],
        f: &dyn RhsFunction,
        t_left: f64,
        h: f64,
    ) -> Result<StepResult> {
        let n = self.system.dim();
        ensure(u_prev.len() == n && f.dim() == n, "dimension mismatch")?;
        ensure(h.is_finite() && h > 0.0, "element size must be positive")?;
        ensure(u_prev.iter().all(|v| v.is_finite()), "state must be finite")?;
        let ku = self.system.stiffness().mul_vec(u_prev);
        let f1 = f.at(t_left + h / 3.0);
        let f2 = f.at(t_left + h);
        // b = 2 Re(v w) with v = (1, 1 - 2√2 i) determines w.
        let w: Vec<Complex64> = (0..n)
            .map(|j| {
                let b1 = f1[j] - ku[j];
                let b2 = f2[j] - ku[j];
                Complex64::new(0.5 * b1, (b2 - b1) / (4.0 * SQRT2))
            })
            .collect();
        let counters = self.system.counters();
        let z = self.stage_factor(h)?.solve(&w)?;
        counters.add_stage(2);
        let v2 = Complex64::new(1.0, -2.0 * SQRT2);
        let k1: Vec<f64> = z.iter().map(|z| 2.0 * z.re).collect();
        let k2: Vec<f64> = z.iter().map(|z| 2.0 * (v2 * z).re).collect();
        let u_next: Vec<f64> = (0..n)
            .map(|j| u_prev[j] + h * (0.75 * k1[j] + 0.25 * k2[j]))
            .collect();
        if !u_next.iter().all(|v| v.is_finite()) {
            return Err(Error::NumericalFailure("non-finite stage values"));
        }
        Ok(StepResult { k1, k2, u_next })
    }

    /// Trapezoidal step `(M + hK/2) u_next = (M - hK/2) u_prev + ∫_T F`.
    pub fn cn_step(&mut self, u_prev: &[f64], f: &dyn RhsFunction, t_left: f64, h: f64) -> Result<Vec<f64>> {
        let n = self.system.dim();
        ensure(u_prev.len() == n && f.dim() == n, "dimension mismatch")?;
        ensure(h.is_finite() && h > 0.0, "element size must be positive")?;
        let mu = self.system.mass().mul_vec(u_prev);
        let ku = self.system.stiffness().mul_vec(u_prev);
        let f1 = f.at(t_left + h / 3.0);
        let f2 = f.at(t_left + h);
        let rhs: Vec<f64> = (0..n)
            .map(|j| mu[j] - 0.5 * h * ku[j] + h * (0.75 * f1[j] + 0.25 * f2[j]))
            .collect();
        let counters = self.system.counters();
        let u = self.trapezoid_factor(h)?.solve(&rhs)?;
        counters.add_stage(1);
        if !u.iter().all(|v| v.is_finite()) {
            return Err(Error::NumericalFailure("non-finite trapezoidal update"));
        }
        Ok(u)
    }

    pub fn solve(&mut self, mesh: &TimeMesh, f: &dyn RhsFunction, u0: &[f64], scheme: Scheme) -> Result<SplineSolution> {
        let n = self.system.dim();
        ensure(u0.len() == n, "initial value has the wrong dimension")?;
        ensure(f.dim() == n, "right-hand side has the wrong dimension")?;
        let mut left = Vec::with_capacity(mesh.len());
        let mut k1s = Vec::with_capacity(mesh.len());
        let mut k2s = Vec::with_capacity(mesh.len());
        let mut u = u0.to_vec();
        for i in 0..mesh.len() {
            let (t, h) = (mesh.left(i), mesh.size(i));
            let (k1, k2, next) = match scheme {
                Scheme::Hybrid => {
                    let r = self.step(&u, f, t, h)?;
                    (r.k1, r.k2, r.u_next)
                }
                Scheme::CrankNicolson => {
                    let next = self.cn_step(&u, f, t, h)?;
                    let slope: Vec<f64> = next.iter().zip(&u).map(|(a, b)| (a - b) / h).collect();
                    (slope.clone(), slope, next)
                }
            };
            left.push(core::mem::replace(&mut u, next));
            k1s.push(k1);
            k2s.push(k2);
        }
        Ok(SplineSolution {
            mesh: mesh.clone(),
            scheme,
            u0: u0.to_vec(),
            left,
            k1: k1s,
            k2: k2s,
            u_end: u,
        })
    }
}

/// One hybrid step on `[t_left, t_left + h]`.
pub fn radau_step(system: &DiscreteSystem, u_prev: &[f64], f: &dyn RhsFunction, t_left: f64, h: f64) -> Result<StepResult> {
    RadauSolver::new(system).step(u_prev, f, t_left, h)
}

/// Hybrid scheme over the whole mesh.
pub fn solve_time(system: &DiscreteSystem, mesh: &TimeMesh, f: &dyn RhsFunction, u0: &[f64]) -> Result<SplineSolution> {
    RadauSolver::new(system).solve(mesh, f, u0, Scheme::Hybrid)
}

/// Crank–Nicolson over the whole mesh, stored as a linear spline.
pub fn crank_nicolson_solve(system: &DiscreteSystem, mesh: &TimeMesh, f: &dyn RhsFunction, u0: &[f64]) -> Result<SplineSolution> {
    RadauSolver::new(system).solve(mesh, f, u0, Scheme::CrankNicolson)
}

/// `∫_T (F - M∂u - Ku) dt` with `F` evaluated directly, and the same residual at `t_{T+1}`.
pub fn residual_moments(
    system: &DiscreteSystem,
    sol: &SplineSolution,
    f: &dyn RhsFunction,
    elem: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    ensure(elem < sol.mesh.len(), "element index out of range")?;
    ensure(sol.dim() == system.dim(), "solution does not match the system")?;
    let n = system.dim();
    let (t0, h) = (sol.mesh.left(elem), sol.mesh.size(elem));
    let residual = |s: f64| -> Vec<f64> {
        let fv = f.at(t0 + s * h);
        let md = system.mass().mul_vec(&sol.derivative_local(elem, s));
        let ku = system.stiffness().mul_vec(&sol.value_local(elem, s));
        (0..n).map(|j| fv[j] - md[j] - ku[j]).collect()
    };
    let (x, w) = gauss_legendre(5);
    let mut mean = vec![0.0; n];
    for (s, w) in x.iter().zip(&w) {
        let r = residual(*s);
        for j in 0..n {
            mean[j] += h * w * r[j];
        }
    }
    Ok((mean, residual(1.0)))
}

/// Per-element squared estimator contributions.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateResult {
    pub eta_sq: Vec<f64>,
    pub total_sq: f64,
}

impl EstimateResult {
    pub fn total(&self) -> f64 {
        libm::sqrt(self.total_sq)
    }
}

/// `η(T)² = |T|² ∫_T ‖∂_t F - M∂²u - K∂u‖²_{V*} dt` with `F` replaced by its
/// quadratic interpolant at `s = 0, 1/3, 1`.
pub fn estimate(system: &DiscreteSystem, sol: &SplineSolution, f: &dyn RhsFunction) -> Result<EstimateResult> {
    ensure(sol.dim() == system.dim() && f.dim() == system.dim(), "dimension mismatch")?;
    let n = system.dim();
    let (gx, gw) = gauss_legendre(2);
    let mut eta_sq = Vec::with_capacity(sol.mesh.len());
    for i in 0..sol.mesh.len() {
        let (t0, h) = (sol.mesh.left(i), sol.mesh.size(i));
        let nodes = rhs_nodes(f, t0, h);
        let acc = match sol.scheme {
            Scheme::Hybrid => system.mass().mul_vec(&sol.second_derivative(i)),
            Scheme::CrankNicolson => vec![0.0; n],
        };
        let mut e = 0.0;
        for (s, w) in gx.iter().zip(&gw) {
            let df = rhs_ds(&nodes, *s);
            let kd = system.stiffness().mul_vec(&sol.derivative_local(i, *s));
            let r: Vec<f64> = (0..n).map(|j| df[j] / h - acc[j] - kd[j]).collect();
            e += w * system.dual_sq(&r)?;
        }
        eta_sq.push(h * h * h * e);
    }
    let total_sq = eta_sq.iter().sum();
    Ok(EstimateResult { eta_sq, total_sq })
}

/// Settings of the adaptive loop.
#[derive(Debug, Clone, Copy)]
pub struct AdaptiveParams {
    pub scheme: Scheme,
    pub theta: f64,
    pub grading: u32,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for AdaptiveParams {
    fn default() -> Self {
        Self {
            scheme: Scheme::Hybrid,
            theta: 0.5,
            grading: 4,
            tol: 0.0,
            max_iter: 30,
        }
    }
}

/// One pass of solve, estimate and mark.
#[derive(Debug, Clone)]
pub struct Iterate {
    pub index: usize,
    pub solution: SplineSolution,
    pub estimate: EstimateResult,
    /// Empty on the final iterate.
    pub marked: MarkSet,
}

/// Runs solve → estimate → mark → trisect, handing each iterate to `visit`.
pub fn adaptive_loop_with(
    system: &DiscreteSystem,
    f: &dyn RhsFunction,
    u0: &[f64],
    initial: &TimeMesh,
    params: &AdaptiveParams,
    mut visit: impl FnMut(&Iterate) -> Result<()>,
) -> Result<usize> {
    ensure(params.theta > 0.0 && params.theta <= 1.0, "theta must lie in (0, 1]")?;
    ensure(params.grading >= 1, "grading parameter must be at least 1")?;
    ensure(params.max_iter >= 1, "at least one iteration is required")?;
    ensure(params.tol >= 0.0, "tolerance must be nonnegative")?;
    let mut solver = RadauSolver::new(system);
    let mut mesh = initial.clone();
    for index in 0..params.max_iter {
        let solution = solver.solve(&mesh, f, u0, params.scheme)?;
        let estimate = estimate(system, &solution, f)?;
        if !estimate.total_sq.is_finite() {
            return Err(Error::NumericalFailure("error estimator is not finite"));
        }
        let last = estimate.total() <= params.tol || index + 1 == params.max_iter;
        let marked = if last {
            MarkSet {
                indices: Vec::new(),
                theta: params.theta,
            }
        } else {
            doerfler_mark(&estimate.eta_sq, params.theta)?
        };
        let it = Iterate {
            index,
            solution,
            estimate,
            marked,
        };
        visit(&it)?;
        if last {
            return Ok(index + 1);
        }
        mesh.refine_marked(&it.marked, params.grading)?;
    }
    Ok(params.max_iter)
}

/// Collecting form of [`adaptive_loop_with`].
pub fn adaptive_loop(
    system: &DiscreteSystem,
    f: &dyn RhsFunction,
    u0: &[f64],
    initial: &TimeMesh,
    params: &AdaptiveParams,
) -> Result<Vec<Iterate>> {
    let mut out = Vec::new();
    adaptive_loop_with(system, f, u0, initial, params, |it| {
        out.push(it.clone());
        Ok(())
    })?;
    Ok(out)
}

/// Sorted union of two breakpoint lists; coincident points are merged.
fn merge_breakpoints(a: &[f64], b: &[f64], tol: f64) -> Vec<f64> {
    let mut all: Vec<f64> = a.iter().chain(b).copied().collect();
    all.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = Vec::with_capacity(all.len());
    for t in all {
        if out.last().is_none_or(|&l| t - l > tol) {
            out.push(t);
        }
    }
    out
}

/// `‖a - b‖_X` for two splines on meshes of the same interval.
///
/// Both are polynomial on every element of the union mesh, so a
/// three-point rule integrates both terms exactly.
pub fn xnorm_difference(system: &DiscreteSystem, a: &SplineSolution, b: &SplineSolution) -> Result<f64> {
    ensure(a.dim() == system.dim() && b.dim() == system.dim(), "dimension mismatch")?;
    ensure(a.mesh.t_end() == b.mesh.t_end(), "solutions live on different intervals")?;
    let t_end = a.mesh.t_end();
    let pts = merge_breakpoints(&a.mesh.breakpoints(), &b.mesh.breakpoints(), 1e-13 * t_end);
    let (gx, gw) = gauss_legendre(3);
    let mut total = 0.0;
    let (mut ia, mut ib) = (0usize, 0usize);
    for w in pts.windows(2) {
        let (t0, t1) = (w[0], w[1]);
        let mid = 0.5 * (t0 + t1);
        while a.mesh.right(ia) < mid {
            ia += 1;
        }
        while b.mesh.right(ib) < mid {
            ib += 1;
        }
        let len = t1 - t0;
        for (x, wq) in gx.iter().zip(&gw) {
            let t = t0 + x * len;
            let sa = (t - a.mesh.left(ia)) / a.mesh.size(ia);
            let sb = (t - b.mesh.left(ib)) / b.mesh.size(ib);
            let d: Vec<f64> = a
                .value_local(ia, sa)
                .iter()
                .zip(b.value_local(ib, sb))
                .map(|(p, q)| p - q)
                .collect();
            let dd: Vec<f64> = a
                .derivative_local(ia, sa)
                .iter()
                .zip(b.derivative_local(ib, sb))
                .map(|(p, q)| p - q)
                .collect();
            let v = system.stiffness().quad_form(&d);
            let s = system.dual_sq(&system.mass().mul_vec(&dd))?;
            total += len * wq * (v + s);
        }
    }
    Ok(libm::sqrt(total.max(0.0)))
}

/// `∫_0^1 (p(s) - β e^{-γs})² ds` and `∫_0^1 (p'(s)/h + βλ e^{-γs})² ds` for
/// `p(s) = α0 + α1 s + α2 s²`.
fn modal_element_integrals(alpha: [f64; 3], beta: f64, lambda: f64, h: f64, rule: &(Vec<f64>, Vec<f64>)) -> (f64, f64) {
    let gamma = lambda * h;
    let [a0, a1, a2] = alpha;
    if gamma <= 4.0 {
        let (x, w) = rule;
        let mut iv = 0.0;
        let mut id = 0.0;
        for (s, w) in x.iter().zip(w) {
            let e = beta * libm::exp(-gamma * s);
            let d = a0 + s * (a1 + s * a2) - e;
            let dd = (a1 + 2.0 * a2 * s) / h + lambda * e;
            iv += w * d * d;
            id += w * dd * dd;
        }
        return (iv, id);
    }
    // Moments J_k(γ) = ∫_0^1 s^k e^{-γs} ds by forward recursion (stable for γ > k).
    let eg = libm::exp(-gamma);
    let j0 = (1.0 - eg) / gamma;
    let j1 = (j0 - eg) / gamma;
    let j2 = (2.0 * j1 - eg) / gamma;
    let e2 = libm::exp(-2.0 * gamma);
    let jj = (1.0 - e2) / (2.0 * gamma);
    let pp = a0 * a0 + a0 * a1 + (a1 * a1 + 2.0 * a0 * a2) / 3.0 + a1 * a2 / 2.0 + a2 * a2 / 5.0;
    let pe = a0 * j0 + a1 * j1 + a2 * j2;
    let iv = pp - 2.0 * beta * pe + beta * beta * jj;
    let (q0, q1) = (a1 / h, 2.0 * a2 / h);
    let qq = q0 * q0 + q0 * q1 + q1 * q1 / 3.0;
    let qe = q0 * j0 + q1 * j1;
    let id = qq + 2.0 * beta * lambda * qe + beta * beta * lambda * lambda * jj;
    (iv.max(0.0), id.max(0.0))
}

/// `‖u - u_exact‖_X` against the modal solution of `u' + Au = 0`, `u(0) = u0`.
pub fn xnorm_error_modal(spec: &SpectralFactorization, sol: &SplineSolution, u0: &[f64]) -> Result<f64> {
    ensure(sol.dim() == spec.dim() && u0.len() == spec.dim(), "dimension mismatch")?;
    let c0 = spec.modal_coords(u0);
    let rule = gauss_legendre(16);
    let mut total = 0.0;
    for i in 0..sol.mesh.len() {
        let (t0, h) = (sol.mesh.left(i), sol.mesh.size(i));
        let a = spec.modal_coords(&sol.left[i]);
        let k1 = spec.modal_coords(&sol.k1[i]);
        let k2 = spec.modal_coords(&sol.k2[i]);
        for m in 0..spec.dim() {
            let lambda = spec.eigenvalues[m];
            let alpha = [a[m], h * (1.5 * k1[m] - 0.5 * k2[m]), 0.75 * h * (k2[m] - k1[m])];
            let beta = c0[m] * libm::exp(-lambda * t0);
            let (iv, id) = modal_element_integrals(alpha, beta, lambda, h, &rule);
            total += lambda * h * iv + h / lambda * id;
        }
    }
    Ok(libm::sqrt(total))
}

/// `‖u - ref‖_X` against a reference spline, e.g. the finest computed approximation.
pub fn xnorm_error(system: &DiscreteSystem, sol: &SplineSolution, reference: &SplineSolution) -> Result<f64> {
    xnorm_difference(system, sol, reference)
}

/// Stability function of the two-stage Radau IIA method.
pub fn radau_stability(z: f64) -> f64 {
    (1.0 + z / 3.0) / (1.0 - 2.0 * z / 3.0 + z * z / 6.0)
}

/// Stability function of the trapezoidal rule.
pub fn cn_stability(z: f64) -> f64 {
    (1.0 + z / 2.0) / (1.0 - z / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn scalar_step_example() {
        let s = DiscreteSystem::scalar(1.0).unwrap();
        let r = radau_step(&s, &[1.0], &ZeroRhs(1), 0.0, 1.0).unwrap();
        assert!(close(r.k1[0], -8.0 / 11.0, 1e-15));
        assert!(close(r.k2[0], -4.0 / 11.0, 1e-15));
        assert!(close(r.u_next[0], 4.0 / 11.0, 1e-15));
        assert!(close(radau_stability(-1.0), 4.0 / 11.0, 1e-15));
    }

    #[test]
    fn quadrature_limit_for_tiny_lambda() {
        let s = DiscreteSystem::scalar(1e-14).unwrap();
        let f = SeparableRhs {
            load: vec![1.0],
            profile: |t: f64| libm::cos(t),
        };
        let (t, h) = (0.2, 0.5);
        let r = radau_step(&s, &[0.0], &f, t, h).unwrap();
        assert!(close(r.k1[0], libm::cos(t + h / 3.0), 1e-12));
        assert!(close(r.k2[0], libm::cos(t + h), 1e-12));
        let q = h * (0.75 * libm::cos(t + h / 3.0) + 0.25 * libm::cos(t + h));
        assert!(close(r.u_next[0], q, 1e-12));
    }

    #[test]
    fn scalar_reconstruction_and_residual() {
        let s = DiscreteSystem::scalar(1.0).unwrap();
        let mesh = TimeMesh::uniform(1.0, 1).unwrap();
        let sol = solve_time(&s, &mesh, &ZeroRhs(1), &[1.0]).unwrap();
        let (u, du) = eval_spline(&sol, 1.0).unwrap();
        assert!(close(u[0], 4.0 / 11.0, 1e-15) && close(du[0], -4.0 / 11.0, 1e-15));
        for t in [0.0, 0.25, 0.6] {
            let (u, du) = eval_spline(&sol, t).unwrap();
            assert!(close(u[0], 1.0 + (3.0 * t * t - 10.0 * t) / 11.0, 1e-15));
            assert!(close(du[0], (6.0 * t - 10.0) / 11.0, 1e-15));
        }
        let (mean, end) = residual_moments(&s, &sol, &ZeroRhs(1), 0).unwrap();
        assert!(mean[0].abs() < 1e-15 && end[0].abs() < 1e-15);
        let est = estimate(&s, &sol, &ZeroRhs(1)).unwrap();
        assert!(close(est.total_sq, 4.0 / 121.0, 1e-15));
        assert!(eval_spline(&sol, 1.5).is_err());
    }

    #[test]
    fn two_steps_match_stability_function() {
        let s = DiscreteSystem::scalar(1.0).unwrap();
        let mesh = TimeMesh::uniform(1.0, 2).unwrap();
        let sol = solve_time(&s, &mesh, &ZeroRhs(1), &[1.0]).unwrap();
        assert!(close(radau_stability(-0.5), 20.0 / 33.0, 1e-15));
        assert!(close(sol.u_end[0], (20.0f64 / 33.0).powi(2), 1e-15));
    }

    #[test]
    fn zero_data_gives_zero() {
        let s = DiscreteSystem::diagonal(&[1.0, 2.0], &[3.0, 4.0]).unwrap();
        let mesh = TimeMesh::uniform(2.0, 3).unwrap();
        let sol = solve_time(&s, &mesh, &ZeroRhs(2), &[0.0, 0.0]).unwrap();
        assert!(sol.left.iter().chain(&sol.k1).chain(&sol.k2).flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn crank_nicolson_examples() {
        let s = DiscreteSystem::scalar(1.0).unwrap();
        let mesh = TimeMesh::uniform(1.0, 1).unwrap();
        let sol = crank_nicolson_solve(&s, &mesh, &ZeroRhs(1), &[1.0]).unwrap();
        assert!(close(sol.u_end[0], 1.0 / 3.0, 1e-15));
        assert!(cn_stability(-1e8) < -0.99 && radau_stability(-1e8).abs() < 1e-7);
        let c = PolynomialRhs {
            coeffs: vec![vec![2.5]],
        };
        let mesh = TimeMesh::uniform(3.0, 5).unwrap();
        for scheme in [Scheme::Hybrid, Scheme::CrankNicolson] {
            let sol = RadauSolver::new(&s).solve(&mesh, &c, &[2.5], scheme).unwrap();
            for j in 0..=mesh.len() {
                assert!(close(sol.nodal(j)[0], 2.5, 1e-14));
            }
        }
    }

    #[test]
    fn estimator_vanishes_for_exact_quadratic() {
        // q(t) = q0 + q1 t + q2 t², F = M q' + K q
        let m = [1.0, 2.0];
        let k = [3.0, 5.0];
        let s = DiscreteSystem::diagonal(&m, &k).unwrap();
        let q = [[1.0, -2.0], [0.5, 1.0], [0.25, -0.75]];
        let coeffs: Vec<Vec<f64>> = (0..3)
            .map(|p| {
                (0..2)
                    .map(|j| {
                        let d = if p < 2 { (p as f64 + 1.0) * q[p + 1][j] } else { 0.0 };
                        m[j] * d + k[j] * q[p][j]
                    })
                    .collect()
            })
            .collect();
        let f = PolynomialRhs { coeffs };
        let mesh = TimeMesh::uniform(1.0, 3).unwrap().trisect(1, 2).unwrap();
        let sol = solve_time(&s, &mesh, &f, &[q[0][0], q[0][1]]).unwrap();
        let est = estimate(&s, &sol, &f).unwrap();
        assert!(est.total_sq < 1e-26);
        let (u, _) = eval_spline(&sol, 0.7).unwrap();
        for j in 0..2 {
            assert!(close(u[j], q[0][j] + 0.7 * q[1][j] + 0.49 * q[2][j], 1e-13));
        }
    }

    #[test]
    fn cubic_data_keeps_endpoint_condition() {
        let s = DiscreteSystem::scalar(2.0).unwrap();
        let f = PolynomialRhs {
            coeffs: vec![vec![0.0], vec![0.0], vec![0.0], vec![1.0]],
        };
        let mesh = TimeMesh::uniform(1.0, 2).unwrap();
        let sol = solve_time(&s, &mesh, &f, &[0.5]).unwrap();
        for e in 0..2 {
            let (mean, end) = residual_moments(&s, &sol, &f, e).unwrap();
            assert!(end[0].abs() < 1e-14);
            assert!(mean[0].abs() > 1e-6);
        }
    }

    #[test]
    fn modal_error_matches_union_mesh_error_for_fine_reference() {
        let s = DiscreteSystem::diagonal(&[1.0, 1.0], &[1.0, 30.0]).unwrap();
        let spec = s.eigendecompose().unwrap();
        let u0 = [1.0, 1.0];
        let coarse = solve_time(&s, &TimeMesh::uniform(1.0, 4).unwrap(), &ZeroRhs(2), &u0).unwrap();
        let fine = solve_time(&s, &TimeMesh::uniform(1.0, 4 * 81).unwrap(), &ZeroRhs(2), &u0).unwrap();
        let e_modal = xnorm_error_modal(&spec, &coarse, &u0).unwrap();
        let e_ref = xnorm_difference(&s, &coarse, &fine).unwrap();
        assert!((e_modal - e_ref).abs() < 1e-3 * e_modal, "{e_modal} {e_ref}");
        assert!(xnorm_difference(&s, &coarse, &coarse).unwrap() == 0.0);
    }

    #[test]
    fn modal_integrals_agree_across_branches() {
        let rule = gauss_legendre(40);
        for &(lambda, h) in &[(4.5, 1.0), (10.0, 0.5), (100.0, 0.3)] {
            let alpha = [0.3, -0.2, 0.05];
            let (a, b) = modal_element_integrals(alpha, 0.7, lambda, h, &rule);
            // brute-force reference
            let (x, w) = gauss_legendre(40);
            let mut iv = 0.0;
            let mut id = 0.0;
            for (s, w) in x.iter().zip(&w) {
                let e = 0.7 * libm::exp(-lambda * h * s);
                let d = alpha[0] + alpha[1] * s + alpha[2] * s * s - e;
                let dd = (alpha[1] + 2.0 * alpha[2] * s) / h + lambda * e;
                iv += w * d * d;
                id += w * dd * dd;
            }
            assert!((a - iv).abs() < 1e-10 * iv.max(1.0));
            assert!((b - id).abs() < 1e-10 * id.max(1.0));
        }
    }

    #[test]
    fn adaptive_loop_trivial_cases() {
        let s = DiscreteSystem::scalar(1.0).unwrap();
        let mesh = TimeMesh::uniform(1.0, 3).unwrap();
        let params = AdaptiveParams {
            tol: 1e-12,
            ..Default::default()
        };
        let its = adaptive_loop(&s, &ZeroRhs(1), &[0.0], &mesh, &params).unwrap();
        assert_eq!(its.len(), 1);
        assert_eq!(its[0].estimate.total_sq, 0.0);
        let params = AdaptiveParams {
            theta: 1.0,
            max_iter: 3,
            ..Default::default()
        };
        let its = adaptive_loop(&s, &ZeroRhs(1), &[1.0], &mesh, &params).unwrap();
        assert_eq!(its.len(), 3);
        for (i, it) in its.iter().enumerate() {
            let m = &it.solution.mesh;
            assert_eq!(m.len(), 3 * 3usize.pow(i as u32));
            assert!(m.levels().iter().all(|&l| l == i as u32));
        }
    }
}
