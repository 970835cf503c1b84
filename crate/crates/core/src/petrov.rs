//! The time-stepping scheme rewritten as a Petrov–Galerkin method, with
//! dense assembly, discrete inf-sup constants and the invisible modes.
//!
//! Ansatz functions on an element with local coordinate `s` are the nodal
//! hats `1 - s`, `s` and the bubble `4s(1 - s)`. Tests are the indicator
//! `χ_T`, the scaled endpoint functional `Φ_T = |T| Ψ_T` and one extra row
//! for the initial value.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{ensure, Error, Result};
use crate::gelfand::DiscreteSystem;
use crate::quad::gauss_legendre;
use crate::radau::{RhsFunction, SplineSolution};
use crate::time_mesh::TimeMesh;

/// Largest mesh the dense instruments accept.
pub const MAX_DENSE_ELEMENTS: usize = 512;

/// Values of `Ψ_{[0,1]}` on the thirds of `[0, 1]` and its `L²` norm.
pub fn psi_on_reference() -> ([f64; 3], f64) {
    ([1.0, -3.5, 5.5], libm::sqrt(14.5))
}

/// `(q(t_{T+1}), ∂_t q(t_{T+1}))` for the quadratic with `q(t_T) = 1` whose
/// residual `q' + λq` has zero mean on `T` and vanishes at `t_{T+1}`.
pub fn q_invisible(lambda: f64, h: f64) -> Result<(f64, f64)> {
    ensure(lambda > 0.0 && lambda.is_finite(), "lambda must be positive")?;
    ensure(h > 0.0 && h.is_finite(), "element size must be positive")?;
    let g = lambda * h;
    let q = 2.0 * (3.0 - g) / (g * g + 4.0 * g + 6.0);
    Ok((q, -lambda * q))
}

/// The 2×2 block coupling `(l_T, q_T)` to the tests `(χ_T, Φ_T)` and its determinant.
pub fn mlambda(gamma: f64) -> Result<([[f64; 2]; 2], f64)> {
    ensure(gamma >= 0.0 && gamma.is_finite(), "gamma must be nonnegative")?;
    let m = [[1.0 + gamma / 2.0, 2.0 * gamma / 3.0], [1.0 + gamma, -4.0]];
    let det = -(2.0 * gamma * gamma / 3.0 + 8.0 * gamma / 3.0 + 4.0);
    Ok((m, det))
}

/// Ansatz values and time derivatives at local coordinate `s`.
fn ansatz(s: f64, h: f64) -> ([f64; 3], [f64; 3]) {
    (
        [1.0 - s, s, 4.0 * s * (1.0 - s)],
        [-1.0 / h, 1.0 / h, (4.0 - 8.0 * s) / h],
    )
}

/// Which discrete trial/test pair an inf-sup measurement uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PgScheme {
    Hybrid,
    CrankNicolson,
}

/// Scalar-mode Petrov–Galerkin matrices.
#[derive(Debug, Clone)]
pub struct PgSystem {
    pub b: DMatrix<f64>,
    pub gx: DMatrix<f64>,
    pub gy: DMatrix<f64>,
}

/// Assembles `B`, `Gx` and `Gy` for `u' + λu` on `mesh`.
///
/// Hybrid: unknowns are the `n + 1` nodal values followed by `n` bubbles;
/// rows are `(χ_T, Φ_T)` per element and the initial-value row.
/// Crank–Nicolson: nodal values only; rows are `χ_T` and the initial-value row.
pub fn assemble_pg(lambda: f64, mesh: &TimeMesh, scheme: PgScheme) -> Result<PgSystem> {
    ensure(lambda > 0.0 && lambda.is_finite(), "lambda must be positive")?;
    ensure(mesh.len() <= MAX_DENSE_ELEMENTS, "mesh too large for dense assembly")?;
    let n = mesh.len();
    let (gx_pts, gx_w) = gauss_legendre(3);
    let (na, nt) = match scheme {
        PgScheme::Hybrid => (2 * n + 1, 2 * n + 1),
        PgScheme::CrankNicolson => (n + 1, n + 1),
    };
    let nb = if scheme == PgScheme::Hybrid { 3 } else { 2 };
    let mut b = DMatrix::zeros(nt, na);
    let mut gx = DMatrix::zeros(na, na);
    let mut gy = DMatrix::zeros(nt, nt);
    for t in 0..n {
        let h = mesh.size(t);
        let idx = [t, t + 1, n + 1 + t];
        let row_chi = if scheme == PgScheme::Hybrid { 2 * t } else { t };
        for (s, w) in gx_pts.iter().zip(&gx_w) {
            let (v, d) = ansatz(*s, h);
            for a in 0..nb {
                for c in 0..nb {
                    gx[(idx[a], idx[c])] += w * h * (lambda * v[a] * v[c] + d[a] * d[c] / lambda);
                }
                b[(row_chi, idx[a])] += w * h * (d[a] + lambda * v[a]);
            }
        }
        gy[(row_chi, row_chi)] = lambda * h;
        if scheme == PgScheme::Hybrid {
            let (v, d) = ansatz(1.0, h);
            for a in 0..3 {
                b[(2 * t + 1, idx[a])] += h * (d[a] + lambda * v[a]);
            }
            gy[(2 * t, 2 * t + 1)] = lambda * h;
            gy[(2 * t + 1, 2 * t)] = lambda * h;
            gy[(2 * t + 1, 2 * t + 1)] = lambda * 14.5 * h;
        }
    }
    b[(nt - 1, 0)] = 1.0;
    gy[(nt - 1, nt - 1)] = 1.0;
    Ok(PgSystem { b, gx, gy })
}

/// Smallest singular value of `Ly⁻¹ B Lx⁻ᵀ` with `Gx = Lx Lxᵀ`, `Gy = Ly Lyᵀ`.
pub fn infsup_constant(lambda: f64, mesh: &TimeMesh, scheme: PgScheme) -> Result<f64> {
    let pg = assemble_pg(lambda, mesh, scheme)?;
    let lx = pg
        .gx
        .cholesky()
        .ok_or(Error::NumericalFailure("ansatz Gram matrix is not positive definite"))?
        .l();
    let ly = pg
        .gy
        .cholesky()
        .ok_or(Error::NumericalFailure("test Gram matrix is not positive definite"))?
        .l();
    let c = ly
        .solve_lower_triangular(&pg.b)
        .ok_or(Error::NumericalFailure("triangular solve failed"))?;
    let ct = lx
        .solve_lower_triangular(&c.transpose())
        .ok_or(Error::NumericalFailure("triangular solve failed"))?;
    let sv = ct.transpose().singular_values();
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return Err(Error::NumericalFailure("singular value computation failed"));
    }
    Ok(min)
}

/// Nodal values and bubble coefficients of a piecewise quadratic in time.
#[derive(Debug, Clone, PartialEq)]
pub struct HierarchicalCoefficients {
    /// Values at the `n + 1` breakpoints.
    pub nodal: Vec<Vec<f64>>,
    /// `u(midpoint) - (u_left + u_right) / 2` per element.
    pub bubbles: Vec<Vec<f64>>,
}

/// Hierarchical coefficients of a time-stepping solution.
pub fn hierarchical_coefficients(sol: &SplineSolution) -> HierarchicalCoefficients {
    let n = sol.mesh.len();
    let nodal: Vec<Vec<f64>> = (0..=n).map(|j| sol.nodal(j).to_vec()).collect();
    let bubbles = (0..n)
        .map(|t| {
            let mid = sol.value_local(t, 0.5);
            mid.iter()
                .zip(&nodal[t])
                .zip(&nodal[t + 1])
                .map(|((m, a), b)| m - 0.5 * (a + b))
                .collect()
        })
        .collect();
    HierarchicalCoefficients { nodal, bubbles }
}

/// Dense Petrov–Galerkin operator and load for a full system.
///
/// Unknown ordering: nodal blocks `0..=n`, then bubble blocks; each block
/// has the system dimension. Rows: `χ_T ⊗ I` and `Φ_T ⊗ I` per element, then
/// the initial-value block `M u(0) = M u0`.
pub fn assemble_pg_full(
    system: &DiscreteSystem,
    mesh: &TimeMesh,
    f: &dyn RhsFunction,
    u0: &[f64],
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let d = system.dim();
    let n = mesh.len();
    ensure(u0.len() == d && f.dim() == d, "dimension mismatch")?;
    ensure((2 * n + 1) * d <= 4096, "system too large for dense assembly")?;
    let size = (2 * n + 1) * d;
    let m = system.mass().to_dense();
    let k = system.stiffness().to_dense();
    let mut b = DMatrix::zeros(size, size);
    let mut rhs = DVector::zeros(size);
    let col = |blk: usize| blk * d;
    for t in 0..n {
        let h = mesh.size(t);
        let t0 = mesh.left(t);
        let blocks = [t, t + 1, n + 1 + t];
        // ∫_T φ' dt and ∫_T φ dt
        let dint = [-1.0, 1.0, 0.0];
        let vint = [0.5 * h, 0.5 * h, 2.0 * h / 3.0];
        // h φ'(1) and h φ(1)
        let dend = [-1.0, 1.0, -4.0];
        let vend = [0.0, h, 0.0];
        let (r_chi, r_phi) = (2 * t * d, (2 * t + 1) * d);
        for a in 0..3 {
            let c0 = col(blocks[a]);
            for i in 0..d {
                for j in 0..d {
                    b[(r_chi + i, c0 + j)] += dint[a] * m[(i, j)] + vint[a] * k[(i, j)];
                    b[(r_phi + i, c0 + j)] += dend[a] * m[(i, j)] + vend[a] * k[(i, j)];
                }
            }
        }
        let f1 = f.at(t0 + h / 3.0);
        let f2 = f.at(t0 + h);
        for i in 0..d {
            rhs[r_chi + i] = h * (0.75 * f1[i] + 0.25 * f2[i]);
            rhs[r_phi + i] = h * f2[i];
        }
    }
    let r0 = 2 * n * d;
    let mu0 = system.mass().mul_vec(u0);
    for i in 0..d {
        for j in 0..d {
            b[(r0 + i, j)] = m[(i, j)];
        }
        rhs[r0 + i] = mu0[i];
    }
    Ok((b, rhs))
}

/// Solves the dense Petrov–Galerkin system in one shot.
pub fn solve_pg_full(
    system: &DiscreteSystem,
    mesh: &TimeMesh,
    f: &dyn RhsFunction,
    u0: &[f64],
) -> Result<HierarchicalCoefficients> {
    let (b, rhs) = assemble_pg_full(system, mesh, f, u0)?;
    let x = b
        .lu()
        .solve(&rhs)
        .ok_or(Error::NumericalFailure("Petrov–Galerkin matrix is singular"))?;
    let d = system.dim();
    let n = mesh.len();
    let block = |k: usize| x.as_slice()[k * d..(k + 1) * d].to_vec();
    Ok(HierarchicalCoefficients {
        nodal: (0..=n).map(block).collect(),
        bubbles: (n + 1..2 * n + 1).map(block).collect(),
    })
}

/// Flattens hierarchical coefficients in the ordering of [`assemble_pg_full`].
pub fn flatten(c: &HierarchicalCoefficients) -> DVector<f64> {
    let data: Vec<f64> = c.nodal.iter().chain(&c.bubbles).flatten().copied().collect();
    DVector::from_vec(data)
}

/// Largest `L²(0, t_end)` residual of representing each coarse test
/// function `χ_T`, `Φ_T` in the span of the fine test functions.
pub fn nesting_residual(coarse: &TimeMesh, fine: &TimeMesh) -> Result<f64> {
    ensure(fine.is_refinement_of(coarse), "fine mesh must refine the coarse mesh")?;
    ensure(fine.len() <= MAX_DENSE_ELEMENTS, "mesh too large for dense check")?;
    let parent = fine.parent_map(coarse)?;
    let nf = fine.len();
    // Every test function is constant on the thirds of each fine element.
    let cells = 3 * nf;
    let weight: Vec<f64> = (0..cells).map(|c| libm::sqrt(fine.size(c / 3) / 3.0)).collect();
    let (psi, _) = psi_on_reference();
    let mut basis = DMatrix::zeros(cells, 2 * nf);
    for e in 0..nf {
        for k in 0..3 {
            let c = 3 * e + k;
            basis[(c, 2 * e)] = weight[c];
            basis[(c, 2 * e + 1)] = weight[c] * psi[k];
        }
    }
    let svd = basis.clone().svd(true, false);
    let u = svd.u.ok_or(Error::NumericalFailure("svd failed"))?;
    let rank = svd.singular_values.iter().filter(|&&s| s > 1e-12).count();
    let q = u.columns(0, rank).into_owned();
    let mut worst: f64 = 0.0;
    for t in 0..coarse.len() {
        let (t0, h) = (coarse.left(t), coarse.size(t));
        for kind in 0..2 {
            let mut v = DVector::zeros(cells);
            for e in 0..nf {
                if parent[e] != t {
                    continue;
                }
                for k in 0..3 {
                    let c = 3 * e + k;
                    let mid = fine.left(e) + (k as f64 + 0.5) * fine.size(e) / 3.0;
                    let s = (mid - t0) / h;
                    let val = if kind == 0 {
                        1.0
                    } else {
                        psi[((3.0 * s) as usize).min(2)]
                    };
                    v[c] = weight[c] * val;
                }
            }
            let r = &v - &q * (q.transpose() * &v);
            worst = worst.max(r.norm());
        }
    }
    Ok(worst)
}
