//! Linear finite elements on a uniform triangulation of the unit square.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{ensure, Result};
use crate::gelfand::DiscreteSystem;
use crate::linalg::{BandLdl, CsrMatrix};

/// Triangulation of `[0,1]²` into `n × n` squares, each cut along the
/// diagonal from its lower-left to its upper-right corner.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    pub n: usize,
    pub nodes: Vec<[f64; 2]>,
    /// Counter-clockwise node triples.
    pub triangles: Vec<[usize; 3]>,
    pub boundary: Vec<bool>,
}

impl TriMesh {
    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Index of each node among the interior nodes, `None` on the boundary.
    pub fn interior_map(&self) -> Vec<Option<usize>> {
        let mut next = 0;
        self.boundary
            .iter()
            .map(|&b| {
                if b {
                    None
                } else {
                    next += 1;
                    Some(next - 1)
                }
            })
            .collect()
    }

    pub fn interior_count(&self) -> usize {
        self.boundary.iter().filter(|b| !**b).count()
    }

    /// Signed area of triangle `t`.
    pub fn area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t].map(|i| self.nodes[i]);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    }
}

pub fn unit_square_mesh(n: usize) -> Result<TriMesh> {
    ensure(n >= 2, "need at least two cells per side")?;
    let h = 1.0 / n as f64;
    let idx = |i: usize, j: usize| j * (n + 1) + i;
    let mut nodes = Vec::with_capacity((n + 1) * (n + 1));
    let mut boundary = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            nodes.push([i as f64 * h, j as f64 * h]);
            boundary.push(i == 0 || j == 0 || i == n || j == n);
        }
    }
    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    Ok(TriMesh {
        n,
        nodes,
        triangles,
        boundary,
    })
}

/// Element mass and stiffness matrices of one triangle.
fn element_matrices(mesh: &TriMesh, t: usize) -> Result<([[f64; 3]; 3], [[f64; 3]; 3])> {
    let area = mesh.area(t);
    ensure(area > 1e-300, "degenerate or inverted triangle")?;
    let p = mesh.triangles[t].map(|i| mesh.nodes[i]);
    let b = [p[1][1] - p[2][1], p[2][1] - p[0][1], p[0][1] - p[1][1]];
    let c = [p[2][0] - p[1][0], p[0][0] - p[2][0], p[1][0] - p[0][0]];
    let mut ke = [[0.0; 3]; 3];
    let mut me = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            ke[i][j] = (b[i] * b[j] + c[i] * c[j]) / (4.0 * area);
            me[i][j] = area / 12.0 * if i == j { 2.0 } else { 1.0 };
        }
    }
    Ok((me, ke))
}

/// Mass and stiffness matrices over all nodes, before boundary elimination.
pub fn assemble_full(mesh: &TriMesh) -> Result<(CsrMatrix, CsrMatrix)> {
    let mut tm = Vec::with_capacity(9 * mesh.triangles.len());
    let mut tk = Vec::with_capacity(9 * mesh.triangles.len());
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let (me, ke) = element_matrices(mesh, t)?;
        for i in 0..3 {
            for j in 0..3 {
                tm.push((tri[i], tri[j], me[i][j]));
                tk.push((tri[i], tri[j], ke[i][j]));
            }
        }
    }
    let n = mesh.nodes.len();
    Ok((
        CsrMatrix::from_triplets(n, n, &tm)?,
        CsrMatrix::from_triplets(n, n, &tk)?,
    ))
}

/// Restriction of a full matrix to the interior rows and columns.
fn restrict(a: &CsrMatrix, map: &[Option<usize>], n_int: usize) -> Result<CsrMatrix> {
    let trip: Vec<_> = a
        .triplets()
        .filter_map(|(i, j, v)| Some((map[i]?, map[j]?, v)))
        .collect();
    CsrMatrix::from_triplets(n_int, n_int, &trip)
}

/// Interior-node system with homogeneous Dirichlet conditions.
pub fn assemble_fem(mesh: &TriMesh) -> Result<DiscreteSystem> {
    let (m, k) = assemble_full(mesh)?;
    let map = mesh.interior_map();
    let n_int = mesh.interior_count();
    ensure(n_int >= 1, "mesh has no interior nodes")?;
    DiscreteSystem::new(restrict(&m, &map, n_int)?, restrict(&k, &map, n_int)?)
}

/// `∫ g φ_i` over interior nodes by the edge-midpoint rule.
pub fn load_vector(mesh: &TriMesh, g: &dyn Fn(f64, f64) -> f64) -> Vec<f64> {
    let map = mesh.interior_map();
    let mut out = vec![0.0; mesh.interior_count()];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let area = mesh.area(t);
        let p = tri.map(|i| mesh.nodes[i]);
        for e in 0..3 {
            // midpoint of the edge opposite vertex e: basis e vanishes, the others are 1/2
            let (a, b) = ((e + 1) % 3, (e + 2) % 3);
            let x = 0.5 * (p[a][0] + p[b][0]);
            let y = 0.5 * (p[a][1] + p[b][1]);
            let gv = g(x, y) * area / 3.0 * 0.5;
            for v in [a, b] {
                if let Some(r) = map[tri[v]] {
                    out[r] += gv;
                }
            }
        }
    }
    out
}

/// Coefficients `x` with `M x = (∫ g φ_i)_i`.
pub fn project_l2(mesh: &TriMesh, g: &dyn Fn(f64, f64) -> f64) -> Result<Vec<f64>> {
    let sys = assemble_fem(mesh)?;
    let rhs = load_vector(mesh, g);
    BandLdl::factor_real(sys.mass())?.solve(&rhs)
}

/// Coefficients `x` with `(K + M) x = (∫ ∇(I_h g)·∇φ_i + ∫ g φ_i)_i`.
pub fn project_h1(mesh: &TriMesh, g: &dyn Fn(f64, f64) -> f64) -> Result<Vec<f64>> {
    let (m, k) = assemble_full(mesh)?;
    let map = mesh.interior_map();
    let n_int = mesh.interior_count();
    let a = restrict(&k, &map, n_int)?.linear_combination(1.0, &restrict(&m, &map, n_int)?, 1.0)?;
    let gi: Vec<f64> = mesh.nodes.iter().map(|p| g(p[0], p[1])).collect();
    let kg = k.mul_vec(&gi);
    let mut rhs = load_vector(mesh, g);
    for (node, r) in map.iter().enumerate() {
        if let Some(r) = r {
            rhs[*r] += kg[node];
        }
    }
    BandLdl::factor_real(&a)?.solve(&rhs)
}
