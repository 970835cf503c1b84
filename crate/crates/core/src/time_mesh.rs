//! One-dimensional time meshes refined by trisection.
//!
//! Every element of a mesh grown from a uniform initial partition is a
//! triadic cell: at level `ℓ` it covers `[p, p + 1] · h0 · 3^{-ℓ}` for an
//! integer position `p`. Cells are stored by `(level, position)`, so
//! distances, size ratios and mesh equality are decided in exact integer
//! arithmetic and `|T| = h0 · 3^{-ℓ(T)}` holds by construction.

use alloc::vec::Vec;

use crate::error::{ensure, Error, Result};

/// Deepest refinement level supported; `3^60` still fits comfortably in `u128`.
pub const MAX_LEVEL: u32 = 60;

fn pow3(k: u32) -> u128 {
    3u128.pow(k)
}

/// A triadic cell `[pos, pos + 1] · h0 · 3^{-level}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell {
    pub level: u32,
    pub pos: u128,
}

impl Cell {
    /// Endpoints in units of `h0 · 3^{-level}` for `level >= self.level`.
    fn span_at(self, level: u32) -> (u128, u128) {
        let f = pow3(level - self.level);
        (self.pos * f, (self.pos + 1) * f)
    }

    pub fn children(self) -> [Cell; 3] {
        let level = self.level + 1;
        let pos = self.pos * 3;
        [
            Cell { level, pos },
            Cell { level, pos: pos + 1 },
            Cell { level, pos: pos + 2 },
        ]
    }

    /// Gap between the closed intervals, in units of `h0 · 3^{-L}` with `L` the finer level.
    fn gap(self, other: Cell) -> (u128, u32) {
        let level = self.level.max(other.level);
        let (a0, a1) = self.span_at(level);
        let (b0, b1) = other.span_at(level);
        let gap = b0.saturating_sub(a1).max(a0.saturating_sub(b1));
        (gap, level)
    }

    /// Left endpoint compared across levels.
    fn left_cmp(self, other: Cell) -> core::cmp::Ordering {
        let level = self.level.max(other.level);
        self.span_at(level).0.cmp(&other.span_at(level).0)
    }
}

/// Ordered partition of `[0, t_end]` into triadic cells of a uniform root mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeMesh {
    t_end: f64,
    n0: usize,
    cells: Vec<Cell>,
}

impl TimeMesh {
    /// `n` equal elements on `[0, t_end]`, all at level 0.
    pub fn uniform(t_end: f64, n: usize) -> Result<Self> {
        ensure(n >= 1, "a mesh needs at least one element")?;
        ensure(t_end.is_finite() && t_end > 0.0, "t_end must be positive")?;
        let cells = (0..n).map(|p| Cell { level: 0, pos: p as u128 }).collect();
        Ok(Self { t_end, n0: n, cells })
    }

    /// Mesh from explicit cells of a root mesh with `n0` elements; the cells must tile `[0, t_end]`.
    pub fn from_cells(t_end: f64, n0: usize, cells: Vec<Cell>) -> Result<Self> {
        ensure(n0 >= 1, "a mesh needs at least one root element")?;
        ensure(t_end.is_finite() && t_end > 0.0, "t_end must be positive")?;
        ensure(!cells.is_empty(), "a mesh needs at least one element")?;
        let mut cursor = (0u128, 0u32);
        for c in &cells {
            ensure(c.level <= MAX_LEVEL, "refinement level too deep")?;
            ensure(
                c.pos < n0 as u128 * pow3(c.level),
                "cell lies outside the root mesh",
            )?;
            let level = cursor.1.max(c.level);
            let expect = cursor.0 * pow3(level - cursor.1);
            ensure(
                c.span_at(level).0 == expect,
                "cells must be contiguous and ordered",
            )?;
            cursor = (c.pos + 1, c.level);
        }
        ensure(
            cursor.0 == n0 as u128 * pow3(cursor.1),
            "cells must end at t_end",
        )?;
        Ok(Self { t_end, n0, cells })
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    /// Size of the initial uniform elements.
    pub fn h0(&self) -> f64 {
        self.t_end / self.n0 as f64
    }

    pub fn root_count(&self) -> usize {
        self.n0
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn levels(&self) -> Vec<u32> {
        self.cells.iter().map(|c| c.level).collect()
    }

    fn point(&self, pos: u128, level: u32) -> f64 {
        let denom = self.n0 as u128 * pow3(level);
        self.t_end * (pos as f64 / denom as f64)
    }

    /// Left endpoint of element `i`.
    pub fn left(&self, i: usize) -> f64 {
        let c = self.cells[i];
        self.point(c.pos, c.level)
    }

    /// Right endpoint of element `i`.
    pub fn right(&self, i: usize) -> f64 {
        let c = self.cells[i];
        self.point(c.pos + 1, c.level)
    }

    /// Element size from its level.
    pub fn size(&self, i: usize) -> f64 {
        self.h0() / pow3(self.cells[i].level) as f64
    }

    pub fn sizes(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.size(i)).collect()
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b: Vec<f64> = (0..self.len()).map(|i| self.left(i)).collect();
        b.push(self.t_end);
        b
    }

    /// Index of the element containing `t`; interior breakpoints belong to the left element.
    pub fn locate(&self, t: f64) -> Result<usize> {
        ensure(
            t.is_finite() && (0.0..=self.t_end).contains(&t),
            "time outside [0, t_end]",
        )?;
        let idx = self.breakpoints()[1..].partition_point(|&b| b < t);
        Ok(idx.min(self.len() - 1))
    }

    fn index_of(&self, cell: Cell) -> Option<usize> {
        let i = self.cells.partition_point(|c| c.left_cmp(cell).is_lt());
        (i < self.cells.len() && self.cells[i] == cell).then_some(i)
    }

    /// Elements that `trisect` would inspect around `target`, left to right.
    fn neighbourhood(&self, idx: usize, within: impl Fn(Cell) -> bool) -> Vec<Cell> {
        let mut lo = idx;
        while lo > 0 && within(self.cells[lo - 1]) {
            lo -= 1;
        }
        let mut hi = idx;
        while hi + 1 < self.cells.len() && within(self.cells[hi + 1]) {
            hi += 1;
        }
        self.cells[lo..=hi].to_vec()
    }

    fn split(&mut self, idx: usize) -> Result<()> {
        let cell = self.cells[idx];
        if cell.level >= MAX_LEVEL {
            return Err(Error::NumericalFailure("maximum refinement level reached"));
        }
        self.cells.splice(idx..=idx, cell.children());
        Ok(())
    }

    fn trisect_cell(&mut self, target: Cell, grading: u32) -> Result<()> {
        let Some(idx) = self.index_of(target) else {
            return Ok(());
        };
        // dist(T, T') <= G |T|, in units of h0 3^{-L}: gap <= G 3^{L - ℓ(T)}.
        let near = |c: Cell| {
            let (gap, level) = target.gap(c);
            gap <= grading as u128 * pow3(level - target.level)
        };
        for c in self.neighbourhood(idx, near) {
            if c != target && c.level < target.level {
                self.trisect_cell(c, grading)?;
            }
        }
        let idx = self
            .index_of(target)
            .ok_or(Error::NumericalFailure("target vanished during closure"))?;
        self.split(idx)
    }

    fn trisect_level_cell(&mut self, target: Cell, g_tilde: f64) -> Result<()> {
        let Some(idx) = self.index_of(target) else {
            return Ok(());
        };
        let h0 = self.h0();
        let threshold = g_tilde / pow3(target.level + 1) as f64;
        // Relative slack so that exact ties (dist == threshold) are not lost to rounding.
        let near = |c: Cell| {
            let (gap, level) = target.gap(c);
            let dist = gap as f64 * h0 / pow3(level) as f64;
            dist <= threshold * (1.0 + 1e-12)
        };
        for c in self.neighbourhood(idx, near) {
            if c.level + 1 == target.level {
                self.trisect_level_cell(c, g_tilde)?;
            }
        }
        let idx = self
            .index_of(target)
            .ok_or(Error::NumericalFailure("target vanished during closure"))?;
        self.split(idx)
    }

    /// Trisects element `elem`, first refining every coarser element
    /// `T'` with `dist(T, T') <= G |T|` and `|T'| >= 3 |T|`.
    pub fn trisect_in_place(&mut self, elem: usize, grading: u32) -> Result<()> {
        ensure(elem < self.len(), "element index out of range")?;
        ensure(grading >= 1, "grading parameter must be at least 1")?;
        let target = self.cells[elem];
        self.trisect_cell(target, grading)
    }

    pub fn trisect(&self, elem: usize, grading: u32) -> Result<Self> {
        let mut m = self.clone();
        m.trisect_in_place(elem, grading)?;
        Ok(m)
    }

    /// Level-based variant: refines neighbours one level coarser within
    /// `g_tilde · 3^{-(ℓ(T)+1)}` before splitting.
    pub fn trisect_level_in_place(&mut self, elem: usize, g_tilde: f64) -> Result<()> {
        ensure(elem < self.len(), "element index out of range")?;
        ensure(g_tilde.is_finite() && g_tilde > 0.0, "length parameter must be positive")?;
        let target = self.cells[elem];
        self.trisect_level_cell(target, g_tilde)
    }

    pub fn trisect_level(&self, elem: usize, g_tilde: f64) -> Result<Self> {
        let mut m = self.clone();
        m.trisect_level_in_place(elem, g_tilde)?;
        Ok(m)
    }

    /// Trisects every marked element (indices refer to `self` before refinement).
    pub fn refine_marked(&mut self, marked: &MarkSet, grading: u32) -> Result<()> {
        ensure(grading >= 1, "grading parameter must be at least 1")?;
        let targets: Vec<Cell> = marked
            .indices
            .iter()
            .map(|&i| {
                self.cells
                    .get(i)
                    .copied()
                    .ok_or(Error::InvalidArgument("marked index out of range"))
            })
            .collect::<Result<_>>()?;
        for t in targets {
            self.trisect_cell(t, grading)?;
        }
        Ok(())
    }

    /// Splits every element into three.
    pub fn refine_uniform(&self) -> Result<Self> {
        let mut cells = Vec::with_capacity(3 * self.len());
        for c in &self.cells {
            ensure(c.level < MAX_LEVEL, "refinement level too deep")?;
            cells.extend(c.children());
        }
        Ok(Self {
            t_end: self.t_end,
            n0: self.n0,
            cells,
        })
    }

    /// Whether `self` refines `coarse`: every coarse element is present or a union of descendants.
    pub fn is_refinement_of(&self, coarse: &TimeMesh) -> bool {
        if self.n0 != coarse.n0 || self.t_end != coarse.t_end {
            return false;
        }
        let mut j = 0;
        for c in &coarse.cells {
            let mut covered = false;
            while j < self.cells.len() {
                let f = self.cells[j];
                if f.level < c.level {
                    return false;
                }
                let (f0, f1) = f.span_at(f.level);
                let (c0, c1) = c.span_at(f.level);
                if f0 < c0 || f1 > c1 {
                    return false;
                }
                j += 1;
                if f1 == c1 {
                    covered = true;
                    break;
                }
            }
            if !covered {
                return false;
            }
        }
        j == self.cells.len()
    }

    /// For a refinement `self` of `coarse`, the coarse index containing each fine element.
    pub fn parent_map(&self, coarse: &TimeMesh) -> Result<Vec<usize>> {
        ensure(self.is_refinement_of(coarse), "mesh is not a refinement")?;
        let mut map = Vec::with_capacity(self.len());
        let mut j = 0;
        for f in &self.cells {
            loop {
                let c = coarse.cells[j];
                let (f0, f1) = f.span_at(f.level);
                let (c0, c1) = c.span_at(f.level);
                if f0 >= c0 && f1 <= c1 {
                    break;
                }
                j += 1;
            }
            map.push(j);
        }
        Ok(map)
    }
}

/// `max(0, left(T') - right(T), left(T) - right(T'))` for element indices of one mesh.
pub fn element_distance(mesh: &TimeMesh, i: usize, j: usize) -> f64 {
    let (gap, level) = mesh.cells[i].gap(mesh.cells[j]);
    gap as f64 * mesh.h0() / pow3(level) as f64
}

/// Checks `|T_i| / |T_j| <= C_g · g0^{-|i - j|}` for all element pairs.
pub fn check_grading(mesh: &TimeMesh, c_g: f64, g0: f64) -> bool {
    let levels = mesh.levels();
    let (Some(&lmin), Some(&lmax)) = (levels.iter().min(), levels.iter().max()) else {
        return true;
    };
    let ln3 = libm::log(3.0);
    let log_cg = libm::log(c_g);
    let log_g0 = libm::log(g0);
    let worst = (lmax - lmin) as f64 * ln3;
    let slack = 1e-12;
    let n = levels.len();
    for i in 0..n {
        for d in 1..n - i {
            let bound = log_cg - d as f64 * log_g0;
            if bound + slack >= worst {
                break;
            }
            let j = i + d;
            let log_ratio = (levels[j] as f64 - levels[i] as f64).abs() * ln3;
            if log_ratio > bound + slack {
                return false;
            }
        }
    }
    true
}

/// Elements selected for refinement by the bulk criterion.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkSet {
    /// Marked element indices in ascending order.
    pub indices: Vec<usize>,
    pub theta: f64,
}

impl MarkSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Minimal-cardinality Dörfler marking: the shortest prefix of the elements
/// sorted by descending `η²` (ties by ascending index) whose sum reaches
/// `θ · Σ η²`.
pub fn doerfler_mark(eta_sq: &[f64], theta: f64) -> Result<MarkSet> {
    ensure(theta > 0.0 && theta <= 1.0, "theta must lie in (0, 1]")?;
    ensure(
        eta_sq.iter().all(|v| v.is_finite() && *v >= 0.0),
        "estimator contributions must be finite and nonnegative",
    )?;
    let mut order: Vec<usize> = (0..eta_sq.len()).collect();
    order.sort_by(|&a, &b| eta_sq[b].total_cmp(&eta_sq[a]).then(a.cmp(&b)));
    let total: f64 = order.iter().map(|&i| eta_sq[i]).sum();
    let mut indices = Vec::new();
    if total > 0.0 {
        let goal = theta * total;
        let mut acc = 0.0;
        for &i in &order {
            if acc >= goal {
                break;
            }
            acc += eta_sq[i];
            indices.push(i);
        }
    }
    indices.sort_unstable();
    Ok(MarkSet { indices, theta })
}
