//! Text formats: time meshes, sparse matrices, triangulations, CSV tables and the run manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use radapt_core::fem2d::TriMesh;
use radapt_core::linalg::CsrMatrix;
use radapt_core::time_mesh::{Cell, TimeMesh};

use crate::config::RunConfig;
use crate::error::{Result, RunError};

/// Shortest round-trip scientific notation.
pub fn fmt_f(x: f64) -> String {
    format!("{x:e}")
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f).unwrap_or_default()
}

fn parse_err(what: &str) -> RunError {
    RunError::InvalidConfig(format!("malformed {what}"))
}

/// Header `t_end=<v> h0=<v>`, one breakpoint per line, then the levels on one line.
pub fn mesh_to_string(mesh: &TimeMesh) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "t_end={} h0={}", fmt_f(mesh.t_end()), fmt_f(mesh.h0()));
    for t in mesh.breakpoints() {
        let _ = writeln!(s, "{}", fmt_f(t));
    }
    let levels: Vec<String> = mesh.levels().iter().map(u32::to_string).collect();
    let _ = writeln!(s, "{}", levels.join(" "));
    s
}

pub fn mesh_from_str(text: &str) -> Result<TimeMesh> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| parse_err("mesh header"))?;
    let mut t_end = None;
    let mut h0 = None;
    for field in header.split_whitespace() {
        let (k, v) = field.split_once('=').ok_or_else(|| parse_err("mesh header"))?;
        let v: f64 = v.parse().map_err(|_| parse_err("mesh header"))?;
        match k {
            "t_end" => t_end = Some(v),
            "h0" => h0 = Some(v),
            _ => return Err(parse_err("mesh header")),
        }
    }
    let (t_end, h0) = (t_end.ok_or_else(|| parse_err("mesh header"))?, h0.ok_or_else(|| parse_err("mesh header"))?);
    let rest: Vec<&str> = lines.collect();
    let (levels_line, bp_lines) = rest.split_last().ok_or_else(|| parse_err("mesh body"))?;
    let breakpoints: Vec<f64> = bp_lines
        .iter()
        .map(|l| l.trim().parse().map_err(|_| parse_err("breakpoint")))
        .collect::<Result<_>>()?;
    let levels: Vec<u32> = levels_line
        .split_whitespace()
        .map(|v| v.parse().map_err(|_| parse_err("levels line")))
        .collect::<Result<_>>()?;
    if breakpoints.len() != levels.len() + 1 {
        return Err(parse_err("mesh: breakpoint and level counts differ"));
    }
    let n0 = (t_end / h0).round() as usize;
    // walk left to right, tracking the right end of the last cell as (pos, level)
    let mut cells = Vec::with_capacity(levels.len());
    let (mut end, mut end_level) = (0u128, 0u32);
    for &l in &levels {
        let pos = if l >= end_level {
            end * 3u128.pow(l - end_level)
        } else {
            let f = 3u128.pow(end_level - l);
            if end % f != 0 {
                return Err(parse_err("mesh: levels are not a triadic tiling"));
            }
            end / f
        };
        cells.push(Cell { level: l, pos });
        end = pos + 1;
        end_level = l;
    }
    let mesh = TimeMesh::from_cells(t_end, n0, cells)?;
    let tol = 1e-12 * t_end;
    if mesh.breakpoints().iter().zip(&breakpoints).any(|(a, b)| (a - b).abs() > tol) {
        return Err(parse_err("mesh: breakpoints disagree with levels"));
    }
    Ok(mesh)
}

/// `%dim N`, then `row col value` per stored entry, 0-based.
pub fn matrix_to_string(a: &CsrMatrix) -> String {
    let mut s = format!("%dim {}\n", a.nrows());
    for (i, j, v) in a.triplets() {
        let _ = writeln!(s, "{i} {j} {}", fmt_f(v));
    }
    s
}

pub fn matrix_from_str(text: &str) -> Result<CsrMatrix> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| parse_err("matrix header"))?;
    let n: usize = header
        .strip_prefix("%dim")
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| parse_err("matrix header"))?;
    let mut trip = Vec::new();
    for l in lines {
        let mut it = l.split_whitespace();
        let (Some(i), Some(j), Some(v), None) = (it.next(), it.next(), it.next(), it.next()) else {
            return Err(parse_err("matrix entry"));
        };
        let i: usize = i.parse().map_err(|_| parse_err("matrix row"))?;
        let j: usize = j.parse().map_err(|_| parse_err("matrix column"))?;
        let v: f64 = v.parse().map_err(|_| parse_err("matrix value"))?;
        trip.push((i, j, v));
    }
    Ok(CsrMatrix::from_triplets(n, n, &trip)?)
}

/// `nodes N` with `x y boundary` lines, then `triangles T` with node triples.
pub fn trimesh_to_string(mesh: &TriMesh) -> String {
    let mut s = format!("nodes {}\n", mesh.nodes.len());
    for (p, b) in mesh.nodes.iter().zip(&mesh.boundary) {
        let _ = writeln!(s, "{} {} {}", fmt_f(p[0]), fmt_f(p[1]), u8::from(*b));
    }
    let _ = writeln!(s, "triangles {}", mesh.triangles.len());
    for t in &mesh.triangles {
        let _ = writeln!(s, "{} {} {}", t[0], t[1], t[2]);
    }
    s
}

/// A CSV table with a fixed header.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Self {
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        let bytes = w.into_inner().map_err(|e| RunError::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| RunError::Io(e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()?)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest<'a> {
    pub command: &'a str,
    pub version: &'a str,
    pub config_hash: String,
    pub config: &'a RunConfig,
    pub files: Vec<String>,
}

pub fn write_manifest(dir: &Path, command: &str, cfg: &RunConfig, files: &[String]) -> Result<()> {
    let m = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        config_hash: cfg.hash(),
        config: cfg,
        files: files.to_vec(),
    };
    let text = serde_json::to_string_pretty(&m).map_err(|e| RunError::Io(e.to_string()))?;
    fs::write(dir.join("manifest.json"), text + "\n")?;
    Ok(())
}
