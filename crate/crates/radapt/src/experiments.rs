//! Experiment drivers behind the CLI subcommands.

use std::fs;
use std::path::Path;

use log::info;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use radapt_core::fem2d::{assemble_fem, load_vector, project_h1, project_l2, unit_square_mesh, TriMesh};
use radapt_core::gelfand::{DiscreteSystem, SpectralFactorization};
use radapt_core::laplace_mor::{
    build_reduced_basis, build_snapshots, mor_pipeline, time_domain_projection_error, LaplaceLoad, MorParams,
};
use radapt_core::petrov::{flatten, hierarchical_coefficients, infsup_constant, solve_pg_full, PgScheme};
use radapt_core::radau::{
    adaptive_loop_with, radau_stability, xnorm_error_modal, AdaptiveParams, PolynomialRhs, RadauSolver, RhsFunction,
    Scheme, SplineSolution,
};
use radapt_core::sinc::SincGrid;
use radapt_core::stats::fit_rate;
use radapt_core::time_mesh::{check_grading, TimeMesh};

use crate::config::{Projection, RunConfig, SchemeKind};
use crate::error::{Result, RunError};
use crate::io::{fmt_f, fmt_opt, matrix_from_str, matrix_to_string, mesh_to_string, trimesh_to_string, Table};

/// Largest dimension for which the dense spectral reference is computed.
pub const ORACLE_DIM_CAP: usize = 2500;

/// Iterations entering the final-window rate fits.
pub const RATE_WINDOW: usize = 6;

/// `F(t) = g` for all `t`.
#[derive(Debug, Clone)]
pub struct ConstantRhs(pub Vec<f64>);

impl RhsFunction for ConstantRhs {
    fn dim(&self) -> usize {
        self.0.len()
    }
    fn eval(&self, _t: f64, out: &mut [f64]) {
        out.copy_from_slice(&self.0);
    }
    fn is_elementwise_quadratic(&self) -> bool {
        true
    }
}

/// `u' + Au = F` with constant `u0` and `F`, on a finite element mesh or explicit matrices.
#[derive(Debug)]
pub struct HeatProblem {
    pub system: DiscreteSystem,
    pub trimesh: Option<TriMesh>,
    pub u0: Vec<f64>,
    pub load: Vec<f64>,
    /// Steady state `K⁻¹F`.
    pub u_inf: Vec<f64>,
}

impl HeatProblem {
    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        match (&cfg.mass, &cfg.stiffness) {
            (Some(m), Some(k)) => {
                let read = |p: &Path| -> Result<_> {
                    let text = fs::read_to_string(p)
                        .map_err(|e| RunError::InvalidConfig(format!("cannot read {}: {e}", p.display())))?;
                    matrix_from_str(&text)
                };
                let system = DiscreteSystem::new(read(m)?, read(k)?)?;
                let n = system.dim();
                let load = system.mass().mul_vec(&vec![cfg.f; n]);
                Self::assemble(system, None, vec![cfg.u0; n], load)
            }
            _ => Self::fem(cfg.n, cfg.u0, cfg.u0_projection, cfg.f),
        }
    }

    /// Unit square with `n` cells per side, constant initial value and load.
    pub fn fem(n: usize, u0: f64, projection: Projection, f: f64) -> Result<Self> {
        let mesh = unit_square_mesh(n)?;
        let system = assemble_fem(&mesh)?;
        let g = move |_x: f64, _y: f64| u0;
        let u0 = match projection {
            Projection::H1 => project_h1(&mesh, &g)?,
            Projection::L2 => project_l2(&mesh, &g)?,
        };
        let load = load_vector(&mesh, &move |_x: f64, _y: f64| f);
        Self::assemble(system, Some(mesh), u0, load)
    }

    fn assemble(system: DiscreteSystem, trimesh: Option<TriMesh>, u0: Vec<f64>, load: Vec<f64>) -> Result<Self> {
        let u_inf = if load.iter().all(|v| *v == 0.0) {
            vec![0.0; load.len()]
        } else {
            system.k_solve(&load)?
        };
        system.counters().reset();
        Ok(Self {
            system,
            trimesh,
            u0,
            load,
            u_inf,
        })
    }

    pub fn dim(&self) -> usize {
        self.system.dim()
    }

    pub fn rhs(&self) -> ConstantRhs {
        ConstantRhs(self.load.clone())
    }

    pub fn has_load(&self) -> bool {
        self.load.iter().any(|v| *v != 0.0)
    }

    /// The dense spectral reference, when the dimension permits.
    pub fn spectral(&self) -> Result<Option<SpectralFactorization>> {
        if self.dim() > ORACLE_DIM_CAP {
            return Ok(None);
        }
        Ok(Some(self.system.eigendecompose()?))
    }

    /// `‖u - u_T‖_X` against the exact solution `u∞ + exp(-tA)(u0 - u∞)`.
    pub fn error(&self, spec: &SpectralFactorization, sol: &SplineSolution) -> radapt_core::Result<f64> {
        let shift = |v: &[f64]| -> Vec<f64> { v.iter().zip(&self.u_inf).map(|(a, b)| a - b).collect() };
        let mut s = sol.clone();
        s.u0 = shift(&sol.u0);
        s.u_end = shift(&sol.u_end);
        for l in &mut s.left {
            *l = shift(l);
        }
        xnorm_error_modal(spec, &s, &shift(&self.u0))
    }
}

/// One line of `convergence.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub kind: &'static str,
    pub iter: usize,
    pub n_elems: usize,
    /// `Σ_{k ≤ iter} #T_k`.
    pub cum_elems: usize,
    pub eta: f64,
    pub err_x: Option<f64>,
    pub n_marked: usize,
    /// Cumulative stage solves of the run.
    pub solves: u64,
}

#[derive(Debug, Clone)]
pub struct ConvergenceResult {
    pub rows: Vec<ConvergenceRow>,
    pub last_mesh: TimeMesh,
    /// Every adaptive iterate satisfied the grading condition.
    pub graded: bool,
    pub adaptive_rate: Option<f64>,
    pub uniform_rate: Option<f64>,
}

impl ConvergenceResult {
    pub fn adaptive(&self) -> impl Iterator<Item = &ConvergenceRow> {
        self.rows.iter().filter(|r| r.kind == "adaptive")
    }

    pub fn uniform(&self) -> impl Iterator<Item = &ConvergenceRow> {
        self.rows.iter().filter(|r| r.kind == "uniform")
    }
}

/// Fitted rate over the last [`RATE_WINDOW`] rows, by error when known and by `η` otherwise.
pub fn window_rate<'a>(rows: impl Iterator<Item = &'a ConvergenceRow>) -> Option<f64> {
    let rows: Vec<&ConvergenceRow> = rows.collect();
    let tail = &rows[rows.len().saturating_sub(RATE_WINDOW)..];
    let n: Vec<f64> = tail.iter().map(|r| r.n_elems as f64).collect();
    let e: Vec<f64> = tail.iter().map(|r| r.err_x.unwrap_or(r.eta)).collect();
    fit_rate(&n, &e).ok()
}

pub fn adaptive_params(cfg: &RunConfig, scheme: Scheme) -> AdaptiveParams {
    AdaptiveParams {
        scheme,
        theta: cfg.theta,
        grading: cfg.effective_grading(),
        tol: cfg.tol,
        max_iter: cfg.max_iter,
    }
}

/// Adaptive loop on `problem`, recording errors when `spec` is given.
pub fn adaptive_rows(
    problem: &HeatProblem,
    spec: Option<&SpectralFactorization>,
    initial: &TimeMesh,
    params: &AdaptiveParams,
) -> Result<(Vec<ConvergenceRow>, TimeMesh, bool)> {
    let f = problem.rhs();
    let g0 = 3f64.powf(-1.0 / params.grading as f64);
    problem.system.counters().reset();
    let mut rows = Vec::new();
    let mut last = initial.clone();
    let mut graded = true;
    let mut cum = 0;
    adaptive_loop_with(&problem.system, &f, &problem.u0, initial, params, |it| {
        let mesh = &it.solution.mesh;
        graded &= check_grading(mesh, 3.0, g0);
        cum += mesh.len();
        let err_x = spec.map(|s| problem.error(s, &it.solution)).transpose()?;
        rows.push(ConvergenceRow {
            kind: "adaptive",
            iter: it.index,
            n_elems: mesh.len(),
            cum_elems: cum,
            eta: it.estimate.total(),
            err_x,
            n_marked: it.marked.len(),
            solves: problem.system.counters().snapshot().stage_solves,
        });
        last = mesh.clone();
        Ok(())
    })?;
    Ok((rows, last, graded))
}

/// Uniform trisection of `initial`, `levels` times.
pub fn uniform_rows(
    problem: &HeatProblem,
    spec: Option<&SpectralFactorization>,
    initial: &TimeMesh,
    levels: usize,
    scheme: Scheme,
) -> Result<Vec<ConvergenceRow>> {
    let f = problem.rhs();
    problem.system.counters().reset();
    let mut solver = RadauSolver::new(&problem.system);
    let mut mesh = initial.clone();
    let mut rows = Vec::new();
    let mut cum = 0;
    for iter in 0..=levels {
        let sol = solver.solve(&mesh, &f, &problem.u0, scheme)?;
        let est = radapt_core::radau::estimate(&problem.system, &sol, &f)?;
        cum += mesh.len();
        rows.push(ConvergenceRow {
            kind: "uniform",
            iter,
            n_elems: mesh.len(),
            cum_elems: cum,
            eta: est.total(),
            err_x: spec.map(|s| problem.error(s, &sol)).transpose()?,
            n_marked: if iter < levels { mesh.len() } else { 0 },
            solves: problem.system.counters().snapshot().stage_solves,
        });
        if iter < levels {
            mesh = mesh.refine_uniform()?;
        }
    }
    Ok(rows)
}

/// Adaptive and uniform ladders on the configured problem.
pub fn convergence_study(cfg: &RunConfig, problem: &HeatProblem, spec: Option<&SpectralFactorization>) -> Result<ConvergenceResult> {
    let initial = TimeMesh::uniform(cfg.t_end, cfg.n0)?;
    let scheme = Scheme::from(cfg.scheme);
    let (mut rows, last_mesh, graded) = adaptive_rows(problem, spec, &initial, &adaptive_params(cfg, scheme))?;
    rows.extend(uniform_rows(problem, spec, &initial, cfg.uniform_levels, scheme)?);
    let mut out = ConvergenceResult {
        rows,
        last_mesh,
        graded,
        adaptive_rate: None,
        uniform_rate: None,
    };
    out.adaptive_rate = window_rate(out.adaptive());
    out.uniform_rate = window_rate(out.uniform());
    Ok(out)
}

fn convergence_table(rows: &[ConvergenceRow]) -> Table {
    let mut t = Table::new(&["kind", "iter", "n_elems", "cum_elems", "eta", "err_x", "n_marked", "solves"]);
    for r in rows {
        t.push(vec![
            r.kind.to_string(),
            r.iter.to_string(),
            r.n_elems.to_string(),
            r.cum_elems.to_string(),
            fmt_f(r.eta),
            fmt_opt(r.err_x),
            r.n_marked.to_string(),
            r.solves.to_string(),
        ]);
    }
    t
}

fn steps_table(mesh: &TimeMesh) -> Table {
    let mut t = Table::new(&["index", "t_left", "h", "level"]);
    for (i, c) in mesh.cells().iter().enumerate() {
        t.push(vec![i.to_string(), fmt_f(mesh.left(i)), fmt_f(mesh.size(i)), c.level.to_string()]);
    }
    t
}

/// Writes `name` into `dir` and records it.
fn emit(dir: &Path, files: &mut Vec<String>, name: &str, contents: &str) -> Result<()> {
    fs::write(dir.join(name), contents)?;
    files.push(name.to_string());
    Ok(())
}

fn emit_table(dir: &Path, files: &mut Vec<String>, name: &str, t: &Table) -> Result<()> {
    emit(dir, files, name, &t.to_csv()?)
}

fn dump_problem(dir: &Path, files: &mut Vec<String>, problem: &HeatProblem) -> Result<()> {
    emit(dir, files, "mass.txt", &matrix_to_string(problem.system.mass()))?;
    emit(dir, files, "stiffness.txt", &matrix_to_string(problem.system.stiffness()))?;
    if let Some(m) = &problem.trimesh {
        emit(dir, files, "trimesh.txt", &trimesh_to_string(m))?;
    }
    Ok(())
}

pub fn run_convergence(cfg: &RunConfig, dir: &Path) -> Result<Vec<String>> {
    let problem = HeatProblem::from_config(cfg)?;
    let spec = problem.spectral()?;
    let res = convergence_study(cfg, &problem, spec.as_ref())?;
    info!(
        "adaptive rate {:?}, uniform rate {:?}, graded {}",
        res.adaptive_rate, res.uniform_rate, res.graded
    );
    let mut files = Vec::new();
    emit_table(dir, &mut files, "convergence.csv", &convergence_table(&res.rows))?;
    emit_table(dir, &mut files, "steps.csv", &steps_table(&res.last_mesh))?;
    let mut rates = Table::new(&["kind", "rate"]);
    rates.push(vec!["adaptive".into(), fmt_opt(res.adaptive_rate)]);
    rates.push(vec!["uniform".into(), fmt_opt(res.uniform_rate)]);
    emit_table(dir, &mut files, "rates.csv", &rates)?;
    if cfg.dump_mesh {
        emit(dir, &mut files, "mesh.txt", &mesh_to_string(&res.last_mesh))?;
        dump_problem(dir, &mut files, &problem)?;
    }
    Ok(files)
}

/// Adaptive runs of both schemes for one spatial size.
#[derive(Debug, Clone)]
pub struct SchemeRun {
    pub n: usize,
    pub n_h: usize,
    pub hybrid: Vec<ConvergenceRow>,
    pub cn: Vec<ConvergenceRow>,
}

impl SchemeRun {
    /// Crank–Nicolson error over the hybrid error on the largest hybrid mesh not exceeding it in size.
    pub fn cn_ratios(&self) -> Vec<Option<f64>> {
        let value = |r: &ConvergenceRow| r.err_x.unwrap_or(r.eta);
        self.cn
            .iter()
            .map(|c| {
                self.hybrid
                    .iter()
                    .filter(|h| h.n_elems <= c.n_elems)
                    .max_by_key(|h| h.n_elems)
                    .map(|h| value(c) / value(h))
            })
            .collect()
    }

    /// First iteration from which every Crank–Nicolson iterate stays within a factor 2 of the hybrid error.
    pub fn cn_catch_up(&self) -> Option<usize> {
        let ratios = self.cn_ratios();
        let start = ratios.iter().rposition(|r| r.is_none_or(|v| v > 2.0)).map_or(0, |i| i + 1);
        self.cn.get(start).map(|c| c.iter)
    }
}

pub fn scheme_comparison(cfg: &RunConfig) -> Result<Vec<SchemeRun>> {
    let initial = TimeMesh::uniform(cfg.t_end, cfg.n0)?;
    let mut out = Vec::new();
    for &n in &cfg.ladder {
        let problem = HeatProblem::fem(n, cfg.u0, cfg.u0_projection, cfg.f)?;
        let spec = problem.spectral()?;
        let (hybrid, _, _) = adaptive_rows(&problem, spec.as_ref(), &initial, &adaptive_params(cfg, Scheme::Hybrid))?;
        let (cn, _, _) = adaptive_rows(&problem, spec.as_ref(), &initial, &adaptive_params(cfg, Scheme::CrankNicolson))?;
        info!("n = {n}: {} hybrid and {} CN iterates", hybrid.len(), cn.len());
        out.push(SchemeRun {
            n,
            n_h: problem.dim(),
            hybrid,
            cn,
        });
    }
    Ok(out)
}

pub fn run_scheme_comparison(cfg: &RunConfig, dir: &Path) -> Result<Vec<String>> {
    let runs = scheme_comparison(cfg)?;
    let mut t = Table::new(&["scheme", "n", "n_h", "iter", "n_elems", "eta", "err_x", "solves"]);
    let mut summary = Table::new(&["n", "n_h", "cn_catch_up_iter", "final_cn_ratio"]);
    for run in &runs {
        for (name, rows) in [("hybrid", &run.hybrid), ("cn", &run.cn)] {
            for r in rows {
                t.push(vec![
                    name.to_string(),
                    run.n.to_string(),
                    run.n_h.to_string(),
                    r.iter.to_string(),
                    r.n_elems.to_string(),
                    fmt_f(r.eta),
                    fmt_opt(r.err_x),
                    r.solves.to_string(),
                ]);
            }
        }
        summary.push(vec![
            run.n.to_string(),
            run.n_h.to_string(),
            run.cn_catch_up().map(|i| i.to_string()).unwrap_or_default(),
            fmt_opt(run.cn_ratios().last().copied().flatten()),
        ]);
    }
    let mut files = Vec::new();
    emit_table(dir, &mut files, "schemes.csv", &t)?;
    emit_table(dir, &mut files, "schemes_summary.csv", &summary)?;
    Ok(files)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfsupRow {
    pub scheme: SchemeKind,
    pub lambda: f64,
    pub n_elems: usize,
    /// `λ|T|`.
    pub lambda_tau: f64,
    pub c0: f64,
}

pub fn infsup_sweep(cfg: &RunConfig) -> Result<Vec<InfsupRow>> {
    let mut rows = Vec::new();
    for (scheme, pg) in [(SchemeKind::Hybrid, PgScheme::Hybrid), (SchemeKind::Cn, PgScheme::CrankNicolson)] {
        for &lambda in &cfg.lambdas {
            for &n in &cfg.infsup_n {
                let mesh = TimeMesh::uniform(cfg.t_end, n)?;
                rows.push(InfsupRow {
                    scheme,
                    lambda,
                    n_elems: n,
                    lambda_tau: lambda * mesh.h0(),
                    c0: infsup_constant(lambda, &mesh, pg)?,
                });
            }
        }
    }
    Ok(rows)
}

pub fn run_infsup_sweep(cfg: &RunConfig, dir: &Path) -> Result<Vec<String>> {
    let rows = infsup_sweep(cfg)?;
    let mut t = Table::new(&["scheme", "lambda", "n_elems", "lambda_tau", "c0"]);
    for r in &rows {
        let scheme = match r.scheme {
            SchemeKind::Hybrid => "hybrid",
            SchemeKind::Cn => "cn",
        };
        t.push(vec![
            scheme.to_string(),
            fmt_f(r.lambda),
            r.n_elems.to_string(),
            fmt_f(r.lambda_tau),
            fmt_f(r.c0),
        ]);
    }
    let mut files = Vec::new();
    emit_table(dir, &mut files, "infsup.csv", &t)?;
    Ok(files)
}

/// `f̂(s) = F/s` for a constant load.
fn laplace_load(problem: &HeatProblem) -> impl Fn(Complex64) -> Vec<Complex64> + '_ {
    move |s| problem.load.iter().map(|v| Complex64::new(*v, 0.0) / s).collect()
}

/// Normalized singular values `σ_k/σ_1` of the snapshot matrix for each `M`.
pub fn svd_decay(cfg: &RunConfig, problem: &HeatProblem) -> Result<Vec<(usize, Vec<f64>)>> {
    let fhat = laplace_load(problem);
    let fhat: Option<LaplaceLoad<'_>> = problem.has_load().then_some(&fhat as LaplaceLoad<'_>);
    let mut out = Vec::new();
    for &m in &cfg.m {
        let grid = SincGrid::new(cfg.alpha, cfg.d, m)?;
        let snaps = build_snapshots(&problem.system, fhat, &problem.u0, &grid)?;
        let basis = build_reduced_basis(&problem.system, &snaps, 1)?;
        let s1 = basis.singular_values.first().copied().unwrap_or(0.0);
        let sv = if s1 > 0.0 {
            basis.singular_values.iter().map(|v| v / s1).collect()
        } else {
            basis.singular_values.clone()
        };
        out.push((m, sv));
    }
    Ok(out)
}

pub fn run_svd_decay(cfg: &RunConfig, dir: &Path) -> Result<Vec<String>> {
    let problem = HeatProblem::from_config(cfg)?;
    let series = svd_decay(cfg, &problem)?;
    let mut t = Table::new(&["M", "k", "sigma_k"]);
    for (m, sv) in &series {
        for (k, v) in sv.iter().enumerate() {
            t.push(vec![m.to_string(), (k + 1).to_string(), fmt_f(*v)]);
        }
    }
    let mut files = Vec::new();
    emit_table(dir, &mut files, "svd.csv", &t)?;
    Ok(files)
}

/// One reduced run for a pair `(M, R)`.
#[derive(Debug, Clone)]
pub struct MorResult {
    pub m: usize,
    pub r: usize,
    pub rank: usize,
    pub epsilon_m: f64,
    pub snapshot_solves: u64,
    /// `∫_0^T ‖(I - P)u‖²_V + ‖(I - P)u'‖²_{V*}` for the exact solution, without load only.
    pub projection_error: Option<f64>,
    pub rows: Vec<ConvergenceRow>,
}

impl MorResult {
    /// Error of the final iterate.
    pub fn stagnation(&self) -> Option<f64> {
        self.rows.last().and_then(|r| r.err_x)
    }
}

pub fn mor_study(cfg: &RunConfig, problem: &HeatProblem, spec: Option<&SpectralFactorization>) -> Result<Vec<MorResult>> {
    let initial = TimeMesh::uniform(cfg.t_end, cfg.n0)?;
    let f = problem.rhs();
    let fhat = laplace_load(problem);
    let fhat: Option<LaplaceLoad<'_>> = problem.has_load().then_some(&fhat as LaplaceLoad<'_>);
    // the exact modal reference covers the homogeneous problem only
    let reference = spec.filter(|_| !problem.has_load());
    let mut out = Vec::new();
    for &m in &cfg.m {
        for &r in &cfg.r {
            let params = MorParams {
                m,
                r,
                alpha: cfg.alpha,
                d: cfg.d,
                adaptive: adaptive_params(cfg, cfg.scheme.into()),
            };
            let run = mor_pipeline(&problem.system, fhat, &f, &problem.u0, &initial, &params, reference)?;
            let projection_error = reference
                .map(|s| time_domain_projection_error(s, &run.basis, &problem.u0, cfg.t_end))
                .transpose()?;
            let mut cum = 0;
            let rows = run
                .iterates
                .iter()
                .map(|it| {
                    cum += it.n_elems;
                    ConvergenceRow {
                        kind: "mor",
                        iter: it.index,
                        n_elems: it.n_elems,
                        cum_elems: cum,
                        eta: it.eta,
                        err_x: it.err_x,
                        n_marked: 0,
                        solves: it.solves_reduced,
                    }
                })
                .collect();
            info!("M = {m}, R = {r}: rank {}, eps {:e}", run.basis.rank(), run.epsilon_m);
            out.push(MorResult {
                m,
                r,
                rank: run.basis.rank(),
                epsilon_m: run.epsilon_m,
                snapshot_solves: run.snapshot_solves,
                projection_error,
                rows,
            });
        }
    }
    Ok(out)
}

pub fn run_mor(cfg: &RunConfig, dir: &Path) -> Result<Vec<String>> {
    let problem = HeatProblem::from_config(cfg)?;
    let spec = if problem.has_load() { None } else { problem.spectral()? };
    let results = mor_study(cfg, &problem, spec.as_ref())?;
    let mut t = Table::new(&["R", "M", "iter", "n_elems", "eta", "err_x", "solves_full", "solves_reduced"]);
    let mut s = Table::new(&["R", "M", "rank", "epsilon_m", "projection_error", "stagnation", "solves_full"]);
    for res in &results {
        for row in &res.rows {
            t.push(vec![
                res.r.to_string(),
                res.m.to_string(),
                row.iter.to_string(),
                row.n_elems.to_string(),
                fmt_f(row.eta),
                fmt_opt(row.err_x),
                res.snapshot_solves.to_string(),
                row.solves.to_string(),
            ]);
        }
        s.push(vec![
            res.r.to_string(),
            res.m.to_string(),
            res.rank.to_string(),
            fmt_f(res.epsilon_m),
            fmt_opt(res.projection_error),
            fmt_opt(res.stagnation()),
            res.snapshot_solves.to_string(),
        ]);
    }
    let mut files = Vec::new();
    emit_table(dir, &mut files, "mor.csv", &t)?;
    emit_table(dir, &mut files, "mor_summary.csv", &s)?;
    Ok(files)
}

/// A named comparison against an independent reference.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleCheck {
    pub name: &'static str,
    pub value: f64,
    pub tol: f64,
}

impl OracleCheck {
    pub fn pass(&self) -> bool {
        self.value.is_finite() && self.value <= self.tol
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

pub fn oracle_checks(cfg: &RunConfig) -> Result<Vec<OracleCheck>> {
    let problem = HeatProblem::from_config(cfg)?;
    let spec = problem
        .spectral()?
        .ok_or_else(|| RunError::InvalidConfig(format!("oracle checks need dimension at most {ORACLE_DIM_CAP}")))?;
    let sys = &problem.system;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let x: Vec<f64> = (0..sys.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mx = sys.mass().mul_vec(&x);
    let mut checks = vec![
        OracleCheck {
            name: "norm_v_sparse_vs_spectral",
            value: rel(sys.norm_v(&x)?, spec.norm_v(&x)),
            tol: 1e-8,
        },
        OracleCheck {
            name: "norm_vstar_sparse_vs_spectral",
            value: rel(sys.norm_vstar(&mx)?, spec.norm_vstar(&mx)),
            tol: 1e-8,
        },
    ];
    if problem.trimesh.is_some() && cfg.n >= 32 {
        checks.push(OracleCheck {
            name: "smallest_eigenvalue_vs_2pi2",
            value: rel(spec.eigenvalues[0], 2.0 * std::f64::consts::PI.powi(2)),
            tol: 0.02,
        });
    }
    // eigenvector initial value: nodal values are products of stability factors
    let mut e = vec![0.0; sys.dim()];
    e[0] = 1.0;
    let u0 = spec.reconstruct(&e);
    let mut mesh = TimeMesh::uniform(cfg.t_end, 3)?;
    mesh.trisect_in_place(0, cfg.effective_grading())?;
    let zero = ConstantRhs(vec![0.0; sys.dim()]);
    let sol = RadauSolver::new(sys).solve(&mesh, &zero, &u0, Scheme::Hybrid)?;
    let lambda = spec.eigenvalues[0];
    let mut factor = 1.0;
    let mut worst: f64 = 0.0;
    let scale = u0.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    for j in 0..=mesh.len() {
        if j > 0 {
            factor *= radau_stability(-lambda * mesh.size(j - 1));
        }
        for (a, b) in sol.nodal(j).iter().zip(&u0) {
            worst = worst.max((a - factor * b).abs() / scale);
        }
    }
    checks.push(OracleCheck {
        name: "eigenvector_nodal_stability_products",
        value: worst,
        tol: 1e-10,
    });
    // Petrov-Galerkin matrix solve against time stepping on a small system
    let small = assemble_fem(&unit_square_mesh(4)?)?;
    let n = small.dim();
    let coeffs: Vec<Vec<f64>> = (0..3).map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let f = PolynomialRhs { coeffs };
    let v0: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let sol = RadauSolver::new(&small).solve(&mesh, &f, &v0, Scheme::Hybrid)?;
    let pg = solve_pg_full(&small, &mesh, &f, &v0)?;
    checks.push(OracleCheck {
        name: "petrov_galerkin_vs_stepping",
        value: (flatten(&pg) - flatten(&hierarchical_coefficients(&sol))).amax(),
        tol: 1e-10,
    });
    Ok(checks)
}

pub fn run_oracle_check(cfg: &RunConfig, dir: &Path) -> Result<Vec<String>> {
    let checks = oracle_checks(cfg)?;
    let mut t = Table::new(&["name", "value", "tol", "pass"]);
    for c in &checks {
        t.push(vec![c.name.to_string(), fmt_f(c.value), fmt_f(c.tol), c.pass().to_string()]);
    }
    let mut files = Vec::new();
    emit_table(dir, &mut files, "oracle.csv", &t)?;
    let failed: Vec<&str> = checks.iter().filter(|c| !c.pass()).map(|c| c.name).collect();
    if !failed.is_empty() {
        return Err(RunError::Numerical(format!("oracle checks failed: {}", failed.join(", "))));
    }
    Ok(files)
}
