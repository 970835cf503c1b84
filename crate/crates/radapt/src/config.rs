//! Run configuration: defaults, command-line flags and a flat `key = value` file.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use radapt_core::radau::Scheme;

use crate::error::{Result, RunError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SchemeKind {
    Hybrid,
    Cn,
}

impl From<SchemeKind> for Scheme {
    fn from(s: SchemeKind) -> Self {
        match s {
            SchemeKind::Hybrid => Scheme::Hybrid,
            SchemeKind::Cn => Scheme::CrankNicolson,
        }
    }
}

/// How the constant initial value enters the finite element space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Projection {
    H1,
    L2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Cells per side of the spatial mesh.
    pub n: usize,
    /// Explicit mass matrix file; replaces the finite element problem together with `stiffness`.
    pub mass: Option<PathBuf>,
    pub stiffness: Option<PathBuf>,
    pub t_end: f64,
    /// Elements of the uniform initial time mesh.
    pub n0: usize,
    /// Constant initial value.
    pub u0: f64,
    pub u0_projection: Projection,
    /// Constant load.
    pub f: f64,
    pub scheme: SchemeKind,
    pub theta: f64,
    pub grading: u32,
    /// Grading factor; when set, overrides `grading` through `G = ⌈log 3 / log(1/g0)⌉`.
    pub g0: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
    /// Number of uniform refinements in the comparison ladder.
    pub uniform_levels: usize,
    pub m: Vec<usize>,
    pub r: Vec<usize>,
    pub alpha: f64,
    pub d: f64,
    pub lambdas: Vec<f64>,
    pub infsup_n: Vec<usize>,
    /// Spatial sizes `n` of the scheme comparison ladder.
    pub ladder: Vec<usize>,
    pub seed: u64,
    pub out: PathBuf,
    pub dump_mesh: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n: 32,
            mass: None,
            stiffness: None,
            t_end: 1.0,
            n0: 1,
            u0: 1.0,
            u0_projection: Projection::H1,
            f: 0.0,
            scheme: SchemeKind::Hybrid,
            theta: 0.5,
            grading: 4,
            g0: None,
            tol: 0.0,
            max_iter: 22,
            uniform_levels: 6,
            m: vec![50, 75, 100, 125],
            r: vec![5, 10, 15, 20],
            alpha: 1.0,
            d: PI / 4.0,
            lambdas: vec![1.0, 10.0, 100.0, 1000.0],
            infsup_n: vec![4, 8, 16, 32, 64],
            ladder: vec![23, 45, 90],
            seed: 0,
            out: PathBuf::from("out"),
            dump_mesh: false,
        }
    }
}

/// Optional overrides, as given on the command line or in a config file.
#[derive(Debug, Clone, Default, PartialEq, Deserialize, clap::Args)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub mass: Option<PathBuf>,
    #[arg(long)]
    pub stiffness: Option<PathBuf>,
    #[arg(long)]
    pub t_end: Option<f64>,
    #[arg(long)]
    pub n0: Option<usize>,
    #[arg(long)]
    pub u0: Option<f64>,
    #[arg(long, value_enum)]
    pub u0_projection: Option<Projection>,
    #[arg(long)]
    pub f: Option<f64>,
    #[arg(long, value_enum)]
    pub scheme: Option<SchemeKind>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long = "G")]
    #[serde(alias = "G")]
    pub grading: Option<u32>,
    #[arg(long)]
    pub g0: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub uniform_levels: Option<usize>,
    #[arg(long = "M", value_delimiter = ',')]
    #[serde(alias = "M")]
    pub m: Option<Vec<usize>>,
    #[arg(long = "R", value_delimiter = ',')]
    #[serde(alias = "R")]
    pub r: Option<Vec<usize>>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub d: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub lambdas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub infsup_n: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub ladder: Option<Vec<usize>>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub dump_mesh: Option<bool>,
}

impl Overrides {
    /// Parses a flat `key = value` file (TOML syntax, no tables).
    pub fn parse_file_contents(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| RunError::InvalidConfig(e.message().to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RunError::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
        Self::parse_file_contents(&text)
    }
}

impl RunConfig {
    /// Applies every override that is set.
    pub fn apply(&mut self, o: &Overrides) {
        macro_rules! set {
            ($($f:ident),*) => {
                $(if let Some(v) = &o.$f { self.$f = v.clone(); })*
            };
        }
        set!(
            n, t_end, n0, u0, u0_projection, f, scheme, theta, grading, tol, max_iter, uniform_levels,
            m, r, alpha, d, lambdas, infsup_n, ladder, seed, out, dump_mesh
        );
        if o.g0.is_some() {
            self.g0 = o.g0;
        }
        if o.mass.is_some() {
            self.mass.clone_from(&o.mass);
        }
        if o.stiffness.is_some() {
            self.stiffness.clone_from(&o.stiffness);
        }
    }

    /// Defaults, then flags, then the config file.
    pub fn resolve(flags: &Overrides, file: Option<&Overrides>) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply(flags);
        if let Some(f) = file {
            cfg.apply(f);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// The grading parameter in effect.
    pub fn effective_grading(&self) -> u32 {
        match self.g0 {
            Some(g0) => grading_from_g0(g0),
            None => self.grading,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(RunError::InvalidConfig(m.to_string()));
        if self.n < 2 {
            return bad("n must be at least 2");
        }
        if self.mass.is_some() != self.stiffness.is_some() {
            return bad("mass and stiffness files must be given together");
        }
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return bad("t_end must be positive");
        }
        if self.n0 < 1 {
            return bad("n0 must be at least 1");
        }
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return bad("theta must lie in (0, 1]");
        }
        if self.grading < 1 {
            return bad("G must be at least 1");
        }
        if let Some(g0) = self.g0 {
            if !(g0 > 0.0 && g0 < 1.0) {
                return bad("g0 must lie in (0, 1)");
            }
        }
        if !(self.d > 0.0 && self.d < PI / 2.0) {
            return bad("d must lie in (0, pi/2)");
        }
        if !(self.alpha.is_finite() && self.alpha >= 1.0) {
            return bad("alpha must be at least 1");
        }
        if !(self.tol.is_finite() && self.tol >= 0.0) {
            return bad("tol must be nonnegative");
        }
        if self.max_iter < 1 {
            return bad("max_iter must be at least 1");
        }
        if !(self.u0.is_finite() && self.f.is_finite()) {
            return bad("u0 and f must be finite");
        }
        if self.m.is_empty() || self.m.contains(&0) {
            return bad("M values must be positive");
        }
        if self.r.is_empty() || self.r.contains(&0) {
            return bad("R values must be positive");
        }
        if self.lambdas.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return bad("lambdas must be positive");
        }
        if self.infsup_n.contains(&0) {
            return bad("infsup_n values must be positive");
        }
        if self.ladder.iter().any(|&n| n < 2) {
            return bad("ladder sizes must be at least 2");
        }
        Ok(())
    }

    /// SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        let text = toml::to_string(self).unwrap_or_default();
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

/// `G = ⌈log 3 / log(1/g0)⌉`.
pub fn grading_from_g0(g0: f64) -> u32 {
    (3f64.ln() / (1.0 / g0).ln()).ceil() as u32
}
