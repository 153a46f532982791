//! Job configuration files.

use hypscat::geometry::{
    build_artin, build_genus_one, build_genus_zero_three_cusps, build_modular, genus_one_default_cut, ScalarField, SurfaceSpec,
    Symmetry,
};
use hypscat::resonances::Rectangle;
use hypscat::specialfn::ClosedFormCase;
use hypscat::C64;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

use crate::CliError;

/// Surface by family parameters, or a full inline description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SurfaceChoice {
    Modular {
        a: f64,
        #[serde(default)]
        q: f64,
        #[serde(default = "even")]
        symmetry: Symmetry,
    },
    Artin {
        r: f64,
        a: f64,
    },
    GenusOne {
        ell: f64,
        tau: f64,
        /// Defaults to the smallest admissible cut, but at least 1.
        a: Option<f64>,
    },
    GenusZero {
        a: [f64; 3],
    },
    Inline {
        spec: Box<SurfaceSpec>,
    },
}

fn even() -> Symmetry {
    Symmetry::Even
}

impl SurfaceChoice {
    pub fn build(&self) -> Result<SurfaceSpec, CliError> {
        let spec = match self {
            SurfaceChoice::Modular { a, q, symmetry } => build_modular(*a, *q, *symmetry)?,
            SurfaceChoice::Artin { r, a } => build_artin(*r, *a)?,
            SurfaceChoice::GenusOne { ell, tau, a } => build_genus_one(*ell, *tau, a.unwrap_or_else(|| genus_one_default_cut(*ell).max(1.0)))?,
            SurfaceChoice::GenusZero { a } => build_genus_zero_three_cusps(*a)?,
            SurfaceChoice::Inline { spec } => {
                spec.validate()?;
                (**spec).clone()
            }
        };
        Ok(spec)
    }

    /// Copy with one named parameter replaced, for tracking.
    pub fn with_param(&self, name: &str, value: f64) -> Result<SurfaceChoice, CliError> {
        let mut out = self.clone();
        let slot: &mut f64 = match (&mut out, name) {
            (SurfaceChoice::Modular { a, .. }, "a") => a,
            (SurfaceChoice::Modular { q, .. }, "q") => q,
            (SurfaceChoice::Artin { r, .. }, "r") => r,
            (SurfaceChoice::Artin { a, .. }, "a") => a,
            (SurfaceChoice::GenusOne { ell, .. }, "ell") => ell,
            (SurfaceChoice::GenusOne { tau, .. }, "tau") => tau,
            (SurfaceChoice::GenusZero { a }, "a0") => &mut a[0],
            (SurfaceChoice::GenusZero { a }, "a1") => &mut a[1],
            (SurfaceChoice::GenusZero { a }, "a2") => &mut a[2],
            _ => return Err(CliError::Config(format!("parameter '{name}' cannot be varied for this surface"))),
        };
        *slot = value;
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    /// Hyperbolic target edge length.
    pub h: f64,
    pub n_boundary: usize,
    #[serde(default)]
    pub refinements: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Route {
    /// Eigenfunction series accelerated by anchor solves.
    #[default]
    Series,
    /// Sparse solve at every s.
    Direct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FemConfig {
    #[serde(default)]
    pub order: hypscat::fem::ElementOrder,
    pub j: usize,
    #[serde(default)]
    pub route: Route,
    #[serde(default = "default_eigenpairs")]
    pub eigenpairs: usize,
    /// Anchor points s₀ as [re, im].
    #[serde(default)]
    pub anchors: Vec<[f64; 2]>,
}

fn default_eigenpairs() -> usize {
    400
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Grid {
    pub fn points(&self) -> Result<Vec<f64>, CliError> {
        if !(self.step > 0.0 && self.stop >= self.start) {
            return Err(CliError::Config(format!("bad grid {} .. {} step {}", self.start, self.stop, self.step)));
        }
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        Ok((0..=n).map(|k| self.start + k as f64 * self.step).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScatterConfig {
    /// Explicit points s as [re, im].
    #[serde(default)]
    pub s: Vec<[f64; 2]>,
    /// Critical-line grid in t, s = 1/2 + it.
    pub t: Option<Grid>,
    /// Extra model error δ₂ of the interior map for the error bound.
    #[serde(default)]
    pub delta2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResonanceConfig {
    #[serde(default = "default_window")]
    pub window: Rectangle,
    #[serde(default = "default_spacing")]
    pub spacing: f64,
    /// Explicit Newton seeds; the grid scan is skipped when present.
    #[serde(default)]
    pub seeds: Vec<[f64; 2]>,
    /// Use deflation and merge roots closer than this radius.
    pub cluster_radius: Option<f64>,
    #[serde(default = "default_max_roots")]
    pub max_roots: usize,
    pub count: Option<CountConfig>,
    pub track: Option<TrackConfig>,
    #[serde(default = "default_residual")]
    pub residual_tol: f64,
}

fn default_window() -> Rectangle {
    Rectangle { re0: -0.2, re1: 0.45, im0: 0.5, im1: 20.0 }
}

fn default_spacing() -> f64 {
    0.05
}

fn default_max_roots() -> usize {
    8
}

fn default_residual() -> f64 {
    1e-6
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountConfig {
    pub rectangle: Rectangle,
    #[serde(default = "default_points")]
    pub n_points: usize,
}

fn default_points() -> usize {
    64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackConfig {
    pub param: String,
    pub values: Vec<f64>,
    pub seeds: Vec<[f64; 2]>,
    #[serde(default = "default_order")]
    pub max_order: usize,
    #[serde(default = "default_jump")]
    pub max_jump: f64,
}

fn default_order() -> usize {
    3
}

fn default_jump() -> f64 {
    0.25
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum EigsMode {
    /// Singular-value scan for embedded eigenvalues.
    #[default]
    Embedded,
    /// Dirichlet eigenvalues of the odd reduced modular domain.
    OddDirichlet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EigsConfig {
    #[serde(default)]
    pub mode: EigsMode,
    pub t: Option<Grid>,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_prefilter")]
    pub prefilter: f64,
    /// Height of the Dirichlet wall in odd-dirichlet mode.
    #[serde(default = "default_wall")]
    pub wall: f64,
    #[serde(default = "default_count")]
    pub count: usize,
}

fn default_threshold() -> f64 {
    1e-4
}

fn default_prefilter() -> f64 {
    0.9
}

fn default_wall() -> f64 {
    4.0
}

fn default_count() -> usize {
    10
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CaseName {
    A0,
    BSqrt3,
    BSqrt2,
    CAcosh2,
    CAcosh3,
    CAcosh9,
    CGutzwiller,
    DGamma04,
}

impl From<CaseName> for ClosedFormCase {
    fn from(c: CaseName) -> Self {
        match c {
            CaseName::A0 => ClosedFormCase::A0,
            CaseName::BSqrt3 => ClosedFormCase::BSqrt3,
            CaseName::BSqrt2 => ClosedFormCase::BSqrt2,
            CaseName::CAcosh2 => ClosedFormCase::CAcosh2,
            CaseName::CAcosh3 => ClosedFormCase::CAcosh3,
            CaseName::CAcosh9 => ClosedFormCase::CAcosh9,
            CaseName::CGutzwiller => ClosedFormCase::CGutzwiller,
            CaseName::DGamma04 => ClosedFormCase::DGamma04,
        }
    }
}

/// Compares computed C̃ values with a reference: either a closed-form case or a
/// scatter output. Computed values come from `computed` (a scatter output) when
/// given, otherwise from the pipeline on the grid `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    pub case: Option<CaseName>,
    pub reference: Option<PathBuf>,
    pub computed: Option<PathBuf>,
    pub t: Option<Grid>,
    #[serde(default = "default_limit")]
    pub limit: f64,
}

fn default_limit() -> f64 {
    1e-3
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Surface,
    Mesh,
    SpectralData,
    ScatterEval,
    ResonanceScan,
    ResonanceCount,
    ResonanceTrack,
    EmbeddedScan,
    ClosedFormCompare,
}

/// One job file; sections not needed by the chosen task may be omitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobConfig {
    /// Task for `hypscat run`; the other subcommands imply their own.
    pub task: Option<Task>,
    /// Output directory, overridden by `--out`.
    pub output: Option<PathBuf>,
    pub surface: SurfaceChoice,
    pub conformal: Option<ScalarField>,
    pub potential: Option<ScalarField>,
    pub mesh: Option<MeshConfig>,
    pub fem: Option<FemConfig>,
    pub scatter: Option<ScatterConfig>,
    pub resonances: Option<ResonanceConfig>,
    pub eigs: Option<EigsConfig>,
    pub oracle: Option<OracleConfig>,
}

impl JobConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn surface_spec(&self, surface: &SurfaceChoice) -> Result<SurfaceSpec, CliError> {
        let mut spec = surface.build()?;
        if self.conformal.is_some() {
            spec.conformal = self.conformal.clone();
        }
        if self.potential.is_some() {
            spec.potential = self.potential.clone();
        }
        if self.conformal.is_some() || self.potential.is_some() {
            spec.validate()?;
        }
        Ok(spec)
    }

    pub fn mesh(&self) -> Result<MeshConfig, CliError> {
        let m = self.mesh.ok_or_else(|| CliError::Config("missing 'mesh' section".into()))?;
        if !(m.h > 0.0) || m.n_boundary < 8 {
            return Err(CliError::Config("mesh needs h > 0 and n_boundary ≥ 8".into()));
        }
        Ok(m)
    }

    pub fn fem(&self) -> Result<&FemConfig, CliError> {
        let f = self.fem.as_ref().ok_or_else(|| CliError::Config("missing 'fem' section".into()))?;
        let n = self.mesh()?.n_boundary;
        if f.j > n / 4 {
            return Err(CliError::Config(format!("J = {} exceeds n_boundary/4 = {}", f.j, n / 4)));
        }
        Ok(f)
    }

    pub fn anchors(&self) -> Result<Vec<C64>, CliError> {
        Ok(self.fem()?.anchors.iter().map(|a| C64::new(a[0], a[1])).collect())
    }
}

pub fn points(v: &[[f64; 2]]) -> Vec<C64> {
    v.iter().map(|p| C64::new(p[0], p[1])).collect()
}
