//! Strict TOML run configuration.
//!
//! ```toml
//! [domain]
//! kind = "whole_space"        # cylinder | exterior_ball | whole_space
//! d = 0.0
//!
//! [params]
//! beta = 1e-2
//! W = 0.15915494309189535
//!
//! [output]
//! directory = "out"
//! ```
//!
//! Every other key has a default. Unknown keys are rejected.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::elliptic::Backend;
use crate::error::{Error, Result};
use crate::geometry::{DomainKind, GridSpec, Margins};
use crate::variational::{RingSetup, SolverParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub domain: DomainConfig,
    pub params: ParamsConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    #[serde(deserialize_with = "kind_from_str", serialize_with = "kind_to_str")]
    pub kind: DomainKind,
    /// Pipe or ball radius; unused for the whole space.
    #[serde(default)]
    pub d: f64,
    #[serde(default)]
    pub margins: MarginsConfig,
    #[serde(default)]
    pub grid: GridSpec,
    /// Half-height of the support box (pipe and whole space only).
    #[serde(default)]
    pub support_z: Option<f64>,
    #[serde(default)]
    pub initial_radius: Option<f64>,
    #[serde(default = "default_recenter")]
    pub max_recenter: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MarginsConfig {
    pub r: f64,
    pub z: f64,
}

impl Default for MarginsConfig {
    fn default() -> Self {
        let m = Margins::default();
        MarginsConfig { r: m.r, z: m.z }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    #[serde(default)]
    pub alpha: f64,
    /// Single-run β; optional when `betas` is given.
    #[serde(default)]
    pub beta: Option<f64>,
    /// Sweep list, overridable on the command line.
    #[serde(default)]
    pub betas: Option<Vec<f64>>,
    #[serde(rename = "W")]
    pub w: f64,
    /// Cap coefficient `Λ`; the default rule `10·max(1, αβ)` applies when absent.
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default = "d_tol_fix")]
    pub tol_fix: f64,
    #[serde(default = "d_tol_circ")]
    pub tol_circ: f64,
    #[serde(default = "d_tol_lin")]
    pub tol_lin: f64,
    /// Damping of plain fixed-point steps.
    #[serde(default = "d_theta")]
    pub theta: f64,
    #[serde(default = "d_max_iter")]
    pub max_iter: usize,
    #[serde(default = "d_anderson")]
    pub anderson_depth: usize,
    #[serde(default)]
    pub backend: Backend,
    /// Seed for residual test-function placement.
    #[serde(default = "d_seed")]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub directory: PathBuf,
    /// Subset of `zeta`, `psi`, `xi`, `grid` to dump.
    pub fields: Vec<String>,
    /// Digits after the point in CSV and record floats.
    pub precision: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            directory: PathBuf::from("out"),
            fields: vec!["zeta".into(), "psi".into(), "xi".into()],
            precision: 10,
        }
    }
}

pub const FIELD_NAMES: &[&str] = &["zeta", "psi", "xi", "grid"];

fn default_recenter() -> usize {
    4
}
fn d_tol_fix() -> f64 {
    SolverParams::new(0.5, 1.0).tol_fix
}
fn d_tol_circ() -> f64 {
    SolverParams::new(0.5, 1.0).tol_circ
}
fn d_tol_lin() -> f64 {
    SolverParams::new(0.5, 1.0).tol_lin
}
fn d_theta() -> f64 {
    1.0
}
fn d_max_iter() -> usize {
    SolverParams::new(0.5, 1.0).max_iter
}
fn d_anderson() -> usize {
    SolverParams::new(0.5, 1.0).anderson_depth
}
fn d_seed() -> u64 {
    0x5eed
}

fn kind_from_str<'de, D: serde::Deserializer<'de>>(de: D) -> std::result::Result<DomainKind, D::Error> {
    let s = String::deserialize(de)?;
    s.parse().map_err(serde::de::Error::custom)
}

fn kind_to_str<S: serde::Serializer>(k: &DomainKind, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(k.as_str())
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string() + &span_note(text, e.span())))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &std::path::Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

fn span_note(text: &str, span: Option<std::ops::Range<usize>>) -> String {
    match span {
        Some(s) if s.start <= text.len() => {
            let line = text[..s.start].matches('\n').count() + 1;
            format!(" (line {line})")
        }
        _ => String::new(),
    }
}

impl RunConfig {
    fn validate(&self) -> Result<()> {
        let d = &self.domain;
        if d.kind != DomainKind::WholeSpace && !(d.d > 0.0 && d.d.is_finite()) {
            return Err(Error::param("domain.d", format!("must be positive for {}", d.kind)));
        }
        if !(d.margins.r >= 0.0 && d.margins.z >= 0.0) {
            return Err(Error::param("domain.margins", "margins must be nonnegative"));
        }
        let g = &d.grid;
        for (key, v) in [
            ("domain.grid.h_fine_per_beta", g.h_fine_per_beta),
            ("domain.grid.band_r_half_per_beta", g.band_r_half_per_beta),
            ("domain.grid.band_z_half_per_beta", g.band_z_half_per_beta),
            ("domain.grid.h_max", g.h_max),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(key, "must be positive"));
            }
        }
        if !(g.growth >= 1.0) {
            return Err(Error::param("domain.grid.growth", "must be at least 1"));
        }
        match (&self.params.beta, &self.params.betas) {
            (None, None) => return Err(Error::param("params.beta", "missing: give `beta` or `betas`")),
            (_, Some(list)) if list.is_empty() => return Err(Error::param("params.betas", "empty list")),
            _ => {}
        }
        for b in self.params.betas.iter().flatten().chain(self.params.beta.iter()) {
            self.solver_params(*b).validate()?;
        }
        if let Some(f) = self.output.fields.iter().find(|f| !FIELD_NAMES.contains(&f.as_str())) {
            return Err(Error::param("output.fields", format!("unknown field `{f}`; expected one of {FIELD_NAMES:?}")));
        }
        if self.output.precision == 0 || self.output.precision > 16 {
            return Err(Error::param("output.precision", "must lie in 1..=16"));
        }
        Ok(())
    }

    /// β of a single run: `params.beta`, else the first sweep entry.
    pub fn beta(&self) -> f64 {
        self.params.beta.or_else(|| self.params.betas.as_ref().and_then(|b| b.first().copied())).unwrap_or(f64::NAN)
    }

    pub fn solver_params(&self, beta: f64) -> SolverParams {
        let p = &self.params;
        SolverParams {
            alpha: p.alpha,
            beta,
            w: p.w,
            cap: p.lambda,
            tol_fix: p.tol_fix,
            tol_circ: p.tol_circ,
            tol_lin: p.tol_lin,
            max_iter: p.max_iter,
            theta: p.theta,
            anderson_depth: p.anderson_depth,
            backend: p.backend,
        }
    }

    pub fn setup(&self, beta: f64) -> RingSetup {
        let d = &self.domain;
        let mut s = RingSetup::new(d.kind, d.d, self.solver_params(beta));
        s.grid = d.grid;
        s.margins = Margins {
            r: d.margins.r,
            z: d.margins.z,
        };
        s.support_z = d.support_z;
        s.initial_radius = d.initial_radius;
        s.max_recenter = d.max_recenter;
        s
    }

    /// Regime warnings for the configured geometry.
    pub fn warnings(&self) -> Vec<String> {
        self.solver_params(self.beta()).regime_warnings(self.domain.kind, self.domain.d)
    }
}
