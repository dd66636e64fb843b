//! Experiment files: a TOML description of a map, a model, a scheme, initial
//! data and the parameters of the analysis pipelines.
//!
//! Unknown keys are rejected. Every error names the line it refers to.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::coordmap::{BoostKind, BoostSpec, CompressKind, CompressSpec, CoordinateMap};
use crate::diagnostics::Family;
use crate::error::{Error, Result};
use crate::evolve::{
    validate_scheme, Discretization, EvolutionConfig, SchemeConfig, Semidiscrete, DEFAULT_CFL,
};
use crate::fd1d::Order;
use crate::models::{InitialData, Medium, ModelFamily, ModelSpec, Profile, RadialParams};

/// The coordinate map of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MapConfig {
    /// Standard hyperboloids on `[-S, S]`.
    GlobalHyperboloid { s: f64 },
    /// Flat interior `|ρ| < R`, layer with unit outgoing speed out to S.
    UnitOutgoingLayer {
        compress: CompressKind,
        r: f64,
        s: f64,
        rho_min: f64,
    },
    /// `ρ = x/(1 + x)` with the advection time shift.
    AdvectionRational { c: f64 },
    Identity { domain: [f64; 2] },
    /// Any compress/boost combination.
    Custom {
        compress: CompressKind,
        #[serde(default)]
        r: f64,
        s: f64,
        boost: BoostKind,
        #[serde(default = "one")]
        c: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        anchor: Option<f64>,
        domain: [f64; 2],
    },
}

fn one() -> f64 {
    1.0
}

impl MapConfig {
    pub fn build(&self) -> Result<CoordinateMap> {
        match *self {
            MapConfig::GlobalHyperboloid { s } => CoordinateMap::global_hyperboloid(s),
            MapConfig::UnitOutgoingLayer {
                compress,
                r,
                s,
                rho_min,
            } => CoordinateMap::unit_outgoing_layer(compress, r, s, rho_min),
            MapConfig::AdvectionRational { c } => CoordinateMap::advection_rational(c),
            MapConfig::Identity { domain } => CoordinateMap::identity((domain[0], domain[1])),
            MapConfig::Custom {
                compress,
                r,
                s,
                boost,
                c,
                anchor,
                domain,
            } => {
                let cs = CompressSpec { kind: compress, r, s };
                let bs = BoostSpec { kind: boost, c };
                let d = (domain[0], domain[1]);
                match anchor {
                    Some(a) => CoordinateMap::with_anchor(cs, bs, a, d),
                    None => CoordinateMap::new(cs, bs, d),
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub family: ModelFamily,
    #[serde(default)]
    pub medium: Medium,
    #[serde(default)]
    pub radial: RadialParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Fd,
    Spectral,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeFile {
    pub method: Method,
    /// Finite-difference order, one of 4, 6, 8.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<u32>,
    /// Number of finite-difference cells.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cells: Option<usize>,
    /// Kreiss-Oliger dissipation strength.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dissipation: Option<f64>,
    /// Spectral subdomain boundaries.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundaries: Option<Vec<f64>>,
    /// Chebyshev intervals per subdomain.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    pub tau_final: f64,
    pub snapshot_interval: f64,
    #[serde(default)]
    pub observers: Vec<f64>,
}

fn default_cfl() -> f64 {
    DEFAULT_CFL
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialFile {
    /// Radial model only: Π = -Φ, a purely outgoing pulse.
    #[serde(default)]
    pub outgoing: bool,
    #[serde(default)]
    pub fields: BTreeMap<String, Profile>,
}

/// How the time step follows the grid in a convergence study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeStepRule {
    /// `Δτ = λ·Δρ/max|c|` at every level.
    Cfl,
    /// `Δτ ∝ Δρ^(order/4)`, so the fourth-order time error shrinks like the
    /// spatial error.
    #[default]
    OrderMatched,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergeConfig {
    /// Finite-difference cell counts, coarse to fine.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cells: Vec<usize>,
    /// Finite-difference orders to test.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub orders: Vec<u32>,
    /// Spectral resolutions per subdomain.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub n_values: Vec<usize>,
    /// Field whose differences are measured (defaults to the first field).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    /// Averaging window `[τ₀, τ₁]` for the convergence factor.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<[f64; 2]>,
    #[serde(default)]
    pub time_step: TimeStepRule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CharacteristicsConfig {
    pub seeds: Vec<f64>,
    pub tau_end: f64,
    #[serde(default = "default_dtau")]
    pub dtau: f64,
    #[serde(default = "both_families")]
    pub families: Vec<Family>,
}

fn default_dtau() -> f64 {
    0.01
}

fn both_families() -> Vec<Family> {
    vec![Family::Outgoing, Family::Incoming]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecayTarget {
    pub rho: f64,
    pub exponent: f64,
}

/// Assertions checked by `verify`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectations {
    /// Allowed distance of the averaged convergence factor from the order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_tolerance: Option<f64>,
    /// Allowed relative deviation of an error ratio from `2^order`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratio_tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub decay: Vec<DecayTarget>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decay_window: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decay_tolerance: Option<f64>,
    /// Minimum reduction of the constraint norm per resolution step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraint_reduction: Option<f64>,
}

/// A complete experiment file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub map: MapConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<SchemeFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub converge: Option<ConvergeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub characteristics: Option<CharacteristicsConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect: Option<Expectations>,
}

/// Reads and validates an experiment file.
pub fn parse_config(path: &Path) -> Result<ExperimentFile> {
    let src = std::fs::read_to_string(path)?;
    parse_str(&src, &path.display().to_string())
}

/// Parses and validates experiment text; `origin` names it in errors.
pub fn parse_str(src: &str, origin: &str) -> Result<ExperimentFile> {
    let file: ExperimentFile = toml::from_str(src).map_err(|e| {
        let line = e
            .span()
            .map(|s| line_of_offset(src, s.start))
            .unwrap_or(1);
        Error::Parse {
            path: origin.to_string(),
            line,
            message: e.message().to_string(),
        }
    })?;
    let locate = Locator { src, origin };
    file.validate(&locate)?;
    Ok(file)
}

impl ExperimentFile {
    /// Serializes back to the file format.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("experiment files always serialize")
    }

    pub fn coordinate_map(&self) -> Result<CoordinateMap> {
        self.map.build()
    }

    /// Scheme fields that are fixed by the file, with the discretization
    /// taken from the `[scheme]` table.
    pub fn evolution_config(&self) -> Result<EvolutionConfig> {
        let model = self
            .model
            .as_ref()
            .ok_or_else(|| Error::Config(format!("experiment '{}' has no [model] table", self.name)))?;
        let scheme = self
            .scheme
            .as_ref()
            .ok_or_else(|| Error::Config(format!("experiment '{}' has no [scheme] table", self.name)))?;
        let discretization = match scheme.method {
            Method::Fd => Discretization::Fd {
                order: Order::try_from(scheme.order.unwrap_or(0)).map_err(Error::Config)?,
                n_cells: scheme.cells.unwrap_or(0),
                dissipation: scheme.dissipation.unwrap_or(0.0),
            },
            Method::Spectral => Discretization::Spectral {
                boundaries: scheme.boundaries.clone().unwrap_or_default(),
                n: scheme.n.unwrap_or(0),
            },
        };
        let initial = self.initial.clone().unwrap_or_default();
        Ok(EvolutionConfig {
            model: ModelSpec {
                family: model.family,
                map: self.map.build()?,
                medium: model.medium,
                radial: model.radial,
            },
            scheme: SchemeConfig {
                discretization,
                cfl: scheme.cfl,
                dt: scheme.dt,
                tau_final: scheme.tau_final,
                snapshot_interval: scheme.snapshot_interval,
                observers: scheme.observers.clone(),
            },
            initial: InitialData {
                fields: initial.fields,
                outgoing: initial.outgoing,
            },
        })
    }

    fn validate(&self, at: &Locator) -> Result<()> {
        let map = self.map.build().map_err(|e| at.err(&["map"], e.to_string()))?;
        if let Some(scheme) = &self.scheme {
            validate_scheme_file(scheme, at)?;
            for &rho in &scheme.observers {
                if !map.contains(rho) {
                    return Err(at.err(
                        &["scheme", "observers"],
                        format!("observer ρ = {rho} lies outside the domain {:?}", map.domain),
                    ));
                }
            }
        }
        if let Some(conv) = &self.converge {
            validate_converge(conv, at)?;
        }
        if let Some(ch) = &self.characteristics {
            if !(ch.dtau > 0.0) || !(ch.tau_end > 0.0) {
                return Err(at.err(&["characteristics"], "tau_end and dtau must be positive"));
            }
            for &s in &ch.seeds {
                if !map.contains(s) {
                    return Err(at.err(
                        &["characteristics", "seeds"],
                        format!("seed ρ = {s} lies outside the domain {:?}", map.domain),
                    ));
                }
            }
        }
        if self.model.is_some() != self.scheme.is_some() {
            return Err(at.err(
                &[if self.model.is_some() { "model" } else { "scheme" }],
                "[model] and [scheme] must be given together",
            ));
        }
        if self.model.is_some() {
            let cfg = self.evolution_config().map_err(|e| at.err(&["scheme"], e.to_string()))?;
            validate_scheme(&cfg.scheme).map_err(|e| at.err(&["scheme"], e.to_string()))?;
            let sys = Semidiscrete::new(
                cfg.model.clone(),
                &cfg.scheme.discretization,
                &cfg.initial,
            )
            .map_err(|e| at.err(&["model"], e.to_string()))?;
            cfg.initial
                .evaluate(&sys.model)
                .map_err(|e| at.err(&["initial"], e.to_string()))?;
        }
        Ok(())
    }
}

fn validate_scheme_file(s: &SchemeFile, at: &Locator) -> Result<()> {
    let key = |k: &str| ["scheme".to_string(), k.to_string()];
    let err = |k: &str, msg: String| {
        let p = key(k);
        at.err(&[p[0].as_str(), p[1].as_str()], msg)
    };
    if let Some(o) = s.order {
        Order::try_from(o).map_err(|m| err("order", m))?;
    }
    if !(s.cfl > 0.0 && s.cfl <= 1.0) {
        return Err(err("cfl", format!("cfl must lie in (0, 1], got {}", s.cfl)));
    }
    if let Some(dt) = s.dt {
        if !(dt > 0.0) {
            return Err(err("dt", format!("dt must be positive, got {dt}")));
        }
    }
    if !(s.tau_final > 0.0 && s.tau_final.is_finite()) {
        return Err(err("tau_final", format!("tau_final must be positive, got {}", s.tau_final)));
    }
    if !(s.snapshot_interval > 0.0) {
        return Err(err(
            "snapshot_interval",
            format!("snapshot_interval must be positive, got {}", s.snapshot_interval),
        ));
    }
    match s.method {
        Method::Fd => {
            for k in ["boundaries", "n"] {
                if at.find(&["scheme", k]).is_some() {
                    return Err(err(k, format!("`{k}` only applies to method = \"spectral\"")));
                }
            }
            if s.order.is_none() {
                return Err(err("method", "method = \"fd\" needs `order`".into()));
            }
            if s.cells.is_none() {
                return Err(err("method", "method = \"fd\" needs `cells`".into()));
            }
            if let Some(d) = s.dissipation {
                if !(d >= 0.0) {
                    return Err(err("dissipation", format!("dissipation must be >= 0, got {d}")));
                }
            }
        }
        Method::Spectral => {
            for k in ["order", "cells", "dissipation"] {
                if at.find(&["scheme", k]).is_some() {
                    return Err(err(k, format!("`{k}` only applies to method = \"fd\"")));
                }
            }
            if s.boundaries.is_none() {
                return Err(err("method", "method = \"spectral\" needs `boundaries`".into()));
            }
            if s.n.is_none() {
                return Err(err("method", "method = \"spectral\" needs `n`".into()));
            }
        }
    }
    Ok(())
}

fn validate_converge(c: &ConvergeConfig, at: &Locator) -> Result<()> {
    for &o in &c.orders {
        Order::try_from(o).map_err(|m| at.err(&["converge", "orders"], m))?;
    }
    if !c.cells.is_empty()
        && (c.cells.len() < 2 || c.cells.windows(2).any(|w| w[1] != 2 * w[0])) {
            return Err(at.err(
                &["converge", "cells"],
                format!("cells must double from level to level, got {:?}", c.cells),
            ));
        }
    if c.n_values.len() == 1 {
        return Err(at.err(&["converge", "n_values"], "need at least two resolutions"));
    }
    if let Some([a, b]) = c.window {
        if !(a < b) {
            return Err(at.err(&["converge", "window"], format!("empty window [{a}, {b}]")));
        }
    }
    Ok(())
}

fn line_of_offset(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].matches('\n').count() + 1
}

/// Finds the lines of tables and keys in the source text.
struct Locator<'a> {
    src: &'a str,
    origin: &'a str,
}

impl Locator<'_> {
    /// Line of `key` in table `path[..n-1]`, or of the table header itself
    /// for a one-element path.
    fn find(&self, path: &[&str]) -> Option<usize> {
        let (table, key) = match path.len() {
            0 => return None,
            1 => (path[0].to_string(), None),
            n => (path[..n - 1].join("."), Some(path[n - 1])),
        };
        let mut current = String::new();
        for (i, raw) in self.src.lines().enumerate() {
            let line = raw.trim();
            if line.starts_with('[') {
                let name = line.trim_matches(|c| c == '[' || c == ']').trim();
                current = name.to_string();
                if key.is_none() && (current == table || current.starts_with(&format!("{table}."))) {
                    return Some(i + 1);
                }
                continue;
            }
            if let Some(k) = key {
                if current == table {
                    if let Some((lhs, _)) = line.split_once('=') {
                        if lhs.trim() == k {
                            return Some(i + 1);
                        }
                    }
                }
            }
        }
        None
    }

    fn err(&self, path: &[&str], message: impl Into<String>) -> Error {
        let line = self
            .find(path)
            .or_else(|| self.find(&path[..1]))
            .unwrap_or(1);
        Error::Parse {
            path: self.origin.to_string(),
            line,
            message: message.into(),
        }
    }
}
