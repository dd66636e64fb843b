//! Method-of-lines time integration with classical RK4.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::chebspec::{patch_interfaces, MultiDomainLayout};
use crate::diagnostics::{l2_norm, layout_weights, uniform_weights, ObserverSeries};
use crate::error::{config_err, Error, Result};
use crate::fd1d::{Dissipation, Order, StencilSet, UniformGrid};
use crate::models::{InitialData, InnerBoundary, Model, ModelFamily, ModelSpec, Profile};

pub const DEFAULT_CFL: f64 = 0.5;
pub const DEFAULT_DISSIPATION: f64 = 0.02;

/// Growth of the total L2 norm beyond this factor flags the run unstable.
pub const INSTABILITY_GROWTH: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Discretization {
    Fd {
        order: Order,
        n_cells: usize,
        #[serde(default)]
        dissipation: f64,
    },
    Spectral {
        /// Subdomain boundaries, first and last equal to the domain ends.
        boundaries: Vec<f64>,
        /// Chebyshev intervals per subdomain.
        n: usize,
    },
}

fn default_cfl() -> f64 {
    DEFAULT_CFL
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeConfig {
    pub discretization: Discretization,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    /// Fixed step overriding the CFL choice (still rounded to fit the
    /// snapshot interval).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    pub tau_final: f64,
    pub snapshot_interval: f64,
    #[serde(default)]
    pub observers: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolutionConfig {
    pub model: ModelSpec,
    pub scheme: SchemeConfig,
    #[serde(default)]
    pub initial: InitialData,
}

/// Named fields at one time level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemState {
    pub tau: f64,
    pub fields: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    /// L2 norm grew beyond the instability threshold.
    Unstable { tau: f64, growth: f64 },
    /// A stage produced NaN or infinity.
    NonFinite { tau: f64, message: String },
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub config: EvolutionConfig,
    pub field_names: Vec<String>,
    pub nodes: Vec<f64>,
    pub dt: f64,
    pub steps: usize,
    pub wall_time: f64,
    pub status: RunStatus,
    /// τ strictly increasing; the last entry is the last good state.
    pub snapshots: Vec<SystemState>,
    pub observers: Vec<ObserverSeries>,
    /// `(τ, L2 per field)` at every snapshot time.
    pub norms: Vec<(f64, Vec<f64>)>,
}

impl RunReport {
    pub fn is_ok(&self) -> bool {
        self.status == RunStatus::Completed
    }

    pub fn field_index(&self, name: &str) -> Result<usize> {
        self.field_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Config(format!("no field '{name}' in {:?}", self.field_names)))
    }

    /// `(τ, field)` at every snapshot.
    pub fn field_snapshots(&self, name: &str) -> Result<Vec<(f64, Vec<f64>)>> {
        let k = self.field_index(name)?;
        Ok(self
            .snapshots
            .iter()
            .map(|s| (s.tau, s.fields[k].clone()))
            .collect())
    }

    pub fn norm_series(&self, name: &str) -> Result<Vec<(f64, f64)>> {
        let k = self.field_index(name)?;
        Ok(self.norms.iter().map(|(t, n)| (*t, n[k])).collect())
    }

    pub fn observer(&self, rho: f64, field: &str) -> Option<&ObserverSeries> {
        self.observers
            .iter()
            .find(|o| o.rho == rho && o.field == field)
    }

    pub fn final_norm(&self, name: &str) -> Result<f64> {
        let k = self.field_index(name)?;
        Ok(self.norms.last().map(|n| n.1[k]).unwrap_or(f64::NAN))
    }
}

/// Spatial operator of a semidiscretization.
#[derive(Debug, Clone)]
pub enum Operator {
    Fd {
        stencil: StencilSet,
        dissipation: Option<Dissipation>,
    },
    Spectral(MultiDomainLayout),
}

impl Operator {
    pub fn build(disc: &Discretization, domain: (f64, f64), layer_interface: Option<f64>) -> Result<Self> {
        match disc {
            Discretization::Fd {
                order,
                n_cells,
                dissipation,
            } => {
                let grid = UniformGrid::new(domain.0, domain.1, *n_cells)?;
                let stencil = StencilSet::new(grid, *order)?;
                let dissipation = if *dissipation > 0.0 {
                    Some(Dissipation::for_order(grid, *order, *dissipation)?)
                } else if *dissipation < 0.0 {
                    return config_err(format!(
                        "dissipation must be non-negative, got {dissipation}"
                    ));
                } else {
                    None
                };
                Ok(Operator::Fd {
                    stencil,
                    dissipation,
                })
            }
            Discretization::Spectral { boundaries, n } => {
                if boundaries.first() != Some(&domain.0) || boundaries.last() != Some(&domain.1) {
                    return Err(Error::Layout(format!(
                        "subdomain boundaries {boundaries:?} must span the domain [{}, {}]",
                        domain.0, domain.1
                    )));
                }
                let iface = layer_interface
                    .filter(|r| boundaries[1..boundaries.len() - 1].contains(r));
                Ok(Operator::Spectral(MultiDomainLayout::new(boundaries, *n, iface)?))
            }
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        match self {
            Operator::Fd { stencil, .. } => stencil.grid().nodes(),
            Operator::Spectral(l) => l.nodes(),
        }
    }

    pub fn min_spacing(&self) -> f64 {
        match self {
            Operator::Fd { stencil, .. } => stencil.grid().spacing(),
            Operator::Spectral(l) => l.min_spacing(),
        }
    }

    pub fn weights(&self) -> Vec<f64> {
        match self {
            Operator::Fd { stencil, .. } => uniform_weights(stencil.grid()),
            Operator::Spectral(l) => layout_weights(l),
        }
    }
}

/// `Δτ = λ·Δρ_min / max|c|`.
pub fn cfl_dt(model: &Model, min_spacing: f64, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return config_err(format!("CFL factor must lie in (0, 1], got {lambda}"));
    }
    let c = model.max_speed();
    if !(c > 0.0) {
        return config_err("maximum characteristic speed is zero: no CFL time step");
    }
    Ok(lambda * min_spacing / c)
}

/// A system of ODEs `du/dτ = f(τ, u)` with optional boundary data.
pub trait OdeSystem {
    fn rhs(&mut self, tau: f64, u: &[Vec<f64>], out: &mut [Vec<f64>]) -> Result<()>;

    /// Called before stage `stage` (0..4) of the step from `tau0` by `dt`
    /// with that stage's state.
    fn begin_stage(&mut self, _tau0: f64, _dt: f64, _stage: usize, _u: &mut [Vec<f64>]) {}

    /// Imposes boundary data on a completed step.
    fn project(&self, _tau: f64, _u: &mut [Vec<f64>]) {}
}

/// Stage buffers for [`rk4_step`].
#[derive(Debug, Clone)]
pub struct Rk4Workspace {
    k: [Vec<Vec<f64>>; 4],
    stage: Vec<Vec<f64>>,
}

impl Rk4Workspace {
    pub fn new(shape: &[Vec<f64>]) -> Self {
        let z: Vec<Vec<f64>> = shape.iter().map(|f| vec![0.0; f.len()]).collect();
        Self {
            k: [z.clone(), z.clone(), z.clone(), z.clone()],
            stage: z,
        }
    }
}

/// One classical RK4 step, in place.
pub fn rk4_step<S: OdeSystem + ?Sized>(
    sys: &mut S,
    tau: f64,
    u: &mut [Vec<f64>],
    dt: f64,
    ws: &mut Rk4Workspace,
) -> Result<()> {
    let Rk4Workspace { k, stage } = ws;
    let [k1, k2, k3, k4] = k;
    sys.begin_stage(tau, dt, 0, u);
    sys.rhs(tau, u, k1)?;
    axpy(stage, u, 0.5 * dt, k1);
    sys.begin_stage(tau, dt, 1, stage);
    sys.rhs(tau + 0.5 * dt, stage, k2)?;
    axpy(stage, u, 0.5 * dt, k2);
    sys.begin_stage(tau, dt, 2, stage);
    sys.rhs(tau + 0.5 * dt, stage, k3)?;
    axpy(stage, u, dt, k3);
    sys.begin_stage(tau, dt, 3, stage);
    sys.rhs(tau + dt, stage, k4)?;
    for f in 0..u.len() {
        for i in 0..u[f].len() {
            u[f][i] += dt / 6.0 * (k1[f][i] + 2.0 * k2[f][i] + 2.0 * k3[f][i] + k4[f][i]);
        }
    }
    sys.project(tau + dt, u);
    Ok(())
}

fn axpy(out: &mut [Vec<f64>], u: &[Vec<f64>], a: f64, k: &[Vec<f64>]) {
    for ((o, u), k) in out.iter_mut().zip(u).zip(k) {
        for ((o, u), k) in o.iter_mut().zip(u).zip(k) {
            *o = u + a * k;
        }
    }
}

/// A model together with its spatial operator.
#[derive(Debug, Clone)]
pub struct Semidiscrete {
    pub model: Model,
    pub op: Operator,
    deriv: Vec<Vec<f64>>,
    stage: Option<(f64, f64, usize)>,
}

impl Semidiscrete {
    pub fn new(spec: ModelSpec, disc: &Discretization, initial: &InitialData) -> Result<Self> {
        let map = &spec.map;
        let layer = map.compress.kind.is_layer().then(|| map.r());
        let op = Operator::build(disc, map.domain, layer)?;
        let inner = inner_boundary(&spec, initial);
        let model = Model::new(spec, op.nodes(), inner)?;
        let deriv = vec![vec![0.0; model.nodes.len()]; model.n_fields()];
        Ok(Self {
            model,
            op,
            deriv,
            stage: None,
        })
    }

    /// Inflow data at distance `depth` outside the boundary for the current
    /// stage. Stage values are the truncated Taylor combinations that keep
    /// classical RK4 fourth-order accurate with time-dependent boundary data.
    fn inflow_value(&self, tau: f64, depth: f64) -> Option<f64> {
        let g = |m: u32, t: f64| self.model.inflow_data(t, depth, m);
        let Some((t0, dt, s)) = self.stage else {
            return g(0, tau);
        };
        let d = [g(0, t0)?, g(1, t0)?, g(2, t0)?, g(3, t0)?];
        Some(match s {
            0 => d[0],
            1 => d[0] + 0.5 * dt * d[1],
            2 => d[0] + 0.5 * dt * d[1] + 0.25 * dt * dt * d[2],
            _ => d[0] + dt * d[1] + 0.5 * dt * dt * d[2] + 0.25 * dt.powi(3) * d[3],
        })
    }
}

fn inner_boundary(spec: &ModelSpec, initial: &InitialData) -> InnerBoundary {
    match spec.family {
        ModelFamily::Advection => match initial.fields.get("u") {
            Some(Profile::AdvectionExact) => InnerBoundary::ExactInflow { c: spec.map.boost.c },
            _ => InnerBoundary::ZeroInflow,
        },
        ModelFamily::RadialConformalWave => InnerBoundary::Reflecting,
        ModelFamily::Wave1d | ModelFamily::Maxwell1d => InnerBoundary::Outflow,
    }
}

impl OdeSystem for Semidiscrete {
    fn rhs(&mut self, tau: f64, u: &[Vec<f64>], out: &mut [Vec<f64>]) -> Result<()> {
        match &self.op {
            Operator::Fd {
                stencil,
                dissipation,
            } => {
                self.model.rhs(stencil, tau, u, &mut self.deriv, out)?;
                if self.model.inflow_data(tau, 0.0, 0).is_some() {
                    inflow_rows(self, stencil, tau, u, out);
                }
                if let Some(d) = dissipation {
                    for (f, o) in u.iter().zip(out.iter_mut()) {
                        d.add_into(f, o)?;
                    }
                }
            }
            Operator::Spectral(layout) => {
                self.model.rhs(layout, tau, u, &mut self.deriv, out)?;
                patch_interfaces(layout, &self.model, out)?;
            }
        }
        Ok(())
    }

    fn begin_stage(&mut self, tau0: f64, dt: f64, stage: usize, u: &mut [Vec<f64>]) {
        self.stage = Some((tau0, dt, stage));
        if let Some(b) = self.inflow_value(tau0, 0.0) {
            u[0][0] = b;
        } else {
            self.model.impose_state(tau0, u);
        }
    }

    fn project(&self, tau: f64, u: &mut [Vec<f64>]) {
        self.model.impose_state(tau, u);
    }
}

/// Replaces the one-sided rows next to an advection inflow boundary by the
/// centered stencil, reading ghost values from the inflow data. One-sided
/// closures of order six and eight are unstable at inflow.
#[allow(clippy::needless_range_loop)]
fn inflow_rows(sys: &Semidiscrete, stencil: &StencilSet, tau: f64, u: &[Vec<f64>], out: &mut [Vec<f64>]) {
    let w = stencil.interior_weights();
    let k = w.len() / 2;
    let h = stencil.grid().spacing();
    for i in 1..k {
        let mut d = 0.0;
        for (j, wj) in w.iter().enumerate() {
            let m = i as isize + j as isize - k as isize;
            let v = if m >= 0 {
                u[0][m as usize]
            } else {
                sys.inflow_value(tau, -m as f64 * h).unwrap_or(0.0)
            };
            d += wj * v;
        }
        out[0][i] = sys.model.principal_matrix(i)[0][0] * d;
    }
}

struct Probe {
    left: usize,
    right: usize,
    frac: f64,
}

fn probe(nodes: &[f64], rho: f64) -> Option<Probe> {
    if let Some(i) = nodes.iter().position(|x| *x == rho) {
        return Some(Probe {
            left: i,
            right: i,
            frac: 0.0,
        });
    }
    nodes.windows(2).position(|w| w[0] < rho && rho < w[1]).map(|i| Probe {
        left: i,
        right: i + 1,
        frac: (rho - nodes[i]) / (nodes[i + 1] - nodes[i]),
    })
}

impl Probe {
    fn sample(&self, f: &[f64]) -> f64 {
        if self.left == self.right {
            f[self.left]
        } else {
            (1.0 - self.frac) * f[self.left] + self.frac * f[self.right]
        }
    }
}

pub fn validate_scheme(s: &SchemeConfig) -> Result<()> {
    if !(s.cfl > 0.0 && s.cfl <= 1.0) {
        return config_err(format!("cfl must lie in (0, 1], got {}", s.cfl));
    }
    if !(s.tau_final >= 0.0) {
        return config_err(format!("tau_final must be non-negative, got {}", s.tau_final));
    }
    if !(s.snapshot_interval > 0.0) {
        return config_err(format!(
            "snapshot_interval must be positive, got {}",
            s.snapshot_interval
        ));
    }
    if let Some(dt) = s.dt {
        if !(dt > 0.0) {
            return config_err(format!("dt must be positive, got {dt}"));
        }
    }
    Ok(())
}

/// Integrates a configuration to `τ_final`.
///
/// The step is the CFL step (or the configured `dt`) reduced so that the
/// snapshot interval is a whole number of steps. Observers are sampled after
/// every step by linear interpolation; norms and snapshots at every snapshot
/// time and at `τ_final`.
pub fn run(config: &EvolutionConfig) -> Result<RunReport> {
    let start = Instant::now();
    let scheme = &config.scheme;
    validate_scheme(scheme)?;
    let mut sys = Semidiscrete::new(config.model.clone(), &scheme.discretization, &config.initial)?;
    let names: Vec<String> = sys.model.field_names().iter().map(|s| s.to_string()).collect();
    let nodes = sys.model.nodes.clone();
    let weights = sys.op.weights();

    let cfl = cfl_dt(&sys.model, sys.op.min_spacing(), scheme.cfl)?;
    let dt0 = match scheme.dt {
        Some(dt) => {
            if dt > cfl / scheme.cfl {
                return config_err(format!(
                    "dt = {dt} exceeds the CFL limit {} (λ = 1)",
                    cfl / scheme.cfl
                ));
            }
            dt
        }
        None => cfl,
    };
    let per_snap = (scheme.snapshot_interval / dt0 - 1e-9).ceil().max(1.0) as usize;
    let dt = scheme.snapshot_interval / per_snap as f64;
    let total_steps = (scheme.tau_final / dt - 1e-9).ceil().max(0.0) as usize;

    let map = &sys.model.spec.map;
    let mut probes = Vec::new();
    let mut observers = Vec::new();
    for &rho in &scheme.observers {
        let p = probe(&nodes, rho).ok_or_else(|| {
            Error::Config(format!(
                "observer at ρ = {rho} lies outside the grid [{}, {}]",
                nodes[0],
                nodes[nodes.len() - 1]
            ))
        })?;
        for name in &names {
            observers.push(ObserverSeries::new(map, rho, name.clone())?);
        }
        probes.push(p);
    }

    let mut u = config.initial.evaluate(&sys.model)?;
    sys.project(0.0, &mut u);
    let norms_of = |u: &[Vec<f64>]| -> Result<Vec<f64>> {
        u.iter().map(|f| l2_norm(&weights, f)).collect()
    };
    let total = |n: &[f64]| n.iter().map(|x| x * x).sum::<f64>().sqrt();

    let observe = |observers: &mut Vec<ObserverSeries>, tau: f64, u: &[Vec<f64>]| {
        let nf = u.len();
        for (j, p) in probes.iter().enumerate() {
            for (f, field) in u.iter().enumerate() {
                observers[j * nf + f].push(tau, p.sample(field));
            }
        }
    };

    let n0 = norms_of(&u)?;
    let initial_total = total(&n0);
    let mut norms = vec![(0.0, n0)];
    let mut snapshots = vec![SystemState {
        tau: 0.0,
        fields: u.clone(),
    }];
    observe(&mut observers, 0.0, &u);

    let mut ws = Rk4Workspace::new(&u);
    let mut status = RunStatus::Completed;
    let mut steps = 0;
    let mut last_good = u.clone();
    for step in 0..total_steps {
        let tau = step as f64 * dt;
        let h = dt.min(scheme.tau_final - tau);
        let next_tau = if step + 1 == total_steps {
            scheme.tau_final
        } else {
            (step + 1) as f64 * dt
        };
        last_good.clone_from(&u);
        if let Err(e) = rk4_step(&mut sys, tau, &mut u, h, &mut ws) {
            status = RunStatus::NonFinite {
                tau,
                message: e.to_string(),
            };
            u.clone_from(&last_good);
            break;
        }
        if u.iter().flatten().any(|x| !x.is_finite()) {
            status = RunStatus::NonFinite {
                tau: next_tau,
                message: "state is not finite".into(),
            };
            u.clone_from(&last_good);
            break;
        }
        steps += 1;
        observe(&mut observers, next_tau, &u);
        let n = norms_of(&u)?;
        let growth = total(&n) / initial_total;
        let at_snapshot = (step + 1) % per_snap == 0 || step + 1 == total_steps;
        if initial_total > 0.0 && growth > INSTABILITY_GROWTH {
            status = RunStatus::Unstable {
                tau: next_tau,
                growth,
            };
            norms.push((next_tau, n));
            snapshots.push(SystemState {
                tau: next_tau,
                fields: u.clone(),
            });
            break;
        }
        if at_snapshot {
            norms.push((next_tau, n));
            snapshots.push(SystemState {
                tau: next_tau,
                fields: u.clone(),
            });
        }
    }
    if !matches!(status, RunStatus::Completed | RunStatus::Unstable { .. }) {
        let tau = steps as f64 * dt;
        if snapshots.last().map(|s| s.tau) != Some(tau) {
            norms.push((tau, norms_of(&u)?));
            snapshots.push(SystemState { tau, fields: u });
        }
    }

    Ok(RunReport {
        config: config.clone(),
        field_names: names,
        nodes,
        dt,
        steps,
        wall_time: start.elapsed().as_secs_f64(),
        status,
        snapshots,
        observers,
        norms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coordmap::{CompressKind, CoordinateMap};
    use crate::models::{advection_exact, Medium, RadialParams};
    use approx::assert_abs_diff_eq;
    use std::collections::BTreeMap;

    struct Decay;

    impl OdeSystem for Decay {
        fn rhs(&mut self, _: f64, u: &[Vec<f64>], out: &mut [Vec<f64>]) -> Result<()> {
            out[0][0] = -u[0][0];
            Ok(())
        }
    }

    struct Still;

    impl OdeSystem for Still {
        fn rhs(&mut self, _: f64, _: &[Vec<f64>], out: &mut [Vec<f64>]) -> Result<()> {
            for f in out.iter_mut() {
                f.iter_mut().for_each(|x| *x = 0.0);
            }
            Ok(())
        }
    }

    #[test]
    fn rk4_one_step_of_decay() {
        let mut u = vec![vec![1.0]];
        let mut ws = Rk4Workspace::new(&u);
        rk4_step(&mut Decay, 0.0, &mut u, 0.1, &mut ws).unwrap();
        let h: f64 = 0.1;
        let poly = 1.0 - h + h * h / 2.0 - h.powi(3) / 6.0 + h.powi(4) / 24.0;
        assert_abs_diff_eq!(u[0][0], poly, epsilon = 1e-15);
        assert_abs_diff_eq!(u[0][0], 0.9048375, epsilon = 1e-7);
    }

    #[test]
    fn rk4_zero_rhs_is_identity() {
        let mut u = vec![vec![1.0, -2.0, 3.5], vec![0.25]];
        let copy = u.clone();
        let mut ws = Rk4Workspace::new(&u);
        rk4_step(&mut Still, 0.0, &mut u, 0.3, &mut ws).unwrap();
        assert_eq!(u, copy);
    }

    fn spec(family: ModelFamily, map: CoordinateMap) -> ModelSpec {
        ModelSpec {
            family,
            map,
            medium: Medium::default(),
            radial: RadialParams::default(),
        }
    }

    fn fd(order: Order, n_cells: usize) -> Discretization {
        Discretization::Fd {
            order,
            n_cells,
            dissipation: 0.0,
        }
    }

    #[test]
    fn cfl_examples() {
        let hyp = Semidiscrete::new(
            spec(ModelFamily::Maxwell1d, CoordinateMap::global_hyperboloid(10.0).unwrap()),
            &fd(Order::Four, 100),
            &InitialData::default(),
        )
        .unwrap();
        assert_abs_diff_eq!(cfl_dt(&hyp.model, 0.2, 0.5).unwrap(), 0.05, epsilon = 1e-15);
        assert_abs_diff_eq!(cfl_dt(&hyp.model, 0.2, 1.0).unwrap(), 0.1, epsilon = 1e-15);
        let layer = Semidiscrete::new(
            spec(
                ModelFamily::Maxwell1d,
                CoordinateMap::unit_outgoing_layer(CompressKind::LayerQuadratic, 5.0, 10.0, -10.0)
                    .unwrap(),
            ),
            &fd(Order::Four, 100),
            &InitialData::default(),
        )
        .unwrap();
        assert_abs_diff_eq!(cfl_dt(&layer.model, 0.2, 0.5).unwrap(), 0.1, epsilon = 1e-15);
        assert!(cfl_dt(&layer.model, 0.2, 1.5).is_err());
    }

    fn advection_config(order: Order, n: usize, tau_final: f64, dt: Option<f64>) -> EvolutionConfig {
        let mut fields = BTreeMap::new();
        fields.insert("u".to_string(), Profile::AdvectionExact);
        EvolutionConfig {
            model: spec(ModelFamily::Advection, CoordinateMap::advection_rational(1.0).unwrap()),
            scheme: SchemeConfig {
                discretization: fd(order, n),
                cfl: 0.5,
                dt,
                tau_final,
                snapshot_interval: tau_final.max(0.1),
                observers: vec![0.5, 1.0],
            },
            initial: InitialData {
                fields,
                outgoing: false,
            },
        }
    }

    fn advection_error(r: &RunReport) -> f64 {
        let last = r.snapshots.last().unwrap();
        r.nodes
            .iter()
            .zip(&last.fields[0])
            .map(|(rho, u)| (u - advection_exact(1.0, 1.0 - rho, last.tau)).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn zero_final_time_gives_initial_snapshot() {
        let r = run(&advection_config(Order::Four, 20, 0.0, None)).unwrap();
        assert!(r.is_ok());
        assert_eq!(r.snapshots.len(), 1);
        assert_eq!(r.steps, 0);
    }

    #[test]
    fn advection_converges_at_fourth_order() {
        let e1 = advection_error(&run(&advection_config(Order::Four, 40, 1.0, None)).unwrap());
        let e2 = advection_error(&run(&advection_config(Order::Four, 80, 1.0, None)).unwrap());
        let ratio = e1 / e2;
        assert!((ratio / 16.0 - 1.0).abs() < 0.3, "{e1} {e2} {ratio}");
    }

    #[test]
    fn rk4_time_error_is_fourth_order() {
        // fine grid, 8th order in space: time error dominates
        let e1 = advection_error(&run(&advection_config(Order::Eight, 100, 1.0, Some(0.005))).unwrap());
        let e2 = advection_error(&run(&advection_config(Order::Eight, 100, 1.0, Some(0.0025))).unwrap());
        assert!((e1 / e2 / 16.0 - 1.0).abs() < 0.2, "{e1} {e2}");
    }

    #[test]
    fn observers_are_sampled_every_step() {
        let r = run(&advection_config(Order::Four, 20, 0.5, None)).unwrap();
        let o = r.observer(1.0, "u").unwrap();
        assert_eq!(o.len(), r.steps + 1);
        assert!(o.x.is_infinite());
        assert!(o.tau.windows(2).all(|w| w[1] > w[0]));
        assert!(o.values.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn runs_are_deterministic() {
        let c = advection_config(Order::Six, 30, 0.7, None);
        let a = run(&c).unwrap();
        let b = run(&c).unwrap();
        assert_eq!(a.snapshots, b.snapshots);
        assert_eq!(a.observers, b.observers);
    }

    #[test]
    fn rejects_bad_schemes() {
        let mut c = advection_config(Order::Four, 20, 1.0, None);
        c.scheme.cfl = 0.0;
        assert!(matches!(run(&c), Err(Error::Config(_))));
        let mut c = advection_config(Order::Four, 20, 1.0, None);
        c.scheme.observers = vec![2.0];
        assert!(matches!(run(&c), Err(Error::Config(_))));
        let mut c = advection_config(Order::Four, 20, 1.0, None);
        c.scheme.dt = Some(1.0);
        assert!(matches!(run(&c), Err(Error::Config(_))));
    }

    #[test]
    fn blowup_is_flagged() {
        // large focusing data blows up in finite time
        let mut fields = BTreeMap::new();
        fields.insert(
            "v".to_string(),
            Profile::RadialGaussian {
                amplitude: 40.0,
                width: 2.0,
            },
        );
        let mut s = spec(
            ModelFamily::RadialConformalWave,
            CoordinateMap::unit_outgoing_layer(CompressKind::LayerQuartic, 10.0, 20.0, 0.0).unwrap(),
        );
        s.radial.nonlinear = true;
        let c = EvolutionConfig {
            model: s,
            scheme: SchemeConfig {
                discretization: fd(Order::Four, 200),
                cfl: 0.5,
                dt: None,
                tau_final: 20.0,
                snapshot_interval: 1.0,
                observers: vec![],
            },
            initial: InitialData {
                fields,
                outgoing: false,
            },
        };
        let r = run(&c).unwrap();
        assert!(!r.is_ok(), "{:?}", r.status);
        assert!(r.snapshots.windows(2).all(|w| w[1].tau > w[0].tau));
        assert!(r.snapshots.iter().flat_map(|s| s.fields.iter().flatten()).all(|x| x.is_finite()));
    }
}
