//! Analysis pipelines built on top of single runs: convergence studies,
//! resolution sweeps, decay rates, constraint norms and characteristic
//! diagrams.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::Serialize;

use crate::config::{ExperimentFile, TimeStepRule};
use crate::diagnostics::{
    convergence_series, l2_norm, local_decay_exponent, mean_over, trace_characteristics,
    Polyline, DECAY_WINDOW,
};
use crate::error::{Error, Result};
use crate::evolve::{cfl_dt, run, Discretization, EvolutionConfig, Operator, RunReport, Semidiscrete};
use crate::fd1d::{Order, UniformGrid};
use crate::models::{advection_exact, ModelFamily, Profile};

/// Applies `f` to every item on up to `jobs` threads, keeping the order.
pub fn parallel_map<T, R, F>(items: &[T], jobs: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let jobs = jobs.clamp(1, items.len().max(1));
    if jobs == 1 {
        return items.iter().map(&f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..jobs {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                *slots[i].lock().expect("result slot") = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().expect("result slot").expect("every item mapped"))
        .collect()
}

/// Default number of worker threads.
pub fn default_jobs() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

/// `config` with a finite-difference discretization of the given order and
/// cell count; the dissipation is kept.
pub fn with_fd(config: &EvolutionConfig, order: Order, n_cells: usize, dissipation: Option<f64>) -> EvolutionConfig {
    let mut c = config.clone();
    let eps = match (&config.scheme.discretization, dissipation) {
        (_, Some(e)) => e,
        (Discretization::Fd { dissipation, .. }, None) => *dissipation,
        _ => 0.0,
    };
    c.scheme.discretization = Discretization::Fd {
        order,
        n_cells,
        dissipation: eps,
    };
    c
}

/// The CFL step of a configuration.
pub fn cfl_step(config: &EvolutionConfig) -> Result<f64> {
    let sys = Semidiscrete::new(
        config.model.clone(),
        &config.scheme.discretization,
        &config.initial,
    )?;
    cfl_dt(&sys.model, sys.op.min_spacing(), config.scheme.cfl)
}

/// Level configurations of a finite-difference convergence study.
/// With [`TimeStepRule::OrderMatched`] the step of level k is the coarse
/// CFL step times `(n₀/n_k)^(order/4)`.
pub fn convergence_levels(
    base: &EvolutionConfig,
    order: Order,
    cells: &[usize],
    rule: TimeStepRule,
) -> Result<Vec<EvolutionConfig>> {
    let coarse = with_fd(base, order, cells[0], None);
    let dt0 = cfl_step(&coarse)?;
    Ok(cells
        .iter()
        .map(|&n| {
            let mut c = with_fd(base, order, n, None);
            c.scheme.dt = match rule {
                TimeStepRule::Cfl => base.scheme.dt,
                TimeStepRule::OrderMatched => {
                    Some(dt0 * (cells[0] as f64 / n as f64).powf(order.value() as f64 / 4.0))
                }
            };
            c
        })
        .collect())
}

fn require_ok(report: &RunReport, what: &str) -> Result<()> {
    if report.is_ok() {
        Ok(())
    } else {
        Err(Error::Unstable(format!("{what}: {:?}", report.status)))
    }
}

/// Three-level self-convergence of one order.
#[derive(Debug, Clone, Serialize)]
pub struct SelfConvergence {
    pub order: u32,
    pub cells: [usize; 3],
    pub dt: [f64; 3],
    pub field: String,
    /// `Q(τ)`; `None` where a difference vanishes.
    pub q: Vec<(f64, Option<f64>)>,
    pub window: [f64; 2],
    pub mean_q: Option<f64>,
}

/// Runs the three coarsest levels of `cells` at one order and returns the
/// convergence factor series of `field`.
pub fn self_convergence(
    base: &EvolutionConfig,
    order: Order,
    cells: &[usize],
    field: &str,
    window: [f64; 2],
    rule: TimeStepRule,
    jobs: usize,
) -> Result<SelfConvergence> {
    if cells.len() < 3 {
        return Err(Error::Config("self-convergence needs three resolutions".into()));
    }
    let levels = convergence_levels(base, order, &cells[..3], rule)?;
    let reports: Vec<Result<RunReport>> = parallel_map(&levels, jobs, run);
    let reports = reports.into_iter().collect::<Result<Vec<_>>>()?;
    for (r, n) in reports.iter().zip(cells) {
        require_ok(r, &format!("order {} with {n} cells", order.value()))?;
    }
    let (lo, hi) = base.model.map.domain;
    let grid = UniformGrid::new(lo, hi, cells[0])?;
    let snaps = reports
        .iter()
        .map(|r| r.field_snapshots(field))
        .collect::<Result<Vec<_>>>()?;
    let q = convergence_series(&grid, &snaps[0], &snaps[1], &snaps[2])?;
    let mean_q = mean_over(&q, window[0], window[1]);
    Ok(SelfConvergence {
        order: order.value(),
        cells: [cells[0], cells[1], cells[2]],
        dt: [reports[0].dt, reports[1].dt, reports[2].dt],
        field: field.to_string(),
        q,
        window,
        mean_q,
    })
}

/// Convergence against a closed-form solution.
#[derive(Debug, Clone, Serialize)]
pub struct ExactConvergence {
    pub order: u32,
    pub cells: Vec<usize>,
    /// Max-norm error at τ_final per level.
    pub errors: Vec<f64>,
    /// `error(n)/error(2n)` for consecutive levels.
    pub ratios: Vec<f64>,
}

/// Whether a configuration has a closed-form solution to compare with.
pub fn has_exact_solution(config: &EvolutionConfig) -> bool {
    config.model.family == ModelFamily::Advection
        && matches!(config.initial.fields.get("u"), Some(Profile::AdvectionExact))
}

/// Max-norm error of the final snapshot against the closed-form advection
/// solution.
pub fn advection_error(report: &RunReport, config: &EvolutionConfig) -> Result<f64> {
    let map = &config.model.map;
    let c = map.boost.c;
    let last = report
        .snapshots
        .last()
        .ok_or_else(|| Error::Domain("run has no snapshots".into()))?;
    let mut err = 0.0f64;
    for (rho, u) in report.nodes.iter().zip(&last.fields[0]) {
        let omega = map.eval(*rho)?.omega;
        err = err.max((u - advection_exact(c, omega, last.tau)).abs());
    }
    Ok(err)
}

pub fn exact_convergence(
    base: &EvolutionConfig,
    order: Order,
    cells: &[usize],
    rule: TimeStepRule,
    jobs: usize,
) -> Result<ExactConvergence> {
    if !has_exact_solution(base) {
        return Err(Error::Config("no closed-form solution for this configuration".into()));
    }
    let levels = convergence_levels(base, order, cells, rule)?;
    let reports: Vec<Result<RunReport>> = parallel_map(&levels, jobs, run);
    let mut errors = Vec::new();
    for (r, c) in reports.into_iter().zip(&levels) {
        let r = r?;
        require_ok(&r, "advection level")?;
        errors.push(advection_error(&r, c)?);
    }
    let ratios = errors.windows(2).map(|w| w[0] / w[1]).collect();
    Ok(ExactConvergence {
        order: order.value(),
        cells: cells.to_vec(),
        errors,
        ratios,
    })
}

/// `Φ - ∂ρv` in L2 at every snapshot of a radial run.
pub fn constraint_series(report: &RunReport, config: &EvolutionConfig) -> Result<Vec<(f64, f64)>> {
    if config.model.family != ModelFamily::RadialConformalWave {
        return Err(Error::Config("the constraint exists only for the radial model".into()));
    }
    let map = &config.model.map;
    let layer = map.compress.kind.is_layer().then(|| map.r());
    let op = Operator::build(&config.scheme.discretization, map.domain, layer)?;
    let w = op.weights();
    let vs = report.field_snapshots("v")?;
    let ps = report.field_snapshots("Phi")?;
    let mut d = vec![0.0; report.nodes.len()];
    let mut out = Vec::with_capacity(vs.len());
    for ((tau, v), (_, phi)) in vs.iter().zip(&ps) {
        match &op {
            Operator::Spectral(layout) => layout.apply_d1(v, &mut d)?,
            Operator::Fd { stencil, .. } => stencil.apply_into(v, &mut d)?,
        }
        let res: Vec<f64> = phi.iter().zip(&d).map(|(p, dv)| p - dv).collect();
        out.push((*tau, l2_norm(&w, &res)?));
    }
    Ok(out)
}

/// One level of a spectral constraint study.
#[derive(Debug, Clone, Serialize)]
pub struct ConstraintLevel {
    pub n: usize,
    pub completed: bool,
    pub series: Vec<(f64, f64)>,
    /// Largest constraint norm inside the window.
    pub window_max: f64,
    pub final_value: f64,
}

pub fn constraint_convergence(
    base: &EvolutionConfig,
    n_values: &[usize],
    window: [f64; 2],
    jobs: usize,
) -> Result<Vec<ConstraintLevel>> {
    let Discretization::Spectral { boundaries, .. } = &base.scheme.discretization else {
        return Err(Error::Config("constraint convergence needs a spectral scheme".into()));
    };
    let levels: Vec<EvolutionConfig> = n_values
        .iter()
        .map(|&n| {
            let mut c = base.clone();
            c.scheme.discretization = Discretization::Spectral {
                boundaries: boundaries.clone(),
                n,
            };
            c
        })
        .collect();
    let reports: Vec<Result<RunReport>> = parallel_map(&levels, jobs, run);
    let mut out = Vec::new();
    for ((r, c), &n) in reports.into_iter().zip(&levels).zip(n_values) {
        let r = r?;
        let series = constraint_series(&r, c)?;
        let window_max = series
            .iter()
            .filter(|(t, _)| *t >= window[0] && *t <= window[1])
            .map(|(_, v)| *v)
            .fold(0.0, f64::max);
        out.push(ConstraintLevel {
            n,
            completed: r.is_ok(),
            final_value: series.last().map(|x| x.1).unwrap_or(f64::NAN),
            series,
            window_max,
        });
    }
    Ok(out)
}

/// Local decay exponents of one observer.
#[derive(Debug, Clone, Serialize)]
pub struct DecaySeries {
    pub rho: f64,
    pub field: String,
    pub exponents: Vec<(f64, f64)>,
}

impl DecaySeries {
    pub fn mean_over(&self, lo: f64, hi: f64) -> Option<f64> {
        let vals: Vec<f64> = self
            .exponents
            .iter()
            .filter(|(t, _)| *t >= lo && *t <= hi)
            .map(|(_, q)| *q)
            .collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    pub fn range_over(&self, lo: f64, hi: f64) -> Option<(f64, f64)> {
        let vals = self
            .exponents
            .iter()
            .filter(|(t, _)| *t >= lo && *t <= hi)
            .map(|(_, q)| *q);
        vals.fold(None, |acc, q| match acc {
            None => Some((q, q)),
            Some((a, b)) => Some((a.min(q), b.max(q))),
        })
    }
}

/// Decay exponents of `field` at every observer of a run.
pub fn decay_rates(report: &RunReport, field: &str) -> Result<Vec<DecaySeries>> {
    report
        .observers
        .iter()
        .filter(|o| o.field == field)
        .map(|o| {
            Ok(DecaySeries {
                rho: o.rho,
                field: field.to_string(),
                exponents: local_decay_exponent(o, DECAY_WINDOW)?,
            })
        })
        .collect()
}

/// One entry of a resolution sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub order: u32,
    pub cells: usize,
    pub dissipation: f64,
    pub dt: f64,
    pub completed: bool,
    /// Final L2 norm per field.
    pub final_norms: Vec<(String, f64)>,
    /// `(τ, L2)` of the first field.
    pub norm_series: Vec<(f64, f64)>,
}

/// Runs every combination of orders, cell counts and dissipation values.
pub fn sweep(
    base: &EvolutionConfig,
    orders: &[Order],
    cells: &[usize],
    dissipations: &[f64],
    jobs: usize,
) -> Result<Vec<SweepPoint>> {
    let mut combos = Vec::new();
    for &o in orders {
        for &n in cells {
            for &e in dissipations {
                combos.push((o, n, e));
            }
        }
    }
    let configs: Vec<EvolutionConfig> = combos
        .iter()
        .map(|&(o, n, e)| with_fd(base, o, n, Some(e)))
        .collect();
    let reports: Vec<Result<RunReport>> = parallel_map(&configs, jobs, run);
    let mut out = Vec::new();
    for (r, &(o, n, e)) in reports.into_iter().zip(&combos) {
        let r = r?;
        let final_norms = r
            .field_names
            .iter()
            .map(|f| Ok((f.clone(), r.final_norm(f)?)))
            .collect::<Result<Vec<_>>>()?;
        out.push(SweepPoint {
            order: o.value(),
            cells: n,
            dissipation: e,
            dt: r.dt,
            completed: r.is_ok(),
            norm_series: r.norm_series(&r.field_names[0])?,
            final_norms,
        });
    }
    Ok(out)
}

/// Characteristic curves of the map of an experiment file.
pub fn characteristics(file: &ExperimentFile) -> Result<Vec<Polyline>> {
    let ch = file.characteristics.as_ref().ok_or_else(|| {
        Error::Config(format!("experiment '{}' has no [characteristics] table", file.name))
    })?;
    let map = file.coordinate_map()?;
    let mut out = Vec::new();
    for &fam in &ch.families {
        out.extend(trace_characteristics(&map, fam, &ch.seeds, ch.tau_end, ch.dtau)?);
    }
    Ok(out)
}
