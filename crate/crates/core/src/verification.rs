//! The acceptance suite: one function per criterion, each returning a
//! pass/fail verdict with the measured numbers.

use serde::Serialize;

use crate::config::ExperimentFile;
use crate::coordmap::{BoostKind, BoostSpec, CompressKind, CompressSpec, CoordinateMap};
use crate::diagnostics::{crosses_infinity_inward, demo_cycles, interior_slope_deviation};
use crate::error::{Error, Result};
use crate::evolve::{run, EvolutionConfig};
use crate::experiments::{
    characteristics, constraint_convergence, decay_rates, exact_convergence, self_convergence,
    sweep, SweepPoint,
};
use crate::fd1d::Order;
use crate::presets;

/// Outcome of one criterion.
#[derive(Debug, Clone, Serialize)]
pub struct Criterion {
    pub id: u8,
    pub title: &'static str,
    pub passed: bool,
    /// Named measurements.
    pub values: Vec<(String, f64)>,
    /// Human-readable findings.
    pub details: Vec<String>,
}

impl Criterion {
    fn new(id: u8, title: &'static str) -> Self {
        Self {
            id,
            title,
            passed: true,
            values: Vec::new(),
            details: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, detail: String) {
        self.passed &= ok;
        let mark = if ok { "ok" } else { "FAIL" };
        self.details.push(format!("[{mark}] {detail}"));
    }

    fn value(&mut self, name: impl Into<String>, v: f64) {
        self.values.push((name.into(), v));
    }

    /// One summary line.
    pub fn line(&self) -> String {
        format!(
            "criterion {}: {} ... {}",
            self.id,
            self.title,
            if self.passed { "PASS" } else { "FAIL" }
        )
    }
}

pub const TITLES: [&str; 8] = [
    "Maxwell convergence factors (hyperboloid and layer)",
    "outflow exactness of the characteristic speeds",
    "advection exact-solution convergence order",
    "Huygens residual ordering",
    "cubic-wave decay rates",
    "spectral constraint convergence",
    "cycle-count demo",
    "characteristic diagrams of the layer",
];

/// Runs criterion `id` (1 to 8).
pub fn run_criterion(id: u8, jobs: usize) -> Result<Criterion> {
    match id {
        1 => maxwell_convergence(jobs),
        2 => outflow_exactness(),
        3 => advection_order(jobs),
        4 => huygens_ordering(jobs),
        5 => cubic_decay(),
        6 => spectral_constraint(jobs),
        7 => cycle_count(),
        8 => characteristic_diagrams(),
        _ => Err(Error::Config(format!("no criterion {id}; criteria are 1 to 8"))),
    }
}

/// Runs every criterion. A criterion whose pipeline errors is reported as
/// failed with the error message.
pub fn run_all(jobs: usize) -> Vec<Criterion> {
    (1..=8)
        .map(|id| {
            run_criterion(id, jobs).unwrap_or_else(|e| {
                let mut c = Criterion::new(id, TITLES[id as usize - 1]);
                c.check(false, format!("error: {e}"));
                c
            })
        })
        .collect()
}

fn preset_config(name: &str) -> Result<(ExperimentFile, EvolutionConfig)> {
    let f = presets::load(name)?;
    let c = f.evolution_config()?;
    Ok((f, c))
}

fn orders_of(f: &ExperimentFile) -> Result<Vec<Order>> {
    let conv = f.converge.clone().unwrap_or_default();
    conv.orders
        .iter()
        .map(|&o| Order::try_from(o).map_err(Error::Config))
        .collect()
}

/// Three-level convergence factors averaged over the preset window must lie
/// within the tolerance of the order, on both maps.
pub fn maxwell_convergence(jobs: usize) -> Result<Criterion> {
    let mut c = Criterion::new(1, TITLES[0]);
    for name in ["maxwell-hyperboloid", "maxwell-layer"] {
        let (f, base) = preset_config(name)?;
        let conv = f.converge.clone().unwrap_or_default();
        let tol = f.expect.as_ref().and_then(|e| e.q_tolerance).unwrap_or(0.5);
        let window = conv.window.unwrap_or([5.0, 20.0]);
        let field = conv.field.clone().unwrap_or_else(|| "E".into());
        for order in orders_of(&f)? {
            let s = self_convergence(&base, order, &conv.cells, &field, window, conv.time_step, jobs)?;
            let q = s.mean_q.unwrap_or(f64::NAN);
            let target = order.value() as f64;
            c.value(format!("{name} order {} mean Q", order.value()), q);
            c.check(
                (q - target).abs() <= tol,
                format!(
                    "{name}: order {} mean Q over [{}, {}] = {q:.3} (target {target} ± {tol})",
                    order.value(),
                    window[0],
                    window[1]
                ),
            );
        }
    }
    Ok(c)
}

/// The compactifying maps shipped with the library.
pub fn shipped_compactifying_maps() -> Result<Vec<(String, CoordinateMap)>> {
    let mut maps = vec![
        ("global hyperboloid".to_string(), CoordinateMap::global_hyperboloid(10.0)?),
        ("advection rational".to_string(), CoordinateMap::advection_rational(1.0)?),
    ];
    for (kind, r, s, lo) in [
        (CompressKind::LayerQuadratic, 5.0, 10.0, -10.0),
        (CompressKind::LayerLinear, 5.0, 10.0, -10.0),
        (CompressKind::LayerQuartic, 10.0, 20.0, 0.0),
    ] {
        maps.push((
            format!("unit outgoing layer {kind:?}"),
            CoordinateMap::unit_outgoing_layer(kind, r, s, lo)?,
        ));
    }
    maps.push((
        "translated hyperboloid layer".to_string(),
        CoordinateMap::new(
            CompressSpec {
                kind: CompressKind::LayerQuadratic,
                r: 5.0,
                s: 10.0,
            },
            BoostSpec {
                kind: BoostKind::TranslatedHyperboloid,
                c: 3.0,
            },
            (0.0, 10.0),
        )?,
    ));
    Ok(maps)
}

/// The incoming speed vanishes at null infinity for every compactifying map,
/// and the unit outgoing layer has outgoing speed exactly one.
pub fn outflow_exactness() -> Result<Criterion> {
    let mut c = Criterion::new(2, TITLES[1]);
    let tol = 1e-13;
    for (name, map) in shipped_compactifying_maps()? {
        let s = map.s();
        let (_, cm) = map.char_speeds(s, 1.0)?;
        c.value(format!("{name} c- at S"), cm);
        c.check(cm.abs() <= tol, format!("{name}: c₋(S) = {cm:e}"));
        if map.domain.0 <= -s {
            let (cp, _) = map.char_speeds(-s, 1.0)?;
            c.value(format!("{name} c+ at -S"), cp);
            c.check(cp.abs() <= tol, format!("{name}: c₊(-S) = {cp:e}"));
        }
        if map.boost.kind == BoostKind::UnitOutgoingLayer {
            let (lo, hi) = map.domain;
            let n = 2000;
            let mut worst = 0.0f64;
            for i in 0..=n {
                let rho = lo + (hi - lo) * i as f64 / n as f64;
                let (cp, cm) = map.char_speeds(rho, 1.0)?;
                let dev = if rho >= 0.0 { (cp - 1.0).abs() } else { (cm + 1.0).abs() };
                worst = worst.max(dev);
            }
            c.value(format!("{name} max outgoing speed deviation"), worst);
            c.check(
                worst <= tol,
                format!("{name}: max |outgoing speed - 1| over {} nodes = {worst:e}", n + 1),
            );
        }
    }
    Ok(c)
}

/// One grid doubling reduces the max error at τ = 5 by `2^order ± 30%`.
pub fn advection_order(jobs: usize) -> Result<Criterion> {
    let mut c = Criterion::new(3, TITLES[2]);
    let (f, base) = preset_config("advection")?;
    let conv = f.converge.clone().unwrap_or_default();
    let tol = f.expect.as_ref().and_then(|e| e.ratio_tolerance).unwrap_or(0.3);
    for order in orders_of(&f)? {
        let r = exact_convergence(&base, order, &conv.cells, conv.time_step, jobs)?;
        let target = 2f64.powi(order.value() as i32);
        for (k, ratio) in r.ratios.iter().enumerate() {
            c.value(format!("order {} ratio {}->{}", order.value(), r.cells[k], r.cells[k + 1]), *ratio);
            c.check(
                (ratio / target - 1.0).abs() <= tol,
                format!(
                    "order {}: error {:.3e} -> {:.3e} ({} -> {} cells), ratio {ratio:.2} (target {target} ± {:.0}%)",
                    order.value(),
                    r.errors[k],
                    r.errors[k + 1],
                    r.cells[k],
                    r.cells[k + 1],
                    tol * 100.0
                ),
            );
        }
    }
    Ok(c)
}

/// Final time, resolutions and dissipation values of the Huygens test.
pub const HUYGENS_TAU: f64 = 50.0;
pub const HUYGENS_CELLS: [usize; 2] = [100, 200];
pub const HUYGENS_DISSIPATION: f64 = 0.02;

/// Late-time residuals of the Maxwell runs for every order, resolution and
/// dissipation setting on one map.
pub fn huygens_sweep(preset: &str, jobs: usize) -> Result<Vec<SweepPoint>> {
    let (_, mut base) = preset_config(preset)?;
    base.scheme.tau_final = HUYGENS_TAU;
    base.scheme.observers.clear();
    sweep(&base, &Order::ALL, &HUYGENS_CELLS, &[0.0, HUYGENS_DISSIPATION], jobs)
}

/// At τ = 50 the best run is at least a hundred times below the plainest
/// one, and dissipation strictly lowers the residual at every order.
pub fn huygens_ordering(jobs: usize) -> Result<Criterion> {
    let mut c = Criterion::new(4, TITLES[3]);
    for name in ["maxwell-hyperboloid", "maxwell-layer"] {
        let pts = huygens_sweep(name, jobs)?;
        let l2 = |o: u32, n: usize, e: f64| -> Result<f64> {
            pts.iter()
                .find(|p| p.order == o && p.cells == n && p.dissipation == e)
                .filter(|p| p.completed)
                .map(|p| p.final_norms[0].1)
                .ok_or_else(|| Error::Unstable(format!("{name}: run order {o}, {n} cells, ε = {e}")))
        };
        let best = l2(8, 200, HUYGENS_DISSIPATION)?;
        let plain = l2(4, 100, 0.0)?;
        c.value(format!("{name} L2(E) order 8 eps 0.02 n 200"), best);
        c.value(format!("{name} L2(E) order 4 eps 0 n 100"), plain);
        c.check(
            best <= 1e-2 * plain,
            format!("{name}: L2(E) at τ = {HUYGENS_TAU}: 8th+diss/200 = {best:.3e}, 4th/100 = {plain:.3e}"),
        );
        for o in [4, 6, 8] {
            for n in HUYGENS_CELLS {
                let with = l2(o, n, HUYGENS_DISSIPATION)?;
                let without = l2(o, n, 0.0)?;
                c.check(
                    with < without,
                    format!("{name}: order {o}, {n} cells: ε = {HUYGENS_DISSIPATION} {with:.3e} < ε = 0 {without:.3e}"),
                );
            }
        }
    }
    Ok(c)
}

/// Local decay exponents of the cubic wave averaged over the window.
pub fn cubic_decay() -> Result<Criterion> {
    let mut c = Criterion::new(5, TITLES[4]);
    let (f, cfg) = preset_config("cubic-decay")?;
    let exp = f.expect.clone().unwrap_or_default();
    let [lo, hi] = exp.decay_window.unwrap_or([100.0, 300.0]);
    let tol = exp.decay_tolerance.unwrap_or(0.15);
    let report = run(&cfg)?;
    c.check(report.is_ok(), format!("run status {:?}", report.status));
    let rates = decay_rates(&report, "v")?;
    for target in &exp.decay {
        let Some(series) = rates.iter().find(|d| d.rho == target.rho) else {
            c.check(false, format!("no observer at ρ = {}", target.rho));
            continue;
        };
        let mean = series.mean_over(lo, hi).unwrap_or(f64::NAN);
        let (qmin, qmax) = series.range_over(lo, hi).unwrap_or((f64::NAN, f64::NAN));
        c.value(format!("mean exponent at rho {}", target.rho), mean);
        c.check(
            (mean - target.exponent).abs() <= tol,
            format!(
                "ρ = {}: mean local decay exponent over [{lo}, {hi}] = {mean:.3} (target {} ± {tol}); range [{qmin:.3}, {qmax:.3}]",
                target.rho, target.exponent
            ),
        );
    }
    Ok(c)
}

/// Below this the constraint norm is treated as roundoff.
pub const CONSTRAINT_FLOOR: f64 = 1e-10;

/// Each +2 in N lowers the peak constraint norm by the configured factor
/// until the roundoff floor; every run completes without growth.
pub fn spectral_constraint(jobs: usize) -> Result<Criterion> {
    let mut c = Criterion::new(6, TITLES[5]);
    let (f, cfg) = preset_config("linear-l2")?;
    let conv = f.converge.clone().unwrap_or_default();
    let window = conv.window.unwrap_or([0.0, 50.0]);
    let factor = f.expect.as_ref().and_then(|e| e.constraint_reduction).unwrap_or(5.0);
    let levels = constraint_convergence(&cfg, &conv.n_values, window, jobs)?;
    for l in &levels {
        c.value(format!("N {} peak constraint", l.n), l.window_max);
        c.check(
            l.completed && l.final_value.is_finite() && l.final_value <= 10.0 * l.window_max,
            format!(
                "N = {}: stable to τ = {}, peak constraint over [{}, {}] = {:.3e}, final = {:.3e}",
                l.n, cfg.scheme.tau_final, window[0], window[1], l.window_max, l.final_value
            ),
        );
    }
    for w in levels.windows(2) {
        if w[0].window_max < CONSTRAINT_FLOOR {
            c.details.push(format!("N = {} at the roundoff floor", w[0].n));
            continue;
        }
        let ratio = w[0].window_max / w[1].window_max;
        c.check(
            ratio >= factor,
            format!("N {} -> {}: constraint reduced {ratio:.1}x (need >= {factor}x)", w[0].n, w[1].n),
        );
    }
    Ok(c)
}

/// The compactified plane wave has `2kC ± 1` zero crossings.
pub fn cycle_count() -> Result<Criterion> {
    let mut c = Criterion::new(7, TITLES[6]);
    for (k, cc) in [(1.0, 1.0), (1.0, 5.0), (2.0, 3.0)] {
        let d = demo_cycles(k, cc, 10_000)?;
        let target = 2.0 * k * cc;
        c.value(format!("k {k} C {cc} zero crossings"), d.zero_crossings as f64);
        c.check(
            (d.zero_crossings as f64 - target).abs() <= 1.0,
            format!("k = {k}, C = {cc}: {} zero crossings (target {target} ± 1)", d.zero_crossings),
        );
    }
    Ok(c)
}

/// Layer characteristics are straight unit-slope lines in the interior and
/// never re-enter from null infinity.
pub fn characteristic_diagrams() -> Result<Criterion> {
    let mut c = Criterion::new(8, TITLES[7]);
    let f = presets::load("layer-1d")?;
    let map = f.coordinate_map()?;
    let lines = characteristics(&f)?;
    let dev = interior_slope_deviation(&lines, map.r());
    c.value("max interior slope deviation", dev);
    c.check(dev < 1e-8, format!("max |dρ/dτ ∓ 1| inside |ρ| < {} = {dev:e}", map.r()));
    let inward = crosses_infinity_inward(&lines, map.s());
    c.check(!inward, format!("{} curves, none enters from ρ = ±{}", lines.len(), map.s()));
    Ok(c)
}
