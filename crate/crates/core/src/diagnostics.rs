//! Post-processing of evolution output and the illustrative demos.

use serde::{Deserialize, Serialize};

use crate::chebspec::{trapezoid_weights, MultiDomainLayout};
use crate::coordmap::CoordinateMap;
use crate::error::{config_err, Error, Result};
use crate::fd1d::UniformGrid;

/// Values of one field sampled at a fixed ρ.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObserverSeries {
    pub rho: f64,
    /// Physical location `x(ρ)`; `+∞` at null infinity.
    pub x: f64,
    pub field: String,
    pub tau: Vec<f64>,
    pub values: Vec<f64>,
}

impl ObserverSeries {
    pub fn new(map: &CoordinateMap, rho: f64, field: impl Into<String>) -> Result<Self> {
        Ok(Self {
            rho,
            x: map.x_of_rho(rho)?,
            field: field.into(),
            tau: Vec::new(),
            values: Vec::new(),
        })
    }

    pub fn push(&mut self, tau: f64, value: f64) {
        self.tau.push(tau);
        self.values.push(value);
    }

    pub fn len(&self) -> usize {
        self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau.is_empty()
    }
}

/// Trapezoid weights of a uniform grid.
pub fn uniform_weights(grid: &UniformGrid) -> Vec<f64> {
    let h = grid.spacing();
    let n = grid.len();
    (0..n)
        .map(|i| if i == 0 || i == n - 1 { 0.5 * h } else { h })
        .collect()
}

/// Quadrature weights of a Chebyshev layout.
pub fn layout_weights(layout: &MultiDomainLayout) -> Vec<f64> {
    trapezoid_weights(layout)
}

/// `sqrt(Σ wᵢ fᵢ²)`.
pub fn l2_norm(weights: &[f64], field: &[f64]) -> Result<f64> {
    if weights.len() != field.len() {
        return Err(Error::Shape {
            expected: weights.len(),
            got: field.len(),
        });
    }
    Ok(weights
        .iter()
        .zip(field)
        .map(|(w, f)| w * f * f)
        .sum::<f64>()
        .sqrt())
}

/// Trapezoid L2 norm of a field on a uniform grid.
pub fn l2_norm_uniform(grid: &UniformGrid, field: &[f64]) -> Result<f64> {
    l2_norm(&uniform_weights(grid), field)
}

/// `log₂(d_low_med / d_med_high)`, or `None` if either difference is zero
/// or not finite.
pub fn convergence_factor(d_low_med: f64, d_med_high: f64) -> Option<f64> {
    let q = (d_low_med / d_med_high).log2();
    (d_low_med > 0.0 && d_med_high > 0.0 && q.is_finite()).then_some(q)
}

/// Pointwise-in-time convergence factor from three uniform-grid runs whose
/// resolutions differ by factors of 2. Differences are taken on the coarse
/// nodes. Each argument is a list of `(τ, field)` samples at common times.
pub fn convergence_series(
    coarse: &UniformGrid,
    low: &[(f64, Vec<f64>)],
    med: &[(f64, Vec<f64>)],
    high: &[(f64, Vec<f64>)],
) -> Result<Vec<(f64, Option<f64>)>> {
    if low.len() != med.len() || med.len() != high.len() {
        return Err(Error::Shape {
            expected: low.len(),
            got: med.len().min(high.len()),
        });
    }
    let n = coarse.len();
    let w = uniform_weights(coarse);
    let mut out = Vec::with_capacity(low.len());
    for ((l, m), h) in low.iter().zip(med).zip(high) {
        if (l.0 - m.0).abs() > 1e-9 * l.0.abs().max(1.0)
            || (m.0 - h.0).abs() > 1e-9 * m.0.abs().max(1.0)
        {
            return Err(Error::Domain(format!(
                "snapshot times differ: {}, {}, {}",
                l.0, m.0, h.0
            )));
        }
        if l.1.len() != n || m.1.len() != 2 * n - 1 || h.1.len() != 4 * n - 3 {
            return Err(Error::Shape {
                expected: n,
                got: l.1.len(),
            });
        }
        let d1: Vec<f64> = (0..n).map(|i| l.1[i] - m.1[2 * i]).collect();
        let d2: Vec<f64> = (0..n).map(|i| m.1[2 * i] - h.1[4 * i]).collect();
        out.push((l.0, convergence_factor(l2_norm(&w, &d1)?, l2_norm(&w, &d2)?)));
    }
    Ok(out)
}

/// Mean of the defined values with `lo <= τ <= hi`.
pub fn mean_over(series: &[(f64, Option<f64>)], lo: f64, hi: f64) -> Option<f64> {
    let vals: Vec<f64> = series
        .iter()
        .filter(|(t, _)| *t >= lo && *t <= hi)
        .filter_map(|(_, q)| *q)
        .collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

/// Samples with |v| below this are treated as zero crossings and skipped.
pub const DECAY_GUARD: f64 = 1e-13;

/// Default number of samples in the decay-exponent fitting window.
pub const DECAY_WINDOW: usize = 41;

/// Local decay exponent `d ln|v| / d ln τ`.
///
/// Samples at τ ≤ 0 and inside the guard band are dropped. Beyond τ = 10
/// the series is thinned to roughly uniform spacing in ln τ (at most 400
/// samples per decade), then a least-squares line is fitted to
/// `(ln τ, ln|v|)` over a centered window of `window` samples.
pub fn local_decay_exponent(series: &ObserverSeries, window: usize) -> Result<Vec<(f64, f64)>> {
    local_decay_exponent_raw(&series.tau, &series.values, window)
}

pub fn local_decay_exponent_raw(tau: &[f64], values: &[f64], window: usize) -> Result<Vec<(f64, f64)>> {
    if window < 2 {
        return config_err(format!("decay window must hold at least 2 samples, got {window}"));
    }
    let min_step = std::f64::consts::LN_10 / 400.0;
    let mut pts: Vec<(f64, f64)> = Vec::new();
    for (&t, &v) in tau.iter().zip(values) {
        if !(t > 0.0) || !(v.abs() >= DECAY_GUARD) {
            continue;
        }
        let lt = t.ln();
        if t > 10.0 {
            if let Some(&(prev, _)) = pts.last() {
                if prev > 10f64.ln() && lt - prev < min_step {
                    continue;
                }
            }
        }
        pts.push((lt, v.abs().ln()));
    }
    if window > pts.len() {
        return config_err(format!(
            "decay window of {window} samples is wider than the usable series ({} samples)",
            pts.len()
        ));
    }
    let half = window / 2;
    let mut out = Vec::with_capacity(pts.len() - 2 * half);
    for c in half..pts.len() - (window - 1 - half) {
        let w = &pts[c - half..c - half + window];
        let n = w.len() as f64;
        let mx = w.iter().map(|p| p.0).sum::<f64>() / n;
        let my = w.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = w.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = w.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        out.push((pts[c].0.exp(), sxy / sxx));
    }
    Ok(out)
}

/// Which characteristic family to follow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Outgoing,
    Incoming,
}

/// One traced curve, `(τ, ρ)` pairs in order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Polyline {
    pub family: Family,
    pub seed: f64,
    pub points: Vec<(f64, f64)>,
}

/// Integrates `dρ/dτ = c±(ρ)` with RK4 from each seed over `[0, τ_end]`.
/// A curve that reaches the edge of the domain is cut there.
pub fn trace_characteristics(
    map: &CoordinateMap,
    family: Family,
    seeds: &[f64],
    tau_end: f64,
    dtau: f64,
) -> Result<Vec<Polyline>> {
    if !(dtau > 0.0) || !(tau_end >= 0.0) {
        return config_err("characteristic tracing needs dτ > 0 and τ_end >= 0");
    }
    let (lo, hi) = map.domain;
    let speed = |rho: f64| -> f64 {
        let rho = rho.clamp(lo, hi);
        let (cp, cm) = map.char_speeds(rho, 1.0).unwrap_or((0.0, 0.0));
        match family {
            Family::Outgoing => cp,
            Family::Incoming => cm,
        }
    };
    let steps = (tau_end / dtau).ceil() as usize;
    let mut out = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        if !map.contains(seed) {
            return Err(Error::Domain(format!("seed ρ = {seed} outside {:?}", map.domain)));
        }
        let mut pts = vec![(0.0, seed)];
        let mut rho = seed;
        for n in 0..steps {
            let t0 = n as f64 * dtau;
            let h = dtau.min(tau_end - t0);
            let k1 = speed(rho);
            let k2 = speed(rho + 0.5 * h * k1);
            let k3 = speed(rho + 0.5 * h * k2);
            let k4 = speed(rho + h * k3);
            let next = rho + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            if next > hi || next < lo {
                let edge = if next > hi { hi } else { lo };
                let frac = (edge - rho) / (next - rho);
                pts.push((t0 + frac * h, edge));
                break;
            }
            rho = next;
            pts.push((t0 + h, rho));
        }
        out.push(Polyline {
            family,
            seed,
            points: pts,
        });
    }
    Ok(out)
}

/// Largest |dρ/dτ ∓ 1| over segments lying inside |ρ| < R (both ends).
pub fn interior_slope_deviation(lines: &[Polyline], r: f64) -> f64 {
    let mut worst = 0.0f64;
    for line in lines {
        let target = match line.family {
            Family::Outgoing => 1.0,
            Family::Incoming => -1.0,
        };
        for w in line.points.windows(2) {
            let ((t0, r0), (t1, r1)) = (w[0], w[1]);
            if r0.abs() < r && r1.abs() < r && t1 > t0 {
                worst = worst.max(((r1 - r0) / (t1 - t0) - target).abs());
            }
        }
    }
    worst
}

/// True if some curve moves from ρ = S (or -S) back into the domain.
pub fn crosses_infinity_inward(lines: &[Polyline], s: f64) -> bool {
    lines.iter().any(|l| {
        l.points.windows(2).any(|w| {
            let (r0, r1) = (w[0].1, w[1].1);
            (r0 >= s && r1 < r0) || (r0 <= -s && r1 > r0)
        })
    })
}

/// Sampled real part of the compactified plane wave at τ = 0 together with
/// its number of sign changes on ρ ∈ [0, 1).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CycleDemo {
    pub k: f64,
    pub c: f64,
    pub rho: Vec<f64>,
    pub value: Vec<f64>,
    pub zero_crossings: usize,
}

/// `Re u = cos(2π kC Ω)` with `Ω = 1 - ρ`, the plane wave `e^{-2πik(x - t)}`
/// on the slice τ = 0 of the map `ρ = x/(1+x)` with the advection shift.
pub fn demo_cycles(k: f64, c: f64, resolution: usize) -> Result<CycleDemo> {
    if !(k > 0.0) || !(c >= 0.0) || resolution < 2 {
        return config_err("demo_cycles needs k > 0, C >= 0 and at least 2 samples");
    }
    let rho: Vec<f64> = (0..resolution)
        .map(|i| i as f64 / resolution as f64)
        .collect();
    let value: Vec<f64> = rho
        .iter()
        .map(|r| (2.0 * std::f64::consts::PI * k * c * (1.0 - r)).cos())
        .collect();
    let mut zero_crossings = 0;
    let mut last_sign = 0.0;
    for v in &value {
        if v.abs() < 1e-12 {
            continue;
        }
        let s = v.signum();
        if last_sign != 0.0 && s != last_sign {
            zero_crossings += 1;
        }
        last_sign = s;
    }
    Ok(CycleDemo {
        k,
        c,
        rho,
        value,
        zero_crossings,
    })
}

/// Amplitude `e^{-2πσ(x - R)Θ(x - R)}` of a wave damped in an absorbing
/// layer, with the imaginary part of the stretched coordinate taken as
/// `x - R`.
pub fn demo_pml_envelope(sigma: f64, r: f64, x: &[f64]) -> Result<Vec<f64>> {
    if !(sigma >= 0.0) {
        return config_err(format!("σ must be non-negative, got {sigma}"));
    }
    Ok(x.iter()
        .map(|&x| {
            if x > r {
                (-2.0 * std::f64::consts::PI * sigma * (x - r)).exp()
            } else {
                1.0
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coordmap::CompressKind;
    use approx::assert_abs_diff_eq;

    #[test]
    fn l2_examples() {
        let g = UniformGrid::new(0.0, 10.0, 100).unwrap();
        assert_eq!(l2_norm_uniform(&g, &[0.0; 101]).unwrap(), 0.0);
        assert_abs_diff_eq!(l2_norm_uniform(&g, &[1.0; 101]).unwrap(), 10f64.sqrt(), epsilon = 1e-12);
        let f: Vec<f64> = g.nodes().iter().map(|x| x.sin()).collect();
        let f2: Vec<f64> = f.iter().map(|v| 2.0 * v).collect();
        assert_abs_diff_eq!(
            l2_norm_uniform(&g, &f2).unwrap(),
            2.0 * l2_norm_uniform(&g, &f).unwrap(),
            epsilon = 1e-12
        );
        assert!(l2_norm(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn q_examples() {
        assert_abs_diff_eq!(convergence_factor(4.0, 1.0).unwrap(), 2.0);
        assert_abs_diff_eq!(convergence_factor(16.0, 1.0).unwrap(), 4.0);
        assert_abs_diff_eq!(convergence_factor(16e-9, 1e-9).unwrap(), 4.0, epsilon = 1e-12);
        assert_eq!(convergence_factor(1.0, 0.0), None);
    }

    #[test]
    fn q_series_recovers_order() {
        // fields equal exact + C h^4 on their own grids
        let coarse = UniformGrid::new(0.0, 1.0, 10).unwrap();
        let level = |n: usize| {
            let g = UniformGrid::new(0.0, 1.0, n).unwrap();
            let h = g.spacing();
            g.nodes().iter().map(|x| x.sin() + h.powi(4) * x.cos()).collect::<Vec<_>>()
        };
        let low = vec![(1.0, level(10))];
        let med = vec![(1.0, level(20))];
        let high = vec![(1.0, level(40))];
        let q = convergence_series(&coarse, &low, &med, &high).unwrap();
        assert_abs_diff_eq!(q[0].1.unwrap(), 4.0, epsilon = 1e-9);
        assert_abs_diff_eq!(mean_over(&q, 0.0, 2.0).unwrap(), 4.0, epsilon = 1e-9);
        assert_eq!(mean_over(&q, 2.0, 3.0), None);
    }

    #[test]
    fn decay_exponent_of_power_laws() {
        for q in [0.5, 1.0, 2.0, 3.0] {
            let tau: Vec<f64> = (1..=20000).map(|i| i as f64 * 0.05).collect();
            let v: Vec<f64> = tau.iter().map(|t| t.powf(-q)).collect();
            let e = local_decay_exponent_raw(&tau, &v, DECAY_WINDOW).unwrap();
            assert!(e.iter().all(|(_, s)| (s + q).abs() < 1e-6));
            assert!(e.last().unwrap().0 > 800.0);
        }
    }

    #[test]
    fn decay_window_too_wide() {
        let tau = [1.0, 2.0, 3.0];
        assert!(matches!(
            local_decay_exponent_raw(&tau, &[1.0, 0.5, 0.3], 5),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn decay_skips_guard_band() {
        let tau: Vec<f64> = (1..=200).map(|i| i as f64).collect();
        let mut v: Vec<f64> = tau.iter().map(|t| -t.powi(-2)).collect();
        v[100] = 0.0;
        let e = local_decay_exponent_raw(&tau, &v, 11).unwrap();
        assert!(e.iter().all(|(_, s)| (s + 2.0).abs() < 1e-9));
    }

    #[test]
    fn spatial_compactification_characteristics_never_reach_one() {
        let map = CoordinateMap::new(
            crate::coordmap::CompressSpec {
                kind: CompressKind::GlobalRational,
                r: 0.0,
                s: 1.0,
            },
            crate::coordmap::BoostSpec {
                kind: crate::coordmap::BoostKind::Zero,
                c: 1.0,
            },
            (0.0, 1.0),
        )
        .unwrap();
        let lines = trace_characteristics(&map, Family::Outgoing, &[0.0, 0.5], 50.0, 0.01).unwrap();
        for l in &lines {
            let (t, r) = *l.points.last().unwrap();
            assert_abs_diff_eq!(t, 50.0, epsilon = 1e-9);
            assert!(r < 1.0);
            // dρ/dt = (1-ρ)² from ρ₀: ρ = 1 - (1-ρ₀)/(1 + (1-ρ₀)t)
            let exact = 1.0 - (1.0 - l.seed) / (1.0 + (1.0 - l.seed) * 50.0);
            assert_abs_diff_eq!(r, exact, epsilon = 1e-8);
        }
    }

    #[test]
    fn layer_characteristics_are_straight_inside() {
        let map = CoordinateMap::unit_outgoing_layer(CompressKind::LayerQuadratic, 5.0, 10.0, -10.0)
            .unwrap();
        let seeds: Vec<f64> = (-10..=10).map(|i| i as f64).collect();
        let mut lines = trace_characteristics(&map, Family::Outgoing, &seeds, 30.0, 0.05).unwrap();
        lines.extend(trace_characteristics(&map, Family::Incoming, &seeds, 30.0, 0.05).unwrap());
        assert!(interior_slope_deviation(&lines, 5.0) < 1e-8);
        assert!(!crosses_infinity_inward(&lines, 10.0));
        // unit outgoing speed: straight across the whole domain
        for l in lines.iter().filter(|l| l.family == Family::Outgoing && l.seed >= 0.0) {
            for (t, r) in &l.points {
                assert_abs_diff_eq!(*r, l.seed + t, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn hyperboloid_incoming_fixed_at_scri() {
        let map = CoordinateMap::global_hyperboloid(10.0).unwrap();
        let l = trace_characteristics(&map, Family::Incoming, &[10.0], 20.0, 0.1).unwrap();
        assert!(l[0].points.iter().all(|p| p.1 == 10.0));
        assert!(!crosses_infinity_inward(&l, 10.0));
    }

    #[test]
    fn cycle_counts() {
        for (k, c) in [(1.0, 1.0), (1.0, 5.0), (2.0, 3.0)] {
            let d = demo_cycles(k, c, 4000).unwrap();
            let expect = 2.0 * k * c;
            assert!((d.zero_crossings as f64 - expect).abs() <= 1.0, "{k} {c}: {}", d.zero_crossings);
        }
        assert_eq!(demo_cycles(1.0, 0.0, 100).unwrap().zero_crossings, 0);
        assert_eq!(demo_cycles(1.0, 1e-4, 100).unwrap().zero_crossings, 0);
    }

    #[test]
    fn pml_envelope() {
        let x = [0.0, 5.0, 6.0, 10.0];
        let a = demo_pml_envelope(0.1, 5.0, &x).unwrap();
        assert_eq!(a[1], 1.0);
        assert_abs_diff_eq!(a[2], (-0.2 * std::f64::consts::PI).exp());
        assert!(demo_pml_envelope(0.0, 5.0, &x).unwrap().iter().all(|v| *v == 1.0));
        assert!(demo_pml_envelope(-1.0, 5.0, &x).is_err());
    }
}
