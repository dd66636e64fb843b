//! Hyperboloidal coordinate maps.
//!
//! A map is described by a compress function Ω(ρ), which sends the unbounded
//! physical coordinate x to a bounded coordinate ρ via `x - anchor = (ρ - anchor)/Ω`,
//! and a boost function H(ρ) = dh/dx, the slope of the height function in
//! `τ = t - h(x)`. Null infinity sits at the zero set of Ω, ρ = S.
//!
//! Every quantity that a transformed equation needs is returned in closed,
//! factored form. In particular the characteristic speeds
//! `c± = Ω²/(L(±1 - H))` are never formed by dividing the vanishing
//! numerator by the vanishing denominator at ρ = S.
//!
//! Two-sided maps are built by mirroring: Ω and L are even in ρ, H is odd.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of the compress function Ω.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompressKind {
    /// Ω ≡ 1, no compactification.
    Identity,
    /// Ω = 1 - ρ/S, i.e. ρ = x/(1 + x) for S = 1.
    GlobalRational,
    /// Ω = (1 - ρ²/S²)/2.
    GlobalHyperboloid,
    /// Ω = 1 - (ρ-R)²/(S-R)² beyond the interface.
    LayerQuadratic,
    /// Ω = 1 - (ρ-R)/(S-R) beyond the interface.
    LayerLinear,
    /// Ω = 1 - (ρ-R)⁴/(S-R)⁴ beyond the interface.
    LayerQuartic,
}

impl CompressKind {
    pub fn is_layer(self) -> bool {
        matches!(
            self,
            CompressKind::LayerQuadratic | CompressKind::LayerLinear | CompressKind::LayerQuartic
        )
    }

    pub fn is_compactifying(self) -> bool {
        self != CompressKind::Identity
    }

    /// Whether the map may be mirrored onto ρ < 0.
    pub fn two_sided(self) -> bool {
        self != CompressKind::GlobalRational
    }

    /// Default anchor of `L = Ω - (ρ - anchor)Ω'`.
    ///
    /// The 1D layers use `x - R = (ρ - R)/Ω`; the quartic (radial) layer uses
    /// `r = ρ/Ω`, which is what its closed-form L corresponds to.
    pub fn default_anchor(self, r: f64) -> f64 {
        match self {
            CompressKind::LayerQuadratic | CompressKind::LayerLinear => r,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompressSpec {
    pub kind: CompressKind,
    /// Interface radius (layer kinds only).
    #[serde(default)]
    pub r: f64,
    /// Coordinate location of null infinity.
    pub s: f64,
}

/// Shape of the boost function H.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoostKind {
    Zero,
    /// H = 1 - C·Ω²/L, so that the advection speed is 1/C everywhere.
    AdvectionShift,
    /// H = 2Sρ/(S² + ρ²), the boost of standard hyperboloids.
    GlobalHyperboloid,
    /// H = 1 - Ω²/L: unit outgoing characteristic speed.
    UnitOutgoingLayer,
    /// H = (x-R)/sqrt((x-R)² + C²) beyond the interface.
    TranslatedHyperboloid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostSpec {
    pub kind: BoostKind,
    /// Redshift/steepness parameter (advection shift, translated hyperboloid).
    #[serde(default = "one")]
    pub c: f64,
}

fn one() -> f64 {
    1.0
}

/// Values of a map and its derived coefficients at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapPoint {
    pub omega: f64,
    pub d_omega: f64,
    pub d2_omega: f64,
    pub l: f64,
    pub d_l: f64,
    pub h: f64,
    pub d_h: f64,
    /// Ω²/L, the factor in `∂x = -H∂τ + (Ω²/L)∂ρ`.
    pub a: f64,
    pub d_a: f64,
    /// Outgoing characteristic speed of the 1D wave operator.
    pub c_plus: f64,
    /// Incoming characteristic speed of the 1D wave operator.
    pub c_minus: f64,
    /// (1 - H)/Ω² in regular form; infinite if the boost does not compactify.
    pub one_minus_h_over_omega2: f64,
    /// r·Ω, i.e. `anchor·Ω + (ρ - anchor)` (sign-corrected on the mirrored side).
    pub r_omega: f64,
}

/// An immutable hyperboloidal coordinate map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordinateMap {
    pub compress: CompressSpec,
    pub boost: BoostSpec,
    pub anchor: f64,
    pub domain: (f64, f64),
}

impl CoordinateMap {
    /// Builds a map with the default anchor for its compress kind and
    /// validates parameters and the domain.
    pub fn new(compress: CompressSpec, boost: BoostSpec, domain: (f64, f64)) -> Result<Self> {
        let anchor = compress.kind.default_anchor(compress.r);
        Self::with_anchor(compress, boost, anchor, domain)
    }

    pub fn with_anchor(
        compress: CompressSpec,
        boost: BoostSpec,
        anchor: f64,
        domain: (f64, f64),
    ) -> Result<Self> {
        let map = Self {
            compress,
            boost,
            anchor,
            domain,
        };
        map.validate()?;
        Ok(map)
    }

    /// Global hyperboloid on `[-S, S]`.
    pub fn global_hyperboloid(s: f64) -> Result<Self> {
        Self::new(
            CompressSpec {
                kind: CompressKind::GlobalHyperboloid,
                r: 0.0,
                s,
            },
            BoostSpec {
                kind: BoostKind::GlobalHyperboloid,
                c: 1.0,
            },
            (-s, s),
        )
    }

    /// Layer with unit outgoing speed on `[ρmin, S]`.
    pub fn unit_outgoing_layer(kind: CompressKind, r: f64, s: f64, rho_min: f64) -> Result<Self> {
        Self::new(
            CompressSpec { kind, r, s },
            BoostSpec {
                kind: BoostKind::UnitOutgoingLayer,
                c: 1.0,
            },
            (rho_min, s),
        )
    }

    /// `ρ = x/(1 + x)` with the advection time shift.
    pub fn advection_rational(c: f64) -> Result<Self> {
        Self::new(
            CompressSpec {
                kind: CompressKind::GlobalRational,
                r: 0.0,
                s: 1.0,
            },
            BoostSpec {
                kind: BoostKind::AdvectionShift,
                c,
            },
            (0.0, 1.0),
        )
    }

    /// Flat space with no transformation.
    pub fn identity(domain: (f64, f64)) -> Result<Self> {
        Self::new(
            CompressSpec {
                kind: CompressKind::Identity,
                r: 0.0,
                s: f64::INFINITY,
            },
            BoostSpec {
                kind: BoostKind::Zero,
                c: 1.0,
            },
            domain,
        )
    }

    fn validate(&self) -> Result<()> {
        let CompressSpec { kind, r, s } = self.compress;
        let (lo, hi) = self.domain;
        if !(lo < hi) || lo.is_nan() || hi.is_nan() {
            return Err(Error::Config(format!("empty domain [{lo}, {hi}]")));
        }
        if kind.is_compactifying() {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Config(format!("S must be positive and finite, got {s}")));
            }
            if hi > s || lo < -s {
                return Err(Error::Config(format!(
                    "domain [{lo}, {hi}] extends beyond null infinity at ±{s}"
                )));
            }
        }
        if kind.is_layer() && !(0.0 <= r && r < s) {
            return Err(Error::Config(format!("layer needs 0 <= R < S, got R={r}, S={s}")));
        }
        if !kind.two_sided() && lo < 0.0 {
            return Err(Error::Config(format!("{kind:?} is one-sided; domain must start at ρ >= 0")));
        }
        let c = self.boost.c;
        match self.boost.kind {
            BoostKind::AdvectionShift | BoostKind::TranslatedHyperboloid if !(c > 0.0) => {
                return Err(Error::Config(format!("boost parameter C must be positive, got {c}")));
            }
            BoostKind::GlobalHyperboloid if kind != CompressKind::GlobalHyperboloid => {
                return Err(Error::Config(
                    "global_hyperboloid boost is only regular with the global_hyperboloid compress"
                        .into(),
                ));
            }
            BoostKind::UnitOutgoingLayer | BoostKind::TranslatedHyperboloid if !kind.is_layer() => {
                return Err(Error::Config(format!(
                    "{:?} boost needs a layer compress function, got {kind:?}",
                    self.boost.kind
                )));
            }
            _ => {}
        }
        // L > 0 on the domain; L is even, so checking [0, max|ρ|] suffices.
        let far = lo.abs().max(hi.abs());
        for i in 0..=256 {
            let sigma = far * i as f64 / 256.0;
            let (om, dom, _) = self.compress_at(sigma);
            let l = om - (sigma - self.anchor) * dom;
            if !(l > 0.0) {
                return Err(Error::Config(format!("L = {l} is not positive at ρ = {sigma}")));
            }
        }
        Ok(())
    }

    pub fn s(&self) -> f64 {
        self.compress.s
    }

    pub fn r(&self) -> f64 {
        self.compress.r
    }

    /// Is Ω zero somewhere on the closure of the domain.
    pub fn reaches_infinity(&self) -> bool {
        self.compress.kind.is_compactifying()
            && (self.domain.1 == self.compress.s || self.domain.0 == -self.compress.s)
    }

    pub fn contains(&self, rho: f64) -> bool {
        rho >= self.domain.0 && rho <= self.domain.1
    }

    fn check(&self, rho: f64) -> Result<()> {
        if self.contains(rho) {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "ρ = {rho} outside [{}, {}]",
                self.domain.0, self.domain.1
            )))
        }
    }

    /// (Ω, Ω', Ω'') at σ = |ρ| ≥ 0. Θ(0) = 0: the interface is interior.
    fn compress_at(&self, sigma: f64) -> (f64, f64, f64) {
        let CompressSpec { kind, r, s } = self.compress;
        let w = s - r;
        match kind {
            CompressKind::Identity => (1.0, 0.0, 0.0),
            CompressKind::GlobalRational => (1.0 - sigma / s, -1.0 / s, 0.0),
            CompressKind::GlobalHyperboloid => {
                (0.5 * (1.0 - sigma * sigma / (s * s)), -sigma / (s * s), -1.0 / (s * s))
            }
            _ if sigma <= r => (1.0, 0.0, 0.0),
            CompressKind::LayerQuadratic => {
                let q = (sigma - r) / w;
                (1.0 - q * q, -2.0 * q / w, -2.0 / (w * w))
            }
            CompressKind::LayerLinear => (1.0 - (sigma - r) / w, -1.0 / w, 0.0),
            CompressKind::LayerQuartic => {
                let q = (sigma - r) / w;
                (
                    1.0 - q.powi(4),
                    -4.0 * q.powi(3) / w,
                    -12.0 * q * q / (w * w),
                )
            }
        }
    }

    /// Full evaluation at σ = |ρ| on the right-hand branch.
    fn eval_right(&self, sigma: f64) -> MapPoint {
        let (omega, d_omega, d2_omega) = self.compress_at(sigma);
        let offset = sigma - self.anchor;
        let l = omega - offset * d_omega;
        let d_l = -offset * d2_omega;
        let a = omega * omega / l;
        let d_a = 2.0 * omega * d_omega / l - a * d_l / l;
        let r_omega = self.anchor * omega + offset;

        let c = self.boost.c;
        let (h, d_h, c_plus, c_minus, one_minus_h_over_omega2) = match self.boost.kind {
            BoostKind::Zero => (0.0, 0.0, a, -a, 1.0 / (omega * omega)),
            BoostKind::AdvectionShift | BoostKind::UnitOutgoingLayer => {
                let c = if self.boost.kind == BoostKind::UnitOutgoingLayer {
                    1.0
                } else {
                    c
                };
                // 1 - H = C·a, 1 + H = 2 - C·a
                (
                    1.0 - c * a,
                    -c * d_a,
                    1.0 / c,
                    -a / (2.0 - c * a),
                    c / l,
                )
            }
            BoostKind::GlobalHyperboloid => {
                let s = self.compress.s;
                let den = s * s + sigma * sigma;
                let sp = s + sigma;
                let sm = s - sigma;
                (
                    2.0 * s * sigma / den,
                    2.0 * s * (s * s - sigma * sigma) / (den * den),
                    sp * sp / (2.0 * s * s),
                    -sm * sm / (2.0 * s * s),
                    4.0 * s.powi(4) / (den * sp * sp),
                )
            }
            BoostKind::TranslatedHyperboloid => {
                let r = self.compress.r;
                if sigma <= r {
                    (0.0, 0.0, a, -a, 1.0 / (omega * omega))
                } else {
                    // q = (x - R)·Ω, e = sqrt(q² + C²Ω²) = Ω·sqrt((x-R)² + C²)
                    let q = offset - (r - self.anchor) * omega;
                    let e = (q * q + c * c * omega * omega).sqrt();
                    (
                        q / e,
                        c * c * omega * l / e.powi(3),
                        e * (e + q) / (l * c * c),
                        -omega * omega * e / (l * (e + q)),
                        c * c / (e * (e + q)),
                    )
                }
            }
        };
        MapPoint {
            omega,
            d_omega,
            d2_omega,
            l,
            d_l,
            h,
            d_h,
            a,
            d_a,
            c_plus,
            c_minus,
            one_minus_h_over_omega2,
            r_omega,
        }
    }

    /// Evaluates every map quantity at ρ, mirroring onto ρ < 0.
    pub fn eval(&self, rho: f64) -> Result<MapPoint> {
        self.check(rho)?;
        Ok(self.eval_unchecked(rho))
    }

    pub(crate) fn eval_unchecked(&self, rho: f64) -> MapPoint {
        if rho >= 0.0 {
            return self.eval_right(rho);
        }
        let p = self.eval_right(-rho);
        MapPoint {
            d_omega: -p.d_omega,
            d_l: -p.d_l,
            h: -p.h,
            d_a: -p.d_a,
            c_plus: -p.c_minus,
            c_minus: -p.c_plus,
            r_omega: -p.r_omega,
            // (1 + H)/Ω² on the right branch is not needed; the mirrored side
            // compactifies toward -S where 1 + H vanishes.
            ..p
        }
    }

    /// (Ω, dΩ/dρ, L, H) at ρ.
    pub fn eval_map(&self, rho: f64) -> Result<(f64, f64, f64, f64)> {
        let p = self.eval(rho)?;
        Ok((p.omega, p.d_omega, p.l, p.h))
    }

    /// Physical coordinate x for a compactified coordinate ρ. Returns ±∞ at
    /// the zero set of Ω.
    pub fn x_of_rho(&self, rho: f64) -> Result<f64> {
        self.check(rho)?;
        let sigma = rho.abs();
        let (omega, _, _) = self.compress_at(sigma);
        let x = if omega <= 0.0 {
            f64::INFINITY
        } else {
            self.anchor + (sigma - self.anchor) / omega
        };
        Ok(if rho < 0.0 { -x } else { x })
    }

    /// Inverse of [`x_of_rho`](Self::x_of_rho) by bisection.
    pub fn rho_of_x(&self, x: f64) -> Result<f64> {
        let (mut lo, mut hi) = self.domain;
        let xlo = self.x_of_rho(lo)?;
        let xhi = self.x_of_rho(hi)?;
        if x < xlo || x > xhi {
            return Err(Error::Domain(format!("x = {x} outside [{xlo}, {xhi}]")));
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid == lo || mid == hi {
                break;
            }
            if self.x_of_rho(mid)? < x {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Outgoing and incoming characteristic speeds (c₊, c₋) of a system
    /// whose asymptotic (untransformed) speed is `asymptotic_speed`.
    ///
    /// Only unit asymptotic speed has a regular factorization: any other value
    /// violates `1 - H ~ O(Ω²)` for the shipped boosts.
    pub fn char_speeds(&self, rho: f64, asymptotic_speed: f64) -> Result<(f64, f64)> {
        if asymptotic_speed != 1.0 && self.compress.kind.is_compactifying() {
            return Err(Error::Config(format!(
                "no regular factorization for asymptotic speed {asymptotic_speed}; \
                 compactifying boosts require unit speed"
            )));
        }
        let p = self.eval(rho)?;
        Ok((p.c_plus, p.c_minus))
    }

    /// Ricci scalar of the conformal metric of the radial layer,
    /// `6Ω(ΩL' - 2LΩ')/(ρ²L³)`.
    pub fn ricci_scalar(&self, rho: f64) -> Result<f64> {
        if self.compress.kind != CompressKind::LayerQuartic {
            return Err(Error::Config(format!(
                "Ricci scalar is defined for the layer_quartic map only, got {:?}",
                self.compress.kind
            )));
        }
        if rho == 0.0 {
            return Err(Error::Domain("Ricci scalar is singular at ρ = 0".into()));
        }
        let p = self.eval(rho)?;
        Ok(6.0 * p.omega * (p.omega * p.d_l - 2.0 * p.l * p.d_omega) / (rho * rho * p.l.powi(3)))
    }

    /// Largest |c±| over `n` evenly spaced samples of the domain.
    pub fn max_speed(&self, samples: usize) -> f64 {
        let (lo, hi) = self.domain;
        (0..=samples)
            .map(|i| {
                let p = self.eval_unchecked(lo + (hi - lo) * i as f64 / samples as f64);
                p.c_plus.abs().max(p.c_minus.abs())
            })
            .fold(0.0, f64::max)
    }
}

/// Outcome of [`check_regularity`].
#[derive(Debug, Clone, PartialEq)]
pub struct RegularityReport {
    pub passed: bool,
    /// Limit of (1 - H)/Ω² at ρ = S, from the factored form.
    pub limit: f64,
    /// Limit of the outgoing speed Ω²/((1 - H)L) at ρ = S.
    pub outgoing_speed_limit: f64,
    /// Largest |(1 - H)/Ω² - limit| over the approach samples, with the
    /// ratio formed naively from H and Ω.
    pub max_deviation: f64,
}

/// Checks `1 - H ~ O(Ω²)` near null infinity: the naive quotient
/// (1 - H)/Ω² evaluated on a sequence approaching ρ = S must converge to the
/// finite closed-form limit.
pub fn check_regularity(map: &CoordinateMap) -> RegularityReport {
    let fail = RegularityReport {
        passed: false,
        limit: f64::INFINITY,
        outgoing_speed_limit: 0.0,
        max_deviation: f64::INFINITY,
    };
    if !map.compress.kind.is_compactifying() {
        return fail;
    }
    let s = map.s();
    let at_s = map.eval_right(s);
    let limit = at_s.one_minus_h_over_omega2;
    if !limit.is_finite() || at_s.omega != 0.0 {
        return fail;
    }
    let width = s - if map.compress.kind.is_layer() { map.r() } else { 0.0 };
    let mut devs = Vec::new();
    for k in 1..=4 {
        let rho = s - width * 10f64.powi(-k);
        let p = map.eval_right(rho);
        let naive = (1.0 - p.h) / (p.omega * p.omega);
        // cancellation in 1 - H costs about ε/Ω²
        let floor = 64.0 * f64::EPSILON * limit.abs().max(1.0) / (p.omega * p.omega);
        devs.push(((naive - limit).abs(), floor));
    }
    let max_deviation = devs.iter().map(|d| d.0).fold(0.0, f64::max);
    let shrinking = devs
        .windows(2)
        .all(|w| w[1].0 <= w[0].0 * 1.0001 || w[1].0 < w[1].1);
    let devs: Vec<f64> = devs.into_iter().map(|d| d.0).collect();
    let last = *devs.last().unwrap();
    RegularityReport {
        passed: shrinking && last < 1e-3 * limit.abs().max(1.0),
        limit,
        outgoing_speed_limit: at_s.c_plus,
        max_deviation,
    }
}

/// Asymptotic applicability condition for a 2×2 system `∂t u = A ∂x u`:
/// `1 + a11 + a22 - a12·a21 + a11·a22 = 0`.
pub fn check_system_compactifiable(a: [[f64; 2]; 2]) -> bool {
    compactifiability_residual(a).abs() < 1e-12
}

pub fn compactifiability_residual(a: [[f64; 2]; 2]) -> f64 {
    1.0 + a[0][0] + a[1][1] - a[0][1] * a[1][0] + a[0][0] * a[1][1]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn quad(r: f64, s: f64) -> CoordinateMap {
        CoordinateMap::unit_outgoing_layer(CompressKind::LayerQuadratic, r, s, -s).unwrap()
    }

    fn quartic(r: f64, s: f64) -> CoordinateMap {
        CoordinateMap::unit_outgoing_layer(CompressKind::LayerQuartic, r, s, 0.0).unwrap()
    }

    #[test]
    fn global_hyperboloid_values() {
        let m = CoordinateMap::global_hyperboloid(10.0).unwrap();
        let (om, _, l, h) = m.eval_map(0.0).unwrap();
        assert_abs_diff_eq!(om, 0.5);
        assert_abs_diff_eq!(l, 0.5);
        assert_abs_diff_eq!(h, 0.0);
        let (om, _, _, h) = m.eval_map(10.0).unwrap();
        assert_eq!(om, 0.0);
        assert_abs_diff_eq!(h, 1.0);
    }

    #[test]
    fn layer_values() {
        let (om, ..) = quad(5.0, 10.0).eval_map(7.5).unwrap();
        assert_abs_diff_eq!(om, 0.75, epsilon = 1e-15);
        assert_eq!(quartic(10.0, 20.0).eval_map(10.0).unwrap(), (1.0, 0.0, 1.0, 0.0));
    }

    #[test]
    fn out_of_domain() {
        let m = quad(5.0, 10.0);
        assert!(matches!(m.eval_map(10.5), Err(Error::Domain(_))));
        assert!(matches!(m.x_of_rho(-11.0), Err(Error::Domain(_))));
    }

    #[test]
    fn x_of_rho_examples() {
        let m = CoordinateMap::advection_rational(1.0).unwrap();
        assert_abs_diff_eq!(m.x_of_rho(10.0 / 11.0).unwrap(), 10.0, epsilon = 1e-12);
        assert_eq!(m.x_of_rho(1.0).unwrap(), f64::INFINITY);
        assert_eq!(quad(5.0, 10.0).x_of_rho(5.0).unwrap(), 5.0);
        assert_eq!(quad(5.0, 10.0).x_of_rho(-5.0).unwrap(), -5.0);
    }

    #[test]
    fn quartic_layer_observer_radius() {
        // 19.9/(1 - 0.99⁴); the published radius list rounds this to 500
        let x = quartic(10.0, 20.0).x_of_rho(19.9).unwrap();
        assert_abs_diff_eq!(x, 19.9 / (1.0 - 0.99f64.powi(4)), epsilon = 1e-9);
        assert!((x - 500.0).abs() / 500.0 < 0.011, "x = {x}");
        // the smaller radii of the same list
        for (rho, r) in [(19.4, 87.0), (17.86, 29.0)] {
            let x = quartic(10.0, 20.0).x_of_rho(rho).unwrap();
            assert!((x - r).abs() / r < 0.02, "ρ = {rho}: x = {x}");
        }
    }

    #[test]
    fn hyperboloid_speeds() {
        let m = CoordinateMap::global_hyperboloid(10.0).unwrap();
        let (cp, cm) = m.char_speeds(0.0, 1.0).unwrap();
        assert_abs_diff_eq!(cp, 0.5);
        assert_abs_diff_eq!(cm, -0.5);
        let (cp, cm) = m.char_speeds(10.0, 1.0).unwrap();
        assert_abs_diff_eq!(cp, 2.0);
        assert_eq!(cm, 0.0);
        let (cp, cm) = m.char_speeds(-10.0, 1.0).unwrap();
        assert_eq!(cp, 0.0);
        assert_abs_diff_eq!(cm, -2.0);
        assert_abs_diff_eq!(m.max_speed(400), 2.0);
        for i in 0..=40 {
            let rho = -10.0 + 0.5 * i as f64;
            let (cp, cm) = m.char_speeds(rho, 1.0).unwrap();
            assert_abs_diff_eq!(cp, (1.0 + rho / 10.0).powi(2) / 2.0, epsilon = 1e-14);
            assert_abs_diff_eq!(cm, -(1.0 - rho / 10.0).powi(2) / 2.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn speeds_match_naive_formula_away_from_infinity() {
        let maps = [
            CoordinateMap::global_hyperboloid(10.0).unwrap(),
            quad(5.0, 10.0),
            quartic(10.0, 20.0),
            translated(CompressKind::LayerLinear, 3.0),
            translated(CompressKind::LayerQuadratic, 2.0),
        ];
        for m in &maps {
            let (lo, hi) = m.domain;
            for i in 1..50 {
                let rho = lo + (hi - lo) * i as f64 / 50.0;
                let p = m.eval(rho).unwrap();
                let cp = p.omega.powi(2) / (p.l * (1.0 - p.h));
                let cm = p.omega.powi(2) / (p.l * (-1.0 - p.h));
                assert_abs_diff_eq!(p.c_plus, cp, epsilon = 1e-10);
                assert_abs_diff_eq!(p.c_minus, cm, epsilon = 1e-10);
            }
        }
    }

    fn translated(kind: CompressKind, c: f64) -> CoordinateMap {
        CoordinateMap::new(
            CompressSpec { kind, r: 5.0, s: 10.0 },
            BoostSpec {
                kind: BoostKind::TranslatedHyperboloid,
                c,
            },
            (0.0, 10.0),
        )
        .unwrap()
    }

    #[test]
    fn translated_hyperboloid_speed_at_infinity() {
        for c in [1.0, 3.0, 5.0] {
            let m = translated(CompressKind::LayerLinear, c);
            let (cp, cm) = m.char_speeds(10.0, 1.0).unwrap();
            assert_abs_diff_eq!(cp, 2.0 * 25.0 / (c * c), epsilon = 1e-12);
            assert_eq!(cm, 0.0);
            let (cp, cm) = m.char_speeds(5.0, 1.0).unwrap();
            assert_eq!((cp, cm), (1.0, -1.0));
        }
    }

    #[test]
    fn boost_derivative_matches_finite_difference() {
        let maps = [
            CoordinateMap::global_hyperboloid(10.0).unwrap(),
            quad(5.0, 10.0),
            quartic(10.0, 20.0),
            translated(CompressKind::LayerLinear, 3.0),
            CoordinateMap::advection_rational(2.0).unwrap(),
        ];
        let eps = 1e-5;
        for m in &maps {
            let (lo, hi) = m.domain;
            for i in 1..20 {
                let rho = lo + (hi - lo) * (i as f64 + 0.37) / 20.0;
                let p = m.eval(rho).unwrap();
                let hp = m.eval(rho + eps).unwrap();
                let hm = m.eval(rho - eps).unwrap();
                assert_abs_diff_eq!(p.d_h, (hp.h - hm.h) / (2.0 * eps), epsilon = 1e-6);
                assert_abs_diff_eq!(p.d_a, (hp.a - hm.a) / (2.0 * eps), epsilon = 1e-6);
                assert_abs_diff_eq!(p.d_l, (hp.l - hm.l) / (2.0 * eps), epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn regularity_checks() {
        let adv = check_regularity(&CoordinateMap::advection_rational(1.0).unwrap());
        assert!(adv.passed, "{adv:?}");
        assert_abs_diff_eq!(adv.outgoing_speed_limit, 1.0);
        let adv = check_regularity(&CoordinateMap::advection_rational(4.0).unwrap());
        assert_abs_diff_eq!(adv.outgoing_speed_limit, 0.25);
        assert!(check_regularity(&CoordinateMap::global_hyperboloid(10.0).unwrap()).passed);
        assert!(check_regularity(&quad(5.0, 10.0)).passed);
        assert!(check_regularity(&quartic(10.0, 20.0)).passed);
        assert!(check_regularity(&translated(CompressKind::LayerLinear, 3.0)).passed);
        assert!(!check_regularity(&CoordinateMap::identity((0.0, 1.0)).unwrap()).passed);
        // spatial compactification without a time transformation
        let spatial = CoordinateMap::new(
            CompressSpec {
                kind: CompressKind::GlobalRational,
                r: 0.0,
                s: 1.0,
            },
            BoostSpec {
                kind: BoostKind::Zero,
                c: 1.0,
            },
            (0.0, 1.0),
        )
        .unwrap();
        assert!(!check_regularity(&spatial).passed);
    }

    #[test]
    fn system_compactifiability() {
        assert!(check_system_compactifiable([[0.0, 1.0], [1.0, 0.0]]));
        assert!(!check_system_compactifiable([[1.0, 0.0], [0.0, 1.0]]));
        assert_eq!(compactifiability_residual([[1.0, 0.0], [0.0, 1.0]]), 4.0);
        let (eps0, mu0) = (1.0, 1.0);
        let k = -1.0 / (eps0 * mu0);
        assert!(check_system_compactifiable([[0.0, k * mu0], [k * eps0, 0.0]]));
    }

    #[test]
    fn ricci_scalar_values() {
        let m = quartic(10.0, 20.0);
        assert_eq!(m.ricci_scalar(10.0).unwrap(), 0.0);
        assert_eq!(m.ricci_scalar(5.0).unwrap(), 0.0);
        assert_eq!(m.ricci_scalar(20.0).unwrap(), 0.0);
        assert!(matches!(
            quartic(10.0, 20.0).ricci_scalar(0.0),
            Err(Error::Domain(_))
        ));
        assert!(matches!(quad(5.0, 10.0).ricci_scalar(7.0), Err(Error::Config(_))));
    }

    #[test]
    fn ricci_scalar_against_finite_differences() {
        // Ω and L differentiated numerically from Ω alone, L = Ω - ρΩ'
        let (r, s) = (10.0, 20.0);
        let omega = |x: f64| 1.0 - ((x - r) / (s - r)).powi(4);
        let h = 1e-4;
        let d = |f: &dyn Fn(f64) -> f64, x: f64| (f(x + h) - f(x - h)) / (2.0 * h);
        let l = |x: f64| omega(x) - x * d(&omega, x);
        let rho = 15.0;
        let (om, dom, lv, dl) = (omega(rho), d(&omega, rho), l(rho), d(&l, rho));
        let oracle = 6.0 * om * (om * dl - 2.0 * lv * dom) / (rho * rho * lv.powi(3));
        let got = quartic(r, s).ricci_scalar(rho).unwrap();
        assert_abs_diff_eq!(got, oracle, epsilon = 1e-9);
        assert_abs_diff_eq!(got, 0.003_072_702_331_961_59, epsilon = 1e-12);
        // continuity across the interface
        assert!(quartic(r, s).ricci_scalar(10.0 + 1e-6).unwrap().abs() < 1e-12);
    }

    #[test]
    fn interface_smoothness() {
        // one-sided difference quotients of Ω at ρ = R
        let h = 1e-3;
        let q = quad(5.0, 10.0);
        let p0 = q.eval(5.0).unwrap();
        let pr = q.eval(5.0 + h).unwrap();
        assert_abs_diff_eq!(pr.omega, p0.omega, epsilon = 1e-5);
        assert_abs_diff_eq!(pr.d_omega, p0.d_omega, epsilon = 1e-2);
        assert!((pr.d2_omega - q.eval(5.0 - h).unwrap().d2_omega).abs() > 0.07);

        let m = quartic(10.0, 20.0);
        let inner = m.eval(10.0).unwrap();
        let outer = m.eval(10.0 + h).unwrap();
        assert_abs_diff_eq!(outer.d_omega, inner.d_omega, epsilon = 1e-8);
        assert_abs_diff_eq!(outer.d2_omega, inner.d2_omega, epsilon = 1e-6);
        // third derivative: difference of second derivatives over h
        assert!(((outer.d2_omega - inner.d2_omega) / h).abs() < 1e-4);
    }

    #[test]
    fn mirrored_parity() {
        let m = CoordinateMap::global_hyperboloid(10.0).unwrap();
        let q = quad(5.0, 10.0);
        for rho in [0.3, 2.0, 5.5, 7.0, 9.9] {
            for map in [&m, &q] {
                let p = map.eval(rho).unwrap();
                let n = map.eval(-rho).unwrap();
                assert_eq!(n.omega, p.omega);
                assert_eq!(n.h, -p.h);
                assert_eq!(n.c_plus, -p.c_minus);
            }
        }
    }

    #[test]
    fn invalid_configurations() {
        let bad = CoordinateMap::new(
            CompressSpec {
                kind: CompressKind::LayerQuadratic,
                r: 10.0,
                s: 10.0,
            },
            BoostSpec {
                kind: BoostKind::UnitOutgoingLayer,
                c: 1.0,
            },
            (0.0, 10.0),
        );
        assert!(matches!(bad, Err(Error::Config(_))));
        let bad = CoordinateMap::new(
            CompressSpec {
                kind: CompressKind::LayerQuadratic,
                r: 5.0,
                s: 10.0,
            },
            BoostSpec {
                kind: BoostKind::GlobalHyperboloid,
                c: 1.0,
            },
            (0.0, 10.0),
        );
        assert!(matches!(bad, Err(Error::Config(_))));
        assert!(matches!(
            CoordinateMap::global_hyperboloid(10.0)
                .unwrap()
                .char_speeds(0.0, 2.0),
            Err(Error::Config(_))
        ));
    }
}
