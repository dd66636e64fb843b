//! Method-of-lines right-hand sides for the transformed equations.
//!
//! All coefficients are assembled from the regular quantities returned by
//! [`CoordinateMap::eval`]: with `a = Ω²/L` and the characteristic speeds
//! `c± = a/(±1 - H)`, the factors that carry `1/(1 - H²)` reduce to
//!
//! ```text
//! a/(1 - H²)  = (c₊ - c₋)/2
//! a²/(1 - H²) = -c₊c₋
//! Ω²/(1 - H²) = L(c₊ - c₋)/2
//! ```
//!
//! which stay finite at null infinity.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::chebspec::{CharacteristicSystem, MultiDomainLayout};
use crate::coordmap::{check_regularity, CompressKind, CoordinateMap, MapPoint};
use crate::error::{config_err, Error, Result};
use crate::fd1d::StencilSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    /// ∂t u + ∂x u = 0.
    Advection,
    /// First-order wave system in v = ∂t u, w = ∂x u.
    Wave1d,
    /// ∂t E = -∂x H / ε, ∂t H = -∂x E / μ.
    Maxwell1d,
    /// Radial mode of the n-dimensional (semilinear) wave equation for the
    /// rescaled field v = r^((n-1)/2) u, in first-order form {v, Π, Φ}.
    RadialConformalWave,
}

impl ModelFamily {
    pub fn field_names(self) -> &'static [&'static str] {
        match self {
            ModelFamily::Advection => &["u"],
            ModelFamily::Wave1d => &["v", "w"],
            ModelFamily::Maxwell1d => &["E", "H"],
            ModelFamily::RadialConformalWave => &["v", "Pi", "Phi"],
        }
    }
}

/// A material coefficient profile in the physical coordinate x: the vacuum
/// value 1 plus an optional compactly supported bump
/// `amplitude·(1 - ((x - center)/width)²)⁴`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[derive(Default)]
pub enum MaterialProfile {
    #[default]
    Vacuum,
    Bump {
        amplitude: f64,
        center: f64,
        width: f64,
    },
}


impl MaterialProfile {
    pub fn value(&self, x: f64) -> f64 {
        match *self {
            MaterialProfile::Vacuum => 1.0,
            MaterialProfile::Bump {
                amplitude,
                center,
                width,
            } => {
                let z = (x - center) / width;
                if z.abs() < 1.0 {
                    1.0 + amplitude * (1.0 - z * z).powi(4)
                } else {
                    1.0
                }
            }
        }
    }

    /// Closed interval outside which the profile is vacuum.
    pub fn support(&self) -> Option<(f64, f64)> {
        match *self {
            MaterialProfile::Vacuum => None,
            MaterialProfile::Bump { center, width, .. } => {
                Some((center - width.abs(), center + width.abs()))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Medium {
    #[serde(default)]
    pub permittivity: MaterialProfile,
    #[serde(default)]
    pub permeability: MaterialProfile,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadialParams {
    /// Spatial dimension.
    pub n: u32,
    /// Angular mode index.
    pub l: u32,
    /// Power of the focusing nonlinearity.
    pub p: u32,
    pub nonlinear: bool,
}

impl Default for RadialParams {
    fn default() -> Self {
        Self {
            n: 3,
            l: 0,
            p: 3,
            nonlinear: false,
        }
    }
}

impl RadialParams {
    /// (n-1)(n-3)/4 + l(l+n-2): the coefficient of 1/r² in the potential.
    pub fn potential(&self) -> f64 {
        let n = self.n as f64;
        let l = self.l as f64;
        (n - 1.0) * (n - 3.0) / 4.0 + l * (l + n - 2.0)
    }

    /// k in the source term v^p r^(-k), k = (n-1)(p-1)/2.
    pub fn source_decay(&self) -> f64 {
        (self.n as f64 - 1.0) * (self.p as f64 - 1.0) / 2.0
    }

    pub fn critical_power(&self) -> f64 {
        1.0 + 4.0 / (self.n as f64 - 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: ModelFamily,
    pub map: CoordinateMap,
    #[serde(default)]
    pub medium: Medium,
    #[serde(default)]
    pub radial: RadialParams,
}

/// Closed-form solution of the transformed advection problem for the map
/// `ρ = x/(1+x)` with the advection shift: `u = -sin(2π(CΩ + τ))`.
pub fn advection_exact(c: f64, omega: f64, tau: f64) -> f64 {
    -(2.0 * std::f64::consts::PI * (c * omega + tau)).sin()
}

fn advection_exact_dtau(c: f64, omega: f64, tau: f64) -> f64 {
    -2.0 * std::f64::consts::PI * (2.0 * std::f64::consts::PI * (c * omega + tau)).cos()
}

/// Treatment of the first node of the domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InnerBoundary {
    /// Pure outflow (or the domain starts at -S): nothing is imposed.
    Outflow,
    /// Advection inflow carrying the closed-form solution.
    ExactInflow { c: f64 },
    /// Zero inflow for advection.
    ZeroInflow,
    /// v = Π = 0 held fixed: regularity at the origin for v = r·u, or a
    /// reflecting inner wall.
    Reflecting,
}

#[derive(Debug, Clone)]
enum Coeffs {
    Advection {
        speed: Vec<f64>,
    },
    Wave1d {
        k: Vec<f64>,
        h: Vec<f64>,
    },
    Maxwell1d {
        kappa: Vec<f64>,
        h: Vec<f64>,
        eps: Vec<f64>,
        mu: Vec<f64>,
    },
    Radial(RadialCoeffs),
}

#[derive(Debug, Clone)]
struct RadialCoeffs {
    /// H(c₊ - c₋)
    adv: Vec<f64>,
    /// -c₊c₋
    flux: Vec<f64>,
    /// H'(c₊ - c₋)/2
    damp_pi: Vec<f64>,
    /// a'(c₊ - c₋)/2
    damp_phi: Vec<f64>,
    /// L(c₊ - c₋)/2 · potential/(rΩ)²
    potential: Vec<f64>,
    /// L(c₊ - c₋)/2 · Ω^(k-2)/(rΩ)^k, zero when the source is off
    source: Vec<f64>,
    p: i32,
}

/// A model bound to a set of nodes, with every coefficient precomputed.
#[derive(Debug, Clone)]
pub struct Model {
    pub spec: ModelSpec,
    pub nodes: Vec<f64>,
    pub inner: InnerBoundary,
    points: Vec<MapPoint>,
    coeffs: Coeffs,
}

/// Something that differentiates a nodal field in ρ.
pub trait SpatialDerivative {
    fn d1_into(&self, f: &[f64], out: &mut [f64]) -> Result<()>;
}

impl SpatialDerivative for StencilSet {
    fn d1_into(&self, f: &[f64], out: &mut [f64]) -> Result<()> {
        self.apply_into(f, out)
    }
}

impl SpatialDerivative for MultiDomainLayout {
    fn d1_into(&self, f: &[f64], out: &mut [f64]) -> Result<()> {
        self.apply_d1(f, out)
    }
}

impl Model {
    pub fn new(spec: ModelSpec, nodes: Vec<f64>, inner: InnerBoundary) -> Result<Self> {
        let map = &spec.map;
        for &rho in &nodes {
            if !map.contains(rho) {
                return Err(Error::Domain(format!(
                    "node ρ = {rho} outside the map domain {:?}",
                    map.domain
                )));
            }
        }
        let points: Vec<MapPoint> = nodes.iter().map(|&r| map.eval_unchecked(r)).collect();
        let s = map.s();
        let is_end = |rho: f64| rho.abs() == s;

        if spec.family != ModelFamily::Advection {
            if let Some((rho, p)) = nodes
                .iter()
                .zip(&points)
                .find(|(r, p)| !is_end(**r) && !(p.h.abs() < 1.0))
            {
                return config_err(format!(
                    "|H| = {} >= 1 at ρ = {rho}: τ is not a time function",
                    p.h.abs()
                ));
            }
        }

        let coeffs = match spec.family {
            ModelFamily::Advection => {
                if map.compress.kind.is_compactifying() && !check_regularity(map).passed {
                    return config_err(
                        "advection needs a regular compactification (1 - H ~ O(Ω²))",
                    );
                }
                Coeffs::Advection {
                    speed: points.iter().map(|p| p.c_plus).collect(),
                }
            }
            ModelFamily::Wave1d => {
                check_two_sided(map)?;
                Coeffs::Wave1d {
                    k: points.iter().map(|p| 0.5 * (p.c_plus - p.c_minus)).collect(),
                    h: points.iter().map(|p| p.h).collect(),
                }
            }
            ModelFamily::Maxwell1d => {
                check_two_sided(map)?;
                check_medium(map, &spec.medium)?;
                let mut kappa = Vec::with_capacity(nodes.len());
                let mut eps = Vec::with_capacity(nodes.len());
                let mut mu = Vec::with_capacity(nodes.len());
                for (&rho, p) in nodes.iter().zip(&points) {
                    let x = map.x_of_rho(rho)?;
                    let (e, m) = if x.is_finite() {
                        (
                            spec.medium.permittivity.value(x),
                            spec.medium.permeability.value(x),
                        )
                    } else {
                        (1.0, 1.0)
                    };
                    let em = e * m;
                    let k = if em == 1.0 {
                        0.5 * (p.c_plus - p.c_minus)
                    } else {
                        if !(em > p.h * p.h) {
                            return config_err(format!(
                                "εμ = {em} <= H² at ρ = {rho}: system is not hyperbolic"
                            ));
                        }
                        p.a / (em - p.h * p.h)
                    };
                    kappa.push(k);
                    eps.push(e);
                    mu.push(m);
                }
                Coeffs::Maxwell1d {
                    kappa,
                    h: points.iter().map(|p| p.h).collect(),
                    eps,
                    mu,
                }
            }
            ModelFamily::RadialConformalWave => {
                Coeffs::Radial(radial_coeffs(&spec, &nodes, &points, inner)?)
            }
        };
        Ok(Self {
            spec,
            nodes,
            inner,
            points,
            coeffs,
        })
    }

    pub fn family(&self) -> ModelFamily {
        self.spec.family
    }

    pub fn field_names(&self) -> &'static [&'static str] {
        self.spec.family.field_names()
    }

    pub fn n_fields(&self) -> usize {
        self.field_names().len()
    }

    /// The m-th τ-derivative of the advection data at distance `depth`
    /// outside the inflow boundary. The speed is constant, so this is the
    /// inflow data carried along the characteristic: `u(ρ₀ - δ, τ) = b(τ + Cδ)`.
    pub fn inflow_data(&self, tau: f64, depth: f64, m: u32) -> Option<f64> {
        match self.inner {
            InnerBoundary::ExactInflow { c } => {
                let two_pi = 2.0 * std::f64::consts::PI;
                let phase = two_pi * (c * self.points[0].omega + tau + c * depth)
                    + m as f64 * std::f64::consts::FRAC_PI_2;
                Some(-two_pi.powi(m as i32) * phase.sin())
            }
            InnerBoundary::ZeroInflow => Some(0.0),
            _ => None,
        }
    }

    pub fn point(&self, i: usize) -> &MapPoint {
        &self.points[i]
    }

    /// Largest |characteristic speed| over the nodes.
    pub fn max_speed(&self) -> f64 {
        (0..self.nodes.len())
            .map(|i| {
                let mut w = [0.0; 3];
                let mut s = [0.0; 3];
                let u = [0.0; 3];
                self.decompose(i, &u[..self.n_fields()], &mut w, &mut s);
                s.iter().map(|c| c.abs()).fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }

    /// Principal matrix M of `∂τ U = M ∂ρ U + ...` at node i, over the
    /// fields that carry derivatives (for the radial model: Π and Φ).
    pub fn principal_matrix(&self, i: usize) -> Vec<Vec<f64>> {
        match &self.coeffs {
            Coeffs::Advection { speed } => vec![vec![-speed[i]]],
            Coeffs::Wave1d { k, h } => {
                vec![vec![-k[i] * h[i], k[i]], vec![k[i], -k[i] * h[i]]]
            }
            Coeffs::Maxwell1d { kappa, h, eps, mu } => vec![
                vec![-kappa[i] * h[i], -kappa[i] * mu[i]],
                vec![-kappa[i] * eps[i], -kappa[i] * h[i]],
            ],
            Coeffs::Radial(c) => vec![vec![-c.adv[i], c.flux[i]], vec![1.0, 0.0]],
        }
    }

    /// Evaluates the time derivative of every field.
    ///
    /// `deriv` holds one scratch array per field and is overwritten with ∂ρ
    /// of the fields.
    pub fn rhs<D: SpatialDerivative + ?Sized>(
        &self,
        d: &D,
        tau: f64,
        u: &[Vec<f64>],
        deriv: &mut [Vec<f64>],
        out: &mut [Vec<f64>],
    ) -> Result<()> {
        let n = self.nodes.len();
        match &self.coeffs {
            Coeffs::Advection { speed } => {
                d.d1_into(&u[0], &mut deriv[0])?;
                for i in 0..n {
                    out[0][i] = -speed[i] * deriv[0][i];
                }
            }
            Coeffs::Wave1d { k, h } => {
                d.d1_into(&u[0], &mut deriv[0])?;
                d.d1_into(&u[1], &mut deriv[1])?;
                for i in 0..n {
                    let (dv, dw) = (deriv[0][i], deriv[1][i]);
                    out[0][i] = k[i] * (-h[i] * dv + dw);
                    out[1][i] = k[i] * (dv - h[i] * dw);
                }
            }
            Coeffs::Maxwell1d { kappa, h, eps, mu } => {
                d.d1_into(&u[0], &mut deriv[0])?;
                d.d1_into(&u[1], &mut deriv[1])?;
                for i in 0..n {
                    let (de, dh) = (deriv[0][i], deriv[1][i]);
                    out[0][i] = -kappa[i] * (h[i] * de + mu[i] * dh);
                    out[1][i] = -kappa[i] * (eps[i] * de + h[i] * dh);
                }
            }
            Coeffs::Radial(c) => {
                d.d1_into(&u[1], &mut deriv[1])?;
                d.d1_into(&u[2], &mut deriv[2])?;
                for i in 0..n {
                    let (v, pi, phi) = (u[0][i], u[1][i], u[2][i]);
                    let (dpi, dphi) = (deriv[1][i], deriv[2][i]);
                    out[0][i] = pi;
                    out[1][i] = -c.adv[i] * dpi + c.flux[i] * dphi - c.damp_pi[i] * pi
                        + c.damp_phi[i] * phi
                        - c.potential[i] * v
                        + c.source[i] * v.powi(c.p);
                    out[2][i] = dpi;
                }
            }
        }
        self.apply_inner_boundary(tau, out);
        for f in out.iter() {
            if let Some(i) = f.iter().position(|x| !x.is_finite()) {
                return Err(Error::Domain(format!(
                    "non-finite right-hand side at ρ = {} (τ = {tau})",
                    self.nodes[i]
                )));
            }
        }
        Ok(())
    }

    /// Boundary values imposed on the state itself after each full step.
    pub fn impose_state(&self, tau: f64, u: &mut [Vec<f64>]) {
        match self.inner {
            InnerBoundary::ExactInflow { c } => {
                u[0][0] = advection_exact(c, self.points[0].omega, tau);
            }
            InnerBoundary::ZeroInflow => u[0][0] = 0.0,
            InnerBoundary::Reflecting => {
                u[0][0] = 0.0;
                u[1][0] = 0.0;
            }
            InnerBoundary::Outflow => {}
        }
    }

    fn apply_inner_boundary(&self, tau: f64, out: &mut [Vec<f64>]) {
        match self.inner {
            InnerBoundary::ExactInflow { c } => {
                out[0][0] = advection_exact_dtau(c, self.points[0].omega, tau);
            }
            InnerBoundary::ZeroInflow => out[0][0] = 0.0,
            InnerBoundary::Reflecting => {
                out[0][0] = 0.0;
                out[1][0] = 0.0;
            }
            InnerBoundary::Outflow => {}
        }
    }
}

fn check_two_sided(map: &CoordinateMap) -> Result<()> {
    let s = map.s();
    if map.domain != (-s, s) {
        return config_err(format!(
            "1D systems are posed on the whole line: domain must be [-S, S] = [{}, {s}], got {:?}",
            -s, map.domain
        ));
    }
    Ok(())
}

fn check_medium(map: &CoordinateMap, medium: &Medium) -> Result<()> {
    // Material variation must stay inside the untransformed region.
    let limit = if map.compress.kind.is_layer() {
        map.r()
    } else {
        f64::INFINITY
    };
    for prof in [medium.permittivity, medium.permeability] {
        if let Some((lo, hi)) = prof.support() {
            if lo < -limit || hi > limit {
                return config_err(format!(
                    "ε or μ varies on [{lo}, {hi}], which reaches into the layer beyond |x| = {limit}"
                ));
            }
        }
        if let MaterialProfile::Bump { amplitude, .. } = prof {
            if !(1.0 + amplitude > 0.0) {
                return config_err("material coefficients must stay positive");
            }
        }
    }
    Ok(())
}

fn radial_coeffs(
    spec: &ModelSpec,
    nodes: &[f64],
    points: &[MapPoint],
    inner: InnerBoundary,
) -> Result<RadialCoeffs> {
    let map = &spec.map;
    let rp = spec.radial;
    if rp.n < 2 {
        return config_err(format!("spatial dimension must be at least 2, got {}", rp.n));
    }
    if rp.n.is_multiple_of(2) {
        return config_err("even spatial dimensions are not supported");
    }
    if map.domain.0 < 0.0 {
        return config_err("radial domain must lie in ρ >= 0");
    }
    if map.compress.kind.is_compactifying() && map.domain.1 != map.s() {
        return config_err("radial domain must extend to null infinity ρ = S");
    }
    if rp.n != 3 && map.compress.kind != CompressKind::GlobalHyperboloid {
        return config_err("dimensions other than 3 are supported with the global_hyperboloid map only");
    }
    if map.compress.kind.is_compactifying() && map.anchor != 0.0 {
        return config_err("radial maps must use r = ρ/Ω (anchor 0)");
    }
    let potential = rp.potential();
    let k = rp.source_decay();
    if rp.nonlinear {
        if (rp.p as f64) < rp.critical_power() {
            return config_err(format!(
                "p = {} is below the critical power {}: the compactified source is singular",
                rp.p,
                rp.critical_power()
            ));
        }
        if rp.l != 0 {
            return config_err("the nonlinear source couples modes; only l = 0 is supported");
        }
    }
    let at_origin = map.domain.0 == 0.0;
    if at_origin && (potential != 0.0 || rp.n != 3) {
        return config_err("modes with a 1/r² potential need an inner radius ρ > 0");
    }
    if at_origin && inner != InnerBoundary::Reflecting {
        return config_err("a radial domain starting at ρ = 0 needs the regularity condition");
    }

    let mut c = RadialCoeffs {
        adv: Vec::with_capacity(nodes.len()),
        flux: Vec::new(),
        damp_pi: Vec::new(),
        damp_phi: Vec::new(),
        potential: Vec::new(),
        source: Vec::new(),
        p: rp.p as i32,
    };
    for (&rho, p) in nodes.iter().zip(points) {
        let diff = p.c_plus - p.c_minus;
        let g = 0.5 * p.l * diff;
        c.adv.push(p.h * diff);
        c.flux.push(-p.c_plus * p.c_minus);
        c.damp_pi.push(0.5 * p.d_h * diff);
        c.damp_phi.push(0.5 * p.d_a * diff);
        let r_omega = p.r_omega;
        if rho == 0.0 {
            // v = r·u vanishes like ρ: both terms have finite limit zero
            c.potential.push(0.0);
            c.source.push(0.0);
        } else {
            c.potential.push(g * potential / (r_omega * r_omega));
            c.source.push(if rp.nonlinear {
                g * p.omega.powf(k - 2.0) / r_omega.powf(k)
            } else {
                0.0
            });
        }
    }
    Ok(c)
}

impl CharacteristicSystem for Model {
    fn n_fields(&self) -> usize {
        self.field_names().len()
    }

    fn decompose(&self, i: usize, u: &[f64], w: &mut [f64], s: &mut [f64]) {
        let p = &self.points[i];
        match &self.coeffs {
            Coeffs::Advection { speed } => {
                w[0] = u[0];
                s[0] = speed[i];
            }
            Coeffs::Wave1d { .. } => {
                w[0] = u[0] - u[1];
                s[0] = p.c_plus;
                w[1] = u[0] + u[1];
                s[1] = p.c_minus;
            }
            Coeffs::Maxwell1d { kappa, h, eps, mu } => {
                let (se, sm) = (eps[i].sqrt(), mu[i].sqrt());
                w[0] = se * u[0] + sm * u[1];
                w[1] = se * u[0] - sm * u[1];
                if eps[i] * mu[i] == 1.0 {
                    s[0] = p.c_plus;
                    s[1] = p.c_minus;
                } else {
                    let root = (eps[i] * mu[i]).sqrt();
                    s[0] = kappa[i] * (h[i] + root);
                    s[1] = kappa[i] * (h[i] - root);
                }
            }
            Coeffs::Radial(_) => {
                w[0] = u[0];
                s[0] = 0.0;
                w[1] = u[1] + p.c_minus * u[2];
                s[1] = p.c_plus;
                w[2] = u[1] + p.c_plus * u[2];
                s[2] = p.c_minus;
            }
        }
    }

    fn compose(&self, i: usize, w: &[f64], u: &mut [f64]) {
        let p = &self.points[i];
        match &self.coeffs {
            Coeffs::Advection { .. } => u[0] = w[0],
            Coeffs::Wave1d { .. } => {
                u[0] = 0.5 * (w[0] + w[1]);
                u[1] = 0.5 * (w[1] - w[0]);
            }
            Coeffs::Maxwell1d { eps, mu, .. } => {
                u[0] = 0.5 * (w[0] + w[1]) / eps[i].sqrt();
                u[1] = 0.5 * (w[0] - w[1]) / mu[i].sqrt();
            }
            Coeffs::Radial(_) => {
                u[0] = w[0];
                let phi = (w[2] - w[1]) / (p.c_plus - p.c_minus);
                u[2] = phi;
                u[1] = w[1] - p.c_minus * phi;
            }
        }
    }
}

/// An initial profile, as a function of ρ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Profile {
    Zero,
    /// `amplitude·exp(-((ρ - center)/width)²)`.
    Gaussian {
        amplitude: f64,
        center: f64,
        width: f64,
    },
    /// `amplitude·ρ·exp(-(ρ/width)²)`: r·u for a Gaussian u centered at the
    /// origin, as long as the data sits where r = ρ.
    RadialGaussian { amplitude: f64, width: f64 },
    /// Closed-form advection solution at τ = 0.
    AdvectionExact,
}

impl Profile {
    pub fn value(&self, map: &CoordinateMap, rho: f64) -> f64 {
        match *self {
            Profile::Zero => 0.0,
            Profile::Gaussian {
                amplitude,
                center,
                width,
            } => amplitude * (-((rho - center) / width).powi(2)).exp(),
            Profile::RadialGaussian { amplitude, width } => {
                amplitude * rho * (-(rho / width).powi(2)).exp()
            }
            Profile::AdvectionExact => {
                advection_exact(map.boost.c, map.eval_unchecked(rho).omega, 0.0)
            }
        }
    }

    pub fn derivative(&self, map: &CoordinateMap, rho: f64) -> f64 {
        match *self {
            Profile::Zero => 0.0,
            Profile::Gaussian {
                amplitude,
                center,
                width,
            } => {
                let z = (rho - center) / width;
                -2.0 * z / width * amplitude * (-z * z).exp()
            }
            Profile::RadialGaussian { amplitude, width } => {
                let z2 = (rho / width).powi(2);
                amplitude * (1.0 - 2.0 * z2) * (-z2).exp()
            }
            Profile::AdvectionExact => {
                let p = map.eval_unchecked(rho);
                let c = map.boost.c;
                -2.0 * std::f64::consts::PI
                    * c
                    * p.d_omega
                    * (2.0 * std::f64::consts::PI * c * p.omega).cos()
            }
        }
    }
}

/// Initial data: one profile per named field. For the radial model Φ is
/// always the exact ρ-derivative of the v profile, and `outgoing` sets
/// Π = -Φ (a purely right-moving pulse in the flat interior).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialData {
    #[serde(flatten)]
    pub fields: BTreeMap<String, Profile>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub outgoing: bool,
}

impl InitialData {
    pub fn evaluate(&self, model: &Model) -> Result<Vec<Vec<f64>>> {
        let names = model.field_names();
        for key in self.fields.keys() {
            if !names.contains(&key.as_str()) {
                return config_err(format!(
                    "initial data for unknown field '{key}'; {:?} has fields {names:?}",
                    model.family()
                ));
            }
        }
        let map = &model.spec.map;
        let profile = |name: &str| self.fields.get(name).copied().unwrap_or(Profile::Zero);
        let sample = |prof: Profile| -> Vec<f64> {
            model.nodes.iter().map(|&r| prof.value(map, r)).collect()
        };
        let mut u: Vec<Vec<f64>> = names.iter().map(|n| sample(profile(n))).collect();
        if model.family() == ModelFamily::RadialConformalWave {
            if self.fields.contains_key("Phi") {
                return config_err("Φ is derived from v and cannot be set directly");
            }
            let v = profile("v");
            u[2] = model.nodes.iter().map(|&r| v.derivative(map, r)).collect();
            if self.outgoing {
                if self.fields.contains_key("Pi") {
                    return config_err("`outgoing` derives Π from v; do not also set Π");
                }
                u[1] = u[2].iter().map(|d| -d).collect();
            }
        } else if self.outgoing {
            return config_err("`outgoing` only applies to the radial model");
        }
        Ok(u)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coordmap::{BoostKind, BoostSpec, CompressSpec};
    use crate::fd1d::{Order, UniformGrid};
    use approx::assert_abs_diff_eq;

    fn spec(family: ModelFamily, map: CoordinateMap) -> ModelSpec {
        ModelSpec {
            family,
            map,
            medium: Medium::default(),
            radial: RadialParams::default(),
        }
    }

    fn eigen2(m: &[Vec<f64>]) -> (f64, f64) {
        let tr = m[0][0] + m[1][1];
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
        (tr / 2.0 + disc, tr / 2.0 - disc)
    }

    fn layer_1d() -> CoordinateMap {
        CoordinateMap::unit_outgoing_layer(CompressKind::LayerQuadratic, 5.0, 10.0, -10.0).unwrap()
    }

    fn quartic() -> CoordinateMap {
        CoordinateMap::unit_outgoing_layer(CompressKind::LayerQuartic, 10.0, 20.0, 0.0).unwrap()
    }

    #[test]
    fn wave1d_matrix_at_origin() {
        let map = CoordinateMap::global_hyperboloid(10.0).unwrap();
        let m = Model::new(spec(ModelFamily::Wave1d, map), vec![0.0, 3.0], InnerBoundary::Outflow)
            .unwrap();
        let p = m.principal_matrix(0);
        assert_abs_diff_eq!(p[0][0], 0.0);
        assert_abs_diff_eq!(p[0][1], 0.5);
        assert_abs_diff_eq!(p[1][0], 0.5);
        // closed form (1/2S²)[[-2Sρ, S²+ρ²], ...] at ρ = 3
        let p = m.principal_matrix(1);
        assert_abs_diff_eq!(p[0][0], -60.0 / 200.0, epsilon = 1e-14);
        assert_abs_diff_eq!(p[0][1], 109.0 / 200.0, epsilon = 1e-14);
    }

    #[test]
    fn eigenvalues_match_char_speeds() {
        let maps = [
            (ModelFamily::Wave1d, CoordinateMap::global_hyperboloid(10.0).unwrap()),
            (ModelFamily::Maxwell1d, CoordinateMap::global_hyperboloid(10.0).unwrap()),
            (ModelFamily::Wave1d, layer_1d()),
            (ModelFamily::Maxwell1d, layer_1d()),
            (ModelFamily::RadialConformalWave, quartic()),
        ];
        for (family, map) in maps {
            let (lo, hi) = map.domain;
            let nodes: Vec<f64> = (0..=80).map(|i| lo + (hi - lo) * i as f64 / 80.0).collect();
            let inner = if family == ModelFamily::RadialConformalWave {
                InnerBoundary::Reflecting
            } else {
                InnerBoundary::Outflow
            };
            let m = Model::new(spec(family, map.clone()), nodes.clone(), inner).unwrap();
            for (i, &rho) in nodes.iter().enumerate() {
                let (cp, cm) = map.char_speeds(rho, 1.0).unwrap();
                // ∂τU = M ∂ρU: speeds are the eigenvalues of -M
                let (e1, e2) = eigen2(&m.principal_matrix(i));
                let (s1, s2) = (-e2, -e1);
                assert_abs_diff_eq!(s1, cp, epsilon = 1e-12);
                assert_abs_diff_eq!(s2, cm, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn outflow_at_infinity() {
        for map in [CoordinateMap::global_hyperboloid(10.0).unwrap(), layer_1d()] {
            let m = Model::new(
                spec(ModelFamily::Wave1d, map),
                vec![-10.0, 0.0, 10.0],
                InnerBoundary::Outflow,
            )
            .unwrap();
            let mut w = [0.0; 2];
            let mut s = [0.0; 2];
            m.decompose(2, &[0.0, 0.0], &mut w, &mut s);
            assert_eq!(s[1], 0.0);
            m.decompose(0, &[0.0, 0.0], &mut w, &mut s);
            assert_eq!(s[0], 0.0);
        }
    }

    #[test]
    fn coefficients_are_finite_everywhere() {
        let m = Model::new(
            spec(ModelFamily::RadialConformalWave, quartic()),
            (0..=40).map(|i| i as f64 * 0.5).collect(),
            InnerBoundary::Reflecting,
        )
        .unwrap();
        for i in 0..=40 {
            for row in m.principal_matrix(i) {
                assert!(row.iter().all(|x| x.is_finite()));
            }
        }
    }

    #[test]
    fn interior_is_flat_space() {
        let m = Model::new(
            spec(ModelFamily::Maxwell1d, layer_1d()),
            vec![-5.0, -1.0, 0.0, 2.5, 5.0],
            InnerBoundary::Outflow,
        )
        .unwrap();
        for i in 0..5 {
            assert_eq!(m.principal_matrix(i), vec![vec![0.0, -1.0], vec![-1.0, 0.0]]);
        }
        let r = Model::new(
            spec(ModelFamily::RadialConformalWave, quartic()),
            vec![0.0, 4.0, 10.0],
            InnerBoundary::Reflecting,
        )
        .unwrap();
        for i in 0..3 {
            assert_eq!(r.principal_matrix(i), vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        }
    }

    #[test]
    fn constant_state_has_zero_rhs() {
        let g = UniformGrid::new(-10.0, 10.0, 40).unwrap();
        let d = StencilSet::new(g, Order::Six).unwrap();
        for (family, map) in [
            (ModelFamily::Wave1d, CoordinateMap::global_hyperboloid(10.0).unwrap()),
            (ModelFamily::Maxwell1d, layer_1d()),
        ] {
            let m = Model::new(spec(family, map), g.nodes(), InnerBoundary::Outflow).unwrap();
            let u = vec![vec![2.0; 41], vec![-1.0; 41]];
            let mut deriv = vec![vec![0.0; 41]; 2];
            let mut out = vec![vec![0.0; 41]; 2];
            m.rhs(&d, 0.0, &u, &mut deriv, &mut out).unwrap();
            assert!(out.iter().flatten().all(|x| x.abs() < 1e-12));
        }
        let g = UniformGrid::new(0.0, 1.0, 20).unwrap();
        let d = StencilSet::new(g, Order::Four).unwrap();
        let m = Model::new(
            spec(ModelFamily::Advection, CoordinateMap::advection_rational(1.0).unwrap()),
            g.nodes(),
            InnerBoundary::Outflow,
        )
        .unwrap();
        let mut out = vec![vec![0.0; 21]];
        m.rhs(&d, 0.0, &[vec![1.5; 21]], &mut [vec![0.0; 21]], &mut out)
            .unwrap();
        assert!(out[0].iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn maxwell_equals_wave_up_to_arrangement() {
        // With ε = μ = 1, (E, H) = (v, -w) maps one system onto the other.
        let g = UniformGrid::new(-10.0, 10.0, 60).unwrap();
        let d = StencilSet::new(g, Order::Eight).unwrap();
        let map = CoordinateMap::global_hyperboloid(10.0).unwrap();
        let mw = Model::new(spec(ModelFamily::Maxwell1d, map.clone()), g.nodes(), InnerBoundary::Outflow)
            .unwrap();
        let wv = Model::new(spec(ModelFamily::Wave1d, map), g.nodes(), InnerBoundary::Outflow).unwrap();
        let x = g.nodes();
        let e: Vec<f64> = x.iter().map(|x| (-x * x).exp()).collect();
        let h: Vec<f64> = x.iter().map(|x| (0.3 * x).sin()).collect();
        let minus_h: Vec<f64> = h.iter().map(|v| -v).collect();
        let mut deriv = vec![vec![0.0; 61]; 2];
        let mut a = vec![vec![0.0; 61]; 2];
        let mut b = vec![vec![0.0; 61]; 2];
        mw.rhs(&d, 0.0, &[e.clone(), h], &mut deriv, &mut a).unwrap();
        wv.rhs(&d, 0.0, &[e, minus_h], &mut deriv, &mut b).unwrap();
        for i in 0..61 {
            assert_abs_diff_eq!(a[0][i], b[0][i], epsilon = 1e-12);
            assert_abs_diff_eq!(a[1][i], -b[1][i], epsilon = 1e-12);
        }
    }

    #[test]
    fn advection_speed_and_exact_solution() {
        for c in [1.0, 5.0] {
            let map = CoordinateMap::advection_rational(c).unwrap();
            let m = Model::new(
                spec(ModelFamily::Advection, map),
                (0..=10).map(|i| i as f64 / 10.0).collect(),
                InnerBoundary::ExactInflow { c },
            )
            .unwrap();
            for i in 0..=10 {
                assert_eq!(m.principal_matrix(i), vec![vec![-1.0 / c]]);
            }
        }
        // exact solution satisfies the discrete equation to truncation error
        let map = CoordinateMap::advection_rational(1.0).unwrap();
        let res = |n: usize| {
            let g = UniformGrid::new(0.0, 1.0, n).unwrap();
            let d = StencilSet::new(g, Order::Four).unwrap();
            let m = Model::new(
                spec(ModelFamily::Advection, map.clone()),
                g.nodes(),
                InnerBoundary::Outflow,
            )
            .unwrap();
            let tau = 0.3;
            let u: Vec<f64> = g.nodes().iter().map(|r| advection_exact(1.0, 1.0 - r, tau)).collect();
            let mut out = vec![vec![0.0; n + 1]];
            m.rhs(&d, tau, &[u], &mut [vec![0.0; n + 1]], &mut out).unwrap();
            g.nodes()
                .iter()
                .zip(&out[0])
                .map(|(r, o)| (o - advection_exact_dtau(1.0, 1.0 - r, tau)).abs())
                .fold(0.0, f64::max)
        };
        assert!(res(40) < 1e-3);
        assert!(res(40) / res(80) > 12.0);
    }

    #[test]
    fn rejects_invalid_specs() {
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
        assert!(matches!(
            Model::new(spec(ModelFamily::Advection, spatial), vec![0.0, 0.5], InnerBoundary::Outflow),
            Err(Error::Config(_))
        ));
        // medium varies inside the layer
        let mut s = spec(ModelFamily::Maxwell1d, layer_1d());
        s.medium.permittivity = MaterialProfile::Bump {
            amplitude: 1.0,
            center: 4.0,
            width: 2.0,
        };
        assert!(matches!(
            Model::new(s, vec![0.0], InnerBoundary::Outflow),
            Err(Error::Config(_))
        ));
        // subcritical power
        let mut s = spec(ModelFamily::RadialConformalWave, quartic());
        s.radial = RadialParams {
            n: 3,
            l: 0,
            p: 2,
            nonlinear: true,
        };
        assert!(matches!(
            Model::new(s, vec![0.0, 20.0], InnerBoundary::Reflecting),
            Err(Error::Config(_))
        ));
        // mode coupling
        let mut s = spec(ModelFamily::RadialConformalWave, quartic());
        s.radial = RadialParams {
            n: 3,
            l: 1,
            p: 3,
            nonlinear: true,
        };
        assert!(Model::new(s, vec![2.0, 20.0], InnerBoundary::Reflecting).is_err());
    }

    #[test]
    fn source_power_for_cubic_in_three_dimensions() {
        let rp = RadialParams {
            n: 3,
            l: 0,
            p: 3,
            nonlinear: true,
        };
        assert_eq!(rp.source_decay(), 2.0);
        assert_eq!(rp.critical_power(), 3.0);
        // Ω^(k-2) = Ω^(p-3) = 1 uniformly: source coefficient is L(c₊-c₋)/(2ρ²)
        let mut s = spec(ModelFamily::RadialConformalWave, quartic());
        s.radial = rp;
        let nodes: Vec<f64> = (1..=20).map(|i| i as f64).collect();
        let m = Model::new(s, nodes.clone(), InnerBoundary::Reflecting).unwrap();
        if let Coeffs::Radial(c) = &m.coeffs {
            for (i, rho) in nodes.iter().enumerate() {
                let p = m.point(i);
                let expect = 0.5 * p.l * (p.c_plus - p.c_minus) / (rho * rho);
                assert_abs_diff_eq!(c.source[i], expect, epsilon = 1e-15);
            }
        } else {
            unreachable!()
        }
    }

    #[test]
    fn characteristic_roundtrip() {
        let m = Model::new(
            spec(ModelFamily::RadialConformalWave, quartic()),
            vec![0.0, 12.0, 20.0],
            InnerBoundary::Reflecting,
        )
        .unwrap();
        let u = [0.3, -1.2, 0.7];
        for i in 0..3 {
            let mut w = [0.0; 3];
            let mut s = [0.0; 3];
            let mut back = [0.0; 3];
            m.decompose(i, &u, &mut w, &mut s);
            m.compose(i, &w, &mut back);
            for k in 0..3 {
                assert_abs_diff_eq!(back[k], u[k], epsilon = 1e-14);
            }
            assert_eq!(s[1], 1.0);
        }
    }
}
