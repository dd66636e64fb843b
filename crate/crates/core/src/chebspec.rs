//! Multi-domain Chebyshev pseudospectral discretization of a radial interval.
//!
//! Each subdomain carries N+1 Chebyshev–Gauss–Lobatto nodes mapped affinely
//! to `[a, b]`. Neighbouring subdomains share their endpoint, so the
//! concatenated node list duplicates every internal interface.

use crate::error::{Error, Result};

/// Chebyshev–Gauss–Lobatto nodes on [-1, 1], ascending.
pub fn cgl_nodes(n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::Config("CGL node count N must be at least 1".into()));
    }
    let mut x: Vec<f64> = (0..=n)
        .map(|k| -(std::f64::consts::PI * k as f64 / n as f64).cos())
        .collect();
    // exact symmetry: x[k] = -x[n-k], and 0 in the middle for even N
    for k in 0..=n / 2 {
        let v = 0.5 * (x[n - k] - x[k]);
        x[k] = -v;
        x[n - k] = v;
    }
    if n.is_multiple_of(2) {
        x[n / 2] = 0.0;
    }
    Ok(x)
}

/// Dense differentiation matrix on the ascending CGL nodes of [-1, 1].
fn cgl_matrix(n: usize) -> Result<Vec<f64>> {
    let x = cgl_nodes(n)?;
    let m = n + 1;
    let c = |i: usize| {
        let w = if i == 0 || i == n { 2.0 } else { 1.0 };
        if i.is_multiple_of(2) {
            w
        } else {
            -w
        }
    };
    let mut d = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            if i != j {
                d[i * m + j] = c(i) / c(j) / (x[i] - x[j]);
            }
        }
    }
    // negative-sum trick for the diagonal
    for i in 0..m {
        let s: f64 = (0..m).filter(|&j| j != i).map(|j| d[i * m + j]).sum();
        d[i * m + i] = -s;
    }
    Ok(d)
}

/// One Chebyshev subdomain `[a, b]` with its differentiation matrix.
#[derive(Debug, Clone)]
pub struct ChebSubdomain {
    pub a: f64,
    pub b: f64,
    pub n: usize,
    nodes: Vec<f64>,
    matrix: Vec<f64>,
}

impl ChebSubdomain {
    pub fn new(a: f64, b: f64, n: usize) -> Result<Self> {
        if !(b > a) {
            return Err(Error::Layout(format!("empty subdomain [{a}, {b}]")));
        }
        let ref_nodes = cgl_nodes(n)?;
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut nodes: Vec<f64> = ref_nodes.iter().map(|x| mid + half * x).collect();
        nodes[0] = a;
        nodes[n] = b;
        let matrix = cgl_matrix(n)?.into_iter().map(|d| d / half).collect();
        Ok(Self {
            a,
            b,
            n,
            nodes,
            matrix,
        })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.n + 1
    }

    /// Always false: a subdomain has at least two nodes.
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Row-major (N+1)×(N+1) derivative operator.
    pub fn diff_matrix(&self) -> &[f64] {
        &self.matrix
    }

    pub fn apply_into(&self, f: &[f64], out: &mut [f64]) {
        let m = self.len();
        for (i, o) in out.iter_mut().enumerate().take(m) {
            let row = &self.matrix[i * m..(i + 1) * m];
            *o = row.iter().zip(f).map(|(a, b)| a * b).sum();
        }
    }

    pub fn min_spacing(&self) -> f64 {
        self.nodes
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }
}

/// Derivative operator of a subdomain (row-major), the public form of the
/// per-subdomain construction.
pub fn diff_matrix(sub: &ChebSubdomain) -> Vec<f64> {
    sub.matrix.clone()
}

/// Ordered, gap-free tiling of `[ρ_inner, S]` by Chebyshev subdomains.
#[derive(Debug, Clone)]
pub struct MultiDomainLayout {
    pub subdomains: Vec<ChebSubdomain>,
    /// Index (into the internal interfaces) that coincides with ρ = R.
    pub layer_interface: Option<usize>,
}

impl MultiDomainLayout {
    /// Builds subdomains between consecutive `boundaries` with `n` intervals
    /// each. If `layer_interface` is given it must be one of the boundaries.
    pub fn new(boundaries: &[f64], n: usize, layer_interface: Option<f64>) -> Result<Self> {
        if boundaries.len() < 2 {
            return Err(Error::Layout("need at least two subdomain boundaries".into()));
        }
        if boundaries.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Layout(format!(
                "subdomain boundaries must increase strictly: {boundaries:?}"
            )));
        }
        let subdomains = boundaries
            .windows(2)
            .map(|w| ChebSubdomain::new(w[0], w[1], n))
            .collect::<Result<Vec<_>>>()?;
        let layer_interface = match layer_interface {
            None => None,
            Some(r) => {
                let k = boundaries[1..boundaries.len() - 1]
                    .iter()
                    .position(|b| *b == r)
                    .ok_or_else(|| {
                        Error::Layout(format!(
                            "layer interface ρ = {r} is not an internal subdomain boundary of {boundaries:?}"
                        ))
                    })?;
                Some(k)
            }
        };
        Ok(Self {
            subdomains,
            layer_interface,
        })
    }

    pub fn from_subdomains(subdomains: Vec<ChebSubdomain>) -> Result<Self> {
        let layout = Self {
            subdomains,
            layer_interface: None,
        };
        layout.check()?;
        Ok(layout)
    }

    fn check(&self) -> Result<()> {
        for w in self.subdomains.windows(2) {
            if w[0].b != w[1].a {
                return Err(Error::Layout(format!(
                    "subdomain [{}, {}] does not meet [{}, {}]",
                    w[0].a, w[0].b, w[1].a, w[1].b
                )));
            }
        }
        Ok(())
    }

    pub fn total_len(&self) -> usize {
        self.subdomains.iter().map(ChebSubdomain::len).sum()
    }

    /// Concatenated nodes, interfaces duplicated.
    pub fn nodes(&self) -> Vec<f64> {
        self.subdomains
            .iter()
            .flat_map(|s| s.nodes().iter().copied())
            .collect()
    }

    /// Start offset of each subdomain in the concatenated arrays.
    pub fn offsets(&self) -> Vec<usize> {
        let mut off = Vec::with_capacity(self.subdomains.len());
        let mut acc = 0;
        for s in &self.subdomains {
            off.push(acc);
            acc += s.len();
        }
        off
    }

    /// Per-subdomain derivative of a concatenated field.
    pub fn apply_d1(&self, f: &[f64], out: &mut [f64]) -> Result<()> {
        let total = self.total_len();
        if f.len() != total || out.len() != total {
            return Err(Error::Shape {
                expected: total,
                got: f.len().min(out.len()),
            });
        }
        for (sub, off) in self.subdomains.iter().zip(self.offsets()) {
            let m = sub.len();
            sub.apply_into(&f[off..off + m], &mut out[off..off + m]);
        }
        Ok(())
    }

    pub fn min_spacing(&self) -> f64 {
        self.subdomains
            .iter()
            .map(ChebSubdomain::min_spacing)
            .fold(f64::INFINITY, f64::min)
    }

    /// Pairs of concatenated indices (left end, right start) at each
    /// internal interface.
    pub fn interfaces(&self) -> Vec<(usize, usize)> {
        let off = self.offsets();
        (1..self.subdomains.len())
            .map(|k| (off[k] - 1, off[k]))
            .collect()
    }
}

/// Pointwise characteristic decomposition of a first-order system.
pub trait CharacteristicSystem {
    fn n_fields(&self) -> usize;

    /// Characteristic variables `w` and their speeds at concatenated node
    /// `node` for the pointwise state vector `u`.
    fn decompose(&self, node: usize, u: &[f64], w: &mut [f64], speeds: &mut [f64]);

    /// Inverse of [`decompose`](Self::decompose).
    fn compose(&self, node: usize, w: &[f64], u: &mut [f64]);
}

/// Number of characteristic variables overwritten at each interface and at
/// the outer boundary.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PatchStats {
    pub exchanged: Vec<usize>,
    /// Incoming variables at the last node (always left untouched).
    pub incoming_at_outer: usize,
}

/// Upwind coupling of subdomains through characteristic variables.
///
/// `dudt[f]` is the time derivative of field `f` on the concatenated nodes.
/// At every internal interface the left subdomain takes its left-moving
/// (negative speed) characteristic derivatives from the right subdomain and
/// the right subdomain takes its right-moving ones from the left. Nothing is
/// exchanged at the last node.
pub fn patch_interfaces<S: CharacteristicSystem>(
    layout: &MultiDomainLayout,
    system: &S,
    dudt: &mut [Vec<f64>],
) -> Result<PatchStats> {
    layout.check()?;
    let nf = system.n_fields();
    if dudt.len() != nf {
        return Err(Error::Shape {
            expected: nf,
            got: dudt.len(),
        });
    }
    let mut stats = PatchStats::default();
    let mut ul = vec![0.0; nf];
    let mut ur = vec![0.0; nf];
    let mut wl = vec![0.0; nf];
    let mut wr = vec![0.0; nf];
    let mut sl = vec![0.0; nf];
    let mut sr = vec![0.0; nf];
    for (il, ir) in layout.interfaces() {
        for f in 0..nf {
            ul[f] = dudt[f][il];
            ur[f] = dudt[f][ir];
        }
        system.decompose(il, &ul, &mut wl, &mut sl);
        system.decompose(ir, &ur, &mut wr, &mut sr);
        let mut count = 0;
        let (wl_old, wr_old) = (wl.clone(), wr.clone());
        for k in 0..nf {
            // speeds agree on both sides; use the mean to avoid roundoff splits
            let c = 0.5 * (sl[k] + sr[k]);
            if c < 0.0 {
                wl[k] = wr_old[k];
                count += 1;
            } else if c > 0.0 {
                wr[k] = wl_old[k];
                count += 1;
            }
        }
        system.compose(il, &wl, &mut ul);
        system.compose(ir, &wr, &mut ur);
        for f in 0..nf {
            dudt[f][il] = ul[f];
            dudt[f][ir] = ur[f];
        }
        stats.exchanged.push(count);
    }
    let last = layout.total_len() - 1;
    for f in 0..nf {
        ul[f] = dudt[f][last];
    }
    system.decompose(last, &ul, &mut wl, &mut sl);
    stats.incoming_at_outer = sl.iter().filter(|c| **c < 0.0).count();
    Ok(stats)
}

/// Trapezoid weights on the concatenated nodes; each
/// subdomain contributes its own trapezoid rule.
pub fn trapezoid_weights(layout: &MultiDomainLayout) -> Vec<f64> {
    let mut w = Vec::with_capacity(layout.total_len());
    for s in &layout.subdomains {
        let x = s.nodes();
        for i in 0..x.len() {
            let left = if i > 0 { x[i] - x[i - 1] } else { 0.0 };
            let right = if i + 1 < x.len() { x[i + 1] - x[i] } else { 0.0 };
            w.push(0.5 * (left + right));
        }
    }
    w
}
