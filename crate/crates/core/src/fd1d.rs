//! Uniform-grid finite differences: centered first-derivative operators of
//! orders 4, 6 and 8 with one-sided closures of the same order, and
//! Kreiss–Oliger dissipation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Accuracy of the centered first-derivative operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub enum Order {
    Four,
    Six,
    Eight,
}

impl Order {
    pub const ALL: [Order; 3] = [Order::Four, Order::Six, Order::Eight];

    pub fn value(self) -> u32 {
        match self {
            Order::Four => 4,
            Order::Six => 6,
            Order::Eight => 8,
        }
    }

    pub fn half_width(self) -> usize {
        self.value() as usize / 2
    }

    /// p of the matching dissipation operator of order 2p, with 2p - 2 = order.
    pub fn dissipation_p(self) -> u32 {
        self.value() / 2 + 1
    }
}

impl TryFrom<u32> for Order {
    type Error = String;

    fn try_from(v: u32) -> std::result::Result<Self, String> {
        match v {
            4 => Ok(Order::Four),
            6 => Ok(Order::Six),
            8 => Ok(Order::Eight),
            _ => Err(format!("order must be one of {{4, 6, 8}}, got {v}")),
        }
    }
}

impl From<Order> for u32 {
    fn from(o: Order) -> u32 {
        o.value()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformGrid {
    pub rho_min: f64,
    pub rho_max: f64,
    pub n_cells: usize,
}

impl UniformGrid {
    pub fn new(rho_min: f64, rho_max: f64, n_cells: usize) -> Result<Self> {
        if !(rho_max > rho_min) || n_cells == 0 {
            return Err(Error::Config(format!(
                "invalid grid [{rho_min}, {rho_max}] with {n_cells} cells"
            )));
        }
        Ok(Self {
            rho_min,
            rho_max,
            n_cells,
        })
    }

    pub fn spacing(&self) -> f64 {
        (self.rho_max - self.rho_min) / self.n_cells as f64
    }

    pub fn len(&self) -> usize {
        self.n_cells + 1
    }

    /// Always false: a grid has at least two nodes.
    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn node(&self, i: usize) -> f64 {
        if i == self.n_cells {
            self.rho_max
        } else {
            self.rho_min + i as f64 * self.spacing()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.node(i)).collect()
    }

    fn check_len(&self, field: &[f64]) -> Result<()> {
        if field.len() != self.len() {
            return Err(Error::Shape {
                expected: self.len(),
                got: field.len(),
            });
        }
        Ok(())
    }
}

/// Finite-difference weights for the `m`-th derivative at `x0` on arbitrary
/// nodes (Fornberg's recursion). Returns one weight per node.
pub fn fornberg_weights(x0: f64, nodes: &[f64], m: usize) -> Vec<f64> {
    let n = nodes.len();
    // c[j][k]: weight of node j for derivative k
    let mut c = vec![vec![0.0; m + 1]; n];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = nodes[0] - x0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i] - x0;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[m]).collect()
}

/// One stencil row: weights applied to `field[start..start + weights.len()]`.
#[derive(Debug, Clone, PartialEq)]
struct Row {
    start: usize,
    weights: Vec<f64>,
}

/// First-derivative operator of a given order on a uniform grid.
///
/// Interior rows are the centered stencil; the `order/2` rows nearest each
/// boundary use the same number of points shifted to fit inside the grid
/// (fully one-sided at the boundary node itself).
#[derive(Debug, Clone)]
pub struct StencilSet {
    pub order: Order,
    grid: UniformGrid,
    /// Centered weights in units of 1/Δρ, offsets -k..=k.
    interior: Vec<f64>,
    left: Vec<Row>,
    right: Vec<Row>,
}

impl StencilSet {
    pub fn new(grid: UniformGrid, order: Order) -> Result<Self> {
        let k = order.half_width();
        if grid.n_cells < 2 * k {
            return Err(Error::Config(format!(
                "{} cells is too few for order {} (need at least {})",
                grid.n_cells,
                order.value(),
                2 * k
            )));
        }
        let width = 2 * k + 1;
        let unit: Vec<f64> = (0..width).map(|j| j as f64).collect();
        let interior = fornberg_weights(k as f64, &unit, 1);
        let h = grid.spacing();
        let left = (0..k)
            .map(|i| Row {
                start: 0,
                weights: fornberg_weights(i as f64, &unit, 1)
                    .into_iter()
                    .map(|w| w / h)
                    .collect(),
            })
            .collect();
        let n = grid.n_cells;
        let right = (n + 1 - k..=n)
            .map(|i| Row {
                start: n + 1 - width,
                weights: fornberg_weights((i - (n + 1 - width)) as f64, &unit, 1)
                    .into_iter()
                    .map(|w| w / h)
                    .collect(),
            })
            .collect();
        Ok(Self {
            order,
            grid,
            interior: interior.into_iter().map(|w| w / h).collect(),
            left,
            right,
        })
    }

    pub fn grid(&self) -> &UniformGrid {
        &self.grid
    }

    /// Centered weights for offsets `-k..=k`, already divided by Δρ.
    pub fn interior_weights(&self) -> &[f64] {
        &self.interior
    }

    /// Writes the derivative of `field` into `out`.
    pub fn apply_into(&self, field: &[f64], out: &mut [f64]) -> Result<()> {
        self.grid.check_len(field)?;
        self.grid.check_len(out)?;
        let k = self.order.half_width();
        let n = self.grid.n_cells;
        for (i, row) in self.left.iter().enumerate() {
            out[i] = dot(&row.weights, &field[row.start..]);
        }
        for i in k..=n - k {
            out[i] = dot(&self.interior, &field[i - k..]);
        }
        for (j, row) in self.right.iter().enumerate() {
            out[n + 1 - k + j] = dot(&row.weights, &field[row.start..]);
        }
        Ok(())
    }

    pub fn apply(&self, field: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; field.len()];
        self.apply_into(field, &mut out)?;
        Ok(out)
    }

    /// Rows of the operator as (start index, weights), left closure first.
    pub fn rows(&self) -> Vec<(usize, Vec<f64>)> {
        let k = self.order.half_width();
        let n = self.grid.n_cells;
        let mut rows: Vec<_> = self
            .left
            .iter()
            .map(|r| (r.start, r.weights.clone()))
            .collect();
        rows.extend((k..=n - k).map(|i| (i - k, self.interior.clone())));
        rows.extend(self.right.iter().map(|r| (r.start, r.weights.clone())));
        rows
    }
}

#[inline]
fn dot(w: &[f64], f: &[f64]) -> f64 {
    w.iter().zip(f).map(|(a, b)| a * b).sum()
}

/// Applies the first-derivative operator of the given order.
pub fn apply_d1(grid: &UniformGrid, order: Order, field: &[f64]) -> Result<Vec<f64>> {
    StencilSet::new(*grid, order)?.apply(field)
}

/// Kreiss–Oliger dissipation `ε (-1)^(p+1) (Δρ^(2p-1)/2^p) D₊^p D₋^p`.
///
/// The sign makes the operator negative semidefinite, so adding it to a
/// right-hand side damps the grid-frequency mode. Nodes within p of a
/// boundary, where the 2p+1 point stencil does not fit, get zero.
#[derive(Debug, Clone)]
pub struct Dissipation {
    grid: UniformGrid,
    p: usize,
    /// Full stencil including ε, the sign and the Δρ scaling.
    weights: Vec<f64>,
}

impl Dissipation {
    pub fn new(grid: UniformGrid, p: u32, epsilon: f64) -> Result<Self> {
        if !(epsilon >= 0.0) {
            return Err(Error::Config(format!(
                "dissipation strength must be non-negative, got {epsilon}"
            )));
        }
        if p == 0 {
            return Err(Error::Config("dissipation order p must be positive".into()));
        }
        let p = p as usize;
        // (D₊D₋)^p = δ^(2p)/h^(2p): binomial coefficients with alternating sign
        let mut binom = vec![1.0f64];
        for _ in 0..2 * p {
            let mut next = vec![1.0; binom.len() + 1];
            for j in 1..binom.len() {
                next[j] = binom[j - 1] + binom[j];
            }
            binom = next;
        }
        let h = grid.spacing();
        let sign = if p.is_multiple_of(2) { -1.0 } else { 1.0 }; // (-1)^(p+1)
        let scale = sign * epsilon / (2f64.powi(p as i32) * h);
        let weights = binom
            .iter()
            .enumerate()
            .map(|(j, b)| {
                let alt = if j % 2 == 0 { 1.0 } else { -1.0 };
                scale * alt * b
            })
            .collect();
        Ok(Self { grid, p, weights })
    }

    pub fn for_order(grid: UniformGrid, order: Order, epsilon: f64) -> Result<Self> {
        Self::new(grid, order.dissipation_p(), epsilon)
    }

    /// Adds the dissipation of `field` to `out`.
    pub fn add_into(&self, field: &[f64], out: &mut [f64]) -> Result<()> {
        self.grid.check_len(field)?;
        self.grid.check_len(out)?;
        let n = self.grid.n_cells;
        let p = self.p;
        if n < 2 * p {
            return Ok(());
        }
        for i in p..=n - p {
            out[i] += dot(&self.weights, &field[i - p..]);
        }
        Ok(())
    }
}

pub fn apply_dissipation(grid: &UniformGrid, p: u32, epsilon: f64, field: &[f64]) -> Result<Vec<f64>> {
    let d = Dissipation::new(*grid, p, epsilon)?;
    let mut out = vec![0.0; field.len()];
    d.add_into(field, &mut out)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn grid(n: usize) -> UniformGrid {
        UniformGrid::new(0.0, 2.0 * std::f64::consts::PI, n).unwrap()
    }

    #[test]
    fn fornberg_central_weights() {
        let w = fornberg_weights(2.0, &[0.0, 1.0, 2.0, 3.0, 4.0], 1);
        let expect = [1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0];
        for (a, b) in w.iter().zip(expect) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-14);
        }
    }

    #[test]
    fn stencil_rows_sum_to_zero_and_interior_is_antisymmetric() {
        for order in Order::ALL {
            let s = StencilSet::new(grid(40), order).unwrap();
            for (_, w) in s.rows() {
                assert!(w.iter().sum::<f64>().abs() < 1e-10);
            }
            let c = &s.interior;
            for j in 0..c.len() {
                assert_abs_diff_eq!(c[j], -c[c.len() - 1 - j], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn exact_on_polynomials() {
        let g = UniformGrid::new(-1.0, 2.0, 24).unwrap();
        let x = g.nodes();
        for order in Order::ALL {
            for deg in 0..=order.value() as i32 {
                let f: Vec<f64> = x.iter().map(|x| x.powi(deg)).collect();
                let d = apply_d1(&g, order, &f).unwrap();
                for (xi, di) in x.iter().zip(&d) {
                    let exact = if deg == 0 {
                        0.0
                    } else {
                        deg as f64 * xi.powi(deg - 1)
                    };
                    assert_abs_diff_eq!(*di, exact, epsilon = 1e-8 * (1.0 + exact.abs()));
                }
            }
        }
    }

    #[test]
    fn linear_field_gives_ones() {
        let g = grid(30);
        let x = g.nodes();
        for order in Order::ALL {
            for d in apply_d1(&g, order, &x).unwrap() {
                assert_abs_diff_eq!(d, 1.0, epsilon = 1e-12);
            }
            assert!(apply_d1(&g, order, &vec![3.0; 31])
                .unwrap()
                .iter()
                .all(|d| d.abs() < 1e-12));
        }
    }

    fn sine_interior_error(order: Order, n: usize) -> f64 {
        let g = grid(n);
        let x = g.nodes();
        let f: Vec<f64> = x.iter().map(|x| x.sin()).collect();
        let d = apply_d1(&g, order, &f).unwrap();
        let k = order.half_width();
        (k..=n - k)
            .map(|i| (d[i] - x[i].cos()).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn sine_error_ratio() {
        for order in Order::ALL {
            let ratio = sine_interior_error(order, 40) / sine_interior_error(order, 80);
            let expect = 2f64.powi(order.value() as i32);
            assert!(
                (ratio / expect - 1.0).abs() < 0.15,
                "order {}: ratio {ratio}",
                order.value()
            );
        }
    }

    #[test]
    fn observed_order_including_closures() {
        for order in Order::ALL {
            let err = |n: usize| {
                let g = grid(n);
                let x = g.nodes();
                let f: Vec<f64> = x.iter().map(|x| (0.7 * x).sin() + 0.3 * x).collect();
                let d = apply_d1(&g, order, &f).unwrap();
                x.iter()
                    .zip(&d)
                    .map(|(x, d)| (d - 0.7 * (0.7 * x).cos() - 0.3).abs())
                    .fold(0.0, f64::max)
            };
            for n in [20, 40] {
                let q = (err(n) / err(2 * n)).log2();
                assert!((q - order.value() as f64).abs() < 0.5, "order {:?} n {n}: {q} ({:e})", order, err(2 * n));
            }
        }
    }

    #[test]
    fn shape_error() {
        assert!(matches!(
            apply_d1(&grid(20), Order::Four, &[0.0; 20]),
            Err(Error::Shape {
                expected: 21,
                got: 20
            })
        ));
        assert!(matches!(
            StencilSet::new(grid(6), Order::Eight),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn order_parse() {
        assert_eq!(Order::try_from(6), Ok(Order::Six));
        let err = Order::try_from(5).unwrap_err();
        assert!(err.contains("{4, 6, 8}"));
    }

    #[test]
    fn dissipation_annihilates_low_degree() {
        let g = UniformGrid::new(-1.0, 1.0, 30).unwrap();
        let x = g.nodes();
        for p in [3u32, 4, 5] {
            for deg in 0..(2 * p) as i32 {
                let f: Vec<f64> = x.iter().map(|x| x.powi(deg)).collect();
                let d = apply_dissipation(&g, p, 1.0, &f).unwrap();
                assert!(d.iter().all(|v| v.abs() < 1e-6), "p {p} deg {deg}");
            }
        }
    }

    #[test]
    fn dissipation_on_sawtooth() {
        // (D₊D₋)³ (-1)^i = (-4/h²)³ (-1)^i, so the operator gives
        // ε·(+1)·h⁵/8·(-64/h⁶)(-1)^i = -8ε(-1)^i/h.
        let g = UniformGrid::new(0.0, 1.0, 20).unwrap();
        let h = g.spacing();
        let f: Vec<f64> = (0..=20).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let d = apply_dissipation(&g, 3, 1.0, &f).unwrap();
        for i in 3..=17 {
            assert_abs_diff_eq!(d[i], -8.0 * f[i] / h, epsilon = 1e-9);
        }
        for i in [0, 1, 2, 18, 19, 20] {
            assert_eq!(d[i], 0.0);
        }
        // one forward Euler step reduces the amplitude
        let dt = 0.1 * h;
        for p in [3u32, 4, 5] {
            let d = apply_dissipation(&g, p, 0.02, &f).unwrap();
            let next: Vec<f64> = f.iter().zip(&d).map(|(f, d)| f + dt * d).collect();
            assert!(next[10].abs() < 1.0);
        }
    }

    #[test]
    fn dissipation_zero_strength_and_negative() {
        let g = grid(20);
        let f: Vec<f64> = g.nodes().iter().map(|x| x.sin()).collect();
        assert!(apply_dissipation(&g, 3, 0.0, &f).unwrap().iter().all(|v| *v == 0.0));
        assert!(matches!(
            apply_dissipation(&g, 3, -0.1, &f),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn dissipation_resolution_scaling() {
        // Δρ^(2p-1) times a 2p-th derivative: halving Δρ shrinks it by 2^(2p-1)
        for p in [3u32, 4, 5] {
            let at_center = |n: usize| {
                let g = UniformGrid::new(-3.0, 3.0, n).unwrap();
                let f: Vec<f64> = g.nodes().iter().map(|x| (-x * x).exp()).collect();
                let d = apply_dissipation(&g, p, 1.0, &f).unwrap();
                d[n / 2].abs()
            };
            let ratio = at_center(80) / at_center(160);
            let expect = 2f64.powi(2 * p as i32 - 1);
            assert!((ratio / expect - 1.0).abs() < 0.25, "p {p}: {ratio} vs {expect}");
        }
    }

    proptest! {
        #[test]
        fn d1_is_linear(a in -5.0f64..5.0, b in -5.0f64..5.0, seed in 0u64..1000) {
            let g = UniformGrid::new(0.0, 3.0, 32).unwrap();
            let f: Vec<f64> = (0..33).map(|i| ((i as u64 * 7919 + seed) % 97) as f64 / 97.0).collect();
            let h: Vec<f64> = (0..33).map(|i| ((i as u64 * 104729 + seed) % 89) as f64 / 89.0).collect();
            for order in Order::ALL {
                let s = StencilSet::new(g, order).unwrap();
                let combo: Vec<f64> = f.iter().zip(&h).map(|(f, h)| a * f + b * h).collect();
                let lhs = s.apply(&combo).unwrap();
                let df = s.apply(&f).unwrap();
                let dh = s.apply(&h).unwrap();
                for i in 0..33 {
                    prop_assert!((lhs[i] - (a * df[i] + b * dh[i])).abs() < 1e-9);
                }
            }
        }
    }
}
