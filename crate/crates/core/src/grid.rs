//! Vertex-centred rectangular grids over the truncation box.
//!
//! Nodes sit on a uniform lattice including the box faces. Each node owns a
//! dual control volume (half cells on faces), so summing `volume * f` is the
//! trapezoid rule and the edge conductances of the finite-volume operators
//! use the matching dual-face measures.

use serde::{Deserialize, Serialize};

/// Axis-aligned box `[lower, upper]` in `R^d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        assert_eq!(lower.len(), upper.len(), "box bounds differ in dimension");
        Self { lower, upper }
    }

    pub fn interval(lo: f64, hi: f64) -> Self {
        Self::new(vec![lo], vec![hi])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.upper[axis] - self.lower[axis]
    }

    pub fn max_extent(&self) -> f64 {
        (0..self.dim()).map(|k| self.extent(k)).fold(0.0, f64::max)
    }

    pub fn contains(&self, x: &[f64], slack: f64) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(&v, (&lo, &hi))| v >= lo - slack && v <= hi + slack)
    }

    pub fn is_valid(&self) -> bool {
        !self.lower.is_empty()
            && self
                .lower
                .iter()
                .zip(&self.upper)
                .all(|(lo, hi)| lo.is_finite() && hi.is_finite() && hi > lo)
    }
}

/// Uniform vertex-centred grid. Linear node index runs with axis 0 fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    domain: BoxDomain,
    nodes: Vec<usize>,
    spacing: Vec<f64>,
}

/// A lattice edge between two neighbouring nodes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub axis: usize,
    /// Dual-face measure divided by the node spacing along `axis`.
    pub geometric_factor: f64,
}

impl Grid {
    /// Grid with `cells[k]` intervals along axis `k`.
    pub fn with_cells(domain: BoxDomain, cells: &[usize]) -> Self {
        assert_eq!(cells.len(), domain.dim());
        assert!(cells.iter().all(|&c| c >= 1), "need at least one cell per axis");
        let nodes: Vec<usize> = cells.iter().map(|c| c + 1).collect();
        let spacing = cells
            .iter()
            .enumerate()
            .map(|(k, &c)| domain.extent(k) / c as f64)
            .collect();
        Self { domain, nodes, spacing }
    }

    /// Smallest grid whose spacing does not exceed `max_spacing` on any axis.
    pub fn with_max_spacing(domain: BoxDomain, max_spacing: f64) -> Self {
        let cells: Vec<usize> = (0..domain.dim())
            .map(|k| ((domain.extent(k) / max_spacing) - 1e-9).ceil().max(1.0) as usize)
            .collect();
        Self::with_cells(domain, &cells)
    }

    /// Grid with spacing `sqrt(eps) / cells_per_sqrt_eps`.
    pub fn for_epsilon(domain: BoxDomain, epsilon: f64, cells_per_sqrt_eps: f64) -> Self {
        Self::with_max_spacing(domain, epsilon.sqrt() / cells_per_sqrt_eps)
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.nodes.len()
    }

    pub fn len(&self) -> usize {
        self.nodes.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn nodes_per_axis(&self) -> &[usize] {
        &self.nodes
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn max_spacing(&self) -> f64 {
        self.spacing.iter().copied().fold(0.0, f64::max)
    }

    /// Largest spacing admitted for `epsilon` (a quarter of the Gaussian width).
    pub fn resolves(&self, epsilon: f64) -> bool {
        self.max_spacing() <= epsilon.sqrt() / 4.0 * (1.0 + 1e-12)
    }

    pub fn multi_index(&self, mut idx: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.dim());
        for &n in &self.nodes {
            out.push(idx % n);
            idx /= n;
        }
        out
    }

    pub fn linear_index(&self, multi: &[usize]) -> usize {
        let mut idx = 0;
        let mut stride = 1;
        for (k, &i) in multi.iter().enumerate() {
            idx += i * stride;
            stride *= self.nodes[k];
        }
        idx
    }

    pub fn coordinate(&self, axis: usize, i: usize) -> f64 {
        if i + 1 == self.nodes[axis] {
            self.domain.upper[axis]
        } else {
            self.domain.lower[axis] + i as f64 * self.spacing[axis]
        }
    }

    pub fn point(&self, idx: usize) -> Vec<f64> {
        self.multi_index(idx)
            .iter()
            .enumerate()
            .map(|(k, &i)| self.coordinate(k, i))
            .collect()
    }

    /// All node coordinates, in linear-index order.
    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }

    fn axis_weight(&self, axis: usize, i: usize) -> f64 {
        if i == 0 || i + 1 == self.nodes[axis] {
            0.5 * self.spacing[axis]
        } else {
            self.spacing[axis]
        }
    }

    /// Trapezoid weight (dual-cell volume) of a node.
    pub fn volume(&self, idx: usize) -> f64 {
        self.multi_index(idx)
            .iter()
            .enumerate()
            .map(|(k, &i)| self.axis_weight(k, i))
            .product()
    }

    pub fn volumes(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.volume(i)).collect()
    }

    pub fn is_boundary(&self, idx: usize) -> bool {
        self.multi_index(idx)
            .iter()
            .zip(&self.nodes)
            .any(|(&i, &n)| i == 0 || i + 1 == n)
    }

    /// Lattice neighbours (2d of them in the interior).
    pub fn neighbors(&self, idx: usize) -> Vec<usize> {
        let multi = self.multi_index(idx);
        let mut out = Vec::with_capacity(2 * self.dim());
        let mut stride = 1;
        for (k, &i) in multi.iter().enumerate() {
            if i > 0 {
                out.push(idx - stride);
            }
            if i + 1 < self.nodes[k] {
                out.push(idx + stride);
            }
            stride *= self.nodes[k];
        }
        out
    }

    /// Every lattice edge once, with the finite-volume geometric factor
    /// `|dual face| / spacing`.
    pub fn edges(&self) -> Vec<Edge> {
        let mut out = Vec::new();
        for idx in 0..self.len() {
            let multi = self.multi_index(idx);
            let mut stride = 1;
            for axis in 0..self.dim() {
                if multi[axis] + 1 < self.nodes[axis] {
                    let face: f64 = multi
                        .iter()
                        .enumerate()
                        .filter(|&(k, _)| k != axis)
                        .map(|(k, &i)| self.axis_weight(k, i))
                        .product();
                    out.push(Edge {
                        a: idx,
                        b: idx + stride,
                        axis,
                        geometric_factor: face / self.spacing[axis],
                    });
                }
                stride *= self.nodes[axis];
            }
        }
        out
    }

    pub fn nearest_node(&self, x: &[f64]) -> usize {
        let multi: Vec<usize> = x
            .iter()
            .enumerate()
            .map(|(k, &v)| {
                let t = ((v - self.domain.lower[k]) / self.spacing[k]).round();
                t.clamp(0.0, (self.nodes[k] - 1) as f64) as usize
            })
            .collect();
        self.linear_index(&multi)
    }

    /// Trapezoid integral of nodal values.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        assert_eq!(values.len(), self.len());
        values
            .iter()
            .enumerate()
            .map(|(i, v)| v * self.volume(i))
            .sum()
    }

    /// Trapezoid integral restricted to masked nodes.
    pub fn integrate_masked(&self, values: &[f64], mask: &[bool]) -> f64 {
        values
            .iter()
            .zip(mask)
            .enumerate()
            .filter(|(_, (_, &m))| m)
            .map(|(i, (v, _))| v * self.volume(i))
            .sum()
    }
}

/// Scalar field sampled on the nodes of a grid.
#[derive(Clone, Debug)]
pub struct GridField {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl GridField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Self {
        assert_eq!(grid.len(), values.len());
        Self { grid, values }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(&grid.point(i))).collect();
        Self { grid, values }
    }

    pub fn integral(&self) -> f64 {
        self.grid.integrate(&self.values)
    }

    pub fn max_abs_on(&self, mask: &[bool]) -> f64 {
        self.values
            .iter()
            .zip(mask)
            .filter(|(_, &m)| m)
            .map(|(v, _)| v.abs())
            .fold(0.0, f64::max)
    }
}
