//! Barrier height, valley graph and grid masks for the valley cores.

use std::collections::{BTreeMap, VecDeque};

use nalgebra::DVector;
use serde::Serialize;

use super::critical::{CriticalKind, CriticalPoint};
use super::potential::Potential;
use crate::error::LandscapeError;
use crate::grid::{BoxDomain, Grid};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValleyOptions {
    /// Overrides the automatic margin.
    pub eta: Option<f64>,
    /// Barrier assigned to a single well, above its depth.
    pub reference_height: f64,
    /// Required excess of the potential over H on the box boundary.
    pub boundary_margin: f64,
    pub descent_step: f64,
    pub descent_offset: f64,
    pub descent_gradient_tol: f64,
    pub descent_max_steps: usize,
    pub length_scale: f64,
    pub degeneracy_tol: f64,
}

impl Default for ValleyOptions {
    fn default() -> Self {
        Self {
            eta: None,
            reference_height: 1.0,
            boundary_margin: 1.0,
            descent_step: 1e-3,
            descent_offset: 1e-4,
            descent_gradient_tol: 1e-6,
            descent_max_steps: 2_000_000,
            length_scale: 1.0,
            degeneracy_tol: 1e-8,
        }
    }
}

/// A barrier saddle and the two valleys it joins (`valleys.0 < valleys.1`).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SaddleLink {
    pub saddle: CriticalPoint,
    pub valleys: (usize, usize),
}

/// Grid-independent metastable structure.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValleyStructure {
    pub domain: BoxDomain,
    /// H.
    pub barrier: f64,
    /// h.
    pub depth: f64,
    pub eta: f64,
    pub eta_auto: f64,
    pub value_tol: f64,
    /// Valley bottoms m_i, one per valley.
    pub minima: Vec<CriticalPoint>,
    /// Saddles at height H that separate two valleys.
    pub saddles: Vec<SaddleLink>,
    pub internal_saddles: Vec<CriticalPoint>,
    pub excluded_saddles: Vec<CriticalPoint>,
    pub boundary_min: f64,
    pub notes: Vec<String>,
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        Self((0..n).collect())
    }
    fn find(&mut self, i: usize) -> usize {
        let mut r = i;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut j = i;
        while self.0[j] != r {
            let next = self.0[j];
            self.0[j] = r;
            j = next;
        }
        r
    }
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.0[hi] = lo;
        true
    }
}

fn rk4_descent(potential: &Potential, start: Vec<f64>, domain: &BoxDomain, opts: &ValleyOptions) -> Option<Vec<f64>> {
    let dt = opts.descent_step;
    let f = |x: &DVector<f64>| -potential.gradient(x.as_slice());
    let mut x = DVector::from_vec(start);
    let slack = 1e-9 * domain.max_extent();
    for _ in 0..opts.descent_max_steps {
        let k1 = f(&x);
        if k1.norm() <= opts.descent_gradient_tol * opts.length_scale {
            return Some(x.as_slice().to_vec());
        }
        let k2 = f(&(&x + &k1 * (0.5 * dt)));
        let k3 = f(&(&x + &k2 * (0.5 * dt)));
        let k4 = f(&(&x + &k3 * dt));
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        if !x.iter().all(|v| v.is_finite()) || !domain.contains(x.as_slice(), slack) {
            return None;
        }
    }
    None
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Index of the minimum reached by steepest descent from `saddle ± offset * unstable`.
pub fn descend_from_saddle(
    potential: &Potential,
    saddle: &CriticalPoint,
    sign: f64,
    minima: &[CriticalPoint],
    domain: &BoxDomain,
    opts: &ValleyOptions,
) -> Result<usize, LandscapeError> {
    let v = saddle.unstable_direction();
    let start: Vec<f64> = saddle
        .location
        .iter()
        .zip(v)
        .map(|(s, d)| s + sign * opts.descent_offset * opts.length_scale * d)
        .collect();
    let end = rk4_descent(potential, start, domain, opts)
        .ok_or_else(|| LandscapeError::DescentFailed { at: saddle.location.clone() })?;
    let (best, dist) = minima
        .iter()
        .enumerate()
        .map(|(k, m)| (k, distance(&m.location, &end)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or(LandscapeError::NoMinima)?;
    let lam = minima[best].eigenvalues[0].max(opts.degeneracy_tol);
    // linear convergence near the minimum leaves a residual of about tol / lambda_min
    if dist > 10.0 * opts.descent_gradient_tol * opts.length_scale / lam + 1e-6 * opts.length_scale {
        return Err(LandscapeError::DescentFailed { at: saddle.location.clone() });
    }
    Ok(best)
}

/// Minimum of the potential over a sampling of the box boundary.
pub fn boundary_minimum(potential: &Potential, domain: &BoxDomain, samples_per_axis: usize) -> f64 {
    let d = domain.dim();
    if d == 1 {
        return potential.value(&[domain.lower[0]]).min(potential.value(&[domain.upper[0]]));
    }
    let grid = Grid::with_cells(domain.clone(), &vec![samples_per_axis; d]);
    (0..grid.len())
        .filter(|&i| grid.is_boundary(i))
        .map(|i| potential.value(&grid.point(i)))
        .fold(f64::INFINITY, f64::min)
}

impl ValleyStructure {
    /// Build the structure from the critical points of `potential` in `domain`.
    pub fn analyze(
        potential: &Potential,
        critical_points: &[CriticalPoint],
        domain: &BoxDomain,
        opts: &ValleyOptions,
    ) -> Result<Self, LandscapeError> {
        let all_minima: Vec<CriticalPoint> = critical_points
            .iter()
            .filter(|c| c.kind == CriticalKind::Minimum)
            .cloned()
            .collect();
        if all_minima.is_empty() {
            return Err(LandscapeError::NoMinima);
        }
        let index_one: Vec<&CriticalPoint> = critical_points
            .iter()
            .filter(|c| c.kind == CriticalKind::IndexOneSaddle)
            .collect();
        let mut notes = Vec::new();

        // endpoints of both descent branches, in ascending saddle order
        let mut links: Vec<(&CriticalPoint, usize, usize)> = Vec::new();
        for s in &index_one {
            let a = descend_from_saddle(potential, s, 1.0, &all_minima, domain, opts)?;
            let b = descend_from_saddle(potential, s, -1.0, &all_minima, domain, opts)?;
            links.push((s, a.min(b), a.max(b)));
        }
        links.sort_by(|x, y| x.0.value.total_cmp(&y.0.value));

        let h = all_minima.iter().map(|m| m.value).fold(f64::INFINITY, f64::min);
        let mut uf = UnionFind::new(all_minima.len());
        let mut components = all_minima.len();
        let mut barrier = None;
        for (s, a, b) in &links {
            if a != b && uf.union(*a, *b) {
                components -= 1;
                if components == 1 {
                    barrier = Some(s.value);
                    break;
                }
            }
        }
        if components > 1 {
            return Err(LandscapeError::Disconnected { components });
        }
        let single = barrier.is_none();
        let barrier = barrier.unwrap_or(h + opts.reference_height);
        let value_tol = 1e-8 * (barrier - h).abs().max(f64::MIN_POSITIVE);

        // valleys: minima joined below the barrier
        let mut uf = UnionFind::new(all_minima.len());
        let mut internal = Vec::new();
        let mut excluded = Vec::new();
        let mut barrier_links = Vec::new();
        for (s, a, b) in &links {
            if s.value < barrier - value_tol {
                uf.union(*a, *b);
                internal.push((*s).clone());
            } else if s.value > barrier + value_tol || single {
                notes.push(format!(
                    "saddle at {:?} (value {}) lies above the barrier and is excluded",
                    s.location, s.value
                ));
                excluded.push((*s).clone());
            } else {
                barrier_links.push((*s, *a, *b));
            }
        }
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for i in 0..all_minima.len() {
            groups.entry(uf.find(i)).or_default().push(i);
        }
        // bottom of each group; groups ordered by the location of their bottom
        let mut bottoms: Vec<(usize, Vec<usize>)> = groups
            .into_values()
            .map(|members| {
                let b = *members
                    .iter()
                    .min_by(|&&x, &&y| all_minima[x].value.total_cmp(&all_minima[y].value).then(x.cmp(&y)))
                    .unwrap();
                (b, members)
            })
            .collect();
        bottoms.sort_by_key(|(b, _)| *b);
        let mut valley_of = vec![0usize; all_minima.len()];
        for (k, (_, members)) in bottoms.iter().enumerate() {
            for &m in members {
                valley_of[m] = k;
            }
        }
        let minima: Vec<CriticalPoint> = bottoms.iter().map(|(b, _)| all_minima[*b].clone()).collect();
        let depths: Vec<f64> = minima.iter().map(|m| m.value).collect();
        if depths.iter().any(|v| (v - h).abs() > value_tol) {
            return Err(LandscapeError::UnequalDepth { values: depths, tol: value_tol });
        }

        let mut saddles = Vec::new();
        for (s, a, b) in barrier_links {
            let (i, j) = (valley_of[a], valley_of[b]);
            if i == j {
                notes.push(format!("barrier saddle at {:?} returns to valley {} and is treated as internal", s.location, i + 1));
                internal.push(s.clone());
            } else {
                saddles.push(SaddleLink { saddle: s.clone(), valleys: (i.min(j), i.max(j)) });
            }
        }

        for c in critical_points.iter().filter(|c| c.kind == CriticalKind::Other) {
            if c.is_degenerate(opts.degeneracy_tol) && c.value <= barrier + value_tol {
                return Err(LandscapeError::Degeneracy { at: c.location.clone() });
            }
            if (c.value - barrier).abs() <= value_tol {
                return Err(LandscapeError::HigherIndexOnBarrier { at: c.location.clone(), index: c.index() });
            }
        }

        let below = critical_points
            .iter()
            .map(|c| c.value)
            .filter(|&v| v < barrier - value_tol)
            .fold(f64::NEG_INFINITY, f64::max);
        let below = if below.is_finite() { below } else { h };
        let eta_auto = 0.5 * (barrier - below);
        let eta = match opts.eta {
            None => eta_auto,
            Some(e) => {
                if !(e > 0.0 && e < barrier - h) {
                    return Err(LandscapeError::InadmissibleEta { eta: e, reason: format!("must lie in (0, {})", barrier - h) });
                }
                if let Some(c) = critical_points
                    .iter()
                    .find(|c| c.value > barrier - e && c.value < barrier - value_tol)
                {
                    return Err(LandscapeError::InadmissibleEta {
                        eta: e,
                        reason: format!("critical point at {:?} has value {} in (H - eta, H)", c.location, c.value),
                    });
                }
                e
            }
        };

        let boundary_min = boundary_minimum(potential, domain, 400);
        if boundary_min < barrier + opts.boundary_margin {
            return Err(LandscapeError::BoxTooSmall { boundary_min, required: barrier + opts.boundary_margin });
        }
        if single {
            notes.push(format!("single well: barrier set to depth + {}", opts.reference_height));
        }

        let out = Self {
            domain: domain.clone(),
            barrier,
            depth: h,
            eta,
            eta_auto,
            value_tol,
            minima,
            saddles,
            internal_saddles: internal,
            excluded_saddles: excluded,
            boundary_min,
            notes,
        };
        if out.len() > 1 && !out.is_connected() {
            return Err(LandscapeError::Disconnected { components: out.len() });
        }
        Ok(out)
    }

    /// Number of valleys K.
    pub fn len(&self) -> usize {
        self.minima.len()
    }

    pub fn is_empty(&self) -> bool {
        self.minima.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    /// S_{i,j} as indices into `saddles`, both orientations present.
    pub fn saddle_partition(&self) -> BTreeMap<(usize, usize), Vec<usize>> {
        let mut map: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        for (k, l) in self.saddles.iter().enumerate() {
            let (i, j) = l.valleys;
            map.entry((i, j)).or_default().push(k);
            map.entry((j, i)).or_default().push(k);
        }
        map
    }

    pub fn saddles_between(&self, i: usize, j: usize) -> Vec<&CriticalPoint> {
        self.saddles
            .iter()
            .filter(|l| l.valleys == (i.min(j), i.max(j)) && i != j)
            .map(|l| &l.saddle)
            .collect()
    }

    pub fn adjacency(&self) -> Vec<Vec<bool>> {
        let k = self.len();
        let mut adj = vec![vec![false; k]; k];
        for l in &self.saddles {
            adj[l.valleys.0][l.valleys.1] = true;
            adj[l.valleys.1][l.valleys.0] = true;
        }
        adj
    }

    pub fn is_connected(&self) -> bool {
        let k = self.len();
        if k == 0 {
            return false;
        }
        let adj = self.adjacency();
        let mut seen = vec![false; k];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..k {
                if adj[i][j] && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Grid masks of the valley cores on `grid`.
    pub fn on_grid(&self, potential: &Potential, grid: &Grid) -> Result<ValleyDecomposition, LandscapeError> {
        ValleyDecomposition::build(self.clone(), potential, grid.clone())
    }
}

/// Connected component of `{values < threshold}` containing `start` (empty if
/// `start` is not in the set).
pub fn flood_fill(grid: &Grid, values: &[f64], threshold: f64, start: usize) -> Vec<bool> {
    let mut mask = vec![false; grid.len()];
    if values[start] >= threshold {
        return mask;
    }
    let mut queue = VecDeque::from([start]);
    mask[start] = true;
    while let Some(i) = queue.pop_front() {
        for j in grid.neighbors(i) {
            if !mask[j] && values[j] < threshold {
                mask[j] = true;
                queue.push_back(j);
            }
        }
    }
    mask
}

/// Valley structure together with its masks on a particular grid.
#[derive(Clone, Debug)]
pub struct ValleyDecomposition {
    pub structure: ValleyStructure,
    pub grid: Grid,
    /// Potential at the grid nodes.
    pub phi: Vec<f64>,
    pub valley_masks: Vec<Vec<bool>>,
    pub delta_mask: Vec<bool>,
    /// |V_i| by trapezoid quadrature.
    pub valley_measures: Vec<f64>,
}

impl ValleyDecomposition {
    fn build(structure: ValleyStructure, potential: &Potential, grid: Grid) -> Result<Self, LandscapeError> {
        let phi: Vec<f64> = (0..grid.len()).map(|i| potential.value(&grid.point(i))).collect();
        let level = structure.barrier - structure.eta;
        let mut masks: Vec<Vec<bool>> = Vec::with_capacity(structure.len());
        for (k, m) in structure.minima.iter().enumerate() {
            let start = grid.nearest_node(&m.location);
            let mask = flood_fill(&grid, &phi, level, start);
            if !mask.iter().any(|&b| b) {
                return Err(LandscapeError::EmptyValley { valley: k });
            }
            for (j, other) in masks.iter().enumerate() {
                if mask.iter().zip(other).any(|(a, b)| *a && *b) {
                    return Err(LandscapeError::MergedValleys { a: j, b: k });
                }
            }
            masks.push(mask);
        }
        let delta_mask: Vec<bool> = (0..grid.len()).map(|i| !masks.iter().any(|m| m[i])).collect();
        let volumes = grid.volumes();
        let valley_measures = masks
            .iter()
            .map(|m| m.iter().zip(&volumes).filter(|(b, _)| **b).map(|(_, v)| v).sum())
            .collect();
        Ok(Self { structure, grid, phi, valley_masks: masks, delta_mask, valley_measures })
    }

    pub fn len(&self) -> usize {
        self.structure.len()
    }

    pub fn is_empty(&self) -> bool {
        self.structure.is_empty()
    }

    /// Same structure on another grid.
    pub fn regrid(&self, potential: &Potential, grid: &Grid) -> Result<Self, LandscapeError> {
        Self::build(self.structure.clone(), potential, grid.clone())
    }

    /// Valley index of each node, `None` in the transition region.
    pub fn labels(&self) -> Vec<Option<usize>> {
        (0..self.grid.len())
            .map(|i| self.valley_masks.iter().position(|m| m[i]))
            .collect()
    }
}

/// Critical points, valley structure and masks in one call.
pub fn decompose_valleys(
    potential: &Potential,
    critical_points: &[CriticalPoint],
    grid: &Grid,
    opts: &ValleyOptions,
) -> Result<ValleyDecomposition, LandscapeError> {
    ValleyStructure::analyze(potential, critical_points, grid.domain(), opts)?.on_grid(potential, grid)
}

#[cfg(test)]
mod tests {
    use super::super::critical::{find_critical_points, CriticalOptions};
    use super::*;

    fn structure(name: &str) -> (Potential, ValleyStructure) {
        let p = Potential::builtin(name).unwrap();
        let d = p.default_box().unwrap();
        let cps = find_critical_points(&p, &d, 0.05 * d.max_extent(), &CriticalOptions::default()).unwrap();
        let s = ValleyStructure::analyze(&p, &cps, &d, &ValleyOptions::default()).unwrap();
        (p, s)
    }

    #[test]
    fn double_well_structure() {
        let (p, s) = structure("double_well");
        assert_eq!(s.len(), 2);
        assert_eq!(s.saddles.len(), 1);
        assert_eq!(s.saddles[0].valleys, (0, 1));
        assert!((s.barrier - 0.25).abs() < 1e-14);
        assert!((s.eta - 0.125).abs() < 1e-14);
        let g = Grid::for_epsilon(s.domain.clone(), 0.1, 8.0);
        let dec = s.on_grid(&p, &g).unwrap();
        let zero = g.nearest_node(&[0.0]);
        assert!(dec.delta_mask[zero]);
        assert!(dec.valley_masks[0][g.nearest_node(&[-1.0])]);
    }

    #[test]
    fn triple_well_adjacency() {
        let (_, s) = structure("triple_well");
        assert_eq!(s.len(), 3);
        let adj = s.adjacency();
        assert!(adj[0][1] && adj[1][2] && !adj[0][2]);
        assert!((s.barrier - 4.0 / 27.0).abs() < 1e-13);
        assert!(s.saddles_between(0, 2).is_empty());
    }

    #[test]
    fn single_well() {
        let (p, s) = structure("harmonic");
        assert_eq!(s.len(), 1);
        assert!(s.saddles.is_empty());
        assert!((s.barrier - 1.0).abs() < 1e-14);
        let g = Grid::for_epsilon(s.domain.clone(), 0.1, 4.0);
        let dec = s.on_grid(&p, &g).unwrap();
        assert!(dec.delta_mask.iter().zip(&dec.valley_masks[0]).all(|(d, v)| d != v));
    }

    #[test]
    fn unequal_depths_rejected() {
        // tilted double well
        let p = Potential::polynomial_1d(&[0.25, 0.1, -0.5, 0.0, 0.25]).unwrap();
        let d = BoxDomain::interval(-2.0, 2.0);
        let cps = find_critical_points(&p, &d, 0.1, &CriticalOptions::default()).unwrap();
        let r = ValleyStructure::analyze(&p, &cps, &d, &ValleyOptions::default());
        assert!(matches!(r, Err(LandscapeError::UnequalDepth { .. })));
    }

    #[test]
    fn eta_override_checked() {
        let p = Potential::builtin("double_well").unwrap();
        let d = BoxDomain::interval(-2.0, 2.0);
        let cps = find_critical_points(&p, &d, 0.1, &CriticalOptions::default()).unwrap();
        let bad = ValleyOptions { eta: Some(0.3), ..Default::default() };
        assert!(ValleyStructure::analyze(&p, &cps, &d, &bad).is_err());
        let ok = ValleyOptions { eta: Some(0.2), ..Default::default() };
        assert_eq!(ValleyStructure::analyze(&p, &cps, &d, &ok).unwrap().eta, 0.2);
    }

    #[test]
    fn small_box_rejected() {
        let p = Potential::builtin("double_well").unwrap();
        let d = BoxDomain::interval(-1.5, 1.5);
        let cps = find_critical_points(&p, &d, 0.1, &CriticalOptions::default()).unwrap();
        let r = ValleyStructure::analyze(&p, &cps, &d, &ValleyOptions::default());
        assert!(matches!(r, Err(LandscapeError::BoxTooSmall { .. })));
    }
}
