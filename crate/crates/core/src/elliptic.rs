//! Finite-volume discretisation of `psi -> -div((sigma/tau) D psi)` with
//! zero-flux boundary, equilibrium potentials and the valley test function.

use serde::Serialize;

use crate::asymptotics::ScaleSet;
use crate::error::{AsymptoticsError, Error, RatesError, SolverError};
use crate::grid::Grid;
use crate::landscape::{Potential, ValleyDecomposition, ValleyStructure};
use std::collections::VecDeque;

use crate::linalg::{pcg, pcg_two_level, CgOptions, CoarseSpace, CsrMatrix};

/// Floor for log-weights; keeps every weight a positive normal float.
pub const LOG_WEIGHT_FLOOR: f64 = -700.0;

/// Weights are floored at `exp(-SADDLE_WEIGHT_RANGE)` times the weight at
/// height H. Edges that low carry energy far below round-off of any capacity,
/// and the floor keeps the far tails of the solution well posed.
pub const SADDLE_WEIGHT_RANGE: f64 = 40.0;

fn floored_log_weight(scale: &ScaleSet, phi: f64) -> f64 {
    scale.log_ratio(phi).max(scale.log_ratio(scale.barrier) - SADDLE_WEIGHT_RANGE)
}

#[derive(Clone, Debug)]
pub struct WeightedOperator {
    pub grid: Grid,
    pub scale: ScaleSet,
    /// `ln(sigma / tau)` at the nodes.
    pub log_weights: Vec<f64>,
    /// Edge list `(a, b, conductance)`.
    pub conductances: Vec<(usize, usize, f64)>,
    pub matrix: CsrMatrix,
}

impl WeightedOperator {
    /// Assemble from nodal log-weights with geometric-mean face weights.
    pub fn from_log_weights(grid: Grid, scale: ScaleSet, log_weights: Vec<f64>) -> Self {
        let n = grid.len();
        let mut conductances = Vec::new();
        let mut trip = Vec::with_capacity(4 * n);
        for e in grid.edges() {
            let lw = 0.5 * (log_weights[e.a] + log_weights[e.b]);
            let g = lw.max(LOG_WEIGHT_FLOOR).exp() * e.geometric_factor;
            conductances.push((e.a, e.b, g));
            trip.push((e.a, e.a, g));
            trip.push((e.b, e.b, g));
            trip.push((e.a, e.b, -g));
            trip.push((e.b, e.a, -g));
        }
        let matrix = CsrMatrix::from_triplets(n, trip);
        Self { grid, scale, log_weights, conductances, matrix }
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn epsilon(&self) -> f64 {
        self.scale.epsilon
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.log_weights[i].max(LOG_WEIGHT_FLOOR).exp()
    }

    /// `int w |D psi|^2`, i.e. `psi^T A psi`.
    pub fn energy(&self, psi: &[f64]) -> f64 {
        self.conductances.iter().map(|&(a, b, g)| g * (psi[a] - psi[b]).powi(2)).sum()
    }

    /// `E(psi) = energy / 2`.
    pub fn half_energy(&self, psi: &[f64]) -> f64 {
        0.5 * self.energy(psi)
    }

    pub fn bilinear(&self, phi: &[f64], psi: &[f64]) -> f64 {
        self.conductances
            .iter()
            .map(|&(a, b, g)| g * (phi[a] - phi[b]) * (psi[a] - psi[b]))
            .sum()
    }
}

/// Operator for `sigma/tau` of `potential` at `epsilon`.
pub fn build_weighted_operator(
    potential: &Potential,
    structure: &ValleyStructure,
    epsilon: f64,
    grid: &Grid,
) -> Result<WeightedOperator, AsymptoticsError> {
    let scale = ScaleSet::new(potential, structure, epsilon, grid)?;
    let log_weights = (0..grid.len()).map(|i| floored_log_weight(&scale, potential.value(&grid.point(i)))).collect();
    Ok(WeightedOperator::from_log_weights(grid.clone(), scale, log_weights))
}

/// Operator on the grid of an existing decomposition (reuses its nodal potential).
pub fn operator_for(dec: &ValleyDecomposition, epsilon: f64) -> Result<WeightedOperator, AsymptoticsError> {
    if !dec.grid.resolves(epsilon) {
        return Err(AsymptoticsError::Resolution {
            epsilon,
            spacing: dec.grid.max_spacing(),
            limit: epsilon.sqrt() / 4.0,
        });
    }
    let scale = ScaleSet::from_nodes(&dec.phi, &dec.grid.volumes(), &dec.structure, epsilon);
    let log_weights = dec.phi.iter().map(|&p| floored_log_weight(&scale, p)).collect();
    Ok(WeightedOperator::from_log_weights(dec.grid.clone(), scale, log_weights))
}

#[derive(Clone, Debug, Serialize)]
pub struct CapacityResult {
    pub energy: f64,
    pub psi: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Minimise the energy with `psi = values[k]` on every node of `masks[k]`.
pub fn capacity_with_masks(
    op: &WeightedOperator,
    masks: &[Vec<bool>],
    values: &[f64],
    opts: CgOptions,
) -> Result<CapacityResult, SolverError> {
    let n = op.len();
    let mut psi = vec![0.0; n];
    let mut pinned = vec![false; n];
    for (m, &v) in masks.iter().zip(values) {
        for i in 0..n {
            if m[i] {
                pinned[i] = true;
                psi[i] = v;
            }
        }
    }
    let free: Vec<usize> = (0..n).filter(|&i| !pinned[i]).collect();
    if free.is_empty() {
        return Ok(CapacityResult { energy: op.energy(&psi), psi, iterations: 0, relative_residual: 0.0 });
    }
    let a_ff = op.matrix.submatrix(&free);
    let rhs: Vec<f64> = free
        .iter()
        .map(|&i| -op.matrix.row(i).filter(|&(j, _)| pinned[j]).map(|(j, v)| v * psi[j]).sum::<f64>())
        .collect();
    let out = pcg(&a_ff, &rhs, None, opts)?;
    for (k, &i) in free.iter().enumerate() {
        psi[i] = out.x[k];
    }
    Ok(CapacityResult { energy: op.energy(&psi), psi, iterations: out.iterations, relative_residual: out.relative_residual })
}

/// Capacity with boundary data `b_i` on the valley cores V_i.
pub fn capacity(op: &WeightedOperator, dec: &ValleyDecomposition, b: &[f64]) -> Result<CapacityResult, Error> {
    if b.len() != dec.len() {
        return Err(RatesError::Dimension { expected: dec.len(), got: b.len() }.into());
    }
    Ok(capacity_with_masks(op, &dec.valley_masks, b, CgOptions::default())?)
}

/// Equilibrium potential of valley `i` (1 on V_i, 0 on the other cores).
pub fn equilibrium_potential(op: &WeightedOperator, dec: &ValleyDecomposition, i: usize) -> Result<CapacityResult, Error> {
    let mut b = vec![0.0; dec.len()];
    b[i] = 1.0;
    capacity(op, dec, &b)
}

#[derive(Clone, Debug, Serialize)]
pub struct CrossEnergy {
    pub i: usize,
    pub j: usize,
    /// `int w D phi_i . D phi_j`.
    pub cross: f64,
    /// Same value from the polarisation identity.
    pub polarized: f64,
    /// `-kappa_ij / mu`, the leading-order limit.
    pub limit: f64,
    /// `cross / limit`; NaN when the limit vanishes.
    pub ratio: f64,
    /// `ratio * rho_Z`, removing the finite-eps error of Z.
    pub ratio_z_corrected: f64,
}

/// Cross energy of two equilibrium potentials, compared with `m_ij = -kappa_ij / mu`.
pub fn cross_energy(
    op: &WeightedOperator,
    dec: &ValleyDecomposition,
    i: usize,
    j: usize,
    m_ij: f64,
    rho_z: f64,
) -> Result<CrossEnergy, Error> {
    assert_ne!(i, j, "cross energy needs two distinct valleys");
    let phi_i = equilibrium_potential(op, dec, i)?.psi;
    let phi_j = equilibrium_potential(op, dec, j)?.psi;
    let cross = op.bilinear(&phi_i, &phi_j);
    let sum: Vec<f64> = phi_i.iter().zip(&phi_j).map(|(a, b)| a + b).collect();
    let polarized = 0.5 * (op.energy(&sum) - op.energy(&phi_i) - op.energy(&phi_j));
    let ratio = if m_ij != 0.0 { cross / m_ij } else { f64::NAN };
    Ok(CrossEnergy { i, j, cross, polarized, limit: m_ij, ratio, ratio_z_corrected: ratio * rho_z })
}

/// Partition of the grid into basins: each node joins the valley core
/// nearest in lattice distance (ties go to the lower valley index).
pub fn basin_labels(dec: &ValleyDecomposition) -> Vec<usize> {
    let n = dec.grid.len();
    let mut label = vec![usize::MAX; n];
    let mut queue = VecDeque::new();
    for i in 0..n {
        if let Some(k) = dec.valley_masks.iter().position(|m| m[i]) {
            label[i] = k;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        for j in dec.grid.neighbors(i) {
            if label[j] == usize::MAX {
                label[j] = label[i];
                queue.push_back(j);
            }
        }
    }
    label
}

#[derive(Clone, Debug, Serialize)]
pub struct TestFunctionResult {
    pub psi: Vec<f64>,
    pub lambda_i: Vec<f64>,
    /// `(1/2) sum c_i lambda_i`.
    pub lambda: f64,
    pub energy: f64,
    /// `sum c_i lambda_i`, equal to `energy` for an exact solve.
    pub identity_rhs: f64,
    pub shift: f64,
    pub mu_eps: f64,
    pub flatness_i: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
}

impl TestFunctionResult {
    pub fn max_flatness(&self) -> f64 {
        self.flatness_i.iter().copied().fold(0.0, f64::max)
    }

    pub fn identity_error(&self) -> f64 {
        (self.energy - self.identity_rhs).abs() / self.energy.abs().max(f64::MIN_POSITIVE)
    }
}

/// Solve `A psi = sum_i c_i chi_{V_i} / |V_i|`, then shift so valley averages best match `b`.
pub fn test_function(
    op: &WeightedOperator,
    dec: &ValleyDecomposition,
    c: &[f64],
    b: &[f64],
    opts: CgOptions,
) -> Result<TestFunctionResult, Error> {
    let k = dec.len();
    if c.len() != k || b.len() != k {
        return Err(RatesError::Dimension { expected: k, got: c.len().min(b.len()) }.into());
    }
    let sum: f64 = c.iter().sum();
    if sum.abs() > 1e-12 * c.iter().map(|x| x.abs()).sum::<f64>().max(1.0) {
        return Err(RatesError::Range { sum }.into());
    }
    let vol = op.grid.volumes();
    let n = op.len();
    let mut rhs = vec![0.0; n];
    for (i, m) in dec.valley_masks.iter().enumerate() {
        for node in 0..n {
            if m[node] {
                rhs[node] += vol[node] * c[i] / dec.valley_measures[i];
            }
        }
    }
    let coarse = CoarseSpace::new(&op.matrix, basin_labels(dec));
    let out = pcg_two_level(&op.matrix, &rhs, None, opts.singular(), Some(&coarse))?;
    let mut psi = out.x;
    let total: f64 = vol.iter().sum();
    let mean = psi.iter().zip(&vol).map(|(p, v)| p * v).sum::<f64>() / total;
    psi.iter_mut().for_each(|p| *p -= mean);

    let averages: Vec<f64> = dec
        .valley_masks
        .iter()
        .zip(&dec.valley_measures)
        .map(|(m, meas)| (0..n).filter(|&i| m[i]).map(|i| vol[i] * psi[i]).sum::<f64>() / meas)
        .collect();
    let shift = averages.iter().zip(b).map(|(l, bi)| l - bi).sum::<f64>() / k as f64;
    psi.iter_mut().for_each(|p| *p -= shift);
    let lambda_i: Vec<f64> = averages.iter().map(|l| l - shift).collect();
    let identity_rhs: f64 = c.iter().zip(&lambda_i).map(|(ci, li)| ci * li).sum();
    let energy = op.energy(&psi);
    let flatness_i: Vec<f64> = dec
        .valley_masks
        .iter()
        .zip(b)
        .map(|(m, bi)| (0..n).filter(|&i| m[i]).map(|i| (psi[i] - bi).abs()).fold(0.0, f64::max))
        .collect();
    let mu_eps = dec
        .valley_masks
        .iter()
        .zip(c)
        .filter(|(_, ci)| **ci != 0.0)
        .map(|(m, _)| (0..n).filter(|&i| m[i]).map(|i| psi[i].abs()).fold(0.0, f64::max))
        .fold(0.0, f64::max);
    Ok(TestFunctionResult {
        lambda: 0.5 * identity_rhs,
        psi,
        lambda_i,
        energy,
        identity_rhs,
        shift,
        mu_eps,
        flatness_i,
        iterations: out.iterations,
        relative_residual: out.relative_residual,
    })
}
