//! Partition function, Gibbs density and Laplace-type ratios by trapezoid quadrature.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{AsymptoticsError, Error};
use crate::grid::Grid;
use crate::landscape::{Potential, ValleyStructure};
use crate::rates::well_weight;

/// Default grid refinement: nodes per Gaussian width sqrt(eps).
pub const CELLS_PER_SQRT_EPS: f64 = 8.0;

/// eps, tau and Z for one noise level. Z is held as `z_hat = Z e^{h/eps}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScaleSet {
    pub epsilon: f64,
    pub barrier: f64,
    pub depth: f64,
    pub z_hat: f64,
}

fn check_resolution(grid: &Grid, epsilon: f64) -> Result<(), AsymptoticsError> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(AsymptoticsError::Epsilon(epsilon));
    }
    if !grid.resolves(epsilon) {
        return Err(AsymptoticsError::Resolution { epsilon, spacing: grid.max_spacing(), limit: epsilon.sqrt() / 4.0 });
    }
    Ok(())
}

/// `sum_nodes vol * exp(-(Phi - shift) / eps)`.
pub fn shifted_integral(phi: &[f64], volumes: &[f64], mask: Option<&[bool]>, shift: f64, epsilon: f64) -> f64 {
    phi.iter()
        .zip(volumes)
        .enumerate()
        .filter(|(i, _)| mask.is_none_or(|m| m[*i]))
        .map(|(_, (p, v))| v * (-(p - shift) / epsilon).exp())
        .sum()
}

/// Natural log of Z_eps over the grid box.
pub fn log_partition_function(potential: &Potential, epsilon: f64, grid: &Grid) -> Result<f64, AsymptoticsError> {
    check_resolution(grid, epsilon)?;
    let phi: Vec<f64> = (0..grid.len()).map(|i| potential.value(&grid.point(i))).collect();
    let lo = phi.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(shifted_integral(&phi, &grid.volumes(), None, lo, epsilon).ln() - lo / epsilon)
}

/// Z_eps by trapezoid quadrature over the grid box.
pub fn partition_function(potential: &Potential, epsilon: f64, grid: &Grid) -> Result<f64, AsymptoticsError> {
    log_partition_function(potential, epsilon, grid).map(f64::exp)
}

impl ScaleSet {
    pub fn new(potential: &Potential, structure: &ValleyStructure, epsilon: f64, grid: &Grid) -> Result<Self, AsymptoticsError> {
        check_resolution(grid, epsilon)?;
        let phi: Vec<f64> = (0..grid.len()).map(|i| potential.value(&grid.point(i))).collect();
        Ok(Self::from_nodes(&phi, &grid.volumes(), structure, epsilon))
    }

    pub fn from_nodes(phi: &[f64], volumes: &[f64], structure: &ValleyStructure, epsilon: f64) -> Self {
        let z_hat = shifted_integral(phi, volumes, None, structure.depth, epsilon);
        Self { epsilon, barrier: structure.barrier, depth: structure.depth, z_hat }
    }

    /// `tau = eps^{-1} exp(-(H - h) / eps)`.
    pub fn tau(&self) -> f64 {
        (-(self.barrier - self.depth) / self.epsilon).exp() / self.epsilon
    }

    pub fn log_tau(&self) -> f64 {
        -(self.barrier - self.depth) / self.epsilon - self.epsilon.ln()
    }

    pub fn log_z(&self) -> f64 {
        self.z_hat.ln() - self.depth / self.epsilon
    }

    pub fn z(&self) -> f64 {
        self.log_z().exp()
    }

    /// Gibbs density `Z^{-1} exp(-Phi / eps)` at a potential value.
    pub fn sigma(&self, phi: f64) -> f64 {
        (-(phi - self.depth) / self.epsilon).exp() / self.z_hat
    }

    /// `ln(sigma / tau)` at a potential value.
    pub fn log_ratio(&self, phi: f64) -> f64 {
        (self.barrier - phi) / self.epsilon + self.epsilon.ln() - self.z_hat.ln()
    }

    /// `sigma / tau` at a potential value.
    pub fn ratio(&self, phi: f64) -> f64 {
        self.log_ratio(phi).exp()
    }

    /// Leading-order closed form `eps (2 pi eps)^{-d/2} mu^{-1} exp((H - Phi) / eps)`.
    pub fn ratio_leading_order(&self, phi: f64, dim: usize, mu: f64) -> f64 {
        self.epsilon * (2.0 * PI * self.epsilon).powf(-(dim as f64) / 2.0) / mu
            * ((self.barrier - phi) / self.epsilon).exp()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LaplaceRow {
    pub epsilon: f64,
    pub grid_nodes: usize,
    pub grid_spacing: f64,
    pub z: f64,
    pub rho_z: f64,
    pub rho_v: Vec<f64>,
    pub rho_delta: f64,
    pub tail_mass: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LaplaceReport {
    pub rows: Vec<LaplaceRow>,
    pub rho_z_gap_decreasing: bool,
    pub rho_v_gap_decreasing: Vec<bool>,
    pub rho_delta_decreasing: bool,
    pub flags: Vec<String>,
}

pub fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

/// Laplace ratios at one eps on the given grid.
pub fn laplace_row(potential: &Potential, structure: &ValleyStructure, epsilon: f64, grid: &Grid) -> Result<LaplaceRow, Error> {
    check_resolution(grid, epsilon)?;
    let dec = structure.on_grid(potential, grid)?;
    let vol = grid.volumes();
    let d = grid.dim() as f64;
    let h = structure.depth;
    let gauss = (2.0 * PI * epsilon).powf(d / 2.0);
    let mu_i = structure
        .minima
        .iter()
        .map(well_weight)
        .collect::<Result<Vec<_>, _>>()?;
    let mu: f64 = mu_i.iter().sum();
    let scale = ScaleSet::from_nodes(&dec.phi, &vol, structure, epsilon);
    let rho_v = dec
        .valley_masks
        .iter()
        .zip(&mu_i)
        .map(|(m, mi)| shifted_integral(&dec.phi, &vol, Some(m), h, epsilon) / (gauss * mi))
        .collect();
    let rho_delta = shifted_integral(&dec.phi, &vol, Some(&dec.delta_mask), h, epsilon) / epsilon.powf(d / 2.0);
    let tail_region: Vec<bool> = dec.phi.iter().map(|&p| p >= structure.barrier + 1.0).collect();
    let tail = tail_mass_on(&dec.phi, &vol, &scale, &tail_region)?;
    Ok(LaplaceRow {
        epsilon,
        grid_nodes: grid.len(),
        grid_spacing: grid.max_spacing(),
        z: scale.z(),
        rho_z: scale.z_hat / (gauss * mu),
        rho_v,
        rho_delta,
        tail_mass: tail.value,
    })
}

/// Ratios over an eps list with trend diagnostics; grids use `cells_per_sqrt_eps`.
pub fn laplace_check(
    potential: &Potential,
    structure: &ValleyStructure,
    epsilons: &[f64],
    cells_per_sqrt_eps: f64,
) -> Result<LaplaceReport, Error> {
    let rows = epsilons
        .par_iter()
        .map(|&e| {
            let grid = Grid::for_epsilon(structure.domain.clone(), e, cells_per_sqrt_eps);
            laplace_row(potential, structure, e, &grid)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let gap_z: Vec<f64> = rows.iter().map(|r| (r.rho_z - 1.0).abs()).collect();
    let rho_z_gap_decreasing = strictly_decreasing(&gap_z);
    let rho_v_gap_decreasing: Vec<bool> = (0..structure.len())
        .map(|i| strictly_decreasing(&rows.iter().map(|r| (r.rho_v[i] - 1.0).abs()).collect::<Vec<_>>()))
        .collect();
    let rho_delta_decreasing = strictly_decreasing(&rows.iter().map(|r| r.rho_delta).collect::<Vec<_>>());
    let mut flags = Vec::new();
    if !rho_z_gap_decreasing {
        flags.push(format!("|rho_Z - 1| not decreasing: {gap_z:?}"));
    }
    for (i, ok) in rho_v_gap_decreasing.iter().enumerate() {
        if !ok {
            let g: Vec<f64> = rows.iter().map(|r| (r.rho_v[i] - 1.0).abs()).collect();
            flags.push(format!("|rho_V{} - 1| not decreasing: {g:?}", i + 1));
        }
    }
    if !rho_delta_decreasing {
        flags.push("rho_Delta not decreasing".into());
    }
    Ok(LaplaceReport { rows, rho_z_gap_decreasing, rho_v_gap_decreasing, rho_delta_decreasing, flags })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TailMass {
    pub epsilon: f64,
    /// Quadrature of `sigma / tau` over the region.
    pub value: f64,
    /// Margin c with Phi >= H + c on the region.
    pub margin: f64,
    /// `eps |A| exp(-c / eps) / z_hat`, an upper bound of `value`.
    pub bound: f64,
}

fn tail_mass_on(phi: &[f64], volumes: &[f64], scale: &ScaleSet, region: &[bool]) -> Result<TailMass, AsymptoticsError> {
    let (mut value, mut area, mut lo) = (0.0, 0.0, f64::INFINITY);
    for i in 0..phi.len() {
        if region[i] {
            value += volumes[i] * scale.ratio(phi[i]);
            area += volumes[i];
            lo = lo.min(phi[i]);
        }
    }
    if area == 0.0 {
        return Ok(TailMass { epsilon: scale.epsilon, value: 0.0, margin: f64::INFINITY, bound: 0.0 });
    }
    let margin = lo - scale.barrier;
    if margin <= 0.0 {
        return Err(AsymptoticsError::Precondition { min_value: lo, barrier: scale.barrier });
    }
    let bound = scale.epsilon * area * (-margin / scale.epsilon).exp() / scale.z_hat;
    Ok(TailMass { epsilon: scale.epsilon, value, margin, bound })
}

/// `int_A sigma / tau` over the masked nodes, requiring Phi > H on A.
pub fn tail_mass(
    potential: &Potential,
    structure: &ValleyStructure,
    epsilon: f64,
    grid: &Grid,
    region: &[bool],
) -> Result<TailMass, AsymptoticsError> {
    check_resolution(grid, epsilon)?;
    let phi: Vec<f64> = (0..grid.len()).map(|i| potential.value(&grid.point(i))).collect();
    let vol = grid.volumes();
    let scale = ScaleSet::from_nodes(&phi, &vol, structure, epsilon);
    tail_mass_on(&phi, &vol, &scale, region)
}
