use serde::Serialize;

use super::monitor::{MonitorRecord, MonitorState};
use super::{ks_dt, Scenario, Schedule, XDomain, XStepper};
use crate::elliptic::operator_for;
use crate::error::{Error, EvolutionError};
use crate::grid::Grid;
use crate::landscape::{flood_fill, Potential, ValleyDecomposition, ValleyStructure};
use crate::linalg::thomas;
use crate::rates::ChainSpec;

#[derive(Clone, Debug)]
pub struct KsResult {
    pub epsilon: f64,
    pub x: XDomain,
    pub xi_grid: Grid,
    pub decomposition: ValleyDecomposition,
    /// Step bound actually used.
    pub dt: f64,
    pub schedule: Schedule,
    /// `vol_k * sigma(xi_k)`; sums to one.
    pub sigma_mass: Vec<f64>,
    /// Output times including 0.
    pub times: Vec<f64>,
    /// `u` at each output time, stored as `u[j * n_xi + k]`.
    pub snapshots: Vec<Vec<f64>>,
    /// One record per step.
    pub monitor: Vec<MonitorRecord>,
    /// One record per output time, including 0.
    pub records: Vec<MonitorRecord>,
    pub sup_u0: f64,
    pub mass0: f64,
}

impl KsResult {
    /// Largest relative deviation of the total mass from its initial value.
    pub fn mass_drift(&self) -> f64 {
        self.monitor
            .iter()
            .map(|m| (m.mass - self.mass0).abs())
            .fold(0.0, f64::max)
            / self.mass0.abs().max(f64::MIN_POSITIVE)
    }
}

/// Initial `u` from valley densities: `(mu / mu_i) alpha_i^0` on V_i, the
/// background `sum_i alpha_i^0` away from the valleys, and a cosine ramp over
/// the shell `H - eta <= Phi < H - eta/2` in between.
pub fn initial_data(dec: &ValleyDecomposition, chain: &ChainSpec, scenario: &Scenario) -> Vec<f64> {
    let s = &dec.structure;
    let n_xi = dec.grid.len();
    let pts = scenario.x.points();
    let outer = s.barrier - 0.5 * s.eta;
    let shells: Vec<Vec<bool>> = s
        .minima
        .iter()
        .map(|m| flood_fill(&dec.grid, &dec.phi, outer, dec.grid.nearest_node(&m.location)))
        .collect();
    let ramp: Vec<f64> = dec
        .phi
        .iter()
        .map(|&p| {
            let t = (p - (s.barrier - s.eta)) / (0.5 * s.eta);
            if t <= 0.0 {
                1.0
            } else if t >= 1.0 {
                0.0
            } else {
                0.5 * (1.0 + (std::f64::consts::PI * t).cos())
            }
        })
        .collect();
    let mut u = vec![0.0; scenario.x.nodes * n_xi];
    for (j, &xj) in pts.iter().enumerate() {
        let a: Vec<f64> = scenario.alpha0.iter().map(|p| p.eval(xj, scenario.x.length)).collect();
        let background: f64 = a.iter().sum();
        let level: Vec<f64> = a.iter().enumerate().map(|(i, ai)| chain.mu / chain.mu_i[i] * ai).collect();
        for k in 0..n_xi {
            let mut v = background;
            for i in 0..level.len() {
                if dec.valley_masks[i][k] {
                    v = level[i];
                    break;
                }
                if shells[i][k] {
                    v = background + (level[i] - background) * ramp[k];
                    break;
                }
            }
            u[j * n_xi + k] = v;
        }
    }
    u
}

/// Integrate `u_t - a u_xx = sigma^{-1} div_xi((sigma / tau) D_xi u)` on
/// `[0, T]` by Strang splitting: CN half step in x, backward Euler in xi, CN
/// half step in x.
pub fn solve_ks(
    potential: &Potential,
    structure: &ValleyStructure,
    chain: &ChainSpec,
    scenario: &Scenario,
    epsilon: f64,
) -> Result<KsResult, Error> {
    if structure.dim() != 1 {
        return Err(EvolutionError::Dimension(structure.dim()).into());
    }
    scenario.validate(structure.len())?;
    let grid = Grid::for_epsilon(structure.domain.clone(), epsilon, scenario.cells_per_sqrt_eps);
    let dec = structure.on_grid(potential, &grid)?;
    let op = operator_for(&dec, epsilon)?;
    let n_xi = grid.len();
    let vol = grid.volumes();
    let sigma_mass: Vec<f64> = dec.phi.iter().zip(&vol).map(|(&p, v)| v * op.scale.sigma(p)).collect();
    let dt = ks_dt(structure, chain, scenario, epsilon)?;
    let schedule = Schedule::new(&scenario.output_times, dt);

    let a_lower: Vec<f64> = (1..n_xi).map(|k| op.matrix.get(k, k - 1)).collect();
    let a_upper: Vec<f64> = (0..n_xi - 1).map(|k| op.matrix.get(k, k + 1)).collect();
    let a_diag = op.matrix.diagonal();

    let mut u = initial_data(&dec, chain, scenario);
    let sup_u0 = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let wx = scenario.x.weights();
    let mut state = MonitorState::new(&sigma_mass, &wx, &op, scenario.x.spacing());
    let mass0 = state.mass(&u);
    let mut monitor = Vec::with_capacity(schedule.total_steps());
    let mut snapshots = vec![u.clone()];
    let mut records = vec![state.snapshot(0.0, &u)];
    let n_x = scenario.x.nodes;
    let mut line = vec![0.0; n_x];
    let mut t = 0.0;
    for interval in 0..schedule.steps.len() {
        let h = schedule.step_size(interval);
        let lower: Vec<f64> = a_lower.iter().map(|v| h * v).collect();
        let upper: Vec<f64> = a_upper.iter().map(|v| h * v).collect();
        let diag: Vec<f64> = a_diag.iter().zip(&sigma_mass).map(|(a, m)| m + h * a).collect();
        let half = XStepper::new(&scenario.x, &scenario.diffusion, 0.5 * h);
        for step in 0..schedule.steps[interval] {
            let prev = u.clone();
            let x_step = |u: &mut [f64], line: &mut [f64]| -> Result<(), Error> {
                if let Some(st) = &half {
                    for k in 0..n_xi {
                        for j in 0..n_x {
                            line[j] = u[j * n_xi + k];
                        }
                        st.apply(line)?;
                        for j in 0..n_x {
                            u[j * n_xi + k] = line[j];
                        }
                    }
                }
                Ok(())
            };
            x_step(&mut u, &mut line)?;
            for j in 0..n_x {
                let slice = &mut u[j * n_xi..(j + 1) * n_xi];
                let rhs: Vec<f64> = slice.iter().zip(&sigma_mass).map(|(v, m)| v * m).collect();
                let next = thomas(&lower, &diag, &upper, &rhs)?;
                slice.copy_from_slice(&next);
            }
            x_step(&mut u, &mut line)?;
            t = if step + 1 == schedule.steps[interval] {
                schedule.times[interval + 1]
            } else {
                t + h
            };
            let rec = state.record(t, h, &prev, &u);
            if rec.inf < -1e-12 * sup_u0 || rec.sup > sup_u0 * (1.0 + 1e-12) {
                return Err(EvolutionError::Scheme {
                    t,
                    detail: format!("u left [0, {sup_u0}]: inf {}, sup {}", rec.inf, rec.sup),
                }
                .into());
            }
            monitor.push(rec);
        }
        records.push(state.snapshot(t, &u));
        snapshots.push(u.clone());
    }
    Ok(KsResult {
        epsilon,
        x: scenario.x.clone(),
        xi_grid: grid,
        decomposition: dec,
        dt,
        schedule: schedule.clone(),
        sigma_mass,
        times: schedule.times,
        snapshots,
        monitor,
        records,
        sup_u0,
        mass0,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValleyMassSeries {
    pub times: Vec<f64>,
    /// `masses[t][i] = int_U int_{V_i} u sigma`.
    pub masses: Vec<Vec<f64>>,
    /// Mass in the transition region.
    pub delta: Vec<f64>,
    pub total: Vec<f64>,
    /// `densities[t][i][j] = int_{V_i} u(x_j, .) sigma`.
    pub densities: Vec<Vec<Vec<f64>>>,
}

/// Valley-integrated observables at every output time.
pub fn valley_masses(ks: &KsResult) -> ValleyMassSeries {
    let n_xi = ks.xi_grid.len();
    let wx = ks.x.weights();
    let masks = &ks.decomposition.valley_masks;
    let delta_mask = &ks.decomposition.delta_mask;
    let mut out = ValleyMassSeries {
        times: ks.times.clone(),
        masses: Vec::new(),
        delta: Vec::new(),
        total: Vec::new(),
        densities: Vec::new(),
    };
    for u in &ks.snapshots {
        let dens: Vec<Vec<f64>> = masks
            .iter()
            .map(|m| {
                (0..ks.x.nodes)
                    .map(|j| (0..n_xi).filter(|&k| m[k]).map(|k| ks.sigma_mass[k] * u[j * n_xi + k]).sum())
                    .collect()
            })
            .collect();
        let masses: Vec<f64> = dens.iter().map(|d| d.iter().zip(&wx).map(|(a, w)| a * w).sum()).collect();
        let delta: f64 = (0..ks.x.nodes)
            .map(|j| wx[j] * (0..n_xi).filter(|&k| delta_mask[k]).map(|k| ks.sigma_mass[k] * u[j * n_xi + k]).sum::<f64>())
            .sum();
        out.total.push(masses.iter().sum::<f64>() + delta);
        out.masses.push(masses);
        out.delta.push(delta);
        out.densities.push(dens);
    }
    out
}
