//! Time-rescaled Kramers-Smoluchowski evolution on `[0, l] x box`, its
//! reaction-diffusion limit, and the comparison between the two.

mod ks;
mod limit;
mod monitor;

pub use ks::{initial_data, solve_ks, valley_masses, KsResult, ValleyMassSeries};
pub use limit::{solve_limit_system, LimitResult};
pub use monitor::{energy_monitor, MonitorRecord, MonitorReport};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffusion::DiffusionField;
use crate::error::{Error, EvolutionError, SolverError};
use crate::landscape::{Potential, ValleyStructure};
use crate::linalg::thomas;
use crate::rates::ChainSpec;

/// Initial valley density alpha_i^0(x).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AlphaProfile {
    Constant { value: f64 },
    /// `mean + amplitude * cos(mode * pi * x / l)`.
    Cosine { mean: f64, amplitude: f64, mode: u32 },
}

impl AlphaProfile {
    pub fn eval(&self, x: f64, length: f64) -> f64 {
        match *self {
            AlphaProfile::Constant { value } => value,
            AlphaProfile::Cosine { mean, amplitude, mode } => {
                mean + amplitude * (mode as f64 * std::f64::consts::PI * x / length).cos()
            }
        }
    }

    pub fn min_value(&self) -> f64 {
        match *self {
            AlphaProfile::Constant { value } => value,
            AlphaProfile::Cosine { mean, amplitude, mode } => {
                if mode == 0 {
                    mean + amplitude
                } else {
                    mean - amplitude.abs()
                }
            }
        }
    }
}

/// Vertex-centred grid on `[0, length]`; a single node stands for the whole
/// interval with no spatial structure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct XDomain {
    pub length: f64,
    pub nodes: usize,
}

impl XDomain {
    pub fn spacing(&self) -> f64 {
        if self.nodes > 1 {
            self.length / (self.nodes - 1) as f64
        } else {
            self.length
        }
    }

    pub fn points(&self) -> Vec<f64> {
        if self.nodes == 1 {
            return vec![0.5 * self.length];
        }
        let h = self.spacing();
        (0..self.nodes).map(|j| j as f64 * h).collect()
    }

    /// Trapezoid weights.
    pub fn weights(&self) -> Vec<f64> {
        if self.nodes == 1 {
            return vec![self.length];
        }
        let h = self.spacing();
        (0..self.nodes)
            .map(|j| if j == 0 || j + 1 == self.nodes { 0.5 * h } else { h })
            .collect()
    }
}

/// Everything that fixes a run except eps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub x: XDomain,
    pub diffusion: DiffusionField,
    pub alpha0: Vec<AlphaProfile>,
    /// Strictly increasing, positive; the last entry is T.
    pub output_times: Vec<f64>,
    /// Upper bound on the time step.
    pub dt: f64,
    /// Shrink dt to the accuracy bounds instead of rejecting it.
    pub adapt_dt: bool,
    /// Nodes per sqrt(eps) on the xi-grid.
    pub cells_per_sqrt_eps: f64,
}

impl Scenario {
    pub fn validate(&self, k: usize) -> Result<(), EvolutionError> {
        let bad = |m: &str| Err(EvolutionError::Scenario(m.to_string()));
        if self.alpha0.len() != k {
            return Err(EvolutionError::Scenario(format!("alpha0 has {} entries for {k} valleys", self.alpha0.len())));
        }
        if !(self.x.length > 0.0) || self.x.nodes == 0 {
            return bad("x-domain needs positive length and at least one node");
        }
        if self.output_times.is_empty()
            || self.output_times[0] <= 0.0
            || self.output_times.windows(2).any(|w| w[1] <= w[0])
        {
            return bad("output times must be positive and strictly increasing");
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be positive");
        }
        if self.alpha0.iter().any(|a| a.min_value() < 0.0) {
            return bad("initial densities must be nonnegative");
        }
        if self.diffusion.min_value() < 0.0 {
            return bad("diffusion coefficient must be nonnegative");
        }
        if !(self.cells_per_sqrt_eps >= 4.0) {
            return bad("cells_per_sqrt_eps must be at least 4");
        }
        Ok(())
    }

    pub fn t_end(&self) -> f64 {
        *self.output_times.last().unwrap()
    }
}

/// Steps per output interval for a step bound `dt`; interval `n` is split
/// into `steps[n]` equal steps.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Schedule {
    pub times: Vec<f64>,
    pub steps: Vec<usize>,
    pub dt_max: f64,
}

impl Schedule {
    pub fn new(output_times: &[f64], dt_max: f64) -> Self {
        let mut times = vec![0.0];
        times.extend_from_slice(output_times);
        let steps = times
            .windows(2)
            .map(|w| (((w[1] - w[0]) / dt_max) - 1e-9).ceil().max(1.0) as usize)
            .collect();
        Self { times, steps, dt_max }
    }

    pub fn step_size(&self, interval: usize) -> f64 {
        (self.times[interval + 1] - self.times[interval]) / self.steps[interval] as f64
    }

    pub fn total_steps(&self) -> usize {
        self.steps.iter().sum()
    }
}

/// Accuracy bound of the limit solver: `0.01 min(1 / max r, h_x^2 / a_max)`.
pub fn limit_dt_bound(chain: &ChainSpec, x: &XDomain, diffusion: &DiffusionField) -> f64 {
    let rmax = chain.r.iter().copied().fold(0.0, f64::max);
    let mut b = f64::INFINITY;
    if rmax > 0.0 {
        b = b.min(1.0 / rmax);
    }
    let amax = diffusion.max_value();
    if x.nodes > 1 && amax > 0.0 {
        b = b.min(x.spacing().powi(2) / amax);
    }
    0.01 * b
}

/// Intra-well relaxation bound `0.1 tau eps / lambda_max` in rescaled time.
pub fn relaxation_dt_bound(structure: &ValleyStructure, epsilon: f64) -> f64 {
    let lmax = structure
        .minima
        .iter()
        .flat_map(|m| m.eigenvalues.iter().copied())
        .fold(0.0, f64::max);
    let eps_tau = (-(structure.barrier - structure.depth) / epsilon).exp();
    0.1 * eps_tau / lmax
}

/// Crank-Nicolson for `u_t = a(x) u_xx` with reflected ghost nodes.
#[derive(Clone, Debug)]
pub(crate) struct XStepper {
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
    // explicit half: coefficients of u_{j-1}, u_j, u_{j+1}
    e_lower: Vec<f64>,
    e_diag: Vec<f64>,
    e_upper: Vec<f64>,
}

impl XStepper {
    /// Stepper over time `dt` (callers pass half steps for Strang splitting).
    pub(crate) fn new(x: &XDomain, diffusion: &DiffusionField, dt: f64) -> Option<Self> {
        let n = x.nodes;
        if n < 2 || diffusion.is_zero() {
            return None;
        }
        let h2 = x.spacing().powi(2);
        let pts = x.points();
        let mut lower = vec![0.0; n - 1];
        let mut upper = vec![0.0; n - 1];
        let mut diag = vec![0.0; n];
        let (mut e_lower, mut e_diag, mut e_upper) = (vec![0.0; n - 1], vec![0.0; n], vec![0.0; n - 1]);
        for j in 0..n {
            let c = 0.5 * dt * diffusion.eval(pts[j]) / h2;
            // ghost reflection doubles the single neighbour at the ends
            let (wl, wu) = match j {
                0 => (0.0, 2.0),
                _ if j + 1 == n => (2.0, 0.0),
                _ => (1.0, 1.0),
            };
            diag[j] = 1.0 + 2.0 * c;
            e_diag[j] = 1.0 - 2.0 * c;
            if j > 0 {
                lower[j - 1] = -c * wl;
                e_lower[j - 1] = c * wl;
            }
            if j + 1 < n {
                upper[j] = -c * wu;
                e_upper[j] = c * wu;
            }
        }
        Some(Self { lower, diag, upper, e_lower, e_diag, e_upper })
    }

    /// Advance a strided x-line in place.
    pub(crate) fn apply(&self, line: &mut [f64]) -> Result<(), SolverError> {
        let n = self.diag.len();
        let rhs: Vec<f64> = (0..n)
            .map(|j| {
                let mut v = self.e_diag[j] * line[j];
                if j > 0 {
                    v += self.e_lower[j - 1] * line[j - 1];
                }
                if j + 1 < n {
                    v += self.e_upper[j] * line[j + 1];
                }
                v
            })
            .collect();
        let out = thomas(&self.lower, &self.diag, &self.upper, &rhs)?;
        line.copy_from_slice(&out);
        Ok(())
    }
}

/// Step bound for the KS solve at `epsilon`.
pub fn ks_dt(structure: &ValleyStructure, chain: &ChainSpec, scenario: &Scenario, epsilon: f64) -> Result<f64, EvolutionError> {
    let bound = relaxation_dt_bound(structure, epsilon).min(limit_dt_bound(chain, &scenario.x, &scenario.diffusion));
    if scenario.dt <= bound {
        return Ok(scenario.dt);
    }
    if scenario.adapt_dt {
        return Ok(bound);
    }
    // without adaptation only the positivity limit of the x-step is enforced
    let amax = scenario.diffusion.max_value();
    if scenario.x.nodes > 1 && amax > 0.0 {
        let limit = scenario.x.spacing().powi(2) / amax;
        if scenario.dt > limit {
            return Err(EvolutionError::Stability { dt: scenario.dt, bound: limit });
        }
    }
    Ok(scenario.dt)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub epsilon: f64,
    pub error: f64,
    pub xi_nodes: usize,
    pub x_nodes: usize,
    pub dt: f64,
    pub steps: usize,
    pub max_delta_mass: f64,
    pub mass_drift: f64,
    pub sup_u0: f64,
    pub min_u: f64,
    pub max_u: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceReport {
    /// `max` error for a = 0, space-time L^2 error otherwise.
    pub metric: String,
    pub rows: Vec<ConvergenceRow>,
    pub decreasing: bool,
    pub flags: Vec<String>,
}

/// Error between valley observables of the KS solve and the limit system.
pub fn compare_with_limit(ks: &KsResult, masses: &ValleyMassSeries, limit: &LimitResult, spatial: bool) -> f64 {
    let wx = ks.x.weights();
    if !spatial {
        let mut e: f64 = 0.0;
        for (t, m) in masses.masses.iter().enumerate() {
            for (i, mi) in m.iter().enumerate() {
                let reference: f64 = limit.alpha[t][i].iter().zip(&wx).map(|(a, w)| a * w).sum();
                e = e.max((mi - reference).abs());
            }
        }
        return e;
    }
    // trapezoid in x and over output times
    let per_time: Vec<f64> = (0..masses.times.len())
        .map(|t| {
            masses.densities[t]
                .iter()
                .zip(&limit.alpha[t])
                .map(|(d, a)| d.iter().zip(a).zip(&wx).map(|((u, v), w)| w * (u - v).powi(2)).sum::<f64>())
                .sum()
        })
        .collect();
    let times = &masses.times;
    let integral: f64 = times
        .windows(2)
        .zip(per_time.windows(2))
        .map(|(t, f)| 0.5 * (t[1] - t[0]) * (f[0] + f[1]))
        .sum();
    integral.sqrt()
}

/// Everything produced at one eps of a sweep.
#[derive(Clone, Debug)]
pub struct SweepEntry {
    pub row: ConvergenceRow,
    pub masses: ValleyMassSeries,
    pub limit: LimitResult,
    /// Monitor records at the output times.
    pub records: Vec<MonitorRecord>,
}

/// Whether the sweep compares x-resolved densities rather than valley masses.
pub fn is_spatial(scenario: &Scenario) -> bool {
    !scenario.diffusion.is_zero() && scenario.x.nodes > 1
}

/// KS solve, valley masses and the matching limit solve at one eps.
pub fn sweep_entry(
    potential: &Potential,
    structure: &ValleyStructure,
    chain: &ChainSpec,
    scenario: &Scenario,
    epsilon: f64,
) -> Result<SweepEntry, Error> {
    let ks = solve_ks(potential, structure, chain, scenario, epsilon)?;
    let masses = valley_masses(&ks);
    let limit = solve_limit_system(chain, scenario, ks.dt)?;
    let error = compare_with_limit(&ks, &masses, &limit, is_spatial(scenario));
    let row = ConvergenceRow {
        epsilon,
        error,
        xi_nodes: ks.xi_grid.len(),
        x_nodes: ks.x.nodes,
        dt: ks.dt,
        steps: ks.monitor.len(),
        max_delta_mass: masses.delta.iter().copied().fold(0.0, f64::max),
        mass_drift: ks.mass_drift(),
        sup_u0: ks.sup_u0,
        min_u: ks.monitor.iter().map(|m| m.inf).fold(f64::INFINITY, f64::min),
        max_u: ks.monitor.iter().map(|m| m.sup).fold(f64::NEG_INFINITY, f64::max),
    };
    Ok(SweepEntry { row, masses, limit, records: ks.records })
}

/// Sweep entries for every eps, in list order.
pub fn sweep(
    potential: &Potential,
    structure: &ValleyStructure,
    chain: &ChainSpec,
    scenario: &Scenario,
    epsilons: &[f64],
) -> Result<Vec<SweepEntry>, Error> {
    epsilons
        .par_iter()
        .map(|&eps| sweep_entry(potential, structure, chain, scenario, eps))
        .collect()
}

/// Error table and trend diagnostics of a sweep.
pub fn summarize(scenario: &Scenario, entries: &[SweepEntry]) -> ConvergenceReport {
    let rows: Vec<ConvergenceRow> = entries.iter().map(|e| e.row.clone()).collect();
    let errors: Vec<f64> = rows.iter().map(|r| r.error).collect();
    let decreasing = crate::asymptotics::strictly_decreasing(&errors);
    let mut flags = Vec::new();
    if !decreasing {
        flags.push(format!("error not decreasing over eps: {errors:?}"));
    }
    let spatial = is_spatial(scenario);
    ConvergenceReport {
        metric: if spatial { "l2_space_time".into() } else { "max_valley_mass".into() },
        rows,
        decreasing,
        flags,
    }
}

/// Run the KS solve at every eps and compare with the limit system.
pub fn convergence_report(
    potential: &Potential,
    structure: &ValleyStructure,
    chain: &ChainSpec,
    scenario: &Scenario,
    epsilons: &[f64],
) -> Result<ConvergenceReport, Error> {
    Ok(summarize(scenario, &sweep(potential, structure, chain, scenario, epsilons)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_splits_intervals() {
        let s = Schedule::new(&[0.5, 1.0, 2.0], 0.3);
        assert_eq!(s.steps, vec![2, 2, 4]);
        assert!((s.step_size(2) - 0.25).abs() < 1e-15);
        assert_eq!(s.total_steps(), 8);
    }

    #[test]
    fn x_stepper_conserves_trapezoid_mass() {
        let x = XDomain { length: 1.0, nodes: 11 };
        let st = XStepper::new(&x, &DiffusionField::Constant { value: 1.0 }, 1e-3).unwrap();
        let mut u: Vec<f64> = x.points().iter().map(|p| 1.0 + (3.0 * p).cos()).collect();
        let w = x.weights();
        let m0: f64 = u.iter().zip(&w).map(|(a, b)| a * b).sum();
        for _ in 0..100 {
            st.apply(&mut u).unwrap();
        }
        let m1: f64 = u.iter().zip(&w).map(|(a, b)| a * b).sum();
        assert!((m1 - m0).abs() < 1e-14);
    }

    #[test]
    fn profiles() {
        let p = AlphaProfile::Cosine { mean: 1.0, amplitude: 0.5, mode: 1 };
        assert!((p.eval(0.0, 1.0) - 1.5).abs() < 1e-15);
        assert!((p.eval(1.0, 1.0) - 0.5).abs() < 1e-15);
        assert_eq!(p.min_value(), 0.5);
    }
}
