use serde::Serialize;

use super::{Scenario, Schedule, XDomain, XStepper};
use crate::error::Error;
use crate::rates::{transition_matrix, ChainSpec};

#[derive(Clone, Debug, Serialize)]
pub struct LimitResult {
    pub x: XDomain,
    /// Output times including 0.
    pub times: Vec<f64>,
    /// `alpha[t][i][j]`: valley i at x-node j.
    pub alpha: Vec<Vec<Vec<f64>>>,
    pub dt: f64,
    /// `sum_i int alpha_i dx` per output time.
    pub total_mass: Vec<f64>,
}

impl LimitResult {
    pub fn mass_drift(&self) -> f64 {
        let m0 = self.total_mass[0];
        self.total_mass.iter().map(|m| (m - m0).abs()).fold(0.0, f64::max) / m0.abs().max(f64::MIN_POSITIVE)
    }

    /// `int alpha_i dx` per output time.
    pub fn valley_totals(&self) -> Vec<Vec<f64>> {
        let w = self.x.weights();
        self.alpha
            .iter()
            .map(|a| a.iter().map(|ai| ai.iter().zip(&w).map(|(v, w)| v * w).sum()).collect())
            .collect()
    }
}

/// Strang splitting: Crank-Nicolson half steps in x around an exact
/// reaction step `exp(dt L^T)`.
pub fn solve_limit_system(chain: &ChainSpec, scenario: &Scenario, dt: f64) -> Result<LimitResult, Error> {
    scenario.validate(chain.k)?;
    let x = scenario.x.clone();
    let pts = x.points();
    let w = x.weights();
    let k = chain.k;
    let mut alpha: Vec<Vec<f64>> = scenario
        .alpha0
        .iter()
        .map(|p| pts.iter().map(|&xj| p.eval(xj, x.length)).collect())
        .collect();
    let schedule = Schedule::new(&scenario.output_times, dt);
    let total = |a: &[Vec<f64>]| -> f64 { a.iter().map(|ai| ai.iter().zip(&w).map(|(v, w)| v * w).sum::<f64>()).sum() };
    let mut out = vec![alpha.clone()];
    let mut masses = vec![total(&alpha)];
    for interval in 0..schedule.steps.len() {
        let h = schedule.step_size(interval);
        let react = transition_matrix(chain, h);
        let half = XStepper::new(&x, &scenario.diffusion, 0.5 * h);
        for _ in 0..schedule.steps[interval] {
            if let Some(st) = &half {
                for line in alpha.iter_mut() {
                    st.apply(line)?;
                }
            }
            for j in 0..x.nodes {
                let v: Vec<f64> = (0..k).map(|i| alpha[i][j]).collect();
                for i in 0..k {
                    alpha[i][j] = (0..k).map(|l| react[(i, l)] * v[l]).sum();
                }
            }
            if let Some(st) = &half {
                for line in alpha.iter_mut() {
                    st.apply(line)?;
                }
            }
        }
        masses.push(total(&alpha));
        out.push(alpha.clone());
    }
    Ok(LimitResult { x, times: schedule.times, alpha: out, dt: schedule.dt_max, total_mass: masses })
}
