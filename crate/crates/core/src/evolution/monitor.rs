use serde::Serialize;

use crate::elliptic::WeightedOperator;

/// Discrete energy quantities after one full step.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonitorRecord {
    pub t: f64,
    pub sup: f64,
    pub inf: f64,
    /// `int int u sigma`.
    pub mass: f64,
    /// `int int u^2 sigma`.
    pub norm_sq: f64,
    /// `int int sigma |D_x u|^2`.
    pub x_energy: f64,
    /// `int int (sigma / tau) |D_xi u|^2`.
    pub xi_energy: f64,
    /// Running `int_0^t int int |u_t|^2 sigma`.
    pub dissipation: f64,
}

pub(crate) struct MonitorState<'a> {
    sigma_mass: &'a [f64],
    wx: &'a [f64],
    op: &'a WeightedOperator,
    hx: f64,
    dissipation: f64,
}

impl<'a> MonitorState<'a> {
    pub(crate) fn new(sigma_mass: &'a [f64], wx: &'a [f64], op: &'a WeightedOperator, hx: f64) -> Self {
        Self { sigma_mass, wx, op, hx, dissipation: 0.0 }
    }

    fn n_xi(&self) -> usize {
        self.sigma_mass.len()
    }

    pub(crate) fn mass(&self, u: &[f64]) -> f64 {
        let n = self.n_xi();
        self.wx
            .iter()
            .enumerate()
            .map(|(j, w)| w * u[j * n..(j + 1) * n].iter().zip(self.sigma_mass).map(|(a, m)| a * m).sum::<f64>())
            .sum()
    }

    /// Snapshot without advancing the dissipation integral.
    pub(crate) fn snapshot(&self, t: f64, u: &[f64]) -> MonitorRecord {
        let mut r = self.measure(t, u, u, 1.0);
        r.1.dissipation = self.dissipation;
        r.1
    }

    pub(crate) fn record(&mut self, t: f64, dt: f64, prev: &[f64], u: &[f64]) -> MonitorRecord {
        let (rate, mut rec) = self.measure(t, prev, u, dt);
        self.dissipation += dt * rate;
        rec.dissipation = self.dissipation;
        rec
    }

    fn measure(&self, t: f64, prev: &[f64], u: &[f64], dt: f64) -> (f64, MonitorRecord) {
        let n = self.n_xi();
        let nx = self.wx.len();
        let (mut sup, mut inf) = (f64::NEG_INFINITY, f64::INFINITY);
        for &v in u {
            sup = sup.max(v);
            inf = inf.min(v);
        }
        let mut norm_sq = 0.0;
        let mut rate = 0.0;
        let mut xi_energy = 0.0;
        for j in 0..nx {
            let s = &u[j * n..(j + 1) * n];
            let p = &prev[j * n..(j + 1) * n];
            norm_sq += self.wx[j] * s.iter().zip(self.sigma_mass).map(|(a, m)| a * a * m).sum::<f64>();
            rate += self.wx[j] * s.iter().zip(p).zip(self.sigma_mass).map(|((a, b), m)| ((a - b) / dt).powi(2) * m).sum::<f64>();
            xi_energy += self.wx[j] * self.op.energy(s);
        }
        let mut x_energy = 0.0;
        if nx > 1 {
            for j in 0..nx - 1 {
                for k in 0..n {
                    let d = (u[(j + 1) * n + k] - u[j * n + k]) / self.hx;
                    x_energy += self.hx * self.sigma_mass[k] * d * d;
                }
            }
        }
        (rate, MonitorRecord { t, sup, inf, mass: self.mass(u), norm_sq, x_energy, xi_energy, dissipation: 0.0 })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonitorReport {
    pub steps: usize,
    pub min_inf: f64,
    pub max_sup: f64,
    pub bounds_hold: bool,
    /// Largest single-step increase of `norm_sq`, relative to its start value.
    pub max_norm_increase: f64,
    pub lyapunov_monotone: bool,
    pub dissipation: f64,
}

/// Summary of a monitored run: maximum principle and, when there is no
/// x-diffusion, monotone decay of the sigma-weighted L^2 norm.
pub fn energy_monitor(records: &[MonitorRecord], sup_u0: f64, initial_norm_sq: f64) -> MonitorReport {
    let min_inf = records.iter().map(|r| r.inf).fold(f64::INFINITY, f64::min);
    let max_sup = records.iter().map(|r| r.sup).fold(f64::NEG_INFINITY, f64::max);
    let mut prev = initial_norm_sq;
    let mut worst: f64 = 0.0;
    for r in records {
        worst = worst.max(r.norm_sq - prev);
        prev = r.norm_sq;
    }
    let rel = worst / initial_norm_sq.abs().max(f64::MIN_POSITIVE);
    MonitorReport {
        steps: records.len(),
        min_inf,
        max_sup,
        bounds_hold: min_inf >= -1e-12 * sup_u0 && max_sup <= sup_u0 * (1.0 + 1e-12),
        max_norm_increase: rel,
        lyapunov_monotone: rel <= 1e-12,
        dissipation: records.last().map_or(0.0, |r| r.dissipation),
    }
}
