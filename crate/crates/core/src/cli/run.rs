//! Subcommand pipelines.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Map, Value};

use super::config::{ConfigError, LoadedConfig};
use super::report::{envelope, matrix_rows, numbered, Cell, Output, Table};
use super::svg::{heat_map, line_plot, Series};
use crate::asymptotics::{laplace_check, strictly_decreasing, LaplaceReport};
use crate::diffusion::DiffusionField;
use crate::elliptic::{capacity, cross_energy, operator_for, test_function, CrossEnergy};
use crate::error::Error;
use crate::evolution::{summarize, sweep, ConvergenceReport, SweepEntry};
use crate::grid::Grid;
use crate::landscape::{analyze_with_spacing, CriticalPoint, ValleyStructure};
use crate::linalg::CgOptions;
use crate::rates::{build_chain, dirichlet_form, dirichlet_form_c, solve_balance, ChainSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Analyze,
    Rates,
    Asymptotics,
    Capacity,
    Testfn,
    Evolve,
    Verify,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Analyze => "analyze",
            Stage::Rates => "rates",
            Stage::Asymptotics => "asymptotics",
            Stage::Capacity => "capacity",
            Stage::Testfn => "testfn",
            Stage::Evolve => "evolve",
            Stage::Verify => "verify",
        }
    }
}

#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Numerical(Error),
    Io(std::io::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Numerical(_) => 3,
            RunError::Io(_) => 1,
        }
    }
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Config(e) => write!(f, "config error: {e}"),
            RunError::Numerical(e) => write!(f, "numerical failure: {e}"),
            RunError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

impl<E: Into<Error>> From<E> for RunError {
    fn from(e: E) -> Self {
        RunError::Numerical(e.into())
    }
}

fn io(e: std::io::Error) -> RunError {
    RunError::Io(e)
}

/// One pass/fail line of `verify`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self { name: name.into(), passed, detail }
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Summary {
    pub lines: Vec<String>,
    pub checks: Vec<Check>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CapacityRow {
    pub epsilon: f64,
    pub grid_nodes: usize,
    pub grid_spacing: f64,
    pub energy: f64,
    pub dirichlet: f64,
    pub ratio: f64,
    pub rho_z: f64,
    /// `ratio * rho_Z`.
    pub ratio_z_corrected: f64,
    pub iterations: usize,
    pub relative_residual: f64,
    pub cross: Vec<CrossEnergy>,
    #[serde(skip)]
    pub psi: Vec<f64>,
    #[serde(skip)]
    pub grid: Option<Grid>,
}

#[derive(Clone, Debug, Serialize)]
pub struct TestFnRow {
    pub epsilon: f64,
    pub grid_nodes: usize,
    pub grid_spacing: f64,
    pub c: Vec<f64>,
    pub b: Vec<f64>,
    pub energy: f64,
    pub identity_rhs: f64,
    pub identity_error: f64,
    pub lambda: f64,
    /// D(b)/2.
    pub half_dirichlet: f64,
    pub lambda_ratio: f64,
    pub lambda_i: Vec<f64>,
    pub flatness_i: Vec<f64>,
    pub max_flatness: f64,
    pub shift: f64,
    pub d_c_lambda: f64,
    pub d_c_b: f64,
    pub iterations: usize,
    pub relative_residual: f64,
    #[serde(skip)]
    pub psi: Vec<f64>,
    #[serde(skip)]
    pub grid: Option<Grid>,
}

pub struct Pipeline {
    pub cfg: LoadedConfig,
    pub out: Output,
    hash: String,
}

fn eps_key(e: f64) -> String {
    format!("{e}")
}

impl Pipeline {
    pub fn new(cfg: LoadedConfig, out: Output) -> Self {
        let hash = cfg.hash();
        Self { cfg, out, hash }
    }

    fn epsilons(&self) -> &[f64] {
        &self.cfg.config.epsilons
    }

    fn cells(&self) -> f64 {
        self.cfg.config.cells_per_sqrt_eps
    }

    pub fn landscape(&self) -> Result<(Vec<CriticalPoint>, ValleyStructure), RunError> {
        let opts = self.cfg.valley_options();
        Ok(analyze_with_spacing(&self.cfg.potential, &self.cfg.domain, self.cfg.seed_spacing(), &opts)?)
    }

    pub fn chain(&self, s: &ValleyStructure) -> Result<ChainSpec, RunError> {
        let a = self.cfg.config.evolution.as_ref().map_or(DiffusionField::Zero, |e| e.diffusion.clone());
        Ok(build_chain(s, &a)?)
    }

    pub fn write_landscape(&mut self, cps: &[CriticalPoint], s: &ValleyStructure) -> Result<String, RunError> {
        let partition: Vec<Value> = s
            .saddle_partition()
            .into_iter()
            .filter(|((i, j), _)| i < j)
            .map(|((i, j), idx)| json!({ "valleys": [i, j], "saddles": idx }))
            .collect();
        let result = json!({
            "dimension": s.dim(),
            "valleys": s.len(),
            "critical_points": cps,
            "structure": s,
            "saddle_partition": partition,
            "adjacency": s.adjacency(),
            "connected": s.is_connected(),
        });
        self.out.json("analyze.json", &envelope("analyze", &self.hash, result)).map_err(io)?;
        let p = &self.cfg.potential;
        let d = &self.cfg.domain;
        let svg = if s.dim() == 1 {
            let n = 401;
            let xs: Vec<f64> = (0..n).map(|k| d.lower[0] + d.extent(0) * k as f64 / (n - 1) as f64).collect();
            let ys: Vec<f64> = xs.iter().map(|&x| p.value(&[x]).min(s.barrier + 1.0)).collect();
            Some(line_plot(&format!("{} (clipped at H + 1)", p.name()), "xi", "Phi", &[Series::new("Phi", xs, ys)]))
        } else if s.dim() == 2 {
            let g = Grid::with_cells(d.clone(), &[120, 120]);
            let v: Vec<f64> = (0..g.len()).map(|i| p.value(&g.point(i)).min(s.barrier + 1.0)).collect();
            Some(heat_map(&format!("{} (clipped at H + 1)", p.name()), 121, 121, &v, (d.lower[0], d.upper[0]), (d.lower[1], d.upper[1])))
        } else {
            None
        };
        if let Some(svg) = svg {
            self.out.svg("potential.svg", &svg).map_err(io)?;
        }
        Ok(format!("analyze: {} critical points, K = {}, H = {:.6}, h = {:.6}, eta = {:.6}", cps.len(), s.len(), s.barrier, s.depth, s.eta))
    }

    pub fn write_rates(&mut self, chain: &ChainSpec) -> Result<String, RunError> {
        let k = chain.k;
        let mut balance: f64 = 0.0;
        for i in 0..k {
            for j in 0..k {
                balance = balance.max((chain.mu_hat[i] * chain.r[(i, j)] - chain.mu_hat[j] * chain.r[(j, i)]).abs());
            }
        }
        let result = json!({
            "kappa": matrix_rows(&chain.kappa),
            "mu_i": chain.mu_i.as_slice(),
            "mu": chain.mu,
            "mu_hat": chain.mu_hat.as_slice(),
            "r": matrix_rows(&chain.r),
            "M": matrix_rows(&chain.m),
            "generator": matrix_rows(&chain.generator),
            "generator_eigenvalues": chain.generator_eigenvalues(),
            "detailed_balance_error": balance,
        });
        self.out.json("rates.json", &envelope("rates", &self.hash, result)).map_err(io)?;
        Ok(format!("rates: r = {:?}", matrix_rows(&chain.r)))
    }

    pub fn asymptotics(&mut self, s: &ValleyStructure) -> Result<(LaplaceReport, String), RunError> {
        let rep = laplace_check(&self.cfg.potential, s, self.epsilons(), self.cells())?;
        let mut header = vec!["epsilon".to_string(), "grid_nodes".into(), "grid_spacing".into(), "Z".into(), "rho_Z".into()];
        header.extend(numbered("rho_V", s.len()));
        header.extend(["rho_Delta".to_string(), "tail_mass".into()]);
        let mut t = Table::new(header);
        for r in &rep.rows {
            let mut row: Vec<Cell> = vec![r.epsilon.into(), r.grid_nodes.into(), r.grid_spacing.into(), r.z.into(), r.rho_z.into()];
            row.extend(r.rho_v.iter().map(|&v| Cell::from(v)));
            row.extend([r.rho_delta.into(), r.tail_mass.into()]);
            t.push(row);
        }
        self.out.csv("asymptotics.csv", &t).map_err(io)?;
        self.out.json("asymptotics.json", &envelope("asymptotics", &self.hash, &rep)).map_err(io)?;
        let eps: Vec<f64> = rep.rows.iter().map(|r| r.epsilon).collect();
        let mut series = vec![Series::new("rho_Z", eps.clone(), rep.rows.iter().map(|r| r.rho_z).collect())];
        for i in 0..s.len() {
            series.push(Series::new(format!("rho_V{}", i + 1), eps.clone(), rep.rows.iter().map(|r| r.rho_v[i]).collect()));
        }
        self.out.svg("asymptotics.svg", &line_plot("Laplace ratios", "epsilon", "ratio", &series)).map_err(io)?;
        let msg = format!("asymptotics: {} rows, flags {:?}", rep.rows.len(), rep.flags);
        Ok((rep, msg))
    }

    pub fn capacity(&mut self, s: &ValleyStructure, chain: &ChainSpec) -> Result<(Vec<CapacityRow>, String), RunError> {
        let b = self.cfg.b(s.len())?;
        let dirichlet = dirichlet_form(chain, &b);
        let p = &self.cfg.potential;
        let cells = self.cells();
        let k = s.len();
        let rows = self
            .epsilons()
            .par_iter()
            .map(|&eps| -> Result<CapacityRow, Error> {
                let grid = Grid::for_epsilon(s.domain.clone(), eps, cells);
                let dec = s.on_grid(p, &grid)?;
                let op = operator_for(&dec, eps)?;
                let rho_z = op.scale.z_hat / ((2.0 * PI * eps).powf(s.dim() as f64 / 2.0) * chain.mu);
                let cap = capacity(&op, &dec, &b)?;
                let mut cross = Vec::new();
                for i in 0..k {
                    for j in i + 1..k {
                        cross.push(cross_energy(&op, &dec, i, j, chain.m[(i, j)], rho_z)?);
                    }
                }
                let ratio = cap.energy / dirichlet;
                Ok(CapacityRow {
                    epsilon: eps,
                    grid_nodes: grid.len(),
                    grid_spacing: grid.max_spacing(),
                    energy: cap.energy,
                    dirichlet,
                    ratio,
                    rho_z,
                    ratio_z_corrected: ratio * rho_z,
                    iterations: cap.iterations,
                    relative_residual: cap.relative_residual,
                    cross,
                    psi: cap.psi,
                    grid: Some(grid),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut t = Table::new([
            "epsilon",
            "grid_nodes",
            "grid_spacing",
            "energy",
            "D_b",
            "energy_over_D",
            "energy_over_D_z_corrected",
            "rho_Z",
            "iterations",
            "relative_residual",
        ]);
        for r in &rows {
            t.push(vec![
                r.epsilon.into(),
                r.grid_nodes.into(),
                r.grid_spacing.into(),
                r.energy.into(),
                r.dirichlet.into(),
                r.ratio.into(),
                r.ratio_z_corrected.into(),
                r.rho_z.into(),
                r.iterations.into(),
                r.relative_residual.into(),
            ]);
        }
        self.out.csv("capacity.csv", &t).map_err(io)?;
        let gaps: Vec<f64> = rows.iter().map(|r| (r.ratio - 1.0).abs()).collect();
        let result = json!({ "b": b, "rows": rows, "ratio_gap_decreasing": strictly_decreasing(&gaps) });
        self.out.json("capacity.json", &envelope("capacity", &self.hash, result)).map_err(io)?;
        if let Some(last) = rows.last() {
            self.plot_field("capacity.svg", &format!("capacity minimiser, eps = {}", last.epsilon), last.grid.as_ref().unwrap(), &last.psi)?;
        }
        let ratios: Vec<f64> = rows.iter().map(|r| r.ratio).collect();
        Ok((rows, format!("capacity: energy / D(b) = {ratios:?}")))
    }

    fn plot_field(&mut self, name: &str, title: &str, grid: &Grid, values: &[f64]) -> Result<(), RunError> {
        let svg = match grid.dim() {
            1 => {
                let xs: Vec<f64> = (0..grid.len()).map(|i| grid.coordinate(0, i)).collect();
                line_plot(title, "xi", "psi", &[Series::new("psi", xs, values.to_vec())])
            }
            2 => {
                let n = grid.nodes_per_axis();
                let d = grid.domain();
                heat_map(title, n[0], n[1], values, (d.lower[0], d.upper[0]), (d.lower[1], d.upper[1]))
            }
            _ => return Ok(()),
        };
        self.out.svg(name, &svg).map_err(io)
    }

    pub fn testfn(&mut self, s: &ValleyStructure, chain: &ChainSpec) -> Result<(Vec<TestFnRow>, String), RunError> {
        let c = self.cfg.c(s.len())?;
        let bal = solve_balance(chain, &c)?;
        let b = bal.b.clone();
        let p = &self.cfg.potential;
        let cells = self.cells();
        let rows = self
            .epsilons()
            .par_iter()
            .map(|&eps| -> Result<TestFnRow, Error> {
                let grid = Grid::for_epsilon(s.domain.clone(), eps, cells);
                let dec = s.on_grid(p, &grid)?;
                let op = operator_for(&dec, eps)?;
                let tf = test_function(&op, &dec, &c, &b, CgOptions::default())?;
                let half = 0.5 * bal.dirichlet;
                Ok(TestFnRow {
                    epsilon: eps,
                    grid_nodes: grid.len(),
                    grid_spacing: grid.max_spacing(),
                    c: c.clone(),
                    b: b.clone(),
                    energy: tf.energy,
                    identity_rhs: tf.identity_rhs,
                    identity_error: tf.identity_error(),
                    lambda: tf.lambda,
                    half_dirichlet: half,
                    lambda_ratio: tf.lambda / half,
                    d_c_lambda: dirichlet_form_c(chain, &c, &tf.lambda_i),
                    d_c_b: bal.d_c,
                    max_flatness: tf.max_flatness(),
                    lambda_i: tf.lambda_i,
                    flatness_i: tf.flatness_i,
                    shift: tf.shift,
                    iterations: tf.iterations,
                    relative_residual: tf.relative_residual,
                    psi: tf.psi,
                    grid: Some(grid),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let k = s.len();
        let mut header: Vec<String> = ["epsilon", "grid_nodes", "grid_spacing", "energy", "identity_rhs", "identity_error", "lambda", "D_b_half", "lambda_over_D_b_half"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.extend(numbered("lambda_", k));
        header.extend(numbered("flatness_", k));
        header.extend(["shift".to_string(), "D_c_lambda".into(), "D_c_b".into(), "iterations".into(), "relative_residual".into()]);
        let mut t = Table::new(header);
        for r in &rows {
            let mut row: Vec<Cell> = vec![
                r.epsilon.into(),
                r.grid_nodes.into(),
                r.grid_spacing.into(),
                r.energy.into(),
                r.identity_rhs.into(),
                r.identity_error.into(),
                r.lambda.into(),
                r.half_dirichlet.into(),
                r.lambda_ratio.into(),
            ];
            row.extend(r.lambda_i.iter().map(|&v| Cell::from(v)));
            row.extend(r.flatness_i.iter().map(|&v| Cell::from(v)));
            row.extend([r.shift.into(), r.d_c_lambda.into(), r.d_c_b.into(), r.iterations.into(), r.relative_residual.into()]);
            t.push(row);
        }
        self.out.csv("testfn.csv", &t).map_err(io)?;
        self.out.json("testfn.json", &envelope("testfn", &self.hash, json!({ "rows": rows }))).map_err(io)?;
        if let Some(last) = rows.last() {
            self.plot_field("testfn.svg", &format!("test function, eps = {}", last.epsilon), last.grid.as_ref().unwrap(), &last.psi)?;
        }
        let ratios: Vec<f64> = rows.iter().map(|r| r.lambda_ratio).collect();
        Ok((rows, format!("testfn: lambda / (D(b)/2) = {ratios:?}")))
    }

    pub fn evolve(&mut self, s: &ValleyStructure, chain: &ChainSpec) -> Result<(ConvergenceReport, Vec<SweepEntry>, String), RunError> {
        let Some(ev) = self.cfg.config.evolution.clone() else {
            return Err(ConfigError { line: None, column: None, message: "this command needs an \"evolution\" block".into() }.into());
        };
        let scenario = ev.scenario(self.cells());
        if ev.alpha0.len() != s.len() {
            return Err(ConfigError {
                line: super::config::line_of(&self.cfg.text, "alpha0"),
                column: None,
                message: format!("alpha0 has {} entries for {} valleys", ev.alpha0.len(), s.len()),
            }
            .into());
        }
        let eps = self.cfg.evolution_epsilons();
        let entries = sweep(&self.cfg.potential, s, chain, &scenario, &eps)?;
        let report = summarize(&scenario, &entries);
        let k = s.len();
        let wx = scenario.x.weights();
        for e in &entries {
            let mut header = vec!["t".to_string(), "epsilon".into(), "xi_nodes".into(), "x_nodes".into()];
            header.extend(numbered("mass_V", k));
            header.push("mass_Delta".into());
            header.push("total_mass".into());
            header.extend(numbered("limit_V", k));
            header.extend(["sup_u", "inf_u", "norm_sq", "x_energy", "xi_energy", "dissipation"].map(String::from));
            let mut t = Table::new(header);
            for (n, &time) in e.masses.times.iter().enumerate() {
                let rec = &e.records[n];
                let mut row: Vec<Cell> = vec![time.into(), e.row.epsilon.into(), e.row.xi_nodes.into(), e.row.x_nodes.into()];
                row.extend(e.masses.masses[n].iter().map(|&v| Cell::from(v)));
                row.push(e.masses.delta[n].into());
                row.push(e.masses.total[n].into());
                for a in &e.limit.alpha[n] {
                    row.push(a.iter().zip(&wx).map(|(v, w)| v * w).sum::<f64>().into());
                }
                row.extend([rec.sup, rec.inf, rec.norm_sq, rec.x_energy, rec.xi_energy, rec.dissipation].map(Cell::from));
                t.push(row);
            }
            self.out.csv(&format!("trajectory_eps{}.csv", eps_key(e.row.epsilon)), &t).map_err(io)?;
        }
        let mut errors = Map::new();
        for r in &report.rows {
            errors.insert(eps_key(r.epsilon), json!(r.error));
        }
        let result = json!({
            "metric": report.metric,
            "errors": errors,
            "decreasing": report.decreasing,
            "rows": report.rows,
            "flags": report.flags,
        });
        self.out.json("convergence.json", &envelope("evolve", &self.hash, result)).map_err(io)?;
        let mut series = Vec::new();
        for e in &entries {
            for i in 0..k {
                let ys = e.masses.masses.iter().map(|m| m[i]).collect();
                series.push(Series::new(format!("V{} eps={}", i + 1, e.row.epsilon), e.masses.times.clone(), ys));
            }
        }
        if let Some(e) = entries.last() {
            for i in 0..k {
                let ys = e.limit.alpha.iter().map(|a| a[i].iter().zip(&wx).map(|(v, w)| v * w).sum()).collect();
                series.push(Series::new(format!("limit V{}", i + 1), e.limit.times.clone(), ys).dashed());
            }
        }
        self.out.svg("evolution.svg", &line_plot("valley masses", "t", "mass", &series)).map_err(io)?;
        let errs: Vec<f64> = report.rows.iter().map(|r| r.error).collect();
        let msg = format!("evolve: {} error e(eps) = {errs:?}", report.metric);
        Ok((report, entries, msg))
    }
}

/// The checks `verify` reports.
pub fn verify_checks(
    chain: &ChainSpec,
    laplace: &LaplaceReport,
    cap: &[CapacityRow],
    tf: &[TestFnRow],
    evolution: Option<(&ConvergenceReport, bool)>,
) -> Vec<Check> {
    let mut out = Vec::new();
    let k = chain.k;
    let mut balance: f64 = 0.0;
    for i in 0..k {
        for j in 0..k {
            balance = balance.max((chain.mu_hat[i] * chain.r[(i, j)] - chain.mu_hat[j] * chain.r[(j, i)]).abs());
        }
    }
    out.push(Check::new("detailed_balance", balance <= 1e-12, format!("max |mu_i r_ij - mu_j r_ji| = {balance:.3e}")));
    let eig = nalgebra::SymmetricEigen::new(chain.m.clone()).eigenvalues;
    let scale = eig.iter().fold(0.0f64, |a, l| a.max(l.abs())).max(f64::MIN_POSITIVE);
    let zeros = eig.iter().filter(|l| l.abs() <= 1e-10 * scale).count();
    let psd = eig.iter().all(|&l| l >= -1e-12 * scale);
    let ones = &chain.m * nalgebra::DVector::from_element(k, 1.0);
    out.push(Check::new(
        "m_psd_null_constants",
        psd && zeros == 1 && ones.amax() <= 1e-12 * scale,
        format!("eigenvalues {:?}", eig.as_slice()),
    ));

    let gap_z: Vec<f64> = laplace.rows.iter().map(|r| (r.rho_z - 1.0).abs()).collect();
    out.push(Check::new("laplace_rho_z_decreasing", laplace.rho_z_gap_decreasing, format!("|rho_Z - 1| = {gap_z:?}")));
    for i in 0..k {
        let g: Vec<f64> = laplace.rows.iter().map(|r| (r.rho_v[i] - 1.0).abs()).collect();
        out.push(Check::new(&format!("laplace_rho_v{}_decreasing", i + 1), laplace.rho_v_gap_decreasing[i], format!("|rho_V{} - 1| = {g:?}", i + 1)));
    }
    let small: Vec<_> = laplace.rows.iter().filter(|r| r.epsilon <= 0.05 * (1.0 + 1e-12)).collect();
    if !small.is_empty() {
        let worst = small
            .iter()
            .flat_map(|r| std::iter::once(r.rho_z).chain(r.rho_v.iter().copied()))
            .map(|v| (v - 1.0).abs())
            .fold(0.0, f64::max);
        out.push(Check::new("laplace_gap_at_small_eps", worst <= 0.15, format!("max gap for eps <= 0.05: {worst:.4}")));
    }
    let deltas: Vec<f64> = laplace.rows.iter().map(|r| r.rho_delta).collect();
    out.push(Check::new("laplace_rho_delta_decreasing", laplace.rho_delta_decreasing, format!("rho_Delta = {deltas:?}")));

    let ratios: Vec<f64> = cap.iter().map(|r| r.ratio).collect();
    let band = cap.iter().filter(|r| r.epsilon <= 0.1 * (1.0 + 1e-12)).all(|r| (0.75..=1.3).contains(&r.ratio));
    out.push(Check::new("capacity_band", band, format!("energy / D(b) = {ratios:?}")));
    let gaps: Vec<f64> = ratios.iter().map(|r| (r - 1.0).abs()).collect();
    out.push(Check::new("capacity_gap_decreasing", strictly_decreasing(&gaps), format!("|ratio - 1| = {gaps:?}")));

    let ident = tf.iter().all(|r| r.identity_error <= 10.0 * CgOptions::default().rel_tol);
    let ierr: Vec<f64> = tf.iter().map(|r| r.identity_error).collect();
    out.push(Check::new("testfn_identity", ident, format!("relative identity error = {ierr:?}")));
    let lg: Vec<f64> = tf.iter().map(|r| (r.lambda_ratio - 1.0).abs()).collect();
    out.push(Check::new("testfn_lambda_gap_decreasing", strictly_decreasing(&lg), format!("|lambda / (D(b)/2) - 1| = {lg:?}")));
    let fl: Vec<f64> = tf.iter().map(|r| r.max_flatness).collect();
    out.push(Check::new("testfn_flatness_decreasing", strictly_decreasing(&fl), format!("max flatness = {fl:?}")));

    if let Some((rep, conserving)) = evolution {
        let errs: Vec<f64> = rep.rows.iter().map(|r| r.error).collect();
        out.push(Check::new("evolution_error_decreasing", rep.decreasing, format!("{} = {errs:?}", rep.metric)));
        if conserving {
            let drift = rep.rows.iter().map(|r| r.mass_drift).fold(0.0, f64::max);
            out.push(Check::new("evolution_mass_conservation", drift <= 1e-8, format!("max relative drift {drift:.3e}")));
        }
        let bounds = rep.rows.iter().all(|r| r.min_u >= -1e-12 * r.sup_u0 && r.max_u <= r.sup_u0 * (1.0 + 1e-12));
        out.push(Check::new("evolution_maximum_principle", bounds, "0 <= u <= sup u0 at every step".into()));
    }
    out
}

/// Run one subcommand; artifacts go to `out`.
pub fn run(stage: Stage, cfg: LoadedConfig, out: Output) -> Result<(Summary, Output), RunError> {
    let mut p = Pipeline::new(cfg, out);
    let mut summary = Summary::default();
    let (cps, s) = p.landscape()?;
    if matches!(stage, Stage::Analyze | Stage::Verify) {
        summary.lines.push(p.write_landscape(&cps, &s)?);
    }
    if stage == Stage::Analyze {
        return Ok((summary, p.out));
    }
    let chain = p.chain(&s)?;
    if matches!(stage, Stage::Rates | Stage::Verify) {
        summary.lines.push(p.write_rates(&chain)?);
    }
    match stage {
        Stage::Asymptotics => summary.lines.push(p.asymptotics(&s)?.1),
        Stage::Capacity => summary.lines.push(p.capacity(&s, &chain)?.1),
        Stage::Testfn => summary.lines.push(p.testfn(&s, &chain)?.1),
        Stage::Evolve => summary.lines.push(p.evolve(&s, &chain)?.2),
        Stage::Verify => {
            let (laplace, m) = p.asymptotics(&s)?;
            summary.lines.push(m);
            let (cap, m) = p.capacity(&s, &chain)?;
            summary.lines.push(m);
            let (tf, m) = p.testfn(&s, &chain)?;
            summary.lines.push(m);
            let evo = match &p.cfg.config.evolution {
                Some(ev) if s.dim() == 1 => {
                    let conserving = ev.diffusion.is_constant() || ev.diffusion.is_zero();
                    let (rep, _, m) = p.evolve(&s, &chain)?;
                    summary.lines.push(m);
                    Some((rep, conserving))
                }
                _ => None,
            };
            summary.checks = verify_checks(&chain, &laplace, &cap, &tf, evo.as_ref().map(|(r, c)| (r, *c)));
            let all = summary.checks.iter().all(|c| c.passed);
            let result = json!({ "all_passed": all, "checks": summary.checks });
            p.out.json("verify.json", &envelope("verify", &p.hash, result)).map_err(io)?;
        }
        Stage::Analyze | Stage::Rates => {}
    }
    Ok((summary, p.out))
}
