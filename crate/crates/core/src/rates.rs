//! Kramers constants, valley weights, the valley Markov chain and the
//! quadratic form it defines on valley vectors.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::diffusion::DiffusionField;
use crate::error::RatesError;
use crate::landscape::{CriticalKind, CriticalPoint, ValleyStructure};

/// Default tolerance for a degenerate saddle determinant.
pub const DET_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct ChainSpec {
    pub k: usize,
    /// Symmetric, zero diagonal.
    pub kappa: DMatrix<f64>,
    pub mu_i: DVector<f64>,
    pub mu: f64,
    pub mu_hat: DVector<f64>,
    /// `r[(i, j)] = kappa[(i, j)] / mu_i[i]`.
    pub r: DMatrix<f64>,
    pub m: DMatrix<f64>,
    /// Generator: off-diagonal r, rows summing to zero.
    pub generator: DMatrix<f64>,
    pub diffusion: DiffusionField,
}

/// `|lambda^-| / (2 pi sqrt|det|)` for an index-one saddle.
pub fn kramers_constant(saddle: &CriticalPoint) -> Result<f64, RatesError> {
    kramers_constant_with_tol(saddle, DET_TOL)
}

pub fn kramers_constant_with_tol(saddle: &CriticalPoint, det_tol: f64) -> Result<f64, RatesError> {
    if saddle.kind != CriticalKind::IndexOneSaddle {
        return Err(RatesError::NotASaddle);
    }
    let det = saddle.hessian_det();
    if det.abs() < det_tol {
        return Err(RatesError::Degeneracy { det });
    }
    Ok(saddle.eigenvalues[0].abs() / (2.0 * PI * det.abs().sqrt()))
}

/// `1 / sqrt(det D^2 Phi(m))`.
pub fn well_weight(minimum: &CriticalPoint) -> Result<f64, RatesError> {
    let det = minimum.hessian_det();
    if det < DET_TOL {
        return Err(RatesError::Degeneracy { det });
    }
    Ok(1.0 / det.sqrt())
}

impl ChainSpec {
    /// Assemble from a symmetric kappa matrix and the well weights.
    pub fn from_parts(kappa: DMatrix<f64>, mu_i: DVector<f64>, diffusion: DiffusionField) -> Self {
        let k = mu_i.len();
        assert_eq!(kappa.shape(), (k, k));
        let mu = mu_i.sum();
        let mu_hat = &mu_i / mu;
        let r = DMatrix::from_fn(k, k, |i, j| if i == j { 0.0 } else { kappa[(i, j)] / mu_i[i] });
        let m = DMatrix::from_fn(k, k, |i, j| {
            if i == j {
                (0..k).filter(|&l| l != i).map(|l| kappa[(i, l)]).sum::<f64>() / mu
            } else {
                -kappa[(i, j)] / mu
            }
        });
        let generator = DMatrix::from_fn(k, k, |i, j| {
            if i == j {
                -(0..k).filter(|&l| l != i).map(|l| r[(i, l)]).sum::<f64>()
            } else {
                r[(i, j)]
            }
        });
        Self { k, kappa, mu_i, mu, mu_hat, r, m, generator, diffusion }
    }

    /// Eigenvalues of the generator, ascending (all real and nonpositive).
    pub fn generator_eigenvalues(&self) -> Vec<f64> {
        let (vals, _) = self.symmetric_generator_eigen();
        vals
    }

    // eigen-decomposition of D^{1/2} L D^{-1/2}, D = diag(mu_hat)
    fn symmetric_generator_eigen(&self) -> (Vec<f64>, DMatrix<f64>) {
        let k = self.k;
        let s = DMatrix::from_fn(k, k, |i, j| {
            self.generator[(i, j)] * (self.mu_hat[i] / self.mu_hat[j]).sqrt()
        });
        let s = (&s + s.transpose()) * 0.5;
        let eig = SymmetricEigen::new(s);
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let vecs = DMatrix::from_fn(k, k, |r, c| eig.eigenvectors[(r, order[c])]);
        (vals, vecs)
    }
}

/// Chain of the valley graph; kappa_{ij} sums the Kramers constants over S_{ij}.
pub fn build_chain(structure: &ValleyStructure, a: &DiffusionField) -> Result<ChainSpec, RatesError> {
    let k = structure.len();
    let mut kappa = DMatrix::zeros(k, k);
    for link in &structure.saddles {
        let (i, j) = link.valleys;
        let c = kramers_constant(&link.saddle)?;
        kappa[(i, j)] += c;
        kappa[(j, i)] += c;
    }
    let mu_i = DVector::from_iterator(k, structure.minima.iter().map(well_weight).collect::<Result<Vec<_>, _>>()?);
    Ok(ChainSpec::from_parts(kappa, mu_i, a.clone()))
}

fn check_len(chain: &ChainSpec, v: &[f64]) -> Result<(), RatesError> {
    if v.len() != chain.k {
        return Err(RatesError::Dimension { expected: chain.k, got: v.len() });
    }
    Ok(())
}

/// `(1 / 2 mu) sum_{i,j} kappa_{ij} (b_j - b_i)^2`.
pub fn dirichlet_form(chain: &ChainSpec, b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..chain.k {
        for j in 0..chain.k {
            s += chain.kappa[(i, j)] * (b[j] - b[i]).powi(2);
        }
    }
    s / (2.0 * chain.mu)
}

/// `D(b) - 2 c.b`.
pub fn dirichlet_form_c(chain: &ChainSpec, c: &[f64], b: &[f64]) -> f64 {
    dirichlet_form(chain, b) - 2.0 * c.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
}

#[derive(Clone, Debug, PartialEq)]
pub struct BalanceSolution {
    /// Minimum-norm solution of `M b = c`.
    pub b: Vec<f64>,
    pub residual: f64,
    /// D(b), equal to `b^T M b`.
    pub dirichlet: f64,
    /// `D(b) - 2 c.b`, equal to `-D(b)`.
    pub d_c: f64,
}

/// Minimum-norm solution of `M b = c` for `sum c = 0`.
pub fn solve_balance(chain: &ChainSpec, c: &[f64]) -> Result<BalanceSolution, RatesError> {
    check_len(chain, c)?;
    let sum: f64 = c.iter().sum();
    let scale = c.iter().map(|x| x.abs()).sum::<f64>().max(1.0);
    if sum.abs() > 1e-12 * scale {
        return Err(RatesError::Range { sum });
    }
    let eig = SymmetricEigen::new(chain.m.clone());
    let mnorm = eig.eigenvalues.iter().fold(0.0f64, |a, l| a.max(l.abs())).max(f64::MIN_POSITIVE);
    let tol = 1e-10 * mnorm;
    let nullity = eig.eigenvalues.iter().filter(|l| l.abs() <= tol).count();
    if nullity > 1 || (chain.k > 1 && mnorm <= f64::MIN_POSITIVE) {
        return Err(RatesError::Singularity { nullity });
    }
    let cv = DVector::from_column_slice(c);
    let mut b = DVector::zeros(chain.k);
    for (idx, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam.abs() > tol {
            let v = eig.eigenvectors.column(idx);
            b += v * (v.dot(&cv) / lam);
        }
    }
    // remove round-off along the constants
    let mean = b.mean();
    b.iter_mut().for_each(|x| *x -= mean);
    let residual = (&chain.m * &b - &cv).norm();
    let bv: Vec<f64> = b.iter().copied().collect();
    let dirichlet = dirichlet_form(chain, &bv);
    Ok(BalanceSolution { d_c: dirichlet_form_c(chain, c, &bv), b: bv, residual, dirichlet })
}

/// Valley masses of the chain at time `t`: `alpha(t) = exp(t L^T) alpha0`.
pub fn chain_marginal(chain: &ChainSpec, alpha0: &[f64], t: f64) -> Vec<f64> {
    assert_eq!(alpha0.len(), chain.k);
    assert!(t >= 0.0, "time must be nonnegative");
    let (vals, v) = chain.symmetric_generator_eigen();
    let k = chain.k;
    let sq: Vec<f64> = chain.mu_hat.iter().map(|m| m.sqrt()).collect();
    let y = DVector::from_fn(k, |i, _| alpha0[i] / sq[i]);
    let coeffs = v.transpose() * y;
    let decayed = DVector::from_fn(k, |i, _| coeffs[i] * (t * vals[i]).exp());
    let z = v * decayed;
    (0..k).map(|i| sq[i] * z[i]).collect()
}

/// Propagator `exp(t L^T)` as a dense matrix.
pub fn transition_matrix(chain: &ChainSpec, t: f64) -> DMatrix<f64> {
    let k = chain.k;
    let mut out = DMatrix::zeros(k, k);
    for j in 0..k {
        let mut e = vec![0.0; k];
        e[j] = 1.0;
        out.set_column(j, &DVector::from_vec(chain_marginal(chain, &e, t)));
    }
    out
}
