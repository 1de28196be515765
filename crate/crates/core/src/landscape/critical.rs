//! Newton search for critical points and Hessian classification.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

use super::potential::Potential;
use crate::error::LandscapeError;
use crate::grid::BoxDomain;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum CriticalKind {
    Minimum,
    IndexOneSaddle,
    Other,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CriticalPoint {
    pub location: Vec<f64>,
    pub kind: CriticalKind,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// `eigenvectors[k]` belongs to `eigenvalues[k]`.
    pub eigenvectors: Vec<Vec<f64>>,
    pub value: f64,
    pub gradient_norm: f64,
}

impl CriticalPoint {
    /// Number of negative eigenvalues.
    pub fn index(&self) -> usize {
        self.eigenvalues.iter().filter(|&&l| l < 0.0).count()
    }

    pub fn hessian_det(&self) -> f64 {
        self.eigenvalues.iter().product()
    }

    pub fn is_degenerate(&self, tol: f64) -> bool {
        self.eigenvalues.iter().any(|l| l.abs() <= tol)
    }

    /// The unstable direction of a saddle (eigenvector of the lowest eigenvalue).
    pub fn unstable_direction(&self) -> &[f64] {
        &self.eigenvectors[0]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CriticalOptions {
    pub newton_tol: f64,
    pub merge_tol: f64,
    pub degeneracy_tol: f64,
    pub max_iter: usize,
}

impl CriticalOptions {
    pub fn with_scale(scale: f64) -> Self {
        Self { newton_tol: 1e-10 * scale, merge_tol: 1e-6 * scale, degeneracy_tol: 1e-8, max_iter: 100 }
    }
}

impl Default for CriticalOptions {
    fn default() -> Self {
        Self::with_scale(1.0)
    }
}

/// Classify a point from its exact Hessian.
pub fn classify(potential: &Potential, x: &[f64], degeneracy_tol: f64) -> Result<CriticalPoint, LandscapeError> {
    let ev = potential.eval(x)?;
    let eig = SymmetricEigen::new(ev.hessian.clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let eigenvectors: Vec<Vec<f64>> = order
        .iter()
        .map(|&k| {
            let v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
            canonical_sign(v)
        })
        .collect();
    let neg = eigenvalues.iter().filter(|&&l| l < -degeneracy_tol).count();
    let pos = eigenvalues.iter().filter(|&&l| l > degeneracy_tol).count();
    let kind = match (neg, pos, eigenvalues.len()) {
        (0, p, d) if p == d => CriticalKind::Minimum,
        (1, p, d) if p + 1 == d => CriticalKind::IndexOneSaddle,
        _ => CriticalKind::Other,
    };
    Ok(CriticalPoint {
        location: x.to_vec(),
        kind,
        eigenvalues,
        eigenvectors,
        value: ev.value,
        gradient_norm: ev.gradient.norm(),
    })
}

// first nonzero component positive, so eigenvectors are reproducible
fn canonical_sign(mut v: Vec<f64>) -> Vec<f64> {
    if let Some(&first) = v.iter().find(|c| c.abs() > 1e-12) {
        if first < 0.0 {
            v.iter_mut().for_each(|c| *c = -*c);
        }
    }
    v
}

fn newton(potential: &Potential, seed: &[f64], domain: &BoxDomain, opts: &CriticalOptions) -> Option<Vec<f64>> {
    let mut x = DVector::from_column_slice(seed);
    let slack = 0.05 * domain.max_extent();
    for _ in 0..opts.max_iter {
        let g = potential.gradient(x.as_slice());
        if !g.iter().all(|v| v.is_finite()) {
            return None;
        }
        if g.norm() <= opts.newton_tol {
            return Some(polish(potential, x, g.norm()));
        }
        let h: DMatrix<f64> = potential.hessian(x.as_slice());
        let step = h.lu().solve(&g)?;
        x -= step;
        if !domain.contains(x.as_slice(), slack) {
            return None;
        }
    }
    let g = potential.gradient(x.as_slice());
    (g.norm() <= opts.newton_tol).then(|| x.as_slice().to_vec())
}

// extra Newton steps while the gradient keeps shrinking
fn polish(potential: &Potential, mut x: DVector<f64>, mut gnorm: f64) -> Vec<f64> {
    for _ in 0..4 {
        let g = potential.gradient(x.as_slice());
        let Some(step) = potential.hessian(x.as_slice()).lu().solve(&g) else { break };
        let y = &x - step;
        let gy = potential.gradient(y.as_slice()).norm();
        if !(gy < gnorm) {
            break;
        }
        x = y;
        gnorm = gy;
    }
    x.as_slice().to_vec()
}

/// Uniform seed lattice over the box with the given spacing.
pub fn seed_lattice(domain: &BoxDomain, spacing: f64) -> Vec<Vec<f64>> {
    let counts: Vec<usize> = (0..domain.dim())
        .map(|k| (domain.extent(k) / spacing).ceil().max(1.0) as usize + 1)
        .collect();
    let total: usize = counts.iter().product();
    (0..total)
        .map(|mut idx| {
            (0..domain.dim())
                .map(|k| {
                    let i = idx % counts[k];
                    idx /= counts[k];
                    domain.lower[k] + domain.extent(k) * i as f64 / (counts[k] - 1) as f64
                })
                .collect()
        })
        .collect()
}

/// Newton from every lattice seed, deduplicated and classified.
pub fn find_critical_points(
    potential: &Potential,
    domain: &BoxDomain,
    seed_spacing: f64,
    opts: &CriticalOptions,
) -> Result<Vec<CriticalPoint>, LandscapeError> {
    if potential.dim() != domain.dim() {
        return Err(LandscapeError::InvalidPotential(format!(
            "potential has dimension {} but the box has dimension {}",
            potential.dim(),
            domain.dim()
        )));
    }
    let seeds = seed_lattice(domain, seed_spacing);
    let mut found: Vec<Vec<f64>> = seeds
        .par_iter()
        .filter_map(|s| newton(potential, s, domain, opts))
        .filter(|x| domain.contains(x, opts.merge_tol))
        .collect();
    found.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut unique: Vec<Vec<f64>> = Vec::new();
    for x in found {
        let dup = unique.iter().any(|u| {
            u.iter().zip(&x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() <= opts.merge_tol
        });
        if !dup {
            unique.push(x);
        }
    }
    let points = unique
        .iter()
        .map(|x| classify(potential, x, opts.degeneracy_tol))
        .collect::<Result<Vec<_>, _>>()?;
    if !points.iter().any(|p| p.kind == CriticalKind::Minimum) {
        return Err(LandscapeError::NoMinima);
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn double_well_critical_points() {
        let p = Potential::builtin("double_well").unwrap();
        let cps = find_critical_points(&p, &BoxDomain::interval(-2.0, 2.0), 0.1, &CriticalOptions::default()).unwrap();
        assert_eq!(cps.len(), 3);
        assert_eq!(cps[0].kind, CriticalKind::Minimum);
        assert!((cps[0].location[0] + 1.0).abs() < 1e-12);
        assert_eq!(cps[1].kind, CriticalKind::IndexOneSaddle);
        assert!(cps[1].location[0].abs() < 1e-12);
        assert_eq!(cps[2].kind, CriticalKind::Minimum);
    }

    #[test]
    fn harmonic_has_one_minimum() {
        let p = Potential::builtin("harmonic").unwrap();
        let cps = find_critical_points(&p, &BoxDomain::interval(-3.0, 3.0), 0.3, &CriticalOptions::default()).unwrap();
        assert_eq!(cps.len(), 1);
        assert_eq!(cps[0].kind, CriticalKind::Minimum);
    }

    #[test]
    fn double_well_2d_saddle() {
        let p = Potential::builtin("double_well_2d").unwrap();
        let d = BoxDomain::new(vec![-2.0, -2.0], vec![2.0, 2.0]);
        let cps = find_critical_points(&p, &d, 0.2, &CriticalOptions::default()).unwrap();
        let saddles: Vec<_> = cps.iter().filter(|c| c.kind == CriticalKind::IndexOneSaddle).collect();
        assert_eq!(saddles.len(), 1);
        assert!((saddles[0].eigenvalues[0] + 1.0).abs() < 1e-12);
        assert!((saddles[0].unstable_direction()[0].abs() - 1.0).abs() < 1e-12);
        assert_eq!(cps.iter().filter(|c| c.kind == CriticalKind::Minimum).count(), 2);
        assert!(cps.iter().all(|c| c.kind != CriticalKind::Other));
    }

    #[test]
    fn no_minima_is_an_error() {
        let p = Potential::polynomial_1d(&[0.0, 0.0, -0.5]).unwrap();
        let r = find_critical_points(&p, &BoxDomain::interval(-1.0, 1.0), 0.1, &CriticalOptions::default());
        assert_eq!(r, Err(LandscapeError::NoMinima));
    }
}
