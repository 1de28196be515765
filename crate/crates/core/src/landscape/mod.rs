//! Potentials, critical points and valley decomposition.

pub mod critical;
pub mod potential;
pub mod valleys;

pub use critical::{classify, find_critical_points, CriticalKind, CriticalOptions, CriticalPoint};
pub use potential::{Evaluation, GaussianWell, Monomial, Potential, PotentialSpec};
pub use valleys::{decompose_valleys, flood_fill, SaddleLink, ValleyDecomposition, ValleyOptions, ValleyStructure};

use crate::error::LandscapeError;
use crate::grid::BoxDomain;

/// Critical points and valley structure of `potential` on `domain` with the
/// default seed spacing of 5% of the box extent.
pub fn analyze(potential: &Potential, domain: &BoxDomain, opts: &ValleyOptions) -> Result<(Vec<CriticalPoint>, ValleyStructure), LandscapeError> {
    analyze_with_spacing(potential, domain, 0.05 * domain.max_extent(), opts)
}

pub fn analyze_with_spacing(
    potential: &Potential,
    domain: &BoxDomain,
    seed_spacing: f64,
    opts: &ValleyOptions,
) -> Result<(Vec<CriticalPoint>, ValleyStructure), LandscapeError> {
    let copts = CriticalOptions { degeneracy_tol: opts.degeneracy_tol, ..CriticalOptions::with_scale(opts.length_scale) };
    let cps = find_critical_points(potential, domain, seed_spacing, &copts)?;
    let s = ValleyStructure::analyze(potential, &cps, domain, opts)?;
    Ok((cps, s))
}
