//! Sparse symmetric storage, Jacobi-preconditioned CG and the Thomas algorithm.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::SolverError;

/// Compressed sparse row matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Assemble from (row, col, value) triplets; duplicates are summed.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut vals: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(r < n && c < n, "triplet out of bounds");
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(c);
                vals.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self { n, row_ptr, cols, vals }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).map(|(c, v)| v * x[c]).sum();
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        dot(x, &self.matvec(x))
    }

    pub fn bilinear_form(&self, x: &[f64], y: &[f64]) -> f64 {
        dot(x, &self.matvec(y))
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.n).all(|i| self.row(i).all(|(j, v)| (v - self.get(j, i)).abs() <= tol * v.abs().max(1e-300)))
    }

    /// Principal submatrix on `keep` (in the given order).
    pub fn submatrix(&self, keep: &[usize]) -> CsrMatrix {
        let mut map = vec![usize::MAX; self.n];
        for (k, &i) in keep.iter().enumerate() {
            map[i] = k;
        }
        let mut trip = Vec::new();
        for (k, &i) in keep.iter().enumerate() {
            for (j, v) in self.row(i) {
                if map[j] != usize::MAX {
                    trip.push((k, map[j], v));
                }
            }
        }
        CsrMatrix::from_triplets(keep.len(), trip)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CgOptions {
    pub rel_tol: f64,
    pub max_iter: usize,
    /// The matrix annihilates constants: keep residuals in its range.
    pub singular: bool,
}

impl Default for CgOptions {
    fn default() -> Self {
        Self { rel_tol: 1e-10, max_iter: 200_000, singular: false }
    }
}

impl CgOptions {
    pub fn singular(self) -> Self {
        Self { singular: true, ..self }
    }
}

/// Piecewise-constant coarse space: node `i` belongs to group `labels[i]`.
#[derive(Clone, Debug)]
pub struct CoarseSpace {
    labels: Vec<usize>,
    groups: usize,
    pinv: DMatrix<f64>,
}

impl CoarseSpace {
    /// Galerkin coarse operator `Z^T A Z`, inverted on the complement of its null space.
    pub fn new(a: &CsrMatrix, labels: Vec<usize>) -> Self {
        let groups = labels.iter().copied().max().map_or(0, |m| m + 1);
        let mut ac = DMatrix::zeros(groups, groups);
        for i in 0..a.dim() {
            for (j, v) in a.row(i) {
                ac[(labels[i], labels[j])] += v;
            }
        }
        let ac = (&ac + ac.transpose()) * 0.5;
        let eig = SymmetricEigen::new(ac);
        let top = eig.eigenvalues.iter().fold(0.0f64, |m, l| m.max(l.abs()));
        let mut pinv = DMatrix::zeros(groups, groups);
        for (k, &l) in eig.eigenvalues.iter().enumerate() {
            if l.abs() > 1e-12 * top {
                let v = eig.eigenvectors.column(k);
                pinv += v * v.transpose() / l;
            }
        }
        Self { labels, groups, pinv }
    }
}

struct Preconditioner<'a> {
    inv_diag: Vec<f64>,
    coarse: Option<&'a CoarseSpace>,
}

impl Preconditioner<'_> {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        for i in 0..r.len() {
            z[i] = r[i] * self.inv_diag[i];
        }
        if let Some(c) = self.coarse {
            let mut rc = DVector::zeros(c.groups);
            for (i, &l) in c.labels.iter().enumerate() {
                rc[l] += r[i];
            }
            let zc = &c.pinv * rc;
            for (i, &l) in c.labels.iter().enumerate() {
                z[i] += zc[l];
            }
        }
    }
}

// Project onto {sum = 0} along the diagonal, so the Jacobi part of the
// preconditioned correction is a constant.
fn project_sum(v: &mut [f64], diag: &[f64], diag_sum: f64) {
    let s = v.iter().sum::<f64>() / diag_sum;
    v.iter_mut().zip(diag).for_each(|(x, d)| *x -= s * d);
}

#[derive(Clone, Debug, PartialEq)]
pub struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Final residual relative to the right-hand side, both in the
    /// preconditioner norm `sqrt(r^T P r)`.
    pub relative_residual: f64,
}

/// Jacobi-preconditioned conjugate gradients for symmetric positive
/// (semi)definite `a`. Consistent singular systems are accepted.
pub fn pcg(a: &CsrMatrix, b: &[f64], x0: Option<&[f64]>, opts: CgOptions) -> Result<CgOutcome, SolverError> {
    pcg_two_level(a, b, x0, opts, None)
}

/// As [`pcg`], with an additive coarse correction on top of Jacobi.
pub fn pcg_two_level(
    a: &CsrMatrix,
    b: &[f64],
    x0: Option<&[f64]>,
    opts: CgOptions,
    coarse: Option<&CoarseSpace>,
) -> Result<CgOutcome, SolverError> {
    let n = a.dim();
    let diag: Vec<f64> = a.diagonal().iter().map(|&d| if d > 0.0 { d } else { 1.0 }).collect();
    let diag_sum: f64 = diag.iter().sum();
    let pre = Preconditioner { inv_diag: diag.iter().map(|d| 1.0 / d).collect(), coarse };
    let mut z = vec![0.0; n];
    let pnorm = |v: &[f64], z: &mut [f64]| -> f64 {
        pre.apply(v, z);
        dot(v, z).max(0.0).sqrt()
    };
    let mut bp = b.to_vec();
    if opts.singular {
        project_sum(&mut bp, &diag, diag_sum);
    }
    let b_norm = pnorm(&bp, &mut z);
    if b_norm == 0.0 {
        return Ok(CgOutcome { x: vec![0.0; n], iterations: 0, relative_residual: 0.0 });
    }
    let mut x = x0.map_or_else(|| vec![0.0; n], |v| v.to_vec());
    let residual = |x: &[f64]| -> Vec<f64> {
        let ax = a.matvec(x);
        let mut r: Vec<f64> = bp.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        if opts.singular {
            project_sum(&mut r, &diag, diag_sum);
        }
        r
    };
    let mut r = residual(&x);
    pre.apply(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut rel = rz.max(0.0).sqrt() / b_norm;
    let mut it = 0;
    while rel > opts.rel_tol {
        if it >= opts.max_iter {
            return Err(SolverError::Stagnation { iterations: it, residual: rel });
        }
        a.matvec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            return Err(SolverError::Stagnation { iterations: it, residual: rel });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        it += 1;
        // recompute the true residual occasionally to curb drift
        if it % 200 == 0 {
            r = residual(&x);
        } else if opts.singular {
            project_sum(&mut r, &diag, diag_sum);
        }
        pre.apply(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        rel = rz.max(0.0).sqrt() / b_norm;
    }
    let r = residual(&x);
    let relative_residual = pnorm(&r, &mut z) / b_norm;
    Ok(CgOutcome { x, iterations: it, relative_residual })
}

/// Solve a tridiagonal system. `lower[i]` couples row i+1 to i, `upper[i]` row i to i+1.
pub fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Result<Vec<f64>, SolverError> {
    let n = diag.len();
    assert!(lower.len() + 1 == n.max(1) && upper.len() + 1 == n.max(1) && rhs.len() == n);
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut x = vec![0.0; n];
    if n == 0 {
        return Ok(x);
    }
    if diag[0] == 0.0 {
        return Err(SolverError::ZeroPivot { row: 0 });
    }
    if n > 1 {
        c[0] = upper[0] / diag[0];
    }
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - lower[i - 1] * c[i - 1];
        if m == 0.0 || !m.is_finite() {
            return Err(SolverError::ZeroPivot { row: i });
        }
        if i + 1 < n {
            c[i] = upper[i] / m;
        }
        d[i] = (rhs[i] - lower[i - 1] * d[i - 1]) / m;
    }
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    Ok(x)
}
