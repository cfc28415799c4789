//! Dense and sparse complex linear algebra used by every solver tier.
//!
//! Dense factorizations for eigenproblems come from `faer`; the small dense
//! linear solves (moment systems, Newton steps) use an in-house partially
//! pivoted LU so that near-singularity is detected with an explicit pivot
//! threshold. Sparse matrices are assembled from triplets and converted to
//! compressed column storage before any factorization.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, MatRef};
use num_complex::Complex64;
use thiserror::Error;

/// Relative residual bound for dense linear solves.
pub const SOLVE_RESIDUAL_TOL: f64 = 1e-10;
/// Pivots smaller than this times `||A||_inf` mark a matrix as singular.
pub const PIVOT_TOL: f64 = 1e-14;
/// Default kernel tolerance, relative to [`SparseMatrix::norm_scale`].
pub const KERNEL_TOL: f64 = 1e-8;

pub type DenseMatrix = Mat<Complex64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is singular (pivot {pivot:.3e} at column {column}, threshold {threshold:.3e})")]
    SingularMatrix { column: usize, pivot: f64, threshold: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("iteration did not converge: {0}")]
    NoConvergence(String),
    #[error("kernel is degenerate: {count} eigenvalues within tolerance {tol:.3e}")]
    AmbiguousKernel { count: usize, tol: f64 },
}

fn inf_norm(a: MatRef<'_, Complex64>) -> f64 {
    (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| a[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
pub fn solve_dense(a: MatRef<'_, Complex64>, b: &[Complex64]) -> Result<Vec<Complex64>, LinalgError> {
    let n = a.nrows();
    if a.ncols() != n || b.len() != n {
        return Err(LinalgError::DimensionMismatch(format!(
            "A is {}x{}, b has length {}",
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    let threshold = PIVOT_TOL * inf_norm(a);
    let mut lu: Vec<Complex64> = (0..n * n).map(|k| a[(k / n, k % n)]).collect();
    let mut x = b.to_vec();

    for col in 0..n {
        let (piv_row, piv_abs) = (col..n)
            .map(|r| (r, lu[r * n + col].norm()))
            .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if piv_abs <= threshold || piv_abs == 0.0 {
            return Err(LinalgError::SingularMatrix { column: col, pivot: piv_abs, threshold });
        }
        if piv_row != col {
            for k in 0..n {
                lu.swap(col * n + k, piv_row * n + k);
            }
            x.swap(col, piv_row);
        }
        let pivot = lu[col * n + col];
        for r in col + 1..n {
            let factor = lu[r * n + col] / pivot;
            if factor == Complex64::new(0.0, 0.0) {
                continue;
            }
            lu[r * n + col] = factor;
            for k in col + 1..n {
                let upd = factor * lu[col * n + k];
                lu[r * n + k] -= upd;
            }
            let upd = factor * x[col];
            x[r] -= upd;
        }
    }
    for row in (0..n).rev() {
        let mut acc = x[row];
        for k in row + 1..n {
            acc -= lu[row * n + k] * x[k];
        }
        x[row] = acc / lu[row * n + row];
    }
    Ok(x)
}

/// All eigenvalues of a general complex square matrix.
pub fn eig_general(a: MatRef<'_, Complex64>) -> Result<Vec<Complex64>, LinalgError> {
    if a.nrows() != a.ncols() {
        return Err(LinalgError::DimensionMismatch("eigenvalues need a square matrix".into()));
    }
    a.eigenvalues()
        .map_err(|e| LinalgError::NoConvergence(format!("{e:?}")))
}

/// Eigenvalues and eigenvectors of a general matrix, eigenvectors as columns.
pub fn eig_general_vectors(
    a: MatRef<'_, Complex64>,
) -> Result<(Vec<Complex64>, DenseMatrix), LinalgError> {
    if a.nrows() != a.ncols() {
        return Err(LinalgError::DimensionMismatch("eigenvectors need a square matrix".into()));
    }
    let evd = a.eigen().map_err(|e| LinalgError::NoConvergence(format!("{e:?}")))?;
    let vals = (0..a.nrows()).map(|k| evd.S()[k]).collect();
    Ok((vals, evd.U().to_owned()))
}

/// Eigenvalues (ascending) of a Hermitian matrix; only the lower triangle is read.
pub fn eigvals_hermitian(a: MatRef<'_, Complex64>) -> Result<Vec<f64>, LinalgError> {
    a.self_adjoint_eigenvalues(faer::Side::Lower)
        .map_err(|e| LinalgError::NoConvergence(format!("{e:?}")))
}

/// Eigenvalues (ascending) and orthonormal eigenvectors of a Hermitian matrix.
pub fn eig_hermitian(a: MatRef<'_, Complex64>) -> Result<(Vec<f64>, DenseMatrix), LinalgError> {
    let evd = a
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| LinalgError::NoConvergence(format!("{e:?}")))?;
    let vals = (0..a.nrows()).map(|k| evd.S()[k].re).collect();
    Ok((vals, evd.U().to_owned()))
}

/// Dense inverse through faer's partially pivoted LU.
pub fn inverse(a: MatRef<'_, Complex64>) -> DenseMatrix {
    a.partial_piv_lu().solve(Mat::<Complex64>::identity(a.nrows(), a.ncols()))
}

pub fn norm2(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Triplet-form assembly buffer. Duplicate entries are summed on [`build`](Self::build).
#[derive(Debug, Clone)]
pub struct TripletBuilder {
    dim: usize,
    entries: Vec<(usize, usize, Complex64)>,
}

impl TripletBuilder {
    pub fn new(dim: usize) -> Self {
        Self { dim, entries: Vec::new() }
    }

    pub fn with_capacity(dim: usize, capacity: usize) -> Self {
        Self { dim, entries: Vec::with_capacity(capacity) }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn push(&mut self, row: usize, col: usize, value: Complex64) {
        assert!(row < self.dim && col < self.dim, "triplet ({row}, {col}) out of range for dimension {}", self.dim);
        if value != Complex64::new(0.0, 0.0) {
            self.entries.push((row, col, value));
        }
    }

    pub fn build(mut self) -> SparseMatrix {
        self.entries.sort_unstable_by_key(|&(r, c, _)| (c, r));
        let mut merged: Vec<(usize, usize, Complex64)> = Vec::with_capacity(self.entries.len());
        for (r, c, v) in self.entries {
            match merged.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => merged.push((r, c, v)),
            }
        }
        merged.retain(|e| e.2 != Complex64::new(0.0, 0.0));
        SparseMatrix::from_sorted(self.dim, merged)
    }
}

/// Square complex sparse matrix in compressed column storage.
#[derive(Debug, Clone)]
pub struct SparseMatrix {
    dim: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<Complex64>,
}

impl SparseMatrix {
    fn from_sorted(dim: usize, entries: Vec<(usize, usize, Complex64)>) -> Self {
        let mut col_ptr = vec![0usize; dim + 1];
        for &(_, c, _) in &entries {
            col_ptr[c + 1] += 1;
        }
        for c in 0..dim {
            col_ptr[c + 1] += col_ptr[c];
        }
        let row_idx = entries.iter().map(|e| e.0).collect();
        let values = entries.iter().map(|e| e.2).collect();
        Self { dim, col_ptr, row_idx, values }
    }

    pub fn from_dense(a: MatRef<'_, Complex64>) -> Self {
        let mut b = TripletBuilder::new(a.nrows());
        for j in 0..a.ncols() {
            for i in 0..a.nrows() {
                b.push(i, j, a[(i, j)]);
            }
        }
        b.build()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Iterates over stored `(row, col, value)` entries, column by column.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        (0..self.dim).flat_map(move |c| {
            (self.col_ptr[c]..self.col_ptr[c + 1]).map(move |k| (self.row_idx[k], c, self.values[k]))
        })
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        let range = self.col_ptr[col]..self.col_ptr[col + 1];
        match self.row_idx[range.clone()].binary_search(&row) {
            Ok(k) => self.values[range.start + k],
            Err(_) => Complex64::new(0.0, 0.0),
        }
    }

    pub fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut y = vec![Complex64::new(0.0, 0.0); self.dim];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[Complex64], y: &mut [Complex64]) {
        assert_eq!(x.len(), self.dim);
        y.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        for c in 0..self.dim {
            let xc = x[c];
            if xc == Complex64::new(0.0, 0.0) {
                continue;
            }
            for k in self.col_ptr[c]..self.col_ptr[c + 1] {
                y[self.row_idx[k]] += self.values[k] * xc;
            }
        }
    }

    /// `||A||_inf`, the maximal absolute row sum.
    pub fn norm_scale(&self) -> f64 {
        let mut rows = vec![0.0f64; self.dim];
        for (r, _, v) in self.iter() {
            rows[r] += v.norm();
        }
        rows.into_iter().fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut m = Mat::zeros(self.dim, self.dim);
        for (r, c, v) in self.iter() {
            m[(r, c)] += v;
        }
        m
    }

    /// Copy with the diagonal shifted by `shift`.
    pub fn shifted(&self, shift: Complex64) -> SparseMatrix {
        let mut b = TripletBuilder::with_capacity(self.dim, self.nnz() + self.dim);
        for (r, c, v) in self.iter() {
            b.push(r, c, v);
        }
        for i in 0..self.dim {
            b.push(i, i, shift);
        }
        b.build()
    }

    /// Copy with row `row` replaced by the given `(col, value)` entries.
    pub fn with_row_replaced(&self, row: usize, entries: &[(usize, Complex64)]) -> SparseMatrix {
        let mut b = TripletBuilder::with_capacity(self.dim, self.nnz() + entries.len());
        for (r, c, v) in self.iter().filter(|e| e.0 != row) {
            b.push(r, c, v);
        }
        for &(c, v) in entries {
            b.push(row, c, v);
        }
        b.build()
    }

    fn to_faer(&self) -> Result<SparseColMat<usize, Complex64>, LinalgError> {
        let triplets: Vec<_> = self.iter().map(|(r, c, v)| Triplet::new(r, c, v)).collect();
        SparseColMat::try_new_from_triplets(self.dim, self.dim, &triplets)
            .map_err(|e| LinalgError::DimensionMismatch(format!("{e:?}")))
    }

    /// Sparse LU factorization with fill-reducing ordering.
    pub fn lu(&self) -> Result<SparseLu, LinalgError> {
        let a = self.to_faer()?;
        let lu = a
            .sp_lu()
            .map_err(|e| LinalgError::NoConvergence(format!("sparse LU failed: {e:?}")))?;
        Ok(SparseLu { dim: self.dim, lu })
    }
}

pub struct SparseLu {
    dim: usize,
    lu: faer::sparse::linalg::solvers::Lu<usize, Complex64>,
}

impl SparseLu {
    pub fn solve(&self, b: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(b.len(), self.dim);
        let rhs = Mat::from_fn(self.dim, 1, |i, _| b[i]);
        let x = self.lu.solve(&rhs);
        (0..self.dim).map(|i| x[(i, 0)]).collect()
    }
}

/// Deterministic start vector with no special alignment to any basis direction.
fn start_vector(n: usize) -> Vec<Complex64> {
    let v: Vec<Complex64> = (0..n)
        .map(|k| {
            let t = k as f64;
            Complex64::new(1.0 + 0.5 * (0.37 * t).sin(), 0.3 * (1.3 * t).cos())
        })
        .collect();
    let nv = norm2(&v);
    v.into_iter().map(|z| z / nv).collect()
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Kernel vector of a sparse matrix with `||L v||_2 <= tol ||v||_2`.
///
/// Runs shift-invert Arnoldi around a tiny shift so that the few eigenvalues
/// closest to zero dominate the Krylov space. If more than one converged
/// eigenvalue lies within `tol` the kernel is reported as ambiguous. The
/// returned vector has unit norm and its largest-magnitude component is real
/// and positive.
pub fn null_vector(l: &SparseMatrix, tol: f64) -> Result<Vec<Complex64>, LinalgError> {
    let n = l.dim();
    if n == 0 {
        return Err(LinalgError::DimensionMismatch("empty matrix".into()));
    }
    let scale = l.norm_scale().max(f64::MIN_POSITIVE);
    let shift = Complex64::new(-1e-3, 0.7e-3) * tol.min(1e-6 * scale);
    let lu = l.shifted(-shift).lu()?;

    let m = n.min(24);
    let mut basis: Vec<Vec<Complex64>> = Vec::with_capacity(m + 1);
    basis.push(start_vector(n));
    let mut h = Mat::<Complex64>::zeros(m + 1, m);
    let mut steps = m;
    for k in 0..m {
        let mut w = lu.solve(&basis[k]);
        // Two passes of Gram-Schmidt keep the basis orthogonal despite the
        // enormous spread of shift-inverted eigenvalues.
        for _ in 0..2 {
            for (i, q) in basis.iter().enumerate() {
                let c = dot(q, &w);
                h[(i, k)] += c;
                w.iter_mut().zip(q).for_each(|(wi, qi)| *wi -= c * qi);
            }
        }
        let nw = norm2(&w);
        h[(k + 1, k)] = Complex64::new(nw, 0.0);
        if nw <= 1e-13 * h[(0, 0)].norm().max(1.0) {
            steps = k + 1;
            break;
        }
        basis.push(w.into_iter().map(|z| z / nw).collect());
    }

    let hm = h.as_ref().submatrix(0, 0, steps, steps).to_owned();
    let (mu, y) = eig_general_vectors(hm.as_ref())?;
    let beta = if steps < h.nrows() && steps == m { h[(steps, steps - 1)].norm() } else { 0.0 };

    let mut converged_small = 0usize;
    let mut best: Option<(usize, f64)> = None;
    for (k, &mu_k) in mu.iter().enumerate() {
        if mu_k.norm() == 0.0 {
            continue;
        }
        let lambda = shift + 1.0 / mu_k;
        // Ritz residual in the shift-inverted operator, mapped back to L.
        let ritz_res = beta * y[(steps - 1, k)].norm() / mu_k.norm();
        if lambda.norm() <= tol && ritz_res <= tol.max(1e-8 * scale) {
            converged_small += 1;
        }
        if best.map_or(true, |(_, b)| mu_k.norm() > b) {
            best = Some((k, mu_k.norm()));
        }
    }
    let (kbest, _) = best.ok_or_else(|| LinalgError::NoConvergence("no Ritz values".into()))?;
    if converged_small > 1 {
        return Err(LinalgError::AmbiguousKernel { count: converged_small, tol });
    }

    let mut v = vec![Complex64::new(0.0, 0.0); n];
    for (i, q) in basis.iter().take(steps).enumerate() {
        let c = y[(i, kbest)];
        v.iter_mut().zip(q).for_each(|(vi, qi)| *vi += c * qi);
    }
    for _ in 0..3 {
        let nv = norm2(&v);
        v.iter_mut().for_each(|z| *z /= nv);
        let res = norm2(&l.matvec(&v));
        if res <= tol {
            return Ok(fix_phase(v));
        }
        v = lu.solve(&v);
    }
    let nv = norm2(&v);
    v.iter_mut().for_each(|z| *z /= nv);
    let res = norm2(&l.matvec(&v));
    if res <= tol {
        Ok(fix_phase(v))
    } else {
        Err(LinalgError::NoConvergence(format!(
            "kernel residual {res:.3e} exceeds tolerance {tol:.3e}"
        )))
    }
}

/// Outcome of a [`gmres`] solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmresStats {
    pub iterations: usize,
    /// `||b - A x||_2 / ||b||_2` as tracked by the Arnoldi recurrence.
    pub relative_residual: f64,
}

/// Restarted GMRES for `A x = b` with right preconditioner `M`, i.e. the
/// iteration runs on `A M y = b` and returns `x = M y`.
///
/// `apply_a` and `apply_m` write their result into the second argument.
pub fn gmres(
    apply_a: impl Fn(&[Complex64], &mut [Complex64]),
    apply_m: impl Fn(&[Complex64], &mut [Complex64]),
    b: &[Complex64],
    tol: f64,
    restart: usize,
    max_iter: usize,
) -> Result<(Vec<Complex64>, GmresStats), LinalgError> {
    let n = b.len();
    let zero = Complex64::new(0.0, 0.0);
    let bnorm = norm2(b);
    let mut x = vec![zero; n];
    if bnorm == 0.0 {
        return Ok((x, GmresStats { iterations: 0, relative_residual: 0.0 }));
    }
    let restart = restart.max(1).min(n);
    let mut r = b.to_vec();
    let mut total = 0usize;
    let mut tmp = vec![zero; n];
    let mut w = vec![zero; n];
    let mut rel = 1.0;
    while total < max_iter {
        let beta = norm2(&r);
        rel = beta / bnorm;
        if rel <= tol {
            break;
        }
        let mut basis: Vec<Vec<Complex64>> = vec![r.iter().map(|z| z / beta).collect()];
        let mut h = vec![vec![zero; restart]; restart + 1];
        let (mut cs, mut sn) = (vec![zero; restart], vec![zero; restart]);
        let mut g = vec![zero; restart + 1];
        g[0] = Complex64::new(beta, 0.0);
        let mut k = 0;
        while k < restart && total < max_iter {
            apply_m(&basis[k], &mut tmp);
            apply_a(&tmp, &mut w);
            for _ in 0..2 {
                for (i, q) in basis.iter().enumerate() {
                    let c = dot(q, &w);
                    h[i][k] += c;
                    w.iter_mut().zip(q).for_each(|(wi, qi)| *wi -= c * qi);
                }
            }
            let hn = norm2(&w);
            h[k + 1][k] = Complex64::new(hn, 0.0);
            for i in 0..k {
                let t = cs[i].conj() * h[i][k] + sn[i].conj() * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = t;
            }
            let (a, bb) = (h[k][k], h[k + 1][k]);
            let rho = (a.norm_sqr() + bb.norm_sqr()).sqrt();
            if rho == 0.0 {
                return Err(LinalgError::NoConvergence("GMRES breakdown".into()));
            }
            cs[k] = a / rho;
            sn[k] = bb / rho;
            h[k][k] = Complex64::new(rho, 0.0);
            h[k + 1][k] = zero;
            g[k + 1] = -sn[k] * g[k];
            g[k] = cs[k].conj() * g[k];
            total += 1;
            k += 1;
            rel = g[k].norm() / bnorm;
            if rel <= tol || hn <= 1e-300 {
                break;
            }
            basis.push(w.iter().map(|z| z / hn).collect());
        }
        // Back substitution for the small triangular system.
        let mut y = vec![zero; k];
        for i in (0..k).rev() {
            let mut s = g[i];
            for j in i + 1..k {
                s -= h[i][j] * y[j];
            }
            y[i] = s / h[i][i];
        }
        let mut z = vec![zero; n];
        for (j, yj) in y.iter().enumerate() {
            z.iter_mut().zip(&basis[j]).for_each(|(zi, q)| *zi += yj * q);
        }
        apply_m(&z, &mut tmp);
        x.iter_mut().zip(&tmp).for_each(|(xi, t)| *xi += t);
        apply_a(&x, &mut w);
        r.iter_mut().zip(b.iter().zip(&w)).for_each(|(ri, (bi, wi))| *ri = bi - wi);
        rel = norm2(&r) / bnorm;
        if rel <= tol {
            break;
        }
    }
    if rel <= tol {
        Ok((x, GmresStats { iterations: total, relative_residual: rel }))
    } else {
        Err(LinalgError::NoConvergence(format!(
            "GMRES residual {rel:.3e} after {total} iterations exceeds {tol:.3e}"
        )))
    }
}

/// Normalizes to unit 2-norm and rotates the largest component onto the positive real axis.
pub fn fix_phase(mut v: Vec<Complex64>) -> Vec<Complex64> {
    let nv = norm2(&v);
    let pivot = v
        .iter()
        .copied()
        .fold(Complex64::new(0.0, 0.0), |a, b| if b.norm() > a.norm() { b } else { a });
    if nv > 0.0 && pivot.norm() > 0.0 {
        let phase = pivot.conj() / pivot.norm();
        v.iter_mut().for_each(|z| *z = *z * phase / nv);
    }
    v
}
