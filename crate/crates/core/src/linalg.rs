//! Dense row-major matrices, a deterministic SVD and energy-based rank
//! selection.
//!
//! The SVD is a one-sided (Hestenes) Jacobi iteration. It is slower than
//! Golub-Kahan for large inputs but the matrices here are small, it is
//! accurate for tiny singular values and its output is a pure function of the
//! input. Signs are fixed so that in every left singular vector the entry of
//! largest magnitude is non-negative (lowest index wins ties).

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

/// Singular values below this fraction of the largest are treated as zero.
pub const RANK_TOLERANCE: f64 = 1e-10;

const MAX_SWEEPS: usize = 80;
const ORTHO_TOLERANCE: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Builds a matrix from row-major data, rejecting wrong lengths and
    /// non-finite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DataLength {
                rows,
                cols,
                len: data.len(),
            });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Self::zeros(n, n);
        for (i, v) in values.iter().enumerate() {
            m.data[i * n + i] = *v;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// Stacks equally long vectors as columns.
    pub fn from_columns(rows: usize, columns: &[Vec<f64>]) -> Result<Self> {
        let cols = columns.len();
        let mut data = vec![0.0; rows * cols];
        for (c, col) in columns.iter().enumerate() {
            if col.len() != rows {
                return Err(Error::Dimension {
                    op: "from_columns",
                    lhs: (rows, cols),
                    rhs: (col.len(), 1),
                });
            }
            for (r, v) in col.iter().enumerate() {
                data[r * cols + c] = *v;
            }
        }
        Self::new(rows, cols, data)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0 || self.cols == 0
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn matmul(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.cols != rhs.rows {
            return Err(Error::Dimension {
                op: "matmul",
                lhs: self.shape(),
                rhs: rhs.shape(),
            });
        }
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        let n = rhs.cols;
        for i in 0..self.rows {
            let out_row = &mut out.data[i * n..(i + 1) * n];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let rhs_row = &rhs.data[k * n..(k + 1) * n];
                for (o, b) in out_row.iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ · rhs` without materialising the transpose.
    pub fn transpose_matmul(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.rows != rhs.rows {
            return Err(Error::Dimension {
                op: "transpose_matmul",
                lhs: self.shape(),
                rhs: rhs.shape(),
            });
        }
        let mut out = Matrix::zeros(self.cols, rhs.cols);
        let n = rhs.cols;
        for k in 0..self.rows {
            let rhs_row = &rhs.data[k * n..(k + 1) * n];
            for i in 0..self.cols {
                let a = self.data[k * self.cols + i];
                if a == 0.0 {
                    continue;
                }
                let out_row = &mut out.data[i * n..(i + 1) * n];
                for (o, b) in out_row.iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self · rhsᵀ` without materialising the transpose.
    pub fn matmul_transpose(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.cols != rhs.cols {
            return Err(Error::Dimension {
                op: "matmul_transpose",
                lhs: self.shape(),
                rhs: rhs.shape(),
            });
        }
        let mut out = Matrix::zeros(self.rows, rhs.rows);
        for i in 0..self.rows {
            let a = self.row(i);
            for j in 0..rhs.rows {
                out.data[i * rhs.rows + j] = dot(a, rhs.row(j));
            }
        }
        Ok(out)
    }

    pub fn add(&self, rhs: &Matrix) -> Result<Matrix> {
        self.zip_with(rhs, "add", |a, b| a + b)
    }

    pub fn sub(&self, rhs: &Matrix) -> Result<Matrix> {
        self.zip_with(rhs, "sub", |a, b| a - b)
    }

    pub fn hadamard(&self, rhs: &Matrix) -> Result<Matrix> {
        self.zip_with(rhs, "hadamard", |a, b| a * b)
    }

    fn zip_with(&self, rhs: &Matrix, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        if self.shape() != rhs.shape() {
            return Err(Error::Dimension {
                op,
                lhs: self.shape(),
                rhs: rhs.shape(),
            });
        }
        let data = self.data.iter().zip(&rhs.data).map(|(a, b)| f(*a, *b)).collect();
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn scale(&self, s: f64) -> Matrix {
        self.map(|v| v * s)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| f(*v)).collect(),
        }
    }

    /// `self += s · rhs`.
    pub fn axpy(&mut self, s: f64, rhs: &Matrix) -> Result<()> {
        if self.shape() != rhs.shape() {
            return Err(Error::Dimension {
                op: "axpy",
                lhs: self.shape(),
                rhs: rhs.shape(),
            });
        }
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a += s * b;
        }
        Ok(())
    }

    pub fn frobenius_norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        math::sqrt(self.frobenius_norm_sq())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Keeps the first `n` columns.
    pub fn leading_columns(&self, n: usize) -> Matrix {
        let n = n.min(self.cols);
        self.select_columns(&(0..n).collect::<Vec<_>>())
    }

    pub fn select_columns(&self, idx: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(self.rows, idx.len());
        for r in 0..self.rows {
            for (j, &c) in idx.iter().enumerate() {
                out.data[r * idx.len() + j] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// Horizontal concatenation `[self, rhs]`.
    pub fn hcat(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.rows != rhs.rows {
            return Err(Error::Dimension {
                op: "hcat",
                lhs: self.shape(),
                rhs: rhs.shape(),
            });
        }
        let cols = self.cols + rhs.cols;
        let mut data = Vec::with_capacity(self.rows * cols);
        for r in 0..self.rows {
            data.extend_from_slice(self.row(r));
            data.extend_from_slice(rhs.row(r));
        }
        Ok(Matrix {
            rows: self.rows,
            cols,
            data,
        })
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    math::sqrt(dot(a, a))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvdResult {
    /// `m × p` left singular vectors, `p = min(m, n)`.
    pub u: Matrix,
    /// Length `p`, non-increasing, non-negative.
    pub sigma: Vec<f64>,
    /// `p × n` right singular vectors, transposed.
    pub vt: Matrix,
}

impl SvdResult {
    /// `u · diag(sigma) · vt`.
    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for r in 0..us.rows {
            for (c, s) in self.sigma.iter().enumerate() {
                us.data[r * us.cols + c] *= s;
            }
        }
        us.matmul(&self.vt).expect("conformable by construction")
    }

    /// Number of singular values above [`RANK_TOLERANCE`] times the largest.
    pub fn numerical_rank(&self) -> usize {
        significant_count(&self.sigma)
    }
}

pub(crate) fn significant_count(sigma: &[f64]) -> usize {
    let max = sigma.iter().fold(0.0f64, |m, s| m.max(*s));
    if max <= 0.0 {
        return 0;
    }
    sigma.iter().filter(|s| **s > RANK_TOLERANCE * max).count()
}

/// Thin SVD `a = u · diag(sigma) · vt`.
pub fn svd(a: &Matrix) -> Result<SvdResult> {
    if a.is_empty() {
        return Err(Error::EmptyMatrix);
    }
    let mut result = if a.rows >= a.cols {
        let (u, sigma, v) = jacobi_tall(a)?;
        SvdResult {
            u,
            sigma,
            vt: v.transpose(),
        }
    } else {
        // a = (aᵀ)ᵀ = (U S Vᵀ)ᵀ = V S Uᵀ
        let (u_t, sigma, v_t) = jacobi_tall(&a.transpose())?;
        SvdResult {
            u: v_t,
            sigma,
            vt: u_t.transpose(),
        }
    };
    fix_signs(&mut result);
    Ok(result)
}

/// One-sided Jacobi on a matrix with `rows >= cols`. Returns `(u, sigma, v)`
/// with `u: m × n`, `v: n × n`, already sorted by descending sigma.
fn jacobi_tall(a: &Matrix) -> Result<(Matrix, Vec<f64>, Matrix)> {
    let (m, n) = a.shape();
    // Column-major working copies so rotations touch contiguous memory.
    let mut work: Vec<Vec<f64>> = (0..n).map(|c| a.column(c)).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|c| {
            let mut e = vec![0.0; n];
            e[c] = 1.0;
            e
        })
        .collect();

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = dot(&work[p], &work[p]);
                let beta = dot(&work[q], &work[q]);
                let gamma = dot(&work[p], &work[q]);
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                if gamma.abs() <= ORTHO_TOLERANCE * math::sqrt(alpha * beta) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + math::sqrt(1.0 + zeta * zeta));
                let c = 1.0 / math::sqrt(1.0 + t * t);
                let s = c * t;
                rotate(&mut work, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence { sweeps: MAX_SWEEPS });
    }

    let norms: Vec<f64> = work.iter().map(|c| norm(c)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    // stable sort keeps the lower index first on ties
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).expect("finite norms"));

    let max = norms[order[0]];
    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut sigma = Vec::with_capacity(n);
    for &j in &order {
        let s = norms[j];
        sigma.push(s);
        let col = if s > 1e-300 {
            let mut col: Vec<f64> = work[j].iter().map(|x| x / s).collect();
            if s < 1e-8 * max {
                // tiny columns lose orthogonality to rounding; clean them up
                if !reorthogonalize(&mut col, &u_cols) {
                    col = complete_basis(m, &u_cols);
                }
            }
            col
        } else {
            complete_basis(m, &u_cols)
        };
        u_cols.push(col);
    }
    let v_sorted: Vec<Vec<f64>> = order.iter().map(|&j| v[j].clone()).collect();
    Ok((
        Matrix::from_columns(m, &u_cols)?,
        sigma,
        Matrix::from_columns(n, &v_sorted)?,
    ))
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (left, right) = cols.split_at_mut(q);
    let cp = &mut left[p];
    let cq = &mut right[0];
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let xp = *x;
        let yq = *y;
        *x = c * xp - s * yq;
        *y = s * xp + c * yq;
    }
}

/// Two passes of modified Gram-Schmidt against `basis`, then normalize.
/// Returns false when nothing meaningful is left.
fn reorthogonalize(col: &mut [f64], basis: &[Vec<f64>]) -> bool {
    let before = norm(col);
    for _ in 0..2 {
        for b in basis {
            let d = dot(col, b);
            for (x, y) in col.iter_mut().zip(b) {
                *x -= d * y;
            }
        }
    }
    let after = norm(col);
    if after <= 1e-8 * before.max(1e-300) || after == 0.0 {
        return false;
    }
    for x in col.iter_mut() {
        *x /= after;
    }
    true
}

/// First standard basis vector (orthogonalized) that is independent of `basis`.
fn complete_basis(m: usize, basis: &[Vec<f64>]) -> Vec<f64> {
    for i in 0..m {
        let mut e = vec![0.0; m];
        e[i] = 1.0;
        for _ in 0..2 {
            for b in basis {
                let d = dot(&e, b);
                for (x, y) in e.iter_mut().zip(b) {
                    *x -= d * y;
                }
            }
        }
        let nrm = norm(&e);
        if nrm > 0.5 {
            e.iter_mut().for_each(|x| *x /= nrm);
            return e;
        }
    }
    // basis already spans R^m; unreachable for p <= m columns
    vec![0.0; m]
}

fn fix_signs(svd: &mut SvdResult) {
    let (m, p) = svd.u.shape();
    let n = svd.vt.cols;
    for j in 0..p {
        let mut best = 0usize;
        let mut best_abs = -1.0;
        for r in 0..m {
            let a = svd.u.get(r, j).abs();
            if a > best_abs {
                best_abs = a;
                best = r;
            }
        }
        if svd.u.get(best, j) < 0.0 {
            for r in 0..m {
                let v = svd.u.get(r, j);
                svd.u.set(r, j, -v);
            }
            for c in 0..n {
                let v = svd.vt.get(j, c);
                svd.vt.set(j, c, -v);
            }
        }
    }
}

/// Smallest `k` whose leading singular values hold at least `epsilon_th` of
/// the total energy `Σσ²`. Values below [`RANK_TOLERANCE`] of the maximum do
/// not count as rank, so `k` never exceeds the numerical rank.
pub fn select_rank(sigma: &[f64], epsilon_th: f64) -> Result<usize> {
    if sigma.is_empty() {
        return Err(Error::Degenerate("empty singular value vector"));
    }
    if !(epsilon_th > 0.0 && epsilon_th < 1.0) {
        return Err(Error::Config(alloc::format!(
            "epsilon_th must lie in (0, 1), got {epsilon_th}"
        )));
    }
    if sigma.iter().any(|s| *s < 0.0 || !s.is_finite()) {
        return Err(Error::Degenerate("singular values must be finite and non-negative"));
    }
    if sigma.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::Degenerate("singular values must be non-increasing"));
    }
    let rank = significant_count(sigma);
    if rank == 0 {
        return Err(Error::Degenerate("all singular values are zero"));
    }
    let total: f64 = sigma.iter().map(|s| s * s).sum();
    let target = epsilon_th * total;
    let mut acc = 0.0;
    for (i, s) in sigma[..rank].iter().enumerate() {
        acc += s * s;
        if acc >= target {
            return Ok(i + 1);
        }
    }
    Ok(rank)
}

/// Modified Gram-Schmidt of `candidates` against the orthonormal columns of
/// `basis`. Candidates whose remaining norm falls below `drop_tol` (relative
/// to their original norm) are dropped. Returns the accepted unit columns and
/// the indices of the candidates they came from.
pub fn orthonormalize_against(
    basis: &Matrix,
    candidates: &Matrix,
    drop_tol: f64,
) -> Result<(Matrix, Vec<usize>)> {
    if basis.rows != candidates.rows {
        return Err(Error::Dimension {
            op: "orthonormalize_against",
            lhs: basis.shape(),
            rhs: candidates.shape(),
        });
    }
    let m = basis.rows;
    let mut accepted: Vec<Vec<f64>> = (0..basis.cols).map(|c| basis.column(c)).collect();
    let existing = accepted.len();
    let mut kept = Vec::new();
    for j in 0..candidates.cols {
        let mut col = candidates.column(j);
        let before = norm(&col);
        if before == 0.0 {
            continue;
        }
        for _ in 0..2 {
            for b in &accepted {
                let d = dot(&col, b);
                for (x, y) in col.iter_mut().zip(b) {
                    *x -= d * y;
                }
            }
        }
        let after = norm(&col);
        if after <= drop_tol * before {
            continue;
        }
        col.iter_mut().for_each(|x| *x /= after);
        accepted.push(col);
        kept.push(j);
    }
    Ok((Matrix::from_columns(m, &accepted[existing..])?, kept))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
    }

    fn assert_orthonormal_columns(u: &Matrix, tol: f64) {
        let g = u.transpose_matmul(u).unwrap();
        for i in 0..g.rows() {
            for j in 0..g.cols() {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((g.get(i, j) - expect).abs() <= tol, "uᵀu[{i}][{j}] = {}", g.get(i, j));
            }
        }
    }

    #[test]
    fn new_rejects_bad_input() {
        assert!(matches!(Matrix::new(2, 2, vec![1.0; 3]), Err(Error::DataLength { .. })));
        assert_eq!(
            Matrix::new(1, 2, vec![1.0, f64::NAN]),
            Err(Error::NonFinite { index: 1 })
        );
    }

    #[test]
    fn basic_ops() {
        let a = random(3, 4, 1);
        assert_eq!(a.matmul(&Matrix::identity(4)).unwrap(), a);
        assert_eq!(a.transpose().transpose(), a);
        assert_eq!(Matrix::diag(&[3.0, 4.0]).frobenius_norm_sq(), 25.0);
        assert!(matches!(a.matmul(&a), Err(Error::Dimension { .. })));
        let b = random(3, 5, 2);
        let direct = a.transpose().matmul(&b).unwrap();
        let fused = a.transpose_matmul(&b).unwrap();
        assert!(direct.sub(&fused).unwrap().max_abs() < 1e-14);
        let c = random(6, 4, 3);
        let direct = a.matmul(&c.transpose()).unwrap();
        let fused = a.matmul_transpose(&c).unwrap();
        assert!(direct.sub(&fused).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn svd_identity_and_diagonal() {
        let s = svd(&Matrix::identity(2)).unwrap();
        assert_eq!(s.sigma, vec![1.0, 1.0]);
        let s = svd(&Matrix::diag(&[3.0, 2.0])).unwrap();
        assert_eq!(s.sigma, vec![3.0, 2.0]);
        assert_eq!(s.u, Matrix::identity(2));
        let s = svd(&Matrix::diag(&[2.0, 3.0])).unwrap();
        assert_eq!(s.sigma, vec![3.0, 2.0]);
        assert_eq!(s.u.column(0), vec![0.0, 1.0]);
    }

    #[test]
    fn svd_random_wide_and_tall() {
        for (rows, cols, seed) in [(5, 8, 11), (8, 5, 12), (1, 6, 13), (7, 1, 14), (30, 30, 15)] {
            let a = random(rows, cols, seed);
            let s = svd(&a).unwrap();
            assert_eq!(s.u.shape(), (rows, rows.min(cols)));
            assert_eq!(s.vt.shape(), (rows.min(cols), cols));
            let err = s.reconstruct().sub(&a).unwrap().frobenius_norm() / a.frobenius_norm();
            assert!(err <= 1e-8, "reconstruction error {err}");
            assert_orthonormal_columns(&s.u, 1e-10);
            assert!(s.sigma.windows(2).all(|w| w[0] >= w[1]));
            let energy: f64 = s.sigma.iter().map(|x| x * x).sum();
            assert!((energy - a.frobenius_norm_sq()).abs() <= 1e-8 * a.frobenius_norm_sq());
        }
    }

    #[test]
    fn svd_rank_deficient_completes_u() {
        // rank 1, 4 × 3
        let a = Matrix::from_fn(4, 3, |r, c| (r + 1) as f64 * (c as f64 - 1.5));
        let s = svd(&a).unwrap();
        assert_eq!(s.numerical_rank(), 1);
        assert_orthonormal_columns(&s.u, 1e-10);
        let err = s.reconstruct().sub(&a).unwrap().frobenius_norm() / a.frobenius_norm();
        assert!(err <= 1e-8);

        let z = svd(&Matrix::zeros(3, 2)).unwrap();
        assert_eq!(z.sigma, vec![0.0, 0.0]);
        assert_orthonormal_columns(&z.u, 1e-12);
    }

    #[test]
    fn svd_sign_convention_and_determinism() {
        let a = random(6, 9, 5).scale(-1.0);
        let s1 = svd(&a).unwrap();
        let s2 = svd(&a).unwrap();
        assert_eq!(s1, s2);
        for j in 0..s1.u.cols() {
            let col = s1.u.column(j);
            let (idx, _) = col
                .iter()
                .enumerate()
                .fold((0, -1.0), |(bi, bv), (i, v)| if v.abs() > bv { (i, v.abs()) } else { (bi, bv) });
            assert!(col[idx] >= 0.0);
        }
    }

    #[test]
    fn svd_empty_is_error() {
        assert_eq!(svd(&Matrix::zeros(0, 3)), Err(Error::EmptyMatrix));
    }

    #[test]
    fn select_rank_examples() {
        assert_eq!(select_rank(&[3.0, 1.0], 0.9).unwrap(), 1);
        assert_eq!(select_rank(&[1.0, 1.0, 1.0], 0.99).unwrap(), 3);
        assert_eq!(select_rank(&[5.0, 2.0, 1.0, 0.0, 0.0], 1.0 - 1e-15).unwrap(), 3);
        assert_eq!(select_rank(&[2.0, 1e-12], 1.0 - 1e-15).unwrap(), 1);
        assert!(matches!(select_rank(&[0.0, 0.0], 0.5), Err(Error::Degenerate(_))));
        assert!(matches!(select_rank(&[1.0, 2.0], 0.5), Err(Error::Degenerate(_))));
        assert!(matches!(select_rank(&[1.0], 1.0), Err(Error::Config(_))));
    }

    #[test]
    fn select_rank_matches_prefix_enumeration() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for _ in 0..200 {
            let n = rng.gen_range(1..8);
            let mut sigma: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..5.0)).collect();
            sigma.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let eps = rng.gen_range(0.05..0.999);
            let total: f64 = sigma.iter().map(|s| s * s).sum();
            let expected = (1..=n)
                .find(|&k| sigma[..k].iter().map(|s| s * s).sum::<f64>() >= eps * total)
                .unwrap();
            assert_eq!(select_rank(&sigma, eps).unwrap(), expected);
        }
    }

    #[test]
    fn orthonormalize_drops_dependent_columns() {
        let basis = Matrix::from_columns(3, &[vec![1.0, 0.0, 0.0]]).unwrap();
        let cand = Matrix::from_columns(3, &[vec![2.0, 0.0, 0.0], vec![1.0, 1.0, 0.0], vec![0.0, 3.0, 0.0]])
            .unwrap();
        let (cols, kept) = orthonormalize_against(&basis, &cand, 1e-8).unwrap();
        assert_eq!(kept, vec![1]);
        assert_eq!(cols.column(0), vec![0.0, 1.0, 0.0]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn matrix_strategy() -> impl Strategy<Value = Matrix> {
            (1usize..7, 1usize..7).prop_flat_map(|(r, c)| {
                proptest::collection::vec(-10.0f64..10.0, r * c)
                    .prop_map(move |d| Matrix::new(r, c, d).unwrap())
            })
        }

        proptest! {
            #[test]
            fn svd_reconstructs(a in matrix_strategy()) {
                let s = svd(&a).unwrap();
                let norm_a = a.frobenius_norm().max(1e-300);
                let err = s.reconstruct().sub(&a).unwrap().frobenius_norm();
                prop_assert!(err <= 1e-8 * norm_a);
                let energy: f64 = s.sigma.iter().map(|x| x * x).sum();
                prop_assert!((energy - a.frobenius_norm_sq()).abs() <= 1e-8 * a.frobenius_norm_sq().max(1e-300));
                assert_orthonormal_columns(&s.u, 1e-10);
            }

            #[test]
            fn select_rank_monotone_in_threshold(
                mut sigma in proptest::collection::vec(0.0f64..5.0, 1..10),
                e1 in 0.01f64..0.99,
                e2 in 0.01f64..0.99,
            ) {
                sigma.sort_by(|a, b| b.partial_cmp(a).unwrap());
                prop_assume!(sigma[0] > 0.0);
                let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
                prop_assert!(select_rank(&sigma, lo).unwrap() <= select_rank(&sigma, hi).unwrap());
            }
        }
    }
}
