//! Dense row-major matrices, the counter-based random stream shared by every
//! seeded component, and truncated SVD via cyclic Jacobi on the Gram matrix.

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major dense matrix of finite `f64` values.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows.min(8) {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        if self.rows > 8 {
            writeln!(f, "  ...")?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds a matrix from row-major data, rejecting wrong lengths and
    /// non-finite entries.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::Shape(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "entry ({}, {}) is {}",
                pos / cols.max(1),
                pos % cols.max(1),
                data[pos]
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != cols) {
            return Err(Error::Shape(format!(
                "row {bad} has {} columns, expected {cols}",
                rows[bad].len()
            )));
        }
        Matrix::from_vec(rows.len(), cols, rows.concat())
    }

    /// Skips validation; callers guarantee `rows * cols == data.len()`.
    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(rows * cols, data.len());
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn ensure_finite(&self, what: &str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite(format!("{what} contains NaN or infinity")))
        }
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t[(c, r)] = self[(r, c)];
            }
        }
        t
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::Shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self · otherᵀ`; the natural layout for dense layers whose weights are
    /// stored as (out × in).
    pub fn matmul_t(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(Error::Shape(format!(
                "cannot multiply {}x{} by transpose of {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let a = self.row(i);
            for j in 0..other.rows {
                out.data[i * other.rows + j] = dot(a, other.row(j));
            }
        }
        Ok(out)
    }

    /// `selfᵀ · other`.
    pub fn t_matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(Error::Shape(format!(
                "cannot multiply transpose of {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.cols, other.cols);
        for r in 0..self.rows {
            let b = other.row(r);
            for (i, &a) in self.row(r).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, &bv) in out_row.iter_mut().zip(b) {
                    *o += a * bv;
                }
            }
        }
        Ok(out)
    }

    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix::from_raw(indices.len(), self.cols, data)
    }

    pub fn select_cols(&self, range: std::ops::Range<usize>) -> Matrix {
        let width = range.len();
        let mut data = Vec::with_capacity(self.rows * width);
        for r in 0..self.rows {
            data.extend_from_slice(&self.row(r)[range.clone()]);
        }
        Matrix::from_raw(self.rows, width, data)
    }

    /// Horizontal concatenation, left to right.
    pub fn hstack(parts: &[&Matrix]) -> Result<Matrix> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidInput("nothing to concatenate".into()))?;
        let rows = first.rows;
        if let Some(bad) = parts.iter().find(|m| m.rows != rows) {
            return Err(Error::Shape(format!(
                "cannot concatenate {} rows with {} rows",
                rows, bad.rows
            )));
        }
        let cols: usize = parts.iter().map(|m| m.cols).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for m in parts {
                data.extend_from_slice(m.row(r));
            }
        }
        Ok(Matrix::from_raw(rows, cols, data))
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(Error::Shape(format!(
                "cannot subtract {:?} from {:?}",
                other.shape(),
                self.shape()
            )));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(Matrix::from_raw(self.rows, self.cols, data))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Weyl increment of SplitMix64.
const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const MIX_1: u64 = 0xBF58_476D_1CE4_E5B9;
const MIX_2: u64 = 0x94D0_49BB_1331_11EB;

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(MIX_1);
    z = (z ^ (z >> 27)).wrapping_mul(MIX_2);
    z ^ (z >> 31)
}

/// Counter-based SplitMix64 stream.
///
/// Draw `i` (0-based) of seed `s` is `mix64(s + (i + 1) * 0x9E3779B97F4A7C15)`
/// with wrapping arithmetic, where `mix64` is the SplitMix64 finalizer with
/// shifts 30/27/31 and multipliers `0xBF58476D1CE4E5B9`, `0x94D049BB133111EB`.
/// Any implementation of those two lines reproduces every stream bit for bit.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rng {
    seed: u64,
    counter: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng { seed, counter: 0 }
    }

    /// An independent stream derived from `seed`; used to keep weight
    /// initialization, shuffling and dropout from sharing draws.
    pub fn stream(seed: u64, stream: u64) -> Self {
        Rng::new(mix64(seed ^ mix64(stream.wrapping_add(GOLDEN_GAMMA))))
    }

    /// The value of draw `index` without materializing the stream.
    pub fn u64_at(seed: u64, index: u64) -> u64 {
        mix64(seed.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn draws(&self) -> u64 {
        self.counter
    }

    pub fn next_u64(&mut self) -> u64 {
        let v = Rng::u64_at(self.seed, self.counter);
        self.counter += 1;
        v
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> Result<f64> {
        if !lo.is_finite() || !hi.is_finite() || lo >= hi {
            return Err(Error::InvalidInput(format!(
                "uniform range [{lo}, {hi}) is empty or not finite"
            )));
        }
        let v = lo + (hi - lo) * self.next_f64();
        // rounding can land exactly on `hi` for wide ranges
        Ok(if v >= hi { lo.max(next_below(hi)) } else { v })
    }

    /// Uniform integer in `0..n` without modulo bias. `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.next_u64();
            if v < zone {
                return (v % n) as usize;
            }
        }
    }

    /// Standard normal draw (Box-Muller, one value per two uniforms).
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Fisher-Yates permutation of `0..n`.
    pub fn shuffle(&mut self, n: usize) -> Vec<usize> {
        let mut perm: Vec<usize> = (0..n).collect();
        self.shuffle_in_place(&mut perm);
        perm
    }

    pub fn shuffle_in_place<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

fn next_below(x: f64) -> f64 {
    if x > 0.0 {
        f64::from_bits(x.to_bits() - 1)
    } else if x < 0.0 {
        f64::from_bits(x.to_bits() + 1)
    } else {
        -f64::MIN_POSITIVE
    }
}

/// Eigen-decomposition of a symmetric matrix.
#[derive(Clone, Debug)]
pub struct SymmetricEigen {
    /// Sorted descending.
    pub values: Vec<f64>,
    /// Column `j` is the eigenvector of `values[j]`.
    pub vectors: Matrix,
    pub sweeps: usize,
}

pub const JACOBI_TOLERANCE: f64 = 1e-12;
pub const JACOBI_MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi eigensolver with row-cyclic pivot order.
///
/// Stops once the off-diagonal Frobenius norm is at most
/// `JACOBI_TOLERANCE · ‖A‖_F`.
pub fn symmetric_eigen(a: &Matrix) -> Result<SymmetricEigen> {
    let n = a.rows();
    if n != a.cols() {
        return Err(Error::Shape(format!(
            "eigen needs a square matrix, got {:?}",
            a.shape()
        )));
    }
    a.ensure_finite("eigen input")?;
    for i in 0..n {
        for j in 0..i {
            let (x, y) = (a[(i, j)], a[(j, i)]);
            if (x - y).abs() > 1e-9 * (1.0 + x.abs().max(y.abs())) {
                return Err(Error::InvalidInput(format!("matrix is not symmetric at ({i}, {j})")));
            }
        }
    }

    let mut m = a.clone();
    let mut v = Matrix::identity(n);
    let total = m.frobenius_norm();
    let mut sweeps = 0;
    loop {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off <= JACOBI_TOLERANCE * total {
            break;
        }
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(Error::NoConvergence(format!(
                "Jacobi eigensolver: off-diagonal norm {off:e} after {JACOBI_MAX_SWEEPS} sweeps"
            )));
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let tau = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (m[(k, p)], m[(k, q)]);
                    m[(k, p)] = c * akp - s * akq;
                    m[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (m[(p, k)], m[(q, k)]);
                    m[(p, k)] = c * apk - s * aqk;
                    m[(q, k)] = s * apk + c * aqk;
                }
                m[(p, q)] = 0.0;
                m[(q, p)] = 0.0;
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].total_cmp(&m[(i, i)]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for k in 0..n {
            vectors[(k, dst)] = v[(k, src)];
        }
    }
    Ok(SymmetricEigen {
        values,
        vectors,
        sweeps,
    })
}

/// Top-`k` singular triplets: `x ≈ u · diag(sigma) · vt`.
#[derive(Clone, Debug)]
pub struct SvdResult {
    /// n × k, orthonormal columns.
    pub u: Matrix,
    /// Non-negative, sorted descending.
    pub sigma: Vec<f64>,
    /// k × d, orthonormal rows.
    pub vt: Matrix,
}

impl SvdResult {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    /// `u · diag(sigma) · vt`.
    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for r in 0..us.rows() {
            for (v, s) in us.row_mut(r).iter_mut().zip(&self.sigma) {
                *v *= s;
            }
        }
        us.matmul(&self.vt).expect("factor shapes agree")
    }

    /// Projects rows of `x` (m × d) onto the right singular vectors: `x · V_k`.
    pub fn project(&self, x: &Matrix) -> Result<Matrix> {
        x.matmul_t(&self.vt)
    }
}

/// Truncated SVD through the eigen-decomposition of the smaller Gram matrix.
///
/// Each right singular vector is signed so that its largest-magnitude
/// component is positive (first such index on ties).
pub fn truncated_svd(x: &Matrix, k: usize) -> Result<SvdResult> {
    let (n, d) = x.shape();
    if k == 0 || k > n.min(d) {
        return Err(Error::InvalidInput(format!(
            "rank {k} outside 1..={} for a {n}x{d} matrix",
            n.min(d)
        )));
    }
    x.ensure_finite("SVD input")?;

    let tall = d <= n;
    let gram = if tall { x.t_matmul(x)? } else { x.matmul_t(x)? };
    gram.ensure_finite("Gram matrix (input magnitudes overflow)")?;
    let eig = symmetric_eigen(&gram)?;

    let small_side = take_columns(&eig.vectors, k);

    // `small_side` holds V (tall) or U (wide); recover the other factor.
    // Singular values come from the recovered columns' norms, which are far
    // more accurate than square roots of small Gram eigenvalues.
    let recovered = if tall {
        x.matmul(&small_side)?
    } else {
        x.t_matmul(&small_side)?
    };
    let norms: Vec<f64> = (0..k)
        .map(|j| {
            (0..recovered.rows())
                .map(|r| recovered[(r, j)].powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));
    let sigma: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let small_side = permute_columns(&small_side, &order);
    let recovered = permute_columns(&recovered, &order);
    let cutoff = sigma[0] * 1e-12;

    let (mut u, mut v) = if tall {
        (recovered, small_side)
    } else {
        (small_side, recovered)
    };
    let other = if tall { &mut u } else { &mut v };
    for (j, &s) in sigma.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            for r in 0..other.rows() {
                other[(r, j)] /= s;
            }
            if !reorthonormalize_column(other, j) {
                complete_column(other, j);
            }
        } else {
            complete_column(other, j);
        }
    }

    for j in 0..k {
        let mut best = 0;
        for r in 1..v.rows() {
            if v[(r, j)].abs() > v[(best, j)].abs() {
                best = r;
            }
        }
        if v[(best, j)] < 0.0 {
            for r in 0..v.rows() {
                v[(r, j)] = -v[(r, j)];
            }
            for r in 0..u.rows() {
                u[(r, j)] = -u[(r, j)];
            }
        }
    }

    Ok(SvdResult {
        u,
        sigma,
        vt: v.transpose(),
    })
}

fn permute_columns(m: &Matrix, order: &[usize]) -> Matrix {
    let mut out = Matrix::zeros(m.rows(), order.len());
    for r in 0..m.rows() {
        for (c, &src) in order.iter().enumerate() {
            out[(r, c)] = m[(r, src)];
        }
    }
    out
}

fn take_columns(m: &Matrix, k: usize) -> Matrix {
    let mut out = Matrix::zeros(m.rows(), k);
    for r in 0..m.rows() {
        out.row_mut(r).copy_from_slice(&m.row(r)[..k]);
    }
    out
}

/// Orthogonalizes column `j` against columns `0..j` and normalizes it.
/// Returns false if the column collapses, as happens for singular values
/// at rounding level.
fn reorthonormalize_column(m: &mut Matrix, j: usize) -> bool {
    let rows = m.rows();
    for _ in 0..2 {
        for p in 0..j {
            let proj: f64 = (0..rows).map(|r| m[(r, p)] * m[(r, j)]).sum();
            for r in 0..rows {
                m[(r, j)] -= proj * m[(r, p)];
            }
        }
    }
    let norm = (0..rows).map(|r| m[(r, j)] * m[(r, j)]).sum::<f64>().sqrt();
    if norm.is_nan() || norm <= 1e-3 {
        return false;
    }
    for r in 0..rows {
        m[(r, j)] /= norm;
    }
    true
}

/// Replaces column `j` with a unit vector orthogonal to columns `0..j`
/// (modified Gram-Schmidt over the standard basis).
fn complete_column(m: &mut Matrix, j: usize) {
    let rows = m.rows();
    for e in 0..rows {
        let mut cand = vec![0.0; rows];
        cand[e] = 1.0;
        for p in 0..j {
            let proj: f64 = (0..rows).map(|r| m[(r, p)] * cand[r]).sum();
            for (r, c) in cand.iter_mut().enumerate() {
                *c -= proj * m[(r, p)];
            }
        }
        let norm = cand.iter().map(|c| c * c).sum::<f64>().sqrt();
        if norm > 1e-6 {
            for (r, c) in cand.into_iter().enumerate() {
                m[(r, j)] = c / norm;
            }
            return;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn random_matrix(rng: &mut Rng, rows: usize, cols: usize) -> Matrix {
        let data = (0..rows * cols).map(|_| rng.normal()).collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    fn orthonormality_error(cols_of: &Matrix) -> f64 {
        let g = cols_of.t_matmul(cols_of).unwrap();
        g.sub(&Matrix::identity(g.rows())).unwrap().max_abs()
    }

    #[test]
    fn identity_has_unit_singular_values() {
        let svd = truncated_svd(&Matrix::identity(3), 3).unwrap();
        for s in &svd.sigma {
            assert_abs_diff_eq!(*s, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn rank_one_outer_product() {
        let x = Matrix::from_rows(&[vec![3.0, 4.0], vec![6.0, 8.0]]).unwrap();
        let svd = truncated_svd(&x, 1).unwrap();
        assert_abs_diff_eq!(svd.sigma[0], 5f64.sqrt() * 5.0, epsilon = 1e-10);
        assert_abs_diff_eq!(svd.sigma[0], 11.180_339_887_498_949, epsilon = 1e-10);
    }

    #[test]
    fn full_rank_reconstruction_and_orthonormal_factors() {
        let mut rng = Rng::new(7);
        let x = random_matrix(&mut rng, 10, 6);
        let svd = truncated_svd(&x, 6).unwrap();
        assert!(svd.reconstruct().sub(&x).unwrap().frobenius_norm() <= 1e-8);
        assert!(orthonormality_error(&svd.u) <= 1e-8);
        assert!(orthonormality_error(&svd.vt.transpose()) <= 1e-8);
        assert!(svd.sigma.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn wide_matrices_use_the_row_gram() {
        let mut rng = Rng::new(11);
        let x = random_matrix(&mut rng, 4, 9);
        let svd = truncated_svd(&x, 4).unwrap();
        assert_eq!(svd.u.shape(), (4, 4));
        assert_eq!(svd.vt.shape(), (4, 9));
        assert!(svd.reconstruct().sub(&x).unwrap().frobenius_norm() <= 1e-8);
        assert!(orthonormality_error(&svd.vt.transpose()) <= 1e-8);
    }

    #[test]
    fn rank_deficient_input_still_gets_orthonormal_u() {
        let x = Matrix::from_rows(&[
            vec![1.0, 2.0, 3.0],
            vec![2.0, 4.0, 6.0],
            vec![0.0; 3],
            vec![1.0, 2.0, 3.0],
        ])
        .unwrap();
        let svd = truncated_svd(&x, 3).unwrap();
        assert!(svd.sigma[1] < 1e-6);
        assert!(orthonormality_error(&svd.u) <= 1e-8);
        assert!(svd.reconstruct().sub(&x).unwrap().frobenius_norm() <= 1e-8);
    }

    #[test]
    fn sign_convention_makes_largest_component_positive() {
        let mut rng = Rng::new(3);
        let x = random_matrix(&mut rng, 8, 5);
        let svd = truncated_svd(&x, 5).unwrap();
        for j in 0..5 {
            let row = svd.vt.row(j);
            let largest = row
                .iter()
                .copied()
                .fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
            assert!(largest > 0.0);
        }
    }

    #[test]
    fn svd_rejects_bad_rank_and_overflow() {
        let x = Matrix::identity(3);
        assert!(matches!(truncated_svd(&x, 0), Err(Error::InvalidInput(_))));
        assert!(matches!(truncated_svd(&x, 4), Err(Error::InvalidInput(_))));
        let big = Matrix::from_rows(&[vec![1e300, 1.0], vec![1.0, 1e300]]).unwrap();
        assert!(matches!(truncated_svd(&big, 1), Err(Error::NonFinite(_))));
    }

    #[test]
    fn matrix_rejects_non_finite_and_ragged() {
        assert!(Matrix::from_vec(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(Matrix::from_vec(2, 2, vec![1.0]).is_err());
        assert!(Matrix::from_rows(&[vec![1.0, 2.0], vec![1.0]]).is_err());
    }

    #[test]
    fn rng_is_deterministic_and_indexable() {
        let mut a = Rng::new(0);
        let mut b = Rng::new(0);
        let first = a.uniform(0.0, 1.0).unwrap();
        assert_eq!(first.to_bits(), b.uniform(0.0, 1.0).unwrap().to_bits());
        let mut c = Rng::new(42);
        let draws: Vec<u64> = (0..5).map(|_| c.next_u64()).collect();
        for (i, v) in draws.iter().enumerate() {
            assert_eq!(*v, Rng::u64_at(42, i as u64));
        }
        // reference values of the generator, seed 0
        assert_eq!(Rng::u64_at(0, 0), 0xE220_A839_7B1D_CDAF);
        assert_eq!(Rng::u64_at(0, 1), 0x6E78_9E6A_A1B9_65F4);
    }

    #[test]
    fn uniform_mean_and_degenerate_range() {
        let mut rng = Rng::new(1);
        let n = 100_000;
        let mean = (0..n).map(|_| rng.uniform(0.0, 1.0).unwrap()).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.01);
        assert!(rng.uniform(1.0, 1.0).is_err());
        assert!(rng.uniform(2.0, 1.0).is_err());
    }

    #[test]
    fn shuffle_is_a_deterministic_permutation() {
        assert!(Rng::new(0).shuffle(0).is_empty());
        let p = Rng::new(0).shuffle(5);
        assert_eq!(p, Rng::new(0).shuffle(5));
        let mut sorted = p.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn streams_differ() {
        let a = Rng::stream(0, 1).next_u64();
        let b = Rng::stream(0, 2).next_u64();
        assert_ne!(a, b);
    }

    #[test]
    fn jacobi_diagonalizes_a_known_matrix() {
        let a = Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let eig = symmetric_eigen(&a).unwrap();
        assert_abs_diff_eq!(eig.values[0], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(eig.values[1], 1.0, epsilon = 1e-12);
    }
}
