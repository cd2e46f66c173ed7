//! Dense-matrix primitives and the thin SVD / low-rank approximation kernel.
//!
//! [`DenseMatrix`] is a row-major `f64` matrix that refuses non-finite
//! entries. [`SvdFactors`] holds a thin decomposition `U diag(sigma) V^T`
//! where `U` is `m x k`, `V` is `n x k` and `k` may be zero.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Singular values at or below `RANK_CUTOFF * sigma_max` are treated as zero.
pub const RANK_CUTOFF: f64 = 1e-12;

/// Row-major dense matrix of finite `f64` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    /// Builds a matrix from row-major data, rejecting NaN/Inf entries.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidInput(format!(
                "data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite entry at ({}, {})",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from a list of equally long rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != cols {
                return Err(Error::InvalidInput(format!(
                    "row {i} has {} entries, expected {cols}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Self::new(rows.len(), cols, data)
    }

    pub(crate) fn from_vec_unchecked(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
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

    /// Row-major backing slice.
    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    /// Sets one entry. Panics if `value` is not finite.
    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        assert!(value.is_finite(), "DenseMatrix entries must be finite");
        self.data[row * self.cols + col] = value;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    /// Matrix product `self * rhs`.
    pub fn matmul(&self, rhs: &DenseMatrix) -> DenseMatrix {
        assert_eq!(
            self.cols, rhs.rows,
            "matmul shape mismatch: {:?} x {:?}",
            self.shape(),
            rhs.shape()
        );
        let n = rhs.cols;
        let mut out = vec![0.0; self.rows * n];
        for i in 0..self.rows {
            let out_row = &mut out[i * n..(i + 1) * n];
            for (p, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(rhs.row(p)) {
                    *o += a * b;
                }
            }
        }
        DenseMatrix::from_vec_unchecked(self.rows, n, out)
    }

    /// `self^T * self`.
    pub fn gram(&self) -> DenseMatrix {
        let n = self.cols;
        let mut out = vec![0.0; n * n];
        for i in 0..self.rows {
            let r = self.row(i);
            for a in 0..n {
                let ra = r[a];
                if ra == 0.0 {
                    continue;
                }
                for b in 0..n {
                    out[a * n + b] += ra * r[b];
                }
            }
        }
        DenseMatrix::from_vec_unchecked(n, n, out)
    }

    /// Rows `from..to` (exclusive end) as a new matrix.
    pub fn row_range(&self, from: usize, to: usize) -> DenseMatrix {
        assert!(from <= to && to <= self.rows, "row range out of bounds");
        DenseMatrix::from_vec_unchecked(
            to - from,
            self.cols,
            self.data[from * self.cols..to * self.cols].to_vec(),
        )
    }

    /// First `k` columns.
    pub fn leading_columns(&self, k: usize) -> DenseMatrix {
        assert!(k <= self.cols);
        let mut data = Vec::with_capacity(self.rows * k);
        for i in 0..self.rows {
            data.extend_from_slice(&self.row(i)[..k]);
        }
        DenseMatrix::from_vec_unchecked(self.rows, k, data)
    }

    /// `self * diag(scale)`.
    pub fn scale_columns(&self, scale: &[f64]) -> DenseMatrix {
        assert_eq!(scale.len(), self.cols);
        let mut out = self.clone();
        for row in out.data.chunks_exact_mut(self.cols.max(1)) {
            for (x, s) in row.iter_mut().zip(scale) {
                *x *= s;
            }
        }
        out
    }

    /// Vertical concatenation. All parts must share the column count `cols`.
    pub fn vstack(parts: &[&DenseMatrix], cols: usize) -> DenseMatrix {
        let rows = parts.iter().map(|p| p.rows).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for p in parts {
            assert_eq!(p.cols, cols, "vstack column mismatch");
            data.extend_from_slice(&p.data);
        }
        DenseMatrix::from_vec_unchecked(rows, cols, data)
    }

    pub fn frobenius_norm_sq(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.frobenius_norm_sq().sqrt()
    }

    /// Squared Frobenius norm of `self - other`.
    pub fn distance_sq(&self, other: &DenseMatrix) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    /// Largest absolute entry-wise difference.
    pub fn max_abs_diff(&self, other: &DenseMatrix) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    fn from_nalgebra(m: &DMatrix<f64>) -> DenseMatrix {
        let (rows, cols) = m.shape();
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(m[(i, j)]);
            }
        }
        DenseMatrix::from_vec_unchecked(rows, cols, data)
    }
}

/// Thin SVD factors `U diag(sigma) V^T`.
///
/// `u` is `m x k`, `v` is `n x k`, `sigma` is non-increasing and
/// non-negative. `k = 0` is allowed and reconstructs to the `m x n` zero
/// matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdFactors {
    u: DenseMatrix,
    sigma: Vec<f64>,
    v: DenseMatrix,
}

impl SvdFactors {
    /// Assembles factors after checking shapes and the ordering of `sigma`.
    ///
    /// Orthonormality is not checked here; see [`SvdFactors::validate`].
    pub fn new(u: DenseMatrix, sigma: Vec<f64>, v: DenseMatrix) -> Result<Self> {
        let k = sigma.len();
        if u.cols() != k || v.cols() != k {
            return Err(Error::InvalidInput(format!(
                "factor shapes disagree: U is {:?}, V is {:?}, {k} singular values",
                u.shape(),
                v.shape()
            )));
        }
        if k > u.rows().min(v.rows()) {
            return Err(Error::InvalidInput(format!(
                "rank {k} exceeds min({}, {})",
                u.rows(),
                v.rows()
            )));
        }
        if sigma.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::InvalidInput(
                "singular values must be finite and non-negative".into(),
            ));
        }
        if sigma.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::InvalidInput(
                "singular values must be non-increasing".into(),
            ));
        }
        Ok(Self { u, sigma, v })
    }

    pub(crate) fn from_parts_unchecked(u: DenseMatrix, sigma: Vec<f64>, v: DenseMatrix) -> Self {
        debug_assert_eq!(u.cols(), sigma.len());
        debug_assert_eq!(v.cols(), sigma.len());
        Self { u, sigma, v }
    }

    /// Rank-zero factors of an `m x n` zero matrix.
    pub fn empty(m: usize, n: usize) -> Self {
        Self {
            u: DenseMatrix::zeros(m, 0),
            sigma: Vec::new(),
            v: DenseMatrix::zeros(n, 0),
        }
    }

    #[inline]
    pub fn u(&self) -> &DenseMatrix {
        &self.u
    }

    #[inline]
    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    #[inline]
    pub fn v(&self) -> &DenseMatrix {
        &self.v
    }

    #[inline]
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    /// Rows of the represented matrix.
    #[inline]
    pub fn nrows(&self) -> usize {
        self.u.rows()
    }

    /// Columns of the represented matrix.
    #[inline]
    pub fn ncols(&self) -> usize {
        self.v.rows()
    }

    pub fn into_parts(self) -> (DenseMatrix, Vec<f64>, DenseMatrix) {
        (self.u, self.sigma, self.v)
    }

    /// `diag(sigma) V^T`, a `k x n` matrix.
    pub fn sigma_vt(&self) -> DenseMatrix {
        let k = self.rank();
        let n = self.ncols();
        let mut data = Vec::with_capacity(k * n);
        for (j, s) in self.sigma.iter().enumerate() {
            data.extend((0..n).map(|i| s * self.v.get(i, j)));
        }
        DenseMatrix::from_vec_unchecked(k, n, data)
    }

    /// Checks ordering and the orthonormality of both factors against `tol`.
    pub fn validate(&self, tol: f64) -> Result<()> {
        Self::new(self.u.clone(), self.sigma.clone(), self.v.clone())?;
        let du = orthonormality_defect(&self.u);
        let dv = orthonormality_defect(&self.v);
        if du > tol || dv > tol {
            return Err(Error::InvalidInput(format!(
                "factors not orthonormal: defect(U) = {du:e}, defect(V) = {dv:e}"
            )));
        }
        Ok(())
    }
}

/// Decomposes any matrix, including ones with zero rows or columns.
///
/// Values at or below the numerical-rank cutoff are dropped.
pub(crate) fn svd_kernel(a: &DenseMatrix) -> SvdFactors {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return SvdFactors::empty(m, n);
    }
    if a.as_slice().iter().all(|&x| x == 0.0) {
        return SvdFactors::empty(m, n);
    }
    let svd = a.to_nalgebra().svd(true, true);
    let u = svd.u.expect("left singular vectors requested");
    let v_t = svd.v_t.expect("right singular vectors requested");
    let values = svd.singular_values;

    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]).then(i.cmp(&j)));
    let sigma_max = values[order[0]];
    let keep: Vec<usize> = order
        .into_iter()
        .take_while(|&i| values[i] > RANK_CUTOFF * sigma_max)
        .collect();

    let k = keep.len();
    let mut u_data = Vec::with_capacity(m * k);
    for i in 0..m {
        u_data.extend(keep.iter().map(|&j| u[(i, j)]));
    }
    let mut v_data = Vec::with_capacity(n * k);
    for i in 0..n {
        v_data.extend(keep.iter().map(|&j| v_t[(j, i)]));
    }
    let sigma = keep.iter().map(|&j| values[j]).collect();
    SvdFactors::from_parts_unchecked(
        DenseMatrix::from_vec_unchecked(m, k, u_data),
        sigma,
        DenseMatrix::from_vec_unchecked(n, k, v_data),
    )
}

/// Thin SVD of `a` at its numerical rank.
pub fn thin_svd(a: &DenseMatrix) -> Result<SvdFactors> {
    if a.rows() == 0 || a.cols() == 0 {
        return Err(Error::InvalidInput(format!(
            "thin_svd needs a non-empty matrix, got {:?}",
            a.shape()
        )));
    }
    Ok(svd_kernel(a))
}

/// Smallest rank whose cumulative energy fraction reaches `xi`.
pub fn energy_rank(sigma: &[f64], xi: f64) -> usize {
    let total: f64 = sigma.iter().map(|s| s * s).sum();
    if total == 0.0 {
        return 0;
    }
    let mut acc = 0.0;
    for (i, s) in sigma.iter().enumerate() {
        acc += s * s;
        if acc / total >= xi {
            return i + 1;
        }
    }
    sigma.len()
}

pub(crate) fn check_threshold(xi: f64) -> Result<()> {
    if xi > 0.0 && xi <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "energy threshold must lie in (0, 1], got {xi}"
        )))
    }
}

/// Keeps the leading columns holding at least a fraction `xi` of the energy.
pub fn truncate_rank(f: &SvdFactors, xi: f64) -> Result<SvdFactors> {
    check_threshold(xi)?;
    Ok(truncate_unchecked(f, xi))
}

pub(crate) fn truncate_unchecked(f: &SvdFactors, xi: f64) -> SvdFactors {
    let k = energy_rank(&f.sigma, xi);
    if k == f.rank() {
        return f.clone();
    }
    SvdFactors::from_parts_unchecked(
        f.u.leading_columns(k),
        f.sigma[..k].to_vec(),
        f.v.leading_columns(k),
    )
}

/// `U diag(sigma) V^T`.
pub fn reconstruct(f: &SvdFactors) -> DenseMatrix {
    if f.rank() == 0 {
        return DenseMatrix::zeros(f.nrows(), f.ncols());
    }
    f.u.scale_columns(&f.sigma).matmul(&f.v.transpose())
}

/// `max |M^T M - I|` over all entries.
pub fn orthonormality_defect(m: &DenseMatrix) -> f64 {
    let g = m.gram();
    let n = g.rows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g.get(i, j) - target).abs());
        }
    }
    worst
}

/// Flips column signs so that the largest-magnitude entry of every `V`
/// column is positive. The same columns of `U` are flipped with it.
pub fn canonical_sign(f: &SvdFactors) -> SvdFactors {
    let mut out = f.clone();
    let (n, k) = out.v.shape();
    let m = out.u.rows();
    for j in 0..k {
        let mut pivot = 0.0f64;
        for i in 0..n {
            let x = out.v.get(i, j);
            if x.abs() > pivot.abs() {
                pivot = x;
            }
        }
        if pivot < 0.0 {
            for i in 0..n {
                out.v.data[i * k + j] = -out.v.data[i * k + j];
            }
            for i in 0..m {
                out.u.data[i * k + j] = -out.u.data[i * k + j];
            }
        }
    }
    out
}

/// Thin QR of a tall matrix: `a = q * r` with `q` column-orthonormal.
pub(crate) fn thin_qr(a: &DenseMatrix) -> (DenseMatrix, DenseMatrix) {
    let qr = a.to_nalgebra().qr();
    (
        DenseMatrix::from_nalgebra(&qr.q()),
        DenseMatrix::from_nalgebra(&qr.r()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mat(rows: &[&[f64]]) -> DenseMatrix {
        DenseMatrix::from_rows(rows).unwrap()
    }

    fn rel_err(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
        a.distance_sq(b).sqrt() / a.frobenius_norm().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn rejects_non_finite_entries() {
        let err = DenseMatrix::new(1, 2, vec![1.0, f64::NAN]).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
        assert!(DenseMatrix::new(1, 2, vec![f64::INFINITY, 0.0]).is_err());
        assert!(DenseMatrix::new(2, 2, vec![0.0; 3]).is_err());
    }

    #[test]
    fn svd_of_identity() {
        let f = thin_svd(&DenseMatrix::identity(2)).unwrap();
        assert_eq!(f.rank(), 2);
        for s in f.sigma() {
            assert!((s - 1.0).abs() < 1e-14);
        }
        assert!(orthonormality_defect(f.u()) < 1e-14);
        assert!(orthonormality_defect(f.v()) < 1e-14);
    }

    #[test]
    fn svd_of_diagonal() {
        let f = thin_svd(&mat(&[&[3.0, 0.0], &[0.0, 2.0]])).unwrap();
        assert!((f.sigma()[0] - 3.0).abs() < 1e-14);
        assert!((f.sigma()[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn svd_of_rank_one() {
        let a = mat(&[&[1.0, 2.0], &[2.0, 4.0]]);
        let f = thin_svd(&a).unwrap();
        assert_eq!(f.rank(), 1);
        assert!((f.sigma()[0] - 5.0).abs() < 1e-12);
        assert!(reconstruct(&f).max_abs_diff(&a) < 1e-10);
    }

    #[test]
    fn svd_rejects_empty() {
        assert!(thin_svd(&DenseMatrix::zeros(0, 3)).is_err());
        assert!(thin_svd(&DenseMatrix::zeros(3, 0)).is_err());
    }

    #[test]
    fn svd_of_zero_matrix_is_rank_zero() {
        let f = thin_svd(&DenseMatrix::zeros(3, 2)).unwrap();
        assert_eq!(f.rank(), 0);
        assert_eq!((f.nrows(), f.ncols()), (3, 2));
    }

    #[test]
    fn truncate_by_energy() {
        let u = DenseMatrix::identity(2);
        let v = DenseMatrix::identity(2);
        let f = SvdFactors::new(u, vec![3.0, 1.0], v).unwrap();
        // f(1) = 9 / 10 = 0.9
        assert_eq!(truncate_rank(&f, 0.9).unwrap().rank(), 1);
        assert_eq!(truncate_rank(&f, 0.91).unwrap().rank(), 2);
        assert_eq!(truncate_rank(&f, 1.0).unwrap().rank(), 2);
    }

    #[test]
    fn truncate_zero_energy() {
        let f = SvdFactors::new(
            DenseMatrix::new(1, 1, vec![1.0]).unwrap(),
            vec![0.0],
            DenseMatrix::new(1, 1, vec![1.0]).unwrap(),
        )
        .unwrap();
        let t = truncate_rank(&f, 0.98).unwrap();
        assert_eq!(t.rank(), 0);
        assert_eq!(reconstruct(&t), DenseMatrix::zeros(1, 1));
    }

    #[test]
    fn truncate_rejects_bad_threshold() {
        let f = SvdFactors::empty(2, 2);
        for xi in [0.0, -0.5, 1.5, f64::NAN] {
            assert!(matches!(
                truncate_rank(&f, xi),
                Err(Error::InvalidParameter(_))
            ));
        }
    }

    #[test]
    fn reconstruct_empty_is_zero() {
        assert_eq!(
            reconstruct(&SvdFactors::empty(4, 2)),
            DenseMatrix::zeros(4, 2)
        );
    }

    #[test]
    fn reconstruct_random_full_rank() {
        let data: Vec<f64> = (0..15).map(|i| ((i * 7919) % 23) as f64 - 11.0).collect();
        let a = DenseMatrix::new(5, 3, data).unwrap();
        let f = thin_svd(&a).unwrap();
        assert_eq!(f.rank(), 3);
        assert!(rel_err(&a, &reconstruct(&f)) < 1e-8);
    }

    #[test]
    fn defect_examples() {
        assert_eq!(orthonormality_defect(&DenseMatrix::identity(3)), 0.0);
        // (M^T M - I)[1][1] = 4 - 1
        assert_eq!(
            orthonormality_defect(&mat(&[&[1.0, 0.0], &[0.0, 2.0]])),
            3.0
        );
    }

    #[test]
    fn canonical_sign_flips_negative_pivot() {
        let u = mat(&[&[0.0], &[1.0]]);
        let v = mat(&[&[-1.0], &[0.0]]);
        let f = SvdFactors::new(u, vec![2.0], v).unwrap();
        let c = canonical_sign(&f);
        assert_eq!(c.v().column(0), vec![1.0, 0.0]);
        assert_eq!(c.u().column(0), vec![0.0, -1.0]);
        assert_eq!(canonical_sign(&c), c);
        assert_eq!(reconstruct(&c), reconstruct(&f));
    }

    #[test]
    fn new_factors_reject_bad_sigma() {
        let i2 = DenseMatrix::identity(2);
        assert!(SvdFactors::new(i2.clone(), vec![1.0, 2.0], i2.clone()).is_err());
        assert!(SvdFactors::new(i2.clone(), vec![1.0, -1.0], i2.clone()).is_err());
        assert!(SvdFactors::new(i2.clone(), vec![1.0], i2).is_err());
    }

    fn matrix_strategy() -> impl Strategy<Value = DenseMatrix> {
        (1usize..9, 1usize..7).prop_flat_map(|(m, n)| {
            proptest::collection::vec(-10.0f64..10.0, m * n)
                .prop_map(move |d| DenseMatrix::new(m, n, d).unwrap())
        })
    }

    fn sorted_sigma(a: &DenseMatrix) -> Vec<f64> {
        thin_svd(a).unwrap().sigma().to_vec()
    }

    fn same_spectrum(a: &[f64], b: &[f64], tol: f64) -> bool {
        let scale = a.first().copied().unwrap_or(0.0).max(1.0);
        let n = a.len().max(b.len());
        (0..n).all(|i| {
            let x = a.get(i).copied().unwrap_or(0.0);
            let y = b.get(i).copied().unwrap_or(0.0);
            (x - y).abs() <= tol * scale
        })
    }

    proptest! {
        #[test]
        fn svd_postconditions(a in matrix_strategy()) {
            let f = thin_svd(&a).unwrap();
            prop_assert!(orthonormality_defect(f.u()) <= 1e-10);
            prop_assert!(orthonormality_defect(f.v()) <= 1e-10);
            prop_assert!(f.sigma().windows(2).all(|w| w[0] >= w[1]));
            prop_assert!(f.sigma().iter().all(|s| *s >= 0.0));
            prop_assert!(f.rank() <= a.rows().min(a.cols()));
            let err = a.distance_sq(&reconstruct(&f)).sqrt();
            prop_assert!(err <= 1e-8 * a.frobenius_norm() + 1e-300);
        }

        #[test]
        fn spectrum_ignores_row_order(a in matrix_strategy(), seed in any::<u64>()) {
            let mut rows = a.to_rows();
            let n = rows.len();
            for i in (1..n).rev() {
                let j = (seed.wrapping_mul(6364136223846793005).wrapping_add(i as u64) % (i as u64 + 1)) as usize;
                rows.swap(i, j);
            }
            let b = DenseMatrix::from_rows(&rows).unwrap();
            prop_assert!(same_spectrum(&sorted_sigma(&a), &sorted_sigma(&b), 1e-10));
        }

        #[test]
        fn zero_rows_leave_spectrum(a in matrix_strategy(), extra in 1usize..4) {
            let mut rows = a.to_rows();
            rows.extend(std::iter::repeat_n(vec![0.0; a.cols()], extra));
            let b = DenseMatrix::from_rows(&rows).unwrap();
            prop_assert!(same_spectrum(&sorted_sigma(&a), &sorted_sigma(&b), 1e-10));
        }

        #[test]
        fn truncation_is_minimal_and_bounded(a in matrix_strategy(), xi in 0.05f64..=1.0) {
            let f = thin_svd(&a).unwrap();
            let t = truncate_rank(&f, xi).unwrap();
            let k = t.rank();
            let total: f64 = f.sigma().iter().map(|s| s * s).sum();
            let energy = |j: usize| f.sigma()[..j].iter().map(|s| s * s).sum::<f64>() / total;
            if total > 0.0 {
                prop_assert!(k >= 1);
                prop_assert!(energy(k) >= xi);
                if k > 1 {
                    prop_assert!(energy(k - 1) < xi);
                }
                let rel = a.distance_sq(&reconstruct(&t)) / a.frobenius_norm_sq();
                prop_assert!(rel <= 1.0 - xi + 1e-12);
            }
        }

        #[test]
        fn canonical_sign_preserves_reconstruction(a in matrix_strategy()) {
            let f = thin_svd(&a).unwrap();
            let c = canonical_sign(&f);
            prop_assert_eq!(reconstruct(&c), reconstruct(&f));
            prop_assert_eq!(canonical_sign(&c), c);
        }
    }
}
