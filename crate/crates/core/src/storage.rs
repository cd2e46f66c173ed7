//! Storage phase: fold rows into the open block's SVD and seal full blocks.
//!
//! Block `i` covers rows `[i * b, (i + 1) * b)`. While a block is open its
//! factors are kept at numerical rank; the energy threshold is applied once,
//! when the block is sealed.

use std::ops::Deref;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{
    canonical_sign, check_threshold, orthonormality_defect, svd_kernel, thin_qr,
    truncate_unchecked, DenseMatrix, SvdFactors,
};

/// Open blocks are re-orthonormalized whenever their row count hits a
/// multiple of this.
pub const REORTHO_INTERVAL: usize = 64;

/// Defect of `U` above which re-orthonormalization kicks in.
pub const REORTHO_TOLERANCE: f64 = 1e-10;

/// The most recent, not yet full block.
#[derive(Debug, Clone, PartialEq)]
pub struct OpenBlock {
    block_index: usize,
    rows_seen: usize,
    factors: SvdFactors,
}

impl OpenBlock {
    /// Starts block `block_index` from its first row.
    ///
    /// A zero row yields rank-zero factors with one (empty) row in `U`.
    pub fn start(block_index: usize, row: &[f64]) -> Result<Self> {
        let a = DenseMatrix::new(1, row.len(), row.to_vec())?;
        Ok(Self {
            block_index,
            rows_seen: 1,
            factors: svd_kernel(&a),
        })
    }

    pub fn from_parts(block_index: usize, factors: SvdFactors) -> Self {
        Self {
            block_index,
            rows_seen: factors.nrows(),
            factors,
        }
    }

    #[inline]
    pub fn block_index(&self) -> usize {
        self.block_index
    }

    #[inline]
    pub fn rows_seen(&self) -> usize {
        self.rows_seen
    }

    #[inline]
    pub fn factors(&self) -> &SvdFactors {
        &self.factors
    }
}

/// A full block compressed to its energy threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct SealedBlock {
    block_index: usize,
    factors: SvdFactors,
}

impl SealedBlock {
    pub fn new(block_index: usize, factors: SvdFactors) -> Self {
        Self {
            block_index,
            factors,
        }
    }

    #[inline]
    pub fn block_index(&self) -> usize {
        self.block_index
    }

    #[inline]
    pub fn factors(&self) -> &SvdFactors {
        &self.factors
    }
}

/// Folds `row` into the open block's SVD.
///
/// The `(k + 1) x c` stack `[diag(sigma) V^T ; row]` is decomposed as
/// `U~ S~ V~^T` and the new left factor is `[[U, 0], [0, 1]] U~`.
pub fn incremental_update(block: &OpenBlock, row: &[f64], block_size: usize) -> Result<OpenBlock> {
    if block.rows_seen >= block_size {
        return Err(Error::ContractViolation(format!(
            "block {} already holds {} of {} rows",
            block.block_index, block.rows_seen, block_size
        )));
    }
    let c = block.factors.ncols();
    if row.len() != c {
        return Err(Error::InvalidInput(format!(
            "row has {} entries, expected {c}",
            row.len()
        )));
    }
    let new_row = DenseMatrix::new(1, c, row.to_vec())?;
    let stack = DenseMatrix::vstack(&[&block.factors.sigma_vt(), &new_row], c);
    let (small_u, sigma, v) = svd_kernel(&stack).into_parts();

    let k_old = block.factors.rank();
    let old_u = block.factors.u();
    let m = block.rows_seen;
    let u = if k_old == 0 {
        DenseMatrix::zeros(m, small_u.cols())
    } else {
        old_u.matmul(&small_u.row_range(0, k_old))
    };
    let mut data = u.into_vec();
    data.extend_from_slice(small_u.row(k_old));
    let u = DenseMatrix::from_vec_unchecked(m + 1, small_u.cols(), data);

    let mut next = OpenBlock {
        block_index: block.block_index,
        rows_seen: m + 1,
        factors: SvdFactors::from_parts_unchecked(u, sigma, v),
    };
    if next.rows_seen.is_multiple_of(REORTHO_INTERVAL) {
        next = reorthonormalize(&next);
    }
    Ok(next)
}

/// Restores column orthonormality of `U` when rounding has eroded it.
///
/// `U = Q R` is factored and `R diag(sigma)` re-decomposed, so the
/// represented matrix is unchanged.
pub fn reorthonormalize(block: &OpenBlock) -> OpenBlock {
    let f = &block.factors;
    if f.rank() == 0 || orthonormality_defect(f.u()) <= REORTHO_TOLERANCE {
        return block.clone();
    }
    let (q, r) = thin_qr(f.u());
    let inner = svd_kernel(&r.scale_columns(f.sigma()));
    let (small_u, sigma, small_v) = inner.into_parts();
    let u = q.matmul(&small_u);
    let v = f.v().matmul(&small_v);
    OpenBlock {
        block_index: block.block_index,
        rows_seen: block.rows_seen,
        factors: SvdFactors::from_parts_unchecked(u, sigma, v),
    }
}

/// Compressed stream state: sealed blocks plus the open tail.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockStore {
    block_size: usize,
    num_columns: usize,
    xi: f64,
    sealed: Vec<Arc<SealedBlock>>,
    open: Option<OpenBlock>,
    total_rows: usize,
}

impl BlockStore {
    /// Empty store with block size `b`, `c` columns and sealing threshold `xi`.
    pub fn new(block_size: usize, num_columns: usize, xi: f64) -> Result<Self> {
        if block_size == 0 {
            return Err(Error::InvalidParameter("block size must be at least 1".into()));
        }
        if num_columns == 0 {
            return Err(Error::InvalidParameter("column count must be at least 1".into()));
        }
        check_threshold(xi)?;
        Ok(Self {
            block_size,
            num_columns,
            xi,
            sealed: Vec::new(),
            open: None,
            total_rows: 0,
        })
    }

    /// Reassembles a store from decoded parts, checking the counting invariants.
    pub fn from_parts(
        block_size: usize,
        num_columns: usize,
        xi: f64,
        sealed: Vec<SealedBlock>,
        open: Option<OpenBlock>,
    ) -> Result<Self> {
        let mut store = Self::new(block_size, num_columns, xi)?;
        for (i, block) in sealed.iter().enumerate() {
            let f = block.factors();
            if block.block_index != i {
                return Err(Error::InvalidInput(format!(
                    "sealed block {i} carries index {}",
                    block.block_index
                )));
            }
            if f.nrows() != block_size || f.ncols() != num_columns {
                return Err(Error::InvalidInput(format!(
                    "sealed block {i} has shape {}x{}",
                    f.nrows(),
                    f.ncols()
                )));
            }
        }
        if let Some(o) = &open {
            if o.block_index != sealed.len() {
                return Err(Error::InvalidInput(format!(
                    "open block index {} does not follow {} sealed blocks",
                    o.block_index,
                    sealed.len()
                )));
            }
            if o.rows_seen == 0 || o.rows_seen >= block_size {
                return Err(Error::InvalidInput(format!(
                    "open block holds {} rows with block size {block_size}",
                    o.rows_seen
                )));
            }
            if o.factors.nrows() != o.rows_seen || o.factors.ncols() != num_columns {
                return Err(Error::InvalidInput("open block shape mismatch".into()));
            }
        }
        store.total_rows = sealed.len() * block_size + open.as_ref().map_or(0, |o| o.rows_seen);
        store.sealed = sealed.into_iter().map(Arc::new).collect();
        store.open = open;
        Ok(store)
    }

    #[inline]
    pub fn block_size(&self) -> usize {
        self.block_size
    }

    #[inline]
    pub fn num_columns(&self) -> usize {
        self.num_columns
    }

    #[inline]
    pub fn xi(&self) -> f64 {
        self.xi
    }

    #[inline]
    pub fn total_rows(&self) -> usize {
        self.total_rows
    }

    #[inline]
    pub fn sealed_count(&self) -> usize {
        self.sealed.len()
    }

    pub fn sealed(&self) -> impl ExactSizeIterator<Item = &SealedBlock> {
        self.sealed.iter().map(|b| b.as_ref())
    }

    pub fn sealed_block(&self, i: usize) -> Option<&SealedBlock> {
        self.sealed.get(i).map(|b| b.as_ref())
    }

    #[inline]
    pub fn open_block(&self) -> Option<&OpenBlock> {
        self.open.as_ref()
    }

    /// Factors and row count of block `i`, sealed or open.
    pub fn block_factors(&self, i: usize) -> Option<&SvdFactors> {
        match self.sealed.get(i) {
            Some(b) => Some(b.factors()),
            None => self
                .open
                .as_ref()
                .filter(|o| o.block_index == i)
                .map(|o| o.factors()),
        }
    }

    /// Appends one tick of `c` readings.
    pub fn append_row(&mut self, row: &[f64]) -> Result<()> {
        if row.len() != self.num_columns {
            return Err(Error::InvalidInput(format!(
                "row has {} entries, expected {}",
                row.len(),
                self.num_columns
            )));
        }
        if row.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("row contains a non-finite value".into()));
        }
        let next = match self.open.take() {
            None => OpenBlock::start(self.sealed.len(), row)?,
            Some(block) => match incremental_update(&block, row, self.block_size) {
                Ok(next) => next,
                Err(e) => {
                    self.open = Some(block);
                    return Err(e);
                }
            },
        };
        self.total_rows += 1;
        if next.rows_seen == self.block_size {
            let factors = canonical_sign(&truncate_unchecked(&next.factors, self.xi));
            self.sealed
                .push(Arc::new(SealedBlock::new(next.block_index, factors)));
        } else {
            self.open = Some(next);
        }
        Ok(())
    }

    pub fn append_rows<R: AsRef<[f64]>>(&mut self, rows: impl IntoIterator<Item = R>) -> Result<()> {
        for row in rows {
            self.append_row(row.as_ref())?;
        }
        Ok(())
    }

    /// Serialized size in bytes of this store in the `ZSVD` format.
    pub fn byte_size(&self) -> usize {
        crate::io::encoded_len(self)
    }

    /// Size in bytes of the raw `f64` rows this store replaces.
    pub fn raw_byte_size(&self) -> usize {
        self.total_rows * self.num_columns * 8
    }

    /// Immutable view of the current state. Sealed blocks are shared, not copied.
    pub fn snapshot(&self) -> StoreSnapshot {
        StoreSnapshot(Arc::new(self.clone()))
    }
}

/// Read-only, cheaply clonable view of a [`BlockStore`].
#[derive(Debug, Clone)]
pub struct StoreSnapshot(Arc<BlockStore>);

impl Deref for StoreSnapshot {
    type Target = BlockStore;

    fn deref(&self) -> &BlockStore {
        &self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{reconstruct, thin_svd};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_rows(rng: &mut ChaCha8Rng, n: usize, c: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| (0..c).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect()
    }

    fn rel_err(raw: &DenseMatrix, approx: &DenseMatrix) -> f64 {
        (raw.distance_sq(approx) / raw.frobenius_norm_sq()).sqrt()
    }

    #[test]
    fn new_store_validates_parameters() {
        let s = BlockStore::new(1000, 16, 0.98).unwrap();
        assert_eq!(s.block_size(), 1000);
        assert_eq!(s.total_rows(), 0);
        assert!(s.open_block().is_none());
        assert!(BlockStore::new(1, 1, 1.0).is_ok());
        assert!(matches!(
            BlockStore::new(0, 5, 0.98),
            Err(Error::InvalidParameter(_))
        ));
        assert!(BlockStore::new(5, 0, 0.98).is_err());
        assert!(BlockStore::new(5, 5, 0.0).is_err());
        assert!(BlockStore::new(5, 5, 1.01).is_err());
    }

    #[test]
    fn full_block_is_sealed() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = BlockStore::new(10, 3, 0.98).unwrap();
        s.append_rows(random_rows(&mut rng, 10, 3)).unwrap();
        assert_eq!(s.sealed_count(), 1);
        assert!(s.open_block().is_none());
        assert_eq!(s.total_rows(), 10);
        assert_eq!(s.sealed_block(0).unwrap().factors().nrows(), 10);
    }

    #[test]
    fn zero_first_row_opens_rank_zero_block() {
        let mut s = BlockStore::new(4, 3, 0.98).unwrap();
        s.append_row(&[0.0, 0.0, 0.0]).unwrap();
        let open = s.open_block().unwrap();
        assert_eq!(open.rows_seen(), 1);
        assert_eq!(open.factors().rank(), 0);
        assert_eq!(open.factors().nrows(), 1);
    }

    #[test]
    fn rejects_bad_rows() {
        let mut s = BlockStore::new(4, 3, 0.98).unwrap();
        assert!(matches!(
            s.append_row(&[1.0, 2.0]),
            Err(Error::InvalidInput(_))
        ));
        assert!(s.append_row(&[1.0, f64::NAN, 2.0]).is_err());
        assert_eq!(s.total_rows(), 0);
    }

    #[test]
    fn rank_one_stream_seals_rank_one_blocks() {
        let pattern = [1.0, -2.0, 0.5, 3.0];
        let b = 16;
        let mut s = BlockStore::new(b, 4, 0.98).unwrap();
        for t in 0..2 * b {
            let scale = (t as f64 * 0.37).sin() + 1.5;
            let row: Vec<f64> = pattern.iter().map(|p| p * scale).collect();
            s.append_row(&row).unwrap();
        }
        assert_eq!(s.sealed_count(), 2);
        for block in s.sealed() {
            assert_eq!(block.factors().rank(), 1);
        }
    }

    #[test]
    fn duplicate_row_update() {
        let r1 = [3.0, 4.0, 0.0];
        let block = OpenBlock::start(0, &r1).unwrap();
        let next = incremental_update(&block, &r1, 8).unwrap();
        assert_eq!(next.factors().rank(), 1);
        // stack [r1; r1] has sigma_1 = sqrt(2) * |r1| = sqrt(2) * 5
        assert!((next.factors().sigma()[0] - 2f64.sqrt() * 5.0).abs() < 1e-12);
    }

    #[test]
    fn zero_row_update_keeps_sigma() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows = random_rows(&mut rng, 2, 3);
        let block = OpenBlock::start(0, &rows[0]).unwrap();
        let block = incremental_update(&block, &rows[1], 8).unwrap();
        let next = incremental_update(&block, &[0.0; 3], 8).unwrap();
        assert_eq!(next.rows_seen(), 3);
        for (a, b) in block.factors().sigma().iter().zip(next.factors().sigma()) {
            assert!((a - b).abs() < 1e-12);
        }
        let u = next.factors().u();
        assert!(u.row(2).iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn full_block_update_is_contract_violation() {
        let block = OpenBlock::start(0, &[1.0, 2.0]).unwrap();
        assert!(matches!(
            incremental_update(&block, &[1.0, 2.0], 1),
            Err(Error::ContractViolation(_))
        ));
    }

    #[test]
    fn row_by_row_matches_direct_svd() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rows = random_rows(&mut rng, 3, 3);
        let mut block = OpenBlock::start(0, &rows[0]).unwrap();
        for r in &rows[1..] {
            block = incremental_update(&block, r, 3).unwrap();
        }
        let raw = DenseMatrix::from_rows(&rows).unwrap();
        let direct = reconstruct(&thin_svd(&raw).unwrap());
        let streamed = reconstruct(block.factors());
        assert!(rel_err(&direct, &streamed) < 1e-8);
    }

    #[test]
    fn reorthonormalize_noop_when_clean() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let raw = DenseMatrix::from_rows(&random_rows(&mut rng, 6, 3)).unwrap();
        let block = OpenBlock::from_parts(0, thin_svd(&raw).unwrap());
        assert_eq!(reorthonormalize(&block), block);
        let empty = OpenBlock::from_parts(0, SvdFactors::empty(4, 3));
        assert_eq!(reorthonormalize(&empty), empty);
    }

    #[test]
    fn reorthonormalize_repairs_drift() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let raw = DenseMatrix::from_rows(&random_rows(&mut rng, 12, 4)).unwrap();
        let (u, sigma, v) = thin_svd(&raw).unwrap().into_parts();
        let mut u = u;
        let eps = 5e-7;
        for i in 0..u.rows() {
            for j in 0..u.cols() {
                let x = u.get(i, j) + eps * (((i * 31 + j * 17) % 7) as f64 - 3.0) / 3.0;
                u.set(i, j, x);
            }
        }
        let perturbed = SvdFactors::new(u, sigma, v).unwrap();
        let defect = orthonormality_defect(perturbed.u());
        assert!(defect > 1e-7 && defect < 1e-5, "defect {defect}");
        let block = OpenBlock::from_parts(0, perturbed);
        let before = reconstruct(block.factors());
        let repaired = reorthonormalize(&block);
        assert!(orthonormality_defect(repaired.factors().u()) <= 1e-10);
        assert!(orthonormality_defect(repaired.factors().v()) <= 1e-10);
        assert!(rel_err(&before, &reconstruct(repaired.factors())) <= 1e-9);
    }

    #[test]
    fn long_block_stays_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut s = BlockStore::new(500, 6, 1.0).unwrap();
        for row in random_rows(&mut rng, 499, 6) {
            s.append_row(&row).unwrap();
            let open = s.open_block().unwrap();
            assert!(orthonormality_defect(open.factors().u()) <= 1e-8);
        }
    }

    #[test]
    fn snapshot_is_isolated_from_writer() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut s = BlockStore::new(4, 2, 1.0).unwrap();
        s.append_rows(random_rows(&mut rng, 6, 2)).unwrap();
        let snap = s.snapshot();
        s.append_rows(random_rows(&mut rng, 5, 2)).unwrap();
        assert_eq!(snap.total_rows(), 6);
        assert_eq!(snap.sealed_count(), 1);
        assert_eq!(s.total_rows(), 11);
    }

    #[test]
    fn counts_stay_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut s = BlockStore::new(7, 3, 0.95).unwrap();
        for (t, row) in random_rows(&mut rng, 40, 3).into_iter().enumerate() {
            s.append_row(&row).unwrap();
            let open_rows = s.open_block().map_or(0, |o| o.rows_seen());
            assert_eq!(s.total_rows(), t + 1);
            assert_eq!(s.total_rows(), s.sealed_count() * 7 + open_rows);
            for (i, b) in s.sealed().enumerate() {
                assert_eq!(b.block_index(), i);
            }
        }
    }
}
