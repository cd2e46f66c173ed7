//! Query phase: answer `[t_s, t_e]` from stored block factors.
//!
//! The first and last blocks touched by the range are trimmed to the rows
//! inside it ([`trim_block`]); the trimmed parts and the untouched middle
//! blocks are then stitched into a single SVD ([`stitch`]). Raw rows are
//! never rebuilt.

use crate::error::{Error, Result};
use crate::linalg::{
    canonical_sign, check_threshold, svd_kernel, truncate_unchecked, DenseMatrix, SvdFactors,
};
use crate::storage::BlockStore;

/// A closed row interval `[t_s, t_e]` mapped onto block coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeRange {
    pub t_s: usize,
    pub t_e: usize,
    /// Block holding `t_s`.
    pub start_block: usize,
    /// Block holding `t_e`.
    pub end_block: usize,
    /// Rows of the start block before `t_s`.
    pub start_skip: usize,
    /// Rows of the start block kept, counted against the full block size.
    pub start_keep: usize,
    /// Rows of the end block kept, from its first row through `t_e`.
    pub end_keep: usize,
    /// Rows of the end block after `t_e`, counted against the full block size.
    pub end_skip: usize,
}

impl TimeRange {
    /// Maps `[t_s, t_e]` onto blocks of size `block_size`, requiring
    /// `t_e < total_rows`.
    pub fn new(t_s: usize, t_e: usize, block_size: usize, total_rows: usize) -> Result<Self> {
        if block_size == 0 {
            return Err(Error::InvalidParameter("block size must be at least 1".into()));
        }
        if total_rows == 0 {
            return Err(Error::Range("store is empty".into()));
        }
        if t_s > t_e {
            return Err(Error::Range(format!("start {t_s} is after end {t_e}")));
        }
        if t_e >= total_rows {
            return Err(Error::Range(format!(
                "end {t_e} is past the last stored row {}",
                total_rows - 1
            )));
        }
        let start_block = t_s / block_size;
        let end_block = t_e / block_size;
        let start_skip = t_s - start_block * block_size;
        let end_keep = t_e - end_block * block_size + 1;
        Ok(Self {
            t_s,
            t_e,
            start_block,
            end_block,
            start_skip,
            start_keep: block_size - start_skip,
            end_keep,
            end_skip: block_size - end_keep,
        })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.t_e - self.t_s + 1
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }
}

/// SVD of the rows `[t_s, t_e]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeSvd {
    pub t_s: usize,
    pub t_e: usize,
    pub factors: SvdFactors,
}

impl RangeSvd {
    /// First left singular vector, or `None` for a rank-zero answer.
    pub fn leading_left_vector(&self) -> Option<Vec<f64>> {
        (self.factors.rank() > 0).then(|| self.factors.u().column(0))
    }
}

/// Restricts block factors to rows `keep_from..=keep_to`.
///
/// The row slice of `U` plays the role of the elimination matrix. The slice
/// times `diag(sigma)` is re-decomposed as `U~ S~ V~^T`, truncated at `xi`,
/// and the result is `(U~, S~, V V~)`.
pub fn trim_block(
    block: &SvdFactors,
    keep_from: usize,
    keep_to: usize,
    xi: f64,
) -> Result<SvdFactors> {
    check_threshold(xi)?;
    if keep_from > keep_to {
        return Err(Error::InvalidParameter(format!(
            "empty keep range {keep_from}..={keep_to}"
        )));
    }
    if keep_to >= block.nrows() {
        return Err(Error::InvalidParameter(format!(
            "keep range ends at {keep_to} but the block has {} rows",
            block.nrows()
        )));
    }
    let rows = keep_to - keep_from + 1;
    if block.rank() == 0 {
        return Ok(SvdFactors::empty(rows, block.ncols()));
    }
    let sliced = block
        .u()
        .row_range(keep_from, keep_to + 1)
        .scale_columns(block.sigma());
    let inner = truncate_unchecked(&svd_kernel(&sliced), xi);
    let (u, sigma, small_v) = inner.into_parts();
    let v = block.v().matmul(&small_v);
    Ok(SvdFactors::from_parts_unchecked(u, sigma, v))
}

/// Stitches consecutive row-block factors into the SVD of their vertical
/// concatenation.
///
/// The stack `[S_1 V_1^T ; S_2 V_2^T ; ...]` is decomposed and truncated at
/// `xi` to `U_r S_r V_r^T`; the output left factor is the per-part product
/// `[U_1 U_r(1) ; U_2 U_r(2) ; ...]` where `U_r(i)` is the band of `U_r`
/// belonging to part `i`.
pub fn stitch(parts: &[SvdFactors], xi: f64) -> Result<SvdFactors> {
    let refs: Vec<&SvdFactors> = parts.iter().collect();
    stitch_refs(&refs, xi)
}

pub(crate) fn stitch_refs(parts: &[&SvdFactors], xi: f64) -> Result<SvdFactors> {
    check_threshold(xi)?;
    let first = parts
        .first()
        .ok_or_else(|| Error::InvalidInput("nothing to stitch".into()))?;
    let c = first.ncols();
    if let Some(bad) = parts.iter().find(|p| p.ncols() != c) {
        return Err(Error::InvalidInput(format!(
            "part has {} columns, expected {c}",
            bad.ncols()
        )));
    }
    let total_rows: usize = parts.iter().map(|p| p.nrows()).sum();

    let pieces: Vec<DenseMatrix> = parts.iter().map(|p| p.sigma_vt()).collect();
    let piece_refs: Vec<&DenseMatrix> = pieces.iter().collect();
    let stack = DenseMatrix::vstack(&piece_refs, c);
    let reduced = truncate_unchecked(&svd_kernel(&stack), xi);
    let k = reduced.rank();
    if k == 0 {
        return Ok(SvdFactors::empty(total_rows, c));
    }
    let (u_r, sigma, v) = reduced.into_parts();

    let mut data = Vec::with_capacity(total_rows * k);
    let mut offset = 0;
    for part in parts {
        let kp = part.rank();
        if kp == 0 {
            data.resize(data.len() + part.nrows() * k, 0.0);
            continue;
        }
        let band = u_r.row_range(offset, offset + kp);
        data.extend(part.u().matmul(&band).into_vec());
        offset += kp;
    }
    let u = DenseMatrix::from_vec_unchecked(total_rows, k, data);
    Ok(SvdFactors::from_parts_unchecked(u, sigma, v))
}

/// Factors of `[t_s, t_e]` computed from the store alone.
///
/// A boundary block whose kept rows cover the whole block is used as
/// stored. Queries may reach into the open tail block.
///
/// `xi` is applied once per query: by the trim when the range sits inside
/// one block, otherwise by the stitch, with boundary trims kept at
/// numerical rank.
pub fn range_query(store: &BlockStore, t_s: usize, t_e: usize, xi: f64) -> Result<RangeSvd> {
    check_threshold(xi)?;
    let range = TimeRange::new(t_s, t_e, store.block_size(), store.total_rows())?;
    let b = store.block_size();
    let block = |i: usize| {
        store
            .block_factors(i)
            .ok_or_else(|| Error::Range(format!("block {i} is not stored")))
    };

    let boundary = |i: usize, from: usize, to: usize, xi: f64| -> Result<Option<SvdFactors>> {
        let f = block(i)?;
        if from == 0 && to + 1 == f.nrows() {
            Ok(None)
        } else {
            trim_block(f, from, to, xi).map(Some)
        }
    };

    let factors = if range.start_block == range.end_block {
        let from = range.start_skip;
        let to = range.end_keep - 1;
        match boundary(range.start_block, from, to, xi)? {
            Some(f) => f,
            None => block(range.start_block)?.clone(),
        }
    } else {
        let head = boundary(range.start_block, range.start_skip, b - 1, 1.0)?;
        let tail = boundary(range.end_block, 0, range.end_keep - 1, 1.0)?;
        let mut parts: Vec<&SvdFactors> =
            Vec::with_capacity(range.end_block - range.start_block + 1);
        parts.push(match &head {
            Some(f) => f,
            None => block(range.start_block)?,
        });
        for i in range.start_block + 1..range.end_block {
            parts.push(block(i)?);
        }
        parts.push(match &tail {
            Some(f) => f,
            None => block(range.end_block)?,
        });
        stitch_refs(&parts, xi)?
    };

    Ok(RangeSvd {
        t_s,
        t_e,
        factors: canonical_sign(&factors),
    })
}

/// Rebuilds the raw rows `[t_s, t_e]` from stored factors.
///
/// This is the slow path the query phase avoids; it backs the naive baseline.
pub fn reconstruct_range(store: &BlockStore, t_s: usize, t_e: usize) -> Result<DenseMatrix> {
    let range = TimeRange::new(t_s, t_e, store.block_size(), store.total_rows())?;
    let b = store.block_size();
    let c = store.num_columns();
    let mut data = Vec::with_capacity(range.len() * c);
    for i in range.start_block..=range.end_block {
        let f = store
            .block_factors(i)
            .ok_or_else(|| Error::Range(format!("block {i} is not stored")))?;
        let from = if i == range.start_block { range.start_skip } else { 0 };
        let to = if i == range.end_block { range.end_keep } else { b };
        let rows = f.u().row_range(from, to).scale_columns(f.sigma());
        data.extend(rows.matmul(&f.v().transpose()).into_vec());
    }
    Ok(DenseMatrix::from_vec_unchecked(range.len(), c, data))
}

/// Baseline: rebuild the range from the store, then take its SVD.
pub fn naive_range_query(store: &BlockStore, t_s: usize, t_e: usize, xi: f64) -> Result<RangeSvd> {
    check_threshold(xi)?;
    let raw = reconstruct_range(store, t_s, t_e)?;
    let f = truncate_unchecked(&svd_kernel(&raw), xi);
    Ok(RangeSvd {
        t_s,
        t_e,
        factors: canonical_sign(&f),
    })
}
