//! Accuracy metrics, the exact oracle and similar-range search.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{reconstruct, thin_svd, DenseMatrix, SvdFactors};
use crate::query::{range_query, TimeRange};
use crate::storage::BlockStore;

/// `||X - X^||_F^2 / ||X||_F^2` with `X^` rebuilt from `f`.
///
/// An all-zero `raw` gives 0 when `f` also reconstructs to zero and
/// `f64::INFINITY` otherwise.
pub fn reconstruction_error(raw: &DenseMatrix, f: &SvdFactors) -> Result<f64> {
    if raw.shape() != (f.nrows(), f.ncols()) {
        return Err(Error::InvalidInput(format!(
            "raw data is {}x{} but factors describe {}x{}",
            raw.rows(),
            raw.cols(),
            f.nrows(),
            f.ncols()
        )));
    }
    let approx = reconstruct(f);
    let residual = raw.distance_sq(&approx);
    let energy = raw.frobenius_norm_sq();
    if energy == 0.0 {
        return Ok(if residual == 0.0 { 0.0 } else { f64::INFINITY });
    }
    Ok(residual / energy)
}

/// Exact thin SVD of `raw[t_s..=t_e]`.
pub fn oracle_range_svd(raw: &DenseMatrix, t_s: usize, t_e: usize) -> Result<SvdFactors> {
    if t_s > t_e || t_e >= raw.rows() {
        return Err(Error::Range(format!(
            "[{t_s}, {t_e}] is outside a matrix with {} rows",
            raw.rows()
        )));
    }
    thin_svd(&raw.row_range(t_s, t_e + 1))
}

/// One candidate window of a similar-range search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchHit {
    pub window_start: usize,
    /// `|cos|` between leading left singular vectors, in `[0, 1]`.
    pub similarity: f64,
}

/// Absolute cosine between two vectors; 0 when either is zero.
pub fn abs_cosine(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot.abs() / (na * nb)).min(1.0)
}

/// Start offsets of every complete window of length `len` ending before `before`.
pub fn past_windows(len: usize, before: usize, stride: usize) -> impl Iterator<Item = usize> {
    (0..).step_by(stride).take_while(move |&w| w + len <= before)
}

/// Orders hits by descending similarity, ties to the earlier window, and
/// keeps the first `top_n`.
pub fn rank_hits(mut hits: Vec<SearchHit>, top_n: usize) -> Vec<SearchHit> {
    hits.sort_by(|a, b| {
        b.similarity
            .total_cmp(&a.similarity)
            .then(a.window_start.cmp(&b.window_start))
    });
    hits.truncate(top_n);
    hits
}

fn check_search(base_len: usize, stride: usize) -> Result<()> {
    if base_len < 2 {
        return Err(Error::InvalidParameter(
            "base range must span at least 2 rows".into(),
        ));
    }
    if stride == 0 {
        return Err(Error::InvalidParameter("stride must be at least 1".into()));
    }
    Ok(())
}

/// Finds past windows whose leading left singular vector best matches the
/// base range's.
///
/// Windows have the base's length, start at multiples of `stride` and end
/// strictly before `base.t_s`.
pub fn similar_range_search(
    store: &BlockStore,
    base: &TimeRange,
    stride: usize,
    top_n: usize,
    xi: f64,
) -> Result<Vec<SearchHit>> {
    let len = base.len();
    check_search(len, stride)?;
    let base_answer = range_query(store, base.t_s, base.t_e, xi)?;
    let u1 = base_answer
        .leading_left_vector()
        .unwrap_or_else(|| vec![0.0; len]);

    let starts: Vec<usize> = past_windows(len, base.t_s, stride).collect();
    let hits = starts
        .into_par_iter()
        .map(|w| {
            let answer = range_query(store, w, w + len - 1, xi)?;
            let similarity = answer
                .leading_left_vector()
                .map_or(0.0, |v| abs_cosine(&u1, &v));
            Ok(SearchHit {
                window_start: w,
                similarity,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(rank_hits(hits, top_n))
}
