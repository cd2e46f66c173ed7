//! Streaming block-wise SVD compression for multivariate time series.
//!
//! Rows arrive one tick at a time and are folded into an incremental SVD of
//! the current block. Full blocks are truncated to an energy threshold and
//! sealed; the raw rows are never kept. Any time range `[t_s, t_e]` can then
//! be answered from the stored factors alone: the two boundary blocks are
//! trimmed to the range and all pieces are stitched into one SVD.
//!
//! The crate is split into:
//!
//! * [`linalg`]: dense matrices and the thin SVD / low-rank kernel.
//! * [`storage`]: the streaming storage phase ([`BlockStore`]).
//! * [`query`]: boundary trimming, stitching and [`range_query`].
//! * [`io`]: CSV ingestion and the binary `ZSVD` store format.
//! * [`analysis`]: error metrics, the exact oracle and similar-range search.
//! * [`cli`]: the `blocksvd` command-line tool.

pub mod analysis;
pub mod cli;
pub mod error;
pub mod io;
pub mod linalg;
pub mod query;
pub mod storage;

pub use analysis::{
    oracle_range_svd, reconstruction_error, similar_range_search, SearchHit,
};
pub use error::{Error, Result};
pub use io::{load_store, read_csv_stream, save_store};
pub use linalg::{
    canonical_sign, orthonormality_defect, reconstruct, thin_svd, truncate_rank, DenseMatrix,
    SvdFactors,
};
pub use query::{range_query, stitch, trim_block, RangeSvd, TimeRange};
pub use storage::{BlockStore, OpenBlock, SealedBlock, StoreSnapshot};
