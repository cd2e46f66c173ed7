//! The `blocksvd` command-line tool.
//!
//! Exit codes: 0 success, 1 usage or argument error, 2 data/format error,
//! 3 verification failure.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::{reconstruction_error, similar_range_search};
use crate::error::{Error, Result};
use crate::io::{load_store, read_csv_matrix, read_csv_stream, save_store, CsvOptions};
use crate::linalg::{check_threshold, DenseMatrix};
use crate::query::{naive_range_query, range_query, RangeSvd, TimeRange};
use crate::storage::BlockStore;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;

pub const DEFAULT_BLOCK_SIZE: usize = 1000;
pub const DEFAULT_XI: f64 = 0.98;

#[derive(Debug, Parser)]
#[command(name = "blocksvd", version, about = "Block-wise SVD compression and time-range queries")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compress a CSV stream into a store file.
    Ingest(IngestArgs),
    /// Answer a time-range SVD query and write U.csv, sigma.csv and V.csv.
    Query(QueryArgs),
    /// Compare a range answer against the raw CSV it was built from.
    Verify(VerifyArgs),
    /// Find past windows similar to a base range.
    Search(SearchArgs),
    /// Time range queries of several lengths.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long, default_value_t = DEFAULT_BLOCK_SIZE)]
    pub block_size: usize,
    #[arg(long, default_value_t = DEFAULT_XI)]
    pub xi: f64,
    #[arg(long)]
    pub drop_timestamp: bool,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long)]
    pub start: usize,
    #[arg(long)]
    pub end: usize,
    /// Query threshold; defaults to the store's.
    #[arg(long)]
    pub xi: Option<f64>,
    /// Output directory for the factor CSVs.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub store: PathBuf,
    /// Raw CSV the store was built from.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub start: usize,
    #[arg(long)]
    pub end: usize,
    #[arg(long)]
    pub xi: Option<f64>,
    #[arg(long)]
    pub drop_timestamp: bool,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long)]
    pub start: usize,
    #[arg(long)]
    pub end: usize,
    #[arg(long, default_value_t = 500)]
    pub stride: usize,
    #[arg(long, default_value_t = 2)]
    pub top: usize,
    #[arg(long)]
    pub xi: Option<f64>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    pub lengths: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    pub reps: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub xi: Option<f64>,
    /// Time the rebuild-then-decompose baseline instead.
    #[arg(long)]
    pub naive: bool,
}

/// Failure of a subcommand, carrying its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidParameter(_) => EXIT_USAGE,
            _ => EXIT_DATA,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Error::from(e).into()
    }
}

type CliResult<T = ()> = std::result::Result<T, CliError>;

/// Formats a float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Parses arguments and runs one subcommand, returning the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let target: &mut dyn Write = if code == EXIT_OK { out } else { err };
            let _ = write!(target, "{}", e.render());
            return code;
        }
    };
    let result = match cli.command {
        Command::Ingest(a) => cmd_ingest(&a, out),
        Command::Query(a) => cmd_query(&a, out),
        Command::Verify(a) => cmd_verify(&a, out),
        Command::Search(a) => cmd_search(&a, out),
        Command::Bench(a) => cmd_bench(&a, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message);
            e.code
        }
    }
}

fn query_xi(store: &BlockStore, xi: Option<f64>) -> CliResult<f64> {
    let xi = xi.unwrap_or(store.xi());
    check_threshold(xi)?;
    Ok(xi)
}

pub fn cmd_ingest(args: &IngestArgs, out: &mut dyn Write) -> CliResult {
    if args.block_size == 0 {
        return Err(CliError::usage("--block-size must be at least 1"));
    }
    check_threshold(args.xi)?;
    let options = CsvOptions {
        expected_cols: None,
        drop_timestamp: args.drop_timestamp,
    };
    let mut store: Option<BlockStore> = None;
    for row in read_csv_stream(&args.input, options)? {
        let row = row?;
        let s = match &mut store {
            Some(s) => s,
            None => store.insert(BlockStore::new(args.block_size, row.len(), args.xi)?),
        };
        s.append_row(&row)?;
    }
    let store = store.ok_or_else(|| CliError {
        code: EXIT_DATA,
        message: format!("{} holds no data rows", args.input.display()),
    })?;
    save_store(&store, &args.store)?;
    let store_bytes = store.byte_size();
    let raw_bytes = store.raw_byte_size();
    writeln!(out, "total_rows={}", store.total_rows())?;
    writeln!(out, "sealed_blocks={}", store.sealed_count())?;
    writeln!(out, "store_bytes={store_bytes}")?;
    writeln!(out, "raw_bytes={raw_bytes}")?;
    writeln!(
        out,
        "compression_ratio={:.6}",
        raw_bytes as f64 / store_bytes as f64
    )?;
    Ok(())
}

fn write_matrix_csv(path: &Path, m: &DenseMatrix) -> CliResult {
    let mut text = String::with_capacity(m.rows() * m.cols() * 24);
    for i in 0..m.rows() {
        let line: Vec<String> = m.row(i).iter().map(|&x| fmt_f64(x)).collect();
        text.push_str(&line.join(","));
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

/// Writes `U.csv`, `sigma.csv` and `V.csv` into `dir`.
pub fn write_range_svd(dir: &Path, answer: &RangeSvd) -> CliResult {
    fs::create_dir_all(dir)?;
    let f = &answer.factors;
    write_matrix_csv(&dir.join("U.csv"), f.u())?;
    let mut sigma = String::new();
    for &s in f.sigma() {
        sigma.push_str(&fmt_f64(s));
        sigma.push('\n');
    }
    fs::write(dir.join("sigma.csv"), sigma)?;
    write_matrix_csv(&dir.join("V.csv"), f.v())?;
    Ok(())
}

pub fn cmd_query(args: &QueryArgs, out: &mut dyn Write) -> CliResult {
    let store = load_store(&args.store)?;
    let xi = query_xi(&store, args.xi)?;
    let started = Instant::now();
    let answer = range_query(&store, args.start, args.end, xi)?;
    let elapsed = started.elapsed();
    write_range_svd(&args.out, &answer)?;
    writeln!(out, "k={}", answer.factors.rank())?;
    writeln!(out, "elapsed_ms={:.6}", elapsed.as_secs_f64() * 1e3)?;
    Ok(())
}

pub fn cmd_verify(args: &VerifyArgs, out: &mut dyn Write) -> CliResult {
    let store = load_store(&args.store)?;
    let xi = query_xi(&store, args.xi)?;
    let raw = read_csv_matrix(
        &args.input,
        CsvOptions {
            expected_cols: Some(store.num_columns()),
            drop_timestamp: args.drop_timestamp,
        },
    )?;
    if raw.rows() != store.total_rows() {
        return Err(CliError {
            code: EXIT_DATA,
            message: format!(
                "raw data has {} rows but the store holds {}",
                raw.rows(),
                store.total_rows()
            ),
        });
    }
    let started = Instant::now();
    let answer = range_query(&store, args.start, args.end, xi)?;
    let elapsed = started.elapsed();
    let slice = raw.row_range(args.start, args.end + 1);
    let error = reconstruction_error(&slice, &answer.factors)?;
    let budget = (1.0 - store.xi()) + (1.0 - xi) + 1e-6;
    writeln!(out, "reconstruction_error={}", fmt_f64(error))?;
    writeln!(out, "budget={}", fmt_f64(budget))?;
    writeln!(out, "query_ms={:.6}", elapsed.as_secs_f64() * 1e3)?;
    writeln!(out, "store_bytes={}", store.byte_size())?;
    if error <= budget {
        writeln!(out, "PASS")?;
        Ok(())
    } else {
        writeln!(out, "FAIL")?;
        Err(CliError {
            code: EXIT_VERIFY,
            message: format!("reconstruction error {error:e} exceeds budget {budget:e}"),
        })
    }
}

pub fn cmd_search(args: &SearchArgs, out: &mut dyn Write) -> CliResult {
    let store = load_store(&args.store)?;
    let xi = query_xi(&store, args.xi)?;
    let base = TimeRange::new(args.start, args.end, store.block_size(), store.total_rows())?;
    let hits = similar_range_search(&store, &base, args.stride, args.top, xi)?;
    for hit in hits {
        writeln!(out, "{},{}", hit.window_start, fmt_f64(hit.similarity))?;
    }
    Ok(())
}

/// Median query time for one range length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchRow {
    pub length: usize,
    pub median_ms: f64,
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Times `reps` queries per length at seeded random offsets.
pub fn bench_queries(
    store: &BlockStore,
    lengths: &[usize],
    reps: usize,
    seed: u64,
    xi: f64,
    naive: bool,
) -> Result<Vec<BenchRow>> {
    if reps == 0 {
        return Err(Error::InvalidParameter("--reps must be at least 1".into()));
    }
    check_threshold(xi)?;
    for &len in lengths {
        if len == 0 {
            return Err(Error::InvalidParameter("query lengths must be positive".into()));
        }
        if len > store.total_rows() {
            return Err(Error::Range(format!(
                "length {len} exceeds the {} stored rows",
                store.total_rows()
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(lengths.len());
    for &len in lengths {
        let mut times = Vec::with_capacity(reps);
        for _ in 0..reps {
            let t_s = rng.random_range(0..=store.total_rows() - len);
            let t_e = t_s + len - 1;
            let started = Instant::now();
            let answer = if naive {
                naive_range_query(store, t_s, t_e, xi)?
            } else {
                range_query(store, t_s, t_e, xi)?
            };
            times.push(started.elapsed().as_secs_f64() * 1e3);
            std::hint::black_box(answer);
        }
        rows.push(BenchRow {
            length: len,
            median_ms: median(times),
        });
    }
    Ok(rows)
}

pub fn cmd_bench(args: &BenchArgs, out: &mut dyn Write) -> CliResult {
    if args.reps == 0 {
        return Err(CliError::usage("--reps must be at least 1"));
    }
    let store = load_store(&args.store)?;
    let xi = query_xi(&store, args.xi)?;
    let rows = bench_queries(&store, &args.lengths, args.reps, args.seed, xi, args.naive)?;
    for row in rows {
        writeln!(out, "{},{:.6}", row.length, row.median_ms)?;
    }
    Ok(())
}
