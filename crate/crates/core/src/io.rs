//! CSV ingestion and the binary `ZSVD` store format.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! header   "ZSVD" | version u32 | b u32 | c u32 | xi f64
//!          | sealed_count u64 | total_rows u64 | has_open u8
//! sealed   index u64 | k u32 | U (b*k f64, row-major) | sigma (k f64)
//!          | V (c*k f64, row-major)                      (sealed_count times)
//! open     index u64 | rows_seen u32 | k u32 | U (rows_seen*k) | sigma | V
//!                                                        (only if has_open = 1)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, SvdFactors};
use crate::storage::{BlockStore, OpenBlock, SealedBlock};

pub const MAGIC: &[u8; 4] = b"ZSVD";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 4 + 4 + 4 + 4 + 8 + 8 + 8 + 1;

/// Orthonormality defect tolerated in factors read back from disk.
pub const LOAD_DEFECT_TOLERANCE: f64 = 1e-8;

/// Options for [`CsvRows`].
#[derive(Debug, Clone, Copy, Default)]
pub struct CsvOptions {
    /// Number of value columns every row must have.
    pub expected_cols: Option<usize>,
    /// Drop the first column of every line before parsing.
    pub drop_timestamp: bool,
}

/// Streaming reader over numeric CSV rows.
///
/// The first line is taken as a header when none of its cells parse as a
/// number. Every other line must hold the same number of finite values.
pub struct CsvRows<R: Read> {
    records: csv::StringRecordsIntoIter<R>,
    options: CsvOptions,
    width: Option<usize>,
    first: bool,
}

impl<R: Read> CsvRows<R> {
    pub fn from_reader(reader: R, options: CsvOptions) -> Self {
        let records = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(reader)
            .into_records();
        Self {
            records,
            options,
            width: options.expected_cols,
            first: true,
        }
    }

    fn parse_record(&mut self, record: &csv::StringRecord) -> Result<Option<Vec<f64>>> {
        let line = record.position().map_or(0, |p| p.line());
        let skip = usize::from(self.options.drop_timestamp);
        let cells: Vec<&str> = record.iter().skip(skip).collect();
        let is_first = std::mem::replace(&mut self.first, false);
        if is_first && !cells.is_empty() && cells.iter().all(|c| c.parse::<f64>().is_err()) {
            return Ok(None);
        }
        let mut row = Vec::with_capacity(cells.len());
        for (j, cell) in cells.iter().enumerate() {
            let value: f64 = cell.parse().map_err(|_| Error::Parse {
                line,
                message: format!("column {} is not a number: {cell:?}", j + 1 + skip),
            })?;
            if !value.is_finite() {
                return Err(Error::Parse {
                    line,
                    message: format!("column {} is not finite: {cell:?}", j + 1 + skip),
                });
            }
            row.push(value);
        }
        match self.width {
            Some(w) if w != row.len() => {
                if self.options.expected_cols.is_some() {
                    Err(Error::Schema(format!(
                        "line {line} has {} columns, expected {w}",
                        row.len()
                    )))
                } else {
                    Err(Error::Parse {
                        line,
                        message: format!("ragged row with {} columns, expected {w}", row.len()),
                    })
                }
            }
            _ => {
                if row.is_empty() {
                    return Err(Error::Parse {
                        line,
                        message: "row has no value columns".into(),
                    });
                }
                self.width = Some(row.len());
                Ok(Some(row))
            }
        }
    }
}

impl<R: Read> Iterator for CsvRows<R> {
    type Item = Result<Vec<f64>>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let record = match self.records.next()? {
                Ok(r) => r,
                Err(e) => {
                    let line = e.position().map_or(0, |p| p.line());
                    return Some(Err(Error::Parse {
                        line,
                        message: e.to_string(),
                    }));
                }
            };
            match self.parse_record(&record) {
                Ok(Some(row)) => return Some(Ok(row)),
                Ok(None) => continue,
                Err(e) => return Some(Err(e)),
            }
        }
    }
}

/// Opens `path` as a stream of numeric rows.
pub fn read_csv_stream(path: impl AsRef<Path>, options: CsvOptions) -> Result<CsvRows<File>> {
    let file = File::open(path)?;
    Ok(CsvRows::from_reader(file, options))
}

/// Reads a whole CSV file into a matrix.
pub fn read_csv_matrix(path: impl AsRef<Path>, options: CsvOptions) -> Result<DenseMatrix> {
    let rows = read_csv_stream(path, options)?.collect::<Result<Vec<_>>>()?;
    if rows.is_empty() {
        return Err(Error::InvalidInput("CSV holds no data rows".into()));
    }
    DenseMatrix::from_rows(&rows)
}

fn factors_len(rows: usize, cols: usize, k: usize) -> usize {
    8 * k * (rows + 1 + cols)
}

/// Exact byte length of `store` in the `ZSVD` format.
pub fn encoded_len(store: &BlockStore) -> usize {
    let b = store.block_size();
    let c = store.num_columns();
    let sealed: usize = store
        .sealed()
        .map(|s| 12 + factors_len(b, c, s.factors().rank()))
        .sum();
    let open = store
        .open_block()
        .map_or(0, |o| 16 + factors_len(o.rows_seen(), c, o.factors().rank()));
    HEADER_LEN + sealed + open
}

fn put_factors(out: &mut Vec<u8>, f: &SvdFactors) {
    for x in f.u().as_slice() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    for x in f.sigma() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    for x in f.v().as_slice() {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

fn to_u32(x: usize, what: &str) -> Result<u32> {
    u32::try_from(x).map_err(|_| Error::InvalidInput(format!("{what} {x} does not fit in u32")))
}

/// Serializes `store` into the `ZSVD` byte layout.
pub fn encode_store(store: &BlockStore) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(encoded_len(store));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&to_u32(store.block_size(), "block size")?.to_le_bytes());
    out.extend_from_slice(&to_u32(store.num_columns(), "column count")?.to_le_bytes());
    out.extend_from_slice(&store.xi().to_le_bytes());
    out.extend_from_slice(&(store.sealed_count() as u64).to_le_bytes());
    out.extend_from_slice(&(store.total_rows() as u64).to_le_bytes());
    out.push(u8::from(store.open_block().is_some()));
    for block in store.sealed() {
        out.extend_from_slice(&(block.block_index() as u64).to_le_bytes());
        out.extend_from_slice(&to_u32(block.factors().rank(), "rank")?.to_le_bytes());
        put_factors(&mut out, block.factors());
    }
    if let Some(open) = store.open_block() {
        out.extend_from_slice(&(open.block_index() as u64).to_le_bytes());
        out.extend_from_slice(&to_u32(open.rows_seen(), "row count")?.to_le_bytes());
        out.extend_from_slice(&to_u32(open.factors().rank(), "rank")?.to_le_bytes());
        put_factors(&mut out, open.factors());
    }
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Corruption(format!(
                "file ends inside {what} at byte {}",
                self.pos
            ))),
        }
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn floats(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let bytes = n
            .checked_mul(8)
            .ok_or_else(|| Error::Corruption(format!("{what} size overflows")))?;
        let raw = self.take(bytes, what)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn factors(&mut self, rows: usize, cols: usize, k: usize, what: &str) -> Result<SvdFactors> {
        if k > rows.min(cols) {
            return Err(Error::Corruption(format!(
                "{what} claims rank {k} for a {rows}x{cols} block"
            )));
        }
        let corrupt = |e: Error| Error::Corruption(format!("{what}: {e}"));
        let u = self.floats(rows * k, what)?;
        let sigma = self.floats(k, what)?;
        let v = self.floats(cols * k, what)?;
        let u = DenseMatrix::new(rows, k, u).map_err(corrupt)?;
        let v = DenseMatrix::new(cols, k, v).map_err(corrupt)?;
        let f = SvdFactors::new(u, sigma, v).map_err(corrupt)?;
        f.validate(LOAD_DEFECT_TOLERANCE).map_err(corrupt)?;
        Ok(f)
    }
}

/// Parses and validates a `ZSVD` byte buffer.
pub fn decode_store(buf: &[u8]) -> Result<BlockStore> {
    if buf.len() < 4 || &buf[..4] != MAGIC {
        return Err(Error::Format("bad magic, not a ZSVD store".into()));
    }
    let mut cur = Cursor { buf, pos: 4 };
    let version = cur.u32("header")?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let b = cur.u32("header")? as usize;
    let c = cur.u32("header")? as usize;
    let xi = cur.f64("header")?;
    let sealed_count = cur.u64("header")?;
    let total_rows = cur.u64("header")?;
    let has_open = cur.u8("header")?;
    if b == 0 || c == 0 || !(xi > 0.0 && xi <= 1.0) {
        return Err(Error::Format(format!(
            "invalid parameters b = {b}, c = {c}, xi = {xi}"
        )));
    }
    if has_open > 1 {
        return Err(Error::Corruption(format!("open-block flag is {has_open}")));
    }
    let max_blocks = (buf.len() / 12) as u64;
    if sealed_count > max_blocks {
        return Err(Error::Corruption(format!(
            "header claims {sealed_count} sealed blocks in {} bytes",
            buf.len()
        )));
    }

    let mut sealed = Vec::with_capacity(sealed_count as usize);
    for i in 0..sealed_count as usize {
        let what = format!("sealed block {i}");
        let index = cur.u64(&what)?;
        if index != i as u64 {
            return Err(Error::Corruption(format!("{what} carries index {index}")));
        }
        let k = cur.u32(&what)? as usize;
        let f = cur.factors(b, c, k, &what)?;
        sealed.push(SealedBlock::new(i, f));
    }
    let open = if has_open == 1 {
        let what = "open block";
        let index = cur.u64(what)?;
        if index != sealed_count {
            return Err(Error::Corruption(format!(
                "open block index {index} does not follow {sealed_count} sealed blocks"
            )));
        }
        let rows = cur.u32(what)? as usize;
        if rows == 0 || rows >= b {
            return Err(Error::Corruption(format!(
                "open block holds {rows} rows with block size {b}"
            )));
        }
        let k = cur.u32(what)? as usize;
        let f = cur.factors(rows, c, k, what)?;
        Some(OpenBlock::from_parts(index as usize, f))
    } else {
        None
    };
    if cur.pos != buf.len() {
        return Err(Error::Corruption(format!(
            "{} trailing bytes after the last block",
            buf.len() - cur.pos
        )));
    }
    let store = BlockStore::from_parts(b, c, xi, sealed, open)
        .map_err(|e| Error::Corruption(e.to_string()))?;
    if store.total_rows() as u64 != total_rows {
        return Err(Error::Corruption(format!(
            "header claims {total_rows} rows, blocks hold {}",
            store.total_rows()
        )));
    }
    Ok(store)
}

/// Writes `store` to `path`.
pub fn save_store(store: &BlockStore, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_store(store)?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

/// Reads and validates a store written by [`save_store`].
pub fn load_store(path: impl AsRef<Path>) -> Result<BlockStore> {
    let mut buf = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut buf)?;
    decode_store(&buf)
}
