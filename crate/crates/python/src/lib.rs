//! Python bindings for the `blocksvd` crate.
//!
//! Matrices cross the boundary as lists of rows; factor triples come back as
//! `(U, sigma, V)` with `U` of shape `m x k` and `V` of shape `n x k`.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use ::blocksvd as core;
use core::{DenseMatrix, SvdFactors};

type Factors = (Vec<Vec<f64>>, Vec<f64>, Vec<Vec<f64>>);

fn to_py(err: core::Error) -> PyErr {
    match err {
        core::Error::Io(e) => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn matrix(rows: &[Vec<f64>], cols: Option<usize>) -> PyResult<DenseMatrix> {
    if rows.is_empty() {
        return Ok(DenseMatrix::zeros(0, cols.unwrap_or(0)));
    }
    DenseMatrix::from_rows(rows).map_err(to_py)
}

fn unpack(f: &SvdFactors) -> Factors {
    (f.u().to_rows(), f.sigma().to_vec(), f.v().to_rows())
}

fn pack(u: &[Vec<f64>], sigma: Vec<f64>, v: &[Vec<f64>], m: usize, n: usize) -> PyResult<SvdFactors> {
    let k = sigma.len();
    if k == 0 {
        return Ok(SvdFactors::empty(m, n));
    }
    SvdFactors::new(matrix(u, Some(k))?, sigma, matrix(v, Some(k))?).map_err(to_py)
}

/// Streaming block store. Rows are appended one at a time; any closed row
/// range can be queried afterwards.
#[pyclass(name = "BlockStore", module = "blocksvd")]
struct PyBlockStore {
    inner: core::BlockStore,
}

#[pymethods]
impl PyBlockStore {
    #[new]
    #[pyo3(signature = (block_size, num_columns, xi = 0.98))]
    fn new(block_size: usize, num_columns: usize, xi: f64) -> PyResult<Self> {
        let inner = core::BlockStore::new(block_size, num_columns, xi).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let inner = core::load_store(path).map_err(to_py)?;
        Ok(Self { inner })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        core::save_store(&self.inner, path).map_err(to_py)
    }

    fn append_row(&mut self, row: Vec<f64>) -> PyResult<()> {
        self.inner.append_row(&row).map_err(to_py)
    }

    fn append_rows(&mut self, rows: Vec<Vec<f64>>) -> PyResult<()> {
        self.inner.append_rows(rows).map_err(to_py)
    }

    #[getter]
    fn block_size(&self) -> usize {
        self.inner.block_size()
    }

    #[getter]
    fn num_columns(&self) -> usize {
        self.inner.num_columns()
    }

    #[getter]
    fn xi(&self) -> f64 {
        self.inner.xi()
    }

    #[getter]
    fn total_rows(&self) -> usize {
        self.inner.total_rows()
    }

    #[getter]
    fn sealed_count(&self) -> usize {
        self.inner.sealed_count()
    }

    /// Serialized size in bytes.
    fn byte_size(&self) -> usize {
        self.inner.byte_size()
    }

    /// Size of the ingested rows stored densely as f64.
    fn raw_byte_size(&self) -> usize {
        self.inner.raw_byte_size()
    }

    /// Stored factors of block `i` (sealed or open), or `None`.
    fn block(&self, i: usize) -> Option<Factors> {
        self.inner.block_factors(i).map(unpack)
    }

    /// `(U, sigma, V)` of rows `t_s..=t_e`. `xi` defaults to the store's.
    #[pyo3(signature = (t_s, t_e, xi = None))]
    fn range_query(&self, t_s: usize, t_e: usize, xi: Option<f64>) -> PyResult<Factors> {
        let xi = xi.unwrap_or(self.inner.xi());
        let answer = core::range_query(&self.inner, t_s, t_e, xi).map_err(to_py)?;
        Ok(unpack(&answer.factors))
    }

    /// Past windows most similar to `t_s..=t_e`, as `(window_start, similarity)`.
    #[pyo3(signature = (t_s, t_e, stride, top_n = 2, xi = None))]
    fn search(
        &self,
        t_s: usize,
        t_e: usize,
        stride: usize,
        top_n: usize,
        xi: Option<f64>,
    ) -> PyResult<Vec<(usize, f64)>> {
        let xi = xi.unwrap_or(self.inner.xi());
        let base = core::TimeRange::new(
            t_s,
            t_e,
            self.inner.block_size(),
            self.inner.total_rows(),
        )
        .map_err(to_py)?;
        let hits = core::similar_range_search(&self.inner, &base, stride, top_n, xi).map_err(to_py)?;
        Ok(hits.iter().map(|h| (h.window_start, h.similarity)).collect())
    }

    fn __len__(&self) -> usize {
        self.inner.total_rows()
    }

    fn __repr__(&self) -> String {
        format!(
            "BlockStore(block_size={}, num_columns={}, xi={}, total_rows={})",
            self.inner.block_size(),
            self.inner.num_columns(),
            self.inner.xi(),
            self.inner.total_rows()
        )
    }
}

/// Thin SVD `(U, sigma, V)` of a list of rows.
#[pyfunction]
fn thin_svd(rows: Vec<Vec<f64>>) -> PyResult<Factors> {
    let a = matrix(&rows, None)?;
    core::thin_svd(&a).map(|f| unpack(&f)).map_err(to_py)
}

/// Keeps the fewest leading components holding at least `xi` of the energy.
#[pyfunction]
fn truncate_rank(u: Vec<Vec<f64>>, sigma: Vec<f64>, v: Vec<Vec<f64>>, xi: f64) -> PyResult<Factors> {
    let f = pack(&u, sigma, &v, u.len(), v.len())?;
    core::truncate_rank(&f, xi).map(|f| unpack(&f)).map_err(to_py)
}

/// `||X - U diag(sigma) V^T||_F^2 / ||X||_F^2`.
#[pyfunction]
fn reconstruction_error(
    raw: Vec<Vec<f64>>,
    u: Vec<Vec<f64>>,
    sigma: Vec<f64>,
    v: Vec<Vec<f64>>,
) -> PyResult<f64> {
    let raw = matrix(&raw, None)?;
    let f = pack(&u, sigma, &v, raw.rows(), raw.cols())?;
    core::reconstruction_error(&raw, &f).map_err(to_py)
}

#[pymodule(name = "blocksvd")]
fn blocksvd_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyBlockStore>()?;
    m.add_function(wrap_pyfunction!(thin_svd, m)?)?;
    m.add_function(wrap_pyfunction!(truncate_rank, m)?)?;
    m.add_function(wrap_pyfunction!(reconstruction_error, m)?)?;
    Ok(())
}
