//! Synthetic streams shared by the integration tests.
#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::Path;

use blocksvd::DenseMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
    let data = (0..rows * cols).map(|_| gaussian(rng)).collect();
    DenseMatrix::new(rows, cols, data).unwrap()
}

/// `rows x cols` matrix of exact rank `rank` (for generic random factors).
pub fn low_rank(rng: &mut ChaCha8Rng, rows: usize, cols: usize, rank: usize) -> DenseMatrix {
    random_matrix(rng, rows, rank).matmul(&random_matrix(rng, rank, cols))
}

/// AR(1) latent sources with geometrically decaying weights mixed into
/// `cols` channels, plus a small white-noise floor.
pub fn colored_noise(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
    let sources = cols;
    let mixing = random_matrix(rng, sources, cols);
    let weights: Vec<f64> = (0..sources).map(|j| 0.55f64.powi(j as i32)).collect();
    let mut state = vec![0.0; sources];
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows {
        for (s, w) in state.iter_mut().zip(&weights) {
            *s = 0.9 * *s + w * gaussian(rng);
        }
        for c in 0..cols {
            let mut x = 0.01 * gaussian(rng);
            for (j, s) in state.iter().enumerate() {
                x += s * mixing.get(j, c);
            }
            data.push(x);
        }
    }
    DenseMatrix::new(rows, cols, data).unwrap()
}

/// Pure noise with a random pattern added at each offset in `offsets`.
pub fn planted_stream(
    rng: &mut ChaCha8Rng,
    rows: usize,
    cols: usize,
    len: usize,
    offsets: &[usize],
) -> DenseMatrix {
    let noise = 0.1;
    let mut data: Vec<f64> = (0..rows * cols).map(|_| noise * gaussian(rng)).collect();
    let shape: Vec<f64> = (0..len).map(|_| gaussian(rng)).collect();
    let loading: Vec<f64> = (0..cols).map(|_| gaussian(rng)).collect();
    for &off in offsets {
        for t in 0..len {
            for c in 0..cols {
                data[(off + t) * cols + c] += 5.0 * shape[t] * loading[c];
            }
        }
    }
    DenseMatrix::new(rows, cols, data).unwrap()
}

pub fn write_csv(path: &Path, m: &DenseMatrix) {
    let mut text = String::new();
    for i in 0..m.rows() {
        let cells: Vec<String> = m.row(i).iter().map(|x| format!("{x:.17e}")).collect();
        writeln!(text, "{}", cells.join(",")).unwrap();
    }
    std::fs::write(path, text).unwrap();
}

pub fn store_from(m: &DenseMatrix, b: usize, xi: f64) -> blocksvd::BlockStore {
    let mut store = blocksvd::BlockStore::new(b, m.cols(), xi).unwrap();
    for i in 0..m.rows() {
        store.append_row(m.row(i)).unwrap();
    }
    store
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

pub fn run_cli(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = blocksvd::cli::run(
        std::iter::once("blocksvd").chain(args.iter().copied()),
        &mut out,
        &mut err,
    );
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}
