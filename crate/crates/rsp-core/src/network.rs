//! Weighted directed networks with column-normalized adjacency matrices.
//!
//! Entry `w[j][k]` is the influence of vertex j on vertex k; every column
//! sums to one, so `W^T 1 = 1`. Generators for the three canonical families
//! (mean-field, cycle, one special vertex) and block-triangular reducible
//! compositions live here too.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance on column sums before exact renormalization.
pub const COLUMN_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("negative weight {value} at ({row}, {col})")]
    NegativeWeight { row: usize, col: usize, value: f64 },
    #[error("column {col} sums to {sum}, not 1 within {COLUMN_SUM_TOL}")]
    ColumnNotNormalized { col: usize, sum: f64 },
    #[error("alpha must lie in (0, 1], got {0}")]
    AlphaOutOfRange(f64),
    #[error("need at least {min} vertices, got {got}")]
    NTooSmall { min: usize, got: usize },
    #[error("p must lie strictly in (0, 1), got {0}")]
    POutOfRange(f64),
    #[error("{0}")]
    DimensionMismatch(String),
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix must be nonempty")]
    Empty,
    #[error("leader block {0} is not irreducible")]
    LeaderNotIrreducible(usize),
    #[error("follower block has an eigenvalue with real part {0} >= 1")]
    FollowerSpectralRadius(f64),
}

/// A validated network: nonnegative weights, every column renormalized to
/// sum exactly to one, irreducibility (strong connectivity of the positive
/// support) precomputed.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedNetwork {
    n: usize,
    weights: DMatrix<f64>,
    irreducible: bool,
}

/// Serialization mirror: `{"n": N, "weights": [[row-major]]}`.
#[derive(Serialize, Deserialize)]
struct NetworkJson {
    n: usize,
    weights: Vec<Vec<f64>>,
}

impl WeightedNetwork {
    pub fn n_vertices(&self) -> usize {
        self.n
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn is_irreducible(&self) -> bool {
        self.irreducible
    }

    pub fn weight(&self, j: usize, k: usize) -> f64 {
        self.weights[(j, k)]
    }

    /// Transpose flattened row-major: entry `j*n + k` is `(W^T)[j][k] = w[k][j]`.
    /// This is the layout the simulation hot loop wants for computing `W^T z`.
    pub fn transpose_flat(&self) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n * n];
        for j in 0..n {
            for k in 0..n {
                out[j * n + k] = self.weights[(k, j)];
            }
        }
        out
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        let n = self.n;
        for j in 0..n {
            for k in (j + 1)..n {
                if (self.weights[(j, k)] - self.weights[(k, j)]).abs() > tol {
                    return false;
                }
            }
        }
        true
    }

    pub fn is_doubly_stochastic(&self, tol: f64) -> bool {
        (0..self.n).all(|j| (self.weights.row(j).sum() - 1.0).abs() <= tol)
    }

    pub fn to_json(&self) -> String {
        let rows = (0..self.n)
            .map(|j| (0..self.n).map(|k| self.weights[(j, k)]).collect())
            .collect();
        serde_json::to_string_pretty(&NetworkJson {
            n: self.n,
            weights: rows,
        })
        .expect("network serialization cannot fail")
    }

    /// Reads weights bit-for-bit: columns are validated against the usual
    /// tolerance but not renormalized, so emit -> read is the identity.
    pub fn from_json(s: &str) -> Result<Self, NetworkError> {
        let parsed: NetworkJson = serde_json::from_str(s)
            .map_err(|e| NetworkError::DimensionMismatch(format!("bad network JSON: {e}")))?;
        if parsed.weights.len() != parsed.n {
            return Err(NetworkError::DimensionMismatch(format!(
                "declared n={} but got {} rows",
                parsed.n,
                parsed.weights.len()
            )));
        }
        let n = parsed.n;
        for (j, r) in parsed.weights.iter().enumerate() {
            if r.len() != n {
                return Err(NetworkError::DimensionMismatch(format!(
                    "row {j} has length {}, expected {n}",
                    r.len()
                )));
            }
        }
        let w = DMatrix::from_fn(n, n, |j, k| parsed.weights[j][k]);
        validate_weights(&w)?;
        let irreducible = strongly_connected(&w);
        Ok(WeightedNetwork {
            n,
            weights: w,
            irreducible,
        })
    }
}

/// Validate a square nonnegative matrix with unit column sums and package it
/// as a network. Columns within tolerance of one are renormalized exactly so
/// downstream algebra sees `W^T 1 = 1` to machine precision. Irreducibility
/// is computed, not demanded: reducible matrices are legal simulation input.
pub fn build_network(weights: DMatrix<f64>) -> Result<WeightedNetwork, NetworkError> {
    validate_weights(&weights)?;
    let n = weights.nrows();
    let mut w = weights;
    for k in 0..n {
        let sum: f64 = (0..n).map(|j| w[(j, k)]).sum();
        for j in 0..n {
            w[(j, k)] /= sum;
        }
    }
    let irreducible = strongly_connected(&w);
    Ok(WeightedNetwork {
        n,
        weights: w,
        irreducible,
    })
}

/// Square, entrywise nonnegative and finite, columns summing to one within
/// [`COLUMN_SUM_TOL`].
fn validate_weights(weights: &DMatrix<f64>) -> Result<(), NetworkError> {
    let (rows, cols) = weights.shape();
    if rows != cols {
        return Err(NetworkError::NotSquare { rows, cols });
    }
    if rows == 0 {
        return Err(NetworkError::Empty);
    }
    let n = rows;
    for k in 0..n {
        for j in 0..n {
            let x = weights[(j, k)];
            if x < 0.0 || !x.is_finite() {
                return Err(NetworkError::NegativeWeight {
                    row: j,
                    col: k,
                    value: x,
                });
            }
        }
        let sum: f64 = (0..n).map(|j| weights[(j, k)]).sum();
        if (sum - 1.0).abs() > COLUMN_SUM_TOL {
            return Err(NetworkError::ColumnNotNormalized { col: k, sum });
        }
    }
    Ok(())
}

/// Row-major convenience wrapper over [`build_network`].
pub fn build_network_rows(rows: &[Vec<f64>]) -> Result<WeightedNetwork, NetworkError> {
    let n = rows.len();
    if n == 0 {
        return Err(NetworkError::Empty);
    }
    for (j, r) in rows.iter().enumerate() {
        if r.len() != n {
            return Err(NetworkError::DimensionMismatch(format!(
                "row {j} has length {}, expected {n}",
                r.len()
            )));
        }
    }
    build_network(DMatrix::from_fn(n, n, |j, k| rows[j][k]))
}

/// Strong connectivity of the digraph of strictly positive entries, checked
/// by forward and backward reachability from vertex 0. Weights only matter
/// through their support.
fn strongly_connected(w: &DMatrix<f64>) -> bool {
    let n = w.nrows();
    let reach = |transpose: bool| -> bool {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(j) = stack.pop() {
            for k in 0..n {
                let edge = if transpose { w[(k, j)] } else { w[(j, k)] };
                if edge > 0.0 && !seen[k] {
                    seen[k] = true;
                    count += 1;
                    stack.push(k);
                }
            }
        }
        count == n
    };
    reach(false) && reach(true)
}

/// Uniform interaction with self-reinforcement: `w[j][k] = alpha/N` plus
/// `1 - alpha` on the diagonal. Doubly stochastic; irreducible for any
/// alpha in (0, 1].
pub fn mean_field(n: usize, alpha: f64) -> Result<WeightedNetwork, NetworkError> {
    if n == 0 {
        return Err(NetworkError::NTooSmall { min: 1, got: n });
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(NetworkError::AlphaOutOfRange(alpha));
    }
    let off = alpha / n as f64;
    let w = DMatrix::from_fn(n, n, |j, k| if j == k { off + 1.0 - alpha } else { off });
    build_network(w)
}

/// Directed cycle: vertex j listens only to vertex j+1 (and vertex N to
/// vertex 1), i.e. `w[j][j+1] = 1`, `w[N][1] = 1`. A permutation matrix,
/// hence doubly stochastic and irreducible.
pub fn cycle(n: usize) -> Result<WeightedNetwork, NetworkError> {
    if n < 2 {
        return Err(NetworkError::NTooSmall { min: 2, got: n });
    }
    let mut w = DMatrix::zeros(n, n);
    for j in 0..n - 1 {
        w[(j, j + 1)] = 1.0;
    }
    w[(n - 1, 0)] = 1.0;
    build_network(w)
}

/// Every vertex gives weight p to vertex 1 and splits the rest evenly, so
/// `W = a_p 1^T` with `a_p = (p, (1-p)/(N-1), ...)`. Rank one, irreducible,
/// not doubly stochastic unless p = 1/N.
pub fn special_vertex(n: usize, p: f64) -> Result<WeightedNetwork, NetworkError> {
    if n < 2 {
        return Err(NetworkError::NTooSmall { min: 2, got: n });
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(NetworkError::POutOfRange(p));
    }
    let rest = (1.0 - p) / (n - 1) as f64;
    let w = DMatrix::from_fn(n, n, |j, _| if j == 0 { p } else { rest });
    build_network(w)
}

/// The influence vector of [`special_vertex`]: first entry p, the rest
/// `(1-p)/(N-1)`.
pub fn special_vertex_profile(n: usize, p: f64) -> Vec<f64> {
    let rest = (1.0 - p) / (n - 1) as f64;
    (0..n).map(|j| if j == 0 { p } else { rest }).collect()
}

/// Block description of a reducible network: `m` autonomous irreducible
/// leader blocks, an optional follower block that listens to them through
/// coupling blocks, assembled block-upper-triangular.
#[derive(Debug, Clone)]
pub struct BlockSpec {
    pub leader_blocks: Vec<DMatrix<f64>>,
    pub follower_block: Option<DMatrix<f64>>,
    /// One coupling block per leader, shape `n_j x n_f`. Required exactly
    /// when a follower block is present.
    pub coupling_blocks: Option<Vec<DMatrix<f64>>>,
}

/// Assemble the block-triangular matrix
/// `[[W_1, 0, .., W_1f], [0, W_2, .., W_2f], .., [0, .., W_f]]`
/// and validate it like any other network. The result is reducible whenever
/// there are two or more leaders or a follower block.
pub fn assemble_reducible(spec: &BlockSpec) -> Result<WeightedNetwork, NetworkError> {
    if spec.leader_blocks.is_empty() {
        return Err(NetworkError::Empty);
    }
    let mut sizes = Vec::new();
    for (i, b) in spec.leader_blocks.iter().enumerate() {
        if b.nrows() != b.ncols() {
            return Err(NetworkError::NotSquare {
                rows: b.nrows(),
                cols: b.ncols(),
            });
        }
        let leader = build_network(b.clone())?;
        if !leader.is_irreducible() {
            return Err(NetworkError::LeaderNotIrreducible(i));
        }
        sizes.push(b.nrows());
    }
    let n_f = spec.follower_block.as_ref().map_or(0, |f| f.nrows());
    if let Some(f) = &spec.follower_block {
        if f.nrows() != f.ncols() {
            return Err(NetworkError::NotSquare {
                rows: f.nrows(),
                cols: f.ncols(),
            });
        }
        let couplings = spec.coupling_blocks.as_ref().ok_or_else(|| {
            NetworkError::DimensionMismatch("follower block given without coupling blocks".into())
        })?;
        if couplings.len() != spec.leader_blocks.len() {
            return Err(NetworkError::DimensionMismatch(format!(
                "{} coupling blocks for {} leader blocks",
                couplings.len(),
                spec.leader_blocks.len()
            )));
        }
        for (i, c) in couplings.iter().enumerate() {
            if c.nrows() != sizes[i] || c.ncols() != n_f {
                return Err(NetworkError::DimensionMismatch(format!(
                    "coupling block {i} is {}x{}, expected {}x{}",
                    c.nrows(),
                    c.ncols(),
                    sizes[i],
                    n_f
                )));
            }
        }
        // The follower keeps some attention inside its own block, so its
        // spectral radius must stay below one for the leaders to dominate.
        let max_re = f
            .complex_eigenvalues()
            .iter()
            .map(|l| l.re)
            .fold(f64::NEG_INFINITY, f64::max);
        if max_re >= 1.0 - 1e-12 {
            return Err(NetworkError::FollowerSpectralRadius(max_re));
        }
    } else if spec
        .coupling_blocks
        .as_ref()
        .is_some_and(|c| !c.is_empty())
    {
        return Err(NetworkError::DimensionMismatch(
            "coupling blocks given without a follower block".into(),
        ));
    }

    let n: usize = sizes.iter().sum::<usize>() + n_f;
    let mut w = DMatrix::zeros(n, n);
    let mut off = 0;
    for (i, b) in spec.leader_blocks.iter().enumerate() {
        for r in 0..sizes[i] {
            for c in 0..sizes[i] {
                w[(off + r, off + c)] = b[(r, c)];
            }
        }
        off += sizes[i];
    }
    if let Some(f) = &spec.follower_block {
        let base = n - n_f;
        let couplings = spec.coupling_blocks.as_ref().unwrap();
        let mut row0 = 0;
        for (i, c) in couplings.iter().enumerate() {
            for r in 0..sizes[i] {
                for col in 0..n_f {
                    w[(row0 + r, base + col)] = c[(r, col)];
                }
            }
            row0 += sizes[i];
        }
        for r in 0..n_f {
            for c in 0..n_f {
                w[(base + r, base + c)] = f[(r, c)];
            }
        }
    }
    build_network(w)
}
