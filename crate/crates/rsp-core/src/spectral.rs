//! Biorthogonal eigenstructure of the weighted adjacency matrix and the
//! regime classification that selects which limit theorem applies.
//!
//! Conventions, fixed once and used everywhere downstream:
//! - `u_j` are left eigenvectors of W, i.e. `W^T u_j = lambda_j u_j`, with
//!   Hermitian norm one; within a repeated eigenspace they are mutually
//!   orthogonal; `u_1 = N^{-1/2} 1` exactly.
//! - `v_j` are right eigenvectors of W scaled so that the *bilinear* pairing
//!   holds: `u_j^T v_j = 1`, `u_h^T v_j = 0` (plain transpose, no
//!   conjugation). They are obtained as the columns of `(U~^T)^{-1}`,
//!   which enforces the pairing to machine precision.
//! - Eigenvalues are ordered with 1 first, the rest by descending real
//!   part; complex conjugate pairs sit adjacent with the +Im member first,
//!   and the paired eigenvectors are exact conjugates of each other, which
//!   is what makes the real reconstructions below real.
//! - `v_1` is real with strictly positive entries and `N^{-1/2} 1^T v1 = 1`.

use crate::network::WeightedNetwork;
use nalgebra::linalg::Schur;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Grouping tolerance for treating computed eigenvalues as one eigenspace.
pub const CLUSTER_TOL: f64 = 1e-8;
/// Condition-number ceiling on the eigenvector matrix before the input is
/// declared (numerically) non-diagonalizable.
pub const COND_LIMIT: f64 = 1e12;
/// Default absolute tolerance when testing the critical-line equalities of
/// the regime classification.
pub const REGIME_TOL_DEFAULT: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("network is not irreducible; spectral regime analysis needs strong connectivity")]
    NotIrreducible,
    #[error("matrix is numerically non-diagonalizable: {0}")]
    NotDiagonalizable(String),
    #[error("biorthogonalization failed: {0}")]
    BiorthogonalizationFailed(String),
    #[error("gamma must lie in (1/2, 1], got {0}")]
    GammaOutOfRange(f64),
    #[error("c must be positive, got {0}")]
    CNotPositive(f64),
    #[error("tolerance must be positive, got {0}")]
    TolNotPositive(f64),
    #[error(
        "uncovered regime: gamma = 1 with Re(lambda*) = {re_lambda_star} above 1 - 1/(2c) = {threshold}"
    )]
    UncoveredRegime { re_lambda_star: f64, threshold: f64 },
}

/// Full complex eigenstructure of a network, in the conventions above.
#[derive(Debug, Clone)]
pub struct SpectralData {
    n: usize,
    eigenvalues: Vec<Complex64>,
    /// N x N, column j is u_{j+1}; column 0 is exactly N^{-1/2} 1.
    u_full: DMatrix<Complex64>,
    /// N x N, column j is v_{j+1}; satisfies u_full^T v_full = I.
    v_full: DMatrix<Complex64>,
    v1: DVector<f64>,
    lambda_star: Option<Complex64>,
    cond: f64,
    /// Largest imaginary residue seen across the real reconstructions.
    imag_residue: f64,
}

impl SpectralData {
    pub fn n_vertices(&self) -> usize {
        self.n
    }

    pub fn eigenvalues(&self) -> &[Complex64] {
        &self.eigenvalues
    }

    /// Eigenvalues with index >= 2, i.e. the diagonal of D.
    pub fn diag_d(&self) -> &[Complex64] {
        &self.eigenvalues[1..]
    }

    pub fn u(&self, j: usize) -> DVector<Complex64> {
        DVector::from_column_slice(self.u_full.column(j).as_slice())
    }

    pub fn v(&self, j: usize) -> DVector<Complex64> {
        DVector::from_column_slice(self.v_full.column(j).as_slice())
    }

    /// N x (N-1) block of left eigenvectors u_2..u_N.
    pub fn u_block(&self) -> DMatrix<Complex64> {
        self.u_full.columns(1, self.n - 1).into_owned()
    }

    /// N x (N-1) block of paired right eigenvectors v_2..v_N.
    pub fn v_block(&self) -> DMatrix<Complex64> {
        self.v_full.columns(1, self.n - 1).into_owned()
    }

    pub fn v1(&self) -> &DVector<f64> {
        &self.v1
    }

    pub fn lambda_star(&self) -> Option<Complex64> {
        self.lambda_star
    }

    pub fn condition_number(&self) -> f64 {
        self.cond
    }

    pub fn imag_residue(&self) -> f64 {
        self.imag_residue
    }

    /// `||v1||^2`, which interpolates between 1 (doubly stochastic) and N.
    pub fn v1_norm_sq(&self) -> f64 {
        self.v1.norm_squared()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&SpectralJson::from(self))
            .expect("spectral serialization cannot fail")
    }

    pub fn from_json(s: &str) -> Result<Self, SpectralError> {
        let parsed: SpectralJson = serde_json::from_str(s)
            .map_err(|e| SpectralError::BiorthogonalizationFailed(format!("bad JSON: {e}")))?;
        parsed.try_into()
    }
}

#[derive(Serialize, Deserialize)]
struct ComplexJson {
    re: f64,
    im: f64,
}

impl From<Complex64> for ComplexJson {
    fn from(z: Complex64) -> Self {
        ComplexJson { re: z.re, im: z.im }
    }
}

impl From<&ComplexJson> for Complex64 {
    fn from(z: &ComplexJson) -> Self {
        Complex64::new(z.re, z.im)
    }
}

#[derive(Serialize, Deserialize)]
struct SpectralJson {
    n: usize,
    eigenvalues: Vec<ComplexJson>,
    /// Row-major N x N left eigenvector matrix.
    left_vectors: Vec<Vec<ComplexJson>>,
    /// Row-major N x N right eigenvector matrix.
    right_vectors: Vec<Vec<ComplexJson>>,
    v1: Vec<f64>,
    lambda_star: Option<ComplexJson>,
    condition_number: f64,
    imag_residue: f64,
}

impl From<&SpectralData> for SpectralJson {
    fn from(s: &SpectralData) -> Self {
        let mat = |m: &DMatrix<Complex64>| {
            (0..s.n)
                .map(|r| (0..s.n).map(|c| ComplexJson::from(m[(r, c)])).collect())
                .collect()
        };
        SpectralJson {
            n: s.n,
            eigenvalues: s.eigenvalues.iter().copied().map(ComplexJson::from).collect(),
            left_vectors: mat(&s.u_full),
            right_vectors: mat(&s.v_full),
            v1: s.v1.iter().copied().collect(),
            lambda_star: s.lambda_star.map(ComplexJson::from),
            condition_number: s.cond,
            imag_residue: s.imag_residue,
        }
    }
}

impl TryFrom<SpectralJson> for SpectralData {
    type Error = SpectralError;

    fn try_from(j: SpectralJson) -> Result<Self, SpectralError> {
        let n = j.n;
        let bad = |m: &str| SpectralError::BiorthogonalizationFailed(m.to_string());
        if j.eigenvalues.len() != n
            || j.left_vectors.len() != n
            || j.right_vectors.len() != n
            || j.v1.len() != n
        {
            return Err(bad("inconsistent dimensions in spectral JSON"));
        }
        let mat = |rows: &[Vec<ComplexJson>]| -> Result<DMatrix<Complex64>, SpectralError> {
            for r in rows {
                if r.len() != n {
                    return Err(bad("ragged matrix in spectral JSON"));
                }
            }
            Ok(DMatrix::from_fn(n, n, |r, c| Complex64::from(&rows[r][c])))
        };
        Ok(SpectralData {
            n,
            eigenvalues: j.eigenvalues.iter().map(Complex64::from).collect(),
            u_full: mat(&j.left_vectors)?,
            v_full: mat(&j.right_vectors)?,
            v1: DVector::from_vec(j.v1),
            lambda_star: j.lambda_star.as_ref().map(Complex64::from),
            cond: j.condition_number,
            imag_residue: j.imag_residue,
        })
    }
}

/// Which limit theorem applies for a given reinforcement decay.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegimeCase {
    /// 1/2 < gamma < 1.
    A,
    /// gamma = 1 and Re(lambda*) < 1 - 1/(2c).
    B,
    /// gamma = 1 with Re(lambda*) on the critical line 1 - 1/(2c).
    C,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegimeClassification {
    pub gamma: f64,
    pub c: f64,
    pub case: RegimeCase,
    /// Indices (into the ordered eigenvalue list, so >= 1) of eigenvalues on
    /// the critical line; empty unless gamma = 1.
    pub a_star_set: Vec<usize>,
    /// Cardinality of the critical set, counted with multiplicity.
    pub m_star: usize,
    pub tol: f64,
}

/// Grouped eigenvalues: a representative value, member eigenvector columns.
struct Cluster {
    value: Complex64,
    mult: usize,
}

/// Eigenvalues via bounded QR iteration. Structured matrices (notably
/// permutation-like ones such as the cycle) can stall the plain Francis
/// iteration indefinitely, so on non-convergence the matrix is rotated by a
/// fixed dense orthogonal similarity, which preserves the spectrum exactly
/// and breaks the stall.
fn eigenvalues_bounded(w: &DMatrix<f64>) -> Result<Vec<Complex64>, SpectralError> {
    let n = w.nrows();
    let max_iter = 100 * n.max(10);
    if let Some(schur) = Schur::try_new(w.clone(), f64::EPSILON, max_iter) {
        return Ok(schur.complex_eigenvalues().iter().copied().collect());
    }
    let q = deterministic_orthogonal(n);
    let rotated = q.transpose() * w * &q;
    if let Some(schur) = Schur::try_new(rotated, f64::EPSILON, 10 * max_iter) {
        return Ok(schur.complex_eigenvalues().iter().copied().collect());
    }
    Err(SpectralError::NotDiagonalizable(
        "eigenvalue iteration did not converge".into(),
    ))
}

/// Fixed pseudo-random orthogonal matrix (Q factor of a seeded dense
/// matrix); the same for every call, so results stay deterministic.
fn deterministic_orthogonal(n: usize) -> DMatrix<f64> {
    let mut state = 0x243F_6A88_85A3_08D3_u64;
    let m = DMatrix::from_fn(n, n, |_, _| {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        // upper bits, mapped to [-1, 1)
        ((state >> 11) as f64) / (1u64 << 52) as f64 * 2.0 - 1.0
    });
    m.qr().q()
}

/// Compute the full biorthogonal eigenstructure of an irreducible network.
pub fn decompose(net: &WeightedNetwork) -> Result<SpectralData, SpectralError> {
    if !net.is_irreducible() {
        return Err(SpectralError::NotIrreducible);
    }
    let n = net.n_vertices();
    let w = net.weights();

    if n == 1 {
        let one = Complex64::new(1.0, 0.0);
        return Ok(SpectralData {
            n: 1,
            eigenvalues: vec![one],
            u_full: DMatrix::from_element(1, 1, one),
            v_full: DMatrix::from_element(1, 1, one),
            v1: DVector::from_element(1, 1.0),
            lambda_star: None,
            cond: 1.0,
            imag_residue: 0.0,
        });
    }

    // Eigenvalues of W (same as of W^T), then grouped into eigenspaces.
    let raw = eigenvalues_bounded(w)?;
    let mut clusters: Vec<Cluster> = Vec::new();
    for lam in raw {
        match clusters
            .iter_mut()
            .find(|c| (c.value - lam).norm() < CLUSTER_TOL)
        {
            Some(c) => {
                // running mean keeps the representative centered
                let m = c.mult as f64;
                c.value = (c.value * m + lam) / (m + 1.0);
                c.mult += 1;
            }
            None => clusters.push(Cluster { value: lam, mult: 1 }),
        }
    }

    // Locate the Perron eigenvalue 1 (simple for irreducible input).
    let perron_idx = clusters
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| {
            (a.value - 1.0)
                .norm()
                .partial_cmp(&(b.value - 1.0).norm())
                .unwrap()
        })
        .map(|(i, _)| i)
        .expect("at least one eigenvalue");
    if (clusters[perron_idx].value - 1.0).norm() > CLUSTER_TOL * 10.0 {
        return Err(SpectralError::BiorthogonalizationFailed(format!(
            "Perron eigenvalue not found near 1; closest is {}",
            clusters[perron_idx].value
        )));
    }
    if clusters[perron_idx].mult != 1 {
        return Err(SpectralError::BiorthogonalizationFailed(
            "eigenvalue 1 is not simple, contradicting irreducibility".into(),
        ));
    }
    let perron = clusters.remove(perron_idx);
    drop(perron);

    for c in &clusters {
        if c.value.re >= 1.0 - 1e-10 {
            return Err(SpectralError::BiorthogonalizationFailed(format!(
                "secondary eigenvalue {} has real part >= 1",
                c.value
            )));
        }
    }

    // Canonicalize: real clusters get Im = 0; complex ones are matched into
    // conjugate pairs (the spectrum of a real matrix is conjugate
    // symmetric, so failure to pair is a numerical breakdown).
    let mut real_groups: Vec<Cluster> = Vec::new();
    let mut pair_groups: Vec<Cluster> = Vec::new(); // +Im representative
    let mut pending: Vec<Cluster> = Vec::new();
    for c in clusters {
        if c.value.im.abs() < CLUSTER_TOL {
            real_groups.push(Cluster {
                value: Complex64::new(c.value.re, 0.0),
                mult: c.mult,
            });
        } else {
            pending.push(c);
        }
    }
    while let Some(c) = pending.pop() {
        let partner = pending
            .iter()
            .position(|d| (d.value - c.value.conj()).norm() < CLUSTER_TOL * 10.0);
        match partner {
            Some(i) => {
                let d = pending.remove(i);
                if d.mult != c.mult {
                    return Err(SpectralError::BiorthogonalizationFailed(
                        "conjugate eigenspaces have different multiplicities".into(),
                    ));
                }
                let plus = if c.value.im > 0.0 { c } else { d };
                pair_groups.push(plus);
            }
            None => {
                return Err(SpectralError::BiorthogonalizationFailed(format!(
                    "complex eigenvalue {} has no conjugate partner",
                    c.value
                )));
            }
        }
    }

    // Order: descending real part, ties by descending imaginary part of the
    // representative; a pair contributes (+Im, -Im) adjacently.
    enum Group {
        Real(Cluster),
        Pair(Cluster),
    }
    let mut groups: Vec<Group> = real_groups
        .into_iter()
        .map(Group::Real)
        .chain(pair_groups.into_iter().map(Group::Pair))
        .collect();
    groups.sort_by(|a, b| {
        let key = |g: &Group| match g {
            Group::Real(c) => (c.value.re, 0.0),
            Group::Pair(c) => (c.value.re, c.value.im),
        };
        let (ra, ia) = key(a);
        let (rb, ib) = key(b);
        rb.partial_cmp(&ra).unwrap().then(ib.partial_cmp(&ia).unwrap())
    });

    // Null-space bases per group via SVD of (W^T - lambda I). Real
    // eigenvalues go through the real SVD so their eigenvectors come out
    // real (complex SVD would attach arbitrary phases, which the
    // symmetric-network identities do not tolerate).
    let at_real = w.transpose();
    let at = at_real.map(|x| Complex64::new(x, 0.0));
    let scale = w.amax().max(1.0);
    let mut eigenvalues: Vec<Complex64> = Vec::with_capacity(n);
    let mut columns: Vec<DVector<Complex64>> = Vec::with_capacity(n);

    eigenvalues.push(Complex64::new(1.0, 0.0));
    let inv_sqrt_n = Complex64::new(1.0 / (n as f64).sqrt(), 0.0);
    columns.push(DVector::from_element(n, inv_sqrt_n));

    for g in &groups {
        let (cluster, paired) = match g {
            Group::Real(c) => (c, false),
            Group::Pair(c) => (c, true),
        };
        let basis = if paired {
            eigenspace_basis_complex(&at, cluster.value, cluster.mult, scale)?
        } else {
            eigenspace_basis_real(&at_real, cluster.value.re, cluster.mult, scale)?
        };
        if paired {
            for b in &basis {
                eigenvalues.push(cluster.value);
                columns.push(b.clone());
            }
            for b in &basis {
                eigenvalues.push(cluster.value.conj());
                columns.push(b.map(|z| z.conj()));
            }
        } else {
            for b in basis {
                eigenvalues.push(cluster.value);
                columns.push(b);
            }
        }
    }
    if eigenvalues.len() != n {
        return Err(SpectralError::NotDiagonalizable(format!(
            "found {} eigenvector directions for dimension {}",
            eigenvalues.len(),
            n
        )));
    }

    let u_full = DMatrix::from_columns(&columns);

    // Conditioning of the eigenbasis decides diagonalizability in practice.
    let svd = u_full
        .clone()
        .try_svd(false, false, f64::EPSILON, 10_000)
        .ok_or_else(|| {
            SpectralError::NotDiagonalizable("SVD of the eigenvector matrix stalled".into())
        })?;
    let smax = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    let smin = svd
        .singular_values
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !cond.is_finite() || cond > COND_LIMIT {
        return Err(SpectralError::NotDiagonalizable(format!(
            "eigenvector matrix condition number {cond:.3e} exceeds {COND_LIMIT:.0e}"
        )));
    }

    // Bilinear pairing: columns of (U~^T)^{-1} are the right eigenvectors
    // scaled so u_j^T v_j = 1 and u_h^T v_j = 0.
    let v_full = u_full
        .transpose()
        .try_inverse()
        .ok_or_else(|| {
            SpectralError::BiorthogonalizationFailed("eigenvector matrix is singular".into())
        })?;

    let mut imag_residue = 0.0_f64;
    for x in v_full.column(0).iter() {
        imag_residue = imag_residue.max(x.im.abs());
    }
    if imag_residue > 1e-9 {
        return Err(SpectralError::BiorthogonalizationFailed(format!(
            "v1 has imaginary residue {imag_residue:.3e}"
        )));
    }
    let v1 = DVector::from_iterator(n, v_full.column(0).iter().map(|z| z.re));
    if v1.iter().any(|&x| x < -1e-10) {
        return Err(SpectralError::BiorthogonalizationFailed(format!(
            "v1 is not positive (min entry {:.3e}), contradicting Perron-Frobenius",
            v1.min()
        )));
    }

    let lambda_star = Some(eigenvalues[1]);

    let mut spec = SpectralData {
        n,
        eigenvalues,
        u_full,
        v_full,
        v1,
        lambda_star,
        cond,
        imag_residue,
    };

    // Reconstruction audit: W^T must come back from the eigenstructure and
    // the rank-one + complementary projections must be essentially real.
    let (recon, resid) = reconstruct(&spec);
    spec.imag_residue = spec.imag_residue.max(resid);
    let mut err = 0.0_f64;
    for r in 0..n {
        for c in 0..n {
            err = err.max((recon[(r, c)] - w[(c, r)]).abs());
        }
    }
    if err > 1e-8 {
        return Err(SpectralError::NotDiagonalizable(format!(
            "reconstruction residual {err:.3e} exceeds 1e-8"
        )));
    }
    if spec.imag_residue > 1e-9 {
        return Err(SpectralError::BiorthogonalizationFailed(format!(
            "imaginary residue {:.3e} exceeds 1e-9",
            spec.imag_residue
        )));
    }

    Ok(spec)
}

/// Indices of the `mult` smallest singular values, checked to be separated
/// from the rest (a clean numerical null space of the expected dimension).
fn null_space_indices(
    singular_values: &[f64],
    lambda: Complex64,
    mult: usize,
    scale: f64,
) -> Result<Vec<usize>, SpectralError> {
    let n = singular_values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| singular_values[a].partial_cmp(&singular_values[b]).unwrap());
    let null_tol = 1e-7 * scale;
    if singular_values[order[mult - 1]] > null_tol {
        return Err(SpectralError::NotDiagonalizable(format!(
            "eigenvalue {lambda} should have geometric multiplicity {mult}, but singular value {} is not negligible",
            singular_values[order[mult - 1]]
        )));
    }
    if mult < n && singular_values[order[mult]] <= null_tol {
        return Err(SpectralError::NotDiagonalizable(format!(
            "eigenvalue {lambda}: ambiguous null space around multiplicity {mult}"
        )));
    }
    order.truncate(mult);
    Ok(order)
}

/// Orthonormal basis of the eigenspace for a complex eigenvalue, from the
/// right singular vectors of `at - lambda I` with the smallest singular
/// values.
fn eigenspace_basis_complex(
    at: &DMatrix<Complex64>,
    lambda: Complex64,
    mult: usize,
    scale: f64,
) -> Result<Vec<DVector<Complex64>>, SpectralError> {
    let n = at.nrows();
    let mut shifted = at.clone();
    for i in 0..n {
        shifted[(i, i)] -= lambda;
    }
    let svd = shifted
        .try_svd(false, true, f64::EPSILON, 10_000)
        .ok_or_else(|| SpectralError::NotDiagonalizable("eigenspace SVD stalled".into()))?;
    let v_t = svd.v_t.expect("requested right singular vectors");
    let svals: Vec<f64> = svd.singular_values.iter().copied().collect();
    let picked = null_space_indices(&svals, lambda, mult, scale)?;
    Ok(picked
        .into_iter()
        .map(|i| {
            // rows of v_t are conjugated right singular vectors
            DVector::from_iterator(n, v_t.row(i).iter().map(|z| z.conj()))
        })
        .collect())
}

/// Real orthonormal eigenspace basis for a real eigenvalue.
fn eigenspace_basis_real(
    at: &DMatrix<f64>,
    lambda: f64,
    mult: usize,
    scale: f64,
) -> Result<Vec<DVector<Complex64>>, SpectralError> {
    let n = at.nrows();
    let mut shifted = at.clone();
    for i in 0..n {
        shifted[(i, i)] -= lambda;
    }
    let svd = shifted
        .try_svd(false, true, f64::EPSILON, 10_000)
        .ok_or_else(|| SpectralError::NotDiagonalizable("eigenspace SVD stalled".into()))?;
    let v_t = svd.v_t.expect("requested right singular vectors");
    let svals: Vec<f64> = svd.singular_values.iter().copied().collect();
    let picked = null_space_indices(&svals, Complex64::new(lambda, 0.0), mult, scale)?;
    Ok(picked
        .into_iter()
        .map(|i| DVector::from_iterator(n, v_t.row(i).iter().map(|&x| Complex64::new(x, 0.0))))
        .collect())
}

/// Real part of `u1 v1^T + U D V^T` (which reconstructs `W^T`) plus the
/// largest imaginary residue dropped in taking the real part.
pub fn reconstruct(spec: &SpectralData) -> (DMatrix<f64>, f64) {
    let n = spec.n;
    let mut acc = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for j in 0..n {
        let lam = spec.eigenvalues[j];
        let u = spec.u_full.column(j);
        let v = spec.v_full.column(j);
        for r in 0..n {
            for c in 0..n {
                acc[(r, c)] += lam * u[r] * v[c];
            }
        }
    }
    let mut resid = 0.0_f64;
    let real = DMatrix::from_fn(n, n, |r, c| {
        resid = resid.max(acc[(r, c)].im.abs());
        acc[(r, c)].re
    });
    (real, resid)
}

/// Decide which covariance formulas apply for reinforcement decay
/// `r_n ~ c / n^gamma`.
pub fn classify_regime(
    spec: &SpectralData,
    gamma: f64,
    c: f64,
    tol: f64,
) -> Result<RegimeClassification, SpectralError> {
    if !(gamma > 0.5 && gamma <= 1.0) {
        return Err(SpectralError::GammaOutOfRange(gamma));
    }
    if !(c > 0.0) {
        return Err(SpectralError::CNotPositive(c));
    }
    if !(tol > 0.0) {
        return Err(SpectralError::TolNotPositive(tol));
    }
    if gamma < 1.0 {
        return Ok(RegimeClassification {
            gamma,
            c,
            case: RegimeCase::A,
            a_star_set: Vec::new(),
            m_star: 0,
            tol,
        });
    }
    let threshold = 1.0 - 0.5 / c;
    let a_star_set: Vec<usize> = (1..spec.n)
        .filter(|&j| (spec.eigenvalues[j].re - threshold).abs() <= tol)
        .collect();
    let case = match spec.lambda_star {
        None => RegimeCase::B,
        Some(ls) => {
            if (ls.re - threshold).abs() <= tol {
                RegimeCase::C
            } else if ls.re < threshold {
                RegimeCase::B
            } else {
                return Err(SpectralError::UncoveredRegime {
                    re_lambda_star: ls.re,
                    threshold,
                });
            }
        }
    };
    let a_star_set = if case == RegimeCase::C { a_star_set } else { Vec::new() };
    let m_star = a_star_set.len();
    Ok(RegimeClassification {
        gamma,
        c,
        case,
        a_star_set,
        m_star,
        tol,
    })
}
