//! Asymptotic variances and covariances of the limit theorems: the scalar
//! variance of the Perron component, the covariance matrix of the
//! complementary component in each regime, closed forms for the worked
//! network families, and the deterministic product-sum limits used to
//! cross-check the covariance kernels.

use crate::spectral::{RegimeCase, RegimeClassification, SpectralData};
use nalgebra::linalg::SymmetricEigen;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative threshold deciding which eigenvalues of a covariance matrix
/// count toward its numerical rank.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum AsymptoticsError {
    #[error("gamma must lie in (1/2, 1], got {0}")]
    GammaOutOfRange(f64),
    #[error("regime kernel denominator {denom:.3e} is within 1e-9 of zero; parameters sit on the regime boundary")]
    RegimeBoundary { denom: f64 },
    #[error("covariance has imaginary residue {0:.3e} beyond 1e-9; conjugate-pair structure is broken")]
    ImaginaryResidue(f64),
    #[error("covariance matrix is not positive semi-definite: min eigenvalue {min:.3e} vs max {max:.3e}")]
    NotPositiveSemiDefinite { min: f64, max: f64 },
    #[error("pairwise synchronization variance needs two distinct vertices, got {0} twice")]
    SameVertex(usize),
    #[error("vertex index {index} out of range for {n} vertices")]
    VertexOutOfRange { index: usize, n: usize },
    #[error("unsupported closed-form example: {0}")]
    UnsupportedExample(String),
    #[error("domain error: {0}")]
    DomainError(String),
    #[error("eigenvalue iteration stalled while ranking a covariance matrix")]
    EigenStalled,
}

/// Everything the limit theorems say about second moments, bundled.
#[derive(Debug, Clone)]
pub struct CovarianceReport {
    pub regime: RegimeClassification,
    /// Asymptotic variance of the Perron component (before the state
    /// factor Z~(1-Z~)).
    pub sigma_tilde_sq: f64,
    /// sigma_tilde_sq * 11^T: covariance of the synchronized limit vector.
    pub sigma_tilde: DMatrix<f64>,
    /// Covariance of the complementary component.
    pub sigma_hat: DMatrix<f64>,
    /// Eigenvalues of sigma_hat, descending.
    pub sigma_hat_eigenvalues: Vec<f64>,
    pub rank_hat: usize,
    /// N-1 outside the critical case, m* on it.
    pub rank_expected: usize,
    /// pairwise[j][k] = sigma_hat[j][j] + sigma_hat[k][k] - 2 sigma_hat[j][k].
    pub pairwise: DMatrix<f64>,
    /// Vertices whose critical-case diagonal vanishes (no eigenvector mass
    /// on the critical eigenvalues); empty outside the critical case.
    pub flat_vertices: Vec<usize>,
}

impl CovarianceReport {
    pub fn rank_matches(&self) -> bool {
        self.rank_hat == self.rank_expected
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&CovarianceJson::from(self))
            .expect("covariance serialization cannot fail")
    }

    pub fn from_json(s: &str) -> Result<Self, AsymptoticsError> {
        let parsed: CovarianceJson = serde_json::from_str(s)
            .map_err(|e| AsymptoticsError::DomainError(format!("bad JSON: {e}")))?;
        parsed.try_into()
    }
}

#[derive(Serialize, Deserialize)]
struct CovarianceJson {
    regime: RegimeClassification,
    sigma_tilde_sq: f64,
    sigma_tilde: Vec<Vec<f64>>,
    sigma_hat: Vec<Vec<f64>>,
    sigma_hat_eigenvalues: Vec<f64>,
    rank_hat: usize,
    rank_expected: usize,
    pairwise: Vec<Vec<f64>>,
    flat_vertices: Vec<usize>,
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| m[(r, c)]).collect())
        .collect()
}

fn rows_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, AsymptoticsError> {
    let n = rows.len();
    for r in rows {
        if r.len() != n {
            return Err(AsymptoticsError::DomainError(
                "ragged matrix in covariance JSON".into(),
            ));
        }
    }
    Ok(DMatrix::from_fn(n, n, |r, c| rows[r][c]))
}

impl From<&CovarianceReport> for CovarianceJson {
    fn from(r: &CovarianceReport) -> Self {
        CovarianceJson {
            regime: r.regime.clone(),
            sigma_tilde_sq: r.sigma_tilde_sq,
            sigma_tilde: matrix_rows(&r.sigma_tilde),
            sigma_hat: matrix_rows(&r.sigma_hat),
            sigma_hat_eigenvalues: r.sigma_hat_eigenvalues.clone(),
            rank_hat: r.rank_hat,
            rank_expected: r.rank_expected,
            pairwise: matrix_rows(&r.pairwise),
            flat_vertices: r.flat_vertices.clone(),
        }
    }
}

impl TryFrom<CovarianceJson> for CovarianceReport {
    type Error = AsymptoticsError;

    fn try_from(j: CovarianceJson) -> Result<Self, AsymptoticsError> {
        Ok(CovarianceReport {
            regime: j.regime,
            sigma_tilde_sq: j.sigma_tilde_sq,
            sigma_tilde: rows_matrix(&j.sigma_tilde)?,
            sigma_hat: rows_matrix(&j.sigma_hat)?,
            sigma_hat_eigenvalues: j.sigma_hat_eigenvalues,
            rank_hat: j.rank_hat,
            rank_expected: j.rank_expected,
            pairwise: rows_matrix(&j.pairwise)?,
            flat_vertices: j.flat_vertices,
        })
    }
}

/// c^2 ||v1||^2 / (N (2 gamma - 1)): the variance scale of the Perron
/// component, common to all regimes.
pub fn sigma_tilde_sq(spec: &SpectralData, gamma: f64, c: f64) -> Result<f64, AsymptoticsError> {
    if !(gamma > 0.5 && gamma <= 1.0) {
        return Err(AsymptoticsError::GammaOutOfRange(gamma));
    }
    if !(c > 0.0) {
        return Err(AsymptoticsError::DomainError(format!(
            "c must be positive, got {c}"
        )));
    }
    let n = spec.n_vertices() as f64;
    Ok(c * c * spec.v1_norm_sq() / (n * (2.0 * gamma - 1.0)))
}

/// Scalar kernel applied to an eigenvalue pair sum `s = lambda_h + lambda_j`.
fn kernel(regime: &RegimeClassification, s: Complex64) -> Result<Complex64, AsymptoticsError> {
    let c = regime.c;
    match regime.case {
        RegimeCase::A => {
            let denom = Complex64::new(2.0, 0.0) - s;
            Ok(Complex64::new(c, 0.0) / denom)
        }
        RegimeCase::B => {
            let denom = Complex64::new(2.0 * c - 1.0, 0.0) - s * c;
            if denom.norm() < 1e-9 {
                return Err(AsymptoticsError::RegimeBoundary { denom: denom.norm() });
            }
            Ok(Complex64::new(c * c, 0.0) / denom)
        }
        RegimeCase::C => {
            // nonzero only where the pair sits exactly on the critical sum
            let target = 2.0 - 1.0 / c;
            let on_line = (s.re - target).abs() <= regime.tol && s.im.abs() <= regime.tol;
            Ok(if on_line {
                Complex64::new(c * c, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            })
        }
    }
}

/// Covariance of the complementary component, built from explicit
/// eigenstructure parts. `eigenvalues`, `u`, `v` exclude the Perron
/// direction (they are the diagonal of D and the N x (N-1) blocks).
pub fn sigma_hat_from_parts(
    gap_eigenvalues: &[Complex64],
    u: &DMatrix<Complex64>,
    v: &DMatrix<Complex64>,
    regime: &RegimeClassification,
) -> Result<(DMatrix<f64>, usize), AsymptoticsError> {
    let n = u.nrows();
    let m = gap_eigenvalues.len();
    // bilinear Gram matrix of the right eigenvectors
    let vtv = v.transpose() * v;
    let mut s_hat = DMatrix::from_element(m, m, Complex64::new(0.0, 0.0));
    for h in 0..m {
        for j in 0..m {
            let k = kernel(regime, gap_eigenvalues[h] + gap_eigenvalues[j])?;
            s_hat[(h, j)] = k * vtv[(h, j)];
        }
    }
    let full = u * s_hat * u.transpose();
    let mut imag = 0.0_f64;
    for z in full.iter() {
        imag = imag.max(z.im.abs());
    }
    if imag > 1e-9 {
        return Err(AsymptoticsError::ImaginaryResidue(imag));
    }
    // symmetrize away the last-ulp asymmetry so spectral routines downstream
    // see an exactly symmetric matrix
    let real = DMatrix::from_fn(n, n, |r, c| 0.5 * (full[(r, c)].re + full[(c, r)].re));
    let rank = matrix_rank_psd(&real)?;
    Ok((real, rank))
}

/// Covariance of the complementary component for the given regime, with its
/// numerical rank.
pub fn sigma_hat(
    spec: &SpectralData,
    regime: &RegimeClassification,
) -> Result<(DMatrix<f64>, usize), AsymptoticsError> {
    sigma_hat_from_parts(spec.diag_d(), &spec.u_block(), &spec.v_block(), regime)
}

/// Diagonal-kernel shortcut valid when the network is symmetric (the right
/// eigenvectors are then orthonormal, so the bilinear Gram matrix is the
/// identity). Callers are responsible for the symmetry of the source
/// network; the general path and this one agree in that case.
pub fn sigma_hat_symmetric(
    spec: &SpectralData,
    regime: &RegimeClassification,
) -> Result<(DMatrix<f64>, usize), AsymptoticsError> {
    let n = spec.n_vertices();
    let u = spec.u_block();
    let m = n - 1;
    let mut s_hat = DMatrix::from_element(m, m, Complex64::new(0.0, 0.0));
    for j in 0..m {
        s_hat[(j, j)] = kernel(regime, spec.diag_d()[j] * 2.0)?;
    }
    let full = &u * s_hat * u.transpose();
    let mut imag = 0.0_f64;
    for z in full.iter() {
        imag = imag.max(z.im.abs());
    }
    if imag > 1e-9 {
        return Err(AsymptoticsError::ImaginaryResidue(imag));
    }
    let real = DMatrix::from_fn(n, n, |r, c| 0.5 * (full[(r, c)].re + full[(c, r)].re));
    let rank = matrix_rank_psd(&real)?;
    Ok((real, rank))
}

/// Eigenvalues (descending) and numerical rank of a symmetric PSD matrix;
/// rejects matrices with eigenvalues below -1e-9 * max.
pub fn psd_spectrum(m: &DMatrix<f64>) -> Result<(Vec<f64>, usize), AsymptoticsError> {
    let eig = SymmetricEigen::try_new(m.clone(), f64::EPSILON, 10_000)
        .ok_or(AsymptoticsError::EigenStalled)?;
    let mut values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    values.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let max = values.first().copied().unwrap_or(0.0).max(0.0);
    let min = values.last().copied().unwrap_or(0.0);
    if max <= 0.0 {
        // the zero matrix has rank zero, and anything negative is rejected
        if min < -1e-12 {
            return Err(AsymptoticsError::NotPositiveSemiDefinite { min, max });
        }
        return Ok((values, 0));
    }
    if min < -1e-9 * max {
        return Err(AsymptoticsError::NotPositiveSemiDefinite { min, max });
    }
    let rank = values.iter().filter(|&&x| x > RANK_TOL * max).count();
    Ok((values, rank))
}

fn matrix_rank_psd(m: &DMatrix<f64>) -> Result<usize, AsymptoticsError> {
    psd_spectrum(m).map(|(_, rank)| rank)
}

/// Full report: Perron variance, complementary covariance, ranks, and the
/// pairwise synchronization variances.
pub fn covariance_report(
    spec: &SpectralData,
    regime: &RegimeClassification,
) -> Result<CovarianceReport, AsymptoticsError> {
    let n = spec.n_vertices();
    let st_sq = sigma_tilde_sq(spec, regime.gamma, regime.c)?;
    let (hat, rank_hat) = sigma_hat(spec, regime)?;
    let (eigenvalues, _) = psd_spectrum(&hat)?;
    let rank_expected = match regime.case {
        RegimeCase::A | RegimeCase::B => n - 1,
        RegimeCase::C => regime.m_star,
    };
    Ok(assemble_report(
        regime.clone(),
        st_sq,
        hat,
        eigenvalues,
        rank_hat,
        rank_expected,
    ))
}

fn assemble_report(
    regime: RegimeClassification,
    sigma_tilde_sq: f64,
    sigma_hat: DMatrix<f64>,
    sigma_hat_eigenvalues: Vec<f64>,
    rank_hat: usize,
    rank_expected: usize,
) -> CovarianceReport {
    let n = sigma_hat.nrows();
    let sigma_tilde = DMatrix::from_element(n, n, sigma_tilde_sq);
    let mut pairwise = DMatrix::zeros(n, n);
    for j in 0..n {
        for k in 0..n {
            if j != k {
                pairwise[(j, k)] = sigma_hat[(j, j)] + sigma_hat[(k, k)] - 2.0 * sigma_hat[(j, k)];
            }
        }
    }
    let flat_vertices = if regime.case == RegimeCase::C {
        let max_diag = (0..n).map(|j| sigma_hat[(j, j)]).fold(0.0_f64, f64::max);
        (0..n)
            .filter(|&j| sigma_hat[(j, j)] <= 1e-12 * max_diag.max(1e-300))
            .collect()
    } else {
        Vec::new()
    };
    CovarianceReport {
        regime,
        sigma_tilde_sq,
        sigma_tilde,
        sigma_hat,
        sigma_hat_eigenvalues,
        rank_hat,
        rank_expected,
        pairwise,
        flat_vertices,
    }
}

/// Asymptotic variance of the difference Z_j - Z_k under the
/// synchronization CLT.
pub fn pairwise_sync_variance(
    sigma_hat: &DMatrix<f64>,
    j: usize,
    k: usize,
) -> Result<f64, AsymptoticsError> {
    let n = sigma_hat.nrows();
    if j >= n {
        return Err(AsymptoticsError::VertexOutOfRange { index: j, n });
    }
    if k >= n {
        return Err(AsymptoticsError::VertexOutOfRange { index: k, n });
    }
    if j == k {
        return Err(AsymptoticsError::SameVertex(j));
    }
    Ok(sigma_hat[(j, j)] + sigma_hat[(k, k)] - 2.0 * sigma_hat[(j, k)])
}

/// The worked families with fully explicit covariance formulas.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClosedFormExample {
    /// Equal off-diagonal influence alpha/N with self-weight 1 - alpha + alpha/N.
    MeanField { n: usize, alpha: f64 },
    /// One vertex with influence p, the rest sharing 1 - p.
    SpecialVertex { n: usize, p: f64 },
}

/// Analytic covariance report for a worked family, bypassing the
/// eigendecomposition entirely. The regime must be consistent with the
/// family's spectrum.
pub fn closed_form(
    example: ClosedFormExample,
    regime: &RegimeClassification,
) -> Result<CovarianceReport, AsymptoticsError> {
    let c = regime.c;
    let gamma = regime.gamma;
    match example {
        ClosedFormExample::MeanField { n, alpha } => {
            if n < 2 || !(alpha > 0.0 && alpha <= 1.0) {
                return Err(AsymptoticsError::UnsupportedExample(format!(
                    "mean-field needs n >= 2 and alpha in (0,1], got n = {n}, alpha = {alpha}"
                )));
            }
            check_regime_consistency(regime, 1.0 - alpha)?;
            let nf = n as f64;
            let st_sq = c * c / (nf * (2.0 * gamma - 1.0));
            let scale = match regime.case {
                RegimeCase::A => c / (2.0 * alpha),
                RegimeCase::B => c * c / (2.0 * c * alpha - 1.0),
                RegimeCase::C => c * c,
            };
            let hat = DMatrix::from_fn(n, n, |r, q| {
                let proj = if r == q { 1.0 - 1.0 / nf } else { -1.0 / nf };
                scale * proj
            });
            let (eigenvalues, rank) = psd_spectrum(&hat)?;
            Ok(assemble_report(
                regime.clone(),
                st_sq,
                hat,
                eigenvalues,
                rank,
                n - 1,
            ))
        }
        ClosedFormExample::SpecialVertex { n, p } => {
            if n < 2 || !(p > 0.0 && p < 1.0) {
                return Err(AsymptoticsError::UnsupportedExample(format!(
                    "special vertex needs n >= 2 and p in (0,1), got n = {n}, p = {p}"
                )));
            }
            check_regime_consistency(regime, 0.0)?;
            let nf = n as f64;
            let st_sq = c * c / (2.0 * gamma - 1.0)
                * (p * p + (1.0 - p) * (1.0 - p) / (nf - 1.0));
            let scale = match regime.case {
                RegimeCase::A => c / 2.0,
                RegimeCase::B => c * c / (2.0 * c - 1.0),
                RegimeCase::C => c * c,
            };
            let a: Vec<f64> = (0..n)
                .map(|j| if j == 0 { p } else { (1.0 - p) / (nf - 1.0) })
                .collect();
            let a_norm_sq: f64 = a.iter().map(|x| x * x).sum();
            let hat = DMatrix::from_fn(n, n, |r, q| {
                let id = if r == q { 1.0 } else { 0.0 };
                scale * (id + a_norm_sq - a[r] - a[q])
            });
            let (eigenvalues, rank) = psd_spectrum(&hat)?;
            Ok(assemble_report(
                regime.clone(),
                st_sq,
                hat,
                eigenvalues,
                rank,
                n - 1,
            ))
        }
    }
}

/// The closed forms are only valid when the regime actually matches the
/// family's secondary eigenvalue.
fn check_regime_consistency(
    regime: &RegimeClassification,
    re_lambda_star: f64,
) -> Result<(), AsymptoticsError> {
    match regime.case {
        RegimeCase::A => {
            if regime.gamma >= 1.0 {
                return Err(AsymptoticsError::UnsupportedExample(
                    "polynomial-decay case with gamma = 1".into(),
                ));
            }
        }
        RegimeCase::B | RegimeCase::C => {
            if regime.gamma < 1.0 {
                return Err(AsymptoticsError::UnsupportedExample(
                    "gamma = 1 regime requested with gamma < 1".into(),
                ));
            }
            let threshold = 1.0 - 0.5 / regime.c;
            let on_line = (re_lambda_star - threshold).abs() <= regime.tol;
            match regime.case {
                RegimeCase::B if on_line || re_lambda_star > threshold => {
                    return Err(AsymptoticsError::UnsupportedExample(format!(
                        "secondary eigenvalue {re_lambda_star} not strictly below the critical line {threshold}"
                    )));
                }
                RegimeCase::C if !on_line => {
                    return Err(AsymptoticsError::UnsupportedExample(format!(
                        "secondary eigenvalue {re_lambda_star} is off the critical line {threshold}"
                    )));
                }
                _ => {}
            }
        }
    }
    Ok(())
}

/// E[Z_inf] for the special-vertex family started at (z1, z2, .., z2).
pub fn special_vertex_expected_limit(p: f64, z1: f64, z2: f64) -> f64 {
    z1 * p + z2 * (1.0 - p)
}

/// Inputs of the deterministic product-sum limit: two complex exponents
/// with positive real parts, the schedule, and the truncation window.
#[derive(Debug, Clone, Copy)]
pub struct AppendixOracleInput {
    pub alpha1: Complex64,
    pub alpha2: Complex64,
    pub gamma: f64,
    pub c: f64,
    pub m0: u64,
    pub n: u64,
}

impl AppendixOracleInput {
    /// Minimal m0 >= 2 with max(a1, a2) r_{m0} < 1 (rates decrease, so the
    /// condition then holds for every later index).
    pub fn minimal_m0(
        gamma: f64,
        c: f64,
        alpha1: Complex64,
        alpha2: Complex64,
    ) -> Result<u64, AsymptoticsError> {
        let sched = schedule_for_oracle(gamma, c)?;
        let a = alpha1.re.max(alpha2.re);
        if a <= 0.0 {
            return Err(AsymptoticsError::DomainError(
                "exponents need positive real parts".into(),
            ));
        }
        let mut m0 = 2u64;
        while a * sched.rate(m0) >= 1.0 {
            m0 += 1;
        }
        Ok(m0)
    }
}

fn schedule_for_oracle(
    gamma: f64,
    c: f64,
) -> Result<crate::dynamics::ReinforcementSchedule, AsymptoticsError> {
    crate::dynamics::ReinforcementSchedule::new(gamma, c)
        .map_err(|e| AsymptoticsError::DomainError(e.to_string()))
}

/// Truncated form of the product-sum whose limit the covariance kernels
/// encode:
///
///   n^gamma p_{n,1} p_{n,2} sum_{k=m0}^n r_k^2 l_{k,1} l_{k,2},
///
/// with p_{k,j} = prod_{m=m0}^k (1 - alpha_j r_m) and l = 1/p. When
/// gamma = 1 and c (a1 + a2) = 1 the prefactor n^gamma is replaced by
/// n / ln n (the logarithmic-rate case). Everything is accumulated in the
/// log domain so the growing l-products cannot overflow.
pub fn appendix_limit_partial(input: &AppendixOracleInput) -> Result<Complex64, AsymptoticsError> {
    let AppendixOracleInput {
        alpha1,
        alpha2,
        gamma,
        c,
        m0,
        n,
    } = *input;
    if alpha1.re <= 0.0 || alpha2.re <= 0.0 {
        return Err(AsymptoticsError::DomainError(format!(
            "exponents need positive real parts, got {alpha1} and {alpha2}"
        )));
    }
    if m0 < 2 {
        return Err(AsymptoticsError::DomainError(format!(
            "m0 must be at least 2, got {m0}"
        )));
    }
    if n < m0 {
        return Err(AsymptoticsError::DomainError(format!(
            "truncation n = {n} is below m0 = {m0}"
        )));
    }
    let sched = schedule_for_oracle(gamma, c)?;
    let a_max = alpha1.re.max(alpha2.re);
    if a_max * sched.rate(m0) >= 1.0 {
        return Err(AsymptoticsError::DomainError(format!(
            "m0 = {m0} too small: max(a1,a2) r_m0 = {} is not below 1",
            a_max * sched.rate(m0)
        )));
    }

    // complex log of the running products, as (log-magnitude, phase)
    let mut log_p = Complex64::new(0.0, 0.0); // log(p_{k,1} p_{k,2})
    let mut sum = Complex64::new(0.0, 0.0); // sum of terms, scaled by exp(-base)
    let mut base = 0.0_f64; // current scaling exponent

    for k in m0..=n {
        let r = sched.rate(k);
        let f1 = Complex64::new(1.0, 0.0) - alpha1 * r;
        let f2 = Complex64::new(1.0, 0.0) - alpha2 * r;
        if f1.norm() == 0.0 || f2.norm() == 0.0 {
            return Err(AsymptoticsError::DomainError(format!(
                "product factor vanished at k = {k}"
            )));
        }
        log_p += f1.ln() + f2.ln();
        // term = r^2 / (p_{k,1} p_{k,2}) = r^2 exp(-log_p)
        let exponent = -log_p.re + 2.0 * r.ln();
        if exponent > base + 500.0 {
            // rescale before exp() overflows
            let shift = exponent - base;
            sum *= (-shift).exp();
            base = exponent;
        }
        let term = Complex64::from_polar((exponent - base).exp(), -log_p.im);
        sum += term;
    }

    // prefactor n^gamma, or n / ln n on the logarithmic boundary
    let log_case = gamma == 1.0 && (c * (alpha1.re + alpha2.re) - 1.0).abs() <= 1e-12;
    let nf = n as f64;
    let pref_ln = if log_case {
        nf.ln() - nf.ln().ln()
    } else {
        gamma * nf.ln()
    };
    // result = prefactor * p_{n,1} p_{n,2} * sum
    //        = sum * exp(pref_ln + log_p + base)
    let magnitude = (pref_ln + log_p.re + base).exp();
    let rotated = Complex64::from_polar(magnitude, log_p.im);
    Ok(rotated * sum)
}

/// Convenience wrapper building the eigenvalue inputs of the covariance
/// kernels: for eigenvalues lambda_h, lambda_j the relevant exponents are
/// alpha = 1 - lambda.
pub fn appendix_input_for_pair(
    lambda_h: Complex64,
    lambda_j: Complex64,
    gamma: f64,
    c: f64,
    n: u64,
) -> Result<AppendixOracleInput, AsymptoticsError> {
    let alpha1 = Complex64::new(1.0, 0.0) - lambda_h;
    let alpha2 = Complex64::new(1.0, 0.0) - lambda_j;
    let m0 = AppendixOracleInput::minimal_m0(gamma, c, alpha1, alpha2)?;
    Ok(AppendixOracleInput {
        alpha1,
        alpha2,
        gamma,
        c,
        m0,
        n,
    })
}

/// v^T Sigma v for a real vector.
pub fn quadratic_form(m: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    (v.transpose() * m * v)[(0, 0)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{build_network_rows, cycle, mean_field, special_vertex};
    use crate::spectral::{classify_regime, decompose, REGIME_TOL_DEFAULT};
    use approx::assert_abs_diff_eq;

    fn regime_for(
        net: &crate::network::WeightedNetwork,
        gamma: f64,
        c: f64,
    ) -> (SpectralData, RegimeClassification) {
        let spec = decompose(net).unwrap();
        let regime = classify_regime(&spec, gamma, c, REGIME_TOL_DEFAULT).unwrap();
        (spec, regime)
    }

    #[test]
    fn sigma_tilde_examples() {
        // doubly stochastic: c^2 / (N (2 gamma - 1))
        let spec = decompose(&mean_field(4, 0.5).unwrap()).unwrap();
        let v = sigma_tilde_sq(&spec, 0.75, 1.0).unwrap();
        assert_abs_diff_eq!(v, 1.0 / (4.0 * 0.5), epsilon = 1e-12);

        // special vertex: c^2/(2 gamma - 1) (p^2 + (1-p)^2/(N-1))
        let (n, p, gamma, c) = (5usize, 0.3f64, 0.8f64, 2.0f64);
        let spec = decompose(&special_vertex(n, p).unwrap()).unwrap();
        let v = sigma_tilde_sq(&spec, gamma, c).unwrap();
        let expect =
            c * c / (2.0 * gamma - 1.0) * (p * p + (1.0 - p) * (1.0 - p) / (n as f64 - 1.0));
        assert_abs_diff_eq!(v, expect, epsilon = 1e-10);

        // general W sits between the doubly stochastic floor and the ceiling
        let net = build_network_rows(&[
            vec![0.6, 0.1, 0.3],
            vec![0.3, 0.8, 0.2],
            vec![0.1, 0.1, 0.5],
        ])
        .unwrap();
        let spec = decompose(&net).unwrap();
        let v = sigma_tilde_sq(&spec, 0.75, 1.0).unwrap();
        let lo = 1.0 / (3.0 * 0.5);
        let hi = 1.0 / 0.5;
        assert!(v >= lo - 1e-12 && v <= hi + 1e-12);

        assert!(matches!(
            sigma_tilde_sq(&spec, 0.5, 1.0),
            Err(AsymptoticsError::GammaOutOfRange(_))
        ));
    }

    #[test]
    fn mean_field_matches_closed_form_all_regimes() {
        for n in 2..=8usize {
            for &alpha in &[0.25f64, 0.5, 1.0] {
                // polynomial decay
                let net = mean_field(n, alpha).unwrap();
                let (spec, regime) = regime_for(&net, 0.75, 1.0);
                let report = covariance_report(&spec, &regime).unwrap();
                let exact = closed_form(ClosedFormExample::MeanField { n, alpha }, &regime).unwrap();
                compare_reports(&report, &exact, 1e-10);
                assert_eq!(report.rank_hat, n - 1);

                // gamma = 1 strictly inside: choose c with 2 c alpha > 1
                let c = 1.0 / alpha;
                let (spec, regime) = regime_for(&net, 1.0, c);
                assert_eq!(regime.case, RegimeCase::B);
                let report = covariance_report(&spec, &regime).unwrap();
                let exact = closed_form(ClosedFormExample::MeanField { n, alpha }, &regime).unwrap();
                compare_reports(&report, &exact, 1e-10);

                // critical line: 2 c alpha = 1
                let c = 0.5 / alpha;
                let (spec, regime) = regime_for(&net, 1.0, c);
                assert_eq!(regime.case, RegimeCase::C);
                assert_eq!(regime.m_star, n - 1);
                let report = covariance_report(&spec, &regime).unwrap();
                let exact = closed_form(ClosedFormExample::MeanField { n, alpha }, &regime).unwrap();
                compare_reports(&report, &exact, 1e-10);
                assert_eq!(report.rank_hat, n - 1);
                assert!(report.flat_vertices.is_empty());
            }
        }
    }

    fn compare_reports(a: &CovarianceReport, b: &CovarianceReport, tol: f64) {
        let n = a.sigma_hat.nrows();
        assert_abs_diff_eq!(a.sigma_tilde_sq, b.sigma_tilde_sq, epsilon = tol);
        for r in 0..n {
            for c in 0..n {
                assert!(
                    (a.sigma_hat[(r, c)] - b.sigma_hat[(r, c)]).abs() < tol,
                    "sigma_hat mismatch at ({r},{c}): {} vs {}",
                    a.sigma_hat[(r, c)],
                    b.sigma_hat[(r, c)]
                );
                assert!((a.pairwise[(r, c)] - b.pairwise[(r, c)]).abs() < 4.0 * tol);
            }
        }
    }

    #[test]
    fn special_vertex_matches_closed_form_all_regimes() {
        for &(n, p) in &[(2usize, 0.5f64), (4, 0.3), (6, 0.8)] {
            let net = special_vertex(n, p).unwrap();
            let (spec, regime) = regime_for(&net, 0.6, 1.0);
            let report = covariance_report(&spec, &regime).unwrap();
            let exact = closed_form(ClosedFormExample::SpecialVertex { n, p }, &regime).unwrap();
            compare_reports(&report, &exact, 1e-10);

            // gap eigenvalue 0: case B needs c > 1/2
            let (spec, regime) = regime_for(&net, 1.0, 1.0);
            assert_eq!(regime.case, RegimeCase::B);
            let report = covariance_report(&spec, &regime).unwrap();
            let exact = closed_form(ClosedFormExample::SpecialVertex { n, p }, &regime).unwrap();
            compare_reports(&report, &exact, 1e-10);

            // critical at c = 1/2: scale becomes 1/4
            let (spec, regime) = regime_for(&net, 1.0, 0.5);
            assert_eq!(regime.case, RegimeCase::C);
            let report = covariance_report(&spec, &regime).unwrap();
            let exact = closed_form(ClosedFormExample::SpecialVertex { n, p }, &regime).unwrap();
            compare_reports(&report, &exact, 1e-10);
            assert_abs_diff_eq!(
                report.sigma_hat[(0, 0)],
                0.25 * (1.0 + a_norm_sq(n, p) - 2.0 * p),
                epsilon = 1e-10
            );
        }
    }

    fn a_norm_sq(n: usize, p: f64) -> f64 {
        p * p + (1.0 - p) * (1.0 - p) / (n as f64 - 1.0)
    }

    #[test]
    fn cycle_four_case_a_eigenstructure() {
        let c = 1.0;
        let (spec, regime) = regime_for(&cycle(4).unwrap(), 0.75, c);
        let (hat, rank) = sigma_hat(&spec, &regime).unwrap();
        assert_eq!(rank, 3);
        let eig = SymmetricEigen::new(hat.clone());
        let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        vals.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert_abs_diff_eq!(vals[0], c / 2.0, epsilon = 1e-10);
        assert_abs_diff_eq!(vals[1], c / 2.0, epsilon = 1e-10);
        assert_abs_diff_eq!(vals[2], c / 4.0, epsilon = 1e-10);
        assert_abs_diff_eq!(vals[3], 0.0, epsilon = 1e-10);
        // stated eigenvectors: (-1,0,1,0), (0,-1,0,1) for c/2 and
        // (-1,1,-1,1) for c/4
        let check = |v: [f64; 4], lam: f64| {
            let x = DVector::from_row_slice(&v);
            let y = &hat * &x;
            for i in 0..4 {
                assert_abs_diff_eq!(y[i], lam * x[i], epsilon = 1e-10);
            }
        };
        check([-1.0, 0.0, 1.0, 0.0], c / 2.0);
        check([0.0, -1.0, 0.0, 1.0], c / 2.0);
        check([-1.0, 1.0, -1.0, 1.0], c / 4.0);
    }

    #[test]
    fn cycle_four_gamma_one_regimes() {
        // Re(lambda*) = 0; case B for 2c > 1 with eigenvalues
        // c^2 (2c - 1)^{-1} (x2) and c^2 (4c - 1)^{-1}
        let c = 1.0;
        let (spec, regime) = regime_for(&cycle(4).unwrap(), 1.0, c);
        assert_eq!(regime.case, RegimeCase::B);
        let (hat, rank) = sigma_hat(&spec, &regime).unwrap();
        assert_eq!(rank, 3);
        let eig = SymmetricEigen::new(hat);
        let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        vals.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert_abs_diff_eq!(vals[0], c * c / (2.0 * c - 1.0), epsilon = 1e-10);
        assert_abs_diff_eq!(vals[1], c * c / (2.0 * c - 1.0), epsilon = 1e-10);
        assert_abs_diff_eq!(vals[2], c * c / (4.0 * c - 1.0), epsilon = 1e-10);

        // critical at c = 1/2: the imaginary pair sits on the line,
        // m* = 2, nonzero eigenvalues 1/4 twice
        let (spec, regime) = regime_for(&cycle(4).unwrap(), 1.0, 0.5);
        assert_eq!(regime.case, RegimeCase::C);
        assert_eq!(regime.m_star, 2);
        let report = covariance_report(&spec, &regime).unwrap();
        assert_eq!(report.rank_hat, 2);
        assert!(report.rank_matches());
        let eig = SymmetricEigen::new(report.sigma_hat.clone());
        let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        vals.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert_abs_diff_eq!(vals[0], 0.25, epsilon = 1e-10);
        assert_abs_diff_eq!(vals[1], 0.25, epsilon = 1e-10);
        assert_abs_diff_eq!(vals[2], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn symmetric_shortcut_agrees_with_general_path() {
        let nets = vec![
            mean_field(5, 0.4).unwrap(),
            build_network_rows(&[
                vec![0.6, 0.3, 0.1],
                vec![0.3, 0.4, 0.3],
                vec![0.1, 0.3, 0.6],
            ])
            .unwrap(),
        ];
        for net in nets {
            assert!(net.is_symmetric(1e-14));
            let (spec, regime) = regime_for(&net, 0.75, 1.0);
            let (a, _) = sigma_hat(&spec, &regime).unwrap();
            let (b, _) = sigma_hat_symmetric(&spec, &regime).unwrap();
            let n = net.n_vertices();
            for r in 0..n {
                for q in 0..n {
                    assert!(
                        (a[(r, q)] - b[(r, q)]).abs() < 1e-10,
                        "mismatch at ({r},{q}): {} vs {}",
                        a[(r, q)],
                        b[(r, q)]
                    );
                }
            }
        }
    }

    #[test]
    fn v1_annihilation_and_psd_on_random_networks() {
        // a few fixed asymmetric irreducible networks
        let nets = vec![
            build_network_rows(&[
                vec![0.6, 0.1, 0.3],
                vec![0.3, 0.8, 0.2],
                vec![0.1, 0.1, 0.5],
            ])
            .unwrap(),
            build_network_rows(&[
                vec![0.2, 0.5, 0.1, 0.1],
                vec![0.4, 0.2, 0.3, 0.2],
                vec![0.3, 0.2, 0.4, 0.3],
                vec![0.1, 0.1, 0.2, 0.4],
            ])
            .unwrap(),
        ];
        for net in nets {
            for (gamma, c) in [(0.75, 1.0), (1.0, 5.0)] {
                let (spec, regime) = regime_for(&net, gamma, c);
                let report = covariance_report(&spec, &regime).unwrap();
                let n = net.n_vertices();
                // symmetry
                for r in 0..n {
                    for q in 0..n {
                        assert!(
                            (report.sigma_hat[(r, q)] - report.sigma_hat[(q, r)]).abs() < 1e-10
                        );
                    }
                }
                assert_eq!(report.rank_hat, n - 1);
                assert!(report.rank_matches());
                // v1^T Sigma v1 = 0
                let q = quadratic_form(&report.sigma_hat, spec.v1());
                assert!(q.abs() < 1e-8, "v1 annihilation violated: {q}");
                // pairwise variances strictly positive
                for j in 0..n {
                    for k in 0..n {
                        if j != k {
                            let p = pairwise_sync_variance(&report.sigma_hat, j, k).unwrap();
                            assert!(p > 0.0);
                            assert_abs_diff_eq!(p, report.pairwise[(j, k)], epsilon = 1e-12);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn pairwise_rejects_bad_indices() {
        let (spec, regime) = regime_for(&mean_field(3, 0.5).unwrap(), 0.75, 1.0);
        let (hat, _) = sigma_hat(&spec, &regime).unwrap();
        assert!(matches!(
            pairwise_sync_variance(&hat, 1, 1),
            Err(AsymptoticsError::SameVertex(1))
        ));
        assert!(matches!(
            pairwise_sync_variance(&hat, 0, 7),
            Err(AsymptoticsError::VertexOutOfRange { .. })
        ));
        // N=2 mean-field with alpha = 1 at c: pairwise = c
        let (spec, regime) = regime_for(&mean_field(2, 1.0).unwrap(), 0.75, 1.0);
        let (hat, _) = sigma_hat(&spec, &regime).unwrap();
        let p = pairwise_sync_variance(&hat, 0, 1).unwrap();
        assert_abs_diff_eq!(p, regime.c, epsilon = 1e-10);
    }

    #[test]
    fn basis_invariance_under_eigenspace_rotation() {
        // mean-field N = 4 has a 3-dimensional repeated eigenspace; any
        // orthogonal remix of the chosen basis must leave the covariance
        // unchanged.
        let net = mean_field(4, 0.5).unwrap();
        let (spec, regime) = regime_for(&net, 0.75, 1.0);
        let (reference, _) = sigma_hat(&spec, &regime).unwrap();

        // fixed orthogonal 3x3 from the QR of a seeded matrix
        let seed_mat = DMatrix::from_row_slice(
            3,
            3,
            &[0.3, -1.2, 0.7, 0.9, 0.4, -0.5, -0.8, 0.1, 1.1],
        );
        let q_real = seed_mat.qr().q();
        let q = q_real.map(|x| Complex64::new(x, 0.0));
        let u_rot = spec.u_block() * &q;
        let v_rot = spec.v_block() * &q;
        let (rotated, _) =
            sigma_hat_from_parts(spec.diag_d(), &u_rot, &v_rot, &regime).unwrap();
        for r in 0..4 {
            for c in 0..4 {
                assert!(
                    (reference[(r, c)] - rotated[(r, c)]).abs() < 1e-9,
                    "basis dependence at ({r},{c})"
                );
            }
        }
    }

    #[test]
    fn closed_form_rejects_inconsistent_regimes() {
        let (_, regime_b) = regime_for(&mean_field(3, 1.0).unwrap(), 1.0, 1.0);
        // alpha = 0.25 with c = 1 would be the uncovered side for gamma = 1
        assert!(matches!(
            closed_form(ClosedFormExample::MeanField { n: 3, alpha: 0.25 }, &regime_b),
            Err(AsymptoticsError::UnsupportedExample(_))
        ));
        assert!(matches!(
            closed_form(ClosedFormExample::MeanField { n: 1, alpha: 0.5 }, &regime_b),
            Err(AsymptoticsError::UnsupportedExample(_))
        ));
        assert!(matches!(
            closed_form(
                ClosedFormExample::SpecialVertex { n: 4, p: 1.0 },
                &regime_b
            ),
            Err(AsymptoticsError::UnsupportedExample(_))
        ));
    }

    #[test]
    fn expected_limit_of_special_vertex_start() {
        assert_abs_diff_eq!(special_vertex_expected_limit(0.3, 1.0, 0.0), 0.3);
        assert_abs_diff_eq!(special_vertex_expected_limit(0.3, 0.2, 0.6), 0.48);
    }

    #[test]
    fn covariance_json_round_trip() {
        let (spec, regime) = regime_for(&cycle(4).unwrap(), 0.75, 1.0);
        let report = covariance_report(&spec, &regime).unwrap();
        let s = report.to_json();
        let back = CovarianceReport::from_json(&s).unwrap();
        assert_eq!(back.rank_hat, report.rank_hat);
        for r in 0..4 {
            for c in 0..4 {
                assert_eq!(back.sigma_hat[(r, c)], report.sigma_hat[(r, c)]);
            }
        }
    }

    #[test]
    fn oracle_validates_inputs() {
        let bad = AppendixOracleInput {
            alpha1: Complex64::new(-0.5, 0.0),
            alpha2: Complex64::new(0.5, 0.0),
            gamma: 0.75,
            c: 1.0,
            m0: 2,
            n: 100,
        };
        assert!(matches!(
            appendix_limit_partial(&bad),
            Err(AsymptoticsError::DomainError(_))
        ));
        let swapped = AppendixOracleInput {
            alpha1: Complex64::new(0.5, 0.0),
            alpha2: Complex64::new(0.5, 0.0),
            gamma: 0.75,
            c: 1.0,
            m0: 200,
            n: 100,
        };
        assert!(matches!(
            appendix_limit_partial(&swapped),
            Err(AsymptoticsError::DomainError(_))
        ));
    }

    /// Frozen reference partials computed independently (vectorized log-domain
    /// evaluation of the same truncated sums in double precision).
    #[test]
    fn oracle_partials_match_frozen_references() {
        let run = |a1: Complex64, a2: Complex64, gamma: f64, c: f64, n: u64| {
            let m0 = AppendixOracleInput::minimal_m0(gamma, c, a1, a2).unwrap();
            assert_eq!(m0, 2);
            appendix_limit_partial(&AppendixOracleInput {
                alpha1: a1,
                alpha2: a2,
                gamma,
                c,
                m0,
                n,
            })
            .unwrap()
        };
        let close = |v: Complex64, re: f64, im: f64| {
            let gap = (v - Complex64::new(re, im)).norm();
            assert!(gap < 1e-9 * v.norm().max(1.0), "partial {v} vs frozen {re}+{im}i");
        };

        let a = Complex64::new(0.5, 0.0);
        // polynomial case, limit c/(a1+a2) = 1; gap at n = 1e5 is ~0.045
        close(run(a, a, 0.75, 1.0, 100_000), 1.044756173671852, 0.0);
        // gamma = 1 strictly supercritical, limit c^2/(c(a1+a2)-1) = 4
        close(run(a, a, 1.0, 2.0, 100_000), 3.999720013199642, 0.0);
        // logarithmic boundary, imaginary parts cancelling: limit c^2 = 1,
        // approach is O(1/ln n) so the gap at n = 1e6 is still ~0.084
        let ap = Complex64::new(0.5, 0.3);
        let am = Complex64::new(0.5, -0.3);
        close(run(ap, am, 1.0, 1.0, 1_000_000), 0.916222085365775, 0.0);
        // logarithmic boundary, imaginary parts adding: limit 0, the
        // partial still carries a decaying oscillation
        close(
            run(ap, ap, 1.0, 1.0, 1_000_000),
            0.119438439334820,
            -0.086799322136183,
        );
        // logarithmic boundary, real exponents: limit c^2 = 1
        close(run(a, a, 1.0, 1.0, 1_000_000), 0.914299315046163, 0.0);
    }

    #[test]
    fn oracle_partials_approach_known_limits() {
        let run = |a1: Complex64, a2: Complex64, gamma: f64, c: f64, n: u64| {
            let m0 = AppendixOracleInput::minimal_m0(gamma, c, a1, a2).unwrap();
            appendix_limit_partial(&AppendixOracleInput {
                alpha1: a1,
                alpha2: a2,
                gamma,
                c,
                m0,
                n,
            })
            .unwrap()
        };
        let a = Complex64::new(0.5, 0.0);
        // polynomial case converges like n^{gamma - 1}
        let v = run(a, a, 0.75, 1.0, 100_000);
        assert!(v.im.abs() < 1e-12);
        assert!((v.re - 1.0).abs() < 0.06, "partial {v} far from limit 1");
        // and the gap indeed shrinks when n grows 16-fold (rate 1/4 =>
        // gap halves)
        let v2 = run(a, a, 0.75, 1.0, 1_600_000);
        assert!((v2.re - 1.0).abs() < 0.6 * (v.re - 1.0).abs());

        // gamma = 1 strictly supercritical
        let v = run(a, a, 1.0, 2.0, 100_000);
        assert!((v.re - 4.0).abs() < 4.0 * 1e-3, "partial {v} far from limit 4");

        // logarithmic boundary with cancelling imaginary parts
        let ap = Complex64::new(0.5, 0.3);
        let am = Complex64::new(0.5, -0.3);
        let v = run(ap, am, 1.0, 1.0, 1_000_000);
        assert!(v.im.abs() < 1e-9);
        assert!((v.re - 1.0).abs() < 0.12, "partial {v} far from limit 1");

        // logarithmic boundary with non-cancelling imaginary parts drifts
        // to zero (slowly, like 1/ln n)
        let v6 = run(ap, ap, 1.0, 1.0, 1_000_000);
        assert!(v6.norm() < 0.16, "partial {v6} should drift toward 0");
        let v3 = run(ap, ap, 1.0, 1.0, 1_000);
        assert!(v6.norm() < v3.norm(), "oscillation should decay with n");
    }

    #[test]
    fn oracle_matches_kernel_values_where_both_apply() {
        // For real spectra the case A/B kernels are the large-n limits of
        // the partial sums with alpha = 1 - lambda.
        let (gamma, c) = (0.75, 1.0);
        let lam = Complex64::new(0.25, 0.0);
        let input = appendix_input_for_pair(lam, lam, gamma, c, 2_000_000).unwrap();
        let v = appendix_limit_partial(&input).unwrap();
        let regime = RegimeClassification {
            gamma,
            c,
            case: RegimeCase::A,
            a_star_set: vec![],
            m_star: 0,
            tol: 1e-9,
        };
        let k = kernel(&regime, lam + lam).unwrap();
        // kernel = c / (2 - 2 lambda) = c / (alpha1 + alpha2)
        assert!((v - k).norm() < 0.05 * k.norm());
    }
}
