//! Statistical tools built on the limit theorems: tail quantiles, the
//! covariance standardizer, confidence intervals for the shared limit, and
//! the chi-square topology test.

use crate::asymptotics::RANK_TOL;
use crate::dynamics::project;
use crate::spectral::{RegimeCase, RegimeClassification, SpectralData};
use nalgebra::linalg::SymmetricEigen;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("tail probability must lie strictly between 0 and 1, got {0}")]
    ProbOutOfRange(f64),
    #[error("chi-square distribution needs at least one degree of freedom")]
    DofZero,
    #[error("confidence level must lie strictly between 0 and 1, got {0}")]
    LevelOutOfRange(f64),
    #[error("matrix is not symmetric: |A - A^T| reaches {0:.3e}")]
    NotSymmetric(f64),
    #[error("matrix has negative eigenvalue {0:.3e}; not a covariance")]
    NegativeEigenvalue(f64),
    #[error("covariance has numerical rank zero; nothing to standardize")]
    RankZero,
    #[error("standardization failed: M Sigma M^T deviates from identity by {0:.3e}")]
    StandardizationFailed(f64),
    #[error("state is degenerate (synchronized component {0} is at an absorbing value)")]
    DegenerateState(f64),
    #[error("step count must be positive")]
    HorizonZero,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("eigenvalue iteration stalled")]
    EigenStalled,
}

/// Distributions whose upper-tail quantiles the tests need.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TailDistribution {
    StandardNormal,
    ChiSquared { dof: usize },
}

/// Upper-tail quantile: the x with P(X > x) = upper_p, solved by bisection
/// on the survival function to double precision (far below the 1e-8
/// contract).
pub fn tail_quantile(dist: TailDistribution, upper_p: f64) -> Result<f64, InferenceError> {
    if !(upper_p > 0.0 && upper_p < 1.0) {
        return Err(InferenceError::ProbOutOfRange(upper_p));
    }
    match dist {
        TailDistribution::StandardNormal => {
            let d = Normal::new(0.0, 1.0).expect("standard normal is valid");
            Ok(bisect_sf(|x| d.sf(x), upper_p, -60.0, 60.0))
        }
        TailDistribution::ChiSquared { dof } => {
            if dof == 0 {
                return Err(InferenceError::DofZero);
            }
            let d = ChiSquared::new(dof as f64).expect("positive dof is valid");
            // expand the bracket until the tail mass at hi drops below p
            let mut hi = (dof as f64) + 10.0;
            while d.sf(hi) >= upper_p {
                hi *= 2.0;
            }
            Ok(bisect_sf(|x| d.sf(x), upper_p, 0.0, hi))
        }
    }
}

/// Bisection for sf(x) = p with sf monotone decreasing; the bracket is
/// halved until it collapses at machine precision.
fn bisect_sf(sf: impl Fn(f64) -> f64, p: f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sf(mid) > p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Whitening map M of a singular covariance: M Sigma M^T = I_r on the
/// positive eigenspace.
#[derive(Debug, Clone)]
pub struct Standardizer {
    /// r x N; rows span the positive eigenspace of the covariance.
    pub matrix: DMatrix<f64>,
    pub rank: usize,
    /// All eigenvalues of the covariance, descending.
    pub eigenvalues: Vec<f64>,
}

/// Builds the whitening map from a symmetric PSD covariance: eigenvalues
/// below RANK_TOL * max count as zero, anything meaningfully negative is
/// rejected.
pub fn standardizer(sigma: &DMatrix<f64>) -> Result<Standardizer, InferenceError> {
    let n = sigma.nrows();
    let mut asym = 0.0_f64;
    for r in 0..n {
        for c in (r + 1)..n {
            asym = asym.max((sigma[(r, c)] - sigma[(c, r)]).abs());
        }
    }
    if asym > 1e-8 {
        return Err(InferenceError::NotSymmetric(asym));
    }
    let sym = DMatrix::from_fn(n, n, |r, c| 0.5 * (sigma[(r, c)] + sigma[(c, r)]));
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, 10_000)
        .ok_or(InferenceError::EigenStalled)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let max = eigenvalues[0].max(0.0);
    if let Some(&min) = eigenvalues.last() {
        if min < -1e-9 * max.max(1e-300) {
            return Err(InferenceError::NegativeEigenvalue(min));
        }
    }
    let rank = eigenvalues.iter().filter(|&&x| x > RANK_TOL * max).count();
    if rank == 0 {
        return Err(InferenceError::RankZero);
    }
    // M = L^{-1/2} O^T restricted to the positive eigenspace
    let mut m = DMatrix::zeros(rank, n);
    for (row, &idx) in order[..rank].iter().enumerate() {
        let scale = 1.0 / eig.eigenvalues[idx].sqrt();
        for k in 0..n {
            m[(row, k)] = scale * eig.eigenvectors[(k, idx)];
        }
    }
    // verify the contract M Sigma M^T = I_r
    let check = &m * sigma * m.transpose();
    let mut dev = 0.0_f64;
    for r in 0..rank {
        for c in 0..rank {
            let target = if r == c { 1.0 } else { 0.0 };
            dev = dev.max((check[(r, c)] - target).abs());
        }
    }
    if dev > 1e-9 {
        return Err(InferenceError::StandardizationFailed(dev));
    }
    Ok(Standardizer {
        matrix: m,
        rank,
        eigenvalues,
    })
}

/// Two-sided interval for the shared limit from a single late observation
/// of the synchronized component.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub center: f64,
    pub half_width: f64,
    /// Clamped to [0, 1]; the raw endpoints are center -/+ half_width.
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub clamped: bool,
}

/// CI for the limit L given the synchronized component z_tilde observed at
/// step n: z_tilde +/- sigma_tilde sqrt(z_tilde (1 - z_tilde)) n^{-(gamma - 1/2)} z_{(1-level)/2}.
pub fn confidence_interval(
    z_tilde: f64,
    n: u64,
    gamma: f64,
    sigma_tilde_sq: f64,
    level: f64,
) -> Result<ConfidenceInterval, InferenceError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(InferenceError::LevelOutOfRange(level));
    }
    if n == 0 {
        return Err(InferenceError::HorizonZero);
    }
    let spread = z_tilde * (1.0 - z_tilde);
    if spread <= 0.0 {
        return Err(InferenceError::DegenerateState(z_tilde));
    }
    let z = tail_quantile(TailDistribution::StandardNormal, 0.5 * (1.0 - level))?;
    let half_width =
        (sigma_tilde_sq * spread).sqrt() * (n as f64).powf(-(gamma - 0.5)) * z;
    let raw_lower = z_tilde - half_width;
    let raw_upper = z_tilde + half_width;
    let lower = raw_lower.max(0.0);
    let upper = raw_upper.min(1.0);
    Ok(ConfidenceInterval {
        center: z_tilde,
        half_width,
        lower,
        upper,
        level,
        clamped: raw_lower < 0.0 || raw_upper > 1.0,
    })
}

/// Outcome of the chi-square topology test.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub dof: usize,
    pub critical: f64,
    pub p_value: f64,
    pub reject: bool,
    /// The scaling applied to the complementary component.
    pub rate: f64,
    pub theta: f64,
}

/// The regime's CLT rate for the complementary component at step n.
pub fn clt_rate(regime: &RegimeClassification, n: u64) -> Result<f64, InferenceError> {
    if n == 0 {
        return Err(InferenceError::HorizonZero);
    }
    let nf = n as f64;
    Ok(match regime.case {
        RegimeCase::A => nf.powf(0.5 * regime.gamma),
        RegimeCase::B => nf.sqrt(),
        RegimeCase::C => {
            if n < 2 {
                return Err(InferenceError::HorizonZero);
            }
            (nf / nf.ln()).sqrt()
        }
    })
}

/// Chi-square goodness-of-fit test of a hypothesized network against an
/// observed state: under the null, the squared norm of the standardized,
/// rate-scaled complementary component is asymptotically chi-square with
/// N - 1 (or m* in the critical case) degrees of freedom.
pub fn topology_test(
    spec: &SpectralData,
    regime: &RegimeClassification,
    std: &Standardizer,
    z: &[f64],
    n: u64,
    theta: f64,
) -> Result<TestResult, InferenceError> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(InferenceError::ProbOutOfRange(theta));
    }
    if z.len() != spec.n_vertices() {
        return Err(InferenceError::DimensionMismatch(format!(
            "state has {} entries for {}-vertex spectral data",
            z.len(),
            spec.n_vertices()
        )));
    }
    if std.matrix.ncols() != spec.n_vertices() {
        return Err(InferenceError::DimensionMismatch(format!(
            "standardizer acts on {} vertices, spectral data has {}",
            std.matrix.ncols(),
            spec.n_vertices()
        )));
    }
    let (z_tilde, z_hat) = project(spec, z)
        .map_err(|e| InferenceError::DimensionMismatch(e.to_string()))?;
    let spread = z_tilde * (1.0 - z_tilde);
    if spread <= 0.0 {
        return Err(InferenceError::DegenerateState(z_tilde));
    }
    let rate = clt_rate(regime, n)?;
    let dof = match regime.case {
        RegimeCase::A | RegimeCase::B => spec.n_vertices() - 1,
        RegimeCase::C => regime.m_star,
    };
    if dof == 0 {
        return Err(InferenceError::DofZero);
    }
    let t = &std.matrix * DVector::from_column_slice(&z_hat) * (rate / spread.sqrt());
    let statistic = t.norm_squared();
    let critical = tail_quantile(TailDistribution::ChiSquared { dof }, theta)?;
    let d = ChiSquared::new(dof as f64).expect("positive dof");
    let p_value = d.sf(statistic);
    let reject = statistic > critical;
    Ok(TestResult {
        statistic,
        dof,
        critical,
        p_value,
        reject,
        rate,
        theta,
    })
}

/// Scaling of the test statistic when the truth is a mean-field network
/// with coupling `alpha` but the null hypothesizes `alpha0`: outside the
/// critical case the statistic is asymptotically `factor` times a
/// chi-square; on the critical line (with the truth strictly inside) the
/// statistic collapses to zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlternativeScaling {
    Factor(f64),
    VanishingStatistic,
}

pub fn mean_field_alternative_scaling(
    case: RegimeCase,
    c: f64,
    alpha0: f64,
    alpha: f64,
) -> AlternativeScaling {
    match case {
        RegimeCase::A => AlternativeScaling::Factor(alpha0 / alpha),
        RegimeCase::B => AlternativeScaling::Factor(
            (2.0 * c * alpha0 - 1.0) / (2.0 * c * alpha - 1.0),
        ),
        RegimeCase::C => AlternativeScaling::VanishingStatistic,
    }
}
