//! The interacting reinforced process itself: reinforcement schedules,
//! single steps (plain and with a forcing input), replicated simulation
//! with reproducible per-replication random streams, the Perron projection
//! Z -> (Z~, Z^), and an exhaustive enumeration oracle for tiny instances.

use crate::network::WeightedNetwork;
use crate::spectral::SpectralData;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("gamma must lie in (1/2, 1], got {0}")]
    GammaOutOfRange(f64),
    #[error("c must be positive, got {0}")]
    CNotPositive(f64),
    #[error("offset n0 = {n0} is too small: need n0^gamma > c = {c} so that r_0 < 1")]
    OffsetTooSmall { n0: u64, c: f64 },
    #[error("horizon must be at least 1")]
    HorizonZero,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("initial state entry {index} = {value} is outside [0,1]")]
    Z0OutOfRange { index: usize, value: f64 },
    #[error("rho must lie in [0,1), got {0}")]
    RhoOutOfRange(f64),
    #[error("q must lie in [0,1], got {0}")]
    QOutOfRange(f64),
    #[error("enumeration needs N*n_max <= {max}, got {got}")]
    TooLarge { max: u32, got: u64 },
    #[error("explicit stride list must be strictly increasing")]
    StrideNotIncreasing,
    #[error("stride must be at least 1")]
    StrideZero,
}

/// Decaying reinforcement r_n = c / (n + n0)^gamma for n >= 0.
///
/// The offset keeps every r_n strictly below 1 without touching the tail
/// behavior: n^gamma r_n -> c always, and for gamma = 1 the sharper bound
/// n r_n - c = -c n0 / (n + n0) = O(1/n) holds as well.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReinforcementSchedule {
    gamma: f64,
    c: f64,
    n0: u64,
}

impl ReinforcementSchedule {
    /// Schedule with the default offset n0 = max(1, ceil(c^(1/gamma)) + 1).
    pub fn new(gamma: f64, c: f64) -> Result<Self, DynamicsError> {
        let n0 = ((c.powf(1.0 / gamma)).ceil() as u64 + 1).max(1);
        Self::with_offset(gamma, c, n0)
    }

    /// Schedule with an explicit offset, e.g. n0 = a + b + 1 to reproduce
    /// the classical urn rate r_n = (a + b + n + 1)^{-1}.
    pub fn with_offset(gamma: f64, c: f64, n0: u64) -> Result<Self, DynamicsError> {
        if !(gamma > 0.5 && gamma <= 1.0) {
            return Err(DynamicsError::GammaOutOfRange(gamma));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(DynamicsError::CNotPositive(c));
        }
        if n0 == 0 || (n0 as f64).powf(gamma) <= c {
            return Err(DynamicsError::OffsetTooSmall { n0, c });
        }
        Ok(ReinforcementSchedule { gamma, c, n0 })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn n0(&self) -> u64 {
        self.n0
    }

    /// r_n, the weight of the new observation at step n -> n+1.
    pub fn rate(&self, n: u64) -> f64 {
        let t = (n + self.n0) as f64;
        if self.gamma == 1.0 {
            self.c / t
        } else {
            self.c / t.powf(self.gamma)
        }
    }

    /// Precomputed r_0..r_{horizon-1}; lets many replications share one
    /// table instead of re-evaluating powers in the hot loop.
    pub fn rates(&self, horizon: u64) -> Vec<f64> {
        (0..horizon).map(|n| self.rate(n)).collect()
    }
}

/// Inclination vector plus step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub n: u64,
    pub z: Vec<f64>,
}

impl SystemState {
    pub fn new(z: Vec<f64>) -> Result<Self, DynamicsError> {
        for (index, &value) in z.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(DynamicsError::Z0OutOfRange { index, value });
            }
        }
        Ok(SystemState { n: 0, z })
    }

    /// max_j Z_j - min_j Z_j.
    pub fn spread(&self) -> f64 {
        spread(&self.z)
    }
}

pub fn spread(z: &[f64]) -> f64 {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &x in z {
        lo = lo.min(x);
        hi = hi.max(x);
    }
    if z.is_empty() {
        0.0
    } else {
        hi - lo
    }
}

/// Mixes a constant target q into every update; rho = 1 would be the base
/// model and is excluded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ForcingVariant {
    pub rho: f64,
    pub q: f64,
}

impl ForcingVariant {
    pub fn new(rho: f64, q: f64) -> Result<Self, DynamicsError> {
        if !(0.0..1.0).contains(&rho) {
            return Err(DynamicsError::RhoOutOfRange(rho));
        }
        if !(0.0..=1.0).contains(&q) {
            return Err(DynamicsError::QOutOfRange(q));
        }
        Ok(ForcingVariant { rho, q })
    }
}

/// Independent random stream for one replication of one experiment.
///
/// Streams are derived by mixing the master seed and the replication index
/// through a 64-bit finalizer, so they are decorrelated and independent of
/// how replications are scheduled across threads.
pub fn replication_rng(master_seed: u64, replication: u64) -> ChaCha8Rng {
    let mut x = master_seed ^ replication.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    // splitmix64 finalizer
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    ChaCha8Rng::seed_from_u64(z)
}

fn bernoulli_round(
    wt_flat: &[f64],
    n_vertices: usize,
    z: &[f64],
    probs: &mut [f64],
    draws: &mut [f64],
    rng: &mut impl Rng,
) {
    for j in 0..n_vertices {
        let row = &wt_flat[j * n_vertices..(j + 1) * n_vertices];
        let mut p = 0.0;
        for (w, zk) in row.iter().zip(z.iter()) {
            p += w * zk;
        }
        probs[j] = p;
    }
    // fixed vertex order so the stream layout is part of the contract
    for j in 0..n_vertices {
        draws[j] = if rng.gen::<f64>() < probs[j] { 1.0 } else { 0.0 };
    }
}

fn update_in_place(z: &mut [f64], draws: &[f64], r: f64, forcing: Option<ForcingVariant>) {
    match forcing {
        None => {
            for (zj, &xj) in z.iter_mut().zip(draws.iter()) {
                *zj = (1.0 - r) * *zj + r * xj;
                debug_assert!(*zj >= -1e-15 && *zj <= 1.0 + 1e-15);
            }
        }
        Some(f) => {
            let base = (1.0 - f.rho) * f.q;
            for (zj, &xj) in z.iter_mut().zip(draws.iter()) {
                *zj = (1.0 - r) * *zj + r * (f.rho * xj + base);
                debug_assert!(*zj >= -1e-15 && *zj <= 1.0 + 1e-15);
            }
        }
    }
}

/// One transition of the base model. Draws X_{n+1} (independent Bernoulli
/// across vertices with success probabilities W^T Z_n) and returns the
/// convex update (1 - r_n) Z_n + r_n X_{n+1}.
pub fn step(
    state: &SystemState,
    net: &WeightedNetwork,
    sched: &ReinforcementSchedule,
    rng: &mut impl Rng,
) -> SystemState {
    step_inner(state, net, sched, None, rng)
}

/// One transition of the forcing-input variant:
/// Z_{n+1} = (1 - r_n) Z_n + r_n [rho X_{n+1} + (1 - rho) q 1].
pub fn step_forced(
    state: &SystemState,
    net: &WeightedNetwork,
    sched: &ReinforcementSchedule,
    variant: ForcingVariant,
    rng: &mut impl Rng,
) -> SystemState {
    step_inner(state, net, sched, Some(variant), rng)
}

fn step_inner(
    state: &SystemState,
    net: &WeightedNetwork,
    sched: &ReinforcementSchedule,
    variant: Option<ForcingVariant>,
    rng: &mut impl Rng,
) -> SystemState {
    let n_vertices = net.n_vertices();
    assert_eq!(state.z.len(), n_vertices, "state dimension mismatch");
    let wt = net.transpose_flat();
    let mut probs = vec![0.0; n_vertices];
    let mut draws = vec![0.0; n_vertices];
    let mut z = state.z.clone();
    bernoulli_round(&wt, n_vertices, &state.z, &mut probs, &mut draws, rng);
    update_in_place(&mut z, &draws, sched.rate(state.n), variant);
    SystemState { n: state.n + 1, z }
}

/// Which steps a trajectory records (besides the final state, which is
/// always kept).
#[derive(Debug, Clone, PartialEq)]
pub enum Stride {
    /// n = 0, 1, 2, 4, 8, ... (default; keeps long runs small).
    Geometric,
    /// every k-th step.
    Every(u64),
    /// explicit strictly increasing list of steps.
    Explicit(Vec<u64>),
}

impl Stride {
    fn validate(&self) -> Result<(), DynamicsError> {
        match self {
            Stride::Geometric => Ok(()),
            Stride::Every(k) => {
                if *k == 0 {
                    Err(DynamicsError::StrideZero)
                } else {
                    Ok(())
                }
            }
            Stride::Explicit(list) => {
                if list.windows(2).any(|w| w[0] >= w[1]) {
                    Err(DynamicsError::StrideNotIncreasing)
                } else {
                    Ok(())
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub schedule: ReinforcementSchedule,
    pub n_vertices: usize,
    pub z0: Vec<f64>,
    /// (step, state) pairs at the recording stride, final step included.
    pub records: Vec<(u64, Vec<f64>)>,
    pub final_state: SystemState,
    pub master_seed: u64,
    pub replication: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrajectorySummary {
    pub n_steps: u64,
    pub final_z: Vec<f64>,
    /// Perron projection of the final state; absent when no spectral data
    /// applies (e.g. reducible networks).
    pub z_tilde: Option<f64>,
    pub spread: f64,
}

impl Trajectory {
    /// CSV with header `n,Z_1,..,Z_N`, one row per recorded step.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n");
        for j in 1..=self.n_vertices {
            out.push_str(&format!(",Z_{j}"));
        }
        out.push('\n');
        for (n, z) in &self.records {
            out.push_str(&n.to_string());
            for x in z {
                out.push_str(&format!(",{x}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn summary(&self, spec: Option<&SpectralData>) -> TrajectorySummary {
        let z_tilde = spec.and_then(|s| project(s, &self.final_state.z).ok().map(|(zt, _)| zt));
        TrajectorySummary {
            n_steps: self.final_state.n,
            final_z: self.final_state.z.clone(),
            z_tilde,
            spread: self.final_state.spread(),
        }
    }

    pub fn summary_json(&self, spec: Option<&SpectralData>) -> String {
        serde_json::to_string_pretty(&self.summary(spec)).expect("summary serialization")
    }
}

/// Reusable simulation plan: one network + schedule + horizon, many
/// replications. Precomputes the flattened transpose and the rate table so
/// replications share them.
pub struct Simulator {
    wt_flat: Vec<f64>,
    n_vertices: usize,
    sched: ReinforcementSchedule,
    rates: Vec<f64>,
}

impl Simulator {
    pub fn new(
        net: &WeightedNetwork,
        sched: &ReinforcementSchedule,
        horizon: u64,
    ) -> Result<Self, DynamicsError> {
        if horizon == 0 {
            return Err(DynamicsError::HorizonZero);
        }
        Ok(Simulator {
            wt_flat: net.transpose_flat(),
            n_vertices: net.n_vertices(),
            sched: *sched,
            rates: sched.rates(horizon),
        })
    }

    pub fn horizon(&self) -> u64 {
        self.rates.len() as u64
    }

    pub fn run(
        &self,
        z0: &[f64],
        stride: &Stride,
        variant: Option<ForcingVariant>,
        master_seed: u64,
        replication: u64,
    ) -> Result<Trajectory, DynamicsError> {
        stride.validate()?;
        if z0.len() != self.n_vertices {
            return Err(DynamicsError::DimensionMismatch(format!(
                "initial state has {} entries for a {}-vertex network",
                z0.len(),
                self.n_vertices
            )));
        }
        let mut state = SystemState::new(z0.to_vec())?;
        let horizon = self.horizon();

        let mut record_steps: Vec<u64> = match stride {
            Stride::Geometric => {
                let mut steps = vec![0u64, 1];
                let mut s = 2u64;
                while s < horizon {
                    steps.push(s);
                    s *= 2;
                }
                steps
            }
            Stride::Every(k) => (0..horizon).step_by(*k as usize).collect(),
            Stride::Explicit(list) => list.iter().copied().filter(|&s| s <= horizon).collect(),
        };
        record_steps.retain(|&s| s < horizon);
        record_steps.push(horizon);
        record_steps.dedup();

        let mut rng = replication_rng(master_seed, replication);
        let mut probs = vec![0.0; self.n_vertices];
        let mut draws = vec![0.0; self.n_vertices];
        let mut records: Vec<(u64, Vec<f64>)> = Vec::with_capacity(record_steps.len());
        let mut next_record = 0usize;

        for n in 0..=horizon {
            if next_record < record_steps.len() && record_steps[next_record] == n {
                records.push((n, state.z.clone()));
                next_record += 1;
            }
            if n == horizon {
                break;
            }
            bernoulli_round(
                &self.wt_flat,
                self.n_vertices,
                &state.z,
                &mut probs,
                &mut draws,
                &mut rng,
            );
            update_in_place(&mut state.z, &draws, self.rates[n as usize], variant);
            state.n += 1;
        }

        Ok(Trajectory {
            schedule: self.sched,
            n_vertices: self.n_vertices,
            z0: z0.to_vec(),
            records,
            final_state: state,
            master_seed,
            replication,
        })
    }
}

/// One-shot simulation; see `Simulator` for the replication-sharing form.
#[allow(clippy::too_many_arguments)]
pub fn simulate(
    net: &WeightedNetwork,
    sched: &ReinforcementSchedule,
    z0: &[f64],
    horizon: u64,
    stride: &Stride,
    variant: Option<ForcingVariant>,
    master_seed: u64,
    replication: u64,
) -> Result<Trajectory, DynamicsError> {
    Simulator::new(net, sched, horizon)?.run(z0, stride, variant, master_seed, replication)
}

/// Split Z into its Perron component z~ = N^{-1/2} v1^T Z and the
/// remainder Z^ = Z - z~ 1.
pub fn project(spec: &SpectralData, z: &[f64]) -> Result<(f64, Vec<f64>), DynamicsError> {
    let n = spec.n_vertices();
    if z.len() != n {
        return Err(DynamicsError::DimensionMismatch(format!(
            "state has {} entries for {}-vertex spectral data",
            z.len(),
            n
        )));
    }
    let inv_sqrt_n = 1.0 / (n as f64).sqrt();
    let v1 = spec.v1();
    let mut z_tilde = 0.0;
    for k in 0..n {
        z_tilde += v1[k] * z[k];
    }
    z_tilde *= inv_sqrt_n;
    let z_hat = z.iter().map(|&x| x - z_tilde).collect();
    Ok((z_tilde, z_hat))
}

/// Exact finite law of Z_{n_max}, by exhausting all X-sequences.
#[derive(Debug, Clone)]
pub struct ExactDistribution {
    pub n_vertices: usize,
    pub n_steps: u32,
    /// (probability, state) pairs; states are exact f64 outcomes of the
    /// recursion, aggregated over paths that collide bit-for-bit.
    pub atoms: Vec<(f64, Vec<f64>)>,
}

impl ExactDistribution {
    pub fn total_probability(&self) -> f64 {
        self.atoms.iter().map(|(p, _)| p).sum()
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.n_vertices];
        for (p, z) in &self.atoms {
            for (mj, zj) in m.iter_mut().zip(z.iter()) {
                *mj += p * zj;
            }
        }
        m
    }

    /// Index atoms by the exact bit pattern of their state, for matching
    /// sampled states against the exact law.
    pub fn atom_lookup(&self) -> HashMap<Vec<u64>, usize> {
        self.atoms
            .iter()
            .enumerate()
            .map(|(i, (_, z))| (z.iter().map(|x| x.to_bits()).collect(), i))
            .collect()
    }

    pub fn to_json(&self) -> String {
        let atoms = self
            .atoms
            .iter()
            .map(|(p, z)| AtomJson { p: *p, z: z.clone() })
            .collect();
        serde_json::to_string_pretty(&ExactDistributionJson {
            n_vertices: self.n_vertices,
            n_steps: self.n_steps,
            atoms,
        })
        .expect("distribution serialization cannot fail")
    }

    pub fn from_json(s: &str) -> Result<Self, DynamicsError> {
        let parsed: ExactDistributionJson = serde_json::from_str(s)
            .map_err(|e| DynamicsError::DimensionMismatch(format!("bad distribution JSON: {e}")))?;
        for a in &parsed.atoms {
            if a.z.len() != parsed.n_vertices {
                return Err(DynamicsError::DimensionMismatch(format!(
                    "atom has {} entries for {} vertices",
                    a.z.len(),
                    parsed.n_vertices
                )));
            }
        }
        Ok(ExactDistribution {
            n_vertices: parsed.n_vertices,
            n_steps: parsed.n_steps,
            atoms: parsed.atoms.into_iter().map(|a| (a.p, a.z)).collect(),
        })
    }
}

#[derive(Serialize, Deserialize)]
struct AtomJson {
    p: f64,
    z: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ExactDistributionJson {
    n_vertices: usize,
    n_steps: u32,
    atoms: Vec<AtomJson>,
}

const ENUM_BUDGET_BITS: u32 = 24;

/// Walk all 2^(N n_max) Bernoulli outcomes, multiplying conditional
/// probabilities along each path. Zero-probability branches are pruned, so
/// absorbing starts cost nothing.
pub fn enumerate_exact(
    net: &WeightedNetwork,
    sched: &ReinforcementSchedule,
    z0: &[f64],
    n_max: u32,
) -> Result<ExactDistribution, DynamicsError> {
    let n_vertices = net.n_vertices();
    if z0.len() != n_vertices {
        return Err(DynamicsError::DimensionMismatch(format!(
            "initial state has {} entries for a {}-vertex network",
            z0.len(),
            n_vertices
        )));
    }
    let bits = (n_vertices as u64) * (n_max as u64);
    if bits > ENUM_BUDGET_BITS as u64 {
        return Err(DynamicsError::TooLarge {
            max: ENUM_BUDGET_BITS,
            got: bits,
        });
    }
    let state = SystemState::new(z0.to_vec())?;
    let wt = net.transpose_flat();
    let mut acc: HashMap<Vec<u64>, f64> = HashMap::new();
    let mut z_buf = state.z;
    recurse(
        &wt,
        n_vertices,
        sched,
        0,
        n_max,
        1.0,
        &mut z_buf,
        &mut acc,
    );
    let mut atoms: Vec<(f64, Vec<f64>)> = acc
        .into_iter()
        .map(|(bits, p)| (p, bits.into_iter().map(f64::from_bits).collect()))
        .collect();
    atoms.sort_by(|a, b| {
        a.1.partial_cmp(&b.1)
            .expect("enumeration states are finite")
    });
    Ok(ExactDistribution {
        n_vertices,
        n_steps: n_max,
        atoms,
    })
}

#[allow(clippy::too_many_arguments)]
fn recurse(
    wt: &[f64],
    n_vertices: usize,
    sched: &ReinforcementSchedule,
    step_idx: u32,
    n_max: u32,
    prob: f64,
    z: &mut Vec<f64>,
    acc: &mut HashMap<Vec<u64>, f64>,
) {
    if step_idx == n_max {
        let key: Vec<u64> = z.iter().map(|x| x.to_bits()).collect();
        *acc.entry(key).or_insert(0.0) += prob;
        return;
    }
    let mut probs = vec![0.0; n_vertices];
    for j in 0..n_vertices {
        let row = &wt[j * n_vertices..(j + 1) * n_vertices];
        probs[j] = row.iter().zip(z.iter()).map(|(w, zk)| w * zk).sum();
    }
    let r = sched.rate(step_idx as u64);
    let saved = z.clone();
    for pattern in 0u32..(1 << n_vertices) {
        let mut branch = prob;
        for (j, &pj) in probs.iter().enumerate() {
            let x = (pattern >> j) & 1 == 1;
            branch *= if x { pj } else { 1.0 - pj };
            if branch == 0.0 {
                break;
            }
        }
        if branch == 0.0 {
            continue;
        }
        for (j, zj) in z.iter_mut().enumerate() {
            let x = if (pattern >> j) & 1 == 1 { 1.0 } else { 0.0 };
            *zj = (1.0 - r) * *zj + r * x;
        }
        recurse(wt, n_vertices, sched, step_idx + 1, n_max, branch, z, acc);
        z.copy_from_slice(&saved);
    }
}
