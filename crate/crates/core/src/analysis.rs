//! Markov-chain diagnostics for persistent exploration policies.
//!
//! A policy that picks an action from `π(·|s)` and a persistence from `ω`
//! induces, over a horizon of `H` steps, the chain
//! `P_H = Σ_{k=1}^{H∧K} ω̃_{k,H∧K} · P_{H-k} · P^π_k` with `P_0 = I`, where
//! `ω̃_{·,j}` is `ω` with all mass beyond `j` folded into `j`. The Kemeny
//! constant of that chain measures how quickly it covers the state space.

use faer::linalg::matmul::matmul;
use faer::prelude::*;
use faer::{c64, Accum, Mat, Par};
use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::environments::{MountainCar, MountainCarParams};
use crate::mdp::{MdpError, TabularMdp};
use crate::operators::{k_persistent_model, OperatorError};
use crate::stream_rng;

/// Eigenvalues closer than this to 1 count as unit eigenvalues.
pub const UNIT_EIGENVALUE_TOL: f64 = 1e-8;
const PROB_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("invalid persistence distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("chain is reducible: {0} eigenvalues within tolerance of 1")]
    Reducible(usize),
    #[error("imaginary part {0:e} of the Kemeny sum does not cancel")]
    ComplexKemeny(f64),
    #[error("eigenvalue computation failed")]
    Eigen,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Mdp(#[from] MdpError),
}

/// Distribution `ω` over persistences `1..=K`.
#[derive(Debug, Clone, PartialEq)]
pub struct PersistenceDistribution {
    omega: Vec<f64>,
}

impl PersistenceDistribution {
    pub fn new(omega: Vec<f64>) -> Result<Self, AnalysisError> {
        if omega.is_empty() {
            return Err(AnalysisError::InvalidDistribution("empty".into()));
        }
        if omega.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(AnalysisError::InvalidDistribution("negative or non-finite mass".into()));
        }
        let sum: f64 = omega.iter().sum();
        if (sum - 1.0).abs() > PROB_TOL {
            return Err(AnalysisError::InvalidDistribution(format!("sums to {sum}")));
        }
        Ok(Self { omega })
    }

    pub fn uniform(k_max: usize) -> Self {
        Self { omega: vec![1.0 / k_max as f64; k_max.max(1)] }
    }

    /// All mass on persistence `k`.
    pub fn point(k: usize) -> Self {
        let mut omega = vec![0.0; k.max(1)];
        omega[k.max(1) - 1] = 1.0;
        Self { omega }
    }

    pub fn k_max(&self) -> usize {
        self.omega.len()
    }

    /// `ω_k` for `k` in `1..=K`.
    pub fn mass(&self, k: usize) -> f64 {
        self.omega[k - 1]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.omega
    }
}

/// `ω̃_{·,j}`: `ω_i` for `i < j` and the remaining mass at `j`. The last
/// entry is `1 - Σ_{i<j} ω_i` with the prefix summed left to right, so the
/// entries sum to exactly 1 in that order. For `j ≥ K`, `ω` is returned.
pub fn reduced_distribution(omega: &PersistenceDistribution, j: usize) -> Result<PersistenceDistribution, AnalysisError> {
    if j == 0 {
        return Err(AnalysisError::InvalidArgument("reduction to 0 steps".into()));
    }
    if j >= omega.k_max() {
        return Ok(omega.clone());
    }
    let mut reduced = omega.omega[..j - 1].to_vec();
    let prefix: f64 = reduced.iter().sum();
    reduced.push(1.0 - prefix);
    Ok(PersistenceDistribution { omega: reduced })
}

fn check_policy(mdp: &TabularMdp, pi: &[f64]) -> Result<(), AnalysisError> {
    let (n, m) = (mdp.n_states(), mdp.n_actions());
    if pi.len() != n * m {
        return Err(AnalysisError::InvalidPolicy(format!("{} entries for {n}x{m}", pi.len())));
    }
    for s in 0..n {
        let row = &pi[s * m..(s + 1) * m];
        let sum: f64 = row.iter().sum();
        if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) || (sum - 1.0).abs() > PROB_TOL {
            return Err(AnalysisError::InvalidPolicy(format!("row {s} sums to {sum}")));
        }
    }
    Ok(())
}

/// Uniform action distribution, `S x A` row-major.
pub fn uniform_action_policy(mdp: &TabularMdp) -> Vec<f64> {
    vec![1.0 / mdp.n_actions() as f64; mdp.n_states() * mdp.n_actions()]
}

/// `P^π_k(s'|s) = Σ_a π(a|s) P_k(s'|s,a)`, with `pi` stored `S x A` row-major.
pub fn policy_chain_k(mdp: &TabularMdp, pi: &[f64], k: usize) -> Result<Mat<f64>, AnalysisError> {
    check_policy(mdp, pi)?;
    let model = k_persistent_model(mdp, k)?;
    let (n, m) = (mdp.n_states(), mdp.n_actions());
    let mut chain = Mat::<f64>::zeros(n, n);
    for s in 0..n {
        for a in 0..m {
            let w = pi[s * m + a];
            if w == 0.0 {
                continue;
            }
            for &(next, p) in model.row(s, a) {
                chain[(s, next)] += w * p;
            }
        }
    }
    Ok(chain)
}

/// `[P^π_1, .., P^π_K]`.
pub fn policy_chains(mdp: &TabularMdp, pi: &[f64], k_max: usize) -> Result<Vec<Mat<f64>>, AnalysisError> {
    (1..=k_max).map(|k| policy_chain_k(mdp, pi, k)).collect()
}

/// `P^{π,ω}_H` by the horizon recursion, memoized on the residual horizon.
/// `chains[k-1]` is `P^π_k`; at least `ω.k_max()` chains are required.
pub fn persistent_chain(chains: &[Mat<f64>], omega: &PersistenceDistribution, horizon: usize) -> Result<Mat<f64>, AnalysisError> {
    if horizon == 0 {
        return Err(AnalysisError::InvalidArgument("horizon must be at least 1".into()));
    }
    let k_max = omega.k_max();
    if chains.len() < k_max.min(horizon) {
        return Err(AnalysisError::InvalidArgument(format!("{} chains for K = {k_max}", chains.len())));
    }
    let n = chains[0].nrows();
    if chains.iter().any(|c| c.nrows() != n || c.ncols() != n) {
        return Err(AnalysisError::InvalidArgument("chains must be square and equally sized".into()));
    }
    // memo[h] = P_h; P_h only depends on h because reducing a reduced
    // distribution equals reducing the original.
    let mut memo: Vec<Mat<f64>> = Vec::with_capacity(horizon + 1);
    memo.push(Mat::identity(n, n));
    for h in 1..=horizon {
        let j = h.min(k_max);
        let weights = reduced_distribution(omega, j)?;
        let mut acc = Mat::<f64>::zeros(n, n);
        for k in 1..=j {
            let w = weights.mass(k);
            if w == 0.0 {
                continue;
            }
            matmul(acc.as_mut(), Accum::Add, memo[h - k].as_ref(), chains[k - 1].as_ref(), w, Par::Seq);
        }
        memo.push(acc);
    }
    Ok(memo.pop().unwrap())
}

pub fn eigenvalues(matrix: &Mat<f64>) -> Result<Vec<c64>, AnalysisError> {
    matrix.eigenvalues().map_err(|_| AnalysisError::Eigen)
}

fn check_square(matrix: &Mat<f64>) -> Result<(), AnalysisError> {
    if matrix.nrows() != matrix.ncols() || matrix.nrows() == 0 {
        return Err(AnalysisError::InvalidArgument("matrix must be square and non-empty".into()));
    }
    Ok(())
}

/// Number of eigenvalues within [`UNIT_EIGENVALUE_TOL`] of 1.
pub fn unit_eigenvalue_count(spectrum: &[c64]) -> usize {
    spectrum.iter().filter(|l| ((l.re - 1.0).powi(2) + l.im.powi(2)).sqrt() < UNIT_EIGENVALUE_TOL).count()
}

/// `Σ 1 / (1 - λ_i)` over the non-unit part of a spectrum.
pub fn kemeny_from_spectrum(spectrum: &[c64]) -> Result<f64, AnalysisError> {
    let units = unit_eigenvalue_count(spectrum);
    if units != 1 {
        return Err(AnalysisError::Reducible(units));
    }
    let (mut re, mut im) = (0.0, 0.0);
    for l in spectrum {
        let (a, b) = (1.0 - l.re, -l.im);
        let norm = a * a + b * b;
        if norm.sqrt() < UNIT_EIGENVALUE_TOL {
            continue;
        }
        re += a / norm;
        im -= b / norm;
    }
    if im.abs() > UNIT_EIGENVALUE_TOL * re.abs().max(1.0) {
        return Err(AnalysisError::ComplexKemeny(im));
    }
    Ok(re)
}

/// Kemeny constant of an irreducible row-stochastic matrix.
pub fn kemeny_constant(matrix: &Mat<f64>) -> Result<f64, AnalysisError> {
    check_square(matrix)?;
    kemeny_from_spectrum(&eigenvalues(matrix)?)
}

fn stationary_unchecked(matrix: &Mat<f64>) -> Vec<f64> {
    // μ (P - I) = 0 with the last equation replaced by Σ μ = 1.
    let n = matrix.nrows();
    let mut system = Mat::<f64>::from_fn(n, n, |i, j| matrix[(j, i)] - if i == j { 1.0 } else { 0.0 });
    for j in 0..n {
        system[(n - 1, j)] = 1.0;
    }
    let mut rhs = Mat::<f64>::zeros(n, 1);
    rhs[(n - 1, 0)] = 1.0;
    let mu = system.partial_piv_lu().solve(&rhs);
    (0..n).map(|i| mu[(i, 0)]).collect()
}

/// Stationary distribution of an irreducible chain.
pub fn stationary_distribution(matrix: &Mat<f64>) -> Result<Vec<f64>, AnalysisError> {
    check_square(matrix)?;
    let units = unit_eigenvalue_count(&eigenvalues(matrix)?);
    if units != 1 {
        return Err(AnalysisError::Reducible(units));
    }
    Ok(stationary_unchecked(matrix))
}

fn entropy_rate(matrix: &Mat<f64>, mu: &[f64]) -> f64 {
    let n = matrix.nrows();
    (0..n)
        .map(|s| {
            let h: f64 = (0..n)
                .map(|t| matrix[(s, t)])
                .filter(|&p| p > 0.0)
                .map(|p| -p * p.ln())
                .sum();
            mu[s] * h
        })
        .sum()
}

/// Entropy rate `Σ_s μ(s) H(P(·|s))` in nats.
pub fn chain_entropy(matrix: &Mat<f64>) -> Result<f64, AnalysisError> {
    let mu = stationary_distribution(matrix)?;
    Ok(entropy_rate(matrix, &mu))
}

#[derive(Debug, Clone)]
pub struct PersistentChainReport {
    pub matrix: Mat<f64>,
    pub horizon: usize,
    pub eigenvalues: Vec<c64>,
    pub kemeny: f64,
    pub entropy: f64,
    pub stationary: Vec<f64>,
}

/// Builds `P^{π,ω}_H` and its spectral summary.
pub fn persistent_chain_report(
    chains: &[Mat<f64>],
    omega: &PersistenceDistribution,
    horizon: usize,
) -> Result<PersistentChainReport, AnalysisError> {
    let matrix = persistent_chain(chains, omega, horizon)?;
    let spectrum = eigenvalues(&matrix)?;
    let kemeny = kemeny_from_spectrum(&spectrum)?;
    let stationary = stationary_unchecked(&matrix);
    let entropy = entropy_rate(&matrix, &stationary);
    Ok(PersistentChainReport { matrix, horizon, eigenvalues: spectrum, kemeny, entropy, stationary })
}

/// Copy of `mdp` in which every terminal state instead moves to the start
/// distribution (uniform over start states) with reward 0, so that episodic
/// tasks induce irreducible chains.
pub fn with_episodic_restart(mdp: &TabularMdp) -> Result<TabularMdp, AnalysisError> {
    let (n, m) = (mdp.n_states(), mdp.n_actions());
    let starts = mdp.start_states();
    if starts.is_empty() {
        return Err(AnalysisError::Mdp(MdpError::NoStartStates));
    }
    let mut transition = Vec::with_capacity(n * m * n);
    let mut reward = Vec::with_capacity(n * m);
    for s in 0..n {
        for a in 0..m {
            if mdp.is_terminal(s) {
                let mut row = vec![0.0; n];
                for &st in starts {
                    row[st] += 1.0 / starts.len() as f64;
                }
                transition.extend(row);
                reward.push(0.0);
            } else {
                transition.extend_from_slice(mdp.transition_row(s, a));
                reward.push(mdp.reward(s, a));
            }
        }
    }
    Ok(TabularMdp::new(n, m, transition, reward, vec![false; n], mdp.gamma())?.with_start_states(starts.to_vec())?)
}

/// How [`kemeny_sweep`] normalizes the Kemeny curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KemenyNormalization {
    /// `Kem(K) / Kem(first K in the sweep)`.
    RatioToFirst,
    /// `(Kem - min) / (max - min)` over the sweep.
    MinMax,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KemenyRow {
    pub k_max: usize,
    pub horizon: usize,
    pub kemeny: f64,
    pub kemeny_normalized: f64,
    pub entropy: f64,
}

/// Kemeny constant and entropy rate of the uniform-persistence chain for
/// every `K_max` in `k_values`.
pub fn kemeny_sweep(
    mdp: &TabularMdp,
    pi: &[f64],
    k_values: &[usize],
    horizon: usize,
    normalization: KemenyNormalization,
) -> Result<Vec<KemenyRow>, AnalysisError> {
    let largest = k_values.iter().copied().max().ok_or_else(|| AnalysisError::InvalidArgument("empty K sweep".into()))?;
    if k_values.contains(&0) {
        return Err(AnalysisError::InvalidArgument("K_max must be positive".into()));
    }
    let chains = policy_chains(mdp, pi, largest.min(horizon))?;
    let mut rows = k_values
        .par_iter()
        .map(|&k| {
            let report = persistent_chain_report(&chains, &PersistenceDistribution::uniform(k), horizon)?;
            Ok(KemenyRow { k_max: k, horizon, kemeny: report.kemeny, kemeny_normalized: f64::NAN, entropy: report.entropy })
        })
        .collect::<Result<Vec<_>, AnalysisError>>()?;
    let first = rows[0].kemeny;
    let lo = rows.iter().map(|r| r.kemeny).fold(f64::INFINITY, f64::min);
    let hi = rows.iter().map(|r| r.kemeny).fold(f64::NEG_INFINITY, f64::max);
    for row in &mut rows {
        row.kemeny_normalized = match normalization {
            KemenyNormalization::RatioToFirst => row.kemeny / first,
            KemenyNormalization::MinMax if hi > lo => (row.kemeny - lo) / (hi - lo),
            KemenyNormalization::MinMax => 0.0,
        };
    }
    Ok(rows)
}

/// Persistence of the random exploration policy in [`visitation_heatmap`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PersistenceSampling {
    /// Uniform in `1..=K_max` at every decision.
    UniformUpTo(usize),
    Fixed(usize),
}

/// Visit counts over the MountainCar position x velocity grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub position_bins: usize,
    pub velocity_bins: usize,
    /// `counts[p * velocity_bins + v]`.
    pub counts: Vec<u64>,
    pub episodes: usize,
    pub goal_episodes: usize,
    pub total_steps: u64,
}

impl Heatmap {
    pub fn goal_fraction(&self) -> f64 {
        self.goal_episodes as f64 / self.episodes.max(1) as f64
    }

    pub fn count(&self, position_bin: usize, velocity_bin: usize) -> u64 {
        self.counts[position_bin * self.velocity_bins + velocity_bin]
    }

    /// `ln(1 + count)` per cell.
    pub fn log_scaled(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| (c as f64).ln_1p()).collect()
    }

    fn empty(params: &MountainCarParams) -> Self {
        Self {
            position_bins: params.position_bins,
            velocity_bins: params.velocity_bins,
            counts: vec![0; params.n_cells()],
            episodes: 0,
            goal_episodes: 0,
            total_steps: 0,
        }
    }

    fn merge(mut self, other: Self) -> Self {
        for (a, b) in self.counts.iter_mut().zip(other.counts) {
            *a += b;
        }
        self.episodes += other.episodes;
        self.goal_episodes += other.goal_episodes;
        self.total_steps += other.total_steps;
        self
    }
}

/// Rolls out the fully random option policy on MountainCar and counts the
/// grid cell entered at every step. Episode `e` uses stream `e` of `seed`, so
/// the result does not depend on the thread count.
pub fn visitation_heatmap(
    params: &MountainCarParams,
    persistence: PersistenceSampling,
    episodes: usize,
    seed: u64,
) -> Result<Heatmap, AnalysisError> {
    params.validate().map_err(|e| AnalysisError::InvalidArgument(e.to_string()))?;
    match persistence {
        PersistenceSampling::UniformUpTo(0) | PersistenceSampling::Fixed(0) => {
            return Err(AnalysisError::InvalidArgument("persistence must be positive".into()))
        }
        _ => {}
    }
    let heatmap = (0..episodes)
        .into_par_iter()
        .map(|e| {
            let mut rng = stream_rng(seed, e as u64);
            let mut car = MountainCar::new(*params).expect("validated parameters");
            let mut map = Heatmap::empty(params);
            map.episodes = 1;
            car.reset(&mut rng);
            let mut t = 0;
            'episode: while t < params.max_episode_steps {
                let action = rng.random_range(0..3);
                let k = match persistence {
                    PersistenceSampling::UniformUpTo(k_max) => rng.random_range(1..=k_max),
                    PersistenceSampling::Fixed(k) => k,
                };
                for _ in 0..k {
                    let out = car.step(action);
                    t += 1;
                    map.total_steps += 1;
                    map.counts[params.cell_of(out.position, out.velocity)] += 1;
                    if out.done {
                        map.goal_episodes = 1;
                        break 'episode;
                    }
                    if t >= params.max_episode_steps {
                        break 'episode;
                    }
                }
            }
            map
        })
        .reduce(|| Heatmap::empty(params), Heatmap::merge);
    Ok(heatmap)
}
