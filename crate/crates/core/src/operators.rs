//! Exact persistence operators on a known model.
//!
//! `P_k` and `r_k` describe `k` repetitions of the same action:
//! `P_k = (P^δ)^{k-1} P` and `r_k = Σ_{i<k} γ^i (P^δ)^i r`. On top of them
//! this module provides the optimal operator `T*_K`, the bootstrap operator
//! `T^κ`, their indicator split `H^κ`, value iteration over options and
//! exact policy evaluation.

use faer::prelude::*;
use faer::Mat;
use rayon::prelude::*;
use thiserror::Error;

use crate::mdp::{Action, MdpError, OptionPolicy, OptionQTable, State, TabularMdp};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITERS: usize = 100_000;

// Below this many table cells a sweep runs on the calling thread.
const PARALLEL_CELLS: usize = 1 << 14;

#[derive(Debug, Error)]
pub enum OperatorError {
    #[error("persistence must be at least 1, got {0}")]
    ZeroPersistence(usize),
    #[error("persistence {kappa} exceeds K_max = {k_max}")]
    PersistenceOutOfRange { kappa: usize, k_max: usize },
    #[error("table shape does not match the model: {0}")]
    Shape(String),
    #[error("tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
    #[error("value iteration did not converge in {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("policy evaluation system is singular")]
    Singular,
    #[error(transparent)]
    Mdp(#[from] MdpError),
}

/// `P_k` and `r_k` for one persistence `k`. Transition rows are kept sparse,
/// sorted by successor state.
#[derive(Debug, Clone, PartialEq)]
pub struct KPersistentModel {
    n_states: usize,
    n_actions: usize,
    k: usize,
    discount: f64,
    rows: Vec<Vec<(State, f64)>>,
    reward: Vec<f64>,
}

impl KPersistentModel {
    fn base(mdp: &TabularMdp) -> Self {
        let n = mdp.n_states() * mdp.n_actions();
        let mut rows = Vec::with_capacity(n);
        let mut reward = Vec::with_capacity(n);
        for s in 0..mdp.n_states() {
            for a in 0..mdp.n_actions() {
                rows.push(mdp.support(s, a).to_vec());
                reward.push(mdp.reward(s, a));
            }
        }
        Self { n_states: mdp.n_states(), n_actions: mdp.n_actions(), k: 1, discount: mdp.gamma(), rows, reward }
    }

    /// `P_{k+1}(s'|s,a) = Σ_{s''} P_k(s''|s,a) P(s'|s'',a)` and
    /// `r_{k+1} = r_k + γ^k Σ_{s''} P_k(s''|s,a) r(s'',a)`.
    fn extend(&self, mdp: &TabularMdp) -> Self {
        let gamma = mdp.gamma();
        let gamma_k = gamma.powi(self.k as i32);
        let mut rows = Vec::with_capacity(self.rows.len());
        let mut reward = Vec::with_capacity(self.reward.len());
        let mut dense = vec![0.0; self.n_states];
        let mut touched = Vec::new();
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let idx = s * self.n_actions + a;
                let mut r = self.reward[idx];
                for &(mid, p_mid) in &self.rows[idx] {
                    r += gamma_k * p_mid * mdp.reward(mid, a);
                    for &(next, p) in mdp.support(mid, a) {
                        if dense[next] == 0.0 {
                            touched.push(next);
                        }
                        dense[next] += p_mid * p;
                    }
                }
                touched.sort_unstable();
                let row: Vec<(State, f64)> = touched
                    .iter()
                    .map(|&n| (n, std::mem::take(&mut dense[n])))
                    .filter(|&(_, p)| p > 0.0)
                    .collect();
                touched.clear();
                rows.push(row);
                reward.push(r);
            }
        }
        Self {
            n_states: self.n_states,
            n_actions: self.n_actions,
            k: self.k + 1,
            discount: gamma_k * gamma,
            rows,
            reward,
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// `γ^k`.
    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn reward(&self, s: State, a: Action) -> f64 {
        self.reward[s * self.n_actions + a]
    }

    /// Non-zero entries of `P_k(·|s,a)`.
    pub fn row(&self, s: State, a: Action) -> &[(State, f64)] {
        &self.rows[s * self.n_actions + a]
    }

    pub fn transition(&self, s: State, a: Action, next: State) -> f64 {
        let row = self.row(s, a);
        row.binary_search_by_key(&next, |&(n, _)| n).map_or(0.0, |i| row[i].1)
    }

    /// `Σ_{s'} P_k(s'|s,a) f(s')`.
    pub fn expect(&self, s: State, a: Action, f: impl Fn(State) -> f64) -> f64 {
        self.row(s, a).iter().map(|&(n, p)| p * f(n)).sum()
    }
}

/// `P_k`, `r_k` for a single `k`.
pub fn k_persistent_model(mdp: &TabularMdp, k: usize) -> Result<KPersistentModel, OperatorError> {
    if k == 0 {
        return Err(OperatorError::ZeroPersistence(k));
    }
    let mut model = KPersistentModel::base(mdp);
    while model.k < k {
        model = model.extend(mdp);
    }
    Ok(model)
}

/// The models for `k = 1..=k_max`, built incrementally.
#[derive(Debug, Clone)]
pub struct PersistentModels {
    models: Vec<KPersistentModel>,
    terminal: Vec<bool>,
}

impl PersistentModels {
    pub fn new(mdp: &TabularMdp, k_max: usize) -> Result<Self, OperatorError> {
        if k_max == 0 {
            return Err(OperatorError::ZeroPersistence(0));
        }
        let mut models = Vec::with_capacity(k_max);
        models.push(KPersistentModel::base(mdp));
        for _ in 1..k_max {
            let next = models.last().unwrap().extend(mdp);
            models.push(next);
        }
        Ok(Self { models, terminal: mdp.terminal_mask().to_vec() })
    }

    pub fn k_max(&self) -> usize {
        self.models.len()
    }

    pub fn n_states(&self) -> usize {
        self.models[0].n_states
    }

    pub fn n_actions(&self) -> usize {
        self.models[0].n_actions
    }

    pub fn terminal_mask(&self) -> &[bool] {
        &self.terminal
    }

    pub fn get(&self, k: usize) -> &KPersistentModel {
        &self.models[k - 1]
    }

    fn check(&self, q: &OptionQTable) -> Result<(), OperatorError> {
        if q.n_states() != self.n_states() || q.n_actions() != self.n_actions() || q.k_max() != self.k_max() {
            return Err(OperatorError::Shape(format!(
                "table is {}x{}x{}, models are {}x{}x{}",
                q.n_states(),
                q.n_actions(),
                q.k_max(),
                self.n_states(),
                self.n_actions(),
                self.k_max()
            )));
        }
        Ok(())
    }

    fn check_kappa(&self, kappa: usize) -> Result<(), OperatorError> {
        if kappa == 0 {
            return Err(OperatorError::ZeroPersistence(0));
        }
        if kappa > self.k_max() {
            return Err(OperatorError::PersistenceOutOfRange { kappa, k_max: self.k_max() });
        }
        Ok(())
    }
}

/// Fills `out` state by state; `cell(s, a, k)` computes one entry.
fn sweep(out: &mut OptionQTable, cell: impl Fn(State, Action, usize) -> f64 + Sync) {
    let n_actions = out.n_actions();
    let k_max = out.k_max();
    let width = n_actions * k_max;
    let fill = |(s, chunk): (usize, &mut [f64])| {
        for a in 0..n_actions {
            for k in 1..=k_max {
                chunk[a * k_max + k - 1] = cell(s, a, k);
            }
        }
    };
    if out.values().len() >= PARALLEL_CELLS {
        out.values_mut().par_chunks_mut(width).enumerate().for_each(fill);
    } else {
        out.values_mut().chunks_mut(width).enumerate().for_each(fill);
    }
}

fn optimal_cell(models: &PersistentModels, best: &[f64], s: State, a: Action, k: usize) -> f64 {
    let m = models.get(k);
    m.reward(s, a) + m.discount() * m.expect(s, a, |n| best[n])
}

fn bootstrap_cell(q: &OptionQTable, m: &KPersistentModel, s: State, a: Action, k: usize) -> f64 {
    let kappa = m.k();
    m.reward(s, a) + m.discount() * m.expect(s, a, |n| q.get(n, a, k - kappa))
}

fn best_values(q: &OptionQTable) -> Vec<f64> {
    (0..q.n_states()).map(|s| q.best_value(s)).collect()
}

/// `(T*_K q)(s,a,k) = r_k(s,a) + γ^k Σ_{s'} P_k(s'|s,a) max_{a',k'} q(s',a',k')`.
pub fn apply_optimal_operator(q: &OptionQTable, models: &PersistentModels) -> Result<OptionQTable, OperatorError> {
    models.check(q)?;
    let best = best_values(q);
    let mut out = q.clone();
    sweep(&mut out, |s, a, k| optimal_cell(models, &best, s, a, k));
    Ok(out)
}

/// `(T^κ q)(s,a,k) = r_κ(s,a) + γ^κ Σ_{s'} P_κ(s'|s,a) q(s',a,k-κ)` for
/// `k > κ`; entries with `k ≤ κ` are copied from `q`.
pub fn apply_bootstrap_operator(q: &OptionQTable, models: &PersistentModels, kappa: usize) -> Result<OptionQTable, OperatorError> {
    models.check(q)?;
    models.check_kappa(kappa)?;
    let m = models.get(kappa);
    let mut out = q.clone();
    sweep(&mut out, |s, a, k| if k > kappa { bootstrap_cell(q, m, s, a, k) } else { q.get(s, a, k) });
    Ok(out)
}

/// `H^κ = 1_{k≤κ} T*_K + 1_{k>κ} T^κ`.
pub fn apply_all_persistence_operator(
    q: &OptionQTable,
    models: &PersistentModels,
    kappa: usize,
) -> Result<OptionQTable, OperatorError> {
    models.check(q)?;
    models.check_kappa(kappa)?;
    let best = best_values(q);
    let m = models.get(kappa);
    let mut out = q.clone();
    sweep(&mut out, |s, a, k| {
        if k <= kappa {
            optimal_cell(models, &best, s, a, k)
        } else {
            bootstrap_cell(q, m, s, a, k)
        }
    });
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct ValueIterationResult {
    pub q: OptionQTable,
    pub iterations: usize,
    /// Sup-norm change of the final sweep.
    pub residual: f64,
}

/// Iterates `T*_K` from `q0` until the sup-norm change drops below `tol`.
pub fn value_iteration_from(
    models: &PersistentModels,
    q0: OptionQTable,
    tol: f64,
    max_iters: usize,
) -> Result<ValueIterationResult, OperatorError> {
    if !(tol > 0.0) {
        return Err(OperatorError::InvalidTolerance(tol));
    }
    models.check(&q0)?;
    let mut q = q0;
    let mut residual = f64::INFINITY;
    for it in 1..=max_iters {
        let next = apply_optimal_operator(&q, models)?;
        residual = next.sup_distance(&q);
        q = next;
        if residual < tol {
            log::debug!("value iteration converged after {it} sweeps (residual {residual:e})");
            return Ok(ValueIterationResult { q, iterations: it, residual });
        }
    }
    Err(OperatorError::NotConverged { iterations: max_iters, residual })
}

/// `Q*_K` by value iteration from the zero table.
pub fn value_iteration_options(
    mdp: &TabularMdp,
    k_max: usize,
    tol: f64,
    max_iters: usize,
) -> Result<ValueIterationResult, OperatorError> {
    let models = PersistentModels::new(mdp, k_max)?;
    let q0 = OptionQTable::zeros(mdp.n_states(), mdp.n_actions(), k_max);
    value_iteration_from(&models, q0, tol, max_iters)
}

/// Greedy policy over options: uniform on the argmax set of every state.
pub fn greedy_policy_from_q(q: &OptionQTable) -> OptionPolicy {
    OptionPolicy::epsilon_greedy(q, 0.0)
}

/// `Q^ψ` for a stationary option policy, solving
/// `(I - M) V = b` with `M(s,s') = Σ_{(a,k)} ψ(a,k|s) γ^k P_k(s'|s,a)` and
/// `b(s) = Σ_{(a,k)} ψ(a,k|s) r_k(s,a)`, then `Q = r_k + γ^k P_k V`.
pub fn evaluate_option_policy(models: &PersistentModels, policy: &OptionPolicy) -> Result<OptionQTable, OperatorError> {
    let (n, n_actions, k_max) = (models.n_states(), models.n_actions(), models.k_max());
    if policy.n_states() != n || policy.n_actions() != n_actions || policy.k_max() != k_max {
        return Err(OperatorError::Shape("policy does not match the models".into()));
    }
    let mut system = Mat::<f64>::identity(n, n);
    let mut rhs = Mat::<f64>::zeros(n, 1);
    for s in 0..n {
        for (i, &w) in policy.distribution(s).iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let (a, k) = (i / k_max, i % k_max + 1);
            let m = models.get(k);
            rhs[(s, 0)] += w * m.reward(s, a);
            for &(next, p) in m.row(s, a) {
                system[(s, next)] -= w * m.discount() * p;
            }
        }
    }
    let v = system.partial_piv_lu().solve(&rhs);
    if (0..n).any(|s| !v[(s, 0)].is_finite()) {
        return Err(OperatorError::Singular);
    }
    let mut q = OptionQTable::zeros(n, n_actions, k_max);
    sweep(&mut q, |s, a, k| {
        let m = models.get(k);
        m.reward(s, a) + m.discount() * m.expect(s, a, |x| v[(x, 0)])
    });
    Ok(q)
}
