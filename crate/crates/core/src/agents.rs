//! Learning agents over persistence options.
//!
//! [`train_perq`] runs persistent Q-learning: every executed option's partial
//! history is replayed backwards through [`all_persistence_update`], which
//! updates every sub-segment of the history at its own persistence and
//! bootstraps the longer persistences. [`train_msa_q`] drops the bootstrap
//! updates, and [`train_q_learning`] is the plain one-step learner over
//! primitive actions. [`synchronous_train`] is the idealized variant in
//! which every cell is updated each iteration from fresh model samples.

use std::time::Instant;

use rand::Rng;
use thiserror::Error;

use crate::mdp::{
    discounted_sum, execute_option, Action, Environment, MdpEnv, MdpError, OptionQTable, PartialHistory,
    PersistenceOption, State, TabularMdp,
};
use crate::{seeded_rng, SeededRng};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparams(String),
    #[error("table shape does not match the environment: {0}")]
    Shape(String),
    #[error(transparent)]
    Mdp(#[from] MdpError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsilonSchedule {
    /// `ε_t = base^t`.
    Exponential { base: f64 },
    /// Linear from `start` to `end` over the first `fraction` of the run, then flat.
    Linear { start: f64, end: f64, fraction: f64 },
    Constant(f64),
}

impl EpsilonSchedule {
    /// `ε` at decay index `t` of a run with `horizon` decay units.
    pub fn value(&self, t: usize, horizon: usize) -> f64 {
        match *self {
            EpsilonSchedule::Exponential { base } => base.powi(t.min(i32::MAX as usize) as i32),
            EpsilonSchedule::Linear { start, end, fraction } => {
                let span = fraction * horizon as f64;
                let progress = if span > 0.0 { t as f64 / span } else { 1.0 };
                if progress >= 1.0 {
                    end
                } else {
                    start + (end - start) * progress
                }
            }
            EpsilonSchedule::Constant(eps) => eps,
        }
    }

    fn validate(&self) -> Result<(), AgentError> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        let ok = match *self {
            EpsilonSchedule::Exponential { base } => unit(base),
            EpsilonSchedule::Linear { start, end, fraction } => unit(start) && unit(end) && fraction >= 0.0,
            EpsilonSchedule::Constant(eps) => unit(eps),
        };
        if ok {
            Ok(())
        } else {
            Err(AgentError::InvalidHyperparams(format!("ε schedule {self:?} leaves [0, 1]")))
        }
    }
}

/// What one unit of ε decay is.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecayUnit {
    Episode,
    Step,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QInit {
    StandardNormal,
    Zeros,
    Constant(f64),
}

impl QInit {
    /// Table initialized per `self`, with terminal states zeroed.
    pub fn table<R: Rng + ?Sized>(&self, n_states: usize, n_actions: usize, k_max: usize, terminal: &[bool], rng: &mut R) -> OptionQTable {
        let mut q = match *self {
            QInit::StandardNormal => OptionQTable::standard_normal(n_states, n_actions, k_max, rng),
            QInit::Zeros => OptionQTable::zeros(n_states, n_actions, k_max),
            QInit::Constant(c) => OptionQTable::filled(n_states, n_actions, k_max, c),
        };
        q.zero_states(terminal);
        q
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon: EpsilonSchedule,
    pub decay_unit: DecayUnit,
    pub k_max: usize,
    pub episodes: usize,
    /// Primitive steps per episode.
    pub step_cap: usize,
    pub q_init: QInit,
    /// Keep a copy of the table every this many episodes.
    pub snapshot_every: Option<usize>,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            alpha: 0.01,
            gamma: 0.99,
            epsilon: EpsilonSchedule::Exponential { base: 0.99 },
            decay_unit: DecayUnit::Episode,
            k_max: 8,
            episodes: 600,
            step_cap: 100,
            q_init: QInit::StandardNormal,
            snapshot_every: None,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<(), AgentError> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(AgentError::InvalidHyperparams(format!("alpha = {} outside (0, 1]", self.alpha)));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(AgentError::InvalidHyperparams(format!("gamma = {} outside [0, 1]", self.gamma)));
        }
        if self.k_max == 0 {
            return Err(AgentError::InvalidHyperparams("k_max must be at least 1".into()));
        }
        if self.step_cap == 0 {
            return Err(AgentError::InvalidHyperparams("step_cap must be at least 1".into()));
        }
        if self.snapshot_every == Some(0) {
            return Err(AgentError::InvalidHyperparams("snapshot_every must be positive".into()));
        }
        self.epsilon.validate()
    }

    fn epsilon_at(&self, episode: usize, step: usize) -> f64 {
        match self.decay_unit {
            DecayUnit::Episode => self.epsilon.value(episode, self.episodes),
            DecayUnit::Step => self.epsilon.value(step, self.episodes * self.step_cap),
        }
    }
}

/// Per-episode results of one training run.
#[derive(Debug, Clone, Default)]
pub struct RunRecord {
    pub seed: u64,
    /// Discounted return of each episode.
    pub returns: Vec<f64>,
    /// Primitive steps of each episode.
    pub steps: Vec<usize>,
    pub reached_goal: Vec<bool>,
    pub wall_clock_secs: Vec<f64>,
    /// `(episode, table after that episode)`.
    pub snapshots: Vec<(usize, OptionQTable)>,
}

impl RunRecord {
    fn new(seed: u64, episodes: usize) -> Self {
        Self {
            seed,
            returns: Vec::with_capacity(episodes),
            steps: Vec::with_capacity(episodes),
            reached_goal: Vec::with_capacity(episodes),
            wall_clock_secs: Vec::with_capacity(episodes),
            snapshots: Vec::new(),
        }
    }

    pub fn episodes(&self) -> usize {
        self.returns.len()
    }

    /// Mean return over the last `n` episodes.
    pub fn tail_mean_return(&self, n: usize) -> f64 {
        let tail = &self.returns[self.returns.len().saturating_sub(n)..];
        tail.iter().sum::<f64>() / tail.len().max(1) as f64
    }

    fn push(&mut self, ret: f64, steps: usize, goal: bool, started: Instant) {
        self.returns.push(ret);
        self.steps.push(steps);
        self.reached_goal.push(goal);
        self.wall_clock_secs.push(started.elapsed().as_secs_f64());
    }
}

// Timing is excluded so that reruns compare equal.
impl PartialEq for RunRecord {
    fn eq(&self, other: &Self) -> bool {
        self.seed == other.seed
            && self.returns == other.returns
            && self.steps == other.steps
            && self.reached_goal == other.reached_goal
            && self.snapshots == other.snapshots
    }
}

/// Index into `values` chosen ε-greedily: one uniform draw decides whether
/// to explore; exploring draws a uniform index, exploiting draws among the
/// maximizers only when there is more than one.
pub fn epsilon_greedy_index<R: Rng + ?Sized>(values: &[f64], epsilon: f64, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    if u < epsilon {
        return rng.random_range(0..values.len());
    }
    let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ties: Vec<usize> = (0..values.len()).filter(|&i| values[i] == best).collect();
    if ties.len() == 1 {
        ties[0]
    } else {
        ties[rng.random_range(0..ties.len())]
    }
}

/// Samples from the ε-greedy policy over all `|A| * K_max` options at `state`.
pub fn epsilon_greedy_option<R: Rng + ?Sized>(q: &OptionQTable, state: State, epsilon: f64, rng: &mut R) -> PersistenceOption {
    PersistenceOption::from_index(epsilon_greedy_index(q.option_values(state), epsilon, rng), q.k_max())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateMode {
    /// Optimal updates on every sub-segment plus bootstrap updates.
    AllPersistence,
    /// Optimal updates on every sub-segment only.
    MsaOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateKind {
    Optimal,
    Bootstrap,
}

/// One cell write performed by [`all_persistence_update`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateEvent {
    pub kind: UpdateKind,
    /// Offset of the updated state within the history.
    pub offset: usize,
    /// Offset of the state the target continues from.
    pub end_offset: usize,
    pub state: State,
    pub action: Action,
    pub persistence: usize,
    pub target: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct UpdateCounts {
    pub optimal: usize,
    pub bootstrap: usize,
}

/// Replays a partial history `s_0 .. s_κ̄` backwards into `q`.
///
/// For `j = κ̄ .. 1` and `i = j-1 .. 0`, with `k = j - i` and `r^k` the
/// discounted reward from `s_i` to `s_j`:
/// `Q(s_i,a,k) ← (1-α) Q(s_i,a,k) + α (r^k + γ^k max Q(s_j))`, then for
/// `d = 1 .. K-k`: `Q(s_i,a,k+d) ← (1-α) Q(s_i,a,k+d) + α (r^k + γ^k Q(s_j,a,d))`.
/// Continuations from a terminal `s_j` are zero.
pub fn all_persistence_update(
    q: &mut OptionQTable,
    history: &PartialHistory,
    alpha: f64,
    gamma: f64,
    mode: UpdateMode,
    mut observer: impl FnMut(&UpdateEvent),
) -> UpdateCounts {
    let kappa_bar = history.executed_length();
    let k_max = q.k_max();
    let a = history.action();
    let states = history.states();
    let rewards = history.rewards();
    let mut counts = UpdateCounts::default();
    for j in (1..=kappa_bar).rev() {
        let end = states[j];
        let terminal_end = j == kappa_bar && history.truncated_by_terminal();
        for i in (0..j).rev() {
            let k = j - i;
            if k > k_max {
                continue;
            }
            let s = states[i];
            let r = discounted_sum(&rewards[i..j], gamma);
            let gk = gamma.powi(k as i32);
            let continuation = if terminal_end { 0.0 } else { q.best_value(end) };
            let target = r + gk * continuation;
            let cell = q.get_mut(s, a, k);
            *cell = (1.0 - alpha) * *cell + alpha * target;
            counts.optimal += 1;
            observer(&UpdateEvent { kind: UpdateKind::Optimal, offset: i, end_offset: j, state: s, action: a, persistence: k, target });
            if mode == UpdateMode::MsaOnly {
                continue;
            }
            for d in 1..=k_max - k {
                let continuation = if terminal_end { 0.0 } else { q.get(end, a, d) };
                let target = r + gk * continuation;
                let cell = q.get_mut(s, a, k + d);
                *cell = (1.0 - alpha) * *cell + alpha * target;
                counts.bootstrap += 1;
                observer(&UpdateEvent {
                    kind: UpdateKind::Bootstrap,
                    offset: i,
                    end_offset: j,
                    state: s,
                    action: a,
                    persistence: k + d,
                    target,
                });
            }
        }
    }
    counts
}

fn terminal_mask<E: Environment>(env: &E) -> Vec<bool> {
    (0..env.n_states()).map(|s| env.is_terminal(s)).collect()
}

/// Option-level learner shared by PerQ and MSA-Q.
pub fn train_option_agent<E: Environment>(
    env: &mut E,
    hyper: &Hyperparams,
    mode: UpdateMode,
    seed: u64,
) -> Result<(OptionQTable, RunRecord), AgentError> {
    hyper.validate()?;
    let mut rng = seeded_rng(seed);
    let mut q = hyper.q_init.table(env.n_states(), env.n_actions(), hyper.k_max, &terminal_mask(env), &mut rng);
    let mut record = RunRecord::new(seed, hyper.episodes);
    let mut global_step = 0;
    for episode in 0..hyper.episodes {
        let started = Instant::now();
        let mut s = env.reset(&mut rng);
        let (mut ret, mut discount, mut t, mut goal) = (0.0, 1.0, 0, false);
        while t < hyper.step_cap && !env.is_terminal(s) {
            let eps = hyper.epsilon_at(episode, global_step);
            let option = epsilon_greedy_option(&q, s, eps, &mut rng);
            let history = execute_option(env, option, Some(hyper.step_cap - t), &mut rng)?;
            all_persistence_update(&mut q, &history, hyper.alpha, hyper.gamma, mode, |_| {});
            let kappa_bar = history.executed_length();
            ret += discount * discounted_sum(history.rewards(), hyper.gamma);
            discount *= hyper.gamma.powi(kappa_bar as i32);
            t += kappa_bar;
            global_step += kappa_bar;
            s = history.end_state();
            goal = env.is_goal(s);
        }
        record.push(ret, t, goal, started);
        if hyper.snapshot_every.is_some_and(|n| (episode + 1) % n == 0) {
            record.snapshots.push((episode, q.clone()));
        }
    }
    Ok((q, record))
}

/// Persistent Q-learning with all-persistence updates.
pub fn train_perq<E: Environment>(env: &mut E, hyper: &Hyperparams, seed: u64) -> Result<(OptionQTable, RunRecord), AgentError> {
    train_option_agent(env, hyper, UpdateMode::AllPersistence, seed)
}

/// The multi-step-action ablation: no bootstrap updates.
pub fn train_msa_q<E: Environment>(env: &mut E, hyper: &Hyperparams, seed: u64) -> Result<(OptionQTable, RunRecord), AgentError> {
    train_option_agent(env, hyper, UpdateMode::MsaOnly, seed)
}

/// One-step Q-learning over primitive actions; `hyper.k_max` is ignored and
/// the returned table has `K_max = 1`.
pub fn train_q_learning<E: Environment>(env: &mut E, hyper: &Hyperparams, seed: u64) -> Result<(OptionQTable, RunRecord), AgentError> {
    hyper.validate()?;
    let mut rng = seeded_rng(seed);
    let mut q = hyper.q_init.table(env.n_states(), env.n_actions(), 1, &terminal_mask(env), &mut rng);
    let mut record = RunRecord::new(seed, hyper.episodes);
    let mut global_step = 0;
    for episode in 0..hyper.episodes {
        let started = Instant::now();
        let mut s = env.reset(&mut rng);
        let (mut ret, mut discount, mut t, mut goal) = (0.0, 1.0, 0, false);
        while t < hyper.step_cap && !env.is_terminal(s) {
            let eps = hyper.epsilon_at(episode, global_step);
            let a = epsilon_greedy_index(q.option_values(s), eps, &mut rng);
            let out = env.step(a, &mut rng);
            let continuation = if out.terminal { 0.0 } else { q.best_value(out.next) };
            let target = out.reward + hyper.gamma * continuation;
            let cell = q.get_mut(s, a, 1);
            *cell = (1.0 - hyper.alpha) * *cell + hyper.alpha * target;
            ret += discount * out.reward;
            discount *= hyper.gamma;
            t += 1;
            global_step += 1;
            s = out.next;
            goal = env.is_goal(s);
        }
        record.push(ret, t, goal, started);
        if hyper.snapshot_every.is_some_and(|n| (episode + 1) % n == 0) {
            record.snapshots.push((episode, q.clone()));
        }
    }
    Ok((q, record))
}

/// Result of a greedy rollout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeOutcome {
    pub discounted_return: f64,
    pub steps: usize,
    pub reached_goal: bool,
}

/// Runs one episode choosing greedy options (ties broken uniformly).
pub fn greedy_rollout<E: Environment, R: Rng + ?Sized>(
    env: &mut E,
    q: &OptionQTable,
    gamma: f64,
    step_cap: usize,
    rng: &mut R,
) -> Result<EpisodeOutcome, AgentError> {
    if q.n_states() != env.n_states() || q.n_actions() != env.n_actions() {
        return Err(AgentError::Shape(format!(
            "table is {}x{}, environment is {}x{}",
            q.n_states(),
            q.n_actions(),
            env.n_states(),
            env.n_actions()
        )));
    }
    let mut s = env.reset(rng);
    let (mut ret, mut discount, mut t) = (0.0, 1.0, 0);
    while t < step_cap && !env.is_terminal(s) {
        let option = epsilon_greedy_option(q, s, 0.0, rng);
        let history = execute_option(env, option, Some(step_cap - t), rng)?;
        ret += discount * discounted_sum(history.rewards(), gamma);
        discount *= gamma.powi(history.executed_length() as i32);
        t += history.executed_length();
        s = history.end_state();
    }
    Ok(EpisodeOutcome { discounted_return: ret, steps: t, reached_goal: env.is_goal(s) })
}

/// Fraction of `episodes` greedy rollouts that reach a goal.
pub fn greedy_success_rate<E: Environment>(
    env: &mut E,
    q: &OptionQTable,
    gamma: f64,
    step_cap: usize,
    episodes: usize,
    seed: u64,
) -> Result<f64, AgentError> {
    let mut rng = seeded_rng(seed);
    let mut hits = 0;
    for _ in 0..episodes {
        hits += usize::from(greedy_rollout(env, q, gamma, step_cap, &mut rng)?.reached_goal);
    }
    Ok(hits as f64 / episodes.max(1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyncMode {
    PerQ,
    Vanilla,
}

/// Error curves of a synchronous run; index 0 is the initial table.
#[derive(Debug, Clone, PartialEq)]
pub struct SyncCurves {
    /// `max_{s,a,k} |Q_t - Q_ref|`.
    pub linf: Vec<f64>,
    /// `per_k[k-1][t] = max_{s,a} |Q_t(s,a,k) - Q_ref(s,a,k)|`.
    pub per_k: Vec<Vec<f64>>,
}

fn record_errors(q: &OptionQTable, reference: &OptionQTable, curves: &mut SyncCurves) {
    curves.linf.push(q.sup_distance(reference));
    for (k, curve) in curves.per_k.iter_mut().enumerate() {
        curve.push(q.sup_distance_at(reference, k + 1));
    }
}

/// Synchronous learning: every iteration draws one next state per `(s, a)`,
/// chains those draws to get a `κ̄`-step persisted transition from every
/// cell, and updates all cells at once from the previous table.
///
/// `reference` is `Q*_K` for [`SyncMode::PerQ`] (its `K_max` sets the table
/// size) and `Q*` with `K_max = 1` for [`SyncMode::Vanilla`]. With
/// `q0 = None` the start table is i.i.d. standard normal drawn from the seed.
pub fn synchronous_train(
    mdp: &TabularMdp,
    reference: &OptionQTable,
    alpha: f64,
    iterations: usize,
    mode: SyncMode,
    seed: u64,
    q0: Option<OptionQTable>,
) -> Result<(OptionQTable, SyncCurves), AgentError> {
    let (n_states, n_actions) = (mdp.n_states(), mdp.n_actions());
    let k_max = reference.k_max();
    if reference.n_states() != n_states || reference.n_actions() != n_actions {
        return Err(AgentError::Shape("reference table does not match the MDP".into()));
    }
    if mode == SyncMode::Vanilla && k_max != 1 {
        return Err(AgentError::Shape("vanilla reference must have K_max = 1".into()));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(AgentError::InvalidHyperparams(format!("alpha = {alpha} outside (0, 1]")));
    }
    let mut rng: SeededRng = seeded_rng(seed);
    let mut q = match q0 {
        Some(q) if q.same_shape(reference) => q,
        Some(_) => return Err(AgentError::Shape("initial table does not match the reference".into())),
        None => OptionQTable::standard_normal(n_states, n_actions, k_max, &mut rng),
    };
    q.zero_states(mdp.terminal_mask());
    let gamma = mdp.gamma();
    let powers: Vec<f64> = (0..=k_max).map(|k| gamma.powi(k as i32)).collect();
    let mut curves = SyncCurves { linf: Vec::with_capacity(iterations + 1), per_k: vec![Vec::with_capacity(iterations + 1); k_max] };
    record_errors(&q, reference, &mut curves);

    let mut sample = vec![0; n_states * n_actions];
    let mut chain = Vec::with_capacity(k_max + 1);
    let mut partial = Vec::with_capacity(k_max + 1);
    for _ in 0..iterations {
        for s in 0..n_states {
            for a in 0..n_actions {
                sample[s * n_actions + a] = mdp.sample_next(s, a, &mut rng);
            }
        }
        let best: Vec<f64> = (0..n_states).map(|s| q.best_value(s)).collect();
        let mut next = q.clone();
        for s in (0..n_states).filter(|&s| !mdp.is_terminal(s)) {
            for a in 0..n_actions {
                // chain[i] is the state after i persisted steps, partial[i] = r^i.
                chain.clear();
                partial.clear();
                chain.push(s);
                partial.push(0.0);
                while chain.len() <= k_max {
                    let cur = *chain.last().unwrap();
                    if mdp.is_terminal(cur) {
                        break;
                    }
                    let i = chain.len() - 1;
                    partial.push(partial[i] + powers[i] * mdp.reward(cur, a));
                    chain.push(sample[cur * n_actions + a]);
                }
                let kappa_bar = chain.len() - 1;
                for k in 1..=k_max {
                    let target = if k <= kappa_bar {
                        let end = chain[k];
                        let cont = if mdp.is_terminal(end) { 0.0 } else { best[end] };
                        partial[k] + powers[k] * cont
                    } else {
                        partial[kappa_bar]
                    };
                    let cell = next.get_mut(s, a, k);
                    *cell = (1.0 - alpha) * *cell + alpha * target;
                }
            }
        }
        q = next;
        record_errors(&q, reference, &mut curves);
    }
    Ok((q, curves))
}

/// Convenience wrapper: PerQ on a tabular MDP started from its start states.
pub fn train_perq_on(mdp: &TabularMdp, hyper: &Hyperparams, seed: u64) -> Result<(OptionQTable, RunRecord), AgentError> {
    train_perq(&mut MdpEnv::new(mdp), hyper, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::{build_gridworld, BorderMode, GridSpec, RewardScheme, RIGHT};
    use crate::operators::{apply_optimal_operator, value_iteration_options, PersistentModels};

    /// `0 -> 1 -> 2 -> 3 (terminal)` with a single action and rewards 1, 2, 3.
    fn line() -> TabularMdp {
        let mut p = vec![0.0; 16];
        p[1] = 1.0;
        p[4 + 2] = 1.0;
        p[8 + 3] = 1.0;
        p[12 + 3] = 1.0;
        TabularMdp::new(4, 1, p, vec![1.0, 2.0, 3.0, 0.0], vec![false, false, false, true], 0.5).unwrap()
    }

    fn history(states: Vec<State>, rewards: Vec<f64>, kappa: usize, terminal: bool) -> PartialHistory {
        PartialHistory::from_parts(0, states, rewards, kappa, terminal, false).unwrap()
    }

    #[test]
    fn update_counts_and_order() {
        let mut q = OptionQTable::from_fn(4, 1, 3, |s, _, k| (10 * s + k) as f64);
        let h = history(vec![0, 1, 2], vec![1.0, 2.0], 2, false);
        let mut events = Vec::new();
        let counts = all_persistence_update(&mut q, &h, 1.0, 0.5, UpdateMode::AllPersistence, |e| events.push(*e));
        assert_eq!(counts, UpdateCounts { optimal: 3, bootstrap: 5 });
        let order: Vec<(UpdateKind, usize, usize)> = events.iter().map(|e| (e.kind, e.offset, e.persistence)).collect();
        use UpdateKind::*;
        assert_eq!(
            order,
            vec![
                (Optimal, 1, 1),
                (Bootstrap, 1, 2),
                (Bootstrap, 1, 3),
                (Optimal, 0, 2),
                (Bootstrap, 0, 3),
                (Optimal, 0, 1),
                (Bootstrap, 0, 2),
                (Bootstrap, 0, 3),
            ]
        );
    }

    #[test]
    fn msa_skips_bootstrap() {
        let mut q = OptionQTable::zeros(4, 1, 5);
        let h = history(vec![0, 1, 2, 3], vec![1.0, 2.0, 3.0], 3, true);
        let counts = all_persistence_update(&mut q, &h, 0.5, 0.5, UpdateMode::MsaOnly, |_| {});
        assert_eq!(counts, UpdateCounts { optimal: 6, bootstrap: 0 });
    }

    #[test]
    fn single_step_is_q_learning() {
        let mut q = OptionQTable::from_fn(4, 1, 1, |s, _, _| s as f64);
        let h = history(vec![1, 2], vec![2.0], 1, false);
        all_persistence_update(&mut q, &h, 0.25, 0.5, UpdateMode::AllPersistence, |_| {});
        assert_eq!(q.get(1, 0, 1), 0.75 * 1.0 + 0.25 * (2.0 + 0.5 * 2.0));
    }

    #[test]
    fn terminal_continuation_is_zero() {
        let mut q = OptionQTable::filled(4, 1, 3, 7.0);
        let h = history(vec![1, 2, 3], vec![2.0, 3.0], 3, true);
        all_persistence_update(&mut q, &h, 1.0, 0.5, UpdateMode::AllPersistence, |_| {});
        assert_eq!(q.get(2, 0, 1), 3.0);
        assert_eq!(q.get(2, 0, 3), 3.0);
        assert_eq!(q.get(1, 0, 2), 2.0 + 0.5 * 3.0);
    }

    #[test]
    fn full_history_with_unit_alpha_matches_operator() {
        // On the line MDP a single 3-step history visits every state, so the
        // optimal updates at offset 0 match the exact backup of the old table.
        let mdp = line();
        let models = PersistentModels::new(&mdp, 3).unwrap();
        let mut q = OptionQTable::from_fn(4, 1, 3, |s, _, k| if s == 3 { 0.0 } else { (s + k) as f64 * 0.1 });
        let exact = apply_optimal_operator(&q, &models).unwrap();
        let h = history(vec![0, 1, 2, 3], vec![1.0, 2.0, 3.0], 3, true);
        all_persistence_update(&mut q, &h, 1.0, 0.5, UpdateMode::MsaOnly, |_| {});
        assert_eq!(q.get(0, 0, 3), exact.get(0, 0, 3));
        assert_eq!(q.get(1, 0, 2), exact.get(1, 0, 2));
        assert_eq!(q.get(2, 0, 1), exact.get(2, 0, 1));
    }

    #[test]
    fn epsilon_schedules() {
        let e = EpsilonSchedule::Exponential { base: 0.99 };
        assert_eq!(e.value(0, 600), 1.0);
        assert!((e.value(2, 600) - 0.9801).abs() < 1e-15);
        let l = EpsilonSchedule::Linear { start: 1.0, end: 0.1, fraction: 0.5 };
        assert_eq!(l.value(0, 100), 1.0);
        assert!((l.value(25, 100) - 0.55).abs() < 1e-12);
        assert_eq!(l.value(80, 100), 0.1);
        assert!(EpsilonSchedule::Constant(1.5).validate().is_err());
    }

    #[test]
    fn greedy_index_without_exploration() {
        let mut rng = seeded_rng(1);
        for _ in 0..100 {
            assert_eq!(epsilon_greedy_index(&[0.0, 2.0, 1.0], 0.0, &mut rng), 1);
        }
    }

    #[test]
    fn hyperparams_are_validated() {
        let bad = Hyperparams { alpha: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = Hyperparams { k_max: 0, ..Default::default() };
        assert!(bad.validate().is_err());
        assert!(Hyperparams::default().validate().is_ok());
    }

    #[test]
    fn perq_with_unit_persistence_matches_q_learning() {
        let spec = GridSpec::parse("S...\n.H..\n...G", RewardScheme::GoalHole, BorderMode::Blocking, 0.9).unwrap();
        let mdp = build_gridworld(&spec).unwrap();
        let hyper = Hyperparams { k_max: 1, episodes: 40, step_cap: 50, alpha: 0.3, ..Default::default() };
        let (qa, ra) = train_perq(&mut MdpEnv::new(&mdp), &hyper, 9).unwrap();
        let (qb, rb) = train_q_learning(&mut MdpEnv::new(&mdp), &hyper, 9).unwrap();
        assert_eq!(qa, qb);
        assert_eq!(ra, rb);
    }

    #[test]
    fn sync_unit_alpha_follows_value_iteration() {
        let spec = GridSpec::parse("S..\n.H.\n..G", RewardScheme::SyncGrid, BorderMode::PenalizeAndTerminate, 0.9).unwrap();
        let mdp = build_gridworld(&spec).unwrap();
        let reference = value_iteration_options(&mdp, 3, 1e-12, 100_000).unwrap().q;
        let models = PersistentModels::new(&mdp, 3).unwrap();
        let (_, curves) = synchronous_train(&mdp, &reference, 1.0, 5, SyncMode::PerQ, 3, None).unwrap();
        let mut q = OptionQTable::standard_normal(mdp.n_states(), 4, 3, &mut seeded_rng(3));
        q.zero_states(mdp.terminal_mask());
        for t in 0..=5 {
            assert!((curves.linf[t] - q.sup_distance(&reference)).abs() < 1e-12, "iteration {t}");
            q = apply_optimal_operator(&q, &models).unwrap();
        }
    }

    #[test]
    fn greedy_rollout_on_corridor() {
        let spec = GridSpec::parse("S..G", RewardScheme::GoalHole, BorderMode::Blocking, 0.9).unwrap();
        let mdp = build_gridworld(&spec).unwrap();
        let q = OptionQTable::from_fn(4, 4, 2, |_, a, k| if a == RIGHT && k == 2 { 1.0 } else { 0.0 });
        let out = greedy_rollout(&mut MdpEnv::new(&mdp), &q, 0.9, 10, &mut seeded_rng(0)).unwrap();
        assert!(out.reached_goal);
        assert_eq!(out.steps, 3);
        assert!((out.discounted_return - 0.81).abs() < 1e-12);
    }
}
