//! Finite MDPs, persistence options and the execution of an option as a
//! partial history.
//!
//! Everything downstream (operators, learners, replay decomposition, chain
//! analysis) consumes the types defined here. A [`TabularMdp`] is immutable
//! once built; episodic interaction goes through the [`Environment`] trait so
//! that the learners can also drive environments with hidden continuous state
//! (MountainCar observed through a grid).

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

/// Index of a state in `0..n_states`.
pub type State = usize;
/// Index of a primitive action in `0..n_actions`.
pub type Action = usize;

const STOCHASTIC_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MdpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("transition row (state {state}, action {action}) is not a distribution: sum {sum}")]
    NotStochastic { state: State, action: Action, sum: f64 },
    #[error("reward (state {state}, action {action}) is not finite")]
    NonFiniteReward { state: State, action: Action },
    #[error("terminal state {0} must self-loop with probability 1 and reward 0")]
    TerminalNotAbsorbing(State),
    #[error("discount factor {0} outside [0, 1]")]
    InvalidDiscount(f64),
    #[error("state {0} is terminal; reset the episode before executing an option")]
    TerminalStart(State),
    #[error("state {0} out of range")]
    StateOutOfRange(State),
    #[error("option (action {action}, persistence {persistence}) invalid for {n_actions} actions and K_max {k_max}")]
    InvalidOption { action: Action, persistence: usize, n_actions: usize, k_max: usize },
    #[error("reward window offset {offset} length {length} exceeds executed length {executed}")]
    WindowOutOfRange { offset: usize, length: usize, executed: usize },
    #[error("malformed partial history: {0}")]
    MalformedHistory(String),
    #[error("policy row for state {state} sums to {sum}")]
    PolicyNotNormalized { state: State, sum: f64 },
    #[error("no non-terminal start state")]
    NoStartStates,
}

/// Finite MDP with dense `S x A x S` transition tensor and `S x A` rewards.
///
/// Terminal states are absorbing with zero reward. `gamma` is allowed to be 1
/// for episodic tasks with a step cap; the operators require `gamma < 1` only
/// implicitly through convergence.
#[derive(Debug, Clone)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    transition: Vec<f64>,
    reward: Vec<f64>,
    terminal: Vec<bool>,
    goal: Vec<bool>,
    start_states: Vec<State>,
    gamma: f64,
    r_max: f64,
    support: Vec<Vec<(State, f64)>>,
}

impl TabularMdp {
    /// Validates and builds an MDP. `transition[(s * n_actions + a) * n_states + s']`
    /// holds `P(s'|s,a)`; `reward[s * n_actions + a]` holds `r(s,a)`.
    ///
    /// Start states default to every non-terminal state; goals default to
    /// none.
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        terminal: Vec<bool>,
        gamma: f64,
    ) -> Result<Self, MdpError> {
        if n_states == 0 || n_actions == 0 {
            return Err(MdpError::Dimension("empty state or action space".into()));
        }
        if transition.len() != n_states * n_actions * n_states {
            return Err(MdpError::Dimension(format!(
                "transition has {} entries, expected {}",
                transition.len(),
                n_states * n_actions * n_states
            )));
        }
        if reward.len() != n_states * n_actions {
            return Err(MdpError::Dimension(format!(
                "reward has {} entries, expected {}",
                reward.len(),
                n_states * n_actions
            )));
        }
        if terminal.len() != n_states {
            return Err(MdpError::Dimension("terminal mask length".into()));
        }
        if !(0.0..=1.0).contains(&gamma) {
            return Err(MdpError::InvalidDiscount(gamma));
        }

        let mut support = Vec::with_capacity(n_states * n_actions);
        let mut r_max: f64 = 0.0;
        for s in 0..n_states {
            for a in 0..n_actions {
                let row = &transition[(s * n_actions + a) * n_states..][..n_states];
                let mut sum = 0.0;
                let mut entries = Vec::new();
                for (next, &p) in row.iter().enumerate() {
                    if !(0.0..=1.0 + STOCHASTIC_TOL).contains(&p) {
                        return Err(MdpError::NotStochastic { state: s, action: a, sum: p });
                    }
                    sum += p;
                    if p > 0.0 {
                        entries.push((next, p));
                    }
                }
                if (sum - 1.0).abs() > STOCHASTIC_TOL {
                    return Err(MdpError::NotStochastic { state: s, action: a, sum });
                }
                let r = reward[s * n_actions + a];
                if !r.is_finite() {
                    return Err(MdpError::NonFiniteReward { state: s, action: a });
                }
                if terminal[s] && (row[s] != 1.0 || r != 0.0) {
                    return Err(MdpError::TerminalNotAbsorbing(s));
                }
                r_max = r_max.max(r.abs());
                support.push(entries);
            }
        }

        let start_states: Vec<State> = (0..n_states).filter(|&s| !terminal[s]).collect();
        Ok(Self {
            n_states,
            n_actions,
            transition,
            reward,
            goal: vec![false; n_states],
            terminal,
            start_states,
            gamma,
            r_max,
            support,
        })
    }

    /// Restricts episode starts to `states` (sampled uniformly on reset).
    pub fn with_start_states(mut self, states: Vec<State>) -> Result<Self, MdpError> {
        if states.is_empty() {
            return Err(MdpError::NoStartStates);
        }
        for &s in &states {
            if s >= self.n_states {
                return Err(MdpError::StateOutOfRange(s));
            }
            if self.terminal[s] {
                return Err(MdpError::TerminalStart(s));
            }
        }
        self.start_states = states;
        Ok(self)
    }

    /// Marks goal states. Goals are reported by [`Environment::is_goal`] and
    /// used for success-rate evaluation; they must also be terminal.
    pub fn with_goals(mut self, goal: Vec<bool>) -> Result<Self, MdpError> {
        if goal.len() != self.n_states {
            return Err(MdpError::Dimension("goal mask length".into()));
        }
        if let Some(s) = (0..self.n_states).find(|&s| goal[s] && !self.terminal[s]) {
            return Err(MdpError::Dimension(format!("goal state {s} is not terminal")));
        }
        self.goal = goal;
        Ok(self)
    }

    /// Same MDP with a different discount factor.
    pub fn with_gamma(mut self, gamma: f64) -> Result<Self, MdpError> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(MdpError::InvalidDiscount(gamma));
        }
        self.gamma = gamma;
        Ok(self)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Largest absolute one-step reward.
    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn transition(&self, s: State, a: Action, next: State) -> f64 {
        self.transition[(s * self.n_actions + a) * self.n_states + next]
    }

    pub fn transition_row(&self, s: State, a: Action) -> &[f64] {
        &self.transition[(s * self.n_actions + a) * self.n_states..][..self.n_states]
    }

    /// Non-zero entries of `P(.|s,a)` in increasing state order.
    pub fn support(&self, s: State, a: Action) -> &[(State, f64)] {
        &self.support[s * self.n_actions + a]
    }

    pub fn reward(&self, s: State, a: Action) -> f64 {
        self.reward[s * self.n_actions + a]
    }

    pub fn is_terminal(&self, s: State) -> bool {
        self.terminal[s]
    }

    pub fn terminal_mask(&self) -> &[bool] {
        &self.terminal
    }

    pub fn is_goal(&self, s: State) -> bool {
        self.goal[s]
    }

    pub fn start_states(&self) -> &[State] {
        &self.start_states
    }

    /// Whether every `(s, a)` row is a single unit mass.
    pub fn is_deterministic(&self) -> bool {
        self.support.iter().all(|row| row.len() == 1)
    }

    /// Samples `s' ~ P(.|s,a)`. Always consumes exactly one uniform draw, so
    /// deterministic and stochastic rows advance the stream identically.
    pub fn sample_next<R: Rng + ?Sized>(&self, s: State, a: Action, rng: &mut R) -> State {
        let u: f64 = rng.random();
        let row = self.support(s, a);
        let mut acc = 0.0;
        for &(next, p) in row {
            acc += p;
            if u < acc {
                return next;
            }
        }
        row.last().map(|&(next, _)| next).unwrap_or(s)
    }

    /// Runs `option` from `state`; see [`execute_option`].
    pub fn execute_option<R: Rng + ?Sized>(
        &self,
        state: State,
        option: PersistenceOption,
        rng: &mut R,
    ) -> Result<PartialHistory, MdpError> {
        if state >= self.n_states {
            return Err(MdpError::StateOutOfRange(state));
        }
        let mut env = MdpEnv::at(self, state);
        execute_option(&mut env, option, None, rng)
    }
}

/// Result of a single primitive step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub next: State,
    pub reward: f64,
    pub terminal: bool,
}

/// Episodic interaction over a finite (possibly aggregated) state space.
pub trait Environment {
    fn n_states(&self) -> usize;
    fn n_actions(&self) -> usize;
    /// Starts a new episode and returns the initial state.
    fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> State;
    fn state(&self) -> State;
    fn step<R: Rng + ?Sized>(&mut self, action: Action, rng: &mut R) -> StepOutcome;
    fn is_terminal(&self, s: State) -> bool;
    fn is_goal(&self, s: State) -> bool;
}

/// A [`TabularMdp`] together with a current state.
#[derive(Debug, Clone)]
pub struct MdpEnv<'a> {
    mdp: &'a TabularMdp,
    state: State,
}

impl<'a> MdpEnv<'a> {
    pub fn new(mdp: &'a TabularMdp) -> Self {
        let state = mdp.start_states.first().copied().unwrap_or(0);
        Self { mdp, state }
    }

    pub fn at(mdp: &'a TabularMdp, state: State) -> Self {
        Self { mdp, state }
    }

    pub fn mdp(&self) -> &'a TabularMdp {
        self.mdp
    }
}

impl Environment for MdpEnv<'_> {
    fn n_states(&self) -> usize {
        self.mdp.n_states
    }

    fn n_actions(&self) -> usize {
        self.mdp.n_actions
    }

    fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> State {
        let starts = &self.mdp.start_states;
        self.state = if starts.len() == 1 { starts[0] } else { starts[rng.random_range(0..starts.len())] };
        self.state
    }

    fn state(&self) -> State {
        self.state
    }

    fn step<R: Rng + ?Sized>(&mut self, action: Action, rng: &mut R) -> StepOutcome {
        let s = self.state;
        let next = self.mdp.sample_next(s, action, rng);
        self.state = next;
        StepOutcome { next, reward: self.mdp.reward(s, action), terminal: self.mdp.terminal[next] }
    }

    fn is_terminal(&self, s: State) -> bool {
        self.mdp.terminal[s]
    }

    fn is_goal(&self, s: State) -> bool {
        self.mdp.goal[s]
    }
}

/// Decision to play `action` for `persistence` consecutive steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PersistenceOption {
    pub action: Action,
    pub persistence: usize,
}

impl PersistenceOption {
    pub fn new(action: Action, persistence: usize, n_actions: usize, k_max: usize) -> Result<Self, MdpError> {
        if action >= n_actions || persistence == 0 || persistence > k_max {
            return Err(MdpError::InvalidOption { action, persistence, n_actions, k_max });
        }
        Ok(Self { action, persistence })
    }

    /// Position in the flattened option space, `action * k_max + persistence - 1`.
    pub fn index(&self, k_max: usize) -> usize {
        self.action * k_max + self.persistence - 1
    }

    pub fn from_index(index: usize, k_max: usize) -> Self {
        Self { action: index / k_max, persistence: index % k_max + 1 }
    }
}

/// States and rewards observed while executing one persistence option.
///
/// `states` holds `s_t .. s_{t+executed}` and `rewards` holds
/// `r_{t+1} .. r_{t+executed}`, undiscounted. Execution stops early when a
/// terminal state is entered or when the episode step limit is hit.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialHistory {
    action: Action,
    states: Vec<State>,
    rewards: Vec<f64>,
    sampled_persistence: usize,
    truncated_by_terminal: bool,
    truncated_by_limit: bool,
}

impl PartialHistory {
    /// Builds a history from recorded parts, checking the length invariants.
    pub fn from_parts(
        action: Action,
        states: Vec<State>,
        rewards: Vec<f64>,
        sampled_persistence: usize,
        truncated_by_terminal: bool,
        truncated_by_limit: bool,
    ) -> Result<Self, MdpError> {
        let executed = rewards.len();
        if states.len() != executed + 1 {
            return Err(MdpError::MalformedHistory(format!(
                "{} states for {} rewards",
                states.len(),
                executed
            )));
        }
        if executed > sampled_persistence {
            return Err(MdpError::MalformedHistory("executed length exceeds sampled persistence".into()));
        }
        if executed < sampled_persistence && !truncated_by_terminal && !truncated_by_limit {
            return Err(MdpError::MalformedHistory("short history without a truncation cause".into()));
        }
        if truncated_by_terminal && executed == 0 {
            return Err(MdpError::MalformedHistory("terminal truncation of an empty history".into()));
        }
        Ok(Self { action, states, rewards, sampled_persistence, truncated_by_terminal, truncated_by_limit })
    }

    pub fn action(&self) -> Action {
        self.action
    }

    pub fn start_state(&self) -> State {
        self.states[0]
    }

    pub fn end_state(&self) -> State {
        self.states[self.states.len() - 1]
    }

    pub fn states(&self) -> &[State] {
        &self.states
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    /// Persistence requested by the option (κ).
    pub fn sampled_persistence(&self) -> usize {
        self.sampled_persistence
    }

    /// Number of primitive steps actually executed (κ̄).
    pub fn executed_length(&self) -> usize {
        self.rewards.len()
    }

    /// The last recorded state is terminal.
    pub fn truncated_by_terminal(&self) -> bool {
        self.truncated_by_terminal
    }

    /// Execution was cut by the episode step limit.
    pub fn truncated_by_limit(&self) -> bool {
        self.truncated_by_limit
    }

    /// `Σ_{i<length} γ^i · rewards[offset + i]`.
    pub fn discounted_cumulative_reward(&self, offset: usize, length: usize, gamma: f64) -> Result<f64, MdpError> {
        if offset + length > self.rewards.len() {
            return Err(MdpError::WindowOutOfRange { offset, length, executed: self.rewards.len() });
        }
        Ok(discounted_sum(&self.rewards[offset..offset + length], gamma))
    }
}

pub(crate) fn discounted_sum(rewards: &[f64], gamma: f64) -> f64 {
    let mut total = 0.0;
    let mut discount = 1.0;
    for &r in rewards {
        total += discount * r;
        discount *= gamma;
    }
    total
}

/// Repeats `option.action` from the environment's current state for up to
/// `option.persistence` steps, or fewer if a terminal state is entered or
/// `step_limit` primitive steps have been taken.
pub fn execute_option<E: Environment, R: Rng + ?Sized>(
    env: &mut E,
    option: PersistenceOption,
    step_limit: Option<usize>,
    rng: &mut R,
) -> Result<PartialHistory, MdpError> {
    let start = env.state();
    if env.is_terminal(start) {
        return Err(MdpError::TerminalStart(start));
    }
    if option.action >= env.n_actions() || option.persistence == 0 {
        return Err(MdpError::InvalidOption {
            action: option.action,
            persistence: option.persistence,
            n_actions: env.n_actions(),
            k_max: option.persistence,
        });
    }
    let mut states = Vec::with_capacity(option.persistence + 1);
    let mut rewards = Vec::with_capacity(option.persistence);
    states.push(start);
    let mut terminal = false;
    let mut limited = false;
    for taken in 0..option.persistence {
        if step_limit.is_some_and(|limit| taken >= limit) {
            limited = true;
            break;
        }
        let outcome = env.step(option.action, rng);
        states.push(outcome.next);
        rewards.push(outcome.reward);
        if outcome.terminal {
            terminal = true;
            break;
        }
    }
    Ok(PartialHistory {
        action: option.action,
        states,
        rewards,
        sampled_persistence: option.persistence,
        truncated_by_terminal: terminal,
        truncated_by_limit: limited,
    })
}

/// State-option value table `Q(s, a, k)` with `k` in `1..=k_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct OptionQTable {
    n_states: usize,
    n_actions: usize,
    k_max: usize,
    values: Vec<f64>,
}

impl OptionQTable {
    pub fn filled(n_states: usize, n_actions: usize, k_max: usize, value: f64) -> Self {
        assert!(k_max >= 1, "k_max must be at least 1");
        Self { n_states, n_actions, k_max, values: vec![value; n_states * n_actions * k_max] }
    }

    pub fn zeros(n_states: usize, n_actions: usize, k_max: usize) -> Self {
        Self::filled(n_states, n_actions, k_max, 0.0)
    }

    pub fn from_fn(
        n_states: usize,
        n_actions: usize,
        k_max: usize,
        mut f: impl FnMut(State, Action, usize) -> f64,
    ) -> Self {
        let mut table = Self::zeros(n_states, n_actions, k_max);
        for s in 0..n_states {
            for a in 0..n_actions {
                for k in 1..=k_max {
                    table.set(s, a, k, f(s, a, k));
                }
            }
        }
        table
    }

    /// i.i.d. standard normal entries, drawn in `(s, a, k)` order.
    pub fn standard_normal<R: Rng + ?Sized>(n_states: usize, n_actions: usize, k_max: usize, rng: &mut R) -> Self {
        let mut table = Self::zeros(n_states, n_actions, k_max);
        for v in &mut table.values {
            *v = StandardNormal.sample(rng);
        }
        table
    }

    pub fn from_values(n_states: usize, n_actions: usize, k_max: usize, values: Vec<f64>) -> Result<Self, MdpError> {
        if k_max == 0 || values.len() != n_states * n_actions * k_max {
            return Err(MdpError::Dimension(format!(
                "{} values for {}x{}x{}",
                values.len(),
                n_states,
                n_actions,
                k_max
            )));
        }
        Ok(Self { n_states, n_actions, k_max, values })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    /// Number of options `|A| * K_max`.
    pub fn n_options(&self) -> usize {
        self.n_actions * self.k_max
    }

    #[inline]
    fn index(&self, s: State, a: Action, k: usize) -> usize {
        debug_assert!(k >= 1 && k <= self.k_max, "persistence {k} out of 1..={}", self.k_max);
        (s * self.n_actions + a) * self.k_max + (k - 1)
    }

    #[inline]
    pub fn get(&self, s: State, a: Action, k: usize) -> f64 {
        self.values[self.index(s, a, k)]
    }

    #[inline]
    pub fn set(&mut self, s: State, a: Action, k: usize, value: f64) {
        let i = self.index(s, a, k);
        self.values[i] = value;
    }

    #[inline]
    pub fn get_mut(&mut self, s: State, a: Action, k: usize) -> &mut f64 {
        let i = self.index(s, a, k);
        &mut self.values[i]
    }

    /// Values of every option at `s`, laid out as [`PersistenceOption::index`].
    pub fn option_values(&self, s: State) -> &[f64] {
        let width = self.n_options();
        &self.values[s * width..(s + 1) * width]
    }

    /// `max_{(a,k)} Q(s, a, k)`.
    pub fn best_value(&self, s: State) -> f64 {
        self.option_values(s).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Sets every entry of each state flagged in `mask` to zero.
    pub fn zero_states(&mut self, mask: &[bool]) {
        let width = self.n_options();
        for (s, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
            self.values[s * width..(s + 1) * width].fill(0.0);
        }
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.n_states == other.n_states && self.n_actions == other.n_actions && self.k_max == other.k_max
    }

    /// `‖self − other‖∞`.
    pub fn sup_distance(&self, other: &Self) -> f64 {
        assert!(self.same_shape(other), "table shapes differ");
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// `max_{s,a} |self(s,a,k) − other(s,a,k)|`.
    pub fn sup_distance_at(&self, other: &Self, k: usize) -> f64 {
        assert!(self.same_shape(other), "table shapes differ");
        let mut worst: f64 = 0.0;
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                worst = worst.max((self.get(s, a, k) - other.get(s, a, k)).abs());
            }
        }
        worst
    }

    /// The `k`-persistence slice as an `S x A` row-major vector.
    pub fn persistence_slice(&self, k: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_states * self.n_actions);
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                out.push(self.get(s, a, k));
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Stationary Markov policy over persistence options, stored as one
/// probability row of length `|A| * K_max` per state.
#[derive(Debug, Clone, PartialEq)]
pub struct OptionPolicy {
    n_states: usize,
    n_actions: usize,
    k_max: usize,
    probs: Vec<f64>,
}

impl OptionPolicy {
    pub fn new(n_states: usize, n_actions: usize, k_max: usize, probs: Vec<f64>) -> Result<Self, MdpError> {
        let width = n_actions * k_max;
        if probs.len() != n_states * width {
            return Err(MdpError::Dimension("policy table size".into()));
        }
        for s in 0..n_states {
            let row = &probs[s * width..(s + 1) * width];
            let sum: f64 = row.iter().sum();
            if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) || (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(MdpError::PolicyNotNormalized { state: s, sum });
            }
        }
        Ok(Self { n_states, n_actions, k_max, probs })
    }

    /// Uniform over all `|A| * K_max` options in every state.
    pub fn uniform(n_states: usize, n_actions: usize, k_max: usize) -> Self {
        let width = n_actions * k_max;
        Self { n_states, n_actions, k_max, probs: vec![1.0 / width as f64; n_states * width] }
    }

    /// The ε-greedy policy induced by `q`: mass `1 − ε` split uniformly over
    /// the argmax set, plus `ε` spread uniformly over all options.
    pub fn epsilon_greedy(q: &OptionQTable, epsilon: f64) -> Self {
        let width = q.n_options();
        let mut probs = Vec::with_capacity(q.n_states() * width);
        for s in 0..q.n_states() {
            let values = q.option_values(s);
            let best = q.best_value(s);
            let ties = values.iter().filter(|&&v| v == best).count() as f64;
            for &v in values {
                let greedy = if v == best { (1.0 - epsilon) / ties } else { 0.0 };
                probs.push(greedy + epsilon / width as f64);
            }
        }
        Self { n_states: q.n_states(), n_actions: q.n_actions(), k_max: q.k_max(), probs }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn distribution(&self, s: State) -> &[f64] {
        let width = self.n_actions * self.k_max;
        &self.probs[s * width..(s + 1) * width]
    }

    pub fn probability(&self, s: State, option: PersistenceOption) -> f64 {
        self.distribution(s)[option.index(self.k_max)]
    }

    /// Options with positive probability at `s`.
    pub fn support(&self, s: State) -> Vec<PersistenceOption> {
        self.distribution(s)
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(i, _)| PersistenceOption::from_index(i, self.k_max))
            .collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, s: State, rng: &mut R) -> PersistenceOption {
        let u: f64 = rng.random();
        let row = self.distribution(s);
        let mut acc = 0.0;
        let mut last = 0;
        for (i, &p) in row.iter().enumerate() {
            if p > 0.0 {
                last = i;
                acc += p;
                if u < acc {
                    return PersistenceOption::from_index(i, self.k_max);
                }
            }
        }
        PersistenceOption::from_index(last, self.k_max)
    }
}
