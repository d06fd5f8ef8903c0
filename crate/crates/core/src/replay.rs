//! Persistence-indexed replay.
//!
//! One executed option yields a history `s_0 .. s_κ̄`. Every contiguous
//! segment of it is a valid sub-transition: segments of length `k` go to
//! buffer `D_k` as "full" tuples, and the segments ending at `s_κ̄` that are
//! shorter than `k` go to `D_k` as "tail" tuples whose target bootstraps the
//! same action at the residual persistence. Learning samples every buffer in
//! equal proportion and moves a table toward [`td_target`] computed from a
//! periodically synced frozen copy.

use std::collections::VecDeque;
use std::io::{Read, Write};
use std::time::Instant;

use rand::Rng;
use thiserror::Error;

use crate::agents::{epsilon_greedy_option, AgentError, DecayUnit, Hyperparams, RunRecord};
use crate::mdp::{discounted_sum, execute_option, Action, Environment, OptionQTable, PartialHistory, State};
use crate::seeded_rng;

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("all replay buffers are empty")]
    Empty,
    #[error("tuple with segment length {kappa_bar} drawn from buffer {k}")]
    BufferInvariant { kappa_bar: usize, k: usize },
    #[error("buffer index {k} outside 1..={k_max}")]
    BufferIndex { k: usize, k_max: usize },
    #[error("invalid replay configuration: {0}")]
    Config(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed buffer row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },
    #[error(transparent)]
    Agent(#[from] AgentError),
}

/// A segment of an executed option: `r` is the discounted reward collected
/// over its `kappa_bar` primitive steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubTransition {
    pub s: State,
    pub a: Action,
    pub s_next: State,
    pub r: f64,
    pub kappa_bar: usize,
    pub terminal: bool,
}

/// Bounded FIFO buffers `D_1 .. D_K`.
#[derive(Debug, Clone, PartialEq)]
pub struct PersistenceBuffers {
    buffers: Vec<VecDeque<SubTransition>>,
    capacity: usize,
}

impl PersistenceBuffers {
    pub fn new(k_max: usize, capacity: usize) -> Result<Self, ReplayError> {
        if k_max == 0 || capacity == 0 {
            return Err(ReplayError::Config("k_max and capacity must be positive".into()));
        }
        Ok(Self { buffers: vec![VecDeque::new(); k_max], capacity })
    }

    pub fn k_max(&self) -> usize {
        self.buffers.len()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn buffer(&self, k: usize) -> &VecDeque<SubTransition> {
        &self.buffers[k - 1]
    }

    pub fn len(&self, k: usize) -> usize {
        self.buffers[k - 1].len()
    }

    pub fn total_len(&self) -> usize {
        self.buffers.iter().map(VecDeque::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.buffers.iter().all(VecDeque::is_empty)
    }

    /// Appends to `D_k`, evicting the oldest tuple when full.
    pub fn push(&mut self, k: usize, tuple: SubTransition) -> Result<(), ReplayError> {
        if k == 0 || k > self.k_max() {
            return Err(ReplayError::BufferIndex { k, k_max: self.k_max() });
        }
        if tuple.kappa_bar == 0 || tuple.kappa_bar > k {
            return Err(ReplayError::BufferInvariant { kappa_bar: tuple.kappa_bar, k });
        }
        let buf = &mut self.buffers[k - 1];
        if buf.len() == self.capacity {
            buf.pop_front();
        }
        buf.push_back(tuple);
        Ok(())
    }

    /// Writes `D_k` as CSV with columns `s,a,s_next,r,kappa_bar,terminal`.
    pub fn dump_csv<W: Write>(&self, k: usize, writer: W) -> Result<(), ReplayError> {
        if k == 0 || k > self.k_max() {
            return Err(ReplayError::BufferIndex { k, k_max: self.k_max() });
        }
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["s", "a", "s_next", "r", "kappa_bar", "terminal"])?;
        for t in self.buffer(k) {
            w.write_record([
                t.s.to_string(),
                t.a.to_string(),
                t.s_next.to_string(),
                t.r.to_string(),
                t.kappa_bar.to_string(),
                u8::from(t.terminal).to_string(),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Appends the rows of a [`dump_csv`](Self::dump_csv) file to `D_k`.
    pub fn restore_csv<R: Read>(&mut self, k: usize, reader: R) -> Result<usize, ReplayError> {
        let mut r = csv::Reader::from_reader(reader);
        let mut count = 0;
        for (row, record) in r.records().enumerate() {
            let record = record?;
            let bad = |reason: String| ReplayError::MalformedRow { row, reason };
            if record.len() != 6 {
                return Err(bad(format!("{} fields", record.len())));
            }
            let int = |i: usize| record[i].trim().parse::<usize>().map_err(|e| bad(format!("column {i}: {e}")));
            let tuple = SubTransition {
                s: int(0)?,
                a: int(1)?,
                s_next: int(2)?,
                r: record[3].trim().parse::<f64>().map_err(|e| bad(format!("column 3: {e}")))?,
                kappa_bar: int(4)?,
                terminal: match record[5].trim() {
                    "0" => false,
                    "1" => true,
                    other => return Err(bad(format!("terminal flag `{other}`"))),
                },
            };
            self.push(k, tuple)?;
            count += 1;
        }
        Ok(count)
    }
}

/// Number of tuples [`store_sub_transitions`] produces for a history of
/// executed length `kappa_bar` (with tails).
pub fn sub_transition_count(kappa_bar: usize, k_max: usize) -> usize {
    let full: usize = (1..=kappa_bar.min(k_max)).map(|k| kappa_bar - k + 1).sum();
    let tails: usize = (2..=k_max).map(|k| kappa_bar.min(k - 1)).sum();
    full + tails
}

/// Decomposes `history` into the buffers and returns how many tuples were
/// stored. `store_tails = false` drops the bootstrap tail tuples.
pub fn store_sub_transitions(
    buffers: &mut PersistenceBuffers,
    history: &PartialHistory,
    gamma: f64,
    store_tails: bool,
) -> Result<usize, ReplayError> {
    let kappa_bar = history.executed_length();
    let states = history.states();
    let rewards = history.rewards();
    let a = history.action();
    let ends_terminal = history.truncated_by_terminal();
    let mut stored = 0;
    for k in 1..=buffers.k_max() {
        if k <= kappa_bar {
            for tau in 0..=kappa_bar - k {
                let tuple = SubTransition {
                    s: states[tau],
                    a,
                    s_next: states[tau + k],
                    r: discounted_sum(&rewards[tau..tau + k], gamma),
                    kappa_bar: k,
                    terminal: ends_terminal && tau + k == kappa_bar,
                };
                buffers.push(k, tuple)?;
                stored += 1;
            }
        }
        if store_tails {
            for tau in 1..=kappa_bar.min(k - 1) {
                let tuple = SubTransition {
                    s: states[kappa_bar - tau],
                    a,
                    s_next: states[kappa_bar],
                    r: discounted_sum(&rewards[kappa_bar - tau..], gamma),
                    kappa_bar: tau,
                    terminal: ends_terminal,
                };
                buffers.push(k, tuple)?;
                stored += 1;
            }
        }
    }
    Ok(stored)
}

/// Draws `batch_per_buffer` tuples uniformly with replacement from every
/// non-empty buffer; each comes with the index `k` of its buffer.
pub fn sample_equal_proportion<R: Rng + ?Sized>(
    buffers: &PersistenceBuffers,
    batch_per_buffer: usize,
    rng: &mut R,
) -> Result<Vec<(usize, SubTransition)>, ReplayError> {
    if buffers.is_empty() {
        return Err(ReplayError::Empty);
    }
    let mut batch = Vec::with_capacity(batch_per_buffer * buffers.k_max());
    for k in 1..=buffers.k_max() {
        let buf = buffers.buffer(k);
        if buf.is_empty() {
            log::trace!("replay buffer {k} is empty; skipped");
            continue;
        }
        for _ in 0..batch_per_buffer {
            batch.push((k, buf[rng.random_range(0..buf.len())]));
        }
    }
    Ok(batch)
}

/// Target for `Q(s, a, k)` from a tuple of buffer `k`: `r + γ^k max Q(s')`
/// for a full tuple, `r + γ^κ̄ Q(s', a, k - κ̄)` for a tail tuple, and `r`
/// alone when `s'` is terminal.
pub fn td_target(sample: &SubTransition, q: &OptionQTable, k: usize, gamma: f64) -> Result<f64, ReplayError> {
    let kb = sample.kappa_bar;
    if kb == 0 || kb > k {
        return Err(ReplayError::BufferInvariant { kappa_bar: kb, k });
    }
    if k > q.k_max() {
        return Err(ReplayError::BufferIndex { k, k_max: q.k_max() });
    }
    let continuation = if sample.terminal {
        0.0
    } else if kb == k {
        q.best_value(sample.s_next)
    } else {
        q.get(sample.s_next, sample.a, k - kb)
    };
    Ok(sample.r + gamma.powi(kb as i32) * continuation)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayConfig {
    /// Capacity of each buffer.
    pub capacity: usize,
    pub batch_per_buffer: usize,
    /// Environment steps between syncs of the frozen target table.
    pub target_sync_period: usize,
    /// Environment steps collected before the first update.
    pub learning_starts: usize,
    /// Option executions between batch updates.
    pub train_frequency: usize,
    /// Total environment steps of the run.
    pub budget_steps: usize,
    pub store_tails: bool,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        Self {
            capacity: 50_000,
            batch_per_buffer: 32,
            target_sync_period: 1_000,
            learning_starts: 1_000,
            train_frequency: 1,
            budget_steps: 100_000,
            store_tails: true,
        }
    }
}

impl ReplayConfig {
    pub fn validate(&self) -> Result<(), ReplayError> {
        if self.capacity == 0 || self.batch_per_buffer == 0 || self.target_sync_period == 0 || self.train_frequency == 0 {
            return Err(ReplayError::Config("capacity, batch, sync period and train frequency must be positive".into()));
        }
        Ok(())
    }
}

/// Trains a table with persistence-indexed replay until `config.budget_steps`
/// environment steps have been taken. `hyper.episodes` only sets the decay
/// horizon for per-episode ε schedules.
pub fn train_replay_agent<E: Environment>(
    env: &mut E,
    hyper: &Hyperparams,
    config: &ReplayConfig,
    seed: u64,
) -> Result<(OptionQTable, RunRecord), ReplayError> {
    hyper.validate()?;
    config.validate()?;
    let mut rng = seeded_rng(seed);
    let terminal: Vec<bool> = (0..env.n_states()).map(|s| env.is_terminal(s)).collect();
    let mut q = hyper.q_init.table(env.n_states(), env.n_actions(), hyper.k_max, &terminal, &mut rng);
    let mut target = q.clone();
    let mut buffers = PersistenceBuffers::new(hyper.k_max, config.capacity)?;
    let mut record = RunRecord { seed, ..Default::default() };
    let (mut global_step, mut decisions, mut last_sync, mut episode) = (0usize, 0usize, 0usize, 0usize);
    while global_step < config.budget_steps {
        let started = Instant::now();
        let mut s = env.reset(&mut rng);
        let (mut ret, mut discount, mut t, mut goal) = (0.0, 1.0, 0, false);
        while t < hyper.step_cap && !env.is_terminal(s) && global_step < config.budget_steps {
            let eps = match hyper.decay_unit {
                DecayUnit::Episode => hyper.epsilon.value(episode, hyper.episodes),
                DecayUnit::Step => hyper.epsilon.value(global_step, config.budget_steps),
            };
            let option = epsilon_greedy_option(&q, s, eps, &mut rng);
            let limit = (hyper.step_cap - t).min(config.budget_steps - global_step);
            let history = execute_option(env, option, Some(limit), &mut rng).map_err(AgentError::from)?;
            store_sub_transitions(&mut buffers, &history, hyper.gamma, config.store_tails)?;
            let kappa_bar = history.executed_length();
            ret += discount * discounted_sum(history.rewards(), hyper.gamma);
            discount *= hyper.gamma.powi(kappa_bar as i32);
            t += kappa_bar;
            global_step += kappa_bar;
            decisions += 1;
            s = history.end_state();
            goal = env.is_goal(s);

            if global_step >= config.learning_starts && decisions % config.train_frequency == 0 {
                for (k, tuple) in sample_equal_proportion(&buffers, config.batch_per_buffer, &mut rng)? {
                    let y = td_target(&tuple, &target, k, hyper.gamma)?;
                    let cell = q.get_mut(tuple.s, tuple.a, k);
                    *cell += hyper.alpha * (y - *cell);
                }
            }
            if global_step - last_sync >= config.target_sync_period {
                target.clone_from(&q);
                last_sync = global_step;
            }
        }
        record.returns.push(ret);
        record.steps.push(t);
        record.reached_goal.push(goal);
        record.wall_clock_secs.push(started.elapsed().as_secs_f64());
        episode += 1;
    }
    Ok((q, record))
}
