//! Gridworlds from text maps, random FrozenLake maps, and MountainCar (both
//! the continuous stepper and its grid discretization).

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use thiserror::Error;

use crate::mdp::{Action, Environment, MdpError, State, StepOutcome, TabularMdp};

pub const LEFT: Action = 0;
pub const DOWN: Action = 1;
pub const RIGHT: Action = 2;
pub const UP: Action = 3;

const FROZENLAKE_RETRY_CAP: usize = 10_000;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("malformed map: {0}")]
    MalformedMap(String),
    #[error("map has {0} start cells, expected exactly one")]
    StartCount(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("no solvable map after {0} attempts")]
    NoValidMap(usize),
    #[error("unknown environment `{0}`")]
    UnknownEnvironment(String),
    #[error(transparent)]
    Mdp(#[from] MdpError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cell {
    Start,
    Goal,
    Hole,
    Free,
}

impl Cell {
    fn from_char(c: char) -> Option<Self> {
        match c {
            'S' => Some(Cell::Start),
            'G' => Some(Cell::Goal),
            'H' => Some(Cell::Hole),
            '.' => Some(Cell::Free),
            _ => None,
        }
    }

    fn to_char(self) -> char {
        match self {
            Cell::Start => 'S',
            Cell::Goal => 'G',
            Cell::Hole => 'H',
            Cell::Free => '.',
        }
    }

    fn is_terminal(self) -> bool {
        matches!(self, Cell::Goal | Cell::Hole)
    }
}

/// Reward conventions for the gridworlds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RewardScheme {
    /// +1 on entering the goal, −1 on entering a hole, 0 otherwise.
    GoalHole,
    /// +100 goal, −10 hole, −100 for leaving the grid, −1 per other step.
    SyncGrid,
}

impl RewardScheme {
    fn goal(self) -> f64 {
        match self {
            RewardScheme::GoalHole => 1.0,
            RewardScheme::SyncGrid => 100.0,
        }
    }

    fn hole(self) -> f64 {
        match self {
            RewardScheme::GoalHole => -1.0,
            RewardScheme::SyncGrid => -10.0,
        }
    }

    fn outside(self) -> f64 {
        match self {
            RewardScheme::GoalHole => -1.0,
            RewardScheme::SyncGrid => -100.0,
        }
    }

    fn step(self) -> f64 {
        match self {
            RewardScheme::GoalHole => 0.0,
            RewardScheme::SyncGrid => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BorderMode {
    /// Moving into a border leaves the agent in place.
    Blocking,
    /// Moving into a border is penalized and ends the episode.
    PenalizeAndTerminate,
}

/// A rectangular gridworld layout with its reward and border conventions.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    pub cells: Vec<Cell>,
    pub reward_scheme: RewardScheme,
    pub border_mode: BorderMode,
    pub gamma: f64,
}

impl GridSpec {
    /// Parses the one-character-per-cell map format (`S`, `G`, `H`, `.`).
    /// Blank lines and lines starting with `#` are ignored.
    pub fn parse(text: &str, reward_scheme: RewardScheme, border_mode: BorderMode, gamma: f64) -> Result<Self, EnvError> {
        let mut cells = Vec::new();
        let mut rows = 0;
        let mut cols = None;
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let row: Vec<Cell> = line
                .chars()
                .map(|c| Cell::from_char(c).ok_or_else(|| EnvError::MalformedMap(format!("unknown cell `{c}`"))))
                .collect::<Result<_, _>>()?;
            match cols {
                None => cols = Some(row.len()),
                Some(n) if n != row.len() => {
                    return Err(EnvError::MalformedMap(format!("row {rows} has {} cells, expected {n}", row.len())))
                }
                _ => {}
            }
            cells.extend(row);
            rows += 1;
        }
        let cols = cols.ok_or_else(|| EnvError::MalformedMap("empty map".into()))?;
        let spec = Self { rows, cols, cells, reward_scheme, border_mode, gamma };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        if self.rows == 0 || self.cols == 0 || self.cells.len() != self.rows * self.cols {
            return Err(EnvError::MalformedMap("inconsistent dimensions".into()));
        }
        let starts = self.cells.iter().filter(|&&c| c == Cell::Start).count();
        if starts != 1 {
            return Err(EnvError::StartCount(starts));
        }
        Ok(())
    }

    pub fn cell(&self, row: usize, col: usize) -> Cell {
        self.cells[row * self.cols + col]
    }

    pub fn start(&self) -> State {
        self.cells.iter().position(|&c| c == Cell::Start).expect("validated map has a start")
    }

    /// Cell reached by `action` from `(row, col)`, or `None` when leaving the grid.
    pub fn neighbor(&self, row: usize, col: usize, action: Action) -> Option<(usize, usize)> {
        match action {
            LEFT => col.checked_sub(1).map(|c| (row, c)),
            DOWN => (row + 1 < self.rows).then_some((row + 1, col)),
            RIGHT => (col + 1 < self.cols).then_some((row, col + 1)),
            UP => row.checked_sub(1).map(|r| (r, col)),
            _ => None,
        }
    }

    /// Length of the shortest start-to-goal path avoiding holes, if any.
    pub fn shortest_path_len(&self) -> Option<usize> {
        let start = self.start();
        let mut dist = vec![usize::MAX; self.cells.len()];
        dist[start] = 0;
        let mut queue = VecDeque::from([start]);
        while let Some(s) = queue.pop_front() {
            if self.cells[s] == Cell::Goal {
                return Some(dist[s]);
            }
            if self.cells[s] == Cell::Hole {
                continue;
            }
            let (r, c) = (s / self.cols, s % self.cols);
            for a in [LEFT, DOWN, RIGHT, UP] {
                if let Some((nr, nc)) = self.neighbor(r, c, a) {
                    let n = nr * self.cols + nc;
                    if dist[n] == usize::MAX {
                        dist[n] = dist[s] + 1;
                        queue.push_back(n);
                    }
                }
            }
        }
        None
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in 0..self.rows {
            let line: String = (0..self.cols).map(|c| self.cell(r, c).to_char()).collect();
            writeln!(f, "{line}")?;
        }
        Ok(())
    }
}

/// Deterministic gridworld MDP with actions left, down, right, up.
///
/// States are `row * cols + col`; with [`BorderMode::PenalizeAndTerminate`]
/// one extra absorbing "outside" state is appended.
pub fn build_gridworld(spec: &GridSpec) -> Result<TabularMdp, EnvError> {
    spec.validate()?;
    let n_cells = spec.rows * spec.cols;
    let outside = match spec.border_mode {
        BorderMode::Blocking => None,
        BorderMode::PenalizeAndTerminate => Some(n_cells),
    };
    let n_states = n_cells + usize::from(outside.is_some());
    let n_actions = 4;
    let mut transition = vec![0.0; n_states * n_actions * n_states];
    let mut reward = vec![0.0; n_states * n_actions];
    let mut terminal = vec![false; n_states];
    let mut goal = vec![false; n_states];
    let scheme = spec.reward_scheme;

    for s in 0..n_states {
        let cell = if s < n_cells { Some(spec.cells[s]) } else { None };
        let absorbing = cell.is_none_or(Cell::is_terminal);
        terminal[s] = absorbing;
        goal[s] = cell == Some(Cell::Goal);
        for a in 0..n_actions {
            let base = (s * n_actions + a) * n_states;
            if absorbing {
                transition[base + s] = 1.0;
                continue;
            }
            let (r, c) = (s / spec.cols, s % spec.cols);
            let (next, rew) = match (spec.neighbor(r, c, a), outside) {
                (Some((nr, nc)), _) => {
                    let n = nr * spec.cols + nc;
                    let rew = match spec.cells[n] {
                        Cell::Goal => scheme.goal(),
                        Cell::Hole => scheme.hole(),
                        _ => scheme.step(),
                    };
                    (n, rew)
                }
                (None, None) => (s, scheme.step()),
                (None, Some(out)) => (out, scheme.outside()),
            };
            transition[base + next] = 1.0;
            reward[s * n_actions + a] = rew;
        }
    }

    let mdp = TabularMdp::new(n_states, n_actions, transition, reward, terminal, spec.gamma)?
        .with_goals(goal)?
        .with_start_states(vec![spec.start()])?;
    Ok(mdp)
}

/// Random `size x size` FrozenLake layout: start top-left, goal bottom-right,
/// every other tile frozen with probability `p_frozen` and a hole otherwise.
/// Maps without a start-to-goal path are redrawn.
pub fn generate_frozenlake_map<R: Rng + ?Sized>(size: usize, p_frozen: f64, gamma: f64, rng: &mut R) -> Result<GridSpec, EnvError> {
    if !(p_frozen > 0.0 && p_frozen <= 1.0) {
        return Err(EnvError::InvalidParameter(format!("p_frozen = {p_frozen} outside (0, 1]")));
    }
    if size < 2 {
        return Err(EnvError::InvalidParameter("FrozenLake size must be at least 2".into()));
    }
    for _ in 0..FROZENLAKE_RETRY_CAP {
        let mut cells = Vec::with_capacity(size * size);
        for i in 0..size * size {
            let cell = if i == 0 {
                Cell::Start
            } else if i == size * size - 1 {
                Cell::Goal
            } else if rng.random::<f64>() < p_frozen {
                Cell::Free
            } else {
                Cell::Hole
            };
            cells.push(cell);
        }
        let spec = GridSpec {
            rows: size,
            cols: size,
            cells,
            reward_scheme: RewardScheme::GoalHole,
            border_mode: BorderMode::Blocking,
            gamma,
        };
        if spec.shortest_path_len().is_some() {
            return Ok(spec);
        }
    }
    Err(EnvError::NoValidMap(FROZENLAKE_RETRY_CAP))
}

pub fn generate_frozenlake<R: Rng + ?Sized>(size: usize, p_frozen: f64, gamma: f64, rng: &mut R) -> Result<TabularMdp, EnvError> {
    build_gridworld(&generate_frozenlake_map(size, p_frozen, gamma, rng)?)
}

/// Classic MountainCar constants plus the discretization grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MountainCarParams {
    pub min_position: f64,
    pub max_position: f64,
    pub max_speed: f64,
    pub force: f64,
    pub gravity: f64,
    pub goal_position: f64,
    pub step_reward: f64,
    pub max_episode_steps: usize,
    pub position_bins: usize,
    pub velocity_bins: usize,
    pub gamma: f64,
}

impl Default for MountainCarParams {
    fn default() -> Self {
        Self {
            min_position: -1.2,
            max_position: 0.6,
            max_speed: 0.07,
            force: 0.001,
            gravity: 0.0025,
            goal_position: 0.5,
            step_reward: -1.0,
            max_episode_steps: 200,
            position_bins: 40,
            velocity_bins: 40,
            gamma: 1.0,
        }
    }
}

impl MountainCarParams {
    pub fn validate(&self) -> Result<(), EnvError> {
        if self.position_bins < 2 || self.velocity_bins < 2 {
            return Err(EnvError::InvalidParameter("need at least 2 bins per axis".into()));
        }
        if !(self.min_position < self.goal_position && self.goal_position <= self.max_position) {
            return Err(EnvError::InvalidParameter("position range must contain the goal".into()));
        }
        if !(self.max_speed > 0.0) {
            return Err(EnvError::InvalidParameter("max_speed must be positive".into()));
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        self.position_bins * self.velocity_bins
    }

    /// Index of the absorbing goal state in the discretized state space.
    pub fn goal_state(&self) -> State {
        self.n_cells()
    }

    pub fn position_bin(&self, x: f64) -> usize {
        bin(x, self.min_position, self.max_position, self.position_bins)
    }

    pub fn velocity_bin(&self, v: f64) -> usize {
        bin(v, -self.max_speed, self.max_speed, self.velocity_bins)
    }

    /// Discrete state of a continuous `(position, velocity)`.
    pub fn cell_of(&self, x: f64, v: f64) -> State {
        self.position_bin(x) * self.velocity_bins + self.velocity_bin(v)
    }

    /// Centre `(position, velocity)` of a cell.
    pub fn cell_center(&self, cell: State) -> (f64, f64) {
        let (pb, vb) = (cell / self.velocity_bins, cell % self.velocity_bins);
        let pw = (self.max_position - self.min_position) / self.position_bins as f64;
        let vw = 2.0 * self.max_speed / self.velocity_bins as f64;
        (self.min_position + (pb as f64 + 0.5) * pw, -self.max_speed + (vb as f64 + 0.5) * vw)
    }

    /// One step of the classic dynamics; `action` 0 pushes left, 1 coasts, 2 pushes right.
    pub fn dynamics(&self, x: f64, v: f64, action: Action) -> (f64, f64) {
        let mut v = v + (action as f64 - 1.0) * self.force - (3.0 * x).cos() * self.gravity;
        v = v.clamp(-self.max_speed, self.max_speed);
        let mut x = x + v;
        x = x.clamp(self.min_position, self.max_position);
        if x == self.min_position && v < 0.0 {
            v = 0.0;
        }
        (x, v)
    }

    pub fn is_goal(&self, x: f64) -> bool {
        x >= self.goal_position
    }
}

fn bin(value: f64, lo: f64, hi: f64, n: usize) -> usize {
    let t = ((value - lo) / (hi - lo) * n as f64).floor();
    if t <= 0.0 {
        0
    } else {
        (t as usize).min(n - 1)
    }
}

/// Continuous MountainCar state machine.
#[derive(Debug, Clone)]
pub struct MountainCar {
    params: MountainCarParams,
    position: f64,
    velocity: f64,
}

/// Outcome of a continuous MountainCar step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CarStep {
    pub position: f64,
    pub velocity: f64,
    pub reward: f64,
    pub done: bool,
}

impl MountainCar {
    pub fn new(params: MountainCarParams) -> Result<Self, EnvError> {
        params.validate()?;
        Ok(Self { params, position: -0.5, velocity: 0.0 })
    }

    pub fn params(&self) -> &MountainCarParams {
        &self.params
    }

    /// Position uniform in `[-0.6, -0.4)`, velocity zero.
    pub fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> (f64, f64) {
        self.position = rng.random_range(-0.6..-0.4);
        self.velocity = 0.0;
        (self.position, self.velocity)
    }

    pub fn set_state(&mut self, position: f64, velocity: f64) {
        self.position = position;
        self.velocity = velocity;
    }

    pub fn position(&self) -> f64 {
        self.position
    }

    pub fn velocity(&self) -> f64 {
        self.velocity
    }

    pub fn step(&mut self, action: Action) -> CarStep {
        let (x, v) = self.params.dynamics(self.position, self.velocity, action);
        self.position = x;
        self.velocity = v;
        CarStep { position: x, velocity: v, reward: self.params.step_reward, done: self.params.is_goal(x) }
    }
}

/// MountainCar with continuous hidden state, observed through the
/// `position_bins x velocity_bins` grid plus an absorbing goal state.
#[derive(Debug, Clone)]
pub struct DiscretizedMountainCar {
    car: MountainCar,
    state: State,
}

impl DiscretizedMountainCar {
    pub fn new(params: MountainCarParams) -> Result<Self, EnvError> {
        let car = MountainCar::new(params)?;
        let state = params.cell_of(car.position, car.velocity);
        Ok(Self { car, state })
    }

    pub fn params(&self) -> &MountainCarParams {
        self.car.params()
    }

    pub fn car(&self) -> &MountainCar {
        &self.car
    }
}

impl Environment for DiscretizedMountainCar {
    fn n_states(&self) -> usize {
        self.car.params.n_cells() + 1
    }

    fn n_actions(&self) -> usize {
        3
    }

    fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> State {
        let (x, v) = self.car.reset(rng);
        self.state = self.car.params.cell_of(x, v);
        self.state
    }

    fn state(&self) -> State {
        self.state
    }

    fn step<R: Rng + ?Sized>(&mut self, action: Action, _rng: &mut R) -> StepOutcome {
        let out = self.car.step(action);
        self.state = if out.done { self.car.params.goal_state() } else { self.car.params.cell_of(out.position, out.velocity) };
        StepOutcome { next: self.state, reward: out.reward, terminal: out.done }
    }

    fn is_terminal(&self, s: State) -> bool {
        s == self.car.params.goal_state()
    }

    fn is_goal(&self, s: State) -> bool {
        s == self.car.params.goal_state()
    }
}

/// Tabular MountainCar: each cell moves deterministically to the cell holding
/// the image of its centre; the last state is the absorbing goal.
///
/// At coarse resolutions low-velocity cells map onto themselves, so this
/// model is mainly useful for model-based analysis; learning runs use
/// [`DiscretizedMountainCar`].
pub fn discretize_mountain_car(params: &MountainCarParams) -> Result<TabularMdp, EnvError> {
    params.validate()?;
    let n_cells = params.n_cells();
    let n_states = n_cells + 1;
    let n_actions = 3;
    let goal_state = params.goal_state();
    let mut transition = vec![0.0; n_states * n_actions * n_states];
    let mut reward = vec![0.0; n_states * n_actions];
    let mut terminal = vec![false; n_states];
    let mut goal = vec![false; n_states];
    terminal[goal_state] = true;
    goal[goal_state] = true;
    for s in 0..n_states {
        for a in 0..n_actions {
            let base = (s * n_actions + a) * n_states;
            if s == goal_state {
                transition[base + s] = 1.0;
                continue;
            }
            let (x, v) = params.cell_center(s);
            let (nx, nv) = params.dynamics(x, v, a);
            let next = if params.is_goal(nx) { goal_state } else { params.cell_of(nx, nv) };
            transition[base + next] = 1.0;
            reward[s * n_actions + a] = params.step_reward;
        }
    }
    let zero_v = params.velocity_bin(0.0);
    let starts: Vec<State> = (params.position_bin(-0.6)..=params.position_bin(-0.4))
        .map(|pb| pb * params.velocity_bins + zero_v)
        .collect();
    Ok(TabularMdp::new(n_states, n_actions, transition, reward, terminal, params.gamma)?
        .with_goals(goal)?
        .with_start_states(starts)?)
}

/// Names accepted in experiment configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EnvironmentName {
    Cliff,
    Bridge,
    ZigZag,
    FrozenLake16,
    Open10,
    Sync6,
    MountainCar,
}

impl EnvironmentName {
    pub const ALL: [EnvironmentName; 7] = [
        EnvironmentName::Cliff,
        EnvironmentName::Bridge,
        EnvironmentName::ZigZag,
        EnvironmentName::FrozenLake16,
        EnvironmentName::Open10,
        EnvironmentName::Sync6,
        EnvironmentName::MountainCar,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EnvironmentName::Cliff => "cliff",
            EnvironmentName::Bridge => "bridge",
            EnvironmentName::ZigZag => "zigzag",
            EnvironmentName::FrozenLake16 => "frozenlake16",
            EnvironmentName::Open10 => "open10",
            EnvironmentName::Sync6 => "sync6",
            EnvironmentName::MountainCar => "mountaincar",
        }
    }

    /// Bundled map text, for the fixed-layout gridworlds.
    pub fn map_text(self) -> Option<&'static str> {
        match self {
            EnvironmentName::Cliff => Some(include_str!("../maps/cliff.txt")),
            EnvironmentName::Bridge => Some(include_str!("../maps/bridge.txt")),
            EnvironmentName::ZigZag => Some(include_str!("../maps/zigzag.txt")),
            EnvironmentName::Open10 => Some(include_str!("../maps/open10.txt")),
            EnvironmentName::Sync6 => Some(include_str!("../maps/sync6.txt")),
            EnvironmentName::FrozenLake16 | EnvironmentName::MountainCar => None,
        }
    }
}

impl fmt::Display for EnvironmentName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnvironmentName {
    type Err = EnvError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| EnvError::UnknownEnvironment(s.to_string()))
    }
}

/// Knobs shared by the environment registry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvOptions {
    /// Overrides the environment's default discount.
    pub gamma: Option<f64>,
    pub p_frozen: f64,
    pub mountain_car: MountainCarParams,
}

impl Default for EnvOptions {
    fn default() -> Self {
        Self { gamma: None, p_frozen: 0.85, mountain_car: MountainCarParams::default() }
    }
}

/// Grid layout for a named gridworld (FrozenLake draws a fresh map).
pub fn grid_spec<R: Rng + ?Sized>(name: EnvironmentName, options: &EnvOptions, rng: &mut R) -> Result<GridSpec, EnvError> {
    let gamma = options.gamma.unwrap_or(0.99);
    match name {
        EnvironmentName::Sync6 => GridSpec::parse(
            name.map_text().unwrap(),
            RewardScheme::SyncGrid,
            BorderMode::PenalizeAndTerminate,
            gamma,
        ),
        EnvironmentName::FrozenLake16 => generate_frozenlake_map(16, options.p_frozen, gamma, rng),
        EnvironmentName::MountainCar => Err(EnvError::InvalidParameter("mountaincar is not a gridworld".into())),
        _ => GridSpec::parse(name.map_text().unwrap(), RewardScheme::GoalHole, BorderMode::Blocking, gamma),
    }
}

/// Tabular MDP for a named environment. MountainCar yields its
/// cell-centre discretization.
pub fn build_named<R: Rng + ?Sized>(name: EnvironmentName, options: &EnvOptions, rng: &mut R) -> Result<TabularMdp, EnvError> {
    match name {
        EnvironmentName::MountainCar => {
            let mut params = options.mountain_car;
            if let Some(g) = options.gamma {
                params.gamma = g;
            }
            discretize_mountain_car(&params)
        }
        _ => build_gridworld(&grid_spec(name, options, rng)?),
    }
}
