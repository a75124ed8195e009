//! Benchmark environments and random-MDP generators.
//!
//! Three builders: a deterministic grid with blocked cells
//! ([`make_gridworld`]), a three-state loop with a stochastic shortcut to a
//! dead end ([`make_loop_mdp`]), and seeded random MDPs for property tests
//! ([`make_random_mdp`]). All carry a ground-truth reward table so learned
//! rewards can be scored against something.

use std::collections::BTreeSet;

use rand::Rng;

use crate::mdp::{RngSeed, TabularMdp};
use crate::{Error, Result};

/// Grid action indices, in order: up, down, left, right, stay.
pub const GRID_ACTIONS: [&str; 5] = ["up", "down", "left", "right", "stay"];

/// Loop-MDP action index that holds position at `s1`/`s2` (drops into the
/// dead end from `s0`).
pub const LOOP_STAY: usize = 0;
/// Loop-MDP action index that moves along the rewarded cycle.
pub const LOOP_ADVANCE: usize = 1;

/// Cell-to-state numbering for a grid with blocked cells.
///
/// Blocked cells are removed from the state space entirely: states are the
/// open cells in row-major order (`y` outer, `x` inner). This struct is the
/// bookkeeping the CLI needs to print per-cell heatmaps of quantities indexed
/// by state.
#[derive(Clone, Debug)]
pub struct GridLayout {
    pub width: usize,
    pub height: usize,
    obstacles: BTreeSet<(usize, usize)>,
    /// `cell_state[y * width + x]` is `Some(state index)` for open cells.
    cell_state: Vec<Option<usize>>,
    /// Inverse map: `state_cell[s] = (x, y)`.
    state_cell: Vec<(usize, usize)>,
}

impl GridLayout {
    pub fn new(width: usize, height: usize, obstacles: &[(usize, usize)]) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidGeometry(format!(
                "grid must be non-empty, got {width}x{height}"
            )));
        }
        let mut set = BTreeSet::new();
        for &(x, y) in obstacles {
            if x >= width || y >= height {
                return Err(Error::InvalidGeometry(format!(
                    "obstacle ({x},{y}) outside {width}x{height} grid"
                )));
            }
            set.insert((x, y));
        }
        if set.len() == width * height {
            return Err(Error::InvalidGeometry(
                "every cell is an obstacle".into(),
            ));
        }
        let mut cell_state = vec![None; width * height];
        let mut state_cell = Vec::new();
        for y in 0..height {
            for x in 0..width {
                if !set.contains(&(x, y)) {
                    cell_state[y * width + x] = Some(state_cell.len());
                    state_cell.push((x, y));
                }
            }
        }
        Ok(Self {
            width,
            height,
            obstacles: set,
            cell_state,
            state_cell,
        })
    }

    pub fn n_states(&self) -> usize {
        self.state_cell.len()
    }

    pub fn is_open(&self, x: usize, y: usize) -> bool {
        x < self.width && y < self.height && !self.obstacles.contains(&(x, y))
    }

    pub fn state_of(&self, x: usize, y: usize) -> Option<usize> {
        if x < self.width && y < self.height {
            self.cell_state[y * self.width + x]
        } else {
            None
        }
    }

    pub fn cell_of(&self, state: usize) -> (usize, usize) {
        self.state_cell[state]
    }

    /// Destination cell of an action, with walls and obstacles blocking:
    /// a blocked move keeps the current cell.
    pub fn step(&self, x: usize, y: usize, action: usize) -> (usize, usize) {
        let (tx, ty) = match action {
            0 => (x as isize, y as isize - 1), // up
            1 => (x as isize, y as isize + 1), // down
            2 => (x as isize - 1, y as isize), // left
            3 => (x as isize + 1, y as isize), // right
            4 => (x as isize, y as isize),     // stay
            other => panic!("grid action index {other} out of range"),
        };
        if tx < 0 || ty < 0 {
            return (x, y);
        }
        let (tx, ty) = (tx as usize, ty as usize);
        if self.is_open(tx, ty) {
            (tx, ty)
        } else {
            (x, y)
        }
    }
}

/// Deterministic grid navigation MDP.
///
/// Five actions per state (up, down, left, right, stay); moves into a wall or
/// obstacle keep position. The start distribution is uniform over open cells.
/// The true reward is `goal_reward` for every action taken at the goal cell
/// and `step_reward` elsewhere.
pub fn make_gridworld(
    width: usize,
    height: usize,
    goal: (usize, usize),
    obstacles: &[(usize, usize)],
    step_reward: f64,
    goal_reward: f64,
    gamma: f64,
) -> Result<TabularMdp> {
    let layout = GridLayout::new(width, height, obstacles)?;
    if !layout.is_open(goal.0, goal.1) {
        return Err(Error::InvalidGeometry(format!(
            "goal ({},{}) is blocked or outside the grid",
            goal.0, goal.1
        )));
    }
    make_gridworld_on(&layout, goal, step_reward, goal_reward, gamma)
}

/// [`make_gridworld`] against an existing [`GridLayout`] (saves the CLI from
/// rebuilding the cell numbering it needs for export).
pub fn make_gridworld_on(
    layout: &GridLayout,
    goal: (usize, usize),
    step_reward: f64,
    goal_reward: f64,
    gamma: f64,
) -> Result<TabularMdp> {
    let goal_state = layout.state_of(goal.0, goal.1).ok_or_else(|| {
        Error::InvalidGeometry(format!("goal ({},{}) is blocked", goal.0, goal.1))
    })?;
    let n = layout.n_states();
    let n_actions = GRID_ACTIONS.len();
    let mut transition = vec![vec![vec![0.0; n]; n_actions]; n];
    let mut reward = vec![vec![step_reward; n_actions]; n];
    for s in 0..n {
        let (x, y) = layout.cell_of(s);
        for a in 0..n_actions {
            let (nx, ny) = layout.step(x, y, a);
            let target = layout.state_of(nx, ny).expect("destination is open");
            transition[s][a][target] = 1.0;
            if s == goal_state {
                reward[s][a] = goal_reward;
            }
        }
    }
    let p0 = vec![1.0 / n as f64; n];
    TabularMdp::new(transition, p0, gamma, Some(reward))
}

/// Three-state loop with a risky entry and a recoverable dead end.
///
/// States `s0, s1, s2`; two actions. [`LOOP_ADVANCE`] from `s0` enters the
/// cycle: it lands on `s1` with probability `1 − p` but slips to `s2` with
/// probability `p` (reward 1 either way). [`LOOP_STAY`] at `s1` holds the
/// rewarded self-loop (reward 1); at `s2` it holds the unrewarded dead end;
/// from `s0` it drops straight into `s2` (reward 0). [`LOOP_ADVANCE`] at
/// `s1` leaves the cycle for `s2` (reward 0) and at `s2` climbs back to `s1`
/// (reward 1). Start state is always `s0`.
///
/// Collecting reward from `s2` requires knowing that `s2 → s1` exists —
/// exactly the kind of dynamics knowledge a pure action-matching imitator
/// never sees if the demonstrations avoid `s2`.
pub fn make_loop_mdp(p: f64, gamma: f64) -> Result<TabularMdp> {
    if !(0.0..=1.0).contains(&p) || !p.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "slip probability must lie in [0,1], got {p}"
        )));
    }
    let (s0, s1, s2) = (0, 1, 2);
    let mut transition = vec![vec![vec![0.0; 3]; 2]; 3];
    let mut reward = vec![vec![0.0; 2]; 3];
    // s0: advance enters the cycle (slips to s2 w.p. p), stay falls to s2.
    transition[s0][LOOP_ADVANCE][s1] = 1.0 - p;
    transition[s0][LOOP_ADVANCE][s2] = p;
    reward[s0][LOOP_ADVANCE] = 1.0;
    transition[s0][LOOP_STAY][s2] = 1.0;
    // s1: stay is the rewarded self-loop, advance leaks to s2.
    transition[s1][LOOP_STAY][s1] = 1.0;
    reward[s1][LOOP_STAY] = 1.0;
    transition[s1][LOOP_ADVANCE][s2] = 1.0;
    // s2: stay is the unrewarded self-loop, advance recovers to s1.
    transition[s2][LOOP_STAY][s2] = 1.0;
    transition[s2][LOOP_ADVANCE][s1] = 1.0;
    reward[s2][LOOP_ADVANCE] = 1.0;
    TabularMdp::new(transition, vec![1.0, 0.0, 0.0], gamma, Some(reward))
}

/// Random MDP with Dirichlet(1) transition rows and uniform rewards.
///
/// Each transition row is drawn uniformly from the probability simplex
/// (normalized Exp(1) draws); true rewards are uniform on
/// `(−reward_scale, reward_scale)`. Fully determined by `seed`.
pub fn make_random_mdp(
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    seed: RngSeed,
    reward_scale: f64,
) -> TabularMdp {
    assert!(n_states >= 1 && n_actions >= 1, "need at least one state and action");
    let mut rng = seed.rng();
    let mut transition = vec![vec![vec![0.0; n_states]; n_actions]; n_states];
    for row_block in &mut transition {
        for row in row_block.iter_mut() {
            let mut total = 0.0;
            for entry in row.iter_mut() {
                // Exp(1) via inverse CDF; 1 - U keeps the argument positive.
                let e = -(1.0 - rng.gen::<f64>()).ln();
                *entry = e;
                total += e;
            }
            for entry in row.iter_mut() {
                *entry /= total;
            }
        }
    }
    let reward = (0..n_states)
        .map(|_| {
            (0..n_actions)
                .map(|_| reward_scale * (2.0 * rng.gen::<f64>() - 1.0))
                .collect()
        })
        .collect();
    let p0 = vec![1.0 / n_states as f64; n_states];
    TabularMdp::new(transition, p0, gamma, Some(reward))
        .expect("generated rows are normalized")
}
