//! Sparse-reward grid maze.
//!
//! Four move actions, walls block, optional slip replaces the chosen action
//! with a uniformly random one, reward 1 exactly on reaching the goal (which
//! ends the episode). Diverse variants list several `S`/`G` cells; each
//! episode draws one of each, and the active goal is folded into the state
//! id so tabular learners stay Markov.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{Env, Outcome};
use crate::error::{Error, Result};

pub const ACTIONS: [(i32, i32); 4] = [(0, -1), (0, 1), (-1, 0), (1, 0)]; // up, down, left, right

#[derive(Debug, Clone)]
pub struct GridMaze {
    width: usize,
    height: usize,
    walls: Vec<bool>,
    starts: Vec<usize>,
    goals: Vec<usize>,
    slip_prob: f64,
    max_episode_steps: usize,
    descriptor: String,
}

impl GridMaze {
    pub fn from_rows(
        rows: &[String],
        slip_prob: f64,
        max_episode_steps: usize,
        descriptor: String,
    ) -> Result<Self> {
        let height = rows.len();
        let width = rows[0].len();
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::InvalidEnvSpec(
                "grid rows have unequal lengths".into(),
            ));
        }
        let mut walls = vec![false; width * height];
        let mut starts = Vec::new();
        let mut goals = Vec::new();
        for (y, row) in rows.iter().enumerate() {
            for (x, c) in row.chars().enumerate() {
                let cell = y * width + x;
                match c {
                    '#' => walls[cell] = true,
                    'S' => starts.push(cell),
                    'G' => goals.push(cell),
                    '.' => {}
                    _ => unreachable!("validated by the parser"),
                }
            }
        }
        if starts.is_empty() || goals.is_empty() {
            return Err(Error::InvalidEnvSpec(
                "grid needs at least one S and one G".into(),
            ));
        }
        let maze = GridMaze {
            width,
            height,
            walls,
            starts,
            goals,
            slip_prob,
            max_episode_steps,
            descriptor,
        };
        maze.validate_reachability()?;
        Ok(maze)
    }

    fn validate_reachability(&self) -> Result<()> {
        for &goal in &self.goals {
            let reached = self.bfs_from(goal);
            for &start in &self.starts {
                if !reached[start] {
                    return Err(Error::InvalidEnvSpec(format!(
                        "no path from start cell {start} to goal cell {goal}"
                    )));
                }
            }
        }
        Ok(())
    }

    fn bfs_from(&self, origin: usize) -> Vec<bool> {
        let mut seen = vec![false; self.width * self.height];
        let mut queue = std::collections::VecDeque::new();
        seen[origin] = true;
        queue.push_back(origin);
        while let Some(cell) = queue.pop_front() {
            let (x, y) = (cell % self.width, cell / self.width);
            for (dx, dy) in ACTIONS {
                let (nx, ny) = (x as i32 + dx, y as i32 + dy);
                if nx < 0 || ny < 0 || nx >= self.width as i32 || ny >= self.height as i32 {
                    continue;
                }
                let next = ny as usize * self.width + nx as usize;
                if !self.walls[next] && !seen[next] {
                    seen[next] = true;
                    queue.push_back(next);
                }
            }
        }
        seen
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn num_cells(&self) -> usize {
        self.width * self.height
    }

    pub fn num_goals(&self) -> usize {
        self.goals.len()
    }

    pub fn slip_prob(&self) -> f64 {
        self.slip_prob
    }

    /// Splits a state id into (goal index, cell).
    pub fn decode(&self, state: usize) -> (usize, usize) {
        (state / self.num_cells(), state % self.num_cells())
    }

    pub fn encode(&self, goal_idx: usize, cell: usize) -> usize {
        goal_idx * self.num_cells() + cell
    }

    /// Where one move lands, before slip: blocked moves stay put.
    fn move_cell(&self, cell: usize, action: usize) -> usize {
        let (x, y) = (cell % self.width, cell / self.width);
        let (dx, dy) = ACTIONS[action];
        let (nx, ny) = (x as i32 + dx, y as i32 + dy);
        if nx < 0 || ny < 0 || nx >= self.width as i32 || ny >= self.height as i32 {
            return cell;
        }
        let next = ny as usize * self.width + nx as usize;
        if self.walls[next] {
            cell
        } else {
            next
        }
    }
}

impl Env for GridMaze {
    fn num_states(&self) -> usize {
        self.num_cells() * self.goals.len()
    }

    fn num_actions(&self) -> usize {
        4
    }

    fn max_episode_steps(&self) -> usize {
        self.max_episode_steps
    }

    fn reset(&self, rng: &mut ChaCha8Rng) -> usize {
        let start = if self.starts.len() == 1 {
            self.starts[0]
        } else {
            self.starts[rng.random_range(0..self.starts.len())]
        };
        let goal_idx = if self.goals.len() == 1 {
            0
        } else {
            rng.random_range(0..self.goals.len())
        };
        self.encode(goal_idx, start)
    }

    fn start_distribution(&self) -> Vec<(f64, usize)> {
        let p = 1.0 / (self.starts.len() * self.goals.len()) as f64;
        let mut dist = Vec::new();
        for goal_idx in 0..self.goals.len() {
            for &start in &self.starts {
                dist.push((p, self.encode(goal_idx, start)));
            }
        }
        dist
    }

    fn outcomes(&self, state: usize, action: usize) -> Vec<Outcome> {
        let (goal_idx, cell) = self.decode(state);
        let goal = self.goals[goal_idx];
        // With prob slip the executed move is uniform over all four
        // directions (the intended one included).
        let outcome_for = |dir: usize, prob: f64| -> Outcome {
            let next = self.move_cell(cell, dir);
            if next == goal {
                (prob, 1.0, self.encode(goal_idx, next), true)
            } else {
                (prob, 0.0, self.encode(goal_idx, next), false)
            }
        };
        let mut outcomes = vec![outcome_for(action, 1.0 - self.slip_prob)];
        if self.slip_prob > 0.0 {
            for dir in 0..4 {
                outcomes.push(outcome_for(dir, self.slip_prob / 4.0));
            }
        }
        outcomes
    }

    fn descriptor(&self) -> &str {
        &self.descriptor
    }
}
