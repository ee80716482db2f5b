//! ASCII grid-world maps and the deterministic maze MDP built from them.
//!
//! Map format: one line per row, `.` empty, `#` wall, `G` goal. Rows must all
//! have the same width. State indices are assigned row-major over non-wall
//! cells.

use std::fmt;

use crate::error::{Error, Result};
use crate::mdp::{NoiseSpec, TabularMdp};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cell {
    Empty,
    Wall,
    Goal,
}

/// Grid moves in action-index order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Up = 0,
    Down = 1,
    Left = 2,
    Right = 3,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::Up, Action::Down, Action::Left, Action::Right];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(a: usize) -> Option<Action> {
        Self::ALL.get(a).copied()
    }

    fn offset(self) -> (isize, isize) {
        match self {
            Action::Up => (-1, 0),
            Action::Down => (1, 0),
            Action::Left => (0, -1),
            Action::Right => (0, 1),
        }
    }

    pub fn arrow(self) -> char {
        match self {
            Action::Up => '^',
            Action::Down => 'v',
            Action::Left => '<',
            Action::Right => '>',
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Action::Up => "up",
            Action::Down => "down",
            Action::Left => "left",
            Action::Right => "right",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridSpec {
    rows: usize,
    cols: usize,
    cells: Vec<Cell>,
    state_of_cell: Vec<Option<usize>>,
    cell_of_state: Vec<usize>,
    goal_index: usize,
}

impl GridSpec {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn n_states(&self) -> usize {
        self.cell_of_state.len()
    }

    /// State index of the goal cell.
    pub fn goal_index(&self) -> usize {
        self.goal_index
    }

    pub fn cell(&self, row: usize, col: usize) -> Cell {
        self.cells[row * self.cols + col]
    }

    pub fn state_at(&self, row: usize, col: usize) -> Option<usize> {
        if row < self.rows && col < self.cols {
            self.state_of_cell[row * self.cols + col]
        } else {
            None
        }
    }

    /// `(row, col)` of a state.
    pub fn position(&self, state: usize) -> (usize, usize) {
        let c = self.cell_of_state[state];
        (c / self.cols, c % self.cols)
    }

    /// Deterministic successor; `None` when the move hits a wall or leaves the grid.
    pub fn successor(&self, state: usize, action: Action) -> Option<usize> {
        let (r, c) = self.position(state);
        let (dr, dc) = action.offset();
        let nr = r.checked_add_signed(dr)?;
        let nc = c.checked_add_signed(dc)?;
        self.state_at(nr, nc)
    }
}

/// Parses the ASCII map format. A single trailing newline and `\r` line endings
/// are accepted.
pub fn parse_map(text: &str) -> Result<GridSpec> {
    let body = text.strip_suffix('\n').unwrap_or(text);
    if body.trim().is_empty() {
        return Err(Error::EmptyMap);
    }
    let lines: Vec<&str> = body.split('\n').map(|l| l.trim_end_matches('\r')).collect();
    let cols = lines[0].chars().count();

    let mut cells = Vec::with_capacity(lines.len() * cols);
    for (row, line) in lines.iter().enumerate() {
        let width = line.chars().count();
        if width != cols {
            return Err(Error::RaggedRows {
                row,
                expected: cols,
                found: width,
            });
        }
        for (col, ch) in line.chars().enumerate() {
            cells.push(match ch {
                '.' => Cell::Empty,
                '#' => Cell::Wall,
                'G' => Cell::Goal,
                _ => return Err(Error::UnknownChar { ch, row, col }),
            });
        }
    }
    if cols == 0 {
        return Err(Error::EmptyMap);
    }

    let goals = cells.iter().filter(|&&c| c == Cell::Goal).count();
    if goals != 1 {
        return Err(Error::GoalCount(goals));
    }

    let mut state_of_cell = vec![None; cells.len()];
    let mut cell_of_state = Vec::new();
    let mut goal_index = 0;
    for (i, &cell) in cells.iter().enumerate() {
        if cell != Cell::Wall {
            if cell == Cell::Goal {
                goal_index = cell_of_state.len();
            }
            state_of_cell[i] = Some(cell_of_state.len());
            cell_of_state.push(i);
        }
    }
    if cell_of_state.is_empty() {
        return Err(Error::NoOpenCells);
    }

    Ok(GridSpec {
        rows: lines.len(),
        cols,
        cells,
        state_of_cell,
        cell_of_state,
        goal_index,
    })
}

/// Builds the maze MDP: deterministic moves, `-1` for bumping into a wall or
/// the border (agent stays), `+1` for any move whose successor is the goal,
/// `0` otherwise. The goal is absorbing with zero reward.
pub fn build_gridworld(grid: &GridSpec, noise: NoiseSpec, gamma: f64) -> Result<TabularMdp> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidGamma(gamma));
    }
    let n_states = grid.n_states();
    let n_actions = Action::ALL.len();
    let goal = grid.goal_index();

    let mut transitions = Vec::with_capacity(n_states * n_actions);
    let mut rewards = Vec::with_capacity(n_states * n_actions);
    for s in 0..n_states {
        for action in Action::ALL {
            let (next, r) = if s == goal {
                (goal, 0.0)
            } else {
                match grid.successor(s, action) {
                    Some(n) if n == goal => (n, 1.0),
                    Some(n) => (n, 0.0),
                    None => (s, -1.0),
                }
            };
            transitions.push(vec![(next, 1.0)]);
            rewards.push(r);
        }
    }
    TabularMdp::new(
        n_states,
        n_actions,
        transitions,
        rewards,
        gamma,
        noise,
        1.0 + noise.clip,
    )
}
