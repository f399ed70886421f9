//! Slippery gridworld with nine moves (stay, four axis moves, four
//! diagonals).

use serde::{Deserialize, Serialize};

use super::Variant;
use crate::env::TabularEnv;
use crate::error::{Error, Result};
use crate::mdp::TabularMdp;

/// Row/column displacement of each action.
pub const MOVES: [(i64, i64); 9] = [
    (0, 0),
    (-1, 0),
    (1, 0),
    (0, -1),
    (0, 1),
    (-1, -1),
    (-1, 1),
    (1, -1),
    (1, 1),
];

/// Movement class of an action, used to pick its noise level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MoveClass {
    Stay,
    Axis,
    Diagonal,
}

pub fn move_class(action: usize) -> MoveClass {
    match MOVES[action] {
        (0, 0) => MoveClass::Stay,
        (dr, dc) if dr == 0 || dc == 0 => MoveClass::Axis,
        _ => MoveClass::Diagonal,
    }
}

/// Per-action cost noise: σ = 1 for stay and axis moves, 0.5 for diagonals.
pub fn default_noise_sigmas() -> Vec<f64> {
    (0..MOVES.len())
        .map(|a| match move_class(a) {
            MoveClass::Diagonal => 0.5,
            _ => 1.0,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridworldSpec {
    pub width: usize,
    pub height: usize,
    /// `(row, col)` cells that cannot be entered.
    pub blocked: Vec<(usize, usize)>,
    /// Goal cell: absorbing in the finite variant, cost-free to enter in the
    /// infinite one.
    pub terminal: (usize, usize),
    pub variant: Variant,
    pub slip_axis: f64,
    pub slip_diagonal: f64,
    pub step_cost: f64,
    pub gamma: f64,
}

impl Default for GridworldSpec {
    fn default() -> Self {
        Self {
            width: 8,
            height: 8,
            blocked: vec![(1, 2), (2, 2), (3, 2), (2, 5), (3, 5), (5, 3), (5, 4), (5, 5), (6, 1)],
            terminal: (7, 7),
            variant: Variant::Finite,
            slip_axis: 0.05,
            slip_diagonal: 0.025,
            step_cost: 1.0,
            gamma: 0.8,
        }
    }
}

/// Built gridworld: exact model plus the cell of every state.
#[derive(Debug, Clone)]
pub struct Gridworld {
    pub spec: GridworldSpec,
    cells: Vec<(usize, usize)>,
    index: Vec<Option<usize>>,
    mdp: TabularMdp,
}

impl Gridworld {
    pub fn mdp(&self) -> &TabularMdp {
        &self.mdp
    }

    pub fn env(&self) -> TabularEnv {
        TabularEnv::new(self.mdp.clone())
    }

    pub fn cell(&self, state: usize) -> (usize, usize) {
        self.cells[state]
    }

    pub fn state(&self, cell: (usize, usize)) -> Option<usize> {
        if cell.0 >= self.spec.height || cell.1 >= self.spec.width {
            return None;
        }
        self.index[cell.0 * self.spec.width + cell.1]
    }

    fn shift(&self, from: usize, (dr, dc): (i64, i64)) -> usize {
        let (r, c) = self.cells[from];
        let (r2, c2) = (r as i64 + dr, c as i64 + dc);
        if r2 < 0 || c2 < 0 {
            return from;
        }
        self.state((r2 as usize, c2 as usize)).unwrap_or(from)
    }
}

pub fn build_gridworld(spec: &GridworldSpec) -> Result<Gridworld> {
    let (w, h) = (spec.width, spec.height);
    if w == 0 || h == 0 {
        return Err(Error::InvalidConfig("grid must have positive size".into()));
    }
    let mut open = vec![true; w * h];
    for &(r, c) in &spec.blocked {
        if r >= h || c >= w {
            return Err(Error::InvalidConfig(format!("blocked cell ({r}, {c}) is off the grid")));
        }
        open[r * w + c] = false;
    }
    let (tr, tc) = spec.terminal;
    if tr >= h || tc >= w {
        return Err(Error::InvalidConfig("terminal cell is off the grid".into()));
    }
    if !open[tr * w + tc] {
        return Err(Error::InvalidConfig("terminal cell is blocked".into()));
    }
    let total_slip = 4.0 * (spec.slip_axis + spec.slip_diagonal);
    if spec.slip_axis < 0.0 || spec.slip_diagonal < 0.0 || total_slip > 1.0 {
        return Err(Error::InvalidConfig(format!("invalid slip probabilities (total {total_slip})")));
    }

    let mut cells = Vec::new();
    let mut index = vec![None; w * h];
    for r in 0..h {
        for c in 0..w {
            if open[r * w + c] {
                index[r * w + c] = Some(cells.len());
                cells.push((r, c));
            }
        }
    }
    let ns = cells.len();
    let na = MOVES.len();
    let mut grid = Gridworld {
        spec: spec.clone(),
        cells,
        index,
        mdp: TabularMdp::new(1, 1, vec![1.0], vec![0.0], 0.5, vec![false])?,
    };
    let goal = grid.state(spec.terminal).expect("terminal cell is open");
    let finite = spec.variant == Variant::Finite;

    let mut p = vec![0.0; ns * na * ns];
    let mut cost = vec![0.0; ns * na * ns];
    for s in 0..ns {
        for a in 0..na {
            let base = (s * na + a) * ns;
            if finite && s == goal {
                p[base + s] = 1.0;
                continue;
            }
            let landing = grid.shift(s, MOVES[a]);
            if finite && landing == goal {
                p[base + landing] = 1.0;
            } else {
                p[base + landing] += 1.0 - total_slip;
                for &d in &MOVES[1..] {
                    let mass = if d.0 == 0 || d.1 == 0 { spec.slip_axis } else { spec.slip_diagonal };
                    p[base + grid.shift(landing, d)] += mass;
                }
            }
            for s2 in 0..ns {
                if p[base + s2] > 0.0 {
                    cost[base + s2] = if !finite && s2 == goal { 0.0 } else { spec.step_cost };
                }
            }
        }
    }
    let mut terminal = vec![false; ns];
    if finite {
        terminal[goal] = true;
    }
    grid.mdp = TabularMdp::new(ns, na, p, cost, spec.gamma, terminal)?;
    Ok(grid)
}
