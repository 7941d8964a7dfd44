//! Reward-free views of the space contents.
//!
//! A [`Snapshot`] records who stands where at one instant and is shared by
//! every agent of the interaction. An [`Observation`] is a snapshot seen from
//! one cell: it adds, per cell, the actions that lead there.

use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::agents::AgentId;
use crate::space::{Action, Cell, Space};

/// Anything that can stand in a cell.
///
/// The derived order is the canonical listing order inside a cell:
/// evaluable agents, then Good, then Evil, then objects by index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Occupant {
    Evaluable(AgentId),
    Good,
    Evil,
    /// Object number, from 1.
    Object(usize),
}

/// Who is where, in canonical occupant order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Snapshot {
    cell_count: usize,
    entries: Vec<(Occupant, Cell)>,
}

impl Snapshot {
    pub fn new(cell_count: usize, mut entries: Vec<(Occupant, Cell)>) -> Snapshot {
        entries.sort_unstable_by_key(|&(occupant, _)| occupant);
        debug_assert!(entries.iter().all(|(_, c)| c.number() <= cell_count));
        Snapshot {
            cell_count,
            entries,
        }
    }

    pub fn cell_count(&self) -> usize {
        self.cell_count
    }

    pub fn entries(&self) -> &[(Occupant, Cell)] {
        &self.entries
    }

    pub fn cell_of(&self, occupant: Occupant) -> Option<Cell> {
        self.entries
            .iter()
            .find(|(o, _)| *o == occupant)
            .map(|&(_, cell)| cell)
    }

    pub fn good_cell(&self) -> Option<Cell> {
        self.cell_of(Occupant::Good)
    }

    pub fn evil_cell(&self) -> Option<Cell> {
        self.cell_of(Occupant::Evil)
    }

    /// Occupants of `cell` in canonical order.
    pub fn occupants(&self, cell: Cell) -> impl Iterator<Item = Occupant> + '_ {
        self.entries
            .iter()
            .filter(move |(_, c)| *c == cell)
            .map(|&(o, _)| o)
    }
}

/// Whose eyes a rendered observation is meant for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Perspective {
    /// The evaluable agent, which tells Good and Evil apart.
    Evaluable,
    /// Every other object: Good and Evil both render as `⊙`.
    Masked,
}

/// A snapshot as perceived from `current_cell`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Observation {
    snapshot: Arc<Snapshot>,
    viewer: Option<AgentId>,
    current_cell: Cell,
    /// Per cell (0-based), the actions leading there from `current_cell`.
    reachable: Vec<Vec<Action>>,
}

impl Observation {
    /// Panics when `reachable` does not have one entry per cell.
    pub fn new(
        snapshot: Arc<Snapshot>,
        viewer: Option<AgentId>,
        current_cell: Cell,
        reachable: Vec<Vec<Action>>,
    ) -> Observation {
        assert_eq!(reachable.len(), snapshot.cell_count());
        Observation {
            snapshot,
            viewer,
            current_cell,
            reachable,
        }
    }

    /// The observation of evaluable agent `viewer`, with reachability read
    /// from `space`. `None` when the viewer is not in the snapshot.
    pub fn perceive(
        snapshot: Arc<Snapshot>,
        space: &Space,
        viewer: AgentId,
    ) -> Option<Observation> {
        let current_cell = snapshot.cell_of(Occupant::Evaluable(viewer))?;
        let mut reachable = vec![Vec::new(); snapshot.cell_count()];
        for (action, target) in space.edges(current_cell) {
            reachable[target.index()].push(action);
        }
        Some(Observation {
            snapshot,
            viewer: Some(viewer),
            current_cell,
            reachable,
        })
    }

    pub fn snapshot(&self) -> &Snapshot {
        &self.snapshot
    }

    pub fn viewer(&self) -> Option<AgentId> {
        self.viewer
    }

    pub fn current_cell(&self) -> Cell {
        self.current_cell
    }

    pub fn reachable_actions(&self, cell: Cell) -> &[Action] {
        &self.reachable[cell.index()]
    }

    /// Textual form: cells joined by `:`, each listing its occupants in
    /// canonical order followed by `A<i>` for every action that leads there.
    pub fn render(&self, perspective: Perspective) -> String {
        let mut out = String::new();
        for index in 0..self.snapshot.cell_count() {
            if index > 0 {
                out.push(':');
            }
            let cell = Cell::from_index(index);
            for occupant in self.snapshot.occupants(cell) {
                match (occupant, perspective) {
                    (Occupant::Evaluable(id), _) if Some(id) == self.viewer => out.push('π'),
                    (Occupant::Evaluable(id), _) => {
                        let _ = write!(out, "ρ{}", id.0 + 1);
                    }
                    (Occupant::Good | Occupant::Evil, Perspective::Masked) => out.push('⊙'),
                    (Occupant::Good, Perspective::Evaluable) => out.push('⊕'),
                    (Occupant::Evil, Perspective::Evaluable) => out.push('⊖'),
                    (Occupant::Object(n), _) => {
                        let _ = write!(out, "ω{n}");
                    }
                }
            }
            for action in &self.reachable[index] {
                let _ = write!(out, "A{action}");
            }
        }
        out
    }
}
