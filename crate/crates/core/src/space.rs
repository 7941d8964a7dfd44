//! Spaces: directed labelled multigraphs of cells.
//!
//! Every cell has exactly one outgoing edge per action. Action `0` is an
//! implicit self-loop that every cell carries; the explicit actions
//! `1..n_a-1` are read from the textual description
//!
//! ```text
//! description := cell ('|' cell)*
//! cell        := entry+
//! entry       := DIGIT1to9 sign*
//! sign        := '+' | '-'        (homogeneous within an entry)
//! ```
//!
//! where the number of signs is a toroidal offset from the current cell:
//! `1+2++3` in the first of four cells sends action 1 to cell 2, action 2
//! to cell 3 and leaves action 3 on cell 1.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Smallest admissible number of cells.
pub const MIN_CELLS: usize = 2;
/// Smallest admissible number of actions, counting the implicit action 0.
pub const MIN_ACTIONS: usize = 2;
/// Largest admissible number of actions: explicit ids are single digits.
pub const MAX_ACTIONS: usize = 10;

/// A cell, numbered from 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Cell(u32);

impl Cell {
    /// Builds a cell from its 1-based number.
    ///
    /// Panics on `0`.
    pub fn new(number: usize) -> Cell {
        assert!(number >= 1, "cells are numbered from 1");
        Cell(u32::try_from(number).expect("cell number fits in u32"))
    }

    pub(crate) fn from_index(index: usize) -> Cell {
        Cell(index as u32 + 1)
    }

    /// The 1-based cell number.
    pub fn number(self) -> usize {
        self.0 as usize
    }

    /// The 0-based position of the cell, for indexing per-cell tables.
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// An action id. `Action::STAY` (id 0) is the implicit self-loop.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Action(u8);

impl Action {
    pub const STAY: Action = Action(0);

    pub fn new(id: usize) -> Action {
        assert!(id < MAX_ACTIONS, "action ids are below {MAX_ACTIONS}");
        Action(id as u8)
    }

    pub fn id(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// How well the cells of a space are linked together.
///
/// Ordered so that a stronger class compares greater: a requirement is met
/// when `space.connectivity() >= requirement`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Connectivity {
    Disconnected,
    /// A single component when edge directions are ignored.
    Connected,
    /// Every cell reaches every other cell along directed edges.
    StronglyConnected,
}

impl fmt::Display for Connectivity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Connectivity::Disconnected => "disconnected",
            Connectivity::Connected => "connected",
            Connectivity::StronglyConnected => "strongly_connected",
        })
    }
}

impl FromStr for Connectivity {
    type Err = SpaceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "disconnected" => Ok(Connectivity::Disconnected),
            "connected" => Ok(Connectivity::Connected),
            "strong" | "strongly_connected" | "strongly-connected" => {
                Ok(Connectivity::StronglyConnected)
            }
            other => Err(SpaceError::UnknownConnectivity(other.to_owned())),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SpaceError {
    #[error("space description is empty")]
    Empty,
    #[error("a space needs at least {MIN_CELLS} cells, found {0}")]
    TooFewCells(usize),
    #[error("cell {cell} declares no explicit actions")]
    NoActions { cell: usize },
    #[error("unexpected character {found:?} at byte {position}")]
    UnexpectedChar { position: usize, found: char },
    #[error("cell {cell}: action 0 is implicit and cannot be declared")]
    ReservedAction { cell: usize },
    #[error("cell {cell}, action {action}: offset mixes '+' and '-'")]
    MixedSigns { cell: usize, action: usize },
    #[error("cell {cell}: expected action {expected}, found {found}")]
    ActionOrder {
        cell: usize,
        expected: usize,
        found: usize,
    },
    #[error("cell {cell} declares actions 1..={found} but cell 1 declares 1..={expected}")]
    InconsistentActions {
        cell: usize,
        expected: usize,
        found: usize,
    },
    #[error("at most {max} explicit actions are supported, found {0}", max = MAX_ACTIONS - 1)]
    TooManyActions(usize),
    #[error("cell {cell} is outside 1..={cells}")]
    CellOutOfRange { cell: usize, cells: usize },
    #[error("action {action} is outside 0..{actions}")]
    ActionOutOfRange { action: usize, actions: usize },
    #[error("unknown connectivity class {0:?}")]
    UnknownConnectivity(String),
}

/// An immutable space.
///
/// The transition table is stored densely, so structural equality is graph
/// equality.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Space {
    cells: usize,
    actions: usize,
    /// `targets[cell_index * actions + action]` is the 0-based target.
    targets: Vec<u32>,
}

impl Space {
    /// Builds a space from the targets of the explicit actions.
    ///
    /// `rows[i][a - 1]` is the cell reached from cell `i + 1` by action `a`.
    pub fn from_explicit(rows: &[Vec<Cell>]) -> Result<Space, SpaceError> {
        let cells = rows.len();
        if cells < MIN_CELLS {
            return Err(SpaceError::TooFewCells(cells));
        }
        let explicit = rows[0].len();
        if explicit == 0 {
            return Err(SpaceError::NoActions { cell: 1 });
        }
        if explicit > MAX_ACTIONS - 1 {
            return Err(SpaceError::TooManyActions(explicit));
        }
        let actions = explicit + 1;
        let mut targets = Vec::with_capacity(cells * actions);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != explicit {
                return Err(SpaceError::InconsistentActions {
                    cell: i + 1,
                    expected: explicit,
                    found: row.len(),
                });
            }
            targets.push(i as u32);
            for &target in row {
                if target.number() > cells {
                    return Err(SpaceError::CellOutOfRange {
                        cell: target.number(),
                        cells,
                    });
                }
                targets.push(target.index() as u32);
            }
        }
        Ok(Space {
            cells,
            actions,
            targets,
        })
    }

    /// Parses a space description. Equivalent to `description.parse()`.
    pub fn parse(description: &str) -> Result<Space, SpaceError> {
        let rows = parse_offsets(description)?;
        let cells = rows.len();
        let explicit: Vec<Vec<Cell>> = rows
            .iter()
            .enumerate()
            .map(|(i, offsets)| {
                offsets
                    .iter()
                    .map(|&offset| Cell::from_index(toroidal(i, offset, cells)))
                    .collect()
            })
            .collect();
        Space::from_explicit(&explicit)
    }

    /// Number of cells, `n_c`.
    pub fn cell_count(&self) -> usize {
        self.cells
    }

    /// Number of actions including the implicit action 0, `n_a`.
    pub fn action_count(&self) -> usize {
        self.actions
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.cells).map(Cell::from_index)
    }

    pub fn actions(&self) -> impl Iterator<Item = Action> + '_ {
        (0..self.actions).map(|a| Action(a as u8))
    }

    pub fn contains_cell(&self, cell: Cell) -> bool {
        cell.number() <= self.cells
    }

    pub fn contains_action(&self, action: Action) -> bool {
        action.id() < self.actions
    }

    /// The cell reached from `cell` by `action`.
    pub fn transition(&self, cell: Cell, action: Action) -> Result<Cell, SpaceError> {
        if !self.contains_cell(cell) {
            return Err(SpaceError::CellOutOfRange {
                cell: cell.number(),
                cells: self.cells,
            });
        }
        if !self.contains_action(action) {
            return Err(SpaceError::ActionOutOfRange {
                action: action.id(),
                actions: self.actions,
            });
        }
        Ok(self.step(cell, action))
    }

    /// Unchecked [`Space::transition`] for callers that validated their
    /// inputs already.
    #[inline]
    pub(crate) fn step(&self, cell: Cell, action: Action) -> Cell {
        debug_assert!(self.contains_cell(cell) && self.contains_action(action));
        Cell::from_index(self.targets[cell.index() * self.actions + action.id()] as usize)
    }

    /// Outgoing edges of `cell`, in action order, including action 0.
    pub fn edges(&self, cell: Cell) -> impl Iterator<Item = (Action, Cell)> + '_ {
        let row = &self.targets[cell.index() * self.actions..(cell.index() + 1) * self.actions];
        row.iter()
            .enumerate()
            .map(|(a, &t)| (Action(a as u8), Cell::from_index(t as usize)))
    }

    /// Canonical description: forward offsets only, explicit actions in
    /// ascending order.
    pub fn describe(&self) -> String {
        let mut out = String::with_capacity(self.cells * self.actions * 2);
        for cell in 0..self.cells {
            if cell > 0 {
                out.push('|');
            }
            for action in 1..self.actions {
                let target = self.targets[cell * self.actions + action] as usize;
                let forward = (target + self.cells - cell) % self.cells;
                out.push(char::from(b'0' + action as u8));
                out.extend(std::iter::repeat_n('+', forward));
            }
        }
        out
    }

    /// Classifies the space as disconnected, connected or strongly connected.
    pub fn connectivity(&self) -> Connectivity {
        let mut forward = vec![Vec::new(); self.cells];
        let mut backward = vec![Vec::new(); self.cells];
        for (cell, out) in forward.iter_mut().enumerate() {
            for action in 1..self.actions {
                let target = self.targets[cell * self.actions + action] as usize;
                if target != cell {
                    out.push(target);
                    backward[target].push(cell);
                }
            }
        }
        if covers_all(&forward, &[]) && covers_all(&backward, &[]) {
            return Connectivity::StronglyConnected;
        }
        if covers_all(&forward, &backward) {
            Connectivity::Connected
        } else {
            Connectivity::Disconnected
        }
    }
}

/// Breadth-first search from cell 0 over the union of the given adjacency
/// lists; true when every cell is visited.
fn covers_all(primary: &[Vec<usize>], extra: &[Vec<usize>]) -> bool {
    let n = primary.len();
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    let mut visited = 1;
    while let Some(cell) = queue.pop_front() {
        let next = primary[cell]
            .iter()
            .chain(extra.get(cell).into_iter().flatten());
        for &target in next {
            if !seen[target] {
                seen[target] = true;
                visited += 1;
                queue.push_back(target);
            }
        }
    }
    visited == n
}

/// Reduces a signed offset from the 0-based `index` onto the torus of `n`
/// cells.
fn toroidal(index: usize, offset: i64, n: usize) -> usize {
    (index as i64 + offset).rem_euclid(n as i64) as usize
}

/// Reads the per-cell signed offsets of explicit actions `1..` in order.
fn parse_offsets(description: &str) -> Result<Vec<Vec<i64>>, SpaceError> {
    if description.is_empty() {
        return Err(SpaceError::Empty);
    }
    let bytes = description.as_bytes();
    let mut rows: Vec<Vec<i64>> = vec![Vec::new()];
    let mut pos = 0;
    while pos < bytes.len() {
        let cell = rows.len();
        match bytes[pos] {
            b'|' => {
                if rows[cell - 1].is_empty() {
                    return Err(SpaceError::NoActions { cell });
                }
                rows.push(Vec::new());
                pos += 1;
            }
            b'0' => return Err(SpaceError::ReservedAction { cell }),
            digit @ b'1'..=b'9' => {
                let action = usize::from(digit - b'0');
                let expected = rows[cell - 1].len() + 1;
                if action != expected {
                    return Err(SpaceError::ActionOrder {
                        cell,
                        expected,
                        found: action,
                    });
                }
                pos += 1;
                let (mut plus, mut minus) = (0i64, 0i64);
                while pos < bytes.len() && matches!(bytes[pos], b'+' | b'-') {
                    if bytes[pos] == b'+' {
                        plus += 1;
                    } else {
                        minus += 1;
                    }
                    pos += 1;
                }
                if plus > 0 && minus > 0 {
                    return Err(SpaceError::MixedSigns { cell, action });
                }
                rows[cell - 1].push(plus - minus);
            }
            _ => {
                let found = description[pos..].chars().next().unwrap_or('\u{fffd}');
                return Err(SpaceError::UnexpectedChar {
                    position: pos,
                    found,
                });
            }
        }
    }
    let cells = rows.len();
    if rows[cells - 1].is_empty() {
        return Err(SpaceError::NoActions { cell: cells });
    }
    if cells < MIN_CELLS {
        return Err(SpaceError::TooFewCells(cells));
    }
    let expected = rows[0].len();
    if let Some((i, row)) = rows.iter().enumerate().find(|(_, r)| r.len() != expected) {
        return Err(SpaceError::InconsistentActions {
            cell: i + 1,
            expected,
            found: row.len(),
        });
    }
    if expected > MAX_ACTIONS - 1 {
        return Err(SpaceError::TooManyActions(expected));
    }
    Ok(rows)
}

impl FromStr for Space {
    type Err = SpaceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Space::parse(s)
    }
}

impl TryFrom<String> for Space {
    type Error = SpaceError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        Space::parse(&s)
    }
}

impl From<Space> for String {
    fn from(space: Space) -> String {
        space.describe()
    }
}

impl fmt::Display for Space {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.describe())
    }
}

/// An inanimate object pinned to a cell for the whole session.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpaceObject {
    pub name: String,
    pub location: Cell,
}
