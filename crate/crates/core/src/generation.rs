//! Random space generation.
//!
//! Sizes are drawn from a halving geometric law: the smallest admissible
//! value with probability 1/2, the next with 1/4 and so on. Topology is
//! uniform: every explicit action of every cell gets an offset magnitude in
//! `[0, n_c - 1]` and a fair sign.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::space::{Connectivity, Space, MAX_ACTIONS, MIN_ACTIONS, MIN_CELLS};

pub const DEFAULT_MAX_REJECTIONS: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GenerationError {
    #[error("empty range: max {max} is below min {min}")]
    EmptyRange { min: usize, max: usize },
    #[error("invalid generation limits: {0}")]
    InvalidLimits(String),
    #[error("cannot generate {actions} actions over {cells} cells")]
    Bounds { cells: usize, actions: usize },
    #[error("no {requirement} space after {attempts} attempts")]
    Exhausted {
        attempts: usize,
        requirement: Connectivity,
    },
}

/// Bounds for random spaces. `n_a` counts the implicit action 0.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationLimits {
    pub min_cells: usize,
    pub max_cells: Option<usize>,
    pub min_actions: usize,
    pub max_actions: usize,
    pub connectivity: Connectivity,
    pub max_rejections: usize,
}

impl Default for GenerationLimits {
    fn default() -> Self {
        GenerationLimits {
            min_cells: MIN_CELLS,
            max_cells: None,
            min_actions: MIN_ACTIONS,
            max_actions: MAX_ACTIONS,
            connectivity: Connectivity::Connected,
            max_rejections: DEFAULT_MAX_REJECTIONS,
        }
    }
}

impl GenerationLimits {
    /// Limits pinning both sizes, as used by the per-size experiment tables.
    pub fn fixed(cells: usize, actions: usize, connectivity: Connectivity) -> Self {
        GenerationLimits {
            min_cells: cells,
            max_cells: Some(cells),
            min_actions: actions,
            max_actions: actions,
            connectivity,
            ..GenerationLimits::default()
        }
    }

    pub fn validate(&self) -> Result<(), GenerationError> {
        let bad = |msg: String| Err(GenerationError::InvalidLimits(msg));
        if self.min_cells < MIN_CELLS {
            return bad(format!("min_cells must be at least {MIN_CELLS}"));
        }
        if let Some(max) = self.max_cells {
            if max < self.min_cells {
                return bad(format!("max_cells {max} < min_cells {}", self.min_cells));
            }
        }
        if self.min_actions < MIN_ACTIONS {
            return bad(format!("min_actions must be at least {MIN_ACTIONS}"));
        }
        if self.max_actions > MAX_ACTIONS {
            return bad(format!("max_actions must be at most {MAX_ACTIONS}"));
        }
        if self.max_actions < self.min_actions {
            return bad(format!(
                "max_actions {} < min_actions {}",
                self.max_actions, self.min_actions
            ));
        }
        if self.connectivity == Connectivity::Disconnected {
            return bad("connectivity requirement must be connected or strongly connected".into());
        }
        if self.max_rejections == 0 {
            return bad("max_rejections must be positive".into());
        }
        Ok(())
    }
}

/// Draws `min` with probability 1/2, `min + 1` with 1/4, and so on. With a
/// cap, the whole tail beyond `max` lands on `max`.
pub fn sample_bounded_geometric<R: Rng + ?Sized>(
    min: usize,
    max: Option<usize>,
    rng: &mut R,
) -> Result<usize, GenerationError> {
    if let Some(max) = max {
        if max < min {
            return Err(GenerationError::EmptyRange { min, max });
        }
    }
    let mut value = min;
    loop {
        if max == Some(value) || rng.gen_bool(0.5) {
            return Ok(value);
        }
        value += 1;
    }
}

/// Writes a random description with `n_cells` cells and `n_actions` actions
/// (implicit action 0 included).
pub fn generate_space_description<R: Rng + ?Sized>(
    n_cells: usize,
    n_actions: usize,
    rng: &mut R,
) -> Result<String, GenerationError> {
    if n_cells < MIN_CELLS || n_actions < MIN_ACTIONS || n_actions > n_cells.min(MAX_ACTIONS) {
        return Err(GenerationError::Bounds {
            cells: n_cells,
            actions: n_actions,
        });
    }
    let mut description = String::new();
    for cell in 0..n_cells {
        if cell != 0 {
            description.push('|');
        }
        for action in 1..n_actions {
            let movements = rng.gen_range(0..n_cells);
            let sign = if rng.gen_range(0..2) == 0 { '+' } else { '-' };
            description.push(char::from(b'0' + action as u8));
            description.extend(std::iter::repeat_n(sign, movements));
        }
    }
    Ok(description)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GeneratedSpace {
    pub space: Space,
    pub description: String,
    /// Descriptions discarded for missing the connectivity requirement.
    pub rejections: usize,
}

/// Draws sizes, then regenerates descriptions until one meets the
/// connectivity requirement.
pub fn generate_space<R: Rng + ?Sized>(
    limits: &GenerationLimits,
    rng: &mut R,
) -> Result<GeneratedSpace, GenerationError> {
    limits.validate()?;
    let cells = sample_bounded_geometric(limits.min_cells, limits.max_cells, rng)?;
    let cap = cells.min(limits.max_actions);
    let actions = sample_bounded_geometric(limits.min_actions.min(cap), Some(cap), rng)?;
    for rejections in 0..limits.max_rejections {
        let description = generate_space_description(cells, actions, rng)?;
        let space =
            Space::parse(&description).expect("generated descriptions follow the space grammar");
        if space.connectivity() >= limits.connectivity {
            return Ok(GeneratedSpace {
                space,
                description,
                rejections,
            });
        }
    }
    Err(GenerationError::Exhausted {
        attempts: limits.max_rejections,
        requirement: limits.connectivity,
    })
}
