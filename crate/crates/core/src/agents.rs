//! Agents: who takes part in a session and how each one picks its moves.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::observation::{Observation, Snapshot};
use crate::space::{Action, Cell, Space};

/// Index of an evaluable agent within its session, in display order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Evaluable,
    Good,
    Evil,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentIdentity {
    pub name: String,
    pub role: Role,
    pub display_index: usize,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AgentError {
    #[error("pattern is empty")]
    EmptyPattern,
    #[error("moves per interaction must be at least 1")]
    NoMoves,
    #[error("action {action} is outside 0..{actions}")]
    ActionOutOfRange { action: usize, actions: usize },
    #[error("invalid generator behaviour {0:?}: expected `random` or `pattern:<a>,<b>,...`")]
    Syntax(String),
}

/// Virtual decision latency of a synthetic agent, drawn uniformly per
/// interaction and recorded but never slept.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeBounds {
    pub min: Duration,
    pub max: Duration,
}

impl TimeBounds {
    pub const ZERO: TimeBounds = TimeBounds {
        min: Duration::ZERO,
        max: Duration::ZERO,
    };

    pub fn millis(min: u64, max: u64) -> TimeBounds {
        assert!(min <= max, "min time above max time");
        TimeBounds {
            min: Duration::from_millis(min),
            max: Duration::from_millis(max),
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Duration {
        let lo = self.min.as_micros() as u64;
        let hi = self.max.as_micros() as u64;
        Duration::from_micros(rng.gen_range(lo..=hi))
    }
}

impl Default for TimeBounds {
    fn default() -> Self {
        TimeBounds::ZERO
    }
}

/// How an evaluable agent chooses its action.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    /// Uniform over all actions.
    Random,
    /// Chases Good, avoids Evil; see [`observer_choice`].
    Observer,
    /// Replays a fixed action list, cycling when it runs out.
    Scripted(Vec<Action>),
    /// Actions arrive from outside the engine, one per interaction.
    External,
}

impl Policy {
    pub fn label(&self) -> &'static str {
        match self {
            Policy::Random => "random",
            Policy::Observer => "observer",
            Policy::Scripted(_) => "scripted",
            Policy::External => "external",
        }
    }
}

/// An evaluable participant of a session.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub name: String,
    pub policy: Policy,
    pub time: TimeBounds,
    /// How many past interactions the agent keeps.
    pub history_capacity: usize,
}

impl AgentSpec {
    pub fn new(name: impl Into<String>, policy: Policy) -> AgentSpec {
        AgentSpec {
            name: name.into(),
            policy,
            time: TimeBounds::ZERO,
            history_capacity: 0,
        }
    }

    pub fn random() -> AgentSpec {
        AgentSpec::new("random", Policy::Random)
    }

    pub fn observer() -> AgentSpec {
        AgentSpec::new("observer", Policy::Observer)
    }

    pub fn scripted(actions: Vec<Action>) -> AgentSpec {
        AgentSpec::new("scripted", Policy::Scripted(actions))
    }

    pub fn external(name: impl Into<String>) -> AgentSpec {
        AgentSpec::new(name, Policy::External)
    }

    pub fn with_time(mut self, time: TimeBounds) -> AgentSpec {
        self.time = time;
        self
    }

    pub fn with_history(mut self, capacity: usize) -> AgentSpec {
        self.history_capacity = capacity;
        self
    }
}

/// Uniform action over `0..n_actions` plus a virtual latency.
pub fn random_choice<R: Rng + ?Sized>(
    n_actions: usize,
    time: &TimeBounds,
    rng: &mut R,
) -> (Action, Duration) {
    let action = Action::new(rng.gen_range(0..n_actions));
    (action, time.draw(rng))
}

/// The observer's move from the pre-move snapshot.
///
/// Stays while sharing a cell with Good. Otherwise, among the non-stay
/// actions leading away from the current cell, picks uniformly one that
/// reaches Good's cell; failing that, one whose target holds no Evil;
/// failing that, stays.
pub fn observer_choice<R: Rng + ?Sized>(
    space: &Space,
    snapshot: &Snapshot,
    viewer: AgentId,
    rng: &mut R,
) -> Action {
    match snapshot.cell_of(crate::Occupant::Evaluable(viewer)) {
        Some(here) => observer_pick(space, here, snapshot.good_cell(), snapshot.evil_cell(), rng),
        None => Action::STAY,
    }
}

/// [`observer_choice`] from bare positions.
pub(crate) fn observer_pick<R: Rng + ?Sized>(
    space: &Space,
    here: Cell,
    good: Option<Cell>,
    evil: Option<Cell>,
    rng: &mut R,
) -> Action {
    let moves = || {
        space
            .edges(here)
            .skip(1)
            .filter(move |&(_, target)| target != here)
    };
    if good == Some(here) {
        return Action::STAY;
    }
    let toward_good = |&(_, target): &(Action, Cell)| Some(target) == good;
    let away_from_evil = |&(_, target): &(Action, Cell)| Some(target) != evil;

    let chasing = moves().filter(toward_good).count();
    if chasing > 0 {
        let pick = rng.gen_range(0..chasing);
        return moves().filter(toward_good).nth(pick).unwrap().0;
    }
    let safe = moves().filter(away_from_evil).count();
    if safe > 0 {
        let pick = rng.gen_range(0..safe);
        return moves().filter(away_from_evil).nth(pick).unwrap().0;
    }
    Action::STAY
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorMode {
    /// Uniform over the explicit actions `1..n_actions`.
    Random,
    /// Uniform over every action, stay included.
    RandomAny,
    /// Uniform over the actions whose target differs from the current cell,
    /// staying only when there is none.
    RandomChange,
    /// Cycled indefinitely.
    Pattern(Vec<Action>),
}

/// Movement logic of Good or Evil.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorBehavior {
    pub mode: GeneratorMode,
    pub moves_per_interaction: usize,
}

impl Default for GeneratorBehavior {
    fn default() -> Self {
        GeneratorBehavior::random()
    }
}

impl GeneratorBehavior {
    pub fn random() -> GeneratorBehavior {
        GeneratorBehavior {
            mode: GeneratorMode::Random,
            moves_per_interaction: 1,
        }
    }

    pub fn pattern(actions: Vec<Action>) -> GeneratorBehavior {
        GeneratorBehavior {
            mode: GeneratorMode::Pattern(actions),
            moves_per_interaction: 1,
        }
    }

    pub fn with_moves(mut self, moves: usize) -> GeneratorBehavior {
        self.moves_per_interaction = moves;
        self
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self.mode, GeneratorMode::Pattern(_))
    }

    pub fn with_mode(mut self, mode: GeneratorMode) -> GeneratorBehavior {
        self.mode = mode;
        self
    }

    /// Checks the behaviour against a space with `n_actions` actions.
    pub fn validate(&self, n_actions: usize) -> Result<(), AgentError> {
        if self.moves_per_interaction == 0 {
            return Err(AgentError::NoMoves);
        }
        if let GeneratorMode::Pattern(pattern) = &self.mode {
            if pattern.is_empty() {
                return Err(AgentError::EmptyPattern);
            }
            if let Some(bad) = pattern.iter().find(|a| a.id() >= n_actions) {
                return Err(AgentError::ActionOutOfRange {
                    action: bad.id(),
                    actions: n_actions,
                });
            }
        }
        Ok(())
    }

    /// The `k` moves of interaction `step` starting from `from`. Patterns
    /// advance their cursor by `k` per interaction and never touch `rng`.
    pub fn generator_next<R: Rng + ?Sized>(
        &self,
        step: u64,
        space: &Space,
        from: Cell,
        rng: &mut R,
    ) -> Result<Vec<Action>, AgentError> {
        self.validate(space.action_count())?;
        let mut out = Vec::with_capacity(self.moves_per_interaction);
        self.next_moves_into(step, space, from, rng, &mut out);
        Ok(out)
    }

    /// Unchecked [`GeneratorBehavior::generator_next`] writing into `out`.
    pub(crate) fn next_moves_into<R: Rng + ?Sized>(
        &self,
        step: u64,
        space: &Space,
        from: Cell,
        rng: &mut R,
        out: &mut Vec<Action>,
    ) {
        out.clear();
        let k = self.moves_per_interaction;
        let n_actions = space.action_count();
        match &self.mode {
            GeneratorMode::Random if n_actions > 1 => {
                out.extend((0..k).map(|_| Action::new(rng.gen_range(1..n_actions))));
            }
            GeneratorMode::Random => out.extend((0..k).map(|_| Action::STAY)),
            GeneratorMode::RandomAny => {
                out.extend((0..k).map(|_| Action::new(rng.gen_range(0..n_actions))));
            }
            GeneratorMode::RandomChange => {
                let mut cell = from;
                for _ in 0..k {
                    let leaving = || space.edges(cell).filter(move |&(_, t)| t != cell);
                    let count = leaving().count();
                    let action = if count == 0 {
                        Action::STAY
                    } else {
                        leaving().nth(rng.gen_range(0..count)).unwrap().0
                    };
                    cell = space.step(cell, action);
                    out.push(action);
                }
            }
            GeneratorMode::Pattern(pattern) => {
                let len = pattern.len() as u64;
                let start = (step % len) * (k as u64 % len) % len;
                out.extend((0..k as u64).map(|j| pattern[((start + j) % len) as usize]));
            }
        }
    }
}

impl fmt::Display for GeneratorBehavior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.mode {
            GeneratorMode::Random => f.write_str("random")?,
            GeneratorMode::RandomAny => f.write_str("random-any")?,
            GeneratorMode::RandomChange => f.write_str("random-change")?,
            GeneratorMode::Pattern(p) => {
                f.write_str("pattern:")?;
                for (i, a) in p.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{a}")?;
                }
            }
        }
        if self.moves_per_interaction != 1 {
            write!(f, "x{}", self.moves_per_interaction)?;
        }
        Ok(())
    }
}

impl FromStr for GeneratorBehavior {
    type Err = AgentError;

    /// `random`, `random-any`, `random-change` or `pattern:1,2,3`, optionally suffixed with `x<k>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let syntax = || AgentError::Syntax(s.to_owned());
        let (body, moves) = match s.rsplit_once('x') {
            Some((body, k)) if !k.is_empty() && k.bytes().all(|b| b.is_ascii_digit()) => {
                (body, k.parse::<usize>().map_err(|_| syntax())?)
            }
            _ => (s, 1),
        };
        let behavior = match body {
            "random" => GeneratorBehavior::random(),
            "random-any" => GeneratorBehavior::random().with_mode(GeneratorMode::RandomAny),
            "random-change" => GeneratorBehavior::random().with_mode(GeneratorMode::RandomChange),
            _ => match body.strip_prefix("pattern:") {
                Some(list) => {
                    GeneratorBehavior::pattern(parse_action_list(list).ok_or_else(syntax)?)
                }
                None => return Err(syntax()),
            },
        };
        Ok(behavior.with_moves(moves))
    }
}

/// Parses `1,2,0` into actions.
pub fn parse_action_list(list: &str) -> Option<Vec<Action>> {
    list.split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .ok()
                .filter(|&a| a < crate::space::MAX_ACTIONS)
                .map(Action::new)
        })
        .collect()
}

/// One completed interaction as remembered by an agent.
#[derive(Clone, Debug, PartialEq)]
pub struct InteractionRecord {
    pub observation: Observation,
    pub action: Action,
    pub reward: f64,
    pub elapsed: Duration,
}

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RewardSum {
    sum: f64,
    compensation: f64,
}

impl RewardSum {
    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// The last `capacity` interactions of an agent plus its running reward.
#[derive(Clone, Debug, Default)]
pub struct HistoryBuffer {
    capacity: usize,
    records: VecDeque<InteractionRecord>,
    cumulative: RewardSum,
    interactions: u64,
}

impl HistoryBuffer {
    pub fn new(capacity: usize) -> HistoryBuffer {
        HistoryBuffer {
            capacity,
            records: VecDeque::with_capacity(capacity.min(1024)),
            cumulative: RewardSum::default(),
            interactions: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, record: InteractionRecord) {
        self.credit(record.reward);
        if self.capacity == 0 {
            return;
        }
        if self.records.len() == self.capacity {
            self.records.pop_front();
        }
        self.records.push_back(record);
    }

    /// Counts a reward without keeping a record.
    pub fn credit(&mut self, reward: f64) {
        self.cumulative.add(reward);
        self.interactions += 1;
    }

    pub fn records(&self) -> impl ExactSizeIterator<Item = &InteractionRecord> {
        self.records.iter()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn cumulative_reward(&self) -> f64 {
        self.cumulative.value()
    }

    /// Interactions credited so far, evicted ones included.
    pub fn interactions(&self) -> u64 {
        self.interactions
    }
}
