//! The interaction loop.
//!
//! Every interaction runs, in order: generator relocation (when due), trail
//! drops, delivery of the rewards earned last time, one shared snapshot, the
//! agents' choices, simultaneous moves, the Good/Evil collision rule, reward
//! sharing, halving of every trail and zeroing of occupied cells.
//!
//! Randomness is split into independent streams under the session seed so
//! that adding or removing an evaluable agent never changes what Good and
//! Evil do: stream 0 drives placement, relocation and collision coins,
//! stream 1 the generators, stream 2 space generation and stream `3 + i`
//! evaluable agent `i`.

use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{
    observer_pick, AgentError, AgentId, AgentIdentity, AgentSpec, GeneratorBehavior, HistoryBuffer,
    InteractionRecord, Policy, Role,
};
use crate::generation::{generate_space, GenerationError, GenerationLimits};
use crate::observation::{Observation, Occupant, Snapshot};
use crate::space::{Action, Cell, Space, SpaceError, SpaceObject};
use crate::trace::TraceRow;
use crate::{stream_rng, SessionRng};

pub const ENV_STREAM: u64 = 0;
pub const GENERATOR_STREAM: u64 = 1;
pub const SPACE_STREAM: u64 = 2;
pub const FIRST_AGENT_STREAM: u64 = 3;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpaceSource {
    Manual(String),
    Generated(GenerationLimits),
    Prebuilt(Space),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopCondition {
    Interactions(u64),
    /// Stop once the first evaluable agent's summed decision time reaches
    /// the budget.
    TimeBudget(Duration),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relocation {
    Never,
    /// Every so many interactions; 0 means never.
    Every(u64),
    /// Every `n_c * n_a` interactions.
    SizeProportional,
}

impl Relocation {
    pub fn interval(self, space: &Space) -> u64 {
        match self {
            Relocation::Never => 0,
            Relocation::Every(k) => k,
            Relocation::SizeProportional => (space.cell_count() * space.action_count()) as u64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    Random,
    Fixed {
        good: Cell,
        evil: Cell,
        agents: Vec<Cell>,
    },
}

/// What happens when Good and Evil both moved onto the same cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollisionRule {
    CoinFlip,
    GoodReverts,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub name: String,
    /// Random cell when absent.
    pub cell: Option<Cell>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub space: SpaceSource,
    pub agents: Vec<AgentSpec>,
    pub good: GeneratorBehavior,
    pub evil: GeneratorBehavior,
    pub objects: Vec<ObjectSpec>,
    /// Trail magnitude; Good drops `+max_reward`, Evil `-max_reward`.
    pub max_reward: f64,
    pub stop: StopCondition,
    pub relocation: Relocation,
    pub placement: Placement,
    pub collision: CollisionRule,
    pub seed: u64,
    pub debug_rewards_visible: bool,
    pub record_trace: bool,
}

impl SessionConfig {
    pub fn new(space: SpaceSource, agents: Vec<AgentSpec>) -> SessionConfig {
        SessionConfig {
            space,
            agents,
            good: GeneratorBehavior::random(),
            evil: GeneratorBehavior::random(),
            objects: Vec::new(),
            max_reward: 1.0,
            stop: StopCondition::Interactions(1_000),
            relocation: Relocation::Never,
            placement: Placement::Random,
            collision: CollisionRule::CoinFlip,
            seed: 0,
            debug_rewards_visible: false,
            record_trace: false,
        }
    }

    /// Sets both generators at once.
    pub fn with_generators(mut self, behavior: GeneratorBehavior) -> SessionConfig {
        self.evil = behavior.clone();
        self.good = behavior;
        self
    }

    /// True when two runs can differ only through the evaluable agents.
    pub fn is_deterministic(&self) -> bool {
        self.good.is_deterministic()
            && self.evil.is_deterministic()
            && matches!(self.relocation, Relocation::Never | Relocation::Every(0))
            && self.collision == CollisionRule::GoodReverts
            && matches!(self.placement, Placement::Fixed { .. })
            && self.objects.iter().all(|o| o.cell.is_some())
            && self
                .agents
                .iter()
                .all(|a| matches!(a.policy, Policy::Scripted(_) | Policy::External))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SessionError {
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Generation(#[from] GenerationError),
    #[error("{role:?} generator: {source}")]
    Generator { role: Role, source: AgentError },
    #[error("a session needs at least one evaluable agent")]
    NoEvaluable,
    #[error("max reward {0} is outside [0, 1]")]
    InvalidReward(f64),
    #[error("invalid placement: {0}")]
    InvalidPlacement(String),
    #[error("invalid stop condition: {0}")]
    InvalidStop(String),
    #[error("agent {agent}: {reason}")]
    InvalidAgent { agent: usize, reason: String },
    #[error("no evaluable agent {0}")]
    UnknownAgent(usize),
    #[error("agent {agent} chose action {action}, outside 0..{actions}")]
    ActionOutOfRange {
        agent: usize,
        action: usize,
        actions: usize,
    },
    #[error("agent {0} acts externally and sent no action")]
    MissingAction(usize),
    #[error("agent {0} does not take external actions")]
    UnexpectedAction(usize),
    #[error("the session has finished")]
    Finished,
    #[error("the interaction has not begun")]
    NotAwaitingActions,
    #[error("the interaction already awaits actions")]
    AlreadyAwaiting,
}

/// One action supplied from outside the engine.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExternalMove {
    pub agent: AgentId,
    pub action: Action,
    pub elapsed: Duration,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentScore {
    pub name: String,
    pub cumulative: f64,
    pub interactions: u64,
}

impl AgentScore {
    /// `V / n`, or 0 before any interaction.
    pub fn average(&self) -> f64 {
        if self.interactions == 0 {
            0.0
        } else {
            self.cumulative / self.interactions as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SessionResult {
    pub space_description: String,
    pub scores: Vec<AgentScore>,
    /// Per agent, the reward earned by each interaction.
    pub reward_traces: Vec<Vec<f64>>,
    /// Per agent, summed decision time.
    pub virtual_time: Vec<Duration>,
    pub wall_time: Duration,
    pub trace: Option<Vec<TraceRow>>,
}

#[derive(Debug)]
struct Evaluable {
    spec: AgentSpec,
    cell: Cell,
    rng: SessionRng,
    history: HistoryBuffer,
    /// Earned last interaction, delivered at the start of the next.
    pending: f64,
    /// Observation, action and time awaiting their reward.
    unrewarded: Option<(Observation, Action, Duration)>,
    script_cursor: usize,
    elapsed: Duration,
    earned: Vec<f64>,
}

#[derive(Debug)]
struct Generator {
    behavior: GeneratorBehavior,
    cell: Cell,
}

#[derive(Debug)]
enum Phase {
    Ready,
    Awaiting(Option<Arc<Snapshot>>),
    Finished,
}

/// A live session, driven one interaction at a time.
#[derive(Debug)]
pub struct Session {
    space: Space,
    description: String,
    agents: Vec<Evaluable>,
    good: Generator,
    evil: Generator,
    objects: Vec<SpaceObject>,
    rewards: Vec<f64>,
    occupancy: Vec<u32>,
    moves: Vec<Action>,
    delivered: Vec<f64>,
    env_rng: SessionRng,
    gen_rng: SessionRng,
    interaction: u64,
    phase: Phase,
    max_reward: f64,
    stop: StopCondition,
    relocation_interval: u64,
    collision: CollisionRule,
    debug_rewards_visible: bool,
    trace: Option<Vec<TraceRow>>,
    started: Instant,
}

fn random_cell<R: Rng + ?Sized>(cells: usize, rng: &mut R) -> Cell {
    Cell::new(rng.gen_range(1..=cells))
}

/// Good and Evil together, re-rolled until apart.
fn place_generators<R: Rng + ?Sized>(cells: usize, rng: &mut R) -> (Cell, Cell) {
    loop {
        let good = random_cell(cells, rng);
        let evil = random_cell(cells, rng);
        if good != evil {
            return (good, evil);
        }
    }
}

impl Session {
    pub fn new(config: SessionConfig) -> Result<Session, SessionError> {
        let seed = config.seed;
        let (space, description) = match config.space {
            SpaceSource::Manual(text) => {
                let space = Space::parse(&text)?;
                (space, text)
            }
            SpaceSource::Generated(limits) => {
                let generated = generate_space(&limits, &mut stream_rng(seed, SPACE_STREAM))?;
                (generated.space, generated.description)
            }
            SpaceSource::Prebuilt(space) => {
                let description = space.describe();
                (space, description)
            }
        };
        let cells = space.cell_count();
        let actions = space.action_count();

        if config.agents.is_empty() {
            return Err(SessionError::NoEvaluable);
        }
        if !(0.0..=1.0).contains(&config.max_reward) {
            return Err(SessionError::InvalidReward(config.max_reward));
        }
        config
            .good
            .validate(actions)
            .map_err(|source| SessionError::Generator {
                role: Role::Good,
                source,
            })?;
        config
            .evil
            .validate(actions)
            .map_err(|source| SessionError::Generator {
                role: Role::Evil,
                source,
            })?;
        for (i, agent) in config.agents.iter().enumerate() {
            let invalid = |reason: String| SessionError::InvalidAgent { agent: i, reason };
            if agent.time.min > agent.time.max {
                return Err(invalid("minimum time above maximum time".into()));
            }
            if let Policy::Scripted(script) = &agent.policy {
                if script.is_empty() {
                    return Err(invalid("empty script".into()));
                }
                if let Some(a) = script.iter().find(|a| a.id() >= actions) {
                    return Err(invalid(format!("scripted action {a} outside 0..{actions}")));
                }
            }
        }
        match config.stop {
            StopCondition::Interactions(0) => {
                return Err(SessionError::InvalidStop("zero interactions".into()))
            }
            StopCondition::TimeBudget(budget) => {
                let first = &config.agents[0];
                if budget.is_zero() {
                    return Err(SessionError::InvalidStop("zero time budget".into()));
                }
                if first.policy != Policy::External && first.time.max.is_zero() {
                    return Err(SessionError::InvalidStop(
                        "the evaluated agent takes no time, so the budget never runs out".into(),
                    ));
                }
            }
            StopCondition::Interactions(_) => {}
        }

        let mut env_rng = stream_rng(seed, ENV_STREAM);
        let mut agent_rngs: Vec<SessionRng> = (0..config.agents.len())
            .map(|i| stream_rng(seed, FIRST_AGENT_STREAM + i as u64))
            .collect();

        let in_range = |cell: Cell, what: &str| {
            if space.contains_cell(cell) {
                Ok(cell)
            } else {
                Err(SessionError::InvalidPlacement(format!(
                    "{what} cell {cell} outside 1..={cells}"
                )))
            }
        };
        let (good_cell, evil_cell, agent_cells) = match &config.placement {
            Placement::Random => {
                let (good, evil) = place_generators(cells, &mut env_rng);
                (good, evil, None)
            }
            Placement::Fixed { good, evil, agents } => {
                if good == evil {
                    return Err(SessionError::InvalidPlacement(
                        "Good and Evil must start apart".into(),
                    ));
                }
                if agents.len() != config.agents.len() {
                    return Err(SessionError::InvalidPlacement(format!(
                        "{} agent cells for {} agents",
                        agents.len(),
                        config.agents.len()
                    )));
                }
                for &a in agents {
                    in_range(a, "agent")?;
                }
                (
                    in_range(*good, "Good")?,
                    in_range(*evil, "Evil")?,
                    Some(agents.clone()),
                )
            }
        };
        let mut objects = Vec::with_capacity(config.objects.len());
        for object in &config.objects {
            let location = match object.cell {
                Some(cell) => in_range(cell, "object")?,
                None => random_cell(cells, &mut env_rng),
            };
            objects.push(SpaceObject {
                name: object.name.clone(),
                location,
            });
        }

        let agents = config
            .agents
            .into_iter()
            .zip(agent_rngs.iter_mut())
            .enumerate()
            .map(|(i, (spec, rng))| {
                let cell = match &agent_cells {
                    Some(fixed) => fixed[i],
                    None => random_cell(cells, rng),
                };
                Evaluable {
                    history: HistoryBuffer::new(spec.history_capacity),
                    spec,
                    cell,
                    rng: rng.clone(),
                    pending: 0.0,
                    unrewarded: None,
                    script_cursor: 0,
                    elapsed: Duration::ZERO,
                    earned: Vec::new(),
                }
            })
            .collect::<Vec<_>>();

        let relocation_interval = config.relocation.interval(&space);
        Ok(Session {
            delivered: vec![0.0; agents.len()],
            agents,
            good: Generator {
                behavior: config.good,
                cell: good_cell,
            },
            evil: Generator {
                behavior: config.evil,
                cell: evil_cell,
            },
            objects,
            rewards: vec![0.0; cells],
            occupancy: vec![0; cells],
            moves: Vec::new(),
            env_rng,
            gen_rng: stream_rng(seed, GENERATOR_STREAM),
            interaction: 0,
            phase: Phase::Ready,
            max_reward: config.max_reward,
            stop: config.stop,
            relocation_interval,
            collision: config.collision,
            debug_rewards_visible: config.debug_rewards_visible,
            trace: config.record_trace.then(Vec::new),
            started: Instant::now(),
            space,
            description,
        })
    }

    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    pub fn agent_count(&self) -> usize {
        self.agents.len()
    }

    pub fn identities(&self) -> Vec<AgentIdentity> {
        let mut out: Vec<AgentIdentity> = self
            .agents
            .iter()
            .enumerate()
            .map(|(i, a)| AgentIdentity {
                name: a.spec.name.clone(),
                role: Role::Evaluable,
                display_index: i,
            })
            .collect();
        let n = out.len();
        out.push(AgentIdentity {
            name: "good".into(),
            role: Role::Good,
            display_index: n,
        });
        out.push(AgentIdentity {
            name: "evil".into(),
            role: Role::Evil,
            display_index: n + 1,
        });
        out
    }

    pub fn agent_spec(&self, agent: AgentId) -> Option<&AgentSpec> {
        self.agents.get(agent.0).map(|a| &a.spec)
    }

    pub fn objects(&self) -> &[SpaceObject] {
        &self.objects
    }

    /// Interactions completed so far.
    pub fn interaction_index(&self) -> u64 {
        self.interaction
    }

    pub fn relocation_interval(&self) -> u64 {
        self.relocation_interval
    }

    pub fn debug_rewards_visible(&self) -> bool {
        self.debug_rewards_visible
    }

    pub fn cell_rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn agent_cell(&self, agent: AgentId) -> Option<Cell> {
        self.agents.get(agent.0).map(|a| a.cell)
    }

    pub fn good_cell(&self) -> Cell {
        self.good.cell
    }

    pub fn evil_cell(&self) -> Cell {
        self.evil.cell
    }

    /// Rewards handed out at the start of the current interaction.
    pub fn last_delivered(&self) -> &[f64] {
        &self.delivered
    }

    /// Reward earned by the last completed interaction, not yet credited.
    pub fn pending_reward(&self, agent: AgentId) -> Option<f64> {
        self.agents.get(agent.0).map(|a| a.pending)
    }

    /// Rewards credited so far; excludes the pending one.
    pub fn cumulative_reward(&self, agent: AgentId) -> Option<f64> {
        self.agents
            .get(agent.0)
            .map(|a| a.history.cumulative_reward())
    }

    pub fn history(&self, agent: AgentId) -> Option<&HistoryBuffer> {
        self.agents.get(agent.0).map(|a| &a.history)
    }

    pub fn virtual_time(&self, agent: AgentId) -> Option<Duration> {
        self.agents.get(agent.0).map(|a| a.elapsed)
    }

    pub fn is_awaiting_actions(&self) -> bool {
        matches!(self.phase, Phase::Awaiting(_))
    }

    pub fn is_finished(&self) -> bool {
        match self.phase {
            Phase::Finished => true,
            Phase::Awaiting(_) => false,
            Phase::Ready => match self.stop {
                StopCondition::Interactions(n) => self.interaction >= n,
                StopCondition::TimeBudget(budget) => self.agents[0].elapsed >= budget,
            },
        }
    }

    /// Current positions of everything in the space.
    pub fn snapshot(&self) -> Snapshot {
        let mut entries = Vec::with_capacity(self.agents.len() + 2 + self.objects.len());
        entries.extend(
            self.agents
                .iter()
                .enumerate()
                .map(|(i, a)| (Occupant::Evaluable(AgentId(i)), a.cell)),
        );
        entries.push((Occupant::Good, self.good.cell));
        entries.push((Occupant::Evil, self.evil.cell));
        entries.extend(
            self.objects
                .iter()
                .enumerate()
                .map(|(i, o)| (Occupant::Object(i + 1), o.location)),
        );
        Snapshot::new(self.space.cell_count(), entries)
    }

    /// Moves Good and Evil to fresh random cells; trails stay.
    pub fn relocate_generators(&mut self) {
        let (good, evil) = place_generators(self.space.cell_count(), &mut self.env_rng);
        self.good.cell = good;
        self.evil.cell = evil;
    }

    /// Relocation, trail drops, reward delivery and the shared snapshot.
    pub fn begin_interaction(&mut self) -> Result<Arc<Snapshot>, SessionError> {
        let snapshot = self.begin(true)?;
        Ok(snapshot.expect("snapshot requested"))
    }

    fn begin(&mut self, want_snapshot: bool) -> Result<Option<Arc<Snapshot>>, SessionError> {
        match self.phase {
            Phase::Awaiting(_) => return Err(SessionError::AlreadyAwaiting),
            Phase::Finished => return Err(SessionError::Finished),
            Phase::Ready if self.is_finished() => return Err(SessionError::Finished),
            Phase::Ready => {}
        }
        let i = self.interaction;
        if self.relocation_interval > 0 && i > 0 && i.is_multiple_of(self.relocation_interval) {
            self.relocate_generators();
        }
        self.rewards[self.good.cell.index()] = self.max_reward;
        self.rewards[self.evil.cell.index()] = -self.max_reward;
        for (agent, delivered) in self.agents.iter_mut().zip(self.delivered.iter_mut()) {
            *delivered = agent.pending;
            if i > 0 {
                agent.credit_pending();
            }
        }
        let needs_snapshot = want_snapshot
            || self.trace.is_some()
            || self.agents.iter().any(|a| a.spec.history_capacity > 0);
        let snapshot = needs_snapshot.then(|| Arc::new(self.snapshot()));
        self.phase = Phase::Awaiting(snapshot.clone());
        Ok(snapshot)
    }

    /// What `agent` sees of the interaction in progress.
    pub fn observation_for(&self, agent: AgentId) -> Result<Observation, SessionError> {
        let Phase::Awaiting(Some(snapshot)) = &self.phase else {
            return Err(SessionError::NotAwaitingActions);
        };
        Observation::perceive(snapshot.clone(), &self.space, agent)
            .ok_or(SessionError::UnknownAgent(agent.0))
    }

    /// Choices, moves, collision, sharing and decay. `external` carries one
    /// move per externally driven agent. Nothing changes on error.
    pub fn complete_interaction(&mut self, external: &[ExternalMove]) -> Result<(), SessionError> {
        let snapshot = match &self.phase {
            Phase::Awaiting(snapshot) => snapshot.clone(),
            Phase::Ready => return Err(SessionError::NotAwaitingActions),
            Phase::Finished => return Err(SessionError::Finished),
        };
        let n_actions = self.space.action_count();
        for m in external {
            let agent = self
                .agents
                .get(m.agent.0)
                .ok_or(SessionError::UnknownAgent(m.agent.0))?;
            if agent.spec.policy != Policy::External {
                return Err(SessionError::UnexpectedAction(m.agent.0));
            }
            if m.action.id() >= n_actions {
                return Err(SessionError::ActionOutOfRange {
                    agent: m.agent.0,
                    action: m.action.id(),
                    actions: n_actions,
                });
            }
        }
        if let Some(i) = self.agents.iter().enumerate().position(|(i, a)| {
            a.spec.policy == Policy::External && !external.iter().any(|m| m.agent.0 == i)
        }) {
            return Err(SessionError::MissingAction(i));
        }

        let good_before = self.good.cell;
        let evil_before = self.evil.cell;

        let mut chosen = Vec::with_capacity(self.agents.len());
        for (i, agent) in self.agents.iter_mut().enumerate() {
            let (action, elapsed) = match &agent.spec.policy {
                Policy::Random => {
                    crate::agents::random_choice(n_actions, &agent.spec.time, &mut agent.rng)
                }
                Policy::Observer => {
                    let action = observer_pick(
                        &self.space,
                        agent.cell,
                        Some(good_before),
                        Some(evil_before),
                        &mut agent.rng,
                    );
                    (action, agent.spec.time.draw(&mut agent.rng))
                }
                Policy::Scripted(script) => {
                    let action = script[agent.script_cursor % script.len()];
                    agent.script_cursor += 1;
                    (action, agent.spec.time.min)
                }
                Policy::External => {
                    let m = external.iter().find(|m| m.agent.0 == i).unwrap();
                    (m.action, m.elapsed)
                }
            };
            chosen.push((action, elapsed));
        }

        let step = self.interaction;
        let good_after = self.move_generator(true, step);
        let evil_after = self.move_generator(false, step);
        let (good_final, evil_final) = if good_after == evil_after {
            let good_reverts = if good_after == good_before {
                false
            } else if evil_after == evil_before {
                true
            } else {
                match self.collision {
                    CollisionRule::CoinFlip => self.env_rng.gen_bool(0.5),
                    CollisionRule::GoodReverts => true,
                }
            };
            if good_reverts {
                (good_before, evil_after)
            } else {
                (good_after, evil_before)
            }
        } else {
            (good_after, evil_after)
        };
        self.good.cell = good_final;
        self.evil.cell = evil_final;
        debug_assert_ne!(self.good.cell, self.evil.cell);

        for (agent, &(action, _)) in self.agents.iter_mut().zip(&chosen) {
            agent.cell = self.space.step(agent.cell, action);
        }

        self.occupancy.iter_mut().for_each(|c| *c = 0);
        self.occupancy[good_final.index()] += 1;
        self.occupancy[evil_final.index()] += 1;
        for agent in &self.agents {
            self.occupancy[agent.cell.index()] += 1;
        }
        for agent in &mut self.agents {
            let cell = agent.cell.index();
            agent.pending = self.rewards[cell] / f64::from(self.occupancy[cell]);
            agent.earned.push(agent.pending);
        }
        for (reward, &count) in self.rewards.iter_mut().zip(&self.occupancy) {
            *reward = if count > 0 { 0.0 } else { *reward / 2.0 };
        }

        for (i, (agent, &(action, elapsed))) in self.agents.iter_mut().zip(&chosen).enumerate() {
            agent.elapsed += elapsed;
            if agent.spec.history_capacity > 0 {
                let snapshot = snapshot.clone().expect("snapshot kept for histories");
                let observation = Observation::perceive(snapshot, &self.space, AgentId(i))
                    .expect("every agent is in the snapshot");
                agent.unrewarded = Some((observation, action, elapsed));
            }
        }
        if let Some(trace) = &mut self.trace {
            trace.push(TraceRow {
                index: step,
                actions: chosen.iter().map(|&(a, _)| a).collect(),
                rewards: self.agents.iter().map(|a| a.pending).collect(),
                good_cell: good_final,
                evil_cell: evil_final,
                evaluated_cell: self.agents[0].cell,
            });
        }
        self.interaction += 1;
        self.phase = Phase::Ready;
        Ok(())
    }

    fn move_generator(&mut self, good: bool, step: u64) -> Cell {
        let generator = if good { &self.good } else { &self.evil };
        let mut moves = std::mem::take(&mut self.moves);
        generator.behavior.next_moves_into(
            step,
            &self.space,
            generator.cell,
            &mut self.gen_rng,
            &mut moves,
        );
        let cell = moves
            .iter()
            .fold(generator.cell, |c, &a| self.space.step(c, a));
        self.moves = moves;
        cell
    }

    /// One whole interaction for sessions without external agents.
    pub fn advance_interaction(&mut self) -> Result<(), SessionError> {
        self.begin(false)?;
        self.complete_interaction(&[])
    }

    /// Credits the final earned rewards and scores every agent.
    pub fn finish(mut self) -> SessionResult {
        if !matches!(self.phase, Phase::Finished) && self.interaction > 0 {
            for agent in &mut self.agents {
                agent.credit_pending();
            }
        }
        self.phase = Phase::Finished;
        let wall_time = self.started.elapsed();
        let mut scores = Vec::with_capacity(self.agents.len());
        let mut reward_traces = Vec::with_capacity(self.agents.len());
        let mut virtual_time = Vec::with_capacity(self.agents.len());
        for agent in self.agents {
            scores.push(AgentScore {
                name: agent.spec.name,
                cumulative: agent.history.cumulative_reward(),
                interactions: agent.history.interactions(),
            });
            reward_traces.push(agent.earned);
            virtual_time.push(agent.elapsed);
        }
        SessionResult {
            space_description: self.description,
            scores,
            reward_traces,
            virtual_time,
            wall_time,
            trace: self.trace,
        }
    }
}

impl Evaluable {
    fn credit_pending(&mut self) {
        match self.unrewarded.take() {
            Some((observation, action, elapsed)) => self.history.push(InteractionRecord {
                observation,
                action,
                reward: self.pending,
                elapsed,
            }),
            None => self.history.credit(self.pending),
        }
    }
}

/// Runs a session with no external agents to its stop condition.
pub fn run_session(config: SessionConfig) -> Result<SessionResult, SessionError> {
    if let Some(i) = config
        .agents
        .iter()
        .position(|a| a.policy == Policy::External)
    {
        return Err(SessionError::MissingAction(i));
    }
    let mut session = Session::new(config)?;
    while !session.is_finished() {
        session.advance_interaction()?;
    }
    Ok(session.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::TimeBounds;

    fn c(n: usize) -> Cell {
        Cell::new(n)
    }

    fn a(id: usize) -> Action {
        Action::new(id)
    }

    fn config(desc: &str, agents: Vec<AgentSpec>) -> SessionConfig {
        SessionConfig::new(SpaceSource::Manual(desc.into()), agents)
    }

    fn fixed(
        desc: &str,
        agents: Vec<AgentSpec>,
        good: usize,
        evil: usize,
        at: &[usize],
    ) -> SessionConfig {
        SessionConfig {
            placement: Placement::Fixed {
                good: c(good),
                evil: c(evil),
                agents: at.iter().map(|&n| c(n)).collect(),
            },
            collision: CollisionRule::GoodReverts,
            ..config(desc, agents)
        }
        .with_generators(GeneratorBehavior::pattern(vec![a(0)]))
    }

    #[test]
    fn init_separates_generators_and_clears_rewards() {
        for seed in 0..200 {
            let s = Session::new(SessionConfig {
                seed,
                ..config("1+|1-", vec![AgentSpec::random()])
            })
            .unwrap();
            assert_ne!(s.good_cell(), s.evil_cell());
            assert!(s.cell_rewards().iter().all(|&r| r == 0.0));
        }
    }

    #[test]
    fn init_is_reproducible() {
        let make = || {
            let s = Session::new(SessionConfig {
                seed: 77,
                ..config(
                    "1+2++3|1+23-|1+23|1+2--3-",
                    vec![AgentSpec::random(), AgentSpec::observer()],
                )
            })
            .unwrap();
            (
                s.good_cell(),
                s.evil_cell(),
                s.agent_cell(AgentId(0)),
                s.agent_cell(AgentId(1)),
            )
        };
        assert_eq!(make(), make());
    }

    #[test]
    fn unvisited_trail_halves() {
        // Good steps forward each interaction from cell 2; Evil and the agent
        // stay on cells 1 and 3.
        let cfg = SessionConfig {
            good: GeneratorBehavior::pattern(vec![a(1)]),
            ..fixed(
                "1+2|1+2|1+2",
                vec![AgentSpec::scripted(vec![a(0)])],
                2,
                1,
                &[3],
            )
        };
        let mut s = Session::new(cfg).unwrap();
        s.advance_interaction().unwrap();
        assert_eq!(s.cell_rewards(), &[0.0, 0.5, 0.0]);
        // Good's step onto Evil's cell 1 is undone.
        s.advance_interaction().unwrap();
        assert_eq!(s.good_cell(), c(3));
        assert_eq!(s.cell_rewards(), &[0.0, 0.25, 0.0]);
        assert_eq!(s.pending_reward(AgentId(0)), Some(0.5));
    }

    #[test]
    fn shared_cells_split_the_reward() {
        // Three agents join Good's cell after the drop; with Good that is
        // four occupants of a +1 cell.
        let desc = "1+|1+|1+";
        let agents = vec![
            AgentSpec::scripted(vec![a(1)]),
            AgentSpec::scripted(vec![a(1)]),
            AgentSpec::scripted(vec![a(0)]),
        ];
        let cfg = fixed(desc, agents, 2, 3, &[1, 1, 2]);
        let mut s = Session::new(cfg).unwrap();
        s.advance_interaction().unwrap();
        for i in 0..3 {
            assert_eq!(s.pending_reward(AgentId(i)), Some(0.25));
        }
    }

    #[test]
    fn first_delivery_is_zero_and_last_is_credited() {
        let cfg = SessionConfig {
            stop: StopCondition::Interactions(3),
            ..fixed("1+|1-", vec![AgentSpec::scripted(vec![a(0)])], 1, 2, &[1])
        };
        let mut s = Session::new(cfg).unwrap();
        s.advance_interaction().unwrap();
        assert_eq!(s.last_delivered(), &[0.0]);
        assert_eq!(s.cumulative_reward(AgentId(0)), Some(0.0));
        s.advance_interaction().unwrap();
        assert_eq!(s.last_delivered(), &[0.5]);
        s.advance_interaction().unwrap();
        assert!(s.is_finished());
        let result = s.finish();
        assert_eq!(result.scores[0].interactions, 3);
        assert_eq!(result.scores[0].cumulative, 1.5);
        assert_eq!(result.reward_traces[0], [0.5, 0.5, 0.5]);
        assert_eq!(result.scores[0].average(), 0.5);
    }

    #[test]
    fn collision_rules() {
        // From cell 1, a1 reaches 2 and a2 reaches 3; from cell 3, a1
        // reaches 1 and a2 reaches 2.
        let desc = "1+2++|1-2+|1--2-";
        let run = |good: Vec<usize>, evil: Vec<usize>, rule| {
            let cfg = SessionConfig {
                good: GeneratorBehavior::pattern(good.into_iter().map(Action::new).collect()),
                evil: GeneratorBehavior::pattern(evil.into_iter().map(Action::new).collect()),
                collision: rule,
                ..fixed(desc, vec![AgentSpec::scripted(vec![a(0)])], 1, 3, &[1])
            };
            let mut s = Session::new(cfg).unwrap();
            s.advance_interaction().unwrap();
            (s.good_cell().number(), s.evil_cell().number())
        };
        // Good stays on 1, Evil moves onto it: Evil reverts.
        assert_eq!(run(vec![0], vec![1], CollisionRule::CoinFlip), (1, 3));
        // Evil stays on 3, Good moves onto it: Good reverts.
        assert_eq!(run(vec![2], vec![0], CollisionRule::CoinFlip), (1, 3));
        // Both move onto 2.
        assert_eq!(run(vec![1], vec![2], CollisionRule::GoodReverts), (1, 2));
    }

    #[test]
    fn coin_flip_is_fair() {
        let desc = "1+2++|1-2+|1--2-";
        let mut good_reverted = 0;
        let trials = 1_000;
        for seed in 0..trials {
            let cfg = SessionConfig {
                good: GeneratorBehavior::pattern(vec![a(1)]),
                evil: GeneratorBehavior::pattern(vec![a(2)]),
                collision: CollisionRule::CoinFlip,
                seed,
                ..fixed(desc, vec![AgentSpec::scripted(vec![a(0)])], 1, 3, &[1])
            };
            let mut s = Session::new(cfg).unwrap();
            s.advance_interaction().unwrap();
            if s.good_cell() == c(1) {
                good_reverted += 1;
            }
        }
        assert!((good_reverted as f64 / trials as f64 - 0.5).abs() <= 0.05);
    }

    #[test]
    fn relocation_keeps_trails() {
        let mut s = Session::new(SessionConfig {
            seed: 3,
            ..config("1+2++3|1+23-|1+23|1+2--3-", vec![AgentSpec::random()])
        })
        .unwrap();
        for _ in 0..100 {
            s.advance_interaction().unwrap();
            let before = s.cell_rewards().to_vec();
            s.relocate_generators();
            assert_eq!(s.cell_rewards(), before.as_slice());
            assert_ne!(s.good_cell(), s.evil_cell());
        }
    }

    #[test]
    fn disabled_relocation_never_moves_pattern_generators() {
        let cfg = SessionConfig {
            relocation: Relocation::Every(0),
            stop: StopCondition::Interactions(500),
            ..fixed("1+|1-", vec![AgentSpec::random()], 1, 2, &[1])
        };
        let mut s = Session::new(cfg).unwrap();
        while !s.is_finished() {
            s.advance_interaction().unwrap();
            assert_eq!((s.good_cell(), s.evil_cell()), (c(1), c(2)));
        }
    }

    #[test]
    fn size_proportional_interval() {
        let space = Space::parse("1+2++3|1+23-|1+23|1+2--3-").unwrap();
        assert_eq!(Relocation::SizeProportional.interval(&space), 16);
        assert_eq!(Relocation::Never.interval(&space), 0);
    }

    #[test]
    fn snapshot_is_a_copy() {
        let mut s = Session::new(config("1+|1-", vec![AgentSpec::random()])).unwrap();
        let snap = s.begin_interaction().unwrap();
        let before = (*snap).clone();
        s.complete_interaction(&[]).unwrap();
        for _ in 0..10 {
            s.advance_interaction().unwrap();
        }
        assert_eq!(*snap, before);
        assert_eq!(snap.entries().len(), 3);
    }

    #[test]
    fn observer_scores_one_half_on_two_cells() {
        for seed in 0..20 {
            for relocation in [Relocation::Never, Relocation::SizeProportional] {
                let result = run_session(SessionConfig {
                    seed,
                    relocation,
                    stop: StopCondition::Interactions(1_000),
                    ..config("1+|1-", vec![AgentSpec::observer()])
                })
                .unwrap();
                assert_eq!(result.scores[0].average(), 0.5);
                assert!(result.reward_traces[0].iter().all(|&r| r == 0.5));
            }
        }
    }

    #[test]
    fn same_seed_same_trace() {
        let run = || {
            run_session(SessionConfig {
                seed: 5,
                record_trace: true,
                relocation: Relocation::Every(7),
                stop: StopCondition::Interactions(300),
                ..config(
                    "1+2++3|1+23-|1+23|1+2--3-",
                    vec![AgentSpec::random(), AgentSpec::observer()],
                )
            })
            .unwrap()
        };
        let (x, y) = (run(), run());
        assert_eq!(x.trace, y.trace);
        assert_eq!(x.reward_traces, y.reward_traces);
        assert_eq!(x.trace.unwrap().len(), 300);
    }

    #[test]
    fn time_budget_stops_on_the_evaluated_agent() {
        let result = run_session(SessionConfig {
            stop: StopCondition::TimeBudget(Duration::from_millis(1_000)),
            ..config(
                "1+|1-",
                vec![AgentSpec::random().with_time(TimeBounds::millis(100, 100))],
            )
        })
        .unwrap();
        assert_eq!(result.scores[0].interactions, 10);
        assert_eq!(result.virtual_time[0], Duration::from_millis(1_000));

        let err = Session::new(SessionConfig {
            stop: StopCondition::TimeBudget(Duration::from_millis(10)),
            ..config("1+|1-", vec![AgentSpec::random()])
        })
        .unwrap_err();
        assert!(matches!(err, SessionError::InvalidStop(_)));
    }

    #[test]
    fn external_moves_are_validated_before_anything_changes() {
        let mut s = Session::new(SessionConfig {
            seed: 1,
            ..config(
                "1+|1-",
                vec![AgentSpec::external("human"), AgentSpec::random()],
            )
        })
        .unwrap();
        assert_eq!(
            s.complete_interaction(&[]),
            Err(SessionError::NotAwaitingActions)
        );
        s.begin_interaction().unwrap();
        let rewards = s.cell_rewards().to_vec();
        let bad = ExternalMove {
            agent: AgentId(0),
            action: a(5),
            elapsed: Duration::ZERO,
        };
        assert!(matches!(
            s.complete_interaction(&[bad]),
            Err(SessionError::ActionOutOfRange { .. })
        ));
        assert_eq!(
            s.complete_interaction(&[]),
            Err(SessionError::MissingAction(0))
        );
        let wrong = ExternalMove {
            agent: AgentId(1),
            action: a(0),
            elapsed: Duration::ZERO,
        };
        assert_eq!(
            s.complete_interaction(&[wrong]),
            Err(SessionError::UnexpectedAction(1))
        );
        assert_eq!(s.cell_rewards(), rewards.as_slice());
        assert_eq!(s.interaction_index(), 0);
        let ok = ExternalMove {
            agent: AgentId(0),
            action: a(0),
            elapsed: Duration::from_millis(3),
        };
        s.complete_interaction(&[ok]).unwrap();
        assert_eq!(s.interaction_index(), 1);
        assert_eq!(s.virtual_time(AgentId(0)), Some(Duration::from_millis(3)));
    }

    #[test]
    fn histories_record_observations_and_rewards() {
        let cfg = SessionConfig {
            stop: StopCondition::Interactions(4),
            ..fixed(
                "1+|1-",
                vec![AgentSpec::scripted(vec![a(0)]).with_history(2)],
                1,
                2,
                &[1],
            )
        };
        let mut s = Session::new(cfg).unwrap();
        while !s.is_finished() {
            s.advance_interaction().unwrap();
        }
        let h = s.history(AgentId(0)).unwrap();
        assert_eq!(h.len(), 2);
        let record = h.records().next().unwrap();
        assert_eq!(record.reward, 0.5);
        assert_eq!(record.observation.current_cell(), c(1));
        let result = s.finish();
        assert_eq!(result.scores[0].cumulative, 2.0);
    }

    #[test]
    fn config_errors() {
        assert_eq!(
            Session::new(config("1+|1-", vec![])).unwrap_err(),
            SessionError::NoEvaluable
        );
        assert!(matches!(
            Session::new(config("1+|", vec![AgentSpec::random()])).unwrap_err(),
            SessionError::Space(_)
        ));
        assert!(matches!(
            Session::new(SessionConfig {
                max_reward: 1.5,
                ..config("1+|1-", vec![AgentSpec::random()])
            })
            .unwrap_err(),
            SessionError::InvalidReward(_)
        ));
        assert!(matches!(
            Session::new(SessionConfig {
                good: GeneratorBehavior::pattern(vec![a(4)]),
                ..config("1+|1-", vec![AgentSpec::random()])
            })
            .unwrap_err(),
            SessionError::Generator {
                role: Role::Good,
                ..
            }
        ));
        assert!(matches!(
            Session::new(fixed("1+|1-", vec![AgentSpec::random()], 1, 1, &[1])).unwrap_err(),
            SessionError::InvalidPlacement(_)
        ));
        assert!(matches!(
            Session::new(config("1+|1-", vec![AgentSpec::scripted(vec![a(3)])])).unwrap_err(),
            SessionError::InvalidAgent { agent: 0, .. }
        ));
        assert!(matches!(
            run_session(config("1+|1-", vec![AgentSpec::external("x")])).unwrap_err(),
            SessionError::MissingAction(0)
        ));
    }

    #[test]
    fn generated_spaces_come_from_their_own_stream() {
        let limits = GenerationLimits::fixed(6, 4, crate::Connectivity::StronglyConnected);
        let make = |agents| {
            Session::new(SessionConfig {
                seed: 9,
                ..SessionConfig::new(SpaceSource::Generated(limits.clone()), agents)
            })
            .unwrap()
            .description()
            .to_owned()
        };
        assert_eq!(
            make(vec![AgentSpec::random()]),
            make(vec![AgentSpec::observer(), AgentSpec::random()])
        );
    }
}
