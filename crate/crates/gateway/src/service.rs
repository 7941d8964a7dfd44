//! Turn-based sessions driven by one external agent.
//!
//! Every session has an externally driven evaluable agent at index 0 and
//! optional synthetic co-agents. The world only moves when the external
//! action arrives.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, TryLockError};
use std::time::{Duration, Instant};

use lambda_env::{
    AgentId, AgentSpec, Connectivity, ExternalMove, GenerationLimits, GeneratorBehavior,
    Observation, Occupant, Relocation, Session, SessionConfig, SessionError, SessionResult,
    SpaceSource, StopCondition,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use uuid::Uuid;

pub const DEFAULT_IDLE_TIMEOUT: Duration = Duration::from_secs(30 * 60);

const EXTERNAL: AgentId = AgentId(0);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpaceRequest {
    /// A space description such as `1+2++3|1+23-|1+23|1+2--3-`.
    Manual(String),
    Auto {
        min_cells: usize,
        #[serde(default)]
        max_cells: Option<usize>,
        /// Total action count, stay included.
        #[serde(default)]
        actions: Option<usize>,
        #[serde(default = "default_connectivity")]
        connectivity: String,
    },
}

fn default_connectivity() -> String {
    "connected".into()
}

fn default_agent_name() -> String {
    "human".into()
}

/// Body of `POST /sessions`. Exactly one of `iterations` and
/// `time_budget_ms` must be set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub space: SpaceRequest,
    #[serde(default)]
    pub iterations: Option<u64>,
    /// Wall-clock budget of the external agent.
    #[serde(default)]
    pub time_budget_ms: Option<u64>,
    /// `never`, `auto` or `every:<k>`.
    #[serde(default)]
    pub relocation: Option<String>,
    #[serde(default)]
    pub debug: bool,
    #[serde(default = "default_agent_name")]
    pub agent_name: String,
    /// Synthetic agents evaluated alongside: `random` or `observer`.
    #[serde(default)]
    pub co_agents: Vec<String>,
    /// Generator behaviour for both Good and Evil, e.g. `random` or
    /// `pattern:1,2`.
    #[serde(default)]
    pub generator: Option<String>,
    #[serde(default)]
    pub good: Option<String>,
    #[serde(default)]
    pub evil: Option<String>,
    #[serde(default)]
    pub moves: Option<usize>,
    #[serde(default)]
    pub max_reward: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl CreateSession {
    pub fn manual(description: &str, iterations: u64) -> CreateSession {
        CreateSession {
            space: SpaceRequest::Manual(description.into()),
            iterations: Some(iterations),
            time_budget_ms: None,
            relocation: None,
            debug: false,
            agent_name: default_agent_name(),
            co_agents: Vec::new(),
            generator: None,
            good: None,
            evil: None,
            moves: None,
            max_reward: None,
            seed: None,
        }
    }

    /// The engine configuration this request describes, with `seed`.
    pub fn session_config(&self, seed: u64) -> Result<SessionConfig, ServiceError> {
        let invalid = |m: String| ServiceError::InvalidRequest(m);
        let space = match &self.space {
            SpaceRequest::Manual(text) => SpaceSource::Manual(text.clone()),
            SpaceRequest::Auto {
                min_cells,
                max_cells,
                actions,
                connectivity,
            } => {
                let connectivity: Connectivity = connectivity
                    .parse()
                    .map_err(|e: lambda_env::SpaceError| invalid(e.to_string()))?;
                let mut limits = GenerationLimits {
                    min_cells: *min_cells,
                    max_cells: *max_cells,
                    connectivity,
                    ..GenerationLimits::default()
                };
                if let Some(a) = actions {
                    limits.min_actions = *a;
                    limits.max_actions = *a;
                }
                limits.validate().map_err(|e| invalid(e.to_string()))?;
                SpaceSource::Generated(limits)
            }
        };
        let stop = match (self.iterations, self.time_budget_ms) {
            (Some(n), None) => StopCondition::Interactions(n),
            (None, Some(ms)) => StopCondition::TimeBudget(Duration::from_millis(ms)),
            _ => {
                return Err(invalid(
                    "exactly one of iterations and time_budget_ms is required".into(),
                ))
            }
        };
        let relocation = match &self.relocation {
            Some(text) => text.parse::<Relocation>().map_err(invalid)?,
            None => Relocation::Never,
        };
        let mut agents = vec![AgentSpec::external(self.agent_name.clone())];
        for name in &self.co_agents {
            agents.push(match name.as_str() {
                "random" => AgentSpec::random(),
                "observer" => AgentSpec::observer(),
                other => return Err(invalid(format!("unknown co-agent {other:?}"))),
            });
        }
        let behavior = |text: &Option<String>, fallback: &GeneratorBehavior| match text {
            Some(t) => t
                .parse::<GeneratorBehavior>()
                .map_err(|e| invalid(e.to_string())),
            None => Ok(fallback.clone()),
        };
        let shared = behavior(&self.generator, &GeneratorBehavior::random())?;
        let mut good = behavior(&self.good, &shared)?;
        let mut evil = behavior(&self.evil, &shared)?;
        if let Some(k) = self.moves {
            good.moves_per_interaction = k;
            evil.moves_per_interaction = k;
        }
        let defaults = SessionConfig::new(space.clone(), agents.clone());
        Ok(SessionConfig {
            good,
            evil,
            stop,
            relocation,
            seed,
            max_reward: self.max_reward.unwrap_or(defaults.max_reward),
            debug_rewards_visible: self.debug,
            ..defaults
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OccupantJson {
    pub role: String,
    pub name: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellJson {
    /// Cell number, from 1.
    pub index: usize,
    pub occupants: Vec<OccupantJson>,
    /// Actions leading from the current cell to this one.
    pub reachable_actions: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationJson {
    pub cells: Vec<CellJson>,
    pub current_cell: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub debug_rewards: Option<Vec<f64>>,
}

impl ObservationJson {
    fn new(observation: &Observation, session: &Session) -> ObservationJson {
        let snapshot = observation.snapshot();
        let name = |o: Occupant| match o {
            Occupant::Evaluable(id) => (
                "evaluable",
                session
                    .agent_spec(id)
                    .map(|s| s.name.clone())
                    .unwrap_or_default(),
            ),
            Occupant::Good => ("good", "good".to_owned()),
            Occupant::Evil => ("evil", "evil".to_owned()),
            Occupant::Object(n) => (
                "object",
                session
                    .objects()
                    .get(n - 1)
                    .map(|o| o.name.clone())
                    .unwrap_or_default(),
            ),
        };
        let cells = session
            .space()
            .cells()
            .map(|cell| CellJson {
                index: cell.number(),
                occupants: snapshot
                    .occupants(cell)
                    .map(|o| {
                        let (role, name) = name(o);
                        OccupantJson {
                            role: role.to_owned(),
                            name,
                        }
                    })
                    .collect(),
                reachable_actions: observation
                    .reachable_actions(cell)
                    .iter()
                    .map(|a| a.id())
                    .collect(),
            })
            .collect();
        ObservationJson {
            cells,
            current_cell: observation.current_cell().number(),
            debug_rewards: session
                .debug_rewards_visible()
                .then(|| session.cell_rewards().to_vec()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Created {
    pub session_id: String,
    pub observation: ObservationJson,
    pub actions: Vec<usize>,
    pub seed: u64,
    pub space: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionReply {
    pub reward: f64,
    pub observation: ObservationJson,
    pub done: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    AwaitingAction,
    Finished,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ticket {
    pub session_id: String,
    pub status: Status,
    pub interaction_index: u64,
    pub cumulative_reward: f64,
    pub done: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentSummary {
    pub name: String,
    pub cumulative_reward: f64,
    pub interactions: u64,
    pub average_reward: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultSummary {
    pub session_id: String,
    pub space: String,
    pub seed: u64,
    pub done: bool,
    /// The externally driven agent first, then the co-agents.
    pub agents: Vec<AgentSummary>,
}

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("session {0} is finished")]
    Finished(String),
    #[error("session {0} is already processing an action")]
    Busy(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error(transparent)]
    Session(#[from] SessionError),
}

enum State {
    Running {
        session: Box<Session>,
        observed_at: Instant,
    },
    Finished {
        result: SessionResult,
        observation: ObservationJson,
    },
    /// Only while a finishing session is being scored.
    Closing,
}

struct Live {
    state: State,
    seed: u64,
    space: String,
    last_used: Instant,
}

impl Live {
    fn agents(&self) -> Vec<AgentSummary> {
        let summary = |name: String, cumulative_reward: f64, interactions: u64| AgentSummary {
            name,
            cumulative_reward,
            interactions,
            average_reward: (interactions > 0).then(|| cumulative_reward / interactions as f64),
        };
        match &self.state {
            State::Running { session, .. } => (0..session.agent_count())
                .map(|i| {
                    summary(
                        session.agent_spec(AgentId(i)).unwrap().name.clone(),
                        session.cumulative_reward(AgentId(i)).unwrap(),
                        session.interaction_index(),
                    )
                })
                .collect(),
            State::Finished { result, .. } => result
                .scores
                .iter()
                .map(|s| summary(s.name.clone(), s.cumulative, s.interactions))
                .collect(),
            State::Closing => Vec::new(),
        }
    }
}

/// All live sessions of one server.
pub struct SessionService {
    sessions: Mutex<HashMap<String, Arc<Mutex<Live>>>>,
    idle_timeout: Duration,
}

impl Default for SessionService {
    fn default() -> Self {
        SessionService::new(DEFAULT_IDLE_TIMEOUT)
    }
}

impl SessionService {
    pub fn new(idle_timeout: Duration) -> SessionService {
        SessionService {
            sessions: Mutex::new(HashMap::new()),
            idle_timeout,
        }
    }

    pub fn idle_timeout(&self) -> Duration {
        self.idle_timeout
    }

    pub fn len(&self) -> usize {
        self.sessions.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Builds the session and advances it to the first action request.
    pub fn create(&self, request: &CreateSession) -> Result<Created, ServiceError> {
        let seed = request
            .seed
            .unwrap_or_else(|| Uuid::new_v4().as_u64_pair().0);
        let mut session = Session::new(request.session_config(seed)?)?;
        if session.is_finished() {
            return Err(ServiceError::InvalidRequest(
                "the stop condition is met before the first interaction".into(),
            ));
        }
        session.begin_interaction()?;
        let observation = ObservationJson::new(&session.observation_for(EXTERNAL)?, &session);
        let actions = session.space().actions().map(|a| a.id()).collect();
        let space = session.description().to_owned();
        let session_id = Uuid::new_v4().simple().to_string();
        let now = Instant::now();
        let live = Live {
            state: State::Running {
                session: Box::new(session),
                observed_at: now,
            },
            seed,
            space: space.clone(),
            last_used: now,
        };
        self.sessions
            .lock()
            .unwrap()
            .insert(session_id.clone(), Arc::new(Mutex::new(live)));
        Ok(Created {
            session_id,
            observation,
            actions,
            seed,
            space,
        })
    }

    fn entry(&self, id: &str) -> Result<Arc<Mutex<Live>>, ServiceError> {
        self.sessions
            .lock()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::UnknownSession(id.to_owned()))
    }

    /// Completes the pending interaction with `action` and opens the next.
    /// A second action arriving while one is processed is rejected.
    pub fn submit_action(&self, id: &str, action: usize) -> Result<ActionReply, ServiceError> {
        let entry = self.entry(id)?;
        let mut live = match entry.try_lock() {
            Ok(live) => live,
            Err(TryLockError::WouldBlock) => return Err(ServiceError::Busy(id.to_owned())),
            Err(TryLockError::Poisoned(p)) => p.into_inner(),
        };
        let live = &mut *live;
        let now = Instant::now();
        let State::Running {
            session,
            observed_at,
        } = &mut live.state
        else {
            return Err(ServiceError::Finished(id.to_owned()));
        };
        let n_actions = session.space().action_count();
        if action >= n_actions {
            return Err(SessionError::ActionOutOfRange {
                agent: 0,
                action,
                actions: n_actions,
            }
            .into());
        }
        session.complete_interaction(&[ExternalMove {
            agent: EXTERNAL,
            action: lambda_env::Action::new(action),
            elapsed: now.duration_since(*observed_at),
        }])?;
        let reward = session.pending_reward(EXTERNAL).unwrap();
        if session.is_finished() {
            let snapshot = Arc::new(session.snapshot());
            let observation = Observation::perceive(snapshot, session.space(), EXTERNAL)
                .expect("the external agent is placed");
            let observation = ObservationJson::new(&observation, session);
            let State::Running { session, .. } = std::mem::replace(&mut live.state, State::Closing)
            else {
                unreachable!()
            };
            let result = session.finish();
            let score = result.scores[0].average();
            live.state = State::Finished {
                result,
                observation: observation.clone(),
            };
            live.last_used = now;
            return Ok(ActionReply {
                reward,
                observation,
                done: true,
                score: Some(score),
            });
        }
        session.begin_interaction()?;
        let observation = ObservationJson::new(&session.observation_for(EXTERNAL)?, session);
        *observed_at = Instant::now();
        live.last_used = now;
        Ok(ActionReply {
            reward,
            observation,
            done: false,
            score: None,
        })
    }

    pub fn ticket(&self, id: &str) -> Result<Ticket, ServiceError> {
        let entry = self.entry(id)?;
        let mut live = entry.lock().unwrap_or_else(|p| p.into_inner());
        live.last_used = Instant::now();
        let agents = live.agents();
        let (status, interaction_index) = match &live.state {
            State::Running { session, .. } => (Status::AwaitingAction, session.interaction_index()),
            State::Finished { result, .. } => (Status::Finished, result.scores[0].interactions),
            State::Closing => (Status::Finished, 0),
        };
        Ok(Ticket {
            session_id: id.to_owned(),
            status,
            interaction_index,
            cumulative_reward: agents.first().map_or(0.0, |a| a.cumulative_reward),
            done: status == Status::Finished,
        })
    }

    pub fn result(&self, id: &str) -> Result<ResultSummary, ServiceError> {
        let entry = self.entry(id)?;
        let mut live = entry.lock().unwrap_or_else(|p| p.into_inner());
        live.last_used = Instant::now();
        Ok(ResultSummary {
            session_id: id.to_owned(),
            space: live.space.clone(),
            seed: live.seed,
            done: matches!(live.state, State::Finished { .. }),
            agents: live.agents(),
        })
    }

    /// The last observation handed out, current or final.
    pub fn observation(&self, id: &str) -> Result<ObservationJson, ServiceError> {
        let entry = self.entry(id)?;
        let live = entry.lock().unwrap_or_else(|p| p.into_inner());
        Ok(match &live.state {
            State::Running { session, .. } => {
                ObservationJson::new(&session.observation_for(EXTERNAL)?, session)
            }
            State::Finished { observation, .. } => observation.clone(),
            State::Closing => return Err(ServiceError::Busy(id.to_owned())),
        })
    }

    /// Drops sessions idle for longer than the timeout as of `now`.
    /// Sessions busy with an action are kept. Returns how many went.
    pub fn purge_idle(&self, now: Instant) -> usize {
        let mut sessions = self.sessions.lock().unwrap();
        let before = sessions.len();
        sessions.retain(|_, entry| match entry.try_lock() {
            Ok(live) => now.saturating_duration_since(live.last_used) <= self.idle_timeout,
            Err(_) => true,
        });
        before - sessions.len()
    }
}
