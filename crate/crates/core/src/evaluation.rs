//! Scores, balance estimates, reward sensitivity and experiment suites.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{AgentSpec, GeneratorBehavior, GeneratorMode, Policy};
use crate::derive_seed;
use crate::engine::{
    run_session, AgentScore, Relocation, SessionConfig, SessionError, SpaceSource, StopCondition,
};
use crate::generation::GenerationLimits;
use crate::space::{Action, Connectivity, Space};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvaluationError {
    #[error("no interactions to average over")]
    NoInteractions,
    #[error("no sessions to aggregate")]
    NoSessions,
    #[error(
        "sessions ran {first} and {other} interactions; the universal score needs equal counts"
    )]
    MismatchedInteractions { first: u64, other: u64 },
    #[error("a balance estimate needs at least 2 sessions, got {0}")]
    TooFewSessions(usize),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Suite(#[from] SuiteError),
}

/// `V / n` of one agent.
pub fn average_reward(score: &AgentScore) -> Result<f64, EvaluationError> {
    if score.interactions == 0 {
        return Err(EvaluationError::NoInteractions);
    }
    Ok(score.cumulative / score.interactions as f64)
}

/// Sum of the cumulative rewards over `m` environments divided by
/// `m * n_i`. Every session must have run the same `n_i`.
pub fn universal_score(scores: &[AgentScore]) -> Result<f64, EvaluationError> {
    let first = scores.first().ok_or(EvaluationError::NoSessions)?;
    if let Some(other) = scores.iter().find(|s| s.interactions != first.interactions) {
        return Err(EvaluationError::MismatchedInteractions {
            first: first.interactions,
            other: other.interactions,
        });
    }
    if first.interactions == 0 {
        return Err(EvaluationError::NoInteractions);
    }
    let total: f64 = scores.iter().map(|s| s.cumulative).sum();
    Ok(total / (scores.len() as f64 * first.interactions as f64))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BalanceEstimate {
    pub mean: f64,
    /// Sample standard deviation of the per-session averages.
    pub std_dev: f64,
    /// 95% normal-approximation half-width, `1.96 σ / √S`.
    pub half_width: f64,
    pub sessions: usize,
    pub iterations: u64,
    pub values: Vec<f64>,
}

impl BalanceEstimate {
    pub fn from_values(values: Vec<f64>, iterations: u64) -> BalanceEstimate {
        let s = values.len() as f64;
        let mean = values.iter().sum::<f64>() / s;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (s - 1.0)
        } else {
            0.0
        };
        let std_dev = var.sqrt();
        BalanceEstimate {
            mean,
            std_dev,
            half_width: 1.96 * std_dev / s.sqrt(),
            sessions: values.len(),
            iterations,
            values,
        }
    }

    /// True when zero lies inside the interval.
    pub fn balanced_consistent(&self) -> bool {
        self.mean.abs() <= self.half_width
    }
}

/// Runs `config` once per session seed and returns the first agent's
/// average for each, in seed order.
pub fn session_averages(
    config: &SessionConfig,
    sessions: usize,
    iterations: u64,
    seed: u64,
) -> Result<Vec<f64>, EvaluationError> {
    (0..sessions as u64)
        .into_par_iter()
        .map(|s| {
            let result = run_session(SessionConfig {
                seed: derive_seed(seed, &[s]),
                stop: StopCondition::Interactions(iterations),
                ..config.clone()
            })?;
            Ok(result.scores[0].average())
        })
        .collect()
}

/// Average reward of a random agent over `sessions` independent sessions of
/// `template`, whose agent list is replaced by one random agent.
pub fn estimate_balance(
    template: &SessionConfig,
    sessions: usize,
    iterations: u64,
    seed: u64,
) -> Result<BalanceEstimate, EvaluationError> {
    if sessions < 2 {
        return Err(EvaluationError::TooFewSessions(sessions));
    }
    let config = SessionConfig {
        agents: vec![AgentSpec::random()],
        ..template.clone()
    };
    let values = session_averages(&config, sessions, iterations, seed)?;
    Ok(BalanceEstimate::from_values(values, iterations))
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SensitivityError {
    #[error("the configuration is not deterministic")]
    NotDeterministic,
    #[error("exactly one evaluable agent is required, found {0}")]
    AgentCount(usize),
    #[error("horizon must be at least 1")]
    ZeroHorizon,
    #[error(transparent)]
    Session(#[from] SessionError),
}

/// Two continuations of `prefix`, of equal length, with different sums.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivityWitness {
    pub prefix: Vec<Action>,
    pub first: Vec<Action>,
    pub second: Vec<Action>,
    pub first_sum: f64,
    pub second_sum: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub sensitive: bool,
    pub horizon: usize,
    pub depth: usize,
    /// One per prefix that admits diverging continuations.
    pub witnesses: Vec<SensitivityWitness>,
    /// Prefixes after which every continuation earns the same.
    pub failing_prefixes: Vec<Vec<Action>>,
}

/// Rewards earned by each action of `actions` in a deterministic session
/// whose single agent follows them.
pub fn replay_rewards(
    config: &SessionConfig,
    actions: &[Action],
) -> Result<Vec<f64>, SessionError> {
    let mut config = config.clone();
    config.agents[0].policy = Policy::Scripted(actions.to_vec());
    config.stop = StopCondition::Interactions(actions.len() as u64);
    config.record_trace = false;
    Ok(run_session(config)?.reward_traces.swap_remove(0))
}

/// All action sequences of length `len` over `n` actions, in lexicographic
/// order.
fn sequences(n: usize, len: usize) -> impl Iterator<Item = Vec<Action>> {
    let total = n.pow(len as u32);
    (0..total).map(move |mut code| {
        let mut seq = vec![Action::STAY; len];
        for slot in seq.iter_mut().rev() {
            *slot = Action::new(code % n);
            code /= n;
        }
        seq
    })
}

/// Brute-force check that after every prefix of length at most `depth`,
/// some two continuations of equal length `m <= horizon` earn different
/// reward sums.
pub fn check_reward_sensitivity(
    config: &SessionConfig,
    horizon: usize,
    depth: usize,
) -> Result<SensitivityReport, SensitivityError> {
    if !config.is_deterministic() {
        return Err(SensitivityError::NotDeterministic);
    }
    if config.agents.len() != 1 {
        return Err(SensitivityError::AgentCount(config.agents.len()));
    }
    if horizon == 0 {
        return Err(SensitivityError::ZeroHorizon);
    }
    let n_actions = match &config.space {
        SpaceSource::Manual(text) => Space::parse(text).map_err(SessionError::from)?,
        SpaceSource::Prebuilt(space) => space.clone(),
        SpaceSource::Generated(_) => return Err(SensitivityError::NotDeterministic),
    }
    .action_count();

    let mut witnesses = Vec::new();
    let mut failing_prefixes = Vec::new();
    for len in 0..=depth {
        for prefix in sequences(n_actions, len) {
            match diverging_pair(config, &prefix, n_actions, horizon)? {
                Some(w) => witnesses.push(w),
                None => failing_prefixes.push(prefix),
            }
        }
    }
    Ok(SensitivityReport {
        sensitive: failing_prefixes.is_empty(),
        horizon,
        depth,
        witnesses,
        failing_prefixes,
    })
}

fn diverging_pair(
    config: &SessionConfig,
    prefix: &[Action],
    n_actions: usize,
    horizon: usize,
) -> Result<Option<SensitivityWitness>, SessionError> {
    for m in 1..=horizon {
        let mut first: Option<(Vec<Action>, f64)> = None;
        for continuation in sequences(n_actions, m) {
            let mut actions = prefix.to_vec();
            actions.extend_from_slice(&continuation);
            let rewards = replay_rewards(config, &actions)?;
            let sum: f64 = rewards[prefix.len()..].iter().sum();
            match &first {
                None => first = Some((continuation, sum)),
                Some((b, b_sum)) if *b_sum != sum => {
                    return Ok(Some(SensitivityWitness {
                        prefix: prefix.to_vec(),
                        first: b.clone(),
                        second: continuation,
                        first_sum: *b_sum,
                        second_sum: sum,
                    }))
                }
                Some(_) => {}
            }
        }
    }
    Ok(None)
}

/// Where the spaces of a suite come from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Environment {
    Manual(String),
    /// A fresh space per session.
    Generated(GenerationLimits),
}

/// Agents evaluated together in one session.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lineup {
    pub agents: Vec<AgentSpec>,
}

impl Lineup {
    pub fn solo(agent: AgentSpec) -> Lineup {
        Lineup {
            agents: vec![agent],
        }
    }

    /// Report labels: the agent name, prefixed with `social:` when the
    /// lineup holds several agents.
    pub fn labels(&self) -> Vec<String> {
        if self.agents.len() == 1 {
            vec![self.agents[0].name.clone()]
        } else {
            self.agents
                .iter()
                .map(|a| format!("social:{}", a.name))
                .collect()
        }
    }
}

impl fmt::Display for Relocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Relocation::Never | Relocation::Every(0) => f.write_str("never"),
            Relocation::Every(k) => write!(f, "every:{k}"),
            Relocation::SizeProportional => f.write_str("auto"),
        }
    }
}

impl FromStr for Relocation {
    type Err = String;

    /// `never`, `auto` or `every:<k>` (a bare number works too).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "never" | "off" | "no" => Ok(Relocation::Never),
            "auto" | "on" | "yes" => Ok(Relocation::SizeProportional),
            _ => s
                .strip_prefix("every:")
                .unwrap_or(s)
                .parse::<u64>()
                .map(|k| {
                    if k == 0 {
                        Relocation::Never
                    } else {
                        Relocation::Every(k)
                    }
                })
                .map_err(|_| {
                    format!("invalid relocation {s:?}: expected never, auto or every:<k>")
                }),
        }
    }
}

pub const MANUAL_2: &str = "1+|1-";
pub const MANUAL_4: &str = "1+2++3|1+23-|1+23|1+2--3-";
pub const MANUAL_6: &str = "1--2+|1++2--|1++2-|12---|1-2+|12---";
pub const MANUAL_8: &str = "1+2+++3|1+2-3---|1++2-3|1---2++3+|1+++2--3-|1--2+3|1-2+3+++|1-2---3";
pub const MANUAL_10: &str =
    "123+++++|1-23+++++|1-2+3+++++|12+3+++++|123+++++|1+2++3|1+23|1++++2-----3----|12-3|1--2-3";

/// The hand-built spaces by cell count.
pub fn manual_space(cells: usize) -> Option<&'static str> {
    match cells {
        2 => Some(MANUAL_2),
        4 => Some(MANUAL_4),
        6 => Some(MANUAL_6),
        8 => Some(MANUAL_8),
        10 => Some(MANUAL_10),
        _ => None,
    }
}

/// Cell and action counts of the generated-space experiments. Action counts
/// include the implicit stay action.
pub const SIZE_CLASSES: [(usize, usize); 10] = [
    (4, 3),
    (4, 4),
    (6, 4),
    (6, 6),
    (8, 4),
    (8, 6),
    (8, 8),
    (10, 4),
    (10, 7),
    (10, 10),
];

pub const MANUAL_LADDER: [u64; 10] = [5, 10, 20, 50, 100, 200, 500, 1_000, 2_000, 100_000];
pub const AUTO_LADDER: [u64; 10] = [5, 10, 20, 50, 100, 200, 500, 1_000, 2_000, 10_000];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SuiteError {
    #[error("unknown suite {0:?}")]
    UnknownSuite(String),
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("invalid suite: {0}")]
    Invalid(String),
}

/// A family of experiments: every lineup, relocation mode and ladder point,
/// averaged over `sessions` sessions each.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteSpec {
    pub name: String,
    pub environment: Environment,
    pub lineups: Vec<Lineup>,
    pub good: GeneratorBehavior,
    pub evil: GeneratorBehavior,
    pub ladder: Vec<u64>,
    pub sessions: usize,
    pub relocations: Vec<Relocation>,
    pub seed: u64,
}

impl SuiteSpec {
    fn standard(
        name: &str,
        environment: Environment,
        ladder: &[u64],
        sessions: usize,
    ) -> SuiteSpec {
        SuiteSpec {
            name: name.to_owned(),
            environment,
            lineups: vec![
                Lineup::solo(AgentSpec::random()),
                Lineup::solo(AgentSpec::observer()),
            ],
            good: GeneratorBehavior::random(),
            evil: GeneratorBehavior::random(),
            ladder: ladder.to_vec(),
            sessions,
            relocations: vec![Relocation::SizeProportional, Relocation::Never],
            seed: 1,
        }
    }

    /// Suites mirroring the published experiments. Random generators draw
    /// explicit actions in the manual and generated suites and every action
    /// in the biased, social and multi-move ones:
    ///
    /// * `manual_<C>` for C in 2, 4, 6, 8, 10;
    /// * `auto_connected_<C>x<A>` and `auto_strong_<C>x<A>`;
    /// * `biased_1` (Good never moves) and `biased_2` (Good always changes
    ///   cell), both on the 4-cell manual space;
    /// * `social_manual_8`;
    /// * `multimove_<k>` for k in 1..=4, where Good and Evil make `k` moves.
    pub fn builtin(name: &str) -> Result<SuiteSpec, SuiteError> {
        let unknown = || SuiteError::UnknownSuite(name.to_owned());
        if let Some(cells) = name.strip_prefix("manual_") {
            let cells: usize = cells.parse().map_err(|_| unknown())?;
            let space = manual_space(cells).ok_or_else(unknown)?;
            return Ok(Self::standard(
                name,
                Environment::Manual(space.into()),
                &MANUAL_LADDER,
                10,
            ));
        }
        for (prefix, connectivity) in [
            ("auto_connected_", Connectivity::Connected),
            ("auto_strong_", Connectivity::StronglyConnected),
        ] {
            if let Some(size) = name.strip_prefix(prefix) {
                let (c, a) = size.split_once('x').ok_or_else(unknown)?;
                let cells: usize = c.parse().map_err(|_| unknown())?;
                let actions: usize = a.parse().map_err(|_| unknown())?;
                let limits = GenerationLimits::fixed(cells, actions, connectivity);
                limits
                    .validate()
                    .map_err(|e| SuiteError::Invalid(e.to_string()))?;
                if actions > cells {
                    return Err(SuiteError::Invalid(format!(
                        "{actions} actions over {cells} cells"
                    )));
                }
                return Ok(Self::standard(
                    name,
                    Environment::Generated(limits),
                    &AUTO_LADDER,
                    100,
                ));
            }
        }
        let manual_8 = || Environment::Manual(MANUAL_8.into());
        let any = GeneratorBehavior::random().with_mode(GeneratorMode::RandomAny);
        match name {
            "biased_1" | "biased_2" => {
                let good = if name == "biased_1" {
                    GeneratorBehavior::pattern(vec![Action::STAY])
                } else {
                    GeneratorBehavior::random().with_mode(GeneratorMode::RandomChange)
                };
                Ok(SuiteSpec {
                    lineups: vec![Lineup::solo(AgentSpec::random())],
                    good,
                    evil: any,
                    ..Self::standard(
                        name,
                        Environment::Manual(MANUAL_4.into()),
                        &MANUAL_LADDER,
                        10,
                    )
                })
            }
            "social_manual_8" => Ok(SuiteSpec {
                lineups: vec![
                    Lineup {
                        agents: vec![AgentSpec::random(), AgentSpec::observer()],
                    },
                    Lineup::solo(AgentSpec::random()),
                    Lineup::solo(AgentSpec::observer()),
                ],
                good: any.clone(),
                evil: any,
                ..Self::standard(name, manual_8(), &MANUAL_LADDER, 10)
            }),
            _ => {
                let k: usize = name
                    .strip_prefix("multimove_")
                    .and_then(|k| k.parse().ok())
                    .filter(|k| (1..=4).contains(k))
                    .ok_or_else(unknown)?;
                let generators = any.with_moves(k);
                Ok(SuiteSpec {
                    good: generators.clone(),
                    evil: generators,
                    ..Self::standard(name, manual_8(), &MANUAL_LADDER, 10)
                })
            }
        }
    }

    /// Names accepted by [`SuiteSpec::builtin`].
    pub fn builtin_names() -> Vec<String> {
        let mut names: Vec<String> = [2, 4, 6, 8, 10]
            .iter()
            .map(|c| format!("manual_{c}"))
            .collect();
        for prefix in ["auto_connected", "auto_strong"] {
            names.extend(
                SIZE_CLASSES
                    .iter()
                    .map(|(c, a)| format!("{prefix}_{c}x{a}")),
            );
        }
        names.extend(["biased_1", "biased_2", "social_manual_8"].map(String::from));
        names.extend((1..=4).map(|k| format!("multimove_{k}")));
        names
    }

    /// Reads a `key = value` file. `base` names a built-in suite to start
    /// from; the other keys override it:
    ///
    /// ```text
    /// base = manual_8
    /// space = 1+|1-                  # or cells / actions / connectivity
    /// agents = random, observer      # `social` adds a joint lineup
    /// generators = pattern:1,2x2     # or good / evil separately
    /// ladder = 100, 1000
    /// sessions = 4
    /// relocation = never, auto, every:50
    /// seed = 9
    /// ```
    pub fn parse(text: &str) -> Result<SuiteSpec, SuiteError> {
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| SuiteError::Syntax {
                line: i + 1,
                message: format!("expected key = value, found {line:?}"),
            })?;
            entries.push((i + 1, key.trim().to_owned(), value.trim().to_owned()));
        }
        let base = entries
            .iter()
            .find(|(_, k, _)| k == "base")
            .map(|(_, _, v)| v.as_str());
        let mut spec = match base {
            Some(name) => Self::builtin(name)?,
            None => Self::standard(
                "custom",
                Environment::Manual(MANUAL_2.into()),
                &MANUAL_LADDER,
                10,
            ),
        };
        let mut limits: Option<GenerationLimits> = None;
        let mut agents: Option<Vec<String>> = None;
        for (line, key, value) in entries {
            let bad = |message: String| SuiteError::Syntax { line, message };
            let number = |v: &str| {
                v.parse::<u64>()
                    .map_err(|_| bad(format!("{key}: not a number: {v:?}")))
            };
            let list = || value.split(',').map(str::trim).filter(|s| !s.is_empty());
            match key.as_str() {
                "base" => {}
                "name" => spec.name = value.clone(),
                "space" => {
                    Space::parse(&value).map_err(|e| bad(e.to_string()))?;
                    spec.environment = Environment::Manual(value.clone());
                }
                "cells" | "actions" | "connectivity" | "max_rejections" => {
                    let l = limits.get_or_insert_with(|| match &spec.environment {
                        Environment::Generated(l) => l.clone(),
                        Environment::Manual(_) => GenerationLimits::default(),
                    });
                    match key.as_str() {
                        "cells" => {
                            let n = number(&value)? as usize;
                            l.min_cells = n;
                            l.max_cells = Some(n);
                        }
                        "actions" => {
                            let n = number(&value)? as usize;
                            l.min_actions = n;
                            l.max_actions = n;
                        }
                        "connectivity" => {
                            l.connectivity = value
                                .parse()
                                .map_err(|e: crate::SpaceError| bad(e.to_string()))?
                        }
                        _ => l.max_rejections = number(&value)? as usize,
                    }
                }
                "agents" => agents = Some(list().map(str::to_owned).collect()),
                "generators" | "good" | "evil" => {
                    let b: GeneratorBehavior = value
                        .parse()
                        .map_err(|e: crate::agents::AgentError| bad(e.to_string()))?;
                    if key != "evil" {
                        spec.good = b.clone();
                    }
                    if key != "good" {
                        spec.evil = b;
                    }
                }
                "moves" => {
                    let k = number(&value)? as usize;
                    spec.good.moves_per_interaction = k;
                    spec.evil.moves_per_interaction = k;
                }
                "ladder" => spec.ladder = list().map(number).collect::<Result<_, _>>()?,
                "sessions" => spec.sessions = number(&value)? as usize,
                "relocation" => {
                    spec.relocations = list()
                        .map(|r| r.parse::<Relocation>().map_err(&bad))
                        .collect::<Result<_, _>>()?
                }
                "seed" => spec.seed = number(&value)?,
                _ => return Err(bad(format!("unknown key {key:?}"))),
            }
        }
        if let Some(l) = limits {
            l.validate()
                .map_err(|e| SuiteError::Invalid(e.to_string()))?;
            spec.environment = Environment::Generated(l);
        }
        if let Some(names) = agents {
            let mut lineups = Vec::new();
            let mut solo = Vec::new();
            for name in &names {
                match name.as_str() {
                    "random" => solo.push(AgentSpec::random()),
                    "observer" => solo.push(AgentSpec::observer()),
                    "social" => {}
                    other => return Err(SuiteError::Invalid(format!("unknown agent {other:?}"))),
                }
            }
            if names.iter().any(|n| n == "social") {
                lineups.push(Lineup {
                    agents: vec![AgentSpec::random(), AgentSpec::observer()],
                });
            }
            lineups.extend(solo.into_iter().map(Lineup::solo));
            spec.lineups = lineups;
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), SuiteError> {
        let invalid = |m: &str| Err(SuiteError::Invalid(m.to_owned()));
        if self.sessions == 0 {
            return invalid("sessions must be at least 1");
        }
        if self.ladder.is_empty() || self.ladder.windows(2).any(|w| w[0] >= w[1]) {
            return invalid("ladder must be non-empty and strictly increasing");
        }
        if self.ladder[0] == 0 {
            return invalid("ladder points must be positive");
        }
        if self.lineups.is_empty() || self.lineups.iter().any(|l| l.agents.is_empty()) {
            return invalid("every lineup needs an agent");
        }
        if self.relocations.is_empty() {
            return invalid("at least one relocation mode is required");
        }
        let mut seen = BTreeSet::new();
        for label in self.lineups.iter().flat_map(Lineup::labels) {
            if !seen.insert(label.clone()) {
                return invalid(&format!("agent label {label:?} appears twice"));
            }
        }
        Ok(())
    }

    /// Session configuration shared by every run of the suite.
    pub fn session_template(&self, lineup: &Lineup, relocation: Relocation) -> SessionConfig {
        let space = match &self.environment {
            Environment::Manual(text) => SpaceSource::Manual(text.clone()),
            Environment::Generated(limits) => SpaceSource::Generated(limits.clone()),
        };
        SessionConfig {
            good: self.good.clone(),
            evil: self.evil.clone(),
            relocation,
            ..SessionConfig::new(space, lineup.agents.clone())
        }
    }

    /// Seed of one session. Lineups share seeds, so they meet the same
    /// spaces and the same generator moves.
    pub fn session_seed(&self, relocation_index: usize, point_index: usize, session: usize) -> u64 {
        derive_seed(
            self.seed,
            &[relocation_index as u64, point_index as u64, session as u64],
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteRow {
    pub agent: String,
    pub relocation: String,
    pub iterations: u64,
    pub mean: f64,
    pub sessions: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub name: String,
    pub rows: Vec<SuiteRow>,
}

impl SuiteReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("agent,relocation,iterations,mean,sessions,seed\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{:?},{},{}\n",
                r.agent, r.relocation, r.iterations, r.mean, r.sessions, r.seed
            ));
        }
        out
    }

    pub fn mean(&self, agent: &str, relocation: Relocation, iterations: u64) -> Option<f64> {
        let relocation = relocation.to_string();
        self.rows
            .iter()
            .find(|r| r.agent == agent && r.relocation == relocation && r.iterations == iterations)
            .map(|r| r.mean)
    }
}

/// Runs every session of the suite in parallel.
pub fn run_suite(spec: &SuiteSpec) -> Result<SuiteReport, EvaluationError> {
    spec.validate()?;
    let mut jobs = Vec::new();
    for (li, _) in spec.lineups.iter().enumerate() {
        for (ri, _) in spec.relocations.iter().enumerate() {
            for (pi, _) in spec.ladder.iter().enumerate() {
                for s in 0..spec.sessions {
                    jobs.push((li, ri, pi, s));
                }
            }
        }
    }
    let averages: Vec<Vec<f64>> = jobs
        .par_iter()
        .map(|&(li, ri, pi, s)| {
            let config = SessionConfig {
                seed: spec.session_seed(ri, pi, s),
                stop: StopCondition::Interactions(spec.ladder[pi]),
                ..spec.session_template(&spec.lineups[li], spec.relocations[ri])
            };
            let result = run_session(config)?;
            Ok(result.scores.iter().map(AgentScore::average).collect())
        })
        .collect::<Result<_, SessionError>>()?;

    let mut rows = Vec::new();
    let mut cursor = 0;
    for lineup in &spec.lineups {
        let labels = lineup.labels();
        for relocation in &spec.relocations {
            for &iterations in &spec.ladder {
                let block = &averages[cursor..cursor + spec.sessions];
                cursor += spec.sessions;
                for (a, label) in labels.iter().enumerate() {
                    let mean = block.iter().map(|v| v[a]).sum::<f64>() / spec.sessions as f64;
                    rows.push(SuiteRow {
                        agent: label.clone(),
                        relocation: relocation.to_string(),
                        iterations,
                        mean,
                        sessions: spec.sessions,
                        seed: spec.seed,
                    });
                }
            }
        }
    }
    Ok(SuiteReport {
        name: spec.name.clone(),
        rows,
    })
}
