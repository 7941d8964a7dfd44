//! A from-scratch two-cell simulator used as an oracle for the sensitivity
//! checker.

use lambda_env::evaluation::check_reward_sensitivity;
use lambda_env::{
    Action, AgentSpec, Cell, CollisionRule, GeneratorBehavior, Placement, SessionConfig,
    SpaceSource,
};

/// A deterministic world of two cells and one explicit action per cell.
#[derive(Clone, Copy, Debug)]
pub struct TinyWorld {
    /// Whether the explicit action leaves each cell (otherwise it loops).
    pub leaves: [bool; 2],
    pub good: usize,
    pub evil: usize,
    pub agent: usize,
    pub good_pattern: &'static [usize],
    pub evil_pattern: &'static [usize],
}

pub const PATTERNS: [&[usize]; 4] = [&[0], &[1], &[0, 1], &[1, 0]];

impl TinyWorld {
    pub fn all() -> Vec<TinyWorld> {
        let mut out = Vec::new();
        for leaves in [[true, true], [true, false], [false, true], [false, false]] {
            for (good, evil) in [(0, 1), (1, 0)] {
                for agent in 0..2 {
                    for gp in PATTERNS {
                        for ep in PATTERNS {
                            out.push(TinyWorld {
                                leaves,
                                good,
                                evil,
                                agent,
                                good_pattern: gp,
                                evil_pattern: ep,
                            });
                        }
                    }
                }
            }
        }
        out
    }

    fn step(&self, cell: usize, action: usize) -> usize {
        if action == 1 && self.leaves[cell] {
            1 - cell
        } else {
            cell
        }
    }

    /// Reward earned at each interaction by an agent playing `actions`.
    pub fn rewards(&self, actions: &[usize]) -> Vec<f64> {
        let mut trail = [0.0f64; 2];
        let (mut g, mut e, mut a) = (self.good, self.evil, self.agent);
        let mut out = Vec::new();
        for (i, &act) in actions.iter().enumerate() {
            trail[g] = 1.0;
            trail[e] = -1.0;
            let ng = self.step(g, self.good_pattern[i % self.good_pattern.len()]);
            let ne = self.step(e, self.evil_pattern[i % self.evil_pattern.len()]);
            (g, e) = match (ng == ne, ng == g) {
                (false, _) => (ng, ne),
                (true, true) => (ng, e),
                (true, false) => (g, ne),
            };
            a = self.step(a, act);
            let mut people = [0u32; 2];
            people[g] += 1;
            people[e] += 1;
            people[a] += 1;
            out.push(trail[a] / f64::from(people[a]));
            for c in 0..2 {
                trail[c] = if people[c] > 0 { 0.0 } else { trail[c] / 2.0 };
            }
        }
        out
    }

    /// Prefixes of length `<= depth` after which no two continuations of a
    /// common length `<= horizon` earn different sums.
    pub fn insensitive_prefixes(&self, horizon: usize, depth: usize) -> Vec<Vec<usize>> {
        let mut failing = Vec::new();
        for len in 0..=depth {
            for prefix in binary_words(len) {
                let diverges = (1..=horizon).any(|m| {
                    let sums: Vec<f64> = binary_words(m)
                        .map(|cont| {
                            let mut all = prefix.clone();
                            all.extend(cont);
                            self.rewards(&all)[len..].iter().sum()
                        })
                        .collect();
                    sums.iter().any(|&s| s != sums[0])
                });
                if !diverges {
                    failing.push(prefix);
                }
            }
        }
        failing
    }

    pub fn config(&self) -> SessionConfig {
        let describe = |leaves: bool| if leaves { "1+" } else { "1++" };
        let space = format!("{}|{}", describe(self.leaves[0]), describe(self.leaves[1]));
        let pattern =
            |p: &[usize]| GeneratorBehavior::pattern(p.iter().map(|&a| Action::new(a)).collect());
        SessionConfig {
            good: pattern(self.good_pattern),
            evil: pattern(self.evil_pattern),
            placement: Placement::Fixed {
                good: Cell::new(self.good + 1),
                evil: Cell::new(self.evil + 1),
                agents: vec![Cell::new(self.agent + 1)],
            },
            collision: CollisionRule::GoodReverts,
            ..SessionConfig::new(
                SpaceSource::Manual(space),
                vec![AgentSpec::scripted(vec![Action::STAY])],
            )
        }
    }

    /// True when the library checker and this oracle agree.
    pub fn agrees(&self, horizon: usize, depth: usize) -> bool {
        let report = check_reward_sensitivity(&self.config(), horizon, depth).unwrap();
        let library: Vec<Vec<usize>> = report
            .failing_prefixes
            .iter()
            .map(|p| p.iter().map(|a| a.id()).collect())
            .collect();
        let oracle = self.insensitive_prefixes(horizon, depth);
        report.sensitive == oracle.is_empty() && library == oracle
    }
}

/// All words over {0, 1} of length `len`, lexicographic.
pub fn binary_words(len: usize) -> impl Iterator<Item = Vec<usize>> {
    (0..1usize << len).map(move |code| (0..len).rev().map(|bit| (code >> bit) & 1).collect())
}
