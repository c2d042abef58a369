//! Atomic congestion games with tabulated edge costs.
//!
//! A game has `n_agents` players, a set of named edges, per-agent strategy
//! sets (each strategy a nonempty subset of edges), and per-edge cost tables
//! `c_e(1..=N)` giving the cost of the edge as a function of its load. All
//! expected quantities under mixed profiles are computed exactly via per-edge
//! load distributions (convolution of independent agent choices), never by
//! sampling.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Tolerance for probability vectors summing to one.
pub const SUM_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum GameError {
    #[error("n_agents must be positive")]
    NoAgents,
    #[error("edges: list must be nonempty")]
    NoEdges,
    #[error("edges[{index}]: duplicate edge name {name:?}")]
    DuplicateEdge { index: usize, name: String },
    #[error("strategies: expected one strategy list per agent ({expected}), got {got}")]
    StrategyListLength { expected: usize, got: usize },
    #[error("strategies[{agent}]: agent has no strategies")]
    NoStrategies { agent: usize },
    #[error("strategies[{agent}][{strategy}]: strategy is empty")]
    EmptyStrategy { agent: usize, strategy: usize },
    #[error("strategies[{agent}][{strategy}]: unknown edge {edge:?}")]
    UnknownEdge {
        agent: usize,
        strategy: usize,
        edge: String,
    },
    #[error("strategies[{agent}][{strategy}]: duplicate edge {edge:?} within one strategy")]
    DuplicateEdgeInStrategy {
        agent: usize,
        strategy: usize,
        edge: String,
    },
    #[error("strategies[{agent}][{strategy}]: edge index {index} out of range")]
    EdgeIndexOutOfRange {
        agent: usize,
        strategy: usize,
        index: usize,
    },
    #[error("costs[{edge:?}]: expected {expected} entries (loads 1..=n_agents), got {got}")]
    CostTableLength {
        edge: String,
        expected: usize,
        got: usize,
    },
    #[error("costs[{edge:?}][{load}]: cost must be finite and nonnegative, got {value}")]
    BadCost { edge: String, load: usize, value: f64 },
    #[error("costs: missing table for edge {edge:?}")]
    MissingCostTable { edge: String },
    #[error("costs: table for undeclared edge {edge:?}")]
    UndeclaredCostEdge { edge: String },
    #[error("costs[{edge:?}]: {detail}")]
    BadCostTable { edge: String, detail: String },
    #[error("profile: expected {expected} rows (one per agent), got {got}")]
    ProfileLength { expected: usize, got: usize },
    #[error("profile[{agent}]: expected {expected} entries, got {got}")]
    ProfileRowLength {
        agent: usize,
        expected: usize,
        got: usize,
    },
    #[error("profile[{agent}][{strategy}]: entries must be finite and nonnegative, got {value}")]
    NegativeProbability {
        agent: usize,
        strategy: usize,
        value: f64,
    },
    #[error("profile[{agent}]: entries sum to {sum}, expected 1 within {tol}")]
    RowSum { agent: usize, sum: f64, tol: f64 },
    #[error("profile[{agent}]: strategy index {index} out of range (agent has {len} strategies)")]
    StrategyIndexOutOfRange {
        agent: usize,
        index: usize,
        len: usize,
    },
    #[error("game JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("game file: {0}")]
    Io(#[from] std::io::Error),
    #[error("symmetric profile requires every agent to have exactly 2 strategies")]
    NotTwoStrategies,
}

/// An atomic congestion game with tabulated, load-dependent edge costs.
#[derive(Debug, Clone, PartialEq)]
pub struct CongestionGame {
    n_agents: usize,
    edges: Vec<String>,
    /// Per agent, per strategy: sorted list of edge indices.
    strategies: Vec<Vec<Vec<usize>>>,
    /// Per edge: `costs[e][k-1]` is the cost of edge `e` at load `k`.
    costs: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct CanonicalGame<'a> {
    n_agents: usize,
    edges: &'a [String],
    strategies: &'a [Vec<Vec<usize>>],
    costs: &'a [Vec<f64>],
}

#[derive(Deserialize)]
struct RawGame {
    n_agents: usize,
    edges: Vec<String>,
    strategies: Vec<Vec<Vec<String>>>,
    costs: serde_json::Map<String, serde_json::Value>,
}

impl CongestionGame {
    /// Builds a game from edge-index strategies, validating every invariant.
    pub fn new(
        n_agents: usize,
        edges: Vec<String>,
        strategies: Vec<Vec<Vec<usize>>>,
        costs: Vec<Vec<f64>>,
    ) -> Result<Self, GameError> {
        if n_agents == 0 {
            return Err(GameError::NoAgents);
        }
        if edges.is_empty() {
            return Err(GameError::NoEdges);
        }
        for (i, name) in edges.iter().enumerate() {
            if edges[..i].contains(name) {
                return Err(GameError::DuplicateEdge {
                    index: i,
                    name: name.clone(),
                });
            }
        }
        if strategies.len() != n_agents {
            return Err(GameError::StrategyListLength {
                expected: n_agents,
                got: strategies.len(),
            });
        }
        let mut strategies = strategies;
        for (agent, set) in strategies.iter_mut().enumerate() {
            if set.is_empty() {
                return Err(GameError::NoStrategies { agent });
            }
            for (si, strat) in set.iter_mut().enumerate() {
                if strat.is_empty() {
                    return Err(GameError::EmptyStrategy {
                        agent,
                        strategy: si,
                    });
                }
                strat.sort_unstable();
                for w in strat.windows(2) {
                    if w[0] == w[1] {
                        return Err(GameError::DuplicateEdgeInStrategy {
                            agent,
                            strategy: si,
                            edge: edges.get(w[0]).cloned().unwrap_or_else(|| w[0].to_string()),
                        });
                    }
                }
                for &e in strat.iter() {
                    if e >= edges.len() {
                        return Err(GameError::EdgeIndexOutOfRange {
                            agent,
                            strategy: si,
                            index: e,
                        });
                    }
                }
            }
        }
        if costs.len() != edges.len() {
            return Err(GameError::BadCostTable {
                edge: String::new(),
                detail: format!("expected {} tables, got {}", edges.len(), costs.len()),
            });
        }
        for (e, table) in costs.iter().enumerate() {
            if table.len() != n_agents {
                return Err(GameError::CostTableLength {
                    edge: edges[e].clone(),
                    expected: n_agents,
                    got: table.len(),
                });
            }
            for (k, &v) in table.iter().enumerate() {
                if !v.is_finite() || v < 0.0 {
                    return Err(GameError::BadCost {
                        edge: edges[e].clone(),
                        load: k + 1,
                        value: v,
                    });
                }
            }
        }
        Ok(CongestionGame {
            n_agents,
            edges,
            strategies,
            costs,
        })
    }

    /// Parses the JSON game format:
    /// `{"n_agents": N, "edges": [...], "strategies": [[["e1"],...],...],
    ///   "costs": {"e1": [c(1),...,c(N)], ...}}`.
    pub fn from_json_str(text: &str) -> Result<Self, GameError> {
        let raw: RawGame = serde_json::from_str(text)?;
        let edge_index = |name: &str| raw.edges.iter().position(|e| e == name);
        let mut strategies = Vec::with_capacity(raw.strategies.len());
        for (agent, set) in raw.strategies.iter().enumerate() {
            let mut converted = Vec::with_capacity(set.len());
            for (si, strat) in set.iter().enumerate() {
                let mut idx = Vec::with_capacity(strat.len());
                for name in strat {
                    match edge_index(name) {
                        Some(e) => idx.push(e),
                        None => {
                            return Err(GameError::UnknownEdge {
                                agent,
                                strategy: si,
                                edge: name.clone(),
                            })
                        }
                    }
                }
                converted.push(idx);
            }
            strategies.push(converted);
        }
        for key in raw.costs.keys() {
            if edge_index(key).is_none() {
                return Err(GameError::UndeclaredCostEdge { edge: key.clone() });
            }
        }
        let mut costs = Vec::with_capacity(raw.edges.len());
        for name in &raw.edges {
            let value = raw
                .costs
                .get(name)
                .ok_or_else(|| GameError::MissingCostTable { edge: name.clone() })?;
            let table: Vec<f64> = serde_json::from_value(value.clone()).map_err(|e| {
                GameError::BadCostTable {
                    edge: name.clone(),
                    detail: e.to_string(),
                }
            })?;
            costs.push(table);
        }
        CongestionGame::new(raw.n_agents, raw.edges, strategies, costs)
    }

    /// Reads and parses a game JSON file.
    pub fn load_json_file(path: &std::path::Path) -> Result<Self, GameError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    /// Serializes the game back into the JSON game format.
    pub fn to_json(&self) -> String {
        let strategies: Vec<Vec<Vec<&str>>> = self
            .strategies
            .iter()
            .map(|set| {
                set.iter()
                    .map(|s| s.iter().map(|&e| self.edges[e].as_str()).collect())
                    .collect()
            })
            .collect();
        let mut costs = serde_json::Map::new();
        for (e, name) in self.edges.iter().enumerate() {
            costs.insert(name.clone(), serde_json::json!(self.costs[e]));
        }
        serde_json::json!({
            "n_agents": self.n_agents,
            "edges": self.edges,
            "strategies": strategies,
            "costs": costs,
        })
        .to_string()
    }

    /// Two agents, two parallel edges, both edges costing `l/2` at load `l`.
    /// Each agent picks one edge.
    pub fn builtin_game1() -> Self {
        CongestionGame::new(
            2,
            vec!["e1".into(), "e2".into()],
            vec![vec![vec![0], vec![1]], vec![vec![0], vec![1]]],
            vec![vec![0.5, 1.0], vec![0.5, 1.0]],
        )
        .expect("builtin game1 is valid")
    }

    /// Two agents, two parallel edges with costs `l/4` and `1.4*l/4`.
    pub fn builtin_game2() -> Self {
        CongestionGame::new(
            2,
            vec!["e1".into(), "e2".into()],
            vec![vec![vec![0], vec![1]], vec![vec![0], vec![1]]],
            vec![vec![0.25, 0.5], vec![0.35, 0.7]],
        )
        .expect("builtin game2 is valid")
    }

    /// Resolves a builtin game name (`game1`, `game2`).
    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "game1" => Some(Self::builtin_game1()),
            "game2" => Some(Self::builtin_game2()),
            _ => None,
        }
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn edges(&self) -> &[String] {
        &self.edges
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Strategy sets as sorted edge-index lists.
    pub fn strategies(&self) -> &[Vec<Vec<usize>>] {
        &self.strategies
    }

    pub fn n_strategies(&self, agent: usize) -> usize {
        self.strategies[agent].len()
    }

    /// `c_e(load)` for `load` in `1..=n_agents`.
    pub fn cost(&self, edge: usize, load: usize) -> f64 {
        assert!(
            load >= 1 && load <= self.n_agents,
            "load {load} out of range 1..={}",
            self.n_agents
        );
        self.costs[edge][load - 1]
    }

    pub fn cost_table(&self, edge: usize) -> &[f64] {
        &self.costs[edge]
    }

    /// Edge loads `l_e(s)` induced by a pure profile.
    pub fn loads(&self, s: &PureProfile) -> Vec<usize> {
        assert_eq!(s.choices.len(), self.n_agents, "profile length mismatch");
        let mut loads = vec![0usize; self.edges.len()];
        for (agent, &choice) in s.choices.iter().enumerate() {
            for &e in &self.strategies[agent][choice] {
                loads[e] += 1;
            }
        }
        loads
    }

    /// Cost paid by `agent` under a pure profile:
    /// the sum of `c_e(l_e(s))` over edges in the agent's chosen strategy.
    pub fn pure_cost(&self, s: &PureProfile, agent: usize) -> f64 {
        assert!(agent < self.n_agents, "agent index {agent} out of range");
        let loads = self.loads(s);
        self.strategies[agent][s.choices[agent]]
            .iter()
            .map(|&e| self.cost(e, loads[e]))
            .sum()
    }

    /// Exact potential of a pure profile:
    /// `sum_e sum_{j=1}^{l_e(s)} c_e(j)`. Unilateral deviations change the
    /// potential by exactly the deviating agent's cost change.
    pub fn potential(&self, s: &PureProfile) -> f64 {
        let loads = self.loads(s);
        let mut phi = 0.0;
        for (e, &load) in loads.iter().enumerate() {
            for j in 1..=load {
                phi += self.cost(e, j);
            }
        }
        phi
    }

    /// Probability that `agent` uses `edge` under its mixed strategy row.
    fn edge_usage(&self, p: &MixedProfile, agent: usize, edge: usize) -> f64 {
        let mut q = 0.0;
        for (si, strat) in self.strategies[agent].iter().enumerate() {
            if strat.binary_search(&edge).is_ok() {
                q += p.rows[agent][si];
            }
        }
        q.clamp(0.0, 1.0)
    }

    /// Exact per-edge load distributions under a mixed profile, optionally
    /// excluding one agent. Entry `[e][k]` is `P(load on e = k)`; vectors have
    /// length `(included agents) + 1`.
    pub fn load_distributions(&self, p: &MixedProfile, exclude: Option<usize>) -> LoadDistribution {
        self.check_profile_dims(p);
        let mut per_edge = Vec::with_capacity(self.edges.len());
        for e in 0..self.edges.len() {
            let mut dist = vec![1.0];
            for agent in 0..self.n_agents {
                if Some(agent) == exclude {
                    continue;
                }
                let q = self.edge_usage(p, agent, e);
                let mut next = vec![0.0; dist.len() + 1];
                for (k, &pk) in dist.iter().enumerate() {
                    next[k] += pk * (1.0 - q);
                    next[k + 1] += pk * q;
                }
                dist = next;
            }
            per_edge.push(dist);
        }
        LoadDistribution { per_edge }
    }

    /// Expected cost to `agent` of committing to strategy `strat` while the
    /// others play their mixed strategies.
    pub fn expected_strategy_cost(&self, p: &MixedProfile, agent: usize, strat: usize) -> f64 {
        self.check_profile_dims(p);
        assert!(agent < self.n_agents, "agent index {agent} out of range");
        assert!(
            strat < self.strategies[agent].len(),
            "strategy index {strat} out of range"
        );
        let others = self.load_distributions(p, Some(agent));
        self.strategy_cost_from(&others, agent, strat)
    }

    fn strategy_cost_from(&self, others: &LoadDistribution, agent: usize, strat: usize) -> f64 {
        let mut total = 0.0;
        for &e in &self.strategies[agent][strat] {
            for (k, &pk) in others.per_edge[e].iter().enumerate() {
                total += pk * self.cost(e, k + 1);
            }
        }
        total
    }

    /// Expected costs of every strategy of every agent, sharing one excluded
    /// load distribution per agent.
    pub fn strategy_costs(&self, p: &MixedProfile) -> Vec<Vec<f64>> {
        self.check_profile_dims(p);
        (0..self.n_agents)
            .map(|agent| {
                let others = self.load_distributions(p, Some(agent));
                (0..self.strategies[agent].len())
                    .map(|s| self.strategy_cost_from(&others, agent, s))
                    .collect()
            })
            .collect()
    }

    /// Expected cost to `agent` under the full mixed profile.
    pub fn expected_cost(&self, p: &MixedProfile, agent: usize) -> f64 {
        let others = self.load_distributions(p, Some(agent));
        (0..self.strategies[agent].len())
            .map(|s| p.rows[agent][s] * self.strategy_cost_from(&others, agent, s))
            .sum()
    }

    /// Expected potential under a mixed profile, computed edge-by-edge from
    /// the exact load distributions.
    pub fn expected_potential(&self, p: &MixedProfile) -> f64 {
        let dists = self.load_distributions(p, None);
        let mut psi = 0.0;
        for (e, dist) in dists.per_edge.iter().enumerate() {
            let mut prefix = 0.0;
            for (k, &pk) in dist.iter().enumerate().skip(1) {
                prefix += self.cost(e, k);
                psi += pk * prefix;
            }
        }
        psi
    }

    /// Largest improvement any agent could gain by switching to a fixed
    /// strategy: `max_i max_s (expected_cost_i - cost_of_s)+`. Zero exactly at
    /// Nash equilibria.
    pub fn nash_residual(&self, p: &MixedProfile) -> f64 {
        let costs = self.strategy_costs(p);
        let mut worst: f64 = 0.0;
        for agent in 0..self.n_agents {
            let chat: f64 = (0..costs[agent].len())
                .map(|s| p.rows[agent][s] * costs[agent][s])
                .sum();
            for &c in &costs[agent] {
                worst = worst.max(chat - c);
            }
        }
        worst
    }

    /// Upper bound on any reachable expected strategy cost:
    /// `max_i max_s sum_{e in s} c_e(n_agents)`. A linear update rate is
    /// admissible whenever `eps * max_strategy_cost() < 1`.
    pub fn max_strategy_cost(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for set in &self.strategies {
            for strat in set {
                let c: f64 = strat.iter().map(|&e| self.cost(e, self.n_agents)).sum();
                worst = worst.max(c);
            }
        }
        worst
    }

    /// Largest linear-update learning rate guaranteed admissible for every
    /// agent (`+inf` for all-zero costs).
    pub fn linear_rate_bound(&self) -> f64 {
        1.0 / self.max_strategy_cost()
    }

    /// SHA-256 of the canonical JSON serialization; stable across runs.
    pub fn canonical_hash(&self) -> String {
        let canon = CanonicalGame {
            n_agents: self.n_agents,
            edges: &self.edges,
            strategies: &self.strategies,
            costs: &self.costs,
        };
        let text = serde_json::to_string(&canon).expect("canonical game serializes");
        let mut hasher = Sha256::new();
        hasher.update(text.as_bytes());
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub(crate) fn check_profile_dims(&self, p: &MixedProfile) {
        assert_eq!(p.rows.len(), self.n_agents, "profile row count mismatch");
        for (agent, row) in p.rows.iter().enumerate() {
            assert_eq!(
                row.len(),
                self.strategies[agent].len(),
                "profile row {agent} length mismatch"
            );
        }
    }
}

/// One strategy index per agent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PureProfile {
    choices: Vec<usize>,
}

impl PureProfile {
    pub fn new(game: &CongestionGame, choices: Vec<usize>) -> Result<Self, GameError> {
        if choices.len() != game.n_agents {
            return Err(GameError::ProfileLength {
                expected: game.n_agents,
                got: choices.len(),
            });
        }
        for (agent, &c) in choices.iter().enumerate() {
            let len = game.strategies[agent].len();
            if c >= len {
                return Err(GameError::StrategyIndexOutOfRange {
                    agent,
                    index: c,
                    len,
                });
            }
        }
        Ok(PureProfile { choices })
    }

    pub fn choices(&self) -> &[usize] {
        &self.choices
    }
}

/// A point in the product of strategy simplices: one probability row per
/// agent. Rows are renormalized on construction and guaranteed nonnegative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedProfile {
    rows: Vec<Vec<f64>>,
}

impl MixedProfile {
    pub fn new(game: &CongestionGame, rows: Vec<Vec<f64>>) -> Result<Self, GameError> {
        if rows.len() != game.n_agents {
            return Err(GameError::ProfileLength {
                expected: game.n_agents,
                got: rows.len(),
            });
        }
        let mut rows = rows;
        for (agent, row) in rows.iter_mut().enumerate() {
            let expected = game.strategies[agent].len();
            if row.len() != expected {
                return Err(GameError::ProfileRowLength {
                    agent,
                    expected,
                    got: row.len(),
                });
            }
            for (strategy, &v) in row.iter().enumerate() {
                if !v.is_finite() || v < 0.0 {
                    return Err(GameError::NegativeProbability {
                        agent,
                        strategy,
                        value: v,
                    });
                }
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > SUM_TOL {
                return Err(GameError::RowSum {
                    agent,
                    sum,
                    tol: SUM_TOL,
                });
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        Ok(MixedProfile { rows })
    }

    /// Internal constructor for freshly renormalized rows.
    pub(crate) fn from_normalized_rows(rows: Vec<Vec<f64>>) -> Self {
        debug_assert!(rows
            .iter()
            .all(|r| (r.iter().sum::<f64>() - 1.0).abs() <= SUM_TOL));
        MixedProfile { rows }
    }

    /// Uniform row for every agent.
    pub fn uniform(game: &CongestionGame) -> Self {
        let rows = game
            .strategies
            .iter()
            .map(|set| vec![1.0 / set.len() as f64; set.len()])
            .collect();
        MixedProfile { rows }
    }

    /// `[x, 1-x]` for every agent; requires two strategies per agent.
    pub fn symmetric(game: &CongestionGame, x: f64) -> Result<Self, GameError> {
        if game.strategies.iter().any(|set| set.len() != 2) {
            return Err(GameError::NotTwoStrategies);
        }
        if !(0.0..=1.0).contains(&x) || !x.is_finite() {
            return Err(GameError::NegativeProbability {
                agent: 0,
                strategy: 0,
                value: x,
            });
        }
        Ok(MixedProfile {
            rows: vec![vec![x, 1.0 - x]; game.n_agents],
        })
    }

    /// Degenerate mixed profile concentrated on a pure profile.
    pub fn from_pure(game: &CongestionGame, s: &PureProfile) -> Self {
        let rows = game
            .strategies
            .iter()
            .enumerate()
            .map(|(agent, set)| {
                let mut row = vec![0.0; set.len()];
                row[s.choices[agent]] = 1.0;
                row
            })
            .collect();
        MixedProfile { rows }
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row(&self, agent: usize) -> &[f64] {
        &self.rows[agent]
    }

    pub fn entry(&self, agent: usize, strategy: usize) -> f64 {
        self.rows[agent][strategy]
    }

    /// L-infinity distance between two profiles of identical shape.
    pub fn linf_distance(&self, other: &MixedProfile) -> f64 {
        assert_eq!(self.rows.len(), other.rows.len(), "profile shape mismatch");
        let mut worst: f64 = 0.0;
        for (a, b) in self.rows.iter().zip(&other.rows) {
            assert_eq!(a.len(), b.len(), "profile shape mismatch");
            for (&x, &y) in a.iter().zip(b) {
                worst = worst.max((x - y).abs());
            }
        }
        worst
    }
}

/// Per-edge distributions of the (possibly one-agent-excluded) load.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadDistribution {
    per_edge: Vec<Vec<f64>>,
}

impl LoadDistribution {
    /// `P(load on edge e = k)` for `k = 0..len-1`.
    pub fn dist(&self, edge: usize) -> &[f64] {
        &self.per_edge[edge]
    }

    pub fn n_edges(&self) -> usize {
        self.per_edge.len()
    }

    /// Expected load on `edge`.
    pub fn mean(&self, edge: usize) -> f64 {
        self.per_edge[edge]
            .iter()
            .enumerate()
            .map(|(k, &p)| k as f64 * p)
            .sum()
    }
}
