//! Discrete-time multiplicative-weights steppers and trajectory generation.
//!
//! Two update rules over the product of strategy simplices:
//! * linear: `p'_{is} = p_{is} (1 - eps_i c_{is}) / (1 - eps_i chat_i)`;
//! * exponential: `p'_{is} ∝ p_{is} (1 - eps_i)^{c_{is}}`, evaluated in
//!   log-space.
//!
//! Both preserve the simplex, preserve zeros, and share the same fixed-point
//! set (profiles where every supported strategy costs the agent exactly its
//! expected cost).

use crate::game::{CongestionGame, MixedProfile};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default L-infinity step norm below which a trajectory counts as converged.
pub const FP_TOL_DEFAULT: f64 = 1e-12;
/// Revisit tolerance for cycle detection.
pub const CYCLE_TOL: f64 = 1e-10;
/// Entries above this count as supported when testing fixed points.
pub const SUPPORT_TOL: f64 = 1e-14;
/// Minimum diameter of a candidate cycle; smaller revisits are treated as
/// slow convergence rather than genuine cycles.
pub const CYCLE_SEPARATION: f64 = 1e-6;
/// Sliding-window length for cycle detection (detects periods up to this).
pub const CYCLE_WINDOW: usize = 64;
/// Allowed row-sum drift of a raw update before renormalization.
pub const DRIFT_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error(
        "inadmissible learning rate for agent {agent}: 1 - eps*c = {factor} \
         at strategy {strategy} (eps = {eps}, cost = {cost})"
    )]
    InadmissibleRate {
        agent: usize,
        strategy: usize,
        eps: f64,
        cost: f64,
        factor: f64,
    },
    #[error("inadmissible exponential rate for agent {agent}: eps must satisfy 0 < eps < 1")]
    InadmissibleExponentialRate { agent: usize },
    #[error("learning rate for agent {agent} must be positive and finite, got {eps}")]
    BadRate { agent: usize, eps: f64 },
    #[error("rates cover {got} agents, game has {expected}")]
    RateLength { expected: usize, got: usize },
}

/// Per-agent learning rates.
///
/// Stores both `eps` and `ln(1 - eps)`: rates at the numerical edge (for
/// example a decay of `e^-40`, whose `eps` rounds to exactly 1.0 in f64) keep
/// an exact log-decay this way, which is what the exponential stepper
/// consumes. Admissibility of the exponential rule is therefore tested on the
/// stored log-decay, not on `eps < 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LearningRates {
    eps: Vec<f64>,
    ln_decay: Vec<f64>,
}

impl LearningRates {
    /// Same rate for every agent.
    pub fn uniform(n_agents: usize, eps: f64) -> Result<Self, DynamicsError> {
        Self::per_agent(vec![eps; n_agents])
    }

    /// One rate per agent.
    pub fn per_agent(eps: Vec<f64>) -> Result<Self, DynamicsError> {
        for (agent, &e) in eps.iter().enumerate() {
            if !e.is_finite() || e <= 0.0 {
                return Err(DynamicsError::BadRate { agent, eps: e });
            }
        }
        let ln_decay = eps.iter().map(|&e| (-e).ln_1p()).collect();
        Ok(LearningRates { eps, ln_decay })
    }

    /// Rate given as `ln(1 - eps)`; e.g. `-10.0` means `eps = 1 - e^-10`.
    /// Keeps the decay exact even when `eps` rounds to 1.0.
    pub fn from_ln_decay(n_agents: usize, ln_decay: f64) -> Result<Self, DynamicsError> {
        if !ln_decay.is_finite() || ln_decay >= 0.0 {
            return Err(DynamicsError::BadRate {
                agent: 0,
                eps: -ln_decay.exp_m1(),
            });
        }
        let eps = -ln_decay.exp_m1();
        Ok(LearningRates {
            eps: vec![eps; n_agents],
            ln_decay: vec![ln_decay; n_agents],
        })
    }

    pub fn n_agents(&self) -> usize {
        self.eps.len()
    }

    pub fn eps(&self, agent: usize) -> f64 {
        self.eps[agent]
    }

    pub fn eps_all(&self) -> &[f64] {
        &self.eps
    }

    pub fn ln_decay(&self, agent: usize) -> f64 {
        self.ln_decay[agent]
    }

    /// True when every agent's rate is below the game's safe linear bound.
    pub fn linear_admissible(&self, game: &CongestionGame) -> bool {
        let bound = game.max_strategy_cost();
        self.eps.iter().all(|&e| e * bound < 1.0)
    }

    /// True when every agent's decay is strictly inside (0, 1).
    pub fn exponential_admissible(&self) -> bool {
        self.ln_decay.iter().all(|&l| l.is_finite() && l < 0.0)
    }

    fn check_len(&self, game: &CongestionGame) -> Result<(), DynamicsError> {
        if self.eps.len() != game.n_agents() {
            return Err(DynamicsError::RateLength {
                expected: game.n_agents(),
                got: self.eps.len(),
            });
        }
        Ok(())
    }
}

/// Which update rule to iterate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Linear,
    Exponential,
}

/// Why a trajectory stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIters,
    CycleDetected { period: usize },
}

/// One recorded iterate.
#[derive(Debug, Clone, Serialize)]
pub struct TrajectoryPoint {
    pub profile: MixedProfile,
    /// Expected potential at this iterate.
    pub psi: f64,
    /// Ascent value `sum_i 1/eps_i - psi`; recorded for the linear rule.
    pub q: Option<f64>,
    /// L-infinity distance from the previous iterate.
    pub step_norm: f64,
}

/// A finished run: initial point, every subsequent iterate with diagnostics,
/// and the reason the run stopped.
#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub game_hash: String,
    pub variant: Variant,
    pub rates: LearningRates,
    pub fp_tol: f64,
    pub cycle_tol: f64,
    pub initial: MixedProfile,
    pub initial_psi: f64,
    pub initial_q: Option<f64>,
    pub points: Vec<TrajectoryPoint>,
    pub termination: Termination,
}

impl Trajectory {
    pub fn final_profile(&self) -> &MixedProfile {
        self.points
            .last()
            .map(|p| &p.profile)
            .unwrap_or(&self.initial)
    }

    pub fn n_steps(&self) -> usize {
        self.points.len()
    }

    /// CSV export: a `# `-prefixed JSON metadata line, a header, then one row
    /// per iterate (`t = 0` is the initial profile, with an empty step norm).
    pub fn to_csv(&self) -> String {
        let meta = serde_json::json!({
            "game_hash": self.game_hash,
            "variant": self.variant,
            "rates": { "eps": self.rates.eps_all() },
            "fp_tol": self.fp_tol,
            "cycle_tol": self.cycle_tol,
            "termination": self.termination,
        });
        let mut out = format!("# {meta}\n");
        out.push_str("t,psi,q,step_norm");
        for (agent, row) in self.initial.rows().iter().enumerate() {
            for strategy in 0..row.len() {
                out.push_str(&format!(",p{agent}_{strategy}"));
            }
        }
        out.push('\n');
        let fmt_q = |q: Option<f64>| q.map(|v| v.to_string()).unwrap_or_default();
        let mut push_row =
            |t: usize, psi: f64, q: Option<f64>, norm: Option<f64>, profile: &MixedProfile| {
                let norm = norm.map(|v| v.to_string()).unwrap_or_default();
                let mut row = format!("{t},{psi},{},{norm}", fmt_q(q));
                for agent_row in profile.rows() {
                    for &v in agent_row {
                        row.push_str(&format!(",{v}"));
                    }
                }
                row.push('\n');
                out.push_str(&row);
            };
        push_row(0, self.initial_psi, self.initial_q, None, &self.initial);
        for (i, pt) in self.points.iter().enumerate() {
            push_row(i + 1, pt.psi, pt.q, Some(pt.step_norm), &pt.profile);
        }
        out
    }
}

/// One linear update. Renormalizes each row and asserts the pre-normalization
/// drift stays below `DRIFT_TOL` (unrenormalized iteration amplifies row-sum
/// error by `1/(1 - eps*chat)` per step, which compounds exponentially).
pub fn step_linear(
    game: &CongestionGame,
    p: &MixedProfile,
    rates: &LearningRates,
) -> Result<MixedProfile, DynamicsError> {
    rates.check_len(game)?;
    game.check_profile_dims(p);
    let costs = game.strategy_costs(p);
    let mut rows = Vec::with_capacity(game.n_agents());
    for agent in 0..game.n_agents() {
        let eps = rates.eps(agent);
        let row = p.row(agent);
        let chat: f64 = row.iter().zip(&costs[agent]).map(|(&p, &c)| p * c).sum();
        let denom = 1.0 - eps * chat;
        let mut next = Vec::with_capacity(row.len());
        for (strategy, (&pv, &c)) in row.iter().zip(&costs[agent]).enumerate() {
            let factor = 1.0 - eps * c;
            if factor <= 0.0 {
                return Err(DynamicsError::InadmissibleRate {
                    agent,
                    strategy,
                    eps,
                    cost: c,
                    factor,
                });
            }
            next.push(pv * factor / denom);
        }
        let sum: f64 = next.iter().sum();
        assert!(
            (sum - 1.0).abs() < DRIFT_TOL,
            "row-sum drift {} exceeds {} for agent {agent}",
            (sum - 1.0).abs(),
            DRIFT_TOL
        );
        for v in next.iter_mut() {
            *v /= sum;
        }
        rows.push(next);
    }
    Ok(MixedProfile::from_normalized_rows(rows))
}

/// One exponential update, computed in log-space: weights
/// `ln p + c * ln(1 - eps)` are shifted by their maximum before
/// exponentiating, so rates as aggressive as `1 - e^-40` stay stable.
pub fn step_exponential(
    game: &CongestionGame,
    p: &MixedProfile,
    rates: &LearningRates,
) -> Result<MixedProfile, DynamicsError> {
    rates.check_len(game)?;
    game.check_profile_dims(p);
    let costs = game.strategy_costs(p);
    let mut rows = Vec::with_capacity(game.n_agents());
    for agent in 0..game.n_agents() {
        let ln_decay = rates.ln_decay(agent);
        if !ln_decay.is_finite() || ln_decay >= 0.0 {
            return Err(DynamicsError::InadmissibleExponentialRate { agent });
        }
        let row = p.row(agent);
        let logits: Vec<f64> = row
            .iter()
            .zip(&costs[agent])
            .map(|(&pv, &c)| pv.ln() + c * ln_decay)
            .collect();
        let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut next: Vec<f64> = logits.iter().map(|&w| (w - m).exp()).collect();
        let sum: f64 = next.iter().sum();
        for v in next.iter_mut() {
            *v /= sum;
        }
        rows.push(next);
    }
    Ok(MixedProfile::from_normalized_rows(rows))
}

fn step(
    game: &CongestionGame,
    p: &MixedProfile,
    rates: &LearningRates,
    variant: Variant,
) -> Result<MixedProfile, DynamicsError> {
    match variant {
        Variant::Linear => step_linear(game, p, rates),
        Variant::Exponential => step_exponential(game, p, rates),
    }
}

/// True when every supported strategy of every agent costs within `tol` of
/// that agent's expected cost; such profiles are exactly the stationary
/// points of both update rules.
pub fn is_fixed_point(game: &CongestionGame, p: &MixedProfile, tol: f64) -> bool {
    let costs = game.strategy_costs(p);
    for agent in 0..game.n_agents() {
        let chat: f64 = p
            .row(agent)
            .iter()
            .zip(&costs[agent])
            .map(|(&pv, &c)| pv * c)
            .sum();
        for (&pv, &c) in p.row(agent).iter().zip(&costs[agent]) {
            if pv > SUPPORT_TOL && (c - chat).abs() > tol {
                return false;
            }
        }
    }
    true
}

/// Iterates the chosen rule from `p0`, recording the expected potential (and
/// the ascent value for the linear rule) at every iterate.
///
/// Stops when the step norm falls below `fp_tol` (converged), when an earlier
/// iterate within the sliding window is revisited within `CYCLE_TOL` with
/// period >= 2 and the candidate cycle's diameter exceeds `CYCLE_SEPARATION`
/// (cycle detected), or after `max_iters` steps.
pub fn run(
    game: &CongestionGame,
    p0: &MixedProfile,
    rates: &LearningRates,
    variant: Variant,
    max_iters: usize,
    fp_tol: f64,
) -> Result<Trajectory, DynamicsError> {
    rates.check_len(game)?;
    game.check_profile_dims(p0);
    assert!(fp_tol > 0.0, "fp_tol must be positive");
    let inv_eps_sum: f64 = rates.eps_all().iter().map(|&e| 1.0 / e).sum();
    let q_of = |psi: f64| match variant {
        Variant::Linear => Some(inv_eps_sum - psi),
        Variant::Exponential => None,
    };
    let initial_psi = game.expected_potential(p0);
    let mut points: Vec<TrajectoryPoint> = Vec::new();
    let mut window: Vec<MixedProfile> = vec![p0.clone()];
    let mut current = p0.clone();
    let mut termination = Termination::MaxIters;
    for _ in 0..max_iters {
        let next = step(game, &current, rates, variant)?;
        let step_norm = next.linf_distance(&current);
        let psi = game.expected_potential(&next);
        points.push(TrajectoryPoint {
            profile: next.clone(),
            psi,
            q: q_of(psi),
            step_norm,
        });
        if step_norm < fp_tol {
            termination = Termination::Converged;
            break;
        }
        if let Some(period) = detect_cycle(&window, &next) {
            termination = Termination::CycleDetected { period };
            break;
        }
        window.push(next.clone());
        if window.len() > CYCLE_WINDOW {
            window.remove(0);
        }
        current = next;
    }
    Ok(Trajectory {
        game_hash: game.canonical_hash(),
        variant,
        rates: rates.clone(),
        fp_tol,
        cycle_tol: CYCLE_TOL,
        initial: p0.clone(),
        initial_psi,
        initial_q: q_of(initial_psi),
        points,
        termination,
    })
}

/// Smallest period >= 2 at which `next` revisits a window entry within
/// `CYCLE_TOL`, provided the revisited stretch has diameter above
/// `CYCLE_SEPARATION` (ruling out slow convergence towards a point).
fn detect_cycle(window: &[MixedProfile], next: &MixedProfile) -> Option<usize> {
    let n = window.len();
    for period in 2..=n {
        if next.linf_distance(&window[n - period]) < CYCLE_TOL {
            let mut diameter: f64 = 0.0;
            let cycle = &window[n - period + 1..];
            for (i, a) in cycle.iter().enumerate() {
                diameter = diameter.max(next.linf_distance(a));
                for b in cycle.iter().skip(i + 1) {
                    diameter = diameter.max(a.linf_distance(b));
                }
            }
            if diameter > CYCLE_SEPARATION {
                return Some(period);
            }
        }
    }
    None
}
