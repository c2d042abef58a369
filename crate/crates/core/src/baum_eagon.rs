//! Sparse polynomials over products of simplices and the Baum-Eagon ascent.
//!
//! For a polynomial `P` with nonnegative coefficients over variable blocks
//! `x_i` (one block per agent, one variable per strategy), the Baum-Eagon map
//! sends `x` to the point whose `(i, j)` coordinate is
//! `x_ij dP/dx_ij / sum_j' x_ij' dP/dx_ij'`. The map stays in the product of
//! simplices and strictly increases `P` away from fixed points.
//!
//! `build_q` constructs, for a congestion game and admissible linear-update
//! rates, a nonnegative-coefficient polynomial whose value on the simplex is
//! `sum_i 1/eps_i - expected_potential(p)` and whose partial derivatives on
//! the simplex are `1/eps_i - expected_strategy_cost(i, s)`. Its Baum-Eagon
//! map therefore reproduces the linear update exactly, which certifies that
//! the expected potential decreases along linear-update trajectories.
//!
//! The construction distributes each edge's cost curvature over agent
//! subsets: with `F_e(j)` the partial sums of the cost table and
//! `D_e^k = Delta^k F_e(0)` the forward differences at zero, the interaction
//! coefficient of a subset `T` at a joint choice `sigma` is
//! `m_T(sigma) = sum over edges shared by all of sigma of D_e^|T|`. Each
//! subset's monomials get coefficients `kappa_T - m_T(sigma)` with
//! `kappa_T = max(0, max_sigma m_T(sigma))`, singleton terms absorb
//! `1/eps_i - (first-load costs) - (kappa mass through i)`, and a constant
//! term restores the exact on-simplex value.

use crate::dynamics::LearningRates;
use crate::game::CongestionGame;
use serde::Serialize;
use thiserror::Error;

/// Coefficients this far below zero are treated as float noise and clamped.
pub const NEG_COEFF_TOL: f64 = 1e-12;

/// Default cap on the number of pure-profile monomials `build_q` may expand.
pub const MONOMIAL_CAP_DEFAULT: u64 = 1_000_000;

#[derive(Debug, Error)]
pub enum PolyError {
    #[error("negative coefficient {coeff} on monomial {monomial:?}")]
    NegativeCoefficient {
        coeff: f64,
        monomial: Vec<(usize, usize, u32)>,
    },
    #[error("variable ({block}, {index}) out of range for the declared blocks")]
    VarOutOfRange { block: usize, index: usize },
    #[error("Baum-Eagon denominator for block {block} is {value}; point has no mass on the block's variables")]
    DegenerateDenominator { block: usize, value: f64 },
    #[error("game expands to {needed} pure-profile monomials, above the cap {cap}")]
    MonomialCap { needed: u64, cap: u64 },
    #[error("rates not admissible for the linear rule: agent {agent} has eps {eps}, bound {bound}")]
    InadmissibleRate { agent: usize, eps: f64, bound: f64 },
    #[error("rates cover {got} agents, game has {expected}")]
    RateLength { expected: usize, got: usize },
}

/// One term: `coeff * prod x[block][index]^power`, `vars` sorted and free of
/// zero powers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Monomial {
    pub coeff: f64,
    pub vars: Vec<(usize, usize, u32)>,
}

/// Sparse multivariate polynomial with nonnegative coefficients over
/// per-agent variable blocks. Canonical form: monomials sorted by exponent
/// pattern, no duplicates, no zero coefficients.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimplexPolynomial {
    blocks: Vec<usize>,
    monomials: Vec<Monomial>,
}

impl SimplexPolynomial {
    /// Builds the canonical form from raw terms: merges duplicate exponent
    /// patterns, drops zero coefficients, clamps float-noise negatives, and
    /// rejects genuinely negative coefficients.
    pub fn new(
        blocks: Vec<usize>,
        terms: Vec<(f64, Vec<(usize, usize, u32)>)>,
    ) -> Result<Self, PolyError> {
        use std::collections::BTreeMap;
        let mut merged: BTreeMap<Vec<(usize, usize, u32)>, f64> = BTreeMap::new();
        for (coeff, vars) in terms {
            let mut key: Vec<(usize, usize, u32)> =
                vars.into_iter().filter(|&(_, _, p)| p > 0).collect();
            key.sort_unstable();
            let mut folded: Vec<(usize, usize, u32)> = Vec::with_capacity(key.len());
            for (b, i, p) in key {
                if b >= blocks.len() || i >= blocks[b] {
                    return Err(PolyError::VarOutOfRange { block: b, index: i });
                }
                match folded.last_mut() {
                    Some(last) if last.0 == b && last.1 == i => last.2 += p,
                    _ => folded.push((b, i, p)),
                }
            }
            *merged.entry(folded).or_insert(0.0) += coeff;
        }
        let mut monomials = Vec::with_capacity(merged.len());
        for (vars, coeff) in merged {
            if coeff < -NEG_COEFF_TOL {
                return Err(PolyError::NegativeCoefficient {
                    coeff,
                    monomial: vars,
                });
            }
            let coeff = coeff.max(0.0);
            if coeff > 0.0 {
                monomials.push(Monomial { coeff, vars });
            }
        }
        Ok(SimplexPolynomial { blocks, monomials })
    }

    pub fn blocks(&self) -> &[usize] {
        &self.blocks
    }

    pub fn monomials(&self) -> &[Monomial] {
        &self.monomials
    }

    pub fn n_monomials(&self) -> usize {
        self.monomials.len()
    }

    pub fn min_coefficient(&self) -> f64 {
        self.monomials
            .iter()
            .map(|m| m.coeff)
            .fold(f64::INFINITY, f64::min)
    }

    /// Total degree of the largest monomial.
    pub fn degree(&self) -> u32 {
        self.monomials
            .iter()
            .map(|m| m.vars.iter().map(|&(_, _, p)| p).sum())
            .max()
            .unwrap_or(0)
    }

    fn check_point(&self, x: &[Vec<f64>]) {
        assert_eq!(x.len(), self.blocks.len(), "point block count mismatch");
        for (b, row) in x.iter().enumerate() {
            assert_eq!(row.len(), self.blocks[b], "point block {b} length mismatch");
        }
    }

    /// Exact sparse evaluation.
    pub fn eval(&self, x: &[Vec<f64>]) -> f64 {
        self.check_point(x);
        let mut total = 0.0;
        for m in &self.monomials {
            let mut v = m.coeff;
            for &(b, i, p) in &m.vars {
                v *= x[b][i].powi(p as i32);
            }
            total += v;
        }
        total
    }

    /// Partial derivative with respect to `x[block][index]`, evaluated at `x`.
    pub fn partial_at(&self, block: usize, index: usize, x: &[Vec<f64>]) -> f64 {
        self.check_point(x);
        assert!(
            block < self.blocks.len() && index < self.blocks[block],
            "variable ({block}, {index}) out of range"
        );
        let mut total = 0.0;
        for m in &self.monomials {
            let mut v = m.coeff;
            let mut hit = false;
            for &(b, i, p) in &m.vars {
                if b == block && i == index {
                    hit = true;
                    v *= p as f64 * x[b][i].powi(p as i32 - 1);
                } else {
                    v *= x[b][i].powi(p as i32);
                }
            }
            if hit {
                total += v;
            }
        }
        total
    }

    /// One Baum-Eagon step from a point in the product of simplices:
    /// `(i, j) -> x_ij dP/dx_ij / sum_j' x_ij' dP/dx_ij'`. Accepts
    /// non-homogeneous polynomials directly (the induced map agrees with the
    /// homogenized one, so no dummy variable is materialized).
    pub fn baum_eagon_step(&self, x: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, PolyError> {
        self.check_point(x);
        let mut numer: Vec<Vec<f64>> = self.blocks.iter().map(|&n| vec![0.0; n]).collect();
        for m in &self.monomials {
            let mut v = m.coeff;
            for &(b, i, p) in &m.vars {
                v *= x[b][i].powi(p as i32);
            }
            if v == 0.0 {
                continue;
            }
            // x_j d/dx_j of a monomial is (power) * (monomial value).
            for &(b, i, p) in &m.vars {
                numer[b][i] += p as f64 * v;
            }
        }
        let mut out = Vec::with_capacity(self.blocks.len());
        for (block, row) in numer.into_iter().enumerate() {
            let den: f64 = row.iter().sum();
            if !(den > 0.0) || !den.is_finite() {
                return Err(PolyError::DegenerateDenominator { block, value: den });
            }
            out.push(row.into_iter().map(|v| v / den).collect());
        }
        Ok(out)
    }

    /// JSON dump: variable block layout plus `(coefficient, exponents)` pairs.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("polynomial serializes")
    }
}

/// Per-edge forward differences `D[e][k] = Delta^k F_e(0)` of the partial
/// cost sums `F_e(j) = sum_{l<=j} c_e(l)`, for `k = 0..=n_agents`.
fn cost_sum_differences(game: &CongestionGame) -> Vec<Vec<f64>> {
    let n = game.n_agents();
    (0..game.n_edges())
        .map(|e| {
            let mut f = Vec::with_capacity(n + 1);
            f.push(0.0);
            for j in 1..=n {
                f.push(f[j - 1] + game.cost(e, j));
            }
            let mut diffs = Vec::with_capacity(n + 1);
            diffs.push(f[0]);
            let mut level = f;
            for _ in 1..=n {
                for j in 0..level.len() - 1 {
                    level[j] = level[j + 1] - level[j];
                }
                level.pop();
                diffs.push(level[0]);
            }
            diffs
        })
        .collect()
}

struct SubsetInteraction {
    /// Agent indices of the subset, ascending.
    members: Vec<usize>,
    /// `kappa = max(0, max_sigma m(sigma))` over the subset's joint choices.
    kappa: f64,
    /// `(joint choice, m(sigma))` for every joint choice of the members.
    terms: Vec<(Vec<usize>, f64)>,
}

/// Interaction data for every agent subset of size >= 2.
fn subset_interactions(game: &CongestionGame) -> Vec<SubsetInteraction> {
    let n = game.n_agents();
    let diffs = cost_sum_differences(game);
    let mut out = Vec::new();
    for mask in 0u32..(1u32 << n) {
        let members: Vec<usize> = (0..n).filter(|&i| mask & (1 << i) != 0).collect();
        if members.len() < 2 {
            continue;
        }
        let size = members.len();
        let mut terms = Vec::new();
        let mut kappa: f64 = 0.0;
        let mut sigma = vec![0usize; size];
        loop {
            // Edges used by every member under this joint choice.
            let mut shared: Vec<usize> = game.strategies()[members[0]][sigma[0]].clone();
            for (slot, &agent) in members.iter().enumerate().skip(1) {
                let strat = &game.strategies()[agent][sigma[slot]];
                shared.retain(|e| strat.binary_search(e).is_ok());
            }
            let m: f64 = shared.iter().map(|&e| diffs[e][size]).sum();
            kappa = kappa.max(m);
            terms.push((sigma.clone(), m));
            // Odometer over the members' strategy sets.
            let mut slot = 0;
            loop {
                if slot == size {
                    break;
                }
                sigma[slot] += 1;
                if sigma[slot] < game.n_strategies(members[slot]) {
                    break;
                }
                sigma[slot] = 0;
                slot += 1;
            }
            if slot == size {
                break;
            }
        }
        out.push(SubsetInteraction {
            members,
            kappa,
            terms,
        });
    }
    out
}

/// Largest learning rate per agent for which `build_q` is guaranteed to
/// produce nonnegative coefficients. At or below `min` of this and the
/// game's `linear_rate_bound`, construction always succeeds; for linear cost
/// tables this bound is never tighter than the linear rule's own bound.
pub fn certified_rate_bounds(game: &CongestionGame) -> Vec<f64> {
    let interactions = subset_interactions(game);
    let mut kappa_through: Vec<f64> = vec![0.0; game.n_agents()];
    for si in &interactions {
        for &i in &si.members {
            kappa_through[i] += si.kappa;
        }
    }
    (0..game.n_agents())
        .map(|agent| {
            let max_first_load: f64 = game.strategies()[agent]
                .iter()
                .map(|strat| strat.iter().map(|&e| game.cost(e, 1)).sum::<f64>())
                .fold(0.0, f64::max);
            1.0 / (max_first_load + kappa_through[agent])
        })
        .collect()
}

/// Builds the ascent polynomial for a game and admissible linear-update
/// rates; see the module docs for the construction. Fails with
/// `NegativeCoefficient` when the rates exceed what nonnegativity can
/// certify (see `certified_rate_bounds`).
pub fn build_q(
    game: &CongestionGame,
    rates: &LearningRates,
) -> Result<SimplexPolynomial, PolyError> {
    build_q_with_cap(game, rates, MONOMIAL_CAP_DEFAULT)
}

/// `build_q` with an explicit cap on the pure-profile monomial count.
pub fn build_q_with_cap(
    game: &CongestionGame,
    rates: &LearningRates,
    cap: u64,
) -> Result<SimplexPolynomial, PolyError> {
    if rates.n_agents() != game.n_agents() {
        return Err(PolyError::RateLength {
            expected: game.n_agents(),
            got: rates.n_agents(),
        });
    }
    let bound = game.max_strategy_cost();
    for agent in 0..game.n_agents() {
        if rates.eps(agent) * bound >= 1.0 {
            return Err(PolyError::InadmissibleRate {
                agent,
                eps: rates.eps(agent),
                bound: 1.0 / bound,
            });
        }
    }
    let mut needed: u64 = 1;
    for set in game.strategies() {
        needed = needed.saturating_mul(set.len() as u64);
    }
    if needed > cap {
        return Err(PolyError::MonomialCap { needed, cap });
    }

    let interactions = subset_interactions(game);
    let mut terms: Vec<(f64, Vec<(usize, usize, u32)>)> = Vec::new();
    let mut kappa_through: Vec<f64> = vec![0.0; game.n_agents()];
    let mut constant = 0.0;
    for si in &interactions {
        for &i in &si.members {
            kappa_through[i] += si.kappa;
        }
        constant += (si.members.len() as f64 - 1.0) * si.kappa;
        for (sigma, m) in &si.terms {
            let coeff = si.kappa - m;
            if coeff != 0.0 {
                let vars = si
                    .members
                    .iter()
                    .zip(sigma)
                    .map(|(&agent, &s)| (agent, s, 1u32))
                    .collect();
                terms.push((coeff, vars));
            }
        }
    }
    for agent in 0..game.n_agents() {
        for (s, strat) in game.strategies()[agent].iter().enumerate() {
            let first_load: f64 = strat.iter().map(|&e| game.cost(e, 1)).sum();
            let coeff = 1.0 / rates.eps(agent) - first_load - kappa_through[agent];
            terms.push((coeff, vec![(agent, s, 1)]));
        }
    }
    if constant != 0.0 {
        terms.push((constant, vec![]));
    }
    let blocks = game.strategies().iter().map(|s| s.len()).collect();
    SimplexPolynomial::new(blocks, terms)
}
