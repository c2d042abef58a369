//! Property-based invariants: both update rules preserve the product
//! simplex and its face structure, expected edge loads agree with the
//! per-agent usage probabilities, unilateral deviations move the potential
//! by exactly the deviator's cost change, and the ascent polynomial never
//! decreases along its own update.

use mwu_lab::{
    build_q, certified_rate_bounds, random_game, step_exponential, step_linear, CongestionGame,
    LearningRates, MixedProfile, PureProfile,
};
use proptest::prelude::*;

/// Weight pool large enough for any generated shape (4 agents x 4 rows).
const POOL: usize = 16;

/// Random small game and a mixed profile assembled from a raw weight pool.
fn game_and_profile(
    seed: u64,
    n_agents: usize,
    n_edges: usize,
    max_strategies: usize,
    pool: &[f64],
) -> (CongestionGame, MixedProfile) {
    let game = random_game(seed, n_agents, n_edges, max_strategies);
    let mut offset = 0;
    let rows: Vec<Vec<f64>> = game
        .strategies()
        .iter()
        .map(|set| {
            let raw = &pool[offset..offset + set.len()];
            offset += set.len();
            let sum: f64 = raw.iter().sum();
            raw.iter().map(|w| w / sum).collect()
        })
        .collect();
    let profile = MixedProfile::new(&game, rows).expect("normalized rows form a profile");
    (game, profile)
}

/// Per-agent rates strictly inside the cost ceiling, the
/// coefficient-nonnegativity bound, and 1 (so `ln(1 - eps)` stays finite
/// for the exponential rule even on games with tiny costs).
fn safe_rates(game: &CongestionGame) -> LearningRates {
    let ceiling = game.linear_rate_bound();
    let eps: Vec<f64> = certified_rate_bounds(game)
        .into_iter()
        .map(|b| 0.9 * b.min(ceiling).min(1.0))
        .collect();
    LearningRates::per_agent(eps).expect("positive admissible rates")
}

/// Probability that `agent` uses `edge`: the mass of strategies containing it.
fn usage(game: &CongestionGame, p: &MixedProfile, agent: usize, edge: usize) -> f64 {
    game.strategies()[agent]
        .iter()
        .zip(p.row(agent))
        .filter(|(set, _)| set.contains(&edge))
        .map(|(_, &pv)| pv)
        .sum()
}

proptest! {
    #[test]
    fn both_update_rules_stay_on_the_product_simplex(
        seed in any::<u64>(),
        n_agents in 2..=4usize,
        n_edges in 2..=5usize,
        max_strategies in 2..=4usize,
        pool in prop::collection::vec(1e-3..1.0f64, POOL),
    ) {
        let (game, p) = game_and_profile(seed, n_agents, n_edges, max_strategies, &pool);
        let rates = safe_rates(&game);
        for next in [
            step_linear(&game, &p, &rates).expect("rates below the ceiling"),
            step_exponential(&game, &p, &rates).expect("negative log decay"),
        ] {
            for row in next.rows() {
                for &v in row {
                    prop_assert!(v >= 0.0 && v.is_finite(), "entry {v} left the simplex");
                }
                let sum: f64 = row.iter().sum();
                prop_assert!((sum - 1.0).abs() <= 1e-12, "row sum drifted to {sum}");
            }
        }
    }

    #[test]
    fn unplayed_strategies_stay_unplayed(
        seed in any::<u64>(),
        n_agents in 2..=4usize,
        n_edges in 2..=5usize,
        max_strategies in 2..=4usize,
        pool in prop::collection::vec(1e-3..1.0f64, POOL),
        pick in any::<u64>(),
    ) {
        let (game, p) = game_and_profile(seed, n_agents, n_edges, max_strategies, &pool);
        // Zero one entry of some agent with at least two strategies; agents
        // whose draw collapsed to a single strategy cannot host a zero.
        let Some(agent) = (0..game.n_agents()).find(|&i| game.n_strategies(i) > 1) else {
            return Ok(());
        };
        let strategy = pick as usize % game.n_strategies(agent);
        let mut rows: Vec<Vec<f64>> = p.rows().to_vec();
        rows[agent][strategy] = 0.0;
        let sum: f64 = rows[agent].iter().sum();
        for v in rows[agent].iter_mut() {
            *v /= sum;
        }
        let p = MixedProfile::new(&game, rows).expect("renormalized rows form a profile");
        let rates = safe_rates(&game);
        for next in [
            step_linear(&game, &p, &rates).expect("rates below the ceiling"),
            step_exponential(&game, &p, &rates).expect("negative log decay"),
        ] {
            prop_assert_eq!(
                next.entry(agent, strategy),
                0.0,
                "a zero-probability strategy regained mass"
            );
        }
    }

    #[test]
    fn expected_edge_loads_match_usage_probabilities(
        seed in any::<u64>(),
        n_agents in 2..=4usize,
        n_edges in 2..=5usize,
        max_strategies in 2..=4usize,
        pool in prop::collection::vec(1e-3..1.0f64, POOL),
    ) {
        let (game, p) = game_and_profile(seed, n_agents, n_edges, max_strategies, &pool);
        let dists = game.load_distributions(&p, None);
        for e in 0..game.n_edges() {
            let marginal: f64 = (0..game.n_agents()).map(|i| usage(&game, &p, i, e)).sum();
            prop_assert!(
                (dists.mean(e) - marginal).abs() <= 1e-12,
                "edge {e}: mean load {} vs usage sum {marginal}",
                dists.mean(e)
            );
        }
    }

    #[test]
    fn unilateral_deviation_moves_the_potential_by_the_cost_change(
        seed in any::<u64>(),
        n_agents in 2..=4usize,
        n_edges in 2..=5usize,
        max_strategies in 2..=4usize,
        picks in prop::collection::vec(any::<u64>(), 6),
    ) {
        let game = random_game(seed, n_agents, n_edges, max_strategies);
        let choices: Vec<usize> = (0..game.n_agents())
            .map(|i| picks[i] as usize % game.n_strategies(i))
            .collect();
        let s = PureProfile::new(&game, choices.clone()).expect("choices in range");
        let agent = picks[4] as usize % game.n_agents();
        let mut deviated = choices;
        deviated[agent] = picks[5] as usize % game.n_strategies(agent);
        let t = PureProfile::new(&game, deviated).expect("choices in range");
        let phi_change = game.potential(&t) - game.potential(&s);
        let cost_change = game.pure_cost(&t, agent) - game.pure_cost(&s, agent);
        prop_assert!(
            (phi_change - cost_change).abs() <= 1e-12,
            "potential moved by {phi_change} but agent {agent} cost moved by {cost_change}"
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn the_ascent_polynomial_never_decreases_along_its_own_update(
        seed in any::<u64>(),
        n_agents in 2..=3usize,
        n_edges in 2..=4usize,
        max_strategies in 2..=3usize,
        pool in prop::collection::vec(1e-3..1.0f64, POOL),
    ) {
        let (game, p) = game_and_profile(seed, n_agents, n_edges, max_strategies, &pool);
        let rates = safe_rates(&game);
        let q = build_q(&game, &rates).expect("rates below the certified bound");
        let before = q.eval(p.rows());
        let next = q.baum_eagon_step(p.rows()).expect("step from a valid point");
        let after = q.eval(&next);
        prop_assert!(
            after >= before - 1e-12,
            "polynomial fell from {before} to {after}"
        );
    }
}
