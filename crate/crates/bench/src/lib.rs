//! Shared fixtures for the benchmark targets.

use mwu_lab::{CongestionGame, LearningRates, MixedProfile};

/// The evenly loaded two-edge builtin and a mid-simplex profile.
pub fn builtin_fixture() -> (CongestionGame, MixedProfile, LearningRates) {
    let game = CongestionGame::builtin_game1();
    let profile = MixedProfile::symmetric(&game, 0.3).expect("two-strategy game");
    let rates = LearningRates::uniform(2, 0.5).expect("valid rate");
    (game, profile, rates)
}

/// A seeded 4-agent random game with an interior start and rates at 90% of
/// the admissible bound.
pub fn random_fixture() -> (CongestionGame, MixedProfile, LearningRates) {
    let game = mwu_lab::random_game(1, 4, 5, 4);
    let profile = mwu_lab::interior_starts(&game, 2, 1, 1e-3)
        .pop()
        .expect("one start");
    let eps = mwu_lab::certified_rate_bounds(&game)
        .into_iter()
        .map(|b| 0.9 * b.min(game.linear_rate_bound()))
        .collect();
    let rates = LearningRates::per_agent(eps).expect("valid rates");
    (game, profile, rates)
}
