//! Experiment harness: seeded random games, interior starts, parallel
//! Lyapunov verification for the linear update, and learning-rate sweeps
//! with certified orbit classification.

use crate::baum_eagon::certified_rate_bounds;
use crate::dynamics::{run, DynamicsError, LearningRates, Termination, Trajectory, Variant};
use crate::game::{CongestionGame, GameError, MixedProfile};
use crate::onedim::{
    certificate_for_root, symmetric_reduction, CertificateKind, IntervalMap, MapError,
    OrbitCertificate,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::PathBuf;
use thiserror::Error;

/// Allowed upward wiggle of the potential before a step counts as a
/// violation (absorbs accumulated rounding in the expectation sums).
const PSI_SLACK: f64 = 1e-13;
/// Loose tolerance for spotting a candidate cycle period after burn-in;
/// certification then demands `CERT_RESIDUAL` after refinement.
const CANDIDATE_TOL: f64 = 1e-7;
/// Longest cycle period the sweep probes for.
const CYCLE_PROBE: usize = 64;
/// Residual a refined orbit must meet to be reported as periodic.
const CERT_RESIDUAL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("potential-descent verification applies to the linear update only")]
    VariantNotLinear,
    #[error("unknown builtin game {0:?}")]
    UnknownBuiltin(String),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Map(#[from] MapError),
}

/// Seeded random congestion game: `n_edges` named edges, each agent draws
/// between 1 and `max_strategies` distinct nonempty edge subsets, and each
/// edge draws a nondecreasing cost table over loads `1..=n_agents` with
/// values in `(0, 1]`.
pub fn random_game(
    seed: u64,
    n_agents: usize,
    n_edges: usize,
    max_strategies: usize,
) -> CongestionGame {
    assert!(n_agents >= 1 && n_edges >= 1 && max_strategies >= 1);
    assert!(n_edges <= 20, "subset enumeration capped at 20 edges");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let edges: Vec<String> = (1..=n_edges).map(|i| format!("e{i}")).collect();
    let n_subsets = (1usize << n_edges) - 1;
    let mut strategies = Vec::with_capacity(n_agents);
    for _ in 0..n_agents {
        let k = rng.gen_range(1..=max_strategies).min(n_subsets);
        let mut masks = BTreeSet::new();
        let mut attempts = 0;
        while masks.len() < k && attempts < 1000 * k {
            masks.insert(rng.gen_range(1..=n_subsets));
            attempts += 1;
        }
        let mut fill = 1;
        while masks.len() < k {
            masks.insert(fill);
            fill += 1;
        }
        let sets: Vec<Vec<usize>> = masks
            .into_iter()
            .map(|m| (0..n_edges).filter(|e| m >> e & 1 == 1).collect())
            .collect();
        strategies.push(sets);
    }
    let costs = (0..n_edges)
        .map(|_| {
            let mut table: Vec<f64> = (0..n_agents).map(|_| 1.0 - rng.gen::<f64>()).collect();
            table.sort_by(f64::total_cmp);
            table
        })
        .collect();
    CongestionGame::new(n_agents, edges, strategies, costs).expect("generated game is valid")
}

/// Seeded interior mixed profiles: each row is Dirichlet(1) pulled toward
/// the barycenter so every entry is at least `margin`.
pub fn interior_starts(
    game: &CongestionGame,
    seed: u64,
    count: usize,
    margin: f64,
) -> Vec<MixedProfile> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let rows: Vec<Vec<f64>> = (0..game.n_agents())
                .map(|i| {
                    let k = game.n_strategies(i);
                    assert!((margin * k as f64) < 1.0, "margin too large for {k} strategies");
                    let gaps: Vec<f64> = (0..k).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
                    let total: f64 = gaps.iter().sum();
                    gaps.iter()
                        .map(|g| margin + (1.0 - margin * k as f64) * g / total)
                        .collect()
                })
                .collect();
            MixedProfile::new(game, rows).expect("interior rows are a valid profile")
        })
        .collect()
}

/// Where the games of an experiment come from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GameSource {
    File(PathBuf),
    Builtin(String),
    Generated {
        seed: u64,
        n_agents: usize,
        n_edges: usize,
        max_strategies: usize,
        count: usize,
    },
}

impl GameSource {
    pub fn games(&self) -> Result<Vec<CongestionGame>, AnalysisError> {
        match self {
            GameSource::File(path) => Ok(vec![CongestionGame::load_json_file(path)?]),
            GameSource::Builtin(name) => CongestionGame::builtin(name)
                .ok_or_else(|| AnalysisError::UnknownBuiltin(name.clone()))
                .map(|g| vec![g]),
            GameSource::Generated {
                seed,
                n_agents,
                n_edges,
                max_strategies,
                count,
            } => Ok((0..*count)
                .map(|i| random_game(seed + i as u64, *n_agents, *n_edges, *max_strategies))
                .collect()),
        }
    }
}

/// How learning rates are chosen per game.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateSpec {
    /// One rate shared by every agent.
    Fixed(f64),
    /// Explicit per-agent rates.
    PerAgent(Vec<f64>),
    /// Per-agent fraction of the tighter of the two admissibility bounds
    /// (the cost-ceiling bound and the certified coefficient bound).
    BoundFraction(f64),
}

impl RateSpec {
    pub fn resolve(&self, game: &CongestionGame) -> Result<LearningRates, AnalysisError> {
        let rates = match self {
            RateSpec::Fixed(eps) => LearningRates::uniform(game.n_agents(), *eps)?,
            RateSpec::PerAgent(eps) => LearningRates::per_agent(eps.clone())?,
            RateSpec::BoundFraction(f) => {
                assert!(*f > 0.0 && *f < 1.0, "fraction must sit in (0, 1)");
                let ceiling = game.linear_rate_bound();
                let eps = certified_rate_bounds(game)
                    .into_iter()
                    .map(|b| f * b.min(ceiling))
                    .collect();
                LearningRates::per_agent(eps)?
            }
        };
        Ok(rates)
    }
}

/// How many interior starts to draw per game, and how far inside the
/// simplex they must sit.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StartSpec {
    pub count: usize,
    pub margin: f64,
}

impl Default for StartSpec {
    fn default() -> Self {
        StartSpec {
            count: 5,
            margin: 1e-3,
        }
    }
}

/// A full experiment: games, update rule, rates, starts, and run limits.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub game: GameSource,
    pub variant: Variant,
    pub rates: RateSpec,
    pub starts: StartSpec,
    pub max_iters: usize,
    pub fp_tol: f64,
    pub seed: u64,
}

/// Per-run summary of potential behavior along a trajectory.
#[derive(Debug, Clone, Serialize)]
pub struct TrajectoryAudit {
    pub steps: usize,
    /// Steps that moved (infinity norm above `fp_tol`) while the expected
    /// potential rose by more than the slack.
    pub violations: usize,
    /// Largest observed rise of the expected potential on a moving step.
    pub max_increase: f64,
    pub termination: Termination,
    pub final_nash_residual: f64,
}

/// Counts potential increases along an already computed trajectory;
/// usable with either update rule.
pub fn audit_trajectory(
    game: &CongestionGame,
    trajectory: &Trajectory,
    fp_tol: f64,
) -> TrajectoryAudit {
    let mut violations = 0;
    let mut max_increase = f64::NEG_INFINITY;
    let mut prev_psi = trajectory.initial_psi;
    for point in &trajectory.points {
        let rise = point.psi - prev_psi;
        if point.step_norm > fp_tol {
            max_increase = max_increase.max(rise);
            if rise > PSI_SLACK {
                violations += 1;
            }
        }
        prev_psi = point.psi;
    }
    let final_profile = trajectory.final_profile();
    TrajectoryAudit {
        steps: trajectory.n_steps(),
        violations,
        max_increase,
        termination: trajectory.termination,
        final_nash_residual: game.nash_residual(final_profile),
    }
}

/// Aggregate verdict of `verify_lyapunov`.
#[derive(Debug, Clone, Serialize)]
pub struct LyapunovReport {
    pub n_games: usize,
    pub n_runs: usize,
    pub total_steps: usize,
    pub total_violations: usize,
    /// Largest potential rise seen on any moving step across all runs.
    pub max_increase: f64,
    pub passed: bool,
    pub audits: Vec<TrajectoryAudit>,
}

/// Runs the linear update from seeded interior starts on every game of the
/// config and audits the expected potential for monotone descent. Runs are
/// executed in parallel; results are deterministic for a fixed config.
pub fn verify_lyapunov(config: &ExperimentConfig) -> Result<LyapunovReport, AnalysisError> {
    if config.variant != Variant::Linear {
        return Err(AnalysisError::VariantNotLinear);
    }
    let games = config.game.games()?;
    let mut tasks = Vec::new();
    for (gi, game) in games.iter().enumerate() {
        let rates = config.rates.resolve(game)?;
        let starts = interior_starts(
            game,
            config.seed.wrapping_add(gi as u64),
            config.starts.count,
            config.starts.margin,
        );
        for start in starts {
            tasks.push((game.clone(), rates.clone(), start));
        }
    }
    let audits: Vec<TrajectoryAudit> = tasks
        .par_iter()
        .map(|(game, rates, start)| {
            let traj = run(
                game,
                start,
                rates,
                Variant::Linear,
                config.max_iters,
                config.fp_tol,
            )?;
            Ok(audit_trajectory(game, &traj, config.fp_tol))
        })
        .collect::<Result<_, DynamicsError>>()?;
    let total_steps = audits.iter().map(|a| a.steps).sum();
    let total_violations = audits.iter().map(|a| a.violations).sum();
    let max_increase = audits
        .iter()
        .map(|a| a.max_increase)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(LyapunovReport {
        n_games: games.len(),
        n_runs: audits.len(),
        total_steps,
        total_violations,
        max_increase,
        passed: total_violations == 0,
        audits,
    })
}

/// Long-run classification of one rate in a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepClass {
    Converged,
    Periodic { period: usize },
    NonClassified,
}

/// Outcome for a single learning rate in a sweep. `Periodic` is only
/// reported with a refined certificate whose residual meets the
/// certification threshold.
#[derive(Debug, Clone, Serialize)]
pub struct SweepOutcome {
    pub eps: f64,
    pub class: SweepClass,
    pub certificate: Option<OrbitCertificate>,
    pub detail: String,
}

/// Tries to certify an orbit of period dividing `d` near `x` by expanding a
/// bracket for `f^d(y) - y` and bisecting.
fn certify_near(map: &IntervalMap, x: f64, d: usize) -> Option<OrbitCertificate> {
    let g = |y: f64| crate::onedim::iterate(map, y, d) - y;
    if (x - map.lo()).abs() < 1e-12 || (x - map.hi()).abs() < 1e-12 {
        // Boundary fixed point: no two-sided bracket exists inside the domain.
        let residual = g(x).abs();
        if residual > CERT_RESIDUAL {
            return None;
        }
        return Some(certificate_for_root(map, x, d, (x, x)));
    }
    let mut delta = 1e-9;
    while delta <= 1e-2 {
        let lo = (x - delta).max(map.lo());
        let hi = (x + delta).min(map.hi());
        let g_lo = g(lo);
        let g_hi = g(hi);
        if g_lo != 0.0 && g_hi != 0.0 && (g_lo > 0.0) != (g_hi > 0.0) {
            let root = crate::onedim::bisect_on(&g, lo, hi);
            return Some(certificate_for_root(map, root, d, (lo, hi)));
        }
        delta *= 10.0;
    }
    None
}

/// Sweeps a grid of learning rates on a symmetric two-strategy game,
/// iterating the scalar reduction past burn-in and classifying the tail as
/// converged, certified periodic, or non-classified. Games that do not
/// reduce are run in full profile space; their cycles are reported as
/// non-classified because no scalar certificate exists for them.
pub fn rate_sweep(
    game: &CongestionGame,
    variant: Variant,
    eps_grid: &[f64],
    start: f64,
    max_iters: usize,
) -> Result<Vec<SweepOutcome>, AnalysisError> {
    assert!(start > 0.0 && start < 1.0, "start must be interior");
    let reducible = game.n_agents() == 2
        && game.strategies()[0] == game.strategies()[1]
        && game.n_strategies(0) == 2;
    let mut outcomes = Vec::with_capacity(eps_grid.len());
    for &eps in eps_grid {
        let rates = match LearningRates::uniform(game.n_agents(), eps) {
            Ok(r) => r,
            Err(e) => {
                outcomes.push(SweepOutcome {
                    eps,
                    class: SweepClass::NonClassified,
                    certificate: None,
                    detail: format!("invalid rate: {e}"),
                });
                continue;
            }
        };
        if reducible {
            outcomes.push(sweep_scalar(game, &rates, variant, eps, start, max_iters));
        } else {
            outcomes.push(sweep_profile(game, &rates, variant, eps, max_iters)?);
        }
    }
    Ok(outcomes)
}

fn sweep_scalar(
    game: &CongestionGame,
    rates: &LearningRates,
    variant: Variant,
    eps: f64,
    start: f64,
    max_iters: usize,
) -> SweepOutcome {
    let map = match symmetric_reduction(game, rates, variant) {
        Ok(m) => m,
        Err(e) => {
            return SweepOutcome {
                eps,
                class: SweepClass::NonClassified,
                certificate: None,
                detail: format!("no scalar reduction: {e}"),
            }
        }
    };
    let y = crate::onedim::iterate(&map, start, max_iters);
    let mut candidate = None;
    for d in 1..=CYCLE_PROBE {
        if (crate::onedim::iterate(&map, y, d) - y).abs() < CANDIDATE_TOL {
            candidate = Some(d);
            break;
        }
    }
    let Some(d) = candidate else {
        return SweepOutcome {
            eps,
            class: SweepClass::NonClassified,
            certificate: None,
            detail: format!(
                "no cycle of period <= {CYCLE_PROBE} within {CANDIDATE_TOL} after burn-in"
            ),
        };
    };
    match certify_near(&map, y, d) {
        Some(cert) if cert.residual <= CERT_RESIDUAL => {
            let (class, detail) = match cert.kind {
                CertificateKind::Fixed => (
                    SweepClass::Converged,
                    format!("fixed point at {:.12}", cert.points[0]),
                ),
                CertificateKind::Periodic { period } => (
                    SweepClass::Periodic { period },
                    format!("certified period-{period} orbit"),
                ),
            };
            SweepOutcome {
                eps,
                class,
                certificate: Some(cert),
                detail,
            }
        }
        Some(cert) => SweepOutcome {
            eps,
            class: SweepClass::NonClassified,
            certificate: None,
            detail: format!(
                "refined orbit residual {} above the certification threshold",
                cert.residual
            ),
        },
        None => SweepOutcome {
            eps,
            class: SweepClass::NonClassified,
            certificate: None,
            detail: "candidate cycle could not be bracketed for refinement".into(),
        },
    }
}

fn sweep_profile(
    game: &CongestionGame,
    rates: &LearningRates,
    variant: Variant,
    eps: f64,
    max_iters: usize,
) -> Result<SweepOutcome, AnalysisError> {
    let start = interior_starts(game, 42, 1, 1e-3).pop().expect("one start");
    let traj = match run(game, &start, rates, variant, max_iters, 1e-12) {
        Ok(t) => t,
        Err(e) => {
            return Ok(SweepOutcome {
                eps,
                class: SweepClass::NonClassified,
                certificate: None,
                detail: format!("run failed: {e}"),
            })
        }
    };
    Ok(match traj.termination {
        Termination::Converged => SweepOutcome {
            eps,
            class: SweepClass::Converged,
            certificate: None,
            detail: "profile iteration reached a fixed point (seeded interior start)".into(),
        },
        Termination::CycleDetected { period } => SweepOutcome {
            eps,
            class: SweepClass::NonClassified,
            certificate: None,
            detail: format!(
                "profile iteration revisited a point with period {period}, but no scalar certificate exists for a non-reducible game"
            ),
        },
        Termination::MaxIters => SweepOutcome {
            eps,
            class: SweepClass::NonClassified,
            certificate: None,
            detail: "no fixed point or short cycle within the iteration budget".into(),
        },
    })
}

/// Bifurcation data for plotting: for each rate, iterates the scalar
/// reduction past burn-in and emits up to 16 deduplicated attractor samples
/// as `eps,x` rows.
pub fn bifurcation_csv(
    game: &CongestionGame,
    variant: Variant,
    eps_grid: &[f64],
    start: f64,
    burn_in: usize,
) -> Result<String, AnalysisError> {
    let mut out = String::from("eps,x\n");
    for &eps in eps_grid {
        let rates = match LearningRates::uniform(game.n_agents(), eps) {
            Ok(r) => r,
            Err(_) => continue,
        };
        let map = match symmetric_reduction(game, &rates, variant) {
            Ok(m) => m,
            Err(MapError::InadmissibleRates { .. }) => continue,
            Err(e) => return Err(e.into()),
        };
        let mut x = crate::onedim::iterate(&map, start, burn_in);
        let mut samples = Vec::with_capacity(16);
        for _ in 0..16 {
            x = map.eval(x);
            samples.push(x);
        }
        samples.sort_by(f64::total_cmp);
        samples.dedup_by(|a, b| (*a - *b).abs() < 1e-6);
        for s in samples {
            out.push_str(&format!("{eps},{s}\n"));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_game_is_deterministic_and_valid() {
        let a = random_game(7, 3, 4, 3);
        let b = random_game(7, 3, 4, 3);
        assert_eq!(a.canonical_hash(), b.canonical_hash());
        let c = random_game(8, 3, 4, 3);
        assert_ne!(a.canonical_hash(), c.canonical_hash());
        for e in 0..a.n_edges() {
            for l in 1..a.n_agents() {
                assert!(a.cost(e, l) <= a.cost(e, l + 1), "cost tables nondecreasing");
            }
        }
    }

    #[test]
    fn interior_starts_respect_margin_and_seed() {
        let game = random_game(3, 3, 4, 3);
        let starts = interior_starts(&game, 11, 4, 1e-3);
        assert_eq!(starts.len(), 4);
        for p in &starts {
            for i in 0..game.n_agents() {
                let row = p.row(i);
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert!(row.iter().all(|&v| v >= 1e-3 - 1e-15));
            }
        }
        let again = interior_starts(&game, 11, 4, 1e-3);
        assert_eq!(starts[2].rows(), again[2].rows());
    }

    #[test]
    fn bound_fraction_rates_are_admissible() {
        let game = random_game(21, 3, 4, 3);
        let rates = RateSpec::BoundFraction(0.9).resolve(&game).unwrap();
        assert!(rates.linear_admissible(&game));
    }

    #[test]
    fn lyapunov_rejects_exponential_variant() {
        let config = ExperimentConfig {
            game: GameSource::Builtin("game1".into()),
            variant: Variant::Exponential,
            rates: RateSpec::Fixed(0.5),
            starts: StartSpec::default(),
            max_iters: 10,
            fp_tol: 1e-12,
            seed: 0,
        };
        assert!(matches!(
            verify_lyapunov(&config),
            Err(AnalysisError::VariantNotLinear)
        ));
    }

    #[test]
    fn lyapunov_passes_on_a_small_batch() {
        let config = ExperimentConfig {
            game: GameSource::Generated {
                seed: 100,
                n_agents: 3,
                n_edges: 4,
                max_strategies: 3,
                count: 5,
            },
            variant: Variant::Linear,
            rates: RateSpec::BoundFraction(0.9),
            starts: StartSpec {
                count: 2,
                margin: 1e-3,
            },
            max_iters: 200,
            fp_tol: 1e-12,
            seed: 5,
        };
        let report = verify_lyapunov(&config).unwrap();
        assert_eq!(report.n_games, 5);
        assert_eq!(report.n_runs, 10);
        assert!(report.passed, "max increase {}", report.max_increase);
    }

    #[test]
    fn unknown_builtin_is_reported() {
        let src = GameSource::Builtin("game9".into());
        assert!(matches!(
            src.games(),
            Err(AnalysisError::UnknownBuiltin(_))
        ));
    }

    #[test]
    fn sweep_classifies_convergence_and_cycles() {
        let game = CongestionGame::builtin_game1();
        // Exponential rule on the evenly loaded game: converges at mild decay,
        // certified period-2 at decay e^-10.
        let grid = [
            LearningRates::from_ln_decay(2, -1.0).unwrap().eps(0),
            LearningRates::from_ln_decay(2, -10.0).unwrap().eps(0),
        ];
        let outcomes =
            rate_sweep(&game, Variant::Exponential, &grid, 0.3, 4000).unwrap();
        assert_eq!(outcomes[0].class, SweepClass::Converged);
        assert_eq!(outcomes[1].class, SweepClass::Periodic { period: 2 });
        let cert = outcomes[1].certificate.as_ref().unwrap();
        assert!(cert.residual <= 1e-10);
    }

    #[test]
    fn sweep_reports_invalid_rates_without_failing() {
        let game = CongestionGame::builtin_game1();
        let outcomes = rate_sweep(&game, Variant::Exponential, &[-0.5], 0.3, 100).unwrap();
        assert_eq!(outcomes[0].class, SweepClass::NonClassified);
        assert!(outcomes[0].detail.contains("invalid rate"));
    }

    #[test]
    fn bifurcation_csv_has_expected_shape() {
        let game = CongestionGame::builtin_game1();
        let eps1 = LearningRates::from_ln_decay(2, -1.0).unwrap().eps(0);
        let eps2 = LearningRates::from_ln_decay(2, -10.0).unwrap().eps(0);
        let csv = bifurcation_csv(&game, Variant::Exponential, &[eps1, eps2], 0.3, 2000).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "eps,x");
        // Converged rate contributes one sample, period-2 rate two.
        assert_eq!(lines.len(), 4);
    }
}
