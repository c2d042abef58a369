//! Command-line front end: single trajectories, rate sweeps, potential-descent
//! verification, interval-map analysis, and the reference result bundle.

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use mwu_lab::{
    bifurcation_csv, find_fixed_points, find_period3, iterates_csv, li_yorke_certificate, map_g,
    map_h, rate_sweep, run, scrambled_pair_evidence, symmetric_reduction, verify_lyapunov,
    CertificateKind, CongestionGame, ExperimentConfig, GameSource, HConstants, LearningRates,
    MixedProfile, RateSpec, StartSpec, SweepClass, Termination, Trajectory, Variant,
};
use serde_json::json;
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "mwu-lab",
    version,
    about = "Multiplicative-weights dynamics on congestion games"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one trajectory and write it as CSV or JSON.
    Simulate(SimulateArgs),
    /// Sweep learning rates on a symmetric two-strategy game and classify
    /// the long-run behavior at each rate.
    Sweep(SweepArgs),
    /// Verify monotone descent of the expected potential under the linear
    /// update across a batch of games and starts.
    VerifyLyapunov(VerifyArgs),
    /// Analyze a builtin interval map: iterates, fixed points, orbits,
    /// derivative sign structure, and chaos evidence.
    #[command(name = "analyze-1d")]
    Analyze1d(Analyze1dArgs),
    /// Regenerate the reference result bundle into a directory, checking
    /// every reported quantity along the way.
    ReproducePaper(ReproduceArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum VariantArg {
    Linear,
    Exp,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Variant {
        match v {
            VariantArg::Linear => Variant::Linear,
            VariantArg::Exp => Variant::Exponential,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MapArg {
    H,
    G,
}

#[derive(Args)]
struct SimulateArgs {
    /// Builtin game name (game1, game2) or path to a game JSON file.
    #[arg(long)]
    game: String,
    /// Update rule.
    #[arg(long, value_enum, default_value_t = VariantArg::Exp)]
    variant: VariantArg,
    /// Shared learning rate for every agent.
    #[arg(long, conflicts_with = "eps_per_agent")]
    eps: Option<f64>,
    /// Comma-separated per-agent learning rates.
    #[arg(long, value_name = "E1,E2,...")]
    eps_per_agent: Option<String>,
    /// Start: a scalar x for the symmetric profile [x, 1-x] per agent, or
    /// explicit rows "a,b;c,d". Defaults to the uniform profile.
    #[arg(long)]
    start: Option<String>,
    /// Iteration budget.
    #[arg(long, default_value_t = 10_000)]
    iters: usize,
    /// Fixed-point tolerance on the step infinity norm.
    #[arg(long, default_value_t = 1e-12)]
    fp_tol: f64,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
}

#[derive(Args)]
struct SweepArgs {
    /// Builtin game name or path to a game JSON file.
    #[arg(long)]
    game: String,
    #[arg(long, value_enum, default_value_t = VariantArg::Exp)]
    variant: VariantArg,
    /// Smallest learning rate of the grid.
    #[arg(long)]
    eps_min: f64,
    /// Largest learning rate of the grid.
    #[arg(long)]
    eps_max: f64,
    /// Number of grid points (inclusive of both ends).
    #[arg(long, default_value_t = 20)]
    grid: usize,
    /// Scalar start for the symmetric reduction.
    #[arg(long, default_value_t = 0.3)]
    start: f64,
    /// Burn-in iterations before classification.
    #[arg(long, default_value_t = 2000)]
    iters: usize,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FormatArg::Json)]
    format: FormatArg,
    /// Also write bifurcation samples (eps,x rows) to this file.
    #[arg(long)]
    bifurcation: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Builtin game name or path to a game JSON file; omit to verify a
    /// seeded batch of generated games.
    #[arg(long)]
    game: Option<String>,
    /// Number of generated games when no --game is given.
    #[arg(long, default_value_t = 20)]
    random_games: usize,
    /// Seed for game generation.
    #[arg(long, default_value_t = 0)]
    game_seed: u64,
    #[arg(long, default_value_t = 3)]
    agents: usize,
    #[arg(long, default_value_t = 4)]
    edges: usize,
    #[arg(long, default_value_t = 3)]
    max_strategies: usize,
    /// Shared learning rate; overrides the bound fraction.
    #[arg(long, conflicts_with = "eps_per_agent")]
    eps: Option<f64>,
    /// Comma-separated per-agent learning rates.
    #[arg(long, value_name = "E1,E2,...")]
    eps_per_agent: Option<String>,
    /// Per-agent fraction of the admissible rate bound, used when no
    /// explicit rate is given.
    #[arg(long, default_value_t = 0.9)]
    bound_fraction: f64,
    /// Interior starts per game.
    #[arg(long, default_value_t = 5)]
    starts: usize,
    /// Simplex margin for the starts.
    #[arg(long, default_value_t = 1e-3)]
    margin: f64,
    #[arg(long, default_value_t = 500)]
    iters: usize,
    #[arg(long, default_value_t = 1e-12)]
    fp_tol: f64,
    /// Seed for the interior starts.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file for the JSON report; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Analyze1dArgs {
    /// Which builtin interval map to analyze.
    #[arg(long, value_enum)]
    map: MapArg,
    /// Directory for the result files.
    #[arg(long)]
    out: PathBuf,
    /// Grid points for the iterate table.
    #[arg(long, default_value_t = 1001)]
    grid: usize,
}

#[derive(Args)]
struct ReproduceArgs {
    /// Directory for the reference bundle.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> Result<()> {
    init_threads()?;
    match Cli::parse().command {
        Command::Simulate(args) => simulate(args),
        Command::Sweep(args) => sweep(args),
        Command::VerifyLyapunov(args) => verify(args),
        Command::Analyze1d(args) => analyze_1d(args),
        Command::ReproducePaper(args) => reproduce(args),
    }
}

/// Sizes the global thread pool from MWU_LAB_THREADS before any parallel work.
fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("MWU_LAB_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .with_context(|| format!("MWU_LAB_THREADS must be a positive integer, got {v:?}"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("sizing the global thread pool")?;
    }
    Ok(())
}

fn load_game(spec: &str) -> Result<CongestionGame> {
    if let Some(game) = CongestionGame::builtin(spec) {
        return Ok(game);
    }
    CongestionGame::load_json_file(Path::new(spec))
        .with_context(|| format!("loading game from {spec}"))
}

fn parse_eps_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .with_context(|| format!("invalid learning rate {t:?}"))
        })
        .collect()
}

/// Explicit rates win; builtins fall back to their reference decays
/// (e^-10 for game1, e^-40 for game2); file games must be given rates.
fn resolve_rates(
    game: &CongestionGame,
    game_spec: &str,
    eps: Option<f64>,
    eps_per_agent: Option<&str>,
) -> Result<LearningRates> {
    if let Some(e) = eps {
        return Ok(LearningRates::uniform(game.n_agents(), e)?);
    }
    if let Some(list) = eps_per_agent {
        let eps = parse_eps_list(list)?;
        return Ok(LearningRates::per_agent(eps)?);
    }
    match game_spec {
        "game1" => Ok(LearningRates::from_ln_decay(game.n_agents(), -10.0)?),
        "game2" => Ok(LearningRates::from_ln_decay(game.n_agents(), -40.0)?),
        _ => bail!("provide --eps or --eps-per-agent for a game loaded from a file"),
    }
}

fn parse_start(game: &CongestionGame, start: Option<&str>) -> Result<MixedProfile> {
    let Some(s) = start else {
        return Ok(MixedProfile::uniform(game));
    };
    if s.contains(',') || s.contains(';') {
        let rows: Vec<Vec<f64>> = s
            .split(';')
            .map(|row| {
                row.split(',')
                    .map(|t| {
                        t.trim()
                            .parse::<f64>()
                            .with_context(|| format!("invalid probability {t:?}"))
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        return Ok(MixedProfile::new(game, rows)?);
    }
    let x: f64 = s.parse().with_context(|| format!("invalid start {s:?}"))?;
    Ok(MixedProfile::symmetric(game, x)?)
}

fn write_output(out: Option<&Path>, content: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, content)
            .with_context(|| format!("writing {}", path.display()))?,
        None => print!("{content}"),
    }
    Ok(())
}

fn describe_termination(traj: &Trajectory) -> String {
    match traj.termination {
        Termination::Converged => format!("converged after {} steps", traj.n_steps()),
        Termination::MaxIters => format!("iteration budget exhausted ({} steps)", traj.n_steps()),
        Termination::CycleDetected { period } => format!(
            "cycle of period {period} detected after {} steps",
            traj.n_steps()
        ),
    }
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let game = load_game(&args.game)?;
    let rates = resolve_rates(&game, &args.game, args.eps, args.eps_per_agent.as_deref())?;
    let start = parse_start(&game, args.start.as_deref())?;
    let traj = run(
        &game,
        &start,
        &rates,
        args.variant.into(),
        args.iters,
        args.fp_tol,
    )?;
    let residual = game.nash_residual(traj.final_profile());
    eprintln!(
        "{}; final nash residual {residual:.3e}",
        describe_termination(&traj)
    );
    let content = match args.format {
        FormatArg::Csv => traj.to_csv(),
        FormatArg::Json => format!("{:#}\n", serde_json::to_value(&traj)?),
    };
    write_output(args.out.as_deref(), &content)
}

fn sweep(args: SweepArgs) -> Result<()> {
    ensure!(args.grid >= 2, "--grid needs at least 2 points");
    ensure!(
        args.eps_min < args.eps_max,
        "--eps-min must be below --eps-max"
    );
    let game = load_game(&args.game)?;
    let grid: Vec<f64> = (0..args.grid)
        .map(|i| {
            args.eps_min + (args.eps_max - args.eps_min) * i as f64 / (args.grid - 1) as f64
        })
        .collect();
    let variant: Variant = args.variant.into();
    let outcomes = rate_sweep(&game, variant, &grid, args.start, args.iters)?;
    let content = match args.format {
        FormatArg::Json => format!("{:#}\n", serde_json::to_value(&outcomes)?),
        FormatArg::Csv => {
            let mut out = String::from("eps,class,period,x0\n");
            for o in &outcomes {
                let (class, period) = match o.class {
                    SweepClass::Converged => ("converged", String::new()),
                    SweepClass::Periodic { period } => ("periodic", period.to_string()),
                    SweepClass::NonClassified => ("non_classified", String::new()),
                };
                let x0 = o
                    .certificate
                    .as_ref()
                    .map(|c| c.points[0].to_string())
                    .unwrap_or_default();
                out.push_str(&format!("{},{class},{period},{x0}\n", o.eps));
            }
            out
        }
    };
    if let Some(path) = &args.bifurcation {
        let csv = bifurcation_csv(&game, variant, &grid, args.start, args.iters)?;
        fs::write(path, csv).with_context(|| format!("writing {}", path.display()))?;
    }
    write_output(args.out.as_deref(), &content)
}

fn verify(args: VerifyArgs) -> Result<()> {
    let game_source = match &args.game {
        Some(spec) => {
            if CongestionGame::builtin(spec).is_some() {
                GameSource::Builtin(spec.clone())
            } else {
                GameSource::File(PathBuf::from(spec))
            }
        }
        None => GameSource::Generated {
            seed: args.game_seed,
            n_agents: args.agents,
            n_edges: args.edges,
            max_strategies: args.max_strategies,
            count: args.random_games,
        },
    };
    let rates = if let Some(e) = args.eps {
        RateSpec::Fixed(e)
    } else if let Some(list) = &args.eps_per_agent {
        RateSpec::PerAgent(parse_eps_list(list)?)
    } else {
        RateSpec::BoundFraction(args.bound_fraction)
    };
    let config = ExperimentConfig {
        game: game_source,
        variant: Variant::Linear,
        rates,
        starts: StartSpec {
            count: args.starts,
            margin: args.margin,
        },
        max_iters: args.iters,
        fp_tol: args.fp_tol,
        seed: args.seed,
    };
    let report = verify_lyapunov(&config)?;
    eprintln!(
        "games: {}, runs: {}, steps: {}, violations: {}, max increase: {:.3e}",
        report.n_games,
        report.n_runs,
        report.total_steps,
        report.total_violations,
        report.max_increase
    );
    write_output(
        args.out.as_deref(),
        &format!("{:#}\n", serde_json::to_value(&report)?),
    )?;
    ensure!(
        report.passed,
        "expected potential rose on {} steps",
        report.total_violations
    );
    Ok(())
}

fn write_file(dir: &Path, name: &str, content: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, content).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn json_line(value: &impl serde::Serialize) -> Result<String> {
    Ok(format!("{:#}\n", serde_json::to_value(value)?))
}

fn analyze_1d(args: Analyze1dArgs) -> Result<()> {
    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let (name, map) = match args.map {
        MapArg::H => ("h", map_h()),
        MapArg::G => ("g", map_g()),
    };
    let dir = &args.out;
    write_file(
        dir,
        &format!("{name}_iterates.csv"),
        &iterates_csv(&map, args.grid, &[1, 2, 3, 10]),
    )?;
    let fixed = find_fixed_points(&map, 1)?;
    write_file(dir, &format!("{name}_fixed_points.json"), &json_line(&fixed)?)?;
    let period2 = find_fixed_points(&map, 2)?;
    write_file(dir, &format!("{name}_period2.json"), &json_line(&period2)?)?;
    let signs = json!({
        "k1": mwu_lab::derivative_sign_intervals(&map, 1),
        "k2": mwu_lab::derivative_sign_intervals(&map, 2),
    });
    write_file(dir, &format!("{name}_sign_intervals.json"), &format!("{signs:#}\n"))?;
    match args.map {
        MapArg::H => {
            let constants = HConstants::compute(&map)?;
            write_file(dir, "h_constants.json", &json_line(&constants)?)?;
        }
        MapArg::G => {
            let cert = find_period3(&map, 0.4, 0.5)?;
            write_file(dir, "g_period3.json", &json_line(&cert)?)?;
            // The descending chain anchors at the orbit's largest point.
            let anchor = cert.points.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let report = li_yorke_certificate(&map, anchor);
            write_file(dir, "g_li_yorke.json", &json_line(&report)?)?;
            let (min_gap, max_gap) =
                scrambled_pair_evidence(&map, cert.points[0], cert.points[0] + 1e-6, 10_000);
            let evidence = json!({
                "x": cert.points[0],
                "y": cert.points[0] + 1e-6,
                "horizon": 10_000,
                "min_gap": min_gap,
                "max_gap": max_gap,
            });
            write_file(dir, "g_scrambled.json", &format!("{evidence:#}\n"))?;
        }
    }
    Ok(())
}

/// One trajectory summarized for the contrast report.
fn run_summary(
    game: &CongestionGame,
    traj: &Trajectory,
) -> Result<serde_json::Value> {
    Ok(json!({
        "termination": serde_json::to_value(traj.termination)?,
        "steps": traj.n_steps(),
        "final_profile": traj.final_profile().rows(),
        "nash_residual": game.nash_residual(traj.final_profile()),
    }))
}

fn reproduce(args: ReproduceArgs) -> Result<()> {
    let dir = &args.out;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let game1 = CongestionGame::builtin_game1();
    let game2 = CongestionGame::builtin_game2();
    let rates10 = LearningRates::from_ln_decay(2, -10.0)?;
    let rates40 = LearningRates::from_ln_decay(2, -40.0)?;
    let h = map_h();
    let g = map_g();

    // Iterate tables for the two closed-form maps and their linear-rule
    // counterparts at matching rates.
    write_file(dir, "h_iterates.csv", &iterates_csv(&h, 1001, &[1, 2, 3, 10]))?;
    write_file(dir, "g_iterates.csv", &iterates_csv(&g, 1001, &[1, 2, 3, 10]))?;
    let h_linear = symmetric_reduction(&game1, &rates10, Variant::Linear)?;
    write_file(
        dir,
        "h_linear_iterates.csv",
        &iterates_csv(&h_linear, 1001, &[1, 2, 3, 10]),
    )?;
    let g_linear = symmetric_reduction(&game2, &rates40, Variant::Linear)?;
    write_file(
        dir,
        "g_linear_iterates.csv",
        &iterates_csv(&g_linear, 1001, &[1, 2, 3, 10]),
    )?;

    // Orbit structure of the evenly loaded map H.
    let h2 = find_fixed_points(&h, 2)?;
    ensure!(
        h2.len() == 5,
        "check failed: expected 5 roots of H^2, found {}",
        h2.len()
    );
    write_file(dir, "h_fixed_points.json", &json_line(&h2)?)?;
    let orbit: Vec<_> = h2
        .iter()
        .filter(|c| c.kind == (CertificateKind::Periodic { period: 2 }))
        .collect();
    ensure!(
        orbit.len() == 2,
        "check failed: expected 2 period-2 roots of H, found {}",
        orbit.len()
    );
    let rho1 = orbit[0].points[0].min(orbit[1].points[0]);
    let rho2 = orbit[0].points[0].max(orbit[1].points[0]);
    ensure!(
        (h.eval(rho1) - rho2).abs() <= 1e-10,
        "check failed: H(rho1) != rho2"
    );
    ensure!(
        (rho2 - (1.0 - rho1)).abs() <= 1e-10,
        "check failed: rho2 != 1 - rho1"
    );
    ensure!(
        orbit.iter().all(|c| c.residual <= 1e-10),
        "check failed: period-2 orbit residual above 1e-10"
    );
    write_file(
        dir,
        "h_period2_orbit.json",
        &format!("{:#}\n", json!({ "rho1": rho1, "rho2": rho2, "certificates": orbit })),
    )?;
    let constants = HConstants::compute(&h)?;
    write_file(dir, "h_constants.json", &json_line(&constants)?)?;

    // Orbit structure and chaos evidence for the unevenly loaded map G.
    let g1 = find_fixed_points(&g, 1)?;
    let expected = [0.0, 0.75, 1.0];
    ensure!(
        g1.len() == 3 && g1.iter().zip(expected).all(|(c, e)| (c.points[0] - e).abs() <= 1e-10),
        "check failed: fixed points of G should be 0, 0.75, 1"
    );
    write_file(dir, "g_fixed_points.json", &json_line(&g1)?)?;
    let p3 = find_period3(&g, 0.4, 0.5)?;
    ensure!(
        p3.residual <= 1e-10,
        "check failed: period-3 residual {} above 1e-10",
        p3.residual
    );
    ensure!(
        p3.separation.is_some_and(|s| s > 1e-3),
        "check failed: period-3 orbit not separated"
    );
    write_file(dir, "g_period3.json", &json_line(&p3)?)?;
    let anchor = p3.points.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ly = li_yorke_certificate(&g, anchor);
    ensure!(ly.holds, "check failed: chain ordering does not hold on the period-3 orbit");
    write_file(dir, "g_li_yorke.json", &json_line(&ly)?)?;
    let (min_gap, max_gap) = scrambled_pair_evidence(&g, p3.points[0], p3.points[0] + 1e-6, 10_000);
    ensure!(
        max_gap > 0.1,
        "check failed: nearby starts never separated (max gap {max_gap})"
    );
    write_file(
        dir,
        "g_scrambled.json",
        &format!(
            "{:#}\n",
            json!({
                "x": p3.points[0],
                "y": p3.points[0] + 1e-6,
                "horizon": 10_000,
                "min_gap": min_gap,
                "max_gap": max_gap,
            })
        ),
    )?;

    // Potential descent for the linear rule on both builtins.
    for (name, builtin) in [("game1", "game1"), ("game2", "game2")] {
        let config = ExperimentConfig {
            game: GameSource::Builtin(builtin.into()),
            variant: Variant::Linear,
            rates: RateSpec::BoundFraction(0.9),
            starts: StartSpec {
                count: 5,
                margin: 1e-3,
            },
            max_iters: 1000,
            fp_tol: 1e-12,
            seed: 1,
        };
        let report = verify_lyapunov(&config)?;
        ensure!(
            report.passed,
            "check failed: potential rose under the linear rule on {name}"
        );
        write_file(dir, &format!("lyapunov_{name}.json"), &json_line(&report)?)?;
    }

    // Same rate, different rule: the exponential update cycles on game1
    // while the linear update converges to the even split.
    let start = MixedProfile::symmetric(&game1, 0.3)?;
    let exp_traj = run(&game1, &start, &rates10, Variant::Exponential, 5000, 1e-12)?;
    ensure!(
        matches!(exp_traj.termination, Termination::CycleDetected { period: 2 }),
        "check failed: exponential update on game1 should cycle with period 2, got {:?}",
        exp_traj.termination
    );
    let lin_traj = run(&game1, &start, &rates10, Variant::Linear, 5000, 1e-12)?;
    ensure!(
        matches!(lin_traj.termination, Termination::Converged),
        "check failed: linear update on game1 should converge, got {:?}",
        lin_traj.termination
    );
    let final_rows = lin_traj.final_profile().rows();
    ensure!(
        final_rows
            .iter()
            .all(|row| (row[0] - 0.5).abs() <= 1e-8),
        "check failed: linear update on game1 should reach the even split"
    );
    let contrast = json!({
        "eps": rates10.eps_all(),
        "start": start.rows(),
        "exponential": run_summary(&game1, &exp_traj)?,
        "linear": run_summary(&game1, &lin_traj)?,
    });
    write_file(dir, "contrast_game1.json", &format!("{contrast:#}\n"))?;

    println!("all checks passed");
    Ok(())
}
