//! Congestion-game dynamics laboratory.
//!
//! The crate models atomic congestion games with tabulated edge costs and
//! studies two multiplicative-weights update rules as exact discrete-time
//! dynamical systems:
//!
//! * `game`: game representation, loads, potentials, exact expected costs.
//! * `dynamics`: the linear and exponential update steppers, trajectories,
//!   convergence and cycle detection.
//! * `baum_eagon`: sparse polynomials over products of simplices, the
//!   Baum-Eagon ascent step, and the certified ascent polynomial whose
//!   Baum-Eagon map reproduces the linear update.
//! * `onedim`: interval-map toolkit (fixed points, periodic orbits,
//!   derivative sign analysis, Li-Yorke certificates) plus the symmetric
//!   two-agent reduction to one dimension.
//! * `analysis`: random-game campaigns, Lyapunov verification, and
//!   learning-rate sweeps.

pub mod analysis;
pub mod baum_eagon;
pub mod dynamics;
pub mod game;
pub mod onedim;

pub use analysis::{
    audit_trajectory, bifurcation_csv, interior_starts, random_game, rate_sweep, verify_lyapunov,
    AnalysisError, ExperimentConfig, GameSource, LyapunovReport, RateSpec, StartSpec, SweepClass,
    SweepOutcome, TrajectoryAudit,
};
pub use baum_eagon::{
    build_q, build_q_with_cap, certified_rate_bounds, PolyError, SimplexPolynomial,
};
pub use dynamics::{
    is_fixed_point, run, step_exponential, step_linear, DynamicsError, LearningRates, Termination,
    Trajectory, TrajectoryPoint, Variant,
};
pub use game::{
    CongestionGame, GameError, LoadDistribution, MixedProfile, PureProfile,
};
pub use onedim::{
    derivative_sign_intervals, find_fixed_points, find_period3, iterate, iterates_csv,
    li_yorke_certificate, map_g, map_h, scrambled_pair_evidence, symmetric_reduction,
    CertificateKind, ChainOrdering, HConstants, IntervalMap, LiYorkeReport, MapError,
    OrbitCertificate, SignInterval,
};
