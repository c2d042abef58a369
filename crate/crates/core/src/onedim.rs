//! Interval-map analysis: fixed points, periodic orbits, derivative sign
//! structure, Li-Yorke certificates, and the symmetric two-agent reduction.
//!
//! Root-finding is grid scan plus bisection throughout: robust against the
//! steep slopes these maps develop (exponents up to 28), and free of
//! derivatives of iterated maps.

use crate::dynamics::{step_exponential, step_linear, LearningRates, Variant};
use crate::game::{CongestionGame, MixedProfile};
use serde::Serialize;
use thiserror::Error;

/// Grid for the into-the-domain invariance check at construction.
const INVARIANCE_GRID: usize = 10_000;
/// Grid for fixed-point scans.
const ROOT_GRID: usize = 100_000;
/// Grid for derivative sign scans.
const DERIV_GRID: usize = 10_000;
/// Roots closer than this are considered the same point.
const DEDUP_TOL: f64 = 1e-9;
/// A root of the k-fold map is classified at the smallest divisor whose
/// residual falls below this.
const PERIOD_TOL: f64 = 1e-9;
/// Minimum pairwise separation for a genuine periodic orbit.
const ORBIT_SEPARATION: f64 = 1e-6;
/// Finite-difference step for maps without a closed-form derivative.
const FD_STEP: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum MapError {
    #[error("map leaves its domain: f({x}) = {fx}")]
    NotInvariant { x: f64, fx: f64 },
    #[error("degenerate map: |f^{k}(x) - x| < 1e-12 on {fraction:.0}% of the grid")]
    DegenerateMap { k: usize, fraction: f64 },
    #[error("no sign change of f^k(x) - x on [{lo}, {hi}] (values {g_lo} and {g_hi})")]
    NoSignChange {
        lo: f64,
        hi: f64,
        g_lo: f64,
        g_hi: f64,
    },
    #[error("orbit collapses onto a shorter cycle: {points:?}")]
    CollapsedOrbit { points: Vec<f64> },
    #[error("symmetric reduction needs {reason}")]
    AsymmetricGame { reason: String },
    #[error("rates not admissible for the requested variant: {reason}")]
    InadmissibleRates { reason: String },
    #[error("unexpected map structure: {detail}")]
    Unexpected { detail: String },
}

type MapFn = Box<dyn Fn(f64) -> f64 + Send + Sync>;

/// A self-map of an interval `[lo, hi]`, with an optional closed-form
/// derivative (central finite differences otherwise). Invariance of the
/// domain is checked on a grid at construction.
pub struct IntervalMap {
    lo: f64,
    hi: f64,
    f: MapFn,
    deriv: Option<MapFn>,
}

impl std::fmt::Debug for IntervalMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("IntervalMap")
            .field("lo", &self.lo)
            .field("hi", &self.hi)
            .field("closed_form_derivative", &self.deriv.is_some())
            .finish_non_exhaustive()
    }
}

impl IntervalMap {
    pub fn new(lo: f64, hi: f64, f: MapFn) -> Result<Self, MapError> {
        assert!(lo < hi, "empty domain");
        for i in 0..=INVARIANCE_GRID {
            let x = lo + (hi - lo) * i as f64 / INVARIANCE_GRID as f64;
            let fx = f(x);
            if !(fx >= lo - 1e-12 && fx <= hi + 1e-12) {
                return Err(MapError::NotInvariant { x, fx });
            }
        }
        Ok(IntervalMap {
            lo,
            hi,
            f,
            deriv: None,
        })
    }

    pub fn with_derivative(mut self, deriv: MapFn) -> Self {
        self.deriv = Some(deriv);
        self
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn eval(&self, x: f64) -> f64 {
        assert!(
            x >= self.lo - 1e-9 && x <= self.hi + 1e-9,
            "x = {x} outside the map domain [{}, {}]",
            self.lo,
            self.hi
        );
        (self.f)(x.clamp(self.lo, self.hi))
    }

    /// First derivative: closed form when available, otherwise a central
    /// finite difference (shifted one-sided at the domain boundary).
    pub fn derivative(&self, x: f64) -> f64 {
        if let Some(d) = &self.deriv {
            return d(x.clamp(self.lo, self.hi));
        }
        let a = (x - FD_STEP).max(self.lo);
        let b = (x + FD_STEP).min(self.hi);
        (self.eval(b) - self.eval(a)) / (b - a)
    }
}

/// `f^k(x)`; `k = 0` returns `x`.
pub fn iterate(map: &IntervalMap, x: f64, k: usize) -> f64 {
    let mut v = x;
    for _ in 0..k {
        v = map.eval(v);
    }
    v
}

fn logistic_ratio(la: f64, lb: f64) -> f64 {
    // a/(a+b) for a = e^la, b = e^lb, shifted by the max exponent.
    let m = la.max(lb);
    let na = (la - m).exp();
    na / (na + (lb - m).exp())
}

/// The symmetric exponential-update map of the evenly loaded two-edge game
/// (both edges costing `l/2`) at decay `e^-10`:
/// `H(x) = x e^{-5(x+1)} / (x e^{-5(x+1)} + (1-x) e^{-5(2-x)})`.
pub fn map_h() -> IntervalMap {
    let f: MapFn = Box::new(|x: f64| {
        logistic_ratio(x.ln() - 5.0 * (x + 1.0), (1.0 - x).ln() - 5.0 * (2.0 - x))
    });
    let deriv: MapFn = Box::new(|x: f64| {
        // d/dx of the ratio above; the numerator's quadratic 1 - 10x + 10x^2
        // carries the sign structure.
        let num = (5.0 + 10.0 * x).exp() * (1.0 - 10.0 * x + 10.0 * x * x);
        let den = (10.0 * x).exp() * (x - 1.0) - 5.0f64.exp() * x;
        num / (den * den)
    });
    IntervalMap::new(0.0, 1.0, f)
        .expect("H maps [0,1] into itself")
        .with_derivative(deriv)
}

/// The symmetric exponential-update map of the unevenly loaded two-edge game
/// (costs `l/4` and `1.4 l/4`) at decay `e^-40`:
/// `G(x) = x e^{-10(x+1)} / (x e^{-10(x+1)} + (1-x) e^{-14(2-x)})`.
pub fn map_g() -> IntervalMap {
    let f: MapFn = Box::new(|x: f64| {
        logistic_ratio(
            x.ln() - 10.0 * (x + 1.0),
            (1.0 - x).ln() - 14.0 * (2.0 - x),
        )
    });
    IntervalMap::new(0.0, 1.0, f).expect("G maps [0,1] into itself")
}

/// What a certificate certifies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateKind {
    Fixed,
    Periodic { period: usize },
}

/// A numerically certified fixed point or periodic orbit.
#[derive(Debug, Clone, Serialize)]
pub struct OrbitCertificate {
    pub kind: CertificateKind,
    /// The orbit: the root followed by its forward images (one point for a
    /// fixed point, `period` points otherwise).
    pub points: Vec<f64>,
    /// `max over the orbit of |f^k(z) - z|` for the scanned `k`.
    pub residual: f64,
    /// Minimum pairwise distance among orbit points; `None` for fixed points.
    pub separation: Option<f64>,
    /// Bracketing interval handed to the bisection.
    pub bracket: (f64, f64),
}

impl OrbitCertificate {
    /// True when the residual and (for orbits) the separation meet the
    /// certification thresholds.
    pub fn is_certified(&self) -> bool {
        self.residual <= 1e-10
            && match self.kind {
                CertificateKind::Fixed => true,
                CertificateKind::Periodic { .. } => {
                    self.separation.is_some_and(|s| s > ORBIT_SEPARATION)
                }
            }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("certificate serializes")
    }
}

/// Bisection on a bracketed sign change, to float resolution.
pub(crate) fn bisect_on(g: &dyn Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    bisect(g, lo, hi)
}

fn bisect(g: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut g_lo = g(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let g_mid = g(mid);
        if g_mid == 0.0 {
            return mid;
        }
        if (g_mid > 0.0) == (g_lo > 0.0) {
            lo = mid;
            g_lo = g_mid;
        } else {
            hi = mid;
        }
    }
    if g(lo).abs() <= g(hi).abs() {
        lo
    } else {
        hi
    }
}

/// All fixed points of `f^k` on the domain: grid scan (10^5 cells) for sign
/// changes of `f^k(x) - x`, bisection refinement, dedup within 1e-9, and
/// true-period classification by divisor residuals. Roots are reported in
/// ascending order. Fails with `DegenerateMap` when more than half the grid
/// already sits on the diagonal.
pub fn find_fixed_points(map: &IntervalMap, k: usize) -> Result<Vec<OrbitCertificate>, MapError> {
    assert!(k >= 1, "k must be at least 1");
    let g = |x: f64| iterate(map, x, k) - x;
    let n = ROOT_GRID;
    let xs: Vec<f64> = (0..=n)
        .map(|i| map.lo + (map.hi - map.lo) * i as f64 / n as f64)
        .collect();
    let gs: Vec<f64> = xs.iter().map(|&x| g(x)).collect();
    let degenerate = gs.iter().filter(|v| v.abs() < 1e-12).count();
    if degenerate * 2 > n + 1 {
        return Err(MapError::DegenerateMap {
            k,
            fraction: 100.0 * degenerate as f64 / (n + 1) as f64,
        });
    }
    let mut roots: Vec<(f64, (f64, f64))> = Vec::new();
    for i in 0..=n {
        if gs[i] == 0.0 {
            roots.push((xs[i], (xs[i], xs[i])));
        }
        if i < n && gs[i] != 0.0 && gs[i + 1] != 0.0 && (gs[i] > 0.0) != (gs[i + 1] > 0.0) {
            let root = bisect(&g, xs[i], xs[i + 1]);
            roots.push((root, (xs[i], xs[i + 1])));
        }
    }
    roots.sort_by(|a, b| a.0.total_cmp(&b.0));
    roots.dedup_by(|a, b| (a.0 - b.0).abs() < DEDUP_TOL);
    Ok(roots
        .into_iter()
        .map(|(root, bracket)| certificate_for_root(map, root, k, bracket))
        .collect())
}

/// Builds the certificate for a refined root of `f^k`: classifies the true
/// period by divisor residuals, records the orbit, the worst residual under
/// `f^k` along it, and (for genuine orbits) the minimum pairwise separation.
pub(crate) fn certificate_for_root(
    map: &IntervalMap,
    root: f64,
    k: usize,
    bracket: (f64, f64),
) -> OrbitCertificate {
    let mut true_period = k;
    for d in 1..k {
        if k % d == 0 && (iterate(map, root, d) - root).abs() < PERIOD_TOL {
            true_period = d;
            break;
        }
    }
    let mut points = Vec::with_capacity(true_period);
    let mut z = root;
    for _ in 0..true_period {
        points.push(z);
        z = map.eval(z);
    }
    let residual = points
        .iter()
        .map(|&p| (iterate(map, p, k) - p).abs())
        .fold(0.0, f64::max);
    let separation = (true_period >= 2).then(|| {
        let mut sep = f64::INFINITY;
        for i in 0..points.len() {
            for j in i + 1..points.len() {
                sep = sep.min((points[i] - points[j]).abs());
            }
        }
        sep
    });
    OrbitCertificate {
        kind: if true_period == 1 {
            CertificateKind::Fixed
        } else {
            CertificateKind::Periodic {
                period: true_period,
            }
        },
        points,
        residual,
        separation,
        bracket,
    }
}

/// A maximal interval on which the derivative of `f^k` keeps one sign.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SignInterval {
    pub lo: f64,
    pub hi: f64,
    /// `1` for increasing, `-1` for decreasing.
    pub sign: i8,
}

/// Partitions the domain by the sign of `(f^k)'`, computed via the chain
/// rule over the orbit; sign-change points are refined by bisection.
pub fn derivative_sign_intervals(map: &IntervalMap, k: usize) -> Vec<SignInterval> {
    assert!(k >= 1, "k must be at least 1");
    let d = |x: f64| {
        let mut v = x;
        let mut prod = 1.0;
        for _ in 0..k {
            prod *= map.derivative(v);
            v = map.eval(v);
        }
        prod
    };
    let n = DERIV_GRID;
    let xs: Vec<f64> = (0..=n)
        .map(|i| map.lo + (map.hi - map.lo) * i as f64 / n as f64)
        .collect();
    let ds: Vec<f64> = xs.iter().map(|&x| d(x)).collect();
    let sign_of = |v: f64| -> i8 {
        if v > 0.0 {
            1
        } else if v < 0.0 {
            -1
        } else {
            0
        }
    };
    let mut intervals: Vec<SignInterval> = Vec::new();
    let mut current_sign: i8 = 0;
    let mut start = map.lo;
    let mut last_signed_x = map.lo;
    for i in 0..=n {
        let s = sign_of(ds[i]);
        if s == 0 {
            continue;
        }
        if current_sign == 0 {
            current_sign = s;
        } else if s != current_sign {
            let breakpoint = bisect(&d, last_signed_x, xs[i]);
            intervals.push(SignInterval {
                lo: start,
                hi: breakpoint,
                sign: current_sign,
            });
            start = breakpoint;
            current_sign = s;
        }
        last_signed_x = xs[i];
    }
    intervals.push(SignInterval {
        lo: start,
        hi: map.hi,
        sign: if current_sign == 0 { 1 } else { current_sign },
    });
    intervals
}

/// Bisects `f^3(x) - x` on a bracketing interval and certifies a genuine
/// period-3 orbit: the three points must be pairwise separated (which also
/// excludes fixed points of `f` and `f^2`).
pub fn find_period3(map: &IntervalMap, lo: f64, hi: f64) -> Result<OrbitCertificate, MapError> {
    let g = |x: f64| iterate(map, x, 3) - x;
    let g_lo = g(lo);
    let g_hi = g(hi);
    if g_lo == 0.0 || g_hi == 0.0 || (g_lo > 0.0) == (g_hi > 0.0) {
        return Err(MapError::NoSignChange { lo, hi, g_lo, g_hi });
    }
    let root = bisect(&g, lo, hi);
    let points = vec![root, map.eval(root), iterate(map, root, 2)];
    let mut separation = f64::INFINITY;
    for i in 0..3 {
        for j in i + 1..3 {
            separation = separation.min((points[i] - points[j]).abs());
        }
    }
    if separation <= ORBIT_SEPARATION {
        return Err(MapError::CollapsedOrbit { points });
    }
    let residual = points
        .iter()
        .map(|&p| (iterate(map, p, 3) - p).abs())
        .fold(0.0, f64::max);
    Ok(OrbitCertificate {
        kind: CertificateKind::Periodic { period: 3 },
        points,
        residual,
        separation: Some(separation),
        bracket: (lo, hi),
    })
}

/// Which strict ordering the chain `a, f(a), f^2(a), f^3(a)` satisfies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainOrdering {
    Ascending,
    Descending,
}

/// Checks the interval-map chaos hypothesis at `a`: with `b = f(a)`,
/// `c = f^2(a)`, `d = f^3(a)`, either `d <= a < b < c` or `d >= a > b > c`.
#[derive(Debug, Clone, Serialize)]
pub struct LiYorkeReport {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub holds: bool,
    pub ordering: Option<ChainOrdering>,
}

impl LiYorkeReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

pub fn li_yorke_certificate(map: &IntervalMap, a: f64) -> LiYorkeReport {
    let b = map.eval(a);
    let c = map.eval(b);
    let d = map.eval(c);
    let ordering = if d <= a && a < b && b < c {
        Some(ChainOrdering::Ascending)
    } else if d >= a && a > b && b > c {
        Some(ChainOrdering::Descending)
    } else {
        None
    };
    LiYorkeReport {
        a,
        b,
        c,
        d,
        holds: ordering.is_some(),
        ordering,
    }
}

/// Finite-horizon evidence for a scrambled pair: the min and max of
/// `|f^n(x) - f^n(y)|` over `n = 1..=horizon`. Evidence only; no claim about
/// membership in a scrambled set.
pub fn scrambled_pair_evidence(
    map: &IntervalMap,
    x: f64,
    y: f64,
    horizon: usize,
) -> (f64, f64) {
    assert!(horizon >= 1, "horizon must be at least 1");
    let mut u = x;
    let mut v = y;
    let mut min_gap = f64::INFINITY;
    let mut max_gap: f64 = 0.0;
    for _ in 0..horizon {
        u = map.eval(u);
        v = map.eval(v);
        let gap = (u - v).abs();
        min_gap = min_gap.min(gap);
        max_gap = max_gap.max(gap);
    }
    (min_gap, max_gap)
}

/// Reduces a symmetric two-agent, two-strategy game to the scalar map
/// `x -> (updated probability of the first strategy)` along the diagonal
/// `p_1 = p_2 = (x, 1-x)`. The diagonal is invariant because both agents see
/// identical costs and apply identical rates.
pub fn symmetric_reduction(
    game: &CongestionGame,
    rates: &LearningRates,
    variant: Variant,
) -> Result<IntervalMap, MapError> {
    if game.n_agents() != 2 {
        return Err(MapError::AsymmetricGame {
            reason: format!("exactly 2 agents (game has {})", game.n_agents()),
        });
    }
    if game.strategies()[0] != game.strategies()[1] {
        return Err(MapError::AsymmetricGame {
            reason: "identical strategy sets for both agents".into(),
        });
    }
    if game.n_strategies(0) != 2 {
        return Err(MapError::AsymmetricGame {
            reason: format!(
                "exactly 2 strategies per agent (game has {})",
                game.n_strategies(0)
            ),
        });
    }
    if rates.n_agents() != 2
        || rates.eps(0) != rates.eps(1)
        || rates.ln_decay(0) != rates.ln_decay(1)
    {
        return Err(MapError::AsymmetricGame {
            reason: "identical learning rates for both agents".into(),
        });
    }
    match variant {
        Variant::Linear => {
            if !rates.linear_admissible(game) {
                return Err(MapError::InadmissibleRates {
                    reason: format!(
                        "eps {} exceeds the linear bound {}",
                        rates.eps(0),
                        game.linear_rate_bound()
                    ),
                });
            }
        }
        Variant::Exponential => {
            if !rates.exponential_admissible() {
                return Err(MapError::InadmissibleRates {
                    reason: "exponential rule needs 0 < eps < 1".into(),
                });
            }
        }
    }
    let game = game.clone();
    let rates = rates.clone();
    let f: MapFn = Box::new(move |x: f64| {
        let p = MixedProfile::symmetric(&game, x).expect("two-strategy game");
        let next = match variant {
            Variant::Linear => step_linear(&game, &p, &rates),
            Variant::Exponential => step_exponential(&game, &p, &rates),
        }
        .expect("rates validated at construction");
        next.entry(0, 0)
    });
    IntervalMap::new(0.0, 1.0, f)
}

/// Landmark points of the evenly loaded map `H`: the interior derivative
/// roots `x0 < x1`, their preimages `y0 < x0` and `y1 > x1` (where the
/// two-fold map's derivative changes sign), and the attracting period-2
/// orbit `rho1, rho2 = 1 - rho1`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct HConstants {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
    pub rho1: f64,
    pub rho2: f64,
}

impl HConstants {
    /// Derives every landmark numerically from the map itself; `x0`, `x1`
    /// also have the closed forms `(5 -+ sqrt(15))/10`.
    pub fn compute(h: &IntervalMap) -> Result<Self, MapError> {
        let x0 = (5.0 - 15.0f64.sqrt()) / 10.0;
        let x1 = (5.0 + 15.0f64.sqrt()) / 10.0;
        let y0 = bisect(&|y: f64| h.eval(y) - x0, 0.0, x0);
        let y1 = bisect(&|y: f64| h.eval(y) - x1, x1, 1.0);
        let period2: Vec<f64> = find_fixed_points(h, 2)?
            .into_iter()
            .filter(|c| c.kind == CertificateKind::Periodic { period: 2 })
            .map(|c| c.points[0])
            .collect();
        if period2.len() != 2 {
            return Err(MapError::Unexpected {
                detail: format!("expected 2 period-2 roots of H, found {}", period2.len()),
            });
        }
        let rho1 = period2[0].min(period2[1]);
        let rho2 = period2[0].max(period2[1]);
        let ordered = 0.0 < y0 && y0 < x0 && x0 < rho1 && rho1 < 0.5 && 0.5 < rho2 && rho2 < x1 && x1 < y1 && y1 < 1.0;
        if !ordered {
            return Err(MapError::Unexpected {
                detail: "H landmarks out of order".into(),
            });
        }
        Ok(HConstants {
            x0,
            x1,
            y0,
            y1,
            rho1,
            rho2,
        })
    }
}

/// CSV table of iterated-map values on a uniform grid: column `x` followed by
/// one `f{k}` column per requested power.
pub fn iterates_csv(map: &IntervalMap, n_points: usize, powers: &[usize]) -> String {
    assert!(n_points >= 2, "need at least two grid points");
    let mut out = String::from("x");
    for k in powers {
        out.push_str(&format!(",f{k}"));
    }
    out.push('\n');
    let max_power = powers.iter().copied().max().unwrap_or(0);
    for i in 0..n_points {
        let x = map.lo + (map.hi - map.lo) * i as f64 / (n_points - 1) as f64;
        out.push_str(&x.to_string());
        let mut v = x;
        for k in 1..=max_power {
            v = map.eval(v);
            if powers.contains(&k) {
                out.push_str(&format!(",{v}"));
            }
        }
        out.push('\n');
    }
    out
}
