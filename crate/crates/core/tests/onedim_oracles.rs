//! Independent oracles for the interval-map toolkit: the closed-form maps
//! are recomputed from their raw formulas (no log-space trick), landmark
//! orbits are re-derived with a test-local bisection, and the frozen
//! reference values are pinned.

use mwu_lab::{
    derivative_sign_intervals, find_fixed_points, find_period3, iterate, li_yorke_certificate,
    map_g, map_h, scrambled_pair_evidence, CertificateKind, HConstants,
};

/// The attracting period-2 point of H below 1/2, frozen from an independent
/// high-precision bisection.
const RHO1: f64 = 0.14479410825606487;
/// The period-3 root of G inside (0.4, 0.5), frozen the same way.
const G_PERIOD3_ROOT: f64 = 0.42158751523413274;

/// Direct formula for H, no exponent shifting. Safe here because the
/// exponents stay above e^-15.
fn naive_h(x: f64) -> f64 {
    let a = x * (-5.0 * (x + 1.0)).exp();
    let b = (1.0 - x) * (-5.0 * (2.0 - x)).exp();
    a / (a + b)
}

/// Direct formula for G (exponents above e^-28).
fn naive_g(x: f64) -> f64 {
    let a = x * (-10.0 * (x + 1.0)).exp();
    let b = (1.0 - x) * (-14.0 * (2.0 - x)).exp();
    a / (a + b)
}

fn bisect_local(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let f_lo = f(lo);
    assert!(f_lo * f(hi) < 0.0, "oracle bracket must straddle a root");
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if (f(mid) > 0.0) == (f_lo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn closed_form_maps_match_their_raw_formulas() {
    let h = map_h();
    let g = map_g();
    for i in 0..=1000 {
        let x = i as f64 / 1000.0;
        assert!((h.eval(x) - naive_h(x)).abs() <= 1e-12, "H at {x}");
        assert!((g.eval(x) - naive_g(x)).abs() <= 1e-12, "G at {x}");
    }
}

#[test]
fn independent_bisection_recovers_the_period_2_point() {
    // Oracle: bisect naive_h(naive_h(y)) - y on a bracket that contains rho1
    // and none of the fixed points.
    let oracle = bisect_local(|y| naive_h(naive_h(y)) - y, 0.1, 0.2);
    assert!(
        (oracle - RHO1).abs() <= 1e-10,
        "oracle {oracle} vs frozen {RHO1}"
    );
    let h = map_h();
    let certs = find_fixed_points(&h, 2).unwrap();
    let found = certs
        .iter()
        .find(|c| c.kind == (CertificateKind::Periodic { period: 2 }) && c.points[0] < 0.5)
        .expect("a period-2 root below 1/2");
    assert!((found.points[0] - oracle).abs() <= 1e-10);
    assert!((found.points[0] - RHO1).abs() <= 1e-10);
}

#[test]
fn h_two_fold_map_has_exactly_five_roots() {
    let h = map_h();
    let certs = find_fixed_points(&h, 2).unwrap();
    assert_eq!(certs.len(), 5);
    let fixed: Vec<f64> = certs
        .iter()
        .filter(|c| c.kind == CertificateKind::Fixed)
        .map(|c| c.points[0])
        .collect();
    let expected_fixed = [0.0, 0.5, 1.0];
    assert_eq!(fixed.len(), 3);
    for (got, want) in fixed.iter().zip(expected_fixed) {
        assert!((got - want).abs() <= 1e-10);
    }
    let orbit: Vec<&_> = certs
        .iter()
        .filter(|c| c.kind == (CertificateKind::Periodic { period: 2 }))
        .collect();
    assert_eq!(orbit.len(), 2);
    let rho1 = orbit[0].points[0];
    let rho2 = orbit[1].points[0];
    assert!((rho2 - (1.0 - rho1)).abs() <= 1e-10, "orbit is reflection-symmetric");
    assert!((h.eval(rho1) - rho2).abs() <= 1e-10, "the two roots map to each other");
    for c in &orbit {
        assert!(c.residual <= 1e-10);
        assert!(c.is_certified());
    }
}

#[test]
fn h_landmarks_satisfy_their_defining_relations() {
    let h = map_h();
    let c = HConstants::compute(&h).unwrap();
    let sqrt15 = 15.0f64.sqrt();
    assert!((c.x0 - (5.0 - sqrt15) / 10.0).abs() < 1e-15);
    assert!((c.x1 - (5.0 + sqrt15) / 10.0).abs() < 1e-15);
    // Interior derivative roots.
    assert!(h.derivative(c.x0).abs() <= 1e-8);
    assert!(h.derivative(c.x1).abs() <= 1e-8);
    // Reported peak and trough values.
    assert!((h.eval(c.x0) - 0.8593).abs() <= 1e-4);
    assert!((h.eval(c.x1) - 0.1406).abs() <= 1e-4);
    // y0 and y1 are the preimages of the derivative roots.
    assert!((h.eval(c.y0) - c.x0).abs() <= 1e-10);
    assert!((h.eval(c.y1) - c.x1).abs() <= 1e-10);
    // Full ordering along the interval.
    assert!(0.0 < c.y0 && c.y0 < c.x0 && c.x0 < c.rho1 && c.rho1 < 0.25);
    assert!(0.75 < c.rho2 && c.rho2 < c.x1 && c.x1 < c.y1 && c.y1 < 1.0);
    assert!((c.rho1 - RHO1).abs() <= 1e-10);
}

#[test]
fn h_derivative_sign_breakpoints_match_the_landmarks() {
    let h = map_h();
    let c = HConstants::compute(&h).unwrap();
    let k1 = derivative_sign_intervals(&h, 1);
    assert_eq!(
        k1.iter().map(|i| i.sign).collect::<Vec<_>>(),
        vec![1, -1, 1]
    );
    assert!((k1[0].hi - c.x0).abs() <= 1e-8);
    assert!((k1[1].hi - c.x1).abs() <= 1e-8);

    let k2 = derivative_sign_intervals(&h, 2);
    assert_eq!(
        k2.iter().map(|i| i.sign).collect::<Vec<_>>(),
        vec![1, -1, 1, -1, 1]
    );
    let breakpoints: Vec<f64> = k2.iter().take(4).map(|i| i.hi).collect();
    let expected = [c.y0, c.x0, c.x1, c.y1];
    for (got, want) in breakpoints.iter().zip(expected) {
        assert!((got - want).abs() <= 1e-8, "{got} vs {want}");
    }
}

#[test]
fn g_period3_matches_the_frozen_root() {
    let g = map_g();
    let cert = find_period3(&g, 0.4, 0.5).unwrap();
    assert!(
        (cert.points[0] - G_PERIOD3_ROOT).abs() <= 1e-9,
        "root {} vs frozen {G_PERIOD3_ROOT}",
        cert.points[0]
    );
    assert!(cert.residual <= 1e-10);
    assert!(cert.separation.unwrap() > 1e-3);
    assert_eq!(cert.kind, CertificateKind::Periodic { period: 3 });
    // Oracle: the same root from the naive formula.
    let oracle = bisect_local(
        |x| naive_g(naive_g(naive_g(x))) - x,
        0.4,
        0.5,
    );
    assert!((cert.points[0] - oracle).abs() <= 1e-9);
}

#[test]
fn chain_ordering_holds_at_the_orbit_maximum_and_fails_at_0_4() {
    let g = map_g();
    let cert = find_period3(&g, 0.4, 0.5).unwrap();
    // The orbit visits smallest -> largest -> middle, so the strictly
    // descending chain starts at the largest point.
    let anchor = cert.points.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let at_root = li_yorke_certificate(&g, anchor);
    assert!(at_root.holds);
    assert!(at_root.a > at_root.b && at_root.b > at_root.c);
    // d returns (numerically) to a while b and c descend monotonically.
    assert!((at_root.d - at_root.a).abs() <= 1e-9);

    let at_04 = li_yorke_certificate(&g, 0.4);
    assert!((at_04.b - g.eval(0.4)).abs() < 1e-15);
    assert!((at_04.c - iterate(&g, 0.4, 2)).abs() < 1e-15);
    assert!((at_04.d - iterate(&g, 0.4, 3)).abs() < 1e-15);
    assert!((at_04.d - at_04.a - (-0.158)).abs() <= 2e-3);
}

#[test]
fn genuine_orbits_exist_for_every_period_up_to_six() {
    let g = map_g();
    for k in 1..=6usize {
        let certs = find_fixed_points(&g, k).unwrap();
        let genuine: Vec<&_> = certs
            .iter()
            .filter(|c| match c.kind {
                CertificateKind::Fixed => k == 1,
                CertificateKind::Periodic { period } => period == k,
            })
            .collect();
        assert!(!genuine.is_empty(), "no genuine period-{k} orbit");
        assert!(
            genuine.iter().any(|c| c.is_certified()),
            "no certified period-{k} orbit"
        );
    }
}

#[test]
fn nearby_starts_separate_macroscopically() {
    let g = map_g();
    let cert = find_period3(&g, 0.4, 0.5).unwrap();
    let x = cert.points[0];
    let (min_gap, max_gap) = scrambled_pair_evidence(&g, x, x + 1e-6, 10_000);
    assert!(max_gap > 0.1, "max gap {max_gap}");
    assert!(min_gap < max_gap);
    let (zero_min, zero_max) = scrambled_pair_evidence(&g, 0.3, 0.3, 1000);
    assert_eq!((zero_min, zero_max), (0.0, 0.0));
}

#[test]
fn almost_every_start_falls_into_the_period_2_orbit() {
    let h = map_h();
    let certs = find_fixed_points(&h, 2).unwrap();
    let targets: Vec<f64> = certs
        .iter()
        .filter(|c| c.kind == (CertificateKind::Periodic { period: 2 }))
        .map(|c| c.points[0])
        .collect();
    let mut converged = 0;
    let mut flagged = 0;
    for k in 0..100 {
        let x0 = (k as f64 + 0.5) / 100.0;
        let mut x = x0;
        let mut done = false;
        for _ in 0..2000 {
            if (x - 0.5).abs() <= 1e-9 {
                // Landed on the repelling fixed point; excluded from the basin.
                flagged += 1;
                done = true;
                break;
            }
            if targets.iter().any(|t| (x - t).abs() <= 1e-8) {
                converged += 1;
                done = true;
                break;
            }
            x = iterate(&h, x, 2);
        }
        assert!(done, "start {x0} neither converged nor was flagged");
    }
    assert_eq!(flagged, 0);
    assert_eq!(converged, 100);
}

#[test]
fn certificates_serialize_with_their_kind() {
    let g = map_g();
    let cert = find_period3(&g, 0.4, 0.5).unwrap();
    let json = cert.to_json();
    assert!(json.contains("\"periodic\""));
    assert!(json.contains("\"period\":3"));
}
