mod common;

use common::{random_shape, rel, rng};
use nbody_tsp::ljf::*;
use proptest::prelude::*;

fn shape_strategy() -> impl Strategy<Value = LjfShape> {
    (-2.0f64..2.0, 1e-6f64..50f64.ln(), -3.0f64..3.0, 1e-2f64..20.0).prop_map(|(ll, lr, lm, d)| {
        let l = 10f64.powf(ll);
        LjfShape::new(l, l * lr.exp(), 10f64.powf(lm), d).unwrap()
    })
}

proptest! {
    #[test]
    fn shape_round_trip(shape in shape_strategy()) {
        let back = shape_from_canonical(&canonical_from_shape(&shape).unwrap()).shape;
        prop_assert!(rel(back.l, shape.l) < 1e-9);
        prop_assert!(rel(back.r_min, shape.r_min) < 1e-9);
        prop_assert!(rel(back.m, shape.m) < 1e-9);
        prop_assert!(rel(back.delta, shape.delta) < 1e-9);
    }

    #[test]
    fn canonical_round_trip(ln_h in -5.0f64..5.0, p in 0.2f64..12.0, delta in 0.05f64..12.0, ln_l in -3.0f64..3.0) {
        let q = p + delta;
        let c = LjfCanonical::from_logs(ln_h + delta * ln_l, ln_h, q, p).unwrap();
        let back = canonical_from_shape(&shape_from_canonical(&c).shape).unwrap();
        prop_assert!(rel(back.p(), p) < 1e-9);
        prop_assert!(rel(back.q(), q) < 1e-9);
        prop_assert!((back.ln_h() - ln_h).abs() < 1e-9 * ln_h.abs().max(1.0) * p.max(1.0));
    }

    #[test]
    fn shape_form_matches_canonical_form(shape in shape_strategy(), t in 0.3f64..6.0) {
        let c = canonical_from_shape(&shape).unwrap();
        let r = shape.l * t;
        let a = shape.force(r);
        let b = c.force(r);
        prop_assert!((a - b).abs() <= 1e-8 * shape.m.max(a.abs()), "{a} vs {b}");
    }

    #[test]
    fn sign_pattern(shape in shape_strategy(), t in 0.05f64..0.95) {
        let c = canonical_from_shape(&shape).unwrap();
        let below = shape.l * t;
        if let Ok(f) = force_eval(&c, below) {
            prop_assert!(f > 0.0);
        }
        let above = shape.l + (shape.r_min - shape.l) * (t + 0.02);
        prop_assert!(force_eval(&c, above).unwrap() < 0.0);
    }

    #[test]
    fn larger_delta_attracts_more(
        l in 1e-2f64..1e2,
        ratio in 1.01f64..10.0,
        m in 1e-3f64..1e3,
        delta in 1e-2f64..5.0,
        u in 0.01f64..4.0,
    ) {
        let shape = LjfShape::new(l, ratio * l, m, delta).unwrap();
        let r = shape.r_min * (1.0 + u);
        let wider = LjfShape { delta: 2.0 * shape.delta, ..shape };
        prop_assert!(wider.force(r) < shape.force(r));
    }
}

#[test]
fn potential_gradient_matches_force() {
    let mut g = rng(5);
    let mut checked = 0;
    while checked < 500 {
        let shape = random_shape(&mut g);
        let c = canonical_from_shape(&shape).unwrap();
        if (c.p() - 1.0).abs() < 1e-3 || (c.q() - 1.0).abs() < 1e-3 || c.p() > 50.0 {
            continue;
        }
        for t in [0.9, 1.0, 1.3, 2.0, 4.0] {
            let r = shape.r_min * t;
            let h = 1e-5 * r;
            let (Ok(up), Ok(dn)) = (potential_eval(&c, r + h), potential_eval(&c, r - h)) else { continue };
            let grad = -(up - dn) / (2.0 * h);
            let f = force_eval(&c, r).unwrap();
            let scale = up.abs().max(dn.abs()) / r;
            assert!((grad - f).abs() <= 1e-6 * shape.m.max(f.abs()) + 1e-9 * scale, "{shape:?} r={r}: {grad} vs {f}");
        }
        checked += 1;
    }
}

#[test]
fn potential_rejects_unit_exponent() {
    let c = LjfCanonical::new(1.0, 1.0, 3.0, 1.0).unwrap();
    assert!(matches!(potential_eval(&c, 1.0), Err(LjfError::UnsupportedExponent { .. })));
}

#[test]
fn large_delta_limit_is_constant_attraction() {
    let mut g = rng(8);
    for _ in 0..200 {
        let s = random_shape(&mut g);
        // the limit needs delta * ln(r_min / L) >> 1
        let shape = LjfShape { delta: 1e3, r_min: s.r_min.max(1.1 * s.l), ..s };
        for t in [1.0, 1.5, 3.0, 10.0] {
            let f = shape.force(shape.r_min * t);
            assert!((f / shape.m + 1.0).abs() < 1e-6, "{shape:?} t={t}: {f}");
        }
    }
}

#[test]
fn small_delta_limit_is_decay_profile() {
    let mut g = rng(9);
    for _ in 0..200 {
        let s = random_shape(&mut g);
        let shape = LjfShape { delta: 1e-6, ..s };
        for t in [1.0, 1.5, 3.0, 10.0] {
            let r = shape.r_min * t;
            let f = shape.force(r);
            let limit = -shape.m * decay_profile(shape.l, shape.r_min, r).unwrap();
            assert!((f - limit).abs() <= 1e-4 * shape.m, "{shape:?} t={t}: {f} vs {limit}");
        }
    }
}

#[test]
fn decay_profile_endpoints() {
    assert!((decay_profile(1.0, 2.0, 2.0).unwrap() - 1.0).abs() < 1e-15);
    let far = decay_profile(1.0, 2.0, 1e12).unwrap();
    assert!(far > 0.0 && far < 1e-3);
    assert!(decay_profile(1.0, 2.0, 1.5).is_err());
}

#[test]
fn solve_r_eps_reference_value() {
    // T(R) = 1/2 with L = 1, r_min = e: R = e * exp(s) where exp(-s)(1 + s) = 1/2
    let mut lo = 0.0_f64;
    let mut hi = 10.0_f64;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (-mid).exp() * (1.0 + mid) > 0.5 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let expected = std::f64::consts::E * (0.5 * (lo + hi)).exp();
    let got = solve_r_eps(1.0, std::f64::consts::E, 0.5).unwrap();
    assert!(rel(got, expected) < 1e-9, "{got} vs {expected}");
    assert!(rel(got, 14.561_003_906_540_533) < 1e-9);
}

#[test]
fn solve_delta_round_trip_and_infeasible() {
    let mut g = rng(12);
    for _ in 0..100 {
        let s = random_shape(&mut g);
        let shape = LjfShape { delta: g_delta(&mut g), ..s };
        let r_eps = shape.r_min * 2.5;
        let eps = -shape.force(r_eps) / shape.m;
        if !(eps > 1e-6 && eps < 1.0 - 1e-6) {
            continue;
        }
        let delta = solve_delta(shape.l, shape.r_min, shape.m, eps, r_eps).unwrap();
        assert!(rel(delta, shape.delta) < 1e-6, "{shape:?}: {delta}");
        let r_lower = solve_r_eps(shape.l, shape.r_min, eps).unwrap();
        assert!(matches!(
            solve_delta(shape.l, shape.r_min, shape.m, eps, 0.99 * r_lower),
            Err(LjfError::InfeasibleTarget { .. })
        ));
    }
}

fn g_delta(g: &mut rand_xoshiro::SplitMix64) -> f64 {
    use rand::Rng;
    g.random_range(0.1..8.0)
}

#[test]
fn input_validation() {
    assert!(matches!(LjfShape::new(2.0, 1.0, 1.0, 1.0), Err(LjfError::InvalidShape { .. })));
    assert!(LjfShape::new(1.0, 2.0, -1.0, 1.0).is_err());
    assert!(LjfCanonical::new(1.0, 1.0, 1.0, 2.0).is_err());
    let c = LjfCanonical::new(1.0, 1.0, 2.0, 1.0).unwrap();
    assert!(matches!(force_eval(&c, 0.0), Err(LjfError::Domain(_))));
    assert!(matches!(force_eval(&c, -1.0), Err(LjfError::Domain(_))));
    assert!(solve_r_eps(1.0, 2.0, 1.0).is_err());
    assert!(solve_r_eps(1.0, 2.0, 0.0).is_err());
}
