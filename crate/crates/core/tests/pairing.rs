use colombeau::asymptotics::EpsLadder;
use colombeau::pairing::{
    associated, default_test_set, pair, pair_limit, schwartz_core, TestFunction,
};
use colombeau::{embed, DistributionModel, EpsNet, Interval, Mollifier, SmoothExpr};
use proptest::prelude::*;

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

#[test]
fn schwartz_core_is_minus_one_sixth() {
    for rho in [Mollifier::bump(), Mollifier::gaussian()] {
        for e in EpsLadder::default().values() {
            assert!((schwartz_core(&rho, e).unwrap() + 1.0 / 6.0).abs() <= 1e-8);
        }
    }
}

#[test]
fn test_functions_are_validated() {
    let x = SmoothExpr::x();
    assert!(TestFunction::new(x, Interval::new(-1.0, 1.0).unwrap(), "x").is_err());
    let p = TestFunction::plateau(-1.0, 1.0, 0.5).unwrap();
    assert_eq!(p.value(0.0), 1.0);
    assert_eq!(p.value(1.5), 0.0);
    let oracle = simpson(|x| p.value(x), -1.0, 1.0, 20_000);
    assert!((p.integral().unwrap() - oracle).abs() < 1e-9);
}

#[test]
fn smooth_pairing_matches_simpson() {
    let psi = TestFunction::bump(0.5, 1.2).unwrap();
    let u = EpsNet::new(
        (&SmoothExpr::x() * &SmoothExpr::constant(3.0)).cos(),
        "cos3x",
    )
    .unwrap();
    let oracle = simpson(|x| (3.0 * x).cos() * psi.value(x), -0.7, 1.7, 40_000);
    assert!((pair(&u, &psi, 0.5).unwrap() - oracle).abs() < 1e-10);
}

#[test]
fn heaviside_square_is_associated_to_heaviside() {
    let tests = default_test_set();
    for rho in [Mollifier::bump(), Mollifier::gaussian()] {
        let h = embed(&DistributionModel::heaviside(), &rho);
        let rep = associated(&h.mul(&h), &h, &tests, &EpsLadder::default()).unwrap();
        assert!(rep.associated_on_tested_set);
        for o in &rep.outcomes {
            assert!((0.9..=1.1).contains(&o.slope), "{}: {}", o.test, o.slope);
        }
    }
}

#[test]
fn products_with_the_jump_derivative() {
    let psi = TestFunction::bump(0.0, 1.0).unwrap();
    let h = embed(&DistributionModel::heaviside(), &Mollifier::bump());
    let hp = h.derive();
    let l1 = pair_limit(&h.mul(&hp), &psi, &EpsLadder::default()).unwrap();
    let l2 = pair_limit(&h.mul(&h).mul(&hp), &psi, &EpsLadder::default()).unwrap();
    assert!((l1.limit - 0.5).abs() < 1e-6);
    assert!((l2.limit - 1.0 / 3.0).abs() < 1e-6);
}

#[test]
fn distinct_distributions_are_not_associated() {
    let d = embed(&DistributionModel::dirac(), &Mollifier::bump());
    let rep = associated(
        &d,
        &d.scale(2.0),
        &default_test_set(),
        &EpsLadder::default(),
    )
    .unwrap();
    assert!(!rep.associated_on_tested_set);
    for o in &rep.outcomes {
        assert!((o.limit + 1.0).abs() < 1e-6, "{}: {}", o.test, o.limit);
    }
}

#[test]
fn association_reports_are_symmetric() {
    let h = embed(&DistributionModel::heaviside(), &Mollifier::gaussian());
    let h2 = h.mul(&h);
    let tests = default_test_set();
    let a = associated(&h2, &h, &tests, &EpsLadder::default()).unwrap();
    let b = associated(&h, &h2, &tests, &EpsLadder::default()).unwrap();
    assert_eq!(a.associated_on_tested_set, b.associated_on_tested_set);
    for (x, y) in a.outcomes.iter().zip(&b.outcomes) {
        assert!((x.limit + y.limit).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pairing_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, eps in 0.01f64..1.0) {
        let psi = TestFunction::bump(0.1, 0.9).unwrap();
        let rho = Mollifier::bump();
        let h = embed(&DistributionModel::heaviside(), &rho);
        let d = embed(&DistributionModel::dirac(), &rho);
        let lhs = pair(&h.scale(a).add(&d.scale(b)), &psi, eps).unwrap();
        let rhs = a * pair(&h, &psi, eps).unwrap() + b * pair(&d, &psi, eps).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + a.abs() + b.abs()));
    }
}
