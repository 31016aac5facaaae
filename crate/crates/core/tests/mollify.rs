use colombeau::mollify::{poly_moment_coefficients, SmoothProfile};
use colombeau::pairing::{pair, TestFunction};
use colombeau::{embed, make_mollifier, DistributionModel, Error, MollifierKind, SmoothExpr};
use proptest::prelude::*;

/// Composite Simpson rule, independent of the library quadrature.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

const KINDS: [MollifierKind; 4] = [
    MollifierKind::Gaussian,
    MollifierKind::Bump,
    MollifierKind::PolyMoment(1),
    MollifierKind::PolyMoment(2),
];

#[test]
fn kernels_have_unit_mass_and_vanishing_moments() {
    for kind in KINDS {
        let rho = make_mollifier(kind).unwrap();
        let r = rho.effective_radius();
        let m = |k: i32| simpson(|y| y.powi(k) * rho.density(y), -r, r, 20_000);
        assert!((m(0) - 1.0).abs() < 1e-9, "{kind}: mass {}", m(0));
        for k in 1..=rho.q as i32 {
            assert!(m(k).abs() < 1e-9, "{kind}: moment {k} = {}", m(k));
        }
    }
}

#[test]
fn poly_coefficients_are_even() {
    for q in 1..=4 {
        let c = poly_moment_coefficients(q).unwrap();
        assert_eq!(c.len(), q + 1);
        assert!(
            c.iter().skip(1).step_by(2).all(|v| v.abs() < 1e-12),
            "q = {q}: {c:?}"
        );
    }
}

#[test]
fn kind_names_round_trip() {
    for kind in KINDS {
        assert_eq!(kind.to_string().parse::<MollifierKind>().unwrap(), kind);
    }
    assert!("cauchy".parse::<MollifierKind>().is_err());
}

#[test]
fn smooth_profile_must_be_eps_free() {
    assert!(matches!(
        SmoothProfile::new(SmoothExpr::eps()),
        Err(Error::Invalid(_))
    ));
}

#[test]
fn heaviside_net_is_a_step_away_from_the_origin() {
    for kind in [MollifierKind::Gaussian, MollifierKind::Bump] {
        let h = embed(
            &DistributionModel::heaviside(),
            &make_mollifier(kind).unwrap(),
        );
        assert!(h.eval(0.01, -0.5).unwrap().abs() < 1e-15);
        assert!((h.eval(0.01, 0.5).unwrap() - 1.0).abs() < 1e-15);
        assert!((h.eval(0.01, 0.0).unwrap() - 0.5).abs() < 1e-12);
    }
}

#[test]
fn dirac_pairing_recovers_point_value() {
    let psi = TestFunction::bump(0.2, 1.0).unwrap();
    for kind in KINDS {
        let d = embed(&DistributionModel::dirac(), &make_mollifier(kind).unwrap());
        let v = pair(&d, &psi, 1.0 / 1024.0).unwrap();
        assert!(
            (v - psi.value(0.0)).abs() < 1e-4,
            "{kind}: {v} vs {}",
            psi.value(0.0)
        );
    }
}

#[test]
fn finite_sum_is_linear() {
    let rho = make_mollifier(MollifierKind::Bump).unwrap();
    let sum = DistributionModel::FiniteSum(vec![
        (2.0, DistributionModel::heaviside()),
        (-1.0, DistributionModel::Sign),
    ]);
    let u = embed(&sum, &rho);
    let h = embed(&DistributionModel::heaviside(), &rho);
    let s = embed(&DistributionModel::Sign, &rho);
    for x in [-0.1, 0.0, 0.03, 0.2] {
        let want = 2.0 * h.eval(0.1, x).unwrap() - s.eval(0.1, x).unwrap();
        assert!((u.eval(0.1, x).unwrap() - want).abs() < 1e-14);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn positive_kernels_give_monotone_heaviside(x in -0.5f64..0.5, dx in 1e-4f64..0.1, eps in 0.01f64..1.0) {
        for kind in [MollifierKind::Gaussian, MollifierKind::Bump] {
            let h = embed(&DistributionModel::heaviside(), &make_mollifier(kind).unwrap());
            let a = h.eval(eps, x).unwrap();
            let b = h.eval(eps, x + dx).unwrap();
            prop_assert!(b >= a - 1e-15);
            prop_assert!((-1e-15..=1.0 + 1e-15).contains(&a));
        }
    }

    #[test]
    fn smooth_embedding_of_polynomials(c0 in -2.0f64..2.0, c1 in -2.0f64..2.0, x in -1.0f64..1.0, eps in 0.01f64..1.0) {
        // Kernels with a vanishing first moment reproduce affine functions exactly.
        let f = &SmoothExpr::constant(c0) + &(&SmoothExpr::constant(c1) * &SmoothExpr::x());
        let u = embed(&DistributionModel::smooth(f).unwrap(), &make_mollifier(MollifierKind::Bump).unwrap());
        prop_assert!((u.eval(eps, x).unwrap() - (c0 + c1 * x)).abs() < 1e-9);
    }
}
