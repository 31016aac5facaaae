use colombeau::hilbert_scale::{
    check_derivative, check_product, compact_rank, derivative, mollified_embed, norm, product,
    product_bound_constant, random_element, ScaleParams, SpectralElement,
};
use colombeau::{DistributionModel, SmoothExpr};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small() -> ScaleParams {
    ScaleParams::new(1.0, 4, 32).unwrap()
}

fn element(seed: u64, n: usize, real: bool) -> SpectralElement {
    random_element(&small(), n, real, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

/// Norm straight from the definition, with no log-space tricks.
fn plain_norm(p: &ScaleParams, u: &SpectralElement, n: usize) -> f64 {
    let a = p.a0 * 0.5f64.powi(n as i32);
    u.modes()
        .map(|(k, c)| (2.0 * a * k.abs() as f64).exp() * c.norm_sqr())
        .sum::<f64>()
        .sqrt()
}

#[test]
fn rejects_bad_parameters() {
    assert!(ScaleParams::new(0.0, 4, 8).is_err());
    assert!(ScaleParams::new(1.0, 2, 8).is_err());
    assert!(ScaleParams::new(1.0, 4, 0).is_err());
    assert!(SpectralElement::basis(9, 8).is_err());
}

#[test]
fn random_elements_are_unit_and_reproducible() {
    let p = small();
    for n in 0..3 {
        let u = element(5, n, true);
        assert!((norm(&p, &u, n).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(u, element(5, n, true));
        assert!(SpectralElement::from_coeffs(u.coeffs().to_vec(), true).is_ok());
        assert!(u.eval(0.7).im.abs() < 1e-12);
    }
}

#[test]
fn square_wave_embedding_has_real_point_values() {
    let p = small();
    let h = mollified_embed(&p, &DistributionModel::heaviside(), 0.2).unwrap();
    let inside = h.eval(std::f64::consts::FRAC_PI_2);
    let outside = h.eval(3.0 * std::f64::consts::FRAC_PI_2);
    assert!(inside.im.abs() < 1e-14);
    assert!((inside.re - 1.0).abs() < 0.05, "{inside}");
    assert!(outside.re.abs() < 0.05, "{outside}");
}

#[test]
fn smooth_and_finite_sum_embeddings_agree() {
    let p = small();
    let sin = DistributionModel::smooth(SmoothExpr::x().sin()).unwrap();
    let sum =
        DistributionModel::FiniteSum(vec![(2.0, sin.clone()), (1.0, DistributionModel::dirac())]);
    let a = mollified_embed(&p, &sum, 0.3).unwrap();
    let b = mollified_embed(&p, &sin, 0.3)
        .unwrap()
        .scale(2.0)
        .add(&mollified_embed(&p, &DistributionModel::dirac(), 0.3).unwrap())
        .unwrap();
    assert!(a.sub(&b).unwrap().coeffs().iter().all(|c| c.norm() < 1e-15));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn norms_decrease_along_the_scale(seed in any::<u64>(), real in any::<bool>()) {
        let p = small();
        let u = element(seed, 0, real);
        for n in 0..3 {
            let (a, b) = (norm(&p, &u, n).unwrap(), norm(&p, &u, n + 1).unwrap());
            prop_assert!(b <= a * (1.0 + 1e-14));
            prop_assert!((a - plain_norm(&p, &u, n)).abs() <= 1e-12 * a.max(1.0));
        }
    }

    #[test]
    fn product_raises_level_with_bounded_norm(s1 in any::<u64>(), s2 in any::<u64>(), n in 0usize..3) {
        let p = small();
        let (u, v) = (element(s1, n, false), element(s2, n, true));
        let rep = check_product(&p, &u, &v, n).unwrap();
        prop_assert!(rep.margin >= -1e-12);
        prop_assert!((product(&u, &v).unwrap().element.coeffs().len()) == u.coeffs().len());
    }

    #[test]
    fn derivative_raises_level_with_bounded_norm(s in any::<u64>(), n in 0usize..3) {
        let p = small();
        let u = element(s, n, s % 2 == 0);
        prop_assert!(check_derivative(&p, &u, n).unwrap().margin >= -1e-12);
        // Direct oracle: ‖u'‖ from the definition.
        let du = derivative(&u);
        prop_assert!((norm(&p, &du, n + 1).unwrap() - plain_norm(&p, &du, n + 1)).abs() <= 1e-12);
    }

    #[test]
    fn multiplication_is_continuous(s in any::<u64>(), n in 0usize..3, j in 1i32..30) {
        let p = small();
        let (u, v, w1, w2) = (element(s, n, true), element(s ^ 1, n, true), element(s ^ 2, n, true), element(s ^ 3, n, true));
        let h = 0.5f64.powi(j);
        let uj = u.add(&w1.scale(h)).unwrap();
        let vj = v.add(&w2.scale(h)).unwrap();
        let dist = norm(&p, &product(&uj, &vj).unwrap().element.sub(&product(&u, &v).unwrap().element).unwrap(), n + 1).unwrap();
        let c = product_bound_constant(&p, n).unwrap();
        let bound = c * (norm(&p, &uj.sub(&u).unwrap(), n).unwrap() * norm(&p, &vj, n).unwrap()
            + norm(&p, &u, n).unwrap() * norm(&p, &vj.sub(&v).unwrap(), n).unwrap());
        prop_assert!(dist <= bound + 1e-12);
    }

    #[test]
    fn finite_rank_projection_error_is_bounded(s in any::<u64>(), delta in 1e-12f64..0.5) {
        let p = small();
        let u = element(s, 0, true);
        let m = compact_rank(&p, 0, delta).unwrap();
        let err = norm(&p, &u.sub(&u.project(m)).unwrap(), 1).unwrap();
        prop_assert!(err <= delta * norm(&p, &u, 0).unwrap() * (1.0 + 1e-12));
    }
}
