//! Pairing nets with test functions, limits as `ε → 0`, and association.

use serde::Serialize;

use crate::asymptotics::{estimate_order, sample_ladder, Classification, DecayReport, EpsLadder};
use crate::epsnet::{check_eps, EpsNet, Interval};
use crate::error::{Error, Result};
use crate::expr::SmoothExpr;
use crate::mollify::{bump_mass, embed, DistributionModel, Mollifier};
use crate::quad::{self, QuadOptions};

/// Absolute tolerance for pairings.
pub const PAIR_TOL: f64 = 1e-10;
/// Tolerance on limits when deciding association.
pub const ASSOCIATION_TOL: f64 = 1e-6;
/// Relative change at the end of the ladder above which a limit is indeterminate.
pub const STABILITY_TOL: f64 = 1e-3;

/// A smooth, compactly supported, ε-free test function.
#[derive(Debug, Clone)]
pub struct TestFunction {
    pub expr: SmoothExpr,
    pub support: Interval,
    pub label: String,
}

/// Smooth step: 0 for `s ≤ -1`, 1 for `s ≥ 1`.
fn smooth_step(s: &SmoothExpr) -> SmoothExpr {
    let density = &SmoothExpr::constant(1.0 / bump_mass()) * &SmoothExpr::t().bump();
    SmoothExpr::antideriv(&density, -1.0, s, Some((-1.0, 1.0)))
}

impl TestFunction {
    /// Checks that `expr` is ε-free and vanishes on and just beyond the support boundary.
    pub fn new(expr: SmoothExpr, support: Interval, label: impl Into<String>) -> Result<Self> {
        if expr.depends_on_eps() || expr.has_free_t() {
            return Err(Error::Invalid(
                "test functions must depend on x only".into(),
            ));
        }
        let w = support.width().max(1.0);
        for p in [
            support.lo,
            support.hi,
            support.lo - 0.01 * w,
            support.hi + 0.01 * w,
            support.lo - w,
            support.hi + w,
        ] {
            let v = expr.eval(1.0, p);
            if !(v.abs() <= 1e-14) {
                return Err(Error::Invalid(format!(
                    "test function is {v} at {p}, outside its support {support}"
                )));
            }
        }
        Ok(Self {
            expr,
            support,
            label: label.into(),
        })
    }

    /// Equal to 1 on `[lo + ramp, hi - ramp]`, supported in `[lo, hi]`.
    pub fn plateau(lo: f64, hi: f64, ramp: f64) -> Result<Self> {
        if !(ramp > 0.0 && 2.0 * ramp <= hi - lo) {
            return Err(Error::Invalid(format!(
                "ramp {ramp} does not fit in [{lo}, {hi}]"
            )));
        }
        let x = SmoothExpr::x();
        let c = SmoothExpr::constant;
        let rise = smooth_step(&(&(&c(2.0 / ramp) * &(&x + &c(-lo))) + &c(-1.0)));
        let fall = smooth_step(&(&(&c(2.0 / ramp) * &(&c(hi) - &x)) + &c(-1.0)));
        Self::new(
            &rise * &fall,
            Interval::new(lo, hi)?,
            format!("plateau[{lo},{hi}]"),
        )
    }

    /// `e·exp(-1/(1 - ((x-c)/r)²))`, peak value 1 at `c`.
    pub fn bump(center: f64, radius: f64) -> Result<Self> {
        let x = SmoothExpr::x();
        let s = (&x + &SmoothExpr::constant(-center)).div(&SmoothExpr::constant(radius));
        let expr = &SmoothExpr::constant(std::f64::consts::E) * &s.bump();
        Self::new(
            expr,
            Interval::new(center - radius, center + radius)?,
            format!("bump[{center},{radius}]"),
        )
    }

    /// Multiply by an ε-free smooth function; the support is unchanged.
    pub fn times(&self, f: &SmoothExpr, label: impl Into<String>) -> Result<Self> {
        Self::new(f * &self.expr, self.support, label)
    }

    pub fn value(&self, x: f64) -> f64 {
        self.expr.eval(1.0, x)
    }

    /// `∫ ψ` over the support.
    pub fn integral(&self) -> Result<f64> {
        self.integral_from(self.support.lo)
    }

    /// `∫_{a}^{∞} ψ`.
    pub fn integral_from(&self, a: f64) -> Result<f64> {
        let lo = a.max(self.support.lo);
        if lo >= self.support.hi {
            return Ok(0.0);
        }
        quad::integrate(
            |x| self.value(x),
            lo,
            self.support.hi,
            &[],
            QuadOptions::with_abs_tol(1e-13),
        )
        .map(|r| r.value)
    }
}

/// Three plateau functions, each equal to 1 near the origin.
pub fn default_test_set() -> Vec<TestFunction> {
    vec![
        TestFunction::plateau(-1.0, 1.0, 0.5).expect("valid plateau"),
        TestFunction::plateau(-0.5, 2.0, 0.25).expect("valid plateau"),
        TestFunction::plateau(-3.0, 0.25, 0.125).expect("valid plateau"),
    ]
}

/// `x²·ψ` for the unit plateau: vanishes at the origin, so pairings against
/// symmetric layers at 0 decay at a higher rate than for the default set.
pub fn rate_probe() -> TestFunction {
    let x = SmoothExpr::x();
    TestFunction::plateau(-1.0, 1.0, 0.5)
        .and_then(|p| p.times(&(&x * &x), "x^2*plateau[-1,1]"))
        .expect("valid probe")
}

/// `∫_K u_ε` with breakpoints seeded at kernel-scale offsets around the net's centers.
pub fn integrate_over(u: &EpsNet, eps: f64, k: Interval) -> Result<f64> {
    check_eps(eps)?;
    let mut bps = u.layer_breakpoints(eps);
    bps.push(0.5 * (k.lo + k.hi));
    quad::integrate(
        |x| u.eval_raw(eps, x),
        k.lo,
        k.hi,
        &bps,
        QuadOptions::with_abs_tol(PAIR_TOL),
    )
    .map(|r| r.value)
}

/// `⟨u_ε, ψ⟩`.
pub fn pair(u: &EpsNet, psi: &TestFunction, eps: f64) -> Result<f64> {
    check_eps(eps)?;
    let k = psi.support;
    let mut bps = u.layer_breakpoints(eps);
    bps.push(0.5 * (k.lo + k.hi));
    let f = |x: f64| {
        let p = psi.value(x);
        if p == 0.0 {
            0.0
        } else {
            u.eval_raw(eps, x) * p
        }
    };
    quad::integrate(f, k.lo, k.hi, &bps, QuadOptions::with_abs_tol(PAIR_TOL)).map(|r| r.value)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitReport {
    pub limit: f64,
    /// Decay of `|⟨u_ε, ψ⟩ - limit|`.
    pub rate: DecayReport,
    /// Order assumed by the extrapolation; `None` when the pairings had already stabilized.
    pub extrapolation_order: Option<f64>,
    pub pairings: Vec<(f64, f64)>,
}

/// `lim_{ε→0} ⟨u_ε, ψ⟩` by Richardson extrapolation on the two smallest ladder entries.
pub fn pair_limit(u: &EpsNet, psi: &TestFunction, ladder: &EpsLadder) -> Result<LimitReport> {
    let pairings = sample_ladder(ladder, |e| pair(u, psi, e))?;
    limit_from_samples(pairings, ladder.ratio)
}

pub(crate) fn limit_from_samples(pairings: Vec<(f64, f64)>, ratio: f64) -> Result<LimitReport> {
    let n = pairings.len();
    let magnitude = pairings.iter().fold(1.0f64, |m, p| m.max(p.1.abs()));
    let floor = 1e-12 * magnitude;
    let zero_small = |v: f64| if v.abs() <= floor { 0.0 } else { v };

    let (last_eps, last) = pairings[n - 1];
    let prev = pairings[n - 2].1;
    if (last - prev).abs() > STABILITY_TOL * last.abs().max(1.0) {
        return Err(Error::Indeterminate(format!(
            "pairings still moving at ε = {last_eps:e}: {prev} -> {last}"
        )));
    }

    let diffs: Vec<(f64, f64)> = pairings
        .windows(2)
        .map(|w| (w[1].0, zero_small(w[0].1 - w[1].1).abs()))
        .collect();
    let diff_report = estimate_order(&diffs);
    let settled = diffs[diffs.len() - 2..].iter().all(|d| d.1 == 0.0)
        || diff_report.classification == Classification::NegligibleCandidate;

    let (limit, order) = if settled {
        (last, None)
    } else {
        let mut b = diff_report.slope;
        if !(b > 0.0) {
            return Err(Error::Indeterminate(format!(
                "pairings do not converge (difference order {b})"
            )));
        }
        if (b - b.round()).abs() < 0.1 {
            b = b.round();
        }
        (last - (prev - last) / (ratio.powf(-b) - 1.0), Some(b))
    };
    let residuals: Vec<(f64, f64)> = pairings
        .iter()
        .map(|&(e, p)| (e, zero_small(p - limit).abs()))
        .collect();
    Ok(LimitReport {
        limit,
        rate: estimate_order(&residuals),
        extrapolation_order: order,
        pairings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestOutcome {
    pub test: String,
    pub limit: f64,
    pub slope: f64,
    pub classification: Classification,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssociationReport {
    /// Association holds on the tested set only.
    pub associated_on_tested_set: bool,
    pub tolerance: f64,
    pub outcomes: Vec<TestOutcome>,
}

/// `u ≈ v`: `⟨u_ε - v_ε, ψ⟩ → 0` for every supplied test function.
pub fn associated(
    u: &EpsNet,
    v: &EpsNet,
    tests: &[TestFunction],
    ladder: &EpsLadder,
) -> Result<AssociationReport> {
    if tests.is_empty() {
        return Err(Error::Invalid(
            "association needs at least one test function".into(),
        ));
    }
    let diff = u.sub(v);
    let mut outcomes = Vec::with_capacity(tests.len());
    for psi in tests {
        let lim = pair_limit(&diff, psi, ladder)?;
        outcomes.push(TestOutcome {
            test: psi.label.clone(),
            limit: lim.limit,
            slope: lim.rate.slope,
            classification: lim.rate.classification,
        });
    }
    Ok(AssociationReport {
        associated_on_tested_set: outcomes.iter().all(|o| o.limit.abs() <= ASSOCIATION_TOL),
        tolerance: ASSOCIATION_TOL,
        outcomes,
    })
}

/// `(H_ε² - H_ε)·H_ε'` for the Heaviside embedding through `rho`.
pub fn schwartz_integrand(rho: &Mollifier) -> EpsNet {
    let h = embed(&DistributionModel::heaviside(), rho);
    h.mul(&h).sub(&h).mul(&h.derive()).relabel("(H^2 - H) H'")
}

/// `∫(H_ε² - H_ε)H_ε' dx` over the kernel's effective support.
pub fn schwartz_core(rho: &Mollifier, eps: f64) -> Result<f64> {
    check_eps(eps)?;
    let r = eps * rho.effective_radius();
    integrate_over(&schwartz_integrand(rho), eps, Interval::new(-r, r)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mollify::{delta_net, make_mollifier, MollifierKind};

    #[test]
    fn test_function_validation() {
        let x = SmoothExpr::x();
        assert!(TestFunction::new(x.clone(), Interval::new(-1.0, 1.0).unwrap(), "x").is_err());
        assert!(TestFunction::plateau(0.0, 1.0, 0.6).is_err());
        let p = TestFunction::plateau(-2.0, 2.0, 1.0).unwrap();
        assert_eq!(p.value(0.0), 1.0);
        assert!((p.value(-1.0) - 1.0).abs() < 1e-15);
        assert_eq!(p.value(2.0), 0.0);
        assert!((p.value(-1.5) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn pair_zero_and_delta() {
        let psi = TestFunction::plateau(-2.0, 2.0, 1.0).unwrap();
        assert_eq!(pair(&EpsNet::zero(), &psi, 0.1).unwrap(), 0.0);
        let d = delta_net(&Mollifier::bump(), 0.0);
        assert!((pair(&d, &psi, 0.05).unwrap() - 1.0).abs() < 1e-9);
        assert!((pair(&d, &psi, 0.1).unwrap() - 1.0).abs() < 1e-10);
        assert!(pair(&d, &psi, 0.0).is_err());
    }

    #[test]
    fn heaviside_pairing_approaches_half_line_integral() {
        let psi = TestFunction::bump(0.3, 1.0).unwrap();
        let exact = psi.integral_from(0.0).unwrap();
        let h = embed(&DistributionModel::heaviside(), &Mollifier::gaussian());
        for &eps in &[0.1, 0.01, 0.001] {
            let p = pair(&h, &psi, eps).unwrap();
            assert!((p - exact).abs() <= eps, "ε = {eps}: {p} vs {exact}");
        }
    }

    #[test]
    fn pairing_is_linear() {
        let rho = Mollifier::bump();
        let psi = TestFunction::bump(0.2, 1.0).unwrap();
        let u = embed(&DistributionModel::heaviside(), &rho);
        let v = embed(
            &DistributionModel::Dirac {
                order: 1,
                center: 0.1,
            },
            &rho,
        );
        for &eps in &[0.2, 0.03] {
            let lhs = pair(&u.add(&v), &psi, eps).unwrap();
            let rhs = pair(&u, &psi, eps).unwrap() + pair(&v, &psi, eps).unwrap();
            assert!((lhs - rhs).abs() < 1e-9);
        }
    }

    #[test]
    fn delta_limit_is_point_value() {
        let psi = TestFunction::bump(0.2, 1.0).unwrap();
        let l = EpsLadder::default();
        for rho in [Mollifier::bump(), Mollifier::gaussian()] {
            let lim = pair_limit(&delta_net(&rho, 0.0), &psi, &l).unwrap();
            assert!(
                (lim.limit - psi.value(0.0)).abs() < 1e-8,
                "{} vs {}",
                lim.limit,
                psi.value(0.0)
            );
            assert!(
                lim.rate.slope >= 1.9
                    || lim.rate.classification == Classification::NegligibleCandidate
            );
        }
    }

    #[test]
    fn zero_limit_is_negligible() {
        let psi = TestFunction::plateau(-1.0, 1.0, 0.5).unwrap();
        let lim = pair_limit(&EpsNet::zero(), &psi, &EpsLadder::default()).unwrap();
        assert_eq!(lim.limit, 0.0);
        assert_eq!(lim.rate.classification, Classification::NegligibleCandidate);
    }

    #[test]
    fn divergent_pairing_is_indeterminate() {
        // ⟨δ_ε², ψ⟩ ~ 1/ε
        let d = delta_net(&Mollifier::bump(), 0.0);
        let psi = TestFunction::plateau(-1.0, 1.0, 0.5).unwrap();
        let err = pair_limit(&d.mul(&d), &psi, &EpsLadder::default()).unwrap_err();
        assert!(matches!(err, Error::Indeterminate(_)));
    }

    #[test]
    fn schwartz_core_values() {
        assert!((schwartz_core(&Mollifier::bump(), 0.5).unwrap() + 1.0 / 6.0).abs() < 1e-9);
        assert!((schwartz_core(&Mollifier::gaussian(), 0.01).unwrap() + 1.0 / 6.0).abs() < 1e-8);
        let poly = make_mollifier(MollifierKind::PolyMoment(2)).unwrap();
        assert!((schwartz_core(&poly, 0.1).unwrap() + 1.0 / 6.0).abs() < 1e-9);
        let h = embed(&DistributionModel::heaviside(), &Mollifier::bump());
        let zero_integrand = h.sub(&h).mul(&h.derive());
        let v = integrate_over(&zero_integrand, 0.2, Interval::new(-0.2, 0.2).unwrap()).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn association_reflexive_and_hh_prime() {
        let rho = Mollifier::bump();
        let l = EpsLadder::default();
        let tests = default_test_set();
        let h = embed(&DistributionModel::heaviside(), &rho);
        assert!(
            associated(&h, &h, &tests, &l)
                .unwrap()
                .associated_on_tested_set
        );
        let hp = h.derive();
        let a = h.mul(&hp);
        let b = h.mul(&h).mul(&hp);
        let rep = associated(&a, &b, &tests, &l).unwrap();
        assert!(!rep.associated_on_tested_set);
        for (o, psi) in rep.outcomes.iter().zip(&tests) {
            assert!((o.limit - psi.value(0.0) / 6.0).abs() < 1e-6);
        }
        assert!(associated(&a, &b, &[], &l).is_err());
    }
}
