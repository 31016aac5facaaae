//! Asymptotic order estimation along a geometric ladder `ε_j = ε₀ r^j`.
//!
//! Orders are measured on the polynomial scale: a net is moderate when its
//! sup-norms grow at most like `ε^{-N}` and negligible when it decays faster
//! than every `ε^N`. Only finitely many `ε` are ever sampled, so negligibility
//! is reported as a candidate, never as proven.

use std::fmt;

use rayon::prelude::*;
use serde::Serialize;

use crate::epsnet::{check_eps, EpsNet, Interval};
use crate::error::{Error, Result};
use crate::expr::SmoothExpr;

/// Orders above this are treated as faster than any power.
pub const N_MAX: i32 = 12;
/// Samples below this magnitude are exact zeros.
pub const ZERO_THRESHOLD: f64 = 1e-300;
/// Slack when rounding a fitted slope to an integer order.
pub const ORDER_SLACK: f64 = 0.05;
/// Grid size used when sampling sup-norms for [`classify`].
pub const CLASSIFY_GRID: usize = 1001;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpsLadder {
    pub eps0: f64,
    pub ratio: f64,
    pub count: usize,
}

impl Default for EpsLadder {
    fn default() -> Self {
        Self {
            eps0: 0.25,
            ratio: 0.5,
            count: 12,
        }
    }
}

impl EpsLadder {
    pub fn new(eps0: f64, ratio: f64, count: usize) -> Result<Self> {
        check_eps(eps0)?;
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(Error::Invalid(format!(
                "ladder ratio must lie in (0, 1), got {ratio}"
            )));
        }
        if count < 6 {
            return Err(Error::Invalid(format!(
                "ladder needs at least 6 entries, got {count}"
            )));
        }
        Ok(Self { eps0, ratio, count })
    }

    /// Entries in decreasing order.
    pub fn values(&self) -> Vec<f64> {
        (0..self.count)
            .map(|j| self.eps0 * self.ratio.powi(j as i32))
            .collect()
    }

    pub fn smallest(&self) -> f64 {
        self.eps0 * self.ratio.powi(self.count as i32 - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Classification {
    Moderate(i32),
    NegligibleCandidate,
    Divergent(i32),
    Indeterminate,
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Classification::Moderate(n) => write!(f, "Moderate({n})"),
            Classification::NegligibleCandidate => write!(f, "NegligibleCandidate"),
            Classification::Divergent(n) => write!(f, "Divergent({n})"),
            Classification::Indeterminate => write!(f, "Indeterminate"),
        }
    }
}

/// Result of fitting `|value| ~ C ε^slope`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayReport {
    /// `+∞` when the samples vanish identically as `ε → 0`, NaN when no fit was possible.
    pub slope: f64,
    pub intercept: f64,
    pub fit_r2: f64,
    pub classification: Classification,
    /// `(ε, value)` in ladder order.
    pub samples: Vec<(f64, f64)>,
    /// Number of samples entering the fit.
    pub window: usize,
}

fn classify_slope(slope: f64) -> Classification {
    if slope.is_nan() {
        Classification::Indeterminate
    } else if slope > N_MAX as f64 {
        Classification::NegligibleCandidate
    } else if slope <= -(N_MAX as f64) {
        Classification::Divergent((-slope - ORDER_SLACK).ceil() as i32)
    } else {
        Classification::Moderate(((-slope - ORDER_SLACK).ceil() as i32).max(0))
    }
}

/// Ordinary least squares `y = a + b x`; returns `(b, a, r²)`.
pub(crate) fn fit_line(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = points
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let r2 = if syy <= 1e-24 * (1.0 + my * my) * n {
        1.0
    } else {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    };
    (slope, intercept, r2)
}

/// Fit the order of `|value|` against `ε` over the smallest half of the ladder.
///
/// Zeros are excluded from the regression. Samples that are all zero, or that
/// hit exact zero at the two or more smallest `ε`, are classified
/// `NegligibleCandidate`. Fewer than four nonzero samples give `Indeterminate`.
pub fn estimate_order(samples: &[(f64, f64)]) -> DecayReport {
    let mut samples: Vec<(f64, f64)> = samples.to_vec();
    samples.sort_by(|a, b| b.0.total_cmp(&a.0));
    let is_zero = |v: f64| v.abs() < ZERO_THRESHOLD;
    let nonzero: Vec<(f64, f64)> = samples
        .iter()
        .filter(|(e, v)| !is_zero(*v) && v.is_finite() && *e > 0.0)
        .copied()
        .collect();
    let trailing_zeros = samples
        .iter()
        .rev()
        .take_while(|(_, v)| is_zero(*v))
        .count();

    let window = (samples.len().div_ceil(2)).max(4).min(nonzero.len());
    let fit = (nonzero.len() >= 4).then(|| {
        let pts: Vec<(f64, f64)> = nonzero[nonzero.len() - window..]
            .iter()
            .map(|(e, v)| (e.ln(), v.abs().ln()))
            .collect();
        fit_line(&pts)
    });

    let has_nonfinite = samples.iter().any(|(_, v)| !v.is_finite());
    let (slope, intercept, fit_r2, classification) = if has_nonfinite {
        (f64::NAN, f64::NAN, 0.0, Classification::Indeterminate)
    } else if nonzero.is_empty() || trailing_zeros >= 2 {
        match fit {
            Some((b, a, r2)) if b > 0.0 => (b, a, r2, Classification::NegligibleCandidate),
            _ => (
                f64::INFINITY,
                f64::NAN,
                0.0,
                Classification::NegligibleCandidate,
            ),
        }
    } else {
        match fit {
            Some((b, a, r2)) => (b, a, r2, classify_slope(b)),
            None => (f64::NAN, f64::NAN, 0.0, Classification::Indeterminate),
        }
    };
    DecayReport {
        slope,
        intercept,
        fit_r2,
        classification,
        samples,
        window: if fit.is_some() { window } else { 0 },
    }
}

/// Sample `f` at every ladder entry (in parallel) and return `(ε, f(ε))` in ladder order.
pub(crate) fn sample_ladder<F>(ladder: &EpsLadder, f: F) -> Result<Vec<(f64, f64)>>
where
    F: Fn(f64) -> Result<f64> + Sync,
{
    ladder
        .values()
        .into_par_iter()
        .map(|e| f(e).map(|v| (e, v)))
        .collect()
}

/// Moderateness test on `sup_K |u_ε|`.
pub fn classify(u: &EpsNet, k: Interval, ladder: &EpsLadder) -> Result<DecayReport> {
    let samples = sample_ladder(ladder, |e| u.sup_on(k, e, CLASSIFY_GRID))?;
    Ok(estimate_order(&samples))
}

/// A net of scalars `ε ↦ x_ε` (a representative of a generalized number).
#[derive(Debug, Clone, PartialEq)]
pub struct GenNumberNet {
    pub expr: SmoothExpr,
}

impl GenNumberNet {
    pub fn new(expr: SmoothExpr) -> Result<Self> {
        if expr.depends_on_x() || expr.has_free_t() {
            return Err(Error::Invalid(
                "a generalized number net may depend on ε only".into(),
            ));
        }
        Ok(Self { expr })
    }

    pub fn constant(c: f64) -> Self {
        Self {
            expr: SmoothExpr::constant(c),
        }
    }

    /// `ε^b`.
    pub fn power(b: i32) -> Self {
        Self {
            expr: SmoothExpr::eps().powi(b),
        }
    }

    pub fn eval(&self, eps: f64) -> f64 {
        self.expr.eval(eps, 0.0)
    }

    pub fn sub(&self, other: &GenNumberNet) -> GenNumberNet {
        Self {
            expr: &self.expr - &other.expr,
        }
    }
}

pub fn valuation_report(xnet: &GenNumberNet, ladder: &EpsLadder) -> DecayReport {
    let samples: Vec<(f64, f64)> = ladder
        .values()
        .into_iter()
        .map(|e| (e, xnet.eval(e)))
        .collect();
    estimate_order(&samples)
}

/// Estimated sharp valuation: the exponent `b` in `|x_ε| ~ ε^b`; `+∞` for identically vanishing nets.
pub fn valuation(xnet: &GenNumberNet, ladder: &EpsLadder) -> f64 {
    valuation_report(xnet, ladder).slope
}

/// `exp(-valuation(x - y))`, zero when the difference vanishes.
pub fn sharp_distance(x: &GenNumberNet, y: &GenNumberNet, ladder: &EpsLadder) -> f64 {
    let v = valuation(&x.sub(y), ladder);
    if v == f64::INFINITY {
        0.0
    } else {
        (-v).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointReport {
    pub x: f64,
    pub report: DecayReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivalenceReport {
    pub points: Vec<PointReport>,
    /// True iff the difference is a negligible candidate at every point.
    pub equivalent: bool,
}

/// Pointwise test of `u ℛ v`: the difference of point values `u_ε(x) - v_ε(x)`
/// must decay faster than every power of `ε` at each sampled point.
pub fn r_equivalent(
    u: &EpsNet,
    v: &EpsNet,
    points: &[f64],
    ladder: &EpsLadder,
) -> Result<EquivalenceReport> {
    if points.is_empty() {
        return Err(Error::Invalid(
            "r_equivalent needs at least one point".into(),
        ));
    }
    let diff = u.sub(v);
    let mut reports = Vec::with_capacity(points.len());
    for &x in points {
        let samples = sample_ladder(ladder, |e| diff.eval(e, x).map(f64::abs))?;
        reports.push(PointReport {
            x,
            report: estimate_order(&samples),
        });
    }
    let equivalent = reports
        .iter()
        .all(|p| p.report.classification == Classification::NegligibleCandidate);
    Ok(EquivalenceReport {
        points: reports,
        equivalent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mollify::{embed, DistributionModel, Mollifier};
    use proptest::prelude::*;

    fn synth(ladder: &EpsLadder, f: impl Fn(f64) -> f64) -> Vec<(f64, f64)> {
        ladder.values().into_iter().map(|e| (e, f(e))).collect()
    }

    #[test]
    fn ladder_validation() {
        assert!(EpsLadder::new(0.0, 0.5, 12).is_err());
        assert!(EpsLadder::new(0.25, 1.0, 12).is_err());
        assert!(EpsLadder::new(0.25, 0.5, 5).is_err());
        let l = EpsLadder::default();
        assert_eq!(l.values().len(), 12);
        assert_eq!(l.smallest(), 0.25 / 2048.0);
    }

    #[test]
    fn exact_power_law() {
        let r = estimate_order(&synth(&EpsLadder::default(), |e| e * e));
        assert!((r.slope - 2.0).abs() < 0.01);
        assert_eq!(r.window, 6);
        assert_eq!(r.classification, Classification::Moderate(0));
    }

    #[test]
    fn super_polynomial_decay_is_negligible_candidate() {
        let r = estimate_order(&synth(&EpsLadder::default(), |e| (-1.0 / e).exp()));
        assert_eq!(r.classification, Classification::NegligibleCandidate);
        // Every suffix of the nonzero part decays faster than N_MAX.
        let nonzero: Vec<_> = r
            .samples
            .iter()
            .filter(|s| s.1 > ZERO_THRESHOLD)
            .copied()
            .collect();
        for start in 0..nonzero.len() - 1 {
            let w = &nonzero[start..];
            let pts: Vec<_> = w.iter().map(|(e, v)| (e.ln(), v.ln())).collect();
            assert!(fit_line(&pts).0 > N_MAX as f64);
        }
    }

    #[test]
    fn degenerate_inputs() {
        let zeros = estimate_order(&synth(&EpsLadder::default(), |_| 0.0));
        assert_eq!(zeros.classification, Classification::NegligibleCandidate);
        assert_eq!(zeros.slope, f64::INFINITY);
        let few = estimate_order(&[(0.1, 1.0), (0.05, 2.0), (0.025, 4.0)]);
        assert_eq!(few.classification, Classification::Indeterminate);
        assert!(few.slope.is_nan());
        let nan = estimate_order(&synth(&EpsLadder::default(), |_| f64::NAN));
        assert_eq!(nan.classification, Classification::Indeterminate);
    }

    #[test]
    fn divergence_classes() {
        let l = EpsLadder::default();
        assert_eq!(
            estimate_order(&synth(&l, |e| e.powi(-3))).classification,
            Classification::Moderate(3)
        );
        assert_eq!(
            estimate_order(&synth(&l, |e| e.powi(-13))).classification,
            Classification::Divergent(13)
        );
        assert_eq!(
            estimate_order(&synth(&l, |e| e.powi(14))).classification,
            Classification::NegligibleCandidate
        );
    }

    #[test]
    fn classify_embeddings() {
        let k = Interval::new(-1.0, 1.0).unwrap();
        let l = EpsLadder::default();
        let rho = Mollifier::bump();
        let h = classify(&embed(&DistributionModel::heaviside(), &rho), k, &l).unwrap();
        assert_eq!(h.classification, Classification::Moderate(0));
        let d = classify(&embed(&DistributionModel::dirac(), &rho), k, &l).unwrap();
        assert_eq!(d.classification, Classification::Moderate(1));
        assert!((d.slope + 1.0).abs() < 0.05);
        let z = classify(&EpsNet::zero(), k, &l).unwrap();
        assert_eq!(z.classification, Classification::NegligibleCandidate);
    }

    #[test]
    fn valuation_examples() {
        let l = EpsLadder::default();
        assert!((valuation(&GenNumberNet::power(3), &l) - 3.0).abs() < 0.01);
        let e = SmoothExpr::eps();
        let mixed = GenNumberNet::new(&e.powi(2) - &e.powi(3)).unwrap();
        assert!((valuation(&mixed, &l) - 2.0).abs() < 0.05);
        assert!(valuation(&GenNumberNet::constant(5.0), &l).abs() < 0.01);
        assert!(GenNumberNet::new(SmoothExpr::x()).is_err());
    }

    #[test]
    fn sharp_distance_examples() {
        let l = EpsLadder::default();
        let x = GenNumberNet::power(2);
        assert_eq!(sharp_distance(&x, &x, &l), 0.0);
        let d = sharp_distance(&GenNumberNet::power(2), &GenNumberNet::power(3), &l);
        assert!((d - (-2.0f64).exp()).abs() < 0.01);
        let one = sharp_distance(
            &GenNumberNet::constant(1.0),
            &GenNumberNet::constant(0.0),
            &l,
        );
        assert!((one - 1.0).abs() < 1e-12);
    }

    #[test]
    fn r_equivalence_examples() {
        let l = EpsLadder::default();
        let rho = Mollifier::gaussian();
        let h = embed(&DistributionModel::heaviside(), &rho);
        let same = r_equivalent(&h, &h, &[-0.5, 0.0, 0.5], &l).unwrap();
        assert!(same.equivalent);

        let h2 = h.mul(&h);
        let rep = r_equivalent(&h2, &h, &[0.0], &l).unwrap();
        assert!(!rep.equivalent);
        let r0 = &rep.points[0].report;
        assert!(r0.slope.abs() < 0.1);
        for &(_, v) in &r0.samples {
            assert!((v - 0.25).abs() < 1e-15);
        }

        let d = embed(&DistributionModel::dirac(), &rho);
        assert!(!r_equivalent(&d, &h, &[0.0], &l).unwrap().equivalent);
        assert!(r_equivalent(&h, &h, &[], &l).is_err());
    }

    #[test]
    fn smooth_embeddings_differ_at_second_order() {
        let l = EpsLadder::default();
        let sin = DistributionModel::smooth(SmoothExpr::x().sin()).unwrap();
        let a = embed(&sin, &Mollifier::gaussian());
        let b = embed(&sin, &Mollifier::bump());
        let rep = r_equivalent(&a, &b, &[1.0], &l).unwrap();
        let r = &rep.points[0].report;
        assert!((r.slope - 2.0).abs() < 0.05, "slope {}", r.slope);
        assert!(!rep.equivalent);
    }

    proptest! {
        #[test]
        fn estimator_recovers_power_laws(b in -3i32..=6, c in 0.01f64..100.0) {
            let l = EpsLadder::default();
            let r = estimate_order(&synth(&l, |e| c * e.powi(b)));
            prop_assert!((r.slope - b as f64).abs() < 0.02);
            prop_assert!(r.fit_r2 >= 0.999);
            let halved = EpsLadder::new(l.eps0 / 2.0, l.ratio, l.count).unwrap();
            let r2 = estimate_order(&synth(&halved, |e| c * e.powi(b)));
            prop_assert!((r2.slope - r.slope).abs() < 0.02);
        }
    }
}
