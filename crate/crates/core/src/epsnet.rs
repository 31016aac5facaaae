//! ε-nets of smooth functions: representatives `ε ↦ u_ε` of generalized functions.

use std::fmt;

use crate::error::{Error, Result};
use crate::expr::SmoothExpr;

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || lo > hi {
            return Err(Error::Domain(format!(
                "empty or non-finite interval [{lo}, {hi}]"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

/// A representative net. Besides the expression it carries the locations
/// where the net concentrates (`centers`) and the kernel radius in units of
/// `ε`; samplers and integrators place extra nodes there.
#[derive(Debug, Clone)]
pub struct EpsNet {
    pub expr: SmoothExpr,
    pub label: String,
    pub claimed_order: Option<i32>,
    centers: Vec<f64>,
    radius: f64,
}

pub(crate) fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps <= 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("ε must lie in (0, 1], got {eps}")))
    }
}

fn merge_centers(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut c: Vec<f64> = a.iter().chain(b).copied().collect();
    c.sort_by(f64::total_cmp);
    c.dedup();
    c
}

impl EpsNet {
    /// Wrap an expression in `x` and `ε`. Rejects expressions with a free integration variable.
    pub fn new(expr: SmoothExpr, label: impl Into<String>) -> Result<Self> {
        if expr.has_free_t() {
            return Err(Error::Invalid(
                "net expression mentions an unbound integration variable".into(),
            ));
        }
        Ok(Self {
            expr,
            label: label.into(),
            claimed_order: None,
            centers: Vec::new(),
            radius: 0.0,
        })
    }

    pub(crate) fn with_layer(mut self, centers: &[f64], radius: f64) -> Self {
        self.centers = merge_centers(&self.centers, centers);
        self.radius = self.radius.max(radius);
        self
    }

    pub fn with_claimed_order(mut self, order: i32) -> Self {
        self.claimed_order = Some(order);
        self
    }

    pub fn relabel(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn constant(c: f64) -> Self {
        Self::new(SmoothExpr::constant(c), format!("{c}")).expect("constants are closed")
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn one() -> Self {
        Self::constant(1.0)
    }

    /// The identity function `x ↦ x` (independent of ε).
    pub fn x() -> Self {
        Self::new(SmoothExpr::x(), "x").expect("x is closed")
    }

    /// Points where the net concentrates as `ε → 0`.
    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    /// Kernel radius in units of `ε` around each center.
    pub fn layer_radius(&self) -> f64 {
        self.radius
    }

    fn combine(&self, other: &EpsNet, expr: SmoothExpr, op: &str) -> EpsNet {
        EpsNet {
            expr,
            label: format!("({} {op} {})", self.label, other.label),
            claimed_order: None,
            centers: merge_centers(&self.centers, &other.centers),
            radius: self.radius.max(other.radius),
        }
    }

    pub fn add(&self, other: &EpsNet) -> EpsNet {
        self.combine(other, &self.expr + &other.expr, "+")
    }

    pub fn sub(&self, other: &EpsNet) -> EpsNet {
        self.combine(other, &self.expr - &other.expr, "-")
    }

    pub fn mul(&self, other: &EpsNet) -> EpsNet {
        self.combine(other, &self.expr * &other.expr, "*")
    }

    pub fn negate(&self) -> EpsNet {
        EpsNet {
            expr: -&self.expr,
            label: format!("-{}", self.label),
            ..self.clone()
        }
    }

    pub fn scale(&self, c: f64) -> EpsNet {
        EpsNet {
            expr: &SmoothExpr::constant(c) * &self.expr,
            label: format!("{c}*{}", self.label),
            ..self.clone()
        }
    }

    pub fn powi(&self, n: i32) -> EpsNet {
        EpsNet {
            expr: self.expr.powi(n),
            label: format!("{}^{n}", self.label),
            ..self.clone()
        }
    }

    /// Exact x-derivative.
    pub fn derive(&self) -> EpsNet {
        EpsNet {
            expr: self.expr.derive(),
            label: format!("d/dx {}", self.label),
            claimed_order: self.claimed_order.map(|n| n + 1),
            ..self.clone()
        }
    }

    /// `u_ε(x)`; `ε` must lie in `(0, 1]`.
    pub fn eval(&self, eps: f64, x: f64) -> Result<f64> {
        check_eps(eps)?;
        let v = self.expr.eval(eps, x);
        if v.is_nan() && !x.is_nan() {
            return Err(Error::Quadrature {
                a: f64::NAN,
                b: x,
                estimate: f64::NAN,
                error: f64::INFINITY,
                panels: 0,
            });
        }
        Ok(v)
    }

    /// Unchecked evaluation for hot loops where `ε` has already been validated.
    pub(crate) fn eval_raw(&self, eps: f64, x: f64) -> f64 {
        self.expr.eval(eps, x)
    }

    /// Extra sample points at kernel-scale offsets around each center that lies in `k`.
    pub(crate) fn layer_points(&self, eps: f64, k: Interval) -> Vec<f64> {
        let mut pts = Vec::new();
        if self.radius <= 0.0 {
            return pts;
        }
        let scale = eps * self.radius;
        for &c in &self.centers {
            for j in -32..=32 {
                let p = c + scale * j as f64 / 16.0;
                if k.contains(p) {
                    pts.push(p);
                }
            }
        }
        pts
    }

    /// Breakpoints at kernel-support multiples of `ε` around each center.
    pub(crate) fn layer_breakpoints(&self, eps: f64) -> Vec<f64> {
        let mut pts = Vec::new();
        if self.radius <= 0.0 {
            return pts;
        }
        let scale = eps * self.radius;
        for &c in &self.centers {
            for m in [-4.0, -2.0, -1.0, -0.5, -0.25, 0.0, 0.25, 0.5, 1.0, 2.0, 4.0] {
                pts.push(c + m * scale);
            }
        }
        pts
    }

    /// `sup_K |u_ε|` from a uniform grid of `grid_n` points (plus layer points),
    /// refined around the best sample until the value is stable to `1e-10` relative.
    pub fn sup_on(&self, k: Interval, eps: f64, grid_n: usize) -> Result<f64> {
        check_eps(eps)?;
        if grid_n < 2 {
            return Err(Error::Invalid(format!(
                "grid_n must be at least 2, got {grid_n}"
            )));
        }
        let mut pts: Vec<f64> = (0..grid_n)
            .map(|i| k.lo + k.width() * i as f64 / (grid_n - 1) as f64)
            .collect();
        pts.extend(self.layer_points(eps, k));
        pts.sort_by(f64::total_cmp);
        pts.dedup();

        let mut vals = Vec::with_capacity(pts.len());
        for &p in &pts {
            vals.push(self.eval(eps, p)?.abs());
        }
        let (mut best_i, mut best) = (0, vals[0]);
        for (i, &v) in vals.iter().enumerate() {
            if v > best {
                best_i = i;
                best = v;
            }
        }
        let mut best_x = pts[best_i];
        let mut lo = pts[best_i.saturating_sub(1)];
        let mut hi = pts[(best_i + 1).min(pts.len() - 1)];

        const REFINE_N: usize = 21;
        for _ in 0..200 {
            if hi - lo <= 4.0 * f64::EPSILON * (1.0 + best_x.abs()) {
                break;
            }
            let prev = best;
            let step = (hi - lo) / (REFINE_N - 1) as f64;
            let mut local_best_x = best_x;
            for i in 0..REFINE_N {
                let p = lo + step * i as f64;
                let v = self.eval(eps, p)?.abs();
                if v > best {
                    best = v;
                    local_best_x = p;
                }
            }
            best_x = local_best_x;
            lo = (best_x - step).max(k.lo);
            hi = (best_x + step).min(k.hi);
            let change = (best - prev).abs();
            if change <= 1e-10 * best.abs() && step < 1e-6 * k.width().max(f64::MIN_POSITIVE) {
                break;
            }
        }
        Ok(best)
    }
}

impl fmt::Display for EpsNet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}
