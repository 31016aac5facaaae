//! Immutable expression trees for smooth functions of `(ε, x)`.
//!
//! Trees are reference counted and shared freely between nets. Besides the
//! usual arithmetic and elementary functions there are two non-elementary
//! node kinds:
//!
//! * `BumpPoly`: `P(s) (1 - s²)^{-m} exp(-1 / (1 - s²))` on `|s| < 1` and `0`
//!   outside. The family is closed under differentiation, which is what lets
//!   compactly supported kernels live in the tree with exact derivatives.
//! * `Antideriv`: `∫_{lower}^{upper} p(t) dt` where `p` may mention the bound
//!   variable `t` as well as `x` and `ε`. Evaluation runs adaptive quadrature;
//!   when `p` mentions nothing but `t` the value depends only on the upper
//!   limit, and those values are cached per node.
//!
//! Scoping of `t` is lexical: inside an integrand `t` is that integral's own
//! variable; in an upper limit it refers to the enclosing scope.

use std::collections::HashMap;
use std::fmt;
use std::ops;
use std::sync::{Arc, RwLock};

use crate::quad::{self, QuadOptions};

const FREE_X: u8 = 1;
const FREE_EPS: u8 = 2;
const FREE_T: u8 = 4;

/// Absolute tolerance for the quadrature behind `Antideriv` nodes.
pub const ANTIDERIV_TOL: f64 = 1e-12;

const CACHE_CAPACITY: usize = 1 << 18;

#[derive(Debug, Default)]
struct QuadCache {
    values: RwLock<HashMap<u64, f64>>,
}

impl QuadCache {
    fn get(&self, key: u64) -> Option<f64> {
        self.values.read().ok()?.get(&key).copied()
    }

    fn insert(&self, key: u64, value: f64) {
        if let Ok(mut map) = self.values.write() {
            if map.len() >= CACHE_CAPACITY {
                map.clear();
            }
            map.insert(key, value);
        }
    }
}

#[derive(Debug)]
enum Kind {
    Const(f64),
    X,
    Eps,
    T,
    Add(SmoothExpr, SmoothExpr),
    Mul(SmoothExpr, SmoothExpr),
    Div(SmoothExpr, SmoothExpr),
    Powi(SmoothExpr, i32),
    Exp(SmoothExpr),
    Sin(SmoothExpr),
    Cos(SmoothExpr),
    Erf(SmoothExpr),
    BumpPoly {
        coeffs: Arc<[f64]>,
        pole: u32,
        arg: SmoothExpr,
    },
    Antideriv {
        integrand: SmoothExpr,
        lower: f64,
        upper: SmoothExpr,
        support: Option<(f64, f64)>,
        cache: Option<Arc<QuadCache>>,
    },
}

#[derive(Debug)]
struct Node {
    kind: Kind,
    free: u8,
}

/// A smooth function of `x` (and possibly `ε`), stored as a shared tree.
#[derive(Debug, Clone)]
pub struct SmoothExpr(Arc<Node>);

#[derive(Clone, Copy)]
struct Env {
    eps: f64,
    x: f64,
    t: f64,
}

impl SmoothExpr {
    fn from_kind(kind: Kind) -> Self {
        let free = match &kind {
            Kind::Const(_) => 0,
            Kind::X => FREE_X,
            Kind::Eps => FREE_EPS,
            Kind::T => FREE_T,
            Kind::Add(a, b) | Kind::Mul(a, b) | Kind::Div(a, b) => a.free() | b.free(),
            Kind::Powi(a, _) | Kind::Exp(a) | Kind::Sin(a) | Kind::Cos(a) | Kind::Erf(a) => {
                a.free()
            }
            Kind::BumpPoly { arg, .. } => arg.free(),
            Kind::Antideriv {
                integrand, upper, ..
            } => (integrand.free() & !FREE_T) | upper.free(),
        };
        SmoothExpr(Arc::new(Node { kind, free }))
    }

    fn free(&self) -> u8 {
        self.0.free
    }

    pub fn constant(c: f64) -> Self {
        Self::from_kind(Kind::Const(c))
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn one() -> Self {
        Self::constant(1.0)
    }

    /// The space variable.
    pub fn x() -> Self {
        Self::from_kind(Kind::X)
    }

    /// The regularization parameter.
    pub fn eps() -> Self {
        Self::from_kind(Kind::Eps)
    }

    /// The variable bound by the innermost enclosing [`SmoothExpr::antideriv`].
    pub fn t() -> Self {
        Self::from_kind(Kind::T)
    }

    /// Quotient; the caller guarantees the denominator never vanishes for `ε ∈ (0, 1]`.
    pub fn div(&self, denom: &SmoothExpr) -> Self {
        Self::from_kind(Kind::Div(self.clone(), denom.clone()))
    }

    pub fn powi(&self, n: i32) -> Self {
        Self::from_kind(Kind::Powi(self.clone(), n))
    }

    pub fn exp(&self) -> Self {
        Self::from_kind(Kind::Exp(self.clone()))
    }

    pub fn sin(&self) -> Self {
        Self::from_kind(Kind::Sin(self.clone()))
    }

    pub fn cos(&self) -> Self {
        Self::from_kind(Kind::Cos(self.clone()))
    }

    pub fn erf(&self) -> Self {
        Self::from_kind(Kind::Erf(self.clone()))
    }

    /// `P(s) (1 - s²)^{-pole} exp(-1/(1 - s²))` for `|s| < 1`, zero elsewhere,
    /// with `s = self` and `P` given by ascending coefficients.
    pub fn bump_poly(&self, coeffs: &[f64], pole: u32) -> Self {
        Self::from_kind(Kind::BumpPoly {
            coeffs: coeffs.into(),
            pole,
            arg: self.clone(),
        })
    }

    /// The standard bump `exp(-1/(1 - s²))` applied to `self`.
    pub fn bump(&self) -> Self {
        self.bump_poly(&[1.0], 0)
    }

    /// `∫_{lower}^{upper} integrand dt`, where `integrand` uses [`SmoothExpr::t`].
    ///
    /// `support`, when given, declares that the integrand vanishes for `t`
    /// outside that interval; quadrature is clipped to it.
    pub fn antideriv(
        integrand: &SmoothExpr,
        lower: f64,
        upper: &SmoothExpr,
        support: Option<(f64, f64)>,
    ) -> Self {
        let cache = (integrand.free() & !FREE_T == 0).then(|| Arc::new(QuadCache::default()));
        Self::from_kind(Kind::Antideriv {
            integrand: integrand.clone(),
            lower,
            upper: upper.clone(),
            support,
            cache,
        })
    }

    pub fn depends_on_x(&self) -> bool {
        self.free() & FREE_X != 0
    }

    pub fn depends_on_eps(&self) -> bool {
        self.free() & FREE_EPS != 0
    }

    pub fn has_free_t(&self) -> bool {
        self.free() & FREE_T != 0
    }

    pub fn as_constant(&self) -> Option<f64> {
        match self.0.kind {
            Kind::Const(c) => Some(c),
            _ => None,
        }
    }

    /// Number of nodes counted as a tree (shared subtrees counted repeatedly).
    pub fn size(&self) -> usize {
        1 + match &self.0.kind {
            Kind::Const(_) | Kind::X | Kind::Eps | Kind::T => 0,
            Kind::Add(a, b) | Kind::Mul(a, b) | Kind::Div(a, b) => a.size() + b.size(),
            Kind::Powi(a, _) | Kind::Exp(a) | Kind::Sin(a) | Kind::Cos(a) | Kind::Erf(a) => {
                a.size()
            }
            Kind::BumpPoly { arg, .. } => arg.size(),
            Kind::Antideriv {
                integrand, upper, ..
            } => integrand.size() + upper.size(),
        }
    }

    /// Evaluate at `(ε, x)`. An integral whose quadrature fails evaluates to NaN.
    pub fn eval(&self, eps: f64, x: f64) -> f64 {
        self.eval_env(&Env {
            eps,
            x,
            t: f64::NAN,
        })
    }

    /// Evaluate an expression that may mention the bound variable `t`.
    pub fn eval_with_t(&self, eps: f64, x: f64, t: f64) -> f64 {
        self.eval_env(&Env { eps, x, t })
    }

    fn eval_env(&self, env: &Env) -> f64 {
        match &self.0.kind {
            Kind::Const(c) => *c,
            Kind::X => env.x,
            Kind::Eps => env.eps,
            Kind::T => env.t,
            Kind::Add(a, b) => a.eval_env(env) + b.eval_env(env),
            Kind::Mul(a, b) => a.eval_env(env) * b.eval_env(env),
            Kind::Div(a, b) => a.eval_env(env) / b.eval_env(env),
            Kind::Powi(a, n) => a.eval_env(env).powi(*n),
            Kind::Exp(a) => a.eval_env(env).exp(),
            Kind::Sin(a) => a.eval_env(env).sin(),
            Kind::Cos(a) => a.eval_env(env).cos(),
            Kind::Erf(a) => libm::erf(a.eval_env(env)),
            Kind::BumpPoly { coeffs, pole, arg } => {
                bump_poly_value(coeffs, *pole, arg.eval_env(env))
            }
            Kind::Antideriv {
                integrand,
                lower,
                upper,
                support,
                cache,
            } => {
                let hi = upper.eval_env(env);
                if !hi.is_finite() {
                    return f64::NAN;
                }
                let (mut a, mut b, sign) = if *lower <= hi {
                    (*lower, hi, 1.0)
                } else {
                    (hi, *lower, -1.0)
                };
                if let Some((s0, s1)) = support {
                    a = a.max(*s0);
                    b = b.min(*s1);
                }
                if a >= b {
                    return 0.0;
                }
                let key = (sign, a, b);
                let compute = || {
                    let f = |t: f64| integrand.eval_env(&Env { t, ..*env });
                    match quad::integrate(f, a, b, &[], QuadOptions::with_abs_tol(ANTIDERIV_TOL)) {
                        Ok(r) => r.value,
                        Err(_) => f64::NAN,
                    }
                };
                match cache {
                    Some(cache) => {
                        // Only one of a, b moves with the upper limit; hash both.
                        let bits = key.1.to_bits().rotate_left(17) ^ key.2.to_bits();
                        let v = match cache.get(bits) {
                            Some(v) => v,
                            None => {
                                let v = compute();
                                cache.insert(bits, v);
                                v
                            }
                        };
                        sign * v
                    }
                    None => sign * compute(),
                }
            }
        }
    }

    /// Exact derivative with respect to `x`. `t` and `ε` are held fixed.
    pub fn derive(&self) -> SmoothExpr {
        if !self.depends_on_x() {
            return SmoothExpr::zero();
        }
        match &self.0.kind {
            Kind::Const(_) | Kind::Eps | Kind::T => SmoothExpr::zero(),
            Kind::X => SmoothExpr::one(),
            Kind::Add(a, b) => sum(&a.derive(), &b.derive()),
            Kind::Mul(a, b) => sum(&prod(&a.derive(), b), &prod(a, &b.derive())),
            Kind::Div(a, b) => {
                let num = sum(&prod(&a.derive(), b), &prod(&neg(a), &b.derive()));
                if is_zero(&num) {
                    num
                } else {
                    num.div(&b.powi(2))
                }
            }
            Kind::Powi(a, n) => match n {
                0 => SmoothExpr::zero(),
                1 => a.derive(),
                _ => prod(
                    &prod(&SmoothExpr::constant(*n as f64), &a.powi(n - 1)),
                    &a.derive(),
                ),
            },
            Kind::Exp(a) => prod(self, &a.derive()),
            Kind::Sin(a) => prod(&a.cos(), &a.derive()),
            Kind::Cos(a) => prod(&neg(&a.sin()), &a.derive()),
            Kind::Erf(a) => {
                let c = SmoothExpr::constant(2.0 / std::f64::consts::PI.sqrt());
                prod(&prod(&c, &neg(&a.powi(2)).exp()), &a.derive())
            }
            Kind::BumpPoly { coeffs, pole, arg } => {
                let dp = bump_poly_derivative(coeffs, *pole);
                prod(&arg.bump_poly(&dp, pole + 2), &arg.derive())
            }
            Kind::Antideriv {
                integrand,
                lower,
                upper,
                support,
                ..
            } => {
                let boundary = prod(&integrand.subst_t(upper), &upper.derive());
                let interior = if integrand.depends_on_x() {
                    SmoothExpr::antideriv(&integrand.derive(), *lower, upper, *support)
                } else {
                    SmoothExpr::zero()
                };
                sum(&boundary, &interior)
            }
        }
    }

    /// Replace `x` by `g`.
    ///
    /// # Panics
    /// If an integrand depends on `x` while `g` mentions `t`, which would
    /// capture the bound variable.
    pub fn subst_x(&self, g: &SmoothExpr) -> SmoothExpr {
        if !self.depends_on_x() {
            return self.clone();
        }
        self.map_children(
            &|e| e.subst_x(g),
            &|integrand| {
                if integrand.depends_on_x() {
                    assert!(
                        !g.has_free_t(),
                        "substitution would capture the integration variable"
                    );
                    integrand.subst_x(g)
                } else {
                    integrand.clone()
                }
            },
            Some((FREE_X, g)),
        )
    }

    /// Replace free occurrences of `t` by `g`. Integrands rebind `t` and are left alone.
    pub fn subst_t(&self, g: &SmoothExpr) -> SmoothExpr {
        if !self.has_free_t() {
            return self.clone();
        }
        self.map_children(
            &|e| e.subst_t(g),
            &|integrand| integrand.clone(),
            Some((FREE_T, g)),
        )
    }

    fn map_children(
        &self,
        f: &dyn Fn(&SmoothExpr) -> SmoothExpr,
        f_integrand: &dyn Fn(&SmoothExpr) -> SmoothExpr,
        leaf: Option<(u8, &SmoothExpr)>,
    ) -> SmoothExpr {
        let k = match &self.0.kind {
            Kind::X => {
                return match leaf {
                    Some((FREE_X, g)) => g.clone(),
                    _ => self.clone(),
                }
            }
            Kind::T => {
                return match leaf {
                    Some((FREE_T, g)) => g.clone(),
                    _ => self.clone(),
                }
            }
            Kind::Const(_) | Kind::Eps => return self.clone(),
            Kind::Add(a, b) => Kind::Add(f(a), f(b)),
            Kind::Mul(a, b) => Kind::Mul(f(a), f(b)),
            Kind::Div(a, b) => Kind::Div(f(a), f(b)),
            Kind::Powi(a, n) => Kind::Powi(f(a), *n),
            Kind::Exp(a) => Kind::Exp(f(a)),
            Kind::Sin(a) => Kind::Sin(f(a)),
            Kind::Cos(a) => Kind::Cos(f(a)),
            Kind::Erf(a) => Kind::Erf(f(a)),
            Kind::BumpPoly { coeffs, pole, arg } => Kind::BumpPoly {
                coeffs: coeffs.clone(),
                pole: *pole,
                arg: f(arg),
            },
            Kind::Antideriv {
                integrand,
                lower,
                upper,
                support,
                cache,
            } => {
                let new_integrand = f_integrand(integrand);
                // An untouched integrand keeps its cache: cached values depend
                // only on the integrand and the clipped limits.
                let cache = if Arc::ptr_eq(&new_integrand.0, &integrand.0) {
                    cache.clone()
                } else {
                    (new_integrand.free() & !FREE_T == 0).then(|| Arc::new(QuadCache::default()))
                };
                Kind::Antideriv {
                    integrand: new_integrand,
                    lower: *lower,
                    upper: f(upper),
                    support: *support,
                    cache,
                }
            }
        };
        SmoothExpr::from_kind(k)
    }
}

fn is_zero(e: &SmoothExpr) -> bool {
    e.as_constant() == Some(0.0)
}

fn is_one(e: &SmoothExpr) -> bool {
    e.as_constant() == Some(1.0)
}

// Builders used by `derive` so that structural zeros and ones do not pile up.
fn sum(a: &SmoothExpr, b: &SmoothExpr) -> SmoothExpr {
    if is_zero(a) {
        b.clone()
    } else if is_zero(b) {
        a.clone()
    } else {
        a + b
    }
}

fn prod(a: &SmoothExpr, b: &SmoothExpr) -> SmoothExpr {
    if is_zero(a) || is_zero(b) {
        SmoothExpr::zero()
    } else if is_one(a) {
        b.clone()
    } else if is_one(b) {
        a.clone()
    } else {
        a * b
    }
}

fn neg(a: &SmoothExpr) -> SmoothExpr {
    match a.as_constant() {
        Some(c) => SmoothExpr::constant(-c),
        None => &SmoothExpr::constant(-1.0) * a,
    }
}

fn horner(coeffs: &[f64], s: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * s + c)
}

fn bump_poly_value(coeffs: &[f64], pole: u32, s: f64) -> f64 {
    if !(s.abs() < 1.0) {
        return if s.is_nan() { f64::NAN } else { 0.0 };
    }
    let w = (1.0 - s) * (1.0 + s);
    let log_mag = -1.0 / w - pole as f64 * w.ln();
    horner(coeffs, s) * log_mag.exp()
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn poly_add(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len().max(b.len())];
    for (i, x) in a.iter().enumerate() {
        out[i] += x;
    }
    for (i, y) in b.iter().enumerate() {
        out[i] += y;
    }
    out
}

/// Coefficients `Q` with `d/ds [P w^{-m} b] = Q w^{-(m+2)} b`, `w = 1 - s²`.
fn bump_poly_derivative(p: &[f64], pole: u32) -> Vec<f64> {
    let dp: Vec<f64> = if p.len() > 1 {
        p.iter()
            .enumerate()
            .skip(1)
            .map(|(i, c)| i as f64 * c)
            .collect()
    } else {
        vec![0.0]
    };
    let w = [1.0, 0.0, -1.0];
    let term1 = poly_mul(&dp, &poly_mul(&w, &w));
    let term2 = poly_mul(&poly_mul(p, &w), &[0.0, 2.0 * pole as f64]);
    let term3 = poly_mul(p, &[0.0, -2.0]);
    poly_add(&poly_add(&term1, &term2), &term3)
}

impl PartialEq for SmoothExpr {
    fn eq(&self, other: &Self) -> bool {
        if Arc::ptr_eq(&self.0, &other.0) {
            return true;
        }
        match (&self.0.kind, &other.0.kind) {
            (Kind::Const(a), Kind::Const(b)) => a.to_bits() == b.to_bits(),
            (Kind::X, Kind::X) | (Kind::Eps, Kind::Eps) | (Kind::T, Kind::T) => true,
            (Kind::Add(a, b), Kind::Add(c, d))
            | (Kind::Mul(a, b), Kind::Mul(c, d))
            | (Kind::Div(a, b), Kind::Div(c, d)) => a == c && b == d,
            (Kind::Powi(a, n), Kind::Powi(b, m)) => n == m && a == b,
            (Kind::Exp(a), Kind::Exp(b))
            | (Kind::Sin(a), Kind::Sin(b))
            | (Kind::Cos(a), Kind::Cos(b))
            | (Kind::Erf(a), Kind::Erf(b)) => a == b,
            (
                Kind::BumpPoly { coeffs, pole, arg },
                Kind::BumpPoly {
                    coeffs: c2,
                    pole: p2,
                    arg: a2,
                },
            ) => pole == p2 && coeffs == c2 && arg == a2,
            (
                Kind::Antideriv {
                    integrand,
                    lower,
                    upper,
                    support,
                    ..
                },
                Kind::Antideriv {
                    integrand: i2,
                    lower: l2,
                    upper: u2,
                    support: s2,
                    ..
                },
            ) => lower.to_bits() == l2.to_bits() && support == s2 && integrand == i2 && upper == u2,
            _ => false,
        }
    }
}

impl fmt::Display for SmoothExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.0.kind {
            Kind::Const(c) => write!(f, "{c}"),
            Kind::X => write!(f, "x"),
            Kind::Eps => write!(f, "ε"),
            Kind::T => write!(f, "t"),
            Kind::Add(a, b) => write!(f, "({a} + {b})"),
            Kind::Mul(a, b) => write!(f, "({a} * {b})"),
            Kind::Div(a, b) => write!(f, "({a} / {b})"),
            Kind::Powi(a, n) => write!(f, "{a}^{n}"),
            Kind::Exp(a) => write!(f, "exp({a})"),
            Kind::Sin(a) => write!(f, "sin({a})"),
            Kind::Cos(a) => write!(f, "cos({a})"),
            Kind::Erf(a) => write!(f, "erf({a})"),
            Kind::BumpPoly { coeffs, pole, arg } => write!(f, "bump[{coeffs:?};{pole}]({arg})"),
            Kind::Antideriv {
                integrand,
                lower,
                upper,
                ..
            } => write!(f, "∫[{lower}, {upper}] {integrand} dt"),
        }
    }
}

macro_rules! binop {
    ($trait:ident, $method:ident, $kind:ident) => {
        impl ops::$trait<&SmoothExpr> for &SmoothExpr {
            type Output = SmoothExpr;
            fn $method(self, rhs: &SmoothExpr) -> SmoothExpr {
                SmoothExpr::from_kind(Kind::$kind(self.clone(), rhs.clone()))
            }
        }
        impl ops::$trait<SmoothExpr> for SmoothExpr {
            type Output = SmoothExpr;
            fn $method(self, rhs: SmoothExpr) -> SmoothExpr {
                SmoothExpr::from_kind(Kind::$kind(self, rhs))
            }
        }
    };
}

binop!(Add, add, Add);
binop!(Mul, mul, Mul);

impl ops::Neg for &SmoothExpr {
    type Output = SmoothExpr;
    fn neg(self) -> SmoothExpr {
        &SmoothExpr::constant(-1.0) * self
    }
}

impl ops::Neg for SmoothExpr {
    type Output = SmoothExpr;
    fn neg(self) -> SmoothExpr {
        -&self
    }
}

impl ops::Sub<&SmoothExpr> for &SmoothExpr {
    type Output = SmoothExpr;
    fn sub(self, rhs: &SmoothExpr) -> SmoothExpr {
        self + &(-rhs)
    }
}

impl ops::Sub<SmoothExpr> for SmoothExpr {
    type Output = SmoothExpr;
    fn sub(self, rhs: SmoothExpr) -> SmoothExpr {
        &self - &rhs
    }
}

impl From<f64> for SmoothExpr {
    fn from(c: f64) -> Self {
        SmoothExpr::constant(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd(e: &SmoothExpr, eps: f64, x: f64, h: f64) -> f64 {
        (e.eval(eps, x + h) - e.eval(eps, x - h)) / (2.0 * h)
    }

    #[test]
    fn elementary_derivatives_match_finite_differences() {
        let x = SmoothExpr::x();
        let e = SmoothExpr::eps();
        let exprs = vec![
            (&x * &x).sin(),
            (&x * &e).exp().div(&(&x.powi(2) + &SmoothExpr::one())),
            (&x.cos() + &x.erf()).powi(3),
            (&x * &SmoothExpr::constant(0.7)).bump(),
        ];
        for expr in exprs {
            let d = expr.derive();
            for &xv in &[-0.9, -0.3, 0.1, 0.55] {
                let exact = d.eval(0.3, xv);
                let approx = fd(&expr, 0.3, xv, 1e-5);
                assert!(
                    (exact - approx).abs() <= 1e-6 * (1.0 + exact.abs()),
                    "{expr}: {exact} vs {approx}"
                );
            }
        }
    }

    #[test]
    fn bump_poly_higher_derivatives() {
        let s = SmoothExpr::x();
        let mut e = s.bump_poly(&[1.0, 0.0, 2.0], 0);
        for _ in 0..3 {
            let d = e.derive();
            for &xv in &[-0.8, -0.2, 0.0, 0.45, 0.9] {
                let exact = d.eval(1.0, xv);
                let approx = fd(&e, 1.0, xv, 1e-6);
                assert!(
                    (exact - approx).abs() <= 1e-5 * (1.0 + exact.abs()),
                    "{exact} vs {approx} at {xv}"
                );
            }
            e = d;
        }
        assert_eq!(e.eval(1.0, 1.0), 0.0);
        assert_eq!(e.eval(1.0, -3.0), 0.0);
    }

    #[test]
    fn antideriv_derivative_is_stored_primitive() {
        let p = SmoothExpr::t().bump();
        let a = SmoothExpr::antideriv(&p, -1.0, &SmoothExpr::x(), Some((-1.0, 1.0)));
        let d = a.derive();
        assert_eq!(d, SmoothExpr::x().bump());
    }

    #[test]
    fn antideriv_matches_closed_form() {
        // ∫_0^x cos(t) dt = sin(x)
        let a = SmoothExpr::antideriv(&SmoothExpr::t().cos(), 0.0, &SmoothExpr::x(), None);
        for &xv in &[-2.0, -0.5, 0.0, 1.3, 3.0] {
            assert!((a.eval(1.0, xv) - xv.sin()).abs() < 1e-13);
        }
    }

    #[test]
    fn parametric_integrand_uses_leibniz_rule() {
        // F(x) = ∫_0^x sin(x t) dt, F'(x) = sin(x²) + ∫_0^x t cos(x t) dt
        let x = SmoothExpr::x();
        let t = SmoothExpr::t();
        let f = SmoothExpr::antideriv(&(&x * &t).sin(), 0.0, &x, None);
        let d = f.derive();
        for &xv in &[0.4, 1.1, 2.0] {
            let approx = fd(&f, 1.0, xv, 1e-5);
            assert!((d.eval(1.0, xv) - approx).abs() < 1e-7);
        }
    }

    #[test]
    fn substituting_x_keeps_cache_for_unchanged_integrand() {
        let p = SmoothExpr::t().bump();
        let a = SmoothExpr::antideriv(&p, -1.0, &SmoothExpr::x(), Some((-1.0, 1.0)));
        let scaled = a.subst_x(&SmoothExpr::x().div(&SmoothExpr::eps()));
        assert!((scaled.eval(0.5, 0.25) - a.eval(1.0, 0.5)).abs() == 0.0);
    }

    #[test]
    fn nested_integral_scoping() {
        // G(x) = ∫_0^x ∫_0^t 1 ds dt = x²/2
        let inner = SmoothExpr::antideriv(&SmoothExpr::one(), 0.0, &SmoothExpr::t(), None);
        let outer = SmoothExpr::antideriv(&inner, 0.0, &SmoothExpr::x(), None);
        assert!((outer.eval(1.0, 1.5) - 1.125).abs() < 1e-13);
        // G' = x
        let d = outer.derive();
        assert!((d.eval(1.0, 0.7) - 0.7).abs() < 1e-13);
    }

    #[test]
    fn constants_have_zero_derivative() {
        assert_eq!(SmoothExpr::constant(3.0).derive(), SmoothExpr::zero());
        assert_eq!(SmoothExpr::eps().powi(4).derive(), SmoothExpr::zero());
    }
}
