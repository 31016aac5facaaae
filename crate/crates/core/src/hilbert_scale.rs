//! A weighted Fourier scale on the torus `[0, 2π)`.
//!
//! Level `n` carries the norm `‖u‖ₙ² = Σ_k e^{2aₙ|k|} |c_k|²` with
//! `aₙ = a₀ 2^{-n}`, so the levels increase as `n` grows. With
//! `dₙ = aₙ - aₙ₊₁` the inclusion `Hₙ → Hₙ₊₁` is diagonal in the Fourier basis
//! with singular values `e^{-dₙ|k|}`: it is nuclear with trace `coth(dₙ/2)`.
//! Products and derivatives map `Hₙ` into `Hₙ₊₁` with explicit constants.
//!
//! Elements are truncated to `|k| ≤ K`.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mollify::DistributionModel;
use crate::pairing::TestFunction;
use crate::quad::{self, QuadOptions};

/// Tail bound required of truncated nuclear sums.
pub const NUCLEAR_TAIL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScaleParams {
    pub a0: f64,
    pub levels: usize,
    /// Largest retained `|k|`.
    pub truncation: usize,
}

impl Default for ScaleParams {
    fn default() -> Self {
        Self {
            a0: 1.0,
            levels: 4,
            truncation: 256,
        }
    }
}

impl ScaleParams {
    pub fn new(a0: f64, levels: usize, truncation: usize) -> Result<Self> {
        if !(a0 > 0.0 && a0.is_finite()) {
            return Err(Error::Invalid(format!("a0 must be positive, got {a0}")));
        }
        if levels < 3 {
            return Err(Error::Invalid(format!(
                "need at least 3 levels, got {levels}"
            )));
        }
        if truncation == 0 {
            return Err(Error::Invalid("truncation must be positive".into()));
        }
        Ok(Self {
            a0,
            levels,
            truncation,
        })
    }

    /// `aₙ`.
    pub fn weight(&self, n: usize) -> f64 {
        self.a0 * 0.5f64.powi(n as i32)
    }

    /// `dₙ = aₙ - aₙ₊₁`.
    pub fn gap(&self, n: usize) -> f64 {
        self.weight(n) - self.weight(n + 1)
    }

    fn check_level(&self, n: usize) -> Result<()> {
        if n < self.levels {
            Ok(())
        } else {
            Err(Error::LevelOutOfRange {
                level: n,
                levels: self.levels,
            })
        }
    }

    /// Levels `n` and `n + 1` must both exist.
    fn check_step(&self, n: usize) -> Result<()> {
        self.check_level(n)?;
        self.check_level(n + 1)
    }
}

/// Fourier coefficients `c_k`, `|k| ≤ K`, of `u(x) = Σ c_k e^{ikx}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralElement {
    coeffs: Vec<Complex64>,
    real: bool,
}

impl SpectralElement {
    pub fn zeros(truncation: usize) -> Self {
        Self {
            coeffs: vec![Complex64::new(0.0, 0.0); 2 * truncation + 1],
            real: true,
        }
    }

    pub fn constant(c: f64, truncation: usize) -> Self {
        let mut u = Self::zeros(truncation);
        u.coeffs[truncation] = Complex64::new(c, 0.0);
        u
    }

    /// `e_k(x) = e^{ikx}`.
    pub fn basis(k: i64, truncation: usize) -> Result<Self> {
        if k.unsigned_abs() as usize > truncation {
            return Err(Error::Invalid(format!(
                "mode {k} exceeds truncation {truncation}"
            )));
        }
        let mut u = Self::zeros(truncation);
        u.real = k == 0;
        u.coeffs[(k + truncation as i64) as usize] = Complex64::new(1.0, 0.0);
        Ok(u)
    }

    /// Coefficients ordered `k = -K..=K`. With `real`, conjugate symmetry is checked.
    pub fn from_coeffs(coeffs: Vec<Complex64>, real: bool) -> Result<Self> {
        if coeffs.len() % 2 == 0 {
            return Err(Error::Invalid(
                "coefficient vector must have odd length 2K+1".into(),
            ));
        }
        let u = Self { coeffs, real };
        if real {
            let k = u.truncation() as i64;
            for j in 0..=k {
                let d = u.coeff(j) - u.coeff(-j).conj();
                if d.norm() > 1e-14 * (1.0 + u.coeff(j).norm()) {
                    return Err(Error::Invalid(format!(
                        "real element is not conjugate symmetric at k = {j}"
                    )));
                }
            }
        }
        Ok(u)
    }

    pub fn truncation(&self) -> usize {
        self.coeffs.len() / 2
    }

    pub fn is_real(&self) -> bool {
        self.real
    }

    pub fn coeff(&self, k: i64) -> Complex64 {
        let kk = self.truncation() as i64;
        if k.abs() > kk {
            Complex64::new(0.0, 0.0)
        } else {
            self.coeffs[(k + kk) as usize]
        }
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// `(k, c_k)` in increasing `k`.
    pub fn modes(&self) -> impl Iterator<Item = (i64, Complex64)> + '_ {
        let kk = self.truncation() as i64;
        self.coeffs
            .iter()
            .enumerate()
            .map(move |(i, c)| (i as i64 - kk, *c))
    }

    fn zip_with(
        &self,
        other: &Self,
        f: impl Fn(Complex64, Complex64) -> Complex64,
    ) -> Result<Self> {
        if self.truncation() != other.truncation() {
            return Err(Error::Invalid("elements have different truncations".into()));
        }
        Ok(Self {
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| f(*a, *b))
                .collect(),
            real: self.real && other.real,
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
            real: self.real,
        }
    }

    /// Keep only the modes `|k| < m`.
    pub fn project(&self, m: usize) -> Self {
        let kk = self.truncation() as i64;
        Self {
            coeffs: self
                .coeffs
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    if (i as i64 - kk).unsigned_abs() < m as u64 {
                        *c
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                })
                .collect(),
            real: self.real,
        }
    }

    /// Point value `Σ c_k e^{ikx}`.
    pub fn eval(&self, x: f64) -> Complex64 {
        self.modes()
            .map(|(k, c)| c * Complex64::from_polar(1.0, k as f64 * x))
            .sum()
    }
}

/// `‖u‖` with weight `e^{a|k|}`, computed in log space to avoid overflow.
fn weighted_norm(u: &SpectralElement, a: f64) -> f64 {
    u.modes()
        .filter(|(_, c)| c.norm() > 0.0)
        .map(|(k, c)| (2.0 * (c.norm().ln() + a * k.unsigned_abs() as f64)).exp())
        .fold(0.0, |s, v| s + v)
        .sqrt()
}

/// `‖u‖ₙ`.
pub fn norm(params: &ScaleParams, u: &SpectralElement, n: usize) -> Result<f64> {
    params.check_level(n)?;
    Ok(weighted_norm(u, params.weight(n)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NuclearSum {
    pub gap: f64,
    /// `Σ_{|k| ≤ terms} e^{-d|k|}`.
    pub truncated: f64,
    pub terms: usize,
    /// Bound on the omitted tail.
    pub tail_bound: f64,
    /// `coth(d/2)`.
    pub closed_form: f64,
}

/// `Σ_{k∈ℤ} e^{-d|k|}` truncated once the analytic tail `2e^{-d(M+1)}/(1-e^{-d})` drops below `1e-12`.
pub fn nuclear_sum(d: f64) -> Result<NuclearSum> {
    if !(d > 0.0 && d.is_finite()) {
        return Err(Error::Invalid(format!("gap must be positive, got {d}")));
    }
    let tail = |m: usize| 2.0 * (-d * (m as f64 + 1.0)).exp() / (-(-d).exp_m1());
    let mut terms = 0;
    while tail(terms) >= NUCLEAR_TAIL_TOL {
        terms += 1;
    }
    // Add the smallest terms first.
    let mut truncated = 0.0;
    for k in (1..=terms).rev() {
        truncated += 2.0 * (-d * k as f64).exp();
    }
    truncated += 1.0;
    Ok(NuclearSum {
        gap: d,
        truncated,
        terms,
        tail_bound: tail(terms),
        closed_form: 1.0 / (0.5 * d).tanh(),
    })
}

/// Nuclear norm (sum of singular values) of the inclusion `Hₙ → Hₙ₊₁`.
pub fn nuclear_norm_inclusion(params: &ScaleParams, n: usize) -> Result<NuclearSum> {
    params.check_step(n)?;
    nuclear_sum(params.gap(n))
}

/// The leading `count` singular values of `Hₙ → Hₙ₊₁`, in nonincreasing order.
pub fn inclusion_singular_values(params: &ScaleParams, n: usize, count: usize) -> Result<Vec<f64>> {
    params.check_step(n)?;
    let d = params.gap(n);
    // Modes ordered 0, 1, -1, 2, -2, ...
    Ok((0..count)
        .map(|i| (-d * i.div_ceil(2) as f64).exp())
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Product {
    pub element: SpectralElement,
    /// `ℓ²` norm of the convolution modes discarded by truncation.
    pub tail_l2: f64,
}

/// Pointwise product: coefficient convolution truncated to `|k| ≤ K`.
pub fn product(u: &SpectralElement, v: &SpectralElement) -> Result<Product> {
    let kk = u.truncation();
    if v.truncation() != kk {
        return Err(Error::Invalid("elements have different truncations".into()));
    }
    let k = kk as i64;
    let mut full = vec![Complex64::new(0.0, 0.0); 4 * kk + 1];
    let nz_u: Vec<(i64, Complex64)> = u.modes().filter(|(_, c)| c.norm() > 0.0).collect();
    let nz_v: Vec<(i64, Complex64)> = v.modes().filter(|(_, c)| c.norm() > 0.0).collect();
    for &(i, a) in &nz_u {
        for &(j, b) in &nz_v {
            full[(i + j + 2 * k) as usize] += a * b;
        }
    }
    let tail_l2 = full
        .iter()
        .enumerate()
        .filter(|(idx, _)| (*idx as i64 - 2 * k).abs() > k)
        .map(|(_, c)| c.norm_sqr())
        .sum::<f64>()
        .sqrt();
    let coeffs = full[kk..=3 * kk].to_vec();
    Ok(Product {
        element: SpectralElement {
            coeffs,
            real: u.real && v.real,
        },
        tail_l2,
    })
}

/// `sqrt(coth(dₙ))`: `‖uv‖ₙ₊₁ ≤ C ‖u‖ₙ ‖v‖ₙ` (weighted Young inequality).
pub fn product_bound_constant(params: &ScaleParams, n: usize) -> Result<f64> {
    params.check_step(n)?;
    Ok((1.0 / params.gap(n).tanh()).sqrt())
}

/// `c_k ↦ ik c_k`.
pub fn derivative(u: &SpectralElement) -> SpectralElement {
    SpectralElement {
        coeffs: u
            .modes()
            .map(|(k, c)| c * Complex64::new(0.0, k as f64))
            .collect(),
        real: u.real,
    }
}

/// `max_{|k| ≤ K} |k| e^{-dₙ|k|}` and a maximizing `k ≥ 0`.
pub fn derivative_bound(params: &ScaleParams, n: usize) -> Result<(f64, usize)> {
    params.check_step(n)?;
    let d = params.gap(n);
    let g = |k: usize| k as f64 * (-d * k as f64).exp();
    let peak = (1.0 / d).floor() as usize;
    let best = [peak, peak + 1]
        .into_iter()
        .map(|k| k.min(params.truncation))
        .max_by(|a, b| g(*a).total_cmp(&g(*b)))
        .expect("two candidates");
    Ok((g(best), best))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScaleNormReport {
    pub level: usize,
    pub value: f64,
    pub bound: f64,
    /// `bound - value`.
    pub margin: f64,
}

pub fn check_product(
    params: &ScaleParams,
    u: &SpectralElement,
    v: &SpectralElement,
    n: usize,
) -> Result<ScaleNormReport> {
    let c = product_bound_constant(params, n)?;
    let bound = c * norm(params, u, n)? * norm(params, v, n)?;
    let value = norm(params, &product(u, v)?.element, n + 1)?;
    Ok(ScaleNormReport {
        level: n + 1,
        value,
        bound,
        margin: bound - value,
    })
}

pub fn check_derivative(
    params: &ScaleParams,
    u: &SpectralElement,
    n: usize,
) -> Result<ScaleNormReport> {
    let (c, _) = derivative_bound(params, n)?;
    let bound = c * norm(params, u, n)?;
    let value = norm(params, &derivative(u), n + 1)?;
    Ok(ScaleNormReport {
        level: n + 1,
        value,
        bound,
        margin: bound - value,
    })
}

/// Smallest `m` with `e^{-dₙ m} ≤ δ`: keeping the modes `|k| < m` approximates
/// the inclusion `Hₙ → Hₙ₊₁` within `δ` in operator norm.
pub fn compact_rank(params: &ScaleParams, n: usize, delta: f64) -> Result<usize> {
    params.check_step(n)?;
    if !(delta > 0.0) {
        return Err(Error::Invalid(format!("δ must be positive, got {delta}")));
    }
    let d = params.gap(n);
    let residual = |m: usize| (-d * m as f64).exp();
    let mut m = ((-delta.ln() / d).floor().max(1.0) as usize).saturating_sub(1);
    while residual(m) > delta {
        m += 1;
    }
    while m > 0 && residual(m - 1) <= delta {
        m -= 1;
    }
    Ok(m)
}

/// Operator-norm error of the rank cut at `m` for the inclusion at level `n`.
pub fn projection_error_bound(params: &ScaleParams, n: usize, m: usize) -> Result<f64> {
    params.check_step(n)?;
    Ok((-params.gap(n) * m as f64).exp())
}

/// Fourier coefficient of the `2π`-periodization of `d`.
fn model_coefficient(d: &DistributionModel, k: i64) -> Complex64 {
    let kf = k as f64;
    let i = Complex64::new(0.0, 1.0);
    let shift = |x0: f64| Complex64::from_polar(1.0, -kf * x0);
    let odd = |k: i64| if k % 2 != 0 { 1.0 } else { 0.0 };
    match d {
        DistributionModel::Dirac { order, center } => (i * kf).powu(*order) * shift(*center) / TAU,
        DistributionModel::Heaviside { center } => {
            if k == 0 {
                Complex64::new(0.5, 0.0)
            } else {
                shift(*center) * 2.0 * odd(k) / (TAU * i * kf)
            }
        }
        DistributionModel::Sign => {
            if k == 0 {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(2.0 * odd(k), 0.0) / (PI * i * kf)
            }
        }
        DistributionModel::AbsX => {
            if k == 0 {
                Complex64::new(PI / 2.0, 0.0)
            } else {
                Complex64::new(-2.0 * odd(k) / (PI * kf * kf), 0.0)
            }
        }
        DistributionModel::Smooth(_) | DistributionModel::FiniteSum(_) => {
            unreachable!("handled by mollified_embed")
        }
    }
}

/// DFT coefficients of a smooth periodic profile, with roundoff-level modes dropped.
fn smooth_coefficients(f: &crate::expr::SmoothExpr, truncation: usize) -> Vec<Complex64> {
    let n = 4 * truncation + 4;
    let samples: Vec<f64> = (0..n)
        .map(|j| f.eval(1.0, TAU * j as f64 / n as f64))
        .collect();
    let twiddle: Vec<Complex64> = (0..n)
        .map(|j| Complex64::from_polar(1.0, -TAU * j as f64 / n as f64))
        .collect();
    let k = truncation as i64;
    let mut out: Vec<Complex64> = (-k..=k)
        .map(|kk| {
            let step = kk.rem_euclid(n as i64) as usize;
            samples
                .iter()
                .enumerate()
                .map(|(j, s)| twiddle[(j * step) % n] * *s)
                .sum::<Complex64>()
                / n as f64
        })
        .collect();
    let peak = out.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let floor = 64.0 * f64::EPSILON * peak;
    for c in &mut out {
        if c.norm() <= floor {
            *c = Complex64::new(0.0, 0.0);
        }
    }
    // Enforce exact conjugate symmetry for real profiles.
    for j in 1..=truncation {
        let avg = 0.5 * (out[truncation + j] + out[truncation - j].conj());
        out[truncation + j] = avg;
        out[truncation - j] = avg.conj();
    }
    out[truncation].im = 0.0;
    out
}

/// Periodized `d` convolved with a Gaussian of width `ε`: `c_k = d̂(k) e^{-(εk)²/2}`.
pub fn mollified_embed(
    params: &ScaleParams,
    d: &DistributionModel,
    eps: f64,
) -> Result<SpectralElement> {
    crate::epsnet::check_eps(eps)?;
    let kk = params.truncation;
    let raw: Vec<Complex64> = match d {
        DistributionModel::Smooth(p) => smooth_coefficients(p.expr(), kk),
        DistributionModel::FiniteSum(terms) => {
            let mut acc = vec![Complex64::new(0.0, 0.0); 2 * kk + 1];
            for (c, term) in terms {
                let e = mollified_embed(params, term, 1.0)?;
                // Undo the damping applied at ε = 1 before re-damping below.
                for (slot, (k, v)) in acc.iter_mut().zip(e.modes()) {
                    if v.norm() > 0.0 {
                        *slot += v * *c * (0.5 * (k as f64).powi(2)).exp();
                    }
                }
            }
            acc
        }
        _ => (-(kk as i64)..=kk as i64)
            .map(|k| model_coefficient(d, k))
            .collect(),
    };
    let coeffs = raw
        .into_iter()
        .enumerate()
        .map(|(i, c)| {
            let k = i as f64 - kk as f64;
            c * (-0.5 * (eps * k).powi(2)).exp()
        })
        .collect();
    Ok(SpectralElement { coeffs, real: true })
}

/// `‖mollified sin(mx)‖ₙ` for `m = 1..=m_max`.
pub fn weak_strong_demo(
    params: &ScaleParams,
    m_max: usize,
    n: usize,
    eps: f64,
) -> Result<Vec<(usize, f64)>> {
    params.check_level(n)?;
    (1..=m_max)
        .map(|m| {
            let expr = (&crate::expr::SmoothExpr::constant(m as f64)
                * &crate::expr::SmoothExpr::x())
                .sin();
            let u = mollified_embed(params, &DistributionModel::smooth(expr)?, eps)?;
            Ok((m, norm(params, &u, n)?))
        })
        .collect()
}

/// A test function on the torus.
#[derive(Debug, Clone)]
pub enum TorusTest {
    Constant(f64),
    /// Compactly supported inside `[0, 2π]`.
    Compact(TestFunction),
}

impl TorusTest {
    pub fn compact(psi: TestFunction) -> Result<Self> {
        if psi.support.lo < 0.0 || psi.support.hi > TAU {
            return Err(Error::Invalid(format!(
                "support {} is not inside [0, 2π]",
                psi.support
            )));
        }
        Ok(Self::Compact(psi))
    }

    fn range(&self) -> (f64, f64) {
        match self {
            TorusTest::Constant(_) => (0.0, TAU),
            TorusTest::Compact(p) => (p.support.lo, p.support.hi),
        }
    }

    fn value(&self, x: f64) -> f64 {
        match self {
            TorusTest::Constant(c) => *c,
            TorusTest::Compact(p) => p.value(x),
        }
    }

    pub fn label(&self) -> String {
        match self {
            TorusTest::Constant(c) => format!("const[{c}]"),
            TorusTest::Compact(p) => p.label.clone(),
        }
    }

    /// `∫_0^{2π} ψ(x) g(x) dx`.
    pub fn pair_with(&self, g: impl Fn(f64) -> f64) -> Result<f64> {
        let (a, b) = self.range();
        quad::integrate(
            |x| self.value(x) * g(x),
            a,
            b,
            &[],
            QuadOptions::with_abs_tol(1e-12),
        )
        .map(|r| r.value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeakProductRow {
    pub m: usize,
    /// `⟨sin(mx), ψ⟩`.
    pub linear: f64,
    /// `⟨sin²(mx), ψ⟩`.
    pub quadratic: f64,
    /// `½ ∫ψ`, the weak limit of the quadratic column.
    pub half_mass: f64,
}

pub fn weak_product_counterexample(
    m_list: &[usize],
    psi: &TorusTest,
) -> Result<Vec<WeakProductRow>> {
    let half_mass = 0.5 * psi.pair_with(|_| 1.0)?;
    m_list
        .iter()
        .map(|&m| {
            let mf = m as f64;
            Ok(WeakProductRow {
                m,
                linear: psi.pair_with(|x| (mf * x).sin())?,
                quadratic: psi.pair_with(|x| (mf * x).sin().powi(2))?,
                half_mass,
            })
        })
        .collect()
}

/// Random element with unit `‖·‖ₙ`: random bandwidth, random extra decay, conjugate symmetric when `real`.
pub fn random_element<R: Rng>(
    params: &ScaleParams,
    n: usize,
    real: bool,
    rng: &mut R,
) -> Result<SpectralElement> {
    params.check_level(n)?;
    let kk = params.truncation;
    let a = params.weight(n);
    let bandwidth = rng.gen_range(0..=kk) as i64;
    let extra = rng.gen_range(0.02..1.0);
    let mut u = SpectralElement::zeros(kk);
    u.real = real;
    let draw = |k: i64, rng: &mut R| {
        let amp = (-(a + extra) * k.abs() as f64).exp();
        Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * amp
    };
    for k in -bandwidth..=bandwidth {
        if real && k < 0 {
            continue;
        }
        let mut c = draw(k, rng);
        if real && k == 0 {
            c.im = 0.0;
        }
        u.coeffs[(k + kk as i64) as usize] = c;
        if real && k > 0 {
            u.coeffs[(kk as i64 - k) as usize] = c.conj();
        }
    }
    let nu = weighted_norm(&u, a);
    if nu == 0.0 {
        return Ok(SpectralElement::constant(1.0, kk));
    }
    Ok(u.scale(1.0 / nu))
}
