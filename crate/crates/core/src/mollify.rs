//! Mollifier kernels and the embedding of model distributions into ε-nets.
//!
//! Embeddings are convolutions with `ρ_ε(x) = ρ(x/ε)/ε`, written in closed
//! tree form wherever possible so that derivatives commute with embedding
//! exactly: `embed(H)' = embed(δ)` and `embed(δ^(m))' = embed(δ^(m+1))`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::epsnet::EpsNet;
use crate::error::{Error, Result};
use crate::expr::SmoothExpr;
use crate::quad::{self, QuadOptions};

/// Radius (in units of ε) beyond which the Gaussian kernel is treated as zero.
/// `2·Φ(-12) ≈ 3.6e-33`.
pub const GAUSSIAN_CUTOFF: f64 = 12.0;

const MOMENT_TOL: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MollifierKind {
    Gaussian,
    Bump,
    /// Polynomial times bump with moments `1..=q` vanishing.
    PolyMoment(usize),
}

impl fmt::Display for MollifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MollifierKind::Gaussian => write!(f, "gaussian"),
            MollifierKind::Bump => write!(f, "bump"),
            MollifierKind::PolyMoment(q) => write!(f, "poly{q}"),
        }
    }
}

impl std::str::FromStr for MollifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Self::Gaussian),
            "bump" => Ok(Self::Bump),
            _ => s
                .strip_prefix("poly")
                .and_then(|q| q.parse().ok())
                .map(Self::PolyMoment)
                .ok_or_else(|| Error::Invalid(format!("unknown mollifier kind '{s}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Mollifier {
    pub kind: MollifierKind,
    /// Moment order: `∫ y^k ρ = 0` for `1 ≤ k ≤ q`.
    pub q: usize,
    /// `None` for kernels without compact support.
    pub support_radius: Option<f64>,
    /// `ρ` as an expression in `x`.
    pub pdf: SmoothExpr,
    /// `∫_{-∞}^x ρ`.
    pub cdf: SmoothExpr,
}

/// Integral of `f` against the unnormalized bump on `[-1, 1]`.
fn bump_integral(f: impl Fn(f64) -> f64) -> f64 {
    let bump = SmoothExpr::x().bump();
    quad::integrate(
        |y| f(y) * bump.eval(1.0, y),
        -1.0,
        1.0,
        &[0.0],
        QuadOptions::with_abs_tol(MOMENT_TOL),
    )
    .expect("bump moments are smooth integrals")
    .value
}

/// Solve a small dense system by Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Polynomial coefficients (ascending, in `y`) for a kernel `P(y)·bump(y)` with
/// unit mass and vanishing moments `1..=q`.
pub fn poly_moment_coefficients(q: usize) -> Result<Vec<f64>> {
    let hankel: Vec<f64> = (0..=2 * q)
        .map(|k| {
            if k % 2 == 1 {
                0.0
            } else {
                bump_integral(|y| y.powi(k as i32))
            }
        })
        .collect();
    let a: Vec<Vec<f64>> = (0..=q)
        .map(|k| (0..=q).map(|j| hankel[k + j]).collect())
        .collect();
    let mut rhs = vec![0.0; q + 1];
    rhs[0] = 1.0;
    solve(a, rhs).ok_or(Error::Infeasible {
        order: 0,
        residual: f64::NAN,
    })
}

/// Build a mollifier and verify its mass and moment constraints by quadrature.
pub fn make_mollifier(kind: MollifierKind) -> Result<Mollifier> {
    let x = SmoothExpr::x();
    let m = match kind {
        MollifierKind::Gaussian => {
            let cdf = &SmoothExpr::constant(0.5)
                + &(&SmoothExpr::constant(0.5)
                    * &(&SmoothExpr::constant(FRAC_1_SQRT_2) * &x).erf());
            Mollifier {
                kind,
                q: 1,
                support_radius: None,
                pdf: cdf.derive(),
                cdf,
            }
        }
        MollifierKind::Bump | MollifierKind::PolyMoment(_) => {
            let (q, coeffs) = match kind {
                MollifierKind::PolyMoment(q) => (q, poly_moment_coefficients(q)?),
                _ => (1, vec![1.0 / bump_integral(|_| 1.0)]),
            };
            let pdf = x.bump_poly(&coeffs, 0);
            let cdf = SmoothExpr::antideriv(
                &SmoothExpr::t().bump_poly(&coeffs, 0),
                -1.0,
                &x,
                Some((-1.0, 1.0)),
            );
            Mollifier {
                kind,
                q,
                support_radius: Some(1.0),
                pdf,
                cdf,
            }
        }
    };
    m.verify()?;
    Ok(m)
}

impl Mollifier {
    pub fn gaussian() -> Self {
        make_mollifier(MollifierKind::Gaussian).expect("gaussian kernel is valid")
    }

    pub fn bump() -> Self {
        make_mollifier(MollifierKind::Bump).expect("bump kernel is valid")
    }

    /// Support radius used for quadrature: the true radius, or the Gaussian cutoff.
    pub fn effective_radius(&self) -> f64 {
        self.support_radius.unwrap_or(GAUSSIAN_CUTOFF)
    }

    pub fn density(&self, y: f64) -> f64 {
        self.pdf.eval(1.0, y)
    }

    /// `∫ y^k ρ(y) dy` by adaptive quadrature.
    pub fn moment(&self, k: u32) -> f64 {
        self.integrate_against(|y| y.powi(k as i32))
    }

    /// `∫ |y| ρ(y) dy`.
    pub fn abs_moment(&self) -> f64 {
        self.integrate_against(f64::abs)
    }

    fn integrate_against(&self, f: impl Fn(f64) -> f64) -> f64 {
        let r = self.effective_radius();
        quad::integrate(
            |y| f(y) * self.pdf.eval(1.0, y),
            -r,
            r,
            &[0.0],
            QuadOptions::with_abs_tol(MOMENT_TOL),
        )
        .map(|q| q.value)
        .unwrap_or(f64::NAN)
    }

    fn verify(&self) -> Result<()> {
        let mass = self.moment(0);
        if !((mass - 1.0).abs() <= 1e-10) {
            return Err(Error::Infeasible {
                order: 0,
                residual: mass - 1.0,
            });
        }
        for k in 1..=self.q {
            let mk = self.moment(k as u32);
            if !(mk.abs() <= 1e-9) {
                return Err(Error::Infeasible {
                    order: k,
                    residual: mk,
                });
            }
        }
        Ok(())
    }

    /// `ρ^{(m)}` as an expression in `x`.
    pub fn pdf_derivative(&self, m: u32) -> SmoothExpr {
        (0..m).fold(self.pdf.clone(), |e, _| e.derive())
    }

    /// The scaled argument `(x - center)/ε`.
    fn scaled_arg(center: f64) -> SmoothExpr {
        let x = SmoothExpr::x();
        let shifted = if center == 0.0 {
            x
        } else {
            &x + &SmoothExpr::constant(-center)
        };
        shifted.div(&SmoothExpr::eps())
    }
}

/// An `ε`-free smooth function of `x`, used as a regular distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothProfile(SmoothExpr);

impl SmoothProfile {
    pub fn new(expr: SmoothExpr) -> Result<Self> {
        if expr.depends_on_eps() || expr.has_free_t() {
            return Err(Error::Invalid(
                "a smooth profile must depend on x only".into(),
            ));
        }
        Ok(Self(expr))
    }

    pub fn expr(&self) -> &SmoothExpr {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DistributionModel {
    /// `δ^{(order)}` at `center`.
    Dirac {
        order: u32,
        center: f64,
    },
    Heaviside {
        center: f64,
    },
    Sign,
    AbsX,
    Smooth(SmoothProfile),
    FiniteSum(Vec<(f64, DistributionModel)>),
}

impl DistributionModel {
    pub fn dirac() -> Self {
        Self::Dirac {
            order: 0,
            center: 0.0,
        }
    }

    pub fn heaviside() -> Self {
        Self::Heaviside { center: 0.0 }
    }

    pub fn smooth(expr: SmoothExpr) -> Result<Self> {
        SmoothProfile::new(expr).map(Self::Smooth)
    }

    pub fn label(&self) -> String {
        match self {
            Self::Dirac { order: 0, center } if *center == 0.0 => "δ".into(),
            Self::Dirac { order, center } => format!("δ^({order})[{center}]"),
            Self::Heaviside { center } if *center == 0.0 => "H".into(),
            Self::Heaviside { center } => format!("H[{center}]"),
            Self::Sign => "sign".into(),
            Self::AbsX => "|x|".into(),
            Self::Smooth(p) => p.expr().to_string(),
            Self::FiniteSum(terms) => terms
                .iter()
                .map(|(c, d)| format!("{c}*{}", d.label()))
                .collect::<Vec<_>>()
                .join(" + "),
        }
    }
}

/// `u_ε = d * ρ_ε` as an ε-net.
pub fn embed(d: &DistributionModel, rho: &Mollifier) -> EpsNet {
    let radius = rho.effective_radius();
    let net = |expr: SmoothExpr, centers: &[f64], order: i32| {
        EpsNet::new(expr, d.label())
            .expect("embeddings bind every integration variable")
            .with_layer(centers, radius)
            .with_claimed_order(order)
    };
    match d {
        DistributionModel::Heaviside { center } => net(
            rho.cdf.subst_x(&Mollifier::scaled_arg(*center)),
            &[*center],
            0,
        ),
        DistributionModel::Dirac { order, center } => {
            let shape = rho
                .pdf_derivative(*order)
                .subst_x(&Mollifier::scaled_arg(*center));
            let scale = SmoothExpr::eps().powi(-(*order as i32 + 1));
            net(&shape * &scale, &[*center], *order as i32 + 1)
        }
        DistributionModel::Sign => net(sign_expr(rho), &[0.0], 0),
        DistributionModel::AbsX => {
            // |x| * ρ_ε = ε ∫|y|ρ + ∫_0^x sign_ε
            let integrand = sign_expr(rho).subst_x(&SmoothExpr::t());
            let at_zero = &SmoothExpr::constant(rho.abs_moment()) * &SmoothExpr::eps();
            let expr = &at_zero + &SmoothExpr::antideriv(&integrand, 0.0, &SmoothExpr::x(), None);
            net(expr, &[0.0], 0)
        }
        DistributionModel::Smooth(profile) => {
            // ∫ f(x - ε t) ρ(t) dt over the kernel support
            let shifted = &SmoothExpr::x() - &(&SmoothExpr::eps() * &SmoothExpr::t());
            let integrand = &profile.expr().subst_x(&shifted) * &rho.pdf.subst_x(&SmoothExpr::t());
            let expr = SmoothExpr::antideriv(
                &integrand,
                -radius,
                &SmoothExpr::constant(radius),
                Some((-radius, radius)),
            );
            net(expr, &[], 0)
        }
        DistributionModel::FiniteSum(terms) => {
            let mut acc = EpsNet::zero();
            for (i, (c, term)) in terms.iter().enumerate() {
                let scaled = embed(term, rho).scale(*c);
                acc = if i == 0 { scaled } else { acc.add(&scaled) };
            }
            acc.relabel(d.label())
        }
    }
}

fn sign_expr(rho: &Mollifier) -> SmoothExpr {
    let h = rho.cdf.subst_x(&Mollifier::scaled_arg(0.0));
    &(&SmoothExpr::constant(2.0) * &h) + &SmoothExpr::constant(-1.0)
}

/// `x ↦ ρ((x - x0)/ε)/ε`.
pub fn delta_net(rho: &Mollifier, x0: f64) -> EpsNet {
    embed(
        &DistributionModel::Dirac {
            order: 0,
            center: x0,
        },
        rho,
    )
}

/// Normalization of the standard bump `exp(-1/(1-y²))` on `[-1, 1]`.
pub fn bump_mass() -> f64 {
    bump_integral(|_| 1.0)
}

/// `1/√(2π)`, the Gaussian kernel's peak value.
pub fn gaussian_peak() -> f64 {
    1.0 / (2.0 * PI).sqrt()
}
