//! Closed-form results: the confluent hypergeometric series, oscillator and
//! Lotka–Volterra generating functions, truncated-LVM coefficient dynamics
//! and the cannibal stationary polynomial.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::linalg::{expm, LinalgError, Matrix};
use crate::solver::{ipow, MomentSet};

/// Term cap for the Φ series.
pub const PHI_MAX_TERMS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticError {
    #[error("Φ series needs c > 0, got c = {0}")]
    BadC(f64),
    #[error("Φ series did not converge in {PHI_MAX_TERMS} terms (x = {x}, c = {c})")]
    PhiNonConvergence { x: f64, c: f64 },
    #[error("parameter {name} must be {requirement}, got {value}")]
    BadParam {
        name: &'static str,
        requirement: &'static str,
        value: f64,
    },
    #[error("generating function has a pole: ϰ·{which} = {value} ≥ 1")]
    Pole { which: char, value: f64 },
    #[error("coefficient vector sums to {0}, not 1")]
    NotNormalized(f64),
    #[error("matrix is {rows}×{cols} but the coefficient vector has {len} entries")]
    Dimension { rows: usize, cols: usize, len: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

fn require(ok: bool, name: &'static str, requirement: &'static str, value: f64) -> Result<(), AnalyticError> {
    if ok {
        Ok(())
    } else {
        Err(AnalyticError::BadParam {
            name,
            requirement,
            value,
        })
    }
}

/// Kummer's `Φ(a, c, x) = Σ_k (a)_k x^k / ((c)_k k!)`.
///
/// Summed term by term until `|term| < 1e−16·|sum|`. All terms are positive
/// for `a, x > 0`, so there is no cancellation in the range used here.
pub fn phi(a: f64, c: f64, x: f64) -> Result<f64, AnalyticError> {
    if c.is_nan() || c <= 0.0 {
        return Err(AnalyticError::BadC(c));
    }
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 0..PHI_MAX_TERMS {
        let kf = k as f64;
        term *= (a + kf) * x / ((c + kf) * (kf + 1.0));
        sum += term;
        if term == 0.0 || libm::fabs(term) < 1e-16 * libm::fabs(sum) {
            return Ok(sum);
        }
    }
    Err(AnalyticError::PhiNonConvergence { x, c })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OscillatorGf {
    /// `Φ(1, μ, μ(1+u)) / Φ(1, μ, 2μ)`
    Exact,
    /// `e^{μ(u−1)} ((1+u)/2)^{1−μ}`
    LargeMu,
    /// `((2+u)(1+μ) + μ(1+u)²) / (3+7μ)`
    SmallMu,
}

/// Stationary generating function of the self-excited oscillator.
pub fn oscillator_gf(mu: f64, u: f64, variant: OscillatorGf) -> Result<f64, AnalyticError> {
    require(mu > 0.0 && mu.is_finite(), "mu", "positive and finite", mu)?;
    Ok(match variant {
        OscillatorGf::Exact => phi(1.0, mu, mu * (1.0 + u))? / phi(1.0, mu, 2.0 * mu)?,
        OscillatorGf::LargeMu => libm::exp(mu * (u - 1.0)) * libm::pow((1.0 + u) / 2.0, 1.0 - mu),
        OscillatorGf::SmallMu => ((2.0 + u) * (1.0 + mu) + mu * (1.0 + u) * (1.0 + u)) / (3.0 + 7.0 * mu),
    })
}

/// Mean and variance from the exact series, plus the two limiting forms.
#[derive(Debug, Clone, PartialEq)]
pub struct OscillatorMoments {
    pub exact: MomentSet,
    /// `((μ+1)/2, (3μ+1)/4)`
    pub large_mu: (f64, f64),
    /// `(1/3, 2/9)`
    pub small_mu: (f64, f64),
}

/// Uses `d/dx Φ(a,c,x) = (a/c) Φ(a+1,c+1,x)`: `n̄ = G′(1) = Φ(2,μ+1,2μ)/Φ(1,μ,2μ)`
/// and `G″(1) = 2μ/(μ+1) · Φ(3,μ+2,2μ)/Φ(1,μ,2μ)`.
pub fn oscillator_moments(mu: f64) -> Result<OscillatorMoments, AnalyticError> {
    require(mu > 0.0 && mu.is_finite(), "mu", "positive and finite", mu)?;
    let norm = phi(1.0, mu, 2.0 * mu)?;
    let mean = phi(2.0, mu + 1.0, 2.0 * mu)? / norm;
    let factorial2 = 2.0 * mu / (mu + 1.0) * phi(3.0, mu + 2.0, 2.0 * mu)? / norm;
    let variance = factorial2 + mean - mean * mean;
    Ok(OscillatorMoments {
        exact: MomentSet::single(mean, variance),
        large_mu: ((mu + 1.0) / 2.0, (3.0 * mu + 1.0) / 4.0),
        small_mu: (1.0 / 3.0, 2.0 / 9.0),
    })
}

fn special_kappa(l1: f64) -> Result<f64, AnalyticError> {
    require(l1 > 0.0 && l1.is_finite(), "l1", "positive and finite", l1)?;
    let s = l1 * l1;
    Ok(s / (1.0 + s))
}

/// Product-geometric stationary GF of the Lotka–Volterra model when
/// `λ2² = λ1² + 1`: `(1−ϰ)² / ((1−ϰu)(1−ϰv))`, `ϰ = λ1²/(1+λ1²)`.
pub fn lvm_special_gf(l1: f64, u: f64, v: f64) -> Result<f64, AnalyticError> {
    let k = special_kappa(l1)?;
    for (which, x) in [('u', u), ('v', v)] {
        if k * x >= 1.0 {
            return Err(AnalyticError::Pole { which, value: k * x });
        }
    }
    Ok((1.0 - k) * (1.0 - k) / ((1.0 - k * u) * (1.0 - k * v)))
}

/// Moments of the product-geometric state: both means `λ1²`, both variances
/// `λ1² + λ1⁴`, cross moment `λ1⁴`.
pub fn lvm_special_moments(l1: f64) -> Result<MomentSet, AnalyticError> {
    special_kappa(l1)?;
    let s = l1 * l1;
    let var = s + s * s;
    Ok(MomentSet::from_parts(
        vec![s, s],
        vec![vec![var + s * s, s * s], vec![s * s, var + s * s]],
    ))
}

/// Cannibal rates `a = 2λ2²` (gain of kin 1), `b = 2λ1²` on the manifold `n1 + n2 = N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CannibalParams {
    pub n: u64,
    pub a: f64,
    pub b: f64,
}

impl CannibalParams {
    pub fn new(n: u64, a: f64, b: f64) -> Result<Self, AnalyticError> {
        require(n >= 1, "N", "at least 1", n as f64)?;
        require(a > 0.0 && a.is_finite(), "a", "positive and finite", a)?;
        require(b > 0.0 && b.is_finite(), "b", "positive and finite", b)?;
        Ok(CannibalParams { n, a, b })
    }

    pub fn from_lambdas(n: u64, l1: f64, l2: f64) -> Result<Self, AnalyticError> {
        CannibalParams::new(n, 2.0 * l2 * l2, 2.0 * l1 * l1)
    }

    pub fn kappa(&self) -> f64 {
        self.a / self.b
    }
}

/// Homogeneous polynomial `Σ_j c_j u^{N−j} v^j` in two variables.
///
/// Entry `j` is the probability of `n1 = N − j`, `n2 = j`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialGF {
    coeffs: Vec<f64>,
}

impl PolynomialGF {
    pub fn from_coeffs(coeffs: Vec<f64>) -> Self {
        assert!(!coeffs.is_empty(), "degree-N polynomial has N+1 coefficients");
        PolynomialGF { coeffs }
    }

    /// Point mass at `n1 = k`.
    pub fn point(n: u64, k: u64) -> Self {
        assert!(k <= n);
        let mut c = vec![0.0; n as usize + 1];
        c[(n - k) as usize] = 1.0;
        PolynomialGF { coeffs: c }
    }

    pub fn degree(&self) -> u64 {
        self.coeffs.len() as u64 - 1
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Coefficient of `u^k v^{N−k}`, i.e. the probability of `n1 = k`.
    pub fn by_first_mode_count(&self, k: u64) -> f64 {
        let n = self.degree();
        if k > n {
            return 0.0;
        }
        self.coeffs[(n - k) as usize]
    }

    pub fn sum(&self) -> f64 {
        self.coeffs.iter().sum()
    }

    pub fn eval(&self, u: f64, v: f64) -> f64 {
        let n = self.degree();
        self.coeffs
            .iter()
            .enumerate()
            .map(|(j, c)| c * ipow(u, n - j as u64) * ipow(v, j as u64))
            .sum()
    }

    /// `(n̄1, n̄2)`.
    pub fn means(&self) -> (f64, f64) {
        let n = self.degree() as f64;
        let n2: f64 = self.coeffs.iter().enumerate().map(|(j, c)| j as f64 * c).sum();
        (n * self.sum() - n2, n2)
    }
}

/// Stationary state of the cannibal model: `P(n1 = k) ∝ a^k b^{N−k}`, built
/// from powers of `κ = a/b` (or of `1/κ` when `κ > 1`) so nothing overflows.
pub fn cannibal_stationary(params: CannibalParams) -> PolynomialGF {
    let n = params.n as usize;
    let kappa = params.kappa();
    let mut by_k = vec![0.0; n + 1];
    if kappa <= 1.0 {
        let mut w = 1.0;
        for slot in by_k.iter_mut() {
            *slot = w;
            w *= kappa;
        }
    } else {
        let inv = 1.0 / kappa;
        let mut w = 1.0;
        for slot in by_k.iter_mut().rev() {
            *slot = w;
            w *= inv;
        }
    }
    let total: f64 = by_k.iter().sum();
    PolynomialGF {
        coeffs: by_k.into_iter().rev().map(|w| w / total).collect(),
    }
}

/// `n̄1 / n̄2` for the cannibal stationary state in closed form,
/// `(κ + κ²h) / (N − κh)` with `h = ∂ ln f_N/∂κ`,
/// `f_N = (1−κ^N)/(1−κ)`.
///
/// `κ = 1` returns the symmetric limit 1. For `κ > 1` the kin labels are
/// swapped, `ratio(N, κ) = 1 / ratio(N, 1/κ)`.
pub fn cannibal_ratio(n: u64, kappa: f64) -> Result<f64, AnalyticError> {
    require(n >= 1, "N", "at least 1", n as f64)?;
    require(kappa > 0.0 && kappa.is_finite(), "kappa", "positive and finite", kappa)?;
    if kappa == 1.0 {
        return Ok(1.0);
    }
    if kappa > 1.0 {
        return Ok(1.0 / cannibal_ratio(n, 1.0 / kappa)?);
    }
    let nf = n as f64;
    let kn = libm::pow(kappa, nf);
    let kn1 = libm::pow(kappa, nf - 1.0);
    let h = ((nf - 1.0) * kn - nf * kn1 + 1.0) / ((1.0 - kappa) * (1.0 - kn));
    Ok((kappa + kappa * kappa * h) / (nf - kappa * h))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TruncatedLvmVariant {
    /// `∂G/∂t = (v−u) ∂²(vG)/∂u∂v`
    Bosonic,
    /// `∂G/∂t = (v−u) v ∂²G/∂u∂v`
    MassAction,
}

/// Matrix `L` of `dA/dt = L A` for `G = Σ_j A_j u^{N−j} v^j`, obtained by
/// applying the differential operator to each monomial.
///
/// On `u^k v^m` both operators give `r (u^{k−1} v^{m+1} − u^k v^m)` with
/// `r = k(m+1)` (bosonic) or `r = k·m` (mass action).
pub fn truncated_lvm_generator(n: u64, variant: TruncatedLvmVariant) -> Matrix {
    let size = n as usize + 1;
    let mut l = Matrix::zeros(size, size);
    for j in 0..size {
        let k = (n as usize - j) as f64;
        let m = j as f64;
        let r = match variant {
            TruncatedLvmVariant::Bosonic => k * (m + 1.0),
            TruncatedLvmVariant::MassAction => k * m,
        };
        if r != 0.0 {
            l[(j, j)] -= r;
            l[(j + 1, j)] += r;
        }
    }
    l
}

/// `A(t) = exp(L t) A0`.
pub fn evolve_coefficients(l: &Matrix, a0: &PolynomialGF, t: f64) -> Result<PolynomialGF, AnalyticError> {
    require(t >= 0.0 && t.is_finite(), "t", "finite and non-negative", t)?;
    if l.rows() != l.cols() || l.cols() != a0.coeffs.len() {
        return Err(AnalyticError::Dimension {
            rows: l.rows(),
            cols: l.cols(),
            len: a0.coeffs.len(),
        });
    }
    let s = a0.sum();
    if (s - 1.0).abs() > 1e-10 {
        return Err(AnalyticError::NotNormalized(s));
    }
    if t == 0.0 {
        return Ok(a0.clone());
    }
    let e = expm(&l.scaled(t))?;
    Ok(PolynomialGF {
        coeffs: e.matvec(&a0.coeffs),
    })
}
