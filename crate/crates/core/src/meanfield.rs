//! Deterministic layer: mean-field drift read off the jump operators, an
//! adaptive Dormand–Prince integrator, and the complex-form decomposition
//! check `dz_i/dt = −i ∂H/∂z_i* + Σ_α (R̄_α ∂R_α/∂z_i* − R_α ∂R̄_α/∂z_i*)`.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use thiserror::Error;

use crate::cme::displacement;
use crate::model::{Builtin, FactorKind, ModelSpec};

pub const RTOL: f64 = 1e-9;
pub const ATOL: f64 = 1e-12;
/// Any component above this magnitude aborts integration.
pub const BLOW_UP: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MeanFieldError {
    #[error("time must be finite and non-negative, got {0}")]
    BadTime(f64),
    #[error("initial state has {got} components, model has {expected} modes")]
    Length { expected: usize, got: usize },
    #[error("initial occupations must be finite and non-negative")]
    BadInit,
    #[error("solution exceeded {BLOW_UP:e} at t = {t}")]
    BlowUp { t: f64 },
    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },
    #[error("need at least one sample interval")]
    NoSamples,
}

/// `coeff · Π_j n_j^{exponents[j]}`
#[derive(Debug, Clone, PartialEq)]
pub struct DriftTerm {
    pub coeff: f64,
    pub exponents: Vec<u32>,
}

/// Right-hand side of one mode's mean-field equation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DriftPolynomial {
    pub terms: Vec<DriftTerm>,
}

impl DriftPolynomial {
    pub fn eval(&self, n: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                t.coeff
                    * t.exponents
                        .iter()
                        .zip(n)
                        .map(|(&e, &x)| libm::pow(x, e as f64))
                        .product::<f64>()
            })
            .sum()
    }

    fn add(&mut self, coeff: f64, exponents: &[u32]) {
        match self.terms.iter_mut().find(|t| t.exponents == exponents) {
            Some(t) => t.coeff += coeff,
            None => self.terms.push(DriftTerm {
                coeff,
                exponents: exponents.to_vec(),
            }),
        }
    }
}

/// Leading-order drift: jump `α` adds `d_αi · 2λ_α² · Π_j n_j^{p_αj + q_αj}` to mode `i`.
pub fn meanfield_rhs(spec: &ModelSpec) -> Vec<DriftPolynomial> {
    let m = spec.mode_count();
    let mut out = vec![DriftPolynomial::default(); m];
    for op in &spec.jumps {
        let mut exps = vec![0u32; m];
        for f in &op.factors {
            exps[f.mode.0] += f.power;
        }
        let rate = 2.0 * op.coefficient * op.coefficient;
        for (i, &d) in displacement(op, m).iter().enumerate() {
            if d != 0 {
                out[i].add(d as f64 * rate, &exps);
            }
        }
    }
    for p in &mut out {
        p.terms.retain(|t| t.coeff != 0.0);
    }
    out
}

/// Values at `samples + 1` equally spaced times from 0 to `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

// Dormand–Prince 5(4) tableau.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
/// Fifth-order weights minus the embedded fourth-order ones.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Adaptive explicit Runge–Kutta for autonomous `y′ = f(y)`, sampled on a
/// uniform grid; steps are clipped to land on every sample time.
pub fn dormand_prince<F>(f: F, y0: &[f64], t: f64, samples: usize) -> Result<Trajectory, MeanFieldError>
where
    F: Fn(&[f64], &mut [f64]),
{
    if !(t >= 0.0 && t.is_finite()) {
        return Err(MeanFieldError::BadTime(t));
    }
    if samples == 0 {
        return Err(MeanFieldError::NoSamples);
    }
    let n = y0.len();
    let mut y = y0.to_vec();
    let mut k = vec![vec![0.0; n]; 7];
    let mut stage = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![y.clone()],
    };
    let mut now = 0.0;
    f(&y, &mut k[0]);
    let mut h = initial_step(&y, &k[0], t);

    for s in 1..=samples {
        let target = t * s as f64 / samples as f64;
        while now < target {
            let last = h >= target - now;
            let step = if last { target - now } else { h };
            for i in 1..7 {
                for d in 0..n {
                    stage[d] = y[d] + step * (0..i).map(|j| A[i][j] * k[j][d]).sum::<f64>();
                }
                f(&stage, &mut k[i]);
            }
            // Stage 7 is evaluated at the fifth-order solution (FSAL).
            y_new.copy_from_slice(&stage);
            let mut err = 0.0f64;
            for d in 0..n {
                let e: f64 = step * (0..7).map(|j| E[j] * k[j][d]).sum::<f64>();
                let scale = ATOL + RTOL * y[d].abs().max(y_new[d].abs());
                err = err.max((e / scale).abs());
            }
            if !err.is_finite() {
                err = f64::INFINITY;
            }
            if err <= 1.0 {
                now = if last { target } else { now + step };
                y.copy_from_slice(&y_new);
                let first = k[6].clone();
                k[0].copy_from_slice(&first);
                if y.iter().any(|x| x.is_nan() || x.abs() > BLOW_UP) {
                    return Err(MeanFieldError::BlowUp { t: now });
                }
            }
            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * libm::pow(err, -0.2)).clamp(0.2, 5.0)
            };
            if err <= 1.0 && last {
                h = h.max(step * factor);
            } else {
                h = step * factor;
            }
            if h < 1e-14 * (1.0 + now.abs()) {
                return Err(MeanFieldError::StepUnderflow { t: now });
            }
        }
        traj.times.push(target);
        traj.states.push(y.clone());
    }
    Ok(traj)
}

fn initial_step(y: &[f64], f0: &[f64], t: f64) -> f64 {
    let ymax = y.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let fmax = f0.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let guess = if fmax > 0.0 { 0.01 * (ymax + 1.0) / fmax } else { t };
    guess.min(t).max(1e-10)
}

/// Integrates the mean-field ODE from `n0` over `[0, t]`.
pub fn integrate_meanfield(spec: &ModelSpec, n0: &[f64], t: f64, samples: usize) -> Result<Trajectory, MeanFieldError> {
    if n0.len() != spec.mode_count() {
        return Err(MeanFieldError::Length {
            expected: spec.mode_count(),
            got: n0.len(),
        });
    }
    if n0.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
        return Err(MeanFieldError::BadInit);
    }
    let rhs = meanfield_rhs(spec);
    dormand_prince(
        |y, dy| {
            for (d, p) in dy.iter_mut().zip(&rhs) {
                *d = p.eval(y);
            }
        },
        n0,
        t,
        samples,
    )
}

/// Complex coordinates `z_i`, with `n_i = |z_i|²`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexState(pub Vec<Complex64>);

impl ComplexState {
    pub fn occupations(&self) -> Vec<f64> {
        self.0.iter().map(|z| z.norm_sqr()).collect()
    }
}

fn cpow(z: Complex64, e: u32) -> Complex64 {
    (0..e).fold(Complex64::new(1.0, 0.0), |acc, _| acc * z)
}

/// `Π_j z_j^{a_j} (z_j*)^{b_j}`; with `wrt = Some(i)` the `∂/∂z_i*` of it.
fn monomial(z: &[Complex64], a: &[u32], b: &[u32], wrt: Option<usize>) -> Complex64 {
    let mut acc = Complex64::new(1.0, 0.0);
    for j in 0..z.len() {
        let mut bj = b[j];
        if wrt == Some(j) {
            if bj == 0 {
                return Complex64::new(0.0, 0.0);
            }
            acc *= bj as f64;
            bj -= 1;
        }
        acc *= cpow(z[j], a[j]) * cpow(z[j].conj(), bj);
    }
    acc
}

/// Velocity field of the complex form built from the model itself:
/// `H = Σ ω_i z_i* z_i` and, per jump, `R = λ Π z^p (z*)^q` (destroy ↦ `z`,
/// create ↦ `z*`).
pub fn faq_rhs(spec: &ModelSpec, z: &ComplexState) -> Vec<Complex64> {
    let m = spec.mode_count();
    let z = &z.0;
    let mut out: Vec<Complex64> = (0..m).map(|i| Complex64::new(0.0, -spec.omega(i)) * z[i]).collect();
    for op in &spec.jumps {
        let mut p = vec![0u32; m];
        let mut q = vec![0u32; m];
        for f in &op.factors {
            match f.kind {
                FactorKind::Destroy => p[f.mode.0] += f.power,
                FactorKind::Create => q[f.mode.0] += f.power,
            }
        }
        let lam = op.coefficient;
        let r = monomial(z, &p, &q, None) * lam;
        let r_bar = monomial(z, &q, &p, None) * lam;
        for (i, o) in out.iter_mut().enumerate() {
            let dr = monomial(z, &p, &q, Some(i)) * lam;
            let dr_bar = monomial(z, &q, &p, Some(i)) * lam;
            *o += r_bar * dr - r * dr_bar;
        }
    }
    out
}

/// Hand-written classical vector fields of the built-in models.
pub fn direct_vector_field(model: &Builtin, z: &ComplexState) -> Vec<Complex64> {
    let z = &z.0;
    match *model {
        Builtin::Oscillator { mu, omega } => {
            let z0 = z[0];
            vec![Complex64::new(0.0, -omega) * z0 + z0 * mu - z0 * (2.0 * z0.norm_sqr())]
        }
        Builtin::Lvm { l1, l2 } => vec![
            z[0] * (l1 * l1) - z[0] * z[1].norm_sqr(),
            -z[1] * (l2 * l2) + z[1] * z[0].norm_sqr(),
        ],
        Builtin::LvmTruncated => vec![-z[0] * z[1].norm_sqr(), z[1] * z[0].norm_sqr()],
        Builtin::Cannibal { l1, l2 } => {
            let g = l2 * l2 - l1 * l1;
            vec![z[0] * (g * z[1].norm_sqr()), z[1] * (-g * z[0].norm_sqr())]
        }
    }
}

/// `max |faq_rhs(spec) − direct_vector_field(model)|` over points and components.
pub fn faq_residual_for(spec: &ModelSpec, model: &Builtin, points: &[ComplexState]) -> f64 {
    let mut worst = 0.0f64;
    for z in points {
        let lhs = direct_vector_field(model, z);
        let rhs = faq_rhs(spec, z);
        for (a, b) in lhs.iter().zip(&rhs) {
            worst = worst.max(libm::sqrt((a - b).norm_sqr()));
        }
    }
    worst
}

/// Decomposition residual of a built-in model against its own operators.
pub fn faq_residual(model: &Builtin, points: &[ComplexState]) -> f64 {
    faq_residual_for(&model.spec(), model, points)
}

/// `count` points with every component uniform in the disk `|z| ≤ radius`.
pub fn sample_points(modes: usize, count: usize, radius: f64, seed: u64) -> Vec<ComplexState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut unit = move || (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
    (0..count)
        .map(|_| {
            ComplexState(
                (0..modes)
                    .map(|_| {
                        let r = radius * libm::sqrt(unit());
                        let th = 2.0 * core::f64::consts::PI * unit();
                        Complex64::new(r * libm::cos(th), r * libm::sin(th))
                    })
                    .collect(),
            )
        })
        .collect()
}

/// Integrates the complex form (including the `−iω z` rotation) over `[0, t]`.
pub fn integrate_complex(
    spec: &ModelSpec,
    z0: &ComplexState,
    t: f64,
    samples: usize,
) -> Result<Vec<(f64, ComplexState)>, MeanFieldError> {
    let m = spec.mode_count();
    if z0.0.len() != m {
        return Err(MeanFieldError::Length {
            expected: m,
            got: z0.0.len(),
        });
    }
    let pack: Vec<f64> = z0.0.iter().flat_map(|z| [z.re, z.im]).collect();
    let unpack = |y: &[f64]| ComplexState(y.chunks(2).map(|c| Complex64::new(c[0], c[1])).collect());
    let traj = dormand_prince(
        |y, dy| {
            for (i, v) in faq_rhs(spec, &unpack(y)).into_iter().enumerate() {
                dy[2 * i] = v.re;
                dy[2 * i + 1] = v.im;
            }
        },
        &pack,
        t,
        samples,
    )?;
    Ok(traj
        .times
        .into_iter()
        .zip(traj.states.iter().map(|y| unpack(y)))
        .collect())
}
