//! Model data: modes, monomial jump operators, built-in models, validation and
//! conservation-law detection.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use num_integer::Integer;
use num_rational::Ratio;
use num_traits::{One, Zero};
use thiserror::Error;

/// Dense index of a mode inside a [`ModelSpec`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ModeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FactorKind {
    /// `a^+` raised to a power.
    Create,
    /// `a` raised to a power.
    Destroy,
}

impl FactorKind {
    pub fn keyword(self) -> &'static str {
        match self {
            FactorKind::Create => "create",
            FactorKind::Destroy => "destroy",
        }
    }
}

/// One factor `a_mode^power` or `(a_mode^+)^power` of a jump monomial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Factor {
    pub mode: ModeId,
    pub kind: FactorKind,
    pub power: u32,
}

impl Factor {
    pub fn create(mode: usize, power: u32) -> Self {
        Factor {
            mode: ModeId(mode),
            kind: FactorKind::Create,
            power,
        }
    }

    pub fn destroy(mode: usize, power: u32) -> Self {
        Factor {
            mode: ModeId(mode),
            kind: FactorKind::Destroy,
            power,
        }
    }
}

/// Per-mode view of a jump operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    None,
    Create(u32),
    Destroy(u32),
}

/// A jump operator `coefficient · Π factors`.
///
/// The coefficient is the monomial prefactor λ, not the rate: the induced
/// transition rate is `2 λ² · |⟨n+d| monomial |n⟩|²`.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpOperator {
    pub coefficient: f64,
    pub factors: Vec<Factor>,
}

impl JumpOperator {
    pub fn new(coefficient: f64, factors: Vec<Factor>) -> Self {
        JumpOperator { coefficient, factors }
    }

    /// Action on `mode`. Assumes the operator is valid (at most one factor per mode).
    pub fn action(&self, mode: ModeId) -> Action {
        self.factors
            .iter()
            .find(|f| f.mode == mode)
            .map_or(Action::None, |f| match f.kind {
                FactorKind::Create => Action::Create(f.power),
                FactorKind::Destroy => Action::Destroy(f.power),
            })
    }

    /// Dense per-mode actions for a model with `modes` modes.
    pub fn actions(&self, modes: usize) -> Vec<Action> {
        (0..modes).map(|m| self.action(ModeId(m))).collect()
    }
}

/// A complete model definition. Immutable once built; share it by reference.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub name: String,
    /// Mode names; the position is the [`ModeId`].
    pub modes: Vec<String>,
    pub jumps: Vec<JumpOperator>,
    /// Optional per-mode frequency ω. Only the complex mean-field flow uses it.
    pub frequencies: Vec<Option<f64>>,
}

impl ModelSpec {
    /// Empty model with the given mode names and no jumps.
    pub fn new<S: Into<String>>(name: S, modes: &[&str]) -> Self {
        ModelSpec {
            name: name.into(),
            modes: modes.iter().map(|m| m.to_string()).collect(),
            jumps: Vec::new(),
            frequencies: vec![None; modes.len()],
        }
    }

    pub fn with_jump(mut self, coefficient: f64, factors: Vec<Factor>) -> Self {
        self.jumps.push(JumpOperator::new(coefficient, factors));
        self
    }

    pub fn with_frequency(mut self, mode: usize, omega: f64) -> Self {
        self.frequencies[mode] = Some(omega);
        self
    }

    pub fn mode_count(&self) -> usize {
        self.modes.len()
    }

    pub fn mode_index(&self, name: &str) -> Option<ModeId> {
        self.modes.iter().position(|m| m == name).map(ModeId)
    }

    /// ω for `mode`, zero when unset.
    pub fn omega(&self, mode: usize) -> f64 {
        self.frequencies.get(mode).copied().flatten().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidationError {
    #[error("model has no modes")]
    NoModes,
    #[error("invalid identifier {0:?}")]
    BadIdentifier(String),
    #[error("duplicate mode name {0:?}")]
    DuplicateMode(String),
    #[error("frequency table has {found} entries for {modes} modes")]
    FrequencyCount { found: usize, modes: usize },
    #[error("frequency of mode {mode} is not finite")]
    NonFiniteFrequency { mode: usize },
    #[error("jump {jump}: non-positive coefficient")]
    NonPositiveCoefficient { jump: usize },
    #[error("jump {jump}: no factors")]
    EmptyJump { jump: usize },
    #[error("jump {jump}: unknown mode index {mode}")]
    UnknownMode { jump: usize, mode: usize },
    #[error("jump {jump}: zero exponent on mode {mode}")]
    ZeroPower { jump: usize, mode: usize },
    #[error("jump {jump}: mixed action (create and destroy) on mode {mode}")]
    MixedAction { jump: usize, mode: usize },
    #[error("jump {jump}: repeated factor on mode {mode}")]
    DuplicateFactor { jump: usize, mode: usize },
}

impl ValidationError {
    /// Index of the offending jump, if the error is about one.
    pub fn jump(&self) -> Option<usize> {
        use ValidationError::*;
        match *self {
            NonPositiveCoefficient { jump }
            | EmptyJump { jump }
            | UnknownMode { jump, .. }
            | ZeroPower { jump, .. }
            | MixedAction { jump, .. }
            | DuplicateFactor { jump, .. } => Some(jump),
            _ => None,
        }
    }
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Checks every structural invariant; reports all violations, not just the first.
pub fn validate(spec: &ModelSpec) -> Result<(), Vec<ValidationError>> {
    let mut errors = Vec::new();
    let m = spec.modes.len();
    if m == 0 {
        errors.push(ValidationError::NoModes);
    }
    if !is_identifier(&spec.name) {
        errors.push(ValidationError::BadIdentifier(spec.name.clone()));
    }
    for (i, name) in spec.modes.iter().enumerate() {
        if !is_identifier(name) {
            errors.push(ValidationError::BadIdentifier(name.clone()));
        }
        if spec.modes[..i].contains(name) {
            errors.push(ValidationError::DuplicateMode(name.clone()));
        }
    }
    if spec.frequencies.len() != m {
        errors.push(ValidationError::FrequencyCount {
            found: spec.frequencies.len(),
            modes: m,
        });
    }
    for (mode, w) in spec.frequencies.iter().enumerate() {
        if matches!(w, Some(w) if !w.is_finite()) {
            errors.push(ValidationError::NonFiniteFrequency { mode });
        }
    }
    for (j, op) in spec.jumps.iter().enumerate() {
        if !(op.coefficient > 0.0 && op.coefficient.is_finite()) {
            errors.push(ValidationError::NonPositiveCoefficient { jump: j });
        }
        if op.factors.is_empty() {
            errors.push(ValidationError::EmptyJump { jump: j });
        }
        for (k, f) in op.factors.iter().enumerate() {
            let mode = f.mode.0;
            if mode >= m {
                errors.push(ValidationError::UnknownMode { jump: j, mode });
            }
            if f.power == 0 {
                errors.push(ValidationError::ZeroPower { jump: j, mode });
            }
            for g in &op.factors[..k] {
                if g.mode == f.mode {
                    errors.push(if g.kind == f.kind {
                        ValidationError::DuplicateFactor { jump: j, mode }
                    } else {
                        ValidationError::MixedAction { jump: j, mode }
                    });
                }
            }
        }
    }
    if errors.is_empty() {
        Ok(())
    } else {
        Err(errors)
    }
}

/// Integer vector `c` with `c · d = 0` for every jump displacement `d`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ConservationVector(pub Vec<i64>);

impl ConservationVector {
    pub fn dot(&self, n: &[u64]) -> i64 {
        self.0.iter().zip(n).map(|(&c, &x)| c * x as i64).sum()
    }

    pub fn dot_signed(&self, d: &[i64]) -> i64 {
        self.0.iter().zip(d).map(|(&c, &x)| c * x).sum()
    }
}

/// Integer basis of the conserved linear totals of `spec`.
///
/// Computed as the nullspace of the jump displacement matrix by exact
/// rational row reduction; each basis vector is scaled to coprime integers
/// with a positive leading entry.
pub fn conserved_totals(spec: &ModelSpec) -> Vec<ConservationVector> {
    let m = spec.mode_count();
    let mut rows: Vec<Vec<Rational>> = spec
        .jumps
        .iter()
        .map(|op| {
            crate::cme::displacement(op, m)
                .into_iter()
                .map(|d| Rational::from_integer(d as i128))
                .collect()
        })
        .collect();

    let mut pivots = Vec::new();
    let mut r = 0;
    for col in 0..m {
        let Some(p) = (r..rows.len()).find(|&i| !rows[i][col].is_zero()) else {
            continue;
        };
        rows.swap(r, p);
        let inv = rows[r][col].recip();
        for x in rows[r].iter_mut() {
            *x *= inv;
        }
        for i in 0..rows.len() {
            if i != r && !rows[i][col].is_zero() {
                let f = rows[i][col];
                let pivot = rows[r].clone();
                for (x, v) in rows[i].iter_mut().zip(pivot) {
                    *x -= v * f;
                }
            }
        }
        pivots.push(col);
        r += 1;
        if r == rows.len() {
            break;
        }
    }

    let mut basis = Vec::new();
    for free in (0..m).filter(|c| !pivots.contains(c)) {
        let mut v = vec![Rational::zero(); m];
        v[free] = Rational::one();
        for (row, &pc) in pivots.iter().enumerate() {
            v[pc] = -rows[row][free];
        }
        let lcm = v.iter().fold(1i128, |acc, x| acc.lcm(x.denom()));
        let mut ints: Vec<i128> = v.iter().map(|x| x.numer() * (lcm / x.denom())).collect();
        let g = ints.iter().fold(0i128, |acc, x| acc.gcd(x));
        if g > 1 {
            ints.iter_mut().for_each(|x| *x /= g);
        }
        if ints.iter().find(|&&x| x != 0).is_some_and(|&x| x < 0) {
            ints.iter_mut().for_each(|x| *x = -*x);
        }
        basis.push(ConservationVector(ints.into_iter().map(|x| x as i64).collect()));
    }
    basis
}

type Rational = Ratio<i128>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("unknown built-in model {0:?} (expected oscillator, lvm, lvm_truncated or cannibal)")]
    UnknownModel(String),
    #[error("{model}: expected {expected} parameter(s), got {got}")]
    ParamCount {
        model: &'static str,
        expected: &'static str,
        got: usize,
    },
    #[error("{model}: parameter {name} must be {requirement}, got {value}")]
    BadParam {
        model: &'static str,
        name: &'static str,
        requirement: &'static str,
        value: f64,
    },
}

/// The four models with closed-form results.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Builtin {
    /// Self-excited oscillator: `√μ a^+`, `a²`; ω only rotates the phase.
    Oscillator { mu: f64, omega: f64 },
    /// Lotka–Volterra: `λ1 a1^+`, `λ2 a2`, `a1 a2^+`.
    Lvm { l1: f64, l2: f64 },
    /// Lotka–Volterra with λ1 = λ2 = 0: only `a1 a2^+`.
    LvmTruncated,
    /// Two cannibal kins: `λ1 a1 a2^+`, `λ2 a1^+ a2`.
    Cannibal { l1: f64, l2: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BuiltinKind {
    Oscillator,
    Lvm,
    LvmTruncated,
    Cannibal,
}

impl BuiltinKind {
    pub const ALL: [BuiltinKind; 4] = [
        BuiltinKind::Oscillator,
        BuiltinKind::Lvm,
        BuiltinKind::LvmTruncated,
        BuiltinKind::Cannibal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BuiltinKind::Oscillator => "oscillator",
            BuiltinKind::Lvm => "lvm",
            BuiltinKind::LvmTruncated => "lvm_truncated",
            BuiltinKind::Cannibal => "cannibal",
        }
    }
}

impl FromStr for BuiltinKind {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BuiltinKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| ModelError::UnknownModel(s.to_string()))
    }
}

impl fmt::Display for BuiltinKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn positive(model: &'static str, name: &'static str, value: f64) -> Result<f64, ModelError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(ModelError::BadParam {
            model,
            name,
            requirement: "positive and finite",
            value,
        })
    }
}

impl Builtin {
    /// Parameters: oscillator `[μ]` or `[μ, ω]`; lvm and cannibal `[λ1, λ2]`;
    /// lvm_truncated `[]`.
    pub fn new(kind: BuiltinKind, params: &[f64]) -> Result<Self, ModelError> {
        let name = kind.name();
        match kind {
            BuiltinKind::Oscillator => {
                if !(1..=2).contains(&params.len()) {
                    return Err(ModelError::ParamCount {
                        model: name,
                        expected: "1 or 2",
                        got: params.len(),
                    });
                }
                let mu = positive(name, "mu", params[0])?;
                let omega = params.get(1).copied().unwrap_or(0.0);
                if !(omega >= 0.0 && omega.is_finite()) {
                    return Err(ModelError::BadParam {
                        model: name,
                        name: "omega",
                        requirement: "non-negative and finite",
                        value: omega,
                    });
                }
                Ok(Builtin::Oscillator { mu, omega })
            }
            BuiltinKind::Lvm | BuiltinKind::Cannibal => {
                if params.len() != 2 {
                    return Err(ModelError::ParamCount {
                        model: name,
                        expected: "2",
                        got: params.len(),
                    });
                }
                let l1 = positive(name, "l1", params[0])?;
                let l2 = positive(name, "l2", params[1])?;
                Ok(if kind == BuiltinKind::Lvm {
                    Builtin::Lvm { l1, l2 }
                } else {
                    Builtin::Cannibal { l1, l2 }
                })
            }
            BuiltinKind::LvmTruncated => {
                if !params.is_empty() {
                    return Err(ModelError::ParamCount {
                        model: name,
                        expected: "0",
                        got: params.len(),
                    });
                }
                Ok(Builtin::LvmTruncated)
            }
        }
    }

    pub fn kind(&self) -> BuiltinKind {
        match self {
            Builtin::Oscillator { .. } => BuiltinKind::Oscillator,
            Builtin::Lvm { .. } => BuiltinKind::Lvm,
            Builtin::LvmTruncated => BuiltinKind::LvmTruncated,
            Builtin::Cannibal { .. } => BuiltinKind::Cannibal,
        }
    }

    pub fn spec(&self) -> ModelSpec {
        let name = self.kind().name();
        match *self {
            Builtin::Oscillator { mu, omega } => ModelSpec::new(name, &["a"])
                .with_jump(libm::sqrt(mu), vec![Factor::create(0, 1)])
                .with_jump(1.0, vec![Factor::destroy(0, 2)])
                .with_frequency(0, omega),
            Builtin::Lvm { l1, l2 } => ModelSpec::new(name, &["prey", "predator"])
                .with_jump(l1, vec![Factor::create(0, 1)])
                .with_jump(l2, vec![Factor::destroy(1, 1)])
                .with_jump(1.0, vec![Factor::destroy(0, 1), Factor::create(1, 1)]),
            Builtin::LvmTruncated => ModelSpec::new(name, &["prey", "predator"])
                .with_jump(1.0, vec![Factor::destroy(0, 1), Factor::create(1, 1)]),
            Builtin::Cannibal { l1, l2 } => ModelSpec::new(name, &["kin1", "kin2"])
                .with_jump(l1, vec![Factor::destroy(0, 1), Factor::create(1, 1)])
                .with_jump(l2, vec![Factor::create(0, 1), Factor::destroy(1, 1)]),
        }
    }

    /// Box caps for models without a conserved total: oscillator `⌈2μ⌉+30`,
    /// lvm `⌈4·max(λ1², λ2²)⌉+30` per mode. `None` for the conserved models,
    /// which live on an `n1 + n2 = N` manifold instead.
    pub fn default_caps(&self) -> Option<Vec<u64>> {
        match *self {
            Builtin::Oscillator { mu, .. } => Some(vec![libm::ceil(2.0 * mu) as u64 + 30]),
            Builtin::Lvm { l1, l2 } => {
                let cap = libm::ceil(4.0 * (l1 * l1).max(l2 * l2)) as u64 + 30;
                Some(vec![cap, cap])
            }
            Builtin::LvmTruncated | Builtin::Cannibal { .. } => None,
        }
    }
}

/// Built-in model by name; see [`Builtin::new`] for the parameter lists.
pub fn builtin_model(name: &str, params: &[f64]) -> Result<ModelSpec, ModelError> {
    let kind: BuiltinKind = name.parse()?;
    Ok(Builtin::new(kind, params)?.spec())
}
