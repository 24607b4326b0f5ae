//! Compilation of a model into its classical master equation.
//!
//! For a monomial `R = λ Π a_j^{p_j} (a_j^+)^{q_j}` the diagonal part of the
//! dissipator `[Rρ, R^+] + [R, ρR^+]` moves probability from `|n⟩` to
//! `|n + q − p⟩` at rate `2 λ² Π f_j(n_j)`, with `f_j` the falling factorial
//! `n(n−1)…(n−p+1)` for a destroy factor and the rising factorial
//! `(n+1)…(n+q)` for a create factor. Everything in this module follows from
//! that rule.

use alloc::collections::BTreeMap;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::model::{ConservationVector, FactorKind, JumpOperator, ModelSpec};

/// Occupation vector `(n_1, …, n_M)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OccState(pub Vec<u64>);

impl From<Vec<u64>> for OccState {
    fn from(v: Vec<u64>) -> Self {
        OccState(v)
    }
}

/// Transition rate of `op` out of state `n`; zero when a destroy factor
/// exceeds the occupation.
pub fn jump_rate(op: &JumpOperator, n: &[u64]) -> f64 {
    let mut w = 2.0 * op.coefficient * op.coefficient;
    for f in &op.factors {
        let occ = n[f.mode.0];
        match f.kind {
            FactorKind::Destroy => {
                if occ < u64::from(f.power) {
                    return 0.0;
                }
                for i in 0..u64::from(f.power) {
                    w *= (occ - i) as f64;
                }
            }
            FactorKind::Create => {
                for i in 1..=u64::from(f.power) {
                    w *= (occ + i) as f64;
                }
            }
        }
    }
    w
}

/// State change `q − p` applied when `op` fires.
pub fn displacement(op: &JumpOperator, modes: usize) -> Vec<i64> {
    let mut d = vec![0i64; modes];
    for f in &op.factors {
        match f.kind {
            FactorKind::Create => d[f.mode.0] += i64::from(f.power),
            FactorKind::Destroy => d[f.mode.0] -= i64::from(f.power),
        }
    }
    d
}

/// `n + d`, or `None` when a component would go negative.
pub(crate) fn shifted(n: &[u64], d: &[i64]) -> Option<Vec<u64>> {
    n.iter().zip(d).map(|(&x, &dx)| x.checked_add_signed(dx)).collect()
}

/// Exact conditional mean velocity `Σ_α W_α(n) d_α`.
pub fn drift_exact(spec: &ModelSpec, n: &[u64]) -> Vec<f64> {
    let m = spec.mode_count();
    let mut v = vec![0.0; m];
    for op in &spec.jumps {
        let w = jump_rate(op, n);
        if w == 0.0 {
            continue;
        }
        for (vi, di) in v.iter_mut().zip(displacement(op, m)) {
            *vi += w * di as f64;
        }
    }
    v
}

/// The level set `c · n = total` of a conserved linear combination.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifold {
    pub vector: ConservationVector,
    pub total: i64,
}

impl Manifold {
    /// Box caps implied by a manifold with non-negative weights; `None` when
    /// some weight is zero or negative (the manifold is then unbounded).
    pub fn implied_caps(&self) -> Option<Vec<u64>> {
        if self.total < 0 {
            return None;
        }
        self.vector
            .0
            .iter()
            .map(|&c| (c > 0).then(|| (self.total / c) as u64))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CmeError {
    #[error("lattice is empty")]
    EmptyLattice,
    #[error("expected {expected} caps, got {got}")]
    CapCount { expected: usize, got: usize },
    #[error("manifold vector has {got} entries for {expected} modes")]
    ManifoldLength { expected: usize, got: usize },
    #[error("lattice would have more than {limit} states")]
    TooLarge { limit: usize },
}

/// Hard ceiling on enumerated lattice size.
pub const MAX_LATTICE_STATES: usize = 20_000_000;

#[derive(Debug, Clone)]
enum LatticeIndex {
    /// Mixed-radix ordinal of a full box.
    Box {
        strides: Vec<usize>,
    },
    Map(BTreeMap<Vec<u64>, usize>),
}

/// Enumerated states of a truncated state space, in lexicographic order.
#[derive(Debug, Clone)]
pub struct TruncatedLattice {
    caps: Vec<u64>,
    manifold: Option<Manifold>,
    modes: usize,
    states: Vec<u64>,
    index: LatticeIndex,
}

impl TruncatedLattice {
    pub fn len(&self) -> usize {
        self.states.len() / self.modes
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn caps(&self) -> &[u64] {
        &self.caps
    }

    pub fn manifold(&self) -> Option<&Manifold> {
        self.manifold.as_ref()
    }

    pub fn state(&self, i: usize) -> &[u64] {
        &self.states[i * self.modes..(i + 1) * self.modes]
    }

    pub fn states(&self) -> impl Iterator<Item = &[u64]> {
        self.states.chunks_exact(self.modes)
    }

    pub fn index_of(&self, n: &[u64]) -> Option<usize> {
        if n.len() != self.modes || n.iter().zip(&self.caps).any(|(x, c)| x > c) {
            return None;
        }
        match &self.index {
            LatticeIndex::Box { strides } => Some(n.iter().zip(strides).map(|(&x, &s)| x as usize * s).sum()),
            LatticeIndex::Map(map) => map.get(n).copied(),
        }
    }

    /// True when some component of state `i` sits at its cap while the model
    /// could push it further; used for tail-mass reporting.
    pub fn on_boundary(&self, i: usize) -> bool {
        let bounded_by_manifold = self.manifold.is_some();
        !bounded_by_manifold && self.state(i).iter().zip(&self.caps).any(|(x, c)| x == c)
    }
}

/// All states of the box `0 ≤ n_j ≤ caps_j`, intersected with the manifold if
/// given, in lexicographic order (mode 0 most significant).
pub fn enumerate_states(
    spec: &ModelSpec,
    caps: &[u64],
    manifold: Option<Manifold>,
) -> Result<TruncatedLattice, CmeError> {
    let m = spec.mode_count();
    if caps.len() != m {
        return Err(CmeError::CapCount {
            expected: m,
            got: caps.len(),
        });
    }
    if let Some(mf) = &manifold {
        if mf.vector.0.len() != m {
            return Err(CmeError::ManifoldLength {
                expected: m,
                got: mf.vector.0.len(),
            });
        }
    }
    if m == 0 {
        return Err(CmeError::EmptyLattice);
    }

    let Some(manifold) = manifold else {
        let mut size: usize = 1;
        for &c in caps {
            size = size
                .checked_mul(c as usize + 1)
                .filter(|&s| s <= MAX_LATTICE_STATES)
                .ok_or(CmeError::TooLarge {
                    limit: MAX_LATTICE_STATES,
                })?;
        }
        let mut strides = vec![1usize; m];
        for j in (0..m - 1).rev() {
            strides[j] = strides[j + 1] * (caps[j + 1] as usize + 1);
        }
        let mut states = Vec::with_capacity(size * m);
        let mut cur = vec![0u64; m];
        for _ in 0..size {
            states.extend_from_slice(&cur);
            for j in (0..m).rev() {
                if cur[j] < caps[j] {
                    cur[j] += 1;
                    break;
                }
                cur[j] = 0;
            }
        }
        return Ok(TruncatedLattice {
            caps: caps.to_vec(),
            manifold: None,
            modes: m,
            states,
            index: LatticeIndex::Box { strides },
        });
    };

    let mut states = Vec::new();
    let mut cur = vec![0u64; m];
    let weights = &manifold.vector.0;
    // Remaining reachable range of Σ_{k≥j} c_k n_k, for pruning.
    let mut lo = vec![0i64; m + 1];
    let mut hi = vec![0i64; m + 1];
    for j in (0..m).rev() {
        let span = weights[j].saturating_mul(caps[j] as i64);
        lo[j] = lo[j + 1] + span.min(0);
        hi[j] = hi[j + 1] + span.max(0);
    }
    let mut count = 0usize;
    fill_manifold(
        0,
        0,
        weights,
        caps,
        manifold.total,
        &lo,
        &hi,
        &mut cur,
        &mut states,
        &mut count,
    )?;
    if states.is_empty() {
        return Err(CmeError::EmptyLattice);
    }
    let map = states
        .chunks_exact(m)
        .enumerate()
        .map(|(i, s)| (s.to_vec(), i))
        .collect();
    Ok(TruncatedLattice {
        caps: caps.to_vec(),
        manifold: Some(manifold),
        modes: m,
        states,
        index: LatticeIndex::Map(map),
    })
}

#[allow(clippy::too_many_arguments)]
fn fill_manifold(
    j: usize,
    partial: i64,
    weights: &[i64],
    caps: &[u64],
    total: i64,
    lo: &[i64],
    hi: &[i64],
    cur: &mut Vec<u64>,
    out: &mut Vec<u64>,
    count: &mut usize,
) -> Result<(), CmeError> {
    let m = caps.len();
    if j == m {
        if partial == total {
            *count += 1;
            if *count > MAX_LATTICE_STATES {
                return Err(CmeError::TooLarge {
                    limit: MAX_LATTICE_STATES,
                });
            }
            out.extend_from_slice(cur);
        }
        return Ok(());
    }
    let need = total - partial;
    if need < lo[j] || need > hi[j] {
        return Ok(());
    }
    for x in 0..=caps[j] {
        cur[j] = x;
        fill_manifold(
            j + 1,
            partial + weights[j] * x as i64,
            weights,
            caps,
            total,
            lo,
            hi,
            cur,
            out,
            count,
        )?;
    }
    cur[j] = 0;
    Ok(())
}

/// Transition-rate generator `Q` with `dp/dt = Q p`: column `m` holds the
/// rates out of state `m` (off-diagonal, `Q[n][m] = W(m→n) ≥ 0`) and
/// `Q[m][m] = −Σ_n W(m→n)`. Off-diagonals are stored compressed by column.
#[derive(Debug, Clone)]
pub struct SparseGenerator {
    lattice: Arc<TruncatedLattice>,
    col_ptr: Vec<usize>,
    rows: Vec<usize>,
    rates: Vec<f64>,
    diag: Vec<f64>,
}

/// Assembles the generator on `lattice`. Transitions that leave the lattice
/// are dropped together with their loss term, so columns still sum to zero.
pub fn build_generator(spec: &ModelSpec, lattice: &Arc<TruncatedLattice>) -> SparseGenerator {
    let m = spec.mode_count();
    let disps: Vec<Vec<i64>> = spec.jumps.iter().map(|op| displacement(op, m)).collect();
    let s = lattice.len();
    let mut col_ptr = Vec::with_capacity(s + 1);
    let mut rows = Vec::new();
    let mut rates = Vec::new();
    let mut diag = vec![0.0; s];
    let mut column: Vec<(usize, f64)> = Vec::with_capacity(spec.jumps.len());
    col_ptr.push(0);
    for (from, state) in lattice.states().enumerate() {
        column.clear();
        for (op, d) in spec.jumps.iter().zip(&disps) {
            let w = jump_rate(op, state);
            if w <= 0.0 || d.iter().all(|&x| x == 0) {
                continue;
            }
            let Some(to) = shifted(state, d).and_then(|t| lattice.index_of(&t)) else {
                continue;
            };
            column.push((to, w));
        }
        column.sort_by_key(|&(to, _)| to);
        let mut out = 0.0;
        let mut k = 0;
        while k < column.len() {
            let to = column[k].0;
            let mut w = 0.0;
            while k < column.len() && column[k].0 == to {
                w += column[k].1;
                k += 1;
            }
            rows.push(to);
            rates.push(w);
            out += w;
        }
        diag[from] = -out;
        col_ptr.push(rows.len());
    }
    SparseGenerator {
        lattice: Arc::clone(lattice),
        col_ptr,
        rows,
        rates,
        diag,
    }
}

impl SparseGenerator {
    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn lattice(&self) -> &Arc<TruncatedLattice> {
        &self.lattice
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    /// Off-diagonal `(to, rate)` pairs out of `from`, ascending in `to`.
    pub fn column(&self, from: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.col_ptr[from]..self.col_ptr[from + 1];
        self.rows[r.clone()].iter().copied().zip(self.rates[r].iter().copied())
    }

    /// `W(from → to)` for `from ≠ to`, or the diagonal entry when equal.
    pub fn entry(&self, to: usize, from: usize) -> f64 {
        if to == from {
            return self.diag[from];
        }
        self.column(from).find(|&(r, _)| r == to).map_or(0.0, |(_, w)| w)
    }

    /// Every stored entry as `(row, col, value)`, column by column with the
    /// diagonal first.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.dim()).flat_map(move |c| {
            core::iter::once((c, c, self.diag[c])).chain(self.column(c).map(move |(r, w)| (r, c, w)))
        })
    }

    pub fn nnz_offdiag(&self) -> usize {
        self.rates.len()
    }

    /// `max |Q_ij|`, which is the largest total exit rate.
    pub fn max_abs(&self) -> f64 {
        self.diag.iter().fold(0.0f64, |a, &d| a.max(-d))
    }

    /// `out = Q p`.
    pub fn apply(&self, p: &[f64], out: &mut [f64]) {
        out.iter_mut()
            .zip(p)
            .zip(&self.diag)
            .for_each(|((o, &x), &d)| *o = d * x);
        for (from, &x) in p.iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            for k in self.col_ptr[from]..self.col_ptr[from + 1] {
                out[self.rows[k]] += self.rates[k] * x;
            }
        }
    }

    /// Σ over each column, which is zero up to rounding.
    pub fn column_sums(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|c| self.diag[c] + self.column(c).map(|(_, w)| w).sum::<f64>())
            .collect()
    }

    /// Lower and upper bandwidth of the off-diagonal pattern.
    pub fn bandwidth(&self) -> (usize, usize) {
        let (mut lower, mut upper) = (0, 0);
        for c in 0..self.dim() {
            for (r, _) in self.column(c) {
                if r > c {
                    lower = lower.max(r - c);
                } else {
                    upper = upper.max(c - r);
                }
            }
        }
        (lower, upper)
    }

    /// Dense copy, row-major `Q[to][from]`. For small lattices and tests.
    pub fn to_dense(&self) -> crate::linalg::Matrix {
        let n = self.dim();
        let mut q = crate::linalg::Matrix::zeros(n, n);
        for (r, c, w) in self.triplets() {
            q[(r, c)] += w;
        }
        q
    }
}
