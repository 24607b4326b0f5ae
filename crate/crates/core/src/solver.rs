//! Exact numerics on a compiled master equation: stationary state, transient
//! evolution, moments and generating-function checks.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::cme::{SparseGenerator, TruncatedLattice};

/// Negative entries down to this size are rounding noise and get clamped.
pub const NEGATIVE_CLAMP: f64 = 1e-12;
/// Allowed `|Σp − 1|` for a distribution handed in from outside.
pub const NORMALIZATION_TOL: f64 = 1e-10;
/// Required `‖Qp‖∞ / max|Q|` for a stationary solve.
pub const STATIONARY_RESIDUAL: f64 = 1e-10;
/// Poisson mass left out of the uniformization series.
pub const UNIFORMIZATION_TAIL: f64 = 1e-12;
/// Band storage (in f64 entries) above which the stationary solve switches
/// from direct elimination to power iteration.
pub const BAND_STORAGE_BUDGET: usize = 32_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error(
        "generator has {} closed classes (sizes {sizes:?}); representatives {representatives:?}",
        sizes.len()
    )]
    MultipleClosedClasses {
        sizes: Vec<usize>,
        representatives: Vec<Vec<u64>>,
        classes: Vec<Vec<usize>>,
    },
    #[error("closed class is not irreducible at state {0}")]
    Reducible(usize),
    #[error("power iteration did not converge in {0} iterations")]
    NonConvergence(usize),
    #[error("stationary residual {0:e} exceeds tolerance")]
    Residual(f64),
    #[error("probability {value:e} at state {index} is below the rounding clamp")]
    NegativeProbability { index: usize, value: f64 },
    #[error("probabilities sum to {0}, not 1")]
    NotNormalized(f64),
    #[error("expected {expected} probabilities, got {got}")]
    Length { expected: usize, got: usize },
    #[error("time must be finite and non-negative, got {0}")]
    BadTime(f64),
    #[error("distribution and generator live on different lattices")]
    LatticeMismatch,
    #[error("operation needs a {expected}-mode distribution, got {got} modes")]
    ModeCount { expected: usize, got: usize },
    #[error("state is not on the lattice")]
    OffLattice,
}

/// Probability vector over the states of a lattice.
#[derive(Debug, Clone)]
pub struct DiagonalDistribution {
    lattice: Arc<TruncatedLattice>,
    p: Vec<f64>,
}

impl DiagonalDistribution {
    /// Checks length and normalization, clamping rounding-level negatives.
    pub fn new(lattice: Arc<TruncatedLattice>, p: Vec<f64>) -> Result<Self, SolveError> {
        if p.len() != lattice.len() {
            return Err(SolveError::Length {
                expected: lattice.len(),
                got: p.len(),
            });
        }
        let p = clamp(p)?;
        let sum: f64 = p.iter().sum();
        if sum.is_nan() || (sum - 1.0).abs() > NORMALIZATION_TOL {
            return Err(SolveError::NotNormalized(sum));
        }
        Ok(DiagonalDistribution { lattice, p })
    }

    /// Clamps, then rescales to unit mass.
    fn normalized(lattice: Arc<TruncatedLattice>, p: Vec<f64>) -> Result<Self, SolveError> {
        let sum: f64 = p.iter().sum();
        if !(sum > 0.0 && sum.is_finite()) {
            return Err(SolveError::NotNormalized(sum));
        }
        let mut p = clamp(p.into_iter().map(|x| x / sum).collect())?;
        let sum: f64 = p.iter().sum();
        p.iter_mut().for_each(|x| *x /= sum);
        Ok(DiagonalDistribution { lattice, p })
    }

    pub fn point_mass(lattice: Arc<TruncatedLattice>, state: &[u64]) -> Result<Self, SolveError> {
        let i = lattice.index_of(state).ok_or(SolveError::OffLattice)?;
        let mut p = vec![0.0; lattice.len()];
        p[i] = 1.0;
        Ok(DiagonalDistribution { lattice, p })
    }

    pub fn lattice(&self) -> &Arc<TruncatedLattice> {
        &self.lattice
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.p
    }

    /// Probability of `state`; zero off the lattice.
    pub fn prob(&self, state: &[u64]) -> f64 {
        self.lattice.index_of(state).map_or(0.0, |i| self.p[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[u64], f64)> {
        self.lattice.states().zip(self.p.iter().copied())
    }

    /// Mass on box-boundary states, a bound on the truncation error.
    pub fn tail_mass(&self) -> f64 {
        (0..self.p.len())
            .filter(|&i| self.lattice.on_boundary(i))
            .map(|i| self.p[i])
            .sum()
    }

    /// `½ Σ |p − q|`; both must share a lattice.
    pub fn tv_distance(&self, other: &DiagonalDistribution) -> Result<f64, SolveError> {
        if self.p.len() != other.p.len() {
            return Err(SolveError::LatticeMismatch);
        }
        Ok(0.5 * self.p.iter().zip(&other.p).map(|(a, b)| (a - b).abs()).sum::<f64>())
    }
}

fn clamp(mut p: Vec<f64>) -> Result<Vec<f64>, SolveError> {
    for (index, x) in p.iter_mut().enumerate() {
        if x.is_nan() || *x < -NEGATIVE_CLAMP {
            return Err(SolveError::NegativeProbability { index, value: *x });
        }
        if *x < 0.0 {
            *x = 0.0;
        }
    }
    Ok(p)
}

/// Closed communicating classes of the jump graph, each sorted ascending;
/// classes ordered by smallest member.
pub fn closed_classes(gen: &SparseGenerator) -> Vec<Vec<usize>> {
    let n = gen.dim();
    const UNSEEN: usize = usize::MAX;
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut comp = vec![UNSEEN; n];
    let mut stack = Vec::new();
    let mut next = 0usize;
    let mut ncomp = 0usize;
    let succ: Vec<Vec<usize>> = (0..n).map(|v| gen.column(v).map(|(r, _)| r).collect()).collect();

    for root in 0..n {
        if index[root] != UNSEEN {
            continue;
        }
        let mut call: Vec<(usize, usize)> = vec![(root, 0)];
        index[root] = next;
        low[root] = next;
        next += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut pos)) = call.last_mut() {
            if let Some(&w) = succ[v].get(*pos) {
                *pos += 1;
                if index[w] == UNSEEN {
                    index[w] = next;
                    low[w] = next;
                    next += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            call.pop();
            if let Some(&(parent, _)) = call.last() {
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == index[v] {
                loop {
                    let w = stack.pop().expect("tarjan stack");
                    on_stack[w] = false;
                    comp[w] = ncomp;
                    if w == v {
                        break;
                    }
                }
                ncomp += 1;
            }
        }
    }

    let mut leaves = vec![true; ncomp];
    for v in 0..n {
        if succ[v].iter().any(|&w| comp[w] != comp[v]) {
            leaves[comp[v]] = false;
        }
    }
    let mut classes: Vec<Vec<usize>> = vec![Vec::new(); ncomp];
    for v in 0..n {
        if leaves[comp[v]] {
            classes[comp[v]].push(v);
        }
    }
    classes.retain(|c| !c.is_empty());
    classes.sort_by_key(|c| c[0]);
    classes
}

/// `‖Q p‖∞ / max|Q|`.
pub fn stationary_residual(gen: &SparseGenerator, p: &[f64]) -> f64 {
    let scale = gen.max_abs();
    if scale == 0.0 {
        return 0.0;
    }
    let mut r = vec![0.0; gen.dim()];
    gen.apply(p, &mut r);
    r.iter().fold(0.0f64, |a, x| a.max(x.abs())) / scale
}

/// Stationary distribution `Q p = 0`, `Σp = 1`.
///
/// Requires a single closed class; transient states get zero mass. The
/// class is solved by GTH state reduction (Gaussian elimination in which
/// every pivot is a sum of positive rates), so there is no cancellation and
/// even probabilities far below machine epsilon keep full relative
/// accuracy. Elimination in index order keeps fill-in inside the band of the
/// generator; lattices whose band would not fit [`BAND_STORAGE_BUDGET`] fall
/// back to power iteration.
pub fn stationary(gen: &SparseGenerator) -> Result<DiagonalDistribution, SolveError> {
    let n = gen.dim();
    let lattice = Arc::clone(gen.lattice());
    let classes = closed_classes(gen);
    if classes.len() > 1 {
        return Err(SolveError::MultipleClosedClasses {
            sizes: classes.iter().map(Vec::len).collect(),
            representatives: classes.iter().map(|c| lattice.state(c[0]).to_vec()).collect(),
            classes,
        });
    }
    let class = &classes[0];
    let (ahead, behind) = gen.bandwidth();
    let x = if class.len().saturating_mul(ahead + behind + 1) <= BAND_STORAGE_BUDGET {
        let pi = gth(gen, class, ahead, behind)?;
        let mut x = vec![0.0; n];
        for (&i, v) in class.iter().zip(pi) {
            x[i] = v;
        }
        x
    } else {
        power_iteration(gen, class)?
    };
    let dist = DiagonalDistribution::normalized(lattice, x)?;
    let res = stationary_residual(gen, &dist.p);
    if res.is_nan() || res > STATIONARY_RESIDUAL {
        return Err(SolveError::Residual(res));
    }
    Ok(dist)
}

/// Rates `R[i][j]` (from `i` to `j`) restricted to `j − i ≤ ahead`,
/// `i − j ≤ behind`.
struct RateBand {
    ahead: usize,
    behind: usize,
    width: usize,
    data: Vec<f64>,
}

impl RateBand {
    fn slot(&self, i: usize, j: usize) -> usize {
        i * self.width + (j + self.behind - i)
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        self.data[self.slot(i, j)]
    }
}

/// Unnormalized stationary vector of the irreducible chain on `class`.
fn gth(gen: &SparseGenerator, class: &[usize], ahead: usize, behind: usize) -> Result<Vec<f64>, SolveError> {
    let c = class.len();
    let mut pos = vec![usize::MAX; gen.dim()];
    for (k, &i) in class.iter().enumerate() {
        pos[i] = k;
    }
    // Compressing indices is monotone, so the band only narrows.
    let width = ahead + behind + 1;
    let mut r = RateBand {
        ahead,
        behind,
        width,
        data: vec![0.0; c * width],
    };
    for (k, &from) in class.iter().enumerate() {
        for (to, w) in gen.column(from) {
            let j = pos[to];
            if j != usize::MAX {
                let s = r.slot(k, j);
                r.data[s] += w;
            }
        }
    }

    for m in (1..c).rev() {
        let jlo = m.saturating_sub(r.behind);
        let ilo = m.saturating_sub(r.ahead);
        let s: f64 = (jlo..m).map(|j| r.get(m, j)).sum();
        if s.is_nan() || s <= 0.0 {
            return Err(SolveError::Reducible(class[m]));
        }
        for i in ilo..m {
            let k = r.slot(i, m);
            r.data[k] /= s;
        }
        for i in ilo..m {
            let a = r.get(i, m);
            if a == 0.0 {
                continue;
            }
            for j in jlo..m {
                if j != i {
                    let v = r.get(m, j);
                    let k = r.slot(i, j);
                    r.data[k] += a * v;
                }
            }
        }
    }

    let mut pi = vec![0.0; c];
    pi[0] = 1.0;
    for j in 1..c {
        pi[j] = (j.saturating_sub(r.ahead)..j).map(|i| pi[i] * r.get(i, j)).sum();
        if pi[j] > 1e200 {
            pi[..=j].iter_mut().for_each(|x| *x *= 1e-200);
        }
    }
    Ok(pi)
}

fn power_iteration(gen: &SparseGenerator, class: &[usize]) -> Result<Vec<f64>, SolveError> {
    const MAX_ITER: usize = 2_000_000;
    let n = gen.dim();
    // Strictly larger than every exit rate so the chain is aperiodic.
    let lambda = 1.05 * gen.max_abs();
    let mut p = vec![0.0; n];
    for &i in class {
        p[i] = 1.0 / class.len() as f64;
    }
    let mut qp = vec![0.0; n];
    let mut previous = f64::INFINITY;
    for it in 1..=MAX_ITER {
        gen.apply(&p, &mut qp);
        for (x, d) in p.iter_mut().zip(&qp) {
            *x += d / lambda;
        }
        if it % 64 == 0 {
            let sum: f64 = p.iter().sum();
            p.iter_mut().for_each(|x| *x /= sum);
            // Iterate well past the acceptance residual, stopping early only
            // once rounding stalls progress.
            let res = stationary_residual(gen, &p);
            if res <= 1e-3 * STATIONARY_RESIDUAL || (res <= STATIONARY_RESIDUAL && res > 0.99 * previous) {
                return Ok(p);
            }
            previous = res;
        }
    }
    Err(SolveError::NonConvergence(MAX_ITER))
}

/// `p(t) = exp(Q t) p0` by uniformization.
///
/// With `Λ = max |Q_mm|` and `P = I + Q/Λ` (a stochastic matrix),
/// `p(t) = Σ_k Poisson(k; Λt) P^k p0`. The series is cut once at most
/// [`UNIFORMIZATION_TAIL`] Poisson mass remains, and the result is divided by
/// the retained mass, so positivity and normalization hold by construction.
pub fn evolve(gen: &SparseGenerator, p0: &DiagonalDistribution, t: f64) -> Result<DiagonalDistribution, SolveError> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(SolveError::BadTime(t));
    }
    let n = gen.dim();
    if p0.p.len() != n {
        return Err(SolveError::LatticeMismatch);
    }
    let lambda = gen.max_abs();
    if t == 0.0 || lambda == 0.0 {
        return Ok(p0.clone());
    }
    let rate = lambda * t;
    let ln_rate = libm::log(rate);
    let max_terms = (rate + 40.0 * libm::sqrt(rate) + 200.0) as usize;

    let mut v = p0.p.clone();
    let mut qv = vec![0.0; n];
    let mut acc = vec![0.0; n];
    let mut log_w = -rate;
    let mut cum = 0.0;
    for k in 0..=max_terms {
        if k > 0 {
            gen.apply(&v, &mut qv);
            for (x, d) in v.iter_mut().zip(&qv) {
                *x += d / lambda;
            }
            log_w += ln_rate - libm::log(k as f64);
        }
        let w = libm::exp(log_w);
        if w > 0.0 {
            for (a, x) in acc.iter_mut().zip(&v) {
                *a += w * x;
            }
            cum += w;
        }
        if k as f64 >= rate && 1.0 - cum <= UNIFORMIZATION_TAIL {
            break;
        }
    }
    DiagonalDistribution::normalized(Arc::clone(&p0.lattice), acc)
}

/// First and second moments of a distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSet {
    pub mean: Vec<f64>,
    /// `second[i][j] = E[n_i n_j]`.
    pub second: Vec<Vec<f64>>,
    pub variance: Vec<f64>,
    /// `√σ_i / n̄_i`, defined only when `n̄_i > 0`.
    pub rel_fluct: Vec<Option<f64>>,
}

impl MomentSet {
    /// Single-mode moment set from mean and variance.
    pub fn single(mean: f64, variance: f64) -> Self {
        MomentSet::from_parts(vec![mean], vec![vec![variance + mean * mean]])
    }

    pub fn from_parts(mean: Vec<f64>, second: Vec<Vec<f64>>) -> Self {
        let variance: Vec<f64> = mean
            .iter()
            .enumerate()
            .map(|(i, m)| (second[i][i] - m * m).max(0.0))
            .collect();
        let rel_fluct = mean
            .iter()
            .zip(&variance)
            .map(|(&m, &v)| (m > 0.0).then(|| libm::sqrt(v) / m))
            .collect();
        MomentSet {
            mean,
            second,
            variance,
            rel_fluct,
        }
    }
}

pub fn moments(dist: &DiagonalDistribution) -> MomentSet {
    let m = dist.lattice.modes();
    let mut mean = vec![0.0; m];
    let mut second = vec![vec![0.0; m]; m];
    for (state, p) in dist.iter() {
        if p == 0.0 {
            continue;
        }
        for i in 0..m {
            let ni = state[i] as f64;
            mean[i] += p * ni;
            for j in 0..m {
                second[i][j] += p * ni * state[j] as f64;
            }
        }
    }
    MomentSet::from_parts(mean, second)
}

pub(crate) fn ipow(mut x: f64, mut e: u64) -> f64 {
    let mut acc = 1.0;
    while e > 0 {
        if e & 1 == 1 {
            acc *= x;
        }
        x *= x;
        e >>= 1;
    }
    acc
}

/// `G(u) = Σ_n p_n Π_i u_i^{n_i}`.
pub fn gf_eval(dist: &DiagonalDistribution, u: &[f64]) -> f64 {
    assert_eq!(u.len(), dist.lattice.modes(), "one argument per mode");
    dist.iter()
        .filter(|&(_, p)| p != 0.0)
        .map(|(s, p)| p * s.iter().zip(u).map(|(&n, &x)| ipow(x, n)).product::<f64>())
        .sum()
}

/// `(G, G′, G″)` of a single-mode distribution, as exact weighted sums.
pub fn gf_derivatives(dist: &DiagonalDistribution, u: f64) -> Result<[f64; 3], SolveError> {
    let modes = dist.lattice.modes();
    if modes != 1 {
        return Err(SolveError::ModeCount {
            expected: 1,
            got: modes,
        });
    }
    let mut out = [0.0; 3];
    for (s, p) in dist.iter() {
        let n = s[0];
        out[0] += p * ipow(u, n);
        if n >= 1 {
            out[1] += p * n as f64 * ipow(u, n - 1);
        }
        if n >= 2 {
            out[2] += p * (n * (n - 1)) as f64 * ipow(u, n - 2);
        }
    }
    Ok(out)
}

/// `max |(1+u)G″ − μuG′ − μG|` over `u_points`; zero for the oscillator's
/// stationary generating function.
pub fn gf_ode_residual(dist: &DiagonalDistribution, mu: f64, u_points: &[f64]) -> Result<f64, SolveError> {
    let mut worst = 0.0f64;
    for &u in u_points {
        let [g, g1, g2] = gf_derivatives(dist, u)?;
        worst = worst.max(((1.0 + u) * g2 - mu * u * g1 - mu * g).abs());
    }
    Ok(worst)
}

/// Stationary moment relations of the Lotka–Volterra master equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentIdentities {
    /// `λ1²(1 + n̄1) − n̄1 − E[n1 n2]`
    pub r_a: f64,
    /// `−λ2² n̄2 + n̄1 + E[n1 n2]`
    pub r_b: f64,
    /// `n̄2 / (1 + n̄1)`
    pub ratio: f64,
    /// `λ1² / λ2²`
    pub ratio_expected: f64,
}

pub fn moment_identity_residuals(
    dist: &DiagonalDistribution,
    l1: f64,
    l2: f64,
) -> Result<MomentIdentities, SolveError> {
    let modes = dist.lattice.modes();
    if modes != 2 {
        return Err(SolveError::ModeCount {
            expected: 2,
            got: modes,
        });
    }
    let ms = moments(dist);
    let (n1, n2, n12) = (ms.mean[0], ms.mean[1], ms.second[0][1]);
    let (a, b) = (l1 * l1, l2 * l2);
    Ok(MomentIdentities {
        r_a: a * (1.0 + n1) - n1 - n12,
        r_b: -b * n2 + n1 + n12,
        ratio: n2 / (1.0 + n1),
        ratio_expected: a / b,
    })
}

/// Largest relative detailed-balance defect
/// `|p_m W(m→n) − p_n W(n→m)| / max(p_m W(m→n), p_n W(n→m))` over all edges.
pub fn detailed_balance_defect(gen: &SparseGenerator, dist: &DiagonalDistribution) -> f64 {
    let p = &dist.p;
    let mut worst = 0.0f64;
    for m in 0..gen.dim() {
        for (n, w) in gen.column(m) {
            let forward = p[m] * w;
            let backward = p[n] * gen.entry(m, n);
            let scale = forward.max(backward);
            if scale > 0.0 {
                worst = worst.max((forward - backward).abs() / scale);
            }
        }
    }
    worst
}
