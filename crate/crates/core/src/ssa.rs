//! Gillespie direct-method sampling of the jump process on the untruncated
//! state space.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::ops::Range;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use thiserror::Error;

use crate::cme::{displacement, jump_rate, shifted};
use crate::model::ModelSpec;
use crate::solver::DiagonalDistribution;

/// Events allowed per trajectory before it is declared runaway.
pub const MAX_EVENTS: u64 = 200_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SsaError {
    #[error("time must be finite and non-negative, got {0}")]
    BadTime(f64),
    #[error("trajectory count must be at least 1")]
    NoTrajectories,
    #[error("initial state has {got} components, model has {expected} modes")]
    InitLength { expected: usize, got: usize },
    #[error("trajectory {trajectory} exceeded {MAX_EVENTS} events")]
    Runaway { trajectory: u64 },
    #[error("cannot combine histograms with different modes or seeds")]
    Incompatible,
}

/// Occupancy histogram of trajectory end states.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmpiricalDistribution {
    modes: usize,
    counts: BTreeMap<Vec<u64>, u64>,
    trajectories: u64,
    seed: u64,
}

impl EmpiricalDistribution {
    pub fn new(modes: usize, seed: u64) -> Self {
        EmpiricalDistribution {
            modes,
            counts: BTreeMap::new(),
            trajectories: 0,
            seed,
        }
    }

    pub fn record(&mut self, state: Vec<u64>) {
        debug_assert_eq!(state.len(), self.modes);
        *self.counts.entry(state).or_insert(0) += 1;
        self.trajectories += 1;
    }

    /// Adds another histogram built from the same seed; the result does not
    /// depend on merge order.
    pub fn merge(&mut self, other: EmpiricalDistribution) -> Result<(), SsaError> {
        if other.modes != self.modes || other.seed != self.seed {
            return Err(SsaError::Incompatible);
        }
        for (state, c) in other.counts {
            *self.counts.entry(state).or_insert(0) += c;
        }
        self.trajectories += other.trajectories;
        Ok(())
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn trajectories(&self) -> u64 {
        self.trajectories
    }

    pub fn count(&self, state: &[u64]) -> u64 {
        self.counts.get(state).copied().unwrap_or(0)
    }

    pub fn probability(&self, state: &[u64]) -> f64 {
        if self.trajectories == 0 {
            return 0.0;
        }
        self.count(state) as f64 / self.trajectories as f64
    }

    /// States in lexicographic order with their counts.
    pub fn iter(&self) -> impl Iterator<Item = (&[u64], u64)> {
        self.counts.iter().map(|(s, &c)| (s.as_slice(), c))
    }

    pub fn support_len(&self) -> usize {
        self.counts.len()
    }

    /// Componentwise mean occupation.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = alloc::vec![0.0; self.modes];
        for (s, c) in self.iter() {
            for (acc, &n) in m.iter_mut().zip(s) {
                *acc += (n * c) as f64;
            }
        }
        m.iter_mut().for_each(|x| *x /= self.trajectories.max(1) as f64);
        m
    }
}

/// Independent generator for trajectory `k`: the ChaCha8 key comes from
/// `seed`, the stream id is `k`.
pub fn trajectory_rng(seed: u64, k: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k);
    rng
}

/// Uniform on (0, 1] with 53 random bits.
fn unit_open_closed(rng: &mut ChaCha8Rng) -> f64 {
    ((rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

struct Channels {
    jumps: Vec<(usize, Vec<i64>)>,
}

impl Channels {
    fn new(spec: &ModelSpec) -> Self {
        let m = spec.mode_count();
        Channels {
            jumps: (0..spec.jumps.len())
                .map(|j| (j, displacement(&spec.jumps[j], m)))
                .collect(),
        }
    }
}

fn simulate(spec: &ModelSpec, ch: &Channels, init: &[u64], t: f64, rng: &mut ChaCha8Rng) -> Option<Vec<u64>> {
    let mut n = init.to_vec();
    let mut now = 0.0;
    let mut rates = alloc::vec![0.0; ch.jumps.len()];
    for _ in 0..MAX_EVENTS {
        let mut total = 0.0;
        for (r, (j, _)) in rates.iter_mut().zip(&ch.jumps) {
            *r = jump_rate(&spec.jumps[*j], &n);
            total += *r;
        }
        if total <= 0.0 {
            return Some(n);
        }
        now += -libm::log(unit_open_closed(rng)) / total;
        if now > t {
            return Some(n);
        }
        let target = unit_open_closed(rng) * total;
        let mut acc = 0.0;
        let mut pick = None;
        for (i, &r) in rates.iter().enumerate() {
            if r > 0.0 {
                acc += r;
                pick = Some(i);
                if target <= acc {
                    break;
                }
            }
        }
        let d = &ch.jumps[pick.expect("positive total rate")].1;
        n = shifted(&n, d).expect("a firing jump never drives an occupation negative");
    }
    None
}

/// One trajectory, `k`-th of the run seeded by `seed`; returns the state at `t`.
pub fn simulate_one(spec: &ModelSpec, init: &[u64], t: f64, seed: u64, k: u64) -> Result<Vec<u64>, SsaError> {
    check(spec, init, t)?;
    simulate(spec, &Channels::new(spec), init, t, &mut trajectory_rng(seed, k))
        .ok_or(SsaError::Runaway { trajectory: k })
}

fn check(spec: &ModelSpec, init: &[u64], t: f64) -> Result<(), SsaError> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(SsaError::BadTime(t));
    }
    if init.len() != spec.mode_count() {
        return Err(SsaError::InitLength {
            expected: spec.mode_count(),
            got: init.len(),
        });
    }
    Ok(())
}

/// Histogram of trajectories `range` of the run seeded by `seed`. Splitting a
/// run into ranges and merging the parts reproduces the whole run exactly.
pub fn sample_range(
    spec: &ModelSpec,
    init: &[u64],
    t: f64,
    range: Range<u64>,
    seed: u64,
) -> Result<EmpiricalDistribution, SsaError> {
    check(spec, init, t)?;
    let ch = Channels::new(spec);
    let mut hist = EmpiricalDistribution::new(spec.mode_count(), seed);
    for k in range {
        let end =
            simulate(spec, &ch, init, t, &mut trajectory_rng(seed, k)).ok_or(SsaError::Runaway { trajectory: k })?;
        hist.record(end);
    }
    Ok(hist)
}

/// `count` independent trajectories from `init`, recorded at time `t`.
pub fn sample_trajectories(
    spec: &ModelSpec,
    init: &[u64],
    t: f64,
    count: u64,
    seed: u64,
) -> Result<EmpiricalDistribution, SsaError> {
    if count == 0 {
        return Err(SsaError::NoTrajectories);
    }
    sample_range(spec, init, t, 0..count, seed)
}

/// `½ Σ |p̂ − p|` over the union of supports.
pub fn tv_distance(emp: &EmpiricalDistribution, exact: &DiagonalDistribution) -> Result<f64, SsaError> {
    if emp.modes != exact.lattice().modes() {
        return Err(SsaError::Incompatible);
    }
    let mut sum = 0.0;
    for (s, p) in exact.iter() {
        sum += (emp.probability(s) - p).abs();
    }
    for (s, _) in emp.iter() {
        if exact.lattice().index_of(s).is_none() {
            sum += emp.probability(s);
        }
    }
    Ok((0.5 * sum).min(1.0))
}
