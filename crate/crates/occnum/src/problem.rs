//! Turning a model plus truncation flags into a lattice.

use std::sync::Arc;

use occnum_core::cme::CmeError;
use occnum_core::{conserved_totals, enumerate_states, Builtin, Manifold, ModelSpec, TruncatedLattice};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SetupError {
    #[error("model conserves {vector:?}·n; pass --N to fix the total")]
    NeedTotal { vector: Vec<i64> },
    #[error("model {0} has no conserved total; --N does not apply")]
    UnexpectedTotal(String),
    #[error("model {0} has no default truncation; pass --cap")]
    NeedCaps(String),
    #[error("--cap takes 1 or {expected} values, got {got}")]
    CapCount { expected: usize, got: usize },
    #[error("no default initial state for this lattice; pass --init")]
    NeedInit,
    #[error("initial state {0:?} is not on the lattice")]
    InitOffLattice(Vec<u64>),
    #[error(transparent)]
    Lattice(#[from] CmeError),
}

/// A compiled-ready model: its operators, the built-in it came from (if any)
/// and the truncated lattice it is solved on.
#[derive(Debug, Clone)]
pub struct Problem {
    pub spec: ModelSpec,
    pub builtin: Option<Builtin>,
    pub lattice: Arc<TruncatedLattice>,
}

impl Problem {
    pub fn new(
        spec: ModelSpec,
        builtin: Option<Builtin>,
        caps: Option<&[u64]>,
        total: Option<u64>,
    ) -> Result<Self, SetupError> {
        let lattice = Arc::new(lattice_for(&spec, builtin.as_ref(), caps, total)?);
        Ok(Problem { spec, builtin, lattice })
    }

    /// `init` if given and on the lattice, else [`default_init`].
    pub fn init(&self, init: Option<&[u64]>) -> Result<Vec<u64>, SetupError> {
        let state = match init {
            Some(s) => s.to_vec(),
            None => default_init(&self.lattice).ok_or(SetupError::NeedInit)?,
        };
        if self.lattice.index_of(&state).is_none() {
            return Err(SetupError::InitOffLattice(state));
        }
        Ok(state)
    }
}

fn broadcast(caps: &[u64], modes: usize) -> Result<Vec<u64>, SetupError> {
    match caps.len() {
        1 => Ok(vec![caps[0]; modes]),
        n if n == modes => Ok(caps.to_vec()),
        got => Err(SetupError::CapCount { expected: modes, got }),
    }
}

/// Models with a conserved linear total live on the manifold `c·n = N` of
/// the first conservation vector; all others on the box `n ≤ caps`, with
/// built-in defaults when `caps` is absent.
pub fn lattice_for(
    spec: &ModelSpec,
    builtin: Option<&Builtin>,
    caps: Option<&[u64]>,
    total: Option<u64>,
) -> Result<TruncatedLattice, SetupError> {
    let m = spec.mode_count();
    let caps = caps.map(|c| broadcast(c, m)).transpose()?;
    match conserved_totals(spec).into_iter().next() {
        Some(vector) => {
            let Some(n) = total else {
                return Err(SetupError::NeedTotal { vector: vector.0 });
            };
            let manifold = Manifold {
                vector,
                total: n as i64,
            };
            let caps = match caps.or_else(|| manifold.implied_caps()) {
                Some(c) => c,
                None => return Err(SetupError::NeedCaps(spec.name.clone())),
            };
            Ok(enumerate_states(spec, &caps, Some(manifold))?)
        }
        None => {
            if total.is_some() {
                return Err(SetupError::UnexpectedTotal(spec.name.clone()));
            }
            let caps = match caps.or_else(|| builtin.and_then(Builtin::default_caps)) {
                Some(c) => c,
                None => return Err(SetupError::NeedCaps(spec.name.clone())),
            };
            Ok(enumerate_states(spec, &caps, None)?)
        }
    }
}

/// The empty state on a box; on a manifold, the whole total in the first
/// mode whose weight divides it.
pub fn default_init(lattice: &TruncatedLattice) -> Option<Vec<u64>> {
    let m = lattice.modes();
    let state = match lattice.manifold() {
        None => vec![0; m],
        Some(mf) => {
            let i = mf.vector.0.iter().position(|&c| c > 0 && mf.total % c == 0)?;
            let mut s = vec![0; m];
            s[i] = (mf.total / mf.vector.0[i]) as u64;
            s
        }
    };
    lattice.index_of(&state).map(|_| state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use occnum_core::model::BuiltinKind;

    fn builtin(kind: BuiltinKind, params: &[f64]) -> (ModelSpec, Option<Builtin>) {
        let b = Builtin::new(kind, params).unwrap();
        (b.spec(), Some(b))
    }

    #[test]
    fn oscillator_default_box() {
        let (spec, b) = builtin(BuiltinKind::Oscillator, &[1.0]);
        let p = Problem::new(spec, b, None, None).unwrap();
        assert_eq!(p.lattice.len(), 33);
        assert_eq!(p.init(None).unwrap(), vec![0]);
        assert!(matches!(p.init(Some(&[40])), Err(SetupError::InitOffLattice(_))));
    }

    #[test]
    fn cannibal_needs_total() {
        let (spec, b) = builtin(BuiltinKind::Cannibal, &[1.0, 1.0]);
        assert!(matches!(
            Problem::new(spec.clone(), b, None, None),
            Err(SetupError::NeedTotal { .. })
        ));
        let p = Problem::new(spec, b, None, Some(4)).unwrap();
        assert_eq!(p.lattice.len(), 5);
        assert_eq!(p.init(None).unwrap(), vec![4, 0]);
    }

    #[test]
    fn cap_lists() {
        let (spec, b) = builtin(BuiltinKind::Lvm, &[1.0, 1.0]);
        assert_eq!(
            Problem::new(spec.clone(), b, Some(&[3]), None).unwrap().lattice.len(),
            16
        );
        assert_eq!(
            Problem::new(spec.clone(), b, Some(&[3, 1]), None)
                .unwrap()
                .lattice
                .len(),
            8
        );
        assert!(matches!(
            Problem::new(spec.clone(), b, Some(&[1, 2, 3]), None),
            Err(SetupError::CapCount { .. })
        ));
        assert!(matches!(
            Problem::new(spec, b, None, Some(3)),
            Err(SetupError::UnexpectedTotal(_))
        ));
    }

    #[test]
    fn file_model_without_caps() {
        let spec = ModelSpec::new("birth", &["x"]).with_jump(1.0, vec![occnum_core::Factor::create(0, 1)]);
        assert!(matches!(
            Problem::new(spec, None, None, None),
            Err(SetupError::NeedCaps(_))
        ));
    }
}
