//! Integer occupation-number open systems as classical master equations.
//!
//! A model is a set of modes plus monomial jump operators
//! `λ · Π a_j^{p_j} (a_j^+)^{q_j}`. Restricted to diagonal density matrices the
//! Lindblad dissipator built from these operators is a continuous-time Markov
//! chain on occupation vectors; this crate compiles it ([`cme`]), solves it
//! exactly on a truncated lattice ([`solver`]), samples it ([`ssa`]), and
//! carries the closed-form results used to cross-check everything
//! ([`analytic`], [`meanfield`]).
//!
//! The crate is `no_std` and only needs `alloc`.

#![cfg_attr(not(test), no_std)]
#![deny(unsafe_code)]

extern crate alloc;

pub mod analytic;
pub mod cme;
pub mod dsl;
pub mod linalg;
pub mod meanfield;
pub mod model;
pub mod numfmt;
pub mod solver;
pub mod ssa;

pub use cme::{
    build_generator, displacement, drift_exact, enumerate_states, jump_rate, Manifold, OccState, SparseGenerator,
    TruncatedLattice,
};
pub use dsl::{parse_model, serialize_model, ParseError};
pub use model::{
    builtin_model, conserved_totals, validate, Builtin, ConservationVector, Factor, FactorKind, JumpOperator, ModeId,
    ModelSpec, ValidationError,
};
pub use solver::{
    evolve, gf_eval, gf_ode_residual, moment_identity_residuals, moments, stationary, DiagonalDistribution, MomentSet,
    SolveError,
};
pub use ssa::{sample_trajectories, tv_distance, EmpiricalDistribution};
