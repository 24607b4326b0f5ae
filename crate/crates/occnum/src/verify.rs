//! The `verify` suite: every invariant that applies to a model, as a table of
//! measured values against limits.

use std::fmt::Write as _;
use std::sync::Arc;

use occnum_core::analytic::{
    cannibal_stationary, lvm_special_moments, oscillator_gf, oscillator_moments, truncated_lvm_generator,
    CannibalParams, OscillatorGf, TruncatedLvmVariant,
};
use occnum_core::meanfield::{faq_residual, meanfield_rhs, sample_points};
use occnum_core::numfmt::g17;
use occnum_core::solver::{detailed_balance_defect, stationary_residual, STATIONARY_RESIDUAL};
use occnum_core::{
    build_generator, drift_exact, evolve, gf_ode_residual, moment_identity_residuals, moments, parse_model,
    serialize_model, stationary, Builtin, DiagonalDistribution, SparseGenerator,
};

use crate::problem::{default_init, lattice_for, Problem};

/// Stationary tail mass below which the LVM checks are trusted.
pub const LVM_TAIL: f64 = 1e-12;
/// Times the LVM cap may grow by half when the tail is too heavy.
pub const LVM_CAP_GROWTH: usize = 4;
pub const FAQ_POINTS: usize = 100;
pub const FAQ_RADIUS: f64 = 3.0;
pub const FAQ_SEED: u64 = 2024;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: f64,
}

impl Check {
    /// `NaN` (a failed computation) never passes.
    pub fn pass(&self) -> bool {
        self.value <= self.limit
    }
}

#[derive(Debug, Clone, Default)]
pub struct Report {
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
}

impl Report {
    fn push(&mut self, name: impl Into<String>, value: f64, limit: f64) {
        self.checks.push(Check {
            name: name.into(),
            value,
            limit,
        });
    }

    fn failed(&mut self, name: impl Into<String>, why: impl std::fmt::Display) {
        let name = name.into();
        self.notes.push(format!("{name}: {why}"));
        self.push(name, f64::NAN, 0.0);
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(Check::pass)
    }

    /// `status,check,value,limit` rows, notes as `#` comments.
    pub fn table(&self) -> String {
        let mut out = String::from("status,check,value,limit\n");
        for c in &self.checks {
            let status = if c.pass() { "PASS" } else { "FAIL" };
            let _ = writeln!(out, "{status},{},{},{}", c.name, g17(c.value), g17(c.limit));
        }
        for n in &self.notes {
            let _ = writeln!(out, "# {n}");
        }
        out
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn max_column_sum(g: &SparseGenerator) -> f64 {
    let scale = g.max_abs().max(f64::MIN_POSITIVE);
    g.column_sums().iter().fold(0.0f64, |w, s| w.max(s.abs())) / scale
}

/// Runs every applicable check on `problem`. `caps_given` disables the
/// automatic LVM cap growth.
pub fn verify(problem: &Problem, caps_given: bool) -> Report {
    let mut r = Report::default();
    let spec = &problem.spec;

    let text = serialize_model(spec);
    let round_trip = match parse_model(&text) {
        Ok(back) if back == *spec && serialize_model(&back) == text => 0.0,
        Ok(_) => 1.0,
        Err(e) => {
            r.notes.push(format!("dsl_round_trip: {e}"));
            1.0
        }
    };
    r.push("dsl_round_trip", round_trip, 0.0);

    let g = build_generator(spec, &problem.lattice);
    r.push("generator_column_sums", max_column_sum(&g), 1e-12);
    structural_evolve(&mut r, &g);

    if let Some(b) = problem.builtin {
        leading_order_drift(&mut r, &b);
        if !matches!(b, Builtin::LvmTruncated) {
            let pts = sample_points(spec.mode_count(), FAQ_POINTS, FAQ_RADIUS, FAQ_SEED);
            r.push("faq_residual", faq_residual(&b, &pts), 1e-12);
        }
    }

    match problem.builtin {
        Some(Builtin::Oscillator { mu, .. }) => oscillator(&mut r, &g, mu),
        Some(b @ Builtin::Lvm { l1, l2 }) => {
            lvm(&mut r, problem, &b, caps_given, l1, l2);
        }
        Some(Builtin::LvmTruncated) => lvm_truncated(&mut r, &g),
        Some(Builtin::Cannibal { l1, l2 }) => cannibal(&mut r, &g, l1, l2),
        None => match stationary(&g) {
            Ok(p) => r.push(
                "stationary_residual",
                stationary_residual(&g, p.probabilities()),
                STATIONARY_RESIDUAL,
            ),
            Err(e) => r.notes.push(format!("stationary: skipped ({e})")),
        },
    }
    r
}

fn structural_evolve(r: &mut Report, g: &SparseGenerator) {
    let lattice = Arc::clone(g.lattice());
    let Some(init) = default_init(&lattice) else {
        r.notes.push("evolve checks: skipped (no default initial state)".into());
        return;
    };
    let p0 = DiagonalDistribution::point_mass(lattice, &init).expect("default state is on the lattice");
    let (t1, t2) = (0.2, 0.3);
    let run = || -> Result<(f64, f64), occnum_core::SolveError> {
        let once = evolve(g, &p0, t1 + t2)?;
        let twice = evolve(g, &evolve(g, &p0, t1)?, t2)?;
        let mass = (once.probabilities().iter().sum::<f64>() - 1.0).abs();
        Ok((mass, once.tv_distance(&twice)?))
    };
    match run() {
        Ok((mass, tv)) => {
            r.push("evolve_mass", mass, 1e-12);
            r.push("evolve_semigroup_tv", tv, 1e-9);
        }
        Err(e) => r.failed("evolve", e),
    }
}

/// Exact and leading-order drifts agree to `3/min n` at `n = 1000`.
fn leading_order_drift(r: &mut Report, b: &Builtin) {
    let spec = b.spec();
    let m = spec.mode_count();
    let n: Vec<u64> = (0..m as u64).map(|i| 1000 + 300 * i).collect();
    let x: Vec<f64> = n.iter().map(|&v| v as f64).collect();
    let exact = drift_exact(&spec, &n);
    let mut worst = 0.0f64;
    for (e, p) in exact.iter().zip(meanfield_rhs(&spec)) {
        let lead = p.eval(&x);
        if lead != 0.0 {
            worst = worst.max((e / lead - 1.0).abs());
        } else {
            worst = worst.max(e.abs());
        }
    }
    r.push("drift_leading_order", worst, 3.0 / 1000.0);
}

fn oscillator(r: &mut Report, g: &SparseGenerator, mu: f64) {
    let p = match stationary(g) {
        Ok(p) => p,
        Err(e) => return r.failed("stationary", e),
    };
    r.push(
        "stationary_residual",
        stationary_residual(g, p.probabilities()),
        STATIONARY_RESIDUAL,
    );
    r.push("tail_mass", p.tail_mass(), 1e-12);
    match gf_ode_residual(&p, mu, &[0.0, 0.5, 1.0]) {
        Ok(v) => r.push("gf_ode_residual", v, 1e-8),
        Err(e) => r.failed("gf_ode_residual", e),
    }
    match (oscillator_moments(mu), oscillator_gf(mu, 1.0, OscillatorGf::Exact)) {
        (Ok(a), Ok(g1)) => {
            let m = moments(&p);
            r.push("mean_vs_phi", rel(m.mean[0], a.exact.mean[0]), 1e-6);
            r.push("variance_vs_phi", rel(m.variance[0], a.exact.variance[0]), 1e-6);
            r.push("gf_normalization", (g1 - 1.0).abs(), 1e-12);
        }
        (Err(e), _) | (_, Err(e)) => r.failed("phi_series", e),
    }
}

fn lvm(r: &mut Report, problem: &Problem, b: &Builtin, caps_given: bool, l1: f64, l2: f64) {
    let mut lattice = Arc::clone(&problem.lattice);
    let mut p = None;
    for step in 0..=LVM_CAP_GROWTH {
        let g = build_generator(&problem.spec, &lattice);
        match stationary(&g) {
            Ok(sol) => {
                let heavy = sol.tail_mass() > LVM_TAIL;
                if step == 0 {
                    r.push(
                        "stationary_residual",
                        stationary_residual(&g, sol.probabilities()),
                        STATIONARY_RESIDUAL,
                    );
                }
                p = Some(sol);
                if !heavy || caps_given || step == LVM_CAP_GROWTH {
                    break;
                }
            }
            Err(e) => return r.failed("stationary", e),
        }
        let caps: Vec<u64> = lattice.caps().iter().map(|c| c + c / 2).collect();
        match lattice_for(&problem.spec, Some(b), Some(&caps), None) {
            Ok(l) => lattice = Arc::new(l),
            Err(e) => return r.failed("lattice", e),
        }
    }
    let p = p.expect("at least one solve ran");
    r.notes
        .push(format!("identities solved with caps {:?}", lattice.caps()));
    r.push("tail_mass", p.tail_mass(), LVM_TAIL);
    let id = moment_identity_residuals(&p, l1, l2).expect("two-mode lattice");
    r.push("identity_a", id.r_a.abs(), 1e-6);
    r.push("identity_b", id.r_b.abs(), 1e-6);
    r.push("identity_ratio", (id.ratio - id.ratio_expected).abs(), 1e-6);

    let (a, c) = (l1 * l1, l2 * l2);
    let fixed = [c, a];
    let drift: f64 = meanfield_rhs(&problem.spec)
        .iter()
        .map(|d| d.eval(&fixed).abs())
        .fold(0.0, f64::max);
    r.push("meanfield_fixed_point", drift / (a * c).max(1.0), 1e-12);

    if (c - (a + 1.0)).abs() <= 1e-12 * c {
        let exact = lvm_special_moments(l1).expect("l1 is positive");
        let m = moments(&p);
        let worst = (0..2).map(|i| {
            (m.mean[i] - exact.mean[i])
                .abs()
                .max((m.variance[i] - exact.variance[i]).abs())
        });
        r.push("product_geometric_moments", worst.fold(0.0, f64::max), 1e-6);
    }
}

fn lvm_truncated(r: &mut Report, g: &SparseGenerator) {
    let lattice = g.lattice();
    let Some(mf) = lattice.manifold() else {
        return r.notes.push("coefficient matrix: skipped (no manifold)".into());
    };
    let n = mf.total as u64;
    let l = truncated_lvm_generator(n, TruncatedLvmVariant::Bosonic);
    // Lattice state (n1, n2) is coefficient index n2; the master equation runs
    // at twice the speed of the coefficient equation.
    let mut mismatch = 0usize;
    for from in 0..g.dim() {
        for to in 0..g.dim() {
            let (j, k) = (lattice.state(to)[1] as usize, lattice.state(from)[1] as usize);
            if g.entry(to, from) != 2.0 * l[(j, k)] {
                mismatch += 1;
            }
        }
    }
    r.push("coefficient_matrix_mismatches", mismatch as f64, 0.0);

    if let Some(init) = default_init(lattice) {
        let p0 = DiagonalDistribution::point_mass(Arc::clone(lattice), &init).expect("default state is on the lattice");
        match evolve(g, &p0, 50.0) {
            Ok(p) => {
                let m = moments(&p);
                r.push("late_time_prey", m.mean[0].abs(), 1e-9);
                r.push("late_time_predator", (m.mean[1] - n as f64).abs(), 1e-9);
            }
            Err(e) => r.failed("late_time", e),
        }
    }
}

fn cannibal(r: &mut Report, g: &SparseGenerator, l1: f64, l2: f64) {
    let p = match stationary(g) {
        Ok(p) => p,
        Err(e) => return r.failed("stationary", e),
    };
    r.push(
        "stationary_residual",
        stationary_residual(g, p.probabilities()),
        STATIONARY_RESIDUAL,
    );
    r.push("detailed_balance", detailed_balance_defect(g, &p), 1e-10);
    let Some(mf) = g.lattice().manifold() else { return };
    let n = mf.total as u64;
    let Ok(params) = CannibalParams::from_lambdas(n, l1, l2) else {
        return r.notes.push("closed form: skipped (N = 0)".into());
    };
    let closed = cannibal_stationary(params);
    let worst = (0..=n)
        .map(|k| rel(p.prob(&[k, n - k]), closed.by_first_mode_count(k)))
        .fold(0.0, f64::max);
    r.push("closed_form", worst, 1e-10);
    let m = moments(&p);
    r.push(
        "total_conserved",
        (m.mean[0] + m.mean[1] - n as f64).abs(),
        1e-12 * n as f64,
    );
}

#[cfg(test)]
mod tests {
    use super::*;
    use occnum_core::model::BuiltinKind;

    fn problem(kind: BuiltinKind, params: &[f64], total: Option<u64>) -> Problem {
        let b = Builtin::new(kind, params).unwrap();
        Problem::new(b.spec(), Some(b), None, total).unwrap()
    }

    #[test]
    fn builtins_pass() {
        for p in [
            problem(BuiltinKind::Oscillator, &[1.0], None),
            problem(BuiltinKind::Lvm, &[2f64.sqrt(), 3f64.sqrt()], None),
            problem(BuiltinKind::LvmTruncated, &[], Some(3)),
            problem(BuiltinKind::Cannibal, &[1.0, 0.6], Some(6)),
        ] {
            let rep = verify(&p, false);
            assert!(rep.passed(), "{}\n{}", p.spec.name, rep.table());
        }
    }

    #[test]
    fn lvm_caps_grow() {
        let rep = verify(&problem(BuiltinKind::Lvm, &[2f64.sqrt(), 3f64.sqrt()], None), false);
        assert!(
            rep.notes
                .iter()
                .any(|n| n.contains("[63, 63]") || n.contains("[94, 94]")),
            "{:?}",
            rep.notes
        );
        assert!(rep.checks.iter().any(|c| c.name == "product_geometric_moments"));
    }

    #[test]
    fn nan_fails() {
        let c = Check {
            name: "x".into(),
            value: f64::NAN,
            limit: 1.0,
        };
        assert!(!c.pass());
        let mut r = Report::default();
        r.failed("stationary", "boom");
        assert!(!r.passed());
        assert!(r.table().contains("FAIL,stationary,nan,0"));
    }
}
