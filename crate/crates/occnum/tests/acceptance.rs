//! Acceptance criteria, one PASS/FAIL line each. Lines go straight to stderr
//! so they show up whether or not the test passes.

use std::io::Write;
use std::sync::Arc;

use occnum::io::histogram_csv;
use occnum::parallel::sample_parallel;
use occnum_core::analytic::{
    cannibal_ratio, cannibal_stationary, evolve_coefficients, lvm_special_gf, oscillator_moments,
    truncated_lvm_generator, CannibalParams, PolynomialGF, TruncatedLvmVariant,
};
use occnum_core::meanfield::{faq_residual, sample_points};
use occnum_core::model::{BuiltinKind, ConservationVector};
use occnum_core::solver::detailed_balance_defect;
use occnum_core::*;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

struct Outcome {
    pass: bool,
    detail: String,
}

type Criterion = (&'static str, fn() -> Outcome);

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn solve_box(b: &Builtin, caps: &[u64]) -> (SparseGenerator, DiagonalDistribution) {
    let spec = b.spec();
    let lattice = Arc::new(enumerate_states(&spec, caps, None).unwrap());
    let g = build_generator(&spec, &lattice);
    let p = stationary(&g).unwrap();
    (g, p)
}

fn oscillator_stationary(mu: f64) -> DiagonalDistribution {
    let b = Builtin::new(BuiltinKind::Oscillator, &[mu]).unwrap();
    solve_box(&b, &b.default_caps().unwrap()).1
}

fn manifold_lattice(spec: &ModelSpec, n: u64) -> Arc<TruncatedLattice> {
    let mf = Manifold {
        vector: ConservationVector(vec![1, 1]),
        total: n as i64,
    };
    Arc::new(enumerate_states(spec, &[n, n], Some(mf)).unwrap())
}

fn criterion_1() -> Outcome {
    let mut worst_rel = 0.0f64;
    let mut worst_ode = 0.0f64;
    for mu in [0.01, 1.0, 50.0] {
        let p = oscillator_stationary(mu);
        let m = moments(&p);
        let exact = oscillator_moments(mu).unwrap().exact;
        worst_rel = worst_rel
            .max(rel(m.mean[0], exact.mean[0]))
            .max(rel(m.variance[0], exact.variance[0]));
        worst_ode = worst_ode.max(gf_ode_residual(&p, mu, &[0.0, 0.25, 0.5, 0.75, 1.0]).unwrap());
    }
    outcome(
        worst_rel <= 1e-6 && worst_ode <= 1e-8,
        format!("max rel moment error {worst_rel:.2e} (<= 1e-6), gf-ode residual {worst_ode:.2e} (<= 1e-8)"),
    )
}

fn criterion_2() -> Outcome {
    let large = moments(&oscillator_stationary(50.0));
    let small = moments(&oscillator_stationary(0.01));
    let checks = [
        ("mu=50 mean", rel(large.mean[0], 25.5), 0.02),
        ("mu=50 variance", rel(large.variance[0], 37.75), 0.05),
        ("mu=0.01 mean", rel(small.mean[0], 1.0 / 3.0), 0.01),
        ("mu=0.01 variance", rel(small.variance[0], 2.0 / 9.0), 0.02),
        ("mu=0.01 rel fluct", rel(small.rel_fluct[0].unwrap(), 2f64.sqrt()), 0.02),
    ];
    let detail = checks
        .iter()
        .map(|(name, v, lim)| {
            format!(
                "{name} {:.3}% {} {:.0}%",
                100.0 * v,
                if v <= lim { "<=" } else { ">" },
                100.0 * lim
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    outcome(checks.iter().all(|(_, v, lim)| v <= lim), detail)
}

fn criterion_3() -> Outcome {
    let (l1, l2) = (2f64.sqrt(), 3f64.sqrt());
    let b = Builtin::new(BuiltinKind::Lvm, &[l1, l2]).unwrap();
    let (_, p) = solve_box(&b, &[80, 80]);
    let mut gf = 0.0f64;
    for u in [0.0, 0.5, 1.0] {
        for v in [0.0, 0.5, 1.0] {
            gf = gf.max((gf_eval(&p, &[u, v]) - lvm_special_gf(l1, u, v).unwrap()).abs());
        }
    }
    let m = moments(&p);
    let means = (m.mean[0] - 2.0).abs().max((m.mean[1] - 2.0).abs());
    let fluct = (m.rel_fluct[0].unwrap() - 1.5f64.sqrt()).abs();
    let id = moment_identity_residuals(&p, l1, l2).unwrap();
    let ids = id.r_a.abs().max(id.r_b.abs());
    let pass = gf <= 1e-6 && means <= 1e-6 && fluct <= 1e-6 && ids <= 1e-6;
    outcome(
        pass,
        format!(
            "cap 80: gf grid {gf:.2e}, means {means:.2e}, rel fluct {fluct:.2e}, identities {ids:.2e} (all <= 1e-6)"
        ),
    )
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut unit = || (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
    let mut worst = 0.0f64;
    let mut pairs = Vec::new();
    while pairs.len() < 5 {
        let (l1, l2) = ((0.3 + 2.7 * unit()).sqrt(), (0.3 + 2.7 * unit()).sqrt());
        let b = Builtin::new(BuiltinKind::Lvm, &[l1, l2]).unwrap();
        let mut caps = b.default_caps().unwrap();
        let mut p = solve_box(&b, &caps).1;
        for _ in 0..3 {
            if p.tail_mass() <= 1e-12 {
                break;
            }
            caps = caps.iter().map(|c| c + c / 2).collect();
            p = solve_box(&b, &caps).1;
        }
        if p.tail_mass() > 1e-12 {
            continue;
        }
        let id = moment_identity_residuals(&p, l1, l2).unwrap();
        worst = worst
            .max(id.r_a.abs())
            .max(id.r_b.abs())
            .max((id.ratio - id.ratio_expected).abs());
        pairs.push(format!("({:.3},{:.3})", l1 * l1, l2 * l2));
    }
    outcome(
        worst <= 1e-5,
        format!(
            "lambda^2 pairs {}: worst residual {worst:.2e} (<= 1e-5)",
            pairs.join(" ")
        ),
    )
}

fn criterion_5() -> Outcome {
    let bosonic = truncated_lvm_generator(2, TruncatedLvmVariant::Bosonic);
    let expected = occnum_core::linalg::Matrix::from_rows(&[&[-2.0, 0.0, 0.0], &[2.0, -2.0, 0.0], &[0.0, 2.0, 0.0]]);
    let matrix_ok = bosonic == expected;

    let a0 = PolynomialGF::from_coeffs(vec![1.0, 0.0, 0.0]);
    let mut closed = 0.0f64;
    for t in [0.1, 0.5, 1.0, 2.0, 5.0] {
        let a = evolve_coefficients(&bosonic, &a0, t).unwrap();
        let e = (-2.0 * t).exp();
        closed = closed
            .max((a.coeffs()[0] - e).abs())
            .max((a.coeffs()[1] - 2.0 * t * e).abs());
    }
    let late = evolve_coefficients(&bosonic, &a0, 40.0).unwrap().means();
    let limit = late.0.abs().max((late.1 - 2.0).abs());

    let mass_action = truncated_lvm_generator(2, TruncatedLvmVariant::MassAction);
    let b0 = PolynomialGF::from_coeffs(vec![0.3, 0.5, 0.2]);
    let np_drift = [0.5, 2.0, 10.0]
        .iter()
        .map(|&t| (evolve_coefficients(&mass_action, &b0, t).unwrap().coeffs()[0] - 0.3).abs())
        .fold(0.0, f64::max);

    let spec = builtin_model("lvm_truncated", &[]).unwrap();
    let mut mismatches = 0;
    for n in 1..=12u64 {
        let lattice = manifold_lattice(&spec, n);
        let g = build_generator(&spec, &lattice);
        let l = truncated_lvm_generator(n, TruncatedLvmVariant::Bosonic);
        for from in 0..g.dim() {
            for to in 0..g.dim() {
                let (j, k) = (lattice.state(to)[1] as usize, lattice.state(from)[1] as usize);
                if g.entry(to, from) != 2.0 * l[(j, k)] {
                    mismatches += 1;
                }
            }
        }
    }
    let pass = matrix_ok && closed <= 1e-10 && limit <= 1e-9 && np_drift <= 1e-12 && mismatches == 0;
    outcome(
        pass,
        format!(
            "matrix {}, closed form {closed:.2e} (<= 1e-10), late means off by {limit:.2e}, mass-action a drift {np_drift:.2e}, cme vs 2L mismatches {mismatches} (N=1..12)",
            if matrix_ok { "exact" } else { "WRONG" }
        ),
    )
}

fn criterion_6() -> Outcome {
    let spec = builtin_model("cannibal", &[1.0, 0.5f64.sqrt()]).unwrap();
    let lattice = manifold_lattice(&spec, 2);
    let g = build_generator(&spec, &lattice);
    let p = stationary(&g).unwrap();
    let m = moments(&p);
    let means = (m.mean[0] - 4.0 / 7.0).abs().max((m.mean[1] - 10.0 / 7.0).abs());
    let balance = detailed_balance_defect(&g, &p);
    let r: Vec<f64> = [50, 100, 200]
        .iter()
        .map(|&n| cannibal_ratio(n, 0.5).unwrap())
        .collect();
    let decreasing = r[0] > r[1] && r[1] > r[2];
    let mut direct = 0.0f64;
    for kappa in [0.2, 0.8] {
        for n in 1..=50 {
            let (n1, n2) = cannibal_stationary(CannibalParams::new(n, kappa, 1.0).unwrap()).means();
            direct = direct.max(rel(cannibal_ratio(n, kappa).unwrap(), n1 / n2));
        }
    }
    let pass = means <= 1e-10 && balance <= 1e-10 && decreasing && direct <= 1e-12;
    outcome(
        pass,
        format!(
            "means {means:.2e}, detailed balance {balance:.2e} (<= 1e-10), ratio N=50,100,200: {:.5} {:.5} {:.5}, closed vs direct sum {direct:.2e} (<= 1e-12)",
            r[0], r[1], r[2]
        ),
    )
}

fn criterion_7() -> Outcome {
    let spec = builtin_model("lvm_truncated", &[]).unwrap();
    let lattice = manifold_lattice(&spec, 2);
    let g = build_generator(&spec, &lattice);
    // Coefficient time 1 is master-equation time 1/2.
    let t = 0.5;
    let exact = evolve(
        &g,
        &DiagonalDistribution::point_mass(Arc::clone(&lattice), &[2, 0]).unwrap(),
        t,
    )
    .unwrap();
    let one = sample_parallel(&spec, &[2, 0], t, 100_000, 7, 1).unwrap();
    let many = sample_parallel(&spec, &[2, 0], t, 100_000, 7, 6).unwrap();
    let tv = tv_distance(&many, &exact).unwrap();
    let identical = histogram_csv(&one) == histogram_csv(&many);
    outcome(
        tv <= 0.02 && identical,
        format!("TV {tv:.4} (<= 0.02), 1 vs 6 workers byte-identical: {identical}"),
    )
}

fn criterion_8() -> Outcome {
    let models = [
        Builtin::new(BuiltinKind::Oscillator, &[1.7, 0.8]).unwrap(),
        Builtin::new(BuiltinKind::Lvm, &[1.3, 0.7]).unwrap(),
        Builtin::new(BuiltinKind::Cannibal, &[0.9, 1.4]).unwrap(),
    ];
    let res: Vec<f64> = models
        .iter()
        .map(|b| faq_residual(b, &sample_points(b.spec().mode_count(), 100, 3.0, 8)))
        .collect();
    outcome(
        res.iter().all(|&r| r <= 1e-12),
        format!(
            "oscillator {:.2e}, lvm {:.2e}, cannibal {:.2e} (<= 1e-12)",
            res[0], res[1], res[2]
        ),
    )
}

fn criterion_9() -> Outcome {
    let mut cols = 0.0f64;
    let mut mass = 0.0f64;
    let mut semigroup = 0.0f64;
    let mut round_trip = true;
    for b in [
        Builtin::new(BuiltinKind::Oscillator, &[3.0, 1.0]).unwrap(),
        Builtin::new(BuiltinKind::Lvm, &[1.0, 1.2]).unwrap(),
        Builtin::LvmTruncated,
        Builtin::new(BuiltinKind::Cannibal, &[1.0, 0.6]).unwrap(),
    ] {
        let spec = b.spec();
        let text = serialize_model(&spec);
        round_trip &= parse_model(&text)
            .map(|s| s == spec && serialize_model(&s) == text)
            .unwrap_or(false);
        let (lattice, init) = match b.default_caps() {
            Some(caps) => (
                Arc::new(enumerate_states(&spec, &caps, None).unwrap()),
                vec![0; spec.mode_count()],
            ),
            None => (manifold_lattice(&spec, 10), vec![10, 0]),
        };
        let g = build_generator(&spec, &lattice);
        cols = cols.max(g.column_sums().iter().fold(0.0f64, |w, s| w.max(s.abs())) / g.max_abs());
        let p0 = DiagonalDistribution::point_mass(Arc::clone(&lattice), &init).unwrap();
        let once = evolve(&g, &p0, 0.7).unwrap();
        let twice = evolve(&g, &evolve(&g, &p0, 0.3).unwrap(), 0.4).unwrap();
        mass = mass.max((once.probabilities().iter().sum::<f64>() - 1.0).abs());
        semigroup = semigroup.max(once.tv_distance(&twice).unwrap());
    }
    let pass = cols <= 1e-12 && mass <= 1e-12 && semigroup <= 1e-9 && round_trip;
    outcome(
        pass,
        format!("column sums {cols:.2e}, mass drift {mass:.2e} (<= 1e-12), semigroup TV {semigroup:.2e} (<= 1e-9), DSL round trip {round_trip}"),
    )
}

#[test]
fn acceptance() {
    let criteria: [Criterion; 9] = [
        ("oscillator exact vs analytic", criterion_1),
        ("oscillator limits", criterion_2),
        ("LVM special case", criterion_3),
        ("LVM moment identities", criterion_4),
        ("truncated LVM N=2", criterion_5),
        ("cannibal model", criterion_6),
        ("SSA vs exact transient", criterion_7),
        ("FAQ decompositions", criterion_8),
        ("structural suites", criterion_9),
    ];
    let mut failed = Vec::new();
    let mut err = std::io::stderr().lock();
    writeln!(err).unwrap();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        let status = if o.pass { "PASS" } else { "FAIL" };
        writeln!(err, "{status} criterion {}: {name}: {}", i + 1, o.detail).unwrap();
        if !o.pass {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}
