use std::sync::Arc;

use occnum_core::analytic::{cannibal_ratio, cannibal_stationary, oscillator_gf, CannibalParams, OscillatorGf};
use occnum_core::meanfield::meanfield_rhs;
use occnum_core::solver::{detailed_balance_defect, stationary_residual, STATIONARY_RESIDUAL};
use occnum_core::*;
use proptest::prelude::*;

const NAMES: [&str; 4] = ["a", "b2", "x_y", "Mode"];

fn arb_spec() -> impl Strategy<Value = ModelSpec> {
    arb_spec_with(1e-3..1e3)
}

fn arb_spec_with(coefficients: std::ops::Range<f64>) -> impl Strategy<Value = ModelSpec> {
    (1usize..=3).prop_flat_map(move |m| {
        let factor = (0..m, any::<bool>(), 1u32..=3);
        let jump = (coefficients.clone(), prop::collection::vec(factor, 1..=3));
        (
            prop::collection::vec(jump, 0..5),
            prop::collection::vec(prop::option::of(0.0f64..10.0), m),
        )
            .prop_map(move |(jumps, freqs)| {
                let mut spec = ModelSpec::new("generated", &NAMES[..m]);
                for (c, fs) in jumps {
                    let mut seen = Vec::new();
                    let mut factors = Vec::new();
                    for (mode, create, power) in fs {
                        if seen.contains(&mode) {
                            continue;
                        }
                        seen.push(mode);
                        factors.push(if create {
                            Factor::create(mode, power)
                        } else {
                            Factor::destroy(mode, power)
                        });
                    }
                    spec = spec.with_jump(c, factors);
                }
                spec.frequencies = freqs;
                spec
            })
    })
}

fn small_lattice(spec: &ModelSpec) -> Arc<TruncatedLattice> {
    let m = spec.mode_count();
    let cap = match m {
        1 => 12,
        2 => 6,
        _ => 4,
    };
    Arc::new(enumerate_states(spec, &vec![cap; m], None).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn generated_specs_validate(spec in arb_spec()) {
        prop_assert!(validate(&spec).is_ok());
    }

    #[test]
    fn dsl_round_trip(spec in arb_spec()) {
        let text = serialize_model(&spec);
        let back = parse_model(&text).unwrap();
        prop_assert_eq!(&back, &spec);
        prop_assert_eq!(serialize_model(&back), text);
    }

    #[test]
    fn dsl_mutations_fail_with_location(
        spec in arb_spec(),
        pos in any::<prop::sample::Index>(),
        replacement in prop::sample::select(vec!['(', ')', ',', '*', '-', 'x', '\n', ' ', '#', '9', '.', 'é']),
        delete in any::<bool>(),
    ) {
        let mut chars: Vec<char> = serialize_model(&spec).chars().collect();
        let i = pos.index(chars.len());
        if delete {
            chars.remove(i);
        } else {
            chars[i] = replacement;
        }
        let text: String = chars.into_iter().collect();
        if let Err(e) = parse_model(&text) {
            let lines = text.split('\n').count();
            prop_assert!(e.line >= 1 && e.line <= lines, "{e} in {lines} lines");
            prop_assert!(e.column >= 1);
        }
    }

    #[test]
    fn dsl_arbitrary_text_never_panics(text in "(model|mode|jump|omega|create|destroy|[a-z0-9 ,.*()#\n-]){0,40}") {
        let _ = parse_model(&text);
    }

    #[test]
    fn conservation_vectors_annihilate_displacements(spec in arb_spec()) {
        let m = spec.mode_count();
        for c in conserved_totals(&spec) {
            prop_assert_eq!(c.0.len(), m);
            prop_assert!(c.0.iter().any(|&x| x != 0));
            for op in &spec.jumps {
                prop_assert_eq!(c.dot_signed(&displacement(op, m)), 0);
            }
        }
    }

    #[test]
    fn generator_is_a_proper_rate_matrix(spec in arb_spec()) {
        let g = build_generator(&spec, &small_lattice(&spec));
        let scale = g.max_abs().max(f64::MIN_POSITIVE);
        for (c, s) in g.column_sums().into_iter().enumerate() {
            prop_assert!(s.abs() <= 1e-12 * scale, "column {c} sums to {s}");
        }
        for (r, c, w) in g.triplets() {
            if r != c {
                prop_assert!(w > 0.0);
            }
        }
    }

    #[test]
    fn manifold_models_keep_totals(l1 in 0.2f64..3.0, l2 in 0.2f64..3.0, cap in 1u64..8) {
        for spec in [builtin_model("cannibal", &[l1, l2]).unwrap(), builtin_model("lvm_truncated", &[]).unwrap()] {
            let lattice = Arc::new(enumerate_states(&spec, &[cap, cap], None).unwrap());
            let g = build_generator(&spec, &lattice);
            for (r, c, _) in g.triplets() {
                let (a, b) = (lattice.state(r), lattice.state(c));
                prop_assert_eq!(a[0] + a[1], b[0] + b[1]);
            }
        }
    }

    #[test]
    fn cannibal_detailed_balance(l1 in 0.3f64..2.0, l2 in 0.3f64..2.0, n in 1u64..40) {
        let spec = builtin_model("cannibal", &[l1, l2]).unwrap();
        let manifold = Manifold { vector: ConservationVector(vec![1, 1]), total: n as i64 };
        let lattice = Arc::new(enumerate_states(&spec, &[n, n], Some(manifold)).unwrap());
        let g = build_generator(&spec, &lattice);
        let p = stationary(&g).unwrap();
        prop_assert!(detailed_balance_defect(&g, &p) <= 1e-10);
        prop_assert!(stationary_residual(&g, p.probabilities()) <= STATIONARY_RESIDUAL);
        let closed = cannibal_stationary(CannibalParams::from_lambdas(n, l1, l2).unwrap());
        for k in 0..=n {
            let want = closed.by_first_mode_count(k);
            let got = p.prob(&[k, n - k]);
            prop_assert!((got - want).abs() <= 1e-10 * want.max(1e-300) + 1e-15, "k={k}: {got} vs {want}");
        }
    }

    #[test]
    fn lvm_moment_identities(l1 in 0.5f64..1.5, l2 in 0.5f64..1.5) {
        let b = Builtin::new(model::BuiltinKind::Lvm, &[l1, l2]).unwrap();
        let spec = b.spec();
        let lattice = Arc::new(enumerate_states(&spec, &b.default_caps().unwrap(), None).unwrap());
        let g = build_generator(&spec, &lattice);
        let p = stationary(&g).unwrap();
        // Only pairs whose state is normalizable within the default caps.
        prop_assume!(p.tail_mass() < 1e-11);
        let id = moment_identity_residuals(&p, l1, l2).unwrap();
        prop_assert!(id.r_a.abs() <= 1e-6 && id.r_b.abs() <= 1e-6, "{id:?}");
        prop_assert!((id.ratio - id.ratio_expected).abs() <= 1e-6);
    }

    #[test]
    fn evolve_conserves_mass_and_composes(spec in arb_spec_with(0.01..0.3), t1 in 0.0f64..0.3, t2 in 0.0f64..0.3, start in any::<prop::sample::Index>()) {
        let lattice = small_lattice(&spec);
        let g = build_generator(&spec, &lattice);
        let s0 = lattice.state(start.index(lattice.len())).to_vec();
        let p0 = DiagonalDistribution::point_mass(Arc::clone(&lattice), &s0).unwrap();
        let once = evolve(&g, &p0, t1 + t2).unwrap();
        let twice = evolve(&g, &evolve(&g, &p0, t1).unwrap(), t2).unwrap();
        prop_assert!((once.probabilities().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(once.probabilities().iter().all(|&x| x >= 0.0));
        prop_assert!(once.tv_distance(&twice).unwrap() <= 1e-9);
    }

    #[test]
    fn ssa_keeps_conserved_totals(l1 in 0.3f64..2.0, l2 in 0.3f64..2.0, n1 in 0u64..6, n2 in 0u64..6, seed in any::<u64>()) {
        let spec = builtin_model("cannibal", &[l1, l2]).unwrap();
        let h = sample_trajectories(&spec, &[n1, n2], 1.5, 40, seed).unwrap();
        prop_assert_eq!(h.trajectories(), 40);
        for (s, _) in h.iter() {
            prop_assert_eq!(s[0] + s[1], n1 + n2);
        }
    }

    #[test]
    fn drift_leading_order_agreement(
        mu in 0.1f64..10.0,
        l1 in 0.5f64..2.0,
        l2 in 0.5f64..2.0,
        n in prop::collection::vec(100u64..2000, 2),
    ) {
        // Cannibal rates must differ enough that the leading term does not cancel.
        let l2c = if (l1 * l1 - l2 * l2).abs() < 0.5 * (l1 * l1 + l2 * l2) { 2.5 * l1 } else { l2 };
        let cases = [
            (builtin_model("oscillator", &[mu]).unwrap(), vec![n[0]]),
            (builtin_model("lvm", &[l1, l2]).unwrap(), n.clone()),
            (builtin_model("cannibal", &[l1, l2c]).unwrap(), n.clone()),
        ];
        for (spec, state) in cases {
            let exact = drift_exact(&spec, &state);
            let x: Vec<f64> = state.iter().map(|&v| v as f64).collect();
            let min = *state.iter().min().unwrap() as f64;
            for (e, p) in exact.iter().zip(meanfield_rhs(&spec)) {
                let lead = p.eval(&x);
                prop_assert!((e / lead - 1.0).abs() <= 3.0 / min, "{}: {e} vs {lead}", spec.name);
            }
        }
    }

    #[test]
    fn oscillator_gf_normalized(mu in 1e-3f64..100.0) {
        prop_assert!((oscillator_gf(mu, 1.0, OscillatorGf::Exact).unwrap() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn cannibal_ratio_monotone_in_kappa(n in 1u64..300, k in 0.01f64..0.98) {
        let lo = cannibal_ratio(n, k).unwrap();
        let hi = cannibal_ratio(n, k + 0.01).unwrap();
        prop_assert!(hi > lo, "N={n}: ratio({k}) = {lo}, ratio({}) = {hi}", k + 0.01);
    }

    #[test]
    fn cannibal_coefficients_geometric(a in 0.1f64..5.0, b in 0.1f64..5.0, n in 1u64..60) {
        let p = cannibal_stationary(CannibalParams::new(n, a, b).unwrap());
        prop_assert!((p.sum() - 1.0).abs() <= 1e-13);
        let (n1, n2) = p.means();
        prop_assert!((n1 + n2 - n as f64).abs() <= 1e-12 * n as f64);
        for k in 0..n {
            let (x, y) = (p.by_first_mode_count(k), p.by_first_mode_count(k + 1));
            if x > 1e-290 && y > 1e-290 {
                prop_assert!((y / x / (a / b) - 1.0).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn cannibal_symmetric_under_mode_swap() {
    let spec = builtin_model("cannibal", &[1.0, 1.0]).unwrap();
    let swap = |f: &Factor| Factor {
        mode: ModeId(1 - f.mode.0),
        ..*f
    };
    let mut swapped: Vec<Vec<Factor>> = spec
        .jumps
        .iter()
        .map(|j| {
            let mut fs: Vec<Factor> = j.factors.iter().map(swap).collect();
            fs.sort_by_key(|f| f.mode);
            fs
        })
        .collect();
    let mut original: Vec<Vec<Factor>> = spec
        .jumps
        .iter()
        .map(|j| {
            let mut fs = j.factors.clone();
            fs.sort_by_key(|f| f.mode);
            fs
        })
        .collect();
    swapped.sort_by_key(|fs| format!("{fs:?}"));
    original.sort_by_key(|fs| format!("{fs:?}"));
    assert_eq!(swapped, original);
}
