use diracflow::complex::{build_complex, reorient, Graph};
use diracflow::diagnostics::{run_suite, CheckGroup};
use diracflow::flow::{self, EvolveOptions, FlowConfig, FlowState};
use diracflow::operators::{betti_numbers, laplacian, supertrace};
use diracflow::spectral::{self, CircleExponent, WaveSolution, ZetaSpec};
use nalgebra::DVector;
use num_complex::Complex64;
use proptest::prelude::*;

fn short_opts() -> EvolveOptions {
    EvolveOptions {
        h: 1e-3,
        snapshot_every: 100,
        ..EvolveOptions::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn flow_keeps_spectrum_on_random_graphs(n in 2u64..7, p in 0.2f64..0.9, seed in 0u64..1000, beta in -1.5f64..1.5) {
        let c = build_complex(&Graph::erdos_renyi(n, p, seed)).unwrap();
        let s = FlowState::initial(&c, &[], beta, false).unwrap();
        let before = s.dirac().spectrum();
        let traj = flow::evolve_with(&s, 0.5, &short_opts(), &[]).unwrap();
        let after = traj.last().dirac().spectrum();
        for (a, b) in before.iter().zip(&after) {
            prop_assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
        let l0 = laplacian(&s.dirac());
        let l1 = traj.last().laplacian();
        prop_assert!((l0.entries() - l1.entries()).norm() < 1e-9);
    }

    #[test]
    fn supertrace_of_heat_is_euler(n in 2u64..7, p in 0.2f64..0.9, seed in 0u64..1000) {
        let c = build_complex(&Graph::erdos_renyi(n, p, seed)).unwrap();
        let s = FlowState::initial(&c, &[], 0.0, true).unwrap();
        let traj = flow::evolve_with(&s, 0.3, &short_opts(), &[]).unwrap();
        let u = traj.last().unitary.clone().unwrap();
        let st = supertrace(&u);
        prop_assert!((st.re - c.euler_characteristic() as f64).abs() < 1e-8);
    }

    #[test]
    fn orientation_does_not_change_spectrum_or_betti(n in 3u64..7, seed in 0u64..1000, shuffle in 0u64..1000) {
        let c = build_complex(&Graph::erdos_renyi(n, 0.6, seed)).unwrap();
        let r = reorient(&c, shuffle);
        let a = FlowState::initial(&c, &[], 0.0, false).unwrap().dirac();
        let b = FlowState::initial(&r, &[], 0.0, false).unwrap().dirac();
        for (x, y) in a.spectrum().iter().zip(&b.spectrum()) {
            prop_assert!((x - y).abs() < 1e-10);
        }
        prop_assert_eq!(betti_numbers(&laplacian(&a)).unwrap(), betti_numbers(&laplacian(&b)).unwrap());
    }

    #[test]
    fn wave_solution_is_time_shift_invariant(seed in 0u64..500, shift in 0.1f64..3.0) {
        let c = build_complex(&Graph::erdos_renyi(6, 0.5, seed)).unwrap();
        let l = FlowState::initial(&c, &[], 0.0, false).unwrap().laplacian();
        let n = l.size();
        let u0 = DVector::from_fn(n, |i, _| Complex64::new(((i as u64 * 7 + seed) % 11) as f64 / 11.0, 0.0));
        let v0 = DVector::from_fn(n, |i, _| Complex64::new(((i as u64 * 3 + seed) % 5) as f64 / 5.0 - 0.4, 0.0));
        let w = WaveSolution::new(&l, &u0, &v0, true).unwrap();
        let restarted = WaveSolution::new(&l, &w.position(shift), &w.velocity(shift), false).unwrap();
        for t in [0.5, 1.7, 4.0] {
            prop_assert!((restarted.position(t) - w.position(t + shift)).norm() < 1e-9);
        }
    }
}

#[test]
fn default_suite_passes_on_k2() {
    let c = build_complex(&Graph::complete(2)).unwrap();
    let report = run_suite(&c, &FlowConfig::default(), &CheckGroup::ALL).unwrap();
    let failed: Vec<_> = report.failures().map(|f| f.name.clone()).collect();
    assert!(failed.is_empty(), "{failed:?}");
}

#[test]
fn suite_reports_failures_instead_of_aborting_on_coarse_step() {
    let c = build_complex(&Graph::complete(2)).unwrap();
    let cfg = FlowConfig {
        h: 0.5,
        ..FlowConfig::default()
    };
    let report = run_suite(&c, &cfg, &CheckGroup::ALL).unwrap();
    assert!(report.failures().count() > 0);
}

#[test]
fn circle_graph_zeta_agrees_with_dirac_zeta() {
    for n in [4u64, 5, 7, 12] {
        let c = build_complex(&Graph::cycle(n)).unwrap();
        let d = FlowState::initial(&c, &[], 0.0, false).unwrap().dirac();
        let spec = ZetaSpec::of_operator(&d);
        for s in [Complex64::new(2.5, 1.0), Complex64::new(-0.7, 4.0), Complex64::new(1.25, 0.0)] {
            let full = spectral::dirac_zeta(&spec, s).unwrap();
            let circle = spectral::circle_graph_zeta(n as usize, s, CircleExponent::Spectral).unwrap();
            let scaled = circle * Complex64::new(2.0, 0.0).powc(-s);
            assert!((full - scaled).norm() < 1e-9 * full.norm().max(1.0), "n={n} s={s}: {full} vs {scaled}");
        }
    }
}

#[test]
fn connes_distance_is_a_metric_on_small_graphs() {
    for g in [Graph::complete(3), Graph::cycle(4)] {
        let c = build_complex(&g).unwrap();
        let d = FlowState::initial(&c, &[], 0.0, false).unwrap().geometric();
        let labels = c.vertex_labels();
        let dist = |x: u64, y: u64| spectral::connes_distance(&d, &c, x, y).unwrap();
        for &x in &labels {
            for &y in &labels {
                if x == y {
                    continue;
                }
                assert!((dist(x, y) - dist(y, x)).abs() < 1e-6);
                for &z in &labels {
                    if z != x && z != y {
                        assert!(dist(x, y) <= dist(x, z) + dist(z, y) + 1e-6);
                    }
                }
            }
        }
    }
}

#[test]
fn k3_reductions_match_full_flow() {
    use diracflow::oracles::k3_equivalence;
    for gamma in [[1.0, 1.0], [1.0, 10.0], [10.0, 1.0]] {
        let e = k3_equivalence(gamma, 2.0, 1e-3).unwrap();
        assert!(e.max_state_diff < 1e-8, "{gamma:?}: {}", e.max_state_diff);
        assert!(e.max_ansatz_residual < 1e-8);
    }
}

#[test]
fn circle_model_converges_for_several_cutoffs() {
    use diracflow::oracles::{circle_model_evolve, circle_model_init};
    for n in [1, 2, 4, 6] {
        let s = circle_model_init(n).unwrap();
        let run = circle_model_evolve(&s, 8.0, 1e-3, 100).unwrap();
        assert!(run.last.limit_error() < 1e-6, "N={n}");
    }
    assert!(circle_model_init(0).is_err());
}
