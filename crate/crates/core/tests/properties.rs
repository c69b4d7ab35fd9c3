use std::f64::consts::PI;

use ndarray::Array2;
use proptest::prelude::*;
use spinxfer::analytic::{first_integral, integrate_euler_lagrange};
use spinxfer::dante::{dante_convert, Refocusing};
use spinxfer::evolution::{evolve_pulse, rotation, segment_hamiltonian, unitary};
use spinxfer::grape::{grape_optimize, GradientMode, GrapeConfig, GrapeModel, TransferProblem};
use spinxfer::operator::{build_operator, Pauli, ProductOperatorSpec};
use spinxfer::pulse_io::{from_csv_shape, from_json_str, to_csv_shape, to_json_string, PulseDocument};
use spinxfer::reduced::{integrate_reduced, reduced_full_equivalence, to_polar, ReducedState4};
use spinxfer::sequence::{conventional_sequence, simulate_sequence};
use spinxfer::system::{control_hamiltonian, drift_hamiltonian, Axis};
use spinxfer::{transfer_fidelity, ControlChannel, ShapedPulse, SpinSystem};

fn op(s: &str) -> spinxfer::Operator {
    build_operator(&ProductOperatorSpec::parse(s).unwrap(), s.len()).unwrap()
}

/// Fully coupled system with couplings in [−100, 100] Hz and offsets in
/// [−200, 200] Hz.
fn arb_system(n: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = SpinSystem> {
    n.prop_flat_map(|n| {
        (
            prop::collection::vec(-100.0..100.0f64, n * (n - 1) / 2),
            prop::collection::vec(-200.0..200.0f64, n),
        )
            .prop_map(move |(j, nu)| {
                let mut c = vec![vec![0.0; n]; n];
                let mut it = j.into_iter();
                for k in 0..n {
                    for l in k + 1..n {
                        let v = it.next().unwrap();
                        c[k][l] = v;
                        c[l][k] = v;
                    }
                }
                SpinSystem::new(n, c, nu).unwrap()
            })
    })
}

fn arb_channels(n: usize) -> impl Strategy<Value = Vec<ControlChannel>> {
    prop::sample::subsequence(
        (1..=n)
            .flat_map(|s| [ControlChannel::x(s), ControlChannel::y(s)])
            .collect::<Vec<_>>(),
        1..=3.min(2 * n),
    )
}

fn arb_pulse(n: usize) -> impl Strategy<Value = ShapedPulse> {
    (arb_channels(n), 1usize..12, 1e-4..5e-3f64).prop_flat_map(|(ch, segs, t)| {
        let m = ch.len();
        prop::collection::vec(-300.0..300.0f64, segs * m).prop_map(move |a| {
            ShapedPulse::new(ch.clone(), t / segs as f64, Array2::from_shape_vec((segs, m), a).unwrap()).unwrap()
        })
    })
}

fn arb_system_and_pulse() -> impl Strategy<Value = (SpinSystem, ShapedPulse)> {
    arb_system(2..=4).prop_flat_map(|s| {
        let n = s.n();
        (Just(s), arb_pulse(n))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn propagators_are_unitary((sys, pulse) in arb_system_and_pulse()) {
        let n = sys.n();
        let drift = drift_hamiltonian(&sys);
        let ctrl: Vec<_> = pulse.channels().iter().map(|c| control_hamiltonian(*c, n).unwrap()).collect();
        for j in 0..pulse.segment_count() {
            let h = segment_hamiltonian(&drift, &ctrl, pulse.segment(j).iter().copied());
            prop_assert!(h.hermiticity_error() < 1e-9);
            let u = unitary(&h, pulse.segment_duration()).unwrap();
            prop_assert!(u.unitarity_error() < 1e-10);
        }
    }

    #[test]
    fn evolution_preserves_trace_norm_and_hermiticity((sys, pulse) in arb_system_and_pulse()) {
        let n = sys.n();
        let mut label = "1".repeat(n);
        label.replace_range(0..1, "x");
        let rho0 = op(&label);
        let rho = evolve_pulse(&rho0, &sys, &pulse).unwrap();
        prop_assert!(rho.trace().norm() < 1e-9);
        prop_assert!(rho.hermiticity_error() < 1e-9);
        prop_assert!((rho.frobenius_norm() - rho0.frobenius_norm()).abs() < 1e-9);
        let f = transfer_fidelity(&rho, &rho0, &rho0).unwrap();
        prop_assert!(f.abs() <= 1.0 + 1e-12);
    }

    #[test]
    fn local_rotation_about_y_tilts_z_towards_x(n in 2usize..5, flip in -2.0 * PI..2.0 * PI, pick in 0usize..4) {
        let spin = 1 + pick % n;
        let z = build_operator(&ProductOperatorSpec::single(n, spin, Pauli::Z), n).unwrap();
        let x = build_operator(&ProductOperatorSpec::single(n, spin, Pauli::X), n).unwrap();
        let u = rotation(n, spin, PI / 2.0, flip).unwrap();
        let out = spinxfer::evolution::conjugate(&u, &z);
        let expect = &z.scale(flip.cos()) + &x.scale(flip.sin());
        prop_assert!(out.max_abs_diff(&expect) < 1e-10);
    }

    #[test]
    fn reduced_flow_keeps_unit_norm(k in 0.2..3.0f64, u in prop::collection::vec(-3.0..3.0f64, 1..20), t in 0.1..2.5f64) {
        let tr = integrate_reduced(&u, k, t, ReducedState4::initial()).unwrap();
        for x in &tr.states {
            prop_assert!((x.norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn reduced_model_matches_full_simulation(k in 0.2..3.0f64, u in prop::collection::vec(-3.0..3.0f64, 1..12), t in 0.1..2.0f64) {
        prop_assert!(reduced_full_equivalence(k, &u, t).unwrap() < 1e-6);
    }

    #[test]
    fn polar_round_trip(a in prop::array::uniform4(-1.0..1.0f64)) {
        let x = ReducedState4::from_array(a);
        let p = to_polar(x);
        prop_assert!(p.r2 >= 0.0);
        prop_assert!((p.norm() - x.norm()).abs() < 1e-12);
        prop_assert!(p.to_cartesian().max_abs_diff(x) < 1e-12);
    }

    #[test]
    fn euler_lagrange_first_integral_is_conserved(theta in -PI..PI, w in -3.0..3.0f64, k in 0.3..3.0f64, s in 0.1..6.0f64) {
        let path = integrate_euler_lagrange(theta, w, k, s).unwrap();
        prop_assert!(path.first_integral_drift() < 1e-8);
        let e0 = first_integral(theta, w, k);
        let e1 = first_integral(*path.theta.last().unwrap(), *path.theta_dot.last().unwrap(), k);
        prop_assert!((e1 - e0).abs() < 1e-8);
    }

    #[test]
    fn pulse_json_round_trip(pulse in arb_pulse(4)) {
        let doc = PulseDocument::from(pulse.clone());
        let back = from_json_str(&to_json_string(&doc).unwrap(), "mem").unwrap();
        prop_assert_eq!(back, doc);
    }

    #[test]
    fn pulse_csv_round_trip(pulse in arb_pulse(3)) {
        let back = from_csv_shape(&to_csv_shape(&pulse), "mem").unwrap();
        prop_assert_eq!(back.segment_count(), pulse.segment_count());
        prop_assert!((back.segment_duration() - pulse.segment_duration()).abs() < 1e-15);
        let same = pulse.remap_channels(back.channels()).unwrap();
        for (a, b) in same.amplitudes().iter().zip(back.amplitudes()) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn system_json_round_trip(sys in arb_system(2..=6)) {
        prop_assert_eq!(SpinSystem::from_json_str(&sys.to_json_string()).unwrap(), sys);
    }

    #[test]
    fn dante_preserves_total_flip(amp in prop::collection::vec(0.0..120.0f64, 3..30), flip_deg in 20.0..90.0f64) {
        let pulse = ShapedPulse::single_channel(ControlChannel::y(2), 2e-4, &amp).unwrap();
        let total = pulse.accumulated_flip(0);
        let phi = flip_deg.to_radians();
        prop_assume!(phi <= total);
        let d = dante_convert(&pulse, phi, 1e4, 3, Refocusing::Ideal).unwrap();
        prop_assert_eq!(d.hard_pulse_count() as f64, (total / phi).round());
        let sum: f64 = d.annotation.pulse_flips.iter().sum();
        prop_assert!((sum - total).abs() < 1e-9);
        prop_assert!(d.follows_mlev4());
        prop_assert!((d.sequence.duration() - pulse.duration()).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn conventional_cascade_is_exact(chain in prop::collection::vec(20.0..150.0f64, 2..=5)) {
        let sys = SpinSystem::linear_chain(&chain).unwrap();
        let n = sys.n();
        let seq = conventional_sequence(&sys).unwrap();
        let expected: f64 = chain.iter().map(|j| 0.5 / j).sum();
        prop_assert!((seq.duration() - expected).abs() < 1e-12);
        let rho0 = build_operator(&ProductOperatorSpec::single(n, 1, Pauli::X), n).unwrap();
        let c = build_operator(&ProductOperatorSpec::chain_target(n), n).unwrap();
        let f = transfer_fidelity(&simulate_sequence(&seq, &sys, &rho0).unwrap(), &c, &rho0).unwrap();
        prop_assert!(f > 1.0 - 1e-9);
    }

    #[test]
    fn grape_ascends_and_respects_mask(j in 40.0..120.0f64, axis_x in any::<bool>(), bound in prop::option::of(30.0..300.0f64), seed in 0u64..1000) {
        let sys = SpinSystem::uniform_chain(3, j).unwrap();
        let axis = if axis_x { Axis::X } else { Axis::Y };
        let channels = vec![ControlChannel::new(2, axis), ControlChannel::y(1)];
        let p = TransferProblem::chain_transfer(sys, channels.clone()).unwrap().with_bound(bound).unwrap();
        let cfg = GrapeConfig { max_iterations: 15, segments: Some(20), seed, ..GrapeConfig::default() };
        let r = grape_optimize(&p, 1.0 / j, &cfg, None).unwrap();
        prop_assert!(r.history.windows(2).all(|w| w[1] >= w[0]));
        prop_assert_eq!(r.pulse.channels(), &channels[..]);
        if let Some(b) = bound {
            prop_assert!(r.pulse.respects_bound(b));
        }
        prop_assert!((p.fidelity(&r.pulse).unwrap() - r.fidelity).abs() < 1e-9);
    }

    #[test]
    fn exact_gradient_matches_central_differences((sys, pulse) in arb_system_and_pulse()) {
        let n = sys.n();
        let p = TransferProblem::new(
            sys,
            ProductOperatorSpec::single(n, 1, Pauli::X),
            ProductOperatorSpec::chain_target(n),
            pulse.channels().to_vec(),
        ).unwrap();
        let model = GrapeModel::new(&p, pulse.segment_count(), pulse.duration()).unwrap();
        let x = pulse.amplitudes().clone();
        let (_, g) = model.fidelity_and_gradient(&x, GradientMode::Exact).unwrap();
        let h = 1e-3;
        let mut err: f64 = 0.0;
        for idx in 0..x.len() {
            let (r, c) = (idx / x.ncols(), idx % x.ncols());
            let mut a = x.clone();
            a[[r, c]] += h;
            let fp = model.fidelity(&a).unwrap();
            a[[r, c]] -= 2.0 * h;
            let fm = model.fidelity(&a).unwrap();
            err = err.max((g[[r, c]] - (fp - fm) / (2.0 * h)).abs());
        }
        let scale = g.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-6);
        prop_assert!(err / scale < 1e-4, "relative error {}", err / scale);
    }
}
