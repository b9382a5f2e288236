use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use proptest::prelude::*;
use spindyad::engine::{propagate, InitialState, SimConfig};
use spindyad::linalg::{
    evolve_unitary, max_abs, phase_insensitive_distance, Basis, ComplexMatrix, ReducedOperators,
    Unitary,
};
use spindyad::model::{sim_frame_hamiltonian, DyadParams};
use spindyad::noise::{NoiseTrajectory, DEFAULT_DT};
use spindyad::protocol::{
    self, coc, coc_closed_form, deer, hahn_echo, optimal_tau_zq, polarization_transfer,
    rotation_unitary, zq_experiment, zq_readout, Axis, PulseElement, PulseProgram, Target,
};

const J_PAR: f64 = 0.15e6;

fn params() -> DyadParams {
    DyadParams::default().with_projected(J_PAR, 0.0)
}

fn scaled(m: &ComplexMatrix, a: f64) -> ComplexMatrix {
    m.map(|v| v * a)
}

/// Total unitary of a repump-free program with every delay under `h`.
fn program_unitary(prog: &PulseProgram, h: &ComplexMatrix) -> Unitary {
    let mut u = evolve_unitary(&ComplexMatrix::zeros(4, 4), 0.0).unwrap();
    for e in &prog.elements {
        let step = match *e {
            PulseElement::Rotation {
                target,
                axis,
                angle,
                shared_field,
            } => rotation_unitary(target, axis, angle, shared_field, Basis::Reduced4).unwrap(),
            PulseElement::Delay { duration, .. } => evolve_unitary(h, duration).unwrap(),
            PulseElement::Repump => panic!("repump is not unitary"),
        };
        u = step.compose(&u);
    }
    u
}

fn heisenberg(prog: &PulseProgram, h: &ComplexMatrix, o: &ComplexMatrix) -> ComplexMatrix {
    program_unitary(prog, h).conjugate(o)
}

fn prefix(prog: &PulseProgram, n: usize) -> PulseProgram {
    PulseProgram {
        elements: prog.elements[..n].to_vec(),
        label: prog.label.clone(),
    }
}

fn coupling_only() -> ComplexMatrix {
    sim_frame_hamiltonian(&params(), 0.0, 0.0, 0.0, false)
}

fn optical() -> ComplexMatrix {
    InitialState::Optical.density().matrix().clone()
}

/// Noise-free `m_S = 0` population after `prog`.
fn readout(prog: &PulseProgram, p: &DyadParams) -> f64 {
    let steps = (prog.total_duration() / DEFAULT_DT).ceil() as usize + 1;
    let traj = NoiseTrajectory::quiet(steps, DEFAULT_DT);
    let rho = propagate(
        &InitialState::Optical.density(),
        prog,
        p,
        &traj,
        &SimConfig::default(),
    )
    .unwrap();
    let m = rho.matrix();
    m[(0, 0)].re + m[(2, 2)].re
}

#[test]
fn transfer_intermediate_states() {
    let o = ReducedOperators::new();
    let id4 = scaled(&o.identity, 0.25);
    let prog = polarization_transfer(optimal_tau_zq(J_PAR));
    let h = coupling_only();

    let after_first_echo = heisenberg(&prefix(&prog, 4), &h, &optical());
    assert!(max_abs(&(after_first_echo - (&id4 + &o.s.x * &o.sp.z))) < 1e-9);

    let after_y = heisenberg(&prefix(&prog, 5), &h, &optical());
    assert!(max_abs(&(after_y - (&id4 - &o.s.z * &o.sp.x))) < 1e-9);

    let before_repump = heisenberg(&prefix(&prog, 9), &h, &optical());
    assert!(max_abs(&(before_repump - (&id4 - scaled(&o.sp.z, 0.5)))) < 1e-9);
}

#[test]
fn transfer_ends_in_polarized_partner() {
    let prog = polarization_transfer(optimal_tau_zq(J_PAR));
    let steps = (prog.total_duration() / DEFAULT_DT).ceil() as usize + 1;
    let rho = propagate(
        &InitialState::Optical.density(),
        &prog,
        &params(),
        &NoiseTrajectory::quiet(steps, DEFAULT_DT),
        &SimConfig::default(),
    )
    .unwrap();
    // |0, -1/2>
    assert!(rho.fidelity_with_pure(2) > 1.0 - 1e-9);
}

#[test]
fn coc_matches_closed_form_exactly() {
    let tau = optimal_tau_zq(J_PAR);
    let u = program_unitary(&coc(tau), &coupling_only());
    assert!(max_abs(&(u.matrix() - coc_closed_form(J_PAR, tau))) < 1e-9);
}

#[test]
fn coc_prepares_zero_quantum_state() {
    let o = ReducedOperators::new();
    let tau = optimal_tau_zq(J_PAR);
    let u = Unitary::new(coc_closed_form(J_PAR, tau)).unwrap();
    // repumped state: S~ in m_S = 0, S' in -1/2
    let start = ComplexMatrix::from_fn(4, 4, |i, j| {
        Complex64::from(if i == 2 && j == 2 { 1.0 } else { 0.0 })
    });
    let zq = scaled(
        &(&o.identity + scaled(&o.zq_antisymmetric(), 4.0) - scaled(&(&o.s.z * &o.sp.z), 4.0)),
        0.25,
    );
    assert!(max_abs(&(u.conjugate(&start) - zq)) < 1e-9);
}

#[test]
fn zero_quantum_precession_closed_forms() {
    let o = ReducedOperators::new();
    let p = params();
    let (beta, beta_p, tau) = (0.7e-6, -0.2e-6, 3.1e-6);
    let h = sim_frame_hamiltonian(&p, 0.0, beta, beta_p, false);
    let phi = |t: f64| p.gamma_e * (beta - beta_p) * t;
    let a = o.zq_antisymmetric();
    let sym = o.zq_symmetric();
    let delay = PulseProgram::new("d").push(PulseElement::delay(tau, true));

    let a_out = heisenberg(&delay, &h, &a);
    let expect = scaled(&a, phi(tau).cos()) + scaled(&sym, phi(tau).sin());
    assert!(max_abs(&(a_out - expect)) < 1e-9);

    let sym_out = heisenberg(&delay, &h, &sym);
    let expect = scaled(&sym, phi(tau).cos()) - scaled(&a, phi(tau).sin());
    assert!(max_abs(&(sym_out - expect)) < 1e-9);

    let tau_p = 1.4e-6;
    let echo = PulseProgram::new("e")
        .push(PulseElement::delay(tau, true))
        .push(PulseElement::rotation(Target::Both, Axis::X, PI))
        .push(PulseElement::delay(tau_p, true));
    let out = heisenberg(&echo, &h, &a);
    let d = phi(tau - tau_p);
    let expect = scaled(&a, -d.cos()) + scaled(&sym, d.sin());
    assert!(max_abs(&(out - expect)) < 1e-9);
}

#[test]
fn zq_readout_maps_antisymmetric_to_population_difference() {
    let o = ReducedOperators::new();
    let tau = optimal_tau_zq(J_PAR);
    let h = coupling_only();
    let out = heisenberg(&zq_readout(tau), &h, &o.zq_antisymmetric());
    assert!(max_abs(&(out - scaled(&(&o.s.z - &o.sp.z), 0.5))) < 1e-9);

    // the symmetric partner stays invisible to the m_S = 0 readout
    let sym = heisenberg(&zq_readout(tau), &h, &o.zq_symmetric());
    assert!(max_abs(&(&sym - o.zq_symmetric())) < 1e-9);
    let visible = spindyad::linalg::trace(&(&o.p0 * &sym));
    assert!(visible.norm() < 1e-12);
}

#[test]
fn zero_quantum_chain_start_values() {
    let p = params();
    let tau = optimal_tau_zq(J_PAR);
    assert!((readout(&zq_experiment(tau, 0.0, false, 0.0), &p) - 1.0).abs() < 1e-9);
    assert!(readout(&zq_experiment(tau, 0.0, true, 0.0), &p).abs() < 1e-9);
    for theta in [0.3, FRAC_PI_2, 2.0] {
        let p0 = readout(&zq_experiment(tau, 0.0, false, theta), &p);
        assert!((p0 - 0.5 - 0.5 * theta.cos()).abs() < 1e-9, "theta {theta}: {p0}");
    }
}

#[test]
fn echo_signal_is_even_in_delay_mismatch() {
    let o = ReducedOperators::new();
    let h = sim_frame_hamiltonian(&params(), 0.0, 0.4e-6, -0.3e-6, false);
    let a = o.zq_antisymmetric();
    let signal = |t1: f64, t2: f64| {
        let prog = PulseProgram::new("e")
            .push(PulseElement::delay(t1, true))
            .push(PulseElement::rotation(Target::Both, Axis::X, PI))
            .push(PulseElement::delay(t2, true));
        let out = heisenberg(&prog, &h, &a);
        spindyad::linalg::trace(&(&out * &a)).re
    };
    for (t, dt) in [(2e-6, 0.5e-6), (4e-6, 1.3e-6)] {
        assert!((signal(t + dt, t) - signal(t, t + dt)).abs() < 1e-12);
    }
}

#[test]
fn noise_free_echo_and_deer() {
    let p = params();
    for tau in [0.3e-6, 1.1e-6, 2.5e-6] {
        let echo = readout(&hahn_echo(tau, Target::SpinS, false), &p);
        assert!((echo - 1.0).abs() < 1e-9);
        let d = readout(&deer(tau, false), &p);
        let expect = 0.5 + 0.5 * (2.0 * PI * J_PAR * tau).cos();
        assert!((d - expect).abs() < 1e-9, "tau {tau}: {d} vs {expect}");
    }
}

#[test]
fn shared_deer_is_the_shared_echo() {
    let a = deer(1e-6, true);
    let b = hahn_echo(1e-6, Target::Both, true);
    assert_eq!(a.elements, b.elements);
}

#[test]
fn transfer_mismatch_is_flagged() {
    let ideal = optimal_tau_zq(J_PAR);
    assert_eq!(protocol::transfer_mismatch(ideal, J_PAR), None);
    assert!(protocol::transfer_mismatch(ideal * 1.05, J_PAR).is_some());
}

#[test]
fn pi_rotations_square_to_identity_up_to_phase() {
    for target in [Target::SpinS, Target::SpinSPrime, Target::Both] {
        for axis in [Axis::X, Axis::Y, Axis::Z] {
            let u = rotation_unitary(target, axis, PI, false, Basis::Reduced4).unwrap();
            let d = phase_insensitive_distance(u.compose(&u).matrix(), &ComplexMatrix::identity(4, 4));
            assert!(d < 1e-12);
        }
    }
}

fn element() -> impl Strategy<Value = PulseElement> {
    let target = prop_oneof![Just(Target::SpinS), Just(Target::SpinSPrime), Just(Target::Both)];
    let axis = prop_oneof![Just(Axis::X), Just(Axis::Y), Just(Axis::Z)];
    prop_oneof![
        (target, axis, -10.0f64..10.0, any::<bool>()).prop_map(|(target, axis, angle, shared_field)| {
            PulseElement::Rotation {
                target,
                axis,
                angle,
                shared_field,
            }
        }),
        (0.0f64..1e-3, any::<bool>()).prop_map(|(d, noisy)| PulseElement::delay(d, noisy)),
        Just(PulseElement::Repump),
    ]
}

proptest! {
    #[test]
    fn text_format_round_trips(
        elements in prop::collection::vec(element(), 0..20),
        label in "[a-z_]{0,12}",
    ) {
        let prog = PulseProgram { elements, label };
        let parsed: PulseProgram = prog.to_string().parse().unwrap();
        prop_assert_eq!(parsed, prog);
    }
}

#[test]
fn parse_errors_report_line() {
    let text = "# label: x\nrotation s x 1.0 0\nrotation q x 1.0 0\n";
    let err = text.parse::<PulseProgram>().unwrap_err().to_string();
    assert!(err.contains('3'), "{err}");
}
