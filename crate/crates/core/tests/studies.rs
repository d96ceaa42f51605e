use std::f64::consts::PI;

use magtrans_core::analysis::{
    adiabatic_loop, center_of, geometric_phase_closed_loop, heisenberg_check, transition_at,
    transition_sweep, wavepacket_center_track,
};
use magtrans_core::drive_path::{DrivePath, PathShape};
use magtrans_core::fock_algebra::{StateVector, Truncation};
use magtrans_core::landau_model::{build_model, ModelOperators, PhysicalParams};
use magtrans_core::propagator::assemble;
use magtrans_core::Error;

fn model() -> ModelOperators {
    build_model(
        PhysicalParams::natural(),
        [0.0, 0.0],
        Truncation::new(48, 48, 12).unwrap(),
    )
    .unwrap()
}

#[test]
fn retraced_segment_encloses_nothing() {
    let m = model();
    let path = DrivePath::new(PathShape::SmoothPolyline {
        waypoints: vec![[0.0, 0.0], [1.0, 0.5], [0.0, 0.0]],
        segment_duration: 2.0,
    })
    .unwrap();
    let r = geometric_phase_closed_loop(&path, &m, 0.5).unwrap();
    assert!(r.loop_area_d.abs() < 1e-12);
    assert!(r.beta_geometric.abs() < 1e-10);
}

#[test]
fn heisenberg_on_slow_full_circle() {
    let m = model();
    let path = DrivePath::circle([1.0, 0.0], 1.0, 1.0, PI)
        .unwrap()
        .with_epsilon(0.05)
        .unwrap();
    let b = assemble(&m, &path, path.duration()).unwrap();
    let r = heisenberg_check(&b, &m, &path).unwrap();
    assert!(r.max() <= 1e-7, "{r:?}");
}

#[test]
fn both_frames_give_the_same_transitions_on_loops() {
    let m = model();
    let path = adiabatic_loop(0.8, 1.0).unwrap().with_epsilon(0.2).unwrap();
    let b = assemble(&m, &path, path.duration()).unwrap();
    let psi = StateVector::basis(m.trunc, 3, 0).unwrap();
    let u = b.u.apply(&psi).unwrap().mode_a_populations();
    let ul = b.u_l.apply(&psi).unwrap().mode_a_populations();
    let worst = u
        .iter()
        .zip(&ul)
        .map(|(a, c)| (a - c).abs())
        .fold(0.0, f64::max);
    assert!(worst <= 1e-9, "{worst}");
}

#[test]
fn transitions_vanish_adiabatically() {
    let m = model();
    let path = adiabatic_loop(1.0, 1.0).unwrap();
    let fast = transition_at(&path, &m, 1, 0.2).unwrap();
    let slow = transition_at(&path, &m, 1, 0.01).unwrap();
    // P_out ~ ε²: a twentyfold slowdown buys more than two decades
    assert!(
        slow.total_out < 1e-2 * fast.total_out,
        "{} vs {}",
        slow.total_out,
        fast.total_out
    );
    assert!(slow.k_deviation < 0.1 * fast.k_deviation);
}

#[test]
fn sweep_rejects_exterior_levels_and_open_paths() {
    let m = model();
    let path = adiabatic_loop(1.0, 1.0).unwrap();
    assert!(matches!(
        transition_sweep(&path, &m, 36, &[0.1]),
        Err(Error::Contract(_))
    ));
    let open = DrivePath::line([0.0, 0.0], [0.1, 0.0], 3.0).unwrap();
    assert!(matches!(
        transition_sweep(&open, &m, 0, &[0.1]),
        Err(Error::Contract(_))
    ));
}

#[test]
fn center_returns_after_slow_loop() {
    let m = model();
    let path = adiabatic_loop(1.0, 1.0)
        .unwrap()
        .with_epsilon(0.02)
        .unwrap();
    let psi = StateVector::basis(m.trunc, 0, 0).unwrap();
    let t = path.duration();
    let track = wavepacket_center_track(&path, &m, &psi, &[0.0, t]).unwrap();
    let b = assemble(&m, &path, t).unwrap();
    let moved = (track[1].x1 - track[0].x1).hypot(track[1].x2 - track[0].x2);
    // the cyclotron displacement |α̃|/ω bounds the orbit shift
    assert!(
        moved <= b.alpha_tilde.norm() / m.params.omega() + 1e-9,
        "{moved}"
    );
    let start = center_of(&m, &psi, 0.0).unwrap();
    assert!(start.x1.abs() < 1e-12 && start.x2.abs() < 1e-12);
}

#[test]
fn track_rejects_unnormalized_state() {
    let m = model();
    let path = adiabatic_loop(1.0, 1.0).unwrap();
    let psi = StateVector::basis(m.trunc, 0, 0).unwrap();
    let doubled = StateVector::from_amplitudes(m.trunc, psi.amplitudes() * 2.0).unwrap();
    assert!(wavepacket_center_track(&path, &m, &doubled, &[0.0]).is_err());
    let edge = StateVector::basis(m.trunc, 47, 0).unwrap();
    assert!(wavepacket_center_track(&path, &m, &edge, &[0.0]).is_err());
}
