use spinxfer::analytic::analytic_pulse_four_spin;

#[test]
fn unequal_chain_pulse_is_exact() {
    let (pulse, split) = analytic_pulse_four_spin(46.0, 19.3, 18.1, 2e-5).unwrap();
    assert!(split.pulse_fidelity(&pulse).unwrap() > 0.9999);
    assert!((pulse.duration() - split.total_duration()).abs() < 1e-3);
}

#[test]
fn equal_chain_pulse_is_exact() {
    let (pulse, split) = analytic_pulse_four_spin(88.05, 88.05, 88.05, 2e-5).unwrap();
    assert!(split.pulse_fidelity(&pulse).unwrap() > 0.9999);
}
