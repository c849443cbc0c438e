mod common;

use common::simulator_sweep;

#[test]
fn disturbance_sweep_keeps_simulator_invariants() {
    let s = simulator_sweep(0..100, 200);
    println!("{s:?}");
    assert_eq!(s.pin_violations, 0);
    assert!(s.max_strain <= 0.02, "strain {}", s.max_strain);
    assert_eq!(s.nondeterministic, 0);
    assert_eq!(s.drop_mismatches, 0);
    assert_eq!(s.contact_mismatches, 0);
    assert!(s.drops > 0, "sweep should include some drops");
}
