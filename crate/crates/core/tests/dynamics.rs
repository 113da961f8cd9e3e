use std::f64::consts::PI;

use magpend_core::dynamics::{rk4_step, total_energy};
use magpend_core::{PlanarState64, PlantParams64};

#[test]
fn damped_free_swing_loses_energy() {
    let p = PlantParams64 {
        damping: 5e-4,
        ..PlantParams64::nominal()
    };
    let mut s = PlanarState64::new(0.1, PI - 0.2, 0.0, 0.0);
    let mut e = total_energy(&s, 0.0, &p);
    for _ in 0..20_000 {
        s = rk4_step(&s, 0.0, &p, 1e-4, |_| 0.0);
        let next = total_energy(&s, 0.0, &p);
        assert!(next <= e + 1e-15 * e.abs(), "energy rose from {e} to {next}");
        e = next;
    }
}

#[test]
fn detached_actuator_leaves_pendulum_at_rest() {
    let p = PlantParams64::nominal().detached();
    let mut s = PlanarState64::new(0.2, 0.0, 0.0, 0.0);
    for _ in 0..1000 {
        s = rk4_step(&s, 0.0, &p, 1e-4, |_| 0.0);
    }
    assert_eq!((s.p, s.p_dot), (0.0, 0.0));
    assert!(s.a < 0.2);
}
