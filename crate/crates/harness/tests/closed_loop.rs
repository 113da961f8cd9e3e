use magpend::config::Config;
use magpend::experiments::{build_controllers, run_ilc_session};
use magpend::sim::{gaussian_noise, simulate_closed_loop_with_noise, SimConfig};
use magpend::trajectory::Trajectory;
use magpend::{generate_trajectory, simulate_closed_loop, TrajectoryKind};
use magpend_core::compensation::steady_state_output_dist;
use magpend_core::PlanarState64;

fn quiet_config() -> Config {
    let mut cfg = Config::default();
    cfg.sim.noise_std = 0.0;
    cfg
}

fn sim_of(cfg: &Config) -> SimConfig {
    cfg.sim_config(0, cfg.field.actuation_matrix(None).unwrap()).unwrap()
}

fn hold(sim: &SimConfig) -> Trajectory {
    generate_trajectory(TrajectoryKind::Constant, 0.0, 10.0, sim.duration, sim.ts, 0.2).unwrap()
}

#[test]
fn equilibrium_stays_put() {
    let mut cfg = quiet_config();
    cfg.sim.duration = 2.0;
    let sim = sim_of(&cfg);
    let ctrl = build_controllers(&sim, &cfg.control.weights()).unwrap();
    let trace = simulate_closed_loop(&sim, &ctrl, &hold(&sim), false, None).unwrap();
    let worst = trace
        .rows
        .iter()
        .flat_map(|r| [r.alpha, r.phi, r.beta, r.theta, r.u_alpha, r.u_beta])
        .fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(worst < 1e-12, "drifted by {worst}");
}

#[test]
fn tilted_start_is_caught_within_five_seconds() {
    let mut cfg = quiet_config();
    cfg.sim.duration = 8.0;
    cfg.sim.initial_alpha = 2f64.to_radians();
    cfg.sim.initial_beta = -2f64.to_radians();
    let sim = sim_of(&cfg);
    let ctrl = build_controllers(&sim, &cfg.control.weights()).unwrap();
    let trace = simulate_closed_loop(&sim, &ctrl, &hold(&sim), false, None).unwrap();
    let late = trace.rows.iter().filter(|r| r.t >= 5.0);
    let worst = late
        .flat_map(|r| [r.alpha, r.phi, r.beta, r.theta])
        .fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(worst.to_degrees() < 0.01, "residual {}°", worst.to_degrees());
}

#[test]
fn uncompensated_tilt_settles_where_predicted() {
    let mut cfg = quiet_config();
    cfg.sim.duration = 30.0;
    cfg.sim.xi = 1f64.to_radians();
    cfg.sim.grad_c1 = 0.0;
    cfg.sim.grad_c2 = 0.0;
    let sim = sim_of(&cfg);
    let ctrl = build_controllers(&sim, &cfg.control.weights()).unwrap();
    let trace = simulate_closed_loop(&sim, &ctrl, &hold(&sim), false, None).unwrap();
    let predicted = steady_state_output_dist(&ctrl[0].model, &ctrl[0].k, sim.xi).unwrap();
    let last = trace.rows.last().unwrap();
    assert!((last.alpha - predicted[0]).to_degrees().abs() < 0.05);
    assert!((last.beta - predicted[0]).to_degrees().abs() < 0.05);
}

#[test]
fn future_noise_does_not_leak_backwards() {
    let mut cfg = Config::default();
    cfg.sim.duration = 2.0;
    let sim = sim_of(&cfg);
    let ctrl = build_controllers(&sim, &cfg.control.weights()).unwrap();
    let traj = hold(&sim);
    let split = 120;
    let mut reference_noise = gaussian_noise(11, sim.noise_std);
    let reference = simulate_closed_loop_with_noise(&sim, &ctrl, &traj, false, None, &mut reference_noise).unwrap();
    let (mut base, mut other) = (gaussian_noise(11, sim.noise_std), gaussian_noise(12, sim.noise_std));
    let mut mixed = |k: usize| {
        let (n, o) = (base(k), other(k));
        if k < split {
            n
        } else {
            o
        }
    };
    let perturbed = simulate_closed_loop_with_noise(&sim, &ctrl, &traj, false, None, &mut mixed).unwrap();
    assert_eq!(reference.rows[..split], perturbed.rows[..split]);
    assert_ne!(reference.rows[split], perturbed.rows[split]);
}

#[test]
fn planes_do_not_couple() {
    let mut cfg = quiet_config();
    cfg.sim.duration = 4.0;
    cfg.sim.initial_alpha = 3f64.to_radians();
    let sim = sim_of(&cfg);
    let ctrl = build_controllers(&sim, &cfg.control.weights()).unwrap();
    let traj = generate_trajectory(
        TrajectoryKind::Constant,
        2f64.to_radians(),
        10.0,
        sim.duration,
        sim.ts,
        0.2,
    )
    .unwrap();
    let trace = simulate_closed_loop(&sim, &ctrl, &traj, false, None).unwrap();
    assert!(trace.rows.iter().any(|r| r.alpha.abs() > 0.01));
    let worst = trace
        .rows
        .iter()
        .flat_map(|r| [r.beta, r.theta])
        .fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(worst < 1e-10, "beta plane moved by {worst}");
}

#[test]
fn diverging_run_keeps_its_partial_trace() {
    let mut cfg = quiet_config();
    cfg.sim.duration = 5.0;
    cfg.sim.initial_phi = 0.3;
    let mut sim = sim_of(&cfg);
    let ctrl = build_controllers(&sim, &cfg.control.weights()).unwrap();
    sim.initial[0] = PlanarState64::new(0.0, 1.2, 0.0, 3.0);
    match simulate_closed_loop(&sim, &ctrl, &hold(&sim), false, None) {
        Err(magpend::HarnessError::Diverged { trace, .. }) => assert!(!trace.rows.is_empty()),
        other => panic!("expected divergence, got {other:?}"),
    }
}

fn circle(sim: &SimConfig, cfg: &Config, amplitude: f64) -> Trajectory {
    let period = 10.0;
    let duration = period * cfg.ilc.periods_per_trial as f64;
    generate_trajectory(TrajectoryKind::Circle, amplitude, period, duration, sim.ts, 0.2).unwrap()
}

#[test]
fn learning_is_odd_in_the_reference() {
    let mut cfg = quiet_config();
    cfg.sim.grad_c2 = 0.0;
    cfg.ilc.iterations = 1;
    let sim = sim_of(&cfg);
    let ctrl = build_controllers(&sim, &cfg.control.weights()).unwrap();
    let a = 3f64.to_radians();
    let up = run_ilc_session(&sim, &ctrl, &circle(&sim, &cfg, a), &cfg.ilc).unwrap();
    let down = run_ilc_session(&sim, &ctrl, &circle(&sim, &cfg, -a), &cfg.ilc).unwrap();
    for j in 0..2 {
        let (u, d) = (&up.iterations[1].correction[j], &down.iterations[1].correction[j]);
        assert!((u + d).norm() <= 1e-9 * u.norm(), "plane {j} not antisymmetric");
    }
}

#[test]
fn learning_without_disturbance_never_hurts() {
    let mut cfg = quiet_config();
    cfg.sim.grad_c1 = 0.0;
    cfg.sim.grad_c2 = 0.0;
    cfg.ilc.iterations = 3;
    let sim = sim_of(&cfg);
    let ctrl = build_controllers(&sim, &cfg.control.weights()).unwrap();
    let rms = run_ilc_session(&sim, &ctrl, &circle(&sim, &cfg, 4f64.to_radians()), &cfg.ilc)
        .unwrap()
        .rms_errors();
    assert!(rms.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9)), "{rms:?}");
}

#[test]
fn flipped_disturbance_flips_the_learned_correction() {
    let mut cfg = quiet_config();
    cfg.ilc.iterations = 1;
    // Small enough that the closed-loop response stays linear in the coefficients.
    let (c1, c2) = (0.02 * cfg.sim.grad_c1, 0.02 * cfg.sim.grad_c2);
    let learned = |sign: f64| {
        let mut c = cfg.clone();
        c.sim.grad_c1 = sign * c1;
        c.sim.grad_c2 = sign * c2;
        let sim = sim_of(&c);
        let ctrl = build_controllers(&sim, &c.control.weights()).unwrap();
        let report = run_ilc_session(&sim, &ctrl, &circle(&sim, &c, 5f64.to_radians()), &c.ilc).unwrap();
        report.iterations[1].correction.clone()
    };
    let (plus, none, minus) = (learned(1.0), learned(0.0), learned(-1.0));
    for j in 0..2 {
        let up = &plus[j] - &none[j];
        let down = &minus[j] - &none[j];
        assert!(up.norm() > 0.0);
        assert!((&up + &down).norm() <= 0.1 * up.norm(), "plane {j}");
    }
}
