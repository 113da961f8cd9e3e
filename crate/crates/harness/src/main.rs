use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use magpend::config::Config;
use magpend::experiments::{build_controllers, run_ilc_session, run_sysid_experiment, steady_state_report, SysidPlant};
use magpend::trace::{export_trace, write_file};
use magpend::trajectory::generate_trajectory;
use magpend::{simulate_closed_loop, HarnessError, Result};

#[derive(Debug, Parser)]
#[command(name = "magpend", version, about = "Magnetic inverted pendulum simulation harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, clap::Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Seed for measurement noise and multisine phases.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Closed-loop run along the configured trajectory; writes trace.csv.
    Balance(Common),
    /// Identifies the detached actuator; writes frf.csv and fit.csv.
    Sysid {
        #[command(flatten)]
        common: Common,
        /// Excite the linearized actuator instead of the nonlinear one.
        #[arg(long)]
        linear: bool,
    },
    /// Learning session along the configured trajectory.
    Ilc(Common),
    /// Predicted steady states under the configured tilt and offset.
    SteadyState(Common),
}

fn load(common: &Common) -> Result<(Config, Option<PathBuf>)> {
    let cfg = Config::load(&common.config)?;
    let base = common.config.parent().map(Path::to_path_buf);
    Ok((cfg, base))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Balance(common) => {
            let (cfg, base) = load(&common)?;
            let sim = cfg.sim_config(common.seed, cfg.field.actuation_matrix(base.as_deref())?)?;
            let ctrl = build_controllers(&sim, &cfg.control.weights())?;
            let t = &cfg.trajectory;
            let traj = generate_trajectory(t.kind, t.amplitude, t.period, sim.duration, sim.ts, t.bound)?;
            let path = common.out.join("trace.csv");
            match simulate_closed_loop(&sim, &ctrl, &traj, cfg.sim.compensation, None) {
                Ok(trace) => export_trace(&trace, &path),
                Err(HarnessError::Diverged { t, detail, trace }) => {
                    export_trace(&trace, &path)?;
                    Err(HarnessError::Diverged { t, detail, trace })
                }
                Err(e) => Err(e),
            }
        }
        Command::Sysid { common, linear } => {
            let (cfg, base) = load(&common)?;
            let sim = cfg.sim_config(common.seed, cfg.field.actuation_matrix(base.as_deref())?)?;
            let kind = if linear {
                SysidPlant::Linear
            } else {
                SysidPlant::Nonlinear
            };
            let res = run_sysid_experiment(&sim, &cfg.sysid.multisine(sim.ts), &cfg.sysid.fit_options(sim.ts), kind)?;
            println!(
                "damping = {:.6e} N·m·s/rad, dipole moment = {:.6} A·m², delay = {:.4} s",
                res.physical.damping, res.physical.dipole_moment, res.fit.delay
            );
            write_file(&common.out.join("frf.csv"), &res.frf.to_csv_string())?;
            write_file(&common.out.join("fit.csv"), &res.fit_csv())
        }
        Command::Ilc(common) => {
            let (cfg, base) = load(&common)?;
            let sim = cfg.sim_config(common.seed, cfg.field.actuation_matrix(base.as_deref())?)?;
            let ctrl = build_controllers(&sim, &cfg.control.weights())?;
            let t = &cfg.trajectory;
            let duration = t.period * cfg.ilc.periods_per_trial as f64;
            let traj = generate_trajectory(t.kind, t.amplitude, t.period, duration, sim.ts, t.bound)?;
            let report = run_ilc_session(&sim, &ctrl, &traj, &cfg.ilc)?;
            for it in &report.iterations {
                println!(
                    "iteration {}: RMS error {:.4}°",
                    it.iteration,
                    it.rms_error.to_degrees()
                );
                export_trace(&it.trace, &common.out.join(format!("trace_iter{}.csv", it.iteration)))?;
                write_file(
                    &common.out.join(format!("ilc_iter{}.csv", it.iteration)),
                    &report.iteration_csv(it.iteration),
                )?;
            }
            write_file(&common.out.join("ilc_summary.csv"), &report.summary_csv())
        }
        Command::SteadyState(common) => {
            let (cfg, base) = load(&common)?;
            let sim = cfg.sim_config(common.seed, cfg.field.actuation_matrix(base.as_deref())?)?;
            let ctrl = build_controllers(&sim, &cfg.control.weights())?;
            let report = steady_state_report(&ctrl[0], sim.xi, sim.u_d)?;
            let deg = |x: f64| x.to_degrees();
            println!(
                "xi = {:.4}°  -> alpha = {:.4}°, phi = {:.4}°",
                deg(sim.xi),
                deg(report.x_from_xi[0]),
                deg(report.x_from_xi[1])
            );
            println!(
                "u_d = {:.4}° -> alpha = {:.4}°, phi = {:.4}°",
                deg(sim.u_d),
                deg(report.x_from_u_d[0]),
                deg(report.x_from_u_d[1])
            );
            write_file(&common.out.join("steady_state.csv"), &report.to_csv_string())?;
            write_file(&common.out.join("controller.csv"), &report.controller_csv())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
