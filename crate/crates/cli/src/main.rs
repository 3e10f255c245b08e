use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use glrom_core::artifacts;
use glrom_core::harness::{
    build_online, example_variants, harvest, offline_stage, online_initial, write_error_series, write_rows,
    ExperimentSpec, Problem, ResultRow, Runner, Variant,
};
use glrom_core::rom::solve_rom;
use glrom_core::{Error, Result};
use log::info;

#[derive(Parser)]
#[command(name = "glrom", version, about = "Global-local nonlinear model reduction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the multiscale space, local DEIM, snapshots and reduced model.
    Offline {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "artifacts")]
        artifacts: PathBuf,
    },
    /// Run the reduced model stored in an artifact directory.
    Online {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        artifacts: PathBuf,
        #[arg(long, default_value = "online.csv")]
        out: PathBuf,
    },
    /// Full pipeline against the fine solver for one configuration.
    Compare {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Use an example's base configuration when no file is given.
        #[arg(long, default_value_t = 1)]
        example: u8,
        #[arg(long, default_value = "compare.csv")]
        out: PathBuf,
    },
    /// All rows of one example.
    Sweep {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=5))]
        example: u8,
        /// Overrides the example's base configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
}

fn load_spec(config: Option<&Path>, example: u8) -> Result<ExperimentSpec> {
    match config {
        Some(p) => ExperimentSpec::load(p),
        None => ExperimentSpec::example(example),
    }
}

fn offline(config: &Path, dir: &Path) -> Result<()> {
    let spec = ExperimentSpec::load(config)?;
    let problem = Problem::new(&spec)?;
    let stage = offline_stage(&problem, &spec.offline, &spec.gmsfem, &spec.time)?;
    let h = harvest(&problem, &stage, &spec.time, spec.reduction.local_points)?;
    let (n_r, l_g) = spec.reduction.totals(spec.offline.mu_values.len());
    let rom = build_online(&problem, &stage, &h, n_r, l_g)?;
    artifacts::save_offline(dir, &spec, &problem, &stage, &h, &rom)?;
    println!(
        "offline: {} coarse dofs, {} modes, {} global points -> {}",
        stage.space.dim(),
        rom.dim(),
        rom.deim.dim(),
        dir.display()
    );
    Ok(())
}

fn online(config: &Path, dir: &Path, out: &Path) -> Result<()> {
    let spec = ExperimentSpec::load(config)?;
    let stored = artifacts::load_config(dir)?;
    if stored.grid != spec.grid || stored.nonlinearity.kind != spec.nonlinearity.kind {
        return Err(Error::Config("configuration does not match the artifacts (grid or nonlinearity)".into()));
    }
    let problem = Problem::new(&spec)?;
    let rom = artifacts::load_rom(dir)?;
    if rom.v.nrows() != problem.ops.dim() {
        return Err(Error::DimensionMismatch { expected: problem.ops.dim(), got: rom.v.nrows() });
    }
    let mut w = std::fs::File::create(out)?;
    use std::io::Write;
    let alpha_cols: Vec<String> = (0..rom.dim()).map(|k| format!("alpha{k}")).collect();
    writeln!(w, "online_mu,time,newton_iterations,fine_norm,{}", alpha_cols.join(","))?;
    for mu in spec.online_mu()? {
        let theta = glrom_core::model::ParameterSet { mu_values: vec![mu], ..spec.online.clone() };
        let _ = online_initial(&problem, &theta)?;
        let traj = solve_rom(&rom, &problem.mesh, &problem.kappa, &problem.ops, &theta, &spec.time)?.remove(0);
        for (k, (t, a)) in traj.times.iter().zip(&traj.states).enumerate() {
            let its = if k == 0 { 0 } else { traj.newton_iterations[k - 1] };
            let vals: Vec<String> = a.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{mu},{t},{its},{},{}", rom.downscale(a).norm(), vals.join(","))?;
        }
        println!("online mu={mu}: {} steps in {:.4}s", traj.steps(), traj.wall_time);
    }
    Ok(())
}

fn report(rows: &[ResultRow]) -> ExitCode {
    for r in rows {
        match &r.failure {
            None => println!(
                "{:<18} mu_on={:<8.4} N_r={} L_loc={} L_glob={} error={:.4e} R={:.3}%",
                r.label,
                r.online_mu,
                r.pod_modes,
                r.local_points,
                r.global_points,
                r.steady_error(),
                r.ratio()
            ),
            Some(e) => println!("{:<18} mu_on={:<8.4} FAILED: {e}", r.label, r.online_mu),
        }
    }
    if rows.iter().all(ResultRow::ok) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    }
}

fn write_outputs(dir: &Path, stem: &str, rows: &[ResultRow]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_rows(&dir.join(format!("{stem}_rows.csv")), rows)?;
    write_error_series(&dir.join(format!("{stem}_errors.csv")), rows)?;
    info!("wrote {}", dir.join(format!("{stem}_rows.csv")).display());
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Offline { config, artifacts } => offline(&config, &artifacts).map(|_| ExitCode::SUCCESS),
        Command::Online { config, artifacts, out } => online(&config, &artifacts, &out).map(|_| ExitCode::SUCCESS),
        Command::Compare { config, example, out } => {
            let spec = load_spec(config.as_deref(), example)?;
            let rows = Runner::new(&spec)?.run(&[Variant::base("compare")])?;
            write_rows(&out, &rows)?;
            let series = out.with_extension("errors.csv");
            write_error_series(&series, &rows)?;
            Ok(report(&rows))
        }
        Command::Sweep { example, config, out } => {
            let mut spec = load_spec(config.as_deref(), example)?;
            spec.example = Some(example);
            let rows = Runner::new(&spec)?.run(&example_variants(example))?;
            write_outputs(&out, &format!("example{example}"), &rows)?;
            Ok(report(&rows))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
