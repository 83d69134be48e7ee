//! Argument parsing and subcommand dispatch.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use nave_core::formation::write_light_log;
use nave_core::mission::MissionRequest;
use nave_core::planner::MissionPlanSet;
use nave_core::sim::Environment;

use crate::docs::{read_document, to_json, write_document, write_text, TrajectorySet};
use crate::error::CliError;
use crate::pipeline;

#[derive(Debug, Parser)]
#[command(name = "nave", version, about = "Aerial documentation of building interiors")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Register a robot scan into the reference map.
    Align {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        scan: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sequence and split a mission request into flights.
    Plan {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        mission: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample and smooth the leader trajectory of every flight.
    Trajectory {
        #[arg(long)]
        planset: PathBuf,
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory: trajectories.json plus one CSV per flight.
        #[arg(long)]
        out: PathBuf,
    },
    /// Add lighting followers to leader trajectories.
    ///
    /// Writes the team trajectories, `formation.json` and one
    /// `lights_f<flight>.csv` light-direction log per flight.
    Formation {
        #[arg(long)]
        planset: PathBuf,
        #[arg(long)]
        trajectories: PathBuf,
        /// Map the follower is routed through.
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fly the trajectories in the kinematic simulator.
    Simulate {
        #[arg(long)]
        planset: PathBuf,
        #[arg(long)]
        map: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Trajectory set to fly; generated from the plan set when absent.
        #[arg(long)]
        trajectories: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a mission against the technique catalog and audit its plans.
    Validate {
        #[arg(long)]
        mission: PathBuf,
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        planset: Option<PathBuf>,
        #[arg(long)]
        trajectories: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write the report here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve a project directory to the viewpoint editor.
    Serve {
        #[arg(long)]
        project: PathBuf,
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Seed used by `POST /simulate` when the request gives none.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code. Errors are printed to standard error.
pub fn run_from<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                crate::error::ErrorClass::Usage.exit_code()
            } else {
                0
            };
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.class().as_str());
            e.exit_code()
        }
    }
}

fn mission(path: &Path) -> Result<MissionRequest, CliError> {
    let req: MissionRequest = read_document(path)?;
    req.check()?;
    Ok(req)
}

pub fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Align { map, scan, config, out } => {
            let config = pipeline::load_config(config.as_deref())?;
            let doc = pipeline::run_align(&pipeline::load_map(&map)?, &pipeline::load_map(&scan)?, &config)?;
            write_document(&out, &doc)?;
            if !doc.result.accepted {
                return Err(CliError::AlignmentRejected {
                    cost: doc.result.cost,
                    overlap: doc.result.overlap,
                });
            }
            Ok(())
        }
        Command::Plan {
            map,
            mission: m,
            config,
            out,
        } => {
            let config = pipeline::load_config(config.as_deref())?;
            let req = mission(&m)?;
            let grid = pipeline::build_grid(&pipeline::load_map(&map)?, &config)?;
            let set = pipeline::run_plan(&req, &grid, &config)?;
            write_text(&out, &set.to_json())
        }
        Command::Trajectory {
            planset,
            map,
            config,
            out,
        } => {
            let config = pipeline::load_config(config.as_deref())?;
            let set: MissionPlanSet = read_document(&planset)?;
            let grid = pipeline::build_grid(&pipeline::load_map(&map)?, &config)?;
            let trajs = pipeline::run_trajectories(&set, &grid, &config)?;
            write_trajectories(&out, &trajs)
        }
        Command::Formation {
            planset,
            trajectories,
            map,
            config,
            out,
        } => {
            let config = pipeline::load_config(config.as_deref())?;
            let set: MissionPlanSet = read_document(&planset)?;
            let leaders: TrajectorySet = read_document(&trajectories)?;
            let grid = pipeline::build_grid(&pipeline::load_map(&map)?, &config)?;
            let (trajs, report) = pipeline::run_formation(&set, &leaders, &grid, &config)?;
            write_trajectories(&out, &trajs)?;
            for f in &report.flights {
                let mut csv = Vec::new();
                write_light_log(&f.light_directions, &mut csv).expect("writing to memory");
                write_text(
                    &out.join(format!("lights_f{}.csv", f.flight)),
                    &String::from_utf8_lossy(&csv),
                )?;
            }
            write_document(&out.join("formation.json"), &report)
        }
        Command::Simulate {
            planset,
            map,
            seed,
            trajectories,
            config,
            out,
        } => {
            let config = pipeline::load_config(config.as_deref())?;
            let set: MissionPlanSet = read_document(&planset)?;
            let cloud = pipeline::load_map(&map)?;
            let trajs = match trajectories {
                Some(t) => read_document(&t)?,
                None => pipeline::run_trajectories(&set, &pipeline::build_grid(&cloud, &config)?, &config)?,
            };
            let env = Environment::new(&cloud)?;
            let output = pipeline::run_simulation(&trajs, &env, &config, seed, set.t_max)?;
            for log in &output.logs {
                write_text(&out.join(pipeline::log_name(log.robot, log.flight)), &log.to_csv())?;
            }
            write_document(&out.join("metrics.json"), &output.document)?;
            let collisions = pipeline::simulated_collisions(&output.logs);
            if !collisions.is_empty() {
                return Err(CliError::Collision(collisions));
            }
            let unresolved = pipeline::unresolved_separation(&trajs, &config);
            if !unresolved.is_empty() {
                return Err(CliError::UnresolvedSeparation(format!(
                    "{} separation violation(s):\n{}",
                    unresolved.len(),
                    unresolved.join("\n")
                )));
            }
            Ok(())
        }
        Command::Validate {
            mission: m,
            map,
            planset,
            trajectories,
            config,
            out,
        } => {
            let config = pipeline::load_config(config.as_deref())?;
            let req = mission(&m)?;
            let plans: Option<MissionPlanSet> = planset.as_deref().map(read_document).transpose()?;
            let trajs: Option<TrajectorySet> = trajectories.as_deref().map(read_document).transpose()?;
            let grid = pipeline::build_grid(&pipeline::load_map(&map)?, &config)?;
            let doc = pipeline::run_validate(&req, plans.as_ref(), trajs.as_ref(), &grid, &config)?;
            match out {
                Some(path) => write_document(&path, &doc)?,
                None => {
                    let mut stdout = std::io::stdout().lock();
                    stdout
                        .write_all(to_json(&doc).as_bytes())
                        .map_err(|e| CliError::io("<stdout>", e))?;
                }
            }
            doc.error().map_or(Ok(()), Err)
        }
        Command::Serve {
            project,
            map,
            config,
            host,
            port,
            seed,
        } => {
            let config = pipeline::load_config(config.as_deref())?;
            let cloud = pipeline::load_map(&map)?;
            let state = crate::service::AppState::open(project, cloud, config, seed)?;
            crate::service::serve_blocking(state, &host, port)
        }
    }
}

fn write_trajectories(dir: &Path, set: &TrajectorySet) -> Result<(), CliError> {
    for e in &set.entries {
        write_text(
            &dir.join(format!("trajectory_r{}_f{}.csv", e.robot, e.flight)),
            &e.trajectory.to_csv(),
        )?;
    }
    write_document(&dir.join("trajectories.json"), set)
}
