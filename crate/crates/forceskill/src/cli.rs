//! Command-line interface.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success (for `reproduce`: goal reached) |
//! | 1 | the command ran but did not succeed: goal not reached, training failed |
//! | 2 | usage or input error: bad arguments, unreadable or invalid files, missing frames |
//! | 3 | episode aborted |
//!
//! Log verbosity is read from `FORCESKILL_LOG` (`error` … `trace`).

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use forceskill_core::attractor::attractor_trajectory;
use forceskill_core::demo::{validate_demo, ValidationConfig};
use forceskill_core::execution::{run_episode, DisturbanceScript, Outcome};
use forceskill_core::manifold::{Pose, Vector};
use forceskill_core::scenario::{press_demos, DemoNoise};
use forceskill_core::skill::train;
use log::info;
use nalgebra::Vector3;

use crate::archive::ModelArchive;
use crate::config::SkillConfig;
use crate::demo_io::{load_demos, save_demo_file};
use crate::error::{io_err, IoError};
use crate::exec_log::{load_log, outcome_str, save_log};
use crate::plot::{adaptation_figure, stiffness_figure, trajectory_figure, Figure};
use crate::scene::{GoalSpec, PoseSpec, ResolveError, SceneFile, SurfaceSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_ABORTED: i32 = 3;

pub const LOG_ENV: &str = "FORCESKILL_LOG";

#[derive(Debug, Parser)]
#[command(name = "forceskill", version, about = "Learn and reproduce forceful manipulation skills")]
pub struct Cli {
    /// Print the configuration (defaults, or --config with overrides) and exit.
    #[arg(long)]
    pub print_config: bool,
    /// Skill configuration file (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Learn a skill model from demonstration files.
    Train {
        /// Directory of `.demo` files, or a single file.
        #[arg(long)]
        demos: PathBuf,
        /// Model archive to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Execute a skill model against the simulated plant.
    Reproduce {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        scene: PathBuf,
        /// Disturbance script (TOML).
        #[arg(long)]
        script: Option<PathBuf>,
        /// `model`, or a comma-separated goal point overriding the scene.
        #[arg(long)]
        goal: Option<String>,
        /// Execution log to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize a model archive or validate demonstrations.
    Inspect {
        #[arg(long, required_unless_present = "demos")]
        model: Option<PathBuf>,
        #[arg(long)]
        demos: Option<PathBuf>,
    },
    /// Render a figure as SVG, with the plotted series as CSV next to it.
    Plot {
        #[arg(long, value_enum)]
        kind: PlotKind,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        demos: Option<PathBuf>,
        #[arg(long)]
        log: Option<PathBuf>,
        /// Cartesian axis of trajectory plots (0 = x, 1 = y, 2 = z).
        #[arg(long, default_value_t = 2)]
        axis: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write synthetic press demonstrations and a matching scene file.
    Generate {
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Overrides the configured number of demonstrations.
        #[arg(long)]
        count: Option<usize>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PlotKind {
    /// Demonstration vs attractor vs execution, with force.
    Trajectory,
    /// Stiffness per tangent dimension.
    Stiffness,
    /// Execution timeline with replanning events.
    Adaptation,
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn input(e: impl std::fmt::Display) -> Self {
        Failure { code: EXIT_INPUT, message: e.to_string() }
    }
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        Failure::input(e)
    }
}

impl From<ResolveError> for Failure {
    fn from(e: ResolveError) -> Self {
        Failure::input(e)
    }
}

type CmdResult = Result<i32, Failure>;

pub fn init_logging() {
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn"))
        .format_timestamp(None)
        .try_init();
}

/// Runs the CLI on `args` (including the program name) and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            if code == 0 {
                let _ = write!(out, "{text}");
            } else {
                let _ = write!(err, "{text}");
            }
            return if code == 0 { EXIT_OK } else { EXIT_INPUT };
        }
    };
    match dispatch(cli, out) {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn load_config(cli: &Cli) -> Result<SkillConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(p) => SkillConfig::load(p)?,
        None => SkillConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> CmdResult {
    let cfg = load_config(&cli)?;
    if cli.print_config {
        let _ = write!(out, "{}", cfg.to_toml());
        return Ok(EXIT_OK);
    }
    let Some(command) = cli.command else {
        return Err(Failure::input("no command given (see --help)"));
    };
    match command {
        Command::Train { demos, out: path } => train_cmd(&cfg, &demos, &path, out),
        Command::Reproduce { model, scene, script, goal, out: path } => {
            reproduce_cmd(&cfg, &model, &scene, script.as_deref(), goal.as_deref(), &path, out)
        }
        Command::Inspect { model, demos } => inspect_cmd(model.as_deref(), demos.as_deref(), out),
        Command::Plot { kind, model, demos, log, axis, out: path } => {
            plot_cmd(kind, model.as_deref(), demos.as_deref(), log.as_deref(), axis, &path, out)
        }
        Command::Generate { out: dir, count } => generate_cmd(&cfg, &dir, count, out),
    }
}

fn fmt_list(v: impl IntoIterator<Item = f64>) -> String {
    v.into_iter().map(|x| format!("{x:.6e}")).collect::<Vec<_>>().join(" ")
}

fn train_cmd(cfg: &SkillConfig, demos: &Path, path: &Path, out: &mut dyn Write) -> CmdResult {
    let start = Instant::now();
    let demos = load_demos(demos)?;
    info!("loaded {} demonstrations", demos.len());
    let vc = ValidationConfig::default();
    for d in &demos {
        let r = validate_demo(d, &vc);
        if !r.is_clean() {
            let _ = writeln!(out, "warning: demonstration `{}` has {} flagged samples", d.id, r.issues.len());
        }
    }
    let (skill, report) = match train(&demos, &cfg.training) {
        Ok(r) => r,
        Err(e) => return Err(Failure { code: EXIT_FAILED, message: format!("training failed: {e}") }),
    };
    let archive = ModelArchive::new(cfg.name.clone(), cfg.training.clone(), skill);
    archive.save(path)?;
    let elapsed = start.elapsed().as_secs_f64();
    let ll = &report.em.loglik;
    let monotone = ll.windows(2).all(|w| w[1] - w[0] >= -1e-7 * w[0].abs());
    let _ = writeln!(out, "skill `{}`: {} demonstrations, {} components", cfg.name, demos.len(), cfg.training.components);
    let _ = writeln!(
        out,
        "EM: {} iterations, converged {}, monotone {}",
        ll.len(),
        report.em.converged,
        monotone
    );
    let _ = writeln!(out, "loglik: {}", fmt_list(ll.iter().copied()));
    for (k, m) in archive.skill.stiffness.stiffness.iter().enumerate() {
        let mut ev: Vec<f64> = m.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        let _ = writeln!(out, "stiffness {k}: eigenvalues {}", fmt_list(ev));
    }
    for w in &report.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    let _ = writeln!(out, "wrote {}", path.display());
    let _ = writeln!(out, "wall clock: {elapsed:.3} s");
    Ok(EXIT_OK)
}

fn parse_goal(s: &str) -> Result<GoalSpec, Failure> {
    if s == "model" {
        return Ok(GoalSpec::Model);
    }
    let point = s
        .split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect::<Result<Vec<f64>, _>>()
        .map_err(|_| Failure::input(format!("goal `{s}` is neither `model` nor a list of numbers")))?;
    Ok(GoalSpec::Point { point, frame: None })
}

fn load_script(path: &Path) -> Result<DisturbanceScript, Failure> {
    let text = std::fs::read_to_string(path).map_err(io_err(path)).map_err(Failure::from)?;
    toml::from_str(&text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn reproduce_cmd(
    cfg: &SkillConfig,
    model: &Path,
    scene: &Path,
    script: Option<&Path>,
    goal: Option<&str>,
    path: &Path,
    out: &mut dyn Write,
) -> CmdResult {
    let archive = ModelArchive::load(model)?;
    let mut scene_file = SceneFile::load(scene)?;
    if let Some(g) = goal {
        scene_file.goal = parse_goal(g)?;
    }
    let script = match script {
        Some(p) => load_script(p)?,
        None => DisturbanceScript::default(),
    };
    let skill = &archive.skill;
    let resolved = scene_file.resolve(skill)?;
    let mut exec = cfg.execution.clone();
    exec.dt = skill.dt;
    let log = run_episode(skill, &resolved.scene, &resolved.start, &resolved.goal, &script, &resolved.environment, &exec)
        .map_err(Failure::input)?;
    save_log(path, &log)?;
    let _ = writeln!(out, "outcome: {}", outcome_str(&log.outcome));
    let _ = writeln!(out, "ticks: {} ({:.2} s)", log.ticks.len(), log.ticks.len() as f64 * log.dt);
    for r in &log.replans {
        let _ = writeln!(out, "replan at tick {}: {} (transition {} steps)", r.tick, r.reason.as_str(), r.transition_steps);
    }
    let _ = writeln!(out, "wrote {}", path.display());
    Ok(match log.outcome {
        Outcome::GoalReached => EXIT_OK,
        Outcome::HorizonExhausted => EXIT_FAILED,
        Outcome::Aborted(_) => EXIT_ABORTED,
    })
}

fn inspect_cmd(model: Option<&Path>, demos: Option<&Path>, out: &mut dyn Write) -> CmdResult {
    if let Some(p) = model {
        let a = ModelArchive::load(p)?;
        let m = &a.skill.model;
        let _ = writeln!(out, "skill `{}` (format version {})", a.name, a.format_version);
        let _ = writeln!(out, "geometry: {:?}", m.geometry);
        let _ = writeln!(out, "frames: {}", m.frame_names.join(", "));
        let _ = writeln!(out, "components: {} (final {})", m.num_components(), a.skill.final_component);
        let _ = writeln!(out, "nominal length: {} samples at dt {}", a.skill.nominal_steps, a.skill.dt);
        for k in 0..m.num_components() {
            let d = &m.durations[k];
            let diag: Vec<f64> = a.skill.stiffness.stiffness[k].diagonal().iter().copied().collect();
            let _ = writeln!(
                out,
                "  {k}: prior {:.3}, duration {:.1}±{:.1}, stiffness diag [{}]",
                m.priors[k],
                d.mean,
                d.std,
                diag.iter().map(|v| format!("{v:.1}")).collect::<Vec<_>>().join(", ")
            );
        }
    }
    if let Some(p) = demos {
        let demos = load_demos(p)?;
        let vc = ValidationConfig::default();
        for d in &demos {
            let r = validate_demo(d, &vc);
            let _ = writeln!(out, "{}: {} samples at {} Hz, {} issues", d.id, d.len(), d.sample_rate, r.issues.len());
            for i in &r.issues {
                let _ = writeln!(out, "  sample {}: {:?}", i.index, i.kind);
            }
        }
    }
    Ok(EXIT_OK)
}

fn require<'a>(p: Option<&'a Path>, what: &str, kind: PlotKind) -> Result<&'a Path, Failure> {
    p.ok_or_else(|| Failure::input(format!("{kind:?} plots need --{what}").to_lowercase()))
}

fn plot_cmd(
    kind: PlotKind,
    model: Option<&Path>,
    demos: Option<&Path>,
    log: Option<&Path>,
    axis: usize,
    path: &Path,
    out: &mut dyn Write,
) -> CmdResult {
    let log = log.map(load_log).transpose()?;
    let figure: Figure = match kind {
        PlotKind::Trajectory => {
            let demos = load_demos(require(demos, "demos", kind)?)?;
            let archive = ModelArchive::load(require(model, "model", kind)?)?;
            let training = &archive.training;
            let demo = &demos[0];
            let traj = attractor_trajectory(
                &training.geometry,
                demo,
                &forceskill_core::attractor::GainsSchedule::Constant(training.initial_gains()),
            )
            .map_err(Failure::input)?;
            let pts: Vec<[f64; 3]> = traj.points.iter().map(|p: &Vector| [p[0], p[1], p[2]]).collect();
            trajectory_figure(demo, &pts, log.as_ref(), axis)
        }
        PlotKind::Stiffness => {
            let archive = ModelArchive::load(require(model, "model", kind)?)?;
            stiffness_figure(&archive.skill, log.as_ref())
        }
        PlotKind::Adaptation => {
            let log = log.as_ref().ok_or_else(|| Failure::input("adaptation plots need --log"))?;
            adaptation_figure(log)
        }
    };
    std::fs::write(path, figure.to_svg()).map_err(io_err(path)).map_err(Failure::from)?;
    let csv = path.with_extension("csv");
    std::fs::write(&csv, figure.to_csv()).map_err(io_err(&csv)).map_err(Failure::from)?;
    let _ = writeln!(out, "wrote {} and {}", path.display(), csv.display());
    Ok(EXIT_OK)
}

fn generate_cmd(cfg: &SkillConfig, dir: &Path, count: Option<usize>, out: &mut dyn Write) -> CmdResult {
    let g = &cfg.generator;
    let count = count.unwrap_or(g.demos);
    if count == 0 {
        return Err(Failure::input("at least one demonstration is required"));
    }
    std::fs::create_dir_all(dir).map_err(io_err(dir)).map_err(Failure::from)?;
    let start = Pose::from_position(Vector3::from(g.start));
    let object = Pose::from_position(Vector3::from(g.object));
    let noise = DemoNoise { position_std: g.position_noise, wrench_std: g.wrench_noise };
    let demos = press_demos(&g.press, start, object, g.object_spread, count, g.dt, noise, cfg.seed).map_err(Failure::input)?;
    for d in &demos {
        let p = dir.join(format!("{}.demo", d.demo.id));
        save_demo_file(&p, std::slice::from_ref(&d.demo))?;
    }
    let scene = SceneFile {
        start: PoseSpec::from_pose(&start),
        object: PoseSpec::from_pose(&object),
        surface: SurfaceSpec::Object,
        contact: Default::default(),
        goal: GoalSpec::Model,
        frames: None,
    };
    let scene_path = dir.join("scene.toml");
    std::fs::write(&scene_path, scene.to_toml()).map_err(io_err(&scene_path)).map_err(Failure::from)?;
    let _ = writeln!(out, "wrote {count} demonstrations and {} to {}", scene_path.display(), dir.display());
    Ok(EXIT_OK)
}
