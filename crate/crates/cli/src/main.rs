//! `moma` command-line runner.
//!
//! Every subcommand starts from the defaults of [`RunConfig`], applies the
//! TOML file given with `--config` and then applies individual flags.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use moma::harness::{
    aggregate, write_keypoints, write_metrics, write_sweep, write_trajectory, Experiment, Method, RunConfig, SweepRow,
};
use moma::scenario::{validate, ScenarioScript};

#[derive(Parser)]
#[command(name = "moma", version, about = "Mobile marker odometry simulator")]
struct Cli {
    #[command(subcommand)]
    command: Commands,
}

#[derive(Subcommand)]
enum Commands {
    /// Run one trial and write the full trajectory CSV.
    Simulate(RunArgs),
    /// Run many trials and write per-trial and aggregate metrics.
    Montecarlo(RunArgs),
    /// Paired comparison of the marker estimator against visual odometry.
    Compare(RunArgs),
    /// Check a scenario file against the motion protocol.
    Validate {
        /// Scenario TOML file.
        #[arg(required_unless_present = "scenario")]
        file: Option<PathBuf>,
        /// Validate a generated scenario instead of a file.
        #[arg(long, conflicts_with = "file")]
        scenario: Option<String>,
        /// Write the validated scenario as TOML.
        #[arg(long)]
        write: Option<PathBuf>,
    },
    /// Run a Monte-Carlo batch at every point of a noise grid.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated marker corner noise values.
        #[arg(long, value_delimiter = ',')]
        pixel_sigmas: Vec<f64>,
        /// Comma-separated feature tracking noise values.
        #[arg(long, value_delimiter = ',')]
        flow_sigmas: Vec<f64>,
        /// Comma-separated relative depth noise values.
        #[arg(long, value_delimiter = ',')]
        depth_sigmas: Vec<f64>,
    },
}

#[derive(Args, Clone, Default)]
struct RunArgs {
    /// Run configuration TOML file.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Output directory; CSV goes to stdout when absent.
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(short = 'n', long)]
    trials: Option<usize>,
    /// Worker threads for Monte-Carlo batches.
    #[arg(short, long)]
    workers: Option<usize>,
    /// Frames averaged on each side of a reference switch.
    #[arg(long)]
    window_frames: Option<usize>,
    /// square, line, caterpillar, sled or file.
    #[arg(long)]
    scenario: Option<String>,
    /// Scenario file; implies `--scenario file`.
    #[arg(long)]
    scenario_file: Option<PathBuf>,
    #[arg(long)]
    keypoints_per_leg: Option<usize>,
    #[arg(long)]
    overshoot: Option<f64>,
    /// Fixed observer height above the markers.
    #[arg(long)]
    fixed_altitude: Option<f64>,
    #[arg(long)]
    robots: Option<usize>,
    #[arg(long)]
    pixel_sigma: Option<f64>,
    #[arg(long)]
    flow_sigma: Option<f64>,
    #[arg(long)]
    flow_scale: Option<f64>,
    #[arg(long)]
    depth_sigma: Option<f64>,
    /// Disable the visual odometry baseline.
    #[arg(long)]
    no_vo: bool,
}

impl RunArgs {
    fn config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($field:ident => $target:expr),* $(,)?) => {
                $(if let Some(v) = self.$field.clone() { $target = v; })*
            };
        }
        set! {
            seed => cfg.seed,
            trials => cfg.trials,
            workers => cfg.workers,
            window_frames => cfg.window_frames,
            scenario => cfg.scenario.name,
            keypoints_per_leg => cfg.scenario.keypoints_per_leg,
            overshoot => cfg.scenario.overshoot,
            robots => cfg.scenario.robots,
            pixel_sigma => cfg.noise.pixel_sigma,
            flow_sigma => cfg.noise.flow_sigma,
            flow_scale => cfg.noise.flow_scale,
            depth_sigma => cfg.noise.depth_sigma,
        }
        if let Some(h) = self.fixed_altitude {
            cfg.scenario.fixed_altitude = Some(h);
        }
        if let Some(p) = &self.scenario_file {
            cfg.scenario.name = "file".into();
            cfg.scenario.path = Some(p.clone());
        }
        if let Some(o) = &self.output {
            cfg.output = Some(o.clone());
        }
        if self.no_vo {
            cfg.vo.enabled = false;
        }
        cfg.check()?;
        Ok(cfg)
    }
}

/// Opens `dir/name`, or stdout without an output directory.
fn sink(dir: Option<&Path>, name: &str) -> Result<Box<dyn Write>> {
    match dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
            let path = dir.join(name);
            let file = File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
            Ok(Box::new(BufWriter::new(file)))
        }
        None => Ok(Box::new(io::stdout().lock())),
    }
}

fn simulate(args: &RunArgs) -> Result<()> {
    let cfg = args.config()?;
    let exp = Experiment::new(cfg.clone())?;
    let result = exp.run_trial(0, cfg.seed, true)?;
    let dir = cfg.output.as_deref();
    write_trajectory(sink(dir, "trajectory.csv")?, &result.records)?;
    if dir.is_some() {
        let results = [result];
        write_metrics(sink(dir, "metrics.csv")?, &results, &aggregate(&results))?;
        write_keypoints(sink(dir, "keypoints.csv")?, &results)?;
    }
    Ok(())
}

fn montecarlo(args: &RunArgs) -> Result<()> {
    let cfg = args.config()?;
    let results = Experiment::new(cfg.clone())?.monte_carlo()?;
    let aggregates = aggregate(&results);
    let dir = cfg.output.as_deref();
    write_metrics(sink(dir, "metrics.csv")?, &results, &aggregates)?;
    if dir.is_some() {
        write_keypoints(sink(dir, "keypoints.csv")?, &results)?;
        for a in &aggregates {
            eprintln!(
                "{}: ME_f = {:.4} m (std {:.4}), {:.3}% of path, loss rate {:.3}",
                a.method.as_str(),
                a.final_error.0,
                a.final_error.1,
                a.percent_final_error.0,
                a.loss_rate
            );
        }
    }
    Ok(())
}

fn compare(args: &RunArgs) -> Result<()> {
    let mut cfg = args.config()?;
    cfg.vo.enabled = true;
    let exp = Experiment::new(cfg.clone())?;
    if exp.script.vo.is_none() {
        bail!("scenario '{}' has no visual odometry rig", exp.script.name);
    }
    let results = exp.monte_carlo()?;
    let aggregates = aggregate(&results);
    let wins = results
        .iter()
        .filter(|r| match (r.method(Method::Moma), r.method(Method::Vo)) {
            (Some(m), Some(v)) => m.final_error < v.final_error,
            _ => false,
        })
        .count();
    if let Some(dir) = cfg.output.as_deref() {
        write_metrics(sink(Some(dir), "metrics.csv")?, &results, &aggregates)?;
    }
    let mut out = io::stdout().lock();
    writeln!(out, "method,ME_f,E_f_std,percent_final_error,loss_rate")?;
    for a in &aggregates {
        writeln!(
            out,
            "{},{},{},{},{}",
            a.method.as_str(),
            a.final_error.0,
            a.final_error.1,
            a.percent_final_error.0,
            a.loss_rate
        )?;
    }
    writeln!(out, "# moma wins {wins} of {} pairs", results.len())?;
    Ok(())
}

fn validate_cmd(file: Option<&Path>, scenario: Option<&str>, write: Option<&Path>) -> Result<()> {
    let script = match (file, scenario) {
        (Some(path), _) => ScenarioScript::load(path)?,
        (None, Some(name)) => {
            let mut cfg = RunConfig::default();
            cfg.scenario.name = name.to_string();
            cfg.scenario.build(cfg.window_frames)?
        }
        (None, None) => bail!("no scenario given"),
    };
    validate(&script)?;
    script.check_visibility()?;
    if let Some(path) = write {
        script.save(path)?;
    }
    println!(
        "ok: {} ({} agents, {} frames, {} keypoints)",
        script.name,
        script.agents.len(),
        script.frames,
        script.keypoints.len()
    );
    Ok(())
}

fn sweep(run: &RunArgs, pixel: &[f64], flow: &[f64], depth: &[f64]) -> Result<()> {
    let base = run.config()?;
    let exp = Experiment::new(base.clone())?;
    let axis = |v: &[f64], d: f64| if v.is_empty() { vec![d] } else { v.to_vec() };
    let mut rows = Vec::new();
    for &p in &axis(pixel, base.noise.pixel_sigma) {
        for &f in &axis(flow, base.noise.flow_sigma) {
            for &d in &axis(depth, base.noise.depth_sigma) {
                let mut cfg = base.clone();
                cfg.noise.pixel_sigma = p;
                cfg.noise.flow_sigma = f;
                cfg.noise.depth_sigma = d;
                let point = Experiment::from_script(cfg, exp.script.clone())?;
                let results = point.monte_carlo()?;
                for a in aggregate(&results) {
                    rows.push(SweepRow {
                        pixel_sigma: p,
                        flow_sigma: f,
                        depth_sigma: d,
                        method: a.method,
                        trials: a.trials,
                        me: a.mean_error.0,
                        me_f: a.final_error.0,
                        e_f_std: a.final_error.1,
                        percent_final_error: a.percent_final_error.0,
                        loss_rate: a.loss_rate,
                    });
                }
            }
        }
    }
    write_sweep(sink(base.output.as_deref(), "sweep.csv")?, &rows)?;
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Commands::Simulate(args) => simulate(args),
        Commands::Montecarlo(args) => montecarlo(args),
        Commands::Compare(args) => compare(args),
        Commands::Validate { file, scenario, write } => {
            validate_cmd(file.as_deref(), scenario.as_deref(), write.as_deref())
        }
        Commands::Sweep {
            run,
            pixel_sigmas,
            flow_sigmas,
            depth_sigmas,
        } => sweep(run, pixel_sigmas, flow_sigmas, depth_sigmas),
    }
}

fn main() -> std::process::ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) if is_broken_pipe(&e) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::ExitCode::FAILURE
        }
    }
}

fn is_broken_pipe(e: &anyhow::Error) -> bool {
    let pipe = |io: &io::Error| io.kind() == io::ErrorKind::BrokenPipe;
    e.chain().any(|c| {
        c.downcast_ref::<io::Error>().is_some_and(pipe)
            || c.downcast_ref::<moma::harness::HarnessError>().is_some_and(|h| match h {
                moma::harness::HarnessError::Io(io) => pipe(io),
                moma::harness::HarnessError::Csv(c) => matches!(c.kind(), csv::ErrorKind::Io(io) if pipe(io)),
                _ => false,
            })
    })
}
