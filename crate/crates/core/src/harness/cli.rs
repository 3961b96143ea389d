//! Command-line front end. Exit codes: 0 success, 1 usage or validation
//! error, 2 runtime failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};

use crate::binsim::BinScene;
use crate::transforms::TransformTree;

use super::bench::{
    calib_demo, estimate_scene, format_estimates, load_or_build_codebook, run_codebook_report, run_pick_bench,
    run_place_bench,
};
use super::config::ExperimentConfig;
use super::report::write_file;
use super::HarnessError;

const PICK_REFERENCE: [u32; 4] = [92, 88, 76, 85];
const PLACE_REFERENCE: [u32; 4] = [83, 93, 66, 81];

#[derive(Debug, Parser)]
#[command(name = "deformpose", version, about = "Pose estimation and suction bin-picking simulator for deformable objects")]
struct Cli {
    /// TOML experiment config; every key is optional.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides `experiment.seed`.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Overrides `output.dir`.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render the view-sphere codebook and write `codebook.txt`.
    BuildCodebook,
    /// Estimate the pose of every object in a scene file; writes `estimate.txt`.
    Estimate {
        #[arg(value_name = "SCENE_FILE")]
        scene_file: PathBuf,
    },
    /// Bin-picking bench; writes `pick_bench.csv` and `pick_bench.json`.
    PickBench,
    /// Canonical-pose placement bench; writes `place_bench.csv` and `place_bench.json`.
    PlaceBench,
    /// Codebook retrieval accuracy; writes `codebook_report.json`.
    CodebookReport,
    /// Hand-eye calibration chain; writes `calibration.txt`. The optional file
    /// holds `parent child w x y z tx ty tz` lines for base->wrist,
    /// wrist->aruco, aruco->camera and optionally wrist->object; without it a
    /// chain is drawn from the seed.
    CalibDemo {
        #[arg(value_name = "TRANSFORM_FILE")]
        transforms: Option<PathBuf>,
    },
}

fn command() -> clap::Command {
    let defaults = ExperimentConfig::default().to_toml();
    Cli::command().after_long_help(format!("Config defaults:\n\n{defaults}"))
}

/// Parse `argv` (program name first), run, and return the exit code.
pub fn run<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match command().try_get_matches_from(argv) {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let sink: &mut dyn Write = if code == 0 { stdout } else { stderr };
            let _ = write!(sink, "{text}");
            return code;
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(stderr, "{}", e.render());
            return 1;
        }
    };
    match execute(cli, stdout, stderr) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.experiment.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output.dir = o.clone();
    }
    Ok(cfg)
}

fn read_input(path: &Path) -> Result<String, HarnessError> {
    std::fs::read_to_string(path).map_err(|e| HarnessError::Input(format!("cannot read {}: {e}", path.display())))
}

fn execute(cli: Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), HarnessError> {
    let cfg = load_config(&cli)?;
    let dir = cfg.output.dir.clone();
    let out = |e: std::io::Error| HarnessError::io("writing stdout", e);
    match &cli.command {
        Command::BuildCodebook => {
            let cb = load_or_build_codebook(&cfg)?;
            let path = dir.join("codebook.txt");
            write_file(&path, &cb.to_text())?;
            write!(stdout, "{}", cb.header()).map_err(out)?;
            writeln!(stdout, "{} entries written to {}", cb.len(), path.display()).map_err(out)?;
        }
        Command::Estimate { scene_file } => {
            let scene = BinScene::from_text(&read_input(scene_file)?)
                .map_err(|e| HarnessError::Input(format!("{}: {e}", scene_file.display())))?;
            let cb = load_or_build_codebook(&cfg)?;
            let text = format_estimates(&estimate_scene(&scene, &cb)?);
            write_file(&dir.join("estimate.txt"), &text)?;
            write!(stdout, "{text}").map_err(out)?;
        }
        Command::PickBench => {
            let r = run_pick_bench(&cfg)?;
            r.write(&dir, "pick_bench")?;
            write!(stdout, "{}", r.table("Bin picking", Some(PICK_REFERENCE))).map_err(out)?;
            let _ = writeln!(stderr, "runtime {:.2} s", r.runtime_seconds);
        }
        Command::PlaceBench => {
            let r = run_place_bench(&cfg, None)?;
            r.write(&dir, "place_bench")?;
            write!(stdout, "{}", r.table("Pose placement", Some(PLACE_REFERENCE))).map_err(out)?;
            let _ = writeln!(stderr, "runtime {:.2} s", r.runtime_seconds);
        }
        Command::CodebookReport => {
            let r = run_codebook_report(&cfg, None)?;
            write_file(&dir.join("codebook_report.json"), &r.to_json())?;
            write!(stdout, "{}", r.summary()).map_err(out)?;
            let _ = writeln!(stderr, "runtime {:.2} s", r.runtime_seconds);
        }
        Command::CalibDemo { transforms } => {
            let chain = match transforms {
                Some(p) => Some(
                    TransformTree::parse(&read_input(p)?)
                        .map_err(|e| HarnessError::Input(format!("{}: {e}", p.display())))?,
                ),
                None => None,
            };
            let demo = calib_demo(&cfg, chain)?;
            let text = demo.to_text();
            write_file(&dir.join("calibration.txt"), &text)?;
            write!(stdout, "{text}").map_err(out)?;
        }
    }
    Ok(())
}
