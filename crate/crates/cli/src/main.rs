//! `georef`: generate synthetic scenarios, run the geo-referencing pipeline,
//! and compare association modes on a shared scenario.
//!
//! Exit codes: 0 success, 1 usage, 2 data/config error, 3 solver failure.

mod plots;

use clap::{Args, Parser, Subcommand};
use georef_core::{
    entropy_error_correlation, generate_scenario, pseudo_entropy, run_session, sig9, ConfigFile,
    DeltaSignal, DetectionsFile, FrameDetections, FrameRecord, MapFile, MetricReport,
    PipelineConfig, PipelineError, PipelineMode, ScenarioSpecFile, Trajectory, TrajectoryFile,
};
use serde::Serialize;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "georef",
    version,
    about = "Self-tuning geo-referencing of lane-marking detections"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scenario (map, trajectories, detections).
    Generate(GenerateArgs),
    /// Run one pipeline mode over scenario files.
    Run(RunArgs),
    /// Run several modes on one scenario and tabulate the metrics.
    Compare(CompareArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Scenario spec TOML: [layout] and [noise] tables.
    spec: PathBuf,
    /// Scenario RNG seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Landmark map JSON.
    #[arg(long)]
    map: PathBuf,
    /// Prior trajectory CSV.
    #[arg(long)]
    prior: PathBuf,
    /// Per-frame detections JSON.
    #[arg(long)]
    detections: PathBuf,
    /// Ground-truth trajectory CSV; enables the metric report.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Pipeline configuration TOML; missing keys take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Association mode, overriding the config file.
    #[arg(long)]
    mode: Option<String>,
    /// Association RNG seed, overriding the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Optimization window in frames, overriding the config file.
    #[arg(long)]
    window: Option<usize>,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Also emit SVG plots.
    #[arg(long)]
    plots: bool,
}

#[derive(Args)]
struct CompareArgs {
    /// Scenario directory holding map.json, prior.csv, detections.json,
    /// truth.csv (as written by `generate`).
    scenario: PathBuf,
    /// Pipeline configuration TOML applied to every mode.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated mode list; defaults to all five.
    #[arg(long)]
    mode: Option<String>,
    /// Association RNG seed, overriding the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Optimization window in frames, overriding the config file.
    #[arg(long)]
    window: Option<usize>,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Also emit SVG plots.
    #[arg(long)]
    plots: bool,
}

enum CmdError {
    Usage(String),
    Data(String),
    Solver(String),
}

impl CmdError {
    fn exit_code(&self) -> u8 {
        match self {
            CmdError::Usage(_) => 1,
            CmdError::Data(_) => 2,
            CmdError::Solver(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CmdError::Usage(m) | CmdError::Data(m) | CmdError::Solver(m) => m,
        }
    }
}

impl From<georef_core::IoError> for CmdError {
    fn from(e: georef_core::IoError) -> Self {
        CmdError::Data(e.to_string())
    }
}

impl From<georef_core::SimError> for CmdError {
    fn from(e: georef_core::SimError) -> Self {
        CmdError::Data(e.to_string())
    }
}

impl From<PipelineError> for CmdError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Solver { .. } | PipelineError::Covariance(_) => {
                CmdError::Solver(e.to_string())
            }
            _ => CmdError::Data(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Generate(args) => cmd_generate(&args),
        Command::Run(args) => cmd_run(&args),
        Command::Compare(args) => cmd_compare(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}

fn ensure_dir(dir: &Path) -> Result<(), CmdError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CmdError::Data(format!("cannot create {}: {e}", dir.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CmdError> {
    std::fs::write(path, text)
        .map_err(|e| CmdError::Data(format!("cannot write {}: {e}", path.display())))
}

/// Detection entropy exactly as the pipeline measures it per frame.
fn frame_entropy(frame: &FrameDetections) -> f64 {
    let signals: Vec<DeltaSignal> = frame
        .polylines
        .iter()
        .map(|pl| DeltaSignal::new(pl.delta_angles()).expect("delta angles are valid"))
        .collect();
    pseudo_entropy(&signals).value()
}

fn cmd_generate(args: &GenerateArgs) -> Result<(), CmdError> {
    let spec = ScenarioSpecFile::read(&args.spec)?;
    let sc = generate_scenario(&spec.layout, &spec.noise, args.seed)?;
    ensure_dir(&args.out)?;

    MapFile::new(sc.map.polylines().to_vec()).write(&args.out.join("map.json"))?;
    TrajectoryFile::new(sc.ground_truth.clone()).write(&args.out.join("truth.csv"))?;
    TrajectoryFile::new(sc.prior.clone()).write(&args.out.join("prior.csv"))?;
    DetectionsFile::new(sc.detections.clone()).write(&args.out.join("detections.json"))?;

    let mut entropy_csv = String::from("index,entropy\n");
    for frame in &sc.detections {
        let _ = writeln!(
            entropy_csv,
            "{},{}",
            frame.frame_index,
            sig9(frame_entropy(frame))
        );
    }
    write_text(&args.out.join("entropy.csv"), &entropy_csv)?;

    println!(
        "generated {} frames, {} map points -> {}",
        sc.prior.len(),
        sc.map.point_count(),
        args.out.display()
    );
    Ok(())
}

/// Loads the config file (if any), logs defaulted keys, applies flag
/// overrides.
fn load_config(
    config: Option<&Path>,
    mode: Option<&str>,
    seed: Option<u64>,
    window: Option<usize>,
) -> Result<PipelineConfig, CmdError> {
    let mut cfg = match config {
        Some(path) => {
            let parsed = ConfigFile::read(path)?;
            if !parsed.defaulted.is_empty() {
                eprintln!(
                    "config {}: defaulted keys: {}",
                    path.display(),
                    parsed.defaulted.join(", ")
                );
            }
            parsed.config
        }
        None => PipelineConfig::default(),
    };
    if let Some(m) = mode {
        cfg.mode = m
            .parse()
            .map_err(|e: String| CmdError::Usage(e))?;
    }
    if let Some(s) = seed {
        cfg.dcsac.rng_seed = s;
    }
    if let Some(w) = window {
        cfg.window = w;
    }
    Ok(cfg)
}

#[derive(Serialize)]
struct RecordsDoc<'a> {
    version: u32,
    records: &'a [FrameRecord],
}

fn write_records(path: &Path, records: &[FrameRecord]) -> Result<(), CmdError> {
    let doc = RecordsDoc {
        version: 1,
        records,
    };
    let mut text = serde_json::to_string(&doc).expect("records serialize");
    text.push('\n');
    write_text(path, &text)
}

fn metrics_table(rows: &[(String, Option<&MetricReport>, Option<f64>, &str)]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<18} {:>16} {:>16} {:>16} {:>16}  status",
        "mode", "ate_m", "rpe_trans_m", "rpe_rot_deg", "entropy_corr"
    );
    for (mode, report, corr, status) in rows {
        let (ate, rpe_t, rpe_r) = match report {
            Some(r) => (
                sig9(r.ate_rmse),
                sig9(r.rpe_trans_rmse),
                sig9(r.rpe_rot_rmse_deg),
            ),
            None => ("failed".into(), "failed".into(), "failed".into()),
        };
        let corr = corr.map_or_else(|| "n/a".to_string(), sig9);
        let _ = writeln!(
            out,
            "{mode:<18} {ate:>16} {rpe_t:>16} {rpe_r:>16} {corr:>16}  {status}"
        );
    }
    out
}

fn trajectory_series<'a>(name: &'a str, color: &'a str, dashed: bool, t: &Trajectory) -> plots::Series<'a> {
    plots::Series {
        name,
        color,
        dashed,
        points: t.poses().iter().map(|p| (p.x, p.y)).collect(),
    }
}

fn trace_series<'a>(name: &'a str, color: &'a str, values: &[f64], x0: usize) -> plots::Series<'a> {
    plots::Series {
        name,
        color,
        dashed: false,
        points: values
            .iter()
            .enumerate()
            .map(|(i, &v)| ((i + x0) as f64, v))
            .collect(),
    }
}

fn cmd_run(args: &RunArgs) -> Result<(), CmdError> {
    let map_file = MapFile::read(&args.map)?;
    let prior = TrajectoryFile::read(&args.prior)?.trajectory;
    let detections = DetectionsFile::read(&args.detections)?.frames;
    let truth = args
        .truth
        .as_deref()
        .map(TrajectoryFile::read)
        .transpose()?
        .map(|f| f.trajectory);
    let cfg = load_config(
        args.config.as_deref(),
        args.mode.as_deref(),
        args.seed,
        args.window,
    )?;
    let map = map_file.to_map();

    let (estimate, records) = run_session(&map, &prior, &detections, &cfg)?;

    ensure_dir(&args.out)?;
    TrajectoryFile::new(estimate.clone()).write(&args.out.join("estimate.csv"))?;
    write_records(&args.out.join("records.json"), &records)?;

    let report = match &truth {
        Some(truth) => {
            let entropy: Vec<f64> = records.iter().map(|r| r.entropy).collect();
            let report = MetricReport::compute(&estimate, truth, 1, entropy)
                .map_err(|e| CmdError::Data(e.to_string()))?;
            let mut text =
                serde_json::to_string(&report).expect("metric report serializes");
            text.push('\n');
            write_text(&args.out.join("metrics.json"), &text)?;
            let corr = entropy_error_correlation(&report).ok();
            print!(
                "{}",
                metrics_table(&[(cfg.mode.to_string(), Some(&report), corr, "ok")])
            );
            Some(report)
        }
        None => {
            println!(
                "{}: {} frames estimated (no truth supplied, metrics skipped)",
                cfg.mode,
                estimate.len()
            );
            None
        }
    };

    if args.plots {
        let mut series = Vec::new();
        if let Some(truth) = &truth {
            series.push(trajectory_series("truth", "#222222", true, truth));
        }
        series.push(trajectory_series("prior", "#9b9b9b", false, &prior));
        let mode_name = cfg.mode.to_string();
        series.push(trajectory_series(&mode_name, plots::series_color(0), false, &estimate));
        write_text(
            &args.out.join("trajectory.svg"),
            &plots::line_chart("trajectory overlay", "x [m]", "y [m]", &series, true),
        )?;

        let entropy: Vec<f64> = records.iter().map(|r| r.entropy).collect();
        write_text(
            &args.out.join("entropy.svg"),
            &plots::line_chart(
                "per-frame pseudo-entropy",
                "frame",
                "S",
                &[trace_series("entropy", "#2471a3", &entropy, 0)],
                false,
            ),
        )?;
        if let Some(report) = &report {
            write_text(
                &args.out.join("rpe.svg"),
                &plots::line_chart(
                    "per-frame relative pose error",
                    "frame",
                    "RPE trans [m]",
                    &[trace_series(
                        &mode_name,
                        plots::series_color(0),
                        &report.rpe_trans,
                        report.step,
                    )],
                    false,
                ),
            )?;
        }
    }
    Ok(())
}

fn parse_modes(arg: Option<&str>) -> Result<Vec<PipelineMode>, CmdError> {
    match arg {
        None => Ok(PipelineMode::ALL.to_vec()),
        Some(list) => list
            .split(',')
            .map(|m| m.trim().parse().map_err(|e: String| CmdError::Usage(e)))
            .collect(),
    }
}

fn cmd_compare(args: &CompareArgs) -> Result<(), CmdError> {
    let dir = &args.scenario;
    let map_file = MapFile::read(&dir.join("map.json"))?;
    let prior = TrajectoryFile::read(&dir.join("prior.csv"))?.trajectory;
    let detections = DetectionsFile::read(&dir.join("detections.json"))?.frames;
    let truth = TrajectoryFile::read(&dir.join("truth.csv"))?.trajectory;
    let base_cfg = load_config(args.config.as_deref(), None, args.seed, args.window)?;
    let modes = parse_modes(args.mode.as_deref())?;
    let map = map_file.to_map();
    ensure_dir(&args.out)?;

    struct ModeRun {
        mode: PipelineMode,
        outcome: Result<(Trajectory, Vec<FrameRecord>, MetricReport, Option<f64>), String>,
    }

    let mut runs = Vec::new();
    for &mode in &modes {
        let mut cfg = base_cfg.clone();
        cfg.mode = mode;
        let outcome = (|| {
            let (estimate, records) =
                run_session(&map, &prior, &detections, &cfg).map_err(|e| e.to_string())?;
            let mode_dir = args.out.join(mode.to_string());
            ensure_dir(&mode_dir).map_err(|e| e.message().to_string())?;
            TrajectoryFile::new(estimate.clone())
                .write(&mode_dir.join("estimate.csv"))
                .map_err(|e| e.to_string())?;
            write_records(&mode_dir.join("records.json"), &records)
                .map_err(|e| e.message().to_string())?;
            let entropy: Vec<f64> = records.iter().map(|r| r.entropy).collect();
            let report = MetricReport::compute(&estimate, &truth, 1, entropy)
                .map_err(|e| e.to_string())?;
            let mut text =
                serde_json::to_string(&report).expect("metric report serializes");
            text.push('\n');
            write_text(&mode_dir.join("metrics.json"), &text)
                .map_err(|e| e.message().to_string())?;
            let corr = entropy_error_correlation(&report).ok();
            Ok((estimate, records, report, corr))
        })();
        if let Err(msg) = &outcome {
            eprintln!("mode {mode} failed: {msg}");
        }
        runs.push(ModeRun { mode, outcome });
    }

    let mut csv = String::from("mode,ate_m,rpe_trans_m,rpe_rot_deg,entropy_corr,status\n");
    let mut table_rows = Vec::new();
    for run in &runs {
        match &run.outcome {
            Ok((_, _, report, corr)) => {
                let corr_cell = corr.map_or_else(|| "n/a".to_string(), sig9);
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{},ok",
                    run.mode,
                    sig9(report.ate_rmse),
                    sig9(report.rpe_trans_rmse),
                    sig9(report.rpe_rot_rmse_deg),
                    corr_cell
                );
                table_rows.push((run.mode.to_string(), Some(report), *corr, "ok"));
            }
            Err(msg) => {
                let _ = writeln!(
                    csv,
                    "{},failed,failed,failed,n/a,{}",
                    run.mode,
                    msg.replace(',', ";")
                );
                table_rows.push((run.mode.to_string(), None, None, "failed"));
            }
        }
    }
    write_text(&args.out.join("compare.csv"), &csv)?;
    print!("{}", metrics_table(&table_rows));

    if args.plots {
        let mut series = vec![
            trajectory_series("truth", "#222222", true, &truth),
            trajectory_series("prior", "#9b9b9b", false, &prior),
        ];
        let names: Vec<String> = runs.iter().map(|r| r.mode.to_string()).collect();
        for (i, run) in runs.iter().enumerate() {
            if let Ok((estimate, _, _, _)) = &run.outcome {
                series.push(trajectory_series(
                    &names[i],
                    plots::series_color(i),
                    false,
                    estimate,
                ));
            }
        }
        write_text(
            &args.out.join("trajectory.svg"),
            &plots::line_chart("trajectory overlay", "x [m]", "y [m]", &series, true),
        )?;

        let mut rpe_series = Vec::new();
        for (i, run) in runs.iter().enumerate() {
            if let Ok((_, _, report, _)) = &run.outcome {
                rpe_series.push(trace_series(
                    &names[i],
                    plots::series_color(i),
                    &report.rpe_trans,
                    report.step,
                ));
            }
        }
        write_text(
            &args.out.join("rpe.svg"),
            &plots::line_chart(
                "per-frame relative pose error",
                "frame",
                "RPE trans [m]",
                &rpe_series,
                false,
            ),
        )?;

        if let Some(run) = runs.iter().find(|r| r.outcome.is_ok()) {
            if let Ok((_, records, _, _)) = &run.outcome {
                let entropy: Vec<f64> = records.iter().map(|r| r.entropy).collect();
                write_text(
                    &args.out.join("entropy.svg"),
                    &plots::line_chart(
                        "per-frame pseudo-entropy",
                        "frame",
                        "S",
                        &[trace_series("entropy", "#2471a3", &entropy, 0)],
                        false,
                    ),
                )?;
            }
        }
    }
    Ok(())
}
