//! Command line harness around the cover model: scenario simulation,
//! bench calibration, capacitive stream processing and a head-to-head
//! controller comparison. Every artifact is plain CSV or `key = value`
//! text, and identical invocations produce identical bytes.

use clap::{Args, Parser, Subcommand, ValueEnum};
use covertwin::calibration::{self, CalibrationTargets, Trace};
use covertwin::capsense;
use covertwin::config::{ControllerKind, ScenarioConfig};
use covertwin::error::{Error, ErrorKind};
use covertwin::scenario::{run_scenario, solver_log_csv};
use covertwin::timeseries::sig6;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

/// Output root when neither `--out` nor the flag is given.
const OUT_ENV: &str = "COVERTWIN_OUT";

#[derive(Parser)]
#[command(name = "covertwin", version, about = "Water-circulated thermal cover twin")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run scenario files; write telemetry, summary and solver log.
    Simulate(SimulateArgs),
    /// Fit the free plant parameters to the bench step responses.
    Calibrate(CalibrateArgs),
    /// Generate, replay and normalize capacitive sensing streams.
    Capsense(CapsenseArgs),
    /// Run the predictive and the integral controller on one profile.
    Compare(CompareArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario files to run.
    #[arg(long, required = true, num_args = 1..)]
    config: Vec<PathBuf>,
    /// Output root. Falls back to $COVERTWIN_OUT, then the working
    /// directory. Each scenario writes into a directory named after it.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Config overrides applied to every scenario, `section.key=value`.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
    /// Scenarios run concurrently.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Starting configuration; defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CapsenseArgs {
    /// Recorded stream to replay, header `t_s,raw`. Recalibrated on its
    /// leading contact-free window, then normalized and flagged.
    #[arg(long, conflicts_with = "script")]
    input: Option<PathBuf>,
    /// Built-in stream to generate instead of replaying a file.
    #[arg(long, value_enum)]
    script: Option<Script>,
    /// Noise seed for generated streams.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Script {
    /// Per-stack no-contact baseline table.
    Baselines,
    /// Scripted three-minute grasp session on the full cover.
    Grasp,
}

#[derive(Args)]
struct CompareArgs {
    /// Scenario whose profile both controllers track.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = e.kind();
            let record = serde_json::json!({
                "error": kind.as_str(),
                "exit": exit_code(kind),
                "message": e.to_string(),
            });
            eprintln!("{record}");
            ExitCode::from(exit_code(kind))
        }
    }
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Config => 2,
        ErrorKind::Invariant => 3,
        ErrorKind::Numerical => 4,
    }
}

fn dispatch(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Calibrate(args) => calibrate_cmd(args),
        Command::Capsense(args) => capsense_cmd(args),
        Command::Compare(args) => compare(args),
    }
}

fn out_root(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn io_error(context: &str, path: &Path, e: std::io::Error) -> Error {
    Error::Config {
        line: None,
        key: None,
        message: format!("{context} {}: {e}", path.display()),
    }
}

fn write_file(path: &Path, content: &str) -> Result<(), Error> {
    fs::write(path, content).map_err(|e| io_error("writing", path, e))
}

fn load_config(path: &Path, overrides: &[String]) -> Result<ScenarioConfig, Error> {
    let mut config = ScenarioConfig::from_path(path)?;
    for entry in overrides {
        let (key, value) = entry.split_once('=').ok_or_else(|| Error::Config {
            line: None,
            key: None,
            message: format!("override {entry:?} is not section.key=value"),
        })?;
        config.apply_override(key.trim(), value.trim())?;
    }
    config.validate()?;
    Ok(config)
}

fn scenario_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scenario".into())
}

fn simulate(args: SimulateArgs) -> Result<(), Error> {
    let root = out_root(args.out);
    let jobs = args.jobs.max(1).min(args.config.len().max(1));
    let mut results: Vec<Option<Result<String, Error>>> = Vec::new();
    results.resize_with(args.config.len(), || None);
    let results = Mutex::new(results);
    let next = AtomicUsize::new(0);

    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let index = next.fetch_add(1, Ordering::Relaxed);
                if index >= args.config.len() {
                    break;
                }
                let outcome = simulate_one(&args.config[index], &args.set, &root);
                results.lock().unwrap()[index] = Some(outcome);
            });
        }
    });

    let mut first_error = None;
    for slot in results.into_inner().unwrap() {
        match slot.expect("every scenario ran") {
            Ok(line) => println!("{line}"),
            Err(e) => {
                eprintln!("{e}");
                if first_error.is_none() {
                    first_error = Some(e);
                }
            }
        }
    }
    match first_error {
        None => Ok(()),
        Some(e) => Err(e),
    }
}

fn simulate_one(config_path: &Path, overrides: &[String], root: &Path) -> Result<String, Error> {
    let config = load_config(config_path, overrides)?;
    let stem = scenario_stem(config_path);
    let dir = root.join(&stem);
    fs::create_dir_all(&dir).map_err(|e| io_error("creating", &dir, e))?;

    let outcome = run_scenario(&config)?;

    let mut telemetry = Vec::new();
    outcome
        .telemetry
        .write_csv(&mut telemetry)
        .expect("in-memory write");
    write_file(
        &dir.join("telemetry.csv"),
        std::str::from_utf8(&telemetry).expect("ascii telemetry"),
    )?;
    write_file(&dir.join("summary.txt"), &outcome.summary.text())?;
    if !outcome.solver_log.is_empty() {
        write_file(&dir.join("solver_log.csv"), &solver_log_csv(&outcome.solver_log))?;
    }
    let mut manifest = format!("scenario = {stem}\nconfig = {}\n", config_path.display());
    for entry in overrides {
        manifest.push_str(&format!("set = {entry}\n"));
    }
    write_file(&dir.join("manifest.txt"), &manifest)?;

    let s = &outcome.summary;
    if s.violations > 0 {
        return Err(Error::Actuation(format!(
            "{stem}: {} command bound violations, see {}",
            s.violations,
            dir.display()
        )));
    }
    let settle = match s.settle_time_s {
        Some(t) => format!("{} s", sig6(t)),
        None => "never".into(),
    };
    Ok(format!(
        "{stem}: rms {} C, settle {settle}, surface {}..{} C",
        sig6(s.rms_error_c),
        sig6(s.surface_min_c),
        sig6(s.surface_max_c)
    ))
}

fn trace_csv(trace: &Trace) -> String {
    let mut s = String::from("t_s,y_c\n");
    for (&t, &y) in trace.t_s.iter().zip(&trace.y_c) {
        s.push_str(&format!("{},{}\n", sig6(t), sig6(y)));
    }
    s
}

fn calibrate_cmd(args: CalibrateArgs) -> Result<(), Error> {
    let config = match &args.config {
        Some(path) => load_config(path, &[])?,
        None => ScenarioConfig::default(),
    };
    let fit = calibration::calibrate(&config, &CalibrationTargets::default())?;

    let dir = out_root(args.out).join("calibration");
    fs::create_dir_all(&dir).map_err(|e| io_error("creating", &dir, e))?;
    let p = &fit.parameters;
    let parameters = format!(
        "[geometry]\nactive_area = {}\nh_water_wall = {}\nh_surface_ambient = {}\n\n\
         [loop]\ntank_volume = {}\n",
        p.active_area, p.h_water_wall, p.h_surface_ambient, p.tank_volume
    );
    write_file(&dir.join("parameters.ini"), &parameters)?;
    let mut report = fit.text();
    report.push_str(&format!(
        "residual_tau_water = {}\nresidual_tau_cover = {}\n\
         residual_range_min = {}\nresidual_range_max = {}\n",
        sig6(fit.residuals[0]),
        sig6(fit.residuals[1]),
        sig6(fit.residuals[2]),
        sig6(fit.residuals[3])
    ));
    write_file(&dir.join("report.txt"), &report)?;
    write_file(&dir.join("tank_step.csv"), &trace_csv(&fit.traces.tank_step))?;
    write_file(&dir.join("cover_step.csv"), &trace_csv(&fit.traces.cover_step))?;
    write_file(&dir.join("range_cold.csv"), &trace_csv(&fit.traces.range_cold))?;
    write_file(&dir.join("range_hot.csv"), &trace_csv(&fit.traces.range_hot))?;

    print!("{}", fit.text());
    Ok(())
}

/// Recalibrates on the leading contact-free window, then normalizes and
/// flags the whole stream.
fn process_recorded(
    dir: &Path,
    t_s: &[f64],
    raw: &[f64],
) -> Result<(), Error> {
    let t0 = *t_s.first().ok_or_else(|| Error::InvalidParameter {
        name: "stream",
        message: "no samples".into(),
    })?;
    let head = t_s
        .iter()
        .take_while(|&&t| t <= t0 + capsense::MIN_WINDOW_S)
        .count();
    let cal = capsense::recalibrate(&t_s[..head], &raw[..head])?;
    let (normalized, contact) = capsense::process_stream(raw, &cal);

    let mut out = Vec::new();
    capsense::write_stream_csv(&mut out, t_s, &normalized, &contact).expect("in-memory write");
    write_file(
        &dir.join("processed.csv"),
        std::str::from_utf8(&out).expect("ascii stream"),
    )?;
    write_file(
        &dir.join("calibration.txt"),
        &format!("gain = {}\noffset = {}\n", cal.gain, cal.offset),
    )?;
    println!(
        "gain {} over {} samples, {} contact samples",
        sig6(cal.gain),
        t_s.len(),
        contact.iter().filter(|&&c| c).count()
    );
    Ok(())
}

fn capsense_cmd(args: CapsenseArgs) -> Result<(), Error> {
    let dir = out_root(args.out).join("capsense");
    fs::create_dir_all(&dir).map_err(|e| io_error("creating", &dir, e))?;

    if let Some(input) = &args.input {
        let bytes = fs::read(input).map_err(|e| io_error("reading", input, e))?;
        let (t_s, raw) = capsense::read_stream_csv(bytes.as_slice())?;
        return process_recorded(&dir, &t_s, &raw);
    }

    match args.script.unwrap_or(Script::Baselines) {
        Script::Baselines => {
            let mut table = String::from("stack,mean,std\n");
            for stack in capsense::LayerStack::ALL {
                let b = capsense::baseline(stack);
                table.push_str(&format!("{},{},{}\n", stack.label(), b.mean, b.std));
            }
            write_file(&dir.join("baselines.csv"), &table)?;
            print!("{table}");
        }
        Script::Grasp => {
            let (t_s, raw) = capsense::grasp_script(args.seed);
            let mut stream = String::from("t_s,raw\n");
            for (&t, &r) in t_s.iter().zip(&raw) {
                stream.push_str(&format!("{},{}\n", sig6(t), sig6(r)));
            }
            write_file(&dir.join("stream.csv"), &stream)?;
            process_recorded(&dir, &t_s, &raw)?;
        }
    }
    Ok(())
}

fn compare(args: CompareArgs) -> Result<(), Error> {
    let base = load_config(&args.config, &args.set)?;
    let stem = scenario_stem(&args.config);
    let dir = out_root(args.out).join(format!("{stem}_compare"));
    fs::create_dir_all(&dir).map_err(|e| io_error("creating", &dir, e))?;

    let mut runs = Vec::new();
    for kind in [ControllerKind::Mpc, ControllerKind::Pi] {
        let mut config = base.clone();
        config.controller.kind = kind;
        config.validate()?;
        runs.push(run_scenario(&config)?);
    }
    let [mpc, pi] = <[_; 2]>::try_from(runs).expect("two runs");

    let mut comparison = String::from("t_s,mpc_error_c,pi_error_c\n");
    for (a, b) in mpc.telemetry.samples.iter().zip(&pi.telemetry.samples) {
        comparison.push_str(&format!(
            "{},{},{}\n",
            sig6(a.t_s),
            sig6(a.surface_c - a.setpoint_c),
            sig6(b.surface_c - b.setpoint_c)
        ));
    }
    write_file(&dir.join("comparison.csv"), &comparison)?;
    let digest = format!(
        "mpc_rms_c = {}\npi_rms_c = {}\n",
        sig6(mpc.summary.rms_error_c),
        sig6(pi.summary.rms_error_c)
    );
    write_file(&dir.join("compare.txt"), &digest)?;
    print!("{digest}");
    Ok(())
}
