use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use sha2::{Digest, Sha256};

use tps_core::equilibrium::{tension_sweep_with, SweepOptions};
use tps_core::fem::{self, MeshOptions, NewtonOptions};
use tps_core::model::{
    build_configuration, joint_index, parse_assignments, parse_config_file, ParameterMap, Tendon, TpsConfiguration,
};
use tps_core::study::{
    enumerate_grid, figure_preset, figure_sweep, run_study, study_csv, sweep_csv, table2_rows, Location, RowFilter,
    RowStatus, StudyCase, StudySettings,
};
use tps_core::TpsError;

/// Exit code for usage and parse errors.
const EXIT_USAGE: u8 = 1;
/// Exit code for numerical failures; partial output is still written.
const EXIT_NUMERICAL: u8 = 2;

#[derive(Parser, Debug)]
#[command(name = "tps", version, about = "Kinetostatics of finger flexor tendon-pulley systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Tension sweep of one configuration.
    Simulate(SimulateArgs),
    /// Regenerate the reference result rows.
    Table2(Table2Args),
    /// Regenerate the curves of a figure preset.
    Figure(FigureArgs),
    /// Compare the frame model with the rigid-link model.
    CompareFem(CompareFemArgs),
    /// Run a location grid study.
    Study(StudyArgs),
}

#[derive(Args, Debug)]
struct ConfigArgs {
    /// Configuration name, e.g. `C~D-C~D=C`.
    #[arg(long)]
    config: Option<String>,
    /// `key = value` file; may carry the configuration name as `config = ...`.
    #[arg(long)]
    config_file: Option<PathBuf>,
    /// Parameter override `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args, Debug)]
struct OutArgs {
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Share of the total tension carried by the FDS tendon.
    #[arg(long)]
    gamma: Option<f64>,
    /// Final total tension, N.
    #[arg(long)]
    tmax: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    /// Joints left out of the critical bowstringing value, e.g. `MCP`.
    #[arg(long, value_delimiter = ',')]
    exclude_joints: Vec<String>,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FilterArg {
    All,
    Fdp,
    Fds,
    Combined,
}

#[derive(Args, Debug)]
struct Table2Args {
    #[arg(long, value_enum, default_value = "all")]
    filter: FilterArg,
    #[arg(long)]
    steps: Option<usize>,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Debug)]
struct FigureArgs {
    /// Preset id.
    preset: String,
    #[arg(long)]
    steps: Option<usize>,
    /// Per-tendon tension at the end of each curve, N.
    #[arg(long)]
    tmax: Option<f64>,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Debug)]
struct CompareFemArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Use the physical validation prototype instead of the default finger.
    #[arg(long)]
    validation: bool,
    /// Flexure strip thickness of the prototype, mm.
    #[arg(long, default_value_t = fem::VALIDATION_FLEXURE_THICKNESS)]
    thickness: f64,
    /// Final tension of the frame-model schedule, N.
    #[arg(long, default_value_t = 4.0)]
    tmax: f64,
    #[arg(long, default_value_t = 40)]
    steps: usize,
    /// Elements per flexure.
    #[arg(long, default_value_t = 20)]
    elements: usize,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TendonArg {
    Fdp,
    Fds,
}

#[derive(Args, Debug)]
struct StudyArgs {
    #[arg(long, value_enum, default_value = "fdp")]
    tendon: TendonArg,
    /// A2 locations, any of `PCD`.
    #[arg(long, default_value = "CDP")]
    a2: String,
    /// A4 (FDP) or FDS-TAP (FDS) locations.
    #[arg(long, default_value = "CDP")]
    a4: String,
    /// FDP-TAP locations.
    #[arg(long, default_value = "CDP")]
    tap: String,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    steps: Option<usize>,
    /// Leave the MCP joint out of the critical bowstringing value.
    #[arg(long)]
    exclude_mcp: bool,
    #[command(flatten)]
    out: OutArgs,
}

/// Record written next to every output.
struct Manifest {
    command: String,
    parameters: Vec<(String, String)>,
    inputs: Vec<(String, String)>,
    outputs: Vec<(String, String)>,
}

impl Manifest {
    fn new(command: &str) -> Self {
        Self {
            command: command.into(),
            parameters: Vec::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    fn param(&mut self, key: &str, value: impl ToString) {
        self.parameters.push((key.into(), value.to_string()));
    }

    fn write(&self, dir: &Path) -> Result<()> {
        let stamp = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let mut s = String::new();
        writeln!(s, "command = {}", self.command)?;
        writeln!(s, "tool_version = {} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"))?;
        writeln!(s, "timestamp_unix = {stamp}")?;
        for (k, v) in &self.parameters {
            writeln!(s, "param.{k} = {v}")?;
        }
        for (k, v) in &self.inputs {
            writeln!(s, "input.{k} = sha256:{v}")?;
        }
        for (k, v) in &self.outputs {
            writeln!(s, "output.{k} = sha256:{v}")?;
        }
        fs::write(dir.join("manifest.txt"), s).context("writing manifest")
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes `text` to `dir/name` and records it in the manifest.
fn emit(dir: &Path, name: &str, text: &str, manifest: &mut Manifest) -> Result<()> {
    let path = dir.join(name);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    manifest.outputs.push((name.into(), sha256_hex(text.as_bytes())));
    Ok(())
}

fn prepare(out: &OutArgs) -> Result<PathBuf> {
    fs::create_dir_all(&out.out).with_context(|| format!("creating {}", out.out.display()))?;
    Ok(out.out.clone())
}

fn resolve_config(args: &ConfigArgs, extra: ParameterMap, manifest: &mut Manifest) -> Result<TpsConfiguration> {
    let mut name = args.config.clone();
    let mut map = ParameterMap::new();
    if let Some(path) = &args.config_file {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        manifest.inputs.push((path.display().to_string(), sha256_hex(text.as_bytes())));
        let (file_name, file_map) = parse_config_file(&text)?;
        map.extend(file_map);
        if name.is_none() {
            name = file_name;
        }
    }
    map.extend(parse_assignments(args.set.iter().map(String::as_str))?);
    map.extend(extra);
    let name = name.ok_or_else(|| anyhow!("missing --config (or `config = ...` in the config file)"))?;
    let config = build_configuration(&name, &map)?;
    manifest.param("config", &config.name);
    for (k, v) in &map {
        manifest.param(k, v);
    }
    Ok(config)
}

fn simulate(args: SimulateArgs) -> Result<u8> {
    let mut manifest = Manifest::new("simulate");
    let mut extra = ParameterMap::new();
    if let Some(g) = args.gamma {
        extra.insert("gamma".into(), g.to_string());
    }
    if let Some(t) = args.tmax {
        extra.insert("t_max".into(), t.to_string());
    }
    if let Some(n) = args.steps {
        extra.insert("steps".into(), n.to_string());
    }
    let config = resolve_config(&args.config, extra, &mut manifest)?;
    let mut exclude = [false; 3];
    for name in &args.exclude_joints {
        let j = joint_index(name).ok_or_else(|| anyhow!("unknown joint `{name}` in --exclude-joints"))?;
        exclude[j] = true;
    }
    manifest.param("exclude_joints", args.exclude_joints.join(","));
    let dir = prepare(&args.out)?;
    let options = SweepOptions {
        exclude_joints: exclude,
        ..SweepOptions::from_config(&config)
    };
    let trace = tension_sweep_with(&config, &options);
    emit(&dir, "sweep.csv", &sweep_csv(&trace), &mut manifest)?;
    manifest.param("terminal", format!("{:?}", trace.terminal));
    manifest.write(&dir)?;
    if let Some(last) = trace.steps.last() {
        println!(
            "{}: {:.1} deg at T_s = {:.3} N ({:?})",
            config.name,
            last.sum_theta().to_degrees(),
            last.t_s,
            trace.terminal
        );
    }
    if let Some(e) = &trace.error {
        eprintln!("error: {e}");
        return Ok(EXIT_NUMERICAL);
    }
    Ok(0)
}

fn table2(args: Table2Args) -> Result<u8> {
    let mut manifest = Manifest::new("table2");
    let filter = match args.filter {
        FilterArg::All => RowFilter::All,
        FilterArg::Fdp => RowFilter::Fdp,
        FilterArg::Fds => RowFilter::Fds,
        FilterArg::Combined => RowFilter::Combined,
    };
    let mut settings = StudySettings::default();
    if let Some(n) = args.steps {
        settings.steps = n;
    }
    manifest.param("filter", format!("{:?}", args.filter).to_lowercase());
    manifest.param("steps", settings.steps);
    let dir = prepare(&args.out)?;
    let rows = table2_rows(filter, &settings)?;
    emit(&dir, "table2.csv", &study_csv(&rows), &mut manifest)?;
    manifest.write(&dir)?;
    let failed: Vec<&str> = rows
        .iter()
        .filter(|r| r.status == RowStatus::Failed)
        .map(|r| r.name.as_str())
        .collect();
    println!("{} rows written", rows.len());
    if !failed.is_empty() {
        eprintln!("failed rows: {}", failed.join(", "));
        return Ok(EXIT_NUMERICAL);
    }
    Ok(0)
}

fn file_label(label: &str) -> String {
    label
        .chars()
        .map(|c| match c {
            'A'..='Z' | 'a'..='z' | '0'..='9' | '.' => c,
            '~' => 'f',
            '=' => 'x',
            _ => '_',
        })
        .collect()
}

fn figure(args: FigureArgs) -> Result<u8> {
    let mut manifest = Manifest::new("figure");
    let mut preset = figure_preset(&args.preset)?;
    if let Some(t) = args.tmax {
        if !(t > 0.0) {
            bail!("--tmax must be positive, got `{t}`");
        }
        preset.tendon_tension = t;
    }
    let steps = args.steps.unwrap_or(tps_core::model::DEFAULT_STEPS);
    manifest.param("preset", preset.id);
    manifest.param("tendon_tension", preset.tendon_tension);
    manifest.param("steps", steps);
    let dir = prepare(&args.out)?;
    let traces: Vec<_> = std::thread::scope(|s| {
        let handles: Vec<_> = preset
            .curves
            .iter()
            .map(|c| s.spawn(|| figure_sweep(&preset, c, steps)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("sweep thread")).collect()
    });
    let mut sidecar = String::new();
    writeln!(sidecar, "preset = {}", preset.id)?;
    writeln!(sidecar, "description = {}", preset.description)?;
    writeln!(sidecar, "x_axis = tendon tension per tendon (N)")?;
    writeln!(sidecar, "y_axis = {}", preset.y_axis)?;
    writeln!(sidecar, "curves = file,label,config,exclude_mcp,terminal")?;
    let mut failed = false;
    for (k, (curve, trace)) in preset.curves.iter().zip(&traces).enumerate() {
        let file = format!("{}/{:02}_{}.csv", preset.id, k + 1, file_label(&curve.label));
        emit(&dir, &file, &sweep_csv(trace), &mut manifest)?;
        writeln!(
            sidecar,
            "curve = {file},{},{},{},{:?}",
            curve.label, curve.case.config.name, curve.case.exclude_joints[0], trace.terminal
        )?;
        failed |= trace.error.is_some();
    }
    emit(&dir, &format!("{}/plot.txt", preset.id), &sidecar, &mut manifest)?;
    manifest.write(&dir)?;
    println!("{} curves written to {}", preset.curves.len(), dir.join(preset.id).display());
    Ok(if failed { EXIT_NUMERICAL } else { 0 })
}

fn compare_fem(args: CompareFemArgs) -> Result<u8> {
    let mut manifest = Manifest::new("compare-fem");
    let mut mesh_options = MeshOptions::default();
    let config = if args.validation {
        let name = args.config.config.clone().unwrap_or_else(|| "C-C-C".into());
        mesh_options = fem::validation_mesh_options();
        manifest.param("validation_thickness", args.thickness);
        manifest.param("config", &name);
        fem::validation_configuration(&name, args.thickness)?
    } else {
        resolve_config(&args.config, ParameterMap::new(), &mut manifest)?
    };
    if !(args.tmax > 0.0) || args.steps == 0 {
        bail!("--tmax and --steps must be positive");
    }
    mesh_options.flexure_elements = args.elements.max(1);
    manifest.param("tmax", args.tmax);
    manifest.param("steps", args.steps);
    manifest.param("elements", mesh_options.flexure_elements);
    let dir = prepare(&args.out)?;
    let schedule: Vec<f64> = (1..=args.steps).map(|k| args.tmax * k as f64 / args.steps as f64).collect();
    let cmp = fem::compare_with_prbm(&config, &schedule, &mesh_options, &NewtonOptions::default())?;
    emit(&dir, "compare_fem.csv", &cmp.csv(), &mut manifest)?;
    manifest.write(&dir)?;
    println!(
        "{}: max relative tension gap below 120 deg = {:.4}",
        config.name,
        cmp.max_gap_below(120.0)
    );
    Ok(0)
}

fn locations(text: &str, flag: &str) -> Result<Vec<Location>> {
    text.chars()
        .map(|c| Location::from_code(c).ok_or_else(|| anyhow!("invalid location `{c}` in --{flag}")))
        .collect()
}

fn study(args: StudyArgs) -> Result<u8> {
    let mut manifest = Manifest::new("study");
    let tendon = match args.tendon {
        TendonArg::Fdp => Tendon::Fdp,
        TendonArg::Fds => Tendon::Fds,
    };
    let axes = [
        locations(&args.a2, "a2")?,
        locations(&args.a4, "a4")?,
        locations(&args.tap, "tap")?,
    ];
    let overrides = parse_assignments(args.set.iter().map(String::as_str))?;
    let configs = enumerate_grid([&axes[0], &axes[1], &axes[2]], tendon, &overrides)?;
    let mut settings = StudySettings::default();
    if let Some(n) = args.steps {
        settings.steps = n;
    }
    manifest.param("tendon", tendon);
    manifest.param("a2", &args.a2);
    manifest.param("a4", &args.a4);
    manifest.param("tap", &args.tap);
    manifest.param("steps", settings.steps);
    manifest.param("exclude_mcp", args.exclude_mcp);
    for (k, v) in &overrides {
        manifest.param(k, v);
    }
    let dir = prepare(&args.out)?;
    let cases: Vec<StudyCase> = configs
        .into_iter()
        .map(|config| StudyCase {
            config,
            exclude_joints: [args.exclude_mcp, false, false],
        })
        .collect();
    let rows = run_study(&cases, &settings);
    emit(&dir, "study.csv", &study_csv(&rows), &mut manifest)?;
    manifest.write(&dir)?;
    println!("{} rows written", rows.len());
    Ok(if rows.iter().any(|r| r.status == RowStatus::Failed) {
        EXIT_NUMERICAL
    } else {
        0
    })
}

/// Numerical failures exit with 2, everything else with 1.
fn exit_code_for(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<TpsError>() {
        Some(
            TpsError::SolverNonConvergence { .. }
            | TpsError::ActivationNonConvergence { .. }
            | TpsError::LockingBracket { .. }
            | TpsError::Fem(_),
        ) => EXIT_NUMERICAL,
        _ => EXIT_USAGE,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Table2(a) => table2(a),
        Command::Figure(a) => figure(a),
        Command::CompareFem(a) => compare_fem(a),
        Command::Study(a) => study(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
