//! `cerisier`: assemble, run, trace, fuzz and check capability machine systems.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use cerisier::assembler::{self, Env};
use cerisier::cases::{self, Case};
use cerisier::harness::{
    campaign, run_system, CampaignConfig, Mode, MonitorLevel, Outcome, RunReport, DEFAULT_FUEL,
};
use cerisier::loader::{self, LoadError, SystemImage, SystemSpec};
use cerisier::machine::{Config, HashMode, MachineState, Mutation, Status};

const EXIT_OK: u8 = 0;
const EXIT_FAILED: u8 = 1;
const EXIT_FUEL: u8 = 2;
const EXIT_ASSERT: u8 = 3;
const EXIT_USAGE: u8 = 4;

/// Environment variable naming a config file that overrides spec limits.
const CONFIG_VAR: &str = "CERISIER_CONFIG";

#[derive(Parser)]
#[command(name = "cerisier", version, about = "Capability machine toolchain with enclave attestation")]
struct Cli {
    /// Omit the timing footer, for reproducible output.
    #[arg(long, global = true)]
    ci: bool,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Tsv,
}

#[derive(Subcommand)]
enum Command {
    /// Assemble a source file at a base address.
    Asm {
        file: PathBuf,
        #[arg(long)]
        base: u64,
        /// Write the image here instead of printing a listing.
        #[arg(short)]
        o: Option<PathBuf>,
        /// Define a constant, as `name=value`.
        #[arg(long = "define", short = 'D')]
        defines: Vec<String>,
    },
    /// Build a system and run it.
    Run {
        spec: String,
        #[arg(long, default_value_t = DEFAULT_FUEL)]
        fuel: u64,
        /// Write the final state to this file.
        #[arg(long)]
        snapshot: Option<PathBuf>,
        #[arg(long, value_enum, num_args = 0..=1, default_value_t = Level::Off, default_missing_value = "instrumented")]
        monitors: Level,
    },
    /// Run a system, printing one line per step.
    Trace {
        spec: String,
        #[arg(long, default_value_t = DEFAULT_FUEL)]
        fuel: u64,
    },
    /// Run generated adversaries against a system.
    Fuzz {
        spec: String,
        #[arg(long, default_value_t = 100)]
        runs: u64,
        #[arg(long, default_value_t = DEFAULT_FUEL)]
        fuel: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Monitor level; bare `--monitors` means instrumented.
        #[arg(long, value_enum, num_args = 0..=1, default_value_t = Level::Cheap, default_missing_value = "instrumented")]
        monitors: Level,
        /// Use one generator for all runs: a (random), b (mutation), c (template).
        #[arg(long)]
        mode: Option<String>,
        /// Run against a deliberately broken machine.
        #[arg(long)]
        mutation: Option<String>,
    },
    /// Run a built-in case study and compare it against its golden trace.
    Case {
        #[arg(value_parser = ["soc", "mutual", "sensor"])]
        name: String,
    },
    /// Check that a spec builds into a well-formed system.
    Check { spec: String },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Level {
    Off,
    Cheap,
    Instrumented,
}

impl Level {
    fn monitor(self) -> MonitorLevel {
        match self {
            Level::Off => MonitorLevel::Off,
            Level::Cheap => MonitorLevel::Cheap,
            Level::Instrumented => MonitorLevel::Instrumented,
        }
    }
}

/// An error that ends the program with a specific status.
struct Fail(u8, String);

impl From<LoadError> for Fail {
    fn from(e: LoadError) -> Self {
        Fail(EXIT_USAGE, e.to_string())
    }
}

fn usage(msg: impl Into<String>) -> Fail {
    Fail(EXIT_USAGE, msg.into())
}

/// Limits from the file named by `CERISIER_CONFIG`, as `key=value` lines.
fn config_overrides() -> Result<Vec<(String, String)>, Fail> {
    let Ok(path) = std::env::var(CONFIG_VAR) else { return Ok(Vec::new()) };
    let text = fs::read_to_string(&path).map_err(|e| usage(format!("{CONFIG_VAR}={path}: {e}")))?;
    let mut out = Vec::new();
    for line in text.lines() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| usage(format!("{path}: expected key=value, found `{line}`")))?;
        out.push((k.trim().to_ascii_lowercase(), v.trim().to_string()));
    }
    Ok(out)
}

fn apply_overrides(config: &mut Config) -> Result<(), Fail> {
    for (k, v) in config_overrides()? {
        let num = || v.parse::<u64>().map_err(|_| usage(format!("{CONFIG_VAR}: bad value for {k}")));
        match k.as_str() {
            "addrmax" => config.addr_max = num()?,
            "otypemax" => config.otype_max = num()?,
            "hash" => {
                config.hash_mode =
                    HashMode::from_name(&v).ok_or_else(|| usage(format!("{CONFIG_VAR}: unknown hash mode `{v}`")))?
            }
            _ => return Err(usage(format!("{CONFIG_VAR}: unknown key `{k}`"))),
        }
    }
    Ok(())
}

/// Reads a spec from disk, falling back to the built-in cases.
fn read_spec(name: &str) -> Result<(String, Option<PathBuf>), Fail> {
    let path = Path::new(name);
    if path.exists() {
        let text = fs::read_to_string(path).map_err(|e| usage(format!("{name}: {e}")))?;
        return Ok((text, path.parent().map(Path::to_path_buf)));
    }
    let builtin = Case::from_name(name).map(|c| c.spec_name()).unwrap_or_else(|| name.to_string());
    cases::file(&builtin)
        .map(|t| (t.to_string(), None))
        .ok_or_else(|| usage(format!("cannot read spec `{name}`")))
}

fn load(name: &str) -> Result<(SystemImage, MachineState), Fail> {
    let (text, dir) = read_spec(name)?;
    let mut spec = SystemSpec::parse(&text)?;
    apply_overrides(&mut spec.config)?;
    let built = match dir {
        Some(dir) => {
            let resolve = move |f: &str| fs::read_to_string(dir.join(f)).ok();
            loader::build(&spec, &resolve)?
        }
        None => loader::build(&spec, &cases::resolver)?,
    };
    Ok(built)
}

fn exit_of(report: &RunReport) -> u8 {
    if report.is_failure() {
        return EXIT_ASSERT;
    }
    match report.outcome {
        Outcome::Halted => EXIT_OK,
        Outcome::Failed => EXIT_FAILED,
        Outcome::FuelExhausted => EXIT_FUEL,
    }
}

fn print_report(report: &RunReport, format: Format) {
    match format {
        Format::Text => println!("{}", report.line()),
        Format::Tsv => println!("seed\toutcome\tsteps\tflag\tviolations\n{}", report.tsv()),
    }
    for b in &report.breaches {
        eprintln!("violation: {b}");
    }
}

fn cmd_asm(file: &Path, base: u64, out: Option<&Path>, defines: &[String]) -> Result<u8, Fail> {
    let src = fs::read_to_string(file).map_err(|e| usage(format!("{}: {e}", file.display())))?;
    let mut env = Env::new();
    for d in defines {
        let (k, v) = d.split_once('=').ok_or_else(|| usage(format!("bad definition `{d}`")))?;
        let v = v.parse().map_err(|_| usage(format!("bad value in `{d}`")))?;
        env.insert(k.to_string(), v);
    }
    let mut config = Config::default();
    apply_overrides(&mut config)?;
    let image = assembler::assemble_with(&src, base, &env, config.addr_max)
        .map_err(|e| usage(format!("{}: {e}", file.display())))?;
    match out {
        Some(path) => {
            let text = format!("{}{}", image.mem_lines(), image.symbol_map());
            fs::write(path, text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        }
        None => print!("{}", image.listing()),
    }
    Ok(EXIT_OK)
}

fn cmd_run(spec: &str, fuel: u64, snapshot: Option<&Path>, level: Level, format: Format) -> Result<u8, Fail> {
    let (image, state) = load(spec)?;
    let (report, state) = run_system(&image, state, fuel, level.monitor(), None);
    print_report(&report, format);
    if let Some(path) = snapshot {
        fs::write(path, state.to_snapshot()).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    }
    Ok(exit_of(&report))
}

fn cmd_trace(spec: &str, fuel: u64, format: Format) -> Result<u8, Fail> {
    let (image, mut state) = load(spec)?;
    let mut n = 0;
    while n < fuel && state.status == Status::Running {
        println!("{}", state.step_traced(n));
        n += 1;
    }
    let (report, _) = run_system(&image, state, 0, MonitorLevel::Off, None);
    let report = RunReport { steps: n, ..report };
    print_report(&report, format);
    Ok(exit_of(&report))
}

#[allow(clippy::too_many_arguments)]
fn cmd_fuzz(
    spec: &str,
    runs: u64,
    fuel: u64,
    seed: u64,
    level: Level,
    mode: Option<&str>,
    mutation: Option<&str>,
    format: Format,
) -> Result<u8, Fail> {
    let (image, _) = load(spec)?;
    let mode = mode
        .map(|m| Mode::from_name(m).ok_or_else(|| usage(format!("unknown mode `{m}` (use a, b or c)"))))
        .transpose()?;
    let mutation = mutation
        .map(|m| Mutation::from_name(m).ok_or_else(|| usage(format!("unknown mutation `{m}`"))))
        .transpose()?;
    let cfg = CampaignConfig { runs, fuel, seed, monitors: level.monitor(), mode, mutation };
    let result = campaign(&image, &cfg).ok_or_else(|| usage("the spec has no adversary region"))?;
    print!("{}", result.render(format == Format::Tsv));
    Ok(if result.failures() == 0 { EXIT_OK } else { EXIT_ASSERT })
}

fn cmd_case(name: &str) -> Result<u8, Fail> {
    let case = Case::from_name(name).ok_or_else(|| usage(format!("unknown case `{name}`")))?;
    let run = cases::run_case(case, MonitorLevel::Instrumented);
    println!("{}", run.summary());
    let mut code = EXIT_OK;
    for p in run.problems(case) {
        eprintln!("expectation failed: {p}");
        code = EXIT_ASSERT;
    }
    if let Some(diff) = cases::golden_mismatch(case) {
        eprintln!("golden trace mismatch at {diff}");
        code = EXIT_ASSERT;
    }
    Ok(code)
}

fn cmd_check(spec: &str) -> Result<u8, Fail> {
    let (image, state) = load(spec)?;
    let mut by_role: BTreeMap<&str, usize> = BTreeMap::new();
    for r in &image.regions {
        *by_role.entry(r.role.as_str()).or_default() += 1;
    }
    let roles: Vec<String> = by_role.iter().map(|(r, n)| format!("{r}={n}")).collect();
    println!(
        "ok regions={} {} addrmax={} otypemax={} ec={}",
        image.regions.len(),
        roles.join(" "),
        state.config.addr_max,
        state.config.otype_max,
        state.ec
    );
    Ok(EXIT_OK)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let start = Instant::now();
    let format = cli.format;
    let result = match &cli.command {
        Command::Asm { file, base, o, defines } => cmd_asm(file, *base, o.as_deref(), defines),
        Command::Run { spec, fuel, snapshot, monitors } => {
            cmd_run(spec, *fuel, snapshot.as_deref(), *monitors, format)
        }
        Command::Trace { spec, fuel } => cmd_trace(spec, *fuel, format),
        Command::Fuzz { spec, runs, fuel, seed, monitors, mode, mutation } => cmd_fuzz(
            spec,
            *runs,
            *fuel,
            *seed,
            *monitors,
            mode.as_deref(),
            mutation.as_deref(),
            format,
        ),
        Command::Case { name } => cmd_case(name),
        Command::Check { spec } => cmd_check(spec),
    };
    let code = match result {
        Ok(code) => code,
        Err(Fail(code, msg)) => {
            eprintln!("error: {msg}");
            code
        }
    };
    if !cli.ci {
        println!("time={:.3}s", start.elapsed().as_secs_f64());
    }
    ExitCode::from(code)
}
