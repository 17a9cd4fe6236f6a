mod commands;
mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bsweyl_core::experiment::{self, Outcome, EXPERIMENTS};
use bsweyl_core::{density, Error};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use commands::{AuditArgs, BsArgs, CountArgs, DeformDensityArgs, DensityArgs, SpectrumArgs, VariationArgs, COMMANDS};
use config::Invalid;

const OUT_ENV: &str = "BSWEYL_OUT";
const MANIFEST: &str = "manifest.json";

#[derive(Parser)]
#[command(name = "bsweyl", version, about = "Action and Weyl eigenvalue densities of non-self-adjoint operators")]
struct Cli {
    /// Output directory; defaults to $BSWEYL_OUT, then ./bsweyl-out. Each run writes to <out>/<command>.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads. Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a named experiment, or re-run a manifest.
    #[command(visible_alias = "experiment")]
    Run(RunArgs),
    /// Ellipticity, independence and integrability audit of a symbol.
    Audit(AuditArgs),
    /// Weyl density of p or p_t on a window.
    Density(DensityArgs),
    /// Weyl densities of p_t and p and their difference.
    DeformDensity(DeformDensityArgs),
    /// First or second variational identity for p_t.
    Variation(VariationArgs),
    /// Spectrum of the quantized (and optionally perturbed) symbol.
    Spectrum(SpectrumArgs),
    /// Bohr-Sommerfeld lattice of an action-only normal form.
    Bs(BsArgs),
    /// Eigenvalue count in a rectangle against the action and Weyl predictions.
    Count(CountArgs),
    /// Print the fully resolved default config of an experiment or command.
    Config {
        name: String,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Experiment name; optional when --config is a manifest.
    name: Option<String>,
    /// JSON config, or a manifest.json from an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    symbol: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    t: Option<f64>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    samples: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
}

enum Failure {
    Config(Vec<String>),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::StepUnderflow { .. }
            | Error::TooManySteps { .. }
            | Error::SingularMap { .. }
            | Error::SingularJacobian { .. }
            | Error::Eigen(_)
            | Error::NonFinite
            | Error::Io(_) => Failure::Runtime(e.to_string()),
            _ => Failure::Config(vec![e.to_string()]),
        }
    }
}

impl From<Invalid> for Failure {
    fn from(e: Invalid) -> Self {
        Failure::Config(e.0)
    }
}

fn full<T: DeserializeOwned + Serialize + Default>(v: Value) -> Result<Value, String> {
    let t: T = if v.is_null() { T::default() } else { serde_json::from_value(v).map_err(|e| e.to_string())? };
    serde_json::to_value(t).map_err(|e| e.to_string())
}

/// Fills in defaults and round-trips through the typed config.
fn resolve(command: &str, v: Value) -> Result<Value, String> {
    match command {
        c if EXPERIMENTS.contains(&c) => experiment::resolved_config(c, v).map_err(|e| e.to_string()),
        "density" => full::<DensityArgs>(v),
        "deform-density" => full::<DeformDensityArgs>(v),
        "variation" => full::<VariationArgs>(v),
        "spectrum" => full::<SpectrumArgs>(v),
        "bs" => full::<BsArgs>(v),
        "count" => full::<CountArgs>(v),
        c => Err(format!(
            "unknown command `{c}`; expected one of {}, {}",
            EXPERIMENTS.join(", "),
            COMMANDS.iter().filter(|c| !EXPERIMENTS.contains(c)).copied().collect::<Vec<_>>().join(", ")
        )),
    }
}

fn typed<T: DeserializeOwned>(v: Value) -> Result<T, Failure> {
    serde_json::from_value(v).map_err(|e| Failure::Config(vec![e.to_string()]))
}

fn execute(command: &str, resolved: Value) -> Result<Outcome, Failure> {
    Ok(match command {
        c if EXPERIMENTS.contains(&c) => experiment::run_named(c, resolved)?,
        "density" => commands::density(&typed(resolved)?)?,
        "deform-density" => commands::deform_density(&typed(resolved)?)?,
        "variation" => commands::variation(&typed(resolved)?)?,
        "spectrum" => commands::spectrum(&typed(resolved)?)?,
        "bs" => commands::bs(&typed(resolved)?)?,
        "count" => commands::count(&typed(resolved)?)?,
        c => return Err(Failure::Config(vec![format!("unknown command `{c}`")])),
    })
}

/// Validates a user config for `command` against its defaults.
fn load(command: &str, user: &Value, text: Option<&str>) -> Result<Value, Failure> {
    let default = resolve(command, Value::Null).map_err(|e| Failure::Config(vec![e]))?;
    let user = if user.is_null() { json!({}) } else { user.clone() };
    Ok(config::validate(&user, &default, text, |v| resolve(command, v))?)
}

fn is_manifest(v: &Value) -> bool {
    v.get("bsweyl_version").is_some() && v.get("command").is_some() && v.get("config").is_some()
}

fn run_args(a: &RunArgs) -> Result<(String, Value), Failure> {
    let (mut name, mut cfg, mut text) = (a.name.clone(), json!({}), None::<String>);
    if let Some(path) = &a.config {
        let t = fs::read_to_string(path).map_err(|e| Failure::Config(vec![format!("{}: {e}", path.display())]))?;
        let v = config::parse_text(&t)?;
        if is_manifest(&v) {
            let from = v["command"].as_str().unwrap_or_default().to_string();
            if name.as_ref().is_some_and(|n| *n != from) {
                return Err(Failure::Config(vec![format!(
                    "manifest is for `{from}`, not `{}`",
                    name.unwrap_or_default()
                )]));
            }
            name = Some(from);
            cfg = v["config"].clone();
        } else {
            cfg = v;
            text = Some(t);
        }
    }
    let name = name.ok_or_else(|| {
        Failure::Config(vec![format!("missing experiment name; expected one of {}", EXPERIMENTS.join(", "))])
    })?;
    if !cfg.is_object() {
        return Err(Failure::Config(vec!["config must be a JSON object".into()]));
    }
    let overrides = [
        ("symbol", a.symbol.as_ref().map(|s| json!(s))),
        ("t", a.t.map(|v| json!(v))),
        ("h", a.h.map(|v| json!(v))),
        ("delta", a.delta.map(|v| json!(v))),
        ("seeds", a.seeds.map(|v| json!(v))),
        ("samples", a.samples.map(|v| json!(v))),
        ("seed", a.seed.map(|v| json!(v))),
    ];
    for (k, v) in overrides {
        if let Some(v) = v {
            cfg[k] = v;
        }
    }
    let resolved = load(&name, &cfg, text.as_deref())?;
    Ok((name, resolved))
}

fn write_json(path: &Path, v: &impl Serialize) -> std::io::Result<()> {
    let s = serde_json::to_string_pretty(v).map_err(std::io::Error::other)?;
    fs::write(path, s + "\n")
}

fn manifest(command: &str, resolved: &Value, threads: Option<usize>, artifacts: &[String], passed: Option<bool>) -> Value {
    json!({
        "bsweyl_version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "config": resolved,
        "seeds": config::seeds(resolved),
        "threads": threads.unwrap_or_else(rayon::current_num_threads),
        "shards": density::SHARDS,
        "artifacts": artifacts,
        "passed": passed,
    })
}

fn emit(dir: &Path, command: &str, resolved: &Value, threads: Option<usize>, result: &Result<Outcome, Failure>) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    let stale = dir.join("failure_report.json");
    if stale.exists() {
        fs::remove_file(&stale)?;
    }
    match result {
        Ok(o) => {
            let mut files = Vec::new();
            for a in &o.artifacts {
                fs::write(dir.join(&a.file), &a.contents)?;
                files.push(a.file.clone());
            }
            write_json(&dir.join("result.json"), o)?;
            files.push("result.json".into());
            if !o.passed {
                let failed: Vec<_> = o.failures();
                write_json(&stale, &json!({ "command": command, "kind": "checks", "failed_checks": failed }))?;
                files.push("failure_report.json".into());
            }
            write_json(&dir.join(MANIFEST), &manifest(command, resolved, threads, &files, Some(o.passed)))
        }
        Err(Failure::Runtime(msg)) => {
            write_json(&stale, &json!({ "command": command, "kind": "error", "error": msg }))?;
            write_json(&dir.join(MANIFEST), &manifest(command, resolved, threads, &["failure_report.json".into()], Some(false)))
        }
        Err(Failure::Config(_)) => Ok(()),
    }
}

fn out_base(cli: Option<PathBuf>) -> PathBuf {
    cli.or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("bsweyl-out"))
}

fn config_error(msgs: &[String]) -> ExitCode {
    eprintln!("error: invalid configuration");
    for m in msgs {
        eprintln!("  {m}");
    }
    ExitCode::from(2)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let plan = match &cli.command {
        Command::Run(a) => run_args(a),
        Command::Audit(a) => plan("audit", commands::audit_config(a)),
        Command::Density(a) => adhoc("density", a),
        Command::DeformDensity(a) => adhoc("deform-density", a),
        Command::Variation(a) => adhoc("variation", a),
        Command::Spectrum(a) => adhoc("spectrum", a),
        Command::Bs(a) => adhoc("bs", a),
        Command::Count(a) => adhoc("count", a),
        Command::Config { name } => {
            return match resolve(name, Value::Null) {
                Ok(v) => {
                    println!("{}", serde_json::to_string_pretty(&v).expect("config serializes"));
                    ExitCode::SUCCESS
                }
                Err(e) => config_error(&[e]),
            };
        }
    };
    let (command, resolved) = match plan {
        Ok(p) => p,
        Err(Failure::Config(m)) => return config_error(&m),
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            return ExitCode::from(1);
        }
    };
    let result = execute(&command, resolved.clone());
    if let Err(Failure::Config(m)) = &result {
        return config_error(m);
    }
    let dir = out_base(cli.out).join(&command);
    if let Err(e) = emit(&dir, &command, &resolved, cli.threads, &result) {
        eprintln!("error: writing {}: {e}", dir.display());
        return ExitCode::from(1);
    }
    match result {
        Ok(o) => {
            for c in &o.checks {
                eprintln!("{} {}: {:e} (threshold {:e}) {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.value, c.threshold, c.detail);
            }
            println!("{}", serde_json::to_string_pretty(&o).expect("outcome serializes"));
            eprintln!("wrote {}", dir.display());
            if o.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            eprintln!("wrote {}", dir.join("failure_report.json").display());
            ExitCode::from(1)
        }
        Err(Failure::Config(_)) => unreachable!("handled above"),
    }
}

fn plan(command: &str, v: Value) -> Result<(String, Value), Failure> {
    Ok((command.to_string(), load(command, &v, None)?))
}

fn adhoc<T: Serialize>(command: &str, args: &T) -> Result<(String, Value), Failure> {
    plan(command, serde_json::to_value(args).map_err(|e| Failure::Runtime(e.to_string()))?)
}
