//! Command-line front end: flags and config files are merged into a
//! [`RunConfig`], dispatched to a subcommand, and reported as a JSON
//! document (or a CSV table).
//!
//! Exit codes: `0` success, `1` usage or configuration error, `2` a checked
//! inequality was violated.

#![allow(clippy::needless_range_loop)]

pub mod commands;
pub mod config;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

pub use commands::{CliError, Outcome, Table};
pub use config::{ConfigError, Format, RunConfig};

pub const SCHEMA: u32 = 1;

#[derive(Parser, Debug)]
#[command(name = "fiberflow", version, about = "Feynman-Kac path integrals for Schrödinger semigroups on vector bundles")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Apply e^{-tH} to a section at one or more points.
    Semigroup(Flags),
    /// Ground energy from the decay of ⟨f, e^{-tH} 1⟩.
    GroundEnergy(Flags),
    /// Apply (H + λ)^{-k} through the Laplace transform.
    Resolvent(Flags),
    /// Pathwise and averaged domination by the scalar floor semigroup.
    Domination(Flags),
    /// Heat-kernel norms and L² → L^q smoothing on the sphere.
    Smoothing(Flags),
    /// Semigroup identity and the perturbation formula.
    IdentityCheck(Flags),
    /// Small-time continuity of the holonomy on a compact grid.
    ContinuityScan(Flags),
    /// Kato integrals, decay verdict and Khas'minskii moment bound for |V|.
    KatoCheck(Flags),
    /// Survival probabilities in a geodesic ball.
    ExitTime(Flags),
    /// Deterministic self-checks.
    Validate {
        target: Target,
        #[command(flatten)]
        flags: Flags,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Target {
    /// Norm inequalities for ordered exponentials on random generators.
    AppendixC,
    /// Oracle self-consistency suite.
    Oracle,
}

#[derive(Args, Debug, Default, Clone)]
struct Flags {
    /// key=value configuration file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    manifold: Option<String>,
    #[arg(long = "bundle-rank", allow_hyphen_values = true)]
    bundle_rank: Option<String>,
    /// trivial, magnetic or levi-civita.
    #[arg(long)]
    connection: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    beta: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    potential: Option<String>,
    /// Section the semigroup acts on.
    #[arg(long, allow_hyphen_values = true)]
    f: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    t: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    h: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    n: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    seed: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    workers: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    x: Option<String>,
    #[arg(long = "x-grid", allow_hyphen_values = true)]
    x_grid: Option<String>,
    #[arg(long = "t-grid", allow_hyphen_values = true)]
    t_grid: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    q: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    lambda: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    k: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    s: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    r: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    tmax: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    trials: Option<String>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    format: Option<String>,
}

impl Flags {
    fn overrides(&self) -> Vec<(&'static str, &Option<String>)> {
        vec![
            ("manifold", &self.manifold),
            ("bundle-rank", &self.bundle_rank),
            ("connection", &self.connection),
            ("beta", &self.beta),
            ("potential", &self.potential),
            ("f", &self.f),
            ("t", &self.t),
            ("h", &self.h),
            ("n", &self.n),
            ("seed", &self.seed),
            ("workers", &self.workers),
            ("x", &self.x),
            ("x-grid", &self.x_grid),
            ("t-grid", &self.t_grid),
            ("q", &self.q),
            ("lambda", &self.lambda),
            ("k", &self.k),
            ("s", &self.s),
            ("r", &self.r),
            ("tmax", &self.tmax),
            ("trials", &self.trials),
            ("out", &self.out),
            ("format", &self.format),
        ]
    }

    fn config(&self, env_seed: Option<&str>) -> Result<RunConfig, ConfigError> {
        let mut map = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| ConfigError::new("config", format!("{}: {e}", p.display())))?;
                config::parse_text(&text)?
            }
            None => BTreeMap::new(),
        };
        for (k, v) in self.overrides() {
            if let Some(v) = v {
                map.insert(k.to_string(), v.clone());
            }
        }
        RunConfig::from_map(&map, env_seed)
    }
}

/// Result of one invocation.
#[derive(Debug)]
pub struct Report {
    pub code: i32,
    /// The JSON document (absent on usage errors).
    pub document: Option<Value>,
    /// Text for stdout (the document, a CSV table, or help).
    pub stdout: String,
    pub stderr: String,
}

fn failure(code: i32, msg: String) -> Report {
    Report { code, document: None, stdout: String::new(), stderr: msg }
}

/// Run with an explicit `FIBERFLOW_SEED` value; writes `--out` if given but
/// never touches stdout.
pub fn execute<I, T>(argv: I, env_seed: Option<&str>) -> Report
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    Report { code: 0, document: None, stdout: e.to_string(), stderr: String::new() }
                }
                _ => failure(1, e.to_string()),
            };
        }
    };
    type Run = fn(&RunConfig) -> commands::CliResult<Outcome>;
    let (name, flags, run): (&str, &Flags, Run) = match &cli.command {
        Cmd::Semigroup(f) => ("semigroup", f, commands::semigroup),
        Cmd::GroundEnergy(f) => ("ground-energy", f, commands::ground),
        Cmd::Resolvent(f) => ("resolvent", f, commands::resolvent),
        Cmd::Domination(f) => ("domination", f, commands::domination),
        Cmd::Smoothing(f) => ("smoothing", f, commands::smoothing),
        Cmd::IdentityCheck(f) => ("identity-check", f, commands::identity),
        Cmd::ContinuityScan(f) => ("continuity-scan", f, commands::continuity),
        Cmd::KatoCheck(f) => ("kato-check", f, commands::kato),
        Cmd::ExitTime(f) => ("exit-time", f, commands::exit_time),
        Cmd::Validate { target: Target::AppendixC, flags } => ("validate appendix-c", flags, commands::validate_holonomy),
        Cmd::Validate { target: Target::Oracle, flags } => ("validate oracle", flags, commands::validate_oracle),
    };
    let cfg = match flags.config(env_seed) {
        Ok(c) => c,
        Err(e) => return failure(1, format!("error: {e}\n")),
    };
    let start = Instant::now();
    let outcome = match run(&cfg) {
        Ok(o) => o,
        Err(e) => return failure(1, format!("error: {e}\n")),
    };
    let doc = document(name, &cfg, &outcome, start.elapsed().as_millis() as u64);
    let text = match cfg.format {
        Format::Json => format!("{}\n", serde_json::to_string_pretty(&doc).expect("serialisable")),
        Format::Csv => outcome.table.to_csv(),
    };
    let code = if outcome.passed { 0 } else { 2 };
    let mut stderr = String::new();
    if !outcome.passed {
        stderr.push_str(&format!("{name}: inequality violated\n"));
    }
    if let Some(path) = &cfg.out {
        if let Err(e) = std::fs::write(path, &text) {
            return failure(1, format!("error: invalid `out`: {path}: {e}\n"));
        }
        return Report { code, document: Some(doc), stdout: String::new(), stderr };
    }
    Report { code, document: Some(doc), stdout: text, stderr }
}

/// The result document. Everything except `wallTimeMs` is a function of the
/// configuration.
pub fn document(command: &str, cfg: &RunConfig, o: &Outcome, wall_ms: u64) -> Value {
    let config: serde_json::Map<String, Value> = cfg.entries().into_iter().map(|(k, v)| (k.to_string(), json!(v))).collect();
    json!({
        "schema": SCHEMA,
        "command": command,
        "config": config,
        "configText": cfg.to_text(),
        "values": o.values,
        "stderr": o.stderr,
        "aliveFraction": o.alive_fraction,
        "seed": cfg.seed,
        "h": o.h,
        "N": o.n,
        "passed": o.passed,
        "wallTimeMs": wall_ms,
    })
}

/// Entry point for the binary: reads `FIBERFLOW_SEED`, prints, returns the
/// exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let env_seed = std::env::var(config::SEED_ENV).ok();
    let rep = execute(argv, env_seed.as_deref());
    let _ = std::io::stdout().write_all(rep.stdout.as_bytes());
    let _ = std::io::stderr().write_all(rep.stderr.as_bytes());
    rep.code
}
