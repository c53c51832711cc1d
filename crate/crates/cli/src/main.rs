mod commands;
mod config;
mod plot;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::commands::Output;
use crate::config::{read_stack_file, resolve_stack, stack_entries, Format, RunConfig, StackEntry, OUT_ENV};

/// Spectra, degrees of freedom and learning curves of dot-product kernels
/// built from activation stacks.
#[derive(Parser, Debug)]
#[command(name = "dkspec", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Default)]
struct Common {
    /// TOML config merged over the shipped defaults
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Stack file (TOML or JSON with a `stack` list, innermost layer first)
    #[arg(long, global = true, value_name = "FILE", conflicts_with = "activations")]
    stack: Option<PathBuf>,
    /// Inline stack, innermost first, e.g. `exp,square`
    #[arg(long, global = true, value_delimiter = ',', value_name = "LIST")]
    activations: Option<Vec<String>>,
    /// Ambient dimension d of the sphere S^{d-1}
    #[arg(long, global = true, value_name = "D")]
    dim: Option<usize>,
    /// Largest harmonic degree (series degree for `ratio`)
    #[arg(long = "max-degree", global = true, value_name = "M")]
    max_degree: Option<usize>,
    /// Source exponent β of the target
    #[arg(long, global = true, value_name = "BETA")]
    beta: Option<f64>,
    /// Sample sizes, e.g. `64,128,256`
    #[arg(long = "ell-grid", global = true, value_delimiter = ',', value_name = "LIST")]
    ell_grid: Option<Vec<usize>>,
    /// Replicates per sample size (learning-curve, oracle)
    #[arg(long, global = true, value_name = "R")]
    replicates: Option<usize>,
    #[arg(long, global = true, value_name = "SEED")]
    seed: Option<u64>,
    /// Output directory [default: $DKSPEC_OUT, else dkspec-out]
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Outputs to write; the manifest is always written
    #[arg(long, global = true, value_delimiter = ',', value_name = "LIST")]
    format: Option<Vec<Format>>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Distinct and sorted spectra for each depth of the stack, with a semi-log plot
    Spectrum,
    /// Coefficient ratios b_m/b_{m-1} against m^{-1/3} and m^{-1/5}
    Ratio,
    /// Degrees of freedom on a λ grid with the regime's upper bound
    Df {
        /// Regularization values, e.g. `1e-6,1e-4`
        #[arg(long, value_delimiter = ',', value_name = "LIST")]
        lambdas: Option<Vec<f64>>,
    },
    /// Geometric sandwich C₂(r/4)^m ≤ λ_m ≤ C₁ r^m of the distinct eigenvalues
    Sandwich {
        /// Rate r; fitted from the coefficients when omitted
        #[arg(long)]
        rate: Option<f64>,
    },
    /// Simulated excess risk of kernel ridge regression against sample size
    LearningCurve,
    /// Analytic spectrum against circle quadrature (d = 2) or a Gram matrix
    Oracle {
        /// Monte-Carlo sample size (d > 2)
        #[arg(long)]
        samples: Option<usize>,
    },
    /// RKHS norm bound and optional generalization certificate of an MLP
    MlpBound {
        /// Weight JSON
        #[arg(long, value_name = "FILE")]
        weights: Option<PathBuf>,
        /// CSV of `x_1,…,x_d,y` rows for the certificate
        #[arg(long, value_name = "FILE")]
        data: Option<PathBuf>,
        #[arg(long)]
        delta: Option<f64>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Ratio => "ratio",
            Command::Df { .. } => "df",
            Command::Sandwich { .. } => "sandwich",
            Command::LearningCurve => "learning-curve",
            Command::Oracle { .. } => "oracle",
            Command::MlpBound { .. } => "mlp-bound",
        }
    }
}

fn reject(flag: &str, cmd: &str) -> anyhow::Error {
    anyhow::anyhow!("--{flag} does not apply to `{cmd}`")
}

/// Applies command-line overrides to the section of `cfg` used by `cmd`.
fn apply_flags(cfg: &mut RunConfig, cmd: &Command, c: &Common) -> Result<()> {
    let name = cmd.name();
    if let Some(out) = &c.out {
        cfg.out = out.clone();
    }
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    if let Some(f) = &c.format {
        cfg.formats = f.clone();
    }
    let stack: Option<Vec<StackEntry>> = match (&c.stack, &c.activations) {
        (Some(p), _) => Some(read_stack_file(p)?),
        (None, Some(names)) => {
            let entries: Vec<StackEntry> = names.iter().map(|n| StackEntry::Name(n.trim().to_string())).collect();
            Some(stack_entries(&resolve_stack(&entries)?))
        }
        (None, None) => None,
    };

    macro_rules! set {
        ($section:expr, $field:ident, $value:expr) => {
            if let Some(v) = $value {
                $section.$field = v;
            }
        };
    }
    macro_rules! deny {
        ($($flag:literal => $value:expr),*) => {
            $(if $value { return Err(reject($flag, name)); })*
        };
    }
    let (dim, deg, beta, grid, reps) =
        (c.dim, c.max_degree, c.beta, c.ell_grid.clone(), c.replicates);
    match cmd {
        Command::Spectrum => {
            deny!("beta" => beta.is_some(), "ell-grid" => grid.is_some(), "replicates" => reps.is_some());
            let s = &mut cfg.spectrum;
            set!(s, stack, stack);
            set!(s, dim, dim);
            set!(s, max_degree, deg);
        }
        Command::Ratio => {
            deny!("dim" => dim.is_some(), "beta" => beta.is_some(), "ell-grid" => grid.is_some(), "replicates" => reps.is_some());
            let s = &mut cfg.ratio;
            set!(s, stack, stack);
            set!(s, max_degree, deg);
        }
        Command::Df { lambdas } => {
            deny!("beta" => beta.is_some(), "ell-grid" => grid.is_some(), "replicates" => reps.is_some());
            let s = &mut cfg.df;
            set!(s, stack, stack);
            set!(s, dim, dim);
            set!(s, max_degree, deg);
            set!(s, lambdas, lambdas.clone());
        }
        Command::Sandwich { rate } => {
            deny!("beta" => beta.is_some(), "ell-grid" => grid.is_some(), "replicates" => reps.is_some());
            let s = &mut cfg.sandwich;
            set!(s, stack, stack);
            set!(s, dim, dim);
            set!(s, max_degree, deg);
            if rate.is_some() {
                s.rate = *rate;
            }
        }
        Command::LearningCurve => {
            let s = &mut cfg.learning_curve;
            set!(s, stack, stack);
            set!(s, dim, dim);
            set!(s, spectrum_degree, deg);
            set!(s, beta, beta);
            set!(s, ell_grid, grid);
            set!(s, replicates, reps);
        }
        Command::Oracle { samples } => {
            deny!("beta" => beta.is_some(), "ell-grid" => grid.is_some());
            let s = &mut cfg.oracle;
            set!(s, stack, stack);
            set!(s, dim, dim);
            set!(s, max_degree, deg);
            set!(s, replicates, reps);
            set!(s, samples, *samples);
        }
        Command::MlpBound { weights, data, delta } => {
            deny!(
                "stack" => c.stack.is_some(), "activations" => c.activations.is_some(),
                "dim" => dim.is_some(), "max-degree" => deg.is_some(), "beta" => beta.is_some(),
                "ell-grid" => grid.is_some(), "replicates" => reps.is_some()
            );
            let s = &mut cfg.mlp_bound;
            set!(s, weights, weights.as_ref().map(|p| p.display().to_string()));
            set!(s, data, data.as_ref().map(|p| p.display().to_string()));
            set!(s, delta, *delta);
        }
    }
    Ok(())
}

fn section(cfg: &RunConfig, cmd: &Command) -> serde_json::Value {
    let v = match cmd {
        Command::Spectrum => serde_json::to_value(&cfg.spectrum),
        Command::Ratio => serde_json::to_value(&cfg.ratio),
        Command::Df { .. } => serde_json::to_value(&cfg.df),
        Command::Sandwich { .. } => serde_json::to_value(&cfg.sandwich),
        Command::LearningCurve => serde_json::to_value(&cfg.learning_curve),
        Command::Oracle { .. } => serde_json::to_value(&cfg.oracle),
        Command::MlpBound { .. } => serde_json::to_value(&cfg.mlp_bound),
    };
    v.expect("config sections serialize")
}

fn run_command(cfg: &RunConfig, cmd: &Command) -> Result<Output> {
    match cmd {
        Command::Spectrum => commands::spectrum(&cfg.spectrum),
        Command::Ratio => commands::ratio(&cfg.ratio),
        Command::Df { .. } => commands::df(&cfg.df),
        Command::Sandwich { .. } => commands::sandwich(&cfg.sandwich),
        Command::LearningCurve => commands::learning(&cfg.learning_curve, cfg.seed),
        Command::Oracle { .. } => commands::oracle(&cfg.oracle, cfg.seed),
        Command::MlpBound { .. } => commands::mlp_bound(&cfg.mlp_bound),
    }
}

/// Writes every file under a temporary name first and renames at the end, so
/// a failure leaves no partial output behind.
fn write_all(dir: &Path, files: &[(String, String)]) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut staged = Vec::new();
    let result = (|| -> Result<()> {
        for (name, body) in files {
            let tmp = dir.join(format!(".{name}.partial"));
            staged.push(tmp.clone());
            std::fs::write(&tmp, body).with_context(|| format!("writing {}", tmp.display()))?;
        }
        for (name, _) in files {
            let tmp = dir.join(format!(".{name}.partial"));
            std::fs::rename(&tmp, dir.join(name)).with_context(|| format!("finalizing {name}"))?;
        }
        Ok(())
    })();
    if result.is_err() {
        for p in staged {
            let _ = std::fs::remove_file(p);
        }
    }
    result
}

fn execute(cli: &Cli) -> Result<serde_json::Value> {
    let started = Instant::now();
    let mut cfg = RunConfig::load(cli.common.config.as_deref(), std::env::var(OUT_ENV).ok())?;
    apply_flags(&mut cfg, &cli.command, &cli.common)?;
    if cfg.formats.is_empty() {
        bail!("at least one output format is required");
    }
    let cmd = cli.command.name();
    let output = run_command(&cfg, &cli.command)?;

    let mut files: Vec<(String, String)> = output
        .files
        .into_iter()
        .filter(|(_, f, _)| cfg.formats.contains(f))
        .map(|(n, _, b)| (n, b))
        .collect();
    let summary_name = format!("{}.json", cmd.replace('-', "_"));
    if cfg.formats.contains(&Format::Json) {
        files.push((summary_name, serde_json::to_string_pretty(&output.summary)? + "\n"));
    }
    let mut names: Vec<String> = files.iter().map(|(n, _)| n.clone()).collect();
    names.push("manifest.json".into());
    let manifest = json!({
        "command": cmd,
        "version": env!("CARGO_PKG_VERSION"),
        "seed": cfg.seed,
        "inputs": section(&cfg, &cli.command),
        "formats": cfg.formats,
        "files": names,
        "wall_time_s": started.elapsed().as_secs_f64(),
    });
    files.push(("manifest.json".into(), serde_json::to_string_pretty(&manifest)? + "\n"));
    write_all(&cfg.out, &files)?;
    Ok(json!({ "command": cmd, "out": cfg.out, "files": names, "summary": output.summary }))
}

fn error_kind(e: &anyhow::Error) -> &'static str {
    use dkspec::Error as E;
    match e.chain().find_map(|c| c.downcast_ref::<E>()) {
        Some(E::Catalog(_) | E::Config(_)) => "config",
        Some(E::Domain(_) | E::Shape(_) | E::Schedule(_)) => "invalid_input",
        Some(E::Io(_) | E::Json(_)) => "io",
        Some(_) => "computation",
        None if e.chain().any(|c| c.downcast_ref::<std::io::Error>().is_some()) => "io",
        None => "config",
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help, --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            println!("{}", json!({ "error": { "kind": "usage", "message": e.kind().to_string() } }));
            return ExitCode::from(2);
        }
    };
    match execute(&cli) {
        Ok(report) => {
            println!("{}", serde_json::to_string_pretty(&report).expect("serializable"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            let kind = error_kind(&e);
            let message = format!("{e:#}");
            eprintln!("error: {message}");
            println!("{}", json!({ "error": { "kind": kind, "message": message } }));
            ExitCode::from(if kind == "computation" { 1 } else { 2 })
        }
    }
}
