use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use vcsp_core::equations::Family;
use vcsp_core::{Caps, SubsetMode};
use vcsp_tools::commands::{self, GapArgs, ReduceKind, Relaxation, RunConfig};
use vcsp_tools::{Report, ToolError};

/// Relaxation analysis, reductions and gap search for valued CSPs.
///
/// Exit codes: 0 success, 2 parse or configuration error, 3 cap exceeded,
/// 4 solver non-convergence.
#[derive(Parser, Debug)]
#[command(name = "vcsp", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Relaxation level k.
    #[arg(long, global = true, default_value_t = 3)]
    level: usize,
    /// Relaxation: Sherali-Adams LP or Lasserre SDP.
    #[arg(long, global = true, value_enum, default_value_t = Mode::Sa)]
    mode: Mode,
    /// SDP residual tolerance.
    #[arg(long, global = true, default_value_t = 1e-7)]
    eps: f64,
    /// SDP iteration limit.
    #[arg(long = "max-iter", global = true, default_value_t = 50_000)]
    max_iter: usize,
    /// Seed for instance generation.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Variable subsets of the relaxation; `scopes` is a weaker relaxation.
    #[arg(long, global = true, value_enum, default_value_t = Subsets::Full)]
    subsets: Subsets,
    /// Directory for the report, solution dumps and produced instances.
    #[arg(long = "out-dir", global = true)]
    out_dir: Option<PathBuf>,
    /// Cap on brute-force enumeration (total assignments).
    #[arg(long = "cap-enum", global = true, default_value_t = 10_000_000)]
    cap_enum: u128,
    /// Largest WNU arity checked by `analyze`.
    #[arg(long = "m-max", global = true, default_value_t = 4)]
    m_max: usize,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    Sa,
    Las,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Subsets {
    Full,
    Scopes,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ReduceType {
    Identity,
    Express,
    Custom,
    Eq,
    Interp,
    Opt,
    Feas,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FamilyArg {
    Tseitin,
    Kxor,
}

#[derive(Args, Debug)]
struct ReduceArgs {
    /// Language file of the source instance.
    language: PathBuf,
    /// Source instance file.
    instance: PathBuf,
    #[arg(long = "type", value_enum)]
    kind: ReduceType,
    /// Gadget file (express, custom); repeatable.
    #[arg(long)]
    gadget: Vec<PathBuf>,
    /// Language of gadget templates (defaults to the source language; required for interp).
    #[arg(long = "gadget-language")]
    gadget_language: Option<PathBuf>,
    /// Interpretation file (interp).
    #[arg(long)]
    interpretation: Option<PathBuf>,
    /// The relation φ (opt, feas).
    #[arg(long)]
    phi: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Core, bounded-width check and dichotomy verdict of a language.
    Analyze {
        language: PathBuf,
        /// Restrict WNU searches to these candidate operations.
        #[arg(long)]
        ops: Option<PathBuf>,
        /// Allow WNUs that are not idempotent.
        #[arg(long = "non-idempotent")]
        non_idempotent: bool,
    },
    /// Solve a relaxation of an instance and compare with the exact optimum.
    Relax { language: PathBuf, instance: PathBuf },
    /// Apply a reduction and write the target instance.
    Reduce {
        #[command(flatten)]
        args: ReduceArgs,
        /// Check conditions (a)-(c) exhaustively.
        #[arg(long)]
        verify: bool,
    },
    /// Reduction conditions plus end-to-end solution transport.
    Verify {
        #[command(flatten)]
        args: ReduceArgs,
        /// Target relaxation level k'.
        #[arg(long = "k-prime", default_value_t = 3)]
        k_prime: usize,
    },
    /// Search linear-equation instances for Lasserre gaps.
    Gapsearch {
        #[arg(long, default_value = "Z2")]
        group: String,
        /// Largest equation arity r.
        #[arg(long, default_value_t = 3)]
        arity: usize,
        #[arg(long, value_enum, default_value_t = FamilyArg::Tseitin)]
        family: FamilyArg,
        /// Equations per variable (kxor).
        #[arg(long, default_value_t = 2)]
        ratio: usize,
        /// Smallest size (vertices for tseitin, variables for kxor).
        #[arg(long = "n-min", default_value_t = 4)]
        n_min: usize,
        #[arg(long = "n-max", default_value_t = 8)]
        n_max: usize,
        /// Instances per size.
        #[arg(long, default_value_t = 2)]
        samples: usize,
        /// Instances examined before the search gives up.
        #[arg(long, default_value_t = 20)]
        budget: usize,
    },
}

fn reduce_kind(a: &ReduceArgs) -> Result<ReduceKind, ToolError> {
    fn need<T: Clone>(v: &Option<T>, kind: ReduceType, what: &str) -> Result<T, ToolError> {
        v.clone().ok_or_else(|| ToolError::Config(format!("--type {kind:?} requires {what}")))
    }
    Ok(match a.kind {
        ReduceType::Identity => ReduceKind::Identity,
        ReduceType::Express => ReduceKind::Express { gadgets: a.gadget.clone(), gadget_language: a.gadget_language.clone() },
        ReduceType::Custom => ReduceKind::Custom { gadgets: a.gadget.clone(), gadget_language: a.gadget_language.clone() },
        ReduceType::Eq => ReduceKind::Eq,
        ReduceType::Interp => ReduceKind::Interp {
            interpretation: need(&a.interpretation, a.kind, "--interpretation")?,
            gadget_language: need(&a.gadget_language, a.kind, "--gadget-language")?,
        },
        ReduceType::Opt => ReduceKind::Opt { phi: need(&a.phi, a.kind, "--phi")? },
        ReduceType::Feas => ReduceKind::Feas { phi: need(&a.phi, a.kind, "--phi")? },
    })
}

fn reduce_inputs(a: &ReduceArgs) -> Vec<(String, PathBuf)> {
    let mut v = vec![("language".to_string(), a.language.clone()), ("instance".to_string(), a.instance.clone())];
    v.extend(a.gadget.iter().enumerate().map(|(i, g)| (format!("gadget.{i}"), g.clone())));
    v.extend(a.gadget_language.iter().map(|p| ("gadget_language".to_string(), p.clone())));
    v.extend(a.interpretation.iter().map(|p| ("interpretation".to_string(), p.clone())));
    v
}

fn run(cli: Cli) -> Result<Report, ToolError> {
    let g = &cli.global;
    if g.eps.is_nan() || g.eps <= 0.0 || g.level == 0 || g.max_iter == 0 {
        return Err(ToolError::Config("--eps, --level and --max-iter must be positive".into()));
    }
    let mut cfg = RunConfig {
        level: g.level,
        relaxation: match g.mode {
            Mode::Sa => Relaxation::Sa,
            Mode::Las => Relaxation::Las,
        },
        eps: g.eps,
        max_iter: g.max_iter,
        seed: g.seed,
        subsets: match g.subsets {
            Subsets::Full => SubsetMode::Full,
            Subsets::Scopes => SubsetMode::Scopes,
        },
        out_dir: g.out_dir.clone(),
        caps: Caps { enumeration: g.cap_enum, ..Caps::default() },
        m_max: g.m_max,
        ..RunConfig::default()
    };
    let report = match &cli.command {
        Command::Analyze { language, ops, non_idempotent } => {
            cfg.command = "analyze".into();
            cfg.inputs.push(("language".into(), language.clone()));
            if let Some(o) = ops {
                cfg.inputs.push(("ops".into(), o.clone()));
            }
            commands::analyze(&cfg, language, ops.as_deref(), !non_idempotent)?
        }
        Command::Relax { language, instance } => {
            cfg.command = "relax".into();
            cfg.inputs = vec![("language".into(), language.clone()), ("instance".into(), instance.clone())];
            commands::relax(&cfg, language, instance)?
        }
        Command::Reduce { args, verify } => {
            cfg.command = "reduce".into();
            cfg.inputs = reduce_inputs(args);
            commands::reduce(&cfg, &args.language, &args.instance, &reduce_kind(args)?, *verify)?
        }
        Command::Verify { args, k_prime } => {
            cfg.command = "verify".into();
            cfg.inputs = reduce_inputs(args);
            commands::verify(&cfg, &args.language, &args.instance, &reduce_kind(args)?, *k_prime)?
        }
        Command::Gapsearch { group, arity, family, ratio, n_min, n_max, samples, budget } => {
            cfg.command = "gapsearch".into();
            let family = match family {
                FamilyArg::Tseitin => Family::Tseitin,
                FamilyArg::Kxor => Family::Kxor { ratio: *ratio },
            };
            let args = GapArgs { group: group.clone(), arity: *arity, family, n_min: *n_min, n_max: *n_max, samples: *samples, budget: *budget };
            commands::gapsearch(&cfg, &args)?
        }
    };
    if let Some(dir) = &cfg.out_dir {
        let path = dir.join("report.txt");
        std::fs::create_dir_all(dir).map_err(|e| ToolError::Io { path: dir.clone(), source: e })?;
        std::fs::write(&path, report.to_string()).map_err(|e| ToolError::Io { path, source: e })?;
    }
    Ok(report)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(report) => {
            print!("{report}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
