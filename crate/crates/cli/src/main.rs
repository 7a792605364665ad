mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use report::Format;

#[derive(Parser, Debug)]
#[command(name = "infauction", version, about = "Audits for aggregation, auctions and finite knowledge calculi")]
struct Cli {
    /// Output format.
    #[arg(long, global = true, value_enum, default_value = "json")]
    format: Format,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for randomized sweeps.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, serde::Serialize)]
pub struct ModelArgs {
    /// Weight bundle directory; the built-in golden weights when omitted.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Token names or indices.
    #[arg(long, default_value = "The quick brown")]
    pub tokens: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureMapArg {
    Elu1p,
    Relu,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AuditLevel {
    None,
    Clarke,
    All,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleArg {
    Log,
    Brier,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Traced forward pass.
    Forward {
        #[command(flatten)]
        model: ModelArgs,
        /// Replace softmax attention with kernelized linear attention.
        #[arg(long, value_enum)]
        linear: Option<FeatureMapArg>,
        /// Include every position and head in the report.
        #[arg(long)]
        full_trace: bool,
    },
    /// Log-partition gap of the attention heads.
    Gap {
        #[command(flatten)]
        model: ModelArgs,
        /// Head logits file: {"head_logits": [[...], ...], "outcome": k}.
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
    /// Product of experts against softmax of summed logits.
    Poe {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
    /// Least-squares mixture attribution of the final distribution.
    Attribute {
        #[command(flatten)]
        model: ModelArgs,
        /// Belief profile; its product of experts is attributed to the beliefs.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value_t = infauction::attribution::DEFAULT_TOL)]
        tol: f64,
    },
    /// VCG auction with property audits.
    Auction {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        budget: Option<u64>,
        #[arg(long, value_enum, default_value = "all")]
        audit: AuditLevel,
    },
    /// Jensen gap of a belief profile, or a propriety sweep without one.
    Scoring {
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Override the profile's scoring rule.
        #[arg(long, value_enum)]
        rule: Option<RuleArg>,
        /// Grid resolution of the sweep (points per unit).
        #[arg(long, default_value_t = 20)]
        steps: usize,
        /// Random profiles in the sweep.
        #[arg(long, default_value_t = 500)]
        profiles: usize,
    },
    /// Emergence on a knowledge scenario, or transformer states and energy.
    Emerge {
        #[command(flatten)]
        model: ModelArgs,
        /// Reasoning file; its baseline is the starting set.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        budget: Option<u64>,
        /// Number of blocks for transformer emergence.
        #[arg(long, default_value_t = 1)]
        depth: usize,
        /// Layer discount, strictly between 0 and 1.
        #[arg(long, default_value_t = 0.5)]
        gamma: f64,
    },
    /// Conservation audit of a chain of thought.
    CotAudit {
        #[arg(long, alias = "scenario")]
        trace: PathBuf,
        #[arg(long)]
        budget: Option<u64>,
    },
    /// Safety envelope of a baseline and whether a response stays inside.
    Envelope {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        budget: Option<u64>,
    },
    /// Golden values and reduced property sweeps.
    Selftest,
}

/// Diagnostic classes with their exit codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Failure {
    Assertion = 1,
    Parse = 2,
    MissingFile = 3,
    Engine = 4,
}

impl Failure {
    fn tag(self) -> &'static str {
        match self {
            Failure::Assertion => "E-ASSERT",
            Failure::Parse => "E-PARSE",
            Failure::MissingFile => "E-MISSING",
            Failure::Engine => "E-ENGINE",
        }
    }
}

fn classify(err: &anyhow::Error) -> Failure {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<infauction::Error>() {
            return match e {
                infauction::Error::Parse(_) => Failure::Parse,
                infauction::Error::Io { .. } => Failure::MissingFile,
                _ => Failure::Engine,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return Failure::MissingFile;
        }
        if cause.downcast_ref::<serde_json::Error>().is_some() {
            return Failure::Parse;
        }
    }
    Failure::Engine
}

fn run(cli: Cli) -> anyhow::Result<report::Report> {
    let seed = cli.seed;
    match cli.command {
        Command::Forward { model, linear, full_trace } => commands::forward(&model, linear, full_trace, seed),
        Command::Gap { model, scenario } => commands::gap(&model, scenario.as_deref(), seed),
        Command::Poe { model, scenario } => commands::poe(&model, scenario.as_deref(), seed),
        Command::Attribute { model, scenario, tol } => commands::attribute(&model, scenario.as_deref(), tol, seed),
        Command::Auction { scenario, budget, audit } => commands::auction(&scenario, budget, audit, seed),
        Command::Scoring { scenario, rule, steps, profiles } => {
            commands::scoring(scenario.as_deref(), rule, steps, profiles, seed)
        }
        Command::Emerge { model, scenario, budget, depth, gamma } => {
            commands::emerge(&model, scenario.as_deref(), budget, depth, gamma, seed)
        }
        Command::CotAudit { trace, budget } => commands::cot_audit(&trace, budget, seed),
        Command::Envelope { scenario, budget } => commands::envelope(&scenario, budget, seed),
        Command::Selftest => Ok(commands::selftest(seed)),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let format = cli.format;
    let out = cli.out.clone();
    let result = run(cli).and_then(|r| {
        let text = r.emit(format)?;
        match &out {
            Some(p) => std::fs::write(p, &text)?,
            None => print!("{text}"),
        }
        Ok(r)
    });
    match result {
        Ok(r) if r.passed() => ExitCode::SUCCESS,
        Ok(r) => {
            for c in r.checks.iter().filter(|c| !c.passed) {
                eprintln!("{}: {} failed: {}", Failure::Assertion.tag(), c.name, c.detail);
            }
            ExitCode::from(Failure::Assertion as u8)
        }
        Err(e) => {
            let f = classify(&e);
            eprintln!("{}: {e:#}", f.tag());
            ExitCode::from(f as u8)
        }
    }
}
