use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::Overrides;

#[derive(Debug, Parser)]
#[command(name = "robust-bo", version, about = "Bayesian optimization with Student-t outlier rejection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Verb,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Toggle {
    On,
    Off,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON run configuration.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output file; standard output when omitted.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Worker threads for `bench`.
    #[arg(long, value_name = "K")]
    pub parallel: Option<usize>,
    #[arg(long, value_enum)]
    pub robust: Option<Toggle>,
    /// Tail probability below which a point is flagged.
    #[arg(long, value_name = "Q")]
    pub quantile: Option<f64>,
    /// Fraction of the budget spent before the first detection round.
    #[arg(long, value_name = "F")]
    pub warmup: Option<f64>,
    /// Iterations between detection rounds.
    #[arg(long, value_name = "N")]
    pub period: Option<usize>,
}

impl Common {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            robust: self.robust.map(|t| t == Toggle::On),
            quantile: self.quantile,
            warmup: self.warmup,
            period: self.period,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Verb {
    /// Run the synthetic benchmark and write per-iteration records.
    Bench {
        #[command(flatten)]
        common: Common,
    },
    /// Minimize an external command (point on stdin, value on stdout).
    Run {
        /// Shell command evaluated once per point.
        #[arg(long)]
        command: Option<String>,
        #[arg(long)]
        dimension: Option<usize>,
        /// Comma-separated lower bounds.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        lower: Option<Vec<f64>>,
        /// Comma-separated upper bounds.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        upper: Option<Vec<f64>>,
        #[arg(long)]
        budget: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Print the next point for a file-based run.
    Suggest {
        #[arg(long, value_name = "PATH")]
        history: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Record an evaluated point in a file-based run.
    Tell {
        #[arg(long, value_name = "PATH")]
        history: PathBuf,
        /// Space- or comma-separated coordinates.
        #[arg(long, allow_hyphen_values = true)]
        point: String,
        #[arg(long, allow_negative_numbers = true)]
        value: f64,
    },
    /// Aggregate benchmark records into a CSV table.
    Report {
        /// Records written by `bench`.
        #[arg(long = "in", value_name = "PATH")]
        input: PathBuf,
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
}
