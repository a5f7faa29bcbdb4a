use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mreval_core::metrics::{Binarization, EceMode, EceScope, EceWeighting};
use mreval_core::ranking::Aggregation;
use mreval_core::report::Pooling;
use mreval_core::stability::{DEFAULT_ITERATIONS, DEFAULT_SEED};
use mreval_core::{Error, Group, Organ, SigmaConvention};

use crate::{exit_code, format_ranking, run_evaluate, run_phantom, run_rank_table, run_validate, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "mreval", version, about = "Multi-rater evaluation of probabilistic organ segmentations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate every (case, algorithm) pair of a manifest and write the report artifacts.
    Evaluate(EvaluateArgs),
    /// Generate a synthetic dataset and manifest from a phantom spec.
    Phantom {
        /// Phantom dataset spec (JSON).
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank pre-aggregated metrics (columns: algorithm, dsc, confidence, ece, crps).
    RankTable {
        csv: PathBuf,
        /// Also write ranking.csv and ranking.json here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a manifest and the files it references without evaluating.
    Validate {
        #[arg(long)]
        manifest: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SigmaArg {
    Population,
    Sample,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AggregationArg {
    MeanThenRank,
    RankThenMean,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PoolingArg {
    PerCase,
    PerOrgan,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GroupArg {
    #[value(name = "A")]
    A,
    #[value(name = "B")]
    B,
    #[value(name = "C")]
    C,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// DSC binarization threshold on the class channel.
    #[arg(long, default_value_t = 0.5, conflicts_with = "argmax")]
    threshold: f64,
    /// Binarize by per-voxel argmax instead of a threshold.
    #[arg(long)]
    argmax: bool,
    #[arg(long, default_value_t = 10)]
    ece_bins: usize,
    /// Weight calibration bins by |B_m|/M instead of |B_m|/N.
    #[arg(long, alias = "eq2-literal")]
    ece_literal_weights: bool,
    /// One-vs-rest calibration per organ instead of multiclass.
    #[arg(long)]
    ece_per_class: bool,
    /// Leave dissensus voxels out of the calibration error.
    #[arg(long)]
    ece_exclude_dissensus: bool,
    #[arg(long, value_enum, default_value_t = SigmaArg::Population)]
    sigma: SigmaArg,
    /// Rescale probability maps whose channels do not sum to 1 instead of rejecting them.
    #[arg(long)]
    renormalize: bool,
    #[arg(long, default_value_t = DEFAULT_ITERATIONS)]
    iterations: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Restrict to cases of these groups.
    #[arg(long, value_enum, value_delimiter = ',', ignore_case = true)]
    group: Vec<GroupArg>,
    /// Organ classes to evaluate (names or ids), default all.
    #[arg(long, value_delimiter = ',')]
    classes: Vec<String>,
    #[arg(long, value_enum, default_value_t = AggregationArg::MeanThenRank)]
    aggregation: AggregationArg,
    #[arg(long, value_enum, default_value_t = PoolingArg::PerCase)]
    correlation_pooling: PoolingArg,
    /// Skip cases that fail to load or evaluate instead of aborting.
    #[arg(long)]
    skip_bad_cases: bool,
    /// Number of cases evaluated concurrently.
    #[arg(long, default_value_t = 1)]
    parallel_cases: usize,
}

impl EvaluateArgs {
    fn into_config(self) -> Result<RunConfig, Error> {
        let mut c = RunConfig::new(self.manifest, self.out);
        c.binarization = if self.argmax { Binarization::Argmax } else { Binarization::Threshold { tau: self.threshold } };
        c.ece_bins = self.ece_bins;
        if self.ece_literal_weights {
            c.ece_weighting = EceWeighting::Literal;
        }
        if self.ece_per_class {
            c.ece_mode = EceMode::PerClassBinary;
        }
        if self.ece_exclude_dissensus {
            c.ece_scope = EceScope::ExcludeDissensus;
        }
        c.sigma = match self.sigma {
            SigmaArg::Population => SigmaConvention::Population,
            SigmaArg::Sample => SigmaConvention::Sample,
        };
        c.renormalize = self.renormalize;
        c.iterations = self.iterations;
        c.seed = self.seed;
        c.groups = self
            .group
            .into_iter()
            .map(|g| match g {
                GroupArg::A => Group::A,
                GroupArg::B => Group::B,
                GroupArg::C => Group::C,
            })
            .collect();
        if !self.classes.is_empty() {
            let mut organs = self.classes.iter().map(|s| s.parse()).collect::<Result<Vec<Organ>, _>>()?;
            organs.sort();
            c.classes = organs;
        }
        c.aggregation = match self.aggregation {
            AggregationArg::MeanThenRank => Aggregation::MeanThenRank,
            AggregationArg::RankThenMean => Aggregation::RankThenMean,
        };
        c.correlation_pooling = match self.correlation_pooling {
            PoolingArg::PerCase => Pooling::PerCase,
            PoolingArg::PerOrgan => Pooling::PerOrgan,
        };
        c.skip_bad_cases = self.skip_bad_cases;
        c.parallel_cases = self.parallel_cases;
        Ok(c)
    }
}

fn execute(command: Command) -> Result<(), Error> {
    match command {
        Command::Evaluate(args) => {
            let config = args.into_config()?;
            let artifacts = run_evaluate(&config)?;
            print!("{}", format_ranking(&artifacts.ranking));
            for s in &artifacts.meta.skipped_cases {
                eprintln!("skipped {}: {}", s.case_id, s.reason);
            }
            println!("wrote report to {}", config.out_dir.display());
        }
        Command::Phantom { spec, out } => {
            let manifest = run_phantom(&spec, &out)?;
            println!(
                "wrote {} cases x {} algorithms to {}",
                manifest.cases.len(),
                manifest.algorithms().len(),
                out.display()
            );
        }
        Command::RankTable { csv, out } => {
            let table = run_rank_table(&csv, out.as_deref())?;
            print!("{}", format_ranking(&table));
        }
        Command::Validate { manifest } => {
            let m = run_validate(&manifest)?;
            println!(
                "ok: {} cases, {} raters, {} algorithms",
                m.cases.len(),
                m.rater_count(),
                m.algorithms().len()
            );
        }
    }
    Ok(())
}

/// Parses arguments, runs the command and returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
