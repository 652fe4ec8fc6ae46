use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use spider_em::data::{drop_constant_columns, load_csv, pca_project, write_csv, PipelineRecord};
use spider_em::diagnostics::{export_bench, BenchResult};
use spider_em::harness::verify::{run_suite, Suite, VerifyConfig};
use spider_em::harness::{
    build_model, export_outcome, load_dataset, run_bench, run_strategy, write_trace_files, ExperimentSpec, Strategy,
};
use spider_em::Error;

/// Variance-reduced stochastic EM: preprocessing, runs, benchmarks and
/// identity checks.
#[derive(Parser)]
#[command(name = "spider-em", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Drop constant columns and/or project a CSV dataset on its principal
    /// components.
    Prep {
        input: PathBuf,
        /// The first line of the input is a header.
        #[arg(long)]
        header: bool,
        #[arg(long)]
        drop_constant: bool,
        /// Number of principal components to keep.
        #[arg(long, value_name = "DIM")]
        pca: Option<usize>,
        /// Scale each component to unit variance.
        #[arg(long, requires = "pca")]
        whiten: bool,
        /// Output directory for data.csv and the projection bundle.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one strategy on one seed and write its trace.
    Fit {
        spec: PathBuf,
        #[arg(long)]
        strategy: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 0)]
        replication: u64,
        /// Trace path; defaults to <output dir>/<strategy>-seed<seed>.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the strategy x replication grid and export aggregates and figures.
    Bench { spec: PathBuf },
    /// Check the estimator, stopping-time and counter identities.
    Verify {
        #[arg(long, default_value = "all")]
        suite: String,
        /// Monte-Carlo sample size (accepts 1e6).
        #[arg(long)]
        trials: Option<String>,
        #[arg(long, default_value_t = 2021)]
        seed: u64,
    },
    /// Re-render the figure files from a bench.csv.
    Plot {
        bench: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Failure {
    Error(Error),
    Verification(usize),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verification(n)) => {
            eprintln!("error: {n} identity check(s) failed");
            ExitCode::from(3)
        }
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::Diverged { .. } | Error::NonFiniteStatistic(_) | Error::Unrepairable(_) => 2,
                _ => 1,
            };
            ExitCode::from(code)
        }
    }
}

fn load_spec(path: &Path) -> Result<ExperimentSpec, Error> {
    let mut spec = ExperimentSpec::load(path)?;
    spec.apply_env()?;
    Ok(spec)
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Prep {
            input,
            header,
            drop_constant,
            pca,
            whiten,
            out,
        } => prep(&input, header, drop_constant, pca, whiten, &out)?,
        Command::Fit {
            spec,
            strategy,
            seed,
            replication,
            out,
        } => {
            let spec = load_spec(&spec)?;
            let strategy: Strategy = strategy.parse()?;
            let seed = seed.unwrap_or(spec.seed);
            let model = build_model(&spec, load_dataset(&spec)?)?;
            let trace = run_strategy(&model, &spec, &strategy, seed, replication)?;
            let path = out.unwrap_or_else(|| spec.output_dir.join(format!("{}-seed{seed}.csv", strategy.name())));
            let meta = vec![
                ("seed".to_string(), seed.to_string()),
                ("replication".to_string(), replication.to_string()),
            ];
            write_trace_files(&path, &trace, &meta)?;
            if let Some(last) = trace.records.last() {
                println!(
                    "{}: {} epochs, |h|^2 = {:.3e}, F = {:.6}, CE = {}",
                    strategy.name(),
                    trace.records.len(),
                    last.h_norm_sq,
                    last.objective,
                    last.cum_ce
                );
            }
            println!("wrote {}", path.display());
        }
        Command::Bench { spec } => {
            let spec = load_spec(&spec)?;
            let outcome = run_bench(&spec)?;
            for f in &outcome.failures {
                eprintln!("warning: {} replication {} failed: {}", f.strategy, f.replication, f.message);
            }
            for (name, rows) in &outcome.result.strategies {
                if let Some(last) = rows.last() {
                    println!(
                        "{name:>10}  q50 |h|^2 = {:.3e}  -F = {:.6}  CE = {:.0}  diverged = {}",
                        last.q50_h2, last.mean_neg_f, last.cum_ce, last.n_diverged
                    );
                }
            }
            let files = export_outcome(&outcome, &spec.output_dir)?;
            println!("wrote {} files to {}", files.len(), spec.output_dir.display());
        }
        Command::Verify { suite, trials, seed } => {
            let suite: Suite = suite.parse()?;
            let trials = match trials {
                None => None,
                Some(t) => Some(parse_count(&t)?),
            };
            let reports = run_suite(suite, VerifyConfig { trials, seed })?;
            for r in &reports {
                println!("{r}");
            }
            let failed = reports.iter().filter(|r| !r.passed).count();
            if failed > 0 {
                return Err(Failure::Verification(failed));
            }
        }
        Command::Plot { bench, out } => {
            let text = std::fs::read_to_string(&bench).map_err(|e| Error::Io {
                path: bench.clone(),
                source: e,
            })?;
            let result = BenchResult::from_csv(&text)?;
            let dir = out.unwrap_or_else(|| bench.parent().map(Path::to_path_buf).unwrap_or_default());
            let files = export_bench(&result, &dir)?;
            println!("wrote {} files to {}", files.len(), dir.display());
        }
    }
    Ok(())
}

fn parse_count(text: &str) -> Result<u64, Error> {
    let v: f64 = text
        .parse()
        .map_err(|_| Error::InvalidConfig(vec![format!("--trials: cannot parse {text:?}")]))?;
    if !((2.0..=1e12).contains(&v) && v.fract() == 0.0) {
        return Err(Error::InvalidConfig(vec![format!("--trials must be an integer >= 2, got {text}")]));
    }
    Ok(v as u64)
}

fn prep(input: &Path, header: bool, drop_constant: bool, pca: Option<usize>, whiten: bool, out: &Path) -> Result<(), Error> {
    let data = load_csv(input, header)?;
    let names: Option<Vec<String>> = if header {
        let text = std::fs::read_to_string(input).map_err(|e| Error::Io {
            path: input.to_path_buf(),
            source: e,
        })?;
        text.lines()
            .next()
            .map(|l| l.split(',').map(|s| s.trim().to_string()).collect())
    } else {
        None
    };
    let input_dim = data.dim();
    if let Some(k) = pca {
        if k == 0 || k > input_dim {
            return Err(Error::InvalidConfig(vec![format!(
                "--pca {k}: must be between 1 and the input dimension {input_dim}"
            )]));
        }
    }

    let (data, removed) = if drop_constant {
        drop_constant_columns(&data, 0.0)?
    } else {
        (data, Vec::new())
    };
    let (data, projection) = match pca {
        Some(k) if k > data.dim() => {
            return Err(Error::InvalidConfig(vec![format!(
                "--pca {k}: only {} columns remain after dropping constant ones",
                data.dim()
            )]))
        }
        Some(k) => {
            let (d, p) = pca_project(&data, k, whiten)?;
            (d, Some(p))
        }
        None => (data, None),
    };
    let header: Option<Vec<String>> = match (&projection, names) {
        (Some(p), _) => Some((1..=p.output_dim()).map(|j| format!("pc{j}")).collect()),
        (None, Some(names)) => Some(
            names
                .into_iter()
                .enumerate()
                .filter(|(c, _)| !removed.contains(c))
                .map(|(_, n)| n)
                .collect(),
        ),
        (None, None) => None,
    };
    std::fs::create_dir_all(out).map_err(|e| Error::Io {
        path: out.to_path_buf(),
        source: e,
    })?;
    write_csv(out.join("data.csv"), &data, header.as_deref())?;
    PipelineRecord {
        input_dim,
        removed_columns: removed,
        projection,
    }
    .save(out)?;
    println!("wrote {} x {} to {}", data.len(), data.dim(), out.join("data.csv").display());
    Ok(())
}
