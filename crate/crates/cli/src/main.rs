//! `rtransfer`: simulations, single fits, screening and sampling
//! probabilities from the command line.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 parse error, 3 invalid input.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use robust_transfer::config::ExperimentConfig;
use robust_transfer::estimator::{fit_ols, SolverSettings};
use robust_transfer::io::{read_dataset, read_numeric_table, write_probabilities, write_tuning_report, format_float};
use robust_transfer::sampling::{
    leverage_norms, optimal_probabilities, osmac_probabilities, poisson_sample, rng_from_seed, target_guided_select,
    uniform_probabilities, SamplingProbabilities,
};
use robust_transfer::screening::screen_covariates;
use robust_transfer::simulation::run_experiment;
use robust_transfer::tuning::{lambda_grid_with_ratio, select_lambda, Criterion, DEFAULT_GRID_RATIO};
use robust_transfer::{assemble_problem, Error, PenaltyKind, PenaltySpec, SubsampleSelection};

#[derive(Parser)]
#[command(name = "rtransfer", version, about = "Robust transfer learning from a contaminated external sample")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte-Carlo study described by a JSON config and write the results CSV.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Worker threads; overrides the config.
        #[arg(long)]
        workers: Option<usize>,
        /// Output CSV; overrides the config. Standard output when neither is set.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Fit the fused estimator on a target and an external CSV; prints JSON.
    Fit {
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        external: PathBuf,
        #[arg(long, value_enum, default_value_t = PenaltyArg::L1)]
        penalty: PenaltyArg,
        #[arg(long, value_enum, default_value_t = Sampler::Full)]
        sampler: Sampler,
        /// Sampling rate in (0, 1]; ignored by the full sampler.
        #[arg(long, default_value_t = 1.0)]
        rate: f64,
        #[arg(long, value_enum, default_value_t = CriterionArg::Aic)]
        criterion: CriterionArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        grid_size: usize,
        #[arg(long, default_value_t = DEFAULT_GRID_RATIO)]
        grid_ratio: f64,
        /// Also write the per-λ tuning table to this CSV.
        #[arg(long)]
        tuning_report: Option<PathBuf>,
        #[arg(long)]
        no_intercept: bool,
    },
    /// Marginal t-tests with Benjamini–Hochberg selection on a target CSV.
    Screen {
        #[arg(long)]
        target: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        q: f64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Export sampling probabilities for an external CSV.
    Probs {
        #[arg(long)]
        external: PathBuf,
        #[arg(long, value_enum)]
        scheme: Scheme,
        #[arg(long)]
        rate: f64,
        /// Target CSV used for the OSMAC pilot fit.
        #[arg(long)]
        target: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        no_intercept: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PenaltyArg {
    L1,
    L2,
}

#[derive(Clone, Copy, ValueEnum)]
enum CriterionArg {
    Aic,
    Bic,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Sampler {
    Full,
    Uniform,
    Leverage,
    Osmac,
    #[value(alias = "target-guided")]
    Tg,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scheme {
    Uniform,
    Leverage,
    Osmac,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::ConfigParse { .. } | Error::Csv(_) => 2,
        Error::ConfigValidation { .. }
        | Error::DimensionMismatch(_)
        | Error::ColumnCountMismatch { .. }
        | Error::NonFiniteEntry { .. }
        | Error::IndexOutOfRange { .. }
        | Error::UnderdeterminedProblem { .. }
        | Error::RateOutOfRange { .. }
        | Error::InvalidArgument(_)
        | Error::EmptyInput => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { config, workers, output } => simulate(&config, workers, output),
        Command::Fit {
            target,
            external,
            penalty,
            sampler,
            rate,
            criterion,
            seed,
            grid_size,
            grid_ratio,
            tuning_report,
            no_intercept,
        } => fit(FitArgs {
            target,
            external,
            penalty,
            sampler,
            rate,
            criterion,
            seed,
            grid_size,
            grid_ratio,
            tuning_report,
            intercept: !no_intercept,
        }),
        Command::Screen { target, q, output } => screen(&target, q, output),
        Command::Probs { external, scheme, rate, target, output, no_intercept } => {
            probs(&external, scheme, rate, target.as_deref(), output, !no_intercept)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>, Error> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn simulate(config: &Path, workers: Option<usize>, output: Option<PathBuf>) -> Result<(), Error> {
    let mut cfg = ExperimentConfig::from_path(config)?;
    if let Some(w) = workers {
        cfg.workers = w;
        cfg.validate()?;
    }
    let results = run_experiment(&cfg)?;
    let target = output.or(cfg.output.clone());
    let mut out = open_output(target.as_deref())?;
    results.write_csv(&mut out)?;
    out.flush()?;
    Ok(())
}

struct FitArgs {
    target: PathBuf,
    external: PathBuf,
    penalty: PenaltyArg,
    sampler: Sampler,
    rate: f64,
    criterion: CriterionArg,
    seed: u64,
    grid_size: usize,
    grid_ratio: f64,
    tuning_report: Option<PathBuf>,
    intercept: bool,
}

fn fit(args: FitArgs) -> Result<(), Error> {
    let target = read_dataset(&args.target, args.intercept)?;
    let external = read_dataset(&args.external, args.intercept)?;
    if target.n_cols() != external.n_cols() {
        return Err(Error::DimensionMismatch(format!(
            "target has {} columns, external has {}",
            target.n_cols(),
            external.n_cols()
        )));
    }
    if args.sampler != Sampler::Full && !(args.rate > 0.0 && args.rate <= 1.0) {
        return Err(Error::InvalidArgument(format!("rate {} outside (0, 1]", args.rate)));
    }
    let n = external.n_rows();
    let r = args.rate * n as f64;
    let mut rng = rng_from_seed(args.seed);
    let selection = match args.sampler {
        Sampler::Full => SubsampleSelection::full(n),
        Sampler::Uniform => poisson_sample(&uniform_probabilities(n, r)?, &mut rng),
        Sampler::Leverage => poisson_sample(&optimal_probabilities(external.x(), r)?, &mut rng),
        Sampler::Osmac => {
            let pilot = fit_ols(&target)?;
            poisson_sample(&osmac_probabilities(external.x(), external.y(), &pilot, r)?.probs, &mut rng)
        }
        Sampler::Tg => {
            let pilot = fit_ols(&target)?;
            target_guided_select(&external, &pilot, (r.round() as usize).clamp(1, n))?
        }
    };
    let kind = match args.penalty {
        PenaltyArg::L1 => PenaltyKind::L1,
        PenaltyArg::L2 => PenaltyKind::L2,
    };
    let criterion = match args.criterion {
        CriterionArg::Aic => Criterion::Aic,
        CriterionArg::Bic => Criterion::Bic,
    };
    let problem = assemble_problem(&target, &external, &selection, PenaltySpec::new(kind, 1.0)?)?;
    let grid = lambda_grid_with_ratio(&problem, args.grid_size, args.grid_ratio)?;
    let (fit, report) = select_lambda(&problem, &grid, criterion, &SolverSettings::default())?;
    if let Some(path) = &args.tuning_report {
        let mut out = open_output(Some(path))?;
        write_tuning_report(&mut out, &report)?;
        out.flush()?;
    }
    let criteria = fit.criteria;
    let value = json!({
        "beta": fit.beta.as_slice(),
        "lambda": fit.penalty.lambda(),
        "penalty": match kind { PenaltyKind::L1 => "l1", PenaltyKind::L2 => "l2" },
        "df": criteria.map(|c| c.df),
        "aic": criteria.map(|c| c.aic),
        "bic": criteria.map(|c| c.bic),
        "selection_size": selection.len(),
        "converged": fit.converged,
        "iterations": fit.iterations,
    });
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, &value).map_err(|e| Error::Io(e.to_string()))?;
    writeln!(out)?;
    Ok(())
}

fn screen(target: &Path, q: f64, output: Option<PathBuf>) -> Result<(), Error> {
    let file = File::open(target).map_err(|e| Error::Csv(format!("{}: {e}", target.display())))?;
    let (header, _) = read_numeric_table(file)?;
    // screening runs on the raw covariates, without an intercept column
    let data = read_dataset(target, false)?;
    if data.n_rows() <= 2 {
        return Err(Error::InvalidArgument(format!("screening needs more than 2 rows, got {}", data.n_rows())));
    }
    let result = screen_covariates(data.x(), data.y(), q)?;
    let mut out = open_output(output.as_deref())?;
    writeln!(out, "covariate,name,t_stat,p_value,selected,fdr_level")?;
    for (j, test) in result.tests.iter().enumerate() {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            j + 1,
            header[j],
            format_float(test.t_stat),
            format_float(test.p_value),
            test.selected,
            format_float(result.fdr_level)
        )?;
    }
    out.flush()?;
    Ok(())
}

fn probs(
    external: &Path,
    scheme: Scheme,
    rate: f64,
    target: Option<&Path>,
    output: Option<PathBuf>,
    intercept: bool,
) -> Result<(), Error> {
    let data = read_dataset(external, intercept)?;
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(Error::InvalidArgument(format!("rate {rate} outside (0, 1]")));
    }
    let n = data.n_rows();
    let r = rate * n as f64;
    let (scores, probs): (Vec<f64>, SamplingProbabilities) = match scheme {
        Scheme::Uniform => (vec![1.0; n], uniform_probabilities(n, r)?),
        Scheme::Leverage => (leverage_norms(data.x())?, optimal_probabilities(data.x(), r)?),
        Scheme::Osmac => {
            let target = target.ok_or_else(|| Error::InvalidArgument("osmac needs --target for the pilot fit".into()))?;
            let target = read_dataset(target, intercept)?;
            if target.n_cols() != data.n_cols() {
                return Err(Error::DimensionMismatch(format!(
                    "target has {} columns, external has {}",
                    target.n_cols(),
                    data.n_cols()
                )));
            }
            let pilot = fit_ols(&target)?;
            let osmac = osmac_probabilities(data.x(), data.y(), &pilot, r)?;
            (osmac.scores, osmac.probs)
        }
    };
    let mut out = open_output(output.as_deref())?;
    write_probabilities(&mut out, &scores, &probs)?;
    out.flush()?;
    Ok(())
}
