use std::fs;
use std::io::{self, BufReader, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use csmc_core::harness::{plot_rows, read_csv_files, run_experiment, run_suite, write_experiment, ExperimentConfig, Suite};
use csmc_core::kernels::{IndexSelection, KernelConfig, SelectionVariant};
use csmc_core::limit_laws::{analytic_bounds, gauss_rw_moments, limit_acceptance_rates, LimitKernel};
use csmc_core::model::{kalman_smooth, read_observations_csv, simulate_observations, ModelPreset};
use csmc_core::params::{run_param_chain, ParamSampler, PrecisionModel, PrecisionPrior, PrecisionProposal};
use csmc_core::rng::stream;
use csmc_core::Error;

/// Conditional SMC smoothing experiments.
#[derive(Parser)]
#[command(name = "csmc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write results.csv (and SVG panels with plot=true).
    Run {
        /// key = value configuration file; defaults are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Extra key=value settings applied after the file.
        #[arg(long = "override", short = 'o', value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Run a validation suite: selection, invariance, ffbs, limits, bounds, params or all.
    Validate { suite: String },
    /// Render SVG panels from results CSV files.
    Plot {
        #[arg(required = true)]
        csv: Vec<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Sample the observation precision of the Gaussian random-walk model jointly with the path.
    Param {
        /// pg, pg-rwehmm, pg-rwcsmc, ehmm-alt or rwcsmc-alt
        #[arg(long, default_value = "pg")]
        sampler: String,
        #[arg(long, default_value_t = 10_000)]
        sweeps: usize,
        #[arg(long, default_value_t = 7)]
        n: usize,
        #[arg(long, default_value_t = 1.0)]
        ell: f64,
        #[arg(long = "T", default_value_t = 3)]
        horizon: usize,
        #[arg(long = "D", default_value_t = 1)]
        dim: usize,
        /// Mean of log precision under the prior.
        #[arg(long, default_value_t = 0.0)]
        prior_mean: f64,
        #[arg(long, default_value_t = 1.0)]
        prior_sd: f64,
        /// Scale of the random walk on log precision.
        #[arg(long, default_value_t = 1.0)]
        proposal_scale: f64,
        /// Metropolis-Hastings steps on the parameter per particle Gibbs sweep.
        #[arg(long, default_value_t = 1)]
        theta_steps: usize,
        /// Precision used to simulate observations when no file is given.
        #[arg(long, default_value_t = 2.0)]
        true_precision: f64,
        #[arg(long)]
        observations: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Trace CSV (theta,iteration,accepted); standard output if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Limiting acceptance rates and bounds per time step.
    Limits {
        #[arg(long = "T", default_value_t = 25)]
        horizon: usize,
        #[arg(long, default_value_t = 31)]
        n: usize,
        #[arg(long, default_value_t = 1.0)]
        ell: f64,
        #[arg(long, default_value = "gauss-rw")]
        model: String,
        #[arg(long)]
        forced_move: bool,
        /// trace or bs
        #[arg(long, default_value = "bs")]
        index_selection: String,
        /// Number of exact smoother draws, each of `batch_dim` components.
        #[arg(long, default_value_t = 200)]
        batches: usize,
        #[arg(long, default_value_t = 500)]
        batch_dim: usize,
        /// Limit-law replications.
        #[arg(long, default_value_t = 100_000)]
        reps: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Outcome {
    Ok,
    ValidationFailed,
}

fn init_threads(cfg_threads: Option<usize>) -> Result<(), Error> {
    let env = match std::env::var("CSMC_THREADS") {
        Ok(v) => Some(v.parse::<usize>().map_err(|_| Error::Config(format!("CSMC_THREADS='{v}' is not a count")))?),
        Err(_) => None,
    };
    if let Some(n) = env.or(cfg_threads) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn output(out: &Option<PathBuf>) -> Result<Box<dyn Write>, Error> {
    Ok(match out {
        Some(p) => Box::new(io::BufWriter::new(fs::File::create(p)?)),
        None => Box::new(io::BufWriter::new(io::stdout().lock())),
    })
}

fn run(cli: Cli) -> Result<Outcome, Error> {
    match cli.command {
        Command::Run { config, overrides } => {
            let mut cfg = match config {
                Some(p) => {
                    let text = fs::read_to_string(&p).map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
                    ExperimentConfig::parse(&text)?
                }
                None => ExperimentConfig::default(),
            };
            for o in &overrides {
                cfg.apply_override(o)?;
            }
            cfg.validate()?;
            init_threads(cfg.threads)?;
            let rows = run_experiment(&cfg)?;
            for f in write_experiment(&cfg, &rows)? {
                println!("{}", f.display());
            }
        }
        Command::Validate { suite } => {
            let suite: Suite = suite.parse()?;
            init_threads(None)?;
            let checks = run_suite(suite)?;
            for c in &checks {
                println!("{c}");
            }
            let failed = checks.iter().filter(|c| !c.pass).count();
            println!("{} checks, {} failed", checks.len(), failed);
            if failed > 0 {
                return Ok(Outcome::ValidationFailed);
            }
        }
        Command::Plot { csv, out } => {
            let rows = read_csv_files(&csv)?;
            for f in plot_rows(&rows, &out)? {
                println!("{}", f.display());
            }
        }
        Command::Param {
            sampler,
            sweeps,
            n,
            ell,
            horizon,
            dim,
            prior_mean,
            prior_sd,
            proposal_scale,
            theta_steps,
            true_precision,
            observations,
            seed,
            out,
        } => {
            let sampler: ParamSampler = sampler.parse()?;
            let (horizon, dim, y) = match observations {
                Some(p) => read_observations_csv(BufReader::new(fs::File::open(p)?))?,
                None => {
                    if !(true_precision > 0.0) {
                        return Err(Error::Config("true precision must be positive".into()));
                    }
                    let y = simulate_observations(horizon, dim, 1.0, 1.0 / true_precision, &mut stream(seed, "obs", &[]));
                    (horizon, dim, y)
                }
            };
            let tm = PrecisionModel::new(
                y,
                horizon,
                dim,
                PrecisionPrior::LogNormal { mean: prior_mean, sd: prior_sd },
                PrecisionProposal::LogRandomWalk { scale: proposal_scale },
            )?;
            let cfg = KernelConfig::new(n, SelectionVariant::Boltzmann, IndexSelection::BackwardSampling, ell);
            let mut rng = stream(seed, "chain", &[]);
            let tau0 = prior_mean.exp();
            let path0 = kalman_smooth(&tm.spec(tau0)?)?.sample_path(&mut rng);
            let trace = run_param_chain(&tm, sampler, &cfg, theta_steps, vec![tau0], path0, sweeps, &mut rng)?;
            let mut w = output(&out)?;
            writeln!(w, "theta,iteration,accepted")?;
            for (i, (t, a)) in trace.theta.iter().zip(&trace.accepted).enumerate() {
                writeln!(w, "{},{},{}", t[0], i + 1, u8::from(*a))?;
            }
            w.flush()?;
            eprintln!("{}: parameter acceptance rate {:.4}", sampler.name(), trace.acceptance_rate());
        }
        Command::Limits {
            horizon,
            n,
            ell,
            model,
            forced_move,
            index_selection,
            batches,
            batch_dim,
            reps,
            seed,
            out,
        } => {
            let preset: ModelPreset = model.parse()?;
            let idx: IndexSelection = index_selection.parse()?;
            let sel = if forced_move { SelectionVariant::ForcedMove } else { SelectionVariant::Boltzmann };
            init_threads(None)?;
            let m = gauss_rw_moments(horizon, preset.initial_variance(), batches, batch_dim, &[ell], seed)?;
            let rw = limit_acceptance_rates(&m, n, LimitKernel::RwCsmc(sel, idx), reps, seed)?;
            let eh = limit_acceptance_rates(&m, n, LimitKernel::RwEhmm, reps, seed)?;
            let mut w = output(&out)?;
            writeln!(w, "t,I,I_se,ell,rate,rate_se,esjd,ehmm_rate,ehmm_rate_se,bs_bound,rwmh_rate")?;
            for t in 0..horizon {
                let b = analytic_bounds(ell, m.i[t], n, None);
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{},{},{},{}",
                    t + 1,
                    m.i[t],
                    m.i_se[t],
                    ell,
                    rw[t].0,
                    rw[t].1,
                    ell * rw[t].0,
                    eh[t].0,
                    eh[t].1,
                    b.bs_bound,
                    b.rwmh_rate
                )?;
            }
            w.flush()?;
        }
    }
    Ok(Outcome::Ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::ValidationFailed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
