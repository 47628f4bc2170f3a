//! Command-line harness: kernel inspection, Kac-Rice predictions, GOI
//! estimates, and the batch experiments behind the paper-style figures.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numeric/convergence error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use spherecrit_cli::config::{ExperimentConfig, KernelSpec, Scale};
use spherecrit_cli::experiments;
use spherecrit_core::goi::{goi_expectation_mc, goi_expectation_oracle, GoiParams, IndexSelector};
use spherecrit_core::kernel::DEFAULT_SPARSE_TOL;
use spherecrit_core::Error;

#[derive(Parser)]
#[command(name = "spherecrit", version, about = "Critical points of random network fields on the sphere")]
struct Cli {
    /// Master seed for all randomized work
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker thread cap (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory for experiment reports
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Restore the full experiment sizes (1000 replicas, width 1000)
    #[arg(long, global = true)]
    paper_scale: bool,
    /// Monte Carlo samples per expectation
    #[arg(long, global = true)]
    mc_samples: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct KernelArgs {
    /// Activation family: gaussian, relu, tanh
    #[arg(long, default_value = "gaussian")]
    activation: String,
    /// Squared width parameter of the gaussian activation
    #[arg(long, default_value_t = 1.0)]
    a2: f64,
    /// Bias variance in [0, 1)
    #[arg(long, default_value_t = 0.0)]
    lambda_b: f64,
}

impl KernelArgs {
    fn spec(&self) -> Result<KernelSpec, Error> {
        match self.activation.as_str() {
            "gaussian" => Ok(KernelSpec::Gaussian {
                a2: self.a2,
                lambda_b: self.lambda_b,
            }),
            "relu" => Ok(KernelSpec::Relu {
                lambda_b: self.lambda_b,
            }),
            "tanh" => Ok(KernelSpec::Tanh {
                lambda_b: self.lambda_b,
            }),
            other => Err(Error::Argument(format!(
                "unknown activation '{other}' (expected gaussian, relu, tanh)"
            ))),
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Print the kernel (coefficients, derivatives, regularity) as JSON
    KernelInfo(KernelArgs),
    /// Classify the kernel regime from kappa'(1)
    Regime {
        #[command(flatten)]
        kernel: KernelArgs,
        #[arg(long, default_value_t = DEFAULT_SPARSE_TOL)]
        tolerance: f64,
    },
    /// Expected critical-point count of the depth-L limit field
    Predict {
        #[command(flatten)]
        kernel: KernelArgs,
        #[arg(long)]
        depth: usize,
        #[arg(long)]
        index: usize,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long, default_value_t = 2)]
        dim: usize,
    },
    /// Monte Carlo GOI eigenvalue expectation
    GoiEstimate {
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        c: f64,
        #[arg(long)]
        index: usize,
        #[arg(long, default_value_t = 0.0)]
        shift: f64,
        /// use the direct eigenvalue oracle instead of the Gaussian estimator
        #[arg(long)]
        oracle: bool,
    },
    /// Simulated vs predicted extrema counts across depths (figure 1)
    FigCritical(ExperimentArgs),
    /// Running Monte Carlo estimate of the constant A_0 (figure 2)
    FigMonte(ExperimentArgs),
    /// Variance explained by the first lmax multipoles per depth (figure 3)
    FigVariance(ExperimentArgs),
    /// Shallow-network extrema counts per activation and resolution (table 2)
    TableRelu(ExperimentArgs),
    /// Thresholded counts, theory vs spectral simulation
    ThresholdSweep(ExperimentArgs),
}

#[derive(Args, Clone)]
struct ExperimentArgs {
    /// JSON config file mirroring ExperimentConfig; flags override it
    #[arg(long)]
    config: Option<PathBuf>,
}

fn load_config(
    name: &str,
    args: &ExperimentArgs,
    cli_seed: Option<u64>,
    cli_out: &Option<PathBuf>,
    cli_mc: Option<usize>,
    paper: bool,
) -> Result<ExperimentConfig, Error> {
    let scale = if paper { Scale::Paper } else { Scale::Desk };
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            serde_json::from_str::<ExperimentConfig>(&text)
                .map_err(|e| Error::Argument(format!("bad config file: {e}")))?
        }
        None => ExperimentConfig::preset(name, scale),
    };
    if cfg.name != name {
        cfg.name = name.to_string();
    }
    if let Some(s) = cli_seed {
        cfg.seed = s;
    }
    if let Some(out) = cli_out {
        cfg.output_dir = out.clone();
    }
    if let Some(mc) = cli_mc {
        cfg.mc_samples = mc;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Error> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Argument(format!("thread pool: {e}")))?;
    }
    let seed = cli.seed;
    let mc = cli.mc_samples.unwrap_or(1_000_000);
    match &cli.cmd {
        Cmd::KernelInfo(args) => {
            let kernel = args.spec()?.kernel()?;
            println!("{}", serde_json::to_string_pretty(&kernel).unwrap());
        }
        Cmd::Regime { kernel, tolerance } => {
            let k = kernel.spec()?.kernel()?;
            let regime = k.classify(*tolerance);
            println!("{}", serde_json::to_string_pretty(&regime).unwrap());
        }
        Cmd::Predict {
            kernel,
            depth,
            index,
            threshold,
            dim,
        } => {
            let pred = experiments::predict(
                &kernel.spec()?,
                *depth,
                *dim,
                *index,
                *threshold,
                mc,
                seed.unwrap_or(2024),
            )?;
            println!("{}", serde_json::to_string_pretty(&pred).unwrap());
        }
        Cmd::GoiEstimate {
            dim,
            c,
            index,
            shift,
            oracle,
        } => {
            let params = GoiParams::new(*dim, *c)?;
            let sel = IndexSelector::new(*index, *shift);
            let est = if *oracle {
                goi_expectation_oracle(&params, &sel, mc, seed.unwrap_or(2024))?
            } else {
                goi_expectation_mc(&params, &sel, mc, seed.unwrap_or(2024))?
            };
            println!("{}", serde_json::to_string_pretty(&est).unwrap());
        }
        Cmd::FigCritical(args) => {
            let cfg = load_config("fig-critical", args, seed, &cli.out, cli.mc_samples, cli.paper_scale)?;
            let (path, _) = experiments::fig_critical(&cfg)?;
            eprintln!("wrote {}", path.display());
        }
        Cmd::FigMonte(args) => {
            let cfg = load_config("fig-monte", args, seed, &cli.out, cli.mc_samples, cli.paper_scale)?;
            let (path, _) = experiments::fig_monte(&cfg)?;
            eprintln!("wrote {}", path.display());
        }
        Cmd::FigVariance(args) => {
            let cfg = load_config("fig-variance", args, seed, &cli.out, cli.mc_samples, cli.paper_scale)?;
            let (path, _) = experiments::fig_variance(&cfg)?;
            eprintln!("wrote {}", path.display());
        }
        Cmd::TableRelu(args) => {
            let cfg = load_config("table-relu", args, seed, &cli.out, cli.mc_samples, cli.paper_scale)?;
            let (path, _) = experiments::table_relu(&cfg)?;
            eprintln!("wrote {}", path.display());
        }
        Cmd::ThresholdSweep(args) => {
            let cfg = load_config("threshold-sweep", args, seed, &cli.out, cli.mc_samples, cli.paper_scale)?;
            let (path, _) = experiments::threshold_sweep(&cfg)?;
            eprintln!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Argument(_) | Error::Parameter(_) | Error::Regime(_) | Error::Io(_) => {
                    ExitCode::from(2)
                }
                Error::Convergence(_)
                | Error::Numeric(_)
                | Error::Degeneracy { .. }
                | Error::UnsupportedKernel(_) => ExitCode::from(3),
            }
        }
    }
}
