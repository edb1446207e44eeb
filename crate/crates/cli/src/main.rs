use std::fs;
use std::io::Write as _;
use std::path::{Path as FsPath, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use markovgate::bandwidth::{select, BandwidthRule};
use markovgate::estimators::TripleSample;
use markovgate::harness::{
    configure_threads, render_report_csv, render_report_text, run_bootstrap_density, run_power, run_size,
    runner::target_for, test_series, write_outputs, ExperimentConfig,
};
use markovgate::models::{simulate, JumpType, ModelSpec, Path, SimConfig};
use markovgate::stats::StatisticKind;
use markovgate::MarkovError;

#[derive(Parser)]
#[command(name = "markovgate", version, about = "Nonparametric tests of the Markov property")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Ou,
    H1,
    H2,
    H3,
}

#[derive(Clone, Copy, ValueEnum)]
enum JumpArg {
    I,
    Ii,
}

#[derive(Clone, Copy, ValueEnum)]
enum StatArg {
    T0,
    T1,
    #[value(name = "t1_star")]
    T1Star,
    T2,
}

impl From<StatArg> for StatisticKind {
    fn from(s: StatArg) -> Self {
        match s {
            StatArg::T0 => StatisticKind::T0,
            StatArg::T1 => StatisticKind::T1,
            StatArg::T1Star => StatisticKind::T1Star,
            StatArg::T2 => StatisticKind::T2,
        }
    }
}

#[derive(Clone, Copy, ValueEnum, PartialEq)]
enum Format {
    Text,
    Csv,
}

#[derive(clap::Args)]
struct ExperimentArgs {
    /// JSON experiment config; defaults apply to missing fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// n = 2400, 1000 paths, three pooled bootstrap replicates per path.
    #[arg(long)]
    paper_scale: bool,
    /// Overrides `master_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `output_dir`.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Overrides `mc_reps`.
    #[arg(long)]
    mc_reps: Option<usize>,
    /// Overrides `sim.n_obs`.
    #[arg(long)]
    n: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a path and print it as `index,time,value` CSV.
    Simulate {
        #[arg(long, value_enum, default_value = "ou")]
        model: ModelArg,
        #[arg(long, default_value_t = 1200)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.0)]
        theta: f64,
        /// Latent-factor scale for h1 and h2.
        #[arg(long, default_value_t = 10.0)]
        s: f64,
        #[arg(long, value_enum, default_value = "i")]
        jump_type: JumpArg,
        #[arg(long, default_value_t = 1.0 / 52.0)]
        delta: f64,
        /// Write to a file instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Test one series for the Markov property.
    Test {
        /// CSV with `index,time,value` rows or a single value column.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "t1_star")]
        statistic: StatArg,
        /// Bootstrap replicates; 0 skips the bootstrap.
        #[arg(long, default_value_t = 99)]
        bootstrap: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Bandwidth rule and weights are read from this config.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
        /// Also write the report as CSV here.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Rejection rates under the null.
    Size(ExperimentArgs),
    /// Rejection rates over `theta_grid`.
    Power(ExperimentArgs),
    /// Monte Carlo versus pooled-bootstrap density of the statistic.
    BootstrapDensity(ExperimentArgs),
    /// Print the bandwidths the configured rule picks for a series.
    Bandwidth {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "t1_star")]
        statistic: StatArg,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

/// Failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<MarkovError> for Failure {
    fn from(e: MarkovError) -> Self {
        let code = match e {
            MarkovError::InvalidInput(_) | MarkovError::Io(_) => 2,
            _ => 3,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn config_error(message: String) -> Failure {
    Failure { code: 2, message }
}

fn load_config(path: Option<&FsPath>) -> Result<ExperimentConfig, Failure> {
    match path {
        None => Ok(ExperimentConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| config_error(format!("{}: {e}", p.display())))?;
            ExperimentConfig::from_json(&text).map_err(|e| config_error(format!("{}: {e}", p.display())))
        }
    }
}

fn experiment(args: &ExperimentArgs) -> Result<ExperimentConfig, Failure> {
    let mut cfg = load_config(args.config.as_deref())?;
    if args.paper_scale {
        cfg = cfg.paper_scale();
    }
    if let Some(s) = args.seed {
        cfg.master_seed = s;
    }
    if let Some(d) = &args.output_dir {
        cfg.output_dir = d.clone();
    }
    if let Some(r) = args.mc_reps {
        cfg.mc_reps = r;
    }
    if let Some(n) = args.n {
        cfg.sim.n_obs = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn read_series(path: &FsPath) -> Result<Path, Failure> {
    let file = fs::File::open(path).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
    Ok(Path::from_csv(std::io::BufReader::new(file), 1.0 / 52.0)?)
}

fn emit(cfg: &ExperimentConfig, command: &str, files: &[(&str, String)]) -> Result<(), Failure> {
    let manifest = write_outputs(&cfg.output_dir, command, cfg, files)?;
    print!("{}", files[0].1);
    eprintln!("wrote {}", manifest.display());
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    configure_threads()?;
    match cli.command {
        Command::Simulate {
            model,
            n,
            seed,
            theta,
            s,
            jump_type,
            delta,
            output,
        } => {
            let spec = match model {
                ModelArg::Ou => ModelSpec::ou(),
                ModelArg::H1 => ModelSpec::h1(theta, s),
                ModelArg::H2 => ModelSpec::h2(theta, s),
                ModelArg::H3 => ModelSpec::h3(
                    theta,
                    match jump_type {
                        JumpArg::I => JumpType::GaussianIid,
                        JumpArg::Ii => JumpType::CirDriven,
                    },
                ),
            };
            if spec.feller_warning() {
                eprintln!("warning: Feller condition fails; the variance factor touches zero");
            }
            let sim = SimConfig {
                delta,
                ..SimConfig::new(n, seed)
            };
            let csv = simulate(&spec, &sim)?.to_csv();
            match output {
                Some(p) => fs::write(&p, csv).map_err(MarkovError::from)?,
                None => std::io::stdout().write_all(csv.as_bytes()).map_err(MarkovError::from)?,
            }
        }
        Command::Test {
            input,
            statistic,
            bootstrap,
            seed,
            config,
            format,
            csv,
        } => {
            let cfg = load_config(config.as_deref())?;
            let path = read_series(&input)?;
            let report = test_series(&path, statistic.into(), &cfg.bandwidth, &cfg.weights, bootstrap, seed)?;
            let table = render_report_csv(&report);
            match format {
                Format::Text => print!("{}", render_report_text(&report)),
                Format::Csv => print!("{table}"),
            }
            if let Some(p) = csv {
                fs::write(p, table).map_err(MarkovError::from)?;
            }
        }
        Command::Size(args) => {
            let cfg = experiment(&args)?;
            let table = run_size(&cfg)?;
            emit(&cfg, "size", &[("size.csv", table.to_csv())])?;
        }
        Command::Power(args) => {
            let cfg = experiment(&args)?;
            let table = run_power(&cfg)?;
            emit(&cfg, "power", &[("power.csv", table.to_csv())])?;
        }
        Command::BootstrapDensity(args) => {
            let cfg = experiment(&args)?;
            let d = run_bootstrap_density(&cfg)?;
            eprintln!("kolmogorov distance {}", d.ks_distance);
            emit(
                &cfg,
                "bootstrap-density",
                &[
                    ("bootstrap_density.csv", d.to_csv()),
                    ("samples.csv", d.samples_csv()),
                    ("ks_distance.csv", format!("n_obs,ks_distance\n{},{}\n", d.n_obs, d.ks_distance)),
                ],
            )?;
        }
        Command::Bandwidth {
            input,
            statistic,
            config,
        } => {
            let rule: BandwidthRule = load_config(config.as_deref())?.bandwidth;
            let path = read_series(&input)?;
            let sample = TripleSample::from_path(&path.values, path.delta)?;
            let bw = select(&rule, &sample, target_for(statistic.into()))?;
            println!("h1,h2,h3,b1,b2");
            println!("{},{},{},{},{}", bw.h1, bw.h2, bw.h3, bw.b1, bw.b2);
            if bw.same_order_warning() {
                eprintln!("warning: h1 and h2 are of the same order");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
