//! `irfsphere`: simulate intrinsic random fields on the sphere, estimate
//! their order, fit the covariance and krige.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use irfsphere::empirical::{bin_pairs, criterion, lag_profile, select_kappa_with, LagGrid, SelectionRule};
use irfsphere::fitting::{fit_r_with, BinSelection};
use irfsphere::icf::IcfModel;
use irfsphere::io;
use irfsphere::kriging::{rmse, KrigingModel};
use irfsphere::simulate::{simulate_field, SimulationConfig};
use irfsphere::study::{run_study, StudyConfig};
use irfsphere::{DatasetF64, Error};

#[derive(Parser, Debug)]
#[command(name = "irfsphere", version, about = "Intrinsic random functions on the sphere")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// JSON file with default values for any flag (flags win).
    #[arg(long, global = true, value_name = "JSON")]
    config: Option<PathBuf>,
    /// Seed for every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of equal-width lag bins over (0, pi].
    #[arg(long, global = true)]
    bins: Option<usize>,
    /// Criterion rows j = 0..jmax-1.
    #[arg(long, global = true)]
    jmax: Option<usize>,
    /// Ratio used by the kappa selection rule.
    #[arg(long, global = true)]
    threshold: Option<f64>,
    /// Measurement-error variance.
    #[arg(long, global = true)]
    sigma2: Option<f64>,
    /// Output file (a directory for `reproduce-study`).
    #[arg(short, long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    /// More log output (repeat for more).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a field; writes the observation CSV and a tau sidecar.
    Simulate(SimulateArgs),
    /// Compute the criterion table and estimate kappa.
    EstimateKappa(EstimateArgs),
    /// Fit the decay parameter r by weighted least squares.
    Fit(FitArgs),
    /// Predict at target locations.
    Krige(KrigeArgs),
    /// Run the ordinary versus universal kriging study.
    ReproduceStudy(StudyArgs),
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Order of non-homogeneity.
    #[arg(long)]
    kappa: Option<usize>,
    /// Decay parameter in [0, 1).
    #[arg(long)]
    r: Option<f64>,
    /// Number of uniform locations.
    #[arg(long)]
    n: Option<usize>,
    /// Anchor points as a JSON list of [psi, zeta].
    #[arg(long, value_name = "JSON")]
    tau: Option<PathBuf>,
    /// Where to write the anchors; defaults to the output with extension `tau.json`.
    #[arg(long, value_name = "JSON")]
    tau_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DataArgs {
    /// Observation CSV.
    #[arg(long, value_name = "CSV")]
    data: Option<PathBuf>,
    /// Coordinates are `lon_deg,lat_deg` instead of `psi_rad,zeta_rad`.
    #[arg(long)]
    degrees: bool,
}

#[derive(Args, Debug)]
struct EstimateArgs {
    #[command(flatten)]
    input: DataArgs,
    /// Rule reading kappa off the criterion table.
    #[arg(long, value_enum)]
    rule: Option<Rule>,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[command(flatten)]
    input: DataArgs,
    /// Order to fit at; estimated from the criterion when absent.
    #[arg(long)]
    kappa: Option<usize>,
    /// Rule reading kappa off the criterion table.
    #[arg(long, value_enum)]
    rule: Option<Rule>,
    /// Bins entering the fit: the leading lobe or all of them.
    #[arg(long, value_enum)]
    fit_bins: Option<FitBins>,
}

#[derive(Args, Debug)]
struct KrigeArgs {
    #[command(flatten)]
    input: DataArgs,
    /// Fit report written by `fit`.
    #[arg(long, value_name = "JSON")]
    fit: Option<PathBuf>,
    /// Target locations; a value column is read as the truth with `--truth`.
    #[arg(long, value_name = "CSV")]
    targets: Option<PathBuf>,
    /// Compare with the target values and report the RMSE.
    #[arg(long)]
    truth: bool,
}

#[derive(Args, Debug)]
struct StudyArgs {
    /// Locations per simulated field.
    #[arg(long)]
    n: Option<usize>,
    /// Decay parameter in [0, 1).
    #[arg(long)]
    r: Option<f64>,
    /// True orders to simulate.
    #[arg(long, value_delimiter = ',')]
    kappas: Option<Vec<usize>>,
    /// Share of each field used for training.
    #[arg(long)]
    train_fraction: Option<f64>,
    /// Rule reading kappa off the criterion table.
    #[arg(long, value_enum)]
    rule: Option<Rule>,
    /// Bins in the universal kriging fit.
    #[arg(long, value_enum)]
    uk_fit_bins: Option<FitBins>,
    /// Bins in the ordinary kriging fit.
    #[arg(long, value_enum)]
    ok_fit_bins: Option<FitBins>,
}

#[derive(Clone, Copy, Debug, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum Rule {
    LargestDrop,
    Plateau,
}

impl From<Rule> for SelectionRule {
    fn from(rule: Rule) -> Self {
        match rule {
            Rule::LargestDrop => SelectionRule::LargestDrop,
            Rule::Plateau => SelectionRule::Plateau,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum FitBins {
    Lobe,
    All,
}

impl From<FitBins> for BinSelection {
    fn from(bins: FitBins) -> Self {
        match bins {
            FitBins::Lobe => BinSelection::LeadingLobe,
            FitBins::All => BinSelection::All,
        }
    }
}

/// Values read from `--config`; every key is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    bins: Option<usize>,
    jmax: Option<usize>,
    threshold: Option<f64>,
    sigma2: Option<f64>,
    out: Option<PathBuf>,
    kappa: Option<usize>,
    r: Option<f64>,
    n: Option<usize>,
    tau: Option<PathBuf>,
    tau_out: Option<PathBuf>,
    data: Option<PathBuf>,
    degrees: Option<bool>,
    rule: Option<Rule>,
    fit_bins: Option<FitBins>,
    fit: Option<PathBuf>,
    targets: Option<PathBuf>,
    truth: Option<bool>,
    kappas: Option<Vec<usize>>,
    train_fraction: Option<f64>,
    uk_fit_bins: Option<FitBins>,
    ok_fit_bins: Option<FitBins>,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

type CliResult<T> = Result<T, Failure>;

fn required<T>(value: Option<T>, flag: &str) -> CliResult<T> {
    value.ok_or_else(|| Failure::Usage(format!("missing required value `--{flag}` (flag or config key)")))
}

/// Settings shared by the subcommands after merging flags over the file.
struct Settings {
    seed: u64,
    bins: usize,
    jmax: usize,
    threshold: f64,
    sigma2: f64,
    out: Option<PathBuf>,
}

impl Settings {
    fn out(&self) -> CliResult<&Path> {
        self.out.as_deref().ok_or_else(|| Failure::Usage("missing required output path `--out`".into()))
    }

    fn grid(&self) -> CliResult<LagGrid<f64>> {
        Ok(LagGrid::uniform(self.bins)?)
    }
}

fn load_config(path: Option<&Path>) -> CliResult<FileConfig> {
    let Some(path) = path else { return Ok(FileConfig::default()) };
    let text = std::fs::read_to_string(path).map_err(|e| Error::Invalid(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("config {}: {e}", path.display())))
}

fn read_data(args: &DataArgs, file: &FileConfig, sigma2: f64) -> CliResult<DatasetF64> {
    let path = required(args.data.clone().or(file.data.clone()), "data")?;
    let degrees = args.degrees || file.degrees.unwrap_or(false);
    Ok(io::read_observations(&path, degrees, sigma2)?)
}

fn print_table(table: &irfsphere::CriterionTableF64) {
    print!("{}", io::criterion_csv(table));
}

fn simulate(args: SimulateArgs, file: &FileConfig, s: &Settings) -> CliResult<()> {
    let out = s.out()?;
    let mut config = SimulationConfig::new(
        required(args.kappa.or(file.kappa), "kappa")?,
        required(args.r.or(file.r), "r")?,
        required(args.n.or(file.n), "n")?,
        s.seed,
    );
    if let Some(tau) = args.tau.or(file.tau.clone()) {
        config.tau = Some(io::read_tau(&tau)?);
    }
    let sim = simulate_field(&config)?;
    io::write_observations(out, &sim.data)?;
    let tau_out = args.tau_out.or(file.tau_out.clone()).unwrap_or_else(|| out.with_extension("tau.json"));
    io::write_tau(&tau_out, &sim.tau)?;
    println!("wrote {} observations to {} and {} anchors to {}", sim.data.len(), out.display(), sim.tau.len(), tau_out.display());
    Ok(())
}

fn estimate_kappa(args: EstimateArgs, file: &FileConfig, s: &Settings) -> CliResult<()> {
    let out = s.out()?;
    let data = read_data(&args.input, file, s.sigma2)?;
    let table = criterion(&data, &s.grid()?, s.jmax)?;
    let rule = args.rule.or(file.rule).map_or_else(SelectionRule::default, Into::into);
    let estimate = select_kappa_with(&table, s.threshold, rule)?;
    io::write_text(out, &io::criterion_csv(&table))?;
    let title = format!("criterion M(j), kappa estimate {}", estimate.kappa);
    io::write_text(&out.with_extension("svg"), &io::criterion_svg(&table, &title))?;
    println!("kappa_hat={}", estimate.kappa);
    print_table(&table);
    Ok(())
}

fn fit(args: FitArgs, file: &FileConfig, s: &Settings) -> CliResult<()> {
    let data = read_data(&args.input, file, s.sigma2)?;
    let grid = s.grid()?;
    let selection = args.fit_bins.or(file.fit_bins).map_or_else(BinSelection::default, Into::into);
    let profile = match args.kappa.or(file.kappa) {
        Some(kappa) => {
            let bins = bin_pairs(data.points(), &grid)?;
            lag_profile(&data, &grid, &bins, kappa)?
        }
        None => {
            let table = criterion(&data, &grid, s.jmax)?;
            let rule = args.rule.or(file.rule).map_or_else(SelectionRule::default, Into::into);
            let estimate = select_kappa_with(&table, s.threshold, rule)?;
            log::info!("estimated kappa {}", estimate.kappa);
            table.profile(estimate.kappa)?
        }
    };
    let report = io::FitReport::from(&fit_r_with(&profile, selection)?);
    if let Some(out) = &s.out {
        io::write_fit(out, &report)?;
    }
    println!("{}", serde_json::to_string(&report).map_err(Error::from)?);
    Ok(())
}

fn krige(args: KrigeArgs, file: &FileConfig, s: &Settings) -> CliResult<()> {
    let out = s.out()?;
    let data = read_data(&args.input, file, s.sigma2)?;
    let report = io::read_fit(&required(args.fit.or(file.fit.clone()), "fit")?)?;
    let degrees = args.input.degrees || file.degrees.unwrap_or(false);
    let targets = io::read_points(&required(args.targets.or(file.targets.clone()), "targets")?, degrees)?;
    let truth = if args.truth || file.truth.unwrap_or(false) {
        Some(targets.values.as_deref().ok_or_else(|| {
            Error::Invalid("--truth needs a value column in the targets file".into())
        })?)
    } else {
        None
    };
    let model = KrigingModel::new(data, IcfModel::new(report.kappa, report.r_hat)?)?;
    let predictions = model.predict(&targets.points)?;
    io::write_predictions(out, &targets.points, &predictions, truth)?;
    match truth {
        Some(t) => println!("rmse={:e}", rmse(&predictions, t)?),
        None => println!("wrote {} predictions to {}", predictions.len(), out.display()),
    }
    Ok(())
}

fn reproduce_study(args: StudyArgs, file: &FileConfig, s: &Settings) -> CliResult<()> {
    let dir = s.out()?;
    let base = StudyConfig::default();
    let config = StudyConfig {
        seed: s.seed,
        n: args.n.or(file.n).unwrap_or(base.n),
        r: args.r.or(file.r).unwrap_or(base.r),
        kappas: args.kappas.or(file.kappas.clone()).unwrap_or(base.kappas),
        train_fraction: args.train_fraction.or(file.train_fraction).unwrap_or(base.train_fraction),
        bins: s.bins,
        j_max: s.jmax,
        threshold: s.threshold,
        sigma2: s.sigma2,
        rule: args.rule.or(file.rule).map_or(base.rule, Into::into),
        uk_fit_bins: args.uk_fit_bins.or(file.uk_fit_bins).map_or(base.uk_fit_bins, Into::into),
        ok_fit_bins: args.ok_fit_bins.or(file.ok_fit_bins).map_or(base.ok_fit_bins, Into::into),
    };
    std::fs::create_dir_all(dir).map_err(Error::from)?;
    let report = run_study(&config);
    io::write_text(&dir.join("study.csv"), &report.to_csv())?;
    io::write_text(&dir.join("study.md"), &report.to_markdown())?;
    for (kappa, table) in &report.criteria {
        if let Ok(table) = table {
            io::write_text(&dir.join(format!("criterion_kappa{kappa}.csv")), &io::criterion_csv(table))?;
            let title = format!("criterion M(j), simulated IRF{kappa}");
            io::write_text(&dir.join(format!("criterion_kappa{kappa}.svg")), &io::criterion_svg(table, &title))?;
        }
    }
    print!("{}", report.to_markdown());
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    let file = load_config(cli.global.config.as_deref())?;
    let g = cli.global;
    let settings = Settings {
        seed: g.seed.or(file.seed).unwrap_or(StudyConfig::default().seed),
        bins: g.bins.or(file.bins).unwrap_or(irfsphere::empirical::DEFAULT_BINS),
        jmax: g.jmax.or(file.jmax).unwrap_or(irfsphere::empirical::DEFAULT_JMAX),
        threshold: g.threshold.or(file.threshold).unwrap_or(irfsphere::empirical::DEFAULT_THRESHOLD),
        sigma2: g.sigma2.or(file.sigma2).unwrap_or(0.0),
        out: g.out.or(file.out.clone()),
    };
    match cli.command {
        Command::Simulate(a) => simulate(a, &file, &settings),
        Command::EstimateKappa(a) => estimate_kappa(a, &file, &settings),
        Command::Fit(a) => fit(a, &file, &settings),
        Command::Krige(a) => krige(a, &file, &settings),
        Command::ReproduceStudy(a) => reproduce_study(a, &file, &settings),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("irfsphere: usage error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            eprintln!("irfsphere: error: {}", e.to_string().replace('\n', " "));
            ExitCode::from(if e.is_numerical() { 4 } else { 3 })
        }
    }
}
