use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lsdd_core::applications::{
    change_scores, class_balance_estimate, class_balance_estimate_kde, default_pi_grid, top_peaks, ChangeConfig,
    ClassBalanceResult, LabeledSet, Scorer,
};
use lsdd_core::data::{gen_class_balance, gen_gaussian_shift, gen_outlier_mixture, gen_step_series, load_csv, write_csv};
use lsdd_core::experiment::{run_experiment, ExperimentConfig, ExperimentKind};
use lsdd_core::kde::{default_bandwidths, kde_fit_cv, kde_l2};
use lsdd_core::kliep::KliepOptions;
use lsdd_core::lsdd::{median_sigma_grid, DEFAULT_LAMBDAS, DEFAULT_SIGMA_COUNT};
use lsdd_core::rng::seeded;
use lsdd_core::two_sample::{KliepStatistic, LsddStatistic, TwoSampleStatistic};
use lsdd_core::{fit_cv, lsdd_l2, permutation_test, CvOptions, ErrorKind, HyperGrid, SampleSet};
use serde_json::json;

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] lsdd_core::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(e) => match e.kind() {
                ErrorKind::Usage => 1,
                ErrorKind::Data => 2,
                ErrorKind::Numerical => 3,
            },
            CliError::Io(_) | CliError::Json(_) => 2,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Parser)]
#[command(name = "lsdd", version, about = "Density-difference estimation and L2-distance tools")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Base random seed [default: 0]
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Cross-validation folds [default: 5]
    #[arg(long, global = true)]
    folds: Option<usize>,
    /// Comma-separated kernel widths; median heuristic when absent
    #[arg(long, global = true, value_delimiter = ',')]
    sigma_grid: Option<Vec<f64>>,
    /// Comma-separated regularization strengths
    #[arg(long, global = true, value_delimiter = ',')]
    lambda_grid: Option<Vec<f64>>,
    /// Upper bound on kernel centers [default: 300]
    #[arg(long, global = true)]
    max_centers: Option<usize>,
    /// Output file (stdout when absent); for `experiment`, the base path of
    /// the `.csv` and `.json` pair
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Input CSV files start with a header row
    #[arg(long, global = true)]
    header: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum Statistic {
    Lsdd,
    Kliep,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Lsdd,
    Kde,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScorerArg {
    Combined,
    PositivePart,
    Kliep,
}

#[derive(Args)]
struct Pair {
    /// Samples from p, one point per row
    #[arg(long)]
    x: PathBuf,
    /// Samples from p'
    #[arg(long)]
    x_prime: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the density difference p - p' by cross-validation
    Fit(Pair),
    /// Estimate the squared L2 distance between p and p'
    L2 {
        #[command(flatten)]
        pair: Pair,
        /// Also report the KDE plug-in estimate
        #[arg(long)]
        kde: bool,
    },
    /// Permutation two-sample test
    Test {
        #[command(flatten)]
        pair: Pair,
        #[arg(long, default_value_t = 100)]
        permutations: usize,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, value_enum, default_value_t = Statistic::Lsdd)]
        statistic: Statistic,
    },
    /// Estimate the positive-class prior of an unlabeled test set
    ClassBalance {
        /// Labeled training points; the last column holds +1 or -1
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long, value_enum, default_value_t = Method::Lsdd)]
        method: Method,
        /// Number of equally spaced prior values in [0, 1]
        #[arg(long, default_value_t = 101)]
        grid_points: usize,
    },
    /// Change scores over a time series (one observation per row)
    ChangeDetect {
        #[arg(long)]
        series: PathBuf,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, default_value_t = 50)]
        r: usize,
        #[arg(long, default_value_t = 1)]
        stride: usize,
        #[arg(long, value_enum, default_value_t = ScorerArg::Combined)]
        scorer: ScorerArg,
        /// Mark this many separated score maxima
        #[arg(long, default_value_t = 0)]
        peaks: usize,
        /// Select hyperparameters at the first time only
        #[arg(long)]
        frozen: bool,
    },
    /// Generate synthetic data as CSV
    Synth {
        #[command(subcommand)]
        kind: SynthKind,
    },
    /// Run a named experiment
    Experiment {
        /// l2-curve, kde-compare, robustness, two-sample-power, class-balance or change-detection
        name: String,
        #[arg(long)]
        replicates: Option<usize>,
        /// JSON experiment configuration; command-line flags override it
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum SynthKind {
    /// x ~ N(mu e1, I/(4 pi)), x' ~ N(0, I/(4 pi))
    GaussianShift {
        #[arg(long, default_value_t = 1)]
        d: usize,
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, default_value_t = 200)]
        n_prime: usize,
        #[arg(long, default_value_t = 0.5)]
        mu: f64,
        #[arg(long)]
        x_out: PathBuf,
        #[arg(long)]
        x_prime_out: PathBuf,
    },
    /// x ~ (1 - eta) N(0, 1) + eta N(mu, 1/16), x' ~ N(0, 1)
    OutlierMixture {
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 100)]
        n_prime: usize,
        #[arg(long, default_value_t = 0.1)]
        eta: f64,
        #[arg(long, default_value_t = 10.0)]
        mu: f64,
        #[arg(long)]
        x_out: PathBuf,
        #[arg(long)]
        x_prime_out: PathBuf,
    },
    /// Two Gaussian classes and an unlabeled test mixture
    ClassBalance {
        #[arg(long, default_value_t = 10)]
        d: usize,
        #[arg(long, default_value_t = 20)]
        n_per_class: usize,
        #[arg(long, default_value_t = 50)]
        n_test: usize,
        #[arg(long, default_value_t = 0.5)]
        pi: f64,
        #[arg(long, default_value_t = 2.0)]
        separation: f64,
        /// Training points with the label as last column
        #[arg(long)]
        train_out: PathBuf,
        #[arg(long)]
        test_out: PathBuf,
        #[arg(long)]
        labels_out: Option<PathBuf>,
    },
    /// Scalar series with mean steps between 0 and `shift`
    StepSeries {
        #[arg(long, default_value_t = 1000)]
        length: usize,
        #[arg(long, value_delimiter = ',', default_value = "200,400,600,800")]
        changes: Vec<usize>,
        #[arg(long, default_value_t = 3.0)]
        shift: f64,
        #[arg(long, default_value_t = 1.0)]
        noise_sd: f64,
    },
}

impl Common {
    fn options(&self) -> CvOptions {
        let d = CvOptions::default();
        CvOptions {
            folds: self.folds.unwrap_or(d.folds),
            max_centers: self.max_centers.unwrap_or(d.max_centers),
        }
    }

    fn explicit_grid(&self) -> Result<Option<HyperGrid>> {
        match (&self.sigma_grid, &self.lambda_grid) {
            (Some(s), l) => Ok(Some(HyperGrid::new(
                s.clone(),
                l.clone().unwrap_or_else(|| DEFAULT_LAMBDAS.to_vec()),
            )?)),
            _ => Ok(None),
        }
    }

    fn grid(&self, pooled: &SampleSet) -> Result<HyperGrid> {
        if let Some(g) = self.explicit_grid()? {
            return Ok(g);
        }
        let sigmas = median_sigma_grid(pooled, DEFAULT_SIGMA_COUNT, 0.1, 10.0)?;
        let lambdas = self.lambda_grid.clone().unwrap_or_else(|| DEFAULT_LAMBDAS.to_vec());
        Ok(HyperGrid::new(sigmas, lambdas)?)
    }

    fn sink(&self) -> Result<Box<dyn Write>> {
        Ok(match &self.output {
            Some(p) => Box::new(BufWriter::new(File::create(p)?)),
            None => Box::new(BufWriter::new(io::stdout().lock())),
        })
    }

    fn emit_json(&self, value: &serde_json::Value) -> Result<()> {
        let mut out = self.sink()?;
        serde_json::to_writer_pretty(&mut out, value)?;
        writeln!(out)?;
        out.flush()?;
        Ok(())
    }

    fn emit_rows(&self, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let mut out = self.sink()?;
        writeln!(out, "{}", header.join(","))?;
        for r in rows {
            writeln!(out, "{}", r.join(","))?;
        }
        out.flush()?;
        Ok(())
    }

    fn load(&self, path: &Path) -> Result<SampleSet> {
        Ok(load_csv(path, self.header)?)
    }
}

fn key_values(pairs: &[(&str, f64)]) -> Vec<Vec<String>> {
    pairs.iter().map(|(k, v)| vec![k.to_string(), v.to_string()]).collect()
}

fn save_points(path: &Path, points: &SampleSet) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_csv(&mut w, points, None)?;
    w.flush()?;
    Ok(())
}

fn split_labels(path: &Path, table: &SampleSet) -> Result<LabeledSet> {
    if table.dim() < 2 {
        return Err(lsdd_core::Error::Data {
            path: path.to_path_buf(),
            reason: "need at least one feature column and a label column".into(),
        }
        .into());
    }
    let d = table.dim() - 1;
    let mut points = Vec::with_capacity(table.len());
    let mut labels = Vec::with_capacity(table.len());
    for (i, row) in table.iter().enumerate() {
        let v = row[d];
        let label = if v == 1.0 {
            1
        } else if v == -1.0 {
            -1
        } else {
            return Err(lsdd_core::Error::Csv {
                path: path.to_path_buf(),
                row: i + 1,
                column: d + 1,
                reason: format!("label must be 1 or -1, got {v}"),
            }
            .into());
        };
        points.push(row[..d].to_vec());
        labels.push(label);
    }
    Ok(LabeledSet::from_labeled(&SampleSet::new(points)?, &labels)?)
}

fn run(cli: Cli) -> Result<()> {
    let c = &cli.common;
    let mut rng = seeded(c.seed.unwrap_or(0));
    match &cli.command {
        Command::Fit(pair) => {
            let (x, xp) = (c.load(&pair.x)?, c.load(&pair.x_prime)?);
            let grid = c.grid(&x.concat(&xp)?)?;
            let (model, report) = fit_cv(&x, &xp, &grid, c.options(), &mut rng)?;
            let theta = model.theta().as_vector();
            let centers = model.basis().centers();
            match c.format {
                Format::Json => c.emit_json(&json!({
                    "sigma": model.sigma(),
                    "lambda": model.lambda(),
                    "centers": centers.to_vecs(),
                    "theta": theta.as_slice(),
                    "solver_fallback": model.solver_fallback(),
                    "cv": report,
                })),
                Format::Csv => {
                    let mut header: Vec<String> = (1..=centers.dim()).map(|i| format!("c{i}")).collect();
                    header.push("theta".into());
                    let rows: Vec<Vec<String>> = centers
                        .iter()
                        .zip(theta.iter())
                        .map(|(p, t)| p.iter().chain(std::iter::once(t)).map(f64::to_string).collect())
                        .collect();
                    let header: Vec<&str> = header.iter().map(String::as_str).collect();
                    c.emit_rows(&header, &rows)
                }
            }
        }
        Command::L2 { pair, kde } => {
            let (x, xp) = (c.load(&pair.x)?, c.load(&pair.x_prime)?);
            let grid = c.grid(&x.concat(&xp)?)?;
            let (est, model, _) = lsdd_l2(&x, &xp, &grid, c.options(), &mut rng)?;
            let kde_value = if *kde {
                let folds = c.options().folds;
                let p = kde_fit_cv(&x, &default_bandwidths(&x)?, folds, &mut rng)?;
                let q = kde_fit_cv(&xp, &default_bandwidths(&xp)?, folds, &mut rng)?;
                Some(kde_l2(&p, &q)?)
            } else {
                None
            };
            match c.format {
                Format::Json => {
                    let mut v = json!({ "sigma": model.sigma(), "lambda": model.lambda(), "estimates": est });
                    if let Some(k) = kde_value {
                        v["kde_l2"] = json!(k);
                    }
                    c.emit_json(&v)
                }
                Format::Csv => {
                    let mut rows = vec![
                        ("plain_h", est.plain_h),
                        ("plain_quadratic", est.plain_quadratic),
                        ("combined", est.combined),
                        ("bias_corrected", est.bias_corrected),
                        ("positive_part", est.positive_part),
                        ("sigma", model.sigma()),
                        ("lambda", model.lambda()),
                    ];
                    if let Some(k) = kde_value {
                        rows.push(("kde_l2", k));
                    }
                    c.emit_rows(&["estimator", "value"], &key_values(&rows))
                }
            }
        }
        Command::Test { pair, permutations, alpha, statistic } => {
            let (x, xp) = (c.load(&pair.x)?, c.load(&pair.x_prime)?);
            let lsdd;
            let kliep;
            let stat: &dyn TwoSampleStatistic = match statistic {
                Statistic::Lsdd => {
                    lsdd = LsddStatistic { grid: c.explicit_grid()?, options: c.options() };
                    &lsdd
                }
                Statistic::Kliep => {
                    kliep = KliepStatistic {
                        sigmas: c.sigma_grid.clone(),
                        folds: c.options().folds,
                        options: KliepOptions { max_centers: c.options().max_centers, ..KliepOptions::default() },
                    };
                    &kliep
                }
            };
            let result = permutation_test(&x, &xp, stat, *permutations, *alpha, &mut rng)?;
            match c.format {
                Format::Json => c.emit_json(&json!({
                    "observed_stat": result.observed_stat,
                    "p_value": result.p_value,
                    "reject": result.reject,
                    "alpha": result.alpha,
                    "permutations": result.permuted_stats.len(),
                })),
                Format::Csv => c.emit_rows(
                    &["quantity", "value"],
                    &key_values(&[
                        ("observed_stat", result.observed_stat),
                        ("p_value", result.p_value),
                        ("reject", f64::from(u8::from(result.reject))),
                        ("alpha", result.alpha),
                    ]),
                ),
            }
        }
        Command::ClassBalance { train, test, method, grid_points } => {
            if *grid_points < 2 {
                return Err(CliError::Usage("--grid-points must be at least 2".into()));
            }
            let labeled = split_labels(train, &c.load(train)?)?;
            let test_set = c.load(test)?;
            let pis = default_pi_grid(*grid_points);
            let result: ClassBalanceResult = match method {
                Method::Lsdd => {
                    let (pooled, _) = labeled.stacked()?;
                    let grid = c.grid(&pooled.concat(&test_set)?)?;
                    class_balance_estimate(&labeled, &test_set, &pis, &grid, c.options(), &mut rng)?
                }
                Method::Kde => class_balance_estimate_kde(&labeled, &test_set, &pis, c.options().folds, &mut rng)?,
            };
            match c.format {
                Format::Json => c.emit_json(&json!({
                    "pi_hat": result.pi_hat,
                    "sigma": result.sigma,
                    "lambda": result.lambda,
                    "curve": result.curve,
                })),
                Format::Csv => {
                    let rows: Vec<Vec<String>> = result
                        .curve
                        .iter()
                        .map(|(p, d)| vec![p.to_string(), d.to_string(), u8::from(*p == result.pi_hat).to_string()])
                        .collect();
                    c.emit_rows(&["pi", "distance", "selected"], &rows)
                }
            }
        }
        Command::ChangeDetect { series, k, r, stride, scorer, peaks, frozen } => {
            let rows = c.load(series)?.to_vecs();
            let config = ChangeConfig {
                k: *k,
                r: *r,
                stride: *stride,
                scorer: match scorer {
                    ScorerArg::Combined => Scorer::LsddCombined,
                    ScorerArg::PositivePart => Scorer::LsddPositivePart,
                    ScorerArg::Kliep => Scorer::Kliep,
                },
                grid: c.explicit_grid()?,
                options: c.options(),
                frozen: *frozen,
                ..ChangeConfig::default()
            };
            let out = change_scores(&rows, &config, &mut rng)?;
            let marked = if *peaks > 0 { top_peaks(&out, *peaks, *r) } else { Vec::new() };
            match c.format {
                Format::Json => c.emit_json(&json!({ "times": out.times, "scores": out.scores, "peaks": marked })),
                Format::Csv => {
                    let rows: Vec<Vec<String>> = out
                        .times
                        .iter()
                        .zip(&out.scores)
                        .map(|(t, s)| vec![t.to_string(), s.to_string(), u8::from(marked.contains(t)).to_string()])
                        .collect();
                    c.emit_rows(&["time", "score", "peak"], &rows)
                }
            }
        }
        Command::Synth { kind } => synth(c, kind, &mut rng),
        Command::Experiment { name, replicates, config } => {
            let kind: ExperimentKind = name.parse()?;
            let mut cfg = match config {
                Some(path) => {
                    let cfg: ExperimentConfig = serde_json::from_reader(File::open(path)?)?;
                    if cfg.experiment != kind {
                        return Err(CliError::Usage(format!("{} holds a different experiment than `{name}`", path.display())));
                    }
                    cfg
                }
                None => ExperimentConfig::new(kind),
            };
            if let Some(n) = replicates {
                cfg.replicates = *n;
            }
            if let Some(s) = c.seed {
                cfg.seed = s;
            }
            if let Some(f) = c.folds {
                cfg.folds = f;
            }
            if let Some(m) = c.max_centers {
                cfg.max_centers = m;
            }
            if c.sigma_grid.is_some() {
                cfg.sigmas = c.sigma_grid.clone();
            }
            if c.lambda_grid.is_some() {
                cfg.lambdas = c.lambda_grid.clone();
            }
            let table = run_experiment(&cfg)?;
            match &c.output {
                Some(base) => {
                    let (csv, json) = table.write_outputs(&cfg, base)?;
                    eprintln!("wrote {} and {}", csv.display(), json.display());
                    Ok(())
                }
                None => match c.format {
                    Format::Json => c.emit_json(&table.to_json(&cfg)?),
                    Format::Csv => {
                        let mut out = c.sink()?;
                        table.write_csv(&mut out)?;
                        out.flush()?;
                        Ok(())
                    }
                },
            }
        }
    }
}

fn synth(c: &Common, kind: &SynthKind, rng: &mut lsdd_core::Rng) -> Result<()> {
    match kind {
        SynthKind::GaussianShift { d, n, n_prime, mu, x_out, x_prime_out } => {
            let (x, xp) = gen_gaussian_shift(*d, *n, *n_prime, *mu, rng)?;
            save_points(x_out, &x)?;
            save_points(x_prime_out, &xp)
        }
        SynthKind::OutlierMixture { n, n_prime, eta, mu, x_out, x_prime_out } => {
            let (x, xp) = gen_outlier_mixture(*n, *n_prime, *eta, *mu, rng)?;
            save_points(x_out, &x)?;
            save_points(x_prime_out, &xp)
        }
        SynthKind::ClassBalance { d, n_per_class, n_test, pi, separation, train_out, test_out, labels_out } => {
            let data = gen_class_balance(*d, *n_per_class, *n_test, *pi, *separation, rng)?;
            let (points, labels) = data.train.stacked()?;
            let rows: Vec<Vec<f64>> = points
                .iter()
                .zip(&labels)
                .map(|(p, l)| p.iter().copied().chain(std::iter::once(*l)).collect())
                .collect();
            save_points(train_out, &SampleSet::new(rows)?)?;
            save_points(test_out, &data.test)?;
            if let Some(path) = labels_out {
                let labels: Vec<f64> = data.test_labels.iter().map(|&l| f64::from(l)).collect();
                save_points(path, &SampleSet::from_scalars(&labels)?)?;
            }
            Ok(())
        }
        SynthKind::StepSeries { length, changes, shift, noise_sd } => {
            let series = gen_step_series(*length, changes, *shift, *noise_sd, rng)?;
            let mut out = c.sink()?;
            write_csv(&mut out, &SampleSet::new(series)?, None)?;
            out.flush()?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
