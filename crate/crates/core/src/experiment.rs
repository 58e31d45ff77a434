//! Replicated synthetic experiments with long-format CSV and JSON output.

use std::fmt;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::applications::{
    change_scores, class_balance_estimate, class_balance_estimate_kde, default_pi_grid, top_peaks,
    weighted_rls_fit, ChangeConfig,
};
use crate::data::{gen_class_balance, gen_gaussian_shift, gen_outlier_mixture, gen_step_series, truth};
use crate::divergence::lsdd_l2;
use crate::error::{Error, Result};
use crate::kde::{default_bandwidths, kde_fit_cv, kde_l2};
use crate::kernel::median_pairwise_distance;
use crate::kliep::{default_sigmas, kliep_fit_cv, kliep_kl_estimate, KliepOptions};
use crate::lsdd::{CvOptions, HyperGrid, DEFAULT_LAMBDAS};
use crate::rng::{role, stream, Rng};
use crate::sample::SampleSet;
use crate::two_sample::{permutation_test, KliepStatistic, LsddStatistic};

pub const VERSION: &str = concat!("v", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    L2Curve,
    KdeCompare,
    Robustness,
    TwoSamplePower,
    ClassBalance,
    ChangeDetection,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        Self::L2Curve,
        Self::KdeCompare,
        Self::Robustness,
        Self::TwoSamplePower,
        Self::ClassBalance,
        Self::ChangeDetection,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::L2Curve => "l2-curve",
            Self::KdeCompare => "kde-compare",
            Self::Robustness => "robustness",
            Self::TwoSamplePower => "two-sample-power",
            Self::ClassBalance => "class-balance",
            Self::ChangeDetection => "change-detection",
        }
    }

    fn stream_id(self) -> u64 {
        Self::ALL.iter().position(|k| *k == self).unwrap() as u64 + 1
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownExperiment(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub d: usize,
    pub n: usize,
    pub n_prime: usize,
    pub mus: Vec<f64>,
    pub etas: Vec<f64>,
    pub pi_stars: Vec<f64>,
    pub separation: f64,
    pub n_per_class: usize,
    pub n_test: usize,
    pub series_length: usize,
    pub change_times: Vec<usize>,
    pub shift: f64,
    pub noise_sd: f64,
    pub k: usize,
    pub r: usize,
    pub stride: usize,
    pub sigmas: Option<Vec<f64>>,
    pub lambdas: Option<Vec<f64>>,
    pub folds: usize,
    pub max_centers: usize,
    pub permutations: usize,
    pub alpha: f64,
    pub replicates: usize,
    pub seed: u64,
}

impl ExperimentConfig {
    /// Defaults for each experiment.
    pub fn new(experiment: ExperimentKind) -> Self {
        let cv = CvOptions::default();
        let mut c = Self {
            experiment,
            d: 1,
            n: 200,
            n_prime: 200,
            mus: vec![0.0, 0.2, 0.4, 0.6, 0.8],
            etas: vec![0.1],
            pi_stars: (1..=9).map(|i| i as f64 / 10.0).collect(),
            separation: 2.0,
            n_per_class: 20,
            n_test: 50,
            series_length: 1000,
            change_times: vec![200, 400, 600, 800],
            shift: 3.0,
            noise_sd: 1.0,
            k: 5,
            r: 50,
            stride: 5,
            sigmas: None,
            lambdas: None,
            folds: cv.folds,
            max_centers: cv.max_centers,
            permutations: 100,
            alpha: 0.05,
            replicates: 100,
            seed: 0,
        };
        match experiment {
            ExperimentKind::KdeCompare => {
                c.d = 5;
                c.mus = vec![0.0, 0.4, 0.8];
            }
            ExperimentKind::Robustness => {
                c.n = 100;
                c.n_prime = 100;
                c.mus = vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0];
            }
            ExperimentKind::TwoSamplePower => {
                c.n = 100;
                c.n_prime = 100;
                c.etas = vec![0.0, 0.05, 0.1];
                c.mus = vec![10.0];
            }
            ExperimentKind::ClassBalance => {
                c.d = 10;
                c.replicates = 200;
            }
            ExperimentKind::ChangeDetection => c.replicates = 10,
            ExperimentKind::L2Curve => {}
        }
        c
    }

    fn cv_options(&self) -> CvOptions {
        CvOptions {
            folds: self.folds,
            max_centers: self.max_centers,
        }
    }

    /// The configured grid, or the median heuristic on `pooled` for any
    /// part that was not overridden.
    fn grid_for(&self, pooled: &SampleSet) -> Result<HyperGrid> {
        let lambdas = self.lambdas.clone().unwrap_or_else(|| DEFAULT_LAMBDAS.to_vec());
        let sigmas = match &self.sigmas {
            Some(s) => s.clone(),
            None => HyperGrid::median_heuristic(pooled)?.sigmas().to_vec(),
        };
        HyperGrid::new(sigmas, lambdas)
    }

    fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::invalid("replicates", "must be at least 1"));
        }
        if self.folds < 2 {
            return Err(Error::invalid("folds", "must be at least 2"));
        }
        let empty = match self.experiment {
            ExperimentKind::L2Curve | ExperimentKind::KdeCompare => self.mus.is_empty(),
            ExperimentKind::Robustness | ExperimentKind::TwoSamplePower => self.mus.is_empty() || self.etas.is_empty(),
            ExperimentKind::ClassBalance => self.pi_stars.is_empty(),
            ExperimentKind::ChangeDetection => false,
        };
        if empty {
            return Err(Error::invalid("conditions", "no conditions to run"));
        }
        Ok(())
    }

    fn conditions(&self) -> Vec<(String, f64, f64)> {
        match self.experiment {
            ExperimentKind::L2Curve | ExperimentKind::KdeCompare => {
                self.mus.iter().map(|&m| (format!("mu={m}"), m, 0.0)).collect()
            }
            ExperimentKind::Robustness | ExperimentKind::TwoSamplePower => self
                .etas
                .iter()
                .flat_map(|&e| self.mus.iter().map(move |&m| (format!("eta={e},mu={m}"), m, e)))
                .collect(),
            ExperimentKind::ClassBalance => {
                self.pi_stars.iter().map(|&p| (format!("pi={p}"), p, 0.0)).collect()
            }
            ExperimentKind::ChangeDetection => vec![("series".to_string(), 0.0, 0.0)],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub replicate: usize,
    pub condition: String,
    pub estimator: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub condition: String,
    pub estimator: String,
    pub count: usize,
    pub mean: f64,
    /// Sample standard deviation over `sqrt(count)`; absent for one replicate.
    pub std_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
    pub summaries: Vec<SummaryRow>,
}

impl ResultTable {
    /// Summaries per `(condition, estimator)` in order of first appearance.
    pub fn from_rows(rows: Vec<ResultRow>) -> Self {
        let mut keys: Vec<(&str, &str)> = Vec::new();
        for r in &rows {
            let key = (r.condition.as_str(), r.estimator.as_str());
            if !keys.contains(&key) {
                keys.push(key);
            }
        }
        let summaries = keys
            .iter()
            .map(|&(c, e)| {
                let vals: Vec<f64> = rows
                    .iter()
                    .filter(|r| r.condition == c && r.estimator == e)
                    .map(|r| r.value)
                    .collect();
                let n = vals.len() as f64;
                let mean = vals.iter().sum::<f64>() / n;
                let std_error = (vals.len() > 1).then(|| {
                    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
                    (var / n).sqrt()
                });
                SummaryRow {
                    condition: c.to_string(),
                    estimator: e.to_string(),
                    count: vals.len(),
                    mean,
                    std_error,
                }
            })
            .collect();
        Self { rows, summaries }
    }

    pub fn summary(&self, condition: &str, estimator: &str) -> Option<&SummaryRow> {
        self.summaries
            .iter()
            .find(|s| s.condition == condition && s.estimator == estimator)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["replicate", "condition", "estimator", "value"])?;
        for r in &self.rows {
            w.write_record([
                r.replicate.to_string(),
                r.condition.clone(),
                r.estimator.clone(),
                r.value.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_summary_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["condition", "estimator", "count", "mean", "std_error"])?;
        for s in &self.summaries {
            w.write_record([
                s.condition.clone(),
                s.estimator.clone(),
                s.count.to_string(),
                s.mean.to_string(),
                s.std_error.map_or(String::new(), |v| v.to_string()),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_json(&self, config: &ExperimentConfig) -> Result<serde_json::Value> {
        Ok(serde_json::json!({
            "version": VERSION,
            "config": config,
            "rows": self.rows,
            "summaries": self.summaries,
        }))
    }

    /// Writes `<base>.csv` (long format) and `<base>.json`.
    pub fn write_outputs(&self, config: &ExperimentConfig, base: &Path) -> Result<(PathBuf, PathBuf)> {
        let csv_path = base.with_extension("csv");
        let json_path = base.with_extension("json");
        self.write_csv(File::create(&csv_path)?)?;
        let mut f = File::create(&json_path)?;
        serde_json::to_writer_pretty(&mut f, &self.to_json(config)?)?;
        f.write_all(b"\n")?;
        Ok((csv_path, json_path))
    }
}

type Rows = Vec<(String, f64)>;

fn replicate(config: &ExperimentConfig, value: f64, eta: f64, seed_path: &[u64]) -> Result<Rows> {
    let rng_for = |r: u64| -> Rng {
        let mut p = seed_path.to_vec();
        p.push(r);
        stream(config.seed, &p)
    };
    let mut data_rng = rng_for(role::DATA);
    let mut rng = rng_for(role::STATISTIC);
    let opts = config.cv_options();
    let row = |name: &str, v: f64| (name.to_string(), v);
    match config.experiment {
        ExperimentKind::L2Curve => {
            let (x, y) = gen_gaussian_shift(config.d, config.n, config.n_prime, value, &mut data_rng)?;
            let grid = config.grid_for(&x.concat(&y)?)?;
            let (e, _, _) = lsdd_l2(&x, &y, &grid, opts, &mut rng)?;
            Ok(vec![
                row("lsdd_plain_h", e.plain_h),
                row("lsdd_plain_quadratic", e.plain_quadratic),
                row("lsdd_combined", e.combined),
                row("lsdd_bias_corrected", e.bias_corrected),
                row("lsdd_positive_part", e.positive_part),
                row("truth", truth::gaussian_shift_l2(value)),
            ])
        }
        ExperimentKind::KdeCompare => {
            let (x, y) = gen_gaussian_shift(config.d, config.n, config.n_prime, value, &mut data_rng)?;
            let grid = config.grid_for(&x.concat(&y)?)?;
            let (e, _, _) = lsdd_l2(&x, &y, &grid, opts, &mut rng)?;
            let px = kde_fit_cv(&x, &default_bandwidths(&x)?, config.folds, &mut rng)?;
            let py = kde_fit_cv(&y, &default_bandwidths(&y)?, config.folds, &mut rng)?;
            Ok(vec![
                row("lsdd_combined", e.combined),
                row("kde_l2", kde_l2(&px, &py)?),
                row("truth", truth::gaussian_shift_l2(value)),
            ])
        }
        ExperimentKind::Robustness => {
            let (x, y) = gen_outlier_mixture(config.n, config.n_prime, eta, value, &mut data_rng)?;
            let grid = config.grid_for(&x.concat(&y)?)?;
            let (e, _, _) = lsdd_l2(&x, &y, &grid, opts, &mut rng)?;
            let (m, _) = kliep_fit_cv(&x, &y, &default_sigmas(&x)?, config.folds, &KliepOptions::default(), &mut rng)?;
            Ok(vec![
                row("lsdd_combined", e.combined),
                row("kliep_kl", kliep_kl_estimate(&m, &x)?),
                row("true_l2", truth::outlier_mixture_l2(eta, value)),
                row("true_kl", truth::outlier_mixture_kl(eta, value)?),
            ])
        }
        ExperimentKind::TwoSamplePower => {
            let (x, y) = gen_outlier_mixture(config.n, config.n_prime, eta, value, &mut data_rng)?;
            let lsdd = LsddStatistic {
                grid: match (&config.sigmas, &config.lambdas) {
                    (None, None) => None,
                    _ => Some(config.grid_for(&x.concat(&y)?)?),
                },
                options: opts,
            };
            let kliep = KliepStatistic {
                folds: config.folds,
                ..KliepStatistic::default()
            };
            let a = permutation_test(&x, &y, &lsdd, config.permutations, config.alpha, &mut rng)?;
            let b = permutation_test(&x, &y, &kliep, config.permutations, config.alpha, &mut rng)?;
            Ok(vec![
                row("lsdd_reject", f64::from(u8::from(a.reject))),
                row("kliep_reject", f64::from(u8::from(b.reject))),
                row("lsdd_p_value", a.p_value),
                row("kliep_p_value", b.p_value),
            ])
        }
        ExperimentKind::ClassBalance => {
            let data = gen_class_balance(config.d, config.n_per_class, config.n_test, value, config.separation, &mut data_rng)?;
            let pooled = data.train.positive.concat(&data.train.negative)?.concat(&data.test)?;
            let grid = config.grid_for(&pooled)?;
            let pis = default_pi_grid(101);
            let a = class_balance_estimate(&data.train, &data.test, &pis, &grid, opts, &mut rng)?;
            let b = class_balance_estimate_kde(&data.train, &data.test, &pis, config.folds, &mut rng)?;
            let (train_pts, _) = data.train.stacked()?;
            let width = median_pairwise_distance(&train_pts);
            let err = |pi: f64| -> Result<f64> {
                weighted_rls_fit(&data.train, pi, width, CLASSIFIER_REG)?.error_rate(&data.test, &data.test_labels)
            };
            Ok(vec![
                row("lsdd_pi_hat", a.pi_hat),
                row("kde_pi_hat", b.pi_hat),
                row("lsdd_sq_error", (a.pi_hat - value).powi(2)),
                row("kde_sq_error", (b.pi_hat - value).powi(2)),
                row("lsdd_misclass", err(a.pi_hat)?),
                row("kde_misclass", err(b.pi_hat)?),
            ])
        }
        ExperimentKind::ChangeDetection => {
            let series = gen_step_series(config.series_length, &config.change_times, config.shift, config.noise_sd, &mut data_rng)?;
            let cfg = ChangeConfig {
                k: config.k,
                r: config.r,
                stride: config.stride,
                grid: match (&config.sigmas, &config.lambdas) {
                    (Some(s), l) => Some(HyperGrid::new(s.clone(), l.clone().unwrap_or_else(|| DEFAULT_LAMBDAS.to_vec()))?),
                    _ => None,
                },
                options: opts,
                ..ChangeConfig::default()
            };
            let scores = change_scores(&series, &cfg, &mut rng)?;
            let peaks = top_peaks(&scores, config.change_times.len(), config.r);
            let mut rows = Vec::new();
            let mut all = true;
            for &t in &config.change_times {
                let offset = peaks.iter().map(|p| p.abs_diff(t)).min().unwrap_or(usize::MAX);
                all &= offset <= config.r;
                rows.push((format!("offset@{t}"), offset as f64));
            }
            rows.push(row("all_detected", f64::from(u8::from(all))));
            Ok(rows)
        }
    }
}

/// Regularization of the weighted least-squares classifier.
pub const CLASSIFIER_REG: f64 = 1e-3;

/// Runs every condition and replicate. Jobs run in parallel; rows come out
/// ordered by condition, then replicate, then estimator.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ResultTable> {
    config.validate()?;
    let conditions = config.conditions();
    let jobs: Vec<(usize, usize)> = (0..conditions.len())
        .flat_map(|c| (0..config.replicates).map(move |r| (c, r)))
        .collect();
    let kind = config.experiment.stream_id();
    let results = jobs
        .par_iter()
        .map(|&(c, r)| {
            let (_, value, eta) = &conditions[c];
            replicate(config, *value, *eta, &[kind, c as u64, r as u64])
        })
        .collect::<Result<Vec<Rows>>>()?;
    let mut rows = Vec::new();
    for (&(c, r), res) in jobs.iter().zip(results) {
        for (estimator, value) in res {
            rows.push(ResultRow {
                replicate: r,
                condition: conditions[c].0.clone(),
                estimator,
                value,
            });
        }
    }
    Ok(ResultTable::from_rows(rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for k in ExperimentKind::ALL {
            assert_eq!(k.name().parse::<ExperimentKind>().unwrap(), k);
        }
        assert!(matches!("nope".parse::<ExperimentKind>(), Err(Error::UnknownExperiment(_))));
    }

    #[test]
    fn summaries_follow_rows() {
        let rows = vec![
            ResultRow { replicate: 0, condition: "a".into(), estimator: "e".into(), value: 1.0 },
            ResultRow { replicate: 1, condition: "a".into(), estimator: "e".into(), value: 3.0 },
            ResultRow { replicate: 0, condition: "b".into(), estimator: "e".into(), value: 2.0 },
        ];
        let t = ResultTable::from_rows(rows);
        let a = t.summary("a", "e").unwrap();
        assert_eq!((a.count, a.mean), (2, 2.0));
        assert_eq!(a.std_error, Some(1.0));
        assert_eq!(t.summary("b", "e").unwrap().std_error, None);
    }

    #[test]
    fn small_run_is_deterministic() {
        let mut c = ExperimentConfig::new(ExperimentKind::L2Curve);
        c.replicates = 2;
        c.n = 40;
        c.n_prime = 40;
        c.mus = vec![0.0, 0.5];
        let a = run_experiment(&c).unwrap();
        let b = run_experiment(&c).unwrap();
        let (mut ca, mut cb) = (Vec::new(), Vec::new());
        a.write_csv(&mut ca).unwrap();
        b.write_csv(&mut cb).unwrap();
        assert_eq!(ca, cb);
        assert_eq!(a.summaries.len(), 12);
        c.replicates = 0;
        assert!(run_experiment(&c).is_err());
    }
}
