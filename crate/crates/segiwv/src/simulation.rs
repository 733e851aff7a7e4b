//! Synthetic series with known segmentation, periodic bias and
//! heteroscedastic noise, plus the replicated study harness built on them.
//!
//! The standard design packs four "years" of two pseudo-months (50 days
//! each) into 400 daily points, places six mean shifts, adds a cosine bias
//! and draws independent Gaussian noise whose scale alternates between the
//! two pseudo-months.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use chrono::NaiveDate;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::FourierModel;
use crate::inference::{infer_all_k, InferenceOptions};
use crate::segmentation::Segmentation;
use crate::selection::{select_all, Criterion};
use crate::series::{Dataset, MonthIndex, TimeSeries};

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub n: usize,
    /// Consecutive days sharing one variance label.
    pub days_per_month: usize,
    /// Number of distinct variance labels cycled through.
    pub months_in_year: usize,
    /// Exclusive segment ends, i.e. 1-based positions of the last day of
    /// each segment but the final one.
    pub changepoints: Vec<usize>,
    /// Segment means, one more than there are changepoints.
    pub means: Vec<f64>,
    pub bias_amplitude: f64,
    pub period: f64,
    /// Noise scale per variance label.
    pub sigma: Vec<f64>,
    pub start: NaiveDate,
}

impl SimConfig {
    /// The 400-point reference design: shifts of height one at
    /// 55, 77, 177, 222, 300 and 366, bias 0.7 cos(2 pi t / 100), and noise
    /// alternating between `sigma1` and `sigma2` every 50 days.
    pub fn standard(sigma1: f64, sigma2: f64) -> Self {
        SimConfig {
            n: 400,
            days_per_month: 50,
            months_in_year: 2,
            changepoints: vec![55, 77, 177, 222, 300, 366],
            means: vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0],
            bias_amplitude: 0.7,
            period: 100.0,
            sigma: vec![sigma1, sigma2],
            start: NaiveDate::from_ymd_opt(2000, 1, 1).unwrap(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("empty design"));
        }
        if self.days_per_month == 0 {
            return Err(Error::invalid("days_per_month must be positive"));
        }
        if !(1..=12).contains(&self.months_in_year) {
            return Err(Error::invalid("months_in_year must be in 1..=12"));
        }
        if self.sigma.len() != self.months_in_year {
            return Err(Error::invalid("one noise scale per variance label"));
        }
        if self.sigma.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::invalid("noise scales must be finite and >= 0"));
        }
        if self.means.len() != self.changepoints.len() + 1 {
            return Err(Error::invalid(
                "need exactly one mean per segment (changepoints + 1)",
            ));
        }
        if !(self.period.is_finite() && self.period > 0.0) {
            return Err(Error::invalid("period must be positive"));
        }
        if !self.bias_amplitude.is_finite() {
            return Err(Error::invalid("bias amplitude must be finite"));
        }
        Ok(())
    }
}

/// A generated dataset together with everything that produced it.
#[derive(Debug, Clone)]
pub struct SimTruth {
    pub dataset: Dataset,
    pub segmentation: Segmentation,
    pub means: Vec<f64>,
    pub fourier: FourierModel,
    /// True noise scale per variance label.
    pub monthly: Vec<f64>,
    pub mu_signal: Vec<f64>,
    pub f_signal: Vec<f64>,
}

pub fn generate(config: &SimConfig, seed: u64) -> Result<SimTruth> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    generate_from(config, &mut rng)
}

fn generate_from(config: &SimConfig, rng: &mut ChaCha8Rng) -> Result<SimTruth> {
    config.validate()?;
    let n = config.n;

    let mut dates = Vec::with_capacity(n);
    let mut d = config.start;
    for _ in 0..n {
        dates.push(d);
        d = d
            .succ_opt()
            .ok_or_else(|| Error::invalid("date range overflow"))?;
    }

    let labels: Vec<u8> = (0..n)
        .map(|i| ((i / config.days_per_month) % config.months_in_year) as u8 + 1)
        .collect();
    let phase: Vec<f64> = (1..=n).map(|t| t as f64).collect();

    let segmentation = Segmentation::new(n, config.changepoints.clone())?;
    let mu_signal = segmentation.expand(&config.means);

    let mut fourier = FourierModel::zero(1, config.period);
    fourier.a[0] = config.bias_amplitude;
    let f_signal = fourier.evaluate(&phase);

    let values: Vec<f64> = (0..n)
        .map(|i| {
            let sigma = config.sigma[labels[i] as usize - 1];
            let z: f64 = rng.sample(StandardNormal);
            mu_signal[i] + f_signal[i] + sigma * z
        })
        .collect();

    let series = TimeSeries::new(dates, values)?;
    let months = MonthIndex::new(labels)?;
    let dataset = Dataset::with_design(series, months, phase, config.period)?;
    Ok(SimTruth {
        dataset,
        segmentation,
        means: config.means.clone(),
        fourier,
        monthly: config.sigma.clone(),
        mu_signal,
        f_signal,
    })
}

/// Directed Hausdorff distances between changepoint sets, in days.
/// `d1` is the worst distance from an estimated point to the truth (false
/// alarms far from any true shift), `d2` the worst from a true point to the
/// estimate (missed shifts). Both are None when the estimate is empty.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Hausdorff {
    pub d1: Option<f64>,
    pub d2: Option<f64>,
}

pub fn hausdorff(truth: &[usize], estimate: &[usize]) -> Hausdorff {
    if truth.is_empty() || estimate.is_empty() {
        return Hausdorff { d1: None, d2: None };
    }
    let nearest = |p: usize, set: &[usize]| -> f64 {
        set.iter()
            .map(|&q| (p as i64 - q as i64).abs() as f64)
            .fold(f64::INFINITY, f64::min)
    };
    let d1 = estimate
        .iter()
        .map(|&e| nearest(e, truth))
        .fold(0.0, f64::max);
    let d2 = truth
        .iter()
        .map(|&t| nearest(t, estimate))
        .fold(0.0, f64::max);
    Hausdorff {
        d1: Some(d1),
        d2: Some(d2),
    }
}

/// Root mean squared difference of two equally long vectors.
///
/// Panics if the lengths differ.
pub fn rmse(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "rmse needs equal lengths");
    let ss: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (ss / a.len() as f64).sqrt()
}

#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub sigma1: f64,
    pub sigma2_grid: Vec<f64>,
    pub replicates: usize,
    pub k_max: usize,
    pub criteria: Vec<Criterion>,
    /// Also evaluate the fit at the true segment count, labeled "true".
    pub include_true_k: bool,
    /// A true changepoint counts as detected when an estimated one lies
    /// within this many days.
    pub detect_tolerance: usize,
    pub master_seed: u64,
    pub options: InferenceOptions,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            sigma1: 0.5,
            sigma2_grid: vec![1.0],
            replicates: 100,
            k_max: 30,
            criteria: Criterion::ALL.to_vec(),
            include_true_k: true,
            detect_tolerance: 2,
            master_seed: 7,
            options: InferenceOptions::default(),
        }
    }
}

/// One selection rule's outcome on one replicate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodRecord {
    pub method: String,
    pub k: usize,
    pub k_err: i64,
    pub rmse_mu: f64,
    pub rmse_f: f64,
    pub d1: Option<f64>,
    pub d2: Option<f64>,
    /// Aligned with the true changepoint list of the report.
    pub detected: Vec<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub sigma1: f64,
    pub sigma2: f64,
    pub replicate: usize,
    /// Estimated minus true noise scale, one entry per variance label.
    pub sigma_err: Vec<f64>,
    pub methods: Vec<MethodRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummaryRow {
    pub sigma1: f64,
    pub sigma2: f64,
    pub method: String,
    pub metric: String,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
    pub mean: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyReport {
    pub true_changepoints: Vec<usize>,
    pub true_k: usize,
    pub records: Vec<ReplicateRecord>,
    pub summary: Vec<SummaryRow>,
}

impl StudyReport {
    pub fn row(&self, sigma2: f64, method: &str, metric: &str) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| {
            (r.sigma2 - sigma2).abs() < 1e-9 && r.method == method && r.metric == metric
        })
    }
}

/// Linear-interpolation sample quantile of a sorted slice.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn summarize_values(
    sigma1: f64,
    sigma2: f64,
    method: &str,
    metric: &str,
    mut values: Vec<f64>,
) -> SummaryRow {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let count = values.len();
    let mean = if count == 0 {
        f64::NAN
    } else {
        values.iter().sum::<f64>() / count as f64
    };
    SummaryRow {
        sigma1,
        sigma2,
        method: method.to_string(),
        metric: metric.to_string(),
        q25: quantile(&values, 0.25),
        q50: quantile(&values, 0.50),
        q75: quantile(&values, 0.75),
        mean,
        count,
    }
}

fn run_replicate(cfg: &StudyConfig, sigma2: f64, replicate: usize) -> Result<ReplicateRecord> {
    let config = SimConfig::standard(cfg.sigma1, sigma2);
    // One independent stream per (master, noise pair, replicate).
    let mut seed = [0u8; 32];
    seed[0..8].copy_from_slice(&cfg.master_seed.to_le_bytes());
    seed[8..16].copy_from_slice(&cfg.sigma1.to_bits().to_le_bytes());
    seed[16..24].copy_from_slice(&sigma2.to_bits().to_le_bytes());
    seed[24..32].copy_from_slice(&(replicate as u64).to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(seed);
    let truth = generate_from(&config, &mut rng)?;

    let all = infer_all_k(&truth.dataset, cfg.k_max, &cfg.options)?;
    let sigma_err: Vec<f64> = (1..=config.months_in_year as u8)
        .map(|label| {
            all.monthly
                .sigma(label)
                .map(|est| est - truth.monthly[label as usize - 1])
                .unwrap_or(f64::NAN)
        })
        .collect();

    let true_cps = truth.segmentation.changepoints();
    let true_k = truth.segmentation.k();
    let mut chosen: Vec<(String, usize)> = select_all(&all, &cfg.criteria)?
        .into_iter()
        .map(|sel| (sel.criterion.name().to_string(), sel.k))
        .collect();
    if cfg.include_true_k {
        chosen.push(("true".to_string(), true_k.min(cfg.k_max)));
    }

    let methods = chosen
        .into_iter()
        .map(|(method, k)| {
            let fit = all.fixed(k);
            let est = fit.segmentation.changepoints();
            let h = hausdorff(true_cps, est);
            let mu_hat = fit.segmentation.expand(&fit.means);
            let f_hat = fit.fourier.evaluate(&truth.dataset.phase);
            let tol = cfg.detect_tolerance as i64;
            let detected = true_cps
                .iter()
                .map(|&cp| {
                    est.iter()
                        .any(|&e| (e as i64 - cp as i64).abs() <= tol)
                })
                .collect();
            MethodRecord {
                method,
                k,
                k_err: k as i64 - true_k as i64,
                rmse_mu: rmse(&mu_hat, &truth.mu_signal),
                rmse_f: rmse(&f_hat, &truth.f_signal),
                d1: h.d1,
                d2: h.d2,
                detected,
            }
        })
        .collect();

    Ok(ReplicateRecord {
        sigma1: cfg.sigma1,
        sigma2,
        replicate,
        sigma_err,
        methods,
    })
}

/// Runs the full replicated study over the noise grid and aggregates
/// per-method distributions of the error metrics. Replicates are
/// independent (seed-derived) so the result does not depend on scheduling.
pub fn run_study(cfg: &StudyConfig) -> Result<StudyReport> {
    if cfg.replicates == 0 {
        return Err(Error::invalid("need at least one replicate"));
    }
    if cfg.sigma2_grid.is_empty() {
        return Err(Error::invalid("empty noise grid"));
    }
    if cfg.criteria.is_empty() && !cfg.include_true_k {
        return Err(Error::invalid("no selection method requested"));
    }

    let reference = SimConfig::standard(cfg.sigma1, 1.0);
    let true_changepoints = reference.changepoints.clone();
    let true_k = true_changepoints.len() + 1;

    let jobs: Vec<(usize, usize)> = (0..cfg.sigma2_grid.len())
        .flat_map(|pi| (0..cfg.replicates).map(move |rep| (pi, rep)))
        .collect();
    let mut results: Vec<((usize, usize), ReplicateRecord)> = jobs
        .into_par_iter()
        .map(|(pi, rep)| {
            run_replicate(cfg, cfg.sigma2_grid[pi], rep).map(|r| ((pi, rep), r))
        })
        .collect::<Result<_>>()?;
    results.sort_by_key(|(key, _)| *key);
    let records: Vec<ReplicateRecord> = results.into_iter().map(|(_, r)| r).collect();

    let mut summary = Vec::new();
    for (pi, &sigma2) in cfg.sigma2_grid.iter().enumerate() {
        let chunk = &records[pi * cfg.replicates..(pi + 1) * cfg.replicates];
        for label in 0..reference.months_in_year {
            let vals: Vec<f64> = chunk
                .iter()
                .map(|r| r.sigma_err[label])
                .filter(|v| v.is_finite())
                .collect();
            summary.push(summarize_values(
                cfg.sigma1,
                sigma2,
                "all",
                &format!("sigma{}_err", label + 1),
                vals,
            ));
        }
        let mut method_names: Vec<String> =
            cfg.criteria.iter().map(|c| c.name().to_string()).collect();
        if cfg.include_true_k {
            method_names.push("true".to_string());
        }
        for method in &method_names {
            let picks: Vec<&MethodRecord> = chunk
                .iter()
                .flat_map(|r| r.methods.iter().filter(|m| &m.method == method))
                .collect();
            let gather = |f: &dyn Fn(&MethodRecord) -> Option<f64>| -> Vec<f64> {
                picks.iter().filter_map(|m| f(m)).collect()
            };
            summary.push(summarize_values(
                cfg.sigma1,
                sigma2,
                method,
                "k_hat",
                gather(&|m| Some(m.k as f64)),
            ));
            summary.push(summarize_values(
                cfg.sigma1,
                sigma2,
                method,
                "k_err",
                gather(&|m| Some(m.k_err as f64)),
            ));
            summary.push(summarize_values(
                cfg.sigma1,
                sigma2,
                method,
                "rmse_mu",
                gather(&|m| Some(m.rmse_mu)),
            ));
            summary.push(summarize_values(
                cfg.sigma1,
                sigma2,
                method,
                "rmse_f",
                gather(&|m| Some(m.rmse_f)),
            ));
            summary.push(summarize_values(
                cfg.sigma1,
                sigma2,
                method,
                "d1",
                gather(&|m| m.d1),
            ));
            summary.push(summarize_values(
                cfg.sigma1,
                sigma2,
                method,
                "d2",
                gather(&|m| m.d2),
            ));
            for (ci, &cp) in true_changepoints.iter().enumerate() {
                summary.push(summarize_values(
                    cfg.sigma1,
                    sigma2,
                    method,
                    &format!("detect_{cp}"),
                    gather(&|m| Some(if m.detected[ci] { 1.0 } else { 0.0 })),
                ));
            }
        }
    }

    Ok(StudyReport {
        true_changepoints,
        true_k,
        records,
        summary,
    })
}

fn write_summary_csv(
    path: &Path,
    report: &StudyReport,
    keep: &dyn Fn(&str) -> bool,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["sigma1", "sigma2", "method", "metric", "quantile", "value"])?;
    for row in report.summary.iter().filter(|r| keep(&r.metric)) {
        for (q, v) in [
            ("q25", row.q25),
            ("q50", row.q50),
            ("q75", row.q75),
            ("mean", row.mean),
            ("count", row.count as f64),
        ] {
            w.write_record([
                row.sigma1.to_string(),
                row.sigma2.to_string(),
                row.method.clone(),
                row.metric.clone(),
                q.to_string(),
                v.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes the aggregated study into one CSV per figure family plus the raw
/// per-replicate records as JSON lines:
/// noise-scale errors (fig3.csv), segmentation quality (fig4.csv),
/// per-changepoint detection rates (fig5.csv) and periodic-bias recovery
/// (fig6.csv).
pub fn write_study_outputs(report: &StudyReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_summary_csv(&dir.join("fig3.csv"), report, &|m| {
        m.starts_with("sigma")
    })?;
    write_summary_csv(&dir.join("fig4.csv"), report, &|m| {
        matches!(m, "k_hat" | "k_err" | "rmse_mu" | "d1" | "d2")
    })?;
    write_summary_csv(&dir.join("fig5.csv"), report, &|m| {
        m.starts_with("detect_")
    })?;
    write_summary_csv(&dir.join("fig6.csv"), report, &|m| m == "rmse_f")?;
    let mut f = fs::File::create(dir.join("replicates.jsonl"))?;
    for rec in &report.records {
        serde_json::to_writer(&mut f, rec)?;
        writeln!(f)?;
    }
    Ok(())
}
