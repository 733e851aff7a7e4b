//! Robust monthly noise scales from lag-1 differences.
//!
//! Differencing removes the piecewise constant mean everywhere except at the
//! (few) change-points and damps the smooth periodic bias, so a high
//! breakdown scale estimator on the differences sees the noise almost alone.
//! Each difference of two independent observations carries twice the
//! variance, hence the final division by sqrt(2).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{Dataset, MonthIndex};

/// Consistency constant making Qn unbiased for the standard deviation under
/// Gaussian data (Rousseeuw and Croux, 1993).
pub const QN_GAUSSIAN_CONSISTENCY: f64 = 2.21914;

/// Finite sample correction for Qn, original 1993 table for n <= 9 and the
/// parity-dependent asymptotic formula beyond.
fn qn_correction(n: usize) -> f64 {
    match n {
        0 | 1 => f64::NAN,
        2 => 0.399,
        3 => 0.994,
        4 => 0.512,
        5 => 0.844,
        6 => 0.611,
        7 => 0.857,
        8 => 0.669,
        9 => 0.872,
        _ => {
            let nf = n as f64;
            if n % 2 == 1 {
                nf / (nf + 1.4)
            } else {
                nf / (nf + 3.8)
            }
        }
    }
}

/// Number of pairwise gaps `x_j - x_i` (sorted x, i < j) no larger than `t`.
fn count_gaps_at_most(sorted: &[f64], t: f64) -> usize {
    let mut count = 0;
    let mut i = 0;
    for j in 1..sorted.len() {
        while sorted[j] - sorted[i] > t {
            i += 1;
        }
        count += j - i;
    }
    count
}

/// Qn scale estimate: the k-th smallest pairwise absolute difference with
/// k = C(h, 2), h = floor(n/2) + 1, scaled by the Gaussian consistency
/// constant and a finite sample correction.
///
/// The order statistic is found by bisecting on the value and counting gaps
/// with a two-pointer sweep, O(n log n) per count and independent of the
/// O(n^2) pair population, so the estimator stays cheap on long months. The
/// result is bit-identical to sorting all pairs and indexing.
pub fn qn_scale(xs: &[f64]) -> Result<f64> {
    let n = xs.len();
    if n < 2 {
        return Err(Error::invalid(format!(
            "qn_scale needs at least 2 values, got {n}"
        )));
    }
    if xs.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("qn_scale input contains non-finite values"));
    }
    let mut sorted: Vec<f64> = xs.to_vec();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());

    let h = n / 2 + 1;
    let k = h * (h - 1) / 2;
    let scale = QN_GAUSSIAN_CONSISTENCY * qn_correction(n);

    let mut lo = 0.0_f64;
    if count_gaps_at_most(&sorted, lo) >= k {
        return Ok(0.0);
    }
    let mut hi = sorted[n - 1] - sorted[0];
    // Invariant: count(lo) < k <= count(hi). On exit no representable value
    // separates lo and hi, so hi is exactly the k-th smallest gap.
    loop {
        let mid = lo + (hi - lo) * 0.5;
        if !(mid > lo && mid < hi) {
            break;
        }
        if count_gaps_at_most(&sorted, mid) >= k {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(scale * hi)
}

/// Where a [`MonthlyStd`] came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScaleSource {
    /// Per month Qn estimates on that month's differences.
    Robust,
    /// One pooled estimate copied to every month.
    Homogeneous,
}

/// Noise standard deviation per calendar month. Months that carry no
/// observations hold `None` and are excluded from every downstream sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthlyStd {
    sigma: [Option<f64>; 12],
    source: ScaleSource,
}

impl MonthlyStd {
    pub fn new(sigma: [Option<f64>; 12], source: ScaleSource) -> Result<Self> {
        for (i, s) in sigma.iter().enumerate() {
            if let Some(s) = s {
                if !(s.is_finite() && *s > 0.0) {
                    return Err(Error::invalid(format!(
                        "sigma for month {} must be positive and finite, got {s}",
                        i + 1
                    )));
                }
            }
        }
        Ok(MonthlyStd { sigma, source })
    }

    /// One value for all twelve months.
    pub fn uniform(sigma: f64) -> Result<Self> {
        MonthlyStd::new([Some(sigma); 12], ScaleSource::Homogeneous)
    }

    pub fn source(&self) -> ScaleSource {
        self.source
    }

    pub fn sigma(&self, month: u8) -> Option<f64> {
        self.sigma[month as usize - 1]
    }

    pub fn sigmas(&self) -> &[Option<f64>; 12] {
        &self.sigma
    }

    /// Per observation weights 1 / sigma^2 for the month of each observation.
    pub fn weights_for(&self, months: &MonthIndex) -> Result<Vec<f64>> {
        months
            .labels()
            .iter()
            .map(|&m| {
                self.sigma(m)
                    .map(|s| 1.0 / (s * s))
                    .ok_or(Error::MissingMonthScale { month: m })
            })
            .collect()
    }
}

/// Lag-1 differences of consecutive calendar days, grouped by the month label
/// of the pair. Pairs that straddle a data gap or a month boundary are
/// dropped so each group reflects a single month's noise.
#[derive(Debug, Clone, Default)]
pub struct DiffSample {
    by_month: [Vec<f64>; 12],
}

impl DiffSample {
    pub fn month(&self, month: u8) -> &[f64] {
        &self.by_month[month as usize - 1]
    }

    /// All grouped differences in one sample.
    pub fn pooled(&self) -> Vec<f64> {
        self.by_month.iter().flatten().copied().collect()
    }
}

/// Collects the grouped lag-1 differences of a dataset. Adjacency means the
/// dates are exactly one day apart; both endpoints must share a month label.
pub fn month_differences(data: &Dataset) -> DiffSample {
    let mut sample = DiffSample::default();
    let dates = data.series.dates();
    let values = data.series.values();
    for t in 1..data.len() {
        let adjacent = (dates[t] - dates[t - 1]).num_days() == 1;
        let same_month = data.months.label(t) == data.months.label(t - 1);
        if adjacent && same_month {
            sample.by_month[data.months.label(t) as usize - 1].push(values[t] - values[t - 1]);
        }
    }
    sample
}

/// Per month noise scale: Qn of each month's differences divided by sqrt(2).
/// Every month that carries observations must contribute at least two
/// differences; months without observations are left unset.
pub fn monthly_std(data: &Dataset) -> Result<MonthlyStd> {
    let diffs = month_differences(data);
    let counts = data.months.counts();
    let mut sigma = [None; 12];
    for month in 1..=12u8 {
        let idx = month as usize - 1;
        if counts[idx] == 0 {
            continue;
        }
        let sample = diffs.month(month);
        if sample.len() < 2 {
            return Err(Error::InsufficientMonthData {
                month,
                got: sample.len(),
                need: 2,
            });
        }
        let s = qn_scale(sample)? / std::f64::consts::SQRT_2;
        if s == 0.0 {
            return Err(Error::ZeroScale { month });
        }
        sigma[idx] = Some(s);
    }
    MonthlyStd::new(sigma, ScaleSource::Robust)
}

/// Homogeneous variant: one Qn estimate on the pooled differences, copied to
/// every month so downstream weighting degenerates to ordinary least squares.
pub fn homogeneous_std(data: &Dataset) -> Result<MonthlyStd> {
    let pooled = month_differences(data).pooled();
    if pooled.len() < 2 {
        return Err(Error::InsufficientMonthData {
            month: data.months.labels().first().copied().unwrap_or(1),
            got: pooled.len(),
            need: 2,
        });
    }
    let s = qn_scale(&pooled)? / std::f64::consts::SQRT_2;
    if s == 0.0 {
        return Err(Error::ZeroScale {
            month: data.months.labels().first().copied().unwrap_or(1),
        });
    }
    MonthlyStd::new([Some(s); 12], ScaleSource::Homogeneous)
}
