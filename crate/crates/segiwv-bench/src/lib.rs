//! Shared input builders for the criterion benches.

use chrono::NaiveDate;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Piecewise-constant series with a seasonal wave and unit-ish noise,
/// alternating between two noise scales every 50 points.
pub fn synthetic_series(n: usize, seed: u64) -> (Vec<NaiveDate>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = NaiveDate::from_ymd_opt(2000, 1, 1).unwrap();
    let mut dates = Vec::with_capacity(n);
    let mut d = start;
    let mut values = Vec::with_capacity(n);
    let two_pi = 2.0 * std::f64::consts::PI;
    for i in 0..n {
        dates.push(d);
        d = d.succ_opt().unwrap();
        let mu = if (i / 120) % 2 == 0 { 0.0 } else { 1.0 };
        let f = 0.7 * (two_pi * (i + 1) as f64 / 365.25).cos();
        let sigma = if (i / 50) % 2 == 0 { 0.5 } else { 1.2 };
        let z: f64 = rng.sample(StandardNormal);
        values.push(mu + f + sigma * z);
    }
    (dates, values)
}

/// Standard normal draws for scale-estimator benches.
pub fn gaussian_sample(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}
