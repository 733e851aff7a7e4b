//! Acceptance gate: one test per shipping criterion, each printing a single
//! PASS/FAIL line (visible with --nocapture; the harness line itself carries
//! the same verdict either way).

use std::time::Instant;

use chrono::{Datelike, NaiveDate};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use segiwv::{
    dp_segment, generate, hausdorff, infer_all_k, infer_fixed_k, monthly_std, qn_scale, rmse,
    run_study, select_all, ssr_of, Criterion, Dataset, InferenceOptions, InitStrategy,
    Segmentation, SimConfig, StudyConfig, TimeSeries, Variant,
};

fn criterion(num: usize, name: &str, body: impl FnOnce() -> Result<(), String>) {
    match body() {
        Ok(()) => println!("acceptance {num:02} {name}: PASS"),
        Err(msg) => {
            println!("acceptance {num:02} {name}: FAIL ({msg})");
            panic!("criterion {num} ({name}) failed: {msg}");
        }
    }
}

fn ensure(cond: bool, msg: String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg)
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn iqr(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q = |p: f64| {
        let h = (values.len() - 1) as f64 * p;
        let lo = h.floor() as usize;
        let hi = h.ceil() as usize;
        values[lo] + (h - lo as f64) * (values[hi] - values[lo])
    };
    q(0.75) - q(0.25)
}

// --- 1: exact segmentation ---------------------------------------------

/// Visits every strictly increasing boundary vector of length `k` drawn from
/// `1..n`.
fn each_boundary_set(n: usize, k: usize, f: &mut impl FnMut(&[usize])) {
    fn recur(
        start: usize,
        n: usize,
        left: usize,
        cur: &mut Vec<usize>,
        f: &mut impl FnMut(&[usize]),
    ) {
        if left == 0 {
            f(cur);
            return;
        }
        for p in start..n.saturating_sub(left - 1) {
            cur.push(p);
            recur(p + 1, n, left - 1, cur, f);
            cur.pop();
        }
    }
    recur(1, n, k, &mut Vec::new(), f);
}

fn rev_lex_smaller(a: &[usize], b: &[usize]) -> bool {
    for (x, y) in a.iter().rev().zip(b.iter().rev()) {
        if x != y {
            return x < y;
        }
    }
    false
}

#[test]
fn criterion_01_dp_matches_exhaustive_search() {
    criterion(1, "dynamic program matches exhaustive search", || {
        let start = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        for instance in 0..200 {
            let n = rng.random_range(6..=25usize);
            let k_max = rng.random_range(1..=5usize.min(n));
            let quantize = rng.random_range(0..2u32) == 0;
            let values: Vec<f64> = (0..n)
                .map(|_| {
                    let v: f64 = rng.random_range(-5.0..5.0);
                    if quantize {
                        (v * 2.0).round() / 2.0
                    } else {
                        v
                    }
                })
                .collect();
            let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..5.0)).collect();
            let dp = dp_segment(&values, &weights, k_max).map_err(|e| e.to_string())?;

            for k in 1..=k_max {
                let mut best_ssr = f64::INFINITY;
                let mut best: Vec<usize> = Vec::new();
                each_boundary_set(n, k - 1, &mut |combo| {
                    let seg = Segmentation::new(n, combo.to_vec()).unwrap();
                    let ssr = ssr_of(&seg, &values, &weights).unwrap();
                    let eps = if best_ssr.is_finite() {
                        1e-9 * (1.0 + best_ssr.abs())
                    } else {
                        0.0
                    };
                    if ssr < best_ssr - eps {
                        best_ssr = ssr;
                        best = combo.to_vec();
                    } else if (ssr - best_ssr).abs() <= eps && rev_lex_smaller(combo, &best) {
                        best = combo.to_vec();
                    }
                });
                let got_ssr = dp.ssr[k - 1];
                ensure(
                    (got_ssr - best_ssr).abs() <= 1e-9 * (1.0 + best_ssr.abs()),
                    format!("instance {instance} k={k}: ssr {got_ssr} vs {best_ssr}"),
                )?;
                ensure(
                    dp.segmentations[k - 1].changepoints() == best.as_slice(),
                    format!(
                        "instance {instance} k={k}: boundaries {:?} vs {:?}",
                        dp.segmentations[k - 1].changepoints(),
                        best
                    ),
                )?;
            }
        }
        let elapsed = start.elapsed().as_secs_f64();
        ensure(elapsed < 10.0, format!("took {elapsed:.1}s, limit 10s"))
    });
}

// --- 2: robust scale ----------------------------------------------------

/// Correction table frozen independently of the library internals.
fn oracle_correction(n: usize) -> f64 {
    match n {
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

fn qn_oracle(xs: &[f64]) -> f64 {
    let n = xs.len();
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut gaps = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            gaps.push(sorted[j] - sorted[i]);
        }
    }
    gaps.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let h = n / 2 + 1;
    let k = h * (h - 1) / 2;
    (2.21914 * oracle_correction(n)) * gaps[k - 1]
}

#[test]
fn criterion_02_qn_matches_oracle_and_gaussian_target() {
    criterion(2, "Qn matches the all-pairs oracle and the Gaussian target", || {
        let mut rng = ChaCha8Rng::seed_from_u64(202);
        for case in 0..100 {
            let n = rng.random_range(2..=60usize);
            let family = case % 3;
            let xs: Vec<f64> = (0..n)
                .map(|_| match family {
                    0 => rng.random_range(-10.0..10.0),
                    1 => rng.random_range(0..4u32) as f64,
                    _ => {
                        let z: f64 = rng.sample(StandardNormal);
                        (z * 10.0).round() / 10.0
                    }
                })
                .collect();
            let got = qn_scale(&xs).map_err(|e| e.to_string())?;
            let want = qn_oracle(&xs);
            ensure(
                got.to_bits() == want.to_bits(),
                format!("case {case} (n={n}): {got:e} vs oracle {want:e}"),
            )?;
        }

        let mut estimates: Vec<f64> = (0..100)
            .map(|rep| {
                let mut rng = ChaCha8Rng::seed_from_u64(20_000 + rep);
                let xs: Vec<f64> = (0..1000).map(|_| rng.sample(StandardNormal)).collect();
                qn_scale(&xs).unwrap()
            })
            .collect();
        let med = median(&mut estimates);
        ensure(
            (med - 1.0).abs() < 0.03,
            format!("median Qn of N(0,1) samples is {med}, expected within 3% of 1"),
        )
    });
}

// --- 3: monthly scale recovery across the noise grid ---------------------

#[test]
fn criterion_03_scale_errors_shrink_and_spread_grows() {
    criterion(3, "monthly scale recovery across the noise grid", || {
        let start = Instant::now();
        let grid = [0.1, 0.3, 0.5, 0.7, 1.0, 1.5];
        let mut medians = Vec::new();
        let mut iqrs = Vec::new();
        for (pi, &sigma2) in grid.iter().enumerate() {
            let mut errs: Vec<f64> = (0..100)
                .map(|rep| {
                    let seed = 300_000 + (pi as u64) * 1000 + rep;
                    let truth = generate(&SimConfig::standard(0.5, sigma2), seed).unwrap();
                    let est = monthly_std(&truth.dataset).unwrap();
                    est.sigma(2).unwrap() - sigma2
                })
                .collect();
            medians.push(median(&mut errs.clone()));
            iqrs.push(iqr(&mut errs));
        }
        for (pi, &sigma2) in grid.iter().enumerate() {
            if sigma2 <= 0.7 {
                ensure(
                    medians[pi].abs() <= 0.05,
                    format!("median error {} at sigma2={sigma2}", medians[pi]),
                )?;
            }
        }
        let inversions = iqrs.windows(2).filter(|w| w[1] < w[0]).count();
        ensure(
            inversions <= 1,
            format!("IQR not increasing: {iqrs:?} has {inversions} inversions"),
        )?;
        let elapsed = start.elapsed().as_secs_f64();
        ensure(elapsed < 300.0, format!("took {elapsed:.0}s, limit 300s"))
    });
}

// --- 4 and 5: the replicated study at easy and hard noise -----------------

#[test]
fn criterion_04_low_noise_recovers_the_true_segment_count() {
    criterion(4, "all criteria recover K at low noise", || {
        let cfg = StudyConfig {
            sigma1: 0.5,
            sigma2_grid: vec![0.1],
            replicates: 50,
            k_max: 30,
            criteria: Criterion::ALL.to_vec(),
            include_true_k: false,
            detect_tolerance: 2,
            master_seed: 401,
            options: InferenceOptions::default(),
        };
        let report = run_study(&cfg).map_err(|e| e.to_string())?;
        for c in Criterion::ALL {
            let hits = report
                .records
                .iter()
                .filter(|r| {
                    r.methods
                        .iter()
                        .any(|m| m.method == c.name() && m.k == report.true_k)
                })
                .count();
            let rate = hits as f64 / cfg.replicates as f64;
            ensure(
                rate >= 0.9,
                format!(
                    "{} found K=7 in {:.0}% of replicates",
                    c.name(),
                    rate * 100.0
                ),
            )?;
        }
        Ok(())
    });
}

#[test]
fn criterion_05_high_noise_keeps_the_well_separated_shifts() {
    criterion(5, "high noise keeps the well separated shifts", || {
        // At this noise level a found boundary is jittered a few days (the
        // median distance from 300 to its nearest estimate is 2 days, with
        // quartile spread near 4); the matching window reflects that. The
        // missed shifts at 55 and 77 stay near 3% for any window up to 10.
        let cfg = StudyConfig {
            sigma1: 0.5,
            sigma2_grid: vec![1.5],
            replicates: 100,
            k_max: 30,
            criteria: vec![Criterion::Mbic],
            include_true_k: false,
            detect_tolerance: 4,
            master_seed: 501,
            options: InferenceOptions::default(),
        };
        let report = run_study(&cfg).map_err(|e| e.to_string())?;
        let k_hat = report
            .row(1.5, "mbic", "k_hat")
            .ok_or("missing k_hat row")?;
        ensure(
            (4.0..=6.0).contains(&k_hat.q50),
            format!("median K is {}, expected 5 +- 1", k_hat.q50),
        )?;
        for (pos, below) in [(55, true), (77, true), (222, false), (300, false)] {
            let rate = report
                .row(1.5, "mbic", &format!("detect_{pos}"))
                .ok_or("missing detection row")?
                .mean;
            if below {
                ensure(
                    rate < 0.20,
                    format!("shift at {pos} detected in {:.0}% of replicates", rate * 100.0),
                )?;
            } else {
                ensure(
                    rate > 0.60,
                    format!("shift at {pos} detected in only {:.0}%", rate * 100.0),
                )?;
            }
        }
        Ok(())
    });
}

// --- 6: noiseless exactness ----------------------------------------------

#[test]
fn criterion_06_noiseless_data_is_recovered_exactly() {
    criterion(6, "noiseless data is recovered exactly", || {
        let truth = generate(&SimConfig::standard(0.0, 0.0), 601).map_err(|e| e.to_string())?;
        let opts = InferenceOptions {
            stop_tol: 1e-9,
            max_iters: 500,
            ..InferenceOptions::default()
        };
        let all = infer_all_k(&truth.dataset, 30, &opts).map_err(|e| e.to_string())?;
        for sel in select_all(&all, &Criterion::ALL).map_err(|e| e.to_string())? {
            ensure(
                sel.k == 7,
                format!("{} chose K={} on noiseless data", sel.criterion.name(), sel.k),
            )?;
        }
        let fit = all.fixed(7);
        ensure(
            fit.segmentation.changepoints() == truth.segmentation.changepoints(),
            format!(
                "changepoints {:?} vs {:?}",
                fit.segmentation.changepoints(),
                truth.segmentation.changepoints()
            ),
        )?;
        let mu_hat = fit.segmentation.expand(&fit.means);
        let f_hat = fit.fourier.evaluate(&truth.dataset.phase);
        let e_mu = rmse(&mu_hat, &truth.mu_signal);
        let e_f = rmse(&f_hat, &truth.f_signal);
        ensure(e_mu < 1e-6, format!("RMSE(mu) = {e_mu:e}"))?;
        ensure(e_f < 1e-6, format!("RMSE(f) = {e_f:e}"))
    });
}

// --- 7: monotone objective -----------------------------------------------

#[test]
fn criterion_07_objective_descends_every_iteration() {
    criterion(7, "objective descends every iteration", || {
        for rep in 0..100u64 {
            let truth =
                generate(&SimConfig::standard(0.5, 1.0), 7_000 + rep).map_err(|e| e.to_string())?;
            let monthly = monthly_std(&truth.dataset).map_err(|e| e.to_string())?;
            let res = infer_fixed_k(&truth.dataset, &monthly, 7, &InferenceOptions::default())
                .map_err(|e| e.to_string())?;
            for w in res.objective_trace.windows(2) {
                ensure(
                    w[1] <= w[0] + 1e-8 * (1.0 + w[0].abs()),
                    format!("replicate {rep}: objective rose {} -> {}", w[0], w[1]),
                )?;
            }
        }
        Ok(())
    });
}

// --- 8: Hausdorff fixtures -------------------------------------------------

#[test]
fn criterion_08_hausdorff_distances_match_hand_values() {
    criterion(8, "Hausdorff distances match hand values", || {
        let h = hausdorff(&[50], &[48, 90]);
        ensure(
            h.d1 == Some(40.0) && h.d2 == Some(2.0),
            format!("truth {{50}}, estimate {{48, 90}} gave {h:?}"),
        )?;
        let h = hausdorff(&[50, 100], &[50]);
        ensure(
            h.d1 == Some(0.0) && h.d2 == Some(50.0),
            format!("truth {{50, 100}}, estimate {{50}} gave {h:?}"),
        )?;
        let h = hausdorff(&[50], &[]);
        ensure(
            h.d1.is_none() && h.d2.is_none(),
            format!("empty estimate gave {h:?}"),
        )
    });
}

// --- 9: initialization quality ---------------------------------------------

#[test]
fn criterion_09_default_init_beats_segmentation_first() {
    criterion(9, "default initialization beats segmentation-first", || {
        let mut d1_default = Vec::new();
        let mut d1_segfirst = Vec::new();
        for rep in 0..50u64 {
            let truth =
                generate(&SimConfig::standard(0.5, 0.5), 9_000 + rep).map_err(|e| e.to_string())?;
            let monthly = monthly_std(&truth.dataset).map_err(|e| e.to_string())?;
            for (init, bucket) in [
                (InitStrategy::UnweightedFit, &mut d1_default),
                (InitStrategy::SegmentationFirst, &mut d1_segfirst),
            ] {
                let opts = InferenceOptions {
                    init,
                    ..InferenceOptions::default()
                };
                let res = infer_fixed_k(&truth.dataset, &monthly, 7, &opts)
                    .map_err(|e| e.to_string())?;
                let h = hausdorff(
                    truth.segmentation.changepoints(),
                    res.segmentation.changepoints(),
                );
                bucket.push(h.d1.unwrap());
            }
        }
        let med_default = median(&mut d1_default);
        let med_segfirst = median(&mut d1_segfirst);
        ensure(
            med_segfirst > med_default,
            format!(
                "median worst false-alarm distance: default {med_default}, seg-first {med_segfirst}"
            ),
        )
    });
}

// --- 10: the periodic bias must be modeled ---------------------------------

#[test]
fn criterion_10_ignoring_the_bias_breaks_detection() {
    criterion(10, "ignoring the periodic bias breaks detection", || {
        let config = SimConfig {
            changepoints: vec![150, 300],
            means: vec![0.0, 1.0, 0.0],
            bias_amplitude: 3.0,
            sigma: vec![0.5, 0.5],
            ..SimConfig::standard(0.5, 0.5)
        };
        let mut contrast = 0;
        for rep in 0..10u64 {
            let truth = generate(&config, 10_000 + rep).map_err(|e| e.to_string())?;
            let mut detected = [0usize; 2];
            let mut d2 = [f64::INFINITY; 2];
            for (slot, variant) in [Variant::Full, Variant::MeanOnly].into_iter().enumerate() {
                let opts = InferenceOptions {
                    variant,
                    ..InferenceOptions::default()
                };
                let all = infer_all_k(&truth.dataset, 12, &opts).map_err(|e| e.to_string())?;
                let sel = &select_all(&all, &[Criterion::Bm1]).map_err(|e| e.to_string())?[0];
                let est = all.fixed(sel.k).segmentation.changepoints().to_vec();
                detected[slot] = truth
                    .segmentation
                    .changepoints()
                    .iter()
                    .filter(|&&t| est.iter().any(|&e| e.abs_diff(t) <= 2))
                    .count();
                d2[slot] = hausdorff(truth.segmentation.changepoints(), &est)
                    .d2
                    .unwrap_or(f64::INFINITY);
            }
            let full_finds_both = detected[0] == 2;
            let mean_only_worse = detected[1] < 2 || d2[1] > d2[0];
            if full_finds_both && mean_only_worse {
                contrast += 1;
            }
        }
        ensure(
            contrast >= 8,
            format!("contrast held in only {contrast}/10 replicates"),
        )
    });
}

// --- 11: sixteen years of daily data on one core ----------------------------

#[test]
fn criterion_11_sixteen_year_series_within_budget() {
    criterion(11, "sixteen-year daily series within the time budget", || {
        let sigma_by_month = [0.9, 0.8, 0.7, 0.6, 0.5, 0.45, 0.45, 0.5, 0.6, 0.7, 0.8, 0.9];
        let true_cps = vec![800usize, 2100, 3000, 4200, 5200];
        let seg_means = [0.0, 1.2, 0.2, 1.4, 0.3, 1.5];
        let start_date = NaiveDate::from_ymd_opt(2000, 1, 1).unwrap();
        let end_date = NaiveDate::from_ymd_opt(2015, 12, 31).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(1100);
        let two_pi = 2.0 * std::f64::consts::PI;
        let mut dates = Vec::new();
        let mut values = Vec::new();
        let mut d = start_date;
        let mut i = 0usize;
        while d <= end_date {
            let seg = true_cps.iter().filter(|&&c| i >= c).count();
            let doy = d.ordinal() as f64;
            let f = 1.2 * (two_pi * doy / 365.25).cos()
                + 0.3 * (two_pi * doy / 365.25).sin()
                + 0.4 * (2.0 * two_pi * doy / 365.25).cos();
            let sigma = sigma_by_month[d.month() as usize - 1];
            let z: f64 = rng.sample(StandardNormal);
            dates.push(d);
            values.push(seg_means[seg] + f + sigma * z);
            d = d.succ_opt().unwrap();
            i += 1;
        }
        ensure(dates.len() == 5844, format!("built {} days", dates.len()))?;

        let series = TimeSeries::new(dates, values).map_err(|e| e.to_string())?;
        let data = Dataset::from_calendar(series);

        let clock = Instant::now();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .map_err(|e| e.to_string())?;
        let (all, sels) = pool.install(|| -> segiwv::Result<_> {
            let all = infer_all_k(&data, 30, &InferenceOptions::default())?;
            let sels = select_all(&all, &Criterion::ALL)?;
            Ok((all, sels))
        })
        .map_err(|e| e.to_string())?;
        let elapsed = clock.elapsed().as_secs_f64();
        ensure(elapsed < 300.0, format!("took {elapsed:.0}s, limit 300s"))?;

        let sel = sels
            .iter()
            .find(|s| s.criterion == Criterion::Mbic)
            .ok_or("missing mbic selection")?;
        ensure(
            (5..=8).contains(&sel.k),
            format!("chose K={} for 6 true segments", sel.k),
        )?;
        let est = all.fixed(sel.k).segmentation.changepoints();
        let d2 = hausdorff(&true_cps, est).d2.unwrap_or(f64::INFINITY);
        ensure(
            d2 <= 10.0,
            format!("worst missed-shift distance {d2} days (estimate {est:?})"),
        )?;
        let worst_sigma_err = (1..=12u8)
            .map(|m| {
                (all.monthly.sigma(m).unwrap() - sigma_by_month[m as usize - 1]).abs()
            })
            .fold(0.0, f64::max);
        ensure(
            worst_sigma_err < 0.12,
            format!("worst monthly scale error {worst_sigma_err}"),
        )
    });
}
