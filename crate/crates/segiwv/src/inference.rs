//! Joint estimation of the periodic bias and the segmentation.
//!
//! Neither part is identifiable alone, so the estimate alternates two exact
//! minimizations of the same weighted SSR: fit the harmonic coefficients on
//! the series minus the current segment means, then re-segment the series
//! minus the current bias. Each half step cannot increase the objective, so
//! the alternation descends; it stops when the fitted curve (bias plus
//! means) moves less than a relative tolerance in sup norm.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::{
    fit_unweighted, fit_weighted, select_significant, FitDiagnostics, FourierModel,
    HarmonicDesign,
};
use crate::robust::{homogeneous_std, monthly_std, MonthlyStd};
use crate::segmentation::{dp_segment, Segmentation};
use crate::series::Dataset;

/// Model variants, historically labeled a through d.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Periodic bias with every harmonic, per month variances ("a").
    Full,
    /// Periodic bias restricted to significant harmonics ("b").
    Selected,
    /// No periodic bias at all ("c").
    MeanOnly,
    /// Full periodic bias, one pooled variance for all months ("d").
    PooledVariance,
}

impl Variant {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "a" | "full" => Ok(Variant::Full),
            "b" | "selected" => Ok(Variant::Selected),
            "c" | "mean_only" => Ok(Variant::MeanOnly),
            "d" | "pooled_variance" => Ok(Variant::PooledVariance),
            other => Err(Error::invalid(format!(
                "unknown variant {other:?}; expected a, b, c or d"
            ))),
        }
    }

    pub fn letter(self) -> char {
        match self {
            Variant::Full => 'a',
            Variant::Selected => 'b',
            Variant::MeanOnly => 'c',
            Variant::PooledVariance => 'd',
        }
    }
}

/// How the alternation is seeded before the first segmentation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitStrategy {
    /// Unweighted LS fit of the harmonics plus an intercept on the raw
    /// series; the intercept is discarded. The default.
    UnweightedFit,
    /// Segment the raw series first, then fit the bias on the residual.
    SegmentationFirst,
    /// Weighted fit of the harmonics on the raw series.
    WeightedFit,
    /// Weighted fit on the series minus its arithmetic mean.
    WeightedFitCentered,
}

impl InitStrategy {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "default" | "unweighted" => Ok(InitStrategy::UnweightedFit),
            "seg-first" | "segmentation-first" => Ok(InitStrategy::SegmentationFirst),
            "weighted" => Ok(InitStrategy::WeightedFit),
            "weighted-centered" => Ok(InitStrategy::WeightedFitCentered),
            other => Err(Error::invalid(format!(
                "unknown initialization {other:?}; expected default, seg-first, weighted or weighted-centered"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceOptions {
    pub variant: Variant,
    /// Harmonic order of the bias model.
    pub order: usize,
    /// Significance level for dropping harmonics under [`Variant::Selected`].
    pub alpha: f64,
    /// Relative sup-norm tolerance on the fitted curve between iterations.
    pub stop_tol: f64,
    pub max_iters: usize,
    pub init: InitStrategy,
    /// Re-estimate the monthly scales from the bias-corrected series before
    /// every segmentation pass. Off by default: the objective is then
    /// measured against moving weights and the descent guarantee is lost.
    pub update_variance: bool,
    /// Squared extrapolation of the coefficient fixed point, with a fallback
    /// to the plain step whenever the extrapolated objective is worse. Purely
    /// a speed device; results must not depend on it.
    pub accelerate: bool,
}

impl Default for InferenceOptions {
    fn default() -> Self {
        InferenceOptions {
            variant: Variant::Full,
            order: 4,
            alpha: 0.001,
            stop_tol: 1e-6,
            max_iters: 100,
            init: InitStrategy::UnweightedFit,
            update_variance: false,
            accelerate: false,
        }
    }
}

/// Converged state for one fixed number of segments.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixedKResult {
    pub k: usize,
    pub segmentation: Segmentation,
    /// Weighted mean per segment.
    pub means: Vec<f64>,
    pub fourier: FourierModel,
    /// Column inference of the last bias fit; absent for [`Variant::MeanOnly`].
    pub diagnostics: Option<FitDiagnostics>,
    /// Weighted SSR of series minus bias minus means at the returned state.
    pub ssr: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after every completed iteration, for descent checks.
    pub objective_trace: Vec<f64>,
}

impl FixedKResult {
    /// Fitted curve: bias plus expanded segment means.
    pub fn fitted(&self, data: &Dataset) -> Vec<f64> {
        let f = self.fourier.evaluate(&data.phase);
        let mu = self.segmentation.expand(&self.means);
        f.iter().zip(mu).map(|(a, b)| a + b).collect()
    }
}

/// Results for every K = 1..=k_max plus the scale estimate they share.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AllKResult {
    pub per_k: Vec<FixedKResult>,
    pub monthly: MonthlyStd,
}

impl AllKResult {
    pub fn k_max(&self) -> usize {
        self.per_k.len()
    }

    pub fn ssr_curve(&self) -> Vec<f64> {
        self.per_k.iter().map(|r| r.ssr).collect()
    }

    pub fn fixed(&self, k: usize) -> &FixedKResult {
        &self.per_k[k - 1]
    }
}

fn sup_norm_change(new: &[f64], old: &[f64]) -> f64 {
    let scale = 1.0 + old.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let diff = new
        .iter()
        .zip(old)
        .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    diff / scale
}

/// One alternation state: everything needed to report or to continue.
#[derive(Clone)]
struct Snapshot {
    segmentation: Segmentation,
    means: Vec<f64>,
    fourier: FourierModel,
    diagnostics: Option<FitDiagnostics>,
    ssr: f64,
    curve: Vec<f64>,
}

struct Engine<'a> {
    data: &'a Dataset,
    design: HarmonicDesign,
    k: usize,
    opts: &'a InferenceOptions,
    weights: Vec<f64>,
}

impl<'a> Engine<'a> {
    fn new(data: &'a Dataset, monthly: &MonthlyStd, k: usize, opts: &'a InferenceOptions) -> Result<Self> {
        let weights = monthly.weights_for(&data.months)?;
        let design = HarmonicDesign::new(opts.order, data.period)?;
        Ok(Engine {
            data,
            design,
            k,
            opts,
            weights,
        })
    }

    fn fit_bias(&self, target: &[f64]) -> Result<(FourierModel, Option<FitDiagnostics>)> {
        match self.opts.variant {
            Variant::Selected => {
                let (m, d) = select_significant(
                    &self.design,
                    &self.data.phase,
                    target,
                    &self.weights,
                    self.opts.alpha,
                )?;
                Ok((m, Some(d)))
            }
            _ => {
                let (m, d) =
                    fit_weighted(&self.design, &self.data.phase, target, &self.weights)?;
                Ok((m, Some(d)))
            }
        }
    }

    /// Re-estimate the monthly scales on the bias-corrected series.
    fn refresh_weights(&mut self, bias: &[f64]) -> Result<()> {
        let values: Vec<f64> = self
            .data
            .series
            .values()
            .iter()
            .zip(bias)
            .map(|(y, f)| y - f)
            .collect();
        let corrected = Dataset::with_design(
            crate::series::TimeSeries::new(self.data.series.dates().to_vec(), values)?,
            self.data.months.clone(),
            self.data.phase.clone(),
            self.data.period,
        )?;
        let monthly = match self.opts.variant {
            Variant::PooledVariance => homogeneous_std(&corrected)?,
            _ => monthly_std(&corrected)?,
        };
        self.weights = monthly.weights_for(&self.data.months)?;
        Ok(())
    }

    /// Step (b): given a bias model, segment the corrected series and report
    /// the full state, including the next bias fit target.
    fn segment_given(&self, fourier: FourierModel, diagnostics: Option<FitDiagnostics>) -> Result<Snapshot> {
        let y = self.data.series.values();
        let f_vals = fourier.evaluate(&self.data.phase);
        let resid: Vec<f64> = y.iter().zip(&f_vals).map(|(a, b)| a - b).collect();
        let dp = dp_segment(&resid, &self.weights, self.k)?;
        let segmentation = dp.segmentations[self.k - 1].clone();
        let means = dp.means[self.k - 1].clone();
        let ssr = dp.ssr[self.k - 1];
        let mu = segmentation.expand(&means);
        let curve: Vec<f64> = f_vals.iter().zip(&mu).map(|(a, b)| a + b).collect();
        Ok(Snapshot {
            segmentation,
            means,
            fourier,
            diagnostics,
            ssr,
            curve,
        })
    }

    /// Step (a) for the next iteration: bias fit on series minus means.
    fn next_bias(&self, snap: &Snapshot) -> Result<(FourierModel, Option<FitDiagnostics>)> {
        let mu = snap.segmentation.expand(&snap.means);
        let target: Vec<f64> = self
            .data
            .series
            .values()
            .iter()
            .zip(&mu)
            .map(|(y, m)| y - m)
            .collect();
        self.fit_bias(&target)
    }

    fn initial_bias(&self) -> Result<(FourierModel, Option<FitDiagnostics>)> {
        let y = self.data.series.values();
        match self.opts.init {
            InitStrategy::UnweightedFit => {
                let m = fit_unweighted(&self.design, &self.data.phase, y)?;
                Ok((m, None))
            }
            InitStrategy::WeightedFit => {
                let (m, d) = fit_weighted(&self.design, &self.data.phase, y, &self.weights)?;
                Ok((m, Some(d)))
            }
            InitStrategy::WeightedFitCentered => {
                let mean = y.iter().sum::<f64>() / y.len() as f64;
                let centered: Vec<f64> = y.iter().map(|v| v - mean).collect();
                let (m, d) =
                    fit_weighted(&self.design, &self.data.phase, &centered, &self.weights)?;
                Ok((m, Some(d)))
            }
            InitStrategy::SegmentationFirst => {
                let dp = dp_segment(y, &self.weights, self.k)?;
                let seg = &dp.segmentations[self.k - 1];
                let mu = seg.expand(&dp.means[self.k - 1]);
                let target: Vec<f64> = y.iter().zip(&mu).map(|(a, b)| a - b).collect();
                self.fit_bias(&target)
            }
        }
    }
}

/// Estimates bias, segmentation, and means for one fixed K.
///
/// On convergence the returned state is the last iterate; if `max_iters` is
/// exhausted first, the best iterate by objective is returned with
/// `converged = false`.
pub fn infer_fixed_k(
    data: &Dataset,
    monthly: &MonthlyStd,
    k: usize,
    opts: &InferenceOptions,
) -> Result<FixedKResult> {
    validate_options(opts)?;
    if k == 0 || k > data.len() {
        return Err(Error::invalid(format!(
            "k {k} outside 1..={}",
            data.len()
        )));
    }
    let mut engine = Engine::new(data, monthly, k, opts)?;

    if opts.variant == Variant::MeanOnly {
        let zero = FourierModel::zero(opts.order, data.period);
        let snap = engine.segment_given(zero, None)?;
        return Ok(FixedKResult {
            k,
            segmentation: snap.segmentation,
            means: snap.means,
            fourier: snap.fourier,
            diagnostics: None,
            ssr: snap.ssr,
            iterations: 1,
            converged: true,
            objective_trace: vec![snap.ssr],
        });
    }

    if opts.accelerate {
        accelerated_loop(&mut engine, k)
    } else {
        plain_loop(&mut engine, k)
    }
}

fn validate_options(opts: &InferenceOptions) -> Result<()> {
    if opts.order == 0 {
        return Err(Error::invalid("order must be at least 1"));
    }
    if !(opts.alpha > 0.0 && opts.alpha < 1.0) {
        return Err(Error::invalid(format!("alpha {} outside (0, 1)", opts.alpha)));
    }
    if !(opts.stop_tol > 0.0 && opts.stop_tol.is_finite()) {
        return Err(Error::invalid(format!(
            "stop_tol {} must be positive",
            opts.stop_tol
        )));
    }
    if opts.max_iters == 0 {
        return Err(Error::invalid("max_iters must be at least 1"));
    }
    Ok(())
}

fn finish(
    k: usize,
    best: Snapshot,
    iterations: usize,
    converged: bool,
    trace: Vec<f64>,
) -> Result<FixedKResult> {
    Ok(FixedKResult {
        k,
        segmentation: best.segmentation,
        means: best.means,
        fourier: best.fourier,
        diagnostics: best.diagnostics,
        ssr: best.ssr,
        iterations,
        converged,
        objective_trace: trace,
    })
}

fn plain_loop(engine: &mut Engine, k: usize) -> Result<FixedKResult> {
    let opts = engine.opts;
    let (mut fourier, mut diag) = engine.initial_bias()?;
    let mut trace = Vec::new();
    let mut best: Option<Snapshot> = None;
    let mut prev_curve: Option<Vec<f64>> = None;

    for iter in 1..=opts.max_iters {
        if opts.update_variance {
            let f_vals = fourier.evaluate(&engine.data.phase);
            engine.refresh_weights(&f_vals)?;
        }
        let snap = engine.segment_given(fourier.clone(), diag.clone())?;
        trace.push(snap.ssr);
        let improved = best.as_ref().map_or(true, |b| snap.ssr <= b.ssr);
        if improved {
            best = Some(snap.clone());
        }
        if let Some(prev) = &prev_curve {
            if sup_norm_change(&snap.curve, prev) < opts.stop_tol {
                return finish(k, snap, iter, true, trace);
            }
        }
        prev_curve = Some(snap.curve.clone());
        let (f_next, d_next) = engine.next_bias(&snap)?;
        fourier = f_next;
        diag = d_next;
    }
    let best = best.expect("at least one iteration ran");
    finish(k, best, opts.max_iters, false, trace)
}

/// Squared extrapolation over the coefficient fixed point map F. Each cycle
/// spends two plain evaluations, proposes the extrapolated point, and keeps
/// it only when its objective does not exceed the plain two-step objective.
fn accelerated_loop(engine: &mut Engine, k: usize) -> Result<FixedKResult> {
    let opts = engine.opts;
    let (mut fourier, mut diag) = engine.initial_bias()?;
    let mut trace = Vec::new();
    let mut best: Option<Snapshot> = None;
    let mut prev_curve: Option<Vec<f64>> = None;
    let mut iterations = 0;

    let consider = |snap: &Snapshot, best: &mut Option<Snapshot>| {
        if best.as_ref().map_or(true, |b| snap.ssr <= b.ssr) {
            *best = Some(snap.clone());
        }
    };

    while iterations < opts.max_iters {
        // Plain step from the current coefficients.
        let snap0 = engine.segment_given(fourier.clone(), diag.clone())?;
        iterations += 1;
        trace.push(snap0.ssr);
        consider(&snap0, &mut best);
        if let Some(prev) = &prev_curve {
            if sup_norm_change(&snap0.curve, prev) < opts.stop_tol {
                return finish(k, snap0, iterations, true, trace);
            }
        }
        prev_curve = Some(snap0.curve.clone());
        let (f1, d1) = engine.next_bias(&snap0)?;
        if iterations >= opts.max_iters {
            break;
        }

        // Second plain step.
        let snap1 = engine.segment_given(f1.clone(), d1.clone())?;
        iterations += 1;
        trace.push(snap1.ssr);
        consider(&snap1, &mut best);
        if sup_norm_change(&snap1.curve, prev_curve.as_ref().unwrap()) < opts.stop_tol {
            return finish(k, snap1, iterations, true, trace);
        }
        prev_curve = Some(snap1.curve.clone());
        let (f2, d2) = engine.next_bias(&snap1)?;

        // Extrapolate c0 -> c1 -> c2 in coefficient space.
        let c0 = fourier.coefficients();
        let c1 = f1.coefficients();
        let c2 = f2.coefficients();
        let r: Vec<f64> = c1.iter().zip(&c0).map(|(a, b)| a - b).collect();
        let v: Vec<f64> = c2
            .iter()
            .zip(&c1)
            .zip(&r)
            .map(|((a, b), rr)| a - b - rr)
            .collect();
        let v_norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if v_norm < 1e-300 {
            fourier = f2;
            diag = d2;
            continue;
        }
        let r_norm = r.iter().map(|x| x * x).sum::<f64>().sqrt();
        let alpha = (-(r_norm / v_norm)).min(-1.0);
        let extrapolated: Vec<f64> = (0..c0.len())
            .map(|i| c0[i] - 2.0 * alpha * r[i] + alpha * alpha * v[i])
            .collect();
        let mut f_ex = FourierModel::zero(opts.order, engine.data.period);
        for i in 0..opts.order {
            f_ex.a[i] = extrapolated[2 * i];
            f_ex.b[i] = extrapolated[2 * i + 1];
        }
        if iterations >= opts.max_iters {
            break;
        }
        let snap_ex = engine.segment_given(f_ex, None)?;
        iterations += 1;
        if snap_ex.ssr <= snap1.ssr {
            // Keep the extrapolated point; refit its bias to stay on the map.
            trace.push(snap_ex.ssr);
            consider(&snap_ex, &mut best);
            prev_curve = Some(snap_ex.curve.clone());
            let (f_next, d_next) = engine.next_bias(&snap_ex)?;
            fourier = f_next;
            diag = d_next;
        } else {
            fourier = f2;
            diag = d2;
        }
    }
    let best = best.expect("at least one iteration ran");
    finish(k, best, opts.max_iters, false, trace)
}

/// Runs [`infer_fixed_k`] for every K = 1..=k_max. The scale estimate is made
/// once from the data (robust per month, or pooled under
/// [`Variant::PooledVariance`]) and shared across K. Independent K are solved
/// in parallel; under [`Variant::MeanOnly`] a single DP pass serves them all.
pub fn infer_all_k(data: &Dataset, k_max: usize, opts: &InferenceOptions) -> Result<AllKResult> {
    validate_options(opts)?;
    if k_max == 0 || k_max > data.len() {
        return Err(Error::invalid(format!(
            "k_max {k_max} outside 1..={}",
            data.len()
        )));
    }
    let monthly = match opts.variant {
        Variant::PooledVariance => homogeneous_std(data)?,
        _ => monthly_std(data)?,
    };

    if opts.variant == Variant::MeanOnly {
        let weights = monthly.weights_for(&data.months)?;
        let dp = dp_segment(data.series.values(), &weights, k_max)?;
        let per_k = (1..=k_max)
            .map(|k| FixedKResult {
                k,
                segmentation: dp.segmentations[k - 1].clone(),
                means: dp.means[k - 1].clone(),
                fourier: FourierModel::zero(opts.order, data.period),
                diagnostics: None,
                ssr: dp.ssr[k - 1],
                iterations: 1,
                converged: true,
                objective_trace: vec![dp.ssr[k - 1]],
            })
            .collect();
        return Ok(AllKResult { per_k, monthly });
    }

    let per_k: Result<Vec<FixedKResult>> = (1..=k_max)
        .into_par_iter()
        .map(|k| infer_fixed_k(data, &monthly, k, opts))
        .collect();
    Ok(AllKResult {
        per_k: per_k?,
        monthly,
    })
}
