//! Periodic bias model: a truncated Fourier expansion fit by weighted least
//! squares.
//!
//! The design evaluates cos and sin columns at angular frequencies 2*pi*i/L
//! for harmonics i = 1..=order against a supplied phase (day of year for
//! calendar data, raw index for designed series). There is deliberately no
//! constant column: the segment means carry every level shift, which keeps
//! the decomposition identifiable.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Basis layout for one fit: the harmonic order, the period, and which of
/// the `2 * order` columns participate. Columns are interleaved
/// `[cos_1, sin_1, cos_2, sin_2, ...]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonicDesign {
    order: usize,
    period: f64,
    active: Vec<bool>,
}

impl HarmonicDesign {
    pub fn new(order: usize, period: f64) -> Result<Self> {
        HarmonicDesign::with_active(order, period, vec![true; 2 * order])
    }

    /// A design with a fixed column mask, e.g. a first-order fit with the
    /// sine suppressed.
    pub fn with_active(order: usize, period: f64, active: Vec<bool>) -> Result<Self> {
        if order == 0 {
            return Err(Error::invalid("harmonic order must be at least 1"));
        }
        if !(period.is_finite() && period > 0.0) {
            return Err(Error::invalid(format!("period {period} must be positive")));
        }
        if active.len() != 2 * order {
            return Err(Error::invalid(format!(
                "column mask has {} entries, design has {}",
                active.len(),
                2 * order
            )));
        }
        Ok(HarmonicDesign {
            order,
            period,
            active,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn active(&self) -> &[bool] {
        &self.active
    }

    fn active_columns(&self) -> Vec<usize> {
        (0..2 * self.order).filter(|&c| self.active[c]).collect()
    }

    /// Value of global column index `c` at phase `phi`.
    fn column_value(&self, c: usize, phi: f64) -> f64 {
        let harmonic = (c / 2 + 1) as f64;
        let angle = 2.0 * std::f64::consts::PI * harmonic * phi.rem_euclid(self.period)
            / self.period;
        if c % 2 == 0 {
            angle.cos()
        } else {
            angle.sin()
        }
    }
}

/// Fitted periodic bias. Coefficients of inactive or dropped columns are
/// zero, so evaluation never needs the mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierModel {
    pub order: usize,
    pub period: f64,
    /// Cosine coefficients, `a[i]` belongs to harmonic `i + 1`.
    pub a: Vec<f64>,
    /// Sine coefficients, same layout.
    pub b: Vec<f64>,
}

impl FourierModel {
    pub fn zero(order: usize, period: f64) -> Self {
        FourierModel {
            order,
            period,
            a: vec![0.0; order],
            b: vec![0.0; order],
        }
    }

    pub fn evaluate(&self, phase: &[f64]) -> Vec<f64> {
        phase.iter().map(|&p| self.at(p)).collect()
    }

    pub fn at(&self, phi: f64) -> f64 {
        let two_pi = 2.0 * std::f64::consts::PI;
        let reduced = phi.rem_euclid(self.period);
        let mut acc = 0.0;
        for i in 0..self.order {
            let angle = two_pi * (i + 1) as f64 * reduced / self.period;
            acc += self.a[i] * angle.cos() + self.b[i] * angle.sin();
        }
        acc
    }

    /// Flat coefficient vector in design column order.
    pub fn coefficients(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.order);
        for i in 0..self.order {
            out.push(self.a[i]);
            out.push(self.b[i]);
        }
        out
    }
}

/// Evaluates a fitted model at the given phases.
pub fn evaluate_fourier(model: &FourierModel, phase: &[f64]) -> Vec<f64> {
    model.evaluate(phase)
}

/// Per column inference for a weighted fit. Entries follow the full
/// `2 * order` column grid; inactive columns hold NaN and `active = false`.
/// The weights are treated as known inverse variances, so the tests are
/// Gaussian z tests rather than t tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub active: Vec<bool>,
    pub std_errors: Vec<f64>,
    pub p_values: Vec<f64>,
}

fn check_fit_inputs(phase: &[f64], y: &[f64], w: Option<&[f64]>) -> Result<()> {
    if y.is_empty() {
        return Err(Error::invalid("empty fit input"));
    }
    if phase.len() != y.len() {
        return Err(Error::invalid(format!(
            "length mismatch: {} phases, {} values",
            phase.len(),
            y.len()
        )));
    }
    if phase.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::invalid("fit input contains non-finite values"));
    }
    if let Some(w) = w {
        if w.len() != y.len() {
            return Err(Error::invalid(format!(
                "length mismatch: {} weights, {} values",
                w.len(),
                y.len()
            )));
        }
        if w.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::invalid("weights must be finite and positive"));
        }
    }
    Ok(())
}

/// Thin-QR least squares. Returns the coefficients and the inverse of the
/// triangular factor, whose row norms are the coefficient standard errors.
/// Never forms normal equations.
fn solve_ls(x: DMatrix<f64>, rhs: DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let (n, p) = x.shape();
    if n < p {
        return Err(Error::RankDeficient(n));
    }
    let qr = x.qr();
    let r = qr.r();
    let max_diag = (0..p).map(|i| r[(i, i)].abs()).fold(0.0_f64, f64::max);
    let tol = max_diag * n as f64 * f64::EPSILON;
    if let Some(bad) = (0..p).find(|&i| r[(i, i)].abs() <= tol) {
        return Err(Error::RankDeficient(bad));
    }
    let qtb = qr.q().transpose() * rhs;
    let beta = r
        .solve_upper_triangular(&qtb)
        .ok_or(Error::RankDeficient(0))?;
    let rinv = r
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .ok_or(Error::RankDeficient(0))?;
    Ok((beta, rinv))
}

fn model_from_flat(design: &HarmonicDesign, flat: &[f64]) -> FourierModel {
    let mut model = FourierModel::zero(design.order, design.period);
    for i in 0..design.order {
        model.a[i] = flat[2 * i];
        model.b[i] = flat[2 * i + 1];
    }
    model
}

/// Weighted least squares fit of the active harmonic columns, no intercept.
/// Rows are scaled by sqrt(w) and the scaled system is solved by QR.
pub fn fit_weighted(
    design: &HarmonicDesign,
    phase: &[f64],
    y: &[f64],
    w: &[f64],
) -> Result<(FourierModel, FitDiagnostics)> {
    check_fit_inputs(phase, y, Some(w))?;
    let cols = design.active_columns();
    let total = 2 * design.order;
    let mut flat = vec![0.0; total];
    let mut std_errors = vec![f64::NAN; total];
    let mut p_values = vec![f64::NAN; total];
    if !cols.is_empty() {
        let n = y.len();
        let sqrt_w: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
        let x = DMatrix::from_fn(n, cols.len(), |r, c| {
            sqrt_w[r] * design.column_value(cols[c], phase[r])
        });
        let rhs = DVector::from_fn(n, |r, _| sqrt_w[r] * y[r]);
        let (beta, rinv) = solve_ls(x, rhs)?;
        for (local, &global) in cols.iter().enumerate() {
            let se = rinv.row(local).norm();
            let z = beta[local] / se;
            flat[global] = beta[local];
            std_errors[global] = se;
            p_values[global] = erfc(z.abs() / std::f64::consts::SQRT_2);
        }
    }
    Ok((
        model_from_flat(design, &flat),
        FitDiagnostics {
            active: design.active.clone(),
            std_errors,
            p_values,
        },
    ))
}

/// Ordinary least squares fit with an intercept column. The intercept soaks
/// up the unknown overall level and is then discarded: only the harmonic
/// coefficients are returned. Used to seed the alternating estimation before
/// any segment means exist.
pub fn fit_unweighted(design: &HarmonicDesign, phase: &[f64], y: &[f64]) -> Result<FourierModel> {
    check_fit_inputs(phase, y, None)?;
    let cols = design.active_columns();
    let n = y.len();
    let x = DMatrix::from_fn(n, cols.len() + 1, |r, c| {
        if c == 0 {
            1.0
        } else {
            design.column_value(cols[c - 1], phase[r])
        }
    });
    let rhs = DVector::from_column_slice(y);
    let (beta, _) = solve_ls(x, rhs)?;
    let mut flat = vec![0.0; 2 * design.order];
    for (local, &global) in cols.iter().enumerate() {
        flat[global] = beta[local + 1];
    }
    Ok(model_from_flat(design, &flat))
}

/// Two-stage selection: fit every active column, keep those with Gaussian
/// p-value below `alpha`, and refit on the survivors so the kept
/// coefficients are estimated without the dropped columns. An empty survivor
/// set yields the zero model.
pub fn select_significant(
    design: &HarmonicDesign,
    phase: &[f64],
    y: &[f64],
    w: &[f64],
    alpha: f64,
) -> Result<(FourierModel, FitDiagnostics)> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha {alpha} outside (0, 1)")));
    }
    let (_, full) = fit_weighted(design, phase, y, w)?;
    let survivors: Vec<bool> = full
        .active
        .iter()
        .zip(&full.p_values)
        .map(|(&a, &p)| a && p < alpha)
        .collect();
    if survivors == full.active {
        return fit_weighted(design, phase, y, w);
    }
    let reduced = HarmonicDesign::with_active(design.order, design.period, survivors)?;
    fit_weighted(&reduced, phase, y, w)
}
