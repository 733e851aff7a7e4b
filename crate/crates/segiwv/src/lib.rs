//! Detection of mean shifts in daily difference series.
//!
//! The signal model is a piecewise constant mean plus a smooth periodic bias,
//! observed through noise whose variance depends on the calendar month. The
//! pipeline estimates the monthly scales robustly from lag-1 differences,
//! alternates a weighted periodic fit with an exact dynamic programming
//! segmentation, and picks the number of segments with penalized criteria.

pub mod error;
pub mod fourier;
pub mod inference;
pub mod robust;
pub mod segmentation;
pub mod selection;
pub mod series;
pub mod simulation;
pub mod validation;

pub use error::{Error, ErrorClass, Result};
pub use fourier::{evaluate_fourier, fit_unweighted, fit_weighted, select_significant};
pub use fourier::{FitDiagnostics, FourierModel, HarmonicDesign};
pub use inference::{infer_all_k, infer_fixed_k, AllKResult, FixedKResult, InferenceOptions, InitStrategy, Variant};
pub use robust::{homogeneous_std, monthly_std, month_differences, qn_scale, DiffSample, MonthlyStd, ScaleSource};
pub use segmentation::{dp_segment, ssr_of, weighted_mean, CostMatrix, DpResult, Segmentation};
pub use selection::{select_all, select_bm1, select_bm2, select_lavielle, select_mbic, Criterion, SelectionResult};
pub use series::{ingest, read_series_csv, Dataset, IngestReport, MonthIndex, TimeSeries};
pub use simulation::{generate, hausdorff, rmse, run_study, write_study_outputs, Hausdorff, SimConfig, StudyConfig, StudyReport};
pub use validation::{classify_outliers, read_metadata_csv, validate, Detection, DetectionRow, MetadataEvent, MetadataLog, OutlierParams, ValidationReport};
