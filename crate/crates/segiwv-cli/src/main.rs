//! Command line front end: segment a series file, run the simulation study,
//! or validate detected changepoints against maintenance metadata.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::exit;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use segiwv::{
    classify_outliers, infer_all_k, read_metadata_csv, read_series_csv, select_all, validate,
    Criterion, Dataset, Detection, Error, ErrorClass, FourierModel, InferenceOptions,
    InitStrategy, MetadataEvent, MonthlyStd, OutlierParams, Variant,
};

#[derive(Parser)]
#[command(
    name = "segiwv",
    version,
    about = "Mean-shift detection in daily series with periodic bias and monthly variances"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Segment one series CSV and write result.json plus series_fit.csv.
    Segment(SegmentArgs),
    /// Run the replicated synthetic study and write its summary CSVs.
    Simulate(SimulateArgs),
    /// Compare result.json changepoints against a metadata event log.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct InferenceArgs {
    /// Model variant: a = periodic bias + monthly variances, b = significant
    /// harmonics only, c = mean only, d = pooled variance.
    #[arg(long, default_value = "a", value_parser = parse_variant)]
    variant: Variant,
    /// Harmonic order of the periodic bias.
    #[arg(long, default_value_t = 4)]
    order: usize,
    /// Significance level for harmonic selection under variant b.
    #[arg(long, default_value_t = 0.001)]
    alpha: f64,
    /// Relative stopping tolerance of the alternation.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long = "max-iters", default_value_t = 100)]
    max_iters: usize,
    /// Initialization: default, seg-first, weighted or weighted-centered.
    #[arg(long, default_value = "default", value_parser = parse_init)]
    init: InitStrategy,
    /// Re-estimate monthly scales from the bias-corrected series each pass.
    #[arg(long = "update-variance")]
    update_variance: bool,
    /// Squared extrapolation of the alternation fixed point.
    #[arg(long)]
    accelerate: bool,
}

impl InferenceArgs {
    fn to_options(&self) -> InferenceOptions {
        InferenceOptions {
            variant: self.variant,
            order: self.order,
            alpha: self.alpha,
            stop_tol: self.tol,
            max_iters: self.max_iters,
            init: self.init,
            update_variance: self.update_variance,
            accelerate: self.accelerate,
        }
    }
}

#[derive(Args)]
struct SegmentArgs {
    /// Series CSV: date,value or date,gnss,erai.
    #[arg(long)]
    input: PathBuf,
    /// Station name recorded in the output; defaults to the input file stem.
    #[arg(long)]
    station: Option<String>,
    #[arg(long, default_value_t = 30)]
    kmax: usize,
    /// Comma list of selection rules: bm1, bm2, lav, mbic.
    #[arg(long, default_value = "bm1,bm2,lav,mbic")]
    criteria: String,
    #[command(flatten)]
    inference: InferenceArgs,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 0.5)]
    sigma1: f64,
    /// Comma list of second noise scales.
    #[arg(long, value_delimiter = ',', default_value = "1.0")]
    sigma2: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    replicates: usize,
    #[arg(long, default_value_t = 30)]
    kmax: usize,
    #[arg(long, default_value = "bm1,bm2,lav,mbic")]
    criteria: String,
    /// Detection tolerance around a true changepoint, in days.
    #[arg(long = "detect-tol", default_value_t = 2)]
    detect_tol: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[command(flatten)]
    inference: InferenceArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    /// A result.json file, or a directory scanned for *.json.
    #[arg(long)]
    results: PathBuf,
    /// Metadata CSV: station,date,type.
    #[arg(long)]
    metadata: PathBuf,
    #[arg(long = "window-days", default_value_t = 30)]
    window_days: i64,
    #[arg(long)]
    out: PathBuf,
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    Variant::parse(s).map_err(|e| e.to_string())
}

fn parse_init(s: &str) -> Result<InitStrategy, String> {
    InitStrategy::parse(s).map_err(|e| e.to_string())
}

fn parse_criteria(list: &str) -> segiwv::Result<Vec<Criterion>> {
    let mut out = Vec::new();
    for item in list.split(',') {
        let item = item.trim();
        if item.is_empty() {
            continue;
        }
        let c = Criterion::parse(item)?;
        if !out.contains(&c) {
            out.push(c);
        }
    }
    if out.is_empty() {
        return Err(Error::invalid("no selection criteria given"));
    }
    Ok(out)
}

/// One detected changepoint as written to result.json. `position` is the
/// exclusive end of its segment; `date` is the first observation after the
/// shift.
#[derive(Serialize, Deserialize)]
struct ChangepointDoc {
    position: usize,
    date: NaiveDate,
    outlier: bool,
}

#[derive(Serialize, Deserialize)]
struct SelectionDoc {
    criterion: Criterion,
    k: usize,
    alpha: Option<f64>,
    converged: bool,
    iterations: usize,
    ssr: f64,
    changepoints: Vec<ChangepointDoc>,
    means: Vec<f64>,
    fourier: FourierModel,
}

#[derive(Serialize, Deserialize)]
struct ResultDoc {
    station: String,
    n: usize,
    start: NaiveDate,
    end: NaiveDate,
    dropped_non_finite: usize,
    variant: Variant,
    k_max: usize,
    monthly: MonthlyStd,
    ssr_curve: Vec<f64>,
    selections: Vec<SelectionDoc>,
}

fn main() {
    if let Err(msg) = cap_threads() {
        eprintln!("error: {msg}");
        exit(1);
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            exit(code);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        exit(match e.class() {
            ErrorClass::Usage => 1,
            ErrorClass::Data => 2,
            ErrorClass::Internal => 3,
        });
    }
}

/// SEGIWV_THREADS caps the rayon pool before any parallel work starts.
fn cap_threads() -> Result<(), String> {
    match std::env::var("SEGIWV_THREADS") {
        Err(_) => Ok(()),
        Ok(raw) => {
            let n: usize = raw
                .parse()
                .map_err(|_| format!("SEGIWV_THREADS={raw:?} is not a thread count"))?;
            if n == 0 {
                return Err("SEGIWV_THREADS must be at least 1".to_string());
            }
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| e.to_string())
        }
    }
}

fn run(cli: Cli) -> segiwv::Result<()> {
    match cli.cmd {
        Cmd::Segment(args) => run_segment(args),
        Cmd::Simulate(args) => run_simulate(args),
        Cmd::Validate(args) => run_validate(args),
    }
}

fn run_segment(args: SegmentArgs) -> segiwv::Result<()> {
    let criteria = parse_criteria(&args.criteria)?;
    let report = read_series_csv(&args.input)?;
    let station = args.station.clone().unwrap_or_else(|| {
        args.input
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "station".to_string())
    });
    let data = Dataset::from_calendar(report.series);
    let opts = args.inference.to_options();
    let all = infer_all_k(&data, args.kmax, &opts)?;
    let selections = select_all(&all, &criteria)?;

    let dates = data.series.dates();
    let mut selection_docs = Vec::with_capacity(selections.len());
    for sel in &selections {
        let fit = all.fixed(sel.k);
        let flags = classify_outliers(
            &data,
            &fit.segmentation,
            &fit.means,
            &all.monthly,
            &OutlierParams::default(),
        )?;
        let changepoints = fit
            .segmentation
            .changepoints()
            .iter()
            .zip(&flags)
            .map(|(&position, &outlier)| ChangepointDoc {
                position,
                date: dates[position],
                outlier,
            })
            .collect();
        selection_docs.push(SelectionDoc {
            criterion: sel.criterion,
            k: sel.k,
            alpha: sel.alpha,
            converged: fit.converged,
            iterations: fit.iterations,
            ssr: fit.ssr,
            changepoints,
            means: fit.means.clone(),
            fourier: fit.fourier.clone(),
        });
    }

    let doc = ResultDoc {
        station: station.clone(),
        n: data.len(),
        start: dates[0],
        end: dates[data.len() - 1],
        dropped_non_finite: report.dropped_non_finite,
        variant: opts.variant,
        k_max: args.kmax,
        monthly: all.monthly.clone(),
        ssr_curve: all.ssr_curve(),
        selections: selection_docs,
    };

    fs::create_dir_all(&args.out)?;
    let json_path = args.out.join("result.json");
    let mut file = fs::File::create(&json_path)?;
    serde_json::to_writer_pretty(&mut file, &doc)?;
    use std::io::Write as _;
    writeln!(file)?;

    // Fitted decomposition under the first requested criterion.
    let first = all.fixed(doc.selections[0].k);
    let f = first.fourier.evaluate(&data.phase);
    let mu = first.segmentation.expand(&first.means);
    let values = data.series.values();
    let mut w = csv::Writer::from_path(args.out.join("series_fit.csv"))?;
    w.write_record(["date", "y", "mu", "f", "residual"])?;
    for i in 0..data.len() {
        w.write_record([
            dates[i].to_string(),
            values[i].to_string(),
            mu[i].to_string(),
            f[i].to_string(),
            (values[i] - mu[i] - f[i]).to_string(),
        ])?;
    }
    w.flush()?;

    println!(
        "{station}: {} points ({} non-finite dropped), variant {}",
        data.len(),
        report.dropped_non_finite,
        opts.variant.letter()
    );
    for sel in &doc.selections {
        let positions: Vec<String> = sel
            .changepoints
            .iter()
            .map(|c| c.date.to_string())
            .collect();
        println!(
            "  {:>4}: K = {} [{}]",
            sel.criterion.name(),
            sel.k,
            positions.join(", ")
        );
    }
    Ok(())
}

fn run_simulate(args: SimulateArgs) -> segiwv::Result<()> {
    let criteria = parse_criteria(&args.criteria)?;
    let cfg = segiwv::StudyConfig {
        sigma1: args.sigma1,
        sigma2_grid: args.sigma2.clone(),
        replicates: args.replicates,
        k_max: args.kmax,
        criteria,
        include_true_k: true,
        detect_tolerance: args.detect_tol,
        master_seed: args.seed,
        options: args.inference.to_options(),
    };
    let report = segiwv::run_study(&cfg)?;
    segiwv::write_study_outputs(&report, &args.out)?;
    println!(
        "{} replicates x {} noise levels -> {}",
        args.replicates,
        args.sigma2.len(),
        args.out.display()
    );
    Ok(())
}

fn load_result_docs(path: &Path) -> segiwv::Result<Vec<ResultDoc>> {
    let mut paths = Vec::new();
    if path.is_dir() {
        for entry in fs::read_dir(path)? {
            let p = entry?.path();
            if p.extension().is_some_and(|e| e == "json") {
                paths.push(p);
            }
        }
        paths.sort();
    } else {
        paths.push(path.to_path_buf());
    }
    let mut docs = Vec::new();
    for p in paths {
        let file = fs::File::open(&p)?;
        let doc: ResultDoc = serde_json::from_reader(file)?;
        docs.push(doc);
    }
    if docs.is_empty() {
        return Err(Error::invalid(format!(
            "no result documents under {}",
            path.display()
        )));
    }
    Ok(docs)
}

fn run_validate(args: ValidateArgs) -> segiwv::Result<()> {
    let log = read_metadata_csv(&args.metadata)?;
    let docs = load_result_docs(&args.results)?;
    fs::create_dir_all(&args.out)?;

    let mut report_w = csv::Writer::from_path(args.out.join("validation_report.csv"))?;
    report_w.write_record([
        "criterion",
        "station",
        "detections",
        "validated",
        "outliers",
        "pct_with_outliers",
        "pct_without_outliers",
    ])?;
    let mut detail_w = csv::Writer::from_path(args.out.join("detections.csv"))?;
    detail_w.write_record([
        "station",
        "criterion",
        "position",
        "date",
        "outlier",
        "validated",
        "event_date",
        "event_kind",
        "distance_days",
    ])?;

    // criterion -> (detections, validated, outliers, validated non-outlier,
    // non-outlier detections)
    let mut totals: BTreeMap<String, [usize; 5]> = BTreeMap::new();
    for doc in &docs {
        let events: Vec<MetadataEvent> = log
            .for_station(&doc.station)
            .into_iter()
            .cloned()
            .collect();
        if events.is_empty() {
            eprintln!("warning: no metadata events for station {}", doc.station);
        }
        for sel in &doc.selections {
            let detections: Vec<Detection> = sel
                .changepoints
                .iter()
                .map(|c| Detection {
                    position: c.position,
                    date: c.date,
                    outlier: c.outlier,
                })
                .collect();
            let rep = validate(&detections, &events, args.window_days)?;
            let name = sel.criterion.name().to_string();
            let t = totals.entry(name.clone()).or_default();
            t[0] += rep.detections;
            t[1] += rep.validated;
            t[2] += rep.outliers;
            t[3] += rep.validated_non_outlier;
            t[4] += rep.non_outlier_detections;
            report_w.write_record([
                name.clone(),
                doc.station.clone(),
                rep.detections.to_string(),
                rep.validated.to_string(),
                rep.outliers.to_string(),
                format!("{:.1}", rep.pct_with_outliers),
                format!("{:.1}", rep.pct_without_outliers),
            ])?;
            for row in &rep.rows {
                detail_w.write_record([
                    doc.station.clone(),
                    name.clone(),
                    row.position.to_string(),
                    row.date.to_string(),
                    row.outlier.to_string(),
                    row.validated.to_string(),
                    row.event_date.map(|d| d.to_string()).unwrap_or_default(),
                    row.event_kind.map(String::from).unwrap_or_default(),
                    row.distance_days.map(|d| d.to_string()).unwrap_or_default(),
                ])?;
            }
        }
    }

    let pct = |num: usize, den: usize| {
        if den == 0 {
            "NaN".to_string()
        } else {
            format!("{:.1}", 100.0 * num as f64 / den as f64)
        }
    };
    for (name, t) in &totals {
        report_w.write_record([
            name.clone(),
            "ALL".to_string(),
            t[0].to_string(),
            t[1].to_string(),
            t[2].to_string(),
            pct(t[1], t[0]),
            pct(t[3], t[4]),
        ])?;
        println!(
            "{name}: {} detections, {} validated ({} with outliers, {} without)",
            t[0],
            t[1],
            pct(t[1], t[0]),
            pct(t[3], t[4])
        );
    }
    report_w.flush()?;
    detail_w.flush()?;
    Ok(())
}
