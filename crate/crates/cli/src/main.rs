//! `rbig` command-line front end.
//!
//! Exit codes: 0 success, 2 usage or I/O or parse errors, 3 domain and fit
//! errors.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use rbig::detectors::{
    Detector, DetectorKind, FitOptions, KernelConfig, SigmaRule, DEFAULT_MAX_SUPPORT,
    DEFAULT_RETAIN_FRACTION, DEFAULT_RX_LAMBDA,
};
use rbig::evaluation::{self, LabelMask};
use rbig::raster::{self, RasterImage, ScoreMap};
use rbig::{toy, DataMatrix, Error, GaussianizationModel, RbigConfig, RngState, RotationKind};

#[derive(Parser)]
#[command(
    name = "rbig",
    version,
    about = "Gaussianization-based density estimation and anomaly/change detection"
)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "RBIG_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a detector on a raster (.mbrs) or CSV and save it.
    Fit(FitCmd),
    /// Score a raster or CSV with a saved model.
    Score(ScoreCmd),
    /// Fit on the before-image and score the after-image.
    DetectChange(ChangeCmd),
    /// ROC, precision-recall, partial AUC and bootstrap against a mask.
    Eval(EvalCmd),
    /// Sample from a saved RBIG model.
    Synth(SynthCmd),
    /// Generate a synthetic dataset.
    MakeToy(ToyCmd),
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Rbig,
    Rx,
    Krx,
    Kde,
    Hybrid,
}

impl From<Method> for DetectorKind {
    fn from(m: Method) -> Self {
        match m {
            Method::Rbig => DetectorKind::Rbig,
            Method::Rx => DetectorKind::Rx,
            Method::Krx => DetectorKind::Krx,
            Method::Kde => DetectorKind::Kde,
            Method::Hybrid => DetectorKind::Hybrid,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Rotation {
    Pca,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum Sigma {
    Median,
    Mean,
}

#[derive(Args)]
struct MethodArgs {
    #[arg(long, value_enum, default_value = "rbig")]
    method: Method,
    /// Maximum RBIG layers.
    #[arg(long, default_value_t = 100)]
    layers: usize,
    /// Histogram bins per marginal (default: ⌈√ℓ⌉ clamped to [16, 1024]).
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long, value_enum, default_value = "pca")]
    rotation: Rotation,
    /// Early-stop threshold on summed marginal non-Gaussianity, per dimension.
    #[arg(long, default_value_t = 1e-3)]
    tol: f64,
    #[arg(long, default_value_t = DEFAULT_RETAIN_FRACTION)]
    retain_fraction: f64,
    #[arg(long, value_enum, default_value = "median")]
    sigma_rule: Sigma,
    #[arg(long, default_value_t = DEFAULT_MAX_SUPPORT)]
    max_support: usize,
    /// KRX ridge (default: 1e-3·trace(K_c)/n).
    #[arg(long)]
    krx_reg: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_RX_LAMBDA)]
    rx_lambda: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl MethodArgs {
    fn options(&self) -> FitOptions {
        FitOptions {
            kind: self.method.into(),
            rbig: RbigConfig {
                max_layers: self.layers,
                bins: self.bins,
                rotation: match self.rotation {
                    Rotation::Pca => RotationKind::Pca,
                    Rotation::Random => RotationKind::Random,
                },
                tol_negentropy: self.tol,
                seed: self.seed,
            },
            kernel: KernelConfig {
                sigma_rule: match self.sigma_rule {
                    Sigma::Median => SigmaRule::Median,
                    Sigma::Mean => SigmaRule::Mean,
                },
                max_support: self.max_support,
                reg_lambda: self.krx_reg,
                seed: self.seed,
            },
            rx_lambda: self.rx_lambda,
            retain_fraction: self.retain_fraction,
        }
    }
}

#[derive(Args)]
struct FitCmd {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    model_out: PathBuf,
    #[command(flatten)]
    method: MethodArgs,
}

#[derive(Args)]
struct ScoreCmd {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
    /// Output scores: `.mbrs` score map (raster input only) or `.csv`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ChangeCmd {
    #[arg(long)]
    before: PathBuf,
    #[arg(long)]
    after: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Also save the model fitted on the before-image.
    #[arg(long)]
    model_out: Option<PathBuf>,
    #[command(flatten)]
    method: MethodArgs,
}

#[derive(Args)]
struct EvalCmd {
    /// Scores as `.csv` (one column) or `.mbrs` score map.
    #[arg(long)]
    scores: PathBuf,
    /// Labels as `.csv` (one 0/1 column) or `.mbrs` mask.
    #[arg(long)]
    mask: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.3")]
    fpr_caps: Vec<f64>,
    /// Bootstrap runs; 0 disables the bootstrap.
    #[arg(long, default_value_t = 1000)]
    bootstrap: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Writes `<prefix>_roc.csv`, `<prefix>_pr.csv` and `<prefix>_summary.json`.
    #[arg(long)]
    out_prefix: String,
}

#[derive(Args)]
struct SynthCmd {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ToyKind {
    Ring,
    Gaussian,
    Mixture,
    CdPair,
}

#[derive(Args)]
struct ToyCmd {
    #[arg(long, value_enum)]
    kind: ToyKind,
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long, default_value_t = 0.01)]
    anomaly_rate: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Writes `<prefix>_data.csv` and `<prefix>_mask.csv`, or for `cd-pair`
    /// `<prefix>_before.mbrs`, `<prefix>_after.mbrs` and `<prefix>_mask.mbrs`.
    #[arg(long)]
    out_prefix: String,
    #[arg(long, default_value_t = 250)]
    width: usize,
    #[arg(long, default_value_t = 250)]
    height: usize,
    #[arg(long, default_value_t = 8)]
    bands: usize,
    /// Fraction of changed pixels (`cd-pair`).
    #[arg(long, default_value_t = 0.05)]
    change_fraction: f64,
}

enum Failure {
    Usage(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Lib(e.into())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Lib(e.into())
    }
}

type Outcome<T = ()> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(f) = configure_threads(cli.threads) {
        return report(f);
    }
    let result = match cli.command {
        Command::Fit(c) => fit(c),
        Command::Score(c) => score(c),
        Command::DetectChange(c) => detect_change(c),
        Command::Eval(c) => eval(c),
        Command::Synth(c) => synth(c),
        Command::MakeToy(c) => make_toy(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => report(f),
    }
}

fn report(f: Failure) -> ExitCode {
    match f {
        Failure::Usage(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Failure::Lib(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 2 } else { 3 })
        }
    }
}

#[cfg(feature = "parallel")]
fn configure_threads(threads: Option<usize>) -> Outcome {
    if let Some(n) = threads {
        if n == 0 {
            return Err(Failure::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Usage(e.to_string()))?;
    }
    Ok(())
}

#[cfg(not(feature = "parallel"))]
fn configure_threads(_threads: Option<usize>) -> Outcome {
    Ok(())
}

fn is_csv(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// Samples read from disk, with the raster geometry when there is one.
struct Samples {
    x: DataMatrix,
    geometry: Option<Geometry>,
}

struct Geometry {
    width: usize,
    height: usize,
    bands: usize,
    index: Vec<(usize, usize)>,
}

fn read_samples(path: &Path) -> Outcome<Samples> {
    if is_csv(path) {
        return Ok(Samples {
            x: raster::read_csv_matrix(path)?,
            geometry: None,
        });
    }
    let img = raster::read_raster(path)?;
    let (x, index) = img.flatten_to_matrix()?;
    Ok(Samples {
        x,
        geometry: Some(Geometry {
            width: img.width(),
            height: img.height(),
            bands: img.bands(),
            index,
        }),
    })
}

fn write_scores(path: &Path, scores: &[f64], geometry: Option<&Geometry>) -> Outcome {
    if is_csv(path) {
        raster::write_csv_column(path, "score", scores)?;
        return Ok(());
    }
    let g = geometry.ok_or_else(|| {
        Failure::Usage("score maps (.mbrs) need raster input; use a .csv output".into())
    })?;
    let map = ScoreMap::from_scores(scores, &g.index, g.width, g.height)?;
    raster::write_raster(&map.to_raster()?, path)?;
    Ok(())
}

fn write_json(path: &Path, value: &Value) -> Outcome {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn fit_report(det: &Detector, x: &DataMatrix, input: &Path) -> Value {
    let mut report = json!({
        "method": det.kind().name(),
        "input": input.display().to_string(),
        "rows": x.rows(),
        "cols": x.cols(),
        "model": det.summary()["details"],
    });
    let rbig = match det {
        Detector::Rbig(m) => Some(m),
        Detector::Hybrid(h) => Some(h.rbig()),
        _ => None,
    };
    if let Some(m) = rbig {
        report["layers_used"] = json!(m.layers().len());
        report["negentropy_trace"] = json!(m.metadata().negentropy_trace);
        report["dropped_bands"] = json!(m.dropped_bands());
    }
    report
}

fn fit(cmd: FitCmd) -> Outcome {
    let t0 = Instant::now();
    let samples = read_samples(&cmd.input)?;
    let t_read = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let det = Detector::fit(&samples.x, &cmd.method.options())?;
    let t_fit = t1.elapsed().as_secs_f64();
    let t2 = Instant::now();
    det.save(&cmd.model_out)?;
    let t_write = t2.elapsed().as_secs_f64();

    let mut report = fit_report(&det, &samples.x, &cmd.input);
    report["model_out"] = json!(cmd.model_out.display().to_string());
    report["timings_s"] = json!({ "read": t_read, "fit": t_fit, "write": t_write });
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn score(cmd: ScoreCmd) -> Outcome {
    let det = Detector::load(&cmd.model)?;
    let samples = read_samples(&cmd.input)?;
    let scores = det.score(&samples.x)?;
    write_scores(&cmd.out, &scores.scores, samples.geometry.as_ref())
}

fn detect_change(cmd: ChangeCmd) -> Outcome {
    let before = read_samples(&cmd.before)?;
    let after = read_samples(&cmd.after)?;
    match (&before.geometry, &after.geometry) {
        (Some(b), Some(a)) if (b.width, b.height, b.bands) != (a.width, a.height, a.bands) => {
            return Err(Error::Domain(format!(
                "before is {}x{}x{}, after is {}x{}x{}",
                b.width, b.height, b.bands, a.width, a.height, a.bands
            ))
            .into());
        }
        _ if before.x.cols() != after.x.cols() => {
            return Err(Error::DimensionMismatch {
                expected: before.x.cols(),
                got: after.x.cols(),
            }
            .into());
        }
        _ => {}
    }
    let det = Detector::fit(&before.x, &cmd.method.options())?;
    if let Some(path) = &cmd.model_out {
        det.save(path)?;
    }
    let scores = det.score_change(&after.x)?;
    write_scores(&cmd.out, &scores.scores, after.geometry.as_ref())
}

/// Scores and labels for the pixels that carry a score.
fn read_scored_pairs(scores_path: &Path, mask_path: &Path) -> Outcome<(Vec<f64>, LabelMask)> {
    if is_csv(scores_path) {
        let x = raster::read_csv_matrix(scores_path)?;
        if x.cols() != 1 {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected one score column, found {}", x.cols()),
            }
            .into());
        }
        let mask = if is_csv(mask_path) {
            raster::read_csv_labels(mask_path)?
        } else {
            let img = raster::read_raster(mask_path)?;
            LabelMask::from_values(img.values())
        };
        return Ok((x.into_values(), mask));
    }
    let map = ScoreMap::from_raster(&raster::read_raster(scores_path)?)?;
    let mask = if is_csv(mask_path) {
        raster::read_csv_labels(mask_path)?
    } else {
        raster::read_mask(mask_path, map.width, map.height)?
    };
    if mask.len() != map.scores.len() {
        return Err(Error::DimensionMismatch {
            expected: map.scores.len(),
            got: mask.len(),
        }
        .into());
    }
    let keep: Vec<usize> = (0..map.scores.len()).filter(|&i| map.scored[i]).collect();
    let scores = keep.iter().map(|&i| map.scores[i]).collect();
    Ok((scores, mask.select(&keep)))
}

fn eval(cmd: EvalCmd) -> Outcome {
    let (scores, mask) = read_scored_pairs(&cmd.scores, &cmd.mask)?;
    let roc = evaluation::roc(&scores, &mask)?;
    let pr = evaluation::precision_recall(&scores, &mask)?;
    let partial = cmd
        .fpr_caps
        .iter()
        .map(|&cap| evaluation::partial_auc_all(&roc, cap))
        .collect::<Result<Vec<_>, _>>()?;

    let mut roc_csv = String::from("threshold,fpr,tpr\n");
    for i in 0..roc.fpr.len() {
        let _ = writeln!(
            roc_csv,
            "{:?},{:?},{:?}",
            roc.thresholds[i], roc.fpr[i], roc.tpr[i]
        );
    }
    let mut pr_csv = String::from("threshold,recall,precision\n");
    for i in 0..pr.recall.len() {
        let _ = writeln!(
            pr_csv,
            "{:?},{:?},{:?}",
            pr.thresholds[i], pr.recall[i], pr.precision[i]
        );
    }
    let prefix = &cmd.out_prefix;
    fs::write(format!("{prefix}_roc.csv"), roc_csv)?;
    fs::write(format!("{prefix}_pr.csv"), pr_csv)?;

    let mut summary = json!({
        "samples": scores.len(),
        "positives": mask.positive_count(),
        "auc": roc.auc,
        "average_precision": pr.average_precision,
        "fpr_caps": cmd.fpr_caps,
        "partial_auc": partial,
    });
    if cmd.bootstrap > 0 {
        let b = evaluation::bootstrap_auc(&scores, &mask, cmd.bootstrap, cmd.seed)?;
        summary["bootstrap"] = serde_json::to_value(&b)?;
        summary["bootstrap"]["seed"] = json!(cmd.seed);
    }
    write_json(Path::new(&format!("{prefix}_summary.json")), &summary)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn synth(cmd: SynthCmd) -> Outcome {
    let model = match Detector::load(&cmd.model)? {
        Detector::Rbig(m) => m,
        other => {
            return Err(Error::KindMismatch {
                expected: "rbig",
                got: other.kind().name(),
            }
            .into())
        }
    };
    let samples = sample(&model, cmd.n, cmd.seed)?;
    raster::write_csv_matrix(&cmd.out, &samples, None)?;
    Ok(())
}

fn sample(model: &GaussianizationModel, n: usize, seed: u64) -> Outcome<DataMatrix> {
    Ok(model.sample(n, &mut RngState::new(seed))?)
}

fn make_toy(cmd: ToyCmd) -> Outcome {
    let mut rng = RngState::new(cmd.seed);
    let prefix = &cmd.out_prefix;
    let data = match cmd.kind {
        ToyKind::Ring => toy::ring(cmd.n, cmd.anomaly_rate, &mut rng)?,
        ToyKind::Gaussian => toy::gaussian(cmd.n, cmd.anomaly_rate, &mut rng)?,
        ToyKind::Mixture => toy::mixture(cmd.n, cmd.anomaly_rate, &mut rng)?,
        ToyKind::CdPair => {
            let cd = toy::change_pair(
                cmd.width,
                cmd.height,
                cmd.bands,
                cmd.change_fraction,
                &mut rng,
            )?;
            write_pair(&cd.before, &cd.after, prefix)?;
            raster::write_mask(
                &cd.mask,
                cmd.width,
                cmd.height,
                format!("{prefix}_mask.mbrs"),
            )?;
            return Ok(());
        }
    };
    raster::write_csv_matrix(format!("{prefix}_data.csv"), &data.x, None)?;
    let labels: Vec<f64> = data
        .labels
        .labels()
        .iter()
        .map(|&l| if l { 1.0 } else { 0.0 })
        .collect();
    raster::write_csv_column(format!("{prefix}_mask.csv"), "label", &labels)?;
    Ok(())
}

fn write_pair(before: &RasterImage, after: &RasterImage, prefix: &str) -> Outcome {
    raster::write_raster(before, format!("{prefix}_before.mbrs"))?;
    raster::write_raster(after, format!("{prefix}_after.mbrs"))?;
    Ok(())
}
