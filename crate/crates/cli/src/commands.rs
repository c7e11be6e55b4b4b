//! The pipeline commands. Each returns a short summary for the caller to
//! print; all files go under the configured output directory unless a
//! path is given explicitly.

use std::fs::{self, File, OpenOptions};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use hyperforest::contracts::{validate_record, Label};
use hyperforest::dataset::Dataset;
use hyperforest::evaluation::{
    class_correlation_matrices, classify_scores, confusion_matrix, metrics_suite, roc_curve, select_best_threshold,
    threshold_sweep, write_confusion_tsv, write_correlation_tsv, write_importance_tsv, write_metrics_tsv,
    write_roc_tsv, write_sweep_tsv, CalibrationResult, MetricsReport, ThresholdGrid,
};
use hyperforest::features::build_features;
use hyperforest::hyper_forest::{train_hyper_forest, HyperForestModel};
use hyperforest::ingestion::{
    convert_spending, curate, label_dataset, load_corrupt_registry, parse_contracts, CorruptRegistry, IngestError,
    RegistryWarning,
};
use hyperforest::rfe::{random_baseline, run_rfe, trace_line, write_rfe_tsv, TRACE_HEADER};
use hyperforest::splitter::{balanced_subsamples, stratified_split, DataSplit};

use crate::config::PipelineConfig;
use crate::error::{dataset_error, CliError};
use crate::model_file::{self, ModelBody, Provenance};
use crate::synth::{self, SynthParams};

/// Seed for sub-sampling and forest growth, kept apart from the split seed.
pub fn training_seed(seed: u64) -> u64 {
    seed.wrapping_add(1)
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_file(path: &Path, fill: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        create_dir(parent)?;
    }
    let mut out = BufWriter::new(File::create(path).map_err(|e| CliError::io(path, e))?);
    fill(&mut out).and_then(|_| out.flush()).map_err(|e| CliError::io(path, e))
}

pub fn read_dataset(path: &Path) -> Result<Option<Dataset>, CliError> {
    let file = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::missing(path),
        _ => CliError::io(path, e),
    })?;
    Dataset::read_tsv(BufReader::new(file)).map_err(|e| dataset_error(path, e))
}

fn read_labeled(path: &Path) -> Result<(Dataset, Vec<Label>), CliError> {
    let ds = read_dataset(path)?.ok_or_else(|| CliError::Data(format!("{}: empty feature table", path.display())))?;
    if !ds.is_fully_labeled() {
        return Err(CliError::Data(format!("{}: every row needs a C or NC label", path.display())));
    }
    let labels = (0..ds.n_rows()).map(|r| ds.known_label(r)).collect();
    Ok((ds, labels))
}

#[derive(Debug, Clone)]
pub struct IngestSummary {
    pub dataset: PathBuf,
    pub accepted: usize,
    pub rejected: usize,
    pub class_counts: [usize; 2],
    pub registry_size: usize,
}

pub fn cmd_ingest(cfg: &PipelineConfig, out: Option<&Path>) -> Result<IngestSummary, CliError> {
    cfg.check_ingest_inputs()?;
    let ppp = cfg.input.ppp_table()?;
    create_dir(&cfg.out_dir)?;
    let report_path = cfg.out_dir.join("curation.tsv");
    let contracts = cfg.input.contracts.as_ref().expect("checked above");
    let parsed = parse_contracts(contracts, &cfg.input.column_map())?;
    let (records, report) = match curate(&parsed) {
        Ok(ok) => ok,
        Err(e @ IngestError::TooManyRejects { .. }) => {
            if let IngestError::TooManyRejects { report, .. } = &e {
                write_file(&report_path, |w| w.write_all(report.to_tsv().as_bytes()))?;
            }
            return Err(e.into());
        }
        Err(e) => return Err(e.into()),
    };
    write_file(&report_path, |w| w.write_all(report.to_tsv().as_bytes()))?;
    let records = records.iter().map(|r| convert_spending(r, &ppp)).collect::<Result<Vec<_>, _>>()?;
    let (registry, warning) = load_corrupt_registry(&cfg.input.registries)?;
    if warning == Some(RegistryWarning::EmptyRegistry) {
        eprintln!("warning: corrupt-supplier registry is empty; every contract will be labeled NC");
    }
    let labeled = label_dataset(records, &registry);
    let ds = build_features(&labeled)?;
    let path = out.map_or_else(|| cfg.dataset_path(), Path::to_path_buf);
    write_file(&path, |w| ds.write_tsv(w))?;
    Ok(IngestSummary {
        dataset: path,
        accepted: report.accepted,
        rejected: report.rejected_total(),
        class_counts: ds.class_counts(),
        registry_size: registry.len(),
    })
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub model: PathBuf,
    pub checksum: String,
    pub n_forests: usize,
    pub calibration: CalibrationResult,
}

/// Calibrate θ on `rows` and return the curve's best point.
fn calibrate(
    model: &mut HyperForestModel,
    data: &Dataset,
    labels: &[Label],
    rows: &[usize],
) -> Result<(CalibrationResult, hyperforest::evaluation::RocCurve), CliError> {
    let scores: Vec<f64> = model.tally_rows(data, rows)?.iter().map(|t| t.probability()).collect();
    let truth: Vec<Label> = rows.iter().map(|&r| labels[r]).collect();
    let curve = roc_curve(&scores, &truth, &ThresholdGrid::Votes(model.n_forests()))?;
    let best = select_best_threshold(&curve);
    model.set_threshold(best.theta)?;
    Ok((best, curve))
}

fn split_for(cfg: &PipelineConfig, labels: &[Label]) -> Result<DataSplit, CliError> {
    Ok(stratified_split(labels, &cfg.split, cfg.seed)?)
}

pub fn cmd_train(
    cfg: &PipelineConfig,
    input: Option<&Path>,
    model_out: Option<&Path>,
) -> Result<TrainSummary, CliError> {
    let path = input.map_or_else(|| cfg.dataset_path(), Path::to_path_buf);
    let (ds, labels) = read_labeled(&path)?;
    let split = split_for(cfg, &labels)?;
    let seed = training_seed(cfg.seed);
    let subsamples = balanced_subsamples(&split.train, &labels, seed)?;
    let mut model = train_hyper_forest(&ds, &subsamples, &cfg.forest, seed)?;
    let (calibration, curve) = calibrate(&mut model, &ds, &labels, &split.calibration)?;
    create_dir(&cfg.out_dir)?;
    write_file(&cfg.out_dir.join("roc.tsv"), |w| write_roc_tsv(&curve, w))?;
    let body = ModelBody { provenance: provenance(cfg, &ds, &calibration), model };
    let model_path = model_out.map_or_else(|| cfg.model_path(), Path::to_path_buf);
    if let Some(parent) = model_path.parent() {
        create_dir(parent)?;
    }
    let checksum = model_file::save(&model_path, &body)?;
    Ok(TrainSummary { model: model_path, checksum, n_forests: body.model.n_forests(), calibration })
}

fn provenance(cfg: &PipelineConfig, ds: &Dataset, calibration: &CalibrationResult) -> Provenance {
    Provenance {
        dataset_fingerprint: ds.fingerprint(),
        split: cfg.split,
        split_seed: cfg.seed,
        class_counts: ds.class_counts(),
        calibration_auc: calibration.auc,
        calibration_tpr: calibration.tpr,
        calibration_fpr: calibration.fpr,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum EvalSplit {
    Train,
    Calibration,
    Test,
    /// Every row; the only choice for data the model was not trained on.
    All,
}

#[derive(Debug, Clone)]
pub struct EvaluateSummary {
    pub out_dir: PathBuf,
    pub theta: f64,
    pub metrics: MetricsReport,
    pub rows: usize,
    pub importance_written: bool,
}

pub const EVALUATION_FILES: [&str; 7] =
    ["metrics.tsv", "roc.tsv", "confusion.tsv", "sweep.tsv", "importance.tsv", "corr_C.tsv", "corr_NC.tsv"];

pub fn cmd_evaluate(
    cfg: &PipelineConfig,
    model_path: Option<&Path>,
    input: Option<&Path>,
    out: Option<&Path>,
    which: EvalSplit,
) -> Result<EvaluateSummary, CliError> {
    let model_path = model_path.map_or_else(|| cfg.model_path(), Path::to_path_buf);
    let body = model_file::load(&model_path)?;
    let model = &body.model;
    let path = input.map_or_else(|| cfg.dataset_path(), Path::to_path_buf);
    let (raw, labels) = read_labeled(&path)?;
    let same_data = raw.fingerprint() == body.provenance.dataset_fingerprint;
    let data = raw.conform_to(model.schema()).map_err(|e| dataset_error(&path, e))?;
    let rows: Vec<usize> = if which == EvalSplit::All {
        (0..data.n_rows()).collect()
    } else {
        if !same_data {
            return Err(CliError::Data(format!(
                "{} is not the table this model was trained on; only --split all applies",
                path.display()
            )));
        }
        let split = stratified_split(&labels, &body.provenance.split, body.provenance.split_seed)?;
        match which {
            EvalSplit::Train => split.train,
            EvalSplit::Calibration => split.calibration,
            _ => split.test,
        }
    };
    let theta = model.resolve_threshold(None)?;
    let scores: Vec<f64> = model.tally_rows(&data, &rows)?.iter().map(|t| t.probability()).collect();
    let truth: Vec<Label> = rows.iter().map(|&r| labels[r]).collect();
    let grid = ThresholdGrid::Votes(model.n_forests());
    let curve = roc_curve(&scores, &truth, &grid)?;
    let cm = confusion_matrix(&classify_scores(&scores, theta), &truth)?;
    let metrics = metrics_suite(&cm, Some(curve.auc))?;
    let sweep = threshold_sweep(&scores, &truth, &grid)?;
    let corr = class_correlation_matrices(&data, &rows)?;

    let dir = out.map_or_else(|| cfg.out_dir.join("evaluation"), Path::to_path_buf);
    create_dir(&dir)?;
    write_file(&dir.join("metrics.tsv"), |w| write_metrics_tsv(theta, &metrics, w))?;
    write_file(&dir.join("roc.tsv"), |w| write_roc_tsv(&curve, w))?;
    write_file(&dir.join("confusion.tsv"), |w| write_confusion_tsv(&cm, w))?;
    write_file(&dir.join("sweep.tsv"), |w| write_sweep_tsv(&sweep, w))?;
    write_file(&dir.join("corr_C.tsv"), |w| write_correlation_tsv(&corr.features, &corr.c, w))?;
    write_file(&dir.join("corr_NC.tsv"), |w| write_correlation_tsv(&corr.features, &corr.nc, w))?;
    // Out-of-bag rows index the training table, so importance needs it.
    if same_data {
        let importance = model.aggregate_importance(&data)?;
        write_file(&dir.join("importance.tsv"), |w| write_importance_tsv(model.schema(), &importance, w))?;
    } else {
        eprintln!("warning: not the training table; importance.tsv skipped");
    }
    Ok(EvaluateSummary { out_dir: dir, theta, metrics, rows: rows.len(), importance_written: same_data })
}

#[derive(Debug, Clone)]
pub struct RfeSummary {
    pub best_features: Vec<String>,
    pub best_balanced_accuracy: f64,
    pub stages: usize,
    pub model: PathBuf,
}

pub fn cmd_rfe(cfg: &PipelineConfig, input: Option<&Path>, out: Option<&Path>) -> Result<RfeSummary, CliError> {
    let path = input.map_or_else(|| cfg.dataset_path(), Path::to_path_buf);
    let (ds, labels) = read_labeled(&path)?;
    let split = split_for(cfg, &labels)?;
    let dir = out.map_or_else(|| cfg.out_dir.clone(), Path::to_path_buf);
    create_dir(&dir)?;
    let trace_path = dir.join("rfe_trace.tsv");
    write_file(&trace_path, |w| writeln!(w, "{TRACE_HEADER}"))?;
    let mut trace_file = OpenOptions::new().append(true).open(&trace_path).map_err(|e| CliError::io(&trace_path, e))?;
    let mut index = 0;
    let outcome = run_rfe(&ds, &split, &cfg.forest, training_seed(cfg.seed), |stage| {
        writeln!(trace_file, "{}", trace_line(index, stage))?;
        trace_file.sync_data()?;
        index += 1;
        Ok(())
    })?;
    let test_labels: Vec<Label> = split.test.iter().map(|&r| labels[r]).collect();
    write_file(&dir.join("rfe.tsv"), |w| write_rfe_tsv(&outcome.trace, &ds, random_baseline(&test_labels), w))?;
    let best = &outcome.trace.stages[outcome.best_stage];
    let body = ModelBody { provenance: provenance(cfg, &ds, &best.calibration), model: outcome.best_model };
    let model_path = dir.join("rfe_model.json");
    model_file::save(&model_path, &body)?;
    Ok(RfeSummary {
        best_features: best.remaining.clone(),
        best_balanced_accuracy: best.balanced_accuracy,
        stages: outcome.trace.stages.len(),
        model: model_path,
    })
}

#[derive(Debug, Clone)]
pub struct PredictSummary {
    pub output: PathBuf,
    pub rows: usize,
    pub flagged: usize,
    pub skipped: usize,
}

/// Score a feature table, or with `raw` a contracts file whose features
/// are derived from its own rows. Rows keep their input order.
pub fn cmd_predict(
    cfg: &PipelineConfig,
    model_path: Option<&Path>,
    input: Option<&Path>,
    out: Option<&Path>,
    raw: bool,
) -> Result<PredictSummary, CliError> {
    let model_path = model_path.map_or_else(|| cfg.model_path(), Path::to_path_buf);
    let body = model_file::load(&model_path)?;
    let model = &body.model;
    let theta = model.resolve_threshold(None)?;
    let input = input.ok_or_else(|| CliError::Usage("predict needs --input".into()))?;
    let output = out.map_or_else(|| cfg.out_dir.join("predictions.tsv"), Path::to_path_buf);
    let text = fs::read_to_string(input).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::missing(input),
        _ => CliError::io(input, e),
    })?;
    if text.trim().is_empty() {
        write_file(&output, |_| Ok(()))?;
        return Ok(PredictSummary { output, rows: 0, flagged: 0, skipped: 0 });
    }

    // (id cells, dataset) where id cells lead each output row.
    let (id_header, ids, data, skipped) = if raw {
        let parsed = parse_contracts(input, &cfg.input.column_map())?;
        let ppp = cfg.input.ppp_table()?;
        let mut lines = Vec::new();
        let mut records = Vec::new();
        for (line, row) in &parsed.rows {
            if let Ok(rec) = validate_record(row) {
                lines.push(*line);
                records.push(convert_spending(&rec, &ppp)?);
            }
        }
        let skipped = parsed.rows.len() + parsed.parse_errors.len() - records.len();
        let ids: Vec<String> =
            lines.iter().zip(&records).map(|(l, r)| format!("{l}\t{}\t{}", r.buyer_id, r.supplier_id)).collect();
        let features = if records.is_empty() {
            None
        } else {
            Some(build_features(&label_dataset(records, &CorruptRegistry::default()))?)
        };
        ("line\tbuyer_id\tsupplier_id", ids, features, skipped)
    } else {
        let ds = read_dataset(input)?;
        let ids = (0..ds.as_ref().map_or(0, Dataset::n_rows)).map(|r| (r + 1).to_string()).collect();
        ("row", ids, ds, 0)
    };
    let tallies = match &data {
        Some(ds) => model.tally_dataset(&ds.conform_to(model.schema()).map_err(|e| dataset_error(input, e))?)?,
        None => Vec::new(),
    };
    let mut flagged = 0;
    write_file(&output, |w| {
        writeln!(w, "{id_header}\tp_nc\tnc_votes\tlabel")?;
        for (id, t) in ids.iter().zip(&tallies) {
            let label = t.classify(theta);
            if label == Label::C {
                flagged += 1;
            }
            writeln!(w, "{id}\t{}\t{}\t{label}", t.probability(), t.nc_votes)?;
        }
        Ok(())
    })?;
    Ok(PredictSummary { output, rows: tallies.len(), flagged, skipped })
}

pub fn cmd_synth(cfg: &PipelineConfig, params: &SynthParams, out: Option<&Path>) -> Result<PathBuf, CliError> {
    let ds = synth::generate(params, cfg.seed)?;
    let path = out.map_or_else(|| cfg.dataset_path(), Path::to_path_buf);
    write_file(&path, |w| ds.write_tsv(w))?;
    Ok(path)
}

/// Split a dataset the way `train` does for a given config.
pub fn pipeline_split(cfg: &PipelineConfig, ds: &Dataset) -> Result<DataSplit, CliError> {
    let labels: Vec<Label> = (0..ds.n_rows()).map(|r| ds.known_label(r)).collect();
    split_for(cfg, &labels)
}
