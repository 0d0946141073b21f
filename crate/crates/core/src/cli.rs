//! Command implementations behind the `recbench` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::baselines::{DefaultPredictor, Predictor, RandomPredictor};
use crate::dataset::{load_dataset, split, SegmentModel, SplitDataset};
use crate::error::{DatasetError, EvaluationError, FormatError, TrainError};
use crate::knn::KnnModel;
use crate::manifest::{ManifestError, ModelKind, RunManifest};
use crate::mf::{train_mf, EpochRecord, MfModel, StopReason};
use crate::protocol::{explore_with_matrix, run_core};
use crate::report::{compare_reports, CompareError, DatasetSummary, EvaluationReport, Explore, Timings};

/// Environment variable naming the output directory when neither the
/// manifest nor `--out` gives one.
pub const OUTPUT_DIR_ENV: &str = "RECBENCH_OUTPUT_DIR";
pub const FALLBACK_OUTPUT_DIR: &str = "recbench-out";

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Training(#[from] TrainError),
    #[error(transparent)]
    Evaluation(#[from] EvaluationError),
    #[error(transparent)]
    Output(#[from] FormatError),
    #[error(transparent)]
    Compare(#[from] CompareError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Manifest(_) => 2,
            CliError::Dataset(_) => 3,
            CliError::Training(_) => 4,
            CliError::Evaluation(_) | CliError::Output(_) | CliError::Compare(_) => 5,
        }
    }
}

/// Run-level facts that are not part of the deterministic report.
#[derive(Debug, Serialize)]
pub struct RunMetadata {
    pub started_unix_secs: u64,
    pub timings: Timings,
    pub duplicates_dropped: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mf_stop_reason: Option<StopReason>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mf_best_epoch: Option<usize>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub mf_training_log: Vec<EpochRecord>,
}

pub struct RunOutcome {
    pub report: EvaluationReport,
    pub metadata: RunMetadata,
    pub output_dir: PathBuf,
}

/// Output directory: explicit flag, then manifest, then the environment,
/// then [`FALLBACK_OUTPUT_DIR`].
pub fn output_dir(manifest: &RunManifest, base: &Path, flag: Option<&Path>) -> PathBuf {
    if let Some(dir) = flag {
        return dir.to_path_buf();
    }
    if let Some(dir) = &manifest.output.dir {
        return if dir.is_absolute() { dir.clone() } else { base.join(dir) };
    }
    match std::env::var_os(OUTPUT_DIR_ENV) {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => PathBuf::from(FALLBACK_OUTPUT_DIR),
    }
}

/// Parse and validate a manifest file, applying overrides in order:
/// `--set` entries, then `--seed`.
pub fn load_manifest(path: &Path, overrides: &[String], seed: Option<u64>) -> Result<RunManifest, ManifestError> {
    let mut manifest = RunManifest::load(path, overrides)?;
    if let Some(seed) = seed {
        manifest.set_seed(seed);
    }
    Ok(manifest)
}

/// load → split → segment statistics → train → core protocol → Explore →
/// write report files.
pub fn cmd_run(
    manifest_path: &Path,
    overrides: &[String],
    seed: Option<u64>,
    out: Option<&Path>,
) -> Result<RunOutcome, CliError> {
    let started_unix_secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    let manifest = load_manifest(manifest_path, overrides, seed)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let dataset_path = manifest.resolve_dataset(base)?;
    let output_dir = output_dir(&manifest, base, out);

    let loaded = load_dataset(&dataset_path, manifest.dataset.format, manifest.scale())?;
    let data = split(&loaded.logs, manifest.split.ratio, manifest.split.seed, manifest.scale())?;
    let segments = SegmentModel::build(&data)?;

    let mut timings = Timings::default();
    let start = Instant::now();
    let mut mf_meta = None;
    let model: Box<dyn Predictor> = match manifest.model.kind {
        ModelKind::Knn => Box::new(KnnModel::train(&data, &segments, manifest.model.k, manifest.model.gamma)),
        ModelKind::Mf => {
            let factors = train_mf(&data, &manifest.mf_config())?;
            let mut f = Vec::new();
            factors
                .write(&data, &mut f)
                .map_err(|source| FormatError::Io {
                    path: output_dir.join("factors.txt"),
                    source,
                })?;
            mf_meta = Some((factors.stop_reason, factors.best_epoch, factors.training_log.clone(), f));
            Box::new(
                MfModel::new(factors, segments.clone())
                    .with_bias_in_similarity(manifest.model.similarity_includes_bias),
            )
        }
        ModelKind::Default => Box::new(DefaultPredictor::new(segments.clone(), data.scale())),
        ModelKind::Random => Box::new(RandomPredictor::new(&data, manifest.model_seed())),
    };
    timings.train_secs = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let core = run_core(model.as_ref(), &data, &segments, &manifest.protocol)?;
    timings.core_secs = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let matrix = model.item_similarity(manifest.protocol.explore_k);
    timings.similarity_secs = start.elapsed().as_secs_f64();
    let explore = match &matrix {
        Some(matrix) => Explore::Present(Box::new(explore_with_matrix(
            &model.name(),
            matrix.clone(),
            &data,
            &segments,
            &manifest.protocol,
        )?)),
        None => Explore::Absent {
            reason: format!("`{}` provides no item similarity", model.name()),
        },
    };
    timings.explore_secs = start.elapsed().as_secs_f64();

    let report = EvaluationReport {
        model: core.model.clone(),
        protocol: manifest.protocol.clone(),
        scale: data.scale(),
        dataset: DatasetSummary::new(&data, &segments),
        manifest: Some(serde_json::to_value(&manifest).expect("manifest serializes")),
        decide: core.decide,
        compare: core.compare,
        discover: core.discover,
        ami_excluded: core.ami_excluded,
        explore,
    };
    report.write_dir(&output_dir)?;
    if let Some(matrix) = &matrix {
        write_artifact(&output_dir.join("similarity.csv"), |w| matrix.write(data.items(), w))?;
    }
    let (mf_stop_reason, mf_best_epoch, mf_training_log) = match mf_meta {
        Some((stop, best, log, factors)) => {
            let path = output_dir.join("factors.txt");
            fs::write(&path, factors).map_err(|source| FormatError::Io { path, source })?;
            (Some(stop), Some(best), log)
        }
        None => (None, None, Vec::new()),
    };
    let metadata = RunMetadata {
        started_unix_secs,
        timings,
        duplicates_dropped: loaded.duplicates_dropped,
        mf_stop_reason,
        mf_best_epoch,
        mf_training_log,
    };
    let path = output_dir.join("metadata.json");
    fs::write(&path, serde_json::to_string_pretty(&metadata).expect("metadata serializes") + "\n")
        .map_err(|source| FormatError::Io { path, source })?;

    Ok(RunOutcome {
        report,
        metadata,
        output_dir,
    })
}

fn write_artifact(
    path: &Path,
    write: impl FnOnce(&mut fs::File) -> std::io::Result<()>,
) -> Result<(), FormatError> {
    let io = |source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut file = fs::File::create(path).map_err(io)?;
    write(&mut file).map_err(io)
}

/// Report files may be given directly or as run output directories.
pub fn cmd_compare(paths: &[PathBuf]) -> Result<String, CliError> {
    let reports = paths
        .iter()
        .map(|p| {
            let file = if p.is_dir() { p.join("report.json") } else { p.clone() };
            EvaluationReport::read(&file)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(compare_reports(&reports)?)
}

/// Split `logs` and index them; convenience for tools and tests that start
/// from an in-memory fixture.
pub fn prepare(
    logs: &[crate::dataset::RatingLog],
    ratio: f64,
    seed: u64,
) -> Result<(SplitDataset, SegmentModel), DatasetError> {
    let data = split(logs, ratio, seed, crate::dataset::RatingScale::default())?;
    let segments = SegmentModel::build(&data)?;
    Ok((data, segments))
}
