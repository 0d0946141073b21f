//! Evaluation reports, their on-disk layout and the side-by-side comparison.
//!
//! A report directory holds:
//!
//! | file            | content                                                   |
//! |-----------------|-----------------------------------------------------------|
//! | `report.json`   | the full [`EvaluationReport`]                             |
//! | `decide.csv`    | RMSE rows                                                 |
//! | `compare.csv`   | COMP (macro) and COMP_micro rows                          |
//! | `discover.csv`  | Precision and AMI rows                                    |
//! | `explore.csv`   | all Explore rows (header only when Explore is absent)     |
//! | `summary.txt`   | the human-readable segment table                          |
//! | `metadata.json` | wall-clock timings; the only nondeterministic file        |
//!
//! CSV columns are always `function,metric,segment,value,support`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{RatingScale, Segment, SegmentModel, SplitDataset};
use crate::error::FormatError;
use crate::metrics::{Function, Metric, MetricTable, SegmentLabel};
use crate::protocol::ProtocolConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoreReport {
    pub model: String,
    pub decide: MetricTable,
    pub compare: MetricTable,
    pub discover: MetricTable,
    /// Evaluable recommendations left out of AMI because their item has no
    /// train logs.
    pub ami_excluded: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Explore {
    Present(Box<CoreReport>),
    Absent { reason: String },
}

impl Explore {
    pub fn core(&self) -> Option<&CoreReport> {
        match self {
            Explore::Present(core) => Some(core),
            Explore::Absent { .. } => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub train_logs: usize,
    pub test_logs: usize,
    pub users: usize,
    pub items: usize,
    pub user_threshold: f64,
    pub item_threshold: f64,
    pub global_mean: f64,
}

impl DatasetSummary {
    pub fn new(data: &SplitDataset, segments: &SegmentModel) -> Self {
        DatasetSummary {
            train_logs: data.train().len(),
            test_logs: data.test().len(),
            users: data.num_users(),
            items: data.catalog_size(),
            user_threshold: segments.user_threshold,
            item_threshold: segments.item_threshold,
            global_mean: segments.global_mean,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub model: String,
    pub protocol: ProtocolConfig,
    pub scale: RatingScale,
    pub dataset: DatasetSummary,
    /// Effective run configuration, when the report comes from a manifest.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<serde_json::Value>,
    pub decide: MetricTable,
    pub compare: MetricTable,
    pub discover: MetricTable,
    pub ami_excluded: u64,
    pub explore: Explore,
}

/// Wall-clock seconds per phase.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub train_secs: f64,
    pub core_secs: f64,
    pub similarity_secs: f64,
    pub explore_secs: f64,
}

impl EvaluationReport {
    pub fn core(&self) -> CoreReport {
        CoreReport {
            model: self.model.clone(),
            decide: self.decide.clone(),
            compare: self.compare.clone(),
            discover: self.discover.clone(),
            ami_excluded: self.ami_excluded,
        }
    }

    /// Explore rows, labeled with [`Function::Explore`].
    pub fn explore_table(&self) -> MetricTable {
        let mut t = MetricTable::default();
        if let Some(core) = self.explore.core() {
            t.extend(core.decide.relabeled(Function::Explore));
            t.extend(core.compare.relabeled(Function::Explore));
            t.extend(core.discover.relabeled(Function::Explore));
        }
        t
    }

    /// Every row of the report, Explore included.
    pub fn all_rows(&self) -> MetricTable {
        let mut t = self.decide.clone();
        t.extend(self.compare.clone());
        t.extend(self.discover.clone());
        t.extend(self.explore_table());
        t
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, FormatError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn read(path: &Path) -> Result<Self, FormatError> {
        let text = fs::read_to_string(path).map_err(|source| FormatError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// Write every deterministic report file into `dir` (created if needed).
    pub fn write_dir(&self, dir: &Path) -> Result<(), FormatError> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| FormatError::Io { path, source }
        };
        fs::create_dir_all(dir).map_err(io(dir))?;
        let files = [
            ("report.json", self.to_json()),
            ("decide.csv", self.decide.to_csv()),
            ("compare.csv", self.compare.to_csv()),
            ("discover.csv", self.discover.to_csv()),
            ("explore.csv", self.explore_table().to_csv()),
            ("summary.txt", self.summary()),
        ];
        for (name, content) in files {
            let path = dir.join(name);
            fs::write(&path, content).map_err(io(&path))?;
        }
        Ok(())
    }

    /// Segment table: one row per (function, metric), columns HuserPitem,
    /// LuserPitem, HuserUitem, LuserUitem, Global. COMP is computed per user
    /// class, so its value is repeated in both cells of that class.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "model: {}", self.model);
        let _ = writeln!(
            out,
            "train logs: {}  test logs: {}  users: {}  items: {}  heavy user > {:.3}  popular item > {:.3}",
            self.dataset.train_logs,
            self.dataset.test_logs,
            self.dataset.users,
            self.dataset.items,
            self.dataset.user_threshold,
            self.dataset.item_threshold,
        );
        let _ = writeln!(out, "top-N: {}  explore K: {}  exclude seen: {}", self.protocol.top_n, self.protocol.explore_k, self.protocol.exclude_seen);
        out.push('\n');
        render_rows(&mut out, &self.all_rows(), |t, metric, label| t.value(metric, label).map(|v| format!("{v:.4}")));
        if let Explore::Absent { reason } = &self.explore {
            let _ = writeln!(out, "\nExplore: absent ({reason})");
        }
        if self.ami_excluded > 0 {
            let _ = writeln!(out, "\nAMI: {} evaluable recommendations without train logs excluded", self.ami_excluded);
        }
        out
    }
}

const COLUMNS: [SegmentLabel; 5] = [
    SegmentLabel::Cell(Segment::HuserPitem),
    SegmentLabel::Cell(Segment::LuserPitem),
    SegmentLabel::Cell(Segment::HuserUitem),
    SegmentLabel::Cell(Segment::LuserUitem),
    SegmentLabel::Global,
];

/// Where a table column reads its value for `metric`.
fn source_label(metric: Metric, column: SegmentLabel) -> SegmentLabel {
    match (metric, column) {
        (Metric::Comp | Metric::CompMicro, SegmentLabel::Cell(seg)) => SegmentLabel::Users(seg.user_class()),
        _ => column,
    }
}

fn row_keys(table: &MetricTable) -> Vec<(Function, Metric)> {
    let mut keys: Vec<(Function, Metric)> = Vec::new();
    for r in &table.rows {
        if !keys.contains(&(r.function, r.metric)) {
            keys.push((r.function, r.metric));
        }
    }
    keys
}

fn render_rows(
    out: &mut String,
    table: &MetricTable,
    cell: impl Fn(&MetricTable, Metric, SegmentLabel) -> Option<String>,
) {
    let _ = write!(out, "{:<10} {:<11}", "function", "metric");
    for c in COLUMNS {
        let _ = write!(out, " {:>12}", c.name());
    }
    out.push('\n');
    for (function, metric) in row_keys(table) {
        let sub = MetricTable {
            rows: table.rows.iter().filter(|r| r.function == function).cloned().collect(),
        };
        let _ = write!(out, "{:<10} {:<11}", function.to_string(), metric.name());
        for c in COLUMNS {
            let text = cell(&sub, metric, source_label(metric, c)).unwrap_or_else(|| "-".to_owned());
            let _ = write!(out, " {text:>12}");
        }
        out.push('\n');
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CompareError {
    #[error("no reports to compare")]
    Empty,
    #[error("report `{model}` uses rating scale [{}, {}], expected [{}, {}]", found.min, found.max, expected.min, expected.max)]
    ScaleMismatch {
        model: String,
        expected: RatingScale,
        found: RatingScale,
    },
    #[error("report `{model}` uses a different segment scheme")]
    SegmentMismatch { model: String },
}

fn segment_scheme(report: &EvaluationReport) -> Vec<(Function, Metric, SegmentLabel)> {
    let mut keys: Vec<_> = report
        .all_rows()
        .rows
        .iter()
        .filter(|r| r.function != Function::Explore)
        .map(|r| (r.function, r.metric, r.segment))
        .collect();
    keys.sort();
    keys
}

/// Side-by-side table of several reports. Each cell lists every model's
/// value; with two or more reports the best one (lowest RMSE, highest
/// everything else) is marked with `*`.
pub fn compare_reports(reports: &[EvaluationReport]) -> Result<String, CompareError> {
    let first = reports.first().ok_or(CompareError::Empty)?;
    let scheme = segment_scheme(first);
    for r in &reports[1..] {
        if r.scale != first.scale {
            return Err(CompareError::ScaleMismatch {
                model: r.model.clone(),
                expected: first.scale,
                found: r.scale,
            });
        }
        if segment_scheme(r) != scheme {
            return Err(CompareError::SegmentMismatch { model: r.model.clone() });
        }
    }
    let tables: Vec<MetricTable> = reports.iter().map(EvaluationReport::all_rows).collect();
    let mut keys: Vec<(Function, Metric)> = Vec::new();
    for t in &tables {
        for k in row_keys(t) {
            if !keys.contains(&k) {
                keys.push(k);
            }
        }
    }

    let mut out = String::new();
    let _ = writeln!(out, "models:");
    for (i, r) in reports.iter().enumerate() {
        let _ = writeln!(out, "  [{}] {}", i + 1, r.model);
    }
    out.push('\n');
    let _ = write!(out, "{:<10} {:<11}", "function", "metric");
    for c in COLUMNS {
        let _ = write!(out, " {:>width$}", c.name(), width = cell_width(reports.len()));
    }
    out.push('\n');
    for (function, metric) in keys {
        let _ = write!(out, "{:<10} {:<11}", function.to_string(), metric.name());
        for c in COLUMNS {
            let label = source_label(metric, c);
            let values: Vec<Option<f64>> = tables
                .iter()
                .map(|t| {
                    t.rows
                        .iter()
                        .find(|r| r.function == function && r.metric == metric && r.segment == label)
                        .and_then(|r| r.value)
                })
                .collect();
            let best = (reports.len() > 1).then(|| best_index(metric, &values)).flatten();
            let text = values
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    let v = v.map_or("-".to_owned(), |v| format!("{v:.4}"));
                    if best == Some(i) { format!("{v}*") } else { v }
                })
                .collect::<Vec<_>>()
                .join(" | ");
            let _ = write!(out, " {text:>width$}", width = cell_width(reports.len()));
        }
        out.push('\n');
    }
    Ok(out)
}

fn cell_width(models: usize) -> usize {
    (models * 10 + (models.saturating_sub(1)) * 3).max(12)
}

/// Index of the best value; ties go to the earlier report.
pub fn best_index(metric: Metric, values: &[Option<f64>]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.iter().enumerate() {
        let Some(v) = *v else { continue };
        let better = match best {
            None => true,
            Some((_, b)) if metric.lower_is_better() => v < b,
            Some((_, b)) => v > b,
        };
        if better {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}
