//! Declarative run configuration, read from TOML.
//!
//! ```toml
//! [dataset]
//! path = "ratings.csv"      # relative to the manifest file
//! format = "csv"            # csv | netflix
//! rating_min = 1.0
//! rating_max = 5.0
//! discrete = true
//!
//! [split]
//! ratio = 0.9
//! seed = 42
//!
//! [model]
//! kind = "knn"              # knn | mf | default | random
//! k = 100                   # knn
//! gamma = 50                # knn
//! factors = 16              # mf
//! learning_rate = 0.03      # mf
//! regularization = 0.008    # mf
//! budget_secs = 5400.0      # mf
//! validation_fraction = 0.015
//! max_epochs = 200          # mf, optional
//! similarity_includes_bias = true
//! seed = 42                 # mf / random, defaults to split.seed
//!
//! [protocol]
//! top_n = 10
//! explore_k = 100
//! exclude_seen = true
//!
//! [output]
//! dir = "out"               # optional
//! ```

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DatasetFormat, RatingScale};
use crate::mf::MfConfig;
use crate::protocol::ProtocolConfig;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("cannot read manifest {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid manifest: {0}")]
    Parse(String),
    #[error("invalid override `{0}` (expected section.key=value)")]
    Override(String),
    #[error("invalid manifest value: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub path: PathBuf,
    #[serde(default = "default_format")]
    pub format: DatasetFormat,
    #[serde(default = "default_rating_min")]
    pub rating_min: f64,
    #[serde(default = "default_rating_max")]
    pub rating_max: f64,
    #[serde(default = "default_true")]
    pub discrete: bool,
}

fn default_format() -> DatasetFormat {
    DatasetFormat::Csv
}
fn default_rating_min() -> f64 {
    1.0
}
fn default_rating_max() -> f64 {
    5.0
}
fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    #[serde(default = "default_ratio")]
    pub ratio: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_ratio() -> f64 {
    0.9
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection {
            ratio: default_ratio(),
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Knn,
    Mf,
    Default,
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub kind: ModelKind,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_gamma")]
    pub gamma: usize,
    #[serde(default = "default_factors")]
    pub factors: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_regularization")]
    pub regularization: f64,
    #[serde(default = "default_budget_secs")]
    pub budget_secs: f64,
    #[serde(default = "default_validation_fraction")]
    pub validation_fraction: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_epochs: Option<usize>,
    #[serde(default = "default_true")]
    pub similarity_includes_bias: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn default_k() -> usize {
    100
}
fn default_gamma() -> usize {
    crate::knn::DEFAULT_GAMMA
}
fn default_factors() -> usize {
    16
}
fn default_learning_rate() -> f64 {
    0.030
}
fn default_regularization() -> f64 {
    0.008
}
fn default_budget_secs() -> f64 {
    5400.0
}
fn default_validation_fraction() -> f64 {
    0.015
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub dataset: DatasetSection,
    #[serde(default)]
    pub split: SplitSection,
    pub model: ModelSection,
    #[serde(default)]
    pub protocol: ProtocolConfig,
    #[serde(default)]
    pub output: OutputSection,
}

impl RunManifest {
    /// Parse TOML text, apply `section.key=value` overrides, validate the
    /// value ranges. Paths are not checked here; see [`RunManifest::resolve_dataset`].
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self, ManifestError> {
        let mut doc: toml::Table = toml::from_str(text).map_err(|e| ManifestError::Parse(e.to_string()))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let manifest: RunManifest = doc
            .try_into()
            .map_err(|e: toml::de::Error| ManifestError::Parse(e.to_string()))?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, ManifestError> {
        let text = std::fs::read_to_string(path).map_err(|source| ManifestError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    /// Same seed for the split and the model.
    pub fn set_seed(&mut self, seed: u64) {
        self.split.seed = seed;
        self.model.seed = Some(seed);
    }

    pub fn model_seed(&self) -> u64 {
        self.model.seed.unwrap_or(self.split.seed)
    }

    pub fn scale(&self) -> RatingScale {
        RatingScale {
            min: self.dataset.rating_min,
            max: self.dataset.rating_max,
            discrete: self.dataset.discrete,
        }
    }

    pub fn mf_config(&self) -> MfConfig {
        MfConfig {
            factors: self.model.factors,
            learning_rate: self.model.learning_rate,
            regularization: self.model.regularization,
            budget: Duration::from_secs_f64(self.model.budget_secs),
            validation_fraction: self.model.validation_fraction,
            seed: self.model_seed(),
            max_epochs: self.model.max_epochs,
        }
    }

    /// Dataset path, relative paths taken from `base` (the manifest's
    /// directory). Fails if nothing exists there.
    pub fn resolve_dataset(&self, base: &Path) -> Result<PathBuf, ManifestError> {
        let path = if self.dataset.path.is_absolute() {
            self.dataset.path.clone()
        } else {
            base.join(&self.dataset.path)
        };
        if !path.exists() {
            return Err(ManifestError::Invalid(format!(
                "dataset path {} does not exist",
                path.display()
            )));
        }
        Ok(path)
    }

    pub fn validate(&self) -> Result<(), ManifestError> {
        let bad = |msg: String| Err(ManifestError::Invalid(msg));
        let d = &self.dataset;
        if !(d.rating_min.is_finite() && d.rating_max.is_finite() && d.rating_min < d.rating_max) {
            return bad(format!("rating scale [{}, {}]", d.rating_min, d.rating_max));
        }
        if !(self.split.ratio > 0.0 && self.split.ratio < 1.0) {
            return bad(format!("split.ratio = {} (need 0 < ratio < 1)", self.split.ratio));
        }
        let m = &self.model;
        if m.k == 0 {
            return bad("model.k must be at least 1".into());
        }
        if m.gamma == 0 {
            return bad("model.gamma must be at least 1".into());
        }
        if !(m.budget_secs > 0.0 && m.budget_secs.is_finite()) {
            return bad(format!("model.budget_secs = {}", m.budget_secs));
        }
        if m.kind == ModelKind::Mf {
            self.mf_config()
                .validate()
                .map_err(|e| ManifestError::Invalid(e.to_string()))?;
        }
        self.protocol
            .validate()
            .map_err(|e| ManifestError::Invalid(e.to_string()))
    }
}

fn apply_override(doc: &mut toml::Table, assignment: &str) -> Result<(), ManifestError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| ManifestError::Override(assignment.to_owned()))?;
    let (section, field) = key
        .trim()
        .split_once('.')
        .ok_or_else(|| ManifestError::Override(assignment.to_owned()))?;
    let raw = raw.trim();
    // Bare words that are not TOML literals are taken as strings.
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_owned()));
    let table = doc
        .entry(section.to_owned())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()))
        .as_table_mut()
        .ok_or_else(|| ManifestError::Override(assignment.to_owned()))?;
    table.insert(field.to_owned(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[dataset]
path = "ratings.csv"

[model]
kind = "knn"
"#;

    #[test]
    fn defaults_fill_in() {
        let m = RunManifest::from_toml(MINIMAL, &[]).unwrap();
        assert_eq!(m.split.ratio, 0.9);
        assert_eq!(m.protocol, ProtocolConfig::default());
        assert_eq!(m.model.k, 100);
        assert_eq!(m.model.learning_rate, 0.030);
        assert_eq!(m.scale(), RatingScale::default());
    }

    #[test]
    fn overrides_replace_keys() {
        let m = RunManifest::from_toml(
            MINIMAL,
            &["model.kind=mf".into(), "model.factors=8".into(), "protocol.top_n=5".into(), "output.dir=elsewhere".into()],
        )
        .unwrap();
        assert_eq!(m.model.kind, ModelKind::Mf);
        assert_eq!(m.model.factors, 8);
        assert_eq!(m.protocol.top_n, 5);
        assert_eq!(m.output.dir, Some(PathBuf::from("elsewhere")));
        assert!(RunManifest::from_toml(MINIMAL, &["nonsense".into()]).is_err());
    }

    #[test]
    fn out_of_range_values_are_rejected() {
        for o in ["split.ratio=1.0", "model.k=0", "protocol.top_n=0", "dataset.rating_min=6"] {
            let err = RunManifest::from_toml(MINIMAL, &[o.into()]).unwrap_err();
            assert!(matches!(err, ManifestError::Invalid(_)), "{o}: {err}");
        }
        let err = RunManifest::from_toml(MINIMAL, &["model.kind=mf".into(), "model.factors=2".into()]).unwrap_err();
        assert!(matches!(err, ManifestError::Invalid(_)));
        assert!(RunManifest::from_toml(MINIMAL, &["model.unknown_key=1".into()]).is_err());
    }

    #[test]
    fn toml_round_trip() {
        let mut m = RunManifest::from_toml(MINIMAL, &["model.max_epochs=30".into()]).unwrap();
        m.set_seed(7);
        let back = RunManifest::from_toml(&m.to_toml(), &[]).unwrap();
        assert_eq!(back, m);
    }
}
