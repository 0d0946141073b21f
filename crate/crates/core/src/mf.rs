//! Biased matrix factorization trained by regularized SGD.
//!
//! Biases are carried as pinned coordinates: slot 0 of every user vector and
//! slot 1 of every item vector are fixed to 1, so `p_u · q_i` expands to
//! `q_i0 + p_u1 + Σ_{f≥2} p_uf q_if` (item bias + user bias + interaction).

use std::io::{BufRead, Write};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{default_predict, Predictor};
use crate::dataset::{ItemIdx, RatingScale, SegmentModel, SplitDataset, UserIdx};
use crate::error::{FormatError, TrainError};
use crate::knn::{top_k, Neighbor, SimilarityMatrix};

/// Pinned slot of user vectors.
pub const USER_BIAS_SLOT: usize = 0;
/// Pinned slot of item vectors.
pub const ITEM_BIAS_SLOT: usize = 1;

const INIT_RANGE: f64 = 0.01;
const MAX_CONSECUTIVE_INCREASES: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MfConfig {
    pub factors: usize,
    pub learning_rate: f64,
    pub regularization: f64,
    /// Wall-clock training budget.
    pub budget: Duration,
    pub validation_fraction: f64,
    pub seed: u64,
    /// Hard cap on epochs; keeps runs reproducible when the budget would
    /// otherwise be the binding stop.
    pub max_epochs: Option<usize>,
}

impl Default for MfConfig {
    fn default() -> Self {
        MfConfig {
            factors: 16,
            learning_rate: 0.030,
            regularization: 0.008,
            budget: Duration::from_secs(90 * 60),
            validation_fraction: 0.015,
            seed: 0,
            max_epochs: None,
        }
    }
}

impl MfConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |msg: String| Err(TrainError::InvalidParameter(msg));
        if self.factors < 3 {
            return bad(format!("factors = {} (need at least 3)", self.factors));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate = {}", self.learning_rate));
        }
        if !(self.regularization >= 0.0 && self.regularization.is_finite()) {
            return bad(format!("regularization = {}", self.regularization));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 0.5) {
            return bad(format!("validation_fraction = {} (need 0 < v < 0.5)", self.validation_fraction));
        }
        if self.budget.is_zero() {
            return bad("budget must be positive".to_owned());
        }
        if self.max_epochs == Some(0) {
            return bad("max_epochs must be positive".to_owned());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_rmse: f64,
    pub validation_rmse: f64,
    pub elapsed_secs: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    ValidationIncrease,
    Budget,
    MaxEpochs,
}

/// Rows of `dim` reals, one per entity; entities never seen in training have
/// no row.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorTable {
    dim: usize,
    known: Vec<bool>,
    values: Vec<f64>,
}

impl FactorTable {
    fn new(dim: usize, len: usize) -> Self {
        FactorTable {
            dim,
            known: vec![false; len],
            values: vec![0.0; dim * len],
        }
    }

    pub fn len(&self) -> usize {
        self.known.len()
    }

    pub fn is_empty(&self) -> bool {
        self.known.is_empty()
    }

    pub fn row(&self, index: usize) -> Option<&[f64]> {
        (*self.known.get(index)?).then(|| &self.values[index * self.dim..(index + 1) * self.dim])
    }

    fn row_mut(&mut self, index: usize) -> &mut [f64] {
        &mut self.values[index * self.dim..(index + 1) * self.dim]
    }

    pub fn known_rows(&self) -> impl Iterator<Item = (usize, &[f64])> + '_ {
        (0..self.len()).filter_map(|i| self.row(i).map(|r| (i, r)))
    }
}

/// Trained factor model: hyperparameters, both factor tables and the
/// per-epoch training log.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorModel {
    pub config: MfConfig,
    pub scale: RatingScale,
    pub users: FactorTable,
    pub items: FactorTable,
    pub training_log: Vec<EpochRecord>,
    /// Epoch (1-based) whose parameters were kept; 0 means the initial state.
    pub best_epoch: usize,
    pub stop_reason: StopReason,
}

impl FactorModel {
    pub fn factors(&self) -> usize {
        self.config.factors
    }

    /// `p_u · q_i` without clamping, if both vectors exist.
    pub fn raw_predict(&self, user: UserIdx, item: ItemIdx) -> Option<f64> {
        let p = self.users.row(user.index())?;
        let q = self.items.row(item.index())?;
        Some(dot(p, q))
    }

    /// Same parameters (hyperparameters and both tables), ignoring timings.
    pub fn same_parameters(&self, other: &FactorModel) -> bool {
        self.config == other.config
            && self.scale == other.scale
            && self.users == other.users
            && self.items == other.items
            && self.best_epoch == other.best_epoch
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One SGD update on a single log, in place. Returns the pre-update error
/// `r - p·q`. Pinned slots are left untouched.
pub fn sgd_step(p: &mut [f64], q: &mut [f64], rating: f64, learning_rate: f64, regularization: f64) -> f64 {
    let err = rating - dot(p, q);
    for f in 0..p.len() {
        let (pf, qf) = (p[f], q[f]);
        if f != USER_BIAS_SLOT {
            p[f] += learning_rate * (err * qf - regularization * pf);
        }
        if f != ITEM_BIAS_SLOT {
            q[f] += learning_rate * (err * pf - regularization * qf);
        }
    }
    err
}

struct Log {
    user: usize,
    item: usize,
    rating: f64,
}

/// Epoch-by-epoch SGD driver.
pub struct MfTrainer {
    config: MfConfig,
    scale: RatingScale,
    train: Vec<Log>,
    validation: Vec<Log>,
    order: Vec<usize>,
    rng: ChaCha8Rng,
    users: FactorTable,
    items: FactorTable,
    epoch: usize,
}

impl MfTrainer {
    pub fn new(data: &SplitDataset, config: &MfConfig) -> Result<Self, TrainError> {
        config.validate()?;
        if data.train().is_empty() {
            return Err(TrainError::EmptyTrain);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut train = Vec::with_capacity(data.train().len());
        let mut validation = Vec::new();
        for r in data.train() {
            let log = Log {
                user: r.user.index(),
                item: r.item.index(),
                rating: r.rating,
            };
            if rng.random::<f64>() < config.validation_fraction {
                validation.push(log);
            } else {
                train.push(log);
            }
        }
        if validation.is_empty() || train.is_empty() {
            return Err(TrainError::EmptyValidation {
                fraction: config.validation_fraction,
                train: data.train().len(),
            });
        }

        let dim = config.factors;
        let mut users = FactorTable::new(dim, data.num_users());
        let mut items = FactorTable::new(dim, data.catalog_size());
        for log in &train {
            users.known[log.user] = true;
            items.known[log.item] = true;
        }
        for (table, pinned) in [(&mut users, USER_BIAS_SLOT), (&mut items, ITEM_BIAS_SLOT)] {
            for i in 0..table.len() {
                if !table.known[i] {
                    continue;
                }
                let row = table.row_mut(i);
                for (f, v) in row.iter_mut().enumerate() {
                    *v = if f == pinned {
                        1.0
                    } else {
                        rng.random_range(-INIT_RANGE..=INIT_RANGE)
                    };
                }
            }
        }
        let order = (0..train.len()).collect();
        Ok(MfTrainer {
            config: config.clone(),
            scale: data.scale(),
            train,
            validation,
            order,
            rng,
            users,
            items,
            epoch: 0,
        })
    }

    /// One pass over the training logs in a freshly shuffled order.
    pub fn run_epoch(&mut self) {
        self.order.shuffle(&mut self.rng);
        let dim = self.config.factors;
        let (lr, reg) = (self.config.learning_rate, self.config.regularization);
        for &k in &self.order {
            let log = &self.train[k];
            let p = &mut self.users.values[log.user * dim..(log.user + 1) * dim];
            let q = &mut self.items.values[log.item * dim..(log.item + 1) * dim];
            sgd_step(p, q, log.rating, lr, reg);
        }
        self.epoch += 1;
    }

    fn rmse_over(&self, logs: &[Log]) -> f64 {
        let dim = self.config.factors;
        let sse: f64 = logs
            .iter()
            .map(|log| {
                let p = &self.users.values[log.user * dim..(log.user + 1) * dim];
                let q = &self.items.values[log.item * dim..(log.item + 1) * dim];
                let e = log.rating - self.scale.clamp(dot(p, q));
                e * e
            })
            .sum();
        (sse / logs.len() as f64).sqrt()
    }

    /// RMSE of clamped predictions over the logs used for SGD.
    pub fn train_rmse(&self) -> f64 {
        self.rmse_over(&self.train)
    }

    pub fn validation_rmse(&self) -> f64 {
        self.rmse_over(&self.validation)
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn validation_len(&self) -> usize {
        self.validation.len()
    }

    pub fn users(&self) -> &FactorTable {
        &self.users
    }

    pub fn items(&self) -> &FactorTable {
        &self.items
    }
}

/// Train with early stopping: stop after three consecutive increases of the
/// validation RMSE, when the budget elapses, or at `max_epochs`. The returned
/// parameters are those of the epoch with the lowest validation RMSE.
pub fn train_mf(data: &SplitDataset, config: &MfConfig) -> Result<FactorModel, TrainError> {
    let start = Instant::now();
    let mut trainer = MfTrainer::new(data, config)?;
    let mut best_rmse = trainer.validation_rmse();
    let mut best = (0, trainer.users.clone(), trainer.items.clone());
    let mut previous = best_rmse;
    let mut increases = 0;
    let mut log = Vec::new();

    let stop_reason = loop {
        trainer.run_epoch();
        let validation_rmse = trainer.validation_rmse();
        log.push(EpochRecord {
            epoch: trainer.epoch,
            train_rmse: trainer.train_rmse(),
            validation_rmse,
            elapsed_secs: start.elapsed().as_secs_f64(),
        });
        if validation_rmse < best_rmse {
            best_rmse = validation_rmse;
            best = (trainer.epoch, trainer.users.clone(), trainer.items.clone());
        }
        increases = if validation_rmse > previous { increases + 1 } else { 0 };
        previous = validation_rmse;

        if increases >= MAX_CONSECUTIVE_INCREASES {
            break StopReason::ValidationIncrease;
        }
        if config.max_epochs.is_some_and(|m| trainer.epoch >= m) {
            break StopReason::MaxEpochs;
        }
        if start.elapsed() >= config.budget {
            break StopReason::Budget;
        }
    };

    let (best_epoch, users, items) = best;
    Ok(FactorModel {
        config: config.clone(),
        scale: data.scale(),
        users,
        items,
        training_log: log,
        best_epoch,
        stop_reason,
    })
}

/// Pearson correlation between item factor vectors, top-`k` positive
/// neighbors per item. With `include_bias = false` the pinned item slot is
/// left out of the correlation.
pub fn mf_item_similarity(model: &FactorModel, k: usize, include_bias: bool) -> SimilarityMatrix {
    assert!(k >= 1, "neighborhood size must be at least 1");
    let standardized: Vec<Option<Vec<f64>>> = (0..model.items.len())
        .map(|i| {
            let row = model.items.row(i)?;
            let coords: Vec<f64> = row
                .iter()
                .enumerate()
                .filter(|&(f, _)| include_bias || f != ITEM_BIAS_SLOT)
                .map(|(_, &v)| v)
                .collect();
            standardize(&coords)
        })
        .collect();
    let lists = (0..standardized.len())
        .into_par_iter()
        .map(|i| {
            let Some(a) = &standardized[i] else {
                return Vec::new();
            };
            let candidates = standardized.iter().enumerate().filter_map(|(j, b)| {
                let b = b.as_ref()?;
                (j != i).then(|| Neighbor {
                    item: ItemIdx(j as u32),
                    weight: dot(a, b).clamp(-1.0, 1.0),
                })
            });
            top_k(candidates, k)
        })
        .collect();
    SimilarityMatrix::from_ranked(k, lists)
}

/// Pearson correlation of two equal-length vectors; 0 if either has zero
/// variance.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    match (standardize(a), standardize(b)) {
        (Some(x), Some(y)) => dot(&x, &y).clamp(-1.0, 1.0),
        _ => 0.0,
    }
}

/// Center and scale to unit norm, so that Pearson correlation is a dot product.
fn standardize(v: &[f64]) -> Option<Vec<f64>> {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let centered: Vec<f64> = v.iter().map(|x| x - mean).collect();
    let norm = dot(&centered, &centered).sqrt();
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if norm <= 1e-12 * scale.max(f64::MIN_POSITIVE) * (v.len() as f64).sqrt() {
        return None;
    }
    Some(centered.into_iter().map(|x| x / norm).collect())
}

/// Factor model as a predictor, falling back to the default predictor for
/// users or items without vectors.
#[derive(Clone, Debug)]
pub struct MfModel {
    factors: FactorModel,
    stats: SegmentModel,
    include_bias_in_similarity: bool,
}

impl MfModel {
    pub fn new(factors: FactorModel, stats: SegmentModel) -> Self {
        MfModel {
            factors,
            stats,
            include_bias_in_similarity: true,
        }
    }

    pub fn with_bias_in_similarity(mut self, include: bool) -> Self {
        self.include_bias_in_similarity = include;
        self
    }

    pub fn factors(&self) -> &FactorModel {
        &self.factors
    }
}

/// `p_u · q_i` clamped to the scale; unknown user or item falls back to
/// [`default_predict`].
pub fn mf_predict(model: &FactorModel, stats: &SegmentModel, user: UserIdx, item: ItemIdx) -> f64 {
    match model.raw_predict(user, item) {
        Some(raw) => model.scale.clamp(raw),
        None => default_predict(stats, model.scale, user, item),
    }
}

impl Predictor for MfModel {
    fn name(&self) -> String {
        format!("mf(factors={})", self.factors.factors())
    }

    fn predict(&self, user: UserIdx, item: ItemIdx) -> f64 {
        mf_predict(&self.factors, &self.stats, user, item)
    }

    fn item_similarity(&self, k: usize) -> Option<SimilarityMatrix> {
        Some(mf_item_similarity(&self.factors, k, self.include_bias_in_similarity))
    }
}

const MODEL_MAGIC: &str = "recbench-factor-model 1";

impl FactorModel {
    /// Text form. Header lines `key=value`, then `epoch,...`, `user,<id>,...`
    /// and `item,<id>,...` records. Reals are written in shortest round-trip
    /// form, so [`FactorModel::read`] restores the model exactly.
    pub fn write<W: Write>(&self, data: &SplitDataset, out: W) -> std::io::Result<()> {
        let mut w = std::io::BufWriter::new(out);
        let c = &self.config;
        writeln!(w, "{MODEL_MAGIC}")?;
        writeln!(w, "factors={}", c.factors)?;
        writeln!(w, "learning_rate={:?}", c.learning_rate)?;
        writeln!(w, "regularization={:?}", c.regularization)?;
        writeln!(w, "budget_nanos={}", c.budget.as_nanos())?;
        writeln!(w, "validation_fraction={:?}", c.validation_fraction)?;
        writeln!(w, "seed={}", c.seed)?;
        writeln!(w, "max_epochs={}", c.max_epochs.map_or("none".to_owned(), |m| m.to_string()))?;
        writeln!(w, "scale={:?},{:?},{}", self.scale.min, self.scale.max, self.scale.discrete)?;
        writeln!(w, "best_epoch={}", self.best_epoch)?;
        writeln!(w, "stop_reason={}", serde_json::to_string(&self.stop_reason).unwrap().trim_matches('"'))?;
        for e in &self.training_log {
            writeln!(w, "epoch,{},{:?},{:?},{:?}", e.epoch, e.train_rmse, e.validation_rmse, e.elapsed_secs)?;
        }
        for (kind, table, ids) in [
            ("user", &self.users, data.users().ids()),
            ("item", &self.items, data.items().ids()),
        ] {
            for (i, row) in table.known_rows() {
                write!(w, "{kind},{}", ids[i])?;
                for v in row {
                    write!(w, ",{v:?}")?;
                }
                writeln!(w)?;
            }
        }
        w.flush()
    }

    pub fn read<R: BufRead>(data: &SplitDataset, input: R) -> Result<FactorModel, FormatError> {
        let mut lines = input.lines().enumerate();
        let perr = |line: usize, message: String| FormatError::Parse {
            line: line + 1,
            message,
        };
        let mut next = |expect: &str| -> Result<(usize, String), FormatError> {
            let (n, line) = lines
                .next()
                .ok_or_else(|| perr(0, format!("missing `{expect}`")))?;
            let line = line.map_err(|e| perr(n, e.to_string()))?;
            Ok((n, line))
        };
        let (n, magic) = next("magic")?;
        if magic != MODEL_MAGIC {
            return Err(perr(n, format!("not a factor model file: `{magic}`")));
        }
        let mut header = std::collections::HashMap::new();
        for key in [
            "factors",
            "learning_rate",
            "regularization",
            "budget_nanos",
            "validation_fraction",
            "seed",
            "max_epochs",
            "scale",
            "best_epoch",
            "stop_reason",
        ] {
            let (n, line) = next(key)?;
            let value = line
                .strip_prefix(key)
                .and_then(|rest| rest.strip_prefix('='))
                .ok_or_else(|| perr(n, format!("expected `{key}=...`")))?;
            header.insert(key, (n, value.to_owned()));
        }
        fn parse<T: std::str::FromStr>(
            header: &std::collections::HashMap<&str, (usize, String)>,
            key: &str,
        ) -> Result<T, FormatError> {
            let (n, v) = &header[key];
            v.parse().map_err(|_| FormatError::Parse {
                line: n + 1,
                message: format!("invalid {key} `{v}`"),
            })
        }
        let max_epochs = match header["max_epochs"].1.as_str() {
            "none" => None,
            _ => Some(parse::<usize>(&header, "max_epochs")?),
        };
        let config = MfConfig {
            factors: parse(&header, "factors")?,
            learning_rate: parse(&header, "learning_rate")?,
            regularization: parse(&header, "regularization")?,
            budget: Duration::from_nanos(parse::<u64>(&header, "budget_nanos")?),
            validation_fraction: parse(&header, "validation_fraction")?,
            seed: parse(&header, "seed")?,
            max_epochs,
        };
        let (sn, scale_text) = &header["scale"];
        let scale = {
            let parts: Vec<&str> = scale_text.split(',').collect();
            match parts.as_slice() {
                [min, max, discrete] => RatingScale {
                    min: min.parse().map_err(|_| perr(*sn, "invalid scale".into()))?,
                    max: max.parse().map_err(|_| perr(*sn, "invalid scale".into()))?,
                    discrete: discrete.parse().map_err(|_| perr(*sn, "invalid scale".into()))?,
                },
                _ => return Err(perr(*sn, "invalid scale".into())),
            }
        };
        let stop_reason: StopReason =
            serde_json::from_str(&format!("\"{}\"", header["stop_reason"].1))?;

        let dim = config.factors;
        let mut users = FactorTable::new(dim, data.num_users());
        let mut items = FactorTable::new(dim, data.catalog_size());
        let mut training_log = Vec::new();
        for (n, line) in lines {
            let line = line.map_err(|e| perr(n, e.to_string()))?;
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            let num = |s: &str| s.parse::<f64>().map_err(|_| perr(n, format!("invalid number `{s}`")));
            match fields[0] {
                "epoch" if fields.len() == 5 => training_log.push(EpochRecord {
                    epoch: fields[1].parse().map_err(|_| perr(n, "invalid epoch".into()))?,
                    train_rmse: num(fields[2])?,
                    validation_rmse: num(fields[3])?,
                    elapsed_secs: num(fields[4])?,
                }),
                kind @ ("user" | "item") if fields.len() == dim + 2 => {
                    let (table, index) = if kind == "user" {
                        (&mut users, data.user_idx(fields[1]).map(|u| u.index()))
                    } else {
                        (&mut items, data.item_idx(fields[1]).map(|i| i.index()))
                    };
                    let index = index.ok_or_else(|| perr(n, format!("unknown {kind} `{}`", fields[1])))?;
                    table.known[index] = true;
                    for (slot, text) in table.row_mut(index).iter_mut().zip(&fields[2..]) {
                        *slot = num(text)?;
                    }
                }
                _ => return Err(perr(n, format!("unexpected record `{line}`"))),
            }
        }
        Ok(FactorModel {
            config,
            scale,
            users,
            items,
            training_log,
            best_epoch: parse(&header, "best_epoch")?,
            stop_reason,
        })
    }
}
