//! The evaluation protocol: rating prediction (Decide), pairwise ranking
//! (Compare) and top-N recommendation (Discover) on the test set, then the
//! same three re-run through a KNN model built on the predictor's item
//! similarity matrix (Explore).

use std::cmp::Ordering;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::Predictor;
use crate::dataset::{ItemIdx, SegmentModel, SplitDataset, UserIdx};
use crate::error::EvaluationError;
use crate::knn::{KnnModel, SimilarityMatrix};
use crate::metrics::{
    aggregate_comp, aggregate_discover, aggregate_rmse, ami_excluded, comp_user, Function,
    MetricTable, PairCounts, RecommendationOutcome, ScoredLog,
};
use crate::report::{CoreReport, DatasetSummary, EvaluationReport, Explore, Timings};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    /// Length of every top-N list.
    #[serde(default = "default_top_n")]
    pub top_n: usize,
    /// Neighborhood size of the similarity matrix used for Explore.
    #[serde(default = "default_explore_k")]
    pub explore_k: usize,
    /// Leave the user's train items out of the top-N candidates.
    #[serde(default = "default_exclude_seen")]
    pub exclude_seen: bool,
}

fn default_top_n() -> usize {
    10
}
fn default_explore_k() -> usize {
    100
}
fn default_exclude_seen() -> bool {
    true
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            top_n: default_top_n(),
            explore_k: default_explore_k(),
            exclude_seen: default_exclude_seen(),
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<(), EvaluationError> {
        if self.top_n == 0 {
            return Err(EvaluationError::InvalidConfig("top_n must be at least 1".into()));
        }
        if self.explore_k == 0 {
            return Err(EvaluationError::InvalidConfig("explore_k must be at least 1".into()));
        }
        Ok(())
    }
}

/// Highest score first, ties by ascending item index.
fn by_score(a: &(ItemIdx, f64), b: &(ItemIdx, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// The `n` best-scored items, ties broken by ascending item id (item
/// indices follow id order). Fewer than `n` candidates returns all of them.
pub fn select_top_n(items: &[ItemIdx], scores: &[f64], n: usize) -> Vec<ItemIdx> {
    let mut scored: Vec<(ItemIdx, f64)> = items.iter().copied().zip(scores.iter().copied()).collect();
    if scored.len() > n && n > 0 {
        scored.select_nth_unstable_by(n - 1, by_score);
        scored.truncate(n);
    }
    scored.truncate(n);
    scored.sort_unstable_by(by_score);
    scored.into_iter().map(|(i, _)| i).collect()
}

/// Candidate items for `user`: the whole catalog, minus the user's train
/// items when `exclude_seen` is set.
pub fn candidates(data: &SplitDataset, user: UserIdx, exclude_seen: bool) -> Vec<ItemIdx> {
    if !exclude_seen {
        return data.all_items().collect();
    }
    let seen = data.train_of_user(user);
    let mut out = Vec::with_capacity(data.catalog_size() - seen.len());
    let mut s = seen.iter().map(|&(i, _)| i).peekable();
    for item in data.all_items() {
        if s.peek() == Some(&item) {
            s.next();
        } else {
            out.push(item);
        }
    }
    out
}

/// Top-N list of `user` over `candidates`.
pub fn generate_top_n(
    model: &dyn Predictor,
    user: UserIdx,
    candidates: &[ItemIdx],
    n: usize,
) -> Vec<ItemIdx> {
    let mut scores = Vec::with_capacity(candidates.len());
    model.predict_items(user, candidates, &mut scores);
    select_top_n(candidates, &scores, n)
}

struct UserPass {
    scored: Vec<ScoredLog>,
    comp: PairCounts,
    outcomes: Vec<RecommendationOutcome>,
}

fn check(
    model: &dyn Predictor,
    data: &SplitDataset,
    user: UserIdx,
    item: ItemIdx,
    value: f64,
) -> Result<f64, EvaluationError> {
    if value.is_finite() && data.scale().contains(value) {
        Ok(value)
    } else {
        Err(EvaluationError::InvalidPrediction {
            model: model.name(),
            user_id: data.user_id(user).to_owned(),
            item_id: data.item_id(item).to_owned(),
            value,
        })
    }
}

/// Every test log and every candidate item of one user is scored in a
/// single `predict_items` call; the candidates always contain the user's
/// test items because train and test are disjoint.
fn evaluate_user(
    model: &dyn Predictor,
    data: &SplitDataset,
    segments: &SegmentModel,
    config: &ProtocolConfig,
    user: UserIdx,
) -> Result<UserPass, EvaluationError> {
    let items = candidates(data, user, config.exclude_seen);
    let mut scores = Vec::with_capacity(items.len());
    model.predict_items(user, &items, &mut scores);
    for (&item, &score) in items.iter().zip(&scores) {
        check(model, data, user, item, score)?;
    }

    let test = data.test_of_user(user);
    let mut scored = Vec::with_capacity(test.len());
    for &(item, rating) in test {
        let pos = items
            .binary_search(&item)
            .expect("test items are always candidates");
        scored.push(ScoredLog {
            user,
            item,
            true_rating: rating,
            predicted_rating: scores[pos],
            segment: segments.segment_of(user, item),
        });
    }
    let pairs: Vec<(f64, f64)> = scored
        .iter()
        .map(|s| (s.true_rating, s.predicted_rating))
        .collect();
    let comp = comp_user(&pairs);

    let user_mean = segments.relevance_mean(user);
    let outcomes = select_top_n(&items, &scores, config.top_n)
        .into_iter()
        .enumerate()
        .map(|(rank, item)| RecommendationOutcome {
            user,
            item,
            rank: rank + 1,
            true_rating: data.test_rating(user, item),
            user_mean,
            item_count: segments.item_count(item),
            catalog_size: data.catalog_size(),
            segment: segments.segment_of(user, item),
        })
        .collect();
    Ok(UserPass {
        scored,
        comp,
        outcomes,
    })
}

/// Decide, Compare and Discover tables for a model trained on `data.train`.
pub fn run_core(
    model: &dyn Predictor,
    data: &SplitDataset,
    segments: &SegmentModel,
    config: &ProtocolConfig,
) -> Result<CoreReport, EvaluationError> {
    config.validate()?;
    let users: Vec<UserIdx> = data.all_users().collect();
    let passes: Vec<UserPass> = users
        .par_iter()
        .map(|&u| evaluate_user(model, data, segments, config, u))
        .collect::<Result<_, _>>()?;

    let scored: Vec<ScoredLog> = passes.iter().flat_map(|p| p.scored.iter().copied()).collect();
    let comp: Vec<_> = users
        .iter()
        .zip(&passes)
        .map(|(&u, p)| (segments.user_class(u), p.comp))
        .collect();
    let outcomes: Vec<Vec<RecommendationOutcome>> = passes.into_iter().map(|p| p.outcomes).collect();
    let excluded = outcomes.iter().map(|o| ami_excluded(o)).sum::<usize>() as u64;

    Ok(CoreReport {
        model: model.name(),
        decide: aggregate_rmse(Function::Decide, &scored),
        compare: aggregate_comp(Function::Compare, &comp),
        discover: aggregate_discover(Function::Discover, &outcomes),
        ami_excluded: excluded,
    })
}

/// Explore: extract the model's top-K item similarity matrix, run a KNN
/// model on it and evaluate that model with [`run_core`].
pub fn run_explore(
    model: &dyn Predictor,
    data: &SplitDataset,
    segments: &SegmentModel,
    config: &ProtocolConfig,
) -> Result<(Explore, f64), EvaluationError> {
    config.validate()?;
    let start = Instant::now();
    let Some(matrix) = model.item_similarity(config.explore_k) else {
        return Ok((
            Explore::Absent {
                reason: format!("`{}` provides no item similarity", model.name()),
            },
            0.0,
        ));
    };
    let similarity_secs = start.elapsed().as_secs_f64();
    let core = explore_with_matrix(&model.name(), matrix, data, segments, config)?;
    Ok((Explore::Present(Box::new(core)), similarity_secs))
}

/// Explore evaluation of an already extracted similarity matrix.
pub fn explore_with_matrix(
    source_model: &str,
    matrix: SimilarityMatrix,
    data: &SplitDataset,
    segments: &SegmentModel,
    config: &ProtocolConfig,
) -> Result<CoreReport, EvaluationError> {
    let knn = KnnModel::with_matrix(
        format!("knn-on({},k={})", source_model, matrix.k()),
        matrix,
        data,
        segments,
    );
    run_core(&knn, data, segments, config)
}

/// Full protocol: core functions plus Explore.
pub fn evaluate(
    model: &dyn Predictor,
    data: &SplitDataset,
    segments: &SegmentModel,
    config: &ProtocolConfig,
) -> Result<(EvaluationReport, Timings), EvaluationError> {
    let start = Instant::now();
    let core = run_core(model, data, segments, config)?;
    let core_secs = start.elapsed().as_secs_f64();
    let start = Instant::now();
    let (explore, similarity_secs) = run_explore(model, data, segments, config)?;
    let explore_secs = start.elapsed().as_secs_f64();
    let report = EvaluationReport {
        model: core.model.clone(),
        protocol: config.clone(),
        scale: data.scale(),
        dataset: DatasetSummary::new(data, segments),
        manifest: None,
        decide: core.decide,
        compare: core.compare,
        discover: core.discover,
        ami_excluded: core.ami_excluded,
        explore,
    };
    Ok((
        report,
        Timings {
            train_secs: 0.0,
            core_secs,
            similarity_secs,
            explore_secs,
        },
    ))
}

/// All tables of a core report, concatenated.
pub fn core_tables(core: &CoreReport) -> MetricTable {
    let mut t = core.decide.clone();
    t.extend(core.compare.clone());
    t.extend(core.discover.clone());
    t
}
