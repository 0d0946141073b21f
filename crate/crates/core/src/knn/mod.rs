//! Item-item nearest-neighbor model over Weighted Pearson similarities.
//!
//! The same predictor also runs on any externally supplied
//! [`SimilarityMatrix`], which is how factor models are scored on item
//! navigation.

mod similarity;

pub use similarity::{top_k, Neighbor, SimilarityMatrix};

use rayon::prelude::*;

use crate::baselines::{default_predict, DefaultPredictor, Predictor};
use crate::dataset::{ItemIdx, RatingScale, SegmentModel, SplitDataset, UserIdx};

/// Default support threshold of the Weighted Pearson shrinkage.
pub const DEFAULT_GAMMA: usize = 50;

/// Co-rating sums of two items over their common raters.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
struct CoSums {
    n: usize,
    sx: f64,
    sy: f64,
    sxx: f64,
    syy: f64,
    sxy: f64,
}

impl CoSums {
    #[inline]
    fn add(&mut self, x: f64, y: f64) {
        self.n += 1;
        self.sx += x;
        self.sy += y;
        self.sxx += x * x;
        self.syy += y * y;
        self.sxy += x * y;
    }

    /// Pearson correlation shrunk by `min(n, gamma) / gamma`. Written so
    /// that swapping the two items gives a bit-identical result.
    fn weighted_pearson(&self, gamma: usize) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        let var_x = self.sxx - self.sx * self.sx / n;
        let var_y = self.syy - self.sy * self.sy / n;
        if var_x <= 1e-12 * self.sxx || var_y <= 1e-12 * self.syy {
            return 0.0;
        }
        let cov = self.sxy - self.sx * self.sy / n;
        let r = (cov / (var_x * var_y).sqrt()).clamp(-1.0, 1.0);
        r * self.n.min(gamma) as f64 / gamma as f64
    }
}

/// Weighted Pearson similarity of two items given their rater lists
/// (sorted by user). Degenerate cases (fewer than two common raters, zero
/// variance on the common raters) give 0.
pub fn weighted_pearson(a: &[(UserIdx, f64)], b: &[(UserIdx, f64)], gamma: usize) -> f64 {
    assert!(gamma >= 1, "gamma must be at least 1");
    let mut sums = CoSums::default();
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                sums.add(a[i].1, b[j].1);
                i += 1;
                j += 1;
            }
        }
    }
    sums.weighted_pearson(gamma)
}

/// Dense per-thread accumulator for one row of co-rating sums.
struct RowScratch {
    sums: Vec<CoSums>,
    touched: Vec<u32>,
}

impl RowScratch {
    fn new(n: usize) -> Self {
        RowScratch {
            sums: vec![CoSums::default(); n],
            touched: Vec::new(),
        }
    }
}

/// Top-`k` Weighted Pearson neighbors of every item, keeping only strictly
/// positive similarities.
///
/// Co-rating statistics come from the user -> items inverted lists, so only
/// pairs with at least one common rater are visited.
pub fn build_similarity_matrix(data: &SplitDataset, k: usize, gamma: usize) -> SimilarityMatrix {
    assert!(k >= 1, "neighborhood size must be at least 1");
    assert!(gamma >= 1, "gamma must be at least 1");
    let n_items = data.catalog_size();
    let lists: Vec<Vec<Neighbor>> = (0..n_items as u32)
        .into_par_iter()
        .map_init(
            || RowScratch::new(n_items),
            |scratch, i| {
                let item = ItemIdx(i);
                // Raters of `item` are visited in ascending user order, which
                // is also the order `weighted_pearson` accumulates in.
                for &(user, x) in data.train_of_item(item) {
                    for &(other, y) in data.train_of_user(user) {
                        if other == item {
                            continue;
                        }
                        let slot = &mut scratch.sums[other.index()];
                        if slot.n == 0 {
                            scratch.touched.push(other.0);
                        }
                        slot.add(x, y);
                    }
                }
                let candidates: Vec<Neighbor> = scratch
                    .touched
                    .drain(..)
                    .map(|j| {
                        let sums = std::mem::take(&mut scratch.sums[j as usize]);
                        Neighbor {
                            item: ItemIdx(j),
                            weight: sums.weighted_pearson(gamma),
                        }
                    })
                    .collect();
                top_k(candidates, k)
            },
        )
        .collect();
    SimilarityMatrix::from_ranked(k, lists)
}

/// Mean-centered neighborhood estimate for `item`:
/// `mean(i) + Σ w_ij (r_uj - mean(j)) / Σ w_ij` over the neighbors `j` the
/// user rated, falling back to [`default_predict`] when none applies.
pub fn knn_predict(
    matrix: &SimilarityMatrix,
    stats: &SegmentModel,
    scale: RatingScale,
    user: UserIdx,
    user_rating: impl Fn(ItemIdx) -> Option<f64>,
    item: ItemIdx,
) -> f64 {
    if let Some(item_mean) = stats.item_mean(item) {
        let mut num = 0.0;
        let mut den = 0.0;
        for n in matrix.neighbors(item) {
            if n.weight <= 0.0 {
                continue;
            }
            if let (Some(r), Some(mean_j)) = (user_rating(n.item), stats.item_mean(n.item)) {
                num += n.weight * (r - mean_j);
                den += n.weight;
            }
        }
        if den > 0.0 {
            return scale.clamp(item_mean + num / den);
        }
    }
    default_predict(stats, scale, user, item)
}

/// Item-item KNN predictor: a similarity matrix plus the train profiles and
/// statistics it is applied to.
#[derive(Clone, Debug)]
pub struct KnnModel {
    name: String,
    matrix: SimilarityMatrix,
    fallback: DefaultPredictor,
    profiles: Vec<Vec<(ItemIdx, f64)>>,
    catalog_size: usize,
}

impl KnnModel {
    /// Native model: Weighted Pearson matrix built from `data.train`.
    pub fn train(data: &SplitDataset, stats: &SegmentModel, k: usize, gamma: usize) -> Self {
        let matrix = build_similarity_matrix(data, k, gamma);
        Self::with_matrix(format!("knn(k={k},gamma={gamma})"), matrix, data, stats)
    }

    /// KNN over an arbitrary matrix built for the same dataset.
    pub fn with_matrix(
        name: impl Into<String>,
        matrix: SimilarityMatrix,
        data: &SplitDataset,
        stats: &SegmentModel,
    ) -> Self {
        KnnModel {
            name: name.into(),
            matrix,
            fallback: DefaultPredictor::new(stats.clone(), data.scale()),
            profiles: data.all_users().map(|u| data.train_of_user(u).to_vec()).collect(),
            catalog_size: data.catalog_size(),
        }
    }

    pub fn matrix(&self) -> &SimilarityMatrix {
        &self.matrix
    }

    fn profile(&self, user: UserIdx) -> &[(ItemIdx, f64)] {
        self.profiles.get(user.index()).map_or(&[], Vec::as_slice)
    }
}

impl Predictor for KnnModel {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn predict(&self, user: UserIdx, item: ItemIdx) -> f64 {
        let profile = self.profile(user);
        knn_predict(
            &self.matrix,
            self.fallback.stats(),
            self.fallback.scale(),
            user,
            |j| {
                profile
                    .binary_search_by_key(&j, |&(i, _)| i)
                    .ok()
                    .map(|pos| profile[pos].1)
            },
            item,
        )
    }

    fn predict_items(&self, user: UserIdx, items: &[ItemIdx], out: &mut Vec<f64>) {
        let mut dense = vec![f64::NAN; self.catalog_size];
        for &(i, r) in self.profile(user) {
            dense[i.index()] = r;
        }
        let lookup = |j: ItemIdx| {
            let r = dense[j.index()];
            (!r.is_nan()).then_some(r)
        };
        out.clear();
        out.extend(items.iter().map(|&item| {
            knn_predict(
                &self.matrix,
                self.fallback.stats(),
                self.fallback.scale(),
                user,
                lookup,
                item,
            )
        }));
    }

    fn item_similarity(&self, k: usize) -> Option<SimilarityMatrix> {
        Some(self.matrix.truncated(k))
    }
}
