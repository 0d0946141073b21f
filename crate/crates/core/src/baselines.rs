//! The predictor contract and the two reference baselines.

use crate::dataset::{ItemIdx, RatingScale, SegmentModel, SplitDataset, UserIdx};
use crate::knn::SimilarityMatrix;

/// Anything that can estimate a rating for every `(user, item)` pair of a
/// [`SplitDataset`] it was trained on.
///
/// Implementations must be pure given their trained state and must return
/// values inside the rating scale.
pub trait Predictor: Sync {
    fn name(&self) -> String;

    fn predict(&self, user: UserIdx, item: ItemIdx) -> f64;

    /// Score `items` for one user. Implementations with per-user setup
    /// cost override this; results must equal calling [`Predictor::predict`].
    fn predict_items(&self, user: UserIdx, items: &[ItemIdx], out: &mut Vec<f64>) {
        out.clear();
        out.extend(items.iter().map(|&item| self.predict(user, item)));
    }

    /// Item-item similarity matrix derived from the model, if it has one.
    fn item_similarity(&self, _k: usize) -> Option<SimilarityMatrix> {
        None
    }
}

impl<P: Predictor + ?Sized> Predictor for &P {
    fn name(&self) -> String {
        (**self).name()
    }
    fn predict(&self, user: UserIdx, item: ItemIdx) -> f64 {
        (**self).predict(user, item)
    }
    fn predict_items(&self, user: UserIdx, items: &[ItemIdx], out: &mut Vec<f64>) {
        (**self).predict_items(user, items, out)
    }
    fn item_similarity(&self, k: usize) -> Option<SimilarityMatrix> {
        (**self).item_similarity(k)
    }
}

impl<P: Predictor + ?Sized> Predictor for Box<P> {
    fn name(&self) -> String {
        (**self).name()
    }
    fn predict(&self, user: UserIdx, item: ItemIdx) -> f64 {
        (**self).predict(user, item)
    }
    fn predict_items(&self, user: UserIdx, items: &[ItemIdx], out: &mut Vec<f64>) {
        (**self).predict_items(user, items, out)
    }
    fn item_similarity(&self, k: usize) -> Option<SimilarityMatrix> {
        (**self).item_similarity(k)
    }
}

/// Mean of the item mean and the user mean, falling back to whichever is
/// known, then to the global mean.
pub fn default_predict(stats: &SegmentModel, scale: RatingScale, user: UserIdx, item: ItemIdx) -> f64 {
    let estimate = match (stats.item_mean(item), stats.user_mean(user)) {
        (Some(i), Some(u)) => (i + u) / 2.0,
        (Some(i), None) => i,
        (None, Some(u)) => u,
        (None, None) => stats.global_mean,
    };
    scale.clamp(estimate)
}

#[derive(Clone, Debug)]
pub struct DefaultPredictor {
    stats: SegmentModel,
    scale: RatingScale,
}

impl DefaultPredictor {
    pub fn new(stats: SegmentModel, scale: RatingScale) -> Self {
        DefaultPredictor { stats, scale }
    }

    pub fn stats(&self) -> &SegmentModel {
        &self.stats
    }

    pub fn scale(&self) -> RatingScale {
        self.scale
    }
}

impl Predictor for DefaultPredictor {
    fn name(&self) -> String {
        "default".to_owned()
    }

    fn predict(&self, user: UserIdx, item: ItemIdx) -> f64 {
        default_predict(&self.stats, self.scale, user, item)
    }
}

/// 64-bit FNV-1a.
pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// SplitMix64 finalizer.
#[inline]
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[inline]
fn pair_hash(seed: u64, user_hash: u64, item_hash: u64) -> u64 {
    mix64(seed ^ mix64(user_hash ^ mix64(item_hash.wrapping_add(0x9e37_79b9_7f4a_7c15))))
}

/// Offset separating random draws that land on the same level. Far below
/// any rating resolution, so rounding a draw recovers its level.
pub const TIE_BREAK: f64 = 1e-6;

#[inline]
fn draw(scale: RatingScale, hash: u64) -> f64 {
    let unit = (hash >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    if scale.discrete {
        let levels = scale.levels();
        let scaled = unit * levels as f64;
        let level = (scaled as usize).min(levels - 1);
        let rest = (scaled - level as f64).clamp(0.0, 1.0);
        let base = scale.min.ceil() + level as f64;
        let offset = if level == 0 {
            TIE_BREAK * rest
        } else if level == levels - 1 {
            -TIE_BREAK * rest
        } else {
            TIE_BREAK * (rest - 0.5)
        };
        scale.clamp(base + offset)
    } else {
        scale.min + unit * (scale.max - scale.min)
    }
}

/// Uniform rating for `(user_id, item_id)`, a pure function of its inputs.
/// Discrete scales draw an integer level, displaced by less than
/// [`TIE_BREAK`] so that two draws almost never coincide; continuous scales
/// draw a real.
pub fn random_predict(seed: u64, scale: RatingScale, user_id: &str, item_id: &str) -> f64 {
    draw(scale, pair_hash(seed, fnv1a(user_id.as_bytes()), fnv1a(item_id.as_bytes())))
}

/// [`random_predict`] with the identifier hashes of one dataset precomputed.
#[derive(Clone, Debug)]
pub struct RandomPredictor {
    seed: u64,
    scale: RatingScale,
    user_hashes: Vec<u64>,
    item_hashes: Vec<u64>,
}

impl RandomPredictor {
    pub fn new(data: &SplitDataset, seed: u64) -> Self {
        RandomPredictor {
            seed,
            scale: data.scale(),
            user_hashes: data.users().ids().iter().map(|id| fnv1a(id.as_bytes())).collect(),
            item_hashes: data.items().ids().iter().map(|id| fnv1a(id.as_bytes())).collect(),
        }
    }
}

impl Predictor for RandomPredictor {
    fn name(&self) -> String {
        "random".to_owned()
    }

    fn predict(&self, user: UserIdx, item: ItemIdx) -> f64 {
        draw(
            self.scale,
            pair_hash(
                self.seed,
                self.user_hashes[user.index()],
                self.item_hashes[item.index()],
            ),
        )
    }
}
