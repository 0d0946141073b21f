//! Rating logs, the seeded train/test split and the indexed views every model
//! and metric works on.

pub mod load;
mod segment;

pub use load::{load_dataset, DatasetFormat, LoadedLogs};
pub use segment::{ItemClass, Segment, SegmentModel, UserClass};

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::DatasetError;

/// One `(user, item, rating)` observation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatingLog {
    pub user_id: String,
    pub item_id: String,
    pub rating: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<i64>,
}

impl RatingLog {
    pub fn new(user_id: impl Into<String>, item_id: impl Into<String>, rating: f64) -> Self {
        RatingLog {
            user_id: user_id.into(),
            item_id: item_id.into(),
            rating,
            timestamp: None,
        }
    }
}

/// Closed rating interval. `discrete` scales have integer levels
/// `min, min + 1, ..., max`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatingScale {
    pub min: f64,
    pub max: f64,
    #[serde(default = "default_discrete")]
    pub discrete: bool,
}

fn default_discrete() -> bool {
    true
}

impl Default for RatingScale {
    fn default() -> Self {
        RatingScale {
            min: 1.0,
            max: 5.0,
            discrete: true,
        }
    }
}

impl RatingScale {
    pub fn new(min: f64, max: f64) -> Result<Self, DatasetError> {
        if !(min.is_finite() && max.is_finite() && min < max) {
            return Err(DatasetError::InvalidScale { min, max });
        }
        Ok(RatingScale {
            min,
            max,
            discrete: true,
        })
    }

    pub fn continuous(mut self) -> Self {
        self.discrete = false;
        self
    }

    #[inline]
    pub fn contains(&self, rating: f64) -> bool {
        rating >= self.min && rating <= self.max
    }

    #[inline]
    pub fn clamp(&self, value: f64) -> f64 {
        value.clamp(self.min, self.max)
    }

    /// Number of integer levels on a discrete scale.
    pub fn levels(&self) -> usize {
        (self.max.floor() - self.min.ceil()) as usize + 1
    }
}

/// Dense index of a user inside a [`SplitDataset`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct UserIdx(pub u32);

/// Dense index of an item inside a [`SplitDataset`]. Index order equals the
/// natural order of item identifiers, so ascending index is ascending id.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ItemIdx(pub u32);

impl UserIdx {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl ItemIdx {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Ordering used for opaque identifiers: identifiers that are plain unsigned
/// integers sort numerically and come first, everything else sorts
/// lexicographically.
pub fn natural_id_cmp(a: &str, b: &str) -> Ordering {
    match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y).then_with(|| a.cmp(b)),
        (Ok(_), Err(_)) => Ordering::Less,
        (Err(_), Ok(_)) => Ordering::Greater,
        (Err(_), Err(_)) => a.cmp(b),
    }
}

/// Bidirectional mapping between identifiers and dense indices.
#[derive(Clone, Debug, Default)]
pub struct IdIndex {
    ids: Vec<String>,
    lookup: HashMap<String, u32>,
}

impl IdIndex {
    fn from_ids<'a>(ids: impl IntoIterator<Item = &'a str>) -> Self {
        let mut ids: Vec<String> = ids
            .into_iter()
            .collect::<HashSet<_>>()
            .into_iter()
            .map(str::to_owned)
            .collect();
        ids.sort_by(|a, b| natural_id_cmp(a, b));
        let lookup = ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i as u32))
            .collect();
        IdIndex { ids, lookup }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<u32> {
        self.lookup.get(id).copied()
    }

    pub fn id(&self, index: u32) -> &str {
        &self.ids[index as usize]
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }
}

/// A rating expressed in dataset indices.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IndexedRating {
    pub user: UserIdx,
    pub item: ItemIdx,
    pub rating: f64,
}

/// Train/test partition with the user and item catalogs of `train ∪ test`.
///
/// Both partitions are stored in canonical `(user, item)` order, so every
/// statistic derived from them is independent of the input log order.
#[derive(Clone, Debug)]
pub struct SplitDataset {
    scale: RatingScale,
    users: IdIndex,
    items: IdIndex,
    train: Vec<IndexedRating>,
    test: Vec<IndexedRating>,
    train_by_user: Vec<Vec<(ItemIdx, f64)>>,
    train_by_item: Vec<Vec<(UserIdx, f64)>>,
    test_by_user: Vec<Vec<(ItemIdx, f64)>>,
}

impl SplitDataset {
    /// Index an explicit train/test partition.
    pub fn from_parts(
        train: &[RatingLog],
        test: &[RatingLog],
        scale: RatingScale,
    ) -> Result<Self, DatasetError> {
        for log in train.iter().chain(test) {
            if !scale.contains(log.rating) {
                return Err(DatasetError::RatingOutOfRange {
                    user_id: log.user_id.clone(),
                    item_id: log.item_id.clone(),
                    rating: log.rating,
                    scale,
                });
            }
        }
        let all = || train.iter().chain(test);
        let users = IdIndex::from_ids(all().map(|l| l.user_id.as_str()));
        let items = IdIndex::from_ids(all().map(|l| l.item_id.as_str()));

        let index = |logs: &[RatingLog]| -> Vec<IndexedRating> {
            let mut out: Vec<IndexedRating> = logs
                .iter()
                .map(|l| IndexedRating {
                    user: UserIdx(users.get(&l.user_id).unwrap()),
                    item: ItemIdx(items.get(&l.item_id).unwrap()),
                    rating: l.rating,
                })
                .collect();
            out.sort_by_key(|r| (r.user, r.item));
            out
        };
        let train = index(train);
        let test = index(test);

        check_unique(&train, &users, &items)?;
        check_unique(&test, &users, &items)?;
        let train_pairs: HashSet<(UserIdx, ItemIdx)> =
            train.iter().map(|r| (r.user, r.item)).collect();
        if let Some(r) = test.iter().find(|r| train_pairs.contains(&(r.user, r.item))) {
            return Err(DatasetError::Overlap {
                user_id: users.id(r.user.0).to_owned(),
                item_id: items.id(r.item.0).to_owned(),
            });
        }

        let mut train_by_user = vec![Vec::new(); users.len()];
        let mut train_by_item = vec![Vec::new(); items.len()];
        for r in &train {
            train_by_user[r.user.index()].push((r.item, r.rating));
            train_by_item[r.item.index()].push((r.user, r.rating));
        }
        let mut test_by_user = vec![Vec::new(); users.len()];
        for r in &test {
            test_by_user[r.user.index()].push((r.item, r.rating));
        }

        Ok(SplitDataset {
            scale,
            users,
            items,
            train,
            test,
            train_by_user,
            train_by_item,
            test_by_user,
        })
    }

    pub fn scale(&self) -> RatingScale {
        self.scale
    }

    pub fn users(&self) -> &IdIndex {
        &self.users
    }

    pub fn items(&self) -> &IdIndex {
        &self.items
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    /// `|I|`, the number of distinct items in train and test.
    pub fn catalog_size(&self) -> usize {
        self.items.len()
    }

    pub fn user_idx(&self, id: &str) -> Option<UserIdx> {
        self.users.get(id).map(UserIdx)
    }

    pub fn item_idx(&self, id: &str) -> Option<ItemIdx> {
        self.items.get(id).map(ItemIdx)
    }

    pub fn user_id(&self, user: UserIdx) -> &str {
        self.users.id(user.0)
    }

    pub fn item_id(&self, item: ItemIdx) -> &str {
        self.items.id(item.0)
    }

    pub fn train(&self) -> &[IndexedRating] {
        &self.train
    }

    pub fn test(&self) -> &[IndexedRating] {
        &self.test
    }

    /// Train ratings of `user`, sorted by item.
    pub fn train_of_user(&self, user: UserIdx) -> &[(ItemIdx, f64)] {
        &self.train_by_user[user.index()]
    }

    /// Train ratings of `item`, sorted by user.
    pub fn train_of_item(&self, item: ItemIdx) -> &[(UserIdx, f64)] {
        &self.train_by_item[item.index()]
    }

    /// Test ratings of `user`, sorted by item.
    pub fn test_of_user(&self, user: UserIdx) -> &[(ItemIdx, f64)] {
        &self.test_by_user[user.index()]
    }

    pub fn test_rating(&self, user: UserIdx, item: ItemIdx) -> Option<f64> {
        let row = self.test_of_user(user);
        row.binary_search_by_key(&item, |&(i, _)| i)
            .ok()
            .map(|pos| row[pos].1)
    }

    pub fn all_users(&self) -> impl Iterator<Item = UserIdx> + '_ {
        (0..self.users.len() as u32).map(UserIdx)
    }

    pub fn all_items(&self) -> impl Iterator<Item = ItemIdx> + '_ {
        (0..self.items.len() as u32).map(ItemIdx)
    }

    pub fn train_logs(&self) -> Vec<RatingLog> {
        self.to_logs(&self.train)
    }

    pub fn test_logs(&self) -> Vec<RatingLog> {
        self.to_logs(&self.test)
    }

    fn to_logs(&self, ratings: &[IndexedRating]) -> Vec<RatingLog> {
        ratings
            .iter()
            .map(|r| RatingLog::new(self.user_id(r.user), self.item_id(r.item), r.rating))
            .collect()
    }
}

fn check_unique(
    ratings: &[IndexedRating],
    users: &IdIndex,
    items: &IdIndex,
) -> Result<(), DatasetError> {
    // `ratings` is sorted by (user, item), so duplicates are adjacent.
    match ratings
        .windows(2)
        .find(|w| (w[0].user, w[0].item) == (w[1].user, w[1].item))
    {
        Some(w) => Err(DatasetError::DuplicatePair {
            user_id: users.id(w[0].user.0).to_owned(),
            item_id: items.id(w[0].item.0).to_owned(),
        }),
        None => Ok(()),
    }
}

/// Assign every log to train with probability `ratio`, independently, from a
/// ChaCha8 stream seeded with `seed`. Logs are visited in input order.
pub fn split(
    logs: &[RatingLog],
    ratio: f64,
    seed: u64,
    scale: RatingScale,
) -> Result<SplitDataset, DatasetError> {
    let (train, test) = split_logs(logs, ratio, seed)?;
    SplitDataset::from_parts(&train, &test, scale)
}

/// The raw partition behind [`split`].
pub fn split_logs(
    logs: &[RatingLog],
    ratio: f64,
    seed: u64,
) -> Result<(Vec<RatingLog>, Vec<RatingLog>), DatasetError> {
    if logs.is_empty() {
        return Err(DatasetError::Empty);
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(DatasetError::InvalidRatio(ratio));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::with_capacity((logs.len() as f64 * ratio) as usize + 1);
    let mut test = Vec::with_capacity((logs.len() as f64 * (1.0 - ratio)) as usize + 1);
    for log in logs {
        if rng.random::<f64>() < ratio {
            train.push(log.clone());
        } else {
            test.push(log.clone());
        }
    }
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(n: usize) -> Vec<RatingLog> {
        (0..n)
            .map(|k| RatingLog::new(format!("u{}", k / 50), format!("{}", k % 50), 1.0 + (k % 5) as f64))
            .collect()
    }

    #[test]
    fn split_size_within_three_sigma() {
        // Binomial(10_000, 0.9): sigma = 30, so +-3 sigma is [8910, 9090].
        let logs = synthetic(10_000);
        let (train, test) = split_logs(&logs, 0.9, 42).unwrap();
        assert!((8900..=9100).contains(&train.len()), "train size {}", train.len());
        assert_eq!(train.len() + test.len(), logs.len());
    }

    #[test]
    fn split_is_deterministic() {
        let logs = synthetic(2_000);
        let a = split_logs(&logs, 0.9, 7).unwrap();
        let b = split_logs(&logs, 0.9, 7).unwrap();
        assert_eq!(a, b);
        let c = split_logs(&logs, 0.9, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn split_rejects_bad_input() {
        assert!(matches!(split_logs(&[], 0.9, 1), Err(DatasetError::Empty)));
        let logs = synthetic(10);
        for ratio in [0.0, 1.0, -0.5, 1.5, f64::NAN] {
            assert!(matches!(split_logs(&logs, ratio, 1), Err(DatasetError::InvalidRatio(_))));
        }
    }

    #[test]
    fn split_is_a_partition() {
        let logs = synthetic(3_000);
        let data = split(&logs, 0.8, 3, RatingScale::default()).unwrap();
        assert_eq!(data.train().len() + data.test().len(), logs.len());
        assert_eq!(data.catalog_size(), 50);
        let mut seen: HashSet<(UserIdx, ItemIdx)> = HashSet::new();
        for r in data.train().iter().chain(data.test()) {
            assert!(seen.insert((r.user, r.item)));
        }
    }

    #[test]
    fn overlap_between_parts_is_rejected() {
        let a = vec![RatingLog::new("1", "1", 3.0)];
        let err = SplitDataset::from_parts(&a, &a, RatingScale::default()).unwrap_err();
        assert!(matches!(err, DatasetError::Overlap { .. }));
    }

    #[test]
    fn ids_sort_naturally() {
        let logs = vec![
            RatingLog::new("u", "10", 3.0),
            RatingLog::new("u", "9", 3.0),
            RatingLog::new("u", "abc", 3.0),
            RatingLog::new("u", "100", 3.0),
        ];
        let data = SplitDataset::from_parts(&logs, &[], RatingScale::default()).unwrap();
        assert_eq!(data.items().ids(), &["9", "10", "100", "abc"]);
    }

    #[test]
    fn scale_levels() {
        assert_eq!(RatingScale::default().levels(), 5);
        assert_eq!(RatingScale::new(0.0, 10.0).unwrap().levels(), 11);
        assert!(RatingScale::new(5.0, 1.0).is_err());
    }
}
