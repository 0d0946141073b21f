use std::fmt;

use serde::{Deserialize, Serialize};

use super::{ItemIdx, SplitDataset, UserIdx};
use crate::error::DatasetError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum UserClass {
    Heavy,
    Light,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ItemClass {
    Popular,
    Unpopular,
}

/// One of the four user x item cells.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Segment {
    HuserPitem,
    LuserPitem,
    HuserUitem,
    LuserUitem,
}

impl Segment {
    /// Column order of the summary tables.
    pub const ALL: [Segment; 4] = [
        Segment::HuserPitem,
        Segment::LuserPitem,
        Segment::HuserUitem,
        Segment::LuserUitem,
    ];

    pub fn new(user: UserClass, item: ItemClass) -> Self {
        match (user, item) {
            (UserClass::Heavy, ItemClass::Popular) => Segment::HuserPitem,
            (UserClass::Light, ItemClass::Popular) => Segment::LuserPitem,
            (UserClass::Heavy, ItemClass::Unpopular) => Segment::HuserUitem,
            (UserClass::Light, ItemClass::Unpopular) => Segment::LuserUitem,
        }
    }

    pub fn user_class(self) -> UserClass {
        match self {
            Segment::HuserPitem | Segment::HuserUitem => UserClass::Heavy,
            Segment::LuserPitem | Segment::LuserUitem => UserClass::Light,
        }
    }

    pub fn item_class(self) -> ItemClass {
        match self {
            Segment::HuserPitem | Segment::LuserPitem => ItemClass::Popular,
            Segment::HuserUitem | Segment::LuserUitem => ItemClass::Unpopular,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Segment::HuserPitem => "HuserPitem",
            Segment::LuserPitem => "LuserPitem",
            Segment::HuserUitem => "HuserUitem",
            Segment::LuserUitem => "LuserUitem",
        }
    }
}

impl fmt::Display for Segment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl UserClass {
    pub fn name(self) -> &'static str {
        match self {
            UserClass::Heavy => "Huser",
            UserClass::Light => "Luser",
        }
    }
}

/// Train-set statistics: activity thresholds, per-user and per-item counts
/// and means.
///
/// All vectors are indexed by the dataset's user/item indices; entities that
/// appear only in test have count 0 and no mean.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentModel {
    pub user_threshold: f64,
    pub item_threshold: f64,
    pub user_counts: Vec<usize>,
    /// `count(i)`: number of train logs referencing item `i`.
    pub item_counts: Vec<usize>,
    pub user_means: Vec<Option<f64>>,
    pub item_means: Vec<Option<f64>>,
    pub global_mean: f64,
}

impl SegmentModel {
    pub fn build(data: &SplitDataset) -> Result<Self, DatasetError> {
        if data.train().is_empty() {
            return Err(DatasetError::EmptyTrain);
        }
        let (user_counts, user_means, user_sums): (Vec<usize>, Vec<Option<f64>>, Vec<f64>) = {
            let mut counts = Vec::with_capacity(data.num_users());
            let mut means = Vec::with_capacity(data.num_users());
            let mut sums = Vec::with_capacity(data.num_users());
            for user in data.all_users() {
                let row = data.train_of_user(user);
                let sum: f64 = row.iter().map(|&(_, r)| r).sum();
                counts.push(row.len());
                means.push((!row.is_empty()).then(|| sum / row.len() as f64));
                sums.push(sum);
            }
            (counts, means, sums)
        };
        let mut item_counts = Vec::with_capacity(data.catalog_size());
        let mut item_means = Vec::with_capacity(data.catalog_size());
        for item in data.all_items() {
            let col = data.train_of_item(item);
            let sum: f64 = col.iter().map(|&(_, r)| r).sum();
            item_counts.push(col.len());
            item_means.push((!col.is_empty()).then(|| sum / col.len() as f64));
        }

        let total = data.train().len();
        let active_users = user_counts.iter().filter(|&&c| c > 0).count();
        let active_items = item_counts.iter().filter(|&&c| c > 0).count();
        let global_mean = user_sums.iter().sum::<f64>() / total as f64;

        Ok(SegmentModel {
            user_threshold: total as f64 / active_users as f64,
            item_threshold: total as f64 / active_items as f64,
            user_counts,
            item_counts,
            user_means,
            item_means,
            global_mean,
        })
    }

    pub fn user_count(&self, user: UserIdx) -> usize {
        self.user_counts.get(user.index()).copied().unwrap_or(0)
    }

    pub fn item_count(&self, item: ItemIdx) -> usize {
        self.item_counts.get(item.index()).copied().unwrap_or(0)
    }

    pub fn user_mean(&self, user: UserIdx) -> Option<f64> {
        self.user_means.get(user.index()).copied().flatten()
    }

    pub fn item_mean(&self, item: ItemIdx) -> Option<f64> {
        self.item_means.get(item.index()).copied().flatten()
    }

    /// `r̄_u` used to judge relevance: the train mean of the user, or the
    /// global train mean for users without train logs.
    pub fn relevance_mean(&self, user: UserIdx) -> f64 {
        self.user_mean(user).unwrap_or(self.global_mean)
    }

    pub fn classify_user_count(&self, count: usize) -> UserClass {
        if count as f64 > self.user_threshold {
            UserClass::Heavy
        } else {
            UserClass::Light
        }
    }

    pub fn classify_item_count(&self, count: usize) -> ItemClass {
        if count as f64 > self.item_threshold {
            ItemClass::Popular
        } else {
            ItemClass::Unpopular
        }
    }

    pub fn user_class(&self, user: UserIdx) -> UserClass {
        self.classify_user_count(self.user_count(user))
    }

    pub fn item_class(&self, item: ItemIdx) -> ItemClass {
        self.classify_item_count(self.item_count(item))
    }

    pub fn segment_of(&self, user: UserIdx, item: ItemIdx) -> Segment {
        Segment::new(self.user_class(user), self.item_class(item))
    }

    /// Segment for raw identifiers; ids unknown to `data` count as 0.
    pub fn segment_of_ids(&self, data: &SplitDataset, user_id: &str, item_id: &str) -> Segment {
        let users = data.user_idx(user_id).map_or(0, |u| self.user_count(u));
        let items = data.item_idx(item_id).map_or(0, |i| self.item_count(i));
        Segment::new(self.classify_user_count(users), self.classify_item_count(items))
    }
}
