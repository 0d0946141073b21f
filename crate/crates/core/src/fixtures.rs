//! Seeded synthetic rating datasets.
//!
//! Every generator is a pure function of its configuration: the same
//! configuration always yields the same logs in the same order.

use rand::seq::index::sample_weighted;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::RatingLog;

fn user_id(u: usize) -> String {
    format!("u{u}")
}

fn item_id(i: usize) -> String {
    format!("{i}")
}

/// Planted low-rank dataset with skewed user activity and item popularity.
///
/// Ratings are `clamp(round(mean + b_u + b_i + p_u · q_i + noise), 1, 5)`.
/// With `clusters > 0`, item vectors are tight perturbations of one of
/// `clusters` centroids (items assigned round-robin), which gives the item
/// space a planted neighborhood structure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub users: usize,
    pub items: usize,
    #[serde(default = "default_rank")]
    pub rank: usize,
    /// Average number of logs per user.
    #[serde(default = "default_mean_ratings")]
    pub mean_ratings_per_user: f64,
    /// Log-normal sigma of per-user activity.
    #[serde(default = "default_activity_spread")]
    pub activity_spread: f64,
    /// Zipf exponent of item popularity (0 = uniform).
    #[serde(default = "default_popularity_skew")]
    pub popularity_skew: f64,
    #[serde(default = "default_noise")]
    pub noise: f64,
    #[serde(default)]
    pub clusters: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_rank() -> usize {
    4
}
fn default_mean_ratings() -> f64 {
    40.0
}
fn default_activity_spread() -> f64 {
    0.8
}
fn default_popularity_skew() -> f64 {
    0.8
}
fn default_noise() -> f64 {
    0.4
}

impl SyntheticConfig {
    pub fn new(users: usize, items: usize, seed: u64) -> Self {
        SyntheticConfig {
            users,
            items,
            rank: default_rank(),
            mean_ratings_per_user: default_mean_ratings(),
            activity_spread: default_activity_spread(),
            popularity_skew: default_popularity_skew(),
            noise: default_noise(),
            clusters: 0,
            seed,
        }
    }
}

const GLOBAL_MEAN: f64 = 3.6;

pub fn synthetic(config: &SyntheticConfig) -> Vec<RatingLog> {
    assert!(config.users > 0 && config.items > 1, "need users and at least two items");
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let std_normal = Normal::new(0.0, 1.0).unwrap();
    let rank = config.rank.max(1);
    let factor_scale = 0.9 / (rank as f64).sqrt();

    let centroids: Vec<Vec<f64>> = (0..config.clusters)
        .map(|_| (0..rank).map(|_| std_normal.sample(&mut rng) * 1.2 / (rank as f64).sqrt()).collect())
        .collect();
    let item_vecs: Vec<Vec<f64>> = (0..config.items)
        .map(|i| {
            (0..rank)
                .map(|f| match centroids.get(i % config.clusters.max(1)) {
                    Some(c) if config.clusters > 0 => c[f] + 0.15 * factor_scale * std_normal.sample(&mut rng),
                    _ => factor_scale * std_normal.sample(&mut rng),
                })
                .collect()
        })
        .collect();
    let user_vecs: Vec<Vec<f64>> = (0..config.users)
        .map(|_| (0..rank).map(|_| std_normal.sample(&mut rng)).collect())
        .collect();
    let user_bias: Vec<f64> = (0..config.users).map(|_| 0.35 * std_normal.sample(&mut rng)).collect();
    let item_bias: Vec<f64> = (0..config.items).map(|_| 0.35 * std_normal.sample(&mut rng)).collect();

    // Popularity follows a Zipf law over a seeded permutation of the items.
    let mut popularity_rank: Vec<usize> = (0..config.items).collect();
    for i in (1..config.items).rev() {
        popularity_rank.swap(i, rng.random_range(0..=i));
    }
    let weights: Vec<f64> = popularity_rank
        .iter()
        .map(|&r| 1.0 / ((r + 1) as f64).powf(config.popularity_skew))
        .collect();

    let sigma = config.activity_spread.max(0.0);
    let activity = LogNormal::new(config.mean_ratings_per_user.max(1.0).ln() - sigma * sigma / 2.0, sigma.max(1e-9)).unwrap();

    let mut logs = Vec::new();
    for u in 0..config.users {
        let n = (activity.sample(&mut rng).round() as usize).clamp(2, config.items);
        let picked = sample_weighted(&mut rng, config.items, |i| weights[i], n).expect("positive weights");
        let mut picked: Vec<usize> = picked.into_iter().collect();
        picked.sort_unstable();
        for i in picked {
            let interaction: f64 = user_vecs[u].iter().zip(&item_vecs[i]).map(|(a, b)| a * b).sum();
            let raw = GLOBAL_MEAN + user_bias[u] + item_bias[i] + interaction + config.noise * std_normal.sample(&mut rng);
            logs.push(RatingLog::new(user_id(u), item_id(i), raw.round().clamp(1.0, 5.0)));
        }
    }
    logs
}

/// Full rank-1 matrix `r = clamp(round(a_u · b_i), 1, 5)` with `a_u`, `b_i`
/// uniform on `[1, √5]`, so the product already lies in `[1, 5]`.
pub fn planted_rank1(users: usize, items: usize, seed: u64) -> Vec<RatingLog> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hi = 5f64.sqrt();
    let a: Vec<f64> = (0..users).map(|_| rng.random_range(1.0..hi)).collect();
    let b: Vec<f64> = (0..items).map(|_| rng.random_range(1.0..hi)).collect();
    let mut logs = Vec::with_capacity(users * items);
    for (u, au) in a.iter().enumerate() {
        for (i, bi) in b.iter().enumerate() {
            logs.push(RatingLog::new(user_id(u), item_id(i), (au * bi).round().clamp(1.0, 5.0)));
        }
    }
    logs
}

/// Two item groups of `group_size` items each; every user gives one rating
/// to all items of group A and another to all items of group B. Users come
/// in blocks of four covering `(low, high) × (low, high)`, which makes the
/// two group ratings exactly uncorrelated over any whole number of blocks.
/// Group A holds items `0..group_size`, group B the rest.
pub fn two_clusters(user_blocks: usize, group_size: usize, seed: u64) -> Vec<RatingLog> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lo_a = rng.random_range(1..=2) as f64;
    let hi_a = rng.random_range(4..=5) as f64;
    let lo_b = rng.random_range(1..=2) as f64;
    let hi_b = rng.random_range(4..=5) as f64;
    let mut logs = Vec::new();
    for block in 0..user_blocks {
        for (k, (ra, rb)) in [(lo_a, lo_b), (lo_a, hi_b), (hi_a, lo_b), (hi_a, hi_b)].into_iter().enumerate() {
            let u = block * 4 + k;
            for i in 0..2 * group_size {
                let r = if i < group_size { ra } else { rb };
                logs.push(RatingLog::new(user_id(u), item_id(i), r));
            }
        }
    }
    logs
}

/// `logs_per_user` distinct items per user with ratings uniform on the
/// integers `1..=5`, independent of everything else.
pub fn uniform_random(users: usize, items: usize, logs_per_user: usize, seed: u64) -> Vec<RatingLog> {
    assert!(logs_per_user <= items);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut logs = Vec::with_capacity(users * logs_per_user);
    for u in 0..users {
        let mut picked = rand::seq::index::sample(&mut rng, items, logs_per_user).into_vec();
        picked.sort_unstable();
        for i in picked {
            logs.push(RatingLog::new(user_id(u), item_id(i), rng.random_range(1..=5) as f64));
        }
    }
    logs
}
