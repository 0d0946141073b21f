//! Shared test helpers: deterministic pseudo-random predictions keyed by ids
//! and a brute-force reimplementation of the core protocol that works on raw
//! identifiers only.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap, HashSet};

use recbench::{ItemIdx, MetricTable, Predictor, RatingLog, SplitDataset, UserIdx};

/// Uniform value in [0, 1) determined by `(seed, a, b)`.
pub fn hash_unit(seed: u64, a: &str, b: &str) -> f64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for byte in a.bytes().chain([0xff]).chain(b.bytes()) {
        h ^= byte as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h ^= h >> 33;
    h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
    h ^= h >> 33;
    h = h.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    h ^= h >> 33;
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Predictions in [1, 5]: integer levels half of the time so that ties are
/// common, continuous values otherwise.
pub fn tie_heavy_prediction(seed: u64, user: &str, item: &str) -> f64 {
    let u = hash_unit(seed, user, item);
    if hash_unit(seed ^ 0x55, user, item) < 0.5 {
        1.0 + (u * 5.0).floor().min(4.0)
    } else {
        1.0 + 4.0 * u
    }
}

/// Predictor backed by a function of raw ids.
pub struct IdPredictor<'a, F: Fn(&str, &str) -> f64 + Sync> {
    pub data: &'a SplitDataset,
    pub f: F,
}

impl<F: Fn(&str, &str) -> f64 + Sync> Predictor for IdPredictor<'_, F> {
    fn name(&self) -> String {
        "by-id".into()
    }
    fn predict(&self, user: UserIdx, item: ItemIdx) -> f64 {
        (self.f)(self.data.user_id(user), self.data.item_id(item))
    }
}

/// Predictor that echoes the true test rating and scores everything else
/// with the scale minimum.
pub struct Echo<'a> {
    pub data: &'a SplitDataset,
}

impl Predictor for Echo<'_> {
    fn name(&self) -> String {
        "echo".into()
    }
    fn predict(&self, user: UserIdx, item: ItemIdx) -> f64 {
        self.data.test_rating(user, item).unwrap_or(self.data.scale().min)
    }
}

pub type Table = BTreeMap<(String, String, String), (Option<f64>, u64)>;

pub fn table_map(table: &MetricTable) -> Table {
    table
        .rows
        .iter()
        .map(|r| {
            (
                (r.function.to_string(), r.metric.to_string(), r.segment.to_string()),
                (r.value, r.support),
            )
        })
        .collect()
}

/// First mismatch between two tables, if any.
pub fn table_diff(got: &Table, want: &Table, tol: f64) -> Option<String> {
    if got.len() != want.len() {
        return Some(format!("row count {} vs {}", got.len(), want.len()));
    }
    for (key, &(wv, ws)) in want {
        let Some(&(gv, gs)) = got.get(key) else {
            return Some(format!("missing row {key:?}"));
        };
        let value_ok = match (gv, wv) {
            (None, None) => true,
            (Some(g), Some(w)) => (g - w).abs() <= tol,
            _ => false,
        };
        if !value_ok || gs != ws {
            return Some(format!("{key:?}: got ({gv:?}, {gs}) want ({wv:?}, {ws})"));
        }
    }
    None
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn sign(x: f64) -> i32 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// Reference Decide, Compare and Discover tables plus the number of
/// outcomes left out of AMI, computed naively from raw logs.
///
/// Item ids must be unsigned integers (ties in top-N lists are broken by
/// ascending numeric id).
pub fn brute_force(
    train: &[RatingLog],
    test: &[RatingLog],
    predict: &dyn Fn(&str, &str) -> f64,
    top_n: usize,
    exclude_seen: bool,
) -> (Table, u64) {
    let mut users: Vec<&str> = train.iter().chain(test).map(|l| l.user_id.as_str()).collect();
    users.sort();
    users.dedup();
    let mut catalog: Vec<&str> = train.iter().chain(test).map(|l| l.item_id.as_str()).collect();
    catalog.sort();
    catalog.dedup();

    let mut user_count: HashMap<&str, usize> = HashMap::new();
    let mut user_sum: HashMap<&str, f64> = HashMap::new();
    let mut item_count: HashMap<&str, usize> = HashMap::new();
    let mut seen: HashSet<(&str, &str)> = HashSet::new();
    for l in train {
        *user_count.entry(&l.user_id).or_default() += 1;
        *user_sum.entry(&l.user_id).or_default() += l.rating;
        *item_count.entry(&l.item_id).or_default() += 1;
        seen.insert((&l.user_id, &l.item_id));
    }
    let global_mean = train.iter().map(|l| l.rating).sum::<f64>() / train.len() as f64;
    let user_thr = train.len() as f64 / user_count.len() as f64;
    let item_thr = train.len() as f64 / item_count.len() as f64;
    let heavy = |u: &str| (*user_count.get(u).unwrap_or(&0) as f64) > user_thr;
    let popular = |i: &str| (*item_count.get(i).unwrap_or(&0) as f64) > item_thr;
    let cell = |u: &str, i: &str| {
        format!(
            "{}{}",
            if heavy(u) { "Huser" } else { "Luser" },
            if popular(i) { "Pitem" } else { "Uitem" }
        )
    };
    let user_mean = |u: &str| match user_count.get(u) {
        Some(&n) => user_sum[u] / n as f64,
        None => global_mean,
    };
    let test_rating: HashMap<(&str, &str), f64> = test
        .iter()
        .map(|l| ((l.user_id.as_str(), l.item_id.as_str()), l.rating))
        .collect();

    let cells = ["HuserPitem", "LuserPitem", "HuserUitem", "LuserUitem"];
    let mut out = Table::new();
    let mut put = |f: &str, m: &str, s: &str, v: Option<f64>, n: u64| {
        out.insert((f.to_owned(), m.to_owned(), s.to_owned()), (v, n));
    };

    // Decide
    for target in cells.iter().copied().chain(["Global"]) {
        let sq: Vec<f64> = test
            .iter()
            .filter(|l| target == "Global" || cell(&l.user_id, &l.item_id) == target)
            .map(|l| (predict(&l.user_id, &l.item_id) - l.rating).powi(2))
            .collect();
        put("Decide", "RMSE", target, mean(&sq).map(f64::sqrt), sq.len() as u64);
    }

    // Compare
    let mut per_user: Vec<(bool, u64, u64)> = Vec::new();
    for &u in &users {
        let logs: Vec<&RatingLog> = test.iter().filter(|l| l.user_id == u).collect();
        let (mut ok, mut all) = (0u64, 0u64);
        for a in 0..logs.len() {
            for b in a + 1..logs.len() {
                let (x, y) = (logs[a], logs[b]);
                if x.rating == y.rating {
                    continue;
                }
                all += 1;
                let pt = predict(&x.user_id, &x.item_id) - predict(&y.user_id, &y.item_id);
                if sign(x.rating - y.rating) == sign(pt) {
                    ok += 1;
                }
            }
        }
        per_user.push((heavy(u), ok, all));
    }
    for (label, keep) in [("Huser", Some(true)), ("Luser", Some(false)), ("Global", None)] {
        let members: Vec<&(bool, u64, u64)> = per_user
            .iter()
            .filter(|(h, _, all)| *all > 0 && keep.is_none_or(|k| k == *h))
            .collect();
        let ratios: Vec<f64> = members.iter().map(|(_, ok, all)| *ok as f64 / *all as f64).collect();
        let ok: u64 = members.iter().map(|m| m.1).sum();
        let all: u64 = members.iter().map(|m| m.2).sum();
        put("Compare", "COMP", label, mean(&ratios), ratios.len() as u64);
        put("Compare", "COMP_micro", label, (all > 0).then(|| ok as f64 / all as f64), all);
    }

    // Discover
    struct Rec {
        cell: String,
        rating: Option<f64>,
        mean: f64,
        count: usize,
    }
    let mut lists: Vec<Vec<Rec>> = Vec::new();
    for &u in &users {
        let mut cands: Vec<(&str, f64)> = catalog
            .iter()
            .copied()
            .filter(|&i| !exclude_seen || !seen.contains(&(u, i)))
            .map(|i| (i, predict(u, i)))
            .collect();
        cands.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap()
                .then(a.0.parse::<u64>().unwrap().cmp(&b.0.parse::<u64>().unwrap()))
        });
        lists.push(
            cands
                .iter()
                .take(top_n)
                .map(|&(i, _)| Rec {
                    cell: cell(u, i),
                    rating: test_rating.get(&(u, i)).copied(),
                    mean: user_mean(u),
                    count: *item_count.get(i).unwrap_or(&0),
                })
                .collect(),
        );
    }
    let mut excluded = 0u64;
    for list in &lists {
        excluded += list.iter().filter(|r| r.rating.is_some() && r.count == 0).count() as u64;
    }
    for target in cells.iter().copied().chain(["Global"]) {
        let (mut precisions, mut amis) = (Vec::new(), Vec::new());
        let (mut p_support, mut a_support) = (0u64, 0u64);
        for list in &lists {
            let (mut relevant, mut evaluable) = (0usize, 0usize);
            let mut impact = Vec::new();
            for r in list.iter().filter(|r| target == "Global" || r.cell == target) {
                let Some(rating) = r.rating else { continue };
                evaluable += 1;
                if rating >= r.mean {
                    relevant += 1;
                }
                if r.count > 0 {
                    impact.push(sign(rating - r.mean) as f64 * catalog.len() as f64 / r.count as f64);
                }
            }
            p_support += evaluable as u64;
            a_support += impact.len() as u64;
            if evaluable > 0 {
                precisions.push(relevant as f64 / evaluable as f64);
            }
            if let Some(m) = mean(&impact) {
                amis.push(m);
            }
        }
        put("Discover", "Precision", target, mean(&precisions), p_support);
        put("Discover", "AMI", target, mean(&amis), a_support);
    }
    (out, excluded)
}

/// One random fixture of at most 30 users and 20 items, with integer or
/// half-integer ratings, items that occur only in test, users without
/// train logs and a random top-N setting.
pub struct OracleFixture {
    pub train: Vec<RatingLog>,
    pub test: Vec<RatingLog>,
    pub top_n: usize,
    pub exclude_seen: bool,
    pub prediction_seed: u64,
}

pub fn oracle_fixture(seed: u64) -> OracleFixture {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let users = rng.random_range(1..=30);
    let items = rng.random_range(1..=20);
    let density = rng.random_range(0.1..0.9);
    let train_share = rng.random_range(0.3..0.95);
    let half_steps = rng.random_bool(0.3);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for u in 0..users {
        for i in 0..items {
            if !rng.random_bool(density) {
                continue;
            }
            let rating = if half_steps {
                1.0 + rng.random_range(0..9) as f64 * 0.5
            } else {
                rng.random_range(1..=5) as f64
            };
            let log = RatingLog::new(format!("u{u}"), format!("{i}"), rating);
            if rng.random_bool(train_share) {
                train.push(log);
            } else {
                test.push(log);
            }
        }
    }
    if train.is_empty() {
        train.push(RatingLog::new("u0", "0", 3.0));
        test.retain(|l| !(l.user_id == "u0" && l.item_id == "0"));
    }
    OracleFixture {
        train,
        test,
        top_n: rng.random_range(1..=12),
        exclude_seen: rng.random_bool(0.8),
        prediction_seed: rng.random(),
    }
}

/// Run the library protocol and the brute-force reference on one fixture;
/// `Err` describes the first disagreement.
pub fn check_oracle_fixture(seed: u64, tol: f64) -> Result<(), String> {
    use recbench::dataset::SegmentModel;
    let fx = oracle_fixture(seed);
    let data = SplitDataset::from_parts(&fx.train, &fx.test, recbench::RatingScale::default())
        .map_err(|e| e.to_string())?;
    let segments = SegmentModel::build(&data).map_err(|e| e.to_string())?;
    let ps = fx.prediction_seed;
    let model = IdPredictor {
        data: &data,
        f: move |u: &str, i: &str| tie_heavy_prediction(ps, u, i),
    };
    let config = recbench::ProtocolConfig {
        top_n: fx.top_n,
        explore_k: 10,
        exclude_seen: fx.exclude_seen,
    };
    let core = recbench::run_core(&model, &data, &segments, &config).map_err(|e| e.to_string())?;
    let mut got = table_map(&core.decide);
    got.extend(table_map(&core.compare));
    got.extend(table_map(&core.discover));
    let (want, excluded) = brute_force(
        &fx.train,
        &fx.test,
        &|u, i| tie_heavy_prediction(ps, u, i),
        fx.top_n,
        fx.exclude_seen,
    );
    if let Some(diff) = table_diff(&got, &want, tol) {
        return Err(format!("fixture {seed}: {diff}"));
    }
    if core.ami_excluded != excluded {
        return Err(format!("fixture {seed}: ami_excluded {} vs {excluded}", core.ami_excluded));
    }
    Ok(())
}
