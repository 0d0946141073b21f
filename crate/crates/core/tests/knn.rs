use proptest::prelude::*;
use recbench::dataset::{ItemIdx, SegmentModel, UserIdx};
use recbench::fixtures::{synthetic, SyntheticConfig};
use recbench::knn::DEFAULT_GAMMA;
use recbench::{build_similarity_matrix, split, weighted_pearson, KnnModel, Predictor, RatingScale};

/// Two-pass Pearson over common raters, shrunk by min(n, gamma) / gamma.
fn naive_weighted_pearson(a: &[(UserIdx, f64)], b: &[(UserIdx, f64)], gamma: usize) -> f64 {
    let common: Vec<(f64, f64)> = a
        .iter()
        .filter_map(|&(u, x)| b.iter().find(|&&(v, _)| v == u).map(|&(_, y)| (x, y)))
        .collect();
    let n = common.len();
    if n < 2 {
        return 0.0;
    }
    let mx = common.iter().map(|c| c.0).sum::<f64>() / n as f64;
    let my = common.iter().map(|c| c.1).sum::<f64>() / n as f64;
    let cov: f64 = common.iter().map(|c| (c.0 - mx) * (c.1 - my)).sum();
    let vx: f64 = common.iter().map(|c| (c.0 - mx).powi(2)).sum();
    let vy: f64 = common.iter().map(|c| (c.1 - my).powi(2)).sum();
    if vx < 1e-9 || vy < 1e-9 {
        return 0.0;
    }
    cov / (vx * vy).sqrt() * n.min(gamma) as f64 / gamma as f64
}

fn raters() -> impl Strategy<Value = Vec<(UserIdx, f64)>> {
    prop::collection::btree_map(0u32..60, 1u8..=5, 0..50).prop_map(|m| {
        m.into_iter()
            .map(|(u, r)| (UserIdx(u), r as f64))
            .collect()
    })
}

proptest! {
    #[test]
    fn weighted_pearson_matches_two_pass_formula(a in raters(), b in raters(), gamma in 1usize..80) {
        let got = weighted_pearson(&a, &b, gamma);
        let want = naive_weighted_pearson(&a, &b, gamma);
        prop_assert!((got - want).abs() < 1e-9, "{} vs {}", got, want);
    }

    #[test]
    fn weighted_pearson_is_symmetric(a in raters(), b in raters(), gamma in 1usize..80) {
        let ab = weighted_pearson(&a, &b, gamma);
        let ba = weighted_pearson(&b, &a, gamma);
        prop_assert_eq!(ab.to_bits(), ba.to_bits());
        prop_assert!((-1.0..=1.0).contains(&ab));
    }
}

fn small_dataset(seed: u64) -> recbench::SplitDataset {
    let logs = synthetic(&SyntheticConfig {
        mean_ratings_per_user: 25.0,
        ..SyntheticConfig::new(120, 60, seed)
    });
    split(&logs, 0.8, seed, RatingScale::default()).unwrap()
}

#[test]
fn matrix_rows_are_top_k_of_all_pairs() {
    for seed in 0..3 {
        let data = small_dataset(seed);
        let k = 7;
        let matrix = build_similarity_matrix(&data, k, DEFAULT_GAMMA);
        for i in data.all_items() {
            let mut all: Vec<(ItemIdx, f64)> = data
                .all_items()
                .filter(|&j| j != i)
                .map(|j| (j, weighted_pearson(data.train_of_item(i), data.train_of_item(j), DEFAULT_GAMMA)))
                .filter(|&(_, w)| w > 0.0)
                .collect();
            all.sort_by(|x, y| y.1.partial_cmp(&x.1).unwrap().then(x.0.cmp(&y.0)));
            all.truncate(k);
            let got: Vec<(ItemIdx, f64)> = matrix.neighbors(i).iter().map(|n| (n.item, n.weight)).collect();
            assert_eq!(got, all, "item {i:?}");
        }
    }
}

#[test]
fn smaller_neighborhood_is_a_prefix() {
    let data = small_dataset(11);
    let wide = build_similarity_matrix(&data, 50, DEFAULT_GAMMA);
    let narrow = build_similarity_matrix(&data, 5, DEFAULT_GAMMA);
    for i in data.all_items() {
        let w = wide.neighbors(i);
        let n = narrow.neighbors(i);
        assert_eq!(n, &w[..n.len()]);
        assert_eq!(n.len(), w.len().min(5));
    }
    assert_eq!(wide.truncated(5).lists(), narrow.lists());
}

#[test]
fn predictions_follow_the_neighborhood_formula() {
    let data = small_dataset(5);
    let stats = SegmentModel::build(&data).unwrap();
    let model = KnnModel::train(&data, &stats, 10, DEFAULT_GAMMA);
    let scale = data.scale();
    for u in data.all_users() {
        let items: Vec<ItemIdx> = data.all_items().collect();
        let mut batch = Vec::new();
        model.predict_items(u, &items, &mut batch);
        for (&i, &b) in items.iter().zip(&batch) {
            let fallback = match (stats.item_mean(i), stats.user_mean(u)) {
                (Some(a), Some(b)) => (a + b) / 2.0,
                (Some(a), None) => a,
                (None, Some(b)) => b,
                (None, None) => stats.global_mean,
            };
            let mut num = 0.0;
            let mut den = 0.0;
            for n in model.matrix().neighbors(i) {
                if let Some(&(_, r)) = data.train_of_user(u).iter().find(|(j, _)| *j == n.item) {
                    num += n.weight * (r - stats.item_mean(n.item).unwrap());
                    den += n.weight;
                }
            }
            let want = match stats.item_mean(i) {
                Some(m) if den > 0.0 => (m + num / den).clamp(scale.min, scale.max),
                _ => fallback.clamp(scale.min, scale.max),
            };
            assert!((b - want).abs() < 1e-12, "({u:?}, {i:?}): {b} vs {want}");
            assert_eq!(b.to_bits(), model.predict(u, i).to_bits());
        }
    }
}

#[test]
fn similarity_file_round_trips() {
    let data = small_dataset(3);
    let matrix = build_similarity_matrix(&data, 8, DEFAULT_GAMMA);
    let mut buf = Vec::new();
    matrix.write(data.items(), &mut buf).unwrap();
    let back = recbench::SimilarityMatrix::read(data.items(), buf.as_slice()).unwrap();
    assert_eq!(back.k(), matrix.k());
    assert_eq!(back.lists(), matrix.lists());
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("#k=8\n"));
}

#[test]
fn shuffled_matrix_keeps_weights_and_drops_structure() {
    let data = small_dataset(8);
    let matrix = build_similarity_matrix(&data, 10, DEFAULT_GAMMA);
    let shuffled = matrix.shuffled(99);
    assert_eq!(shuffled.lists(), matrix.shuffled(99).lists());
    let mut same = 0usize;
    let mut total = 0usize;
    for i in data.all_items() {
        let a = matrix.neighbors(i);
        let b = shuffled.neighbors(i);
        assert_eq!(a.len(), b.len());
        let mut wa: Vec<u64> = a.iter().map(|n| n.weight.to_bits()).collect();
        let mut wb: Vec<u64> = b.iter().map(|n| n.weight.to_bits()).collect();
        wa.sort_unstable();
        wb.sort_unstable();
        assert_eq!(wa, wb);
        assert!(b.iter().all(|n| n.item != i));
        total += a.len();
        same += b.iter().filter(|n| a.iter().any(|m| m.item == n.item)).count();
    }
    assert!(same * 2 < total, "{same} of {total} neighbors kept");
}
