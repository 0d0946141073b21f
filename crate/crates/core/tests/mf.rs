use std::time::Duration;

use proptest::prelude::*;
use recbench::dataset::{ItemIdx, SegmentModel};
use recbench::fixtures::{planted_rank1, synthetic, SyntheticConfig};
use recbench::mf::{sgd_step, MfTrainer, ITEM_BIAS_SLOT, USER_BIAS_SLOT};
use recbench::{mf_item_similarity, split, train_mf, FactorModel, MfConfig, RatingScale};

fn loss(p: &[f64], q: &[f64], r: f64, reg: f64) -> f64 {
    let dot: f64 = p.iter().zip(q).map(|(a, b)| a * b).sum();
    let norm: f64 = p.iter().chain(q).map(|v| v * v).sum();
    0.5 * (r - dot).powi(2) + 0.5 * reg * norm
}

/// Largest relative deviation between the SGD step direction and the
/// central-difference gradient of the regularized squared loss, over the
/// free coordinates.
pub fn gradient_mismatch(p: &[f64], q: &[f64], r: f64, lr: f64, reg: f64) -> f64 {
    let (mut p1, mut q1) = (p.to_vec(), q.to_vec());
    sgd_step(&mut p1, &mut q1, r, lr, reg);
    let h = 1e-6;
    let mut step = Vec::new();
    let mut fd = Vec::new();
    for f in 0..p.len() {
        if f != USER_BIAS_SLOT {
            let (mut a, mut b) = (p.to_vec(), p.to_vec());
            a[f] += h;
            b[f] -= h;
            fd.push((loss(&a, q, r, reg) - loss(&b, q, r, reg)) / (2.0 * h));
            step.push((p[f] - p1[f]) / lr);
        }
        if f != ITEM_BIAS_SLOT {
            let (mut a, mut b) = (q.to_vec(), q.to_vec());
            a[f] += h;
            b[f] -= h;
            fd.push((loss(p, &a, r, reg) - loss(p, &b, r, reg)) / (2.0 * h));
            step.push((q[f] - q1[f]) / lr);
        }
    }
    let diff: f64 = step.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = fd.iter().map(|v| v * v).sum::<f64>().sqrt();
    diff / norm.max(1e-12)
}

fn pinned_vectors(dim: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (
        prop::collection::vec(-1.5..1.5f64, dim),
        prop::collection::vec(-1.5..1.5f64, dim),
    )
        .prop_map(|(mut p, mut q)| {
            p[USER_BIAS_SLOT] = 1.0;
            q[ITEM_BIAS_SLOT] = 1.0;
            (p, q)
        })
}

proptest! {
    #[test]
    fn sgd_step_follows_the_loss_gradient(
        (p, q) in (3usize..10).prop_flat_map(pinned_vectors),
        r in 1.0..5.0f64,
        reg in 0.0..0.1f64,
    ) {
        prop_assert!(gradient_mismatch(&p, &q, r, 0.01, reg) < 1e-4);
    }

    #[test]
    fn sgd_step_keeps_pins((p, q) in (3usize..10).prop_flat_map(pinned_vectors), r in 1.0..5.0f64) {
        let (mut p, mut q) = (p, q);
        sgd_step(&mut p, &mut q, r, 0.05, 0.01);
        prop_assert_eq!(p[USER_BIAS_SLOT], 1.0);
        prop_assert_eq!(q[ITEM_BIAS_SLOT], 1.0);
    }
}

#[test]
fn small_steps_reduce_the_loss() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let dim = rng.random_range(3..12);
        let mut p: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut q: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        p[USER_BIAS_SLOT] = 1.0;
        q[ITEM_BIAS_SLOT] = 1.0;
        let r = rng.random_range(1..=5) as f64;
        let reg = 0.008;
        let before = loss(&p, &q, r, reg);
        sgd_step(&mut p, &mut q, r, 1e-3, reg);
        assert!(loss(&p, &q, r, reg) < before);
    }
}

fn config(factors: usize, epochs: usize, seed: u64) -> MfConfig {
    MfConfig {
        factors,
        budget: Duration::from_secs(60),
        max_epochs: Some(epochs),
        validation_fraction: 0.05,
        seed,
        ..MfConfig::default()
    }
}

#[test]
fn pins_hold_after_every_epoch() {
    let logs = synthetic(&SyntheticConfig::new(150, 80, 1));
    let data = split(&logs, 0.9, 1, RatingScale::default()).unwrap();
    let mut trainer = MfTrainer::new(&data, &config(6, 10, 1)).unwrap();
    for _ in 0..10 {
        trainer.run_epoch();
        for (_, row) in trainer.users().known_rows() {
            assert_eq!(row[USER_BIAS_SLOT], 1.0);
        }
        for (_, row) in trainer.items().known_rows() {
            assert_eq!(row[ITEM_BIAS_SLOT], 1.0);
        }
        assert!(trainer.train_rmse().is_finite());
    }
}

#[test]
fn training_is_bit_reproducible() {
    let logs = synthetic(&SyntheticConfig::new(200, 100, 4));
    let data = split(&logs, 0.9, 4, RatingScale::default()).unwrap();
    let a = train_mf(&data, &config(8, 15, 9)).unwrap();
    let b = train_mf(&data, &config(8, 15, 9)).unwrap();
    assert!(a.same_parameters(&b));
    let c = train_mf(&data, &config(8, 15, 10)).unwrap();
    assert!(!a.same_parameters(&c));
}

#[test]
fn training_lowers_train_error() {
    let logs = planted_rank1(60, 40, 2);
    let data = split(&logs, 0.7, 2, RatingScale::default()).unwrap();
    let model = train_mf(&data, &config(4, 200, 2)).unwrap();
    let first = model.training_log.first().unwrap().train_rmse;
    let best = model.training_log[model.best_epoch.max(1) - 1].train_rmse;
    assert!(best < first, "{first} -> {best}");
}

#[test]
fn factor_file_round_trips() {
    let logs = synthetic(&SyntheticConfig::new(80, 50, 6));
    let data = split(&logs, 0.9, 6, RatingScale::default()).unwrap();
    let model = train_mf(&data, &config(5, 5, 6)).unwrap();
    let mut buf = Vec::new();
    model.write(&data, &mut buf).unwrap();
    let back = FactorModel::read(&data, buf.as_slice()).unwrap();
    assert!(back.same_parameters(&model));
    assert_eq!(back.training_log, model.training_log);
    assert_eq!(back.stop_reason, model.stop_reason);
    assert!(FactorModel::read(&data, &b"not a model\n"[..]).is_err());
}

fn naive_pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn factor_similarity_matches_pairwise_pearson() {
    let logs = synthetic(&SyntheticConfig::new(100, 40, 7));
    let data = split(&logs, 0.9, 7, RatingScale::default()).unwrap();
    let model = train_mf(&data, &config(6, 8, 7)).unwrap();
    for include_bias in [true, false] {
        let matrix = mf_item_similarity(&model, 5, include_bias);
        for i in data.all_items() {
            let Some(a) = model.items.row(i.index()) else {
                assert!(matrix.neighbors(i).is_empty());
                continue;
            };
            let strip = |v: &[f64]| -> Vec<f64> {
                v.iter()
                    .enumerate()
                    .filter(|&(f, _)| include_bias || f != ITEM_BIAS_SLOT)
                    .map(|(_, &x)| x)
                    .collect()
            };
            let mut all: Vec<(ItemIdx, f64)> = model
                .items
                .known_rows()
                .filter(|&(j, _)| j != i.index())
                .map(|(j, b)| (ItemIdx(j as u32), naive_pearson(&strip(a), &strip(b))))
                .filter(|&(_, w)| w > 0.0)
                .collect();
            all.sort_by(|x, y| y.1.partial_cmp(&x.1).unwrap().then(x.0.cmp(&y.0)));
            all.truncate(5);
            let got: Vec<(ItemIdx, f64)> = matrix.neighbors(i).iter().map(|n| (n.item, n.weight)).collect();
            assert_eq!(got.len(), all.len());
            for (g, w) in got.iter().zip(&all) {
                assert!((g.1 - w.1).abs() < 1e-9, "{g:?} vs {w:?}");
            }
        }
    }
}

#[test]
fn unknown_entities_fall_back_to_the_default_predictor() {
    let logs = synthetic(&SyntheticConfig::new(100, 60, 8));
    let data = split(&logs, 0.9, 8, RatingScale::default()).unwrap();
    let stats = SegmentModel::build(&data).unwrap();
    let model = train_mf(&data, &config(4, 3, 8)).unwrap();
    for u in data.all_users() {
        for i in data.all_items() {
            let v = recbench::mf_predict(&model, &stats, u, i);
            assert!((1.0..=5.0).contains(&v));
            if model.raw_predict(u, i).is_none() {
                assert_eq!(v, recbench::default_predict(&stats, data.scale(), u, i));
            }
        }
    }
}
