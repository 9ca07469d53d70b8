use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use share_core::data::SessionSample;
use share_core::eval::{
    evaluate, hit_at_k, mrr_at_k, rank_of_truth, rank_samples, report_from_ranks, RankResult,
};
use share_core::model::{predict_topk, session_logits, ModelConfig, ModelParams};

/// Position of `label` after a full descending sort with index tie-break.
fn sorted_rank(logits: &[f64], label: usize) -> usize {
    let mut order: Vec<usize> = (0..logits.len()).collect();
    order.sort_by(|&a, &b| {
        logits[b]
            .partial_cmp(&logits[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    order.iter().position(|&i| i == label).unwrap() + 1
}

fn logits_strategy(n: usize) -> impl Strategy<Value = Vec<f64>> {
    // a coarse grid so that ties are common
    prop::collection::vec((-20i32..20).prop_map(|v| v as f64 * 0.25), n)
}

fn ranks_strategy() -> impl Strategy<Value = Vec<RankResult>> {
    prop::collection::vec((1usize..60, 1usize..15), 1..100).prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(sample, (rank, prefix_len))| RankResult {
                sample,
                rank,
                prefix_len,
                loss: rank as f64 * 0.5,
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn rank_matches_full_sort(logits in logits_strategy(50), label in 0usize..50) {
        prop_assert_eq!(rank_of_truth(&logits, label), sorted_rank(&logits, label));
    }

    #[test]
    fn report_matches_naive_recount(results in ranks_strategy()) {
        let ks = [1, 5, 10, 20];
        let report = report_from_ranks(&results, &ks).unwrap();
        prop_assert_eq!(report.count, results.len());
        for k in ks {
            let mut hits = 0u64;
            let mut rr = 0.0;
            for r in &results {
                if r.rank <= k {
                    hits += 1;
                    rr += 1.0 / r.rank as f64;
                }
            }
            let m = report.at(k).unwrap();
            prop_assert_eq!(m.hits, hits);
            prop_assert!((m.hit - hits as f64 / results.len() as f64).abs() < 1e-12);
            prop_assert!((m.mrr - rr / results.len() as f64).abs() < 1e-12);
        }
        let bucketed: usize = report.buckets.iter().map(|b| b.count).sum();
        prop_assert_eq!(bucketed, results.len());
    }

    #[test]
    fn mrr_below_hit_and_monotone(results in ranks_strategy()) {
        let ks: Vec<usize> = (1..=40).collect();
        let report = report_from_ranks(&results, &ks).unwrap();
        let mut prev = (0.0, 0.0);
        for k in ks {
            let (h, m) = (report.hit(k).unwrap(), report.mrr(k).unwrap());
            prop_assert!(m <= h + 1e-15 && h <= 1.0);
            prop_assert!(h >= prev.0 && m >= prev.1);
            prev = (h, m);
        }
    }

    #[test]
    fn report_ignores_result_order(results in ranks_strategy(), seed in any::<u64>()) {
        let mut shuffled = results.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, rng.random_range(0..=i));
        }
        let ks = [5, 20];
        prop_assert_eq!(
            report_from_ranks(&results, &ks).unwrap(),
            report_from_ranks(&shuffled, &ks).unwrap()
        );
    }
}

#[test]
fn boundary_ranks() {
    assert_eq!((hit_at_k(20, 20), hit_at_k(21, 20)), (1, 0));
    assert_eq!((mrr_at_k(20, 20), mrr_at_k(21, 20)), (0.05, 0.0));
    assert_eq!(mrr_at_k(4, 20), 0.25);
    let mut logits = vec![0.0; 30];
    for (i, v) in logits.iter_mut().enumerate() {
        *v = -(i as f64);
    }
    assert_eq!(rank_of_truth(&logits, 19), 20);
    assert_eq!(rank_of_truth(&logits, 20), 21);
}

fn small_model() -> ModelParams {
    let cfg = ModelConfig {
        embed_dim: 8,
        num_layers: 2,
        max_window: 3,
        dropout_rate: 0.0,
        ..ModelConfig::default()
    };
    ModelParams::init(&cfg, 40).unwrap()
}

fn random_samples(n: usize, seed: u64) -> Vec<SessionSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let len = rng.random_range(1..=12);
            SessionSample {
                prefix: (0..len).map(|_| rng.random_range(0..40)).collect(),
                label: rng.random_range(0..40),
                end_time: 0,
                session_id: i,
            }
        })
        .collect()
}

#[test]
fn model_ranks_agree_with_topk_position() {
    let params = small_model();
    let samples = random_samples(100, 2);
    let ranks = rank_samples(&params, 3, &samples).unwrap();
    for (s, r) in samples.iter().zip(&ranks) {
        let top = predict_topk(&params, &s.prefix, 3, 40).unwrap();
        let pos = top.iter().position(|&(i, _)| i == s.label).unwrap() + 1;
        assert_eq!(r.rank, pos);
        let logits = session_logits(&params, &s.prefix, 3).unwrap();
        assert_eq!(r.rank, sorted_rank(&logits, s.label));
    }
}

#[test]
fn evaluate_matches_recomputation_and_sample_order() {
    let params = small_model();
    let samples = random_samples(100, 9);
    let report = evaluate(&params, 3, &samples, &[10, 20]).unwrap();
    for k in [10, 20] {
        let mut hit = 0.0;
        let mut mrr = 0.0;
        for s in &samples {
            let r = sorted_rank(&session_logits(&params, &s.prefix, 3).unwrap(), s.label);
            hit += f64::from(hit_at_k(r, k));
            mrr += mrr_at_k(r, k);
        }
        assert_eq!(report.hit(k).unwrap(), hit / 100.0);
        assert!((report.mrr(k).unwrap() - mrr / 100.0).abs() < 1e-12);
    }
    let mut reversed = samples.clone();
    reversed.reverse();
    let back = evaluate(&params, 3, &reversed, &[10, 20]).unwrap();
    for k in [10, 20] {
        assert_eq!(back.hit(k), report.hit(k));
        assert!((back.mrr(k).unwrap() - report.mrr(k).unwrap()).abs() < 1e-12);
    }
}
