//! Analytic gradients against central finite differences.

mod common;

use share_core::model::{backward, forward_batch, ModelConfig, ModelParams, Variant};

use common::{fd_gradient_check, random_batch};

fn check(variant: Variant, layers: usize, window: usize, seed: u64) {
    let cfg = ModelConfig {
        embed_dim: 8,
        num_layers: layers,
        max_window: window,
        dropout_rate: 0.0,
        variant,
        rng_seed: seed,
        ..ModelConfig::default()
    };
    let params = ModelParams::init(&cfg, 20).unwrap();
    let (prefixes, labels) = random_batch(seed, 20, 6, 1..=9);
    let report = fd_gradient_check(&params, &prefixes, &labels, window, 1e-4);
    assert!(
        report.max_rel_error <= 1e-4,
        "max relative error {} at {}",
        report.max_rel_error,
        report.worst
    );
    assert_eq!(report.checked, params.num_parameters());
}

#[test]
fn full_model_two_layers() {
    check(Variant::FullShare, 2, 3, 7);
}

#[test]
fn full_model_three_layers_wide_window() {
    check(Variant::FullShare, 3, 5, 8);
}

#[test]
fn no_hypergraph_variant() {
    check(Variant::NoHypergraph, 2, 3, 9);
}

#[test]
fn batch_gradient_ignores_sample_order() {
    let cfg = ModelConfig {
        embed_dim: 8,
        num_layers: 2,
        max_window: 3,
        dropout_rate: 0.0,
        ..ModelConfig::default()
    };
    let params = ModelParams::init(&cfg, 20).unwrap();
    let (prefixes, labels) = random_batch(3, 20, 8, 1..=9);
    let refs: Vec<&[usize]> = prefixes.iter().map(|p| p.as_slice()).collect();
    let g1 = backward(
        &params,
        &forward_batch(&params, &refs, Some(&labels), 3, None).unwrap(),
    )
    .unwrap();
    let mut order: Vec<usize> = (0..refs.len()).collect();
    order.reverse();
    let refs2: Vec<&[usize]> = order.iter().map(|&i| refs[i]).collect();
    let labels2: Vec<usize> = order.iter().map(|&i| labels[i]).collect();
    let g2 = backward(
        &params,
        &forward_batch(&params, &refs2, Some(&labels2), 3, None).unwrap(),
    )
    .unwrap();
    for ((name, _, a), (_, _, b)) in g1.tensors().into_iter().zip(g2.tensors()) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= 1e-12, "{name}: {x} vs {y}");
        }
    }
}
