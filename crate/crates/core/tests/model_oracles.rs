mod common;

use common::oracle::{self, dense, naive_ce, naive_edges, naive_logits, naive_nodes, naive_session, NaiveLayer};
use common::random_batch;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use share_core::hypergraph::{Hyperedge, SessionHypergraph};
use share_core::linalg::Mat;
use share_core::model::*;

fn params(d: usize, layers: usize, n: usize, seed: u64) -> ModelParams {
    let cfg = ModelConfig {
        embed_dim: d,
        num_layers: layers,
        rng_seed: seed,
        ..ModelConfig::default()
    };
    ModelParams::init(&cfg, n).unwrap()
}

fn random_mat(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat {
    Mat::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect())
}

/// Hand-built graph: 4 nodes, edges {0,1}, {1,2,3}, {0,3}.
fn four_node_graph() -> SessionHypergraph {
    let hyperedges = vec![
        Hyperedge { members: vec![0, 1], window_size: 2 },
        Hyperedge { members: vec![1, 2, 3], window_size: 3 },
        Hyperedge { members: vec![0, 3], window_size: 2 },
    ];
    SessionHypergraph {
        nodes: vec![10, 11, 12, 13],
        position_to_node: vec![0, 1, 2, 3],
        node_to_edges: vec![vec![0, 2], vec![0, 1], vec![1], vec![1, 2]],
        hyperedges,
    }
}

fn assert_close(a: &[f64], b: &[f64], tol: f64) {
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        assert!((x - y).abs() <= tol, "{x} vs {y}");
    }
}

#[test]
fn singleton_edge_copies_w1_message() {
    let p = params(4, 1, 3, 1);
    let g = SessionHypergraph {
        nodes: vec![0],
        position_to_node: vec![0],
        hyperedges: vec![Hyperedge { members: vec![0], window_size: 2 }],
        node_to_edges: vec![vec![0]],
    };
    let nodes = Mat::from_vec(1, 4, vec![0.3, -0.2, 0.9, 0.1]);
    let (e, alpha) = edge_aggregate(&p.layers[0], &g, &nodes).unwrap();
    assert_eq!(alpha, vec![vec![1.0]]);
    assert_eq!(e.row(0), p.layers[0].w1.matvec(nodes.row(0)).as_slice());
}

#[test]
fn identical_members_split_evenly() {
    let p = params(4, 1, 3, 2);
    let g = SessionHypergraph::build(&[0, 1], 2).unwrap();
    let nodes = Mat::from_vec(2, 4, vec![0.5, 0.1, -0.4, 0.2, 0.5, 0.1, -0.4, 0.2]);
    let (_, alpha) = edge_aggregate(&p.layers[0], &g, &nodes).unwrap();
    assert_eq!(alpha, vec![vec![0.5, 0.5]]);
}

#[test]
fn edge_aggregate_matches_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let p = params(8, 1, 5, 3);
    let g = four_node_graph();
    let nodes = random_mat(&mut rng, 4, 8);
    let (e, alpha) = edge_aggregate(&p.layers[0], &g, &nodes).unwrap();
    let members: Vec<Vec<usize>> = g.hyperedges.iter().map(|h| h.members.clone()).collect();
    let (oe, oalpha) = naive_edges(&NaiveLayer::from(&p.layers[0]), &members, &dense(&nodes));
    for j in 0..3 {
        assert_close(e.row(j), &oe[j], 1e-10);
        assert_close(&alpha[j], &oalpha[j], 1e-10);
    }
}

#[test]
fn single_edge_node_takes_w2_message() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let p = params(4, 1, 3, 4);
    let g = SessionHypergraph::build(&[0, 1], 2).unwrap();
    let nodes = random_mat(&mut rng, 2, 4);
    let edges = random_mat(&mut rng, 1, 4);
    let (out, beta) = node_update(&p.layers[0], &g, &edges, &nodes).unwrap();
    assert_eq!(beta, vec![vec![1.0], vec![1.0]]);
    let expected = p.layers[0].w2.matvec(edges.row(0));
    assert_eq!(out.row(0), expected.as_slice());
}

#[test]
fn isolated_node_passes_through() {
    let p = params(4, 1, 3, 5);
    let g = SessionHypergraph::build(&[2, 2], 2).unwrap();
    assert_eq!(g.num_edges(), 0);
    let nodes = Mat::from_vec(1, 4, vec![0.1, 0.2, 0.3, 0.4]);
    let (out, beta) = node_update(&p.layers[0], &g, &Mat::zeros(0, 4), &nodes).unwrap();
    assert_eq!(out, nodes);
    assert!(beta[0].is_empty());
}

#[test]
fn node_update_matches_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let p = params(8, 1, 5, 6);
    let g = four_node_graph();
    let nodes = random_mat(&mut rng, 4, 8);
    let edges = random_mat(&mut rng, 3, 8);
    let (out, beta) = node_update(&p.layers[0], &g, &edges, &nodes).unwrap();
    let members: Vec<Vec<usize>> = g.hyperedges.iter().map(|h| h.members.clone()).collect();
    let (oo, obeta) = naive_nodes(&NaiveLayer::from(&p.layers[0]), &members, &dense(&edges), &dense(&nodes));
    for t in 0..4 {
        assert_close(out.row(t), &oo[t], 1e-10);
        assert_close(&beta[t], &obeta[t], 1e-10);
    }
}

#[test]
fn hyperedge_free_graph_is_identity() {
    let p = params(4, 1, 3, 7);
    let g = SessionHypergraph::build(&[1], 3).unwrap();
    let nodes = Mat::from_vec(1, 4, vec![1.0, -1.0, 0.5, 0.25]);
    let traces = hgat_forward(&p.layers, &g, &nodes, None).unwrap();
    assert_eq!(traces.last().unwrap().output, nodes);
}

#[test]
fn two_layers_compose_single_layer_calls() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let p = params(6, 2, 9, 8);
    let g = SessionHypergraph::build(&[0, 1, 2, 1, 3], 3).unwrap();
    let nodes = random_mat(&mut rng, g.num_nodes(), 6);
    let both = hgat_forward(&p.layers, &g, &nodes, None).unwrap();
    let first = hgat_forward(&p.layers[..1], &g, &nodes, None).unwrap();
    let second = hgat_forward(&p.layers[1..], &g, &first[0].output, None).unwrap();
    assert_eq!(both[1].output, second[0].output);
}

#[test]
fn end_to_end_matches_naive_reimplementation() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for case in 0..20 {
        let p = params(8, 2, 15, 100 + case);
        let len = rng.random_range(1..=9);
        let prefix = common::random_sequence(&mut rng, 6, len);
        let label = rng.random_range(0..15);
        let trace = forward_batch(&p, &[&prefix], Some(&[label]), 3, None).unwrap();
        let oracle = naive_logits(&p, &prefix, 3);
        assert_close(&trace.samples[0].logits, &oracle, 1e-9);
        assert!((trace.loss - naive_ce(&oracle, label)).abs() <= 1e-9);
    }
}

#[test]
fn single_position_session() {
    let p = params(4, 1, 3, 10);
    let v = [0.3, 0.1, -0.2, 0.6];
    let (h, sigma) = session_attention(&[&v], &p.decoder).unwrap();
    assert_eq!(sigma, vec![1.0]);
    assert_eq!(h, p.decoder.w_v.matvec(&v));
}

#[test]
fn repeated_embedding_gives_uniform_weights() {
    let p = params(4, 1, 3, 11);
    let v = [0.3, 0.1, -0.2, 0.6];
    let (_, sigma) = session_attention(&[&v, &v, &v, &v], &p.decoder).unwrap();
    for s in sigma {
        assert!((s - 0.25).abs() < 1e-15);
    }
}

#[test]
fn session_attention_matches_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let p = params(8, 1, 3, 12);
    let seq = dense(&random_mat(&mut rng, 5, 8));
    let refs: Vec<&[f64]> = seq.iter().map(|r| r.as_slice()).collect();
    let (h, sigma) = session_attention(&refs, &p.decoder).unwrap();
    let (oh, osigma) = naive_session(&p.decoder, &seq);
    assert_close(&h, &oh, 1e-10);
    assert_close(&sigma, &osigma, 1e-10);
}

#[test]
fn label_aligned_session_vector_wins() {
    // rows orthogonal with equal norm, h equal to the label's row
    let e = Mat::from_vec(3, 3, vec![2.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 2.0]);
    let (logits, _, _) = score_and_loss(e.row(1), &e, 1).unwrap();
    assert!(logits[1] > logits[0] && logits[1] > logits[2]);
}

#[test]
fn uniform_two_item_loss_is_ln2() {
    let e = Mat::zeros(2, 3);
    let (_, probs, loss) = score_and_loss(&[1.0, 2.0, 3.0], &e, 0).unwrap();
    assert_eq!(probs, vec![0.5, 0.5]);
    assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
}

#[test]
fn loss_matches_naive_cross_entropy() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let e = random_mat(&mut rng, 20, 8);
    let h: Vec<f64> = (0..8).map(|_| rng.random_range(-2.0..2.0)).collect();
    for label in 0..20 {
        let (logits, _, loss) = score_and_loss(&h, &e, label).unwrap();
        let naive: Vec<f64> = dense(&e).iter().map(|r| oracle::dot(&h, r)).collect();
        assert_close(&logits, &naive, 1e-12);
        assert!((loss - naive_ce(&naive, label)).abs() <= 1e-10);
    }
}

#[test]
fn one_hot_prediction_has_zero_logit_gradient() {
    assert_eq!(logit_gradient(&[0.0, 1.0, 0.0], 1), vec![0.0, 0.0, 0.0]);
}

/// Only the scoring softmax reaches rows of items outside the batch: their
/// gradient is exactly `Σ_s ŷ_sv h_s / B` with no HGAT or decoder terms.
#[test]
fn absent_item_rows_get_only_scoring_gradient() {
    let p = params(8, 2, 20, 14);
    let prefixes: Vec<Vec<usize>> = vec![vec![0, 1, 2, 1], vec![3, 4], vec![5]];
    let labels = [6, 7, 0];
    let refs: Vec<&[usize]> = prefixes.iter().map(|x| x.as_slice()).collect();
    let trace = forward_batch(&p, &refs, Some(&labels), 3, None).unwrap();
    let grads = backward(&p, &trace).unwrap();
    let b = prefixes.len() as f64;
    for v in 8..20 {
        let mut expected = vec![0.0; 8];
        for s in &trace.samples {
            for k in 0..8 {
                expected[k] += s.probs[v] * s.h[k] / b;
            }
        }
        assert_close(grads.embeddings.row(v), &expected, 1e-15);
    }
}

#[test]
fn topk_full_permutation_and_ties() {
    let p = params(4, 1, 7, 15);
    let all = predict_topk(&p, &[0, 1, 2], 3, 7).unwrap();
    let mut items: Vec<usize> = all.iter().map(|x| x.0).collect();
    items.sort();
    assert_eq!(items, (0..7).collect::<Vec<_>>());
    assert!(all.windows(2).all(|w| w[0].1 >= w[1].1));

    let mut tied = params(4, 1, 4, 16);
    let row: Vec<f64> = tied.embeddings.row(1).to_vec();
    tied.embeddings.row_mut(3).copy_from_slice(&row);
    let top = predict_topk(&tied, &[0], 3, 4).unwrap();
    let pos = |i: usize| top.iter().position(|x| x.0 == i).unwrap();
    assert_eq!(pos(3), pos(1) + 1);
}

#[test]
fn batch_and_single_forward_agree() {
    let p = params(8, 2, 20, 17);
    let (prefixes, labels) = random_batch(18, 20, 6, 1..=9);
    let refs: Vec<&[usize]> = prefixes.iter().map(|x| x.as_slice()).collect();
    let batch = forward_batch(&p, &refs, Some(&labels), 3, None).unwrap();
    for (s, prefix) in prefixes.iter().enumerate() {
        let single = session_logits(&p, prefix, 3).unwrap();
        assert_eq!(batch.samples[s].logits, single);
    }
}
