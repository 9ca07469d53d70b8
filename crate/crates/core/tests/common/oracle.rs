//! Deliberately naive re-implementations used as test oracles. Nothing here
//! calls into the library's model code; matrices are plain nested vectors.

use std::collections::BTreeMap;

use share_core::linalg::Mat;
use share_core::model::{DecoderParams, HgatLayerParams, ModelParams};

pub type Dense = Vec<Vec<f64>>;

pub fn dense(m: &Mat) -> Dense {
    (0..m.rows())
        .map(|r| (0..m.cols()).map(|c| m.get(r, c)).collect())
        .collect()
}

pub fn mv(w: &Dense, v: &[f64]) -> Vec<f64> {
    w.iter()
        .map(|row| {
            let mut s = 0.0;
            for j in 0..row.len() {
                s += row[j] * v[j];
            }
            s
        })
        .collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let mut m = f64::NEG_INFINITY;
    for &s in scores {
        if s > m {
            m = s;
        }
    }
    let exps: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.iter().map(|e| e / z).collect()
}

/// Brute-force hypergraph: distinct item sets of every window of size
/// 2..=W with at least two items, mapped to the smallest window size.
pub fn window_sets(seq: &[usize], max_window: usize) -> BTreeMap<Vec<usize>, usize> {
    let mut out = BTreeMap::new();
    for w in 2..=max_window {
        if seq.len() < w {
            continue;
        }
        for start in 0..=(seq.len() - w) {
            let mut set: Vec<usize> = Vec::new();
            for &item in &seq[start..start + w] {
                if !set.contains(&item) {
                    set.push(item);
                }
            }
            set.sort();
            if set.len() >= 2 {
                out.entry(set).or_insert(w);
            }
        }
    }
    out
}

pub fn unique_in_order(seq: &[usize]) -> Vec<usize> {
    let mut out = Vec::new();
    for &i in seq {
        if !out.contains(&i) {
            out.push(i);
        }
    }
    out
}

pub struct NaiveLayer {
    pub w1: Dense,
    pub w1_hat: Dense,
    pub w2: Dense,
    pub w2_hat: Dense,
    pub w3: Dense,
    pub u: Vec<f64>,
}

impl NaiveLayer {
    pub fn from(p: &HgatLayerParams) -> Self {
        Self {
            w1: dense(&p.w1),
            w1_hat: dense(&p.w1_hat),
            w2: dense(&p.w2),
            w2_hat: dense(&p.w2_hat),
            w3: dense(&p.w3),
            u: p.u.clone(),
        }
    }
}

/// Edge embeddings and per-edge weights; `edges` hold node ordinals.
pub fn naive_edges(l: &NaiveLayer, edges: &[Vec<usize>], nodes: &Dense) -> (Dense, Dense) {
    let d = l.u.len() as f64;
    let mut embs = Vec::new();
    let mut alphas = Vec::new();
    for members in edges {
        let scores: Vec<f64> = members
            .iter()
            .map(|&t| dot(&mv(&l.w1_hat, &nodes[t]), &l.u) / d.sqrt())
            .collect();
        let alpha = softmax(&scores);
        let mut e = vec![0.0; l.u.len()];
        for (k, &t) in members.iter().enumerate() {
            let x = mv(&l.w1, &nodes[t]);
            for i in 0..e.len() {
                e[i] += alpha[k] * x[i];
            }
        }
        embs.push(e);
        alphas.push(alpha);
    }
    (embs, alphas)
}

/// Node update; nodes on no edge keep their input.
pub fn naive_nodes(l: &NaiveLayer, edges: &[Vec<usize>], edge_embs: &Dense, nodes: &Dense) -> (Dense, Dense) {
    let d = l.u.len() as f64;
    let mut out = Vec::new();
    let mut betas = Vec::new();
    for t in 0..nodes.len() {
        let incident: Vec<usize> = (0..edges.len()).filter(|&j| edges[j].contains(&t)).collect();
        if incident.is_empty() {
            out.push(nodes[t].clone());
            betas.push(Vec::new());
            continue;
        }
        let z = mv(&l.w3, &nodes[t]);
        let scores: Vec<f64> = incident
            .iter()
            .map(|&j| dot(&mv(&l.w2_hat, &edge_embs[j]), &z) / d.sqrt())
            .collect();
        let beta = softmax(&scores);
        let mut n = vec![0.0; nodes[t].len()];
        for (k, &j) in incident.iter().enumerate() {
            let c = mv(&l.w2, &edge_embs[j]);
            for i in 0..n.len() {
                n[i] += beta[k] * c[i];
            }
        }
        out.push(n);
        betas.push(beta);
    }
    (out, betas)
}

pub fn naive_session(dec: &DecoderParams, seq: &Dense) -> (Vec<f64>, Vec<f64>) {
    let (wq, wk, wv) = (dense(&dec.w_q), dense(&dec.w_k), dense(&dec.w_v));
    let d = wq.len() as f64;
    let q = mv(&wq, seq.last().unwrap());
    let scores: Vec<f64> = seq.iter().map(|v| dot(&q, &mv(&wk, v)) / d.sqrt()).collect();
    let sigma = softmax(&scores);
    let mut h = vec![0.0; wq.len()];
    for (i, v) in seq.iter().enumerate() {
        let r = mv(&wv, v);
        for k in 0..h.len() {
            h[k] += sigma[i] * r[k];
        }
    }
    (h, sigma)
}

pub fn naive_ce(logits: &[f64], label: usize) -> f64 {
    let p = softmax(logits);
    -p[label].ln()
}

/// Whole-model forward for one prefix: logits over all items.
pub fn naive_logits(params: &ModelParams, prefix: &[usize], max_window: usize) -> Vec<f64> {
    let emb = dense(&params.embeddings);
    let items = unique_in_order(prefix);
    let ordinal = |item: usize| items.iter().position(|&x| x == item).unwrap();
    let edges: Vec<Vec<usize>> = window_sets(prefix, max_window)
        .keys()
        .map(|set| set.iter().map(|&i| ordinal(i)).collect())
        .collect();
    let mut nodes: Dense = items.iter().map(|&i| emb[i].clone()).collect();
    for layer in &params.layers {
        let l = NaiveLayer::from(layer);
        let (e, _) = naive_edges(&l, &edges, &nodes);
        nodes = naive_nodes(&l, &edges, &e, &nodes).0;
    }
    let seq: Dense = prefix.iter().map(|&i| nodes[ordinal(i)].clone()).collect();
    let (h, _) = naive_session(&params.decoder, &seq);
    emb.iter().map(|row| dot(&h, row)).collect()
}
