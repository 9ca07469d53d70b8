use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::attention::{scaled_dot_unchecked, softmax};
use super::{DecoderParams, HgatLayerParams, ModelParams};
use crate::error::ModelError;
use crate::hypergraph::SessionHypergraph;
use crate::linalg::{axpy, dot, Mat};

/// Inverted dropout masks drawn from a seeded stream.
#[derive(Debug, Clone)]
pub struct DropoutSource {
    rate: f64,
    rng: ChaCha8Rng,
}

impl DropoutSource {
    pub fn new(rate: f64, seed: u64) -> Self {
        Self {
            rate,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn mask(&mut self, len: usize) -> Option<Vec<f64>> {
        if self.rate <= 0.0 {
            return None;
        }
        let keep = 1.0 - self.rate;
        let scale = 1.0 / keep;
        Some(
            (0..len)
                .map(|_| {
                    if self.rng.random::<f64>() < keep {
                        scale
                    } else {
                        0.0
                    }
                })
                .collect(),
        )
    }
}

/// Activations of one hypergraph attention layer over a (possibly batched) graph.
#[derive(Debug, Clone)]
pub struct LayerTrace {
    /// Node inputs `n^(l-1)`.
    pub input: Mat,
    /// `W1 n_t`, the messages sent to hyperedges.
    pub x: Mat,
    /// `Ŵ1 n_t`, scored against the context vector.
    pub a: Mat,
    /// Per hyperedge, weights over its members (same order as `members`).
    pub alpha: Vec<Vec<f64>>,
    /// Hyperedge embeddings `e_j`.
    pub edges: Mat,
    /// `W2 e_j`, the messages sent back to nodes.
    pub c: Mat,
    /// `Ŵ2 e_j`
    pub y: Mat,
    /// `W3 n_t`
    pub z: Mat,
    /// Per node, weights over incident hyperedges; empty for isolated nodes.
    pub beta: Vec<Vec<f64>>,
    pub pre_dropout: Mat,
    pub mask: Option<Mat>,
    /// Node outputs `n^(l)`.
    pub output: Mat,
}

/// Session encoder and scoring activations for one sample.
#[derive(Debug, Clone)]
pub struct DecoderTrace {
    /// Node ordinal (in the batch graph) of each sequence position.
    pub positions: Vec<usize>,
    pub query: Vec<f64>,
    pub keys: Mat,
    pub values: Mat,
    pub sigma: Vec<f64>,
    pub h_pre: Vec<f64>,
    pub h_mask: Option<Vec<f64>>,
    pub h: Vec<f64>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
    pub label: Option<usize>,
    pub loss: f64,
}

/// Everything retained from a forward pass over a batch, for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// Disjoint union of the per-sample hypergraphs.
    pub graph: SessionHypergraph,
    pub node_offsets: Vec<usize>,
    /// Initial node embeddings (embedding rows of the graph's nodes).
    pub node_input: Mat,
    pub layers: Vec<LayerTrace>,
    pub samples: Vec<DecoderTrace>,
    /// Mean cross-entropy over labelled samples (0 when unlabelled).
    pub loss: f64,
}

impl ForwardTrace {
    pub fn final_nodes(&self) -> &Mat {
        self.layers
            .last()
            .map(|l| &l.output)
            .unwrap_or(&self.node_input)
    }
}

struct EdgeStep {
    x: Mat,
    a: Mat,
    alpha: Vec<Vec<f64>>,
    edges: Mat,
}

fn edge_step(layer: &HgatLayerParams, graph: &SessionHypergraph, input: &Mat) -> EdgeStep {
    let d = input.cols();
    let n = graph.num_nodes();
    let mut x = Mat::zeros(n, d);
    let mut a = Mat::zeros(n, d);
    let mut node_scores = Vec::with_capacity(n);
    for t in 0..n {
        x.row_mut(t).copy_from_slice(&layer.w1.matvec(input.row(t)));
        a.row_mut(t).copy_from_slice(&layer.w1_hat.matvec(input.row(t)));
        node_scores.push(scaled_dot_unchecked(a.row(t), &layer.u, d));
    }
    let mut edges = Mat::zeros(graph.num_edges(), d);
    let mut alpha = Vec::with_capacity(graph.num_edges());
    for (j, edge) in graph.hyperedges.iter().enumerate() {
        let scores: Vec<f64> = edge.members.iter().map(|&t| node_scores[t]).collect();
        let weights = softmax(&scores);
        let row = edges.row_mut(j);
        for (&t, &w) in edge.members.iter().zip(&weights) {
            axpy(w, x.row(t), row);
        }
        alpha.push(weights);
    }
    EdgeStep { x, a, alpha, edges }
}

struct NodeStep {
    c: Mat,
    y: Mat,
    z: Mat,
    beta: Vec<Vec<f64>>,
    output: Mat,
}

fn node_step(
    layer: &HgatLayerParams,
    graph: &SessionHypergraph,
    edges: &Mat,
    input: &Mat,
) -> NodeStep {
    let d = input.cols();
    let m = graph.num_edges();
    let n = graph.num_nodes();
    let mut c = Mat::zeros(m, d);
    let mut y = Mat::zeros(m, d);
    for j in 0..m {
        c.row_mut(j).copy_from_slice(&layer.w2.matvec(edges.row(j)));
        y.row_mut(j).copy_from_slice(&layer.w2_hat.matvec(edges.row(j)));
    }
    let mut z = Mat::zeros(n, d);
    let mut beta = Vec::with_capacity(n);
    let mut output = Mat::zeros(n, d);
    for t in 0..n {
        let incident = &graph.node_to_edges[t];
        if incident.is_empty() {
            output.row_mut(t).copy_from_slice(input.row(t));
            beta.push(Vec::new());
            continue;
        }
        z.row_mut(t).copy_from_slice(&layer.w3.matvec(input.row(t)));
        let scores: Vec<f64> = incident
            .iter()
            .map(|&j| scaled_dot_unchecked(y.row(j), z.row(t), d))
            .collect();
        let weights = softmax(&scores);
        let row = output.row_mut(t);
        for (&j, &w) in incident.iter().zip(&weights) {
            axpy(w, c.row(j), row);
        }
        beta.push(weights);
    }
    NodeStep {
        c,
        y,
        z,
        beta,
        output,
    }
}

fn check_node_input(graph: &SessionHypergraph, input: &Mat, d: usize) -> Result<(), ModelError> {
    if input.rows() != graph.num_nodes() {
        return Err(ModelError::DimensionMismatch {
            expected: graph.num_nodes(),
            got: input.rows(),
        });
    }
    if input.cols() != d {
        return Err(ModelError::DimensionMismatch {
            expected: d,
            got: input.cols(),
        });
    }
    Ok(())
}

/// Node-to-hyperedge attention: returns hyperedge embeddings and the
/// per-hyperedge weights over member nodes.
pub fn edge_aggregate(
    layer: &HgatLayerParams,
    graph: &SessionHypergraph,
    node_embs: &Mat,
) -> Result<(Mat, Vec<Vec<f64>>), ModelError> {
    check_node_input(graph, node_embs, layer.u.len())?;
    let step = edge_step(layer, graph, node_embs);
    Ok((step.edges, step.alpha))
}

/// Hyperedge-to-node attention: returns updated node embeddings and the
/// per-node weights over incident hyperedges. Isolated nodes pass through.
pub fn node_update(
    layer: &HgatLayerParams,
    graph: &SessionHypergraph,
    edge_embs: &Mat,
    node_embs: &Mat,
) -> Result<(Mat, Vec<Vec<f64>>), ModelError> {
    check_node_input(graph, node_embs, layer.u.len())?;
    if edge_embs.rows() != graph.num_edges() {
        return Err(ModelError::DimensionMismatch {
            expected: graph.num_edges(),
            got: edge_embs.rows(),
        });
    }
    let step = node_step(layer, graph, edge_embs, node_embs);
    Ok((step.output, step.beta))
}

fn layer_forward(
    layer: &HgatLayerParams,
    graph: &SessionHypergraph,
    input: Mat,
    dropout: Option<&mut DropoutSource>,
) -> LayerTrace {
    let EdgeStep { x, a, alpha, edges } = edge_step(layer, graph, &input);
    let NodeStep {
        c,
        y,
        z,
        beta,
        output: pre_dropout,
    } = node_step(layer, graph, &edges, &input);
    let mask = dropout
        .and_then(|d| d.mask(pre_dropout.as_slice().len()))
        .map(|m| Mat::from_vec(pre_dropout.rows(), pre_dropout.cols(), m));
    let output = match &mask {
        Some(m) => {
            let data = pre_dropout
                .as_slice()
                .iter()
                .zip(m.as_slice())
                .map(|(v, k)| v * k)
                .collect();
            Mat::from_vec(pre_dropout.rows(), pre_dropout.cols(), data)
        }
        None => pre_dropout.clone(),
    };
    LayerTrace {
        input,
        x,
        a,
        alpha,
        edges,
        c,
        y,
        z,
        beta,
        pre_dropout,
        mask,
        output,
    }
}

/// Runs the stacked attention layers; one trace per layer, the last holding
/// the session-wise item embeddings.
pub fn hgat_forward(
    layers: &[HgatLayerParams],
    graph: &SessionHypergraph,
    initial: &Mat,
    mut dropout: Option<&mut DropoutSource>,
) -> Result<Vec<LayerTrace>, ModelError> {
    if let Some(first) = layers.first() {
        check_node_input(graph, initial, first.u.len())?;
    }
    let mut traces: Vec<LayerTrace> = Vec::with_capacity(layers.len());
    for layer in layers {
        let input = traces
            .last()
            .map(|t| t.output.clone())
            .unwrap_or_else(|| initial.clone());
        traces.push(layer_forward(layer, graph, input, dropout.as_deref_mut()));
    }
    Ok(traces)
}

struct SessionStep {
    query: Vec<f64>,
    keys: Mat,
    values: Mat,
    sigma: Vec<f64>,
    h: Vec<f64>,
}

fn session_step(decoder: &DecoderParams, seq: &[&[f64]]) -> SessionStep {
    let d = decoder.w_q.rows();
    let t = seq.len();
    let query = decoder.w_q.matvec(seq[t - 1]);
    let mut keys = Mat::zeros(t, d);
    let mut values = Mat::zeros(t, d);
    for (i, v) in seq.iter().enumerate() {
        keys.row_mut(i).copy_from_slice(&decoder.w_k.matvec(v));
        values.row_mut(i).copy_from_slice(&decoder.w_v.matvec(v));
    }
    let scores: Vec<f64> = (0..t)
        .map(|i| scaled_dot_unchecked(&query, keys.row(i), d))
        .collect();
    let sigma = softmax(&scores);
    let mut h = vec![0.0; d];
    for (i, &w) in sigma.iter().enumerate() {
        axpy(w, values.row(i), &mut h);
    }
    SessionStep {
        query,
        keys,
        values,
        sigma,
        h,
    }
}

/// Last-item-query self-attention over the session's item embeddings.
/// Returns the session embedding and the weights over positions.
pub fn session_attention(
    seq: &[&[f64]],
    decoder: &DecoderParams,
) -> Result<(Vec<f64>, Vec<f64>), ModelError> {
    if seq.is_empty() {
        return Err(ModelError::EmptySequence);
    }
    let d = decoder.w_q.rows();
    if let Some(bad) = seq.iter().find(|v| v.len() != d) {
        return Err(ModelError::DimensionMismatch {
            expected: d,
            got: bad.len(),
        });
    }
    let step = session_step(decoder, seq);
    Ok((step.h, step.sigma))
}

fn logits_for(h: &[f64], embeddings: &Mat) -> Vec<f64> {
    (0..embeddings.rows())
        .map(|v| dot(h, embeddings.row(v)))
        .collect()
}

fn probs_and_loss(logits: &[f64], label: Option<usize>) -> (Vec<f64>, f64) {
    let probs = softmax(logits);
    let loss = match label {
        Some(l) => {
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + logits.iter().map(|p| (p - max).exp()).sum::<f64>().ln();
            lse - logits[l]
        }
        None => 0.0,
    };
    (probs, loss)
}

/// Scores every item against the session embedding; returns logits,
/// softmax probabilities, and the cross-entropy of `label`.
pub fn score_and_loss(
    h: &[f64],
    embeddings: &Mat,
    label: usize,
) -> Result<(Vec<f64>, Vec<f64>, f64), ModelError> {
    if h.len() != embeddings.cols() {
        return Err(ModelError::DimensionMismatch {
            expected: embeddings.cols(),
            got: h.len(),
        });
    }
    if label >= embeddings.rows() {
        return Err(ModelError::ItemOutOfRange {
            index: label,
            num_items: embeddings.rows(),
        });
    }
    let logits = logits_for(h, embeddings);
    let (probs, loss) = probs_and_loss(&logits, Some(label));
    Ok((logits, probs, loss))
}

/// Full forward pass over a batch of prefixes, processed as one disjoint-union
/// hypergraph. Labels, when given, produce per-sample and mean losses.
pub fn forward_batch(
    params: &ModelParams,
    prefixes: &[&[usize]],
    labels: Option<&[usize]>,
    max_window: usize,
    mut dropout: Option<&mut DropoutSource>,
) -> Result<ForwardTrace, ModelError> {
    if let Some(labels) = labels {
        if labels.len() != prefixes.len() {
            return Err(ModelError::DimensionMismatch {
                expected: prefixes.len(),
                got: labels.len(),
            });
        }
        for &l in labels {
            params.check_item(l)?;
        }
    }
    let mut graphs = Vec::with_capacity(prefixes.len());
    for prefix in prefixes {
        for &item in prefix.iter() {
            params.check_item(item)?;
        }
        graphs.push(SessionHypergraph::build(prefix, max_window)?);
    }
    let refs: Vec<&SessionHypergraph> = graphs.iter().collect();
    let (graph, node_offsets) = SessionHypergraph::disjoint_union(&refs);

    let d = params.embed_dim();
    let mut node_input = Mat::zeros(graph.num_nodes(), d);
    for (t, &item) in graph.nodes.iter().enumerate() {
        node_input
            .row_mut(t)
            .copy_from_slice(params.embeddings.row(item));
    }
    let layers = hgat_forward(&params.layers, &graph, &node_input, dropout.as_deref_mut())?;
    let finals = layers.last().map(|l| &l.output).unwrap_or(&node_input);

    let mut samples = Vec::with_capacity(prefixes.len());
    let mut pos = 0;
    let mut loss_sum = 0.0;
    for (s, prefix) in prefixes.iter().enumerate() {
        let positions = graph.position_to_node[pos..pos + prefix.len()].to_vec();
        pos += prefix.len();
        let seq: Vec<&[f64]> = positions.iter().map(|&p| finals.row(p)).collect();
        let SessionStep {
            query,
            keys,
            values,
            sigma,
            h: h_pre,
        } = session_step(&params.decoder, &seq);
        let h_mask = dropout.as_deref_mut().and_then(|dr| dr.mask(d));
        let h = match &h_mask {
            Some(m) => h_pre.iter().zip(m).map(|(v, k)| v * k).collect(),
            None => h_pre.clone(),
        };
        let label = labels.map(|l| l[s]);
        let logits = logits_for(&h, &params.embeddings);
        let (probs, loss) = probs_and_loss(&logits, label);
        loss_sum += loss;
        samples.push(DecoderTrace {
            positions,
            query,
            keys,
            values,
            sigma,
            h_pre,
            h_mask,
            h,
            logits,
            probs,
            label,
            loss,
        });
    }
    let loss = if labels.is_some() && !prefixes.is_empty() {
        loss_sum / prefixes.len() as f64
    } else {
        0.0
    };
    Ok(ForwardTrace {
        graph,
        node_offsets,
        node_input,
        layers,
        samples,
        loss,
    })
}

/// Inference logits for one prefix (dropout off).
pub fn session_logits(
    params: &ModelParams,
    prefix: &[usize],
    max_window: usize,
) -> Result<Vec<f64>, ModelError> {
    if prefix.is_empty() {
        return Err(ModelError::EmptySequence);
    }
    let mut trace = forward_batch(params, &[prefix], None, max_window, None)?;
    Ok(trace.samples.pop().map(|s| s.logits).unwrap_or_default())
}

/// Top-`k` items by logit, ties broken by ascending item index.
pub fn predict_topk(
    params: &ModelParams,
    prefix: &[usize],
    max_window: usize,
    k: usize,
) -> Result<Vec<(usize, f64)>, ModelError> {
    let logits = session_logits(params, prefix, max_window)?;
    Ok(rank_logits(&logits, k))
}

/// Top `k` of `logits` as `(item, logit)`, best first; equal logits go to
/// the lower index.
pub fn rank_logits(logits: &[f64], k: usize) -> Vec<(usize, f64)> {
    let mut order: Vec<usize> = (0..logits.len()).collect();
    order.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]).then(a.cmp(&b)));
    order.truncate(k);
    order.into_iter().map(|i| (i, logits[i])).collect()
}
