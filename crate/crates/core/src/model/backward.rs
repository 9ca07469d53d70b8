//! Reverse-mode gradients of the mean batch cross-entropy.

use super::attention::softmax_backward;
use super::forward::{ForwardTrace, LayerTrace};
use super::{HgatLayerParams, ModelParams};
use crate::error::ModelError;
use crate::hypergraph::SessionHypergraph;
use crate::linalg::{axpy, dot, Mat};

/// `ŷ − y` for softmax cross-entropy.
pub fn logit_gradient(probs: &[f64], label: usize) -> Vec<f64> {
    let mut g = probs.to_vec();
    g[label] -= 1.0;
    g
}

fn check_trace(params: &ModelParams, trace: &ForwardTrace) -> Result<(), ModelError> {
    if trace.layers.len() != params.layers.len() {
        return Err(ModelError::StaleTrace(format!(
            "trace has {} layers, parameters have {}",
            trace.layers.len(),
            params.layers.len()
        )));
    }
    if trace.node_input.cols() != params.embed_dim() {
        return Err(ModelError::StaleTrace("embedding dimension differs".into()));
    }
    for (t, &item) in trace.graph.nodes.iter().enumerate() {
        if item >= params.num_items() || trace.node_input.row(t) != params.embeddings.row(item) {
            return Err(ModelError::StaleTrace(format!(
                "embedding row {item} changed since the forward pass"
            )));
        }
    }
    for s in &trace.samples {
        if s.logits.len() != params.num_items() {
            return Err(ModelError::StaleTrace("vocabulary size differs".into()));
        }
        if s.label.is_none() {
            return Err(ModelError::StaleTrace("sample has no label".into()));
        }
    }
    Ok(())
}

/// Exact gradients of the trace's mean loss with respect to every parameter.
pub fn backward(params: &ModelParams, trace: &ForwardTrace) -> Result<ModelParams, ModelError> {
    check_trace(params, trace)?;
    let mut grads = ModelParams::zeros_like(params);
    if trace.samples.is_empty() {
        return Ok(grads);
    }
    let d = params.embed_dim();
    let scale = 1.0 / trace.samples.len() as f64;
    let inv_sqrt_d = 1.0 / (d as f64).sqrt();
    let finals = trace.final_nodes();
    let mut d_nodes = Mat::zeros(trace.graph.num_nodes(), d);

    for s in &trace.samples {
        let label = s.label.expect("checked above");
        let mut dp = logit_gradient(&s.probs, label);
        for g in &mut dp {
            *g *= scale;
        }

        // logits = E h
        grads.embeddings.add_outer(1.0, &dp, &s.h);
        let mut dh = vec![0.0; d];
        params.embeddings.matvec_t_acc(&dp, &mut dh);
        if let Some(mask) = &s.h_mask {
            for (g, m) in dh.iter_mut().zip(mask) {
                *g *= m;
            }
        }

        // h = Σ σ_i r_i
        let t = s.positions.len();
        let d_sigma: Vec<f64> = (0..t).map(|i| dot(&dh, s.values.row(i))).collect();
        let d_scores = softmax_backward(&s.sigma, &d_sigma);
        let mut dq = vec![0.0; d];
        for i in 0..t {
            let v_i = finals.row(s.positions[i]);
            // values r_i = W_V v_i
            grads.decoder.w_v.add_outer(s.sigma[i], &dh, v_i);
            let mut dv = vec![0.0; d];
            let dr: Vec<f64> = dh.iter().map(|g| g * s.sigma[i]).collect();
            params.decoder.w_v.matvec_t_acc(&dr, &mut dv);
            // score_i = q·k_i / √D
            let ds = d_scores[i] * inv_sqrt_d;
            axpy(ds, s.keys.row(i), &mut dq);
            let dk: Vec<f64> = s.query.iter().map(|q| q * ds).collect();
            grads.decoder.w_k.add_outer(1.0, &dk, v_i);
            params.decoder.w_k.matvec_t_acc(&dk, &mut dv);
            axpy(1.0, &dv, d_nodes.row_mut(s.positions[i]));
        }
        let last = s.positions[t - 1];
        grads.decoder.w_q.add_outer(1.0, &dq, finals.row(last));
        let mut dv = vec![0.0; d];
        params.decoder.w_q.matvec_t_acc(&dq, &mut dv);
        axpy(1.0, &dv, d_nodes.row_mut(last));
    }

    for (l, layer_trace) in trace.layers.iter().enumerate().rev() {
        d_nodes = layer_backward(
            &params.layers[l],
            &mut grads.layers[l],
            &trace.graph,
            layer_trace,
            &d_nodes,
            inv_sqrt_d,
        );
    }

    for (t, &item) in trace.graph.nodes.iter().enumerate() {
        axpy(1.0, d_nodes.row(t), grads.embeddings.row_mut(item));
    }
    Ok(grads)
}

/// Backpropagates through one layer; returns the gradient of its node inputs.
fn layer_backward(
    layer: &HgatLayerParams,
    grads: &mut HgatLayerParams,
    graph: &SessionHypergraph,
    tr: &LayerTrace,
    d_out: &Mat,
    inv_sqrt_d: f64,
) -> Mat {
    let d = d_out.cols();
    let n = graph.num_nodes();
    let m = graph.num_edges();

    let mut d_pre = d_out.clone();
    if let Some(mask) = &tr.mask {
        for (g, k) in d_pre.as_mut_slice().iter_mut().zip(mask.as_slice()) {
            *g *= k;
        }
    }

    let mut d_in = Mat::zeros(n, d);
    let mut d_c = Mat::zeros(m, d);
    let mut d_y = Mat::zeros(m, d);

    // node update: n'_t = Σ_j β_tj c_j, β = softmax_j(y_j·z_t/√D)
    for t in 0..n {
        let incident = &graph.node_to_edges[t];
        let g = d_pre.row(t);
        if incident.is_empty() {
            axpy(1.0, g, d_in.row_mut(t));
            continue;
        }
        let beta = &tr.beta[t];
        let d_beta: Vec<f64> = incident.iter().map(|&j| dot(g, tr.c.row(j))).collect();
        let d_scores = softmax_backward(beta, &d_beta);
        let mut dz = vec![0.0; d];
        for (k, &j) in incident.iter().enumerate() {
            axpy(beta[k], g, d_c.row_mut(j));
            let ds = d_scores[k] * inv_sqrt_d;
            axpy(ds, tr.z.row(t), d_y.row_mut(j));
            axpy(ds, tr.y.row(j), &mut dz);
        }
        grads.w3.add_outer(1.0, &dz, tr.input.row(t));
        layer.w3.matvec_t_acc(&dz, d_in.row_mut(t));
    }

    // c_j = W2 e_j, y_j = Ŵ2 e_j
    let mut d_e = Mat::zeros(m, d);
    for j in 0..m {
        grads.w2.add_outer(1.0, d_c.row(j), tr.edges.row(j));
        grads.w2_hat.add_outer(1.0, d_y.row(j), tr.edges.row(j));
        let row = d_e.row_mut(j);
        layer.w2.matvec_t_acc(d_c.row(j), row);
        layer.w2_hat.matvec_t_acc(d_y.row(j), row);
    }

    // edge aggregate: e_j = Σ_t α_jt x_t, α = softmax_t(a_t·u/√D)
    let mut d_x = Mat::zeros(n, d);
    let mut d_node_score = vec![0.0; n];
    for (j, edge) in graph.hyperedges.iter().enumerate() {
        let alpha = &tr.alpha[j];
        let g = d_e.row(j);
        let d_alpha: Vec<f64> = edge.members.iter().map(|&t| dot(g, tr.x.row(t))).collect();
        let d_scores = softmax_backward(alpha, &d_alpha);
        for (k, &t) in edge.members.iter().enumerate() {
            axpy(alpha[k], g, d_x.row_mut(t));
            d_node_score[t] += d_scores[k];
        }
    }
    for t in 0..n {
        let input = tr.input.row(t);
        grads.w1.add_outer(1.0, d_x.row(t), input);
        layer.w1.matvec_t_acc(d_x.row(t), d_in.row_mut(t));
        let ds = d_node_score[t] * inv_sqrt_d;
        if ds != 0.0 {
            axpy(ds, tr.a.row(t), &mut grads.u);
            let da: Vec<f64> = layer.u.iter().map(|u| u * ds).collect();
            grads.w1_hat.add_outer(1.0, &da, input);
            layer.w1_hat.matvec_t_acc(&da, d_in.row_mut(t));
        }
    }
    d_in
}
