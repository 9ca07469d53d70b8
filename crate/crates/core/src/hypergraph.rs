//! Per-session hypergraphs built from sliding contextual windows.
//!
//! Every window of `w` consecutive items (for `w` in `2..=W`) becomes a
//! hyperedge over the distinct items it contains. Identical member sets are
//! merged (keeping the smallest window size) and windows that only repeat a
//! single item are dropped, so a node can end up on no hyperedge at all.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::ModelError;

/// A hyperedge: the node ordinals of one distinct contextual window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hyperedge {
    /// Node ordinals, sorted ascending.
    pub members: Vec<usize>,
    pub window_size: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionHypergraph {
    /// Unique item indices in order of first occurrence.
    pub nodes: Vec<usize>,
    /// Sequence position (0-based) to node ordinal.
    pub position_to_node: Vec<usize>,
    pub hyperedges: Vec<Hyperedge>,
    /// Incident hyperedge ordinals per node, ascending.
    pub node_to_edges: Vec<Vec<usize>>,
}

/// All contiguous windows of length `w`, as `(start, end)` half-open position ranges.
pub fn enumerate_windows(len: usize, w: usize) -> Result<Vec<(usize, usize)>, ModelError> {
    if w < 2 {
        return Err(ModelError::WindowTooSmall(w));
    }
    if len < w {
        return Ok(Vec::new());
    }
    Ok((0..=len - w).map(|p| (p, p + w)).collect())
}

impl SessionHypergraph {
    pub fn build(sequence: &[usize], max_window: usize) -> Result<Self, ModelError> {
        if sequence.is_empty() {
            return Err(ModelError::EmptySequence);
        }
        if max_window < 2 {
            return Err(ModelError::WindowTooSmall(max_window));
        }

        let mut nodes = Vec::new();
        let mut ordinal_of: HashMap<usize, usize> = HashMap::new();
        let position_to_node: Vec<usize> = sequence
            .iter()
            .map(|&item| {
                *ordinal_of.entry(item).or_insert_with(|| {
                    nodes.push(item);
                    nodes.len() - 1
                })
            })
            .collect();

        // Windows are visited in increasing size, so the first time a member
        // set is seen carries its smallest window size.
        let mut seen: HashMap<Vec<usize>, usize> = HashMap::new();
        let mut hyperedges = Vec::new();
        for w in 2..=max_window.min(sequence.len()) {
            for (start, end) in enumerate_windows(sequence.len(), w)? {
                let mut members: Vec<usize> = position_to_node[start..end].to_vec();
                members.sort_unstable();
                members.dedup();
                if members.len() < 2 || seen.contains_key(&members) {
                    continue;
                }
                seen.insert(members.clone(), hyperedges.len());
                hyperedges.push(Hyperedge {
                    members,
                    window_size: w,
                });
            }
        }

        let mut node_to_edges = vec![Vec::new(); nodes.len()];
        for (j, edge) in hyperedges.iter().enumerate() {
            for &t in &edge.members {
                node_to_edges[t].push(j);
            }
        }

        Ok(Self {
            nodes,
            position_to_node,
            hyperedges,
            node_to_edges,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_edges(&self) -> usize {
        self.hyperedges.len()
    }

    pub fn is_isolated(&self, node: usize) -> bool {
        self.node_to_edges[node].is_empty()
    }

    /// Disjoint union of several session graphs (block-diagonal incidence).
    ///
    /// Returns the union and, per input graph, the offset of its first node.
    /// `nodes` and `position_to_node` of the union are concatenations.
    pub fn disjoint_union(graphs: &[&SessionHypergraph]) -> (SessionHypergraph, Vec<usize>) {
        let mut union = SessionHypergraph {
            nodes: Vec::new(),
            position_to_node: Vec::new(),
            hyperedges: Vec::new(),
            node_to_edges: Vec::new(),
        };
        let mut offsets = Vec::with_capacity(graphs.len());
        for g in graphs {
            let node_off = union.nodes.len();
            let edge_off = union.hyperedges.len();
            offsets.push(node_off);
            union.nodes.extend_from_slice(&g.nodes);
            union
                .position_to_node
                .extend(g.position_to_node.iter().map(|p| p + node_off));
            union.hyperedges.extend(g.hyperedges.iter().map(|e| Hyperedge {
                members: e.members.iter().map(|m| m + node_off).collect(),
                window_size: e.window_size,
            }));
            union.node_to_edges.extend(
                g.node_to_edges
                    .iter()
                    .map(|es| es.iter().map(|j| j + edge_off).collect()),
            );
        }
        (union, offsets)
    }

    /// One line per hyperedge, `w=<size>: <item indices sorted>`.
    pub fn debug_text(&self) -> String {
        let mut out = String::new();
        for e in &self.hyperedges {
            let mut items: Vec<usize> = e.members.iter().map(|&m| self.nodes[m]).collect();
            items.sort_unstable();
            let items: Vec<String> = items.iter().map(|i| i.to_string()).collect();
            let _ = writeln!(out, "w={}: {}", e.window_size, items.join(" "));
        }
        out
    }
}
