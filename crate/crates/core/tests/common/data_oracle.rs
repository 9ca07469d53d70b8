//! Naive preprocessing oracles.

use std::collections::{BTreeSet, HashSet};

use share_core::data::{Corpus, Session, SessionSample};

pub fn naive_filter(corpus: &Corpus, min_support: usize, min_len: usize) -> Corpus {
    let all: BTreeSet<&String> = corpus.values().flat_map(|s| s.items.iter()).collect();
    let mut keep = HashSet::new();
    for item in all {
        let mut n = 0;
        for s in corpus.values() {
            if s.items.contains(item) {
                n += 1;
            }
        }
        if n >= min_support {
            keep.insert(item.clone());
        }
    }
    let mut out = Corpus::new();
    for (k, s) in corpus {
        let mut items = Vec::new();
        for i in &s.items {
            if keep.contains(i) {
                items.push(i.clone());
            }
        }
        if items.len() >= min_len {
            out.insert(
                k.clone(),
                Session {
                    items,
                    end_time: s.end_time,
                },
            );
        }
    }
    out
}

pub fn naive_prefixes(seq: &[usize]) -> Vec<(Vec<usize>, usize)> {
    let mut out = Vec::new();
    let mut prefix = Vec::new();
    for i in 0..seq.len() - 1 {
        prefix.push(seq[i]);
        out.push((prefix.clone(), seq[i + 1]));
    }
    out
}

/// Insertion sort on end time (stable), then the last ⌈n·num/den⌉.
pub fn naive_recent(samples: &[SessionSample], num: usize, den: usize) -> Vec<SessionSample> {
    let mut sorted: Vec<SessionSample> = Vec::new();
    for s in samples {
        let pos = sorted
            .iter()
            .position(|t| t.end_time > s.end_time)
            .unwrap_or(sorted.len());
        sorted.insert(pos, s.clone());
    }
    let mut keep = samples.len() * num / den;
    if keep * den < samples.len() * num {
        keep += 1;
    }
    sorted[sorted.len() - keep..].to_vec()
}
