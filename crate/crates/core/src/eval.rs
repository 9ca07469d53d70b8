//! Leave-one-out ranking metrics: Hit@K and MRR@K over all items.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::data::SessionSample;
use crate::error::EvalError;
use crate::model::{session_logits, ModelParams};

/// 1-based rank of `label`: items with a strictly greater logit, plus
/// equal-logit items with a smaller index, come first.
pub fn rank_of_truth(logits: &[f64], label: usize) -> usize {
    let target = logits[label];
    1 + logits
        .iter()
        .enumerate()
        .filter(|&(i, &p)| p > target || (p == target && i < label))
        .count()
}

pub fn hit_at_k(rank: usize, k: usize) -> u32 {
    u32::from(rank <= k)
}

pub fn mrr_at_k(rank: usize, k: usize) -> f64 {
    if rank <= k {
        1.0 / rank as f64
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankResult {
    pub sample: usize,
    pub rank: usize,
    pub prefix_len: usize,
    /// Cross-entropy of the label under the model.
    pub loss: f64,
}

/// Prefix-length buckets used for the session-length breakdown.
pub const LENGTH_BUCKETS: [(usize, Option<usize>); 4] =
    [(1, Some(3)), (4, Some(6)), (7, Some(10)), (11, None)];

fn bucket_label(lo: usize, hi: Option<usize>) -> String {
    match hi {
        Some(hi) => format!("{lo}-{hi}"),
        None => format!("{lo}+"),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricAtK {
    pub k: usize,
    pub hits: u64,
    pub hit: f64,
    pub mrr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BucketReport {
    pub label: String,
    pub count: usize,
    pub metrics: Vec<MetricAtK>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub count: usize,
    pub metrics: Vec<MetricAtK>,
    pub buckets: Vec<BucketReport>,
    pub mean_loss: f64,
}

impl MetricsReport {
    pub fn at(&self, k: usize) -> Option<&MetricAtK> {
        self.metrics.iter().find(|m| m.k == k)
    }

    pub fn hit(&self, k: usize) -> Option<f64> {
        self.at(k).map(|m| m.hit)
    }

    pub fn mrr(&self, k: usize) -> Option<f64> {
        self.at(k).map(|m| m.mrr)
    }

    /// `metric<TAB>K<TAB>value<TAB>n`, Hit lines then MRR lines.
    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        for m in &self.metrics {
            let _ = writeln!(out, "Hit\t{}\t{}\t{}", m.k, m.hit, self.count);
        }
        for m in &self.metrics {
            let _ = writeln!(out, "MRR\t{}\t{}\t{}", m.k, m.mrr, self.count);
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = write!(out, "{:<10}{:>8}", "length", "n");
        for m in &self.metrics {
            let _ = write!(out, "{:>10}{:>10}", format!("Hit@{}", m.k), format!("MRR@{}", m.k));
        }
        out.push('\n');
        let mut row = |label: &str, n: usize, ms: &[MetricAtK]| {
            let _ = write!(out, "{:<10}{:>8}", label, n);
            for m in ms {
                let _ = write!(out, "{:>10.2}{:>10.2}", 100.0 * m.hit, 100.0 * m.mrr);
            }
            out.push('\n');
        };
        row("all", self.count, &self.metrics);
        for b in &self.buckets {
            row(&b.label, b.count, &b.metrics);
        }
        out
    }
}

fn aggregate(results: &[&RankResult], ks: &[usize]) -> Vec<MetricAtK> {
    ks.iter()
        .map(|&k| {
            let mut hits = 0u64;
            let mut mrr_sum = 0.0;
            for r in results {
                hits += u64::from(hit_at_k(r.rank, k));
                mrr_sum += mrr_at_k(r.rank, k);
            }
            let n = results.len().max(1) as f64;
            MetricAtK {
                k,
                hits,
                hit: hits as f64 / n,
                mrr: mrr_sum / n,
            }
        })
        .collect()
}

/// Aggregates per-sample ranks. Results are taken in sample order so the
/// floating-point reduction is fixed.
pub fn report_from_ranks(results: &[RankResult], ks: &[usize]) -> Result<MetricsReport, EvalError> {
    if results.is_empty() {
        return Err(EvalError::EmptyTestSet);
    }
    if let Some(&k) = ks.iter().find(|&&k| k == 0) {
        return Err(EvalError::InvalidCutoff(k));
    }
    let mut ordered: Vec<&RankResult> = results.iter().collect();
    ordered.sort_by_key(|r| r.sample);
    let metrics = aggregate(&ordered, ks);
    let buckets = LENGTH_BUCKETS
        .iter()
        .map(|&(lo, hi)| {
            let members: Vec<&RankResult> = ordered
                .iter()
                .copied()
                .filter(|r| r.prefix_len >= lo && hi.is_none_or(|h| r.prefix_len <= h))
                .collect();
            BucketReport {
                label: bucket_label(lo, hi),
                count: members.len(),
                metrics: aggregate(&members, ks),
            }
        })
        .collect();
    let mean_loss = ordered.iter().map(|r| r.loss).sum::<f64>() / ordered.len() as f64;
    Ok(MetricsReport {
        count: ordered.len(),
        metrics,
        buckets,
        mean_loss,
    })
}

fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|p| (p - max).exp()).sum::<f64>().ln() - logits[label]
}

pub fn rank_samples(
    params: &ModelParams,
    max_window: usize,
    samples: &[SessionSample],
) -> Result<Vec<RankResult>, EvalError> {
    samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            params.check_item(s.label)?;
            let logits = session_logits(params, &s.prefix, max_window)?;
            Ok(RankResult {
                sample: i,
                rank: rank_of_truth(&logits, s.label),
                prefix_len: s.prefix.len(),
                loss: cross_entropy(&logits, s.label),
            })
        })
        .collect()
}

/// Scores every sample's prefix against all items (dropout off) and reports
/// Hit@K / MRR@K for each requested K.
pub fn evaluate(
    params: &ModelParams,
    max_window: usize,
    samples: &[SessionSample],
    ks: &[usize],
) -> Result<MetricsReport, EvalError> {
    if samples.is_empty() {
        return Err(EvalError::EmptyTestSet);
    }
    let ranks = rank_samples(params, max_window, samples)?;
    report_from_ranks(&ranks, ks)
}
