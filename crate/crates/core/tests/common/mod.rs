//! Shared test helpers: seeded random inputs and a finite-difference oracle.
#![allow(dead_code)]

pub mod data_oracle;
pub mod oracle;

use std::ops::RangeInclusive;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use share_core::model::{backward, forward_batch, ModelParams};

pub fn random_sequence(rng: &mut ChaCha8Rng, num_items: usize, len: usize) -> Vec<usize> {
    (0..len).map(|_| rng.random_range(0..num_items)).collect()
}

pub fn random_batch(
    seed: u64,
    num_items: usize,
    batch: usize,
    lens: RangeInclusive<usize>,
) -> (Vec<Vec<usize>>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut prefixes = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..batch {
        let len = rng.random_range(lens.clone());
        // small alphabet per session so repeats and isolated nodes show up
        let alphabet = rng.random_range(1..=num_items.min(len + 1));
        let base = rng.random_range(0..num_items);
        prefixes.push(
            (0..len)
                .map(|_| (base + rng.random_range(0..alphabet)) % num_items)
                .collect(),
        );
        labels.push(rng.random_range(0..num_items));
    }
    (prefixes, labels)
}

fn mean_loss(params: &ModelParams, prefixes: &[Vec<usize>], labels: &[usize], w: usize) -> f64 {
    let refs: Vec<&[usize]> = prefixes.iter().map(|p| p.as_slice()).collect();
    forward_batch(params, &refs, Some(labels), w, None)
        .unwrap()
        .loss
}

pub struct FdReport {
    pub max_rel_error: f64,
    pub worst: String,
    pub checked: usize,
}

/// Relative error with an absolute floor so that gradients that are zero up
/// to rounding do not divide by ~0.
pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Compares every analytic gradient entry with a central difference of the
/// mean batch loss.
pub fn fd_gradient_check(
    params: &ModelParams,
    prefixes: &[Vec<usize>],
    labels: &[usize],
    window: usize,
    step: f64,
) -> FdReport {
    let refs: Vec<&[usize]> = prefixes.iter().map(|p| p.as_slice()).collect();
    let trace = forward_batch(params, &refs, Some(labels), window, None).unwrap();
    let grads = backward(params, &trace).unwrap();
    let analytic: Vec<(String, Vec<f64>)> = grads
        .tensors()
        .into_iter()
        .map(|(n, _, t)| (n, t.to_vec()))
        .collect();

    let mut probe = params.clone();
    let mut max_rel_error: f64 = 0.0;
    let mut worst = String::new();
    let mut checked = 0;
    for (ti, (name, grad)) in analytic.iter().enumerate() {
        for k in 0..grad.len() {
            let orig = probe.tensors_mut()[ti][k];
            probe.tensors_mut()[ti][k] = orig + step;
            let plus = mean_loss(&probe, prefixes, labels, window);
            probe.tensors_mut()[ti][k] = orig - step;
            let minus = mean_loss(&probe, prefixes, labels, window);
            probe.tensors_mut()[ti][k] = orig;
            let numeric = (plus - minus) / (2.0 * step);
            let err = rel_error(grad[k], numeric);
            if err > max_rel_error {
                max_rel_error = err;
                worst = format!("{name}[{k}] analytic {} numeric {}", grad[k], numeric);
            }
            checked += 1;
        }
    }
    FdReport {
        max_rel_error,
        worst,
        checked,
    }
}
