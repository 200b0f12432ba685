#![allow(dead_code)]

use std::path::PathBuf;

use gridfreq_core::network::NetworkModel;
use rand::{Rng, RngCore};

pub fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

/// Random spanning tree plus `extra` chords, weights uniform in `[lo, hi]`.
pub fn random_network(n: usize, extra: usize, lo: f64, hi: f64, rng: &mut impl RngCore) -> NetworkModel {
    let mut edges = Vec::new();
    for i in 1..n {
        edges.push((rng.random_range(0..i), i));
    }
    let mut tries = 0;
    while edges.len() < n - 1 + extra && tries < 100 * (extra + 1) {
        tries += 1;
        let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
        let e = (a.min(b), a.max(b));
        if a != b && !edges.iter().any(|&(x, y)| (x.min(y), x.max(y)) == e) {
            edges.push(e);
        }
    }
    let weights = (0..edges.len()).map(|_| rng.random_range(lo..=hi)).collect();
    NetworkModel::new(n, edges, weights).unwrap()
}

/// Zero-mean injections of size at most `scale` per bus.
pub fn balanced_injection(n: usize, scale: f64, rng: &mut impl RngCore) -> Vec<f64> {
    let mut p: Vec<f64> = (0..n).map(|_| rng.random_range(-scale..=scale)).collect();
    let mean = p.iter().sum::<f64>() / n as f64;
    p.iter_mut().for_each(|x| *x -= mean);
    p
}
