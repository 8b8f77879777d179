//! Micro-benchmark for the depth-wise cross-correlation kernel.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tio_core::siam::{SEARCH_SIZE, TEMPLATE_SIZE};
use tio_core::tensor::depthwise_xcorr;
use tio_core::Tensor3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchResult {
    pub channels: usize,
    pub iters: usize,
    pub mean_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
}

impl BenchResult {
    pub fn summary(&self) -> String {
        format!(
            "depthwise_xcorr {s}x{s}x{c} * {t}x{t}x{c}: mean {:.3} ms/call, min {:.3} ms, max {:.3} ms over {} calls",
            self.mean_ms,
            self.min_ms,
            self.max_ms,
            self.iters,
            s = SEARCH_SIZE,
            t = TEMPLATE_SIZE,
            c = self.channels,
        )
    }
}

/// Time `iters` single-threaded calls at tracking size, after one warm-up.
pub fn bench_xcorr(channels: usize, iters: usize, seed: u64) -> BenchResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tensor = |n| Tensor3::from_fn(n, n, channels, |_, _, _| rng.gen_range(-1.0..1.0)).expect("valid dims");
    let search = tensor(SEARCH_SIZE);
    let template = tensor(TEMPLATE_SIZE);
    let iters = iters.max(1);
    std::hint::black_box(depthwise_xcorr(&search, &template).expect("valid shapes"));
    let mut times = Vec::with_capacity(iters);
    for _ in 0..iters {
        let start = Instant::now();
        std::hint::black_box(depthwise_xcorr(std::hint::black_box(&search), &template).expect("valid shapes"));
        times.push(start.elapsed().as_secs_f64() * 1e3);
    }
    BenchResult {
        channels,
        iters,
        mean_ms: times.iter().sum::<f64>() / iters as f64,
        min_ms: times.iter().copied().fold(f64::INFINITY, f64::min),
        max_ms: times.iter().copied().fold(0.0, f64::max),
    }
}
