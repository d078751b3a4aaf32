use rand_core::Rng;
use rand_pcg::Pcg32;

use crate::error::{Result, SllError};

/// Stream selector for the schedule generator (the pcg32 reference default).
const PCG_STREAM: u64 = 0x0a02_bdbf_7bb3_c0a7;

/// Seeded source for schedules and clustering: `pcg32` (64-bit LCG state,
/// XSH-RR output) seeded as `pcg32_srandom(seed, 0xa02bdbf7bb3c0a7)`, with
/// bounded draws by rejection as in the reference `pcg32_boundedrand`.
/// Any pcg32 implementation reproduces the same sequences.
#[derive(Debug, Clone)]
pub struct SeededRng(Pcg32);

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng(Pcg32::new(seed, PCG_STREAM))
    }

    pub fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }

    /// Uniform integer in `0..bound`.
    pub fn below(&mut self, bound: u32) -> u32 {
        assert!(bound > 0);
        let threshold = bound.wrapping_neg() % bound;
        loop {
            let r = self.0.next_u32();
            if r >= threshold {
                return r % bound;
            }
        }
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn unit_f64(&mut self) -> f64 {
        let hi = (self.0.next_u32() >> 5) as u64;
        let lo = (self.0.next_u32() >> 6) as u64;
        ((hi << 26) | lo) as f64 / (1u64 << 53) as f64
    }

    /// Standard normal via Box-Muller.
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.unit_f64();
        let u2 = self.unit_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Fisher-Yates, walking from the last position down.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u32 + 1) as usize;
            items.swap(i, j);
        }
    }
}

/// Which labels are known up front and in what batches the rest arrive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamSchedule {
    pub initial_labels: Vec<usize>,
    pub batches: Vec<Vec<usize>>,
    pub seed: u64,
}

impl StreamSchedule {
    pub fn n_labels(&self) -> usize {
        self.initial_labels.len() + self.batches.iter().map(Vec::len).sum::<usize>()
    }

    pub fn arriving_labels(&self) -> impl Iterator<Item = usize> + '_ {
        self.batches.iter().flatten().copied()
    }
}

/// Permutes `0..n_labels` with the seeded generator; the first
/// `ceil(ratio * L)` become the initial labels and the rest are chunked into
/// batches of `batch_size` (the last one may be shorter).
pub fn make_schedule(
    n_labels: usize,
    initial_ratio: f64,
    batch_size: usize,
    seed: u64,
) -> Result<StreamSchedule> {
    if !(initial_ratio > 0.0 && initial_ratio <= 1.0) {
        return Err(SllError::InvalidConfig(format!(
            "initial ratio must lie in (0, 1], got {}",
            initial_ratio
        )));
    }
    if batch_size == 0 {
        return Err(SllError::InvalidConfig("batch size must be at least 1".into()));
    }
    if n_labels == 0 || n_labels > u32::MAX as usize {
        return Err(SllError::InvalidConfig(format!("unsupported label count {}", n_labels)));
    }
    let n_initial = initial_count(n_labels, initial_ratio);
    let mut order: Vec<usize> = (0..n_labels).collect();
    SeededRng::new(seed).shuffle(&mut order);
    let batches = order[n_initial..]
        .chunks(batch_size)
        .map(<[usize]>::to_vec)
        .collect();
    Ok(StreamSchedule {
        initial_labels: order[..n_initial].to_vec(),
        batches,
        seed,
    })
}

/// `ceil(ratio * L)` clamped to `1..=L`; the small epsilon keeps exact
/// products such as `0.7 * 10` from rounding up.
pub fn initial_count(n_labels: usize, ratio: f64) -> usize {
    let raw = (ratio * n_labels as f64 - 1e-9).ceil();
    (raw.max(1.0) as usize).min(n_labels)
}
