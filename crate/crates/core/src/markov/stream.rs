//! Sample streams: Markov paths, i.i.d. stationary draws, and experience
//! replay over either.
//!
//! Every stream owns a `ChaCha8Rng`. [`derive_rng`] maps a `(seed, stream)`
//! pair to an independent generator, so runs are bit-reproducible per seed.

use std::collections::VecDeque;
use std::sync::Arc;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::chain::FiniteChain;
use crate::error::{Error, Result};

pub fn derive_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Cumulative distribution with the last entry pinned to 1.
#[derive(Debug, Clone)]
struct Cdf(Vec<f64>);

impl Cdf {
    fn new(weights: impl Iterator<Item = f64>) -> Self {
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = weights
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        let total = acc;
        for c in cdf.iter_mut() {
            *c /= total;
        }
        // entries with zero trailing mass must never be selected by u < 1
        if let Some(last_positive) = cdf.iter().rposition(|&c| c < 1.0) {
            for c in cdf[last_positive + 1..].iter_mut() {
                *c = 1.0;
            }
        }
        if let Some(last) = cdf.last_mut() {
            *last = 1.0;
        }
        Cdf(cdf)
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> usize {
        let u: f64 = rng.random();
        self.0.partition_point(|&c| c <= u).min(self.0.len() - 1)
    }
}

/// Precomputed row samplers for a chain; cheap to share between streams.
#[derive(Debug, Clone)]
pub struct ChainSampler {
    rows: Vec<Cdf>,
    stationary: Cdf,
}

impl ChainSampler {
    pub fn new(chain: &FiniteChain) -> Self {
        let p = chain.transition();
        let rows = (0..chain.states()).map(|i| Cdf::new(p.row(i).iter().copied())).collect();
        Self { rows, stationary: Cdf::new(chain.stationary().iter().copied()) }
    }

    pub fn states(&self) -> usize {
        self.rows.len()
    }

    pub fn step(&self, state: usize, rng: &mut ChaCha8Rng) -> usize {
        self.rows[state].sample(rng)
    }

    pub fn stationary(&self, rng: &mut ChaCha8Rng) -> usize {
        self.stationary.sample(rng)
    }
}

/// Samples an index from arbitrary nonnegative weights.
pub fn sample_weights(weights: &DVector<f64>, rng: &mut ChaCha8Rng) -> usize {
    Cdf::new(weights.iter().copied()).sample(rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StartState {
    Fixed(usize),
    Stationary,
}

/// Stored history for replay. `capacity = None` keeps everything; otherwise
/// the oldest entry is evicted first.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    items: VecDeque<usize>,
    capacity: Option<usize>,
}

impl ReplayBuffer {
    pub fn new(capacity: Option<usize>) -> Result<Self> {
        if capacity == Some(0) {
            return Err(Error::InvalidArgument("replay capacity must be positive".into()));
        }
        Ok(Self { items: VecDeque::new(), capacity })
    }

    pub fn push(&mut self, item: usize) {
        if self.capacity.is_some_and(|c| self.items.len() == c) {
            self.items.pop_front();
        }
        self.items.push_back(item);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> Option<usize> {
        self.capacity
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> usize {
        if self.items.len() == 1 {
            return self.items[0];
        }
        self.items[rng.random_range(0..self.items.len())]
    }
}

#[derive(Debug, Clone)]
enum Mode {
    Markov { sampler: Arc<ChainSampler>, start: StartState, current: Option<usize> },
    Iid { sampler: Arc<ChainSampler> },
    Replay { base: Box<SampleStream>, buffer: ReplayBuffer, warmup: usize },
}

/// Infinite, seeded source of state indices.
#[derive(Debug, Clone)]
pub struct SampleStream {
    mode: Mode,
    rng: ChaCha8Rng,
}

impl SampleStream {
    /// Path of the chain; the first emitted state is `s₀`.
    pub fn markov(sampler: Arc<ChainSampler>, start: StartState, rng: ChaCha8Rng) -> Result<Self> {
        if let StartState::Fixed(s) = start {
            if s >= sampler.states() {
                return Err(Error::InvalidArgument(format!("start state {s} out of range")));
            }
        }
        Ok(Self { mode: Mode::Markov { sampler, start, current: None }, rng })
    }

    pub fn iid(sampler: Arc<ChainSampler>, rng: ChaCha8Rng) -> Self {
        Self { mode: Mode::Iid { sampler }, rng }
    }

    /// Each draw stores one base sample (plus enough extra to reach `warmup`
    /// stored samples on the first draw) and emits a uniform pick from the
    /// buffer.
    pub fn replay(base: SampleStream, capacity: Option<usize>, warmup: usize, rng: ChaCha8Rng) -> Result<Self> {
        if warmup == 0 {
            return Err(Error::InvalidArgument("replay warmup must be at least 1".into()));
        }
        if capacity.is_some_and(|c| c < warmup) {
            return Err(Error::InvalidArgument("replay warmup exceeds buffer capacity".into()));
        }
        Ok(Self { mode: Mode::Replay { base: Box::new(base), buffer: ReplayBuffer::new(capacity)?, warmup }, rng })
    }

    pub fn next_sample(&mut self) -> usize {
        match &mut self.mode {
            Mode::Markov { sampler, start, current } => {
                let next = match (*current, *start) {
                    (Some(s), _) => sampler.step(s, &mut self.rng),
                    (None, StartState::Fixed(s)) => s,
                    (None, StartState::Stationary) => sampler.stationary(&mut self.rng),
                };
                *current = Some(next);
                next
            }
            Mode::Iid { sampler } => sampler.stationary(&mut self.rng),
            Mode::Replay { base, buffer, warmup } => {
                buffer.push(base.next_sample());
                while buffer.len() < *warmup {
                    buffer.push(base.next_sample());
                }
                buffer.sample(&mut self.rng)
            }
        }
    }
}

impl Iterator for SampleStream {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        Some(self.next_sample())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::chain::metropolis_hastings;
    use nalgebra::DMatrix;

    fn cycle(n: usize) -> FiniteChain {
        let mut p = DMatrix::zeros(n, n);
        for i in 0..n {
            p[(i, (i + 1) % n)] = 1.0;
        }
        FiniteChain::new(p, DVector::from_element(n, 1.0 / n as f64)).unwrap()
    }

    #[test]
    fn markov_path_on_cycle() {
        let s = Arc::new(ChainSampler::new(&cycle(4)));
        let path: Vec<usize> = SampleStream::markov(s, StartState::Fixed(2), derive_rng(0, 0)).unwrap().take(7).collect();
        assert_eq!(path, vec![2, 3, 0, 1, 2, 3, 0]);
    }

    #[test]
    fn capacity_one_replay_is_transparent() {
        let chain = FiniteChain::two_state(0.3, 0.6).unwrap();
        let s = Arc::new(ChainSampler::new(&chain));
        let base = || SampleStream::markov(s.clone(), StartState::Stationary, derive_rng(5, 1)).unwrap();
        let replay = SampleStream::replay(base(), Some(1), 1, derive_rng(5, 2)).unwrap();
        let a: Vec<usize> = base().take(500).collect();
        let b: Vec<usize> = replay.take(500).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn same_seed_same_sequence() {
        let q = crate::markov::chain::window_proposal(20, 2).unwrap();
        let chain = metropolis_hastings(&DVector::from_element(20, 0.05), &q, 0.1).unwrap();
        let s = Arc::new(ChainSampler::new(&chain));
        let run = |seed| {
            let base = SampleStream::markov(s.clone(), StartState::Stationary, derive_rng(seed, 0)).unwrap();
            SampleStream::replay(base, None, 1, derive_rng(seed, 1)).unwrap().take(1000).collect::<Vec<_>>()
        };
        assert_eq!(run(9), run(9));
        assert_ne!(run(9), run(10));
    }

    #[test]
    fn zero_weight_states_never_drawn() {
        let w = DVector::from_row_slice(&[0.0, 1.0, 0.0, 0.0]);
        let mut rng = derive_rng(1, 0);
        for _ in 0..1000 {
            assert_eq!(sample_weights(&w, &mut rng), 1);
        }
    }

    #[test]
    fn fifo_evicts_oldest() {
        let mut b = ReplayBuffer::new(Some(2)).unwrap();
        b.push(1);
        b.push(2);
        b.push(3);
        assert_eq!(b.items, VecDeque::from(vec![2, 3]));
    }

    #[test]
    fn warmup_prefills() {
        let s = Arc::new(ChainSampler::new(&cycle(10)));
        let base = SampleStream::markov(s, StartState::Fixed(0), derive_rng(0, 0)).unwrap();
        let mut r = SampleStream::replay(base, None, 10, derive_rng(0, 1)).unwrap();
        r.next_sample();
        match &r.mode {
            Mode::Replay { buffer, .. } => assert_eq!(buffer.len(), 10),
            _ => unreachable!(),
        }
        assert!(SampleStream::replay(SampleStream::iid(Arc::new(ChainSampler::new(&cycle(3))), derive_rng(0, 0)), Some(2), 3, derive_rng(0, 1)).is_err());
    }
}
