use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Which dataset a batch slot draws from, and the item index within it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Source {
    Primary(usize),
    Additional(usize),
}

/// Endless shuffled pass over `0..n`, reshuffled at each wrap.
struct Cycle {
    order: Vec<usize>,
    pos: usize,
    rng: ChaCha8Rng,
}

impl Cycle {
    fn new(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        Cycle { order, pos: 0, rng }
    }

    fn next(&mut self) -> usize {
        if self.pos == self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
        }
        self.pos += 1;
        self.order[self.pos - 1]
    }
}

/// Deterministic batch stream mixing primary and additional items.
///
/// Each batch holds `round(mix_ratio · batch_size)` additional items
/// (none when the additional set is empty) and primary items for the rest.
pub struct MixedSampler {
    primary: Cycle,
    additional: Option<Cycle>,
    n_additional_per_batch: usize,
    batch_size: usize,
}

impl MixedSampler {
    pub fn new(n_primary: usize, n_additional: usize, batch_size: usize, mix_ratio: f64, seed: u64) -> Result<Self> {
        if n_primary == 0 {
            return Err(Error::Config("primary training set is empty".into()));
        }
        if batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(0.0..=1.0).contains(&mix_ratio) {
            return Err(Error::Config("mix_ratio must lie in [0, 1]".into()));
        }
        let n_add = if n_additional == 0 {
            0
        } else {
            (mix_ratio * batch_size as f64).round() as usize
        };
        Ok(MixedSampler {
            primary: Cycle::new(n_primary, seed),
            additional: (n_additional > 0).then(|| Cycle::new(n_additional, seed ^ 0x5bd1_e995)),
            n_additional_per_batch: n_add,
            batch_size,
        })
    }

    pub fn primary_per_batch(&self) -> usize {
        self.batch_size - self.n_additional_per_batch
    }

    pub fn additional_per_batch(&self) -> usize {
        self.n_additional_per_batch
    }

    pub fn next_batch(&mut self) -> Vec<Source> {
        let mut batch: Vec<Source> = (0..self.primary_per_batch())
            .map(|_| Source::Primary(self.primary.next()))
            .collect();
        if let Some(add) = self.additional.as_mut() {
            batch.extend((0..self.n_additional_per_batch).map(|_| Source::Additional(add.next())));
        }
        batch
    }
}

impl Iterator for MixedSampler {
    type Item = Vec<Source>;

    fn next(&mut self) -> Option<Vec<Source>> {
        Some(self.next_batch())
    }
}
