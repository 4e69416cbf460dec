use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::puzzle::PuzzleInstance;

/// Partition of root puzzle ids into train and test sides. Every instance of
/// a root lands on the same side, so test roots are never seen in training.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub test_root_ids: BTreeSet<u32>,
    pub train_root_ids: BTreeSet<u32>,
    pub seed: u64,
}

impl SplitSpec {
    pub fn is_test(&self, root_id: u32) -> bool {
        self.test_root_ids.contains(&root_id)
    }

    /// Splits `instances` into (train, test), preserving order within each side.
    /// Instances whose root is on neither side are dropped.
    pub fn partition<'a>(&self, instances: &'a [PuzzleInstance]) -> (Vec<&'a PuzzleInstance>, Vec<&'a PuzzleInstance>) {
        let train = instances
            .iter()
            .filter(|p| self.train_root_ids.contains(&p.root_id))
            .collect();
        let test = instances
            .iter()
            .filter(|p| self.test_root_ids.contains(&p.root_id))
            .collect();
        (train, test)
    }
}

/// Seeded shuffle of the distinct root ids; the first
/// `ceil(test_fraction × #roots)` go to test (kept within `1..#roots`).
pub fn make_puzzle_split(instances: &[PuzzleInstance], test_fraction: f64, seed: u64) -> Result<SplitSpec> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Split(format!(
            "test fraction must be in (0, 1), got {test_fraction}"
        )));
    }
    let roots: BTreeSet<u32> = instances.iter().map(|p| p.root_id).collect();
    if roots.len() < 2 {
        return Err(Error::Split(format!(
            "need at least 2 distinct root puzzles, found {}",
            roots.len()
        )));
    }
    let mut order: Vec<u32> = roots.into_iter().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = ((test_fraction * order.len() as f64).ceil() as usize).clamp(1, order.len() - 1);
    Ok(SplitSpec {
        test_root_ids: order[..n_test].iter().copied().collect(),
        train_root_ids: order[n_test..].iter().copied().collect(),
        seed,
    })
}
