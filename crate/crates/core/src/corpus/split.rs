use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CorpusError, Dataset, Label, Partition};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train_frac: f64, val_frac: f64, test_frac: f64, seed: u64) -> Result<Self, CorpusError> {
        let spec = Self { train_frac, val_frac, test_frac, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        for (name, f) in [("train", self.train_frac), ("val", self.val_frac), ("test", self.test_frac)] {
            if !(f > 0.0 && f < 1.0) {
                return Err(CorpusError::InvalidSplitSpec(format!("{name} fraction {f} not in (0, 1)")));
            }
        }
        let sum = self.train_frac + self.val_frac + self.test_frac;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(CorpusError::InvalidSplitSpec(format!("fractions sum to {sum}, not 1")));
        }
        Ok(())
    }
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { train_frac: 0.6, val_frac: 0.2, test_frac: 0.2, seed: 0 }
    }
}

/// Per-class seeded shuffle, then `round(n·val)` to val, `round(n·test)` to
/// test and the remainder to train.
pub fn stratified_split(ds: &Dataset, spec: &SplitSpec) -> Result<Dataset, CorpusError> {
    spec.validate()?;
    let mut by_class: BTreeMap<Label, Vec<&str>> = Label::ALL.iter().map(|l| (*l, Vec::new())).collect();
    for p in &ds.posts {
        let label = p.label.ok_or_else(|| CorpusError::UnlabeledPost(p.id.clone()))?;
        by_class.get_mut(&label).expect("all labels present").push(&p.id);
    }
    for (label, ids) in &by_class {
        if ids.len() < 3 {
            return Err(CorpusError::ClassTooSmall { label: label.as_u8(), count: ids.len() });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut split = BTreeMap::new();
    for ids in by_class.values_mut() {
        ids.shuffle(&mut rng);
        let n = ids.len() as f64;
        let n_val = (n * spec.val_frac).round() as usize;
        let n_test = (n * spec.test_frac).round() as usize;
        for (i, id) in ids.iter().enumerate() {
            let part = if i < n_val {
                Partition::Val
            } else if i < n_val + n_test {
                Partition::Test
            } else {
                Partition::Train
            };
            split.insert(id.to_string(), part);
        }
    }
    ds.clone().with_split(split)
}
