use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Train / validation / test fractions plus the shuffle seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train: f64, validation: f64, test: f64, seed: u64) -> Result<Self> {
        let s = SplitSpec {
            train,
            validation,
            test,
            seed,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let fr = [self.train, self.validation, self.test];
        if fr.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::invalid(format!("split fractions out of [0,1]: {fr:?}")));
        }
        if (fr.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("split fractions must sum to 1: {fr:?}")));
        }
        Ok(())
    }

    /// Split used for one row of a training-fraction sweep: validation takes
    /// `min(0.2, (1 - train) / 2)` and the remainder is the test set.
    pub fn for_train_fraction(train: f64, seed: u64) -> Result<Self> {
        let validation = ((1.0 - train) / 2.0).min(0.2);
        SplitSpec::new(train, validation, (1.0 - train - validation).max(0.0), seed)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitIndices {
    /// Stable fingerprint of the test partition.
    pub fn test_hash(&self) -> String {
        let bytes: Vec<u8> = self
            .test
            .iter()
            .flat_map(|&i| (i as u64).to_le_bytes())
            .collect();
        format!("{:016x}", rng::fnv1a(&bytes))
    }
}

/// Partitions `0..n` into disjoint train / validation / test index sets.
///
/// Validation and test sizes are `floor(fraction * n)`; the remainder goes to
/// training. The partition is a prefix cut of one seeded permutation, so for a
/// fixed seed training sets of increasing fraction are nested.
pub fn split(n: usize, spec: &SplitSpec) -> Result<SplitIndices> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let floor = |f: f64| ((f * n as f64) + 1e-9).floor() as usize;
    let n_val = floor(spec.validation).min(n);
    let n_test = floor(spec.test).min(n - n_val);
    let n_train = n - n_val - n_test;

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::substream(spec.seed, "split"));
    let train = order[..n_train].to_vec();
    // The tail is consumed from the end so that a larger training prefix only
    // ever removes indices from the front of the validation block.
    let test = order[n - n_test..].to_vec();
    let validation = order[n_train..n - n_test].to_vec();
    Ok(SplitIndices {
        train,
        validation,
        test,
    })
}
