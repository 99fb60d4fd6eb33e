use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DataError, Dataset};

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SplitMode {
    Shuffled,
    LeaveOneFamilyOut(String),
}

impl fmt::Display for SplitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SplitMode::Shuffled => f.write_str("shuffled"),
            SplitMode::LeaveOneFamilyOut(fam) => write!(f, "loo:{fam}"),
        }
    }
}

impl FromStr for SplitMode {
    type Err = DataError;

    /// `shuffled` or `loo:<family>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "shuffled" {
            return Ok(SplitMode::Shuffled);
        }
        match s.strip_prefix("loo:") {
            Some(fam) if !fam.is_empty() => Ok(SplitMode::LeaveOneFamilyOut(fam.to_string())),
            _ => Err(DataError::UnknownFamily(s.to_string())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub mode: SplitMode,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitPlan {
    pub fn len(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn round_share(n: usize, share: f64) -> usize {
    (n as f64 * share).round() as usize
}

/// Shuffled 75/15/10, or one family held out as the test set with the rest
/// split 85/15.
pub fn make_split(dataset: &Dataset, mode: SplitMode, seed: u64) -> Result<SplitPlan, DataError> {
    if dataset.is_empty() {
        return Err(DataError::Empty);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match &mode {
        SplitMode::Shuffled => {
            let mut idx: Vec<usize> = (0..dataset.len()).collect();
            idx.shuffle(&mut rng);
            let n_test = round_share(idx.len(), 0.10);
            let n_val = round_share(idx.len(), 0.15);
            let test = idx.split_off(idx.len() - n_test);
            let val = idx.split_off(idx.len() - n_val);
            Ok(SplitPlan { mode, train: idx, val, test })
        }
        SplitMode::LeaveOneFamilyOut(family) => {
            let families = dataset.families();
            if families.len() < 2 {
                return Err(DataError::TooFewFamilies(families.len()));
            }
            if !families.contains(family) {
                return Err(DataError::UnknownFamily(family.clone()));
            }
            let (test, mut rest): (Vec<usize>, Vec<usize>) =
                (0..dataset.len()).partition(|&i| &dataset.samples[i].family == family);
            rest.shuffle(&mut rng);
            let n_val = round_share(rest.len(), 0.15);
            let val = rest.split_off(rest.len() - n_val);
            Ok(SplitPlan { mode, train: rest, val, test })
        }
    }
}
