use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::Cohort;
use crate::error::{Error, Result};
use crate::seed::{rng_for, stream};

/// Fixed patient-level partition reused by every experiment.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub seed: u64,
    pub folds: Vec<Vec<u32>>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoldRoles {
    pub test: usize,
    pub validation: usize,
    pub train: Vec<usize>,
}

/// Patient ids by role for one rotation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: BTreeSet<u32>,
    pub validation: BTreeSet<u32>,
    pub test: BTreeSet<u32>,
}

impl Split {
    pub fn check_disjoint(&self) -> Result<()> {
        let overlap = self
            .train
            .intersection(&self.validation)
            .chain(self.train.intersection(&self.test))
            .chain(self.validation.intersection(&self.test))
            .next();
        match overlap {
            Some(p) => Err(Error::Leakage(format!("patient {p} appears in more than one split"))),
            None => Ok(()),
        }
    }
}

impl FoldAssignment {
    pub fn k(&self) -> usize {
        self.folds.len()
    }

    /// Rotation `r` tests on fold `r`, validates on fold `r + 1` and trains
    /// on the rest.
    pub fn roles(&self, rotation: usize) -> FoldRoles {
        let k = self.k();
        let test = rotation % k;
        let validation = (rotation + 1) % k;
        FoldRoles {
            test,
            validation,
            train: (0..k).filter(|&f| f != test && f != validation).collect(),
        }
    }

    pub fn split(&self, rotation: usize) -> Result<Split> {
        let roles = self.roles(rotation);
        let set = |f: usize| self.folds[f].iter().copied().collect::<BTreeSet<_>>();
        let split = Split {
            train: roles.train.iter().flat_map(|&f| self.folds[f].iter().copied()).collect(),
            validation: set(roles.validation),
            test: set(roles.test),
        };
        split.check_disjoint()?;
        Ok(split)
    }

    pub fn validate(&self, cohort: &Cohort) -> Result<()> {
        let all: BTreeSet<u32> = cohort.patients.iter().map(|p| p.id).collect();
        let mut seen = BTreeSet::new();
        for (i, fold) in self.folds.iter().enumerate() {
            for &p in fold {
                if !seen.insert(p) {
                    return Err(Error::Data(format!("patient {p} assigned twice (fold {i})")));
                }
            }
        }
        if seen != all {
            return Err(Error::Data("folds do not cover exactly the cohort's patients".into()));
        }
        if self.k() < 3 {
            return Err(Error::Data("need at least 3 folds for train/validation/test".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("fold assignment serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Data(format!("fold file: {e}")))
    }
}

/// Deals shuffled converter patients round-robin first, then continues with
/// non-converters, so converters spread evenly and fold sizes differ by at
/// most one.
pub fn make_folds(cohort: &Cohort, k: usize, seed: u64) -> Result<FoldAssignment> {
    if k == 0 || cohort.patients.len() < k {
        return Err(Error::Data(format!(
            "cannot split {} patients into {k} folds",
            cohort.patients.len()
        )));
    }
    let mut rng = rng_for(seed, &[stream::FOLDS]);
    let (mut conv, mut rest): (Vec<u32>, Vec<u32>) = (Vec::new(), Vec::new());
    for p in &cohort.patients {
        if p.is_converter() {
            conv.push(p.id);
        } else {
            rest.push(p.id);
        }
    }
    conv.sort_unstable();
    rest.sort_unstable();
    conv.shuffle(&mut rng);
    rest.shuffle(&mut rng);
    let mut folds = vec![Vec::new(); k];
    for (i, p) in conv.into_iter().chain(rest).enumerate() {
        folds[i % k].push(p);
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    Ok(FoldAssignment { seed, folds })
}
