//! Patient-grouped k-fold cross-validation.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::record::EmbryoRecord;

/// Anything that belongs to a group which must never straddle a split.
pub trait Grouped {
    fn item_id(&self) -> &str;
    fn group_id(&self) -> &str;
}

impl Grouped for EmbryoRecord {
    fn item_id(&self) -> &str {
        &self.embryo_id
    }

    fn group_id(&self) -> &str {
        &self.patient_id
    }
}

impl<T: Grouped> Grouped for &T {
    fn item_id(&self) -> &str {
        (*self).item_id()
    }

    fn group_id(&self) -> &str {
        (*self).group_id()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    /// Item (embryo) id → fold index.
    pub fold_of: BTreeMap<String, usize>,
}

impl FoldAssignment {
    pub fn fold(&self, item_id: &str) -> Option<usize> {
        self.fold_of.get(item_id).copied()
    }
}

/// Shuffle the distinct patients with `seed` and deal them round-robin into
/// `k` folds; every embryo follows its patient.
pub fn grouped_kfold<R: Grouped>(records: &[R], k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::InvalidFoldCount(k));
    }
    let mut patients: Vec<&str> = records
        .iter()
        .map(|r| r.group_id())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if patients.len() < k {
        return Err(Error::TooFewPatients {
            folds: k,
            patients: patients.len(),
        });
    }
    patients.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let patient_fold: BTreeMap<&str, usize> = patients.iter().enumerate().map(|(i, p)| (*p, i % k)).collect();
    let mut fold_of = BTreeMap::new();
    for r in records {
        if fold_of
            .insert(r.item_id().to_string(), patient_fold[r.group_id()])
            .is_some()
        {
            return Err(Error::Config(format!("duplicate record id `{}`", r.item_id())));
        }
    }
    Ok(FoldAssignment { k, fold_of })
}

/// `(train, validation)` for one fold.
pub fn fold_split<'a, R: Grouped>(
    records: &'a [R],
    assignment: &FoldAssignment,
    fold_index: usize,
) -> Result<(Vec<&'a R>, Vec<&'a R>)> {
    if fold_index >= assignment.k {
        return Err(Error::FoldOutOfRange {
            index: fold_index,
            k: assignment.k,
        });
    }
    let mut train = Vec::new();
    let mut validation = Vec::new();
    for r in records {
        let fold = assignment
            .fold(r.item_id())
            .ok_or_else(|| Error::Config(format!("record `{}` missing from fold assignment", r.item_id())))?;
        if fold == fold_index {
            validation.push(r);
        } else {
            train.push(r);
        }
    }
    Ok((train, validation))
}

/// Fail if any group appears on both sides of a split.
pub fn assert_disjoint<A: Grouped, B: Grouped>(train: &[A], validation: &[B], fold: usize) -> Result<()> {
    let train_groups: BTreeSet<&str> = train.iter().map(|r| r.group_id()).collect();
    match validation.iter().find(|r| train_groups.contains(r.group_id())) {
        Some(r) => Err(Error::Leakage {
            patient: r.group_id().to_string(),
            fold,
        }),
        None => Ok(()),
    }
}
