use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// One train/test partition.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SplitMode {
    /// Shuffle with `seed`, halve, and train on each half to test on the
    /// other.
    TwoFold { seed: u64 },
    /// A fixed partition, usually from [`parse_split_file`].
    Prescribed(Fold),
}

/// Parses newline-separated ids under `train:` and `test:` markers. Blank
/// lines and `#` comments are ignored.
pub fn parse_split_file(text: &str) -> Result<Fold> {
    let mut fold = Fold {
        train: Vec::new(),
        test: Vec::new(),
    };
    let mut section: Option<bool> = None;
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match line {
            "train:" => section = Some(true),
            "test:" => section = Some(false),
            id => match section {
                Some(true) => fold.train.push(id.to_string()),
                Some(false) => fold.test.push(id.to_string()),
                None => {
                    return Err(Error::format(
                        format!("split line {}", n + 1),
                        "id before any `train:` or `test:` marker",
                    ))
                }
            },
        }
    }
    let train: HashSet<_> = fold.train.iter().collect();
    if let Some(dup) = fold.test.iter().find(|id| train.contains(id)) {
        return Err(Error::format("split", format!("`{dup}` is in both train and test")));
    }
    Ok(fold)
}

/// Partitions `ids` into folds.
///
/// Two-fold mode returns two folds whose test sets are the two halves. A
/// prescribed split must only reference known ids.
pub fn split_dataset(ids: &[String], mode: &SplitMode) -> Result<Vec<Fold>> {
    if ids.is_empty() {
        return Err(Error::Input("no image ids to split".into()));
    }
    match mode {
        SplitMode::TwoFold { seed } => {
            if ids.len() < 2 {
                return Err(Error::Input("two-fold split needs at least two images".into()));
            }
            let mut shuffled = ids.to_vec();
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(*seed));
            let second = shuffled.split_off(shuffled.len() / 2);
            Ok(vec![
                Fold {
                    train: shuffled.clone(),
                    test: second.clone(),
                },
                Fold {
                    train: second,
                    test: shuffled,
                },
            ])
        }
        SplitMode::Prescribed(fold) => {
            let known: HashSet<_> = ids.iter().collect();
            if let Some(unknown) = fold.train.iter().chain(&fold.test).find(|id| !known.contains(id)) {
                return Err(Error::Input(format!("split references unknown id `{unknown}`")));
            }
            Ok(vec![fold.clone()])
        }
    }
}
