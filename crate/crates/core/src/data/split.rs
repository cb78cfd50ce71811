use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::ensure;
use crate::Result;

/// One cross-validation fold. `labeled` is the subset of `train` whose clean
/// images may be used for supervised finetuning.
#[derive(Debug, Clone, PartialEq)]
pub struct Fold {
    pub train: Vec<String>,
    pub test: Vec<String>,
    pub labeled: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitPlan {
    pub folds: Vec<Fold>,
    pub labeled_train_patients: usize,
}

/// Patient-wise folds: the shuffled patients are dealt round-robin into
/// `n_folds` test sets; each fold's labeled subset is a seeded draw of
/// `labeled_k` of its training patients.
pub fn make_split(patients: &[String], n_folds: usize, labeled_k: usize, seed: u64) -> Result<SplitPlan> {
    let mut ids: Vec<String> = patients.to_vec();
    ids.sort();
    ids.dedup();
    ensure!(ids.len() == patients.len(), InvalidArgument, "duplicate patient ids");
    ensure!(n_folds >= 2, InvalidArgument, "need at least 2 folds, got {n_folds}");
    ensure!(n_folds <= ids.len(), InvalidArgument, "{n_folds} folds for {} patients", ids.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let mut tests = vec![Vec::new(); n_folds];
    for (i, id) in ids.iter().enumerate() {
        tests[i % n_folds].push(id.clone());
    }
    let mut folds = Vec::with_capacity(n_folds);
    for test in tests {
        let mut train: Vec<String> = ids.iter().filter(|p| !test.contains(p)).cloned().collect();
        ensure!(
            labeled_k <= train.len(),
            InvalidArgument,
            "labeled_k {labeled_k} exceeds the {} training patients of a fold",
            train.len()
        );
        train.sort();
        let mut pick = train.clone();
        pick.shuffle(&mut rng);
        let mut labeled: Vec<String> = pick.into_iter().take(labeled_k).collect();
        labeled.sort();
        let mut test = test;
        test.sort();
        folds.push(Fold { train, test, labeled });
    }
    Ok(SplitPlan {
        folds,
        labeled_train_patients: labeled_k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("L{i:03}")).collect()
    }

    #[test]
    fn ten_folds_hold_out_one_patient_each() {
        let plan = make_split(&ids(10), 10, 9, 0).unwrap();
        assert_eq!(plan.folds.len(), 10);
        let mut seen = Vec::new();
        for f in &plan.folds {
            assert_eq!(f.test.len(), 1);
            assert!(!f.train.contains(&f.test[0]));
            assert_eq!(f.labeled, f.train);
            seen.push(f.test[0].clone());
        }
        seen.sort();
        assert_eq!(seen, ids(10));
    }

    #[test]
    fn labeled_subset_is_restricted() {
        let plan = make_split(&ids(10), 5, 2, 4).unwrap();
        for f in &plan.folds {
            assert_eq!(f.labeled.len(), 2);
            assert_eq!(f.train.len(), 8);
            assert!(f.labeled.iter().all(|p| f.train.contains(p)));
        }
        assert_eq!(plan, make_split(&ids(10), 5, 2, 4).unwrap());
    }

    #[test]
    fn too_many_labeled_rejected() {
        assert!(make_split(&ids(10), 10, 10, 0).is_err());
    }
}
