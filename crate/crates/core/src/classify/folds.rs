use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::metrics::N_CLASSES;
use crate::cohort::Diagnosis;
use crate::error::{bail, Result};
use crate::rng;

/// Disjoint, exhaustive folds of subject indices, stratified by label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub folds: Vec<Vec<usize>>,
    pub seed: u64,
}

impl FoldPlan {
    /// Shuffles each class (stream `cv-split`), concatenates the classes and
    /// deals the result round-robin, so every fold's class counts differ from
    /// the global proportions by less than one subject.
    pub fn stratified(labels: &[Diagnosis], k: usize, seed: u64) -> Result<Self> {
        if k < 2 {
            bail!(OutOfRange, "need at least 2 folds, got {k}");
        }
        let mut r = rng::stream(seed, "cv-split");
        let mut order = Vec::with_capacity(labels.len());
        for class in Diagnosis::ALL {
            let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
            if members.len() < k {
                bail!(
                    InsufficientData,
                    "class {class} has {} subjects, fewer than {k} folds; every fold needs every class",
                    members.len()
                );
            }
            members.shuffle(&mut r);
            order.extend(members);
        }
        let mut folds = alloc::vec![Vec::new(); k];
        for (pos, i) in order.into_iter().enumerate() {
            folds[pos % k].push(i);
        }
        folds.iter_mut().for_each(|f| f.sort_unstable());
        Ok(Self { folds, seed })
    }

    pub fn k(&self) -> usize {
        self.folds.len()
    }

    pub fn test(&self, fold: usize) -> &[usize] {
        &self.folds[fold]
    }

    pub fn train(&self, fold: usize) -> Vec<usize> {
        let mut t: Vec<usize> =
            self.folds.iter().enumerate().filter(|&(f, _)| f != fold).flat_map(|(_, v)| v.iter().copied()).collect();
        t.sort_unstable();
        t
    }

    pub fn class_counts(&self, fold: usize, labels: &[Diagnosis]) -> [usize; N_CLASSES] {
        let mut c = [0; N_CLASSES];
        for &i in &self.folds[fold] {
            c[labels[i].index()] += 1;
        }
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cohort_labels(counts: [usize; 3]) -> Vec<Diagnosis> {
        Diagnosis::ALL.iter().zip(counts).flat_map(|(&d, n)| core::iter::repeat(d).take(n)).collect()
    }

    #[test]
    fn seventy_subjects_split_into_fourteens() {
        let labels = cohort_labels([26, 23, 21]);
        let plan = FoldPlan::stratified(&labels, 5, 7).unwrap();
        let expected = [26.0 / 5.0, 23.0 / 5.0, 21.0 / 5.0];
        for f in 0..5 {
            assert_eq!(plan.test(f).len(), 14);
            let c = plan.class_counts(f, &labels);
            for k in 0..3 {
                assert!((c[k] as f64 - expected[k]).abs() <= 1.0, "fold {f} class {k}: {}", c[k]);
            }
        }
        let mut all: Vec<usize> = plan.folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..70).collect::<Vec<_>>());
    }

    #[test]
    fn train_is_the_complement_of_test() {
        let labels = cohort_labels([6, 5, 5]);
        let plan = FoldPlan::stratified(&labels, 5, 1).unwrap();
        for f in 0..5 {
            let train = plan.train(f);
            assert_eq!(train.len() + plan.test(f).len(), 16);
            assert!(plan.test(f).iter().all(|i| !train.contains(i)));
        }
    }

    #[test]
    fn too_small_class_is_rejected() {
        assert!(FoldPlan::stratified(&cohort_labels([6, 6, 4]), 5, 0).is_err());
    }

    #[test]
    fn seed_controls_the_split() {
        let labels = cohort_labels([10, 10, 10]);
        assert_eq!(FoldPlan::stratified(&labels, 5, 3), FoldPlan::stratified(&labels, 5, 3));
        assert_ne!(FoldPlan::stratified(&labels, 5, 3).unwrap().folds, FoldPlan::stratified(&labels, 5, 4).unwrap().folds);
    }
}
