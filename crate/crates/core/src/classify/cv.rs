use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::folds::FoldPlan;
use super::fusion::late_fuse;
use super::metrics::{ConfusionMatrix, N_CLASSES};
use super::scale::Standardizer;
use super::svm::{argmax, SvmModel, SvmOptions};
use crate::cohort::Diagnosis;
use crate::error::{bail, Result};

/// Records which subjects every fit consumed and refuses any fit that touches
/// the current fold's test subjects.
#[derive(Debug, Clone, Default)]
pub struct LeakageGuard {
    ids: Vec<String>,
    fold: usize,
    test: BTreeSet<usize>,
    /// `(fold, what, subject indices)` for every recorded fit.
    pub fits: Vec<(usize, String, Vec<usize>)>,
}

impl LeakageGuard {
    pub fn new(ids: &[String]) -> Self {
        Self { ids: ids.to_vec(), ..Self::default() }
    }

    pub fn begin_fold(&mut self, fold: usize, test: &[usize]) {
        self.fold = fold;
        self.test = test.iter().copied().collect();
    }

    pub fn record_fit(&mut self, what: &str, subjects: &[usize]) -> Result<()> {
        if let Some(&bad) = subjects.iter().find(|i| self.test.contains(i)) {
            let id = self.ids.get(bad).map_or("?", String::as_str);
            bail!(Leakage, "{what} in fold {} was fitted on test subject {id}", self.fold);
        }
        self.fits.push((self.fold, what.to_string(), subjects.to_vec()));
        Ok(())
    }
}

/// Feature rows of one extractor for a fold's training and test subjects, in
/// the order of the fold's index lists.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmFeatures {
    pub name: String,
    pub train: Vec<Vec<f64>>,
    pub test: Vec<Vec<f64>>,
}

/// A weighted late fusion of previously computed arms.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionSpec {
    pub name: String,
    pub arms: Vec<String>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubjectPrediction {
    pub subject: usize,
    pub fold: usize,
    pub truth: Diagnosis,
    pub proba: [f64; N_CLASSES],
    pub predicted: Diagnosis,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArmResult {
    pub name: String,
    pub per_fold: Vec<ConfusionMatrix>,
    pub pooled: ConfusionMatrix,
    pub predictions: Vec<SubjectPrediction>,
}

impl ArmResult {
    fn new(name: &str, k: usize) -> Self {
        Self { name: name.to_string(), per_fold: alloc::vec![ConfusionMatrix::default(); k], pooled: ConfusionMatrix::default(), predictions: Vec::new() }
    }

    fn push(&mut self, p: SubjectPrediction) {
        self.per_fold[p.fold].add(p.truth, p.predicted);
        self.pooled.add(p.truth, p.predicted);
        self.predictions.push(p);
    }

    /// UAR of the pooled confusion matrix, in percent.
    pub fn uar(&self) -> Result<f64> {
        self.pooled.uar()
    }
}

#[derive(Debug, Clone)]
pub struct CvOutcome {
    /// Extractor arms in the order first returned, then fusions.
    pub arms: Vec<ArmResult>,
    pub guard: LeakageGuard,
}

impl CvOutcome {
    pub fn arm(&self, name: &str) -> Option<&ArmResult> {
        self.arms.iter().find(|a| a.name == name)
    }
}

/// For every fold, asks `features` for per-arm train/test feature rows (the
/// callback must register its own fits with the guard), then standardizes,
/// trains and calibrates an SVM per arm on the training rows, scores the test
/// rows and fuses arms as requested. Test predictions are pooled across folds.
pub fn cross_validate<F>(
    ids: &[String],
    labels: &[Diagnosis],
    plan: &FoldPlan,
    svm: &SvmOptions,
    fusions: &[FusionSpec],
    mut features: F,
) -> Result<CvOutcome>
where
    F: FnMut(usize, &[usize], &[usize], &mut LeakageGuard) -> Result<Vec<ArmFeatures>>,
{
    if ids.len() != labels.len() {
        bail!(Shape, "{} ids but {} labels", ids.len(), labels.len());
    }
    let k = plan.k();
    let mut guard = LeakageGuard::new(ids);
    let mut arms: Vec<ArmResult> = Vec::new();
    for fold in 0..k {
        let test = plan.test(fold);
        let train = plan.train(fold);
        for c in Diagnosis::ALL {
            if !test.iter().any(|&i| labels[i] == c) {
                bail!(InsufficientData, "fold {fold} has no {c} test subject; re-stratify");
            }
        }
        guard.begin_fold(fold, test);
        let fold_arms = features(fold, &train, test, &mut guard)?;
        let train_labels: Vec<Diagnosis> = train.iter().map(|&i| labels[i]).collect();
        let mut probas: Vec<(String, Vec<[f64; N_CLASSES]>)> = Vec::new();
        for arm in &fold_arms {
            if arm.train.len() != train.len() || arm.test.len() != test.len() {
                bail!(Shape, "arm {} returned {}/{} rows for a {}/{} split", arm.name, arm.train.len(), arm.test.len(), train.len(), test.len());
            }
            guard.record_fit(&alloc::format!("{} scaler", arm.name), &train)?;
            let scaler = Standardizer::fit(&arm.train)?;
            let xtr = arm.train.iter().map(|r| scaler.transform(r)).collect::<Result<Vec<_>>>()?;
            guard.record_fit(&alloc::format!("{} svm", arm.name), &train)?;
            let model = SvmModel::fit(&xtr, &train_labels, svm)?;
            let p = arm
                .test
                .iter()
                .map(|r| model.predict_proba(&scaler.transform(r)?))
                .collect::<Result<Vec<_>>>()?;
            probas.push((arm.name.clone(), p));
        }
        for f in fusions {
            let members = f
                .arms
                .iter()
                .map(|n| probas.iter().find(|(m, _)| m == n).map(|(_, p)| p))
                .collect::<Option<Vec<_>>>();
            let Some(members) = members else {
                bail!(InsufficientData, "fusion {} refers to an arm that was not computed", f.name);
            };
            let fused = (0..test.len())
                .map(|t| {
                    let v: Vec<[f64; N_CLASSES]> = members.iter().map(|p| p[t]).collect();
                    let out = late_fuse(&v, &f.weights)?;
                    Ok([out[0], out[1], out[2]])
                })
                .collect::<Result<Vec<_>>>()?;
            probas.push((f.name.clone(), fused));
        }
        for (name, p) in probas {
            let pos = match arms.iter().position(|a| a.name == name) {
                Some(p) => p,
                None => {
                    arms.push(ArmResult::new(&name, k));
                    arms.len() - 1
                }
            };
            for (t, &i) in test.iter().enumerate() {
                arms[pos].push(SubjectPrediction {
                    subject: i,
                    fold,
                    truth: labels[i],
                    proba: p[t],
                    predicted: Diagnosis::ALL[argmax(&p[t])],
                });
            }
        }
    }
    Ok(CvOutcome { arms, guard })
}
