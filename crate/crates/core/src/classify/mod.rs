//! Linear one-vs-rest SVMs with Platt calibration, late fusion, stratified
//! k-fold cross-validation and unweighted average recall.

mod cv;
mod folds;
mod fusion;
mod metrics;
mod platt;
mod scale;
mod svm;

pub use cv::{cross_validate, ArmFeatures, ArmResult, CvOutcome, FusionSpec, LeakageGuard, SubjectPrediction};
pub use folds::FoldPlan;
pub use fusion::late_fuse;
pub use metrics::{round2, uar_from_recalls, ConfusionMatrix, N_CLASSES};
pub use platt::Platt;
pub use scale::Standardizer;
pub use svm::{BinarySvm, SvmModel, SvmOptions};
