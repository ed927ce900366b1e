//! The cross-validated experiment: data preparation, per-fold two-stage
//! training of the CAE and the behavior-embedded models, feature arms for
//! every extractor, SVM scoring with fusion, and out-of-fold reconstructions
//! for the region analysis. Nothing here touches the file system.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::classify::{cross_validate, ArmFeatures, CvOutcome, FoldPlan, FusionSpec, LeakageGuard, SvmOptions};
use crate::cohort::{Cohort, Diagnosis, SubjectRecord};
use crate::error::{bail, Result};
use crate::features::{extract_features, Extractor, FastIca, Pca};
use crate::linalg::Matrix;
use crate::model::{binarize_behavior, train_stage1, train_stage2, BehaviorTest, Bsen, BsenConfig, CenterBank, TrainReport};
use crate::nn::Tensor5;
use crate::rng;
use crate::volume::{Volume3D, Volume4D};

/// Name of the fused arm.
pub const FUSION: &str = "BSEN_Fusion";

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: BsenConfig,
    pub folds: usize,
    /// 1-based inclusive frame window; `None` keeps every frame.
    pub window: Option<(usize, usize)>,
    pub extractors: Vec<Extractor>,
    /// Weights of the CDR- and MMSE-embedded models in the fused arm.
    pub fusion_weights: [f64; 2],
    /// Adds the fused arm when both behavior-embedded arms are present.
    pub fuse: bool,
    /// Requested PCA/ICA components, clamped to one less than the training size.
    pub components: usize,
    pub svm: SvmOptions,
}

impl ExperimentConfig {
    pub fn new(model: BsenConfig) -> Self {
        Self {
            model,
            folds: 5,
            window: None,
            extractors: Extractor::ALL.to_vec(),
            fusion_weights: [0.5, 0.5],
            fuse: true,
            components: 64,
            svm: SvmOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.folds < 2 {
            bail!(OutOfRange, "need at least 2 folds, got {}", self.folds);
        }
        if self.extractors.is_empty() {
            bail!(OutOfRange, "no extractors selected");
        }
        if self.components == 0 {
            bail!(OutOfRange, "PCA/ICA need at least one component");
        }
        if self.fusion_weights.iter().any(|w| !(*w >= 0.0)) || self.fusion_weights.iter().all(|&w| w == 0.0) {
            bail!(OutOfRange, "fusion weights must be non-negative and not both zero");
        }
        Ok(())
    }

    pub fn behavior_tests(&self) -> Vec<BehaviorTest> {
        let mut t = Vec::new();
        if self.extractors.contains(&Extractor::BsenCdr) {
            t.push(BehaviorTest::Cdr);
        }
        if self.extractors.contains(&Extractor::BsenMmse) {
            t.push(BehaviorTest::Mmse);
        }
        t
    }

    pub fn needs_networks(&self) -> bool {
        self.extractors.iter().any(|e| e.is_network())
    }

    /// Fusion of the two behavior-embedded arms, when both are selected.
    pub fn fusions(&self) -> Vec<FusionSpec> {
        if !self.fuse || self.behavior_tests().len() < 2 {
            return Vec::new();
        }
        alloc::vec![FusionSpec {
            name: FUSION.to_string(),
            arms: alloc::vec![Extractor::BsenCdr.to_string(), Extractor::BsenMmse.to_string()],
            weights: self.fusion_weights.to_vec(),
        }]
    }

    /// Model configuration of one fold: same hyper-parameters, fold-specific seed.
    pub fn fold_model(&self, fold: usize) -> BsenConfig {
        BsenConfig { seed: rng::sub_seed(self.model.seed, &format!("fold/{fold}")), ..self.model.clone() }
    }
}

/// Network-ready inputs of one subject: every frame of the window and the
/// window average, each z-scored and then zero-padded to the model grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSubject {
    pub frames: Vec<Vec<f32>>,
    pub averaged: Vec<f32>,
}

fn to_input(v: &Volume3D, target: crate::volume::Dims) -> Result<Vec<f32>> {
    Ok(v.normalized().padded(target)?.data().iter().map(|&e| e as f32).collect())
}

pub fn prepare_scan(scan: &Volume4D, window: Option<(usize, usize)>, target: crate::volume::Dims) -> Result<PreparedSubject> {
    let scan = match window {
        Some((a, b)) => scan.select_time_window(a, b)?,
        None => scan.clone(),
    };
    let frames = (0..scan.nt()).map(|t| to_input(&scan.frame(t), target)).collect::<Result<Vec<_>>>()?;
    Ok(PreparedSubject { frames, averaged: to_input(&scan.time_average(), target)? })
}

pub fn prepare_cohort(cohort: &Cohort, config: &ExperimentConfig) -> Result<Vec<PreparedSubject>> {
    (0..cohort.len())
        .map(|i| prepare_scan(cohort.scan_at(i)?, config.window, config.model.input_dims))
        .collect()
}

pub fn subject_cluster(record: &SubjectRecord, test: BehaviorTest) -> Result<usize> {
    let value = match test {
        BehaviorTest::Cdr => record.cdr,
        BehaviorTest::Mmse => f64::from(record.mmse),
    };
    Ok(binarize_behavior(test, value)?.index())
}

/// A trained behavior-embedded model with its centers.
#[derive(Debug, Clone)]
pub struct EmbeddedModel {
    pub test: BehaviorTest,
    pub model: Bsen<f32>,
    pub centers: CenterBank,
}

#[derive(Debug, Clone)]
pub struct FoldModels {
    pub fold: usize,
    /// The stage-1 autoencoder, which is also the starting point of stage 2.
    pub cae: Bsen<f32>,
    pub embedded: Vec<EmbeddedModel>,
}

/// Loss histories of one fold: stage 1, then stage 2 per behavior test.
#[derive(Debug, Clone)]
pub struct FoldReports {
    pub stage1: TrainReport,
    pub stage2: Vec<(BehaviorTest, TrainReport)>,
}

impl FoldModels {
    pub fn network(&self, e: Extractor) -> Option<&Bsen<f32>> {
        match e {
            Extractor::Cae => Some(&self.cae),
            Extractor::BsenCdr => self.embedded.iter().find(|m| m.test == BehaviorTest::Cdr).map(|m| &m.model),
            Extractor::BsenMmse => self.embedded.iter().find(|m| m.test == BehaviorTest::Mmse).map(|m| &m.model),
            _ => None,
        }
    }
}

/// Stage 1 on the training subjects' frames, then stage 2 once per behavior
/// test from that same stage-1 model. Each frame inherits its subject's cluster.
pub fn train_fold(
    config: &BsenConfig,
    fold: usize,
    records: &[SubjectRecord],
    prepared: &[PreparedSubject],
    train: &[usize],
    tests: &[BehaviorTest],
) -> Result<(FoldModels, FoldReports)> {
    let frames: Vec<&[f32]> =
        train.iter().flat_map(|&i| prepared[i].frames.iter().map(Vec::as_slice)).collect();
    let mut cae = Bsen::build(config)?;
    let stage1 = train_stage1(&mut cae, &frames)?;
    let mut embedded = Vec::new();
    let mut stage2 = Vec::new();
    for &test in tests {
        let mut clusters = Vec::with_capacity(frames.len());
        for &i in train {
            let c = subject_cluster(&records[i], test)?;
            clusters.extend(core::iter::repeat(c).take(prepared[i].frames.len()));
        }
        let mut model = cae.clone();
        let (centers, report) = train_stage2(&mut model, &frames, &clusters)?;
        embedded.push(EmbeddedModel { test, model, centers });
        stage2.push((test, report));
    }
    Ok((FoldModels { fold, cae, embedded }, FoldReports { stage1, stage2 }))
}

fn flatten(prepared: &[PreparedSubject], idx: &[usize]) -> Result<Matrix> {
    let rows: Vec<Vec<f64>> = idx.iter().map(|&i| prepared[i].averaged.iter().map(|&v| f64::from(v)).collect()).collect();
    Matrix::from_rows(&rows)
}

/// Per-fold diagnostics of the linear baselines.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineInfo {
    pub fold: usize,
    pub components: usize,
    pub ica_converged: Option<bool>,
}

/// Feature rows of every selected extractor for one fold. Network arms use
/// the supplied fold models; PCA and ICA are fitted here on training rows.
pub fn fold_arms(
    config: &ExperimentConfig,
    fold: usize,
    prepared: &[PreparedSubject],
    train: &[usize],
    test: &[usize],
    models: Option<&FoldModels>,
    guard: &mut LeakageGuard,
) -> Result<(Vec<ArmFeatures>, BaselineInfo)> {
    let mut arms = Vec::new();
    let k = config.components.min(train.len() - 1);
    let mut info = BaselineInfo { fold, components: k, ica_converged: None };
    let averaged = |idx: &[usize]| -> Vec<&[f32]> { idx.iter().map(|&i| prepared[i].averaged.as_slice()).collect() };
    for &e in &config.extractors {
        let (tr, te) = match e {
            Extractor::Pca | Extractor::Ica => {
                guard.record_fit(e.as_str(), train)?;
                let xtr = flatten(prepared, train)?;
                let xte = flatten(prepared, test)?;
                if e == Extractor::Pca {
                    let pca = Pca::fit(&xtr, k)?;
                    let t = |x: &Matrix| (0..x.rows).map(|i| pca.transform(x.row(i))).collect::<Result<Vec<_>>>();
                    (t(&xtr)?, t(&xte)?)
                } else {
                    let mut r = rng::stream(config.model.seed, &format!("ica/fold/{fold}"));
                    let ica = FastIca::fit(&xtr, k, &mut r)?;
                    info.ica_converged = Some(ica.converged);
                    let t = |x: &Matrix| (0..x.rows).map(|i| ica.transform(x.row(i))).collect::<Result<Vec<_>>>();
                    (t(&xtr)?, t(&xte)?)
                }
            }
            _ => {
                let Some(net) = models.and_then(|m| m.network(e)) else {
                    bail!(InsufficientData, "no trained {e} model for fold {fold}");
                };
                (extract_features(net, &averaged(train))?, extract_features(net, &averaged(test))?)
            }
        };
        arms.push(ArmFeatures { name: e.to_string(), train: tr, test: te });
    }
    Ok((arms, info))
}

pub struct ExperimentOutcome {
    pub plan: FoldPlan,
    pub cv: CvOutcome,
    pub models: Vec<FoldModels>,
    pub reports: Vec<FoldReports>,
    pub baselines: Vec<BaselineInfo>,
}

/// Runs the full cross-validated experiment. `progress` is told about each
/// fold before its training starts.
pub fn run_experiment(
    cohort: &Cohort,
    prepared: &[PreparedSubject],
    config: &ExperimentConfig,
    mut progress: impl FnMut(usize),
) -> Result<ExperimentOutcome> {
    config.validate()?;
    cohort.require_all_classes()?;
    if prepared.len() != cohort.len() {
        bail!(Shape, "{} prepared subjects for a cohort of {}", prepared.len(), cohort.len());
    }
    let labels = cohort.labels();
    let plan = FoldPlan::stratified(&labels, config.folds, config.model.seed)?;
    let ids = cohort.ids();
    let tests = config.behavior_tests();
    let mut models = Vec::new();
    let mut reports = Vec::new();
    let mut baselines = Vec::new();
    let cv = cross_validate(&ids, &labels, &plan, &config.svm, &config.fusions(), |fold, train, test, guard| {
        progress(fold);
        let fm = if config.needs_networks() {
            guard.record_fit("autoencoder", train)?;
            for t in &tests {
                guard.record_fit(&format!("BSEN_{t}"), train)?;
            }
            let (m, r) = train_fold(&config.fold_model(fold), fold, cohort.subjects(), prepared, train, &tests)?;
            reports.push(r);
            Some(m)
        } else {
            None
        };
        let (arms, info) = fold_arms(config, fold, prepared, train, test, fm.as_ref(), guard)?;
        baselines.push(info);
        models.extend(fm);
        Ok(arms)
    })?;
    Ok(ExperimentOutcome { plan, cv, models, reports, baselines })
}

/// Reconstructs every subject with the network of the fold in which it was
/// held out, so no subject's image passes through a model trained on it.
pub fn out_of_fold_reconstructions(
    extractor: Extractor,
    plan: &FoldPlan,
    models: &[FoldModels],
    prepared: &[PreparedSubject],
    voxel_size_mm: [f64; 3],
) -> Result<Vec<Volume3D>> {
    let mut out: Vec<Option<Volume3D>> = alloc::vec![None; prepared.len()];
    for fm in models {
        let Some(net) = fm.network(extractor) else {
            bail!(InsufficientData, "fold {} has no {extractor} model", fm.fold);
        };
        for &i in plan.test(fm.fold) {
            out[i] = Some(reconstruct_one(net, &prepared[i].averaged, voxel_size_mm)?);
        }
    }
    out.into_iter()
        .enumerate()
        .map(|(i, v)| v.ok_or_else(|| crate::Error::InsufficientData(format!("subject {i} was never held out"))))
        .collect()
}

pub fn reconstruct_one(net: &Bsen<f32>, input: &[f32], voxel_size_mm: [f64; 3]) -> Result<Volume3D> {
    let x = Tensor5::from_vec(net.input_shape(1), input.to_vec())?;
    let y = net.reconstruct(&x)?;
    Volume3D::new(net.config.input_dims, voxel_size_mm, y.data().iter().map(|&v| f64::from(v)).collect())
}

/// Labels with diagnosis-ordered names, e.g. for summaries.
pub fn label_names() -> [&'static str; 3] {
    Diagnosis::ALL.map(Diagnosis::as_str)
}

pub fn arm_names(config: &ExperimentConfig) -> Vec<String> {
    let mut n: Vec<String> = config.extractors.iter().map(ToString::to_string).collect();
    n.extend(config.fusions().into_iter().map(|f| f.name));
    n
}
