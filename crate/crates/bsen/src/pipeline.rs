//! The subcommands as library functions, working on one run directory:
//!
//! ```text
//! folds.tsv  train_log.tsv  fold{k}/{cae,bsen_cdr,bsen_mmse}.ckpt
//! features/fold{k}/{EXTRACTOR}_{train,test}.tsv
//! classification/{results.tsv,confusion.json,table.md}
//! roi/{EXTRACTOR}.tsv  roi/report.md  report.md
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use bsen_core::classify::{cross_validate, ArmFeatures, ArmResult, FoldPlan, LeakageGuard};
use bsen_core::cohort::Cohort;
use bsen_core::experiment::{
    fold_arms, out_of_fold_reconstructions, prepare_cohort, train_fold, EmbeddedModel, ExperimentConfig, FoldModels,
    PreparedSubject,
};
use bsen_core::features::Extractor;
use bsen_core::model::BehaviorTest;
use bsen_core::stats::{discriminative_report, DiscriminativeReport};
use bsen_core::synth::{generate_cohort, SynthSpec};
use bsen_core::volume::Dims;

use crate::checkpoint::Checkpoint;
use crate::config::{sha256_hex, Provenance, RunConfig};
use crate::error::{Error, IoContext, Result};
use crate::tables;
use crate::volume_io::{align_atlas, load_atlas, load_cohort, save_atlas, save_volume4d, write_manifest};

/// Loaded cohort and everything derived from it deterministically.
pub struct Inputs {
    pub cohort: Cohort,
    pub grid: Dims,
    pub voxel_size_mm: [f64; 3],
    pub experiment: ExperimentConfig,
    pub prepared: Vec<PreparedSubject>,
    pub plan: FoldPlan,
}

pub fn load_inputs(cfg: &RunConfig) -> Result<Inputs> {
    cfg.validate()?;
    let manifest = cfg.require_manifest()?;
    let cohort = load_cohort(manifest)?;
    cohort.require_all_classes().map_err(|e| Error::data(manifest, e.to_string()))?;
    let first = cohort.scan_at(0)?;
    let (dims, voxel_size_mm) = (first.dims(), first.voxel_size_mm());
    let grid = cfg.grid(dims)?;
    let experiment = cfg.experiment(grid)?;
    let prepared = prepare_cohort(&cohort, &experiment).map_err(|e| Error::data(manifest, e.to_string()))?;
    let plan = FoldPlan::stratified(&cohort.labels(), cfg.folds, cfg.seed).map_err(|e| Error::data(manifest, e.to_string()))?;
    Ok(Inputs { cohort, grid, voxel_size_mm, experiment, prepared, plan })
}

pub fn checkpoint_path(out: &Path, fold: usize, e: Extractor) -> PathBuf {
    out.join(format!("fold{fold}")).join(format!("{}.ckpt", e.as_str().to_ascii_lowercase()))
}

fn embedded_extractor(t: BehaviorTest) -> Extractor {
    match t {
        BehaviorTest::Cdr => Extractor::BsenCdr,
        BehaviorTest::Mmse => Extractor::BsenMmse,
    }
}

fn folds_tsv(prov: &Provenance, inputs: &Inputs) -> String {
    let mut fold_of = vec![0; inputs.cohort.len()];
    for f in 0..inputs.plan.k() {
        for &i in inputs.plan.test(f) {
            fold_of[i] = f;
        }
    }
    let mut out = prov.comment();
    out.push_str("subject_id\tlabel\tfold\n");
    for (s, f) in inputs.cohort.subjects().iter().zip(fold_of) {
        let _ = writeln!(out, "{}\t{}\t{f}", s.subject_id, s.label);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub checkpoints: Vec<PathBuf>,
}

/// Stage 1 and the requested stage-2 models for every fold, saved as
/// checkpoints, plus the per-epoch loss log.
pub fn train(cfg: &RunConfig, mut progress: impl FnMut(&str)) -> Result<TrainSummary> {
    let inputs = load_inputs(cfg)?;
    let out = cfg.require_out()?;
    let prov = cfg.provenance();
    let tests = inputs.experiment.behavior_tests();
    tables::write_text(&out.join("folds.tsv"), &folds_tsv(&prov, &inputs))?;
    let mut log = prov.comment();
    log.push_str("fold\tmodel\tepoch\treconstruction\tcontrastive\n");
    let mut checkpoints = Vec::new();
    for fold in 0..inputs.plan.k() {
        progress(&format!("training fold {}/{}", fold + 1, inputs.plan.k()));
        let train = inputs.plan.train(fold);
        let model_cfg = inputs.experiment.fold_model(fold);
        let (models, reports) =
            train_fold(&model_cfg, fold, inputs.cohort.subjects(), &inputs.prepared, &train, &tests)?;
        let stage1 = std::iter::once((Extractor::Cae, &reports.stage1));
        let stage2 = reports.stage2.iter().map(|(t, r)| (embedded_extractor(*t), r));
        for (e, report) in stage1.chain(stage2) {
            for ep in &report.epochs {
                let _ = writeln!(log, "{fold}\t{e}\t{}\t{}\t{}", ep.epoch + 1, ep.reconstruction, ep.contrastive);
            }
        }
        let mut save = |e: Extractor, ckpt: Checkpoint| -> Result<()> {
            let path = checkpoint_path(out, fold, e);
            ckpt.save(&path)?;
            checkpoints.push(path);
            Ok(())
        };
        let epoch = model_cfg.epochs;
        let hash = prov.config_hash.clone();
        save(
            Extractor::Cae,
            Checkpoint { model: models.cae, centers: None, behavior_test: None, epoch, fold: Some(fold), config_hash: hash.clone() },
        )?;
        for m in models.embedded {
            save(
                embedded_extractor(m.test),
                Checkpoint {
                    model: m.model,
                    centers: Some(m.centers),
                    behavior_test: Some(m.test),
                    epoch,
                    fold: Some(fold),
                    config_hash: hash.clone(),
                },
            )?;
        }
    }
    tables::write_text(&out.join("train_log.tsv"), &log)?;
    Ok(TrainSummary { checkpoints })
}

fn load_fold_models(out: &Path, fold: usize, needed: &[Extractor], grid: Dims) -> Result<Option<FoldModels>> {
    if !needed.iter().any(|e| e.is_network()) {
        return Ok(None);
    }
    let load = |e: Extractor| -> Result<Checkpoint> {
        let path = checkpoint_path(out, fold, e);
        if !path.exists() {
            return Err(Error::data(&path, format!("missing {e} checkpoint; run `bsen train` with the same --out first")));
        }
        let ckpt = Checkpoint::load(&path)?;
        if ckpt.model.config.input_dims != grid {
            return Err(Error::data(&path, format!("checkpoint grid {:?} does not match the data grid {grid:?}", ckpt.model.config.input_dims)));
        }
        Ok(ckpt)
    };
    // the stage-1 model is needed for the CAE arm only, but fold models always carry one
    let cae = load(Extractor::Cae)?.model;
    let mut embedded = Vec::new();
    for &e in needed {
        let test = match e {
            Extractor::BsenCdr => BehaviorTest::Cdr,
            Extractor::BsenMmse => BehaviorTest::Mmse,
            _ => continue,
        };
        let c = load(e)?;
        let centers = c.centers.ok_or_else(|| Error::data(checkpoint_path(out, fold, e), "checkpoint has no centers block"))?;
        embedded.push(EmbeddedModel { test, model: c.model, centers });
    }
    Ok(Some(FoldModels { fold, cae, embedded }))
}

fn feature_path(out: &Path, fold: usize, e: Extractor, split: &str) -> PathBuf {
    out.join("features").join(format!("fold{fold}")).join(format!("{}_{split}.tsv", e.as_str()))
}

/// Feature tables of every selected extractor; PCA and ICA are fitted here
/// on each fold's training subjects.
pub fn extract(cfg: &RunConfig, mut progress: impl FnMut(&str)) -> Result<()> {
    let inputs = load_inputs(cfg)?;
    let out = cfg.require_out()?;
    let prov = cfg.provenance();
    let ids = inputs.cohort.ids();
    let mut guard = LeakageGuard::new(&ids);
    for fold in 0..inputs.plan.k() {
        progress(&format!("extracting fold {}/{}", fold + 1, inputs.plan.k()));
        let (train, test) = (inputs.plan.train(fold), inputs.plan.test(fold).to_vec());
        guard.begin_fold(fold, &test);
        let models = load_fold_models(out, fold, &inputs.experiment.extractors, inputs.grid)?;
        let (arms, _) = fold_arms(&inputs.experiment, fold, &inputs.prepared, &train, &test, models.as_ref(), &mut guard)?;
        for (arm, &e) in arms.iter().zip(&inputs.experiment.extractors) {
            for (split, idx, rows) in [("train", &train, &arm.train), ("test", &test, &arm.test)] {
                let sub: Vec<&str> = idx.iter().map(|&i| ids[i].as_str()).collect();
                tables::write_features(&feature_path(out, fold, e, split), &prov, e, &sub, rows)?;
            }
        }
    }
    Ok(())
}

fn read_split(out: &Path, fold: usize, e: Extractor, split: &str, expected: &[&str]) -> Result<Vec<Vec<f64>>> {
    let path = feature_path(out, fold, e, split);
    if !path.exists() {
        return Err(Error::data(&path, format!("missing {e} features; run `bsen extract` first")));
    }
    let rows = tables::read_features(&path, e)?;
    let got: Vec<&str> = rows.iter().map(|(id, _)| id.as_str()).collect();
    if got != expected {
        return Err(Error::data(&path, "subjects differ from this fold's split; features were made with another seed or manifest"));
    }
    Ok(rows.into_iter().map(|(_, v)| v).collect())
}

/// SVM scoring of the saved feature tables and of the fused arm.
pub fn classify(cfg: &RunConfig) -> Result<Vec<ArmResult>> {
    let inputs = load_inputs(cfg)?;
    let out = cfg.require_out()?;
    let prov = cfg.provenance();
    let ids = inputs.cohort.ids();
    let labels = inputs.cohort.labels();
    let exp = &inputs.experiment;
    let names = |idx: &[usize]| idx.iter().map(|&i| ids[i].as_str()).collect::<Vec<_>>();
    let mut tables_by_fold = Vec::new();
    for fold in 0..inputs.plan.k() {
        let (train, test) = (names(&inputs.plan.train(fold)), names(inputs.plan.test(fold)));
        let mut arms = Vec::new();
        for &e in &exp.extractors {
            let tr = read_split(out, fold, e, "train", &train)?;
            let te = read_split(out, fold, e, "test", &test)?;
            arms.push(ArmFeatures { name: e.to_string(), train: tr, test: te });
        }
        tables_by_fold.push(arms);
    }
    let cv = cross_validate(&ids, &labels, &inputs.plan, &exp.svm, &exp.fusions(), |fold, train, _, guard| {
        for e in &exp.extractors {
            guard.record_fit(e.as_str(), train)?;
        }
        Ok(std::mem::take(&mut tables_by_fold[fold]))
    })?;
    let dir = out.join("classification");
    tables::write_text(&dir.join("results.tsv"), &tables::results_tsv(&prov, &cv.arms)?)?;
    tables::write_text(&dir.join("confusion.json"), &tables::confusion_json(&prov, &cv.arms))?;
    tables::write_text(&dir.join("table.md"), &tables::classification_markdown(&prov, &cv.arms)?)?;
    Ok(cv.arms)
}

/// Region statistics of out-of-fold reconstructions for every selected network.
pub fn roi(cfg: &RunConfig, mut progress: impl FnMut(&str)) -> Result<DiscriminativeReport> {
    let inputs = load_inputs(cfg)?;
    let out = cfg.require_out()?;
    let atlas_path = cfg.require_atlas()?;
    let names = atlas_names_path(atlas_path);
    let atlas = load_atlas(atlas_path, &names, None)?;
    if atlas.dims().iter().zip(&inputs.grid).any(|(a, g)| a > g) {
        return Err(Error::data(atlas_path, format!("atlas grid {:?} exceeds the network grid {:?}", atlas.dims(), inputs.grid)));
    }
    let atlas = align_atlas(&atlas, inputs.grid)?;
    let prov = cfg.provenance();
    let networks: Vec<Extractor> = inputs.experiment.extractors.iter().copied().filter(|e| e.is_network()).collect();
    if networks.is_empty() {
        return Err(Error::usage("the region report needs at least one of cae, bsen_cdr, bsen_mmse"));
    }
    let mut models = Vec::new();
    for fold in 0..inputs.plan.k() {
        progress(&format!("loading fold {}/{}", fold + 1, inputs.plan.k()));
        models.extend(load_fold_models(out, fold, &networks, inputs.grid)?);
    }
    let mut images = Vec::new();
    for &e in &networks {
        progress(&format!("reconstructing with {e}"));
        images.push((e, out_of_fold_reconstructions(e, &inputs.plan, &models, &inputs.prepared, inputs.voxel_size_mm)?));
    }
    let report = discriminative_report(&images, &inputs.cohort.labels(), &atlas, cfg.alpha_level, cfg.correction()?)?;
    let dir = out.join("roi");
    for (e, rows) in &report.extractors {
        tables::write_text(&dir.join(format!("{}.tsv", e.as_str())), &tables::roi_tsv(&prov, rows))?;
    }
    tables::write_text(&dir.join("report.md"), &tables::roi_markdown(&prov, &report, 10))?;
    Ok(report)
}

/// `atlas.vol` → `atlas.tsv`.
pub fn atlas_names_path(labels: &Path) -> PathBuf {
    let s = labels.to_string_lossy();
    let stem = s.strip_suffix(".vol.json").or_else(|| s.strip_suffix(".vol")).unwrap_or(&s);
    PathBuf::from(format!("{stem}.tsv"))
}

/// Collects the classification table and region report into `report.md`.
pub fn report(cfg: &RunConfig) -> Result<PathBuf> {
    cfg.validate()?;
    let out = cfg.require_out()?;
    let prov = cfg.provenance();
    let mut doc = String::from("# BSEN run report\n\n");
    let _ = writeln!(doc, "- seed: {}\n- config hash: {}\n", prov.seed, prov.config_hash);
    let _ = writeln!(doc, "```toml\n{}```\n", toml::to_string(&RunConfig { manifest: None, atlas: None, out: None, ..cfg.clone() }).expect("config serializes"));
    let mut found = false;
    for part in [out.join("classification").join("table.md"), out.join("roi").join("report.md")] {
        if part.exists() {
            doc.push_str(&fs::read_to_string(&part).at(&part)?);
            doc.push('\n');
            found = true;
        }
    }
    if !found {
        return Err(Error::data(out, "nothing to report; run classify and/or roi first"));
    }
    let path = out.join("report.md");
    tables::write_text(&path, &doc)?;
    Ok(path)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOptions {
    pub spec: SynthSpec,
}

impl SynthOptions {
    pub fn provenance(&self) -> Provenance {
        Provenance { seed: self.spec.seed, config_hash: sha256_hex(format!("{:?}", self.spec).as_bytes()) }
    }
}

/// Writes a synthetic cohort: `manifest.csv`, `subjects/*.vol`, `atlas.vol`
/// with `atlas.tsv`, and the planted effects in `ground_truth.json`.
pub fn synth(opts: &SynthOptions, out: &Path) -> Result<Cohort> {
    let syn = generate_cohort(&opts.spec).map_err(|e| Error::usage(format!("invalid synthetic cohort: {e}")))?;
    let prov = opts.provenance();
    let mut records = syn.cohort.subjects().to_vec();
    for r in &mut records {
        r.volume_path = format!("subjects/{}", r.volume_path);
    }
    for (i, r) in records.iter().enumerate() {
        save_volume4d(&out.join(&r.volume_path), syn.cohort.scan_at(i)?, Some(&prov))?;
    }
    let cohort = Cohort::new(records)?;
    write_manifest(&out.join("manifest.csv"), &cohort)?;
    save_atlas(&out.join("atlas.vol"), &out.join("atlas.tsv"), &syn.atlas, opts.spec.voxel_size_mm, Some(&prov))?;
    let effects: Vec<serde_json::Value> = syn
        .effects
        .iter()
        .map(|e| {
            serde_json::json!({
                "region_id": e.region,
                "name": syn.atlas.name(e.region),
                "amplitude": { "HC": e.amplitude[0], "MCI": e.amplitude[1], "AD": e.amplitude[2] },
            })
        })
        .collect();
    let truth = serde_json::json!({
        "seed": prov.seed,
        "config_hash": prov.config_hash,
        "dims": opts.spec.dims,
        "nt": opts.spec.nt,
        "class_sizes": { "HC": opts.spec.class_sizes[0], "MCI": opts.spec.class_sizes[1], "AD": opts.spec.class_sizes[2] },
        "noise_sd": opts.spec.noise_sd,
        "field_sd": opts.spec.field_sd,
        "effects": effects,
    });
    tables::write_text(&out.join("ground_truth.json"), &(serde_json::to_string_pretty(&truth).expect("json") + "\n"))?;
    Ok(cohort)
}
