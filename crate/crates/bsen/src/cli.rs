//! `bsen <command> [flags]`. Flags override a `--config` TOML file, which
//! overrides the defaults. Exit status: 0 success, 1 usage error, 2 data error.

use std::ffi::OsString;
use std::path::PathBuf;

use bsen_core::synth::SynthSpec;
use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::pipeline::{self, SynthOptions};
use crate::selfcheck;

#[derive(Debug, Parser)]
#[command(name = "bsen", version, about = "Behavior-score-embedded encoder network pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic cohort with planted effects.
    Synth(SynthArgs),
    /// Train the autoencoder and behavior-embedded models for every fold.
    Train(RunArgs),
    /// Write per-fold feature tables for every selected extractor.
    Extract(RunArgs),
    /// Cross-validated SVM scoring, confusion matrices and the UAR table.
    Classify(RunArgs),
    /// HC-versus-AD region statistics on out-of-fold reconstructions.
    Roi(RunArgs),
    /// Collect the classification table and region report into report.md.
    Report(RunArgs),
    /// Gradient checks, shape law and numeric oracles.
    Selfcheck,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// TOML file with any run setting; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    atlas: Option<PathBuf>,
    /// Run directory for checkpoints, tables and reports.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Train only one behavior-embedded model: cdr or mmse.
    #[arg(long)]
    behavior: Option<String>,
    /// Weight of the contrastive term.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr_stage1: Option<f64>,
    #[arg(long)]
    lr_stage2: Option<f64>,
    /// Comma-separated: ica,pca,cae,bsen_cdr,bsen_mmse,fusion.
    #[arg(long, value_delimiter = ',')]
    extractors: Option<Vec<String>>,
    /// Weights of the CDR and MMSE arms in the fusion: w1,w2.
    #[arg(long, value_delimiter = ',', num_args = 1)]
    fusion_weights: Option<Vec<f64>>,
    #[arg(long)]
    folds: Option<usize>,
    /// none, holm or bonferroni.
    #[arg(long)]
    stats_correction: Option<String>,
    /// Significance level of the region report.
    #[arg(long)]
    alpha_level: Option<f64>,
    /// 1-based inclusive frame window: start,end.
    #[arg(long, value_delimiter = ',', num_args = 1)]
    window: Option<Vec<usize>>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Frames per subject.
    #[arg(long)]
    nt: Option<usize>,
    /// Per-frame voxel noise.
    #[arg(long)]
    noise_sd: Option<f64>,
    /// Amplitude of each subject's smooth random field.
    #[arg(long)]
    field_sd: Option<f64>,
    /// Subjects per class: hc,mci,ad.
    #[arg(long, value_delimiter = ',', num_args = 1)]
    class_sizes: Option<Vec<usize>>,
}

impl RunArgs {
    fn resolve(self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::from_toml_file(p)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { c.$f = v.into(); } )* };
        }
        set!(seed, alpha, epochs, batch_size, lr_stage1, lr_stage2, folds, alpha_level);
        if self.manifest.is_some() {
            c.manifest = self.manifest;
        }
        if self.atlas.is_some() {
            c.atlas = self.atlas;
        }
        if self.out.is_some() {
            c.out = self.out;
        }
        if self.behavior.is_some() {
            c.behavior = self.behavior;
        }
        if let Some(v) = self.stats_correction {
            c.stats_correction = v;
        }
        if let Some(v) = self.extractors {
            c.extractors = v;
        }
        if let Some(w) = self.fusion_weights {
            let [a, b] = w[..] else {
                return Err(Error::usage(format!("--fusion-weights takes two numbers, got {}", w.len())));
            };
            c.fusion_weights = [a, b];
        }
        if let Some(w) = self.window {
            let [a, b] = w[..] else {
                return Err(Error::usage(format!("--window takes start,end, got {} numbers", w.len())));
            };
            c.window = Some([a, b]);
        }
        c.validate()?;
        Ok(c)
    }
}

fn say(msg: &str) {
    eprintln!("bsen: {msg}");
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Synth(a) => {
            let mut spec = SynthSpec { seed: a.seed, ..SynthSpec::default() };
            if let Some(v) = a.nt {
                spec.nt = v;
            }
            if let Some(v) = a.noise_sd {
                spec.noise_sd = v;
            }
            if let Some(v) = a.field_sd {
                spec.field_sd = v;
            }
            if let Some(v) = a.class_sizes {
                let [h, m, d] = v[..] else {
                    return Err(Error::usage("--class-sizes takes three numbers: hc,mci,ad"));
                };
                spec.class_sizes = [h, m, d];
            }
            let cohort = pipeline::synth(&SynthOptions { spec }, &a.out)?;
            say(&format!("wrote {} subjects to {}", cohort.len(), a.out.display()));
        }
        Command::Train(a) => {
            let s = pipeline::train(&a.resolve()?, say)?;
            say(&format!("wrote {} checkpoints", s.checkpoints.len()));
        }
        Command::Extract(a) => pipeline::extract(&a.resolve()?, say)?,
        Command::Classify(a) => {
            let cfg = a.resolve()?;
            for arm in pipeline::classify(&cfg)? {
                println!("{}\t{:.2}", arm.name, arm.uar()?);
            }
        }
        Command::Roi(a) => {
            let report = pipeline::roi(&a.resolve()?, say)?;
            for (e, _) in &report.extractors {
                if let Some(top) = report.ranked(*e).first() {
                    println!("{e}\t{}\t{}", top.name, top.t_p_cell(bsen_core::stats::Correction::None));
                }
            }
        }
        Command::Report(a) => {
            let path = pipeline::report(&a.resolve()?)?;
            println!("{}", path.display());
        }
        Command::Selfcheck => {
            let checks = selfcheck::run_all();
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            if checks.iter().any(|c| !c.passed) {
                return Err(Error::Data { path: PathBuf::from("selfcheck"), msg: "some checks failed".into() });
            }
        }
    }
    Ok(())
}

/// Parses `args` (program name first) and runs; returns the exit status.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("bsen: error: {e}");
            e.exit_code()
        }
    }
}
