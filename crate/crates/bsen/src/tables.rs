//! Tab-separated, JSON and Markdown outputs. Every file starts with (or
//! carries) the run's seed and configuration hash.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use bsen_core::classify::{round2, ArmResult, ConfusionMatrix, N_CLASSES};
use bsen_core::cohort::Diagnosis;
use bsen_core::features::Extractor;
use bsen_core::stats::{Correction, DiscriminativeReport, RoiStats};
use serde::Serialize;

use crate::config::Provenance;
use crate::error::{Error, IoContext, Result};

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).at(dir)?;
    }
    fs::write(path, text).at(path)
}

/// Lines of a TSV without `#` comments, split on tabs, header included.
pub fn read_tsv(path: &Path) -> Result<Vec<Vec<String>>> {
    let text = fs::read_to_string(path).at(path)?;
    Ok(text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.is_empty())
        .map(|l| l.split('\t').map(String::from).collect())
        .collect())
}

/// One row per subject: `subject_id, extractor, f0, f1, ...`.
pub fn write_features(path: &Path, prov: &Provenance, extractor: Extractor, ids: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut out = prov.comment();
    let dim = rows.first().map_or(0, Vec::len);
    out.push_str("subject_id\textractor");
    for k in 0..dim {
        let _ = write!(out, "\tf{k}");
    }
    out.push('\n');
    for (id, row) in ids.iter().zip(rows) {
        let _ = write!(out, "{id}\t{extractor}");
        for v in row {
            let _ = write!(out, "\t{v}");
        }
        out.push('\n');
    }
    write_text(path, &out)
}

/// Reads a feature table back as `(subject_id, values)` in file order.
pub fn read_features(path: &Path, extractor: Extractor) -> Result<Vec<(String, Vec<f64>)>> {
    let rows = read_tsv(path)?;
    let Some((header, body)) = rows.split_first() else {
        return Err(Error::data(path, "empty feature table"));
    };
    if header.len() < 2 || header[0] != "subject_id" || header[1] != "extractor" {
        return Err(Error::data(path, "feature table must start with subject_id and extractor columns"));
    }
    body.iter()
        .enumerate()
        .map(|(k, r)| {
            if r.len() != header.len() {
                return Err(Error::data(path, format!("row {}: {} columns, header has {}", k + 1, r.len(), header.len())));
            }
            if !r[1].eq_ignore_ascii_case(extractor.as_str()) {
                return Err(Error::data(path, format!("row {}: extractor {} where {extractor} expected", k + 1, r[1])));
            }
            let values = r[2..]
                .iter()
                .map(|v| v.parse::<f64>().map_err(|_| Error::data(path, format!("row {}: bad value {v:?}", k + 1))))
                .collect::<Result<Vec<_>>>()?;
            Ok((r[0].clone(), values))
        })
        .collect()
}

/// `extractor, fold, class, recall` rows per fold, then pooled recalls and
/// UAR rows (`fold = pooled`, `class = UAR`).
pub fn results_tsv(prov: &Provenance, arms: &[ArmResult]) -> Result<String> {
    let mut out = prov.comment();
    out.push_str("extractor\tfold\tclass\trecall\n");
    for arm in arms {
        for (f, cm) in arm.per_fold.iter().enumerate() {
            for (c, r) in cm.recalls()?.iter().enumerate() {
                let _ = writeln!(out, "{}\t{f}\t{}\t{:.2}", arm.name, class_name(c), r);
            }
            let _ = writeln!(out, "{}\t{f}\tUAR\t{:.2}", arm.name, cm.uar()?);
        }
        for (c, r) in arm.pooled.recalls()?.iter().enumerate() {
            let _ = writeln!(out, "{}\tpooled\t{}\t{:.2}", arm.name, class_name(c), r);
        }
        let _ = writeln!(out, "{}\tpooled\tUAR\t{:.2}", arm.name, arm.uar()?);
    }
    Ok(out)
}

fn class_name(c: usize) -> &'static str {
    Diagnosis::from_index(c).map_or("?", Diagnosis::as_str)
}

#[derive(Serialize)]
struct ConfusionJson<'a> {
    seed: u64,
    config_hash: &'a str,
    classes: [&'static str; N_CLASSES],
    /// Rows are true classes, columns predictions.
    arms: Vec<ArmConfusion<'a>>,
}

#[derive(Serialize)]
struct ArmConfusion<'a> {
    extractor: &'a str,
    pooled: [[u64; N_CLASSES]; N_CLASSES],
    folds: Vec<[[u64; N_CLASSES]; N_CLASSES]>,
}

pub fn confusion_json(prov: &Provenance, arms: &[ArmResult]) -> String {
    let doc = ConfusionJson {
        seed: prov.seed,
        config_hash: &prov.config_hash,
        classes: Diagnosis::ALL.map(Diagnosis::as_str),
        arms: arms
            .iter()
            .map(|a| ArmConfusion {
                extractor: &a.name,
                pooled: a.pooled.counts,
                folds: a.per_fold.iter().map(|c: &ConfusionMatrix| c.counts).collect(),
            })
            .collect(),
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("confusion serializes");
    s.push('\n');
    s
}

/// Recall per class and UAR, one column per extractor.
pub fn classification_markdown(prov: &Provenance, arms: &[ArmResult]) -> Result<String> {
    let mut out = String::from("## 3-class classification (pooled over folds)\n\n");
    let _ = writeln!(out, "seed {} · config {}\n", prov.seed, prov.config_hash);
    out.push_str("| Recall (%) |");
    for a in arms {
        let _ = write!(out, " {} |", a.name);
    }
    out.push_str("\n|---|");
    out.push_str(&"---:|".repeat(arms.len()));
    out.push('\n');
    let recalls = arms.iter().map(|a| a.pooled.recalls()).collect::<bsen_core::Result<Vec<_>>>()?;
    for c in 0..N_CLASSES {
        let _ = write!(out, "| {} |", class_name(c));
        for r in &recalls {
            let _ = write!(out, " {:.2} |", round2(r[c]));
        }
        out.push('\n');
    }
    out.push_str("| **UAR** |");
    for a in arms {
        let _ = write!(out, " **{:.2}** |", round2(a.uar()?));
    }
    out.push('\n');
    Ok(out)
}

/// `region_id, name, group, n, mean, sd, t, p_raw, p_holm, p_bonferroni`,
/// two rows (HC, AD) per region.
pub fn roi_tsv(prov: &Provenance, rows: &[RoiStats]) -> String {
    let mut out = prov.comment();
    out.push_str("region_id\tname\tgroup\tn\tmean\tsd\tt\tp_raw\tp_holm\tp_bonferroni\n");
    for r in rows {
        for (g, name) in ["HC", "AD"].iter().enumerate() {
            let _ = writeln!(
                out,
                "{}\t{}\t{name}\t{}\t{:.6}\t{:.6}\t{:.3}\t{:.3}\t{:.3}\t{:.3}",
                r.region_id, r.name, r.n[g], r.mean[g], r.sd[g], r.t, r.p_raw, r.p_holm, r.p_bonferroni
            );
        }
    }
    out
}

fn section(out: &mut String, title: &str, ids: &[u32], report: &DiscriminativeReport) {
    let _ = writeln!(out, "### {title}\n");
    if ids.is_empty() {
        out.push_str("_none_\n\n");
        return;
    }
    out.push_str("| Region |");
    for (e, _) in &report.extractors {
        let _ = write!(out, " {e} t / p |");
    }
    out.push_str("\n|---|");
    out.push_str(&"---:|".repeat(report.extractors.len()));
    out.push('\n');
    for id in ids {
        let name = report
            .extractors
            .iter()
            .find_map(|(_, s)| s.iter().find(|r| r.region_id == *id).map(|r| r.name.clone()))
            .unwrap_or_default();
        let _ = write!(out, "| {name} |");
        for (_, stats) in &report.extractors {
            match stats.iter().find(|r| r.region_id == *id) {
                Some(r) => {
                    let _ = write!(out, " {} |", r.t_p_cell(Correction::None));
                }
                None => out.push_str(" – |"),
            }
        }
        out.push('\n');
    }
    out.push('\n');
}

/// HC-versus-AD regions in four overlap sections, plus the strongest regions
/// of every extractor with raw and corrected p.
pub fn roi_markdown(prov: &Provenance, report: &DiscriminativeReport, top: usize) -> String {
    let mut out = String::from("## Discriminative regions, HC vs AD\n\n");
    let _ = writeln!(
        out,
        "seed {} · config {} · significance p < {} ({} correction); cells are t / raw p\n",
        prov.seed, prov.config_hash, report.alpha_level, report.correction
    );
    section(&mut out, "Significant in CAE and BSEN", &report.cae_and_bsen, report);
    section(&mut out, "Significant only in BSEN", &report.bsen_only, report);
    section(&mut out, "Significant only in BSEN_CDR", &report.cdr_only, report);
    section(&mut out, "Significant only in BSEN_MMSE", &report.mmse_only, report);
    for (e, _) in &report.extractors {
        let _ = writeln!(out, "### {e}: top {top} regions by |t|\n");
        out.push_str("| Region | t | p raw | p Holm | p Bonferroni |\n|---|---:|---:|---:|---:|\n");
        for r in report.ranked(*e).into_iter().take(top) {
            let _ = writeln!(out, "| {} | {:.3} | {:.3} | {:.3} | {:.3} |", r.name, r.t, r.p_raw, r.p_holm, r.p_bonferroni);
        }
        out.push('\n');
    }
    out
}
