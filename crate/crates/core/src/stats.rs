//! Two-sample Student's t-tests, family-wise error correction and the
//! per-region comparison of reconstructed group images.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::cohort::Diagnosis;
use crate::error::{bail, Error, Result};
use crate::features::Extractor;
use crate::volume::{Atlas, Volume3D};

/// Regularized incomplete beta `I_x(a, b)` by Lentz's continued fraction,
/// using the symmetry `I_x(a, b) = 1 − I_{1−x}(b, a)` where it converges faster.
pub fn incomplete_beta(a: f64, b: f64, x: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) || !(0.0..=1.0).contains(&x) {
        bail!(OutOfRange, "incomplete beta needs a, b > 0 and x in [0, 1] (a={a}, b={b}, x={x})");
    }
    if x == 0.0 || x == 1.0 {
        return Ok(x);
    }
    let ln_front = libm::lgamma(a + b) - libm::lgamma(a) - libm::lgamma(b) + a * libm::log(x) + b * libm::log1p(-x);
    let front = libm::exp(ln_front);
    if x < (a + 1.0) / (a + b + 2.0) {
        Ok(front * beta_fraction(a, b, x)? / a)
    } else {
        Ok(1.0 - front * beta_fraction(b, a, 1.0 - x)? / b)
    }
}

fn beta_fraction(a: f64, b: f64, x: f64) -> Result<f64> {
    const TINY: f64 = 1e-300;
    let mut c = 1.0;
    let mut d = 1.0 - (a + b) * x / (a + 1.0);
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=1000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let num = m * (b - m) * x / ((a + m2 - 1.0) * (a + m2));
        d = 1.0 + num * d;
        d = if d.abs() < TINY { 1.0 / TINY } else { 1.0 / d };
        c = 1.0 + num / c;
        if c.abs() < TINY {
            c = TINY;
        }
        h *= d * c;
        let num = -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1.0));
        d = 1.0 + num * d;
        d = if d.abs() < TINY { 1.0 / TINY } else { 1.0 / d };
        c = 1.0 + num / c;
        if c.abs() < TINY {
            c = TINY;
        }
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            return Ok(h);
        }
    }
    bail!(Degenerate, "incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")
}

/// `P(|T| ≥ |t|)` for Student's t with `df` degrees of freedom.
pub fn t_two_sided_p(t: f64, df: f64) -> Result<f64> {
    if !(df > 0.0) || t.is_nan() {
        bail!(OutOfRange, "t distribution needs df > 0 and a finite statistic");
    }
    if t.is_infinite() {
        return Ok(0.0);
    }
    incomplete_beta(df / 2.0, 0.5, df / (df + t * t))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTest {
    pub t: f64,
    pub p: f64,
    pub df: f64,
    /// Both groups had zero variance and equal means.
    pub degenerate: bool,
}

fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let ss: f64 = x.iter().map(|v| (v - m) * (v - m)).sum();
    (m, libm::sqrt(ss / (n - 1.0)))
}

/// Pooled-variance two-sample Student's t-test, `t > 0` when `a` has the
/// larger mean.
pub fn two_sided_t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() < 2 || b.len() < 2 {
        bail!(InsufficientData, "t-test needs at least 2 samples per group, got {} and {}", a.len(), b.len());
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        bail!(OutOfRange, "t-test samples must be finite");
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ma, sa) = mean_sd(a);
    let (mb, sb) = mean_sd(b);
    let df = na + nb - 2.0;
    let pooled = ((na - 1.0) * sa * sa + (nb - 1.0) * sb * sb) / df;
    let scale = ma.abs().max(mb.abs()).max(1.0);
    if pooled <= (1e-15 * scale) * (1e-15 * scale) {
        if ma == mb {
            return Ok(TTest { t: 0.0, p: 1.0, df, degenerate: true });
        }
        bail!(Degenerate, "t-test groups have zero variance but different means");
    }
    let t = (ma - mb) / libm::sqrt(pooled * (1.0 / na + 1.0 / nb));
    Ok(TTest { t, p: t_two_sided_p(t, df)?, df, degenerate: false })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Correction {
    None,
    Holm,
    Bonferroni,
}

impl Correction {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Holm => "holm",
            Self::Bonferroni => "bonferroni",
        }
    }
}

impl fmt::Display for Correction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Correction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" => Ok(Self::None),
            "holm" => Ok(Self::Holm),
            "bonferroni" => Ok(Self::Bonferroni),
            _ => Err(Error::OutOfRange(alloc::format!("unknown correction {s:?} (none|holm|bonferroni)"))),
        }
    }
}

/// Family-wise error adjusted p values, aligned with the input.
pub fn fwe_correct(p: &[f64], method: Correction) -> Result<Vec<f64>> {
    if p.iter().any(|v| !(0.0..=1.0).contains(v)) {
        bail!(OutOfRange, "p values must lie in [0, 1]");
    }
    let n = p.len() as f64;
    Ok(match method {
        Correction::None => p.to_vec(),
        Correction::Bonferroni => p.iter().map(|v| (v * n).min(1.0)).collect(),
        Correction::Holm => {
            let mut order: Vec<usize> = (0..p.len()).collect();
            order.sort_by(|&i, &j| p[i].total_cmp(&p[j]).then(i.cmp(&j)));
            let mut out = alloc::vec![0.0; p.len()];
            let mut running = 0.0f64;
            for (rank, &i) in order.iter().enumerate() {
                running = running.max(((n - rank as f64) * p[i]).min(1.0));
                out[i] = running;
            }
            out
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoiMeans {
    pub means: BTreeMap<u32, f64>,
    /// Regions named in the atlas without a single voxel.
    pub empty: Vec<u32>,
}

/// Mean value inside every atlas region; background never contributes.
pub fn roi_mean_activation(vol: &Volume3D, atlas: &Atlas) -> Result<RoiMeans> {
    if vol.dims() != atlas.dims() {
        bail!(Shape, "volume dims {:?} differ from atlas dims {:?}", vol.dims(), atlas.dims());
    }
    let mut acc: BTreeMap<u32, (f64, usize)> = BTreeMap::new();
    for (&label, &v) in atlas.labels().iter().zip(vol.data()) {
        if label != 0 {
            let e = acc.entry(label).or_insert((0.0, 0));
            e.0 += v;
            e.1 += 1;
        }
    }
    let means = acc.iter().map(|(&k, &(s, n))| (k, s / n as f64)).collect();
    let empty = atlas.names().keys().copied().filter(|k| !acc.contains_key(k)).collect();
    Ok(RoiMeans { means, empty })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoiStats {
    pub region_id: u32,
    pub name: String,
    /// Sample counts, means and standard deviations of (HC, AD).
    pub n: [usize; 2],
    pub mean: [f64; 2],
    pub sd: [f64; 2],
    pub t: f64,
    pub p_raw: f64,
    pub p_holm: f64,
    pub p_bonferroni: f64,
    pub degenerate: bool,
}

impl RoiStats {
    pub fn p(&self, method: Correction) -> f64 {
        match method {
            Correction::None => self.p_raw,
            Correction::Holm => self.p_holm,
            Correction::Bonferroni => self.p_bonferroni,
        }
    }

    /// `t / p` with three decimals, e.g. `2.183 / 0.034`.
    pub fn t_p_cell(&self, method: Correction) -> String {
        alloc::format!("{:.3} / {:.3}", self.t, self.p(method))
    }
}

/// HC-versus-AD t-test in every region present in all subjects' means,
/// ordered by region id. `t > 0` means larger values in HC.
pub fn compare_regions(hc: &[RoiMeans], ad: &[RoiMeans], atlas: &Atlas) -> Result<Vec<RoiStats>> {
    if hc.len() < 2 || ad.len() < 2 {
        bail!(InsufficientData, "region comparison needs ≥ 2 subjects per group, got {} HC and {} AD", hc.len(), ad.len());
    }
    let regions: BTreeSet<u32> = hc.iter().chain(ad).flat_map(|m| m.means.keys().copied()).collect();
    let mut rows = Vec::new();
    for r in regions {
        let collect = |g: &[RoiMeans]| -> Option<Vec<f64>> { g.iter().map(|m| m.means.get(&r).copied()).collect() };
        let (Some(a), Some(b)) = (collect(hc), collect(ad)) else { continue };
        let test = two_sided_t_test(&a, &b)?;
        let (ma, sa) = mean_sd(&a);
        let (mb, sb) = mean_sd(&b);
        rows.push(RoiStats {
            region_id: r,
            name: atlas.name(r).unwrap_or_default().into(),
            n: [a.len(), b.len()],
            mean: [ma, mb],
            sd: [sa, sb],
            t: test.t,
            p_raw: test.p,
            p_holm: 0.0,
            p_bonferroni: 0.0,
            degenerate: test.degenerate,
        });
    }
    let raw: Vec<f64> = rows.iter().map(|s| s.p_raw).collect();
    let holm = fwe_correct(&raw, Correction::Holm)?;
    let bonf = fwe_correct(&raw, Correction::Bonferroni)?;
    for ((row, h), b) in rows.iter_mut().zip(holm).zip(bonf) {
        row.p_holm = h;
        row.p_bonferroni = b;
    }
    Ok(rows)
}

/// Per-extractor region statistics plus the overlap sections of the report.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminativeReport {
    pub alpha_level: f64,
    pub correction: Correction,
    pub extractors: Vec<(Extractor, Vec<RoiStats>)>,
    /// Significant for CAE and for at least one behavior-embedded model.
    pub cae_and_bsen: Vec<u32>,
    /// Significant for both behavior-embedded models but not CAE.
    pub bsen_only: Vec<u32>,
    /// Significant only for the CDR-embedded model.
    pub cdr_only: Vec<u32>,
    /// Significant only for the MMSE-embedded model.
    pub mmse_only: Vec<u32>,
}

impl DiscriminativeReport {
    pub fn stats(&self, e: Extractor) -> Option<&[RoiStats]> {
        self.extractors.iter().find(|(x, _)| *x == e).map(|(_, s)| s.as_slice())
    }

    /// Rows of one extractor by decreasing `|t|` (ties by region id).
    pub fn ranked(&self, e: Extractor) -> Vec<&RoiStats> {
        let mut rows: Vec<&RoiStats> = self.stats(e).map(|s| s.iter().collect()).unwrap_or_default();
        rows.sort_by(|a, b| b.t.abs().total_cmp(&a.t.abs()).then(a.region_id.cmp(&b.region_id)));
        rows
    }

    pub fn significant(&self, e: Extractor) -> BTreeSet<u32> {
        self.stats(e)
            .map(|s| s.iter().filter(|r| r.p(self.correction) < self.alpha_level).map(|r| r.region_id).collect())
            .unwrap_or_default()
    }
}

/// Region statistics of HC versus AD on every extractor's per-subject
/// images (reconstructions), with the overlap sections computed at
/// `alpha_level` under `correction`.
pub fn discriminative_report(
    images: &[(Extractor, Vec<Volume3D>)],
    labels: &[Diagnosis],
    atlas: &Atlas,
    alpha_level: f64,
    correction: Correction,
) -> Result<DiscriminativeReport> {
    if !(alpha_level > 0.0 && alpha_level < 1.0) {
        bail!(OutOfRange, "significance level must lie in (0, 1), got {alpha_level}");
    }
    let mut extractors = Vec::new();
    for (e, vols) in images {
        if vols.len() != labels.len() {
            bail!(Shape, "{e}: {} images for {} subjects", vols.len(), labels.len());
        }
        let mut hc = Vec::new();
        let mut ad = Vec::new();
        for (v, &l) in vols.iter().zip(labels) {
            match l {
                Diagnosis::Hc => hc.push(roi_mean_activation(v, atlas)?),
                Diagnosis::Ad => ad.push(roi_mean_activation(v, atlas)?),
                Diagnosis::Mci => {}
            }
        }
        extractors.push((*e, compare_regions(&hc, &ad, atlas)?));
    }
    let mut report = DiscriminativeReport {
        alpha_level,
        correction,
        extractors,
        cae_and_bsen: Vec::new(),
        bsen_only: Vec::new(),
        cdr_only: Vec::new(),
        mmse_only: Vec::new(),
    };
    let cae = report.significant(Extractor::Cae);
    let cdr = report.significant(Extractor::BsenCdr);
    let mmse = report.significant(Extractor::BsenMmse);
    let all: BTreeSet<u32> = cae.iter().chain(&cdr).chain(&mmse).copied().collect();
    for r in all {
        let (a, c, m) = (cae.contains(&r), cdr.contains(&r), mmse.contains(&r));
        match (a, c, m) {
            (true, true, _) | (true, _, true) => report.cae_and_bsen.push(r),
            (false, true, true) => report.bsen_only.push(r),
            (false, true, false) => report.cdr_only.push(r),
            (false, false, true) => report.mmse_only.push(r),
            _ => {}
        }
    }
    Ok(report)
}
