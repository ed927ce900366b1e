//! Planted synthetic cohorts: the whole pipeline can be exercised without
//! clinical data, with known effect regions to recover.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::cohort::{Cohort, Diagnosis, SubjectRecord};
use crate::error::{bail, Result};
use crate::rng;
use crate::volume::{voxel_count, Atlas, Dims, Volume4D};

/// A normal distribution truncated to `[min, max]` and rounded to `step`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreDist {
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl ScoreDist {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let normal = Normal::new(self.mean, self.sd.max(1e-12)).expect("finite sd");
        let mut v = self.mean.clamp(self.min, self.max);
        for _ in 0..10_000 {
            let d = normal.sample(rng);
            if (self.min..=self.max).contains(&d) {
                v = d;
                break;
            }
        }
        (libm::round(v / self.step) * self.step).clamp(self.min, self.max)
    }
}

/// Class-conditional CDR and MMSE distributions, indexed HC/MCI/AD.
#[derive(Debug, Clone, PartialEq)]
pub struct BehaviorModel {
    pub cdr: [ScoreDist; 3],
    pub mmse: [ScoreDist; 3],
}

impl Default for BehaviorModel {
    /// Means, standard deviations and ranges of the original analysis cohort.
    fn default() -> Self {
        let cdr = |mean, sd, min, max| ScoreDist { mean, sd, min, max, step: 0.5 };
        let mmse = |mean, sd, min, max| ScoreDist { mean, sd, min, max, step: 1.0 };
        Self {
            cdr: [cdr(0.03, 0.14, 0.0, 0.5), cdr(0.24, 0.33, 0.0, 2.0), cdr(0.89, 0.45, 0.5, 2.0)],
            mmse: [mmse(27.58, 2.21, 23.0, 30.0), mmse(24.70, 3.83, 5.0, 29.0), mmse(14.48, 6.46, 6.0, 27.0)],
        }
    }
}

/// Additive offset inside one atlas region, per class (HC, MCI, AD).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectRegion {
    pub region: u32,
    pub amplitude: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub dims: Dims,
    pub voxel_size_mm: [f64; 3],
    pub nt: usize,
    pub class_sizes: [usize; 3],
    /// Atlas regions inside the brain mask, effect regions included.
    pub n_regions: u32,
    pub effects: Vec<EffectRegion>,
    pub behavior: BehaviorModel,
    /// Amplitude of each subject's smooth random field.
    pub field_sd: f64,
    /// Number of Gaussian blobs making up a subject field.
    pub field_blobs: usize,
    /// Per-frame, per-voxel Gaussian noise.
    pub noise_sd: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            dims: [16, 24, 16],
            voxel_size_mm: [3.0; 3],
            nt: 40,
            class_sizes: [26, 23, 21],
            n_regions: 90,
            effects: alloc::vec![
                // the single HC-versus-AD effect
                EffectRegion { region: 1, amplitude: [0.0, 0.6, 1.2] },
                // MCI-specific regions, equal in HC and AD
                EffectRegion { region: 2, amplitude: [0.0, 0.8, 0.0] },
                EffectRegion { region: 3, amplitude: [0.0, -0.8, 0.0] },
            ],
            behavior: BehaviorModel::default(),
            field_sd: 1.0,
            field_blobs: 8,
            noise_sd: 1.0,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|&d| d == 0 || d % 8 != 0) {
            bail!(Shape, "synthetic grid {:?} must be positive multiples of 8", self.dims);
        }
        if self.nt == 0 {
            bail!(OutOfRange, "synthetic scans need at least one frame");
        }
        if self.class_sizes.iter().any(|&n| n < 5) {
            bail!(OutOfRange, "every class needs at least 5 subjects, got {:?}", self.class_sizes);
        }
        if self.n_regions == 0 {
            bail!(OutOfRange, "atlas needs at least one region");
        }
        for e in &self.effects {
            if e.region == 0 || e.region > self.n_regions {
                bail!(OutOfRange, "effect region {} outside 1..={}", e.region, self.n_regions);
            }
            if e.amplitude.iter().any(|a| !a.is_finite()) {
                bail!(OutOfRange, "effect amplitudes must be finite");
            }
        }
        if !(self.noise_sd >= 0.0 && self.field_sd >= 0.0) {
            bail!(OutOfRange, "noise and field amplitudes must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthCohort {
    pub cohort: Cohort,
    pub atlas: Atlas,
    /// Brain mask, x-fastest.
    pub mask: Vec<bool>,
    pub effects: Vec<EffectRegion>,
}

fn ellipsoid_mask(dims: Dims) -> Vec<bool> {
    let [nx, ny, nz] = dims;
    let mut mask = Vec::with_capacity(voxel_count(dims));
    let half = |n: usize| n as f64 / 2.0;
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let r = |i: usize, n: usize| (i as f64 + 0.5 - half(n)) / (0.48 * n as f64);
                let d = r(x, nx) * r(x, nx) + r(y, ny) * r(y, ny) + r(z, nz) * r(z, nz);
                mask.push(d <= 1.0);
            }
        }
    }
    mask
}

fn coords(i: usize, dims: Dims) -> [f64; 3] {
    [(i % dims[0]) as f64, ((i / dims[0]) % dims[1]) as f64, (i / (dims[0] * dims[1])) as f64]
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest-seed parcellation of the mask with seeds drawn from the mask.
/// Region ids are assigned in seed order; every region owns its seed voxel.
fn voronoi_atlas<R: Rng + ?Sized>(dims: Dims, mask: &[bool], n: u32, rng: &mut R) -> Result<Atlas> {
    let inside: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
    if (n as usize) > inside.len() {
        bail!(OutOfRange, "{n} regions do not fit in {} brain voxels", inside.len());
    }
    let picks = rand::seq::index::sample(rng, inside.len(), n as usize);
    let seeds: Vec<[f64; 3]> = picks.iter().map(|k| coords(inside[k], dims)).collect();
    let mut labels = alloc::vec![0u32; mask.len()];
    for &i in &inside {
        let p = coords(i, dims);
        let mut best = (f64::INFINITY, 0);
        for (k, s) in seeds.iter().enumerate() {
            let d = dist2(&p, s);
            if d < best.0 {
                best = (d, k);
            }
        }
        labels[i] = best.1 as u32 + 1;
    }
    let names: BTreeMap<u32, String> = (1..=n).map(|k| (k, format!("Region_{k:03}"))).collect();
    Atlas::new(dims, labels, names)
}

/// Sum of Gaussian blobs with random centers, widths and signed amplitudes.
fn smooth_field<R: Rng + ?Sized>(dims: Dims, blobs: usize, sd: f64, rng: &mut R) -> Vec<f64> {
    let mut field = alloc::vec![0.0; voxel_count(dims)];
    if sd == 0.0 {
        return field;
    }
    for _ in 0..blobs {
        let c = [0, 1, 2].map(|a| rng.gen_range(0.0..dims[a] as f64));
        let width: f64 = rng.gen_range(1.5..4.0);
        let amp: f64 = sd * Distribution::<f64>::sample(&StandardNormal, rng);
        for (i, f) in field.iter_mut().enumerate() {
            let p = coords(i, dims);
            let d2 = dist2(&p, &c);
            *f += amp * libm::exp(-d2 / (2.0 * width * width));
        }
    }
    field
}

/// Generates subjects (ordered HC, MCI, AD), their scans and the atlas.
/// Each frame is `mask + subject field + class effects + noise` inside the
/// brain and zero outside. Stream names keep the atlas, the scores and every
/// subject's image independent of each other.
pub fn generate_cohort(spec: &SynthSpec) -> Result<SynthCohort> {
    spec.validate()?;
    let dims = spec.dims;
    let mask = ellipsoid_mask(dims);
    let atlas = voronoi_atlas(dims, &mask, spec.n_regions, &mut rng::stream(spec.seed, "synth/atlas"))?;
    let mut scores = rng::stream(spec.seed, "synth/scores");
    let mut records = Vec::new();
    let mut scans = Vec::new();
    let v = voxel_count(dims);
    for class in Diagnosis::ALL {
        let c = class.index();
        for k in 0..spec.class_sizes[c] {
            let id = format!("sub-{}{:03}", class.as_str().to_ascii_lowercase(), k + 1);
            let cdr = spec.behavior.cdr[c].sample(&mut scores);
            let mmse = spec.behavior.mmse[c].sample(&mut scores) as u8;
            let mut r = rng::stream(spec.seed, &format!("synth/subject/{id}"));
            let mut base = smooth_field(dims, spec.field_blobs, spec.field_sd, &mut r);
            for (i, b) in base.iter_mut().enumerate() {
                if !mask[i] {
                    *b = 0.0;
                    continue;
                }
                *b += 1.0;
                let label = atlas.labels()[i];
                for e in &spec.effects {
                    if e.region == label {
                        *b += e.amplitude[c];
                    }
                }
            }
            let mut data = Vec::with_capacity(v * spec.nt);
            for _ in 0..spec.nt {
                for (i, &b) in base.iter().enumerate() {
                    let noise = if mask[i] && spec.noise_sd > 0.0 {
                        spec.noise_sd * Distribution::<f64>::sample(&StandardNormal, &mut r)
                    } else {
                        0.0
                    };
                    data.push((b + noise) as f32);
                }
            }
            records.push(SubjectRecord { subject_id: id.clone(), label: class, cdr, mmse, volume_path: format!("{id}.vol") });
            scans.push((id, Volume4D::new(dims, spec.voxel_size_mm, spec.nt, data)?));
        }
    }
    let mut cohort = Cohort::new(records)?;
    for (id, scan) in scans {
        cohort.attach_scan(&id, scan)?;
    }
    Ok(SynthCohort { cohort, atlas, mask, effects: spec.effects.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{roi_mean_activation, two_sided_t_test};

    fn small(seed: u64) -> SynthSpec {
        SynthSpec { nt: 3, class_sizes: [6, 5, 5], n_regions: 20, seed, ..SynthSpec::default() }
    }

    #[test]
    fn same_seed_same_cohort() {
        let a = generate_cohort(&small(4)).unwrap();
        let b = generate_cohort(&small(4)).unwrap();
        assert_eq!(a.atlas, b.atlas);
        assert_eq!(a.cohort.subjects(), b.cohort.subjects());
        for i in 0..a.cohort.len() {
            assert_eq!(a.cohort.scan_at(i).unwrap().data(), b.cohort.scan_at(i).unwrap().data());
        }
        let c = generate_cohort(&small(5)).unwrap();
        assert_ne!(a.cohort.scan_at(0).unwrap().data(), c.cohort.scan_at(0).unwrap().data());
    }

    #[test]
    fn noise_free_effect_region_is_constant_within_class() {
        let spec = SynthSpec {
            noise_sd: 0.0,
            field_sd: 0.0,
            effects: alloc::vec![EffectRegion { region: 4, amplitude: [0.0, 1.0, 2.0] }],
            ..small(1)
        };
        let s = generate_cohort(&spec).unwrap();
        for (i, rec) in s.cohort.subjects().iter().enumerate() {
            let m = roi_mean_activation(&s.cohort.scan_at(i).unwrap().time_average(), &s.atlas).unwrap();
            assert!((m.means[&4] - (1.0 + [0.0, 1.0, 2.0][rec.label.index()])).abs() < 1e-12);
        }
    }

    #[test]
    fn scores_respect_ranges_and_correlate_with_class() {
        let s = generate_cohort(&SynthSpec { nt: 1, ..SynthSpec::default() }).unwrap();
        let mut cdr = [0.0; 3];
        for r in s.cohort.subjects() {
            r.validate().unwrap();
            let d = &BehaviorModel::default();
            assert!((d.cdr[r.label.index()].min..=d.cdr[r.label.index()].max).contains(&r.cdr));
            assert!(r.mmse <= 30 && r.cdr >= 0.0 && (r.cdr * 2.0).fract() == 0.0);
            cdr[r.label.index()] += r.cdr;
        }
        assert_eq!(s.cohort.class_counts(), [26, 23, 21]);
        assert!(cdr[0] / 26.0 < cdr[1] / 23.0 && cdr[1] / 23.0 < cdr[2] / 21.0);
    }

    #[test]
    fn three_sd_gap_is_detected_by_the_t_test() {
        let spec = SynthSpec {
            effects: alloc::vec![EffectRegion { region: 1, amplitude: [0.0, 0.0, 3.0] }],
            nt: 4,
            ..SynthSpec::default()
        };
        let s = generate_cohort(&spec).unwrap();
        let mut hc = Vec::new();
        let mut ad = Vec::new();
        for (i, r) in s.cohort.subjects().iter().enumerate() {
            let m = roi_mean_activation(&s.cohort.scan_at(i).unwrap().time_average(), &s.atlas).unwrap().means[&1];
            match r.label {
                Diagnosis::Hc => hc.push(m),
                Diagnosis::Ad => ad.push(m),
                Diagnosis::Mci => {}
            }
        }
        assert!(two_sided_t_test(&hc, &ad).unwrap().p < 0.001);
    }

    #[test]
    fn atlas_covers_the_mask_with_every_region() {
        let s = generate_cohort(&small(2)).unwrap();
        assert_eq!(s.atlas.region_ids(), (1..=20).collect::<Vec<u32>>());
        for (i, &m) in s.mask.iter().enumerate() {
            assert_eq!(m, s.atlas.labels()[i] != 0);
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(generate_cohort(&SynthSpec { dims: [12, 24, 16], ..small(0) }).is_err());
        assert!(generate_cohort(&SynthSpec { class_sizes: [4, 5, 5], ..small(0) }).is_err());
        assert!(generate_cohort(&SynthSpec { effects: alloc::vec![EffectRegion { region: 99, amplitude: [0.0; 3] }], ..small(0) }).is_err());
    }
}
