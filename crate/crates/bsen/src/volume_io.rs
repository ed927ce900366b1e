//! `.vol` volumes with their `.vol.json` sidecars, cohort manifests and atlases.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use bsen_core::cohort::{Cohort, Diagnosis, SubjectRecord};
use bsen_core::volume::{voxel_count, Atlas, Dims, Volume3D, Volume4D};
use serde::{Deserialize, Serialize};

use crate::config::Provenance;
use crate::error::{CoreContext, Error, IoContext, Result};

pub const DTYPE: &str = "f32le";
pub const ORDER: &str = "x-fastest";
pub const MANIFEST_HEADER: [&str; 5] = ["subject_id", "label", "cdr", "mmse", "volume_path"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeHeader {
    pub dims: Vec<usize>,
    pub voxel_size_mm: [f64; 3],
    pub dtype: String,
    pub order: String,
    #[serde(default, skip_serializing_if = "Option::is_none", flatten)]
    pub provenance: Option<Provenance>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LoadedVolume {
    Three(Volume3D),
    Four(Volume4D),
}

impl LoadedVolume {
    /// Treats a 3-D volume as a single-frame scan.
    pub fn into_scan(self) -> Result<Volume4D> {
        match self {
            LoadedVolume::Four(v) => Ok(v),
            LoadedVolume::Three(v) => {
                let data = v.data().iter().map(|&e| e as f32).collect();
                Ok(Volume4D::new(v.dims(), v.voxel_size_mm(), 1, data)?)
            }
        }
    }

    pub fn into_volume3d(self, path: &Path) -> Result<Volume3D> {
        match self {
            LoadedVolume::Three(v) => Ok(v),
            LoadedVolume::Four(v) => Err(Error::data(path, format!("expected a 3-D volume, found {} frames", v.nt()))),
        }
    }
}

/// `x.vol` → `x.vol.json`.
pub fn sidecar_path(payload: &Path) -> PathBuf {
    let mut s = payload.as_os_str().to_os_string();
    s.push(".json");
    PathBuf::from(s)
}

fn payload_path(path: &Path) -> PathBuf {
    match path.to_str().and_then(|s| s.strip_suffix(".json")) {
        Some(stripped) if stripped.ends_with(".vol") => PathBuf::from(stripped),
        _ => path.to_path_buf(),
    }
}

fn write_payload(path: &Path, header: &VolumeHeader, values: impl Iterator<Item = f32>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).at(dir)?;
    }
    let bytes: Vec<u8> = values.flat_map(f32::to_le_bytes).collect();
    fs::write(path, bytes).at(path)?;
    let side = sidecar_path(path);
    let mut json = serde_json::to_string_pretty(header).expect("header serializes");
    json.push('\n');
    fs::write(&side, json).at(&side)
}

pub fn save_volume3d(path: &Path, vol: &Volume3D, provenance: Option<&Provenance>) -> Result<()> {
    let header = VolumeHeader {
        dims: vol.dims().to_vec(),
        voxel_size_mm: vol.voxel_size_mm(),
        dtype: DTYPE.into(),
        order: ORDER.into(),
        provenance: provenance.cloned(),
    };
    write_payload(path, &header, vol.data().iter().map(|&v| v as f32))
}

pub fn save_volume4d(path: &Path, vol: &Volume4D, provenance: Option<&Provenance>) -> Result<()> {
    let mut dims = vol.dims().to_vec();
    dims.push(vol.nt());
    let header = VolumeHeader {
        dims,
        voxel_size_mm: vol.voxel_size_mm(),
        dtype: DTYPE.into(),
        order: ORDER.into(),
        provenance: provenance.cloned(),
    };
    write_payload(path, &header, vol.data().iter().copied())
}

pub fn read_header(path: &Path) -> Result<VolumeHeader> {
    let side = sidecar_path(&payload_path(path));
    let text = fs::read_to_string(&side).at(&side)?;
    serde_json::from_str(&text).map_err(|e| Error::data(&side, format!("invalid volume header: {e}")))
}

/// Loads a volume given either its payload or its sidecar path.
pub fn load_volume(path: &Path) -> Result<LoadedVolume> {
    let payload = payload_path(path);
    let header = read_header(&payload)?;
    let side = sidecar_path(&payload);
    if header.dtype != DTYPE {
        return Err(Error::data(&side, format!("unsupported dtype {:?}, expected {DTYPE:?}", header.dtype)));
    }
    if header.order != ORDER {
        return Err(Error::data(&side, format!("unsupported order {:?}, expected {ORDER:?}", header.order)));
    }
    if !(header.dims.len() == 3 || header.dims.len() == 4) || header.dims.contains(&0) {
        return Err(Error::data(&side, format!("dims {:?} must be 3 or 4 positive integers", header.dims)));
    }
    let bytes = fs::read(&payload).at(&payload)?;
    let expected = header.dims.iter().try_fold(4usize, |acc, &d| acc.checked_mul(d));
    if expected != Some(bytes.len()) {
        return Err(Error::data(
            &payload,
            format!("payload has {} bytes, header dims {:?} need {}", bytes.len(), header.dims, expected.unwrap_or(0)),
        ));
    }
    let values: Vec<f32> = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::data(&payload, format!("non-finite value {} at index {i}", values[i])));
    }
    let dims: Dims = [header.dims[0], header.dims[1], header.dims[2]];
    if header.dims.len() == 3 {
        let data = values.into_iter().map(f64::from).collect();
        Ok(LoadedVolume::Three(Volume3D::new(dims, header.voxel_size_mm, data).in_file(&payload)?))
    } else {
        Ok(LoadedVolume::Four(Volume4D::new(dims, header.voxel_size_mm, header.dims[3], values).in_file(&payload)?))
    }
}

fn row_error(path: &Path, row: usize, msg: impl std::fmt::Display) -> Error {
    Error::data(path, format!("row {row}: {msg}"))
}

/// Reads a manifest; volume paths are kept as written (relative to the
/// manifest's directory unless absolute).
pub fn load_manifest(path: &Path) -> Result<Cohort> {
    let text = fs::read_to_string(path).at(path)?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| Error::data(path, e.to_string()))?.clone();
    let cols: Vec<&str> = header.iter().map(str::trim).collect();
    for name in MANIFEST_HEADER {
        if !cols.contains(&name) {
            return Err(Error::data(path, format!("missing column {name:?}; header must be {}", MANIFEST_HEADER.join(","))));
        }
    }
    if cols != MANIFEST_HEADER {
        return Err(Error::data(path, format!("header must be exactly {}", MANIFEST_HEADER.join(","))));
    }
    let mut subjects = Vec::new();
    let mut seen = HashMap::new();
    for (k, rec) in reader.records().enumerate() {
        let row = k + 2;
        let rec = rec.map_err(|e| row_error(path, row, e))?;
        let field = |i: usize| rec.get(i).unwrap_or("").trim();
        let label: Diagnosis = field(1).parse().map_err(|e| row_error(path, row, e))?;
        let cdr: f64 = field(2).parse().map_err(|_| row_error(path, row, format!("unparseable cdr {:?}", field(2))))?;
        let mmse: i64 =
            field(3).parse().map_err(|_| row_error(path, row, format!("unparseable mmse {:?}", field(3))))?;
        if !(0..=30).contains(&mmse) {
            return Err(row_error(path, row, format!("mmse out of range: {mmse} is not in [0, 30]")));
        }
        let record = SubjectRecord {
            subject_id: field(0).to_string(),
            label,
            cdr,
            mmse: mmse as u8,
            volume_path: field(4).to_string(),
        };
        record.validate().map_err(|e| row_error(path, row, e))?;
        if let Some(first) = seen.insert(record.subject_id.clone(), row) {
            return Err(row_error(path, row, format!("duplicate subject id {:?} (first on row {first})", record.subject_id)));
        }
        subjects.push(record);
    }
    Cohort::new(subjects).in_file(path)
}

pub fn write_manifest(path: &Path, cohort: &Cohort) -> Result<()> {
    let mut out = String::from(MANIFEST_HEADER.join(","));
    out.push('\n');
    for s in cohort.subjects() {
        out.push_str(&format!("{},{},{},{},{}\n", s.subject_id, s.label, s.cdr, s.mmse, s.volume_path));
    }
    fs::write(path, out).at(path)
}

/// Resolves every subject's volume relative to the manifest and attaches it.
pub fn load_cohort(manifest: &Path) -> Result<Cohort> {
    let mut cohort = load_manifest(manifest)?;
    let base = manifest.parent().unwrap_or(Path::new(""));
    let records: Vec<SubjectRecord> = cohort.subjects().to_vec();
    let mut dims = None;
    for r in &records {
        let p = base.join(&r.volume_path);
        let scan = load_volume(&p)?.into_scan()?;
        match dims {
            None => dims = Some(scan.dims()),
            Some(d) if d != scan.dims() => {
                return Err(Error::data(&p, format!("grid {:?} differs from the cohort's {:?}", scan.dims(), d)));
            }
            _ => {}
        }
        cohort.attach_scan(&r.subject_id, scan).in_file(&p)?;
    }
    Ok(cohort)
}

pub fn load_atlas(labels: &Path, names: &Path, expected_dims: Option<Dims>) -> Result<Atlas> {
    let vol = load_volume(labels)?.into_volume3d(labels)?;
    let text = fs::read_to_string(names).at(names)?;
    let mut map = BTreeMap::new();
    for (k, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (id, name) = line.split_once('\t').ok_or_else(|| row_error(names, k + 1, "expected id<TAB>name"))?;
        let id: u32 = id.trim().parse().map_err(|_| row_error(names, k + 1, format!("bad region id {id:?}")))?;
        if map.insert(id, name.trim().to_string()).is_some() {
            return Err(row_error(names, k + 1, format!("region id {id} named twice")));
        }
    }
    Atlas::from_label_volume(&vol, map, expected_dims).in_file(labels)
}

pub fn save_atlas(labels: &Path, names: &Path, atlas: &Atlas, voxel_size_mm: [f64; 3], provenance: Option<&Provenance>) -> Result<()> {
    save_volume3d(labels, &atlas.to_label_volume(voxel_size_mm)?, provenance)?;
    let mut out = String::new();
    for (id, name) in atlas.names() {
        out.push_str(&format!("{id}\t{name}\n"));
    }
    fs::write(names, out).at(names)
}

/// The atlas placed on a larger grid the same way data volumes are padded.
pub fn align_atlas(atlas: &Atlas, target: Dims) -> Result<Atlas> {
    if atlas.dims() == target {
        return Ok(atlas.clone());
    }
    let padded = atlas.to_label_volume([1.0; 3])?.padded(target)?;
    debug_assert_eq!(padded.len(), voxel_count(target));
    Ok(Atlas::from_label_volume(&padded, atlas.names().clone(), None)?)
}
