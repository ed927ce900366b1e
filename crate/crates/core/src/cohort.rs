//! Subject records and the in-memory cohort.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{bail, Error, Result};
use crate::volume::Volume4D;

/// Diagnostic class. The discriminant is the row/column index used by
/// confusion matrices and probability vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Diagnosis {
    Hc = 0,
    Mci = 1,
    Ad = 2,
}

impl Diagnosis {
    pub const ALL: [Diagnosis; 3] = [Diagnosis::Hc, Diagnosis::Mci, Diagnosis::Ad];
    pub const COUNT: usize = 3;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Diagnosis::Hc => "HC",
            Diagnosis::Mci => "MCI",
            Diagnosis::Ad => "AD",
        }
    }
}

impl fmt::Display for Diagnosis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Diagnosis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "HC" => Ok(Diagnosis::Hc),
            "MCI" => Ok(Diagnosis::Mci),
            "AD" => Ok(Diagnosis::Ad),
            other => bail!(OutOfRange, "unknown label {other:?} (expected HC, MCI or AD)"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubjectRecord {
    pub subject_id: String,
    pub label: Diagnosis,
    pub cdr: f64,
    pub mmse: u8,
    pub volume_path: String,
}

impl SubjectRecord {
    pub fn validate(&self) -> Result<()> {
        if self.subject_id.is_empty() {
            bail!(OutOfRange, "empty subject id");
        }
        if !(self.cdr >= 0.0 && self.cdr.is_finite()) {
            bail!(OutOfRange, "cdr {} must be a non-negative number", self.cdr);
        }
        if self.mmse > 30 {
            bail!(OutOfRange, "mmse out of range: {} is not in [0, 30]", self.mmse);
        }
        Ok(())
    }
}

/// Subjects in manifest order plus their scans keyed by subject id.
#[derive(Debug, Clone, Default)]
pub struct Cohort {
    subjects: Vec<SubjectRecord>,
    scans: BTreeMap<String, Volume4D>,
}

impl Cohort {
    pub fn new(subjects: Vec<SubjectRecord>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for s in &subjects {
            s.validate()?;
            if !seen.insert(s.subject_id.clone()) {
                bail!(OutOfRange, "duplicate subject id {:?}", s.subject_id);
            }
        }
        Ok(Self { subjects, scans: BTreeMap::new() })
    }

    pub fn subjects(&self) -> &[SubjectRecord] {
        &self.subjects
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    pub fn labels(&self) -> Vec<Diagnosis> {
        self.subjects.iter().map(|s| s.label).collect()
    }

    pub fn ids(&self) -> Vec<String> {
        self.subjects.iter().map(|s| s.subject_id.clone()).collect()
    }

    /// Subjects per class in `Diagnosis::ALL` order.
    pub fn class_counts(&self) -> [usize; 3] {
        let mut counts = [0; 3];
        for s in &self.subjects {
            counts[s.label.index()] += 1;
        }
        counts
    }

    pub fn require_all_classes(&self) -> Result<()> {
        let counts = self.class_counts();
        for d in Diagnosis::ALL {
            if counts[d.index()] == 0 {
                bail!(InsufficientData, "cohort has no {d} subjects");
            }
        }
        Ok(())
    }

    pub fn attach_scan(&mut self, subject_id: &str, scan: Volume4D) -> Result<()> {
        if !self.subjects.iter().any(|s| s.subject_id == subject_id) {
            bail!(OutOfRange, "no subject {subject_id:?} in cohort");
        }
        if let Some(first) = self.scans.values().next() {
            if first.dims() != scan.dims() {
                bail!(
                    Shape,
                    "scan of {subject_id:?} has dims {:?}, cohort uses {:?}",
                    scan.dims(),
                    first.dims()
                );
            }
        }
        self.scans.insert(String::from(subject_id), scan);
        Ok(())
    }

    pub fn scan(&self, subject_id: &str) -> Option<&Volume4D> {
        self.scans.get(subject_id)
    }

    pub fn scan_at(&self, index: usize) -> Result<&Volume4D> {
        let id = &self.subjects[index].subject_id;
        self.scans
            .get(id)
            .ok_or_else(|| Error::InsufficientData(alloc::format!("no scan loaded for {id:?}")))
    }

    /// Copy with labels replaced, used for permutation (null) experiments.
    pub fn with_labels(&self, labels: &[Diagnosis]) -> Result<Cohort> {
        if labels.len() != self.subjects.len() {
            bail!(Shape, "{} labels for {} subjects", labels.len(), self.subjects.len());
        }
        let mut out = self.clone();
        for (s, &l) in out.subjects.iter_mut().zip(labels) {
            s.label = l;
        }
        Ok(out)
    }
}
