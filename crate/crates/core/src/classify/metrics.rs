use core::ops::AddAssign;

use crate::cohort::Diagnosis;
use crate::error::{bail, Result};

pub const N_CLASSES: usize = 3;

/// Rows are true HC/MCI/AD, columns predicted.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub counts: [[u64; N_CLASSES]; N_CLASSES],
}

impl ConfusionMatrix {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (Diagnosis, Diagnosis)>) -> Self {
        let mut cm = Self::default();
        for (t, p) in pairs {
            cm.add(t, p);
        }
        cm
    }

    pub fn add(&mut self, truth: Diagnosis, predicted: Diagnosis) {
        self.counts[truth.index()][predicted.index()] += 1;
    }

    pub fn row_sum(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    pub fn total(&self) -> u64 {
        (0..N_CLASSES).map(|c| self.row_sum(c)).sum()
    }

    /// Per-class recall in percent.
    pub fn recalls(&self) -> Result<[f64; N_CLASSES]> {
        let mut out = [0.0; N_CLASSES];
        for (c, r) in out.iter_mut().enumerate() {
            let n = self.row_sum(c);
            if n == 0 {
                bail!(InsufficientData, "no test subjects of class {}", Diagnosis::ALL[c]);
            }
            *r = 100.0 * self.counts[c][c] as f64 / n as f64;
        }
        Ok(out)
    }

    /// Unweighted average recall in percent (unrounded).
    pub fn uar(&self) -> Result<f64> {
        Ok(uar_from_recalls(&self.recalls()?))
    }
}

impl AddAssign for ConfusionMatrix {
    fn add_assign(&mut self, rhs: Self) {
        for (a, b) in self.counts.iter_mut().zip(rhs.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

/// Mean of per-class recalls.
pub fn uar_from_recalls(recalls: &[f64]) -> f64 {
    recalls.iter().sum::<f64>() / recalls.len() as f64
}

/// Rounds to the two decimals used in result tables.
pub fn round2(v: f64) -> f64 {
    libm::round(v * 100.0) / 100.0
}
