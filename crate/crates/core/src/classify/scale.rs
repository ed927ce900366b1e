use alloc::vec::Vec;

use crate::error::{bail, Result};

/// Per-feature z-scoring with training-set statistics; constant features
/// are centered only.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let Some(first) = rows.first() else {
            bail!(InsufficientData, "cannot standardize zero rows");
        };
        let d = first.as_ref().len();
        let n = rows.len() as f64;
        let mut mean = alloc::vec![0.0; d];
        for r in rows {
            let r = r.as_ref();
            if r.len() != d {
                bail!(Shape, "feature rows have lengths {d} and {}", r.len());
            }
            mean.iter_mut().zip(r).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = alloc::vec![0.0; d];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r.as_ref()).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = libm::sqrt(s / n);
                if sd > 1e-12 { sd } else { 1.0 }
            })
            .collect();
        Ok(Self { mean, scale })
    }

    pub fn transform(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.mean.len() {
            bail!(Shape, "standardizer fitted on {} features, got {}", self.mean.len(), row.len());
        }
        Ok(row.iter().zip(&self.mean).zip(&self.scale).map(|((v, m), s)| (v - m) / s).collect())
    }
}
