use alloc::vec::Vec;

use crate::error::{bail, Result};

/// Weighted sum of probability vectors divided by the total weight.
pub fn late_fuse<P: AsRef<[f64]>>(probas: &[P], weights: &[f64]) -> Result<Vec<f64>> {
    let Some(first) = probas.first() else {
        bail!(InsufficientData, "late fusion of an empty list");
    };
    if weights.len() != probas.len() {
        bail!(Shape, "{} probability vectors but {} weights", probas.len(), weights.len());
    }
    if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) || weights.iter().all(|&w| w == 0.0) {
        bail!(OutOfRange, "fusion weights must be non-negative and not all zero");
    }
    let k = first.as_ref().len();
    let mut out = alloc::vec![0.0; k];
    for (p, &w) in probas.iter().zip(weights) {
        let p = p.as_ref();
        if p.len() != k {
            bail!(Shape, "probability vectors of lengths {k} and {}", p.len());
        }
        out.iter_mut().zip(p).for_each(|(o, v)| *o += w * v);
    }
    let total: f64 = weights.iter().sum();
    out.iter_mut().for_each(|o| *o /= total);
    Ok(out)
}
