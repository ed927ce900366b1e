//! Per-subject feature vectors: pooled bottleneck activations of a trained
//! encoder, and the PCA / FastICA baselines fitted on flattened volumes.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::Rng;

use crate::error::{bail, Error, Result};
use crate::linalg::{dot, symmetric_eigen, Matrix};
use crate::model::Bsen;
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Extractor {
    Ica,
    Pca,
    Cae,
    BsenCdr,
    BsenMmse,
}

impl Extractor {
    pub const ALL: [Extractor; 5] = [Self::Ica, Self::Pca, Self::Cae, Self::BsenCdr, Self::BsenMmse];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Ica => "ICA",
            Self::Pca => "PCA",
            Self::Cae => "CAE",
            Self::BsenCdr => "BSEN_CDR",
            Self::BsenMmse => "BSEN_MMSE",
        }
    }

    /// Whether the features come from a trained encoder.
    pub fn is_network(self) -> bool {
        matches!(self, Self::Cae | Self::BsenCdr | Self::BsenMmse)
    }
}

impl fmt::Display for Extractor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Extractor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::OutOfRange(alloc::format!("unknown extractor {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub subject_id: String,
    pub extractor: Extractor,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(subject_id: &str, extractor: Extractor, values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            bail!(Degenerate, "non-finite {extractor} feature for {subject_id}");
        }
        Ok(Self { subject_id: subject_id.to_string(), extractor, values })
    }
}

/// Mean over channels of one sample's bottleneck, `[c][spatial]` layout.
pub fn pool_channels<T: Real>(latent: &[T], channels: usize) -> Result<Vec<f64>> {
    if channels == 0 || latent.len() % channels != 0 {
        bail!(Shape, "latent of {} values does not split into {channels} channels", latent.len());
    }
    let v = latent.len() / channels;
    let mut out = alloc::vec![0.0; v];
    for ch in latent.chunks_exact(v) {
        for (o, &e) in out.iter_mut().zip(ch) {
            *o += e.as_f64();
        }
    }
    out.iter_mut().for_each(|o| *o /= channels as f64);
    Ok(out)
}

/// Encodes prepared (averaged, normalized, padded) volumes in inference mode
/// and pools each bottleneck across channels.
pub fn extract_features<T: Real, S: AsRef<[T]>>(model: &Bsen<T>, volumes: &[S]) -> Result<Vec<Vec<f64>>> {
    let latents = model.encode_samples(volumes)?;
    let channels = model.config.latent_channels();
    (0..latents.len()).map(|i| pool_channels(latents.row(i), channels)).collect()
}

fn column_means(x: &Matrix) -> Vec<f64> {
    let mut mean = alloc::vec![0.0; x.cols];
    for i in 0..x.rows {
        for (m, &v) in mean.iter_mut().zip(x.row(i)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= x.rows as f64);
    mean
}

fn centered(x: &Matrix, mean: &[f64]) -> Matrix {
    let mut c = x.clone();
    for i in 0..c.rows {
        for (v, &m) in c.row_mut(i).iter_mut().zip(mean) {
            *v -= m;
        }
    }
    c
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// `k × d`, unit-norm rows ordered by decreasing variance.
    pub components: Matrix,
    /// Sample variance (`n − 1` denominator) along each component.
    pub explained_variance: Vec<f64>,
    /// Requested components that carried no variance and were dropped.
    pub dropped: usize,
}

impl Pca {
    /// Fits on the rows of `x`. Components whose variance is numerically zero
    /// are dropped and counted in `dropped`.
    pub fn fit(x: &Matrix, k: usize) -> Result<Self> {
        let (n, d) = (x.rows, x.cols);
        if n < 2 {
            bail!(InsufficientData, "PCA needs at least 2 samples, got {n}");
        }
        if k == 0 || k > n.min(d) {
            bail!(OutOfRange, "PCA with {k} components needs 1 ≤ k ≤ min({n}, {d})");
        }
        let mean = column_means(x);
        let xc = centered(x, &mean);
        let denom = (n - 1) as f64;
        let (values, vectors): (Vec<f64>, Vec<Vec<f64>>) = if n <= d {
            // eigenvectors of the Gram matrix map to covariance eigenvectors
            // through Xcᵀ u / sqrt(λ)
            let e = symmetric_eigen(&xc.gram())?;
            let vecs = (0..k)
                .map(|j| {
                    let lam = e.values[j].max(0.0);
                    let mut v = alloc::vec![0.0; d];
                    for i in 0..n {
                        let u = e.vectors.get(i, j);
                        for (a, &b) in v.iter_mut().zip(xc.row(i)) {
                            *a += u * b;
                        }
                    }
                    let norm = libm::sqrt(lam);
                    v.iter_mut().for_each(|a| *a = if norm > 0.0 { *a / norm } else { 0.0 });
                    v
                })
                .collect();
            (e.values[..k].iter().map(|l| l.max(0.0) / denom).collect(), vecs)
        } else {
            let mut cov = xc.transpose().matmul(&xc)?;
            cov.data.iter_mut().for_each(|c| *c /= denom);
            let e = symmetric_eigen(&cov)?;
            let vecs = (0..k).map(|j| (0..d).map(|i| e.vectors.get(i, j)).collect()).collect();
            (e.values[..k].iter().map(|l| l.max(0.0)).collect(), vecs)
        };
        let scale = values.first().copied().unwrap_or(0.0);
        let tol = 1e-12 * scale.max(f64::MIN_POSITIVE);
        let mut comps = Vec::new();
        let mut kept = Vec::new();
        for (lam, mut v) in values.into_iter().zip(vectors) {
            if lam <= tol {
                continue;
            }
            // sign convention: the largest-magnitude coordinate is positive
            let pivot = v.iter().copied().fold(0.0f64, |acc, e| if e.abs() > acc.abs() { e } else { acc });
            if pivot < 0.0 {
                v.iter_mut().for_each(|e| *e = -*e);
            }
            comps.push(v);
            kept.push(lam);
        }
        if comps.is_empty() {
            bail!(Degenerate, "PCA input has zero variance");
        }
        let dropped = k - comps.len();
        Ok(Self { mean, components: Matrix::from_rows(&comps)?, explained_variance: kept, dropped })
    }

    pub fn n_components(&self) -> usize {
        self.components.rows
    }

    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.mean.len() {
            bail!(Shape, "PCA fitted on {} dims, got {}", self.mean.len(), x.len());
        }
        let c: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        Ok(self.components.mul_vec(&c))
    }
}

pub const ICA_TOLERANCE: f64 = 1e-4;
pub const ICA_MAX_ITER: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct FastIca {
    pub mean: Vec<f64>,
    /// `k × d`: whitening followed by the rotation found by FastICA.
    pub unmixing: Matrix,
    pub converged: bool,
    pub iterations: usize,
    pub dropped: usize,
}

impl FastIca {
    /// Symmetric FastICA with the `log cosh` contrast (`g = tanh`) on the
    /// PCA-whitened rows of `x`. The start rotation comes from `rng`. If the
    /// tolerance is not met, the iterate that came closest is kept and
    /// `converged` is false.
    pub fn fit<R: Rng + ?Sized>(x: &Matrix, k: usize, rng: &mut R) -> Result<Self> {
        let pca = Pca::fit(x, k)?;
        let k = pca.n_components();
        let n = x.rows;
        let mut whitening = pca.components.clone();
        for (j, &var) in pca.explained_variance.iter().enumerate() {
            let s = 1.0 / libm::sqrt(var);
            whitening.row_mut(j).iter_mut().for_each(|e| *e *= s);
        }
        let z: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let c: Vec<f64> = x.row(i).iter().zip(&pca.mean).map(|(a, m)| a - m).collect();
                whitening.mul_vec(&c)
            })
            .collect();
        let w0 = Matrix::from_vec(k, k, (0..k * k).map(|_| rng.gen_range(-1.0..1.0)).collect())?;
        let mut w = symmetric_decorrelation(&w0)?;
        let mut best = (f64::INFINITY, w.clone());
        let mut converged = false;
        let mut iterations = 0;
        for it in 1..=ICA_MAX_ITER {
            iterations = it;
            let mut next = Matrix::zeros(k, k);
            for r in 0..k {
                let wr = w.row(r);
                let mut gz = alloc::vec![0.0; k];
                let mut gprime = 0.0;
                for zi in &z {
                    let g = libm::tanh(dot(wr, zi));
                    gprime += 1.0 - g * g;
                    for (a, &b) in gz.iter_mut().zip(zi) {
                        *a += g * b;
                    }
                }
                let row = next.row_mut(r);
                for c in 0..k {
                    row[c] = (gz[c] - gprime * wr[c]) / n as f64;
                }
            }
            let next = symmetric_decorrelation(&next)?;
            let lim = (0..k)
                .map(|r| (dot(next.row(r), w.row(r)).abs() - 1.0).abs())
                .fold(0.0, f64::max);
            w = next;
            if lim < best.0 {
                best = (lim, w.clone());
            }
            if lim < ICA_TOLERANCE {
                converged = true;
                break;
            }
        }
        let unmixing = best.1.matmul(&whitening)?;
        Ok(Self { mean: pca.mean, unmixing, converged, iterations, dropped: pca.dropped })
    }

    pub fn n_components(&self) -> usize {
        self.unmixing.rows
    }

    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.mean.len() {
            bail!(Shape, "ICA fitted on {} dims, got {}", self.mean.len(), x.len());
        }
        let c: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        Ok(self.unmixing.mul_vec(&c))
    }
}

/// `(W Wᵀ)^{-1/2} W`.
fn symmetric_decorrelation(w: &Matrix) -> Result<Matrix> {
    let e = symmetric_eigen(&w.matmul(&w.transpose())?)?;
    let k = w.rows;
    let mut inv_sqrt = Matrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            let s: f64 = (0..k)
                .map(|m| e.vectors.get(i, m) * e.vectors.get(j, m) / libm::sqrt(e.values[m].max(1e-300)))
                .sum();
            inv_sqrt.set(i, j, s);
        }
    }
    inv_sqrt.matmul(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_channels_pool_to_any_channel() {
        let ch: Vec<f32> = (0..12).map(|i| i as f32 * 0.5).collect();
        let latent: Vec<f32> = core::iter::repeat(ch.iter().copied()).take(8).flatten().collect();
        let pooled = pool_channels(&latent, 8).unwrap();
        assert!(pooled.iter().zip(&ch).all(|(a, &b)| *a == f64::from(b)));
    }

    #[test]
    fn extractor_tags_parse_case_insensitively() {
        assert_eq!("bsen_cdr".parse::<Extractor>().unwrap(), Extractor::BsenCdr);
        assert_eq!("ICA".parse::<Extractor>().unwrap(), Extractor::Ica);
        assert!("svm".parse::<Extractor>().is_err());
    }

    #[test]
    fn pca_recovers_a_line() {
        let dir = [1.0, 2.0, -2.0].map(|v: f64| v / 3.0);
        let rows: Vec<Vec<f64>> = (0..10).map(|i| dir.iter().map(|d| 0.5 + (i as f64 - 4.0) * d).collect()).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let pca = Pca::fit(&x, 1).unwrap();
        let c = pca.components.row(0);
        assert!((dot(c, &dir).abs() - 1.0).abs() < 1e-12);
        for r in &rows {
            let t = pca.transform(r).unwrap()[0];
            let resid: f64 = (0..3).map(|j| (pca.mean[j] + t * c[j] - r[j]).powi(2)).sum();
            assert!(resid.sqrt() < 1e-8);
        }
    }

    #[test]
    fn pca_rejects_too_many_components_and_drops_null_ones() {
        let x = Matrix::from_rows(&[[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]).unwrap();
        assert!(Pca::fit(&x, 3).is_err());
        let pca = Pca::fit(&x, 2).unwrap();
        assert_eq!((pca.n_components(), pca.dropped), (1, 1));
    }
}
