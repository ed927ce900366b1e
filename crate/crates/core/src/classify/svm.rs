use alloc::vec::Vec;

use super::metrics::N_CLASSES;
use super::platt::Platt;
use crate::cohort::Diagnosis;
use crate::error::{bail, Result};
use crate::linalg::dot;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmOptions {
    /// Hinge-loss weight.
    pub c: f64,
    /// Stop once the primal-dual gap falls below this.
    pub tol: f64,
    pub max_epochs: usize,
}

impl Default for SvmOptions {
    fn default() -> Self {
        Self { c: 1.0, tol: 1e-6, max_epochs: 10_000 }
    }
}

/// Linear SVM on `{−1, +1}` targets. The bias is learned as the weight of a
/// constant unit feature, i.e. the problem solved is
/// `min ½(‖w‖² + b²) + C Σ max(0, 1 − yᵢ(w·xᵢ + b))`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinarySvm {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Dual variables, one per training point, in `[0, C]`.
    pub dual: Vec<f64>,
    pub epochs: usize,
    pub gap: f64,
}

impl BinarySvm {
    /// Dual coordinate descent, sweeping the points in index order.
    pub fn fit<R: AsRef<[f64]>>(x: &[R], y: &[f64], opts: &SvmOptions) -> Result<Self> {
        let n = x.len();
        if n == 0 || y.len() != n {
            bail!(Shape, "svm needs matching non-empty inputs, got {n} rows and {} targets", y.len());
        }
        if !(opts.c > 0.0) {
            bail!(OutOfRange, "svm C must be positive, got {}", opts.c);
        }
        let d = x[0].as_ref().len();
        if x.iter().any(|r| r.as_ref().len() != d) {
            bail!(Shape, "svm feature rows differ in length");
        }
        if y.iter().any(|&t| t != 1.0 && t != -1.0) {
            bail!(OutOfRange, "svm targets must be ±1");
        }
        let qii: Vec<f64> = x.iter().map(|r| dot(r.as_ref(), r.as_ref()) + 1.0).collect();
        let mut w = alloc::vec![0.0; d];
        let mut b = 0.0;
        let mut alpha = alloc::vec![0.0; n];
        let mut gap = f64::INFINITY;
        let mut epochs = 0;
        while epochs < opts.max_epochs {
            epochs += 1;
            for i in 0..n {
                let xi = x[i].as_ref();
                let g = y[i] * (dot(&w, xi) + b) - 1.0;
                let pg = if alpha[i] == 0.0 {
                    g.min(0.0)
                } else if alpha[i] == opts.c {
                    g.max(0.0)
                } else {
                    g
                };
                if pg == 0.0 {
                    continue;
                }
                let new = (alpha[i] - g / qii[i]).clamp(0.0, opts.c);
                let step = (new - alpha[i]) * y[i];
                if step != 0.0 {
                    w.iter_mut().zip(xi).for_each(|(wj, xj)| *wj += step * xj);
                    b += step;
                }
                alpha[i] = new;
            }
            let norm2 = dot(&w, &w) + b * b;
            let hinge: f64 = (0..n).map(|i| (1.0 - y[i] * (dot(&w, x[i].as_ref()) + b)).max(0.0)).sum();
            let primal = 0.5 * norm2 + opts.c * hinge;
            let dual = alpha.iter().sum::<f64>() - 0.5 * norm2;
            gap = primal - dual;
            if gap < opts.tol {
                break;
            }
        }
        Ok(Self { weights: w, bias: b, dual: alpha, epochs, gap })
    }

    pub fn converged(&self, opts: &SvmOptions) -> bool {
        self.gap < opts.tol
    }

    pub fn decision(&self, x: &[f64]) -> f64 {
        dot(&self.weights, x) + self.bias
    }
}

/// One-vs-rest linear SVMs over the three diagnoses, each with its own
/// Platt calibrator fitted on the training decision values.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub options: SvmOptions,
    pub machines: Vec<BinarySvm>,
    pub calibration: Option<Vec<Platt>>,
}

impl SvmModel {
    /// Trains the machines without calibrating them.
    pub fn fit_uncalibrated<R: AsRef<[f64]>>(x: &[R], labels: &[Diagnosis], opts: &SvmOptions) -> Result<Self> {
        if x.len() != labels.len() {
            bail!(Shape, "{} feature rows but {} labels", x.len(), labels.len());
        }
        let present = Diagnosis::ALL.iter().filter(|d| labels.contains(d)).count();
        if present < 2 {
            bail!(InsufficientData, "svm training needs at least two classes");
        }
        let machines = Diagnosis::ALL
            .iter()
            .map(|&class| {
                let y: Vec<f64> = labels.iter().map(|&l| if l == class { 1.0 } else { -1.0 }).collect();
                BinarySvm::fit(x, &y, opts)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { options: *opts, machines, calibration: None })
    }

    pub fn fit<R: AsRef<[f64]>>(x: &[R], labels: &[Diagnosis], opts: &SvmOptions) -> Result<Self> {
        let mut model = Self::fit_uncalibrated(x, labels, opts)?;
        let calibration = Diagnosis::ALL
            .iter()
            .enumerate()
            .map(|(c, &class)| {
                let f: Vec<f64> = x.iter().map(|r| model.machines[c].decision(r.as_ref())).collect();
                let y: Vec<bool> = labels.iter().map(|&l| l == class).collect();
                Platt::fit(&f, &y)
            })
            .collect::<Result<Vec<_>>>()?;
        model.calibration = Some(calibration);
        Ok(model)
    }

    pub fn dim(&self) -> usize {
        self.machines[0].weights.len()
    }

    pub fn decision_values(&self, x: &[f64]) -> Result<[f64; N_CLASSES]> {
        if x.len() != self.dim() {
            bail!(Shape, "svm trained on {} features, got {}", self.dim(), x.len());
        }
        let mut out = [0.0; N_CLASSES];
        for (o, m) in out.iter_mut().zip(&self.machines) {
            *o = m.decision(x);
        }
        Ok(out)
    }

    /// Calibrated per-class probabilities, normalized to sum to one.
    pub fn predict_proba(&self, x: &[f64]) -> Result<[f64; N_CLASSES]> {
        let Some(cal) = &self.calibration else {
            return Err(crate::Error::MissingCache("svm model is not calibrated"));
        };
        let f = self.decision_values(x)?;
        let mut p = [0.0; N_CLASSES];
        for c in 0..N_CLASSES {
            p[c] = cal[c].probability(f[c]).max(1e-300);
        }
        let s: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= s);
        Ok(p)
    }

    pub fn predict(&self, x: &[f64]) -> Result<Diagnosis> {
        Ok(Diagnosis::ALL[argmax(&self.predict_proba(x)?)])
    }

    /// True when every calibrator maps larger decision values to larger
    /// probabilities (negative Platt slope).
    pub fn calibration_is_monotone(&self) -> bool {
        self.calibration.as_ref().is_some_and(|c| c.iter().all(|p| p.a < 0.0))
    }
}

/// Index of the largest value; ties go to the lowest index.
pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}
