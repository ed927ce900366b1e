//! Central finite-difference checks of analytic gradients (double precision).

use alloc::vec::Vec;

use rand::Rng;

use super::layer::Sequential;
use super::tensor::Tensor5;
use crate::error::Result;
use crate::rng::StreamRng;

pub const DEFAULT_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// Flat index of the coordinate with the largest error.
    pub worst_index: usize,
    pub checked: usize,
}

/// Coordinates are compared relative to at least this fraction of the
/// largest gradient entry checked, so finite-difference round-off on entries
/// that are structurally zero (a conv bias feeding batchnorm, say) does not
/// read as a large relative error.
pub const SCALE_FLOOR: f64 = 1e-3;

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares `analytic[i]` against `(f(θ + h e_i) − f(θ − h e_i)) / 2h` for
/// every `i` in `indices`.
pub fn check_coordinates(
    theta: &[f64],
    analytic: &[f64],
    indices: &[usize],
    h: f64,
    mut loss: impl FnMut(&[f64]) -> f64,
) -> GradCheck {
    let mut probe = theta.to_vec();
    let mut pairs = Vec::with_capacity(indices.len());
    for &i in indices {
        let orig = probe[i];
        probe[i] = orig + h;
        let up = loss(&probe);
        probe[i] = orig - h;
        let down = loss(&probe);
        probe[i] = orig;
        pairs.push((i, analytic[i], (up - down) / (2.0 * h)));
    }
    let scale = pairs.iter().fold(0.0f64, |m, &(_, a, n)| m.max(a.abs()).max(n.abs()));
    let floor = (SCALE_FLOOR * scale).max(1e-7);
    let mut worst = GradCheck { max_rel_error: 0.0, worst_index: 0, checked: 0 };
    for (i, a, n) in pairs {
        let err = relative_error(a, n, floor);
        if err > worst.max_rel_error || worst.checked == 0 {
            worst.max_rel_error = err;
            worst.worst_index = i;
        }
        worst.checked += 1;
    }
    worst
}

/// `count` distinct indices below `n` (all of them when `count >= n`).
pub fn sample_indices(n: usize, count: usize, rng: &mut StreamRng) -> Vec<usize> {
    let mut all: Vec<usize> = (0..n).collect();
    if count >= n {
        return all;
    }
    for i in 0..count {
        let j = rng.gen_range(i..n);
        all.swap(i, j);
    }
    all.truncate(count);
    all.sort_unstable();
    all
}

pub fn flatten(parts: &[&[f64]]) -> Vec<f64> {
    parts.iter().flat_map(|p| p.iter().copied()).collect()
}

pub fn unflatten_into(flat: &[f64], parts: &mut [&mut [f64]]) {
    let mut off = 0;
    for p in parts.iter_mut() {
        p.copy_from_slice(&flat[off..off + p.len()]);
        off += p.len();
    }
}

/// Squared-error loss `Σ (f(x) − target)²` of a training-mode forward pass.
pub fn squared_error(net: &mut Sequential<f64>, x: &Tensor5<f64>, target: &Tensor5<f64>) -> Result<f64> {
    let (y, _) = net.forward_train(x.clone())?;
    Ok(y.data().iter().zip(target.data()).map(|(a, b)| (a - b) * (a - b)).sum())
}

/// Checks parameter gradients of `net` (a random subset of `samples`
/// coordinates) and the full input gradient under the squared-error loss.
/// Returns the worst relative error over both.
pub fn check_sequential(
    net: &Sequential<f64>,
    x: &Tensor5<f64>,
    target: &Tensor5<f64>,
    samples: usize,
    rng: &mut StreamRng,
) -> Result<f64> {
    let mut work = net.clone();
    let (y, tape) = work.forward_train(x.clone())?;
    let dy = Tensor5::from_vec(
        y.shape(),
        y.data().iter().zip(target.data()).map(|(a, b)| 2.0 * (a - b)).collect(),
    )?;
    let mut grads = work.zero_grads();
    let dx = work.backward(&tape, dy, &mut grads, true)?.expect("input gradient requested");

    let theta = flatten(&net.params());
    let analytic = flatten(&grads.iter().map(Vec::as_slice).collect::<Vec<_>>());
    let idx = sample_indices(theta.len(), samples, rng);
    let params = check_coordinates(&theta, &analytic, &idx, DEFAULT_STEP, |t| {
        let mut probe = net.clone();
        unflatten_into(t, &mut probe.params_mut());
        squared_error(&mut probe, x, target).expect("shapes validated above")
    });

    let xs = x.data().to_vec();
    let all: Vec<usize> = (0..xs.len()).collect();
    let inputs = check_coordinates(&xs, dx.data(), &all, DEFAULT_STEP, |t| {
        let mut probe = net.clone();
        let xt = Tensor5::from_vec(x.shape(), t.to_vec()).expect("same shape");
        squared_error(&mut probe, &xt, target).expect("shapes validated above")
    });
    Ok(params.max_rel_error.max(inputs.max_rel_error))
}
