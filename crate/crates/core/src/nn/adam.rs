use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::real::Real;

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    t: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Real> AdamState<T> {
    /// Fresh state for parameter tensors of the given lengths.
    pub fn new(lr: T, lengths: &[usize]) -> Self {
        Self {
            lr,
            beta1: T::of(0.9),
            beta2: T::of(0.999),
            eps: T::of(1e-8),
            t: 0,
            m: lengths.iter().map(|&n| alloc::vec![T::zero(); n]).collect(),
            v: lengths.iter().map(|&n| alloc::vec![T::zero(); n]).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn first_moments(&self) -> &[Vec<T>] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Vec<T>] {
        &self.v
    }

    pub fn step(&mut self, params: &mut [&mut [T]], grads: &[Vec<T>]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            bail!(
                Shape,
                "adam tracks {} tensors, got {} parameters and {} gradients",
                self.m.len(),
                params.len(),
                grads.len()
            );
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != self.m[i].len() || g.len() != self.m[i].len() {
                bail!(Shape, "adam tensor {i}: expected {} values", self.m[i].len());
            }
        }
        self.t += 1;
        let t = self.t as i32;
        let bc1 = T::of(1.0 - libm::pow(self.beta1.as_f64(), f64::from(t)));
        let bc2 = T::of(1.0 - libm::pow(self.beta2.as_f64(), f64::from(t)));
        let (b1, b2) = (self.beta1, self.beta2);
        let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            for j in 0..p.len() {
                let gj = g[j];
                m[j] = b1 * m[j] + one_b1 * gj;
                v[j] = b2 * v[j] + one_b2 * gj * gj;
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                p[j] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut p = alloc::vec![1.5f32, -2.0];
        let mut adam = AdamState::new(0.0005f32, &[2]);
        adam.step(&mut [&mut p[..]], &[alloc::vec![0.0, 0.0]]).unwrap();
        assert_eq!(p, [1.5, -2.0]);
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = alloc::vec![0.0f64];
        let mut adam = AdamState::new(0.0005f64, &[1]);
        adam.step(&mut [&mut p[..]], &[alloc::vec![1.0]]).unwrap();
        assert!((p[0] + 0.0005 / (1.0 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn two_steps_follow_scalar_recurrence() {
        // independent hand-rolled recurrence in double precision
        let (lr, b1, b2, eps) = (0.001f64, 0.9f64, 0.999f64, 1e-8f64);
        let gs = [0.3f64, -1.2];
        let (mut m, mut v, mut x) = (0.0, 0.0, 0.25);
        for (k, g) in gs.iter().enumerate() {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let t = (k + 1) as i32;
            x -= lr * (m / (1.0 - b1.powi(t))) / ((v / (1.0 - b2.powi(t))).sqrt() + eps);
        }
        let mut p = alloc::vec![0.25f64];
        let mut adam = AdamState::new(lr, &[1]);
        for g in gs {
            adam.step(&mut [&mut p[..]], &[alloc::vec![g]]).unwrap();
        }
        assert!((p[0] - x).abs() < 1e-15);
        assert!(adam.second_moments()[0][0] >= 0.0);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut p = alloc::vec![0.0f32; 3];
        let mut adam = AdamState::new(0.1f32, &[2]);
        assert!(adam.step(&mut [&mut p[..]], &[alloc::vec![0.0; 3]]).is_err());
    }
}
