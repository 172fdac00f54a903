//! Weight initialisation and the Adam optimiser.

use rand::Rng;
use rand_distr::StandardNormal;

use super::{Shape, Tensor};
use crate::scalar::Scalar;

/// Zero-mean normal samples with standard deviation `sqrt(2 / fan_in)`.
///
/// Sampling is done in `f64` and converted, so a given seed produces the same
/// weights (up to rounding) for every scalar type.
pub fn kaiming_normal<T: Scalar>(shape: Shape, fan_in: usize, rng: &mut impl Rng) -> Tensor<T> {
    assert!(fan_in > 0, "kaiming init requires positive fan-in");
    let std = (2.0 / fan_in as f64).sqrt();
    let numel: usize = shape.iter().product();
    let data: Vec<T> = (0..numel)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            T::of_f64(z * std)
        })
        .collect();
    Tensor::new(shape, data).expect("kaiming shape")
}

/// Adam hyper-parameters. The learning rate is passed per step so schedules
/// live with the training loop.
#[derive(Clone, Copy, Debug)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction. Holds first/second moment accumulators for a
/// fixed list of parameter tensors, matched by position.
pub struct Adam<T> {
    hp: AdamParams,
    step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(hp: AdamParams, param_sizes: &[usize]) -> Self {
        Self {
            hp,
            step: 0,
            m: param_sizes.iter().map(|&s| vec![T::zero(); s]).collect(),
            v: param_sizes.iter().map(|&s| vec![T::zero(); s]).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn params(&self) -> AdamParams {
        self.hp
    }

    /// Moment accumulators, for checkpointing.
    pub fn state(&self) -> (&[Vec<T>], &[Vec<T>]) {
        (&self.m, &self.v)
    }

    /// Restores accumulators and step counter from a checkpoint.
    pub fn restore(&mut self, m: Vec<Vec<T>>, v: Vec<Vec<T>>, step: u64) {
        assert_eq!(m.len(), self.m.len());
        assert_eq!(v.len(), self.v.len());
        for (a, b) in m.iter().zip(&self.m) {
            assert_eq!(a.len(), b.len(), "adam moment size mismatch");
        }
        self.m = m;
        self.v = v;
        self.step = step;
    }

    /// One update over the whole parameter list. Parameters without a
    /// gradient are left untouched (their moments do not advance either).
    pub fn step(&mut self, lr: f64, params: &mut [&mut Tensor<T>], grads: &[Option<&Tensor<T>>]) {
        assert_eq!(params.len(), self.m.len(), "parameter count mismatch");
        assert_eq!(params.len(), grads.len(), "gradient count mismatch");
        self.step += 1;
        let t = self.step as i32;
        let b1 = T::of_f64(self.hp.beta1);
        let b2 = T::of_f64(self.hp.beta2);
        let eps = T::of_f64(self.hp.eps);
        let one = T::one();
        let bc1 = one - b1.powi(t);
        let bc2 = one - b2.powi(t);
        let lr_t = T::of_f64(lr);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let Some(g) = g else { continue };
            assert_eq!(p.numel(), g.numel(), "gradient size mismatch");
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            let pd = p.data_mut();
            for (j, &gj) in g.data().iter().enumerate() {
                m[j] = b1 * m[j] + (one - b1) * gj;
                v[j] = b2 * v[j] + (one - b2) * gj * gj;
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                pd[j] = pd[j] - lr_t * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}
