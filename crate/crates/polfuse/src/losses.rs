//! Training losses.
//!
//! The numerical loss penalises the residual prediction directly; the
//! polarimetric loss constrains the predicted covariance to stay consistent
//! with the guiding single-polarization intensity in the configured mode.
//! Only the sub-loss matching that mode is ever active in a run. Both are
//! `(1/2N) * sum of squared elements` over the batch.

use crate::polarimetry::{intensity_channel, PolMode};
use crate::scalar::Scalar;
use crate::tensor::{Tensor, TensorError, Var};

#[derive(thiserror::Error, Debug)]
pub enum LossError {
    #[error("loss components must be nonnegative, got {name} = {value}")]
    Negative { name: &'static str, value: f64 },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// One step's loss values and adaptive weights.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossBreakdown {
    pub l_val: f64,
    pub l_phy: f64,
    pub alpha: f64,
    pub beta: f64,
    pub l_total: f64,
}

impl LossBreakdown {
    /// Adaptive weighting: each component is weighted by its own share of the
    /// total, so the larger loss always receives the larger weight. The
    /// degenerate all-zero case splits evenly. `alpha + beta == 1` exactly.
    pub fn from_values(l_val: f64, l_phy: f64) -> Result<Self, LossError> {
        if l_val < 0.0 || l_val.is_nan() {
            return Err(LossError::Negative {
                name: "l_val",
                value: l_val,
            });
        }
        if l_phy < 0.0 || l_phy.is_nan() {
            return Err(LossError::Negative {
                name: "l_phy",
                value: l_phy,
            });
        }
        let sum = l_val + l_phy;
        let alpha = if sum == 0.0 { 0.5 } else { l_val / sum };
        let beta = 1.0 - alpha;
        Ok(Self {
            l_val,
            l_phy,
            alpha,
            beta,
            l_total: alpha * l_val + beta * l_phy,
        })
    }

    pub fn csv_header() -> &'static str {
        "step,l_val,l_phy,alpha,beta,l_total,lr"
    }

    pub fn csv_row(&self, step: u64, lr: f64) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            step, self.l_val, self.l_phy, self.alpha, self.beta, self.l_total, lr
        )
    }
}

/// Numerical loss: `(1/2N) * ||target - pred||^2` over all patch elements.
pub fn loss_val<'t, T: Scalar>(
    pred_residual: &Var<'t, T>,
    target_residual: &Tensor<T>,
    batch: usize,
) -> Result<Var<'t, T>, TensorError> {
    let target = pred_residual.tape().leaf(target_residual);
    let d = pred_residual.sub(&target)?;
    Ok(d.mul(&d)?.sum().scale(T::of_f64(0.5 / batch as f64)))
}

/// Polarimetric loss in one mode: the predicted residual's intensity channel
/// must match the intensity residual `I - extract(C_u)`.
///
/// Channel choice and the cross-pol halving convention come from
/// [`intensity_channel`]; the channel selection is a differentiable slice so
/// gradients reach only the mode's channel.
pub fn loss_phy<'t, T: Scalar>(
    pred_residual: &Var<'t, T>,
    intensity: &Tensor<T>,
    c_up: &Tensor<T>,
    mode: PolMode,
    batch: usize,
) -> Result<Var<'t, T>, TensorError> {
    let (ch, k) = intensity_channel(mode);
    let kt = T::of_f64(k);
    let tape = pred_residual.tape();
    let ix = tape.leaf(intensity);
    let cu = tape.leaf(c_up);
    let cu_int = cu.slice_channels(ch..ch + 1)?.scale(kt);
    let target = ix.sub(&cu_int)?;
    let pred_int = pred_residual.slice_channels(ch..ch + 1)?.scale(kt);
    let d = pred_int.sub(&target)?;
    Ok(d.mul(&d)?.sum().scale(T::of_f64(0.5 / batch as f64)))
}

/// Combines the two losses with adaptive weights. The weights are computed
/// from the current loss values and treated as constants during
/// backpropagation, so the gradient is `alpha * grad(l_val) + beta *
/// grad(l_phy)` with frozen weights.
pub fn total_loss<'t, T: Scalar>(
    l_val: &Var<'t, T>,
    l_phy: &Var<'t, T>,
) -> Result<(Var<'t, T>, LossBreakdown), LossError> {
    let bd = LossBreakdown::from_values(l_val.item().as_f64(), l_phy.item().as_f64())?;
    let combined = l_val
        .scale(T::of_f64(bd.alpha))
        .add(&l_phy.scale(T::of_f64(bd.beta)))?;
    Ok((combined, bd))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Shape, Tape};
    use rand::{Rng, SeedableRng};

    type Prng = rand_chacha::ChaCha8Rng;

    fn randt(shape: Shape, rng: &mut Prng) -> Tensor<f64> {
        let n: usize = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.random::<f64>() - 0.5).collect()).unwrap()
    }

    #[test]
    fn zero_residual_gives_zero_loss() {
        let tape = Tape::new();
        let t = Tensor::<f64>::full([1, 9, 4, 4], 0.3);
        let p = tape.leaf(&t);
        assert_eq!(loss_val(&p, &t, 1).unwrap().item(), 0.0);
    }

    #[test]
    fn constant_difference_arithmetic() {
        // one 40x40x9 patch, difference 0.1 everywhere: 0.5 * 0.01 * 14400 = 72
        let tape = Tape::new();
        let t = Tensor::<f64>::zeros([1, 9, 40, 40]);
        let p = tape.leaf(&Tensor::full([1, 9, 40, 40], 0.1));
        let l = loss_val(&p, &t, 1).unwrap().item();
        assert!((l - 72.0).abs() < 1e-9, "{l}");
    }

    #[test]
    fn matches_elementwise_loop_oracle() {
        let mut rng = Prng::seed_from_u64(5);
        let pred = randt([3, 9, 6, 6], &mut rng);
        let target = randt([3, 9, 6, 6], &mut rng);
        let tape = Tape::new();
        let l = loss_val(&tape.leaf(&pred), &target, 3).unwrap().item();
        let mut acc = 0.0;
        for (a, b) in pred.data().iter().zip(target.data()) {
            acc += (a - b) * (a - b);
        }
        acc *= 0.5 / 3.0;
        assert!((l - acc).abs() < 1e-10);
    }

    #[test]
    fn phy_loss_vanishes_when_channel_matches() {
        let mut rng = Prng::seed_from_u64(8);
        let cu = randt([1, 9, 4, 4], &mut rng);
        let ix = randt([1, 1, 4, 4], &mut rng);
        // craft a residual whose VV channel equals the intensity residual
        let (ch, _) = intensity_channel(PolMode::VV);
        let mut resid = randt([1, 9, 4, 4], &mut rng);
        {
            let plane = 16;
            let rd = resid.data_mut();
            for i in 0..plane {
                rd[ch * plane + i] = ix.data()[i] - cu.data()[ch * plane + i];
            }
        }
        let tape = Tape::new();
        let p = tape.leaf(&resid);
        let l = loss_phy(&p, &ix, &cu, PolMode::VV, 1).unwrap().item();
        assert!(l.abs() < 1e-24, "{l}");
    }

    #[test]
    fn phy_loss_ignores_other_channels() {
        let mut rng = Prng::seed_from_u64(13);
        let cu = randt([1, 9, 4, 4], &mut rng);
        let ix = randt([1, 1, 4, 4], &mut rng);
        let base = randt([1, 9, 4, 4], &mut rng);
        let eval = |r: &Tensor<f64>| {
            let tape = Tape::new();
            loss_phy(&tape.leaf(r), &ix, &cu, PolMode::VV, 1).unwrap().item()
        };
        let l0 = eval(&base);
        let mut perturbed = base.clone();
        let plane = 16;
        for c in 0..9 {
            if c == crate::polarimetry::CH_R33 {
                continue;
            }
            perturbed.data_mut()[c * plane + 3] += 17.0;
        }
        assert_eq!(eval(&perturbed), l0);
    }

    #[test]
    fn cross_pol_mode_matches_halving_oracle() {
        let mut rng = Prng::seed_from_u64(17);
        let cu = randt([2, 9, 4, 4], &mut rng);
        let ix = randt([2, 1, 4, 4], &mut rng);
        let resid = randt([2, 9, 4, 4], &mut rng);
        let tape = Tape::new();
        let l = loss_phy(&tape.leaf(&resid), &ix, &cu, PolMode::HV, 2)
            .unwrap()
            .item();
        // oracle: intensities are half the stored cross-pol channel
        let plane = 16;
        let ch = crate::polarimetry::CH_R22;
        let mut acc = 0.0;
        for n in 0..2 {
            for i in 0..plane {
                let cu_i = cu.data()[(n * 9 + ch) * plane + i] / 2.0;
                let pred_i = resid.data()[(n * 9 + ch) * plane + i] / 2.0;
                let d = (ix.data()[n * plane + i] - cu_i) - pred_i;
                acc += d * d;
            }
        }
        acc *= 0.5 / 2.0;
        assert!((l - acc).abs() < 1e-12);
    }

    #[test]
    fn adaptive_weights_arithmetic() {
        let bd = LossBreakdown::from_values(3.0, 1.0).unwrap();
        assert_eq!(bd.alpha, 0.75);
        assert_eq!(bd.beta, 0.25);
        assert_eq!(bd.l_total, 2.5);

        let even = LossBreakdown::from_values(0.7, 0.7).unwrap();
        assert_eq!(even.alpha, 0.5);
        assert_eq!(even.l_total, 0.7);

        let zero = LossBreakdown::from_values(0.0, 0.0).unwrap();
        assert_eq!((zero.alpha, zero.beta, zero.l_total), (0.5, 0.5, 0.0));

        assert!(LossBreakdown::from_values(-1.0, 0.0).is_err());
    }

    #[test]
    fn weights_sum_to_one_and_favour_larger() {
        let mut rng = Prng::seed_from_u64(23);
        for _ in 0..500 {
            let a: f64 = rng.random::<f64>() * 10.0;
            let b: f64 = rng.random::<f64>() * 10.0;
            let bd = LossBreakdown::from_values(a, b).unwrap();
            assert_eq!(bd.alpha + bd.beta, 1.0);
            assert_eq!(bd.alpha > bd.beta, a > b);
            assert!(bd.l_total <= a.max(b) + 1e-15);
            assert!(bd.l_total >= a.min(b) - 1e-15);
        }
    }

    #[test]
    fn total_loss_gradient_uses_frozen_weights() {
        // d(total)/d(pred) must equal alpha * d(l_val) + beta * d(l_phy) with
        // the weights from the base point; verified by central differences of
        // the frozen-weight objective.
        let mut rng = Prng::seed_from_u64(31);
        let target = randt([1, 9, 3, 3], &mut rng);
        let cu = randt([1, 9, 3, 3], &mut rng);
        let ix = randt([1, 1, 3, 3], &mut rng);
        let x0 = randt([1, 9, 3, 3], &mut rng);

        let eval = |x: &Tensor<f64>| {
            let tape = Tape::new();
            let p = tape.leaf(x);
            let lv = loss_val(&p, &target, 1).unwrap();
            let lp = loss_phy(&p, &ix, &cu, PolMode::VV, 1).unwrap();
            (lv.item(), lp.item())
        };
        let (lv0, lp0) = eval(&x0);
        let bd0 = LossBreakdown::from_values(lv0, lp0).unwrap();

        let tape = Tape::new();
        let p = tape.leaf(&x0);
        let lv = loss_val(&p, &target, 1).unwrap();
        let lp = loss_phy(&p, &ix, &cu, PolMode::VV, 1).unwrap();
        let (total, _) = total_loss(&lv, &lp).unwrap();
        let grads = total.backward().unwrap();
        let g = grads.for_tensor(&x0).unwrap();

        let h = 1e-6;
        for i in [0, 13, 40, 44, 80] {
            let mut plus = x0.clone();
            plus.data_mut()[i] += h;
            let mut minus = x0.clone();
            minus.data_mut()[i] -= h;
            let (lvp, lpp) = eval(&plus);
            let (lvm, lpm) = eval(&minus);
            let fd = (bd0.alpha * lvp + bd0.beta * lpp - bd0.alpha * lvm - bd0.beta * lpm) / (2.0 * h);
            let a = g.data()[i];
            assert!(
                (a - fd).abs() <= 1e-6 * a.abs().max(fd.abs()).max(1e-8),
                "{a} vs {fd}"
            );
        }
    }
}
