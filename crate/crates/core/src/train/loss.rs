//! Composite cross-entropy plus soft-Dice segmentation loss.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DICE_SMOOTH: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub ce: f64,
    pub dice: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { ce: 1.0, dice: 1.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let ok = |w: f64| w.is_finite() && w >= 0.0;
        if !ok(self.ce) || !ok(self.dice) || self.ce + self.dice == 0.0 {
            return Err(Error::Config(format!(
                "loss weights must be non-negative and not both zero, got ce={} dice={}",
                self.ce, self.dice
            )));
        }
        Ok(())
    }
}

/// Loss value and its two terms.
#[derive(Clone, Debug)]
pub struct LossParts {
    pub total: Tensor,
    pub ce: f64,
    pub dice: f64,
}

/// `w_ce * CE + w_dice * (1 - mean soft Dice over classes 1..C)`.
///
/// `logits` has classes on the last axis and one position per entry of
/// `labels`; every leading axis is flattened, so a batch can be passed as
/// slices concatenated along axis 0.
pub fn dice_ce_loss(logits: &Tensor, labels: &[u8], weights: LossWeights) -> Result<LossParts> {
    weights.validate()?;
    let c = *logits.shape().last().unwrap();
    let p = logits.numel() / c.max(1);
    if c < 2 || p != labels.len() {
        return Err(Error::shape(
            "dice_ce_loss",
            format!("logits {:?} for {} labels", logits.shape(), labels.len()),
        ));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l as usize >= c) {
        return Err(Error::LabelOutOfRange { label: bad as usize, classes: c });
    }
    let mut onehot = vec![0.0; p * c];
    for (i, &l) in labels.iter().enumerate() {
        onehot[i * c + l as usize] = 1.0;
    }
    let onehot = Tensor::new(&[p, c], onehot)?;
    let logp = logits.reshape(&[p, c])?.log_softmax()?;
    let ce = logp.mul(&onehot)?.sum().scale(-1.0 / p as f64)?;

    let probs = logp.exp()?;
    let inter = probs.mul(&onehot)?.sum_to_channels()?;
    let denom = probs.sum_to_channels()?.add(&onehot.sum_to_channels()?)?;
    let dice = inter
        .scale(2.0)?
        .add_scalar(DICE_SMOOTH)?
        .div(&denom.add_scalar(DICE_SMOOTH)?)?
        .narrow(0, 1, c - 1)?
        .mean();
    let dice_loss = dice.neg()?.add_scalar(1.0)?;

    let total = ce.scale(weights.ce)?.add(&dice_loss.scale(weights.dice)?)?;
    Ok(LossParts { ce: ce.item(), dice: dice_loss.item(), total })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::grad_check;

    #[test]
    fn uniform_binary_logits_give_ln2() {
        let logits = Tensor::zeros(&[4, 4, 2]);
        let labels: Vec<u8> = (0..16).map(|i| (i % 3 == 0) as u8).collect();
        let l = dice_ce_loss(&logits, &labels, LossWeights::default()).unwrap();
        assert!((l.ce - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn peaked_correct_logits_nearly_zero() {
        let labels: Vec<u8> = (0..16).map(|i| (i % 3) as u8).collect();
        let mut data = vec![-30.0; 48];
        for (i, &l) in labels.iter().enumerate() {
            data[i * 3 + l as usize] = 30.0;
        }
        let logits = Tensor::new(&[4, 4, 3], data).unwrap();
        let l = dice_ce_loss(&logits, &labels, LossWeights::default()).unwrap();
        assert!(l.total.item() < 1e-3, "{}", l.total.item());
    }

    #[test]
    fn soft_dice_hand_value() {
        // Two positions, class 1 present once; probabilities 0.5 everywhere.
        let logits = Tensor::zeros(&[2, 2]);
        let l = dice_ce_loss(&logits, &[0, 1], LossWeights { ce: 0.0, dice: 1.0 }).unwrap();
        let want = 1.0 - (2.0 * 0.5 + DICE_SMOOTH) / (1.0 + 1.0 + DICE_SMOOTH);
        assert!((l.total.item() - want).abs() < 1e-15);
    }

    #[test]
    fn gradient_4x4_three_classes() {
        let labels: Vec<u8> = (0..16).map(|i| ((i * 7) % 3) as u8).collect();
        let data = (0..48).map(|i| ((i as f64) * 0.37).sin()).collect();
        let x = Tensor::variable(&[4, 4, 3], data).unwrap();
        let e = grad_check(|x| Ok(dice_ce_loss(x, &labels, LossWeights::default())?.total), &x, 1e-6).unwrap();
        assert!(e < 1e-4, "{e}");
    }

    #[test]
    fn rejects_bad_labels_and_weights() {
        let x = Tensor::zeros(&[2, 3]);
        assert!(matches!(
            dice_ce_loss(&x, &[0, 3], LossWeights::default()),
            Err(Error::LabelOutOfRange { label: 3, classes: 3 })
        ));
        assert!(dice_ce_loss(&x, &[0], LossWeights::default()).is_err());
        assert!(dice_ce_loss(&x, &[0, 1], LossWeights { ce: 0.0, dice: 0.0 }).is_err());
    }
}
