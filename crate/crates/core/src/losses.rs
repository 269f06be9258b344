//! Loss terms of the training objective.
//!
//! The total objective is
//! `L = lambda_I * L_I + lambda_M * L_M + lambda_A * L_A`, where `L_I` is
//! the cover/stego mean square error, `L_A` the generator-side adversarial
//! term, and `L_M` the balanced message loss
//! `lambda_m * sum_i L_{m_i} + lambda_b * L_b`. The balance term `L_b` sums
//! `|L_{m_i} - L_{m_j}|` over unordered decoder pairs, which for two
//! decoders is plainly `|L_{m_r} - L_{m_f}|`; it pushes all decoders toward
//! the same extraction accuracy.
//!
//! Pure scalar versions live here for direct use and testing; the training
//! loop assembles the identical expressions on the autodiff tape.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LossError {
    #[error("lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("balance loss needs at least 2 decoders, got {0}")]
    TooFewDecoders(usize),
}

/// All five weight knobs. `image`/`message`/`adversarial` weigh the outer
/// terms; `per_message`/`balance` weigh the inner message combination.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub image: f64,
    pub message: f64,
    pub adversarial: f64,
    pub per_message: f64,
    pub balance: f64,
}

impl Default for LossWeights {
    /// The published training setting: `lambda_I = 0.7`, `lambda_M = 1`,
    /// `lambda_A = 0.001`, `lambda_m = 1`, `lambda_b = 1`.
    fn default() -> Self {
        Self {
            image: 0.7,
            message: 1.0,
            adversarial: 0.001,
            per_message: 1.0,
            balance: 1.0,
        }
    }
}

/// Scalar views of every term of one batch (or one epoch mean).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    /// L_I
    #[serde(rename = "L_I")]
    pub image: f64,
    /// One L_{m_i} per decoder.
    #[serde(rename = "L_m")]
    pub per_message: Vec<f64>,
    /// L_b
    #[serde(rename = "L_b")]
    pub balance: f64,
    /// L_M = lambda_m * sum(L_m) + lambda_b * L_b
    #[serde(rename = "L_M")]
    pub message: f64,
    /// L_A
    #[serde(rename = "L_A")]
    pub adversarial: f64,
    /// lambda_I * L_I + lambda_M * L_M + lambda_A * L_A
    pub total: f64,
}

/// Mean square error between cover and stego tensors (all channel values).
pub fn image_loss(cover: &[f32], stego: &[f32]) -> Result<f64, LossError> {
    if cover.len() != stego.len() {
        return Err(LossError::LengthMismatch(cover.len(), stego.len()));
    }
    let mut acc = 0.0f64;
    for (&c, &s) in cover.iter().zip(stego) {
        let d = c as f64 - s as f64;
        acc += d * d;
    }
    Ok(acc / cover.len() as f64)
}

/// Mean square error between target bits and recovered soft bits.
pub fn message_loss(bits: &[u8], soft: &[f64]) -> Result<f64, LossError> {
    if bits.len() != soft.len() {
        return Err(LossError::LengthMismatch(bits.len(), soft.len()));
    }
    let mut acc = 0.0f64;
    for (&b, &s) in bits.iter().zip(soft) {
        let d = b as f64 - s;
        acc += d * d;
    }
    Ok(acc / bits.len() as f64)
}

/// Sum of `|L_i - L_j|` over unordered pairs `i < j`. Zero iff all equal.
pub fn balance_loss(losses: &[f64]) -> Result<f64, LossError> {
    if losses.len() < 2 {
        return Err(LossError::TooFewDecoders(losses.len()));
    }
    let mut acc = 0.0f64;
    for i in 0..losses.len() {
        for j in (i + 1)..losses.len() {
            acc += (losses[i] - losses[j]).abs();
        }
    }
    Ok(acc)
}

/// `lambda_m * sum(L_m) + lambda_b * L_b`.
pub fn balanced_message_loss(losses: &[f64], weights: &LossWeights) -> Result<f64, LossError> {
    let sum: f64 = losses.iter().sum();
    let b = balance_loss(losses)?;
    Ok(weights.per_message * sum + weights.balance * b)
}

/// Standard BCE with the probability clamped to `[eps_log, 1-eps_log]`.
pub fn adversary_bce(pred: f64, label: u8) -> f64 {
    let eps = crate::autodiff::EPS_LOG;
    let p = pred.clamp(eps, 1.0 - eps);
    -(label as f64 * p.ln() + (1.0 - label as f64) * (1.0 - p).ln())
}

/// `-ln(1 - A(s))`, the term that rewards the encoder for fooling the
/// adversary; clamped like [`adversary_bce`].
pub fn adversarial_loss(pred_on_stego: f64) -> f64 {
    let eps = crate::autodiff::EPS_LOG;
    let p = pred_on_stego.clamp(eps, 1.0 - eps);
    -(1.0 - p).ln()
}

/// Assemble the full report from the component terms.
pub fn total_loss(
    image: f64,
    per_message: &[f64],
    adversarial: f64,
    weights: &LossWeights,
) -> Result<LossReport, LossError> {
    let balance = balance_loss(per_message)?;
    let message = weights.per_message * per_message.iter().sum::<f64>() + weights.balance * balance;
    let total = weights.image * image + weights.message * message + weights.adversarial * adversarial;
    Ok(LossReport {
        image,
        per_message: per_message.to_vec(),
        balance,
        message,
        adversarial,
        total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn image_loss_cases() {
        let c = vec![0.5f32; 100];
        assert_eq!(image_loss(&c, &c).unwrap(), 0.0);
        let s: Vec<f32> = c.iter().map(|v| v + 0.1).collect();
        let v = image_loss(&c, &s).unwrap();
        // the 0.1 offset itself carries f32 rounding
        assert!((v - 0.01).abs() < 1e-7, "{v}");
    }

    #[test]
    fn image_loss_matches_brute_force_oracle() {
        let mut rng = crate::rng::SplitMix64::new(31);
        let a: Vec<f32> = (0..3072).map(|_| rng.next_f32()).collect();
        let b: Vec<f32> = (0..3072).map(|_| rng.next_f32()).collect();
        // brute-force double-precision reference
        let mut acc = 0.0f64;
        for i in 0..a.len() {
            acc += (a[i] as f64 - b[i] as f64).powi(2);
        }
        let oracle = acc / a.len() as f64;
        let got = image_loss(&a, &b).unwrap();
        assert!((got - oracle).abs() <= 1e-9 * oracle.max(1.0));
    }

    #[test]
    fn message_loss_cases() {
        assert_eq!(message_loss(&[1, 0], &[1.0, 0.0]).unwrap(), 0.0);
        assert_eq!(message_loss(&[0; 4], &[1.0; 4]).unwrap(), 1.0);
        let v = message_loss(&[1, 0], &[0.5, 0.5]).unwrap();
        assert!((v - 0.25).abs() < 1e-12);
    }

    #[test]
    fn balance_loss_cases() {
        assert_eq!(balance_loss(&[0.3, 0.3]).unwrap(), 0.0);
        assert!((balance_loss(&[0.2, 0.5]).unwrap() - 0.3).abs() < 1e-15);
        // three decoders, unordered pairs: |.1-.2| + |.1-.4| + |.2-.4| = 0.6
        assert!((balance_loss(&[0.1, 0.2, 0.4]).unwrap() - 0.6).abs() < 1e-15);
        assert_eq!(balance_loss(&[0.1]), Err(LossError::TooFewDecoders(1)));
    }

    #[test]
    fn balanced_message_loss_cases() {
        let w = LossWeights {
            per_message: 1.0,
            balance: 1.0,
            ..LossWeights::default()
        };
        let v = balanced_message_loss(&[0.2, 0.5], &w).unwrap();
        assert!((v - 1.0).abs() < 1e-15);

        let w0 = LossWeights {
            balance: 0.0,
            ..w
        };
        let v = balanced_message_loss(&[0.2, 0.5], &w0).unwrap();
        assert!((v - 0.7).abs() < 1e-15);

        // the published three-decoder weighting
        let w3 = LossWeights {
            per_message: 2.0 / 3.0,
            balance: 1.0 / 3.0,
            ..w
        };
        let v = balanced_message_loss(&[0.1, 0.2, 0.4], &w3).unwrap();
        assert!((v - (2.0 / 3.0 * 0.7 + 0.6 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn adversary_bce_cases() {
        let ln2 = std::f64::consts::LN_2;
        assert!((adversary_bce(0.5, 1) - ln2).abs() < 1e-12);
        assert!((adversary_bce(0.5, 0) - ln2).abs() < 1e-12);
        assert!(adversary_bce(1.0 - 1e-6, 1) < 1.1e-6);
    }

    #[test]
    fn adversarial_loss_cases() {
        let ln2 = std::f64::consts::LN_2;
        assert!((adversarial_loss(0.5) - ln2).abs() < 1e-12);
        assert!(adversarial_loss(1e-6) < 1.1e-6);
        let worst = adversarial_loss(1.0);
        assert!((worst - (-(1e-6f64).ln())).abs() < 1e-9);
    }

    #[test]
    fn total_loss_published_weights_example() {
        let w = LossWeights::default(); // 0.7, 1, 0.001
        let r = total_loss(0.01, &[0.5, 0.5], 0.6931, &w).unwrap();
        assert_eq!(r.balance, 0.0);
        assert_eq!(r.message, 1.0);
        let expected = 0.007 + 1.0 + 0.0006931;
        assert!((r.total - expected).abs() < 1e-12, "{}", r.total);
    }

    #[test]
    fn total_loss_zero_components() {
        let r = total_loss(0.0, &[0.0, 0.0], 0.0, &LossWeights::default()).unwrap();
        assert_eq!(r.total, 0.0);
    }

    #[test]
    fn total_is_linear_in_each_weight() {
        let base = LossWeights::default();
        let r1 = total_loss(0.3, &[0.1, 0.2], 0.4, &base).unwrap();
        let mut doubled = base;
        doubled.image *= 2.0;
        let r2 = total_loss(0.3, &[0.1, 0.2], 0.4, &doubled).unwrap();
        assert!((r2.total - r1.total - base.image * 0.3).abs() < 1e-12);
    }
}
