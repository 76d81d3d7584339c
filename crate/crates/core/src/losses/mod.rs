//! Adversarial losses.
//!
//! The slice functions evaluate each objective in closed form (f64) and are
//! what reports and tests use; the `*_t` tensor functions are the
//! differentiable minimization forms used during training.

mod penalty;

use serde::{Deserialize, Serialize};
use tch::{Kind, Tensor};

use crate::error::{Error, Result};

pub use penalty::{gradient_penalty, Critic, GpSamples};

/// Lower bound applied to every probability (and its complement) before
/// taking a logarithm.
pub const LOG_EPS: f64 = 1e-12;
pub const DEFAULT_LAMBDA_GP: f64 = 10.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignConvention {
    /// The objective as a value the player ascends.
    PaperValue,
    /// Its negation, which an optimizer minimizes.
    #[default]
    Minimization,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub lambda_gp: f64,
    pub sign_convention: SignConvention,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda_gp: DEFAULT_LAMBDA_GP,
            sign_convention: SignConvention::Minimization,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_gp >= 0.0 && self.lambda_gp.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "lambda_gp must be finite and >= 0, got {}",
                self.lambda_gp
            )));
        }
        Ok(())
    }
}

/// A loss value plus whether any input had to be clamped away from the
/// log singularity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub clamped: bool,
}

fn check_probabilities(name: &str, p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return Err(Error::InvalidArgument(format!("{name} is empty")));
    }
    if let Some(bad) = p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidArgument(format!(
            "{name} contains {bad}, expected probabilities in [0, 1]"
        )));
    }
    Ok(())
}

fn check_scores(name: &str, s: &[f64]) -> Result<()> {
    if s.is_empty() {
        return Err(Error::InvalidArgument(format!("{name} is empty")));
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(name.to_string()));
    }
    Ok(())
}

/// Mean of `ln(max(x, LOG_EPS))`, flagging any clamp.
fn mean_log(values: impl Iterator<Item = f64>) -> (f64, bool) {
    let (mut sum, mut n, mut clamped) = (0.0, 0usize, false);
    for v in values {
        if v < LOG_EPS {
            clamped = true;
        }
        sum += v.max(LOG_EPS).ln();
        n += 1;
    }
    (sum / n as f64, clamped)
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// `mean(ln d_real) + mean(ln(1 - d_fake))`, the value both players contest.
pub fn vanilla_value(d_real: &[f64], d_fake: &[f64]) -> Result<LossValue> {
    check_probabilities("d_real", d_real)?;
    check_probabilities("d_fake", d_fake)?;
    let (a, ca) = mean_log(d_real.iter().copied());
    let (b, cb) = mean_log(d_fake.iter().map(|p| 1.0 - p));
    Ok(LossValue {
        value: a + b,
        clamped: ca || cb,
    })
}

/// `p_data / (p_data + p_g)`.
pub fn optimal_discriminator(p_data: f64, p_g: f64) -> Result<f64> {
    if !(p_data >= 0.0 && p_g >= 0.0) || !p_data.is_finite() || !p_g.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "densities must be finite and >= 0, got p_data={p_data}, p_g={p_g}"
        )));
    }
    if p_data == 0.0 && p_g == 0.0 {
        return Err(Error::InvalidArgument(
            "optimal discriminator is undefined where both densities vanish".into(),
        ));
    }
    Ok(p_data / (p_data + p_g))
}

fn signed(value: LossValue, convention: SignConvention) -> LossValue {
    match convention {
        SignConvention::PaperValue => value,
        SignConvention::Minimization => LossValue {
            value: -value.value,
            ..value
        },
    }
}

/// `mean(ln d_fake)`; negated under [`SignConvention::Minimization`].
pub fn dcgan_generator_loss(d_fake: &[f64], convention: SignConvention) -> Result<LossValue> {
    check_probabilities("d_fake", d_fake)?;
    let (value, clamped) = mean_log(d_fake.iter().copied());
    Ok(signed(LossValue { value, clamped }, convention))
}

/// The discriminator's value (equal to [`vanilla_value`]); negated under
/// minimization, which is the binary cross-entropy with real = 1, fake = 0.
pub fn dcgan_discriminator_loss(
    d_real: &[f64],
    d_fake: &[f64],
    convention: SignConvention,
) -> Result<LossValue> {
    Ok(signed(vanilla_value(d_real, d_fake)?, convention))
}

/// `-mean(critic_fake)`.
pub fn wgan_generator_loss(critic_fake: &[f64]) -> Result<f64> {
    check_scores("critic_fake", critic_fake)?;
    Ok(-mean(critic_fake))
}

/// `mean(critic_fake) - mean(critic_real) + penalty`.
pub fn wgan_critic_loss(critic_real: &[f64], critic_fake: &[f64], penalty: f64) -> Result<f64> {
    check_scores("critic_real", critic_real)?;
    check_scores("critic_fake", critic_fake)?;
    if !penalty.is_finite() {
        return Err(Error::NonFinite("gradient penalty".into()));
    }
    Ok(mean(critic_fake) - mean(critic_real) + penalty)
}

fn log_clamped(p: &Tensor) -> Tensor {
    p.clamp_min(LOG_EPS).log()
}

/// Minimized discriminator loss: `-(mean ln D(x) + mean ln(1 - D(G(z))))`.
pub fn dcgan_discriminator_loss_t(d_real: &Tensor, d_fake: &Tensor) -> Tensor {
    let real = log_clamped(d_real).mean(Kind::Float);
    let fake = log_clamped(&(1.0 - d_fake)).mean(Kind::Float);
    -(real + fake)
}

/// Minimized generator loss: `-mean ln D(G(z))`.
pub fn dcgan_generator_loss_t(d_fake: &Tensor) -> Tensor {
    -log_clamped(d_fake).mean(Kind::Float)
}

pub fn wgan_generator_loss_t(critic_fake: &Tensor) -> Tensor {
    -critic_fake.mean(Kind::Float)
}

pub fn wgan_critic_loss_t(critic_real: &Tensor, critic_fake: &Tensor, penalty: &Tensor) -> Tensor {
    critic_fake.mean(Kind::Float) - critic_real.mean(Kind::Float) + penalty
}

#[cfg(test)]
mod tests {
    use super::*;

    const LN2: f64 = std::f64::consts::LN_2;

    #[test]
    fn closed_form_values() {
        let v = vanilla_value(&[0.5; 4], &[0.5; 4]).unwrap();
        assert!((v.value + 2.0 * LN2).abs() < 1e-12 && !v.clamped);
        let v = vanilla_value(&[0.9], &[0.2]).unwrap();
        assert!((v.value - (0.9f64.ln() + 0.8f64.ln())).abs() < 1e-12);

        let perfect = vanilla_value(&[1.0, 1.0], &[0.0]).unwrap();
        assert!(perfect.value.abs() < 1e-9 && !perfect.clamped);
        let saturated = vanilla_value(&[0.0], &[1.0]).unwrap();
        assert!(saturated.clamped && saturated.value.is_finite());

        let g = dcgan_generator_loss(&[0.25, 0.75], SignConvention::PaperValue).unwrap();
        assert!((g.value - (0.25f64.ln() + 0.75f64.ln()) / 2.0).abs() < 1e-12);
        let g = dcgan_generator_loss(&[0.5], SignConvention::Minimization).unwrap();
        assert!((g.value - LN2).abs() < 1e-12);

        let d = dcgan_discriminator_loss(&[0.5], &[0.5], SignConvention::Minimization).unwrap();
        assert!((d.value - 2.0 * LN2).abs() < 1e-12);

        assert_eq!(wgan_generator_loss(&[3.0, -1.0]).unwrap(), -1.0);
        assert_eq!(wgan_critic_loss(&[0.0], &[1.0], 10.0).unwrap(), 11.0);
        assert_eq!(wgan_critic_loss(&[5.0], &[2.0], 0.0).unwrap(), -3.0);
    }

    #[test]
    fn domain_errors() {
        assert!(vanilla_value(&[], &[0.5]).is_err());
        assert!(vanilla_value(&[1.5], &[0.5]).is_err());
        assert!(vanilla_value(&[f64::NAN], &[0.5]).is_err());
        assert!(optimal_discriminator(0.0, 0.0).is_err());
        assert!(optimal_discriminator(-1.0, 0.5).is_err());
        assert!(matches!(wgan_generator_loss(&[f64::INFINITY]), Err(Error::NonFinite(_))));
        assert!(wgan_critic_loss(&[0.0], &[0.0], f64::NAN).is_err());
    }

    #[test]
    fn tensor_forms_agree_with_closed_forms() {
        let real = [0.9, 0.6, 0.3];
        let fake = [0.2, 0.4, 0.7];
        let t = |v: &[f64]| Tensor::from_slice(v).to_kind(Kind::Float);
        let d = dcgan_discriminator_loss_t(&t(&real), &t(&fake)).double_value(&[]);
        let want = dcgan_discriminator_loss(&real, &fake, SignConvention::Minimization).unwrap();
        assert!((d - want.value).abs() < 1e-6);
        let g = dcgan_generator_loss_t(&t(&fake)).double_value(&[]);
        let want = dcgan_generator_loss(&fake, SignConvention::Minimization).unwrap();
        assert!((g - want.value).abs() < 1e-6);
        let c = wgan_critic_loss_t(&t(&real), &t(&fake), &Tensor::from(0.5f32)).double_value(&[]);
        assert!((c - wgan_critic_loss(&real, &fake, 0.5).unwrap()).abs() < 1e-6);
        // Saturated probabilities stay finite.
        let sat = dcgan_discriminator_loss_t(&t(&[0.0]), &t(&[1.0])).double_value(&[]);
        assert!(sat.is_finite());
    }
}
