use rand::{Rng, RngCore};
use tch::{Kind, Tensor};

use super::LossConfig;
use crate::error::{Error, Result};

/// Anything that scores a batch of images with one value per sample.
pub trait Critic {
    fn score(&self, x: &Tensor) -> Result<Tensor>;
}

impl<F> Critic for F
where
    F: Fn(&Tensor) -> Result<Tensor>,
{
    fn score(&self, x: &Tensor) -> Result<Tensor> {
        self(x)
    }
}

/// Real/fake pairs with one mixing weight per pair.
pub struct GpSamples {
    epsilon: Tensor,
    real: Tensor,
    fake: Tensor,
}

impl GpSamples {
    /// `epsilon` has one entry in `[0, 1]` per sample.
    pub fn new(real: &Tensor, fake: &Tensor, epsilon: &[f64]) -> Result<Self> {
        let size = real.size();
        if size != fake.size() || size.is_empty() {
            return Err(Error::Shape(format!(
                "real {size:?} and fake {:?} batches must match",
                fake.size()
            )));
        }
        if epsilon.len() as i64 != size[0] {
            return Err(Error::Shape(format!(
                "{} mixing weights for {} samples",
                epsilon.len(),
                size[0]
            )));
        }
        if epsilon.iter().any(|e| !(0.0..=1.0).contains(e)) {
            return Err(Error::InvalidArgument("epsilon must lie in [0, 1]".into()));
        }
        let mut shape = vec![size[0]];
        shape.extend(std::iter::repeat_n(1, size.len() - 1));
        Ok(GpSamples {
            epsilon: Tensor::from_slice(epsilon).to_kind(real.kind()).reshape(&shape),
            real: real.detach(),
            fake: fake.detach(),
        })
    }

    /// Draws epsilon ~ U[0, 1) per sample from `rng`.
    pub fn sample(real: &Tensor, fake: &Tensor, rng: &mut dyn RngCore) -> Result<Self> {
        let n = real.size().first().copied().unwrap_or(0).max(0) as usize;
        let eps: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        Self::new(real, fake, &eps)
    }

    pub fn epsilon(&self) -> Vec<f64> {
        Vec::<f64>::try_from(&self.epsilon.to_kind(Kind::Double).view(-1)).unwrap_or_default()
    }

    /// `epsilon * real + (1 - epsilon) * fake`.
    pub fn interpolates(&self) -> Tensor {
        &self.epsilon * &self.real + (1.0 - &self.epsilon) * &self.fake
    }
}

/// `lambda * mean_i (||grad critic(x_i)||_2 - 1)^2` at the interpolates.
///
/// The result stays attached to the critic's parameters (the input gradient
/// is built with a differentiable graph), so it can be backpropagated.
/// A critic whose output does not depend on its input has zero gradient.
pub fn gradient_penalty(critic: &dyn Critic, samples: &GpSamples, config: &LossConfig) -> Result<Tensor> {
    config.validate()?;
    let x_hat = samples.interpolates().detach().set_requires_grad(true);
    let n = x_hat.size()[0];
    let scores = critic.score(&x_hat)?;
    if scores.numel() as i64 != n {
        return Err(Error::Shape(format!(
            "critic returned {:?} for {n} samples",
            scores.size()
        )));
    }
    let grads = if scores.requires_grad() {
        let mut g = Tensor::f_run_backward(&[scores.sum(scores.kind())], &[&x_hat], true, true)
            .map_err(|e| Error::GradientUnavailable(e.to_string()))?;
        let g = g.pop().filter(Tensor::defined);
        g.unwrap_or_else(|| x_hat.zeros_like())
    } else {
        x_hat.zeros_like()
    };
    let norms = grads.flatten(1, -1).norm_scalaropt_dim(2, [1], false);
    let penalty = (norms - 1.0).square().mean(x_hat.kind()) * config.lambda_gp;
    let value = penalty.double_value(&[]);
    if !value.is_finite() {
        return Err(Error::GradientUnavailable(format!(
            "critic gradient produced non-finite penalty {value}"
        )));
    }
    Ok(penalty)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn batch(seed: i64, shape: &[i64]) -> Tensor {
        tch::manual_seed(seed);
        Tensor::randn(shape, (Kind::Double, tch::Device::Cpu))
    }

    #[test]
    fn unit_linear_critic_has_no_penalty() {
        let w = batch(1, &[1, 3, 4, 4]);
        let w = &w / w.norm();
        let critic = |x: &Tensor| Ok((x * &w).sum_dim_intlist([1i64, 2, 3].as_slice(), false, Kind::Double));
        let real = batch(2, &[5, 3, 4, 4]);
        let fake = batch(3, &[5, 3, 4, 4]);
        let s = GpSamples::sample(&real, &fake, &mut rng::stream(0, &["gp"])).unwrap();
        let p = gradient_penalty(&critic, &s, &LossConfig::default()).unwrap();
        assert!(p.double_value(&[]) < 1e-8);
    }

    #[test]
    fn constant_critic_costs_lambda() {
        let real = batch(2, &[4, 3, 2, 2]);
        let fake = batch(3, &[4, 3, 2, 2]);
        let s = GpSamples::new(&real, &fake, &[0.1, 0.5, 0.9, 0.0]).unwrap();
        let detached = |x: &Tensor| Ok(Tensor::full([x.size()[0]], 3.0, (Kind::Double, tch::Device::Cpu)));
        let p = gradient_penalty(&detached, &s, &LossConfig::default()).unwrap();
        assert_eq!(p.double_value(&[]), 10.0);
        let connected = |x: &Tensor| Ok(x.sum_dim_intlist([1i64, 2, 3].as_slice(), false, Kind::Double) * 0.0 + 3.0);
        let p = gradient_penalty(&connected, &s, &LossConfig::default()).unwrap();
        assert_eq!(p.double_value(&[]), 10.0);
    }

    #[test]
    fn interpolates_lie_on_segment() {
        let real = batch(4, &[3, 2]);
        let fake = batch(5, &[3, 2]);
        let s = GpSamples::new(&real, &fake, &[0.0, 1.0, 0.25]).unwrap();
        let x = s.interpolates();
        assert!(x.get(0).allclose(&fake.get(0), 0.0, 0.0, false));
        assert!(x.get(1).allclose(&real.get(1), 0.0, 0.0, false));
        let mid = real.get(2) * 0.25 + fake.get(2) * 0.75;
        assert!(x.get(2).allclose(&mid, 1e-12, 1e-12, false));
        assert!(GpSamples::new(&real, &fake, &[0.0, 1.5, 0.2]).is_err());
        assert!(GpSamples::new(&real, &fake, &[0.0]).is_err());
    }

    #[test]
    fn penalty_reaches_critic_parameters() {
        let w = batch(6, &[1, 4]).set_requires_grad(true);
        let critic = |x: &Tensor| Ok((x * &w).sum_dim_intlist([1i64].as_slice(), false, Kind::Double).tanh());
        let s = GpSamples::new(&batch(7, &[3, 4]), &batch(8, &[3, 4]), &[0.2, 0.4, 0.6]).unwrap();
        let p = gradient_penalty(&critic, &s, &LossConfig::default()).unwrap();
        p.backward();
        assert!(w.grad().defined());
        assert!(w.grad().abs().sum(Kind::Double).double_value(&[]) > 0.0);
    }
}
