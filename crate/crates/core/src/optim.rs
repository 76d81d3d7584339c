//! Adam with exportable state, so resumed runs continue bit-for-bit.

use tch::Tensor;

use crate::error::{Error, Result};
use crate::models::Checkpoint;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn new(lr: f64, beta1: f64, beta2: f64) -> Self {
        AdamConfig {
            lr,
            beta1,
            beta2,
            eps: 1e-8,
        }
    }
}

pub struct Adam {
    config: AdamConfig,
    params: Vec<Tensor>,
    exp_avg: Vec<Tensor>,
    exp_avg_sq: Vec<Tensor>,
    step: u64,
}

impl Adam {
    pub fn new(params: Vec<Tensor>, config: AdamConfig) -> Self {
        let exp_avg = params.iter().map(Tensor::zeros_like).collect();
        let exp_avg_sq = params.iter().map(Tensor::zeros_like).collect();
        Adam {
            config,
            params,
            exp_avg,
            exp_avg_sq,
            step: 0,
        }
    }

    pub fn lr(&self) -> f64 {
        self.config.lr
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.config.lr = lr;
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.zero_grad();
        }
    }

    /// One update using the gradients currently stored on the parameters.
    /// Parameters without a gradient are left untouched.
    pub fn step(&mut self) {
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let t = self.step as i32;
        let bias1 = 1.0 - beta1.powi(t);
        let bias2 = 1.0 - beta2.powi(t);
        tch::no_grad(|| {
            for ((p, m), v) in self.params.iter().zip(&mut self.exp_avg).zip(&mut self.exp_avg_sq) {
                let g = p.grad();
                if !g.defined() {
                    continue;
                }
                let _ = m.g_mul_scalar_(beta1).g_add_(&(&g * (1.0 - beta1)));
                let _ = v.g_mul_scalar_(beta2).g_add_(&(&g * &g * (1.0 - beta2)));
                let denom = v.sqrt() / bias2.sqrt() + eps;
                let update = &*m / denom * (lr / bias1);
                let _ = p.shallow_clone().g_sub_(&update);
            }
        });
    }

    /// Stores the moment estimates as `<prefix>/m.<i>` and `<prefix>/v.<i>`
    /// and the step count as counter `<prefix>/step`.
    pub fn export(&self, prefix: &str, ck: &mut Checkpoint) -> Result<()> {
        for (i, (m, v)) in self.exp_avg.iter().zip(&self.exp_avg_sq).enumerate() {
            ck.push(format!("{prefix}/m.{i}"), m)?;
            ck.push(format!("{prefix}/v.{i}"), v)?;
        }
        ck.meta.counters.insert(format!("{prefix}/step"), self.step);
        Ok(())
    }

    pub fn import(&mut self, prefix: &str, ck: &Checkpoint) -> Result<()> {
        let restore = |target: &Tensor, name: String| -> Result<()> {
            let stored = ck.require(&name)?;
            if stored.shape != target.size() {
                return Err(Error::Checkpoint(format!(
                    "{name}: shape {:?} does not match parameter {:?}",
                    stored.shape,
                    target.size()
                )));
            }
            tch::no_grad(|| target.shallow_clone().copy_(&stored.to_tensor()));
            Ok(())
        };
        for (i, (m, v)) in self.exp_avg.iter().zip(&self.exp_avg_sq).enumerate() {
            restore(m, format!("{prefix}/m.{i}"))?;
            restore(v, format!("{prefix}/v.{i}"))?;
        }
        self.step = *ck
            .meta
            .counters
            .get(&format!("{prefix}/step"))
            .ok_or_else(|| Error::Checkpoint(format!("missing counter {prefix}/step")))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Scalar Adam written out directly.
    fn reference(grads: &[f64], lr: f64, b1: f64, b2: f64, eps: f64) -> f64 {
        let (mut x, mut m, mut v) = (0.0, 0.0, 0.0);
        for (t, g) in grads.iter().enumerate() {
            let t = t as i32 + 1;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mhat = m / (1.0 - b1.powi(t));
            let vhat = v / (1.0 - b2.powi(t));
            x -= lr * mhat / (vhat.sqrt() + eps);
        }
        x
    }

    #[test]
    fn matches_scalar_reference() {
        let p = Tensor::zeros([1], (tch::Kind::Double, tch::Device::Cpu)).set_requires_grad(true);
        let mut opt = Adam::new(vec![p.shallow_clone()], AdamConfig::new(0.01, 0.5, 0.999));
        let grads = [0.3, -1.2, 0.7, 2.0, -0.1];
        for g in grads {
            opt.zero_grad();
            let loss = &p * g;
            loss.sum(tch::Kind::Double).backward();
            opt.step();
        }
        let want = reference(&grads, 0.01, 0.5, 0.999, 1e-8);
        assert!((p.double_value(&[0]) - want).abs() < 1e-12);
    }
}
