use std::cell::RefCell;
use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tch::Tensor;

use super::config::GanTrainConfig;
use super::generate::sample_latents;
use super::history::{push_update, EpochRecord, TrainHistory, UpdateTarget};
use crate::error::{Error, Result};
use crate::losses::{
    dcgan_discriminator_loss_t, dcgan_generator_loss_t, gradient_penalty, wgan_critic_loss_t,
    wgan_generator_loss_t, GpSamples, LossConfig, SignConvention,
};
use crate::models::{init_weights, Checkpoint, CheckpointMeta, GanKind, Mode, Network};
use crate::optim::{Adam, AdamConfig};
use crate::rng;

const SINCE_GENERATOR: &str = "adversary_updates_since_generator";

/// Training state for one GAN on one class: both networks, both
/// optimizers and the image tensor. Every epoch draws from its own derived
/// stream, so a session rebuilt from a checkpoint continues exactly.
pub struct GanSession {
    config: GanTrainConfig,
    generator: Network,
    adversary: Network,
    g_opt: Adam,
    d_opt: Adam,
    images: Tensor,
    epoch: usize,
    since_generator: usize,
    history: TrainHistory,
}

fn check_images(images: &Tensor, class: &str) -> Result<()> {
    let size = images.size();
    if size.len() != 4 || size[0] == 0 {
        return Err(Error::EmptyClass(class.to_string()));
    }
    if size[1..] != [3, 64, 64] {
        return Err(Error::Shape(format!(
            "GAN training images must be (N, 3, 64, 64), got {size:?}"
        )));
    }
    let max = images.abs().max().double_value(&[]);
    if !(max <= 1.0 + 1e-6) {
        return Err(Error::InvalidArgument(format!(
            "GAN training images must be in [-1, 1], found magnitude {max}"
        )));
    }
    Ok(())
}

fn adam_config(config: &GanTrainConfig) -> AdamConfig {
    AdamConfig::new(config.learning_rate, config.beta1, config.beta2)
}

impl GanSession {
    /// Fresh networks initialized from the configured seed. `images` is a
    /// unit-signed `(N, 3, 64, 64)` tensor of one class.
    pub fn new(images: Tensor, config: GanTrainConfig) -> Result<Self> {
        config.validate()?;
        check_images(&images, &config.class_name)?;
        let n = images.size()[0] as usize;
        if n < config.batch_size {
            return Err(Error::Config(format!(
                "class {} has {n} training images, fewer than batch size {}",
                config.class_name, config.batch_size
            )));
        }
        let kind = config.gan_kind;
        let generator = Network::new(&kind.generator_spec(config.z_dim()))?;
        let adversary = Network::new(&kind.adversary_spec(config.critic_dropout))?;
        init_weights(&generator, &mut rng::stream(config.seed, &["init", "generator"]))?;
        init_weights(
            &adversary,
            &mut rng::stream(config.seed, &["init", kind.adversary_role()]),
        )?;
        let g_opt = Adam::new(generator.parameters(), adam_config(&config));
        let d_opt = Adam::new(adversary.parameters(), adam_config(&config));
        Ok(GanSession {
            config,
            generator,
            adversary,
            g_opt,
            d_opt,
            images,
            epoch: 0,
            since_generator: 0,
            history: TrainHistory::default(),
        })
    }

    /// Restores networks, optimizer moments, counters and history.
    /// `epochs` overrides the stored target epoch count.
    pub fn from_checkpoint(ck: &Checkpoint, images: Tensor, epochs: Option<usize>) -> Result<Self> {
        let mut config: GanTrainConfig = serde_json::from_value(ck.meta.config.clone())?;
        if let Some(e) = epochs {
            config.epochs = e;
        }
        config.validate()?;
        check_images(&images, &config.class_name)?;
        let kind = config.gan_kind;
        let generator = ck.restore_network("generator", &kind.generator_spec(config.z_dim()))?;
        let role = kind.adversary_role();
        let adversary = ck.restore_network(role, &kind.adversary_spec(config.critic_dropout))?;
        let mut g_opt = Adam::new(generator.parameters(), adam_config(&config));
        let mut d_opt = Adam::new(adversary.parameters(), adam_config(&config));
        g_opt.import("generator_adam", ck)?;
        d_opt.import(&format!("{role}_adam"), ck)?;
        let history = if ck.meta.history.is_null() {
            TrainHistory::default()
        } else {
            serde_json::from_value(ck.meta.history.clone())?
        };
        Ok(GanSession {
            config,
            generator,
            adversary,
            g_opt,
            d_opt,
            images,
            epoch: ck.meta.epoch,
            since_generator: ck.meta.counters.get(SINCE_GENERATOR).copied().unwrap_or(0) as usize,
            history,
        })
    }

    pub fn config(&self) -> &GanTrainConfig {
        &self.config
    }

    /// Completed epochs.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn is_done(&self) -> bool {
        self.epoch >= self.config.epochs
    }

    pub fn history(&self) -> &TrainHistory {
        &self.history
    }

    pub fn generator(&self) -> &Network {
        &self.generator
    }

    pub fn adversary(&self) -> &Network {
        &self.adversary
    }

    pub(crate) fn history_mut(&mut self) -> &mut TrainHistory {
        &mut self.history
    }

    pub fn train_epoch(&mut self) -> Result<&EpochRecord> {
        let epoch = self.epoch + 1;
        let started = Instant::now();
        let mut rng = rng::stream(self.config.seed, &["gan-epoch", &epoch.to_string()]);
        let n = self.images.size()[0];
        let mut order: Vec<i64> = (0..n).collect();
        order.shuffle(&mut rng);

        let GanSession {
            config,
            generator,
            adversary,
            g_opt,
            d_opt,
            images,
            since_generator,
            ..
        } = self;
        let kind = config.gan_kind;
        let z_dim = config.z_dim();
        let bs = config.batch_size;
        let loss_config = LossConfig {
            lambda_gp: config.lambda_gp,
            sign_convention: SignConvention::Minimization,
        };

        let mut schedule = Vec::new();
        let (mut g_losses, mut d_losses) = (Vec::new(), Vec::new());
        let mut last_g = f64::NAN;
        for (step, chunk) in order.chunks_exact(bs).enumerate() {
            let real = images.index_select(0, &Tensor::from_slice(chunk));
            let z = sample_latents(kind, bs as i64, z_dim, &mut rng);
            match kind {
                GanKind::Dcgan => {
                    let fake = generator.forward(&z, Mode::Train(&mut rng))?;
                    d_opt.zero_grad();
                    let d_real = adversary.forward(&real, Mode::Train(&mut rng))?;
                    let d_fake = adversary.forward(&fake.detach(), Mode::Train(&mut rng))?;
                    let d_loss = dcgan_discriminator_loss_t(&d_real, &d_fake);
                    d_loss.backward();
                    d_opt.step();
                    let last_d = d_loss.double_value(&[]);
                    d_losses.push(last_d);
                    push_update(&mut schedule, UpdateTarget::Adversary);

                    g_opt.zero_grad();
                    let g_loss = dcgan_generator_loss_t(&adversary.forward(&fake, Mode::Train(&mut rng))?);
                    g_loss.backward();
                    g_opt.step();
                    last_g = g_loss.double_value(&[]);
                    g_losses.push(last_g);
                    push_update(&mut schedule, UpdateTarget::Generator);
                }
                GanKind::WganGp => {
                    let fake = tch::no_grad(|| generator.forward(&z, Mode::Train(&mut rng)))?;
                    d_opt.zero_grad();
                    let c_real = adversary.forward(&real, Mode::Train(&mut rng))?;
                    let c_fake = adversary.forward(&fake, Mode::Train(&mut rng))?;
                    let samples = GpSamples::sample(&real, &fake, &mut rng)?;
                    let gp_rng = RefCell::new(ChaCha8Rng::seed_from_u64(rng.next_u64()));
                    let net: &Network = adversary;
                    let critic = |x: &Tensor| net.forward(x, Mode::Train(&mut *gp_rng.borrow_mut()));
                    let penalty = gradient_penalty(&critic, &samples, &loss_config)?;
                    let d_loss = wgan_critic_loss_t(&c_real, &c_fake, &penalty);
                    d_loss.backward();
                    d_opt.step();
                    let last_d = d_loss.double_value(&[]);
                    d_losses.push(last_d);
                    push_update(&mut schedule, UpdateTarget::Adversary);
                    *since_generator += 1;

                    if *since_generator == config.n_critic {
                        g_opt.zero_grad();
                        let z = sample_latents(kind, bs as i64, z_dim, &mut rng);
                        let fake = generator.forward(&z, Mode::Train(&mut rng))?;
                        let g_loss = wgan_generator_loss_t(&adversary.forward(&fake, Mode::Train(&mut rng))?);
                        g_loss.backward();
                        g_opt.step();
                        last_g = g_loss.double_value(&[]);
                        g_losses.push(last_g);
                        push_update(&mut schedule, UpdateTarget::Generator);
                        *since_generator = 0;
                    }
                }
            }
            let last_d = d_losses.last().copied().unwrap_or(f64::NAN);
            if !last_d.is_finite() || !last_g.is_finite() && !g_losses.is_empty() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    step: step + 1,
                    g_loss: last_g,
                    d_loss: last_d,
                });
            }
        }

        let g_loss = if g_losses.is_empty() {
            // No generator update fell into this epoch; report its current loss.
            let z = sample_latents(kind, bs as i64, z_dim, &mut rng);
            tch::no_grad(|| -> Result<f64> {
                let fake = generator.forward(&z, Mode::Eval)?;
                let score = adversary.forward(&fake, Mode::Eval)?;
                Ok(match kind {
                    GanKind::Dcgan => dcgan_generator_loss_t(&score),
                    GanKind::WganGp => wgan_generator_loss_t(&score),
                }
                .double_value(&[]))
            })?
        } else {
            g_losses.iter().sum::<f64>() / g_losses.len() as f64
        };
        let d_loss = d_losses.iter().sum::<f64>() / d_losses.len().max(1) as f64;
        if !g_loss.is_finite() || !d_loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                step: d_losses.len(),
                g_loss,
                d_loss,
            });
        }
        self.epoch = epoch;
        self.history.records.push(EpochRecord {
            epoch,
            g_loss,
            d_loss,
            seconds: started.elapsed().as_secs_f64(),
            generator_updates: g_losses.len(),
            adversary_updates: d_losses.len(),
            schedule,
            snapshot: None,
        });
        Ok(self.history.records.last().expect("just pushed"))
    }

    pub fn checkpoint(&self) -> Result<Checkpoint> {
        let kind = self.config.gan_kind;
        let role = kind.adversary_role();
        let mut ck = Checkpoint::new(CheckpointMeta {
            gan_kind: kind,
            class_name: self.config.class_name.clone(),
            z_dim: self.config.z_dim(),
            seed: self.config.seed,
            epoch: self.epoch,
            fingerprints: BTreeMap::new(),
            config: serde_json::to_value(&self.config)?,
            counters: BTreeMap::from([(SINCE_GENERATOR.to_string(), self.since_generator as u64)]),
            history: serde_json::to_value(&self.history)?,
        });
        ck.add_network("generator", &self.generator)?;
        ck.add_network(role, &self.adversary)?;
        self.g_opt.export("generator_adam", &mut ck)?;
        self.d_opt.export(&format!("{role}_adam"), &mut ck)?;
        Ok(ck)
    }
}
