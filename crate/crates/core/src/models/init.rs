use rand::RngCore;
use rand_distr::{Distribution, Normal};
use tch::Tensor;

use super::network::{Network, TensorRole};
use crate::error::Result;

pub const INIT_STD: f64 = 0.02;

/// Draws `n` samples of N(mean, std) as f32.
pub fn normal_values(n: usize, mean: f64, std: f64, rng: &mut dyn RngCore) -> Vec<f32> {
    let dist = Normal::new(mean, std).expect("std is finite and non-negative");
    (0..n).map(|_| dist.sample(rng) as f32).collect()
}

/// Convolution, transposed-convolution and dense weights ~ N(0, 0.02);
/// batch-norm scale ~ N(1, 0.02); every bias and shift zero; running
/// statistics reset to mean 0, variance 1.
pub fn init_weights(net: &Network, rng: &mut dyn RngCore) -> Result<()> {
    let norm_layers: Vec<bool> = net
        .spec()
        .layers
        .iter()
        .map(|l| matches!(l, super::LayerSpec::BatchNorm { .. }))
        .collect();
    for (name, tensor, role) in net.named_tensors() {
        let (layer, field) = name.split_once('.').expect("tensor names are <layer>.<field>");
        let is_norm = norm_layers[layer.parse::<usize>().expect("numeric layer index")];
        let size = tensor.size();
        let n = tensor.numel();
        let value = match (role, field) {
            (TensorRole::Parameter, "weight") => {
                let mean = if is_norm { 1.0 } else { 0.0 };
                Tensor::from_slice(&normal_values(n, mean, INIT_STD, rng)).reshape(&size)
            }
            (TensorRole::Buffer, "running_var") => Tensor::ones(&size, (tch::Kind::Float, tch::Device::Cpu)),
            _ => Tensor::zeros(&size, (tch::Kind::Float, tch::Device::Cpu)),
        };
        net.copy_named(&name, &value)?;
    }
    Ok(())
}
