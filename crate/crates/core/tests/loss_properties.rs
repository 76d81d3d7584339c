use proptest::prelude::*;
use satgan_core::losses::{
    dcgan_discriminator_loss, gradient_penalty, optimal_discriminator, vanilla_value, wgan_critic_loss,
    wgan_generator_loss, GpSamples, LossConfig, SignConvention,
};
use tch::{Kind, Tensor};

fn probabilities(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1e-6..1.0 - 1e-6, 1..max_len)
}

fn scores() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-50.0..50.0f64, 1..12)
}

proptest! {
    #[test]
    fn discriminator_loss_restates_the_value_function(real in probabilities(16), fake in probabilities(16)) {
        let v = vanilla_value(&real, &fake).unwrap().value;
        let paper = dcgan_discriminator_loss(&real, &fake, SignConvention::PaperValue).unwrap().value;
        let min = dcgan_discriminator_loss(&real, &fake, SignConvention::Minimization).unwrap().value;
        prop_assert!((v - paper).abs() <= 1e-12);
        prop_assert!((paper + min).abs() <= 1e-12);
        prop_assert!(v <= 0.0);
    }

    #[test]
    fn wasserstein_terms_are_linear(real in scores(), fake in scores(), c in -5.0..5.0f64) {
        let scale = |v: &[f64]| v.iter().map(|x| x * c).collect::<Vec<_>>();
        let g = wgan_generator_loss(&fake).unwrap();
        prop_assert!((wgan_generator_loss(&scale(&fake)).unwrap() - c * g).abs() <= 1e-9);
        let d = wgan_critic_loss(&real, &fake, 0.0).unwrap();
        prop_assert!((wgan_critic_loss(&scale(&real), &scale(&fake), 0.0).unwrap() - c * d).abs() <= 1e-9);
    }

    #[test]
    fn optimal_discriminator_maximizes_the_value(p_data in 0.05..0.95f64, q_data in 0.05..0.95f64) {
        // Two points a, b with p_data = (p, 1 - p) and p_g = (q, 1 - q).
        let (p, q) = (p_data, q_data);
        let value = |da: f64, db: f64| p * da.ln() + (1.0 - p) * db.ln() + q * (1.0 - da).ln() + (1.0 - q) * (1.0 - db).ln();
        let best = value(optimal_discriminator(p, q).unwrap(), optimal_discriminator(1.0 - p, 1.0 - q).unwrap());
        for i in 1..50 {
            for j in 1..50 {
                prop_assert!(value(i as f64 / 50.0, j as f64 / 50.0) <= best + 1e-12);
            }
        }
        prop_assert!((optimal_discriminator(p, p).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn penalty_is_symmetric_under_swapping_real_and_fake(
        eps in prop::collection::vec(0.0..=1.0f64, 3),
        seed in 0i64..1000,
    ) {
        tch::manual_seed(seed);
        let opts = (Kind::Double, tch::Device::Cpu);
        let real = Tensor::randn([3, 2, 3, 3], opts);
        let fake = Tensor::randn([3, 2, 3, 3], opts);
        let w = Tensor::randn([18, 5], opts);
        let critic = |x: &Tensor| Ok(x.flatten(1, -1).matmul(&w).tanh().sum_dim_intlist([1i64].as_slice(), false, Kind::Double));
        let flipped: Vec<f64> = eps.iter().map(|e| 1.0 - e).collect();
        let cfg = LossConfig::default();
        let a = gradient_penalty(&critic, &GpSamples::new(&real, &fake, &eps).unwrap(), &cfg).unwrap();
        let b = gradient_penalty(&critic, &GpSamples::new(&fake, &real, &flipped).unwrap(), &cfg).unwrap();
        prop_assert!((a.double_value(&[]) - b.double_value(&[])).abs() <= 1e-9);
    }

    #[test]
    fn penalty_scales_with_lambda(lambda in 0.0..50.0f64, seed in 0i64..1000) {
        tch::manual_seed(seed);
        let opts = (Kind::Double, tch::Device::Cpu);
        let real = Tensor::randn([4, 6], opts);
        let fake = Tensor::randn([4, 6], opts);
        let w = Tensor::randn([6], opts);
        let critic = |x: &Tensor| Ok(x.matmul(&w).sin());
        let s = GpSamples::new(&real, &fake, &[0.1, 0.4, 0.6, 0.9]).unwrap();
        let unit = gradient_penalty(&critic, &s, &LossConfig { lambda_gp: 1.0, ..Default::default() }).unwrap();
        let scaled = gradient_penalty(&critic, &s, &LossConfig { lambda_gp: lambda, ..Default::default() }).unwrap();
        prop_assert!((scaled.double_value(&[]) - lambda * unit.double_value(&[])).abs() <= 1e-9 * (1.0 + lambda));
    }
}
