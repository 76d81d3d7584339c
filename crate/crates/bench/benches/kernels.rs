use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};
use satgan_core::classifier::ExperimentResult;
use satgan_core::data::{geometric_augment, AugmentPolicy, ImageBatch, RangeTag};
use satgan_core::harness::{render_report, Fixtures};
use satgan_core::losses::{gradient_penalty, GpSamples, LossConfig};
use satgan_core::models::{init_weights, Checkpoint, CheckpointMeta, GanKind, Mode, Network};
use satgan_core::rng;
use tch::{Kind, Tensor};

fn images(n: i64) -> Tensor {
    tch::manual_seed(0);
    Tensor::rand([n, 3, 64, 64], (Kind::Float, tch::Device::Cpu)) * 2.0 - 1.0
}

fn network(spec: &satgan_core::models::NetworkSpec) -> Network {
    let net = Network::new(spec).unwrap();
    init_weights(&net, &mut rng::stream(0, &["bench"])).unwrap();
    net
}

fn forward(c: &mut Criterion) {
    tch::set_num_threads(1);
    let mut group = c.benchmark_group("forward_batch16");
    for kind in GanKind::ALL {
        let g = network(&kind.generator_spec(kind.default_z_dim()));
        let d = network(&kind.adversary_spec(0.3));
        let z = Tensor::randn(kind.latent_shape(16, kind.default_z_dim()), (Kind::Float, tch::Device::Cpu));
        let x = images(16);
        group.bench_function(format!("{kind}_generator"), |b| {
            b.iter(|| tch::no_grad(|| g.forward(black_box(&z), Mode::Eval).unwrap()))
        });
        group.bench_function(format!("{kind}_adversary"), |b| {
            b.iter(|| tch::no_grad(|| d.forward(black_box(&x), Mode::Eval).unwrap()))
        });
    }
    group.finish();
}

fn penalty(c: &mut Criterion) {
    let critic = network(&GanKind::WganGp.adversary_spec(0.0));
    let real = images(16);
    let fake = images(16).flip([0]);
    let samples = GpSamples::sample(&real, &fake, &mut rng::stream(0, &["gp"])).unwrap();
    let score = |x: &Tensor| critic.forward(x, Mode::Eval);
    c.bench_function("gradient_penalty_batch16", |b| {
        b.iter(|| gradient_penalty(&score, &samples, &LossConfig::default()).unwrap())
    });
}

fn augmentation(c: &mut Criterion) {
    let batch = ImageBatch::new(images(32), RangeTag::UnitSigned, None).unwrap();
    let policy = AugmentPolicy::default();
    let mut r = rng::stream(0, &["augment"]);
    c.bench_function("geometric_augment_batch32", |b| {
        b.iter(|| geometric_augment(&batch, &mut r, &policy).unwrap())
    });
}

fn checkpoint(c: &mut Criterion) {
    let kind = GanKind::Dcgan;
    let g = network(&kind.generator_spec(kind.default_z_dim()));
    let mut ck = Checkpoint::new(CheckpointMeta {
        gan_kind: kind,
        class_name: "Forest".into(),
        z_dim: kind.default_z_dim(),
        seed: 0,
        epoch: 0,
        fingerprints: Default::default(),
        config: serde_json::Value::Null,
        counters: Default::default(),
        history: serde_json::Value::Null,
    });
    ck.add_network("generator", &g).unwrap();
    c.bench_function("checkpoint_encode_decode_dcgan_generator", |b| {
        b.iter_batched(
            || ck.clone(),
            |ck| Checkpoint::from_bytes(&ck.to_bytes().unwrap()).unwrap(),
            BatchSize::LargeInput,
        )
    });
}

fn report(c: &mut Criterion) {
    let results: Vec<ExperimentResult> = Vec::new();
    let fixtures = Fixtures::bundled();
    c.bench_function("render_report_fixtures", |b| {
        b.iter(|| render_report(black_box(&results), &fixtures).to_table())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = forward, penalty, augmentation, checkpoint, report
}
criterion_main!(benches);
