mod common;

use common::{discriminator_grad_check, normal_tensor};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use voclab::discriminators::{Discriminator, DiscriminatorConfig};
use voclab::generators::{Generator, GeneratorConfig, GeneratorKind};
use voclab::nn::{Graph, Tensor};

fn tiny() -> Discriminator<f64> {
    let mut d = Discriminator::build(&DiscriminatorConfig::tiny(), 4).unwrap();
    d.refresh_spectral_norm();
    d
}

fn noise(seed: u64, len: usize) -> Tensor<f64> {
    normal_tensor(&mut ChaCha8Rng::seed_from_u64(seed), vec![1, 1, len], 0.3).map(|v| v.clamp(-1.0, 1.0))
}

/// Output length of a 1-D conv.
fn conv_len(len: usize, kernel: usize, stride: usize, pad: usize) -> usize {
    (len + 2 * pad - kernel) / stride + 1
}

#[test]
fn eight_outputs_periods_then_scales() {
    let d = tiny();
    let mut g = Graph::new();
    let w = g.constant(noise(1, 8192));
    let out = d.discriminate(&mut g, w).unwrap();
    assert_eq!(out.logits.len(), 8);
    assert_eq!(out.features.len(), 8);
    assert_eq!(d.config().sub_discriminator_count(), 8);
    let mpd = d.mpd_forward(&mut g, w).unwrap();
    let msd = d.msd_forward(&mut g, w).unwrap();
    assert_eq!(mpd.logits.len(), 5);
    assert_eq!(msd.logits.len(), 3);
    for (i, (a, b)) in out.logits.iter().zip(mpd.logits.iter().chain(&msd.logits)).enumerate() {
        assert_eq!(g.value(*a), g.value(*b), "output {i} out of order");
        assert!(g.value(*a).numel() > 0);
    }
}

#[test]
fn period_branch_pads_to_a_multiple_of_the_period() {
    let d = tiny();
    let cfg = d.config().mpd.clone();
    let mut g = Graph::new();
    let w = g.constant(noise(2, 8192));
    let out = d.mpd_forward(&mut g, w).unwrap();
    for (k, &p) in cfg.periods.iter().enumerate() {
        let padded = 8192usize.div_ceil(p) * p;
        if p == 3 {
            assert_eq!(padded, 8193);
        }
        let first = g.value(out.features[k][0]).shape().to_vec();
        assert_eq!(first[0], p, "phases fold into the batch");
        assert_eq!(first[1], cfg.channels[0]);
        assert_eq!(first[2], conv_len(padded / p, cfg.kernel_size, cfg.stride, (cfg.kernel_size - 1) / 2), "period {p}");
    }
}

#[test]
fn pooled_scales_follow_the_pool_arithmetic() {
    let d = tiny();
    let s = d.config().msd.clone();
    for len in [8192usize, 8191, 1001] {
        let mut g = Graph::new();
        let w = g.constant(noise(3, len));
        let out = d.msd_forward(&mut g, w).unwrap();
        // the first layer is stride 1, "same" padding, so it preserves the input length
        let mut expected = len;
        for k in 0..3 {
            assert_eq!(g.value(out.features[k][0]).shape()[2], expected, "scale {k}, len {len}");
            expected = conv_len(expected, s.pool_kernel, s.pool_stride, s.pool_padding);
        }
        // AvgPool(4, 2, 2) keeps floor(L/2) + 1 samples
        assert_eq!(g.value(out.features[1][0]).shape()[2], len / 2 + 1);
    }
}

#[test]
fn identical_inputs_identical_outputs() {
    let d = tiny();
    let x = noise(4, 4096);
    let mut g = Graph::new();
    let (a, b) = (g.constant(x.clone()), g.constant(x));
    let (oa, ob) = (d.discriminate(&mut g, a).unwrap(), d.discriminate(&mut g, b).unwrap());
    for (p, q) in oa.logits.iter().zip(&ob.logits) {
        assert_eq!(g.value(*p), g.value(*q));
    }
    let e = tiny();
    assert_eq!(d.store().iter().map(|(_, t, _)| t.clone()).collect::<Vec<_>>(), e.store().iter().map(|(_, t, _)| t.clone()).collect::<Vec<_>>());
}

#[test]
fn zero_and_full_scale_inputs_stay_finite() {
    let d = Discriminator::<f32>::build(&DiscriminatorConfig::default(), 0).unwrap();
    for fill in [0.0f32, 1.0, -1.0] {
        let mut g = Graph::new();
        let w = g.constant(Tensor::full(vec![1, 1, 4096], fill));
        let out = d.discriminate(&mut g, w).unwrap();
        assert_eq!(out.logits.len(), 8);
        for f in out.features.iter().flatten().chain(&out.logits) {
            assert!(g.value(*f).all_finite());
        }
    }
}

#[test]
fn sum_of_logits_reaches_the_input() {
    let d = tiny();
    let mut g = Graph::new();
    let w = g.variable(noise(5, 2048));
    let out = d.discriminate(&mut g, w).unwrap();
    let sums: Vec<_> = out.logits.iter().map(|l| g.sum(*l)).collect();
    let total = g.sum_all(&sums);
    let grads = g.backward(total);
    assert!(grads.get(w).unwrap().data().iter().any(|v| *v != 0.0));
}

#[test]
fn accepts_every_generator_output() {
    let d = Discriminator::<f32>::build(&DiscriminatorConfig::tiny(), 0).unwrap();
    for kind in GeneratorKind::ALL {
        let gen = Generator::<f32>::build(&GeneratorConfig::tiny(kind, 80), 1).unwrap();
        let mut g = Graph::new();
        let mel = g.constant(normal_tensor(&mut ChaCha8Rng::seed_from_u64(1), vec![1, 80, 4], 1.0).cast());
        let z = gen.sample_noise(&mut ChaCha8Rng::seed_from_u64(2), 1, 4).map(|n| g.constant(n));
        let y = gen.forward(&mut g, mel, z).unwrap();
        let out = d.discriminate(&mut g, y).unwrap();
        assert_eq!(out.logits.len(), 8, "{kind}");
    }
}

#[test]
fn malformed_inputs_are_rejected() {
    let d = tiny();
    let mut g = Graph::new();
    let empty = g.constant(Tensor::zeros(vec![1, 1, 0]));
    assert!(d.discriminate(&mut g, empty).is_err());
    assert!(d.msd_forward(&mut g, empty).is_err());
    let short = g.constant(Tensor::zeros(vec![1, 1, 10]));
    assert!(d.mpd_forward(&mut g, short).is_err());
    let stereo = g.constant(Tensor::zeros(vec![1, 2, 100]));
    assert!(d.discriminate(&mut g, stereo).is_err());
}

#[test]
fn gradients_match_central_differences() {
    let r = discriminator_grad_check(21);
    assert!(r.rel_error <= 1e-4, "relative error {:.3e} over {} coords", r.rel_error, r.coords);
    assert!(r.dead_groups.is_empty(), "zero gradient in {:?}", r.dead_groups);
}

#[test]
fn checked_in_config_is_the_default() {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/discriminator.toml");
    let cfg = DiscriminatorConfig::from_toml(&std::fs::read_to_string(path).unwrap()).unwrap();
    assert_eq!(cfg, DiscriminatorConfig::default());
    assert_eq!(cfg.mpd.periods, vec![2, 3, 5, 7, 11]);
    assert_eq!(cfg.msd.scales, 3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn outputs_finite_for_bounded_inputs(len in 11usize..3000, seed in any::<u64>()) {
        let d = Discriminator::<f32>::build(&DiscriminatorConfig::tiny(), 0).unwrap();
        let mut g = Graph::new();
        let w = g.constant(noise(seed, len).cast::<f32>());
        let out = d.discriminate(&mut g, w).unwrap();
        prop_assert_eq!(out.logits.len(), 8);
        for v in out.features.iter().flatten().chain(&out.logits) {
            prop_assert!(g.value(*v).all_finite());
        }
    }
}
