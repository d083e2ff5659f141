mod common;

use common::{generator_grad_check, normal_tensor};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use voclab::generators::{
    block_receptive_field, count_parameters, probe_block_receptive_field, probe_receptive_field_empirical,
    receptive_field, Generator, GeneratorConfig, GeneratorKind, ProposedProbe,
};
use voclab::nn::{Graph, Tensor};
use voclab::Error;

fn run<T: voclab::nn::Real>(gen: &Generator<T>, mel: &Tensor<T>, noise: Option<&Tensor<T>>) -> voclab::Result<Tensor<T>> {
    let mut g = Graph::new();
    let m = g.constant(mel.clone());
    let z = noise.map(|n| g.constant(n.clone()));
    let y = gen.forward(&mut g, m, z)?;
    Ok(g.value(y).clone())
}

fn random_mel(seed: u64, batch: usize, n_mels: usize, frames: usize) -> Tensor<f64> {
    normal_tensor(&mut ChaCha8Rng::seed_from_u64(seed), vec![batch, n_mels, frames], 1.0)
}

#[test]
fn default_parameter_counts() {
    let expected = [
        (GeneratorKind::HifiganV2, 928_514),
        (GeneratorKind::Melgan, 4_266_050),
        (GeneratorKind::Pwgan, 1_316_218),
        (GeneratorKind::Umgan, 88_381_954),
        (GeneratorKind::Vocgan, 4_714_010),
        (GeneratorKind::Proposed, 1_229_449),
    ];
    for (kind, count) in expected {
        let g = Generator::<f32>::build(&GeneratorConfig::default_for(kind), 0).unwrap();
        assert_eq!(count_parameters(&g), count, "{kind}");
    }
}

#[test]
fn proposed_block_twelve_sees_8369_samples() {
    let cfg = GeneratorConfig::default_for(GeneratorKind::Proposed);
    assert_eq!(block_receptive_field(&cfg, 12).unwrap(), 8369);
    // strictly growing through the stack
    let fields: Vec<usize> = (1..=12).map(|b| block_receptive_field(&cfg, b).unwrap()).collect();
    assert!(fields.windows(2).all(|w| w[1] > w[0]));
    assert!(block_receptive_field(&cfg, 13).is_err());
    assert!(block_receptive_field(&GeneratorConfig::default_for(GeneratorKind::Melgan), 1).is_err());
}

#[test]
fn analytic_receptive_field_matches_impulse_probe() {
    for kind in GeneratorKind::ALL {
        let cfg = GeneratorConfig::tiny(kind, 4);
        let g = Generator::<f64>::build(&cfg, 3).unwrap();
        assert_eq!(receptive_field(&cfg).unwrap(), probe_receptive_field_empirical(&g).unwrap(), "{kind}");
    }
}

#[test]
fn analytic_block_field_matches_probe() {
    let cfg = GeneratorConfig::tiny(GeneratorKind::Proposed, 4);
    let g = Generator::<f64>::build(&cfg, 3).unwrap();
    for b in 1..=4 {
        assert_eq!(block_receptive_field(&cfg, b).unwrap(), probe_block_receptive_field(&g, b).unwrap(), "block {b}");
    }
}

#[test]
fn doubling_a_dilation_widens_the_field() {
    let GeneratorConfig::HifiganV2(mut c) = GeneratorConfig::tiny(GeneratorKind::HifiganV2, 4) else { unreachable!() };
    let base = Generator::<f64>::build(&GeneratorConfig::HifiganV2(c.clone()), 1).unwrap();
    let before = probe_receptive_field_empirical(&base).unwrap();
    // the widest branch bounds the field
    c.resblock_dilation_sizes[1][1] *= 2;
    let cfg = GeneratorConfig::HifiganV2(c);
    let wider = Generator::<f64>::build(&cfg, 1).unwrap();
    let after = probe_receptive_field_empirical(&wider).unwrap();
    assert!(after > before, "{after} <= {before}");
    assert_eq!(after, receptive_field(&cfg).unwrap());
}

#[test]
fn output_length_is_256_per_frame() {
    for kind in GeneratorKind::ALL {
        let g = Generator::<f64>::build(&GeneratorConfig::tiny(kind, 4), 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for t in [1usize, 17, 32, 100] {
            let mel = random_mel(t as u64, 2, 4, t);
            let noise = g.sample_noise(&mut rng, 2, t);
            let y = run(&g, &mel, noise.as_ref()).unwrap();
            assert_eq!(y.shape(), &[2, 1, 256 * t], "{kind} T={t}");
            assert!(y.all_finite());
            assert!(y.data().iter().all(|v| v.abs() <= 1.0));
        }
    }
}

#[test]
fn default_configs_have_the_same_length_law() {
    for kind in GeneratorKind::ALL {
        let g = Generator::<f32>::build(&GeneratorConfig::default_for(kind), 5).unwrap();
        let mel = random_mel(1, 1, 80, 4).cast::<f32>();
        let noise = g.sample_noise(&mut ChaCha8Rng::seed_from_u64(2), 1, 4);
        let y = run(&g, &mel, noise.as_ref()).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1024], "{kind}");
        assert!(y.all_finite());
    }
}

#[test]
fn gradients_match_central_differences() {
    for kind in GeneratorKind::ALL {
        let r = generator_grad_check(kind, 11);
        assert!(r.rel_error <= 1e-4, "{kind}: relative error {:.3e} over {} coords", r.rel_error, r.coords);
        assert!(r.dead_groups.is_empty(), "{kind}: zero gradient in {:?}", r.dead_groups);
    }
}

#[test]
fn tiny_configs_stay_small() {
    for kind in GeneratorKind::ALL {
        let g = Generator::<f64>::build(&GeneratorConfig::tiny(kind, 4), 0).unwrap();
        assert!(g.parameter_count() <= 20_000, "{kind}: {}", g.parameter_count());
    }
}

#[test]
fn same_seed_same_network() {
    for kind in GeneratorKind::ALL {
        let cfg = GeneratorConfig::tiny(kind, 4);
        let (a, b) = (Generator::<f32>::build(&cfg, 7).unwrap(), Generator::<f32>::build(&cfg, 7).unwrap());
        let c = Generator::<f32>::build(&cfg, 8).unwrap();
        assert_eq!(a.weight_records(), b.weight_records(), "{kind}");
        assert_ne!(a.weight_records(), c.weight_records(), "{kind}");
        let mel = random_mel(3, 1, 4, 5).cast::<f32>();
        let noise = a.sample_noise(&mut ChaCha8Rng::seed_from_u64(4), 1, 5);
        assert_eq!(run(&a, &mel, noise.as_ref()).unwrap(), run(&b, &mel, noise.as_ref()).unwrap());
    }
}

#[test]
fn latent_kinds_depend_on_noise() {
    for kind in [GeneratorKind::Pwgan, GeneratorKind::Proposed] {
        let g = Generator::<f64>::build(&GeneratorConfig::tiny(kind, 4), 1).unwrap();
        let mel = random_mel(5, 1, 4, 6);
        let z1 = g.sample_noise(&mut ChaCha8Rng::seed_from_u64(1), 1, 6).unwrap();
        let z2 = g.sample_noise(&mut ChaCha8Rng::seed_from_u64(2), 1, 6).unwrap();
        assert_ne!(run(&g, &mel, Some(&z1)).unwrap(), run(&g, &mel, Some(&z2)).unwrap(), "{kind}");
    }
}

#[test]
fn mel_only_kinds_are_deterministic_across_the_batch() {
    for kind in [GeneratorKind::HifiganV2, GeneratorKind::Melgan, GeneratorKind::Umgan, GeneratorKind::Vocgan] {
        let g = Generator::<f64>::build(&GeneratorConfig::tiny(kind, 4), 1).unwrap();
        let one = random_mel(6, 1, 4, 5);
        let mut data = one.data().to_vec();
        data.extend_from_slice(one.data());
        let two = Tensor::new(vec![2, 4, 5], data);
        let y = run(&g, &two, None).unwrap();
        let n = 256 * 5;
        assert_eq!(&y.data()[..n], &y.data()[n..], "{kind}");
    }
}

#[test]
fn bad_inputs_are_rejected() {
    let g = Generator::<f64>::build(&GeneratorConfig::tiny(GeneratorKind::Proposed, 4), 1).unwrap();
    let mel = random_mel(1, 1, 4, 3);
    let z = g.sample_noise(&mut ChaCha8Rng::seed_from_u64(1), 1, 3);
    assert!(matches!(run(&g, &mel, None), Err(Error::InvalidInput(_))));
    assert!(run(&g, &random_mel(1, 1, 5, 3), z.as_ref()).is_err());
    assert!(run(&g, &random_mel(1, 1, 4, 4), z.as_ref()).is_err());
    let mut nan = mel.clone();
    nan.data_mut()[0] = f64::NAN;
    assert!(run(&g, &nan, z.as_ref()).is_err());

    let h = Generator::<f64>::build(&GeneratorConfig::tiny(GeneratorKind::HifiganV2, 4), 1).unwrap();
    assert!(run(&h, &mel, z.as_ref()).is_err());
}

#[test]
fn upsampling_must_multiply_to_the_hop() {
    let GeneratorConfig::HifiganV2(mut c) = GeneratorConfig::default_for(GeneratorKind::HifiganV2) else { unreachable!() };
    c.upsample_rates = vec![8, 8, 2, 4];
    c.upsample_kernel_sizes = vec![16, 16, 4, 8];
    let cfg = GeneratorConfig::HifiganV2(c);
    assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    assert!(Generator::<f32>::build(&cfg, 0).is_err());
}

#[test]
fn every_block_reaches_the_output_through_its_skip() {
    let g = Generator::<f64>::build(&GeneratorConfig::default_for(GeneratorKind::Proposed), 2).unwrap();
    let p = g.as_proposed().unwrap();
    let blocks = p.config().blocks;
    let mel = random_mel(2, 1, 80, 3);
    let z = g.sample_noise(&mut ChaCha8Rng::seed_from_u64(3), 1, 3).unwrap();
    let output = |mask: Option<Vec<bool>>| {
        let mut gr = Graph::new();
        let m = gr.constant(mel.clone());
        let n = gr.constant(z.clone());
        let t = p.trace(&mut gr, g.store(), m, n, &ProposedProbe { skip_mask: mask, ..Default::default() });
        gr.value(t.output).clone()
    };
    let full = output(None);
    assert_eq!(full, run(&g, &mel, Some(&z)).unwrap());
    for b in 1..blocks {
        let mut mask = vec![true; blocks];
        mask[b] = false;
        assert_ne!(output(Some(mask)), full, "dropping block {} skip had no effect", b + 1);
    }
}

#[test]
fn conditioning_enters_every_block() {
    let g = Generator::<f64>::build(&GeneratorConfig::tiny(GeneratorKind::Proposed, 4), 2).unwrap();
    let p = g.as_proposed().unwrap();
    let c = p.config().channels;
    let frames = 4;
    let len = 256 * frames;
    let mel = random_mel(2, 1, 4, frames);
    let z = g.sample_noise(&mut ChaCha8Rng::seed_from_u64(3), 1, frames).unwrap();
    let inputs = |bump: bool| {
        let mut gr = Graph::new();
        let m = gr.constant(mel.clone());
        let n = gr.constant(z.clone());
        let mut cond = {
            let v = p.conditioning(&mut gr, g.store(), m);
            gr.value(v).clone()
        };
        if bump {
            // one channel, every sample of frame 2
            for s in 512..768 {
                cond.data_mut()[s] += 0.5;
            }
        }
        let cv = gr.constant(cond);
        let t = p.trace(&mut gr, g.store(), m, n, &ProposedProbe { conditioning: Some(cv), ..Default::default() });
        t.block_inputs.iter().map(|v| gr.value(*v).clone()).collect::<Vec<_>>()
    };
    let (a, b) = (inputs(false), inputs(true));
    assert_eq!(a[0].shape(), &[1, c, len]);
    for (k, (x, y)) in a.iter().zip(&b).enumerate() {
        let changed = (512..768).filter(|&s| x.data()[s] != y.data()[s]).count();
        assert_eq!(changed, 256, "block {} input", k + 1);
    }
}

#[test]
fn weights_round_trip_through_export() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.vwts");
    for kind in GeneratorKind::ALL {
        let cfg = GeneratorConfig::tiny(kind, 4);
        let a = Generator::<f32>::build(&cfg, 1).unwrap();
        a.export_weights(&path).unwrap();
        let mut b = Generator::<f32>::build(&cfg, 2).unwrap();
        b.import_weights(&path).unwrap();
        assert_eq!(a.weight_records(), b.weight_records(), "{kind}");
        let c = Generator::<f32>::from_weights(&path).unwrap();
        assert_eq!((c.config(), c.weight_records()), (&cfg, a.weight_records()));
    }
    let mut other = Generator::<f32>::build(&GeneratorConfig::tiny(GeneratorKind::Proposed, 8), 1).unwrap();
    assert!(matches!(other.import_weights(&path), Err(Error::HashMismatch { .. })));
}

#[test]
fn checked_in_configs_are_the_defaults() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/generators");
    for kind in GeneratorKind::ALL {
        let text = std::fs::read_to_string(dir.join(format!("{}.toml", kind.name()))).unwrap();
        assert_eq!(GeneratorConfig::from_toml(&text).unwrap(), GeneratorConfig::default_for(kind), "{kind}");
    }
}

#[test]
fn toml_round_trip() {
    for kind in GeneratorKind::ALL {
        let cfg = GeneratorConfig::tiny(kind, 4);
        let back = GeneratorConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn length_law_holds_for_any_frame_count(kind_i in 0usize..6, frames in 1usize..40, seed in any::<u64>()) {
        let kind = GeneratorKind::ALL[kind_i];
        let g = Generator::<f32>::build(&GeneratorConfig::tiny(kind, 4), seed).unwrap();
        let mel = random_mel(seed, 1, 4, frames).cast::<f32>();
        let noise = g.sample_noise(&mut ChaCha8Rng::seed_from_u64(seed), 1, frames);
        let y = run(&g, &mel, noise.as_ref()).unwrap();
        prop_assert_eq!(y.shape(), &[1, 1, 256 * frames]);
    }
}
