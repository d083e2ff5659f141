#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use voclab::datasets::TrainingSegment;
use voclab::discriminators::{Discriminator, DiscriminatorConfig};
use voclab::dsp::{MelAnalyzer, MelConfig, Waveform};
use voclab::generators::{Generator, GeneratorConfig, GeneratorKind};
use voclab::nn::{Graph, ParamId, ParamStore, Tensor};
use voclab::training::{discriminator_loss, feature_matching_loss, TrainSetup};

pub fn normal_tensor(rng: &mut ChaCha8Rng, shape: Vec<usize>, scale: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            z * scale
        })
        .collect();
    Tensor::new(shape, data)
}

/// Outcome of a central-difference gradient check over sampled coordinates.
#[derive(Debug)]
pub struct GradCheck {
    pub coords: usize,
    /// `‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖)` over all sampled coordinates.
    pub rel_error: f64,
    /// Parameter tensors whose analytic gradient is identically zero.
    pub dead_groups: Vec<String>,
}

const H: f64 = 1e-6;

/// Two coordinates of every trainable tensor, chosen at random.
fn sample_coords(store: &ParamStore<f64>, rng: &mut ChaCha8Rng) -> Vec<(ParamId, usize)> {
    let mut out = Vec::new();
    for id in store.trainable_ids() {
        let n = store.tensor(id).numel();
        for _ in 0..2.min(n) {
            out.push((id, rng.random_range(0..n)));
        }
    }
    out
}

fn finish(analytic: &[f64], numeric: &[f64], dead_groups: Vec<String>) -> GradCheck {
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
    let na = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nn = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
    GradCheck { coords: analytic.len(), rel_error: diff / na.max(nn).max(f64::MIN_POSITIVE), dead_groups }
}

fn dead_groups(store: &ParamStore<f64>, grad: impl Fn(ParamId) -> Option<Tensor<f64>>) -> Vec<String> {
    store
        .iter()
        .enumerate()
        .filter(|(_, (_, _, trainable))| *trainable)
        .filter(|(i, _)| grad(store.id_at(*i)).is_none_or(|g| g.data().iter().all(|v| *v == 0.0)))
        .map(|(_, (name, _, _))| name.to_string())
        .collect()
}

/// Checks the gradient of `⟨proj, G(mel, z)⟩` with respect to every
/// parameter group and to the mel input at the tiny config with 4 mel bands.
pub fn generator_grad_check(kind: GeneratorKind, seed: u64) -> GradCheck {
    let cfg = GeneratorConfig::tiny(kind, 4);
    let mut gen = Generator::<f64>::build(&cfg, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    let frames = 3;
    let mel = normal_tensor(&mut rng, vec![1, 4, frames], 1.0);
    let noise = gen.sample_noise(&mut rng, 1, frames);
    let proj = normal_tensor(&mut rng, vec![1, 1, frames * 256], 1.0);

    let eval = |gen: &Generator<f64>, mel: &Tensor<f64>| -> f64 {
        let mut g = Graph::new();
        let m = g.constant(mel.clone());
        let z = noise.clone().map(|n| g.constant(n));
        let y = gen.forward(&mut g, m, z).unwrap();
        g.value(y).data().iter().zip(proj.data()).map(|(a, b)| a * b).sum()
    };

    let mut g = Graph::new();
    let m = g.variable(mel.clone());
    let z = noise.clone().map(|n| g.constant(n));
    let y = gen.forward(&mut g, m, z).unwrap();
    let grads = g.backward_with(y, proj.clone());
    let dead = dead_groups(gen.store(), |id| grads.param(id).cloned());

    let (mut analytic, mut numeric) = (Vec::new(), Vec::new());
    for (id, i) in sample_coords(gen.store(), &mut rng) {
        analytic.push(grads.param(id).map_or(0.0, |t| t.data()[i]));
        let orig = gen.store().tensor(id).data()[i];
        gen.store_mut().tensor_mut(id).data_mut()[i] = orig + H;
        let up = eval(&gen, &mel);
        gen.store_mut().tensor_mut(id).data_mut()[i] = orig - H;
        let down = eval(&gen, &mel);
        gen.store_mut().tensor_mut(id).data_mut()[i] = orig;
        numeric.push((up - down) / (2.0 * H));
    }
    let dmel = grads.get(m).unwrap().clone();
    for _ in 0..6 {
        let i = rng.random_range(0..mel.numel());
        analytic.push(dmel.data()[i]);
        let mut up = mel.clone();
        up.data_mut()[i] += H;
        let mut down = mel.clone();
        down.data_mut()[i] -= H;
        numeric.push((eval(&gen, &up) - eval(&gen, &down)) / (2.0 * H));
    }
    finish(&analytic, &numeric, dead)
}

/// Checks the gradient of the least-squares discriminator loss plus the
/// feature-matching loss with respect to every discriminator parameter
/// group and to the fake waveform.
pub fn discriminator_grad_check(seed: u64) -> GradCheck {
    let mut d = Discriminator::<f64>::build(&DiscriminatorConfig::tiny(), seed).unwrap();
    d.refresh_spectral_norm();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xdef);
    let len = 600;
    let real = normal_tensor(&mut rng, vec![1, 1, len], 0.3);
    let fake = normal_tensor(&mut rng, vec![1, 1, len], 0.3);

    let build = |d: &Discriminator<f64>, g: &mut Graph<f64>, fake_v| {
        let r = g.constant(real.clone());
        let dr = d.discriminate(g, r).unwrap();
        let df = d.discriminate(g, fake_v).unwrap();
        let l1 = discriminator_loss(g, &dr.logits, &df.logits).unwrap();
        let l2 = feature_matching_loss(g, &dr.features, &df.features).unwrap();
        g.add(l1, l2)
    };
    let eval = |d: &Discriminator<f64>, fake: &Tensor<f64>| -> f64 {
        let mut g = Graph::new();
        let f = g.constant(fake.clone());
        let l = build(d, &mut g, f);
        g.scalar_value(l)
    };

    let mut g = Graph::new();
    let f = g.variable(fake.clone());
    let loss = build(&d, &mut g, f);
    let grads = g.backward(loss);
    let dead = dead_groups(d.store(), |id| grads.param(id).cloned());

    let (mut analytic, mut numeric) = (Vec::new(), Vec::new());
    for (id, i) in sample_coords(d.store(), &mut rng) {
        analytic.push(grads.param(id).map_or(0.0, |t| t.data()[i]));
        let orig = d.store().tensor(id).data()[i];
        d.store_mut().tensor_mut(id).data_mut()[i] = orig + H;
        let up = eval(&d, &fake);
        d.store_mut().tensor_mut(id).data_mut()[i] = orig - H;
        let down = eval(&d, &fake);
        d.store_mut().tensor_mut(id).data_mut()[i] = orig;
        numeric.push((up - down) / (2.0 * H));
    }
    let dfake = grads.get(f).unwrap().clone();
    for _ in 0..8 {
        let i = rng.random_range(0..len);
        analytic.push(dfake.data()[i]);
        let mut up = fake.clone();
        up.data_mut()[i] += H;
        let mut down = fake.clone();
        down.data_mut()[i] -= H;
        numeric.push((eval(&d, &up) - eval(&d, &down)) / (2.0 * H));
    }
    finish(&analytic, &numeric, dead)
}

/// Harmonic test tone.
pub fn harmonic(f0: f64, len: usize, amp: f64) -> Waveform {
    let sr = voclab::dsp::SAMPLE_RATE as f64;
    let s = (0..len)
        .map(|i| {
            let t = i as f64 / sr;
            (1..=6).map(|h| amp / h as f64 * (2.0 * std::f64::consts::PI * f0 * h as f64 * t).sin()).sum()
        })
        .collect();
    Waveform::new(s, voclab::dsp::SAMPLE_RATE).unwrap()
}

/// A batch of harmonic segments with their ground-truth mels.
pub fn tone_batch(n: usize, samples: usize) -> Vec<TrainingSegment> {
    let an = MelAnalyzer::new(&MelConfig::default()).unwrap();
    (0..n)
        .map(|b| {
            let w = harmonic(140.0 + 60.0 * b as f64, samples, 0.3);
            let m = an.mel_spectrogram(&w).unwrap().slice_frames(0, samples / 256).unwrap();
            TrainingSegment::new(format!("tone{b}"), w, m, 256).unwrap()
        })
        .collect()
}

/// Tiny generator and discriminator with a short segment, for fast training tests.
pub fn tiny_setup(kind: GeneratorKind, batch: usize, segment: usize) -> TrainSetup {
    let mut s = TrainSetup::new(GeneratorConfig::tiny(kind, 80));
    s.discriminator = DiscriminatorConfig::tiny();
    s.train.batch_size = batch;
    s.train.segment_samples = segment;
    s
}

/// Six kinds × two modes × 20 sentences of synthetic file names, plus a pool
/// of `pool` originals that contains the 20 sentences.
pub fn mos_inputs(
    pool: usize,
) -> (voclab::evaluation::VocoderOutputs, Vec<(String, std::path::PathBuf)>) {
    use voclab::evaluation::McdMode;
    let sentences: Vec<String> = (0..20).map(|i| format!("LJ050-{:04}", 5 * i + 3)).collect();
    let outputs = GeneratorKind::ALL
        .iter()
        .map(|&k| {
            let modes = McdMode::ALL
                .iter()
                .map(|&m| {
                    let files = sentences.iter().map(|s| (s.clone(), format!("{k}/{m}/{s}.wav").into())).collect();
                    (m, files)
                })
                .collect();
            (k, modes)
        })
        .collect();
    let mut originals: Vec<(String, std::path::PathBuf)> =
        (0..150).map(|i| format!("LJ050-{i:04}")).map(|id| (id.clone(), format!("orig/{id}.wav").into())).collect();
    originals.truncate(pool);
    assert!(sentences.iter().all(|s| originals.iter().any(|(id, _)| id == s)));
    (outputs, originals)
}

/// Pitch glide rendered at time scale `stretch` (2.0 plays it twice as slowly
/// at the same pitch).
pub fn glide(seconds: f64, stretch: f64) -> Waveform {
    let sr = voclab::dsp::SAMPLE_RATE as f64;
    let n = (seconds * stretch * sr) as usize;
    let mut phase = 0.0;
    let s = (0..n)
        .map(|i| {
            let tau = i as f64 / sr / stretch;
            let f = 120.0 + 180.0 * tau / seconds;
            phase += 2.0 * std::f64::consts::PI * f / sr;
            let env = 0.2 + 0.8 * (std::f64::consts::PI * 3.0 * tau / seconds).sin().abs();
            0.3 * env * (1..=5).map(|h| (h as f64 * phase).sin() / h as f64).sum::<f64>()
        })
        .collect();
    Waveform::new(s, voclab::dsp::SAMPLE_RATE).unwrap()
}
