mod common;

use std::collections::{BTreeSet, HashMap};

use common::{glide, harmonic, mos_inputs};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use voclab::dsp::{read_wav, write_wav, MelAnalyzer, MelConfig, ResamplePolicy, Waveform, SAMPLE_RATE};
use voclab::evaluation::{
    assemble_mos_set, benchmark_csv, benchmark_table, mcd_report, mean_ci95, synthesize_set, BenchEntry, EvalPair,
    EvalReport, McdMode, MosSource, UtteranceScore, MOS_TOTAL,
};
use voclab::generators::{count_parameters, Generator, GeneratorConfig, GeneratorKind};
use voclab::training::{append_log, LogRecord, StepMetrics};

fn pair(id: &str, reference: Waveform, synthesized: Waveform) -> EvalPair {
    EvalPair { utterance_id: id.into(), reference, synthesized }
}

fn noisy(seed: u64, len: usize) -> Waveform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = harmonic(150.0 + seed as f64, len, 0.3);
    let s = base.samples().iter().map(|v| v + rand::Rng::random_range(&mut rng, -0.05..0.05)).collect();
    Waveform::new(s, SAMPLE_RATE).unwrap()
}

#[test]
fn self_pairs_score_zero() {
    let cfg = MelConfig::default();
    let pairs: Vec<_> = (0..3).map(|i| pair(&format!("u{i}"), noisy(i, 6000), noisy(i, 6000))).collect();
    for mode in McdMode::ALL {
        let r = mcd_report(&pairs, mode, &cfg).unwrap();
        assert_eq!(r.mean_mcd, 0.0, "{mode}");
        assert_eq!(r.ci95, 0.0);
        assert_eq!(r.per_utterance.len(), 3);
    }
}

#[test]
fn generator_outputs_paired_with_themselves_score_zero() {
    let an = MelAnalyzer::new(&MelConfig::default()).unwrap();
    let mel = an.mel_spectrogram(&noisy(1, 4096)).unwrap();
    for kind in GeneratorKind::ALL {
        let g = Generator::<f32>::build(&GeneratorConfig::tiny(kind, 80), 0).unwrap();
        let out = synthesize_set(&g, std::slice::from_ref(&mel), 1).unwrap();
        let w = out.waveforms[0].clone();
        let r = mcd_report(&[pair("x", w.clone(), w)], McdMode::Gt, &MelConfig::default()).unwrap();
        assert_eq!(r.mean_mcd, 0.0, "{kind}");
    }
}

#[test]
fn statistics_oracle() {
    let scores = [2.0, 4.0, 6.0]
        .iter()
        .enumerate()
        .map(|(i, &v)| UtteranceScore { utterance_id: format!("u{i}"), mcd_db: v, seconds: None, path_len: 10 })
        .collect();
    let r = EvalReport::from_scores(McdMode::Gt, scores).unwrap();
    // sample std of {2, 4, 6} is 2
    assert!((r.mean_mcd - 4.0).abs() < 1e-15);
    assert!((r.ci95 - 1.96 * 2.0 / 3f64.sqrt()).abs() < 1e-12);
    assert!(EvalReport::from_scores(McdMode::Gt, vec![]).is_err());
    assert_eq!(mean_ci95(&[3.0]).unwrap(), (3.0, 0.0));

    let csv = r.with_seconds(&HashMap::from([("u1".to_string(), 0.5)])).to_csv().unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "utterance_id,mcd_db,seconds,path_len");
    assert_eq!(lines[2], "u1,4.000000,0.500000,10");
    assert_eq!(lines[1], "u0,2.000000,,10");
    assert!(lines[4].starts_with("__mean__,4.000000"));
    assert!(lines[5].starts_with("__ci95__,"));
}

#[test]
fn alignment_helps_stretched_speech() {
    let cfg = MelConfig::default();
    let pairs = vec![pair("s", glide(0.6, 1.0), glide(0.6, 2.0))];
    let gt = mcd_report(&pairs, McdMode::Gt, &cfg).unwrap();
    let tts = mcd_report(&pairs, McdMode::Tts, &cfg).unwrap();
    assert!(tts.mean_mcd < gt.mean_mcd, "aligned {} vs diagonal {}", tts.mean_mcd, gt.mean_mcd);
    assert!(tts.per_utterance[0].path_len > gt.per_utterance[0].path_len);
}

#[test]
fn bad_pairs_are_rejected() {
    let cfg = MelConfig::default();
    assert!(mcd_report(&[], McdMode::Gt, &cfg).is_err());
    let silent = Waveform::new(vec![0.0; 4000], SAMPLE_RATE).unwrap();
    assert!(mcd_report(&[pair("z", silent, noisy(1, 4000))], McdMode::Gt, &cfg).is_err());
}

#[test]
fn mode_names_parse() {
    assert_eq!("gt".parse::<McdMode>().unwrap(), McdMode::Gt);
    assert_eq!("TTS".parse::<McdMode>().unwrap(), McdMode::Tts);
    assert!("other".parse::<McdMode>().is_err());
}

#[test]
fn mos_set_composition() {
    let (outputs, originals) = mos_inputs(150);
    let m = assemble_mos_set(&outputs, &originals, 11).unwrap();
    assert_eq!(m.items.len(), MOS_TOTAL);
    assert_eq!(MOS_TOTAL, 340);
    assert_eq!(m.count(|s| matches!(s, MosSource::Vocoder { .. })), 240);
    assert_eq!(m.count(|s| matches!(s, MosSource::Original)), 100);
    for kind in GeneratorKind::ALL {
        for mode in McdMode::ALL {
            assert_eq!(m.count(|s| *s == MosSource::Vocoder { kind, mode }), 20);
        }
    }
    let originals_used: BTreeSet<&str> =
        m.items.iter().filter(|i| i.source == MosSource::Original).map(|i| i.utterance_id.as_str()).collect();
    assert_eq!(originals_used.len(), 100);
    let sentences: BTreeSet<&str> = outputs[&GeneratorKind::Proposed][&McdMode::Gt].iter().map(|(id, _)| id.as_str()).collect();
    assert!(sentences.is_subset(&originals_used));
    assert_eq!(m.items.iter().map(|i| i.slot_id).collect::<Vec<_>>(), (0..340).collect::<Vec<_>>());

    assert_eq!(assemble_mos_set(&outputs, &originals, 11).unwrap(), m);
    assert_ne!(assemble_mos_set(&outputs, &originals, 12).unwrap().items, m.items);
}

#[test]
fn mos_set_contract_violations() {
    let (mut outputs, originals) = mos_inputs(150);
    assert!(assemble_mos_set(&outputs, &originals[..99], 1).is_err());
    let without: Vec<_> = originals.iter().filter(|(id, _)| id != "LJ050-0003").cloned().collect();
    assert!(assemble_mos_set(&outputs, &without, 1).is_err());
    let mut short = outputs.clone();
    short.get_mut(&GeneratorKind::Melgan).unwrap().get_mut(&McdMode::Tts).unwrap().pop();
    assert!(assemble_mos_set(&short, &originals, 1).is_err());
    outputs.remove(&GeneratorKind::Umgan);
    assert!(assemble_mos_set(&outputs, &originals, 1).is_err());
}

#[test]
fn mos_export_normalizes_loudness() {
    let dir = tempfile::tempdir().unwrap();
    let (outputs, originals) = mos_inputs(100);
    let mut m = assemble_mos_set(&outputs, &originals, 3).unwrap();
    // keep the export small: point every item at one of a few real files
    let files: Vec<_> = (0..4)
        .map(|i| {
            let p = dir.path().join(format!("src{i}.wav"));
            write_wav(&p, &harmonic(120.0 + 40.0 * i as f64, 4000, 0.05 + 0.1 * i as f64)).unwrap();
            p
        })
        .collect();
    m.items.truncate(12);
    for (i, item) in m.items.iter_mut().enumerate() {
        item.audio_path = files[i % 4].clone();
    }
    let out = dir.path().join("mos");
    m.export(&out, -21.0).unwrap();
    for item in &m.items {
        let w = read_wav(&out.join(format!("audio/slot_{:03}.wav", item.slot_id)), ResamplePolicy::Reject).unwrap();
        assert!((w.rms_dbfs() + 21.0).abs() < 0.01, "{}", w.rms_dbfs());
    }
    let slots = std::fs::read_to_string(out.join("slots.csv")).unwrap();
    assert_eq!(slots.lines().count(), 13);
    assert!(!slots.contains("src"));
    let key = std::fs::read_to_string(out.join("key.csv")).unwrap();
    assert_eq!(key.lines().next().unwrap(), "slot_id,source,kind,mode,utterance_id,source_path");
}

#[test]
fn synthesis_set_contract() {
    let an = MelAnalyzer::new(&MelConfig::default()).unwrap();
    let mels: Vec<_> = (0..150).map(|i| an.mel_spectrogram(&noisy(i, 700)).unwrap()).collect();
    let g = Generator::<f32>::build(&GeneratorConfig::tiny(GeneratorKind::Melgan, 80), 0).unwrap();
    let a = synthesize_set(&g, &mels, 0).unwrap();
    assert_eq!((a.waveforms.len(), a.seconds.len()), (150, 150));
    assert!(a.mean_seconds() > 0.0);
    assert!(a.waveforms.iter().zip(&mels).all(|(w, m)| w.len() == 256 * m.frames()));
    let b = synthesize_set(&g, &mels[..5], 9).unwrap();
    assert_eq!(&a.waveforms[..5], &b.waveforms[..]);
    assert!(synthesize_set(&g, &[], 0).is_err());

    let p = Generator::<f32>::build(&GeneratorConfig::tiny(GeneratorKind::Proposed, 80), 0).unwrap();
    let x = synthesize_set(&p, &mels[..3], 4).unwrap();
    let y = synthesize_set(&p, &mels[..3], 4).unwrap();
    let z = synthesize_set(&p, &mels[..3], 5).unwrap();
    assert_eq!(x.waveforms, y.waveforms);
    assert_ne!(x.waveforms, z.waveforms);
}

#[test]
fn benchmark_rows_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("hifigan.jsonl");
    for (i, s) in [0.2, 0.4].iter().enumerate() {
        let m = StepMetrics { step: i as u64, epoch: 0, loss_d: 1.0, loss_g_adv: 1.0, loss_fm: 1.0, loss_mel: 1.0, lr: 2e-4, seconds_per_batch: *s };
        append_log(&log, &LogRecord::Step(m)).unwrap();
    }
    let gens: Vec<_> = GeneratorKind::ALL.iter().map(|&k| Generator::<f32>::build(&GeneratorConfig::tiny(k, 80), 0).unwrap()).collect();
    let missing = dir.path().join("nope.jsonl");
    let entries: Vec<_> = gens
        .iter()
        .map(|g| BenchEntry {
            generator: g,
            metric_log: match g.kind() {
                GeneratorKind::HifiganV2 => Some(log.as_path()),
                GeneratorKind::Melgan => Some(missing.as_path()),
                _ => None,
            },
        })
        .collect();
    let an = MelAnalyzer::new(&MelConfig::default()).unwrap();
    let mels = vec![an.mel_spectrogram(&noisy(1, 2000)).unwrap(); 2];
    let rows = benchmark_table(&entries, &mels, 0).unwrap();
    assert_eq!(rows.len(), 6);
    for (row, g) in rows.iter().zip(&gens) {
        assert_eq!(row.params, count_parameters(g));
        let expected = if row.kind.uses_noise() { "Gaussian noise (+ mel)" } else { "Mel spectrogram" };
        assert_eq!(row.input_type, expected);
        let s = row.s_per_sample.unwrap();
        assert!(s.is_finite() && s > 0.0);
    }
    assert!((rows[0].s_per_batch.unwrap() - 0.3).abs() < 1e-12);
    assert!(rows[1..].iter().all(|r| r.s_per_batch.is_none()));

    let csv = benchmark_csv(&rows).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "kind,params,s_per_batch,s_per_sample,input_type");
    assert_eq!(lines.len(), 7);
    assert!(lines[2].starts_with(&format!("melgan,{},unavailable,", rows[1].params)));
    assert!(lines[3].ends_with(",Gaussian noise (+ mel)"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn mcd_ignores_common_gain(seed in 0u64..1000, gain in 0.05f64..4.0) {
        let cfg = MelConfig::default();
        let (r, s) = (noisy(seed, 3000), noisy(seed + 1, 3000));
        let scale = |w: &Waveform, g: f64| Waveform::new(w.samples().iter().map(|v| v * g).collect(), SAMPLE_RATE).unwrap();
        let base = mcd_report(&[pair("a", r.clone(), s.clone())], McdMode::Gt, &cfg).unwrap().mean_mcd;
        // power-of-two gains scale every intermediate exactly
        let exact = mcd_report(&[pair("a", scale(&r, 2.0), scale(&s, 2.0))], McdMode::Gt, &cfg).unwrap().mean_mcd;
        prop_assert_eq!(base, exact);
        let any = mcd_report(&[pair("a", scale(&r, gain), scale(&s, gain))], McdMode::Gt, &cfg).unwrap().mean_mcd;
        prop_assert!((base - any).abs() < 1e-9 * base.max(1.0));
    }

    #[test]
    fn aligned_never_worse_than_diagonal(seed in 0u64..1000, len in 1500usize..5000) {
        let cfg = MelConfig::default();
        let p = [pair("a", noisy(seed, len), noisy(seed + 7, len))];
        let gt = mcd_report(&p, McdMode::Gt, &cfg).unwrap().mean_mcd;
        let tts = mcd_report(&p, McdMode::Tts, &cfg).unwrap().mean_mcd;
        prop_assert!(tts <= gt + 1e-12);
    }
}
