use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use voclab::dsp::{read_wav, resample_linear, write_mel, write_wav, MelSpectrogram, ResamplePolicy, Waveform, SAMPLE_RATE};
use voclab::generators::{Generator, GeneratorConfig, GeneratorKind};

const BIN: &str = env!("CARGO_BIN_EXE_voclab");

fn voclab(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env("RUST_LOG", "warn").env_remove("VOCLAB_DEVICE").output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn assert_ok(o: &Output) {
    assert_eq!(code(o), 0, "stdout: {}\nstderr: {}", String::from_utf8_lossy(&o.stdout), stderr(o));
}

/// Fixture corpus plus a tiny-model config inside `dir`; returns the config path.
fn fixture_project(dir: &Path, count: usize, seconds: f64) -> PathBuf {
    let corpus = dir.join("corpus");
    assert_ok(&voclab(&["fixture", "--out", corpus.to_str().unwrap(), "--count", &count.to_string(), "--seconds", &seconds.to_string()]));
    let cfg = dir.join("run.toml");
    std::fs::write(
        &cfg,
        format!(
            r#"
[paths]
corpus = "corpus"
cache = "cache"
checkpoints = "ckpt"
output = "out"

[split]
train = {}
validation = 2

[model]
preset = "tiny"

[train]
batch_size = 2
segment_samples = 2048
max_steps = 4
validation_interval = 2
checkpoint_interval = 2
"#,
            count - 2
        ),
    )
    .unwrap();
    cfg
}

fn log_steps(path: &Path) -> Vec<u64> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap())
        .filter(|v| v["type"] == "step")
        .map(|v| v["step"].as_u64().unwrap())
        .collect()
}

fn wav_count(dir: &Path) -> usize {
    std::fs::read_dir(dir).unwrap().filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "wav")).count()
}

#[test]
fn usage_errors_exit_2() {
    let o = voclab(&["train", "--kind", "wavenet"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("wavenet"));
    let o = voclab(&["--set", "train.no_such_field=1", "prepare"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    let o = voclab(&["--set", "mel.hop_size=128", "prepare"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    let o = Command::new(BIN).args(["prepare"]).env("VOCLAB_DEVICE", "cuda:0").output().unwrap();
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    let o = voclab(&["synth", "--checkpoint", "x", "--out", "y"]);
    assert_eq!(code(&o), 2, "missing input flag is a usage error");
}

#[test]
fn pipeline_train_resume_synth_eval_plot_bench() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let cfg = fixture_project(d, 10, 1.0);
    let c = cfg.to_str().unwrap();
    assert_ok(&voclab(&["-c", c, "prepare"]));
    assert!(d.join("cache/manifest.jsonl").is_file());
    assert!(d.join("cache/provenance.json").is_file());

    assert_ok(&voclab(&["-c", c, "train", "--kind", "proposed"]));
    let run = d.join("ckpt/proposed");
    let ckpt = run.join("checkpoint.vckp");
    assert!(ckpt.is_file());
    assert!(!run.join("train.lock").exists(), "lock released");
    let prov: serde_json::Value = serde_json::from_slice(&std::fs::read(run.join("provenance.json")).unwrap()).unwrap();
    assert_eq!(prov["config_hash"].as_str().unwrap().len(), 16);
    assert_eq!(log_steps(&run.join("metrics.jsonl")), vec![1, 2, 3, 4]);

    // Resume continues at N+1.
    assert_ok(&voclab(&["-c", c, "--set", "train.max_steps=6", "train", "--kind", "proposed", "--resume"]));
    assert_eq!(log_steps(&run.join("metrics.jsonl")), vec![1, 2, 3, 4, 5, 6]);

    // A second trainer is locked out of a busy run directory.
    std::fs::write(run.join("train.lock"), "1").unwrap();
    let o = voclab(&["-c", c, "--set", "train.max_steps=8", "train", "--kind", "proposed", "--resume"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("train.lock"));
    std::fs::remove_file(run.join("train.lock")).unwrap();

    // Resuming with a changed optimiser setup is a configuration error.
    let o = voclab(&["-c", c, "--set", "train.lr_init=0.5", "--set", "train.max_steps=8", "train", "--kind", "proposed", "--resume"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));

    // Synthesis: one WAV per mel, reproducible under a seed.
    let mels = d.join("cache/mels");
    let (s1, s2) = (d.join("syn1"), d.join("syn2"));
    for s in [&s1, &s2] {
        assert_ok(&voclab(&["-c", c, "synth", "--checkpoint", ckpt.to_str().unwrap(), "--mels", mels.to_str().unwrap(), "--out", s.to_str().unwrap(), "--seed", "5"]));
    }
    assert_eq!(wav_count(&s1), 10);
    assert_eq!(std::fs::read(s1.join("FX001-0003.wav")).unwrap(), std::fs::read(s2.join("FX001-0003.wav")).unwrap());
    assert!(s1.join("synthesis_times.csv").is_file());

    // Latent kind without --seed prints the generated seed.
    let o = voclab(&["-c", c, "synth", "--checkpoint", ckpt.to_str().unwrap(), "--mels", mels.to_str().unwrap(), "--out", d.join("syn3").to_str().unwrap()]);
    assert_ok(&o);
    assert!(String::from_utf8_lossy(&o.stdout).contains("--seed"));

    // Evaluation against itself scores zero; synthesis times are carried over.
    let refs = d.join("corpus/wavs");
    let self_csv = d.join("eval/self.csv");
    assert_ok(&voclab(&["-c", c, "eval", "--ref", refs.to_str().unwrap(), "--syn", refs.to_str().unwrap(), "--mode", "GT", "--out", self_csv.to_str().unwrap()]));
    let text = std::fs::read_to_string(&self_csv).unwrap();
    let mean = text.lines().find(|l| l.starts_with("__mean__")).unwrap();
    assert_eq!(mean.split(',').nth(1).unwrap().parse::<f64>().unwrap(), 0.0);
    // TTS mode on time-stretched copies: DTW path length and carried-over times.
    let stretched = d.join("stretched");
    std::fs::create_dir_all(&stretched).unwrap();
    for e in std::fs::read_dir(&refs).unwrap() {
        let p = e.unwrap().path();
        let w = read_wav(&p, ResamplePolicy::Reject).unwrap();
        let slow = resample_linear(&w, (SAMPLE_RATE as f64 * 1.15) as u32).unwrap();
        write_wav(&stretched.join(p.file_name().unwrap()), &Waveform::new(slow.into_samples(), SAMPLE_RATE).unwrap()).unwrap();
    }
    std::fs::copy(s1.join("synthesis_times.csv"), stretched.join("synthesis_times.csv")).unwrap();
    let tts_csv = d.join("eval/tts.csv");
    assert_ok(&voclab(&["-c", c, "eval", "--ref", refs.to_str().unwrap(), "--syn", stretched.to_str().unwrap(), "--mode", "tts", "--out", tts_csv.to_str().unwrap()]));
    let row = std::fs::read_to_string(&tts_csv).unwrap().lines().nth(1).unwrap().to_string();
    let cells: Vec<&str> = row.split(',').collect();
    assert!(cells[1].parse::<f64>().unwrap() > 0.0);
    assert!(cells[2].parse::<f64>().unwrap() > 0.0, "seconds column filled");
    let ref_frames = 1 + 22050 / 256;
    assert!(cells[3].parse::<usize>().unwrap() > ref_frames, "path length recorded, longer than the diagonal");

    // Unpaired files are listed.
    let partial = d.join("partial");
    std::fs::create_dir_all(&partial).unwrap();
    std::fs::copy(s1.join("FX001-0001.wav"), partial.join("FX001-0001.wav")).unwrap();
    let o = voclab(&["-c", c, "eval", "--ref", refs.to_str().unwrap(), "--syn", partial.to_str().unwrap(), "--mode", "gt", "--out", d.join("eval/x.csv").to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("FX001-0002") && stderr(&o).contains("FX001-0010"));
    assert!(!stderr(&o).contains("FX001-0001"));

    // Weight export feeds synthesis from WAV input.
    let w = d.join("proposed.vwts");
    assert_ok(&voclab(&["-c", c, "export-weights", "--checkpoint", ckpt.to_str().unwrap(), "--out", w.to_str().unwrap()]));
    assert_ok(&voclab(&["-c", c, "synth", "--checkpoint", w.to_str().unwrap(), "--wavs", partial.to_str().unwrap(), "--out", d.join("syn4").to_str().unwrap(), "--seed", "1"]));
    assert_eq!(wav_count(&d.join("syn4")), 1);

    // Plot and benchmark from the run directory.
    let svg = d.join("plots/curves.svg");
    assert_ok(&voclab(&["plot", "--out", svg.to_str().unwrap(), run.join("metrics.jsonl").to_str().unwrap()]));
    let svg_text = std::fs::read_to_string(&svg).unwrap();
    assert!(svg_text.lines().any(|l| l.trim() == "proposed"));
    let bench = d.join("bench.csv");
    assert_ok(&voclab(&["-c", c, "bench", "--checkpoints", ckpt.to_str().unwrap(), "--mels", mels.to_str().unwrap(), "--out", bench.to_str().unwrap()]));
    let rows: Vec<String> = std::fs::read_to_string(&bench).unwrap().lines().map(String::from).collect();
    assert_eq!(rows[0], "kind,params,s_per_batch,s_per_sample,input_type");
    let cells: Vec<&str> = rows[1].split(',').collect();
    assert_eq!(cells[0], "proposed");
    for v in &cells[2..4] {
        let v: f64 = v.parse().unwrap();
        assert!(v.is_finite() && v > 0.0);
    }
    assert!(d.join("bench.csv.provenance.json").is_file());
}

#[test]
fn synth_writes_one_wav_per_mel_and_reports_bad_files() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let g = Generator::<f32>::build(&GeneratorConfig::tiny(GeneratorKind::HifiganV2, 80), 3).unwrap();
    let w = d.join("g.vwts");
    g.export_weights(&w).unwrap();
    let mels = d.join("mels");
    std::fs::create_dir_all(&mels).unwrap();
    for i in 0..20 {
        let frames = 4 + i % 5;
        let m = MelSpectrogram::new(80, frames, (0..80 * frames).map(|k| -4.0 + (k % 7) as f32 * 0.3).collect()).unwrap();
        write_mel(&mels.join(format!("s{i:02}.mel")), &m).unwrap();
    }
    let out = d.join("out");
    let args = ["synth", "--checkpoint", w.to_str().unwrap(), "--mels", mels.to_str().unwrap(), "--out", out.to_str().unwrap()];
    let o = voclab(&args);
    assert_ok(&o);
    assert_eq!(wav_count(&out), 20);
    assert!(!String::from_utf8_lossy(&o.stdout).contains("generated seed"), "mel-only kinds need no seed");

    // A corrupt input fails alone; the rest are still written.
    std::fs::write(mels.join("s05.mel"), b"garbage").unwrap();
    let out2 = d.join("out2");
    let o = voclab(&["synth", "--checkpoint", w.to_str().unwrap(), "--mels", mels.to_str().unwrap(), "--out", out2.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("s05"));
    assert_eq!(wav_count(&out2), 19);

    let empty = d.join("empty");
    std::fs::create_dir_all(&empty).unwrap();
    let o = voclab(&["synth", "--checkpoint", w.to_str().unwrap(), "--mels", empty.to_str().unwrap(), "--out", d.join("o3").to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("no input files"));

    let o = voclab(&["synth", "--checkpoint", mels.join("s01.mel").to_str().unwrap(), "--mels", mels.to_str().unwrap(), "--out", d.join("o4").to_str().unwrap()]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

fn write_log(path: &Path, steps: &[(u64, f64)], validation: &[(u64, f64)]) {
    let mut text = String::new();
    for &(step, mel) in steps {
        text.push_str(&format!(
            "{{\"type\":\"step\",\"step\":{step},\"epoch\":0,\"loss_d\":1.0,\"loss_g_adv\":1.0,\"loss_fm\":1.0,\"loss_mel\":{mel},\"lr\":0.0002,\"seconds_per_batch\":0.1}}\n"
        ));
    }
    for &(step, v) in validation {
        text.push_str(&format!("{{\"type\":\"validation\",\"step\":{step},\"mel_l1\":{v}}}\n"));
    }
    std::fs::create_dir_all(path.parent().unwrap()).unwrap();
    std::fs::write(path, text).unwrap();
}

#[test]
fn plot_overlays_logs_and_handles_degenerate_input() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let mut logs = Vec::new();
    for (i, kind) in GeneratorKind::ALL.iter().enumerate() {
        let p = d.join(kind.name()).join("metrics.jsonl");
        let steps: Vec<(u64, f64)> = (1..=50).map(|s| (s, 3.0 / (1.0 + s as f64 * 0.1) + i as f64 * 0.1)).collect();
        write_log(&p, &steps, &[(25, 2.0 + i as f64 * 0.1), (50, 1.5)]);
        logs.push(p);
    }
    let out = d.join("six.svg");
    let mut args = vec!["plot", "--out", out.to_str().unwrap()];
    args.extend(logs.iter().map(|p| p.to_str().unwrap()));
    assert_ok(&voclab(&args));
    let svg = std::fs::read_to_string(&out).unwrap();
    for kind in GeneratorKind::ALL {
        let labels = svg.lines().filter(|l| l.trim() == kind.name()).count();
        assert_eq!(labels, 2, "{kind} labeled in both panels");
    }

    let single = d.join("one.jsonl");
    write_log(&single, &[(1, 2.5)], &[]);
    let out = d.join("one.svg");
    assert_ok(&voclab(&["plot", "--out", out.to_str().unwrap(), single.to_str().unwrap()]));
    assert!(std::fs::read_to_string(&out).unwrap().contains("<circle"));

    let bad = d.join("bad.jsonl");
    std::fs::write(&bad, "{\"type\":\"validation\",\"step\":1,\"mel_l1\":1.0}\nnot json\n").unwrap();
    let o = voclab(&["plot", "--out", d.join("bad.svg").to_str().unwrap(), bad.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));

    let o = voclab(&["plot", "--out", d.join("none.svg").to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn mos_exports_the_listening_set() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let tone = |f: f64| Waveform::new((0..2205).map(|i| 0.3 * (i as f64 * f / 22050.0 * std::f64::consts::TAU).sin()).collect(), SAMPLE_RATE).unwrap();
    let originals = d.join("orig");
    std::fs::create_dir_all(&originals).unwrap();
    for i in 0..120 {
        write_wav(&originals.join(format!("LJ001-{i:04}.wav")), &tone(100.0 + i as f64)).unwrap();
    }
    let outputs = d.join("vocoded");
    for kind in GeneratorKind::ALL {
        for mode in ["gt", "tts"] {
            let dir = outputs.join(kind.name()).join(mode);
            std::fs::create_dir_all(&dir).unwrap();
            for i in 0..20 {
                write_wav(&dir.join(format!("LJ001-{:04}.wav", i * 3)), &tone(200.0)).unwrap();
            }
        }
    }
    let out = d.join("mos");
    let args = ["--set", "eval.mos_seed=9", "mos", "--outputs", outputs.to_str().unwrap(), "--originals", originals.to_str().unwrap(), "--out", out.to_str().unwrap()];
    assert_ok(&voclab(&args));
    assert_eq!(wav_count(&out.join("audio")), 340);
    let key = std::fs::read_to_string(out.join("key.csv")).unwrap();
    assert_eq!(key.lines().count(), 341);
    assert_eq!(key.lines().filter(|l| l.contains(",original,")).count(), 100);
    let slot = read_wav(&out.join("audio/slot_000.wav"), ResamplePolicy::Reject).unwrap();
    assert!((slot.rms_dbfs() + 21.0).abs() < 0.05, "loudness {}", slot.rms_dbfs());

    // Same seed, same order.
    let out2 = d.join("mos2");
    let mut args2 = args;
    args2[args2.len() - 1] = out2.to_str().unwrap();
    assert_ok(&voclab(&args2));
    assert_eq!(key, std::fs::read_to_string(out2.join("key.csv")).unwrap().replace("mos2", "mos"));

    std::fs::remove_dir_all(outputs.join("umgan")).unwrap();
    let o = voclab(&["mos", "--outputs", outputs.to_str().unwrap(), "--originals", originals.to_str().unwrap(), "--out", d.join("m3").to_str().unwrap()]);
    assert_eq!(code(&o), 1);
}

#[test]
fn eval_resamples_only_on_request() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("wb");
    std::fs::create_dir_all(&dir).unwrap();
    let w = Waveform::new((0..16000).map(|i| 0.3 * (i as f64 * 0.05).sin() * (i as f64 * 0.0007).cos()).collect(), 16000).unwrap();
    write_wav(&dir.join("a.wav"), &w).unwrap();
    let d = dir.to_str().unwrap();
    let out = tmp.path().join("e.csv");
    let o = voclab(&["eval", "--ref", d, "--syn", d, "--mode", "gt", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("16000"), "{}", stderr(&o));
    assert_ok(&voclab(&["eval", "--ref", d, "--syn", d, "--mode", "gt", "--out", out.to_str().unwrap(), "--resample"]));
}
