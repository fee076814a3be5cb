//! Shared test fixtures: tiny tone corpora that train in milliseconds.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::corpus::{AttributeLabelSet, CorpusManifest, InputType, Utterance};
use crate::frontend::{FeaturePipeline, LfccConfig};
use crate::models::ResNetConfig;
use crate::protocol::{Partition, ProtocolSpec};
use crate::seeds;
use crate::training::{RunConfig, Strategy, TrainConfig};
use crate::corpus::Task;

/// Write a mono 16 kHz PCM16 tone with a trace of seeded noise.
pub fn write_tone(path: &Path, freq: f64, n: usize, seed: u64) {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: 16_000,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut rng = seeds::rng_from(seed);
    let mut w = hound::WavWriter::create(path, spec).unwrap();
    for i in 0..n {
        use rand::Rng;
        let t = i as f64 / 16_000.0;
        let s = 0.5 * (2.0 * std::f64::consts::PI * freq * t).sin()
            + 0.01 * rng.random_range(-1.0..1.0);
        w.write_sample((s * i16::MAX as f64) as i16).unwrap();
    }
    w.finalize().unwrap();
}

/// One spoof utterance whose vocoder label doubles as its tone class.
pub fn tone_entry(dir: &Path, id: &str, vocoder: &str, freq: f64) -> (Utterance, AttributeLabelSet) {
    let path: PathBuf = dir.join(format!("{id}.wav"));
    write_tone(&path, freq, 4800, id.bytes().map(u64::from).sum());
    (
        Utterance {
            id: id.into(),
            audio_path: path.to_string_lossy().into_owned(),
            language: "en".into(),
            source_system: "sys".into(),
            is_bonafide: false,
            native_speaker_id: None,
            voice_id: None,
        },
        AttributeLabelSet {
            input_type: InputType::Text,
            acoustic_model: "am".into(),
            vocoder: vocoder.into(),
        },
    )
}

/// Two-class tone corpus ("low" 300 Hz, "high" 2600 Hz), `reps` files
/// per class, partitioned by `assign(rep_index)`.
pub fn tone_corpus(
    dir: &Path,
    reps: usize,
    assign: impl Fn(usize) -> Partition,
) -> (CorpusManifest, ProtocolSpec) {
    let mut entries = Vec::new();
    let mut partition = BTreeMap::new();
    for i in 0..reps {
        for (class, freq) in [("low", 300.0), ("high", 2600.0)] {
            let id = format!("{class}{i}");
            entries.push(tone_entry(dir, &id, class, freq));
            partition.insert(id, assign(i));
        }
    }
    let manifest = CorpusManifest::new("tones", vec![], entries).unwrap();
    let spec = ProtocolSpec {
        partition,
        removed_classes: BTreeMap::new(),
        dominance_threshold: None,
        target_ratios: (0.7, 0.3, 0.0),
        seed: 0,
    };
    (manifest, spec)
}

/// A vocoder-task config small enough to train end-to-end in a unit
/// test: 0.3 s crops (exactly the tone length), one two-wide stage.
pub fn tiny_e2e_cfg() -> TrainConfig {
    let mut run = RunConfig::default();
    run.epochs = 2;
    run.seed = 11;
    run.batch_size = Some(6);
    run.learning_rate = Some(0.01);
    run.augment = false;
    run.features = FeaturePipeline {
        window_seconds: 0.3,
        lfcc: LfccConfig {
            n_filters: 12,
            n_coeffs: 6,
            ..LfccConfig::default()
        },
        deltas: true,
    };
    run.backbone = ResNetConfig {
        input_coeffs: 18,
        block_counts: vec![1],
        widths: vec![2],
        embed_dim: 4,
    };
    TrainConfig::new(Task::Vocoder, Strategy::E2e, run)
}
