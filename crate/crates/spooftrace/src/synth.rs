//! Synthetic desk-scale corpus generator.
//!
//! Real spoof datasets are external and huge; this module builds small
//! controllable stand-ins so the whole pipeline can run in CI. Every
//! utterance is assembled the way a TTS stack is: a harmonic source at
//! a per-voice fundamental (the voice identity), shaped by a spectral
//! envelope and amplitude modulation keyed to an *acoustic signature*
//! (standing in for the acoustic model), then passed through a comb
//! filter keyed to a *vocoder signature* (standing in for the vocoder),
//! plus a little seeded noise. Vocoder cues live in fine spectral
//! structure, acoustic cues in the envelope, so the vocoder task comes
//! out easier by construction. Bonafide audio uses a separate clean
//! recipe: vibrato, soft attack and release, no modulation, no comb.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    write_manifest, AttributeLabelSet, CorpusManifest, InputType, ProvenanceEntry, Utterance,
    BONAFIDE,
};
use crate::{digest, seeds, Error, Result};

/// Spectral-envelope and modulation recipe standing in for an acoustic
/// model. The per-file jitter on `rolloff` and `am_hz` makes acoustic
/// classes noisier than vocoder classes on purpose.
struct AcousticSig {
    id: &'static str,
    /// Harmonic k gets amplitude 1/k^rolloff.
    rolloff: f64,
    /// Gain applied to odd harmonics; below 1 emphasizes even ones.
    odd_gain: f64,
    /// Center of a resonance bump in Hz; 0 disables it.
    formant_hz: f64,
    /// Amplitude-modulation rate and depth, the envelope-style cue.
    am_hz: f64,
    am_depth: f64,
}

const ACOUSTIC_SIGS: [AcousticSig; 6] = [
    AcousticSig { id: "bright-am2", rolloff: 0.25, odd_gain: 1.0, formant_hz: 0.0, am_hz: 2.0, am_depth: 0.55 },
    AcousticSig { id: "dark-am11", rolloff: 1.5, odd_gain: 1.0, formant_hz: 0.0, am_hz: 11.0, am_depth: 0.45 },
    AcousticSig { id: "odd-am5", rolloff: 0.7, odd_gain: 3.5, formant_hz: 0.0, am_hz: 5.0, am_depth: 0.35 },
    AcousticSig { id: "formant-am7", rolloff: 0.5, odd_gain: 1.0, formant_hz: 1500.0, am_hz: 7.0, am_depth: 0.4 },
    AcousticSig { id: "even-am3", rolloff: 0.9, odd_gain: 0.3, formant_hz: 0.0, am_hz: 3.3, am_depth: 0.5 },
    AcousticSig { id: "flat-am9", rolloff: 0.05, odd_gain: 1.0, formant_hz: 2600.0, am_hz: 9.0, am_depth: 0.25 },
];

/// Comb-filter recipe standing in for a vocoder:
/// `y[n] = x[n] + gain * x[n - delay]`. Delays are prime so no two
/// notch patterns ever line up.
struct VocoderSig {
    id: &'static str,
    delay: usize,
    gain: f64,
}

const VOCODER_SIGS: [VocoderSig; 6] = [
    VocoderSig { id: "comb-17", delay: 17, gain: 0.9 },
    VocoderSig { id: "comb-29", delay: 29, gain: 0.8 },
    VocoderSig { id: "comb-43", delay: 43, gain: 0.85 },
    VocoderSig { id: "comb-61", delay: 61, gain: 0.75 },
    VocoderSig { id: "comb-89", delay: 89, gain: 0.9 },
    VocoderSig { id: "comb-127", delay: 127, gain: 0.8 },
];

fn acoustic_sig(id: &str) -> Option<&'static AcousticSig> {
    ACOUSTIC_SIGS.iter().find(|s| s.id == id)
}

fn vocoder_sig(id: &str) -> Option<&'static VocoderSig> {
    VOCODER_SIGS.iter().find(|s| s.id == id)
}

/// Registered acoustic signature ids, in registry order.
pub fn acoustic_signature_ids() -> Vec<&'static str> {
    ACOUSTIC_SIGS.iter().map(|s| s.id).collect()
}

/// Registered vocoder signature ids, in registry order.
pub fn vocoder_signature_ids() -> Vec<&'static str> {
    VOCODER_SIGS.iter().map(|s| s.id).collect()
}

/// One class to generate: an (acoustic, vocoder) signature pair, or the
/// reserved `bonafide`/`bonafide` pair for genuine-style audio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthClass {
    pub acoustic: String,
    pub vocoder: String,
}

impl SynthClass {
    pub fn is_bonafide(&self) -> bool {
        self.acoustic == BONAFIDE && self.vocoder == BONAFIDE
    }
}

/// What to generate. Loadable from TOML; every field has a default
/// except `classes`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    /// Size of the shared spoof voice pool.
    pub n_voices: usize,
    /// How many pool voices each class draws from; classes wrap around
    /// the pool, so voices are shared once the pool runs out.
    pub voices_per_class: usize,
    pub samples_per_class: usize,
    pub duration_s: f64,
    pub rate: u32,
    pub seed: u64,
    pub classes: Vec<SynthClass>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_voices: 12,
            voices_per_class: 4,
            samples_per_class: 8,
            duration_s: 1.0,
            rate: 16_000,
            seed: 0,
            classes: Vec::new(),
        }
    }
}

impl SynthSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(format!("synth spec: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&crate::tsv::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(Error::InvalidConfig("synth spec has no classes".into()));
        }
        if self.n_voices == 0 || self.voices_per_class == 0 {
            return Err(Error::InvalidConfig("voice counts must be positive".into()));
        }
        if self.voices_per_class > self.n_voices {
            return Err(Error::InvalidConfig(format!(
                "voices_per_class {} exceeds the {}-voice pool",
                self.voices_per_class, self.n_voices
            )));
        }
        if self.samples_per_class == 0 {
            return Err(Error::InvalidConfig("samples_per_class must be positive".into()));
        }
        if !self.duration_s.is_finite() || !(0.05..=60.0).contains(&self.duration_s) {
            return Err(Error::InvalidConfig(format!(
                "duration {} s out of range (0.05 to 60)",
                self.duration_s
            )));
        }
        if !(8_000..=48_000).contains(&self.rate) {
            return Err(Error::InvalidConfig(format!(
                "sample rate {} out of range (8000 to 48000)",
                self.rate
            )));
        }
        let mut seen = BTreeSet::new();
        for class in &self.classes {
            if !seen.insert((class.acoustic.as_str(), class.vocoder.as_str())) {
                return Err(Error::InvalidConfig(format!(
                    "duplicate class ({}, {})",
                    class.acoustic, class.vocoder
                )));
            }
            if class.is_bonafide() {
                continue;
            }
            if class.acoustic == BONAFIDE || class.vocoder == BONAFIDE {
                return Err(Error::InvalidConfig(
                    "`bonafide` must be both signature ids or neither".into(),
                ));
            }
            if acoustic_sig(&class.acoustic).is_none() {
                return Err(Error::InvalidConfig(format!(
                    "unknown acoustic signature `{}`",
                    class.acoustic
                )));
            }
            if vocoder_sig(&class.vocoder).is_none() {
                return Err(Error::InvalidConfig(format!(
                    "unknown vocoder signature `{}`",
                    class.vocoder
                )));
            }
        }
        Ok(())
    }
}

/// Additive harmonic source rendered with a phasor bank: one complex
/// rotation per harmonic per sample, no per-sample `sin` calls.
fn harmonic_source(amps: &[f64], phases: &[f64], f0: f64, rate: f64, n: usize) -> Vec<f64> {
    let k_max = amps.len();
    let mut re = Vec::with_capacity(k_max);
    let mut im = Vec::with_capacity(k_max);
    let mut rot = Vec::with_capacity(k_max);
    for k in 0..k_max {
        let w = 2.0 * PI * (k + 1) as f64 * f0 / rate;
        re.push(phases[k].cos());
        im.push(phases[k].sin());
        rot.push((w.cos(), w.sin()));
    }
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut acc = 0.0;
        for k in 0..k_max {
            acc += amps[k] * im[k];
            let (c, s) = rot[k];
            let (r, i) = (re[k], im[k]);
            re[k] = r * c - i * s;
            im[k] = r * s + i * c;
        }
        out.push(acc);
    }
    out
}

/// Harmonic amplitudes for an acoustic signature at a given f0, capped
/// safely below Nyquist so the comb filter has headroom.
fn harmonic_amps(sig: &AcousticSig, rolloff: f64, f0: f64, rate: f64) -> Vec<f64> {
    let k_max = ((0.45 * rate / f0) as usize).clamp(1, 24);
    (1..=k_max)
        .map(|k| {
            let mut a = 1.0 / (k as f64).powf(rolloff);
            if k % 2 == 1 {
                a *= sig.odd_gain;
            }
            if sig.formant_hz > 0.0 {
                let d = (k as f64 * f0 - sig.formant_hz) / 350.0;
                a *= 1.0 + 2.0 * (-d * d).exp();
            }
            a
        })
        .collect()
}

fn render_spoof(
    sig_a: &AcousticSig,
    sig_v: &VocoderSig,
    f0: f64,
    rate: f64,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    // Acoustic cues jitter per file; the comb delay never does.
    let rolloff = (sig_a.rolloff + rng.random_range(-0.1..0.1)).max(0.0);
    let am_hz = sig_a.am_hz * rng.random_range(0.9..1.1);
    let f0 = f0 * (1.0 + rng.random_range(-0.01..0.01));

    let amps = harmonic_amps(sig_a, rolloff, f0, rate);
    let phases: Vec<f64> = (0..amps.len()).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
    let mut x = harmonic_source(&amps, &phases, f0, rate, n);

    let am_phase = rng.random_range(0.0..2.0 * PI);
    for (i, v) in x.iter_mut().enumerate() {
        let t = i as f64 / rate;
        *v *= 1.0 + sig_a.am_depth * (2.0 * PI * am_hz * t + am_phase).sin();
    }

    let mut y = vec![0.0; n];
    for i in 0..n {
        y[i] = x[i] + if i >= sig_v.delay { sig_v.gain * x[i - sig_v.delay] } else { 0.0 };
    }
    finish(&mut y, rng);
    y
}

fn render_bonafide(f0: f64, rate: f64, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let f0 = f0 * (1.0 + rng.random_range(-0.01..0.01));
    let k_max = ((0.45 * rate / (f0 * 1.03)) as usize).clamp(1, 20);
    let phases: Vec<f64> = (0..k_max).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
    let vib_phase = rng.random_range(0.0..2.0 * PI);

    // Vibrato modulates the instantaneous frequency, so the phase is
    // integrated sample by sample instead of using a fixed phasor.
    let mut theta = 0.0;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 / rate;
        let inst = f0 * (1.0 + 0.025 * (2.0 * PI * 5.2 * t + vib_phase).sin());
        theta += 2.0 * PI * inst / rate;
        let mut acc = 0.0;
        for k in 1..=k_max {
            acc += (k as f64 * theta + phases[k - 1]).sin() / k as f64;
        }
        out.push(acc);
    }

    // Soft Hann-shaped attack and release instead of modulation.
    let attack = ((0.06 * rate) as usize).min(n / 2);
    let release = ((0.1 * rate) as usize).min(n / 2);
    for i in 0..attack {
        out[i] *= 0.5 - 0.5 * (PI * i as f64 / attack as f64).cos();
    }
    for i in 0..release {
        out[n - 1 - i] *= 0.5 - 0.5 * (PI * i as f64 / release as f64).cos();
    }
    finish(&mut out, rng);
    out
}

/// Shared tail of every recipe: seeded noise floor, then peak
/// normalization to 0.7 so PCM16 never clips.
fn finish(samples: &mut [f64], rng: &mut ChaCha8Rng) {
    for v in samples.iter_mut() {
        *v += 0.01 * rng.random_range(-1.0..1.0);
    }
    let peak = samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        let scale = 0.7 / peak;
        for v in samples.iter_mut() {
            *v *= scale;
        }
    }
}

fn write_wav(path: &Path, samples: &[f64], rate: u32) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec)
        .map_err(|e| Error::Audio(format!("{}: {e}", path.display())))?;
    for &v in samples {
        let q = (v * i16::MAX as f64).round().clamp(i16::MIN as f64, i16::MAX as f64);
        w.write_sample(q as i16)
            .map_err(|e| Error::Audio(format!("{}: {e}", path.display())))?;
    }
    w.finalize()
        .map_err(|e| Error::Audio(format!("{}: {e}", path.display())))
}

/// Generate the corpus under `out_dir`: WAVs in `audio/`, the manifest
/// at `manifest.tsv`, and the manifest returned. Audio is bit-identical
/// for a given spec; every file gets its own seed stream derived from
/// the master seed, so generation order never matters.
pub fn synth_corpus(spec: &SynthSpec, out_dir: &Path) -> Result<CorpusManifest> {
    spec.validate()?;
    let audio_dir = out_dir.join("audio");
    std::fs::create_dir_all(&audio_dir).map_err(|e| Error::io(&audio_dir, e))?;

    let rate = f64::from(spec.rate);
    let n = (spec.duration_s * rate).round() as usize;
    let voice_f0 = |tag: &str, v: usize| -> f64 {
        seeds::rng(spec.seed, tag, v as u64).random_range(110.0..280.0)
    };

    let mut entries = Vec::new();
    for (c, class) in spec.classes.iter().enumerate() {
        let bonafide = class.is_bonafide();
        for s in 0..spec.samples_per_class {
            let file_idx = (c * spec.samples_per_class + s) as u64;
            let mut rng = seeds::rng(spec.seed, "file", file_idx);
            let slot = s % spec.voices_per_class;

            let (id, voice, f0) = if bonafide {
                let voice = format!("spk{slot:02}");
                (format!("bonafide-{s:04}"), voice, voice_f0("speaker", slot))
            } else {
                let v = (c * spec.voices_per_class + slot) % spec.n_voices;
                let voice = format!("voice{v:02}");
                let id = format!("{}-{}-{s:04}", class.acoustic, class.vocoder);
                (id, voice, voice_f0("voice", v))
            };

            let samples = if bonafide {
                render_bonafide(f0, rate, n, &mut rng)
            } else {
                let sig_a = acoustic_sig(&class.acoustic).expect("validated above");
                let sig_v = vocoder_sig(&class.vocoder).expect("validated above");
                render_spoof(sig_a, sig_v, f0, rate, n, &mut rng)
            };
            let path = audio_dir.join(format!("{id}.wav"));
            write_wav(&path, &samples, spec.rate)?;

            let utt = Utterance {
                id,
                audio_path: path.to_string_lossy().into_owned(),
                language: "en".into(),
                source_system: if bonafide {
                    BONAFIDE.to_string()
                } else {
                    format!("{}+{}", class.acoustic, class.vocoder)
                },
                is_bonafide: bonafide,
                native_speaker_id: bonafide.then(|| voice.clone()),
                voice_id: Some(voice),
            };
            let labels = AttributeLabelSet {
                input_type: if bonafide {
                    InputType::Bonafide
                } else if c % 2 == 0 {
                    InputType::Text
                } else {
                    InputType::Speech
                },
                acoustic_model: class.acoustic.clone(),
                vocoder: class.vocoder.clone(),
            };
            entries.push((utt, labels));
        }
    }

    let spec_json = serde_json::to_string(spec)
        .map_err(|e| Error::InvalidConfig(format!("synth spec serialization: {e}")))?;
    let provenance = vec![ProvenanceEntry {
        source: "synth-spec".into(),
        sha256: digest::sha256_hex(spec_json.as_bytes()),
    }];
    let manifest = CorpusManifest::new("synth", provenance, entries)?;
    write_manifest(&manifest, &out_dir.join("manifest.tsv"))?;
    Ok(manifest)
}
