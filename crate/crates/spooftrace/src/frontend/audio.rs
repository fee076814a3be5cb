//! Decoding, resampling and fixed-length windowing of audio files.

use std::path::Path;

use rand::Rng;

use crate::{seeds, Error, Result, CANONICAL_RATE};

/// How the fixed-length window is placed inside a longer recording.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CropPolicy {
    /// Window starts at sample 0. Used for evaluation so results repeat.
    Start,
    /// Window start drawn uniformly from the valid range, seeded.
    Random { seed: u64 },
}

/// A mono, canonical-rate, fixed-length slice of a recording.
#[derive(Debug, Clone)]
pub struct LoadedWindow {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    /// Length after decoding and resampling, before padding or cropping.
    pub source_len: usize,
}

/// Decode `path`, mix to mono, resample to the canonical rate, then
/// repeat-pad or crop to exactly `target_len` samples.
///
/// Files shorter than the window are tiled end-to-end until they cover it;
/// longer files are cropped according to `policy`.
pub fn load_window(path: &Path, target_len: usize, policy: CropPolicy) -> Result<LoadedWindow> {
    if target_len == 0 {
        return Err(Error::InvalidInput("window length must be positive".into()));
    }
    let samples = decode_audio(path)?;
    let source_len = samples.len();
    let samples = place_window(&samples, target_len, policy);
    Ok(LoadedWindow {
        samples,
        sample_rate: CANONICAL_RATE,
        source_len,
    })
}

/// Decode `path`, mix to mono and resample to the canonical rate, without
/// any windowing. Training keeps these in memory so each epoch can place
/// a fresh crop without re-decoding.
pub fn decode_audio(path: &Path) -> Result<Vec<f64>> {
    let (mut samples, rate) = decode(path)?;
    if samples.is_empty() {
        return Err(Error::Audio(format!(
            "{}: no samples decoded",
            path.display()
        )));
    }
    if rate != CANONICAL_RATE {
        samples = resample(&samples, rate, CANONICAL_RATE);
    }
    Ok(samples)
}

/// Tile-then-crop placement shared by training and evaluation loads.
pub(crate) fn place_window(samples: &[f64], target_len: usize, policy: CropPolicy) -> Vec<f64> {
    let padded: Vec<f64> = if samples.len() >= target_len {
        samples.to_vec()
    } else {
        let mut out = Vec::with_capacity(target_len);
        while out.len() < target_len {
            let take = (target_len - out.len()).min(samples.len());
            out.extend_from_slice(&samples[..take]);
        }
        out
    };
    let slack = padded.len() - target_len;
    let offset = match policy {
        CropPolicy::Start => 0,
        CropPolicy::Random { seed } => {
            if slack == 0 {
                0
            } else {
                seeds::rng_from(seed).random_range(0..=slack)
            }
        }
    };
    padded[offset..offset + target_len].to_vec()
}

fn decode(path: &Path) -> Result<(Vec<f64>, u32)> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    match ext.as_str() {
        "wav" => decode_wav(path),
        "flac" => decode_flac(path),
        other => Err(Error::Audio(format!(
            "{}: unsupported audio extension `{other}`",
            path.display()
        ))),
    }
}

fn decode_wav(path: &Path) -> Result<(Vec<f64>, u32)> {
    let mut reader =
        hound::WavReader::open(path).map_err(|e| Error::Audio(format!("{}: {e}", path.display())))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(Error::Audio(format!("{}: zero channels", path.display())));
    }
    let interleaved: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Float => reader
            .samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Audio(format!("{}: {e}", path.display())))?,
        hound::SampleFormat::Int => {
            let scale = 1.0 / (1i64 << (spec.bits_per_sample - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 * scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Audio(format!("{}: {e}", path.display())))?
        }
    };
    Ok((mix_to_mono(&interleaved, channels), spec.sample_rate))
}

fn decode_flac(path: &Path) -> Result<(Vec<f64>, u32)> {
    let mut reader = claxon::FlacReader::open(path)
        .map_err(|e| Error::Audio(format!("{}: {e}", path.display())))?;
    let info = reader.streaminfo();
    let channels = info.channels as usize;
    let scale = 1.0 / (1i64 << (info.bits_per_sample - 1)) as f64;
    let mut interleaved = Vec::new();
    {
        let mut blocks = reader.blocks();
        let mut buf = Vec::new();
        loop {
            match blocks.read_next_or_eof(buf) {
                Ok(Some(block)) => {
                    let n = block.duration() as usize;
                    for t in 0..n {
                        for ch in 0..channels {
                            interleaved.push(block.sample(ch as u32, t as u32) as f64 * scale);
                        }
                    }
                    buf = block.into_buffer();
                }
                Ok(None) => break,
                Err(e) => return Err(Error::Audio(format!("{}: {e}", path.display()))),
            }
        }
    }
    Ok((mix_to_mono(&interleaved, channels), info.sample_rate))
}

fn mix_to_mono(interleaved: &[f64], channels: usize) -> Vec<f64> {
    let frames = interleaved.len() / channels;
    let mut mono = Vec::with_capacity(frames);
    for f in 0..frames {
        let mut acc = 0.0;
        for ch in 0..channels {
            acc += interleaved[f * channels + ch];
        }
        mono.push((acc / channels as f64).clamp(-1.0, 1.0));
    }
    mono
}

/// Windowed-sinc resampler. The kernel is a Hann-windowed sinc evaluated in
/// continuous time at each output instant, with the cutoff at the lower of
/// the two Nyquist frequencies, so downsampling is band-limited.
pub(crate) fn resample(input: &[f64], from: u32, to: u32) -> Vec<f64> {
    if from == to || input.is_empty() {
        return input.to_vec();
    }
    let ratio = to as f64 / from as f64;
    let cutoff = ratio.min(1.0);
    // Half-width in input samples; wider when downsampling to keep the
    // transition band narrow relative to the lowered cutoff.
    let half_width = (16.0 / cutoff).ceil() as isize;
    let out_len = ((input.len() as f64) * ratio).round() as usize;
    let mut out = Vec::with_capacity(out_len);
    for n in 0..out_len {
        let center = n as f64 / ratio;
        let lo = (center.floor() as isize - half_width).max(0) as usize;
        let hi = ((center.floor() as isize + half_width) as usize).min(input.len() - 1);
        let mut acc = 0.0;
        let mut norm = 0.0;
        for m in lo..=hi {
            let x = m as f64 - center;
            let w = hann_sinc(x, cutoff, half_width as f64);
            acc += input[m] * w;
            norm += w;
        }
        // Normalizing by the kernel sum keeps DC gain at unity near edges.
        out.push(if norm.abs() > 1e-12 { acc / norm } else { 0.0 });
    }
    out
}

fn hann_sinc(x: f64, cutoff: f64, half_width: f64) -> f64 {
    if x.abs() >= half_width {
        return 0.0;
    }
    let sinc = if x == 0.0 {
        cutoff
    } else {
        (std::f64::consts::PI * cutoff * x).sin() / (std::f64::consts::PI * x)
    };
    let hann = 0.5 * (1.0 + (std::f64::consts::PI * x / half_width).cos());
    sinc * hann
}
