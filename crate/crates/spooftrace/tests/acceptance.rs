//! Acceptance suite: eight verifiable properties covering the feature
//! frontend, the margin loss, clustering, protocol construction, the two
//! training strategies on a synthesized corpus, the metric calculators,
//! and optional real-dataset ingestion.
//!
//! Every test finishes by printing one `criterion N (...): pass` line
//! (visible with `--nocapture`); the test verdicts themselves carry the
//! same information in the default run.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spooftrace::corpus::{
    AttributeLabelSet, CorpusManifest, InputType, LabelMap, Task, Utterance,
};
use spooftrace::evaluation::{
    confusion, evaluate, macro_accuracy, macro_f1, micro_accuracy, EvalReport,
};
use spooftrace::frontend::{lfcc, FeaturePipeline, LfccConfig};
use spooftrace::models::{lmcl_loss, EmbeddingProvider, LmclParams, ResNetConfig};
use spooftrace::protocol::{
    emit_protocol, filter_degenerate, partition_disjoint, spherical_kmeans, EmbeddingSet,
    Partition, ProtocolSpec, VoiceClustering,
};
use spooftrace::synth::{synth_corpus, SynthClass, SynthSpec};
use spooftrace::training::{
    train_binary, train_e2e, train_two_stage, ModelState, RunConfig, Strategy, TrainConfig,
};

// ---------------------------------------------------------------------
// Criterion 1: LFCC against an independent direct-DFT oracle.
// ---------------------------------------------------------------------

/// Direct-sum LFCC: naive DFT via a twiddle table, filterbank and DCT
/// written out longhand. Shares no code with the library pipeline.
fn lfcc_oracle(samples: &[f64], rate: u32, cfg: &LfccConfig) -> Vec<Vec<f64>> {
    let win = (cfg.window_ms * rate as f64 / 1000.0).round() as usize;
    let shift = (cfg.shift_ms * rate as f64 / 1000.0).round() as usize;
    let n_frames = 1 + (samples.len() - win) / shift;
    let n_fft = win.next_power_of_two();
    let n_bins = n_fft / 2 + 1;

    let pi = std::f64::consts::PI;
    let window: Vec<f64> = (0..win)
        .map(|n| 0.54 - 0.46 * (2.0 * pi * n as f64 / (win - 1) as f64).cos())
        .collect();
    // exp(-2*pi*i*k*n/N) indexed by (k*n) mod N.
    let twiddle: Vec<(f64, f64)> = (0..n_fft)
        .map(|j| {
            let a = -2.0 * pi * j as f64 / n_fft as f64;
            (a.cos(), a.sin())
        })
        .collect();

    let nyquist = rate as f64 / 2.0;
    let edges: Vec<f64> = (0..cfg.n_filters + 2)
        .map(|i| i as f64 * nyquist / (cfg.n_filters + 1) as f64)
        .collect();

    let mut out = Vec::with_capacity(n_frames);
    for t in 0..n_frames {
        let frame: Vec<f64> = (0..win)
            .map(|i| samples[t * shift + i] * window[i])
            .collect();
        let mut power = vec![0.0; n_bins];
        for (k, p) in power.iter_mut().enumerate() {
            let mut re = 0.0;
            let mut im = 0.0;
            for (n, &x) in frame.iter().enumerate() {
                let (c, s) = twiddle[(k * n) % n_fft];
                re += x * c;
                im += x * s;
            }
            *p = re * re + im * im;
        }
        let mut log_e = vec![0.0; cfg.n_filters];
        for (m, le) in log_e.iter_mut().enumerate() {
            let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            let mut e = 0.0;
            for (k, &p) in power.iter().enumerate() {
                let f = k as f64 * rate as f64 / n_fft as f64;
                let w = if f > lo && f < mid {
                    (f - lo) / (mid - lo)
                } else if f == mid {
                    1.0
                } else if f > mid && f < hi {
                    (hi - f) / (hi - mid)
                } else {
                    0.0
                };
                e += w * p;
            }
            *le = e.max(1e-10).ln();
        }
        let mut coeffs = vec![0.0; cfg.n_coeffs];
        for (k, c) in coeffs.iter_mut().enumerate() {
            let scale = if k == 0 {
                (1.0 / cfg.n_filters as f64).sqrt()
            } else {
                (2.0 / cfg.n_filters as f64).sqrt()
            };
            *c = (0..cfg.n_filters)
                .map(|m| {
                    scale
                        * (pi * k as f64 * (2 * m + 1) as f64 / (2 * cfg.n_filters) as f64).cos()
                        * log_e[m]
                })
                .sum();
        }
        out.push(coeffs);
    }
    out
}

#[test]
fn criterion_1_lfcc_matches_an_independent_oracle() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x1fcc);
    let configs = [
        LfccConfig::default(),
        LfccConfig {
            window_ms: 25.0,
            shift_ms: 10.0,
            n_filters: 24,
            n_coeffs: 20,
        },
        LfccConfig {
            window_ms: 32.0,
            shift_ms: 16.0,
            n_filters: 16,
            n_coeffs: 12,
        },
        LfccConfig {
            window_ms: 12.5,
            shift_ms: 5.0,
            n_filters: 30,
            n_coeffs: 18,
        },
    ];

    let mut worst: f64 = 0.0;
    for signal in 0..12 {
        let cfg = &configs[signal % configs.len()];
        let len = rng.random_range(3200..6400);
        // Mixture of random sinusoids over broadband noise.
        let tones: Vec<(f64, f64, f64)> = (0..4)
            .map(|_| {
                (
                    rng.random_range(0.05..0.5),
                    rng.random_range(50.0..7800.0),
                    rng.random_range(0.0..std::f64::consts::TAU),
                )
            })
            .collect();
        let samples: Vec<f64> = (0..len)
            .map(|i| {
                let t = i as f64 / 16000.0;
                let mut v = rng.random_range(-0.02..0.02);
                for &(a, f, p) in &tones {
                    v += a * (std::f64::consts::TAU * f * t + p).sin();
                }
                v
            })
            .collect();

        let ours = lfcc(&samples, 16000, cfg).unwrap();
        let reference = lfcc_oracle(&samples, 16000, cfg);
        assert_eq!(ours.n_frames(), reference.len(), "signal {signal}: frame count");
        for (t, row) in reference.iter().enumerate() {
            for (k, &want) in row.iter().enumerate() {
                worst = worst.max((ours.data[[t, k]] - want).abs());
            }
        }
    }
    let secs = started.elapsed().as_secs_f64();
    assert!(worst < 1e-6, "max abs deviation {worst}");
    assert!(secs < 10.0, "oracle comparison took {secs:.1}s");
    println!("criterion 1 (lfcc vs direct-DFT oracle): pass (max dev {worst:.2e}, {secs:.2}s)");
}

// ---------------------------------------------------------------------
// Criterion 2: margin-cosine loss correctness.
// ---------------------------------------------------------------------

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}

#[test]
fn criterion_2_lmcl_reduces_matches_closed_form_and_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x10c1);

    // (a) margin 0, scale 1 must equal plain cross-entropy over cosines.
    let mut worst_a: f64 = 0.0;
    for _ in 0..20 {
        let n = rng.random_range(2..8);
        let d = rng.random_range(2..6);
        let c = rng.random_range(2..5);
        let emb = random_matrix(&mut rng, n, d);
        let w = random_matrix(&mut rng, c, d);
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
        let params = LmclParams {
            scale: 1.0,
            margin: 0.0,
        };
        let (loss, _, _) = lmcl_loss(&emb, &labels, &w, &params).unwrap();

        let mut expected = 0.0;
        for i in 0..n {
            let xi = emb.row(i);
            let xn = xi.dot(&xi).sqrt();
            let cosines: Vec<f64> = (0..c)
                .map(|j| {
                    let wj = w.row(j);
                    xi.dot(&wj) / (xn * wj.dot(&wj).sqrt())
                })
                .collect();
            let max = cosines.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let denom: f64 = cosines.iter().map(|v| (v - max).exp()).sum();
            expected -= (cosines[labels[i]] - max) - denom.ln();
        }
        expected /= n as f64;
        worst_a = worst_a.max((loss - expected).abs());
    }
    assert!(worst_a < 1e-9, "reduction deviates by {worst_a}");

    // (b) one sample, two classes: loss = ln(1 + exp(s*(cos_o - cos_y + m))),
    // computed in the overflow-safe ln(1+exp) form.
    let mut worst_b: f64 = 0.0;
    for _ in 0..20 {
        let emb = random_matrix(&mut rng, 1, 3);
        let w = random_matrix(&mut rng, 2, 3);
        let y = rng.random_range(0..2);
        let params = LmclParams {
            scale: rng.random_range(1.0..40.0),
            margin: rng.random_range(0.0..0.9),
        };
        let (loss, _, _) = lmcl_loss(&emb, &[y], &w, &params).unwrap();

        let x = emb.row(0);
        let xn = x.dot(&x).sqrt();
        let cos_of = |j: usize| {
            let wj = w.row(j);
            x.dot(&wj) / (xn * wj.dot(&wj).sqrt())
        };
        let arg = params.scale * (cos_of(1 - y) - cos_of(y) + params.margin);
        let expected = if arg > 0.0 {
            arg + (-arg).exp().ln_1p()
        } else {
            arg.exp().ln_1p()
        };
        worst_b = worst_b.max((loss - expected).abs());
    }
    assert!(worst_b < 1e-9, "closed form deviates by {worst_b}");

    // (c) analytic gradients against central differences, every coordinate.
    let mut worst_c: f64 = 0.0;
    for _ in 0..20 {
        let n = rng.random_range(2..6);
        let d = rng.random_range(2..5);
        let c = rng.random_range(2..4);
        let emb = random_matrix(&mut rng, n, d);
        let w = random_matrix(&mut rng, c, d);
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
        let params = LmclParams {
            scale: rng.random_range(2.0..32.0),
            margin: rng.random_range(0.0..0.5),
        };
        let (_, d_emb, d_w) = lmcl_loss(&emb, &labels, &w, &params).unwrap();
        let h = 1e-6;
        // The loss is O(10), so central differences carry ~1e-9 of
        // absolute rounding noise; flooring the denominator at 1e-3
        // keeps that noise from registering on vanishing gradients
        // while real errors on any non-negligible coordinate still show.
        let rel = |fd: f64, an: f64| (fd - an).abs() / fd.abs().max(an.abs()).max(1e-3);

        for i in 0..n {
            for j in 0..d {
                let mut e2 = emb.clone();
                e2[[i, j]] += h;
                let up = lmcl_loss(&e2, &labels, &w, &params).unwrap().0;
                e2[[i, j]] -= 2.0 * h;
                let down = lmcl_loss(&e2, &labels, &w, &params).unwrap().0;
                worst_c = worst_c.max(rel((up - down) / (2.0 * h), d_emb[[i, j]]));
            }
        }
        for i in 0..c {
            for j in 0..d {
                let mut w2 = w.clone();
                w2[[i, j]] += h;
                let up = lmcl_loss(&emb, &labels, &w2, &params).unwrap().0;
                w2[[i, j]] -= 2.0 * h;
                let down = lmcl_loss(&emb, &labels, &w2, &params).unwrap().0;
                worst_c = worst_c.max(rel((up - down) / (2.0 * h), d_w[[i, j]]));
            }
        }
    }
    assert!(worst_c < 1e-4, "max gradient rel err {worst_c}");

    println!(
        "criterion 2 (margin loss: reduction {worst_a:.2e}, closed form {worst_b:.2e}, \
         gradients {worst_c:.2e}): pass"
    );
}

// ---------------------------------------------------------------------
// Criterion 3: clustering against brute-force enumeration.
// ---------------------------------------------------------------------

fn random_unit_vectors(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            loop {
                let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > 1e-3 {
                    return v.iter().map(|x| x / norm).collect();
                }
            }
        })
        .collect()
}

fn embedding_set(vectors: &[Vec<f64>]) -> EmbeddingSet {
    let mut set = EmbeddingSet::new(vectors[0].len()).unwrap();
    for (i, v) in vectors.iter().enumerate() {
        set.insert(format!("p{i:02}"), v.clone()).unwrap();
    }
    set
}

/// Minimum inertia over every assignment of `n` points to `k` clusters,
/// each cluster scored at its own optimal centroid (the normalized member
/// mean; a zero-sum cluster costs its full membership).
fn brute_force_inertia(points: &[Vec<f64>], k: usize) -> f64 {
    let n = points.len();
    let dim = points[0].len();
    let mut best = f64::INFINITY;
    let total = (k as u64).pow(n as u32);
    for code in 0..total {
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        let mut rest = code;
        for p in points {
            let j = (rest % k as u64) as usize;
            rest /= k as u64;
            counts[j] += 1;
            for (s, &v) in sums[j].iter_mut().zip(p) {
                *s += v;
            }
        }
        // Sum over clusters of (count - |member sum|): the centroid that
        // maximizes summed cosine is the normalized mean direction.
        let mut inertia = 0.0;
        for j in 0..k {
            let norm = sums[j].iter().map(|v| v * v).sum::<f64>().sqrt();
            inertia += counts[j] as f64 - norm;
        }
        best = best.min(inertia);
    }
    best
}

#[test]
fn criterion_3_spherical_kmeans_attains_brute_force_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xc133);
    let mut worst: f64 = 0.0;
    for instance in 0..50 {
        let k = rng.random_range(1..=3usize);
        let n = rng.random_range(k.max(4)..=12);
        let dim = rng.random_range(2..=4);
        let points = random_unit_vectors(&mut rng, n, dim);
        let set = embedding_set(&points);

        let optimum = brute_force_inertia(&points, k);
        let attained = (0..8)
            .map(|seed| {
                spherical_kmeans(&set, k, seed, 200, 1e-12)
                    .unwrap()
                    .inertia
            })
            .fold(f64::INFINITY, f64::min);

        assert!(
            attained >= optimum - 1e-9,
            "instance {instance}: inertia {attained} beats the exhaustive optimum {optimum}"
        );
        assert!(
            attained - optimum < 1e-9,
            "instance {instance} (n={n}, k={k}): attained {attained} vs optimum {optimum}"
        );
        worst = worst.max(attained - optimum);
    }

    // Inertia may never rise across Lloyd iterations.
    for run in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(0xd011 + run);
        let n = rng.random_range(10..40);
        let k = rng.random_range(2..=6usize).min(n);
        let dim = rng.random_range(2..=6);
        let set = embedding_set(&random_unit_vectors(&mut rng, n, dim));
        let clustering = spherical_kmeans(&set, k, run, 100, 1e-12).unwrap();
        for w in clustering.inertia_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "run {run}: inertia rose {} -> {}", w[0], w[1]);
        }
    }

    println!("criterion 3 (clustering vs brute force, gap {worst:.2e}; monotone inertia): pass");
}

// ---------------------------------------------------------------------
// Criterion 4: protocol invariants on randomized manifests.
// ---------------------------------------------------------------------

fn spoof_entry(id: String, voice: usize, vocoder: &str) -> (Utterance, AttributeLabelSet) {
    (
        Utterance {
            id: id.clone(),
            audio_path: format!("{id}.wav"),
            language: "en".into(),
            source_system: format!("sys-{vocoder}"),
            is_bonafide: false,
            native_speaker_id: None,
            voice_id: Some(format!("cluster:{voice}")),
        },
        AttributeLabelSet {
            input_type: InputType::Text,
            acoustic_model: "am".into(),
            vocoder: vocoder.into(),
        },
    )
}

fn random_manifest(rng: &mut ChaCha8Rng) -> CorpusManifest {
    const CLASSES: [&str; 5] = ["wavenet", "world", "hifi-gan", "griffin-lim", "straight"];
    let n_voices = rng.random_range(3..14);
    let mut entries = Vec::new();
    for v in 0..n_voices {
        let class = CLASSES[rng.random_range(0..CLASSES.len())];
        for j in 0..rng.random_range(1..6) {
            entries.push(spoof_entry(format!("v{v:02}-{j}"), v, class));
        }
    }
    CorpusManifest::new("random", vec![], entries).unwrap()
}

#[test]
fn criterion_4_protocols_are_disjoint_conserving_and_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x9a07);
    let dir = tempfile::tempdir().unwrap();

    for case in 0..100 {
        let manifest = random_manifest(&mut rng);
        let seed = rng.random();
        let spec = partition_disjoint(&manifest, (0.7, 0.15, 0.15), seed).unwrap();

        let mut voice_part: BTreeMap<&str, Partition> = BTreeMap::new();
        let mut manifest_counts: BTreeMap<String, usize> = BTreeMap::new();
        let mut split_counts: BTreeMap<String, usize> = BTreeMap::new();
        for (utt, labels) in manifest.entries() {
            let part = spec
                .partition_of(&utt.id)
                .unwrap_or_else(|| panic!("case {case}: `{}` unplaced", utt.id));
            let voice = utt.voice_id.as_deref().unwrap();
            let prior = voice_part.entry(voice).or_insert(part);
            assert_eq!(*prior, part, "case {case}: voice {voice} spans partitions");

            let class = Task::Vocoder.label_of(utt, labels);
            *manifest_counts.entry(class.clone()).or_default() += 1;
            *split_counts.entry(class).or_default() += 1;
        }
        assert_eq!(manifest_counts, split_counts, "case {case}: class counts not conserved");

        // Same seed, same bytes.
        assert_eq!(
            spec,
            partition_disjoint(&manifest, (0.7, 0.15, 0.15), seed).unwrap(),
            "case {case}: assignment changed under a fixed seed"
        );
        let p1 = dir.path().join(format!("{case}-a.tsv"));
        let p2 = dir.path().join(format!("{case}-b.tsv"));
        emit_protocol(&spec, &manifest, &p1).unwrap();
        emit_protocol(&spec, &manifest, &p2).unwrap();
        assert_eq!(
            std::fs::read(&p1).unwrap(),
            std::fs::read(&p2).unwrap(),
            "case {case}: emission not byte-deterministic"
        );
    }

    // Dominance filter: exactly the classes whose largest voice cluster
    // strictly exceeds the threshold share must go.
    let mut entries = Vec::new();
    for i in 0..10 {
        // 9 of 10 "heavy" samples share cluster 0.
        entries.push(spoof_entry(format!("h-{i}"), usize::from(i == 9), "heavy"));
    }
    for i in 0..10 {
        // "balanced" splits 5/5: exactly at a 0.5 threshold, not above it.
        entries.push(spoof_entry(format!("b-{i}"), 2 + i % 2, "balanced"));
    }
    let manifest = CorpusManifest::new("dominance", vec![], entries).unwrap();
    let clustering = VoiceClustering {
        k: 4,
        assignment: manifest
            .entries()
            .iter()
            .map(|(u, _)| {
                let cluster: usize = u.voice_id.as_deref().unwrap()[8..].parse().unwrap();
                (u.id.clone(), cluster)
            })
            .collect(),
        centroids: vec![vec![1.0, 0.0]; 4],
        inertia: 0.0,
        inertia_history: vec![0.0],
    };
    let (kept, removed) =
        filter_degenerate(&manifest, &clustering, Task::Vocoder, 0.5).unwrap();
    assert_eq!(removed, vec!["heavy"]);
    assert_eq!(kept.len(), 10);
    assert!(kept.entries().iter().all(|(_, l)| l.vocoder == "balanced"));

    let (kept, removed) =
        filter_degenerate(&manifest, &clustering, Task::Vocoder, 0.95).unwrap();
    assert!(removed.is_empty());
    assert_eq!(kept.len(), 20);

    println!("criterion 4 (100 protocols: voice-disjoint, conserving, deterministic; dominance filter exact): pass");
}

// ---------------------------------------------------------------------
// Criteria 5 and 6: strategies on a synthesized corpus.
//
// One corpus serves both: five spoof classes covering five vocoder and
// four acoustic signatures, plus a bonafide class for the binary
// backbone. 700 samples per class across 7 voices; voice slots 0-4
// train, 5 dev, 6 eval, giving 500/100/100 per class with no voice
// crossing partitions.
// ---------------------------------------------------------------------

const SAMPLES_PER_CLASS: usize = 700;
const VOICES_PER_CLASS: usize = 7;
const E2E_EPOCHS: usize = 4;
const BINARY_EPOCHS: usize = 2;
const HEAD_EPOCHS: usize = 40;
const BUDGET_SECS: f64 = 900.0;

struct SyntheticCorpus {
    _dir: tempfile::TempDir,
    full: CorpusManifest,
    spoof: CorpusManifest,
    full_spec: ProtocolSpec,
    spoof_spec: ProtocolSpec,
    build_secs: f64,
}

struct E2eRuns {
    vocoder: EvalReport,
    acoustic: EvalReport,
    train_secs: f64,
}

fn slot_partition(id: &str) -> Partition {
    let s: usize = id
        .rsplit('-')
        .next()
        .and_then(|tail| tail.parse().ok())
        .expect("synthetic ids end in a sample number");
    match s % VOICES_PER_CLASS {
        0..=4 => Partition::Train,
        5 => Partition::Dev,
        _ => Partition::Eval,
    }
}

fn spec_over(manifest: &CorpusManifest) -> ProtocolSpec {
    ProtocolSpec {
        partition: manifest
            .entries()
            .iter()
            .map(|(u, _)| (u.id.clone(), slot_partition(&u.id)))
            .collect(),
        removed_classes: BTreeMap::new(),
        dominance_threshold: None,
        target_ratios: (5.0 / 7.0, 1.0 / 7.0, 1.0 / 7.0),
        seed: 0,
    }
}

fn run_config() -> RunConfig {
    RunConfig {
        epochs: E2E_EPOCHS,
        seed: 7,
        learning_rate: Some(1e-3),
        features: FeaturePipeline {
            window_seconds: 0.6,
            lfcc: LfccConfig::default(),
            deltas: true,
        },
        backbone: ResNetConfig {
            input_coeffs: 60,
            block_counts: vec![1, 1],
            widths: vec![8, 16],
            embed_dim: 32,
        },
        ..RunConfig::default()
    }
}

fn synthetic_corpus() -> &'static SyntheticCorpus {
    static CORPUS: OnceLock<SyntheticCorpus> = OnceLock::new();
    CORPUS.get_or_init(|| {
        let started = Instant::now();
        let pair = |acoustic: &str, vocoder: &str| SynthClass {
            acoustic: acoustic.into(),
            vocoder: vocoder.into(),
        };
        // Five vocoder signatures over four acoustic signatures: the
        // bright acoustic appears twice, so the acoustic task has one
        // class with doubled data and the tasks differ in difficulty.
        let spec = SynthSpec {
            n_voices: 42,
            voices_per_class: VOICES_PER_CLASS,
            samples_per_class: SAMPLES_PER_CLASS,
            duration_s: 1.0,
            rate: 16000,
            seed: 20,
            classes: vec![
                pair("bright-am2", "comb-17"),
                pair("dark-am11", "comb-29"),
                pair("odd-am5", "comb-43"),
                pair("formant-am7", "comb-61"),
                pair("bright-am2", "comb-89"),
                pair("bonafide", "bonafide"),
            ],
        };
        let dir = tempfile::tempdir().unwrap();
        let full = synth_corpus(&spec, dir.path()).unwrap();
        let spoof = full.retain(|u, _| !u.is_bonafide).unwrap();
        let full_spec = spec_over(&full);
        let spoof_spec = spec_over(&spoof);
        let build_secs = started.elapsed().as_secs_f64();
        eprintln!("[synthetic corpus] {} files in {build_secs:.1}s", full.len());
        SyntheticCorpus {
            _dir: dir,
            full,
            spoof,
            full_spec,
            spoof_spec,
            build_secs,
        }
    })
}

fn e2e_runs() -> &'static E2eRuns {
    static RUNS: OnceLock<E2eRuns> = OnceLock::new();
    RUNS.get_or_init(|| {
        let corpus = synthetic_corpus();
        let started = Instant::now();
        let mut reports = Vec::new();
        for task in [Task::Vocoder, Task::AcousticModel] {
            let cfg = TrainConfig::new(task, Strategy::E2e, run_config());
            let ckpt = train_e2e(&corpus.spoof, &corpus.spoof_spec, &cfg).unwrap();
            let report =
                evaluate(&ckpt, &corpus.spoof, &corpus.spoof_spec, task, None).unwrap();
            eprintln!(
                "[e2e {}] micro {:.3} macro-F1 {:.3} ({:.0}s elapsed)",
                task.as_str(),
                report.micro_accuracy,
                report.macro_f1,
                started.elapsed().as_secs_f64()
            );
            reports.push(report);
        }
        let acoustic = reports.pop().unwrap();
        let vocoder = reports.pop().unwrap();
        E2eRuns {
            vocoder,
            acoustic,
            train_secs: started.elapsed().as_secs_f64(),
        }
    })
}

#[test]
fn criterion_5_e2e_orders_vocoder_above_acoustic_within_budget() {
    let corpus = synthetic_corpus();
    let runs = e2e_runs();
    let total = corpus.build_secs + runs.train_secs;

    assert_eq!(runs.vocoder.classes.len(), 5);
    assert_eq!(runs.acoustic.classes.len(), 4);
    assert_eq!(runs.vocoder.n_scored, 500);
    assert!(
        runs.vocoder.macro_f1 >= 0.95,
        "vocoder macro-F1 {:.3} below 0.95",
        runs.vocoder.macro_f1
    );
    assert!(
        runs.acoustic.macro_f1 >= 0.85,
        "acoustic macro-F1 {:.3} below 0.85",
        runs.acoustic.macro_f1
    );
    assert!(
        runs.vocoder.macro_f1 >= runs.acoustic.macro_f1,
        "expected the vocoder task ({:.3}) to score at least the acoustic task ({:.3})",
        runs.vocoder.macro_f1,
        runs.acoustic.macro_f1
    );
    assert!(
        total < BUDGET_SECS,
        "corpus + training took {total:.0}s, budget {BUDGET_SECS:.0}s"
    );
    println!(
        "criterion 5 (e2e vocoder {:.3} >= 0.95, acoustic {:.3} >= 0.85, ordering holds, {total:.0}s): pass",
        runs.vocoder.macro_f1, runs.acoustic.macro_f1
    );
}

#[test]
fn criterion_6_frozen_binary_head_beats_chance_but_trails_e2e() {
    let corpus = synthetic_corpus();

    // Stage one: binary bonafide/spoof backbone on the full corpus.
    let mut bin_run = run_config();
    bin_run.epochs = BINARY_EPOCHS;
    let bin_cfg = TrainConfig::new(Task::Binary, Strategy::E2e, bin_run);
    let bin_ckpt = train_binary(&corpus.full, &corpus.full_spec, &bin_cfg).unwrap();
    let ModelState::E2e { backbone, .. } = bin_ckpt.model else {
        panic!("binary training must produce a backbone checkpoint");
    };

    // Stage two: linear head over the frozen embeddings, vocoder task.
    let mut head_run = run_config();
    head_run.epochs = HEAD_EPOCHS;
    head_run.learning_rate = None;
    let head_cfg = TrainConfig::new(Task::Vocoder, Strategy::TwoStage, head_run);
    let provider = EmbeddingProvider::Backbone(Box::new(backbone));
    let two_stage =
        train_two_stage(&corpus.spoof, &corpus.spoof_spec, &provider, &head_cfg).unwrap();
    let report = evaluate(
        &two_stage,
        &corpus.spoof,
        &corpus.spoof_spec,
        Task::Vocoder,
        None,
    )
    .unwrap();

    let e2e_accuracy = e2e_runs().vocoder.micro_accuracy;
    let chance = 1.0 / report.classes.len() as f64;
    assert!(
        report.micro_accuracy > 2.0 * chance,
        "two-stage accuracy {:.3} does not clear 2x chance ({:.3})",
        report.micro_accuracy,
        2.0 * chance
    );
    assert!(
        report.micro_accuracy < e2e_accuracy,
        "two-stage accuracy {:.3} should trail the e2e model ({e2e_accuracy:.3})",
        report.micro_accuracy
    );
    println!(
        "criterion 6 (two-stage vocoder {:.3}: above 2x chance {:.3}, below e2e {:.3}): pass",
        report.micro_accuracy,
        2.0 * chance,
        e2e_accuracy
    );
}

// ---------------------------------------------------------------------
// Criterion 7: metrics against brute-force tallies.
// ---------------------------------------------------------------------

#[test]
fn criterion_7_metrics_match_brute_force_tallies() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x3e77);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let k = rng.random_range(2..=8usize);
        let classes: Vec<String> = (0..k).map(|i| format!("c{i}")).collect();
        let n = rng.random_range(1..=60);
        let truths: Vec<String> =
            (0..n).map(|_| classes[rng.random_range(0..k)].clone()).collect();
        let preds: Vec<String> =
            (0..n).map(|_| classes[rng.random_range(0..k)].clone()).collect();

        let cm = confusion(&preds, &truths, &classes).unwrap();

        // Longhand tallies.
        let hits = preds.iter().zip(&truths).filter(|(p, t)| p == t).count();
        let micro_want = hits as f64 / n as f64;

        let mut macro_acc_want = 0.0;
        let mut macro_f1_want = 0.0;
        for class in &classes {
            let support = truths.iter().filter(|t| *t == class).count();
            let predicted = preds.iter().filter(|p| *p == class).count();
            let class_hits = preds
                .iter()
                .zip(&truths)
                .filter(|(p, t)| *p == class && *t == class)
                .count() as f64;
            let recall = if support > 0 { class_hits / support as f64 } else { 0.0 };
            let precision = if predicted > 0 { class_hits / predicted as f64 } else { 0.0 };
            macro_acc_want += recall / k as f64;
            if precision + recall > 0.0 {
                macro_f1_want += 2.0 * precision * recall / (precision + recall) / k as f64;
            }

            // Confusion rows must sum to the class support.
            let i = classes.iter().position(|c| c == class).unwrap();
            let row_sum: u64 = cm.counts()[i].iter().sum();
            assert_eq!(row_sum as usize, support);
            assert_eq!(cm.support(i) as usize, support);
        }

        worst = worst.max((micro_accuracy(&cm).unwrap() - micro_want).abs());
        worst = worst.max((macro_accuracy(&cm).unwrap() - macro_acc_want).abs());
        worst = worst.max((macro_f1(&cm).unwrap() - macro_f1_want).abs());

        // Normalized rows sum to one wherever the class has support.
        let (rows, skipped) = cm.normalized();
        for (i, row) in rows.iter().enumerate() {
            if skipped.contains(&i) {
                assert_eq!(cm.support(i), 0);
            } else {
                let sum: f64 = row.iter().sum();
                assert!((sum - 1.0).abs() < 1e-9, "row {i} sums to {sum}");
            }
        }
    }
    assert!(worst < 1e-12, "metric deviation {worst}");
    println!("criterion 7 (1,000 random sets, max metric deviation {worst:.2e}): pass");
}

// ---------------------------------------------------------------------
// Criterion 8: optional MLAAD ingestion with the shipped label map.
// ---------------------------------------------------------------------

/// Published acoustic-model classes and their train+dev+eval totals.
const MLAAD_ACOUSTIC: [(&str, usize); 13] = [
    ("bark", 1000),
    ("capacitron", 1000),
    ("fastpitch", 1000),
    ("glowtts", 4000),
    ("neural-hmm", 1000),
    ("overflow", 1000),
    ("tacotron2", 1000),
    ("tacotron2-dca", 1000),
    ("tacotron2-ddc", 4000),
    ("tortoise-tts", 1000),
    ("vits", 33000),
    ("xtts-v1", 8000),
    ("xtts-v2", 9000),
];

/// Published vocoder classes (after dropping the two degenerate ones)
/// and their totals.
const MLAAD_VOCODER: [(&str, usize); 6] = [
    ("bark", 1000),
    ("hifi-gan", 15000),
    ("multiband-melgan", 3000),
    ("univnet", 10000),
    ("vits", 33000),
    ("wavegrad", 1000),
];

const MLAAD_REMOVED: [&str; 2] = ["griffin-lim", "fullband-melgan"];
const MLAAD_BONAFIDE_TOTAL: usize = 41319;

fn shipped_config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

#[test]
fn criterion_8_mlaad_ingestion_reproduces_the_published_vocabulary() {
    // The shipped maps must parse and carry the published vocabulary
    // whether or not the dataset is on disk.
    let map = LabelMap::load(&shipped_config("mlaad.toml")).unwrap();
    let known_names = [
        "bark",
        "capacitron",
        "fastpitch",
        "glow-tts",
        "griffin_lim",
        "jenny",
        "neural_hmm",
        "overflow",
        "fullband_melgan",
        "tacotron2",
        "tacotron2-DCA",
        "tacotron2-DDC",
        "tortoise",
        "vits",
        "vits-neon",
        "vits-mms",
        "yourtts",
        "xtts_v1.1",
        "xtts_v2",
    ];
    let mut acoustic = BTreeSet::new();
    let mut vocoder = BTreeSet::new();
    for name in known_names {
        let labels = map
            .lookup(name)
            .unwrap_or_else(|| panic!("label map misses `{name}`"));
        assert_eq!(labels.input_type, InputType::Text);
        acoustic.insert(labels.acoustic_model.clone());
        vocoder.insert(labels.vocoder.clone());
    }
    let acoustic_want: BTreeSet<String> =
        MLAAD_ACOUSTIC.iter().map(|(c, _)| c.to_string()).collect();
    let vocoder_want: BTreeSet<String> = MLAAD_VOCODER
        .iter()
        .map(|(c, _)| c.to_string())
        .chain(MLAAD_REMOVED.iter().map(|c| c.to_string()))
        .collect();
    assert_eq!(acoustic, acoustic_want, "acoustic vocabulary");
    assert_eq!(vocoder, vocoder_want, "vocoder vocabulary incl. removable classes");
    // Catalogue-path and case-insensitive lookups group variants to vits.
    for variant in ["Jenny", "VITS", "VITS-Neon", "VITS-MMS", "tts_models/fr/css10/vits"] {
        let labels = map.lookup(variant).unwrap();
        assert_eq!(labels.acoustic_model, "vits");
        assert_eq!(labels.vocoder, "vits");
    }

    // The companion map must cover every attack id in the other protocol.
    let asvspoof = LabelMap::load(&shipped_config("asvspoof2019_la.toml")).unwrap();
    for i in 1..=19 {
        let id = format!("A{i:02}");
        assert!(asvspoof.lookup(&id).is_some(), "asvspoof map misses {id}");
    }

    // With the dataset on disk, the ingested per-class totals must match
    // the published tables.
    let Some(root) = std::env::var_os("SPOOFTRACE_MLAAD_DIR") else {
        println!(
            "criterion 8 (label maps reproduce the published vocabulary; \
             dataset counts: skipped, SPOOFTRACE_MLAAD_DIR not set): pass"
        );
        return;
    };
    let root = PathBuf::from(root);
    let manifest = spooftrace::corpus::ingest_mlaad(
        &root.join("meta.csv"),
        &root.join("bonafide.tsv"),
        &map,
    )
    .unwrap();

    let mut totals: BTreeMap<(&str, String), usize> = BTreeMap::new();
    for (utt, labels) in manifest.entries() {
        for task in [Task::AcousticModel, Task::Vocoder] {
            *totals
                .entry((task.as_str(), task.label_of(utt, labels)))
                .or_default() += 1;
        }
    }
    for (class, want) in MLAAD_ACOUSTIC {
        assert_eq!(
            totals.get(&(Task::AcousticModel.as_str(), class.to_string())),
            Some(&want),
            "acoustic `{class}`"
        );
    }
    for (class, want) in MLAAD_VOCODER {
        assert_eq!(
            totals.get(&(Task::Vocoder.as_str(), class.to_string())),
            Some(&want),
            "vocoder `{class}`"
        );
    }
    assert_eq!(
        totals.get(&(Task::Vocoder.as_str(), "bonafide".to_string())),
        Some(&MLAAD_BONAFIDE_TOTAL)
    );
    let acoustic_classes = manifest.classes(Task::AcousticModel);
    assert_eq!(acoustic_classes.len(), 14, "13 acoustic classes plus bonafide");
    let retained = manifest
        .retain(|_, l| !MLAAD_REMOVED.contains(&l.vocoder.as_str()))
        .unwrap();
    assert_eq!(
        retained.classes(Task::Vocoder).len(),
        7,
        "6 vocoder classes plus bonafide after removal"
    );
    println!("criterion 8 (MLAAD vocabulary and per-class totals): pass");
}
