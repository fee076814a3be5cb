//! Linear-frequency cepstral coefficients.
//!
//! Frames are Hamming-windowed, zero-padded to the next power of two, and
//! reduced through a linearly spaced triangular filterbank. Filterbank log
//! energies pass through an orthonormal DCT-II; the first `n_coeffs`
//! coefficients form the feature vector. Unlike mel-scaled variants, the
//! linear spacing keeps resolution in the upper band, where synthesis and
//! vocoding leave most of their residue.

use ndarray::Array2;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Floor applied before the log so silent filters stay finite.
const LOG_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LfccConfig {
    /// Analysis window length in milliseconds.
    pub window_ms: f64,
    /// Hop between successive windows in milliseconds.
    pub shift_ms: f64,
    /// Number of triangular filters across [0, Nyquist].
    pub n_filters: usize,
    /// Cepstral coefficients kept after the DCT; at most `n_filters`.
    pub n_coeffs: usize,
}

impl Default for LfccConfig {
    fn default() -> Self {
        LfccConfig {
            window_ms: 20.0,
            shift_ms: 10.0,
            n_filters: 20,
            n_coeffs: 20,
        }
    }
}

impl LfccConfig {
    pub fn window_len(&self, sample_rate: u32) -> usize {
        (self.window_ms * sample_rate as f64 / 1000.0).round() as usize
    }

    pub fn shift_len(&self, sample_rate: u32) -> usize {
        (self.shift_ms * sample_rate as f64 / 1000.0).round() as usize
    }

    pub(crate) fn validate(&self, sample_rate: u32) -> Result<()> {
        if !(self.window_ms > 0.0) || !(self.shift_ms > 0.0) {
            return Err(Error::InvalidConfig(
                "window_ms and shift_ms must be positive".into(),
            ));
        }
        if self.n_filters == 0 {
            return Err(Error::InvalidConfig("n_filters must be positive".into()));
        }
        if self.n_coeffs == 0 || self.n_coeffs > self.n_filters {
            return Err(Error::InvalidConfig(format!(
                "n_coeffs must be in 1..={} (got {})",
                self.n_filters, self.n_coeffs
            )));
        }
        if self.window_len(sample_rate) < 2 {
            return Err(Error::InvalidConfig(
                "window shorter than two samples".into(),
            ));
        }
        Ok(())
    }
}

/// A frames-by-coefficients feature matrix with its extraction metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    /// Row `t` holds the coefficients of frame `t`.
    pub data: Array2<f64>,
    pub window_ms: f64,
    pub shift_ms: f64,
    pub n_filters: usize,
    /// Set once delta and delta-delta columns have been appended.
    pub has_deltas: bool,
}

impl FeatureMatrix {
    pub fn n_frames(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_coeffs(&self) -> usize {
        self.data.ncols()
    }
}

/// Extract LFCCs from a mono signal.
///
/// Frame count follows `1 + floor((len - window) / shift)`; signals shorter
/// than one window are rejected.
pub fn lfcc(samples: &[f64], sample_rate: u32, config: &LfccConfig) -> Result<FeatureMatrix> {
    config.validate(sample_rate)?;
    let win = config.window_len(sample_rate);
    let shift = config.shift_len(sample_rate);
    if samples.len() < win {
        return Err(Error::InvalidInput(format!(
            "signal of {} samples is shorter than one {win}-sample window",
            samples.len()
        )));
    }
    let n_frames = 1 + (samples.len() - win) / shift;
    let n_fft = win.next_power_of_two();
    let n_bins = n_fft / 2 + 1;

    let window = hamming(win);
    let bank = filterbank(config.n_filters, sample_rate, n_fft);
    let dct = dct_matrix(config.n_coeffs, config.n_filters);

    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n_fft);
    let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];

    let mut out = Array2::zeros((n_frames, config.n_coeffs));
    let mut power = vec![0.0; n_bins];
    let mut log_energy = vec![0.0; config.n_filters];
    for t in 0..n_frames {
        let start = t * shift;
        for i in 0..win {
            buf[i] = Complex::new(samples[start + i] * window[i], 0.0);
        }
        for b in buf[win..].iter_mut() {
            *b = Complex::new(0.0, 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for (k, p) in power.iter_mut().enumerate() {
            *p = buf[k].norm_sqr();
        }
        for (m, row) in bank.iter().enumerate() {
            let e: f64 = row.iter().map(|&(k, w)| w * power[k]).sum();
            log_energy[m] = e.max(LOG_FLOOR).ln();
        }
        for k in 0..config.n_coeffs {
            let mut acc = 0.0;
            for (m, &le) in log_energy.iter().enumerate() {
                acc += dct[k][m] * le;
            }
            out[[t, k]] = acc;
        }
    }

    Ok(FeatureMatrix {
        data: out,
        window_ms: config.window_ms,
        shift_ms: config.shift_ms,
        n_filters: config.n_filters,
        has_deltas: false,
    })
}

fn hamming(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * n as f64 / (len - 1) as f64).cos())
        .collect()
}

/// Sparse triangular filters. Edges are `n_filters + 2` points spaced
/// evenly over [0, Nyquist]; each filter is the triangle over three
/// consecutive edges, evaluated at the continuous centre frequency of every
/// FFT bin.
fn filterbank(n_filters: usize, sample_rate: u32, n_fft: usize) -> Vec<Vec<(usize, f64)>> {
    let nyquist = sample_rate as f64 / 2.0;
    let edges: Vec<f64> = (0..n_filters + 2)
        .map(|i| i as f64 * nyquist / (n_filters + 1) as f64)
        .collect();
    let bin_hz = sample_rate as f64 / n_fft as f64;
    let n_bins = n_fft / 2 + 1;
    let mut bank = Vec::with_capacity(n_filters);
    for m in 0..n_filters {
        let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        let mut row = Vec::new();
        for k in 0..n_bins {
            let f = k as f64 * bin_hz;
            let w = if f > lo && f < mid {
                (f - lo) / (mid - lo)
            } else if f == mid {
                1.0
            } else if f > mid && f < hi {
                (hi - f) / (hi - mid)
            } else {
                0.0
            };
            if w > 0.0 {
                row.push((k, w));
            }
        }
        bank.push(row);
    }
    bank
}

/// Orthonormal DCT-II rows: `d[k][m] = s_k cos(pi k (2m+1) / (2M))` with
/// `s_0 = sqrt(1/M)` and `s_k = sqrt(2/M)` otherwise.
fn dct_matrix(n_rows: usize, m: usize) -> Vec<Vec<f64>> {
    let mut rows = Vec::with_capacity(n_rows);
    for k in 0..n_rows {
        let scale = if k == 0 {
            (1.0 / m as f64).sqrt()
        } else {
            (2.0 / m as f64).sqrt()
        };
        rows.push(
            (0..m)
                .map(|i| {
                    scale
                        * (std::f64::consts::PI * k as f64 * (2 * i + 1) as f64 / (2 * m) as f64)
                            .cos()
                })
                .collect(),
        );
    }
    rows
}

/// Append delta and delta-delta columns, tripling the width.
///
/// Deltas use the standard two-frame regression
/// `d_t = sum_n n (c_{t+n} - c_{t-n}) / (2 sum_n n^2)` with clamped frame
/// indices at the edges. Delta-deltas apply the same stencil to the deltas.
pub fn add_deltas(features: &FeatureMatrix) -> Result<FeatureMatrix> {
    if features.has_deltas {
        return Err(Error::InvalidInput(
            "features already carry delta columns".into(),
        ));
    }
    let base = &features.data;
    let delta = delta_of(base);
    let delta2 = delta_of(&delta);
    let (t, c) = (base.nrows(), base.ncols());
    let mut out = Array2::zeros((t, 3 * c));
    for i in 0..t {
        for j in 0..c {
            out[[i, j]] = base[[i, j]];
            out[[i, c + j]] = delta[[i, j]];
            out[[i, 2 * c + j]] = delta2[[i, j]];
        }
    }
    Ok(FeatureMatrix {
        data: out,
        window_ms: features.window_ms,
        shift_ms: features.shift_ms,
        n_filters: features.n_filters,
        has_deltas: true,
    })
}

fn delta_of(x: &Array2<f64>) -> Array2<f64> {
    const N: isize = 2;
    let denom: f64 = 2.0 * (1..=N).map(|n| (n * n) as f64).sum::<f64>();
    let t = x.nrows() as isize;
    let mut out = Array2::zeros(x.raw_dim());
    for i in 0..t {
        for j in 0..x.ncols() {
            let mut acc = 0.0;
            for n in 1..=N {
                let fwd = (i + n).clamp(0, t - 1) as usize;
                let bwd = (i - n).clamp(0, t - 1) as usize;
                acc += n as f64 * (x[[fwd, j]] - x[[bwd, j]]);
            }
            out[[i as usize, j]] = acc / denom;
        }
    }
    out
}
