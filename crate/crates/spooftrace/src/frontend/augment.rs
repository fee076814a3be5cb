//! Training-time feature augmentation.

use rand::Rng;

use crate::{seeds, Error, Result};

use super::FeatureMatrix;

/// Zero a contiguous band of coefficient columns across all frames.
///
/// The band width is drawn uniformly from `1..=max_width`, then the start
/// column uniformly from the positions where the band fits. Returns the
/// applied `(start, width)` so runs can be logged and replayed.
pub fn freq_mask(
    features: &mut FeatureMatrix,
    max_width: usize,
    seed: u64,
) -> Result<(usize, usize)> {
    let c = features.n_coeffs();
    if max_width == 0 || max_width > c {
        return Err(Error::InvalidInput(format!(
            "mask width limit must be in 1..={c} (got {max_width})"
        )));
    }
    let mut rng = seeds::rng_from(seed);
    let width = rng.random_range(1..=max_width);
    let start = rng.random_range(0..=c - width);
    for t in 0..features.n_frames() {
        for j in start..start + width {
            features.data[[t, j]] = 0.0;
        }
    }
    Ok((start, width))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn ones(t: usize, c: usize) -> FeatureMatrix {
        FeatureMatrix {
            data: Array2::from_elem((t, c), 1.0),
            window_ms: 20.0,
            shift_ms: 10.0,
            n_filters: 20,
            has_deltas: false,
        }
    }

    #[test]
    fn masks_one_contiguous_band_in_bounds() {
        for seed in 0..200 {
            let mut f = ones(7, 13);
            let (start, width) = freq_mask(&mut f, 5, seed).unwrap();
            assert!((1..=5).contains(&width));
            assert!(start + width <= 13);
            for t in 0..7 {
                for j in 0..13 {
                    let masked = j >= start && j < start + width;
                    assert_eq!(f.data[[t, j]], if masked { 0.0 } else { 1.0 });
                }
            }
        }
    }

    #[test]
    fn same_seed_same_mask() {
        let mut a = ones(4, 10);
        let mut b = ones(4, 10);
        assert_eq!(
            freq_mask(&mut a, 4, 99).unwrap(),
            freq_mask(&mut b, 4, 99).unwrap()
        );
        assert_eq!(a.data, b.data);
    }

    #[test]
    fn full_width_mask_allowed_and_oversize_rejected() {
        let mut f = ones(3, 6);
        assert!(freq_mask(&mut f, 7, 0).is_err());
        assert!(freq_mask(&mut f, 0, 0).is_err());
        let mut f = ones(3, 6);
        let (start, width) = freq_mask(&mut f, 6, 3).unwrap();
        assert!(start + width <= 6);
    }
}
