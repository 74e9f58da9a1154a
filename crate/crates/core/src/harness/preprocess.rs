//! Network input and target encodings.
//!
//! Inputs: four channels, log10 ρ_a for both modes and phase / 90° for both
//! modes, each bilinearly resampled from (frequency, station) to S×S.
//! Targets: core log10 resistivity mapped by `(v − 1) / 3` onto [0, 1] and
//! resampled to S×S. Predictions go back through the inverse map, are
//! resampled to the core grid and clamped to [1, 4].

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::grf::resample_bilinear;
use crate::nn::Tensor4;
use crate::physics::{Channel, RmtResponse};

pub const LOG10_MIN: f64 = 1.0;
pub const LOG10_MAX: f64 = 4.0;

pub fn normalize_log10(v: f64) -> f64 {
    (v - LOG10_MIN) / (LOG10_MAX - LOG10_MIN)
}

pub fn denormalize(v: f64) -> f64 {
    LOG10_MIN + (LOG10_MAX - LOG10_MIN) * v
}

pub fn normalize_model(core_log10: ArrayView2<f64>) -> Array2<f64> {
    core_log10.mapv(normalize_log10)
}

/// `4·S·S` values in channel order.
pub fn encode_response(r: &RmtResponse, size: usize) -> Result<Vec<f64>> {
    if r.is_masked() {
        return Err(Error::MaskPresent);
    }
    let mut out = Vec::with_capacity(4 * size * size);
    for ch in Channel::ALL {
        let raw = r.channel(ch);
        let enc = if ch.is_resistivity() {
            if raw.iter().any(|&v| !(v > 0.0)) {
                return Err(Error::Domain("non-positive apparent resistivity".into()));
            }
            raw.mapv(f64::log10)
        } else {
            raw.mapv(|p| p / 90.0)
        };
        out.extend(resample_bilinear(&enc, (size, size)).iter());
    }
    Ok(out)
}

/// `S·S` normalised target values.
pub fn encode_target(core_log10: ArrayView2<f64>, size: usize) -> Vec<f64> {
    resample_bilinear(&normalize_model(core_log10), (size, size))
        .iter()
        .copied()
        .collect()
}

/// Network output plane back to clamped core log10 resistivity.
pub fn decode_prediction(plane: &[f64], size: usize, core_shape: (usize, usize)) -> Result<Array2<f64>> {
    let a = Array2::from_shape_vec((size, size), plane.to_vec()).map_err(|e| Error::Dimension(e.to_string()))?;
    Ok(resample_bilinear(&a, core_shape).mapv(|v| denormalize(v).clamp(LOG10_MIN, LOG10_MAX)))
}

pub fn stack_inputs(responses: &[&RmtResponse], size: usize) -> Result<Tensor4> {
    let mut data = Vec::with_capacity(responses.len() * 4 * size * size);
    for r in responses {
        data.extend(encode_response(r, size)?);
    }
    Tensor4::from_vec([responses.len(), 4, size, size], data)
}

pub fn stack_targets(cores: &[ArrayView2<f64>], size: usize) -> Result<Tensor4> {
    let mut data = Vec::with_capacity(cores.len() * size * size);
    for c in cores {
        data.extend(encode_target(*c, size));
    }
    Tensor4::from_vec([cores.len(), 1, size, size], data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    #[test]
    fn encodings() {
        let data = Array3::from_shape_fn((4, 3, 5), |(c, _, _)| if c < 2 { 100.0 } else { 45.0 });
        let r = RmtResponse::new(vec![1.0, 2.0, 3.0], vec![0.0; 5], data, None).unwrap();
        let v = encode_response(&r, 8).unwrap();
        assert_eq!(v.len(), 256);
        assert!(v[..128].iter().all(|x| (x - 2.0).abs() < 1e-12));
        assert!(v[128..].iter().all(|x| (x - 0.5).abs() < 1e-12));
        let mut masked = r.clone();
        masked.mask = Some(Array3::from_elem((4, 3, 5), false));
        masked.mask.as_mut().unwrap()[[0, 0, 0]] = true;
        assert!(matches!(encode_response(&masked, 8), Err(Error::MaskPresent)));
    }

    #[test]
    fn target_round_trip() {
        let core = Array2::from_elem((50, 116), 2.5);
        let t = encode_target(core.view(), 16);
        assert!(t.iter().all(|v| (v - 0.5).abs() < 1e-12));
        let back = decode_prediction(&t, 16, (50, 116)).unwrap();
        assert!(back.iter().all(|v| (v - 2.5).abs() < 1e-12));
        let wild = decode_prediction(&[5.0; 4], 2, (3, 3)).unwrap();
        assert!(wild.iter().all(|&v| v == 4.0));
    }
}
