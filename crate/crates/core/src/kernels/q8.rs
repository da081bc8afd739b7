use crate::{Error, Result};

use super::{round_half_away, QK};

/// Per-32 symmetric int8 quantization of an f32 activation vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Q8Activation {
    /// One scale per group of 32.
    pub scales: Vec<f32>,
    pub codes: Vec<i8>,
}

impl Q8Activation {
    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn dequantize(&self) -> Vec<f32> {
        self.codes
            .chunks_exact(QK)
            .zip(&self.scales)
            .flat_map(|(g, &s)| g.iter().map(move |&c| s * c as f32))
            .collect()
    }
}

/// Scale is `max|x| / 127` per group; codes are `round(x / s)` clamped to
/// `[-127, 127]`. An all-zero group gets scale 0 and zero codes.
pub fn quantize_q8(x: &[f32]) -> Result<Q8Activation> {
    if !x.len().is_multiple_of(QK) {
        return Err(Error::invalid(format!(
            "activation length {} is not a multiple of {QK}",
            x.len()
        )));
    }
    let mut scales = Vec::with_capacity(x.len() / QK);
    let mut codes = Vec::with_capacity(x.len());
    for group in x.chunks_exact(QK) {
        let amax = group.iter().fold(0.0f32, |m, v| m.max(v.abs()));
        let s = amax / 127.0;
        scales.push(s);
        if s == 0.0 {
            codes.extend(std::iter::repeat_n(0i8, QK));
            continue;
        }
        let inv = 1.0 / s;
        codes.extend(
            group
                .iter()
                .map(|&v| round_half_away(v * inv).clamp(-127.0, 127.0) as i8),
        );
    }
    Ok(Q8Activation { scales, codes })
}
