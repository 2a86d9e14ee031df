//! Quantized beamsteering codebooks and power-maximizing beam selection.

use num_complex::Complex64;

use crate::channel::{array_response, inner, CVec, ChannelConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    pub codewords: Vec<CVec>,
    /// Radians from broadside, one per codeword.
    pub steering_angles: Vec<f64>,
}

impl Codebook {
    pub fn len(&self) -> usize {
        self.codewords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codewords.is_empty()
    }

    pub fn num_antennas(&self) -> usize {
        self.codewords.first().map_or(0, Vec::len)
    }

    /// Sine of every steering angle, the coordinate the codebook is uniform in.
    pub fn steering_sines(&self) -> impl Iterator<Item = f64> + '_ {
        self.steering_angles.iter().map(|a| a.sin())
    }
}

/// Builds `oversampling * M` beams whose steering sines are uniformly spaced
/// over `[-1, 1)`.
pub fn build_codebook(cfg: &ChannelConfig, oversampling: usize) -> Result<Codebook> {
    cfg.validate()?;
    if oversampling == 0 {
        return Err(Error::config("codebook oversampling must be at least 1"));
    }
    let size = oversampling * cfg.num_antennas;
    let norm = 1.0 / (cfg.num_antennas as f64).sqrt();
    let mut codewords = Vec::with_capacity(size);
    let mut steering_angles = Vec::with_capacity(size);
    for m in 0..size {
        let sine = -1.0 + 2.0 * m as f64 / size as f64;
        let angle = sine.asin();
        codewords.push(
            array_response(angle, 0.0, cfg)
                .into_iter()
                .map(|a| a * norm)
                .collect(),
        );
        steering_angles.push(angle);
    }
    Ok(Codebook {
        codewords,
        steering_angles,
    })
}

/// Wideband beamforming gain `sum_k |h_k^* g|^2`.
pub fn beam_objective(h_all_k: &[CVec], g: &[Complex64]) -> f64 {
    h_all_k.iter().map(|h| inner(h, g).norm_sqr()).sum()
}

/// Picks the codeword maximizing `sum_k |h_k^* g_m|^2`; ties go to the lowest
/// index. Returns `(index, objective)`.
pub fn select_beam(h_all_k: &[CVec], cb: &Codebook) -> Result<(usize, f64)> {
    if cb.is_empty() {
        return Err(Error::contract("cannot select from an empty codebook"));
    }
    let m = cb.num_antennas();
    if let Some(bad) = h_all_k.iter().position(|h| h.len() != m) {
        return Err(Error::contract(format!(
            "subcarrier {bad} has {} antennas, codebook expects {m}",
            h_all_k[bad].len()
        )));
    }
    let mut best = (0, f64::NEG_INFINITY);
    for (idx, g) in cb.codewords.iter().enumerate() {
        let value = beam_objective(h_all_k, g);
        if value > best.1 {
            best = (idx, value);
        }
    }
    Ok(best)
}
