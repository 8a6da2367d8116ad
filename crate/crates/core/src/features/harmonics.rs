use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::fft::BinSource;
use crate::error::{Error, Result};

/// Odd harmonic orders tracked per frame.
pub const ODD_ORDERS: [u32; 8] = [1, 3, 5, 7, 9, 11, 13, 15];

/// Odd-harmonic content of a window, magnitudes in peak amps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonicVector {
    pub f0: f64,
    pub orders: Vec<u32>,
    pub magnitudes: Vec<f64>,
    /// Phase of order `h` minus `h` times the fundamental phase, wrapped to (-π, π].
    pub phases: Vec<f64>,
    /// Absolute phase of the fundamental within the window.
    pub fundamental_phase: f64,
}

impl HarmonicVector {
    pub fn zero(f0: f64) -> Self {
        HarmonicVector {
            f0,
            orders: ODD_ORDERS.to_vec(),
            magnitudes: vec![0.0; ODD_ORDERS.len()],
            phases: vec![0.0; ODD_ORDERS.len()],
            fundamental_phase: 0.0,
        }
    }

    /// Complex peak-amplitude phasor of the `idx`-th order, in window-absolute phase.
    pub fn phasor(&self, idx: usize) -> Complex64 {
        let h = self.orders[idx] as f64;
        Complex64::from_polar(self.magnitudes[idx], self.phases[idx] + h * self.fundamental_phase)
    }
}

pub(crate) fn wrap_phase(x: f64) -> f64 {
    let mut y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y -= 2.0 * PI;
    }
    y
}

/// FFT bins holding the odd harmonics of `f0` for a transform of size `n` at rate `fs`.
pub fn harmonic_bins(n: usize, fs: f64, f0: f64) -> Result<Vec<usize>> {
    let cycles = n as f64 * f0 / fs;
    let whole = cycles.round();
    if whole < 1.0 || (cycles - whole).abs() > 1e-9 {
        return Err(Error::config(format!(
            "{f0} Hz is not bin-aligned: window of {n} samples at {fs} Hz spans {cycles} cycles"
        )));
    }
    let bins: Vec<usize> = ODD_ORDERS.iter().map(|&h| h as usize * whole as usize).collect();
    if bins.iter().any(|&k| k > n / 2) {
        return Err(Error::config(format!(
            "order {} harmonic lies above Nyquist for n = {n}",
            ODD_ORDERS[ODD_ORDERS.len() - 1]
        )));
    }
    Ok(bins)
}

/// Reads the odd harmonics of `f0` out of a spectrum.
pub fn odd_harmonics<S: BinSource>(spec: &S, f0: f64) -> Result<HarmonicVector> {
    let n = spec.size();
    let bins = harmonic_bins(n, spec.rate(), f0)?;
    let mut raw = Vec::with_capacity(bins.len());
    for &k in &bins {
        let x = spec
            .bin(k)
            .ok_or_else(|| Error::config(format!("spectrum lacks harmonic bin {k}")))?;
        raw.push(x);
    }
    let scale = 2.0 / n as f64;
    let fundamental_phase = if raw[0].norm() > 0.0 { raw[0].arg() } else { 0.0 };
    let magnitudes = raw.iter().map(|x| x.norm() * scale).collect();
    let phases = raw
        .iter()
        .zip(ODD_ORDERS)
        .map(|(x, h)| {
            if x.norm() > 0.0 {
                wrap_phase(x.arg() - h as f64 * fundamental_phase)
            } else {
                0.0
            }
        })
        .collect();
    Ok(HarmonicVector {
        f0,
        orders: ODD_ORDERS.to_vec(),
        magnitudes,
        phases,
        fundamental_phase,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::fft::{fft, fft_skip_reorder};
    use std::f64::consts::SQRT_2;

    fn window(amps: &[(u32, f64, f64)]) -> Vec<f64> {
        (0..512)
            .map(|j| {
                let t = j as f64 / 6400.0;
                amps.iter()
                    .map(|&(h, a, ph)| a * (2.0 * PI * 50.0 * h as f64 * t + ph).sin())
                    .sum()
            })
            .collect()
    }

    #[test]
    fn pure_fundamental() {
        let x = window(&[(1, SQRT_2, 0.0)]);
        let h = odd_harmonics(&fft(&x, 512, 6400.0).unwrap(), 50.0).unwrap();
        assert!((h.magnitudes[0] - SQRT_2).abs() < 1e-9);
        assert!(h.magnitudes[1..].iter().all(|&m| m < 1e-9));
    }

    #[test]
    fn third_harmonic_ratio_and_phase() {
        let x = window(&[(1, 1.0, 0.3), (3, 0.4, -1.0)]);
        let full = odd_harmonics(&fft(&x, 512, 6400.0).unwrap(), 50.0).unwrap();
        assert!((full.magnitudes[1] / full.magnitudes[0] - 0.4).abs() < 1e-6);
        // sin phase offsets carry over: (−1.0 − π/2) − 3·(0.3 − π/2)
        let expect = wrap_phase((-1.0 - PI / 2.0) - 3.0 * (0.3 - PI / 2.0));
        assert!((full.phases[1] - expect).abs() < 1e-9);
        let bins = harmonic_bins(512, 6400.0, 50.0).unwrap();
        let skip = odd_harmonics(&fft_skip_reorder(&x, 512, 6400.0, &bins).unwrap(), 50.0).unwrap();
        for k in 0..8 {
            assert!((skip.magnitudes[k] - full.magnitudes[k]).abs() < 1e-9);
            assert!((skip.phasor(k) - full.phasor(k)).norm() < 1e-9);
        }
    }

    #[test]
    fn zero_input_gives_zero_vector() {
        let h = odd_harmonics(&fft(&[0.0; 512], 512, 6400.0).unwrap(), 50.0).unwrap();
        assert_eq!(h, HarmonicVector::zero(50.0));
    }

    #[test]
    fn unaligned_window_is_rejected() {
        assert_eq!(
            harmonic_bins(512, 6400.0, 50.0).unwrap(),
            vec![4, 12, 20, 28, 36, 44, 52, 60]
        );
        let s = fft(&[0.0; 512], 512, 6629.3).unwrap();
        assert!(matches!(odd_harmonics(&s, 50.0), Err(Error::Config(_))));
    }
}
