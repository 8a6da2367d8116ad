//! Per-frame power and harmonic features.
//!
//! Active power is the mean of `v·i`, apparent power the product of RMS
//! values, and reactive power follows from the two. Harmonics come from a
//! 512-point FFT over four synchronously resampled mains cycles, which puts
//! the fundamental at bin 4 and every odd harmonic up to the 15th on an
//! exact bin.

pub mod fft;
pub mod harmonics;

use std::io::Write;

use serde::{Deserialize, Serialize};

pub use self::fft::{fft, fft_skip_reorder, BinSource, FftPlan, SkipReorderPlan, SparseSpectrum, Spectrum};
pub use self::harmonics::{harmonic_bins, odd_harmonics, HarmonicVector, ODD_ORDERS};

use crate::acquisition::CalibratedFrame;
use crate::cycles::CycleView;
use crate::error::{Error, Result};
use crate::{MAINS_HZ, POINTS_PER_CYCLE};

/// Mains cycles per harmonic analysis window.
pub const WINDOW_CYCLES: usize = 4;
/// FFT size of the analysis window.
pub const WINDOW_POINTS: usize = WINDOW_CYCLES * POINTS_PER_CYCLE;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerFeatures {
    pub p: f64,
    pub s: f64,
    pub q: f64,
    pub vrms: f64,
    pub irms: f64,
}

pub fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().map(|s| s * s).sum::<f64>() / x.len() as f64).sqrt()
}

fn check_pair(v: &[f64], i: &[f64]) -> Result<()> {
    if v.is_empty() || i.is_empty() {
        return Err(Error::domain("empty frame"));
    }
    if v.len() != i.len() {
        return Err(Error::domain("voltage and current lengths differ"));
    }
    Ok(())
}

fn voltage(frame: &CalibratedFrame) -> Result<&[f64]> {
    frame
        .v
        .as_deref()
        .ok_or_else(|| Error::domain("power features need a voltage channel"))
}

/// `(1/N)·Σ v[k]·i[k]`.
pub fn active_power_of(v: &[f64], i: &[f64]) -> Result<f64> {
    check_pair(v, i)?;
    Ok(v.iter().zip(i).map(|(a, b)| a * b).sum::<f64>() / v.len() as f64)
}

/// `rms(v) × rms(i)`.
pub fn apparent_power_of(v: &[f64], i: &[f64]) -> Result<f64> {
    check_pair(v, i)?;
    Ok(rms(v) * rms(i))
}

pub fn active_power(frame: &CalibratedFrame) -> Result<f64> {
    active_power_of(voltage(frame)?, &frame.i)
}

pub fn apparent_power(frame: &CalibratedFrame) -> Result<f64> {
    apparent_power_of(voltage(frame)?, &frame.i)
}

/// `√(S² − P²)`, clamped at zero for rounding noise. `|P|` exceeding `S` by
/// more than `1e-6·S` means the inputs cannot come from one frame.
pub fn reactive_power(p: f64, s: f64) -> Result<f64> {
    if !(s >= 0.0) || !p.is_finite() {
        return Err(Error::domain(format!("invalid power pair P = {p}, S = {s}")));
    }
    if p.abs() > s + 1e-6 * s {
        return Err(Error::Inconsistent { p, s });
    }
    Ok((s * s - p * p).max(0.0).sqrt())
}

pub fn power_features_of(v: &[f64], i: &[f64]) -> Result<PowerFeatures> {
    let p = active_power_of(v, i)?;
    let vrms = rms(v);
    let irms = rms(i);
    let s = vrms * irms;
    Ok(PowerFeatures {
        p,
        s,
        q: reactive_power(p, s)?,
        vrms,
        irms,
    })
}

pub fn power_features(frame: &CalibratedFrame) -> Result<PowerFeatures> {
    power_features_of(voltage(frame)?, &frame.i)
}

/// Harmonic analysis over 512-point windows, with or without output reordering.
#[derive(Debug, Clone)]
pub struct HarmonicAnalyzer {
    full: FftPlan,
    skip: SkipReorderPlan,
    bins: Vec<usize>,
    window_fs: f64,
    pub skip_reorder: bool,
}

impl Default for HarmonicAnalyzer {
    fn default() -> Self {
        Self::new(true)
    }
}

impl HarmonicAnalyzer {
    pub fn new(skip_reorder: bool) -> Self {
        let window_fs = POINTS_PER_CYCLE as f64 * MAINS_HZ;
        HarmonicAnalyzer {
            full: FftPlan::new(WINDOW_POINTS).expect("512 is a power of two"),
            skip: SkipReorderPlan::new(WINDOW_POINTS).expect("512 is a power of two"),
            bins: harmonic_bins(WINDOW_POINTS, window_fs, MAINS_HZ).expect("aligned by construction"),
            window_fs,
            skip_reorder,
        }
    }

    /// Harmonics of a synchronously resampled 4-cycle current window.
    pub fn analyze(&self, window: &[f64]) -> Result<HarmonicVector> {
        if window.len() != WINDOW_POINTS {
            return Err(Error::domain(format!(
                "harmonic window needs {WINDOW_POINTS} points, got {}",
                window.len()
            )));
        }
        if self.skip_reorder {
            odd_harmonics(&self.skip.forward_bins(window, self.window_fs, &self.bins)?, MAINS_HZ)
        } else {
            odd_harmonics(&self.full.forward_real(window, self.window_fs)?, MAINS_HZ)
        }
    }
}

/// Features of one 100 ms frame. Power features are absent in current-only mode.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameFeatures {
    pub power: Option<PowerFeatures>,
    pub harmonics: HarmonicVector,
}

/// Power over the whole frame; harmonics over its first four whole cycles.
pub fn frame_features(frame: &CalibratedFrame, analyzer: &HarmonicAnalyzer) -> Result<FrameFeatures> {
    let power = match frame.v.as_deref() {
        Some(v) => Some(power_features_of(v, &frame.i)?),
        None => None,
    };
    let view = CycleView::new(frame, MAINS_HZ)?;
    if view.cycles() < WINDOW_CYCLES {
        return Err(Error::Window(format!(
            "frame holds {} whole cycles, harmonic window needs {WINDOW_CYCLES}",
            view.cycles()
        )));
    }
    Ok(FrameFeatures {
        power,
        harmonics: analyzer.analyze(view.current(0, WINDOW_CYCLES))?,
    })
}

/// Writes `frame_idx,P_W,S_VA,Q_var,h1_mag..h15_mag,h1_phase..h15_phase`.
/// Power columns are left empty in current-only mode.
pub fn write_feature_csv<W: Write>(rows: &[FrameFeatures], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["frame_idx".to_string(), "P_W".into(), "S_VA".into(), "Q_var".into()];
    header.extend(ODD_ORDERS.iter().map(|h| format!("h{h}_mag")));
    header.extend(ODD_ORDERS.iter().map(|h| format!("h{h}_phase")));
    out.write_record(&header)?;
    for (k, row) in rows.iter().enumerate() {
        let mut rec = vec![k.to_string()];
        match row.power {
            Some(p) => rec.extend([p.p, p.s, p.q].iter().map(|x| format!("{x:.6}"))),
            None => rec.extend(std::iter::repeat_n(String::new(), 3)),
        }
        rec.extend(row.harmonics.magnitudes.iter().map(|x| format!("{x:.6}")));
        rec.extend(row.harmonics.phases.iter().map(|x| format!("{x:.6}")));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}
