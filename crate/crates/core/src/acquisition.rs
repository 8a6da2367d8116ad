//! ADC front end: sampling-rate arithmetic, quantization and RawConv calibration.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::config::Mode;
use crate::error::{Error, Result};
use crate::signalgen::WaveformPair;

/// Nominal analysis frame length in seconds.
pub const FRAME_SPAN: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AcquisitionConfig {
    pub f_adc_clock: f64,
    pub adc_prescaler: f64,
    /// Clock cycles per conversion; fractional values such as 810.5 are allowed.
    pub sampling_cycles: f64,
    pub adc_bits: u32,
    pub full_scale_v: f64,
    pub full_scale_i: f64,
    /// Volts per count.
    pub gain_v: f64,
    /// Counts.
    pub offset_v: f64,
    /// Amps per count.
    pub gain_i: f64,
    pub offset_i: f64,
}

impl Default for AcquisitionConfig {
    /// 5.1872 MHz / (1 × 810.5) = 6400 Hz, i.e. 128 samples per 50 Hz cycle.
    fn default() -> Self {
        AcquisitionConfig::with_bits(16, 400.0, 70.0)
    }
}

impl AcquisitionConfig {
    /// Config with ideal mid-scale calibration for the given resolution and spans.
    pub fn with_bits(adc_bits: u32, full_scale_v: f64, full_scale_i: f64) -> Self {
        let half = (1u64 << (adc_bits.clamp(1, 32) - 1)) as f64;
        AcquisitionConfig {
            f_adc_clock: 5_187_200.0,
            adc_prescaler: 1.0,
            sampling_cycles: 810.5,
            adc_bits,
            full_scale_v,
            full_scale_i,
            gain_v: full_scale_v / half,
            offset_v: half,
            gain_i: full_scale_i / half,
            offset_i: half,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.f_adc_clock > 0.0) {
            return Err(Error::config("f_adc_clock must be > 0"));
        }
        if !(self.adc_prescaler >= 1.0) {
            return Err(Error::config("adc_prescaler must be >= 1"));
        }
        if !(self.sampling_cycles > 0.0) {
            return Err(Error::config("sampling_cycles must be > 0"));
        }
        if !(8..=16).contains(&self.adc_bits) {
            return Err(Error::config("adc_bits must lie in 8..=16"));
        }
        if !(self.full_scale_v > 0.0) || !(self.full_scale_i > 0.0) {
            return Err(Error::config("full-scale spans must be > 0"));
        }
        Ok(())
    }

    pub fn max_count(&self) -> u16 {
        ((1u32 << self.adc_bits) - 1) as u16
    }

    fn half_scale(&self) -> f64 {
        (1u32 << (self.adc_bits - 1)) as f64
    }

    /// Voltage quantization step in volts.
    pub fn lsb_v(&self) -> f64 {
        self.full_scale_v / self.half_scale()
    }

    /// Current quantization step in amps.
    pub fn lsb_i(&self) -> f64 {
        self.full_scale_i / self.half_scale()
    }
}

/// `f_adc_clock / (adc_prescaler × sampling_cycles)`.
pub fn sampling_rate(cfg: &AcquisitionConfig) -> Result<f64> {
    if !(cfg.f_adc_clock > 0.0) || !(cfg.adc_prescaler > 0.0) || !(cfg.sampling_cycles > 0.0) {
        return Err(Error::config(
            "f_adc_clock, adc_prescaler and sampling_cycles must all be > 0",
        ));
    }
    Ok(cfg.f_adc_clock / (cfg.adc_prescaler * cfg.sampling_cycles))
}

/// Raw ADC codes. `counts_v` is absent in current-only mode.
#[derive(Debug, Clone, PartialEq)]
pub struct RawFrame {
    pub counts_v: Option<Vec<u16>>,
    pub counts_i: Vec<u16>,
    pub fs: f64,
}

impl RawFrame {
    pub fn len(&self) -> usize {
        self.counts_i.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts_i.is_empty()
    }

    /// Non-overlapping sub-frames of `len` samples; the trailing remainder is dropped.
    pub fn split(&self, len: usize) -> Vec<RawFrame> {
        if len == 0 {
            return Vec::new();
        }
        let count = self.len() / len;
        (0..count)
            .map(|k| {
                let r = k * len..(k + 1) * len;
                RawFrame {
                    counts_v: self.counts_v.as_ref().map(|c| c[r.clone()].to_vec()),
                    counts_i: self.counts_i[r].to_vec(),
                    fs: self.fs,
                }
            })
            .collect()
    }

    /// Writes `t_s,counts_v,counts_i`; the voltage column is empty in current-only mode.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t_s", "counts_v", "counts_i"])?;
        for n in 0..self.len() {
            let cv = self.counts_v.as_ref().map(|c| c[n].to_string()).unwrap_or_default();
            out.write_record([format!("{:.9}", n as f64 / self.fs), cv, self.counts_i[n].to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Quantized {
    pub raw: RawFrame,
    pub clipped_v: usize,
    pub clipped_i: usize,
}

fn quantize_channel(x: &[f64], full_scale: f64, cfg: &AcquisitionConfig) -> (Vec<u16>, usize) {
    let half = cfg.half_scale();
    let max = cfg.max_count() as f64;
    let mut clipped = 0;
    let counts = x
        .iter()
        .map(|&s| {
            let c = (s / full_scale * half).round() + half;
            if !(0.0..=max).contains(&c) {
                clipped += 1;
            }
            c.clamp(0.0, max) as u16
        })
        .collect();
    (counts, clipped)
}

/// Mid-scale-offset linear quantization with saturation. Out-of-range samples
/// are clamped silently and counted per channel; NaN reads as code 0 and
/// counts as clipped.
pub fn quantize(wave: &WaveformPair, cfg: &AcquisitionConfig, mode: Mode) -> Result<Quantized> {
    cfg.validate()?;
    let (counts_i, clipped_i) = quantize_channel(&wave.i, cfg.full_scale_i, cfg);
    let (counts_v, clipped_v) = match mode {
        Mode::Power => {
            let (c, k) = quantize_channel(&wave.v, cfg.full_scale_v, cfg);
            (Some(c), k)
        }
        Mode::Current => (None, 0),
    };
    Ok(Quantized {
        raw: RawFrame {
            counts_v,
            counts_i,
            fs: wave.fs,
        },
        clipped_v,
        clipped_i,
    })
}

/// Calibrated volts/amps.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibratedFrame {
    pub v: Option<Vec<f64>>,
    pub i: Vec<f64>,
    pub fs: f64,
    pub frame_span: f64,
}

impl CalibratedFrame {
    pub fn len(&self) -> usize {
        self.i.len()
    }

    pub fn is_empty(&self) -> bool {
        self.i.is_empty()
    }

    pub fn mode(&self) -> Mode {
        if self.v.is_some() {
            Mode::Power
        } else {
            Mode::Current
        }
    }
}

/// RawConv: `value = gain × (count − offset)` per channel.
pub fn raw_conv(raw: &RawFrame, cfg: &AcquisitionConfig) -> CalibratedFrame {
    let conv =
        |c: &[u16], gain: f64, offset: f64| -> Vec<f64> { c.iter().map(|&k| gain * (k as f64 - offset)).collect() };
    CalibratedFrame {
        v: raw.counts_v.as_deref().map(|c| conv(c, cfg.gain_v, cfg.offset_v)),
        i: conv(&raw.counts_i, cfg.gain_i, cfg.offset_i),
        fs: raw.fs,
        frame_span: raw.len() as f64 / raw.fs,
    }
}

/// Samples per nominal 100 ms frame.
pub fn frame_len(fs: f64) -> usize {
    (fs * FRAME_SPAN).round() as usize
}

/// Consecutive 100 ms calibrated frames. A recording shorter than one frame
/// yields an empty stream.
pub fn frame_stream(wave: &WaveformPair, cfg: &AcquisitionConfig, mode: Mode) -> Result<Vec<CalibratedFrame>> {
    let q = quantize(wave, cfg, mode)?;
    let len = frame_len(wave.fs);
    Ok(q.raw
        .split(len)
        .iter()
        .map(|r| {
            let mut f = raw_conv(r, cfg);
            f.frame_span = FRAME_SPAN;
            f
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signalgen::LabelTrack;
    use std::f64::consts::PI;

    fn wave(v: Vec<f64>, i: Vec<f64>, fs: f64) -> WaveformPair {
        let n = i.len();
        WaveformPair {
            fs,
            v,
            i,
            labels: LabelTrack {
                ids: vec![],
                masks: vec![0; n],
            },
        }
    }

    fn cfg(clock: f64, prescaler: f64, cycles: f64) -> AcquisitionConfig {
        AcquisitionConfig {
            f_adc_clock: clock,
            adc_prescaler: prescaler,
            sampling_cycles: cycles,
            ..AcquisitionConfig::default()
        }
    }

    #[test]
    fn sampling_rate_examples() {
        assert_eq!(sampling_rate(&cfg(1e6, 1.0, 1000.0)).unwrap(), 1000.0);
        // 21 714 286 / 810.5 and / (4 × 810.5), evaluated by hand
        let fast = sampling_rate(&cfg(21_714_286.0, 1.0, 810.5)).unwrap();
        assert!((fast - 26_791.222_702).abs() < 1e-3, "{fast}");
        let slow = sampling_rate(&cfg(21_714_286.0, 4.0, 810.5)).unwrap();
        assert!((slow - 6_697.805_676).abs() < 1e-3, "{slow}");
        assert_eq!(sampling_rate(&AcquisitionConfig::default()).unwrap(), 6400.0);
    }

    #[test]
    fn sampling_rate_rejects_bad_divisors() {
        assert!(sampling_rate(&cfg(1e6, 0.0, 10.0)).is_err());
        assert!(sampling_rate(&cfg(1e6, 1.0, -1.0)).is_err());
        assert!(sampling_rate(&cfg(0.0, 1.0, 10.0)).is_err());
    }

    #[test]
    fn sampling_rate_decreases_in_divisors() {
        let mut prev = f64::INFINITY;
        for p in 1..=16 {
            let r = sampling_rate(&cfg(21_714_286.0, p as f64, 810.5)).unwrap();
            assert!(r < prev);
            prev = r;
        }
        let mut prev = f64::INFINITY;
        for c in (25..2000).step_by(25) {
            let r = sampling_rate(&cfg(21_714_286.0, 2.0, c as f64 + 0.5)).unwrap();
            assert!(r < prev);
            prev = r;
        }
    }

    #[test]
    fn zero_and_full_scale_codes() {
        let c = AcquisitionConfig::with_bits(12, 400.0, 70.0);
        let w = wave(vec![0.0; 4], vec![0.0, 70.0, -70.0, 100.0], 6400.0);
        let q = quantize(&w, &c, Mode::Power).unwrap();
        assert!(q.raw.counts_v.as_ref().unwrap().iter().all(|&k| k == 2048));
        assert_eq!(q.raw.counts_i, vec![2048, 4095, 0, 4095]);
        assert_eq!(q.clipped_i, 2);
        assert_eq!(q.clipped_v, 0);

        let w = wave(vec![f64::NAN; 2], vec![f64::NAN, 0.0], 6400.0);
        let q = quantize(&w, &c, Mode::Power).unwrap();
        assert_eq!((q.clipped_v, q.clipped_i), (2, 1));
    }

    #[test]
    fn raw_conv_affine_examples() {
        let mut c = AcquisitionConfig::with_bits(12, 400.0, 70.0);
        let raw = RawFrame {
            counts_v: Some(vec![2048; 3]),
            counts_i: vec![0, 4095],
            fs: 1.0,
        };
        let f = raw_conv(&raw, &c);
        assert!(f.v.unwrap().iter().all(|&x| x == 0.0));
        assert!((f.i[0] + 70.0).abs() < 1e-12);
        assert!((f.i[1] - 69.965_820_312_5).abs() < 1e-9);

        c.gain_v = 1.0;
        c.offset_v = 0.0;
        c.gain_i = 1.0;
        c.offset_i = 0.0;
        let raw = RawFrame {
            counts_v: Some(vec![1, 2, 3]),
            counts_i: vec![7, 8, 9],
            fs: 1.0,
        };
        let f = raw_conv(&raw, &c);
        assert_eq!(f.v.unwrap(), vec![1.0, 2.0, 3.0]);
        assert_eq!(f.i, vec![7.0, 8.0, 9.0]);
    }

    #[test]
    fn quantize_round_trip_within_half_lsb() {
        let c = AcquisitionConfig::with_bits(12, 400.0, 70.0);
        let fs = 6400.0;
        let v: Vec<f64> = (0..1280)
            .map(|n| 325.0 * (2.0 * PI * 50.0 * n as f64 / fs).sin())
            .collect();
        let i: Vec<f64> = (0..1280)
            .map(|n| 12.3 * (2.0 * PI * 150.0 * n as f64 / fs + 0.4).sin())
            .collect();
        let w = wave(v.clone(), i.clone(), fs);
        let f = raw_conv(&quantize(&w, &c, Mode::Power).unwrap().raw, &c);
        let fv = f.v.unwrap();
        for n in 0..1280 {
            assert!((fv[n] - v[n]).abs() <= 0.5 * c.lsb_v() + 1e-12);
            assert!((f.i[n] - i[n]).abs() <= 0.5 * c.lsb_i() + 1e-12);
        }
    }

    #[test]
    fn framing_drops_partial_tail() {
        let c = AcquisitionConfig::default();
        let mk = |secs: f64, fs: f64| {
            let n = (secs * fs).round() as usize;
            wave(vec![0.0; n], vec![0.0; n], fs)
        };
        let frames = frame_stream(&mk(1.0, 6600.0), &c, Mode::Power).unwrap();
        assert_eq!(frames.len(), 10);
        assert!(frames.iter().all(|f| f.len() == 660 && f.frame_span == FRAME_SPAN));
        assert!(frame_stream(&mk(0.05, 6600.0), &c, Mode::Power).unwrap().is_empty());
        assert_eq!(frame_stream(&mk(0.95, 6400.0), &c, Mode::Power).unwrap().len(), 9);
        let cur = frame_stream(&mk(0.3, 6400.0), &c, Mode::Current).unwrap();
        assert!(cur.iter().all(|f| f.v.is_none() && f.mode() == Mode::Current));
    }

    #[test]
    fn raw_csv_header() {
        let raw = RawFrame {
            counts_v: None,
            counts_i: vec![1, 2],
            fs: 2.0,
        };
        let mut buf = Vec::new();
        raw.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s, "t_s,counts_v,counts_i\n0.000000000,,1\n0.500000000,,2\n");
    }
}
