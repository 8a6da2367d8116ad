//! Mains-cycle grid and synchronous resampling.
//!
//! With a voltage channel, a [`CycleGrid`] follows the rising zero crossings
//! of the voltage, bridging gaps with the nominal period. Without one, the
//! grid takes its phase from the first current crossing and then advances by
//! the nominal period: current crossings move whenever a load switches, and
//! following them would tear the grid exactly where events happen. Each cycle is then resampled to a
//! fixed number of points by linear interpolation, which puts the mains
//! fundamental on an exact FFT bin regardless of the ADC rate.

use crate::acquisition::CalibratedFrame;
use crate::config::Mode;
use crate::error::{Error, Result};
use crate::POINTS_PER_CYCLE;

/// Hysteresis as a fraction of the reference peak.
const HYSTERESIS: f64 = 0.05;

/// Rising zero crossings as fractional sample positions. A crossing only
/// counts once the signal has dipped below `-hysteresis` since the last one.
pub fn rising_crossings(x: &[f64], hysteresis: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut armed = false;
    for n in 1..x.len() {
        if x[n - 1] < -hysteresis {
            armed = true;
        }
        if armed && x[n - 1] < 0.0 && x[n] >= 0.0 {
            let frac = -x[n - 1] / (x[n] - x[n - 1]);
            out.push((n - 1) as f64 + frac);
            armed = false;
        }
    }
    out
}

/// Linear interpolation at fractional position `p`, extrapolating from the
/// last segment past the end.
pub fn interpolate(x: &[f64], p: f64) -> f64 {
    debug_assert!(x.len() >= 2);
    let last = x.len() - 1;
    let i0 = (p.floor().max(0.0) as usize).min(last - 1);
    let frac = p - i0 as f64;
    x[i0] + (x[i0 + 1] - x[i0]) * frac
}

/// Resamples `[start, end)` to `points` equally spaced values.
pub fn resample_span(x: &[f64], start: f64, end: f64, points: usize, out: &mut Vec<f64>) {
    let step = (end - start) / points as f64;
    out.extend((0..points).map(|m| interpolate(x, start + m as f64 * step)));
}

#[derive(Debug, Clone, PartialEq)]
pub struct CycleGrid {
    /// Start position of every cycle; cycle `k` spans `starts[k]..starts[k + 1]`.
    pub starts: Vec<f64>,
    /// Nominal period in samples.
    pub period: f64,
}

impl CycleGrid {
    /// Grid of nominal periods beginning at `phase` samples.
    pub fn nominal(len: usize, period: f64, phase: f64) -> Self {
        let mut starts = Vec::new();
        let mut s = phase;
        while s <= len as f64 + 1e-9 {
            starts.push(s);
            s += period;
        }
        CycleGrid { starts, period }
    }

    /// Locks onto the rising zero crossings of `reference`.
    pub fn locate(reference: &[f64], fs: f64, f0: f64) -> Result<Self> {
        let period = fs / f0;
        if !(period >= 4.0) {
            return Err(Error::config(format!(
                "fs = {fs} Hz gives fewer than 4 samples per {f0} Hz cycle"
            )));
        }
        let len = reference.len();
        let peak = reference.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let crossings = if peak > 0.0 {
            rising_crossings(reference, HYSTERESIS * peak)
        } else {
            Vec::new()
        };
        let Some(&anchor) = crossings.first() else {
            return Ok(Self::nominal(len, period, 0.0));
        };

        let mut first = anchor;
        while first - period >= -1e-9 {
            first -= period;
        }
        let mut starts = Vec::new();
        let mut s = first.max(0.0);
        while s < anchor - 0.5 {
            starts.push(s);
            s += period;
        }

        let tolerance = period / 4.0;
        let mut next = 0;
        let mut s = anchor;
        while s <= len as f64 + 1e-9 {
            starts.push(s);
            let expected = s + period;
            while next < crossings.len() && crossings[next] < expected - tolerance {
                next += 1;
            }
            s = match crossings.get(next) {
                Some(&c) if (c - expected).abs() <= tolerance => c,
                _ => expected,
            };
        }
        Ok(CycleGrid { starts, period })
    }

    /// Nominal-period grid whose phase comes from the first rising crossing of
    /// `reference`, or zero when it never crosses.
    pub fn phase_locked(reference: &[f64], fs: f64, f0: f64) -> Result<Self> {
        let period = fs / f0;
        if !(period >= 4.0) {
            return Err(Error::config(format!(
                "fs = {fs} Hz gives fewer than 4 samples per {f0} Hz cycle"
            )));
        }
        let peak = reference.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let anchor = if peak > 0.0 {
            rising_crossings(reference, HYSTERESIS * peak).first().copied()
        } else {
            None
        };
        let phase = anchor.map_or(0.0, |a| a.rem_euclid(period));
        Ok(Self::nominal(reference.len(), period, phase))
    }

    /// Number of complete cycles.
    pub fn len(&self) -> usize {
        self.starts.len().saturating_sub(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn span(&self, k: usize) -> (f64, f64) {
        (self.starts[k], self.starts[k + 1])
    }

    /// Index of the cycle whose start lies nearest to `sample`.
    pub fn nearest_start(&self, sample: f64) -> Option<usize> {
        (0..self.starts.len()).min_by(|&a, &b| {
            (self.starts[a] - sample)
                .abs()
                .total_cmp(&(self.starts[b] - sample).abs())
        })
    }
}

/// A recording cut into synchronously resampled mains cycles.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleView {
    pub grid: CycleGrid,
    pub points: usize,
    v: Option<Vec<f64>>,
    i: Vec<f64>,
}

impl CycleView {
    /// Voltage is the reference channel when present; otherwise the grid is
    /// phase-locked to the current.
    pub fn new(frame: &CalibratedFrame, f0: f64) -> Result<Self> {
        Self::with_points(frame, f0, POINTS_PER_CYCLE)
    }

    pub fn with_points(frame: &CalibratedFrame, f0: f64, points: usize) -> Result<Self> {
        if frame.len() < 2 {
            return Err(Error::domain("recording too short for cycle extraction"));
        }
        let grid = match frame.v.as_deref() {
            Some(v) => CycleGrid::locate(v, frame.fs, f0)?,
            None => CycleGrid::phase_locked(&frame.i, frame.fs, f0)?,
        };
        let resample = |x: &[f64]| {
            let mut out = Vec::with_capacity(grid.len() * points);
            for k in 0..grid.len() {
                let (a, b) = grid.span(k);
                resample_span(x, a, b, points, &mut out);
            }
            out
        };
        Ok(CycleView {
            v: frame.v.as_deref().map(resample),
            i: resample(&frame.i),
            grid,
            points,
        })
    }

    pub fn cycles(&self) -> usize {
        self.grid.len()
    }

    pub fn mode(&self) -> Mode {
        if self.v.is_some() {
            Mode::Power
        } else {
            Mode::Current
        }
    }

    /// Resampled current of `count` consecutive cycles starting at `first`.
    pub fn current(&self, first: usize, count: usize) -> &[f64] {
        &self.i[first * self.points..(first + count) * self.points]
    }

    pub fn voltage(&self, first: usize, count: usize) -> Option<&[f64]> {
        self.v
            .as_deref()
            .map(|v| &v[first * self.points..(first + count) * self.points])
    }

    /// Per-cycle active power; `None` without a voltage channel.
    pub fn power_series(&self) -> Option<Vec<f64>> {
        let v = self.v.as_deref()?;
        Some(
            v.chunks_exact(self.points)
                .zip(self.i.chunks_exact(self.points))
                .map(|(vc, ic)| vc.iter().zip(ic).map(|(a, b)| a * b).sum::<f64>() / self.points as f64)
                .collect(),
        )
    }

    pub fn irms_series(&self) -> Vec<f64> {
        self.i
            .chunks_exact(self.points)
            .map(|c| (c.iter().map(|x| x * x).sum::<f64>() / self.points as f64).sqrt())
            .collect()
    }

    /// The series event detection runs on: P in power mode, Irms in current mode.
    pub fn level_series(&self, mode: Mode) -> Result<Vec<f64>> {
        match mode {
            Mode::Power => self
                .power_series()
                .ok_or_else(|| Error::domain("power mode needs a voltage channel")),
            Mode::Current => Ok(self.irms_series()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sine(len: usize, fs: f64, phase: f64) -> Vec<f64> {
        (0..len)
            .map(|n| (2.0 * PI * 50.0 * n as f64 / fs + phase).sin())
            .collect()
    }

    #[test]
    fn grid_on_exact_rate_is_integer() {
        let g = CycleGrid::locate(&sine(1280, 6400.0, 0.0), 6400.0, 50.0).unwrap();
        assert_eq!(g.len(), 10);
        for (k, s) in g.starts.iter().enumerate() {
            assert!((s - 128.0 * k as f64).abs() < 1e-9, "{k}: {s}");
        }
    }

    #[test]
    fn grid_tracks_fractional_rate() {
        let fs = 6629.3;
        let x = sine(6629, fs, 1.0);
        let g = CycleGrid::locate(&x, fs, 50.0).unwrap();
        let first = (2.0 * PI - 1.0) / (2.0 * PI) * fs / 50.0;
        assert!((g.starts[0] - first).abs() < 0.01, "{}", g.starts[0]);
        for w in g.starts.windows(2) {
            assert!((w[1] - w[0] - fs / 50.0).abs() < 0.01);
        }
    }

    #[test]
    fn silence_falls_back_to_nominal() {
        let g = CycleGrid::locate(&vec![0.0; 640], 6400.0, 50.0).unwrap();
        assert_eq!(g.len(), 5);
    }

    #[test]
    fn phase_locked_grid_ignores_phase_jumps() {
        // the crossing moves by a quarter period halfway through
        let mut x = sine(1280, 6400.0, 0.3);
        x[640..].copy_from_slice(&sine(1280, 6400.0, 0.3 + PI / 2.0)[640..]);
        let g = CycleGrid::phase_locked(&x, 6400.0, 50.0).unwrap();
        assert!(g.starts.windows(2).all(|w| (w[1] - w[0] - 128.0).abs() < 1e-9));
        let first = rising_crossings(&x, 0.05)[0];
        assert!((g.starts[0] - first.rem_euclid(128.0)).abs() < 1e-9);
        assert_eq!(
            CycleGrid::phase_locked(&[0.0; 300], 6400.0, 50.0).unwrap().starts[0],
            0.0
        );
    }

    #[test]
    fn gaps_are_bridged() {
        // current present only in the second half
        let mut x = sine(1280, 6400.0, 0.3);
        x[..640].iter_mut().for_each(|s| *s = 0.0);
        let g = CycleGrid::locate(&x, 6400.0, 50.0).unwrap();
        assert_eq!(g.len(), 9);
        for w in g.starts.windows(2) {
            assert!((w[1] - w[0] - 128.0).abs() < 1e-6);
        }
    }

    #[test]
    fn resampling_is_identity_at_128_per_cycle() {
        let x = sine(1280, 6400.0, 0.0);
        let mut out = Vec::new();
        resample_span(&x, 128.0, 256.0, 128, &mut out);
        assert_eq!(out.as_slice(), &x[128..256]);
    }
}
