//! Synthetic appliance waveforms.
//!
//! Each [`ApplianceModel`] describes a steady-state current phase-locked to a
//! clean mains voltage, plus an exponentially decaying inrush envelope that
//! starts at switch-on. Scenarios superimpose several appliances on a shared
//! voltage; switching instants snap to rising voltage zero crossings so that
//! every mains cycle is either fully "before" or fully "after" a switch.

use std::collections::HashMap;
use std::f64::consts::{PI, SQRT_2};
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{MAINS_HZ, MAINS_VRMS};

const PRESETS_JSON: &str = include_str!("../config/appliances.json");

/// Highest harmonic order an appliance model may carry.
pub const MAX_HARMONIC_ORDER: u32 = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApplianceKind {
    Resistive,
    Smps,
    Motor,
}

/// One harmonic of the load current, relative to the fundamental.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarmonicComponent {
    pub order: u32,
    /// Peak amplitude as a fraction of the fundamental peak.
    pub amplitude: f64,
    /// Phase in radians, applied as `sin(h·(ωt − φ) + phase)`.
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApplianceModel {
    pub id: String,
    pub kind: ApplianceKind,
    /// Active power drawn at rated mains voltage, in watts.
    pub rated_power: f64,
    /// Displacement power factor of the fundamental.
    pub power_factor: f64,
    #[serde(default)]
    pub harmonic_profile: Vec<HarmonicComponent>,
    #[serde(default = "one")]
    pub inrush_ratio: f64,
    /// Seconds until the inrush envelope has decayed to within 1% of steady state.
    #[serde(default)]
    pub inrush_decay: f64,
    #[serde(default)]
    pub current_noise_sigma: f64,
}

fn one() -> f64 {
    1.0
}

impl ApplianceModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.rated_power > 0.0) {
            return Err(Error::config(format!("{}: rated_power must be > 0", self.id)));
        }
        if !(self.power_factor > 0.0 && self.power_factor <= 1.0) {
            return Err(Error::config(format!("{}: power_factor must lie in (0, 1]", self.id)));
        }
        if !(self.inrush_ratio >= 1.0) {
            return Err(Error::config(format!("{}: inrush_ratio must be >= 1", self.id)));
        }
        if !(self.inrush_decay >= 0.0) || !(self.current_noise_sigma >= 0.0) {
            return Err(Error::config(format!(
                "{}: inrush_decay and current_noise_sigma must be non-negative",
                self.id
            )));
        }
        for h in &self.harmonic_profile {
            if h.order % 2 == 0 || h.order < 3 || h.order > MAX_HARMONIC_ORDER {
                return Err(Error::config(format!(
                    "{}: harmonic order {} must be odd and within 3..={}",
                    self.id, h.order, MAX_HARMONIC_ORDER
                )));
            }
            if !(0.0..=1.0).contains(&h.amplitude) {
                return Err(Error::config(format!(
                    "{}: harmonic amplitude {} outside [0, 1]",
                    self.id, h.amplitude
                )));
            }
        }
        Ok(())
    }

    pub fn highest_harmonic(&self) -> u32 {
        self.harmonic_profile.iter().map(|h| h.order).max().unwrap_or(1).max(1)
    }

    /// RMS of the fundamental current component at the given mains voltage.
    pub fn fundamental_rms(&self, vrms: f64) -> f64 {
        self.rated_power / (vrms * self.power_factor)
    }

    /// Same model without current noise.
    pub fn noiseless(mut self) -> Self {
        self.current_noise_sigma = 0.0;
        self
    }

    /// Randomly perturbed copy used to create intra-class variety in datasets.
    /// `spread` scales every relative perturbation (0.1 gives ±10% on power).
    pub fn perturbed<R: Rng>(&self, rng: &mut R, spread: f64) -> Self {
        let mut jitter = |rel: f64| 1.0 + spread * rel * rng.random_range(-1.0..=1.0);
        let mut m = self.clone();
        m.rated_power *= jitter(1.0);
        m.power_factor = (m.power_factor * jitter(0.3)).clamp(0.05, 1.0);
        m.inrush_ratio = (1.0 + (m.inrush_ratio - 1.0) * jitter(1.5)).max(1.0);
        m.inrush_decay *= jitter(2.0);
        for h in &mut m.harmonic_profile {
            h.amplitude = (h.amplitude * jitter(1.5)).clamp(0.0, 1.0);
        }
        let mut phase_jitter = |h: &mut HarmonicComponent| {
            h.phase += spread * rng.random_range(-1.0..=1.0);
        };
        m.harmonic_profile.iter_mut().for_each(&mut phase_jitter);
        m
    }

    /// Steady-state current at absolute time `t` for mains `(frequency, vrms)`.
    fn steady_current(&self, t: f64, mains: &Mains) -> f64 {
        let peak = SQRT_2 * self.fundamental_rms(mains.vrms);
        let lag = self.power_factor.acos();
        let theta = 2.0 * PI * mains.frequency * t - lag;
        let mut i = theta.sin();
        for h in &self.harmonic_profile {
            i += h.amplitude * (h.order as f64 * theta + h.phase).sin();
        }
        peak * i
    }

    fn inrush_envelope(&self, since_on: f64) -> f64 {
        if self.inrush_ratio <= 1.0 || self.inrush_decay <= 0.0 {
            return 1.0;
        }
        let tau = self.inrush_decay / INRUSH_TIME_CONSTANTS;
        1.0 + (self.inrush_ratio - 1.0) * (-since_on / tau).exp()
    }
}

/// The envelope spans this many time constants over `inrush_decay` (e^-5 < 1%).
const INRUSH_TIME_CONSTANTS: f64 = 5.0;

/// The five bundled appliance presets: lamp, hairdryer, laptop, refrigerator, washing machine.
pub fn presets() -> Vec<ApplianceModel> {
    serde_json::from_str(PRESETS_JSON).expect("bundled appliance presets are valid JSON")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mains {
    pub frequency: f64,
    pub vrms: f64,
}

impl Default for Mains {
    fn default() -> Self {
        Mains {
            frequency: MAINS_HZ,
            vrms: MAINS_VRMS,
        }
    }
}

impl Mains {
    /// Rising voltage zero crossing nearest to `t`.
    pub fn nearest_rising_crossing(&self, t: f64) -> f64 {
        (t * self.frequency).round() / self.frequency
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub appliance: String,
    pub t_on: f64,
    pub t_off: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    #[serde(default)]
    pub entries: Vec<ScheduleEntry>,
    pub duration: f64,
    #[serde(default)]
    pub mains: Mains,
}

impl Schedule {
    pub fn new(duration: f64) -> Self {
        Schedule {
            entries: Vec::new(),
            duration,
            mains: Mains::default(),
        }
    }

    pub fn with(mut self, appliance: &str, t_on: f64, t_off: f64) -> Self {
        self.entries.push(ScheduleEntry {
            appliance: appliance.to_string(),
            t_on,
            t_off,
        });
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0) {
            return Err(Error::config("schedule duration must be > 0"));
        }
        if !(self.mains.frequency > 0.0) || !(self.mains.vrms > 0.0) {
            return Err(Error::config("mains frequency and voltage must be > 0"));
        }
        for e in &self.entries {
            if !(0.0 <= e.t_on && e.t_on < e.t_off && e.t_off <= self.duration) {
                return Err(Error::config(format!(
                    "schedule entry {} needs 0 <= t_on < t_off <= duration",
                    e.appliance
                )));
            }
        }
        Ok(())
    }

    /// Switching instants after zero-crossing alignment, as `(time, appliance, is_on)`.
    pub fn switch_times(&self) -> Vec<(f64, &str, bool)> {
        let mut out = Vec::with_capacity(self.entries.len() * 2);
        for e in &self.entries {
            let on = self.mains.nearest_rising_crossing(e.t_on);
            let off = self.mains.nearest_rising_crossing(e.t_off);
            if on > 0.0 {
                out.push((on, e.appliance.as_str(), true));
            }
            if off < self.duration {
                out.push((off, e.appliance.as_str(), false));
            }
        }
        out.sort_by(|a, b| a.0.total_cmp(&b.0));
        out
    }
}

/// Per-sample set of active appliances, stored as bitmasks over `ids`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabelTrack {
    pub ids: Vec<String>,
    pub masks: Vec<u32>,
}

impl LabelTrack {
    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    pub fn at(&self, n: usize) -> Vec<&str> {
        let mask = self.masks[n];
        self.ids
            .iter()
            .enumerate()
            .filter(|(b, _)| mask & (1 << b) != 0)
            .map(|(_, id)| id.as_str())
            .collect()
    }
}

/// Synchronized voltage/current recording with ground-truth labels.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveformPair {
    pub fs: f64,
    pub v: Vec<f64>,
    pub i: Vec<f64>,
    pub labels: LabelTrack,
}

impl WaveformPair {
    pub fn len(&self) -> usize {
        self.i.len()
    }

    pub fn is_empty(&self) -> bool {
        self.i.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.len() as f64 / self.fs
    }

    /// Writes the `t_s,v_V,i_A,labels` CSV.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t_s", "v_V", "i_A", "labels"])?;
        for n in 0..self.len() {
            let t = n as f64 / self.fs;
            out.write_record([
                format!("{t:.9}"),
                format!("{:.9}", self.v[n]),
                format!("{:.9}", self.i[n]),
                self.labels.at(n).join("|"),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads the CSV written by [`WaveformPair::write_csv`]. The sampling rate is
    /// recovered from the time column.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut t = Vec::new();
        let mut v = Vec::new();
        let mut i = Vec::new();
        let mut ids: Vec<String> = Vec::new();
        let mut masks = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            if rec.len() < 3 {
                return Err(Error::domain("waveform CSV rows need t_s,v_V,i_A[,labels]"));
            }
            let num = |k: usize| -> Result<f64> {
                rec[k]
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::domain(format!("bad number {:?}: {e}", &rec[k])))
            };
            t.push(num(0)?);
            v.push(num(1)?);
            i.push(num(2)?);
            let mut mask = 0u32;
            if let Some(field) = rec.get(3) {
                for id in field.split('|').map(str::trim).filter(|s| !s.is_empty()) {
                    let bit = match ids.iter().position(|x| x == id) {
                        Some(b) => b,
                        None => {
                            ids.push(id.to_string());
                            ids.len() - 1
                        }
                    };
                    if bit >= 32 {
                        return Err(Error::domain("at most 32 distinct appliance labels"));
                    }
                    mask |= 1 << bit;
                }
            }
            masks.push(mask);
        }
        if t.len() < 2 {
            return Err(Error::domain("waveform CSV needs at least two samples"));
        }
        let span = t[t.len() - 1] - t[0];
        if !(span > 0.0) {
            return Err(Error::domain("time column must be increasing"));
        }
        let fs = ((t.len() - 1) as f64 / span * 1e3).round() / 1e3;
        Ok(WaveformPair {
            fs,
            v,
            i,
            labels: LabelTrack { ids, masks },
        })
    }
}

fn check_nyquist(model: &ApplianceModel, fs: f64, mains: &Mains) -> Result<()> {
    let highest = model.highest_harmonic() as f64 * mains.frequency;
    if !(fs > 2.0 * highest) {
        return Err(Error::config(format!(
            "fs = {fs} Hz violates Nyquist for {} (highest component {highest} Hz)",
            model.id
        )));
    }
    Ok(())
}

/// Single appliance switched on at t = 0 for the whole `duration`.
pub fn synth_appliance(model: &ApplianceModel, duration: f64, fs: f64, seed: u64) -> Result<WaveformPair> {
    if !(duration > 0.0) {
        return Err(Error::config("duration must be > 0"));
    }
    let schedule = Schedule::new(duration).with(&model.id, 0.0, duration);
    synth_scenario(std::slice::from_ref(model), &schedule, fs, seed)
}

/// Superimposes the scheduled appliances on a shared mains voltage.
///
/// Current noise has standard deviation `sqrt(Σ σ²)` over all `models` and is
/// present for the whole recording, whether or not anything is switched on.
pub fn synth_scenario(models: &[ApplianceModel], schedule: &Schedule, fs: f64, seed: u64) -> Result<WaveformPair> {
    schedule.validate()?;
    if !(fs > 0.0) {
        return Err(Error::config("fs must be > 0"));
    }
    let by_id: HashMap<&str, &ApplianceModel> = models.iter().map(|m| (m.id.as_str(), m)).collect();
    for m in models {
        m.validate()?;
        check_nyquist(m, fs, &schedule.mains)?;
    }
    if by_id.len() > 32 {
        return Err(Error::config("at most 32 appliances per scenario"));
    }

    let mains = &schedule.mains;
    let len = (schedule.duration * fs).round() as usize;
    let vpk = SQRT_2 * mains.vrms;
    let w = 2.0 * PI * mains.frequency;
    let v: Vec<f64> = (0..len).map(|n| vpk * (w * n as f64 / fs).sin()).collect();
    let mut i = vec![0.0; len];
    let mut masks = vec![0u32; len];

    let mut ids: Vec<String> = Vec::new();
    for e in &schedule.entries {
        let model = by_id
            .get(e.appliance.as_str())
            .ok_or_else(|| Error::config(format!("unknown appliance id {:?}", e.appliance)))?;
        let bit = match ids.iter().position(|x| *x == e.appliance) {
            Some(b) => b,
            None => {
                ids.push(e.appliance.clone());
                ids.len() - 1
            }
        };
        let t_on = mains.nearest_rising_crossing(e.t_on);
        let t_off = mains.nearest_rising_crossing(e.t_off);
        let n_on = first_sample_at(t_on, fs).min(len);
        let n_off = first_sample_at(t_off, fs).min(len);
        for n in n_on..n_off {
            let t = n as f64 / fs;
            i[n] += model.inrush_envelope(t - t_on) * model.steady_current(t, mains);
            masks[n] |= 1 << bit;
        }
    }

    let sigma = models
        .iter()
        .map(|m| m.current_noise_sigma * m.current_noise_sigma)
        .sum::<f64>()
        .sqrt();
    if sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, sigma).map_err(|e| Error::config(e.to_string()))?;
        for x in &mut i {
            *x += normal.sample(&mut rng);
        }
    }

    Ok(WaveformPair {
        fs,
        v,
        i,
        labels: LabelTrack { ids, masks },
    })
}

fn first_sample_at(t: f64, fs: f64) -> usize {
    (t * fs - 1e-6).ceil().max(0.0) as usize
}
