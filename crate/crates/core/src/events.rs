//! Switching-event detection and composite event features.
//!
//! Detection runs on a per-cycle level series (active power, or RMS current
//! without a voltage channel). An event's index `j` is the last whole cycle
//! before the switch, so cycle `j + 1` is the first one after it.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::config::Mode;
use crate::cycles::CycleView;
use crate::dtw::{dtw_signature_with, DtwOptions, DtwSignature};
use crate::error::{Error, Result};
use crate::features::{power_features_of, rms, HarmonicAnalyzer, HarmonicVector, PowerFeatures, WINDOW_CYCLES};
use crate::MAINS_VRMS;

/// Power-mode threshold in watts.
pub const POWER_THRESHOLD_W: f64 = 5.0;
/// Current-mode threshold: the same 5 W at nominal mains voltage, in amps RMS.
pub const CURRENT_THRESHOLD_A: f64 = POWER_THRESHOLD_W / MAINS_VRMS;

/// Cycle offsets of a [`CycleSet`], relative to the event index.
pub const CYCLE_OFFSETS: [i64; 6] = [-20, -10, 0, 1, 10, 20];
/// Cycles needed on each side of `j`.
pub const MARGIN_CYCLES: usize = 20;

/// First cycle of the post-event analysis window; it ends on the `j + 20` cycle.
pub const POST_WINDOW_START: usize = MARGIN_CYCLES + 1 - WINDOW_CYCLES;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    /// Watts in power mode, amps RMS in current mode.
    pub threshold: f64,
    pub mode: Mode,
    /// Candidates closer than this many cycles are merged, keeping the larger step.
    pub refractory: usize,
    /// Cycles the new level must hold.
    pub debounce: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig::for_mode(Mode::Power)
    }
}

impl DetectorConfig {
    pub fn for_mode(mode: Mode) -> Self {
        DetectorConfig {
            threshold: match mode {
                Mode::Power => POWER_THRESHOLD_W,
                Mode::Current => CURRENT_THRESHOLD_A,
            },
            mode,
            refractory: 25,
            debounce: 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0) {
            return Err(Error::config("detector threshold must be > 0"));
        }
        if self.refractory < 1 || self.debounce < 1 {
            return Err(Error::config("refractory and debounce must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventMark {
    /// Last whole cycle before the switch.
    pub j: usize,
    pub direction: Direction,
    /// Magnitude of the triggering step, in the detector's units.
    pub delta: f64,
}

impl EventMark {
    /// First cycle after the switch.
    pub fn switch_cycle(&self) -> usize {
        self.j + 1
    }
}

/// Threshold-triggered step detection with debounce and refractory merging.
///
/// A step between cycles `k-1` and `k` becomes a candidate (with `j = k-1`)
/// when it is at least `threshold` and the next `debounce` levels, starting
/// at `k`, all stay at least `threshold` away from `x[k-1]` on the same side,
/// while the `debounce` levels ending at `k-1` stay within `threshold` of it.
/// The same test anchored at `x[k-2]` is also accepted, which tolerates one
/// transitional cycle whose window straddles the switch.
/// Runs of candidates spaced closer than `refractory` collapse into the one
/// with the largest step, which absorbs inrush decay after a turn-on.
pub fn detect_events(series: &[f64], cfg: &DetectorConfig) -> Vec<EventMark> {
    let th = cfg.threshold;
    let mut candidates = Vec::new();
    for k in 1..series.len() {
        let step = series[k] - series[k - 1];
        if !(step.abs() >= th) {
            continue;
        }
        let sign = step.signum();
        let steady_from = |last: usize| {
            let base = series[last];
            let persists = (0..cfg.debounce).all(|m| series.get(k + m).is_some_and(|&x| (x - base) * sign >= th));
            let settled = (1..cfg.debounce).all(|m| last >= m && (series[last - m] - base).abs() < th);
            persists && settled
        };
        // A cycle that straddles the switch can overshoot both levels, so
        // the pre-step level may also end one cycle earlier.
        if steady_from(k - 1) || (k >= 2 && steady_from(k - 2)) {
            candidates.push(EventMark {
                j: k - 1,
                direction: if step > 0.0 { Direction::On } else { Direction::Off },
                delta: step.abs(),
            });
        }
    }

    let mut out: Vec<EventMark> = Vec::new();
    let mut last_j: Option<usize> = None;
    for c in candidates {
        match (out.last_mut(), last_j) {
            (Some(kept), Some(prev)) if c.j - prev < cfg.refractory => {
                if c.delta > kept.delta {
                    *kept = c;
                }
            }
            _ => out.push(c),
        }
        last_j = Some(c.j);
    }
    out
}

/// Single-cycle current snippets around an event, at [`CYCLE_OFFSETS`].
#[derive(Debug, Clone, PartialEq)]
pub struct CycleSet {
    pub event: EventMark,
    pub cycles: [Vec<f64>; 6],
}

impl CycleSet {
    /// Pre-event cycles in the order j, j−10, j−20.
    pub fn pre(&self) -> [&[f64]; 3] {
        [&self.cycles[2], &self.cycles[1], &self.cycles[0]]
    }

    /// Post-event cycles in the order j+1, j+10, j+20.
    pub fn post(&self) -> [&[f64]; 3] {
        [&self.cycles[3], &self.cycles[4], &self.cycles[5]]
    }

    /// Steady-state change of the load current: cycle j+20 minus cycle j.
    pub fn delta_cycle(&self) -> Vec<f64> {
        self.cycles[5].iter().zip(&self.cycles[2]).map(|(a, b)| a - b).collect()
    }
}

fn check_margin(view: &CycleView, mark: &EventMark) -> Result<()> {
    if mark.j < MARGIN_CYCLES || mark.j + MARGIN_CYCLES >= view.cycles() {
        return Err(Error::Window(format!(
            "event at cycle {} needs {MARGIN_CYCLES} cycles on each side; recording has {}",
            mark.j,
            view.cycles()
        )));
    }
    Ok(())
}

/// Snippets at j−20, j−10, j, j+1, j+10, j+20, each one resampled mains cycle.
pub fn extract_cycles(view: &CycleView, mark: &EventMark) -> Result<CycleSet> {
    check_margin(view, mark)?;
    let cycles = CYCLE_OFFSETS.map(|off| view.current((mark.j as i64 + off) as usize, 1).to_vec());
    Ok(CycleSet { event: *mark, cycles })
}

/// Features of one 4-cycle analysis window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowFeatures {
    pub power: Option<PowerFeatures>,
    pub irms: f64,
    pub harmonics: HarmonicVector,
}

pub fn window_features(view: &CycleView, first: usize, analyzer: &HarmonicAnalyzer) -> Result<WindowFeatures> {
    let i = view.current(first, WINDOW_CYCLES);
    let power = match view.voltage(first, WINDOW_CYCLES) {
        Some(v) => Some(power_features_of(v, i)?),
        None => None,
    };
    Ok(WindowFeatures {
        power,
        irms: rms(i),
        harmonics: analyzer.analyze(i)?,
    })
}

/// Composite event feature.
///
/// Power mode (20 values): ΔP, ΔS, ΔQ, Δh1..Δh15 (8 odd orders), then the
/// 9 DTW signature values. Current mode (17 values): ΔIrms, Δh3..Δh15 (7),
/// then the signature. Each harmonic delta is the magnitude of the change of
/// the complex harmonic phasor, signed by the event direction, so it isolates
/// the switched load even when other loads keep running.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub mode: Mode,
    pub event: EventMark,
}

impl FeatureVector {
    pub fn len_for(mode: Mode) -> usize {
        match mode {
            Mode::Power => 20,
            Mode::Current => 17,
        }
    }

    pub fn names(mode: Mode) -> Vec<String> {
        let mut names: Vec<String> = match mode {
            Mode::Power => vec!["dP".into(), "dS".into(), "dQ".into()],
            Mode::Current => vec!["dIrms".into()],
        };
        let skip = if mode == Mode::Power { 0 } else { 1 };
        names.extend(crate::features::ODD_ORDERS.iter().skip(skip).map(|h| format!("dh{h}")));
        for post in [1, 10, 20] {
            for pre in [0, -10, -20] {
                names.push(format!("dtw_p{post}_m{}", -pre));
            }
        }
        names
    }
}

pub fn composite_feature(
    pre: &WindowFeatures,
    post: &WindowFeatures,
    sig: &DtwSignature,
    mode: Mode,
    event: EventMark,
) -> Result<FeatureVector> {
    let mut values = Vec::with_capacity(FeatureVector::len_for(mode));
    match mode {
        Mode::Power => {
            let (a, b) = match (pre.power, post.power) {
                (Some(a), Some(b)) => (a, b),
                _ => return Err(Error::Feature("power-mode feature needs voltage".into())),
            };
            values.extend([b.p - a.p, b.s - a.s, b.q - a.q]);
        }
        Mode::Current => values.push(post.irms - pre.irms),
    }
    let sign = match event.direction {
        Direction::On => 1.0,
        Direction::Off => -1.0,
    };
    let first_order = if mode == Mode::Power { 0 } else { 1 };
    for k in first_order..pre.harmonics.orders.len() {
        values.push(sign * (post.harmonics.phasor(k) - pre.harmonics.phasor(k)).norm());
    }
    values.extend_from_slice(sig.values());
    if let Some(bad) = values.iter().position(|x| !x.is_finite()) {
        return Err(Error::Feature(format!("non-finite feature at index {bad}")));
    }
    debug_assert_eq!(values.len(), FeatureVector::len_for(mode));
    Ok(FeatureVector { values, mode, event })
}

/// Everything computed for one detected event.
#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    pub mark: EventMark,
    pub cycles: CycleSet,
    pub signature: DtwSignature,
    pub feature: FeatureVector,
}

/// Pre window ends on cycle j; post window ends on cycle j+20, after inrush.
pub fn analyze_event(
    view: &CycleView,
    mark: &EventMark,
    mode: Mode,
    analyzer: &HarmonicAnalyzer,
    dtw: &DtwOptions,
) -> Result<EventRecord> {
    let cycles = extract_cycles(view, mark)?;
    let signature = dtw_signature_with(&cycles, dtw)?;
    let pre = window_features(view, mark.j + 1 - WINDOW_CYCLES, analyzer)?;
    let post = window_features(view, mark.j + POST_WINDOW_START, analyzer)?;
    let feature = composite_feature(&pre, &post, &signature, mode, *mark)?;
    Ok(EventRecord {
        mark: *mark,
        cycles,
        signature,
        feature,
    })
}

#[derive(Serialize)]
struct EventLine<'a> {
    j: usize,
    dir: Direction,
    delta: f64,
    feature: &'a [f64],
}

/// One `{"j":..,"dir":"on|off","delta":..,"feature":[...]}` object per line.
pub fn write_events_jsonl<W: Write>(events: &[EventRecord], mut w: W) -> Result<()> {
    for e in events {
        let line = EventLine {
            j: e.mark.j,
            dir: e.mark.direction,
            delta: e.mark.delta,
            feature: &e.feature.values,
        };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acquisition::CalibratedFrame;
    use crate::dtw::dtw_signature;
    use std::f64::consts::PI;

    fn step(len: usize, at: usize, before: f64, after: f64) -> Vec<f64> {
        (0..len).map(|k| if k <= at { before } else { after }).collect()
    }

    #[test]
    fn detects_on_step() {
        let ev = detect_events(&step(100, 50, 0.0, 60.0), &DetectorConfig::default());
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].j, 50);
        assert_eq!(ev[0].direction, Direction::On);
        assert!((ev[0].delta - 60.0).abs() < 1e-12);
    }

    #[test]
    fn detects_off_step() {
        let ev = detect_events(&step(200, 80, 100.0, 2.0), &DetectorConfig::default());
        assert_eq!(ev.len(), 1);
        assert_eq!((ev[0].j, ev[0].direction), (80, Direction::Off));
        assert!((ev[0].delta - 98.0).abs() < 1e-12);
    }

    #[test]
    fn ignores_sub_threshold_and_glitches() {
        assert!(detect_events(&[3.0; 100], &DetectorConfig::default()).is_empty());
        assert!(detect_events(&[0.0], &DetectorConfig::default()).is_empty());
        // two-cycle spike fails the 3-cycle debounce
        let mut x = vec![0.0; 60];
        x[30] = 50.0;
        x[31] = 50.0;
        assert!(detect_events(&x, &DetectorConfig::default()).is_empty());
    }

    #[test]
    fn straddling_cycle_overshoot_still_detected() {
        let mut x = step(80, 39, 5.9173, 5.2159);
        x[39] = 5.9418;
        let cfg = DetectorConfig::for_mode(Mode::Current);
        let marks = detect_events(&x, &cfg);
        assert_eq!(marks.len(), 1, "{marks:?}");
        assert_eq!((marks[0].j, marks[0].direction), (39, Direction::Off));
    }

    #[test]
    fn inrush_decay_merges_into_turn_on() {
        let mut x = vec![0.0; 120];
        for (k, v) in x.iter_mut().enumerate().skip(41) {
            *v = 150.0 * (1.0 + 4.0 * (-((k - 41) as f64) / 3.0).exp());
        }
        let ev = detect_events(&x, &DetectorConfig::default());
        assert_eq!(ev.len(), 1);
        assert_eq!((ev[0].j, ev[0].direction), (40, Direction::On));
        assert!((ev[0].delta - 750.0).abs() < 1e-9);
    }

    #[test]
    fn refractory_keeps_larger_step() {
        let mut x = vec![0.0; 100];
        x[31..].iter_mut().for_each(|v| *v = 10.0);
        x[36..].iter_mut().for_each(|v| *v = 90.0);
        let ev = detect_events(&x, &DetectorConfig::default());
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].j, 35);
        let cfg = DetectorConfig {
            refractory: 3,
            ..Default::default()
        };
        assert_eq!(detect_events(&x, &cfg).len(), 2);
    }

    fn sine_view(cycles: usize, amp: f64) -> CycleView {
        let n = cycles * 128;
        let frame = CalibratedFrame {
            v: Some((0..n).map(|k| 325.0 * (2.0 * PI * k as f64 / 128.0).sin()).collect()),
            i: (0..n)
                .map(|k| amp * (2.0 * PI * k as f64 / 128.0 - 0.3).sin())
                .collect(),
            fs: 6400.0,
            frame_span: n as f64 / 6400.0,
        };
        CycleView::new(&frame, 50.0).unwrap()
    }

    #[test]
    fn cycle_offsets_and_margins() {
        let view = sine_view(250, 1.0);
        let mark = EventMark {
            j: 25,
            direction: Direction::On,
            delta: 10.0,
        };
        let cs = extract_cycles(&view, &mark).unwrap();
        for (slot, cyc) in [5usize, 15, 25, 26, 35, 45].iter().enumerate() {
            assert_eq!(cs.cycles[slot].as_slice(), view.current(*cyc, 1));
        }
        assert!(cs.cycles.iter().all(|c| c.len() == 128));
        let early = EventMark { j: 10, ..mark };
        assert!(matches!(extract_cycles(&view, &early), Err(Error::Window(_))));
        let late = EventMark { j: 230, ..mark };
        assert!(matches!(extract_cycles(&view, &late), Err(Error::Window(_))));
    }

    #[test]
    fn periodic_signal_has_zero_signature() {
        let view = sine_view(120, 2.5);
        for j in [20, 47, 99] {
            let mark = EventMark {
                j,
                direction: Direction::On,
                delta: 6.0,
            };
            let sig = dtw_signature(&extract_cycles(&view, &mark).unwrap()).unwrap();
            assert!(sig.values().iter().all(|&d| d < 1e-9), "{sig:?}");
        }
    }

    #[test]
    fn composite_layout() {
        let view = sine_view(60, 1.0);
        let an = HarmonicAnalyzer::default();
        let w = window_features(&view, 10, &an).unwrap();
        let mark = EventMark {
            j: 30,
            direction: Direction::On,
            delta: 6.0,
        };
        let f = composite_feature(&w, &w, &DtwSignature::default(), Mode::Power, mark).unwrap();
        assert_eq!(f.values.len(), 20);
        assert!(f.values.iter().all(|&x| x.abs() < 1e-9));
        let cur = WindowFeatures {
            power: None,
            ..w.clone()
        };
        let f = composite_feature(&cur, &cur, &DtwSignature::default(), Mode::Current, mark).unwrap();
        assert_eq!(f.values.len(), 17);
        assert_eq!(FeatureVector::names(Mode::Current).len(), 17);
        assert_eq!(FeatureVector::names(Mode::Power).len(), 20);
        assert!(composite_feature(&cur, &cur, &DtwSignature::default(), Mode::Power, mark).is_err());
        let bad = DtwSignature([f64::NAN; 9]);
        assert!(matches!(
            composite_feature(&w, &w, &bad, Mode::Power, mark),
            Err(Error::Feature(_))
        ));
    }

    #[test]
    fn jsonl_shape() {
        let view = sine_view(60, 1.0);
        let mark = EventMark {
            j: 30,
            direction: Direction::Off,
            delta: 7.5,
        };
        let rec = analyze_event(
            &view,
            &mark,
            Mode::Power,
            &HarmonicAnalyzer::default(),
            &DtwOptions::default(),
        )
        .unwrap();
        let mut buf = Vec::new();
        write_events_jsonl(&[rec], &mut buf).unwrap();
        let line = String::from_utf8(buf).unwrap();
        let v: serde_json::Value = serde_json::from_str(line.trim()).unwrap();
        assert_eq!(v["j"], 30);
        assert_eq!(v["dir"], "off");
        assert_eq!(v["delta"], 7.5);
        assert_eq!(v["feature"].as_array().unwrap().len(), 20);
    }
}
