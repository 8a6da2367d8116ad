//! Host-side timing of the per-frame stages, plus analytic table memory.
//!
//! Times are medians over many repetitions on one thread, in nanoseconds per
//! 100 ms frame (FFT rows: per 512-point harmonic window). Table memory
//! counts the bytes of lookup tables and DP buffers a stage needs beyond its
//! input and output, computed from element counts rather than measured.

use std::hint::black_box;
use std::io::Write;
use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::acquisition::{quantize, raw_conv, sampling_rate, AcquisitionConfig};
use crate::config::{Config, Mode};
use crate::dtw::{dtw_cost, table_bytes, DtwOptions};
use crate::error::Result;
use crate::features::{active_power_of, apparent_power_of, harmonic_bins, FftPlan, SkipReorderPlan, WINDOW_POINTS};
use crate::signalgen::synth_appliance;
use crate::{MAINS_HZ, POINTS_PER_CYCLE};

/// Default repetitions per stage.
pub const DEFAULT_REPS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub median_ns: f64,
    pub table_bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub reps: usize,
    pub frame_samples: usize,
    pub stages: Vec<StageTiming>,
    /// `(t_fft − t_skip) / t_fft`, in percent.
    pub skip_reorder_time_reduction_pct: f64,
    /// `(m_fft − m_skip) / m_fft`, in percent.
    pub skip_reorder_memory_reduction_pct: f64,
}

impl BenchReport {
    pub fn stage(&self, name: &str) -> Option<&StageTiming> {
        self.stages.iter().find(|s| s.stage == name)
    }

    /// Fixed-width table for terminals.
    pub fn write_table<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{:<22} {:>14} {:>12}", "stage", "median ns", "table bytes")?;
        for s in &self.stages {
            writeln!(w, "{:<22} {:>14.0} {:>12}", s.stage, s.median_ns, s.table_bytes)?;
        }
        writeln!(
            w,
            "skip reorder: {:.1}% less time, {:.1}% less table memory (frames of {} samples, {} reps)",
            self.skip_reorder_time_reduction_pct, self.skip_reorder_memory_reduction_pct, self.frame_samples, self.reps
        )?;
        Ok(())
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Median wall time of single calls to `f`, in nanoseconds, after a warm-up.
fn time_ns(reps: usize, mut f: impl FnMut()) -> f64 {
    for _ in 0..reps.min(200) {
        f();
    }
    let samples = (0..reps)
        .map(|_| {
            let t = Instant::now();
            f();
            t.elapsed().as_nanos() as f64
        })
        .collect();
    median(samples)
}

/// Interleaves two measurements so drift in machine load hits both equally.
fn time_pair_ns(reps: usize, mut f: impl FnMut(), mut g: impl FnMut()) -> (f64, f64) {
    for _ in 0..reps.min(200) {
        f();
        g();
    }
    let mut a = Vec::with_capacity(reps);
    let mut b = Vec::with_capacity(reps);
    for _ in 0..reps {
        let t = Instant::now();
        f();
        a.push(t.elapsed().as_nanos() as f64);
        let t = Instant::now();
        g();
        b.push(t.elapsed().as_nanos() as f64);
    }
    (median(a), median(b))
}

/// Benchmarks one synthetic laptop frame through every stage.
pub fn run_bench(cfg: &Config, reps: usize) -> Result<BenchReport> {
    let acq: &AcquisitionConfig = &cfg.acquisition;
    let fs = sampling_rate(acq)?;
    let laptop = cfg
        .appliance("laptop")
        .or(cfg.appliances.first())
        .cloned()
        .ok_or_else(|| crate::Error::config("bench needs at least one appliance"))?;
    let wave = synth_appliance(&laptop, crate::acquisition::FRAME_SPAN, fs, 1)?;
    let dual = quantize(&wave, acq, Mode::Power)?.raw;
    let single = quantize(&wave, acq, Mode::Current)?.raw;
    let frame = raw_conv(&dual, acq);
    let v = frame.v.clone().unwrap_or_default();
    let i = frame.i.clone();

    let mut stages = Vec::new();
    let mut push = |stage: &str, median_ns: f64, table_bytes: usize| {
        stages.push(StageTiming {
            stage: stage.to_string(),
            median_ns,
            table_bytes,
        })
    };
    push(
        "raw_conv_dual",
        time_ns(reps, || drop(black_box(raw_conv(black_box(&dual), acq)))),
        0,
    );
    push(
        "raw_conv_current",
        time_ns(reps, || drop(black_box(raw_conv(black_box(&single), acq)))),
        0,
    );
    push(
        "active_power",
        time_ns(reps, || drop(black_box(active_power_of(black_box(&v), &i)))),
        0,
    );
    push(
        "apparent_power",
        time_ns(reps, || drop(black_box(apparent_power_of(black_box(&v), &i)))),
        0,
    );

    let full = FftPlan::new(WINDOW_POINTS)?;
    let skip = SkipReorderPlan::new(WINDOW_POINTS)?;
    let bins = harmonic_bins(WINDOW_POINTS, POINTS_PER_CYCLE as f64 * MAINS_HZ, MAINS_HZ)?;
    let window: Vec<f64> = i.iter().cycle().take(WINDOW_POINTS).copied().collect();
    let mut buf_a = vec![Complex64::default(); WINDOW_POINTS];
    let mut buf_b = vec![Complex64::default(); WINDOW_POINTS];
    let mut out_a = vec![Complex64::default(); bins.len()];
    let mut out_b = vec![Complex64::default(); bins.len()];
    let (t_fft, t_skip) = time_pair_ns(
        reps,
        || {
            for (c, x) in buf_a.iter_mut().zip(black_box(&window)) {
                *c = Complex64::new(*x, 0.0);
            }
            full.transform(&mut buf_a);
            for (o, &k) in out_a.iter_mut().zip(&bins) {
                *o = buf_a[k];
            }
            black_box(&out_a);
        },
        || {
            for (c, x) in buf_b.iter_mut().zip(black_box(&window)) {
                *c = Complex64::new(*x, 0.0);
            }
            skip.transform(&mut buf_b);
            for (o, &k) in out_b.iter_mut().zip(&bins) {
                *o = skip.read(&buf_b, k);
            }
            black_box(&out_b);
        },
    );
    push("fft", t_fft, full.table_bytes());
    push("fft_skip_reorder", t_skip, skip.table_bytes());

    let dtw = DtwOptions::default();
    let a: Vec<f64> = window[..POINTS_PER_CYCLE].to_vec();
    let b: Vec<f64> = window[POINTS_PER_CYCLE / 4..POINTS_PER_CYCLE / 4 + POINTS_PER_CYCLE].to_vec();
    let t_dtw = time_ns(reps.div_ceil(10), || drop(black_box(dtw_cost(black_box(&a), &b, &dtw))));
    push(
        "dtw_cycle_pair",
        t_dtw,
        table_bytes(POINTS_PER_CYCLE, POINTS_PER_CYCLE, false),
    );

    let (m_fft, m_skip) = (full.table_bytes() as f64, skip.table_bytes() as f64);
    Ok(BenchReport {
        reps,
        frame_samples: dual.len(),
        stages,
        skip_reorder_time_reduction_pct: 100.0 * (t_fft - t_skip) / t_fft,
        skip_reorder_memory_reduction_pct: 100.0 * (m_fft - m_skip) / m_fft,
    })
}
