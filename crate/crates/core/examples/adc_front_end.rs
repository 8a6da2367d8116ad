//! The ADC model: sampling-rate arithmetic, 16-bit quantization and the
//! gain/offset conversion back to volts and amps.

use edge_nilm::acquisition::{quantize, raw_conv, sampling_rate};
use edge_nilm::config::{Config, Mode};
use edge_nilm::signalgen::synth_appliance;

/// Largest calibrated-minus-true error on each channel, in volts and amps.
pub fn run_example() -> edge_nilm::Result<(f64, f64)> {
    let cfg = Config::default();
    let acq = &cfg.acquisition;
    let fs = sampling_rate(acq)?;
    println!(
        "fs = {} / ({} x {}) = {fs} Hz",
        acq.f_adc_clock, acq.adc_prescaler, acq.sampling_cycles
    );
    println!("LSB: {:.3} mV, {:.3} mA", acq.lsb_v() * 1e3, acq.lsb_i() * 1e3);

    let hairdryer = cfg.appliance("hairdryer").expect("preset").clone().noiseless();
    let wave = synth_appliance(&hairdryer, 0.1, fs, 0)?;
    for mode in [Mode::Power, Mode::Current] {
        let q = quantize(&wave, acq, mode)?;
        println!("{mode:?}: voltage channel sampled: {}", q.raw.counts_v.is_some());
    }
    let q = quantize(&wave, acq, Mode::Power)?;
    let frame = raw_conv(&q.raw, acq);
    let err_v = frame
        .v
        .as_ref()
        .unwrap()
        .iter()
        .zip(&wave.v)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let err_i = frame
        .i
        .iter()
        .zip(&wave.i)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    println!(
        "round-trip error: {:.3} mV, {:.3} mA (clipped: {})",
        err_v * 1e3,
        err_i * 1e3,
        q.clipped_i
    );
    Ok((err_v, err_i))
}

fn main() -> edge_nilm::Result<()> {
    run_example().map(drop)
}
