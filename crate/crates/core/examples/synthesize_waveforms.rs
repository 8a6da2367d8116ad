//! Synthesize the default two-appliance schedule and write it as CSV.
//!
//! ```text
//! cargo run --example synthesize_waveforms -- /tmp/wave.csv
//! ```

use edge_nilm::acquisition::sampling_rate;
use edge_nilm::config::Config;
use edge_nilm::signalgen::{synth_scenario, WaveformPair};

pub fn run_example() -> edge_nilm::Result<WaveformPair> {
    let cfg = Config::default();
    let fs = sampling_rate(&cfg.acquisition)?;
    let wave = synth_scenario(&cfg.appliances, &cfg.schedule, fs, 42)?;
    println!("{} samples at {fs} Hz ({:.1} s)", wave.len(), wave.duration());
    for (t, id, on) in cfg.schedule.switch_times() {
        println!("  {t:5.3} s  {id:<10} {}", if on { "on" } else { "off" });
    }
    Ok(wave)
}

fn main() -> edge_nilm::Result<()> {
    let wave = run_example()?;
    if let Some(path) = std::env::args().nth(1) {
        wave.write_csv(std::io::BufWriter::new(std::fs::File::create(&path)?))?;
        println!("wrote {path}");
    }
    Ok(())
}
