//! Detect the switching events of the default schedule in both modes and
//! print their composite feature vectors.

use edge_nilm::acquisition::sampling_rate;
use edge_nilm::classify::{detect_recording, event_record};
use edge_nilm::config::{Config, Mode};
use edge_nilm::events::FeatureVector;
use edge_nilm::features::HarmonicAnalyzer;
use edge_nilm::signalgen::synth_scenario;

/// Number of events found in power and in current mode.
pub fn run_example() -> edge_nilm::Result<(usize, usize)> {
    let cfg = Config::default();
    let fs = sampling_rate(&cfg.acquisition)?;
    let wave = synth_scenario(&cfg.appliances, &cfg.schedule, fs, 1)?;
    let analyzer = HarmonicAnalyzer::new(true);
    let mut counts = [0; 2];
    for (slot, mode) in [Mode::Power, Mode::Current].into_iter().enumerate() {
        let rec = detect_recording(&wave, &cfg, mode)?;
        println!(
            "{mode:?} mode: {} cycles, {} events",
            rec.view.cycles(),
            rec.marks.len()
        );
        let names = FeatureVector::names(mode);
        for mark in &rec.marks {
            let r = event_record(&rec.view, mark, mode, &analyzer, &cfg.dtw)?;
            let head: Vec<String> = names
                .iter()
                .zip(&r.feature.values)
                .take(4)
                .map(|(n, v)| format!("{n}={v:.3}"))
                .collect();
            println!(
                "  cycle {:>3} {:?}: {} features, {} ...",
                mark.switch_cycle(),
                mark.direction,
                r.feature.values.len(),
                head.join(" ")
            );
        }
        counts[slot] = rec.marks.len();
    }
    Ok((counts[0], counts[1]))
}

fn main() -> edge_nilm::Result<()> {
    run_example().map(drop)
}
