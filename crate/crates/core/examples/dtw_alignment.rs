//! DTW on a toy pair, then the 3x3 pre/post signature of a real turn-on.

use edge_nilm::acquisition::sampling_rate;
use edge_nilm::classify::detect_recording;
use edge_nilm::config::{Config, Mode};
use edge_nilm::dtw::{dtw_distance, dtw_signature, DtwSignature};
use edge_nilm::events::extract_cycles;
use edge_nilm::signalgen::{synth_scenario, Schedule};

pub fn run_example() -> edge_nilm::Result<(f64, DtwSignature)> {
    let toy = dtw_distance(&[0.0, 1.0, 2.0, 1.0, 0.0], &[0.0, 0.0, 1.0, 2.0, 1.0, 0.0])?;
    println!("toy distance {} along {:?}", toy.distance, toy.path);

    let cfg = Config::default();
    let fs = sampling_rate(&cfg.acquisition)?;
    let fridge = cfg.appliance("refrigerator").expect("preset").clone();
    let schedule = Schedule::new(1.2).with(&fridge.id, 0.6, 1.2);
    let wave = synth_scenario(&[fridge], &schedule, fs, 3)?;
    let rec = detect_recording(&wave, &cfg, Mode::Power)?;
    let mark = rec.marks.first().expect("turn-on is detected");
    let sig = dtw_signature(&extract_cycles(&rec.view, mark)?)?;
    println!("signature rows: post j+1, j+10, j+20; columns: pre j, j-10, j-20");
    for row in sig.values().chunks(3) {
        println!("  {:>9.2} {:>9.2} {:>9.2}", row[0], row[1], row[2]);
    }
    Ok((toy.distance, sig))
}

fn main() -> edge_nilm::Result<()> {
    run_example().map(drop)
}
