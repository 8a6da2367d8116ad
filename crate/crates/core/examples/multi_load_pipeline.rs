//! End to end on overlapping loads: train a classifier, then label every
//! switch in a few two-appliance recordings.

use edge_nilm::acquisition::sampling_rate;
use edge_nilm::classify::{overlap_schedule, run_experiment, run_pipeline, score_scenario, Predictor, ScenarioScore};
use edge_nilm::config::{Config, Mode};
use edge_nilm::signalgen::synth_scenario;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn run_example(events_per_class: usize, epochs: usize) -> edge_nilm::Result<ScenarioScore> {
    let mut cfg = Config::default();
    cfg.dataset.events_per_class = events_per_class;
    cfg.train.epochs = epochs;
    let exp = run_experiment(&cfg, Mode::Power, 3)?;
    println!("classifier test accuracy {:.3}", exp.metrics.accuracy);
    let predictor = Predictor::Model(exp.classifier);

    let fs = sampling_rate(&cfg.acquisition)?;
    let models: Vec<_> = cfg.appliances.iter().map(|m| m.clone().noiseless()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut total = ScenarioScore::default();
    for (a, b) in [
        ("lamp", "hairdryer"),
        ("laptop", "refrigerator"),
        ("washing_machine", "lamp"),
    ] {
        let schedule = overlap_schedule(a, b, 0.8, &mut rng);
        let wave = synth_scenario(&models, &schedule, fs, 9)?;
        let out = run_pipeline(&wave, &cfg, Mode::Power, &predictor)?;
        let labels: Vec<String> = out
            .predictions
            .iter()
            .map(|p| format!("{:?} {} @ {}", p.event.direction, p.label, p.event.switch_cycle()))
            .collect();
        println!("{a} + {b}: {}", labels.join(", "));
        total += score_scenario(&wave, &schedule, &cfg, Mode::Power, &predictor, 1)?;
    }
    println!(
        "{}/{} switches detected, {} spurious, {} labeled correctly",
        total.detected, total.scheduled, total.spurious, total.correct_labels
    );
    Ok(total)
}

fn main() -> edge_nilm::Result<()> {
    run_example(200, 300).map(drop)
}
