//! Generate a small event dataset, train MobileMini and score the test split.
//!
//! ```text
//! cargo run --release --example train_mobilemini -- 200 300
//! ```
//! Arguments: events per class, epochs.

use edge_nilm::classify::{run_experiment, Metrics};
use edge_nilm::config::{Config, Mode};

pub fn run_example(events_per_class: usize, epochs: usize) -> edge_nilm::Result<Metrics> {
    let mut cfg = Config::default();
    cfg.dataset.events_per_class = events_per_class;
    cfg.train.epochs = epochs;
    let exp = run_experiment(&cfg, Mode::Power, 5)?;
    println!(
        "{} parameters; {} train / {} val / {} test events",
        exp.classifier.model.param_count(),
        exp.splits.train.len(),
        exp.splits.val.len(),
        exp.splits.test.len()
    );
    for h in exp.outcome.history.iter().step_by((epochs / 10).max(1)) {
        println!(
            "  epoch {:>4}: train loss {:.4}, val accuracy {:.3}",
            h.epoch + 1,
            h.train_loss,
            h.val_accuracy.unwrap_or(f64::NAN)
        );
    }
    println!(
        "best epoch {}; test metrics:\n{}",
        exp.outcome.best_epoch + 1,
        exp.metrics.to_json()?
    );
    Ok(exp.metrics)
}

fn main() -> edge_nilm::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>());
    let per_class = args.next().transpose().ok().flatten().unwrap_or(200);
    let epochs = args.next().transpose().ok().flatten().unwrap_or(300);
    run_example(per_class, epochs).map(drop)
}
