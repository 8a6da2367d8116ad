//! The k-NN-over-DTW baseline on current-mode delta cycles.

use edge_nilm::classify::{evaluate_knn, generate_dataset, split_seed, Metrics, TemplateLibrary};
use edge_nilm::config::{Config, Mode};

pub fn run_example(events_per_class: usize) -> edge_nilm::Result<Metrics> {
    let mut cfg = Config::default();
    cfg.dataset.events_per_class = events_per_class;
    let ds = generate_dataset(&cfg, Mode::Current, 11)?;
    let splits = ds.split(cfg.dataset.ratios, split_seed(11))?;
    let per_class = cfg.dataset.templates_per_class.min(events_per_class / 2);
    let lib = TemplateLibrary::from_examples(&splits.train, &ds.labels, per_class);
    let k = cfg.dataset.k.min(lib.min_class_count());
    let m = evaluate_knn(&lib, k, &splits.test, &cfg.dtw)?;
    println!(
        "{} templates, k = {k}, {} test events: accuracy {:.3}, macro F1 {:.3}",
        lib.templates.len(),
        splits.test.len(),
        m.accuracy,
        m.f1_macro
    );
    for (label, row) in ds.labels.iter().zip(&m.confusion) {
        println!("  {label:<16} {row:?}");
    }
    Ok(m)
}

fn main() -> edge_nilm::Result<()> {
    run_example(100).map(drop)
}
