//! End-to-end classification: synthetic event datasets, stratified splits,
//! the MobileMini classifier with its input standardizer, a k-NN-over-DTW
//! baseline, metrics, and the recording-to-predictions pipeline.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acquisition::{quantize, raw_conv};
use crate::config::{Config, Mode};
use crate::cycles::{CycleGrid, CycleView};
use crate::dtw::{dtw_cost, dtw_signature_with, DtwOptions};
use crate::error::{Error, Result, Stage};
use crate::events::{
    composite_feature, detect_events, extract_cycles, window_features, Direction, EventMark, EventRecord,
    FeatureVector, POST_WINDOW_START,
};
use crate::features::{HarmonicAnalyzer, WINDOW_CYCLES};
use crate::neuralnet::{self, Architecture, MobileMini, ModelFile, Sample, TrainConfig, TrainOutcome};
use crate::signalgen::{synth_scenario, ApplianceModel, Schedule, WaveformPair};
use crate::MAINS_HZ;

/// A recording cut into cycles, with the events found in it.
#[derive(Debug, Clone)]
pub struct Recording {
    pub view: CycleView,
    pub marks: Vec<EventMark>,
}

/// Acquisition, cycle extraction and event detection.
pub fn detect_recording(wave: &WaveformPair, cfg: &Config, mode: Mode) -> Result<Recording> {
    let q = quantize(wave, &cfg.acquisition, mode).map_err(|e| e.at(Stage::Acquisition))?;
    let frame = raw_conv(&q.raw, &cfg.acquisition);
    let view = CycleView::new(&frame, MAINS_HZ).map_err(|e| e.at(Stage::Features))?;
    let series = view.level_series(mode).map_err(|e| e.at(Stage::Features))?;
    let detector = cfg.detector.for_mode(mode);
    detector.validate().map_err(|e| e.at(Stage::Events))?;
    Ok(Recording {
        marks: detect_events(&series, &detector),
        view,
    })
}

/// Cycle snippets, DTW signature and composite feature of one event.
pub fn event_record(
    view: &CycleView,
    mark: &EventMark,
    mode: Mode,
    analyzer: &HarmonicAnalyzer,
    dtw: &DtwOptions,
) -> Result<EventRecord> {
    let cycles = extract_cycles(view, mark).map_err(|e| e.at(Stage::Events))?;
    let signature = dtw_signature_with(&cycles, dtw).map_err(|e| e.at(Stage::Dtw))?;
    let feature = (|| {
        let pre = window_features(view, mark.j + 1 - WINDOW_CYCLES, analyzer)?;
        let post = window_features(view, mark.j + POST_WINDOW_START, analyzer)?;
        composite_feature(&pre, &post, &signature, mode, *mark)
    })()
    .map_err(|e| e.at(Stage::Features))?;
    Ok(EventRecord {
        mark: *mark,
        cycles,
        signature,
        feature,
    })
}

/// One labeled event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub label: usize,
    pub direction: Direction,
    pub features: Vec<f64>,
    /// Current cycle j+20 minus cycle j, the k-NN-DTW query.
    pub delta_cycle: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub mode: Mode,
    pub labels: Vec<String>,
    pub examples: Vec<Example>,
    /// Generated events the detector missed or could not window.
    pub dropped: usize,
}

/// Length of a generated single-event recording.
pub const EVENT_RECORDING_S: f64 = 1.1;

fn steady(mut m: ApplianceModel) -> ApplianceModel {
    m.inrush_ratio = 1.0;
    m
}

/// Index of the cycle starting at time `t` on `grid`.
pub fn cycle_at(grid: &CycleGrid, t: f64, fs: f64) -> Option<usize> {
    grid.nearest_start(t * fs)
}

/// The detected event closest to the true switch cycle, within `tolerance` cycles.
pub fn match_mark(
    marks: &[EventMark],
    switch_cycle: usize,
    direction: Direction,
    tolerance: usize,
) -> Option<EventMark> {
    marks
        .iter()
        .filter(|m| m.direction == direction && m.switch_cycle().abs_diff(switch_cycle) <= tolerance)
        .min_by_key(|m| m.switch_cycle().abs_diff(switch_cycle))
        .copied()
}

/// Synthesizes one switching event of appliance `label` and runs it through the
/// pipeline. Returns `None` when the detector misses it.
///
/// Half the events are turn-ons, half turn-offs. With probability
/// `background_probability` another appliance runs in steady state throughout.
pub fn generate_event(cfg: &Config, mode: Mode, label: usize, rng: &mut ChaCha8Rng) -> Result<Option<Example>> {
    let spread = cfg.dataset.spread;
    let base = cfg
        .appliances
        .get(label)
        .ok_or_else(|| Error::domain(format!("label {label} outside {} appliances", cfg.appliances.len())))?;
    let target = base.perturbed(rng, spread);
    let on = rng.random_bool(0.5);
    let t_switch = rng.random_range(0.45..0.55);
    let mut models = vec![if on { target } else { steady(target) }];
    let mut schedule = Schedule::new(EVENT_RECORDING_S);
    schedule = if on {
        schedule.with(&models[0].id, t_switch, EVENT_RECORDING_S)
    } else {
        schedule.with(&models[0].id, 0.0, t_switch)
    };
    if cfg.appliances.len() > 1 && rng.random_bool(cfg.dataset.background_probability) {
        let mut other = rng.random_range(0..cfg.appliances.len() - 1);
        if other >= label {
            other += 1;
        }
        let bg = steady(cfg.appliances[other].perturbed(rng, spread));
        schedule = schedule.with(&bg.id, 0.0, EVENT_RECORDING_S);
        models.push(bg);
    }
    let fs = crate::acquisition::sampling_rate(&cfg.acquisition)?;
    let wave = synth_scenario(&models, &schedule, fs, rng.random())?;
    let rec = detect_recording(&wave, cfg, mode)?;
    let t = schedule.mains.nearest_rising_crossing(t_switch);
    let Some(k) = cycle_at(&rec.view.grid, t, fs) else {
        return Ok(None);
    };
    let direction = if on { Direction::On } else { Direction::Off };
    let Some(mark) = match_mark(&rec.marks, k, direction, 2) else {
        return Ok(None);
    };
    let analyzer = HarmonicAnalyzer::new(cfg.skip_reorder);
    match event_record(&rec.view, &mark, mode, &analyzer, &cfg.dtw) {
        Ok(r) => Ok(Some(Example {
            label,
            direction,
            delta_cycle: r.cycles.delta_cycle(),
            features: r.feature.values,
        })),
        Err(e) if matches!(e.root(), Error::Window(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// `events_per_class` events per appliance. Item `n` draws from its own
/// ChaCha stream, so the result does not depend on thread scheduling.
pub fn generate_dataset(cfg: &Config, mode: Mode, seed: u64) -> Result<Dataset> {
    cfg.validate()?;
    let per_class = cfg.dataset.events_per_class;
    let jobs: Vec<(usize, usize)> = (0..cfg.appliances.len())
        .flat_map(|c| (0..per_class).map(move |n| (c, n)))
        .collect();
    let results: Vec<Option<Example>> = jobs
        .par_iter()
        .enumerate()
        .map(|(item, &(label, _))| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(item as u64);
            generate_event(cfg, mode, label, &mut rng)
        })
        .collect::<Result<_>>()?;
    let dropped = results.iter().filter(|r| r.is_none()).count();
    Ok(Dataset {
        mode,
        labels: cfg.labels(),
        examples: results.into_iter().flatten().collect(),
        dropped,
    })
}

/// Smallest class size `split_dataset` accepts.
pub const MIN_CLASS_EXAMPLES: usize = 10;

/// Stratified split into (train, validation, test). Each class is shuffled
/// on its own and cut at `round(n·r₀)` and `round(n·(r₀+r₁))`.
pub fn split_dataset<T: Clone>(
    items: &[T],
    label_of: impl Fn(&T) -> usize,
    classes: usize,
    ratios: [f64; 3],
    seed: u64,
) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
    if items.is_empty() {
        return Err(Error::domain("cannot split an empty dataset"));
    }
    if ratios.iter().any(|r| !(*r >= 0.0)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::config(format!(
            "split ratios {ratios:?} must be non-negative and sum to 1"
        )));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (k, it) in items.iter().enumerate() {
        let c = label_of(it);
        by_class
            .get_mut(c)
            .ok_or_else(|| Error::domain(format!("label {c} outside {classes} classes")))?
            .push(k);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for (c, idx) in by_class.iter_mut().enumerate() {
        if idx.len() < MIN_CLASS_EXAMPLES {
            return Err(Error::Stratification(format!(
                "class {c} has {} examples, at least {MIN_CLASS_EXAMPLES} are needed",
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        let n = idx.len() as f64;
        let a = (n * ratios[0]).round() as usize;
        let b = ((n * (ratios[0] + ratios[1])).round() as usize).max(a);
        train.extend(idx[..a].iter().map(|&k| items[k].clone()));
        val.extend(idx[a..b].iter().map(|&k| items[k].clone()));
        test.extend(idx[b..].iter().map(|&k| items[k].clone()));
    }
    Ok((train, val, test))
}

/// `sign(x)·ln(1 + |x|)` followed by a per-feature z-score fitted on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

fn signed_log(x: f64) -> f64 {
    x.signum() * x.abs().ln_1p()
}

impl Standardizer {
    pub fn fit(rows: &[&[f64]]) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| Error::domain("cannot fit a standardizer on no rows"))?;
        let d = first.len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::shape("rows of unequal length"));
        }
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, x) in mean.iter_mut().zip(r.iter()) {
                *m += signed_log(*x) / n;
            }
        }
        let mut var = vec![0.0; d];
        for r in rows {
            for ((v, m), x) in var.iter_mut().zip(&mean).zip(r.iter()) {
                *v += (signed_log(*x) - m).powi(2) / n;
            }
        }
        let std = var
            .into_iter()
            .map(|v| if v.sqrt() > 1e-12 { v.sqrt() } else { 1.0 })
            .collect();
        Ok(Standardizer { mean, std })
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.mean.len() {
            return Err(Error::shape(format!(
                "standardizer fitted on {} features, got {}",
                self.mean.len(),
                x.len()
            )));
        }
        Ok(x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (signed_log(*v) - m) / s)
            .collect())
    }
}

/// A trained MobileMini with everything needed to run it on raw features.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub mode: Mode,
    pub labels: Vec<String>,
    pub standardizer: Standardizer,
    pub model: MobileMini,
}

/// On-disk form: model file fields plus mode, labels and standardizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierFile {
    pub mode: Mode,
    pub labels: Vec<String>,
    pub standardizer: Standardizer,
    #[serde(flatten)]
    pub model: ModelFile,
}

impl Classifier {
    /// Predicted label index and class probabilities for a raw feature vector.
    pub fn predict(&self, features: &[f64]) -> Result<(usize, Vec<f64>)> {
        self.model.predict(&self.standardizer.apply(features)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&ClassifierFile {
            mode: self.mode,
            labels: self.labels.clone(),
            standardizer: self.standardizer.clone(),
            model: self.model.to_file(),
        })?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: ClassifierFile = serde_json::from_str(s)?;
        let model = MobileMini::from_file(&f.model)?;
        let dim = FeatureVector::len_for(f.mode);
        if model.arch.input_len != dim || f.standardizer.mean.len() != dim || f.standardizer.std.len() != dim {
            return Err(Error::shape(format!(
                "{:?}-mode classifier must take {dim} features",
                f.mode
            )));
        }
        if model.arch.classes != f.labels.len() {
            return Err(Error::shape(format!(
                "model has {} outputs for {} labels",
                model.arch.classes,
                f.labels.len()
            )));
        }
        Ok(Classifier {
            mode: f.mode,
            labels: f.labels,
            standardizer: f.standardizer,
            model,
        })
    }
}

fn samples(examples: &[Example], st: &Standardizer) -> Result<Vec<Sample>> {
    examples
        .iter()
        .map(|e| {
            Ok(Sample {
                x: st.apply(&e.features)?,
                label: e.label,
            })
        })
        .collect()
}

/// Fits the standardizer on `train` and trains a fresh MobileMini.
pub fn train_classifier(
    train: &[Example],
    val: &[Example],
    labels: &[String],
    mode: Mode,
    cfg: &TrainConfig,
) -> Result<(Classifier, TrainOutcome)> {
    let rows: Vec<&[f64]> = train.iter().map(|e| e.features.as_slice()).collect();
    let standardizer = Standardizer::fit(&rows)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init = MobileMini::new(
        Architecture::mobile_mini(FeatureVector::len_for(mode), labels.len()),
        cfg.weight_init,
        &mut rng,
    )?;
    let outcome = neuralnet::train(
        &init,
        &samples(train, &standardizer)?,
        &samples(val, &standardizer)?,
        cfg,
    )?;
    Ok((
        Classifier {
            mode,
            labels: labels.to_vec(),
            standardizer,
            model: outcome.model.clone(),
        },
        outcome,
    ))
}

/// Labeled delta cycles for the k-NN-DTW baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateLibrary {
    pub labels: Vec<String>,
    pub templates: Vec<(usize, Vec<f64>)>,
}

impl TemplateLibrary {
    /// The first `per_class` examples of each class, in input order.
    pub fn from_examples(examples: &[Example], labels: &[String], per_class: usize) -> Self {
        let mut count = vec![0; labels.len()];
        let mut templates = Vec::new();
        for e in examples {
            if e.label < labels.len() && count[e.label] < per_class {
                count[e.label] += 1;
                templates.push((e.label, e.delta_cycle.clone()));
            }
        }
        TemplateLibrary {
            labels: labels.to_vec(),
            templates,
        }
    }

    pub fn min_class_count(&self) -> usize {
        (0..self.labels.len())
            .map(|c| self.templates.iter().filter(|t| t.0 == c).count())
            .min()
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnnResult {
    pub label: usize,
    /// `(label, distance)` of the k nearest templates, nearest first.
    pub neighbors: Vec<(usize, f64)>,
}

/// Majority vote over the `k` nearest templates by DTW distance. Ties go to
/// the label whose tied neighbors have the smallest mean distance.
pub fn knn_dtw_classify(query: &[f64], lib: &TemplateLibrary, k: usize, opts: &DtwOptions) -> Result<KnnResult> {
    if lib.templates.is_empty() {
        return Err(Error::domain("empty template library"));
    }
    if k == 0 || k > lib.min_class_count() {
        return Err(Error::domain(format!(
            "k = {k} must lie in 1..={} (smallest class template count)",
            lib.min_class_count()
        )));
    }
    let mut dist: Vec<(usize, f64)> = lib
        .templates
        .iter()
        .map(|(label, t)| Ok((*label, dtw_cost(query, t, opts)?)))
        .collect::<Result<_>>()?;
    dist.sort_by(|a, b| a.1.total_cmp(&b.1));
    dist.truncate(k);
    let mut votes = vec![(0usize, 0.0f64); lib.labels.len()];
    for &(label, d) in &dist {
        votes[label].0 += 1;
        votes[label].1 += d;
    }
    let label = (0..votes.len())
        .filter(|&c| votes[c].0 > 0)
        .min_by(|&a, &b| {
            votes[b].0.cmp(&votes[a].0).then_with(|| {
                let ma = votes[a].1 / votes[a].0 as f64;
                let mb = votes[b].1 / votes[b].0 as f64;
                ma.total_cmp(&mb)
            })
        })
        .expect("k ≥ 1 neighbors vote");
    Ok(KnnResult { label, neighbors: dist })
}

/// Classification metrics with macro averaging over all classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision_macro: f64,
    pub recall_macro: f64,
    pub f1_macro: f64,
    /// Rows are true classes, columns predictions.
    pub confusion: Vec<Vec<u64>>,
}

impl Metrics {
    pub fn from_confusion(confusion: Vec<Vec<u64>>) -> Result<Self> {
        let c = confusion.len();
        if c == 0 || confusion.iter().any(|r| r.len() != c) {
            return Err(Error::shape("confusion matrix must be square and non-empty"));
        }
        let total: u64 = confusion.iter().flatten().sum();
        if total == 0 {
            return Err(Error::domain("no predictions to evaluate"));
        }
        let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let (mut p, mut r, mut f) = (0.0, 0.0, 0.0);
        for k in 0..c {
            let tp = confusion[k][k];
            let pk = ratio(tp, (0..c).map(|t| confusion[t][k]).sum());
            let rk = ratio(tp, confusion[k].iter().sum());
            p += pk;
            r += rk;
            f += if pk + rk > 0.0 { 2.0 * pk * rk / (pk + rk) } else { 0.0 };
        }
        let trace: u64 = (0..c).map(|k| confusion[k][k]).sum();
        Ok(Metrics {
            accuracy: trace as f64 / total as f64,
            precision_macro: p / c as f64,
            recall_macro: r / c as f64,
            f1_macro: f / c as f64,
            confusion,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub fn evaluate(predictions: &[usize], truth: &[usize], classes: usize) -> Result<Metrics> {
    if predictions.len() != truth.len() {
        return Err(Error::domain(format!(
            "{} predictions for {} labels",
            predictions.len(),
            truth.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::domain("no predictions to evaluate"));
    }
    let mut confusion = vec![vec![0u64; classes]; classes];
    for (&p, &t) in predictions.iter().zip(truth) {
        if p >= classes || t >= classes {
            return Err(Error::domain(format!("label outside {classes} classes")));
        }
        confusion[t][p] += 1;
    }
    Metrics::from_confusion(confusion)
}

/// What turns event features into labels.
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum Predictor {
    Model(Classifier),
    Knn { library: TemplateLibrary, k: usize },
}

impl Predictor {
    pub fn labels(&self) -> &[String] {
        match self {
            Predictor::Model(c) => &c.labels,
            Predictor::Knn { library, .. } => &library.labels,
        }
    }

    /// Label index and per-class scores (softmax output, or vote shares for k-NN).
    pub fn predict(&self, record: &EventRecord, dtw: &DtwOptions) -> Result<(usize, Vec<f64>)> {
        match self {
            Predictor::Model(c) => c.predict(&record.feature.values),
            Predictor::Knn { library, k } => {
                let r = knn_dtw_classify(&record.cycles.delta_cycle(), library, *k, dtw)?;
                let mut share = vec![0.0; library.labels.len()];
                for (label, _) in &r.neighbors {
                    share[*label] += 1.0 / r.neighbors.len() as f64;
                }
                Ok((r.label, share))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub event: EventMark,
    pub label: String,
    pub label_index: usize,
    pub probabilities: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub grid: CycleGrid,
    pub predictions: Vec<Prediction>,
    /// Events too close to the recording edges for the ±20-cycle window.
    pub skipped: Vec<EventMark>,
}

/// Acquisition → features → events → DTW → classifier over a whole recording.
/// Errors carry the stage they came from.
pub fn run_pipeline(wave: &WaveformPair, cfg: &Config, mode: Mode, predictor: &Predictor) -> Result<PipelineOutput> {
    if let Predictor::Model(c) = predictor {
        if c.mode != mode {
            return Err(Error::config(format!(
                "classifier was trained for {:?} mode, pipeline runs in {mode:?} mode",
                c.mode
            ))
            .at(Stage::Classifier));
        }
    }
    let rec = detect_recording(wave, cfg, mode)?;
    let analyzer = HarmonicAnalyzer::new(cfg.skip_reorder);
    let mut predictions = Vec::new();
    let mut skipped = Vec::new();
    for mark in &rec.marks {
        let record = match event_record(&rec.view, mark, mode, &analyzer, &cfg.dtw) {
            Ok(r) => r,
            Err(e) if matches!(e.root(), Error::Window(_)) => {
                skipped.push(*mark);
                continue;
            }
            Err(e) => return Err(e),
        };
        let (label_index, probabilities) = predictor
            .predict(&record, &cfg.dtw)
            .map_err(|e| e.at(Stage::Classifier))?;
        predictions.push(Prediction {
            event: *mark,
            label: predictor.labels()[label_index].clone(),
            label_index,
            probabilities,
        });
    }
    Ok(PipelineOutput {
        grid: rec.view.grid,
        predictions,
        skipped,
    })
}

/// Two appliances with overlapping on-periods: four switches spaced `spacing`
/// seconds apart, starting at `spacing`. `a` always switches on first; the
/// order of the two turn-offs is random.
pub fn overlap_schedule<R: Rng>(a: &str, b: &str, spacing: f64, rng: &mut R) -> Schedule {
    let t = |k: f64| k * spacing;
    let duration = t(5.0);
    if rng.random_bool(0.5) {
        Schedule::new(duration).with(a, t(1.0), t(3.0)).with(b, t(2.0), t(4.0))
    } else {
        Schedule::new(duration).with(a, t(1.0), t(4.0)).with(b, t(2.0), t(3.0))
    }
}

/// Outcome of one scenario scored against its schedule.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ScenarioScore {
    pub scheduled: usize,
    /// Scheduled switches with a same-direction detection within ±`tolerance` cycles.
    pub detected: usize,
    /// Detections not matched to any scheduled switch.
    pub spurious: usize,
    /// Matched detections labeled with the switched appliance.
    pub correct_labels: usize,
}

impl std::ops::AddAssign for ScenarioScore {
    fn add_assign(&mut self, o: Self) {
        self.scheduled += o.scheduled;
        self.detected += o.detected;
        self.spurious += o.spurious;
        self.correct_labels += o.correct_labels;
    }
}

/// Runs the pipeline on `wave` and scores it against `schedule`.
pub fn score_scenario(
    wave: &WaveformPair,
    schedule: &Schedule,
    cfg: &Config,
    mode: Mode,
    predictor: &Predictor,
    tolerance: usize,
) -> Result<ScenarioScore> {
    let out = run_pipeline(wave, cfg, mode, predictor)?;
    let mut used = vec![false; out.predictions.len() + out.skipped.len()];
    let marks: Vec<&EventMark> = out.predictions.iter().map(|p| &p.event).chain(&out.skipped).collect();
    let mut score = ScenarioScore::default();
    for (t, id, on) in schedule.switch_times() {
        score.scheduled += 1;
        let Some(k) = cycle_at(&out.grid, t, wave.fs) else {
            continue;
        };
        let dir = if on { Direction::On } else { Direction::Off };
        let hit = (0..marks.len())
            .filter(|&m| !used[m] && marks[m].direction == dir && marks[m].switch_cycle().abs_diff(k) <= tolerance)
            .min_by_key(|&m| marks[m].switch_cycle().abs_diff(k));
        if let Some(m) = hit {
            used[m] = true;
            score.detected += 1;
            if out.predictions.get(m).is_some_and(|p| p.label == id) {
                score.correct_labels += 1;
            }
        }
    }
    score.spurious = used.iter().filter(|u| !**u).count();
    Ok(score)
}

/// A dataset cut into train / validation / test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<Example>,
    pub val: Vec<Example>,
    pub test: Vec<Example>,
}

impl Dataset {
    /// Stratified split by label.
    pub fn split(&self, ratios: [f64; 3], seed: u64) -> Result<Splits> {
        let (train, val, test) = split_dataset(&self.examples, |e| e.label, self.labels.len(), ratios, seed)?;
        Ok(Splits { train, val, test })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let ds: Dataset = serde_json::from_str(s)?;
        let dim = FeatureVector::len_for(ds.mode);
        if let Some(e) = ds
            .examples
            .iter()
            .find(|e| e.label >= ds.labels.len() || e.features.len() != dim)
        {
            return Err(Error::shape(format!(
                "example with label {} and {} features does not fit a {:?}-mode dataset of {} labels",
                e.label,
                e.features.len(),
                ds.mode,
                ds.labels.len()
            )));
        }
        Ok(ds)
    }
}

/// Test-set metrics of a trained classifier.
pub fn evaluate_classifier(c: &Classifier, test: &[Example]) -> Result<Metrics> {
    let pred: Vec<usize> = test
        .par_iter()
        .map(|e| Ok(c.predict(&e.features)?.0))
        .collect::<Result<_>>()?;
    let truth: Vec<usize> = test.iter().map(|e| e.label).collect();
    evaluate(&pred, &truth, c.labels.len())
}

/// Test-set metrics of the k-NN-DTW baseline on delta cycles.
pub fn evaluate_knn(lib: &TemplateLibrary, k: usize, test: &[Example], opts: &DtwOptions) -> Result<Metrics> {
    let pred: Vec<usize> = test
        .par_iter()
        .map(|e| Ok(knn_dtw_classify(&e.delta_cycle, lib, k, opts)?.label))
        .collect::<Result<_>>()?;
    let truth: Vec<usize> = test.iter().map(|e| e.label).collect();
    evaluate(&pred, &truth, lib.labels.len())
}

/// Everything one generate → split → train → evaluate run produces.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub dataset: Dataset,
    pub splits: Splits,
    pub classifier: Classifier,
    pub outcome: TrainOutcome,
    pub metrics: Metrics,
}

/// Seed of the split that follows a dataset generated with `seed`.
pub fn split_seed(seed: u64) -> u64 {
    seed.wrapping_add(1)
}

/// Generates a dataset from `seed`, splits it with [`split_seed`], trains
/// with `cfg.train` and scores the test split.
pub fn run_experiment(cfg: &Config, mode: Mode, seed: u64) -> Result<Experiment> {
    let dataset = generate_dataset(cfg, mode, seed)?;
    let splits = dataset.split(cfg.dataset.ratios, split_seed(seed))?;
    let (classifier, outcome) = train_classifier(&splits.train, &splits.val, &dataset.labels, mode, &cfg.train)?;
    let metrics = evaluate_classifier(&classifier, &splits.test)?;
    Ok(Experiment {
        dataset,
        splits,
        classifier,
        outcome,
        metrics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_confusion_metrics() {
        let m = Metrics::from_confusion(vec![vec![8, 2], vec![3, 7]]).unwrap();
        assert!((m.accuracy - 0.75).abs() < 1e-12);
        let p = (8.0 / 11.0 + 7.0 / 9.0) / 2.0;
        assert!((m.precision_macro - p).abs() < 1e-12);
        assert!((m.precision_macro - 0.753).abs() < 5e-4);
        let f0 = 2.0 * (8.0 / 11.0) * 0.8 / (8.0 / 11.0 + 0.8);
        let f1 = 2.0 * (7.0 / 9.0) * 0.7 / (7.0 / 9.0 + 0.7);
        assert!((m.f1_macro - (f0 + f1) / 2.0).abs() < 1e-12);
        assert!((m.f1_macro - 0.749).abs() < 5e-4);
    }

    #[test]
    fn perfect_and_constant_predictions() {
        let truth: Vec<usize> = (0..50).map(|k| k % 5).collect();
        let m = evaluate(&truth, &truth, 5).unwrap();
        assert_eq!((m.accuracy, m.precision_macro, m.f1_macro), (1.0, 1.0, 1.0));
        let m = evaluate(&[0; 50], &truth, 5).unwrap();
        assert!((m.accuracy - 0.2).abs() < 1e-12);
        assert!(evaluate(&[], &[], 5).is_err());
    }

    #[test]
    fn split_sizes_and_partition() {
        let items: Vec<(usize, usize)> = (0..5).flat_map(|c| (0..10_000).map(move |n| (c, n))).collect();
        let (a, b, c) = split_dataset(&items, |x| x.0, 5, [0.7, 0.1, 0.2], 3).unwrap();
        for cls in 0..5 {
            assert_eq!(a.iter().filter(|x| x.0 == cls).count(), 7000);
            assert_eq!(b.iter().filter(|x| x.0 == cls).count(), 1000);
            assert_eq!(c.iter().filter(|x| x.0 == cls).count(), 2000);
        }
        let mut all: Vec<_> = a.iter().chain(&b).chain(&c).copied().collect();
        all.sort();
        assert_eq!(all, items);
        assert_eq!(split_dataset(&items, |x| x.0, 5, [0.7, 0.1, 0.2], 3).unwrap().0, a);
    }

    #[test]
    fn small_class_is_rejected() {
        let items: Vec<usize> = (0..30).map(|k| if k < 9 { 0 } else { 1 }).collect();
        assert!(matches!(
            split_dataset(&items, |x| *x, 2, [0.7, 0.1, 0.2], 0),
            Err(Error::Stratification(_))
        ));
    }

    fn lib() -> TemplateLibrary {
        TemplateLibrary {
            labels: vec!["a".into(), "b".into()],
            templates: vec![
                (0, vec![0.0, 1.0, 0.0]),
                (1, vec![5.0, 5.0, 5.0]),
                (0, vec![0.0, 2.0, 0.0]),
                (1, vec![4.0, 6.0, 4.0]),
            ],
        }
    }

    #[test]
    fn knn_exact_match_and_order_invariance() {
        let l = lib();
        let r = knn_dtw_classify(&[5.0, 5.0, 5.0], &l, 1, &DtwOptions::default()).unwrap();
        assert_eq!(r.label, 1);
        assert_eq!(r.neighbors[0].1, 0.0);
        let mut rev = l.clone();
        rev.templates.reverse();
        for q in [[0.5, 1.2, 0.1], [4.4, 5.0, 6.1]] {
            let a = knn_dtw_classify(&q, &l, 1, &DtwOptions::default()).unwrap();
            let b = knn_dtw_classify(&q, &rev, 1, &DtwOptions::default()).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn knn_ties_go_to_nearer_mean() {
        let l = lib();
        // one neighbor from each class; class 0 is nearer on average
        let r = knn_dtw_classify(&[1.0, 2.0, 1.0], &l, 2, &DtwOptions::default()).unwrap();
        assert_eq!(r.neighbors.len(), 2);
        assert_eq!(r.label, 0);
        assert!(knn_dtw_classify(&[0.0], &l, 3, &DtwOptions::default()).is_err());
        let empty = TemplateLibrary {
            labels: vec!["a".into()],
            templates: vec![],
        };
        assert!(matches!(
            knn_dtw_classify(&[0.0], &empty, 1, &DtwOptions::default()),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn standardizer_is_signed_log_zscore() {
        let rows: Vec<Vec<f64>> = vec![vec![1.0, -3.0, 7.0], vec![3.0, 3.0, 7.0]];
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let s = Standardizer::fit(&refs).unwrap();
        let z = s.apply(&rows[0]).unwrap();
        assert!((z[0] + 1.0).abs() < 1e-12 && (z[1] + 1.0).abs() < 1e-12);
        assert_eq!(z[2], 0.0);
        assert!(s.apply(&[1.0]).is_err());
    }
}
