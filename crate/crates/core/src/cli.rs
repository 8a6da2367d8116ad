//! The `nilm` command line. [`run`] parses arguments, dispatches and maps
//! outcomes to exit codes: 0 success, 1 usage error, 2 data or configuration
//! error.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::acquisition::{frame_stream, sampling_rate};
use crate::bench::{run_bench, DEFAULT_REPS};
use crate::classify::{
    detect_recording, evaluate_classifier, evaluate_knn, event_record, generate_dataset, run_pipeline, split_seed,
    train_classifier, Classifier, Dataset, Predictor, TemplateLibrary,
};
use crate::config::{Config, Mode};
use crate::dtw::cost_table;
use crate::error::{Error, Result};
use crate::events::write_events_jsonl;
use crate::features::{frame_features, write_feature_csv, HarmonicAnalyzer};
use crate::signalgen::{synth_scenario, WaveformPair};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

const SCHEMAS: &str = "\
File formats:
  waveform CSV   t_s,v_V,i_A,labels  (labels: '|'-separated appliance ids)
  features CSV   frame_idx,P_W,S_VA,Q_var,h1_mag..h15_mag,h1_phase..h15_phase
                 (odd orders only; power columns empty in current mode)
  events JSONL   {\"j\":<last pre-switch cycle>,\"dir\":\"on|off\",\"delta\":<step>,\"feature\":[..]}
  dataset JSON   {\"mode\",\"labels\",\"examples\":[{\"label\",\"direction\",\"features\",\"delta_cycle\"}],\"dropped\"}
  model JSON     {\"mode\",\"labels\",\"standardizer\":{\"mean\",\"std\"},\"format_version\",
                  \"architecture\",\"layers\":[{\"name\",\"shape\",\"data\"}]}
  predictions    {\"predictions\":[{\"event\",\"label\",\"label_index\",\"probabilities\"}],\"skipped\":[..]}
  metrics JSON   {\"accuracy\",\"precision_macro\",\"recall_macro\",\"f1_macro\",\"confusion\"}
  bench JSON     {\"reps\",\"frame_samples\",\"stages\":[{\"stage\",\"median_ns\",\"table_bytes\"}],
                  \"skip_reorder_time_reduction_pct\",\"skip_reorder_memory_reduction_pct\"}
Config JSON: every section optional; see config/default.json for all fields.";

#[derive(Debug, Parser)]
#[command(name = "nilm", version, about = "Event-triggered load monitoring pipeline", after_long_help = SCHEMAS)]
pub struct Cli {
    /// JSON configuration; defaults apply to missing fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for synthesis, dataset generation, splitting and training
    /// [default: the config's `train.seed`].
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Channels to use; `classify` and `eval` default to the model's mode.
    #[arg(long, global = true, value_enum)]
    pub mode: Option<Mode>,
    /// Output file instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize the configured schedule as a waveform CSV, or an event dataset as JSON.
    Gen {
        /// Write a labeled event dataset instead of a waveform.
        #[arg(long)]
        dataset: bool,
    },
    /// Per-100 ms-frame power and harmonic features of a waveform, as CSV.
    Features {
        #[arg(long)]
        input: PathBuf,
    },
    /// Detected events of a waveform, one JSON object per line.
    Events {
        #[arg(long)]
        input: PathBuf,
        /// Dump the DTW cost table of the first event (post j+1 vs pre j) as CSV.
        #[arg(long)]
        dump_dtw: Option<PathBuf>,
    },
    /// Train MobileMini on the training split and write the model JSON.
    Train {
        /// Dataset from `gen --dataset`; generated from config and seed if absent.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Label every event in a waveform; writes predictions JSON.
    Classify {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        predictor: PredictorArgs,
    },
    /// Metrics JSON on the test split.
    Eval {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[command(flatten)]
        predictor: PredictorArgs,
    },
    /// Time each stage on one synthetic frame; JSON to --out or stdout, table to stderr.
    Bench {
        #[arg(long, default_value_t = DEFAULT_REPS)]
        reps: usize,
    },
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct PredictorArgs {
    /// Model JSON written by `train`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Use the k-NN-DTW baseline built from the training split.
    #[arg(long)]
    pub knn: bool,
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().ansi().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = stdout.write_all(text.as_bytes());
                    EXIT_OK
                }
                _ => {
                    let _ = stderr.write_all(e.render().to_string().as_bytes());
                    EXIT_USAGE
                }
            };
        }
    };
    match dispatch(&cli, stdout, stderr) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            EXIT_DATA
        }
    }
}

fn load_config(cli: &Cli) -> Result<Config> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.train.seed = seed;
    }
    Ok(cfg)
}

fn read_wave(path: &Path) -> Result<WaveformPair> {
    WaveformPair::read_csv(BufReader::new(File::open(path)?))
}

fn read_to_string(path: &Path) -> Result<String> {
    Ok(std::fs::read_to_string(path)?)
}

/// `--dataset` file, or a freshly generated dataset.
fn dataset(path: Option<&Path>, cfg: &Config, mode: Mode, seed: u64) -> Result<Dataset> {
    match path {
        Some(p) => {
            let ds = Dataset::from_json(&read_to_string(p)?)?;
            if ds.mode != mode {
                return Err(Error::Config(format!(
                    "dataset is {:?}-mode, run is {mode:?}-mode",
                    ds.mode
                )));
            }
            Ok(ds)
        }
        None => generate_dataset(cfg, mode, seed),
    }
}

fn dispatch(cli: &Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    let cfg = load_config(cli)?;
    let seed = cfg.train.seed;
    let mut sink: Box<dyn Write + '_> = match &cli.out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(&mut *stdout),
    };
    let out = &mut sink;
    let fixed_mode = cli.mode.unwrap_or_default();
    match &cli.command {
        Command::Gen { dataset: false } => {
            let fs = sampling_rate(&cfg.acquisition)?;
            synth_scenario(&cfg.appliances, &cfg.schedule, fs, seed)?.write_csv(&mut *out)?;
        }
        Command::Gen { dataset: true } => {
            let ds = generate_dataset(&cfg, fixed_mode, seed)?;
            writeln!(stderr, "{} events, {} dropped", ds.examples.len(), ds.dropped)?;
            out.write_all(ds.to_json()?.as_bytes())?;
        }
        Command::Features { input } => {
            let analyzer = HarmonicAnalyzer::new(cfg.skip_reorder);
            let rows = frame_stream(&read_wave(input)?, &cfg.acquisition, fixed_mode)?
                .iter()
                .map(|f| frame_features(f, &analyzer))
                .collect::<Result<Vec<_>>>()?;
            write_feature_csv(&rows, &mut *out)?;
        }
        Command::Events { input, dump_dtw } => {
            let rec = detect_recording(&read_wave(input)?, &cfg, fixed_mode)?;
            let analyzer = HarmonicAnalyzer::new(cfg.skip_reorder);
            let mut records = Vec::new();
            for mark in &rec.marks {
                match event_record(&rec.view, mark, fixed_mode, &analyzer, &cfg.dtw) {
                    Ok(r) => records.push(r),
                    Err(e) if matches!(e.root(), Error::Window(_)) => {
                        writeln!(stderr, "skipping event at cycle {}: {e}", mark.j)?;
                    }
                    Err(e) => return Err(e),
                }
            }
            write_events_jsonl(&records, &mut *out)?;
            if let Some(path) = dump_dtw {
                let first = records
                    .first()
                    .ok_or_else(|| Error::Domain("no event to dump a DTW table for".into()))?;
                let table = cost_table(first.cycles.post()[0], first.cycles.pre()[0], &cfg.dtw)?;
                let mut w = BufWriter::new(File::create(path)?);
                table.write_csv(&mut w)?;
                w.flush()?;
            }
        }
        Command::Train { dataset: path } => {
            let ds = dataset(path.as_deref(), &cfg, fixed_mode, seed)?;
            let splits = ds.split(cfg.dataset.ratios, split_seed(seed))?;
            let (clf, outcome) = train_classifier(&splits.train, &splits.val, &ds.labels, fixed_mode, &cfg.train)?;
            let best = outcome.history[outcome.best_epoch];
            writeln!(
                stderr,
                "best epoch {} of {}: validation accuracy {:.4}",
                outcome.best_epoch + 1,
                outcome.history.len(),
                best.val_accuracy.unwrap_or(f64::NAN)
            )?;
            out.write_all(clf.to_json()?.as_bytes())?;
        }
        Command::Classify { input, predictor } => {
            let (predictor, mode) = load_predictor(predictor, cli, &cfg, seed)?;
            let result = run_pipeline(&read_wave(input)?, &cfg, mode, &predictor)?;
            serde_json::to_writer_pretty(
                &mut *out,
                &serde_json::json!({
                    "predictions": result.predictions,
                    "skipped": result.skipped,
                }),
            )?;
        }
        Command::Eval {
            dataset: path,
            predictor,
        } => {
            let metrics = match &predictor.model {
                Some(p) => {
                    let clf = Classifier::from_json(&read_to_string(p)?)?;
                    let mode = cli.mode.unwrap_or(clf.mode);
                    let ds = dataset(path.as_deref(), &cfg, mode, seed)?;
                    if ds.labels != clf.labels || mode != clf.mode {
                        return Err(Error::Config("model labels or mode do not match the dataset".into()));
                    }
                    evaluate_classifier(&clf, &ds.split(cfg.dataset.ratios, split_seed(seed))?.test)?
                }
                None => {
                    let ds = dataset(path.as_deref(), &cfg, fixed_mode, seed)?;
                    let splits = ds.split(cfg.dataset.ratios, split_seed(seed))?;
                    let lib =
                        TemplateLibrary::from_examples(&splits.train, &ds.labels, cfg.dataset.templates_per_class);
                    evaluate_knn(&lib, cfg.dataset.k, &splits.test, &cfg.dtw)?
                }
            };
            out.write_all(metrics.to_json()?.as_bytes())?;
        }
        Command::Bench { reps } => {
            if *reps == 0 {
                return Err(Error::Config("--reps must be positive".into()));
            }
            let report = run_bench(&cfg, *reps)?;
            report.write_table(&mut *stderr)?;
            serde_json::to_writer_pretty(&mut *out, &report)?;
        }
    }
    out.flush()?;
    Ok(())
}

fn load_predictor(args: &PredictorArgs, cli: &Cli, cfg: &Config, seed: u64) -> Result<(Predictor, Mode)> {
    match &args.model {
        Some(p) => {
            let clf = Classifier::from_json(&read_to_string(p)?)?;
            let mode = cli.mode.unwrap_or(clf.mode);
            Ok((Predictor::Model(clf), mode))
        }
        None => {
            let mode = cli.mode.unwrap_or_default();
            let ds = generate_dataset(cfg, mode, seed)?;
            let splits = ds.split(cfg.dataset.ratios, split_seed(seed))?;
            let library = TemplateLibrary::from_examples(&splits.train, &ds.labels, cfg.dataset.templates_per_class);
            Ok((
                Predictor::Knn {
                    library,
                    k: cfg.dataset.k,
                },
                mode,
            ))
        }
    }
}
