//! Command-line front end: `train`, `eval`, `predict`, `data-stats`, `compare`.
//!
//! Configuration precedence is flag, then `--config` file, then defaults.
//! Reports print metrics at 5 significant digits; CSV output uses 12.

pub mod config_file;
pub mod format;
pub mod model_file;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::data::{self, Dataset, COLUMN_NAMES, N_FEATURES};
use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::trainer::{self, Metrics, TrainConfig, TrainHistory, Variant};
use config_file::{load_config, parse_layers, RawConfig};
use format::{fmt_sig, table};
use model_file::ModelFile;

const REPORT_DIGITS: usize = 5;
const CSV_DIGITS: usize = 12;

#[derive(Debug, Parser)]
#[command(
    name = "dropout-mlp",
    version,
    about = "Dropout MLP for the Pima Indians Diabetes data"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write it to a file.
    Train(TrainArgs),
    /// Report metrics of a saved model on a data file.
    Eval(EvalArgs),
    /// Score feature vectors with a saved model.
    Predict(PredictArgs),
    /// Per-attribute statistics and class counts of a data file.
    DataStats(DataStatsArgs),
    /// Train with and without dropout over several seeds and compare overfitting.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// PID CSV file.
    #[arg(long)]
    pub data: PathBuf,
    /// key = value run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Where to write the model.
    #[arg(long)]
    pub out: PathBuf,
    /// Write per-epoch history as CSV.
    #[arg(long)]
    pub history_csv: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: ConfigOverrides,
}

/// One flag per run configuration key.
#[derive(Debug, Args, Default, Clone)]
pub struct ConfigOverrides {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// adadelta or sgd.
    #[arg(long)]
    pub optimizer: Option<String>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// glorot or fixed.
    #[arg(long)]
    pub init: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub init_lo: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub init_hi: Option<f64>,
    #[arg(long)]
    pub validation_fraction: Option<f64>,
    #[arg(long)]
    pub stratified: Option<bool>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub input_width: Option<usize>,
    /// e.g. "dense:64:elu,dropout:0.25,dense:1:softplus".
    #[arg(long)]
    pub layers: Option<String>,
}

impl ConfigOverrides {
    fn to_raw(&self) -> Result<RawConfig> {
        Ok(RawConfig {
            seed: self.seed,
            epochs: self.epochs,
            batch_size: self.batch_size,
            optimizer: self.optimizer.clone(),
            rho: self.rho,
            epsilon: self.epsilon,
            learning_rate: self.learning_rate,
            init: self.init.clone(),
            init_lo: self.init_lo,
            init_hi: self.init_hi,
            validation_fraction: self.validation_fraction,
            stratified: self.stratified,
            threshold: self.threshold,
            input_width: self.input_width,
            layers: self.layers.as_deref().map(parse_layers).transpose()?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Subset {
    All,
    Train,
    Validation,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Defaults to the threshold stored in the model.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Rows to evaluate; train/validation recreate the model's own split.
    #[arg(long, value_enum, default_value_t = Subset::All)]
    pub subset: Subset,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Eight comma-separated feature values.
    #[arg(
        long,
        conflicts_with = "batch",
        required_unless_present = "batch",
        allow_hyphen_values = true
    )]
    pub input: Option<String>,
    /// CSV of feature rows, eight values per line.
    #[arg(long)]
    pub batch: Option<PathBuf>,
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct DataStatsArgs {
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Comma-separated seeds, at least two.
    #[arg(long, default_value = "1,2,3,4,5")]
    pub seeds: String,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: ConfigOverrides,
}

/// Runs a parsed command and returns the process exit status.
pub fn run(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let result = match &cli.command {
        Command::Train(a) => cmd_train(a, out),
        Command::Eval(a) => cmd_eval(a, out),
        Command::Predict(a) => cmd_predict(a, out),
        Command::DataStats(a) => cmd_data_stats(a, out),
        Command::Compare(a) => cmd_compare(a, out, err),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}

fn emit(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes())
        .map_err(|e| Error::io(Path::new("<stdout>"), e))
}

fn merged_config(file: Option<&Path>, overrides: &ConfigOverrides) -> Result<TrainConfig> {
    let mut raw = match file {
        Some(path) => load_config(path)?,
        None => RawConfig::default(),
    };
    raw.merge(&overrides.to_raw()?);
    raw.resolve()
}

fn opt_cell(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| fmt_sig(v, REPORT_DIGITS))
}

type Cell = fn(&Metrics) -> String;

/// Metrics side by side, one column per `(label, metrics)`.
pub fn metrics_table(columns: &[(&str, &Metrics)]) -> String {
    let mut header = vec!["metric"];
    header.extend(columns.iter().map(|(label, _)| *label));
    let rows: [(&str, Cell); 8] = [
        ("accuracy", |m| fmt_sig(m.accuracy, REPORT_DIGITS)),
        ("sensitivity", |m| opt_cell(m.sensitivity)),
        ("specificity", |m| opt_cell(m.specificity)),
        ("mse", |m| fmt_sig(m.mse, REPORT_DIGITS)),
        ("true_pos", |m| m.true_pos.to_string()),
        ("false_pos", |m| m.false_pos.to_string()),
        ("true_neg", |m| m.true_neg.to_string()),
        ("false_neg", |m| m.false_neg.to_string()),
    ];
    let rows: Vec<Vec<String>> = rows
        .iter()
        .map(|(name, cell)| {
            let mut row = vec![name.to_string()];
            row.extend(columns.iter().map(|(_, m)| cell(m)));
            row
        })
        .collect();
    table(&header, &rows)
}

pub fn history_table(history: &TrainHistory) -> String {
    let rows: Vec<Vec<String>> = history
        .epochs
        .iter()
        .map(|r| {
            vec![
                r.epoch.to_string(),
                fmt_sig(r.train_loss, REPORT_DIGITS),
                fmt_sig(r.train_accuracy, REPORT_DIGITS),
                fmt_sig(r.val_loss, REPORT_DIGITS),
                fmt_sig(r.val_accuracy, REPORT_DIGITS),
            ]
        })
        .collect();
    table(
        &["epoch", "train_loss", "train_acc", "val_loss", "val_acc"],
        &rows,
    )
}

pub fn history_csv(history: &TrainHistory) -> String {
    let mut s = String::from("epoch,train_loss,train_acc,val_loss,val_acc\n");
    for r in &history.epochs {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            r.epoch,
            fmt_sig(r.train_loss, CSV_DIGITS),
            fmt_sig(r.train_accuracy, CSV_DIGITS),
            fmt_sig(r.val_loss, CSV_DIGITS),
            fmt_sig(r.val_accuracy, CSV_DIGITS),
        ));
    }
    s
}

fn cmd_train(args: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    let config = merged_config(args.config.as_deref(), &args.overrides)?;
    let dataset = data::load_pid(&args.data)?;
    let model = trainer::train(&config, &dataset)?;

    ModelFile::new(&config, model.params.clone())?.save(&args.out)?;
    if let Some(path) = &args.history_csv {
        std::fs::write(path, history_csv(&model.history)).map_err(|e| Error::io(path, e))?;
    }

    let mut report = history_table(&model.history);
    report.push('\n');
    report.push_str(&metrics_table(&[
        ("train", &model.train_metrics),
        ("validation", &model.validation_metrics),
    ]));
    report.push_str(&format!("model written to {}\n", args.out.display()));
    emit(out, &report)
}

fn cmd_eval(args: &EvalArgs, out: &mut dyn Write) -> Result<()> {
    let model = ModelFile::load(&args.model)?;
    let dataset = data::load_pid(&args.data)?;
    let threshold = args.threshold.unwrap_or(model.fingerprint.threshold);
    let rows = match args.subset {
        Subset::All => dataset,
        Subset::Train | Subset::Validation => {
            let (train_set, val_set) = data::split(&dataset, &model.train_config().split_spec())?;
            if args.subset == Subset::Train {
                train_set
            } else {
                val_set
            }
        }
    };
    let metrics = trainer::evaluate(&model.spec, &model.params, &rows, threshold)?;
    let label = match args.subset {
        Subset::All => "all",
        Subset::Train => "train",
        Subset::Validation => "validation",
    };
    emit(out, &metrics_table(&[(label, &metrics)]))
}

fn parse_features(line: usize, text: &str) -> Result<Vector> {
    let fields: Vec<&str> = text.split(',').map(str::trim).collect();
    if fields.len() != N_FEATURES {
        return Err(Error::Schema {
            line,
            message: format!("expected {N_FEATURES} fields, found {}", fields.len()),
        });
    }
    fields
        .iter()
        .enumerate()
        .map(|(i, f)| match f.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(Error::Parse {
                line,
                field: i + 1,
                value: f.to_string(),
            }),
        })
        .collect()
}

fn cmd_predict(args: &PredictArgs, out: &mut dyn Write) -> Result<()> {
    let model = ModelFile::load(&args.model)?;
    let threshold = args.threshold.unwrap_or(model.fingerprint.threshold);
    let inputs = match (&args.input, &args.batch) {
        (Some(text), _) => vec![parse_features(1, text)?],
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let mut rows = Vec::new();
            for (i, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() {
                    continue;
                }
                match parse_features(i + 1, line) {
                    Ok(v) => rows.push(v),
                    // A non-numeric first line is a header.
                    Err(Error::Parse { .. }) if i == 0 => {}
                    Err(e) => return Err(e),
                }
            }
            rows
        }
        (None, None) => return Err(Error::param("one of --input or --batch is required")),
    };
    let mut s = String::new();
    for x in &inputs {
        let (score, class) = trainer::predict(&model.spec, &model.params, x, threshold)?;
        s.push_str(&format!("{},{class}\n", fmt_sig(score, CSV_DIGITS)));
    }
    emit(out, &s)
}

fn cmd_data_stats(args: &DataStatsArgs, out: &mut dyn Write) -> Result<()> {
    let dataset = data::load_pid(&args.data)?;
    emit(out, &data_stats_report(&dataset)?)
}

pub fn data_stats_report(dataset: &Dataset) -> Result<String> {
    let stats = data::column_stats(dataset)?;
    let rows: Vec<Vec<String>> = COLUMN_NAMES
        .iter()
        .zip(&stats)
        .map(|(name, s)| {
            vec![
                name.to_string(),
                fmt_sig(s.mean, REPORT_DIGITS),
                fmt_sig(s.std, REPORT_DIGITS),
                fmt_sig(s.min, REPORT_DIGITS),
                fmt_sig(s.max, REPORT_DIGITS),
            ]
        })
        .collect();
    let mut s = table(&["attribute", "mean", "std", "min", "max"], &rows);
    s.push_str(&format!(
        "classes: {} positive / {} negative\n",
        dataset.positives(),
        dataset.negatives()
    ));
    Ok(s)
}

fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| Error::param(format!("seed {s:?} is not a nonnegative integer")))
        })
        .collect()
}

fn cmd_compare(args: &CompareArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let config = merged_config(args.config.as_deref(), &args.overrides)?;
    let seeds = parse_seeds(&args.seeds)?;
    let dataset = data::load_pid(&args.data)?;
    let report = trainer::run_comparison(&config, &dataset, &seeds)?;
    for failure in &report.failures {
        let _ = writeln!(
            err,
            "error: seed {} failed: {}",
            failure.seed, failure.error
        );
    }
    if report.rows.is_empty() {
        return Err(Error::State(format!("all {} seeds failed", seeds.len())));
    }

    let cells = |t: f64, v: f64, g: f64| [t, v, g].map(|x| fmt_sig(x, REPORT_DIGITS));
    let mut rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            let mut row = vec![r.seed.to_string(), r.variant.label().to_string()];
            row.extend(cells(r.train_accuracy, r.validation_accuracy, r.gap));
            row
        })
        .collect();
    for variant in [Variant::Dropout, Variant::NoDropout] {
        let m = report.mean(variant).expect("at least one successful seed");
        let mut row = vec!["mean".to_string(), variant.label().to_string()];
        row.extend(cells(m.train_accuracy, m.validation_accuracy, m.gap));
        rows.push(row);
    }
    let mut s = table(&["seed", "variant", "train_acc", "val_acc", "gap"], &rows);

    let change = report.gap_change().expect("both variants present");
    let verdict = if change < 0.0 {
        "reduced"
    } else if change > 0.0 {
        "increased"
    } else {
        "unchanged"
    };
    s.push_str(&format!(
        "gap change with dropout: {} ({verdict})\n",
        fmt_sig(change, REPORT_DIGITS)
    ));
    emit(out, &s)
}
