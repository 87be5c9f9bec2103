//! Mini-batch training, evaluation metrics and the dropout vs. no-dropout
//! comparison.
//!
//! Every run is a pure function of its [`TrainConfig`] and the data: the
//! holdout split, the weight initialization, the per-epoch shuffles and the
//! dropout masks all come from generators seeded by `config.seed`.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::data::{Dataset, SplitSpec};
use crate::error::{Error, Result};
use crate::linalg::{Rng, Vector};
use crate::network::{self, accumulate_backward, forward, ModelParams, NetworkSpec, Pass};
use crate::optim::{self, mse_grad, AdadeltaState, Optimizer, SgdState};

/// Sub-stream of the run seed used for initialization, shuffling and dropout.
/// The split uses the seed directly.
const TRAIN_STREAM: u64 = 1;

/// Range rule for the uniform weight initialization. Biases always start at zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitRule {
    /// `U(−l, l)` with `l = √(6 / (fan_in + fan_out))`.
    Glorot,
    Fixed {
        lo: f64,
        hi: f64,
    },
}

impl InitRule {
    pub fn limits(self, fan_in: usize, fan_out: usize) -> (f64, f64) {
        match self {
            InitRule::Glorot => {
                let l = (6.0 / (fan_in + fan_out) as f64).sqrt();
                (-l, l)
            }
            InitRule::Fixed { lo, hi } => (lo, hi),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerConfig {
    Adadelta { rho: f64, epsilon: f64 },
    Sgd { learning_rate: f64 },
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig::Adadelta {
            rho: AdadeltaState::DEFAULT_RHO,
            epsilon: AdadeltaState::DEFAULT_EPSILON,
        }
    }
}

impl OptimizerConfig {
    pub fn name(self) -> &'static str {
        match self {
            OptimizerConfig::Adadelta { .. } => "adadelta",
            OptimizerConfig::Sgd { .. } => "sgd",
        }
    }

    fn validate(self) -> Result<()> {
        match self {
            OptimizerConfig::Adadelta { rho, epsilon } => optim::validate_adadelta(rho, epsilon),
            OptimizerConfig::Sgd { learning_rate } => optim::validate_sgd(learning_rate),
        }
    }

    fn build(self, params: &ModelParams) -> Result<Optimizer> {
        Ok(match self {
            OptimizerConfig::Adadelta { rho, epsilon } => {
                Optimizer::Adadelta(AdadeltaState::new(params, rho, epsilon)?)
            }
            OptimizerConfig::Sgd { learning_rate } => Optimizer::Sgd(SgdState::new(learning_rate)?),
        })
    }
}

/// Everything that determines a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub spec: NetworkSpec,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub init: InitRule,
    pub seed: u64,
    pub validation_fraction: f64,
    pub stratified: bool,
    pub classification_threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            spec: NetworkSpec::default(),
            epochs: 500,
            batch_size: 64,
            optimizer: OptimizerConfig::default(),
            init: InitRule::Fixed {
                lo: -0.05,
                hi: 0.05,
            },
            seed: 0,
            validation_fraction: 0.1,
            stratified: false,
            classification_threshold: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if self.epochs < 1 {
            return Err(Error::param("epochs must be at least 1"));
        }
        if self.batch_size < 1 {
            return Err(Error::param("batch_size must be at least 1"));
        }
        self.optimizer.validate()?;
        if let InitRule::Fixed { lo, hi } = self.init {
            if !(lo < hi && lo.is_finite() && hi.is_finite()) {
                return Err(Error::param(format!(
                    "fixed init range needs finite lo < hi, got [{lo}, {hi})"
                )));
            }
        }
        let f = self.validation_fraction;
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::param(format!(
                "validation_fraction must lie in (0, 1), got {f}"
            )));
        }
        if !self.classification_threshold.is_finite() {
            return Err(Error::param("classification threshold must be finite"));
        }
        Ok(())
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            validation_fraction: self.validation_fraction,
            seed: self.seed,
            stratified: self.stratified,
        }
    }
}

/// Draws every weight uniformly under `rule` (row-major, layer by layer); biases are zero.
pub fn init_params(spec: &NetworkSpec, rule: InitRule, rng: &mut Rng) -> Result<ModelParams> {
    spec.validate()?;
    let mut params = ModelParams::zeros(spec);
    for layer in &mut params.layers {
        let (lo, hi) = rule.limits(layer.weights.cols(), layer.weights.rows());
        for w in layer.weights.as_mut_slice() {
            *w = rng.uniform(lo, hi)?;
        }
    }
    Ok(params)
}

/// Confusion counts and the rates derived from them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub true_pos: usize,
    pub false_pos: usize,
    pub true_neg: usize,
    pub false_neg: usize,
    pub accuracy: f64,
    /// `tp / (tp + fn)`; `None` without positive rows.
    pub sensitivity: Option<f64>,
    /// `tn / (tn + fp)`; `None` without negative rows.
    pub specificity: Option<f64>,
    pub mse: f64,
}

impl Metrics {
    pub fn from_counts(
        true_pos: usize,
        false_pos: usize,
        true_neg: usize,
        false_neg: usize,
        mse: f64,
    ) -> Self {
        let total = true_pos + false_pos + true_neg + false_neg;
        let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
        Self {
            true_pos,
            false_pos,
            true_neg,
            false_neg,
            accuracy: ratio(true_pos + true_neg, total).unwrap_or(0.0),
            sensitivity: ratio(true_pos, true_pos + false_neg),
            specificity: ratio(true_neg, true_neg + false_pos),
            mse,
        }
    }

    pub fn total(&self) -> usize {
        self.true_pos + self.false_pos + self.true_neg + self.false_neg
    }
}

/// Inference-mode metrics; a row is predicted positive when its score is at least `threshold`.
pub fn evaluate(
    spec: &NetworkSpec,
    params: &ModelParams,
    data: &Dataset,
    threshold: f64,
) -> Result<Metrics> {
    if data.is_empty() {
        return Err(Error::param("cannot evaluate on an empty dataset"));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    let mut sq = 0.0;
    for i in 0..data.len() {
        let score = network::infer(spec, params, &Vector::new(data.row(i).to_vec()))?;
        let y = data.label(i);
        sq += (score - y) * (score - y);
        match (score >= threshold, y == 1.0) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    Ok(Metrics::from_counts(
        tp,
        fp,
        tn,
        fn_,
        sq / data.len() as f64,
    ))
}

/// Score and 0/1 class for one feature vector.
pub fn predict(
    spec: &NetworkSpec,
    params: &ModelParams,
    features: &Vector,
    threshold: f64,
) -> Result<(f64, u8)> {
    let score = network::infer(spec, params, features)?;
    Ok((score, u8::from(score >= threshold)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub optimizer_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }
}

/// Result of [`train`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub params: ModelParams,
    pub history: TrainHistory,
    pub train_metrics: Metrics,
    pub validation_metrics: Metrics,
}

/// Splits `data` per the config and trains on the training part.
pub fn train(config: &TrainConfig, data: &Dataset) -> Result<TrainedModel> {
    config.validate()?;
    let (train_set, val_set) = crate::data::split(data, &config.split_spec())?;
    fit(config, &train_set, &val_set)
}

/// Trains on `train_set`, reporting on both sets after every epoch.
pub fn fit(config: &TrainConfig, train_set: &Dataset, val_set: &Dataset) -> Result<TrainedModel> {
    config.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::param(
            "training and validation sets must be nonempty",
        ));
    }
    let spec = &config.spec;
    if spec.input_width != crate::data::N_FEATURES {
        return Err(Error::param(format!(
            "network input width {} does not match the {} dataset features",
            spec.input_width,
            crate::data::N_FEATURES
        )));
    }
    let threshold = config.classification_threshold;
    let mut rng = Rng::with_stream(config.seed, TRAIN_STREAM);
    let mut params = init_params(spec, config.init, &mut rng)?;
    let mut optimizer = config.optimizer.build(&params)?;
    let mut grads = params.zeros_like();

    let n = train_set.len();
    let batch_size = config.batch_size.min(n);
    let inputs: Vec<Vector> = (0..n)
        .map(|i| Vector::new(train_set.row(i).to_vec()))
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = TrainHistory::default();
    let mut last = None;

    for epoch in 1..=config.epochs {
        rng.shuffle(&mut order);
        let mut steps = 0;
        for batch in order.chunks(batch_size) {
            grads.scale(0.0);
            for &i in batch {
                let (score, tape) = forward(spec, &params, &inputs[i], Pass::Training(&mut rng))?;
                let upstream = mse_grad(score, train_set.label(i), batch.len())?;
                accumulate_backward(spec, &params, &tape, upstream, &mut grads)?;
            }
            optimizer.step(&mut params, &grads)?;
            steps += 1;
        }
        let tm = evaluate(spec, &params, train_set, threshold)?;
        let vm = evaluate(spec, &params, val_set, threshold)?;
        history.epochs.push(EpochRecord {
            epoch,
            train_loss: tm.mse,
            train_accuracy: tm.accuracy,
            val_loss: vm.mse,
            val_accuracy: vm.accuracy,
            optimizer_steps: steps,
        });
        last = Some((tm, vm));
    }

    let (train_metrics, validation_metrics) = last.expect("epochs >= 1 was validated");
    Ok(TrainedModel {
        params,
        history,
        train_metrics,
        validation_metrics,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Dropout,
    NoDropout,
}

impl Variant {
    pub fn label(self) -> &'static str {
        match self {
            Variant::Dropout => "dropout",
            Variant::NoDropout => "no-dropout",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonRow {
    pub seed: u64,
    pub variant: Variant,
    pub train_accuracy: f64,
    pub validation_accuracy: f64,
    /// `train_accuracy − validation_accuracy`.
    pub gap: f64,
}

/// Averages over the successful seeds of one variant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariantSummary {
    pub train_accuracy: f64,
    pub validation_accuracy: f64,
    pub gap: f64,
}

#[derive(Debug)]
pub struct SeedFailure {
    pub seed: u64,
    pub error: Error,
}

#[derive(Debug, Default)]
pub struct ComparisonReport {
    /// Two rows per successful seed (dropout first), ordered by the input seed order.
    pub rows: Vec<ComparisonRow>,
    pub failures: Vec<SeedFailure>,
}

impl ComparisonReport {
    pub fn mean(&self, variant: Variant) -> Option<VariantSummary> {
        let rows: Vec<_> = self.rows.iter().filter(|r| r.variant == variant).collect();
        if rows.is_empty() {
            return None;
        }
        let n = rows.len() as f64;
        let avg = |f: fn(&ComparisonRow) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / n;
        Some(VariantSummary {
            train_accuracy: avg(|r| r.train_accuracy),
            validation_accuracy: avg(|r| r.validation_accuracy),
            gap: avg(|r| r.gap),
        })
    }

    /// Mean gap with dropout minus mean gap without; negative means dropout shrank the gap.
    pub fn gap_change(&self) -> Option<f64> {
        Some(self.mean(Variant::Dropout)?.gap - self.mean(Variant::NoDropout)?.gap)
    }
}

fn comparison_rows(base: &TrainConfig, data: &Dataset, seed: u64) -> Result<[ComparisonRow; 2]> {
    let run = |variant: Variant| -> Result<ComparisonRow> {
        let mut config = base.clone();
        config.seed = seed;
        if variant == Variant::NoDropout {
            config.spec = base.spec.without_dropout();
        }
        let model = train(&config, data)?;
        let (t, v) = (
            model.train_metrics.accuracy,
            model.validation_metrics.accuracy,
        );
        Ok(ComparisonRow {
            seed,
            variant,
            train_accuracy: t,
            validation_accuracy: v,
            gap: t - v,
        })
    };
    Ok([run(Variant::Dropout)?, run(Variant::NoDropout)?])
}

/// Trains `base` with its dropout rates and with all rates zeroed, once per seed.
///
/// Seeds run on worker threads; a failing seed is recorded in
/// [`ComparisonReport::failures`] without stopping the others.
pub fn run_comparison(
    base: &TrainConfig,
    data: &Dataset,
    seeds: &[u64],
) -> Result<ComparisonReport> {
    if seeds.len() < 2 {
        return Err(Error::param(format!(
            "a comparison needs at least 2 seeds, got {}",
            seeds.len()
        )));
    }
    base.validate()?;

    let results: Mutex<Vec<Option<Result<[ComparisonRow; 2]>>>> =
        Mutex::new((0..seeds.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let workers = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(seeds.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= seeds.len() {
                    break;
                }
                let outcome = comparison_rows(base, data, seeds[i]);
                results
                    .lock()
                    .expect("no worker panics while holding the lock")[i] = Some(outcome);
            });
        }
    });

    let mut report = ComparisonReport::default();
    let results = results.into_inner().expect("workers have finished");
    for (&seed, outcome) in seeds.iter().zip(results) {
        match outcome.expect("every seed was processed") {
            Ok(rows) => report.rows.extend(rows),
            Err(error) => report.failures.push(SeedFailure { seed, error }),
        }
    }
    Ok(report)
}
