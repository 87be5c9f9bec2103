//! `key = value` run configuration files.
//!
//! ```text
//! # comments start with '#'
//! seed = 7
//! epochs = 500
//! batch_size = 64
//! optimizer = adadelta
//! rho = 0.95
//! epsilon = 1e-6
//! init = fixed
//! init_lo = -0.05
//! init_hi = 0.05
//! validation_fraction = 0.1
//! stratified = false
//! threshold = 0.5
//! input_width = 8
//! layers = dense:64:elu, dropout:0.25, dense:32:elu, dropout:0.5, dense:1:softplus
//! ```
//!
//! Every key is optional; missing keys keep their defaults. `rho`/`epsilon`
//! only apply to `optimizer = adadelta`, `learning_rate` only to `sgd`, and
//! `init_lo`/`init_hi` only to `init = fixed`.

use crate::error::{Error, Result};
use crate::network::{Activation, LayerSpec, NetworkSpec};
use crate::trainer::{InitRule, OptimizerConfig, TrainConfig};

pub const KEYS: [&str; 15] = [
    "seed",
    "epochs",
    "batch_size",
    "optimizer",
    "rho",
    "epsilon",
    "learning_rate",
    "init",
    "init_lo",
    "init_hi",
    "validation_fraction",
    "stratified",
    "threshold",
    "input_width",
    "layers",
];

/// A partially specified configuration; `None` means "not set here".
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub optimizer: Option<String>,
    pub rho: Option<f64>,
    pub epsilon: Option<f64>,
    pub learning_rate: Option<f64>,
    pub init: Option<String>,
    pub init_lo: Option<f64>,
    pub init_hi: Option<f64>,
    pub validation_fraction: Option<f64>,
    pub stratified: Option<bool>,
    pub threshold: Option<f64>,
    pub input_width: Option<usize>,
    pub layers: Option<Vec<LayerSpec>>,
}

macro_rules! merge_fields {
    ($dst:ident, $src:ident, $($field:ident),*) => {
        $( if $src.$field.is_some() { $dst.$field = $src.$field.clone(); } )*
    };
}

impl RawConfig {
    /// Values set in `other` replace values set in `self`.
    pub fn merge(&mut self, other: &RawConfig) {
        merge_fields!(
            self,
            other,
            seed,
            epochs,
            batch_size,
            optimizer,
            rho,
            epsilon,
            learning_rate,
            init,
            init_lo,
            init_hi,
            validation_fraction,
            stratified,
            threshold,
            input_width,
            layers
        );
    }

    /// Fills unset fields from the defaults and validates the result.
    pub fn resolve(&self) -> Result<TrainConfig> {
        let defaults = TrainConfig::default();
        let optimizer = match self
            .optimizer
            .as_deref()
            .unwrap_or(defaults.optimizer.name())
        {
            "adadelta" => {
                if self.learning_rate.is_some() {
                    return Err(Error::param(
                        "learning_rate only applies to optimizer = sgd",
                    ));
                }
                OptimizerConfig::Adadelta {
                    rho: self.rho.unwrap_or(crate::optim::AdadeltaState::DEFAULT_RHO),
                    epsilon: self
                        .epsilon
                        .unwrap_or(crate::optim::AdadeltaState::DEFAULT_EPSILON),
                }
            }
            "sgd" => {
                if self.rho.is_some() || self.epsilon.is_some() {
                    return Err(Error::param(
                        "rho and epsilon only apply to optimizer = adadelta",
                    ));
                }
                OptimizerConfig::Sgd {
                    learning_rate: self
                        .learning_rate
                        .unwrap_or(crate::optim::SgdState::DEFAULT_LEARNING_RATE),
                }
            }
            other => {
                return Err(Error::param(format!(
                    "unknown optimizer {other:?} (expected adadelta or sgd)"
                )))
            }
        };
        let default_range = match defaults.init {
            InitRule::Fixed { lo, hi } => (lo, hi),
            InitRule::Glorot => (-0.05, 0.05),
        };
        let init = match self.init.as_deref() {
            Some("glorot") => {
                if self.init_lo.is_some() || self.init_hi.is_some() {
                    return Err(Error::param(
                        "init_lo and init_hi only apply to init = fixed",
                    ));
                }
                InitRule::Glorot
            }
            Some("fixed") => InitRule::Fixed {
                lo: self.init_lo.unwrap_or(default_range.0),
                hi: self.init_hi.unwrap_or(default_range.1),
            },
            None if self.init_lo.is_some() || self.init_hi.is_some() => InitRule::Fixed {
                lo: self.init_lo.unwrap_or(default_range.0),
                hi: self.init_hi.unwrap_or(default_range.1),
            },
            None => defaults.init,
            Some(other) => {
                return Err(Error::param(format!(
                    "unknown init rule {other:?} (expected glorot or fixed)"
                )))
            }
        };
        let config = TrainConfig {
            spec: NetworkSpec {
                input_width: self.input_width.unwrap_or(defaults.spec.input_width),
                layers: self.layers.clone().unwrap_or(defaults.spec.layers),
            },
            epochs: self.epochs.unwrap_or(defaults.epochs),
            batch_size: self.batch_size.unwrap_or(defaults.batch_size),
            optimizer,
            init,
            seed: self.seed.unwrap_or(defaults.seed),
            validation_fraction: self
                .validation_fraction
                .unwrap_or(defaults.validation_fraction),
            stratified: self.stratified.unwrap_or(defaults.stratified),
            classification_threshold: self.threshold.unwrap_or(defaults.classification_threshold),
        };
        config.validate()?;
        Ok(config)
    }

    fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn num<T: std::str::FromStr>(v: &str) -> std::result::Result<T, String> {
            v.parse().map_err(|_| format!("cannot parse {v:?}"))
        }
        match key {
            "seed" => self.seed = Some(num(value)?),
            "epochs" => self.epochs = Some(num(value)?),
            "batch_size" => self.batch_size = Some(num(value)?),
            "optimizer" => self.optimizer = Some(value.to_ascii_lowercase()),
            "rho" => self.rho = Some(num(value)?),
            "epsilon" => self.epsilon = Some(num(value)?),
            "learning_rate" => self.learning_rate = Some(num(value)?),
            "init" => self.init = Some(value.to_ascii_lowercase()),
            "init_lo" => self.init_lo = Some(num(value)?),
            "init_hi" => self.init_hi = Some(num(value)?),
            "validation_fraction" => self.validation_fraction = Some(num(value)?),
            "stratified" => self.stratified = Some(num(value)?),
            "threshold" => self.threshold = Some(num(value)?),
            "input_width" => self.input_width = Some(num(value)?),
            "layers" => self.layers = Some(parse_layers(value).map_err(|e| e.to_string())?),
            _ => unreachable!("keys are checked before set"),
        }
        Ok(())
    }
}

/// Parses config text. Unknown keys and repeated keys are errors.
pub fn parse_config(text: &str) -> Result<RawConfig> {
    let mut raw = RawConfig::default();
    let mut seen = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Config {
                line: line_no,
                message: format!("expected key = value, found {line:?}"),
            });
        };
        let (key, value) = (key.trim(), value.trim());
        if !KEYS.contains(&key) {
            return Err(Error::UnknownKey {
                line: line_no,
                key: key.to_string(),
            });
        }
        if seen.contains(&key) {
            return Err(Error::Config {
                line: line_no,
                message: format!("key {key:?} appears more than once"),
            });
        }
        seen.push(key);
        raw.set(key, value).map_err(|message| Error::Config {
            line: line_no,
            message: format!("{key}: {message}"),
        })?;
    }
    Ok(raw)
}

pub fn load_config(path: &std::path::Path) -> Result<RawConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

/// Renders every field of `config`. Floats use the shortest text that parses back exactly.
pub fn render_config(config: &TrainConfig) -> String {
    let mut lines = vec![
        format!("seed = {}", config.seed),
        format!("epochs = {}", config.epochs),
        format!("batch_size = {}", config.batch_size),
        format!("optimizer = {}", config.optimizer.name()),
    ];
    match config.optimizer {
        OptimizerConfig::Adadelta { rho, epsilon } => {
            lines.push(format!("rho = {rho:?}"));
            lines.push(format!("epsilon = {epsilon:?}"));
        }
        OptimizerConfig::Sgd { learning_rate } => {
            lines.push(format!("learning_rate = {learning_rate:?}"));
        }
    }
    match config.init {
        InitRule::Glorot => lines.push("init = glorot".to_string()),
        InitRule::Fixed { lo, hi } => {
            lines.push("init = fixed".to_string());
            lines.push(format!("init_lo = {lo:?}"));
            lines.push(format!("init_hi = {hi:?}"));
        }
    }
    lines.push(format!(
        "validation_fraction = {:?}",
        config.validation_fraction
    ));
    lines.push(format!("stratified = {}", config.stratified));
    lines.push(format!("threshold = {:?}", config.classification_threshold));
    lines.push(format!("input_width = {}", config.spec.input_width));
    lines.push(format!("layers = {}", render_layers(&config.spec.layers)));
    let mut out = lines.join("\n");
    out.push('\n');
    out
}

/// `dense:<width>:<activation>[:<elu alpha>]` and `dropout:<rate>`, comma separated.
pub fn parse_layers(text: &str) -> Result<Vec<LayerSpec>> {
    text.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(parse_layer)
        .collect()
}

fn parse_layer(token: &str) -> Result<LayerSpec> {
    let bad = |why: &str| Error::param(format!("bad layer {token:?}: {why}"));
    let parts: Vec<&str> = token.split(':').collect();
    match parts.as_slice() {
        ["dropout", rate] => Ok(LayerSpec::Dropout {
            rate: rate.parse().map_err(|_| bad("rate is not a number"))?,
        }),
        ["dense", width, act, rest @ ..] => {
            let width = width.parse().map_err(|_| bad("width is not an integer"))?;
            let mut activation =
                Activation::from_name(act).ok_or_else(|| bad("unknown activation"))?;
            match (rest, &mut activation) {
                ([], _) => {}
                ([alpha], Activation::Elu { alpha: a }) => {
                    *a = alpha.parse().map_err(|_| bad("alpha is not a number"))?
                }
                _ => return Err(bad("only elu takes an extra parameter")),
            }
            Ok(LayerSpec::Dense { width, activation })
        }
        _ => Err(bad("expected dense:<width>:<activation> or dropout:<rate>")),
    }
}

pub fn render_layers(layers: &[LayerSpec]) -> String {
    layers
        .iter()
        .map(|l| match *l {
            LayerSpec::Dense {
                width,
                activation: Activation::Elu { alpha },
            } if alpha != 1.0 => format!("dense:{width}:elu:{alpha:?}"),
            LayerSpec::Dense { width, activation } => {
                format!("dense:{width}:{}", activation.name())
            }
            LayerSpec::Dropout { rate } => format!("dropout:{rate:?}"),
        })
        .collect::<Vec<_>>()
        .join(", ")
}
