//! Plain-text model files (format version 1).
//!
//! ```text
//! # dropout-mlp model
//! format_version 1
//! input_width 8
//! layer dense 64 elu 1.0000000000000000e0
//! layer dropout 2.5000000000000000e-1
//! ...
//! fingerprint seed 7
//! fingerprint epochs 500
//! fingerprint batch_size 64
//! fingerprint optimizer adadelta 9.4999999999999996e-1 9.9999999999999995e-7
//! fingerprint init fixed -5.0000000000000003e-2 5.0000000000000003e-2
//! fingerprint validation_fraction 1.0000000000000001e-1
//! fingerprint stratified false
//! fingerprint threshold 5.0000000000000000e-1
//! weights 0 64 8
//! <64 lines of 8 values>
//! bias 0 64
//! <64 values>
//! ...
//! end
//! ```
//!
//! Floats carry 17 significant digits, enough to read back the exact `f64`.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::network::{Activation, DenseParams, LayerSpec, ModelParams, NetworkSpec};
use crate::trainer::{InitRule, OptimizerConfig, TrainConfig};

pub const FORMAT_VERSION: u32 = 1;

/// How a model was trained; enough to rebuild its [`TrainConfig`] and split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingFingerprint {
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub init: InitRule,
    pub validation_fraction: f64,
    pub stratified: bool,
    pub threshold: f64,
}

impl TrainingFingerprint {
    pub fn of(config: &TrainConfig) -> Self {
        Self {
            seed: config.seed,
            epochs: config.epochs,
            batch_size: config.batch_size,
            optimizer: config.optimizer,
            init: config.init,
            validation_fraction: config.validation_fraction,
            stratified: config.stratified,
            threshold: config.classification_threshold,
        }
    }

    pub fn to_config(&self, spec: NetworkSpec) -> TrainConfig {
        TrainConfig {
            spec,
            epochs: self.epochs,
            batch_size: self.batch_size,
            optimizer: self.optimizer,
            init: self.init,
            seed: self.seed,
            validation_fraction: self.validation_fraction,
            stratified: self.stratified,
            classification_threshold: self.threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub spec: NetworkSpec,
    pub params: ModelParams,
    pub fingerprint: TrainingFingerprint,
}

fn f17(v: f64) -> String {
    format!("{v:.16e}")
}

impl ModelFile {
    pub fn new(config: &TrainConfig, params: ModelParams) -> Result<Self> {
        params.check_matches(&config.spec)?;
        Ok(Self {
            spec: config.spec.clone(),
            params,
            fingerprint: TrainingFingerprint::of(config),
        })
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let fp = &self.fingerprint;
        // Writing into a String cannot fail.
        let _ = (|| -> std::fmt::Result {
            writeln!(s, "# dropout-mlp model")?;
            writeln!(s, "format_version {FORMAT_VERSION}")?;
            writeln!(s, "input_width {}", self.spec.input_width)?;
            for layer in &self.spec.layers {
                match *layer {
                    LayerSpec::Dense {
                        width,
                        activation: Activation::Elu { alpha },
                    } => writeln!(s, "layer dense {width} elu {}", f17(alpha))?,
                    LayerSpec::Dense { width, activation } => {
                        writeln!(s, "layer dense {width} {}", activation.name())?
                    }
                    LayerSpec::Dropout { rate } => writeln!(s, "layer dropout {}", f17(rate))?,
                }
            }
            writeln!(s, "fingerprint seed {}", fp.seed)?;
            writeln!(s, "fingerprint epochs {}", fp.epochs)?;
            writeln!(s, "fingerprint batch_size {}", fp.batch_size)?;
            match fp.optimizer {
                OptimizerConfig::Adadelta { rho, epsilon } => writeln!(
                    s,
                    "fingerprint optimizer adadelta {} {}",
                    f17(rho),
                    f17(epsilon)
                )?,
                OptimizerConfig::Sgd { learning_rate } => {
                    writeln!(s, "fingerprint optimizer sgd {}", f17(learning_rate))?
                }
            }
            match fp.init {
                InitRule::Glorot => writeln!(s, "fingerprint init glorot")?,
                InitRule::Fixed { lo, hi } => {
                    writeln!(s, "fingerprint init fixed {} {}", f17(lo), f17(hi))?
                }
            }
            writeln!(
                s,
                "fingerprint validation_fraction {}",
                f17(fp.validation_fraction)
            )?;
            writeln!(s, "fingerprint stratified {}", fp.stratified)?;
            writeln!(s, "fingerprint threshold {}", f17(fp.threshold))?;
            for (i, layer) in self.params.layers.iter().enumerate() {
                let (rows, cols) = (layer.weights.rows(), layer.weights.cols());
                writeln!(s, "weights {i} {rows} {cols}")?;
                for r in 0..rows {
                    writeln!(s, "{}", join17(layer.weights.row(r)))?;
                }
                writeln!(s, "bias {i} {}", layer.bias.len())?;
                writeln!(s, "{}", join17(layer.bias.as_slice()))?;
            }
            writeln!(s, "end")
        })();
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        Parser::new(text).parse()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn train_config(&self) -> TrainConfig {
        self.fingerprint.to_config(self.spec.clone())
    }
}

fn join17(values: &[f64]) -> String {
    values.iter().map(|&v| f17(v)).collect::<Vec<_>>().join(" ")
}

struct Parser<'a> {
    lines: std::iter::Peekable<Box<dyn Iterator<Item = (usize, &'a str)> + 'a>>,
    last_line: usize,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        let iter: Box<dyn Iterator<Item = (usize, &'a str)> + 'a> = Box::new(
            text.lines()
                .enumerate()
                .map(|(i, l)| (i + 1, l.trim()))
                .filter(|(_, l)| !l.is_empty() && !l.starts_with('#')),
        );
        Self {
            lines: iter.peekable(),
            last_line: 0,
        }
    }

    fn err(&self, line: usize, message: impl Into<String>) -> Error {
        Error::ModelFormat {
            line,
            message: message.into(),
        }
    }

    fn next_line(&mut self, what: &str) -> Result<(usize, Vec<&'a str>)> {
        match self.lines.next() {
            Some((n, l)) => {
                self.last_line = n;
                Ok((n, l.split_whitespace().collect()))
            }
            None => Err(self.err(
                self.last_line + 1,
                format!("unexpected end of file, expected {what}"),
            )),
        }
    }

    fn peek_keyword(&mut self) -> Option<&'a str> {
        self.lines
            .peek()
            .and_then(|(_, l)| l.split_whitespace().next())
    }

    fn expect(&mut self, keyword: &str, n_args: usize) -> Result<(usize, Vec<&'a str>)> {
        let (line, parts) = self.next_line(keyword)?;
        if parts.first() != Some(&keyword) {
            return Err(self.err(line, format!("expected {keyword:?}, found {:?}", parts[0])));
        }
        if parts.len() != n_args + 1 {
            return Err(self.err(
                line,
                format!("{keyword} takes {n_args} values, found {}", parts.len() - 1),
            ));
        }
        Ok((line, parts[1..].to_vec()))
    }

    fn num<T: std::str::FromStr>(&self, line: usize, token: &str) -> Result<T> {
        token
            .parse()
            .map_err(|_| self.err(line, format!("cannot parse {token:?} as a number")))
    }

    fn fingerprint(&mut self, key: &str) -> Result<(usize, Vec<&'a str>)> {
        let (line, parts) = self.next_line("fingerprint")?;
        if parts.len() < 3 || parts[0] != "fingerprint" || parts[1] != key {
            return Err(self.err(line, format!("expected \"fingerprint {key} ...\"")));
        }
        Ok((line, parts[2..].to_vec()))
    }

    fn single<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let (line, args) = self.fingerprint(key)?;
        if args.len() != 1 {
            return Err(self.err(line, format!("fingerprint {key} takes one value")));
        }
        self.num(line, args[0])
    }

    fn parse(mut self) -> Result<ModelFile> {
        let (line, args) = self.expect("format_version", 1)?;
        let version: u32 = self.num(line, args[0])?;
        if version != FORMAT_VERSION {
            return Err(Error::Version {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let (line, args) = self.expect("input_width", 1)?;
        let input_width = self.num(line, args[0])?;

        let mut layers = Vec::new();
        while self.peek_keyword() == Some("layer") {
            let (line, parts) = self.next_line("layer")?;
            let layer = match parts[1..] {
                ["dropout", rate] => LayerSpec::Dropout {
                    rate: self.num(line, rate)?,
                },
                ["dense", width, "elu", alpha] => LayerSpec::Dense {
                    width: self.num(line, width)?,
                    activation: Activation::Elu {
                        alpha: self.num(line, alpha)?,
                    },
                },
                ["dense", width, name] if name != "elu" => LayerSpec::Dense {
                    width: self.num(line, width)?,
                    activation: Activation::from_name(name)
                        .ok_or_else(|| self.err(line, format!("unknown activation {name:?}")))?,
                },
                _ => return Err(self.err(line, "malformed layer line")),
            };
            layers.push(layer);
        }
        let spec = NetworkSpec {
            input_width,
            layers,
        };
        spec.validate()
            .map_err(|e| self.err(self.last_line, e.to_string()))?;

        let seed = self.single("seed")?;
        let epochs = self.single("epochs")?;
        let batch_size = self.single("batch_size")?;
        let (line, args) = self.fingerprint("optimizer")?;
        let optimizer = match args.as_slice() {
            ["adadelta", rho, eps] => OptimizerConfig::Adadelta {
                rho: self.num(line, rho)?,
                epsilon: self.num(line, eps)?,
            },
            ["sgd", lr] => OptimizerConfig::Sgd {
                learning_rate: self.num(line, lr)?,
            },
            _ => return Err(self.err(line, "malformed optimizer fingerprint")),
        };
        let (line, args) = self.fingerprint("init")?;
        let init = match args.as_slice() {
            ["glorot"] => InitRule::Glorot,
            ["fixed", lo, hi] => InitRule::Fixed {
                lo: self.num(line, lo)?,
                hi: self.num(line, hi)?,
            },
            _ => return Err(self.err(line, "malformed init fingerprint")),
        };
        let validation_fraction = self.single("validation_fraction")?;
        let stratified = self.single("stratified")?;
        let threshold = self.single("threshold")?;
        let fingerprint = TrainingFingerprint {
            seed,
            epochs,
            batch_size,
            optimizer,
            init,
            validation_fraction,
            stratified,
            threshold,
        };

        let mut params = Vec::new();
        for (i, (rows, cols)) in spec.dense_shapes().into_iter().enumerate() {
            let (line, args) = self.expect("weights", 3)?;
            let header: Vec<usize> = args
                .iter()
                .map(|a| self.num(line, a))
                .collect::<Result<_>>()?;
            if header != [i, rows, cols] {
                return Err(self.err(
                    line,
                    format!(
                        "expected weights {i} {rows} {cols}, found weights {}",
                        args.join(" ")
                    ),
                ));
            }
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows {
                data.extend(self.values(cols)?);
            }
            let (line, args) = self.expect("bias", 2)?;
            if args != [i.to_string(), rows.to_string()] {
                return Err(self.err(line, format!("expected bias {i} {rows}")));
            }
            let bias = Vector::new(self.values(rows)?);
            params.push(DenseParams {
                weights: Matrix::new(rows, cols, data)?,
                bias,
            });
        }
        self.expect("end", 0)?;
        if let Some((line, _)) = self.lines.next() {
            return Err(self.err(line, "content after \"end\""));
        }
        Ok(ModelFile {
            spec,
            params: ModelParams { layers: params },
            fingerprint,
        })
    }

    fn values(&mut self, n: usize) -> Result<Vec<f64>> {
        let (line, parts) = self.next_line("parameter values")?;
        if parts.len() != n {
            return Err(self.err(line, format!("expected {n} values, found {}", parts.len())));
        }
        parts
            .iter()
            .map(|p| {
                let v: f64 = self.num(line, p)?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(self.err(line, format!("non-finite parameter {p:?}")))
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Rng;
    use crate::trainer::init_params;

    fn sample() -> ModelFile {
        let config = TrainConfig {
            seed: 11,
            ..TrainConfig::default()
        };
        let params = init_params(&config.spec, InitRule::Glorot, &mut Rng::new(11)).unwrap();
        ModelFile::new(&config, params).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let model = sample();
        let text = model.render();
        assert_eq!(ModelFile::parse(&text).unwrap(), model);
        assert_eq!(ModelFile::parse(&text).unwrap().render(), text);
    }

    #[test]
    fn version_mismatch_names_both_versions() {
        let text = sample()
            .render()
            .replace("format_version 1", "format_version 2");
        let err = ModelFile::parse(&text).unwrap_err();
        assert!(matches!(
            err,
            Error::Version {
                found: 2,
                expected: 1
            }
        ));
        assert!(err.to_string().contains('2') && err.to_string().contains('1'));
    }

    #[test]
    fn truncated_file_reports_location() {
        let text = sample().render();
        let cut: String = text.lines().take(40).collect::<Vec<_>>().join("\n");
        match ModelFile::parse(&cut).unwrap_err() {
            Error::ModelFormat { line, .. } => assert_eq!(line, 41),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn corrupted_value_reports_line() {
        let text = sample().render();
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        let target = lines
            .iter()
            .position(|l| l.starts_with("weights 1"))
            .unwrap()
            + 1;
        lines[target] = lines[target].replacen('e', "x", 1);
        match ModelFile::parse(&lines.join("\n")).unwrap_err() {
            Error::ModelFormat { line, message } => {
                assert_eq!(line, target + 1);
                assert!(message.contains("cannot parse"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wrong_param_shape_rejected() {
        let text = sample()
            .render()
            .replace("weights 2 1 32", "weights 2 1 31");
        assert!(ModelFile::parse(&text).is_err());
    }

    #[test]
    fn params_must_match_spec() {
        let config = TrainConfig::default();
        let other = NetworkSpec {
            input_width: 8,
            layers: vec![LayerSpec::Dense {
                width: 1,
                activation: Activation::Softplus,
            }],
        };
        assert!(ModelFile::new(&config, ModelParams::zeros(&other)).is_err());
    }

    #[test]
    fn fingerprint_rebuilds_config() {
        let config = TrainConfig {
            seed: 5,
            epochs: 12,
            optimizer: OptimizerConfig::Sgd { learning_rate: 0.3 },
            init: InitRule::Glorot,
            stratified: true,
            ..TrainConfig::default()
        };
        let model = ModelFile::new(&config, ModelParams::zeros(&config.spec)).unwrap();
        let back = ModelFile::parse(&model.render()).unwrap();
        assert_eq!(back.train_config(), config);
    }
}
