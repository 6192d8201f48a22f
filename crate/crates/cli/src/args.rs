//! Flag and config-file parsing. Every experiment setting can come from a
//! TOML file whose keys are the long flag names; flags win over the file.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use feddst::data::PartitionSpec;
use feddst::experiment::{DatasetId, EvalMode, ExperimentConfig, SyntheticSpec};
use feddst::ledger::Quantizer;
use feddst::protocol::{Algorithm, AlgorithmConfig, TrainingConfig};
use feddst::sparsity::ReadjustmentSchedule;

#[derive(Debug, Parser)]
#[command(name = "feddst", version, about = "Federated dynamic sparse training simulator")]
pub struct Cli {
    /// Worker threads for client updates (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one experiment and write its metrics file.
    Run(ExperimentArgs),
    /// Run one experiment per seed and summarize best accuracy at upload caps.
    MultiSeed(MultiSeedArgs),
    /// Best accuracy at upload caps from existing metrics files.
    Caps(CapsArgs),
}

#[derive(Debug, Args)]
pub struct MultiSeedArgs {
    #[command(flatten)]
    pub experiment: ExperimentArgs,

    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',', required = true)]
    pub seeds: Vec<u64>,

    /// Upload budgets in bytes (default: ten even steps up to the largest run).
    #[arg(long, value_delimiter = ',')]
    pub caps: Vec<u64>,

    /// Directory for per-seed metrics and summary.csv (summary goes to stdout otherwise).
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CapsArgs {
    /// Metrics files, one per seed.
    #[arg(required = true)]
    pub metrics: Vec<PathBuf>,

    /// Upload budgets in bytes (default: ten even steps).
    #[arg(long, value_delimiter = ',')]
    pub caps: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlgorithmName {
    Fedavg,
    Fedavgm,
    Fedprox,
    Randommask,
    Feddst,
    FeddstProx,
    Prunefl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PartitionName {
    Pathological,
    Dirichlet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalName {
    Global,
    Client,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetName {
    Mnist,
    Cifar10,
    Synthetic,
}

/// Experiment settings; all optional so a config file can fill the gaps.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ExperimentArgs {
    /// TOML file with the same keys as the long flags.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    #[arg(long, value_enum)]
    pub dataset: Option<DatasetName>,
    /// Directory with the dataset files (default: data/<dataset>).
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Inferred from --sparsity, --readjustment-ratio and --prox when omitted.
    #[arg(long, value_enum)]
    pub algorithm: Option<AlgorithmName>,

    /// Global sparsity S in [0, 1).
    #[arg(long, value_parser = parse_sparsity)]
    pub sparsity: Option<f64>,
    /// Base readjustment ratio α in [0, 1].
    #[arg(long, value_parser = parse_unit)]
    pub readjustment_ratio: Option<f64>,
    /// Rounds between readjustments ΔR.
    #[arg(long, value_parser = parse_positive)]
    pub rounds_between_readjustments: Option<usize>,
    /// Last round that may readjust (R_end).
    #[arg(long, value_parser = parse_positive)]
    pub readjustment_end: Option<usize>,
    /// Local epoch after which clients readjust (default: epochs − 1).
    #[arg(long, value_parser = parse_positive)]
    pub readjustment_epoch: Option<usize>,
    /// Proximal coefficient μ ≥ 0.
    #[arg(long, value_parser = parse_non_negative)]
    pub prox: Option<f64>,
    /// Client momentum for fedavgm.
    #[arg(long, value_parser = parse_momentum)]
    pub momentum: Option<f64>,

    #[arg(long, value_parser = parse_positive)]
    pub rounds: Option<usize>,
    #[arg(long, value_parser = parse_positive)]
    pub clients_per_round: Option<usize>,
    /// Local epochs E.
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long, value_parser = parse_positive)]
    pub batch_size: Option<usize>,
    #[arg(long, value_parser = parse_positive_f64)]
    pub learning_rate: Option<f64>,
    #[arg(long, value_parser = parse_non_negative)]
    pub weight_decay: Option<f64>,
    /// Truncate uploads to bfloat16.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub bfloat16: Option<bool>,

    #[arg(long, value_enum)]
    pub partition: Option<PartitionName>,
    /// Total client population N.
    #[arg(long, value_parser = parse_positive)]
    pub clients: Option<usize>,
    #[arg(long, value_parser = parse_positive)]
    pub classes_per_client: Option<usize>,
    #[arg(long, value_parser = parse_positive)]
    pub images_per_class: Option<usize>,
    #[arg(long, value_parser = parse_positive_f64)]
    pub dirichlet_beta: Option<f64>,

    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_parser = parse_positive)]
    pub eval_every: Option<usize>,
    #[arg(long, value_enum)]
    pub eval_mode: Option<EvalName>,
    /// Evaluate on this many evenly spaced test samples.
    #[arg(long, value_parser = parse_positive)]
    pub eval_limit: Option<usize>,
    /// Metrics CSV path (stdout when omitted).
    #[arg(long)]
    pub output: Option<PathBuf>,
}

fn parse_f64(s: &str) -> Result<f64, String> {
    s.parse::<f64>().map_err(|_| format!("'{s}' is not a number"))
}

fn in_range(v: f64, ok: bool, range: &str) -> Result<f64, String> {
    if ok {
        Ok(v)
    } else {
        Err(format!("{v} outside {range}"))
    }
}

fn parse_sparsity(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    in_range(v, (0.0..1.0).contains(&v), "[0, 1)")
}

fn parse_unit(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    in_range(v, (0.0..=1.0).contains(&v), "[0, 1]")
}

fn parse_momentum(s: &str) -> Result<f64, String> {
    parse_sparsity(s)
}

fn parse_non_negative(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    in_range(v, v >= 0.0 && v.is_finite(), "[0, inf)")
}

fn parse_positive_f64(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    in_range(v, v > 0.0 && v.is_finite(), "(0, inf)")
}

fn parse_positive(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) | Err(_) => Err(format!("'{s}' is not a positive integer")),
        Ok(v) => Ok(v),
    }
}

/// A settings problem, reported with the key or flag that caused it.
#[derive(Debug, thiserror::Error)]
pub enum ArgsError {
    #[error("cannot read config file {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("config file {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid value for '{key}': {message}")]
    Value { key: &'static str, message: String },
}

fn check<T: Copy>(key: &'static str, v: Option<T>, f: impl Fn(&str) -> Result<T, String>) -> Result<(), ArgsError>
where
    T: ToString,
{
    match v {
        Some(x) => f(&x.to_string()).map(|_| ()).map_err(|message| ArgsError::Value { key, message }),
        None => Ok(()),
    }
}

impl ExperimentArgs {
    pub fn read_file(path: &Path) -> Result<Self, ArgsError> {
        let text = std::fs::read_to_string(path).map_err(|source| ArgsError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let parsed: Self = toml::from_str(&text).map_err(|e| ArgsError::Parse {
            path: path.to_path_buf(),
            message: e.message().to_string(),
        })?;
        parsed.check_ranges()?;
        Ok(parsed)
    }

    /// Applies the flag parsers' range checks to values from a file.
    fn check_ranges(&self) -> Result<(), ArgsError> {
        check("sparsity", self.sparsity, parse_sparsity)?;
        check("readjustment-ratio", self.readjustment_ratio, parse_unit)?;
        check("rounds-between-readjustments", self.rounds_between_readjustments, parse_positive)?;
        check("readjustment-end", self.readjustment_end, parse_positive)?;
        check("readjustment-epoch", self.readjustment_epoch, parse_positive)?;
        check("prox", self.prox, parse_non_negative)?;
        check("momentum", self.momentum, parse_momentum)?;
        check("rounds", self.rounds, parse_positive)?;
        check("clients-per-round", self.clients_per_round, parse_positive)?;
        check("batch-size", self.batch_size, parse_positive)?;
        check("learning-rate", self.learning_rate, parse_positive_f64)?;
        check("weight-decay", self.weight_decay, parse_non_negative)?;
        check("clients", self.clients, parse_positive)?;
        check("classes-per-client", self.classes_per_client, parse_positive)?;
        check("images-per-class", self.images_per_class, parse_positive)?;
        check("dirichlet-beta", self.dirichlet_beta, parse_positive_f64)?;
        check("eval-every", self.eval_every, parse_positive)?;
        check("eval-limit", self.eval_limit, parse_positive)
    }

    /// Fills unset fields from `file`.
    pub fn or(self, file: Self) -> Self {
        macro_rules! merge {
            ($($f:ident),*) => { Self { config: self.config, $($f: self.$f.or(file.$f)),* } };
        }
        merge!(
            dataset, data_dir, algorithm, sparsity, readjustment_ratio, rounds_between_readjustments,
            readjustment_end, readjustment_epoch, prox, momentum, rounds, clients_per_round, epochs,
            batch_size, learning_rate, weight_decay, bfloat16, partition, clients, classes_per_client,
            images_per_class, dirichlet_beta, seed, eval_every, eval_mode, eval_limit, output
        )
    }

    /// Merges the config file (if any) under the flags.
    pub fn with_file(self) -> Result<Self, ArgsError> {
        match self.config.clone() {
            Some(path) => Ok(self.or(Self::read_file(&path)?)),
            None => Ok(self),
        }
    }

    /// The algorithm named, or the one implied by the numeric settings.
    pub fn algorithm_name(&self) -> AlgorithmName {
        if let Some(a) = self.algorithm {
            return a;
        }
        let s = self.sparsity.unwrap_or(DEFAULT_SPARSITY);
        let alpha = self.readjustment_ratio.unwrap_or(DEFAULT_ALPHA);
        let mu = self.prox.unwrap_or(0.0);
        match (s > 0.0, alpha > 0.0, mu > 0.0) {
            (false, _, true) => AlgorithmName::Fedprox,
            (false, _, false) => AlgorithmName::Fedavg,
            (true, false, _) => AlgorithmName::Randommask,
            (true, true, false) => AlgorithmName::Feddst,
            (true, true, true) => AlgorithmName::FeddstProx,
        }
    }

    /// Resolves defaults into a runnable configuration.
    pub fn resolve(&self) -> Result<ExperimentConfig, ArgsError> {
        let dataset = match self.dataset.unwrap_or(DatasetName::Mnist) {
            DatasetName::Mnist => DatasetId::Mnist,
            DatasetName::Cifar10 => DatasetId::Cifar10,
            DatasetName::Synthetic => DatasetId::Synthetic,
        };
        let d = TrainingConfig::default();
        let epochs = self.epochs.unwrap_or(d.local_epochs);
        let training = TrainingConfig {
            rounds: self.rounds.unwrap_or(d.rounds),
            clients_per_round: self.clients_per_round.unwrap_or(d.clients_per_round),
            local_epochs: epochs,
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            learning_rate: self.learning_rate.unwrap_or(d.learning_rate),
            momentum: d.momentum,
            weight_decay: self.weight_decay.unwrap_or(d.weight_decay),
            upload: if self.bfloat16.unwrap_or(false) {
                Quantizer::BFloat16
            } else {
                Quantizer::Float32
            },
        };
        let sparsity = self.sparsity.unwrap_or(DEFAULT_SPARSITY);
        let rounds_between = self
            .rounds_between_readjustments
            .unwrap_or_else(|| dataset.default_rounds_between());
        let schedule = ReadjustmentSchedule {
            rounds_between,
            end_round: self.readjustment_end.unwrap_or_else(|| dataset.default_end_round()),
            alpha: self.readjustment_ratio.unwrap_or(DEFAULT_ALPHA),
            readjust_epoch: self.readjustment_epoch.unwrap_or(epochs.saturating_sub(1).max(1)),
        };
        let mu = self.prox.unwrap_or(0.0);
        let algorithm = match self.algorithm_name() {
            AlgorithmName::Fedavg => Algorithm::FedAvg,
            AlgorithmName::Fedavgm => Algorithm::FedAvgM {
                momentum: self.momentum.unwrap_or(d.momentum),
            },
            AlgorithmName::Fedprox => Algorithm::FedProx { mu },
            AlgorithmName::Randommask => Algorithm::RandomMask { sparsity },
            AlgorithmName::Feddst => Algorithm::FedDst { sparsity, schedule },
            AlgorithmName::FeddstProx => Algorithm::FedDstProx { sparsity, schedule, mu },
            AlgorithmName::Prunefl => Algorithm::PruneFl {
                sparsity,
                rounds_between,
                t_uniform: 1.0,
            },
        };
        if self.momentum.is_some() && !matches!(algorithm, Algorithm::FedAvgM { .. }) {
            return Err(ArgsError::Value {
                key: "momentum",
                message: format!("only applies to fedavgm, not {algorithm}"),
            });
        }

        let synthetic = SyntheticSpec::default();
        let default_clients = match dataset {
            DatasetId::Synthetic => 40,
            _ => 400,
        };
        let num_clients = self.clients.unwrap_or(default_clients);
        let partition = match self.partition.unwrap_or(PartitionName::Pathological) {
            PartitionName::Pathological => PartitionSpec::Pathological {
                num_clients,
                classes_per_client: self.classes_per_client.unwrap_or(2),
                images_per_class: self.images_per_class.unwrap_or(20),
            },
            PartitionName::Dirichlet => PartitionSpec::Dirichlet {
                num_clients,
                beta: self.dirichlet_beta.unwrap_or(0.1),
            },
        };
        let data_dir = match dataset {
            DatasetId::Synthetic => None,
            _ => Some(
                self.data_dir
                    .clone()
                    .unwrap_or_else(|| PathBuf::from("data").join(dataset.to_string())),
            ),
        };
        Ok(ExperimentConfig {
            dataset,
            data_dir,
            synthetic,
            model: ExperimentConfig::default_model(dataset),
            partition,
            algorithm: AlgorithmConfig::new(algorithm, training),
            seed: self.seed.unwrap_or(0),
            eval_every: self.eval_every.unwrap_or(10),
            eval_mode: match self.eval_mode.unwrap_or(EvalName::Global) {
                EvalName::Global => EvalMode::GlobalTest,
                EvalName::Client => EvalMode::ClientHoldout,
            },
            eval_limit: self.eval_limit,
            output: self.output.clone(),
        })
    }

    /// Every setting spelled out, suitable for `--config`.
    pub fn resolved_file(&self, cfg: &ExperimentConfig) -> String {
        let t = &cfg.algorithm.training;
        let a = &cfg.algorithm.algorithm;
        let mut out = Self {
            dataset: self.dataset.or(Some(DatasetName::Mnist)),
            data_dir: cfg.data_dir.clone(),
            algorithm: Some(self.algorithm_name()),
            sparsity: Some(a.sparsity()),
            prox: Some(a.mu()),
            rounds: Some(t.rounds),
            clients_per_round: Some(t.clients_per_round),
            epochs: Some(t.local_epochs),
            batch_size: Some(t.batch_size),
            learning_rate: Some(t.learning_rate),
            weight_decay: Some(t.weight_decay),
            bfloat16: Some(t.upload == Quantizer::BFloat16),
            clients: Some(cfg.partition.num_clients()),
            seed: Some(cfg.seed),
            eval_every: Some(cfg.eval_every),
            eval_mode: Some(match cfg.eval_mode {
                EvalMode::GlobalTest => EvalName::Global,
                EvalMode::ClientHoldout => EvalName::Client,
            }),
            eval_limit: cfg.eval_limit,
            ..Self::default()
        };
        if let Algorithm::FedAvgM { momentum } = a {
            out.momentum = Some(*momentum);
        }
        if let Some(s) = a.schedule() {
            out.readjustment_ratio = Some(s.alpha);
            out.rounds_between_readjustments = Some(s.rounds_between);
            out.readjustment_end = Some(s.end_round);
            out.readjustment_epoch = Some(s.readjust_epoch);
        }
        if let Algorithm::PruneFl { rounds_between, .. } = a {
            out.rounds_between_readjustments = Some(*rounds_between);
        }
        match cfg.partition {
            PartitionSpec::Pathological {
                classes_per_client,
                images_per_class,
                ..
            } => {
                out.partition = Some(PartitionName::Pathological);
                out.classes_per_client = Some(classes_per_client);
                out.images_per_class = Some(images_per_class);
            }
            PartitionSpec::Dirichlet { beta, .. } => {
                out.partition = Some(PartitionName::Dirichlet);
                out.dirichlet_beta = Some(beta);
            }
        }
        toml::to_string(&out).expect("plain settings serialize")
    }
}

pub const DEFAULT_SPARSITY: f64 = 0.8;
pub const DEFAULT_ALPHA: f64 = 0.05;
