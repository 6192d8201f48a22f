//! Experiment runner: dataset loading, partitioning, the round loop with
//! periodic evaluation, metrics files and the best-accuracy-at-upload-cap
//! summary.

mod metrics;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::info;

use crate::data::{load_cifar10_bin, load_idx, partition, split_holdout, synthetic_blobs, ClientShard, LabeledDataset, PartitionSpec};
use crate::error::{Error, Result};
use crate::ledger::CommLedger;
use crate::nn::{build_model, Arch, LayerSpec, Network};
use crate::protocol::{evaluate, evaluate_clients, AlgorithmConfig, Server};
use crate::rng::{stream_rng, Stream};
use crate::sparsity::SparseModel;

pub use metrics::{
    best_at_caps, cap_statistics, default_caps, emit_metrics, read_metrics, write_metrics, CapStats, RoundMetrics,
    METRICS_HEADER,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetId {
    Mnist,
    Cifar10,
    Synthetic,
}

impl FromStr for DatasetId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mnist" => Ok(DatasetId::Mnist),
            "cifar10" => Ok(DatasetId::Cifar10),
            "synthetic" => Ok(DatasetId::Synthetic),
            other => Err(Error::config(format!("unknown dataset '{other}'"))),
        }
    }
}

impl fmt::Display for DatasetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DatasetId::Mnist => "mnist",
            DatasetId::Cifar10 => "cifar10",
            DatasetId::Synthetic => "synthetic",
        })
    }
}

impl DatasetId {
    /// Readjustment horizon R_end used when none is given.
    pub fn default_end_round(self) -> usize {
        match self {
            DatasetId::Cifar10 => 1000,
            _ => 200,
        }
    }

    /// Rounds between readjustments ΔR used when none is given.
    pub fn default_rounds_between(self) -> usize {
        match self {
            DatasetId::Cifar10 => 15,
            _ => 10,
        }
    }
}

/// Gaussian-blob corpus parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub dims: [usize; 3],
    pub separation: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            num_classes: 10,
            train_per_class: 200,
            test_per_class: 50,
            dims: [1, 8, 8],
            separation: 1.0,
        }
    }
}

/// Network trained by the experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelSpec {
    Arch(Arch),
    /// Flatten, one hidden ReLU layer, linear classifier.
    Mlp { hidden: usize },
}

impl ModelSpec {
    pub fn build(self, input_shape: &[usize], num_classes: usize, seed: u64) -> Result<Network<f32>> {
        let mut rng = stream_rng(seed, Stream::ModelInit, 0, 0);
        match self {
            ModelSpec::Arch(arch) => build_model(arch, &mut rng),
            ModelSpec::Mlp { hidden } => {
                let d = input_shape.iter().product();
                Network::new(
                    input_shape.to_vec(),
                    vec![
                        LayerSpec::Flatten,
                        LayerSpec::linear(d, hidden),
                        LayerSpec::ReLU,
                        LayerSpec::linear(hidden, num_classes),
                    ],
                    &mut rng,
                )
            }
        }
    }
}

/// Where accuracy is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    /// The dataset's test split.
    GlobalTest,
    /// A 20% hold-out of every client shard, averaged with equal client
    /// weight.
    ClientHoldout,
}

pub const HOLDOUT_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: DatasetId,
    /// Directory holding the dataset files (unused for synthetic data).
    pub data_dir: Option<PathBuf>,
    pub synthetic: SyntheticSpec,
    pub model: ModelSpec,
    pub partition: PartitionSpec,
    pub algorithm: AlgorithmConfig,
    pub seed: u64,
    /// Evaluate every this many rounds; the final round is always evaluated.
    pub eval_every: usize,
    pub eval_mode: EvalMode,
    /// Evaluate on this many evenly strided test samples instead of all.
    pub eval_limit: Option<usize>,
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn default_model(dataset: DatasetId) -> ModelSpec {
        match dataset {
            DatasetId::Mnist => ModelSpec::Arch(Arch::MnistCnn),
            DatasetId::Cifar10 => ModelSpec::Arch(Arch::Cifar10Cnn),
            DatasetId::Synthetic => ModelSpec::Mlp { hidden: 32 },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.eval_every == 0 {
            return Err(Error::config("evaluation cadence must be positive"));
        }
        if self.eval_limit == Some(0) {
            return Err(Error::config("evaluation limit must be positive"));
        }
        if let Some(dir) = &self.data_dir {
            if self.dataset != DatasetId::Synthetic && !dir.is_dir() {
                return Err(Error::config(format!("data directory {} does not exist", dir.display())));
            }
        }
        self.algorithm.validate(self.partition.num_clients())
    }

    /// Loads (or generates) the train and test sets.
    pub fn load_data(&self) -> Result<ExperimentData> {
        let dir = || {
            self.data_dir
                .as_deref()
                .ok_or_else(|| Error::config(format!("dataset {} needs a data directory", self.dataset)))
        };
        match self.dataset {
            DatasetId::Mnist => load_mnist(dir()?),
            DatasetId::Cifar10 => load_cifar10(dir()?),
            DatasetId::Synthetic => synthetic_split(&self.synthetic, self.seed),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentData {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
}

/// The four standard IDX files in `dir`.
pub fn load_mnist(dir: &Path) -> Result<ExperimentData> {
    Ok(ExperimentData {
        train: load_idx(dir.join("train-images-idx3-ubyte"), dir.join("train-labels-idx1-ubyte"))?,
        test: load_idx(dir.join("t10k-images-idx3-ubyte"), dir.join("t10k-labels-idx1-ubyte"))?,
    })
}

/// `data_batch_1.bin` .. `data_batch_5.bin` and `test_batch.bin` in `dir`.
pub fn load_cifar10(dir: &Path) -> Result<ExperimentData> {
    let train: Vec<PathBuf> = (1..=5).map(|i| dir.join(format!("data_batch_{i}.bin"))).collect();
    Ok(ExperimentData {
        train: load_cifar10_bin(&train)?,
        test: load_cifar10_bin(&[dir.join("test_batch.bin")])?,
    })
}

/// Draws train and test blobs from the same class means.
pub fn synthetic_split(spec: &SyntheticSpec, seed: u64) -> Result<ExperimentData> {
    let per = spec.train_per_class + spec.test_per_class;
    if spec.test_per_class == 0 {
        return Err(Error::config("synthetic test split must be non-empty"));
    }
    let all = synthetic_blobs(spec.num_classes, per, spec.dims, spec.separation, seed)?;
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for k in 0..spec.num_classes {
        train.extend(k * per..k * per + spec.train_per_class);
        test.extend(k * per + spec.train_per_class..(k + 1) * per);
    }
    Ok(ExperimentData {
        train: all.subset(&train),
        test: all.subset(&test),
    })
}

/// Everything a finished run produced.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub metrics: Vec<RoundMetrics>,
    pub model: SparseModel,
    pub ledger: CommLedger,
}

fn strided(len: usize, limit: Option<usize>) -> Option<Vec<usize>> {
    let k = limit?;
    if k >= len {
        return None;
    }
    Some((0..k).map(|i| i * len / k).collect())
}

/// Partitions, trains for the configured rounds and evaluates every
/// `eval_every` rounds and at the end. Deterministic for a fixed config.
pub fn run_experiment(cfg: &ExperimentConfig, data: &ExperimentData) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let shards = partition(&data.train, cfg.partition, cfg.seed)?;
    let (train_shards, holdout): (Vec<ClientShard>, Vec<ClientShard>) = match cfg.eval_mode {
        EvalMode::GlobalTest => (shards, Vec::new()),
        EvalMode::ClientHoldout => shards
            .iter()
            .map(|s| split_holdout(s, HOLDOUT_FRACTION, cfg.seed))
            .unzip(),
    };
    let net = cfg
        .model
        .build(data.train.sample_shape(), data.train.num_classes(), cfg.seed)?;
    let mut server = Server::new(cfg.algorithm, net, cfg.seed)?;
    let eval_idx = strided(data.test.len(), cfg.eval_limit);
    let prunable = server.model.mask.len().max(1) as f64;
    let rounds = cfg.algorithm.training.rounds;

    let mut metrics = Vec::new();
    for _ in 0..rounds {
        let out = server.run_round(&data.train, &train_shards)?;
        if out.round % cfg.eval_every != 0 && out.round != rounds {
            continue;
        }
        let e = match cfg.eval_mode {
            EvalMode::GlobalTest => evaluate(&server.model, &data.test, eval_idx.as_deref())?,
            EvalMode::ClientHoldout => evaluate_clients(&server.model, &data.train, &holdout)?,
        };
        let m = RoundMetrics {
            round: out.round,
            alpha_r: out.alpha_r,
            accuracy: e.accuracy,
            loss: e.loss,
            upload_bits_cum: server.ledger.upload_total(),
            download_bits_cum: server.ledger.download_total(),
            mask_flip_frac: out.mask_flips as f64 / prunable,
            failed_clients: out.failed_clients,
        };
        info!(
            "{} seed {} round {}: accuracy {:.4}, loss {:.4}, upload {} bits",
            cfg.algorithm.algorithm, cfg.seed, m.round, m.accuracy, m.loss, m.upload_bits_cum
        );
        metrics.push(m);
    }
    if let Some(path) = &cfg.output {
        emit_metrics(&metrics, path)?;
    }
    Ok(ExperimentOutcome {
        metrics,
        model: server.model,
        ledger: server.ledger,
    })
}

/// Per-seed metrics and best-at-cap statistics across seeds.
#[derive(Debug, Clone)]
pub struct MultiSeedReport {
    pub seeds: Vec<u64>,
    pub per_seed: Vec<Vec<RoundMetrics>>,
    pub stats: Vec<CapStats>,
}

/// Runs `cfg` once per seed (ignoring `cfg.seed` and `cfg.output`) and
/// summarizes best-at-cap accuracy at `caps_bytes`.
pub fn run_multi_seed(
    cfg: &ExperimentConfig,
    data: &ExperimentData,
    seeds: &[u64],
    caps_bytes: &[u64],
) -> Result<MultiSeedReport> {
    if seeds.is_empty() {
        return Err(Error::config("need at least one seed"));
    }
    let mut per_seed = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let run = ExperimentConfig {
            seed,
            output: None,
            ..cfg.clone()
        };
        per_seed.push(run_experiment(&run, data)?.metrics);
    }
    let stats = cap_statistics(&per_seed, caps_bytes)?;
    Ok(MultiSeedReport {
        seeds: seeds.to_vec(),
        per_seed,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{Algorithm, TrainingConfig};
    use crate::sparsity::ReadjustmentSchedule;

    fn small(algorithm: Algorithm, seed: u64) -> ExperimentConfig {
        ExperimentConfig {
            dataset: DatasetId::Synthetic,
            data_dir: None,
            synthetic: SyntheticSpec {
                num_classes: 4,
                train_per_class: 40,
                test_per_class: 10,
                dims: [1, 3, 3],
                separation: 2.0,
            },
            model: ModelSpec::Mlp { hidden: 8 },
            partition: PartitionSpec::Pathological {
                num_clients: 8,
                classes_per_client: 2,
                images_per_class: 10,
            },
            algorithm: AlgorithmConfig::new(
                algorithm,
                TrainingConfig {
                    rounds: 6,
                    clients_per_round: 4,
                    local_epochs: 2,
                    batch_size: 8,
                    ..TrainingConfig::default()
                },
            ),
            seed,
            eval_every: 4,
            eval_mode: EvalMode::GlobalTest,
            eval_limit: None,
            output: None,
        }
    }

    fn feddst() -> Algorithm {
        Algorithm::FedDst {
            sparsity: 0.5,
            schedule: ReadjustmentSchedule {
                rounds_between: 2,
                end_round: 200,
                alpha: 0.2,
                readjust_epoch: 1,
            },
        }
    }

    #[test]
    fn evaluates_on_cadence_and_final_round() {
        let cfg = small(feddst(), 1);
        let data = cfg.load_data().unwrap();
        let out = run_experiment(&cfg, &data).unwrap();
        let rounds: Vec<usize> = out.metrics.iter().map(|m| m.round).collect();
        assert_eq!(rounds, vec![4, 6]);
        assert!(out.metrics.windows(2).all(|w| w[0].upload_bits_cum <= w[1].upload_bits_cum));
        assert_eq!(out.metrics[1].upload_bits_cum, out.ledger.upload_total());
    }

    #[test]
    fn same_seed_same_file() {
        let dir = tempfile::tempdir().unwrap();
        let data = small(feddst(), 3).load_data().unwrap();
        let mut texts = Vec::new();
        for name in ["a.csv", "b.csv"] {
            let cfg = ExperimentConfig {
                output: Some(dir.path().join(name)),
                ..small(feddst(), 3)
            };
            run_experiment(&cfg, &data).unwrap();
            texts.push(std::fs::read(dir.path().join(name)).unwrap());
        }
        assert_eq!(texts[0], texts[1]);
    }

    #[test]
    fn client_holdout_mode_runs() {
        let cfg = ExperimentConfig {
            eval_mode: EvalMode::ClientHoldout,
            ..small(Algorithm::FedAvg, 2)
        };
        let data = cfg.load_data().unwrap();
        let out = run_experiment(&cfg, &data).unwrap();
        assert!(out.metrics.iter().all(|m| (0.0..=1.0).contains(&m.accuracy)));
    }

    #[test]
    fn multi_seed_matches_recomputation() {
        let cfg = small(Algorithm::RandomMask { sparsity: 0.5 }, 0);
        let data = cfg.load_data().unwrap();
        let report = run_multi_seed(&cfg, &data, &[4, 5], &[u64::MAX]).unwrap();
        let best: Vec<f64> = report
            .per_seed
            .iter()
            .map(|s| s.iter().map(|m| m.accuracy).fold(f64::MIN, f64::max))
            .collect();
        let mean = (best[0] + best[1]) / 2.0;
        let std = ((best[0] - mean).powi(2) + (best[1] - mean).powi(2)).sqrt() / 2f64.sqrt();
        assert!((report.stats[0].mean.unwrap() - mean).abs() < 1e-12);
        assert!((report.stats[0].std.unwrap() - std).abs() < 1e-12);
        let same = run_multi_seed(&cfg, &data, &[4, 4], &[u64::MAX]).unwrap();
        assert_eq!(same.stats[0].std, Some(0.0));
    }
}
