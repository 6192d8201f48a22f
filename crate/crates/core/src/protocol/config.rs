use std::fmt;

use crate::error::{Error, Result};
use crate::ledger::Quantizer;
use crate::sparsity::ReadjustmentSchedule;

/// Federated training algorithm and its specific parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Algorithm {
    /// Dense averaging; clients use the shared momentum setting.
    FedAvg,
    /// Dense averaging with client-side momentum overriding the shared one.
    FedAvgM { momentum: f64 },
    /// Dense averaging with a proximal term `μ(θ_c − θ)` in local steps.
    FedProx { mu: f64 },
    /// Fixed random ERK mask.
    RandomMask { sparsity: f64 },
    /// Dynamic sparse training with client-side readjustment.
    FedDst {
        sparsity: f64,
        schedule: ReadjustmentSchedule,
    },
    FedDstProx {
        sparsity: f64,
        schedule: ReadjustmentSchedule,
        mu: f64,
    },
    /// Server-side mask selection from aggregated dense gradients every
    /// `rounds_between` rounds, scored by `g²/t` with a uniform `t`.
    PruneFl {
        sparsity: f64,
        rounds_between: usize,
        t_uniform: f64,
    },
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::FedAvg => "fedavg",
            Algorithm::FedAvgM { .. } => "fedavgm",
            Algorithm::FedProx { .. } => "fedprox",
            Algorithm::RandomMask { .. } => "randommask",
            Algorithm::FedDst { .. } => "feddst",
            Algorithm::FedDstProx { .. } => "feddst-prox",
            Algorithm::PruneFl { .. } => "prunefl",
        }
    }

    /// Global sparsity S of the model (0 for dense algorithms).
    pub fn sparsity(&self) -> f64 {
        match *self {
            Algorithm::RandomMask { sparsity }
            | Algorithm::FedDst { sparsity, .. }
            | Algorithm::FedDstProx { sparsity, .. }
            | Algorithm::PruneFl { sparsity, .. } => sparsity,
            _ => 0.0,
        }
    }

    /// Whether models travel with a mask and are aggregated sparsely.
    pub fn is_sparse(&self) -> bool {
        !matches!(
            self,
            Algorithm::FedAvg | Algorithm::FedAvgM { .. } | Algorithm::FedProx { .. }
        )
    }

    pub fn schedule(&self) -> Option<&ReadjustmentSchedule> {
        match self {
            Algorithm::FedDst { schedule, .. } | Algorithm::FedDstProx { schedule, .. } => Some(schedule),
            _ => None,
        }
    }

    pub fn mu(&self) -> f64 {
        match *self {
            Algorithm::FedProx { mu } | Algorithm::FedDstProx { mu, .. } => mu,
            _ => 0.0,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Settings shared by every algorithm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingConfig {
    pub rounds: usize,
    pub clients_per_round: usize,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub upload: Quantizer,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            rounds: 100,
            clients_per_round: 20,
            local_epochs: 5,
            batch_size: 32,
            learning_rate: 0.01,
            momentum: 0.9,
            weight_decay: 1e-3,
            upload: Quantizer::Float32,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlgorithmConfig {
    pub algorithm: Algorithm,
    pub training: TrainingConfig,
}

impl AlgorithmConfig {
    pub fn new(algorithm: Algorithm, training: TrainingConfig) -> Self {
        Self { algorithm, training }
    }

    /// Client momentum actually used in local SGD.
    pub fn client_momentum(&self) -> f64 {
        match self.algorithm {
            Algorithm::FedAvgM { momentum } => momentum,
            _ => self.training.momentum,
        }
    }

    /// Checks ranges against a population of `num_clients`.
    pub fn validate(&self, num_clients: usize) -> Result<()> {
        let t = &self.training;
        if t.rounds == 0 {
            return Err(Error::config("rounds must be positive"));
        }
        if t.clients_per_round == 0 || t.clients_per_round > num_clients {
            return Err(Error::config(format!(
                "clients per round {} outside [1, {num_clients}]",
                t.clients_per_round
            )));
        }
        if t.batch_size == 0 {
            return Err(Error::config("batch size must be positive"));
        }
        if !(t.learning_rate > 0.0) {
            return Err(Error::config(format!("learning rate {} must be positive", t.learning_rate)));
        }
        let momentum = self.client_momentum();
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::config(format!("momentum {momentum} outside [0, 1)")));
        }
        if !(t.weight_decay >= 0.0) {
            return Err(Error::config(format!("weight decay {} must be >= 0", t.weight_decay)));
        }
        let s = self.algorithm.sparsity();
        if !(0.0..1.0).contains(&s) {
            return Err(Error::config(format!("sparsity {s} outside [0, 1)")));
        }
        let mu = self.algorithm.mu();
        if !(mu >= 0.0) {
            return Err(Error::config(format!("proximal coefficient {mu} must be >= 0")));
        }
        if let Some(schedule) = self.algorithm.schedule() {
            schedule.validate(t.local_epochs)?;
        }
        if let Algorithm::PruneFl {
            rounds_between,
            t_uniform,
            ..
        } = self.algorithm
        {
            if rounds_between == 0 {
                return Err(Error::config("PruneFL rounds between readjustments must be positive"));
            }
            if !(t_uniform > 0.0) {
                return Err(Error::config("PruneFL time constant must be positive"));
            }
        }
        Ok(())
    }
}
