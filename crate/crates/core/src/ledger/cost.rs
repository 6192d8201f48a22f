//! Transfer metering and the closed-form per-round cost expressions.

use crate::ledger::Quantizer;

/// Bits for one sparse model transfer: retained values at the quantizer's
/// width, plus a one-bit-per-parameter bitmap when the mask is sent.
pub fn meter_sparse_transfer(n_params: u64, n_retained: u64, mask_included: bool, quantizer: Quantizer) -> u64 {
    debug_assert!(n_retained <= n_params);
    n_retained * quantizer.bits_per_value() + if mask_included { n_params } else { 0 }
}

/// Bits for a dense transfer of `n_params` values.
pub fn meter_dense_transfer(n_params: u64, quantizer: Quantizer) -> u64 {
    n_params * quantizer.bits_per_value()
}

/// Which closed-form average to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostRegime {
    /// FedDST while readjustments still happen (round < R_end).
    FedDstReadjusting,
    /// FedDST after R_end: values only.
    FedDstSettled,
    /// PruneFL with dense gradient uploads every ΔR rounds.
    PruneFl,
}

/// Average bits per client per round at 32-bit values.
pub fn closed_form_average(sparsity: f64, rounds_between: u32, n: f64, regime: CostRegime) -> f64 {
    let values = 32.0 * (1.0 - sparsity);
    let dr = f64::from(rounds_between);
    match regime {
        CostRegime::FedDstReadjusting => (values + 1.0 / dr) * n,
        CostRegime::FedDstSettled => values * n,
        CostRegime::PruneFl => (values + 32.0 / dr) * n,
    }
}

/// Largest single upload, in bits, at 32-bit values.
pub fn closed_form_maximum(sparsity: f64, n: f64, regime: CostRegime) -> f64 {
    let values = 32.0 * (1.0 - sparsity);
    match regime {
        CostRegime::FedDstReadjusting => (values + 1.0) * n,
        CostRegime::FedDstSettled => values * n,
        CostRegime::PruneFl => (values + 32.0) * n,
    }
}
