//! Communication accounting: per-client transfer records, value
//! quantization, closed-form cost expressions and FLOP counts.

mod cost;
mod flops;
mod quant;

use std::io::Write;

pub use cost::{closed_form_average, closed_form_maximum, meter_dense_transfer, meter_sparse_transfer, CostRegime};
pub use flops::flops_forward;
pub use quant::{bf16_truncate, Quantizer};

use crate::error::Result;

/// One client's traffic in one round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransferRecord {
    pub round: usize,
    pub client: usize,
    pub upload_bits: u64,
    pub download_bits: u64,
    /// The upload carried a mask bitmap.
    pub upload_mask: bool,
    /// The download carried a mask bitmap.
    pub download_mask: bool,
}

/// Append-only record of every client transfer plus running totals.
#[derive(Debug, Clone, Default)]
pub struct CommLedger {
    records: Vec<TransferRecord>,
    upload_total: u64,
    download_total: u64,
}

impl CommLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, rec: TransferRecord) {
        self.upload_total += rec.upload_bits;
        self.download_total += rec.download_bits;
        self.records.push(rec);
    }

    pub fn records(&self) -> &[TransferRecord] {
        &self.records
    }

    pub fn upload_total(&self) -> u64 {
        self.upload_total
    }

    pub fn download_total(&self) -> u64 {
        self.download_total
    }

    /// Records belonging to `round`.
    pub fn round_records(&self, round: usize) -> impl Iterator<Item = &TransferRecord> {
        self.records.iter().filter(move |r| r.round == round)
    }

    /// Writes one row per client-round with the columns
    /// `round,client,upload_bits,download_bits,upload_mask,download_mask`
    /// (mask flags as 0/1).
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "round,client,upload_bits,download_bits,upload_mask,download_mask")?;
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.round,
                r.client,
                r.upload_bits,
                r.download_bits,
                u8::from(r.upload_mask),
                u8::from(r.download_mask)
            )?;
        }
        Ok(())
    }
}
