use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// One evaluated round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundMetrics {
    pub round: usize,
    pub alpha_r: f64,
    pub accuracy: f64,
    pub loss: f64,
    pub upload_bits_cum: u64,
    pub download_bits_cum: u64,
    /// Fraction of prunable positions whose server mask bit changed.
    pub mask_flip_frac: f64,
    pub failed_clients: usize,
}

pub const METRICS_HEADER: &str =
    "round,alpha_r,accuracy,loss,upload_bits_cum,download_bits_cum,mask_flip_frac,failed_clients";

/// Writes the header and one row per entry. Floats use the shortest
/// representation that round-trips exactly.
pub fn write_metrics<W: Write>(series: &[RoundMetrics], mut out: W) -> Result<()> {
    if series.is_empty() {
        return Err(Error::contract("metrics series is empty"));
    }
    writeln!(out, "{METRICS_HEADER}")?;
    for m in series {
        writeln!(
            out,
            "{},{:?},{:?},{:?},{},{},{:?},{}",
            m.round,
            m.alpha_r,
            m.accuracy,
            m.loss,
            m.upload_bits_cum,
            m.download_bits_cum,
            m.mask_flip_frac,
            m.failed_clients
        )?;
    }
    out.flush()?;
    Ok(())
}

pub fn emit_metrics(series: &[RoundMetrics], path: impl AsRef<Path>) -> Result<()> {
    write_metrics(series, BufWriter::new(File::create(path)?))
}

/// Parses a file written by [`write_metrics`].
pub fn read_metrics(text: &str) -> Result<Vec<RoundMetrics>> {
    let mut lines = text.lines();
    if lines.next() != Some(METRICS_HEADER) {
        return Err(Error::format(0, "missing metrics header"));
    }
    let mut offset = METRICS_HEADER.len() as u64 + 1;
    let mut out = Vec::new();
    for line in lines {
        let bad = || Error::format(offset, format!("malformed metrics row '{line}'"));
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return Err(bad());
        }
        out.push(RoundMetrics {
            round: f[0].parse().map_err(|_| bad())?,
            alpha_r: f[1].parse().map_err(|_| bad())?,
            accuracy: f[2].parse().map_err(|_| bad())?,
            loss: f[3].parse().map_err(|_| bad())?,
            upload_bits_cum: f[4].parse().map_err(|_| bad())?,
            download_bits_cum: f[5].parse().map_err(|_| bad())?,
            mask_flip_frac: f[6].parse().map_err(|_| bad())?,
            failed_clients: f[7].parse().map_err(|_| bad())?,
        });
        offset += line.len() as u64 + 1;
    }
    Ok(out)
}

/// Best accuracy among evaluated rounds whose cumulative upload fits in
/// each byte budget; `None` where no evaluation fits.
pub fn best_at_caps(series: &[RoundMetrics], caps_bytes: &[u64]) -> Result<Vec<(u64, Option<f64>)>> {
    if caps_bytes.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::config("upload caps must be sorted ascending"));
    }
    Ok(caps_bytes
        .iter()
        .map(|&cap| {
            let best = series
                .iter()
                .filter(|m| m.upload_bits_cum <= cap.saturating_mul(8))
                .map(|m| m.accuracy)
                .fold(None, |b: Option<f64>, a| Some(b.map_or(a, |b| b.max(a))));
            (cap, best)
        })
        .collect())
}

/// Mean and population standard deviation of best-at-cap accuracy over
/// seeds. Absent unless every seed has a value at that cap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapStats {
    pub cap_bytes: u64,
    pub mean: Option<f64>,
    pub std: Option<f64>,
}

pub fn cap_statistics(per_seed: &[Vec<RoundMetrics>], caps_bytes: &[u64]) -> Result<Vec<CapStats>> {
    if per_seed.is_empty() {
        return Err(Error::contract("need at least one seed"));
    }
    let tables = per_seed
        .iter()
        .map(|s| best_at_caps(s, caps_bytes))
        .collect::<Result<Vec<_>>>()?;
    Ok(caps_bytes
        .iter()
        .enumerate()
        .map(|(i, &cap)| {
            let vals: Option<Vec<f64>> = tables.iter().map(|t| t[i].1).collect();
            let (mean, std) = match vals {
                Some(v) => {
                    let n = v.len() as f64;
                    let mean = v.iter().sum::<f64>() / n;
                    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
                    (Some(mean), Some(var.sqrt()))
                }
                None => (None, None),
            };
            CapStats { cap_bytes: cap, mean, std }
        })
        .collect())
}

/// Evenly spaced caps up to the largest cumulative upload across runs.
pub fn default_caps(per_seed: &[Vec<RoundMetrics>], count: usize) -> Vec<u64> {
    let max_bits = per_seed
        .iter()
        .flat_map(|s| s.iter().map(|m| m.upload_bits_cum))
        .max()
        .unwrap_or(0);
    let max_bytes = max_bits.div_ceil(8);
    (1..=count as u64).map(|i| max_bytes * i / count as u64).collect()
}
