use rayon::prelude::*;
use serde::Serialize;

use super::{mean, pairwise_sum, sample_variance};
use crate::error::{Error, Result};
use crate::homodyne::PulseRecord;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VarianceTrace {
    pub block_index: usize,
    /// Mean recorded LO phase over the block.
    pub phase_mid: f64,
    pub variance_snu: f64,
    pub stderr_snu: f64,
    /// All samples in the block were identical.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockVariances {
    pub block_size: usize,
    pub traces: Vec<VarianceTrace>,
    /// Records in the trailing partial block, not analysed.
    pub dropped_tail: usize,
}

impl BlockVariances {
    pub fn degenerate_blocks(&self) -> Vec<usize> {
        self.traces.iter().filter(|t| t.degenerate).map(|t| t.block_index).collect()
    }

    /// Mean block variance, pairwise reduction across blocks.
    pub fn mean_variance(&self) -> f64 {
        let v: Vec<f64> = self.traces.iter().map(|t| t.variance_snu).collect();
        pairwise_sum(&v) / v.len() as f64
    }
}

/// Unbiased variance of non-overlapping fixed-size blocks, converted to SNU
/// by dividing by `snl_raw` (raw variance of one SNU).
pub fn block_variances(records: &[PulseRecord], block_size: usize, snl_raw: f64) -> Result<BlockVariances> {
    if records.is_empty() {
        return Err(Error::InsufficientData("empty pulse stream".into()));
    }
    if block_size < 2 {
        return Err(Error::param("block_size", "must be >= 2"));
    }
    if !(snl_raw > 0.0 && snl_raw.is_finite()) {
        return Err(Error::param("snl_raw", format!("must be > 0, got {snl_raw}")));
    }
    if records.len() < block_size {
        return Err(Error::InsufficientData(format!(
            "stream of {} records is shorter than one block of {block_size}",
            records.len()
        )));
    }
    let n_blocks = records.len() / block_size;
    let factor = (2.0 / (block_size as f64 - 1.0)).sqrt();
    let traces = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let block = &records[b * block_size..(b + 1) * block_size];
            let values: Vec<f64> = block.iter().map(|r| r.value).collect();
            let phases: Vec<f64> = block.iter().map(|r| r.lo_phase).collect();
            let variance_snu = sample_variance(&values) / snl_raw;
            VarianceTrace {
                block_index: b,
                phase_mid: mean(&phases),
                variance_snu,
                stderr_snu: variance_snu * factor,
                degenerate: variance_snu == 0.0,
            }
        })
        .collect();
    Ok(BlockVariances {
        block_size,
        traces,
        dropped_tail: records.len() - n_blocks * block_size,
    })
}
