//! Extent padding for shapes with few divisors.

use crate::error::{Error, Result};
use crate::model::{divisors, GemmInstance, MAX_EXTENT};

/// Picks the extent in `[n, ceil(slack * n)]` with the most divisors,
/// preferring the smallest on ties.
pub fn pad_extent(n: u64, slack: f64) -> Result<u64> {
    if !(slack >= 1.0 && slack.is_finite()) {
        return Err(Error::InvalidSpec(format!("padding slack must be a finite factor >= 1, got {slack}")));
    }
    let hi = ((slack * n as f64).ceil() as u64).clamp(n, MAX_EXTENT.max(n));
    let mut best = (divisors(n)?.len(), n);
    for cand in n + 1..=hi {
        let d = divisors(cand)?.len();
        if d > best.0 {
            best = (d, cand);
        }
    }
    Ok(best.1)
}

/// Pads every extent of `gemm`; the padded MACs are real work and are counted.
pub fn pad_workload(gemm: &GemmInstance, slack: f64) -> Result<GemmInstance> {
    let [x, y, z] = gemm.dims.map(|n| pad_extent(n, slack));
    GemmInstance::with_weight(gemm.label.clone(), x?, y?, z?, gemm.weight)
}
