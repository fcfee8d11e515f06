//! Verification harness: closed form against the traversal oracle, and the
//! solver against brute force.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::{energy_unchecked, traffic_src1, traffic_src3, traffic_src4, EvalOptions};
use crate::error::Result;
use crate::model::{divisor_chains, is_feasible, Axis, BypassFreedom, Chain, ConfigKey, Ert, GemmInstance, HardwareSpec};
use crate::oracle::{exhaustive_optimum, simulate_traversal, OrthoOrder};
use crate::solver::{solve, SolveOptions};

/// Relative energy tolerance between the closed form and the oracle.
pub const ENERGY_RTOL: f64 = 1e-9;

/// Four PEs, roomy buffers and pairwise unrelated energy constants.
pub fn toy_hardware() -> HardwareSpec {
    HardwareSpec {
        name: "toy-4pe".into(),
        num_pe: 4,
        cap_sram: 1 << 16,
        cap_rf: 1 << 10,
        ert: Ert {
            dram_read: 211.3,
            dram_write: 237.9,
            sram_read: 7.13,
            sram_write: 8.41,
            rf_read: 0.517,
            rf_write: 0.643,
        },
        e_macc: 0.311,
        e_spatial_reduce: 0.173,
        leak_sram: 0.029,
        leak_rf: 0.0031,
        cycle_period: 1.7e-9,
        bypass_freedom: BypassFreedom::default(),
    }
}

/// `1, 2, 4, ..` up to and including `max` (rounded down to a power of two).
pub fn power_of_two_extents(max: u64) -> Vec<u64> {
    let mut out = vec![1];
    while out.last().unwrap() * 2 <= max {
        out.push(out.last().unwrap() * 2);
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub gemms: u64,
    pub mappings: u64,
    pub count_mismatches: u64,
    pub energy_mismatches: u64,
    pub max_rel_err: f64,
    /// First few failures, in sweep order.
    pub failures: Vec<String>,
}

impl SweepReport {
    pub fn passed(&self) -> bool {
        self.mappings > 0 && self.count_mismatches == 0 && self.energy_mismatches == 0
    }

    fn merge(mut self, other: SweepReport) -> SweepReport {
        self.gemms += other.gemms;
        self.mappings += other.mappings;
        self.count_mismatches += other.count_mismatches;
        self.energy_mismatches += other.energy_mismatches;
        self.max_rel_err = self.max_rel_err.max(other.max_rel_err);
        self.failures.extend(other.failures);
        self.failures.truncate(MAX_LISTED_FAILURES);
        self
    }
}

const MAX_LISTED_FAILURES: usize = 20;

fn sweep_one(gemm: &GemmInstance, hw: &HardwareSpec, config: ConfigKey, chains: &[Vec<Chain>; 3]) -> Result<SweepReport> {
    let opts = EvalOptions::default();
    let mut r = SweepReport::default();
    for &cx in &chains[0] {
        for &cy in &chains[1] {
            for &cz in &chains[2] {
                let m = config.with_chains([cx, cy, cz]);
                if !is_feasible(&m, gemm, hw, opts.pe_constraint) {
                    continue;
                }
                r.mappings += 1;
                let tally = simulate_traversal(&m, gemm, OrthoOrder::Ascending)?;
                let counts_ok = tally.link_src1 == traffic_src1(&m, gemm)?
                    && tally.link_src3 == traffic_src3(&m, gemm)?
                    && tally.link_src4 == traffic_src4(gemm);
                let closed = energy_unchecked(&m, gemm, hw, &opts).e_total_abs;
                let walked = tally.energy(hw);
                let rel = if closed == 0.0 { walked.abs() } else { ((walked - closed) / closed).abs() };
                r.max_rel_err = r.max_rel_err.max(rel);
                if !counts_ok {
                    r.count_mismatches += 1;
                }
                if rel > ENERGY_RTOL {
                    r.energy_mismatches += 1;
                }
                if (!counts_ok || rel > ENERGY_RTOL) && r.failures.len() < MAX_LISTED_FAILURES {
                    r.failures.push(format!("{:?} {m:?}: oracle {walked} vs closed form {closed}", gemm.dims));
                }
            }
        }
    }
    Ok(r)
}

/// Compares traffic counts and energies for every feasible mapping of every
/// GEMM with extents drawn from `extents`. Work is sharded per (GEMM,
/// configuration) and merged in a fixed order.
pub fn oracle_sweep(hw: &HardwareSpec, extents: &[u64]) -> Result<SweepReport> {
    let mut gemms = Vec::new();
    for &x in extents {
        for &y in extents {
            for &z in extents {
                gemms.push(GemmInstance::new(format!("sweep-{x}x{y}x{z}"), x, y, z)?);
            }
        }
    }
    let configs = ConfigKey::enumerate(hw.bypass_freedom);
    let mut shards = Vec::new();
    for g in &gemms {
        let chains = [
            divisor_chains(g.dim_x())?,
            divisor_chains(g.dim_y())?,
            divisor_chains(g.dim_z())?,
        ];
        for &c in &configs {
            shards.push((g, c, chains.clone()));
        }
    }
    let parts: Vec<SweepReport> = shards
        .par_iter()
        .map(|(g, c, chains)| sweep_one(g, hw, *c, chains))
        .collect::<Result<_>>()?;
    let mut report = parts.into_iter().fold(SweepReport::default(), SweepReport::merge);
    report.gemms = gemms.len() as u64;
    Ok(report)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OptimalityReport {
    pub instances: u64,
    pub mismatches: u64,
    pub failures: Vec<String>,
}

impl OptimalityReport {
    pub fn passed(&self) -> bool {
        self.instances > 0 && self.mismatches == 0
    }
}

/// Instances whose mapping space stays below a million candidates on a
/// four-PE toy hardware with free bypass.
pub fn optimality_instances() -> Vec<GemmInstance> {
    let dims: [[u64; 3]; 24] = [
        [1, 1, 4],
        [1, 4, 1],
        [4, 1, 1],
        [2, 2, 1],
        [2, 2, 2],
        [4, 4, 4],
        [2, 4, 8],
        [8, 4, 2],
        [4, 8, 2],
        [8, 2, 4],
        [1, 8, 8],
        [8, 8, 1],
        [8, 1, 8],
        [3, 4, 6],
        [6, 4, 3],
        [12, 2, 4],
        [4, 12, 1],
        [2, 6, 10],
        [5, 4, 4],
        [16, 2, 2],
        [2, 16, 4],
        [6, 6, 2],
        [9, 4, 1],
        [4, 4, 3],
    ];
    dims.iter()
        .map(|d| GemmInstance::new(format!("opt-{}x{}x{}", d[0], d[1], d[2]), d[0], d[1], d[2]).expect("valid extents"))
        .collect()
}

/// Solves each instance and compares mapping and energy with brute force.
/// Certificates must close with a zero gap and replay bit-exactly.
pub fn solver_vs_exhaustive(hw: &HardwareSpec, gemms: &[GemmInstance], limit: u128) -> Result<OptimalityReport> {
    let opts = SolveOptions::default();
    let parts: Vec<Option<String>> = gemms
        .par_iter()
        .map(|g| -> Result<Option<String>> {
            let (m, e) = exhaustive_optimum(g, hw, &opts.eval, limit)?;
            let s = solve(g, hw, &opts)?;
            let replay = energy_unchecked(&s.mapping, g, hw, &opts.eval).e_total_norm;
            let ok = s.breakdown.e_total_norm == e.e_total_norm
                && s.mapping == m
                && s.certificate.gap == 0.0
                && replay == s.certificate.upper_bound;
            Ok((!ok).then(|| {
                format!(
                    "{}: solver {} ({:?}) gap {} vs exhaustive {} ({:?})",
                    g.label, s.breakdown.e_total_norm, s.mapping, s.certificate.gap, e.e_total_norm, m
                )
            }))
        })
        .collect::<Result<_>>()?;
    let failures: Vec<String> = parts.into_iter().flatten().collect();
    Ok(OptimalityReport {
        instances: gemms.len() as u64,
        mismatches: failures.len() as u64,
        failures,
    })
}

/// Which axes carry a given extent in a GEMM; helper for readable failure text.
pub fn describe(gemm: &GemmInstance) -> String {
    Axis::ALL.iter().map(|a| format!("{a}={}", gemm.dim(*a))).collect::<Vec<_>>().join(" ")
}
