//! Structured results of a solve run.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::energy::{edp, energy_total, EnergyBreakdown};
use crate::error::{Error, Result};
use crate::model::{GemmInstance, HardwareSpec, Mapping};
use crate::solver::{Certificate, Solution, SolveOptions};
use crate::workload::case_edp;

pub const RUN_SCHEMA: &str = "gemm-mapper/run/v1";
pub const TOOL_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

/// Result for one GEMM type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunRecord {
    pub workload_id: String,
    pub hardware_id: String,
    pub label: String,
    pub weight: u64,
    /// Extents that were solved, after any padding.
    pub dims: [u64; 3],
    /// Extents before padding, when padding changed them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub requested_dims: Option<[u64; 3]>,
    pub mapping: Mapping,
    pub breakdown: EnergyBreakdown,
    /// s
    pub delay_s: f64,
    /// pJ*s
    pub edp: f64,
    pub certificate: Certificate,
}

impl RunRecord {
    pub fn new(workload_id: &str, hw: &HardwareSpec, requested: &GemmInstance, solved: &GemmInstance, solution: Solution) -> Self {
        let (delay_s, edp) = edp(&solution.breakdown, hw);
        RunRecord {
            workload_id: workload_id.to_owned(),
            hardware_id: hw.name.clone(),
            label: solved.label.clone(),
            weight: solved.weight,
            dims: solved.dims,
            requested_dims: (requested.dims != solved.dims).then_some(requested.dims),
            mapping: solution.mapping,
            breakdown: solution.breakdown,
            delay_s,
            edp,
            certificate: solution.certificate,
        }
    }

    pub fn gemm(&self) -> Result<GemmInstance> {
        GemmInstance::with_weight(self.label.clone(), self.dims[0], self.dims[1], self.dims[2], self.weight)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunOptions {
    pub solve: SolveOptions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pad_slack: Option<f64>,
}

/// All GEMM records of one workload on one hardware instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseRun {
    pub schema: String,
    pub tool_version: String,
    pub workload_id: String,
    pub hardware_id: String,
    pub hardware_digest: String,
    pub workload_digest: String,
    pub hardware: HardwareSpec,
    pub options: RunOptions,
    /// Sorted by label.
    pub records: Vec<RunRecord>,
    /// Occurrence-weighted EDP sum, pJ*s.
    pub case_edp: f64,
    pub wall_time_s: f64,
}

/// Hex SHA-256 of the compact JSON form of `value`.
pub fn digest<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("serializable");
    hex::encode(Sha256::digest(bytes))
}

impl CaseRun {
    pub fn new(workload_id: &str, gemms: &[GemmInstance], hw: &HardwareSpec, options: RunOptions, mut records: Vec<RunRecord>, wall_time_s: f64) -> Result<Self> {
        records.sort_by(|a, b| a.label.cmp(&b.label));
        let rows: Vec<_> = records
            .iter()
            .map(|r| Ok((r.gemm()?, r.breakdown.e_total_abs, r.delay_s)))
            .collect::<Result<_>>()?;
        let case = case_edp(&rows, None)?;
        Ok(CaseRun {
            schema: RUN_SCHEMA.into(),
            tool_version: TOOL_VERSION.into(),
            workload_id: workload_id.to_owned(),
            hardware_id: hw.name.clone(),
            hardware_digest: digest(hw),
            workload_digest: digest(&gemms),
            hardware: hw.clone(),
            options,
            records,
            case_edp: case.case_edp,
            wall_time_s,
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("serializable");
        s.push('\n');
        s
    }

    pub fn from_json(path: &Path, text: &str) -> Result<Self> {
        let run: CaseRun = serde_json::from_str(text).map_err(|e| Error::config(path, format!("schema violation: {e}")))?;
        if run.schema != RUN_SCHEMA {
            return Err(Error::config(path, format!("field `schema`: expected \"{RUN_SCHEMA}\", got \"{}\"", run.schema)));
        }
        Ok(run)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::config(path, format!("cannot read: {e}")))?;
        CaseRun::from_json(path, &text)
    }

    /// Copy with every wall-clock field zeroed.
    pub fn without_wall_time(&self) -> CaseRun {
        let mut c = self.clone();
        c.wall_time_s = 0.0;
        for r in &mut c.records {
            r.certificate.wall_time_s = 0.0;
        }
        c
    }

    /// Re-evaluates each stored mapping on the stored hardware; returns the
    /// labels whose energy does not reproduce bit-exactly.
    pub fn replay(&self) -> Result<Vec<String>> {
        let mut bad = Vec::new();
        for r in &self.records {
            let e = energy_total(&r.mapping, &r.gemm()?, &self.hardware, &self.options.solve.eval)?;
            if e.e_total_norm != r.breakdown.e_total_norm || e.e_total_abs != r.breakdown.e_total_abs {
                bad.push(r.label.clone());
            }
        }
        Ok(bad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::solve;
    use crate::testutil::distinct_hw;

    fn run() -> CaseRun {
        let hw = distinct_hw();
        let gemms = vec![
            GemmInstance::with_weight("b", 8, 4, 2, 3).unwrap(),
            GemmInstance::with_weight("a", 4, 4, 4, 1).unwrap(),
        ];
        let opts = RunOptions {
            solve: SolveOptions::default(),
            pad_slack: None,
        };
        let records = gemms
            .iter()
            .map(|g| RunRecord::new("w", &hw, g, g, solve(g, &hw, &opts.solve).unwrap()))
            .collect();
        CaseRun::new("w", &gemms, &hw, opts, records, 0.5).unwrap()
    }

    #[test]
    fn records_sorted_and_case_edp_summed() {
        let r = run();
        assert_eq!(r.records[0].label, "a");
        let sum: f64 = r.records.iter().map(|x| x.weight as f64 * x.edp).sum();
        assert!((sum - r.case_edp).abs() <= 1e-12 * sum);
        assert_eq!(r.hardware_digest.len(), 64);
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let r = run();
        let back = CaseRun::from_json(Path::new("mem"), &r.to_json()).unwrap();
        assert_eq!(back, r);
        assert!(back.replay().unwrap().is_empty());
        assert_eq!(back.to_json(), r.to_json());
    }

    #[test]
    fn wall_time_is_the_only_run_dependent_field() {
        let a = run().without_wall_time();
        let b = run().without_wall_time();
        assert_eq!(a.to_json(), b.to_json());
    }

    #[test]
    fn digest_is_stable() {
        assert_eq!(digest(&[1u64, 2, 3]), digest(&[1u64, 2, 3]));
        assert_ne!(digest(&[1u64, 2, 3]), digest(&[1u64, 2, 4]));
    }
}
