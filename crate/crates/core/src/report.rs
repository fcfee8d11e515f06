//! CSV tables from solve runs.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::record::CaseRun;

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Invariant(format!("csv buffer: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Invariant(format!("csv encoding: {e}")))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Invariant(format!("csv write: {e}"))
}

/// One row per (run, GEMM) plus a `case` row per run, each EDP divided by the
/// baseline's EDP for the same label.
pub fn normalized_edp_csv(runs: &[CaseRun], baseline: &CaseRun) -> Result<String> {
    let base: HashMap<&str, f64> = baseline.records.iter().map(|r| (r.label.as_str(), r.edp)).collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["workload", "hardware", "label", "weight", "edp", "baseline_edp", "normalized_edp"])
        .map_err(csv_err)?;
    for run in runs {
        for r in &run.records {
            let b = *base
                .get(r.label.as_str())
                .ok_or_else(|| Error::InvalidSpec(format!("baseline has no GEMM labelled '{}'", r.label)))?;
            w.write_record([
                run.workload_id.clone(),
                run.hardware_id.clone(),
                r.label.clone(),
                r.weight.to_string(),
                r.edp.to_string(),
                b.to_string(),
                (r.edp / b).to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.write_record([
            run.workload_id.clone(),
            run.hardware_id.clone(),
            "case".into(),
            String::new(),
            run.case_edp.to_string(),
            baseline.case_edp.to_string(),
            (run.case_edp / baseline.case_edp).to_string(),
        ])
        .map_err(csv_err)?;
    }
    finish(w)
}

/// Per-GEMM energy and delay breakdown of one run, with weighted EDP columns
/// whose sum is the case EDP.
pub fn per_layer_csv(run: &CaseRun) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "label",
        "weight",
        "x",
        "y",
        "z",
        "e_src1_pj_per_mac",
        "e_src3_pj_per_mac",
        "e_src4_pj_per_mac",
        "e_macc_pj_per_mac",
        "e_leak_pj_per_mac",
        "energy_pj",
        "delay_s",
        "edp",
        "weighted_edp",
        "gap",
    ])
    .map_err(csv_err)?;
    for r in &run.records {
        let b = &r.breakdown;
        w.write_record([
            r.label.clone(),
            r.weight.to_string(),
            r.dims[0].to_string(),
            r.dims[1].to_string(),
            r.dims[2].to_string(),
            b.e_src1.to_string(),
            b.e_src3.to_string(),
            b.e_src4.to_string(),
            b.e_macc.to_string(),
            b.e_leak.to_string(),
            b.e_total_abs.to_string(),
            r.delay_s.to_string(),
            r.edp.to_string(),
            (r.weight as f64 * r.edp).to_string(),
            r.certificate.gap.to_string(),
        ])
        .map_err(csv_err)?;
    }
    finish(w)
}
