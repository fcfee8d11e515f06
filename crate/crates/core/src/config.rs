//! Versioned JSON inputs: hardware templates, workloads, model descriptors
//! and mapping files. Unknown keys are rejected everywhere.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BypassFreedom, Ert, GemmInstance, HardwareSpec, Mapping};
use crate::workload::{expand_llm_prefill, LlmModelDesc};

pub const HARDWARE_SCHEMA: &str = "gemm-mapper/hardware/v1";
pub const WORKLOAD_SCHEMA: &str = "gemm-mapper/workload/v1";
pub const MODEL_SCHEMA: &str = "gemm-mapper/model/v1";
pub const MAPPING_SCHEMA: &str = "gemm-mapper/mapping/v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyTable {
    pub dram_read: f64,
    pub dram_write: f64,
    pub sram_read: f64,
    pub sram_write: f64,
    pub rf_read: f64,
    pub rf_write: f64,
    pub macc: f64,
    pub spatial_reduce: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeakTable {
    pub sram: f64,
    pub rf: f64,
}

/// On-disk hardware template. Energies in pJ, capacities in words unless
/// given in KiB, cycle period in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardwareFile {
    pub schema: String,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub num_pe: u64,
    pub word_bits: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sram_capacity_kib: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sram_capacity_words: Option<u64>,
    pub rf_capacity_words: u64,
    pub energy_pj: EnergyTable,
    pub leak_pj_per_cycle: LeakTable,
    pub cycle_period_s: f64,
    pub bypass_free: BypassFreedom,
}

impl HardwareFile {
    pub fn into_spec(self) -> std::result::Result<HardwareSpec, String> {
        if self.schema != HARDWARE_SCHEMA {
            return Err(format!("field `schema`: expected \"{HARDWARE_SCHEMA}\", got \"{}\"", self.schema));
        }
        if self.num_pe == 0 {
            return Err("field `num_pe`: must be >= 1".into());
        }
        if self.word_bits == 0 {
            return Err("field `word_bits`: must be >= 1".into());
        }
        if self.rf_capacity_words == 0 {
            return Err("field `rf_capacity_words`: must be >= 1".into());
        }
        let cap_sram = match (self.sram_capacity_kib, self.sram_capacity_words) {
            (Some(kib), None) => {
                let bits = kib as u128 * 1024 * 8;
                if !bits.is_multiple_of(self.word_bits as u128) {
                    return Err(format!("field `sram_capacity_kib`: {kib} KiB is not a whole number of {}-bit words", self.word_bits));
                }
                u64::try_from(bits / self.word_bits as u128).map_err(|_| "field `sram_capacity_kib`: too large".to_string())?
            }
            (None, Some(words)) => words,
            _ => return Err("exactly one of `sram_capacity_kib` and `sram_capacity_words` must be given".into()),
        };
        if cap_sram == 0 {
            return Err("SRAM capacity must be >= 1 word".into());
        }
        let e = &self.energy_pj;
        let checks = [
            ("energy_pj.dram_read", e.dram_read),
            ("energy_pj.dram_write", e.dram_write),
            ("energy_pj.sram_read", e.sram_read),
            ("energy_pj.sram_write", e.sram_write),
            ("energy_pj.rf_read", e.rf_read),
            ("energy_pj.rf_write", e.rf_write),
            ("energy_pj.macc", e.macc),
            ("energy_pj.spatial_reduce", e.spatial_reduce),
            ("leak_pj_per_cycle.sram", self.leak_pj_per_cycle.sram),
            ("leak_pj_per_cycle.rf", self.leak_pj_per_cycle.rf),
        ];
        for (field, v) in checks {
            if !(v.is_finite() && v >= 0.0) {
                return Err(format!("field `{field}`: energy must be finite and >= 0 pJ, got {v}"));
            }
        }
        if !(self.cycle_period_s.is_finite() && self.cycle_period_s > 0.0) {
            return Err(format!("field `cycle_period_s`: must be > 0 s, got {}", self.cycle_period_s));
        }
        let hw = HardwareSpec {
            name: self.name,
            num_pe: self.num_pe,
            cap_sram,
            cap_rf: self.rf_capacity_words,
            ert: Ert {
                dram_read: e.dram_read,
                dram_write: e.dram_write,
                sram_read: e.sram_read,
                sram_write: e.sram_write,
                rf_read: e.rf_read,
                rf_write: e.rf_write,
            },
            e_macc: e.macc,
            e_spatial_reduce: e.spatial_reduce,
            leak_sram: self.leak_pj_per_cycle.sram,
            leak_rf: self.leak_pj_per_cycle.rf,
            cycle_period: self.cycle_period_s,
            bypass_freedom: self.bypass_free,
        };
        hw.check().map_err(|e| e.to_string())?;
        Ok(hw)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GemmEntry {
    pub label: String,
    pub x: u64,
    pub y: u64,
    pub z: u64,
    #[serde(default = "one")]
    pub weight: u64,
}

fn one() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadFile {
    pub schema: String,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub gemms: Vec<GemmEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub schema: String,
    pub name: String,
    /// Where the structural parameters come from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    pub num_layers: u64,
    pub hidden_size: u64,
    pub num_heads: u64,
    pub num_kv_heads: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub head_dim: Option<u64>,
    pub intermediate_size: u64,
    pub vocab_size: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seq_len: Option<u64>,
}

impl ModelFile {
    pub fn desc(&self, seq_len: Option<u64>) -> std::result::Result<LlmModelDesc, String> {
        let seq_len = seq_len
            .or(self.seq_len)
            .ok_or("field `seq_len`: missing; give it in the file or on the command line")?;
        Ok(LlmModelDesc {
            num_layers: self.num_layers,
            hidden_size: self.hidden_size,
            num_heads: self.num_heads,
            num_kv_heads: self.num_kv_heads,
            head_dim: self.head_dim,
            intermediate_size: self.intermediate_size,
            vocab_size: self.vocab_size,
            seq_len,
        })
    }
}

/// A list of GEMMs ready to solve, with where they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Workload {
    pub name: String,
    pub gemms: Vec<GemmInstance>,
    pub model: Option<LlmModelDesc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MappingEntry {
    pub label: String,
    pub mapping: Mapping,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MappingFile {
    pub schema: String,
    pub mappings: Vec<MappingEntry>,
}

fn read_json(path: &Path) -> Result<serde_json::Value> {
    let text = fs::read_to_string(path).map_err(|e| Error::config(path, format!("cannot read: {e}")))?;
    serde_json::from_str(&text).map_err(|e| Error::config(path, format!("parse error: {e}")))
}

fn schema_of(path: &Path, v: &serde_json::Value) -> Result<String> {
    v.get("schema")
        .and_then(|s| s.as_str())
        .map(str::to_owned)
        .ok_or_else(|| Error::config(path, "field `schema`: missing or not a string"))
}

fn typed<T: DeserializeOwned>(path: &Path, v: serde_json::Value) -> Result<T> {
    serde_json::from_value(v).map_err(|e| Error::config(path, format!("schema violation: {e}")))
}

pub fn parse_hardware(path: &Path, text: &str) -> Result<HardwareSpec> {
    let file: HardwareFile = serde_json::from_str(text).map_err(|e| Error::config(path, format!("schema violation: {e}")))?;
    file.into_spec().map_err(|m| Error::config(path, m))
}

pub fn load_hardware(path: impl AsRef<Path>) -> Result<HardwareSpec> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::config(path, format!("cannot read: {e}")))?;
    parse_hardware(path, &text)
}

/// Loads a GEMM list or a model descriptor. `seq_len` overrides the
/// descriptor's own value.
pub fn load_workload(path: impl AsRef<Path>, seq_len: Option<u64>) -> Result<Workload> {
    let path = path.as_ref();
    let v = read_json(path)?;
    let schema = schema_of(path, &v)?;
    match schema.as_str() {
        WORKLOAD_SCHEMA => {
            let file: WorkloadFile = typed(path, v)?;
            if file.gemms.is_empty() {
                return Err(Error::config(path, "field `gemms`: must list at least one GEMM"));
            }
            let gemms = file
                .gemms
                .iter()
                .enumerate()
                .map(|(i, g)| {
                    GemmInstance::with_weight(g.label.clone(), g.x, g.y, g.z, g.weight)
                        .map_err(|e| Error::config(path, format!("field `gemms[{i}]`: {e}")))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Workload {
                name: file.name,
                gemms,
                model: None,
            })
        }
        MODEL_SCHEMA => {
            let file: ModelFile = typed(path, v)?;
            let desc = file.desc(seq_len).map_err(|m| Error::config(path, m))?;
            let gemms = expand_llm_prefill(&desc).map_err(|e| Error::config(path, e.to_string()))?;
            Ok(Workload {
                name: format!("{}@seq{}", file.name, desc.seq_len),
                gemms,
                model: Some(desc),
            })
        }
        other => Err(Error::config(
            path,
            format!("field `schema`: unknown value \"{other}\", expected \"{WORKLOAD_SCHEMA}\" or \"{MODEL_SCHEMA}\""),
        )),
    }
}

/// Reads label/mapping pairs from a mapping file.
pub fn load_mappings(path: impl AsRef<Path>) -> Result<Vec<MappingEntry>> {
    let path = path.as_ref();
    let v = read_json(path)?;
    let schema = schema_of(path, &v)?;
    if schema != MAPPING_SCHEMA {
        return Err(Error::config(path, format!("field `schema`: expected \"{MAPPING_SCHEMA}\", got \"{schema}\"")));
    }
    let file: MappingFile = typed(path, v)?;
    Ok(file.mappings)
}
