//! LLM prefill workloads: expansion into per-type GEMMs and case-level EDP.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::GemmInstance;

pub const GEMM_LABELS: [&str; 8] = [
    "attn_q_proj",
    "attn_kv_proj",
    "attn_score",
    "attn_context",
    "attn_output",
    "mlp_gate_up",
    "mlp_down",
    "lm_head",
];

/// Structural parameters of a decoder-only model plus the prefill length.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmModelDesc {
    pub num_layers: u64,
    pub hidden_size: u64,
    pub num_heads: u64,
    pub num_kv_heads: u64,
    /// Defaults to `hidden_size / num_heads`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub head_dim: Option<u64>,
    pub intermediate_size: u64,
    pub vocab_size: u64,
    pub seq_len: u64,
}

impl LlmModelDesc {
    pub fn head_dim(&self) -> Result<u64> {
        match self.head_dim {
            Some(d) => Ok(d),
            None => {
                if self.num_heads == 0 || !self.hidden_size.is_multiple_of(self.num_heads) {
                    return Err(Error::InvalidSpec(format!(
                        "hidden_size {} is not divisible by num_heads {}",
                        self.hidden_size, self.num_heads
                    )));
                }
                Ok(self.hidden_size / self.num_heads)
            }
        }
    }

    pub fn check(&self) -> Result<()> {
        let fields = [
            ("num_layers", self.num_layers),
            ("hidden_size", self.hidden_size),
            ("num_heads", self.num_heads),
            ("num_kv_heads", self.num_kv_heads),
            ("intermediate_size", self.intermediate_size),
            ("vocab_size", self.vocab_size),
            ("seq_len", self.seq_len),
        ];
        for (name, v) in fields {
            if v == 0 {
                return Err(Error::InvalidSpec(format!("{name} must be >= 1")));
            }
        }
        if self.head_dim == Some(0) {
            return Err(Error::InvalidSpec("head_dim must be >= 1".into()));
        }
        self.head_dim()?;
        if !self.num_heads.is_multiple_of(self.num_kv_heads) {
            return Err(Error::InvalidSpec(format!(
                "num_kv_heads {} does not divide num_heads {}",
                self.num_kv_heads, self.num_heads
            )));
        }
        Ok(())
    }
}

/// The eight GEMM types of one prefill pass, with occurrence counts.
///
/// `x` is the token axis, `y` the output feature axis and `z` the reduction.
/// K and V projections are fused, as are the gate and up projections.
/// Attention score and context GEMMs are per head.
pub fn expand_llm_prefill(model: &LlmModelDesc) -> Result<Vec<GemmInstance>> {
    model.check()?;
    let hd = model.head_dim()?;
    let s = model.seq_len;
    let h = model.hidden_size;
    let layers = model.num_layers;
    let per_head = layers
        .checked_mul(model.num_heads)
        .ok_or_else(|| Error::InvalidSpec("num_layers * num_heads overflows".into()))?;

    let shapes: [(u64, u64, u64, u64); 8] = [
        (s, model.num_heads * hd, h, layers),
        (s, 2 * model.num_kv_heads * hd, h, layers),
        (s, s, hd, per_head),
        (s, hd, s, per_head),
        (s, h, model.num_heads * hd, layers),
        (s, 2 * model.intermediate_size, h, layers),
        (s, h, model.intermediate_size, layers),
        (s, model.vocab_size, h, 1),
    ];
    GEMM_LABELS
        .iter()
        .zip(shapes)
        .map(|(label, (x, y, z, w))| GemmInstance::with_weight(*label, x, y, z, w))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GemmEdp {
    pub label: String,
    pub weight: u64,
    /// pJ
    pub energy: f64,
    /// s
    pub delay: f64,
    /// pJ*s
    pub edp: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalized_edp: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub records: Vec<GemmEdp>,
    /// Occurrence-weighted sum of per-GEMM EDPs, pJ*s.
    pub case_edp: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalized_case_edp: Option<f64>,
}

/// Aggregates per-GEMM energy (pJ) and delay (s) into the weighted case EDP.
/// With a reference, each EDP is also divided by the reference EDP of the
/// GEMM with the same label.
pub fn case_edp(results: &[(GemmInstance, f64, f64)], reference: Option<&CaseResult>) -> Result<CaseResult> {
    if results.is_empty() {
        return Err(Error::Empty("case_edp needs at least one GEMM result"));
    }
    let mut records = Vec::with_capacity(results.len());
    let mut total = 0.0;
    for (g, energy, delay) in results {
        let edp = energy * delay;
        total += g.weight as f64 * edp;
        let normalized_edp = match reference {
            Some(r) => {
                let base = r
                    .records
                    .iter()
                    .find(|b| b.label == g.label)
                    .ok_or_else(|| Error::InvalidSpec(format!("reference has no GEMM labelled '{}'", g.label)))?;
                Some(edp / base.edp)
            }
            None => None,
        };
        records.push(GemmEdp {
            label: g.label.clone(),
            weight: g.weight,
            energy: *energy,
            delay: *delay,
            edp,
            normalized_edp,
        });
    }
    Ok(CaseResult {
        records,
        case_edp: total,
        normalized_case_edp: reference.map(|r| total / r.case_edp),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_model() -> LlmModelDesc {
        LlmModelDesc {
            num_layers: 2,
            hidden_size: 32,
            num_heads: 4,
            num_kv_heads: 2,
            head_dim: None,
            intermediate_size: 48,
            vocab_size: 100,
            seq_len: 16,
        }
    }

    /// Walks the prefill graph op by op, one projection and one head at a time.
    fn graph_walk_macs(m: &LlmModelDesc) -> u128 {
        let s = m.seq_len as u128;
        let h = m.hidden_size as u128;
        let hd = m.head_dim.unwrap_or(m.hidden_size / m.num_heads) as u128;
        let mut macs = 0u128;
        for _layer in 0..m.num_layers {
            for _head in 0..m.num_heads {
                macs += s * h * hd; // q
            }
            for _kv in 0..m.num_kv_heads {
                macs += s * h * hd; // k
                macs += s * h * hd; // v
            }
            for _head in 0..m.num_heads {
                macs += s * s * hd; // q k^T
                macs += s * s * hd; // softmax(.) v
            }
            macs += s * (m.num_heads as u128 * hd) * h; // o_proj
            macs += s * h * m.intermediate_size as u128; // gate
            macs += s * h * m.intermediate_size as u128; // up
            macs += s * m.intermediate_size as u128 * h; // down
        }
        macs + s * h * m.vocab_size as u128
    }

    #[test]
    fn emits_eight_labelled_types_in_order() {
        let gemms = expand_llm_prefill(&toy_model()).unwrap();
        let labels: Vec<_> = gemms.iter().map(|g| g.label.as_str()).collect();
        assert_eq!(labels, GEMM_LABELS);
    }

    #[test]
    fn weighted_macs_match_graph_walk() {
        let m = toy_model();
        let gemms = expand_llm_prefill(&m).unwrap();
        let total: u128 = gemms.iter().map(|g| g.weight as u128 * g.total_macs()).sum();
        assert_eq!(total, graph_walk_macs(&m));

        let mut explicit = m.clone();
        explicit.head_dim = Some(16);
        let gemms = expand_llm_prefill(&explicit).unwrap();
        let total: u128 = gemms.iter().map(|g| g.weight as u128 * g.total_macs()).sum();
        assert_eq!(total, graph_walk_macs(&explicit));
    }

    #[test]
    fn single_layer_single_head_weights() {
        let m = LlmModelDesc {
            num_layers: 1,
            num_heads: 1,
            num_kv_heads: 1,
            ..toy_model()
        };
        let gemms = expand_llm_prefill(&m).unwrap();
        assert!(gemms.iter().all(|g| g.weight == 1));
        assert_eq!(gemms[7].label, "lm_head");
    }

    #[test]
    fn head_weights() {
        let gemms = expand_llm_prefill(&toy_model()).unwrap();
        let w: Vec<u64> = gemms.iter().map(|g| g.weight).collect();
        assert_eq!(w, [2, 2, 8, 8, 2, 2, 2, 1]);
        assert_eq!(gemms[1].dims, [16, 2 * 2 * 8, 32]);
        assert_eq!(gemms[2].dims, [16, 16, 8]);
        assert_eq!(gemms[3].dims, [16, 8, 16]);
    }

    #[test]
    fn inconsistent_heads_are_rejected() {
        let bad = LlmModelDesc {
            hidden_size: 30,
            ..toy_model()
        };
        assert!(matches!(expand_llm_prefill(&bad), Err(Error::InvalidSpec(_))));
        let bad = LlmModelDesc {
            num_kv_heads: 3,
            ..toy_model()
        };
        assert!(matches!(expand_llm_prefill(&bad), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn deterministic() {
        assert_eq!(expand_llm_prefill(&toy_model()).unwrap(), expand_llm_prefill(&toy_model()).unwrap());
    }

    fn g(label: &str, w: u64) -> GemmInstance {
        GemmInstance::with_weight(label, 1, 1, 1, w).unwrap()
    }

    #[test]
    fn case_edp_sums() {
        let r = case_edp(&[(g("a", 1), 2.0, 3.0)], None).unwrap();
        assert_eq!(r.case_edp, 6.0);
        let r = case_edp(&[(g("a", 3), 10.0, 1.0), (g("b", 1), 2.0, 1.0)], None).unwrap();
        assert_eq!(r.case_edp, 32.0);
        assert!(matches!(case_edp(&[], None), Err(Error::Empty(_))));
    }

    #[test]
    fn self_normalization_is_one() {
        let results = [(g("a", 3), 10.5, 2.0e-3), (g("b", 7), 0.25, 4.0e-6)];
        let base = case_edp(&results, None).unwrap();
        let norm = case_edp(&results, Some(&base)).unwrap();
        assert_eq!(norm.normalized_case_edp, Some(1.0));
        assert!(norm.records.iter().all(|r| r.normalized_edp == Some(1.0)));
    }

    #[test]
    fn case_edp_is_linear() {
        let results = [(g("a", 3), 10.0, 2.0), (g("b", 5), 4.0, 0.5)];
        let base = case_edp(&results, None).unwrap().case_edp;
        let scaled: Vec<_> = results.iter().map(|(g, e, t)| (g.clone(), e * 4.0, *t)).collect();
        assert_eq!(case_edp(&scaled, None).unwrap().case_edp, 4.0 * base);
        let bumped = [(g("a", 3), 11.0, 2.0), (g("b", 5), 4.0, 0.5)];
        assert_eq!(case_edp(&bumped, None).unwrap().case_edp - base, 3.0 * 2.0);
    }
}
