//! Workload, hardware and mapping domain types plus feasibility checks.
//!
//! The hardware template has five levels: DRAM (0), SRAM (1), PE array (2),
//! register file (3) and MAC unit (4). A mapping fixes the tile lengths of
//! levels 1..=3 along every axis, one walking axis for each temporal stage
//! (DRAM to SRAM, SRAM to array) and per-axis residency bits for SRAM and
//! register file. Axis `d` also names a matrix: the projection whose plane
//! normal is `d`, so `x` is B(y,z), `y` is A(x,z) and `z` is P(x,y).

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported GEMM extent along one axis.
pub const MAX_EXTENT: u64 = 1 << 20;

pub const LEVEL_NAMES: [&str; 5] = ["DRAM", "SRAM", "PE-array", "regfile", "MACC"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Axis {
        Axis::ALL[i]
    }

    /// The two axes orthogonal to `self`, in ascending order.
    pub fn others(self) -> [Axis; 2] {
        match self {
            Axis::X => [Axis::Y, Axis::Z],
            Axis::Y => [Axis::X, Axis::Z],
            Axis::Z => [Axis::X, Axis::Y],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Axis {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "x" | "X" => Ok(Axis::X),
            "y" | "Y" => Ok(Axis::Y),
            "z" | "Z" => Ok(Axis::Z),
            other => Err(format!("unknown axis '{other}'")),
        }
    }
}

/// One GEMM `P(x,y) = sum_z A(x,z) B(y,z)` with its occurrence count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GemmInstance {
    pub label: String,
    /// Extents along x, y and z (z is the reduction axis).
    pub dims: [u64; 3],
    pub weight: u64,
}

impl GemmInstance {
    pub fn new(label: impl Into<String>, x: u64, y: u64, z: u64) -> Result<Self> {
        Self::with_weight(label, x, y, z, 1)
    }

    pub fn with_weight(label: impl Into<String>, x: u64, y: u64, z: u64, weight: u64) -> Result<Self> {
        let g = GemmInstance {
            label: label.into(),
            dims: [x, y, z],
            weight,
        };
        g.check()?;
        Ok(g)
    }

    pub fn check(&self) -> Result<()> {
        for (axis, &n) in Axis::ALL.iter().zip(&self.dims) {
            if n == 0 {
                return Err(Error::InvalidSpec(format!(
                    "gemm '{}': extent along {axis} must be >= 1",
                    self.label
                )));
            }
        }
        if self.weight == 0 {
            return Err(Error::InvalidSpec(format!("gemm '{}': weight must be >= 1", self.label)));
        }
        Ok(())
    }

    pub fn dim(&self, axis: Axis) -> u64 {
        self.dims[axis.index()]
    }

    pub fn dim_x(&self) -> u64 {
        self.dims[0]
    }

    pub fn dim_y(&self) -> u64 {
        self.dims[1]
    }

    pub fn dim_z(&self) -> u64 {
        self.dims[2]
    }

    /// Total number of MACs, exact for any extents up to 2^42 per axis.
    pub fn total_macs(&self) -> u128 {
        self.dims.iter().map(|&d| d as u128).product()
    }
}

/// Per-word access energies (pJ) of the storage levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ert {
    pub dram_read: f64,
    pub dram_write: f64,
    pub sram_read: f64,
    pub sram_write: f64,
    pub rf_read: f64,
    pub rf_write: f64,
}

/// Whether the SRAM and regfile residency bits are free decision variables.
/// A frozen level keeps every data type resident.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BypassFreedom {
    pub sram: bool,
    pub rf: bool,
}

impl Default for BypassFreedom {
    fn default() -> Self {
        BypassFreedom { sram: true, rf: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardwareSpec {
    pub name: String,
    pub num_pe: u64,
    /// SRAM capacity in words.
    pub cap_sram: u64,
    /// Register file capacity in words per PE.
    pub cap_rf: u64,
    pub ert: Ert,
    /// pJ per MAC.
    pub e_macc: f64,
    /// pJ per spatially reduced word.
    pub e_spatial_reduce: f64,
    /// pJ per cycle for the whole SRAM.
    pub leak_sram: f64,
    /// pJ per cycle for one PE's register file.
    pub leak_rf: f64,
    /// Seconds per cycle.
    pub cycle_period: f64,
    pub bypass_freedom: BypassFreedom,
}

impl HardwareSpec {
    pub fn check(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidSpec(format!("hardware '{}': {what}", self.name)));
        if self.num_pe == 0 {
            return bad("num_pe must be >= 1");
        }
        if !(self.cycle_period > 0.0 && self.cycle_period.is_finite()) {
            return bad("cycle_period must be > 0");
        }
        let energies = [
            ("dram_read", self.ert.dram_read),
            ("dram_write", self.ert.dram_write),
            ("sram_read", self.ert.sram_read),
            ("sram_write", self.ert.sram_write),
            ("rf_read", self.ert.rf_read),
            ("rf_write", self.ert.rf_write),
            ("macc", self.e_macc),
            ("spatial_reduce", self.e_spatial_reduce),
            ("leak_sram", self.leak_sram),
            ("leak_rf", self.leak_rf),
        ];
        for (name, v) in energies {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(&format!("energy '{name}' must be finite and >= 0, got {v}"));
            }
        }
        Ok(())
    }

    /// Returns a copy with every energy constant multiplied by `c`.
    pub fn scaled_energies(&self, c: f64) -> HardwareSpec {
        let mut hw = self.clone();
        hw.ert.dram_read *= c;
        hw.ert.dram_write *= c;
        hw.ert.sram_read *= c;
        hw.ert.sram_write *= c;
        hw.ert.rf_read *= c;
        hw.ert.rf_write *= c;
        hw.e_macc *= c;
        hw.e_spatial_reduce *= c;
        hw.leak_sram *= c;
        hw.leak_rf *= c;
        hw
    }
}

/// Tile lengths of one axis at SRAM, PE array and regfile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Chain {
    pub l1: u64,
    pub l2: u64,
    pub l3: u64,
}

impl Chain {
    pub const fn new(l1: u64, l2: u64, l3: u64) -> Self {
        Chain { l1, l2, l3 }
    }

    /// Number of PEs along this axis, `L2 / L3`.
    pub fn spatial(&self) -> u64 {
        self.l2 / self.l3
    }

    /// Array phases along this axis inside one SRAM tile, `L1 / L2`.
    pub fn phases(&self) -> u64 {
        self.l1 / self.l2
    }

    pub fn divides(&self, extent: u64) -> bool {
        self.l3 >= 1
            && self.l2.is_multiple_of(self.l3)
            && self.l1.is_multiple_of(self.l2)
            && extent.is_multiple_of(self.l1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mapping {
    /// Level-1 (SRAM) tile along x, y, z.
    pub sram_tile: [u64; 3],
    /// Level-2 (PE array) tile.
    pub array_tile: [u64; 3],
    /// Level-3 (regfile, per PE) tile.
    pub rf_tile: [u64; 3],
    /// Walking axis of the DRAM to SRAM stage.
    pub walk_01: Axis,
    /// Walking axis of the SRAM to PE-array stage.
    pub walk_12: Axis,
    /// SRAM residency per axis (`true` = resident).
    pub resident_sram: [bool; 3],
    /// Regfile residency per axis.
    pub resident_rf: [bool; 3],
}

impl Mapping {
    pub fn from_chains(chains: [Chain; 3], walk_01: Axis, walk_12: Axis, resident_sram: [bool; 3], resident_rf: [bool; 3]) -> Self {
        Mapping {
            sram_tile: chains.map(|c| c.l1),
            array_tile: chains.map(|c| c.l2),
            rf_tile: chains.map(|c| c.l3),
            walk_01,
            walk_12,
            resident_sram,
            resident_rf,
        }
    }

    pub fn chain(&self, axis: Axis) -> Chain {
        let i = axis.index();
        Chain::new(self.sram_tile[i], self.array_tile[i], self.rf_tile[i])
    }

    pub fn chains(&self) -> [Chain; 3] {
        Axis::ALL.map(|a| self.chain(a))
    }

    /// Tile lengths of level `p` (0..=4); level 0 is the GEMM, level 4 a single point.
    pub fn tile(&self, level: usize, gemm: &GemmInstance) -> [u64; 3] {
        match level {
            0 => gemm.dims,
            1 => self.sram_tile,
            2 => self.array_tile,
            3 => self.rf_tile,
            4 => [1, 1, 1],
            _ => panic!("level {level} out of range"),
        }
    }

    /// Per-axis PE counts; their product is the number of active PEs.
    pub fn spatial(&self) -> [u64; 3] {
        Axis::ALL.map(|a| self.chain(a).spatial())
    }

    pub fn active_pes(&self) -> u128 {
        self.spatial().iter().map(|&s| s as u128).product()
    }

    /// Walking axes, then residency bits, then tiles (axis-major chains).
    /// Ties in energy are broken by ascending order of this key.
    pub fn tie_key(&self) -> (ConfigKey, [Chain; 3]) {
        (self.config_key(), self.chains())
    }

    pub fn config_key(&self) -> ConfigKey {
        ConfigKey {
            walk_01: self.walk_01,
            walk_12: self.walk_12,
            resident_sram: self.resident_sram,
            resident_rf: self.resident_rf,
        }
    }
}

/// The non-tiling part of a mapping: walking axes and residency bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ConfigKey {
    pub walk_01: Axis,
    pub walk_12: Axis,
    pub resident_sram: [bool; 3],
    pub resident_rf: [bool; 3],
}

impl ConfigKey {
    /// Every walking-axis pair and every residency pattern the hardware allows,
    /// in ascending tie-break order.
    pub fn enumerate(freedom: BypassFreedom) -> Vec<ConfigKey> {
        let patterns = |free: bool| -> Vec<[bool; 3]> {
            if free {
                (0..8u8).map(|m| [m & 4 != 0, m & 2 != 0, m & 1 != 0]).collect()
            } else {
                vec![[true; 3]]
            }
        };
        let mut out = Vec::new();
        for walk_01 in Axis::ALL {
            for walk_12 in Axis::ALL {
                for &resident_sram in &patterns(freedom.sram) {
                    for &resident_rf in &patterns(freedom.rf) {
                        out.push(ConfigKey {
                            walk_01,
                            walk_12,
                            resident_sram,
                            resident_rf,
                        });
                    }
                }
            }
        }
        out
    }

    pub fn with_chains(&self, chains: [Chain; 3]) -> Mapping {
        Mapping::from_chains(chains, self.walk_01, self.walk_12, self.resident_sram, self.resident_rf)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PeConstraint {
    /// Product of per-axis PE counts equals `num_pe`.
    #[default]
    Exact,
    /// Product is at most `num_pe`.
    AtMost,
}

impl PeConstraint {
    pub fn admits(self, used: u128, num_pe: u64) -> bool {
        match self {
            PeConstraint::Exact => used == num_pe as u128,
            PeConstraint::AtMost => used >= 1 && used <= num_pe as u128,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstraintId {
    Divisibility,
    PeCount,
    CapRf,
    CapSram,
    BypassFrozen,
}

impl fmt::Display for ConstraintId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConstraintId::Divisibility => "divisibility",
            ConstraintId::PeCount => "pe-count",
            ConstraintId::CapRf => "cap-rf",
            ConstraintId::CapSram => "cap-sram",
            ConstraintId::BypassFrozen => "bypass-frozen",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub constraint: ConstraintId,
    pub axis: Option<Axis>,
    /// Upper and lower level of the offending link or the level itself.
    pub levels: Option<(u8, u8)>,
    pub measured: u128,
    pub bound: u128,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.constraint)?;
        if let Some(axis) = self.axis {
            write!(f, " axis {axis}")?;
        }
        if let Some((a, b)) = self.levels {
            if a == b {
                write!(f, " level {a}")?;
            } else {
                write!(f, " level {a}->{b}")?;
            }
        }
        match self.constraint {
            ConstraintId::Divisibility => write!(f, ": {} does not divide {}", self.measured, self.bound),
            ConstraintId::PeCount => write!(f, ": {} PEs vs {}", self.measured, self.bound),
            ConstraintId::CapRf | ConstraintId::CapSram => {
                write!(f, ": {} words > capacity {}", self.measured, self.bound)
            }
            ConstraintId::BypassFrozen => f.write_str(": residency bit is frozen to resident"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub feasible: bool,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn names(&self, id: ConstraintId) -> bool {
        self.violations.iter().any(|v| v.constraint == id)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.feasible {
            return f.write_str("feasible");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Words held by a level: for each resident matrix, the area of the tile's
/// projection onto the plane normal to that matrix's axis.
pub fn footprint(tile: [u64; 3], resident: [bool; 3]) -> u128 {
    let [x, y, z] = tile.map(|v| v as u128);
    let r = resident.map(|b| b as u128);
    r[1] * x * z + r[0] * y * z + r[2] * x * y
}

/// Checks every constraint and reports all violations under strict PE equality.
pub fn validate(mapping: &Mapping, gemm: &GemmInstance, hw: &HardwareSpec) -> ValidationReport {
    validate_with(mapping, gemm, hw, PeConstraint::Exact)
}

pub fn validate_with(mapping: &Mapping, gemm: &GemmInstance, hw: &HardwareSpec, pe: PeConstraint) -> ValidationReport {
    let mut violations = Vec::new();

    // (a) divisibility chain, outermost link first
    for axis in Axis::ALL {
        let lengths: [u64; 4] = [0, 1, 2, 3].map(|p| mapping.tile(p, gemm)[axis.index()]);
        for p in 0..3 {
            let (upper, lower) = (lengths[p], lengths[p + 1]);
            if lower == 0 || upper % lower != 0 {
                violations.push(Violation {
                    constraint: ConstraintId::Divisibility,
                    axis: Some(axis),
                    levels: Some((p as u8, p as u8 + 1)),
                    measured: lower as u128,
                    bound: upper as u128,
                });
            }
        }
    }
    let chain_ok = violations.is_empty();

    // (b) PE count; only meaningful once the ratios are integral
    if chain_ok {
        let used = mapping.active_pes();
        if !pe.admits(used, hw.num_pe) {
            violations.push(Violation {
                constraint: ConstraintId::PeCount,
                axis: None,
                levels: Some((2, 3)),
                measured: used,
                bound: hw.num_pe as u128,
            });
        }
    }

    // (c) regfile, per PE
    let rf = footprint(mapping.rf_tile, mapping.resident_rf);
    if rf > hw.cap_rf as u128 {
        violations.push(Violation {
            constraint: ConstraintId::CapRf,
            axis: None,
            levels: Some((3, 3)),
            measured: rf,
            bound: hw.cap_rf as u128,
        });
    }

    // (d) SRAM
    let sram = footprint(mapping.sram_tile, mapping.resident_sram);
    if sram > hw.cap_sram as u128 {
        violations.push(Violation {
            constraint: ConstraintId::CapSram,
            axis: None,
            levels: Some((1, 1)),
            measured: sram,
            bound: hw.cap_sram as u128,
        });
    }

    // (e) frozen residency
    let frozen = [(1u8, hw.bypass_freedom.sram, mapping.resident_sram), (3u8, hw.bypass_freedom.rf, mapping.resident_rf)];
    for (level, free, bits) in frozen {
        if free {
            continue;
        }
        for axis in Axis::ALL {
            if !bits[axis.index()] {
                violations.push(Violation {
                    constraint: ConstraintId::BypassFrozen,
                    axis: Some(axis),
                    levels: Some((level, level)),
                    measured: 0,
                    bound: 1,
                });
            }
        }
    }

    ValidationReport {
        feasible: violations.is_empty(),
        violations,
    }
}

/// Early-exit form of [`validate_with`].
pub fn is_feasible(mapping: &Mapping, gemm: &GemmInstance, hw: &HardwareSpec, pe: PeConstraint) -> bool {
    for axis in Axis::ALL {
        if !mapping.chain(axis).divides(gemm.dim(axis)) {
            return false;
        }
    }
    if !pe.admits(mapping.active_pes(), hw.num_pe) {
        return false;
    }
    if footprint(mapping.rf_tile, mapping.resident_rf) > hw.cap_rf as u128 {
        return false;
    }
    if footprint(mapping.sram_tile, mapping.resident_sram) > hw.cap_sram as u128 {
        return false;
    }
    (hw.bypass_freedom.sram || mapping.resident_sram == [true; 3])
        && (hw.bypass_freedom.rf || mapping.resident_rf == [true; 3])
}

fn check_extent(n: u64) -> Result<()> {
    if n == 0 || n > MAX_EXTENT {
        return Err(Error::Range {
            value: n,
            message: format!("extent must lie in [1, {MAX_EXTENT}]"),
        });
    }
    Ok(())
}

/// Divisors of `n` in ascending order.
pub fn divisors(n: u64) -> Result<Vec<u64>> {
    check_extent(n)?;
    let mut small = Vec::new();
    let mut large = Vec::new();
    let mut i = 1;
    while i * i <= n {
        if n.is_multiple_of(i) {
            small.push(i);
            if i * i != n {
                large.push(n / i);
            }
        }
        i += 1;
    }
    small.extend(large.into_iter().rev());
    Ok(small)
}

/// Every chain `L3 | L2 | L1 | n` in ascending lexicographic order of `(L1, L2, L3)`.
pub fn divisor_chains(n: u64) -> Result<Vec<Chain>> {
    let divs = divisors(n)?;
    let mut out = Vec::new();
    for &l1 in &divs {
        for &l2 in divs.iter().take_while(|&&d| d <= l1).filter(|&&d| l1 % d == 0) {
            for &l3 in divs.iter().take_while(|&&d| d <= l2).filter(|&&d| l2 % d == 0) {
                out.push(Chain::new(l1, l2, l3));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::toy_hw;

    fn mapping(l1: [u64; 3], l2: [u64; 3], l3: [u64; 3]) -> Mapping {
        Mapping {
            sram_tile: l1,
            array_tile: l2,
            rf_tile: l3,
            walk_01: Axis::X,
            walk_12: Axis::X,
            resident_sram: [true; 3],
            resident_rf: [true; 3],
        }
    }

    #[test]
    fn divisibility_violation_names_axis_and_link() {
        let g = GemmInstance::new("g", 4, 4, 4).unwrap();
        let m = mapping([2, 2, 2], [3, 1, 1], [1, 1, 1]);
        let r = validate(&m, &g, &toy_hw(3));
        assert!(!r.feasible);
        let v = r.violations.iter().find(|v| v.constraint == ConstraintId::Divisibility).unwrap();
        assert_eq!(v.axis, Some(Axis::X));
        assert_eq!(v.levels, Some((1, 2)));
        assert_eq!((v.measured, v.bound), (3, 2));
    }

    #[test]
    fn pe_count_violation() {
        let g = GemmInstance::new("g", 256, 256, 256).unwrap();
        // 8 * 4 * 4 = 128 PEs on a 256-PE array
        let m = mapping([64, 64, 64], [8, 4, 4], [1, 1, 1]);
        let r = validate(&m, &g, &toy_hw(256));
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].constraint, ConstraintId::PeCount);
        assert_eq!((r.violations[0].measured, r.violations[0].bound), (128, 256));
        assert!(validate_with(&m, &g, &toy_hw(256), PeConstraint::AtMost).feasible);
    }

    #[test]
    fn regfile_capacity_violation() {
        let g = GemmInstance::new("g", 8, 8, 8).unwrap();
        let mut hw = toy_hw(1);
        hw.cap_rf = 4;
        let m = mapping([8, 8, 8], [8, 8, 8], [8, 8, 8]);
        let r = validate(&m, &g, &hw);
        let v = r.violations.iter().find(|v| v.constraint == ConstraintId::CapRf).unwrap();
        assert_eq!((v.measured, v.bound), (192, 4));
    }

    #[test]
    fn bypassed_data_is_excluded_from_capacity() {
        let g = GemmInstance::new("g", 8, 8, 8).unwrap();
        let mut hw = toy_hw(1);
        hw.cap_rf = 64;
        let mut m = mapping([8, 8, 8], [8, 8, 8], [8, 8, 8]);
        m.resident_rf = [false, false, true];
        assert!(validate(&m, &g, &hw).feasible);
        m.resident_rf = [false, true, true];
        assert!(!validate(&m, &g, &hw).feasible);
    }

    #[test]
    fn frozen_bypass_reports_each_axis() {
        let g = GemmInstance::new("g", 2, 2, 2).unwrap();
        let mut hw = toy_hw(1);
        hw.bypass_freedom = BypassFreedom { sram: false, rf: true };
        let mut m = mapping([2, 2, 2], [1, 1, 1], [1, 1, 1]);
        m.resident_sram = [false, true, false];
        m.resident_rf = [false; 3];
        let r = validate(&m, &g, &hw);
        let frozen: Vec<_> = r.violations.iter().filter(|v| v.constraint == ConstraintId::BypassFrozen).collect();
        assert_eq!(frozen.len(), 2);
        assert!(!is_feasible(&m, &g, &hw, PeConstraint::Exact));
    }

    #[test]
    fn all_violations_are_returned() {
        let g = GemmInstance::new("g", 8, 8, 8).unwrap();
        let mut hw = toy_hw(2);
        hw.cap_rf = 1;
        hw.cap_sram = 1;
        let m = mapping([8, 8, 8], [8, 8, 8], [8, 8, 8]);
        let r = validate(&m, &g, &hw);
        assert!(r.names(ConstraintId::PeCount));
        assert!(r.names(ConstraintId::CapRf));
        assert!(r.names(ConstraintId::CapSram));
    }

    #[test]
    fn divisor_chains_small_cases() {
        assert_eq!(divisor_chains(1).unwrap(), vec![Chain::new(1, 1, 1)]);
        assert_eq!(divisor_chains(4).unwrap().len(), 10);
        assert_eq!(
            divisor_chains(13).unwrap(),
            vec![Chain::new(1, 1, 1), Chain::new(13, 1, 1), Chain::new(13, 13, 1), Chain::new(13, 13, 13)]
        );
    }

    #[test]
    fn divisor_chains_match_brute_force() {
        for n in 1..=256u64 {
            let mut brute = Vec::new();
            for a in 1..=n {
                for b in 1..=n {
                    for c in 1..=n {
                        if n % a == 0 && a % b == 0 && b % c == 0 {
                            brute.push(Chain::new(a, b, c));
                        }
                    }
                }
            }
            let fast = divisor_chains(n).unwrap();
            assert_eq!(fast, brute, "n = {n}");
        }
    }

    #[test]
    fn divisor_chains_range() {
        assert!(divisor_chains(MAX_EXTENT).is_ok());
        assert!(matches!(divisor_chains(MAX_EXTENT + 1), Err(Error::Range { .. })));
        assert!(matches!(divisor_chains(0), Err(Error::Range { .. })));
    }

    #[test]
    fn total_macs_is_exact_at_max_extent() {
        let g = GemmInstance::new("big", MAX_EXTENT, MAX_EXTENT, MAX_EXTENT).unwrap();
        assert_eq!(g.total_macs(), 1u128 << 60);
    }

    #[test]
    fn config_enumeration_counts() {
        assert_eq!(ConfigKey::enumerate(BypassFreedom::default()).len(), 576);
        assert_eq!(ConfigKey::enumerate(BypassFreedom { sram: false, rf: true }).len(), 72);
        assert_eq!(ConfigKey::enumerate(BypassFreedom { sram: false, rf: false }).len(), 9);
        let keys = ConfigKey::enumerate(BypassFreedom::default());
        assert!(keys.windows(2).all(|w| w[0] < w[1]));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_case() -> impl Strategy<Value = (GemmInstance, Mapping, HardwareSpec)> {
            let dim = prop::sample::select(vec![1u64, 2, 3, 4, 6, 8, 12]);
            let tile = prop::sample::select(vec![1u64, 2, 3, 4, 6]);
            (
                [dim.clone(), dim.clone(), dim],
                [tile.clone(), tile.clone(), tile.clone()],
                [tile.clone(), tile.clone(), tile.clone()],
                [tile.clone(), tile.clone(), tile],
                0usize..3,
                0usize..3,
                any::<[bool; 3]>(),
                any::<[bool; 3]>(),
                prop::sample::select(vec![1u64, 2, 4, 6]),
                1u64..200,
            )
                .prop_map(|(d, l1, l2, l3, a, b, r1, r3, pe, cap)| {
                    let g = GemmInstance::new("p", d[0], d[1], d[2]).unwrap();
                    let m = Mapping {
                        sram_tile: l1,
                        array_tile: l2,
                        rf_tile: l3,
                        walk_01: Axis::from_index(a),
                        walk_12: Axis::from_index(b),
                        resident_sram: r1,
                        resident_rf: r3,
                    };
                    let mut hw = toy_hw(pe);
                    hw.cap_rf = cap;
                    hw.cap_sram = cap * 4;
                    (g, m, hw)
                })
        }

        fn swap_xy(g: &GemmInstance, m: &Mapping) -> (GemmInstance, Mapping) {
            let sw = |a: [u64; 3]| [a[1], a[0], a[2]];
            let swb = |a: [bool; 3]| [a[1], a[0], a[2]];
            let swa = |a: Axis| match a {
                Axis::X => Axis::Y,
                Axis::Y => Axis::X,
                Axis::Z => Axis::Z,
            };
            let mut g2 = g.clone();
            g2.dims = sw(g.dims);
            let m2 = Mapping {
                sram_tile: sw(m.sram_tile),
                array_tile: sw(m.array_tile),
                rf_tile: sw(m.rf_tile),
                walk_01: swa(m.walk_01),
                walk_12: swa(m.walk_12),
                resident_sram: swb(m.resident_sram),
                resident_rf: swb(m.resident_rf),
            };
            (g2, m2)
        }

        proptest! {
            #[test]
            fn fast_check_agrees_with_report((g, m, hw) in arb_case()) {
                for pe in [PeConstraint::Exact, PeConstraint::AtMost] {
                    let r = validate_with(&m, &g, &hw, pe);
                    prop_assert_eq!(r.feasible, r.violations.is_empty());
                    prop_assert_eq!(r.feasible, is_feasible(&m, &g, &hw, pe));
                    prop_assert_eq!(&r, &validate_with(&m, &g, &hw, pe));
                }
            }

            #[test]
            fn feasible_mappings_have_integral_ratios((g, m, hw) in arb_case()) {
                if validate(&m, &g, &hw).feasible {
                    for p in 0..3 {
                        let (up, lo) = (m.tile(p, &g), m.tile(p + 1, &g));
                        for i in 0..3 {
                            prop_assert_eq!(up[i] % lo[i], 0);
                            prop_assert!(up[i] / lo[i] >= 1);
                        }
                    }
                }
            }

            #[test]
            fn xy_swap_preserves_feasibility((g, m, hw) in arb_case()) {
                let (g2, m2) = swap_xy(&g, &m);
                prop_assert_eq!(validate(&m, &g, &hw).feasible, validate(&m2, &g2, &hw).feasible);
            }
        }
    }
}
