//! Closed-form traffic and energy of a mapping.
//!
//! Traffic is counted per link and per axis in words. A link is named by its
//! receiver: `src1` feeds SRAM from DRAM, `src3` feeds the register files from
//! the nearest resident level above, `src4` feeds the MAC units. Along the
//! walking axis of a stage the orthogonal projection is fetched once per
//! column; the other two projections are refreshed at every step.
//!
//! Partial sums (axis z) read the old value on every visit but the first.
//! The read fraction of each receiver is `rho = 1 - 1/L~`, where `L~` is the
//! number of visits a fixed (x, y) receives along z.
//!
//! All normalized quantities are per MAC. Evaluation cost does not depend on
//! the GEMM size.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{validate_with, Axis, Chain, GemmInstance, HardwareSpec, Mapping, PeConstraint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrafficCounts {
    pub n01: [u128; 3],
    pub n_src3: [u128; 3],
    pub n_src4: [u128; 3],
}

/// Effective z-visit counts and read-old fractions for the three receivers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryCoeffs {
    pub l_tilde_src1: u64,
    pub l_tilde_src3: u64,
    pub l_tilde_src4: u64,
    pub rho_src1: f64,
    pub rho_src3: f64,
    pub rho_src4: f64,
}

/// `(L~ - 1) / L~`, rounded once.
pub fn rho(l_tilde: u64) -> f64 {
    debug_assert!(l_tilde >= 1);
    (l_tilde - 1) as f64 / l_tilde as f64
}

/// Per-word energies of one update, for levels 0..=3 talking to the level
/// below (`down`) or above (`up`), with the z entries bound to one receiver's rho.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitWeights {
    pub rho: f64,
    pub e_down: [[f64; 3]; 4],
    pub e_up: [[f64; 3]; 4],
}

impl UnitWeights {
    #[inline]
    pub fn down(&self, level: usize, axis: Axis) -> f64 {
        self.e_down[level][axis.index()]
    }

    #[inline]
    pub fn up(&self, level: usize, axis: Axis) -> f64 {
        self.e_up[level][axis.index()]
    }
}

pub fn unit_weights(hw: &HardwareSpec, rho: f64) -> UnitWeights {
    let e = &hw.ert;
    let mut e_down = [[0.0; 3]; 4];
    let mut e_up = [[0.0; 3]; 4];

    e_down[0] = [e.dram_read, e.dram_read, e.dram_write + rho * e.dram_read];
    e_up[1] = [e.sram_write, e.sram_write, rho * e.sram_write];
    e_down[1] = [e.sram_read, e.sram_read, e.sram_write + rho * e.sram_read];
    // the PE array is a fabric: level 2 stays zero in both directions
    e_up[3] = [e.rf_write, e.rf_write, rho * e.rf_write + hw.e_spatial_reduce];
    e_down[3] = [e.rf_read, e.rf_read, e.rf_write + rho * e.rf_read];

    UnitWeights { rho, e_down, e_up }
}

/// Walking and residency flags of one axis, everything its energy depends on
/// besides the tile chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AxisFlags {
    pub walk_01: bool,
    pub walk_12: bool,
    pub resident_sram: bool,
    pub resident_rf: bool,
}

impl AxisFlags {
    pub fn of(mapping: &Mapping, axis: Axis) -> Self {
        AxisFlags {
            walk_01: mapping.walk_01 == axis,
            walk_12: mapping.walk_12 == axis,
            resident_sram: mapping.resident_sram[axis.index()],
            resident_rf: mapping.resident_rf[axis.index()],
        }
    }

    /// Dense index in `0..16`.
    pub fn index(self) -> usize {
        (self.walk_01 as usize) << 3 | (self.walk_12 as usize) << 2 | (self.resident_sram as usize) << 1 | self.resident_rf as usize
    }

    pub fn from_index(i: usize) -> Self {
        AxisFlags {
            walk_01: i & 8 != 0,
            walk_12: i & 4 != 0,
            resident_sram: i & 2 != 0,
            resident_rf: i & 1 != 0,
        }
    }
}

/// Normalized energy contributed by one axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisEnergy {
    pub src1: f64,
    pub src3: f64,
    pub src4: f64,
    pub total: f64,
}

/// Effective z-visit counts of the three receivers for a z chain of extent `l0`.
pub fn z_visits(l0: u64, chain: Chain, walk_01_is_z: bool, walk_12_is_z: bool) -> [u64; 3] {
    let src1 = if walk_01_is_z { 1 } else { l0 / chain.l1 };
    let src3 = if walk_12_is_z { l0 / chain.l1 } else { l0 / chain.l2 };
    let src4 = l0 / chain.spatial();
    [src1, src3, src4]
}

/// Energy per MAC attributable to `axis`, given its chain and flags.
///
/// This is the single arithmetic path for the objective: the total of a
/// mapping is `((x + y) + z) + macc (+ leak)` over these values, and the
/// solver bounds use the same per-axis numbers.
pub fn axis_energy(hw: &HardwareSpec, axis: Axis, l0: u64, chain: Chain, flags: AxisFlags) -> AxisEnergy {
    let rhos = if axis == Axis::Z {
        z_visits(l0, chain, flags.walk_01, flags.walk_12).map(rho)
    } else {
        [0.0; 3]
    };
    let [w1, w3, w4] = rhos.map(|r| unit_weights(hw, r));
    let spatial = chain.spatial() as f64;

    let src1 = if flags.resident_sram {
        let denom = if flags.walk_01 { l0 } else { chain.l1 };
        (w1.down(0, axis) + w1.up(1, axis)) / denom as f64
    } else {
        0.0
    };

    let upper = |w: &UnitWeights| {
        if flags.resident_sram {
            w.down(1, axis)
        } else {
            w.down(0, axis)
        }
    };

    let src3 = if flags.resident_rf {
        let compress = if flags.walk_12 { chain.phases() } else { 1 };
        let denom = chain.l3 as u128 * compress as u128;
        (w3.up(3, axis) + upper(&w3) / spatial) / denom as f64
    } else {
        0.0
    };

    let src4 = if flags.resident_rf {
        w4.down(3, axis)
    } else {
        upper(&w4) / spatial
    };

    AxisEnergy {
        src1,
        src3,
        src4,
        total: (src1 + src3) + src4,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub e_src1: f64,
    pub e_src3: f64,
    pub e_src4: f64,
    pub e_macc: f64,
    pub e_leak: f64,
    /// pJ per MAC.
    pub e_total_norm: f64,
    /// pJ for the whole GEMM.
    pub e_total_abs: f64,
    pub total_macs: u128,
    pub active_pes: u128,
    pub per_axis: [AxisEnergy; 3],
    pub traffic: TrafficCounts,
    pub coeffs: BoundaryCoeffs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EvalOptions {
    pub include_leak: bool,
    pub pe_constraint: PeConstraint,
}

fn exact_div(num: u128, den: u128, what: &str) -> Result<u128> {
    if den == 0 || !num.is_multiple_of(den) {
        return Err(Error::Invariant(format!("{what}: {num} is not divisible by {den}")));
    }
    Ok(num / den)
}

/// Words moved DRAM to SRAM per axis.
pub fn traffic_src1(mapping: &Mapping, gemm: &GemmInstance) -> Result<[u128; 3]> {
    let v = gemm.total_macs();
    let mut out = [0u128; 3];
    for axis in Axis::ALL {
        let i = axis.index();
        if !mapping.resident_sram[i] {
            continue;
        }
        let denom = if axis == mapping.walk_01 { gemm.dims[i] } else { mapping.sram_tile[i] };
        out[i] = exact_div(v, denom as u128, "src1 traffic")?;
    }
    Ok(out)
}

/// Words received by the register files per axis, summed over PEs.
pub fn traffic_src3(mapping: &Mapping, gemm: &GemmInstance) -> Result<[u128; 3]> {
    let v = gemm.total_macs();
    let mut out = [0u128; 3];
    for axis in Axis::ALL {
        let i = axis.index();
        if !mapping.resident_rf[i] {
            continue;
        }
        let chain = mapping.chain(axis);
        if chain.l2 == 0 || !chain.l1.is_multiple_of(chain.l2) {
            return Err(Error::Invariant(format!("src3 traffic: array tile does not divide SRAM tile along {axis}")));
        }
        let compress = if axis == mapping.walk_12 { chain.phases() } else { 1 };
        out[i] = exact_div(v, chain.l3 as u128 * compress as u128, "src3 traffic")?;
    }
    Ok(out)
}

/// Operand deliveries to the MAC units: one per MAC for every axis.
pub fn traffic_src4(gemm: &GemmInstance) -> [u128; 3] {
    [gemm.total_macs(); 3]
}

pub fn boundary_coeffs(mapping: &Mapping, gemm: &GemmInstance) -> BoundaryCoeffs {
    let [l1, l3, l4] = z_visits(gemm.dim_z(), mapping.chain(Axis::Z), mapping.walk_01 == Axis::Z, mapping.walk_12 == Axis::Z);
    BoundaryCoeffs {
        l_tilde_src1: l1,
        l_tilde_src3: l3,
        l_tilde_src4: l4,
        rho_src1: rho(l1),
        rho_src3: rho(l3),
        rho_src4: rho(l4),
    }
}

/// Normalized leakage per MAC; a constant for a given hardware instance.
pub fn leakage_per_mac(hw: &HardwareSpec) -> f64 {
    (hw.leak_sram + hw.leak_rf * hw.num_pe as f64) / hw.num_pe as f64
}

/// Total energy of a mapping. Invalid mappings are rejected.
pub fn energy_total(mapping: &Mapping, gemm: &GemmInstance, hw: &HardwareSpec, opts: &EvalOptions) -> Result<EnergyBreakdown> {
    let report = validate_with(mapping, gemm, hw, opts.pe_constraint);
    if !report.feasible {
        return Err(Error::InvalidMapping(report));
    }
    Ok(energy_unchecked(mapping, gemm, hw, opts))
}

/// [`energy_total`] without the feasibility check. The mapping must at least
/// satisfy the divisibility chain.
pub fn energy_unchecked(mapping: &Mapping, gemm: &GemmInstance, hw: &HardwareSpec, opts: &EvalOptions) -> EnergyBreakdown {
    let per_axis = Axis::ALL.map(|a| axis_energy(hw, a, gemm.dim(a), mapping.chain(a), AxisFlags::of(mapping, a)));
    let e_leak = if opts.include_leak { leakage_per_mac(hw) } else { 0.0 };
    let e_total_norm = combine(&per_axis, hw.e_macc, e_leak);
    let v = gemm.total_macs();
    let traffic = TrafficCounts {
        n01: traffic_src1(mapping, gemm).expect("divisibility checked"),
        n_src3: traffic_src3(mapping, gemm).expect("divisibility checked"),
        n_src4: traffic_src4(gemm),
    };
    EnergyBreakdown {
        e_src1: per_axis.iter().map(|a| a.src1).sum(),
        e_src3: per_axis.iter().map(|a| a.src3).sum(),
        e_src4: per_axis.iter().map(|a| a.src4).sum(),
        e_macc: hw.e_macc,
        e_leak,
        e_total_norm,
        e_total_abs: e_total_norm * v as f64,
        total_macs: v,
        active_pes: mapping.active_pes(),
        per_axis,
        traffic,
        coeffs: boundary_coeffs(mapping, gemm),
    }
}

/// Fixed summation order shared by evaluation and search.
#[inline]
pub fn combine(per_axis: &[AxisEnergy; 3], e_macc: f64, e_leak: f64) -> f64 {
    sum_objective(per_axis[0].total, per_axis[1].total, per_axis[2].total, e_macc, e_leak)
}

#[inline]
pub fn sum_objective(x: f64, y: f64, z: f64, e_macc: f64, e_leak: f64) -> f64 {
    (((x + y) + z) + e_macc) + e_leak
}

/// Delay (s) at the compute bound of the active PEs, and EDP (pJ*s).
pub fn edp(breakdown: &EnergyBreakdown, hw: &HardwareSpec) -> (f64, f64) {
    let pes = breakdown.active_pes.max(1);
    let cycles = breakdown.total_macs.div_ceil(pes);
    let delay = cycles as f64 * hw.cycle_period;
    (delay, breakdown.e_total_abs * delay)
}
