//! Exact rational evaluation, used to order mappings whose floating-point
//! energies are too close to separate reliably.
//!
//! Floating-point sums of mathematically equal energies can differ in the
//! last bit, and which one comes out lower may change when every constant is
//! scaled. Deciding near-ties exactly (energy constants taken as the binary
//! rationals they are) and only then by [`Mapping::tie_key`] keeps the
//! returned argmin a property of the model rather than of rounding.

use std::cmp::Ordering;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;

use crate::energy::{z_visits, AxisFlags, EvalOptions};
use crate::model::{Axis, Chain, GemmInstance, HardwareSpec, Mapping};

/// Float energies closer than this relative distance are compared exactly.
pub const NEAR_TIE_RTOL: f64 = 1e-9;

fn q(v: f64) -> BigRational {
    BigRational::from_float(v).expect("energy constants are finite")
}

fn int(n: u128) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

fn rho(l: u64) -> BigRational {
    BigRational::new(BigInt::from(l - 1), BigInt::from(l))
}

/// Exact counterpart of [`crate::energy::axis_energy`].
pub fn exact_axis_energy(hw: &HardwareSpec, axis: Axis, l0: u64, chain: Chain, flags: AxisFlags) -> BigRational {
    let e = &hw.ert;
    let is_z = axis == Axis::Z;
    let [r1, r3, r4] = if is_z {
        z_visits(l0, chain, flags.walk_01, flags.walk_12).map(rho)
    } else {
        [BigRational::zero(), BigRational::zero(), BigRational::zero()]
    };
    let dram_down = |r: &BigRational| if is_z { q(e.dram_write) + r * q(e.dram_read) } else { q(e.dram_read) };
    let sram_down = |r: &BigRational| if is_z { q(e.sram_write) + r * q(e.sram_read) } else { q(e.sram_read) };
    let sram_up = |r: &BigRational| if is_z { r * q(e.sram_write) } else { q(e.sram_write) };
    let rf_up = |r: &BigRational| if is_z { r * q(e.rf_write) + q(hw.e_spatial_reduce) } else { q(e.rf_write) };
    let rf_down = |r: &BigRational| if is_z { q(e.rf_write) + r * q(e.rf_read) } else { q(e.rf_read) };
    let upper = |r: &BigRational| if flags.resident_sram { sram_down(r) } else { dram_down(r) };
    let spatial = int(chain.spatial() as u128);

    let mut total = BigRational::zero();
    if flags.resident_sram {
        let denom = if flags.walk_01 { l0 } else { chain.l1 };
        total += (dram_down(&r1) + sram_up(&r1)) / int(denom as u128);
    }
    if flags.resident_rf {
        let compress = if flags.walk_12 { chain.phases() } else { 1 };
        total += (rf_up(&r3) + upper(&r3) / &spatial) / int(chain.l3 as u128 * compress as u128);
        total += rf_down(&r4);
    } else {
        total += upper(&r4) / &spatial;
    }
    total
}

/// Exact normalized energy of a mapping (pJ per MAC).
pub fn exact_energy(mapping: &Mapping, gemm: &GemmInstance, hw: &HardwareSpec, opts: &EvalOptions) -> BigRational {
    let mut total = q(hw.e_macc);
    for axis in Axis::ALL {
        total += exact_axis_energy(hw, axis, gemm.dim(axis), mapping.chain(axis), AxisFlags::of(mapping, axis));
    }
    if opts.include_leak {
        let pes = int(hw.num_pe as u128);
        total += (q(hw.leak_sram) + q(hw.leak_rf) * &pes) / pes;
    }
    total
}

pub fn near(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= NEAR_TIE_RTOL * a.abs().max(b.abs())
}

/// Running minimum under the order (energy, tie key), with near-ties in
/// floating point settled exactly.
pub struct BestMapping<'a> {
    gemm: &'a GemmInstance,
    hw: &'a HardwareSpec,
    opts: EvalOptions,
    best: Option<(f64, Mapping, Option<BigRational>)>,
}

impl<'a> BestMapping<'a> {
    pub fn new(gemm: &'a GemmInstance, hw: &'a HardwareSpec, opts: EvalOptions) -> Self {
        BestMapping {
            gemm,
            hw,
            opts,
            best: None,
        }
    }

    pub fn energy(&self) -> Option<f64> {
        self.best.as_ref().map(|b| b.0)
    }

    pub fn mapping(&self) -> Option<&Mapping> {
        self.best.as_ref().map(|b| &b.1)
    }

    pub fn into_inner(self) -> Option<(f64, Mapping)> {
        self.best.map(|(e, m, _)| (e, m))
    }

    /// True when nothing with a float energy of at least `bound` can beat
    /// or tie the current best.
    pub fn excludes(&self, bound: f64) -> bool {
        match &self.best {
            None => false,
            Some((e, _, _)) => bound > *e && !near(bound, *e),
        }
    }

    /// Replaces the best if `mapping` orders strictly before it.
    pub fn offer(&mut self, energy: f64, mapping: Mapping) -> bool {
        let order = match &mut self.best {
            None => Ordering::Less,
            Some((e, m, exact)) => {
                if near(energy, *e) {
                    let theirs = exact.get_or_insert_with(|| exact_energy(m, self.gemm, self.hw, &self.opts));
                    let ours = exact_energy(&mapping, self.gemm, self.hw, &self.opts);
                    ours.cmp(theirs).then_with(|| mapping.tie_key().cmp(&m.tie_key()))
                } else {
                    energy.total_cmp(e)
                }
            }
        };
        if order == Ordering::Less {
            self.best = Some((energy, mapping, None));
            true
        } else {
            false
        }
    }
}
