use crate::model::{BypassFreedom, Ert, HardwareSpec};

/// Generous capacities so that only the PE count constrains tiling.
pub(crate) fn toy_hw(num_pe: u64) -> HardwareSpec {
    HardwareSpec {
        name: "toy".into(),
        num_pe,
        cap_sram: 1 << 20,
        cap_rf: 1 << 12,
        ert: Ert {
            dram_read: 200.0,
            dram_write: 210.0,
            sram_read: 6.0,
            sram_write: 6.5,
            rf_read: 0.9,
            rf_write: 1.1,
        },
        e_macc: 0.5,
        e_spatial_reduce: 0.0,
        leak_sram: 0.0,
        leak_rf: 0.0,
        cycle_period: 1e-9,
        bypass_freedom: BypassFreedom::default(),
    }
}

/// Four PEs and pairwise unrelated constants, so no two terms can cancel.
pub(crate) fn distinct_hw() -> HardwareSpec {
    crate::verify::toy_hardware()
}
