//! Event-counting reference model and brute-force optimum.
//!
//! [`simulate_traversal`] walks the tiling step by step and never consults the
//! closed-form traffic expressions. SRAM tiles advance along `walk_01` inside a
//! column and array phases advance along `walk_12` inside each SRAM tile. A
//! receiving level keeps a projection only while its tile walks along the
//! current column; at the head of a new column its buffer starts empty. A
//! projection is transferred whenever its coordinate rectangle differs from
//! the one the receiver holds.
//!
//! Partial sums are tracked per output block: the first visit of a block at a
//! receiver initializes from zero, every later visit reads the old value.
//! Upper-level supply to the PE array is counted once per distinct rectangle
//! among the PEs (multicast), and partial sums returned by several PEs along z
//! are counted as one reduced word.

use serde::{Deserialize, Serialize};

use crate::energy::{energy_unchecked, EnergyBreakdown, EvalOptions};
use crate::error::{Error, Result};
use crate::exact::BestMapping;
use crate::model::{divisor_chains, is_feasible, Axis, Chain, ConfigKey, GemmInstance, HardwareSpec, Mapping};
use crate::solver::diagnose_infeasible;

/// Maximum number of (SRAM tile, array phase) steps the oracle will walk.
pub const ORACLE_STEP_LIMIT: u128 = 10_000_000;
/// Maximum number of per-PE phase visits.
pub const ORACLE_PE_WORK_LIMIT: u128 = 100_000_000;

/// Order of the two axes orthogonal to a walking axis, outermost first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OrthoOrder {
    #[default]
    Ascending,
    Descending,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ReadWrite {
    pub reads: [u128; 3],
    pub writes: [u128; 3],
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AccessTally {
    /// Words received by SRAM from DRAM, per axis.
    pub link_src1: [u128; 3],
    /// Words received by the register files, summed over PEs.
    pub link_src3: [u128; 3],
    /// Operand deliveries to the MAC units.
    pub link_src4: [u128; 3],
    pub dram: ReadWrite,
    pub sram: ReadWrite,
    pub rf: ReadWrite,
    pub spatial_reduce: u128,
    pub macs: u128,
}

impl AccessTally {
    /// Energy in pJ, excluding leakage.
    pub fn energy(&self, hw: &HardwareSpec) -> f64 {
        let e = &hw.ert;
        let mut total = 0.0;
        for (rw, read, write) in [
            (&self.dram, e.dram_read, e.dram_write),
            (&self.sram, e.sram_read, e.sram_write),
            (&self.rf, e.rf_read, e.rf_write),
        ] {
            for i in 0..3 {
                total += rw.reads[i] as f64 * read + rw.writes[i] as f64 * write;
            }
        }
        total + self.spatial_reduce as f64 * hw.e_spatial_reduce + self.macs as f64 * hw.e_macc
    }

    fn level(&mut self, level: usize) -> &mut ReadWrite {
        match level {
            0 => &mut self.dram,
            1 => &mut self.sram,
            3 => &mut self.rf,
            _ => unreachable!("level {level} holds no data"),
        }
    }
}

/// Tile positions in column order: `walk` innermost, `head` set at the first
/// step of every column.
struct ColumnWalk {
    counts: [u64; 3],
    order: [usize; 3],
    pos: [u64; 3],
    done: bool,
}

impl ColumnWalk {
    fn new(counts: [u64; 3], walk: Axis, ortho: OrthoOrder) -> Self {
        let [a, b] = walk.others().map(Axis::index);
        let order = match ortho {
            OrthoOrder::Ascending => [a, b, walk.index()],
            OrthoOrder::Descending => [b, a, walk.index()],
        };
        ColumnWalk {
            counts,
            order,
            pos: [0; 3],
            done: counts.contains(&0),
        }
    }
}

impl Iterator for ColumnWalk {
    type Item = ([u64; 3], bool);

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let inner = self.order[2];
        let item = (self.pos, self.pos[inner] == 0);
        for &i in self.order.iter().rev() {
            self.pos[i] += 1;
            if self.pos[i] < self.counts[i] {
                return Some(item);
            }
            self.pos[i] = 0;
        }
        self.done = true;
        Some(item)
    }
}

/// Rectangle of the projection normal to `axis`: (start, len) on the two other axes.
type Rect = [u64; 4];

fn project(origin: [u64; 3], size: [u64; 3], axis: Axis) -> Rect {
    let [a, b] = axis.others().map(Axis::index);
    [origin[a], size[a], origin[b], size[b]]
}

fn area(r: &Rect) -> u128 {
    r[1] as u128 * r[3] as u128
}

fn add(a: [u64; 3], b: [u64; 3]) -> [u64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn mul(a: [u64; 3], b: [u64; 3]) -> [u64; 3] {
    [a[0] * b[0], a[1] * b[1], a[2] * b[2]]
}

fn div(a: [u64; 3], b: [u64; 3]) -> [u64; 3] {
    [a[0] / b[0], a[1] / b[1], a[2] / b[2]]
}

/// Output blocks of a fixed size that have been visited at one receiver.
struct Touched {
    block: [u64; 2],
    cols: u64,
    seen: Vec<bool>,
}

impl Touched {
    fn new(extent: [u64; 3], block: [u64; 3]) -> Self {
        let cols = extent[0] / block[0];
        let rows = extent[1] / block[1];
        Touched {
            block: [block[0], block[1]],
            cols,
            seen: vec![false; (cols * rows) as usize],
        }
    }

    fn slot(&self, origin: [u64; 3]) -> usize {
        ((origin[1] / self.block[1]) * self.cols + origin[0] / self.block[0]) as usize
    }

    fn get(&self, origin: [u64; 3]) -> bool {
        self.seen[self.slot(origin)]
    }

    fn mark(&mut self, origin: [u64; 3]) {
        let s = self.slot(origin);
        self.seen[s] = true;
    }
}

/// Points of a regfile tile that are the first to touch their (x, y).
fn first_touch_points(tile: [u64; 3]) -> u128 {
    let mut n = 0u128;
    for _x in 0..tile[0] {
        for _y in 0..tile[1] {
            for z in 0..tile[2] {
                if z == 0 {
                    n += 1;
                }
            }
        }
    }
    n
}

/// Walks the mapping and tallies every transfer.
pub fn simulate_traversal(mapping: &Mapping, gemm: &GemmInstance, order: OrthoOrder) -> Result<AccessTally> {
    for axis in Axis::ALL {
        if !mapping.chain(axis).divides(gemm.dim(axis)) {
            return Err(Error::Invariant(format!("oracle needs an exact divisibility chain along {axis}")));
        }
    }
    let l0 = gemm.dims;
    let l1 = mapping.sram_tile;
    let l2 = mapping.array_tile;
    let l3 = mapping.rf_tile;
    let n1 = div(l0, l1);
    let n2 = div(l1, l2);
    let spatial = div(l2, l3);

    let prod = |a: [u64; 3]| a.iter().map(|&v| v as u128).product::<u128>();
    let steps = prod(n1) * prod(n2);
    if steps > ORACLE_STEP_LIMIT {
        return Err(Error::OracleScale {
            steps,
            limit: ORACLE_STEP_LIMIT,
        });
    }
    let pe_work = steps * prod(spatial);
    if pe_work > ORACLE_PE_WORK_LIMIT {
        return Err(Error::OracleScale {
            steps: pe_work,
            limit: ORACLE_PE_WORK_LIMIT,
        });
    }

    // PE offsets inside an array tile
    let pes: Vec<[u64; 3]> = ColumnWalk::new(spatial, Axis::Z, OrthoOrder::Ascending)
        .map(|(p, _)| mul(p, l3))
        .collect();
    let tile_macs = prod(l3);
    let tile_first = first_touch_points(l3);

    let b1 = mapping.resident_sram;
    let b3 = mapping.resident_rf;
    let upper = |i: usize| if b1[i] { 1 } else { 0 };

    let mut t = AccessTally::default();
    let mut touched1 = Touched::new(l0, l1);
    let mut touched3 = Touched::new(l0, l3);
    let mut touched4 = Touched::new(l0, l3);

    let mut held1: [Option<Rect>; 3] = [None; 3];
    let mut held3: Vec<[Option<Rect>; 3]> = vec![[None; 3]; pes.len()];
    let mut sources: Vec<(Rect, [u64; 3])> = Vec::with_capacity(pes.len());
    let mut marks: Vec<[u64; 3]> = Vec::with_capacity(pes.len());

    for (pos1, head1) in ColumnWalk::new(n1, mapping.walk_01, order) {
        if head1 {
            held1 = [None; 3];
        }
        let origin1 = mul(pos1, l1);

        for axis in Axis::ALL {
            let i = axis.index();
            if !b1[i] {
                continue;
            }
            let rect = project(origin1, l1, axis);
            if held1[i] == Some(rect) {
                continue;
            }
            held1[i] = Some(rect);
            let words = area(&rect);
            t.link_src1[i] += words;
            if axis == Axis::Z {
                t.dram.writes[i] += words;
                if touched1.get(origin1) {
                    t.dram.reads[i] += words;
                    t.sram.writes[i] += words;
                } else {
                    touched1.mark(origin1);
                }
            } else {
                t.dram.reads[i] += words;
                t.sram.writes[i] += words;
            }
        }

        for (pos2, head2) in ColumnWalk::new(n2, mapping.walk_12, order) {
            if head2 {
                held3.iter_mut().for_each(|h| *h = [None; 3]);
            }
            let origin2 = add(origin1, mul(pos2, l2));

            // regfile fills
            for axis in Axis::ALL {
                let i = axis.index();
                if !b3[i] {
                    continue;
                }
                sources.clear();
                for (pe, offset) in pes.iter().enumerate() {
                    let origin = add(origin2, *offset);
                    let rect = project(origin, l3, axis);
                    if held3[pe][i] == Some(rect) {
                        continue;
                    }
                    held3[pe][i] = Some(rect);
                    let words = area(&rect);
                    t.link_src3[i] += words;
                    if axis == Axis::Z {
                        t.spatial_reduce += words;
                        if touched3.get(origin) {
                            t.rf.writes[i] += words;
                        }
                    } else {
                        t.rf.writes[i] += words;
                    }
                    sources.push((rect, origin));
                }
                sources.sort_unstable();
                sources.dedup_by(|a, b| a.0 == b.0);
                let src = t.level(if b1[i] { 1 } else { 0 });
                for (rect, origin) in &sources {
                    let words = area(rect);
                    if axis == Axis::Z {
                        src.writes[i] += words;
                        if touched3.get(*origin) {
                            src.reads[i] += words;
                        }
                    } else {
                        src.reads[i] += words;
                    }
                }
                if axis == Axis::Z {
                    for (_, origin) in &sources {
                        touched3.mark(*origin);
                    }
                }
            }

            // MAC operand deliveries
            let first_of = |touched: &Touched, origin: [u64; 3]| if touched.get(origin) { 0 } else { tile_first };
            for axis in Axis::ALL {
                let i = axis.index();
                t.link_src4[i] += tile_macs * pes.len() as u128;
                if b3[i] {
                    for offset in &pes {
                        let origin = add(origin2, *offset);
                        if axis == Axis::Z {
                            t.rf.writes[i] += tile_macs;
                            t.rf.reads[i] += tile_macs - first_of(&touched4, origin);
                        } else {
                            t.rf.reads[i] += tile_macs;
                        }
                    }
                } else {
                    sources.clear();
                    for offset in &pes {
                        let origin = add(origin2, *offset);
                        sources.push((project(origin, l3, axis), origin));
                    }
                    sources.sort_unstable();
                    sources.dedup_by(|a, b| a.0 == b.0);
                    let src = t.level(upper(i));
                    for (_, origin) in &sources {
                        if axis == Axis::Z {
                            src.writes[i] += tile_macs;
                            src.reads[i] += tile_macs - first_of(&touched4, *origin);
                        } else {
                            src.reads[i] += tile_macs;
                        }
                    }
                }
            }
            marks.clear();
            marks.extend(pes.iter().map(|o| add(origin2, *o)));
            for origin in &marks {
                touched4.mark(*origin);
            }
            t.macs += tile_macs * pes.len() as u128;
        }
    }
    Ok(t)
}

/// Number of candidate mappings before any feasibility filtering.
pub fn mapping_space_size(gemm: &GemmInstance, hw: &HardwareSpec) -> Result<u128> {
    let mut size = ConfigKey::enumerate(hw.bypass_freedom).len() as u128;
    for axis in Axis::ALL {
        size *= divisor_chains(gemm.dim(axis))?.len() as u128;
    }
    Ok(size)
}

/// Evaluates every feasible mapping and returns the minimum, ties broken by
/// ascending [`Mapping::tie_key`].
pub fn exhaustive_optimum(gemm: &GemmInstance, hw: &HardwareSpec, opts: &EvalOptions, limit: u128) -> Result<(Mapping, EnergyBreakdown)> {
    let size = mapping_space_size(gemm, hw)?;
    if size > limit {
        return Err(Error::SpaceTooLarge { size, limit });
    }
    let chains: [Vec<Chain>; 3] = [
        divisor_chains(gemm.dim_x())?,
        divisor_chains(gemm.dim_y())?,
        divisor_chains(gemm.dim_z())?,
    ];
    let mut best = BestMapping::new(gemm, hw, *opts);
    for key in ConfigKey::enumerate(hw.bypass_freedom) {
        for &cx in &chains[0] {
            for &cy in &chains[1] {
                for &cz in &chains[2] {
                    let m = key.with_chains([cx, cy, cz]);
                    if !is_feasible(&m, gemm, hw, opts.pe_constraint) {
                        continue;
                    }
                    let e = energy_unchecked(&m, gemm, hw, opts).e_total_norm;
                    if !best.excludes(e) {
                        best.offer(e, m);
                    }
                }
            }
        }
    }
    match best.into_inner() {
        Some((_, m)) => {
            let e = energy_unchecked(&m, gemm, hw, opts);
            Ok((m, e))
        }
        None => Err(Error::Infeasible(diagnose_infeasible(gemm, hw, opts.pe_constraint))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::{energy_total, traffic_src1, traffic_src3};
    use crate::model::PeConstraint;
    use crate::testutil::{distinct_hw, toy_hw};

    fn mapping(l1: [u64; 3], l2: [u64; 3], l3: [u64; 3], a01: Axis, a12: Axis, b1: [bool; 3], b3: [bool; 3]) -> Mapping {
        Mapping {
            sram_tile: l1,
            array_tile: l2,
            rf_tile: l3,
            walk_01: a01,
            walk_12: a12,
            resident_sram: b1,
            resident_rf: b3,
        }
    }

    #[test]
    fn column_walk_visits_every_position_once() {
        for walk in Axis::ALL {
            for order in [OrthoOrder::Ascending, OrthoOrder::Descending] {
                let steps: Vec<_> = ColumnWalk::new([2, 3, 4], walk, order).collect();
                assert_eq!(steps.len(), 24);
                let mut pos: Vec<_> = steps.iter().map(|s| s.0).collect();
                pos.sort();
                pos.dedup();
                assert_eq!(pos.len(), 24);
                let heads = steps.iter().filter(|s| s.1).count();
                assert_eq!(heads as u64, 24 / [2, 3, 4][walk.index()]);
                // consecutive steps inside a column differ only along the walking axis
                for w in steps.windows(2) {
                    if !w[1].1 {
                        for a in walk.others() {
                            assert_eq!(w[0].0[a.index()], w[1].0[a.index()]);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn src1_example_by_walking() {
        let g = GemmInstance::new("g", 4, 4, 4).unwrap();
        let m = mapping([2, 2, 2], [1, 1, 1], [1, 1, 1], Axis::X, Axis::X, [true; 3], [true; 3]);
        let t = simulate_traversal(&m, &g, OrthoOrder::Ascending).unwrap();
        assert_eq!(t.link_src1, [16, 32, 32]);
    }

    #[test]
    fn src3_example_by_walking() {
        let g = GemmInstance::new("g", 4, 4, 4).unwrap();
        let m = mapping([4, 4, 4], [2, 2, 2], [1, 1, 1], Axis::X, Axis::Y, [true; 3], [true; 3]);
        let t = simulate_traversal(&m, &g, OrthoOrder::Ascending).unwrap();
        assert_eq!(t.link_src3, [64, 32, 64]);
    }

    #[test]
    fn single_sram_tile_moves_each_projection_once() {
        let g = GemmInstance::new("g", 4, 2, 8).unwrap();
        let m = mapping([4, 2, 8], [2, 1, 4], [1, 1, 2], Axis::Y, Axis::Z, [true; 3], [false; 3]);
        let t = simulate_traversal(&m, &g, OrthoOrder::Ascending).unwrap();
        assert_eq!(t.link_src1, [2 * 8, 4 * 8, 4 * 2]);
        assert_eq!(t.link_src1.iter().sum::<u128>(), 16 + 32 + 8);
    }

    #[test]
    fn mac_triggers_equal_macs() {
        let g = GemmInstance::new("g", 8, 4, 8).unwrap();
        let m = mapping([4, 4, 8], [2, 2, 4], [1, 2, 2], Axis::Y, Axis::Z, [true, false, true], [false, true, true]);
        let t = simulate_traversal(&m, &g, OrthoOrder::Ascending).unwrap();
        assert_eq!(t.link_src4, [256; 3]);
        assert_eq!(t.macs, 256);
    }

    #[test]
    fn agrees_with_closed_form_on_handpicked_mappings() {
        let hw = distinct_hw();
        let g = GemmInstance::new("g", 8, 4, 8).unwrap();
        let cases = [
            mapping([4, 4, 8], [2, 2, 4], [1, 2, 2], Axis::Y, Axis::Z, [true, false, true], [false, true, true]),
            mapping([8, 2, 4], [4, 2, 2], [2, 1, 2], Axis::Z, Axis::X, [true; 3], [true; 3]),
            mapping([2, 4, 2], [2, 2, 2], [1, 1, 2], Axis::X, Axis::Y, [false, true, false], [true, false, false]),
            mapping([8, 4, 8], [4, 2, 8], [2, 2, 4], Axis::Z, Axis::Z, [false; 3], [false; 3]),
        ];
        for m in &cases {
            let t = simulate_traversal(m, &g, OrthoOrder::Ascending).unwrap();
            assert_eq!(t.link_src1, traffic_src1(m, &g).unwrap(), "{m:?}");
            assert_eq!(t.link_src3, traffic_src3(m, &g).unwrap(), "{m:?}");
            let e = energy_total(m, &g, &hw, &EvalOptions::default()).unwrap();
            let oracle = t.energy(&hw) / 256.0;
            assert!((oracle - e.e_total_norm).abs() <= 1e-9 * e.e_total_norm, "{m:?}: {oracle} vs {}", e.e_total_norm);
        }
    }

    #[test]
    fn orthogonal_order_is_irrelevant() {
        let hw = distinct_hw();
        let g = GemmInstance::new("g", 8, 8, 4).unwrap();
        let m = mapping([2, 4, 2], [2, 2, 1], [1, 1, 1], Axis::X, Axis::Z, [true, true, false], [true, false, true]);
        let a = simulate_traversal(&m, &g, OrthoOrder::Ascending).unwrap();
        let b = simulate_traversal(&m, &g, OrthoOrder::Descending).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.energy(&hw), b.energy(&hw));
    }

    #[test]
    fn scale_guard() {
        let g = GemmInstance::new("g", 1 << 12, 1 << 12, 1).unwrap();
        let m = mapping([1, 1, 1], [1, 1, 1], [1, 1, 1], Axis::X, Axis::X, [true; 3], [true; 3]);
        assert!(matches!(simulate_traversal(&m, &g, OrthoOrder::Ascending), Err(Error::OracleScale { .. })));
    }

    #[test]
    fn exhaustive_single_mac_bypasses_everything() {
        let hw = distinct_hw();
        let mut hw1 = hw.clone();
        hw1.num_pe = 1;
        let g = GemmInstance::new("g", 1, 1, 1).unwrap();
        let (m, e) = exhaustive_optimum(&g, &hw1, &EvalOptions::default(), 1 << 20).unwrap();
        assert_eq!(m.resident_sram, [false; 3]);
        assert_eq!(m.resident_rf, [false; 3]);
        assert_eq!((m.walk_01, m.walk_12), (Axis::X, Axis::X));
        let expect = 2.0 * hw.ert.dram_read + hw.ert.dram_write + hw.e_macc;
        assert!((e.e_total_norm - expect).abs() <= 1e-12 * expect);
    }

    #[test]
    fn space_size() {
        let g = GemmInstance::new("g", 4, 4, 4).unwrap();
        assert_eq!(mapping_space_size(&g, &toy_hw(4)).unwrap(), 1000 * 9 * 64);
        let err = exhaustive_optimum(&g, &toy_hw(4), &EvalOptions::default(), 1000).unwrap_err();
        assert!(matches!(err, Error::SpaceTooLarge { size: 576_000, .. }));
        assert!(err.to_string().contains("576000"));
    }

    #[test]
    fn exhaustive_reports_infeasible() {
        let g = GemmInstance::new("g", 1, 1, 1).unwrap();
        let err = exhaustive_optimum(&g, &toy_hw(4), &EvalOptions::default(), 1 << 20).unwrap_err();
        assert!(matches!(err, Error::Infeasible(_)));
        let relaxed = EvalOptions {
            pe_constraint: PeConstraint::AtMost,
            ..Default::default()
        };
        assert!(exhaustive_optimum(&g, &toy_hw(4), &relaxed, 1 << 20).is_ok());
    }
}
