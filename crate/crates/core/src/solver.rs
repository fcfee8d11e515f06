//! Exact mapping search with an optimality certificate.
//!
//! The per-MAC energy separates into one term per axis, and each term depends
//! only on that axis' tile chain and four flags (is it the SRAM walking axis,
//! the array walking axis, SRAM-resident, regfile-resident). The axes couple
//! only through the PE-count product and the two capacity footprints.
//!
//! The search therefore enumerates roots of the form (walk/residency
//! configuration, per-axis PE split). Inside a root the chains of each axis
//! are pre-sorted by energy, two axes are branched on in that order and the
//! third is answered by a prefix-minimum table over its (regfile tile, SRAM
//! tile) lengths, which encodes the capacity constraints exactly. Roots and
//! branches are cut when their bound strictly exceeds the incumbent. Ties in
//! energy are resolved by the smallest [`Mapping::tie_key`].

use std::cell::OnceCell;
use std::collections::HashMap;
use std::fmt;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::energy::{axis_energy, energy_unchecked, leakage_per_mac, sum_objective, AxisFlags, EnergyBreakdown, EvalOptions};
use crate::error::{Error, Result};
use crate::exact::{near, BestMapping};
use crate::model::{divisor_chains, divisors, footprint, is_feasible, Axis, Chain, ConfigKey, ConstraintId, GemmInstance, HardwareSpec, Mapping, PeConstraint};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Wall-clock budget in seconds; `None` searches to completion.
    pub time_limit_s: Option<f64>,
    pub eval: EvalOptions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProofKind {
    /// Every candidate was evaluated.
    Exhaustive,
    /// The search finished; every cut subtree had a bound above the optimum.
    BranchAndBound,
    /// Stopped at the time limit; the lower bound covers the unexplored part.
    Incomplete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    /// Normalized energy of the returned mapping, pJ per MAC.
    pub upper_bound: f64,
    /// No feasible mapping has a lower normalized energy.
    pub lower_bound: f64,
    /// `(upper_bound - lower_bound) / upper_bound`.
    pub gap: f64,
    pub nodes_explored: u64,
    pub nodes_pruned: u64,
    pub configs_enumerated: u64,
    pub wall_time_s: f64,
    pub proof_kind: ProofKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub mapping: Mapping,
    pub breakdown: EnergyBreakdown,
    pub certificate: Certificate,
}

/// Why no mapping exists: the constraints that cannot be met by any choice.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InfeasibleReport {
    pub binding: Vec<ConstraintId>,
    pub message: String,
}

impl fmt::Display for InfeasibleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<String> = self.binding.iter().map(ToString::to_string).collect();
        write!(f, "binding constraints [{}]: {}", names.join(", "), self.message)
    }
}

/// PE splits `(s_x, s_y, s_z)` admitted by the constraint, each dividing its extent.
pub fn pe_factorizations(gemm: &GemmInstance, num_pe: u64, pe: PeConstraint) -> Result<Vec<[u64; 3]>> {
    let cands: Vec<Vec<u64>> = Axis::ALL
        .iter()
        .map(|&a| divisors(gemm.dim(a)).map(|d| d.into_iter().filter(|&s| s <= num_pe).collect()))
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for &sx in &cands[0] {
        for &sy in &cands[1] {
            let sxy = sx as u128 * sy as u128;
            if sxy > num_pe as u128 {
                break;
            }
            for &sz in &cands[2] {
                let used = sxy * sz as u128;
                if used > num_pe as u128 {
                    break;
                }
                if pe.admits(used, num_pe) {
                    out.push([sx, sy, sz]);
                }
            }
        }
    }
    Ok(out)
}

/// Names the constraints that rule out every mapping.
pub fn diagnose_infeasible(gemm: &GemmInstance, hw: &HardwareSpec, pe: PeConstraint) -> InfeasibleReport {
    let splits = pe_factorizations(gemm, hw.num_pe, pe).unwrap_or_default();
    let mut binding = Vec::new();
    let mut notes = Vec::new();
    if splits.is_empty() {
        binding.push(ConstraintId::PeCount);
        notes.push(format!(
            "no split of {} PEs divides the extents {:?} ({})",
            hw.num_pe,
            gemm.dims,
            match pe {
                PeConstraint::Exact => "exact use required",
                PeConstraint::AtMost => "partial use allowed",
            }
        ));
    }
    let configs = ConfigKey::enumerate(hw.bypass_freedom);
    let rf_min = configs.iter().map(|k| footprint([1; 3], k.resident_rf)).min().unwrap_or(0);
    if rf_min > hw.cap_rf as u128 {
        binding.push(ConstraintId::CapRf);
        notes.push(format!("smallest regfile footprint {rf_min} exceeds {} words", hw.cap_rf));
    }
    let min_tiles: Vec<[u64; 3]> = if splits.is_empty() { vec![[1; 3]] } else { splits };
    let sram_min = min_tiles
        .iter()
        .flat_map(|s| configs.iter().map(move |k| footprint(*s, k.resident_sram)))
        .min()
        .unwrap_or(0);
    if sram_min > hw.cap_sram as u128 {
        binding.push(ConstraintId::CapSram);
        notes.push(format!("smallest SRAM footprint {sram_min} exceeds {} words", hw.cap_sram));
    }
    if binding.is_empty() {
        notes.push("no single constraint is binding".into());
    }
    InfeasibleReport {
        binding,
        message: format!("GEMM '{}' {:?} on '{}': {}", gemm.label, gemm.dims, hw.name, notes.join("; ")),
    }
}

#[derive(Debug, Clone, Copy)]
struct Entry {
    f: f64,
    chain: Chain,
}

/// Minimum energy over chains with regfile tile <= l3s[i] and SRAM tile <= l1s[j].
struct Table {
    l3s: Vec<u64>,
    l1s: Vec<u64>,
    min: Vec<f64>,
}

impl Table {
    fn build(entries: &[Entry]) -> Table {
        let mut l3s: Vec<u64> = entries.iter().map(|e| e.chain.l3).collect();
        let mut l1s: Vec<u64> = entries.iter().map(|e| e.chain.l1).collect();
        l3s.sort_unstable();
        l3s.dedup();
        l1s.sort_unstable();
        l1s.dedup();
        let w = l1s.len();
        let mut min = vec![f64::INFINITY; l3s.len() * w];
        for e in entries {
            let i = l3s.binary_search(&e.chain.l3).unwrap();
            let j = l1s.binary_search(&e.chain.l1).unwrap();
            let cell = &mut min[i * w + j];
            if e.f < *cell {
                *cell = e.f;
            }
        }
        for i in 0..l3s.len() {
            for j in 0..w {
                let mut v = min[i * w + j];
                if i > 0 {
                    v = v.min(min[(i - 1) * w + j]);
                }
                if j > 0 {
                    v = v.min(min[i * w + j - 1]);
                }
                min[i * w + j] = v;
            }
        }
        Table { l3s, l1s, min }
    }

    fn query(&self, max_l3: u64, max_l1: u64) -> Option<f64> {
        let i = self.l3s.partition_point(|&v| v <= max_l3);
        let j = self.l1s.partition_point(|&v| v <= max_l1);
        if i == 0 || j == 0 {
            return None;
        }
        let v = self.min[(i - 1) * self.l1s.len() + (j - 1)];
        v.is_finite().then_some(v)
    }
}

/// Chains of one axis with one flag variant and one PE count, sorted by (energy, chain).
struct Group {
    entries: Vec<Entry>,
    min_l3: u64,
    min_l1: u64,
    table: OnceCell<Table>,
}

impl Group {
    fn min_f(&self) -> f64 {
        self.entries[0].f
    }

    fn table(&self) -> &Table {
        self.table.get_or_init(|| Table::build(&self.entries))
    }
}

/// Per-axis energies for every chain and flag variant.
struct AxisTables {
    groups: HashMap<(usize, u64), Group>,
}

impl AxisTables {
    fn build(hw: &HardwareSpec, axis: Axis, extent: u64) -> Result<Self> {
        let chains = divisor_chains(extent)?;
        let mut groups: HashMap<(usize, u64), Vec<Entry>> = HashMap::new();
        for v in 0..16 {
            let flags = AxisFlags::from_index(v);
            for &chain in &chains {
                let f = axis_energy(hw, axis, extent, chain, flags).total;
                groups.entry((v, chain.spatial())).or_default().push(Entry { f, chain });
            }
        }
        let groups = groups
            .into_iter()
            .map(|(k, mut entries)| {
                entries.sort_by(|a, b| a.f.total_cmp(&b.f).then(a.chain.cmp(&b.chain)));
                let min_l3 = entries.iter().map(|e| e.chain.l3).min().unwrap();
                let min_l1 = entries.iter().map(|e| e.chain.l1).min().unwrap();
                (
                    k,
                    Group {
                        entries,
                        min_l3,
                        min_l1,
                        table: OnceCell::new(),
                    },
                )
            })
            .collect();
        Ok(AxisTables { groups })
    }

    fn group(&self, variant: usize, spatial: u64) -> Option<&Group> {
        self.groups.get(&(variant, spatial))
    }
}

/// A mapping with some axes left open. Open axes range over every chain that
/// matches `spatial` when it is given.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialNode {
    pub config: ConfigKey,
    pub spatial: Option<[u64; 3]>,
    pub chains: [Option<Chain>; 3],
}

/// Admissible bound on the normalized energy of every completion of `node`;
/// `+inf` when no completion exists. Equals the energy when all chains are fixed.
pub fn lower_bound(node: &PartialNode, gemm: &GemmInstance, hw: &HardwareSpec, opts: &EvalOptions) -> Result<f64> {
    let mut per_axis = [0.0; 3];
    let probe = node.config.with_chains([Chain::new(1, 1, 1); 3]);
    for axis in Axis::ALL {
        let i = axis.index();
        let flags = AxisFlags::of(&probe, axis);
        let extent = gemm.dim(axis);
        per_axis[i] = match node.chains[i] {
            Some(c) => axis_energy(hw, axis, extent, c, flags).total,
            None => divisor_chains(extent)?
                .into_iter()
                .filter(|c| node.spatial.is_none_or(|s| c.spatial() == s[i]))
                .map(|c| axis_energy(hw, axis, extent, c, flags).total)
                .fold(f64::INFINITY, f64::min),
        };
    }
    let leak = if opts.include_leak { leakage_per_mac(hw) } else { 0.0 };
    Ok(sum_objective(per_axis[0], per_axis[1], per_axis[2], hw.e_macc, leak))
}

struct Root {
    bound: f64,
    config: ConfigKey,
    spatial: [u64; 3],
    variants: [usize; 3],
}

struct Search<'a> {
    hw: &'a HardwareSpec,
    tables: &'a [AxisTables; 3],
    macc: f64,
    leak: f64,
    best: BestMapping<'a>,
    explored: u64,
    pruned: u64,
    start: Instant,
    deadline: Option<f64>,
    timed_out: bool,
}

const TIME_CHECK_EVERY: u64 = 4096;

impl<'a> Search<'a> {
    fn objective(&self, f: [f64; 3]) -> f64 {
        sum_objective(f[0], f[1], f[2], self.macc, self.leak)
    }

    /// True when a subtree with this bound cannot hold a better leaf.
    fn cut(&self, bound: f64) -> bool {
        self.best.excludes(bound)
    }

    fn tick(&mut self) -> bool {
        self.explored += 1;
        if self.explored.is_multiple_of(TIME_CHECK_EVERY) {
            if let Some(limit) = self.deadline {
                if self.start.elapsed().as_secs_f64() > limit {
                    self.timed_out = true;
                }
            }
        }
        self.timed_out
    }

    fn group(&self, axis: usize, root: &Root) -> &'a Group {
        self.tables[axis].group(root.variants[axis], root.spatial[axis]).expect("root groups exist")
    }

    /// Explores one root; returns false when interrupted by the time limit.
    fn explore(&mut self, root: &Root) -> Result<bool> {
        let hw = self.hw;
        let b3 = root.config.resident_rf;
        let b1 = root.config.resident_sram;

        // the axis with the most chains is answered by its table
        let sizes = [0, 1, 2].map(|i| self.group(i, root).entries.len());
        let last = (0..3).max_by_key(|&i| (sizes[i], std::cmp::Reverse(i))).unwrap();
        let [outer, middle] = match last {
            0 => [1, 2],
            1 => [0, 2],
            _ => [0, 1],
        };

        let min_f = [0, 1, 2].map(|i| self.group(i, root).min_f());
        let min_l3 = [0, 1, 2].map(|i| self.group(i, root).min_l3);
        let min_l1 = [0, 1, 2].map(|i| self.group(i, root).min_l1);

        let n_outer = self.group(outer, root).entries.len();
        let n_middle = self.group(middle, root).entries.len();

        for io in 0..n_outer {
            if self.tick() {
                return Ok(false);
            }
            let eo = self.group(outer, root).entries[io];
            let mut f = min_f;
            f[outer] = eo.f;
            if self.cut(self.objective(f)) {
                self.pruned += 1;
                break;
            }
            let mut l3 = min_l3;
            let mut l1 = min_l1;
            l3[outer] = eo.chain.l3;
            l1[outer] = eo.chain.l1;
            if footprint(l3, b3) > hw.cap_rf as u128 || footprint(l1, b1) > hw.cap_sram as u128 {
                self.pruned += 1;
                continue;
            }

            for im in 0..n_middle {
                if self.tick() {
                    return Ok(false);
                }
                let em = self.group(middle, root).entries[im];
                f[middle] = em.f;
                f[last] = min_f[last];
                if self.cut(self.objective(f)) {
                    self.pruned += 1;
                    break;
                }
                l3[middle] = em.chain.l3;
                l1[middle] = em.chain.l1;
                let Some(max_l3) = last_axis_limit(l3, b3, last, hw.cap_rf) else {
                    self.pruned += 1;
                    continue;
                };
                let Some(max_l1) = last_axis_limit(l1, b1, last, hw.cap_sram) else {
                    self.pruned += 1;
                    continue;
                };
                let group = self.group(last, root);
                let Some(f_last) = group.table().query(max_l3, max_l1) else {
                    self.pruned += 1;
                    continue;
                };
                f[last] = f_last;
                let total = self.objective(f);
                if self.cut(total) {
                    self.pruned += 1;
                    continue;
                }
                // every chain whose total is not clearly above the table minimum
                // is a candidate; the ranking settles near-ties exactly
                let entries = &group.entries;
                let from = entries.partition_point(|e| e.f < f_last);
                let mut chains = [Chain::new(1, 1, 1); 3];
                chains[outer] = eo.chain;
                chains[middle] = em.chain;
                let mut offered = false;
                for e in &entries[from..] {
                    f[last] = e.f;
                    let t = self.objective(f);
                    if (t > total && !near(t, total)) || self.best.excludes(t) {
                        break;
                    }
                    if e.chain.l3 > max_l3 || e.chain.l1 > max_l1 {
                        continue;
                    }
                    chains[last] = e.chain;
                    self.explored += 1;
                    offered = true;
                    self.best.offer(t, root.config.with_chains(chains));
                }
                if !offered && !self.cut(total) {
                    return Err(Error::Invariant("prefix table and chain list disagree".into()));
                }
            }
        }
        Ok(true)
    }
}

/// Largest tile length on `last` that keeps the footprint within `cap`, given
/// the other two lengths. `None` if even length 0 overflows.
fn last_axis_limit(lengths: [u64; 3], resident: [bool; 3], last: usize, cap: u64) -> Option<u64> {
    // footprint = sum over e of resident[e] * prod_{k != e} L_k
    let (a, b) = match last {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let r = |i: usize| resident[i] as u128;
    let fixed = r(last) * lengths[a] as u128 * lengths[b] as u128;
    let coef = r(a) * lengths[b] as u128 + r(b) * lengths[a] as u128;
    let cap = cap as u128;
    if fixed > cap {
        return None;
    }
    if coef == 0 {
        return Some(u64::MAX);
    }
    Some(((cap - fixed) / coef).min(u64::MAX as u128) as u64)
}

/// Finds the minimum-energy mapping and certifies it.
pub fn solve(gemm: &GemmInstance, hw: &HardwareSpec, opts: &SolveOptions) -> Result<Solution> {
    gemm.check()?;
    hw.check()?;
    let start = Instant::now();
    let eval = opts.eval;
    let tables = [
        AxisTables::build(hw, Axis::X, gemm.dim_x())?,
        AxisTables::build(hw, Axis::Y, gemm.dim_y())?,
        AxisTables::build(hw, Axis::Z, gemm.dim_z())?,
    ];
    let leak = if eval.include_leak { leakage_per_mac(hw) } else { 0.0 };
    let splits = pe_factorizations(gemm, hw.num_pe, eval.pe_constraint)?;
    let configs = ConfigKey::enumerate(hw.bypass_freedom);

    let mut search = Search {
        hw,
        tables: &tables,
        macc: hw.e_macc,
        leak,
        best: BestMapping::new(gemm, hw, eval),
        explored: 0,
        pruned: 0,
        start,
        deadline: opts.time_limit_s,
        timed_out: false,
    };

    let mut roots = Vec::with_capacity(configs.len() * splits.len());
    for config in &configs {
        let probe = config.with_chains([Chain::new(1, 1, 1); 3]);
        let variants = Axis::ALL.map(|a| AxisFlags::of(&probe, a).index());
        for &spatial in &splits {
            let groups: Vec<&Group> = (0..3).filter_map(|i| search.tables[i].group(variants[i], spatial[i])).collect();
            if groups.len() < 3 {
                continue;
            }
            let l3 = [0, 1, 2].map(|i| groups[i].min_l3);
            let l1 = [0, 1, 2].map(|i| groups[i].min_l1);
            if footprint(l3, config.resident_rf) > hw.cap_rf as u128 || footprint(l1, config.resident_sram) > hw.cap_sram as u128 {
                continue;
            }
            let bound = search.objective([0, 1, 2].map(|i| groups[i].min_f()));
            roots.push(Root {
                bound,
                config: *config,
                spatial,
                variants,
            });
        }
    }
    let configs_enumerated = roots.len() as u64;
    roots.sort_by(|a, b| a.bound.total_cmp(&b.bound).then(a.config.cmp(&b.config)).then(a.spatial.cmp(&b.spatial)));

    let mut open_bound: Option<f64> = None;
    for root in &roots {
        if search.cut(root.bound) {
            search.pruned += 1;
            continue;
        }
        if !search.explore(root)? {
            open_bound = Some(root.bound);
            break;
        }
    }

    let Some((best_energy, mapping)) = search.best.into_inner() else {
        if search.timed_out {
            return Err(Error::Invariant(format!(
                "time limit of {:?} s reached before any feasible mapping of '{}' was found",
                opts.time_limit_s, gemm.label
            )));
        }
        return Err(Error::Infeasible(diagnose_infeasible(gemm, hw, eval.pe_constraint)));
    };
    if !is_feasible(&mapping, gemm, hw, eval.pe_constraint) {
        return Err(Error::Invariant(format!("search returned an infeasible mapping {mapping:?}")));
    }
    let breakdown = energy_unchecked(&mapping, gemm, hw, &eval);
    if breakdown.e_total_norm != best_energy {
        return Err(Error::Invariant(format!(
            "replayed energy {} differs from search value {}",
            breakdown.e_total_norm, best_energy
        )));
    }
    let upper_bound = best_energy;
    let (lower_bound, proof_kind) = match open_bound {
        Some(b) => (b.min(upper_bound), ProofKind::Incomplete),
        None => (upper_bound, ProofKind::BranchAndBound),
    };
    let gap = if upper_bound > 0.0 { (upper_bound - lower_bound) / upper_bound } else { 0.0 };
    Ok(Solution {
        mapping,
        breakdown,
        certificate: Certificate {
            upper_bound,
            lower_bound,
            gap,
            nodes_explored: search.explored,
            nodes_pruned: search.pruned,
            configs_enumerated,
            wall_time_s: start.elapsed().as_secs_f64(),
            proof_kind,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::exhaustive_optimum;
    use crate::testutil::{distinct_hw, toy_hw};
    use proptest::prelude::*;

    #[test]
    fn table_query_matches_scan() {
        let hw = distinct_hw();
        let t = AxisTables::build(&hw, Axis::Z, 48).unwrap();
        for g in t.groups.values() {
            for &a in &[1u64, 2, 3, 4, 6, 8, 16, 48] {
                for &b in &[1u64, 2, 4, 12, 24, 48] {
                    let scan = g
                        .entries
                        .iter()
                        .filter(|e| e.chain.l3 <= a && e.chain.l1 <= b)
                        .map(|e| e.f)
                        .fold(f64::INFINITY, f64::min);
                    let q = g.table().query(a, b);
                    assert_eq!(q, scan.is_finite().then_some(scan));
                }
            }
        }
    }

    #[test]
    fn last_axis_limit_matches_footprint() {
        for bits in 0..8u8 {
            let r = [bits & 4 != 0, bits & 2 != 0, bits & 1 != 0];
            for last in 0..3 {
                let mut l = [3, 5, 7];
                let lim = last_axis_limit(l, r, last, 200);
                for v in 1..100u64 {
                    l[last] = v;
                    let fits = footprint(l, r) <= 200;
                    assert_eq!(fits, lim.is_some_and(|m| v <= m), "{r:?} {last} {v}");
                }
            }
        }
    }

    #[test]
    fn matches_exhaustive_on_small_instances() {
        let hw = distinct_hw();
        for dims in [[4, 4, 4], [2, 4, 8], [8, 2, 4], [1, 4, 4], [6, 4, 2], [3, 4, 6]] {
            let g = GemmInstance::new("g", dims[0], dims[1], dims[2]).unwrap();
            let (m, e) = exhaustive_optimum(&g, &hw, &EvalOptions::default(), 1 << 22).unwrap();
            let s = solve(&g, &hw, &SolveOptions::default()).unwrap();
            assert_eq!(s.breakdown.e_total_norm, e.e_total_norm, "{dims:?}");
            assert_eq!(s.mapping, m, "{dims:?}");
            assert_eq!(s.certificate.gap, 0.0);
            assert_eq!(s.certificate.proof_kind, ProofKind::BranchAndBound);
        }
    }

    #[test]
    fn tight_capacities_match_exhaustive() {
        let mut hw = distinct_hw();
        hw.cap_rf = 3;
        hw.cap_sram = 20;
        for dims in [[4, 4, 4], [2, 8, 4], [4, 2, 2]] {
            let g = GemmInstance::new("g", dims[0], dims[1], dims[2]).unwrap();
            let (m, e) = exhaustive_optimum(&g, &hw, &EvalOptions::default(), 1 << 22).unwrap();
            let s = solve(&g, &hw, &SolveOptions::default()).unwrap();
            assert_eq!((s.mapping, s.breakdown.e_total_norm), (m, e.e_total_norm), "{dims:?}");
        }
    }

    #[test]
    fn relaxed_pe_matches_exhaustive() {
        let hw = distinct_hw();
        let eval = EvalOptions {
            pe_constraint: PeConstraint::AtMost,
            include_leak: true,
        };
        for dims in [[1, 1, 1], [3, 1, 5], [4, 2, 2]] {
            let g = GemmInstance::new("g", dims[0], dims[1], dims[2]).unwrap();
            let (m, e) = exhaustive_optimum(&g, &hw, &eval, 1 << 22).unwrap();
            let s = solve(&g, &hw, &SolveOptions { eval, ..Default::default() }).unwrap();
            assert_eq!((s.mapping, s.breakdown.e_total_norm), (m, e.e_total_norm), "{dims:?}");
        }
    }

    #[test]
    fn single_mac_on_many_pes_is_infeasible() {
        let g = GemmInstance::new("g", 1, 1, 1).unwrap();
        let err = solve(&g, &toy_hw(256), &SolveOptions::default()).unwrap_err();
        let Error::Infeasible(report) = err else { panic!("expected infeasible") };
        assert_eq!(report.binding, vec![ConstraintId::PeCount]);
        assert!(report.to_string().contains("pe-count"));
    }

    #[test]
    fn capacity_infeasibility_is_named() {
        let mut hw = toy_hw(4);
        hw.bypass_freedom.rf = false;
        hw.cap_rf = 2;
        let g = GemmInstance::new("g", 4, 4, 4).unwrap();
        let Error::Infeasible(r) = solve(&g, &hw, &SolveOptions::default()).unwrap_err() else { panic!() };
        assert_eq!(r.binding, vec![ConstraintId::CapRf]);
        let mut hw = toy_hw(4);
        hw.bypass_freedom.sram = false;
        hw.cap_sram = 5;
        let Error::Infeasible(r) = solve(&g, &hw, &SolveOptions::default()).unwrap_err() else { panic!() };
        assert_eq!(r.binding, vec![ConstraintId::CapSram]);
    }

    #[test]
    fn fully_fixed_bound_is_the_energy() {
        let hw = distinct_hw();
        let g = GemmInstance::new("g", 8, 4, 2).unwrap();
        let s = solve(&g, &hw, &SolveOptions::default()).unwrap();
        let node = PartialNode {
            config: s.mapping.config_key(),
            spatial: Some(s.mapping.spatial()),
            chains: s.mapping.chains().map(Some),
        };
        assert_eq!(lower_bound(&node, &g, &hw, &EvalOptions::default()).unwrap(), s.breakdown.e_total_norm);
    }

    #[test]
    fn zero_time_limit_reports_a_gap_or_a_proof() {
        let hw = toy_hw(16);
        let g = GemmInstance::new("g", 256, 512, 1024).unwrap();
        let s = solve(
            &g,
            &hw,
            &SolveOptions {
                time_limit_s: Some(0.0),
                ..Default::default()
            },
        );
        if let Ok(s) = s {
            assert!(s.certificate.lower_bound <= s.certificate.upper_bound);
            if s.certificate.proof_kind == ProofKind::Incomplete {
                assert!(s.certificate.gap >= 0.0);
            } else {
                assert_eq!(s.certificate.gap, 0.0);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn bound_is_admissible(
            dims in (1u64..=8, 1u64..=8, 1u64..=8),
            cfg in 0usize..576,
            fix in 0u8..8,
            pick in any::<[u16; 3]>(),
        ) {
            let hw = distinct_hw();
            let g = GemmInstance::new("g", dims.0, dims.1, dims.2).unwrap();
            let config = ConfigKey::enumerate(hw.bypass_freedom)[cfg];
            let chains: Vec<Vec<Chain>> = Axis::ALL.iter().map(|&a| divisor_chains(g.dim(a)).unwrap()).collect();
            let fixed: [Option<Chain>; 3] = [0, 1, 2].map(|i| {
                (fix & (1 << i) != 0).then(|| chains[i][pick[i] as usize % chains[i].len()])
            });
            let node = PartialNode { config, spatial: None, chains: fixed };
            let lb = lower_bound(&node, &g, &hw, &EvalOptions::default()).unwrap();
            for &cx in &chains[0] {
                for &cy in &chains[1] {
                    for &cz in &chains[2] {
                        let c = [cx, cy, cz];
                        if (0..3).any(|i| fixed[i].is_some_and(|f| f != c[i])) {
                            continue;
                        }
                        let e = energy_unchecked(&config.with_chains(c), &g, &hw, &EvalOptions::default()).e_total_norm;
                        prop_assert!(lb <= e);
                    }
                }
            }
        }
    }
}
