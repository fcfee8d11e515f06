use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use gemm_mapper::config::{load_hardware, load_mappings, load_workload, GemmEntry, MappingEntry, WorkloadFile, WORKLOAD_SCHEMA};
use gemm_mapper::energy::{edp, energy_total, EvalOptions};
use gemm_mapper::model::{validate_with, GemmInstance, HardwareSpec, PeConstraint};
use gemm_mapper::pad::pad_workload;
use gemm_mapper::record::{CaseRun, RunOptions, RunRecord, RUN_SCHEMA};
use gemm_mapper::report::{normalized_edp_csv, per_layer_csv};
use gemm_mapper::solver::{solve, ProofKind, SolveOptions};
use gemm_mapper::verify::{optimality_instances, oracle_sweep, power_of_two_extents, solver_vs_exhaustive, toy_hardware};
use gemm_mapper::Error;

/// Like `println!`, but a closed stdout (e.g. `| head`) is not an error.
macro_rules! outln {
    ($($arg:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}

const EXIT_INFEASIBLE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_VERIFY: u8 = 3;
const EXIT_GAP: u8 = 4;

#[derive(Parser)]
#[command(name = "gemm-mapper", version, about = "Energy-optimal GEMM mappings for five-level spatial accelerators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Copy)]
struct EvalFlags {
    /// Allow fewer active PEs than the array has.
    #[arg(long)]
    pe_relax: bool,
    /// Add the per-MAC leakage term to the objective.
    #[arg(long)]
    leak: bool,
}

impl EvalFlags {
    fn options(self) -> EvalOptions {
        EvalOptions {
            include_leak: self.leak,
            pe_constraint: if self.pe_relax { PeConstraint::AtMost } else { PeConstraint::Exact },
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Find the minimum-energy mapping of every GEMM in a workload.
    Solve {
        #[arg(long)]
        hw: PathBuf,
        /// GEMM list or model descriptor.
        #[arg(long)]
        workload: PathBuf,
        /// Prefill length for model descriptors.
        #[arg(long)]
        seq_len: Option<u64>,
        /// Seconds per GEMM; 0 means no limit.
        #[arg(long, default_value_t = 0.0)]
        time_limit: f64,
        /// Pad each extent within this factor to the value with the most divisors.
        #[arg(long)]
        pad: Option<f64>,
        #[command(flatten)]
        eval: EvalFlags,
        /// Worker threads; defaults to the machine's parallelism.
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Price given mappings with the closed-form model.
    Evaluate {
        #[arg(long)]
        hw: PathBuf,
        #[arg(long)]
        workload: PathBuf,
        #[arg(long)]
        seq_len: Option<u64>,
        /// Mapping file or run record.
        #[arg(long)]
        mapping: PathBuf,
        #[command(flatten)]
        eval: EvalFlags,
    },
    /// Report every violated constraint of given mappings.
    Validate {
        #[arg(long)]
        hw: PathBuf,
        #[arg(long)]
        workload: PathBuf,
        #[arg(long)]
        seq_len: Option<u64>,
        #[arg(long)]
        mapping: PathBuf,
        #[arg(long)]
        pe_relax: bool,
    },
    /// Check the closed form against the traversal oracle and the solver against brute force.
    Verify {
        /// Largest power-of-two extent in the oracle sweep.
        #[arg(long, default_value_t = 8)]
        max_dims: u64,
        /// Skip the solver-versus-brute-force part.
        #[arg(long)]
        skip_optimality: bool,
    },
    /// Print the GEMM list of a model's prefill pass as a workload file.
    Expand {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        seq_len: Option<u64>,
    },
    /// Write normalized-EDP and per-GEMM breakdown CSVs.
    Report {
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        baseline: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn exit_code_of(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Infeasible(_)) | Some(Error::InvalidMapping(_)) => EXIT_INFEASIBLE,
        _ => EXIT_CONFIG,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_of(&err))
        }
    }
}

fn run(command: Command) -> anyhow::Result<u8> {
    match command {
        Command::Solve {
            hw,
            workload,
            seq_len,
            time_limit,
            pad,
            eval,
            threads,
            out,
        } => cmd_solve(&hw, &workload, seq_len, time_limit, pad, eval.options(), threads, &out),
        Command::Evaluate {
            hw,
            workload,
            seq_len,
            mapping,
            eval,
        } => cmd_evaluate(&hw, &workload, seq_len, &mapping, eval.options()),
        Command::Validate {
            hw,
            workload,
            seq_len,
            mapping,
            pe_relax,
        } => cmd_validate(&hw, &workload, seq_len, &mapping, pe_relax),
        Command::Verify { max_dims, skip_optimality } => cmd_verify(max_dims, skip_optimality),
        Command::Expand { model, seq_len } => cmd_expand(&model, seq_len),
        Command::Report { runs, baseline, out_dir } => cmd_report(&runs, &baseline, &out_dir),
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_solve(
    hw_path: &Path,
    workload_path: &Path,
    seq_len: Option<u64>,
    time_limit: f64,
    pad: Option<f64>,
    eval: EvalOptions,
    threads: Option<usize>,
    out: &Path,
) -> anyhow::Result<u8> {
    let start = Instant::now();
    let hw = load_hardware(hw_path)?;
    let workload = load_workload(workload_path, seq_len)?;
    if !(time_limit >= 0.0 && time_limit.is_finite()) {
        return Err(Error::InvalidSpec(format!("--time-limit must be >= 0, got {time_limit}")).into());
    }
    let opts = SolveOptions {
        time_limit_s: (time_limit > 0.0).then_some(time_limit),
        eval,
    };
    let solved: Vec<GemmInstance> = match pad {
        Some(slack) => workload.gemms.iter().map(|g| pad_workload(g, slack)).collect::<Result<_, _>>()?,
        None => workload.gemms.clone(),
    };

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().context("building worker pool")?;
    let results: Vec<_> = pool.install(|| {
        workload
            .gemms
            .par_iter()
            .zip(solved.par_iter())
            .map(|(req, g)| solve(g, &hw, &opts).map(|s| RunRecord::new(&workload.name, &hw, req, g, s)))
            .collect()
    });
    let records = results.into_iter().collect::<Result<Vec<_>, _>>()?;

    let options = RunOptions { solve: opts, pad_slack: pad };
    let run = CaseRun::new(&workload.name, &workload.gemms, &hw, options, records, start.elapsed().as_secs_f64())?;
    fs::write(out, run.to_json()).with_context(|| format!("writing {}", out.display()))?;

    let mut code = 0;
    for r in &run.records {
        let c = &r.certificate;
        outln!(
            "{:<14} dims={:?} energy={:.6e} pJ delay={:.6e} s edp={:.6e} gap={} nodes={}",
            r.label, r.dims, r.breakdown.e_total_abs, r.delay_s, r.edp, c.gap, c.nodes_explored
        );
        if c.proof_kind == ProofKind::Incomplete && c.gap > 0.0 {
            code = EXIT_GAP;
        }
    }
    outln!("case_edp={:.6e} pJ*s -> {}", run.case_edp, out.display());
    if code == EXIT_GAP {
        eprintln!("time limit reached with a nonzero optimality gap");
    }
    Ok(code)
}

/// Label/mapping pairs from a mapping file or a run record.
fn read_mappings(path: &Path) -> anyhow::Result<Vec<MappingEntry>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config {
        path: path.to_owned(),
        message: format!("cannot read: {e}"),
    })?;
    if text.contains(RUN_SCHEMA) {
        let run = CaseRun::from_json(path, &text)?;
        return Ok(run
            .records
            .into_iter()
            .map(|r| MappingEntry {
                label: r.label,
                mapping: r.mapping,
            })
            .collect());
    }
    Ok(load_mappings(path)?)
}

fn paired(gemms: &[GemmInstance], mappings: Vec<MappingEntry>, path: &Path) -> anyhow::Result<Vec<(GemmInstance, MappingEntry)>> {
    mappings
        .into_iter()
        .map(|m| {
            let g = gemms.iter().find(|g| g.label == m.label).ok_or_else(|| Error::Config {
                path: path.to_owned(),
                message: format!("mapping for '{}' matches no GEMM in the workload", m.label),
            })?;
            Ok((g.clone(), m))
        })
        .collect()
}

fn cmd_evaluate(hw_path: &Path, workload_path: &Path, seq_len: Option<u64>, mapping_path: &Path, eval: EvalOptions) -> anyhow::Result<u8> {
    let hw = load_hardware(hw_path)?;
    let workload = load_workload(workload_path, seq_len)?;
    let pairs = paired(&workload.gemms, read_mappings(mapping_path)?, mapping_path)?;
    let mut out = Vec::new();
    for (g, m) in pairs {
        let e = energy_total(&m.mapping, &g, &hw, &eval)?;
        let (delay_s, edp) = edp(&e, &hw);
        out.push(serde_json::json!({
            "label": g.label,
            "dims": g.dims,
            "breakdown": e,
            "delay_s": delay_s,
            "edp": edp,
        }));
    }
    outln!("{}", serde_json::to_string_pretty(&out)?);
    Ok(0)
}

fn cmd_validate(hw_path: &Path, workload_path: &Path, seq_len: Option<u64>, mapping_path: &Path, pe_relax: bool) -> anyhow::Result<u8> {
    let hw: HardwareSpec = load_hardware(hw_path)?;
    let workload = load_workload(workload_path, seq_len)?;
    let pe = if pe_relax { PeConstraint::AtMost } else { PeConstraint::Exact };
    let mut code = 0;
    for (g, m) in paired(&workload.gemms, read_mappings(mapping_path)?, mapping_path)? {
        let report = validate_with(&m.mapping, &g, &hw, pe);
        outln!("{}: {report}", g.label);
        if !report.feasible {
            code = EXIT_INFEASIBLE;
        }
    }
    Ok(code)
}

fn cmd_verify(max_dims: u64, skip_optimality: bool) -> anyhow::Result<u8> {
    if max_dims == 0 {
        return Err(Error::InvalidSpec("--max-dims must be >= 1".into()).into());
    }
    let hw = toy_hardware();
    let extents = power_of_two_extents(max_dims);
    let start = Instant::now();
    let sweep = oracle_sweep(&hw, &extents)?;
    outln!(
        "oracle sweep over {:?}^3: {} GEMMs, {} mappings, {} count mismatches, {} energy mismatches, max rel err {:.3e} ({:.1} s)",
        extents,
        sweep.gemms,
        sweep.mappings,
        sweep.count_mismatches,
        sweep.energy_mismatches,
        sweep.max_rel_err,
        start.elapsed().as_secs_f64()
    );
    for f in &sweep.failures {
        outln!("  mismatch: {f}");
    }
    let mut ok = sweep.passed();
    if !skip_optimality {
        let start = Instant::now();
        let opt = solver_vs_exhaustive(&hw, &optimality_instances(), 1_000_000)?;
        outln!(
            "solver vs brute force: {} instances, {} mismatches ({:.1} s)",
            opt.instances,
            opt.mismatches,
            start.elapsed().as_secs_f64()
        );
        for f in &opt.failures {
            outln!("  mismatch: {f}");
        }
        ok &= opt.passed();
    }
    Ok(if ok { 0 } else { EXIT_VERIFY })
}

fn cmd_expand(model: &Path, seq_len: Option<u64>) -> anyhow::Result<u8> {
    let w = load_workload(model, seq_len)?;
    if w.model.is_none() {
        return Err(anyhow!(Error::Config {
            path: model.to_owned(),
            message: "expected a model descriptor".into(),
        }));
    }
    let file = WorkloadFile {
        schema: WORKLOAD_SCHEMA.into(),
        name: w.name,
        note: None,
        gemms: w
            .gemms
            .iter()
            .map(|g| GemmEntry {
                label: g.label.clone(),
                x: g.dims[0],
                y: g.dims[1],
                z: g.dims[2],
                weight: g.weight,
            })
            .collect(),
    };
    outln!("{}", serde_json::to_string_pretty(&file)?);
    Ok(0)
}

fn cmd_report(runs: &[PathBuf], baseline: &Path, out_dir: &Path) -> anyhow::Result<u8> {
    let base = CaseRun::load(baseline)?;
    let runs: Vec<CaseRun> = runs.iter().map(CaseRun::load).collect::<Result<_, _>>()?;
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let norm = out_dir.join("normalized_edp.csv");
    fs::write(&norm, normalized_edp_csv(&runs, &base)?)?;
    outln!("{}", norm.display());
    for run in &runs {
        let name = format!("per_gemm_{}_{}.csv", sanitize(&run.workload_id), sanitize(&run.hardware_id));
        let path = out_dir.join(name);
        fs::write(&path, per_layer_csv(run)?)?;
        outln!("{}", path.display());
    }
    Ok(0)
}

fn sanitize(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' }).collect()
}
