//! `bpida`: solve, verify, compare and benchmark the IDA* variants.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use bpida::harness::{
    self, compare, load_instances, load_korf, parse_mode, verify, Algorithm, MachineOverrides, Report, RunSpec,
    VerifySpec, VerifyStamp,
};
use bpida::simt::Trace;
use bpida::{Instance, Mode};
use clap::{Args, Parser, Subcommand};

const DEFAULT_STAMP: &str = ".bpida/verify.stamp";

#[derive(Parser)]
#[command(name = "bpida", version, about = "Parallel IDA* lab on a deterministic SIMT machine model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one algorithm over an instance list.
    Solve(SolveArgs),
    /// Check every algorithm against the BFS oracle on random 8-puzzles.
    Verify(VerifyArgs),
    /// Run several algorithms over the same instances.
    Compare(CompareArgs),
    /// Like compare, but requires a fresh passing verify stamp.
    Bench(BenchArgs),
}

#[derive(Args)]
struct InstanceArgs {
    /// Instance file, one board per line. Defaults to the Korf set.
    #[arg(long)]
    instances: Option<PathBuf>,
    /// Keep only the first k instances (the Korf set is easiest first).
    #[arg(long, value_name = "K")]
    easy_n: Option<usize>,
}

impl InstanceArgs {
    fn load(&self) -> Result<Vec<Instance>> {
        let mut list = match &self.instances {
            Some(path) => load_instances(path).with_context(|| format!("reading {}", path.display()))?,
            None => load_korf(None).context("loading the Korf set")?,
        };
        if let Some(n) = self.easy_n {
            list.truncate(n);
        }
        if list.is_empty() {
            bail!("no instances selected");
        }
        Ok(list)
    }
}

#[derive(Args)]
struct MachineArgs {
    #[arg(long)]
    warp_size: Option<usize>,
    #[arg(long)]
    lanes_per_block: Option<usize>,
    #[arg(long)]
    blocks: Option<usize>,
    #[arg(long)]
    sm_count: Option<usize>,
    /// Per-lane stack entries, or shared stack entries for bpida.
    #[arg(long)]
    stack_capacity: Option<usize>,
}

impl MachineArgs {
    fn overrides(&self) -> MachineOverrides {
        MachineOverrides {
            warp_size: self.warp_size,
            lanes_per_block: self.lanes_per_block,
            blocks: self.blocks,
            sm_count: self.sm_count,
        }
    }

    fn spec(&self, algorithm: Algorithm, mode: Mode) -> RunSpec {
        RunSpec {
            machine: self.overrides(),
            stack_capacity: self.stack_capacity,
            ..RunSpec::new(algorithm, mode)
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long, value_parser = parse_algo)]
    algo: Algorithm,
    #[arg(long, default_value = "first", value_parser = parse_mode_arg)]
    mode: Mode,
    #[command(flatten)]
    select: InstanceArgs,
    #[command(flatten)]
    machine: MachineArgs,
    /// Report path; `.json` writes JSON, anything else CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    /// NDJSON machine trace; runs instances one at a time.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Algorithms to check; all of them by default.
    #[arg(long, value_delimiter = ',', value_parser = parse_algo)]
    algo: Vec<Algorithm>,
    /// Random solvable 8-puzzles to check.
    #[arg(long, default_value_t = 200)]
    count: usize,
    #[arg(long, default_value_t = VerifySpec::default().seed)]
    seed: u64,
    #[command(flatten)]
    machine: MachineArgs,
    /// Skip the host-thread executor comparison.
    #[arg(long)]
    no_executor: bool,
    /// Where a passing run records its stamp.
    #[arg(long, default_value = DEFAULT_STAMP)]
    stamp: PathBuf,
    /// Report path for the pass/fail matrix (JSON).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Test hook: add this to every heuristic value.
    #[arg(long, hide = true, default_value_t = 0)]
    fault_h_offset: u16,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long, value_delimiter = ',', value_parser = parse_algo, default_value = "psimple,pstatic,pfull,bpida")]
    algo: Vec<Algorithm>,
    #[arg(long, default_value = "first", value_parser = parse_mode_arg)]
    mode: Mode,
    #[command(flatten)]
    select: InstanceArgs,
    #[command(flatten)]
    machine: MachineArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    run: CompareArgs,
    /// Verify stamp to check.
    #[arg(long, default_value = DEFAULT_STAMP)]
    stamp: PathBuf,
    /// Run without a fresh passing verify stamp.
    #[arg(long)]
    force: bool,
}

fn parse_algo(s: &str) -> std::result::Result<Algorithm, String> {
    s.parse().map_err(|e: bpida::Error| e.to_string())
}

fn parse_mode_arg(s: &str) -> std::result::Result<Mode, String> {
    parse_mode(s).map_err(|e| e.to_string())
}

fn write_report(report: &Report, out: Option<&Path>) -> Result<()> {
    print!("{}", report.render_table());
    if let Some(path) = out {
        report.save(path).with_context(|| format!("writing {}", path.display()))?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn solve(args: &SolveArgs) -> Result<()> {
    let instances = args.select.load()?;
    let spec = args.machine.spec(args.algo, args.mode);
    let report = match &args.trace {
        Some(path) => {
            let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
            let mut out = BufWriter::new(file);
            let mut trace = Trace::new(&mut out);
            let report = harness::solve(&spec, &instances, Some(&mut trace))?;
            out.flush()?;
            report
        }
        None => harness::solve(&spec, &instances, None)?,
    };
    write_report(&report, args.out.as_deref())
}

fn run_compare(args: &CompareArgs) -> Result<Report> {
    let instances = args.select.load()?;
    let specs: Vec<RunSpec> = args.algo.iter().map(|&a| args.machine.spec(a, args.mode)).collect();
    Ok(compare(&specs, &instances)?)
}

fn print_balance_order(report: &Report, algos: &[Algorithm]) {
    let means: Vec<(Algorithm, f64)> = algos
        .iter()
        .filter_map(|&a| report.aggregate(a, "load_balance").map(|g| (a, g.mean)))
        .collect();
    if means.len() < 2 {
        return;
    }
    let order: Vec<String> = means.iter().map(|(a, m)| format!("{a} {m:.2}")).collect();
    let decreasing = means.windows(2).all(|w| w[0].1 > w[1].1);
    println!(
        "\nload_balance means: {} ({})",
        order.join(" > "),
        if decreasing { "strictly decreasing" } else { "not decreasing" }
    );
}

fn run_verify(args: &VerifyArgs) -> Result<bool> {
    let spec = VerifySpec {
        algorithms: if args.algo.is_empty() { Algorithm::ALL.to_vec() } else { args.algo.clone() },
        count: args.count,
        seed: args.seed,
        machine: args.machine.overrides(),
        heuristic_offset: args.fault_h_offset,
        executor: !args.no_executor,
    };
    let report = verify(&spec)?;
    print!("{}", report.render());
    if let Some(path) = &args.out {
        report.save_json(path).with_context(|| format!("writing {}", path.display()))?;
    }
    if !report.passed() {
        let err = report.into_result().unwrap_err();
        eprintln!("error: {err}");
        return Ok(false);
    }
    if spec.heuristic_offset == 0 {
        VerifyStamp::for_spec(&spec)
            .write(&args.stamp)
            .with_context(|| format!("writing {}", args.stamp.display()))?;
        eprintln!("verify passed; stamp written to {}", args.stamp.display());
    }
    Ok(true)
}

fn run() -> Result<bool> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Solve(args) => solve(args)?,
        Command::Verify(args) => return run_verify(args),
        Command::Compare(args) => {
            let report = run_compare(args)?;
            write_report(&report, args.out.as_deref())?;
            print_balance_order(&report, &args.algo);
        }
        Command::Bench(args) => {
            if !args.force {
                VerifyStamp::check_fresh(&args.stamp)?;
            }
            let report = run_compare(&args.run)?;
            write_report(&report, args.run.out.as_deref())?;
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
