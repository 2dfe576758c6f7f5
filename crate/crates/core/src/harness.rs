//! Run specs, per-instance reports, oracle verification and benchmarks.
//!
//! # Report columns
//!
//! The CSV header is fixed and the JSON report mirrors it row for row:
//!
//! | column | meaning |
//! |---|---|
//! | `id` | instance id |
//! | `algo` | `seq`, `g1`, `psimple`, `pstatic`, `pfull` or `bpida` |
//! | `mode` | `first` or `all` |
//! | `cost` | optimal solution length, empty if none was found |
//! | `solutions` | distinct optimal paths returned |
//! | `nodes_expanded` | all iterations, host root-set work included |
//! | `nodes_generated` | children that passed the operator filter |
//! | `iterations` | f-limits searched |
//! | `repetitions` | block-parallel loop iterations, `0` otherwise |
//! | `load_balance` | max/mean lane (or block) load of the next-to-last iteration |
//! | `sm_efficiency` | occupied SM ticks / all SM ticks |
//! | `ipc_proxy` | active lane steps / issued lane steps |
//! | `sim_steps` | machine ticks over all launches |
//!
//! The last four are empty for `seq`, which does not run on the machine.
//! Wall time is printed in the human table only, so reports are reproducible
//! byte for byte.

use std::fmt;
use std::io::Write;
use std::path::{Path as FsPath, PathBuf};
use std::str::FromStr;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bpida::{run_bpida_in, BlockParallelConfig};
use crate::concurrent::{run_bpida_threads_in, ExecutorConfig};
use crate::error::{Error, Result};
use crate::oracle::{tree_count, BfsOracle};
use crate::puzzle::{korf100, parse_instances, random_solvable, Domain, Instance};
use crate::search::{ida_star_with, path_reaches_goal, Mode, OutcomeKind, SearchConfig, SearchOutcome};
use crate::simt::{MachineConfig, Trace};
use crate::thread_parallel::{
    run_single_lane_in, run_thread_parallel_in, ParallelOutcome, Scheme, ThreadParallelConfig,
};

/// Environment variable naming a directory that replaces the bundled
/// instance files.
pub const DATA_DIR_ENV: &str = "BPIDA_DATA_DIR";

/// File name of the Korf set, bundled or under [`DATA_DIR_ENV`].
pub const KORF_FILE: &str = "korf100.txt";

/// A verify stamp older than this does not unlock `bench`.
pub const STAMP_MAX_AGE: Duration = Duration::from_secs(24 * 3600);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Seq,
    G1,
    PSimple,
    PStatic,
    PFull,
    Bpida,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::Seq,
        Algorithm::G1,
        Algorithm::PSimple,
        Algorithm::PStatic,
        Algorithm::PFull,
        Algorithm::Bpida,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Seq => "seq",
            Algorithm::G1 => "g1",
            Algorithm::PSimple => "psimple",
            Algorithm::PStatic => "pstatic",
            Algorithm::PFull => "pfull",
            Algorithm::Bpida => "bpida",
        }
    }

    /// Whether the algorithm runs on the simulated machine.
    pub fn simulated(self) -> bool {
        self != Algorithm::Seq
    }

    /// Machine shape used when no flag overrides it.
    pub fn default_machine(self) -> MachineConfig {
        match self {
            Algorithm::Bpida => MachineConfig::block_parallel(),
            _ => MachineConfig::default(),
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Algorithm> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown algorithm {s:?}")))
    }
}

pub fn mode_name(mode: Mode) -> &'static str {
    match mode {
        Mode::FirstSolution => "first",
        Mode::AllSolutions => "all",
    }
}

pub fn parse_mode(s: &str) -> Result<Mode> {
    match s {
        "first" => Ok(Mode::FirstSolution),
        "all" => Ok(Mode::AllSolutions),
        _ => Err(Error::Config(format!("unknown mode {s:?}, expected first or all"))),
    }
}

/// Per-field overrides on top of an algorithm's default machine.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MachineOverrides {
    pub warp_size: Option<usize>,
    pub lanes_per_block: Option<usize>,
    pub blocks: Option<usize>,
    pub sm_count: Option<usize>,
}

impl MachineOverrides {
    pub fn apply(&self, mut m: MachineConfig) -> MachineConfig {
        if let Some(v) = self.warp_size {
            m.warp_size = v;
        }
        if let Some(v) = self.lanes_per_block {
            m.lanes_per_block = v;
        }
        if let Some(v) = self.blocks {
            m.blocks = v;
        }
        if let Some(v) = self.sm_count {
            m.sm_count = v;
        }
        m
    }
}

/// Everything needed to reproduce one run over an instance list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub algorithm: Algorithm,
    pub mode: Mode,
    pub machine: MachineOverrides,
    pub stack_capacity: Option<usize>,
    /// Reserved; every default path is deterministic without it.
    pub seed: u64,
    /// Added to every heuristic value. Nonzero only to prove that verify
    /// catches an inadmissible heuristic.
    pub heuristic_offset: u16,
}

impl RunSpec {
    pub fn new(algorithm: Algorithm, mode: Mode) -> RunSpec {
        RunSpec {
            algorithm,
            mode,
            machine: MachineOverrides::default(),
            stack_capacity: None,
            seed: 0,
            heuristic_offset: 0,
        }
    }

    pub fn machine_config(&self) -> MachineConfig {
        self.machine.apply(self.algorithm.default_machine())
    }

    fn domain(&self, instance: &Instance) -> Domain {
        instance.domain().with_heuristic_offset(self.heuristic_offset)
    }

    fn thread_config(&self) -> ThreadParallelConfig {
        let d = ThreadParallelConfig::default();
        ThreadParallelConfig {
            machine: self.machine_config(),
            stack_capacity: self.stack_capacity.unwrap_or(d.stack_capacity),
            ..d
        }
    }

    fn block_config(&self) -> BlockParallelConfig {
        let d = BlockParallelConfig::default();
        BlockParallelConfig {
            machine: self.machine_config(),
            stack_capacity: self.stack_capacity.unwrap_or(d.stack_capacity),
            ..d
        }
    }
}

/// One CSV/JSON report line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub id: u32,
    pub algo: Algorithm,
    pub mode: String,
    pub cost: Option<u32>,
    pub solutions: usize,
    pub nodes_expanded: u64,
    pub nodes_generated: u64,
    pub iterations: usize,
    pub repetitions: u64,
    pub load_balance: Option<f64>,
    pub sm_efficiency: Option<f64>,
    pub ipc_proxy: Option<f64>,
    pub sim_steps: Option<u64>,
}

pub const CSV_COLUMNS: [&str; 13] = [
    "id",
    "algo",
    "mode",
    "cost",
    "solutions",
    "nodes_expanded",
    "nodes_generated",
    "iterations",
    "repetitions",
    "load_balance",
    "sm_efficiency",
    "ipc_proxy",
    "sim_steps",
];

/// A finished run of one instance.
#[derive(Clone, Debug)]
pub struct RunResult {
    pub row: Row,
    pub outcome: SearchOutcome,
    /// Present for algorithms that ran on the machine.
    pub parallel: Option<ParallelOutcome>,
    pub wall: Duration,
}

impl RunResult {
    pub fn limits(&self) -> Vec<u32> {
        self.outcome.iterations.iter().map(|i| i.limit).collect()
    }
}

/// Runs one algorithm on one instance and checks the result's internal
/// invariants: returned paths are valid and of the reported cost, the cost is
/// the final f-limit, and on boards of even side successive limits step by 2.
pub fn run_instance(spec: &RunSpec, instance: &Instance, trace: Option<&mut Trace<'_>>) -> Result<RunResult> {
    let domain = spec.domain(instance);
    let started = Instant::now();
    let (outcome, parallel) = match spec.algorithm {
        Algorithm::Seq => {
            let config = SearchConfig {
                stack_capacity: spec.stack_capacity.unwrap_or(SearchConfig::default().stack_capacity),
                ..SearchConfig::default()
            };
            (ida_star_with(&domain, instance.start, spec.mode, &config)?, None)
        }
        Algorithm::G1 => {
            let p = run_single_lane_in(&domain, instance, spec.mode, &spec.thread_config(), trace)?;
            (p.outcome.clone(), Some(p))
        }
        Algorithm::PSimple | Algorithm::PStatic | Algorithm::PFull => {
            let scheme = match spec.algorithm {
                Algorithm::PSimple => Scheme::Simple,
                Algorithm::PStatic => Scheme::Static,
                _ => Scheme::Full,
            };
            let p = run_thread_parallel_in(&domain, instance, scheme, spec.mode, &spec.thread_config(), trace)?;
            (p.outcome.clone(), Some(p))
        }
        Algorithm::Bpida => {
            let p = run_bpida_in(&domain, instance, spec.mode, &spec.block_config(), trace)?;
            (p.outcome.clone(), Some(p))
        }
    };
    let wall = started.elapsed();
    check_outcome(&domain, instance, &outcome)?;
    let row = Row {
        id: instance.id,
        algo: spec.algorithm,
        mode: mode_name(spec.mode).to_string(),
        cost: outcome.cost(),
        solutions: outcome.paths().len(),
        nodes_expanded: outcome.nodes_expanded,
        nodes_generated: outcome.nodes_generated,
        iterations: outcome.iterations.len(),
        repetitions: parallel.as_ref().map_or(0, |p| p.repetitions()),
        load_balance: parallel.as_ref().map(|p| p.metrics.load_balance),
        sm_efficiency: parallel.as_ref().map(|p| p.metrics.sm_efficiency),
        ipc_proxy: parallel.as_ref().map(|p| p.metrics.ipc_proxy),
        sim_steps: parallel.as_ref().map(|p| p.counters.ticks),
    };
    Ok(RunResult {
        row,
        outcome,
        parallel,
        wall,
    })
}

fn check_outcome(domain: &Domain, instance: &Instance, outcome: &SearchOutcome) -> Result<()> {
    let fail = |msg: String| Err(Error::InvariantViolation(format!("instance {}: {msg}", instance.id)));
    let limits: Vec<u32> = outcome.iterations.iter().map(|i| i.limit).collect();
    if instance.side().is_multiple_of(2) {
        if let Some(w) = limits.windows(2).find(|w| w[1] != w[0] + 2) {
            return fail(format!("f-limit stepped from {} to {}", w[0], w[1]));
        }
    }
    if let OutcomeKind::Found { cost, paths } = &outcome.kind {
        if limits.last() != Some(cost) {
            return fail(format!("cost {cost} is not the final f-limit {:?}", limits.last()));
        }
        for p in paths {
            if p.len() as u32 != *cost || !path_reaches_goal(domain, instance.start, p) {
                return fail(format!("returned path of length {} does not solve the board", p.len()));
            }
        }
    }
    Ok(())
}

/// Rows plus per-algorithm aggregates.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub rows: Vec<Row>,
    pub aggregates: Vec<Aggregate>,
    /// Wall time per row; never serialized.
    #[serde(skip)]
    pub wall: Vec<Duration>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub algo: Algorithm,
    pub metric: String,
    pub count: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub stddev: f64,
    pub total: f64,
}

impl Aggregate {
    fn of(algo: Algorithm, metric: &str, values: &[f64]) -> Option<Aggregate> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let total: f64 = values.iter().sum();
        let mean = total / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Some(Aggregate {
            algo,
            metric: metric.to_string(),
            count: values.len(),
            mean,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            stddev: var.sqrt(),
            total,
        })
    }
}

type Metric = (&'static str, fn(&Row) -> Option<f64>);

const AGGREGATED: [Metric; 7] = [
    ("nodes_expanded", |r| Some(r.nodes_expanded as f64)),
    ("iterations", |r| Some(r.iterations as f64)),
    ("repetitions", |r| Some(r.repetitions as f64)),
    ("load_balance", |r| r.load_balance),
    ("sm_efficiency", |r| r.sm_efficiency),
    ("ipc_proxy", |r| r.ipc_proxy),
    ("sim_steps", |r| r.sim_steps.map(|s| s as f64)),
];

impl Report {
    pub fn from_results(results: Vec<RunResult>) -> Report {
        let wall = results.iter().map(|r| r.wall).collect();
        let rows: Vec<Row> = results.into_iter().map(|r| r.row).collect();
        let mut algos: Vec<Algorithm> = rows.iter().map(|r| r.algo).collect();
        algos.sort();
        algos.dedup();
        let mut aggregates = Vec::new();
        for algo in algos {
            for (name, get) in AGGREGATED {
                let values: Vec<f64> = rows.iter().filter(|r| r.algo == algo).filter_map(get).collect();
                aggregates.extend(Aggregate::of(algo, name, &values));
            }
        }
        Report { rows, aggregates, wall }
    }

    pub fn aggregate(&self, algo: Algorithm, metric: &str) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.algo == algo && a.metric == metric)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        w.write_record(CSV_COLUMNS)?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }

    /// Writes CSV or JSON depending on the extension (`.json` for JSON).
    pub fn save(&self, path: &FsPath) -> Result<()> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => self.write_json(file),
            _ => self.write_csv(file),
        }
    }

    /// Fixed-width table for terminals, with wall time per row.
    pub fn render_table(&self) -> String {
        let opt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.3}"));
        let mut s = format!(
            "{:>5} {:>8} {:>5} {:>4} {:>4} {:>12} {:>4} {:>10} {:>7} {:>6} {:>6} {:>10} {:>9}\n",
            "id", "algo", "mode", "cost", "sols", "expanded", "its", "reps", "lb", "sm", "ipc", "steps", "wall_ms"
        );
        for (i, r) in self.rows.iter().enumerate() {
            let wall = self.wall.get(i).map_or(0.0, |d| d.as_secs_f64() * 1e3);
            s += &format!(
                "{:>5} {:>8} {:>5} {:>4} {:>4} {:>12} {:>4} {:>10} {:>7} {:>6} {:>6} {:>10} {:>9.1}\n",
                r.id,
                r.algo.name(),
                r.mode,
                r.cost.map_or("-".to_string(), |c| c.to_string()),
                r.solutions,
                r.nodes_expanded,
                r.iterations,
                r.repetitions,
                opt(r.load_balance),
                opt(r.sm_efficiency),
                opt(r.ipc_proxy),
                r.sim_steps.map_or("-".to_string(), |s| s.to_string()),
                wall,
            );
        }
        if !self.aggregates.is_empty() {
            s += &format!(
                "\n{:>8} {:>15} {:>14} {:>14} {:>14} {:>14}\n",
                "algo", "metric", "mean", "min", "max", "stddev"
            );
            for a in &self.aggregates {
                s += &format!(
                    "{:>8} {:>15} {:>14.4} {:>14.4} {:>14.4} {:>14.4}\n",
                    a.algo.name(),
                    a.metric,
                    a.mean,
                    a.min,
                    a.max,
                    a.stddev
                );
            }
        }
        s
    }
}

/// Runs `spec` on every instance. Without a trace, instances run in parallel
/// on host threads; rows keep the input order either way.
pub fn solve(spec: &RunSpec, instances: &[Instance], trace: Option<&mut Trace<'_>>) -> Result<Report> {
    let results = match trace {
        Some(t) => {
            let mut out = Vec::with_capacity(instances.len());
            for inst in instances {
                out.push(run_instance(spec, inst, Some(&mut *t))?);
            }
            out
        }
        None => instances
            .par_iter()
            .map(|inst| run_instance(spec, inst, None))
            .collect::<Result<Vec<_>>>()?,
    };
    Ok(Report::from_results(results))
}

/// Runs several algorithms over the same instances; rows are grouped by
/// algorithm in the order given.
pub fn compare(specs: &[RunSpec], instances: &[Instance]) -> Result<Report> {
    let jobs: Vec<(&RunSpec, &Instance)> = specs
        .iter()
        .flat_map(|s| instances.iter().map(move |i| (s, i)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|(s, i)| run_instance(s, i, None))
        .collect::<Result<Vec<_>>>()?;
    Ok(Report::from_results(results))
}

/// The Korf set, from [`DATA_DIR_ENV`] if set, else the bundled copy.
/// `easy_n` keeps the first `n` (easiest) entries.
pub fn load_korf(easy_n: Option<usize>) -> Result<Vec<Instance>> {
    let mut all = match std::env::var_os(DATA_DIR_ENV) {
        Some(dir) => load_instances(&PathBuf::from(dir).join(KORF_FILE))?,
        None => korf100(),
    };
    if let Some(n) = easy_n {
        all.truncate(n);
    }
    Ok(all)
}

pub fn load_instances(path: &FsPath) -> Result<Vec<Instance>> {
    let text = std::fs::read_to_string(path)?;
    parse_instances(&text)
}

/// `n` random solvable boards of the given side, numbered from 1.
pub fn random_suite(side: u8, n: usize, seed: u64) -> Vec<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (1..=n as u32).map(|id| random_solvable(side, id, &mut rng)).collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VerifySpec {
    pub algorithms: Vec<Algorithm>,
    pub count: usize,
    pub seed: u64,
    pub machine: MachineOverrides,
    pub heuristic_offset: u16,
    /// Also run the host-thread block-parallel executor and require the same
    /// results as the machine.
    pub executor: bool,
}

impl Default for VerifySpec {
    fn default() -> Self {
        VerifySpec {
            algorithms: Algorithm::ALL.to_vec(),
            count: 200,
            seed: 0x8bad_5eed,
            machine: MachineOverrides::default(),
            heuristic_offset: 0,
            executor: true,
        }
    }
}

/// One cell of the verify matrix.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyCell {
    pub algo: String,
    pub checked: usize,
    pub failed: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub cells: Vec<VerifyCell>,
    /// First failing instance as a replayable line, with the reason.
    pub first_failure: Option<(String, String)>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.first_failure.is_none()
    }

    pub fn into_result(self) -> Result<VerifyReport> {
        match &self.first_failure {
            None => Ok(self),
            Some((instance, detail)) => Err(Error::OracleMismatch {
                instance: instance.clone(),
                detail: detail.clone(),
            }),
        }
    }

    pub fn save_json(&self, path: &FsPath) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn render(&self) -> String {
        let mut s = format!("{:>10} {:>8} {:>7} {:>6}\n", "algo", "checked", "failed", "result");
        for c in &self.cells {
            let verdict = if c.failed == 0 { "pass" } else { "FAIL" };
            s += &format!("{:>10} {:>8} {:>7} {:>6}\n", c.algo, c.checked, c.failed, verdict);
        }
        if let Some((inst, detail)) = &self.first_failure {
            s += &format!("first counterexample: {inst}\n  {detail}\n");
        }
        s
    }
}

/// Checks every configured algorithm against the full-space BFS oracle on a
/// seeded suite of random 8-puzzles, in AllSolutions mode: the cost, the
/// number of optimal paths, and the nodes expanded at the final limit must
/// all match. Mismatches are collected rather than returned early.
pub fn verify(spec: &VerifySpec) -> Result<VerifyReport> {
    let oracle = BfsOracle::build(3);
    let suite = random_suite(3, spec.count, spec.seed);
    let mut cells = Vec::new();
    let mut first_failure = None;
    let mut record = |name: String, failures: Vec<(String, String)>, first: &mut Option<(String, String)>| {
        cells.push(VerifyCell {
            algo: name,
            checked: suite.len(),
            failed: failures.len(),
        });
        if first.is_none() {
            *first = failures.into_iter().next();
        }
    };
    for &algo in &spec.algorithms {
        let run = RunSpec {
            machine: spec.machine,
            heuristic_offset: spec.heuristic_offset,
            ..RunSpec::new(algo, Mode::AllSolutions)
        };
        let failures: Vec<(String, String)> = suite
            .par_iter()
            .filter_map(|inst| {
                let detail = match run_instance(&run, inst, None) {
                    Ok(r) => check_against_oracle(&oracle, inst, &r.outcome).err(),
                    Err(e) => Some(e.to_string()),
                };
                detail.map(|d| (inst.to_line(), format!("{algo}: {d}")))
            })
            .collect();
        record(algo.name().to_string(), failures, &mut first_failure);
    }
    if spec.executor {
        let run = RunSpec {
            machine: spec.machine,
            heuristic_offset: spec.heuristic_offset,
            ..RunSpec::new(Algorithm::Bpida, Mode::AllSolutions)
        };
        let failures: Vec<(String, String)> = suite
            .iter()
            .filter_map(|inst| executor_matches_machine(&run, inst).err().map(|d| (inst.to_line(), d)))
            .collect();
        record("executor".to_string(), failures, &mut first_failure);
    }
    Ok(VerifyReport { cells, first_failure })
}

fn check_against_oracle(oracle: &BfsOracle, inst: &Instance, outcome: &SearchOutcome) -> std::result::Result<(), String> {
    let want = oracle.cost(&inst.start).ok_or("board missing from the oracle")?;
    let got = outcome.cost();
    if got != Some(want) {
        return Err(format!("cost {got:?}, oracle {want}"));
    }
    let paths = oracle.optimal_path_count(&inst.start).ok_or("board missing from the oracle")?;
    if outcome.paths().len() as u64 != paths {
        return Err(format!("{} optimal paths, oracle {paths}", outcome.paths().len()));
    }
    let last = outcome.iterations.last().ok_or("no iterations")?;
    let tree = tree_count(&inst.start, want, true);
    if last.expanded != tree.nodes {
        return Err(format!("{} nodes at limit {want}, tree count {}", last.expanded, tree.nodes));
    }
    Ok(())
}

/// Runs the host-thread executor and the machine on one instance and
/// compares costs, solution paths and per-limit node totals.
pub fn executor_matches_machine(spec: &RunSpec, inst: &Instance) -> std::result::Result<(), String> {
    let domain = spec.domain(inst);
    let cfg = spec.block_config();
    let machine = run_bpida_in(&domain, inst, spec.mode, &cfg, None).map_err(|e| format!("machine: {e}"))?;
    let threads = run_bpida_threads_in(&domain, inst, spec.mode, &cfg, &ExecutorConfig::default())
        .map_err(|e| format!("executor: {e}"))?;
    let (m, t) = (&machine.outcome, &threads.outcome);
    if m.cost() != t.cost() {
        return Err(format!("executor cost {:?}, machine {:?}", t.cost(), m.cost()));
    }
    if spec.mode == Mode::AllSolutions {
        if m.paths() != t.paths() {
            return Err(format!("executor found {} paths, machine {}", t.paths().len(), m.paths().len()));
        }
        let per_limit = |o: &SearchOutcome| o.iterations.iter().map(|i| (i.limit, i.expanded)).collect::<Vec<_>>();
        if per_limit(m) != per_limit(t) {
            return Err(format!("per-limit totals differ: executor {:?}, machine {:?}", per_limit(t), per_limit(m)));
        }
    }
    Ok(())
}

/// Record that a verify run passed; `bench` requires a fresh one.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyStamp {
    pub version: String,
    pub unix_time: u64,
    pub count: usize,
    pub seed: u64,
    pub algorithms: Vec<Algorithm>,
}

impl VerifyStamp {
    pub fn for_spec(spec: &VerifySpec) -> VerifyStamp {
        VerifyStamp {
            version: env!("CARGO_PKG_VERSION").to_string(),
            unix_time: now_unix(),
            count: spec.count,
            seed: spec.seed,
            algorithms: spec.algorithms.clone(),
        }
    }

    pub fn write(&self, path: &FsPath) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    /// Reads a stamp and checks it was written by this version, within
    /// [`STAMP_MAX_AGE`], by a verify run that covered every algorithm.
    pub fn check_fresh(path: &FsPath) -> Result<VerifyStamp> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("no verify stamp at {}: {e}; run verify first or pass --force", path.display())))?;
        let stamp: VerifyStamp = serde_json::from_str(&text)?;
        let stale = |why: &str| Err(Error::Config(format!("verify stamp {} is {why}; run verify again or pass --force", path.display())));
        if stamp.version != env!("CARGO_PKG_VERSION") {
            return stale("from another version");
        }
        if now_unix().saturating_sub(stamp.unix_time) > STAMP_MAX_AGE.as_secs() {
            return stale("too old");
        }
        if Algorithm::ALL.iter().any(|a| !stamp.algorithms.contains(a)) {
            return stale("missing algorithms");
        }
        Ok(stamp)
    }
}

fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

/// Runs every spec over the instances for a publishable CSV. Refuses to run
/// without a fresh verify stamp unless `force` is set.
pub fn bench(specs: &[RunSpec], instances: &[Instance], stamp: &FsPath, force: bool) -> Result<Report> {
    if !force {
        VerifyStamp::check_fresh(stamp)?;
    }
    compare(specs, instances)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::puzzle::{parse_instance, PuzzleState};

    fn solved() -> Instance {
        Instance::new(7, PuzzleState::goal(3)).unwrap()
    }

    #[test]
    fn algorithm_names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
            assert_eq!(a.to_string(), a.name());
        }
        assert!("pfulllb".parse::<Algorithm>().is_err());
    }

    #[test]
    fn solved_board_costs_zero_in_one_row() {
        let report = solve(&RunSpec::new(Algorithm::Seq, Mode::FirstSolution), &[solved()], None).unwrap();
        assert_eq!(report.rows.len(), 1);
        assert_eq!(report.rows[0].cost, Some(0));
        assert_eq!(report.rows[0].load_balance, None);
    }

    #[test]
    fn csv_header_matches_documented_columns() {
        let inst = parse_instance("1: 1 2 5 3 4 0 6 7 8").unwrap();
        let report = solve(&RunSpec::new(Algorithm::PSimple, Mode::AllSolutions), &[inst], None).unwrap();
        let csv = report.to_csv_string().unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), CSV_COLUMNS.join(","));
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row.len(), CSV_COLUMNS.len());
        assert_eq!(&row[..4], ["1", "psimple", "all", "3"]);
    }

    #[test]
    fn seq_row_leaves_machine_columns_empty() {
        let report = solve(&RunSpec::new(Algorithm::Seq, Mode::FirstSolution), &[solved()], None).unwrap();
        let csv = report.to_csv_string().unwrap();
        assert!(csv.lines().nth(1).unwrap().ends_with(",,,,"));
    }

    #[test]
    fn aggregates_cover_each_algorithm() {
        let suite = random_suite(3, 4, 1);
        let specs = [RunSpec::new(Algorithm::Seq, Mode::FirstSolution), RunSpec::new(Algorithm::Bpida, Mode::FirstSolution)];
        let report = compare(&specs, &suite).unwrap();
        assert_eq!(report.rows.len(), 8);
        let a = report.aggregate(Algorithm::Seq, "nodes_expanded").unwrap();
        assert_eq!(a.count, 4);
        assert!(a.min <= a.mean && a.mean <= a.max);
        assert!(report.aggregate(Algorithm::Seq, "ipc_proxy").is_none());
        assert!(report.aggregate(Algorithm::Bpida, "ipc_proxy").is_some());
    }

    #[test]
    fn aggregate_statistics() {
        let a = Aggregate::of(Algorithm::Seq, "x", &[1.0, 3.0]).unwrap();
        assert_eq!((a.mean, a.min, a.max, a.stddev, a.total), (2.0, 1.0, 3.0, 1.0, 4.0));
    }

    #[test]
    fn overrides_replace_only_given_fields() {
        let o = MachineOverrides {
            blocks: Some(3),
            ..MachineOverrides::default()
        };
        let m = o.apply(MachineConfig::default());
        assert_eq!(m.blocks, 3);
        assert_eq!(m.warp_size, MachineConfig::default().warp_size);
    }

    #[test]
    fn small_verify_passes() {
        let spec = VerifySpec {
            count: 5,
            ..VerifySpec::default()
        };
        let report = verify(&spec).unwrap();
        assert!(report.passed(), "{}", report.render());
        assert_eq!(report.cells.len(), Algorithm::ALL.len() + 1);
    }

    #[test]
    fn inadmissible_heuristic_is_caught() {
        let spec = VerifySpec {
            count: 10,
            heuristic_offset: 1,
            executor: false,
            ..VerifySpec::default()
        };
        let err = verify(&spec).unwrap().into_result().unwrap_err();
        assert!(matches!(err, Error::OracleMismatch { .. }), "{err}");
    }

    #[test]
    fn bench_needs_a_fresh_stamp() {
        let dir = std::env::temp_dir().join(format!("bpida-stamp-{}", std::process::id()));
        let path = dir.join("verify.stamp");
        let specs = [RunSpec::new(Algorithm::Seq, Mode::FirstSolution)];
        assert!(bench(&specs, &[solved()], &path, false).is_err());
        assert!(bench(&specs, &[solved()], &path, true).is_ok());
        let mut stamp = VerifyStamp::for_spec(&VerifySpec::default());
        stamp.write(&path).unwrap();
        assert!(bench(&specs, &[solved()], &path, false).is_ok());
        stamp.unix_time -= STAMP_MAX_AGE.as_secs() + 1;
        stamp.write(&path).unwrap();
        assert!(bench(&specs, &[solved()], &path, false).is_err());
        std::fs::remove_dir_all(dir).unwrap();
    }
}
