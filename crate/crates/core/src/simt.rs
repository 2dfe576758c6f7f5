//! Deterministic lockstep SIMT machine.
//!
//! Lanes are grouped into warps, warps into blocks, and blocks are resident
//! on streaming multiprocessors (SMs). Every tick, each resident warp issues
//! at most one instruction; lanes that do not take part are masked. The
//! machine never looks inside a program: it only records which lanes each
//! issued instruction covered, which is all the metrics need.
//!
//! Blocks that do not fit on the SMs wait in a FIFO queue and are admitted
//! when a resident block retires.

use std::collections::{BTreeSet, VecDeque};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MachineConfig {
    /// Lanes per warp, at most 64.
    pub warp_size: usize,
    /// A multiple of `warp_size`.
    pub lanes_per_block: usize,
    pub sm_count: usize,
    /// Resident warps each SM can hold.
    pub warp_slots_per_sm: usize,
    pub blocks: usize,
}

impl Default for MachineConfig {
    /// 8 SMs of 6 warp slots at warp size 32: 1536 lanes fully resident.
    fn default() -> Self {
        MachineConfig {
            warp_size: 32,
            lanes_per_block: 192,
            sm_count: 8,
            warp_slots_per_sm: 6,
            blocks: 8,
        }
    }
}

impl MachineConfig {
    /// Warp-sized blocks, enough of them to fill every warp slot.
    pub fn block_parallel() -> MachineConfig {
        let base = MachineConfig::default();
        MachineConfig {
            lanes_per_block: base.warp_size,
            blocks: base.sm_count * base.warp_slots_per_sm,
            ..base
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.warp_size == 0 || self.warp_size > 64 {
            return fail(format!("warp_size must be in 1..=64, got {}", self.warp_size));
        }
        if self.lanes_per_block < self.warp_size || !self.lanes_per_block.is_multiple_of(self.warp_size) {
            return fail(format!(
                "lanes_per_block {} must be a positive multiple of warp_size {}",
                self.lanes_per_block, self.warp_size
            ));
        }
        if self.sm_count == 0 || self.blocks == 0 {
            return fail("sm_count and blocks must be positive".into());
        }
        if self.warps_per_block() > self.warp_slots_per_sm {
            return fail(format!(
                "a block needs {} warp slots but an SM has {}",
                self.warps_per_block(),
                self.warp_slots_per_sm
            ));
        }
        Ok(())
    }

    pub fn warps_per_block(&self) -> usize {
        self.lanes_per_block / self.warp_size
    }

    pub fn blocks_per_sm(&self) -> usize {
        self.warp_slots_per_sm / self.warps_per_block()
    }

    pub fn total_lanes(&self) -> usize {
        self.lanes_per_block * self.blocks
    }

    /// Lanes the SMs can run at once. Informational only.
    pub fn total_cores(&self) -> usize {
        self.sm_count * self.warp_slots_per_sm * self.warp_size
    }
}

/// What one warp did in one tick.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WarpIssue {
    /// Nothing runnable; the warp does not issue.
    Idle,
    /// One instruction issued for the lanes in the mask.
    Issued(u64),
    /// The warp is held at a block barrier: it occupies its slot and issues
    /// with no active lanes.
    Stall,
}

/// A block's program, stepped one warp-instruction at a time.
pub trait BlockProgram {
    /// State visible to every block (work queues, the halt flag).
    type Shared: SharedState;

    /// Called once per tick before this block's warps step.
    fn begin_tick(&mut self, _shared: &mut Self::Shared) {}

    fn step_warp(&mut self, warp: usize, shared: &mut Self::Shared) -> WarpIssue;

    /// Checked at the end of every tick; a finished block is retired.
    fn finished(&self, shared: &Self::Shared) -> bool;
}

pub trait SharedState {
    /// Stop the launch at the end of the current tick.
    fn halted(&self) -> bool {
        false
    }
}

impl SharedState for () {}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepCounters {
    pub ticks: u64,
    pub lane_steps_total: u64,
    pub lane_steps_active: u64,
    pub sm_ticks_total: u64,
    pub sm_ticks_occupied: u64,
    /// Occupied ticks per SM.
    pub sm_occupied: Vec<u64>,
    /// Filled by the scheme that ran; the machine does not know what a node is.
    pub per_lane_expansions: Vec<u64>,
}

impl StepCounters {
    /// Adds `other` to `self`. Per-lane vectors are summed element-wise.
    pub fn merge(&mut self, other: &StepCounters) {
        self.ticks += other.ticks;
        self.lane_steps_total += other.lane_steps_total;
        self.lane_steps_active += other.lane_steps_active;
        self.sm_ticks_total += other.sm_ticks_total;
        self.sm_ticks_occupied += other.sm_ticks_occupied;
        add_into(&mut self.sm_occupied, &other.sm_occupied);
        add_into(&mut self.per_lane_expansions, &other.per_lane_expansions);
    }
}

fn add_into(acc: &mut Vec<u64>, v: &[u64]) {
    if acc.len() < v.len() {
        acc.resize(v.len(), 0);
    }
    for (a, b) in acc.iter_mut().zip(v) {
        *a += b;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub load_balance: f64,
    pub sm_efficiency: f64,
    pub ipc_proxy: f64,
}

/// `max / mean` of a load vector, or `None` if it is empty or all zero.
pub fn load_balance(loads: &[u64]) -> Option<f64> {
    let total: u64 = loads.iter().sum();
    if loads.is_empty() || total == 0 {
        return None;
    }
    let max = *loads.iter().max().expect("non-empty") as f64;
    Some(max / (total as f64 / loads.len() as f64))
}

pub fn compute_metrics(c: &StepCounters) -> Result<Metrics> {
    let load_balance = load_balance(&c.per_lane_expansions).ok_or(Error::EmptyRun)?;
    let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Ok(Metrics {
        load_balance,
        sm_efficiency: ratio(c.sm_ticks_occupied, c.sm_ticks_total),
        ipc_proxy: ratio(c.lane_steps_active, c.lane_steps_total),
    })
}

/// One line of the optional NDJSON trace.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "ev", rename_all = "snake_case")]
pub enum TraceRecord {
    Launch { launch: u64, sm_count: usize, warp_size: usize },
    Issue { launch: u64, tick: u64, sm: usize, block: usize, warp: usize, mask: u64, stall: bool },
    End { launch: u64, ticks: u64 },
}

/// NDJSON trace sink shared by every launch of a run.
pub struct Trace<'a> {
    out: &'a mut dyn Write,
    launches: u64,
}

impl<'a> Trace<'a> {
    pub fn new(out: &'a mut dyn Write) -> Trace<'a> {
        Trace { out, launches: 0 }
    }

    fn emit(&mut self, rec: &TraceRecord) -> Result<()> {
        serde_json::to_writer(&mut *self.out, rec)?;
        self.out.write_all(b"\n")?;
        Ok(())
    }
}

struct Sm {
    resident: Vec<usize>,
}

/// Runs `blocks` to completion (or until the shared state halts).
///
/// Blocks are admitted in index order, each to the SM with the most free
/// slots (lowest index on ties). Within a tick, SMs step in index order,
/// blocks in admission order and warps in index order, so any shared state
/// sees one fixed interleaving.
pub fn run_machine<P: BlockProgram>(
    config: &MachineConfig,
    blocks: &mut [P],
    shared: &mut P::Shared,
    mut trace: Option<&mut Trace<'_>>,
) -> Result<StepCounters> {
    config.validate()?;
    let warps = config.warps_per_block();
    let ws = config.warp_size as u64;
    let cap = config.blocks_per_sm();
    let mut sms: Vec<Sm> = (0..config.sm_count).map(|_| Sm { resident: Vec::new() }).collect();
    let mut queue: VecDeque<usize> = (0..blocks.len()).collect();
    let mut c = StepCounters {
        sm_occupied: vec![0; config.sm_count],
        ..StepCounters::default()
    };
    let launch = match trace.as_deref_mut() {
        Some(t) => {
            let id = t.launches;
            t.launches += 1;
            t.emit(&TraceRecord::Launch {
                launch: id,
                sm_count: config.sm_count,
                warp_size: config.warp_size,
            })?;
            id
        }
        None => 0,
    };

    loop {
        while let Some(&b) = queue.front() {
            let Some((s, _)) = sms
                .iter()
                .enumerate()
                .filter(|(_, sm)| sm.resident.len() < cap)
                .max_by_key(|(i, sm)| (cap - sm.resident.len(), std::cmp::Reverse(*i)))
            else {
                break;
            };
            queue.pop_front();
            sms[s].resident.push(b);
        }
        if sms.iter().all(|sm| sm.resident.is_empty()) {
            break;
        }

        let mut issued_any = false;
        let mut occupied = vec![false; config.sm_count];
        for (s, sm) in sms.iter().enumerate() {
            for &b in &sm.resident {
                let prog = &mut blocks[b];
                prog.begin_tick(shared);
                for w in 0..warps {
                    let (mask, stall) = match prog.step_warp(w, shared) {
                        WarpIssue::Idle => continue,
                        WarpIssue::Issued(m) => (m, false),
                        WarpIssue::Stall => (0, true),
                    };
                    debug_assert!(ws == 64 || mask >> ws == 0, "mask wider than the warp");
                    issued_any = true;
                    occupied[s] = true;
                    c.lane_steps_total += ws;
                    c.lane_steps_active += mask.count_ones() as u64;
                    if let Some(t) = trace.as_deref_mut() {
                        t.emit(&TraceRecord::Issue {
                            launch,
                            tick: c.ticks,
                            sm: s,
                            block: b,
                            warp: w,
                            mask,
                            stall,
                        })?;
                    }
                }
            }
        }

        if issued_any {
            c.ticks += 1;
            c.sm_ticks_total += config.sm_count as u64;
            for (s, &o) in occupied.iter().enumerate() {
                if o {
                    c.sm_ticks_occupied += 1;
                    c.sm_occupied[s] += 1;
                }
            }
        }
        let mut retired = false;
        for sm in &mut sms {
            let before = sm.resident.len();
            sm.resident.retain(|&b| !blocks[b].finished(shared));
            retired |= sm.resident.len() != before;
        }
        if shared.halted() {
            break;
        }
        if !issued_any && !retired {
            return Err(Error::DeadlockDetected { tick: c.ticks });
        }
    }

    if let Some(t) = trace {
        t.emit(&TraceRecord::End { launch, ticks: c.ticks })?;
    }
    Ok(c)
}

/// Recomputes counters from trace records without using the machine.
pub fn recount_trace<'r>(records: impl IntoIterator<Item = &'r TraceRecord>) -> StepCounters {
    let mut c = StepCounters::default();
    let mut warp_size = 0u64;
    let mut sm_count = 0usize;
    let mut seen: BTreeSet<(u64, u64, usize)> = BTreeSet::new();
    for r in records {
        match *r {
            TraceRecord::Launch { sm_count: s, warp_size: w, .. } => {
                warp_size = w as u64;
                sm_count = s;
                if c.sm_occupied.len() < s {
                    c.sm_occupied.resize(s, 0);
                }
            }
            TraceRecord::Issue { launch, tick, sm, mask, .. } => {
                c.lane_steps_total += warp_size;
                c.lane_steps_active += mask.count_ones() as u64;
                if seen.insert((launch, tick, sm)) {
                    c.sm_ticks_occupied += 1;
                    c.sm_occupied[sm] += 1;
                }
            }
            TraceRecord::End { ticks, .. } => {
                c.ticks += ticks;
                c.sm_ticks_total += ticks * sm_count as u64;
            }
        }
    }
    c
}
