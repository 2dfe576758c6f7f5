//! Sliding-tile puzzle domain.
//!
//! Boards are `side × side` with `side ∈ {3, 4}`. Tile `0` is the blank. The
//! goal is always the canonical board: blank at index 0 and tiles ascending,
//! so tile `t` belongs at index `t`.
//!
//! A state packs one nibble per cell into a `u64`, which keeps a 15-puzzle
//! state at 16 bytes including the blank index and side length.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_CELLS: usize = 16;

const NO_MOVE: u8 = u8::MAX;

/// Direction the blank moves in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Operator {
    Up,
    Right,
    Down,
    Left,
}

impl Operator {
    /// Fixed expansion order used by every solver.
    pub const ALL: [Operator; 4] = [Operator::Up, Operator::Right, Operator::Down, Operator::Left];

    pub const COUNT: usize = 4;

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    #[inline]
    pub fn from_index(i: usize) -> Operator {
        Self::ALL[i]
    }

    #[inline]
    pub fn inverse(self) -> Operator {
        match self {
            Operator::Up => Operator::Down,
            Operator::Down => Operator::Up,
            Operator::Left => Operator::Right,
            Operator::Right => Operator::Left,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Operator::Up => 'U',
            Operator::Right => 'R',
            Operator::Down => 'D',
            Operator::Left => 'L',
        }
    }

    pub fn from_char(c: char) -> Option<Operator> {
        match c {
            'U' => Some(Operator::Up),
            'R' => Some(Operator::Right),
            'D' => Some(Operator::Down),
            'L' => Some(Operator::Left),
            _ => None,
        }
    }
}

/// Renders a move sequence as `URDL` letters.
pub fn path_string(path: &[Operator]) -> String {
    path.iter().map(|op| op.as_char()).collect()
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PuzzleState {
    packed: u64,
    blank: u8,
    side: u8,
}

impl PuzzleState {
    /// Builds a state from row-major tiles, validating the permutation.
    pub fn from_tiles(tiles: &[u8]) -> Result<PuzzleState> {
        let side = match tiles.len() {
            9 => 3,
            16 => 4,
            n => {
                return Err(Error::MalformedInstance(format!(
                    "expected 9 or 16 tiles, got {n}"
                )))
            }
        };
        let mut seen = [false; MAX_CELLS];
        let mut packed = 0u64;
        let mut blank = 0u8;
        for (pos, &t) in tiles.iter().enumerate() {
            if t as usize >= tiles.len() {
                return Err(Error::MalformedInstance(format!(
                    "tile {t} out of range for a {side}x{side} board"
                )));
            }
            if seen[t as usize] {
                return Err(Error::MalformedInstance(format!("tile {t} appears twice")));
            }
            seen[t as usize] = true;
            if t == 0 {
                blank = pos as u8;
            }
            packed |= (t as u64) << (4 * pos);
        }
        Ok(PuzzleState { packed, blank, side })
    }

    /// The canonical goal: blank at index 0, tiles ascending.
    pub fn goal(side: u8) -> PuzzleState {
        let cells = (side * side) as usize;
        let tiles: Vec<u8> = (0..cells as u8).collect();
        PuzzleState::from_tiles(&tiles).expect("canonical goal is a permutation")
    }

    #[inline]
    pub fn side(&self) -> u8 {
        self.side
    }

    #[inline]
    pub fn cells(&self) -> usize {
        (self.side as usize) * (self.side as usize)
    }

    #[inline]
    pub fn blank(&self) -> usize {
        self.blank as usize
    }

    #[inline]
    pub fn tile(&self, pos: usize) -> u8 {
        ((self.packed >> (4 * pos)) & 0xF) as u8
    }

    pub fn tiles(&self) -> Vec<u8> {
        (0..self.cells()).map(|p| self.tile(p)).collect()
    }

    /// Packed nibble representation; unique per board for a fixed side.
    #[inline]
    pub fn key(&self) -> u64 {
        self.packed
    }

    /// True when the tiles form a permutation and the blank index agrees.
    pub fn is_valid(&self) -> bool {
        let mut seen = 0u32;
        for p in 0..self.cells() {
            let t = self.tile(p) as usize;
            if t >= self.cells() || seen & (1 << t) != 0 {
                return false;
            }
            seen |= 1 << t;
        }
        self.tile(self.blank()) == 0
    }

    /// Index the blank moves to under `op`, if it stays on the board.
    #[inline]
    pub fn target(&self, op: Operator) -> Option<usize> {
        let side = self.side as usize;
        let b = self.blank();
        let (row, col) = (b / side, b % side);
        match op {
            Operator::Up if row > 0 => Some(b - side),
            Operator::Down if row + 1 < side => Some(b + side),
            Operator::Left if col > 0 => Some(b - 1),
            Operator::Right if col + 1 < side => Some(b + 1),
            _ => None,
        }
    }

    #[inline]
    fn slide(&self, to: usize) -> PuzzleState {
        let t = self.tile(to) as u64;
        let packed = (self.packed | (t << (4 * self.blank))) & !(0xFu64 << (4 * to));
        PuzzleState {
            packed,
            blank: to as u8,
            side: self.side,
        }
    }

    /// Parity of the permutation (blank included), counted by cycle decomposition.
    fn permutation_parity(&self) -> usize {
        let n = self.cells();
        let mut visited = [false; MAX_CELLS];
        let mut transpositions = 0;
        for start in 0..n {
            if visited[start] {
                continue;
            }
            let mut len = 0;
            let mut p = start;
            while !visited[p] {
                visited[p] = true;
                p = self.tile(p) as usize;
                len += 1;
            }
            transpositions += len - 1;
        }
        transpositions % 2
    }

    /// Whether the canonical goal is reachable from this state.
    ///
    /// Every move is a transposition with the blank and shifts the blank by one
    /// cell, so permutation parity must match the parity of the blank's
    /// taxicab distance from its goal cell.
    pub fn is_solvable(&self) -> bool {
        let side = self.side as usize;
        let b = self.blank();
        let blank_dist = b / side + b % side;
        self.permutation_parity() == blank_dist % 2
    }
}

impl fmt::Debug for PuzzleState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PuzzleState({})", self)
    }
}

impl fmt::Display for PuzzleState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in 0..self.cells() {
            if p > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{}", self.tile(p))?;
        }
        Ok(())
    }
}

/// Applies `op`, returning `None` when the blank would leave the board.
pub fn apply(state: &PuzzleState, op: Operator) -> Option<PuzzleState> {
    state.target(op).map(|to| state.slide(to))
}

fn goal_positions(goal: &PuzzleState) -> [usize; MAX_CELLS] {
    let mut pos = [0; MAX_CELLS];
    for p in 0..goal.cells() {
        pos[goal.tile(p) as usize] = p;
    }
    pos
}

/// Sum of taxicab distances of the non-blank tiles to their cells in `goal`.
pub fn manhattan(state: &PuzzleState, goal: &PuzzleState) -> u32 {
    assert_eq!(state.side, goal.side, "boards of different size");
    let side = state.side as usize;
    let home = goal_positions(goal);
    (0..state.cells())
        .filter(|&p| state.tile(p) != 0)
        .map(|p| {
            let h = home[state.tile(p) as usize];
            ((p / side).abs_diff(h / side) + (p % side).abs_diff(h % side)) as u32
        })
        .sum()
}

/// Change in Manhattan distance caused by `op`, computed from the moved tile.
///
/// Panics if `op` is not applicable.
pub fn manhattan_delta(state: &PuzzleState, op: Operator, goal: &PuzzleState) -> i32 {
    let to = state.target(op).expect("operator not applicable");
    let side = state.side as usize;
    let tile = state.tile(to) as usize;
    let home = goal_positions(goal)[tile];
    let d = |p: usize| ((p / side).abs_diff(home / side) + (p % side).abs_diff(home % side)) as i32;
    d(state.blank()) - d(to)
}

/// Table-driven view of the domain used by every solver.
///
/// Holds the goal, the per-tile distance table, the move table and the
/// parent-action pruning toggle. `h_offset` exists only as a fault-injection
/// hook for oracle tests.
#[derive(Clone, Debug)]
pub struct Domain {
    side: u8,
    goal: PuzzleState,
    dist: [[u8; MAX_CELLS]; MAX_CELLS],
    moves: [[u8; Operator::COUNT]; MAX_CELLS],
    parent_pruning: bool,
    h_offset: u16,
}

impl Domain {
    pub fn new(side: u8) -> Result<Domain> {
        if side != 3 && side != 4 {
            return Err(Error::MalformedInstance(format!(
                "unsupported board side {side}; only 3 and 4 are supported"
            )));
        }
        Ok(Self::for_goal(PuzzleState::goal(side)))
    }

    pub fn for_goal(goal: PuzzleState) -> Domain {
        let side = goal.side as usize;
        let home = goal_positions(&goal);
        let mut dist = [[0u8; MAX_CELLS]; MAX_CELLS];
        for tile in 1..goal.cells() {
            let h = home[tile];
            for (p, d) in dist[tile].iter_mut().enumerate().take(goal.cells()) {
                *d = ((p / side).abs_diff(h / side) + (p % side).abs_diff(h % side)) as u8;
            }
        }
        let mut moves = [[NO_MOVE; Operator::COUNT]; MAX_CELLS];
        for (b, row) in moves.iter_mut().enumerate().take(goal.cells()) {
            let mut probe = goal;
            probe.blank = b as u8;
            for op in Operator::ALL {
                if let Some(to) = probe.target(op) {
                    row[op.index()] = to as u8;
                }
            }
        }
        Domain {
            side: goal.side,
            goal,
            dist,
            moves,
            parent_pruning: true,
            h_offset: 0,
        }
    }

    pub fn with_parent_pruning(mut self, on: bool) -> Domain {
        self.parent_pruning = on;
        self
    }

    /// Adds a constant to every heuristic value. Only for fault-injection tests.
    pub fn with_heuristic_offset(mut self, offset: u16) -> Domain {
        self.h_offset = offset;
        self
    }

    pub fn side(&self) -> u8 {
        self.side
    }

    pub fn goal(&self) -> &PuzzleState {
        &self.goal
    }

    pub fn parent_pruning(&self) -> bool {
        self.parent_pruning
    }

    #[inline]
    pub fn is_goal(&self, s: &PuzzleState) -> bool {
        s.packed == self.goal.packed
    }

    /// Manhattan distance (plus the fault-injection offset, normally 0).
    #[inline]
    pub fn h(&self, s: &PuzzleState) -> u16 {
        let mut sum = 0u16;
        let mut packed = s.packed;
        for p in 0..s.cells() {
            let t = (packed & 0xF) as usize;
            packed >>= 4;
            sum += self.dist[t][p] as u16;
        }
        sum + self.h_offset
    }

    /// Whether `op` may follow `last` under the pruning rule.
    #[inline]
    pub fn allowed(&self, op: Operator, last: Option<Operator>) -> bool {
        !(self.parent_pruning && last == Some(op.inverse()))
    }

    /// Applies `op` and returns the successor with the heuristic change.
    #[inline]
    pub fn step(&self, s: &PuzzleState, op: Operator) -> Option<(PuzzleState, i16)> {
        let to = self.moves[s.blank()][op.index()];
        if to == NO_MOVE {
            return None;
        }
        let to = to as usize;
        let tile = s.tile(to) as usize;
        let delta = self.dist[tile][s.blank()] as i16 - self.dist[tile][to] as i16;
        let next = s.slide(to);
        debug_assert!(next.is_valid(), "move produced a non-permutation");
        Some((next, delta))
    }

    /// Operators applicable in `s` and allowed after `last`, in fixed order.
    pub fn applicable(&self, s: &PuzzleState, last: Option<Operator>) -> impl Iterator<Item = Operator> + '_ {
        let row = self.moves[s.blank()];
        Operator::ALL
            .into_iter()
            .filter(move |&op| row[op.index()] != NO_MOVE && self.allowed(op, last))
    }
}

/// A start board paired with the canonical goal.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Instance {
    pub id: u32,
    pub start: PuzzleState,
    pub goal: PuzzleState,
}

impl Instance {
    pub fn new(id: u32, start: PuzzleState) -> Result<Instance> {
        if !start.is_solvable() {
            return Err(Error::Unsolvable { id });
        }
        Ok(Instance {
            id,
            start,
            goal: PuzzleState::goal(start.side),
        })
    }

    pub fn side(&self) -> u8 {
        self.start.side
    }

    pub fn domain(&self) -> Domain {
        Domain::for_goal(self.goal)
    }

    /// One-line file representation, `"<id>: t0 t1 ..."`.
    pub fn to_line(&self) -> String {
        format!("{}: {}", self.id, self.start)
    }
}

fn parse_tiles(body: &str) -> Result<Vec<u8>> {
    body.split_whitespace()
        .map(|tok| {
            tok.parse::<u8>()
                .map_err(|_| Error::MalformedInstance(format!("not a tile number: {tok:?}")))
        })
        .collect()
}

/// Parses one instance: `N*N` integers row-major, optionally preceded by an
/// id either as `"<id>:"` or as one extra leading integer.
pub fn parse_instance(text: &str) -> Result<Instance> {
    parse_instance_with_default_id(text, 0)
}

fn parse_instance_with_default_id(text: &str, default_id: u32) -> Result<Instance> {
    let text = text.trim();
    let (id, body) = match text.split_once(':') {
        Some((id, rest)) => {
            let id = id
                .trim()
                .parse::<u32>()
                .map_err(|_| Error::MalformedInstance(format!("bad instance id {:?}", id.trim())))?;
            (Some(id), rest)
        }
        None => (None, text),
    };
    let mut nums = parse_tiles(body)?;
    let id = match (id, nums.len()) {
        (Some(id), _) => id,
        (None, 10) | (None, 17) => nums.remove(0) as u32,
        (None, _) => default_id,
    };
    let start = PuzzleState::from_tiles(&nums)?;
    Instance::new(id, start)
}

/// Parses an instance file: one instance per line, blank lines and `#`
/// comments ignored. Lines without an id are numbered from 1.
pub fn parse_instances(text: &str) -> Result<Vec<Instance>> {
    let mut out = Vec::new();
    for line in text.lines() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let default_id = out.len() as u32 + 1;
        out.push(parse_instance_with_default_id(line, default_id)?);
    }
    Ok(out)
}

impl FromStr for Instance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Instance> {
        parse_instance(s)
    }
}

/// Korf's 100 15-puzzle instances, ordered from easiest to hardest.
pub const KORF100: &str = include_str!("../data/korf100.txt");

pub fn korf100() -> Vec<Instance> {
    parse_instances(KORF100).expect("bundled instance file is valid")
}

/// Uniformly random solvable board of the given side.
pub fn random_solvable<R: Rng + ?Sized>(side: u8, id: u32, rng: &mut R) -> Instance {
    let cells = (side as usize) * (side as usize);
    let mut tiles: Vec<u8> = (0..cells as u8).collect();
    tiles.shuffle(rng);
    let mut state = PuzzleState::from_tiles(&tiles).expect("shuffled tiles form a permutation");
    if !state.is_solvable() {
        // Swapping two non-blank tiles flips permutation parity only.
        let (a, b) = {
            let mut non_blank = (0..cells).filter(|&p| tiles[p] != 0);
            (non_blank.next().unwrap(), non_blank.next().unwrap())
        };
        tiles.swap(a, b);
        state = PuzzleState::from_tiles(&tiles).expect("swap keeps a permutation");
    }
    Instance::new(id, state).expect("parity fixed above")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(tiles: &[u8]) -> PuzzleState {
        PuzzleState::from_tiles(tiles).unwrap()
    }

    #[test]
    fn fifteen_state_is_sixteen_bytes() {
        assert_eq!(std::mem::size_of::<PuzzleState>(), 16);
    }

    #[test]
    fn apply_right_from_top_left() {
        let start = s(&[0, 1, 2, 3, 4, 5, 6, 7, 8]);
        let next = apply(&start, Operator::Right).unwrap();
        assert_eq!(next.blank(), 1);
        assert_eq!(next.tiles(), vec![1, 0, 2, 3, 4, 5, 6, 7, 8]);
        // input untouched
        assert_eq!(start.blank(), 0);
    }

    #[test]
    fn apply_off_board_is_inapplicable() {
        let start = s(&[0, 1, 2, 3, 4, 5, 6, 7, 8]);
        assert!(apply(&start, Operator::Up).is_none());
        assert!(apply(&start, Operator::Left).is_none());
    }

    #[test]
    fn right_then_left_is_identity() {
        let start = s(&[3, 1, 2, 0, 4, 5, 6, 7, 8]);
        let back = apply(&apply(&start, Operator::Right).unwrap(), Operator::Left).unwrap();
        assert_eq!(back, start);
    }

    #[test]
    fn manhattan_small_cases() {
        let goal = PuzzleState::goal(3);
        assert_eq!(manhattan(&goal, &goal), 0);
        let swapped = s(&[0, 2, 1, 3, 4, 5, 6, 7, 8]);
        assert_eq!(manhattan(&swapped, &goal), 2);
    }

    #[test]
    fn delta_signs() {
        let goal = PuzzleState::goal(3);
        // tile 1 sits at index 0, blank at 1: moving the blank left slides 1 home.
        let st = s(&[1, 0, 2, 3, 4, 5, 6, 7, 8]);
        assert_eq!(manhattan_delta(&st, Operator::Left, &goal), -1);
        // from the goal, any move pushes a tile away from home.
        assert_eq!(manhattan_delta(&goal, Operator::Right, &goal), 1);
    }

    #[test]
    fn parse_examples() {
        let solved = parse_instance("0 1 2 3 4 5 6 7 8").unwrap();
        assert_eq!(manhattan(&solved.start, &solved.goal), 0);

        let one = parse_instance("1 0 2 3 4 5 6 7 8").unwrap();
        assert_eq!(manhattan(&one.start, &one.goal), 1);

        assert!(matches!(
            parse_instance("1 2 3 4 5 6 8 7 0"),
            Err(Error::Unsolvable { .. })
        ));
    }

    #[test]
    fn parse_ids() {
        assert_eq!(parse_instance("7: 0 1 2 3 4 5 6 7 8").unwrap().id, 7);
        assert_eq!(parse_instance("9 0 1 2 3 4 5 6 7 8").unwrap().id, 9);
        let many = parse_instances("# header\n0 1 2 3 4 5 6 7 8\n\n1 0 2 3 4 5 6 7 8\n").unwrap();
        assert_eq!(many.iter().map(|i| i.id).collect::<Vec<_>>(), vec![1, 2]);
    }

    #[test]
    fn parse_rejects_malformed() {
        for bad in [
            "0 1 2 3 4 5 6 7",
            "0 1 2 3 4 5 6 7 7",
            "0 1 2 3 4 5 6 7 9",
            "0 1 2 x 4 5 6 7 8",
            "0 1 2 3 4 5 6 7 8 9 10 11 12 13 14 15 16 17 18 19 20 21 22 23 24",
        ] {
            assert!(
                matches!(parse_instance(bad), Err(Error::MalformedInstance(_))),
                "{bad}"
            );
        }
    }

    #[test]
    fn domain_rejects_large_boards() {
        assert!(Domain::new(5).is_err());
    }

    #[test]
    fn korf_set_loads() {
        let all = korf100();
        assert_eq!(all.len(), 100);
        let mut ids: Vec<u32> = all.iter().map(|i| i.id).collect();
        ids.sort_unstable();
        assert_eq!(ids, (1..=100).collect::<Vec<_>>());
        assert!(all.iter().all(|i| i.side() == 4));
    }

    #[test]
    fn table_heuristic_matches_direct() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for side in [3u8, 4] {
            let dom = Domain::new(side).unwrap();
            for i in 0..200 {
                let inst = random_solvable(side, i, &mut rng);
                assert_eq!(dom.h(&inst.start) as u32, manhattan(&inst.start, &inst.goal));
                for op in Operator::ALL {
                    if let Some((next, delta)) = dom.step(&inst.start, op) {
                        assert_eq!(delta as i32, manhattan_delta(&inst.start, op, &inst.goal));
                        assert_eq!(Some(next), apply(&inst.start, op));
                    }
                }
            }
        }
    }
}
