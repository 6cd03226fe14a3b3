//! Cell shifting for target insertion. Placing a target at x inside a
//! segment pushes the cells left of its gap leftward and the cells right of
//! it rightward, minimally and never toward the target. Multi-row cells
//! couple rows, so the push sets are the transitive closure of the gap split.
//!
//! Each side is an independent phase: the left phase only ever reads and
//! moves left-side cells, the right phase right-side cells, so the two can
//! run concurrently. Two interchangeable engines compute a phase:
//! `multi_pass_shift` relaxes rows repeatedly until nothing moves, while
//! `sacs_shift` sorts the side once (nearest the target first) and resolves
//! every cell in a single pass. Both produce bit-identical positions; the
//! multi-pass engine exists as the equivalence oracle and for its pass count.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use thiserror::Error;

use crate::model::{CellId, Placement};
use crate::region::LocalRegion;

#[derive(Debug, Error, PartialEq)]
pub enum ShiftError {
    #[error("target spans row {0} which has no segment")]
    MissingRow(i64),
    #[error("gap index does not address a lane position")]
    BadGapIndex,
    #[error("left/right split contradicts itself across rows")]
    PartitionConflict,
    #[error("shifted cells do not fit inside their segments")]
    SegmentOverflow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Left,
    Right,
}

#[derive(Debug, Clone)]
pub struct Lane {
    pub row: i64,
    pub lo: f64,
    pub hi: f64,
    /// All localCells crossing this row, left to right.
    pub cells: Vec<CellId>,
    /// cells[..split_lo] push left, cells[split_hi..] push right; the middle
    /// (non-spanned rows only) stays put.
    pub split_lo: usize,
    pub split_hi: usize,
    pub spanned: bool,
}

/// A resolved insertion point: which cells move which way in every row.
#[derive(Debug, Clone)]
pub struct InsertPlan {
    pub target: CellId,
    pub bottom_row: i64,
    pub t_w: i64,
    pub lanes: Vec<Lane>,
    /// Left-moving cells, nearest the target first (cx desc, then bottom row,
    /// then id) — the resolution order of the single-pass engine.
    pub left: Vec<CellId>,
    /// Right-moving cells, cx asc with the same tie rule.
    pub right: Vec<CellId>,
}

impl InsertPlan {
    pub fn side(&self, dir: Direction) -> &[CellId] {
        match dir {
            Direction::Left => &self.left,
            Direction::Right => &self.right,
        }
    }
}

/// One shift phase's outcome. Both engines emit the same cells at the same
/// positions in the same order.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftResult {
    /// Final x per side cell, in the side's resolution order.
    pub positions: Vec<(CellId, f64)>,
    /// The cells whose x actually changed.
    pub moved: BTreeSet<CellId>,
    pub pass_count: u32,
}

/// Resolve the left/right split for inserting `target` with its bottom row at
/// `bottom_row` and per-spanned-row gap indexes `gaps`.
pub fn plan_insert(
    p: &Placement,
    region: &LocalRegion,
    target: CellId,
    bottom_row: i64,
    gaps: &[usize],
) -> Result<InsertPlan, ShiftError> {
    let t = &p.cells[target];
    if gaps.len() != t.h as usize {
        return Err(ShiftError::BadGapIndex);
    }
    let spanned = bottom_row..bottom_row + t.h;

    let mut lanes: Vec<Lane> = region
        .segments
        .iter()
        .map(|s| Lane {
            row: s.row,
            lo: s.lo as f64,
            hi: s.hi as f64,
            cells: s.cells.clone(),
            split_lo: 0,
            split_hi: s.cells.len(),
            spanned: spanned.contains(&s.row),
        })
        .collect();
    let lane_of: HashMap<i64, usize> =
        lanes.iter().enumerate().map(|(i, l)| (l.row, i)).collect();
    for r in spanned.clone() {
        if !lane_of.contains_key(&r) {
            return Err(ShiftError::MissingRow(r));
        }
    }
    let pos_in: HashMap<(CellId, usize), usize> = lanes
        .iter()
        .enumerate()
        .flat_map(|(i, l)| l.cells.iter().enumerate().map(move |(k, &c)| ((c, i), k)))
        .collect();

    // Seed sides from the spanned-row gaps, then close over shared cells:
    // anything left of a left cell is left, anything right of a right cell
    // is right, in every row it touches.
    let mut side: BTreeMap<CellId, Direction> = BTreeMap::new();
    let mut queue: VecDeque<CellId> = VecDeque::new();
    let assign = |c: CellId,
                      s: Direction,
                      side: &mut BTreeMap<CellId, Direction>,
                      queue: &mut VecDeque<CellId>|
     -> Result<(), ShiftError> {
        match side.insert(c, s) {
            None => {
                queue.push_back(c);
                Ok(())
            }
            Some(old) if old == s => Ok(()),
            Some(_) => Err(ShiftError::PartitionConflict),
        }
    };
    for (i, r) in spanned.clone().enumerate() {
        let lane = &lanes[lane_of[&r]];
        let g = gaps[i];
        if g > lane.cells.len() {
            return Err(ShiftError::BadGapIndex);
        }
        let cells = lane.cells.clone();
        for &c in &cells[..g] {
            assign(c, Direction::Left, &mut side, &mut queue)?;
        }
        for &c in &cells[g..] {
            assign(c, Direction::Right, &mut side, &mut queue)?;
        }
    }
    while let Some(c) = queue.pop_front() {
        let s = side[&c];
        for r in p.cells[c].rows() {
            let li = lane_of[&r];
            let k = pos_in[&(c, li)];
            let cells = lanes[li].cells.clone();
            match s {
                Direction::Left => {
                    for &o in &cells[..k] {
                        assign(o, Direction::Left, &mut side, &mut queue)?;
                    }
                }
                Direction::Right => {
                    for &o in &cells[k + 1..] {
                        assign(o, Direction::Right, &mut side, &mut queue)?;
                    }
                }
            }
        }
    }

    // Left cells must form a prefix of each lane and right cells a suffix.
    for lane in &mut lanes {
        let n = lane.cells.len();
        let lefts = lane
            .cells
            .iter()
            .filter(|c| side.get(c) == Some(&Direction::Left))
            .count();
        let rights = lane
            .cells
            .iter()
            .filter(|c| side.get(c) == Some(&Direction::Right))
            .count();
        lane.split_lo = lefts;
        lane.split_hi = n - rights;
        if lane.split_lo > lane.split_hi
            || lane.cells[..lane.split_lo]
                .iter()
                .any(|c| side.get(c) != Some(&Direction::Left))
            || lane.cells[lane.split_hi..]
                .iter()
                .any(|c| side.get(c) != Some(&Direction::Right))
        {
            return Err(ShiftError::PartitionConflict);
        }
    }

    let by_near = |a: &CellId, b: &CellId, desc: bool| {
        let (ca, cb) = (&p.cells[*a], &p.cells[*b]);
        let prim = if desc {
            cb.cx.partial_cmp(&ca.cx).unwrap()
        } else {
            ca.cx.partial_cmp(&cb.cx).unwrap()
        };
        prim.then(ca.rows().start.cmp(&cb.rows().start)).then(a.cmp(b))
    };
    let mut left: Vec<CellId> = side
        .iter()
        .filter(|&(_, s)| *s == Direction::Left)
        .map(|(&c, _)| c)
        .collect();
    let mut right: Vec<CellId> = side
        .iter()
        .filter(|&(_, s)| *s == Direction::Right)
        .map(|(&c, _)| c)
        .collect();
    left.sort_by(|a, b| by_near(a, b, true));
    right.sort_by(|a, b| by_near(a, b, false));

    Ok(InsertPlan {
        target,
        bottom_row,
        t_w: t.w,
        lanes,
        left,
        right,
    })
}

/// Gap indexes for placing the target's left edge at `xt`, by the center
/// rule: a lane cell goes left of the gap iff its center is left of the
/// target's center.
pub fn gaps_by_center(
    p: &Placement,
    region: &LocalRegion,
    target: CellId,
    bottom_row: i64,
    xt: f64,
) -> Result<Vec<usize>, ShiftError> {
    let t = &p.cells[target];
    let tc = xt + t.w as f64 / 2.0;
    let mut gaps = Vec::with_capacity(t.h as usize);
    for r in bottom_row..bottom_row + t.h {
        let seg = region.segment_for(r).ok_or(ShiftError::MissingRow(r))?;
        let g = seg
            .cells
            .iter()
            .take_while(|&&c| p.cells[c].cx + p.cells[c].w as f64 / 2.0 < tc)
            .count();
        gaps.push(g);
    }
    Ok(gaps)
}

/// The target itself must respect the segment edge it is pushing toward.
fn check_target_fits(plan: &InsertPlan, xt: f64, dir: Direction) -> Result<(), ShiftError> {
    for lane in &plan.lanes {
        if !lane.spanned {
            continue;
        }
        let bad = match dir {
            Direction::Left => xt < lane.lo,
            Direction::Right => xt + plan.t_w as f64 > lane.hi,
        };
        if bad {
            return Err(ShiftError::SegmentOverflow);
        }
    }
    Ok(())
}

/// Single-pass shift of one side: the side is pre-sorted nearest-the-target
/// first, so when a cell is reached everything that can push it has already
/// settled, and its final position is emitted immediately.
pub fn sacs_shift(
    p: &Placement,
    plan: &InsertPlan,
    xt: f64,
    dir: Direction,
) -> Result<ShiftResult, ShiftError> {
    check_target_fits(plan, xt, dir)?;
    let lane_of: HashMap<i64, usize> =
        plan.lanes.iter().enumerate().map(|(i, l)| (l.row, i)).collect();
    let side = plan.side(dir);
    let mut positions = Vec::with_capacity(side.len());
    let mut moved = BTreeSet::new();

    match dir {
        Direction::Left => {
            // Frontier per lane: lowest occupied x so far.
            let mut fl: Vec<f64> = plan
                .lanes
                .iter()
                .map(|l| if l.spanned { xt } else { f64::INFINITY })
                .collect();
            for &c in side {
                let cell = &p.cells[c];
                let w = cell.w as f64;
                let mut lim = f64::INFINITY;
                for r in cell.rows() {
                    lim = lim.min(fl[lane_of[&r]]);
                }
                let x = cell.cx.min(lim - w);
                for r in cell.rows() {
                    if x < plan.lanes[lane_of[&r]].lo {
                        return Err(ShiftError::SegmentOverflow);
                    }
                    fl[lane_of[&r]] = x;
                }
                positions.push((c, x));
                if x != cell.cx {
                    moved.insert(c);
                }
            }
        }
        Direction::Right => {
            // Frontier per lane: highest occupied right edge so far.
            let mut fr: Vec<f64> = plan
                .lanes
                .iter()
                .map(|l| if l.spanned { xt + plan.t_w as f64 } else { f64::NEG_INFINITY })
                .collect();
            for &c in side {
                let cell = &p.cells[c];
                let w = cell.w as f64;
                let mut lim = f64::NEG_INFINITY;
                for r in cell.rows() {
                    lim = lim.max(fr[lane_of[&r]]);
                }
                let x = cell.cx.max(lim);
                for r in cell.rows() {
                    if x + w > plan.lanes[lane_of[&r]].hi {
                        return Err(ShiftError::SegmentOverflow);
                    }
                    fr[lane_of[&r]] = x + w;
                }
                positions.push((c, x));
                if x != cell.cx {
                    moved.insert(c);
                }
            }
        }
    }
    Ok(ShiftResult { positions, moved, pass_count: 1 })
}

/// Reference shifter for one side: sweep lanes bottom to top, pushing
/// overlapped cells outward one neighbor at a time, and repeat until a sweep
/// moves nothing. `pass_count` includes that final quiet sweep. Positions
/// match `sacs_shift` exactly because every push evaluates the same
/// expressions.
pub fn multi_pass_shift(
    p: &Placement,
    plan: &InsertPlan,
    xt: f64,
    dir: Direction,
) -> Result<ShiftResult, ShiftError> {
    check_target_fits(plan, xt, dir)?;
    let side = plan.side(dir);
    let mut pos: BTreeMap<CellId, f64> = side.iter().map(|&c| (c, p.cells[c].cx)).collect();
    let mut passes = 0u32;
    let guard = side.len() + 2;
    loop {
        passes += 1;
        assert!(passes as usize <= guard, "shift relaxation failed to settle");
        let mut any = false;
        for lane in &plan.lanes {
            match dir {
                Direction::Left => {
                    for k in (0..lane.split_lo).rev() {
                        let c = lane.cells[k];
                        let limit = if k + 1 < lane.split_lo {
                            pos[&lane.cells[k + 1]]
                        } else if lane.spanned {
                            xt
                        } else {
                            f64::INFINITY
                        };
                        let nx = limit - p.cells[c].w as f64;
                        if nx < pos[&c] {
                            pos.insert(c, nx);
                            any = true;
                        }
                    }
                }
                Direction::Right => {
                    for k in lane.split_hi..lane.cells.len() {
                        let c = lane.cells[k];
                        let limit = if k > lane.split_hi {
                            let n = lane.cells[k - 1];
                            pos[&n] + p.cells[n].w as f64
                        } else if lane.spanned {
                            xt + plan.t_w as f64
                        } else {
                            f64::NEG_INFINITY
                        };
                        if limit > pos[&c] {
                            pos.insert(c, limit);
                            any = true;
                        }
                    }
                }
            }
        }
        if !any {
            break;
        }
    }

    for lane in &plan.lanes {
        for (k, &c) in lane.cells.iter().enumerate() {
            let crosses = match dir {
                Direction::Left => k < lane.split_lo,
                Direction::Right => k >= lane.split_hi,
            };
            if !crosses {
                continue;
            }
            let x = pos[&c];
            let bad = match dir {
                Direction::Left => x < lane.lo,
                Direction::Right => x + p.cells[c].w as f64 > lane.hi,
            };
            if bad {
                return Err(ShiftError::SegmentOverflow);
            }
        }
    }

    let positions: Vec<(CellId, f64)> = side.iter().map(|&c| (c, pos[&c])).collect();
    let moved = positions
        .iter()
        .filter(|&&(c, x)| x != p.cells[c].cx)
        .map(|&(c, _)| c)
        .collect();
    Ok(ShiftResult { positions, moved, pass_count: passes })
}

/// Run both phases against a scratch view and combine: the would-be final x
/// of the target and every side cell. The placement itself is never touched.
pub fn trial_insert(
    p: &Placement,
    plan: &InsertPlan,
    xt: f64,
) -> Result<BTreeMap<CellId, f64>, ShiftError> {
    let l = sacs_shift(p, plan, xt, Direction::Left)?;
    let r = sacs_shift(p, plan, xt, Direction::Right)?;
    let mut out = BTreeMap::new();
    out.insert(plan.target, xt);
    out.extend(l.positions);
    out.extend(r.positions);
    Ok(out)
}
