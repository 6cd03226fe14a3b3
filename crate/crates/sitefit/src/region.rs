//! Local region extraction. A window around the target is reduced to one
//! localSegment per row (the longest unblocked site run), and the legalized
//! cells wholly contained in those segments become the movable localCells.
//! Everything else inside the window acts as a fixed obstacle.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::model::{CellId, Placement, SiteGrid};

#[derive(Debug, Error, PartialEq)]
pub enum RegionError {
    #[error("window contains no usable sites")]
    EmptyRegion,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub row_lo: i64,
    pub row_hi: i64,
    pub site_lo: i64,
    pub site_hi: i64,
    pub expansions: u32,
}

impl Window {
    /// Window of roughly rows x sites centered on (cx, cy), clamped to the grid.
    pub fn around(grid: &SiteGrid, cx: f64, cy: f64, rows: i64, sites: i64) -> Window {
        let rows = rows.clamp(1, grid.num_rows);
        let sites = sites.clamp(1, grid.num_sites);
        let row_lo = ((cy - rows as f64 / 2.0).round() as i64).clamp(0, grid.num_rows - rows);
        let site_lo = ((cx - sites as f64 / 2.0).round() as i64).clamp(0, grid.num_sites - sites);
        Window {
            row_lo,
            row_hi: row_lo + rows,
            site_lo,
            site_hi: site_lo + sites,
            expansions: 0,
        }
    }

    /// Grow both extents by `factor` around the same center.
    pub fn expand(&self, grid: &SiteGrid, factor: i64) -> Window {
        let rows = ((self.row_hi - self.row_lo) * factor).min(grid.num_rows);
        let sites = ((self.site_hi - self.site_lo) * factor).min(grid.num_sites);
        let cy = (self.row_lo + self.row_hi) as f64 / 2.0;
        let cx = (self.site_lo + self.site_hi) as f64 / 2.0;
        let mut w = Window::around(grid, cx, cy, rows, sites);
        w.expansions = self.expansions + 1;
        w
    }

    pub fn covers_grid(&self, grid: &SiteGrid) -> bool {
        self.row_lo == 0
            && self.site_lo == 0
            && self.row_hi == grid.num_rows
            && self.site_hi == grid.num_sites
    }
}

/// Per-row index of placed (legalized or fixed) cells, sorted by cx. Shifts
/// never reorder cells within a row, so sorted order survives position
/// updates; only insertions happen as targets commit.
#[derive(Debug, Clone)]
pub struct RowIndex {
    rows: Vec<Vec<CellId>>,
    max_w: i64,
}

impl RowIndex {
    pub fn build(p: &Placement) -> RowIndex {
        let mut idx = RowIndex {
            rows: vec![Vec::new(); p.grid.num_rows as usize],
            max_w: p.cells.iter().map(|c| c.w).max().unwrap_or(1),
        };
        let mut ids: Vec<CellId> = p
            .cells
            .iter()
            .filter(|c| c.fixed || c.legalized)
            .map(|c| c.id)
            .collect();
        ids.sort_by(|&a, &b| p.cells[a].cx.partial_cmp(&p.cells[b].cx).unwrap());
        for id in ids {
            for r in p.cells[id].rows() {
                if r >= 0 && r < p.grid.num_rows {
                    idx.rows[r as usize].push(id);
                }
            }
        }
        idx
    }

    pub fn insert(&mut self, p: &Placement, id: CellId) {
        let c = &p.cells[id];
        self.max_w = self.max_w.max(c.w);
        for r in c.rows() {
            let lane = &mut self.rows[r as usize];
            let at = lane.partition_point(|&o| p.cells[o].cx < c.cx);
            lane.insert(at, id);
        }
    }

    /// Ids of placed cells that may intersect columns [lo, hi) of `row`, in
    /// cx order. Conservative on the left by the widest cell seen.
    pub fn in_range(&self, p: &Placement, row: i64, lo: i64, hi: i64) -> &[CellId] {
        let lane = &self.rows[row as usize];
        let start = lane.partition_point(|&o| p.cells[o].cx < (lo - self.max_w) as f64);
        let end = lane.partition_point(|&o| p.cells[o].cx < hi as f64);
        &lane[start.min(end)..end]
    }
}

#[derive(Debug, Clone)]
pub struct LocalSegment {
    pub row: i64,
    pub lo: i64,
    pub hi: i64,
    /// localCells intersecting this row, left to right.
    pub cells: Vec<CellId>,
}

#[derive(Debug, Clone)]
pub struct LocalRegion {
    pub window: Window,
    /// One segment per window row that has any usable run, ascending by row.
    pub segments: Vec<LocalSegment>,
    /// All localCells of the region (union over segments), ascending id.
    pub cells: Vec<CellId>,
    /// Total localCell area over total segment area.
    pub density: f64,
    pub segment_area: f64,
}

impl LocalRegion {
    pub fn segment_for(&self, row: i64) -> Option<&LocalSegment> {
        self.segments.iter().find(|s| s.row == row)
    }

    /// Density if `extra_area` (an unplaced target) were counted too; this is
    /// the ordering metric and may exceed 1.
    pub fn density_with(&self, extra_area: i64) -> f64 {
        if self.segment_area == 0.0 {
            return f64::INFINITY;
        }
        self.density + extra_area as f64 / self.segment_area
    }
}

fn longest_run(
    win: &Window,
    blocked: &[(i64, i64)],
    target_cx: f64,
) -> Option<(i64, i64)> {
    let mut spans = blocked.to_vec();
    spans.sort_unstable();
    let mut runs: Vec<(i64, i64)> = Vec::new();
    let mut cur = win.site_lo;
    for &(s, e) in &spans {
        let s = s.max(win.site_lo);
        let e = e.min(win.site_hi);
        if s >= e {
            continue;
        }
        if s > cur {
            runs.push((cur, s));
        }
        cur = cur.max(e);
    }
    if cur < win.site_hi {
        runs.push((cur, win.site_hi));
    }
    runs.into_iter().max_by(|&(alo, ahi), &(blo, bhi)| {
        let (la, lb) = (ahi - alo, bhi - blo);
        let dist = |lo: i64, hi: i64| -> f64 {
            if target_cx < lo as f64 {
                lo as f64 - target_cx
            } else if target_cx > hi as f64 {
                target_cx - hi as f64
            } else {
                0.0
            }
        };
        la.cmp(&lb)
            .then_with(|| dist(blo, bhi).partial_cmp(&dist(alo, ahi)).unwrap())
            .then_with(|| blo.cmp(&alo))
    })
}

/// Extract the localRegion for `target` inside `win`. Fixed cells, blockages
/// and cells sticking out of the window truncate runs; legalized cells that
/// end up only partially inside a chosen segment are demoted to obstacles and
/// the segments are recomputed until stable.
pub fn extract_local_region(
    p: &Placement,
    idx: &RowIndex,
    win: Window,
    target: CellId,
) -> Result<LocalRegion, RegionError> {
    let grid = &p.grid;
    let rows: Vec<i64> = (win.row_lo..win.row_hi).collect();

    // Candidates: legalized movable cells wholly inside the window rect.
    let mut cand: BTreeSet<CellId> = BTreeSet::new();
    let mut hard_blocked: Vec<Vec<(i64, i64)>> = vec![Vec::new(); rows.len()];
    for (k, &r) in rows.iter().enumerate() {
        for &(s, e) in &grid.blockages[r as usize] {
            hard_blocked[k].push((s, e));
        }
        for &id in idx.in_range(p, r, win.site_lo, win.site_hi) {
            let c = &p.cells[id];
            if id == target || c.cx + (c.w as f64) <= win.site_lo as f64 {
                continue;
            }
            let inside = c.cx >= win.site_lo as f64
                && c.cx + c.w as f64 <= win.site_hi as f64
                && c.rows().start >= win.row_lo
                && c.rows().end <= win.row_hi;
            if !c.fixed && inside {
                cand.insert(id);
            } else {
                hard_blocked[k].push((c.cx.floor() as i64, (c.cx + c.w as f64).ceil() as i64));
            }
        }
    }

    let mut demoted: BTreeSet<CellId> = BTreeSet::new();
    let tx = p.cells[target].cx + p.cells[target].w as f64 / 2.0;
    loop {
        let mut segs: Vec<Option<(i64, i64)>> = Vec::with_capacity(rows.len());
        for (k, &r) in rows.iter().enumerate() {
            let mut blocked = hard_blocked[k].clone();
            for &id in &demoted {
                let c = &p.cells[id];
                if c.rows().contains(&r) {
                    blocked.push((c.cx as i64, (c.cx + c.w as f64) as i64));
                }
            }
            segs.push(longest_run(&win, &blocked, tx));
        }
        let contains = |id: CellId| -> bool {
            let c = &p.cells[id];
            c.rows().all(|r| {
                rows.iter().position(|&rr| rr == r).is_some_and(|k| {
                    segs[k].is_some_and(|(lo, hi)| {
                        c.cx >= lo as f64 && c.cx + c.w as f64 <= hi as f64
                    })
                })
            })
        };
        // A candidate outside its segments but overlapping one must become an
        // obstacle; one that touches no segment is merely dropped.
        let mut changed = false;
        for &id in &cand {
            if demoted.contains(&id) || contains(id) {
                continue;
            }
            let c = &p.cells[id];
            let touches = c.rows().any(|r| {
                rows.iter().position(|&rr| rr == r).is_some_and(|k| {
                    segs[k].is_some_and(|(lo, hi)| {
                        c.cx < hi as f64 && c.cx + c.w as f64 > lo as f64
                    })
                })
            });
            if touches {
                demoted.insert(id);
                changed = true;
            }
        }
        if changed {
            continue;
        }

        let mut segments = Vec::new();
        let mut area = 0.0;
        let mut members: BTreeSet<CellId> = BTreeSet::new();
        for (k, &r) in rows.iter().enumerate() {
            if let Some((lo, hi)) = segs[k] {
                segments.push(LocalSegment { row: r, lo, hi, cells: Vec::new() });
                area += (hi - lo) as f64;
            }
        }
        if area == 0.0 {
            return Err(RegionError::EmptyRegion);
        }
        for &id in &cand {
            if !demoted.contains(&id) && contains(id) {
                members.insert(id);
            }
        }
        let mut cell_area = 0.0;
        for &id in &members {
            let c = &p.cells[id];
            cell_area += c.area() as f64;
            for r in c.rows() {
                if let Some(seg) = segments.iter_mut().find(|s| s.row == r) {
                    seg.cells.push(id);
                }
            }
        }
        for seg in &mut segments {
            seg.cells
                .sort_by(|&a, &b| p.cells[a].cx.partial_cmp(&p.cells[b].cx).unwrap());
        }
        return Ok(LocalRegion {
            window: win,
            segments,
            cells: members.into_iter().collect(),
            density: cell_area / area,
            segment_area: area,
        });
    }
}
