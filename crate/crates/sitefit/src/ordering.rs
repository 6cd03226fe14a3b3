//! Processing order: rail-aware row pre-move, the size-sorted initial order,
//! and the sliding window that re-ranks upcoming cells by local density.

use thiserror::Error;

use crate::model::{Cell, CellId, SiteGrid};

#[derive(Debug, Error, PartialEq)]
pub enum OrderingError {
    #[error("no row accepts cell {0} (rail/height)")]
    NoLegalRow(CellId),
    #[error("window size {0} too small; need at least 2")]
    WindowTooSmall(usize),
    #[error("order exhausted")]
    Exhausted,
}

/// Nearest row for the cell's bottom edge: rail-compatible, in bounds,
/// minimizing |row - gy| with ties toward the lower row.
pub fn pre_move_row(cell: &Cell, grid: &SiteGrid) -> Result<i64, OrderingError> {
    let top = grid.num_rows - cell.h;
    if top < 0 {
        return Err(OrderingError::NoLegalRow(cell.id));
    }
    let mut down = cell.gy.floor() as i64;
    let mut up = down + 1;
    loop {
        let d_down = if down >= 0 { Some((cell.gy - down as f64).abs()) } else { None };
        let d_up = if up <= top { Some((up as f64 - cell.gy).abs()) } else { None };
        let r = match (d_down, d_up) {
            (None, None) => return Err(OrderingError::NoLegalRow(cell.id)),
            (Some(_), None) => {
                let r = down;
                down -= 1;
                r
            }
            (None, Some(_)) => {
                let r = up;
                up += 1;
                r
            }
            (Some(a), Some(b)) => {
                // Ties go to the lower row.
                if a <= b {
                    let r = down;
                    down -= 1;
                    r
                } else {
                    let r = up;
                    up += 1;
                    r
                }
            }
        };
        if r <= top && grid.rail_ok(cell.rail, r) {
            return Ok(r);
        }
    }
}

/// Full-scan reference for pre_move_row; test use only.
pub fn pre_move_row_scan(cell: &Cell, grid: &SiteGrid) -> Option<i64> {
    (0..=(grid.num_rows - cell.h).max(-1))
        .filter(|&r| grid.rail_ok(cell.rail, r))
        .min_by(|&a, &b| {
            let da = (cell.gy - a as f64).abs();
            let db = (cell.gy - b as f64).abs();
            da.partial_cmp(&db).unwrap().then(a.cmp(&b))
        })
}

/// Movable cells sorted largest-first: area desc, height desc, id asc.
pub fn initial_order(cells: &[Cell]) -> Vec<CellId> {
    let mut ids: Vec<CellId> = cells.iter().filter(|c| !c.fixed).map(|c| c.id).collect();
    ids.sort_by(|&a, &b| {
        let (ca, cb) = (&cells[a], &cells[b]);
        cb.area()
            .cmp(&ca.area())
            .then(cb.h.cmp(&ca.h))
            .then(a.cmp(&b))
    });
    ids
}

/// Sliding consumption window over the initial order. Emitting a cell fixes
/// the next one and stably re-ranks the following ws-2 entries by density,
/// so dense neighborhoods are placed before loose ones overtake them.
#[derive(Debug, Clone)]
pub struct OrderState {
    order: Vec<CellId>,
    cur: usize,
    ws: usize,
}

impl OrderState {
    pub fn new(order: Vec<CellId>, ws: usize) -> Result<OrderState, OrderingError> {
        if ws < 2 {
            return Err(OrderingError::WindowTooSmall(ws));
        }
        Ok(OrderState { order, cur: 0, ws })
    }

    pub fn remaining(&self) -> usize {
        self.order.len() - self.cur
    }

    /// Emit the current cell and refresh the window tail order.
    pub fn next_target<F>(&mut self, mut density_of: F) -> Result<CellId, OrderingError>
    where
        F: FnMut(CellId) -> f64,
    {
        if self.cur >= self.order.len() {
            return Err(OrderingError::Exhausted);
        }
        let emit = self.order[self.cur];
        let tail_lo = (self.cur + 2).min(self.order.len());
        let tail_hi = (self.cur + self.ws).min(self.order.len());
        if tail_hi - tail_lo > 1 {
            let mut keyed: Vec<(f64, CellId)> = self.order[tail_lo..tail_hi]
                .iter()
                .map(|&id| (density_of(id), id))
                .collect();
            keyed.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
            for (slot, (_, id)) in keyed.into_iter().enumerate() {
                self.order[tail_lo + slot] = id;
            }
        }
        self.cur += 1;
        Ok(emit)
    }
}
