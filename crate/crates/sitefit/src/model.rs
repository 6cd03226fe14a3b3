//! Core placement model: site grid, cells, displacement metrics and the
//! legality checker. Horizontal distances are in site units, vertical in row
//! units; the displacement metric folds both into row-height units.

use std::collections::BTreeSet;

use thiserror::Error;

pub type CellId = usize;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("placement has no movable cells")]
    EmptyPlacement,
    #[error("grid units must be positive (rowHeight {row_height}, siteWidth {site_width})")]
    MixedUnits { row_height: f64, site_width: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rail {
    P,
    G,
    /// No rail constraint; legal on any row.
    Any,
}

impl Rail {
    pub fn opposite(self) -> Rail {
        match self {
            Rail::P => Rail::G,
            Rail::G => Rail::P,
            Rail::Any => Rail::Any,
        }
    }
}

/// Row/site raster plus placement blockages, one blocked-interval list per row.
#[derive(Debug, Clone)]
pub struct SiteGrid {
    pub num_rows: i64,
    pub num_sites: i64,
    pub row_height: f64,
    pub site_width: f64,
    pub first_rail: Rail,
    /// Per row: disjoint, sorted, half-open `[start, end)` blocked site spans.
    pub blockages: Vec<Vec<(i64, i64)>>,
}

impl SiteGrid {
    pub fn new(
        num_rows: i64,
        num_sites: i64,
        row_height: f64,
        site_width: f64,
        first_rail: Rail,
    ) -> Result<SiteGrid, ModelError> {
        if row_height <= 0.0 || site_width <= 0.0 {
            return Err(ModelError::MixedUnits { row_height, site_width });
        }
        Ok(SiteGrid {
            num_rows,
            num_sites,
            row_height,
            site_width,
            first_rail,
            blockages: vec![Vec::new(); num_rows as usize],
        })
    }

    /// Rail type at the bottom boundary of `row`: rows alternate starting from
    /// `first_rail` on row 0.
    pub fn rail_of(&self, row: i64) -> Rail {
        if row.rem_euclid(2) == 0 {
            self.first_rail
        } else {
            self.first_rail.opposite()
        }
    }

    /// Whether a cell with rail kind `rail` may sit with its bottom on `row`.
    pub fn rail_ok(&self, rail: Rail, row: i64) -> bool {
        rail == Rail::Any || rail == self.rail_of(row)
    }

    pub fn add_blockage(&mut self, row: i64, start: i64, end: i64) {
        let spans = &mut self.blockages[row as usize];
        spans.push((start, end));
        spans.sort_unstable();
        // Normalize to disjoint spans so downstream scans can binary-search.
        let mut merged: Vec<(i64, i64)> = Vec::with_capacity(spans.len());
        for &(s, e) in spans.iter() {
            match merged.last_mut() {
                Some(last) if s <= last.1 => last.1 = last.1.max(e),
                _ => merged.push((s, e)),
            }
        }
        *spans = merged;
    }

    /// Horizontal scale factor: one site expressed in row heights (Eq. units).
    pub fn x_scale(&self) -> f64 {
        self.site_width / self.row_height
    }
}

#[derive(Debug, Clone)]
pub struct Cell {
    pub id: CellId,
    pub name: String,
    /// Global-placement position (left edge x in sites, bottom edge y in rows).
    pub gx: f64,
    pub gy: f64,
    /// Current position; equals the legalized site/row once `legalized`.
    pub cx: f64,
    pub cy: f64,
    pub w: i64,
    pub h: i64,
    pub rail: Rail,
    pub fixed: bool,
    pub legalized: bool,
}

impl Cell {
    pub fn area(&self) -> i64 {
        self.w * self.h
    }

    /// Rows the cell currently intersects, assuming an integer cy.
    pub fn rows(&self) -> std::ops::Range<i64> {
        let b = self.cy as i64;
        b..b + self.h
    }
}

/// Manhattan displacement of one cell in row-height units (Eq. metric):
/// horizontal sites scale by siteWidth/rowHeight, vertical rows count as-is.
pub fn displacement(cell: &Cell, grid: &SiteGrid) -> f64 {
    (cell.cx - cell.gx).abs() * grid.x_scale() + (cell.cy - cell.gy).abs()
}

#[derive(Debug, Clone)]
pub struct Placement {
    pub grid: SiteGrid,
    pub cells: Vec<Cell>,
}

impl Placement {
    pub fn new(grid: SiteGrid, cells: Vec<Cell>) -> Placement {
        Placement { grid, cells }
    }

    /// Largest cell height present (0 for a cell-less placement).
    pub fn max_height(&self) -> i64 {
        self.cells.iter().map(|c| c.h).max().unwrap_or(0)
    }

    pub fn movable(&self) -> impl Iterator<Item = &Cell> {
        self.cells.iter().filter(|c| !c.fixed)
    }
}

/// Height-class-averaged mean displacement: per-height means averaged over
/// height classes 1..=H, skipping classes with no movable cells.
pub fn average_displacement(p: &Placement) -> Result<f64, ModelError> {
    let per = per_height_displacement(p)?;
    let h_max = p.max_height();
    Ok(per.iter().map(|&(_, s)| s).sum::<f64>() / h_max as f64)
}

/// Mean displacement per populated height class, ascending by height.
/// Fixed cells contribute nothing.
pub fn per_height_displacement(p: &Placement) -> Result<Vec<(i64, f64)>, ModelError> {
    let mut sums: Vec<(i64, f64, usize)> = Vec::new();
    for c in p.movable() {
        let d = displacement(c, &p.grid);
        match sums.iter_mut().find(|e| e.0 == c.h) {
            Some(e) => {
                e.1 += d;
                e.2 += 1;
            }
            None => sums.push((c.h, d, 1)),
        }
    }
    if sums.is_empty() {
        return Err(ModelError::EmptyPlacement);
    }
    sums.sort_unstable_by_key(|e| e.0);
    Ok(sums.into_iter().map(|(h, s, n)| (h, s / n as f64)).collect())
}

/// Largest single-cell displacement among movable cells.
pub fn max_displacement(p: &Placement) -> Result<f64, ModelError> {
    p.movable()
        .map(|c| displacement(c, &p.grid))
        .fold(None, |acc: Option<f64>, d| Some(acc.map_or(d, |a| a.max(d))))
        .ok_or(ModelError::EmptyPlacement)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Violation {
    /// Two cells with positive-area intersection, ids ordered low/high.
    Overlap(CellId, CellId),
    OutOfBounds(CellId),
    /// Position is not on the integer site/row raster.
    OffSite(CellId),
    RailMismatch(CellId),
    OnBlockage(CellId),
}

fn is_integer(v: f64) -> bool {
    v.fract() == 0.0
}

/// Full legality audit; an empty result means the placement is legal.
pub fn check_legal(p: &Placement) -> Vec<Violation> {
    let grid = &p.grid;
    let mut out = Vec::new();
    for c in &p.cells {
        if c.cx < 0.0
            || c.cx + c.w as f64 > grid.num_sites as f64
            || c.cy < 0.0
            || c.cy + c.h as f64 > grid.num_rows as f64
        {
            out.push(Violation::OutOfBounds(c.id));
        }
        if !is_integer(c.cx) || !is_integer(c.cy) {
            out.push(Violation::OffSite(c.id));
        } else if c.rail != Rail::Any && !grid.rail_ok(c.rail, c.cy as i64) {
            out.push(Violation::RailMismatch(c.id));
        }
    }

    // Band index: every cell registers in each unit row band its y-span
    // intersects, so any y-overlapping pair shares at least one band.
    let bands = grid.num_rows.max(1) as usize;
    let mut by_band: Vec<Vec<CellId>> = vec![Vec::new(); bands];
    for c in &p.cells {
        let lo = (c.cy.floor().max(0.0) as usize).min(bands - 1);
        let hi = ((c.cy + c.h as f64).ceil() as usize).clamp(lo + 1, bands);
        for b in lo..hi {
            if c.cy < (b + 1) as f64 && c.cy + c.h as f64 > b as f64 {
                by_band[b].push(c.id);
            }
        }
    }

    let mut overlaps: BTreeSet<(CellId, CellId)> = BTreeSet::new();
    let mut blocked: BTreeSet<CellId> = BTreeSet::new();
    for (band, ids) in by_band.iter().enumerate() {
        let mut ids = ids.clone();
        ids.sort_unstable_by(|&a, &b| {
            p.cells[a].cx.partial_cmp(&p.cells[b].cx).unwrap().then(a.cmp(&b))
        });
        // All-pairs within the band via an active window on x.
        let mut active: Vec<CellId> = Vec::new();
        for &id in &ids {
            let c = &p.cells[id];
            active.retain(|&a| p.cells[a].cx + p.cells[a].w as f64 > c.cx);
            for &a in &active {
                let o = &p.cells[a];
                let y_overlap = o.cy < c.cy + c.h as f64 && c.cy < o.cy + o.h as f64;
                if y_overlap {
                    overlaps.insert((a.min(id), a.max(id)));
                }
            }
            active.push(id);

            for &(bs, be) in &grid.blockages[band] {
                if c.cx < be as f64 && c.cx + c.w as f64 > bs as f64 {
                    blocked.insert(id);
                }
            }
        }
    }
    out.extend(overlaps.into_iter().map(|(a, b)| Violation::Overlap(a, b)));
    out.extend(blocked.into_iter().map(Violation::OnBlockage));
    out.sort();
    out
}
