//! Plain-text placement format.
//!
//! Line-oriented, whitespace-separated, `#` starts a comment anywhere:
//! `GRID numRows rowHeight siteWidth numSites firstRail`
//! `CELL name gx gy w h rail fixed`
//! `BLOCK row start end`

use std::collections::HashMap;

use thiserror::Error;

use crate::model::{Cell, Placement, Rail, SiteGrid};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("duplicate cell name {0:?}")]
    DuplicateId(String),
    #[error("{0}")]
    Semantic(String),
}

fn syntax(line: usize, reason: impl Into<String>) -> IngestError {
    IngestError::Syntax { line, reason: reason.into() }
}

fn parse_rail(tok: &str) -> Option<Rail> {
    match tok {
        "P" => Some(Rail::P),
        "G" => Some(Rail::G),
        "ANY" => Some(Rail::Any),
        _ => None,
    }
}

fn rail_str(r: Rail) -> &'static str {
    match r {
        Rail::P => "P",
        Rail::G => "G",
        Rail::Any => "ANY",
    }
}

pub fn parse_placement(text: &str) -> Result<Placement, IngestError> {
    let mut grid: Option<SiteGrid> = None;
    let mut cells: Vec<Cell> = Vec::new();
    let mut names: HashMap<String, usize> = HashMap::new();
    let mut blocks: Vec<(usize, i64, i64, i64)> = Vec::new();

    for (ln, raw) in text.lines().enumerate() {
        let ln = ln + 1;
        let line = raw.split('#').next().unwrap_or("");
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        match toks[0] {
            "GRID" => {
                if grid.is_some() {
                    return Err(syntax(ln, "repeated GRID line"));
                }
                if toks.len() != 6 {
                    return Err(syntax(ln, "GRID wants: numRows rowHeight siteWidth numSites firstRail"));
                }
                let num_rows: i64 = toks[1].parse().map_err(|_| syntax(ln, "bad numRows"))?;
                let row_height: f64 = toks[2].parse().map_err(|_| syntax(ln, "bad rowHeight"))?;
                let site_width: f64 = toks[3].parse().map_err(|_| syntax(ln, "bad siteWidth"))?;
                let num_sites: i64 = toks[4].parse().map_err(|_| syntax(ln, "bad numSites"))?;
                let rail = parse_rail(toks[5])
                    .filter(|r| *r != Rail::Any)
                    .ok_or_else(|| syntax(ln, "firstRail must be P or G"))?;
                if num_rows <= 0 || num_sites <= 0 {
                    return Err(syntax(ln, "grid dimensions must be positive"));
                }
                let g = SiteGrid::new(num_rows, num_sites, row_height, site_width, rail)
                    .map_err(|e| syntax(ln, e.to_string()))?;
                grid = Some(g);
            }
            "CELL" => {
                if toks.len() != 8 {
                    return Err(syntax(ln, "CELL wants: name gx gy w h rail fixed"));
                }
                let name = toks[1].to_string();
                if names.contains_key(&name) {
                    return Err(IngestError::DuplicateId(name));
                }
                let gx: f64 = toks[2].parse().map_err(|_| syntax(ln, "bad gx"))?;
                let gy: f64 = toks[3].parse().map_err(|_| syntax(ln, "bad gy"))?;
                let w: i64 = toks[4].parse().map_err(|_| syntax(ln, "bad w"))?;
                let h: i64 = toks[5].parse().map_err(|_| syntax(ln, "bad h"))?;
                let rail = parse_rail(toks[6]).ok_or_else(|| syntax(ln, "rail must be P, G or ANY"))?;
                let fixed = match toks[7] {
                    "0" => false,
                    "1" => true,
                    _ => return Err(syntax(ln, "fixed must be 0 or 1")),
                };
                if w < 1 || h < 1 {
                    return Err(syntax(ln, "cell width and height must be >= 1"));
                }
                if !gx.is_finite() || !gy.is_finite() {
                    return Err(syntax(ln, "cell position must be finite"));
                }
                let id = cells.len();
                names.insert(name.clone(), id);
                cells.push(Cell {
                    id,
                    name,
                    gx,
                    gy,
                    cx: gx,
                    cy: gy,
                    w,
                    h,
                    rail,
                    fixed,
                    legalized: false,
                });
            }
            "BLOCK" => {
                if toks.len() != 4 {
                    return Err(syntax(ln, "BLOCK wants: row start end"));
                }
                let row: i64 = toks[1].parse().map_err(|_| syntax(ln, "bad row"))?;
                let start: i64 = toks[2].parse().map_err(|_| syntax(ln, "bad start"))?;
                let end: i64 = toks[3].parse().map_err(|_| syntax(ln, "bad end"))?;
                blocks.push((ln, row, start, end));
            }
            other => return Err(syntax(ln, format!("unknown record {other:?}"))),
        }
    }

    let mut grid = grid.ok_or_else(|| IngestError::Semantic("missing GRID line".into()))?;
    for (ln, row, start, end) in blocks {
        if row < 0 || row >= grid.num_rows {
            return Err(syntax(ln, "BLOCK row out of range"));
        }
        if start < 0 || end > grid.num_sites || start >= end {
            return Err(syntax(ln, "BLOCK span out of range"));
        }
        grid.add_blockage(row, start, end);
    }
    for c in &cells {
        if c.fixed {
            if c.gx.fract() != 0.0 || c.gy.fract() != 0.0 {
                return Err(IngestError::Semantic(format!(
                    "fixed cell {:?} must sit on the site raster",
                    c.name
                )));
            }
            if c.gx < 0.0
                || c.gx + c.w as f64 > grid.num_sites as f64
                || c.gy < 0.0
                || c.gy + c.h as f64 > grid.num_rows as f64
            {
                return Err(IngestError::Semantic(format!(
                    "fixed cell {:?} out of bounds",
                    c.name
                )));
            }
        }
    }
    Ok(Placement::new(grid, cells))
}

/// Shortest exact decimal for a coordinate; integers print without a dot.
fn coord(v: f64) -> String {
    format!("{v}")
}

/// Deterministic writer: grid, blockages, then cells in id order with their
/// current positions (integers once legalized).
pub fn write_placement(p: &Placement) -> String {
    let g = &p.grid;
    let mut out = String::new();
    out.push_str(&format!(
        "GRID {} {} {} {} {}\n",
        g.num_rows,
        coord(g.row_height),
        coord(g.site_width),
        g.num_sites,
        rail_str(g.first_rail)
    ));
    for (row, spans) in g.blockages.iter().enumerate() {
        for &(s, e) in spans {
            out.push_str(&format!("BLOCK {row} {s} {e}\n"));
        }
    }
    for c in &p.cells {
        out.push_str(&format!(
            "CELL {} {} {} {} {} {} {}\n",
            c.name,
            coord(c.cx),
            coord(c.cy),
            c.w,
            c.h,
            rail_str(c.rail),
            u8::from(c.fixed)
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::check_legal;

    #[test]
    fn parses_the_documented_example() {
        let p = parse_placement("GRID 4 1.0 1.0 20 P\nCELL a 3.2 1.4 2 1 ANY 0\n").unwrap();
        assert_eq!(p.grid.num_rows, 4);
        assert_eq!(p.grid.num_sites, 20);
        assert_eq!(p.grid.first_rail, Rail::P);
        assert_eq!(p.cells.len(), 1);
        let c = &p.cells[0];
        assert_eq!((c.gx, c.gy, c.w, c.h), (3.2, 1.4, 2, 1));
        assert_eq!(c.rail, Rail::Any);
        assert!(!c.fixed);
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let text = "# header\nGRID 2 1.0 1.0 10 G # trailing\n\nCELL x 0 0 1 1 P 0\n";
        let p = parse_placement(text).unwrap();
        assert_eq!(p.cells.len(), 1);
        assert_eq!(p.grid.first_rail, Rail::G);
    }

    #[test]
    fn duplicate_names_are_rejected() {
        let text = "GRID 2 1 1 10 P\nCELL a 0 0 1 1 ANY 0\nCELL a 2 0 1 1 ANY 0\n";
        assert!(matches!(parse_placement(text), Err(IngestError::DuplicateId(_))));
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        let err = parse_placement("GRID 2 1 1 10 P\nCELL a 0 0 1 ANY 0\n").unwrap_err();
        match err {
            IngestError::Syntax { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn grid_must_exist() {
        assert!(matches!(
            parse_placement("CELL a 0 0 1 1 ANY 0\n"),
            Err(IngestError::Semantic(_))
        ));
    }

    #[test]
    fn blockages_merge_and_round_trip() {
        let text = "GRID 3 1 1 30 P\nBLOCK 1 4 8\nBLOCK 1 6 12\nBLOCK 0 0 2\nCELL a 9 2 3 1 ANY 0\n";
        let p = parse_placement(text).unwrap();
        assert_eq!(p.grid.blockages[1], vec![(4, 12)]);
        let written = write_placement(&p);
        let again = parse_placement(&written).unwrap();
        assert_eq!(write_placement(&again), written);
    }

    #[test]
    fn round_trip_is_identity_for_legalized_placements() {
        let text = "GRID 4 1.0 1.0 20 P\nCELL a 3 2 2 1 P 0\nCELL b 6 0 3 2 ANY 0\nCELL m 10 0 4 4 ANY 1\n";
        let mut p = parse_placement(text).unwrap();
        for c in &mut p.cells {
            c.legalized = true;
        }
        assert!(check_legal(&p).is_empty());
        let written = write_placement(&p);
        let q = parse_placement(&written).unwrap();
        assert_eq!(p.cells.len(), q.cells.len());
        for (a, b) in p.cells.iter().zip(&q.cells) {
            assert_eq!((a.name.as_str(), a.cx, a.cy, a.w, a.h, a.rail, a.fixed),
                       (b.name.as_str(), b.cx, b.cy, b.w, b.h, b.rail, b.fixed));
        }
        assert_eq!(write_placement(&q), written);
    }

    #[test]
    fn fixed_cells_must_be_on_raster() {
        let text = "GRID 2 1 1 10 P\nCELL a 0.5 0 1 1 ANY 1\n";
        assert!(matches!(parse_placement(text), Err(IngestError::Semantic(_))));
    }
}
