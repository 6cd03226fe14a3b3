//! Static SVG rendering of a placement. Scale: 1 site = 4 px, 1 row = 10 px,
//! row 0 at the bottom. Fixed palette by cell height so diffs stay stable:
//! h=1 #4e79a7, h=2 #f28e2b, h=3 #59a14c, h=4 #e15759, taller #b07aa1;
//! fixed cells #79706e, blockages #bab0ac. Output bytes are a pure function
//! of the placement.

use std::fmt::Write;

use crate::model::{Cell, Placement};

const SITE_PX: f64 = 4.0;
const ROW_PX: f64 = 10.0;

fn fill_for(c: &Cell) -> &'static str {
    if c.fixed {
        return "#79706e";
    }
    match c.h {
        1 => "#4e79a7",
        2 => "#f28e2b",
        3 => "#59a14c",
        4 => "#e15759",
        _ => "#b07aa1",
    }
}

pub fn render_svg(p: &Placement) -> String {
    let w = p.grid.num_sites as f64 * SITE_PX;
    let h = p.grid.num_rows as f64 * ROW_PX;
    // Flip y so row 0 sits at the bottom edge.
    let y_of = |row_top: f64| h - row_top * ROW_PX;

    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" \
         viewBox=\"0 0 {w} {h}\">"
    );
    let _ = writeln!(s, "<rect width=\"{w}\" height=\"{h}\" fill=\"#ffffff\"/>");
    for r in 0..=p.grid.num_rows {
        let y = y_of(r as f64);
        let _ = writeln!(
            s,
            "<line x1=\"0\" y1=\"{y}\" x2=\"{w}\" y2=\"{y}\" stroke=\"#d0d0d0\" stroke-width=\"0.5\"/>"
        );
    }
    for (row, spans) in p.grid.blockages.iter().enumerate() {
        for &(lo, hi) in spans {
            let _ = writeln!(
                s,
                "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{ROW_PX}\" fill=\"#bab0ac\"/>",
                lo as f64 * SITE_PX,
                y_of(row as f64 + 1.0),
                (hi - lo) as f64 * SITE_PX,
            );
        }
    }
    for c in &p.cells {
        let _ = writeln!(
            s,
            "<rect class=\"cell\" x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" \
             fill=\"{}\" stroke=\"#333333\" stroke-width=\"0.5\"><title>{}</title></rect>",
            c.cx * SITE_PX,
            y_of(c.cy + c.h as f64),
            c.w as f64 * SITE_PX,
            c.h as f64 * ROW_PX,
            fill_for(c),
            c.name,
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Cell, Rail, SiteGrid};

    #[test]
    fn empty_placement_renders_grid_only() {
        let g = SiteGrid::new(3, 10, 1.0, 1.0, Rail::P).unwrap();
        let svg = render_svg(&Placement::new(g, vec![]));
        assert!(svg.starts_with("<svg "));
        assert!(svg.ends_with("</svg>\n"));
        assert!(!svg.contains("class=\"cell\""));
        assert_eq!(svg.matches("<line ").count(), 4);
    }

    #[test]
    fn one_cell_is_one_rect_at_flipped_coordinates() {
        let g = SiteGrid::new(3, 10, 1.0, 1.0, Rail::P).unwrap();
        let c = Cell {
            id: 0,
            name: "u1".into(),
            gx: 2.0,
            gy: 0.0,
            cx: 2.0,
            cy: 0.0,
            w: 3,
            h: 1,
            rail: Rail::Any,
            fixed: false,
            legalized: true,
        };
        let svg = render_svg(&Placement::new(g, vec![c]));
        assert_eq!(svg.matches("class=\"cell\"").count(), 1);
        // Row 0 bottom edge is y = 30px; the cell top sits one row above.
        assert!(svg.contains("x=\"8\" y=\"20\" width=\"12\" height=\"10\""));
        assert!(svg.contains("<title>u1</title>"));
    }

    #[test]
    fn blockages_and_fixed_cells_take_the_muted_fills() {
        let mut g = SiteGrid::new(2, 10, 1.0, 1.0, Rail::P).unwrap();
        g.add_blockage(1, 4, 6);
        let c = Cell {
            id: 0,
            name: "blk".into(),
            gx: 0.0,
            gy: 0.0,
            cx: 0.0,
            cy: 0.0,
            w: 2,
            h: 2,
            rail: Rail::Any,
            fixed: true,
            legalized: true,
        };
        let svg = render_svg(&Placement::new(g, vec![c]));
        assert!(svg.contains("fill=\"#bab0ac\""));
        assert!(svg.contains("fill=\"#79706e\""));
    }
}
