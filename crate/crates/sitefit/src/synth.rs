//! Deterministic synthetic-instance generator. Cells are shelf-packed into a
//! legal layout at the requested density, then jittered off the raster so the
//! result looks like global-placement output: mostly spread out, with bounded
//! local overlap.

use rand::RngExt;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::{Cell, Placement, Rail, SiteGrid};

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("spec infeasible: {0}")]
    InfeasibleSpec(String),
}

#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub num_cells: usize,
    pub num_rows: i64,
    pub num_sites: i64,
    /// Target ratio of total cell area to grid area, hit within +/-2%.
    pub density: f64,
    /// Height -> weight; normalized internally.
    pub height_mix: Vec<(i64, f64)>,
    pub max_width: i64,
    /// Max horizontal jitter in sites, vertical in rows.
    pub jitter_x: f64,
    pub jitter_y: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(num_cells: usize, num_rows: i64, num_sites: i64, density: f64, seed: u64) -> Self {
        SyntheticSpec {
            num_cells,
            num_rows,
            num_sites,
            density,
            height_mix: vec![(1, 0.55), (2, 0.25), (3, 0.12), (4, 0.08)],
            max_width: 8,
            jitter_x: 4.0,
            jitter_y: 0.9,
            seed,
        }
    }

    /// Grid sized for `n` cells at `density` with the default mix.
    pub fn sized(n: usize, density: f64, seed: u64) -> Self {
        let avg_area = 4.5 * 1.73; // E[w] * E[h] for the default dials
        let capacity = (n as f64 * avg_area / density).max(64.0);
        let num_rows = ((capacity / 16.0).sqrt().round() as i64).max(8);
        let num_sites = (capacity / num_rows as f64).ceil() as i64;
        SyntheticSpec::new(n, num_rows, num_sites, density, seed)
    }
}

pub fn generate(spec: &SyntheticSpec) -> Result<Placement, SynthError> {
    if spec.num_rows <= 0 || spec.num_sites <= 0 {
        return Err(SynthError::InfeasibleSpec("grid must be nonempty".into()));
    }
    if !(0.0..=0.95).contains(&spec.density) {
        return Err(SynthError::InfeasibleSpec(format!(
            "density {} outside [0, 0.95]",
            spec.density
        )));
    }
    let grid = SiteGrid::new(spec.num_rows, spec.num_sites, 1.0, 1.0, Rail::P)
        .expect("positive units");
    if spec.num_cells == 0 {
        return Ok(Placement::new(grid, Vec::new()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mix: Vec<(i64, f64)> = {
        let total: f64 = spec.height_mix.iter().map(|&(_, w)| w).sum();
        spec.height_mix.iter().map(|&(h, w)| (h, w / total)).collect()
    };
    let h_max = mix.iter().map(|&(h, _)| h).max().unwrap_or(1);
    if h_max > spec.num_rows {
        return Err(SynthError::InfeasibleSpec(
            "tallest height class exceeds row count".into(),
        ));
    }

    // Heights from the mix, widths uniform, then nudge widths until the total
    // area lands within 0.5% of the target (well inside the +/-2% contract).
    let mut heights = Vec::with_capacity(spec.num_cells);
    for _ in 0..spec.num_cells {
        let roll: f64 = rng.random_range(0.0..1.0);
        let mut acc = 0.0;
        let mut h = mix.last().unwrap().0;
        for &(hh, p) in &mix {
            acc += p;
            if roll < acc {
                h = hh;
                break;
            }
        }
        heights.push(h);
    }
    let mut widths: Vec<i64> = (0..spec.num_cells)
        .map(|_| rng.random_range(1..=spec.max_width))
        .collect();

    let capacity = (spec.num_rows * spec.num_sites) as f64;
    let target_area = spec.density * capacity;
    let area = |ws: &[i64]| -> f64 {
        ws.iter().zip(&heights).map(|(&w, &h)| (w * h) as f64).sum()
    };
    for _ in 0..200 * spec.num_cells {
        let cur = area(&widths);
        if (cur - target_area).abs() <= (0.005 * target_area).max(1.0) {
            break;
        }
        let i = rng.random_range(0..spec.num_cells);
        if cur < target_area && widths[i] < spec.max_width {
            widths[i] += 1;
        } else if cur > target_area && widths[i] > 1 {
            widths[i] -= 1;
        }
    }
    let achieved = area(&widths) / capacity;
    if (achieved - spec.density).abs() > 0.02 {
        return Err(SynthError::InfeasibleSpec(format!(
            "could not reach density {} (achieved {achieved:.3})",
            spec.density
        )));
    }

    // Shelf-pack tallest-first with randomized spacing so whitespace spreads
    // evenly instead of pooling at the right edge.
    let mut ord: Vec<usize> = (0..spec.num_cells).collect();
    ord.sort_by_key(|&i| std::cmp::Reverse(heights[i]));
    let mean_w: f64 = widths.iter().sum::<i64>() as f64 / spec.num_cells as f64;
    let spread = if spec.density > 0.0 {
        mean_w * (1.0 - spec.density) / spec.density
    } else {
        mean_w
    };
    let mut frontier = vec![0i64; spec.num_rows as usize];
    let mut placed: Vec<(usize, i64, i64)> = Vec::with_capacity(spec.num_cells); // (cell, x, row)
    for &i in &ord {
        let (w, h) = (widths[i], heights[i]);
        // Mean gap of 0.8*spread spends most of the whitespace budget between
        // cells while leaving headroom for unlucky row imbalance.
        let gap = rng.random_range(0.0..=(1.6_f64 * spread).max(0.001)) as i64;
        let mut best: Option<(i64, i64)> = None; // (x, bottom row)
        for b in 0..=(spec.num_rows - h) {
            let base = (b..b + h).map(|r| frontier[r as usize]).max().unwrap();
            if base + w > spec.num_sites {
                continue;
            }
            let x = base + gap.min(spec.num_sites - w - base);
            if best.map_or(true, |(bx, _)| x < bx) {
                best = Some((x, b));
            }
        }
        let (x, b) = best.ok_or_else(|| {
            SynthError::InfeasibleSpec("packing failed; lower the density".into())
        })?;
        for r in b..b + h {
            frontier[r as usize] = x + w;
        }
        placed.push((i, x, b));
    }

    // Stable cell naming by generation index, positions jittered off-grid.
    placed.sort_by_key(|&(i, _, _)| i);
    let mut cells = Vec::with_capacity(spec.num_cells);
    for (i, x, b) in placed {
        let (w, h) = (widths[i], heights[i]);
        let gx = (x as f64 + rng.random_range(-spec.jitter_x..=spec.jitter_x))
            .clamp(0.0, (spec.num_sites - w) as f64);
        let gy = (b as f64 + rng.random_range(-spec.jitter_y..=spec.jitter_y))
            .clamp(0.0, (spec.num_rows - h) as f64);
        let rail = if h % 2 == 1 { grid.rail_of(b) } else { Rail::Any };
        cells.push(Cell {
            id: i,
            name: format!("c{i}"),
            gx,
            gy,
            cx: gx,
            cy: gy,
            w,
            h,
            rail,
            fixed: false,
            legalized: false,
        });
    }
    Ok(Placement::new(grid, cells))
}
