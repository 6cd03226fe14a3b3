//! Mixed-cell-height standard-cell legalization.
//!
//! Cells of heights 1..H rows are snapped onto a site grid with power-rail
//! alignment, minimizing total displacement from the global placement. The
//! engine processes targets in a sliding-window order, extracts a local
//! region per target, finds the displacement-optimal insertion point on a
//! piecewise-linear cost curve, and commits by shifting neighbors aside.

pub mod curve;
pub mod fop;
pub mod io;
pub mod legalizer;
pub mod model;
pub mod ordering;
pub mod region;
pub mod shift;
pub mod svg;
pub mod synth;
