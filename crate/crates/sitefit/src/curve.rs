//! Piecewise-linear displacement curves. Every cell a target insertion can
//! push contributes breakpoints — x positions with slope contributions of
//! −1, 0 or +1 on each side — and the total displacement as a function of
//! the target position is their sum plus a constant. The minimum lies on a
//! breakpoint or a range endpoint.
//!
//! `six_op_optimum` chains the six pipeline stages (sort, merge, right-slope
//! prefix, left-slope suffix, value propagation, selection) as separate
//! operations; `fused_optimum` computes the same result with one forward and
//! one backward sweep. Both evaluate identical floating-point expressions in
//! identical order, so their results are bit-for-bit equal — pinned by tests.

use thiserror::Error;

/// Breakpoints closer than this merge into one, chained: a run of points
/// whose consecutive gaps each stay within the tolerance collapses onto the
/// run's lowest x.
pub const MERGE_EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum CurveError {
    #[error("curve has no breakpoints")]
    EmptyCurve,
    #[error("empty x range")]
    BadRange,
}

/// One curve kink: value 0 at `x`, slope `slope_l` left of it, `slope_r`
/// right of it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Breakpoint {
    pub x: f64,
    pub slope_l: i64,
    pub slope_r: i64,
}

impl Breakpoint {
    /// |x - a| shape: the plain two-sided kink.
    pub fn vee(x: f64) -> Breakpoint {
        Breakpoint { x, slope_l: -1, slope_r: 1 }
    }

    pub fn eval(&self, at: f64) -> f64 {
        if at < self.x {
            self.slope_l as f64 * (at - self.x)
        } else {
            self.slope_r as f64 * (at - self.x)
        }
    }
}

/// Direct evaluation; the reference the pipelines are tested against.
pub fn eval_curve(bps: &[Breakpoint], constant: f64, at: f64) -> f64 {
    let mut v = constant;
    for b in bps {
        v += b.eval(at);
    }
    v
}

/// A group of breakpoints sharing (up to `MERGE_EPS`) one x, with the
/// pipeline's accumulated quantities filled in by the later stages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergedBreakpoint {
    pub x: f64,
    pub slope_l: i64,
    pub slope_r: i64,
    /// Σ slope_r over groups 0..=this one (stage 3).
    pub prefix_r: i64,
    /// Σ slope_l over this group..end (stage 4).
    pub suffix_l: i64,
    /// Curve value at x (stage 5).
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveOptimum {
    pub x: f64,
    pub value: f64,
}

/// Stage 1: stable order by x.
pub fn sort_breakpoints(mut bps: Vec<Breakpoint>) -> Vec<Breakpoint> {
    bps.sort_by(|a, b| a.x.partial_cmp(&b.x).unwrap());
    bps
}

/// Stage 2: collapse near-equal x runs, summing slopes.
pub fn merge_breakpoints(sorted: &[Breakpoint]) -> Vec<MergedBreakpoint> {
    let mut merged: Vec<MergedBreakpoint> = Vec::new();
    let mut prev_x = f64::NEG_INFINITY;
    for b in sorted {
        match merged.last_mut() {
            Some(m) if b.x - prev_x <= MERGE_EPS => {
                m.slope_l += b.slope_l;
                m.slope_r += b.slope_r;
            }
            _ => merged.push(MergedBreakpoint {
                x: b.x,
                slope_l: b.slope_l,
                slope_r: b.slope_r,
                prefix_r: 0,
                suffix_l: 0,
                value: 0.0,
            }),
        }
        prev_x = b.x;
    }
    merged
}

/// Stage 3: cumulative right-slopes, own group included.
pub fn sum_slopes_r(merged: &mut [MergedBreakpoint]) {
    let mut acc = 0i64;
    for m in merged.iter_mut() {
        acc += m.slope_r;
        m.prefix_r = acc;
    }
}

/// Stage 4: cumulative left-slopes from the right, own group included.
pub fn sum_slopes_l(merged: &mut [MergedBreakpoint]) {
    let mut acc = 0i64;
    for m in merged.iter_mut().rev() {
        acc += m.slope_l;
        m.suffix_l = acc;
    }
}

/// Stages 5+6: anchor the value at the first group by direct evaluation,
/// propagate it along the inter-group slopes, then pick the leftmost minimum
/// among the range ends and every group position. `sorted` must be the exact
/// breakpoint list `merged` was built from.
pub fn calculate_value(
    sorted: &[Breakpoint],
    merged: &mut [MergedBreakpoint],
    constant: f64,
    x_lo: f64,
    x_hi: f64,
) -> CurveOptimum {
    let x0 = merged[0].x;
    let mut v = constant;
    for b in sorted {
        v += b.eval(x0);
    }
    merged[0].value = v;
    for i in 1..merged.len() {
        let slope = (merged[i - 1].prefix_r + merged[i].suffix_l) as f64;
        v = v + slope * (merged[i].x - merged[i - 1].x);
        merged[i].value = v;
    }

    // Candidates left to right; only a strict improvement displaces the
    // incumbent, so ties resolve to the lowest x.
    let mut best_x = x_lo;
    let mut best_v = merged[0].value + merged[0].suffix_l as f64 * (x_lo - merged[0].x);
    for m in merged.iter() {
        if m.value < best_v {
            best_v = m.value;
            best_x = m.x;
        }
    }
    let last = merged.last().unwrap();
    let v_hi = last.value + last.prefix_r as f64 * (x_hi - last.x);
    if v_hi < best_v {
        best_v = v_hi;
        best_x = x_hi;
    }
    CurveOptimum { x: best_x, value: best_v }
}

/// Minimize the curve over [x_lo, x_hi] by running the six stages in order.
pub fn six_op_optimum(
    bps: &[Breakpoint],
    constant: f64,
    x_lo: f64,
    x_hi: f64,
) -> Result<CurveOptimum, CurveError> {
    if !(x_lo <= x_hi) {
        return Err(CurveError::BadRange);
    }
    if bps.is_empty() {
        return Err(CurveError::EmptyCurve);
    }
    let sorted = sort_breakpoints(bps.to_vec());
    let mut merged = merge_breakpoints(&sorted);
    sum_slopes_r(&mut merged);
    sum_slopes_l(&mut merged);
    Ok(calculate_value(&sorted, &mut merged, constant, x_lo, x_hi))
}

/// Same optimum in two data sweeps after the sort: the forward sweep merges
/// groups, accumulates right-slope prefixes and folds the anchor value while
/// streaming; the backward sweep fills the left-slope suffixes; the merged
/// list then yields values and the selection exactly as the staged pipeline
/// does. Expression-for-expression identical arithmetic makes the result
/// bit-identical to `six_op_optimum`.
pub fn fused_optimum(
    bps: &[Breakpoint],
    constant: f64,
    x_lo: f64,
    x_hi: f64,
) -> Result<CurveOptimum, CurveError> {
    if !(x_lo <= x_hi) {
        return Err(CurveError::BadRange);
    }
    if bps.is_empty() {
        return Err(CurveError::EmptyCurve);
    }
    let sorted = sort_breakpoints(bps.to_vec());

    // Forward sweep over breakpoints.
    let x0 = sorted[0].x;
    let mut anchor = constant;
    let mut acc_r = 0i64;
    let mut merged: Vec<MergedBreakpoint> = Vec::new();
    let mut prev_x = f64::NEG_INFINITY;
    for b in &sorted {
        anchor += b.eval(x0);
        acc_r += b.slope_r;
        match merged.last_mut() {
            Some(m) if b.x - prev_x <= MERGE_EPS => {
                m.slope_l += b.slope_l;
                m.slope_r += b.slope_r;
                m.prefix_r = acc_r;
            }
            _ => merged.push(MergedBreakpoint {
                x: b.x,
                slope_l: b.slope_l,
                slope_r: b.slope_r,
                prefix_r: acc_r,
                suffix_l: 0,
                value: 0.0,
            }),
        }
        prev_x = b.x;
    }

    // Backward sweep over groups.
    let mut acc_l = 0i64;
    for m in merged.iter_mut().rev() {
        acc_l += m.slope_l;
        m.suffix_l = acc_l;
    }

    // Output stage: identical value propagation and selection.
    let mut v = anchor;
    merged[0].value = v;
    for i in 1..merged.len() {
        let slope = (merged[i - 1].prefix_r + merged[i].suffix_l) as f64;
        v = v + slope * (merged[i].x - merged[i - 1].x);
        merged[i].value = v;
    }
    let mut best_x = x_lo;
    let mut best_v = merged[0].value + merged[0].suffix_l as f64 * (x_lo - merged[0].x);
    for m in merged.iter() {
        if m.value < best_v {
            best_v = m.value;
            best_x = m.x;
        }
    }
    let last = merged.last().unwrap();
    let v_hi = last.value + last.prefix_r as f64 * (x_hi - last.x);
    if v_hi < best_v {
        best_v = v_hi;
        best_x = x_hi;
    }
    Ok(CurveOptimum { x: best_x, value: best_v })
}
