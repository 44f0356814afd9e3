//! Subsets of the state space `[0, inf)` written as finite unions of closed
//! intervals, and the grid-plus-bisection search that produces them.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::quad::find_root;

/// Closed interval `[lo, hi]`; `hi` may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn is_point(&self) -> bool {
        self.lo == self.hi
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn scaled(&self, factor: f64) -> Interval {
        Interval {
            lo: self.lo * factor,
            hi: self.hi * factor,
        }
    }
}

/// Union of disjoint closed intervals, sorted left to right.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StateSet {
    pub intervals: Vec<Interval>,
}

impl StateSet {
    pub fn empty() -> Self {
        StateSet::default()
    }

    pub fn from_intervals(mut intervals: Vec<Interval>) -> Self {
        intervals.sort_by(|a, b| a.lo.total_cmp(&b.lo));
        let mut merged: Vec<Interval> = Vec::with_capacity(intervals.len());
        for iv in intervals {
            match merged.last_mut() {
                Some(last) if iv.lo <= last.hi => last.hi = last.hi.max(iv.hi),
                _ => merged.push(iv),
            }
        }
        StateSet { intervals: merged }
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn contains(&self, x: f64) -> bool {
        self.intervals.iter().any(|iv| iv.contains(x))
    }

    /// Right end of the last interval.
    pub fn sup(&self) -> Option<f64> {
        self.intervals.last().map(|iv| iv.hi)
    }

    pub fn inf(&self) -> Option<f64> {
        self.intervals.first().map(|iv| iv.lo)
    }

    pub fn scaled(&self, factor: f64) -> StateSet {
        StateSet {
            intervals: self.intervals.iter().map(|iv| iv.scaled(factor)).collect(),
        }
    }
}

/// Uniform grid on `[0, x_max]` with spacing at most `step`, with extra
/// `nodes` (kinks) merged in.
pub fn scan_grid(x_max: f64, step: f64, nodes: &[f64]) -> Vec<f64> {
    let n = (x_max / step).ceil().max(1.0) as usize;
    let mut grid: Vec<f64> = (0..=n).map(|k| x_max * k as f64 / n as f64).collect();
    grid.extend(nodes.iter().copied().filter(|&v| v > 0.0 && v < x_max));
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

/// Roots of each continuous function in `crossings` located between grid
/// points where it changes sign.
pub fn crossing_points(
    grid: &[f64],
    crossings: &[&dyn Fn(f64) -> Result<f64>],
    tol: f64,
) -> Result<Vec<f64>> {
    let mut points = Vec::new();
    for g in crossings {
        let values = grid.iter().map(|&x| g(x)).collect::<Result<Vec<f64>>>()?;
        for (i, v) in values.iter().enumerate() {
            if *v == 0.0 {
                points.push(grid[i]);
            }
        }
        for i in 0..grid.len() - 1 {
            let (a, b) = (values[i], values[i + 1]);
            if a != 0.0 && b != 0.0 && a.signum() != b.signum() {
                let root = find_root(|x| g(x).unwrap_or(f64::NAN), grid[i], grid[i + 1], tol)?;
                points.push(root);
            }
        }
    }
    points.sort_by(f64::total_cmp);
    points.dedup();
    Ok(points)
}

/// Assemble the set of members of `[lo, hi]` given every boundary point.
/// Boundary points count as members (the sets are closed); the pieces
/// between them are classified by their midpoints.
pub fn assemble<M: Fn(f64) -> Result<bool>>(
    lo: f64,
    hi: f64,
    boundary: &[f64],
    member: M,
) -> Result<StateSet> {
    let mut pts = vec![lo];
    pts.extend(boundary.iter().copied().filter(|&p| p > lo && p < hi));
    pts.push(hi);
    pts.dedup();

    let mut pieces = Vec::new();
    for w in pts.windows(2) {
        if member(0.5 * (w[0] + w[1]))? {
            pieces.push(Interval { lo: w[0], hi: w[1] });
        }
    }
    for &p in boundary.iter().filter(|&&p| p >= lo && p <= hi) {
        pieces.push(Interval { lo: p, hi: p });
    }
    if member(lo)? {
        pieces.push(Interval { lo, hi: lo });
    }
    if member(hi)? {
        pieces.push(Interval { lo: hi, hi });
    }
    Ok(StateSet::from_intervals(pieces))
}

/// Closed set `{x in [0, inf) : member(x)}` whose boundary points are roots
/// of the `crossings` functions. The bracket `[0, x_max]` is doubled up to
/// `max_doublings` times until its right end falls outside the set; if it
/// never does, the last interval is reported unbounded.
pub fn search_set<M: Fn(f64) -> Result<bool>>(
    x_max: f64,
    step: f64,
    nodes: &[f64],
    crossings: &[&dyn Fn(f64) -> Result<f64>],
    member: M,
    max_doublings: usize,
    tol: f64,
) -> Result<StateSet> {
    let mut x_max = x_max;
    for attempt in 0..=max_doublings {
        let grid = scan_grid(x_max, step, nodes);
        let boundary = crossing_points(&grid, crossings, tol)?;
        let mut set = assemble(0.0, x_max, &boundary, &member)?;
        if !member(x_max)? {
            return Ok(set);
        }
        if attempt == max_doublings {
            if let Some(last) = set.intervals.last_mut() {
                last.hi = f64::INFINITY;
            }
            return Ok(set);
        }
        x_max *= 2.0;
    }
    unreachable!()
}
