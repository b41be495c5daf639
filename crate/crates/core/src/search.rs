//! Deterministic lattice search shared by the direct and two-step
//! estimators.
//!
//! Candidates are scored in parallel but collected into pre-assigned slots,
//! and the maximum is taken by a serial scan with a strict comparison, so
//! the winner is the lowest row-major index among ties regardless of the
//! number of worker threads.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scenario::{Position, Region};

/// Row-major rectangular lattice over the region: y varies across rows,
/// x within a row, both starting at the region minimum.
pub(crate) fn lattice(region: &Region, spacing: f64) -> Vec<Position> {
    let nx = (region.width() / spacing).floor() as usize + 1;
    let ny = (region.height() / spacing).floor() as usize + 1;
    let mut points = Vec::with_capacity(nx * ny);
    for iy in 0..ny {
        let y = region.y_min + iy as f64 * spacing;
        for ix in 0..nx {
            points.push(Position::new(region.x_min + ix as f64 * spacing, y));
        }
    }
    points
}

/// Square refinement lattice spanning `center +- half_width` at the given
/// spacing, clamped into the region. The center itself is always a lattice
/// point, so refinement can never lose the incumbent.
pub(crate) fn zoom_lattice(
    center: Position,
    half_width: f64,
    spacing: f64,
    region: &Region,
) -> Vec<Position> {
    let steps = (half_width / spacing).round() as i64;
    let mut points = Vec::with_capacity(((2 * steps + 1) * (2 * steps + 1)) as usize);
    for iy in -steps..=steps {
        for ix in -steps..=steps {
            let p = Position::new(
                center.x + ix as f64 * spacing,
                center.y + iy as f64 * spacing,
            );
            points.push(region.clamp(p));
        }
    }
    points
}

/// Evaluates all candidates in parallel and returns the first one attaining
/// the maximum score.
pub(crate) fn argmax_parallel<T, F>(candidates: &[Position], evaluate: F) -> Result<(Position, (f64, T))>
where
    T: Send + Clone,
    F: Fn(Position) -> (f64, T) + Sync,
{
    if candidates.is_empty() {
        return Err(Error::invalid("empty search lattice"));
    }
    let scored: Vec<(f64, T)> = candidates.par_iter().map(|&p| evaluate(p)).collect();
    let mut best_idx = 0;
    for (idx, entry) in scored.iter().enumerate().skip(1) {
        if entry.0 > scored[best_idx].0 {
            best_idx = idx;
        }
    }
    Ok((candidates[best_idx], scored[best_idx].clone()))
}
