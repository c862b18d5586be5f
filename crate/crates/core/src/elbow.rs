//! Knee selection on a coverage-vs-k curve.

use crate::{Error, Result};

/// Returns the k whose point lies farthest from the chord joining the first
/// and last points of the curve. Ties go to the smallest k. When the chord
/// is degenerate or every point is on it, returns the smallest k attaining
/// the maximum coverage.
///
/// The curve needs at least three points, strictly increasing k and
/// non-decreasing coverage.
pub fn elbow(curve: &[(usize, f64)]) -> Result<usize> {
    if curve.len() < 3 {
        return Err(Error::InvalidConfig("elbow needs at least three points".into()));
    }
    for w in curve.windows(2) {
        if w[1].0 <= w[0].0 {
            return Err(Error::InvalidConfig("k must be strictly increasing".into()));
        }
        if !(w[1].1 >= w[0].1) {
            return Err(Error::InvalidConfig("coverage must be non-decreasing".into()));
        }
    }
    if curve.iter().any(|&(_, c)| !c.is_finite()) {
        return Err(Error::InvalidConfig("coverage must be finite".into()));
    }

    let (x1, y1) = (curve[0].0 as f64, curve[0].1);
    let (x2, y2) = {
        let last = curve[curve.len() - 1];
        (last.0 as f64, last.1)
    };
    let (dx, dy) = (x2 - x1, y2 - y1);
    let chord = dx.hypot(dy);

    let mut best_k = curve[0].0;
    let mut best_d = 0.0;
    if chord > 0.0 {
        for &(k, c) in curve {
            let d = (dx * (y1 - c) - (x1 - k as f64) * dy).abs() / chord;
            if d > best_d {
                best_d = d;
                best_k = k;
            }
        }
    }
    // collinear up to rounding
    let scale = 1.0 + x2.abs().max(y2.abs());
    if chord == 0.0 || best_d <= 1e-12 * scale {
        let max_c = curve.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        return Ok(curve.iter().find(|p| p.1 == max_c).unwrap().0);
    }
    Ok(best_k)
}
