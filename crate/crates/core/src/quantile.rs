//! Order-statistic index arithmetic shared by the conformal and risk estimators.

/// Slack used when taking the ceiling of a product like `(k + 1) * (1 - delta)`.
///
/// Probabilities arrive as binary floats, so a product that is an integer in decimal
/// (`10 * (1 - 0.7) = 3`) may land a few ulps above it. Values within this slack of an
/// integer are snapped to that integer before the ceiling is taken.
pub const INDEX_SLACK: f64 = 1e-9;

/// Ceiling of a non-negative real with [`INDEX_SLACK`] snapping.
pub fn ceil_index(x: f64) -> usize {
    debug_assert!(x.is_finite() && x >= -INDEX_SLACK);
    let snapped = x.round();
    if (x - snapped).abs() <= INDEX_SLACK {
        snapped.max(0.0) as usize
    } else {
        x.ceil().max(0.0) as usize
    }
}

/// Conformal rank `p = ceil((k + 1)(1 - delta))`, 1-indexed.
///
/// Computed as `(k + 1) - floor((k + 1) delta)` so the only rounding step is the
/// product `(k + 1) delta`.
pub fn conformal_rank(k: usize, delta: f64) -> usize {
    let n = k + 1;
    let x = n as f64 * delta;
    let snapped = x.round();
    let floor = if (x - snapped).abs() <= INDEX_SLACK {
        snapped
    } else {
        x.floor()
    };
    n - (floor as usize).min(n)
}

/// The `rank`-th smallest element (1-indexed) of an already sorted slice, with the
/// conventional sentinel `+inf` for ranks past the end.
pub fn order_statistic(sorted: &[f64], rank: usize) -> f64 {
    if rank == 0 {
        return f64::NEG_INFINITY;
    }
    sorted.get(rank - 1).copied().unwrap_or(f64::INFINITY)
}

/// Sorts a copy of `values` in non-decreasing order (NaN-free input assumed).
pub fn sorted_copy(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}
