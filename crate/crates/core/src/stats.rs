//! Small order-statistic helpers shared by the normalisation routines.

/// Linear-interpolation percentile ("type 7"): rank `h = (n - 1) q` on the
/// sorted values, interpolated between the neighbouring order statistics.
///
/// `q` is a fraction in `[0, 1]`. Returns `None` for empty input.
pub fn quantile(values: &[f32], q: f64) -> Option<f64> {
    let mut sorted: Vec<f32> = values.to_vec();
    sorted.sort_unstable_by(f32::total_cmp);
    quantile_sorted(&sorted, q)
}

/// As [`quantile`] on already-sorted input.
pub fn quantile_sorted(sorted: &[f32], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let q = q.clamp(0.0, 1.0);
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = h - lo as f64;
    let a = f64::from(sorted[lo]);
    let b = f64::from(sorted[hi]);
    if frac == 0.0 {
        Some(a)
    } else {
        Some(a + (b - a) * frac)
    }
}
