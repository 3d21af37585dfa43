use crate::field::Point;

/// `log Σ exp(x_i)`; `-inf` for an empty slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = xs.iter().map(|x| (x - m).exp()).sum();
    m + s.ln()
}

/// Normalizes log-weights in place into a probability vector.
pub fn softmax_in_place(xs: &mut [f64]) {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in xs.iter_mut() {
        *x = (*x - m).exp();
        total += *x;
    }
    for x in xs.iter_mut() {
        *x /= total;
    }
}

/// `e + w·(e − u)`, elementwise.
pub(crate) fn apply_safe_term(mut e: Point, u: &Point, w: f64) -> Point {
    for (ei, ui) in e.iter_mut().zip(u.iter()) {
        *ei += w * (*ei - ui);
    }
    e
}
