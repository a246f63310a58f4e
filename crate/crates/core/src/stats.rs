//! Small descriptive-statistics helpers shared by the diagnostics.

/// Mean and standard error of the mean (population normalisation, so the
/// error of a sample confined to `[0, 1]` never exceeds `0.5 / sqrt(len)`).
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, (var / n).sqrt())
}

/// Unbiased sample variance together with an asymptotic standard error,
/// `sqrt((m4 - s^4) / n)`.
pub fn variance_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n < 2 {
        return (0.0, 0.0);
    }
    let nf = n as f64;
    let mean = xs.iter().sum::<f64>() / nf;
    let m2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / nf;
    let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / nf;
    let var = m2 * nf / (nf - 1.0);
    (var, ((m4 - m2 * m2).max(0.0) / nf).sqrt())
}

/// Linear-interpolated empirical quantile, `q` in `[0, 1]`.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let w = pos - lo as f64;
    v[lo] + w * (v[hi] - v[lo])
}

pub fn median(xs: &[f64]) -> f64 {
    quantile(xs, 0.5)
}

/// Number of adjacent pairs where the sequence fails to go down.
///
/// With `strict` a tie counts as a failure; otherwise only increases do.
pub fn inversions(seq: &[f64], strict: bool) -> usize {
    seq.windows(2)
        .filter(|w| if strict { w[1] >= w[0] } else { w[1] > w[0] })
        .count()
}

/// Non-increasing with at most one increase.
pub fn decreasing_up_to_one_inversion(seq: &[f64]) -> bool {
    inversions(seq, false) <= 1
}

/// Strictly decreasing with at most one step that is not a decrease.
pub fn strictly_decreasing_up_to_one_inversion(seq: &[f64]) -> bool {
    inversions(seq, true) <= 1
}
