//! Small numerical helpers shared across modules.

/// Pairwise (cascade) summation in fixed index order.
///
/// The recursion splits at the midpoint, so the result depends only on the
/// slice contents and never on how the values were produced.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 8;
    if values.len() <= BLOCK {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// [`pairwise_sum`] of `f(0), .., f(n - 1)` without materializing the terms.
pub fn pairwise_sum_by<F: Fn(usize) -> f64>(n: usize, f: F) -> f64 {
    fn rec<F: Fn(usize) -> f64>(lo: usize, hi: usize, f: &F) -> f64 {
        if hi - lo <= 8 {
            return (lo..hi).map(f).sum();
        }
        let mid = lo + (hi - lo) / 2;
        rec(lo, mid, f) + rec(mid, hi, f)
    }
    rec(0, n, &f)
}

/// Arithmetic mean by pairwise summation; NaN for an empty slice.
pub fn mean(values: &[f64]) -> f64 {
    pairwise_sum(values) / values.len() as f64
}

/// `num` evenly spaced points on `[start, stop]`, endpoints included.
pub fn linspace(start: f64, stop: f64, num: usize) -> Vec<f64> {
    match num {
        0 => Vec::new(),
        1 => vec![start],
        _ => {
            let step = (stop - start) / (num - 1) as f64;
            (0..num).map(|i| if i == num - 1 { stop } else { start + step * i as f64 }).collect()
        }
    }
}

/// `num` logarithmically spaced points on `[start, stop]` (both positive).
pub fn logspace(start: f64, stop: f64, num: usize) -> Vec<f64> {
    linspace(start.ln(), stop.ln(), num)
        .into_iter()
        .enumerate()
        .map(|(i, x)| {
            if i == 0 {
                start
            } else if i + 1 == num {
                stop
            } else {
                x.exp()
            }
        })
        .collect()
}

/// Cumulative trapezoid running average `(1/t) * int_0^t f`, with the first
/// entry set to `f(t_0)` (the t -> 0 limit).
pub fn running_average_trapezoid(times: &[f64], values: &[f64]) -> Vec<f64> {
    debug_assert_eq!(times.len(), values.len());
    let mut out = Vec::with_capacity(values.len());
    let mut integral = 0.0;
    for i in 0..values.len() {
        if i > 0 {
            integral += 0.5 * (times[i] - times[i - 1]) * (values[i] + values[i - 1]);
        }
        let span = times[i] - times[0];
        out.push(if span > 0.0 { integral / span } else { values[i] });
    }
    out
}

/// Format a float with 17 significant digits, the round-trip width for f64.
/// Negative zero prints as zero.
pub fn fmt_f64(x: f64) -> String {
    let x = if x == 0.0 { 0.0 } else { x };
    format!("{x:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_matches_naive_on_small_integers() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(pairwise_sum(&v), 5050.0);
    }

    #[test]
    fn linspace_hits_endpoints() {
        let v = linspace(0.0, 14.0, 512);
        assert_eq!(v.len(), 512);
        assert_eq!(v[0], 0.0);
        assert_eq!(v[511], 14.0);
    }

    #[test]
    fn logspace_is_geometric() {
        let v = logspace(1e-3, 1e-1, 3);
        assert_eq!(v[0], 1e-3);
        assert!((v[1] - 1e-2).abs() < 1e-15);
        assert_eq!(v[2], 1e-1);
    }

    #[test]
    fn trapezoid_average_of_linear_function_is_exact() {
        let t = linspace(0.0, 2.0, 11);
        let f: Vec<f64> = t.iter().map(|x| 3.0 * x).collect();
        let avg = running_average_trapezoid(&t, &f);
        assert_eq!(avg[0], 0.0);
        assert!((avg[10] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn float_format_round_trips() {
        let x = 0.1 + 0.2;
        assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
    }
}
