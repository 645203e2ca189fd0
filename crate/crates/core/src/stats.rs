//! Small numerical helpers shared across modules: deterministic reductions,
//! sample statistics, least-squares slope fits and composite quadrature.

/// Pairwise (cascade) summation in a fixed order.
///
/// The split points depend only on the slice length, so the result is
/// bit-identical for identical inputs regardless of how they were produced.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 8;
    if values.len() <= BLOCK {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    pairwise_sum(values) / values.len() as f64
}

/// Unbiased sample standard deviation (N - 1 denominator).
pub fn sample_std(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    let sq: Vec<f64> = values.iter().map(|v| (v - m) * (v - m)).collect();
    (pairwise_sum(&sq) / (n - 1) as f64).sqrt()
}

/// Standard error of the mean: sample std / sqrt(N).
pub fn std_error(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    sample_std(values) / (values.len() as f64).sqrt()
}

/// Sample covariance of two equally long sequences (N - 1 denominator).
pub fn sample_cov(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    if n < 2 {
        return 0.0;
    }
    let (ma, mb) = (mean(a), mean(b));
    let prod: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).collect();
    pairwise_sum(&prod) / (n - 1) as f64
}

/// Ordinary least-squares fit `y = intercept + slope * x`; returns `(slope, intercept)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    assert_eq!(x.len(), y.len());
    let mx = mean(x);
    let my = mean(y);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (xi, yi) in x.iter().zip(y) {
        sxy += (xi - mx) * (yi - my);
        sxx += (xi - mx) * (xi - mx);
    }
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Exponential rate `k` of `y ~ exp(-k t)` by a log-linear fit over positive samples.
pub fn fit_decay_rate(t: &[f64], y: &[f64]) -> f64 {
    let (tt, ly): (Vec<f64>, Vec<f64>) = t
        .iter()
        .zip(y)
        .filter(|(_, v)| **v > 0.0)
        .map(|(ti, v)| (*ti, v.ln()))
        .unzip();
    -linear_fit(&tt, &ly).0
}

/// Composite Simpson rule on uniformly spaced samples. An odd number of
/// intervals falls back to Simpson 3/8 on the last three.
pub fn simpson_uniform(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    match n {
        0 | 1 => 0.0,
        2 => 0.5 * h * (values[0] + values[1]),
        3 => h / 3.0 * (values[0] + 4.0 * values[1] + values[2]),
        _ => {
            let intervals = n - 1;
            let (even_end, tail) = if intervals.is_multiple_of(2) {
                (n - 1, 0.0)
            } else {
                let k = n - 4;
                let t = 3.0 * h / 8.0
                    * (values[k] + 3.0 * values[k + 1] + 3.0 * values[k + 2] + values[k + 3]);
                (k, t)
            };
            let mut s = values[0] + values[even_end];
            for (i, v) in values.iter().enumerate().take(even_end).skip(1) {
                s += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
            }
            s * h / 3.0 + tail
        }
    }
}

/// Trapezoid rule on arbitrary (sorted) abscissae.
pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xw, yw)| 0.5 * (xw[1] - xw[0]) * (yw[0] + yw[1]))
        .sum()
}

/// The splitmix64 output finalizer: a bijection on `u64` with good avalanche.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Counter-based per-stream seed: `mix64(master + (index + 1) * golden)`.
///
/// Distinct indices give distinct seeds for a fixed master, because the
/// additive step is odd (so injective mod 2^64) and `mix64` is a bijection.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;
    mix64(master.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN)))
}
