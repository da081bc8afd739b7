//! Test-only oracles, kept independent of the library's code paths.
#![allow(dead_code)]

/// Ratio update evaluated exactly as written: for each participating core,
/// `pr_i / sum_j (t_i * pr_j / t_j)`, then scaled to participant mean 1.
pub fn ratio_update_oracle(pr: &[f64], t: &[f64]) -> Vec<f64> {
    let n = pr.len();
    let mut out = vec![0.0; n];
    for i in 0..n {
        let mut denom = 0.0;
        for j in 0..n {
            denom += t[i] * pr[j] / t[j];
        }
        out[i] = pr[i] / denom;
    }
    let mean = out.iter().sum::<f64>() / n as f64;
    out.iter().map(|v| v / mean).collect()
}

/// Every composition of `total` into `n` non-negative parts.
pub fn compositions(total: usize, n: usize) -> Vec<Vec<usize>> {
    if n == 1 {
        return vec![vec![total]];
    }
    let mut out = Vec::new();
    for first in 0..=total {
        for mut rest in compositions(total - first, n - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// Smallest achievable max |s_i - theta_i * s| over all integer splits.
pub fn min_max_deviation(total: usize, ratios: &[f64]) -> f64 {
    let sum: f64 = ratios.iter().sum();
    compositions(total, ratios.len())
        .iter()
        .map(|c| max_deviation(c, total, ratios, sum))
        .fold(f64::INFINITY, f64::min)
}

pub fn max_deviation(parts: &[usize], total: usize, ratios: &[f64], sum: f64) -> f64 {
    parts
        .iter()
        .zip(ratios)
        .map(|(&p, &r)| (p as f64 - r / sum * total as f64).abs())
        .fold(0.0, f64::max)
}

/// Widest-integer triple loop.
pub fn gemm_oracle(m: usize, n: usize, k: usize, a: &[u8], b: &[i8]) -> Vec<i64> {
    let mut c = vec![0i64; m * n];
    for i in 0..m {
        for j in 0..n {
            for p in 0..k {
                c[i * n + j] += a[i * k + p] as i64 * b[p * n + j] as i64;
            }
        }
    }
    c
}

/// Double-precision dot products of already-dequantized operands.
pub fn gemv_oracle(w: &[f64], rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
    (0..rows)
        .map(|r| {
            (0..cols)
                .map(|c| w[r * cols + c] * x[c])
                .sum()
        })
        .collect()
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    if want == 0.0 {
        got.abs()
    } else {
        ((got - want) / want).abs()
    }
}
