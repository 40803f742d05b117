//! Small statistical helpers: summary moments, integrated autocorrelation
//! time, a chi-squared goodness-of-fit test against the geometric law and a
//! two-sample Kolmogorov-Smirnov test.

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{invalid, Error, Result};

/// Mean and unbiased variance.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, ss / (n - 1.0))
}

/// Integrated autocorrelation time `1 + 2 sum_k rho_k`, truncated at the
/// first window `W >= 5 tau(W)` (Sokal's self-consistent window). Returns
/// `None` for a constant series.
pub fn integrated_autocorr_time(xs: &[f64]) -> Option<f64> {
    let n = xs.len();
    if n < 2 {
        return None;
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let c: Vec<f64> = xs.iter().map(|x| x - mean).collect();
    let c0: f64 = c.iter().map(|x| x * x).sum::<f64>() / n as f64;
    if c0 <= 0.0 {
        return None;
    }
    let max_lag = (n / 10).max(1);
    let mut tau = 1.0;
    for k in 1..=max_lag {
        let ck: f64 = c[..n - k].iter().zip(&c[k..]).map(|(a, b)| a * b).sum::<f64>() / n as f64;
        tau += 2.0 * ck / c0;
        if k as f64 >= 5.0 * tau {
            break;
        }
    }
    Some(tau.max(1.0))
}

/// Outcome of a chi-squared goodness-of-fit test.
#[derive(Debug, Clone, PartialEq)]
pub struct ChiSquaredTest {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    /// Samples actually tested (after thinning).
    pub samples: usize,
    /// Thinning stride applied to the input.
    pub stride: usize,
    /// Lower edges of the bins; the last bin is open to the right.
    pub bin_edges: Vec<u64>,
}

/// Chi-squared test of i.i.d. draws against `P(N = n) = (1 - rho) rho^n`.
///
/// Consecutive values are merged into bins until each expected count is at
/// least 5; the last bin collects the tail.
pub fn chi_squared_geometric(xs: &[u64], rho: f64) -> Result<ChiSquaredTest> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(invalid(format!("rho must lie in (0, 1), got {rho}")));
    }
    let total = xs.len() as f64;
    if total < 10.0 {
        return Err(Error::Diagnostic(format!("{} samples are too few for a chi-squared test", xs.len())));
    }
    // Bin edges: [e_b, e_{b+1}) with expected total * (rho^a - rho^b) >= 5,
    // the final bin [e_last, inf) holding at least 5 as well.
    let mut edges = vec![0u64];
    let mut lo = 0u64;
    loop {
        let tail_lo = total * rho.powf(lo as f64);
        if tail_lo < 10.0 {
            break;
        }
        let mut hi = lo + 1;
        while total * (rho.powf(lo as f64) - rho.powf(hi as f64)) < 5.0 {
            hi += 1;
        }
        if total * rho.powf(hi as f64) < 5.0 {
            break;
        }
        edges.push(hi);
        lo = hi;
    }
    let bins = edges.len();
    if bins < 2 {
        return Err(Error::Diagnostic("too few samples to form two bins".into()));
    }
    let mut observed = vec![0u64; bins];
    for &x in xs {
        let b = edges.partition_point(|&e| e <= x) - 1;
        observed[b] += 1;
    }
    let mut statistic = 0.0;
    for b in 0..bins {
        let p_lo = rho.powf(edges[b] as f64);
        let p_hi = if b + 1 < bins { rho.powf(edges[b + 1] as f64) } else { 0.0 };
        let e = total * (p_lo - p_hi);
        let d = observed[b] as f64 - e;
        statistic += d * d / e;
    }
    let dof = bins - 1;
    let dist = ChiSquared::new(dof as f64).map_err(|e| Error::Diagnostic(e.to_string()))?;
    Ok(ChiSquaredTest {
        statistic,
        dof,
        p_value: 1.0 - dist.cdf(statistic),
        samples: xs.len(),
        stride: 1,
        bin_edges: edges,
    })
}

/// Two-sample Kolmogorov-Smirnov test; returns `(D, p-value)` using the
/// asymptotic Kolmogorov distribution with the Stephens correction.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < n && j < m {
        let x = a[i].min(b[j]);
        while i < n && a[i] <= x {
            i += 1;
        }
        while j < m && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let en = ((n * m) as f64 / (n + m) as f64).sqrt();
    let lambda = (en + 0.12 + 0.11 / en) * d;
    (d, kolmogorov_q(lambda))
}

fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = 2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-12 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}
