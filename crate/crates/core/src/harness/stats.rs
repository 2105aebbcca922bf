//! Statistical machinery behind the verification reports: batch-means
//! standard errors, stable log-sum-exp, and the p-value helpers used by the
//! chi-square and Kolmogorov-Smirnov rows.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Number of batch-means chunks used for standard errors. Batching keeps the
/// error estimate usable for the heavy-tailed martingale values that show up
/// at large tilts.
pub const BATCH_CHUNKS: usize = 100;

/// Sample mean.
pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Mean and batch-means standard error over `BATCH_CHUNKS` chunks (fewer if
/// the sample is tiny). Chunks are as even as possible and taken in order,
/// so the result is deterministic.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    if n == 1 {
        return (xs[0], 0.0);
    }
    let chunks = BATCH_CHUNKS.min(n);
    let base = n / chunks;
    let extra = n % chunks;
    let mut chunk_means = Vec::with_capacity(chunks);
    let mut idx = 0;
    for c in 0..chunks {
        let len = base + usize::from(c < extra);
        let slice = &xs[idx..idx + len];
        chunk_means.push(mean(slice));
        idx += len;
    }
    let grand = mean(xs);
    let var = chunk_means
        .iter()
        .map(|m| (m - grand) * (m - grand))
        .sum::<f64>()
        / (chunks as f64 - 1.0);
    (grand, (var / chunks as f64).sqrt())
}

/// `log(sum exp(x_i))`, stable against large magnitudes.
pub fn log_sum_exp(xs: impl Iterator<Item = f64>) -> f64 {
    let xs: Vec<f64> = xs.collect();
    if xs.is_empty() {
        return f64::NEG_INFINITY;
    }
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Survival function of the chi-square distribution: the p-value of an
/// observed statistic.
pub fn chi_square_p(statistic: f64, dof: f64) -> f64 {
    if dof <= 0.0 {
        return f64::NAN;
    }
    let dist = ChiSquared::new(dof).expect("positive dof");
    dist.sf(statistic)
}

/// Pearson statistic and p-value of observed counts against expected counts.
/// `extra_constraints` reduces the degrees of freedom below `k - 1`.
pub fn pearson_chi_square(observed: &[u64], expected: &[f64], extra_constraints: usize) -> (f64, f64) {
    assert_eq!(observed.len(), expected.len());
    let mut stat = 0.0;
    let mut cells = 0usize;
    for (&o, &e) in observed.iter().zip(expected) {
        if e > 0.0 {
            let d = o as f64 - e;
            stat += d * d / e;
            cells += 1;
        }
    }
    let dof = cells.saturating_sub(1 + extra_constraints) as f64;
    if dof <= 0.0 {
        return (stat, f64::NAN);
    }
    (stat, chi_square_p(stat, dof))
}

/// Two-sample Kolmogorov-Smirnov p-value (asymptotic Kolmogorov law).
pub fn ks_two_sample_p(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(|x, y| x.partial_cmp(y).unwrap());
    b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let (n, m) = (a.len(), b.len());
    assert!(n > 0 && m > 0);
    let mut d: f64 = 0.0;
    let (mut i, mut j) = (0usize, 0usize);
    while i < n && j < m {
        let x = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < n && a[i] <= x {
            i += 1;
        }
        while j < m && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let n_eff = (n as f64 * m as f64) / (n as f64 + m as f64);
    let lambda = (n_eff.sqrt() + 0.12 + 0.11 / n_eff.sqrt()) * d;
    kolmogorov_sf(lambda)
}

/// `Q(lambda) = 2 sum_{k>=1} (-1)^{k-1} e^{-2 k^2 lambda^2}`.
fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64) * (k as f64) * lambda * lambda).exp();
        sum += sign * term;
        sign = -sign;
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batch_means_match_plain_mean() {
        let xs: Vec<f64> = (0..1000).map(|i| (i % 7) as f64).collect();
        let (m, se) = mean_and_se(&xs);
        assert!((m - mean(&xs)).abs() <= 1e-12);
        assert!(se > 0.0);
        // A constant sample has zero error.
        let c = vec![2.5; 250];
        let (m, se) = mean_and_se(&c);
        assert_eq!(m, 2.5);
        assert_eq!(se, 0.0);
    }

    #[test]
    fn batch_se_tracks_iid_se() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let xs: Vec<f64> = (0..100_000).map(|_| rng.gen::<f64>()).collect();
        let (_, se) = mean_and_se(&xs);
        let iid = (1.0f64 / 12.0 / xs.len() as f64).sqrt();
        assert!((se - iid).abs() <= 0.35 * iid, "batch se {se} vs iid {iid}");
    }

    #[test]
    fn log_sum_exp_stability() {
        let v = log_sum_exp([1000.0, 1000.0].into_iter());
        assert!((v - (1000.0 + 2.0f64.ln())).abs() <= 1e-12);
        assert_eq!(log_sum_exp(std::iter::empty()), f64::NEG_INFINITY);
        let single = log_sum_exp([-5.0].into_iter());
        assert!((single + 5.0).abs() <= 1e-14);
    }

    #[test]
    fn chi_square_p_reference_values() {
        // P(chi2_1 > 3.841) ~ 0.05, P(chi2_2 > 13.816) ~ 0.001.
        assert!((chi_square_p(3.841, 1.0) - 0.05).abs() <= 5e-4);
        assert!((chi_square_p(13.816, 2.0) - 0.001).abs() <= 5e-5);
    }

    #[test]
    fn ks_same_distribution_has_large_p() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let a: Vec<f64> = (0..4000).map(|_| rng.gen::<f64>()).collect();
        let b: Vec<f64> = (0..4000).map(|_| rng.gen::<f64>()).collect();
        assert!(ks_two_sample_p(&a, &b) >= 0.001);
        // Shifted sample is rejected.
        let c: Vec<f64> = a.iter().map(|x| x + 0.2).collect();
        assert!(ks_two_sample_p(&a, &c) < 1e-6);
    }
}
