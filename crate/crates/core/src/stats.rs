//! Goodness-of-fit helpers used by diagnostics and tests.

/// Asymptotic Kolmogorov–Smirnov coefficient `c(α)`.
pub fn ks_coefficient(alpha: f64) -> f64 {
    (-0.5 * (alpha / 2.0).ln()).sqrt()
}

/// One-sample KS statistic `sup |F_n - F|`.
pub fn ks_one_sample(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            let lo = i as f64 / n;
            let hi = (i + 1) as f64 / n;
            (hi - f).max(f - lo)
        })
        .fold(0.0, f64::max)
}

/// Two-sample KS statistic.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Whether a two-sample KS test does not reject equality at level `alpha`.
pub fn ks_two_sample_passes(a: &[f64], b: &[f64], alpha: f64) -> bool {
    let (n, m) = (a.len() as f64, b.len() as f64);
    ks_two_sample(a, b) < ks_coefficient(alpha) * ((n + m) / (n * m)).sqrt()
}

/// Spearman rank correlation (midranks for ties).
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    crate::dataset::correlation(&crate::dataset::midranks(a), &crate::dataset::midranks(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coefficients() {
        assert!((ks_coefficient(0.05) - 1.358).abs() < 1e-3);
        assert!((ks_coefficient(0.01) - 1.628).abs() < 1e-3);
    }

    #[test]
    fn two_sample_statistic() {
        assert_eq!(ks_two_sample(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]), 0.0);
        assert_eq!(ks_two_sample(&[1.0, 2.0], &[3.0, 4.0]), 1.0);
        assert!((ks_two_sample(&[1.0, 2.0, 3.0, 4.0], &[2.5, 3.5]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn one_sample_statistic() {
        let d = ks_one_sample(&[0.5], |x| x);
        assert!((d - 0.5).abs() < 1e-15);
    }
}
