//! Ensemble statistics: moments, batch-means errors, jackknife errors, and a
//! Kolmogorov–Smirnov normality test.
//!
//! Estimator conventions:
//! - variance is the unbiased sample variance;
//! - its standard error comes from 20 contiguous batch means in sample-index
//!   order (samples are i.i.d., so contiguity is only a deterministic
//!   partition rule);
//! - skewness `m₃/m₂^{3/2}` and excess kurtosis `m₄/m₂²−3` use population
//!   central moments, with leave-one-out jackknife standard errors;
//! - the KS statistic compares the empirical CDF against the *fitted* normal
//!   `N(mean, variance)`, with the classical asymptotic p-value (adequate at
//!   the ensemble sizes used here; fitting inflates p slightly, which is
//!   conservative for the "reject if p small" acceptance direction).
//!
//! Degenerate ensembles (too few samples or zero variance) are flagged and
//! shape/test fields are left empty instead of emitting NaNs.

use serde::Serialize;

/// Population central moments of a sample.
#[derive(Debug, Clone, Copy)]
pub struct Moments {
    /// Sample count.
    pub n: usize,
    /// Sample mean.
    pub mean: f64,
    /// Second central moment (population, divide-by-n).
    pub m2: f64,
    /// Third central moment.
    pub m3: f64,
    /// Fourth central moment.
    pub m4: f64,
}

/// Two-pass population central moments up to order 4.
pub fn central_moments(values: &[f64]) -> Moments {
    let n = values.len();
    assert!(n > 0, "moments of an empty sample");
    let mean = values.iter().sum::<f64>() / n as f64;
    let (mut p2, mut p3, mut p4) = (0.0f64, 0.0f64, 0.0f64);
    for &v in values {
        let c = v - mean;
        let c2 = c * c;
        p2 += c2;
        p3 += c2 * c;
        p4 += c2 * c2;
    }
    let nf = n as f64;
    Moments { n, mean, m2: p2 / nf, m3: p3 / nf, m4: p4 / nf }
}

/// Ensemble summary with error estimates and normality diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct SummaryStats {
    /// Sample count.
    pub n: usize,
    /// Sample mean.
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    /// Batch-means standard error of the variance (`None` if too few samples).
    pub variance_se: Option<f64>,
    /// Skewness `m₃/m₂^{3/2}` (`None` for degenerate ensembles).
    pub skewness: Option<f64>,
    /// Excess kurtosis `m₄/m₂² − 3`.
    pub excess_kurtosis: Option<f64>,
    /// Jackknife standard error of the skewness.
    pub skewness_se: Option<f64>,
    /// Jackknife standard error of the excess kurtosis.
    pub excess_kurtosis_se: Option<f64>,
    /// KS distance between the empirical CDF and the fitted normal.
    pub ks_statistic: Option<f64>,
    /// Asymptotic KS p-value.
    pub ks_p_value: Option<f64>,
    /// True when the ensemble is too small or has zero variance; shape and
    /// test fields are then empty.
    pub degenerate: bool,
}

/// Number of contiguous batches used for the variance standard error.
pub const VARIANCE_BATCHES: usize = 20;

/// Summarizes an ensemble of scalar samples.
pub fn summarize(values: &[f64]) -> SummaryStats {
    let n = values.len();
    let mom = central_moments(values);
    let variance = if n >= 2 { mom.m2 * n as f64 / (n as f64 - 1.0) } else { 0.0 };
    let degenerate = n < 8 || !(mom.m2 > 0.0);
    if degenerate {
        return SummaryStats {
            n,
            mean: mom.mean,
            variance,
            variance_se: None,
            skewness: None,
            excess_kurtosis: None,
            skewness_se: None,
            excess_kurtosis_se: None,
            ks_statistic: None,
            ks_p_value: None,
            degenerate,
        };
    }

    let skewness = mom.m3 / mom.m2.powf(1.5);
    let excess_kurtosis = mom.m4 / (mom.m2 * mom.m2) - 3.0;
    let (skew_se, kurt_se) = jackknife_shape_errors(values, mom.mean);
    let (ks_statistic, ks_p_value) = ks_test_fitted_normal(values, mom.mean, variance.sqrt());

    SummaryStats {
        n,
        mean: mom.mean,
        variance,
        variance_se: batch_variance_se(values),
        skewness: Some(skewness),
        excess_kurtosis: Some(excess_kurtosis),
        skewness_se: Some(skew_se),
        excess_kurtosis_se: Some(kurt_se),
        ks_statistic: Some(ks_statistic),
        ks_p_value: Some(ks_p_value),
        degenerate,
    }
}

/// Batch-means standard error of the unbiased variance: split the sample in
/// index order into [`VARIANCE_BATCHES`] contiguous batches, compute each
/// batch variance, and return `sd(batch variances)/√B`.
pub fn batch_variance_se(values: &[f64]) -> Option<f64> {
    let n = values.len();
    let b = VARIANCE_BATCHES.min(n / 2);
    if b < 2 {
        return None;
    }
    let mut batch_vars = Vec::with_capacity(b);
    let base = n / b;
    let extra = n % b;
    let mut start = 0usize;
    for bi in 0..b {
        let len = base + usize::from(bi < extra);
        let chunk = &values[start..start + len];
        start += len;
        let m = central_moments(chunk);
        batch_vars.push(m.m2 * len as f64 / (len as f64 - 1.0));
    }
    let bm = central_moments(&batch_vars);
    let sd = (bm.m2 * b as f64 / (b as f64 - 1.0)).sqrt();
    Some(sd / (b as f64).sqrt())
}

/// Leave-one-out jackknife standard errors of (skewness, excess kurtosis).
///
/// Works from centered power sums: removing sample `i` and re-centering is a
/// binomial shift of the power sums, so the full jackknife costs O(n).
fn jackknife_shape_errors(values: &[f64], mean: f64) -> (f64, f64) {
    let n = values.len() as f64;
    let (mut p1, mut p2, mut p3, mut p4) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for &v in values {
        let c = v - mean;
        p1 += c;
        let c2 = c * c;
        p2 += c2;
        p3 += c2 * c;
        p4 += c2 * c2;
    }

    let np = n - 1.0;
    let mut skews = Vec::with_capacity(values.len());
    let mut kurts = Vec::with_capacity(values.len());
    for &v in values {
        let c = v - mean;
        let c2 = c * c;
        let (s1, s2, s3, s4) = (p1 - c, p2 - c2, p3 - c2 * c, p4 - c2 * c2);
        // Re-center the remaining n−1 values: their mean offset from `mean`.
        let t = s1 / np;
        let t2 = t * t;
        let m2 = (s2 - 2.0 * t * s1 + np * t2) / np;
        let m3 = (s3 - 3.0 * t * s2 + 3.0 * t2 * s1 - np * t2 * t) / np;
        let m4 = (s4 - 4.0 * t * s3 + 6.0 * t2 * s2 - 4.0 * t2 * t * s1 + np * t2 * t2) / np;
        if m2 > 0.0 {
            skews.push(m3 / m2.powf(1.5));
            kurts.push(m4 / (m2 * m2) - 3.0);
        }
    }
    let se = |thetas: &[f64]| {
        let k = thetas.len() as f64;
        let mean_t = thetas.iter().sum::<f64>() / k;
        let ss: f64 = thetas.iter().map(|t| (t - mean_t) * (t - mean_t)).sum();
        ((k - 1.0) / k * ss).sqrt()
    };
    (se(&skews), se(&kurts))
}

/// Standard normal CDF via the complementary error function.
#[inline]
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * std::f64::consts::FRAC_1_SQRT_2)
}

/// Kolmogorov–Smirnov test of a sample against the normal with the given
/// mean and standard deviation: returns `(D, asymptotic p)`.
pub fn ks_test_fitted_normal(values: &[f64], mean: f64, sd: f64) -> (f64, f64) {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("no NaNs in ensembles"));
    let n = sorted.len();
    let nf = n as f64;
    let mut d = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let f = normal_cdf((x - mean) / sd);
        d = d.max(f - i as f64 / nf).max((i + 1) as f64 / nf - f);
    }
    let arg = (nf.sqrt() + 0.12 + 0.11 / nf.sqrt()) * d;
    (d, ks_survival(arg))
}

/// Asymptotic Kolmogorov survival function `Q(x) = 2Σ_{k≥1} (−1)^{k−1} e^{−2k²x²}`.
pub fn ks_survival(x: f64) -> f64 {
    if x < 0.2 {
        // Series converges too slowly; Q(0.2) > 1 − 1e−6.
        return 1.0;
    }
    let mut sum = 0.0f64;
    for k in 1..=100u32 {
        let kf = f64::from(k);
        let term = (-2.0 * kf * kf * x * x).exp();
        let signed = if k % 2 == 1 { term } else { -term };
        sum += signed;
        if term < 1e-14 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Least-squares slope of `y` against `x` (used for convergence orders).
pub fn least_squares_slope(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    assert!(x.len() >= 2, "slope needs at least two points");
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&xi, &yi) in x.iter().zip(y) {
        sxx += (xi - mx) * (xi - mx);
        sxy += (xi - mx) * (yi - my);
    }
    sxy / sxx
}

/// Delta-method standard error of a variance ratio from *coupled* samples.
///
/// Given paired ensembles `(x_k, y_k)` (same seeds), the ratio
/// `R = Var(x)/Var(y)` has `Var(R) ≈ (R²/M)(va/ā² + vb/b̄² − 2c/(āb̄))`,
/// where `a_k, b_k` are the centered squares and `va, vb, c` their
/// (co)variances. Coupling typically makes the covariance term large and the
/// ratio far more precise than the individual variances.
pub fn variance_ratio_se(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let mx = central_moments(x);
    let my = central_moments(y);
    let m = x.len() as f64;
    let a: Vec<f64> = x.iter().map(|&v| (v - mx.mean) * (v - mx.mean)).collect();
    let b: Vec<f64> = y.iter().map(|&v| (v - my.mean) * (v - my.mean)).collect();
    let ma = central_moments(&a);
    let mb = central_moments(&b);
    let cov_ab = a
        .iter()
        .zip(&b)
        .map(|(&ai, &bi)| (ai - ma.mean) * (bi - mb.mean))
        .sum::<f64>()
        / m;
    let ratio = ma.mean / mb.mean;
    let rel_var = ma.m2 / (ma.mean * ma.mean) + mb.m2 / (mb.mean * mb.mean)
        - 2.0 * cov_ab / (ma.mean * mb.mean);
    (ratio * ratio * rel_var / m).max(0.0).sqrt()
}
