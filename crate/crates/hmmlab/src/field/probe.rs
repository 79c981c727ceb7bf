//! Empirical field diagnostics: covariance probes, marginal moments,
//! stationarity checks.
//!
//! These estimators validate sampled fields against their specifications
//! (tent covariance for SRC, power-law tail and Gaussian marginals for LRC).
//! All lags and spacings are expressed in *field units* (the argument of
//! `q(·)`, i.e. domain coordinates divided by ε). Probe points are averaged
//! within each realization and across realizations; every probe is a pure
//! function of `(spec, ε, base_seed)`.

use crate::error::Result;
use crate::field::FieldSpec;
use crate::rng::sample_seed;
use crate::stats::central_moments;

/// One covariance estimate at a lag.
#[derive(Debug, Clone)]
pub struct CovarianceEstimate {
    /// Lag in field units.
    pub lag: [f64; 2],
    /// Empirical `E[q(y) q(y+lag)]`.
    pub estimate: f64,
    /// Closed-form covariance, where the family provides one (SRC).
    pub analytic: Option<f64>,
    /// Tail prediction `κ·|lag|^{−α}` (LRC, nonzero lags only).
    pub tail_prediction: Option<f64>,
}

/// Empirical covariance of the field at the given lags.
///
/// Uses a probe grid of spacing `point_spacing` field units, keeping both
/// `y` and `y+lag` inside the synthesized window `[0, 1/ε]²`, and averages
/// the product over the grid and over `realizations` independent
/// realizations seeded from `base_seed`.
pub fn covariance_probe(
    spec: &FieldSpec,
    eps: f64,
    realizations: u64,
    base_seed: u64,
    lags: &[[f64; 2]],
    point_spacing: f64,
) -> Result<Vec<CovarianceEstimate>> {
    let synth = spec.synthesizer(eps)?;
    let span = 1.0 / eps;
    let max_lag = lags
        .iter()
        .map(|l| l[0].abs().max(l[1].abs()))
        .fold(0.0, f64::max);
    let usable = span - max_lag;
    let count = ((usable / point_spacing).floor() as usize).max(2);

    let mut acc = vec![0.0f64; lags.len()];
    let mut samples = vec![0usize; lags.len()];
    for k in 0..realizations {
        let real = synth.sample(sample_seed(base_seed, k));
        for (li, lag) in lags.iter().enumerate() {
            for jy in 0..count {
                for jx in 0..count {
                    let y = [(jx as f64 + 0.5) * point_spacing, (jy as f64 + 0.5) * point_spacing];
                    let a = real.eval([y[0] * eps, y[1] * eps]);
                    let b = real.eval([(y[0] + lag[0]) * eps, (y[1] + lag[1]) * eps]);
                    acc[li] += a * b;
                    samples[li] += 1;
                }
            }
        }
    }

    Ok(lags
        .iter()
        .enumerate()
        .map(|(li, &lag)| {
            let dist = (lag[0] * lag[0] + lag[1] * lag[1]).sqrt();
            let tail = match (spec, dist > 0.0) {
                (FieldSpec::Lrc { alpha, .. }, true) => {
                    spec.long_range_amplitude().map(|kappa| kappa * dist.powf(-alpha))
                }
                _ => None,
            };
            CovarianceEstimate {
                lag,
                estimate: acc[li] / samples[li] as f64,
                analytic: spec.covariance(lag),
                tail_prediction: tail,
            }
        })
        .collect())
}

/// Marginal moments of the *Gaussian layer* pooled over realizations:
/// `(mean, variance, skewness, excess kurtosis)`.
///
/// The layer is exactly `N(0, κ_g²)` pointwise when no spectral clipping
/// occurs, so these moments detect synthesis defects.
pub fn gaussian_layer_moments(
    spec: &FieldSpec,
    eps: f64,
    realizations: u64,
    base_seed: u64,
) -> Result<(f64, f64, f64, f64)> {
    let synth = spec.synthesizer(eps)?;
    let mut values = Vec::new();
    for k in 0..realizations {
        let real = synth.sample(sample_seed(base_seed, k));
        let g = real.gaussian_layer().ok_or_else(|| {
            crate::error::Error::InvalidArgument(
                "gaussian_layer_moments requires an lrc field".into(),
            )
        })?;
        values.extend_from_slice(g);
    }
    let m = central_moments(&values);
    let skew = m.m3 / m.m2.powf(1.5);
    let exkurt = m.m4 / (m.m2 * m.m2) - 3.0;
    Ok((m.mean, m.m2, skew, exkurt))
}

/// Stationarity probe: first and second moments over a probe window and the
/// same window translated by `shift` (field units); returns
/// `(|mean difference|, |second-moment difference|)`.
///
/// For a stationary field both differences vanish in expectation; the
/// estimates differ only by Monte Carlo noise.
pub fn stationarity_probe(
    spec: &FieldSpec,
    eps: f64,
    realizations: u64,
    base_seed: u64,
    shift: [f64; 2],
    point_spacing: f64,
) -> Result<(f64, f64)> {
    let synth = spec.synthesizer(eps)?;
    let span = 1.0 / eps;
    let max_shift = shift[0].abs().max(shift[1].abs());
    let usable = span - max_shift;
    let count = ((usable / point_spacing).floor() as usize).max(2);

    let (mut m1a, mut m2a, mut m1b, mut m2b) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut total = 0usize;
    for k in 0..realizations {
        let real = synth.sample(sample_seed(base_seed, k));
        for jy in 0..count {
            for jx in 0..count {
                let y = [(jx as f64 + 0.5) * point_spacing, (jy as f64 + 0.5) * point_spacing];
                let a = real.eval([y[0] * eps, y[1] * eps]);
                let b = real.eval([(y[0] + shift[0]) * eps, (y[1] + shift[1]) * eps]);
                m1a += a;
                m2a += a * a;
                m1b += b;
                m2b += b * b;
                total += 1;
            }
        }
    }
    let t = total as f64;
    Ok((((m1a - m1b) / t).abs(), ((m2a - m2b) / t).abs()))
}
