//! Random potential fields `q_ε(x) = q(x/ε)`.
//!
//! Two stationary, bounded, mean-zero field families are provided, plus the
//! deterministic zero field used for homogenized runs:
//!
//! - **SRC** (short-range correlations): the checkerboard field
//!   `q(y) = a·ξ_{⌊y+U⌋}` with i.i.d. symmetric signs `ξ_k ∈ {±1}` attached
//!   to unit lattice cells and a uniform lattice shift `U ∈ [0,1)²` that
//!   makes the field stationary. Its covariance is the tent product
//!   `R(x) = a²·(1−|x₁|)₊(1−|x₂|)₊` with integrated variance `σ² = a²`.
//! - **LRC** (long-range correlations): `q(y) = Φ(g(y))` with
//!   `Φ(s) = b·erf(s/√2)` and `g` a stationary Gaussian field with
//!   covariance `R_g(x) = κ_g·(κ_g^{−2/α} + |x|²)^{−α/2}` (so
//!   `R_g(x) ~ κ_g·|x|^{−α}` at long range and `Var g = κ_g²`). `g` is
//!   synthesized exactly on a grid of spacing `resolution` by circulant
//!   embedding ([`lrc`]); evaluation uses nearest-grid-point lookup. The
//!   effective long-range amplitude of `q` is `κ = c₁²·κ_g` with the first
//!   Hermite coefficient `c₁ = E[g·Φ(g)] = b/√π`.
//!
//! Every realization is a pure function of `(spec, ε, seed)`; lattice signs
//! are hashed on demand (nothing is stored for SRC) and the LRC grid is
//! precomputed per realization. Bounded amplitude is guaranteed by
//! construction: `|q| ≤ a` (SRC) and `|q| < b` (LRC).

pub mod lrc;
pub mod probe;

use crate::error::{Error, Result};
use crate::quad::adaptive_simpson;
use crate::rng::{cell_hash, SplitMix64};
use std::sync::Arc;

/// Specification of a random field family (the law, not a realization).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FieldSpec {
    /// Deterministic zero field (homogenized flavor).
    Zero,
    /// Checkerboard field with amplitude `a`.
    Src {
        /// Sign amplitude `a`; `|q| ≤ a`.
        amplitude: f64,
    },
    /// Transformed Gaussian field with power-law covariance tail.
    Lrc {
        /// Tail exponent `α ∈ (0,2)`: `R_g(x) ~ κ_g|x|^{−α}`.
        alpha: f64,
        /// Tail amplitude `κ_g > 0` of the Gaussian layer.
        kappa_g: f64,
        /// Bound `b` of the transform `Φ(s) = b·erf(s/√2)`; `|q| < b`.
        amplitude: f64,
        /// Synthesis grid spacing in field units (`≤ 1/4`).
        resolution: f64,
    },
}

impl FieldSpec {
    /// Checks the parameter domain of the specification.
    pub fn validate(&self) -> Result<()> {
        match *self {
            FieldSpec::Zero => Ok(()),
            FieldSpec::Src { amplitude } => {
                if !(amplitude >= 0.0 && amplitude.is_finite()) {
                    return Err(Error::ConfigValidation(format!(
                        "src amplitude must be finite and non-negative, got {amplitude}"
                    )));
                }
                Ok(())
            }
            FieldSpec::Lrc { alpha, kappa_g, amplitude, resolution } => {
                if !(alpha > 0.0 && alpha < 2.0) {
                    return Err(Error::ConfigValidation(format!(
                        "lrc exponent alpha must lie in (0,2), got {alpha}"
                    )));
                }
                if !(kappa_g > 0.0 && kappa_g.is_finite()) {
                    return Err(Error::ConfigValidation(format!(
                        "lrc kappa_g must be positive, got {kappa_g}"
                    )));
                }
                if !(amplitude >= 0.0 && amplitude.is_finite()) {
                    return Err(Error::ConfigValidation(format!(
                        "lrc amplitude must be finite and non-negative, got {amplitude}"
                    )));
                }
                if !(resolution > 0.0 && resolution <= 0.25) {
                    return Err(Error::ConfigValidation(format!(
                        "lrc resolution must lie in (0, 1/4], got {resolution}"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Uniform amplitude bound: `sup |q| ≤ bound` almost surely.
    pub fn amplitude_bound(&self) -> f64 {
        match *self {
            FieldSpec::Zero => 0.0,
            FieldSpec::Src { amplitude } | FieldSpec::Lrc { amplitude, .. } => amplitude,
        }
    }

    /// Default fluctuation scaling exponent β in `ε^{−β/2}`: 2 in the SRC
    /// regime (CLT scaling `ε^{d/2}` in d = 2), α in the LRC regime.
    pub fn default_beta(&self) -> f64 {
        match *self {
            FieldSpec::Zero | FieldSpec::Src { .. } => 2.0,
            FieldSpec::Lrc { alpha, .. } => alpha,
        }
    }

    /// Integrated covariance `σ² = ∫ R` of the SRC field (`a²`); `None` in
    /// the LRC regime, where the integral diverges.
    pub fn integrated_covariance(&self) -> Option<f64> {
        match *self {
            FieldSpec::Zero => Some(0.0),
            FieldSpec::Src { amplitude } => Some(amplitude * amplitude),
            FieldSpec::Lrc { .. } => None,
        }
    }

    /// Long-range amplitude `κ = c₁²·κ_g` of the transformed field
    /// (`R_q(x) ~ κ|x|^{−α}`); `None` in the SRC regime.
    pub fn long_range_amplitude(&self) -> Option<f64> {
        match *self {
            FieldSpec::Lrc { kappa_g, amplitude, .. } => {
                let c1 = amplitude / std::f64::consts::PI.sqrt();
                Some(c1 * c1 * kappa_g)
            }
            _ => None,
        }
    }

    /// Covariance of the *Gaussian layer* at distance `d` (LRC only).
    pub fn gaussian_covariance(&self, d: f64) -> Option<f64> {
        match *self {
            FieldSpec::Lrc { alpha, kappa_g, .. } => {
                Some(kappa_g * (kappa_g.powf(-2.0 / alpha) + d * d).powf(-alpha / 2.0))
            }
            _ => None,
        }
    }

    /// Covariance of the field itself at lag `x` (SRC closed form).
    pub fn covariance(&self, lag: [f64; 2]) -> Option<f64> {
        match *self {
            FieldSpec::Zero => Some(0.0),
            FieldSpec::Src { amplitude } => {
                let tent = |t: f64| (1.0 - t.abs()).max(0.0);
                Some(amplitude * amplitude * tent(lag[0]) * tent(lag[1]))
            }
            FieldSpec::Lrc { .. } => None,
        }
    }

    /// Builds the per-`ε` synthesizer (precomputes the LRC spectral data).
    pub fn synthesizer(&self, eps: f64) -> Result<FieldSynth> {
        self.validate()?;
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::InvalidArgument(format!("epsilon must be positive, got {eps}")));
        }
        let kind = match *self {
            FieldSpec::Zero => SynthKind::Zero,
            FieldSpec::Src { amplitude } => SynthKind::Src { amplitude },
            FieldSpec::Lrc { alpha, kappa_g, amplitude, resolution } => SynthKind::Lrc(Arc::new(
                lrc::LrcSynth::new(alpha, kappa_g, amplitude, resolution, eps)?,
            )),
        };
        Ok(FieldSynth { eps, kind })
    }

    /// Samples one realization (convenience wrapper building a synthesizer).
    pub fn sample(&self, eps: f64, seed: u64) -> Result<FieldRealization> {
        Ok(self.synthesizer(eps)?.sample(seed))
    }
}

/// First Hermite coefficient `c₁ = (2π)^{−1/2} ∫ s·Φ(s)·e^{−s²/2} ds`
/// computed by adaptive quadrature — the independent oracle for the closed
/// form `b/√π` used by [`FieldSpec::long_range_amplitude`].
pub fn hermite_c1_quadrature(amplitude: f64) -> f64 {
    // Integrand is even (s odd × Φ odd); truncation at s = 12 is far below
    // the 1e-12 quadrature tolerance.
    let integrand =
        |s: f64| s * amplitude * libm::erf(s / std::f64::consts::SQRT_2) * (-0.5 * s * s).exp();
    2.0 * adaptive_simpson(&integrand, 0.0, 12.0, 1e-12)
        / (2.0 * std::f64::consts::PI).sqrt()
}

/// Per-`ε` sampler; holds precomputed spectral data for the LRC family so
/// ensembles amortize it across realizations.
#[derive(Debug, Clone)]
pub struct FieldSynth {
    eps: f64,
    kind: SynthKind,
}

#[derive(Debug, Clone)]
enum SynthKind {
    Zero,
    Src { amplitude: f64 },
    Lrc(Arc<lrc::LrcSynth>),
}

impl FieldSynth {
    /// The scale `ε` the synthesizer was built for.
    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Draws the realization for `seed` (pure function of the seed).
    pub fn sample(&self, seed: u64) -> FieldRealization {
        match &self.kind {
            SynthKind::Zero => FieldRealization {
                eps: self.eps,
                seed,
                kind: RealKind::Zero,
            },
            SynthKind::Src { amplitude } => {
                let mut aux = SplitMix64::new(seed);
                let shift = [aux.next_unit(), aux.next_unit()];
                FieldRealization {
                    eps: self.eps,
                    seed,
                    kind: RealKind::Src { amplitude: *amplitude, inv_eps: 1.0 / self.eps, shift },
                }
            }
            SynthKind::Lrc(synth) => FieldRealization {
                eps: self.eps,
                seed,
                kind: RealKind::Lrc(synth.sample(seed)),
            },
        }
    }
}

/// One sampled field `x ↦ q_ε(x)` on the unit square.
#[derive(Debug, Clone)]
pub struct FieldRealization {
    eps: f64,
    seed: u64,
    kind: RealKind,
}

#[derive(Debug, Clone)]
enum RealKind {
    Zero,
    Src { amplitude: f64, inv_eps: f64, shift: [f64; 2] },
    Lrc(lrc::LrcRealization),
}

impl FieldRealization {
    /// The scale `ε` of the realization.
    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// The seed that generated the realization.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Evaluates `q_ε` at a domain point `x ∈ [0,1]²`.
    #[inline]
    pub fn eval(&self, x: [f64; 2]) -> f64 {
        match &self.kind {
            RealKind::Zero => 0.0,
            RealKind::Src { amplitude, inv_eps, shift } => {
                let ci = (x[0] * inv_eps + shift[0]).floor() as i64;
                let cj = (x[1] * inv_eps + shift[1]).floor() as i64;
                // Symmetric sign from the high bit of the cell hash.
                if cell_hash(self.seed, ci, cj) >> 63 == 1 {
                    *amplitude
                } else {
                    -amplitude
                }
            }
            RealKind::Lrc(real) => real.eval(x),
        }
    }

    /// Fraction of spectral energy removed by eigenvalue clipping during
    /// synthesis (0 for SRC/zero fields; should stay ≤ 1e−6 for LRC).
    pub fn clipped_energy_fraction(&self) -> f64 {
        match &self.kind {
            RealKind::Lrc(real) => real.clipped_energy_fraction,
            _ => 0.0,
        }
    }

    /// The Gaussian-layer grid values (LRC only) — diagnostics access.
    pub fn gaussian_layer(&self) -> Option<&[f64]> {
        match &self.kind {
            RealKind::Lrc(real) => Some(&real.g),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_field_is_zero() {
        let f = FieldSpec::Zero.sample(0.01, 7).unwrap();
        assert_eq!(f.eval([0.3, 0.7]), 0.0);
    }

    #[test]
    fn src_field_is_bounded_pm_amplitude_and_deterministic() {
        let spec = FieldSpec::Src { amplitude: 1.5 };
        let f = spec.sample(1.0 / 64.0, 42).unwrap();
        let g = spec.sample(1.0 / 64.0, 42).unwrap();
        let mut rng = SplitMix64::new(5);
        let mut saw_pos = false;
        let mut saw_neg = false;
        for _ in 0..2000 {
            let x = [rng.next_unit(), rng.next_unit()];
            let v = f.eval(x);
            assert!(v == 1.5 || v == -1.5, "value {v}");
            assert_eq!(v.to_bits(), g.eval(x).to_bits(), "same seed must reproduce bits");
            saw_pos |= v > 0.0;
            saw_neg |= v < 0.0;
        }
        assert!(saw_pos && saw_neg);
    }

    #[test]
    fn src_seeds_give_different_sign_patterns() {
        let spec = FieldSpec::Src { amplitude: 1.0 };
        let f = spec.sample(1.0 / 32.0, 1).unwrap();
        let g = spec.sample(1.0 / 32.0, 2).unwrap();
        let mut rng = SplitMix64::new(6);
        let mut diff = 0;
        for _ in 0..1000 {
            let x = [rng.next_unit(), rng.next_unit()];
            if f.eval(x) != g.eval(x) {
                diff += 1;
            }
        }
        // Independent sign fields agree on ~half the points.
        assert!((300..700).contains(&diff), "diff {diff}");
    }

    #[test]
    fn src_empirical_mean_and_variance() {
        let spec = FieldSpec::Src { amplitude: 2.0 };
        let eps = 1.0 / 64.0;
        // Probe on a grid with spacing 2ε (≥ 2 field units → independent
        // cells), averaged over realizations.
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        let mut count = 0usize;
        for seed in 0..20 {
            let f = spec.sample(eps, seed).unwrap();
            for i in 0..31 {
                for j in 0..31 {
                    let x = [(i as f64 + 0.5) * 2.0 * eps, (j as f64 + 0.5) * 2.0 * eps];
                    let v = f.eval(x);
                    sum += v;
                    sumsq += v * v;
                    count += 1;
                }
            }
        }
        let mean = sum / count as f64;
        let second = sumsq / count as f64;
        assert!(mean.abs() < 0.05, "mean {mean}");
        assert!((second - 4.0).abs() < 1e-12, "second moment {second}");
    }

    #[test]
    fn hermite_c1_quadrature_matches_closed_form() {
        for b in [0.5, 1.0, 2.0] {
            let got = hermite_c1_quadrature(b);
            let want = b / std::f64::consts::PI.sqrt();
            assert!((got - want).abs() < 1e-10, "b={b}: {got} vs {want}");
        }
    }

    #[test]
    fn long_range_amplitude_uses_squared_c1() {
        let spec =
            FieldSpec::Lrc { alpha: 1.0, kappa_g: 2.0, amplitude: 1.0, resolution: 0.125 };
        let kappa = spec.long_range_amplitude().unwrap();
        assert!((kappa - 2.0 / std::f64::consts::PI).abs() < 1e-14);
    }

    #[test]
    fn validation_rejects_bad_parameters() {
        assert!(FieldSpec::Src { amplitude: f64::NAN }.validate().is_err());
        assert!(FieldSpec::Lrc { alpha: 2.0, kappa_g: 1.0, amplitude: 1.0, resolution: 0.125 }
            .validate()
            .is_err());
        assert!(FieldSpec::Lrc { alpha: 1.0, kappa_g: 0.0, amplitude: 1.0, resolution: 0.125 }
            .validate()
            .is_err());
        assert!(FieldSpec::Lrc { alpha: 1.0, kappa_g: 1.0, amplitude: 1.0, resolution: 0.3 }
            .validate()
            .is_err());
        let spec = FieldSpec::Src { amplitude: 1.0 };
        assert!(spec.sample(0.0, 1).is_err());
    }

    #[test]
    fn gaussian_covariance_closed_form() {
        let spec =
            FieldSpec::Lrc { alpha: 1.0, kappa_g: 1.0, amplitude: 1.0, resolution: 0.125 };
        // R_g(0) = κ_g² = 1 and R_g(d) = (1+d²)^{-1/2} for κ_g = 1, α = 1.
        assert!((spec.gaussian_covariance(0.0).unwrap() - 1.0).abs() < 1e-15);
        let d = 3.0;
        assert!(
            (spec.gaussian_covariance(d).unwrap() - 1.0 / (1.0 + d * d).sqrt()).abs() < 1e-15
        );
    }
}
