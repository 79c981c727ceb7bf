//! Exact synthesis of the stationary Gaussian layer by circulant embedding.
//!
//! The Gaussian field `g` with covariance `R_g(x) = κ_g(κ_g^{−2/α}+|x|²)^{−α/2}`
//! is sampled on the regular grid of spacing `Δ` (field units) covering
//! `[0, 1/ε]²`. The grid covariance matrix is nested block-Toeplitz; embedding
//! it into a circulant matrix on the torus `(ℤ/mℤ)²` with
//! `m ≥ 2(n−1)` makes its eigenvalues computable by a single 2D FFT of the
//! wrapped covariance table
//!
//! ```text
//! c[k₁,k₂] = R_g(Δ·‖(d(k₁), d(k₂))‖),   d(k) = min(k, m−k).
//! ```
//!
//! With complex standard-normal noise `ε_k`, the vector
//! `e = IFFT(√λ ⊙ ε)/m` has `E[Re e_j · Re e_l] = c_{j−l}`, so the real part
//! restricted to the sample window is an exact draw of `g` — up to clipping
//! of negative eigenvalues, which long-range covariances produce at the wrap
//! seam. The synthesizer pads `m` upward (bounded by 8× the minimal size)
//! until the clipped energy fraction drops below 1e−6, and otherwise clips
//! and records the fraction for diagnostics.
//!
//! A realization stores both the Gaussian layer `g` and the transformed
//! potential `q = Φ(g) = b·erf(g/√2)` on the grid; evaluation is
//! nearest-grid-point lookup.

use crate::error::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftDirection, FftPlanner};
use std::fmt;
use std::sync::Arc;

/// Relative clipped-energy level above which synthesis warns.
pub const CLIP_WARN_LEVEL: f64 = 1e-6;

/// Precomputed spectral data for one `(spec, ε)` pair.
pub struct LrcSynth {
    /// Grid points per side in the sample window.
    n: usize,
    /// Torus side of the circulant embedding (power of two).
    m: usize,
    /// Grid spacing in field units.
    resolution: f64,
    /// Scale ε (domain units per field unit).
    eps: f64,
    /// Transform bound `b`.
    amplitude: f64,
    /// `√max(λ,0)` of the circulant eigenvalues, length `m²`.
    sqrt_lambda: Vec<f64>,
    /// Fraction of spectral energy removed by clipping.
    clipped_energy_fraction: f64,
    /// Inverse FFT plan of size `m`, reused across realizations.
    fft_inv: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for LrcSynth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LrcSynth")
            .field("n", &self.n)
            .field("m", &self.m)
            .field("resolution", &self.resolution)
            .field("eps", &self.eps)
            .field("clipped_energy_fraction", &self.clipped_energy_fraction)
            .finish()
    }
}

/// One sampled grid realization of the LRC potential.
#[derive(Debug, Clone)]
pub struct LrcRealization {
    /// Grid points per side.
    pub(crate) n: usize,
    /// `1/(ε·Δ)`: converts domain coordinates to grid index units.
    pub(crate) inv_step: f64,
    /// Transformed potential `q = Φ(g)` on the grid, row-major.
    pub(crate) q: Vec<f64>,
    /// Gaussian layer on the grid, row-major (kept for diagnostics).
    pub(crate) g: Vec<f64>,
    /// Clipped spectral energy fraction inherited from the synthesizer.
    pub(crate) clipped_energy_fraction: f64,
}

impl LrcRealization {
    /// Nearest-grid-point evaluation at a domain point `x ∈ [0,1]²`.
    #[inline]
    pub fn eval(&self, x: [f64; 2]) -> f64 {
        let last = self.n - 1;
        let i = ((x[0] * self.inv_step).round() as usize).min(last);
        let j = ((x[1] * self.inv_step).round() as usize).min(last);
        self.q[j * self.n + i]
    }
}

impl LrcSynth {
    /// Builds the synthesizer: chooses the embedding size, computes the
    /// circulant eigenvalues, and clips negatives.
    pub fn new(
        alpha: f64,
        kappa_g: f64,
        amplitude: f64,
        resolution: f64,
        eps: f64,
    ) -> Result<Self> {
        let span = 1.0 / eps;
        let steps = (span / resolution).ceil() as usize;
        let n = steps + 1;
        if n > 5000 {
            return Err(Error::ResourceLimit(format!(
                "lrc grid of {n} points per side (eps {eps}, resolution {resolution}) \
                 exceeds the supported maximum 5000"
            )));
        }
        let m_min = 2 * (n - 1);
        let m_cap = 8 * (n - 1);
        let cov = |d: f64| kappa_g * (kappa_g.powf(-2.0 / alpha) + d * d).powf(-alpha / 2.0);

        let mut planner = FftPlanner::<f64>::new();
        let mut m = m_min.next_power_of_two();
        let (m, lambda, clipped_energy_fraction) = loop {
            let (lambda, clipped) = circulant_eigenvalues(&cov, resolution, m, &mut planner);
            if clipped <= CLIP_WARN_LEVEL || 2 * m > m_cap {
                break (m, lambda, clipped);
            }
            m *= 2;
        };

        let sqrt_lambda = lambda.iter().map(|&l| l.max(0.0).sqrt()).collect();
        let fft_inv = planner.plan_fft(m, FftDirection::Inverse);
        Ok(Self {
            n,
            m,
            resolution,
            eps,
            amplitude,
            sqrt_lambda,
            clipped_energy_fraction,
            fft_inv,
        })
    }

    /// Grid points per side of the sample window.
    pub fn grid_points(&self) -> usize {
        self.n
    }

    /// Torus side of the embedding.
    pub fn embedding_size(&self) -> usize {
        self.m
    }

    /// Clipped spectral energy fraction (≥ 0; warn level 1e−6).
    pub fn clipped_energy_fraction(&self) -> f64 {
        self.clipped_energy_fraction
    }

    /// Draws the realization for `seed`: fills complex normal noise in index
    /// order (ChaCha stream keyed by the seed), applies `√λ`, inverse 2D FFT,
    /// then restricts the real part to the window and transforms through Φ.
    pub fn sample(&self, seed: u64) -> LrcRealization {
        let m = self.m;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = StandardNormal;
        let mut buf: Vec<Complex<f64>> = self
            .sqrt_lambda
            .iter()
            .map(|&s| {
                let re: f64 = normal.sample(&mut rng);
                let im: f64 = normal.sample(&mut rng);
                Complex::new(re * s, im * s)
            })
            .collect();
        fft2(&mut buf, m, self.fft_inv.as_ref());

        let n = self.n;
        let inv_m = 1.0 / m as f64;
        let mut g = Vec::with_capacity(n * n);
        for j in 0..n {
            for i in 0..n {
                g.push(buf[j * m + i].re * inv_m);
            }
        }
        let b = self.amplitude;
        let q = g
            .iter()
            .map(|&v| b * libm::erf(v * std::f64::consts::FRAC_1_SQRT_2))
            .collect();
        LrcRealization {
            n,
            inv_step: 1.0 / (self.eps * self.resolution),
            q,
            g,
            clipped_energy_fraction: self.clipped_energy_fraction,
        }
    }
}

/// Eigenvalues of the 2D circulant embedding: FFT of the wrapped covariance
/// table. Returns `(λ, clipped_energy_fraction)`.
fn circulant_eigenvalues(
    cov: &dyn Fn(f64) -> f64,
    resolution: f64,
    m: usize,
    planner: &mut FftPlanner<f64>,
) -> (Vec<f64>, f64) {
    // Wrapped covariance table; symmetric, so its DFT is real.
    let wrap = |k: usize| (k.min(m - k)) as f64;
    let mut buf: Vec<Complex<f64>> = Vec::with_capacity(m * m);
    for k2 in 0..m {
        let d2 = wrap(k2) * resolution;
        for k1 in 0..m {
            let d1 = wrap(k1) * resolution;
            buf.push(Complex::new(cov((d1 * d1 + d2 * d2).sqrt()), 0.0));
        }
    }
    let fft = planner.plan_fft(m, FftDirection::Forward);
    fft2(&mut buf, m, fft.as_ref());

    let mut neg = 0.0;
    let mut total = 0.0;
    let lambda: Vec<f64> = buf
        .iter()
        .map(|c| {
            let l = c.re;
            total += l.abs();
            if l < 0.0 {
                neg += -l;
            }
            l
        })
        .collect();
    (lambda, if total > 0.0 { neg / total } else { 0.0 })
}

/// In-place 2D FFT of an `m×m` row-major complex buffer: transform rows,
/// transpose, transform rows, transpose back.
fn fft2(buf: &mut [Complex<f64>], m: usize, fft: &dyn Fft<f64>) {
    debug_assert_eq!(buf.len(), m * m);
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    fft.process_with_scratch(buf, &mut scratch);
    transpose_square(buf, m);
    fft.process_with_scratch(buf, &mut scratch);
    transpose_square(buf, m);
}

/// Cache-blocked in-place transpose of a square row-major matrix.
fn transpose_square(buf: &mut [Complex<f64>], m: usize) {
    const BLOCK: usize = 64;
    for jb in (0..m).step_by(BLOCK) {
        for ib in (jb..m).step_by(BLOCK) {
            for j in jb..(jb + BLOCK).min(m) {
                let i_lo = if ib == jb { j + 1 } else { ib };
                for i in i_lo..(ib + BLOCK).min(m) {
                    buf.swap(j * m + i, i * m + j);
                }
            }
        }
    }
}
