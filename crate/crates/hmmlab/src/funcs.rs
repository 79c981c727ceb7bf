//! Closed-form smooth functions used as coefficients and test functions.
//!
//! The laboratory only needs a small family of smooth functions on the unit
//! square — constants, bilinear polynomials, and separable sine products —
//! each with an exact evaluator. Keeping them as an enum (rather than trait
//! objects) preserves `PartialEq`/serialization for configuration round-trips
//! and keeps evaluation free of indirection in quadrature loops.

use crate::error::{Error, Result};
use std::fmt;

/// A smooth closed-form function on the closed unit square.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SmoothFn {
    /// Constant `c`.
    Const(f64),
    /// Bilinear `c00 + c10·x₁ + c01·x₂ + c11·x₁x₂`.
    Bilinear {
        /// Constant coefficient.
        c00: f64,
        /// Coefficient of `x₁`.
        c10: f64,
        /// Coefficient of `x₂`.
        c01: f64,
        /// Coefficient of `x₁x₂`.
        c11: f64,
    },
    /// Separable sine product `amp · sin(kx·π·x₁) · sin(ky·π·x₂)`.
    ///
    /// Vanishes on the boundary for integer frequencies, making it the
    /// canonical smooth test function for the Dirichlet problem.
    SineProduct {
        /// Amplitude.
        amp: f64,
        /// Frequency multiplier along `x₁` (units of π).
        kx: u32,
        /// Frequency multiplier along `x₂` (units of π).
        ky: u32,
    },
}

impl SmoothFn {
    /// Evaluates the function at `x = (x₁, x₂)`.
    #[inline]
    pub fn eval(&self, x: [f64; 2]) -> f64 {
        match *self {
            SmoothFn::Const(c) => c,
            SmoothFn::Bilinear { c00, c10, c01, c11 } => {
                c00 + c10 * x[0] + c01 * x[1] + c11 * x[0] * x[1]
            }
            SmoothFn::SineProduct { amp, kx, ky } => {
                amp * (kx as f64 * std::f64::consts::PI * x[0]).sin()
                    * (ky as f64 * std::f64::consts::PI * x[1]).sin()
            }
        }
    }

    /// A lower bound of the function over the closed unit square.
    ///
    /// Exact for constants and bilinear functions (attained at a corner,
    /// since a bilinear function is affine along every axis-parallel line);
    /// for sine products the bound `-|amp|` is used.
    pub fn lower_bound(&self) -> f64 {
        match *self {
            SmoothFn::Const(c) => c,
            SmoothFn::Bilinear { c00, c10, c01, c11 } => {
                let corners = [c00, c00 + c10, c00 + c01, c00 + c10 + c01 + c11];
                corners.iter().copied().fold(f64::INFINITY, f64::min)
            }
            SmoothFn::SineProduct { amp, .. } => -amp.abs(),
        }
    }

    /// Parses a one-line function specification.
    ///
    /// Accepted forms:
    /// - `const <c>`
    /// - `bilinear <c00> <c10> <c01> <c11>`
    /// - `sine_product <amp> <kx> <ky>`
    pub fn parse(text: &str) -> Result<Self> {
        let mut it = text.split_whitespace();
        let kind = it
            .next()
            .ok_or_else(|| Error::InvalidArgument("empty function specification".into()))?;
        let rest: Vec<&str> = it.collect();
        let bad = |msg: String| Error::InvalidArgument(msg);
        let num = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| bad(format!("`{s}` is not a number in function spec `{text}`")))
        };
        match kind {
            "const" => {
                if rest.len() != 1 {
                    return Err(bad(format!("`const` takes 1 parameter, got {}", rest.len())));
                }
                Ok(SmoothFn::Const(num(rest[0])?))
            }
            "bilinear" => {
                if rest.len() != 4 {
                    return Err(bad(format!(
                        "`bilinear` takes 4 parameters, got {}",
                        rest.len()
                    )));
                }
                Ok(SmoothFn::Bilinear {
                    c00: num(rest[0])?,
                    c10: num(rest[1])?,
                    c01: num(rest[2])?,
                    c11: num(rest[3])?,
                })
            }
            "sine_product" => {
                if rest.len() != 3 {
                    return Err(bad(format!(
                        "`sine_product` takes 3 parameters, got {}",
                        rest.len()
                    )));
                }
                let freq = |s: &str| -> Result<u32> {
                    s.parse::<u32>().map_err(|_| {
                        bad(format!("`{s}` is not a positive integer frequency in `{text}`"))
                    })
                };
                Ok(SmoothFn::SineProduct {
                    amp: num(rest[0])?,
                    kx: freq(rest[1])?,
                    ky: freq(rest[2])?,
                })
            }
            other => Err(bad(format!(
                "unknown function kind `{other}` (expected const | bilinear | sine_product)"
            ))),
        }
    }
}

impl fmt::Display for SmoothFn {
    /// Canonical one-line form; `SmoothFn::parse` inverts it exactly.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            SmoothFn::Const(c) => write!(f, "const {c}"),
            SmoothFn::Bilinear { c00, c10, c01, c11 } => {
                write!(f, "bilinear {c00} {c10} {c01} {c11}")
            }
            SmoothFn::SineProduct { amp, kx, ky } => write!(f, "sine_product {amp} {kx} {ky}"),
        }
    }
}
