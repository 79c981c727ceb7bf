//! Numerical laboratory for corrector statistics of a first-order FEM
//! heterogeneous multiscale (HMS) scheme on the unit square.
//!
//! The model problem is the 2D elliptic equation
//!
//! ```text
//! -Δu_ε + (q0 + q_ε) u_ε = f   on Y = (0,1)²,   u_ε = 0 on ∂Y,
//! ```
//!
//! where `q0` is a smooth deterministic potential and `q_ε(x) = q(x/ε)` is a
//! stationary random field with short-range (SRC) or long-range (LRC)
//! correlations. The multiscale scheme assembles a 7-point stencil on a
//! structured triangulation of mesh size `h`, with the potential term sampled
//! only on shrunken element patches `K_δ ⊂ K` of diameter ratio `r = δ/h`.
//!
//! The crate measures, by Monte Carlo, the fluctuations of the scheme around
//! its homogenized limit: the random corrector is paired against a test
//! function, rescaled by `ε^{-β/2}`, and compared against two predictions —
//! an *intermediate* variance driven by a piecewise-quadratic kernel `L` on
//! the quadrature patches, and the *limiting* Gaussian variance. For SRC
//! fields the patch shrink amplifies the limiting variance by `(h/δ)²`; for
//! LRC fields the limit is independent of `δ`.
//!
//! Module map:
//! - [`mesh`]: structured triangulation, hat basis, shift/difference operators;
//! - [`quad`]: triangle quadrature rules and patch subdivision tables;
//! - [`funcs`]: closed-form smooth coefficient/test functions;
//! - [`field`]: random potential synthesis (checkerboard SRC, Gaussian LRC);
//! - [`hmm`]: stencil assembly, structure verification, matrix-free CG solver;
//! - [`galerkin`]: independent dense assembler used as a validation oracle;
//! - [`corrector`]: corrector pairing, discrete Green solves, kernel `L`,
//!   intermediate/limiting variance predictions;
//! - [`singular`]: quadrature for the double integral with kernel `|x-y|^{-α}`;
//! - [`stats`]: ensemble summaries, normality diagnostics;
//! - [`experiment`]: ensemble driver, amplification/epsilon scans;
//! - [`config`]: experiment configuration (parse / canonical form / hash);
//! - [`runio`]: CSV/JSON artifact writers;
//! - [`cli`]: command-line entry points.

pub mod cli;
pub mod config;
pub mod corrector;
pub mod error;
pub mod experiment;
pub mod field;
pub mod funcs;
pub mod galerkin;
pub mod hmm;
pub mod mesh;
pub mod quad;
pub mod rng;
pub mod runio;
pub mod singular;
pub mod stats;

pub use error::{Error, Result};
