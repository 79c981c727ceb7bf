//! Experiment configuration: a flat, sectioned key-value text format that is
//! diff-friendly and content-addressable.
//!
//! ```text
//! [mesh]
//! n = 8
//!
//! [field]
//! kind = src          # none | src | lrc
//! eps = 0.001953125
//! amplitude = 0.5
//!
//! [scheme]
//! r = 1
//! cg_tol = 0.0000000001
//!
//! [functions]
//! q0 = const 1
//! f = sine_product 1 1 1
//! phi = sine_product 1 1 1
//!
//! [ensemble]
//! samples = 1000
//! seed = 1
//! ```
//!
//! Every key has a documented default, so a minimal config parses. Unknown
//! sections or keys are rejected with the accepted list. [`RunConfig::canonical`]
//! emits the full normal form (every key, fixed order, shortest round-trip
//! float formatting), and the config hash is the SHA-256 of that canonical
//! text, so semantically identical files hash identically on any platform.

use crate::error::{Error, Result};
use crate::field::FieldSpec;
use crate::funcs::SmoothFn;
use crate::hmm::{Preconditioner, QuadratureSpec};
use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

const SECTIONS: [&str; 6] = ["mesh", "field", "scheme", "functions", "ensemble", "output"];

fn section_keys(section: &str) -> &'static [&'static str] {
    match section {
        "mesh" => &["n"],
        "field" => &["kind", "eps", "amplitude", "alpha", "kappa_g", "resolution"],
        "scheme" => &[
            "r",
            "n_q",
            "min_subdiv",
            "cg_tol",
            "preconditioner",
            "cell_subdiv",
            "reference_n",
        ],
        "functions" => &["q0", "f", "phi"],
        "ensemble" => &["samples", "seed", "beta"],
        "output" => &["dir"],
        _ => &[],
    }
}

/// A fully resolved experiment configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Cells per side of the experiment mesh.
    pub n: usize,
    /// Patch shrink ratio `r = δ/h ∈ (0,1]`.
    pub r: f64,
    /// Field correlation-length scale ε.
    pub eps: f64,
    /// Random-field specification (`Zero` for the homogenized flavor).
    pub field: FieldSpec,
    /// Smooth potential `q0`.
    pub q0: SmoothFn,
    /// Forcing `f`.
    pub f: SmoothFn,
    /// Test function φ of the corrector pairing.
    pub phi: SmoothFn,
    /// Scaling exponent β override; `None` uses the field's default
    /// (2 for short-range, α for long-range).
    pub beta: Option<f64>,
    /// Quadrature points per correlation length.
    pub n_q: u32,
    /// Lower bound on patch-edge subdivisions.
    pub min_subdiv: u32,
    /// CG relative-residual tolerance.
    pub cg_tol: f64,
    /// CG preconditioner.
    pub preconditioner: Preconditioner,
    /// Singular-quadrature subdivisions per patch edge (0 = mesh-based
    /// automatic choice).
    pub cell_subdiv: u32,
    /// Reference mesh size for limit variances (0 = automatic `4·n`).
    pub reference_n: usize,
    /// Monte Carlo sample count M.
    pub samples: u64,
    /// Base seed; sample k derives its seed by avalanche mixing.
    pub seed: u64,
    /// Output directory for CSV/JSON artifacts.
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n: 8,
            r: 1.0,
            eps: 1.0 / 512.0,
            field: FieldSpec::Zero,
            q0: SmoothFn::Const(1.0),
            f: SmoothFn::SineProduct { amp: 1.0, kx: 1, ky: 1 },
            phi: SmoothFn::SineProduct { amp: 1.0, kx: 1, ky: 1 },
            beta: None,
            n_q: 4,
            min_subdiv: 4,
            cg_tol: 1e-10,
            preconditioner: Preconditioner::None,
            cell_subdiv: 0,
            reference_n: 0,
            samples: 1000,
            seed: 1,
            out_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    /// Desk-scale short-range operating point: N = 8, full patches,
    /// ε = 2⁻⁹, amplitude 0.5, M = 1000 samples. Two quadrature points per
    /// correlation length keep a full ensemble at minutes scale on one
    /// workstation.
    pub fn desk_src() -> Self {
        Self {
            field: FieldSpec::Src { amplitude: 0.5 },
            eps: 1.0 / 512.0,
            n_q: 2,
            samples: 1000,
            ..Self::default()
        }
    }

    /// Desk-scale long-range operating point: N = 8, α = 1, ε = 2⁻⁷,
    /// synthesis resolution ε/8, M = 800 samples.
    pub fn desk_lrc() -> Self {
        Self {
            field: FieldSpec::Lrc {
                alpha: 1.0,
                kappa_g: 1.0,
                amplitude: 0.5,
                resolution: 0.125,
            },
            eps: 1.0 / 128.0,
            n_q: 2,
            samples: 800,
            ..Self::default()
        }
    }

    /// Parses and validates a config text.
    pub fn parse(text: &str) -> Result<Self> {
        let entries = tokenize(text)?;
        let mut cfg = Self::default();
        let mut field_kind = String::from("none");
        let mut field_params = FieldParams::default();

        for ((section, key), (line, value)) in &entries {
            let parse_err = |msg: String| Error::ConfigParse { line: *line, msg };
            match (section.as_str(), key.as_str()) {
                ("mesh", "n") => cfg.n = parse_num(value).map_err(parse_err)?,
                ("field", "kind") => field_kind = value.clone(),
                ("field", "eps") => cfg.eps = parse_num(value).map_err(parse_err)?,
                ("field", "amplitude") => {
                    field_params.amplitude = parse_num(value).map_err(parse_err)?
                }
                ("field", "alpha") => field_params.alpha = parse_num(value).map_err(parse_err)?,
                ("field", "kappa_g") => {
                    field_params.kappa_g = parse_num(value).map_err(parse_err)?
                }
                ("field", "resolution") => {
                    field_params.resolution = parse_num(value).map_err(parse_err)?
                }
                ("scheme", "r") => cfg.r = parse_num(value).map_err(parse_err)?,
                ("scheme", "n_q") => cfg.n_q = parse_num(value).map_err(parse_err)?,
                ("scheme", "min_subdiv") => {
                    cfg.min_subdiv = parse_num(value).map_err(parse_err)?
                }
                ("scheme", "cg_tol") => cfg.cg_tol = parse_num(value).map_err(parse_err)?,
                ("scheme", "preconditioner") => {
                    cfg.preconditioner = match value.as_str() {
                        "none" => Preconditioner::None,
                        "jacobi" => Preconditioner::Jacobi,
                        other => {
                            return Err(parse_err(format!(
                                "unknown preconditioner '{other}' (accepted: none, jacobi)"
                            )))
                        }
                    }
                }
                ("scheme", "cell_subdiv") => {
                    cfg.cell_subdiv = parse_num(value).map_err(parse_err)?
                }
                ("scheme", "reference_n") => {
                    cfg.reference_n = parse_num(value).map_err(parse_err)?
                }
                ("functions", "q0") => cfg.q0 = SmoothFn::parse(value).map_err(reline(*line))?,
                ("functions", "f") => cfg.f = SmoothFn::parse(value).map_err(reline(*line))?,
                ("functions", "phi") => cfg.phi = SmoothFn::parse(value).map_err(reline(*line))?,
                ("ensemble", "samples") => cfg.samples = parse_num(value).map_err(parse_err)?,
                ("ensemble", "seed") => cfg.seed = parse_num(value).map_err(parse_err)?,
                ("ensemble", "beta") => {
                    cfg.beta = if value == "auto" {
                        None
                    } else {
                        Some(parse_num(value).map_err(parse_err)?)
                    }
                }
                ("output", "dir") => cfg.out_dir = PathBuf::from(value),
                _ => unreachable!("tokenize admits only known section/key pairs"),
            }
        }

        cfg.field = match field_kind.as_str() {
            "none" => FieldSpec::Zero,
            "src" => FieldSpec::Src { amplitude: field_params.amplitude },
            "lrc" => FieldSpec::Lrc {
                alpha: field_params.alpha,
                kappa_g: field_params.kappa_g,
                amplitude: field_params.amplitude,
                resolution: field_params.resolution,
            },
            other => {
                let line = entries
                    .get(&("field".to_string(), "kind".to_string()))
                    .map_or(0, |(l, _)| *l);
                return Err(Error::ConfigParse {
                    line,
                    msg: format!("unknown field kind '{other}' (accepted: none, src, lrc)"),
                });
            }
        };

        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and parses a config file.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
        })?;
        Self::parse(&text)
    }

    /// Patch diameter `δ = r·h`.
    pub fn delta(&self) -> f64 {
        self.r / self.n as f64
    }

    /// The scaling exponent β in effect.
    pub fn beta_value(&self) -> f64 {
        self.beta.unwrap_or_else(|| self.field.default_beta())
    }

    /// Quadrature policy of this config.
    pub fn quadrature(&self) -> QuadratureSpec {
        QuadratureSpec { n_q: self.n_q, min_subdiv: self.min_subdiv }
    }

    /// Singular-quadrature subdivisions, resolving the automatic choice:
    /// finer patches on coarse meshes keep the cell size roughly uniform.
    pub fn effective_cell_subdiv(&self) -> u32 {
        if self.cell_subdiv > 0 {
            self.cell_subdiv
        } else {
            // Cell size r·h/k ≤ 1/64 at r = 1: the singular quadrature's
            // near-field error is linear in the cell size at α = 1, and this
            // choice keeps the 2× refinement drift near half a percent.
            ((64 / self.n.max(1)) as u32).clamp(4, 16)
        }
    }

    /// Reference mesh size, resolving the automatic `4·n` choice.
    pub fn effective_reference_n(&self) -> usize {
        if self.reference_n > 0 {
            self.reference_n
        } else {
            4 * self.n
        }
    }

    /// Enforces all config invariants with actionable messages.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::ConfigValidation(msg));
        if self.n < 2 {
            return fail(format!("mesh n = {} must be at least 2", self.n));
        }
        if !(self.r > 0.0 && self.r <= 1.0) {
            return fail(format!("scheme r = {} must lie in (0, 1]", self.r));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return fail(format!("field eps = {} must be positive and finite", self.eps));
        }
        self.field.validate()?;
        if self.field != FieldSpec::Zero {
            let delta = self.delta();
            if self.eps > delta / 8.0 {
                return fail(format!(
                    "field eps = {} exceeds delta/8 = {} (delta = r*h = {}); the patch \
                     sampling scheme requires scale separation eps <= delta/8",
                    self.eps,
                    delta / 8.0,
                    delta
                ));
            }
            let q0_lb = self.q0.lower_bound();
            let amp = self.field.amplitude_bound();
            if !(q0_lb > amp) {
                return fail(format!(
                    "q0 lower bound {q0_lb} must strictly exceed the field amplitude bound \
                     {amp} so the total potential stays positive"
                ));
            }
        }
        if self.n_q < 1 {
            return fail("scheme n_q must be at least 1".into());
        }
        if self.min_subdiv < 1 {
            return fail("scheme min_subdiv must be at least 1".into());
        }
        if !(self.cg_tol > 0.0 && self.cg_tol < 0.1) {
            return fail(format!("scheme cg_tol = {} must lie in (0, 0.1)", self.cg_tol));
        }
        if let Some(beta) = self.beta {
            if !(beta > 0.0 && beta <= 2.0) {
                return fail(format!("ensemble beta = {beta} must lie in (0, 2]"));
            }
        }
        if self.reference_n != 0 && self.reference_n < 4 * self.n {
            return fail(format!(
                "scheme reference_n = {} must be at least 4*n = {} (or 0 for automatic)",
                self.reference_n,
                4 * self.n
            ));
        }
        if self.samples < 1 {
            return fail("ensemble samples must be at least 1".into());
        }
        Ok(())
    }

    /// Canonical full normal form: every key, fixed order, shortest
    /// round-trip numeric formatting. `parse(canonical(c)) == c`.
    pub fn canonical(&self) -> String {
        let (kind, amplitude, alpha, kappa_g, resolution) = match self.field {
            FieldSpec::Zero => ("none", 1.0, 1.0, 1.0, 0.125),
            FieldSpec::Src { amplitude } => ("src", amplitude, 1.0, 1.0, 0.125),
            FieldSpec::Lrc { alpha, kappa_g, amplitude, resolution } => {
                ("lrc", amplitude, alpha, kappa_g, resolution)
            }
        };
        let precond = match self.preconditioner {
            Preconditioner::None => "none",
            Preconditioner::Jacobi => "jacobi",
        };
        let beta = self.beta.map_or_else(|| "auto".to_string(), |b| b.to_string());
        let mut s = String::new();
        let _ = writeln!(s, "[mesh]");
        let _ = writeln!(s, "n = {}", self.n);
        let _ = writeln!(s, "\n[field]");
        let _ = writeln!(s, "kind = {kind}");
        let _ = writeln!(s, "eps = {}", self.eps);
        let _ = writeln!(s, "amplitude = {amplitude}");
        let _ = writeln!(s, "alpha = {alpha}");
        let _ = writeln!(s, "kappa_g = {kappa_g}");
        let _ = writeln!(s, "resolution = {resolution}");
        let _ = writeln!(s, "\n[scheme]");
        let _ = writeln!(s, "r = {}", self.r);
        let _ = writeln!(s, "n_q = {}", self.n_q);
        let _ = writeln!(s, "min_subdiv = {}", self.min_subdiv);
        let _ = writeln!(s, "cg_tol = {}", self.cg_tol);
        let _ = writeln!(s, "preconditioner = {precond}");
        let _ = writeln!(s, "cell_subdiv = {}", self.cell_subdiv);
        let _ = writeln!(s, "reference_n = {}", self.reference_n);
        let _ = writeln!(s, "\n[functions]");
        let _ = writeln!(s, "q0 = {}", self.q0);
        let _ = writeln!(s, "f = {}", self.f);
        let _ = writeln!(s, "phi = {}", self.phi);
        let _ = writeln!(s, "\n[ensemble]");
        let _ = writeln!(s, "samples = {}", self.samples);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "beta = {beta}");
        let _ = writeln!(s, "\n[output]");
        let _ = writeln!(s, "dir = {}", self.out_dir.display());
        s
    }

    /// Content address: SHA-256 of the canonical text, hex-encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        let mut out = String::with_capacity(64);
        for byte in digest {
            let _ = write!(out, "{byte:02x}");
        }
        out
    }
}

#[derive(Debug)]
struct FieldParams {
    amplitude: f64,
    alpha: f64,
    kappa_g: f64,
    resolution: f64,
}

impl Default for FieldParams {
    fn default() -> Self {
        Self { amplitude: 1.0, alpha: 1.0, kappa_g: 1.0, resolution: 0.125 }
    }
}

fn reline(line: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::InvalidArgument(msg) => Error::ConfigParse { line, msg },
        other => other,
    }
}

fn parse_num<T: std::str::FromStr>(value: &str) -> std::result::Result<T, String>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| format!("cannot parse '{value}': {e}"))
}

type Entries = HashMap<(String, String), (usize, String)>;

/// Splits the text into validated `(section, key) -> (line, value)` entries.
fn tokenize(text: &str) -> Result<Entries> {
    let mut entries = Entries::new();
    let mut section: Option<String> = None;
    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') || trimmed.starts_with(';') {
            continue;
        }
        if let Some(name) = trimmed.strip_prefix('[') {
            let Some(name) = name.strip_suffix(']') else {
                return Err(Error::ConfigParse {
                    line,
                    msg: format!("malformed section header '{trimmed}'"),
                });
            };
            let name = name.trim();
            if !SECTIONS.contains(&name) {
                return Err(Error::ConfigParse {
                    line,
                    msg: format!(
                        "unknown section [{name}] (accepted sections: {})",
                        SECTIONS.join(", ")
                    ),
                });
            }
            section = Some(name.to_string());
            continue;
        }
        let Some((key, value)) = trimmed.split_once('=') else {
            return Err(Error::ConfigParse {
                line,
                msg: format!("expected 'key = value', got '{trimmed}'"),
            });
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        let Some(ref sec) = section else {
            return Err(Error::ConfigParse {
                line,
                msg: format!("key '{key}' appears before any [section] header"),
            });
        };
        let accepted = section_keys(sec);
        if !accepted.contains(&key.as_str()) {
            return Err(Error::ConfigParse {
                line,
                msg: format!(
                    "unknown key '{key}' in [{sec}] (accepted keys: {})",
                    accepted.join(", ")
                ),
            });
        }
        if let Some((prev, _)) = entries.insert((sec.clone(), key.clone()), (line, value)) {
            return Err(Error::ConfigParse {
                line,
                msg: format!("duplicate key '{key}' in [{sec}] (first set on line {prev})"),
            });
        }
    }
    Ok(entries)
}
