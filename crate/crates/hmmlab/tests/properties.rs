//! Property-based tests of two structural invariants.
//!
//! 1. Configuration canonicalization is a lossless round trip:
//!    `parse(canonical(c)) == c` for every valid configuration. The
//!    canonical form uses shortest-round-trip float formatting, so this
//!    holds exactly, not approximately.
//! 2. The barycenter (midpoint) element quadrature of a product `q0·v·w`
//!    with `q0 ∈ C¹` and linear `v`, `w` converges at order ≥ 1 in the
//!    element size once normalized by `‖v‖_{H¹(K)}·‖w‖_{L²(K)}` — the
//!    consistency estimate behind the first-order convergence of the
//!    homogenized scheme.

use hmmlab::config::RunConfig;
use hmmlab::field::FieldSpec;
use hmmlab::hmm::Preconditioner;
use hmmlab::funcs::SmoothFn;
use hmmlab::quad::{degree5_rule, SubdivisionRule};
use hmmlab::stats::least_squares_slope;
use proptest::prelude::*;
use std::path::PathBuf;

// ---------------------------------------------------------------------------
// Strategies for valid configurations
// ---------------------------------------------------------------------------

fn any_smooth_fn() -> impl Strategy<Value = SmoothFn> {
    prop_oneof![
        (-3.0..3.0f64).prop_map(SmoothFn::Const),
        (-2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64)
            .prop_map(|(c00, c10, c01, c11)| SmoothFn::Bilinear { c00, c10, c01, c11 }),
        (0.1..3.0f64, 1u32..5, 1u32..5)
            .prop_map(|(amp, kx, ky)| SmoothFn::SineProduct { amp, kx, ky }),
    ]
}

/// Potential with a lower bound strictly above `amp`, so the total potential
/// stays positive: either a constant above `amp` or a bilinear function with
/// non-negative slope coefficients whose minimum (at the origin) is above it.
fn positive_q0(amp: f64) -> impl Strategy<Value = SmoothFn> {
    prop_oneof![
        (amp + 0.1..amp + 3.0).prop_map(SmoothFn::Const),
        (amp + 0.1..amp + 2.0, 0.0..1.0f64, 0.0..1.0f64, 0.0..1.0f64)
            .prop_map(|(c00, c10, c01, c11)| SmoothFn::Bilinear { c00, c10, c01, c11 }),
    ]
}

#[derive(Debug, Clone)]
enum FieldDraw {
    Zero,
    Src { amplitude: f64 },
    Lrc { alpha: f64, kappa_g: f64, amplitude: f64, resolution: f64 },
}

fn any_field() -> impl Strategy<Value = FieldDraw> {
    prop_oneof![
        Just(FieldDraw::Zero),
        (0.05..0.9f64).prop_map(|amplitude| FieldDraw::Src { amplitude }),
        (0.2..1.8f64, 0.1..2.0f64, 0.05..0.9f64, prop_oneof![Just(0.25), Just(0.125), Just(0.0625)])
            .prop_map(|(alpha, kappa_g, amplitude, resolution)| FieldDraw::Lrc {
                alpha,
                kappa_g,
                amplitude,
                resolution,
            }),
    ]
}

prop_compose! {
    fn any_valid_config()(
        n in 2usize..=32,
        r in prop_oneof![Just(1.0), Just(0.5), Just(0.25), 0.1..1.0f64],
        field in any_field(),
        sep_exp in 0i32..=4,
        free_q0 in any_smooth_fn(),
        f in any_smooth_fn(),
        phi in any_smooth_fn(),
        beta in prop_oneof![Just(None), (0.1..2.0f64).prop_map(Some)],
        n_q in 1u32..=8,
        min_subdiv in 1u32..=8,
        cg_tol in prop_oneof![Just(1e-10), Just(1e-8), Just(1e-4)],
        preconditioner in prop_oneof![Just(Preconditioner::None), Just(Preconditioner::Jacobi)],
        cell_subdiv in 0u32..=8,
        ref_mult in prop_oneof![Just(0usize), Just(4), Just(8)],
        samples in 1u64..=200,
        seed in any::<u64>(),
        dir in prop_oneof![Just("out"), Just("runs/a"), Just("/tmp/scan_x")],
    ) -> RunConfig {
        let mut cfg = RunConfig {
            n,
            r,
            f,
            phi,
            beta,
            n_q,
            min_subdiv,
            cg_tol,
            preconditioner,
            cell_subdiv,
            reference_n: ref_mult * n,
            samples,
            seed,
            out_dir: PathBuf::from(dir),
            ..RunConfig::default()
        };
        match field {
            FieldDraw::Zero => {
                cfg.field = FieldSpec::Zero;
                cfg.q0 = free_q0;
                cfg.eps = 0.015625;
            }
            FieldDraw::Src { amplitude } => {
                cfg.field = FieldSpec::Src { amplitude };
            }
            FieldDraw::Lrc { alpha, kappa_g, amplitude, resolution } => {
                cfg.field = FieldSpec::Lrc { alpha, kappa_g, amplitude, resolution };
            }
        }
        if cfg.field != FieldSpec::Zero {
            // Scale separation: eps must not exceed delta/8, and the potential
            // must dominate the field amplitude. Dividing by an exact power of
            // two keeps the inequality exact in floating point.
            cfg.eps = cfg.delta() / 8.0 / f64::from(1 << sep_exp);
            cfg.q0 = SmoothFn::Const(cfg.field.amplitude_bound() + 1.0);
        }
        cfg
    }
}

proptest! {
    /// `parse(canonical(c)) == c` exactly, for every valid configuration.
    #[test]
    fn canonical_form_round_trips(cfg in any_valid_config()) {
        prop_assert!(cfg.validate().is_ok(), "generator produced an invalid config");
        let text = cfg.canonical();
        let back = RunConfig::parse(&text).expect("canonical text must parse");
        prop_assert_eq!(&back, &cfg);
        // A second canonicalization is a fixed point, so content hashes agree.
        prop_assert_eq!(back.canonical(), text);
    }
}

// ---------------------------------------------------------------------------
// Barycenter quadrature order
// ---------------------------------------------------------------------------

/// Composite degree-5 quadrature of `f` over the physical triangle `v`,
/// using `m²` congruent subtriangles. Effectively exact here relative to the
/// midpoint error under study.
fn composite_integral<F: Fn([f64; 2]) -> f64>(v: &[[f64; 2]; 3], f: &F, m: u32) -> f64 {
    let rule = degree5_rule();
    let area = 0.5
        * ((v[1][0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[2][0] - v[0][0]) * (v[1][1] - v[0][1]))
            .abs();
    let cell_area = area / f64::from(m * m);
    let map = |xi: f64, eta: f64| -> [f64; 2] {
        [
            v[0][0] + xi * (v[1][0] - v[0][0]) + eta * (v[2][0] - v[0][0]),
            v[0][1] + xi * (v[1][1] - v[0][1]) + eta * (v[2][1] - v[0][1]),
        ]
    };
    let mut total = 0.0;
    for tri in SubdivisionRule::new(m).subtriangles() {
        for node in &rule {
            let xi = node.lambda[0] * tri[0][0] + node.lambda[1] * tri[1][0] + node.lambda[2] * tri[2][0];
            let eta = node.lambda[0] * tri[0][1] + node.lambda[1] * tri[1][1] + node.lambda[2] * tri[2][1];
            total += cell_area * node.weight * f(map(xi, eta));
        }
    }
    total
}

/// Normalized barycenter quadrature errors
/// `R(h) = |∫_K q0 v w − |K|(q0 v w)(x_K)| / (‖v‖_{H¹(K)}‖w‖_{L²(K)})`
/// for `q0(x) = exp(x₁ − 2x₂)` on lower-type elements of size `h = 0.1·2⁻ᵏ`
/// anchored at (0.3, 0.4), with `v, w ∈ P1(K)` given by nodal values —
/// exactly the objects the element assembly integrates. Returns `(h, R)`
/// pairs; levels where both functions essentially vanish are skipped.
fn barycenter_error_levels(nv: [f64; 3], nw: [f64; 3]) -> Vec<(f64, f64)> {
    let q0 = |x: [f64; 2]| (x[0] - 2.0 * x[1]).exp();
    let anchor = [0.3, 0.4];
    let mut levels = Vec::new();
    for k in 0..6u32 {
        let h = 0.1 / f64::from(1 << k);
        let tri = [anchor, [anchor[0] + h, anchor[1]], [anchor[0] + h, anchor[1] + h]];
        let area = 0.5 * h * h;
        let centroid = [
            (tri[0][0] + tri[1][0] + tri[2][0]) / 3.0,
            (tri[0][1] + tri[1][1] + tri[2][1]) / 3.0,
        ];
        // Barycentric inversion for this element: η from x₂, then ξ.
        let bary = move |x: [f64; 2]| -> [f64; 3] {
            let eta = (x[1] - anchor[1]) / h;
            let xi = (x[0] - anchor[0]) / h - eta;
            [1.0 - xi - eta, xi, eta]
        };
        let v = move |x: [f64; 2]| {
            let l = bary(x);
            nv[0] * l[0] + nv[1] * l[1] + nv[2] * l[2]
        };
        let w = move |x: [f64; 2]| {
            let l = bary(x);
            nw[0] * l[0] + nw[1] * l[1] + nw[2] * l[2]
        };
        // Constant gradients of the interpolants on this element.
        let grad_sq = |n: &[f64; 3]| {
            let gx = (n[1] - n[0]) / h;
            let gy = (n[2] - n[1]) / h;
            gx * gx + gy * gy
        };
        let product = |x: [f64; 2]| q0(x) * v(x) * w(x);
        let exact = composite_integral(&tri, &product, 32);
        let midpoint = area * product(centroid);
        // ‖v‖²_{H¹(K)} = ∫_K v² + |K|·|∇v|², degree-5 rule exact for v².
        let v_h1 = (composite_integral(&tri, &|x| v(x) * v(x), 1) + area * grad_sq(&nv)).sqrt();
        let w_l2 = composite_integral(&tri, &|x| w(x) * w(x), 1).sqrt();
        if v_h1 * w_l2 > 1e-12 {
            levels.push((h, (exact - midpoint).abs() / (v_h1 * w_l2)));
        }
    }
    levels
}

proptest! {
    /// Midpoint-rule consistency inequality: for every draw of `v, w ∈ P1(K)`
    /// and every level, `R(h) ≤ C·h` with an a-priori constant.
    ///
    /// Splitting `q0 = q0(x_K) + (q0 − q0(x_K))` bounds the error by
    /// `|q0(x_K)|·|∇v·M·∇w| + ‖∇q0‖_∞·√2·h·‖v‖_{L²}‖w‖_{L²}` with `M` the
    /// centered second-moment tensor of `K`; P1 norm equivalences turn both
    /// channels into `≤ 1.5·‖q0‖_{C¹(K)}·h·‖v‖_{H¹}‖w‖_{L²}`. The assertion
    /// uses 5× that constant. A per-draw *slope* would not be a sound test:
    /// the leading error coefficient crosses zero on a measure-zero manifold
    /// of nodal draws, and near it the observed slope at finite h is
    /// arbitrary even though the first-order bound holds at every level
    /// (the deterministic companion test below measures the clean order).
    #[test]
    fn barycenter_quadrature_satisfies_first_order_bound(
        nv in [-2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64],
        nw in [-2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64],
    ) {
        // ‖q0‖_{C¹} on the coarsest element's bounding box [0.3,0.5]×[0.4,0.6]:
        // sup |q0| = e^{−0.3}, sup |∇q0| = √5·e^{−0.3}.
        let q_c1 = (1.0 + 5.0f64.sqrt()) * (-0.3f64).exp();
        let c_bound = 5.0 * 1.5 * q_c1;
        for (h, ratio) in barycenter_error_levels(nv, nw) {
            prop_assert!(
                ratio <= c_bound * h,
                "normalized error {ratio} exceeds C·h = {} at h = {h}",
                c_bound * h
            );
        }
    }
}

/// Observed barycenter quadrature order on a generic element-data draw: the
/// least-squares slope of `log R` against `log h` across six dyadic levels.
/// The nodal values are chosen with a generic leading error coefficient
/// (gradient pairs far from the cancellation manifold); the estimate is
/// sharp through the `∇v·∇w` channel, so the measured order sits near 1
/// (not 2) and the finest dyadic ratio approaches it from above.
#[test]
fn barycenter_quadrature_observed_order_is_one() {
    let levels = barycenter_error_levels([1.0, -0.5, 0.75], [-0.3, 0.9, 1.6]);
    assert_eq!(levels.len(), 6);
    let log_h: Vec<f64> = levels.iter().map(|(h, _)| h.ln()).collect();
    let log_err: Vec<f64> = levels.iter().map(|(_, r)| r.ln()).collect();
    let fitted = least_squares_slope(&log_h, &log_err);
    assert!(fitted >= 0.9, "observed quadrature order {fitted} below 1");
    let finest = (log_err[4] - log_err[5]) / (log_h[4] - log_h[5]);
    assert!(
        (0.95..1.2).contains(&finest),
        "finest dyadic order {finest} should approach the sharp rate 1"
    );
}
