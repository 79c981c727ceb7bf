//! Quadrature rules on triangles and a 1D adaptive rule.
//!
//! Conventions: a triangle with vertices `(V0, V1, V2)` is parametrized by
//! reference coordinates `(ξ, η)` via `x = V0 + ξ(V1−V0) + η(V2−V0)`; the
//! barycentric coordinates are `λ = (1−ξ−η, ξ, η)`. All rule weights are
//! normalized to sum to 1, so `∫_T g ≈ |T| Σ w_q g(x_q)`.
//!
//! Three rules cover every integral in the crate:
//! - [`EDGE_MIDPOINT_RULE`]: 3 points, exact for degree ≤ 2 — used for all
//!   pairings of smooth functions against hat functions;
//! - [`DEGREE5_RULE`]: 7 points, exact for degree ≤ 5 — used for integrals of
//!   piecewise polynomials of degree ≤ 4 (kernel squares, product norms),
//!   where it is exact rather than approximate;
//! - [`SubdivisionRule`]: barycenter (midpoint) values on the `m²` congruent
//!   subtriangles of a uniform subdivision — used for rough integrands
//!   (random potentials), with `m` tied to the field correlation length.

/// One normalized quadrature node: barycentric coordinates and weight.
#[derive(Debug, Clone, Copy)]
pub struct QuadNode {
    /// Barycentric coordinates `(λ0, λ1, λ2)`, each in `[0,1]`, summing to 1.
    pub lambda: [f64; 3],
    /// Weight; rule weights sum to 1.
    pub weight: f64,
}

/// 3-point edge-midpoint Gauss rule, exact for polynomials of degree ≤ 2.
pub const EDGE_MIDPOINT_RULE: [QuadNode; 3] = [
    QuadNode { lambda: [0.5, 0.5, 0.0], weight: 1.0 / 3.0 },
    QuadNode { lambda: [0.0, 0.5, 0.5], weight: 1.0 / 3.0 },
    QuadNode { lambda: [0.5, 0.0, 0.5], weight: 1.0 / 3.0 },
];

/// Degree-5 exact 7-point rule (centroid plus two symmetric orbits).
///
/// Orbit values: `b± = (6 ± √15)/21` with weights `(155 ± √15)/1200`; the
/// centroid carries `9/40`. Exact for all polynomials of degree ≤ 5, hence
/// exact for the quartic integrands it is applied to.
pub fn degree5_rule() -> [QuadNode; 7] {
    let s15 = 15.0_f64.sqrt();
    let b_plus = (6.0 + s15) / 21.0;
    let a_plus = 1.0 - 2.0 * b_plus;
    let w_plus = (155.0 + s15) / 1200.0;
    let b_minus = (6.0 - s15) / 21.0;
    let a_minus = 1.0 - 2.0 * b_minus;
    let w_minus = (155.0 - s15) / 1200.0;
    [
        QuadNode { lambda: [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], weight: 9.0 / 40.0 },
        QuadNode { lambda: [a_plus, b_plus, b_plus], weight: w_plus },
        QuadNode { lambda: [b_plus, a_plus, b_plus], weight: w_plus },
        QuadNode { lambda: [b_plus, b_plus, a_plus], weight: w_plus },
        QuadNode { lambda: [a_minus, b_minus, b_minus], weight: w_minus },
        QuadNode { lambda: [b_minus, a_minus, b_minus], weight: w_minus },
        QuadNode { lambda: [b_minus, b_minus, a_minus], weight: w_minus },
    ]
}

/// Barycenter table for the uniform subdivision of a triangle into `m²`
/// congruent subtriangles.
///
/// Row `j` of the subdivision lattice contains `m−j` upward subtriangles
/// (barycenters at `((i+1/3)/m, (j+1/3)/m)` in `(ξ,η)`) and `m−j−1` downward
/// ones (barycenters at `((i+2/3)/m, (j+2/3)/m)`). Each subtriangle has area
/// `|T|/m²`, so the midpoint (barycenter) rule reads
/// `∫_T g ≈ (|T|/m²) Σ_t g(x_t)` — first-order accurate per subcell diameter
/// for Lipschitz `g` and the workhorse for random-field integrands.
#[derive(Debug, Clone)]
pub struct SubdivisionRule {
    /// Subdivisions per edge.
    pub m: u32,
    /// Barycenters of the `m²` subtriangles in reference coordinates `(ξ, η)`.
    pub points: Vec<[f64; 2]>,
}

impl SubdivisionRule {
    /// Builds the table for `m ≥ 1` subdivisions per edge.
    pub fn new(m: u32) -> Self {
        assert!(m >= 1, "subdivision count must be at least 1");
        let mf = f64::from(m);
        let mut points = Vec::with_capacity((m * m) as usize);
        for j in 0..m {
            let jf = f64::from(j);
            for i in 0..(m - j) {
                let ifl = f64::from(i);
                points.push([(ifl + 1.0 / 3.0) / mf, (jf + 1.0 / 3.0) / mf]);
                if i + j + 1 < m {
                    points.push([(ifl + 2.0 / 3.0) / mf, (jf + 2.0 / 3.0) / mf]);
                }
            }
        }
        debug_assert_eq!(points.len(), (m * m) as usize);
        Self { m, points }
    }

    /// Corner reference coordinates of every subtriangle, in the same order
    /// as [`Self::points`]. Used where per-subcell geometry (not just the
    /// barycenter) is needed, e.g. composite higher-order rules.
    pub fn subtriangles(&self) -> Vec<[[f64; 2]; 3]> {
        let m = self.m;
        let mf = f64::from(m);
        let mut tris = Vec::with_capacity((m * m) as usize);
        for j in 0..m {
            for i in 0..(m - j) {
                let (x0, y0) = (f64::from(i) / mf, f64::from(j) / mf);
                let s = 1.0 / mf;
                tris.push([[x0, y0], [x0 + s, y0], [x0, y0 + s]]);
                if i + j + 1 < m {
                    tris.push([[x0 + s, y0], [x0 + s, y0 + s], [x0, y0 + s]]);
                }
            }
        }
        tris
    }
}

/// Adaptive Simpson integration of `f` over `[a, b]` to absolute tolerance.
///
/// Standard recursive Simpson with the 1/15 Richardson error estimate;
/// adequate for the smooth, rapidly decaying 1D integrands it is applied to
/// (Gaussian-weighted moments).
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (left, lm, flm) = simpson(f, a, fa, m, fm);
        let (right, rm, frm) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, fa, m, fm, left, lm, flm, 0.5 * tol, depth - 1)
                + recurse(f, m, fm, b, fb, right, rm, frm, 0.5 * tol, depth - 1)
        }
    }
    let fa = f(a);
    let fb = f(b);
    let (whole, m, fm) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, whole, m, fm, tol, 48)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Integrates a bivariate monomial λ1^p·λ2^q over the reference triangle
    /// with a rule; the exact value is p!·q!/(p+q+2)! times 2·|T̂| with
    /// |T̂| = 1/2 — classical Eulerian integral.
    fn rule_moment(rule: &[QuadNode], p: u32, q: u32) -> f64 {
        rule.iter().map(|n| n.weight * n.lambda[1].powi(p as i32) * n.lambda[2].powi(q as i32)).sum()
    }

    fn exact_moment(p: u64, q: u64) -> f64 {
        // ∫_T̂ ξ^p η^q / |T̂| = 2·p!q!/(p+q+2)!
        let fact = |k: u64| (1..=k).map(|v| v as f64).product::<f64>();
        2.0 * fact(p) * fact(q) / fact(p + q + 2)
    }

    #[test]
    fn edge_midpoint_rule_is_degree_2_exact() {
        for (p, q) in [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)] {
            let got = rule_moment(&EDGE_MIDPOINT_RULE, p, q);
            let want = exact_moment(p as u64, q as u64);
            assert!((got - want).abs() < 1e-15, "moment ({p},{q}): {got} vs {want}");
        }
    }

    #[test]
    fn degree5_rule_is_degree_5_exact() {
        let rule = degree5_rule();
        for p in 0..=5u32 {
            for q in 0..=(5 - p) {
                let got = rule_moment(&rule, p, q);
                let want = exact_moment(p as u64, q as u64);
                assert!((got - want).abs() < 1e-14, "moment ({p},{q}): {got} vs {want}");
            }
        }
    }

    #[test]
    fn subdivision_rule_counts_and_mean() {
        for m in [1u32, 2, 3, 7, 16] {
            let rule = SubdivisionRule::new(m);
            assert_eq!(rule.points.len(), (m * m) as usize);
            // Midpoint rule integrates affine functions exactly: mean of ξ
            // over the reference triangle is 1/3.
            let mean_xi: f64 =
                rule.points.iter().map(|p| p[0]).sum::<f64>() / (m * m) as f64;
            assert!((mean_xi - 1.0 / 3.0).abs() < 1e-13, "m={m} mean ξ {mean_xi}");
            for p in &rule.points {
                assert!(p[0] > 0.0 && p[1] > 0.0 && p[0] + p[1] < 1.0);
            }
        }
    }

    #[test]
    fn subtriangle_corners_tile_the_reference_triangle() {
        let rule = SubdivisionRule::new(5);
        let tris = rule.subtriangles();
        assert_eq!(tris.len(), 25);
        // Signed areas sum to |T̂| = 1/2.
        let total: f64 = tris
            .iter()
            .map(|t| {
                0.5 * ((t[1][0] - t[0][0]) * (t[2][1] - t[0][1])
                    - (t[2][0] - t[0][0]) * (t[1][1] - t[0][1]))
                    .abs()
            })
            .sum();
        assert!((total - 0.5).abs() < 1e-14);
        // Barycenters of the corner list match the point table.
        for (t, p) in tris.iter().zip(&rule.points) {
            let bx = (t[0][0] + t[1][0] + t[2][0]) / 3.0;
            let by = (t[0][1] + t[1][1] + t[2][1]) / 3.0;
            assert!((bx - p[0]).abs() < 1e-14 && (by - p[1]).abs() < 1e-14);
        }
    }

    #[test]
    fn adaptive_simpson_gaussian_moment() {
        // ∫_0^∞ s²e^{-s²/2} ds = √(π/2); integrand negligible beyond s = 12.
        let val = adaptive_simpson(&|s: f64| s * s * (-0.5 * s * s).exp(), 0.0, 12.0, 1e-12);
        let want = (std::f64::consts::PI / 2.0).sqrt();
        assert!((val - want).abs() < 1e-10, "{val} vs {want}");
    }
}
