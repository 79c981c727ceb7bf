//! Quadrature for the singular double integral
//! `𝒮(g) = ∬ g(x) g(y) |x − y|^{−α} dx dy`, `α ∈ (0,2)`,
//! which governs long-range fluctuation variances.
//!
//! The domain is partitioned into small cells on which `g` is sampled at the
//! center. Off-diagonal cell pairs use the center-to-center distance; the
//! diagonal (self) term, where the kernel is singular but integrable, uses
//! the closed form for a concentric disc scaled by the cell's area fraction:
//!
//! ```text
//! ∬_{C×C} |x−y|^{−α} ≈ |C|² · 2 ρ^{−α} / (2 − α),   ρ = circumradius of C,
//! ```
//!
//! obtained from `∫_{disc(ρ)} |y|^{−α} dy = 2π ρ^{2−α}/(2−α)` and the area
//! fraction `|C|/(πρ²)`. Summation is sequential and deterministic.

/// One quadrature cell: a small region with its sampled value.
#[derive(Debug, Clone, Copy)]
pub struct Cell {
    /// Cell center (distance reference point).
    pub center: [f64; 2],
    /// Cell area.
    pub area: f64,
    /// Sampled value of `g` at the center.
    pub value: f64,
    /// Circumradius of the cell (self-term length scale).
    pub circumradius: f64,
}

/// Circumradius of a square cell with side `t` (half the diagonal).
pub fn square_circumradius(t: f64) -> f64 {
    t * std::f64::consts::FRAC_1_SQRT_2
}

/// Circumradius of a right-isosceles triangle with legs `u` (half the
/// hypotenuse; the circumcenter of a right triangle is the hypotenuse
/// midpoint).
pub fn right_isosceles_circumradius(u: f64) -> f64 {
    u * std::f64::consts::FRAC_1_SQRT_2
}

/// Prepared cell set for evaluating `𝒮` at one or more exponents.
#[derive(Debug, Clone, Default)]
pub struct SingularCells {
    centers: Vec<[f64; 2]>,
    masses: Vec<f64>,
    // value² · area² · 2, so the self term is sq · ρ^{−α} / (2−α).
    sq: Vec<f64>,
    radii: Vec<f64>,
}

impl SingularCells {
    /// Collects cells in iteration order (the order fixes the deterministic
    /// summation order).
    pub fn new(cells: impl IntoIterator<Item = Cell>) -> Self {
        let mut out = Self::default();
        for c in cells {
            debug_assert!(c.area > 0.0 && c.circumradius > 0.0);
            out.centers.push(c.center);
            out.masses.push(c.value * c.area);
            out.sq.push(2.0 * c.value * c.value * c.area * c.area);
            out.radii.push(c.circumradius);
        }
        out
    }

    /// Number of cells.
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    /// Whether the set is empty.
    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Total mass `Σ value·area` (≈ `∫g`); handy for sanity checks.
    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// Evaluates `𝒮(g)` at exponent `alpha ∈ (0,2)`.
    pub fn s_integral(&self, alpha: f64) -> f64 {
        assert!(alpha > 0.0 && alpha < 2.0, "alpha must lie in (0,2), got {alpha}");
        let n = self.len();
        let mut self_sum = 0.0;
        for k in 0..n {
            self_sum += self.sq[k] * self.radii[k].powf(-alpha) / (2.0 - alpha);
        }
        // Off-diagonal pairs, counted once and doubled; α = 1 avoids powf in
        // the O(n²) loop.
        let mut pair_sum = 0.0;
        if alpha == 1.0 {
            for i in 0..n {
                let ci = self.centers[i];
                let mi = self.masses[i];
                let mut row = 0.0;
                for j in i + 1..n {
                    let dx = ci[0] - self.centers[j][0];
                    let dy = ci[1] - self.centers[j][1];
                    row += self.masses[j] / (dx * dx + dy * dy).sqrt();
                }
                pair_sum += mi * row;
            }
        } else {
            let half = -0.5 * alpha;
            for i in 0..n {
                let ci = self.centers[i];
                let mi = self.masses[i];
                let mut row = 0.0;
                for j in i + 1..n {
                    let dx = ci[0] - self.centers[j][0];
                    let dy = ci[1] - self.centers[j][1];
                    row += self.masses[j] * (dx * dx + dy * dy).powf(half);
                }
                pair_sum += mi * row;
            }
        }
        2.0 * pair_sum + self_sum
    }
}

/// Builds an `n × n` square-cell partition of the unit square with `g`
/// sampled at cell centers.
pub fn unit_square_cells(n: usize, g: &impl Fn([f64; 2]) -> f64) -> SingularCells {
    assert!(n >= 1);
    let t = 1.0 / n as f64;
    let area = t * t;
    let radius = square_circumradius(t);
    let mut cells = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            let center = [(i as f64 + 0.5) * t, (j as f64 + 0.5) * t];
            cells.push(Cell { center, area, value: g(center), circumradius: radius });
        }
    }
    SingularCells::new(cells)
}
