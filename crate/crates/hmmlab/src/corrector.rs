//! Corrector-fluctuation pipeline: the scaled pairing of the solution
//! corrector with a test function, its first-order (linear) representation,
//! the intermediate kernel `L` with its variance functionals, and the fine
//! reference solution feeding the limiting variances.
//!
//! # The chain
//!
//! For a realization with stencil `A_ε` and homogenized stencil `A⁰`, load
//! `F = ⟨f, φ^{ij}⟩`, solutions `A_ε U^ε = F`, `A⁰ U⁰ = F`, dual
//! `A⁰ M = ⟨φ, φ^{ij}⟩`, the observable is
//!
//! ```text
//! value = ε^{−β/2} Σ_ij (U^ε − U⁰)_ij ⟨φ, φ^{ij}⟩.
//! ```
//!
//! First-order perturbation (`U^ε − U⁰ = −A_ε^{−1}(A_ε − A⁰)U⁰` paired with
//! `A⁰M`) gives the linear representation `−ε^{−β/2} M·(A_ε − A⁰)U⁰`, which
//! the stencil decomposition turns into discrete differences:
//!
//! ```text
//! M·(A − A⁰)U⁰ = Σ_ij M_ij d^Δ_ij U⁰_ij − Σ_s Σ_kl α^{Δ,s}_kl (D⁻_s M)_kl (D⁻_s U⁰)_kl,
//! ```
//!
//! with `αΔ, dΔ` the entrywise stencil differences (gradient parts cancel;
//! only patch integrals of the field survive). Unfolding those integrals
//! yields `M·(A − A⁰)U⁰ = −∫ q_ε L` with the piecewise-quadratic kernel
//!
//! ```text
//! L|_{K_δ} = r^{−2} [ Σ_{edges (a,b)} c_e λ_a λ_b − Σ_{vertices v} w_v λ_v ],
//! c_e = (D⁻_s M)(D⁻_s U⁰) at the edge anchor,   w_v = M_v U⁰_v,
//! ```
//!
//! supported on the union of the shrunken patches. Its `L²` norm (short-range)
//! or singular double integral (long-range) is the intermediate variance the
//! ensembles are tested against.

use crate::error::Result;
use crate::field::FieldSpec;
use crate::funcs::SmoothFn;
use crate::hmm::{assemble, edge_table, pair_with_hats, solve, AssemblyInputs, HmmSystem, PatchTable};
use crate::mesh::{ElemId, ElemKind, Mesh, DIRS};
use crate::quad::{degree5_rule, SubdivisionRule, EDGE_MIDPOINT_RULE};
use crate::singular::{right_isosceles_circumradius, unit_square_cells, Cell, SingularCells};

/// Zero-padded full-grid copy of an interior vector.
fn grid_extend(mesh: &Mesh, interior: &[f64]) -> Vec<f64> {
    let n = mesh.n();
    debug_assert_eq!(interior.len(), mesh.interior_count());
    let mut g = vec![0.0f64; mesh.node_count()];
    for j in 1..n {
        let src = (j - 1) * (n - 1);
        let dst = j * (n + 1) + 1;
        g[dst..dst + (n - 1)].copy_from_slice(&interior[src..src + (n - 1)]);
    }
    g
}

/// Value of the P1 interpolant of a full-grid vector at barycentric
/// coordinates inside an element.
#[inline]
fn grid_interp(mesh: &Mesh, grid: &[f64], id: ElemId, lambda: [f64; 3]) -> f64 {
    let e = mesh.element(id);
    (0..3).map(|m| lambda[m] * grid[mesh.grid_id(e.vertices[m])]).sum()
}

/// The scaled corrector pairing `scale · Σ (U^ε − U⁰)·⟨φ, hat⟩`.
pub fn corrector_value(scale: f64, u_eps: &[f64], u0: &[f64], phi_load: &[f64]) -> f64 {
    debug_assert_eq!(u_eps.len(), u0.len());
    debug_assert_eq!(u_eps.len(), phi_load.len());
    scale
        * u_eps
            .iter()
            .zip(u0)
            .zip(phi_load)
            .map(|((ue, uh), p)| (ue - uh) * p)
            .sum::<f64>()
}

/// Unscaled first-order representation `−M·(A_ε − A⁰)U⁰`, evaluated from the
/// stencil differences in difference form. Multiply by `ε^{−β/2}` for the
/// linear part of the observable.
pub fn linear_representation(
    mesh: &Mesh,
    sys_eps: &HmmSystem,
    sys0: &HmmSystem,
    dual: &[f64],
    u0: &[f64],
) -> f64 {
    let n = mesh.n();
    let mg = grid_extend(mesh, dual);
    let ug = grid_extend(mesh, u0);
    let stride = n + 1;
    let offsets = [1usize, stride, stride + 1];

    let mut edge_acc = 0.0;
    for s in DIRS {
        let off = offsets[s.idx()];
        let (i0, j0) = match s {
            crate::mesh::Dir::D1 => (1usize, 0usize),
            crate::mesh::Dir::D2 => (0, 1),
            crate::mesh::Dir::D3 => (1, 1),
        };
        let a_eps = &sys_eps.alpha[s.idx()];
        let a0 = &sys0.alpha[s.idx()];
        for j in j0..=n {
            for i in i0..=n {
                let g = j * stride + i;
                let adiff = a_eps[g] - a0[g];
                if adiff == 0.0 {
                    continue;
                }
                let gm = g - off;
                edge_acc += adiff * (mg[g] - mg[gm]) * (ug[g] - ug[gm]);
            }
        }
    }

    let mut node_acc = 0.0;
    for (iid, ((m, d_eps), d0)) in dual.iter().zip(&sys_eps.dvec).zip(&sys0.dvec).enumerate() {
        node_acc += m * (d_eps - d0) * u0[iid];
    }
    edge_acc - node_acc
}

/// The intermediate fluctuation kernel `L`, piecewise quadratic on the
/// shrunken patches (see module docs).
#[derive(Debug, Clone)]
pub struct KernelL {
    r: f64,
    inv_r2: f64,
    // (1−r)/3: the affine offset mapping patch barycentrics to element ones.
    c3: f64,
    kinds: Vec<ElemKind>,
    edge_c: Vec<[f64; 3]>,
    vert_w: Vec<[f64; 3]>,
}

impl KernelL {
    /// Builds the kernel from the dual and homogenized solutions.
    pub fn build(mesh: &Mesh, dual: &[f64], u0: &[f64], r: f64) -> Self {
        assert!(r > 0.0 && r <= 1.0, "shrink ratio must lie in (0,1], got {r}");
        let mg = grid_extend(mesh, dual);
        let ug = grid_extend(mesh, u0);
        let count = mesh.elements().len();
        let mut kinds = Vec::with_capacity(count);
        let mut edge_c = Vec::with_capacity(count);
        let mut vert_w = Vec::with_capacity(count);
        for elem in mesh.elements() {
            kinds.push(elem.kind);
            let table = edge_table(elem.kind);
            let mut ec = [0.0f64; 3];
            for (k, &(m, n, _s, anchor_local)) in table.iter().enumerate() {
                let anchor = elem.vertices[anchor_local];
                let other = elem.vertices[if anchor_local == m { n } else { m }];
                let ga = mesh.grid_id(anchor);
                let go = mesh.grid_id(other);
                ec[k] = (mg[ga] - mg[go]) * (ug[ga] - ug[go]);
            }
            edge_c.push(ec);
            vert_w.push(std::array::from_fn(|m| {
                let g = mesh.grid_id(elem.vertices[m]);
                mg[g] * ug[g]
            }));
        }
        Self { r, inv_r2: 1.0 / (r * r), c3: (1.0 - r) / 3.0, kinds, edge_c, vert_w }
    }

    /// Shrink ratio the kernel was built for.
    pub fn r(&self) -> f64 {
        self.r
    }

    /// Evaluates `L = L₁ + L₂` on element `idx` at patch reference
    /// coordinates `(ξ, η)` (patch barycentrics `(1−ξ−η, ξ, η)`).
    #[inline]
    pub fn eval(&self, idx: usize, xi: f64, eta: f64) -> f64 {
        let l = self.element_barycentrics(xi, eta);
        let pairs = edge_table(self.kinds[idx]);
        let ec = &self.edge_c[idx];
        let w = &self.vert_w[idx];
        let mut acc = 0.0;
        for k in 0..3 {
            let (m, n, _, _) = pairs[k];
            acc += ec[k] * l[m] * l[n];
        }
        acc -= w[0] * l[0] + w[1] * l[1] + w[2] * l[2];
        acc * self.inv_r2
    }

    #[inline]
    fn element_barycentrics(&self, xi: f64, eta: f64) -> [f64; 3] {
        let mu = [1.0 - xi - eta, xi, eta];
        [
            self.c3 + self.r * mu[0],
            self.c3 + self.r * mu[1],
            self.c3 + self.r * mu[2],
        ]
    }

    /// The edge component `L₁` alone: the sum of hat products weighted by
    /// `(D⁻_s M)(D⁻_s U⁰)`. Quadratically small in `h` (each difference is
    /// one mesh step of a converging interpolant), which is why the vertex
    /// part `L₂` dominates the kernel as the mesh refines.
    #[inline]
    pub fn eval_l1(&self, idx: usize, xi: f64, eta: f64) -> f64 {
        let l = self.element_barycentrics(xi, eta);
        let pairs = edge_table(self.kinds[idx]);
        let ec = &self.edge_c[idx];
        let mut acc = 0.0;
        for k in 0..3 {
            let (m, n, _, _) = pairs[k];
            acc += ec[k] * l[m] * l[n];
        }
        acc * self.inv_r2
    }

    /// The vertex component `L₂ = −(|K|/|K_δ|)·Π^h(m^h u⁰)` restricted to
    /// the patches; with `r = 1` it is minus the nodal interpolant of the
    /// product on all of the domain.
    #[inline]
    pub fn eval_l2(&self, idx: usize, xi: f64, eta: f64) -> f64 {
        let l = self.element_barycentrics(xi, eta);
        let w = &self.vert_w[idx];
        -(w[0] * l[0] + w[1] * l[1] + w[2] * l[2]) * self.inv_r2
    }

    /// Approximate `sup |L₁|` over the patch union, sampled on a
    /// `samples_per_edge` subdivision grid plus the patch corners (L₁ is
    /// quadratic per patch, so a modest grid resolves the maximum well
    /// enough to measure decay orders).
    pub fn sup_abs_l1(&self, samples_per_edge: u32) -> f64 {
        let sub = SubdivisionRule::new(samples_per_edge.max(1));
        let corners = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let mut sup = 0.0f64;
        for idx in 0..self.kinds.len() {
            for &[xi, eta] in sub.points.iter().chain(corners.iter()) {
                sup = sup.max(self.eval_l1(idx, xi, eta).abs());
            }
        }
        sup
    }

    /// `‖L‖²_{L²}` over the patch union; the integrand is quartic per patch,
    /// so the degree-5 rule is exact.
    pub fn l2_norm_sq(&self, mesh: &Mesh) -> f64 {
        let rule = degree5_rule();
        let patch_area = self.r * self.r * mesh.elem_area();
        let mut total = 0.0;
        for idx in 0..self.kinds.len() {
            let mut acc = 0.0;
            for node in &rule {
                let v = self.eval(idx, node.lambda[1], node.lambda[2]);
                acc += node.weight * v * v;
            }
            total += acc;
        }
        patch_area * total
    }

    /// `‖L‖²_{L²}` by a composite degree-5 rule on `k²` subtriangles per
    /// patch — also exact, so it must agree with [`Self::l2_norm_sq`] to
    /// rounding; used as a consistency oracle.
    pub fn l2_norm_sq_composite(&self, mesh: &Mesh, k: u32) -> f64 {
        let sub = SubdivisionRule::new(k);
        let tris = sub.subtriangles();
        let rule = degree5_rule();
        let cell_area = self.r * self.r * mesh.elem_area() / f64::from(k * k);
        let mut total = 0.0;
        for idx in 0..self.kinds.len() {
            let mut acc = 0.0;
            for tri in &tris {
                for node in &rule {
                    let xi = node.lambda[0] * tri[0][0]
                        + node.lambda[1] * tri[1][0]
                        + node.lambda[2] * tri[2][0];
                    let eta = node.lambda[0] * tri[0][1]
                        + node.lambda[1] * tri[1][1]
                        + node.lambda[2] * tri[2][1];
                    let v = self.eval(idx, xi, eta);
                    acc += node.weight * v * v;
                }
            }
            total += acc;
        }
        cell_area * total
    }

    /// `∫ q·L` over the patch union with the same midpoint subdivision used
    /// by assembly (`table.r` must equal the kernel's `r`). With `q` the
    /// field realization this reproduces [`linear_representation`] up to
    /// floating-point reassociation — the kernel-representation identity.
    pub fn integral_against(
        &self,
        mesh: &Mesh,
        table: &PatchTable,
        q: &impl Fn([f64; 2]) -> f64,
    ) -> f64 {
        assert_eq!(table.r.to_bits(), self.r.to_bits(), "patch table r mismatch");
        let scale = self.r * self.r * mesh.elem_area() / table.len() as f64;
        let mut total = 0.0;
        for idx in 0..self.kinds.len() {
            let p = mesh.patch_vertices(ElemId(idx), self.r);
            let e1 = [p[1][0] - p[0][0], p[1][1] - p[0][1]];
            let e2 = [p[2][0] - p[0][0], p[2][1] - p[0][1]];
            let mut acc = 0.0;
            for [xi, eta] in table.reference_points() {
                let x = [p[0][0] + xi * e1[0] + eta * e2[0], p[0][1] + xi * e1[1] + eta * e2[1]];
                acc += q(x) * self.eval(idx, xi, eta);
            }
            total += acc;
        }
        scale * total
    }

    /// Singular-quadrature cells for `𝒮(L)`: barycenter-sampled subtriangles
    /// of each patch, `k` subdivisions per patch edge.
    pub fn cells(&self, mesh: &Mesh, k: u32) -> SingularCells {
        let sub = SubdivisionRule::new(k);
        let legs = self.r * mesh.h() / f64::from(k);
        let radius = right_isosceles_circumradius(legs);
        let area = self.r * self.r * mesh.elem_area() / f64::from(k * k);
        let mut cells = Vec::with_capacity(self.kinds.len() * sub.points.len());
        for idx in 0..self.kinds.len() {
            let p = mesh.patch_vertices(ElemId(idx), self.r);
            let e1 = [p[1][0] - p[0][0], p[1][1] - p[0][1]];
            let e2 = [p[2][0] - p[0][0], p[2][1] - p[0][1]];
            for &[xi, eta] in &sub.points {
                let center =
                    [p[0][0] + xi * e1[0] + eta * e2[0], p[0][1] + xi * e1[1] + eta * e2[1]];
                cells.push(Cell {
                    center,
                    area,
                    value: self.eval(idx, xi, eta),
                    circumradius: radius,
                });
            }
        }
        SingularCells::new(cells)
    }
}

/// Intermediate (finite-ε representation) variance of the scaled observable:
/// `σ²‖L‖²` for short-range fields, `κ·𝒮(L)` for long-range ones
/// (`cell_subdiv` controls the singular quadrature resolution).
pub fn intermediate_variance(
    spec: &FieldSpec,
    mesh: &Mesh,
    kernel: &KernelL,
    cell_subdiv: u32,
) -> f64 {
    match spec {
        FieldSpec::Zero => 0.0,
        FieldSpec::Src { .. } => {
            spec.integrated_covariance().expect("short-range integrated covariance")
                * kernel.l2_norm_sq(mesh)
        }
        FieldSpec::Lrc { alpha, .. } => {
            spec.long_range_amplitude().expect("long-range amplitude")
                * kernel.cells(mesh, cell_subdiv).s_integral(*alpha)
        }
    }
}

/// Fine-mesh homogenized reference: `u₀`, the dual `m`, and the variance
/// functionals of the product `u₀·m` entering the limiting fluctuations.
#[derive(Debug, Clone)]
pub struct ReferenceSolution {
    mesh: Mesh,
    /// Interior values of the homogenized primal solution.
    pub u0: Vec<f64>,
    /// Interior values of the homogenized dual (Green pairing with φ).
    pub dual: Vec<f64>,
    /// `‖u₀·m‖²_{L²}` of the P1 interpolants (degree-5, exact).
    pub product_l2_sq: f64,
    cells: SingularCells,
}

/// Builds the reference on an `n_ref` mesh (homogenized assembly, full
/// patches).
pub fn reference_solution(
    n_ref: usize,
    q0: &SmoothFn,
    rhs: &SmoothFn,
    phi: &SmoothFn,
    cg_tol: f64,
) -> Result<ReferenceSolution> {
    let mesh = Mesh::new(n_ref)?;
    let inputs = AssemblyInputs { mesh: &mesh, q0, field: None, rhs, r: 1.0, subdiv: 4 };
    let sys = assemble(&inputs)?;
    let u0 = solve(&sys, &mesh, &sys.load, cg_tol)?;
    let phi_load = pair_with_hats(&mesh, &|x| phi.eval(x));
    let dual = solve(&sys, &mesh, &phi_load, cg_tol)?;

    let ug = grid_extend(&mesh, &u0);
    let mg = grid_extend(&mesh, &dual);
    let rule = degree5_rule();
    let mut p2 = 0.0;
    for idx in 0..mesh.elements().len() {
        let id = ElemId(idx);
        for node in &rule {
            let prod = grid_interp(&mesh, &ug, id, node.lambda)
                * grid_interp(&mesh, &mg, id, node.lambda);
            p2 += node.weight * prod * prod;
        }
    }
    p2 *= mesh.elem_area();

    let cells = unit_square_cells(n_ref, &|x| {
        let id = mesh.element_at(x);
        let lambda = mesh.barycentric(id, x);
        grid_interp(&mesh, &ug, id, lambda) * grid_interp(&mesh, &mg, id, lambda)
    });

    Ok(ReferenceSolution { mesh, u0, dual, product_l2_sq: p2, cells })
}

impl ReferenceSolution {
    /// The reference mesh.
    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    /// `𝒮(u₀·m)` at exponent `alpha`.
    pub fn s_functional(&self, alpha: f64) -> f64 {
        self.cells.s_integral(alpha)
    }

    /// Limiting variance of the scaled observable for shrink ratio `r`:
    /// short-range fluctuations amplify by `r^{−2}`, long-range ones are
    /// `r`-independent.
    pub fn limit_variance(&self, spec: &FieldSpec, r: f64) -> f64 {
        match spec {
            FieldSpec::Zero => 0.0,
            FieldSpec::Src { .. } => {
                spec.integrated_covariance().expect("short-range integrated covariance")
                    * self.product_l2_sq
                    / (r * r)
            }
            FieldSpec::Lrc { alpha, .. } => {
                spec.long_range_amplitude().expect("long-range amplitude")
                    * self.s_functional(*alpha)
            }
        }
    }
}

/// H¹ error split between a fine interpolant and a coarse one on a nested
/// mesh pair (`coarse.n()` divides `fine.n()`, same diagonal orientation, so
/// every fine element lies inside exactly one coarse element).
#[derive(Debug, Clone, Copy)]
pub struct H1Error {
    /// `|u_f − u_c|²_{H¹}` (seminorm part).
    pub seminorm_sq: f64,
    /// `‖u_f − u_c‖²_{L²}`.
    pub l2_sq: f64,
}

impl H1Error {
    /// Full H¹ norm of the difference.
    pub fn total(&self) -> f64 {
        (self.seminorm_sq + self.l2_sq).sqrt()
    }
}

/// Computes the exact H¹ seminorm and L² errors between nested P1
/// interpolants (both are linear on each fine element, so the 3-point rule
/// and per-element constant gradients are exact).
pub fn h1_error_nested(
    fine: &Mesh,
    u_fine: &[f64],
    coarse: &Mesh,
    u_coarse: &[f64],
) -> H1Error {
    assert!(
        fine.n() % coarse.n() == 0,
        "meshes must be nested: {} does not divide {}",
        coarse.n(),
        fine.n()
    );
    let ufg = grid_extend(fine, u_fine);
    let ucg = grid_extend(coarse, u_coarse);
    let mut seminorm_sq = 0.0;
    let mut l2_sq = 0.0;
    for idx in 0..fine.elements().len() {
        let id = ElemId(idx);
        let gf = fine.interpolant_gradient(u_fine, id);
        let cid = coarse.element_at(fine.barycenter(id));
        let gc = coarse.interpolant_gradient(u_coarse, cid);
        let dx = gf[0] - gc[0];
        let dy = gf[1] - gc[1];
        seminorm_sq += fine.elem_area() * (dx * dx + dy * dy);

        let v = fine.vertex_coords(id);
        for node in &EDGE_MIDPOINT_RULE {
            let x = [
                node.lambda[0] * v[0][0] + node.lambda[1] * v[1][0] + node.lambda[2] * v[2][0],
                node.lambda[0] * v[0][1] + node.lambda[1] * v[1][1] + node.lambda[2] * v[2][1],
            ];
            let vf = grid_interp(fine, &ufg, id, node.lambda);
            let vc = grid_interp(coarse, &ucg, cid, coarse.barycentric(cid, x));
            l2_sq += fine.elem_area() * node.weight * (vf - vc) * (vf - vc);
        }
    }
    H1Error { seminorm_sq, l2_sq }
}
