//! Multiscale stencil assembly, structure verification, matrix-free apply,
//! and the conjugate-gradient solver.
//!
//! The bilinear form of the scheme is, per element `K` with patch `K_δ`,
//!
//! ```text
//! A(u,v) = Σ_K |K| ( ∇u·∇v + ⨍_{K_δ} (q0 + q_ε) u v ),
//! ```
//!
//! where `⨍` is the patch average. Gradients of P1 hats are constant per
//! element, so the gradient terms are exact and independent of the shrink
//! ratio `r = δ/h`; the potential terms are integrated by the midpoint rule
//! on `m²` congruent subtriangles of each patch, with `m` chosen so the
//! subcell diameter stays below `ε/n_q`.
//!
//! # Stencil storage
//!
//! The matrix couples a node only to itself and its six stencil neighbors
//! `d^{±s}`. Each mesh edge `(kl, d^{−s}kl)` is *anchored* at its upper node
//! `kl`, and the assembled entry `A_{kl, d^{−s}kl}` is stored in `alpha[s]`
//! at the anchor's full-grid index. Anchors include boundary nodes (the
//! entries pair a boundary hat with an interior one); those ghost entries
//! are required both by the row identity (P3), which sums the full stencil
//! row including boundary columns, and by the difference form of the apply:
//!
//! ```text
//! (A V)_{ij} = Σ_s [ w_s(d^{+s}ij) − w_s(ij) ] + d_{ij} V_{ij},
//! w_s(kl) = α^s_{kl} (V_{kl} − V_{d^{−s}kl}),   V extended by zero.
//! ```
//!
//! `d_{ij} = Σ_K |K| ⨍_{K_δ} (q0+q_ε) φ^{ij}` is the zeroth-order patch
//! integral entering (P3): `A_{ij,ij} = d_{ij} − Σ_s (α^s_{d^{+s}ij} + α^s_{ij})`.

use crate::error::{Error, Result};
use crate::field::FieldRealization;
use crate::funcs::SmoothFn;
use crate::mesh::{Dir, ElemId, ElemKind, Mesh, Node, DIRS};
use crate::quad::{SubdivisionRule, EDGE_MIDPOINT_RULE};
use std::fmt;

/// Quadrature policy for the patch integrals of the potential terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    /// Points per correlation length: the subcell diameter must not exceed
    /// `ε/n_q` when a field is present. Default 4.
    pub n_q: u32,
    /// Lower bound on subdivisions per patch edge (smooth integrands still
    /// get a consistent patch average). Default 4.
    pub min_subdiv: u32,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { n_q: 4, min_subdiv: 4 }
    }
}

impl QuadratureSpec {
    /// Subdivisions per patch edge for patch diameter `δ` and field scale
    /// `eps` (`None` for deterministic integrands). A patch subtriangle has
    /// diameter `√2·δ/m`, so `m = ⌈√2·n_q·δ/ε⌉` bounds it by `ε/n_q`.
    pub fn subdivisions(&self, eps: Option<f64>, delta: f64) -> u32 {
        let base = match eps {
            Some(e) => (std::f64::consts::SQRT_2 * f64::from(self.n_q) * delta / e).ceil() as u32,
            None => 0,
        };
        base.max(self.min_subdiv).max(1)
    }
}

/// Everything `assemble` needs; bundled so structure verification can rerun
/// the integrals independently.
#[derive(Clone, Copy)]
pub struct AssemblyInputs<'a> {
    /// Triangulation.
    pub mesh: &'a Mesh,
    /// Smooth potential `q0`.
    pub q0: &'a SmoothFn,
    /// Random potential realization, or `None` for the homogenized flavor.
    pub field: Option<&'a FieldRealization>,
    /// Right-hand side `f` of the PDE (load vector `⟨f, φ^{ij}⟩`).
    pub rhs: &'a SmoothFn,
    /// Patch shrink ratio `r = δ/h ∈ (0,1]`.
    pub r: f64,
    /// Subdivisions per patch edge for the potential quadrature.
    pub subdiv: u32,
}

/// Assembled stencil system.
#[derive(Debug, Clone)]
pub struct HmmSystem {
    /// Cells per side of the mesh the system was assembled on.
    pub n: usize,
    /// Patch shrink ratio.
    pub r: f64,
    /// Edge entries `α^s_{kl} = A_{kl, d^{−s}kl}` anchored at the upper node,
    /// stored over the full `(N+1)²` grid (ghost anchors included); entries
    /// of edges never touching the interior are zero.
    pub alpha: [Vec<f64>; 3],
    /// Diagonal entries `A_{ij,ij}` over interior nodes.
    pub diag: Vec<f64>,
    /// Zeroth-order patch integrals `d_{ij}` over interior nodes.
    pub dvec: Vec<f64>,
    /// Load vector `⟨f, φ^{ij}⟩` over interior nodes.
    pub load: Vec<f64>,
}

/// Precomputed quadrature table for patch integrals: midpoints of the `m²`
/// subtriangles in patch reference coordinates, with the element barycentric
/// values attached.
///
/// The patch is the element shrunk by `r` about the shared barycenter, so a
/// point with *patch* barycentrics `μ` has *element* barycentrics
/// `λ = (1−r)/3 + r·μ` — affine, exact.
#[derive(Debug, Clone)]
pub struct PatchTable {
    /// Shrink ratio the element barycentrics were baked for.
    pub r: f64,
    /// Subdivisions per edge.
    pub subdiv: u32,
    points: Vec<PatchPoint>,
}

#[derive(Debug, Clone, Copy)]
struct PatchPoint {
    xi: f64,
    eta: f64,
    l: [f64; 3],
}

/// Accumulated patch quadrature sums for one element.
#[derive(Debug, Clone, Copy)]
pub struct PatchSums {
    /// `Σ_t q(x_t)·λ_m(x_t)·λ_n(x_t)` for `(m,n)` in the upper-triangular
    /// order `(0,0),(0,1),(0,2),(1,1),(1,2),(2,2)`.
    pub s2: [f64; 6],
    /// `Σ_t q(x_t)·λ_m(x_t)`.
    pub s1: [f64; 3],
    /// Minimum of `q` over the quadrature points (positivity guard).
    pub min_q: f64,
}

impl PatchTable {
    /// Builds the table for shrink ratio `r` and `subdiv` subdivisions.
    pub fn new(r: f64, subdiv: u32) -> Self {
        let rule = SubdivisionRule::new(subdiv);
        let c = (1.0 - r) / 3.0;
        let points = rule
            .points
            .iter()
            .map(|&[xi, eta]| PatchPoint {
                xi,
                eta,
                l: [c + r * (1.0 - xi - eta), c + r * xi, c + r * eta],
            })
            .collect();
        Self { r, subdiv, points }
    }

    /// Number of quadrature points per patch.
    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// Whether the table is empty (never true for a valid `subdiv`).
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Quadrature points in patch reference coordinates `(ξ, η)`, in
    /// summation order. Consumers that must reproduce the assembly sums
    /// exactly (e.g. the kernel-representation identity) map these to
    /// physical points with the same `p0 + ξ·e1 + η·e2` arithmetic.
    pub fn reference_points(&self) -> impl Iterator<Item = [f64; 2]> + '_ {
        self.points.iter().map(|p| [p.xi, p.eta])
    }

    /// Accumulates the quadrature sums over one patch with corner `p0` and
    /// edge vectors `e1 = P1−P0`, `e2 = P2−P0`.
    #[inline]
    pub fn sums(&self, p0: [f64; 2], e1: [f64; 2], e2: [f64; 2], q: &impl Fn([f64; 2]) -> f64)
        -> PatchSums {
        let mut s2 = [0.0f64; 6];
        let mut s1 = [0.0f64; 3];
        let mut min_q = f64::INFINITY;
        for p in &self.points {
            let x = [p0[0] + p.xi * e1[0] + p.eta * e2[0], p0[1] + p.xi * e1[1] + p.eta * e2[1]];
            let qv = q(x);
            if qv < min_q {
                min_q = qv;
            }
            let [l0, l1, l2] = p.l;
            let t0 = qv * l0;
            let t1 = qv * l1;
            let t2 = qv * l2;
            s2[0] += t0 * l0;
            s2[1] += t0 * l1;
            s2[2] += t0 * l2;
            s2[3] += t1 * l1;
            s2[4] += t1 * l2;
            s2[5] += t2 * l2;
            s1[0] += t0;
            s1[1] += t1;
            s1[2] += t2;
        }
        PatchSums { s2, s1, min_q }
    }
}

/// Upper-triangular index of the local pair `(m,n)`, `m ≤ n`.
#[inline]
fn tri_index(m: usize, n: usize) -> usize {
    debug_assert!(m <= n && n < 3);
    match (m, n) {
        (0, 0) => 0,
        (0, 1) => 1,
        (0, 2) => 2,
        (1, 1) => 3,
        (1, 2) => 4,
        _ => 5,
    }
}

/// Edge table per element kind: local vertex pair `(m, n)`, stencil
/// direction, and which of the pair is the anchor (upper node).
/// Lower triangles: (v0,v1) is an e₁ edge anchored at v1; (v1,v2) an e₂ edge
/// anchored at v2; (v0,v2) the diagonal anchored at v2. Upper triangles:
/// (v0,v2) e₂ @ v2; (v2,v1) e₁ @ v1; (v0,v1) diagonal @ v1.
pub(crate) fn edge_table(kind: ElemKind) -> [(usize, usize, Dir, usize); 3] {
    match kind {
        ElemKind::Lower => [(0, 1, Dir::D1, 1), (1, 2, Dir::D2, 2), (0, 2, Dir::D3, 2)],
        ElemKind::Upper => [(0, 2, Dir::D2, 2), (2, 1, Dir::D1, 1), (0, 1, Dir::D3, 1)],
    }
}

/// Exact gradient-part entries `|K|·(∇λ_m·∇λ_n)` in upper-triangular order
/// (dimensionless: the `1/h²` of the gradients cancels `|K| = h²/2`).
fn gradient_entries(kind: ElemKind) -> [f64; 6] {
    match kind {
        // g0=(−1,0)/h, g1=(1,−1)/h, g2=(0,1)/h
        ElemKind::Lower => [0.5, -0.5, 0.0, 1.0, -0.5, 0.5],
        // g0=(0,−1)/h, g1=(1,0)/h, g2=(−1,1)/h
        ElemKind::Upper => [0.5, 0.0, -0.5, 0.5, -0.5, 1.0],
    }
}

/// Assembles the stencil system.
///
/// With `field = None` the homogenized system is produced; the code path is
/// shared, so a zero-amplitude field produces bit-identical arrays. The
/// positivity guard requires `q0 + q_ε > 0` at every quadrature point when a
/// field is present (the (S2)/(L2) amplitude condition), and `q0 ≥ 0`
/// otherwise (coercivity of the deterministic form).
pub fn assemble(inputs: &AssemblyInputs) -> Result<HmmSystem> {
    let mesh = inputs.mesh;
    if !(inputs.r > 0.0 && inputs.r <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "patch ratio r must lie in (0,1], got {}",
            inputs.r
        )));
    }
    let table = PatchTable::new(inputs.r, inputs.subdiv);
    let mut sys = HmmSystem {
        n: mesh.n(),
        r: inputs.r,
        alpha: [
            vec![0.0; mesh.node_count()],
            vec![0.0; mesh.node_count()],
            vec![0.0; mesh.node_count()],
        ],
        diag: vec![0.0; mesh.interior_count()],
        dvec: vec![0.0; mesh.interior_count()],
        load: vec![0.0; mesh.interior_count()],
    };

    let pot_scale = mesh.elem_area() / (table.len() as f64);
    let mut min_q = f64::INFINITY;
    let mut min_elem = 0usize;

    for (idx, elem) in mesh.elements().iter().enumerate() {
        let id = ElemId(idx);
        let p = mesh.patch_vertices(id, inputs.r);
        let p0 = p[0];
        let e1 = [p[1][0] - p[0][0], p[1][1] - p[0][1]];
        let e2 = [p[2][0] - p[0][0], p[2][1] - p[0][1]];
        let q0 = inputs.q0;
        let sums = match inputs.field {
            Some(fr) => table.sums(p0, e1, e2, &|x| q0.eval(x) + fr.eval(x)),
            None => table.sums(p0, e1, e2, &|x| q0.eval(x)),
        };
        if sums.min_q < min_q {
            min_q = sums.min_q;
            min_elem = idx;
        }

        let grad = gradient_entries(elem.kind);
        // Diagonal and zeroth-order contributions at interior vertices.
        for m in 0..3 {
            if let Some(iid) = mesh.interior_id(elem.vertices[m]) {
                sys.diag[iid] += grad[tri_index(m, m)] + pot_scale * sums.s2[tri_index(m, m)];
                sys.dvec[iid] += pot_scale * sums.s1[m];
            }
        }
        // Edge contributions anchored at the upper node; ghost anchors are
        // kept whenever either endpoint is interior.
        for (m, n, s, anchor_local) in edge_table(elem.kind) {
            let anchor = elem.vertices[anchor_local];
            let other = elem.vertices[if anchor_local == m { n } else { m }];
            if mesh.is_interior(anchor) || mesh.is_interior(other) {
                let (lo, hi) = if m <= n { (m, n) } else { (n, m) };
                let entry = grad[tri_index(lo, hi)] + pot_scale * sums.s2[tri_index(lo, hi)];
                sys.alpha[s.idx()][mesh.grid_id(anchor)] += entry;
            }
        }
    }

    let strict = inputs.field.is_some();
    if (strict && !(min_q > 0.0)) || (!strict && !(min_q >= 0.0)) {
        return Err(Error::AssemblyFailure(format!(
            "potential q0 + q_eps reached {min_q:.6e} at a quadrature point of element \
             {min_elem} (must be {} 0)",
            if strict { "strictly above" } else { "at least" }
        )));
    }

    sys.load = pair_with_hats(mesh, &|x| inputs.rhs.eval(x));
    Ok(sys)
}

/// Pairs a function against every interior hat with the 3-point
/// edge-midpoint rule (exact to degree 2): returns `(⟨g, φ^{ij}⟩)_{ij∈ℐ}`.
pub fn pair_with_hats(mesh: &Mesh, g: &impl Fn([f64; 2]) -> f64) -> Vec<f64> {
    let mut out = vec![0.0; mesh.interior_count()];
    let area = mesh.elem_area();
    for (idx, elem) in mesh.elements().iter().enumerate() {
        let v = mesh.vertex_coords(ElemId(idx));
        for node in &EDGE_MIDPOINT_RULE {
            let x = [
                node.lambda[0] * v[0][0] + node.lambda[1] * v[1][0] + node.lambda[2] * v[2][0],
                node.lambda[0] * v[0][1] + node.lambda[1] * v[1][1] + node.lambda[2] * v[2][1],
            ];
            let gv = area * node.weight * g(x);
            for m in 0..3 {
                if node.lambda[m] != 0.0 {
                    if let Some(iid) = mesh.interior_id(elem.vertices[m]) {
                        out[iid] += gv * node.lambda[m];
                    }
                }
            }
        }
    }
    out
}

/// Matrix-free application of the stencil in difference form (see module
/// docs); `v` is interior-indexed and implicitly zero on the boundary.
pub fn stencil_apply(sys: &HmmSystem, mesh: &Mesh, v: &[f64]) -> Vec<f64> {
    let n = mesh.n();
    debug_assert_eq!(v.len(), mesh.interior_count());
    let stride = n + 1;
    // Zero-padded full-grid copy removes all boundary branches.
    let mut vg = vec![0.0f64; mesh.node_count()];
    for j in 1..n {
        let src = (j - 1) * (n - 1);
        let dst = j * stride + 1;
        vg[dst..dst + (n - 1)].copy_from_slice(&v[src..src + (n - 1)]);
    }
    let offsets = [1usize, stride, stride + 1];
    let mut out = vec![0.0f64; v.len()];
    for j in 1..n {
        for i in 1..n {
            let g = j * stride + i;
            let vc = vg[g];
            let mut acc = sys.dvec[(j - 1) * (n - 1) + (i - 1)] * vc;
            for s in 0..3 {
                let gp = g + offsets[s];
                let gm = g - offsets[s];
                let w_plus = sys.alpha[s][gp] * (vg[gp] - vc);
                let w_minus = sys.alpha[s][g] * (vc - vg[gm]);
                acc += w_plus - w_minus;
            }
            out[(j - 1) * (n - 1) + (i - 1)] = acc;
        }
    }
    out
}

/// Expands the stencil representation into a dense interior matrix
/// (row-major, `dim²`); intended for small meshes in tests and verification.
pub fn expand_dense(sys: &HmmSystem, mesh: &Mesh) -> Vec<f64> {
    let dim = mesh.interior_count();
    let mut a = vec![0.0; dim * dim];
    for node in mesh.interior_nodes() {
        let row = mesh.interior_id(node).expect("interior iteration");
        a[row * dim + row] = sys.diag[row];
        for s in DIRS {
            if let Some(up) = mesh.shift(node, s, true) {
                if let Some(col) = mesh.interior_id(up) {
                    a[row * dim + col] = sys.alpha[s.idx()][mesh.grid_id(up)];
                }
            }
            if let Some(dn) = mesh.shift(node, s, false) {
                if let Some(col) = mesh.interior_id(dn) {
                    a[row * dim + col] = sys.alpha[s.idx()][mesh.grid_id(node)];
                }
            }
        }
    }
    a
}

/// Structure-verification report: independent recomputation residuals,
/// normalized by the largest stencil magnitude.
#[derive(Debug, Clone)]
pub struct StructureReport {
    /// Largest magnitude among stored entries (normalization scale).
    pub scale: f64,
    /// Max relative deviation of stored edge entries from an independent
    /// node-pair-major recomputation (symmetry + scatter correctness, (P1)).
    pub p1_max_rel: f64,
    /// Number of anti-diagonal node pairs sharing a support element
    /// (sparsity pattern violations, (P2); must be 0).
    pub p2_violations: usize,
    /// Max relative residual of the row identity
    /// `diag = d − Σ_s(α^{+s} + α^{−s})` ((P3)).
    pub p3_max_rel: f64,
    /// Max relative deviation of `d_{ij}` from an independent node-major
    /// recomputation.
    pub d_max_rel: f64,
}

impl StructureReport {
    /// All residuals below `tol` and no sparsity violations.
    pub fn ok(&self, tol: f64) -> bool {
        self.p1_max_rel < tol && self.p2_violations == 0 && self.p3_max_rel < tol
            && self.d_max_rel < tol
    }
}

impl fmt::Display for StructureReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "stencil structure report (scale {:.6e})", self.scale)?;
        writeln!(f, "  (P1) edge-entry recomputation max rel: {:.3e}", self.p1_max_rel)?;
        writeln!(f, "  (P2) sparsity-pattern violations:      {}", self.p2_violations)?;
        writeln!(f, "  (P3) row-identity max rel:             {:.3e}", self.p3_max_rel)?;
        write!(f, "  d-vector recomputation max rel:        {:.3e}", self.d_max_rel)
    }
}

/// Verifies the structural properties of an assembled system by independent
/// recomputation (node-pair-major, fresh quadrature accumulation):
/// (P1) every stored edge entry matches the direct integral over the shared
/// support elements; (P2) anti-diagonal neighbors share no support element;
/// (P3) the row identity holds; and the zeroth-order vector `d` matches a
/// node-major recomputation.
pub fn verify_structure(sys: &HmmSystem, inputs: &AssemblyInputs) -> StructureReport {
    let mesh = inputs.mesh;
    let table = PatchTable::new(inputs.r, inputs.subdiv);
    let pot_scale = mesh.elem_area() / (table.len() as f64);

    // Node -> incident elements index (includes boundary nodes).
    let mut incident: Vec<Vec<ElemId>> = vec![Vec::new(); mesh.node_count()];
    for (idx, elem) in mesh.elements().iter().enumerate() {
        for vtx in elem.vertices {
            incident[mesh.grid_id(vtx)].push(ElemId(idx));
        }
    }

    let patch_sums = |id: ElemId| -> PatchSums {
        let p = mesh.patch_vertices(id, inputs.r);
        let p0 = p[0];
        let e1 = [p[1][0] - p[0][0], p[1][1] - p[0][1]];
        let e2 = [p[2][0] - p[0][0], p[2][1] - p[0][1]];
        let q0 = inputs.q0;
        match inputs.field {
            Some(fr) => table.sums(p0, e1, e2, &|x| q0.eval(x) + fr.eval(x)),
            None => table.sums(p0, e1, e2, &|x| q0.eval(x)),
        }
    };

    let scale = sys
        .alpha
        .iter()
        .flat_map(|a| a.iter())
        .chain(sys.diag.iter())
        .chain(sys.dvec.iter())
        .fold(0.0f64, |acc, &v| acc.max(v.abs()))
        .max(f64::MIN_POSITIVE);

    // (P1): recompute every stored/needed edge entry independently.
    let mut p1_max = 0.0f64;
    let n = mesh.n();
    for j in 0..=n {
        for i in 0..=n {
            let kl = Node::new(i, j);
            for s in DIRS {
                let Some(other) = mesh.shift(kl, s, false) else { continue };
                let needed = mesh.is_interior(kl) || mesh.is_interior(other);
                let stored = sys.alpha[s.idx()][mesh.grid_id(kl)];
                if !needed {
                    // Never-touched ghost slots must be exactly zero.
                    if stored != 0.0 {
                        p1_max = f64::INFINITY;
                    }
                    continue;
                }
                let mut recomputed = 0.0;
                for &eid in &incident[mesh.grid_id(kl)] {
                    let elem = mesh.element(eid);
                    let (Some(m), Some(nn)) = (
                        elem.vertices.iter().position(|&v| v == kl),
                        elem.vertices.iter().position(|&v| v == other),
                    ) else {
                        continue;
                    };
                    let sums = patch_sums(eid);
                    let (lo, hi) = if m <= nn { (m, nn) } else { (nn, m) };
                    recomputed += gradient_entries(elem.kind)[tri_index(lo, hi)]
                        + pot_scale * sums.s2[tri_index(lo, hi)];
                }
                p1_max = p1_max.max((stored - recomputed).abs() / scale);
            }
        }
    }

    // (P2): anti-diagonal pairs must share no support element.
    let mut p2_violations = 0usize;
    for node in mesh.interior_nodes() {
        if node.i + 1 <= n && node.j >= 1 {
            let anti = Node::new(node.i + 1, node.j - 1);
            let gid = mesh.grid_id(anti);
            let shared = incident[mesh.grid_id(node)]
                .iter()
                .filter(|e| incident[gid].contains(e))
                .count();
            p2_violations += usize::from(shared != 0);
        }
    }

    // (P3) and the d recomputation.
    let mut p3_max = 0.0f64;
    let mut d_max = 0.0f64;
    for node in mesh.interior_nodes() {
        let iid = mesh.interior_id(node).expect("interior");
        let mut alpha_sum = 0.0;
        for s in DIRS {
            let up = mesh.shift(node, s, true).expect("d+ of interior is on-grid");
            alpha_sum += sys.alpha[s.idx()][mesh.grid_id(up)] + sys.alpha[s.idx()][mesh.grid_id(node)];
        }
        p3_max = p3_max.max((sys.diag[iid] + alpha_sum - sys.dvec[iid]).abs() / scale);

        let mut d_recomputed = 0.0;
        for eid in mesh.hexagon(node) {
            let elem = mesh.element(eid);
            let m = elem.vertices.iter().position(|&v| v == node).expect("hexagon vertex");
            d_recomputed += pot_scale * patch_sums(eid).s1[m];
        }
        d_max = d_max.max((sys.dvec[iid] - d_recomputed).abs() / scale);
    }

    StructureReport {
        scale,
        p1_max_rel: p1_max,
        p2_violations,
        p3_max_rel: p3_max,
        d_max_rel: d_max,
    }
}

/// Choice of preconditioner for the conjugate-gradient solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Preconditioner {
    /// Plain CG (the default).
    #[default]
    None,
    /// Diagonal (Jacobi) scaling.
    Jacobi,
}

/// Conjugate-gradient solve of `A x = rhs` with the matrix-free stencil
/// apply, unpreconditioned; converges when `‖r‖ ≤ tol·‖rhs‖`.
pub fn solve(sys: &HmmSystem, mesh: &Mesh, rhs: &[f64], tol: f64) -> Result<Vec<f64>> {
    solve_preconditioned(sys, mesh, rhs, tol, Preconditioner::None)
}

/// Conjugate-gradient solve with an optional Jacobi preconditioner.
pub fn solve_preconditioned(
    sys: &HmmSystem,
    mesh: &Mesh,
    rhs: &[f64],
    tol: f64,
    precond: Preconditioner,
) -> Result<Vec<f64>> {
    let dim = mesh.interior_count();
    assert_eq!(rhs.len(), dim, "rhs length mismatch");
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let bnorm = dot(rhs, rhs).sqrt();
    if bnorm == 0.0 {
        return Ok(vec![0.0; dim]);
    }
    let inv_diag: Option<Vec<f64>> = match precond {
        Preconditioner::None => None,
        Preconditioner::Jacobi => {
            if sys.diag.iter().any(|&d| !(d > 0.0)) {
                return Err(Error::SolverFailure {
                    relative_residual: 1.0,
                    iterations: 0,
                    history: Vec::new(),
                });
            }
            Some(sys.diag.iter().map(|&d| 1.0 / d).collect())
        }
    };
    let apply_precond = |r: &[f64]| -> Vec<f64> {
        match &inv_diag {
            Some(inv) => r.iter().zip(inv).map(|(v, w)| v * w).collect(),
            None => r.to_vec(),
        }
    };

    let mut x = vec![0.0; dim];
    let mut r = rhs.to_vec();
    let mut z = apply_precond(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let max_iter = 10 * dim.max(16);
    let mut history = Vec::new();

    for _ in 0..max_iter {
        let ap = stencil_apply(sys, mesh, &p);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::SolverFailure {
                relative_residual: dot(&r, &r).sqrt() / bnorm,
                iterations: history.len(),
                history,
            });
        }
        let step = rz / pap;
        for k in 0..dim {
            x[k] += step * p[k];
            r[k] -= step * ap[k];
        }
        let rel = dot(&r, &r).sqrt() / bnorm;
        history.push(rel);
        if rel <= tol {
            return Ok(x);
        }
        z = apply_precond(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..dim {
            p[k] = z[k] + beta * p[k];
        }
    }
    Err(Error::SolverFailure {
        relative_residual: history.last().copied().unwrap_or(1.0),
        iterations: history.len(),
        history,
    })
}

/// H¹ seminorm squared of the P1 interpolant of an interior vector:
/// `Σ_K |K| |∇v|²` (independent of the stencil; used by coercivity checks).
pub fn h1_seminorm_sq(mesh: &Mesh, v: &[f64]) -> f64 {
    let area = mesh.elem_area();
    (0..mesh.elements().len())
        .map(|idx| {
            let g = mesh.interpolant_gradient(v, ElemId(idx));
            area * (g[0] * g[0] + g[1] * g[1])
        })
        .sum()
}

/// One row of the multiscale-defect probe.
#[derive(Debug, Clone)]
pub struct EhmsRow {
    /// Field scale ε.
    pub eps: f64,
    /// Subdivisions per patch edge used at this ε.
    pub subdiv: u32,
    /// Mean over realizations of the per-realization `max_K e_K` bound.
    pub mean_max_e: f64,
}

/// Measures the multiscale-defect bound `e(HMS)` across a list of scales.
///
/// Per element, the defect of the random form against the homogenized one is
/// `|K|·⨍_{K_δ} q_ε v w`; bounding hats through the P1 mass-matrix minimal
/// eigenvalue (`‖v‖²_{L²(K)} ≥ h²/24·‖V‖²`) gives
/// `e_K ≤ (h/δ)²·‖X‖_F·24/h²` with `X_{mn} = ∫_{K_δ} q_ε λ_m λ_n`, which
/// collapses to the quadrature-friendly form `(12/m²)·‖S‖_F` where `S` holds
/// the raw quadrature sums. Returns the mean over realizations of the
/// element maximum, per ε.
///
/// Realizations are common random numbers across the scale list: each one is
/// synthesized once at the finest scale `ε*` and read at scale `ε` through
/// the exact self-similarity `q_ε(x) = q(x/ε) = q_{ε*}(x·ε*/ε)`. Every row
/// still averages `realizations` independent draws of its own field law —
/// sharing only couples the rows, which sharpens slope estimates and avoids
/// re-synthesizing the field (the dominant cost for spectral fields) per
/// scale.
pub fn e_hms_probe(
    mesh: &Mesh,
    spec: &crate::field::FieldSpec,
    r: f64,
    eps_list: &[f64],
    realizations: u64,
    base_seed: u64,
    quad: &QuadratureSpec,
) -> Result<Vec<EhmsRow>> {
    if eps_list.is_empty() {
        return Ok(Vec::new());
    }
    for &eps in eps_list {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "scale list entries must be positive and finite, got {eps}"
            )));
        }
    }
    let delta = r * mesh.h();
    let eps_ref = eps_list.iter().copied().fold(f64::INFINITY, f64::min);
    let synth = spec.synthesizer(eps_ref)?;
    let tables: Vec<PatchTable> = eps_list
        .iter()
        .map(|&eps| PatchTable::new(r, quad.subdivisions(Some(eps), delta)))
        .collect();
    let mut acc = vec![0.0f64; eps_list.len()];
    for k in 0..realizations {
        let real = synth.sample(crate::rng::sample_seed(base_seed, k));
        for ((&eps, table), slot) in eps_list.iter().zip(&tables).zip(&mut acc) {
            let scale = eps_ref / eps;
            let frob_scale = 12.0 / (table.len() as f64);
            let mut max_e = 0.0f64;
            for idx in 0..mesh.elements().len() {
                let p = mesh.patch_vertices(ElemId(idx), r);
                let p0 = p[0];
                let e1 = [p[1][0] - p[0][0], p[1][1] - p[0][1]];
                let e2 = [p[2][0] - p[0][0], p[2][1] - p[0][1]];
                let sums =
                    table.sums(p0, e1, e2, &|x| real.eval([x[0] * scale, x[1] * scale]));
                // Frobenius norm of the symmetric 3×3 sum matrix.
                let sq = sums.s2[0] * sums.s2[0]
                    + sums.s2[3] * sums.s2[3]
                    + sums.s2[5] * sums.s2[5]
                    + 2.0 * (sums.s2[1] * sums.s2[1]
                        + sums.s2[2] * sums.s2[2]
                        + sums.s2[4] * sums.s2[4]);
                max_e = max_e.max(frob_scale * sq.sqrt());
            }
            *slot += max_e;
        }
    }
    Ok(eps_list
        .iter()
        .zip(&tables)
        .zip(acc)
        .map(|((&eps, table), total)| EhmsRow {
            eps,
            subdiv: table.subdiv,
            mean_max_e: total / realizations as f64,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FieldSpec;
    use crate::mesh::Mesh;

    fn inputs<'a>(
        mesh: &'a Mesh,
        q0: &'a SmoothFn,
        field: Option<&'a FieldRealization>,
        rhs: &'a SmoothFn,
        r: f64,
        subdiv: u32,
    ) -> AssemblyInputs<'a> {
        AssemblyInputs { mesh, q0, field, rhs, r, subdiv }
    }

    /// Brute-force oracle: assembles the entry A(φ^{p}, φ^{q}) by direct
    /// integration over all elements, with dense hat evaluation through
    /// `Mesh::barycentric` (independent of the scatter tables).
    fn brute_entry(mesh: &Mesh, q0: &SmoothFn, r: f64, subdiv: u32, p: Node, q: Node) -> f64 {
        let table = SubdivisionRule::new(subdiv);
        let mut total = 0.0;
        for (idx, elem) in mesh.elements().iter().enumerate() {
            let id = ElemId(idx);
            let (Some(mp), Some(mq)) = (
                elem.vertices.iter().position(|&v| v == p),
                elem.vertices.iter().position(|&v| v == q),
            ) else {
                continue;
            };
            let grads = mesh.basis_gradients(elem.kind);
            let grad_dot = grads[mp][0] * grads[mq][0] + grads[mp][1] * grads[mq][1];
            total += mesh.elem_area() * grad_dot;

            let pv = mesh.patch_vertices(id, r);
            let mut pot = 0.0;
            for pt in &table.points {
                let x = [
                    pv[0][0] + pt[0] * (pv[1][0] - pv[0][0]) + pt[1] * (pv[2][0] - pv[0][0]),
                    pv[0][1] + pt[0] * (pv[1][1] - pv[0][1]) + pt[1] * (pv[2][1] - pv[0][1]),
                ];
                let lambda = mesh.barycentric(id, x);
                pot += q0.eval(x) * lambda[mp] * lambda[mq];
            }
            total += mesh.elem_area() / (table.points.len() as f64) * pot;
        }
        total
    }

    #[test]
    fn laplacian_stencil_matches_hand_values() {
        // q0 ≡ 0, no field: diag = 4, α¹ = α² = −1, α³ = 0 for every r.
        let mesh = Mesh::new(4).unwrap();
        let q0 = SmoothFn::Const(0.0);
        let rhs = SmoothFn::Const(1.0);
        for r in [1.0, 0.5, 0.25] {
            let sys = assemble(&inputs(&mesh, &q0, None, &rhs, r, 4)).unwrap();
            for node in mesh.interior_nodes() {
                let iid = mesh.interior_id(node).unwrap();
                assert!((sys.diag[iid] - 4.0).abs() < 1e-14, "diag at {node:?}");
                assert!((sys.dvec[iid]).abs() < 1e-14);
                let g = mesh.grid_id(node);
                assert!((sys.alpha[0][g] + 1.0).abs() < 1e-14, "alpha1");
                assert!((sys.alpha[1][g] + 1.0).abs() < 1e-14, "alpha2");
                assert!(sys.alpha[2][g].abs() < 1e-14, "alpha3");
            }
        }
    }

    #[test]
    fn constant_potential_d_is_c_h_squared() {
        // q0 ≡ c, field none, r = 1: d_{ij} = c·h² (six hexagon elements,
        // |K|·⨍ λ = (h²/2)·(1/3) each).
        let mesh = Mesh::new(8).unwrap();
        let c = 2.0;
        let q0 = SmoothFn::Const(c);
        let rhs = SmoothFn::Const(0.0);
        let sys = assemble(&inputs(&mesh, &q0, None, &rhs, 1.0, 6)).unwrap();
        let want = c * mesh.h() * mesh.h();
        for node in mesh.interior_nodes() {
            let iid = mesh.interior_id(node).unwrap();
            assert!(
                (sys.dvec[iid] - want).abs() < 1e-13,
                "d at {node:?}: {} vs {want}",
                sys.dvec[iid]
            );
        }
    }

    #[test]
    fn stencil_entries_match_brute_oracle() {
        let mesh = Mesh::new(4).unwrap();
        let q0 = SmoothFn::Bilinear { c00: 1.0, c10: 0.5, c01: -0.25, c11: 1.0 };
        let rhs = SmoothFn::Const(0.0);
        for r in [1.0, 0.5] {
            let sys = assemble(&inputs(&mesh, &q0, None, &rhs, r, 8)).unwrap();
            for node in mesh.interior_nodes() {
                let iid = mesh.interior_id(node).unwrap();
                let diag = brute_entry(&mesh, &q0, r, 8, node, node);
                assert!((sys.diag[iid] - diag).abs() < 1e-12, "diag {node:?}");
                for s in DIRS {
                    let down = mesh.shift(node, s, false).unwrap();
                    let want = brute_entry(&mesh, &q0, r, 8, node, down);
                    let got = sys.alpha[s.idx()][mesh.grid_id(node)];
                    assert!(
                        (got - want).abs() < 1e-12,
                        "alpha^{s:?} at {node:?}: {got} vs {want}"
                    );
                }
            }
        }
    }

    #[test]
    fn gradient_part_is_independent_of_r() {
        // With q0 ≡ 0 the entries are purely gradient terms; r must not
        // matter at all (bitwise, the arithmetic path is identical).
        let mesh = Mesh::new(5).unwrap();
        let q0 = SmoothFn::Const(0.0);
        let rhs = SmoothFn::Const(0.0);
        let a = assemble(&inputs(&mesh, &q0, None, &rhs, 1.0, 4)).unwrap();
        let b = assemble(&inputs(&mesh, &q0, None, &rhs, 0.25, 4)).unwrap();
        for s in 0..3 {
            assert_eq!(a.alpha[s], b.alpha[s]);
        }
        assert_eq!(a.diag, b.diag);
    }

    #[test]
    fn zero_amplitude_field_is_bit_identical_to_homogenized() {
        let mesh = Mesh::new(4).unwrap();
        let q0 = SmoothFn::Bilinear { c00: 2.0, c10: 0.0, c01: 1.0, c11: 0.0 };
        let rhs = SmoothFn::SineProduct { amp: 1.0, kx: 1, ky: 1 };
        let field = FieldSpec::Src { amplitude: 0.0 }.sample(0.01, 3).unwrap();
        let hom = assemble(&inputs(&mesh, &q0, None, &rhs, 0.5, 6)).unwrap();
        let rnd = assemble(&inputs(&mesh, &q0, Some(&field), &rhs, 0.5, 6)).unwrap();
        for s in 0..3 {
            for (x, y) in hom.alpha[s].iter().zip(&rnd.alpha[s]) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        for (x, y) in hom.diag.iter().zip(&rnd.diag) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        for (x, y) in hom.dvec.iter().zip(&rnd.dvec) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn positivity_guard_fires_for_overpowering_field() {
        let mesh = Mesh::new(4).unwrap();
        let q0 = SmoothFn::Const(0.5);
        let rhs = SmoothFn::Const(0.0);
        let field = FieldSpec::Src { amplitude: 1.0 }.sample(1.0 / 32.0, 1).unwrap();
        let err = assemble(&inputs(&mesh, &q0, Some(&field), &rhs, 1.0, 8)).unwrap_err();
        assert!(matches!(err, Error::AssemblyFailure(_)), "got {err:?}");
        // Negative deterministic potential also fails (coercivity loss).
        let qneg = SmoothFn::Const(-1.0);
        assert!(assemble(&inputs(&mesh, &qneg, None, &rhs, 1.0, 4)).is_err());
    }

    #[test]
    fn verify_structure_accepts_assembled_systems() {
        let mesh = Mesh::new(6).unwrap();
        let q0 = SmoothFn::Const(2.0);
        let rhs = SmoothFn::SineProduct { amp: 1.0, kx: 1, ky: 1 };
        let field = FieldSpec::Src { amplitude: 1.0 }.sample(1.0 / 48.0, 5).unwrap();
        let inp = inputs(&mesh, &q0, Some(&field), &rhs, 0.5, 12);
        let sys = assemble(&inp).unwrap();
        let report = verify_structure(&sys, &inp);
        assert!(report.ok(1e-12), "{report}");
    }

    #[test]
    fn verify_structure_detects_corruption() {
        let mesh = Mesh::new(4).unwrap();
        let q0 = SmoothFn::Const(1.0);
        let rhs = SmoothFn::Const(1.0);
        let inp = inputs(&mesh, &q0, None, &rhs, 1.0, 4);
        let mut sys = assemble(&inp).unwrap();
        let gid = mesh.grid_id(Node::new(2, 2));
        sys.alpha[0][gid] += 1e-6;
        let report = verify_structure(&sys, &inp);
        assert!(!report.ok(1e-12), "corruption must be detected: {report}");
        assert!(report.p1_max_rel > 1e-9 || report.p3_max_rel > 1e-9);
    }

    #[test]
    fn apply_agrees_with_expanded_dense_matrix() {
        let mesh = Mesh::new(5).unwrap();
        let q0 = SmoothFn::Bilinear { c00: 1.5, c10: 1.0, c01: 0.0, c11: 0.5 };
        let rhs = SmoothFn::Const(0.0);
        let field = FieldSpec::Src { amplitude: 1.0 }.sample(1.0 / 40.0, 9).unwrap();
        let inp = inputs(&mesh, &q0, Some(&field), &rhs, 0.5, 10);
        let sys = assemble(&inp).unwrap();
        let dense = expand_dense(&sys, &mesh);
        let dim = mesh.interior_count();
        let mut rng = crate::rng::SplitMix64::new(17);
        for _ in 0..20 {
            let v: Vec<f64> = (0..dim).map(|_| rng.next_unit() - 0.5).collect();
            let fast = stencil_apply(&sys, &mesh, &v);
            for row in 0..dim {
                let direct: f64 =
                    (0..dim).map(|col| dense[row * dim + col] * v[col]).sum();
                assert!(
                    (fast[row] - direct).abs() < 1e-12,
                    "row {row}: {} vs {direct}",
                    fast[row]
                );
            }
        }
    }

    #[test]
    fn expanded_matrix_is_symmetric() {
        let mesh = Mesh::new(6).unwrap();
        let q0 = SmoothFn::Const(2.0);
        let rhs = SmoothFn::Const(0.0);
        let field = FieldSpec::Src { amplitude: 1.0 }.sample(1.0 / 48.0, 2).unwrap();
        let inp = inputs(&mesh, &q0, Some(&field), &rhs, 0.25, 12);
        let sys = assemble(&inp).unwrap();
        let dense = expand_dense(&sys, &mesh);
        let dim = mesh.interior_count();
        for r in 0..dim {
            for c in 0..dim {
                assert_eq!(dense[r * dim + c].to_bits(), dense[c * dim + r].to_bits());
            }
        }
    }

    #[test]
    fn coercivity_against_h1_seminorm() {
        // V·(AV) ≥ |v|²_{H¹} − 1e−10 for nonnegative potentials.
        let mesh = Mesh::new(8).unwrap();
        let q0 = SmoothFn::Const(2.0);
        let rhs = SmoothFn::Const(0.0);
        let field = FieldSpec::Src { amplitude: 1.0 }.sample(1.0 / 64.0, 21).unwrap();
        let inp = inputs(&mesh, &q0, Some(&field), &rhs, 0.5, 8);
        let sys = assemble(&inp).unwrap();
        let dim = mesh.interior_count();
        let mut rng = crate::rng::SplitMix64::new(1);
        for _ in 0..1000 {
            let v: Vec<f64> = (0..dim).map(|_| rng.next_unit() * 2.0 - 1.0).collect();
            let av = stencil_apply(&sys, &mesh, &v);
            let vav: f64 = v.iter().zip(&av).map(|(a, b)| a * b).sum();
            let h1 = h1_seminorm_sq(&mesh, &v);
            assert!(vav >= h1 - 1e-10, "coercivity: {vav} < {h1}");
        }
    }

    #[test]
    fn cg_solves_small_systems_to_tolerance() {
        let mesh = Mesh::new(8).unwrap();
        let q0 = SmoothFn::Const(1.0);
        let rhs = SmoothFn::SineProduct { amp: 1.0, kx: 1, ky: 1 };
        let inp = inputs(&mesh, &q0, None, &rhs, 1.0, 4);
        let sys = assemble(&inp).unwrap();
        let x = solve(&sys, &mesh, &sys.load, 1e-12).unwrap();
        let ax = stencil_apply(&sys, &mesh, &x);
        let res: f64 = ax
            .iter()
            .zip(&sys.load)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let bnorm: f64 = sys.load.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(res / bnorm < 1e-10);
        // Zero RHS short-circuits to zero.
        let zero = solve(&sys, &mesh, &vec![0.0; mesh.interior_count()], 1e-12).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));
        // Jacobi scaling reaches the same solution.
        let jac =
            solve_preconditioned(&sys, &mesh, &sys.load, 1e-12, Preconditioner::Jacobi).unwrap();
        for (a, b) in x.iter().zip(&jac) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn load_vector_is_exact_for_linear_integrands() {
        // ⟨g, φ^{ij}⟩ with g(x) = x₁: the rule is degree-2 exact and the
        // integrand is quadratic, so entries equal h²·x₁(ij) exactly
        // (∫φ^{ij} = h² and the hexagon is centrally symmetric about ij).
        let mesh = Mesh::new(4).unwrap();
        let out = pair_with_hats(&mesh, &|x| x[0]);
        for node in mesh.interior_nodes() {
            let want = mesh.h() * mesh.h() * mesh.coord(node)[0];
            let got = out[mesh.interior_id(node).unwrap()];
            assert!((got - want).abs() < 1e-14, "{node:?}: {got} vs {want}");
        }
    }

    #[test]
    fn quadrature_spec_subdivision_rule() {
        let q = QuadratureSpec::default();
        // δ = 1/8, ε = δ/8 = 1/64: m ≥ √2·4·8 = 45.25 → 46.
        assert_eq!(q.subdivisions(Some(1.0 / 64.0), 0.125), 46);
        assert_eq!(q.subdivisions(None, 0.125), 4);
        let tight = QuadratureSpec { n_q: 2, min_subdiv: 1 };
        assert_eq!(tight.subdivisions(Some(0.25), 0.25), 3);
    }

    #[test]
    fn e_hms_probe_decays_with_eps_for_src() {
        let mesh = Mesh::new(2).unwrap();
        let spec = FieldSpec::Src { amplitude: 1.0 };
        let eps_list = [1.0 / 16.0, 1.0 / 32.0];
        let rows = e_hms_probe(
            &mesh,
            &spec,
            1.0,
            &eps_list,
            40,
            7,
            &QuadratureSpec { n_q: 2, min_subdiv: 1 },
        )
        .unwrap();
        assert!(rows[0].mean_max_e > rows[1].mean_max_e, "{rows:?}");
        // SRC: e ~ ε/δ; halving ε should roughly halve the bound.
        let ratio = rows[0].mean_max_e / rows[1].mean_max_e;
        assert!(ratio > 1.5 && ratio < 2.7, "ratio {ratio}");
    }
}
