//! Structured triangulation of the unit square with hat basis and shift
//! calculus.
//!
//! Conventions (fixed once here; every module relies on them):
//! - `N` cells per side, mesh size `h = 1/N`; grid nodes `x_{ij} = (ih, jh)`
//!   for `0 ≤ i,j ≤ N`. Interior nodes have `1 ≤ i,j ≤ N−1`.
//! - Each cell `[ah,(a+1)h] × [bh,(b+1)h]` is split by its slope `+1`
//!   diagonal into the **lower** triangle `L(a,b)` with vertices
//!   `(a,b), (a+1,b), (a+1,b+1)` and the **upper** triangle `U(a,b)` with
//!   vertices `(a,b), (a+1,b+1), (a,b+1)` (positively oriented, diagonal
//!   shared). `2N²` elements in total.
//! - Element order: cells row-major (`b` outer, `a` inner), lower before
//!   upper, so `L(a,b)` has id `2(bN+a)` and `U(a,b)` id `2(bN+a)+1`.
//! - Node order: row-major (`j` outer, `i` inner). Interior vectors are
//!   indexed by `(j−1)(N−1) + (i−1)` and implicitly extended by zero to the
//!   boundary (homogeneous Dirichlet data).
//! - Stencil directions `e₁ = (1,0)`, `e₂ = (0,1)`, `e₃ = (1,1)`: the three
//!   edge directions of the triangulation. Shifts `d^{±s}` add/subtract
//!   `e_s`; undivided differences `D^{−s}V = V − V∘d^{−s}` and
//!   `D^{+s}V = V∘d^{+s} − V`. The support hexagon of the hat `φ^{ij}`
//!   touches exactly the 7-point stencil `{ij, d^{±1}, d^{±2}, d^{±3}}` —
//!   the anti-diagonal neighbors `(i±1, j∓1)` share no element.
//! - On every element the three hat restrictions are the barycentric
//!   coordinates; with the reference parametrization
//!   `x = V0 + ξ(V1−V0) + η(V2−V0)` they are `λ = (1−ξ−η, ξ, η)`, with
//!   constant gradients of magnitude `1/h` or `√2/h`.

use crate::error::{Error, Result};
use serde::Serialize;

/// A grid node `(i, j)` with coordinates `(ih, jh)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Node {
    /// Column index, `0 ≤ i ≤ N`.
    pub i: usize,
    /// Row index, `0 ≤ j ≤ N`.
    pub j: usize,
}

impl Node {
    /// Convenience constructor.
    pub fn new(i: usize, j: usize) -> Self {
        Self { i, j }
    }
}

/// Identifier of an element in [`Mesh::elements`] order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ElemId(pub usize);

/// Orientation of a triangle within its cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElemKind {
    /// Below the slope `+1` diagonal.
    Lower,
    /// Above the slope `+1` diagonal.
    Upper,
}

/// One triangular element.
#[derive(Debug, Clone, Copy)]
pub struct Element {
    /// Cell indices `(a, b)` of the containing square cell.
    pub cell: (usize, usize),
    /// Lower or upper triangle of the cell.
    pub kind: ElemKind,
    /// Vertex nodes in the fixed convention order.
    pub vertices: [Node; 3],
}

/// One of the three stencil directions `e₁=(1,0)`, `e₂=(0,1)`, `e₃=(1,1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dir {
    /// Horizontal, `e₁ = (1,0)`.
    D1,
    /// Vertical, `e₂ = (0,1)`.
    D2,
    /// Diagonal, `e₃ = (1,1)`.
    D3,
}

/// All three stencil directions, in index order `s = 1, 2, 3`.
pub const DIRS: [Dir; 3] = [Dir::D1, Dir::D2, Dir::D3];

impl Dir {
    /// Index `s − 1 ∈ {0,1,2}` for array storage.
    #[inline]
    pub fn idx(self) -> usize {
        match self {
            Dir::D1 => 0,
            Dir::D2 => 1,
            Dir::D3 => 2,
        }
    }

    /// Offset `e_s` as signed index steps.
    #[inline]
    pub fn offset(self) -> (i64, i64) {
        match self {
            Dir::D1 => (1, 0),
            Dir::D2 => (0, 1),
            Dir::D3 => (1, 1),
        }
    }
}

/// Serializable mesh summary (external diagnostic interface).
#[derive(Debug, Serialize)]
pub struct MeshSummary {
    /// Cells per side.
    pub n: usize,
    /// Mesh size `h = 1/N`.
    pub h: f64,
    /// Total grid nodes `(N+1)²`.
    pub nodes: usize,
    /// Interior nodes `(N−1)²`.
    pub interior_nodes: usize,
    /// Elements `2N²`.
    pub elements: usize,
}

/// Structured triangulation of the unit square.
#[derive(Debug, Clone)]
pub struct Mesh {
    n: usize,
    h: f64,
    elements: Vec<Element>,
}

impl Mesh {
    /// Builds the mesh with `n ≥ 2` cells per side.
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidArgument(format!(
                "mesh needs at least 2 cells per side, got {n}"
            )));
        }
        if n > 4096 {
            return Err(Error::ResourceLimit(format!(
                "mesh with {n} cells per side exceeds the supported maximum 4096"
            )));
        }
        let mut elements = Vec::with_capacity(2 * n * n);
        for b in 0..n {
            for a in 0..n {
                elements.push(Element {
                    cell: (a, b),
                    kind: ElemKind::Lower,
                    vertices: [Node::new(a, b), Node::new(a + 1, b), Node::new(a + 1, b + 1)],
                });
                elements.push(Element {
                    cell: (a, b),
                    kind: ElemKind::Upper,
                    vertices: [Node::new(a, b), Node::new(a + 1, b + 1), Node::new(a, b + 1)],
                });
            }
        }
        Ok(Self { n, h: 1.0 / n as f64, elements })
    }

    /// Cells per side.
    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    /// Mesh size `h = 1/N`.
    #[inline]
    pub fn h(&self) -> f64 {
        self.h
    }

    /// Element area `h²/2` (identical for every element).
    #[inline]
    pub fn elem_area(&self) -> f64 {
        0.5 * self.h * self.h
    }

    /// All elements in id order.
    #[inline]
    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    /// Element by id.
    #[inline]
    pub fn element(&self, id: ElemId) -> &Element {
        &self.elements[id.0]
    }

    /// Number of interior nodes `(N−1)²`.
    #[inline]
    pub fn interior_count(&self) -> usize {
        (self.n - 1) * (self.n - 1)
    }

    /// Number of grid nodes `(N+1)²`.
    #[inline]
    pub fn node_count(&self) -> usize {
        (self.n + 1) * (self.n + 1)
    }

    /// Coordinates of a grid node.
    #[inline]
    pub fn coord(&self, node: Node) -> [f64; 2] {
        [node.i as f64 * self.h, node.j as f64 * self.h]
    }

    /// Whether a node is interior (`1 ≤ i,j ≤ N−1`).
    #[inline]
    pub fn is_interior(&self, node: Node) -> bool {
        (1..self.n).contains(&node.i) && (1..self.n).contains(&node.j)
    }

    /// Row-major index into full-grid vectors of length `(N+1)²`.
    #[inline]
    pub fn grid_id(&self, node: Node) -> usize {
        node.j * (self.n + 1) + node.i
    }

    /// Row-major index into interior vectors of length `(N−1)²`, if interior.
    #[inline]
    pub fn interior_id(&self, node: Node) -> Option<usize> {
        if self.is_interior(node) {
            Some((node.j - 1) * (self.n - 1) + (node.i - 1))
        } else {
            None
        }
    }

    /// Iterator over interior nodes in interior-index order.
    pub fn interior_nodes(&self) -> impl Iterator<Item = Node> + '_ {
        let n = self.n;
        (1..n).flat_map(move |j| (1..n).map(move |i| Node::new(i, j)))
    }

    /// Value of an interior-indexed vector at an arbitrary signed grid
    /// position, extended by zero outside the interior (Dirichlet data).
    #[inline]
    pub fn value0(&self, interior: &[f64], i: i64, j: i64) -> f64 {
        let n = self.n as i64;
        if i >= 1 && i < n && j >= 1 && j < n {
            interior[(j as usize - 1) * (self.n - 1) + (i as usize - 1)]
        } else {
            0.0
        }
    }

    /// Shifted node `d^{±s}(node)`; `None` when the shift leaves the grid.
    pub fn shift(&self, node: Node, s: Dir, forward: bool) -> Option<Node> {
        let (di, dj) = s.offset();
        let (di, dj) = if forward { (di, dj) } else { (-di, -dj) };
        let i = node.i as i64 + di;
        let j = node.j as i64 + dj;
        let n = self.n as i64;
        if (0..=n).contains(&i) && (0..=n).contains(&j) {
            Some(Node::new(i as usize, j as usize))
        } else {
            None
        }
    }

    /// Backward undivided difference `(D^{−s}V)(node) = V(node) − V(d^{−s}node)`
    /// of a zero-extended interior vector, defined for any grid node.
    #[inline]
    pub fn d_minus(&self, interior: &[f64], node: Node, s: Dir) -> f64 {
        let (di, dj) = s.offset();
        let (i, j) = (node.i as i64, node.j as i64);
        self.value0(interior, i, j) - self.value0(interior, i - di, j - dj)
    }

    /// Forward undivided difference `(D^{+s}V)(node) = V(d^{+s}node) − V(node)`.
    #[inline]
    pub fn d_plus(&self, interior: &[f64], node: Node, s: Dir) -> f64 {
        let (di, dj) = s.offset();
        let (i, j) = (node.i as i64, node.j as i64);
        self.value0(interior, i + di, j + dj) - self.value0(interior, i, j)
    }

    /// The six elements forming the support hexagon of the hat at an
    /// interior node `(i,j)`:
    /// `L(i,j)`, `U(i,j)`, `L(i−1,j−1)`, `U(i−1,j−1)`, `L(i−1,j)`, `U(i,j−1)`.
    ///
    /// # Panics
    /// Panics if `node` is not interior.
    pub fn hexagon(&self, node: Node) -> [ElemId; 6] {
        assert!(self.is_interior(node), "hexagon requested at non-interior node {node:?}");
        let (i, j) = (node.i, node.j);
        [
            self.elem_id(i, j, ElemKind::Lower),
            self.elem_id(i, j, ElemKind::Upper),
            self.elem_id(i - 1, j - 1, ElemKind::Lower),
            self.elem_id(i - 1, j - 1, ElemKind::Upper),
            self.elem_id(i - 1, j, ElemKind::Lower),
            self.elem_id(i, j - 1, ElemKind::Upper),
        ]
    }

    /// Element id of the lower/upper triangle of cell `(a, b)`.
    #[inline]
    pub fn elem_id(&self, a: usize, b: usize, kind: ElemKind) -> ElemId {
        debug_assert!(a < self.n && b < self.n);
        ElemId(2 * (b * self.n + a) + matches!(kind, ElemKind::Upper) as usize)
    }

    /// Vertex coordinates of an element, in convention order.
    pub fn vertex_coords(&self, id: ElemId) -> [[f64; 2]; 3] {
        let e = self.element(id);
        [self.coord(e.vertices[0]), self.coord(e.vertices[1]), self.coord(e.vertices[2])]
    }

    /// Barycenter of an element.
    pub fn barycenter(&self, id: ElemId) -> [f64; 2] {
        let v = self.vertex_coords(id);
        [(v[0][0] + v[1][0] + v[2][0]) / 3.0, (v[0][1] + v[1][1] + v[2][1]) / 3.0]
    }

    /// Vertices of the patch `K_δ`: the element shrunk by factor `r = δ/h`
    /// about its barycenter, `p_m = c + r (v_m − c)`. `r = 1` returns the
    /// element itself; the patch area is `r²|K|`.
    pub fn patch_vertices(&self, id: ElemId, r: f64) -> [[f64; 2]; 3] {
        debug_assert!(r > 0.0 && r <= 1.0, "shrink ratio must lie in (0,1], got {r}");
        let v = self.vertex_coords(id);
        let c = self.barycenter(id);
        let mut p = [[0.0; 2]; 3];
        for m in 0..3 {
            p[m][0] = c[0] + r * (v[m][0] - c[0]);
            p[m][1] = c[1] + r * (v[m][1] - c[1]);
        }
        p
    }

    /// Constant gradients of the three barycentric basis functions on an
    /// element, in vertex order. Lower: `(−1,0)/h, (1,−1)/h, (0,1)/h`;
    /// upper: `(0,−1)/h, (1,0)/h, (−1,1)/h`.
    pub fn basis_gradients(&self, kind: ElemKind) -> [[f64; 2]; 3] {
        let inv_h = 1.0 / self.h;
        match kind {
            ElemKind::Lower => {
                [[-inv_h, 0.0], [inv_h, -inv_h], [0.0, inv_h]]
            }
            ElemKind::Upper => {
                [[0.0, -inv_h], [inv_h, 0.0], [-inv_h, inv_h]]
            }
        }
    }

    /// Gradient of the P1 interpolant of a zero-extended interior vector on
    /// an element (constant there): `Σ_m V(v_m) ∇λ_m`.
    pub fn interpolant_gradient(&self, interior: &[f64], id: ElemId) -> [f64; 2] {
        let e = self.element(id);
        let grads = self.basis_gradients(e.kind);
        let mut g = [0.0; 2];
        for m in 0..3 {
            let vm = self.value0(interior, e.vertices[m].i as i64, e.vertices[m].j as i64);
            g[0] += vm * grads[m][0];
            g[1] += vm * grads[m][1];
        }
        g
    }

    /// Barycentric coordinates of a point with respect to an element,
    /// computed from the cell-local coordinates (exact affine formulas).
    pub fn barycentric(&self, id: ElemId, x: [f64; 2]) -> [f64; 3] {
        let e = self.element(id);
        let (a, b) = e.cell;
        let xi = x[0] / self.h - a as f64;
        let eta = x[1] / self.h - b as f64;
        match e.kind {
            ElemKind::Lower => [1.0 - xi, xi - eta, eta],
            ElemKind::Upper => [1.0 - eta, xi, eta - xi],
        }
    }

    /// Element containing `x ∈ [0,1]²`. Points on the diagonal resolve to
    /// the lower triangle; points on cell edges resolve to the cell with the
    /// larger index, except on the outer boundary.
    pub fn element_at(&self, x: [f64; 2]) -> ElemId {
        let clamp = |v: f64| v.clamp(0.0, 1.0);
        let cell = |v: f64| ((clamp(v) / self.h) as usize).min(self.n - 1);
        let (a, b) = (cell(x[0]), cell(x[1]));
        let xi = clamp(x[0]) / self.h - a as f64;
        let eta = clamp(x[1]) / self.h - b as f64;
        let kind = if eta <= xi { ElemKind::Lower } else { ElemKind::Upper };
        self.elem_id(a, b, kind)
    }

    /// Global evaluation of the hat function `φ^{node}` at `x` (1 at its
    /// node, 0 at every other node, piecewise linear).
    pub fn hat_value(&self, node: Node, x: [f64; 2]) -> f64 {
        let id = self.element_at(x);
        let e = self.element(id);
        let lambda = self.barycentric(id, x);
        (0..3)
            .filter(|&m| e.vertices[m] == node)
            .map(|m| lambda[m])
            .sum()
    }

    /// Mesh summary for the JSON diagnostic dump.
    pub fn summary(&self) -> MeshSummary {
        MeshSummary {
            n: self.n,
            h: self.h,
            nodes: self.node_count(),
            interior_nodes: self.interior_count(),
            elements: self.elements.len(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_degenerate_sizes() {
        assert!(Mesh::new(0).is_err());
        assert!(Mesh::new(1).is_err());
        assert!(Mesh::new(2).is_ok());
    }

    #[test]
    fn counts_match_formulas() {
        let m2 = Mesh::new(2).unwrap();
        assert_eq!(m2.elements().len(), 8);
        assert_eq!(m2.interior_count(), 1);
        assert_eq!(m2.interior_nodes().next(), Some(Node::new(1, 1)));

        let m4 = Mesh::new(4).unwrap();
        assert_eq!(m4.elements().len(), 32);
        assert_eq!(m4.interior_count(), 9);
        assert_eq!(m4.node_count(), 25);
    }

    #[test]
    fn element_areas_and_orientation() {
        let mesh = Mesh::new(3).unwrap();
        for (idx, _e) in mesh.elements().iter().enumerate() {
            let v = mesh.vertex_coords(ElemId(idx));
            let signed = 0.5
                * ((v[1][0] - v[0][0]) * (v[2][1] - v[0][1])
                    - (v[2][0] - v[0][0]) * (v[1][1] - v[0][1]));
            assert!(signed > 0.0, "element {idx} not positively oriented");
            assert!((signed - mesh.elem_area()).abs() < 1e-15);
        }
    }

    #[test]
    fn hexagon_is_the_six_support_elements() {
        let mesh = Mesh::new(4).unwrap();
        let node = Node::new(2, 1);
        let hex = mesh.hexagon(node);
        // Independently: the support of the hat at (i,j) is exactly the set
        // of elements having (i,j) as a vertex.
        let expected: Vec<usize> = mesh
            .elements()
            .iter()
            .enumerate()
            .filter(|(_, e)| e.vertices.contains(&node))
            .map(|(idx, _)| idx)
            .collect();
        let mut got: Vec<usize> = hex.iter().map(|id| id.0).collect();
        got.sort_unstable();
        assert_eq!(got, expected);
        assert_eq!(expected.len(), 6);
    }

    #[test]
    fn anti_diagonal_neighbors_share_no_element() {
        // (P2) geometric content: hexagons of (i,j) and (i+1,j−1) are
        // disjoint, while the 6 stencil neighbors share ≥ 1 element.
        let mesh = Mesh::new(4).unwrap();
        let a = Node::new(2, 2);
        let share = |p: Node, q: Node| {
            let hp = mesh.hexagon(p);
            let hq = mesh.hexagon(q);
            hp.iter().filter(|e| hq.contains(e)).count()
        };
        assert_eq!(share(a, Node::new(3, 1)), 0);
        assert_eq!(share(a, Node::new(1, 3)), 0);
        for nb in [(3, 2), (1, 2), (2, 3), (2, 1), (3, 3), (1, 1)] {
            assert!(share(a, Node::new(nb.0, nb.1)) >= 1, "neighbor {nb:?}");
        }
    }

    #[test]
    fn shift_examples() {
        let mesh = Mesh::new(4).unwrap();
        let n11 = Node::new(1, 1);
        assert_eq!(mesh.shift(n11, Dir::D1, true), Some(Node::new(2, 1)));
        assert_eq!(mesh.shift(n11, Dir::D2, false), Some(Node::new(1, 0)));
        // d^{−3}(1,1) = (0,0): a boundary (marker) node, not interior.
        let back = mesh.shift(n11, Dir::D3, false).unwrap();
        assert_eq!(back, Node::new(0, 0));
        assert!(!mesh.is_interior(back));
        // Leaving the grid entirely yields None.
        assert_eq!(mesh.shift(Node::new(0, 0), Dir::D1, false), None);
    }

    #[test]
    fn basis_is_lagrange_and_partitions_unity() {
        let mesh = Mesh::new(3).unwrap();
        // Lagrange property at nodes.
        for e in mesh.elements() {
            for &v in &e.vertices {
                for &w in &e.vertices {
                    let val = mesh.hat_value(v, mesh.coord(w));
                    let want = if v == w { 1.0 } else { 0.0 };
                    assert!((val - want).abs() < 1e-14);
                }
            }
        }
        // Partition of unity at interior points of arbitrary elements.
        for (idx, e) in mesh.elements().iter().enumerate() {
            let lambda = mesh.barycentric(ElemId(idx), mesh.barycenter(ElemId(idx)));
            let sum: f64 = lambda.iter().sum();
            assert!((sum - 1.0).abs() < 1e-14);
            assert!(lambda.iter().all(|&l| (l - 1.0 / 3.0).abs() < 1e-14));
            let _ = e;
        }
    }

    #[test]
    fn gradient_magnitudes_are_the_two_mesh_values() {
        let mesh = Mesh::new(5).unwrap();
        let inv_h = 1.0 / mesh.h();
        for kind in [ElemKind::Lower, ElemKind::Upper] {
            let grads = mesh.basis_gradients(kind);
            let mut sum = [0.0; 2];
            for g in grads {
                let mag = (g[0] * g[0] + g[1] * g[1]).sqrt();
                let ok = (mag - inv_h).abs() < 1e-12 || (mag - 2f64.sqrt() * inv_h).abs() < 1e-12;
                assert!(ok, "unexpected gradient magnitude {mag}");
                sum[0] += g[0];
                sum[1] += g[1];
            }
            // Gradients of a partition of unity sum to zero.
            assert!(sum[0].abs() < 1e-14 && sum[1].abs() < 1e-14);
        }
    }

    #[test]
    fn gradients_match_barycentric_finite_differences() {
        // ∇λ_m computed from the closed forms must match a centered secant
        // of `barycentric` across each element.
        let mesh = Mesh::new(4).unwrap();
        let eps = 1e-7;
        for idx in 0..mesh.elements().len() {
            let id = ElemId(idx);
            let c = mesh.barycenter(id);
            let grads = mesh.basis_gradients(mesh.element(id).kind);
            for m in 0..3 {
                for axis in 0..2 {
                    let mut xp = c;
                    let mut xm = c;
                    xp[axis] += eps;
                    xm[axis] -= eps;
                    let fd =
                        (mesh.barycentric(id, xp)[m] - mesh.barycentric(id, xm)[m]) / (2.0 * eps);
                    assert!(
                        (fd - grads[m][axis]).abs() < 1e-5,
                        "elem {idx} vertex {m} axis {axis}: fd {fd} vs {g}",
                        g = grads[m][axis]
                    );
                }
            }
        }
    }

    #[test]
    fn interpolant_gradient_equals_difference_quotients() {
        // On L(a,b): ∇v = ((D⁻¹V)(a+1,b), (D⁻²V)(a+1,b+1)) / h;
        // on U(a,b): ∇v = ((D⁻¹V)(a+1,b+1), (D⁻²V)(a,b+1)) / h.
        let mesh = Mesh::new(6).unwrap();
        let mut v = vec![0.0; mesh.interior_count()];
        let mut rng = crate::rng::SplitMix64::new(99);
        for entry in &mut v {
            *entry = rng.next_unit() - 0.5;
        }
        let inv_h = 1.0 / mesh.h();
        for (idx, e) in mesh.elements().iter().enumerate() {
            let g = mesh.interpolant_gradient(&v, ElemId(idx));
            let (a, b) = e.cell;
            let (gx, gy) = match e.kind {
                ElemKind::Lower => (
                    mesh.d_minus(&v, Node::new(a + 1, b), Dir::D1) * inv_h,
                    mesh.d_minus(&v, Node::new(a + 1, b + 1), Dir::D2) * inv_h,
                ),
                ElemKind::Upper => (
                    mesh.d_minus(&v, Node::new(a + 1, b + 1), Dir::D1) * inv_h,
                    mesh.d_minus(&v, Node::new(a, b + 1), Dir::D2) * inv_h,
                ),
            };
            assert!((g[0] - gx).abs() < 1e-12 && (g[1] - gy).abs() < 1e-12, "elem {idx}");
        }
    }

    #[test]
    fn forward_backward_differences_compose_to_second_difference() {
        let mesh = Mesh::new(5).unwrap();
        let mut v = vec![0.0; mesh.interior_count()];
        let mut rng = crate::rng::SplitMix64::new(3);
        for entry in &mut v {
            *entry = rng.next_unit();
        }
        for node in mesh.interior_nodes() {
            for s in DIRS {
                let (di, dj) = s.offset();
                let (i, j) = (node.i as i64, node.j as i64);
                // D⁺ˢ(D⁻ˢV) = V(d⁺) − 2V + V(d⁻); d⁺ˢ of an interior node
                // is always on-grid.
                let up = mesh.shift(node, s, true).unwrap();
                let composed = mesh.d_minus(&v, up, s) - mesh.d_minus(&v, node, s);
                let direct = mesh.value0(&v, i + di, j + dj) - 2.0 * mesh.value0(&v, i, j)
                    + mesh.value0(&v, i - di, j - dj);
                assert!((composed - direct).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn patch_shrink_preserves_barycenter_and_scales_area() {
        let mesh = Mesh::new(4).unwrap();
        for idx in [0usize, 5, 17, 31] {
            let id = ElemId(idx);
            let c = mesh.barycenter(id);
            for r in [1.0, 0.5, 0.25] {
                let p = mesh.patch_vertices(id, r);
                let pc = [
                    (p[0][0] + p[1][0] + p[2][0]) / 3.0,
                    (p[0][1] + p[1][1] + p[2][1]) / 3.0,
                ];
                assert!((pc[0] - c[0]).abs() < 1e-15 && (pc[1] - c[1]).abs() < 1e-15);
                let area = 0.5
                    * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1])
                        - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]))
                        .abs();
                assert!((area - r * r * mesh.elem_area()).abs() < 1e-15);
            }
            // r = 1 reproduces the element vertices exactly.
            let p1 = mesh.patch_vertices(id, 1.0);
            let v = mesh.vertex_coords(id);
            for m in 0..3 {
                assert!((p1[m][0] - v[m][0]).abs() < 1e-15 && (p1[m][1] - v[m][1]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn element_lookup_agrees_with_barycentrics() {
        let mesh = Mesh::new(4).unwrap();
        let mut rng = crate::rng::SplitMix64::new(11);
        for _ in 0..500 {
            let x = [rng.next_unit(), rng.next_unit()];
            let id = mesh.element_at(x);
            let lambda = mesh.barycentric(id, x);
            for l in lambda {
                assert!(l >= -1e-12 && l <= 1.0 + 1e-12, "x {x:?} lambda {lambda:?}");
            }
        }
    }

    #[test]
    fn summary_reports_exact_counts() {
        let mesh = Mesh::new(4).unwrap();
        let s = mesh.summary();
        let json = serde_json::to_value(&s).unwrap();
        assert_eq!(json["n"], 4);
        assert_eq!(json["nodes"], 25);
        assert_eq!(json["interior_nodes"], 9);
        assert_eq!(json["elements"], 32);
        assert!((json["h"].as_f64().unwrap() - 0.25).abs() < 1e-16);
    }
}
