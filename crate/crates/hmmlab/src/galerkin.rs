//! Dense reference Galerkin assembly.
//!
//! Textbook P1 finite-element assembly of the same patch-averaged bilinear
//! form as [`crate::hmm::assemble`], built deliberately on a different code
//! path: hats and their gradients come from the raw vertex geometry via
//! Cramer's rule (no closed-form barycentric tables), entries accumulate
//! element-major into a dense interior matrix (no anchored edge storage, no
//! ghost slots, no difference-form apply). It shares only the mesh geometry
//! and the subdivision quadrature point set — sharing the point multiset is
//! required for agreement in the presence of discontinuous random fields,
//! where a single displaced quadrature point would change the integral at
//! the level of one subcell mass.
//!
//! Used as the agreement oracle for the stencil assembly and as an
//! independent solver route on small meshes.

use crate::field::FieldRealization;
use crate::funcs::SmoothFn;
use crate::mesh::{ElemId, Mesh};
use crate::quad::{SubdivisionRule, EDGE_MIDPOINT_RULE};

/// Dense interior Galerkin matrix (row-major `dim × dim`).
pub fn dense_galerkin(
    mesh: &Mesh,
    q0: &SmoothFn,
    field: Option<&FieldRealization>,
    r: f64,
    subdiv: u32,
) -> Vec<f64> {
    let dim = mesh.interior_count();
    let mut a = vec![0.0f64; dim * dim];
    let rule = SubdivisionRule::new(subdiv);

    for (idx, elem) in mesh.elements().iter().enumerate() {
        let v = mesh.vertex_coords(ElemId(idx));
        let e1 = [v[1][0] - v[0][0], v[1][1] - v[0][1]];
        let e2 = [v[2][0] - v[0][0], v[2][1] - v[0][1]];
        let det = e1[0] * e2[1] - e1[1] * e2[0];
        let area = 0.5 * det.abs();
        // Cramer: λ1 = cross(x−v0, e2)/det, λ2 = cross(e1, x−v0)/det.
        let grads = {
            let g1 = [e2[1] / det, -e2[0] / det];
            let g2 = [-e1[1] / det, e1[0] / det];
            [[-g1[0] - g2[0], -g1[1] - g2[1]], g1, g2]
        };
        let rows: [Option<usize>; 3] = std::array::from_fn(|m| mesh.interior_id(elem.vertices[m]));

        // Patch vertices: shrink about the barycenter by r.
        let c = [
            (v[0][0] + v[1][0] + v[2][0]) / 3.0,
            (v[0][1] + v[1][1] + v[2][1]) / 3.0,
        ];
        let p: [[f64; 2]; 3] =
            std::array::from_fn(|m| [c[0] + r * (v[m][0] - c[0]), c[1] + r * (v[m][1] - c[1])]);
        let pe1 = [p[1][0] - p[0][0], p[1][1] - p[0][1]];
        let pe2 = [p[2][0] - p[0][0], p[2][1] - p[0][1]];

        // Patch-averaged potential mass: |K| · mean over midpoints of qλλ.
        let mut pot = [[0.0f64; 3]; 3];
        for &[xi, eta] in &rule.points {
            let x = [p[0][0] + xi * pe1[0] + eta * pe2[0], p[0][1] + xi * pe1[1] + eta * pe2[1]];
            let qv = q0.eval(x) + field.map_or(0.0, |fr| fr.eval(x));
            let d = [x[0] - v[0][0], x[1] - v[0][1]];
            let l1 = (d[0] * e2[1] - d[1] * e2[0]) / det;
            let l2 = (e1[0] * d[1] - e1[1] * d[0]) / det;
            let lambda = [1.0 - l1 - l2, l1, l2];
            for (m, lm) in lambda.iter().enumerate() {
                for (n, ln) in lambda.iter().enumerate() {
                    pot[m][n] += qv * lm * ln;
                }
            }
        }
        let pot_scale = area / (rule.points.len() as f64);

        for m in 0..3 {
            let Some(row) = rows[m] else { continue };
            for n in 0..3 {
                let Some(col) = rows[n] else { continue };
                let grad_dot = grads[m][0] * grads[n][0] + grads[m][1] * grads[n][1];
                a[row * dim + col] += area * grad_dot + pot_scale * pot[m][n];
            }
        }
    }
    a
}

/// Load vector `⟨f, φ^{ij}⟩` by the same 3-point edge-midpoint rule, built on
/// the raw-geometry path.
pub fn dense_load(mesh: &Mesh, rhs: &SmoothFn) -> Vec<f64> {
    let mut out = vec![0.0; mesh.interior_count()];
    for (idx, elem) in mesh.elements().iter().enumerate() {
        let v = mesh.vertex_coords(ElemId(idx));
        let e1 = [v[1][0] - v[0][0], v[1][1] - v[0][1]];
        let e2 = [v[2][0] - v[0][0], v[2][1] - v[0][1]];
        let area = 0.5 * (e1[0] * e2[1] - e1[1] * e2[0]).abs();
        for node in &EDGE_MIDPOINT_RULE {
            let x = [
                node.lambda[0] * v[0][0] + node.lambda[1] * v[1][0] + node.lambda[2] * v[2][0],
                node.lambda[0] * v[0][1] + node.lambda[1] * v[1][1] + node.lambda[2] * v[2][1],
            ];
            let fv = area * node.weight * rhs.eval(x);
            for m in 0..3 {
                if let Some(iid) = mesh.interior_id(elem.vertices[m]) {
                    out[iid] += fv * node.lambda[m];
                }
            }
        }
    }
    out
}

/// Solves the dense system `a x = b` by Gaussian elimination with partial
/// pivoting (small meshes only). Panics on a singular pivot.
pub fn dense_solve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let dim = b.len();
    assert_eq!(a.len(), dim * dim, "matrix shape");
    let mut m = a.to_vec();
    let mut x = b.to_vec();
    for col in 0..dim {
        let pivot_row = (col..dim)
            .max_by(|&p, &q| {
                m[p * dim + col]
                    .abs()
                    .partial_cmp(&m[q * dim + col].abs())
                    .expect("finite entries")
            })
            .expect("nonempty range");
        assert!(m[pivot_row * dim + col].abs() > 0.0, "singular matrix at column {col}");
        if pivot_row != col {
            for k in 0..dim {
                m.swap(col * dim + k, pivot_row * dim + k);
            }
            x.swap(col, pivot_row);
        }
        let pivot = m[col * dim + col];
        for row in col + 1..dim {
            let factor = m[row * dim + col] / pivot;
            if factor == 0.0 {
                continue;
            }
            for k in col..dim {
                m[row * dim + k] -= factor * m[col * dim + k];
            }
            x[row] -= factor * x[col];
        }
    }
    for col in (0..dim).rev() {
        x[col] /= m[col * dim + col];
        for row in 0..col {
            let factor = m[row * dim + col];
            x[row] -= factor * x[col];
        }
    }
    x
}
