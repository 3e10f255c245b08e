//! P1 finite elements on the fine triangulation.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::grid::FineMesh;
use crate::linalg::{solve_checked, CsrMatrix};
use crate::model::{PermeabilityField, SourceTerm};

/// Gradients of the three barycentric coordinates and the triangle area.
fn p1_gradients(mesh: &FineMesh, t: usize) -> ([[f64; 2]; 3], f64) {
    let [a, b, c] = mesh.triangles[t];
    let (p0, p1, p2) = (mesh.nodes[a], mesh.nodes[b], mesh.nodes[c]);
    let det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
    let g = [
        [(p1[1] - p2[1]) / det, (p2[0] - p1[0]) / det],
        [(p2[1] - p0[1]) / det, (p0[0] - p2[0]) / det],
        [(p0[1] - p1[1]) / det, (p1[0] - p0[0]) / det],
    ];
    (g, 0.5 * det)
}

fn check_weights(weight: &[f64], triangles: impl Iterator<Item = usize>) -> Result<()> {
    for t in triangles {
        let w = weight[t];
        if !(w > 0.0 && w.is_finite()) {
            return Err(Error::NonPositiveWeight { triangle: t, value: w });
        }
    }
    Ok(())
}

/// `A_ij = sum_T w_T |T| grad(phi_i) . grad(phi_j)` over the listed triangles.
pub fn assemble_stiffness_on(
    mesh: &FineMesh,
    weight: &[f64],
    triangles: &[usize],
) -> Result<CsrMatrix> {
    check_weights(weight, triangles.iter().copied())?;
    let mut t = Vec::with_capacity(9 * triangles.len());
    for &tri in triangles {
        let (g, area) = p1_gradients(mesh, tri);
        let nodes = mesh.triangles[tri];
        for a in 0..3 {
            for b in 0..3 {
                let v = weight[tri] * area * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
                t.push((nodes[a], nodes[b], v));
            }
        }
    }
    let n = mesh.node_count();
    Ok(CsrMatrix::from_triplets(n, n, t))
}

pub fn assemble_stiffness(mesh: &FineMesh, weight: &[f64]) -> Result<CsrMatrix> {
    let all: Vec<usize> = (0..mesh.triangles.len()).collect();
    assemble_stiffness_on(mesh, weight, &all)
}

/// Consistent mass matrix weighted per triangle: `|T| w_T (1 + delta_ab) / 12`.
pub fn assemble_weighted_mass_on(
    mesh: &FineMesh,
    weight: &[f64],
    triangles: &[usize],
) -> Result<CsrMatrix> {
    check_weights(weight, triangles.iter().copied())?;
    let mut t = Vec::with_capacity(9 * triangles.len());
    for &tri in triangles {
        let area = mesh.signed_area(tri);
        let nodes = mesh.triangles[tri];
        for a in 0..3 {
            for b in 0..3 {
                let f = if a == b { 2.0 } else { 1.0 };
                t.push((nodes[a], nodes[b], weight[tri] * area * f / 12.0));
            }
        }
    }
    let n = mesh.node_count();
    Ok(CsrMatrix::from_triplets(n, n, t))
}

pub fn assemble_mass(mesh: &FineMesh) -> CsrMatrix {
    let ones = vec![1.0; mesh.triangles.len()];
    let all: Vec<usize> = (0..mesh.triangles.len()).collect();
    assemble_weighted_mass_on(mesh, &ones, &all).expect("unit weights are positive")
}

/// `H_i = int phi_i h` with the three-point edge-midpoint rule.
pub fn assemble_load(mesh: &FineMesh, h: impl Fn([f64; 2]) -> f64) -> DVector<f64> {
    let mut out = DVector::zeros(mesh.node_count());
    for (tri, nodes) in mesh.triangles.iter().enumerate() {
        let area = mesh.signed_area(tri);
        let p = nodes.map(|n| mesh.nodes[n]);
        let mid = |a: usize, b: usize| [(p[a][0] + p[b][0]) * 0.5, (p[a][1] + p[b][1]) * 0.5];
        // phi_a is 1/2 at the midpoints of its two edges and 0 at the third.
        let h01 = h(mid(0, 1));
        let h12 = h(mid(1, 2));
        let h20 = h(mid(2, 0));
        let w = area / 3.0 * 0.5;
        out[nodes[0]] += w * (h01 + h20);
        out[nodes[1]] += w * (h01 + h12);
        out[nodes[2]] += w * (h12 + h20);
    }
    out
}

pub fn assemble_source(mesh: &FineMesh, source: &SourceTerm) -> DVector<f64> {
    assemble_load(mesh, |p| source.eval(p))
}

/// Bijection between interior unknowns and global fine nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletMap {
    pub interior: Vec<usize>,
    pub global_to_interior: Vec<Option<usize>>,
}

impl DirichletMap {
    pub fn new(node_count: usize, boundary: &[usize]) -> Result<Self> {
        let mut is_bnd = vec![false; node_count];
        for &b in boundary {
            if b >= node_count {
                return Err(Error::InvalidArgument(format!("boundary node {b} out of range")));
            }
            is_bnd[b] = true;
        }
        let interior: Vec<usize> = (0..node_count).filter(|&n| !is_bnd[n]).collect();
        if interior.is_empty() {
            return Err(Error::EmptyInterior);
        }
        let mut global_to_interior = vec![None; node_count];
        for (k, &n) in interior.iter().enumerate() {
            global_to_interior[n] = Some(k);
        }
        Ok(Self {
            interior,
            global_to_interior,
        })
    }

    pub fn for_mesh(mesh: &FineMesh) -> Result<Self> {
        Self::new(mesh.node_count(), &mesh.boundary_nodes)
    }

    pub fn len(&self) -> usize {
        self.interior.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interior.is_empty()
    }

    pub fn restrict_vector(&self, full: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.len(), self.interior.iter().map(|&n| full[n]))
    }

    /// Extends interior values by the homogeneous boundary value.
    pub fn extend(&self, interior: &[f64]) -> DVector<f64> {
        let mut full = DVector::zeros(self.global_to_interior.len());
        for (k, &n) in self.interior.iter().enumerate() {
            full[n] = interior[k];
        }
        full
    }

    pub fn restrict_matrix(&self, op: &CsrMatrix) -> CsrMatrix {
        op.restrict(&self.interior, &self.interior)
    }
}

/// Eliminates homogeneous Dirichlet nodes from `op x = rhs`.
pub fn apply_dirichlet(
    op: &CsrMatrix,
    rhs: &DVector<f64>,
    boundary: &[usize],
) -> Result<(CsrMatrix, DVector<f64>, DirichletMap)> {
    if rhs.len() != op.nrows {
        return Err(Error::DimensionMismatch {
            expected: op.nrows,
            got: rhs.len(),
        });
    }
    let map = DirichletMap::new(op.nrows, boundary)?;
    Ok((map.restrict_matrix(op), map.restrict_vector(rhs), map))
}

pub const ELLIPTIC_TOL: f64 = 1e-10;

/// Solves `-div(kappa grad w0) = h` with `w0 = 0` on the boundary; returns
/// interior values.
pub fn solve_elliptic_w0(
    mesh: &FineMesh,
    kappa: &PermeabilityField,
    source: &SourceTerm,
) -> Result<DVector<f64>> {
    let a = assemble_stiffness(mesh, &kappa.values)?;
    let h = assemble_source(mesh, source);
    let (a, h, _) = apply_dirichlet(&a, &h, &mesh.boundary_nodes)?;
    if h.iter().all(|&v| v == 0.0) {
        return Ok(DVector::zeros(h.len()));
    }
    solve_checked(&a, h.as_slice(), ELLIPTIC_TOL)
}
