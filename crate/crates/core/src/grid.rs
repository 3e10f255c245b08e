//! Structured triangulations of the unit square and their coarse overlays.
//!
//! Fine nodes are numbered row-major: node `(i, j)` has index `j * (nx + 1) + i`
//! and sits at `(i / nx, j / ny)`. Each fine cell is split along its
//! bottom-left to top-right diagonal into two counter-clockwise triangles.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FineMesh {
    pub nx: usize,
    pub ny: usize,
    pub nodes: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    pub boundary_nodes: Vec<usize>,
}

impl FineMesh {
    pub fn build(nx: usize, ny: usize) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidMesh(format!(
                "cell counts must be positive, got {nx}x{ny}"
            )));
        }
        let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
        let mut boundary_nodes = Vec::new();
        for j in 0..=ny {
            for i in 0..=nx {
                nodes.push([i as f64 / nx as f64, j as f64 / ny as f64]);
                if i == 0 || i == nx || j == 0 || j == ny {
                    boundary_nodes.push(j * (nx + 1) + i);
                }
            }
        }
        let mut triangles = Vec::with_capacity(2 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let n00 = j * (nx + 1) + i;
                let n10 = n00 + 1;
                let n01 = n00 + nx + 1;
                let n11 = n01 + 1;
                triangles.push([n00, n10, n11]);
                triangles.push([n00, n11, n01]);
            }
        }
        Ok(Self {
            nx,
            ny,
            nodes,
            triangles,
            boundary_nodes,
        })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn node_index(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    /// Triangle indices of fine cell `(i, j)`: lower-right then upper-left.
    pub fn cell_triangles(&self, i: usize, j: usize) -> [usize; 2] {
        let c = 2 * (j * self.nx + i);
        [c, c + 1]
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        let i = node % (self.nx + 1);
        let j = node / (self.nx + 1);
        i == 0 || i == self.nx || j == 0 || j == self.ny
    }

    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        let (pa, pb, pc) = (self.nodes[a], self.nodes[b], self.nodes[c]);
        0.5 * ((pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]))
    }

    pub fn centroid(&self, t: usize) -> [f64; 2] {
        let [a, b, c] = self.triangles[t];
        let (pa, pb, pc) = (self.nodes[a], self.nodes[b], self.nodes[c]);
        [
            (pa[0] + pb[0] + pc[0]) / 3.0,
            (pa[1] + pb[1] + pc[1]) / 3.0,
        ]
    }

    /// Debug dump: `<stem>_nodes.csv` and `<stem>_triangles.csv`.
    pub fn write_csv(&self, dir: &Path, stem: &str) -> Result<()> {
        let mut f = std::fs::File::create(dir.join(format!("{stem}_nodes.csv")))?;
        writeln!(f, "node,x,y,boundary")?;
        for (k, p) in self.nodes.iter().enumerate() {
            writeln!(f, "{k},{},{},{}", p[0], p[1], u8::from(self.is_boundary(k)))?;
        }
        let mut f = std::fs::File::create(dir.join(format!("{stem}_triangles.csv")))?;
        writeln!(f, "triangle,a,b,c")?;
        for (k, t) in self.triangles.iter().enumerate() {
            writeln!(f, "{k},{},{},{}", t[0], t[1], t[2])?;
        }
        Ok(())
    }
}

/// Coarse neighborhood of one coarse vertex: the union of the (up to four)
/// coarse cells touching it.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub id: usize,
    pub coarse_node: [usize; 2],
    /// Inclusive fine-node index ranges `[i0, i1] x [j0, j1]` of the patch.
    pub i_range: (usize, usize),
    pub j_range: (usize, usize),
    /// Fine node ids, row-major within the patch.
    pub nodes: Vec<usize>,
    pub triangles: Vec<usize>,
    pub coarse_cells: usize,
}

impl Region {
    pub fn width(&self) -> usize {
        self.i_range.1 - self.i_range.0 + 1
    }

    pub fn height(&self) -> usize {
        self.j_range.1 - self.j_range.0 + 1
    }

    /// Position of a global fine node inside `nodes`, if it belongs to the patch.
    pub fn local_index(&self, mesh: &FineMesh, node: usize) -> Option<usize> {
        let i = node % (mesh.nx + 1);
        let j = node / (mesh.nx + 1);
        if i < self.i_range.0 || i > self.i_range.1 || j < self.j_range.0 || j > self.j_range.1
        {
            return None;
        }
        Some((j - self.j_range.0) * self.width() + (i - self.i_range.0))
    }

    /// True for nodes on the patch boundary (the rim of the rectangle).
    pub fn on_patch_boundary(&self, mesh: &FineMesh, node: usize) -> bool {
        let i = node % (mesh.nx + 1);
        let j = node / (mesh.nx + 1);
        i == self.i_range.0 || i == self.i_range.1 || j == self.j_range.0 || j == self.j_range.1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoarseGrid {
    pub nx: usize,
    pub ny: usize,
    /// Fine cells per coarse cell along each axis.
    pub ratio: (usize, usize),
    pub coarse_nodes: Vec<[f64; 2]>,
    pub regions: Vec<Region>,
}

impl CoarseGrid {
    pub fn build(mesh: &FineMesh, nx: usize, ny: usize) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidMesh(format!(
                "coarse cell counts must be positive, got {nx}x{ny}"
            )));
        }
        if mesh.nx % nx != 0 {
            return Err(Error::NonDivisibleGrid {
                axis: 'x',
                fine: mesh.nx,
                coarse: nx,
            });
        }
        if mesh.ny % ny != 0 {
            return Err(Error::NonDivisibleGrid {
                axis: 'y',
                fine: mesh.ny,
                coarse: ny,
            });
        }
        let (rx, ry) = (mesh.nx / nx, mesh.ny / ny);
        let mut coarse_nodes = Vec::with_capacity((nx + 1) * (ny + 1));
        let mut regions = Vec::with_capacity((nx + 1) * (ny + 1));
        for cj in 0..=ny {
            for ci in 0..=nx {
                coarse_nodes.push([ci as f64 / nx as f64, cj as f64 / ny as f64]);
                let cells_x = (ci.saturating_sub(1))..(ci + 1).min(nx);
                let cells_y = (cj.saturating_sub(1))..(cj + 1).min(ny);
                let i_range = (cells_x.start * rx, cells_x.end * rx);
                let j_range = (cells_y.start * ry, cells_y.end * ry);
                let mut nodes = Vec::new();
                for j in j_range.0..=j_range.1 {
                    for i in i_range.0..=i_range.1 {
                        nodes.push(mesh.node_index(i, j));
                    }
                }
                let mut triangles = Vec::new();
                for j in j_range.0..j_range.1 {
                    for i in i_range.0..i_range.1 {
                        triangles.extend(mesh.cell_triangles(i, j));
                    }
                }
                regions.push(Region {
                    id: cj * (nx + 1) + ci,
                    coarse_node: [ci, cj],
                    i_range,
                    j_range,
                    nodes,
                    triangles,
                    coarse_cells: cells_x.len() * cells_y.len(),
                });
            }
        }
        Ok(Self {
            nx,
            ny,
            ratio: (rx, ry),
            coarse_nodes,
            regions,
        })
    }

    pub fn coarse_node_count(&self) -> usize {
        self.coarse_nodes.len()
    }

    pub fn coarse_h(&self) -> (f64, f64) {
        (1.0 / self.nx as f64, 1.0 / self.ny as f64)
    }

    /// Bilinear coarse hat function of coarse node `region` at point `p`.
    pub fn hat(&self, region: usize, p: [f64; 2]) -> f64 {
        let (hx, hy) = self.coarse_h();
        let c = self.coarse_nodes[region];
        let fx = (1.0 - (p[0] - c[0]).abs() / hx).max(0.0);
        let fy = (1.0 - (p[1] - c[1]).abs() / hy).max(0.0);
        fx * fy
    }

    /// Gradient of the coarse hat of `region` at `p` (one-sided at kinks).
    pub fn hat_gradient(&self, region: usize, p: [f64; 2]) -> [f64; 2] {
        let (hx, hy) = self.coarse_h();
        let c = self.coarse_nodes[region];
        let (dx, dy) = (p[0] - c[0], p[1] - c[1]);
        let fx = (1.0 - dx.abs() / hx).max(0.0);
        let fy = (1.0 - dy.abs() / hy).max(0.0);
        if fx == 0.0 && fy == 0.0 {
            return [0.0, 0.0];
        }
        let dfx = if dx.abs() < hx { -dx.signum() / hx } else { 0.0 };
        let dfy = if dy.abs() < hy { -dy.signum() / hy } else { 0.0 };
        [dfx * fy, fx * dfy]
    }

    /// Coarse nodes (region ids) of the coarse cell containing point `p`.
    pub fn cell_corners(&self, p: [f64; 2]) -> [usize; 4] {
        let ci = ((p[0] * self.nx as f64).floor() as usize).min(self.nx - 1);
        let cj = ((p[1] * self.ny as f64).floor() as usize).min(self.ny - 1);
        let w = self.nx + 1;
        [
            cj * w + ci,
            cj * w + ci + 1,
            (cj + 1) * w + ci,
            (cj + 1) * w + ci + 1,
        ]
    }

    /// Regions whose open support contains each fine node.
    pub fn node_memberships(&self, mesh: &FineMesh) -> Vec<Vec<usize>> {
        let (rx, ry) = self.ratio;
        let mut member = vec![Vec::new(); mesh.node_count()];
        for r in &self.regions {
            let (ci, cj) = (r.coarse_node[0] * rx, r.coarse_node[1] * ry);
            for &n in &r.nodes {
                let i = n % (mesh.nx + 1);
                let j = n / (mesh.nx + 1);
                if i.abs_diff(ci) < rx && j.abs_diff(cj) < ry {
                    member[n].push(r.id);
                }
            }
        }
        member
    }

    /// Owning region of every fine node: the region of the nearest coarse
    /// node, ties going to the smallest region id.
    pub fn node_owners(&self, mesh: &FineMesh) -> Vec<usize> {
        let (rx, ry) = self.ratio;
        let w = self.nx + 1;
        (0..mesh.node_count())
            .map(|n| {
                let i = n % (mesh.nx + 1);
                let j = n / (mesh.nx + 1);
                // Integer distances in fine-cell units keep ties exact.
                let ci_lo = i / rx;
                let cj_lo = j / ry;
                let mut best = (usize::MAX, usize::MAX);
                for cj in [cj_lo, cj_lo + 1] {
                    for ci in [ci_lo, ci_lo + 1] {
                        if ci > self.nx || cj > self.ny {
                            continue;
                        }
                        let dx = (i as i64 - (ci * rx) as i64).unsigned_abs() as usize;
                        let dy = (j as i64 - (cj * ry) as i64).unsigned_abs() as usize;
                        let d2 = dx * dx * ry * ry + dy * dy * rx * rx;
                        let id = cj * w + ci;
                        if (d2, id) < best {
                            best = (d2, id);
                        }
                    }
                }
                best.1
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smallest_mesh() {
        let m = FineMesh::build(1, 1).unwrap();
        assert_eq!(m.node_count(), 4);
        assert_eq!(m.triangles.len(), 2);
        assert_eq!(m.boundary_nodes.len(), 4);
    }

    #[test]
    fn rejects_zero_counts() {
        assert!(FineMesh::build(0, 3).is_err());
        assert!(FineMesh::build(3, 0).is_err());
    }

    #[test]
    fn full_size_counts() {
        let m = FineMesh::build(100, 100).unwrap();
        assert_eq!(m.node_count(), 10201);
        assert_eq!(m.triangles.len(), 20000);
        let g = CoarseGrid::build(&m, 10, 10).unwrap();
        assert_eq!(g.coarse_node_count(), 121);
        let interior = &g.regions[5 * 11 + 5];
        assert_eq!(interior.nodes.len(), 21 * 21);
        assert_eq!(interior.coarse_cells, 4);
    }

    #[test]
    fn areas_positive_and_sum_to_one() {
        let m = FineMesh::build(2, 3).unwrap();
        assert_eq!(m.node_count(), 12);
        assert_eq!(m.triangles.len(), 12);
        let mut total = 0.0;
        for t in 0..m.triangles.len() {
            let a = m.signed_area(t);
            assert!(a > 0.0);
            total += a;
        }
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn boundary_nodes_are_exactly_the_rim() {
        let m = FineMesh::build(4, 3).unwrap();
        for (k, p) in m.nodes.iter().enumerate() {
            let on_rim = p[0] == 0.0 || p[0] == 1.0 || p[1] == 0.0 || p[1] == 1.0;
            assert_eq!(on_rim, m.boundary_nodes.contains(&k));
        }
    }

    #[test]
    fn refinement_ratio_one_patches() {
        let m = FineMesh::build(10, 10).unwrap();
        let g = CoarseGrid::build(&m, 10, 10).unwrap();
        let r = &g.regions[3 * 11 + 4];
        assert_eq!((r.width(), r.height()), (3, 3));
        assert_eq!(r.triangles.len(), 8);
    }

    #[test]
    fn non_divisible_rejected() {
        let m = FineMesh::build(10, 10).unwrap();
        assert!(matches!(
            CoarseGrid::build(&m, 3, 5),
            Err(Error::NonDivisibleGrid { axis: 'x', .. })
        ));
    }

    #[test]
    fn cell_counts_by_position() {
        let m = FineMesh::build(20, 20).unwrap();
        let g = CoarseGrid::build(&m, 4, 4).unwrap();
        assert_eq!(g.regions[0].coarse_cells, 1);
        assert_eq!(g.regions[2].coarse_cells, 2);
        assert_eq!(g.regions[2 * 5 + 2].coarse_cells, 4);
    }

    #[test]
    fn memberships_and_triangle_cover() {
        let m = FineMesh::build(12, 8).unwrap();
        let g = CoarseGrid::build(&m, 3, 2).unwrap();
        for owners in g.node_memberships(&m) {
            assert!((1..=4).contains(&owners.len()));
        }
        let mut covered = vec![false; m.triangles.len()];
        for r in &g.regions {
            for &t in &r.triangles {
                covered[t] = true;
            }
        }
        assert!(covered.iter().all(|&c| c));
    }

    #[test]
    fn owners_are_members_and_ties_go_low() {
        let m = FineMesh::build(8, 8).unwrap();
        let g = CoarseGrid::build(&m, 2, 2).unwrap();
        let owners = g.node_owners(&m);
        let member = g.node_memberships(&m);
        for (n, &o) in owners.iter().enumerate() {
            assert!(member[n].contains(&o));
        }
        // node (2, 0) is equidistant from coarse nodes 0 and 1
        assert_eq!(owners[m.node_index(2, 0)], 0);
        assert_eq!(owners[m.node_index(3, 0)], 1);
    }

    #[test]
    fn hats_partition_unity() {
        let m = FineMesh::build(20, 10).unwrap();
        let g = CoarseGrid::build(&m, 4, 5).unwrap();
        for p in &m.nodes {
            let s: f64 = (0..g.coarse_node_count()).map(|r| g.hat(r, *p)).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_regions() {
        let m = FineMesh::build(20, 20).unwrap();
        let a = CoarseGrid::build(&m, 4, 4).unwrap();
        let b = CoarseGrid::build(&m, 4, 4).unwrap();
        assert_eq!(a, b);
    }
}
