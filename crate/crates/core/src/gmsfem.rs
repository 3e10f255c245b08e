//! Offline multiscale space: harmonic snapshots on every coarse neighborhood,
//! a local spectral reduction, and partition-of-unity gluing into the global
//! basis matrix `Phi` (interior fine nodes x coarse dofs).

use log::{debug, warn};
use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{assemble_stiffness_on, assemble_weighted_mass_on, DirichletMap};
use crate::grid::{CoarseGrid, FineMesh, Region};
use crate::linalg::{BandLu, CsrMatrix};
use crate::model::{Nonlinearity, PermeabilityField};

/// Weight of the spectral mass form `S`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MassWeight {
    /// `kappa_bar * sum_i |grad chi_i|^2`
    #[default]
    PouGradient,
    /// `kappa_bar`
    Plain,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmsfemConfig {
    pub modes_per_region: usize,
    #[serde(default)]
    pub mass_weight: MassWeight,
}

impl Default for GmsfemConfig {
    fn default() -> Self {
        Self {
            modes_per_region: 3,
            mass_weight: MassWeight::PouGradient,
        }
    }
}

/// Per-region scalar factor `mean_mu b(u_bar_i, mu)` multiplying `kappa`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterAverage {
    pub factors: Vec<f64>,
}

impl ParameterAverage {
    pub fn unit(grid: &CoarseGrid) -> Self {
        Self {
            factors: vec![1.0; grid.regions.len()],
        }
    }

    /// `u_bar_i` is the mean of the given full nodal states over region `i`.
    pub fn from_states(
        grid: &CoarseGrid,
        states: &[DVector<f64>],
        non: &Nonlinearity,
        mus: &[f64],
    ) -> Result<Self> {
        if states.is_empty() || mus.is_empty() {
            return Err(Error::InvalidArgument("averaging needs states and mu values".into()));
        }
        let factors = grid
            .regions
            .iter()
            .map(|r| {
                let total: f64 = states
                    .iter()
                    .map(|s| r.nodes.iter().map(|&n| s[n]).sum::<f64>())
                    .sum();
                let u_bar = total / (states.len() * r.nodes.len()) as f64;
                let mut acc = 0.0;
                for &mu in mus {
                    acc += non.eval(u_bar, mu)?;
                }
                Ok(acc / mus.len() as f64)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { factors })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionSnapshots {
    pub region: usize,
    /// `n_local x M_snap`, rows follow `Region::nodes`.
    pub matrix: DMatrix<f64>,
    /// Patch-boundary node (global id) carrying the unit value of each snapshot.
    pub sources: Vec<usize>,
    pub rank: usize,
}

/// `kappa_bar`-harmonic extensions of the nodal deltas on the patch boundary.
/// Nodes on the domain boundary stay at zero and carry no snapshot.
pub fn build_snapshots(
    mesh: &FineMesh,
    region: &Region,
    kappa_bar: &[f64],
) -> Result<RegionSnapshots> {
    if region.nodes.is_empty() {
        return Err(Error::InvalidArgument(format!("region {} is empty", region.id)));
    }
    let a = assemble_stiffness_on(mesh, kappa_bar, &region.triangles)?;
    let local = a.restrict(&region.nodes, &region.nodes);
    let n_loc = region.nodes.len();
    let (mut inner, mut rim) = (Vec::new(), Vec::new());
    for (k, &n) in region.nodes.iter().enumerate() {
        if region.on_patch_boundary(mesh, n) {
            if !mesh.is_boundary(n) {
                rim.push(k);
            }
        } else {
            inner.push(k);
        }
    }
    let mut matrix = DMatrix::zeros(n_loc, rim.len());
    if !inner.is_empty() {
        let a_ii = local.restrict(&inner, &inner);
        let lu = BandLu::factor(&a_ii)?;
        let a_all_i = local.restrict(&inner, &(0..n_loc).collect::<Vec<_>>());
        for (s, &b) in rim.iter().enumerate() {
            let rhs: Vec<f64> = (0..inner.len()).map(|r| -a_all_i.get(r, b)).collect();
            let x = lu.solve(&rhs);
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::SingularPivot { row: b, value: f64::NAN });
            }
            for (r, &k) in inner.iter().enumerate() {
                matrix[(k, s)] = x[r];
            }
        }
    }
    for (s, &b) in rim.iter().enumerate() {
        matrix[(b, s)] = 1.0;
    }
    let rank = if matrix.ncols() == 0 {
        0
    } else {
        let sv = matrix.clone().singular_values();
        let smax = sv.max();
        sv.iter().filter(|&&s| s > 1e-10 * smax).count()
    };
    if rank < matrix.ncols() {
        warn!("region {}: snapshot rank {rank} < {}", region.id, matrix.ncols());
    }
    Ok(RegionSnapshots {
        region: region.id,
        matrix,
        sources: rim.iter().map(|&k| region.nodes[k]).collect(),
        rank,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionEigen {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Coordinates in the snapshot basis, `S_off`-orthonormal columns.
    pub vectors: DMatrix<f64>,
    pub regularized: bool,
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Smallest `keep` eigenpairs of `A_off v = lambda S_off v` with
/// `A_off = Phi_snap^T A_bar Phi_snap` and `S_off = Phi_snap^T S_bar Phi_snap`.
pub fn offline_eigenproblem(
    snapshots: &RegionSnapshots,
    a_bar: &CsrMatrix,
    s_bar: &CsrMatrix,
    keep: usize,
) -> Result<RegionEigen> {
    let p = &snapshots.matrix;
    let a_off = symmetrize(p.transpose() * a_bar.mul_dense(p));
    let s_off = symmetrize(p.transpose() * s_bar.mul_dense(p));
    solve_pencil(a_off, s_off, keep)
}

/// Symmetric-definite pencil through the Cholesky factor of `s`.
pub fn solve_pencil(a: DMatrix<f64>, s: DMatrix<f64>, keep: usize) -> Result<RegionEigen> {
    let n = s.nrows();
    if n == 0 {
        return Ok(RegionEigen {
            eigenvalues: Vec::new(),
            vectors: DMatrix::zeros(0, 0),
            regularized: false,
        });
    }
    let mut regularized = false;
    let chol = match Cholesky::new(s.clone()) {
        Some(c) => c,
        None => {
            let shift = 1e-12 * s.trace();
            warn!("spectral mass matrix not positive definite; shifting by {shift:e}");
            regularized = true;
            Cholesky::new(s + DMatrix::identity(n, n) * shift)
                .ok_or_else(|| Error::NotPositiveDefinite("regularized S_off".into()))?
        }
    };
    let l = chol.l();
    let l_inv = l
        .clone()
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .ok_or_else(|| Error::NotPositiveDefinite("triangular factor".into()))?;
    let c = symmetrize(&l_inv * a * l_inv.transpose());
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[i]
            .partial_cmp(&eig.eigenvalues[j])
            .unwrap()
            .then(i.cmp(&j))
    });
    let keep = keep.min(n);
    let mut vectors = DMatrix::zeros(n, keep);
    for (k, &o) in order.iter().take(keep).enumerate() {
        let v = l_inv.transpose() * eig.eigenvectors.column(o);
        vectors.set_column(k, &v);
    }
    Ok(RegionEigen {
        eigenvalues: order.iter().take(keep).map(|&o| eig.eigenvalues[o]).collect(),
        vectors,
        regularized,
    })
}

/// Coarse hat values of `region` at the fine nodes of its patch.
pub fn partition_of_unity(mesh: &FineMesh, grid: &CoarseGrid, region: &Region) -> Vec<f64> {
    region
        .nodes
        .iter()
        .map(|&n| grid.hat(region.id, mesh.nodes[n]))
        .collect()
}

/// Per-triangle `sum_i |grad chi_i|^2` at the centroid.
pub fn pou_gradient_energy(mesh: &FineMesh, grid: &CoarseGrid) -> Vec<f64> {
    (0..mesh.triangles.len())
        .map(|t| {
            let c = mesh.centroid(t);
            grid.cell_corners(c)
                .iter()
                .map(|&r| {
                    let g = grid.hat_gradient(r, c);
                    g[0] * g[0] + g[1] * g[1]
                })
                .sum()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiscaleSpace {
    /// `N_int x N_c`; rows are interior fine nodes.
    pub phi: CsrMatrix,
    /// Region id of every column.
    pub column_region: Vec<usize>,
    /// Retained offline eigenvalues per region.
    pub eigenvalues: Vec<Vec<f64>>,
}

impl MultiscaleSpace {
    /// Degenerate space `Phi = I` (no coarsening).
    pub fn identity(n: usize) -> Self {
        Self {
            phi: CsrMatrix::identity(n),
            column_region: vec![0; n],
            eigenvalues: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.phi.ncols
    }

    pub fn fine_dim(&self) -> usize {
        self.phi.nrows
    }

    pub fn modes_per_region(&self) -> Vec<usize> {
        self.eigenvalues.iter().map(Vec::len).collect()
    }

    /// Fine interior vector `Phi z`.
    pub fn downscale(&self, z: &DVector<f64>) -> DVector<f64> {
        self.phi.matvec(z.as_slice())
    }

    /// Full offline construction on every coarse neighborhood.
    pub fn build(
        mesh: &FineMesh,
        grid: &CoarseGrid,
        map: &DirichletMap,
        kappa: &PermeabilityField,
        average: &ParameterAverage,
        config: &GmsfemConfig,
    ) -> Result<Self> {
        if config.modes_per_region == 0 {
            return Err(Error::InvalidArgument("need at least one mode per region".into()));
        }
        let pou_energy = match config.mass_weight {
            MassWeight::PouGradient => Some(pou_gradient_energy(mesh, grid)),
            MassWeight::Plain => None,
        };
        let mut locals = Vec::with_capacity(grid.regions.len());
        for region in &grid.regions {
            let factor = average.factors[region.id];
            let kappa_bar: Vec<f64> = kappa.values.iter().map(|k| k * factor).collect();
            let kappa_tilde: Vec<f64> = match &pou_energy {
                Some(e) => kappa_bar.iter().zip(e).map(|(k, g)| k * g).collect(),
                None => kappa_bar.clone(),
            };
            let snaps = build_snapshots(mesh, region, &kappa_bar)?;
            let a_bar = assemble_stiffness_on(mesh, &kappa_bar, &region.triangles)?
                .restrict(&region.nodes, &region.nodes);
            let s_bar = assemble_weighted_mass_on(mesh, &kappa_tilde, &region.triangles)?
                .restrict(&region.nodes, &region.nodes);
            let eig = offline_eigenproblem(&snaps, &a_bar, &s_bar, config.modes_per_region)?;
            debug!(
                "region {}: {} snapshots (rank {}), eigenvalues {:?}",
                region.id,
                snaps.matrix.ncols(),
                snaps.rank,
                eig.eigenvalues
            );
            locals.push((snaps, eig));
        }
        assemble_multiscale_basis(mesh, grid, map, &locals)
    }
}

/// Glues `chi_i * (Phi_snap v_k)` into global columns ordered by
/// `(region, eigenvalue rank)`. Each column is scaled to unit max-norm with a
/// positive largest entry.
pub fn assemble_multiscale_basis(
    mesh: &FineMesh,
    grid: &CoarseGrid,
    map: &DirichletMap,
    locals: &[(RegionSnapshots, RegionEigen)],
) -> Result<MultiscaleSpace> {
    if locals.len() != grid.regions.len() {
        return Err(Error::DimensionMismatch {
            expected: grid.regions.len(),
            got: locals.len(),
        });
    }
    let mut triplets = Vec::new();
    let mut column_region = Vec::new();
    let mut eigenvalues = Vec::new();
    for (region, (snaps, eig)) in grid.regions.iter().zip(locals) {
        let chi = partition_of_unity(mesh, grid, region);
        for k in 0..eig.vectors.ncols() {
            let local = &snaps.matrix * eig.vectors.column(k);
            let mut entries: Vec<(usize, f64)> = region
                .nodes
                .iter()
                .enumerate()
                .filter_map(|(l, &n)| map.global_to_interior[n].map(|row| (row, chi[l] * local[l])))
                .filter(|&(_, v)| v != 0.0)
                .collect();
            let (peak, scale) = entries
                .iter()
                .fold((0.0_f64, 0.0_f64), |(p, s), &(_, v)| if v.abs() > p { (v.abs(), v) } else { (p, s) });
            if !(peak > 0.0) || !peak.is_finite() {
                return Err(Error::ZeroBasisColumn {
                    region: region.id,
                    column: k,
                });
            }
            let col = column_region.len();
            for (_, v) in entries.iter_mut() {
                *v /= scale;
            }
            triplets.extend(entries.into_iter().map(|(row, v)| (row, col, v)));
            column_region.push(region.id);
        }
        eigenvalues.push(eig.eigenvalues.clone());
    }
    let phi = CsrMatrix::from_triplets(map.len(), column_region.len(), triplets);
    Ok(MultiscaleSpace {
        phi,
        column_region,
        eigenvalues,
    })
}
