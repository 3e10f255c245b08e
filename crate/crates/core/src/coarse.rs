//! Newton on the multiscale space with per-neighborhood DEIM of the nodal
//! nonlinearity `b(u, mu)`, plus the offline snapshot harvest.

use std::path::Path;

use log::{info, warn};
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fom::{initial_state, integrate, FineOperators, NewtonSystem, TimeSteppingConfig, Trajectory};
use crate::gmsfem::MultiscaleSpace;
use crate::grid::{CoarseGrid, FineMesh};
use crate::io;
use crate::linalg::{dense_solve, galerkin_product, CsrMatrix};
use crate::model::{ParameterSet, PermeabilityField};
use crate::reduction::{deim_select, pod, DeimModel, PodSelection};

/// DEIM model for the b-values of one neighborhood.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionDeim {
    pub region: usize,
    /// Interior-numbered fine nodes of the neighborhood; rows of the model.
    pub nodes: Vec<usize>,
    pub model: DeimModel,
}

impl RegionDeim {
    /// Interpolation points as interior node numbers.
    pub fn points(&self) -> Vec<usize> {
        self.model.indices.iter().map(|&k| self.nodes[k]).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalDeimSet {
    pub regions: Vec<RegionDeim>,
    /// For every interior fine node: owning region and its row in that model.
    pub owner: Vec<(usize, usize)>,
}

/// Interior-numbered nodes of every neighborhood.
pub fn region_interior_nodes(grid: &CoarseGrid, global_to_interior: &[Option<usize>]) -> Vec<Vec<usize>> {
    grid.regions
        .iter()
        .map(|r| r.nodes.iter().filter_map(|&n| global_to_interior[n]).collect())
        .collect()
}

/// Trains one DEIM model per neighborhood from b-values of the given
/// interior fine states, each paired with its `mu`.
pub fn train_local_deim(
    mesh: &FineMesh,
    grid: &CoarseGrid,
    ops: &FineOperators,
    states: &[(f64, &DVector<f64>)],
    points: usize,
) -> Result<LocalDeimSet> {
    if points == 0 {
        return Err(Error::InvalidArgument("need at least one local DEIM point".into()));
    }
    if states.is_empty() {
        return Err(Error::ZeroSnapshots);
    }
    let node_sets = region_interior_nodes(grid, &ops.map.global_to_interior);
    let mut regions = Vec::with_capacity(node_sets.len());
    for (id, nodes) in node_sets.into_iter().enumerate() {
        let mut snaps = DMatrix::zeros(nodes.len(), states.len());
        for (c, (mu, u)) in states.iter().enumerate() {
            for (r, &n) in nodes.iter().enumerate() {
                snaps[(r, c)] = ops.non.eval(u[n], *mu)?;
            }
        }
        let basis = pod(&snaps, PodSelection::Modes(points))?;
        if basis.dim() < points {
            warn!("region {id}: local DEIM reduced to {} points", basis.dim());
        }
        let model = deim_select(&basis.modes)?;
        regions.push(RegionDeim { region: id, nodes, model });
    }
    let owners = grid.node_owners(mesh);
    let mut owner = vec![(0, 0); ops.dim()];
    for (g, &o) in owners.iter().enumerate() {
        if let Some(i) = ops.map.global_to_interior[g] {
            let row = regions[o]
                .nodes
                .iter()
                .position(|&n| n == i)
                .ok_or_else(|| Error::InvalidArgument(format!("node {g} outside its owner {o}")))?;
            owner[i] = (o, row);
        }
    }
    Ok(LocalDeimSet { regions, owner })
}

impl LocalDeimSet {
    pub fn points_per_region(&self) -> Vec<usize> {
        self.regions.iter().map(|r| r.model.dim()).collect()
    }

    /// Reconstructed nodal b-values from point samples of `u`.
    pub fn reconstruct(&self, u: &DVector<f64>, mu: f64, ops: &FineOperators) -> Result<Vec<f64>> {
        let mut coeffs = Vec::with_capacity(self.regions.len());
        for r in &self.regions {
            let s = r
                .points()
                .iter()
                .map(|&p| ops.non.eval(u[p], mu))
                .collect::<Result<Vec<_>>>()?;
            coeffs.push(s);
        }
        Ok(self
            .owner
            .iter()
            .map(|&(reg, row)| {
                let p = &self.regions[reg].model.projector;
                coeffs[reg].iter().enumerate().map(|(k, s)| p[(row, k)] * s).sum()
            })
            .collect())
    }

    /// `diag(u) d b~/du`: row `j` couples node `j` to the points of its owner.
    pub fn coupling(&self, u: &DVector<f64>, mu: f64, ops: &FineOperators) -> Result<CsrMatrix> {
        let mut slopes = Vec::with_capacity(self.regions.len());
        for r in &self.regions {
            let s = r
                .points()
                .iter()
                .map(|&p| ops.non.eval_db(u[p], mu))
                .collect::<Result<Vec<_>>>()?;
            slopes.push(s);
        }
        let mut t = Vec::with_capacity(self.owner.len() * 3);
        for (j, &(reg, row)) in self.owner.iter().enumerate() {
            let r = &self.regions[reg];
            for (k, &p) in r.model.indices.iter().enumerate() {
                t.push((j, r.nodes[p], u[j] * r.model.projector[(row, k)] * slopes[reg][k]));
            }
        }
        Ok(CsrMatrix::from_triplets(self.owner.len(), self.owner.len(), t))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        for r in &self.regions {
            r.model.save(dir, &format!("local_deim_{}", r.region))?;
            io::write_indices(&dir.join(format!("local_deim_{}_nodes.csv", r.region)), &r.nodes)?;
        }
        let regs: Vec<usize> = self.owner.iter().map(|o| o.0).collect();
        let rows: Vec<usize> = self.owner.iter().map(|o| o.1).collect();
        io::write_indices(&dir.join("local_deim_owner_region.csv"), &regs)?;
        io::write_indices(&dir.join("local_deim_owner_row.csv"), &rows)?;
        Ok(())
    }

    pub fn load(dir: &Path, region_count: usize) -> Result<Self> {
        let regions = (0..region_count)
            .map(|id| {
                Ok(RegionDeim {
                    region: id,
                    model: DeimModel::load(dir, &format!("local_deim_{id}"))?,
                    nodes: io::read_indices(&dir.join(format!("local_deim_{id}_nodes.csv")))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let regs = io::read_indices(&dir.join("local_deim_owner_region.csv"))?;
        let rows = io::read_indices(&dir.join("local_deim_owner_row.csv"))?;
        if regs.len() != rows.len() || regs.iter().any(|&r| r >= region_count) {
            return Err(Error::Format("inconsistent local DEIM ownership".into()));
        }
        Ok(Self { regions, owner: regs.into_iter().zip(rows).collect() })
    }
}

/// Source of the nodal nonlinearity inside the coarse solve.
#[derive(Debug, Clone, Copy)]
pub enum LocalNonlinearity<'a> {
    Exact,
    Deim(&'a LocalDeimSet),
}

impl LocalNonlinearity<'_> {
    /// Nodal `b`, the diagonal of `d(b u)/du`, and for DEIM the off-diagonal
    /// coupling through the interpolation points.
    fn eval(&self, u: &DVector<f64>, mu: f64, ops: &FineOperators) -> Result<(Vec<f64>, Vec<f64>, Option<CsrMatrix>)> {
        match self {
            LocalNonlinearity::Exact => {
                let (b, db) = ops.nodal_b(u, mu)?;
                let d = (0..u.len()).map(|j| b[j] + u[j] * db[j]).collect();
                Ok((b, d, None))
            }
            LocalNonlinearity::Deim(set) => {
                let b = set.reconstruct(u, mu, ops)?;
                let w = set.coupling(u, mu, ops)?;
                Ok((b.clone(), b, Some(w)))
            }
        }
    }
}

/// `Phi^T F(Phi z)` with the chosen nonlinearity.
pub fn reduced_f(
    z: &DVector<f64>,
    mu: f64,
    space: &MultiscaleSpace,
    ops: &FineOperators,
    local: LocalNonlinearity,
) -> Result<DVector<f64>> {
    let u = space.downscale(z);
    let (b, _, _) = local.eval(&u, mu, ops)?;
    let bu: Vec<f64> = b.iter().zip(u.iter()).map(|(b, u)| b * u).collect();
    let f = ops.stiffness.matvec(&bu);
    Ok(space.phi.transpose_matvec(f.as_slice()))
}

/// `Phi^T M Phi`.
pub fn coarse_mass(space: &MultiscaleSpace, ops: &FineOperators) -> Result<DMatrix<f64>> {
    let m = galerkin_product(&space.phi, &ops.mass, None, &space.phi);
    if m.clone().cholesky().is_none() {
        return Err(Error::NotPositiveDefinite("coarse mass matrix".into()));
    }
    Ok(m)
}

pub struct CoarseSystem<'a> {
    pub ops: &'a FineOperators,
    pub space: &'a MultiscaleSpace,
    pub local: LocalNonlinearity<'a>,
    pub mass: DMatrix<f64>,
    pub h: DVector<f64>,
    pub mu: f64,
}

impl NewtonSystem for CoarseSystem<'_> {
    fn dim(&self) -> usize {
        self.space.dim()
    }

    fn correction(&mut self, z: &DVector<f64>, prev: &DVector<f64>, dt: f64) -> Result<DVector<f64>> {
        let u = self.space.downscale(z);
        let (b, d, w) = self.local.eval(&u, self.mu, self.ops)?;
        let bu: Vec<f64> = b.iter().zip(u.iter()).map(|(b, u)| b * u).collect();
        let f = self.space.phi.transpose_matvec(self.ops.stiffness.matvec(&bu).as_slice());
        let g = &self.mass * (z - prev) + (f - &self.h) * dt;
        let mut jac = galerkin_product(&self.space.phi, &self.ops.stiffness, Some(&d), &self.space.phi);
        if let Some(w) = w {
            jac += galerkin_product(&self.space.phi, &self.ops.stiffness, None, &w.mul_sparse(&self.space.phi));
        }
        let k = &self.mass + jac * dt;
        Ok(-dense_solve(k, &g)?)
    }
}

/// `M`-weighted projection of a fine vector onto `range(Phi)`.
pub fn project_initial(u0: &DVector<f64>, space: &MultiscaleSpace, ops: &FineOperators, mass: &DMatrix<f64>) -> Result<DVector<f64>> {
    let rhs = space.phi.transpose_matvec(ops.mass.matvec(u0.as_slice()).as_slice());
    mass.clone()
        .cholesky()
        .map(|c| c.solve(&rhs))
        .ok_or_else(|| Error::NotPositiveDefinite("coarse mass matrix".into()))
}

/// Coarse run for one `mu` with its harvested snapshots.
#[derive(Debug, Clone)]
pub struct CoarseRun {
    pub mu: f64,
    pub trajectory: Trajectory,
    /// Fine-dimension `F(Phi z)` with exact `b`, one column per accepted step.
    pub f_snapshots: DMatrix<f64>,
}

impl CoarseRun {
    /// Coarse coordinates after each accepted step; the initial state is left out.
    pub fn z_matrix(&self) -> DMatrix<f64> {
        let states = &self.trajectory.states[1..];
        if states.is_empty() {
            DMatrix::zeros(self.trajectory.states[0].len(), 0)
        } else {
            DMatrix::from_columns(states)
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn solve_coarse(
    mesh: &FineMesh,
    kappa: &PermeabilityField,
    ops: &FineOperators,
    space: &MultiscaleSpace,
    theta: &ParameterSet,
    config: &TimeSteppingConfig,
    local: LocalNonlinearity,
    harvest: bool,
) -> Result<Vec<CoarseRun>> {
    let mass = coarse_mass(space, ops)?;
    let u0 = initial_state(mesh, kappa, &ops.map, theta)?;
    let z0 = project_initial(&u0, space, ops, &mass)?;
    let h = space.phi.transpose_matvec(ops.load(mesh, &theta.source).as_slice());
    let mut runs = Vec::with_capacity(theta.mu_values.len());
    for &mu in &theta.mu_values {
        let mut sys = CoarseSystem { ops, space, local, mass: mass.clone(), h: h.clone(), mu };
        let trajectory = integrate(&mut sys, z0.clone(), config)?;
        info!(
            "coarse run mu={mu}: {} steps, {:.2}s, newton {:?}",
            trajectory.steps(),
            trajectory.wall_time,
            trajectory.newton_iterations
        );
        let f_snapshots = if harvest {
            let cols = trajectory
                .states
                .iter()
                .skip(1)
                .map(|z| ops.assemble_f(&space.downscale(z), mu))
                .collect::<Result<Vec<_>>>()?;
            if cols.is_empty() {
                DMatrix::zeros(ops.dim(), 0)
            } else {
                DMatrix::from_columns(&cols)
            }
        } else {
            DMatrix::zeros(ops.dim(), 0)
        };
        runs.push(CoarseRun { mu, trajectory, f_snapshots });
    }
    Ok(runs)
}
