//! Online reduced model: POD of the coarse snapshots, DEIM of `F(Phi z)` and
//! an `N_r`-dimensional Newton solve whose nonlinear cost is a fixed number
//! of stiffness-row gathers.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use log::{info, warn};
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fom::{initial_state, integrate, FineOperators, NewtonSystem, TimeSteppingConfig, Trajectory};
use crate::gmsfem::MultiscaleSpace;
use crate::grid::FineMesh;
use crate::io;
use crate::linalg::{dense_solve, CsrMatrix};
use crate::model::{Nonlinearity, ParameterSet, PermeabilityField};
use crate::reduction::{deim_select, pod, DeimModel, PodSelection};

/// Rows of `F(V alpha)` at the DEIM indices, evaluated from the stiffness
/// stencil of each row and the matching rows of `V`.
#[derive(Debug)]
pub struct RowEvaluator {
    /// `L x N_f` block of stiffness rows.
    rows: CsrMatrix,
    /// Distinct fine nodes touched by the rows.
    nodes: Vec<usize>,
    /// Position in `nodes` of each stored entry of `rows`.
    slot: Vec<usize>,
    /// Rows of `V` at `nodes`.
    v_nodes: DMatrix<f64>,
    gathers: AtomicUsize,
}

impl Clone for RowEvaluator {
    fn clone(&self) -> Self {
        Self {
            rows: self.rows.clone(),
            nodes: self.nodes.clone(),
            slot: self.slot.clone(),
            v_nodes: self.v_nodes.clone(),
            gathers: AtomicUsize::new(self.gathers.load(Ordering::Relaxed)),
        }
    }
}

impl RowEvaluator {
    pub fn new(rows: CsrMatrix, v: &DMatrix<f64>) -> Self {
        let mut nodes: Vec<usize> = rows.col_idx.clone();
        nodes.sort_unstable();
        nodes.dedup();
        let slot = rows
            .col_idx
            .iter()
            .map(|c| nodes.binary_search(c).expect("node collected above"))
            .collect();
        let v_nodes = DMatrix::from_fn(nodes.len(), v.ncols(), |r, c| v[(nodes[r], c)]);
        Self {
            rows,
            nodes,
            slot,
            v_nodes,
            gathers: AtomicUsize::new(0),
        }
    }

    pub fn from_stiffness(stiffness: &CsrMatrix, indices: &[usize], v: &DMatrix<f64>) -> Self {
        let all: Vec<usize> = (0..stiffness.ncols).collect();
        Self::new(stiffness.restrict(indices, &all), v)
    }

    pub fn len(&self) -> usize {
        self.rows.nrows
    }

    pub fn is_empty(&self) -> bool {
        self.rows.nrows == 0
    }

    pub fn touched_nodes(&self) -> &[usize] {
        &self.nodes
    }

    /// Row gathers performed so far.
    pub fn gathers(&self) -> usize {
        self.gathers.load(Ordering::Relaxed)
    }

    pub fn reset_counter(&self) {
        self.gathers.store(0, Ordering::Relaxed);
    }

    /// Sampled rows of `F` and their derivative with respect to `alpha`.
    pub fn eval(&self, alpha: &DVector<f64>, mu: f64, non: &Nonlinearity) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let u = &self.v_nodes * alpha;
        let mut bu = Vec::with_capacity(u.len());
        let mut d = Vec::with_capacity(u.len());
        for &x in u.iter() {
            let (b, db) = non.eval_both(x, mu)?;
            bu.push(b * x);
            d.push(b + x * db);
        }
        let n_r = alpha.len();
        let mut f = DVector::zeros(self.len());
        let mut jac = DMatrix::zeros(self.len(), n_r);
        for r in 0..self.len() {
            self.gathers.fetch_add(1, Ordering::Relaxed);
            let (lo, hi) = (self.rows.row_ptr[r], self.rows.row_ptr[r + 1]);
            for e in lo..hi {
                let (a, s) = (self.rows.values[e], self.slot[e]);
                f[r] += a * bu[s];
                let w = a * d[s];
                for c in 0..n_r {
                    jac[(r, c)] += w * self.v_nodes[(s, c)];
                }
            }
        }
        Ok((f, jac))
    }
}

#[derive(Debug, Clone)]
pub struct RomSystem {
    /// `N_c x N_r`.
    pub psi: DMatrix<f64>,
    /// `Phi Psi`, `N_f x N_r`.
    pub v: DMatrix<f64>,
    pub mass: DMatrix<f64>,
    pub deim: DeimModel,
    /// `V^T Psi* (P^T Psi*)^-1`, `N_r x L`.
    pub closure: DMatrix<f64>,
    pub evaluator: RowEvaluator,
    /// Fine mass matrix, kept for projecting online initial data.
    pub fine_mass: CsrMatrix,
    pub pod_eigenvalues: Vec<f64>,
}

/// POD of the coarse snapshots and DEIM of the F-snapshots. Requests above
/// the numerical rank are reduced with a warning.
pub fn build_rom(
    z: &DMatrix<f64>,
    f_snapshots: &DMatrix<f64>,
    n_r: usize,
    points: usize,
    space: &MultiscaleSpace,
    ops: &FineOperators,
) -> Result<RomSystem> {
    let basis = pod(z, PodSelection::Modes(n_r))?;
    if basis.dim() < n_r {
        warn!("POD reduced to {} modes", basis.dim());
    }
    let f_basis = pod(f_snapshots, PodSelection::Modes(points))?;
    if f_basis.dim() < points {
        warn!("global DEIM reduced to {} points", f_basis.dim());
    }
    let deim = deim_select(&f_basis.modes)?;
    let v = space.phi.mul_dense(&basis.modes);
    let mass = v.transpose() * ops.mass.mul_dense(&v);
    if mass.clone().cholesky().is_none() {
        return Err(Error::NotPositiveDefinite("reduced mass matrix".into()));
    }
    let closure = v.transpose() * &deim.projector;
    let evaluator = RowEvaluator::from_stiffness(&ops.stiffness, &deim.indices, &v);
    info!(
        "reduced model: {} modes, {} DEIM points, DEIM condition {:.2e}",
        basis.dim(),
        deim.dim(),
        deim.condition
    );
    Ok(RomSystem {
        psi: basis.modes,
        v,
        mass,
        deim,
        closure,
        evaluator,
        fine_mass: ops.mass.clone(),
        pod_eigenvalues: basis.eigenvalues,
    })
}

impl RomSystem {
    pub fn dim(&self) -> usize {
        self.psi.ncols()
    }

    /// `F_hat = C F(V alpha)|_P` together with its Jacobian.
    pub fn f_hat_with_jacobian(&self, alpha: &DVector<f64>, mu: f64, non: &Nonlinearity) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let (f, jac) = self.evaluator.eval(alpha, mu, non)?;
        Ok((&self.closure * f, &self.closure * jac))
    }

    pub fn f_hat(&self, alpha: &DVector<f64>, mu: f64, non: &Nonlinearity) -> Result<DVector<f64>> {
        Ok(self.f_hat_with_jacobian(alpha, mu, non)?.0)
    }

    /// `U~ = Phi Psi alpha` on interior fine nodes.
    pub fn downscale(&self, alpha: &DVector<f64>) -> DVector<f64> {
        &self.v * alpha
    }

    /// `M`-weighted projection of fine interior data onto `range(V)`.
    pub fn project(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        let rhs = self.v.transpose() * self.fine_mass.matvec(u.as_slice());
        self.mass
            .clone()
            .cholesky()
            .map(|c| c.solve(&rhs))
            .ok_or_else(|| Error::NotPositiveDefinite("reduced mass matrix".into()))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        io::write_matrix(&dir.join("rom_psi.csv"), &self.psi)?;
        io::write_matrix(&dir.join("rom_v.csv"), &self.v)?;
        io::write_matrix(&dir.join("rom_mass.csv"), &self.mass)?;
        io::write_matrix(&dir.join("rom_closure.csv"), &self.closure)?;
        io::write_sparse(&dir.join("rom_rows.csv"), &self.evaluator.rows)?;
        io::write_sparse(&dir.join("fine_mass.csv"), &self.fine_mass)?;
        io::write_matrix(
            &dir.join("rom_pod_eigenvalues.csv"),
            &DMatrix::from_column_slice(self.pod_eigenvalues.len(), 1, &self.pod_eigenvalues),
        )?;
        self.deim.save(dir, "global_deim")
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let psi = io::read_matrix(&dir.join("rom_psi.csv"))?;
        let v = io::read_matrix(&dir.join("rom_v.csv"))?;
        let mass = io::read_matrix(&dir.join("rom_mass.csv"))?;
        let closure = io::read_matrix(&dir.join("rom_closure.csv"))?;
        let rows = io::read_sparse(&dir.join("rom_rows.csv"))?;
        let fine_mass = io::read_sparse(&dir.join("fine_mass.csv"))?;
        let eig = io::read_matrix(&dir.join("rom_pod_eigenvalues.csv"))?;
        let deim = DeimModel::load(dir, "global_deim")?;
        let n_r = psi.ncols();
        if v.ncols() != n_r
            || mass.shape() != (n_r, n_r)
            || closure.shape() != (n_r, deim.dim())
            || rows.nrows != deim.dim()
            || rows.ncols != v.nrows()
        {
            return Err(Error::Format("inconsistent reduced-model artifacts".into()));
        }
        Ok(Self {
            evaluator: RowEvaluator::new(rows, &v),
            psi,
            v,
            mass,
            deim,
            closure,
            fine_mass,
            pod_eigenvalues: eig.iter().copied().collect(),
        })
    }
}

pub struct RomStep<'a> {
    pub rom: &'a RomSystem,
    pub non: Nonlinearity,
    pub h: DVector<f64>,
    pub mu: f64,
}

impl NewtonSystem for RomStep<'_> {
    fn dim(&self) -> usize {
        self.rom.dim()
    }

    fn correction(&mut self, a: &DVector<f64>, prev: &DVector<f64>, dt: f64) -> Result<DVector<f64>> {
        let (f, jac) = self.rom.f_hat_with_jacobian(a, self.mu, &self.non)?;
        let g = &self.rom.mass * (a - prev) + (f - &self.h) * dt;
        let k = &self.rom.mass + jac * dt;
        Ok(-dense_solve(k, &g)?)
    }
}

/// Online solve for each `mu` of `theta`; the source is reprojected.
pub fn solve_rom(
    rom: &RomSystem,
    mesh: &FineMesh,
    kappa: &PermeabilityField,
    ops: &FineOperators,
    theta: &ParameterSet,
    config: &TimeSteppingConfig,
) -> Result<Vec<Trajectory>> {
    let u0 = initial_state(mesh, kappa, &ops.map, theta)?;
    let a0 = rom.project(&u0)?;
    let h = rom.v.transpose() * ops.load(mesh, &theta.source);
    theta
        .mu_values
        .iter()
        .map(|&mu| {
            let mut step = RomStep { rom, non: ops.non, h: h.clone(), mu };
            let traj = integrate(&mut step, a0.clone(), config)?;
            info!(
                "reduced run mu={mu}: {} steps, {:.4}s, newton {:?}",
                traj.steps(),
                traj.wall_time,
                traj.newton_iterations
            );
            Ok(traj)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coarse::{solve_coarse, CoarseRun, LocalNonlinearity};
    use crate::gmsfem::{GmsfemConfig, ParameterAverage};
    use crate::grid::CoarseGrid;
    use crate::model::{ChannelLayout, InitialCondition, SourceTerm};

    struct Setup {
        mesh: FineMesh,
        kappa: PermeabilityField,
        ops: FineOperators,
        space: MultiscaleSpace,
    }

    fn setup() -> Setup {
        let mesh = FineMesh::build(20, 20).unwrap();
        let grid = CoarseGrid::build(&mesh, 4, 4).unwrap();
        let kappa = PermeabilityField::channels(&mesh, 1e4, &ChannelLayout::default()).unwrap();
        let ops = FineOperators::new(&mesh, &kappa, Nonlinearity::exp()).unwrap();
        let space = MultiscaleSpace::build(
            &mesh,
            &grid,
            &ops.map,
            &kappa,
            &ParameterAverage::unit(&grid),
            &GmsfemConfig::default(),
        )
        .unwrap();
        Setup { mesh, kappa, ops, space }
    }

    fn cfg() -> TimeSteppingConfig {
        TimeSteppingConfig { t_final: 0.25, newton_tol: 1e-11, ..Default::default() }
    }

    fn theta(mu: f64) -> ParameterSet {
        ParameterSet::new(SourceTerm::sin2pi(), vec![mu], InitialCondition::ScaledW0 { scale: 0.5 }).unwrap()
    }

    fn offline(s: &Setup, mu: f64) -> CoarseRun {
        solve_coarse(&s.mesh, &s.kappa, &s.ops, &s.space, &theta(mu), &cfg(), LocalNonlinearity::Exact, true)
            .unwrap()
            .remove(0)
    }

    #[test]
    fn full_rank_rom_reproduces_coarse_trajectory() {
        let s = setup();
        let short = TimeSteppingConfig { t_final: 0.2, ..cfg() };
        let from_rest = ParameterSet { initial: InitialCondition::Zero, ..theta(3.0) };
        let run = solve_coarse(&s.mesh, &s.kappa, &s.ops, &s.space, &from_rest, &short, LocalNonlinearity::Exact, true)
            .unwrap()
            .remove(0);
        let z = run.z_matrix();
        let rom = build_rom(&z, &run.f_snapshots, z.ncols(), run.f_snapshots.ncols(), &s.space, &s.ops).unwrap();
        assert_eq!(rom.dim(), 4);
        let traj = solve_rom(&rom, &s.mesh, &s.kappa, &s.ops, &from_rest, &short).unwrap().remove(0);
        for (a, zc) in traj.states.iter().zip(&run.trajectory.states) {
            let diff = &rom.psi * a - zc;
            assert!(diff.amax() < 1e-8, "{}", diff.amax());
        }
    }

    #[test]
    fn f_hat_matches_dense_oracle() {
        let s = setup();
        let run = offline(&s, 2.0);
        let rom = build_rom(&run.z_matrix(), &run.f_snapshots, 3, 3, &s.space, &s.ops).unwrap();
        let alpha = DVector::from_vec(vec![0.3, -0.1, 0.05]);
        let got = rom.f_hat(&alpha, 2.0, &s.ops.non).unwrap();
        let f = s.ops.assemble_f(&rom.downscale(&alpha), 2.0).unwrap();
        let sampled = DVector::from_iterator(rom.deim.dim(), rom.deim.indices.iter().map(|&i| f[i]));
        let oracle = rom.v.transpose() * (&rom.deim.projector * sampled);
        assert!((&got - &oracle).amax() <= 1e-10 * oracle.amax());
        assert_eq!(rom.f_hat(&DVector::zeros(3), 2.0, &s.ops.non).unwrap().amax(), 0.0);
    }

    #[test]
    fn reduced_jacobian_matches_differences() {
        let s = setup();
        let run = offline(&s, 4.0);
        let rom = build_rom(&run.z_matrix(), &run.f_snapshots, 3, 4, &s.space, &s.ops).unwrap();
        let alpha = DVector::from_vec(vec![0.2, 0.1, -0.05]);
        let (_, jac) = rom.f_hat_with_jacobian(&alpha, 4.0, &s.ops.non).unwrap();
        for c in 0..3 {
            let mut e = DVector::zeros(3);
            e[c] = 1e-6;
            let fd = (rom.f_hat(&(&alpha + &e), 4.0, &s.ops.non).unwrap()
                - rom.f_hat(&(&alpha - &e), 4.0, &s.ops.non).unwrap())
                / 2e-6;
            assert!((fd - jac.column(c)).norm() <= 1e-6 * jac.norm());
        }
    }

    #[test]
    fn deim_rows_are_interpolated_exactly() {
        let s = setup();
        let run = offline(&s, 2.0);
        let rom = build_rom(&run.z_matrix(), &run.f_snapshots, 3, 3, &s.space, &s.ops).unwrap();
        let alpha = DVector::from_vec(vec![0.1, 0.2, 0.3]);
        let (rows, _) = rom.evaluator.eval(&alpha, 2.0, &s.ops.non).unwrap();
        let recon = &rom.deim.projector * &rows;
        let f = s.ops.assemble_f(&rom.downscale(&alpha), 2.0).unwrap();
        for (k, &i) in rom.deim.indices.iter().enumerate() {
            assert!((recon[i] - f[i]).abs() <= 1e-10 * f.amax());
            assert!((rows[k] - f[i]).abs() <= 1e-12 * f.amax());
        }
    }

    #[test]
    fn counter_counts_row_gathers() {
        let s = setup();
        let run = offline(&s, 2.0);
        let rom = build_rom(&run.z_matrix(), &run.f_snapshots, 2, 3, &s.space, &s.ops).unwrap();
        rom.evaluator.reset_counter();
        let traj = solve_rom(&rom, &s.mesh, &s.kappa, &s.ops, &theta(2.5), &cfg()).unwrap().remove(0);
        let iterations: usize = traj.newton_iterations.iter().map(|k| k + 1).sum();
        assert_eq!(rom.evaluator.gathers(), iterations * 3);
        assert!(rom.evaluator.touched_nodes().len() <= 3 * 7);
    }

    #[test]
    fn downscale_and_norms() {
        let s = setup();
        let run = offline(&s, 2.0);
        let rom = build_rom(&run.z_matrix(), &run.f_snapshots, 3, 3, &s.space, &s.ops).unwrap();
        assert_eq!(rom.downscale(&DVector::zeros(3)).amax(), 0.0);
        let alpha = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let u = rom.downscale(&alpha);
        let fine = u.dot(&s.ops.mass.matvec(u.as_slice()));
        let reduced = alpha.dot(&(&rom.mass * &alpha));
        assert!((fine - reduced).abs() <= 1e-10 * fine);
        let z = &rom.psi * &alpha;
        assert!((s.space.downscale(&z) - &u).amax() < 1e-12);
        assert!((rom.project(&u).unwrap() - alpha).amax() < 1e-9);
    }

    #[test]
    fn artifacts_roundtrip() {
        let s = setup();
        let run = offline(&s, 2.0);
        let rom = build_rom(&run.z_matrix(), &run.f_snapshots, 2, 2, &s.space, &s.ops).unwrap();
        let dir = tempfile::tempdir().unwrap();
        rom.save(dir.path()).unwrap();
        let back = RomSystem::load(dir.path()).unwrap();
        assert_eq!(back.psi, rom.psi);
        assert_eq!(back.closure, rom.closure);
        let a = DVector::from_vec(vec![0.4, 0.1]);
        assert_eq!(back.f_hat(&a, 2.0, &s.ops.non).unwrap(), rom.f_hat(&a, 2.0, &s.ops.non).unwrap());
    }
}
