//! Experiment driver: configuration, the offline/online pipeline with caching
//! across sweep rows, error metrics and CSV output.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use log::{info, warn};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::coarse::{solve_coarse, train_local_deim, CoarseRun, LocalDeimSet, LocalNonlinearity};
use crate::error::{Error, Result};
use crate::fem::{assemble_stiffness, solve_elliptic_w0};
use crate::fom::{initial_state, solve_fom, FineOperators, TimeSteppingConfig, Trajectory};
use crate::gmsfem::{GmsfemConfig, MultiscaleSpace, ParameterAverage};
use crate::grid::{CoarseGrid, FineMesh};
use crate::linalg::CsrMatrix;
use crate::model::{ChannelLayout, InitialCondition, Nonlinearity, ParameterSet, PermeabilityField, SourceTerm};
use crate::rom::{build_rom, solve_rom, RomSystem};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub fine: [usize; 2],
    pub coarse: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PermeabilitySpec {
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default)]
    pub rotated: bool,
    /// `triangle,kappa` CSV replacing the channel layout.
    #[serde(default)]
    pub file: Option<PathBuf>,
}

fn default_eta() -> f64 {
    1e6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReductionSpec {
    pub pod_modes: usize,
    /// Points per neighborhood; 0 keeps the exact nonlinearity offline.
    pub local_points: usize,
    pub global_points: usize,
    /// Multiply `pod_modes` by the number of offline `mu`.
    #[serde(default = "yes")]
    pub pod_modes_per_offline_mu: bool,
    /// Multiply `global_points` by the number of offline `mu`.
    #[serde(default = "yes")]
    pub global_points_per_offline_mu: bool,
}

fn yes() -> bool {
    true
}

impl ReductionSpec {
    pub fn totals(&self, offline_mu_count: usize) -> (usize, usize) {
        let scale = |n: usize, per: bool| if per { n * offline_mu_count } else { n };
        (
            scale(self.pod_modes, self.pod_modes_per_offline_mu),
            scale(self.global_points, self.global_points_per_offline_mu),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomMu {
    pub mean: f64,
    pub std: f64,
    pub draws: usize,
    #[serde(default)]
    pub seed: u64,
}

impl RandomMu {
    pub fn sample(&self) -> Result<Vec<f64>> {
        let dist = Normal::new(self.mean, self.std)
            .map_err(|e| Error::Config(format!("normal distribution: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        Ok((0..self.draws).map(|_| dist.sample(&mut rng)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default)]
    pub example: Option<u8>,
    pub grid: GridSpec,
    pub permeability: PermeabilitySpec,
    pub nonlinearity: Nonlinearity,
    #[serde(default)]
    pub gmsfem: GmsfemConfig,
    #[serde(default)]
    pub time: TimeSteppingConfig,
    pub offline: ParameterSet,
    pub online: ParameterSet,
    pub reduction: ReductionSpec,
    /// Replaces the online `mu` values with seeded normal draws.
    #[serde(default)]
    pub random_mu: Option<RandomMu>,
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.reduction;
        if r.pod_modes == 0 || r.global_points == 0 {
            return Err(Error::Config("pod_modes and global_points must be >= 1".into()));
        }
        if self.grid.fine.contains(&0) || self.grid.coarse.contains(&0) {
            return Err(Error::Config("grid sizes must be >= 1".into()));
        }
        if self.offline.mu_values.is_empty() || (self.online.mu_values.is_empty() && self.random_mu.is_none()) {
            return Err(Error::Config("offline and online mu lists must be non-empty".into()));
        }
        if let Some(rm) = &self.random_mu {
            if rm.draws == 0 || !(rm.std > 0.0) {
                return Err(Error::Config("random_mu needs draws >= 1 and std > 0".into()));
            }
        }
        self.time.validate()
    }

    /// Online `mu` values after applying the random draws, if any.
    pub fn online_mu(&self) -> Result<Vec<f64>> {
        match &self.random_mu {
            Some(rm) => rm.sample(),
            None => Ok(self.online.mu_values.clone()),
        }
    }

    /// Base configuration of example `id` at full resolution.
    pub fn example(id: u8) -> Result<Self> {
        let sin2 = SourceTerm::sin2pi();
        let w0 = InitialCondition::ScaledW0 { scale: 1.0 };
        let mut spec = Self {
            example: Some(id),
            grid: GridSpec { fine: [100, 100], coarse: [10, 10] },
            permeability: PermeabilitySpec { eta: 1e6, rotated: false, file: None },
            nonlinearity: Nonlinearity::exp(),
            gmsfem: GmsfemConfig::default(),
            time: TimeSteppingConfig::default(),
            offline: ParameterSet::new(sin2, vec![10.0], w0.clone())?,
            online: ParameterSet::new(sin2, vec![40.0], InitialCondition::ScaledW0 { scale: 0.5 })?,
            reduction: ReductionSpec {
                pod_modes: 2,
                local_points: 3,
                global_points: 5,
                pod_modes_per_offline_mu: true,
                global_points_per_offline_mu: true,
            },
            random_mu: None,
        };
        match id {
            1 => {}
            2 => {
                spec.reduction.local_points = 1;
                spec.reduction.global_points = 1;
            }
            3 => {
                spec.nonlinearity = Nonlinearity::exp_shifted(0.9);
                spec.offline = ParameterSet::new(sin2, vec![2.0, 5.0], w0)?;
                spec.online = ParameterSet::new(SourceTerm::sin4pi(), vec![3.0], InitialCondition::Zero)?;
                spec.reduction.local_points = 3;
                spec.reduction.global_points = 3;
            }
            4 => {
                spec.offline = ParameterSet::new(sin2, vec![10.0, 40.0], w0)?;
                spec.online = ParameterSet::new(sin2, vec![24.0], InitialCondition::Zero)?;
                spec.reduction.local_points = 3;
                spec.reduction.global_points = 3;
            }
            5 => {
                spec.offline = ParameterSet::new(sin2, vec![10.0, 25.0, 39.0], w0)?;
                spec.online = ParameterSet::new(sin2, vec![25.0], InitialCondition::Zero)?;
                spec.reduction.local_points = 3;
                spec.reduction.global_points = 3;
                spec.random_mu = Some(RandomMu { mean: 25.0, std: 2.0, draws: 20, seed: 2024 });
            }
            _ => return Err(Error::Config(format!("unknown example {id}"))),
        }
        Ok(spec)
    }
}

/// One configuration of a sweep; `None` keeps the spec's value.
#[derive(Debug, Clone, PartialEq)]
pub struct Variant {
    pub label: String,
    pub offline_mu: Option<Vec<f64>>,
    pub pod_modes: Option<usize>,
    pub local_points: Option<usize>,
    pub global_points: Option<usize>,
}

impl Variant {
    pub fn base(label: &str) -> Self {
        Self {
            label: label.to_string(),
            offline_mu: None,
            pod_modes: None,
            local_points: None,
            global_points: None,
        }
    }

    pub fn points(label: &str, local: usize, global: usize) -> Self {
        Self {
            local_points: Some(local),
            global_points: Some(global),
            ..Self::base(label)
        }
    }
}

/// Rows of example `id`.
pub fn example_variants(id: u8) -> Vec<Variant> {
    let mut v = Vec::new();
    match id {
        1 => {
            for m in 2..=5 {
                v.push(Variant { pod_modes: Some(m), ..Variant::base(&format!("pod{m}")) });
            }
            for (l, g) in [(2, 2), (2, 3), (3, 3)] {
                v.push(Variant { pod_modes: Some(2), ..Variant::points(&format!("timing-l{l}g{g}"), l, g) });
            }
            for m in 3..=5 {
                v.push(Variant { pod_modes: Some(m), ..Variant::points(&format!("timing-pod{m}"), 2, 3) });
            }
        }
        2 | 4 => {
            for l in 1..=3 {
                for g in 1..=3 {
                    v.push(Variant::points(&format!("l{l}g{g}"), l, g));
                }
            }
            if id == 4 {
                for (l, g) in [(1, 1), (3, 3)] {
                    v.push(Variant { offline_mu: Some(vec![10.0]), ..Variant::points(&format!("single10-l{l}g{g}"), l, g) });
                }
            }
        }
        3 => {
            v.push(Variant { offline_mu: Some(vec![2.0]), ..Variant::base("single2") });
            v.push(Variant { offline_mu: Some(vec![5.0]), ..Variant::base("single5") });
            v.push(Variant::base("combined"));
        }
        5 => v.push(Variant::base("random")),
        _ => {}
    }
    v
}

/// Fine problem shared by all rows of a sweep.
pub struct Problem {
    pub mesh: FineMesh,
    pub grid: CoarseGrid,
    pub kappa: PermeabilityField,
    pub ops: FineOperators,
}

impl Problem {
    pub fn new(spec: &ExperimentSpec) -> Result<Self> {
        let mesh = FineMesh::build(spec.grid.fine[0], spec.grid.fine[1])?;
        let grid = CoarseGrid::build(&mesh, spec.grid.coarse[0], spec.grid.coarse[1])?;
        let kappa = match &spec.permeability.file {
            Some(path) => PermeabilityField::from_csv(&mesh, path)?,
            None => {
                let mut layout = ChannelLayout::default();
                if spec.permeability.rotated {
                    layout = layout.rotated();
                }
                PermeabilityField::channels(&mesh, spec.permeability.eta, &layout)?
            }
        };
        let ops = FineOperators::new(&mesh, &kappa, spec.nonlinearity)?;
        Ok(Self { mesh, grid, kappa, ops })
    }
}

/// Multiscale space and the exact-nonlinearity coarse states used to train
/// the local DEIM models.
pub struct OfflineStage {
    pub theta: ParameterSet,
    pub space: MultiscaleSpace,
    pub training: Vec<(f64, Vec<DVector<f64>>)>,
}

pub fn offline_stage(
    problem: &Problem,
    theta: &ParameterSet,
    gmsfem: &GmsfemConfig,
    time: &TimeSteppingConfig,
) -> Result<OfflineStage> {
    let w0 = solve_elliptic_w0(&problem.mesh, &problem.kappa, &theta.source)?;
    let average = ParameterAverage::from_states(
        &problem.grid,
        &[problem.ops.map.extend(w0.as_slice())],
        &problem.ops.non,
        &theta.mu_values,
    )?;
    let space = MultiscaleSpace::build(&problem.mesh, &problem.grid, &problem.ops.map, &problem.kappa, &average, gmsfem)?;
    info!("multiscale space: {} coarse dofs", space.dim());
    let runs = solve_coarse(
        &problem.mesh,
        &problem.kappa,
        &problem.ops,
        &space,
        theta,
        time,
        LocalNonlinearity::Exact,
        false,
    )?;
    let training = runs
        .iter()
        .map(|r| (r.mu, r.trajectory.states.iter().map(|z| space.downscale(z)).collect()))
        .collect();
    Ok(OfflineStage { theta: theta.clone(), space, training })
}

/// Coarse runs with the local DEIM in place, harvesting `Z` and F-snapshots.
pub struct Harvest {
    pub local: Option<LocalDeimSet>,
    pub runs: Vec<CoarseRun>,
}

impl Harvest {
    pub fn z(&self) -> DMatrix<f64> {
        concat_columns(self.runs.iter().map(|r| r.z_matrix()).collect())
    }

    pub fn f_snapshots(&self) -> DMatrix<f64> {
        concat_columns(self.runs.iter().map(|r| r.f_snapshots.clone()).collect())
    }
}

fn concat_columns(blocks: Vec<DMatrix<f64>>) -> DMatrix<f64> {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    let cols: Vec<_> = blocks.iter().flat_map(|b| b.column_iter().map(|c| c.into_owned())).collect();
    if cols.is_empty() {
        DMatrix::zeros(rows, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

pub fn harvest(
    problem: &Problem,
    stage: &OfflineStage,
    time: &TimeSteppingConfig,
    local_points: usize,
) -> Result<Harvest> {
    let local = if local_points == 0 {
        None
    } else {
        let states: Vec<(f64, &DVector<f64>)> = stage
            .training
            .iter()
            .flat_map(|(mu, s)| s.iter().map(move |u| (*mu, u)))
            .collect();
        Some(train_local_deim(&problem.mesh, &problem.grid, &problem.ops, &states, local_points)?)
    };
    let nl = match &local {
        Some(set) => LocalNonlinearity::Deim(set),
        None => LocalNonlinearity::Exact,
    };
    let runs = solve_coarse(
        &problem.mesh,
        &problem.kappa,
        &problem.ops,
        &stage.space,
        &stage.theta,
        time,
        nl,
        true,
    )?;
    Ok(Harvest { local, runs })
}

pub fn build_online(
    problem: &Problem,
    stage: &OfflineStage,
    harvest: &Harvest,
    pod_modes: usize,
    global_points: usize,
) -> Result<RomSystem> {
    build_rom(&harvest.z(), &harvest.f_snapshots(), pod_modes, global_points, &stage.space, &problem.ops)
}

/// Stiffness with `kappa * b(U, mu)` frozen at `u`, averaging `b` over the
/// vertices of each triangle.
pub fn frozen_stiffness(problem: &Problem, u: &DVector<f64>, mu: f64) -> Result<CsrMatrix> {
    let full = problem.ops.map.extend(u.as_slice());
    let mut b = Vec::with_capacity(full.len());
    for &x in full.iter() {
        b.push(problem.ops.non.eval(x, mu)?);
    }
    let weight: Vec<f64> = problem
        .mesh
        .triangles
        .iter()
        .zip(&problem.kappa.values)
        .map(|(t, k)| k * (b[t[0]] + b[t[1]] + b[t[2]]) / 3.0)
        .collect();
    Ok(problem.ops.map.restrict_matrix(&assemble_stiffness(&problem.mesh, &weight)?))
}

/// `sqrt((U - U~)^T A (U - U~) / U^T A U)`.
pub fn energy_error(u: &DVector<f64>, approx: &DVector<f64>, a: &CsrMatrix) -> Result<f64> {
    if u.len() != approx.len() || a.nrows != u.len() {
        return Err(Error::DimensionMismatch { expected: u.len(), got: approx.len() });
    }
    let norm = u.dot(&a.matvec(u.as_slice()));
    if !(norm > 0.0) {
        return Err(Error::ZeroReferenceNorm);
    }
    let e = u - approx;
    Ok((e.dot(&a.matvec(e.as_slice())).max(0.0) / norm).sqrt())
}

/// `R = T_GL / T_fine * 100`.
pub fn timing_ratio(t_gl: f64, t_fine: f64) -> Result<f64> {
    if !(t_fine > 0.0) {
        return Err(Error::InvalidArgument(format!("fine time must be positive, got {t_fine}")));
    }
    Ok(t_gl / t_fine * 100.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub example: u8,
    pub label: String,
    pub offline_mu: Vec<f64>,
    pub online_mu: f64,
    pub pod_modes: usize,
    pub local_points: usize,
    pub global_points: usize,
    pub times: Vec<f64>,
    pub errors: Vec<f64>,
    pub t_fine: f64,
    pub t_gl: f64,
    pub failure: Option<String>,
}

impl ResultRow {
    pub fn steady_error(&self) -> f64 {
        self.errors.last().copied().unwrap_or(f64::NAN)
    }

    pub fn ratio(&self) -> f64 {
        timing_ratio(self.t_gl, self.t_fine).unwrap_or(f64::NAN)
    }

    pub fn ok(&self) -> bool {
        self.failure.is_none()
    }
}

fn mu_key(mus: &[f64]) -> Vec<u64> {
    mus.iter().map(|m| m.to_bits()).collect()
}

/// Runs sweeps while reusing fine references, offline stages and harvests.
pub struct Runner<'a> {
    pub spec: &'a ExperimentSpec,
    pub problem: Problem,
    references: HashMap<u64, Trajectory>,
    stages: HashMap<Vec<u64>, OfflineStage>,
    harvests: HashMap<(Vec<u64>, usize), Harvest>,
}

impl<'a> Runner<'a> {
    pub fn new(spec: &'a ExperimentSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            spec,
            problem: Problem::new(spec)?,
            references: HashMap::new(),
            stages: HashMap::new(),
            harvests: HashMap::new(),
        })
    }

    pub fn reference(&mut self, mu: f64) -> Result<&Trajectory> {
        if !self.references.contains_key(&mu.to_bits()) {
            let theta = ParameterSet { mu_values: vec![mu], ..self.spec.online.clone() };
            let p = &self.problem;
            let traj = solve_fom(&p.mesh, &p.kappa, &p.ops, &theta, &self.spec.time)?.remove(0);
            self.references.insert(mu.to_bits(), traj);
        }
        Ok(&self.references[&mu.to_bits()])
    }

    fn ensure_harvest(&mut self, offline_mu: &[f64], local_points: usize) -> Result<()> {
        let key = mu_key(offline_mu);
        if !self.stages.contains_key(&key) {
            let theta = ParameterSet { mu_values: offline_mu.to_vec(), ..self.spec.offline.clone() };
            let stage = offline_stage(&self.problem, &theta, &self.spec.gmsfem, &self.spec.time)?;
            self.stages.insert(key.clone(), stage);
        }
        let hk = (key.clone(), local_points);
        if !self.harvests.contains_key(&hk) {
            let h = harvest(&self.problem, &self.stages[&key], &self.spec.time, local_points)?;
            self.harvests.insert(hk, h);
        }
        Ok(())
    }

    /// Offline products for a `mu` set, computed on first use.
    pub fn offline(&mut self, offline_mu: &[f64], local_points: usize) -> Result<(&OfflineStage, &Harvest)> {
        self.ensure_harvest(offline_mu, local_points)?;
        let key = mu_key(offline_mu);
        Ok((&self.stages[&key], &self.harvests[&(key.clone(), local_points)]))
    }

    /// Reduced model for the variant.
    pub fn rom(&mut self, variant: &Variant) -> Result<(RomSystem, usize, usize)> {
        let offline_mu = variant.offline_mu.clone().unwrap_or_else(|| self.spec.offline.mu_values.clone());
        let red = ReductionSpec {
            pod_modes: variant.pod_modes.unwrap_or(self.spec.reduction.pod_modes),
            global_points: variant.global_points.unwrap_or(self.spec.reduction.global_points),
            ..self.spec.reduction.clone()
        };
        let local = variant.local_points.unwrap_or(self.spec.reduction.local_points);
        let (n_r, l_g) = red.totals(offline_mu.len());
        self.ensure_harvest(&offline_mu, local)?;
        let key = mu_key(&offline_mu);
        let rom = build_online(&self.problem, &self.stages[&key], &self.harvests[&(key.clone(), local)], n_r, l_g)?;
        Ok((rom, n_r, l_g))
    }

    fn try_row(&mut self, variant: &Variant, online_mu: f64, row: &mut ResultRow) -> Result<()> {
        let (rom, n_r, l_g) = self.rom(variant)?;
        row.pod_modes = n_r;
        row.global_points = l_g;
        let theta = ParameterSet { mu_values: vec![online_mu], ..self.spec.online.clone() };
        let p = &self.problem;
        let traj = solve_rom(&rom, &p.mesh, &p.kappa, &p.ops, &theta, &self.spec.time)?.remove(0);
        let reference = self.reference(online_mu)?.clone();
        if reference.states.len() != traj.states.len() {
            return Err(Error::InvalidArgument(format!(
                "reference has {} states, reduced run {}",
                reference.states.len(),
                traj.states.len()
            )));
        }
        row.t_fine = reference.wall_time;
        row.t_gl = traj.wall_time;
        for (k, (u, a)) in reference.states.iter().zip(&traj.states).enumerate().skip(1) {
            let stiff = frozen_stiffness(&self.problem, u, online_mu)?;
            row.times.push(reference.times[k]);
            row.errors.push(energy_error(u, &rom.downscale(a), &stiff)?);
        }
        Ok(())
    }

    /// One row per online `mu`; failures are recorded, not propagated.
    pub fn run_variant(&mut self, variant: &Variant) -> Result<Vec<ResultRow>> {
        let offline_mu = variant.offline_mu.clone().unwrap_or_else(|| self.spec.offline.mu_values.clone());
        let local = variant.local_points.unwrap_or(self.spec.reduction.local_points);
        let mut rows = Vec::new();
        for mu in self.spec.online_mu()? {
            let mut row = ResultRow {
                example: self.spec.example.unwrap_or(0),
                label: variant.label.clone(),
                offline_mu: offline_mu.clone(),
                online_mu: mu,
                pod_modes: 0,
                local_points: local,
                global_points: 0,
                times: Vec::new(),
                errors: Vec::new(),
                t_fine: f64::NAN,
                t_gl: f64::NAN,
                failure: None,
            };
            if let Err(e) = self.try_row(variant, mu, &mut row) {
                warn!("row {} (mu_on={mu}) failed: {e}", variant.label);
                row.failure = Some(e.to_string());
            } else {
                info!(
                    "row {} mu_on={mu}: steady error {:.4e}, R = {:.3}%",
                    row.label,
                    row.steady_error(),
                    row.ratio()
                );
            }
            rows.push(row);
        }
        Ok(rows)
    }

    pub fn run(&mut self, variants: &[Variant]) -> Result<Vec<ResultRow>> {
        let mut out = Vec::new();
        for v in variants {
            out.extend(self.run_variant(v)?);
        }
        Ok(out)
    }
}

/// Example `id` at the given spec; returns its rows.
pub fn run_example(spec: &ExperimentSpec, id: u8) -> Result<Vec<ResultRow>> {
    let mut runner = Runner::new(spec)?;
    runner.run(&example_variants(id))
}

fn fmt_mu(mus: &[f64]) -> String {
    mus.iter().map(|m| m.to_string()).collect::<Vec<_>>().join(";")
}

/// Summary CSV, one line per row.
pub fn write_rows(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "example",
        "label",
        "offline_mu",
        "online_mu",
        "pod_modes",
        "local_points",
        "global_points",
        "steady_error",
        "t_fine",
        "t_gl",
        "r_percent",
        "status",
    ])?;
    for r in rows {
        w.write_record([
            r.example.to_string(),
            r.label.clone(),
            fmt_mu(&r.offline_mu),
            r.online_mu.to_string(),
            r.pod_modes.to_string(),
            r.local_points.to_string(),
            r.global_points.to_string(),
            r.steady_error().to_string(),
            r.t_fine.to_string(),
            r.t_gl.to_string(),
            r.ratio().to_string(),
            r.failure.clone().unwrap_or_else(|| "ok".into()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Error time series in long format.
pub fn write_error_series(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["label", "online_mu", "time", "energy_error"])?;
    for r in rows {
        for (t, e) in r.times.iter().zip(&r.errors) {
            w.write_record([r.label.clone(), r.online_mu.to_string(), t.to_string(), e.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Initial state helper exposed for the command line.
pub fn online_initial(problem: &Problem, theta: &ParameterSet) -> Result<DVector<f64>> {
    initial_state(&problem.mesh, &problem.kappa, &problem.ops.map, theta)
}
