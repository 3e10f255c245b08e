//! Backward Euler with plain Newton. The same driver runs the fine, coarse and
//! reduced systems through [`NewtonSystem`].

use std::path::Path;
use std::time::Instant;

use log::{debug, info};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{assemble_mass, assemble_source, assemble_stiffness, solve_elliptic_w0, DirichletMap};
use crate::grid::FineMesh;
use crate::linalg::{BandLu, CsrMatrix};
use crate::model::{InitialCondition, Nonlinearity, ParameterSet, PermeabilityField, SourceTerm};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSteppingConfig {
    pub dt: f64,
    pub t_final: f64,
    pub newton_tol: f64,
    pub max_newton: usize,
    /// Stop once `|U^{n+1} - U^n| / dt` falls below this value.
    #[serde(default)]
    pub steady_tol: Option<f64>,
}

impl Default for TimeSteppingConfig {
    fn default() -> Self {
        Self {
            dt: 0.05,
            t_final: 2.0,
            newton_tol: 1e-8,
            max_newton: 25,
            steady_tol: None,
        }
    }
}

impl TimeSteppingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.t_final > 0.0) {
            return Err(Error::InvalidArgument("dt and t_final must be positive".into()));
        }
        if !(self.newton_tol > 0.0) || self.max_newton == 0 {
            return Err(Error::InvalidArgument("need newton_tol > 0 and max_newton >= 1".into()));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_final / self.dt - 1e-9).ceil() as usize
    }
}

/// States at `times`, starting with the initial condition.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    /// One entry per accepted step.
    pub newton_iterations: Vec<usize>,
    /// Seconds spent in the time loop.
    pub wall_time: f64,
}

impl Trajectory {
    pub fn final_state(&self) -> &DVector<f64> {
        self.states.last().expect("trajectory holds the initial state")
    }

    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }

    /// `time, iterations, norm, u[probe]...` per stored state.
    pub fn write_csv(&self, path: &Path, probes: &[usize]) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut head = vec!["time".to_string(), "newton_iterations".into(), "norm".into()];
        head.extend(probes.iter().map(|p| format!("u{p}")));
        w.write_record(&head)?;
        for (k, (t, s)) in self.times.iter().zip(&self.states).enumerate() {
            let it = if k == 0 { 0 } else { self.newton_iterations[k - 1] };
            let mut rec = vec![t.to_string(), it.to_string(), s.norm().to_string()];
            rec.extend(probes.iter().map(|&p| s[p].to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// One implicit step posed as `G(x) = 0`.
pub trait NewtonSystem {
    fn dim(&self) -> usize;

    /// Newton correction `-K(x)^-1 G(x)` for the step leaving `prev`.
    fn correction(&mut self, x: &DVector<f64>, prev: &DVector<f64>, dt: f64) -> Result<DVector<f64>>;
}

/// Newton from `prev` as the initial guess. Returns the new state and the
/// index of the first correction whose norm fell below the tolerance.
pub fn step_newton<S: NewtonSystem + ?Sized>(
    system: &mut S,
    prev: &DVector<f64>,
    config: &TimeSteppingConfig,
    step: usize,
) -> Result<(DVector<f64>, usize)> {
    let mut x = prev.clone();
    let mut last = f64::INFINITY;
    let mut growth = 0;
    for k in 0..=config.max_newton {
        let dx = system.correction(&x, prev, config.dt)?;
        let norm = dx.norm();
        if !norm.is_finite() {
            return Err(Error::NewtonDivergence { step, iteration: k, norm });
        }
        x += &dx;
        if norm < config.newton_tol {
            return Ok((x, k));
        }
        growth = if norm > last { growth + 1 } else { 0 };
        if growth >= 3 {
            return Err(Error::NewtonDivergence { step, iteration: k, norm });
        }
        last = norm;
    }
    Err(Error::NewtonMaxIterations { step, norm: last })
}

pub fn integrate<S: NewtonSystem + ?Sized>(
    system: &mut S,
    x0: DVector<f64>,
    config: &TimeSteppingConfig,
) -> Result<Trajectory> {
    config.validate()?;
    if x0.len() != system.dim() {
        return Err(Error::DimensionMismatch { expected: system.dim(), got: x0.len() });
    }
    let start = Instant::now();
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![x0],
        ..Default::default()
    };
    for n in 1..=config.steps() {
        let prev = traj.final_state();
        let (next, its) = step_newton(system, prev, config, n)?;
        let rate = (&next - prev).norm() / config.dt;
        traj.times.push(n as f64 * config.dt);
        traj.states.push(next);
        traj.newton_iterations.push(its);
        if config.steady_tol.is_some_and(|tol| rate < tol) {
            debug!("steady after {n} steps (rate {rate:.2e})");
            break;
        }
    }
    traj.wall_time = start.elapsed().as_secs_f64();
    Ok(traj)
}

/// Fine-grid operators on interior nodes.
#[derive(Debug, Clone)]
pub struct FineOperators {
    pub map: DirichletMap,
    /// Stiffness with weight `kappa` (the `A_q` of the model).
    pub stiffness: CsrMatrix,
    pub mass: CsrMatrix,
    mass_lu: BandLu,
    pub non: Nonlinearity,
}

impl FineOperators {
    pub fn new(mesh: &FineMesh, kappa: &PermeabilityField, non: Nonlinearity) -> Result<Self> {
        let map = DirichletMap::for_mesh(mesh)?;
        let stiffness = map.restrict_matrix(&assemble_stiffness(mesh, &kappa.values)?);
        let mass = map.restrict_matrix(&assemble_mass(mesh));
        let mass_lu = BandLu::factor(&mass)?;
        Ok(Self { map, stiffness, mass, mass_lu, non })
    }

    pub fn dim(&self) -> usize {
        self.map.len()
    }

    pub fn nodal_b(&self, u: &DVector<f64>, mu: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut b = Vec::with_capacity(u.len());
        let mut db = Vec::with_capacity(u.len());
        for &x in u.iter() {
            let (v, d) = self.non.eval_both(x, mu)?;
            b.push(v);
            db.push(d);
        }
        Ok((b, db))
    }

    /// `F(U) = A_q diag(b(U)) U`.
    pub fn assemble_f(&self, u: &DVector<f64>, mu: f64) -> Result<DVector<f64>> {
        let (b, _) = self.nodal_b(u, mu)?;
        let bu: Vec<f64> = b.iter().zip(u.iter()).map(|(b, u)| b * u).collect();
        Ok(self.stiffness.matvec(&bu))
    }

    pub fn load(&self, mesh: &FineMesh, source: &SourceTerm) -> DVector<f64> {
        self.map.restrict_vector(&assemble_source(mesh, source))
    }

    /// `R(U) = U - U^n + dt M^-1 (F(U) - H)`.
    pub fn residual(
        &self,
        u: &DVector<f64>,
        prev: &DVector<f64>,
        h: &DVector<f64>,
        mu: f64,
        dt: f64,
    ) -> Result<DVector<f64>> {
        let mut r = self.assemble_f(u, mu)? - h;
        self.mass_lu.solve_in_place(r.as_mut_slice());
        Ok(u - prev + r * dt)
    }

    /// `J v = v + dt M^-1 A (Lambda_1 + Lambda_2) v`.
    pub fn jacobian_action(&self, u: &DVector<f64>, mu: f64, dt: f64, v: &DVector<f64>) -> Result<DVector<f64>> {
        let (b, db) = self.nodal_b(u, mu)?;
        let dv: Vec<f64> = (0..u.len()).map(|j| (b[j] + u[j] * db[j]) * v[j]).collect();
        let mut w = self.stiffness.matvec(&dv);
        self.mass_lu.solve_in_place(w.as_mut_slice());
        Ok(v + w * dt)
    }
}

/// Fine-grid step equations, multiplied through by `M`.
pub struct FineSystem<'a> {
    pub ops: &'a FineOperators,
    pub h: DVector<f64>,
    pub mu: f64,
}

impl NewtonSystem for FineSystem<'_> {
    fn dim(&self) -> usize {
        self.ops.dim()
    }

    fn correction(&mut self, x: &DVector<f64>, prev: &DVector<f64>, dt: f64) -> Result<DVector<f64>> {
        let (b, db) = self.ops.nodal_b(x, self.mu)?;
        let bu: Vec<f64> = b.iter().zip(x.iter()).map(|(b, u)| b * u).collect();
        let g = self.ops.mass.matvec((x - prev).as_slice()) + (self.ops.stiffness.matvec(&bu) - &self.h) * dt;
        let d: Vec<f64> = (0..x.len()).map(|j| b[j] + x[j] * db[j]).collect();
        let k = self.ops.mass.add(1.0, &self.ops.stiffness.scale_columns(&d), dt);
        let lu = BandLu::factor(&k)?;
        Ok(-lu.solve(g.as_slice()))
    }
}

/// Interior initial state for a parameter set.
pub fn initial_state(
    mesh: &FineMesh,
    kappa: &PermeabilityField,
    map: &DirichletMap,
    theta: &ParameterSet,
) -> Result<DVector<f64>> {
    match &theta.initial {
        InitialCondition::ScaledW0 { scale } => Ok(solve_elliptic_w0(mesh, kappa, &theta.source)? * *scale),
        InitialCondition::Zero => Ok(DVector::zeros(map.len())),
        InitialCondition::Explicit { values } => {
            if values.len() != map.len() {
                return Err(Error::DimensionMismatch { expected: map.len(), got: values.len() });
            }
            Ok(DVector::from_column_slice(values))
        }
    }
}

/// Full-order reference run for every `mu` of the parameter set.
pub fn solve_fom(
    mesh: &FineMesh,
    kappa: &PermeabilityField,
    ops: &FineOperators,
    theta: &ParameterSet,
    config: &TimeSteppingConfig,
) -> Result<Vec<Trajectory>> {
    let u0 = initial_state(mesh, kappa, &ops.map, theta)?;
    let h = ops.load(mesh, &theta.source);
    theta
        .mu_values
        .iter()
        .map(|&mu| {
            let mut sys = FineSystem { ops, h: h.clone(), mu };
            let traj = integrate(&mut sys, u0.clone(), config)?;
            info!(
                "fine run mu={mu}: {} steps, {:.2}s, newton {:?}",
                traj.steps(),
                traj.wall_time,
                traj.newton_iterations
            );
            Ok(traj)
        })
        .collect()
}
