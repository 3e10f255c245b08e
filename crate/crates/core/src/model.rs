//! Coefficients of the model problem: channelized permeability, the
//! exponential nonlinearity `b(u, mu)`, source terms and parameter sets.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::FineMesh;

/// Axis-aligned rectangle `[x0, x1] x [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Strip {
    pub x: [f64; 2],
    pub y: [f64; 2],
}

impl Strip {
    fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.x[0] && p[0] <= self.x[1] && p[1] >= self.y[0] && p[1] <= self.y[1]
    }

    fn inside_unit_square(&self) -> bool {
        let ok = |r: [f64; 2]| r[0] >= 0.0 && r[1] <= 1.0 && r[0] < r[1];
        ok(self.x) && ok(self.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelLayout {
    pub strips: Vec<Strip>,
    /// Mirror the field across the diagonal, turning horizontal channels vertical.
    #[serde(default)]
    pub rotated: bool,
}

impl Default for ChannelLayout {
    /// Three long horizontal channels plus four short inclusions.
    fn default() -> Self {
        let channel = |yc: f64| Strip {
            x: [0.05, 0.95],
            y: [yc - 0.015, yc + 0.015],
        };
        Self {
            strips: vec![
                channel(0.22),
                channel(0.52),
                channel(0.82),
                Strip { x: [0.12, 0.30], y: [0.36, 0.39] },
                Strip { x: [0.58, 0.76], y: [0.35, 0.38] },
                Strip { x: [0.30, 0.33], y: [0.60, 0.74] },
                Strip { x: [0.68, 0.86], y: [0.65, 0.68] },
            ],
            rotated: false,
        }
    }
}

impl ChannelLayout {
    pub fn rotated(mut self) -> Self {
        self.rotated = !self.rotated;
        self
    }
}

/// Piecewise-constant conductivity, one value per fine triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct PermeabilityField {
    pub values: Vec<f64>,
    pub kappa_min: f64,
    pub eta: f64,
}

impl PermeabilityField {
    pub fn channels(mesh: &FineMesh, eta: f64, layout: &ChannelLayout) -> Result<Self> {
        if !(eta >= 1.0) {
            return Err(Error::InvalidLayout(format!("eta must be >= 1, got {eta}")));
        }
        if let Some(s) = layout.strips.iter().find(|s| !s.inside_unit_square()) {
            return Err(Error::InvalidLayout(format!("strip {s:?} leaves the unit square")));
        }
        let values = (0..mesh.triangles.len())
            .map(|t| {
                let c = mesh.centroid(t);
                let p = if layout.rotated { [c[1], c[0]] } else { c };
                if layout.strips.iter().any(|s| s.contains(p)) {
                    eta
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self {
            values,
            kappa_min: 1.0,
            eta,
        })
    }

    pub fn uniform(mesh: &FineMesh, value: f64) -> Self {
        Self {
            values: vec![value; mesh.triangles.len()],
            kappa_min: value,
            eta: value,
        }
    }

    /// Reads `triangle,kappa` rows (header required).
    pub fn from_csv(mesh: &FineMesh, path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let mut values = vec![f64::NAN; mesh.triangles.len()];
        for rec in rdr.deserialize() {
            let (t, v): (usize, f64) = rec?;
            let slot = values.get_mut(t).ok_or_else(|| {
                Error::Format(format!("triangle index {t} out of range"))
            })?;
            *slot = v;
        }
        if let Some(t) = values.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Format(format!("missing or nonpositive value for triangle {t}")));
        }
        let kappa_min = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let eta = values.iter().cloned().fold(0.0, f64::max);
        Ok(Self {
            values,
            kappa_min,
            eta,
        })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["triangle", "kappa"])?;
        for (t, v) in self.values.iter().enumerate() {
            w.serialize((t, v))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn contrast(&self) -> f64 {
        let max = self.values.iter().cloned().fold(0.0, f64::max);
        let min = self.values.iter().cloned().fold(f64::INFINITY, f64::min);
        max / min
    }
}

pub const DEFAULT_EXPONENT_BOUND: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NonlinearityKind {
    /// `b(u, mu) = exp(mu * u)`
    ExpMuU,
    /// `b(u, mu) = exp(mu * (shift + u))`
    ExpMuShifted { shift: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Nonlinearity {
    #[serde(flatten)]
    pub kind: NonlinearityKind,
    #[serde(default = "default_bound")]
    pub exponent_bound: f64,
}

fn default_bound() -> f64 {
    DEFAULT_EXPONENT_BOUND
}

impl Nonlinearity {
    pub fn exp() -> Self {
        Self {
            kind: NonlinearityKind::ExpMuU,
            exponent_bound: DEFAULT_EXPONENT_BOUND,
        }
    }

    pub fn exp_shifted(shift: f64) -> Self {
        Self {
            kind: NonlinearityKind::ExpMuShifted { shift },
            exponent_bound: DEFAULT_EXPONENT_BOUND,
        }
    }

    fn exponent(&self, u: f64, mu: f64) -> f64 {
        match self.kind {
            NonlinearityKind::ExpMuU => mu * u,
            NonlinearityKind::ExpMuShifted { shift } => mu * (shift + u),
        }
    }

    pub fn eval(&self, u: f64, mu: f64) -> Result<f64> {
        let e = self.exponent(u, mu);
        if !(e <= self.exponent_bound) {
            return Err(Error::ExponentOverflow {
                exponent: e,
                bound: self.exponent_bound,
            });
        }
        Ok(e.exp())
    }

    /// `d b / d u`; equals `mu * b` for both kinds.
    pub fn eval_db(&self, u: f64, mu: f64) -> Result<f64> {
        Ok(mu * self.eval(u, mu)?)
    }

    /// `(b, db/du)` in one exponential evaluation.
    pub fn eval_both(&self, u: f64, mu: f64) -> Result<(f64, f64)> {
        let b = self.eval(u, mu)?;
        Ok((b, mu * b))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SourceTerm {
    Constant { value: f64 },
    /// `1 + sin(k pi x) sin(k pi y)`; `k = 2` and `k = 4` are the standard variants.
    SinProduct { k: f64 },
}

impl SourceTerm {
    pub fn sin2pi() -> Self {
        SourceTerm::SinProduct { k: 2.0 }
    }

    pub fn sin4pi() -> Self {
        SourceTerm::SinProduct { k: 4.0 }
    }

    pub fn eval(&self, p: [f64; 2]) -> f64 {
        match *self {
            SourceTerm::Constant { value } => value,
            SourceTerm::SinProduct { k } => 1.0 + (k * PI * p[0]).sin() * (k * PI * p[1]).sin(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitialCondition {
    /// `scale * w0`, with `w0` the elliptic solution for the offline source.
    ScaledW0 { scale: f64 },
    Zero,
    /// Values on interior fine nodes.
    Explicit { values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSet {
    pub source: SourceTerm,
    pub mu_values: Vec<f64>,
    pub initial: InitialCondition,
}

impl ParameterSet {
    pub fn new(source: SourceTerm, mu_values: Vec<f64>, initial: InitialCondition) -> Result<Self> {
        if mu_values.is_empty() {
            return Err(Error::InvalidArgument("parameter set needs at least one mu".into()));
        }
        Ok(Self {
            source,
            mu_values,
            initial,
        })
    }
}
