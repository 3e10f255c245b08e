//! Proper orthogonal decomposition and the discrete empirical interpolation
//! method, shared by the per-region and global hyper-reduction stages.

use std::path::Path;

use log::warn;
use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::io;

/// Eigenvalues below this fraction of the largest are treated as numerical zero.
pub const POD_CUTOFF: f64 = 1e-12;
pub const DEIM_CONDITION_WARNING: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PodSelection {
    Modes(usize),
    /// Smallest `m` whose leading eigenvalues hold at least this fraction of the energy.
    Energy(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PodBasis {
    /// `n x m`, orthonormal columns.
    pub modes: DMatrix<f64>,
    /// Retained eigenvalues of `F^T F`, nonincreasing.
    pub eigenvalues: Vec<f64>,
    /// Full sorted spectrum of `F^T F` (clamped at zero).
    pub spectrum: Vec<f64>,
    /// Number of eigenvalues above the cutoff.
    pub rank: usize,
}

impl PodBasis {
    pub fn dim(&self) -> usize {
        self.modes.ncols()
    }

    pub fn energy_fraction(&self) -> f64 {
        let total: f64 = self.spectrum.iter().sum();
        self.eigenvalues.iter().sum::<f64>() / total
    }

    /// Energy discarded by the truncation, `sum_{i > m} lambda_i`.
    pub fn tail_energy(&self) -> f64 {
        self.spectrum[self.dim()..].iter().sum()
    }

    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        io::write_matrix(&dir.join(format!("{stem}_modes.csv")), &self.modes)?;
        let ev = DMatrix::from_column_slice(self.spectrum.len(), 1, &self.spectrum);
        io::write_matrix(&dir.join(format!("{stem}_spectrum.csv")), &ev)?;
        Ok(())
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let modes = io::read_matrix(&dir.join(format!("{stem}_modes.csv")))?;
        let spectrum: Vec<f64> =
            io::read_matrix(&dir.join(format!("{stem}_spectrum.csv")))?.iter().copied().collect();
        let m = modes.ncols();
        if spectrum.len() < m {
            return Err(Error::Format(format!("{stem}: spectrum shorter than mode count")));
        }
        let lmax = spectrum.first().copied().unwrap_or(0.0);
        let rank = spectrum.iter().filter(|&&l| l > POD_CUTOFF * lmax).count();
        Ok(Self {
            modes,
            eigenvalues: spectrum[..m].to_vec(),
            spectrum,
            rank,
        })
    }
}

/// POD of the snapshot columns of `f` through the eigendecomposition of the
/// Gram matrix `F^T F`.
pub fn pod(f: &DMatrix<f64>, selection: PodSelection) -> Result<PodBasis> {
    if f.ncols() == 0 || f.nrows() == 0 {
        return Err(Error::InvalidArgument("empty snapshot matrix".into()));
    }
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite snapshot entry".into()));
    }
    if f.iter().all(|&v| v == 0.0) {
        return Err(Error::ZeroSnapshots);
    }
    let gram = f.transpose() * f;
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    let spectrum: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k].max(0.0)).collect();
    let lmax = spectrum[0];
    let rank = spectrum.iter().filter(|&&l| l > POD_CUTOFF * lmax).count();

    let wanted = match selection {
        PodSelection::Modes(m) => {
            if m == 0 {
                return Err(Error::InvalidArgument("POD needs at least one mode".into()));
            }
            m
        }
        PodSelection::Energy(frac) => {
            if !(frac > 0.0 && frac <= 1.0) {
                return Err(Error::InvalidArgument(format!("energy fraction {frac} not in (0, 1]")));
            }
            let total: f64 = spectrum.iter().sum();
            let mut acc = 0.0;
            let mut m = 0;
            for &l in &spectrum {
                acc += l;
                m += 1;
                if acc >= frac * total * (1.0 - 1e-14) {
                    break;
                }
            }
            m
        }
    };
    let m = if wanted > rank {
        warn!("POD: requested {wanted} modes but numerical rank is {rank}; keeping {rank}");
        rank
    } else {
        wanted
    };

    let mut modes = DMatrix::zeros(f.nrows(), m);
    for (j, &k) in order.iter().take(m).enumerate() {
        let v = eig.eigenvectors.column(k);
        let col = f * v / spectrum[j].sqrt();
        modes.set_column(j, &col);
    }
    reorthonormalize(&mut modes);
    Ok(PodBasis {
        modes,
        eigenvalues: spectrum[..m].to_vec(),
        spectrum,
        rank,
    })
}

/// Two passes of modified Gram-Schmidt; keeps the span and the column order.
fn reorthonormalize(q: &mut DMatrix<f64>) {
    for _ in 0..2 {
        for j in 0..q.ncols() {
            for i in 0..j {
                let r = q.column(i).dot(&q.column(j));
                let qi = q.column(i).clone_owned();
                q.column_mut(j).axpy(-r, &qi, 1.0);
            }
            let n = q.column(j).norm();
            q.column_mut(j).unscale_mut(n);
        }
    }
}

/// DEIM basis, interpolation rows and the stored projector `Psi (P^T Psi)^-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeimModel {
    pub basis: DMatrix<f64>,
    pub indices: Vec<usize>,
    pub projector: DMatrix<f64>,
    /// 2-norm condition number of `P^T Psi`.
    pub condition: f64,
}

fn argmax_abs(v: impl Iterator<Item = f64>) -> usize {
    // strict comparison keeps the smallest index on ties
    let mut best = (0, f64::NEG_INFINITY);
    for (k, x) in v.enumerate() {
        if x.abs() > best.1 {
            best = (k, x.abs());
        }
    }
    best.0
}

fn rows_of(basis: &DMatrix<f64>, rows: &[usize], cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols, |r, c| basis[(rows[r], c)])
}

/// Greedy selection of interpolation rows for the columns of `basis`.
pub fn deim_select(basis: &DMatrix<f64>) -> Result<DeimModel> {
    let m = basis.ncols();
    if m == 0 {
        return Err(Error::InvalidArgument("DEIM needs at least one basis vector".into()));
    }
    let mut indices = vec![argmax_abs(basis.column(0).iter().copied())];
    if basis[(indices[0], 0)] == 0.0 {
        return Err(Error::SingularDeim { step: 1 });
    }
    for k in 1..m {
        let pt_psi = rows_of(basis, &indices, k);
        let rhs = DVector::from_iterator(k, indices.iter().map(|&i| basis[(i, k)]));
        let w = pt_psi.lu().solve(&rhs).ok_or(Error::SingularDeim { step: k + 1 })?;
        let r = basis.column(k) - basis.columns(0, k) * w;
        let next = argmax_abs(r.iter().copied());
        if r[next] == 0.0 || indices.contains(&next) {
            return Err(Error::SingularDeim { step: k + 1 });
        }
        indices.push(next);
    }
    let pt_psi = rows_of(basis, &indices, m);
    let inv = pt_psi
        .clone()
        .try_inverse()
        .ok_or(Error::SingularDeim { step: m })?;
    let sv = pt_psi.singular_values();
    let condition = sv.max() / sv.min();
    if !condition.is_finite() {
        return Err(Error::SingularDeim { step: m });
    }
    if condition > DEIM_CONDITION_WARNING {
        warn!("DEIM: cond(P^T Psi) = {condition:.3e}");
    }
    Ok(DeimModel {
        projector: basis * inv,
        basis: basis.clone(),
        indices,
        condition,
    })
}

impl DeimModel {
    pub fn dim(&self) -> usize {
        self.indices.len()
    }

    /// `f~ = Psi (P^T Psi)^-1 (f at the interpolation rows)`.
    pub fn apply(&self, sampled: &[f64]) -> Result<DVector<f64>> {
        if sampled.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: sampled.len(),
            });
        }
        Ok(&self.projector * DVector::from_column_slice(sampled))
    }

    /// Convenience wrapper gathering the interpolation rows from a full vector.
    pub fn approximate(&self, f: &DVector<f64>) -> Result<DVector<f64>> {
        let s: Vec<f64> = self.indices.iter().map(|&i| f[i]).collect();
        self.apply(&s)
    }

    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        io::write_matrix(&dir.join(format!("{stem}_basis.csv")), &self.basis)?;
        io::write_indices(&dir.join(format!("{stem}_indices.csv")), &self.indices)?;
        io::write_matrix(&dir.join(format!("{stem}_projector.csv")), &self.projector)?;
        Ok(())
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let basis = io::read_matrix(&dir.join(format!("{stem}_basis.csv")))?;
        let indices = io::read_indices(&dir.join(format!("{stem}_indices.csv")))?;
        let projector = io::read_matrix(&dir.join(format!("{stem}_projector.csv")))?;
        if indices.len() != basis.ncols() || projector.shape() != basis.shape() {
            return Err(Error::Format(format!("{stem}: inconsistent DEIM dimensions")));
        }
        let sv = rows_of(&basis, &indices, basis.ncols()).singular_values();
        Ok(Self {
            condition: sv.max() / sv.min(),
            basis,
            indices,
            projector,
        })
    }
}

pub fn deim_apply(model: &DeimModel, sampled: &[f64]) -> Result<DVector<f64>> {
    model.apply(sampled)
}
