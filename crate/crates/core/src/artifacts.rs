//! Offline artifact directory: CSV files plus a copy of the configuration.

use std::path::Path;

use crate::error::Result;
use crate::harness::{ExperimentSpec, Harvest, OfflineStage, Problem};
use crate::io;
use crate::rom::RomSystem;

pub const CONFIG_FILE: &str = "config.toml";

/// Writes the offline products of one configuration into `dir`.
pub fn save_offline(
    dir: &Path,
    spec: &ExperimentSpec,
    problem: &Problem,
    stage: &OfflineStage,
    harvest: &Harvest,
    rom: &RomSystem,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(CONFIG_FILE), spec.to_toml()?)?;
    problem.mesh.write_csv(dir, "mesh")?;
    problem.kappa.write_csv(&dir.join("permeability.csv"))?;
    io::write_sparse(&dir.join("phi.csv"), &stage.space.phi)?;
    io::write_matrix(&dir.join("snapshots_z.csv"), &harvest.z())?;
    io::write_matrix(&dir.join("snapshots_f.csv"), &harvest.f_snapshots())?;
    if let Some(local) = &harvest.local {
        local.save(dir)?;
    }
    rom.save(dir)
}

pub fn load_rom(dir: &Path) -> Result<RomSystem> {
    RomSystem::load(dir)
}

pub fn load_config(dir: &Path) -> Result<ExperimentSpec> {
    ExperimentSpec::load(&dir.join(CONFIG_FILE))
}
