//! Desk-scale experiment configs and the small gridded data file they use.

use std::path::{Path, PathBuf};

use obsplan::scenarios::{two_basin_fixture, GridFormat};

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::manifest::write_atomic;

pub const GRID_FILE: &str = "two_basins.obsgrid";

pub const TORUS_STATIONARY: &str = r#"# Stationary sensors on the 32x32 torus, k = 1, 2, 3.
name = "torus_stationary"
seed = 0
steps = 3000
outputs = "out/torus_stationary"

[scenario]
kind = "torus"
rows = 32
cols = 32
n_fourier = 2
n_gauss = 3
gauss_width = 2.0
freq_range = [0.05, 0.3]
damp_range = [-0.005, -0.001]
dt = 1.0

[model]
kind = "known"

[sensors]
k = 1
mode = "stationary"

[noise]
q = 1e-3
rho = 1e-4

[sweep]
"sensors.k" = [1, 2, 3]
"#;

pub const TORUS_MOBILE: &str = r#"# One mobile sensor on the 32x32 torus, slow and fast, cycle = Nyquist budget.
name = "torus_mobile"
seed = 0
steps = 3000
outputs = "out/torus_mobile"

[scenario]
kind = "torus"
rows = 32
cols = 32
n_fourier = 2
n_gauss = 3
gauss_width = 2.0
freq_range = [0.05, 0.3]
damp_range = [-0.005, -0.001]
dt = 1.0

[model]
kind = "known"

[sensors]
k = 1
mode = "mobile"
speed = 1.0

[noise]
q = 1e-3
rho = 1e-4

[sweep]
"sensors.speed" = [1.0, 8.0]
"#;

pub const KS_SAMPLING: &str = r#"# Kuramoto-Sivashinsky, four stationary sensors, three sampling intervals.
name = "ks_sampling"
seed = 3
outputs = "out/ks_sampling"

[scenario]
kind = "ks"
n_grid = 256
domain_length = 22.0
dt_solver = 0.05
t_start = 200.0
t_final = 1200.0
output_dt = 0.25

[model]
kind = "dmd"
rank = 20

[sensors]
k = 4
mode = "stationary"

[noise]
q = 0.1
rho = 1e-2

[sweep]
sampling_dt = [0.25, 0.5, 1.0]
"#;

pub const KS_MULTISCALE: &str = r#"# Kuramoto-Sivashinsky, four mobile sensors planned at a 4x coarser rate and refined.
name = "ks_multiscale"
seed = 3
outputs = "out/ks_multiscale"

[scenario]
kind = "ks"
n_grid = 256
domain_length = 22.0
dt_solver = 0.05
t_start = 200.0
t_final = 1200.0
output_dt = 0.25

[model]
kind = "dmd"
rank = 20

[sensors]
k = 4
mode = "mobile"
speed = 4.0
period = 40
refine = 4

[noise]
q = 0.1
rho = 1e-2
"#;

pub const GRIDDED_TWO_BASINS: &str = r#"# Two ocean basins split by land; sensors move on the masked grid only.
name = "gridded_two_basins"
seed = 1
outputs = "out/gridded_two_basins"

[scenario]
kind = "gridded"
path = "two_basins.obsgrid"

[model]
kind = "dmd"
rank = 4

[sensors]
k = 2
mode = "mobile"
speed = 2.0
period = 8

[noise]
q = 1e-3
rho = 1e-3
"#;

pub const CONFIGS: [(&str, &str); 5] = [
    ("torus_stationary.toml", TORUS_STATIONARY),
    ("torus_mobile.toml", TORUS_MOBILE),
    ("ks_sampling.toml", KS_SAMPLING),
    ("ks_multiscale.toml", KS_MULTISCALE),
    ("gridded_two_basins.toml", GRIDDED_TWO_BASINS),
];

/// Writes every config and the grid file into `dir`.
pub fn write_fixtures(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(dir)?;
    let grid = dir.join(GRID_FILE);
    two_basin_fixture(8, 14, 60).write(&grid, GridFormat::BinaryGrid)?;
    let mut out = vec![grid];
    for (name, text) in CONFIGS {
        ExperimentConfig::from_toml(text)?;
        let path = dir.join(name);
        write_atomic(&path, text.as_bytes())?;
        out.push(path);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_validate() {
        let dir = tempfile::tempdir().unwrap();
        write_fixtures(dir.path()).unwrap();
        for (name, _) in CONFIGS {
            let cfg = ExperimentConfig::load(&dir.path().join(name)).unwrap();
            assert!(!cfg.expand().unwrap().is_empty(), "{name}");
        }
    }
}
