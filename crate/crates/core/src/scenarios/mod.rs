//! Experiment families: torus dynamics, Kuramoto-Sivashinsky fields and masked
//! gridded data.

mod gridded;
mod ks;
mod torus;

pub use gridded::{load_gridded, mask_geometry, two_basin_fixture, GridFormat, GriddedDataset, MAGIC};
pub use ks::{solve_ks, solve_ks_from, KsSpec, BLOW_UP_NORM};
pub use torus::{make_torus, TorusScenario, TorusSpec};
