//! Shared pieces of the service tests: the stand-in mesher, canned model
//! replies and small configs.
#![allow(dead_code)]

use std::path::PathBuf;

use dem_core::mesh::GmshMesher;
use dem_core::results::config::ValueSpec;
use dem_core::results::{MaterialConfig, RunConfig, SolverChoice};

pub fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

pub fn fake_gmsh_path() -> PathBuf {
    manifest_dir().join("tests/fixtures/fake-gmsh")
}

pub fn fake_gmsh() -> GmshMesher {
    GmshMesher::new(fake_gmsh_path())
}

pub fn core_fixtures() -> PathBuf {
    manifest_dir().join("../core/fixtures")
}

pub fn unit_square_geo() -> String {
    std::fs::read_to_string(manifest_dir().join("tests/fixtures/unit_square.geo")).unwrap()
}

pub fn fenced(geo: &str) -> String {
    format!("Here is the script.\n\n```geo\n{geo}```\n")
}

pub fn good_reply() -> String {
    fenced(&unit_square_geo())
}

pub fn broken_reply() -> String {
    fenced(&format!("{}BROKEN = ;\n", unit_square_geo()))
}

pub fn no_groups_reply() -> String {
    fenced("// NOGROUPS\nPoint(1) = {0, 0, 0, 1};\n")
}

pub const PROSE_REPLY: &str = "A square needs four points and four lines joined in a loop.";

/// Poisson on the 2x2 square with a unit flux, DEM only.
pub fn small_poisson(max_epochs: usize) -> RunConfig {
    let mut c = RunConfig::new(core_fixtures().join("square_2x2.msh"), MaterialConfig::Poisson {});
    c.boundary.neumann = Some(vec![ValueSpec::Number(1.0)]);
    c.training.max_epochs = max_epochs;
    c.training.early_stop.enabled = false;
    c.training.particular_steps = 10;
    c.training.solver = SolverChoice::Dem;
    c
}
