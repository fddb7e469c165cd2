//! Shared fixtures for the criterion benches.

use floodbench::synth::{generate_scene, SceneSpec, SyntheticScene};

/// The standard valley scene resized to `side` x `side` at constant extent.
pub fn scene(side: usize) -> SyntheticScene {
    let mut spec = SceneSpec::standard(42);
    spec.grid.cell_size *= spec.grid.width as f64 / side as f64;
    spec.grid.width = side;
    spec.grid.height = side;
    generate_scene(&spec).expect("valid scene")
}
