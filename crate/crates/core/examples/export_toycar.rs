//! Writes the built-in car to `assets/models/` as an OBJ plus label sidecar,
//! giving the CLI a checked-in model to run against.

use std::path::Path;

use crumple_core::procgen::toy_car;
use crumple_core::PartRegistry;

fn main() {
    let registry = PartRegistry::builtin();
    let mesh = toy_car(&registry).expect("the built-in car builds");
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../assets/models");
    std::fs::create_dir_all(&dir).expect("assets directory is writable");
    let geometry = dir.join("toycar.obj");
    let labels = dir.join("toycar.labels.json");
    mesh.save(&geometry, &labels, &registry).expect("export");
    println!("wrote {} and {}", geometry.display(), labels.display());
}
