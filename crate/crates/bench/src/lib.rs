//! Shared fixtures for the criterion benchmarks.

use pat_core::assembly::{assemble, Material};
use pat_core::mesh::{generate_disk_mesh, Mesh};
use pat_core::wavesim::NodalField;
use pat_core::SemidiscreteSystem;

/// Unit-disk system with the nondimensional material set and a Gaussian-bump
/// initial pressure, sized by the ring count.
pub fn disk_fixture(rings: usize) -> (Mesh, SemidiscreteSystem, NodalField) {
    let mesh = generate_disk_mesh(1.0, 1.0 / rings as f64).expect("mesh");
    let material = Material::nondimensional(mesh.n_nodes(), 0.9);
    let sys = assemble(&mesh, &material).expect("assemble");
    let mut values: Vec<f64> = mesh
        .nodes()
        .iter()
        .map(|p| {
            let d2 = (p[0] - 0.2).powi(2) + (p[1] + 0.1).powi(2);
            (-d2 / 0.08).exp()
        })
        .collect();
    for &b in mesh.boundary_loop() {
        values[b] = 0.0;
    }
    (mesh, sys, NodalField::from_values(values))
}
