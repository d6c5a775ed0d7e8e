//! 2D photoacoustic tomography with piezoelectric sensing: finite-element
//! wave simulation under an effective impedance boundary condition, a voltage
//! measurement model with a surface-Laplacian term, the matching adjoint, and
//! accelerated Landweber reconstruction, plus closed-form sensor analysis and
//! colored-noise tooling for robustness studies.
//!
//! The pipeline: [`mesh`] builds the disk triangulation, [`assembly`] turns
//! it into the semidiscrete operators, [`wavesim`] marches the forward map
//! `F : f -> V`, [`adjoint`] evaluates `F*`, and [`inversion`] runs the
//! iteration. [`sensor`] and [`noise`] stand alone.

pub mod adjoint;
pub mod assembly;
pub mod inversion;
pub mod mesh;
pub mod noise;
pub mod resample;
pub mod sensor;
pub mod sparse;
pub mod wavesim;

pub use assembly::{assemble, Material, SemidiscreteSystem};
pub use mesh::{generate_disk_mesh, load_mesh, save_mesh, Mesh};
pub use wavesim::{MeasurementSeries, NodalField, SeriesKind};
