//! Phantom ingestion: map a grayscale raster onto mesh nodes and make the
//! result admissible.
//!
//! The raster covers the mesh bounding square; nodal values come from
//! bilinear sampling, already normalized to [0, 1] by the image white level.
//! A cosine taper over the outer 10% of the radius takes the field smoothly
//! to zero at the boundary (boundary nodes are zeroed exactly).

use anyhow::{bail, Result};
use pat_core::mesh::Mesh;
use pat_core::NodalField;

use crate::pgm::Raster;

/// Fraction of the radius over which the taper falls from 1 to 0.
const TAPER_FRACTION: f64 = 0.1;

pub fn raster_to_field(raster: &Raster, mesh: &Mesh) -> Result<NodalField> {
    if raster.width < 8 || raster.height < 8 {
        bail!(
            "phantom raster is {}x{}, need at least 8x8",
            raster.width,
            raster.height
        );
    }
    let radius = mesh
        .nodes()
        .iter()
        .map(|p| (p[0] * p[0] + p[1] * p[1]).sqrt())
        .fold(0.0f64, f64::max);
    let mut values = Vec::with_capacity(mesh.n_nodes());
    let mut raw_norm_sq = 0.0;
    for p in mesh.nodes() {
        // bounding square [-radius, radius]^2, image row 0 at the top
        let px = (p[0] + radius) / (2.0 * radius) * raster.width as f64 - 0.5;
        let py = (radius - p[1]) / (2.0 * radius) * raster.height as f64 - 0.5;
        let v = raster.sample(px, py);
        raw_norm_sq += v * v;
        let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
        values.push(v * radial_taper(r, radius));
    }
    for &b in mesh.boundary_loop() {
        values[b] = 0.0;
    }
    let norm: f64 = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    // an empty raster passes through as the zero field; the error is for
    // content that the boundary cutoff wiped out
    if norm < 1e-12 && raw_norm_sq.sqrt() >= 1e-12 {
        bail!("phantom is degenerate: the boundary cutoff reduced its norm to {norm:.3e}");
    }
    Ok(NodalField::from_values(values))
}

fn radial_taper(r: f64, radius: f64) -> f64 {
    let start = (1.0 - TAPER_FRACTION) * radius;
    if r <= start {
        1.0
    } else if r >= radius {
        0.0
    } else {
        0.5 * (1.0 + (std::f64::consts::PI * (r - start) / (radius - start)).cos())
    }
}
