//! Down-sample boundary measurement data from a finer mesh onto a coarser
//! reconstruction mesh: each coarse boundary node is projected onto the
//! nearest segment of the fine boundary polyline and the data interpolated
//! linearly along that segment. Space only; the time axis is kept as is.

use crate::mesh::Mesh;
use crate::wavesim::{MeasurementSeries, WaveError};

pub fn downsample_boundary(
    fine_mesh: &Mesh,
    data: &MeasurementSeries,
    coarse_mesh: &Mesh,
) -> Result<MeasurementSeries, WaveError> {
    let fine_loop = fine_mesh.boundary_loop();
    let nb_fine = fine_loop.len();
    if data.nb() != nb_fine {
        return Err(WaveError::DimensionMismatch(format!(
            "data has {} boundary nodes but the fine mesh has {nb_fine}",
            data.nb()
        )));
    }
    let coarse_loop = coarse_mesh.boundary_loop();
    let nt = data.nt();
    let mut out = MeasurementSeries::zeros(nt, coarse_loop.len(), data.dt, data.kind);

    for (pos, &cnode) in coarse_loop.iter().enumerate() {
        let p = coarse_mesh.nodes()[cnode];
        // nearest fine boundary segment and the interpolation weight on it
        let mut best = (f64::INFINITY, 0usize, 0.0f64);
        for e in 0..nb_fine {
            let a = fine_mesh.nodes()[fine_loop[e]];
            let b = fine_mesh.nodes()[fine_loop[(e + 1) % nb_fine]];
            let ab = [b[0] - a[0], b[1] - a[1]];
            let ap = [p[0] - a[0], p[1] - a[1]];
            let len_sq = ab[0] * ab[0] + ab[1] * ab[1];
            let t = ((ap[0] * ab[0] + ap[1] * ab[1]) / len_sq).clamp(0.0, 1.0);
            let dx = ap[0] - t * ab[0];
            let dy = ap[1] - t * ab[1];
            let d_sq = dx * dx + dy * dy;
            if d_sq < best.0 {
                best = (d_sq, e, t);
            }
        }
        let (_, e, t) = best;
        let j0 = e;
        let j1 = (e + 1) % nb_fine;
        for n in 0..nt {
            out.values[[n, pos]] =
                (1.0 - t) * data.values[[n, j0]] + t * data.values[[n, j1]];
        }
    }
    Ok(out)
}
