//! Explicit time stepping of the semidiscrete wave system and the
//! piezoelectric measurement model; together they form the forward map
//! `F : f -> V`.
//!
//! The march is central-difference (explicit Newmark, beta = 0, gamma = 1/2)
//! with lumped mass and the boundary damping applied to the centered velocity
//! `(p^{n+1} - p^{n-1}) / (2 dt)`, which keeps every update a diagonal solve:
//!
//! ```text
//! (M_L/dt^2 + C/2dt) p^{n+1} = (2/dt^2) M_L p^n - (M_L/dt^2 - C/2dt) p^{n-1}
//!                              - (K + B) p^n + load^n
//! ```
//!
//! starting from rest via the Taylor half step `p^1 = p^0 + (dt^2/2) M_L^-1
//! (load^0 - (K+B) p^0)`. The staggered discrete energy
//!
//! ```text
//! E^{n+1/2} = 1/2 v^T M_L v + 1/2 (p^{n+1})^T (K+B) p^n,   v = (p^{n+1}-p^n)/dt
//! ```
//!
//! is non-increasing for the damped, unforced system and doubles as the
//! blow-up guard for CFL violations.
//!
//! The voltage record integrates `d^2 V/dt^2 = d^2 p/dt^2 - kappa c_p^2
//! Lap_perp p` twice from a vanishing initial state, i.e.
//! `V(t) = p|_G(t) - p|_G(0) - kappa c_p^2 It^2 [Lap_perp p]` with the double
//! time integral done by repeated trapezoid sums.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1};
use thiserror::Error;

use crate::assembly::SemidiscreteSystem;

#[derive(Debug, Error)]
pub enum WaveError {
    #[error("invalid time stepping: {0}")]
    InvalidTimeStep(String),
    #[error("instability at step {step}: energy {energy:.3e} exceeds 10x reference {reference:.3e} (CFL violation?)")]
    Instability { step: usize, energy: f64, reference: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("series kind mismatch: expected {expected:?}, found {found:?}")]
    KindMismatch { expected: SeriesKind, found: SeriesKind },
    #[error("measurement file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// What a time/boundary series represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesKind {
    PressureTrace,
    Voltage,
    AdjointSource,
}

/// One real value per mesh node (initial pressure, reconstruction iterate,
/// adjoint output).
#[derive(Debug, Clone, PartialEq)]
pub struct NodalField {
    pub values: Vec<f64>,
}

impl NodalField {
    pub fn zeros(n: usize) -> Self {
        Self { values: vec![0.0; n] }
    }

    pub fn from_values(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Time-by-boundary-node samples with a fixed step `dt`; row `n` holds the
/// boundary field at time `n dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSeries {
    pub dt: f64,
    pub kind: SeriesKind,
    pub values: Array2<f64>,
}

impl MeasurementSeries {
    pub fn zeros(nt: usize, nb: usize, dt: f64, kind: SeriesKind) -> Self {
        Self { dt, kind, values: Array2::zeros((nt, nb)) }
    }

    /// Number of time levels (including t = 0).
    pub fn nt(&self) -> usize {
        self.values.nrows()
    }

    /// Number of boundary nodes.
    pub fn nb(&self) -> usize {
        self.values.ncols()
    }

    /// Final time covered by the record.
    pub fn t_final(&self) -> f64 {
        (self.nt().saturating_sub(1)) as f64 * self.dt
    }

    pub fn row(&self, n: usize) -> ArrayView1<'_, f64> {
        self.values.row(n)
    }

    /// Plain (unweighted) l2 norm over all samples.
    pub fn norm_l2(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Write the `PATMEAS1` binary format: 8-byte magic, `nt` and `nb` as
    /// little-endian u64, `dt` as little-endian f64, then the samples in
    /// time-major order.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), WaveError> {
        let mut buf = Vec::with_capacity(8 + 24 + 8 * self.values.len());
        buf.extend_from_slice(b"PATMEAS1");
        buf.extend_from_slice(&(self.nt() as u64).to_le_bytes());
        buf.extend_from_slice(&(self.nb() as u64).to_le_bytes());
        buf.extend_from_slice(&self.dt.to_le_bytes());
        for v in self.values.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        let mut f = fs::File::create(path)?;
        f.write_all(&buf)?;
        Ok(())
    }

    /// Read a `PATMEAS1` file; the caller states what kind it expects.
    pub fn load(path: impl AsRef<Path>, kind: SeriesKind) -> Result<Self, WaveError> {
        let mut bytes = Vec::new();
        fs::File::open(path)?.read_to_end(&mut bytes)?;
        if bytes.len() < 32 || &bytes[..8] != b"PATMEAS1" {
            return Err(WaveError::Format("missing PATMEAS1 magic".into()));
        }
        let nt = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let nb = u64::from_le_bytes(bytes[16..24].try_into().expect("8 bytes")) as usize;
        let dt = f64::from_le_bytes(bytes[24..32].try_into().expect("8 bytes"));
        let expected = nt
            .checked_mul(nb)
            .and_then(|n| n.checked_mul(8))
            .and_then(|n| n.checked_add(32))
            .ok_or_else(|| WaveError::Format(format!("implausible dimensions {nt} x {nb}")))?;
        if bytes.len() != expected {
            return Err(WaveError::Format(format!(
                "file holds {} bytes, header implies {expected}",
                bytes.len()
            )));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(WaveError::Format(format!("invalid dt {dt}")));
        }
        let mut values = Array2::zeros((nt, nb));
        for (i, v) in values.iter_mut().enumerate() {
            let off = 32 + 8 * i;
            *v = f64::from_le_bytes(bytes[off..off + 8].try_into().expect("8 bytes"));
            if !v.is_finite() {
                return Err(WaveError::Format(format!("non-finite sample at index {i}")));
            }
        }
        Ok(Self { dt, kind, values })
    }

    /// CSV export, one row per time level: `t,v0,v1,...`.
    pub fn write_csv(&self, out: &mut dyn Write) -> std::io::Result<()> {
        write!(out, "t")?;
        for j in 0..self.nb() {
            write!(out, ",b{j}")?;
        }
        writeln!(out)?;
        for n in 0..self.nt() {
            write!(out, "{:.9e}", n as f64 * self.dt)?;
            for v in self.row(n) {
                write!(out, ",{v:.9e}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Forward solve output: the boundary pressure trace plus the staggered
/// energy history (one value per step), for dissipation checks.
#[derive(Debug, Clone)]
pub struct ForwardRun {
    pub trace: MeasurementSeries,
    pub energy: Vec<f64>,
}

/// Explicit central-difference stepper for `M_L p'' + C p' + (K + B) p = load`.
pub(crate) struct Marcher<'a> {
    sys: &'a SemidiscreteSystem,
    dt: f64,
    /// 1 / (m_l/dt^2 + c/(2dt)) per node.
    inv_lhs: Vec<f64>,
}

impl<'a> Marcher<'a> {
    pub(crate) fn new(sys: &'a SemidiscreteSystem, dt: f64) -> Self {
        let inv_lhs = sys
            .mass_lumped
            .iter()
            .zip(&sys.damping_diag)
            .map(|(&m, &c)| 1.0 / (m / (dt * dt) + c / (2.0 * dt)))
            .collect();
        Self { sys, dt, inv_lhs }
    }

    /// `(K + B) p` into `out`.
    pub(crate) fn apply_spatial(&self, p: &[f64], out: &mut [f64]) {
        self.sys.stiffness.mul_vec_into(p, out);
        for (o, (&b, &pi)) in out.iter_mut().zip(self.sys.curvature_diag.iter().zip(p)) {
            *o += b * pi;
        }
    }

    /// Taylor start from rest: `p^1 = p^0 + dt^2/2 M_L^-1 (load - (K+B) p^0)`.
    /// Also returns `(K+B) p^0` for the first energy evaluation.
    pub(crate) fn first_step(&self, p0: &[f64], load: Option<&[f64]>) -> (Vec<f64>, Vec<f64>) {
        let n = p0.len();
        let mut w = vec![0.0; n];
        self.apply_spatial(p0, &mut w);
        let mut p1 = vec![0.0; n];
        let half_dt2 = 0.5 * self.dt * self.dt;
        for i in 0..n {
            p1[i] = p0[i] - half_dt2 * w[i] / self.sys.mass_lumped[i];
        }
        if let Some(l) = load {
            self.scatter_boundary(l, |i, v| p1[i] += half_dt2 * v / self.sys.mass_lumped[i]);
        }
        (p1, w)
    }

    /// One central-difference step; returns `(K+B) p_cur` for energy reuse.
    pub(crate) fn step(
        &self,
        p_prev: &[f64],
        p_cur: &[f64],
        load: Option<&[f64]>,
        p_next: &mut [f64],
        w: &mut [f64],
    ) {
        let n = p_cur.len();
        self.apply_spatial(p_cur, w);
        let dt = self.dt;
        let inv_dt2 = 1.0 / (dt * dt);
        for i in 0..n {
            let m = self.sys.mass_lumped[i];
            let c = self.sys.damping_diag[i];
            let rhs = 2.0 * inv_dt2 * m * p_cur[i] - (inv_dt2 * m - c / (2.0 * dt)) * p_prev[i]
                - w[i];
            p_next[i] = rhs * self.inv_lhs[i];
        }
        if let Some(l) = load {
            self.scatter_boundary(l, |i, v| p_next[i] += v * self.inv_lhs[i]);
        }
    }

    /// Staggered energy `1/2 v^T M_L v + 1/2 p_next^T w` with
    /// `v = (p_next - p_cur)/dt` and `w = (K+B) p_cur`.
    pub(crate) fn energy(&self, p_cur: &[f64], p_next: &[f64], w: &[f64]) -> f64 {
        let inv_dt = 1.0 / self.dt;
        let mut kinetic = 0.0;
        let mut cross = 0.0;
        for i in 0..p_cur.len() {
            let v = (p_next[i] - p_cur[i]) * inv_dt;
            kinetic += self.sys.mass_lumped[i] * v * v;
            cross += p_next[i] * w[i];
        }
        0.5 * (kinetic + cross)
    }

    fn scatter_boundary(&self, boundary_values: &[f64], mut add: impl FnMut(usize, f64)) {
        for (pos, &node) in self.sys.boundary_nodes.iter().enumerate() {
            add(node, boundary_values[pos]);
        }
    }
}

/// Round the requested step so an integer number of steps covers `[0, T]`.
pub(crate) fn time_grid(t_final: f64, dt: f64) -> Result<(usize, f64), WaveError> {
    if !(dt > 0.0 && dt.is_finite() && t_final > 0.0 && t_final.is_finite()) {
        return Err(WaveError::InvalidTimeStep(format!(
            "need positive finite T and dt, got T = {t_final}, dt = {dt}"
        )));
    }
    if t_final / dt > 50_000_000.0 {
        return Err(WaveError::InvalidTimeStep(format!(
            "T/dt = {:.1e} steps is beyond the budget",
            t_final / dt
        )));
    }
    let n_steps = (t_final / dt - 1e-9).ceil().max(2.0) as usize;
    Ok((n_steps, t_final / n_steps as f64))
}

/// March the wave system from `p = f`, `dp/dt = 0` and record the boundary
/// pressure trace at every time level, plus the per-step staggered energy.
///
/// A nonzero `f` on the boundary is inadmissible; it is masked to zero (with
/// a warning when the boundary values are significant).
pub fn solve_forward_run(
    sys: &SemidiscreteSystem,
    f: &NodalField,
    t_final: f64,
    dt: f64,
) -> Result<ForwardRun, WaveError> {
    let n = sys.n_nodes();
    if f.len() != n {
        return Err(WaveError::DimensionMismatch(format!(
            "field has {} values for {} nodes",
            f.len(),
            n
        )));
    }
    let (n_steps, dt) = time_grid(t_final, dt)?;
    let nt = n_steps + 1;

    let mut p0 = f.values.clone();
    let f_max = p0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut boundary_max = 0.0f64;
    for &node in &sys.boundary_nodes {
        boundary_max = boundary_max.max(p0[node].abs());
        p0[node] = 0.0;
    }
    if boundary_max > 1e-12 * f_max {
        log::warn!(
            "initial pressure is nonzero on the boundary (max {boundary_max:.3e}); masking to zero"
        );
    }

    let marcher = Marcher::new(sys, dt);
    let nb = sys.n_boundary();
    let mut trace = MeasurementSeries::zeros(nt, nb, dt, SeriesKind::PressureTrace);
    let mut energy = Vec::with_capacity(n_steps);

    let record = |series: &mut MeasurementSeries, level: usize, p: &[f64]| {
        let mut row = series.values.row_mut(level);
        for (pos, &node) in sys.boundary_nodes.iter().enumerate() {
            row[pos] = p[node];
        }
    };

    record(&mut trace, 0, &p0);
    let (p1, w0) = marcher.first_step(&p0, None);
    let e_ref = marcher.energy(&p0, &p1, &w0);
    energy.push(e_ref);
    record(&mut trace, 1, &p1);

    // the staggered quantity is only positive under a stable step, so the
    // guard compares magnitudes
    let e_scale = e_ref.abs();
    let mut p_prev = p0;
    let mut p_cur = p1;
    let mut p_next = vec![0.0; n];
    let mut w = vec![0.0; n];
    for step in 2..nt {
        marcher.step(&p_prev, &p_cur, None, &mut p_next, &mut w);
        let e = marcher.energy(&p_cur, &p_next, &w);
        if !e.is_finite() || (e_scale > 0.0 && e.abs() > 10.0 * e_scale) {
            return Err(WaveError::Instability { step, energy: e, reference: e_ref });
        }
        energy.push(e);
        record(&mut trace, step, &p_next);
        std::mem::swap(&mut p_prev, &mut p_cur);
        std::mem::swap(&mut p_cur, &mut p_next);
    }

    Ok(ForwardRun { trace, energy })
}

/// [`solve_forward_run`] without the energy history.
pub fn solve_forward(
    sys: &SemidiscreteSystem,
    f: &NodalField,
    t_final: f64,
    dt: f64,
) -> Result<MeasurementSeries, WaveError> {
    Ok(solve_forward_run(sys, f, t_final, dt)?.trace)
}

/// Cumulative trapezoid integral in time, `I[0] = 0`.
pub(crate) fn cumtrapz_forward(x: &Array2<f64>, dt: f64) -> Array2<f64> {
    let (nt, nb) = x.dim();
    let mut out = Array2::zeros((nt, nb));
    for n in 1..nt {
        for j in 0..nb {
            out[[n, j]] = out[[n - 1, j]] + 0.5 * dt * (x[[n - 1, j]] + x[[n, j]]);
        }
    }
    out
}

/// Cumulative trapezoid integral from the final time, `J[nt-1] = 0`,
/// `J(t) = integral from T to t`.
pub(crate) fn cumtrapz_backward(x: &Array2<f64>, dt: f64) -> Array2<f64> {
    let (nt, nb) = x.dim();
    let mut out = Array2::zeros((nt, nb));
    for n in (0..nt.saturating_sub(1)).rev() {
        for j in 0..nb {
            out[[n, j]] = out[[n + 1, j]] - 0.5 * dt * (x[[n, j]] + x[[n + 1, j]]);
        }
    }
    out
}

/// Apply the measurement model to a pressure trace:
/// `V(t) = p(t) - p(0) - kappa c_p^2 It^2 [Lap_perp p](t)`, so `V(0) = 0`.
pub fn measure_voltage(
    sys: &SemidiscreteSystem,
    trace: &MeasurementSeries,
    kappa: f64,
    c_p: f64,
) -> Result<MeasurementSeries, WaveError> {
    if trace.kind != SeriesKind::PressureTrace {
        return Err(WaveError::KindMismatch {
            expected: SeriesKind::PressureTrace,
            found: trace.kind,
        });
    }
    if trace.nb() != sys.n_boundary() {
        return Err(WaveError::DimensionMismatch(format!(
            "trace has {} boundary nodes, system has {}",
            trace.nb(),
            sys.n_boundary()
        )));
    }
    let (nt, nb) = trace.values.dim();
    let mut out = MeasurementSeries::zeros(nt, nb, trace.dt, SeriesKind::Voltage);

    // Dirichlet limit: with kappa = 0 the voltage is exactly the trace minus
    // its initial boundary values.
    if kappa == 0.0 {
        for n in 0..nt {
            for j in 0..nb {
                out.values[[n, j]] = trace.values[[n, j]] - trace.values[[0, j]];
            }
        }
        return Ok(out);
    }

    let mut lap = Array2::zeros((nt, nb));
    let mut row = vec![0.0; nb];
    for n in 0..nt {
        for j in 0..nb {
            row[j] = trace.values[[n, j]];
        }
        let l = sys.boundary_laplacian(&row);
        for j in 0..nb {
            lap[[n, j]] = l[j];
        }
    }
    let int2 = cumtrapz_forward(&cumtrapz_forward(&lap, trace.dt), trace.dt);
    let scale = kappa * c_p * c_p;
    for n in 0..nt {
        for j in 0..nb {
            out.values[[n, j]] =
                trace.values[[n, j]] - trace.values[[0, j]] - scale * int2[[n, j]];
        }
    }
    Ok(out)
}

/// The forward map `F : f -> V` with the system's own `kappa` and `c_p`.
pub fn forward(
    sys: &SemidiscreteSystem,
    f: &NodalField,
    t_final: f64,
    dt: f64,
) -> Result<MeasurementSeries, WaveError> {
    let trace = solve_forward(sys, f, t_final, dt)?;
    measure_voltage(sys, &trace, sys.material.kappa, sys.material.c_p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble, Material};
    use crate::mesh::generate_disk_mesh;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn disk_system(h: f64, kappa: f64) -> SemidiscreteSystem {
        let mesh = generate_disk_mesh(1.0, h).unwrap();
        let material = Material::nondimensional(mesh.n_nodes(), kappa);
        assemble(&mesh, &material).unwrap()
    }

    fn random_admissible(sys: &SemidiscreteSystem, seed: u64) -> NodalField {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut values: Vec<f64> = (0..sys.n_nodes()).map(|_| rng.random_range(-1.0..1.0)).collect();
        for &b in &sys.boundary_nodes {
            values[b] = 0.0;
        }
        NodalField::from_values(values)
    }

    #[test]
    fn zero_initial_data_gives_zero_trace() {
        let sys = disk_system(0.2, 0.9);
        let run = solve_forward_run(&sys, &NodalField::zeros(sys.n_nodes()), 1.0, 0.05).unwrap();
        assert!(run.trace.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn energy_non_increasing_on_disk() {
        let sys = disk_system(0.1, 0.9);
        let dt = sys.stable_dt(0.5);
        for seed in [1u64, 2, 3] {
            let f = random_admissible(&sys, seed);
            let run = solve_forward_run(&sys, &f, 2.0, dt).unwrap();
            for w in run.energy.windows(2) {
                assert!(
                    w[1] <= w[0] * (1.0 + 1e-10) + 1e-300,
                    "energy grew from {} to {}",
                    w[0],
                    w[1]
                );
            }
        }
    }

    #[test]
    fn cfl_violation_detected() {
        let sys = disk_system(0.2, 0.9);
        let dt = sys.stable_dt(1.5); // beyond stability
        let f = random_admissible(&sys, 7);
        match solve_forward_run(&sys, &f, 4.0, dt) {
            Err(WaveError::Instability { .. }) => {}
            other => panic!("expected instability, got {:?}", other.map(|r| r.energy.len())),
        }
    }

    #[test]
    fn wavefront_arrival_time_matches_ray_travel() {
        // Gaussian bump at (0.3, 0): distance to the nearest boundary point
        // (1, 0) is 0.7 with c = 1; the peak of |p| there arrives at ~0.7
        let mesh = generate_disk_mesh(1.0, 1.0 / 32.0).unwrap();
        let material = Material::nondimensional(mesh.n_nodes(), 0.9);
        let sys = assemble(&mesh, &material).unwrap();
        let sigma = 0.06f64;
        let mut values: Vec<f64> = mesh
            .nodes()
            .iter()
            .map(|p| {
                let d2 = (p[0] - 0.3).powi(2) + p[1].powi(2);
                (-0.5 * d2 / (sigma * sigma)).exp()
            })
            .collect();
        for &b in mesh.boundary_loop() {
            values[b] = 0.0;
        }
        let dt = sys.stable_dt(0.5);
        let run = solve_forward_run(&sys, &NodalField::from_values(values), 1.2, dt).unwrap();

        // boundary position of the node nearest to angle 0
        let pos = sys
            .boundary_nodes
            .iter()
            .position(|&nidx| {
                let p = mesh.nodes()[nidx];
                p[1].abs() < 1e-9 && p[0] > 0.0
            })
            .expect("node at angle 0");
        let col = run.trace.values.column(pos);
        let (argmax, _) = col
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
            .unwrap();
        let arrival = argmax as f64 * run.trace.dt;
        let tol = 2.0 * run.trace.dt + mesh.max_edge_length() + sigma;
        assert!(
            (arrival - 0.7).abs() <= tol,
            "arrival {arrival} vs 0.7 (tol {tol})"
        );
    }

    #[test]
    fn voltage_dirichlet_limit_is_exact() {
        let sys = disk_system(0.2, 0.9);
        let f = random_admissible(&sys, 11);
        let trace = solve_forward(&sys, &f, 1.0, sys.stable_dt(0.5)).unwrap();
        let v = measure_voltage(&sys, &trace, 0.0, 1.0).unwrap();
        for n in 0..trace.nt() {
            for j in 0..trace.nb() {
                assert_eq!(v.values[[n, j]], trace.values[[n, j]] - trace.values[[0, j]]);
            }
        }
    }

    #[test]
    fn voltage_of_spatially_constant_trace_is_identity() {
        let sys = disk_system(0.2, 0.9);
        let nb = sys.n_boundary();
        let nt = 41;
        let dt = 0.025;
        let mut trace = MeasurementSeries::zeros(nt, nb, dt, SeriesKind::PressureTrace);
        for n in 0..nt {
            let g = (n as f64 * dt).powi(3) - 2.0 * (n as f64 * dt);
            for j in 0..nb {
                trace.values[[n, j]] = g;
            }
        }
        // g(0) = 0, Lap_perp of a constant-in-space field is 0, so V = g
        let v = measure_voltage(&sys, &trace, 0.9, 1.0).unwrap();
        for n in 0..nt {
            for j in 0..nb {
                let expect = trace.values[[n, j]];
                assert!((v.values[[n, j]] - expect).abs() <= 1e-12 * expect.abs().max(1.0));
            }
        }
    }

    #[test]
    fn voltage_fourier_mode_closed_form() {
        // trace sin(2 pi m s / L) t^2 gives
        // V = sin(2 pi m s / L) (t^2 + kappa c_p^2 (2 pi m / L)^2 t^4 / 12)
        let mesh = generate_disk_mesh(1.0, 1.0 / 32.0).unwrap();
        let material = Material::nondimensional(mesh.n_nodes(), 0.9);
        let sys = assemble(&mesh, &material).unwrap();
        let nb = sys.n_boundary();
        let lens = mesh.boundary_edge_lengths();
        let total: f64 = lens.iter().sum();
        let m = 3.0;
        let (kappa, c_p) = (0.9, 1.0);

        let nt = 101;
        let dt = 0.01;
        let mut trace = MeasurementSeries::zeros(nt, nb, dt, SeriesKind::PressureTrace);
        let mut shape = vec![0.0; nb];
        let mut s = 0.0;
        for j in 0..nb {
            shape[j] = (2.0 * std::f64::consts::PI * m * s / total).sin();
            s += lens[j];
        }
        for n in 0..nt {
            let t2 = (n as f64 * dt).powi(2);
            for j in 0..nb {
                trace.values[[n, j]] = shape[j] * t2;
            }
        }
        let v = measure_voltage(&sys, &trace, kappa, c_p).unwrap();
        let lam = (2.0 * std::f64::consts::PI * m / total).powi(2);
        let mut worst = 0.0f64;
        for n in 0..nt {
            let t = n as f64 * dt;
            for j in 0..nb {
                let expect = shape[j] * (t * t + kappa * c_p * c_p * lam * t.powi(4) / 12.0);
                worst = worst.max((v.values[[n, j]] - expect).abs());
            }
        }
        // discrete eigenvalue error O(h^2) on the kappa term plus O(dt^2)
        assert!(worst <= 2e-3, "closed-form voltage mismatch {worst}");
    }

    #[test]
    fn voltage_deviation_grows_with_boundary_frequency() {
        let mesh = generate_disk_mesh(1.0, 1.0 / 32.0).unwrap();
        let material = Material::nondimensional(mesh.n_nodes(), 0.9);
        let sys = assemble(&mesh, &material).unwrap();
        let nb = sys.n_boundary();
        let lens = mesh.boundary_edge_lengths();
        let total: f64 = lens.iter().sum();
        let nt = 51;
        let dt = 0.02;
        let mut deviations = Vec::new();
        for m in [1.0, 2.0, 4.0] {
            let mut trace = MeasurementSeries::zeros(nt, nb, dt, SeriesKind::PressureTrace);
            let mut s = 0.0;
            let shape: Vec<f64> = (0..nb)
                .map(|j| {
                    let v = (2.0 * std::f64::consts::PI * m * s / total).sin();
                    s += lens[j];
                    v
                })
                .collect();
            for n in 0..nt {
                let t2 = (n as f64 * dt).powi(2);
                for j in 0..nb {
                    trace.values[[n, j]] = shape[j] * t2;
                }
            }
            let v = measure_voltage(&sys, &trace, 0.9, 1.0).unwrap();
            let mut diff = 0.0;
            for n in 0..nt {
                for j in 0..nb {
                    diff += (v.values[[n, j]] - (trace.values[[n, j]] - trace.values[[0, j]]))
                        .powi(2);
                }
            }
            deviations.push(diff.sqrt());
        }
        assert!(deviations[0] < deviations[1] && deviations[1] < deviations[2]);
    }

    #[test]
    fn forward_is_linear() {
        let sys = disk_system(0.2, 0.9);
        let dt = sys.stable_dt(0.5);
        let f1 = random_admissible(&sys, 21);
        let f2 = random_admissible(&sys, 22);
        let v1 = forward(&sys, &f1, 1.0, dt).unwrap();
        let v2 = forward(&sys, &f2, 1.0, dt).unwrap();

        let scaled = NodalField::from_values(f1.values.iter().map(|v| 3.5 * v).collect());
        let v_scaled = forward(&sys, &scaled, 1.0, dt).unwrap();
        let sum = NodalField::from_values(
            f1.values.iter().zip(&f2.values).map(|(a, b)| a + b).collect(),
        );
        let v_sum = forward(&sys, &sum, 1.0, dt).unwrap();

        let norm = v1.norm_l2().max(v2.norm_l2());
        for n in 0..v1.nt() {
            for j in 0..v1.nb() {
                let lin = (v_scaled.values[[n, j]] - 3.5 * v1.values[[n, j]]).abs();
                assert!(lin <= 1e-12 * norm * 3.5, "scaling violation {lin}");
                let sup =
                    (v_sum.values[[n, j]] - v1.values[[n, j]] - v2.values[[n, j]]).abs();
                assert!(sup <= 1e-12 * norm * 2.0, "superposition violation {sup}");
            }
        }

        let zero = forward(&sys, &NodalField::zeros(sys.n_nodes()), 1.0, dt).unwrap();
        assert!(zero.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn series_round_trip_bit_exact() {
        let dir = std::env::temp_dir().join(format!("patmeas-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("v.patmeas");
        let mut s = MeasurementSeries::zeros(7, 3, 0.125, SeriesKind::Voltage);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for v in s.values.iter_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        s.save(&path).unwrap();
        let l = MeasurementSeries::load(&path, SeriesKind::Voltage).unwrap();
        assert_eq!(s, l);
        fs::remove_dir_all(&dir).ok();
    }

    proptest! {
        #[test]
        fn series_save_load_identity(nt in 1usize..12, nb in 1usize..6, seed in 0u64..50) {
            let dir = std::env::temp_dir()
                .join(format!("patmeas-prop-{}-{nt}-{nb}-{seed}", std::process::id()));
            fs::create_dir_all(&dir).unwrap();
            let path = dir.join("s.patmeas");
            let mut s = MeasurementSeries::zeros(nt, nb, 0.01, SeriesKind::PressureTrace);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            for v in s.values.iter_mut() {
                *v = rng.random_range(-1e3..1e3);
            }
            s.save(&path).unwrap();
            let l = MeasurementSeries::load(&path, SeriesKind::PressureTrace).unwrap();
            prop_assert_eq!(s, l);
            fs::remove_dir_all(&dir).ok();
        }
    }
}
