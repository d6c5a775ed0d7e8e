//! P1 finite-element assembly for the semidiscrete wave system
//!
//! ```text
//! M p'' + C p' + (K + B) p = 0
//! ```
//!
//! with the impedance boundary condition `rho_b dp/dn + rho/c_b dp/dt
//! + rho H p = 0` folded into the boundary matrices:
//!
//! * `M`   - interior mass, entries `integral c^-2 phi_i phi_j` (the wave-speed
//!   field is interpolated P1 and the product integrated exactly),
//! * `K`   - stiffness, `integral grad phi_i . grad phi_j`,
//! * `C`   - boundary damping `(rho / (rho_b c_b)) contour phi_i phi_j`,
//!   lumped to a diagonal,
//! * `B`   - boundary curvature `(rho / rho_b) contour H phi_i phi_j`, nodal
//!   curvature with lumped boundary quadrature, also diagonal,
//! * `Mb`  - boundary mass on the closed curve (consistent and lumped),
//! * `Kb`  - boundary arc-length stiffness, the periodic 1D Laplacian used by
//!   the surface-Laplacian term in the measurement model.
//!
//! `Mb` and `Kb` act on boundary fields indexed in boundary-loop order.

use thiserror::Error;

use crate::mesh::Mesh;
use crate::sparse::SparseMatrix;

#[derive(Debug, Error)]
pub enum AssemblyError {
    #[error("invalid material: {0}")]
    InvalidMaterial(String),
    #[error("triangle {index} is degenerate (area {area:.3e} below {threshold:.3e})")]
    DegenerateTriangle { index: usize, area: f64, threshold: f64 },
}

/// Acoustic medium plus sensor-stack constants.
///
/// `c` is the wave-speed field sampled at mesh nodes; the rest are the
/// constant densities/speeds of the fluid (`rho`), backing layer
/// (`rho_b`, `c_b`) and sensing film (`rho_p`, `c_p`), and the unitless film
/// coefficient `kappa` (`kappa = 0` switches the measurement model to plain
/// pressure/Dirichlet data).
#[derive(Debug, Clone)]
pub struct Material {
    pub c: Vec<f64>,
    pub rho: f64,
    pub rho_b: f64,
    pub c_b: f64,
    pub rho_p: f64,
    pub c_p: f64,
    pub kappa: f64,
}

impl Material {
    pub fn new(
        c: Vec<f64>,
        rho: f64,
        rho_b: f64,
        c_b: f64,
        rho_p: f64,
        c_p: f64,
        kappa: f64,
    ) -> Result<Self, AssemblyError> {
        for (name, v) in [
            ("rho", rho),
            ("rho_b", rho_b),
            ("c_b", c_b),
            ("rho_p", rho_p),
            ("c_p", c_p),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(AssemblyError::InvalidMaterial(format!(
                    "{name} = {v} must be finite and positive"
                )));
            }
        }
        if !(kappa >= 0.0 && kappa.is_finite()) {
            return Err(AssemblyError::InvalidMaterial(format!(
                "kappa = {kappa} must be finite and non-negative"
            )));
        }
        if c.is_empty() || c.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(AssemblyError::InvalidMaterial(
                "wave speed field must be non-empty, finite and positive".into(),
            ));
        }
        Ok(Self { c, rho, rho_b, c_b, rho_p, c_p, kappa })
    }

    /// Constant wave speed on `n` nodes with the given constants.
    pub fn uniform(
        n: usize,
        c: f64,
        rho: f64,
        rho_b: f64,
        c_b: f64,
        rho_p: f64,
        c_p: f64,
        kappa: f64,
    ) -> Result<Self, AssemblyError> {
        Self::new(vec![c; n], rho, rho_b, c_b, rho_p, c_p, kappa)
    }

    /// Nondimensional reference constants (unit water: c = 1, rho = 1;
    /// heavier backing: rho_b = 2, c_b = 1; film: rho_p = 1.5, c_p = 1)
    /// with the chosen `kappa`.
    pub fn nondimensional(n: usize, kappa: f64) -> Self {
        Self::uniform(n, 1.0, 1.0, 2.0, 1.0, 1.5, 1.0, kappa).expect("valid constants")
    }
}

/// Assembled operators of the semidiscrete system, immutable and shareable.
#[derive(Debug, Clone)]
pub struct SemidiscreteSystem {
    pub mass: SparseMatrix,
    pub mass_lumped: Vec<f64>,
    pub stiffness: SparseMatrix,
    /// Diagonal of the boundary damping matrix C, full node length.
    pub damping_diag: Vec<f64>,
    /// Diagonal of the boundary curvature matrix B, full node length.
    pub curvature_diag: Vec<f64>,
    /// Consistent boundary mass, boundary-loop indexing.
    pub boundary_mass: SparseMatrix,
    /// Lumped boundary mass, boundary-loop indexing.
    pub boundary_mass_lumped: Vec<f64>,
    /// Periodic arc-length stiffness on the boundary loop.
    pub boundary_stiffness: SparseMatrix,
    /// Global node index of each boundary-loop position.
    pub boundary_nodes: Vec<usize>,
    pub material: Material,
    min_edge: f64,
    c_max: f64,
}

impl SemidiscreteSystem {
    pub fn n_nodes(&self) -> usize {
        self.mass_lumped.len()
    }

    pub fn n_boundary(&self) -> usize {
        self.boundary_nodes.len()
    }

    /// CFL-style stable time step `factor * h_min / c_max`.
    pub fn stable_dt(&self, factor: f64) -> f64 {
        factor * self.min_edge / self.c_max
    }

    /// Discrete surface Laplacian along the boundary curve:
    /// `-Mb^-1 Kb g` with the lumped boundary mass.
    pub fn boundary_laplacian(&self, g: &[f64]) -> Vec<f64> {
        assert_eq!(g.len(), self.n_boundary(), "boundary field length mismatch");
        let mut out = self.boundary_stiffness.mul_vec(g);
        for (v, &m) in out.iter_mut().zip(&self.boundary_mass_lumped) {
            *v = -*v / m;
        }
        out
    }

    /// Zero the boundary entries of a nodal vector (projection onto the
    /// admissible subspace).
    pub fn mask_boundary(&self, values: &mut [f64]) {
        for &node in &self.boundary_nodes {
            values[node] = 0.0;
        }
    }

    /// c^-2-weighted inner product `u^T M v`.
    pub fn mass_inner(&self, u: &[f64], v: &[f64]) -> f64 {
        self.mass.bilinear(u, v)
    }

    pub fn mass_norm(&self, u: &[f64]) -> f64 {
        self.mass_inner(u, u).max(0.0).sqrt()
    }
}

/// Assemble all operators for the mesh/material pair.
pub fn assemble(mesh: &Mesh, material: &Material) -> Result<SemidiscreteSystem, AssemblyError> {
    let n = mesh.n_nodes();
    if material.c.len() != n {
        return Err(AssemblyError::InvalidMaterial(format!(
            "wave speed field has {} values for {} nodes",
            material.c.len(),
            n
        )));
    }

    let nodes = mesh.nodes();
    let mut mass_trip = Vec::with_capacity(9 * mesh.n_triangles());
    let mut stiff_trip = Vec::with_capacity(9 * mesh.n_triangles());
    let mut lumped = vec![0.0; n];

    for (index, tri) in mesh.triangles().iter().enumerate() {
        let p = [nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]];
        let area = 0.5
            * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1])
                - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]));
        let longest = (0..3)
            .map(|e| {
                let a = p[e];
                let b = p[(e + 1) % 3];
                ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt()
            })
            .fold(0.0f64, f64::max);
        let threshold = 1e-14 * longest * longest;
        if !(area >= threshold) {
            return Err(AssemblyError::DegenerateTriangle { index, area, threshold });
        }

        // stiffness: grad phi_i = (b_i, c_i) / (2 area)
        let b = [p[1][1] - p[2][1], p[2][1] - p[0][1], p[0][1] - p[1][1]];
        let c = [p[2][0] - p[1][0], p[0][0] - p[2][0], p[1][0] - p[0][0]];
        // weighted mass: w = c^-2 interpolated P1, products integrated exactly
        let w = [
            1.0 / (material.c[tri[0]] * material.c[tri[0]]),
            1.0 / (material.c[tri[1]] * material.c[tri[1]]),
            1.0 / (material.c[tri[2]] * material.c[tri[2]]),
        ];
        let w_sum = w[0] + w[1] + w[2];
        for i in 0..3 {
            for j in 0..3 {
                stiff_trip.push((tri[i], tri[j], (b[i] * b[j] + c[i] * c[j]) / (4.0 * area)));
                let m = if i == j {
                    area * (2.0 * w[i] + w_sum) / 30.0
                } else {
                    area * (w[i] + w[j] + w_sum) / 60.0
                };
                mass_trip.push((tri[i], tri[j], m));
            }
            lumped[tri[i]] += area * (w[i] + w_sum) / 12.0;
        }
    }

    let mass = SparseMatrix::from_triplets(n, n, mass_trip);
    let stiffness = SparseMatrix::from_triplets(n, n, stiff_trip);

    // boundary operators in loop ordering
    let bl = mesh.boundary_loop();
    let nb = bl.len();
    let lens = mesh.boundary_edge_lengths();
    let curv = mesh.boundary_curvature();

    let mut mb_lumped = vec![0.0; nb];
    let mut mb_trip = Vec::with_capacity(4 * nb);
    let mut kb_trip = Vec::with_capacity(4 * nb);
    for e in 0..nb {
        let a = e;
        let b = (e + 1) % nb;
        let len = lens[e];
        mb_lumped[a] += 0.5 * len;
        mb_lumped[b] += 0.5 * len;
        mb_trip.push((a, a, len / 3.0));
        mb_trip.push((b, b, len / 3.0));
        mb_trip.push((a, b, len / 6.0));
        mb_trip.push((b, a, len / 6.0));
        kb_trip.push((a, a, 1.0 / len));
        kb_trip.push((b, b, 1.0 / len));
        kb_trip.push((a, b, -1.0 / len));
        kb_trip.push((b, a, -1.0 / len));
    }
    let boundary_mass = SparseMatrix::from_triplets(nb, nb, mb_trip);
    let boundary_stiffness = SparseMatrix::from_triplets(nb, nb, kb_trip);

    let mut damping_diag = vec![0.0; n];
    let mut curvature_diag = vec![0.0; n];
    let damp_coef = material.rho / (material.rho_b * material.c_b);
    let curv_coef = material.rho / material.rho_b;
    for (pos, &node) in bl.iter().enumerate() {
        damping_diag[node] = damp_coef * mb_lumped[pos];
        curvature_diag[node] = curv_coef * curv[pos] * mb_lumped[pos];
    }

    let c_max = material.c.iter().cloned().fold(0.0f64, f64::max);

    Ok(SemidiscreteSystem {
        mass,
        mass_lumped: lumped,
        stiffness,
        damping_diag,
        curvature_diag,
        boundary_mass,
        boundary_mass_lumped: mb_lumped,
        boundary_stiffness,
        boundary_nodes: bl.to_vec(),
        material: material.clone(),
        min_edge: mesh.min_edge_length(),
        c_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_disk_mesh, Mesh};

    fn disk_system(h: f64, kappa: f64) -> SemidiscreteSystem {
        let mesh = generate_disk_mesh(1.0, h).unwrap();
        let material = Material::nondimensional(mesh.n_nodes(), kappa);
        assemble(&mesh, &material).unwrap()
    }

    #[test]
    fn stiffness_annihilates_constants() {
        let sys = disk_system(0.2, 0.9);
        let ones = vec![1.0; sys.n_nodes()];
        let ku = sys.stiffness.mul_vec(&ones);
        let max = ku.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max <= 1e-12, "K 1 = {max}");
    }

    #[test]
    fn boundary_stiffness_annihilates_constants() {
        let sys = disk_system(0.2, 0.9);
        let ones = vec![1.0; sys.n_boundary()];
        let ku = sys.boundary_stiffness.mul_vec(&ones);
        let max = ku.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max <= 1e-12, "Kb 1 = {max}");
        let lap = sys.boundary_laplacian(&ones);
        assert!(lap.iter().all(|v| v.abs() <= 1e-12));
    }

    #[test]
    fn mass_total_converges_to_disk_area() {
        // integral of c^-2 over the unit disk with c = 1 is pi; the inscribed
        // polygon makes the error O(h^2)
        let mut prev = f64::INFINITY;
        for h in [0.2, 0.1, 0.05] {
            let sys = disk_system(h, 0.9);
            let err = (sys.mass.entry_sum() - std::f64::consts::PI).abs();
            assert!(err <= 2.0 * h * h, "mass sum error {err} at h = {h}");
            assert!(err < prev);
            prev = err;
        }
    }

    #[test]
    fn lumped_mass_matches_row_sums_and_is_positive() {
        let sys = disk_system(0.15, 0.9);
        let sums = sys.mass.row_sums();
        for (a, b) in sys.mass_lumped.iter().zip(&sums) {
            assert!((a - b).abs() <= 1e-14 * a.abs().max(1.0));
            assert!(*a > 0.0);
        }
    }

    #[test]
    fn assembled_matrices_are_exactly_symmetric() {
        let sys = disk_system(0.2, 0.9);
        assert_eq!(sys.mass.max_asymmetry(), 0.0);
        assert_eq!(sys.stiffness.max_asymmetry(), 0.0);
        assert_eq!(sys.boundary_mass.max_asymmetry(), 0.0);
        assert_eq!(sys.boundary_stiffness.max_asymmetry(), 0.0);
    }

    #[test]
    fn boundary_diagonals_positive_on_disk() {
        // H = 1 on the unit circle, so both C and B diagonals are positive on
        // boundary nodes and zero inside
        let mesh = generate_disk_mesh(1.0, 0.2).unwrap();
        let sys = disk_system(0.2, 0.9);
        let on_boundary = |i: usize| mesh.boundary_loop().contains(&i);
        for i in 0..sys.n_nodes() {
            if on_boundary(i) {
                assert!(sys.damping_diag[i] > 0.0);
                assert!(sys.curvature_diag[i] > 0.0);
            } else {
                assert_eq!(sys.damping_diag[i], 0.0);
                assert_eq!(sys.curvature_diag[i], 0.0);
            }
        }
    }

    #[test]
    fn boundary_laplacian_eigenfunction_second_order() {
        // g = sin(2 pi s / L) on the uniform circle discretization is an
        // eigenfunction of the periodic Laplacian with eigenvalue -(2 pi / L)^2
        let mut prev = f64::INFINITY;
        for h in [0.1, 0.05, 0.025] {
            let mesh = generate_disk_mesh(1.0, h).unwrap();
            let material = Material::nondimensional(mesh.n_nodes(), 0.9);
            let sys = assemble(&mesh, &material).unwrap();
            let nb = sys.n_boundary();
            let lens = mesh.boundary_edge_lengths();
            let total: f64 = lens.iter().sum();
            let mut s = 0.0;
            let g: Vec<f64> = (0..nb)
                .map(|i| {
                    let v = (2.0 * std::f64::consts::PI * s / total).sin();
                    s += lens[i];
                    v
                })
                .collect();
            let lam = (2.0 * std::f64::consts::PI / total).powi(2);
            let lap = sys.boundary_laplacian(&g);
            let err = lap
                .iter()
                .zip(&g)
                .map(|(l, gi)| (l + lam * gi).abs())
                .fold(0.0f64, f64::max);
            assert!(err <= 2.0 * lam * h * h, "eigen error {err} at h = {h}");
            assert!(err < prev);
            prev = err;
        }
    }

    #[test]
    fn boundary_laplacian_mode_scaling() {
        // eigenvalue ratio between modes m and 2m tends to 1/4
        let mesh = generate_disk_mesh(1.0, 0.02).unwrap();
        let material = Material::nondimensional(mesh.n_nodes(), 0.9);
        let sys = assemble(&mesh, &material).unwrap();
        let nb = sys.n_boundary();
        let lens = mesh.boundary_edge_lengths();
        let total: f64 = lens.iter().sum();
        let mode = |m: f64| -> Vec<f64> {
            let mut s = 0.0;
            (0..nb)
                .map(|i| {
                    let v = (2.0 * std::f64::consts::PI * m * s / total).sin();
                    s += lens[i];
                    v
                })
                .collect()
        };
        let rayleigh = |g: &[f64]| -> f64 {
            let lap = sys.boundary_laplacian(g);
            let num: f64 = g.iter().zip(&lap).map(|(a, b)| a * b).sum();
            let den: f64 = g.iter().map(|a| a * a).sum();
            num / den
        };
        let r = rayleigh(&mode(2.0)) / rayleigh(&mode(4.0));
        assert!((r - 0.25).abs() < 0.01, "mode eigenvalue ratio {r}");
    }

    #[test]
    fn degenerate_triangle_reported_by_index() {
        // sliver triangle 0 passes mesh positivity but fails the assembly
        // area threshold
        let nodes = vec![[0.0, 0.0], [1.0, 0.0], [0.5, 1e-16], [0.5, 1.0]];
        let tris = vec![[0, 1, 2], [1, 3, 2], [0, 2, 3]];
        let mesh = Mesh::new(nodes, tris, vec![0, 1, 3]).unwrap();
        let material = Material::nondimensional(mesh.n_nodes(), 0.9);
        match assemble(&mesh, &material) {
            Err(AssemblyError::DegenerateTriangle { index, .. }) => assert_eq!(index, 0),
            other => panic!("expected degenerate triangle error, got {other:?}"),
        }
    }

    #[test]
    fn assembly_is_kappa_independent() {
        // kappa only rides along in the material; every matrix is identical
        let a = disk_system(0.25, 0.0);
        let b = disk_system(0.25, 1.5);
        let same = |x: &crate::sparse::SparseMatrix, y: &crate::sparse::SparseMatrix| {
            for i in 0..x.rows() {
                for j in 0..x.cols() {
                    if x.get(i, j) != y.get(i, j) {
                        return false;
                    }
                }
            }
            true
        };
        assert!(same(&a.mass, &b.mass));
        assert!(same(&a.stiffness, &b.stiffness));
        assert!(same(&a.boundary_mass, &b.boundary_mass));
        assert!(same(&a.boundary_stiffness, &b.boundary_stiffness));
        assert_eq!(a.damping_diag, b.damping_diag);
        assert_eq!(a.curvature_diag, b.curvature_diag);
    }

    #[test]
    fn material_validation() {
        assert!(Material::uniform(4, 1.0, 1.0, 2.0, 1.0, 1.5, 1.0, -0.1).is_err());
        assert!(Material::uniform(4, 0.0, 1.0, 2.0, 1.0, 1.5, 1.0, 0.9).is_err());
        assert!(Material::uniform(4, 1.0, 1.0, 2.0, 1.0, 1.5, 1.0, 0.0).is_ok());
    }
}
