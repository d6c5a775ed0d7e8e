//! Batch front end for the photoacoustic tomography toolkit: mesh
//! generation, forward simulation of piezoelectric voltage data,
//! Landweber reconstruction, sensor directivity sweeps, noise studies and
//! normal-operator spectra. Commands communicate through files only
//! (PATMESH / PATMEAS1 / PATFIELD / PGM / CSV) and are deterministic given
//! the same configuration and seed.

mod config;
mod fieldio;
mod output;
mod pgm;
mod phantom;

use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use config::{check_exists, FileConfig};
use output::{atomic_write, ReportHeader};
use pat_core::adjoint::{adjoint_test, random_smooth_field, random_smooth_series};
use pat_core::inversion::{landweber, normal_operator_spectrum, LandweberConfig, StopReason};
use pat_core::mesh::{generate_disk_mesh, load_mesh, save_mesh, Mesh};
use pat_core::noise::{add_noise, psd_estimate, NoiseColor, NoiseSpec};
use pat_core::sensor;
use pat_core::wavesim::{measure_voltage, solve_forward_run};
use pat_core::{assemble, Material, MeasurementSeries, SemidiscreteSystem, SeriesKind};

#[derive(Parser)]
#[command(name = "pat", version, about = "2D photoacoustic tomography toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a disk mesh (PATMESH text format)
    MeshGen(MeshGenArgs),
    /// Simulate voltage measurements from a phantom (the forward map)
    Forward(ForwardArgs),
    /// Reconstruct the initial pressure from voltage data
    Reconstruct(ReconstructArgs),
    /// Export the sensor directivity pattern over incidence angles
    Directivity(DirectivityArgs),
    /// Add colored noise to a measurement file and export its spectrum
    Noise(NoiseArgs),
    /// White-noise spectral response of the data-side normal operator
    Spectrum(SpectrumArgs),
    /// Measure the forward/adjoint consistency on random smooth data
    AdjointTest(AdjointTestArgs),
}

/// Acoustic and sensor-stack constants (nondimensional defaults: unit water,
/// heavier backing, unit-speed film).
#[derive(Args, Clone)]
struct MaterialOpts {
    /// Wave speed in the acoustic domain (constant field)
    #[arg(long)]
    c: Option<f64>,
    /// Acoustic density
    #[arg(long)]
    rho: Option<f64>,
    /// Backing-layer density
    #[arg(long)]
    rho_b: Option<f64>,
    /// Backing-layer wave speed
    #[arg(long)]
    c_b: Option<f64>,
    /// Film density
    #[arg(long)]
    rho_p: Option<f64>,
    /// Film wave speed
    #[arg(long)]
    c_p: Option<f64>,
    /// Film transduction coefficient
    #[arg(long)]
    kappa: Option<f64>,
}

#[derive(Clone, Copy)]
struct ResolvedMaterial {
    c: f64,
    rho: f64,
    rho_b: f64,
    c_b: f64,
    rho_p: f64,
    c_p: f64,
    kappa: f64,
}

impl MaterialOpts {
    fn resolve(&self, cfg: &FileConfig) -> Result<ResolvedMaterial> {
        Ok(ResolvedMaterial {
            c: cfg.resolve(self.c, "c", 1.0)?,
            rho: cfg.resolve(self.rho, "rho", 1.0)?,
            rho_b: cfg.resolve(self.rho_b, "rho_b", 2.0)?,
            c_b: cfg.resolve(self.c_b, "c_b", 1.0)?,
            rho_p: cfg.resolve(self.rho_p, "rho_p", 1.5)?,
            c_p: cfg.resolve(self.c_p, "c_p", 1.0)?,
            kappa: cfg.resolve(self.kappa, "kappa", 0.9)?,
        })
    }
}

impl ResolvedMaterial {
    fn material(&self, n_nodes: usize) -> Result<Material> {
        Ok(Material::uniform(
            n_nodes, self.c, self.rho, self.rho_b, self.c_b, self.rho_p, self.c_p, self.kappa,
        )?)
    }

    fn echo(&self, header: &mut ReportHeader) {
        header
            .set("c", self.c)
            .set("rho", self.rho)
            .set("rho_b", self.rho_b)
            .set("c_b", self.c_b)
            .set("rho_p", self.rho_p)
            .set("c_p", self.c_p)
            .set("kappa", self.kappa);
    }
}

#[derive(Args, Clone)]
struct TimeOpts {
    /// Final time of the simulation window
    #[arg(long)]
    t_final: Option<f64>,
    /// Explicit time step (otherwise derived from the CFL factor)
    #[arg(long)]
    dt: Option<f64>,
    /// CFL safety factor for the derived step
    #[arg(long)]
    cfl: Option<f64>,
}

impl TimeOpts {
    fn resolve(&self, cfg: &FileConfig, sys: &SemidiscreteSystem) -> Result<(f64, f64)> {
        let t_final = cfg.resolve(self.t_final, "t_final", 2.0)?;
        let dt = match cfg.optional(self.dt, "dt")? {
            Some(dt) => dt,
            None => sys.stable_dt(cfg.resolve(self.cfl, "cfl", 0.5)?),
        };
        Ok((t_final, dt))
    }
}

#[derive(Args)]
struct MeshGenArgs {
    /// Key=value run configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Disk radius
    #[arg(long)]
    radius: Option<f64>,
    /// Target edge length
    #[arg(long)]
    h: Option<f64>,
    /// Output PATMESH file
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ForwardArgs {
    /// Key=value run configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Mesh file (PATMESH)
    #[arg(long)]
    mesh: Option<PathBuf>,
    /// Phantom raster (PGM, 8- or 16-bit grayscale)
    #[arg(long)]
    phantom: Option<PathBuf>,
    /// Initial-pressure field file (PATFIELD) instead of a raster
    #[arg(long)]
    field: Option<PathBuf>,
    #[command(flatten)]
    material: MaterialOpts,
    #[command(flatten)]
    time: TimeOpts,
    /// Output voltage measurements (PATMEAS1)
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Also write the boundary pressure trace
    #[arg(long)]
    trace_out: Option<PathBuf>,
    /// Also write the ingested (tapered) initial pressure field
    #[arg(long)]
    field_out: Option<PathBuf>,
    /// Also export the voltage record as CSV
    #[arg(long)]
    csv_out: Option<PathBuf>,
    /// Seed echoed into reports (the forward map itself is deterministic)
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ReconstructArgs {
    /// Key=value run configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Reconstruction mesh (PATMESH)
    #[arg(long)]
    mesh: Option<PathBuf>,
    /// Voltage data (PATMEAS1)
    #[arg(long)]
    data: Option<PathBuf>,
    /// Mesh the data was generated on, when finer than the reconstruction
    /// mesh; boundary values are down-sampled by linear interpolation
    #[arg(long)]
    data_mesh: Option<PathBuf>,
    #[command(flatten)]
    material: MaterialOpts,
    /// Reconstruct as if the film coefficient were this value (0 treats the
    /// data as plain pressure/Dirichlet measurements)
    #[arg(long)]
    kappa_override: Option<f64>,
    /// Relaxation factor
    #[arg(long)]
    gamma: Option<f64>,
    /// Momentum factor
    #[arg(long)]
    mu: Option<f64>,
    /// Iteration count
    #[arg(long)]
    iterations: Option<usize>,
    /// Drop the |u0| normalization of the step
    #[arg(long)]
    no_normalize: bool,
    /// Ground-truth field (PATFIELD) for the error history
    #[arg(long)]
    f_true: Option<PathBuf>,
    /// Output reconstruction (PATFIELD)
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Iteration report (CSV)
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct DirectivityArgs {
    /// Key=value run configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Wave speed in the acoustic medium
    #[arg(long)]
    c: Option<f64>,
    /// Film wave speed
    #[arg(long)]
    c_p: Option<f64>,
    /// Film transduction coefficient
    #[arg(long)]
    kappa: Option<f64>,
    /// Acoustic density
    #[arg(long)]
    rho: Option<f64>,
    /// Backing density
    #[arg(long)]
    rho_b: Option<f64>,
    /// Backing wave speed
    #[arg(long)]
    c_b: Option<f64>,
    /// Sweep resolution in degrees
    #[arg(long)]
    step_deg: Option<f64>,
    /// Output CSV (theta_deg, linear, db)
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct NoiseArgs {
    /// Key=value run configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input measurements (PATMEAS1)
    #[arg(long)]
    input: Option<PathBuf>,
    /// Noise color
    #[arg(long, value_enum)]
    color: Option<ColorArg>,
    /// Relative noise level (fraction of the signal l2 norm)
    #[arg(long)]
    level: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output noisy measurements (PATMEAS1)
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// PSD of the noisy record (CSV: frequency, power)
    #[arg(long)]
    psd_out: Option<PathBuf>,
}

#[derive(Args)]
struct SpectrumArgs {
    /// Key=value run configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    mesh: Option<PathBuf>,
    #[command(flatten)]
    material: MaterialOpts,
    #[command(flatten)]
    time: TimeOpts,
    /// Number of white-noise probes to average
    #[arg(long)]
    probes: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV (frequency, power)
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AdjointTestArgs {
    /// Key=value run configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    mesh: Option<PathBuf>,
    #[command(flatten)]
    material: MaterialOpts,
    #[command(flatten)]
    time: TimeOpts,
    #[arg(long)]
    seed: Option<u64>,
    /// Optional one-line CSV report
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ColorArg {
    White,
    Pink,
    Red,
}

impl From<ColorArg> for NoiseColor {
    fn from(c: ColorArg) -> Self {
        match c {
            ColorArg::White => NoiseColor::White,
            ColorArg::Pink => NoiseColor::Pink,
            ColorArg::Red => NoiseColor::Red,
        }
    }
}

impl std::str::FromStr for ColorArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "white" => Ok(ColorArg::White),
            "pink" => Ok(ColorArg::Pink),
            "red" => Ok(ColorArg::Red),
            other => Err(format!("unknown noise color '{other}'")),
        }
    }
}

impl std::fmt::Display for ColorArg {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ColorArg::White => "white",
            ColorArg::Pink => "pink",
            ColorArg::Red => "red",
        })
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::MeshGen(args) => cmd_mesh_gen(args),
        Command::Forward(args) => cmd_forward(args),
        Command::Reconstruct(args) => cmd_reconstruct(args),
        Command::Directivity(args) => cmd_directivity(args),
        Command::Noise(args) => cmd_noise(args),
        Command::Spectrum(args) => cmd_spectrum(args),
        Command::AdjointTest(args) => cmd_adjoint_test(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn load_mesh_checked(path: &std::path::Path) -> Result<Mesh> {
    check_exists(path)?;
    load_mesh(path).with_context(|| format!("loading mesh {}", path.display()))
}

fn tmp_sibling(path: &std::path::Path) -> PathBuf {
    path.with_file_name(format!(
        "{}.tmp",
        path.file_name().map(|n| n.to_string_lossy()).unwrap_or_default()
    ))
}

fn save_series_atomic(series: &MeasurementSeries, path: &std::path::Path) -> Result<()> {
    let tmp = tmp_sibling(path);
    series.save(&tmp)?;
    std::fs::rename(&tmp, path)
        .with_context(|| format!("renaming {} -> {}", tmp.display(), path.display()))?;
    Ok(())
}

fn cmd_mesh_gen(args: MeshGenArgs) -> Result<()> {
    let cfg = FileConfig::load(args.config.as_ref())?;
    let radius = cfg.resolve(args.radius, "radius", 1.0)?;
    let h = cfg.require(args.h, "h")?;
    let out = cfg.require_path(args.out, "out")?;

    let mesh = generate_disk_mesh(radius, h)?;
    let tmp = tmp_sibling(&out);
    save_mesh(&mesh, &tmp)?;
    std::fs::rename(&tmp, &out)?;
    println!(
        "mesh: {} nodes, {} triangles, {} boundary nodes, h_min = {:.4e} -> {}",
        mesh.n_nodes(),
        mesh.n_triangles(),
        mesh.boundary_loop().len(),
        mesh.min_edge_length(),
        out.display()
    );
    Ok(())
}

fn cmd_forward(args: ForwardArgs) -> Result<()> {
    let cfg = FileConfig::load(args.config.as_ref())?;
    let mesh_path = cfg.require_path(args.mesh, "mesh")?;
    let out = cfg.require_path(args.out, "out")?;
    let phantom_path = cfg.optional_path(args.phantom, "phantom");
    let field_path = cfg.optional_path(args.field, "field");
    let seed = cfg.resolve(args.seed, "seed", 0u64)?;

    let mesh = load_mesh_checked(&mesh_path)?;
    let resolved = args.material.resolve(&cfg)?;
    let material = resolved.material(mesh.n_nodes())?;
    let sys = assemble(&mesh, &material)?;
    let (t_final, dt) = args.time.resolve(&cfg, &sys)?;

    let f = match (&phantom_path, &field_path) {
        (Some(p), None) => {
            check_exists(p)?;
            let raster = pgm::load_pgm(p)?;
            phantom::raster_to_field(&raster, &mesh)?
        }
        (None, Some(p)) => {
            check_exists(p)?;
            let field = fieldio::load_field(p)?;
            if field.len() != mesh.n_nodes() {
                bail!(
                    "field has {} values but the mesh has {} nodes",
                    field.len(),
                    mesh.n_nodes()
                );
            }
            field
        }
        (Some(_), Some(_)) => bail!("give either --phantom or --field, not both"),
        (None, None) => bail!("an input is required: --phantom (PGM) or --field (PATFIELD)"),
    };

    let run = solve_forward_run(&sys, &f, t_final, dt)?;
    let voltage = measure_voltage(&sys, &run.trace, material.kappa, material.c_p)?;
    save_series_atomic(&voltage, &out)?;

    if let Some(path) = cfg.optional_path(args.trace_out, "trace_out") {
        save_series_atomic(&run.trace, &path)?;
    }
    if let Some(path) = cfg.optional_path(args.field_out, "field_out") {
        fieldio::save_field(&f, &path)?;
    }
    if let Some(path) = cfg.optional_path(args.csv_out, "csv_out") {
        let mut header = ReportHeader::new("forward");
        resolved.echo(&mut header);
        header
            .set_path("mesh", &mesh_path)
            .set("t_final", t_final)
            .set("dt", voltage.dt)
            .set("seed", seed);
        let mut body = Vec::new();
        voltage.write_csv(&mut body)?;
        let mut text = header.render().into_bytes();
        text.extend_from_slice(&body);
        atomic_write(&path, &text)?;
    }
    println!(
        "forward: {} time levels x {} boundary nodes (dt = {:.4e}) -> {}",
        voltage.nt(),
        voltage.nb(),
        voltage.dt,
        out.display()
    );
    Ok(())
}

fn cmd_reconstruct(args: ReconstructArgs) -> Result<()> {
    let cfg = FileConfig::load(args.config.as_ref())?;
    let mesh_path = cfg.require_path(args.mesh, "mesh")?;
    let data_path = cfg.require_path(args.data, "data")?;
    let out = cfg.require_path(args.out, "out")?;
    let report_path = cfg.optional_path(args.report, "report");
    let seed = cfg.resolve(args.seed, "seed", 0u64)?;

    let mesh = load_mesh_checked(&mesh_path)?;
    let resolved = args.material.resolve(&cfg)?;
    let kappa_override = cfg.optional(args.kappa_override, "kappa_override")?;
    let mut used = resolved;
    if let Some(kappa) = kappa_override {
        used.kappa = kappa;
    }
    let material = used.material(mesh.n_nodes())?;
    let sys = assemble(&mesh, &material)?;

    check_exists(&data_path)?;
    let mut data = MeasurementSeries::load(&data_path, SeriesKind::Voltage)?;
    if let Some(fine_path) = cfg.optional_path(args.data_mesh, "data_mesh") {
        let fine_mesh = load_mesh_checked(&fine_path)?;
        data = pat_core::resample::downsample_boundary(&fine_mesh, &data, &mesh)?;
    }
    if data.nb() != sys.n_boundary() {
        bail!(
            "data has {} boundary nodes but the mesh has {}; pass --data-mesh for down-sampling",
            data.nb(),
            sys.n_boundary()
        );
    }

    let f_true = match cfg.optional_path(args.f_true, "f_true") {
        Some(p) => {
            check_exists(&p)?;
            let field = fieldio::load_field(&p)?;
            if field.len() != mesh.n_nodes() {
                bail!("--f-true has {} values for {} nodes", field.len(), mesh.n_nodes());
            }
            Some(field)
        }
        None => None,
    };

    let lw = LandweberConfig {
        gamma: cfg.resolve(args.gamma, "gamma", 5e-2)?,
        mu: cfg.resolve(args.mu, "mu", 0.0)?,
        iterations: cfg.resolve(args.iterations, "iterations", 50)?,
        normalize: if args.no_normalize { false } else { cfg.resolve(None, "normalize", true)? },
        f_true,
    };
    let report = landweber(&sys, &data, &lw)?;

    fieldio::save_field(&report.reconstruction, &out)?;
    if let Some(path) = report_path {
        let mut header = ReportHeader::new("reconstruct");
        resolved.echo(&mut header);
        header
            .set_path("mesh", &mesh_path)
            .set_path("data", &data_path)
            .set("kappa_used", used.kappa)
            .set("gamma", lw.gamma)
            .set("mu", lw.mu)
            .set("iterations", lw.iterations)
            .set("normalize", lw.normalize)
            .set("seed", seed);
        let mut text = header.render();
        match &report.rel_error_history {
            Some(errors) => {
                text.push_str("iteration,residual,rel_error\n");
                for (k, (r, e)) in report.residual_history.iter().zip(errors).enumerate() {
                    writeln!(text, "{},{r:.9e},{e:.9e}", k + 1).expect("string write");
                }
            }
            None => {
                text.push_str("iteration,residual\n");
                for (k, r) in report.residual_history.iter().enumerate() {
                    writeln!(text, "{},{r:.9e}", k + 1).expect("string write");
                }
            }
        }
        atomic_write(&path, text.as_bytes())?;
    }

    match report.stop {
        StopReason::Completed => {}
        StopReason::ZeroData => println!("note: F* V = 0, returned the zero field"),
        StopReason::Diverged { at_iteration } => {
            println!("note: residual diverged, stopped early at iteration {at_iteration}")
        }
    }
    if let Some(errors) = &report.rel_error_history {
        if let Some(last) = errors.last() {
            match errors.iter().position(|e| *e <= 0.01) {
                Some(k) => println!(
                    "reconstruct: final relative error {last:.4e}; reached 1% at iteration {}",
                    k + 1
                ),
                None => println!(
                    "reconstruct: final relative error {last:.4e}; did not reach 1% in {} iterations",
                    errors.len()
                ),
            }
        }
    } else if let Some(last) = report.residual_history.last() {
        println!("reconstruct: final residual {last:.4e}");
    }
    println!("reconstruction -> {}", out.display());
    Ok(())
}

fn cmd_directivity(args: DirectivityArgs) -> Result<()> {
    let cfg = FileConfig::load(args.config.as_ref())?;
    // physical (dimensional) defaults: water against a PVDF-like stack
    let c = cfg.resolve(args.c, "c", 1500.0)?;
    let c_p = cfg.resolve(args.c_p, "c_p", 2000.0)?;
    let kappa = cfg.resolve(args.kappa, "kappa", 0.9)?;
    let rho = cfg.resolve(args.rho, "rho", 1000.0)?;
    let rho_b = cfg.resolve(args.rho_b, "rho_b", 2000.0)?;
    let c_b = cfg.resolve(args.c_b, "c_b", 1000.0)?;
    let step_deg = cfg.resolve(args.step_deg, "step_deg", 0.25)?;
    let out = cfg.require_path(args.out, "out")?;
    if step_deg <= 0.0 {
        bail!("step_deg must be positive");
    }

    let alpha = rho * c / (rho_b * c_b);
    let critical = sensor::critical_angle(c, c_p, kappa);
    let mut header = ReportHeader::new("directivity");
    header
        .set("c", c)
        .set("c_p", c_p)
        .set("kappa", kappa)
        .set("rho", rho)
        .set("rho_b", rho_b)
        .set("c_b", c_b)
        .set("alpha", alpha)
        .set("step_deg", step_deg);
    if let Some(theta) = critical {
        header.set("critical_angle_deg", format!("{:.6}", theta.to_degrees()));
    }
    let mut text = header.render();
    text.push_str("theta_deg,linear,db\n");
    let steps = (90.0 / step_deg).round() as usize;
    for k in 0..=steps {
        let deg = (k as f64 * step_deg).min(90.0);
        let v = sensor::directivity(deg.to_radians(), c, c_p, kappa, alpha);
        writeln!(text, "{deg:.4},{v:.9e},{:.6}", sensor::directivity_db(v)).expect("string write");
    }
    atomic_write(&out, text.as_bytes())?;
    match critical {
        Some(theta) => println!(
            "directivity -> {} (critical angle {:.3} deg)",
            out.display(),
            theta.to_degrees()
        ),
        None => println!("directivity -> {} (no critical angle)", out.display()),
    }
    Ok(())
}

fn cmd_noise(args: NoiseArgs) -> Result<()> {
    let cfg = FileConfig::load(args.config.as_ref())?;
    let input = cfg.require_path(args.input, "input")?;
    let out = cfg.require_path(args.out, "out")?;
    let color = cfg.require(args.color, "color")?;
    let level = cfg.resolve(args.level, "level", 0.1)?;
    let seed = cfg.resolve(args.seed, "seed", 0u64)?;

    check_exists(&input)?;
    let clean = MeasurementSeries::load(&input, SeriesKind::Voltage)?;
    let spec = NoiseSpec { color: color.into(), level, seed };
    let noisy = add_noise(&clean, &spec)?;
    save_series_atomic(&noisy, &out)?;

    if let Some(path) = cfg.optional_path(args.psd_out, "psd_out") {
        let psd = psd_estimate(&noisy)?;
        let mut header = ReportHeader::new("noise");
        header
            .set_path("input", &input)
            .set("color", color)
            .set("level", level)
            .set("seed", seed);
        let mut text = header.render();
        text.push_str("frequency,power\n");
        for (f, p) in psd.freqs.iter().zip(&psd.power) {
            writeln!(text, "{f:.9e},{p:.9e}").expect("string write");
        }
        atomic_write(&path, text.as_bytes())?;
    }
    println!(
        "noise: {color} at level {level} over {} samples -> {}",
        clean.nt() * clean.nb(),
        out.display()
    );
    Ok(())
}

fn cmd_spectrum(args: SpectrumArgs) -> Result<()> {
    let cfg = FileConfig::load(args.config.as_ref())?;
    let mesh_path = cfg.require_path(args.mesh, "mesh")?;
    let out = cfg.require_path(args.out, "out")?;
    let probes = cfg.resolve(args.probes, "probes", 8usize)?;
    let seed = cfg.resolve(args.seed, "seed", 0u64)?;

    let mesh = load_mesh_checked(&mesh_path)?;
    let resolved = args.material.resolve(&cfg)?;
    let material = resolved.material(mesh.n_nodes())?;
    let sys = assemble(&mesh, &material)?;
    let (t_final, dt) = args.time.resolve(&cfg, &sys)?;
    let threads = std::env::var("PAT_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .unwrap_or(1);

    let psd = normal_operator_spectrum(&sys, probes, seed, t_final, dt, threads)?;
    let mut header = ReportHeader::new("spectrum");
    resolved.echo(&mut header);
    header
        .set_path("mesh", &mesh_path)
        .set("probes", probes)
        .set("t_final", t_final)
        .set("threads", threads)
        .set("seed", seed);
    let mut text = header.render();
    text.push_str("frequency,power\n");
    for (f, p) in psd.freqs.iter().zip(&psd.power) {
        writeln!(text, "{f:.9e},{p:.9e}").expect("string write");
    }
    atomic_write(&out, text.as_bytes())?;
    println!("normal-operator spectrum ({probes} probes) -> {}", out.display());
    Ok(())
}

fn cmd_adjoint_test(args: AdjointTestArgs) -> Result<()> {
    let cfg = FileConfig::load(args.config.as_ref())?;
    let mesh_path = cfg.require_path(args.mesh, "mesh")?;
    let seed = cfg.resolve(args.seed, "seed", 0u64)?;

    let mesh = load_mesh_checked(&mesh_path)?;
    let resolved = args.material.resolve(&cfg)?;
    let material = resolved.material(mesh.n_nodes())?;
    let sys = assemble(&mesh, &material)?;
    let (t_final, dt) = args.time.resolve(&cfg, &sys)?;

    let f = random_smooth_field(&mesh, seed);
    let psi = random_smooth_series(&mesh, t_final, dt, seed.wrapping_add(1));
    let mismatch = adjoint_test(&sys, &f, &psi)?;
    println!("adjoint mismatch = {mismatch:.6e}");

    if let Some(path) = cfg.optional_path(args.out, "out") {
        let mut header = ReportHeader::new("adjoint-test");
        resolved.echo(&mut header);
        header
            .set_path("mesh", &mesh_path)
            .set("t_final", t_final)
            .set("dt", psi.dt)
            .set("seed", seed);
        let mut text = header.render();
        text.push_str("mismatch\n");
        writeln!(text, "{mismatch:.9e}").expect("string write");
        atomic_write(&path, text.as_bytes())?;
    }
    Ok(())
}
