//! Accelerated Landweber inversion of the voltage data, plus spectral probing
//! of the normal operator `F F*`.
//!
//! The iteration follows the accelerated scheme
//!
//! ```text
//! u_0 = F* V,  v_0 = u_0
//! v_k = u_{k-1} - gamma (F* F u_{k-1} - u_0) / |u_0|
//! u_k = v_k + mu (v_k - v_{k-1})
//! ```
//!
//! including the division by `|u_0|` (in the c^-2-weighted norm); set
//! `normalize: false` for the textbook variant without it. `mu = 0` recovers
//! plain Landweber; momentum factors above ~0.7 can destabilize the
//! iteration, which is logged but not prevented.

use thiserror::Error;

use crate::adjoint::{self, data_norm};
use crate::assembly::SemidiscreteSystem;
use crate::noise::{colored_noise, psd_estimate, NoiseColor, NoiseError, NoiseSpec, PsdEstimate};
use crate::wavesim::{self, time_grid, MeasurementSeries, NodalField, WaveError};

#[derive(Debug, Error)]
pub enum InversionError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("reference field has zero norm")]
    ZeroTrueField,
    #[error(transparent)]
    Wave(#[from] WaveError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
}

/// Iteration parameters; `f_true` switches on the relative-error history.
#[derive(Debug, Clone)]
pub struct LandweberConfig {
    pub gamma: f64,
    pub mu: f64,
    pub iterations: usize,
    /// Divide the step by |u_0| as in the accelerated scheme; `false` gives
    /// the textbook iteration.
    pub normalize: bool,
    pub f_true: Option<NodalField>,
}

impl Default for LandweberConfig {
    fn default() -> Self {
        Self { gamma: 5e-2, mu: 0.0, iterations: 50, normalize: true, f_true: None }
    }
}

impl LandweberConfig {
    fn validate(&self) -> Result<(), InversionError> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(InversionError::InvalidConfig(format!(
                "gamma = {} must be positive",
                self.gamma
            )));
        }
        if !(0.0..1.0).contains(&self.mu) {
            return Err(InversionError::InvalidConfig(format!(
                "mu = {} must lie in [0, 1)",
                self.mu
            )));
        }
        if self.iterations == 0 {
            return Err(InversionError::InvalidConfig("need at least one iteration".into()));
        }
        Ok(())
    }
}

/// Why the iteration ended.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StopReason {
    Completed,
    /// `F* V` vanished; the zero field is the least-squares answer.
    ZeroData,
    /// Residual grew 100x above its running minimum.
    Diverged { at_iteration: usize },
}

#[derive(Debug, Clone)]
pub struct LandweberReport {
    pub reconstruction: NodalField,
    /// `|F u_k - V|` in the data norm, one entry per completed iteration.
    pub residual_history: Vec<f64>,
    /// `|u_k - f_true| / |f_true|`, present iff `f_true` was supplied.
    pub rel_error_history: Option<Vec<f64>>,
    pub stop: StopReason,
}

/// The linear map the iteration inverts; implemented by the wave operator
/// and by cheap stubs in tests.
pub trait ForwardModel {
    fn apply(&self, f: &NodalField) -> Result<MeasurementSeries, WaveError>;
    fn apply_adjoint(&self, d: &MeasurementSeries) -> Result<NodalField, WaveError>;
    /// Image-space inner product (c^-2-weighted mass for the wave model).
    fn image_inner(&self, a: &NodalField, b: &NodalField) -> f64;
    /// Data-space norm for residuals.
    fn data_norm(&self, a: &MeasurementSeries) -> f64;

    fn image_norm(&self, a: &NodalField) -> f64 {
        self.image_inner(a, a).max(0.0).sqrt()
    }
}

/// `F`/`F*` of the assembled system over the time window of the data.
pub struct WaveModel<'a> {
    pub system: &'a SemidiscreteSystem,
    pub t_final: f64,
    pub dt: f64,
}

impl<'a> WaveModel<'a> {
    /// Time window taken from the measurement record itself.
    pub fn for_data(system: &'a SemidiscreteSystem, data: &MeasurementSeries) -> Self {
        Self { system, t_final: data.t_final(), dt: data.dt }
    }
}

impl ForwardModel for WaveModel<'_> {
    /// The wave operator restricted to the admissible subspace: boundary
    /// entries are projected away silently on both sides, so iterates that
    /// drift off the subspace are pulled back instead of tripping the
    /// admissibility warning.
    fn apply(&self, f: &NodalField) -> Result<MeasurementSeries, WaveError> {
        let mut masked = f.clone();
        self.system.mask_boundary(&mut masked.values);
        wavesim::forward(self.system, &masked, self.t_final, self.dt)
    }

    fn apply_adjoint(&self, d: &MeasurementSeries) -> Result<NodalField, WaveError> {
        let mut g = adjoint::adjoint(self.system, d)?;
        self.system.mask_boundary(&mut g.values);
        Ok(g)
    }

    fn image_inner(&self, a: &NodalField, b: &NodalField) -> f64 {
        self.system.mass_inner(&a.values, &b.values)
    }

    fn data_norm(&self, a: &MeasurementSeries) -> f64 {
        data_norm(self.system, a)
    }
}

fn series_sub(a: &MeasurementSeries, b: &MeasurementSeries) -> MeasurementSeries {
    let mut out = a.clone();
    out.values -= &b.values;
    out
}

/// Run the accelerated Landweber iteration against an arbitrary model.
pub fn landweber_with<M: ForwardModel>(
    model: &M,
    data: &MeasurementSeries,
    config: &LandweberConfig,
) -> Result<LandweberReport, InversionError> {
    config.validate()?;
    if config.mu > 0.7 {
        log::warn!("momentum factor mu = {} above 0.7; instability may appear", config.mu);
    }

    let u0 = model.apply_adjoint(data)?;
    let norm_u0 = model.image_norm(&u0);
    if norm_u0 == 0.0 {
        log::info!("F* V = 0: returning the zero reconstruction without iterating");
        return Ok(LandweberReport {
            reconstruction: NodalField::zeros(u0.len()),
            residual_history: Vec::new(),
            rel_error_history: config.f_true.as_ref().map(|_| Vec::new()),
            stop: StopReason::ZeroData,
        });
    }
    let step = config.gamma / if config.normalize { norm_u0 } else { 1.0 };

    let f_true_norm = match &config.f_true {
        Some(ft) => {
            let n = model.image_norm(ft);
            if n == 0.0 {
                return Err(InversionError::ZeroTrueField);
            }
            Some(n)
        }
        None => None,
    };

    let k_max = config.iterations;
    let mut residual_history = vec![f64::NAN; k_max];
    let mut rel_error_history = config.f_true.as_ref().map(|_| Vec::with_capacity(k_max));
    let mut min_residual = f64::INFINITY;
    let mut stop = StopReason::Completed;

    let n = u0.len();
    let mut u = u0.clone();
    let mut v_prev = u0.clone();
    let mut completed = 0usize;

    for k in 1..=k_max {
        // F u_{k-1}; its residual belongs to iterate k-1
        let fu = model.apply(&u)?;
        let res_prev = model.data_norm(&series_sub(&fu, data));
        if k >= 2 {
            residual_history[k - 2] = res_prev;
        }
        min_residual = min_residual.min(res_prev);
        if res_prev > 100.0 * min_residual {
            log::warn!(
                "residual {res_prev:.3e} grew 100x past its minimum {min_residual:.3e}; stopping at iteration {k}"
            );
            stop = StopReason::Diverged { at_iteration: k };
            break;
        }

        // v_k = u_{k-1} - gamma (F* F u_{k-1} - u_0) / |u_0|
        let z = model.apply_adjoint(&fu)?;
        let mut v = vec![0.0; n];
        for i in 0..n {
            v[i] = u.values[i] - step * (z.values[i] - u0.values[i]);
        }
        // u_k = v_k + mu (v_k - v_{k-1})
        let mut u_next = vec![0.0; n];
        for i in 0..n {
            u_next[i] = v[i] + config.mu * (v[i] - v_prev.values[i]);
        }
        v_prev = NodalField::from_values(v);
        u = NodalField::from_values(u_next);
        completed = k;

        if let (Some(hist), Some(ft), Some(ftn)) =
            (rel_error_history.as_mut(), config.f_true.as_ref(), f_true_norm)
        {
            let mut diff = ft.clone();
            for i in 0..n {
                diff.values[i] = u.values[i] - ft.values[i];
            }
            hist.push(model.image_norm(&diff) / ftn);
        }
    }

    residual_history.truncate(completed);
    if completed > 0 {
        let fu = model.apply(&u)?;
        residual_history[completed - 1] = model.data_norm(&series_sub(&fu, data));
    }

    Ok(LandweberReport { reconstruction: u, residual_history, rel_error_history, stop })
}

/// [`landweber_with`] against the wave model of `system`, with the time grid
/// taken from the data record.
pub fn landweber(
    system: &SemidiscreteSystem,
    data: &MeasurementSeries,
    config: &LandweberConfig,
) -> Result<LandweberReport, InversionError> {
    if data.nb() != system.n_boundary() {
        return Err(InversionError::Wave(WaveError::DimensionMismatch(format!(
            "data has {} boundary nodes, system has {}",
            data.nb(),
            system.n_boundary()
        ))));
    }
    let model = WaveModel::for_data(system, data);
    landweber_with(&model, data, config)
}

/// `|u - f_true|_M / |f_true|_M` in the c^-2-weighted norm.
pub fn relative_error(
    system: &SemidiscreteSystem,
    u: &NodalField,
    f_true: &NodalField,
) -> Result<f64, InversionError> {
    if u.len() != f_true.len() {
        return Err(InversionError::Wave(WaveError::DimensionMismatch(format!(
            "fields have {} and {} values",
            u.len(),
            f_true.len()
        ))));
    }
    let denom = system.mass_norm(&f_true.values);
    if denom == 0.0 {
        return Err(InversionError::ZeroTrueField);
    }
    let diff: Vec<f64> = u.values.iter().zip(&f_true.values).map(|(a, b)| a - b).collect();
    Ok(system.mass_norm(&diff) / denom)
}

/// Average power spectral response of `F F*` to white-noise probes.
///
/// Each probe is an independent white series pushed through `F F*`; the
/// returned estimate averages the output PSD over probes (and, inside the
/// estimator, over boundary nodes and segments). Probes are deterministic in
/// `seed` and may be evaluated on `threads` worker threads without changing
/// the result.
pub fn normal_operator_spectrum(
    system: &SemidiscreteSystem,
    n_probes: usize,
    seed: u64,
    t_final: f64,
    dt: f64,
    threads: usize,
) -> Result<PsdEstimate, InversionError> {
    if n_probes == 0 {
        return Err(InversionError::InvalidConfig("need at least one probe".into()));
    }
    let (n_steps, dt) = time_grid(t_final, dt)?;
    let nt = n_steps + 1;
    let nb = system.n_boundary();

    let probe_psd = |i: usize| -> Result<PsdEstimate, InversionError> {
        let probe_seed = seed.wrapping_add((i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let spec = NoiseSpec { color: NoiseColor::White, level: 1.0, seed: probe_seed };
        let probe = colored_noise(nt, nb, dt, &spec)?;
        let mut g = adjoint::adjoint(system, &probe)?;
        // F* of rough data has boundary values; project silently
        system.mask_boundary(&mut g.values);
        let w = wavesim::forward(system, &g, t_final, dt)?;
        Ok(psd_estimate(&w)?)
    };

    let mut per_probe: Vec<Option<Result<PsdEstimate, InversionError>>> =
        (0..n_probes).map(|_| None).collect();
    let workers = threads.max(1).min(n_probes);
    if workers == 1 {
        for (i, slot) in per_probe.iter_mut().enumerate() {
            *slot = Some(probe_psd(i));
        }
    } else {
        let chunk = n_probes.div_ceil(workers);
        std::thread::scope(|scope| {
            for (w, slots) in per_probe.chunks_mut(chunk).enumerate() {
                let probe_psd = &probe_psd;
                scope.spawn(move || {
                    for (off, slot) in slots.iter_mut().enumerate() {
                        *slot = Some(probe_psd(w * chunk + off));
                    }
                });
            }
        });
    }

    let mut acc: Option<PsdEstimate> = None;
    for slot in per_probe {
        let psd = slot.expect("filled by worker")?;
        match &mut acc {
            None => acc = Some(psd),
            Some(total) => {
                for (t, p) in total.power.iter_mut().zip(&psd.power) {
                    *t += p;
                }
            }
        }
    }
    let mut total = acc.expect("at least one probe");
    for p in &mut total.power {
        *p /= n_probes as f64;
    }
    Ok(total)
}
