//! Colored measurement noise and power spectral density estimation.
//!
//! Noise is synthesized in the frequency domain: per boundary node an
//! independent spectrum with random phases and amplitude proportional to
//! `omega^0`, `omega^-1/2` or `omega^-1` (white / pink / red, i.e. power laws
//! `omega^0`, `omega^-1`, `omega^-2`), zero DC bin, inverse FFT, then
//! normalization to unit RMS. Every node derives its own stream from the
//! spec seed through a fixed, platform-independent generator (ChaCha8), so
//! results are reproducible and node-parallel generation would not change
//! them.
//!
//! The PSD estimator is a segment-averaged periodogram: 50% overlap,
//! per-segment mean removal, a cosine-tapered (Tukey, 20% taper) window, and
//! averaging across segments and boundary nodes; one-sided output on
//! `[0, 1/(2 dt)]`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::wavesim::{MeasurementSeries, SeriesKind};

#[derive(Debug, Error)]
pub enum NoiseError {
    #[error("series too short: {got} samples, need at least {need}")]
    TooShort { got: usize, need: usize },
    #[error("cannot scale noise against an all-zero signal")]
    ZeroSignal,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Spectral shape of the noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseColor {
    /// Flat power.
    White,
    /// Power ~ 1/omega.
    Pink,
    /// Power ~ 1/omega^2 (Brownian).
    Red,
}

impl NoiseColor {
    /// Exponent beta of the power law `PSD ~ omega^-beta`.
    pub fn power_exponent(self) -> f64 {
        match self {
            NoiseColor::White => 0.0,
            NoiseColor::Pink => 1.0,
            NoiseColor::Red => 2.0,
        }
    }
}

/// Noise recipe: color, relative level (used by [`add_noise`]) and seed.
#[derive(Debug, Clone, Copy)]
pub struct NoiseSpec {
    pub color: NoiseColor,
    pub level: f64,
    pub seed: u64,
}

/// Generate unit-RMS colored noise, one independent series per boundary node.
pub fn colored_noise(
    nt: usize,
    nb: usize,
    dt: f64,
    spec: &NoiseSpec,
) -> Result<MeasurementSeries, NoiseError> {
    if nt < 8 {
        return Err(NoiseError::TooShort { got: nt, need: 8 });
    }
    if nb == 0 {
        return Err(NoiseError::InvalidParameter("need at least one boundary node".into()));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(NoiseError::InvalidParameter(format!("dt = {dt} must be positive")));
    }

    let mut master = ChaCha8Rng::seed_from_u64(spec.seed);
    let node_seeds: Vec<u64> = (0..nb).map(|_| master.random()).collect();

    let beta = spec.color.power_exponent();
    let mut planner = FftPlanner::new();
    let ifft = planner.plan_fft_inverse(nt);

    let mut out = MeasurementSeries::zeros(nt, nb, dt, SeriesKind::Voltage);
    let mut buf = vec![Complex64::new(0.0, 0.0); nt];
    for j in 0..nb {
        let mut rng = ChaCha8Rng::seed_from_u64(node_seeds[j]);
        for v in buf.iter_mut() {
            *v = Complex64::new(0.0, 0.0);
        }
        let half = nt / 2;
        for k in 1..=half {
            let amp = (k as f64).powf(-0.5 * beta);
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            if 2 * k == nt {
                // Nyquist bin must be real; keep a random sign
                buf[k] = Complex64::new(if phase < std::f64::consts::PI { amp } else { -amp }, 0.0);
            } else {
                buf[k] = Complex64::from_polar(amp, phase);
                buf[nt - k] = buf[k].conj();
            }
        }
        ifft.process(&mut buf);
        let mut sum_sq = 0.0;
        for v in &buf {
            sum_sq += v.re * v.re;
        }
        let rms = (sum_sq / nt as f64).sqrt();
        for n in 0..nt {
            out.values[[n, j]] = buf[n].re / rms;
        }
    }
    Ok(out)
}

/// Perturb a measurement record by exactly the requested relative amount:
/// `V + level |V| n / |n|` in the plain l2 norm over all samples.
pub fn add_noise(v: &MeasurementSeries, spec: &NoiseSpec) -> Result<MeasurementSeries, NoiseError> {
    if !(spec.level >= 0.0 && spec.level.is_finite()) {
        return Err(NoiseError::InvalidParameter(format!(
            "noise level {} must be finite and non-negative",
            spec.level
        )));
    }
    if spec.level == 0.0 {
        return Ok(v.clone());
    }
    let signal_norm = v.norm_l2();
    if signal_norm == 0.0 {
        return Err(NoiseError::ZeroSignal);
    }
    let noise = colored_noise(v.nt(), v.nb(), v.dt, spec)?;
    let scale = spec.level * signal_norm / noise.norm_l2();
    let mut out = v.clone();
    out.values.iter_mut().zip(noise.values.iter()).for_each(|(o, n)| *o += scale * n);
    Ok(out)
}

/// One-sided power spectral density estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdEstimate {
    /// Frequencies `0 ..= 1/(2 dt)` in cycles per unit time.
    pub freqs: Vec<f64>,
    /// Power density per frequency bin.
    pub power: Vec<f64>,
}

impl PsdEstimate {
    /// `sum(power) * df`, which approximates the signal variance.
    pub fn total_power(&self) -> f64 {
        if self.freqs.len() < 2 {
            return 0.0;
        }
        let df = self.freqs[1] - self.freqs[0];
        self.power.iter().sum::<f64>() * df
    }
}

fn tukey_window(n: usize, taper: f64) -> Vec<f64> {
    let mut w = vec![1.0; n];
    let edge = taper / 2.0;
    for i in 0..n {
        let x = i as f64 / (n - 1) as f64;
        if x < edge {
            w[i] = 0.5 * (1.0 + (std::f64::consts::PI * (2.0 * x / taper - 1.0)).cos());
        } else if x > 1.0 - edge {
            w[i] = 0.5 * (1.0 + (std::f64::consts::PI * (2.0 * (1.0 - x) / taper - 1.0)).cos());
        }
    }
    w
}

/// Segment-averaged periodogram with an explicit segment length (50% overlap,
/// mean removal, Tukey window), averaged over segments and boundary nodes.
pub fn psd_estimate_with(
    series: &MeasurementSeries,
    seg_len: usize,
) -> Result<PsdEstimate, NoiseError> {
    let nt = series.nt();
    if seg_len < 8 {
        return Err(NoiseError::InvalidParameter(format!(
            "segment length {seg_len} below the minimum of 8"
        )));
    }
    if nt < seg_len {
        return Err(NoiseError::TooShort { got: nt, need: seg_len });
    }
    let hop = seg_len / 2;
    let n_segments = (nt - seg_len) / hop + 1;
    let nb = series.nb();
    let fs = 1.0 / series.dt;

    let window = tukey_window(seg_len, 0.2);
    let window_power: f64 = window.iter().map(|w| w * w).sum::<f64>() / seg_len as f64;

    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(seg_len);

    let n_bins = seg_len / 2 + 1;
    let mut acc = vec![0.0; n_bins];
    let mut buf = vec![Complex64::new(0.0, 0.0); seg_len];
    for j in 0..nb {
        for s in 0..n_segments {
            let start = s * hop;
            let mut mean = 0.0;
            for i in 0..seg_len {
                mean += series.values[[start + i, j]];
            }
            mean /= seg_len as f64;
            for i in 0..seg_len {
                buf[i] = Complex64::new((series.values[[start + i, j]] - mean) * window[i], 0.0);
            }
            fft.process(&mut buf);
            for (k, a) in acc.iter_mut().enumerate() {
                *a += buf[k].norm_sqr();
            }
        }
    }

    let count = (n_segments * nb) as f64;
    let base = 1.0 / (fs * seg_len as f64 * window_power * count);
    let mut power = vec![0.0; n_bins];
    for k in 0..n_bins {
        // one-sided: double everything except DC and Nyquist
        let fold = if k == 0 || 2 * k == seg_len { 1.0 } else { 2.0 };
        power[k] = fold * base * acc[k];
    }
    let freqs = (0..n_bins).map(|k| k as f64 * fs / seg_len as f64).collect();
    Ok(PsdEstimate { freqs, power })
}

/// [`psd_estimate_with`] with an automatic segment length: the largest power
/// of two at most `max(16, nt/6)`, so short records still get a few segments.
pub fn psd_estimate(series: &MeasurementSeries) -> Result<PsdEstimate, NoiseError> {
    let nt = series.nt();
    if nt < 16 {
        return Err(NoiseError::TooShort { got: nt, need: 16 });
    }
    let target = (nt / 6).max(16);
    let seg_len = 1usize << (usize::BITS - 1 - target.leading_zeros());
    psd_estimate_with(series, seg_len)
}

/// Least-squares slope of `log10(power)` against `log10(freq)` over
/// `[f_lo, f_hi]`; bins with non-positive frequency or power are skipped.
pub fn fit_psd_slope(psd: &PsdEstimate, f_lo: f64, f_hi: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = psd
        .freqs
        .iter()
        .zip(&psd.power)
        .filter(|(f, p)| **f >= f_lo && **f <= f_hi && **f > 0.0 && **p > 0.0)
        .map(|(f, p)| (f.log10(), p.log10()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|(x, _)| x).sum();
    let sy: f64 = pts.iter().map(|(_, y)| y).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| x * x).sum();
    let sxy: f64 = pts.iter().map(|(x, y)| x * y).sum();
    Some((n * sxy - sx * sy) / (n * sxx - sx * sx))
}

/// The central frequency decade of an estimate: geometric midpoint of the
/// resolved band, half a decade to each side.
pub fn central_decade(psd: &PsdEstimate) -> (f64, f64) {
    let f_min = psd.freqs.iter().copied().find(|f| *f > 0.0).unwrap_or(1.0);
    let f_max = *psd.freqs.last().expect("non-empty");
    let mid = 0.5 * (f_min.log10() + f_max.log10());
    (10f64.powf(mid - 0.5), 10f64.powf(mid + 0.5))
}
