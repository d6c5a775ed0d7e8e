//! Closed-form sensor physics: the film coefficient kappa, plane-wave
//! reflection off the impedance boundary, the directivity pattern of the
//! voltage measurement, its critical angle, and an exact three-layer
//! transfer-matrix reflection coefficient that serves as an independent
//! oracle for the effective boundary condition at normal incidence.

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SensorError {
    #[error("kappa denominator {0:.3e} is singular")]
    SingularKappa(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Mechanical and piezoelectric description of the sensing film.
#[derive(Debug, Clone, Copy)]
pub struct FilmProperties {
    /// Poisson's ratio, in [0, 0.5).
    pub nu: f64,
    /// Ratio of the transverse to normal piezoelectric coefficients.
    pub d_ratio: f64,
    pub c_p: f64,
    pub rho_p: f64,
    /// Film thickness.
    pub epsilon: f64,
}

impl FilmProperties {
    pub fn new(nu: f64, d_ratio: f64, c_p: f64, rho_p: f64, epsilon: f64) -> Result<Self, SensorError> {
        if !(0.0..0.5).contains(&nu) {
            return Err(SensorError::InvalidParameter(format!(
                "Poisson's ratio {nu} must lie in [0, 0.5)"
            )));
        }
        if !(epsilon > 0.0) {
            return Err(SensorError::InvalidParameter(format!(
                "film thickness {epsilon} must be positive"
            )));
        }
        if !(c_p > 0.0 && rho_p > 0.0) {
            return Err(SensorError::InvalidParameter(
                "film speed and density must be positive".into(),
            ));
        }
        Ok(Self { nu, d_ratio, c_p, rho_p, epsilon })
    }

    pub fn kappa(&self) -> Result<f64, SensorError> {
        kappa(self.nu, self.d_ratio)
    }
}

/// Unitless film coefficient
/// `kappa = (1 - 2 nu)(1 - d_ratio) / (1 - nu (1 - 2 d_ratio))`.
///
/// `kappa = 0` would mean perfect pressure-to-voltage transduction, which
/// requires an incompressible film (`nu = 0.5`).
pub fn kappa(nu: f64, d_ratio: f64) -> Result<f64, SensorError> {
    let denom = 1.0 - nu * (1.0 - 2.0 * d_ratio);
    if denom.abs() < 1e-12 {
        return Err(SensorError::SingularKappa(denom));
    }
    Ok((1.0 - 2.0 * nu) * (1.0 - d_ratio) / denom)
}

/// Plane-wave reflection coefficient of the impedance boundary,
/// `R = (cos theta - alpha) / (cos theta + alpha)` with
/// `alpha = rho c / (rho_b c_b)`.
pub fn reflection_coefficient(theta: f64, alpha: f64) -> f64 {
    let c = theta.cos();
    (c - alpha) / (c + alpha)
}

/// Directivity of the voltage measurement for a unit incident plane wave:
/// `V / p_inc = (1 + R(theta)) (1 - kappa (c_p/c)^2 sin^2 theta)`.
pub fn directivity(theta: f64, c: f64, c_p: f64, kappa: f64, alpha: f64) -> f64 {
    let r = reflection_coefficient(theta, alpha);
    let s = theta.sin();
    (1.0 + r) * (1.0 - kappa * (c_p * c_p) / (c * c) * s * s)
}

/// Decibel conversion for directivity plots, floored at -60 dB so the zero at
/// the critical angle stays plottable.
pub fn directivity_db(linear: f64) -> f64 {
    let db = 20.0 * linear.abs().log10();
    db.max(-60.0)
}

/// Incidence angle of vanishing sensitivity,
/// `theta_cr = arcsin(c / (c_p sqrt(kappa)))`, which exists whenever the
/// arcsine argument reaches 1 (i.e. `kappa >= c^2 / c_p^2`).
pub fn critical_angle(c: f64, c_p: f64, kappa: f64) -> Option<f64> {
    if !(c > 0.0 && c_p > 0.0 && kappa > 0.0) {
        return None;
    }
    let x = c / (c_p * kappa.sqrt());
    if x <= 1.0 {
        Some(x.asin())
    } else {
        None
    }
}

/// Exact reflection coefficient of the fluid / film / backing stack at normal
/// incidence: a plane wave in the fluid (impedance `z`) hits a film of
/// thickness `epsilon`, impedance `z_p` and speed `c_p`, backed by an
/// outgoing half-space of impedance `z_b`. Transmission-line input impedance
/// with the `exp(-i omega t)` convention:
///
/// ```text
/// Z_in = Z_p (Z_b cos k_p e - i Z_p sin k_p e) / (Z_p cos k_p e - i Z_b sin k_p e)
/// R = (Z_in - Z) / (Z_in + Z),    k_p = omega / c_p
/// ```
///
/// At `epsilon = 0` this is the two-media Fresnel coefficient
/// `(Z_b - Z)/(Z_b + Z)`, which equals the effective-boundary-condition
/// prediction at normal incidence; the gap for `epsilon > 0` is first order
/// in the film phase `omega epsilon / c_p`.
pub fn layered_reflection_exact(
    omega: f64,
    epsilon: f64,
    z: f64,
    z_p: f64,
    z_b: f64,
    c_p: f64,
) -> Result<Complex64, SensorError> {
    for (name, v) in [("z", z), ("z_p", z_p), ("z_b", z_b), ("c_p", c_p)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(SensorError::InvalidParameter(format!(
                "{name} = {v} must be finite and positive"
            )));
        }
    }
    if epsilon < 0.0 {
        return Err(SensorError::InvalidParameter(format!(
            "epsilon = {epsilon} must be non-negative"
        )));
    }
    let phase = omega * epsilon / c_p;
    let (sin, cos) = phase.sin_cos();
    let i = Complex64::new(0.0, 1.0);
    let z_in = z_p * (z_b * cos - i * z_p * sin) / (z_p * cos - i * z_b * sin);
    Ok((z_in - z) / (z_in + z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn kappa_incompressible_film_vanishes() {
        // nu = 0.5 zeroes the numerator for any transduction ratio
        for d_ratio in [-0.3, 0.0, 0.3] {
            assert_eq!(kappa(0.5, d_ratio).unwrap(), 0.0);
        }
    }

    #[test]
    fn film_properties_validation_and_kappa() {
        let film = FilmProperties::new(0.35, -0.2, 2000.0, 1800.0, 3e-5).unwrap();
        assert_eq!(film.kappa().unwrap(), kappa(0.35, -0.2).unwrap());
        assert!(FilmProperties::new(0.5, -0.2, 2000.0, 1800.0, 3e-5).is_err());
        assert!(FilmProperties::new(0.3, -0.2, 2000.0, 1800.0, 0.0).is_err());
        assert!(FilmProperties::new(0.3, -0.2, -1.0, 1800.0, 3e-5).is_err());
    }

    #[test]
    fn kappa_reference_values() {
        assert_eq!(kappa(0.0, 0.0).unwrap(), 1.0);
        let k = kappa(0.4, -0.5).unwrap();
        assert!((k - 1.5).abs() <= 1e-12, "kappa(0.4, -0.5) = {k}");
    }

    #[test]
    fn kappa_singular_denominator() {
        // denominator 1 - nu (1 - 2 r) = 0 at nu = 0.4, r = -0.75
        assert!(matches!(kappa(0.4, -0.75), Err(SensorError::SingularKappa(_))));
    }

    #[test]
    fn kappa_over_pvdf_parameter_box() {
        // nu in [0.2, 0.4], d in [-35, -30], d_perp in [3, 15] pC/N,
        // so d_ratio = d_perp / d in [-0.5, 3/-35]
        let mut max = f64::NEG_INFINITY;
        let mut min = f64::INFINITY;
        let mut arg_max = (0.0, 0.0);
        let steps = 80;
        for i in 0..=steps {
            let nu = 0.2 + 0.2 * i as f64 / steps as f64;
            for j in 0..=steps {
                let d = -35.0 + 5.0 * j as f64 / steps as f64;
                for k in 0..=steps {
                    let d_perp = 3.0 + 12.0 * k as f64 / steps as f64;
                    let v = kappa(nu, d_perp / d).unwrap();
                    if v > max {
                        max = v;
                        arg_max = (nu, d_perp / d);
                    }
                    min = min.min(v);
                }
            }
        }
        // the maximum 1.5 sits on the whole d_ratio = -1/2 edge (at that
        // ratio the nu dependence cancels), reached at kappa(0.4, -0.5) too
        assert!((max - 1.5).abs() <= 1e-9, "box maximum {max}");
        assert!((arg_max.1 + 0.5).abs() <= 1e-9, "maximizing ratio {}", arg_max.1);
        // the sweep floors near 0.41, noticeably above the quoted 0.3
        assert!((0.40..0.42).contains(&min), "box minimum {min}");
    }

    #[test]
    fn reflection_reference_values() {
        assert_eq!(reflection_coefficient(0.0, 1.0), 0.0);
        let grazing = reflection_coefficient(std::f64::consts::FRAC_PI_2, 0.75);
        assert!((grazing + 1.0).abs() <= 1e-12);
        // water onto the backing stack: alpha = 1000*1500 / (2000*1000)
        let r = reflection_coefficient(0.0, 0.75);
        assert!((r - 1.0 / 7.0).abs() <= 1e-12, "R(0, 0.75) = {r}");
    }

    proptest! {
        #[test]
        fn reflection_magnitude_bounded(theta in 0.0..std::f64::consts::FRAC_PI_2, alpha in 1e-3..1e3) {
            let r = reflection_coefficient(theta, alpha);
            prop_assert!(r.abs() <= 1.0 + 1e-12);
        }

        #[test]
        fn layered_energy_bound(
            log_omega in -2.0..8.0f64,
            epsilon in 0.0..1e-3f64,
            z in 1e5..1e7f64,
            z_p in 1e5..1e7f64,
            z_b in 1e5..1e7f64,
        ) {
            let r = layered_reflection_exact(10f64.powf(log_omega), epsilon, z, z_p, z_b, 2000.0).unwrap();
            prop_assert!(r.norm_sqr() <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn directivity_reference_values() {
        // theta = 0: (1 + (1-a)/(1+a)) = 2/(1+a)
        let v = directivity(0.0, 1500.0, 2000.0, 0.9, 0.75);
        assert!((v - 8.0 / 7.0).abs() <= 1e-12, "normal-incidence directivity {v}");
        // rigid-backing, pressure-doubling limit
        for theta in [0.0, 0.5, 1.2, 1.5] {
            let v = directivity(theta, 1500.0, 2000.0, 0.0, 1e-12);
            assert!((v - 2.0).abs() <= 1e-9, "doubling limit at {theta}: {v}");
        }
    }

    #[test]
    fn directivity_vanishes_at_critical_angle() {
        let (c, c_p, kap) = (1500.0, 2000.0, 0.9);
        let theta = critical_angle(c, c_p, kap).expect("exists for kappa > c^2/c_p^2");
        let expect = (0.75f64 / kap.sqrt()).asin();
        assert!((theta - expect).abs() <= 1e-15);
        let v = directivity(theta, c, c_p, kap, 0.75);
        assert!(v.abs() <= 1e-10, "directivity at critical angle: {v}");
        assert_eq!(directivity_db(v), -60.0);
    }

    #[test]
    fn critical_angle_existence() {
        // threshold c^2/c_p^2 = 0.5625 for these speeds
        assert!(critical_angle(1500.0, 2000.0, 0.5).is_none());
        let th = critical_angle(1500.0, 2000.0, 1.0).unwrap();
        assert!((th.to_degrees() - 48.59).abs() <= 0.01, "theta_cr = {}", th.to_degrees());
        // equality case: sin theta_cr = 1
        let th = critical_angle(1500.0, 1500.0, 1.0).unwrap();
        assert!((th - std::f64::consts::FRAC_PI_2).abs() <= 1e-12);
    }

    #[test]
    fn layered_oracle_reference_cases() {
        // homogeneous medium: no reflection at any frequency or thickness
        for omega in [1e3, 1e6] {
            for eps in [0.0, 1e-5, 1e-4] {
                let r = layered_reflection_exact(omega, eps, 2e6, 2e6, 2e6, 2000.0).unwrap();
                assert!(r.norm() <= 1e-14);
            }
        }
        // zero thickness: two-media Fresnel coefficient
        let (z, z_b) = (1.5e6, 2.0e6);
        let r = layered_reflection_exact(1e6, 0.0, z, 3.6e6, z_b, 2000.0).unwrap();
        let fresnel = (z_b - z) / (z_b + z);
        assert!((r.re - fresnel).abs() <= 1e-14 && r.im.abs() <= 1e-14);
    }

    #[test]
    fn layered_gap_to_effective_bc_is_first_order() {
        // |R_exact(omega, eps) - R_eff| halves when eps halves
        let (z, z_p, z_b, c_p) = (1.5e6, 3.6e6, 2.0e6, 2000.0);
        let r_eff = (z_b - z) / (z_b + z);
        let omega = 2.0 * std::f64::consts::PI * 1e6;
        // start at omega eps / c_p = 1e-1
        let mut eps = 0.1 * c_p / omega;
        let mut prev_gap = f64::INFINITY;
        while omega * eps / c_p >= 1e-3 {
            let r = layered_reflection_exact(omega, eps, z, z_p, z_b, c_p).unwrap();
            let gap = (r - Complex64::new(r_eff, 0.0)).norm();
            if prev_gap.is_finite() {
                let order = (prev_gap / gap).log2();
                assert!(
                    (order - 1.0).abs() <= 0.15,
                    "halving order {order} at omega eps / c_p = {:.2e}",
                    omega * eps / c_p
                );
            }
            prev_gap = gap;
            eps *= 0.5;
        }
    }
}
