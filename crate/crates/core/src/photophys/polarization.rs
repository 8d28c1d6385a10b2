use std::f64::consts::PI;

use crate::error::{ensure_finite, Error, Result};
use crate::fitcore::{fit_nonlinear, FitOptions, FitResult, Model};

/// Fluorescence versus half-wave-plate angle (degrees).
#[derive(Debug, Clone, PartialEq)]
pub struct PolarizationSweep {
    /// `(waveplate angle °, counts/s)`, angles wrapped into `[0, 360)`.
    pub points: Vec<(f64, f64)>,
}

impl PolarizationSweep {
    pub const MIN_POINTS: usize = 8;
    /// Minimum angular coverage of the sweep, degrees.
    pub const MIN_COVERAGE: f64 = 90.0;

    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.len() < Self::MIN_POINTS {
            return Err(Error::InsufficientData { needed: Self::MIN_POINTS, got: points.len() });
        }
        let angles: Vec<f64> = points.iter().map(|p| p.0).collect();
        let counts: Vec<f64> = points.iter().map(|p| p.1).collect();
        ensure_finite("waveplate angles", &angles)?;
        ensure_finite("polarization counts", &counts)?;
        let points: Vec<(f64, f64)> = points.into_iter().map(|(a, c)| (a.rem_euclid(360.0), c)).collect();
        let sweep = Self { points };
        if sweep.coverage() < Self::MIN_COVERAGE {
            return Err(Error::InvalidInput(format!(
                "sweep covers {:.1}° of waveplate angle, need at least {}°",
                sweep.coverage(),
                Self::MIN_COVERAGE
            )));
        }
        Ok(sweep)
    }

    /// Angular extent of the sweep: 360° minus the largest gap between
    /// consecutive angles on the circle.
    pub fn coverage(&self) -> f64 {
        let mut angles: Vec<f64> = self.points.iter().map(|p| p.0).collect();
        angles.sort_by(f64::total_cmp);
        angles.dedup();
        if angles.len() < 2 {
            return 0.0;
        }
        let mut max_gap = angles[0] + 360.0 - angles[angles.len() - 1];
        for w in angles.windows(2) {
            max_gap = max_gap.max(w[1] - w[0]);
        }
        360.0 - max_gap
    }
}

/// `C0 + A·cos(4α′) + B·sin(4α′)` with α′ in degrees, parameters `[C0, A, B]`.
/// Linear in its parameters, it is the Cartesian form of
/// `C0 + C1·cos(4(α′ − α′_max))`.
#[derive(Debug, Clone, Copy, Default)]
struct HarmonicModel;

impl Model for HarmonicModel {
    fn arity(&self) -> usize {
        3
    }

    fn eval(&self, p: &[f64], angle_deg: f64) -> f64 {
        let phi = 4.0 * angle_deg.to_radians();
        p[0] + p[1] * phi.cos() + p[2] * phi.sin()
    }

    fn gradient(&self, _p: &[f64], angle_deg: f64, grad: &mut [f64]) -> bool {
        let phi = 4.0 * angle_deg.to_radians();
        grad[0] = 1.0;
        grad[1] = phi.cos();
        grad[2] = phi.sin();
        true
    }
}

/// Photoluminescence at waveplate angle `angle_deg`.
pub fn polarization_counts(offset: f64, amplitude: f64, max_angle_deg: f64, angle_deg: f64) -> f64 {
    offset + amplitude * (4.0 * (angle_deg - max_angle_deg).to_radians()).cos()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolarizationFit {
    pub offset: f64,
    pub offset_error: f64,
    pub amplitude: f64,
    pub amplitude_error: f64,
    /// Waveplate angle of maximum emission, principal value in `[0, 90)`.
    pub max_angle: f64,
    pub max_angle_error: f64,
    /// `amplitude / offset`.
    pub visibility: f64,
    pub visibility_error: f64,
    /// Amplitude consistent with zero; `max_angle` carries no information.
    pub flat_response: bool,
    pub fit: FitResult,
}

impl PolarizationFit {
    pub fn predict(&self, angle_deg: f64) -> f64 {
        polarization_counts(self.offset, self.amplitude, self.max_angle, angle_deg)
    }
}

pub fn fit_polarization(sweep: &PolarizationSweep) -> Result<PolarizationFit> {
    fit_polarization_with(sweep, &FitOptions::default())
}

pub fn fit_polarization_with(sweep: &PolarizationSweep, options: &FitOptions) -> Result<PolarizationFit> {
    let sweep = PolarizationSweep::new(sweep.points.clone())?;
    let angles: Vec<f64> = sweep.points.iter().map(|p| p.0).collect();
    let counts: Vec<f64> = sweep.points.iter().map(|p| p.1).collect();
    let mean = counts.iter().sum::<f64>() / counts.len() as f64;

    let fit = fit_nonlinear(&HarmonicModel, &angles, &counts, None, &[mean, 0.0, 0.0], options)?;
    let (c0, a, b) = (fit.parameters[0], fit.parameters[1], fit.parameters[2]);
    let c1 = a.hypot(b);
    if c0 <= 0.0 {
        return Err(Error::InvalidInput(format!("fitted offset {c0} is not positive")));
    }

    // α′_max = atan2(B, A)/4, converted to degrees.
    let phi = b.atan2(a);
    let max_angle = (phi.to_degrees() / 4.0).rem_euclid(90.0);
    let deg = 180.0 / PI / 4.0;
    let (amp_grad, angle_grad, vis_grad) = if c1 > 0.0 {
        let c1sq = c1 * c1;
        (
            [0.0, a / c1, b / c1],
            [0.0, -b / c1sq * deg, a / c1sq * deg],
            [-c1 / (c0 * c0), a / (c1 * c0), b / (c1 * c0)],
        )
    } else {
        ([0.0; 3], [f64::NAN; 3], [0.0; 3])
    };
    let amplitude_error = fit.propagate(&amp_grad).sqrt();
    let max_angle_error = if c1 > 0.0 { fit.propagate(&angle_grad).sqrt() } else { f64::INFINITY };
    let flat_response = c1 <= 1e-9 * c0.abs() || c1 <= 2.0 * amplitude_error;

    Ok(PolarizationFit {
        offset: c0,
        offset_error: fit.standard_errors[0],
        amplitude: c1,
        amplitude_error,
        max_angle,
        max_angle_error,
        visibility: c1 / c0,
        visibility_error: fit.propagate(&vis_grad).sqrt(),
        flat_response,
        fit,
    })
}
