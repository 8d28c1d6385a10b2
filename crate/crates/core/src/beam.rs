//! Gaussian beam propagation, knife-edge profiling and caustic (M²) analysis.
//!
//! All lengths are in meters.

use std::f64::consts::{PI, SQRT_2};

use crate::error::{ensure_finite, ensure_positive, Error, Result};
use crate::fitcore::{fit_linear, fit_nonlinear, FitOptions, FitResult, Model};

/// Ratio between the 10%–90% knife-edge span and the beam radius W.
/// Equals `2 * sqrt(2) * erfc^-1(0.2)`.
pub const KNIFE_EDGE_10_90_FACTOR: f64 = 1.2815515655446004;

/// Minimum max/min power ratio for a knife-edge scan to be trusted.
pub const MIN_DYNAMIC_RANGE: f64 = 5.0;

/// Parameters of a Gaussian beam caustic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamGeometry {
    pub waist_radius: f64,
    pub rayleigh_range: f64,
    pub focus_position: f64,
    pub wavelength: f64,
}

impl BeamGeometry {
    pub fn new(waist_radius: f64, rayleigh_range: f64, focus_position: f64, wavelength: f64) -> Result<Self> {
        ensure_positive("waist radius", waist_radius)?;
        ensure_positive("Rayleigh range", rayleigh_range)?;
        ensure_positive("wavelength", wavelength)?;
        if !focus_position.is_finite() {
            return Err(Error::NonFinite("focus position".into()));
        }
        Ok(Self { waist_radius, rayleigh_range, focus_position, wavelength })
    }

    /// Diffraction-limited beam: `zR = π W0² / λ`.
    pub fn ideal(waist_radius: f64, wavelength: f64, focus_position: f64) -> Result<Self> {
        Self::new(waist_radius, PI * waist_radius * waist_radius / wavelength, focus_position, wavelength)
    }

    pub fn divergence(&self) -> f64 {
        self.waist_radius / self.rayleigh_range
    }

    pub fn m_squared(&self) -> f64 {
        PI * self.waist_radius * self.waist_radius / (self.wavelength * self.rayleigh_range)
    }
}

/// Beam radius (1/e² intensity) at axial position `z`.
pub fn width_at(geom: &BeamGeometry, z: f64) -> f64 {
    let v = (z - geom.focus_position) / geom.rayleigh_range;
    geom.waist_radius * (1.0 + v * v).sqrt()
}

/// Intensity at radial distance `rho` and axial position `z` for on-axis
/// focal intensity `i0`.
pub fn intensity(geom: &BeamGeometry, i0: f64, rho: f64, z: f64) -> f64 {
    let w = width_at(geom, z);
    let ratio = geom.waist_radius / w;
    i0 * ratio * ratio * (-2.0 * rho * rho / (w * w)).exp()
}

/// Beam quality factor `π W0² / (λ zR)`.
pub fn m_squared(waist_radius: f64, rayleigh_range: f64, wavelength: f64) -> Result<f64> {
    ensure_positive("waist radius", waist_radius)?;
    ensure_positive("Rayleigh range", rayleigh_range)?;
    ensure_positive("wavelength", wavelength)?;
    Ok(PI * waist_radius * waist_radius / (wavelength * rayleigh_range))
}

/// Focal spot diameter `4 M² λ f / (π D)` behind an objective of focal
/// length `f` illuminated by a beam of diameter `D`.
pub fn spot_size(m2: f64, wavelength: f64, focal_length: f64, beam_diameter: f64) -> Result<f64> {
    ensure_positive("M²", m2)?;
    ensure_positive("wavelength", wavelength)?;
    ensure_positive("focal length", focal_length)?;
    ensure_positive("beam diameter", beam_diameter)?;
    Ok(4.0 * m2 * wavelength * focal_length / (PI * beam_diameter))
}

/// Confocal volume `sqrt(2⁵/π³) (M²)³ λ³ f⁴ / D⁴`.
pub fn confocal_volume(m2: f64, wavelength: f64, focal_length: f64, beam_diameter: f64) -> Result<f64> {
    ensure_positive("M²", m2)?;
    ensure_positive("wavelength", wavelength)?;
    ensure_positive("focal length", focal_length)?;
    ensure_positive("beam diameter", beam_diameter)?;
    let prefactor = (32.0 / PI.powi(3)).sqrt();
    Ok(prefactor * m2.powi(3) * wavelength.powi(3) * focal_length.powi(4) / beam_diameter.powi(4))
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnifeEdgeScan {
    pub z: f64,
    /// `(blade position, transmitted power)`.
    pub samples: Vec<(f64, f64)>,
}

impl KnifeEdgeScan {
    pub const MIN_SAMPLES: usize = 6;

    pub fn new(z: f64, samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.len() < Self::MIN_SAMPLES {
            return Err(Error::InsufficientData { needed: Self::MIN_SAMPLES, got: samples.len() });
        }
        let xs: Vec<f64> = samples.iter().map(|s| s.0).collect();
        let ps: Vec<f64> = samples.iter().map(|s| s.1).collect();
        ensure_finite("blade positions", &xs)?;
        ensure_finite("powers", &ps)?;
        let increasing = xs.windows(2).all(|w| w[1] > w[0]);
        let decreasing = xs.windows(2).all(|w| w[1] < w[0]);
        if !(increasing || decreasing) {
            return Err(Error::InvalidInput("blade positions must be strictly monotone".into()));
        }
        if ps.iter().any(|&p| p < 0.0) {
            return Err(Error::InvalidInput("transmitted power must be non-negative".into()));
        }
        Ok(Self { z, samples })
    }

    pub fn positions(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.0).collect()
    }

    pub fn powers(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.1).collect()
    }
}

/// Transmitted power past a blade edge: `P0/2 · erfc(s·√2·(x − xc)/W)`,
/// parameters `[P0, xc, W]`. `direction` is +1 when the blade uncovers the
/// beam towards negative x (power falls with x) and −1 otherwise.
#[derive(Debug, Clone, Copy)]
pub struct KnifeEdgeModel {
    pub direction: f64,
}

impl Model for KnifeEdgeModel {
    fn arity(&self) -> usize {
        3
    }

    fn eval(&self, p: &[f64], x: f64) -> f64 {
        let u = self.direction * SQRT_2 * (x - p[1]) / p[2];
        0.5 * p[0] * libm::erfc(u)
    }

    fn gradient(&self, p: &[f64], x: f64, grad: &mut [f64]) -> bool {
        let (p0, xc, w) = (p[0], p[1], p[2]);
        let u = self.direction * SQRT_2 * (x - xc) / w;
        let g = (-u * u).exp() / PI.sqrt();
        grad[0] = 0.5 * libm::erfc(u);
        grad[1] = p0 * self.direction * SQRT_2 * g / w;
        grad[2] = p0 * u * g / w;
        true
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnifeEdgeFit {
    pub z: f64,
    pub width: f64,
    pub width_error: f64,
    pub total_power: f64,
    pub total_power_error: f64,
    pub center: f64,
    pub center_error: f64,
    /// +1 for power decreasing with blade position, −1 for increasing.
    pub direction: f64,
    /// max/min power below [`MIN_DYNAMIC_RANGE`].
    pub low_dynamic_range: bool,
    pub fit: FitResult,
}

impl KnifeEdgeFit {
    pub fn predict(&self, x: f64) -> f64 {
        KnifeEdgeModel { direction: self.direction }.eval(&[self.total_power, self.center, self.width], x)
    }
}

/// Position where the piecewise-linear interpolant of `(x, y)` first
/// reaches `level`, scanning in order.
fn crossing(x: &[f64], y: &[f64], level: f64) -> Option<f64> {
    for i in 1..x.len() {
        let (y0, y1) = (y[i - 1], y[i]);
        if (y0 - level) * (y1 - level) <= 0.0 && y0 != y1 {
            let t = (level - y0) / (y1 - y0);
            return Some(x[i - 1] + t * (x[i] - x[i - 1]));
        }
    }
    None
}

pub fn fit_knife_edge(scan: &KnifeEdgeScan) -> Result<KnifeEdgeFit> {
    fit_knife_edge_with(scan, &FitOptions::default())
}

pub fn fit_knife_edge_with(scan: &KnifeEdgeScan, options: &FitOptions) -> Result<KnifeEdgeFit> {
    // Re-validate: the fields are public.
    let scan = KnifeEdgeScan::new(scan.z, scan.samples.clone())?;
    let mut samples = scan.samples.clone();
    samples.sort_by(|a, b| a.0.total_cmp(&b.0));
    let x: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let p: Vec<f64> = samples.iter().map(|s| s.1).collect();

    let p_max = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let p_min = p.iter().copied().fold(f64::INFINITY, f64::min);
    if p_max <= 0.0 {
        return Err(Error::Degenerate("knife-edge scan has no transmitted power".into()));
    }
    let low_dynamic_range = p_min > 0.0 && p_max / p_min < MIN_DYNAMIC_RANGE;

    let trend = fit_linear(&x, &p)?;
    let direction = if trend.slope <= 0.0 { 1.0 } else { -1.0 };

    let half = 0.5 * p_max;
    let xc0 = x
        .iter()
        .zip(&p)
        .min_by(|a, b| (a.1 - half).abs().total_cmp(&(b.1 - half).abs()))
        .map(|(xi, _)| *xi)
        .unwrap_or(x[0]);
    let span = x[x.len() - 1] - x[0];
    let w0 = match (crossing(&x, &p, 0.1 * p_max), crossing(&x, &p, 0.9 * p_max)) {
        (Some(a), Some(b)) if a != b => (a - b).abs() / KNIFE_EDGE_10_90_FACTOR,
        _ => span / 4.0,
    };

    let model = KnifeEdgeModel { direction };
    let fit = fit_nonlinear(&model, &x, &p, None, &[p_max, xc0, w0], options)?;
    let [p0, xc, w] = [fit.parameters[0], fit.parameters[1], fit.parameters[2]];
    // W enters as W and −W with the blade direction flipped; report |W|.
    let (width, direction) = if w < 0.0 { (-w, -direction) } else { (w, direction) };

    Ok(KnifeEdgeFit {
        z: scan.z,
        width,
        width_error: fit.standard_errors[2],
        total_power: p0,
        total_power_error: fit.standard_errors[0],
        center: xc,
        center_error: fit.standard_errors[1],
        direction,
        low_dynamic_range,
        fit,
    })
}

/// Gaussian intensity profile recovered as `−dP/dx` of the fitted edge,
/// sampled at `x_grid`. Integrates to the total power.
pub fn derivative_profile(fit: &KnifeEdgeFit, x_grid: &[f64]) -> Vec<f64> {
    let w = fit.width;
    let peak = fit.total_power * (2.0 / PI).sqrt() / w;
    x_grid
        .iter()
        .map(|&x| {
            let d = x - fit.center;
            peak * (-2.0 * d * d / (w * w)).exp()
        })
        .collect()
}

/// Caustic model `W0·sqrt(1 + ((z − z0)/zR)²)`, parameters `[W0, zR, z0]`.
#[derive(Debug, Clone, Copy, Default)]
pub struct CausticModel;

impl Model for CausticModel {
    fn arity(&self) -> usize {
        3
    }

    fn eval(&self, p: &[f64], z: f64) -> f64 {
        let v = (z - p[2]) / p[1];
        p[0] * (1.0 + v * v).sqrt()
    }

    fn gradient(&self, p: &[f64], z: f64, grad: &mut [f64]) -> bool {
        let (w0, zr, z0) = (p[0], p[1], p[2]);
        let v = (z - z0) / zr;
        let s = (1.0 + v * v).sqrt();
        grad[0] = s;
        grad[1] = -w0 * v * v / (s * zr);
        grad[2] = -w0 * v / (s * zr);
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CausticPoint {
    pub z: f64,
    pub width: f64,
    pub width_error: Option<f64>,
}

impl CausticPoint {
    pub fn new(z: f64, width: f64) -> Self {
        Self { z, width, width_error: None }
    }
}

/// Focal quantities behind an objective, with first-order uncertainties.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FocusedSpot {
    pub focal_length: f64,
    pub beam_diameter: f64,
    /// Spot diameter 2·W_SS.
    pub spot_size: f64,
    pub spot_size_error: f64,
    pub confocal_volume: f64,
    pub confocal_volume_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamQualityReport {
    pub geometry: BeamGeometry,
    pub waist_radius_error: f64,
    pub rayleigh_range_error: f64,
    pub focus_position_error: f64,
    pub divergence: f64,
    pub divergence_error: f64,
    pub m_squared: f64,
    pub m_squared_error: f64,
    /// Point estimate below 1; kept as is, not clamped.
    pub sub_unity_m_squared: bool,
    /// The data do not bracket the waist on both sides.
    pub low_confidence: bool,
    pub fit: FitResult,
}

impl BeamQualityReport {
    /// Spot size and confocal volume for an objective of focal length `f`
    /// and incoming beam diameter `D`.
    pub fn focus(&self, focal_length: f64, beam_diameter: f64) -> Result<FocusedSpot> {
        let m2 = self.m_squared;
        let lambda = self.geometry.wavelength;
        let spot = spot_size(m2, lambda, focal_length, beam_diameter)?;
        let volume = confocal_volume(m2, lambda, focal_length, beam_diameter)?;
        let rel = self.m_squared_error / m2;
        Ok(FocusedSpot {
            focal_length,
            beam_diameter,
            spot_size: spot,
            spot_size_error: spot * rel,
            confocal_volume: volume,
            confocal_volume_error: 3.0 * volume * rel,
        })
    }

    pub fn predict(&self, z: f64) -> f64 {
        width_at(&self.geometry, z)
    }
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 { values[n / 2] } else { 0.5 * (values[n / 2 - 1] + values[n / 2]) })
}

/// True when at least one point on each side of the narrowest sample is
/// wider than `1.2 ×` the minimum width.
pub fn brackets_waist(points: &[CausticPoint]) -> bool {
    let Some(min_pt) = points.iter().min_by(|a, b| a.width.total_cmp(&b.width)) else {
        return false;
    };
    let threshold = 1.2 * min_pt.width;
    let left = points.iter().any(|p| p.z < min_pt.z && p.width > threshold);
    let right = points.iter().any(|p| p.z > min_pt.z && p.width > threshold);
    left && right
}

pub fn fit_caustic(points: &[CausticPoint], wavelength: f64) -> Result<BeamQualityReport> {
    fit_caustic_with(points, wavelength, &FitOptions::default())
}

pub fn fit_caustic_with(points: &[CausticPoint], wavelength: f64, options: &FitOptions) -> Result<BeamQualityReport> {
    ensure_positive("wavelength", wavelength)?;
    if points.len() < 4 {
        return Err(Error::InsufficientData { needed: 4, got: points.len() });
    }
    let z: Vec<f64> = points.iter().map(|p| p.z).collect();
    let w: Vec<f64> = points.iter().map(|p| p.width).collect();
    ensure_finite("caustic positions", &z)?;
    ensure_finite("caustic widths", &w)?;
    if w.iter().any(|&wi| wi <= 0.0) {
        return Err(Error::InvalidInput("beam widths must be positive".into()));
    }
    let weights: Option<Vec<f64>> = points
        .iter()
        .map(|p| p.width_error.filter(|e| e.is_finite() && *e > 0.0).map(|e| 1.0 / (e * e)))
        .collect();

    let (imin, _) = w.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap();
    let w0_guess = w[imin];
    let z0_guess = z[imin];
    let mut slopes: Vec<f64> = points
        .iter()
        .filter(|p| p.width > 1.2 * w0_guess && p.z != z0_guess)
        .map(|p| (p.width * p.width - w0_guess * w0_guess).sqrt() / (p.z - z0_guess).abs())
        .collect();
    let zr_guess = match median(&mut slopes) {
        Some(theta) if theta > 0.0 => w0_guess / theta,
        _ => {
            let (lo, hi) = z.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
            0.5 * (hi - lo).max(f64::MIN_POSITIVE)
        }
    };

    let fit = fit_nonlinear(&CausticModel, &z, &w, weights.as_deref(), &[w0_guess, zr_guess, z0_guess], options)?;
    let w0 = fit.parameters[0].abs();
    let zr = fit.parameters[1].abs();
    let z0 = fit.parameters[2];
    let geometry = BeamGeometry::new(w0, zr, z0, wavelength)?;

    // Sign flips of W0 and zR leave the model unchanged, so derivatives are
    // taken with respect to the signed fitted parameters.
    let (pw, pz) = (fit.parameters[0], fit.parameters[1]);
    let m2 = geometry.m_squared();
    let m2_grad = [2.0 * m2 / pw, -m2 / pz, 0.0];
    let theta = w0 / zr;
    let theta_grad = [theta / pw, -theta / pz, 0.0];

    Ok(BeamQualityReport {
        geometry,
        waist_radius_error: fit.standard_errors[0],
        rayleigh_range_error: fit.standard_errors[1],
        focus_position_error: fit.standard_errors[2],
        divergence: theta,
        divergence_error: fit.propagate(&theta_grad).sqrt(),
        m_squared: m2,
        m_squared_error: fit.propagate(&m2_grad).sqrt(),
        sub_unity_m_squared: m2 < 1.0,
        low_confidence: !brackets_waist(points),
        fit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const UM: f64 = 1e-6;
    const NM: f64 = 1e-9;

    fn reference_geom() -> BeamGeometry {
        BeamGeometry::new(11.9 * UM, 700.0 * UM, 0.0, 532.0 * NM).unwrap()
    }

    #[test]
    fn width_at_focus_and_rayleigh_range() {
        let g = reference_geom();
        assert_eq!(width_at(&g, 0.0), g.waist_radius);
        let expected = SQRT_2 * g.waist_radius;
        assert!((width_at(&g, g.rayleigh_range) - expected).abs() < 1e-18);
        assert!((width_at(&g, -g.rayleigh_range) - expected).abs() < 1e-18);
    }

    #[test]
    fn width_far_from_focus() {
        // 11.9 µm · sqrt(1 + (5000/700)²)
        let w = width_at(&reference_geom(), 5e-3);
        assert!((w - 85.8290e-6).abs() < 1e-10, "{w}");
    }

    #[test]
    fn intensity_profile_points() {
        let g = reference_geom();
        assert_eq!(intensity(&g, 3.0, 0.0, 0.0), 3.0);
        assert!((intensity(&g, 1.0, 0.0, g.rayleigh_range) - 0.5).abs() < 1e-15);
        for z in [-1e-3, 0.0, 2e-4, 4e-3] {
            let on_axis = intensity(&g, 1.0, 0.0, z);
            let edge = intensity(&g, 1.0, width_at(&g, z), z);
            assert!((edge / on_axis - (-2.0f64).exp()).abs() < 1e-14);
        }
    }

    #[test]
    fn m_squared_values() {
        let m2 = m_squared(11.9 * UM, 700.0 * UM, 532.0 * NM).unwrap();
        assert!((m2 - 1.195).abs() < 5e-4, "{m2}");
        let ideal = BeamGeometry::ideal(10.0 * UM, 532.0 * NM, 0.0).unwrap();
        assert!((ideal.m_squared() - 1.0).abs() < 1e-15);
        let doubled = m_squared(23.8 * UM, 700.0 * UM, 532.0 * NM).unwrap();
        assert!((doubled / m2 - 4.0).abs() < 1e-12);
        assert!(m_squared(0.0, 1.0, 1.0).is_err());
        assert!(m_squared(1.0, -1.0, 1.0).is_err());
    }

    #[test]
    fn spot_size_values() {
        let s = spot_size(1.19, 532.0 * NM, 3e-3, 8.05e-3).unwrap();
        assert!((s - 300e-9).abs() < 2e-9, "{s}");
        let unit = spot_size(1.0, 532.0 * NM, 1e-3, 1e-3).unwrap();
        assert!((unit - 677.4e-9).abs() < 0.05e-9, "{unit}");
        let twice = spot_size(2.0, 532.0 * NM, 1e-3, 1e-3).unwrap();
        assert!((twice / unit - 2.0).abs() < 1e-14);
        assert!(spot_size(1.0, 532.0 * NM, 0.0, 1e-3).is_err());
    }

    #[test]
    fn confocal_volume_values() {
        let v = confocal_volume(1.19, 532.0 * NM, 3e-3, 8.0e-3).unwrap();
        // 5e-3 µm³ = 5e-21 m³
        assert!((v / 5e-21 - 1.0).abs() < 0.05, "{v}");
        let unit = confocal_volume(1.0, 500.0 * NM, 1e-3, 1e-3).unwrap();
        let expected = (32.0 / PI.powi(3)).sqrt() * 1.25e-19;
        assert!((unit - expected).abs() < 1e-30);
        assert!((unit - 1.26987e-19).abs() < 1e-23, "{unit}");
        let wide = confocal_volume(1.19, 532.0 * NM, 3e-3, 16.0e-3).unwrap();
        assert!((v / wide - 16.0).abs() < 1e-12);
    }

    #[test]
    fn derivative_profile_shape() {
        let x: Vec<f64> = (0..200).map(|i| -50e-6 + i as f64 * 0.5e-6).collect();
        let samples: Vec<(f64, f64)> =
            x.iter().map(|&xi| (xi, 0.5 * 2e-3 * libm::erfc(SQRT_2 * (xi - 3e-6) / 10e-6))).collect();
        let fit = fit_knife_edge(&KnifeEdgeScan::new(0.0, samples).unwrap()).unwrap();
        let profile = derivative_profile(&fit, &[fit.center, fit.center + fit.width, fit.center - fit.width]);
        assert!((profile[1] / profile[0] - (-2.0f64).exp()).abs() < 1e-12);
        assert!((profile[2] / profile[0] - (-2.0f64).exp()).abs() < 1e-12);
        let grid: Vec<f64> = (0..2001).map(|i| fit.center - 50e-6 + i as f64 * 0.05e-6).collect();
        let prof = derivative_profile(&fit, &grid);
        let argmax = prof.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert!((grid[argmax] - fit.center).abs() < 1e-12);
    }

    #[test]
    fn knife_edge_scan_validation() {
        let ok: Vec<(f64, f64)> = (0..6).map(|i| (i as f64, 1.0)).collect();
        assert!(KnifeEdgeScan::new(0.0, ok.clone()).is_ok());
        assert!(matches!(KnifeEdgeScan::new(0.0, ok[..5].to_vec()), Err(Error::InsufficientData { .. })));
        let mut bad = ok.clone();
        bad[3].0 = 1.5;
        assert!(KnifeEdgeScan::new(0.0, bad).is_err());
        let mut negative = ok;
        negative[2].1 = -1.0;
        assert!(KnifeEdgeScan::new(0.0, negative).is_err());
    }

    #[test]
    fn caustic_requires_four_points() {
        let pts: Vec<CausticPoint> = (0..3).map(|i| CausticPoint::new(i as f64, 1.0 + i as f64)).collect();
        assert!(matches!(fit_caustic(&pts, 532e-9), Err(Error::InsufficientData { needed: 4, got: 3 })));
    }

    #[test]
    fn caustic_one_sided_is_flagged() {
        let g = reference_geom();
        let pts: Vec<CausticPoint> =
            (0..8).map(|i| 0.2e-3 * i as f64).map(|z| CausticPoint::new(z, width_at(&g, z))).collect();
        let report = fit_caustic(&pts, g.wavelength).unwrap();
        assert!(report.low_confidence);
    }
}
