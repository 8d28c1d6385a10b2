//! Analyzer subcommands: CSV in, report out.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use nvlaser::beam::{self, CausticPoint, KnifeEdgeScan};
use nvlaser::fitcore::FitOptions;
use nvlaser::odmr::{self, OdmrSweep};
use nvlaser::photonstats::{self, TimestampSeries};
use nvlaser::photophys::{self, PolarizationSweep, SaturationCurve, Spectrum, SpectrumOptions};
use nvlaser::pulse::{self, PulseTrace};

use crate::input::{self, parse_csv_bytes, Schema, Table};
use crate::report::{digest, AnalysisReport};
use crate::{Curve, OutputArgs, Outcome};

const UM: f64 = 1e-6;
const UW: f64 = 1e-6;
const MHZ: f64 = 1e6;

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    /// Maximum Levenberg–Marquardt iterations.
    #[arg(long, default_value_t = 200)]
    pub max_iter: usize,
    /// Relative step tolerance for convergence.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
}

impl FitArgs {
    fn options(&self) -> FitOptions {
        FitOptions { max_iter: self.max_iter, tol: self.tol, ..FitOptions::default() }
    }

    fn record(&self, report: &mut AnalysisReport) {
        report.setting("max_iter", self.max_iter as f64);
        report.setting("tol", self.tol);
    }
}

/// Reads and parses every file, returning the tables and the combined digest.
fn load(paths: &[&Path], schema: &Schema) -> Result<(Vec<Table>, String)> {
    let mut raw = Vec::with_capacity(paths.len());
    for p in paths {
        raw.push(std::fs::read(p).with_context(|| format!("cannot read {}", p.display()))?);
    }
    let tables = paths
        .iter()
        .zip(&raw)
        .map(|(p, bytes)| parse_csv_bytes(bytes, &p.display().to_string(), schema))
        .collect::<Result<Vec<_>>>()?;
    let slices: Vec<&[u8]> = raw.iter().map(Vec::as_slice).collect();
    Ok((tables, digest(&slices)))
}

fn start(subcommand: &str, paths: &[&Path], schema: &Schema) -> Result<(Vec<Table>, AnalysisReport)> {
    let (tables, digest) = load(paths, schema)?;
    let mut report = AnalysisReport::new(subcommand, digest);
    for t in &tables {
        for w in &t.warnings {
            report.warn(w.clone());
        }
    }
    Ok((tables, report))
}

fn pairs(x: &[f64], y: &[f64], sx: f64, sy: f64) -> Vec<(f64, f64)> {
    x.iter().zip(y).map(|(a, b)| (a * sx, b * sy)).collect()
}

#[derive(Debug, Clone, Args)]
pub struct KnifeEdgeArgs {
    /// One or more scans with columns x_um, power_uW and optionally z_um.
    #[arg(required = true)]
    pub files: Vec<PathBuf>,
    /// Axial position of each file without a z_um column, one per file.
    #[arg(long = "z-um", allow_negative_numbers = true)]
    pub z_um: Vec<f64>,
    /// Wavelength; with four or more scan positions a caustic is also fitted.
    #[arg(long)]
    pub lambda_nm: Option<f64>,
    #[command(flatten)]
    pub fit: FitArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

pub fn knife_edge(args: &KnifeEdgeArgs) -> Result<Outcome> {
    let paths: Vec<&Path> = args.files.iter().map(PathBuf::as_path).collect();
    let (tables, mut report) = start("knife-edge", &paths, &input::KNIFE_EDGE)?;
    args.fit.record(&mut report);

    let untagged = tables.iter().filter(|t| !t.has("z_um")).count();
    if untagged > 0 && !args.z_um.is_empty() && args.z_um.len() != tables.len() {
        bail!("give one --z-um per input file ({} files, {} values)", tables.len(), args.z_um.len());
    }
    let mut scans: Vec<(f64, Vec<(f64, f64)>)> = Vec::new();
    for (i, t) in tables.iter().enumerate() {
        let (x, p) = (t.column("x_um"), t.column("power_uW"));
        if t.has("z_um") {
            for (row, &z) in t.column("z_um").iter().enumerate() {
                let sample = (x[row] * UM, p[row] * UW);
                match scans.iter_mut().find(|s| s.0 == z * UM) {
                    Some(s) => s.1.push(sample),
                    None => scans.push((z * UM, vec![sample])),
                }
            }
        } else {
            let z = args.z_um.get(i).copied().unwrap_or(0.0);
            scans.push((z * UM, pairs(x, p, UM, UW)));
        }
    }
    if untagged > 0 && args.z_um.is_empty() && scans.len() > 1 {
        report.warn("no z position given; scans without z_um assumed at z = 0");
    }

    let options = args.fit.options();
    let mut converged = true;
    let mut caustic_points = Vec::new();
    let mut curve = Curve::default();
    for (i, (z, samples)) in scans.into_iter().enumerate() {
        let scan = KnifeEdgeScan::new(z, samples).with_context(|| format!("scan at z = {} um", z / UM))?;
        let fit = beam::fit_knife_edge_with(&scan, &options)?;
        let key = |name: &str| format!("scan_{i:02}.{name}");
        report.value(key("z_um"), z / UM, "um");
        report.param(key("width_um"), fit.width / UM, fit.width_error / UM, "um");
        report.param(key("center_um"), fit.center / UM, fit.center_error / UM, "um");
        report.param(key("total_power_uW"), fit.total_power / UW, fit.total_power_error / UW, "uW");
        report.value(key("direction"), fit.direction, "");
        report.flag(key("low_dynamic_range"), fit.low_dynamic_range);
        report.flag(key("converged"), fit.fit.converged);
        if fit.low_dynamic_range {
            report.warn(format!("scan at z = {} um: power range below {}:1", z / UM, beam::MIN_DYNAMIC_RANGE));
        }
        converged &= fit.fit.converged;
        for &(x, p) in &scan.samples {
            curve.push(x / UM, p / UW, fit.predict(x) / UW);
        }
        caustic_points.push(CausticPoint { z, width: fit.width, width_error: Some(fit.width_error) });
    }

    if let Some(lambda_nm) = args.lambda_nm {
        report.setting("lambda_nm", lambda_nm);
        if caustic_points.len() >= 4 {
            let q = beam::fit_caustic_with(&caustic_points, lambda_nm * 1e-9, &options)?;
            caustic_report(&mut report, "caustic.", &q);
            converged &= q.fit.converged;
            curve = Curve::default();
            for p in &caustic_points {
                curve.push(p.z / UM, p.width / UM, q.predict(p.z) / UM);
            }
        } else {
            report.warn(format!("caustic needs at least 4 scan positions, got {}", caustic_points.len()));
        }
    }
    Ok(Outcome { report, curve: Some(curve), converged })
}

fn caustic_report(report: &mut AnalysisReport, prefix: &str, q: &beam::BeamQualityReport) {
    let g = &q.geometry;
    report.param(format!("{prefix}waist_radius_um"), g.waist_radius / UM, q.waist_radius_error / UM, "um");
    report.param(format!("{prefix}rayleigh_range_um"), g.rayleigh_range / UM, q.rayleigh_range_error / UM, "um");
    report.param(format!("{prefix}focus_position_um"), g.focus_position / UM, q.focus_position_error / UM, "um");
    report.param(format!("{prefix}divergence_mrad"), q.divergence * 1e3, q.divergence_error * 1e3, "mrad");
    report.param(format!("{prefix}m_squared"), q.m_squared, q.m_squared_error, "");
    report.flag(format!("{prefix}sub_unity_m_squared"), q.sub_unity_m_squared);
    report.flag(format!("{prefix}low_confidence"), q.low_confidence);
    report.flag(format!("{prefix}converged"), q.fit.converged);
    if q.sub_unity_m_squared {
        report.warn("fitted M² below 1");
    }
    if q.low_confidence {
        report.warn("caustic data do not bracket the waist");
    }
}

#[derive(Debug, Clone, Args)]
pub struct CausticArgs {
    /// Columns z_um, w_um and optionally w_err_um.
    pub file: PathBuf,
    #[arg(long)]
    pub lambda_nm: f64,
    /// Objective focal length, for the focused spot size and confocal volume.
    #[arg(long, requires = "beam_diameter_mm")]
    pub focal_length_mm: Option<f64>,
    /// Beam diameter at the objective.
    #[arg(long, requires = "focal_length_mm")]
    pub beam_diameter_mm: Option<f64>,
    #[command(flatten)]
    pub fit: FitArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

pub fn caustic(args: &CausticArgs) -> Result<Outcome> {
    let (tables, mut report) = start("caustic", &[&args.file], &input::CAUSTIC)?;
    let t = &tables[0];
    args.fit.record(&mut report);
    report.setting("lambda_nm", args.lambda_nm);
    let errors = t.has("w_err_um").then(|| t.column("w_err_um"));
    let points: Vec<CausticPoint> = t
        .column("z_um")
        .iter()
        .zip(t.column("w_um"))
        .enumerate()
        .map(|(i, (&z, &w))| CausticPoint { z: z * UM, width: w * UM, width_error: errors.map(|e| e[i] * UM) })
        .collect();
    let q = beam::fit_caustic_with(&points, args.lambda_nm * 1e-9, &args.fit.options())?;
    caustic_report(&mut report, "", &q);
    if let (Some(f), Some(d)) = (args.focal_length_mm, args.beam_diameter_mm) {
        report.setting("focal_length_mm", f);
        report.setting("beam_diameter_mm", d);
        let spot = q.focus(f * 1e-3, d * 1e-3)?;
        report.param("spot_size_um", spot.spot_size / UM, spot.spot_size_error / UM, "um");
        report.param("confocal_volume_um3", spot.confocal_volume * 1e18, spot.confocal_volume_error * 1e18, "um^3");
    }
    let mut curve = Curve::default();
    for p in &points {
        curve.push(p.z / UM, p.width / UM, q.predict(p.z) / UM);
    }
    Ok(Outcome { converged: q.fit.converged, report, curve: Some(curve) })
}

#[derive(Debug, Clone, Args)]
pub struct G2Args {
    /// Channel A timestamps (column t_ns).
    pub channel_a: PathBuf,
    /// Channel B timestamps (column t_ns).
    pub channel_b: PathBuf,
    /// Half-width of the correlation window. Widened by half a bin when
    /// needed so the bin count is odd.
    #[arg(long, default_value_t = 150.2)]
    pub window_ns: f64,
    #[arg(long, default_value_t = 0.4)]
    pub bin_ns: f64,
    /// Odd number of central bins averaged for g2(0).
    #[arg(long, default_value_t = 1)]
    pub smoothing_bins: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

pub fn g2(args: &G2Args) -> Result<Outcome> {
    let (tables, mut report) = start("g2", &[&args.channel_a, &args.channel_b], &input::TIMESTAMPS)?;
    let mut window = args.window_ns;
    if !(window > 0.0 && args.bin_ns > 0.0) {
        bail!("window and bin width must be positive");
    }
    let ratio = 2.0 * window / args.bin_ns;
    let n = ratio.round();
    if (ratio - n).abs() <= 1e-9 * ratio.max(1.0) && (n as u64).is_multiple_of(2) {
        window += 0.5 * args.bin_ns;
        report.warn(format!(
            "window {} ns gives an even bin count; widened to {} ns so one bin is centred on zero delay",
            args.window_ns, window
        ));
    }
    report.setting("window_ns", window);
    report.setting("bin_ns", args.bin_ns);
    report.setting("smoothing_bins", args.smoothing_bins as f64);

    let a = TimestampSeries::from_times(0, tables[0].column("t_ns").to_vec())?;
    let b = TimestampSeries::from_times(1, tables[1].column("t_ns").to_vec())?;
    let hist = photonstats::correlate(&a, &b, window, args.bin_ns)?;
    let g0 = photonstats::g2_zero(&hist, args.smoothing_bins)?;
    let c = hist.center_index();
    let half = args.smoothing_bins / 2;
    let central: u64 = hist.raw_counts[c - half..=c + half].iter().sum();
    let g0_err = (central as f64).sqrt() / (hist.normalization_factor * args.smoothing_bins as f64);
    let est = photonstats::emitter_count(g0.max(0.0))?;

    report.param("g2_zero", g0, g0_err, "");
    report.value("n_emitters", est.n_emitters, "");
    report.value("events_a", a.len() as f64, "");
    report.value("events_b", b.len() as f64, "");
    report.value("normalization_factor", hist.normalization_factor, "counts/bin");
    report.flag("is_single", est.is_single);
    report.flag("n_emitters_bounded", est.is_bounded());
    report.series.insert("tau_ns".into(), hist.bin_centers.clone());
    report.series.insert("raw_counts".into(), hist.raw_counts.iter().map(|&v| v as f64).collect());
    report.series.insert("g2".into(), hist.g2.clone());

    let curve = Curve { x: hist.bin_centers.clone(), y_data: hist.g2.clone(), y_fit: Vec::new() };
    Ok(Outcome { report, curve: Some(curve), converged: true })
}

#[derive(Debug, Clone, Args)]
pub struct SaturationArgs {
    /// Columns power_uW, counts_per_s.
    pub file: PathBuf,
    /// Background series off the emitter, same columns; fitted linearly and
    /// subtracted.
    #[arg(long)]
    pub background: Option<PathBuf>,
    #[command(flatten)]
    pub fit: FitArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

pub fn saturation(args: &SaturationArgs) -> Result<Outcome> {
    let mut paths: Vec<&Path> = vec![&args.file];
    if let Some(bg) = &args.background {
        paths.push(bg);
    }
    let (tables, mut report) = start("saturation", &paths, &input::SATURATION)?;
    args.fit.record(&mut report);
    let signal = pairs(tables[0].column("power_uW"), tables[0].column("counts_per_s"), UW, 1.0);
    let background = tables.get(1).map(|t| pairs(t.column("power_uW"), t.column("counts_per_s"), UW, 1.0));
    let curve_in = SaturationCurve::new(signal, background)?;
    let fit = photophys::fit_saturation_with(&curve_in, &args.fit.options())?;

    report.param("a", fit.a, fit.a_error, "counts/s");
    report.param("p_sat_uW", fit.p_sat / UW, fit.p_sat_error / UW, "uW");
    report.param("b", fit.b * UW, fit.b_error * UW, "counts/s/uW");
    if let Some(line) = &fit.background {
        report.param("background_slope", line.slope * UW, line.slope_error * UW, "counts/s/uW");
        report.param("background_intercept", line.intercept, line.intercept_error, "counts/s");
    }
    report.flag("background_subtracted", fit.background.is_some());
    report.flag("negative_background_slope", fit.negative_background_slope);
    report.flag("extrapolated", fit.extrapolated);
    report.flag("undersampled", fit.undersampled);
    report.flag("negative_corrected_counts", fit.negative_corrected_counts);
    report.flag("converged", fit.fit.converged);
    if fit.negative_background_slope {
        report.warn("fitted linear term b is negative");
    }
    if fit.extrapolated {
        report.warn("P_sat lies outside the sampled power range");
    }
    if fit.undersampled {
        report.warn("highest power is below 1.5 P_sat");
    }
    if fit.negative_corrected_counts {
        report.warn("background subtraction produced negative counts");
    }

    let mut curve = Curve::default();
    for &(p, c) in &curve_in.points {
        let corrected = fit.background.as_ref().map_or(c, |l| c - l.predict(p));
        curve.push(p / UW, corrected, fit.predict(p));
    }
    Ok(Outcome { converged: fit.fit.converged, report, curve: Some(curve) })
}

#[derive(Debug, Clone, Args)]
pub struct PolarizationArgs {
    /// Columns angle_deg, counts_per_s.
    pub file: PathBuf,
    #[command(flatten)]
    pub fit: FitArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

pub fn polarization(args: &PolarizationArgs) -> Result<Outcome> {
    let (tables, mut report) = start("polarization", &[&args.file], &input::POLARIZATION)?;
    args.fit.record(&mut report);
    let t = &tables[0];
    let sweep = PolarizationSweep::new(pairs(t.column("angle_deg"), t.column("counts_per_s"), 1.0, 1.0))?;
    let fit = photophys::fit_polarization_with(&sweep, &args.fit.options())?;
    report.param("offset", fit.offset, fit.offset_error, "counts/s");
    report.param("amplitude", fit.amplitude, fit.amplitude_error, "counts/s");
    report.param("max_angle_deg", fit.max_angle, fit.max_angle_error, "deg");
    report.param("visibility", fit.visibility, fit.visibility_error, "");
    report.flag("flat_response", fit.flat_response);
    report.flag("converged", fit.fit.converged);
    if fit.flat_response {
        report.warn("amplitude consistent with zero; max_angle_deg carries no information");
    }
    let mut curve = Curve::default();
    for &(a, c) in &sweep.points {
        curve.push(a, c, fit.predict(a));
    }
    Ok(Outcome { converged: fit.fit.converged, report, curve: Some(curve) })
}

#[derive(Debug, Clone, Args)]
pub struct SpectrumArgs {
    /// Columns wavelength_nm, intensity.
    pub file: PathBuf,
    /// NV⁰ band fraction below which the charge state is accepted.
    #[arg(long, default_value_t = photophys::DEFAULT_NV0_THRESHOLD)]
    pub nv0_threshold: f64,
    /// Required ZPL excess over the local baseline, in baseline RMS.
    #[arg(long, default_value_t = 3.0)]
    pub zpl_min_snr: f64,
    /// Width of the baseline flanks around the ZPL window.
    #[arg(long, default_value_t = 10.0)]
    pub baseline_flank_nm: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

pub fn spectrum(args: &SpectrumArgs) -> Result<Outcome> {
    let (tables, mut report) = start("spectrum", &[&args.file], &input::SPECTRUM)?;
    report.setting("nv0_threshold", args.nv0_threshold);
    report.setting("zpl_min_snr", args.zpl_min_snr);
    report.setting("baseline_flank_nm", args.baseline_flank_nm);
    let t = &tables[0];
    let s = Spectrum::new(pairs(t.column("wavelength_nm"), t.column("intensity"), 1.0, 1.0))?;
    let options = SpectrumOptions {
        nv0_threshold: args.nv0_threshold,
        zpl_min_snr: args.zpl_min_snr,
        baseline_flank: args.baseline_flank_nm,
    };
    let r = photophys::analyze_spectrum_with(&s, &options)?;
    if let Some(w) = r.zpl_wavelength {
        report.value("zpl_wavelength_nm", w, "nm");
    }
    report.value("peak_wavelength_nm", r.peak_wavelength, "nm");
    report.value("nv0_band_fraction", r.nv0_band_fraction, "");
    report.flag("zpl_present", r.zpl_present);
    report.flag("charge_state_ok", r.charge_state_ok);
    report.flag("zpl_window_uncovered", r.zpl_window_uncovered);
    report.flag("incomplete_coverage", r.incomplete_coverage);
    if r.zpl_window_uncovered {
        report.warn("spectrum does not cover the 630-645 nm ZPL window");
    } else if r.incomplete_coverage {
        report.warn("spectrum does not cover 570-750 nm");
    }
    let curve = Curve {
        x: s.samples.iter().map(|p| p.0).collect(),
        y_data: s.samples.iter().map(|p| p.1).collect(),
        y_fit: Vec::new(),
    };
    Ok(Outcome { report, curve: Some(curve), converged: true })
}

#[derive(Debug, Clone, Args)]
pub struct PulseArgs {
    /// Uniformly sampled trace with columns t_ns, intensity.
    pub file: PathBuf,
    /// Power before the modulator, in trace units, for the transmittance.
    #[arg(long)]
    pub input_reference: Option<f64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

pub fn pulse(args: &PulseArgs) -> Result<Outcome> {
    let (tables, mut report) = start("pulse", &[&args.file], &input::PULSE)?;
    let t = &tables[0];
    let times = t.column("t_ns");
    if times.len() < 2 {
        bail!("pulse trace needs at least two samples");
    }
    let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    let uniform = times.windows(2).all(|w| ((w[1] - w[0]) - dt).abs() <= 1e-6 * dt.abs());
    if !(dt > 0.0 && uniform) {
        bail!("pulse trace must be uniformly sampled in increasing time");
    }
    report.setting("sample_period_ns", dt);
    if let Some(r) = args.input_reference {
        report.setting("input_reference", r);
    }
    let trace = PulseTrace::new(dt, t.column("intensity").to_vec())?;
    let m = pulse::analyze_pulse_with_reference(&trace, args.input_reference)?;
    let t0 = times[0];
    report.value("rise_time_ns", m.rise_time, "ns");
    report.value("fall_time_ns", m.fall_time, "ns");
    report.value("on_level", m.on_level, "");
    report.value("off_level", m.off_level, "");
    report.value("extinction_ratio", m.extinction_ratio, "");
    report.value("extinction_ratio_db", 10.0 * m.extinction_ratio.log10(), "dB");
    report.value("ripple_rms_fraction", m.ripple_rms_fraction, "");
    report.value("rising_edge_ns", t0 + m.rising_edge_time, "ns");
    report.value("falling_edge_ns", t0 + m.falling_edge_time, "ns");
    report.value("width_ns", m.width(), "ns");
    if let Some(tr) = m.transmittance {
        report.value("transmittance", tr, "");
    }
    report.flag("extinction_ratio_undefined", m.extinction_ratio_undefined);
    if m.extinction_ratio_undefined {
        report.warn("off level is not positive; extinction ratio undefined");
    }
    let curve = Curve { x: times.to_vec(), y_data: trace.samples.clone(), y_fit: Vec::new() };
    Ok(Outcome { report, curve: Some(curve), converged: true })
}

#[derive(Debug, Clone, Args)]
pub struct OdmrArgs {
    /// Columns freq_mhz, fluorescence.
    pub file: PathBuf,
    #[command(flatten)]
    pub fit: FitArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

pub fn odmr(args: &OdmrArgs) -> Result<Outcome> {
    let (tables, mut report) = start("odmr", &[&args.file], &input::ODMR)?;
    args.fit.record(&mut report);
    let t = &tables[0];
    let f: Vec<f64> = t.column("freq_mhz").iter().map(|v| v * MHZ).collect();
    let sweep = OdmrSweep::new(f, t.column("fluorescence").to_vec())?;
    let r = odmr::fit_odmr_with(&sweep, &args.fit.options())?;
    report.value("contrast_direct", r.contrast_direct, "");
    report.param("contrast_lorentzian", r.contrast_lorentzian, r.contrast_lorentzian_error, "");
    report.param("center_frequency_mhz", r.center_frequency / MHZ, r.center_frequency_error / MHZ, "MHz");
    report.param("linewidth_fwhm_mhz", r.linewidth_fwhm / MHZ, r.linewidth_fwhm_error / MHZ, "MHz");
    report.param("baseline", r.baseline, r.baseline_error, "");
    report.flag("low_signal", r.low_signal);
    report.flag("center_at_boundary", r.center_at_boundary);
    report.flag("converged", r.converged);
    if r.low_signal {
        report.warn("dip shallower than 5% of the edge level");
    }
    if r.center_at_boundary {
        report.warn("fitted resonance lies at the edge of the sweep");
    }
    let mut curve = Curve::default();
    for (f, y) in sweep.frequencies.iter().zip(&sweep.fluorescence) {
        curve.push(f / MHZ, *y, r.predict(*f));
    }
    Ok(Outcome { converged: r.converged, report, curve: Some(curve) })
}
