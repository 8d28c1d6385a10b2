//! `simulate`: seeded synthetic datasets in the analyzers' CSV schemas.

use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use clap::{Args, Subcommand};
use nvlaser::beam::BeamGeometry;
use nvlaser::synth::{self, Noise, PulseShape};

use crate::input::write_csv;
use crate::report::{digest, AnalysisReport};
use crate::Outcome;

const UM: f64 = 1e-6;
const UW: f64 = 1e-6;
const MHZ: f64 = 1e6;

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(subcommand)]
    pub kind: SimKind,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Output CSV path.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct BeamArgs {
    #[arg(long, default_value_t = 11.9)]
    pub w0_um: f64,
    #[arg(long, default_value_t = 700.0)]
    pub zr_um: f64,
    #[arg(long, default_value_t = 532.0)]
    pub lambda_nm: f64,
    #[arg(long, default_value_t = 0.0)]
    pub focus_um: f64,
}

impl BeamArgs {
    fn geometry(&self) -> Result<BeamGeometry> {
        Ok(BeamGeometry::new(self.w0_um * UM, self.zr_um * UM, self.focus_um * UM, self.lambda_nm * 1e-9)?)
    }

    fn record(&self, r: &mut AnalysisReport) {
        r.value("w0_um", self.w0_um, "um");
        r.value("zr_um", self.zr_um, "um");
        r.value("lambda_nm", self.lambda_nm, "nm");
        r.value("focus_um", self.focus_um, "um");
    }
}

/// Poisson counting noise replaces the Gaussian noise when an exposure is given.
#[derive(Debug, Clone, Args)]
pub struct CountNoise {
    /// Multiplicative Gaussian noise, as a fraction of the value.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Integration time per point for Poisson counting noise.
    #[arg(long, conflicts_with = "noise")]
    pub poisson_exposure_s: Option<f64>,
}

impl CountNoise {
    fn model(&self, default: f64) -> Noise {
        match self.poisson_exposure_s {
            Some(exposure) => Noise::Poisson { exposure },
            None => Noise::Gaussian(self.noise.unwrap_or(default)),
        }
    }

    fn record(&self, r: &mut AnalysisReport, default: f64) {
        match self.model(default) {
            Noise::Gaussian(f) => r.value("noise", f, ""),
            Noise::Poisson { exposure } => r.value("poisson_exposure_s", exposure, "s"),
        }
    }
}

#[derive(Debug, Clone, Subcommand)]
pub enum SimKind {
    /// Beam radius versus axial position.
    Caustic {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        beam: BeamArgs,
        /// Half-span of the axial positions, in Rayleigh ranges.
        #[arg(long, default_value_t = 5.0)]
        span_zr: f64,
        #[arg(long, default_value_t = 15)]
        points: usize,
        #[arg(long, default_value_t = 0.03)]
        noise: f64,
    },
    /// Knife-edge scans at one or more axial positions, in one file.
    KnifeEdge {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        beam: BeamArgs,
        /// Axial positions, comma separated.
        #[arg(long = "z-um", value_delimiter = ',', default_value = "0", allow_hyphen_values = true)]
        z_um: Vec<f64>,
        #[arg(long, default_value_t = 40)]
        points: usize,
        /// Half-range of the blade travel, in beam radii.
        #[arg(long, default_value_t = 2.5)]
        range_w: f64,
        #[arg(long, default_value_t = 1000.0)]
        power_uw: f64,
        #[arg(long, default_value_t = 0.0)]
        center_um: f64,
        #[arg(long, default_value_t = 0.01)]
        noise: f64,
    },
    /// Two-detector photon timestamps from independent two-level emitters.
    G2 {
        #[command(flatten)]
        common: Common,
        /// Output path for the second channel.
        #[arg(long)]
        out_b: PathBuf,
        #[arg(long, default_value_t = 1)]
        emitters: usize,
        #[arg(long, default_value_t = 0.1)]
        excitation_rate_per_ns: f64,
        #[arg(long, default_value_t = 0.1)]
        decay_rate_per_ns: f64,
        #[arg(long, default_value_t = 4e6)]
        duration_ns: f64,
    },
    /// Fluorescence versus excitation power.
    Saturation {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1e5)]
        a: f64,
        #[arg(long, default_value_t = 258.0)]
        p_sat_uw: f64,
        /// Linear term, counts/s per µW.
        #[arg(long, default_value_t = 0.0)]
        b: f64,
        #[arg(long, default_value_t = 25)]
        points: usize,
        /// Highest power, in units of P_sat.
        #[arg(long, default_value_t = 4.0)]
        max_factor: f64,
        /// Also write a background series here and add it to the signal.
        #[arg(long, requires = "background_slope")]
        background_out: Option<PathBuf>,
        /// Background slope, counts/s per µW.
        #[arg(long)]
        background_slope: Option<f64>,
        #[arg(long, default_value_t = 0.0)]
        background_intercept: f64,
        #[command(flatten)]
        noise: CountNoise,
    },
    /// Fluorescence versus half-wave-plate angle.
    Polarization {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1000.0)]
        c0: f64,
        #[arg(long, default_value_t = 300.0)]
        c1: f64,
        #[arg(long, default_value_t = 41.2)]
        max_angle_deg: f64,
        #[arg(long, default_value_t = 10.0)]
        step_deg: f64,
        #[arg(long, default_value_t = 0.02)]
        noise: f64,
    },
    /// NV emission spectrum.
    Spectrum {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1.0)]
        zpl_weight: f64,
        #[arg(long, default_value_t = 0.0)]
        nv0_weight: f64,
        #[arg(long, default_value_t = 500.0)]
        start_nm: f64,
        #[arg(long, default_value_t = 850.0)]
        stop_nm: f64,
        #[arg(long, default_value_t = 0.25)]
        step_nm: f64,
        #[arg(long, default_value_t = 0.01)]
        noise: f64,
    },
    /// Modulated laser pulse.
    Pulse {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 28.8)]
        rise_ns: f64,
        #[arg(long, default_value_t = 28.8)]
        fall_ns: f64,
        #[arg(long, default_value_t = 2000.0)]
        width_ns: f64,
        #[arg(long, default_value_t = 1.0)]
        on_level: f64,
        #[arg(long, default_value_t = 460760.0)]
        extinction_ratio: f64,
        #[arg(long, default_value_t = 0.0)]
        ripple_fraction: f64,
        /// Additive Gaussian noise, in intensity units.
        #[arg(long, default_value_t = 0.0)]
        noise_sigma: f64,
        #[arg(long, default_value_t = 0.8)]
        sample_ns: f64,
    },
    /// Single Lorentzian ODMR dip.
    Odmr {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1.0)]
        baseline: f64,
        #[arg(long, default_value_t = 0.279)]
        contrast: f64,
        #[arg(long, default_value_t = 2870.0)]
        center_mhz: f64,
        #[arg(long, default_value_t = 10.0)]
        fwhm_mhz: f64,
        #[arg(long, default_value_t = 50.0)]
        span_mhz: f64,
        #[arg(long, default_value_t = 101)]
        points: usize,
        #[command(flatten)]
        noise: CountNoise,
    },
}

fn linspace(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        bail!("need at least 2 points, got {n}");
    }
    Ok((0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect())
}

/// Writes the file, then builds the report digesting its bytes.
fn finish(name: &str, outputs: &[&Path], fill: impl FnOnce(&mut AnalysisReport)) -> Result<Outcome> {
    let bytes = outputs.iter().map(std::fs::read).collect::<std::io::Result<Vec<_>>>()?;
    let slices: Vec<&[u8]> = bytes.iter().map(Vec::as_slice).collect();
    let mut report = AnalysisReport::new(format!("simulate {name}"), digest(&slices));
    fill(&mut report);
    Ok(Outcome { report, curve: None, converged: true })
}

pub fn simulate(args: &SimulateArgs) -> Result<Outcome> {
    match &args.kind {
        SimKind::Caustic { common, beam, span_zr, points, noise } => {
            let geom = beam.geometry()?;
            let half = span_zr * geom.rayleigh_range;
            let z = linspace(geom.focus_position - half, geom.focus_position + half, *points)?;
            let pts = synth::gen_caustic(&geom, &z, *noise, common.seed)?;
            let zs: Vec<f64> = pts.iter().map(|p| p.z / UM).collect();
            let ws: Vec<f64> = pts.iter().map(|p| p.width / UM).collect();
            write_csv(&common.out, &[("z_um", &zs), ("w_um", &ws)])?;
            finish("caustic", &[&common.out], |r| {
                beam.record(r);
                r.value("m_squared", geom.m_squared(), "");
                r.value("noise", *noise, "");
                r.setting("seed", common.seed as f64);
            })
        }
        SimKind::KnifeEdge { common, beam, z_um, points, range_w, power_uw, center_um, noise } => {
            let geom = beam.geometry()?;
            let (mut zc, mut xc, mut pc) = (Vec::new(), Vec::new(), Vec::new());
            for (i, &z) in z_um.iter().enumerate() {
                let w = nvlaser::beam::width_at(&geom, z * UM);
                let c = center_um * UM;
                let grid = linspace(c - range_w * w, c + range_w * w, *points)?;
                let seed = common.seed.wrapping_add(i as u64);
                let scan = synth::gen_knife_edge(&geom, z * UM, &grid, power_uw * UW, c, *noise, seed)?;
                for &(x, p) in &scan.samples {
                    zc.push(z);
                    xc.push(x / UM);
                    pc.push(p / UW);
                }
            }
            write_csv(&common.out, &[("z_um", &zc), ("x_um", &xc), ("power_uW", &pc)])?;
            finish("knife-edge", &[&common.out], |r| {
                beam.record(r);
                r.value("power_uW", *power_uw, "uW");
                r.value("center_um", *center_um, "um");
                r.value("noise", *noise, "");
                r.setting("seed", common.seed as f64);
            })
        }
        SimKind::G2 { common, out_b, emitters, excitation_rate_per_ns, decay_rate_per_ns, duration_ns } => {
            let (a, b) = synth::gen_photon_stream(
                *emitters,
                *excitation_rate_per_ns,
                *decay_rate_per_ns,
                *duration_ns,
                common.seed,
            )?;
            write_csv(&common.out, &[("t_ns", a.arrival_times())])?;
            write_csv(out_b, &[("t_ns", b.arrival_times())])?;
            finish("g2", &[&common.out, out_b], |r| {
                r.value("emitters", *emitters as f64, "");
                r.value("expected_g2_zero", 1.0 - 1.0 / *emitters as f64, "");
                r.value("excitation_rate_per_ns", *excitation_rate_per_ns, "1/ns");
                r.value("decay_rate_per_ns", *decay_rate_per_ns, "1/ns");
                r.value("duration_ns", *duration_ns, "ns");
                r.value("events_a", a.len() as f64, "");
                r.value("events_b", b.len() as f64, "");
                r.setting("seed", common.seed as f64);
            })
        }
        SimKind::Saturation {
            common,
            a,
            p_sat_uw,
            b,
            points,
            max_factor,
            background_out,
            background_slope,
            background_intercept,
            noise,
        } => {
            let top = max_factor * p_sat_uw;
            let powers_uw: Vec<f64> = (1..=*points).map(|i| top * i as f64 / *points as f64).collect();
            let powers: Vec<f64> = powers_uw.iter().map(|p| p * UW).collect();
            let model = noise.model(0.02);
            let mut clean = synth::gen_saturation(*a, p_sat_uw * UW, b / UW, &powers, Noise::none(), 0)?.counts();
            let mut outputs = vec![common.out.as_path()];
            if let (Some(path), Some(slope)) = (background_out, background_slope) {
                let bg: Vec<f64> = powers_uw.iter().map(|p| background_intercept + slope * p).collect();
                // Measured separately from the signal, so it gets its own noise draw.
                let bg_counts = model.apply(&bg, common.seed.wrapping_add(1))?;
                write_csv(path, &[("power_uW", &powers_uw), ("counts_per_s", &bg_counts)])?;
                for (c, extra) in clean.iter_mut().zip(&bg) {
                    *c += extra;
                }
                outputs.push(path);
            }
            let counts = model.apply(&clean, common.seed)?;
            write_csv(&common.out, &[("power_uW", &powers_uw), ("counts_per_s", &counts)])?;
            finish("saturation", &outputs, |r| {
                r.value("a", *a, "counts/s");
                r.value("p_sat_uW", *p_sat_uw, "uW");
                r.value("b", *b, "counts/s/uW");
                if let Some(slope) = background_slope {
                    r.value("background_slope", *slope, "counts/s/uW");
                    r.value("background_intercept", *background_intercept, "counts/s");
                }
                noise.record(r, 0.02);
                r.setting("seed", common.seed as f64);
            })
        }
        SimKind::Polarization { common, c0, c1, max_angle_deg, step_deg, noise } => {
            if !(*step_deg > 0.0) {
                bail!("angle step must be positive");
            }
            let n = (360.0 / step_deg).round() as usize;
            let angles: Vec<f64> = (0..n).map(|i| i as f64 * step_deg).filter(|a| *a < 360.0).collect();
            let sweep = synth::gen_polarization(*c0, *c1, *max_angle_deg, &angles, *noise, common.seed)?;
            let a: Vec<f64> = sweep.points.iter().map(|p| p.0).collect();
            let c: Vec<f64> = sweep.points.iter().map(|p| p.1).collect();
            write_csv(&common.out, &[("angle_deg", &a), ("counts_per_s", &c)])?;
            finish("polarization", &[&common.out], |r| {
                r.value("offset", *c0, "counts/s");
                r.value("amplitude", *c1, "counts/s");
                r.value("max_angle_deg", *max_angle_deg, "deg");
                r.value("noise", *noise, "");
                r.setting("seed", common.seed as f64);
            })
        }
        SimKind::Spectrum { common, zpl_weight, nv0_weight, start_nm, stop_nm, step_nm, noise } => {
            if !(*step_nm > 0.0 && stop_nm > start_nm) {
                bail!("need a positive step and stop > start");
            }
            let n = ((stop_nm - start_nm) / step_nm).round() as usize + 1;
            let grid = linspace(*start_nm, *stop_nm, n)?;
            let s = synth::gen_spectrum(*zpl_weight, *nv0_weight, &grid, *noise, common.seed)?;
            let w: Vec<f64> = s.samples.iter().map(|p| p.0).collect();
            let i: Vec<f64> = s.samples.iter().map(|p| p.1).collect();
            write_csv(&common.out, &[("wavelength_nm", &w), ("intensity", &i)])?;
            finish("spectrum", &[&common.out], |r| {
                r.value("zpl_weight", *zpl_weight, "");
                r.value("nv0_weight", *nv0_weight, "");
                r.value("noise", *noise, "");
                r.setting("seed", common.seed as f64);
            })
        }
        SimKind::Pulse {
            common,
            rise_ns,
            fall_ns,
            width_ns,
            on_level,
            extinction_ratio,
            ripple_fraction,
            noise_sigma,
            sample_ns,
        } => {
            let mut shape = PulseShape::new(*rise_ns, *fall_ns, *width_ns, *on_level, *extinction_ratio);
            shape.ripple_fraction = *ripple_fraction;
            shape.noise_sigma = *noise_sigma;
            let trace = synth::gen_pulse(&shape, *sample_ns, common.seed)?;
            let t: Vec<f64> = (0..trace.samples.len()).map(|i| trace.time(i)).collect();
            write_csv(&common.out, &[("t_ns", &t), ("intensity", &trace.samples)])?;
            finish("pulse", &[&common.out], |r| {
                r.value("rise_time_ns", *rise_ns, "ns");
                r.value("fall_time_ns", *fall_ns, "ns");
                r.value("width_ns", *width_ns, "ns");
                r.value("on_level", *on_level, "");
                r.value("extinction_ratio", *extinction_ratio, "");
                r.value("ripple_fraction", *ripple_fraction, "");
                r.value("noise_sigma", *noise_sigma, "");
                r.setting("sample_period_ns", *sample_ns);
                r.setting("seed", common.seed as f64);
            })
        }
        SimKind::Odmr { common, baseline, contrast, center_mhz, fwhm_mhz, span_mhz, points, noise } => {
            let half = 0.5 * span_mhz;
            let f_mhz = linspace(center_mhz - half, center_mhz + half, *points)?;
            let f: Vec<f64> = f_mhz.iter().map(|v| v * MHZ).collect();
            let sweep = synth::gen_odmr(
                *baseline,
                *contrast,
                center_mhz * MHZ,
                fwhm_mhz * MHZ,
                &f,
                noise.model(0.01),
                common.seed,
            )?;
            write_csv(&common.out, &[("freq_mhz", &f_mhz), ("fluorescence", &sweep.fluorescence)])?;
            finish("odmr", &[&common.out], |r| {
                r.value("baseline", *baseline, "");
                r.value("contrast", *contrast, "");
                r.value("center_frequency_mhz", *center_mhz, "MHz");
                r.value("linewidth_fwhm_mhz", *fwhm_mhz, "MHz");
                noise.record(r, 0.01);
                r.setting("seed", common.seed as f64);
            })
        }
    }
}
