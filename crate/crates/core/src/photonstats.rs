//! Second-order intensity correlation from two-detector photon timestamps.
//!
//! Times are in nanoseconds. The histogram is a full cross-correlation: every
//! pair `(t_a, t_b)` with `|t_b − t_a|` inside the window contributes, not only
//! the next stop after each start.

use rayon::prelude::*;

use crate::error::{ensure_finite, ensure_positive, Error, Result};

/// Channel-A events handled per parallel work item.
const CHUNK: usize = 1 << 14;

#[derive(Debug, Clone, PartialEq)]
pub struct TimestampSeries {
    pub channel_id: u32,
    arrival_times: Vec<f64>,
    acquisition_span: (f64, f64),
}

impl TimestampSeries {
    pub fn new(channel_id: u32, arrival_times: Vec<f64>, acquisition_span: (f64, f64)) -> Result<Self> {
        ensure_finite("arrival times", &arrival_times)?;
        let (start, end) = acquisition_span;
        if !(start.is_finite() && end.is_finite() && end >= start) {
            return Err(Error::InvalidInput(format!("invalid acquisition span ({start}, {end})")));
        }
        if arrival_times.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidInput("arrival times must be non-decreasing".into()));
        }
        if arrival_times.iter().any(|&t| t < start || t > end) {
            return Err(Error::InvalidInput("arrival time outside the acquisition span".into()));
        }
        Ok(Self { channel_id, arrival_times, acquisition_span })
    }

    /// Series whose acquisition span is taken from the first and last event.
    pub fn from_times(channel_id: u32, arrival_times: Vec<f64>) -> Result<Self> {
        let span = match (arrival_times.first(), arrival_times.last()) {
            (Some(&a), Some(&b)) => (a, b),
            _ => (0.0, 0.0),
        };
        Self::new(channel_id, arrival_times, span)
    }

    pub fn arrival_times(&self) -> &[f64] {
        &self.arrival_times
    }

    pub fn acquisition_span(&self) -> (f64, f64) {
        self.acquisition_span
    }

    pub fn len(&self) -> usize {
        self.arrival_times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrival_times.is_empty()
    }

    /// Events of both series on one channel; the span covers both spans.
    pub fn merge(&self, other: &TimestampSeries) -> TimestampSeries {
        let mut times = Vec::with_capacity(self.len() + other.len());
        let (mut i, mut j) = (0, 0);
        let (a, b) = (&self.arrival_times, &other.arrival_times);
        while i < a.len() && j < b.len() {
            if a[i] <= b[j] {
                times.push(a[i]);
                i += 1;
            } else {
                times.push(b[j]);
                j += 1;
            }
        }
        times.extend_from_slice(&a[i..]);
        times.extend_from_slice(&b[j..]);
        TimestampSeries {
            channel_id: self.channel_id,
            arrival_times: times,
            acquisition_span: (
                self.acquisition_span.0.min(other.acquisition_span.0),
                self.acquisition_span.1.max(other.acquisition_span.1),
            ),
        }
    }

    /// Shift every timestamp and the span by `offset`.
    pub fn shifted(&self, offset: f64) -> TimestampSeries {
        TimestampSeries {
            channel_id: self.channel_id,
            arrival_times: self.arrival_times.iter().map(|t| t + offset).collect(),
            acquisition_span: (self.acquisition_span.0 + offset, self.acquisition_span.1 + offset),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationHistogram {
    pub bin_centers: Vec<f64>,
    pub raw_counts: Vec<u64>,
    pub g2: Vec<f64>,
    pub bin_width: f64,
    /// Expected counts per bin for uncorrelated streams.
    pub normalization_factor: f64,
}

impl CorrelationHistogram {
    pub fn len(&self) -> usize {
        self.raw_counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw_counts.is_empty()
    }

    pub fn center_index(&self) -> usize {
        self.raw_counts.len() / 2
    }
}

/// Number of bins covering `[−window, window]`; must be an odd integer so
/// one bin is centered on τ = 0.
pub fn bin_count(window: f64, bin_width: f64) -> Result<usize> {
    ensure_positive("correlation window", window)?;
    ensure_positive("bin width", bin_width)?;
    let ratio = 2.0 * window / bin_width;
    let n = ratio.round();
    if (ratio - n).abs() > 1e-9 * ratio.max(1.0) {
        return Err(Error::InvalidInput(format!(
            "2·window/bin_width = {ratio} is not an integer bin count"
        )));
    }
    let n = n as usize;
    if n.is_multiple_of(2) {
        return Err(Error::InvalidInput(format!(
            "2·window/bin_width gives {n} bins; an odd count is required so that a bin is centered on τ=0"
        )));
    }
    Ok(n)
}

/// Bin index offset from the central bin, rounding half away from zero so
/// that `bin_offset(−τ) == −bin_offset(τ)` holds exactly.
#[inline]
fn bin_offset(tau: f64, bin_width: f64) -> i64 {
    let k = (tau.abs() / bin_width + 0.5).floor() as i64;
    if tau < 0.0 {
        -k
    } else {
        k
    }
}

fn overlap_slice(times: &[f64], lo: f64, hi: f64) -> &[f64] {
    let start = times.partition_point(|&t| t < lo);
    let end = times.partition_point(|&t| t <= hi);
    &times[start..end]
}

fn histogram_chunk(a: &[f64], b: &[f64], bin_width: f64, half: i64) -> Vec<u64> {
    let mut counts = vec![0u64; (2 * half + 1) as usize];
    let Some(&first) = a.first() else {
        return counts;
    };
    let reach = (half as f64 + 1.0) * bin_width;
    let mut lo = b.partition_point(|&t| t < first - reach);
    for &ta in a {
        while lo < b.len() && b[lo] < ta - reach {
            lo += 1;
        }
        let mut j = lo;
        while j < b.len() && b[j] <= ta + reach {
            let k = bin_offset(b[j] - ta, bin_width);
            if k.abs() <= half {
                counts[(k + half) as usize] += 1;
            }
            j += 1;
        }
    }
    counts
}

/// Cross-correlation histogram of `b` relative to `a` (τ = t_b − t_a) over
/// `[−window, window]`.
///
/// Only events inside the common acquisition interval are used. The result is
/// normalized by `rate_a · rate_b · bin_width · T_overlap` so that
/// independent Poisson streams give g2 ≈ 1.
pub fn correlate(a: &TimestampSeries, b: &TimestampSeries, window: f64, bin_width: f64) -> Result<CorrelationHistogram> {
    let n_bins = bin_count(window, bin_width)?;
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidInput("empty timestamp series".into()));
    }
    let lo = a.acquisition_span.0.max(b.acquisition_span.0);
    let hi = a.acquisition_span.1.min(b.acquisition_span.1);
    if hi <= lo {
        return Err(Error::InvalidInput("timestamp series do not overlap in time".into()));
    }
    let ta = overlap_slice(&a.arrival_times, lo, hi);
    let tb = overlap_slice(&b.arrival_times, lo, hi);
    if ta.is_empty() || tb.is_empty() {
        return Err(Error::InvalidInput("no events inside the common acquisition interval".into()));
    }

    let half = (n_bins / 2) as i64;
    let raw_counts = ta
        .par_chunks(CHUNK)
        .map(|chunk| histogram_chunk(chunk, tb, bin_width, half))
        .reduce(
            || vec![0u64; n_bins],
            |mut acc, part| {
                acc.iter_mut().zip(part).for_each(|(x, y)| *x += y);
                acc
            },
        );

    let span = hi - lo;
    let normalization_factor = ta.len() as f64 * tb.len() as f64 * bin_width / span;
    let g2 = raw_counts.iter().map(|&c| c as f64 / normalization_factor).collect();
    let bin_centers = (-half..=half).map(|k| k as f64 * bin_width).collect();

    Ok(CorrelationHistogram { bin_centers, raw_counts, g2, bin_width, normalization_factor })
}

/// Mean of g2 over `smoothing_bins` bins centered on τ = 0.
pub fn g2_zero(hist: &CorrelationHistogram, smoothing_bins: usize) -> Result<f64> {
    if smoothing_bins == 0 || smoothing_bins.is_multiple_of(2) || smoothing_bins > hist.len() / 4 {
        return Err(Error::InvalidInput(format!(
            "smoothing width must be odd and within [1, {}], got {smoothing_bins}",
            hist.len() / 4
        )));
    }
    let c = hist.center_index();
    let r = smoothing_bins / 2;
    let slice = &hist.g2[c - r..=c + r];
    Ok(slice.iter().sum::<f64>() / smoothing_bins as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmitterEstimate {
    pub g2_zero: f64,
    /// `1 / (1 − g2(0))`; infinite when g2(0) ≥ 1.
    pub n_emitters: f64,
    pub is_single: bool,
}

impl EmitterEstimate {
    pub fn is_bounded(&self) -> bool {
        self.n_emitters.is_finite()
    }
}

/// Threshold below which a g2(0) value certifies a single emitter.
pub const SINGLE_EMITTER_THRESHOLD: f64 = 0.5;

pub fn emitter_count(g2_zero: f64) -> Result<EmitterEstimate> {
    if !g2_zero.is_finite() || g2_zero < 0.0 {
        return Err(Error::InvalidInput(format!("g2(0) must be a non-negative number, got {g2_zero}")));
    }
    let n_emitters = if g2_zero < 1.0 { 1.0 / (1.0 - g2_zero) } else { f64::INFINITY };
    Ok(EmitterEstimate { g2_zero, n_emitters, is_single: g2_zero < SINGLE_EMITTER_THRESHOLD })
}
