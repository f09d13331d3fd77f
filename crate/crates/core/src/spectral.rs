//! Power spectral densities, log-binned densities and power-law fits.

use std::fmt::Write as _;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralMeta {
    pub segment_len: usize,
    pub segments: usize,
    pub window: String,
    pub overlap: f64,
}

/// One-sided PSD, frequencies in cycles per time unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralDensity {
    pub freqs: Vec<f64>,
    pub power: Vec<f64>,
    pub meta: SpectralMeta,
}

impl SpectralDensity {
    pub fn points(&self) -> Vec<(f64, f64)> {
        self.freqs
            .iter()
            .copied()
            .zip(self.power.iter().copied())
            .collect()
    }

    /// The estimates with `lo <= f <= hi`.
    pub fn restricted(&self, (lo, hi): (f64, f64)) -> SpectralDensity {
        let (freqs, power) = self
            .freqs
            .iter()
            .zip(&self.power)
            .filter(|(f, _)| **f >= lo && **f <= hi)
            .map(|(f, p)| (*f, *p))
            .unzip();
        SpectralDensity {
            freqs,
            power,
            meta: self.meta.clone(),
        }
    }

    /// `Σ power·Δf`, comparable with the variance of the mean-removed series.
    pub fn integrated_power(&self) -> f64 {
        if self.freqs.len() < 2 {
            return 0.0;
        }
        let df = self.freqs[1] - self.freqs[0];
        self.power.iter().sum::<f64>() * df
    }

    /// Averages the power inside logarithmic frequency bins; empty bins are
    /// dropped and each bin is represented by the geometric mean of its
    /// frequencies.
    pub fn log_binned(&self, bins_per_decade: usize) -> SpectralDensity {
        let bpd = bins_per_decade.max(1) as f64;
        let mut freqs = Vec::new();
        let mut power = Vec::new();
        let mut current: Option<i64> = None;
        let (mut lf, mut p, mut n) = (0.0, 0.0, 0usize);
        let flush = |lf: f64, p: f64, n: usize, freqs: &mut Vec<f64>, power: &mut Vec<f64>| {
            if n > 0 {
                freqs.push((lf / n as f64).exp());
                power.push(p / n as f64);
            }
        };
        for (&f, &s) in self.freqs.iter().zip(&self.power) {
            let bin = (f.log10() * bpd).floor() as i64;
            if current != Some(bin) {
                flush(lf, p, n, &mut freqs, &mut power);
                current = Some(bin);
                lf = 0.0;
                p = 0.0;
                n = 0;
            }
            lf += f.ln();
            p += s;
            n += 1;
        }
        flush(lf, p, n, &mut freqs, &mut power);
        SpectralDensity {
            freqs,
            power,
            meta: self.meta.clone(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# window: {}", self.meta.window);
        let _ = writeln!(s, "# segment_len: {}", self.meta.segment_len);
        let _ = writeln!(s, "# segments: {}", self.meta.segments);
        let _ = writeln!(s, "# overlap: {}", self.meta.overlap);
        s.push_str("freq,power\n");
        for (f, p) in self.freqs.iter().zip(&self.power) {
            let _ = writeln!(s, "{f:?},{p:?}");
        }
        s
    }
}

/// Streaming Welch estimator: Hann-windowed, per-segment mean removal,
/// averaged one-sided periodograms.
pub struct Welch {
    segment_len: usize,
    step: usize,
    overlap: f64,
    dt: f64,
    window: Vec<f64>,
    window_power: f64,
    fft: Arc<dyn Fft<f64>>,
    buffer: Vec<f64>,
    scratch: Vec<Complex64>,
    acc: Vec<f64>,
    segments: usize,
    seen: usize,
}

impl Welch {
    pub fn new(segment_len: usize, overlap: f64, dt: f64) -> Result<Self> {
        if segment_len < 4 || !segment_len.is_power_of_two() {
            return Err(Error::InvalidParams(format!(
                "segment length must be a power of two >= 4, got {segment_len}"
            )));
        }
        if !(0.0..1.0).contains(&overlap) {
            return Err(Error::InvalidParams("overlap must be in [0, 1)".into()));
        }
        if !(dt > 0.0) {
            return Err(Error::InvalidParams(
                "sample spacing must be positive".into(),
            ));
        }
        let step = (((1.0 - overlap) * segment_len as f64).round() as usize).clamp(1, segment_len);
        let window: Vec<f64> = (0..segment_len)
            .map(|i| {
                let x = std::f64::consts::PI * i as f64 / segment_len as f64;
                x.sin().powi(2)
            })
            .collect();
        let window_power = window.iter().map(|w| w * w).sum();
        let fft = FftPlanner::new().plan_fft_forward(segment_len);
        Ok(Welch {
            segment_len,
            step,
            overlap,
            dt,
            window,
            window_power,
            fft,
            buffer: Vec::with_capacity(segment_len),
            scratch: vec![Complex64::new(0.0, 0.0); segment_len],
            acc: vec![0.0; segment_len / 2],
            segments: 0,
            seen: 0,
        })
    }

    pub fn push(&mut self, x: f64) {
        self.buffer.push(x);
        self.seen += 1;
        if self.buffer.len() == self.segment_len {
            self.process();
            self.buffer.drain(..self.step);
        }
    }

    pub fn extend(&mut self, xs: &[f64]) {
        xs.iter().for_each(|&x| self.push(x));
    }

    pub fn samples_seen(&self) -> usize {
        self.seen
    }

    fn process(&mut self) {
        let n = self.segment_len;
        let mean = self.buffer.iter().sum::<f64>() / n as f64;
        for ((c, &x), &w) in self.scratch.iter_mut().zip(&self.buffer).zip(&self.window) {
            *c = Complex64::new((x - mean) * w, 0.0);
        }
        self.fft.process(&mut self.scratch);
        for (k, a) in self.acc.iter_mut().enumerate() {
            *a += self.scratch[k + 1].norm_sqr();
        }
        self.segments += 1;
    }

    pub fn finish(&self) -> Result<SpectralDensity> {
        if self.seen < 2 * self.segment_len || self.segments == 0 {
            return Err(Error::TooShort {
                needed: 2 * self.segment_len,
                got: self.seen,
            });
        }
        let n = self.segment_len;
        let scale = self.dt / (self.window_power * self.segments as f64);
        let half = n / 2;
        let freqs = (1..=half)
            .map(|k| k as f64 / (n as f64 * self.dt))
            .collect();
        let power = self
            .acc
            .iter()
            .enumerate()
            .map(|(k, &a)| {
                if k + 1 == half {
                    a * scale
                } else {
                    2.0 * a * scale
                }
            })
            .collect();
        Ok(SpectralDensity {
            freqs,
            power,
            meta: SpectralMeta {
                segment_len: n,
                segments: self.segments,
                window: "hann".into(),
                overlap: self.overlap,
            },
        })
    }
}

/// Welch PSD of a uniformly sampled series with spacing `dt`.
pub fn psd(series: &[f64], dt: f64, segment_len: usize, overlap: f64) -> Result<SpectralDensity> {
    let mut w = Welch::new(segment_len, overlap, dt)?;
    if series.len() < 2 * segment_len {
        return Err(Error::TooShort {
            needed: 2 * segment_len,
            got: series.len(),
        });
    }
    w.extend(series);
    w.finish()
}

/// Welch PSD of one column of a trajectory.
pub fn psd_of(
    traj: &Trajectory,
    column: usize,
    segment_len: usize,
    overlap: f64,
) -> Result<SpectralDensity> {
    psd(&traj.column(column), traj.dt, segment_len, overlap)
}

/// Log-binned probability density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalPdf {
    pub edges: Vec<f64>,
    pub centers: Vec<f64>,
    pub density: Vec<f64>,
    /// Weight (sample count or time) per bin.
    pub counts: Vec<f64>,
    pub total_weight: f64,
}

impl EmpiricalPdf {
    pub fn points(&self) -> Vec<(f64, f64)> {
        self.centers
            .iter()
            .copied()
            .zip(self.density.iter().copied())
            .collect()
    }

    pub fn mass(&self) -> f64 {
        self.density
            .iter()
            .zip(self.edges.windows(2))
            .map(|(d, e)| d * (e[1] - e[0]))
            .sum()
    }

    /// Approximate quantile, log-interpolated inside the containing bin.
    pub fn quantile(&self, q: f64) -> f64 {
        let in_range: f64 = self.counts.iter().sum();
        let target = q.clamp(0.0, 1.0) * in_range;
        let mut acc = 0.0;
        for (i, &c) in self.counts.iter().enumerate() {
            if c > 0.0 && acc + c >= target {
                let frac = ((target - acc) / c).clamp(0.0, 1.0);
                let (a, b) = (self.edges[i].ln(), self.edges[i + 1].ln());
                return (a + frac * (b - a)).exp();
            }
            acc += c;
        }
        *self.edges.last().unwrap_or(&f64::NAN)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,density\n");
        for (x, d) in self.centers.iter().zip(&self.density) {
            let _ = writeln!(s, "{x:?},{d:?}");
        }
        s
    }
}

/// Weighted histogram on fixed logarithmic bins over `[lo, hi)`.
#[derive(Debug, Clone)]
pub struct LogHistogram {
    log_lo: f64,
    bins_per_decade: f64,
    counts: Vec<f64>,
    outside: f64,
}

impl LogHistogram {
    pub fn new(lo: f64, hi: f64, bins_per_decade: usize) -> Result<Self> {
        if !(lo > 0.0 && hi > lo && bins_per_decade > 0) {
            return Err(Error::InvalidParams(format!(
                "bad histogram range [{lo}, {hi})"
            )));
        }
        let log_lo = lo.log10();
        let nbins = ((hi.log10() - log_lo) * bins_per_decade as f64)
            .ceil()
            .max(1.0) as usize;
        Ok(LogHistogram {
            log_lo,
            bins_per_decade: bins_per_decade as f64,
            counts: vec![0.0; nbins],
            outside: 0.0,
        })
    }

    #[inline]
    pub fn add(&mut self, x: f64, weight: f64) {
        let pos = (x.log10() - self.log_lo) * self.bins_per_decade;
        if pos >= 0.0 && (pos as usize) < self.counts.len() {
            self.counts[pos as usize] += weight;
        } else {
            self.outside += weight;
        }
    }

    pub fn merge(&mut self, other: &LogHistogram) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.outside += other.outside;
    }

    pub fn total_weight(&self) -> f64 {
        self.counts.iter().sum::<f64>() + self.outside
    }

    /// Densities normalized by the total weight, including any weight that
    /// fell outside the range.
    pub fn to_pdf(&self) -> EmpiricalPdf {
        let total = self.total_weight();
        let edges: Vec<f64> = (0..=self.counts.len())
            .map(|i| 10f64.powf(self.log_lo + i as f64 / self.bins_per_decade))
            .collect();
        let centers = edges.windows(2).map(|e| (e[0] * e[1]).sqrt()).collect();
        let density = self
            .counts
            .iter()
            .zip(edges.windows(2))
            .map(|(c, e)| {
                if total > 0.0 {
                    c / (total * (e[1] - e[0]))
                } else {
                    0.0
                }
            })
            .collect();
        EmpiricalPdf {
            edges,
            centers,
            density,
            counts: self.counts.clone(),
            total_weight: total,
        }
    }
}

pub const MIN_PDF_SAMPLES: usize = 10_000;

/// Log-binned density of positive samples; `count / (n · bin width)`.
pub fn empirical_pdf(samples: &[f64], bins_per_decade: usize) -> Result<EmpiricalPdf> {
    if samples.len() < MIN_PDF_SAMPLES {
        return Err(Error::TooShort {
            needed: MIN_PDF_SAMPLES,
            got: samples.len(),
        });
    }
    if let Some(bad) = samples.iter().find(|&&x| !(x > 0.0) || !x.is_finite()) {
        return Err(Error::Domain(format!(
            "samples must be positive and finite, found {bad}"
        )));
    }
    let (min, max) = samples
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
    let bpd = bins_per_decade as f64;
    let lo = 10f64.powf((min.log10() * bpd).floor() / bpd);
    let hi = 10f64.powf(((max.log10() * bpd).floor() + 1.0) / bpd);
    let mut h = LogHistogram::new(lo, hi, bins_per_decade)?;
    for &x in samples {
        h.add(x, 1.0);
    }
    Ok(h.to_pdf())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    /// Negative log-log slope: λ for densities, β for spectra.
    pub exponent: f64,
    pub stderr: f64,
    pub intercept: f64,
    pub range: (f64, f64),
    pub r2: f64,
    pub points: usize,
    pub ssr: f64,
}

/// Least-squares line through `(log10 x, log10 y)` for points with x in
/// `[min, max]`. Points with non-positive y (empty bins) are skipped.
pub fn fit_powerlaw(points: &[(f64, f64)], range: (f64, f64)) -> Result<PowerLawFit> {
    let (lo, hi) = range;
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::DegenerateRange(format!("[{lo}, {hi}]")));
    }
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|&&(x, y)| x >= lo && x <= hi && y > 0.0 && y.is_finite())
        .map(|&(x, y)| (x.log10(), y.log10()))
        .collect();
    let fit = line_fit(&pts).ok_or_else(|| {
        Error::DegenerateRange(format!(
            "need >= 5 distinct positive points in [{lo}, {hi}], got {}",
            pts.len()
        ))
    })?;
    Ok(PowerLawFit {
        exponent: -fit.slope,
        stderr: fit.stderr,
        intercept: fit.intercept,
        range,
        r2: fit.r2,
        points: pts.len(),
        ssr: fit.ssr,
    })
}

struct Line {
    slope: f64,
    intercept: f64,
    stderr: f64,
    r2: f64,
    ssr: f64,
}

fn line_fit(pts: &[(f64, f64)]) -> Option<Line> {
    line_fit_min(pts, 5)
}

fn line_fit_min(pts: &[(f64, f64)], min_points: usize) -> Option<Line> {
    let n = pts.len();
    if n < min_points.max(3) {
        return None;
    }
    let nf = n as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = pts
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum::<f64>()
        .max(0.0);
    let stderr = (ssr / (nf - 2.0) / sxx).sqrt();
    let r2 = if syy > 0.0 { 1.0 - ssr / syy } else { 1.0 };
    Some(Line {
        slope,
        intercept,
        stderr,
        r2,
        ssr,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FracturedFit {
    /// High-frequency exponent.
    pub beta1: f64,
    /// Low-frequency exponent.
    pub beta2: f64,
    pub f_break: f64,
    pub stderr1: f64,
    pub stderr2: f64,
    /// Total squared log-residual of the two segments.
    pub residual: f64,
    /// Squared log-residual of one line through the same points.
    pub single_residual: f64,
    pub single_exponent: f64,
    pub single_stderr: f64,
}

impl FracturedFit {
    /// JSON object with exactly the fields `beta1, beta2, f_break, stderr1, stderr2`.
    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "beta1": self.beta1,
            "beta2": self.beta2,
            "f_break": self.f_break,
            "stderr1": self.stderr1,
            "stderr2": self.stderr2,
        })
    }

    /// Relative residual reduction of the two-segment model over one line.
    pub fn improvement(&self) -> f64 {
        if self.single_residual > 0.0 {
            1.0 - self.residual / self.single_residual
        } else {
            0.0
        }
    }
}

pub const MIN_SEGMENT_DECADES: f64 = 0.5;

/// Two-segment power-law fit by grid search over the break frequency.
///
/// For each candidate break, points below it and points at or above it are
/// fitted independently in log-log space; the candidate with the smallest
/// total squared residual wins. Each segment must span at least half a
/// decade. An empty `search_grid` uses 20 candidates per decade.
pub fn fit_fractured(psd: &SpectralDensity, search_grid: &[f64]) -> Result<FracturedFit> {
    let pts: Vec<(f64, f64)> = psd
        .points()
        .into_iter()
        .filter(|&(f, s)| f > 0.0 && s > 0.0 && s.is_finite())
        .map(|(f, s)| (f.log10(), s.log10()))
        .collect();
    let (lmin, lmax) = match (pts.first(), pts.last()) {
        (Some(a), Some(b)) => (a.0, b.0),
        _ => return Err(Error::InsufficientSpan("no usable points".into())),
    };
    if lmax - lmin < 2.0 {
        return Err(Error::InsufficientSpan(format!(
            "need 2 decades of frequency coverage, got {:.2}",
            lmax - lmin
        )));
    }
    let grid: Vec<f64> = if search_grid.is_empty() {
        let start = lmin + MIN_SEGMENT_DECADES;
        let stop = lmax - MIN_SEGMENT_DECADES;
        let n = ((stop - start) * 20.0).floor() as usize;
        (0..=n)
            .map(|k| 10f64.powf(start + k as f64 / 20.0))
            .collect()
    } else {
        search_grid.to_vec()
    };
    let single = line_fit(&pts).ok_or_else(|| Error::InsufficientSpan("too few points".into()))?;
    let mut best: Option<FracturedFit> = None;
    for &fb in &grid {
        if !(fb > 0.0) {
            continue;
        }
        let lb = fb.log10();
        let split = pts.partition_point(|p| p.0 < lb);
        let (low, high) = pts.split_at(split);
        let span = |s: &[(f64, f64)]| s.last().map_or(0.0, |l| l.0 - s[0].0);
        if low.is_empty() || high.is_empty() {
            continue;
        }
        if span(low) < MIN_SEGMENT_DECADES || span(high) < MIN_SEGMENT_DECADES {
            continue;
        }
        let (Some(fl), Some(fh)) = (line_fit_min(low, 3), line_fit_min(high, 3)) else {
            continue;
        };
        let total = fl.ssr + fh.ssr;
        if best.as_ref().is_none_or(|b| total < b.residual) {
            best = Some(FracturedFit {
                beta1: -fh.slope,
                beta2: -fl.slope,
                f_break: fb,
                stderr1: fh.stderr,
                stderr2: fl.stderr,
                residual: total,
                single_residual: single.ssr,
                single_exponent: -single.slope,
                single_stderr: single.stderr,
            });
        }
    }
    best.ok_or_else(|| {
        Error::InsufficientSpan("no break candidate leaves two 0.5-decade segments".into())
    })
}

/// Hill estimate of the density tail exponent λ from the `k` largest samples
/// (`λ = 1 + α`, α the CCDF exponent).
pub fn hill_estimator(samples: &[f64], k: usize) -> Result<f64> {
    let mut s: Vec<f64> = samples.iter().copied().filter(|x| *x > 0.0).collect();
    if k < 2 || k >= s.len() {
        return Err(Error::InvalidParams(format!(
            "k = {k} needs 2 <= k < {}",
            s.len()
        )));
    }
    s.sort_by(|a, b| b.total_cmp(a));
    let threshold = s[k].ln();
    let mean_excess = s[..k].iter().map(|x| x.ln() - threshold).sum::<f64>() / k as f64;
    Ok(1.0 + 1.0 / mean_excess)
}

/// Frequency window used for PSD fits: drops the lowest half decade and the
/// top quarter decade of the available range.
pub fn default_psd_fit_range(psd: &SpectralDensity) -> (f64, f64) {
    let lo = psd.freqs.first().copied().unwrap_or(1.0);
    let hi = psd.freqs.last().copied().unwrap_or(1.0);
    (lo * 10f64.powf(0.5), hi * 10f64.powf(-0.25))
}

/// Tail window `[x_p50, x_p999]` used for density fits.
pub fn default_pdf_fit_range(pdf: &EmpiricalPdf) -> (f64, f64) {
    (pdf.quantile(0.5), pdf.quantile(0.999))
}
