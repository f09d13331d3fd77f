//! Figure reproductions: the two-state exponent sweep and the fractured
//! spectrum of the three-group market.
//!
//! Both pipelines stream statistics from the integrator instead of storing
//! trajectories, so runs of 10⁹ samples stay within a few megabytes.

use std::path::Path;

use herdlab_core::market::{log_price, ReturnStream};
use herdlab_core::model::{theoretical_exponents, ThreeStateParams};
use herdlab_core::sde::{
    integrate_with, IntegrationStats, IntegratorConfig, Observer, SdeModel, StepInfo,
};
use herdlab_core::spectral::{
    default_pdf_fit_range, default_psd_fit_range, fit_fractured, fit_powerlaw, EmpiricalPdf,
    FracturedFit, LogHistogram, SpectralDensity, Welch,
};
use herdlab_core::trajectory::params_digest;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analyze::FitSummary;
use crate::error::CliError;
use crate::manifest::{write_file, write_json, Manifest};
use crate::simulate::thread_pool;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig1Settings {
    pub eps1: f64,
    pub alpha: f64,
    pub eps2: Vec<f64>,
    /// Spectral run: duration and sample spacing (also the largest step).
    pub psd_t_end: f64,
    pub psd_sample_dt: f64,
    pub segment_len: usize,
    pub kappa: f64,
    /// Density run: duration, largest step and step accuracy. The
    /// histogram is weighted by time spent in each bin. The run proceeds in
    /// chunks and stops early once `pdf_step_budget` steps are spent, which
    /// only happens for heavy tails that keep the state near the upper
    /// boundary.
    pub pdf_t_end: f64,
    pub pdf_max_dt: f64,
    pub pdf_kappa: f64,
    pub pdf_chunk: f64,
    pub pdf_step_budget: u64,
    pub bins_per_decade: usize,
    pub pdf_fit: (f64, f64),
    pub seed: u64,
}

impl Default for Fig1Settings {
    fn default() -> Self {
        Fig1Settings {
            eps1: 0.1,
            alpha: 1.0,
            eps2: vec![0.1, 0.5, 1.0, 1.5, 2.0, 3.0],
            psd_t_end: 5000.0,
            psd_sample_dt: 1e-5,
            segment_len: 1 << 14,
            kappa: 0.05,
            pdf_t_end: 1e7,
            pdf_max_dt: 1e-2,
            pdf_kappa: 0.2,
            pdf_chunk: 1e5,
            pdf_step_budget: 1_500_000_000,
            bins_per_decade: 10,
            pdf_fit: (10.0, 1000.0),
            seed: 1,
        }
    }
}

impl Fig1Settings {
    /// A scaled-down sweep that finishes in seconds; exponents are not
    /// expected to be accurate.
    pub fn smoke() -> Self {
        Fig1Settings {
            eps2: vec![1.0, 3.0],
            psd_t_end: 2.0,
            psd_sample_dt: 1e-4,
            segment_len: 1 << 10,
            pdf_t_end: 200.0,
            pdf_chunk: 100.0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let ok = self.eps1 > 0.0
            && self.alpha >= 0.0
            && !self.eps2.is_empty()
            && self.eps2.iter().all(|e| *e > 0.0)
            && self.psd_t_end > 0.0
            && self.psd_sample_dt > 0.0
            && self.segment_len.is_power_of_two()
            && self.pdf_t_end > 0.0
            && self.pdf_max_dt > 0.0
            && self.pdf_kappa > 0.0
            && self.pdf_chunk > 0.0
            && self.kappa > 0.0
            && self.pdf_fit.0 > 0.0
            && self.pdf_fit.1 > self.pdf_fit.0;
        if ok {
            Ok(())
        } else {
            Err(CliError::Config(format!("invalid fig1 settings: {self:?}")))
        }
    }
}

/// Start of the two-decade PSD fit window for one sweep point.
///
/// The local density exponent of the full y-equation differs from its
/// asymptotic value by about `(ε₂ − ε₁)/(1 + y)`, and frequency scales like
/// `y²` along the power-law range, so the window moves up with `ε₂`.
pub fn fig1_psd_window(eps1: f64, eps2: f64) -> (f64, f64) {
    let lo = (5.0 * (eps2 - eps1)).powi(2).max(1.0);
    (lo, 100.0 * lo)
}

#[derive(Debug, Clone, Serialize)]
pub struct Fig1Point {
    pub eps2: f64,
    pub eta: f64,
    pub lambda_theory: f64,
    pub beta_theory: f64,
    pub lambda_fit: Option<FitSummary>,
    pub beta_fit: Option<FitSummary>,
    pub psd_steps: u64,
    pub pdf_steps: u64,
    /// Simulated time of the density run.
    pub pdf_time: f64,
    pub psd_samples: u64,
    pub pdf_file: String,
    pub psd_file: String,
}

impl Fig1Point {
    pub fn lambda_error(&self) -> Option<f64> {
        self.lambda_fit
            .as_ref()
            .map(|f| (f.exponent - self.lambda_theory).abs())
    }

    pub fn beta_error(&self) -> Option<f64> {
        self.beta_fit
            .as_ref()
            .map(|f| (f.exponent - self.beta_theory).abs())
    }
}

struct SpectrumObserver {
    welch: Welch,
    column: usize,
}

impl Observer for SpectrumObserver {
    fn sample(&mut self, _t: f64, x: &[f64]) {
        self.welch.push(x[self.column]);
    }
}

struct OccupationObserver {
    hist: LogHistogram,
    last: f64,
}

impl Observer for OccupationObserver {
    fn sample(&mut self, _t: f64, x: &[f64]) {
        self.last = x[0];
    }

    fn step(&mut self, s: &StepInfo) {
        self.hist.add(s.x[0], s.dt);
    }
}

/// Spectrum and density of one sweep point.
pub fn fig1_point(
    s: &Fig1Settings,
    eps2: f64,
) -> Result<(Fig1Point, EmpiricalPdf, SpectralDensity), CliError> {
    let th = theoretical_exponents(s.alpha, eps2)?;
    let model = SdeModel::TwoStateFull {
        eps1: s.eps1,
        eps2,
        alpha: s.alpha,
    };
    let mut cfg = IntegratorConfig::for_model(&model, s.psd_sample_dt);
    cfg.kappa = s.kappa;
    cfg.max_dt = s.psd_sample_dt;
    let mut spec = SpectrumObserver {
        welch: Welch::new(s.segment_len, 0.5, s.psd_sample_dt)?,
        column: 0,
    };
    let st_psd = integrate_with(&model, &[1.0], s.psd_t_end, &cfg, s.seed, &mut spec)?;
    let psd = spec.welch.finish()?.log_binned(s.bins_per_decade);

    let chunk = s.pdf_chunk.min(s.pdf_t_end);
    let mut cfg = IntegratorConfig::for_model(&model, chunk);
    cfg.kappa = s.pdf_kappa;
    cfg.max_dt = s.pdf_max_dt;
    let mut occ = OccupationObserver {
        hist: LogHistogram::new(1e-2, 1e3, s.bins_per_decade)?,
        last: 1.0,
    };
    let (mut pdf_steps, mut pdf_time, mut k) = (0u64, 0.0, 0u64);
    while pdf_time < s.pdf_t_end && pdf_steps < s.pdf_step_budget {
        let seed = s.seed.wrapping_add(1 + k);
        let st = integrate_with(&model, &[occ.last], chunk, &cfg, seed, &mut occ)?;
        pdf_steps += st.steps;
        pdf_time += chunk;
        k += 1;
    }
    let pdf = occ.hist.to_pdf();

    let stem = format!("fig1_eps2_{eps2}");
    let point = Fig1Point {
        eps2,
        eta: th.eta,
        lambda_theory: th.lambda,
        beta_theory: th.beta,
        lambda_fit: fit_powerlaw(&pdf.points(), s.pdf_fit)
            .ok()
            .as_ref()
            .map(FitSummary::from),
        beta_fit: fit_powerlaw(&psd.points(), fig1_psd_window(s.eps1, eps2))
            .ok()
            .as_ref()
            .map(FitSummary::from),
        psd_steps: st_psd.steps,
        pdf_steps,
        pdf_time,
        psd_samples: st_psd.samples,
        pdf_file: format!("{stem}_pdf.csv"),
        psd_file: format!("{stem}_psd.csv"),
    };
    Ok((point, pdf, psd))
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".into(), |x| format!("{x:.4}"))
}

pub fn fig1_summary_csv(points: &[Fig1Point]) -> String {
    let mut s = String::from(
        "eps2,lambda_theory,lambda_fit,lambda_stderr,beta_theory,beta_fit,beta_stderr,f_lo,f_hi\n",
    );
    for p in points {
        let (flo, fhi) = p
            .beta_fit
            .as_ref()
            .map_or((f64::NAN, f64::NAN), |f| f.range);
        s.push_str(&format!(
            "{},{:.4},{},{},{:.4},{},{},{},{}\n",
            p.eps2,
            p.lambda_theory,
            opt(p.lambda_fit.as_ref().map(|f| f.exponent)),
            opt(p.lambda_fit.as_ref().map(|f| f.stderr)),
            p.beta_theory,
            opt(p.beta_fit.as_ref().map(|f| f.exponent)),
            opt(p.beta_fit.as_ref().map(|f| f.stderr)),
            flo,
            fhi
        ));
    }
    s
}

/// Runs every sweep point (in parallel up to `jobs`) and writes per-point
/// CSVs, `summary.csv`, `summary.json` and a manifest into `out`.
pub fn run_fig1(s: &Fig1Settings, out: &Path, jobs: usize) -> Result<Vec<Fig1Point>, CliError> {
    let mut manifest = Manifest::new("reproduce-fig1");
    manifest.config_digest = params_digest(s);
    manifest.model = "two-state-full".into();
    manifest.seeds = vec![s.seed, s.seed.wrapping_add(1)];
    let result = (|| {
        s.validate()?;
        let results: Vec<Result<Fig1Point, CliError>> = thread_pool(jobs).install(|| {
            s.eps2
                .par_iter()
                .map(|&e| {
                    let (point, pdf, psd) = fig1_point(s, e)?;
                    write_file(out, &point.pdf_file, pdf.to_csv())?;
                    write_file(out, &point.psd_file, psd.to_csv())?;
                    Ok(point)
                })
                .collect()
        });
        let points: Vec<Fig1Point> = results.into_iter().collect::<Result<_, _>>()?;
        write_file(out, "summary.csv", fig1_summary_csv(&points))?;
        write_json(
            out,
            "summary.json",
            &serde_json::json!({ "settings": s, "points": points }),
        )?;
        Ok(points)
    })();
    if let Ok(points) = &result {
        manifest.outputs = vec!["summary.csv".into(), "summary.json".into()];
        for p in points {
            manifest.outputs.push(p.pdf_file.clone());
            manifest.outputs.push(p.psd_file.clone());
        }
    }
    manifest.finish(out, &result)?;
    result
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig3Settings {
    pub params: ThreeStateParams,
    pub t_end: f64,
    pub sample_dt: f64,
    pub kappa: f64,
    pub segment_len: usize,
    pub bins_per_decade: usize,
    /// Return window of the headline result.
    pub window_t: f64,
    /// Extra windows reported for sensitivity.
    pub extra_windows: Vec<f64>,
    /// Density fit window; the `[x_p50, x_p999]` default when unset.
    pub pdf_fit: Option<(f64, f64)>,
    /// Frequency window of the fractured fit; the default PSD fit range when unset.
    pub psd_fit: Option<(f64, f64)>,
    pub seed: u64,
}

impl Default for Fig3Settings {
    fn default() -> Self {
        Fig3Settings {
            params: ThreeStateParams {
                eps_cf: 3.0,
                eps_fc: 3.0,
                eps_cc: 3.0,
                big_h: 100.0,
                h1: 1.0,
                alpha: 2.0,
                r0: 1.0,
                n: 1000,
            },
            t_end: 1048576.0 * 1e-2,
            sample_dt: 1e-2,
            kappa: 0.1,
            segment_len: 1 << 14,
            bins_per_decade: 10,
            window_t: 1.0,
            extra_windows: vec![0.1, 10.0],
            pdf_fit: None,
            psd_fit: None,
            seed: 3,
        }
    }
}

impl Fig3Settings {
    pub fn smoke() -> Self {
        Fig3Settings {
            t_end: 300.0,
            segment_len: 1 << 10,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.params.validate()?;
        let ok = self.t_end > 0.0
            && self.sample_dt > 0.0
            && self.kappa > 0.0
            && self.segment_len.is_power_of_two()
            && self.window_t > 0.0
            && self.extra_windows.iter().all(|w| *w > 0.0)
            && [self.pdf_fit, self.psd_fit]
                .iter()
                .flatten()
                .all(|(lo, hi)| *lo > 0.0 && hi > lo);
        if ok {
            Ok(())
        } else {
            Err(CliError::Config(format!("invalid fig3 settings: {self:?}")))
        }
    }

    /// Return windows in report order; the trailing 0 stands for |p|.
    fn windows(&self) -> Vec<f64> {
        std::iter::once(self.window_t)
            .chain(self.extra_windows.iter().copied())
            .chain(std::iter::once(0.0))
            .collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Fig3Window {
    /// `abs_r` for windowed returns, `abs_p` for the instantaneous |p|.
    pub series: String,
    /// Return window; 0 for `abs_p`.
    pub window_t: f64,
    pub lambda_fit: Option<FitSummary>,
    #[serde(skip)]
    pub fracture: Option<FracturedFit>,
    pub fracture_summary: Option<serde_json::Value>,
    pub improvement: Option<f64>,
    pub single_beta: Option<f64>,
    pub samples: u64,
    pub pdf_file: String,
    pub psd_file: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Fig3Result {
    pub steps: u64,
    pub samples: u64,
    /// Headline window first, then the sensitivity windows, then |p|.
    pub windows: Vec<Fig3Window>,
}

struct SeriesStats {
    /// `None` streams |p| itself.
    returns: Option<ReturnStream>,
    hist: LogHistogram,
    welch: Welch,
    count: u64,
}

impl SeriesStats {
    fn push(&mut self, p: f64) {
        let v = match &mut self.returns {
            Some(rs) => match rs.push(p) {
                Some(r) => r.abs(),
                None => return,
            },
            None => p.abs(),
        };
        self.hist.add(v, 1.0);
        self.welch.push(v);
        self.count += 1;
    }
}

struct ReturnObserver {
    r0: f64,
    streams: Vec<SeriesStats>,
    error: Option<herdlab_core::Error>,
}

impl Observer for ReturnObserver {
    fn sample(&mut self, _t: f64, x: &[f64]) {
        let p = match log_price(x[0], x[1], self.r0) {
            Ok(p) => p,
            Err(e) => {
                self.error.get_or_insert(e);
                return;
            }
        };
        for s in &mut self.streams {
            s.push(p);
        }
    }
}

/// Integrates the transformed three-group SDE once and analyses `|r|` for
/// every configured return window.
pub fn fig3_run(
    s: &Fig3Settings,
) -> Result<(Fig3Result, Vec<(EmpiricalPdf, SpectralDensity)>), CliError> {
    s.validate()?;
    let model = SdeModel::ThreeStateTransformed(s.params);
    let mut cfg = IntegratorConfig::for_model(&model, s.sample_dt);
    cfg.kappa = s.kappa;
    cfg.max_dt = s.sample_dt;
    let mut obs = ReturnObserver {
        r0: s.params.r0,
        streams: s
            .windows()
            .into_iter()
            .map(|w| {
                Ok(SeriesStats {
                    returns: if w > 0.0 {
                        Some(ReturnStream::new(w, s.sample_dt)?)
                    } else {
                        None
                    },
                    hist: LogHistogram::new(1e-8, 1e4, s.bins_per_decade)?,
                    welch: Welch::new(s.segment_len, 0.5, s.sample_dt)?,
                    count: 0,
                })
            })
            .collect::<Result<_, herdlab_core::Error>>()?,
        error: None,
    };
    let stats: IntegrationStats =
        integrate_with(&model, &[0.5, 0.0], s.t_end, &cfg, s.seed, &mut obs)?;
    if let Some(e) = obs.error {
        return Err(e.into());
    }
    let mut windows = Vec::new();
    let mut curves = Vec::new();
    for (w, st) in s.windows().into_iter().zip(obs.streams) {
        let pdf = st.hist.to_pdf();
        let psd = st.welch.finish()?.log_binned(s.bins_per_decade);
        let (series, stem) = if w > 0.0 {
            ("abs_r", format!("fig3_T{w}"))
        } else {
            ("abs_p", "fig3_abs_p".to_string())
        };
        let psd_range = s.psd_fit.unwrap_or_else(|| default_psd_fit_range(&psd));
        let pdf_range = s.pdf_fit.unwrap_or_else(|| default_pdf_fit_range(&pdf));
        let fracture = fit_fractured(&psd.restricted(psd_range), &[]).ok();
        windows.push(Fig3Window {
            series: series.into(),
            window_t: w,
            lambda_fit: fit_powerlaw(&pdf.points(), pdf_range)
                .ok()
                .as_ref()
                .map(FitSummary::from),
            fracture_summary: fracture.as_ref().map(|f| f.summary_json()),
            improvement: fracture.as_ref().map(|f| f.improvement()),
            single_beta: fracture.as_ref().map(|f| f.single_exponent),
            fracture,
            samples: st.count,
            pdf_file: format!("{stem}_pdf.csv"),
            psd_file: format!("{stem}_psd.csv"),
        });
        curves.push((pdf, psd));
    }
    Ok((
        Fig3Result {
            steps: stats.steps,
            samples: stats.samples,
            windows,
        },
        curves,
    ))
}

pub fn run_fig3(s: &Fig3Settings, out: &Path) -> Result<Fig3Result, CliError> {
    let mut manifest = Manifest::new("reproduce-fig3");
    manifest.config_digest = params_digest(s);
    manifest.model = "three-state-transformed".into();
    manifest.params_digest = params_digest(&s.params);
    manifest.seeds = vec![s.seed];
    let result = (|| {
        let (res, curves) = fig3_run(s)?;
        for (w, (pdf, psd)) in res.windows.iter().zip(&curves) {
            write_file(out, &w.pdf_file, pdf.to_csv())?;
            write_file(out, &w.psd_file, psd.to_csv())?;
        }
        write_json(
            out,
            "summary.json",
            &serde_json::json!({ "settings": s, "result": res }),
        )?;
        Ok(res)
    })();
    if let Ok(res) = &result {
        manifest.outputs.push("summary.json".into());
        for w in &res.windows {
            manifest.outputs.push(w.pdf_file.clone());
            manifest.outputs.push(w.psd_file.clone());
        }
    }
    manifest.finish(out, &result)?;
    result
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psd_window_moves_up_with_eps2() {
        assert_eq!(fig1_psd_window(0.1, 0.1), (1.0, 100.0));
        let (a, _) = fig1_psd_window(0.1, 1.0);
        let (b, _) = fig1_psd_window(0.1, 3.0);
        assert!(a < b);
        let (lo, hi) = fig1_psd_window(0.1, 2.0);
        assert!((hi / lo - 100.0).abs() < 1e-9);
    }

    #[test]
    fn settings_validate() {
        assert!(Fig1Settings::default().validate().is_ok());
        assert!(Fig3Settings::default().validate().is_ok());
        let bad = Fig1Settings {
            eps2: vec![],
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn smoke_sweep_writes_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let s = Fig1Settings {
            eps2: vec![1.0],
            psd_t_end: 0.5,
            pdf_t_end: 20.0,
            ..Fig1Settings::smoke()
        };
        let pts = run_fig1(&s, dir.path(), 1).unwrap();
        assert_eq!(pts.len(), 1);
        assert!(pts[0].psd_samples > 1000);
        for f in [
            "summary.csv",
            "summary.json",
            "manifest.json",
            &pts[0].pdf_file,
            &pts[0].psd_file,
        ] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
    }
}
