use std::path::{Path, PathBuf};

use herdlab_core::jump::JumpModel;
use herdlab_core::market::{price_series, returns};
use herdlab_core::sde::SdeModel;
use herdlab_core::spectral::{
    default_pdf_fit_range, default_psd_fit_range, empirical_pdf, fit_fractured, fit_powerlaw, psd,
    EmpiricalPdf, FracturedFit, PowerLawFit, SpectralDensity,
};
use herdlab_core::trajectory::{params_digest, Trajectory};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{AnalysisConfig, ExperimentConfig, Model};
use crate::error::CliError;
use crate::manifest::{write_file, write_json, Manifest};
use crate::simulate::{load_trajectory, model_identity, simulate_member, thread_pool};

#[derive(Debug, Clone, Serialize)]
pub struct FitSummary {
    pub exponent: f64,
    pub stderr: f64,
    pub range: (f64, f64),
    pub points: usize,
}

impl From<&PowerLawFit> for FitSummary {
    fn from(f: &PowerLawFit) -> Self {
        FitSummary {
            exponent: f.exponent,
            stderr: f.stderr,
            range: f.range,
            points: f.points,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SeriesAnalysis {
    pub samples: usize,
    pub pdf: EmpiricalPdf,
    /// Log-binned PSD used for all fits.
    pub psd: SpectralDensity,
    pub pdf_fit: Option<PowerLawFit>,
    pub psd_fit: Option<PowerLawFit>,
    pub fracture: Option<FracturedFit>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisRecord {
    pub source: String,
    pub series: String,
    pub samples: usize,
    pub pdf_file: String,
    pub psd_file: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pdf_fit: Option<FitSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub psd_fit: Option<FitSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fracture: Option<serde_json::Value>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Impact factor used when mapping a trajectory to prices.
fn impact(cfg: &ExperimentConfig) -> f64 {
    match cfg.model() {
        Ok(Model::Jump(JumpModel::ThreeState(p))) => p.r0,
        Ok(Model::Sde(SdeModel::ThreeStateTransformed(p) | SdeModel::ThreeStateFp(p))) => p.r0,
        _ => 1.0,
    }
}

/// The series selected by the analysis block, after burn-in: either a raw
/// column or `|r(t)|` for a return window.
pub fn select_series(
    traj: &Trajectory,
    cfg: &ExperimentConfig,
) -> Result<(String, Vec<f64>), CliError> {
    let traj = traj.without_burn_in(cfg.burn_in);
    if let Some(w) = cfg.analysis.window_t {
        let r = returns(&price_series(&traj, impact(cfg))?, w)?;
        return Ok(("abs_r".into(), r.values.iter().map(|v| v.abs()).collect()));
    }
    let j = match &cfg.analysis.column {
        Some(name) => traj
            .column_index(name)
            .ok_or_else(|| CliError::Config(format!("no column '{name}' in {:?}", traj.columns)))?,
        None => 0,
    };
    Ok((traj.columns[j].clone(), traj.column(j)))
}

/// PDF and PSD of one series with the configured fits. Fits that cannot be
/// made (too few points in range) are left out rather than failing.
pub fn analyze_series(
    series: &[f64],
    dt: f64,
    a: &AnalysisConfig,
) -> Result<SeriesAnalysis, CliError> {
    let positive: Vec<f64> = series.iter().copied().filter(|v| *v > 0.0).collect();
    let pdf = empirical_pdf(&positive, a.bins_per_decade)?;
    let spectrum = psd(series, dt, a.segment_len, a.overlap)?.log_binned(a.bins_per_decade);
    let pdf_range = a
        .pdf_fit
        .map_or_else(|| default_pdf_fit_range(&pdf), |r| (r[0], r[1]));
    let psd_range = a
        .psd_fit
        .map_or_else(|| default_psd_fit_range(&spectrum), |r| (r[0], r[1]));
    let pdf_fit = fit_powerlaw(&pdf.points(), pdf_range).ok();
    let psd_fit = fit_powerlaw(&spectrum.points(), psd_range).ok();
    let fracture = if a.fracture {
        fit_fractured(&spectrum, &[]).ok()
    } else {
        None
    };
    Ok(SeriesAnalysis {
        samples: series.len(),
        pdf,
        psd: spectrum,
        pdf_fit,
        psd_fit,
        fracture,
    })
}

fn analyze_one(
    cfg: &ExperimentConfig,
    traj: &Trajectory,
    source: &str,
    stem: &str,
    out: &Path,
) -> Result<AnalysisRecord, CliError> {
    let (name, series) = select_series(traj, cfg)?;
    let res = analyze_series(&series, traj.dt, &cfg.analysis)?;
    let pdf_file = write_file(out, &format!("{stem}_pdf.csv"), res.pdf.to_csv())?;
    let psd_file = write_file(out, &format!("{stem}_psd.csv"), res.psd.to_csv())?;
    let mut warnings = Vec::new();
    if res.pdf_fit.is_none() {
        warnings.push("pdf fit range holds too few points".into());
    }
    if res.psd_fit.is_none() {
        warnings.push("psd fit range holds too few points".into());
    }
    if cfg.analysis.fracture && res.fracture.is_none() {
        warnings.push("fractured fit needs two decades of frequency".into());
    }
    Ok(AnalysisRecord {
        source: source.into(),
        series: name,
        samples: res.samples,
        pdf_file,
        psd_file,
        pdf_fit: res.pdf_fit.as_ref().map(FitSummary::from),
        psd_fit: res.psd_fit.as_ref().map(FitSummary::from),
        fracture: res.fracture.as_ref().map(|f| f.summary_json()),
        warnings,
    })
}

/// Analyses the given trajectory files, or simulates the configured
/// ensemble in memory when `inputs` is empty.
pub fn run_analyze(
    cfg: &ExperimentConfig,
    inputs: &[PathBuf],
    out: &Path,
    jobs: usize,
) -> Result<Manifest, CliError> {
    let mut manifest = Manifest::new("analyze");
    manifest.config_digest = params_digest(cfg);
    let result = (|| -> Result<Vec<AnalysisRecord>, CliError> {
        cfg.validate()?;
        let (model, digest) = model_identity(cfg)?;
        manifest.model = model;
        manifest.params_digest = digest;
        let pool = thread_pool(jobs);
        let records: Vec<Result<AnalysisRecord, CliError>> = if inputs.is_empty() {
            manifest.seeds = cfg.seeds();
            let seeds = cfg.seeds();
            pool.install(|| {
                seeds
                    .par_iter()
                    .enumerate()
                    .map(|(i, &seed)| {
                        let traj = simulate_member(cfg, seed)?;
                        analyze_one(
                            cfg,
                            &traj,
                            &format!("seed {seed}"),
                            &format!("{}_{i:03}", cfg.name),
                            out,
                        )
                    })
                    .collect()
            })
        } else {
            pool.install(|| {
                inputs
                    .par_iter()
                    .enumerate()
                    .map(|(i, path)| {
                        let traj = load_trajectory(path)?;
                        analyze_one(
                            cfg,
                            &traj,
                            &path.display().to_string(),
                            &format!("{}_{i:03}", cfg.name),
                            out,
                        )
                    })
                    .collect()
            })
        };
        let records: Vec<AnalysisRecord> = records.into_iter().collect::<Result<_, _>>()?;
        write_json(out, "analysis.json", &records)?;
        Ok(records)
    })();
    if let Ok(records) = &result {
        manifest.outputs.push("analysis.json".into());
        for r in records {
            manifest.outputs.push(r.pdf_file.clone());
            manifest.outputs.push(r.psd_file.clone());
        }
    }
    let manifest = manifest.finish(out, &result)?;
    result.map(|_| manifest)
}
