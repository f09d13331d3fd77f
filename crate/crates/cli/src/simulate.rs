use std::path::Path;

use herdlab_core::jump::{simulate_jump, JumpModel};
use herdlab_core::model::PopulationState;
use herdlab_core::sde::{integrate_sde, Sde};
use herdlab_core::trajectory::{params_digest, Trajectory};
use rayon::prelude::*;

use crate::config::{ExperimentConfig, Model, OutputFormat};
use crate::error::CliError;
use crate::manifest::{write_file, Manifest, RunRecord};

/// Worker pool limited to `jobs` threads (0 means one per core).
pub fn thread_pool(jobs: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .expect("thread pool")
}

pub fn jump_initial(
    cfg: &ExperimentConfig,
    model: &JumpModel,
) -> Result<PopulationState, CliError> {
    let Some(init) = &cfg.model.initial else {
        return Ok(model.default_initial());
    };
    let counts = cfg.jump_initial_counts(init)?;
    let n = model.n();
    let state = match (model, counts.as_slice()) {
        (JumpModel::TwoState(_), &[x]) => PopulationState::two(x, n)?,
        (JumpModel::ThreeState(_) | JumpModel::GeneralThreeState(_), &[a, b, c]) => {
            if a as u64 + b as u64 + c as u64 != n as u64 {
                return Err(CliError::Config(format!(
                    "initial counts must sum to N = {n}"
                )));
            }
            PopulationState::three([a, b, c])?
        }
        _ => {
            return Err(CliError::Config(
                "initial state does not match the model".into(),
            ))
        }
    };
    Ok(state)
}

pub fn sde_initial(cfg: &ExperimentConfig, model: &herdlab_core::sde::SdeModel) -> Vec<f64> {
    if let Some(init) = &cfg.model.initial {
        return init.clone();
    }
    use herdlab_core::sde::SdeModel::*;
    match model {
        TwoStateFull { .. } | TwoStateAsymptotic { .. } | GeneralClass { .. } => vec![1.0],
        ThreeStateFp(_) => vec![1.0 / 3.0, 1.0 / 3.0],
        ThreeStateTransformed(_) => vec![1.0 / 3.0, 0.0],
    }
}

/// One ensemble member.
pub fn simulate_member(cfg: &ExperimentConfig, seed: u64) -> Result<Trajectory, CliError> {
    let traj = match cfg.model()? {
        Model::Jump(m) => {
            let x0 = jump_initial(cfg, m)?;
            simulate_jump(m, &x0, cfg.t_end, cfg.sample_dt, seed)?
        }
        Model::Sde(m) => {
            let x0 = sde_initial(cfg, m);
            integrate_sde(m, &x0, cfg.t_end, &cfg.integrator_config(m), seed)?
        }
    };
    Ok(traj)
}

pub fn model_identity(cfg: &ExperimentConfig) -> Result<(String, String), CliError> {
    Ok(match cfg.model()? {
        Model::Jump(m) => {
            use herdlab_core::jump::ChannelRates;
            (m.label(), m.digest())
        }
        Model::Sde(m) => (m.label(), m.digest()),
    })
}

pub fn encode(traj: &Trajectory, format: OutputFormat) -> Vec<u8> {
    match format {
        OutputFormat::Csv => traj.to_csv().into_bytes(),
        OutputFormat::Binary => traj.to_binary(),
    }
}

/// Reads a trajectory, choosing the format from the leading magic bytes.
pub fn load_trajectory(path: &Path) -> Result<Trajectory, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    if bytes.starts_with(b"HLTJ") {
        return Ok(Trajectory::from_binary(&bytes)?);
    }
    let text = String::from_utf8(bytes).map_err(|e| CliError::io(path, e))?;
    Ok(Trajectory::from_csv(&text)?)
}

/// Simulates every ensemble member, writes one trajectory file each and a
/// manifest. The manifest is written even when a run fails.
pub fn run_simulate(cfg: &ExperimentConfig, out: &Path, jobs: usize) -> Result<Manifest, CliError> {
    let mut manifest = Manifest::new("simulate");
    manifest.config_digest = params_digest(cfg);
    manifest.seeds = cfg.seeds();
    let result = (|| -> Result<Vec<RunRecord>, CliError> {
        cfg.validate()?;
        let (model, digest) = model_identity(cfg)?;
        manifest.model = model;
        manifest.params_digest = digest;
        std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
        let seeds = cfg.seeds();
        let records: Vec<Result<RunRecord, CliError>> = thread_pool(jobs).install(|| {
            seeds
                .par_iter()
                .enumerate()
                .map(|(i, &seed)| {
                    let traj = simulate_member(cfg, seed)?;
                    let name = format!("{}_{i:03}.{}", cfg.name, cfg.format.extension());
                    write_file(out, &name, encode(&traj, cfg.format))?;
                    Ok(RunRecord {
                        index: i,
                        seed,
                        file: name,
                        rows: traj.len(),
                        absorbed: traj.meta.absorbed,
                    })
                })
                .collect()
        });
        records.into_iter().collect()
    })();
    if let Ok(runs) = &result {
        manifest.runs = runs.clone();
    }
    let manifest = manifest.finish(out, &result)?;
    result.map(|_| manifest)
}
