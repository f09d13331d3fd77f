//! Self-checks against exact and synthetic ground truth.
//!
//! `quick` runs the checks that finish in seconds; `full` adds the
//! simulation-versus-oracle comparisons that take minutes.

use std::path::Path;

use herdlab_core::jump::{occupation, simulate_jump, ChannelRates, JumpModel};
use herdlab_core::model::{PopulationState, ThreeStateParams, TwoStateParams};
use herdlab_core::oracle::{
    mood_atoms, stationary, stationary_birth_death, stationary_three_state, GeneratorMatrix,
    SolveMethod, StateSpace,
};
use herdlab_core::sde::{
    decomposition_residual, diffusion_decompose, financial_d2, integrate_sde, IntegratorConfig,
    SdeModel,
};
use herdlab_core::spectral::{
    default_pdf_fit_range, default_psd_fit_range, empirical_pdf, fit_fractured, fit_powerlaw, psd,
};
use herdlab_core::stats::{ks_sample_vs_atoms, ks_two_sample, tv_distance};
use herdlab_core::synthetic::{powerlaw_samples, random_psd, two_slope_spectrum, white_noise};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::manifest::{write_json, Manifest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Quick,
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub metric: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl Check {
    /// Passes when `value < threshold` (or `<=` when `inclusive`).
    fn below(name: &str, metric: &str, value: f64, threshold: f64, inclusive: bool) -> Check {
        let passed = if inclusive {
            value <= threshold
        } else {
            value < threshold
        };
        Check {
            name: name.into(),
            metric: metric.into(),
            value,
            threshold,
            passed: passed && value.is_finite(),
        }
    }

    fn failed(name: &str, metric: &str, threshold: f64, err: impl std::fmt::Display) -> Check {
        Check {
            name: name.into(),
            metric: format!("{metric} (error: {err})"),
            value: f64::NAN,
            threshold,
            passed: false,
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{} {}: {} = {:.4e} (threshold {:.4e})",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.metric,
            self.value,
            self.threshold
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub level: Level,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn failed(&self) -> usize {
        self.checks.iter().filter(|c| !c.passed).count()
    }
}

/// Wraps a model and multiplies one channel's rate by `factor`. Used to
/// confirm that the checks detect a wrong rate.
pub struct Faulty<M> {
    pub inner: M,
    pub channel: usize,
    pub factor: f64,
}

impl<M: ChannelRates> ChannelRates for Faulty<M> {
    fn channels(&self) -> &[(usize, usize)] {
        self.inner.channels()
    }

    fn rates(&self, counts: &[u32; 3], out: &mut [f64]) {
        self.inner.rates(counts, out);
        out[self.channel] *= self.factor;
    }

    fn label(&self) -> String {
        format!("faulty-{}", self.inner.label())
    }

    fn digest(&self) -> String {
        self.inner.digest()
    }

    fn columns(&self) -> Vec<String> {
        self.inner.columns()
    }

    fn observe(&self, counts: &[u32; 3], out: &mut Vec<f64>) {
        self.inner.observe(counts, out)
    }
}

/// Optional fault applied to the simulated side of the jump checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fault {
    pub channel: usize,
    pub factor: f64,
}

fn jump_model(p: TwoStateParams, fault: Option<Fault>) -> Faulty<JumpModel> {
    let f = fault.unwrap_or(Fault {
        channel: 0,
        factor: 1.0,
    });
    Faulty {
        inner: JumpModel::TwoState(p),
        channel: f.channel,
        factor: f.factor,
    }
}

/// Jump simulation at N = 20 against the detailed-balance pmf.
pub fn check_jump_vs_oracle(t_end: f64, seed: u64, fault: Option<Fault>) -> Check {
    const NAME: &str = "jump_vs_oracle_n20";
    const METRIC: &str = "TV(occupation, detailed balance)";
    let p = TwoStateParams::kirman(0.3, 0.5, 1.0, 20);
    let run = || -> Result<f64, CliError> {
        let exact = stationary_birth_death(&p)?;
        let model = jump_model(p, fault);
        let traj = simulate_jump(&model, &PopulationState::two(10, 20)?, t_end, 0.05, seed)?;
        let occ = occupation(&traj.without_burn_in(0.01), 0, 20);
        Ok(tv_distance(&occ, &exact))
    };
    match run() {
        Ok(v) => Check::below(NAME, METRIC, v, 0.02, false),
        Err(e) => Check::failed(NAME, METRIC, 0.02, e),
    }
}

/// Stationary `x = X/N` of the jump process at N = 1000 against the
/// y-equation without feedback, mapped through `x = y/(1 + y)`.
pub fn check_jump_vs_sde(t_jump: f64, t_sde: f64, seed: u64, fault: Option<Fault>) -> Check {
    const NAME: &str = "jump_vs_sde_n1000";
    const METRIC: &str = "KS(jump x, SDE x)";
    let (s1, s2, h) = (2.0, 3.0, 1.0);
    let run = || -> Result<f64, CliError> {
        let p = TwoStateParams::kirman(s1, s2, h, 1000);
        let model = jump_model(p, fault);
        let traj = simulate_jump(
            &model,
            &PopulationState::two(400, 1000)?,
            t_jump,
            0.05,
            seed,
        )?;
        let xj: Vec<f64> = traj
            .without_burn_in(0.02)
            .column(0)
            .iter()
            .map(|v| v / 1000.0)
            .collect();
        let sde = SdeModel::TwoStateFull {
            eps1: s1 / h,
            eps2: s2 / h,
            alpha: 0.0,
        };
        let cfg = IntegratorConfig::for_model(&sde, 0.05);
        let ys = integrate_sde(&sde, &[0.7], t_sde, &cfg, seed.wrapping_add(1))?;
        let xs: Vec<f64> = ys
            .without_burn_in(0.02)
            .column(0)
            .iter()
            .map(|y| y / (1.0 + y))
            .collect();
        Ok(ks_two_sample(&xj, &xs))
    };
    match run() {
        Ok(v) => Check::below(NAME, METRIC, v, 0.05, false),
        Err(e) => Check::failed(NAME, METRIC, 0.05, e),
    }
}

pub fn fig_params(n: u32, alpha: f64) -> ThreeStateParams {
    ThreeStateParams {
        eps_cf: 3.0,
        eps_fc: 3.0,
        eps_cc: 3.0,
        big_h: 100.0,
        h1: 1.0,
        alpha,
        r0: 1.0,
        n,
    }
}

/// Mood marginal of the exact three-group chain at N = 60 against samples
/// of the transformed SDE.
pub fn check_mood_vs_oracle(t_end: f64, seed: u64) -> Check {
    const NAME: &str = "mood_oracle_vs_sde_n60";
    const METRIC: &str = "KS(SDE xi, oracle xi)";
    let p = fig_params(60, 0.0);
    let run = || -> Result<f64, CliError> {
        let pi = stationary_three_state(&p)?;
        let atoms = mood_atoms(&pi, StateSpace::Simplex { n: p.n });
        let sde = SdeModel::ThreeStateTransformed(p);
        let cfg = IntegratorConfig::for_model(&sde, 0.01);
        let traj = integrate_sde(&sde, &[0.5, 0.0], t_end, &cfg, seed)?;
        let xi = traj.without_burn_in(0.01).column(1);
        Ok(ks_sample_vs_atoms(&xi, &atoms))
    };
    match run() {
        Ok(v) => Check::below(NAME, METRIC, v, 0.07, false),
        Err(e) => Check::failed(NAME, METRIC, 0.07, e),
    }
}

/// Round trip of the 2×2 decomposition on random positive-definite input.
pub fn check_decomposition(count: usize, seed: u64) -> Check {
    const NAME: &str = "decompose_round_trip";
    const METRIC: &str = "max Frobenius residual";
    let mut worst = 0.0f64;
    for d2 in random_psd(count, seed) {
        match diffusion_decompose(d2) {
            Ok(s) => worst = worst.max(decomposition_residual(s, d2)),
            Err(e) => return Check::failed(NAME, METRIC, 1e-12, e),
        }
    }
    Check::below(NAME, METRIC, worst, 1e-12, true)
}

/// Largest ratio of the off-diagonal element of S to its smaller diagonal
/// element over a grid of interior points (every fraction ≥ 0.1).
pub fn financial_offdiagonal_ratio(p: &ThreeStateParams) -> Result<f64, CliError> {
    let mut worst = 0.0f64;
    let steps = 40;
    for i in 0..=steps {
        for j in 0..=steps {
            let n_f = 0.1 + 0.8 * i as f64 / steps as f64;
            let n_p = 0.1 + 0.8 * j as f64 / steps as f64;
            if 1.0 - n_f - n_p < 0.1 - 1e-12 {
                continue;
            }
            let s = diffusion_decompose(financial_d2(n_f, n_p, p))?;
            worst = worst.max(s[0][1].abs() / s[0][0].min(s[1][1]));
        }
    }
    Ok(worst)
}

pub fn check_financial_diagonal() -> Check {
    const NAME: &str = "financial_diffusion_nearly_diagonal";
    const METRIC: &str = "max |S_fp| / min(S_ff, S_pp)";
    match financial_offdiagonal_ratio(&fig_params(1000, 0.0)) {
        Ok(v) => Check::below(NAME, METRIC, v, 0.15, true),
        Err(e) => Check::failed(NAME, METRIC, 0.15, e),
    }
}

pub fn check_white_noise(seed: u64) -> Check {
    const NAME: &str = "white_noise_psd_slope";
    const METRIC: &str = "|beta|";
    let run = || -> Result<f64, CliError> {
        let s = psd(&white_noise(1 << 20, seed), 1.0, 1 << 14, 0.5)?.log_binned(10);
        Ok(fit_powerlaw(&s.points(), default_psd_fit_range(&s))?
            .exponent
            .abs())
    };
    match run() {
        Ok(v) => Check::below(NAME, METRIC, v, 0.05, false),
        Err(e) => Check::failed(NAME, METRIC, 0.05, e),
    }
}

pub fn check_powerlaw_samples(seed: u64) -> Check {
    const NAME: &str = "powerlaw_tail_recovery";
    const METRIC: &str = "|lambda - 3|";
    let run = || -> Result<f64, CliError> {
        let pdf = empirical_pdf(&powerlaw_samples(1_000_000, 3.0, 1.0, seed), 10)?;
        Ok((fit_powerlaw(&pdf.points(), default_pdf_fit_range(&pdf))?.exponent - 3.0).abs())
    };
    match run() {
        Ok(v) => Check::below(NAME, METRIC, v, 0.05, true),
        Err(e) => Check::failed(NAME, METRIC, 0.05, e),
    }
}

/// Both slopes within 0.05 and the break within a factor of 2; the metric
/// is the largest of the three errors after scaling the break error onto
/// the slope tolerance.
pub fn check_two_slope(seed: u64) -> Vec<Check> {
    let (b_low, b_high, f_break) = (0.4, 1.4, 0.05);
    let s = two_slope_spectrum((1e-4, 10.0), 20, f_break, b_low, b_high, 0.05, seed);
    match fit_fractured(&s, &[]) {
        Ok(f) => vec![
            Check::below(
                "two_slope_high",
                "|beta1 - 1.4|",
                (f.beta1 - b_high).abs(),
                0.05,
                true,
            ),
            Check::below(
                "two_slope_low",
                "|beta2 - 0.4|",
                (f.beta2 - b_low).abs(),
                0.05,
                true,
            ),
            Check::below(
                "two_slope_break",
                "|log2(f_break / true)|",
                (f.f_break / f_break).log2().abs(),
                1.0,
                true,
            ),
        ],
        Err(e) => vec![Check::failed("two_slope", "fractured fit", 0.05, e)],
    }
}

/// Detailed-balance pmf against the dense null space of the generator.
pub fn check_detailed_balance() -> Check {
    const NAME: &str = "detailed_balance_vs_null_space";
    const METRIC: &str = "TV";
    let p = TwoStateParams::kirman(0.4, 0.7, 1.0, 60).with_feedback(0.5);
    let run = || -> Result<f64, CliError> {
        let a = stationary_birth_death(&p)?;
        let b = stationary(&GeneratorMatrix::two_state(&p), SolveMethod::Dense)?;
        Ok(tv_distance(&a, &b))
    };
    match run() {
        Ok(v) => Check::below(NAME, METRIC, v, 1e-10, true),
        Err(e) => Check::failed(NAME, METRIC, 1e-10, e),
    }
}

pub fn run_checks(level: Level, seed: u64, fault: Option<Fault>) -> Report {
    let mut checks = vec![
        check_detailed_balance(),
        check_decomposition(1000, seed),
        check_financial_diagonal(),
        check_white_noise(seed),
        check_powerlaw_samples(seed),
    ];
    checks.extend(check_two_slope(seed));
    match level {
        Level::Quick => checks.push(check_jump_vs_oracle(2e4, seed, fault)),
        Level::Full => {
            checks.push(check_jump_vs_oracle(2e5, seed, fault));
            checks.push(check_jump_vs_sde(500.0, 5000.0, seed, fault));
            checks.push(check_mood_vs_oracle(500.0, seed));
        }
    }
    Report { level, checks }
}

/// Runs the checks, writes `report.json` and a manifest into `out` and
/// fails when any check fails.
pub fn run_validate(
    level: Level,
    seed: u64,
    fault: Option<Fault>,
    out: &Path,
) -> Result<Report, CliError> {
    let mut manifest = Manifest::new("validate");
    manifest.seeds = vec![seed];
    let report = run_checks(level, seed, fault);
    let result = (|| {
        write_json(out, "report.json", &report)?;
        match report.failed() {
            0 => Ok(()),
            failed => Err(CliError::ChecksFailed {
                failed,
                total: report.checks.len(),
            }),
        }
    })();
    manifest.outputs.push("report.json".into());
    manifest.finish(out, &result)?;
    result.map(|_| report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cheap_checks_pass() {
        assert!(check_detailed_balance().passed);
        assert!(check_decomposition(200, 1).passed);
        assert!(check_two_slope(1).iter().all(|c| c.passed));
    }

    #[test]
    fn offdiagonal_ratio_shrinks_with_speed_ratio() {
        let mut p = fig_params(1000, 0.0);
        let at_100 = financial_offdiagonal_ratio(&p).unwrap();
        p.big_h = 1000.0;
        let at_1000 = financial_offdiagonal_ratio(&p).unwrap();
        assert!(at_1000 < 0.5 * at_100, "{at_1000} vs {at_100}");
        assert!(at_100 < 0.25);
    }

    #[test]
    fn fault_injection_is_detected() {
        let fault = Fault {
            channel: 0,
            factor: 1.5,
        };
        assert!(!check_jump_vs_oracle(5e3, 1, Some(fault)).passed);
    }

    #[test]
    fn check_lines_are_labelled() {
        let c = Check::below("x", "m", 0.5, 1.0, false);
        assert!(c.line().starts_with("PASS x"));
        let c = Check::below("x", "m", f64::NAN, 1.0, false);
        assert!(c.line().starts_with("FAIL"));
    }
}
