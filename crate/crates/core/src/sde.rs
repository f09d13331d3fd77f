//! Macroscopic models: drift/diffusion coefficients of every SDE variant,
//! the diffusion-matrix decomposition, and an adaptive Euler–Maruyama
//! integrator with reflecting boundaries.
//!
//! All equations are Itô and run in scaled time `t_s = h t`, except the
//! coupled fundamentalist/pessimist system which is written in model time
//! with the microscopic rates (`σ = ε·h₁`).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{pow, tau_three_state, ThreeStateParams};
use crate::trajectory::{params_digest, Trajectory, TrajectoryMeta};

/// `dy = [ε₁ + y(2 − ε₂)/τ(y)](1 + y) dt_s + sqrt(2y/τ(y)) (1 + y) dW_s`
/// with `τ(y) = y^(−α)`.
pub fn drift_diffusion_y_full(y: f64, eps1: f64, eps2: f64, alpha: f64) -> Result<(f64, f64)> {
    if !(y > 0.0) {
        return Err(Error::Domain(format!("y must be positive, got {y}")));
    }
    let inv_tau = pow(y, alpha);
    let drift = (eps1 + y * (2.0 - eps2) * inv_tau) * (1.0 + y);
    let diffusion = (2.0 * y * inv_tau).sqrt() * (1.0 + y);
    Ok((drift, diffusion))
}

/// Large-y limit: `dy = (2 − ε₂) y^(2+α) dt_s + sqrt(2 y^(3+α)) dW_s`.
pub fn drift_diffusion_y_asymptotic(y: f64, eps2: f64, alpha: f64) -> Result<(f64, f64)> {
    if !(y > 0.0) {
        return Err(Error::Domain(format!("y must be positive, got {y}")));
    }
    Ok((
        (2.0 - eps2) * pow(y, 2.0 + alpha),
        (2.0 * pow(y, 3.0 + alpha)).sqrt(),
    ))
}

/// General power-law class: `dx = (η − λ/2) x^(2η−1) dt_s + x^η dW_s`.
pub fn drift_diffusion_general(x: f64, eta: f64, lambda: f64) -> Result<(f64, f64)> {
    if !(x > 0.0) {
        return Err(Error::Domain(format!("x must be positive, got {x}")));
    }
    Ok(((eta - lambda / 2.0) * pow(x, 2.0 * eta - 1.0), pow(x, eta)))
}

/// Coupled fundamentalist/pessimist system in model time:
///
/// `dn_f = [(1 − n_f)σ_cf − n_f σ_fc] dt + sqrt(2h₁ n_f(1 − n_f)) dW₁`,
/// `dn_p = (1 − n_f − 2n_p) σ_cc dt + sqrt(2Hh₁ n_p(1 − n_f − n_p)) dW₂`.
///
/// The diffusion matrix is diagonal; the O(1/H) cross-coupling is dropped.
pub fn drift_diffusion_fp(
    n_f: f64,
    n_p: f64,
    p: &ThreeStateParams,
) -> Result<([f64; 2], [[f64; 2]; 2])> {
    let n_o = 1.0 - n_f - n_p;
    if !(n_f >= 0.0 && n_p >= 0.0 && n_o >= -1e-12) {
        return Err(Error::Domain(format!(
            "(n_f, n_p) = ({n_f}, {n_p}) outside the simplex"
        )));
    }
    let n_o = n_o.max(0.0);
    let drift = [
        (1.0 - n_f) * p.sigma_cf() - n_f * p.sigma_fc(),
        (1.0 - n_f - 2.0 * n_p) * p.sigma_cc(),
    ];
    let s_f = (2.0 * p.h1 * n_f * (1.0 - n_f)).max(0.0).sqrt();
    let s_p = (2.0 * p.big_h * p.h1 * n_p * n_o).sqrt();
    Ok((drift, [[s_f, 0.0], [0.0, s_p]]))
}

/// Second-order Fokker–Planck terms of the financial model, including the
/// cross term: `D_ff = h₁(1 − n_f)n_f`, `D_pp = Hh₁ n_p(1 − n_f − n_p) + h₁ n_f n_p`,
/// `D_fp = −h₁ n_f n_p`.
pub fn financial_d2(n_f: f64, n_p: f64, p: &ThreeStateParams) -> [[f64; 2]; 2] {
    let n_o = 1.0 - n_f - n_p;
    let ff = p.h1 * (1.0 - n_f) * n_f;
    let pp = p.big_h * p.h1 * n_p * n_o + p.h1 * n_f * n_p;
    let fp = -p.h1 * n_f * n_p;
    [[ff, fp], [fp, pp]]
}

/// Transformed system in `(n_f, ξ)`:
///
/// `dn_f = [(1 − n_f)ε_cf/τ − n_f ε_fc] dt_s + sqrt(2 n_f(1 − n_f)/τ) dW₁`,
/// `dξ = −2Hε_cc ξ/τ dt_s + sqrt(2H(1 − ξ²)/τ) dW₂`,
/// with τ = τ(n_f, ξ) the three-state feedback kernel.
pub fn drift_diffusion_transformed(
    n_f: f64,
    xi: f64,
    p: &ThreeStateParams,
) -> Result<([f64; 2], [f64; 2])> {
    if !(n_f > 0.0 && n_f < 1.0 && xi > -1.0 && xi < 1.0) {
        return Err(Error::Domain(format!(
            "(n_f, xi) = ({n_f}, {xi}) not interior"
        )));
    }
    let inv_tau = 1.0 / tau_three_state(n_f, xi, p.alpha)?;
    let drift = [
        (1.0 - n_f) * p.eps_cf * inv_tau - n_f * p.eps_fc,
        -2.0 * p.big_h * p.eps_cc * xi * inv_tau,
    ];
    let diffusion = [
        (2.0 * n_f * (1.0 - n_f) * inv_tau).sqrt(),
        (2.0 * p.big_h * (1.0 - xi * xi) * inv_tau).sqrt(),
    ];
    Ok((drift, diffusion))
}

/// Solves `D² = ½ S Sᵀ` for a symmetric `S` with non-negative diagonal.
///
/// With `S = Sᵀ` the system is `S² = 2D²`, so `S` is the principal square
/// root of `2D²`; it is real exactly when `D²` is positive semidefinite.
pub fn diffusion_decompose(d2: [[f64; 2]; 2]) -> Result<[[f64; 2]; 2]> {
    let [[a, b], [c, d]] = d2;
    let asym = (b - c).abs();
    if asym > 1e-12 * (b.abs() + c.abs()).max(1.0) {
        return Err(Error::NoRealSolution { residual: asym });
    }
    let b = 0.5 * (b + c);
    let (a, b, d) = (2.0 * a, 2.0 * b, 2.0 * d);
    let det = a * d - b * b;
    let trace = a + d;
    let tol = 1e-14 * trace.abs().max(1.0);
    if a < -tol || d < -tol || det < -tol * trace.abs().max(1.0) {
        let lam_min = 0.5 * (trace - ((a - d).powi(2) + 4.0 * b * b).sqrt());
        return Err(Error::NoRealSolution {
            residual: -lam_min / 2.0,
        });
    }
    let s = det.max(0.0).sqrt();
    let t = (trace + 2.0 * s).max(0.0).sqrt();
    if t == 0.0 {
        return Ok([[0.0; 2]; 2]);
    }
    Ok([[(a + s) / t, b / t], [b / t, (d + s) / t]])
}

/// Frobenius norm of `½ S Sᵀ − D²`.
pub fn decomposition_residual(s: [[f64; 2]; 2], d2: [[f64; 2]; 2]) -> f64 {
    let mut acc = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            let v = 0.5 * (s[i][0] * s[j][0] + s[i][1] * s[j][1]) - d2[i][j];
            acc += v * v;
        }
    }
    acc.sqrt()
}

/// A diagonal-noise Itô SDE.
pub trait Sde {
    fn dim(&self) -> usize;
    fn coefficients(&self, x: &[f64], drift: &mut [f64], diffusion: &mut [f64]) -> Result<()>;
    fn label(&self) -> String;
    fn digest(&self) -> String;
    fn columns(&self) -> Vec<String>;
    /// State-dependent upper limit for variable `i` beyond the configured box.
    fn upper_limit(&self, _x: &[f64], _i: usize) -> f64 {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SdeModel {
    TwoStateFull { eps1: f64, eps2: f64, alpha: f64 },
    TwoStateAsymptotic { eps2: f64, alpha: f64 },
    GeneralClass { eta: f64, lambda: f64 },
    ThreeStateFp(ThreeStateParams),
    ThreeStateTransformed(ThreeStateParams),
}

impl SdeModel {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParams(m.to_string()));
        match *self {
            SdeModel::TwoStateFull { eps1, eps2, alpha } => {
                if !(eps1 > 0.0 && eps2 > 0.0 && alpha >= 0.0) {
                    return bad("two-state SDE needs eps1 > 0, eps2 > 0, alpha >= 0");
                }
            }
            SdeModel::TwoStateAsymptotic { eps2, alpha } => {
                if !(eps2 > 0.0 && alpha >= 0.0) {
                    return bad("asymptotic SDE needs eps2 > 0, alpha >= 0");
                }
            }
            SdeModel::GeneralClass { eta, lambda } => {
                if !(eta.is_finite() && lambda.is_finite()) {
                    return bad("eta and lambda must be finite");
                }
            }
            SdeModel::ThreeStateFp(p) | SdeModel::ThreeStateTransformed(p) => p.validate()?,
        }
        Ok(())
    }

    /// Default integration box for each variable.
    pub fn default_boundaries(&self) -> Vec<Boundary> {
        match self {
            SdeModel::TwoStateFull { .. }
            | SdeModel::TwoStateAsymptotic { .. }
            | SdeModel::GeneralClass { .. } => {
                vec![Boundary::reflecting(1e-2, 1e3, 1e-3).with_rel_scale(0.1)]
            }
            SdeModel::ThreeStateFp(p) | SdeModel::ThreeStateTransformed(p) => {
                let lo = 1.0 / p.n.max(2) as f64;
                let second = if matches!(self, SdeModel::ThreeStateFp(_)) {
                    Boundary::reflecting(lo / 2.0, 1.0 - lo, 0.1 * lo)
                } else {
                    Boundary::reflecting(-1.0 + 1e-3, 1.0 - 1e-3, 1e-4)
                };
                vec![Boundary::reflecting(lo, 1.0 - lo, 0.1 * lo), second]
            }
        }
    }
}

impl Sde for SdeModel {
    fn dim(&self) -> usize {
        match self {
            SdeModel::ThreeStateFp(_) | SdeModel::ThreeStateTransformed(_) => 2,
            _ => 1,
        }
    }

    #[inline]
    fn coefficients(&self, x: &[f64], drift: &mut [f64], diffusion: &mut [f64]) -> Result<()> {
        match *self {
            SdeModel::TwoStateFull { eps1, eps2, alpha } => {
                (drift[0], diffusion[0]) = drift_diffusion_y_full(x[0], eps1, eps2, alpha)?;
            }
            SdeModel::TwoStateAsymptotic { eps2, alpha } => {
                (drift[0], diffusion[0]) = drift_diffusion_y_asymptotic(x[0], eps2, alpha)?;
            }
            SdeModel::GeneralClass { eta, lambda } => {
                (drift[0], diffusion[0]) = drift_diffusion_general(x[0], eta, lambda)?;
            }
            SdeModel::ThreeStateFp(ref p) => {
                let (a, s) = drift_diffusion_fp(x[0], x[1], p)?;
                drift.copy_from_slice(&a);
                diffusion[0] = s[0][0];
                diffusion[1] = s[1][1];
            }
            SdeModel::ThreeStateTransformed(ref p) => {
                let (a, b) = drift_diffusion_transformed(x[0], x[1], p)?;
                drift.copy_from_slice(&a);
                diffusion.copy_from_slice(&b);
            }
        }
        Ok(())
    }

    fn label(&self) -> String {
        match self {
            SdeModel::TwoStateFull { .. } => "sde-two-state-full",
            SdeModel::TwoStateAsymptotic { .. } => "sde-two-state-asymptotic",
            SdeModel::GeneralClass { .. } => "sde-general-class",
            SdeModel::ThreeStateFp(_) => "sde-three-state-fp",
            SdeModel::ThreeStateTransformed(_) => "sde-three-state-transformed",
        }
        .to_string()
    }

    fn digest(&self) -> String {
        params_digest(self)
    }

    fn columns(&self) -> Vec<String> {
        match self {
            SdeModel::ThreeStateFp(_) => vec!["n_f".into(), "n_p".into()],
            SdeModel::ThreeStateTransformed(_) => vec!["n_f".into(), "xi".into()],
            SdeModel::GeneralClass { .. } => vec!["x".into()],
            _ => vec!["y".into()],
        }
    }

    fn upper_limit(&self, x: &[f64], i: usize) -> f64 {
        match self {
            SdeModel::ThreeStateFp(p) if i == 1 => 1.0 - x[0] - 0.5 / p.n.max(2) as f64,
            _ => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryKind {
    /// Fold overshoots back into the interval.
    Reflect,
    /// Pin overshoots just inside the violated edge.
    Clamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Boundary {
    pub lower: f64,
    pub upper: f64,
    pub kind: BoundaryKind,
    /// Floor on the distance-to-boundary length scale used for step control.
    /// Without it the step size collapses geometrically near an edge and the
    /// path never reaches it.
    pub min_scale: f64,
    /// Floor on the length scale as a fraction of `|x|`, for variables whose
    /// noise grows with `x`.
    #[serde(default)]
    pub rel_scale: f64,
}

impl Boundary {
    pub fn reflecting(lower: f64, upper: f64, min_scale: f64) -> Self {
        Boundary {
            lower,
            upper,
            kind: BoundaryKind::Reflect,
            min_scale,
            rel_scale: 0.0,
        }
    }

    pub fn with_rel_scale(mut self, rel_scale: f64) -> Self {
        self.rel_scale = rel_scale;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub kappa: f64,
    pub max_dt: f64,
    pub sample_dt: f64,
    pub boundaries: Vec<Boundary>,
}

pub const DEFAULT_KAPPA: f64 = 0.05;

impl IntegratorConfig {
    /// Defaults: κ = 0.05, `max_dt = sample_dt / 100`, model boundaries.
    pub fn for_model(model: &SdeModel, sample_dt: f64) -> Self {
        IntegratorConfig {
            kappa: DEFAULT_KAPPA,
            max_dt: 1e-2 * sample_dt,
            sample_dt,
            boundaries: model.default_boundaries(),
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.kappa > 0.0 && self.kappa <= 0.5) {
            return Err(Error::InvalidParams(format!(
                "kappa must be in (0, 0.5], got {}",
                self.kappa
            )));
        }
        if !(self.max_dt > 0.0 && self.sample_dt > 0.0) {
            return Err(Error::InvalidParams(
                "max_dt and sample_dt must be positive".into(),
            ));
        }
        if self.boundaries.len() != dim {
            return Err(Error::InvalidParams(format!(
                "{} boundaries for a {dim}-dimensional model",
                self.boundaries.len()
            )));
        }
        for b in &self.boundaries {
            if !(b.lower < b.upper && b.min_scale > 0.0 && b.rel_scale >= 0.0) {
                return Err(Error::InvalidParams(format!("bad boundary {b:?}")));
            }
        }
        Ok(())
    }
}

/// Per-step information passed to [`Observer::step`].
pub struct StepInfo<'a> {
    pub t: f64,
    pub x: &'a [f64],
    pub drift: &'a [f64],
    pub diffusion: &'a [f64],
    pub scale: &'a [f64],
    pub dt: f64,
}

pub trait Observer {
    /// Called at every grid time `k·sample_dt`, including `t = 0`.
    fn sample(&mut self, _t: f64, _x: &[f64]) {}
    /// Called before every integration step with the step's start state.
    fn step(&mut self, _info: &StepInfo) {}
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct IntegrationStats {
    pub steps: u64,
    pub reflections: u64,
    pub min_dt: f64,
    pub samples: u64,
}

/// Runs the adaptive Euler–Maruyama scheme, reporting samples and steps to
/// `observer`.
///
/// Step size: `dt = min(max_dt, min_i κ·s_i/|a_i|, min_i κ²·s_i²/b_i²)`,
/// where `s_i` is the distance of variable `i` to its nearest boundary
/// (floored at `min_scale`). Steps are shortened to land on grid times.
pub fn integrate_with<M: Sde, O: Observer>(
    model: &M,
    x0: &[f64],
    t_end: f64,
    config: &IntegratorConfig,
    seed: u64,
    observer: &mut O,
) -> Result<IntegrationStats> {
    let dim = model.dim();
    config.validate(dim)?;
    if x0.len() != dim {
        return Err(Error::InvalidParams(format!(
            "x0 has {} entries, model needs {dim}",
            x0.len()
        )));
    }
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidParams("t_end must be positive".into()));
    }
    let mut x = x0.to_vec();
    for (i, b) in config.boundaries.iter().enumerate() {
        let hi = b.upper.min(model.upper_limit(&x, i));
        if !(x[i] > b.lower && x[i] < hi) {
            return Err(Error::InvalidParams(format!(
                "x0[{i}] = {} not strictly inside ({}, {hi})",
                x[i], b.lower
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut drift = vec![0.0; dim];
    let mut diff = vec![0.0; dim];
    let mut scale = vec![0.0; dim];
    let mut stats = IntegrationStats {
        min_dt: f64::INFINITY,
        ..Default::default()
    };
    let last_sample = (t_end / config.sample_dt + 1e-9).floor() as u64;
    let mut next_sample = 0u64;
    let mut t = 0.0;
    let kappa2 = config.kappa * config.kappa;
    loop {
        let t_sample = next_sample as f64 * config.sample_dt;
        if t >= t_sample - 1e-9 * config.sample_dt {
            observer.sample(t_sample, &x);
            stats.samples += 1;
            next_sample += 1;
            if next_sample > last_sample {
                break;
            }
            continue;
        }
        model.coefficients(&x, &mut drift, &mut diff)?;
        let mut dt = config.max_dt.min(t_sample - t);
        for i in 0..dim {
            if !(drift[i].is_finite() && diff[i].is_finite()) {
                return Err(Error::NonFinite {
                    t,
                    state: x.clone(),
                });
            }
            let b = &config.boundaries[i];
            let hi = b.upper.min(model.upper_limit(&x, i));
            let s = (x[i] - b.lower)
                .min(hi - x[i])
                .max(b.min_scale)
                .max(b.rel_scale * x[i].abs());
            scale[i] = s;
            if drift[i] != 0.0 {
                dt = dt.min(config.kappa * s / drift[i].abs());
            }
            let d2 = diff[i] * diff[i];
            if d2 > 0.0 {
                dt = dt.min(kappa2 * s * s / d2);
            }
        }
        observer.step(&StepInfo {
            t,
            x: &x,
            drift: &drift,
            diffusion: &diff,
            scale: &scale,
            dt,
        });
        let sq = dt.sqrt();
        for i in 0..dim {
            let z: f64 = rng.sample(StandardNormal);
            x[i] += drift[i] * dt + diff[i] * sq * z;
        }
        for i in 0..dim {
            let b = &config.boundaries[i];
            let hi = b.upper.min(model.upper_limit(&x, i));
            if x[i] <= b.lower || x[i] >= hi {
                stats.reflections += 1;
                x[i] = confine(x[i], b.lower, hi, b.kind);
            }
        }
        stats.steps += 1;
        stats.min_dt = stats.min_dt.min(dt);
        t += dt;
    }
    Ok(stats)
}

fn confine(mut v: f64, lo: f64, hi: f64, kind: BoundaryKind) -> f64 {
    let eps = (hi - lo) * 1e-12;
    if kind == BoundaryKind::Reflect {
        for _ in 0..4 {
            if v < lo {
                v = 2.0 * lo - v;
            } else if v > hi {
                v = 2.0 * hi - v;
            } else {
                break;
            }
        }
    }
    v.clamp(lo + eps, hi - eps)
}

struct Collect(Trajectory);

impl Observer for Collect {
    fn sample(&mut self, _t: f64, x: &[f64]) {
        self.0.push(x);
    }
}

/// Integrates `model` from `x0` and returns the path on the `sample_dt` grid.
pub fn integrate_sde<M: Sde>(
    model: &M,
    x0: &[f64],
    t_end: f64,
    config: &IntegratorConfig,
    seed: u64,
) -> Result<Trajectory> {
    let meta = TrajectoryMeta {
        model: model.label(),
        params_digest: model.digest(),
        seed,
        ..Default::default()
    };
    let mut obs = Collect(Trajectory::new(
        0.0,
        config.sample_dt,
        model.columns(),
        meta,
    ));
    let stats = integrate_with(model, x0, t_end, config, seed, &mut obs)?;
    let mut traj = obs.0;
    traj.meta
        .extra
        .insert("steps".into(), stats.steps.to_string());
    traj.meta
        .extra
        .insert("kappa".into(), config.kappa.to_string());
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fin(alpha: f64, big_h: f64) -> ThreeStateParams {
        ThreeStateParams {
            eps_cf: 3.0,
            eps_fc: 3.0,
            eps_cc: 3.0,
            big_h,
            h1: 1.0,
            alpha,
            r0: 1.0,
            n: 1000,
        }
    }

    #[test]
    fn y_full_direct_values() {
        let (a, b) = drift_diffusion_y_full(1.0, 0.1, 2.0, 1.0).unwrap();
        assert!((a - 0.2).abs() < 1e-15);
        assert!((b - 2.0 * 2f64.sqrt()).abs() < 1e-15);
        for y in [0.01, 0.5, 3.0, 400.0] {
            assert_eq!(drift_diffusion_y_full(y, 0.0, 2.0, 1.3).unwrap().0, 0.0);
        }
        assert!(drift_diffusion_y_full(0.0, 0.1, 2.0, 1.0).is_err());
        assert!(drift_diffusion_y_full(-1.0, 0.1, 2.0, 1.0).is_err());
    }

    #[test]
    fn y_full_approaches_asymptotic() {
        let (eps1, eps2, alpha) = (0.1, 3.0, 1.0);
        let mut last = f64::INFINITY;
        for y in [1e2, 1e4, 1e6, 1e8] {
            let (a, b) = drift_diffusion_y_full(y, eps1, eps2, alpha).unwrap();
            let (aa, bb) = drift_diffusion_y_asymptotic(y, eps2, alpha).unwrap();
            let err = (a / aa - 1.0).abs().max((b / bb - 1.0).abs());
            assert!(err < last);
            last = err;
        }
        assert!(last < 1e-7);
    }

    #[test]
    fn general_class_values() {
        for x in [0.3, 1.0, 7.0] {
            let (a, b) = drift_diffusion_general(x, 1.0, 2.0).unwrap();
            assert_eq!(a, 0.0);
            assert!((b - x).abs() < 1e-15);
        }
        let (a, b) = drift_diffusion_general(1.0, 2.5, 4.0).unwrap();
        assert_eq!((a, b), (0.5, 1.0));
        assert!(drift_diffusion_general(0.0, 2.0, 3.0).is_err());
    }

    #[test]
    fn asymptotic_maps_onto_general_class_after_time_rescale() {
        // dy = (2-ε₂) y^{2+α} dt + sqrt(2) y^{(3+α)/2} dW. With t' = 2t the
        // drift halves and the noise loses its sqrt(2): that is the general
        // class with η = (3+α)/2 and λ = ε₂ + α + 1.
        for &(alpha, eps2) in &[(0.0, 0.5), (1.0, 3.0), (2.5, 1.2)] {
            let eta = (3.0 + alpha) / 2.0;
            let lambda = eps2 + alpha + 1.0;
            for k in 0..30 {
                let y = 10f64.powf(-1.0 + k as f64 * 0.15);
                let (a, b) = drift_diffusion_y_asymptotic(y, eps2, alpha).unwrap();
                let (ga, gb) = drift_diffusion_general(y, eta, lambda).unwrap();
                assert!((a / 2.0 - ga).abs() <= 1e-12 * ga.abs().max(1e-300));
                assert!((b / 2f64.sqrt() - gb).abs() <= 1e-12 * gb);
            }
        }
    }

    #[test]
    fn fp_fixed_point_and_boundary() {
        let p = fin(0.0, 100.0);
        let nf = p.sigma_cf() / (p.sigma_cf() + p.sigma_fc());
        let (a, _) = drift_diffusion_fp(nf, (1.0 - nf) / 2.0, &p).unwrap();
        assert!(a[0].abs() < 1e-12 && a[1].abs() < 1e-12);
        let (_, s) = drift_diffusion_fp(0.4, 0.0, &p).unwrap();
        assert_eq!(s[1][1], 0.0);
        assert!(drift_diffusion_fp(0.7, 0.5, &p).is_err());
    }

    #[test]
    fn fp_diagonal_matches_exact_d2_up_to_cross_term() {
        let p = fin(0.0, 100.0);
        for &(nf, np) in &[(0.3, 0.3), (0.5, 0.2), (0.2, 0.6)] {
            let (_, s) = drift_diffusion_fp(nf, np, &p).unwrap();
            let d2 = financial_d2(nf, np, &p);
            let exact = diffusion_decompose(d2).unwrap();
            // the diagonal form equals D² with h₁ n_f n_p dropped
            assert!((0.5 * s[0][0].powi(2) - d2[0][0]).abs() < 1e-14);
            assert!((0.5 * s[1][1].powi(2) - (d2[1][1] - p.h1 * nf * np)).abs() < 1e-12);
            assert!((s[1][1] / exact[1][1] - 1.0).abs() < 0.05);
            assert!((s[0][0] / exact[0][0] - 1.0).abs() < 0.1);
        }
    }

    #[test]
    fn transformed_zero_mood() {
        let p = fin(2.0, 100.0);
        let (a, b) = drift_diffusion_transformed(0.5, 0.0, &p).unwrap();
        assert_eq!(a[1], 0.0);
        assert!((b[1] - 200f64.sqrt()).abs() < 1e-12);
        assert!(a[0].abs() < 1e-12);
        assert!(drift_diffusion_transformed(0.0, 0.0, &p).is_err());
        assert!(drift_diffusion_transformed(0.5, 1.0, &p).is_err());
    }

    #[test]
    fn decompose_diagonal() {
        let s = diffusion_decompose([[2.0, 0.0], [0.0, 0.5]]).unwrap();
        assert!((s[0][0] - 2.0).abs() < 1e-15);
        assert!((s[1][1] - 1.0).abs() < 1e-15);
        assert_eq!(s[0][1], 0.0);
    }

    #[test]
    fn decompose_rejects_indefinite() {
        let e = diffusion_decompose([[1.0, 2.0], [2.0, 1.0]]).unwrap_err();
        assert!(matches!(e, Error::NoRealSolution { residual } if residual > 0.0));
        assert!(diffusion_decompose([[1.0, 0.5], [0.0, 1.0]]).is_err());
    }

    struct Steps {
        kappa: f64,
        violations: u64,
        steps: u64,
    }

    impl Observer for Steps {
        fn step(&mut self, s: &StepInfo) {
            self.steps += 1;
            for i in 0..s.x.len() {
                let k = self.kappa * (1.0 + 1e-12);
                if (s.drift[i] * s.dt).abs() > k * s.scale[i]
                    || s.diffusion[i].powi(2) * s.dt > k * k * s.scale[i].powi(2)
                {
                    self.violations += 1;
                }
            }
        }
    }

    #[test]
    fn step_size_contract_holds() {
        let m = SdeModel::TwoStateFull {
            eps1: 0.1,
            eps2: 1.0,
            alpha: 1.0,
        };
        let cfg = IntegratorConfig::for_model(&m, 0.1);
        let mut obs = Steps {
            kappa: cfg.kappa,
            violations: 0,
            steps: 0,
        };
        integrate_with(&m, &[1.0], 50.0, &cfg, 1, &mut obs).unwrap();
        assert!(obs.steps > 1000);
        assert_eq!(obs.violations, 0);
    }

    #[test]
    fn samples_stay_inside_boundaries() {
        let m = SdeModel::ThreeStateTransformed(fin(2.0, 100.0));
        let mut cfg = IntegratorConfig::for_model(&m, 0.01);
        cfg.kappa = 0.2;
        cfg.max_dt = 0.01;
        let traj = integrate_sde(&m, &[0.5, 0.0], 20.0, &cfg, 4).unwrap();
        assert_eq!(traj.len(), 2001);
        for i in 0..traj.len() {
            let r = traj.row(i);
            for (v, b) in r.iter().zip(&cfg.boundaries) {
                assert!(*v > b.lower && *v < b.upper);
            }
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let m = SdeModel::TwoStateFull {
            eps1: 0.5,
            eps2: 1.5,
            alpha: 0.5,
        };
        let cfg = IntegratorConfig::for_model(&m, 0.1);
        let a = integrate_sde(&m, &[0.5], 10.0, &cfg, 77).unwrap();
        let b = integrate_sde(&m, &[0.5], 10.0, &cfg, 77).unwrap();
        assert_eq!(a.to_binary(), b.to_binary());
    }

    #[test]
    fn rejects_bad_start_and_config() {
        let m = SdeModel::GeneralClass {
            eta: 2.0,
            lambda: 3.0,
        };
        let cfg = IntegratorConfig::for_model(&m, 0.1);
        assert!(integrate_sde(&m, &[1e-3], 1.0, &cfg, 0).is_err());
        let mut bad = cfg.clone();
        bad.kappa = 0.7;
        assert!(integrate_sde(&m, &[1.0], 1.0, &bad, 0).is_err());
    }

    #[test]
    fn fp_respects_simplex() {
        let m = SdeModel::ThreeStateFp(ThreeStateParams {
            n: 200,
            ..fin(0.0, 10.0)
        });
        let mut cfg = IntegratorConfig::for_model(&m, 0.01);
        cfg.max_dt = 1e-3;
        let traj = integrate_sde(&m, &[0.4, 0.3], 5.0, &cfg, 9).unwrap();
        for i in 0..traj.len() {
            let r = traj.row(i);
            assert!(r[0] > 0.0 && r[1] > 0.0 && r[0] + r[1] < 1.0);
        }
    }
}
