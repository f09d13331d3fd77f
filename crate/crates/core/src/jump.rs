//! Continuous-time Markov jump simulation of the herding models.
//!
//! [`simulate_jump`] is the exact event-driven (Gillespie direct) method.
//! [`simulate_jump_fixed_dt`] realizes the small-Δt formulation, firing at
//! most one channel per step with probability `rate·Δt`; it exists to
//! cross-check the exact simulator.
//!
//! Both sample the piecewise-constant path onto a uniform grid `k·sample_dt`
//! (last value at or before each grid time) and are deterministic per seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    three_state_financial_rates, three_state_rates, two_state_rates, GeneralThreeStateParams,
    PopulationState, ThreeStateParams, TwoStateParams, CHANNELS,
};
use crate::trajectory::{params_digest, Trajectory, TrajectoryMeta};

/// A population model whose transitions move one agent between groups.
///
/// States are always stored as three counts; the two-state model uses
/// `[X, N − X, 0]`.
pub trait ChannelRates {
    /// `(from, to)` group index of each channel.
    fn channels(&self) -> &[(usize, usize)];
    fn rates(&self, counts: &[u32; 3], out: &mut [f64]);
    fn label(&self) -> String;
    fn digest(&self) -> String;
    fn columns(&self) -> Vec<String>;
    fn observe(&self, counts: &[u32; 3], out: &mut Vec<f64>);
}

const TWO_STATE_CHANNELS: [(usize, usize); 2] = [(1, 0), (0, 1)];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum JumpModel {
    TwoState(TwoStateParams),
    /// Financial three-state model with the feedback kernel.
    ThreeState(ThreeStateParams),
    GeneralThreeState(GeneralThreeStateParams),
}

impl JumpModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            JumpModel::TwoState(p) => p.validate(),
            JumpModel::ThreeState(p) => p.validate(),
            JumpModel::GeneralThreeState(p) => p.validate(),
        }
    }

    pub fn n(&self) -> u32 {
        match self {
            JumpModel::TwoState(p) => p.n,
            JumpModel::ThreeState(p) => p.n,
            JumpModel::GeneralThreeState(p) => p.n,
        }
    }

    pub fn default_initial(&self) -> PopulationState {
        match self {
            JumpModel::TwoState(p) => PopulationState::default_two_state(p),
            _ => PopulationState::default_three_state(self.n()),
        }
    }
}

impl ChannelRates for JumpModel {
    fn channels(&self) -> &[(usize, usize)] {
        match self {
            JumpModel::TwoState(_) => &TWO_STATE_CHANNELS,
            _ => &CHANNELS,
        }
    }

    fn rates(&self, counts: &[u32; 3], out: &mut [f64]) {
        match self {
            JumpModel::TwoState(p) => {
                let (up, down) = two_state_rates(counts[0], p);
                out[0] = up;
                out[1] = down;
            }
            JumpModel::ThreeState(p) => {
                out.copy_from_slice(&three_state_financial_rates(*counts, p))
            }
            JumpModel::GeneralThreeState(p) => out.copy_from_slice(&three_state_rates(*counts, p)),
        }
    }

    fn label(&self) -> String {
        match self {
            JumpModel::TwoState(_) => "jump-two-state",
            JumpModel::ThreeState(_) => "jump-three-state",
            JumpModel::GeneralThreeState(_) => "jump-general-three-state",
        }
        .to_string()
    }

    fn digest(&self) -> String {
        params_digest(self)
    }

    fn columns(&self) -> Vec<String> {
        match self {
            JumpModel::TwoState(_) => vec!["x".into()],
            _ => vec!["x1".into(), "x2".into(), "x3".into()],
        }
    }

    fn observe(&self, counts: &[u32; 3], out: &mut Vec<f64>) {
        out.clear();
        match self {
            JumpModel::TwoState(_) => out.push(counts[0] as f64),
            _ => out.extend(counts.iter().map(|&c| c as f64)),
        }
    }
}

/// One fired transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub time: f64,
    pub channel: usize,
}

pub type EventLog = Vec<Event>;

fn to_counts(x0: &PopulationState) -> [u32; 3] {
    match *x0 {
        PopulationState::TwoState { x, n } => [x, n - x, 0],
        PopulationState::ThreeState { counts } => counts,
    }
}

fn check_inputs<M: ChannelRates>(
    model: &M,
    x0: &PopulationState,
    t_end: f64,
    sample_dt: f64,
) -> Result<()> {
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidParams("t_end must be positive".into()));
    }
    if !(sample_dt > 0.0 && sample_dt <= t_end) {
        return Err(Error::InvalidParams(
            "sample_dt must be in (0, t_end]".into(),
        ));
    }
    let two = model.channels().len() == TWO_STATE_CHANNELS.len();
    match (x0, two) {
        (PopulationState::TwoState { x, n }, true) if x <= n => Ok(()),
        (PopulationState::ThreeState { .. }, false) => Ok(()),
        _ => Err(Error::InvalidParams(
            "initial state does not match the model".into(),
        )),
    }
}

struct Sampler {
    traj: Trajectory,
    next: u64,
    last: u64,
    sample_dt: f64,
    row: Vec<f64>,
}

impl Sampler {
    fn new<M: ChannelRates>(model: &M, t_end: f64, sample_dt: f64, seed: u64) -> Self {
        let meta = TrajectoryMeta {
            model: model.label(),
            params_digest: model.digest(),
            seed,
            ..Default::default()
        };
        let last = (t_end / sample_dt + 1e-9).floor() as u64;
        let mut traj = Trajectory::new(0.0, sample_dt, model.columns(), meta);
        traj.values.reserve((last as usize + 1) * traj.width());
        Sampler {
            traj,
            next: 0,
            last,
            sample_dt,
            row: Vec::new(),
        }
    }

    fn grid_time(&self) -> f64 {
        self.next as f64 * self.sample_dt
    }

    /// Emits the current state for every grid time strictly before `t`.
    fn fill_before<M: ChannelRates>(&mut self, model: &M, counts: &[u32; 3], t: f64) {
        while self.next <= self.last && self.grid_time() < t {
            model.observe(counts, &mut self.row);
            self.traj.push(&self.row);
            self.next += 1;
        }
    }

    fn finish<M: ChannelRates>(mut self, model: &M, counts: &[u32; 3]) -> Trajectory {
        self.fill_before(model, counts, f64::INFINITY);
        self.traj
    }
}

/// Exact event-driven simulation.
pub fn simulate_jump<M: ChannelRates>(
    model: &M,
    x0: &PopulationState,
    t_end: f64,
    sample_dt: f64,
    seed: u64,
) -> Result<Trajectory> {
    run_gillespie(model, x0, t_end, sample_dt, seed, None)
}

/// [`simulate_jump`] that also records every event.
pub fn simulate_jump_logged<M: ChannelRates>(
    model: &M,
    x0: &PopulationState,
    t_end: f64,
    sample_dt: f64,
    seed: u64,
) -> Result<(Trajectory, EventLog)> {
    let mut log = Vec::new();
    let traj = run_gillespie(model, x0, t_end, sample_dt, seed, Some(&mut log))?;
    Ok((traj, log))
}

fn run_gillespie<M: ChannelRates>(
    model: &M,
    x0: &PopulationState,
    t_end: f64,
    sample_dt: f64,
    seed: u64,
    mut log: Option<&mut EventLog>,
) -> Result<Trajectory> {
    check_inputs(model, x0, t_end, sample_dt)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let channels = model.channels().to_vec();
    let mut rates = vec![0.0; channels.len()];
    let mut counts = to_counts(x0);
    let mut sampler = Sampler::new(model, t_end, sample_dt, seed);
    let mut t = 0.0;
    loop {
        model.rates(&counts, &mut rates);
        let total: f64 = rates.iter().sum();
        if total <= 0.0 {
            sampler.traj.meta.absorbed = true;
            break;
        }
        let dwell: f64 = rng.sample::<f64, _>(Exp1) / total;
        let t_next = t + dwell;
        if t_next > t_end {
            break;
        }
        // The jump happens at t_next; grid points before it see the old state.
        sampler.fill_before(model, &counts, t_next);
        let k = pick(&rates, total, rng.random::<f64>());
        let (from, to) = channels[k];
        counts[from] -= 1;
        counts[to] += 1;
        if let Some(log) = log.as_deref_mut() {
            log.push(Event {
                time: t_next,
                channel: k,
            });
        }
        t = t_next;
    }
    Ok(sampler.finish(model, &counts))
}

fn pick(rates: &[f64], total: f64, u: f64) -> usize {
    let target = u * total;
    let mut acc = 0.0;
    for (k, &r) in rates.iter().enumerate() {
        acc += r;
        if target < acc {
            return k;
        }
    }
    // rounding: fall back to the last channel with positive rate
    rates.iter().rposition(|&r| r > 0.0).unwrap_or(0)
}

/// Largest allowed `total_rate · step_dt` in the fixed-step simulator.
pub const MAX_STEP_PROBABILITY: f64 = 0.1;

/// Fixed-step Bernoulli simulation. `step_dt` is halved whenever the total
/// rate at the current state would exceed [`MAX_STEP_PROBABILITY`] per step;
/// the halving count is recorded in the trajectory metadata.
pub fn simulate_jump_fixed_dt<M: ChannelRates>(
    model: &M,
    x0: &PopulationState,
    t_end: f64,
    step_dt: f64,
    sample_dt: f64,
    seed: u64,
) -> Result<Trajectory> {
    check_inputs(model, x0, t_end, sample_dt)?;
    if !(step_dt > 0.0) {
        return Err(Error::InvalidParams("step_dt must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let channels = model.channels().to_vec();
    let mut rates = vec![0.0; channels.len()];
    let mut counts = to_counts(x0);
    let mut sampler = Sampler::new(model, t_end, sample_dt, seed);
    let mut dt = step_dt;
    let mut halvings = 0u32;
    let mut t = 0.0;
    while t < t_end {
        sampler.fill_before(model, &counts, t + 1e-12 * sample_dt);
        model.rates(&counts, &mut rates);
        let total: f64 = rates.iter().sum();
        while total * dt > MAX_STEP_PROBABILITY {
            dt *= 0.5;
            halvings += 1;
        }
        if total == 0.0 {
            sampler.traj.meta.absorbed = true;
            break;
        }
        let u: f64 = rng.random();
        if u < total * dt {
            let k = pick(&rates, total, u / (total * dt));
            let (from, to) = channels[k];
            counts[from] -= 1;
            counts[to] += 1;
        }
        t += dt;
    }
    sampler.traj.meta.step_halvings = halvings;
    Ok(sampler.finish(model, &counts))
}

/// Fraction of grid samples spent at each value `0..=n` of a count column.
pub fn occupation(traj: &Trajectory, column: usize, n: u32) -> Vec<f64> {
    let mut pmf = vec![0.0; n as usize + 1];
    let col = traj.column(column);
    for &v in &col {
        let k = v.round() as usize;
        if k < pmf.len() {
            pmf[k] += 1.0;
        }
    }
    let total = col.len().max(1) as f64;
    pmf.iter_mut().for_each(|p| *p /= total);
    pmf
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::tv_distance;

    fn kirman(s1: f64, s2: f64, h: f64, n: u32) -> JumpModel {
        JumpModel::TwoState(TwoStateParams::kirman(s1, s2, h, n))
    }

    #[test]
    fn telegraph_occupation_is_half() {
        let m = kirman(1.0, 1.0, 0.0, 1);
        let x0 = PopulationState::two(0, 1).unwrap();
        let traj = simulate_jump(&m, &x0, 20_000.0, 0.05, 11).unwrap();
        let occ = occupation(&traj, 0, 1);
        // correlation time 1/2: roughly t_end / (2 * 0.5) independent draws
        let se = (0.25 / 20_000.0f64).sqrt();
        assert!(
            (occ[1] - 0.5).abs() < 3.0 * se * 2.0,
            "occupation {}",
            occ[1]
        );
    }

    #[test]
    fn absorption_without_down_channel() {
        let p = TwoStateParams {
            sigma2: 0.0,
            ..TwoStateParams::kirman(0.5, 1.0, 0.0, 10)
        };
        let m = JumpModel::TwoState(p);
        let traj = simulate_jump(&m, &PopulationState::two(0, 10).unwrap(), 200.0, 0.5, 3).unwrap();
        assert!(traj.meta.absorbed);
        let col = traj.column(0);
        let first = col.iter().position(|&v| v == 10.0).unwrap();
        assert!(col[first..].iter().all(|&v| v == 10.0));
        assert_eq!(col.len(), 401);
    }

    #[test]
    fn reproducible_per_seed() {
        let m = kirman(0.3, 0.4, 0.2, 15);
        let x0 = m.default_initial();
        let a = simulate_jump(&m, &x0, 50.0, 0.1, 99).unwrap();
        let b = simulate_jump(&m, &x0, 50.0, 0.1, 99).unwrap();
        let c = simulate_jump(&m, &x0, 50.0, 0.1, 100).unwrap();
        assert_eq!(a.to_binary(), b.to_binary());
        assert_ne!(a.values, c.values);
    }

    #[test]
    fn event_log_strictly_increasing() {
        let m = kirman(0.3, 0.4, 0.2, 15);
        let (_, log) = simulate_jump_logged(&m, &m.default_initial(), 20.0, 0.1, 1).unwrap();
        assert!(log.len() > 10);
        assert!(log.windows(2).all(|w| w[0].time < w[1].time));
    }

    #[test]
    fn three_state_conserves_agents() {
        let p = ThreeStateParams {
            eps_cf: 2.0,
            eps_fc: 1.0,
            eps_cc: 1.5,
            big_h: 10.0,
            h1: 0.5,
            alpha: 2.0,
            r0: 1.0,
            n: 25,
        };
        let m = JumpModel::ThreeState(p);
        let traj = simulate_jump(&m, &m.default_initial(), 30.0, 0.01, 5).unwrap();
        for i in 0..traj.len() {
            assert_eq!(traj.row(i).iter().sum::<f64>(), 25.0);
        }
    }

    #[test]
    fn fixed_dt_halves_and_records() {
        let m = kirman(1.0, 1.0, 0.0, 10);
        let traj = simulate_jump_fixed_dt(&m, &m.default_initial(), 5.0, 1.0, 0.5, 2).unwrap();
        // total rate is 10 everywhere: 1.0 -> 0.0078125 takes 7 halvings
        assert_eq!(traj.meta.step_halvings, 7);
        assert_eq!(traj.len(), 11);
    }

    #[test]
    fn fixed_dt_mean_is_half_n() {
        let m = kirman(0.5, 0.5, 0.0, 20);
        let traj = simulate_jump_fixed_dt(&m, &m.default_initial(), 4000.0, 0.005, 0.1, 8).unwrap();
        let col = traj.column(0);
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        assert!((mean - 10.0).abs() < 0.25, "mean {mean}");
    }

    #[test]
    fn both_simulators_agree_on_small_chain() {
        let m = kirman(0.6, 0.4, 0.1, 8);
        let x0 = m.default_initial();
        let a = simulate_jump(&m, &x0, 20_000.0, 0.1, 21).unwrap();
        let b = simulate_jump_fixed_dt(&m, &x0, 20_000.0, 0.02, 0.1, 22).unwrap();
        let tv = tv_distance(&occupation(&a, 0, 8), &occupation(&b, 0, 8));
        assert!(tv < 0.03, "tv {tv}");
    }

    #[test]
    fn rejects_mismatched_state() {
        let m = kirman(0.6, 0.4, 0.1, 8);
        let x0 = PopulationState::three([1, 2, 5]).unwrap();
        assert!(simulate_jump(&m, &x0, 1.0, 0.1, 0).is_err());
        assert!(simulate_jump(&m, &m.default_initial(), 0.0, 0.1, 0).is_err());
    }
}
