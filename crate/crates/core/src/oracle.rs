//! Exact small-N ground truth for the jump processes.
//!
//! The two-state chain is solved by detailed balance; three-group chains by
//! a linear solve on the generator. Simplex states are enumerated
//! lexicographically in `(X₁, X₂)` with `X₃ = N − X₁ − X₂`, so index 0 is
//! `(0, 0, N)` and the last index is `(N, 0, 0)`.

use std::collections::VecDeque;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::jump::{ChannelRates, JumpModel};
use crate::model::{two_state_rates, GeneralThreeStateParams, ThreeStateParams, TwoStateParams};

/// Enumeration of the reachable states of a population model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateSpace {
    /// `X ∈ {0..N}`, stored as counts `[X, N − X, 0]`.
    TwoState { n: u32 },
    /// `(X₁, X₂, X₃)` with `ΣX = N`.
    Simplex { n: u32 },
}

impl StateSpace {
    pub fn for_model(model: &JumpModel) -> Self {
        match model {
            JumpModel::TwoState(p) => StateSpace::TwoState { n: p.n },
            _ => StateSpace::Simplex { n: model.n() },
        }
    }

    pub fn len(&self) -> usize {
        match *self {
            StateSpace::TwoState { n } => n as usize + 1,
            StateSpace::Simplex { n } => (n as usize + 1) * (n as usize + 2) / 2,
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn counts(&self, idx: usize) -> [u32; 3] {
        match *self {
            StateSpace::TwoState { n } => [idx as u32, n - idx as u32, 0],
            StateSpace::Simplex { n } => {
                let n = n as usize;
                // rows of the enumeration: X₁ = a holds N − a + 1 states
                let mut a = 0;
                let mut start = 0;
                while start + (n - a + 1) <= idx {
                    start += n - a + 1;
                    a += 1;
                }
                let b = idx - start;
                [a as u32, b as u32, (n - a - b) as u32]
            }
        }
    }

    pub fn index(&self, counts: [u32; 3]) -> usize {
        match *self {
            StateSpace::TwoState { .. } => counts[0] as usize,
            StateSpace::Simplex { n } => {
                let (n, a, b) = (n as usize, counts[0] as usize, counts[1] as usize);
                // Σ_{k<a} (N − k + 1)
                a * (n + 1) - a * (a.saturating_sub(1)) / 2 + b
            }
        }
    }
}

/// Sparse generator `Q` of a continuous-time Markov chain.
///
/// Off-diagonal entries are channel rates; the diagonal is minus the row
/// sum. Stored as outgoing adjacency lists.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorMatrix {
    pub space: StateSpace,
    /// `out[i]` lists `(j, q_ij)` for `j ≠ i`, `q_ij > 0`.
    pub out: Vec<Vec<(usize, f64)>>,
    /// `q_ii`.
    pub diag: Vec<f64>,
}

impl GeneratorMatrix {
    pub fn from_model<M: ChannelRates>(model: &M, space: StateSpace) -> Self {
        let len = space.len();
        let channels = model.channels().to_vec();
        let mut rates = vec![0.0; channels.len()];
        let mut out = Vec::with_capacity(len);
        let mut diag = Vec::with_capacity(len);
        for i in 0..len {
            let c = space.counts(i);
            model.rates(&c, &mut rates);
            let mut row: Vec<(usize, f64)> = Vec::with_capacity(channels.len());
            let mut total = 0.0;
            for (&(from, to), &r) in channels.iter().zip(&rates) {
                if r > 0.0 && c[from] > 0 {
                    let mut d = c;
                    d[from] -= 1;
                    d[to] += 1;
                    let j = space.index(d);
                    match row.iter_mut().find(|e| e.0 == j) {
                        Some(e) => e.1 += r,
                        None => row.push((j, r)),
                    }
                    total += r;
                }
            }
            row.sort_by_key(|e| e.0);
            out.push(row);
            diag.push(-total);
        }
        GeneratorMatrix { space, out, diag }
    }

    pub fn two_state(p: &TwoStateParams) -> Self {
        Self::from_model(&JumpModel::TwoState(*p), StateSpace::TwoState { n: p.n })
    }

    pub fn three_state(p: &ThreeStateParams) -> Self {
        Self::from_model(&JumpModel::ThreeState(*p), StateSpace::Simplex { n: p.n })
    }

    pub fn general_three_state(p: &GeneralThreeStateParams) -> Self {
        Self::from_model(
            &JumpModel::GeneralThreeState(*p),
            StateSpace::Simplex { n: p.n },
        )
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return self.diag[i];
        }
        self.out[i].iter().find(|e| e.0 == j).map_or(0.0, |e| e.1)
    }

    pub fn max_exit_rate(&self) -> f64 {
        self.diag.iter().fold(0.0, |m, d| m.max(-d))
    }

    /// Largest `|Σ_j q_ij|`.
    pub fn row_sum_error(&self) -> f64 {
        self.out
            .iter()
            .zip(&self.diag)
            .map(|(row, d)| (row.iter().map(|e| e.1).sum::<f64>() + d).abs())
            .fold(0.0, f64::max)
    }

    /// `v Q` for a row vector `v`.
    pub fn left_apply(&self, v: &[f64]) -> Vec<f64> {
        let mut r: Vec<f64> = v.iter().zip(&self.diag).map(|(a, d)| a * d).collect();
        for (i, row) in self.out.iter().enumerate() {
            for &(j, q) in row {
                r[j] += v[i] * q;
            }
        }
        r
    }

    /// Incoming adjacency lists: `inc[j]` lists `(i, q_ij)`.
    pub fn incoming(&self) -> Vec<Vec<(usize, f64)>> {
        let mut inc = vec![Vec::new(); self.len()];
        for (i, row) in self.out.iter().enumerate() {
            for &(j, q) in row {
                inc[j].push((i, q));
            }
        }
        inc
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = self.diag[i];
            for &(j, q) in &self.out[i] {
                m[(i, j)] = q;
            }
        }
        m
    }

    /// Fails with [`Error::Reducible`] unless every state reaches and is
    /// reached from state 0.
    pub fn check_irreducible(&self) -> Result<()> {
        let inc = self.incoming();
        let reach = |adj: &dyn Fn(usize) -> Vec<usize>| {
            let mut seen = vec![false; self.len()];
            let mut q = VecDeque::from([0usize]);
            seen[0] = true;
            while let Some(i) = q.pop_front() {
                for j in adj(i) {
                    if !seen[j] {
                        seen[j] = true;
                        q.push_back(j);
                    }
                }
            }
            seen.iter().position(|s| !s)
        };
        if let Some(s) = reach(&|i| self.out[i].iter().map(|e| e.0).collect()) {
            return Err(Error::Reducible(format!(
                "state {:?} unreachable from {:?}",
                self.space.counts(s),
                self.space.counts(0)
            )));
        }
        if let Some(s) = reach(&|i| inc[i].iter().map(|e| e.0).collect()) {
            return Err(Error::Reducible(format!(
                "state {:?} cannot reach {:?}",
                self.space.counts(s),
                self.space.counts(0)
            )));
        }
        Ok(())
    }
}

/// Largest `|(πQ)_j|` divided by the largest exit rate.
pub fn stationarity_residual(gen: &GeneratorMatrix, pi: &[f64]) -> f64 {
    let r = gen.left_apply(pi);
    r.iter().fold(0.0f64, |m, v| m.max(v.abs())) / gen.max_exit_rate().max(f64::MIN_POSITIVE)
}

/// Stationary pmf of the two-state chain from detailed balance,
/// `P(X+1)/P(X) = rate_up(X)/rate_down(X+1)`, accumulated in log space.
pub fn stationary_birth_death(p: &TwoStateParams) -> Result<Vec<f64>> {
    p.validate()?;
    let n = p.n;
    let mut logp = Vec::with_capacity(n as usize + 1);
    logp.push(0.0f64);
    for x in 0..n {
        let up = two_state_rates(x, p).0;
        let down = two_state_rates(x + 1, p).1;
        if !(up > 0.0) {
            return Err(Error::Disconnected {
                state: x as usize,
                detail: format!("no upward transition out of X = {x}"),
            });
        }
        if !(down > 0.0) {
            return Err(Error::Disconnected {
                state: x as usize + 1,
                detail: format!("no downward transition out of X = {}", x + 1),
            });
        }
        let last = *logp.last().unwrap();
        logp.push(last + up.ln() - down.ln());
    }
    Ok(normalize_log(&logp))
}

fn normalize_log(logp: &[f64]) -> Vec<f64> {
    let m = logp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logp.iter().map(|l| (l - m).exp()).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|v| v / z).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    /// Dense LU up to [`DENSE_LIMIT`] states, Gauss–Seidel above.
    Auto,
    Dense,
    GaussSeidel,
}

pub const DENSE_LIMIT: usize = 4000;
pub const RESIDUAL_TOL: f64 = 1e-10;

/// Null vector of `Qᵀ`, normalised to a pmf.
pub fn stationary(gen: &GeneratorMatrix, method: SolveMethod) -> Result<Vec<f64>> {
    gen.check_irreducible()?;
    let dense = match method {
        SolveMethod::Auto => gen.len() <= DENSE_LIMIT,
        SolveMethod::Dense => true,
        SolveMethod::GaussSeidel => false,
    };
    let mut pi = if dense {
        solve_dense(gen)?
    } else {
        vec![1.0 / gen.len() as f64; gen.len()]
    };
    // polish the direct solution, or run the full iteration
    let max_sweeps = if dense { 50 } else { 200_000 };
    let inc = gen.incoming();
    let mut residual = stationarity_residual(gen, &pi);
    let mut sweeps = 0;
    while residual > RESIDUAL_TOL && sweeps < max_sweeps {
        for j in 0..gen.len() {
            let inflow: f64 = inc[j].iter().map(|&(i, q)| pi[i] * q).sum();
            pi[j] = inflow / -gen.diag[j];
        }
        let z: f64 = pi.iter().sum();
        pi.iter_mut().for_each(|v| *v /= z);
        sweeps += 1;
        if sweeps % 16 == 0 || dense {
            residual = stationarity_residual(gen, &pi);
        }
    }
    residual = stationarity_residual(gen, &pi);
    if residual > RESIDUAL_TOL {
        return Err(Error::NotConverged {
            residual,
            iterations: sweeps,
        });
    }
    clip_pmf(pi)
}

fn solve_dense(gen: &GeneratorMatrix) -> Result<Vec<f64>> {
    let n = gen.len();
    let mut a = gen.to_dense().transpose();
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    let x = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Reducible("singular generator".into()))?;
    Ok(x.iter().copied().collect())
}

fn clip_pmf(mut pi: Vec<f64>) -> Result<Vec<f64>> {
    if let Some(v) = pi.iter().copied().find(|&v| v < -1e-12 || !v.is_finite()) {
        return Err(Error::NotConverged {
            residual: v.abs(),
            iterations: 0,
        });
    }
    pi.iter_mut().for_each(|v| *v = v.max(0.0));
    let z: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|v| *v /= z);
    Ok(pi)
}

pub fn stationary_three_state(p: &ThreeStateParams) -> Result<Vec<f64>> {
    p.validate()?;
    stationary(&GeneratorMatrix::three_state(p), SolveMethod::Auto)
}

pub fn stationary_general_three_state(p: &GeneralThreeStateParams) -> Result<Vec<f64>> {
    p.validate()?;
    stationary(&GeneratorMatrix::general_three_state(p), SolveMethod::Auto)
}

/// Largest `Λt` handled by one uniformization chunk.
const CHUNK: f64 = 50.0;

/// `initial · exp(Q t)` by uniformization with `Λ = 1.02 max|q_ii|`.
pub fn master_evolve(initial: &[f64], t: f64, gen: &GeneratorMatrix) -> Result<Vec<f64>> {
    if initial.len() != gen.len() {
        return Err(Error::InvalidParams(format!(
            "pmf has {} entries, generator {}",
            initial.len(),
            gen.len()
        )));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidParams(format!(
            "t must be finite and non-negative, got {t}"
        )));
    }
    if initial.iter().any(|&v| !(v >= 0.0)) || (initial.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParams("initial vector is not a pmf".into()));
    }
    let lambda = 1.02 * gen.max_exit_rate();
    if t == 0.0 || lambda == 0.0 {
        return Ok(initial.to_vec());
    }
    let chunks = (lambda * t / CHUNK).ceil().max(1.0) as usize;
    let mu = lambda * t / chunks as f64;
    let mut v = initial.to_vec();
    for _ in 0..chunks {
        v = uniformized_step(&v, mu, lambda, gen);
    }
    clip_pmf(v)
}

fn uniformized_step(v: &[f64], mu: f64, lambda: f64, gen: &GeneratorMatrix) -> Vec<f64> {
    let kmax = (mu + 12.0 * mu.sqrt() + 30.0).ceil() as usize;
    let mut term = v.to_vec();
    let mut acc = vec![0.0; v.len()];
    let mut log_w = -mu;
    let mut next = vec![0.0; v.len()];
    for k in 0..=kmax {
        let w = log_w.exp();
        for (a, t) in acc.iter_mut().zip(&term) {
            *a += w * t;
        }
        // term ← term (I + Q/Λ)
        for (j, n) in next.iter_mut().enumerate() {
            *n = term[j] * (1.0 + gen.diag[j] / lambda);
        }
        for (i, row) in gen.out.iter().enumerate() {
            let ti = term[i] / lambda;
            if ti != 0.0 {
                for &(j, q) in row {
                    next[j] += ti * q;
                }
            }
        }
        std::mem::swap(&mut term, &mut next);
        log_w += mu.ln() - ((k + 1) as f64).ln();
    }
    let z: f64 = acc.iter().sum();
    acc.iter_mut().for_each(|a| *a /= z);
    acc
}

/// Marginal pmf of group `group` over `{0..N}`.
pub fn marginal(pi: &[f64], space: StateSpace, group: usize) -> Vec<f64> {
    let n = match space {
        StateSpace::TwoState { n } | StateSpace::Simplex { n } => n as usize,
    };
    let mut m = vec![0.0; n + 1];
    for (i, &p) in pi.iter().enumerate() {
        m[space.counts(i)[group] as usize] += p;
    }
    m
}

/// Distribution of the mood `ξ = (X₃ − X₂)/(X₂ + X₃)` conditioned on
/// `X₂ + X₃ > 0`, as sorted `(ξ, probability)` atoms.
pub fn mood_atoms(pi: &[f64], space: StateSpace) -> Vec<(f64, f64)> {
    let mut atoms: Vec<(f64, f64)> = Vec::new();
    for (i, &p) in pi.iter().enumerate() {
        let c = space.counts(i);
        let chart = c[1] + c[2];
        if chart == 0 {
            continue;
        }
        let xi = (c[2] as f64 - c[1] as f64) / chart as f64;
        atoms.push((xi, p));
    }
    atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64)> = Vec::new();
    for (x, p) in atoms {
        match merged.last_mut() {
            Some(last) if (last.0 - x).abs() < 1e-12 => last.1 += p,
            _ => merged.push((x, p)),
        }
    }
    let z: f64 = merged.iter().map(|a| a.1).sum();
    merged.iter_mut().for_each(|a| a.1 /= z);
    merged
}

/// `index,x1,x2,x3,probability` rows (two-state: `index,x,probability`).
pub fn pmf_to_csv(pi: &[f64], space: StateSpace) -> String {
    let mut s = String::new();
    match space {
        StateSpace::TwoState { .. } => s.push_str("index,x,probability\n"),
        StateSpace::Simplex { .. } => s.push_str("index,x1,x2,x3,probability\n"),
    }
    for (i, p) in pi.iter().enumerate() {
        let c = space.counts(i);
        let _ = match space {
            StateSpace::TwoState { .. } => writeln!(s, "{i},{},{p:?}", c[0]),
            StateSpace::Simplex { .. } => writeln!(s, "{i},{},{},{},{p:?}", c[0], c[1], c[2]),
        };
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FUNDAMENTALIST, OPTIMIST, PESSIMIST};
    use crate::stats::tv_distance;

    fn binomial(n: u32) -> Vec<f64> {
        let mut c = vec![1.0f64; n as usize + 1];
        for k in 1..=n as usize {
            c[k] = c[k - 1] * (n as usize - k + 1) as f64 / k as f64;
        }
        c.iter().map(|v| v / 2f64.powi(n as i32)).collect()
    }

    #[test]
    fn simplex_enumeration_round_trip() {
        let s = StateSpace::Simplex { n: 7 };
        assert_eq!(s.len(), 36);
        assert_eq!(s.counts(0), [0, 0, 7]);
        assert_eq!(s.counts(1), [0, 1, 6]);
        assert_eq!(s.counts(8), [1, 0, 6]);
        assert_eq!(s.counts(35), [7, 0, 0]);
        for i in 0..s.len() {
            assert_eq!(s.index(s.counts(i)), i);
        }
    }

    #[test]
    fn independent_agents_give_binomial() {
        let p = TwoStateParams::kirman(0.7, 0.7, 0.0, 10);
        let pi = stationary_birth_death(&p).unwrap();
        for (a, b) in pi.iter().zip(binomial(10)) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn kirman_bimodal_matches_power_iteration() {
        let p = TwoStateParams::kirman(0.2, 0.2, 1.0, 20);
        let pi = stationary_birth_death(&p).unwrap();
        assert!(pi[0] > pi[10] && pi[20] > pi[10]);
        let gen = GeneratorMatrix::two_state(&p);
        let lambda = 1.02 * gen.max_exit_rate();
        let mut v = vec![1.0 / 21.0; 21];
        for _ in 0..2_000_000 {
            let q = gen.left_apply(&v);
            let mut delta = 0.0f64;
            for (a, d) in v.iter_mut().zip(q) {
                *a += d / lambda;
                delta = delta.max((d / lambda).abs());
            }
            if delta < 1e-15 {
                break;
            }
        }
        for (a, b) in pi.iter().zip(&v) {
            assert!((a - b).abs() < 1e-10, "{a} {b}");
        }
    }

    #[test]
    fn feedback_shifts_mass_down() {
        let base = TwoStateParams::kirman(0.3, 0.3, 1.0, 40);
        let a = stationary_birth_death(&base).unwrap();
        let b = stationary_birth_death(&base.with_feedback(1.0)).unwrap();
        let mean = |p: &[f64]| p.iter().enumerate().map(|(i, v)| i as f64 * v).sum::<f64>();
        assert!(mean(&b) < mean(&a));
    }

    #[test]
    fn disconnected_chain_names_state() {
        let p = TwoStateParams::kirman(0.0, 0.5, 1.0, 10);
        match stationary_birth_death(&p) {
            Err(Error::Disconnected { state, .. }) => assert_eq!(state, 0),
            Err(Error::InvalidParams(_)) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn generator_rows_sum_to_zero() {
        let g = GeneralThreeStateParams {
            sigma: [[0.0, 0.3, 0.2], [0.5, 0.0, 0.1], [0.4, 0.7, 0.0]],
            h: [[0.0, 1.0, 2.0], [1.0, 0.0, 0.5], [2.0, 0.5, 0.0]],
            n: 12,
        };
        let q = GeneratorMatrix::general_three_state(&g);
        assert!(q.row_sum_error() < 1e-12);
        assert!(q.out.iter().flatten().all(|e| e.1 > 0.0));
    }

    #[test]
    fn detailed_balance_equals_null_space() {
        for &(s1, s2, h, alpha) in &[
            (0.2, 0.2, 1.0, 0.0),
            (0.5, 1.5, 0.7, 0.0),
            (0.3, 0.4, 1.0, 1.0),
        ] {
            let p = TwoStateParams::kirman(s1, s2, h, 25).with_feedback(alpha);
            let db = stationary_birth_death(&p).unwrap();
            let gen = GeneratorMatrix::two_state(&p);
            let ns = stationary(&gen, SolveMethod::Dense).unwrap();
            assert!(tv_distance(&db, &ns) < 1e-10);
            let gs = stationary(&gen, SolveMethod::GaussSeidel).unwrap();
            let tv = tv_distance(&db, &gs);
            assert!(tv < 1e-6, "{tv}");
            assert!(stationarity_residual(&gen, &ns) <= RESIDUAL_TOL);
        }
    }

    #[test]
    fn symmetric_rates_give_permutation_symmetric_pmf() {
        let g = GeneralThreeStateParams {
            sigma: [[0.0, 0.4, 0.4], [0.4, 0.0, 0.4], [0.4, 0.4, 0.0]],
            h: [[0.0, 1.0, 1.0], [1.0, 0.0, 1.0], [1.0, 1.0, 0.0]],
            n: 9,
        };
        let space = StateSpace::Simplex { n: 9 };
        let pi = stationary_general_three_state(&g).unwrap();
        const PERMS: [[usize; 3]; 6] = [
            [0, 1, 2],
            [0, 2, 1],
            [1, 0, 2],
            [1, 2, 0],
            [2, 0, 1],
            [2, 1, 0],
        ];
        for i in 0..pi.len() {
            let c = space.counts(i);
            for p in PERMS {
                let j = space.index([c[p[0]], c[p[1]], c[p[2]]]);
                assert!((pi[i] - pi[j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn two_agents_by_hand() {
        // N = 2: six states. Build the balance equations directly and solve.
        let g = GeneralThreeStateParams {
            sigma: [[0.0, 0.1, 0.2], [0.3, 0.0, 0.4], [0.5, 0.6, 0.0]],
            h: [[0.0, 0.7, 0.8], [0.7, 0.0, 0.9], [0.8, 0.9, 0.0]],
            n: 2,
        };
        let space = StateSpace::Simplex { n: 2 };
        let mut q = DMatrix::<f64>::zeros(6, 6);
        for i in 0..6 {
            let c = space.counts(i);
            for from in 0..3 {
                for to in 0..3 {
                    if from == to || c[from] == 0 {
                        continue;
                    }
                    let rate = c[from] as f64 * (g.sigma[from][to] + g.h[from][to] * c[to] as f64);
                    let mut d = c;
                    d[from] -= 1;
                    d[to] += 1;
                    let j = space.index(d);
                    q[(i, j)] += rate;
                    q[(i, i)] -= rate;
                }
            }
        }
        let mut a = q.transpose();
        for j in 0..6 {
            a[(5, j)] = 1.0;
        }
        let mut b = DVector::zeros(6);
        b[5] = 1.0;
        let expect = a.lu().solve(&b).unwrap();
        let pi = stationary_general_three_state(&g).unwrap();
        for i in 0..6 {
            assert!((pi[i] - expect[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn reducible_chain_rejected() {
        let g = GeneralThreeStateParams {
            sigma: [[0.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]],
            h: [[0.0, 1.0, 1.0], [1.0, 0.0, 1.0], [1.0, 1.0, 0.0]],
            n: 4,
        };
        let gen = GeneratorMatrix::general_three_state(&g);
        assert!(matches!(
            stationary(&gen, SolveMethod::Auto),
            Err(Error::Reducible(_))
        ));
    }

    #[test]
    fn fundamentalist_marginal_separates_at_large_h() {
        let p = ThreeStateParams {
            eps_cf: 3.0,
            eps_fc: 3.0,
            eps_cc: 3.0,
            big_h: 100.0,
            h1: 1.0,
            alpha: 0.0,
            r0: 1.0,
            n: 50,
        };
        let space = StateSpace::Simplex { n: 50 };
        let pi = stationary_three_state(&p).unwrap();
        let mf = marginal(&pi, space, FUNDAMENTALIST);
        // chartists move to fundamentalists at σ_cf + h₁X₁, fundamentalists
        // leave at σ_fc + h₁(N − X₁)
        let induced = TwoStateParams::kirman(p.sigma_cf(), p.sigma_fc(), p.h1, 50);
        let bd = stationary_birth_death(&induced).unwrap();
        assert!(tv_distance(&mf, &bd) < 0.05, "{}", tv_distance(&mf, &bd));
        let atoms = mood_atoms(&pi, space);
        let z: f64 = atoms.iter().map(|a| a.1).sum();
        assert!((z - 1.0).abs() < 1e-12);
        let m1: f64 = atoms.iter().map(|a| a.0 * a.1).sum();
        assert!(m1.abs() < 1e-10);
        let _ = (PESSIMIST, OPTIMIST);
    }

    #[test]
    fn evolve_identity_and_conservation() {
        let p = TwoStateParams::kirman(0.3, 0.5, 1.0, 15);
        let gen = GeneratorMatrix::two_state(&p);
        let mut init = vec![0.0; 16];
        init[3] = 1.0;
        assert_eq!(master_evolve(&init, 0.0, &gen).unwrap(), init);
        for t in [0.01, 0.3, 2.0, 17.0] {
            let v = master_evolve(&init, t, &gen).unwrap();
            assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            assert!(v.iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn evolve_reaches_stationary() {
        let p = TwoStateParams::kirman(0.5, 0.5, 1.0, 10);
        let gen = GeneratorMatrix::two_state(&p);
        // spectral gap from the symmetrised (reversible) generator
        let pi = stationary_birth_death(&p).unwrap();
        let q = gen.to_dense();
        let s = DMatrix::from_fn(11, 11, |i, j| q[(i, j)] * (pi[i] / pi[j]).sqrt());
        let s = (&s + s.transpose()) * 0.5;
        let mut ev: Vec<f64> = s.symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        let gap = -ev[1];
        assert!(gap > 0.0);
        let mut init = vec![0.0; 11];
        init[0] = 1.0;
        let v = master_evolve(&init, 100.0 / gap, &gen).unwrap();
        assert!(tv_distance(&v, &pi) < 1e-8);
    }

    #[test]
    fn first_event_time_is_exponential() {
        // pure birth: only the first transition out of X = 0 matters
        let p = TwoStateParams::kirman(0.4, 0.4, 0.0, 6);
        let gen = GeneratorMatrix::two_state(&p);
        let mut init = vec![0.0; 7];
        init[0] = 1.0;
        let rate = -gen.diag[0];
        for t in [0.05, 0.2, 0.5] {
            let v = master_evolve(&init, t, &gen).unwrap();
            // leaving 0 and returning within t has probability O(t²)
            let survive = (-rate * t).exp();
            assert!(v[0] >= survive - 1e-12);
            assert!(v[0] - survive < 0.5 * (rate * t).powi(2));
        }
    }

    #[test]
    fn pmf_csv_header() {
        let csv = pmf_to_csv(&[0.25, 0.75], StateSpace::TwoState { n: 1 });
        assert_eq!(csv, "index,x,probability\n0,0,0.25\n1,1,0.75\n");
    }
}
