//! Parameters, transition rates, feedback kernels and closed-form exponents.
//!
//! Everything here is a pure function of its arguments. Rates are total
//! channel rates (group size times per-capita rate), which is what the
//! event-driven simulator and the generator matrix consume directly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Two-state (Kirman) herding model with optional state-dependent event rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoStateParams {
    /// Individual switching rate toward state 1.
    pub sigma1: f64,
    /// Individual switching rate toward state 0.
    pub sigma2: f64,
    /// Herding intensity per agent pair.
    pub h: f64,
    #[serde(rename = "N")]
    pub n: u32,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default)]
    pub feedback_enabled: bool,
}

impl TwoStateParams {
    pub fn kirman(sigma1: f64, sigma2: f64, h: f64, n: u32) -> Self {
        TwoStateParams {
            sigma1,
            sigma2,
            h,
            n,
            alpha: 0.0,
            feedback_enabled: false,
        }
    }

    pub fn with_feedback(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self.feedback_enabled = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParams(m.to_string()));
        if !(self.sigma1 > 0.0 && self.sigma1.is_finite()) {
            return bad("sigma1 must be positive");
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return bad("sigma2 must be positive");
        }
        if !(self.h >= 0.0 && self.h.is_finite()) {
            return bad("h must be non-negative");
        }
        if self.n < 1 {
            return bad("N must be at least 1");
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be non-negative");
        }
        Ok(())
    }

    /// Dimensionless individual rates `(eps1, eps2) = (sigma1 / h, sigma2 / h)`.
    pub fn epsilons(&self) -> Option<(f64, f64)> {
        (self.h > 0.0).then(|| (self.sigma1 / self.h, self.sigma2 / self.h))
    }
}

/// Three-state financial-market model: fundamentalists, pessimists, optimists.
///
/// Stored in the scaled form (`eps_* `, `H`, `h1`); the microscopic rates are
/// recovered by [`ThreeStateParams::to_general`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThreeStateParams {
    pub eps_cf: f64,
    pub eps_fc: f64,
    pub eps_cc: f64,
    #[serde(rename = "H")]
    pub big_h: f64,
    #[serde(default = "one")]
    pub h1: f64,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default = "one")]
    pub r0: f64,
    #[serde(rename = "N")]
    pub n: u32,
}

fn one() -> f64 {
    1.0
}

impl ThreeStateParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParams(m.to_string()));
        for (name, v) in [
            ("eps_cf", self.eps_cf),
            ("eps_fc", self.eps_fc),
            ("eps_cc", self.eps_cc),
            ("h1", self.h1),
            ("r0", self.r0),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(&format!("{name} must be positive"));
            }
        }
        if !(self.big_h >= 1.0 && self.big_h.is_finite()) {
            return bad("H must be at least 1");
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be non-negative");
        }
        if self.n < 1 {
            return bad("N must be at least 1");
        }
        Ok(())
    }

    pub fn sigma_cf(&self) -> f64 {
        self.eps_cf * self.h1
    }

    pub fn sigma_fc(&self) -> f64 {
        self.eps_fc * self.h1
    }

    pub fn sigma_cc(&self) -> f64 {
        self.eps_cc * self.big_h * self.h1
    }

    /// Expands the symmetric reduction into the general six-channel form:
    /// σ₂₃ = σ₃₂ = σ_cc, σ₁₂ = σ₁₃ = σ_fc/2, σ₂₁ = σ₃₁ = σ_cf,
    /// h₁₂ = h₁₃ = h₁, h₂₃ = H·h₁.
    pub fn to_general(&self) -> GeneralThreeStateParams {
        let (f, p, o) = (FUNDAMENTALIST, PESSIMIST, OPTIMIST);
        let mut sigma = [[0.0; 3]; 3];
        sigma[f][p] = self.sigma_fc() / 2.0;
        sigma[f][o] = self.sigma_fc() / 2.0;
        sigma[p][f] = self.sigma_cf();
        sigma[o][f] = self.sigma_cf();
        sigma[p][o] = self.sigma_cc();
        sigma[o][p] = self.sigma_cc();
        let mut h = [[0.0; 3]; 3];
        h[f][p] = self.h1;
        h[p][f] = self.h1;
        h[f][o] = self.h1;
        h[o][f] = self.h1;
        h[p][o] = self.big_h * self.h1;
        h[o][p] = self.big_h * self.h1;
        GeneralThreeStateParams {
            sigma,
            h,
            n: self.n,
        }
    }
}

/// Group indices of the financial interpretation (x₁ = n_f, x₂ = n_p, x₃ = n_o).
pub const FUNDAMENTALIST: usize = 0;
pub const PESSIMIST: usize = 1;
pub const OPTIMIST: usize = 2;

/// General three-state herding model.
///
/// `sigma[j][i]` is the individual rate of a single agent moving from group
/// `j` to group `i`; `h` is the symmetric herding matrix. Diagonals are unused.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneralThreeStateParams {
    pub sigma: [[f64; 3]; 3],
    pub h: [[f64; 3]; 3],
    #[serde(rename = "N")]
    pub n: u32,
}

impl GeneralThreeStateParams {
    pub fn validate(&self) -> Result<()> {
        for (j, i) in CHANNELS {
            let s = self.sigma[j][i];
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::InvalidParams(format!(
                    "sigma[{j}][{i}] must be non-negative"
                )));
            }
            let h = self.h[j][i];
            if !(h >= 0.0 && h.is_finite()) {
                return Err(Error::InvalidParams(format!(
                    "h[{j}][{i}] must be non-negative"
                )));
            }
            if h != self.h[i][j] {
                return Err(Error::InvalidParams(format!(
                    "h must be symmetric: h[{j}][{i}] != h[{i}][{j}]"
                )));
            }
        }
        if self.n < 1 {
            return Err(Error::InvalidParams("N must be at least 1".into()));
        }
        Ok(())
    }
}

/// The six ordered channels `(from, to)` of the three-state model, in the
/// order used by every rate vector in this crate.
pub const CHANNELS: [(usize, usize); 6] = [(0, 1), (0, 2), (1, 0), (1, 2), (2, 0), (2, 1)];

/// Agent counts at the microscopic level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PopulationState {
    TwoState { x: u32, n: u32 },
    ThreeState { counts: [u32; 3] },
}

impl PopulationState {
    pub fn two(x: u32, n: u32) -> Result<Self> {
        if x > n || n == 0 {
            return Err(Error::InvalidParams(format!(
                "two-state count {x} outside [0, {n}]"
            )));
        }
        Ok(PopulationState::TwoState { x, n })
    }

    pub fn three(counts: [u32; 3]) -> Result<Self> {
        if counts.iter().map(|&c| c as u64).sum::<u64>() == 0 {
            return Err(Error::InvalidParams(
                "three-state population is empty".into(),
            ));
        }
        Ok(PopulationState::ThreeState { counts })
    }

    pub fn total(&self) -> u32 {
        match *self {
            PopulationState::TwoState { n, .. } => n,
            PopulationState::ThreeState { counts } => counts.iter().sum(),
        }
    }

    /// Fractions `x_i = X_i / N`.
    pub fn fractions(&self) -> Vec<f64> {
        let n = self.total() as f64;
        match *self {
            PopulationState::TwoState { x, .. } => vec![x as f64 / n],
            PopulationState::ThreeState { counts } => {
                counts.iter().map(|&c| c as f64 / n).collect()
            }
        }
    }

    /// Default two-state start, `round(N σ₁ / (σ₁ + σ₂))`.
    pub fn default_two_state(p: &TwoStateParams) -> Self {
        let x = (p.n as f64 * p.sigma1 / (p.sigma1 + p.sigma2)).round() as u32;
        PopulationState::TwoState {
            x: x.min(p.n),
            n: p.n,
        }
    }

    /// Default three-state start: equal split, remainder to fundamentalists.
    pub fn default_three_state(n: u32) -> Self {
        let third = n / 3;
        PopulationState::ThreeState {
            counts: [n - 2 * third, third, third],
        }
    }
}

/// Inverse event-rate factor of the two-state model, `τ = (X / (N − X))^(−α)`.
pub fn tau_two_state(x: u32, n: u32, alpha: f64) -> Result<f64> {
    if x == 0 || x >= n {
        return Err(Error::Boundary(format!(
            "tau_two_state needs 0 < X < N, got X={x}, N={n}"
        )));
    }
    let y = x as f64 / (n - x) as f64;
    Ok(pow(y, -alpha))
}

/// Inverse event-rate factor of the three-state model,
/// `τ = [1 + |(1 − n_f)/n_f · ξ|^α]^(−1)`.
///
/// `alpha = 0` switches the feedback off and returns exactly 1.
pub fn tau_three_state(n_f: f64, xi: f64, alpha: f64) -> Result<f64> {
    if !(n_f > 0.0) {
        return Err(Error::Boundary(format!(
            "tau_three_state needs n_f > 0, got {n_f}"
        )));
    }
    if n_f > 1.0 || !(-1.0..=1.0).contains(&xi) {
        return Err(Error::Domain(format!("n_f = {n_f}, xi = {xi}")));
    }
    if alpha == 0.0 {
        return Ok(1.0);
    }
    let p = ((1.0 - n_f) / n_f * xi).abs();
    Ok(1.0 / (1.0 + pow(p, alpha)))
}

/// `x^a` using integer powers when the exponent allows it.
#[inline]
pub(crate) fn pow(x: f64, a: f64) -> f64 {
    if a == a.trunc() && a.abs() <= 16.0 {
        x.powi(a as i32)
    } else {
        x.powf(a)
    }
}

/// Total up/down channel rates of the two-state model at count `x`.
///
/// `rate_up = (N − X)(σ₁ + hX/τ)`, `rate_down = X(σ₂ + h(N − X))/τ`. The
/// feedback kernel is evaluated with X clamped to `[1, N − 1]`.
pub fn two_state_rates(x: u32, p: &TwoStateParams) -> (f64, f64) {
    let n = p.n;
    debug_assert!(x <= n);
    let tau = if p.feedback_enabled && n >= 2 {
        let xc = x.clamp(1, n - 1);
        // interior by construction
        tau_two_state(xc, n, p.alpha).unwrap_or(1.0)
    } else {
        1.0
    };
    let xf = x as f64;
    let rest = (n - x) as f64;
    let up = rest * (p.sigma1 + p.h * xf / tau);
    let down = xf * (p.sigma2 + p.h * rest) / tau;
    (up, down)
}

/// Six channel rates `X_j (σ_ji + h_ji X_i)`, ordered as [`CHANNELS`].
pub fn three_state_rates(counts: [u32; 3], p: &GeneralThreeStateParams) -> [f64; 6] {
    let mut out = [0.0; 6];
    for (k, &(j, i)) in CHANNELS.iter().enumerate() {
        let xj = counts[j] as f64;
        out[k] = xj * (p.sigma[j][i] + p.h[j][i] * counts[i] as f64);
    }
    out
}

/// Channel rates of the financial three-state model with feedback.
///
/// The feedback kernel is [`tau_three_state`] at the current `(n_f, ξ)`, with
/// `n_f` clamped to `[1/N, 1]` and ξ = 0 when there are no chartists. Every
/// herding term and every chartist-initiated individual switch is divided by
/// τ; the fundamentalists' individual switching (σ_fc/2 per chartist group)
/// is not.
pub fn three_state_financial_rates(counts: [u32; 3], p: &ThreeStateParams) -> [f64; 6] {
    let tau = financial_tau(counts, p);
    let g = p.to_general();
    let mut out = [0.0; 6];
    for (k, &(j, i)) in CHANNELS.iter().enumerate() {
        let xj = counts[j] as f64;
        let herd = g.h[j][i] * counts[i] as f64 / tau;
        let individual = if j == FUNDAMENTALIST {
            g.sigma[j][i]
        } else {
            g.sigma[j][i] / tau
        };
        out[k] = xj * (individual + herd);
    }
    out
}

fn financial_tau(counts: [u32; 3], p: &ThreeStateParams) -> f64 {
    if p.alpha == 0.0 {
        return 1.0;
    }
    let n: u32 = counts.iter().sum();
    let n_f = (counts[FUNDAMENTALIST] as f64 / n as f64).clamp(1.0 / n as f64, 1.0);
    let chartists = counts[PESSIMIST] + counts[OPTIMIST];
    let xi = if chartists == 0 {
        0.0
    } else {
        (counts[OPTIMIST] as f64 - counts[PESSIMIST] as f64) / chartists as f64
    };
    tau_three_state(n_f, xi, p.alpha).unwrap_or(1.0)
}

/// Exponents of the general power-law SDE class matched to the two-state model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exponents {
    pub eta: f64,
    pub lambda: f64,
    pub beta: f64,
}

/// `η = (3 + α)/2`, `λ = ε₂ + α + 1`, `β = 1 + (λ − 3)/(2(η − 1))`.
pub fn theoretical_exponents(alpha: f64, eps2: f64) -> Result<Exponents> {
    if !(eps2 > 0.0) {
        return Err(Error::InvalidParams("eps2 must be positive".into()));
    }
    let eta = (3.0 + alpha) / 2.0;
    let lambda = eps2 + alpha + 1.0;
    let beta = spectral_exponent(eta, lambda)?;
    Ok(Exponents { eta, lambda, beta })
}

/// PSD exponent of the general class, `β = 1 + (λ − 3)/(2(η − 1))`.
pub fn spectral_exponent(eta: f64, lambda: f64) -> Result<f64> {
    if (eta - 1.0).abs() < 1e-12 {
        return Err(Error::UndefinedExponent);
    }
    Ok(1.0 + (lambda - 3.0) / (2.0 * (eta - 1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fig3() -> ThreeStateParams {
        ThreeStateParams {
            eps_cf: 3.0,
            eps_fc: 3.0,
            eps_cc: 3.0,
            big_h: 100.0,
            h1: 1.0,
            alpha: 2.0,
            r0: 1.0,
            n: 30,
        }
    }

    #[test]
    fn tau_two_state_values() {
        assert_eq!(tau_two_state(3, 10, 0.0).unwrap(), 1.0);
        assert_eq!(tau_two_state(5, 10, 2.5).unwrap(), 1.0);
        assert!((tau_two_state(20, 30, 1.0).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(tau_two_state(0, 10, 1.0), Err(Error::Boundary(_))));
        assert!(matches!(
            tau_two_state(10, 10, 1.0),
            Err(Error::Boundary(_))
        ));
    }

    #[test]
    fn tau_three_state_values() {
        assert_eq!(tau_three_state(0.3, 0.0, 2.0).unwrap(), 1.0);
        assert!((tau_three_state(0.5, 1.0, 2.0).unwrap() - 0.5).abs() < 1e-15);
        assert!(tau_three_state(1e-9, 0.5, 2.0).unwrap() < 1e-15);
        assert!(matches!(
            tau_three_state(0.0, 0.5, 2.0),
            Err(Error::Boundary(_))
        ));
        assert_eq!(tau_three_state(0.2, 0.7, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn two_state_pure_entry() {
        let p = TwoStateParams::kirman(0.7, 0.3, 0.0, 12);
        assert_eq!(two_state_rates(0, &p), (12.0 * 0.7, 0.0));
        let (up, down) = two_state_rates(12, &p);
        assert_eq!(up, 0.0);
        assert!((down - 12.0 * 0.3).abs() < 1e-12);
    }

    #[test]
    fn two_state_independent_agents() {
        let p = TwoStateParams::kirman(0.4, 0.4, 0.0, 9);
        for x in 0..=9 {
            let (up, down) = two_state_rates(x, &p);
            assert!((up - (9 - x) as f64 * 0.4).abs() < 1e-12);
            assert!((down - x as f64 * 0.4).abs() < 1e-12);
        }
    }

    #[test]
    fn two_state_kirman_form() {
        let p = TwoStateParams::kirman(0.2, 0.5, 1.3, 20);
        for x in 0..=20u32 {
            let (up, down) = two_state_rates(x, &p);
            let xf = x as f64;
            assert!((up - (20.0 - xf) * (0.2 + 1.3 * xf)).abs() < 1e-12);
            assert!((down - xf * (0.5 + 1.3 * (20.0 - xf))).abs() < 1e-12);
        }
    }

    #[test]
    fn two_state_kirman_difference_identity() {
        // rate_up(X) - rate_up(X-1) = -σ₁ + h(N - 2X + 1)
        let (s1, h, n) = (0.35, 0.8, 40);
        let p = TwoStateParams::kirman(s1, 0.1, h, n);
        for x in 1..=n {
            let d = two_state_rates(x, &p).0 - two_state_rates(x - 1, &p).0;
            let expected = -s1 + h * (n as f64 - 2.0 * x as f64 + 1.0);
            assert!((d - expected).abs() < 1e-10, "x={x}: {d} vs {expected}");
        }
    }

    #[test]
    fn sigma1_is_never_scaled_by_tau() {
        let p = TwoStateParams::kirman(0.5, 0.5, 0.0, 10).with_feedback(2.0);
        for x in 0..10 {
            let (up, _) = two_state_rates(x, &p);
            assert!((up - (10 - x) as f64 * 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn three_state_empty_source_and_symmetry() {
        let mut g = GeneralThreeStateParams {
            sigma: [[0.3; 3]; 3],
            h: [[0.0; 3]; 3],
            n: 12,
        };
        let r = three_state_rates([4, 4, 4], &g);
        assert!(r.iter().all(|&v| (v - r[0]).abs() < 1e-15));
        g.h = [[0.5; 3]; 3];
        let r = three_state_rates([0, 5, 7], &g);
        assert_eq!(r[0], 0.0);
        assert_eq!(r[1], 0.0);
        assert!(r[2] > 0.0);
    }

    #[test]
    fn financial_rates_reduce_at_zero_alpha() {
        let mut p = fig3();
        p.alpha = 0.0;
        let g = p.to_general();
        let n = p.n;
        for x1 in 0..=n {
            for x2 in 0..=(n - x1) {
                let c = [x1, x2, n - x1 - x2];
                assert_eq!(three_state_financial_rates(c, &p), three_state_rates(c, &g));
            }
        }
    }

    #[test]
    fn financial_rates_zero_mood_unmodified() {
        let p = fig3();
        let c = [10, 10, 10];
        assert_eq!(
            three_state_financial_rates(c, &p),
            three_state_rates(c, &p.to_general())
        );
    }

    #[test]
    fn financial_speed_ratio() {
        let p = fig3();
        let g = p.to_general();
        let (f, pe, o) = (FUNDAMENTALIST, PESSIMIST, OPTIMIST);
        assert_eq!(g.h[pe][o], 100.0 * g.h[f][pe]);
        assert_eq!(g.h[o][pe], 100.0 * g.h[o][f]);
        assert_eq!(g.sigma[f][pe] + g.sigma[f][o], p.sigma_fc());
        assert_eq!(g.sigma[pe][f], p.sigma_cf());
        assert_eq!(g.sigma[pe][o], p.eps_cc * p.big_h * p.h1);
    }

    #[test]
    fn exponents_fig1_limits() {
        let e = theoretical_exponents(1.0, 3.0).unwrap();
        assert_eq!((e.eta, e.lambda, e.beta), (2.0, 5.0, 2.0));
        let e = theoretical_exponents(1.0, 0.1).unwrap();
        assert!((e.lambda - 2.1).abs() < 1e-12);
        assert!((e.beta - 0.55).abs() < 1e-12);
        assert!((spectral_exponent(3.7, 3.0).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(
            theoretical_exponents(-1.0, 1.0),
            Err(Error::UndefinedExponent)
        );
    }

    proptest! {
        #[test]
        fn two_state_rates_nonnegative(
            n in 1u32..=50, s1 in 1e-3f64..5.0, s2 in 1e-3f64..5.0,
            h in 0.0f64..5.0, alpha in 0.0f64..3.0, fb in any::<bool>()
        ) {
            let mut p = TwoStateParams::kirman(s1, s2, h, n);
            p.alpha = alpha;
            p.feedback_enabled = fb;
            for x in 0..=n {
                let (up, down) = two_state_rates(x, &p);
                prop_assert!(up >= 0.0 && down >= 0.0 && up.is_finite() && down.is_finite());
                if x == n { prop_assert_eq!(up, 0.0); }
                if x == 0 { prop_assert_eq!(down, 0.0); }
            }
        }

        #[test]
        fn financial_rates_nonnegative(
            n in 1u32..=25, e in 0.1f64..5.0, big_h in 1.0f64..200.0, alpha in 0.0f64..3.0
        ) {
            let p = ThreeStateParams { eps_cf: e, eps_fc: e * 0.5, eps_cc: e * 2.0, big_h, h1: 0.7, alpha, r0: 1.0, n };
            for x1 in 0..=n {
                for x2 in 0..=(n - x1) {
                    let c = [x1, x2, n - x1 - x2];
                    let r = three_state_financial_rates(c, &p);
                    for (k, &(j, _)) in CHANNELS.iter().enumerate() {
                        prop_assert!(r[k] >= 0.0 && r[k].is_finite());
                        if c[j] == 0 { prop_assert_eq!(r[k], 0.0); }
                    }
                }
            }
        }

        #[test]
        fn lambda_linear_beta_monotone(alpha in 0.0f64..4.0, e in 0.05f64..5.0, de in 0.01f64..2.0) {
            let a = theoretical_exponents(alpha, e).unwrap();
            let b = theoretical_exponents(alpha, e + de).unwrap();
            prop_assert!(((b.lambda - a.lambda) - de).abs() < 1e-12);
            prop_assert!(b.beta > a.beta);
        }
    }
}
