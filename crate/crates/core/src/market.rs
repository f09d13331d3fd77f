//! Financial observables of the three-group model: mood, log-price and
//! windowed returns.
//!
//! The fundamental price is normalised to one, so the log-price is
//! `p = r₀ (n_o − n_p)/n_f = r₀ (1 − n_f) ξ / n_f`.

use std::collections::VecDeque;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::trajectory::Trajectory;

/// `ξ = (n_o − n_p)/(n_o + n_p)`.
pub fn mood(n_o: f64, n_p: f64) -> Result<f64> {
    let total = n_o + n_p;
    if !(total > 0.0) {
        return Err(Error::UndefinedMood);
    }
    Ok(((n_o - n_p) / total).clamp(-1.0, 1.0))
}

/// Inverse of [`mood`] on the chartist share `1 − n_f`: returns `(n_o, n_p)`.
pub fn populations_from_mood(n_f: f64, xi: f64) -> (f64, f64) {
    let c = 1.0 - n_f;
    let n_o = c * (1.0 + xi) / 2.0;
    (n_o, c - n_o)
}

pub fn log_price(n_f: f64, xi: f64, r0: f64) -> Result<f64> {
    if !(n_f > 0.0) {
        return Err(Error::Domain(format!("log-price needs n_f > 0, got {n_f}")));
    }
    Ok(r0 * (1.0 - n_f) * xi / n_f)
}

pub fn log_price_from_populations(n_o: f64, n_p: f64, n_f: f64, r0: f64) -> Result<f64> {
    if !(n_f > 0.0) {
        return Err(Error::Domain(format!("log-price needs n_f > 0, got {n_f}")));
    }
    Ok(r0 * (n_o - n_p) / n_f)
}

/// Log-price path of a three-group trajectory.
///
/// Accepts either `(n_f, xi)` columns from the transformed SDE or count
/// columns `(x1, x2, x3)` from the jump simulator.
pub fn price_series(traj: &Trajectory, r0: f64) -> Result<Trajectory> {
    let mut out = Vec::with_capacity(traj.len());
    if let (Some(f), Some(m)) = (traj.column_index("n_f"), traj.column_index("xi")) {
        for i in 0..traj.len() {
            let r = traj.row(i);
            out.push(log_price(r[f], r[m], r0)?);
        }
    } else if let (Some(a), Some(b), Some(c)) = (
        traj.column_index("x1"),
        traj.column_index("x2"),
        traj.column_index("x3"),
    ) {
        for i in 0..traj.len() {
            let r = traj.row(i);
            out.push(log_price_from_populations(r[c], r[b], r[a], r0)?);
        }
    } else {
        return Err(Error::InvalidParams(format!(
            "no (n_f, xi) or (x1, x2, x3) columns in {:?}",
            traj.columns
        )));
    }
    Ok(Trajectory::from_column(
        traj.t0,
        traj.dt,
        "p",
        out,
        traj.meta.clone(),
    ))
}

/// Number of grid steps in `window_t`, or an error when it is not a whole
/// positive multiple of `dt`.
pub fn window_steps(window_t: f64, dt: f64) -> Result<usize> {
    let k = (window_t / dt).round();
    if !(window_t > 0.0 && k >= 1.0 && (k * dt - window_t).abs() <= 1e-9 * window_t) {
        return Err(Error::WindowNotOnGrid {
            window: window_t,
            dt,
        });
    }
    Ok(k as usize)
}

/// `r(t) = p(t) − p(t − T)` on the grid where both ends exist.
pub fn returns(price: &Trajectory, window_t: f64) -> Result<Trajectory> {
    if price.width() != 1 {
        return Err(Error::InvalidParams(
            "price trajectory must have one column".into(),
        ));
    }
    let k = window_steps(window_t, price.dt)?;
    if price.len() <= k {
        return Err(Error::TooShort {
            needed: k + 1,
            got: price.len(),
        });
    }
    let p = &price.values;
    let r: Vec<f64> = (k..p.len()).map(|i| p[i] - p[i - k]).collect();
    Ok(Trajectory::from_column(
        price.time(k),
        price.dt,
        "r",
        r,
        price.meta.clone(),
    ))
}

/// Streaming version of [`returns`] for paths too long to keep in memory.
#[derive(Debug, Clone)]
pub struct ReturnStream {
    lag: usize,
    buf: VecDeque<f64>,
}

impl ReturnStream {
    pub fn new(window_t: f64, dt: f64) -> Result<Self> {
        let lag = window_steps(window_t, dt)?;
        Ok(ReturnStream {
            lag,
            buf: VecDeque::with_capacity(lag + 1),
        })
    }

    /// Feeds the next price sample; yields a return once the window is full.
    pub fn push(&mut self, p: f64) -> Option<f64> {
        self.buf.push_back(p);
        if self.buf.len() > self.lag {
            let old = self.buf.pop_front().unwrap();
            Some(p - old)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarketSeries {
    pub price: Trajectory,
    pub returns: Trajectory,
    pub window_t: f64,
}

impl MarketSeries {
    pub fn new(price: Trajectory, window_t: f64) -> Result<Self> {
        let returns = returns(&price, window_t)?;
        Ok(MarketSeries {
            price,
            returns,
            window_t,
        })
    }

    pub fn abs_returns(&self) -> Vec<f64> {
        self.returns.values.iter().map(|r| r.abs()).collect()
    }

    /// `t,p,r,abs_r` rows over the span where returns are defined.
    pub fn to_csv(&self) -> String {
        let k = self.price.len() - self.returns.len();
        let mut s = String::new();
        let _ = writeln!(s, "# window_T: {:?}", self.window_t);
        s.push_str("t,p,r,abs_r\n");
        for (i, r) in self.returns.values.iter().enumerate() {
            let _ = writeln!(
                s,
                "{:?},{:?},{:?},{:?}",
                self.returns.time(i),
                self.price.values[i + k],
                r,
                r.abs()
            );
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::TrajectoryMeta;
    use proptest::prelude::*;

    fn series(v: Vec<f64>, dt: f64) -> Trajectory {
        Trajectory::from_column(0.0, dt, "p", v, TrajectoryMeta::default())
    }

    #[test]
    fn mood_edges() {
        assert_eq!(mood(0.2, 0.2).unwrap(), 0.0);
        assert_eq!(mood(0.3, 0.0).unwrap(), 1.0);
        assert_eq!(mood(0.0, 0.3).unwrap(), -1.0);
        assert_eq!(mood(0.0, 0.0), Err(Error::UndefinedMood));
    }

    #[test]
    fn populations_edges() {
        assert_eq!(populations_from_mood(0.4, 0.0), (0.3, 0.3));
        assert_eq!(populations_from_mood(1.0, 0.7), (0.0, 0.0));
    }

    #[test]
    fn price_values() {
        assert_eq!(log_price(0.3, 0.0, 1.0).unwrap(), 0.0);
        assert_eq!(log_price(0.5, 1.0, 1.0).unwrap(), 1.0);
        assert!(log_price(0.0, 0.5, 1.0).is_err());
    }

    #[test]
    fn price_forms_agree_on_grid() {
        for i in 1..40 {
            for j in 0..=40 {
                let nf = i as f64 / 40.0;
                let xi = -1.0 + j as f64 / 20.0;
                let (no, np) = populations_from_mood(nf, xi);
                let a = log_price(nf, xi, 1.3).unwrap();
                let b = log_price_from_populations(no, np, nf, 1.3).unwrap();
                assert!((a - b).abs() <= 1e-14 * a.abs().max(1.0), "{nf} {xi}");
            }
        }
    }

    #[test]
    fn returns_of_constant_and_linear() {
        let r = returns(&series(vec![2.5; 50], 0.1), 0.5).unwrap();
        assert_eq!(r.len(), 45);
        assert!(r.values.iter().all(|&v| v == 0.0));
        let lin: Vec<f64> = (0..100).map(|i| 3.0 * i as f64 * 0.1).collect();
        let r = returns(&series(lin, 0.1), 1.0).unwrap();
        assert!(r.values.iter().all(|&v| (v - 3.0).abs() < 1e-12));
        assert!((r.t0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn off_grid_window_rejected() {
        let e = returns(&series(vec![0.0; 50], 0.1), 0.25).unwrap_err();
        assert!(matches!(e, Error::WindowNotOnGrid { .. }));
        assert!(returns(&series(vec![0.0; 50], 0.1), 0.0).is_err());
        assert!(matches!(
            returns(&series(vec![0.0; 5], 0.1), 1.0),
            Err(Error::TooShort { .. })
        ));
    }

    #[test]
    fn stream_matches_batch() {
        let p: Vec<f64> = (0..200).map(|i| ((i * 37 % 101) as f64).sin()).collect();
        let batch = returns(&series(p.clone(), 0.01), 0.07).unwrap();
        let mut s = ReturnStream::new(0.07, 0.01).unwrap();
        let streamed: Vec<f64> = p.iter().filter_map(|&v| s.push(v)).collect();
        assert_eq!(streamed, batch.values);
    }

    #[test]
    fn market_csv_shape() {
        let m = MarketSeries::new(series(vec![0.0, 1.0, 3.0, 6.0], 1.0), 1.0).unwrap();
        let csv = m.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[1], "t,p,r,abs_r");
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[4], "3.0,6.0,3.0,3.0");
    }

    proptest! {
        #[test]
        fn mood_round_trip(nf in 0.0f64..0.999, xi in -1.0f64..=1.0) {
            let (no, np) = populations_from_mood(nf, xi);
            prop_assert!(no >= 0.0 && np >= 0.0);
            prop_assert!((nf + no + np - 1.0).abs() <= 1e-15);
            prop_assert!((mood(no, np).unwrap() - xi).abs() <= 1e-12);
        }

        #[test]
        fn price_sign_follows_mood(nf in 0.001f64..0.999, xi in -1.0f64..=1.0) {
            let p = log_price(nf, xi, 1.0).unwrap();
            prop_assert_eq!(p.partial_cmp(&0.0), xi.partial_cmp(&0.0));
        }

        #[test]
        fn returns_translation_invariant(v in prop::collection::vec(-10.0f64..10.0, 12..60), c in -100.0f64..100.0) {
            let a = returns(&series(v.clone(), 0.5), 1.0).unwrap();
            let b = returns(&series(v.iter().map(|x| x + c).collect(), 0.5), 1.0).unwrap();
            for (x, y) in a.values.iter().zip(&b.values) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }

        #[test]
        fn returns_telescope(v in prop::collection::vec(-10.0f64..10.0, 12..60), k in 1usize..4) {
            let r = returns(&series(v.clone(), 0.5), k as f64 * 0.5).unwrap();
            let mut sum = 0.0;
            let mut i = 0;
            while i < r.len() {
                sum += r.values[i];
                i += k;
            }
            prop_assert!((sum - (v[i] - v[0])).abs() <= 1e-9);
        }
    }
}
