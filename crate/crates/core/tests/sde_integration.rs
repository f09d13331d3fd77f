use herdlab_core::sde::{
    integrate_sde, integrate_with, Boundary, IntegratorConfig, Observer, SdeModel, StepInfo,
};
use herdlab_core::spectral::{fit_powerlaw, LogHistogram};
use herdlab_core::stats::{mean, variance};

fn brownian() -> SdeModel {
    SdeModel::GeneralClass {
        eta: 0.0,
        lambda: 0.0,
    }
}

#[test]
fn zero_exponents_give_brownian_variance() {
    let m = brownian();
    let mut cfg = IntegratorConfig::for_model(&m, 1.0);
    cfg.boundaries = vec![Boundary::reflecting(1.0, 1e6, 1e-3)];
    let ends: Vec<f64> = (0..4000)
        .map(|seed| {
            let t = integrate_sde(&m, &[1e4], 1.0, &cfg, seed).unwrap();
            t.row(t.len() - 1)[0]
        })
        .collect();
    assert!((mean(&ends) - 1e4).abs() < 0.1);
    let v = variance(&ends);
    assert!((v - 1.0).abs() < 0.05, "variance {v}");
}

struct Occupation(LogHistogram);

impl Observer for Occupation {
    fn step(&mut self, s: &StepInfo) {
        self.0.add(s.x[0], s.dt);
    }
}

#[test]
fn general_class_has_power_law_density() {
    let m = SdeModel::GeneralClass {
        eta: 2.5,
        lambda: 4.0,
    };
    let mut cfg = IntegratorConfig::for_model(&m, 1.0);
    cfg.boundaries = vec![Boundary::reflecting(1.0, 1e3, 1e-3).with_rel_scale(0.1)];
    cfg.max_dt = 1e-2;
    let mut occ = Occupation(LogHistogram::new(1.0, 1e3, 10).unwrap());
    integrate_with(&m, &[2.0], 2e4, &cfg, 5, &mut occ).unwrap();
    let fit = fit_powerlaw(&occ.0.to_pdf().points(), (2.0, 200.0)).unwrap();
    assert!((fit.exponent - 4.0).abs() < 0.2, "lambda {}", fit.exponent);
}

#[test]
fn y_equation_without_feedback_matches_beta_law() {
    // x = y/(1+y) is Beta(ε₁, ε₂) distributed when α = 0
    let m = SdeModel::TwoStateFull {
        eps1: 2.0,
        eps2: 3.0,
        alpha: 0.0,
    };
    let cfg = IntegratorConfig::for_model(&m, 0.05);
    let t = integrate_sde(&m, &[1.0], 2000.0, &cfg, 9).unwrap();
    let x: Vec<f64> = t
        .without_burn_in(0.01)
        .column(0)
        .iter()
        .map(|y| y / (1.0 + y))
        .collect();
    assert!((mean(&x) - 0.4).abs() < 0.02, "mean {}", mean(&x));
    assert!(
        (variance(&x) - 0.04).abs() < 0.005,
        "variance {}",
        variance(&x)
    );
}
