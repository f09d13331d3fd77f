use herdlab_core::model::ThreeStateParams;
use herdlab_core::oracle::{mood_atoms, stationary_three_state, StateSpace};
use herdlab_core::sde::{integrate_sde, IntegratorConfig, SdeModel};
use herdlab_core::stats::ks_sample_vs_atoms;

#[test]
fn transformed_sde_mood_matches_exact_chain() {
    let p = ThreeStateParams {
        eps_cf: 3.0,
        eps_fc: 3.0,
        eps_cc: 3.0,
        big_h: 100.0,
        h1: 1.0,
        alpha: 0.0,
        r0: 1.0,
        n: 100,
    };
    let atoms = mood_atoms(
        &stationary_three_state(&p).unwrap(),
        StateSpace::Simplex { n: 100 },
    );
    let m = SdeModel::ThreeStateTransformed(p);
    let cfg = IntegratorConfig::for_model(&m, 0.01);
    let traj = integrate_sde(&m, &[0.5, 0.0], 200.0, &cfg, 2).unwrap();
    let ks = ks_sample_vs_atoms(&traj.without_burn_in(0.01).column(1), &atoms);
    assert!(ks < 0.06, "ks {ks}");
}
